#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRecord {
    /// Epoch (training) or step (unlearning), starting at 1.
    pub step: usize,
    pub subset: String,
    pub loss: f64,
    /// Percentage.
    pub accuracy: f64,
}

/// Per-epoch or per-step loss/accuracy traces for named subsets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DynamicsLog {
    records: Vec<DynamicsRecord>,
}

impl DynamicsLog {
    pub fn push(&mut self, step: usize, subset: &str, loss: f64, accuracy: f64) {
        debug_assert!(self
            .records
            .iter()
            .rev()
            .find(|r| r.subset == subset)
            .is_none_or(|r| r.step < step));
        self.records.push(DynamicsRecord {
            step,
            subset: subset.to_string(),
            loss,
            accuracy,
        });
    }

    pub fn records(&self) -> &[DynamicsRecord] {
        &self.records
    }

    pub fn series<'a>(&'a self, subset: &'a str) -> impl Iterator<Item = &'a DynamicsRecord> + 'a {
        self.records.iter().filter(move |r| r.subset == subset)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,subset,loss,accuracy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{:.17e},{:.17e}\n",
                r.step, r.subset, r.loss, r.accuracy
            ));
        }
        out
    }
}
