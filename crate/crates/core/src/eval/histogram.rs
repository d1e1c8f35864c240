use crate::error::{Error, Result};

/// Fixed-width histogram of sharpness values split by true alignment.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessHistogram {
    /// `bins + 1` edges spanning `[min, max]`.
    pub edges: Vec<f64>,
    pub aligned_counts: Vec<usize>,
    pub conflicting_counts: Vec<usize>,
    pub aligned_mean: Option<f64>,
    pub conflicting_mean: Option<f64>,
    pub aligned_median: Option<f64>,
    pub conflicting_median: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Some(if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    })
}

pub fn sharpness_histogram(
    omega: &[f64],
    aligned: &[bool],
    bins: usize,
) -> Result<SharpnessHistogram> {
    if omega.is_empty() {
        return Err(Error::Empty("sharpness table"));
    }
    if omega.len() != aligned.len() {
        return Err(Error::DimensionMismatch {
            what: "alignment flags",
            expected: omega.len(),
            got: aligned.len(),
        });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs >= 1 bin".into()));
    }
    let lo = omega.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = omega.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let bin_of = |w: f64| {
        if width > 0.0 {
            (((w - lo) / width) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut aligned_counts = vec![0; bins];
    let mut conflicting_counts = vec![0; bins];
    let (mut ba, mut bc) = (Vec::new(), Vec::new());
    for (&w, &a) in omega.iter().zip(aligned) {
        if a {
            aligned_counts[bin_of(w)] += 1;
            ba.push(w);
        } else {
            conflicting_counts[bin_of(w)] += 1;
            bc.push(w);
        }
    }
    Ok(SharpnessHistogram {
        edges,
        aligned_counts,
        conflicting_counts,
        aligned_mean: mean(&ba),
        conflicting_mean: mean(&bc),
        aligned_median: median(&ba),
        conflicting_median: median(&bc),
    })
}

impl SharpnessHistogram {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,aligned,conflicting\n");
        for i in 0..self.aligned_counts.len() {
            out.push_str(&format!(
                "{:.17e},{:.17e},{},{}\n",
                self.edges[i],
                self.edges[i + 1],
                self.aligned_counts[i],
                self.conflicting_counts[i]
            ));
        }
        out
    }
}
