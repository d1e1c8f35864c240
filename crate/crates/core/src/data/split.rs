use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::Batch;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedSample<S> {
    /// Core features followed by bias features.
    pub x: Vec<S>,
    pub y: usize,
    pub b: usize,
    pub aligned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SplitRole {
    Train,
    Test,
}

impl SplitRole {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Test => "test",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitRole::Train),
            "test" => Ok(SplitRole::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// The class to be forgotten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForgetSpec {
    class: usize,
}

impl ForgetSpec {
    pub fn new(class: usize, num_classes: usize) -> Result<Self> {
        if class >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "forget class {class} out of range for {num_classes} classes"
            )));
        }
        Ok(Self { class })
    }

    pub fn class(&self) -> usize {
        self.class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SliceKind {
    /// Every sample of the forget class.
    ForgetAll,
    /// Forget-class samples whose bias attribute agrees with the class.
    ForgetAligned,
    /// Forget-class samples whose bias attribute disagrees with the class.
    ForgetConflicting,
    /// Samples of every other class.
    Retain,
}

impl SliceKind {
    fn keeps<S>(self, s: &BiasedSample<S>, class: usize) -> bool {
        match self {
            SliceKind::ForgetAll => s.y == class,
            SliceKind::ForgetAligned => s.y == class && s.aligned,
            SliceKind::ForgetConflicting => s.y == class && !s.aligned,
            SliceKind::Retain => s.y != class,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<S> {
    samples: Vec<BiasedSample<S>>,
    role: SplitRole,
    num_classes: usize,
    core_dim: usize,
    bias_dim: usize,
}

impl<S: Scalar> DatasetSplit<S> {
    pub fn new(
        samples: Vec<BiasedSample<S>>,
        role: SplitRole,
        num_classes: usize,
        core_dim: usize,
        bias_dim: usize,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument("need at least 2 classes".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != core_dim + bias_dim {
                return Err(Error::DimensionMismatch {
                    what: "sample features",
                    expected: core_dim + bias_dim,
                    got: s.x.len(),
                });
            }
            if s.y >= num_classes || s.b >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "sample {i}: label {} / bias {} out of range for {num_classes} classes",
                    s.y, s.b
                )));
            }
            if s.aligned != (s.y == s.b) {
                return Err(Error::InvalidArgument(format!(
                    "sample {i}: aligned flag disagrees with y == b"
                )));
            }
        }
        Ok(Self {
            samples,
            role,
            num_classes,
            core_dim,
            bias_dim,
        })
    }

    pub fn samples(&self) -> &[BiasedSample<S>] {
        &self.samples
    }

    pub fn role(&self) -> SplitRole {
        self.role
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn core_dim(&self) -> usize {
        self.core_dim
    }

    pub fn bias_dim(&self) -> usize {
        self.bias_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.core_dim + self.bias_dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Indices (into this split) of the samples a slice keeps, ascending.
    pub fn slice_indices(&self, forget: ForgetSpec, which: SliceKind) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| which.keeps(s, forget.class()))
            .map(|(i, _)| i)
            .collect()
    }

    /// Order-preserving filtered copy.
    pub fn slice(&self, forget: ForgetSpec, which: SliceKind) -> Self {
        self.select(&self.slice_indices(forget, which))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            ..self.empty_like()
        }
    }

    pub fn empty_like(&self) -> Self {
        Self {
            samples: Vec::new(),
            role: self.role,
            num_classes: self.num_classes,
            core_dim: self.core_dim,
            bias_dim: self.bias_dim,
        }
    }

    /// Keeps the samples for which `keep` holds.
    pub fn filter(&self, keep: impl Fn(&BiasedSample<S>) -> bool) -> Self {
        Self {
            samples: self.samples.iter().filter(|s| keep(s)).cloned().collect(),
            ..self.empty_like()
        }
    }

    /// Same samples with labels replaced.
    pub fn relabeled(&self, labels: &[usize]) -> Result<Self> {
        if labels.len() != self.samples.len() {
            return Err(Error::DimensionMismatch {
                what: "relabel vector",
                expected: self.samples.len(),
                got: labels.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(labels)
            .map(|(s, &y)| BiasedSample {
                x: s.x.clone(),
                y,
                b: s.b,
                aligned: s.b == y,
            })
            .collect();
        Self::new(
            samples,
            self.role,
            self.num_classes,
            self.core_dim,
            self.bias_dim,
        )
    }

    pub fn batch(&self) -> Result<Batch<'_, S>> {
        Batch::new(
            self.samples.iter().map(|s| s.x.as_slice()).collect(),
            self.samples.iter().map(|s| s.y).collect(),
        )
    }

    pub fn batch_of(&self, indices: &[usize]) -> Result<Batch<'_, S>> {
        Batch::new(
            indices
                .iter()
                .map(|&i| self.samples[i].x.as_slice())
                .collect(),
            indices.iter().map(|&i| self.samples[i].y).collect(),
        )
    }

    pub fn aligned_flags(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.aligned).collect()
    }
}
