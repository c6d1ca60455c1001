//! Datasets: a sample matrix, optional [0,1] scaling metadata and named,
//! contiguous splits.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed;

pub const TRAIN: &str = "train";
pub const VALIDATION: &str = "validation";
pub const TEST: &str = "test";

/// Per-feature min/max of the unscaled data.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scaling {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
}

impl Scaling {
    pub fn apply(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for row in out.as_mut_slice().chunks_exact_mut(data.cols().max(1)) {
            for ((v, &lo), &hi) in row.iter_mut().zip(&self.feature_min).zip(&self.feature_max) {
                *v = (*v - lo) / (hi - lo);
            }
        }
        Ok(out)
    }

    pub fn unscale(&self, data: &Matrix) -> Result<Matrix> {
        self.check(data)?;
        let mut out = data.clone();
        for row in out.as_mut_slice().chunks_exact_mut(data.cols().max(1)) {
            for ((v, &lo), &hi) in row.iter_mut().zip(&self.feature_min).zip(&self.feature_max) {
                *v = *v * (hi - lo) + lo;
            }
        }
        Ok(out)
    }

    fn check(&self, data: &Matrix) -> Result<()> {
        if data.cols() != self.feature_min.len() {
            return Err(Error::dim("scaling features", self.feature_min.len(), data.cols()));
        }
        Ok(())
    }
}

/// Maps every column affinely onto [0,1] using its own min and max.
pub fn scale_01(data: &Matrix) -> Result<(Matrix, Scaling)> {
    let cols = data.cols();
    let mut lo = alloc::vec![f64::INFINITY; cols];
    let mut hi = alloc::vec![f64::NEG_INFINITY; cols];
    for row in data.row_iter() {
        for j in 0..cols {
            lo[j] = lo[j].min(row[j]);
            hi[j] = hi[j].max(row[j]);
        }
    }
    for j in 0..cols {
        if !(hi[j] > lo[j]) {
            return Err(Error::Degenerate(format!(
                "feature column {j} is constant (min = max = {})",
                lo[j]
            )));
        }
    }
    let scaling = Scaling {
        feature_min: lo,
        feature_max: hi,
    };
    let scaled = scaling.apply(data)?;
    Ok((scaled, scaling))
}

/// A named half-open row range.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Split {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

impl Split {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub data: Matrix,
    pub scaling: Option<Scaling>,
    pub splits: Vec<Split>,
    pub provenance: String,
}

impl Dataset {
    /// A dataset without scaling metadata or splits.
    pub fn unsplit(data: Matrix, provenance: impl Into<String>) -> Self {
        Dataset {
            data,
            scaling: None,
            splits: Vec::new(),
            provenance: provenance.into(),
        }
    }

    pub fn n_samples(&self) -> usize {
        self.data.rows()
    }

    pub fn n_features(&self) -> usize {
        self.data.cols()
    }

    /// Replaces the splits with consecutive train/validation/test blocks of
    /// the given sizes.
    pub fn assign_splits(&mut self, train: usize, validation: usize, test: usize) -> Result<()> {
        let mut start = 0;
        let mut splits = Vec::with_capacity(3);
        for (name, len) in [(TRAIN, train), (VALIDATION, validation), (TEST, test)] {
            splits.push(Split {
                name: name.to_string(),
                start,
                end: start + len,
            });
            start += len;
        }
        let candidate = Dataset {
            splits,
            ..Dataset::unsplit(Matrix::zeros(0, 0), "")
        };
        candidate.check_splits(self.n_samples())?;
        self.splits = candidate.splits;
        Ok(())
    }

    fn check_splits(&self, n: usize) -> Result<()> {
        let mut prev_end = 0;
        for s in &self.splits {
            if s.start < prev_end || s.end < s.start {
                return Err(Error::Config(format!(
                    "split '{}' ({}..{}) overlaps or is out of order",
                    s.name, s.start, s.end
                )));
            }
            prev_end = s.end;
        }
        if prev_end > n {
            return Err(Error::Config(format!(
                "splits cover {prev_end} rows but dataset has {n}"
            )));
        }
        Ok(())
    }

    /// Checks split ordering/coverage and, when scaling metadata is present,
    /// the feature count.
    pub fn validate(&self) -> Result<()> {
        self.check_splits(self.n_samples())?;
        if let Some(s) = &self.scaling {
            if s.feature_min.len() != self.n_features() || s.feature_max.len() != self.n_features() {
                return Err(Error::dim("scaling metadata", self.n_features(), s.feature_min.len()));
            }
        }
        Ok(())
    }

    pub fn split_range(&self, name: &str) -> Result<&Split> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Config(format!("dataset has no split named '{name}'")))
    }

    pub fn split(&self, name: &str) -> Result<Matrix> {
        let s = self.split_range(name)?;
        Ok(self.data.slice_rows(s.start, s.end))
    }
}

/// A split together with a fixed permutation of its rows, fed to the twin
/// encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedDataset {
    pub primary: Matrix,
    pub shuffled: Matrix,
    /// `shuffled.row(i) == primary.row(permutation[i])`.
    pub permutation: Vec<usize>,
    pub permutation_seed: u64,
    pub provenance: String,
}

/// Permutes `split` once with a seeded Fisher–Yates shuffle.
pub fn make_shuffled_pairs(dataset: &Dataset, split: &str, seed: u64) -> Result<PairedDataset> {
    let primary = dataset.split(split)?;
    pair_rows(primary, seed, split)
}

/// Same as [`make_shuffled_pairs`] for a bare matrix.
pub fn pair_rows(primary: Matrix, seed: u64, label: &str) -> Result<PairedDataset> {
    if primary.rows() == 0 {
        return Err(Error::Config(format!("split '{label}' is empty")));
    }
    let mut permutation: Vec<usize> = (0..primary.rows()).collect();
    permutation.shuffle(&mut seed::rng(seed));
    let shuffled = primary.select_rows(&permutation);
    Ok(PairedDataset {
        provenance: format!(
            "shuffled pairs: split={label} rows={} seed={seed}",
            primary.rows()
        ),
        primary,
        shuffled,
        permutation,
        permutation_seed: seed,
    })
}
