//! Datasets, folds and synthetic generators.
//!
//! A [`Dataset`] couples a numeric feature matrix with a real-valued target
//! and a dense-coded sensitive attribute in `{0, .., k-1}`. Loading from CSV
//! lives in [`csv_load`], synthetic two-Gaussian scenarios in [`scenario`].

mod csv_load;
mod scenario;

pub use csv_load::{load_csv, CsvLoad, CsvSchema};
pub use scenario::{
    sample_scenario, scenario_grid, scenario_regression_dataset, Scenario,
};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Feature matrix, regression target and sensitive attribute for `n` rows.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// `n x p` feature matrix.
    pub features: DMatrix<f64>,
    /// Regression target, length `n`.
    pub target: DVector<f64>,
    /// Sensitive class per row, values in `0..k`.
    pub sensitive: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Number of sensitive classes.
    pub k: usize,
}

impl Dataset {
    /// Validates lengths, finiteness and that classes `0..k` are dense with
    /// `k >= 2` and every class present.
    pub fn new(
        features: DMatrix<f64>,
        target: DVector<f64>,
        sensitive: Vec<usize>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if target.len() != n {
            return Err(Error::LengthMismatch { context: "target vs features", expected: n, got: target.len() });
        }
        if sensitive.len() != n {
            return Err(Error::LengthMismatch { context: "sensitive vs features", expected: n, got: sensitive.len() });
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::LengthMismatch {
                context: "feature_names vs columns",
                expected: features.ncols(),
                got: feature_names.len(),
            });
        }
        if n == 0 {
            return Err(Error::NoRows);
        }
        if features.iter().any(|v| !v.is_finite()) || target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        let k = sensitive.iter().copied().max().map_or(0, |m| m + 1);
        if k < 2 {
            return Err(Error::TooFewClasses(k));
        }
        let mut counts = vec![0usize; k];
        for &a in &sensitive {
            counts[a] += 1;
        }
        if let Some(empty) = counts.iter().position(|&c| c == 0) {
            return Err(Error::EmptyClass(empty));
        }
        Ok(Dataset { features, target, sensitive, feature_names, k })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    /// Row subset in the given index order. Keeps the parent's class count
    /// `k`; a subset may leave some class temporarily empty (fold splits),
    /// which downstream class-conditional code reports explicitly.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let features = DMatrix::from_fn(idx.len(), self.p(), |r, c| self.features[(idx[r], c)]);
        let target = DVector::from_fn(idx.len(), |r, _| self.target[idx[r]]);
        let sensitive = idx.iter().map(|&i| self.sensitive[i]).collect();
        Dataset {
            features,
            target,
            sensitive,
            feature_names: self.feature_names.clone(),
            k: self.k,
        }
    }

    /// Per-class row counts, length `k`.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &a in &self.sensitive {
            counts[a] += 1;
        }
        counts
    }
}

/// Column-wise affine transform to zero mean and unit variance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fits means and sample standard deviations per column. Columns with
    /// (near-)zero spread get scale 1 so the transform stays defined.
    pub fn fit(x: &DMatrix<f64>) -> Standardizer {
        let n = x.nrows().max(1);
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for c in 0..x.ncols() {
            let col = x.column(c);
            let m = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
            let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            means.push(m);
            stds.push(if sd < 1e-12 { 1.0 } else { sd });
        }
        Standardizer { means, stds }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                out[(r, c)] = (out[(r, c)] - self.means[c]) / self.stds[c];
            }
        }
        out
    }

    pub fn fit_transform(x: &DMatrix<f64>) -> (Standardizer, DMatrix<f64>) {
        let s = Standardizer::fit(x);
        let t = s.transform(x);
        (s, t)
    }
}

/// Assignment of each row to one of `n_folds` cross-validation folds.
#[derive(Debug, Clone)]
pub struct FoldAssignment {
    /// `fold_of[i]` is the fold of row `i`.
    pub fold_of: Vec<usize>,
    pub n_folds: usize,
}

impl FoldAssignment {
    /// Row indices of the training and test split for one fold.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        assert!(fold < self.n_folds, "fold {fold} out of range");
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, &f) in self.fold_of.iter().enumerate() {
            if f == fold {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.n_folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Random fold assignment: rows are shuffled with a seeded generator and cut
/// into `n_folds` consecutive blocks whose sizes differ by at most one.
pub fn kfold(n: usize, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    if n_folds < 2 || n_folds > n {
        return Err(Error::BadFoldCount { folds: n_folds, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    let base = n / n_folds;
    let extra = n % n_folds;
    let mut fold_of = vec![0usize; n];
    let mut pos = 0;
    for fold in 0..n_folds {
        let size = base + usize::from(fold < extra);
        for &row in &order[pos..pos + size] {
            fold_of[row] = fold;
        }
        pos += size;
    }
    Ok(FoldAssignment { fold_of, n_folds })
}

const SUBSAMPLE_RETRIES: usize = 100;

/// Draws `m` rows without replacement such that every sensitive class
/// remains represented, retrying a bounded number of times.
pub fn subsample(ds: &Dataset, m: usize, seed: u64) -> Result<Dataset> {
    let n = ds.n();
    if m > n || m < ds.k {
        return Err(Error::SubsampleImpossible { m, n, k: ds.k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..SUBSAMPLE_RETRIES {
        let idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
        let mut seen = vec![false; ds.k];
        for &i in &idx {
            seen[ds.sensitive[i]] = true;
        }
        if seen.iter().all(|&s| s) {
            return Ok(ds.subset(&idx));
        }
    }
    Err(Error::SubsampleImpossible { m, n, k: ds.k })
}
