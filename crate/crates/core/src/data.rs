//! Sample containers and class weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` samples of dimension `d`, stored row-major, drawn from one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Vec<f64>,
    n: usize,
    d: usize,
    label: i64,
}

impl SampleMatrix {
    /// Builds a matrix from row-major data. Requires `n, d >= 1` and finite entries.
    pub fn new(data: Vec<f64>, d: usize, label: i64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("sample dimension must be at least 1"));
        }
        if data.is_empty() || data.len() % d != 0 {
            return Err(Error::invalid(format!(
                "sample buffer of length {} does not hold a positive number of rows of dimension {d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite entry at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        let n = data.len() / d;
        Ok(Self { data, n, d, label })
    }

    pub fn from_rows(rows: &[Vec<f64>], label: i64) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::invalid(format!("row {i} has {} columns, expected {d}", r.len())));
        }
        Self::new(rows.concat(), d, label)
    }

    /// One-dimensional samples.
    pub fn from_column(values: &[f64], label: i64) -> Result<Self> {
        Self::new(values.to_vec(), 1, label)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn label(&self) -> i64 {
        self.label
    }

    pub fn with_label(mut self, label: i64) -> Self {
        self.label = label;
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn rows_mut(&mut self) -> impl ExactSizeIterator<Item = &mut [f64]> {
        self.data.chunks_exact_mut(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Projection of every sample onto `direction` (length `d`).
    pub fn project(&self, direction: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().zip(direction).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Rows `range` as a new matrix with the same label.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Result<Self> {
        Self::new(self.data[range.start * self.d..range.end * self.d].to_vec(), self.d, self.label)
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self::new(data, self.d, self.label)
    }
}

/// `k >= 2` classes with a common dimension, ordered by ascending label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    classes: Vec<SampleMatrix>,
}

impl LabeledDataset {
    pub fn new(mut classes: Vec<SampleMatrix>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(Error::invalid(format!(
                "a dataset needs at least 2 classes, got {}",
                classes.len()
            )));
        }
        let d = classes[0].d();
        for c in &classes {
            if c.d() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.d() });
            }
        }
        classes.sort_by_key(SampleMatrix::label);
        if classes.windows(2).any(|w| w[0].label() == w[1].label()) {
            return Err(Error::invalid("duplicate class label"));
        }
        Ok(Self { classes })
    }

    pub fn k(&self) -> usize {
        self.classes.len()
    }

    pub fn d(&self) -> usize {
        self.classes[0].d()
    }

    pub fn classes(&self) -> &[SampleMatrix] {
        &self.classes
    }

    pub fn class(&self, j: usize) -> &SampleMatrix {
        &self.classes[j]
    }

    pub fn labels(&self) -> Vec<i64> {
        self.classes.iter().map(SampleMatrix::label).collect()
    }

    pub fn into_classes(self) -> Vec<SampleMatrix> {
        self.classes
    }

    /// Splits every class into its first `n_first` rows and the rest.
    pub fn split(&self, n_first: usize) -> Result<(Self, Self)> {
        let mut a = Vec::with_capacity(self.k());
        let mut b = Vec::with_capacity(self.k());
        for c in &self.classes {
            if n_first == 0 || n_first >= c.n() {
                return Err(Error::invalid(format!(
                    "cannot split class {} with {} rows at {n_first}",
                    c.label(),
                    c.n()
                )));
            }
            a.push(c.slice_rows(0..n_first)?);
            b.push(c.slice_rows(n_first..c.n())?);
        }
        Ok((Self::new(a)?, Self::new(b)?))
    }
}

/// Non-negative class weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub const SUM_TOLERANCE: f64 = 1e-12;

    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::invalid("weight vector is empty"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let s: f64 = w.iter().sum();
        if (s - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {s}, expected 1")));
        }
        Ok(Self(w))
    }

    /// Rescales non-negative values to sum to one.
    pub fn normalized(w: Vec<f64>) -> Result<Self> {
        let s: f64 = w.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::invalid("weights must have a positive finite sum"));
        }
        Self::new(w.into_iter().map(|v| v / s).collect())
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, j: usize) -> f64 {
        self.0[j]
    }

    pub(crate) fn check_len(&self, k: usize) -> Result<()> {
        if self.len() != k {
            return Err(Error::invalid(format!("{} weights for {k} classes", self.len())));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(SampleMatrix::new(vec![1.0, f64::NAN], 2, 0).is_err());
        assert!(SampleMatrix::new(vec![1.0, 2.0, 3.0], 2, 0).is_err());
        assert!(SampleMatrix::new(vec![], 2, 0).is_err());
        assert!(SampleMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]], 0).is_err());
    }

    #[test]
    fn dataset_orders_by_label_and_checks_dims() {
        let a = SampleMatrix::from_column(&[1.0], 5).unwrap();
        let b = SampleMatrix::from_column(&[2.0], 1).unwrap();
        let ds = LabeledDataset::new(vec![a, b]).unwrap();
        assert_eq!(ds.labels(), vec![1, 5]);
        let c = SampleMatrix::new(vec![0.0, 0.0], 2, 9).unwrap();
        assert!(matches!(
            LabeledDataset::new(vec![ds.class(0).clone(), c]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(LabeledDataset::new(vec![ds.class(0).clone()]).is_err());
    }

    #[test]
    fn weights_validate_sum() {
        assert!(WeightVector::new(vec![0.5, 0.5]).is_ok());
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
        assert!(WeightVector::new(vec![-0.5, 1.5]).is_err());
        let w = WeightVector::normalized(vec![1.0, 3.0]).unwrap();
        assert_eq!(w.as_slice(), &[0.25, 0.75]);
        let u = WeightVector::uniform(3);
        assert!((u.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
