//! Seeded synthetic datasets and CSV I/O.
//!
//! Every class draws from its own ChaCha20 stream keyed by the seed, so a
//! spec always produces the same samples. Generators:
//!
//! - `moons`: two interleaved half circles, `(cos t, sin t)` and
//!   `(1 - cos t, 0.5 - sin t)` with `t ~ U[0, pi]`.
//! - `circles`: concentric circles of radius 1 and 0.5.
//! - `random_pattern`: per class, an equal mixture of two isotropic Gaussians
//!   whose means are drawn uniformly from `[-3, 3]^2`.
//! - `gaussians`: explicit means and covariances, one Gaussian per class.
//!
//! All kinds add isotropic Gaussian noise with standard deviation `noise`.
//!
//! CSV rows hold the `d` coordinates followed by an integer label. A first
//! row that does not parse as numbers is treated as a header.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{LabeledDataset, SampleMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Moons,
    Circles,
    RandomPattern,
    Gaussians,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moons" => Ok(Self::Moons),
            "circles" => Ok(Self::Circles),
            "random_pattern" => Ok(Self::RandomPattern),
            "gaussians" => Ok(Self::Gaussians),
            other => Err(Error::invalid(format!("unknown dataset kind `{other}`"))),
        }
    }
}

/// Parameters of one class of the `gaussians` generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub mean: Vec<f64>,
    /// Row-major covariance.
    pub cov: Vec<Vec<f64>>,
}

impl GaussianComponent {
    pub fn mean_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.mean)
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let d = self.mean.len();
        DMatrix::from_fn(d, d, |i, j| self.cov[i][j])
    }
}

/// Default 2D parameters of the three-class `gaussians` dataset.
pub fn default_gaussians() -> Vec<GaussianComponent> {
    let c = |m: [f64; 2], cov: [[f64; 2]; 2]| GaussianComponent {
        mean: m.to_vec(),
        cov: cov.iter().map(|r| r.to_vec()).collect(),
    };
    vec![
        c([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]]),
        c([4.0, 0.0], [[2.0, 0.6], [0.6, 0.5]]),
        c([1.0, 3.5], [[0.6, -0.3], [-0.3, 1.5]]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n_per_class: usize,
    pub k: usize,
    pub noise: f64,
    pub seed: u64,
    /// Standard deviation of the `random_pattern` clusters.
    pub cluster_std: f64,
    /// Class parameters for `gaussians`; defaults to [`default_gaussians`].
    pub gaussians: Option<Vec<GaussianComponent>>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n_per_class: usize) -> Self {
        let k = match kind {
            GeneratorKind::Moons | GeneratorKind::Circles => 2,
            GeneratorKind::RandomPattern => 4,
            GeneratorKind::Gaussians => 3,
        };
        let noise = match kind {
            GeneratorKind::Gaussians => 0.0,
            _ => 0.05,
        };
        Self { kind, n_per_class, k, noise, seed: 0, cluster_std: 0.5, gaussians: None }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn components(&self) -> Vec<GaussianComponent> {
        self.gaussians.clone().unwrap_or_else(default_gaussians)
    }
}

/// Per-class train and test sizes of the benchmark setups: 2000/1000 total
/// for the two-class sets, 2666/1334 for the four-class random pattern and
/// 4000/2000 for the three Gaussians, divided evenly between classes.
pub fn default_split(kind: GeneratorKind, k: usize) -> (usize, usize) {
    let (train, test) = match kind {
        GeneratorKind::Moons | GeneratorKind::Circles => (2000, 1000),
        GeneratorKind::RandomPattern => (2666, 1334),
        GeneratorKind::Gaussians => (4000, 2000),
    };
    (train / k, test / k)
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn generate(spec: &GeneratorSpec) -> Result<LabeledDataset> {
    if spec.n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    if !(spec.noise >= 0.0) || !(spec.cluster_std >= 0.0) {
        return Err(Error::invalid("noise and cluster_std must be non-negative"));
    }
    let comps = match spec.kind {
        GeneratorKind::Moons | GeneratorKind::Circles if spec.k != 2 => {
            return Err(Error::invalid(format!("{:?} data has exactly 2 classes, got k = {}", spec.kind, spec.k)));
        }
        GeneratorKind::Gaussians => {
            let comps = spec.components();
            if comps.len() != spec.k {
                return Err(Error::invalid(format!("{} Gaussian components for k = {}", comps.len(), spec.k)));
            }
            comps
        }
        _ if spec.k < 2 => return Err(Error::invalid("need at least 2 classes")),
        _ => Vec::new(),
    };
    let classes = (0..spec.k)
        .map(|j| {
            let mut rng = stream_rng(spec.seed, Stream::Dataset, j as u64);
            let n = spec.n_per_class;
            let mut rows: Vec<Vec<f64>> = match spec.kind {
                GeneratorKind::Moons => (0..n)
                    .map(|_| {
                        let t = rng.random::<f64>() * std::f64::consts::PI;
                        if j == 0 {
                            vec![t.cos(), t.sin()]
                        } else {
                            vec![1.0 - t.cos(), 0.5 - t.sin()]
                        }
                    })
                    .collect(),
                GeneratorKind::Circles => {
                    let r = if j == 0 { 1.0 } else { 0.5 };
                    (0..n)
                        .map(|_| {
                            let t = rng.random::<f64>() * std::f64::consts::TAU;
                            vec![r * t.cos(), r * t.sin()]
                        })
                        .collect()
                }
                GeneratorKind::RandomPattern => {
                    let centers: Vec<[f64; 2]> =
                        (0..2).map(|_| [rng.random_range(-3.0..=3.0), rng.random_range(-3.0..=3.0)]).collect();
                    (0..n)
                        .map(|_| {
                            let c = centers[usize::from(rng.random::<bool>())];
                            vec![c[0] + spec.cluster_std * normal(&mut rng), c[1] + spec.cluster_std * normal(&mut rng)]
                        })
                        .collect()
                }
                GeneratorKind::Gaussians => {
                    let comp = &comps[j];
                    let d = comp.mean.len();
                    if comp.cov.len() != d || comp.cov.iter().any(|r| r.len() != d) {
                        return Err(Error::invalid(format!("Gaussian component {j} has a malformed covariance")));
                    }
                    let chol = comp
                        .cov_matrix()
                        .cholesky()
                        .ok_or_else(|| Error::invalid(format!("covariance of component {j} is not positive definite")))?;
                    let l = chol.l();
                    let mean = comp.mean_vector();
                    (0..n)
                        .map(|_| {
                            let z = DVector::from_fn(d, |_, _| normal(&mut rng));
                            (&mean + &l * z).iter().copied().collect()
                        })
                        .collect()
                }
            };
            if spec.noise > 0.0 {
                for r in &mut rows {
                    for v in r.iter_mut() {
                        *v += spec.noise * normal(&mut rng);
                    }
                }
            }
            SampleMatrix::from_rows(&rows, j as i64)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(classes)
}

/// Generates `n_train + n_test` points per class and splits them.
pub fn generate_train_test(spec: &GeneratorSpec, n_train: usize, n_test: usize) -> Result<(LabeledDataset, LabeledDataset)> {
    let spec = GeneratorSpec { n_per_class: n_train + n_test, ..spec.clone() };
    generate(&spec)?.split(n_train)
}

fn csv_error(row: usize, column: Option<usize>, message: impl Into<String>) -> Error {
    Error::Csv { row, column, message: message.into() }
}

fn read_records<R: Read>(source: R) -> Result<Vec<(usize, csv::StringRecord)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let row = e.position().map_or(i + 1, |p| p.line() as usize);
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => csv_error(row, None, format!("{other:?}")),
            }
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push((line, rec));
    }
    if let Some((_, first)) = out.first() {
        if first.iter().any(|c| c.parse::<f64>().is_err()) {
            out.remove(0);
        }
    }
    Ok(out)
}

fn parse_value(cell: &str, row: usize, col: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| csv_error(row, Some(col), format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(csv_error(row, Some(col), format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn parse_label(cell: &str, row: usize, col: usize) -> Result<i64> {
    if cell.is_empty() {
        return Err(csv_error(row, Some(col), "missing label"));
    }
    if let Ok(l) = cell.parse::<i64>() {
        return Ok(l);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.fract() == 0.0 && v.abs() < 9e15 => Ok(v as i64),
        _ => Err(csv_error(row, Some(col), format!("label `{cell}` is not an integer"))),
    }
}

/// Reads labelled samples; classes come out in ascending label order.
pub fn load_csv<R: Read>(source: R) -> Result<LabeledDataset> {
    let records = read_records(source)?;
    let width = match records.first() {
        Some((_, r)) => r.len(),
        None => return Err(csv_error(1, None, "no data rows")),
    };
    if width < 2 {
        return Err(csv_error(records[0].0, None, "rows need at least one coordinate and a label"));
    }
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (row, rec) in &records {
        if rec.len() != width {
            return Err(csv_error(*row, None, format!("expected {width} fields, found {}", rec.len())));
        }
        let label = parse_label(&rec[width - 1], *row, width)?;
        let dest = groups.entry(label).or_default();
        for (c, cell) in rec.iter().take(width - 1).enumerate() {
            dest.push(parse_value(cell, *row, c + 1)?);
        }
    }
    let classes = groups
        .into_iter()
        .map(|(label, data)| SampleMatrix::new(data, width - 1, label))
        .collect::<Result<Vec<_>>>()?;
    if classes.len() < 2 {
        return Err(Error::invalid("CSV contains fewer than two labels"));
    }
    LabeledDataset::new(classes)
}

/// Reads unlabelled points (every column a coordinate).
pub fn load_points_csv<R: Read>(source: R, label: i64) -> Result<SampleMatrix> {
    let records = read_records(source)?;
    let width = match records.first() {
        Some((_, r)) => r.len(),
        None => return Err(csv_error(1, None, "no data rows")),
    };
    let mut data = Vec::with_capacity(records.len() * width);
    for (row, rec) in &records {
        if rec.len() != width {
            return Err(csv_error(*row, None, format!("expected {width} fields, found {}", rec.len())));
        }
        for (c, cell) in rec.iter().enumerate() {
            data.push(parse_value(cell, *row, c + 1)?);
        }
    }
    SampleMatrix::new(data, width, label)
}

fn header(d: usize, label: bool) -> Vec<String> {
    let mut h: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    if label {
        h.push("label".into());
    }
    h
}

fn csv_writer<W: Write>(sink: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(sink)
}

fn flush<W: Write>(w: csv::Writer<W>) -> Result<()> {
    w.into_inner().map_err(|e| Error::Io(e.into_error()))?.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("CSV write failed: {other:?}")),
    }
}

/// Writes every sample as `x0, .., x{d-1}, label`, classes in order.
pub fn write_csv<W: Write>(dataset: &LabeledDataset, sink: W, with_header: bool) -> Result<()> {
    let mut w = csv_writer(sink);
    if with_header {
        w.write_record(header(dataset.d(), true)).map_err(csv_io)?;
    }
    for c in dataset.classes() {
        let label = c.label().to_string();
        for r in c.rows() {
            let mut rec: Vec<String> = r.iter().map(f64::to_string).collect();
            rec.push(label.clone());
            w.write_record(&rec).map_err(csv_io)?;
        }
    }
    flush(w)
}

/// Writes unlabelled points.
pub fn write_points_csv<W: Write>(points: &SampleMatrix, sink: W, with_header: bool) -> Result<()> {
    let mut w = csv_writer(sink);
    if with_header {
        w.write_record(header(points.d(), false)).map_err(csv_io)?;
    }
    for r in points.rows() {
        w.write_record(r.iter().map(f64::to_string)).map_err(csv_io)?;
    }
    flush(w)
}
