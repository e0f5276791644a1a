use baryflow::nb::{
    find_mswd_frame, fit_nb_layer, mswd_gradient, mswd_objective, mswd_objective_raw, FrameSource, MswdConfig, NbConfig,
    OrthoFrame,
};
use baryflow::univariate::{barycenter_quantile, fit_univariate_density, monge_1d, DensityConfig};
use baryflow::{InvertibleMap, LabeledDataset, SampleMatrix, WeightVector};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian_class(n: usize, d: usize, shift: &[f64], seed: u64, label: i64) -> SampleMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> =
        (0..n).map(|_| (0..d).map(|a| shift.get(a).copied().unwrap_or(0.0) + r.sample::<f64, _>(StandardNormal)).collect()).collect();
    SampleMatrix::from_rows(&rows, label).unwrap()
}

fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut worst) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        worst = worst.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    worst
}

#[test]
fn separated_axis_is_found() {
    let ds = LabeledDataset::new(vec![
        gaussian_class(400, 2, &[-2.0, 0.0], 1, 0),
        gaussian_class(400, 2, &[2.0, 0.0], 2, 1),
    ])
    .unwrap();
    let w = WeightVector::uniform(2);
    let frame = find_mswd_frame(&ds, &w, 1, &MswdConfig::default(), 3).unwrap();
    let q = frame.column(0);
    assert!(q[0].abs() > 0.99, "{q:?}");
    // grid search over angles as an oracle for the maximiser
    let best = (0..360)
        .map(|i| {
            let t = i as f64 * std::f64::consts::PI / 360.0;
            (t, mswd_objective_raw(&ds, &DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]), &w, 2.0).unwrap())
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let found = mswd_objective(&ds, &frame, &w, 2.0).unwrap();
    assert!(found >= best.1 * (1.0 - 1e-3), "{found} vs grid {}", best.1);
}

#[test]
fn identical_classes_zero_objective_and_gradient() {
    let x = gaussian_class(50, 3, &[], 4, 0);
    let ds = LabeledDataset::new(vec![x.clone(), x.with_label(1)]).unwrap();
    let w = WeightVector::uniform(2);
    let frame = find_mswd_frame(&ds, &w, 2, &MswdConfig::default(), 5).unwrap();
    assert!(frame.orthonormality_error() < 1e-10);
    assert_eq!(mswd_objective(&ds, &frame, &w, 2.0).unwrap(), 0.0);
    assert_eq!(mswd_gradient(&ds, frame.matrix(), &w, 2.0).unwrap().norm(), 0.0);
}

#[test]
fn gradient_points_uphill() {
    let ds = LabeledDataset::new(vec![
        gaussian_class(60, 3, &[1.0, 0.0, -0.5], 6, 0),
        gaussian_class(60, 3, &[0.0, 0.5, 0.0], 7, 1),
    ])
    .unwrap();
    let w = WeightVector::new(vec![0.4, 0.6]).unwrap();
    let q = DMatrix::from_column_slice(3, 2, &[0.6, 0.8, 0.0, 0.0, 0.0, 1.0]);
    let g = mswd_gradient(&ds, &q, &w, 2.0).unwrap();
    let base = mswd_objective_raw(&ds, &q, &w, 2.0).unwrap();
    let step = 1e-6 / g.norm();
    let up = mswd_objective_raw(&ds, &(&q + &g * step), &w, 2.0).unwrap();
    assert!(up > base);
    let slope = (up - base) / step;
    assert!((slope - g.norm_squared()).abs() < 1e-3 * g.norm_squared());
}

#[test]
fn square_frame_is_orthogonal() {
    let ds = LabeledDataset::new(vec![gaussian_class(80, 4, &[1.0], 8, 0), gaussian_class(80, 4, &[0.0, 1.0], 9, 1)]).unwrap();
    let frame = find_mswd_frame(&ds, &WeightVector::uniform(2), 4, &MswdConfig::default(), 10).unwrap();
    let q = frame.matrix();
    assert!((q * q.transpose() - DMatrix::<f64>::identity(4, 4)).norm() < 1e-10);
}

#[test]
fn one_dimensional_layer_is_monge_1d() {
    let a = gaussian_class(300, 1, &[0.0], 11, 0);
    let b = gaussian_class(200, 1, &[3.0], 12, 1);
    let ds = LabeledDataset::new(vec![a.clone(), b.clone()]).unwrap();
    let w = WeightVector::new(vec![0.3, 0.7]).unwrap();
    let cfg = NbConfig { frame: FrameSource::Identity, ..NbConfig::default() };
    let layer = fit_nb_layer(&ds, &w, &cfg, 0, 0).unwrap();
    let dens: Vec<_> =
        [&a, &b].iter().map(|c| fit_univariate_density(&c.column(0), &DensityConfig::default()).unwrap()).collect();
    let bary = barycenter_quantile(&dens, &w).unwrap();
    for (j, d) in dens.iter().enumerate() {
        let map = monge_1d(d.clone(), bary.clone());
        for x in [-2.0, 0.0, 0.7, 3.0, 5.5] {
            assert!((layer.class_map(j).forward(&[x])[0] - map.forward(x)).abs() < 1e-12);
        }
    }
}

#[test]
fn orthogonal_complement_is_untouched() {
    let ds = LabeledDataset::new(vec![
        gaussian_class(300, 3, &[1.0, -1.0, 0.5], 13, 0),
        gaussian_class(300, 3, &[-1.0, 0.0, 2.0], 14, 1),
    ])
    .unwrap();
    let cfg = NbConfig { m: Some(1), ..NbConfig::default() };
    let layer = fit_nb_layer(&ds, &WeightVector::uniform(2), &cfg, 15, 0).unwrap();
    let q = layer.frame.matrix().clone();
    let proj = DMatrix::<f64>::identity(3, 3) - &q * q.transpose();
    for x in [[0.1, 0.2, 0.3], [-2.0, 1.5, 4.0], [3.0, -3.0, 0.0]] {
        let z = layer.class_map(0).forward(&x);
        let diff = nalgebra::DVector::from_iterator(3, z.iter().zip(&x).map(|(a, b)| a - b));
        assert!((&proj * diff).norm() < 1e-12);
    }
}

#[test]
fn identical_classes_give_identity_layer() {
    let x = gaussian_class(200, 2, &[], 16, 0);
    let ds = LabeledDataset::new(vec![x.clone(), x.clone().with_label(1)]).unwrap();
    for frame in [FrameSource::Mswd, FrameSource::Random, FrameSource::Identity] {
        let layer = fit_nb_layer(&ds, &WeightVector::uniform(2), &NbConfig { frame, ..NbConfig::default() }, 1, 0).unwrap();
        assert!(layer.is_identity());
        for r in x.rows() {
            assert!(layer.class_map(1).forward(r).iter().zip(r).all(|(a, b)| (a - b).abs() < 1e-8));
        }
    }
}

#[test]
fn full_frame_pushforward_aligns_marginals() {
    let n = 10_000;
    let ds = LabeledDataset::new(vec![
        gaussian_class(n, 2, &[0.0, 0.0], 17, 0),
        gaussian_class(n, 2, &[3.0, -1.0], 18, 1),
    ])
    .unwrap();
    let layer = fit_nb_layer(&ds, &WeightVector::uniform(2), &NbConfig::default(), 19, 0).unwrap();
    let pushed: Vec<SampleMatrix> = (0..2)
        .map(|j| {
            let rows: Vec<Vec<f64>> = ds.class(j).rows().map(|r| layer.class_map(j).forward(r)).collect();
            SampleMatrix::from_rows(&rows, j as i64).unwrap()
        })
        .collect();
    for l in 0..2 {
        let q = layer.frame.column(l);
        let stat = ks_two_sample(&pushed[0].project(&q), &pushed[1].project(&q));
        assert!(stat < 0.05, "direction {l}: KS {stat}");
    }
}

#[test]
fn frame_validation() {
    assert!(OrthoFrame::new(DMatrix::from_column_slice(2, 1, &[1.0, 1.0])).is_err());
    assert!(OrthoFrame::identity(2, 3).is_err());
    let ds = LabeledDataset::new(vec![gaussian_class(10, 2, &[], 1, 0), gaussian_class(10, 2, &[1.0], 2, 1)]).unwrap();
    assert!(fit_nb_layer(&ds, &WeightVector::uniform(2), &NbConfig { m: Some(3), ..NbConfig::default() }, 0, 0).is_err());
}
