use baryflow::gaussian::{gaussian_barycenter, gaussian_monge_map, GaussianConfig, GaussianParams};
use baryflow::nb::{FrameSource, NbConfig};
use baryflow::tree::TreeConfig;
use baryflow::univariate::{
    barycenter_quantile, fit_univariate_density, histogram_barycenter, monge_1d, normal_cdf, normal_quantile,
    DensityConfig, Histogram1D,
};
use baryflow::{fit_flow, LabeledDataset, LayerConfig, SampleMatrix, WeightVector};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn samples(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0..50.0f64, n)
}

fn weights(k: usize) -> impl Strategy<Value = WeightVector> {
    prop::collection::vec(0.05..1.0f64, k).prop_map(|w| WeightVector::normalized(w).unwrap())
}

fn histogram() -> impl Strategy<Value = Histogram1D> {
    (-5.0..5.0f64, prop::collection::vec((0.01..2.0f64, 0.01..1.0f64), 1..6)).prop_map(|(start, bins)| {
        let mut edges = vec![start];
        for (width, _) in &bins {
            edges.push(edges.last().unwrap() + width);
        }
        let masses: Vec<f64> = bins.iter().map(|b| b.1).collect();
        Histogram1D::from_masses(edges, &masses).unwrap()
    })
}

fn spd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
        let a = DMatrix::from_vec(d, d, v);
        &a * a.transpose() + DMatrix::identity(d, d) * 0.2
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn normal_cdf_round_trip(x in -30.0..30.0f64) {
        prop_assert!((normal_quantile(normal_cdf(x)) - x).abs() < 1e-9 * x.abs().max(1.0));
    }

    #[test]
    fn monge_1d_is_monotone_and_invertible(a in samples(2..60), b in samples(2..60), w in weights(2)) {
        let cfg = DensityConfig::default();
        let da = fit_univariate_density(&a, &cfg).unwrap();
        let db = fit_univariate_density(&b, &cfg).unwrap();
        let bary = barycenter_quantile(&[da.clone(), db], &w).unwrap();
        let (mean, sd) = (da.pre_mean, da.pre_std);
        let map = monge_1d(da, bary);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let x = mean + sd * (-4.0 + 8.0 * i as f64 / 199.0);
            let z = map.forward(x);
            prop_assert!(z > prev);
            prev = z;
            prop_assert!((map.inverse(z) - x).abs() < 1e-6 * sd.max(1.0));
        }
    }

    #[test]
    fn histogram_barycenter_is_a_bounded_histogram(hs in prop::collection::vec(histogram(), 2..4), seed in 0.05..1.0f64) {
        let k = hs.len();
        let w = WeightVector::normalized((0..k).map(|j| seed + j as f64).collect()).unwrap();
        let bary = histogram_barycenter(&hs, &w).unwrap();
        let bound: usize = hs.iter().map(|h| h.edges().len()).sum();
        prop_assert!(bary.edges().len() <= bound);
        prop_assert!((bary.total_mass() - 1.0).abs() < 1e-12);
        let q = barycenter_quantile(&hs, &w).unwrap();
        for i in 1..50 {
            let u = i as f64 / 50.0;
            prop_assert!((bary.quantile(u) - q.eval(u)).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_map_hits_barycenter(c1 in spd(3), c2 in spd(3), w in weights(2)) {
        let params = vec![
            GaussianParams::new(DVector::zeros(3), c1).unwrap(),
            GaussianParams::new(DVector::from_element(3, 1.0), c2).unwrap(),
        ];
        let bary = gaussian_barycenter(&params, &w, 1e-12, 500).unwrap();
        for p in &params {
            let a = gaussian_monge_map(p, &bary).unwrap();
            let m = a.matrix();
            prop_assert!((m - m.transpose()).norm() < 1e-10);
            prop_assert!((m * &p.cov * m - &bary.cov).norm() / bary.cov.norm() < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fitted_flows_round_trip(
        a in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 20..60),
        b in prop::collection::vec((-1.0..5.0f64, -2.0..2.0f64), 20..60),
        seed in 0u64..1000,
    ) {
        let rows = |v: &[(f64, f64)]| v.iter().map(|&(x, y)| vec![x, y]).collect::<Vec<_>>();
        let ds = LabeledDataset::new(vec![
            SampleMatrix::from_rows(&rows(&a), 0).unwrap(),
            SampleMatrix::from_rows(&rows(&b), 1).unwrap(),
        ])
        .unwrap();
        let schedule = [
            LayerConfig::Gaussian(GaussianConfig::default()),
            LayerConfig::Nb(NbConfig::default()),
            LayerConfig::Nb(NbConfig { frame: FrameSource::Random, m: Some(1), ..NbConfig::default() }),
            LayerConfig::Tree(TreeConfig::default()),
        ];
        let model = fit_flow(&ds, &WeightVector::uniform(2), &schedule, seed).unwrap();
        for (j, c) in ds.classes().iter().enumerate() {
            let back = model.inverse_transform(j, &model.transform(j, c).unwrap()).unwrap();
            let err = back.as_slice().iter().zip(c.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-6, "class {} error {}", j, err);
        }
    }
}
