//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::time::Instant;

use baryflow::datasets::{default_split, generate, generate_train_test, GeneratorKind, GeneratorSpec};
use baryflow::gaussian::{
    barycenter_residual, estimate_gaussian, gaussian_barycenter, gaussian_monge_map, GaussianConfig,
    GaussianParams,
};
use baryflow::map::sup_distance;
use baryflow::metrics::{
    gaussian_w2_squared, pairwise_flip_wd, sinkhorn, sinkhorn_wd, transportation_cost, SinkhornConfig,
};
use baryflow::nb::{
    equalize, mswd_gradient, mswd_objective_raw, optimize_mswd_frame, random_frame, FrameSource, MswdConfig,
    NbConfig,
};
use baryflow::tree::{estimate_leaf_densities, fit_tree_monge, NodeWeighting, SharedTree, TreeConfig};
use baryflow::univariate::{
    barycenter_quantile, fit_univariate_density, histogram_barycenter, monge_1d, DensityConfig, Histogram1D,
};
use baryflow::{fit_flow, FlowModel, InvertibleMap, LabeledDataset, LayerConfig, SampleMatrix, WeightVector};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    r.sample(StandardNormal)
}

fn random_spd(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| normal(r));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn random_weights(r: &mut ChaCha8Rng, k: usize) -> WeightVector {
    WeightVector::normalized((0..k).map(|_| r.random_range(0.1..1.0)).collect()).unwrap()
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

/// Exact 1D optimal cost between equal-size samples.
fn sorted_matching_cost(a: &[f64], b: &[f64]) -> f64 {
    let (a, b) = (sorted(a.to_vec()), sorted(b.to_vec()));
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn c1_gaussian_fixed_point() -> Outcome {
    let mut r = rng(1);
    let (mut worst_res, mut worst_time) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let d = r.random_range(1..=5);
        let k = r.random_range(2..=4);
        let params: Vec<GaussianParams> = (0..k)
            .map(|_| GaussianParams::new(DVector::from_fn(d, |_, _| normal(&mut r)), random_spd(&mut r, d)).unwrap())
            .collect();
        let w = random_weights(&mut r, k);
        let t = Instant::now();
        let bary = gaussian_barycenter(&params, &w, 1e-12, 500).map_err(|e| e.to_string())?;
        worst_time = worst_time.max(t.elapsed().as_secs_f64());
        worst_res = worst_res.max(barycenter_residual(&bary.cov, &params, &w).unwrap());
    }
    check(
        worst_res < 1e-8 && worst_time < 1.0,
        format!("max relative residual {worst_res:.2e}, slowest instance {:.2} ms", worst_time * 1e3),
    )
}

fn c2_gaussian_1d_closed_form() -> Outcome {
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = r.random_range(2..=5);
        let sig: Vec<f64> = (0..k).map(|_| r.random_range(0.1..5.0)).collect();
        let params: Vec<GaussianParams> = sig
            .iter()
            .map(|s| GaussianParams::new(DVector::from_element(1, normal(&mut r)), DMatrix::from_element(1, 1, s * s)).unwrap())
            .collect();
        let w = random_weights(&mut r, k);
        let bary = gaussian_barycenter(&params, &w, 1e-14, 500).map_err(|e| e.to_string())?;
        let expect: f64 = sig.iter().zip(w.as_slice()).map(|(s, w)| s * w).sum();
        worst = worst.max((bary.cov[(0, 0)].sqrt() - expect).abs());
    }
    check(worst < 1e-10, format!("max |sigma_bary - sum w sigma| = {worst:.2e}"))
}

fn c3_gaussian_map() -> Outcome {
    let mut r = rng(3);
    let mut worst_eq = 0.0f64;
    for _ in 0..50 {
        let d = r.random_range(1..=5);
        let k = r.random_range(2..=4);
        let params: Vec<GaussianParams> = (0..k)
            .map(|_| GaussianParams::new(DVector::from_fn(d, |_, _| normal(&mut r)), random_spd(&mut r, d)).unwrap())
            .collect();
        let w = random_weights(&mut r, k);
        let bary = gaussian_barycenter(&params, &w, 1e-12, 500).unwrap();
        for p in &params {
            let a = gaussian_monge_map(p, &bary).unwrap();
            let m = a.matrix();
            worst_eq = worst_eq.max((m * &p.cov * m - &bary.cov).norm() / bary.cov.norm().max(1.0));
        }
    }
    // Monte Carlo pushforward in 2D
    let params = [
        GaussianParams::new(DVector::from_vec(vec![0.0, 1.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap(),
        GaussianParams::new(DVector::from_vec(vec![3.0, -1.0]), DMatrix::from_row_slice(2, 2, &[2.0, -0.6, -0.6, 1.5]))
            .unwrap(),
    ];
    let w = WeightVector::uniform(2);
    let bary = gaussian_barycenter(&params, &w, 1e-12, 500).unwrap();
    let mut worst_mc = 0.0f64;
    for p in &params {
        let map = gaussian_monge_map(p, &bary).unwrap();
        let l = p.cov.clone().cholesky().unwrap().l();
        let n = 50_000;
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let z = DVector::from_fn(2, |_, _| normal(&mut r));
                map.forward((&p.mean + &l * z).as_slice())
            })
            .collect();
        let est = estimate_gaussian(&SampleMatrix::from_rows(&pts, 0).unwrap(), 0.0);
        worst_mc = worst_mc
            .max((&est.mean - &bary.mean).amax())
            .max((&est.cov - &bary.cov).amax());
    }
    check(
        worst_eq < 1e-8 && worst_mc < 0.05,
        format!("max ||A C_j A - C_bary|| = {worst_eq:.2e}, Monte Carlo max entry error {worst_mc:.3}"),
    )
}

fn round_trip_error(model: &FlowModel, test: &LabeledDataset) -> f64 {
    let mut worst = 0.0f64;
    for (j, c) in test.classes().iter().enumerate() {
        let z = model.transform(j, c).unwrap();
        let back = model.inverse_transform(j, &z).unwrap();
        worst = worst.max(sup_distance(back.as_slice(), c.as_slice()));
    }
    worst
}

fn schedule(cfg: LayerConfig, m: usize) -> Vec<LayerConfig> {
    vec![cfg; m]
}

fn c4_invertibility() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let kinds: [(&str, LayerConfig); 5] = [
        ("gaussian", LayerConfig::Gaussian(GaussianConfig::default())),
        ("nb-mswd", LayerConfig::Nb(NbConfig::default())),
        ("nb-random", LayerConfig::Nb(NbConfig { frame: FrameSource::Random, ..NbConfig::default() })),
        ("nb-identity", LayerConfig::Nb(NbConfig { frame: FrameSource::Identity, ..NbConfig::default() })),
        ("tree", LayerConfig::Tree(TreeConfig::default())),
    ];
    for kind in [GeneratorKind::Moons, GeneratorKind::Circles, GeneratorKind::RandomPattern] {
        let t = Instant::now();
        let spec = GeneratorSpec::new(kind, 0).with_seed(4);
        let (n_train, _) = default_split(kind, spec.k);
        let n_test = 1000 / spec.k;
        let (train, test) = generate_train_test(&spec, n_train, n_test).unwrap();
        let w = WeightVector::uniform(spec.k);
        let mut worst = 0.0f64;
        for (_, cfg) in &kinds {
            let model = fit_flow(&train, &w, &[*cfg], 4).map_err(|e| e.to_string())?;
            worst = worst.max(round_trip_error(&model, &test));
        }
        let nb15 = fit_flow(&train, &w, &schedule(kinds[1].1, 15), 4).map_err(|e| e.to_string())?;
        worst = worst.max(round_trip_error(&nb15, &test));
        let mixed: Vec<LayerConfig> = (0..15).map(|i| kinds[[0, 1, 4][i % 3]].1).collect();
        let mixed = fit_flow(&train, &w, &mixed, 4).map_err(|e| e.to_string())?;
        worst = worst.max(round_trip_error(&mixed, &test));
        let secs = t.elapsed().as_secs_f64();
        ok &= worst < 1e-6 && secs < 60.0;
        lines.push(format!("{kind:?}: max error {worst:.2e} in {secs:.1} s"));
    }
    check(ok, lines.join("; "))
}

/// Relative gap between the cost of the fitted 1D map and the exact
/// sorted-matching cost, over 50 random pairs of n = 200 samples.
fn monge_1d_gaps(cfg: &DensityConfig) -> (f64, f64) {
    let mut r = rng(5);
    let (mut worst, mut sum) = (0.0f64, 0.0);
    for _ in 0..50 {
        let n = 200;
        let (m1, s1) = (normal(&mut r), r.random_range(0.5..2.0));
        let shift = r.random_range(1.0..3.0) * if r.random::<bool>() { 1.0 } else { -1.0 };
        let (m2, s2) = (m1 + shift, r.random_range(0.5..2.0));
        let x: Vec<f64> = (0..n).map(|_| m1 + s1 * normal(&mut r)).collect();
        let y: Vec<f64> = (0..n).map(|_| m2 + s2 * normal(&mut r)).collect();
        let fx = fit_univariate_density(&x, cfg).unwrap();
        let fy = fit_univariate_density(&y, cfg).unwrap();
        let target = barycenter_quantile(&[fy], &WeightVector::new(vec![1.0]).unwrap()).unwrap();
        let map = monge_1d(fx, target);
        let cost = x.iter().map(|&v| (v - map.forward(v)).powi(2)).sum::<f64>() / n as f64;
        let gap = (cost - sorted_matching_cost(&x, &y)).abs() / sorted_matching_cost(&x, &y);
        worst = worst.max(gap);
        sum += gap;
    }
    (worst, sum / 50.0)
}

fn c5_monge_1d_optimality() -> Outcome {
    // densities resolved at the sample scale, so that the comparison measures
    // the map and not histogram smoothing of the sample extremes
    let fine = DensityConfig { bins: 400, alpha: 0.01, ..DensityConfig::default() };
    let (worst, mean) = monge_1d_gaps(&fine);
    let (worst_default, mean_default) = monge_1d_gaps(&DensityConfig::default());
    check(
        worst < 0.02,
        format!(
            "400 bins, alpha 0.01: max gap {:.2}% (mean {:.2}%); default 40 bins, alpha 1: max gap {:.2}% (mean {:.2}%)",
            worst * 100.0,
            mean * 100.0,
            worst_default * 100.0,
            mean_default * 100.0
        ),
    )
}

fn random_histogram(r: &mut ChaCha8Rng) -> Histogram1D {
    let bins = r.random_range(1..=8);
    let lo = r.random_range(-2.0..2.0);
    let mut edges = vec![lo];
    for _ in 0..bins {
        let last = *edges.last().unwrap();
        edges.push(last + r.random_range(0.05..1.0));
    }
    let masses: Vec<f64> = (0..bins).map(|_| r.random_range(0.01..1.0)).collect();
    Histogram1D::from_masses(edges, &masses).unwrap()
}

fn c6_histogram_barycenter() -> Outcome {
    let mut r = rng(6);
    let (mut worst_q, mut edge_ok) = (0.0f64, true);
    for _ in 0..100 {
        let k = r.random_range(2..=5);
        let hists: Vec<Histogram1D> = (0..k).map(|_| random_histogram(&mut r)).collect();
        let w = random_weights(&mut r, k);
        let bary = histogram_barycenter(&hists, &w).map_err(|e| e.to_string())?;
        let total_edges: usize = hists.iter().map(|h| h.edges().len()).sum();
        edge_ok &= bary.edges().len() <= total_edges;
        let spread = bary.hi() - bary.lo();
        let mut grid: Vec<f64> = hists.iter().flat_map(|h| h.mass_levels().into_iter().map(|l| l.value())).collect();
        grid = sorted(grid);
        for u in grid {
            let expect: f64 = hists.iter().zip(w.as_slice()).map(|(h, wj)| wj * h.quantile(u)).sum();
            worst_q = worst_q.max((bary.quantile(u) - expect).abs() / spread);
        }
    }
    check(
        edge_ok && worst_q < 1e-10,
        format!("edge bound held: {edge_ok}, max relative quantile error at grid levels {worst_q:.2e}"),
    )
}

fn identical_dataset(d: usize, n: usize, seed: u64) -> LabeledDataset {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| normal(&mut r)).collect()).collect();
    let a = SampleMatrix::from_rows(&rows, 0).unwrap();
    LabeledDataset::new(vec![a.clone(), a.clone().with_label(1), a.with_label(2)]).unwrap()
}

fn c7_identity_case() -> Outcome {
    let ds = identical_dataset(3, 300, 7);
    let w = WeightVector::new(vec![0.2, 0.3, 0.5]).unwrap();
    let mut r = rng(77);
    let probe: Vec<Vec<f64>> = (0..200).map(|_| (0..3).map(|_| 2.0 * normal(&mut r)).collect()).collect();
    let mut lines = Vec::new();
    let mut ok = true;
    let kinds: [(&str, LayerConfig); 5] = [
        ("gaussian", LayerConfig::Gaussian(GaussianConfig::default())),
        ("nb-mswd", LayerConfig::Nb(NbConfig::default())),
        ("nb-random", LayerConfig::Nb(NbConfig { frame: FrameSource::Random, ..NbConfig::default() })),
        ("nb-identity", LayerConfig::Nb(NbConfig { frame: FrameSource::Identity, m: Some(2), ..NbConfig::default() })),
        ("tree", LayerConfig::Tree(TreeConfig::default())),
    ];
    for (name, cfg) in kinds {
        let model = fit_flow(&ds, &w, &schedule(cfg, 3), 7).map_err(|e| e.to_string())?;
        let tc = transportation_cost(&ds, &model, &w).unwrap();
        let mut dev = 0.0f64;
        for j in 0..3 {
            for p in &probe {
                dev = dev.max(sup_distance(&model.forward_point(j, p).unwrap(), p));
            }
        }
        ok &= tc < 1e-10 && dev < 1e-8;
        lines.push(format!("{name}: TC {tc:.1e}, max deviation {dev:.1e}"));
    }
    check(ok, lines.join("; "))
}

fn c8_moons_convergence() -> Outcome {
    let t = Instant::now();
    let spec = GeneratorSpec::new(GeneratorKind::Moons, 0).with_seed(8);
    let (n_train, n_test) = default_split(GeneratorKind::Moons, 2);
    let (train, test) = generate_train_test(&spec, n_train, n_test).unwrap();
    let w = WeightVector::uniform(2);
    let cfg = SinkhornConfig::new(0.1, 100);
    let model = fit_flow(&train, &w, &schedule(LayerConfig::Nb(NbConfig::default()), 15), 8).map_err(|e| e.to_string())?;
    let identity = FlowModel::identity(2, vec![0, 1], w.clone()).unwrap();
    let wd0 = pairwise_flip_wd(&test, &identity, &cfg).unwrap();
    let wd15 = pairwise_flip_wd(&test, &model, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    check(
        wd15 <= 0.5 * wd0 && secs < 120.0,
        format!("WD {wd0:.4} -> {wd15:.4} ({:.1}% decrease) in {secs:.1} s", 100.0 * (1.0 - wd15 / wd0)),
    )
}

fn c9_gaussian_tc() -> Outcome {
    let spec = GeneratorSpec::new(GeneratorKind::Gaussians, 0).with_seed(9);
    let (n_train, n_test) = default_split(GeneratorKind::Gaussians, 3);
    let (train, test) = generate_train_test(&spec, n_train, n_test).unwrap();
    let w = WeightVector::uniform(3);
    let truth: Vec<GaussianParams> = spec
        .components()
        .iter()
        .map(|c| GaussianParams::new(c.mean_vector(), c.cov_matrix()).unwrap())
        .collect();
    let bary = gaussian_barycenter(&truth, &w, 1e-12, 500).unwrap();
    let analytic: f64 = truth.iter().zip(w.as_slice()).map(|(p, wj)| wj * gaussian_w2_squared(p, &bary).unwrap()).sum();
    let gb = fit_flow(&train, &w, &[LayerConfig::Gaussian(GaussianConfig::default())], 9).map_err(|e| e.to_string())?;
    let tc_gb = transportation_cost(&test, &gb, &w).unwrap();
    let nb = fit_flow(&train, &w, &schedule(LayerConfig::Nb(NbConfig::default()), 15), 9).map_err(|e| e.to_string())?;
    let tc_nb = transportation_cost(&test, &nb, &w).unwrap();
    let cfg = SinkhornConfig::default();
    let wd_nb = pairwise_flip_wd(&test, &nb, &cfg).unwrap();
    // noise floor: real test samples against an independent draw of the same class
    let fresh = generate(&GeneratorSpec { n_per_class: n_test, ..spec.clone().with_seed(909) }).unwrap();
    let floor = (0..3).map(|j| sinkhorn_wd(test.class(j), fresh.class(j), &cfg).unwrap()).sum::<f64>() / 3.0;
    let gb_gap = (tc_gb - analytic).abs() / analytic;
    check(
        gb_gap < 0.05 && tc_nb <= 2.0 * tc_gb && wd_nb <= 1.2 * floor,
        format!(
            "analytic {analytic:.4}, GB TC {tc_gb:.4} ({:.2}% off), NB TC {tc_nb:.4} ({:.2}x GB), NB flip-WD {wd_nb:.4} vs floor {floor:.4} ({:+.1}%)",
            gb_gap * 100.0,
            tc_nb / tc_gb,
            100.0 * (wd_nb / floor - 1.0)
        ),
    )
}

fn c10_gradient_check() -> Outcome {
    let mut r = rng(10);
    let mut worst_grad = 0.0f64;
    let mut worst_feas = 0.0f64;
    for i in 0..20 {
        let d = r.random_range(2..=4);
        let m = r.random_range(1..=d);
        let k = r.random_range(2..=3);
        let n = 60;
        let classes: Vec<SampleMatrix> = (0..k)
            .map(|j| {
                let shift = normal(&mut r);
                let scale = r.random_range(0.5..2.0);
                let data: Vec<f64> = (0..n * d).map(|_| shift + scale * normal(&mut r)).collect();
                SampleMatrix::new(data, d, j as i64).unwrap()
            })
            .collect();
        let ds = LabeledDataset::new(classes).unwrap();
        let w = random_weights(&mut r, k);
        let p = if i % 2 == 0 { 2.0 } else { 3.0 };
        let q = random_frame(d, m, i).unwrap();
        let g = mswd_gradient(&ds, q.matrix(), &w, p).unwrap();
        let h = 1e-6;
        let mut fd = DMatrix::zeros(d, m);
        for a in 0..d {
            for b in 0..m {
                let mut plus = q.matrix().clone();
                plus[(a, b)] += h;
                let mut minus = q.matrix().clone();
                minus[(a, b)] -= h;
                fd[(a, b)] =
                    (mswd_objective_raw(&ds, &plus, &w, p).unwrap() - mswd_objective_raw(&ds, &minus, &w, p).unwrap()) / (2.0 * h);
            }
        }
        worst_grad = worst_grad.max((&g - &fd).norm() / g.norm());
        let eq = equalize(&ds, i, 0).unwrap();
        let (_, trace) = optimize_mswd_frame(&eq, &w, q, &MswdConfig { p, ..MswdConfig::default() }).unwrap();
        worst_feas = trace.iter().map(|t| t.orthonormality_error).fold(worst_feas, f64::max);
    }
    check(
        worst_grad < 1e-4 && worst_feas < 1e-10,
        format!("max gradient relative error {worst_grad:.2e}, max ||Q^T Q - I|| {worst_feas:.2e}"),
    )
}

fn c11_sinkhorn_oracle() -> Outcome {
    let mut r = rng(11);
    let (mut worst_cost, mut worst_marg) = (0.0f64, 0.0f64);
    let cfg = SinkhornConfig { eps: 0.01, max_iter: 50_000, eps_start: Some(10.0) };
    for &n in &[10usize, 50, 100, 200, 500] {
        for _ in 0..2 {
            let shift = r.random_range(1.0..3.0);
            let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
            let y: Vec<f64> = (0..n).map(|_| shift + r.random_range(0.5..1.5) * normal(&mut r)).collect();
            let res = sinkhorn(&SampleMatrix::from_column(&x, 0).unwrap(), &SampleMatrix::from_column(&y, 1).unwrap(), &cfg, true)
                .unwrap();
            let exact = sorted_matching_cost(&x, &y);
            worst_cost = worst_cost.max((res.cost - exact).abs() / exact);
            let me = res.plan.unwrap().marginal_error();
            worst_marg = worst_marg.max(me);
        }
    }
    check(
        worst_cost < 0.05 && worst_marg < 1e-6,
        format!("max relative cost gap {:.2}%, max marginal residual {worst_marg:.2e}", worst_cost * 100.0),
    )
}

fn c12_tree_pushforward() -> Outcome {
    let mut tree = SharedTree::unit(1);
    tree.split_leaf(0, 0, 0.5).unwrap();
    let mut r = rng(12);
    let left: Vec<f64> = (0..500).map(|_| r.random_range(0.0..0.5)).collect();
    let right: Vec<f64> = (0..500).map(|_| r.random_range(0.5..1.0)).collect();
    let mixed: Vec<f64> = (0..500).map(|_| r.random_range(0.0..1.0)).collect();
    let w = WeightVector::uniform(2);
    let mut mass_gap = 0.0f64;
    let mut shift_err = 0.0f64;
    for (a, b, kappa) in [(&left, &mixed, 0.9), (&left, &right, 0.3), (&mixed, &right, 0.5), (&left, &right, 1e-12)] {
        let ds = LabeledDataset::new(vec![
            SampleMatrix::from_column(a, 0).unwrap(),
            SampleMatrix::from_column(b, 1).unwrap(),
        ])
        .unwrap();
        let dens = estimate_leaf_densities(&tree, &ds, kappa).unwrap();
        let maps = fit_tree_monge(&tree, &dens, &w, NodeWeighting::ClassWeighted).unwrap();
        let node = &maps[0];
        // model-level mass of each class below every barycenter edge after mapping
        for &z in node.bary.edges() {
            let masses: Vec<f64> =
                node.sources.iter().zip(&node.maps).map(|(h, m)| h.cdf(m.inverse(z))).collect();
            mass_gap = mass_gap.max((masses[0] - masses[1]).abs());
            mass_gap = mass_gap.max((masses[0] - node.bary.cdf(z)).abs());
        }
        if kappa < 1e-6 {
            for i in 1..50 {
                let x = 0.5 * i as f64 / 50.0;
                shift_err = shift_err.max((node.maps[0].forward(x) - (x + 0.25)).abs());
                shift_err = shift_err.max((node.maps[1].forward(x + 0.5) - (x + 0.25)).abs());
            }
        }
    }
    check(
        mass_gap < 1e-8 && shift_err < 1e-6,
        format!("max node-mass disagreement {mass_gap:.2e}, max deviation from x +/- 0.25 {shift_err:.2e}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("Gaussian barycenter fixed point", c1_gaussian_fixed_point),
        ("1D Gaussian closed form", c2_gaussian_1d_closed_form),
        ("Gaussian map correctness", c3_gaussian_map),
        ("invertibility suite", c4_invertibility),
        ("1D OT optimality", c5_monge_1d_optimality),
        ("histogram barycenter", c6_histogram_barycenter),
        ("identity on identical classes", c7_identity_case),
        ("moons convergence", c8_moons_convergence),
        ("TC near-optimality on Gaussians", c9_gaussian_tc),
        ("mSWD gradient and feasibility", c10_gradient_check),
        ("Sinkhorn oracle", c11_sinkhorn_oracle),
        ("tree pushforward", c12_tree_pushforward),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1} s]: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1} s]: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
