//! Monte-Carlo checks of the tests, trees and selection rules.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;

use relfit::dist::{fit_single_gaussian, mixture_sample, mvn_sample};
use relfit::fitters::EmOptions;
use relfit::hypothesis::{
    l2rift_from_fits, mardia, nn_test, rift, rift_from_fits, separated_mixture_test, sigclust_bootstrap, L2Integration, Method,
    NnOptions, RiftOptions, SigClustOptions,
};
use relfit::select::{ic_select, srift_select, Criterion, Distance};
use relfit::special::{ks_pvalue, ks_uniform_statistic};
use relfit::tree::{assign_labels, topdown_cluster, TreeOptions};
use relfit::{DataMatrix, FitConstraints, Gaussian, Mixture, RngStream};

const ALPHA: f64 = 0.05;

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

fn three_se(p: f64, reps: usize) -> f64 {
    3.0 * (p * (1.0 - p) / reps as f64).sqrt()
}

fn rate(hits: impl Iterator<Item = bool>) -> f64 {
    let v: Vec<bool> = hits.collect();
    v.iter().filter(|b| **b).count() as f64 / v.len() as f64
}

fn gaussian(v: &[f64]) -> Gaussian {
    Gaussian::new(vec![0.0; v.len()], diag(v)).unwrap()
}

fn pair(sep: f64) -> Mixture {
    Mixture::new(
        vec![0.5, 0.5],
        vec![
            Gaussian::new(vec![-sep, 0.0], DMatrix::identity(2, 2)).unwrap(),
            Gaussian::new(vec![sep, 0.0], DMatrix::identity(2, 2)).unwrap(),
        ],
    )
    .unwrap()
}

fn duplicate(g: &Gaussian) -> Mixture {
    Mixture::new(vec![0.5, 0.5], vec![g.clone(), g.clone()]).unwrap()
}

#[test]
fn rift_with_duplicated_component_gives_uniform_p_values() {
    let g = gaussian(&[1.0, 1.0]);
    let p2 = duplicate(&g);
    let opts = RiftOptions::default();
    let p: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let d2 = mvn_sample(&g, 200, &RngStream::new(11, s)).unwrap();
            rift_from_fits(&g, &p2, &d2, &opts, &RngStream::new(12, s)).unwrap().p_value
        })
        .collect();
    let pv = ks_pvalue(ks_uniform_statistic(&p), p.len());
    assert!(pv >= 0.01, "KS p = {pv}");
}

#[test]
fn l2_with_duplicated_component_holds_level() {
    let g = gaussian(&[1.0, 2.0]);
    let p2 = duplicate(&g);
    let opts = RiftOptions::default();
    let r = rate((0..200u64).map(|s| {
        let d2 = mvn_sample(&g, 200, &RngStream::new(21, s)).unwrap();
        l2rift_from_fits(&g, &p2, &d2, &opts, L2Integration::ClosedForm, &RngStream::new(22, s)).unwrap().reject
    }));
    assert!(r <= ALPHA + three_se(ALPHA, 200), "rate {r}");
}

#[test]
fn separated_test_level_and_power() {
    let g = gaussian(&[1.0, 1.0]);
    let opts = RiftOptions::default();
    let null: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 2000, &RngStream::new(31, s)).unwrap();
            let c = FitConstraints::default_for(&x);
            separated_mixture_test(&x, &c, 0.01, &opts, &RngStream::new(32, s)).unwrap().reject
        })
        .collect();
    let r0 = rate(null.into_iter());
    assert!(r0 <= ALPHA + three_se(ALPHA, 200), "null rate {r0}");
    let alt = rate((0..50u64).map(|s| {
        let (x, _) = mixture_sample(&pair(10.0), 400, &RngStream::new(33, s)).unwrap();
        let c = FitConstraints::default_for(&x);
        separated_mixture_test(&x, &c, 0.01, &opts, &RngStream::new(34, s)).unwrap().reject
    }));
    assert!(alt >= 0.9, "power {alt}");
}

#[test]
fn separated_with_zero_delta_is_rift() {
    let (x, _) = mixture_sample(&pair(1.5), 300, &RngStream::new(35, 0)).unwrap();
    let c = FitConstraints::default_for(&x);
    let opts = RiftOptions::default();
    for s in 0..5 {
        let a = separated_mixture_test(&x, &c, 0.0, &opts, &RngStream::new(36, s)).unwrap();
        let b = rift(&x, &c, &opts, &RngStream::new(36, s)).unwrap();
        assert_eq!(a.reject, b.reject);
        assert_eq!(a.statistic, b.statistic);
    }
}

#[test]
fn sigclust_null_is_not_liberal() {
    // plug-in covariance makes the bootstrap conservative; see the notes on calibration
    let g = gaussian(&[2.0, 1.0]);
    let opts = SigClustOptions {
        b: 200,
        ..SigClustOptions::default()
    };
    let rejects: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 200, &RngStream::new(41, s)).unwrap();
            sigclust_bootstrap(&x, &opts, &RngStream::new(42, s)).unwrap().reject
        })
        .collect();
    let r = rate(rejects.into_iter());
    assert!(r <= ALPHA + three_se(ALPHA, 200), "rate {r}");
}

#[test]
fn sigclust_overwhelming_separation() {
    let (x, _) = mixture_sample(&pair(10.0), 100, &RngStream::new(43, 0)).unwrap();
    let opts = SigClustOptions {
        b: 200,
        ..SigClustOptions::default()
    };
    let o = sigclust_bootstrap(&x, &opts, &RngStream::new(44, 0)).unwrap();
    assert_eq!(o.p_value, 1.0 / 201.0);
    assert!(o.reject);
}

#[test]
fn mardia_large_sample_null() {
    let g = gaussian(&[1.0, 2.0, 0.5]);
    let small: Vec<bool> = (0..100u64)
        .into_par_iter()
        .map(|s| mardia(&mvn_sample(&g, 100_000, &RngStream::new(51, s)).unwrap(), ALPHA).unwrap().statistic.abs() < 4.0)
        .collect();
    assert!(rate(small.into_iter()) >= 0.99);
}

fn t3_sample(n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut g = RngStream::new(seed, 0).rng();
    let chi = ChiSquared::new(3.0).unwrap();
    let mut v = Vec::with_capacity(n * d);
    for _ in 0..n {
        let w = (chi.sample(&mut g) / 3.0_f64).sqrt();
        for _ in 0..d {
            let z: f64 = g.sample(StandardNormal);
            v.push(z / w);
        }
    }
    DataMatrix::new(n, d, v).unwrap()
}

#[test]
fn mardia_detects_heavy_tails() {
    let r = rate((0..50u64).map(|s| mardia(&t3_sample(1000, 2, 52 + s), ALPHA).unwrap().reject));
    assert!(r >= 0.9, "rate {r}");
}

#[test]
fn nn_ks_null_calibration() {
    let g = gaussian(&[1.0, 1.0]);
    let opts = NnOptions::default();
    let rejects: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 1000, &RngStream::new(61, s)).unwrap();
            nn_test(&x, &opts, &RngStream::new(62, s)).unwrap().reject
        })
        .collect();
    let r = rate(rejects.into_iter());
    assert!((r - ALPHA).abs() <= three_se(ALPHA, 200), "rate {r}");
}

#[test]
fn l2_rescaling_without_jitter() {
    let (x, _) = mixture_sample(&pair(1.5), 400, &RngStream::new(71, 0)).unwrap();
    let scaled = x.map(|v| 3.0 * v).unwrap();
    let opts = RiftOptions {
        delta_jitter: 0.0,
        ..RiftOptions::default()
    };
    let cfg = relfit::hypothesis::MethodConfig {
        rift: opts,
        ..Default::default()
    };
    for m in [Method::Rift, Method::Mrift, Method::L2rift] {
        let a = relfit::hypothesis::run_test(m, &x, &FitConstraints::default_for(&x), ALPHA, &cfg, &RngStream::new(72, 0)).unwrap();
        let b = relfit::hypothesis::run_test(m, &scaled, &FitConstraints::default_for(&scaled), ALPHA, &cfg, &RngStream::new(72, 0)).unwrap();
        assert_eq!(a.reject, b.reject, "{m}");
        assert!((a.p_value - b.p_value).abs() < 1e-6, "{m}: {} vs {}", a.p_value, b.p_value);
    }
}

#[test]
fn topdown_null_keeps_one_leaf() {
    let g = gaussian(&[1.0, 1.0]);
    let ones: Vec<bool> = (0..100u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 400, &RngStream::new(81, s)).unwrap();
            let c = FitConstraints::default_for(&x);
            topdown_cluster(&x, Method::Mrift, ALPHA, &c, &TreeOptions::default(), &RngStream::new(82, s)).unwrap().n_leaves() == 1
        })
        .collect();
    let r = rate(ones.into_iter());
    assert!(r >= 1.0 - ALPHA - three_se(ALPHA, 100), "one-leaf rate {r}");
}

#[test]
fn tree_labels_are_translation_invariant() {
    let spec = relfit::bench::ScenarioSpec::new(relfit::bench::ScenarioKind::Square, 2);
    let (x, _) = relfit::bench::gen_scenario(&spec, &RngStream::new(83, 0)).unwrap();
    let shifted = DataMatrix::new(x.rows(), 2, x.iter_rows().flat_map(|r| [r[0] + 40.0, r[1] - 7.0]).collect()).unwrap();
    let run = |d: &DataMatrix| {
        let c = FitConstraints::default_for(d);
        let t = topdown_cluster(d, Method::Mrift, ALPHA, &c, &TreeOptions::default(), &RngStream::new(84, 0)).unwrap();
        (t.n_leaves(), assign_labels(&t, d).unwrap())
    };
    assert_eq!(run(&x), run(&shifted));
}

#[test]
fn sequential_selection_null_rate() {
    let g = gaussian(&[1.0, 1.0]);
    let over: Vec<bool> = (0..200u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 400, &RngStream::new(91, s)).unwrap();
            let c = FitConstraints::default_for(&x);
            srift_select(&x, 5, ALPHA, Distance::Kl, &c, &RiftOptions::default(), &RngStream::new(92, s)).unwrap().k_hat > 1
        })
        .collect();
    let r = rate(over.into_iter());
    assert!(r <= ALPHA + three_se(ALPHA, 200), "P(k > 1) = {r}");
}

#[test]
fn bic_picks_one_component_under_null() {
    let g = gaussian(&[1.0, 1.0]);
    let ones: Vec<bool> = (0..50u64)
        .into_par_iter()
        .map(|s| {
            let x = mvn_sample(&g, 2000, &RngStream::new(93, s)).unwrap();
            let c = FitConstraints::default_for(&x);
            ic_select(&x, 5, Criterion::Bic, &c, &EmOptions::default(), &RngStream::new(94, s)).unwrap() == 1
        })
        .collect();
    assert!(rate(ones.into_iter()) >= 0.9);
}

#[test]
fn single_gaussian_fit_is_translation_equivariant() {
    let x = mvn_sample(&gaussian(&[2.0, 1.0]), 500, &RngStream::new(95, 0)).unwrap();
    let y = DataMatrix::new(x.rows(), 2, x.iter_rows().flat_map(|r| [r[0] - 3.0, r[1] + 11.0]).collect()).unwrap();
    let a = fit_single_gaussian(&x, &FitConstraints::default_for(&x));
    let b = fit_single_gaussian(&y, &FitConstraints::default_for(&y));
    assert!((a.mean()[0] - 3.0 - b.mean()[0]).abs() < 1e-9);
    assert!((a.mean()[1] + 11.0 - b.mean()[1]).abs() < 1e-9);
    assert!((a.cov() - b.cov()).abs().max() < 1e-9);
}

fn signal_one_direction(a: f64, n: usize, d: usize, seed: u64) -> DataMatrix {
    let mut mu = vec![0.0; d];
    mu[0] = a;
    let m = Mixture::new(
        vec![0.5, 0.5],
        vec![Gaussian::new(vec![0.0; d], DMatrix::identity(d, d)).unwrap(), Gaussian::new(mu, DMatrix::identity(d, d)).unwrap()],
    )
    .unwrap();
    mixture_sample(&m, n, &RngStream::new(seed, 0)).unwrap().0
}

#[test]
#[ignore = "d = 1000; several minutes"]
fn rift_high_dimensional_signal() {
    let opts = RiftOptions {
        split_ratio: 0.9,
        ..RiftOptions::default()
    };
    let r = rate((0..30u64).map(|s| {
        let x = signal_one_direction(20.0, 500, 1000, 100 + s);
        let c = FitConstraints::default_for(&x);
        rift(&x, &c, &opts, &RngStream::new(101, s)).unwrap().reject
    }));
    assert!(r >= 0.8, "rate {r}");
}
