//! Choosing the number of mixture components: sequential relative-fit
//! testing and information criteria.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dist::{fit_single_gaussian, mixture_l2_cross, DataMatrix, Density, FitConstraints, Mixture};
use crate::error::{Error, Result};
use crate::fitters::{em_fit, loglik, EmOptions};
use crate::hypothesis::{relative_fit_stats, split_halves, RiftOptions};
use crate::rng::RngStream;
use crate::special::{mean, z_upper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Kl,
    L2,
}

impl FromStr for Distance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl" => Ok(Distance::Kl),
            "l2" => Ok(Distance::L2),
            _ => Err(Error::invalid(format!("unknown distance '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Aic,
    Bic,
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            _ => Err(Error::invalid(format!("unknown criterion '{s}'"))),
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::Aic => "aic",
            Criterion::Bic => "bic",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub j: usize,
    pub tested_s: Vec<usize>,
    /// Largest statistic over the comparators.
    pub max_gamma: f64,
    /// Per-comparator statistics, aligned with `tested_s`.
    pub gammas: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub rejected: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SeqResult {
    pub k_hat: usize,
    pub per_j: Vec<StepRecord>,
    /// Fit for k = 1..=K_n on the fitting half; `None` where EM failed.
    #[serde(skip)]
    pub fits: Vec<Option<Mixture>>,
}

/// Default cap on the number of components: `min(10, ⌊√n⌋)`.
pub fn default_kmax(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).clamp(1, 10)
}

fn fit_k(data: &DataMatrix, k: usize, c: &FitConstraints, em: &EmOptions, rng: &RngStream) -> Result<Mixture> {
    if k == 1 {
        Ok(Mixture::single(fit_single_gaussian(data, c)))
    } else {
        em_fit(data, k, c, em, rng)
    }
}

/// `(statistic, standard error)` for preferring `ps` over `pj` on `d2`.
fn compare(pj: &Mixture, ps: &Mixture, d2: &DataMatrix, distance: Distance, delta: f64, rng: &RngStream) -> Result<(f64, f64)> {
    let n = d2.rows() as f64;
    match distance {
        Distance::Kl => {
            let s = relative_fit_stats(pj, ps, d2, None, delta, 0, rng)?;
            Ok((s.gamma_hat, s.tau_hat / n.sqrt()))
        }
        Distance::L2 => {
            let mut g = rng.derive(0).rng();
            let u: Vec<f64> = d2
                .iter_rows()
                .map(|x| {
                    let z: f64 = g.sample(StandardNormal);
                    pj.ln_density(x).exp() - ps.ln_density(x).exp() + delta * z
                })
                .collect();
            let ubar = mean(&u);
            let theta = mixture_l2_cross(pj, pj)? - mixture_l2_cross(ps, ps)? - 2.0 * ubar;
            let a = (u.iter().map(|v| (v - ubar).powi(2)).sum::<f64>() / n).sqrt();
            Ok((theta, 2.0 * a / n.sqrt()))
        }
    }
}

/// Sequential selection: for `j = 1, 2, …` test the `j`-component fit
/// against every larger fit with Bonferroni level `α / m_j` and stop at the
/// first `j` that is not rejected. All fits use one fitting half; all tests
/// use the other.
pub fn srift_select(
    data: &DataMatrix,
    k_max: usize,
    alpha: f64,
    distance: Distance,
    c: &FitConstraints,
    opts: &RiftOptions,
    rng: &RngStream,
) -> Result<SeqResult> {
    if k_max == 0 {
        return Err(Error::invalid("K_n must be at least 1"));
    }
    if data.rows() < 4 * k_max {
        return Err(Error::invalid(format!("need n >= 4·K_n = {}, got {}", 4 * k_max, data.rows())));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1)"));
    }
    let halves = split_halves(data.rows(), opts.split_ratio, &rng.derive(0))?;
    let d1 = data.select_rows(&halves.d1_indices)?;
    let d2 = data.select_rows(&halves.d2_indices)?;
    let fits: Vec<Option<Mixture>> = (1..=k_max)
        .map(|k| match fit_k(&d1, k, c, &opts.em, &rng.derive(1).derive(k as u64)) {
            Ok(m) => Some(m),
            Err(e) => {
                log::warn!("fit with {k} components failed: {e}");
                None
            }
        })
        .collect();

    let mut per_j = Vec::new();
    let mut k_hat = k_max;
    for j in 1..k_max {
        let Some(pj) = &fits[j - 1] else { continue };
        let tested: Vec<usize> = (j + 1..=k_max).filter(|s| fits[s - 1].is_some()).collect();
        if tested.is_empty() {
            continue;
        }
        let z = if alpha > 0.0 { z_upper(alpha / tested.len() as f64) } else { f64::INFINITY };
        let mut gammas = Vec::with_capacity(tested.len());
        let mut thresholds = Vec::with_capacity(tested.len());
        let mut rejected = false;
        for &s in &tested {
            let ps = fits[s - 1].as_ref().unwrap();
            let stream = rng.derive(2).derive((j * (k_max + 1) + s) as u64);
            let (gamma, se) = compare(pj, ps, &d2, distance, opts.delta_jitter, &stream)?;
            let thr = z * se;
            rejected |= gamma > thr;
            gammas.push(gamma);
            thresholds.push(thr);
        }
        per_j.push(StepRecord {
            j,
            max_gamma: gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            tested_s: tested,
            gammas,
            thresholds,
            rejected,
        });
        if !rejected {
            k_hat = j;
            break;
        }
    }
    Ok(SeqResult { k_hat, per_j, fits })
}

/// Free parameters of a k-component full-covariance mixture in `d` dims.
pub fn n_params(k: usize, d: usize) -> usize {
    k - 1 + k * d + k * d * (d + 1) / 2
}

/// Number of components minimising AIC or BIC over `1..=k_max`, fitted on
/// all rows.
pub fn ic_select(
    data: &DataMatrix,
    k_max: usize,
    criterion: Criterion,
    c: &FitConstraints,
    em: &EmOptions,
    rng: &RngStream,
) -> Result<usize> {
    if k_max == 0 {
        return Err(Error::invalid("K_n must be at least 1"));
    }
    if data.rows() < 4 * k_max {
        return Err(Error::invalid(format!("need n >= 4·K_n = {}, got {}", 4 * k_max, data.rows())));
    }
    let n = data.rows() as f64;
    let penalty = match criterion {
        Criterion::Aic => 2.0,
        Criterion::Bic => n.ln(),
    };
    let mut best: Option<(f64, usize)> = None;
    for k in 1..=k_max {
        let m = match fit_k(data, k, c, em, &rng.derive(k as u64)) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("fit with {k} components failed: {e}");
                continue;
            }
        };
        let score = -2.0 * loglik(&m, data)? + penalty * n_params(k, data.cols()) as f64;
        if best.is_none_or(|(b, _)| score < b) {
            best = Some((score, k));
        }
    }
    best.map(|(_, k)| k).ok_or_else(|| Error::numerical("every mixture fit failed"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{mixture_sample, mvn_sample, Gaussian};
    use nalgebra::DMatrix;

    fn blobs(k: usize, sep: f64, per: usize, seed: u64) -> DataMatrix {
        let comps = (0..k)
            .map(|i| Gaussian::new(vec![sep * i as f64, 0.0], DMatrix::identity(2, 2)).unwrap())
            .collect();
        let m = Mixture::new(vec![1.0 / k as f64; k], comps).unwrap();
        mixture_sample(&m, k * per, &RngStream::new(seed, 0)).unwrap().0
    }

    #[test]
    fn single_component_cap() {
        let x = blobs(3, 8.0, 50, 1);
        let c = FitConstraints::default_for(&x);
        let r = srift_select(&x, 1, 0.05, Distance::Kl, &c, &RiftOptions::default(), &RngStream::new(1, 1)).unwrap();
        assert_eq!(r.k_hat, 1);
        assert!(r.per_j.is_empty());
    }

    #[test]
    fn finds_three_blobs() {
        let x = blobs(3, 8.0, 100, 2);
        let c = FitConstraints::default_for(&x);
        for dist in [Distance::Kl, Distance::L2] {
            let r = srift_select(&x, 5, 0.05, dist, &c, &RiftOptions::default(), &RngStream::new(2, 1)).unwrap();
            assert_eq!(r.k_hat, 3, "{dist:?}");
            assert_eq!(r.per_j.len(), 3);
            assert!(r.per_j[..2].iter().all(|s| s.rejected));
            assert!(!r.per_j[2].rejected);
        }
        let em = EmOptions::default();
        assert_eq!(ic_select(&x, 5, Criterion::Bic, &c, &em, &RngStream::new(2, 2)).unwrap(), 3);
        let aic = ic_select(&x, 5, Criterion::Aic, &c, &em, &RngStream::new(2, 2)).unwrap();
        assert!((1..=5).contains(&aic));
    }

    #[test]
    fn stops_at_first_acceptance_under_null() {
        let x = mvn_sample(&Gaussian::standard(2), 400, &RngStream::new(3, 0)).unwrap();
        let c = FitConstraints::default_for(&x);
        let r = srift_select(&x, 4, 0.05, Distance::Kl, &c, &RiftOptions::default(), &RngStream::new(3, 1)).unwrap();
        let first_accept = r.per_j.iter().position(|s| !s.rejected);
        if let Some(p) = first_accept {
            assert_eq!(p + 1, r.per_j.len());
            assert_eq!(r.k_hat, r.per_j[p].j);
        }
    }

    #[test]
    fn guards_and_counts() {
        let x = blobs(1, 0.0, 10, 4);
        let c = FitConstraints::default_for(&x);
        assert!(srift_select(&x, 3, 0.05, Distance::Kl, &c, &RiftOptions::default(), &RngStream::new(0, 0)).is_err());
        assert_eq!(n_params(1, 2), 5);
        assert_eq!(n_params(3, 10), 2 + 30 + 165);
        assert_eq!(default_kmax(50), 7);
        assert_eq!(default_kmax(10_000), 10);
        assert!((8f64).ln() > 2.0);
    }
}
