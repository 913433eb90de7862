//! Tests of a single Gaussian against a two-component mixture: RIFT, its
//! median and L2 variants, the separated-mixture test, the SigClust
//! bootstrap, Mardia's kurtosis test and nearest-neighbour tests.
//!
//! RIFT-family tests are conditional on the fitting half of a random split;
//! the reported p-values are conditional on that half.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{
    fit_single_gaussian, mixture_l2_cross, DataMatrix, Density, FitConstraints, Gaussian, Mixture, MultivariateT, Region,
};
use crate::error::{Error, Result};
use crate::fitters::{em_fit, sigclust_statistic, EmOptions};
use crate::rng::RngStream;
use crate::special::{binom_half_upper_tail, ks_pvalue, ks_uniform_statistic, mean, median, norm_sf, sd_sample, z_upper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Rift,
    Mrift,
    L2rift,
    Sigclust,
    SigclustTrunc,
    Mardia,
    NnKs,
    NnZ,
    Separated,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Rift,
        Method::Mrift,
        Method::L2rift,
        Method::Sigclust,
        Method::SigclustTrunc,
        Method::Mardia,
        Method::NnKs,
        Method::NnZ,
        Method::Separated,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Rift => "rift",
            Method::Mrift => "mrift",
            Method::L2rift => "l2rift",
            Method::Sigclust => "sigclust",
            Method::SigclustTrunc => "sigclust-trunc",
            Method::Mardia => "mardia",
            Method::NnKs => "nn-ks",
            Method::NnZ => "nn-z",
            Method::Separated => "separated",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.tag() == s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown method '{s}'")))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub aux: BTreeMap<String, f64>,
}

impl TestOutcome {
    fn new(method: Method, statistic: f64, p_value: f64, reject: bool, alpha: f64) -> Self {
        Self {
            method,
            statistic,
            p_value: p_value.clamp(0.0, 1.0),
            reject,
            alpha,
            aux: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.aux.insert(key.to_string(), v);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitHalves {
    pub d1_indices: Vec<usize>,
    pub d2_indices: Vec<usize>,
    pub ratio: f64,
}

/// Random partition with `|D1| = ⌊ratio·n + ½⌋`; both halves keep ascending
/// index order.
pub fn split_halves(n: usize, ratio: f64, rng: &RngStream) -> Result<SplitHalves> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::invalid("split ratio must lie in (0, 1)"));
    }
    if n < 4 {
        return Err(Error::invalid(format!("need at least 4 observations to split, got {n}")));
    }
    let n1 = (ratio * n as f64 + 0.5).floor() as usize;
    if n1 < 2 || n - n1 < 2 {
        return Err(Error::invalid(format!("split of {n} rows at ratio {ratio} leaves a half with fewer than 2 rows")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng.rng());
    let mut d1 = idx[..n1].to_vec();
    let mut d2 = idx[n1..].to_vec();
    d1.sort_unstable();
    d2.sort_unstable();
    Ok(SplitHalves {
        d1_indices: d1,
        d2_indices: d2,
        ratio,
    })
}

#[derive(Clone, Debug)]
pub struct RiftOptions {
    pub delta_jitter: f64,
    pub alpha: f64,
    pub split_ratio: f64,
    /// Truncate both fitted densities to this region.
    pub region: Option<Region>,
    /// Monte-Carlo draws per region-mass estimate.
    pub trunc_mc: usize,
    pub em: EmOptions,
}

impl Default for RiftOptions {
    fn default() -> Self {
        Self {
            delta_jitter: 1e-5,
            alpha: 0.05,
            split_ratio: 0.5,
            region: None,
            trunc_mc: 100_000,
            em: EmOptions::default(),
        }
    }
}

impl RiftOptions {
    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) && self.alpha != 0.0 {
            return Err(Error::invalid("alpha must lie in [0, 1)"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::invalid("split ratio must lie in (0, 1)"));
        }
        if !(self.delta_jitter >= 0.0) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativeFit {
    pub gamma_hat: f64,
    pub tau_hat: f64,
    /// Jittered per-point log ratios `R̃_i`.
    pub r_values: Vec<f64>,
}

fn region_log_mass<D: Density + ?Sized>(dist: &D, region: Option<&Region>, m: usize, rng: &RngStream) -> Result<f64> {
    match region {
        None => Ok(0.0),
        Some(r) => {
            let p = crate::dist::estimate_region_mass(dist, r, m, rng);
            if p <= 0.0 {
                return Err(Error::numerical("estimated region mass is zero; truncation unusable"));
            }
            Ok(p.ln())
        }
    }
}

/// Mean and spread of `log p̂2 − log p̂1` over `d2`, each density divided by
/// its mass in `region` when one is given, plus `δ·Z_i` jitter.
pub fn relative_fit_stats<P1: Density + ?Sized, P2: Density + ?Sized>(
    p1: &P1,
    p2: &P2,
    d2: &DataMatrix,
    region: Option<&Region>,
    delta: f64,
    trunc_mc: usize,
    rng: &RngStream,
) -> Result<RelativeFit> {
    if d2.rows() < 2 {
        return Err(Error::invalid("need at least two test points"));
    }
    if p1.dim() != d2.cols() || p2.dim() != d2.cols() {
        return Err(Error::DimensionMismatch {
            expected: d2.cols(),
            got: p1.dim(),
        });
    }
    let lm1 = region_log_mass(p1, region, trunc_mc, &rng.derive(1))?;
    let lm2 = region_log_mass(p2, region, trunc_mc, &rng.derive(2))?;
    let mut jitter = rng.derive(0).rng();
    let r_values: Vec<f64> = d2
        .iter_rows()
        .map(|x| {
            let r = (p2.ln_density(x) - lm2) - (p1.ln_density(x) - lm1);
            let z: f64 = jitter.sample(StandardNormal);
            r + delta * z
        })
        .collect();
    if r_values.iter().any(|r| !r.is_finite()) {
        return Err(Error::numerical("non-finite log-density ratio"));
    }
    let gamma_hat = mean(&r_values);
    let tau_hat = (r_values.iter().map(|r| (r - gamma_hat).powi(2)).sum::<f64>() / r_values.len() as f64).sqrt();
    Ok(RelativeFit {
        gamma_hat,
        tau_hat,
        r_values,
    })
}

struct Fits {
    p1: Gaussian,
    p2: Mixture,
    d2: DataMatrix,
    n_fit: usize,
}

fn fit_halves(data: &DataMatrix, c: &FitConstraints, opts: &RiftOptions, rng: &RngStream) -> Result<Fits> {
    opts.validate()?;
    if data.rows() < 8 {
        return Err(Error::invalid(format!("need at least 8 observations, got {}", data.rows())));
    }
    let halves = split_halves(data.rows(), opts.split_ratio, &rng.derive(0))?;
    let d1 = data.select_rows(&halves.d1_indices)?;
    let d2 = data.select_rows(&halves.d2_indices)?;
    let p1 = fit_single_gaussian(&d1, c);
    let p2 = em_fit(&d1, 2, c, &opts.em, &rng.derive(1))?;
    Ok(Fits {
        p1,
        p2,
        d2,
        n_fit: d1.rows(),
    })
}

/// RIFT decision for given fits: reject when `Γ̂ > z_α τ̂ / √n`.
pub fn rift_from_fits<P1: Density + ?Sized, P2: Density + ?Sized>(
    p1: &P1,
    p2: &P2,
    d2: &DataMatrix,
    opts: &RiftOptions,
    rng: &RngStream,
) -> Result<TestOutcome> {
    let s = relative_fit_stats(p1, p2, d2, opts.region.as_ref(), opts.delta_jitter, opts.trunc_mc, rng)?;
    let n = d2.rows() as f64;
    let (stat, p) = if s.tau_hat > 0.0 {
        let z = n.sqrt() * s.gamma_hat / s.tau_hat;
        (z, norm_sf(z))
    } else if opts.delta_jitter == 0.0 {
        return Err(Error::numerical("all log ratios are equal and no jitter was added; the RIFT statistic is undefined"));
    } else {
        (0.0, 0.5)
    };
    let reject = opts.alpha > 0.0 && s.gamma_hat > z_upper(opts.alpha) * s.tau_hat / n.sqrt();
    Ok(TestOutcome::new(Method::Rift, stat, p, reject, opts.alpha)
        .with("gamma_hat", s.gamma_hat)
        .with("tau_hat", s.tau_hat)
        .with("n_test", n))
}

pub fn rift(data: &DataMatrix, c: &FitConstraints, opts: &RiftOptions, rng: &RngStream) -> Result<TestOutcome> {
    let f = fit_halves(data, c, opts, rng)?;
    Ok(rift_from_fits(&f.p1, &f.p2, &f.d2, opts, &rng.derive(2))?.with("n_fit", f.n_fit as f64))
}

/// Sign test on the jittered log ratios; exact binomial p-value.
pub fn mrift_from_fits<P1: Density + ?Sized, P2: Density + ?Sized>(
    p1: &P1,
    p2: &P2,
    d2: &DataMatrix,
    opts: &RiftOptions,
    rng: &RngStream,
) -> Result<TestOutcome> {
    let s = relative_fit_stats(p1, p2, d2, opts.region.as_ref(), opts.delta_jitter, opts.trunc_mc, rng)?;
    let pos = s.r_values.iter().filter(|r| **r > 0.0).count() as u64;
    let n_eff = s.r_values.iter().filter(|r| **r != 0.0).count() as u64;
    let p = binom_half_upper_tail(n_eff, pos);
    Ok(TestOutcome::new(Method::Mrift, median(&s.r_values), p, p < opts.alpha, opts.alpha)
        .with("n_positive", pos as f64)
        .with("n_test", n_eff as f64)
        .with("gamma_hat", s.gamma_hat))
}

pub fn mrift(data: &DataMatrix, c: &FitConstraints, opts: &RiftOptions, rng: &RngStream) -> Result<TestOutcome> {
    let f = fit_halves(data, c, opts, rng)?;
    Ok(mrift_from_fits(&f.p1, &f.p2, &f.d2, opts, &rng.derive(2))?.with("n_fit", f.n_fit as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum L2Integration {
    /// Exact Gaussian cross-integrals.
    ClosedForm,
    /// Importance sampling from a multivariate t proposal.
    Importance { draws: usize, dof: f64 },
}

/// Monte-Carlo mean of `f(Y)/g(Y)` for `Y ~ g`, with its standard error.
pub fn importance_integral<G: Density + ?Sized>(
    f: impl Fn(&[f64]) -> f64,
    proposal: &G,
    draws: usize,
    rng: &RngStream,
) -> Result<(f64, f64)> {
    if draws < 2 {
        return Err(Error::invalid("importance sampling needs at least two draws"));
    }
    let mut r = rng.rng();
    let mut y = vec![0.0; proposal.dim()];
    let w: Vec<f64> = (0..draws)
        .map(|_| {
            proposal.draw(&mut r, &mut y);
            f(&y) / proposal.ln_density(&y).exp()
        })
        .collect();
    if w.iter().all(|v| *v == 0.0) {
        return Err(Error::numerical("all importance weights are zero; proposal misses the target"));
    }
    Ok((mean(&w), sd_sample(&w) / (draws as f64).sqrt()))
}

/// Heavy-tailed proposal covering both fitted densities.
pub fn l2_proposal(p1: &Gaussian, p2: &Mixture, dof: f64) -> Result<MultivariateT> {
    let both = Mixture::new(vec![0.5, 0.5], vec![p1.clone(), p1.clone()])?;
    let (m1, c1) = both.moments();
    let (m2, c2) = p2.moments();
    let loc: Vec<f64> = m1.iter().zip(&m2).map(|(a, b)| 0.5 * (a + b)).collect();
    let mut cov = (c1 + c2) * 0.5;
    for (i, (a, b)) in m1.iter().zip(&m2).enumerate() {
        for (j, (c, e)) in m1.iter().zip(&m2).enumerate() {
            cov[(i, j)] += 0.25 * (a - b) * (c - e);
        }
    }
    MultivariateT::new(loc, cov, dof)
}

fn sq_integral(p: &Mixture, region: Option<&Region>, integration: L2Integration, m: usize, proposal: Option<&MultivariateT>, rng: &RngStream) -> Result<(f64, f64)> {
    match region {
        Some(r) if !r.is_whole() => {
            // ∫_S p² / P(S)² = E_p[p 1_S] / P(S)², both from the same draws
            let mut g = rng.rng();
            let mut x = vec![0.0; p.dim()];
            let (mut hits, mut acc) = (0usize, 0.0);
            for _ in 0..m {
                p.draw(&mut g, &mut x);
                if r.contains(&x) {
                    hits += 1;
                    acc += p.ln_density(&x).exp();
                }
            }
            if hits == 0 {
                return Err(Error::numerical("estimated region mass is zero; truncation unusable"));
            }
            let mass = hits as f64 / m as f64;
            Ok((acc / m as f64 / (mass * mass), mass))
        }
        _ => match integration {
            L2Integration::ClosedForm => Ok((mixture_l2_cross(p, p)?, 1.0)),
            L2Integration::Importance { draws, .. } => {
                let g = proposal.expect("proposal built for importance sampling");
                let (v, _) = importance_integral(|y| (2.0 * p.ln_density(y)).exp(), g, draws, rng)?;
                Ok((v, 1.0))
            }
        },
    }
}

/// L2 relative fit for given fits:
/// `Θ̂ = ∫p̂1² − ∫p̂2² − (2/n) Σ Ũ_i` with `Ũ_i = p̂1(X_i) − p̂2(X_i) + δZ_i`.
/// The standard error of `Θ̂` is `2â/√n` with `â² = var(Ũ)`.
pub fn l2rift_from_fits(
    p1: &Gaussian,
    p2: &Mixture,
    d2: &DataMatrix,
    opts: &RiftOptions,
    integration: L2Integration,
    rng: &RngStream,
) -> Result<TestOutcome> {
    if d2.rows() < 2 {
        return Err(Error::invalid("need at least two test points"));
    }
    let p1m = Mixture::single(p1.clone());
    let proposal = match integration {
        L2Integration::Importance { dof, .. } => Some(l2_proposal(p1, p2, dof)?),
        L2Integration::ClosedForm => None,
    };
    let region = opts.region.as_ref();
    let (i1, mass1) = sq_integral(&p1m, region, integration, opts.trunc_mc, proposal.as_ref(), &rng.derive(1))?;
    let (i2, mass2) = sq_integral(p2, region, integration, opts.trunc_mc, proposal.as_ref(), &rng.derive(2))?;
    let mut jitter = rng.derive(0).rng();
    let u: Vec<f64> = d2
        .iter_rows()
        .map(|x| {
            let z: f64 = jitter.sample(StandardNormal);
            p1.ln_density(x).exp() / mass1 - p2.ln_density(x).exp() / mass2 + opts.delta_jitter * z
        })
        .collect();
    let n = u.len() as f64;
    let ubar = mean(&u);
    let theta = i1 - i2 - 2.0 * ubar;
    let a_hat = (u.iter().map(|v| (v - ubar).powi(2)).sum::<f64>() / n).sqrt();
    let se = 2.0 * a_hat / n.sqrt();
    let (stat, p) = if se > 0.0 {
        let z = theta / se;
        (z, norm_sf(z))
    } else if opts.delta_jitter == 0.0 {
        return Err(Error::numerical("all L2 contributions are equal and no jitter was added"));
    } else {
        (0.0, 0.5)
    };
    let reject = opts.alpha > 0.0 && theta > z_upper(opts.alpha) * se;
    Ok(TestOutcome::new(Method::L2rift, stat, p, reject, opts.alpha)
        .with("theta_hat", theta)
        .with("a_hat", a_hat)
        .with("int_p1_sq", i1)
        .with("int_p2_sq", i2)
        .with("n_test", n))
}

pub fn l2rift(
    data: &DataMatrix,
    c: &FitConstraints,
    opts: &RiftOptions,
    integration: L2Integration,
    rng: &RngStream,
) -> Result<TestOutcome> {
    let f = fit_halves(data, c, opts, rng)?;
    Ok(l2rift_from_fits(&f.p1, &f.p2, &f.d2, opts, integration, &rng.derive(2))?.with("n_fit", f.n_fit as f64))
}

/// Monte-Carlo `KL(q*, p)` where `q*` is the moment-matched Gaussian of `p`.
pub fn kl_to_moment_match(p: &Mixture, draws: usize, rng: &RngStream) -> Result<f64> {
    let (m, cov) = p.moments();
    let q = Gaussian::new(m, cov)?;
    let mut g = rng.rng();
    let mut x = vec![0.0; q.dim()];
    let mut acc = 0.0;
    for _ in 0..draws {
        q.draw(&mut g, &mut x);
        acc += q.ln_density(&x) - p.ln_density(&x);
    }
    Ok(acc / draws as f64)
}

fn spread_means(p: &Mixture, s: f64, c: &FitConstraints) -> Result<Mixture> {
    let (centre, _) = p.moments();
    let comps = p
        .components()
        .iter()
        .map(|g| {
            let mut m: Vec<f64> = g.mean().iter().zip(&centre).map(|(a, b)| b + (1.0 + s) * (a - b)).collect();
            c.project_mean(&mut m);
            Gaussian::new(m, g.cov().clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Mixture::new(p.weights().to_vec(), comps)
}

/// Pushes the component means of `p` apart about the mixture mean until the
/// Monte-Carlo divergence from its moment-matched Gaussian reaches `delta`.
/// The same draws are reused at every scale.
pub fn enforce_separation(p: &Mixture, delta: f64, c: &FitConstraints, draws: usize, rng: &RngStream) -> Result<Mixture> {
    if delta <= 0.0 || kl_to_moment_match(p, draws, rng)? >= delta {
        return Ok(p.clone());
    }
    let spread = p.components().iter().any(|g| g.mean() != p.components()[0].mean());
    if !spread {
        return Err(Error::numerical("component means coincide; no direction to separate along"));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut found = false;
    for _ in 0..40 {
        if kl_to_moment_match(&spread_means(p, hi, c)?, draws, rng)? >= delta {
            found = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !found {
        return Err(Error::numerical("separation constraint could not be met inside the mean box"));
    }
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if kl_to_moment_match(&spread_means(p, mid, c)?, draws, rng)? >= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    spread_means(p, hi, c)
}

/// RIFT with the mixture fit held at divergence at least `delta` from every
/// single Gaussian, measured against its moment-matched Gaussian.
pub fn separated_mixture_test(
    data: &DataMatrix,
    c: &FitConstraints,
    delta: f64,
    opts: &RiftOptions,
    rng: &RngStream,
) -> Result<TestOutcome> {
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::invalid("separation must be a finite, non-negative number"));
    }
    let f = fit_halves(data, c, opts, rng)?;
    let p2 = enforce_separation(&f.p2, delta, c, 100_000, &rng.derive(3))?;
    let mut out = rift_from_fits(&f.p1, &p2, &f.d2, opts, &rng.derive(2))?;
    out.method = Method::Separated;
    Ok(out.with("separation", delta).with("n_fit", f.n_fit as f64))
}

#[derive(Clone, Debug)]
pub struct SigClustOptions {
    pub b: usize,
    pub alpha: f64,
    pub symmetric: bool,
    /// Simulate from the fitted Gaussian restricted to this region.
    pub region: Option<Region>,
    /// k-means restarts for every statistic.
    pub restarts: usize,
}

impl Default for SigClustOptions {
    fn default() -> Self {
        Self {
            b: 1000,
            alpha: 0.05,
            symmetric: false,
            region: None,
            restarts: 3,
        }
    }
}

fn sample_in_region(g: &Gaussian, region: &Region, n: usize, rng: &RngStream) -> Result<DataMatrix> {
    let d = g.dim();
    let mut r = rng.rng();
    let mut values = Vec::with_capacity(n * d);
    let mut x = vec![0.0; d];
    let (mut tried, mut kept) = (0usize, 0usize);
    while kept < n {
        g.draw(&mut r, &mut x);
        tried += 1;
        if region.contains(&x) {
            values.extend_from_slice(&x);
            kept += 1;
        }
        if tried >= 10_000 && (kept as f64) < 1e-4 * tried as f64 {
            return Err(Error::numerical("region acceptance rate below 1e-4; truncated simulation infeasible"));
        }
    }
    DataMatrix::new(n, d, values)
}

/// Parametric-bootstrap SigClust: `p = (1 + #{T* < T}) / (B + 1)`.
pub fn sigclust_bootstrap(data: &DataMatrix, opts: &SigClustOptions, rng: &RngStream) -> Result<TestOutcome> {
    if opts.b < 19 {
        return Err(Error::invalid("SigClust needs at least 19 bootstrap replicates"));
    }
    let n = data.rows();
    let c = FitConstraints::default_for(data);
    let g = fit_single_gaussian(data, &c);
    let t = sigclust_statistic(data, opts.symmetric, opts.restarts, &rng.derive(0))?;
    let region = opts.region.as_ref().filter(|r| !r.is_whole());
    let mut below = 0usize;
    for b in 0..opts.b {
        let s = rng.derive(1 + b as u64);
        let x = match region {
            Some(r) => sample_in_region(&g, r, n, &s.derive(0))?,
            None => crate::dist::mvn_sample(&g, n, &s.derive(0))?,
        };
        let tb = sigclust_statistic(&x, opts.symmetric, opts.restarts, &s.derive(1))?;
        if tb < t {
            below += 1;
        }
    }
    let p = (1 + below) as f64 / (opts.b + 1) as f64;
    let method = if region.is_some() || opts.region.is_some() {
        Method::SigclustTrunc
    } else {
        Method::Sigclust
    };
    Ok(TestOutcome::new(method, t, p, p < opts.alpha, opts.alpha)
        .with("b", opts.b as f64)
        .with("n_below", below as f64))
}

/// Mardia's kurtosis test with `S_n` (divisor n), two-sided at level `alpha`.
pub fn mardia(data: &DataMatrix, alpha: f64) -> Result<TestOutcome> {
    let (n, d) = (data.rows(), data.cols());
    if n <= d {
        return Err(Error::invalid("Mardia's test needs n > d"));
    }
    let g = Gaussian::new(data.mean(), data.cov_mle()).map_err(|_| Error::numerical("sample covariance is singular"))?;
    let b2 = data.iter_rows().map(|x| g.mahalanobis_sq(x).powi(2)).sum::<f64>() / n as f64;
    let df = (d * (d + 2)) as f64;
    let z = (n as f64).sqrt() * (b2 - df) / (8.0 * df).sqrt();
    let p = 2.0 * norm_sf(z.abs());
    let reject = alpha > 0.0 && z.abs() > z_upper(alpha / 2.0);
    Ok(TestOutcome::new(Method::Mardia, z, p, reject, alpha).with("b2", b2).with("n", n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NnVariant {
    Ks,
    Zstat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnOptions {
    pub variant: NnVariant,
    pub alpha: f64,
    pub split_ratio: f64,
    /// Parametric-bootstrap replicates for the KS distance; 0 uses the
    /// asymptotic Kolmogorov distribution.
    pub bootstrap: usize,
}

impl Default for NnOptions {
    fn default() -> Self {
        Self {
            variant: NnVariant::Ks,
            alpha: 0.05,
            split_ratio: 0.5,
            bootstrap: 200,
        }
    }
}

/// `W_i = exp(−n p̂0(X_i) K_d R_i^d)` over the rows of `d2`, with `R_i` the
/// nearest-neighbour distance inside `d2`.
pub fn nn_w_values(p0: &Gaussian, d2: &DataMatrix) -> Vec<f64> {
    let (n, d) = (d2.rows(), d2.cols());
    let df = d as f64;
    let ln_kd = 0.5 * df * std::f64::consts::PI.ln() - ln_gamma(0.5 * df + 1.0);
    let mut warned = false;
    (0..n)
        .map(|i| {
            let xi = d2.row(i);
            let mut best = f64::INFINITY;
            for j in 0..n {
                if j != i {
                    let s: f64 = xi.iter().zip(d2.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    best = best.min(s);
                }
            }
            let mut r = best.sqrt();
            if r == 0.0 {
                if !warned {
                    log::warn!("duplicate observations; nearest-neighbour distance set to 1e-12");
                    warned = true;
                }
                r = 1e-12;
            }
            let ln_d = p0.ln_density(xi) + ln_kd + df * r.ln();
            (-(n as f64) * ln_d.exp()).exp()
        })
        .collect()
}

fn nn_decide(p0: &Gaussian, d1_rows: usize, d2: &DataMatrix, c: &FitConstraints, opts: &NnOptions, rng: &RngStream) -> Result<TestOutcome> {
    if d2.rows() < 10 {
        return Err(Error::invalid("nearest-neighbour tests need at least 10 test points"));
    }
    let w = nn_w_values(p0, d2);
    let n = w.len();
    match opts.variant {
        NnVariant::Ks => {
            let dstat = ks_uniform_statistic(&w);
            let asym = ks_pvalue(dstat, n);
            let p = if opts.bootstrap == 0 {
                asym
            } else {
                let mut ge = 0usize;
                for b in 0..opts.bootstrap {
                    let s = rng.derive(b as u64);
                    let x1 = crate::dist::mvn_sample(p0, d1_rows, &s.derive(0))?;
                    let x2 = crate::dist::mvn_sample(p0, n, &s.derive(1))?;
                    let g = fit_single_gaussian(&x1, c);
                    if ks_uniform_statistic(&nn_w_values(&g, &x2)) >= dstat {
                        ge += 1;
                    }
                }
                (1 + ge) as f64 / (opts.bootstrap + 1) as f64
            };
            Ok(TestOutcome::new(Method::NnKs, dstat, p, p < opts.alpha, opts.alpha)
                .with("p_asymptotic", asym)
                .with("mean_w", mean(&w))
                .with("n_test", n as f64))
        }
        NnVariant::Zstat => {
            let sd = sd_sample(&w);
            let sum: f64 = w.iter().map(|v| v - 0.5).sum();
            let z = if sd > 0.0 { sum / (sd * (n as f64).sqrt()) } else { 0.0 };
            let p = 2.0 * norm_sf(z.abs());
            let reject = opts.alpha > 0.0 && z.abs() > z_upper(opts.alpha / 2.0);
            Ok(TestOutcome::new(Method::NnZ, z, p, reject, opts.alpha)
                .with("sd_w", sd)
                .with("mean_w", mean(&w))
                .with("n_test", n as f64))
        }
    }
}

/// Nearest-neighbour goodness-of-fit of `N(μ̂, Σ̂)` fitted on one half and
/// evaluated on the other.
pub fn nn_test(data: &DataMatrix, opts: &NnOptions, rng: &RngStream) -> Result<TestOutcome> {
    let halves = split_halves(data.rows(), opts.split_ratio, &rng.derive(0))?;
    let d1 = data.select_rows(&halves.d1_indices)?;
    let d2 = data.select_rows(&halves.d2_indices)?;
    let c = FitConstraints::default_for(&d1);
    let p0 = fit_single_gaussian(&d1, &c);
    nn_decide(&p0, d1.rows(), &d2, &c, opts, &rng.derive(1))
}

/// Settings for every method, used where the method is chosen at run time.
#[derive(Clone, Debug)]
pub struct MethodConfig {
    pub rift: RiftOptions,
    pub l2: L2Integration,
    pub sigclust_b: usize,
    pub sigclust_restarts: usize,
    pub sigclust_symmetric: bool,
    pub nn_bootstrap: usize,
    /// Divergence floor for [`Method::Separated`].
    pub separation: f64,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            rift: RiftOptions::default(),
            l2: L2Integration::ClosedForm,
            sigclust_b: 1000,
            sigclust_restarts: 3,
            sigclust_symmetric: false,
            nn_bootstrap: 200,
            separation: 0.01,
        }
    }
}

impl MethodConfig {
    fn rift_at(&self, alpha: f64, region: Option<&Region>) -> RiftOptions {
        RiftOptions {
            alpha,
            region: region.filter(|r| !r.is_whole()).cloned(),
            ..self.rift.clone()
        }
    }

    fn sigclust_at(&self, alpha: f64, region: Option<&Region>) -> SigClustOptions {
        SigClustOptions {
            b: self.sigclust_b,
            alpha,
            symmetric: self.sigclust_symmetric,
            region: region.cloned(),
            restarts: self.sigclust_restarts,
        }
    }

    fn nn_at(&self, method: Method, alpha: f64) -> NnOptions {
        NnOptions {
            variant: if method == Method::NnZ { NnVariant::Zstat } else { NnVariant::Ks },
            alpha,
            split_ratio: self.rift.split_ratio,
            bootstrap: self.nn_bootstrap,
        }
    }
}

/// Runs `method` on a whole sample at level `alpha`.
pub fn run_test(method: Method, data: &DataMatrix, c: &FitConstraints, alpha: f64, cfg: &MethodConfig, rng: &RngStream) -> Result<TestOutcome> {
    let ro = cfg.rift_at(alpha, None);
    match method {
        Method::Rift => rift(data, c, &ro, rng),
        Method::Mrift => mrift(data, c, &ro, rng),
        Method::L2rift => l2rift(data, c, &ro, cfg.l2, rng),
        Method::Separated => separated_mixture_test(data, c, cfg.separation, &ro, rng),
        Method::Sigclust | Method::SigclustTrunc => sigclust_bootstrap(data, &cfg.sigclust_at(alpha, None), rng),
        Method::Mardia => mardia(data, alpha),
        Method::NnKs | Method::NnZ => nn_test(data, &cfg.nn_at(method, alpha), rng),
    }
}

/// Runs `method` at a tree node. `split` is the mixture fitted on the node's
/// fitting rows `d1`; `region` is the node's cell. RIFT-family methods compare
/// a Gaussian fitted on `d1` with `split`, both truncated to `region`, on the
/// test rows `d2`. SigClust and Mardia use `d2` alone; the truncated SigClust
/// simulates inside `region`.
#[allow(clippy::too_many_arguments)]
pub fn node_test(
    method: Method,
    d1: &DataMatrix,
    d2: &DataMatrix,
    split: &Mixture,
    region: &Region,
    c: &FitConstraints,
    alpha: f64,
    cfg: &MethodConfig,
    rng: &RngStream,
) -> Result<TestOutcome> {
    let ro = cfg.rift_at(alpha, Some(region));
    let p1 = || fit_single_gaussian(d1, c);
    match method {
        Method::Rift => rift_from_fits(&p1(), split, d2, &ro, rng),
        Method::Mrift => mrift_from_fits(&p1(), split, d2, &ro, rng),
        Method::L2rift => l2rift_from_fits(&p1(), split, d2, &ro, cfg.l2, rng),
        Method::Separated => {
            let p2 = enforce_separation(split, cfg.separation, c, 100_000, &rng.derive(3))?;
            let mut out = rift_from_fits(&p1(), &p2, d2, &ro, rng)?;
            out.method = Method::Separated;
            Ok(out)
        }
        Method::Sigclust => sigclust_bootstrap(d2, &cfg.sigclust_at(alpha, None), rng),
        Method::SigclustTrunc => sigclust_bootstrap(d2, &cfg.sigclust_at(alpha, Some(region)), rng),
        Method::Mardia => mardia(d2, alpha),
        Method::NnKs | Method::NnZ => nn_decide(&p1(), d1.rows(), d2, c, &cfg.nn_at(method, alpha), rng),
    }
}
