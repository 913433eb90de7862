//! Closed-form asymptotics for 2-means and the SigClust power curve under
//! the model `½N(−θ, D) + ½N(θ, D)` with `θ = (a/2, 0, …, 0)` and diagonal `D`.

use std::f64::consts::{FRAC_2_PI, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::integrate;
use crate::special::{norm_cdf, norm_pdf, norm_ppf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoryParams {
    /// Diagonal of `D`, `σ_1², …, σ_d²`.
    pub sigmas_sq: Vec<f64>,
    /// Distance between the two component means.
    pub a: f64,
    pub n: usize,
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Optimal split is orthogonal to the first coordinate.
    FirstCoord,
    /// Optimal split is orthogonal to the second coordinate.
    SecondCoord,
    /// Between the two sufficient conditions, or on a boundary.
    Indeterminate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeResult {
    pub regime: Regime,
    /// Population within-cluster mean square of the optimal symmetric split.
    pub w1: f64,
    /// Asymptotic variance of `√n · W_n^(0)`.
    pub tau1_sq: f64,
    /// For [`Regime::Indeterminate`], the coordinate (1 or 2) whose candidate
    /// split gave the reported values.
    pub candidate: usize,
}

fn check_variances(s: &[f64]) -> Result<()> {
    if s.is_empty() {
        return Err(Error::invalid("need at least one variance"));
    }
    if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::invalid("variances must be positive and finite"));
    }
    Ok(())
}

fn sum(s: &[f64]) -> f64 {
    s.iter().sum()
}

fn sum_sq(s: &[f64]) -> f64 {
    s.iter().map(|v| v * v).sum()
}

/// Null limit of 2-means on `N(0, D)`: `W = Σσ_i² − 2σ_1²/π` and
/// `τ² = 2Σσ_i⁴ − 16σ_1⁴/π²`.
pub fn null_moments(sigmas_sq: &[f64]) -> Result<(f64, f64)> {
    check_variances(sigmas_sq)?;
    let s1 = sigmas_sq[0];
    if sigmas_sq[1..].iter().any(|&v| v >= s1) {
        return Err(Error::invalid("the first variance must be strictly largest"));
    }
    let w = sum(sigmas_sq) - FRAC_2_PI * s1;
    let tau = 2.0 * sum_sq(sigmas_sq) - 16.0 * s1 * s1 / (PI * PI);
    Ok((w, tau))
}

/// `E[Y | Y > 0]` for `Y ~ ½N(−a/2, σ_1²) + ½N(a/2, σ_1²)`.
pub fn kappa(a: f64, sigma1_sq: f64) -> f64 {
    let s = sigma1_sq.sqrt();
    let u = a / (2.0 * s);
    0.5 * a * (2.0 * norm_cdf(u) - 1.0) + (FRAC_2_PI).sqrt() * s * (-0.5 * u * u).exp()
}

/// The two thresholds on `σ_2²` above which the optimal split moves to the
/// second coordinate.
pub fn second_coord_thresholds(a: f64, sigma1_sq: f64) -> (f64, f64) {
    let s4 = sigma1_sq * sigma1_sq;
    let a2 = a * a;
    let a4 = a2 * a2;
    let t1 = (2.0 * s4 + a4 / 16.0 + 0.5 * a2 * (s4 + a4 / 64.0).sqrt()) / (2.0 * sigma1_sq);
    let k = kappa(a, sigma1_sq);
    (t1, 0.5 * PI * k * k)
}

/// `var((|X| − m)²)` where `X ~ ½N(−μ, σ²) + ½N(μ, σ²)` and `m = E|X|`,
/// by quadrature of the folded density on `[0, μ + 12σ]`.
pub fn folded_sq_dev_variance(mu: f64, sigma_sq: f64) -> f64 {
    let s = sigma_sq.sqrt();
    let dens = |y: f64| (norm_pdf((y - mu) / s) + norm_pdf((y + mu) / s)) / s;
    let hi = mu + 12.0 * s;
    let tol = 1e-10;
    let m = integrate(|y| y * dens(y), 0.0, hi, tol);
    let m2 = integrate(|y| (y - m).powi(2) * dens(y), 0.0, hi, tol);
    let m4 = integrate(|y| (y - m).powi(4) * dens(y), 0.0, hi, tol);
    m4 - m2 * m2
}

fn check_alt(p: &TheoryParams) -> Result<()> {
    check_variances(&p.sigmas_sq)?;
    if p.sigmas_sq.len() < 2 {
        return Err(Error::invalid("the alternative model needs d >= 2"));
    }
    if !(p.a >= 0.0 && p.a.is_finite()) {
        return Err(Error::invalid("separation a must be finite and non-negative"));
    }
    let (s1, s2) = (p.sigmas_sq[0], p.sigmas_sq[1]);
    let rest = &p.sigmas_sq[2..];
    if rest.iter().any(|&v| v >= s1 || v >= s2) {
        return Err(Error::invalid("σ_1² and σ_2² must exceed every later variance"));
    }
    if rest.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::invalid("σ_3², …, σ_d² must be non-increasing"));
    }
    Ok(())
}

fn first_candidate(p: &TheoryParams) -> (f64, f64) {
    let s = &p.sigmas_sq;
    let k = kappa(p.a, s[0]);
    let w = sum(s) + p.a * p.a / 4.0 - k * k;
    let tau = 2.0 * sum_sq(&s[1..]) + folded_sq_dev_variance(p.a / 2.0, s[0]);
    (w, tau)
}

fn second_candidate(p: &TheoryParams) -> (f64, f64) {
    let s = &p.sigmas_sq;
    let w = sum(s) + p.a * p.a / 4.0 - FRAC_2_PI * s[1];
    let others: f64 = s.iter().enumerate().filter(|(j, _)| *j != 1).map(|(_, v)| v * v).sum();
    let tau = 2.0 * others + s[0] * p.a * p.a + folded_sq_dev_variance(0.0, s[1]);
    (w, tau)
}

/// Optimal symmetric 2-means split under the alternative, its within-cluster
/// mean square and the variance of its fluctuations.
pub fn alt_split(p: &TheoryParams) -> Result<RegimeResult> {
    check_alt(p)?;
    let (s1, s2) = (p.sigmas_sq[0], p.sigmas_sq[1]);
    let (t1, t2) = second_coord_thresholds(p.a, s1);
    let (regime, candidate) = if s2 < s1 + p.a * p.a / 4.0 {
        (Regime::FirstCoord, 1)
    } else if s2 > t1.max(t2) {
        (Regime::SecondCoord, 2)
    } else {
        let (w_a, _) = first_candidate(p);
        let (w_b, _) = second_candidate(p);
        (Regime::Indeterminate, if w_a <= w_b { 1 } else { 2 })
    };
    let (w1, tau1_sq) = if candidate == 1 { first_candidate(p) } else { second_candidate(p) };
    Ok(RegimeResult {
        regime,
        w1,
        tau1_sq,
        candidate,
    })
}

/// Moments of 2-means under the Gaussian with the alternative's covariance,
/// `diag(σ_1² + a²/4, σ_2², …)`.
pub fn null_moments_shifted(p: &TheoryParams) -> Result<(f64, f64)> {
    check_alt(p)?;
    let s = &p.sigmas_sq;
    let first = s[0] + p.a * p.a / 4.0;
    let top = first.max(s[1]);
    let total = sum(s) + p.a * p.a / 4.0;
    let w0 = total - FRAC_2_PI * top;
    let tau0 = 2.0 * sum_sq(&s[1..]) + 2.0 * first * first - 16.0 / (PI * PI) * top * top;
    Ok((w0, tau0))
}

/// Asymptotic power `Φ(τ_0 Φ⁻¹(α)/τ_1 + √n (W_0 − W_1)/τ_1)` of the
/// symmetric SigClust test.
pub fn asymptotic_power(p: &TheoryParams) -> Result<f64> {
    if !(p.alpha > 0.0 && p.alpha < 1.0) {
        return Err(Error::invalid("alpha must lie in (0, 1)"));
    }
    let alt = alt_split(p)?;
    if alt.regime == Regime::Indeterminate {
        return Err(Error::invalid(
            "σ_2² lies between the two regime conditions; the optimal split is not characterised and no power is available",
        ));
    }
    let (w0, tau0_sq) = null_moments_shifted(p)?;
    Ok(power_from_moments(w0, tau0_sq, alt.w1, alt.tau1_sq, p.n, p.alpha))
}

/// The power formula given the four moments directly.
pub fn power_from_moments(w0: f64, tau0_sq: f64, w1: f64, tau1_sq: f64, n: usize, alpha: f64) -> f64 {
    let (t0, t1) = (tau0_sq.sqrt(), tau1_sq.sqrt());
    norm_cdf(t0 * norm_ppf(alpha) / t1 + (n as f64).sqrt() * (w0 - w1) / t1)
}

/// `κ² − (2/π)(σ_1² + a²/4)` together with its lower bound
/// `a⁴/(240σ_1²π)` for `a ≤ 4σ_1` and `a²/40` beyond.
pub fn kappa_gap_bound(a: f64, sigma1_sq: f64) -> (f64, f64) {
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let k = kappa(a, sigma1_sq);
    let gap = k * k - FRAC_2_PI * (sigma1_sq + a * a / 4.0);
    let bound = if a <= 4.0 * sigma1_sq.sqrt() {
        a.powi(4) / (240.0 * sigma1_sq * PI)
    } else {
        a * a / 40.0
    };
    (gap, bound)
}
