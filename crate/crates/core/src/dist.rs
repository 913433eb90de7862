//! Data container, Gaussian and mixture densities, constrained fitting,
//! sampling and Monte-Carlo region masses.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::special::log_sum_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Row-major `n × d` matrix of observations.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::invalid("data matrix needs at least one row and one column"));
        }
        if values.len() != n * d {
            return Err(Error::DimensionMismatch {
                expected: n * d,
                got: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column {}",
                pos / d,
                pos % d
            )));
        }
        Ok(Self { n, d, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(rows.len(), d, values)
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }

    /// New matrix holding the listed rows, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Result<DataMatrix> {
        let mut values = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            if i >= self.n {
                return Err(Error::invalid(format!("row index {i} out of range (n = {})", self.n)));
            }
            values.extend_from_slice(self.row(i));
        }
        DataMatrix::new(idx.len(), self.d, values)
    }

    pub fn select_cols(&self, cols: &[usize]) -> Result<DataMatrix> {
        let mut values = Vec::with_capacity(self.n * cols.len());
        for r in self.iter_rows() {
            for &j in cols {
                values.push(r[j]);
            }
        }
        DataMatrix::new(self.n, cols.len(), values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<DataMatrix> {
        DataMatrix::new(self.n, self.d, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for r in self.iter_rows() {
            for (a, b) in m.iter_mut().zip(r) {
                *a += b;
            }
        }
        let n = self.n as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }

    /// Covariance about the sample mean with divisor `n`.
    pub fn cov_mle(&self) -> DMatrix<f64> {
        let w = vec![1.0; self.n];
        weighted_moments(self, &w).1
    }

    /// Mean squared distance to the sample mean, `(1/n) Σ ‖x_i − x̄‖²`.
    pub fn total_ss(&self) -> f64 {
        let m = self.mean();
        self.iter_rows()
            .map(|r| r.iter().zip(&m).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / self.n as f64
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.values)
    }
}

fn weighted_moments(data: &DataMatrix, w: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let d = data.cols();
    let total: f64 = w.iter().sum();
    let mut mean = vec![0.0; d];
    for (r, &wi) in data.iter_rows().zip(w) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += wi * x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (r, &wi) in data.iter_rows().zip(w) {
        if wi == 0.0 {
            continue;
        }
        for j in 0..d {
            diff[j] = r[j] - mean[j];
        }
        for a in 0..d {
            let da = wi * diff[a];
            for b in 0..=a {
                cov[(a, b)] += da * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..=a {
            let v = cov[(a, b)] / total;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Anything with a log density that can also be sampled.
pub trait Density: Sync {
    fn dim(&self) -> usize;
    /// Log density at `x`; `x.len()` must equal [`Density::dim`].
    fn ln_density(&self, x: &[f64]) -> f64;
    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]);
}

/// Multivariate normal with a cached Cholesky factor.
#[derive(Clone, Debug)]
pub struct Gaussian {
    mean: Vec<f64>,
    cov: DMatrix<f64>,
    // row-major lower-triangular factor, L L^T = cov
    chol: Vec<f64>,
    ln_det: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("zero-dimensional Gaussian"));
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: cov.nrows(),
            });
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite Gaussian parameter"));
        }
        let scale = cov.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for a in 0..d {
            for b in 0..a {
                if (cov[(a, b)] - cov[(b, a)]).abs() > 1e-10 * scale {
                    return Err(Error::invalid("covariance is not symmetric"));
                }
            }
        }
        let sym = (&cov + cov.transpose()) * 0.5;
        let l = sym.clone().cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
        let mut chol = vec![0.0; d * d];
        let mut ln_det = 0.0;
        for a in 0..d {
            for b in 0..=a {
                chol[a * d + b] = l[(a, b)];
            }
            ln_det += 2.0 * l[(a, a)].ln();
        }
        Ok(Self {
            mean,
            cov: sym,
            chol,
            ln_det,
        })
    }

    pub fn standard(d: usize) -> Self {
        Self::new(vec![0.0; d], DMatrix::identity(d, d)).expect("identity is positive definite")
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn ln_det(&self) -> f64 {
        self.ln_det
    }

    /// `(x − μ)ᵀ Σ⁻¹ (x − μ)` by forward substitution.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut z = vec![0.0; d];
        let mut q = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let mut s = x[i] - self.mean[i];
            for (l, zj) in row.iter().zip(&z) {
                s -= l * zj;
            }
            let zi = s / self.chol[i * d + i];
            z[i] = zi;
            q += zi * zi;
        }
        q
    }

    /// Writes `μ + L z` for the given standard-normal vector `z`.
    pub fn transform(&self, z: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for i in 0..d {
            let row = &self.chol[i * d..=i * d + i];
            out[i] = self.mean[i] + row.iter().zip(z).map(|(l, v)| l * v).sum::<f64>();
        }
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.ln_density(x))
    }
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        -0.5 * (self.mean.len() as f64 * LN_2PI + self.ln_det + self.mahalanobis_sq(x))
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        self.transform(&z, out);
    }
}

/// Finite Gaussian mixture.
#[derive(Clone, Debug)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl Mixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.dim(),
            });
        }
        Ok(Self { weights, components })
    }

    pub fn single(g: Gaussian) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![g],
        }
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    /// `ln w_j + ln N_j(x)` for every component.
    pub fn ln_joint(&self, x: &[f64], out: &mut [f64]) {
        for ((o, w), c) in out.iter_mut().zip(&self.weights).zip(&self.components) {
            *o = if *w > 0.0 {
                w.ln() + c.ln_density(x)
            } else {
                f64::NEG_INFINITY
            };
        }
    }

    /// Branch chosen by a two-component split rule: left when
    /// `w_0 N_0(x) ≥ w_1 N_1(x)`.
    pub fn branch_of(&self, x: &[f64]) -> Branch {
        let mut j = [0.0; 2];
        self.ln_joint(x, &mut j);
        if j[0] >= j[1] {
            Branch::Left
        } else {
            Branch::Right
        }
    }

    /// Overall mean and covariance of the mixture.
    pub fn moments(&self) -> (Vec<f64>, DMatrix<f64>) {
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (m, v) in mean.iter_mut().zip(c.mean()) {
                *m += w * v;
            }
        }
        let mut cov = DMatrix::zeros(d, d);
        for (w, c) in self.weights.iter().zip(&self.components) {
            let diff: Vec<f64> = c.mean().iter().zip(&mean).map(|(a, b)| a - b).collect();
            for a in 0..d {
                for b in 0..d {
                    cov[(a, b)] += w * (c.cov()[(a, b)] + diff[a] * diff[b]);
                }
            }
        }
        (mean, cov)
    }

    pub fn logpdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.ln_density(x))
    }

    fn pick(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return j;
            }
        }
        self.weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        self.components[0].dim()
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let mut j = vec![0.0; self.k()];
        self.ln_joint(x, &mut j);
        log_sum_exp(&j)
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let j = self.pick(rng.random::<f64>());
        self.components[j].draw(rng, out);
    }
}

/// Multivariate Student t with location, scale matrix and degrees of freedom.
#[derive(Clone, Debug)]
pub struct MultivariateT {
    base: Gaussian,
    dof: f64,
    ln_norm: f64,
}

impl MultivariateT {
    pub fn new(loc: Vec<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !(dof > 0.0 && dof.is_finite()) {
            return Err(Error::invalid("degrees of freedom must be positive"));
        }
        let base = Gaussian::new(loc, scale)?;
        let d = base.dim() as f64;
        let ln_norm = ln_gamma((dof + d) / 2.0)
            - ln_gamma(dof / 2.0)
            - 0.5 * d * (dof * std::f64::consts::PI).ln()
            - 0.5 * base.ln_det();
        Ok(Self { base, dof, ln_norm })
    }
}

impl Density for MultivariateT {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let q = self.base.mahalanobis_sq(x);
        self.ln_norm - 0.5 * (self.dof + self.dim() as f64) * (q / self.dof).ln_1p()
    }

    fn draw(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let d = self.dim();
        let chi = ChiSquared::new(self.dof).expect("positive dof");
        let s = (chi.sample(rng) / self.dof).sqrt();
        let z: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) / s).collect();
        self.base.transform(&z, out);
    }
}

/// Box for the mean and clamp interval for covariance eigenvalues.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConstraints {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
}

impl FitConstraints {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, c1: f64, c2: f64) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("mean box bounds must have equal, non-zero length"));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::invalid("mean box bounds must be finite"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            return Err(Error::invalid("mean box has lower > upper"));
        }
        if !(c1 > 0.0 && c1 <= c2 && c2.is_finite()) {
            return Err(Error::invalid("eigenvalue interval needs 0 < c1 <= c2"));
        }
        Ok(Self { lower, upper, c1, c2 })
    }

    /// Defaults that only bind in degenerate cases: the bounding box inflated
    /// tenfold about its centre, and `[1e-6, 1e6] · tr(Σ̂)/d`.
    pub fn default_for(data: &DataMatrix) -> Self {
        let d = data.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for r in data.iter_rows() {
            for j in 0..d {
                lo[j] = lo[j].min(r[j]);
                hi[j] = hi[j].max(r[j]);
            }
        }
        let (lower, upper) = lo
            .iter()
            .zip(&hi)
            .map(|(l, h)| {
                let c = 0.5 * (l + h);
                let half = 0.5 * (h - l);
                (c - 10.0 * half, c + 10.0 * half)
            })
            .unzip();
        let cov = data.cov_mle();
        let mut s = cov.trace() / d as f64;
        if !(s > 0.0) {
            s = 1.0;
        }
        Self {
            lower,
            upper,
            c1: 1e-6 * s,
            c2: 1e6 * s,
        }
    }

    /// Constraints matching data multiplied by `s > 0`.
    pub fn rescaled(&self, s: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if s >= 0.0 { (l * s, u * s) } else { (u * s, l * s) })
            .unzip();
        Self {
            lower,
            upper,
            c1: self.c1 * s * s,
            c2: self.c2 * s * s,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn project_mean(&self, m: &mut [f64]) {
        for ((v, l), u) in m.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    /// Eigen-decomposes `cov` and clamps its spectrum into `[c1, c2]`.
    pub fn clamp_cov(&self, cov: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
        if eig.eigenvalues.iter().all(|&e| e >= self.c1 && e <= self.c2) {
            return (cov + cov.transpose()) * 0.5;
        }
        let vals = eig.eigenvalues.map(|e| e.clamp(self.c1, self.c2));
        let v = &eig.eigenvectors;
        let m = v * DMatrix::from_diagonal(&vals) * v.transpose();
        (&m + m.transpose()) * 0.5
    }

    pub fn satisfied_by(&self, g: &Gaussian) -> bool {
        let inside = g
            .mean()
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(m, (l, u))| *m >= *l && *m <= *u);
        let eig = SymmetricEigen::new(g.cov().clone());
        let tol = 1e-9 * self.c2;
        inside
            && eig
                .eigenvalues
                .iter()
                .all(|&e| e >= self.c1 * (1.0 - 1e-6) && e <= self.c2 + tol)
    }
}

fn gaussian_from_clamped(mut mean: Vec<f64>, cov: &DMatrix<f64>, c: &FitConstraints) -> Gaussian {
    c.project_mean(&mut mean);
    let clamped = c.clamp_cov(cov);
    match Gaussian::new(mean.clone(), clamped.clone()) {
        Ok(g) => g,
        Err(_) => {
            // round-off after reconstruction; lift the spectrum slightly
            let d = mean.len();
            let lifted = clamped + DMatrix::<f64>::identity(d, d) * c.c1;
            Gaussian::new(mean, lifted).expect("lifted covariance is positive definite")
        }
    }
}

/// Closed-form constrained Gaussian MLE.
pub fn fit_single_gaussian(data: &DataMatrix, c: &FitConstraints) -> Gaussian {
    fit_weighted_gaussian(data, &vec![1.0; data.rows()], c)
}

/// Weighted MLE (divisor `Σ w_i`) with the same projection and clamp.
pub fn fit_weighted_gaussian(data: &DataMatrix, w: &[f64], c: &FitConstraints) -> Gaussian {
    let (mean, cov) = weighted_moments(data, w);
    gaussian_from_clamped(mean, &cov, c)
}

pub fn mvn_logpdf(x: &[f64], g: &Gaussian) -> Result<f64> {
    g.logpdf(x)
}

pub fn mixture_logpdf(x: &[f64], m: &Mixture) -> Result<f64> {
    m.logpdf(x)
}

/// `n` draws from any density using a fresh generator for `rng`.
pub fn sample<D: Density + ?Sized>(dist: &D, n: usize, rng: &RngStream) -> Result<DataMatrix> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = dist.dim();
    let mut r = rng.rng();
    let mut values = vec![0.0; n * d];
    for row in values.chunks_exact_mut(d) {
        dist.draw(&mut r, row);
    }
    DataMatrix::new(n, d, values)
}

pub fn mvn_sample(g: &Gaussian, n: usize, rng: &RngStream) -> Result<DataMatrix> {
    sample(g, n, rng)
}

/// Draws from a mixture together with the generating component of each row.
pub fn mixture_sample(m: &Mixture, n: usize, rng: &RngStream) -> Result<(DataMatrix, Vec<usize>)> {
    if n == 0 {
        return Err(Error::invalid("sample size must be at least 1"));
    }
    let d = m.dim();
    let mut r = rng.rng();
    let mut values = vec![0.0; n * d];
    let mut labels = Vec::with_capacity(n);
    for row in values.chunks_exact_mut(d) {
        let j = m.pick(r.random::<f64>());
        m.components[j].draw(&mut r, row);
        labels.push(j);
    }
    Ok((DataMatrix::new(n, d, values)?, labels))
}

/// `∫ N(x; μ1, Σ1) N(x; μ2, Σ2) dx`, the density of `N(0, Σ1 + Σ2)` at `μ1 − μ2`.
pub fn gaussian_l2_cross(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    if g1.dim() != g2.dim() {
        return Err(Error::DimensionMismatch {
            expected: g1.dim(),
            got: g2.dim(),
        });
    }
    let sum = g1.cov() + g2.cov();
    let g = Gaussian::new(vec![0.0; g1.dim()], sum)?;
    let diff: Vec<f64> = g1.mean().iter().zip(g2.mean()).map(|(a, b)| a - b).collect();
    Ok(g.ln_density(&diff).exp())
}

/// `∫ p q` for two mixtures, summed over component pairs.
pub fn mixture_l2_cross(p: &Mixture, q: &Mixture) -> Result<f64> {
    let mut s = 0.0;
    for (wa, a) in p.weights().iter().zip(p.components()) {
        for (wb, b) in q.weights().iter().zip(q.components()) {
            if *wa > 0.0 && *wb > 0.0 {
                s += wa * wb * gaussian_l2_cross(a, b)?;
            }
        }
    }
    Ok(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Left,
    Right,
}

#[derive(Clone, Debug)]
pub struct RouteStep {
    pub split: Mixture,
    pub branch: Branch,
}

/// Subset of R^d reached by following a sequence of two-component splits.
/// The empty route is the whole space.
#[derive(Clone, Debug, Default)]
pub struct Region {
    route: Vec<RouteStep>,
}

impl Region {
    pub fn whole() -> Self {
        Self { route: Vec::new() }
    }

    pub fn from_route(route: Vec<RouteStep>) -> Result<Self> {
        if route.iter().any(|s| s.split.k() != 2) {
            return Err(Error::invalid("every split rule needs exactly two components"));
        }
        Ok(Self { route })
    }

    /// This region intersected with one side of `split`.
    pub fn child(&self, split: &Mixture, branch: Branch) -> Result<Region> {
        if split.k() != 2 {
            return Err(Error::invalid("every split rule needs exactly two components"));
        }
        let mut route = self.route.clone();
        route.push(RouteStep {
            split: split.clone(),
            branch,
        });
        Ok(Self { route })
    }

    pub fn route(&self) -> &[RouteStep] {
        &self.route
    }

    pub fn is_whole(&self) -> bool {
        self.route.is_empty()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.route.iter().all(|s| s.split.branch_of(x) == s.branch)
    }
}

/// Fraction of `m` draws from `dist` that land in `region`. The whole space
/// returns exactly 1 without drawing.
pub fn estimate_region_mass<D: Density + ?Sized>(dist: &D, region: &Region, m: usize, rng: &RngStream) -> f64 {
    if region.is_whole() || m == 0 {
        return 1.0;
    }
    let mut r = rng.rng();
    let mut x = vec![0.0; dist.dim()];
    let mut hits = 0usize;
    for _ in 0..m {
        dist.draw(&mut r, &mut x);
        if region.contains(&x) {
            hits += 1;
        }
    }
    hits as f64 / m as f64
}
