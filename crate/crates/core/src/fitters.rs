//! EM for Gaussian mixtures, Lloyd 2-means, symmetric 2-means and the
//! SigClust cluster index.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{fit_single_gaussian, fit_weighted_gaussian, DataMatrix, Density, FitConstraints, Gaussian, Mixture};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamRng};
use crate::special::log_sum_exp;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmInit {
    /// Hard assignments from k-means++ seeding and Lloyd steps on whitened data.
    KmeansSeeded,
    /// Independent uniform responsibilities, normalised per row.
    RandomResponsibility,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iter: usize,
    /// Change in mean log-likelihood per observation that stops iteration.
    pub tol: f64,
    pub restarts: usize,
    pub init: EmInit,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            restarts: 3,
            init: EmInit::KmeansSeeded,
        }
    }
}

impl EmOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 || self.restarts == 0 || !(self.tol > 0.0) {
            return Err(Error::invalid("EM needs max_iter >= 1, restarts >= 1 and tol > 0"));
        }
        Ok(())
    }
}

/// Sum of mixture log densities over the rows of `data`.
pub fn loglik(m: &Mixture, data: &DataMatrix) -> Result<f64> {
    if m.dim() != data.cols() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: data.cols(),
        });
    }
    Ok(data.iter_rows().map(|r| m.ln_density(r)).sum())
}

/// Fits a `k`-component mixture by EM, keeping the best of `opts.restarts`
/// runs by final log-likelihood.
pub fn em_fit(data: &DataMatrix, k: usize, c: &FitConstraints, opts: &EmOptions, rng: &RngStream) -> Result<Mixture> {
    em_fit_traced(data, k, c, opts, rng).map(|(m, _)| m)
}

/// As [`em_fit`], also returning the log-likelihood after every iteration of
/// the winning run.
pub fn em_fit_traced(
    data: &DataMatrix,
    k: usize,
    c: &FitConstraints,
    opts: &EmOptions,
    rng: &RngStream,
) -> Result<(Mixture, Vec<f64>)> {
    opts.validate()?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if data.rows() < k {
        return Err(Error::invalid(format!("EM needs n >= k (n = {}, k = {k})", data.rows())));
    }
    if c.dim() != data.cols() {
        return Err(Error::DimensionMismatch {
            expected: data.cols(),
            got: c.dim(),
        });
    }
    if k == 1 {
        let m = Mixture::single(fit_single_gaussian(data, c));
        let ll = loglik(&m, data)?;
        return Ok((m, vec![ll]));
    }
    let white = whiten(data);
    let mut best: Option<(Mixture, Vec<f64>)> = None;
    for r in 0..opts.restarts {
        let mut g = rng.derive(r as u64).rng();
        let resp = match opts.init {
            EmInit::KmeansSeeded => {
                // alternate whitened and raw coordinates; EM keeps the best likelihood
                let space = if r % 2 == 0 { &white } else { data };
                let labels = lloyd_best(space, k, &mut g, LLOYD_TRIES);
                let mut resp = vec![0.0; data.rows() * k];
                for (i, &l) in labels.iter().enumerate() {
                    resp[i * k + l] = 1.0;
                }
                resp
            }
            EmInit::RandomResponsibility => {
                let mut resp: Vec<f64> = (0..data.rows() * k).map(|_| g.random::<f64>() + 1e-3).collect();
                for row in resp.chunks_exact_mut(k) {
                    let s: f64 = row.iter().sum();
                    row.iter_mut().for_each(|v| *v /= s);
                }
                resp
            }
        };
        let (m, trace) = em_run(data, k, c, opts, resp)?;
        let ll = *trace.last().expect("at least one iteration");
        if best.as_ref().map_or(true, |(_, t)| ll > *t.last().unwrap()) {
            best = Some((m, trace));
        }
    }
    Ok(best.expect("restarts >= 1"))
}

fn m_step(data: &DataMatrix, k: usize, c: &FitConstraints, resp: &[f64], prev: Option<&Mixture>) -> Result<Mixture> {
    let n = data.rows();
    let mut totals = vec![0.0; k];
    for row in resp.chunks_exact(k) {
        for (t, r) in totals.iter_mut().zip(row) {
            *t += r;
        }
    }
    let mut comps = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    let floor = 1e-8 * n as f64;
    for j in 0..k {
        if totals[j] > floor {
            let w: Vec<f64> = resp.chunks_exact(k).map(|row| row[j]).collect();
            comps.push(fit_weighted_gaussian(data, &w, c));
            weights.push(totals[j] / n as f64);
        } else {
            // empty component: restart it at the worst-explained point
            let far = farthest_point(data, prev, &comps);
            let mut mean = data.row(far).to_vec();
            c.project_mean(&mut mean);
            let cov = c.clamp_cov(&data.cov_mle());
            comps.push(Gaussian::new(mean, cov)?);
            weights.push(1.0 / n as f64);
        }
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Mixture::new(weights, comps)
}

fn farthest_point(data: &DataMatrix, prev: Option<&Mixture>, comps: &[Gaussian]) -> usize {
    let score = |r: &[f64]| -> f64 {
        match prev {
            Some(m) => m.ln_density(r),
            None if !comps.is_empty() => comps.iter().map(|g| g.ln_density(r)).fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    };
    let mut best = (0, f64::INFINITY);
    for (i, r) in data.iter_rows().enumerate() {
        let s = score(r);
        if s < best.1 {
            best = (i, s);
        }
    }
    best.0
}

fn e_step(data: &DataMatrix, m: &Mixture, resp: &mut [f64]) -> f64 {
    let k = m.k();
    let mut ll = 0.0;
    for (r, row) in data.iter_rows().zip(resp.chunks_exact_mut(k)) {
        m.ln_joint(r, row);
        let lse = log_sum_exp(row);
        ll += lse;
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    ll
}

fn em_run(data: &DataMatrix, k: usize, c: &FitConstraints, opts: &EmOptions, mut resp: Vec<f64>) -> Result<(Mixture, Vec<f64>)> {
    let mut m = m_step(data, k, c, &resp, None)?;
    let mut trace = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..opts.max_iter {
        let ll = e_step(data, &m, &mut resp);
        trace.push(ll);
        if ll.is_finite() && prev.is_finite() && (ll - prev).abs() <= opts.tol * data.rows() as f64 {
            break;
        }
        prev = ll;
        m = m_step(data, k, c, &resp, Some(&m))?;
    }
    let ll = loglik(&m, data)?;
    if !ll.is_finite() {
        return Err(Error::numerical("EM produced a non-finite log-likelihood"));
    }
    if trace.last() != Some(&ll) {
        trace.push(ll);
    }
    Ok((m, trace))
}

/// Data mapped through `Σ̂^{-1/2}` about the mean, which makes k-means seeding
/// affine invariant. Falls back to raw data when `n` is small relative to `d`.
fn whiten(data: &DataMatrix) -> DataMatrix {
    let (n, d) = (data.rows(), data.cols());
    if n < 5 * d {
        return data.clone();
    }
    let eig = SymmetricEigen::new(data.cov_mle());
    let top = eig.eigenvalues.max();
    if !(top > 0.0) {
        return data.clone();
    }
    let inv = eig.eigenvalues.map(|e| 1.0 / e.max(1e-12 * top).sqrt());
    let w = &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose();
    let mean = data.mean();
    let mut values = Vec::with_capacity(n * d);
    let mut diff = vec![0.0; d];
    for r in data.iter_rows() {
        for j in 0..d {
            diff[j] = r[j] - mean[j];
        }
        for a in 0..d {
            values.push((0..d).map(|b| w[(a, b)] * diff[b]).sum());
        }
    }
    DataMatrix::new(n, d, values).unwrap_or_else(|_| data.clone())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding.
fn plusplus(data: &DataMatrix, k: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
    let n = data.rows();
    let mut centers = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut dist: Vec<f64> = data.iter_rows().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut idx = n - 1;
            for (i, d) in dist.iter().enumerate() {
                acc += d;
                if u < acc {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (dv, r) in dist.iter_mut().zip(data.iter_rows()) {
            *dv = dv.min(sq_dist(r, &c));
        }
        centers.push(c);
    }
    centers
}

fn assign(data: &DataMatrix, centers: &[Vec<f64>], labels: &mut [usize]) -> (bool, f64) {
    let mut changed = false;
    let mut ss = 0.0;
    for (l, r) in labels.iter_mut().zip(data.iter_rows()) {
        let mut best = (0, f64::INFINITY);
        for (j, c) in centers.iter().enumerate() {
            let dj = sq_dist(r, c);
            if dj < best.1 {
                best = (j, dj);
            }
        }
        if *l != best.0 {
            changed = true;
            *l = best.0;
        }
        ss += best.1;
    }
    (changed, ss / data.rows() as f64)
}

fn update_centers(data: &DataMatrix, labels: &[usize], centers: &mut [Vec<f64>]) {
    let k = centers.len();
    let d = data.cols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (r, &l) in data.iter_rows().zip(labels) {
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(r) {
            *s += x;
        }
    }
    for j in 0..k {
        if counts[j] > 0 {
            centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
        } else {
            // empty cluster: move it to the point farthest from its own center
            let mut best = (0, -1.0);
            for (i, (r, &l)) in data.iter_rows().zip(labels).enumerate() {
                let dv = sq_dist(r, &centers[l]);
                if dv > best.1 {
                    best = (i, dv);
                }
            }
            centers[j] = data.row(best.0).to_vec();
        }
    }
}

fn lloyd_k(data: &DataMatrix, k: usize, rng: &mut StreamRng, max_iter: usize) -> Vec<usize> {
    let mut centers = plusplus(data, k, rng);
    let mut labels = vec![usize::MAX; data.rows()];
    for _ in 0..max_iter {
        let (changed, _) = assign(data, &centers, &mut labels);
        if !changed {
            break;
        }
        update_centers(data, &labels, &mut centers);
    }
    labels
}

const LLOYD_TRIES: usize = 10;

/// Lowest within-SS labelling over several seeded Lloyd runs.
fn lloyd_best(data: &DataMatrix, k: usize, rng: &mut StreamRng, tries: usize) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..tries {
        let labels = lloyd_k(data, k, rng, 20);
        let mut centers = vec![vec![0.0; data.cols()]; k];
        update_centers(data, &labels, &mut centers);
        let w: f64 = data.iter_rows().zip(&labels).map(|(r, &l)| sq_dist(r, &centers[l])).sum();
        if best.as_ref().is_none_or(|(b, _)| w < *b) {
            best = Some((w, labels));
        }
    }
    best.expect("tries >= 1").1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KmeansResult {
    pub centers: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// `(1/n) Σ ‖x_i − b_{c(i)}‖²`.
    pub within_ss: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymKmeansResult {
    /// The centres are `±center`.
    pub center: Vec<f64>,
    pub within_ss: f64,
    pub iterations: usize,
}

fn check_distinct(data: &DataMatrix) -> Result<()> {
    if data.rows() < 2 {
        return Err(Error::invalid("2-means needs at least two rows"));
    }
    let first = data.row(0);
    if data.iter_rows().all(|r| r == first) {
        return Err(Error::invalid("2-means needs at least two distinct rows"));
    }
    Ok(())
}

/// Within-cluster mean square of `data` for the given centres, using nearest
/// centre assignment.
pub fn within_ss(data: &DataMatrix, centers: &[Vec<f64>]) -> f64 {
    data.iter_rows()
        .map(|r| centers.iter().map(|c| sq_dist(r, c)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / data.rows() as f64
}

/// One Lloyd run from k-means++ seeds, returning the result and the
/// objective after each assignment step.
pub fn kmeans2_traced(data: &DataMatrix, rng: &mut StreamRng) -> (KmeansResult, Vec<f64>) {
    let mut centers = plusplus(data, 2, rng);
    let mut labels = vec![usize::MAX; data.rows()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let (changed, _) = assign(data, &centers, &mut labels);
        update_centers(data, &labels, &mut centers);
        iterations += 1;
        trace.push(assigned_ss(data, &centers, &labels));
        if !changed || iterations >= 1000 {
            break;
        }
    }
    let (_, ss) = assign(data, &centers, &mut labels);
    (
        KmeansResult {
            centers,
            assignment: labels,
            within_ss: ss,
            iterations,
        },
        trace,
    )
}

fn assigned_ss(data: &DataMatrix, centers: &[Vec<f64>], labels: &[usize]) -> f64 {
    data.iter_rows().zip(labels).map(|(r, &l)| sq_dist(r, &centers[l])).sum::<f64>() / data.rows() as f64
}

/// Lloyd's algorithm for two centres, best of `restarts` seedings.
pub fn kmeans2(data: &DataMatrix, restarts: usize, rng: &RngStream) -> Result<KmeansResult> {
    check_distinct(data)?;
    let mut best: Option<KmeansResult> = None;
    for r in 0..restarts.max(1) {
        let mut g = rng.derive(r as u64).rng();
        let (res, _) = kmeans2_traced(data, &mut g);
        if best.as_ref().map_or(true, |b| res.within_ss < b.within_ss) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Leading eigenvector of the centred data by power iteration.
fn principal_direction(data: &DataMatrix) -> Vec<f64> {
    let d = data.cols();
    let mean = data.mean();
    let mut v: Vec<f64> = {
        let mut best = (0, -1.0);
        for (i, r) in data.iter_rows().enumerate() {
            let s = sq_dist(r, &mean);
            if s > best.1 {
                best = (i, s);
            }
        }
        data.row(best.0).iter().zip(&mean).map(|(a, b)| a - b).collect()
    };
    // a fixed generic perturbation avoids starting orthogonal to the target
    for (j, x) in v.iter_mut().enumerate() {
        *x += 1e-3 * (1.0 + j as f64).sqrt();
    }
    for _ in 0..100 {
        let mut next = vec![0.0; d];
        for r in data.iter_rows() {
            let p: f64 = r.iter().zip(&mean).zip(&v).map(|((x, m), vj)| (x - m) * vj).sum();
            for j in 0..d {
                next[j] += p * (r[j] - mean[j]);
            }
        }
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            break;
        }
        let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
        let delta: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if delta < 1e-12 {
            break;
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Alternating minimisation for centres `±t`, returning the result and the
/// objective after each update.
pub fn symmetric_lloyd(data: &DataMatrix, init: Vec<f64>) -> (SymKmeansResult, Vec<f64>) {
    let n = data.rows() as f64;
    let d = data.cols();
    let sq_norms: f64 = data.iter_rows().map(|r| dot(r, r)).sum::<f64>() / n;
    let mut t = init;
    let mut signs: Vec<bool> = vec![true; data.rows()];
    let mut trace = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        for (s, r) in signs.iter_mut().zip(data.iter_rows()) {
            let pos = dot(r, &t) >= 0.0;
            if pos != *s {
                changed = true;
                *s = pos;
            }
        }
        let mut next = vec![0.0; d];
        for (s, r) in signs.iter().zip(data.iter_rows()) {
            let sign = if *s { 1.0 } else { -1.0 };
            for j in 0..d {
                next[j] += sign * r[j];
            }
        }
        next.iter_mut().for_each(|v| *v /= n);
        t = next;
        iterations += 1;
        trace.push((sq_norms - dot(&t, &t)).max(0.0));
        if (!changed && iterations > 1) || iterations >= 1000 {
            break;
        }
    }
    // objective with optimal signs for the final t
    let ss = data
        .iter_rows()
        .map(|r| {
            let p = dot(r, &t).abs();
            (dot(r, r) - 2.0 * p + dot(&t, &t)).max(0.0)
        })
        .sum::<f64>()
        / n;
    (
        SymKmeansResult {
            center: t,
            within_ss: ss,
            iterations,
        },
        trace,
    )
}

/// 2-means with centres constrained to `±t`. The first start is the top
/// principal direction scaled by the mean absolute projection; further
/// restarts start from random data points.
pub fn symmetric_kmeans2(data: &DataMatrix, restarts: usize, rng: &RngStream) -> Result<SymKmeansResult> {
    check_distinct(data)?;
    let v = principal_direction(data);
    let scale = data.iter_rows().map(|r| dot(r, &v).abs()).sum::<f64>() / data.rows() as f64;
    let mut best = symmetric_lloyd(data, v.iter().map(|x| x * scale).collect()).0;
    for r in 1..restarts.max(1) {
        let mut g = rng.derive(r as u64).rng();
        let i = g.random_range(0..data.rows());
        let (res, _) = symmetric_lloyd(data, data.row(i).to_vec());
        if res.within_ss < best.within_ss {
            best = res;
        }
    }
    Ok(best)
}

/// Cluster index `T = W / ((1/n) Σ ‖x_i − x̄‖²)`. With `symmetric` the data are
/// centred at `x̄` and `W` comes from symmetric 2-means.
pub fn sigclust_statistic(data: &DataMatrix, symmetric: bool, restarts: usize, rng: &RngStream) -> Result<f64> {
    let tss = data.total_ss();
    if !(tss > 0.0) {
        return Err(Error::invalid("total sum of squares is zero"));
    }
    let w = if symmetric {
        let m = data.mean();
        let centred = DataMatrix::new(
            data.rows(),
            data.cols(),
            data.iter_rows().flat_map(|r| r.iter().zip(&m).map(|(a, b)| a - b)).collect(),
        )?;
        symmetric_kmeans2(&centred, restarts, rng)?.within_ss
    } else {
        kmeans2(data, restarts, rng)?.within_ss
    };
    Ok((w / tss).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{mixture_sample, mvn_sample};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(v))
    }

    fn col(v: &[f64]) -> DataMatrix {
        DataMatrix::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn k1_is_closed_form() {
        let x = mvn_sample(&Gaussian::new(vec![1.0, 2.0], diag(&[2.0, 0.5])).unwrap(), 300, &RngStream::new(1, 1)).unwrap();
        let c = FitConstraints::default_for(&x);
        let m = em_fit(&x, 1, &c, &EmOptions::default(), &RngStream::new(2, 0)).unwrap();
        let g = fit_single_gaussian(&x, &c);
        assert_eq!(m.components()[0].mean(), g.mean());
        assert_eq!(m.components()[0].cov(), g.cov());
    }

    #[test]
    fn em_recovers_separated_means() {
        let mix = Mixture::new(
            vec![0.5, 0.5],
            vec![
                Gaussian::new(vec![-10.0, 0.0], diag(&[1.0, 1.0])).unwrap(),
                Gaussian::new(vec![10.0, 0.0], diag(&[1.0, 1.0])).unwrap(),
            ],
        )
        .unwrap();
        let (x, labels) = mixture_sample(&mix, 1000, &RngStream::new(3, 0)).unwrap();
        let c = FitConstraints::default_for(&x);
        let m = em_fit(&x, 2, &c, &EmOptions::default(), &RngStream::new(3, 1)).unwrap();
        for truth in 0..2 {
            let idx: Vec<usize> = (0..1000).filter(|&i| labels[i] == truth).collect();
            let oracle = x.select_rows(&idx).unwrap().mean();
            let closest = m
                .components()
                .iter()
                .map(|g| sq_dist(g.mean(), &oracle).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.3);
            assert!((oracle[0] - if truth == 0 { -10.0 } else { 10.0 }).abs() < 0.3);
        }
    }

    #[test]
    fn em_is_monotone_and_constrained() {
        let mix = Mixture::new(
            vec![0.4, 0.6],
            vec![
                Gaussian::new(vec![-1.0, 0.0], diag(&[1.0, 2.0])).unwrap(),
                Gaussian::new(vec![1.5, 1.0], diag(&[0.5, 1.0])).unwrap(),
            ],
        )
        .unwrap();
        let (x, _) = mixture_sample(&mix, 400, &RngStream::new(4, 0)).unwrap();
        let c = FitConstraints::default_for(&x);
        for init in [EmInit::KmeansSeeded, EmInit::RandomResponsibility] {
            let opts = EmOptions {
                init,
                restarts: 1,
                ..Default::default()
            };
            let (m, trace) = em_fit_traced(&x, 2, &c, &opts, &RngStream::new(4, 1)).unwrap();
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
            assert!(m.components().iter().all(|g| c.satisfied_by(g)));
        }
    }

    #[test]
    fn em_errors() {
        let x = col(&[1.0, 2.0]);
        let c = FitConstraints::default_for(&x);
        assert!(em_fit(&x, 3, &c, &EmOptions::default(), &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn loglik_examples() {
        let m = Mixture::single(Gaussian::standard(2));
        let x = DataMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        assert_relative_eq!(loglik(&m, &x).unwrap(), -1.837877, epsilon = 1e-6);
        let y = DataMatrix::from_rows(&[vec![0.5, 1.0], vec![-1.0, 2.0]]).unwrap();
        let yy = DataMatrix::from_rows(&[vec![0.5, 1.0], vec![-1.0, 2.0], vec![0.5, 1.0], vec![-1.0, 2.0]]).unwrap();
        assert_relative_eq!(loglik(&m, &yy).unwrap(), 2.0 * loglik(&m, &y).unwrap(), epsilon = 1e-12);
        let one = DataMatrix::from_rows(&[vec![0.5, 1.0]]).unwrap();
        assert_eq!(loglik(&m, &one).unwrap(), m.ln_density(&[0.5, 1.0]));
    }

    #[test]
    fn kmeans_small_examples() {
        let r = kmeans2(&col(&[-1.0, 1.0]), 3, &RngStream::new(0, 0)).unwrap();
        let mut cs: Vec<f64> = r.centers.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![-1.0, 1.0]);
        assert_eq!(r.within_ss, 0.0);

        let r = kmeans2(&col(&[0.0, 0.0, 3.0, 3.0]), 3, &RngStream::new(0, 0)).unwrap();
        let mut cs: Vec<f64> = r.centers.iter().map(|c| c[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_eq!(cs, vec![0.0, 3.0]);
        assert_eq!(r.within_ss, 0.0);

        assert!(kmeans2(&col(&[2.0, 2.0, 2.0]), 3, &RngStream::new(0, 0)).is_err());
        assert!(symmetric_kmeans2(&col(&[2.0, 2.0]), 3, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn kmeans_fixed_point_and_descent() {
        let x = mvn_sample(&Gaussian::new(vec![0.0, 0.0], diag(&[2.0, 1.0])).unwrap(), 2000, &RngStream::new(8, 0)).unwrap();
        let (res, trace) = kmeans2_traced(&x, &mut RngStream::new(8, 1).rng());
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        assert_relative_eq!(within_ss(&x, &res.centers), res.within_ss, epsilon = 1e-9);
        let mut labels = res.assignment.clone();
        let mut centers = res.centers.clone();
        update_centers(&x, &labels, &mut centers);
        let (_, again) = assign(&x, &centers, &mut labels);
        assert!((again - res.within_ss).abs() < 1e-12);
    }

    #[test]
    fn symmetric_examples() {
        let r = symmetric_kmeans2(&col(&[-1.0, 1.0]), 3, &RngStream::new(0, 0)).unwrap();
        assert_relative_eq!(r.center[0].abs(), 1.0);
        assert_relative_eq!(r.within_ss, 0.0);

        for seed in 0..5 {
            let x = mvn_sample(&Gaussian::new(vec![0.3, -0.2], diag(&[2.0, 1.0])).unwrap(), 300, &RngStream::new(seed, 0)).unwrap();
            let s = symmetric_kmeans2(&x, 5, &RngStream::new(seed, 1)).unwrap();
            let u = kmeans2(&x, 5, &RngStream::new(seed, 2)).unwrap();
            assert!(s.within_ss >= u.within_ss - 1e-9);
            let (_, trace) = symmetric_lloyd(&x, x.row(0).to_vec());
            for w in trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }

    #[test]
    fn statistic_bounds_and_translation() {
        let x = col(&[-1.0, 1.0]);
        assert_eq!(sigclust_statistic(&x, false, 3, &RngStream::new(0, 0)).unwrap(), 0.0);
        let y = mvn_sample(&Gaussian::new(vec![50.0, -20.0], diag(&[0.1, 0.2])).unwrap(), 200, &RngStream::new(9, 0)).unwrap();
        let shifted = y.map(|v| v + 7.0).unwrap();
        for sym in [false, true] {
            let a = sigclust_statistic(&y, sym, 5, &RngStream::new(9, 1)).unwrap();
            let b = sigclust_statistic(&shifted, sym, 5, &RngStream::new(9, 1)).unwrap();
            assert!((0.0..=1.0).contains(&a));
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        assert!(sigclust_statistic(&col(&[3.0, 3.0]), false, 1, &RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn statistic_rotation_invariant() {
        let x = mvn_sample(&Gaussian::new(vec![0.0, 0.0, 0.0], diag(&[3.0, 1.0, 0.5])).unwrap(), 500, &RngStream::new(10, 0)).unwrap();
        for k in 0..5u64 {
            let q = mvn_sample(&Gaussian::standard(9), 1, &RngStream::new(100 + k, 0)).unwrap();
            let q = DMatrix::from_row_slice(3, 3, q.values()).qr().q();
            let rot = x.to_dmatrix() * q.transpose();
            let xr = DataMatrix::new(500, 3, rot.transpose().as_slice().to_vec()).unwrap();
            let a = sigclust_statistic(&x, false, 4, &RngStream::new(11, k)).unwrap();
            let b = sigclust_statistic(&xr, false, 4, &RngStream::new(11, k)).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    #[ignore = "n = 10^6 Monte-Carlo check"]
    fn large_sample_limits() {
        let g = Gaussian::new(vec![0.0, 0.0], diag(&[2.0, 1.0])).unwrap();
        let x = mvn_sample(&g, 1_000_000, &RngStream::new(12, 0)).unwrap();
        let w = kmeans2(&x, 2, &RngStream::new(12, 1)).unwrap().within_ss;
        let want = 3.0 - 4.0 / std::f64::consts::PI;
        assert!((w / want - 1.0).abs() < 0.01);
        let t = sigclust_statistic(&x, false, 2, &RngStream::new(12, 1)).unwrap();
        assert!((t / (want / 3.0) - 1.0).abs() < 0.01);

        let mix = Mixture::new(
            vec![0.5, 0.5],
            vec![
                Gaussian::new(vec![-2.0, 0.0], diag(&[1.0, 1.0])).unwrap(),
                Gaussian::new(vec![2.0, 0.0], diag(&[1.0, 1.0])).unwrap(),
            ],
        )
        .unwrap();
        let (x, _) = mixture_sample(&mix, 1_000_000, &RngStream::new(12, 2)).unwrap();
        let s = symmetric_kmeans2(&x, 2, &RngStream::new(12, 3)).unwrap();
        let kappa = crate::theory::kappa(4.0, 1.0);
        assert!((s.within_ss / (6.0 - kappa * kappa) - 1.0).abs() < 0.01);
    }
}
