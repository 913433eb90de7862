//! Simulation scenarios, expression-matrix preprocessing and replication
//! drivers producing CSV reports.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{mvn_sample, DataMatrix, FitConstraints, Gaussian};
use crate::error::{Error, Result};
use crate::hypothesis::{run_test, Method, MethodConfig};
use crate::rng::RngStream;
use crate::select::{default_kmax, ic_select, srift_select, Criterion, Distance};
use crate::special::median;
use crate::tree::{grow_full_tree, prune_bottom_up, topdown_cluster, Direction, TreeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    TwoMix,
    Square,
    Tetrahedron,
    TenCluster,
    SingleGaussian,
    UniformRects,
    Custom,
}

impl ScenarioKind {
    const ALL: [(ScenarioKind, &'static str); 7] = [
        (ScenarioKind::TwoMix, "two_mix"),
        (ScenarioKind::Square, "square"),
        (ScenarioKind::Tetrahedron, "tetrahedron"),
        (ScenarioKind::TenCluster, "ten_cluster"),
        (ScenarioKind::SingleGaussian, "single_gaussian"),
        (ScenarioKind::UniformRects, "uniform_rects"),
        (ScenarioKind::Custom, "custom"),
    ];
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Self::ALL.iter().find(|(k, _)| k == self).map(|(_, s)| *s).unwrap();
        f.write_str(name)
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|(_, name)| *name == s)
            .map(|(k, _)| *k)
            .ok_or_else(|| Error::invalid(format!("unknown scenario '{s}'")))
    }
}

/// A generative model. Parameters by kind (defaults in brackets):
///
/// - `two_mix`: `n` [400], `a` [2], `w` weight of the first component [0.5],
///   `centered` [1] for means ±μ, otherwise 0 and μ; `all` [0] puts `a` in
///   every coordinate; `sigma2` [1] base variance; `s11`, `s22` override
///   the first two variances.
/// - `square`, `tetrahedron`: `delta` [6], `n_per_cluster` [50], `sigma2` [1].
/// - `ten_cluster`: `a` [200], `sigma2` [0.001], `n` [1000].
/// - `single_gaussian`: `n` [400], `sigma2` [1], `s11`, `s22`.
/// - `uniform_rects`: `n` [1000]; d = 2.
/// - `custom`: `k` [3] clusters spaced `sep` [6] apart on the first axis,
///   `n_per_cluster` [50], `sigma2` [1].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub d: usize,
    pub params: BTreeMap<String, f64>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, d: usize) -> Self {
        Self {
            kind,
            d,
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v < 1.0 || v.fract() != 0.0 {
            return Err(Error::invalid(format!("parameter {key} must be a positive integer")));
        }
        Ok(v as usize)
    }

    fn variances(&self) -> Result<Vec<f64>> {
        let s = self.get("sigma2", if self.kind == ScenarioKind::TenCluster { 0.001 } else { 1.0 });
        let mut v = vec![s; self.d];
        if let Some(&x) = self.params.get("s11") {
            v[0] = x;
        }
        if let Some(&x) = self.params.get("s22") {
            if self.d < 2 {
                return Err(Error::invalid("s22 needs d >= 2"));
            }
            v[1] = x;
        }
        if v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::invalid("variances must be positive"));
        }
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        match self.kind {
            ScenarioKind::Square | ScenarioKind::UniformRects if self.d < 2 => Err(Error::invalid(format!("{} needs d >= 2", self.kind))),
            ScenarioKind::Tetrahedron if self.d < 3 => Err(Error::invalid("tetrahedron needs d >= 3")),
            ScenarioKind::TenCluster if self.d % 5 != 0 => Err(Error::invalid("ten_cluster needs d divisible by 5")),
            ScenarioKind::UniformRects if self.d != 2 => Err(Error::invalid("uniform_rects is two-dimensional")),
            _ => Ok(()),
        }
    }

    /// Component means with their exact sample counts.
    fn components(&self) -> Result<Vec<(Vec<f64>, usize)>> {
        let d = self.d;
        let axis = |v: &[f64]| {
            let mut m = vec![0.0; d];
            m[..v.len()].copy_from_slice(v);
            m
        };
        Ok(match self.kind {
            ScenarioKind::TwoMix => {
                let n = self.count("n", 400)?;
                let a = self.get("a", 2.0);
                let w = self.get("w", 0.5);
                if !(0.0..=1.0).contains(&w) {
                    return Err(Error::invalid("w must lie in [0, 1]"));
                }
                let mu: Vec<f64> = if self.get("all", 0.0) != 0.0 { vec![a; d] } else { axis(&[a]) };
                let n1 = (w * n as f64).round() as usize;
                if self.get("centered", 1.0) != 0.0 {
                    vec![(mu.clone(), n1), (mu.iter().map(|v| -v).collect(), n - n1)]
                } else {
                    vec![(vec![0.0; d], n1), (mu, n - n1)]
                }
            }
            ScenarioKind::Square => {
                let h = self.get("delta", 6.0) / 2.0;
                let per = self.count("n_per_cluster", 50)?;
                [(-h, -h), (-h, h), (h, -h), (h, h)].iter().map(|&(x, y)| (axis(&[x, y]), per)).collect()
            }
            ScenarioKind::Tetrahedron => {
                let s = self.get("delta", 6.0) / (2.0 * 2f64.sqrt());
                let per = self.count("n_per_cluster", 50)?;
                [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
                    .iter()
                    .map(|v| (axis(&[s * v[0], s * v[1], s * v[2]]), per))
                    .collect()
            }
            ScenarioKind::TenCluster => {
                let a = self.get("a", 200.0);
                let n = self.count("n", 1000)?;
                let p = d / 5;
                (0..10)
                    .map(|c| {
                        let (block, sign) = (c % 5, if c < 5 { 1.0 } else { -1.0 });
                        let mut m = vec![0.0; d];
                        m[block * p..(block + 1) * p].fill(sign * a);
                        (m, n / 10 + usize::from(c < n % 10))
                    })
                    .collect()
            }
            ScenarioKind::SingleGaussian => vec![(vec![0.0; d], self.count("n", 400)?)],
            ScenarioKind::UniformRects => {
                let n = self.count("n", 1000)?;
                vec![(vec![-1.5, 0.5], n / 2), (vec![2.5, 0.5], n - n / 2)]
            }
            ScenarioKind::Custom => {
                let k = self.count("k", 3)?;
                let sep = self.get("sep", 6.0);
                let per = self.count("n_per_cluster", 50)?;
                (0..k).map(|i| (axis(&[sep * i as f64]), per)).collect()
            }
        })
    }
}

/// Draws a sample and its component labels. Each component contributes its
/// exact count; rows are grouped by component.
pub fn gen_scenario(spec: &ScenarioSpec, rng: &RngStream) -> Result<(DataMatrix, Vec<usize>)> {
    spec.validate()?;
    let comps = spec.components()?;
    let d = spec.d;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (c, (mean, count)) in comps.iter().enumerate() {
        if *count == 0 {
            continue;
        }
        let s = rng.derive(c as u64);
        if spec.kind == ScenarioKind::UniformRects {
            let mut r = s.rng();
            for _ in 0..*count {
                values.push(mean[0] + r.random_range(-0.5..0.5));
                values.push(mean[1] + r.random_range(-0.5..0.5));
            }
        } else {
            let g = Gaussian::new(mean.clone(), DMatrix::from_diagonal(&DVector::from_vec(spec.variances()?)))?;
            values.extend_from_slice(mvn_sample(&g, *count, &s)?.values());
        }
        labels.extend(std::iter::repeat_n(c, *count));
    }
    Ok((DataMatrix::new(labels.len(), d, values)?, labels))
}

/// Replaces zeros with the smallest positive entry, takes logs and keeps the
/// `top_k` columns with the largest median absolute deviation, in their
/// original order. Ties go to the earlier column.
pub fn gene_preprocess(matrix: &DataMatrix, top_k: usize) -> Result<DataMatrix> {
    gene_preprocess_columns(matrix, top_k).map(|(m, _)| m)
}

/// As [`gene_preprocess`], also returning the kept column indices.
pub fn gene_preprocess_columns(matrix: &DataMatrix, top_k: usize) -> Result<(DataMatrix, Vec<usize>)> {
    if matrix.values().iter().any(|v| *v < 0.0) {
        return Err(Error::invalid("expression values must be non-negative"));
    }
    let floor = matrix
        .values()
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Err(Error::invalid("expression matrix has no positive entry"));
    }
    let logged = matrix.map(|v| if v == 0.0 { floor.ln() } else { v.ln() })?;
    let mads: Vec<f64> = (0..logged.cols())
        .map(|j| {
            let col = logged.column(j);
            let m = median(&col);
            median(&col.iter().map(|v| (v - m).abs()).collect::<Vec<_>>())
        })
        .collect();
    let mut order: Vec<usize> = (0..mads.len()).collect();
    order.sort_by(|&a, &b| mads[b].total_cmp(&mads[a]).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(top_k.max(1)).collect();
    keep.sort_unstable();
    Ok((logged.select_cols(&keep)?, keep))
}

/// Procedure run once per replicate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyMethod {
    Test(Method),
    Tree(Method, Direction),
    Srift(Distance),
    Ic(Criterion),
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyMethod::Test(m) => write!(f, "{m}"),
            StudyMethod::Tree(m, dir) => write!(f, "{m}-{dir}"),
            StudyMethod::Srift(Distance::Kl) => f.write_str("srift-kl"),
            StudyMethod::Srift(Distance::L2) => f.write_str("srift-l2"),
            StudyMethod::Ic(c) => write!(f, "{c}"),
        }
    }
}

impl FromStr for StudyMethod {
    type Err = Error;

    /// `rift`, `mrift-topdown`, `srift-kl`, `bic`, …
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "srift-kl" => return Ok(StudyMethod::Srift(Distance::Kl)),
            "srift-l2" => return Ok(StudyMethod::Srift(Distance::L2)),
            "aic" | "bic" => return Ok(StudyMethod::Ic(s.parse()?)),
            _ => {}
        }
        for dir in ["topdown", "bottomup"] {
            if let Some(m) = s.strip_suffix(&format!("-{dir}")) {
                return Ok(StudyMethod::Tree(m.parse()?, dir.parse()?));
            }
        }
        Ok(StudyMethod::Test(s.parse()?))
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub scenario: ScenarioSpec,
    pub methods: Vec<StudyMethod>,
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    pub config: MethodConfig,
    pub tree: TreeOptions,
    /// Cap on components for selection; default `min(10, ⌊√n⌋)`.
    pub k_max: Option<usize>,
}

impl StudyConfig {
    pub fn new(scenario: ScenarioSpec, methods: Vec<StudyMethod>, reps: usize, alpha: f64, seed: u64) -> Self {
        Self {
            scenario,
            methods,
            reps,
            alpha,
            seed,
            config: MethodConfig {
                sigclust_b: 1000,
                ..MethodConfig::default()
            },
            tree: TreeOptions::default(),
            k_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReportRow {
    pub rep: usize,
    pub method: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject: Option<bool>,
    /// Leaf count for trees, selected k for selection methods.
    pub k_hat: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PowerReport {
    pub reps: usize,
    pub alpha: f64,
    pub rows: Vec<ReportRow>,
}

impl PowerReport {
    fn rows_for<'a>(&'a self, method: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn rejections(&self, method: &str) -> usize {
        self.rows_for(method).filter(|r| r.reject == Some(true)).count()
    }

    pub fn rejection_rate(&self, method: &str) -> f64 {
        self.rejections(method) as f64 / self.reps as f64
    }

    pub fn p_values(&self, method: &str) -> Vec<f64> {
        self.rows_for(method).filter_map(|r| r.p_value).collect()
    }

    /// Counts of `k_hat` values for one method.
    pub fn histogram(&self, method: &str) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for r in self.rows_for(method) {
            if let Some(k) = r.k_hat {
                *h.entry(k).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["rep", "method", "statistic", "p_value", "reject", "k_hat"])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            wr.write_record([
                r.rep.to_string(),
                r.method.clone(),
                opt(r.statistic),
                opt(r.p_value),
                r.reject.map(|b| b.to_string()).unwrap_or_default(),
                r.k_hat.map(|k| k.to_string()).unwrap_or_default(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn run_one(cfg: &StudyConfig, method: StudyMethod, data: &DataMatrix, rng: &RngStream) -> Result<ReportRow> {
    let c = FitConstraints::default_for(data);
    let mut row = ReportRow {
        rep: 0,
        method: method.to_string(),
        statistic: None,
        p_value: None,
        reject: None,
        k_hat: None,
    };
    match method {
        StudyMethod::Test(m) => {
            let o = run_test(m, data, &c, cfg.alpha, &cfg.config, rng)?;
            row.statistic = Some(o.statistic);
            row.p_value = Some(o.p_value);
            row.reject = Some(o.reject);
        }
        StudyMethod::Tree(m, dir) => {
            let topts = TreeOptions {
                config: cfg.config.clone(),
                ..cfg.tree.clone()
            };
            let tree = match dir {
                Direction::TopDown => topdown_cluster(data, m, cfg.alpha, &c, &topts, rng)?,
                Direction::BottomUp => {
                    let min = topts.min_node_size.unwrap_or(2 * (data.cols() + 2));
                    let full = grow_full_tree(data, &c, topts.max_depth, min, &topts, rng)?;
                    prune_bottom_up(&full, data, m, cfg.alpha, &c, &topts, rng)?
                }
            };
            row.k_hat = Some(tree.n_leaves());
            row.reject = Some(tree.n_leaves() > 1);
        }
        StudyMethod::Srift(dist) => {
            let k_max = cfg.k_max.unwrap_or_else(|| default_kmax(data.rows()));
            let r = srift_select(data, k_max, cfg.alpha, dist, &c, &cfg.config.rift, rng)?;
            row.k_hat = Some(r.k_hat);
            row.reject = Some(r.k_hat > 1);
        }
        StudyMethod::Ic(crit) => {
            let k_max = cfg.k_max.unwrap_or_else(|| default_kmax(data.rows()));
            let k = ic_select(data, k_max, crit, &c, &cfg.config.rift.em, rng)?;
            row.k_hat = Some(k);
            row.reject = Some(k > 1);
        }
    }
    Ok(row)
}

/// Replicate `r` draws its data from stream `(seed, r)`; method `m` of that
/// replicate uses a stream derived from it. Rows are ordered by replicate,
/// then by method.
pub fn run_study(cfg: &StudyConfig) -> Result<PowerReport> {
    if cfg.reps == 0 {
        return Err(Error::invalid("reps must be at least 1"));
    }
    if cfg.methods.is_empty() {
        return Err(Error::invalid("no methods given"));
    }
    cfg.scenario.validate()?;
    let per_rep: Vec<Result<Vec<ReportRow>>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let base = RngStream::new(cfg.seed, r as u64);
            let (data, _) = gen_scenario(&cfg.scenario, &base.derive(0))?;
            cfg.methods
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let mut row = run_one(cfg, m, &data, &base.derive(1 + i as u64))?;
                    row.rep = r;
                    Ok(row)
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_rep {
        rows.extend(r?);
    }
    Ok(PowerReport {
        reps: cfg.reps,
        alpha: cfg.alpha,
        rows,
    })
}

/// [`run_study`] restricted to single-test methods.
pub fn run_power_study(cfg: &StudyConfig) -> Result<PowerReport> {
    if cfg.methods.iter().any(|m| !matches!(m, StudyMethod::Test(_))) {
        return Err(Error::invalid("power studies take test methods only"));
    }
    run_study(cfg)
}

/// [`run_study`] restricted to tree methods; `k_hat` holds the leaf count.
pub fn run_tree_study(cfg: &StudyConfig) -> Result<PowerReport> {
    if cfg.methods.iter().any(|m| !matches!(m, StudyMethod::Tree(..))) {
        return Err(Error::invalid("tree studies take tree methods only"));
    }
    run_study(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_counts() {
        let spec = ScenarioSpec::new(ScenarioKind::Square, 2).with("delta", 6.0);
        let (x, labels) = gen_scenario(&spec, &RngStream::new(1, 0)).unwrap();
        assert_eq!(x.rows(), 200);
        for c in 0..4 {
            assert_eq!(labels.iter().filter(|&&l| l == c).count(), 50);
        }
    }

    #[test]
    fn tetrahedron_is_regular() {
        let spec = ScenarioSpec::new(ScenarioKind::Tetrahedron, 5).with("delta", 5.0);
        let comps = spec.components().unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                let d: f64 = comps[i].0.iter().zip(&comps[j].0).map(|(a, b)| (a - b) * (a - b)).sum();
                assert!((d.sqrt() - 5.0).abs() < 1e-12);
            }
        }
        assert!(ScenarioSpec::new(ScenarioKind::Tetrahedron, 2).validate().is_err());
        assert!(ScenarioSpec::new(ScenarioKind::TenCluster, 12).validate().is_err());
    }

    #[test]
    fn ten_cluster_means() {
        let spec = ScenarioSpec::new(ScenarioKind::TenCluster, 30).with("a", 200.0).with("sigma2", 0.04);
        let (x, labels) = gen_scenario(&spec, &RngStream::new(2, 0)).unwrap();
        let idx: Vec<usize> = (0..x.rows()).filter(|&i| labels[i] == 0).collect();
        assert_eq!(idx.len(), 100);
        let m = x.select_rows(&idx).unwrap().mean();
        for (j, v) in m.iter().enumerate() {
            let target = if j < 6 { 200.0 } else { 0.0 };
            assert!((v - target).abs() < 4.0 * (0.04f64 / 100.0).sqrt());
        }
    }

    #[test]
    fn uniform_rects_support() {
        let (x, _) = gen_scenario(&ScenarioSpec::new(ScenarioKind::UniformRects, 2), &RngStream::new(3, 0)).unwrap();
        for r in x.iter_rows() {
            assert!(((-2.0..=-1.0).contains(&r[0]) || (2.0..=3.0).contains(&r[0])) && (0.0..=1.0).contains(&r[1]));
        }
    }

    #[test]
    fn gene_preprocess_examples() {
        // log-columns with MAD 0, 1 and 2
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, (i as f64).exp(), (2.0 * i as f64).exp()]).collect();
        let m = DataMatrix::from_rows(&rows).unwrap();
        let p = gene_preprocess(&m, 2).unwrap();
        assert_eq!(p.cols(), 2);
        assert_eq!(p.column(0), m.map(f64::ln).unwrap().column(1));
        assert_eq!(p.column(1), m.map(f64::ln).unwrap().column(2));
        assert_eq!(gene_preprocess(&m, 10).unwrap(), m.map(f64::ln).unwrap());

        let z = DataMatrix::from_rows(&[vec![0.0, 2.0], vec![4.0, 0.0]]).unwrap();
        let p = gene_preprocess(&z, 2).unwrap();
        assert_eq!(p.get(0, 0), 2f64.ln());
        assert!(gene_preprocess(&DataMatrix::new(2, 1, vec![0.0, 0.0]).unwrap(), 1).is_err());
        assert!(gene_preprocess(&DataMatrix::new(2, 1, vec![-1.0, 1.0]).unwrap(), 1).is_err());
    }

    #[test]
    fn study_method_tags() {
        for s in ["rift", "nn-z", "mrift-topdown", "sigclust-trunc-bottomup", "srift-kl", "srift-l2", "aic", "bic"] {
            assert_eq!(s.parse::<StudyMethod>().unwrap().to_string(), s);
        }
        assert!("foo-topdown".parse::<StudyMethod>().is_err());
    }

    #[test]
    fn studies_are_reproducible() {
        let spec = ScenarioSpec::new(ScenarioKind::SingleGaussian, 2).with("n", 100.0);
        let cfg = StudyConfig::new(spec, vec![StudyMethod::Test(Method::Rift), StudyMethod::Test(Method::Mardia)], 4, 0.05, 9);
        let a = run_power_study(&cfg).unwrap();
        let b = run_power_study(&cfg).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.rows.len(), 8);
        assert!(run_power_study(&StudyConfig { reps: 0, ..cfg.clone() }).is_err());

        let tcfg = StudyConfig::new(
            ScenarioSpec::new(ScenarioKind::Square, 2).with("delta", 6.0),
            vec![StudyMethod::Tree(Method::Mrift, Direction::TopDown)],
            2,
            0.05,
            1,
        );
        let t = run_tree_study(&tcfg).unwrap();
        assert_eq!(t.histogram("mrift-topdown").values().sum::<usize>(), 2);
    }
}
