//! Hierarchical clustering trees grown by two-component splits and pruned or
//! stopped by a node-level test.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use serde_json::value::RawValue;

use crate::dist::{Branch, DataMatrix, FitConstraints, Mixture, Region};
use crate::error::{Error, Result};
use crate::fitters::em_fit;
use crate::hypothesis::{node_test, split_halves, Method, MethodConfig, TestOutcome};
use crate::rng::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    TopDown,
    BottomUp,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TopDown => "topdown",
            Direction::BottomUp => "bottomup",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topdown" => Ok(Direction::TopDown),
            "bottomup" => Ok(Direction::BottomUp),
            _ => Err(Error::invalid(format!("unknown direction '{s}'"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClusterNode {
    pub id: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub region: Region,
    pub d1_idx: Vec<usize>,
    pub d2_idx: Vec<usize>,
    /// Present exactly when the node has children.
    pub split: Option<Mixture>,
    pub outcome: Option<TestOutcome>,
    /// Level the node was tested at.
    pub level: Option<f64>,
    pub children: Option<(usize, usize)>,
    /// Why the node was not tested or not split, when that was forced.
    pub note: Option<String>,
}

impl ClusterNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    fn leaf(id: usize, depth: usize, parent: Option<usize>, region: Region, d1_idx: Vec<usize>, d2_idx: Vec<usize>) -> Self {
        Self {
            id,
            depth,
            parent,
            region,
            d1_idx,
            d2_idx,
            split: None,
            outcome: None,
            level: None,
            children: None,
            note: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClusterTree {
    pub nodes: BTreeMap<usize, ClusterNode>,
    pub root: usize,
    pub alpha: f64,
    pub method: Option<Method>,
    pub direction: Direction,
    /// Rows of the data the tree was built on.
    pub n: usize,
    pub d: usize,
}

#[derive(Clone, Debug)]
pub struct TreeOptions {
    /// Smallest D1 and D2 a node needs to be split or tested; default 2(d+2).
    pub min_node_size: Option<usize>,
    pub max_depth: usize,
    pub config: MethodConfig,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self {
            min_node_size: None,
            max_depth: 32,
            config: MethodConfig::default(),
        }
    }
}

impl TreeOptions {
    fn min_size(&self, d: usize) -> usize {
        self.min_node_size.unwrap_or(2 * (d + 2))
    }
}

/// Test level of a node at `depth` in top-down growth: `α / 2^(2·depth+1)`.
pub fn topdown_level(alpha: f64, depth: usize) -> f64 {
    alpha / 2f64.powi(2 * depth as i32 + 1)
}

fn node_stream(rng: &RngStream, id: usize) -> RngStream {
    rng.derive(1).derive(id as u64)
}

fn route(split: &Mixture, data: &DataMatrix, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    idx.iter().partition(|&&i| split.branch_of(data.row(i)) == Branch::Left)
}

struct Builder<'a> {
    data: &'a DataMatrix,
    c: &'a FitConstraints,
    opts: &'a TreeOptions,
    rng: &'a RngStream,
    nodes: BTreeMap<usize, ClusterNode>,
    next_id: usize,
}

impl<'a> Builder<'a> {
    fn new(data: &'a DataMatrix, c: &'a FitConstraints, opts: &'a TreeOptions, rng: &'a RngStream) -> Result<Self> {
        if data.rows() < 16 {
            return Err(Error::invalid(format!("tree building needs at least 16 observations, got {}", data.rows())));
        }
        if c.dim() != data.cols() {
            return Err(Error::DimensionMismatch {
                expected: data.cols(),
                got: c.dim(),
            });
        }
        let halves = split_halves(data.rows(), opts.config.rift.split_ratio, &rng.derive(0))?;
        let mut nodes = BTreeMap::new();
        nodes.insert(0, ClusterNode::leaf(0, 0, None, Region::whole(), halves.d1_indices, halves.d2_indices));
        Ok(Self {
            data,
            c,
            opts,
            rng,
            nodes,
            next_id: 1,
        })
    }

    fn eligible(&mut self, id: usize) -> bool {
        let min = self.opts.min_size(self.data.cols());
        let node = self.nodes.get_mut(&id).expect("node exists");
        if node.depth >= self.opts.max_depth {
            node.note = Some("maximum depth reached".into());
            false
        } else if node.d1_idx.len() < min || node.d2_idx.len() < min {
            node.note = Some(format!("fewer than {min} rows on one side"));
            false
        } else {
            true
        }
    }

    fn fit_split(&mut self, id: usize) -> Option<Mixture> {
        let node = &self.nodes[&id];
        let fitted = self
            .data
            .select_rows(&node.d1_idx)
            .and_then(|d1| em_fit(&d1, 2, self.c, &self.opts.config.rift.em, &node_stream(self.rng, id).derive(0)));
        match fitted {
            Ok(m) => Some(m),
            Err(e) => {
                self.nodes.get_mut(&id).unwrap().note = Some(format!("split fit failed: {e}"));
                None
            }
        }
    }

    /// Attaches two children routed by `split`; refuses splits that leave a
    /// child without fitting rows.
    fn attach(&mut self, id: usize, split: Mixture) -> Option<(usize, usize)> {
        let node = &self.nodes[&id];
        let (l1, r1) = route(&split, self.data, &node.d1_idx);
        let (l2, r2) = route(&split, self.data, &node.d2_idx);
        if l1.is_empty() || r1.is_empty() {
            self.nodes.get_mut(&id).unwrap().note = Some("split sends every fitting row to one side".into());
            return None;
        }
        let (depth, region) = (node.depth + 1, node.region.clone());
        let left = self.next_id;
        let right = left + 1;
        self.next_id += 2;
        let lreg = region.child(&split, Branch::Left).ok()?;
        let rreg = region.child(&split, Branch::Right).ok()?;
        self.nodes.insert(left, ClusterNode::leaf(left, depth, Some(id), lreg, l1, l2));
        self.nodes.insert(right, ClusterNode::leaf(right, depth, Some(id), rreg, r1, r2));
        let node = self.nodes.get_mut(&id).unwrap();
        node.split = Some(split);
        node.children = Some((left, right));
        Some((left, right))
    }

    fn test(&self, id: usize, method: Method, split: &Mixture, alpha: f64) -> Result<TestOutcome> {
        let node = &self.nodes[&id];
        let d1 = self.data.select_rows(&node.d1_idx)?;
        let d2 = self.data.select_rows(&node.d2_idx)?;
        node_test(method, &d1, &d2, split, &node.region, self.c, alpha, &self.opts.config, &node_stream(self.rng, id).derive(1))
    }

    fn finish(self, alpha: f64, method: Option<Method>, direction: Direction) -> ClusterTree {
        ClusterTree {
            nodes: self.nodes,
            root: 0,
            alpha,
            method,
            direction,
            n: self.data.rows(),
            d: self.data.cols(),
        }
    }
}

/// Splits from the root while the node test rejects at
/// `α / 2^(2·depth+1)`. Nodes are expanded breadth first.
pub fn topdown_cluster(
    data: &DataMatrix,
    method: Method,
    alpha: f64,
    c: &FitConstraints,
    opts: &TreeOptions,
    rng: &RngStream,
) -> Result<ClusterTree> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1)"));
    }
    let mut b = Builder::new(data, c, opts, rng)?;
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if !b.eligible(id) {
            continue;
        }
        let level = topdown_level(alpha, b.nodes[&id].depth);
        if level <= 0.0 {
            b.nodes.get_mut(&id).unwrap().note = Some("level is zero".into());
            continue;
        }
        let Some(split) = b.fit_split(id) else { continue };
        let outcome = b.test(id, method, &split, level);
        let node = b.nodes.get_mut(&id).unwrap();
        node.level = Some(level);
        match outcome {
            Ok(o) => {
                let reject = o.reject;
                node.outcome = Some(o);
                if reject {
                    if let Some((l, r)) = b.attach(id, split) {
                        queue.extend([l, r]);
                    }
                }
            }
            Err(e) => {
                log::warn!("node {id}: test not run: {e}");
                node.note = Some(format!("test failed: {e}"));
            }
        }
    }
    let tree = b.finish(alpha, Some(method), Direction::TopDown);
    assert!(tree.spent_level() <= alpha * (1.0 + 1e-12), "top-down spend exceeds alpha");
    tree.check_partition()?;
    Ok(tree)
}

/// Splits every node whose D1 and D2 both reach the minimum size, down to
/// `max_depth`, without testing.
pub fn grow_full_tree(
    data: &DataMatrix,
    c: &FitConstraints,
    max_depth: usize,
    min_node_size: usize,
    opts: &TreeOptions,
    rng: &RngStream,
) -> Result<ClusterTree> {
    let opts = TreeOptions {
        min_node_size: Some(min_node_size),
        max_depth,
        config: opts.config.clone(),
    };
    let mut b = Builder::new(data, c, &opts, rng)?;
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if !b.eligible(id) {
            continue;
        }
        let Some(split) = b.fit_split(id) else { continue };
        if let Some((l, r)) = b.attach(id, split) {
            queue.extend([l, r]);
        }
    }
    let tree = b.finish(0.0, None, Direction::BottomUp);
    tree.check_partition()?;
    Ok(tree)
}

/// Tests every internal node, deepest first, at `α / N` with `N` the node
/// count of `tree`; a node that fails to reject loses both subtrees.
/// `data` must be the matrix the tree was grown on.
#[allow(clippy::too_many_arguments)]
pub fn prune_bottom_up(
    tree: &ClusterTree,
    data: &DataMatrix,
    method: Method,
    alpha: f64,
    c: &FitConstraints,
    opts: &TreeOptions,
    rng: &RngStream,
) -> Result<ClusterTree> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::invalid("alpha must lie in [0, 1)"));
    }
    if data.rows() != tree.n || data.cols() != tree.d {
        return Err(Error::invalid("data does not match the rows the tree was grown on"));
    }
    if tree.nodes.values().any(|nd| !nd.is_leaf() && nd.d2_idx.is_empty()) {
        return Err(Error::invalid("tree lacks test-half bookkeeping"));
    }
    let level = alpha / tree.nodes.len() as f64;
    let mut out = tree.clone();
    out.alpha = alpha;
    out.method = Some(method);
    out.direction = Direction::BottomUp;
    let mut internal: Vec<(usize, usize)> = out.nodes.values().filter(|nd| !nd.is_leaf()).map(|nd| (nd.depth, nd.id)).collect();
    internal.sort_by(|a, b| b.cmp(a));
    for (_, id) in internal {
        let Some(node) = out.nodes.get(&id) else { continue };
        let split = node.split.clone().expect("internal node has a split");
        let outcome = if level > 0.0 {
            let d1 = data.select_rows(&node.d1_idx)?;
            let d2 = data.select_rows(&node.d2_idx)?;
            match node_test(method, &d1, &d2, &split, &node.region, c, level, &opts.config, &node_stream(rng, id).derive(1)) {
                Ok(o) => Some(o),
                Err(e) => {
                    log::warn!("node {id}: test not run: {e}");
                    None
                }
            }
        } else {
            None
        };
        let keep = outcome.as_ref().is_some_and(|o| o.reject);
        let node = out.nodes.get_mut(&id).unwrap();
        node.level = Some(level);
        if outcome.is_none() {
            node.note = Some("test not run".into());
        }
        node.outcome = outcome;
        if !keep {
            out.remove_children(id);
        }
    }
    out.check_partition()?;
    Ok(out)
}

impl ClusterTree {
    fn remove_children(&mut self, id: usize) {
        let mut stack = Vec::new();
        if let Some(node) = self.nodes.get_mut(&id) {
            if let Some((l, r)) = node.children.take() {
                stack.extend([l, r]);
            }
            node.split = None;
        }
        while let Some(k) = stack.pop() {
            if let Some(nd) = self.nodes.remove(&k) {
                if let Some((l, r)) = nd.children {
                    stack.extend([l, r]);
                }
            }
        }
    }

    pub fn leaves(&self) -> Vec<&ClusterNode> {
        self.nodes.values().filter(|nd| nd.is_leaf()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.values().filter(|nd| nd.is_leaf()).count()
    }

    /// Sum of the levels of every tested node.
    pub fn spent_level(&self) -> f64 {
        self.nodes.values().filter(|nd| nd.outcome.is_some()).filter_map(|nd| nd.level).sum()
    }

    /// Checks that leaf index sets partition the rows and that children
    /// partition their parent.
    pub fn check_partition(&self) -> Result<()> {
        let mut seen = vec![false; self.n];
        for leaf in self.leaves() {
            for &i in leaf.d1_idx.iter().chain(&leaf.d2_idx) {
                if i >= self.n || seen[i] {
                    return Err(Error::numerical("leaf index sets overlap"));
                }
                seen[i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::numerical("leaf index sets do not cover every row"));
        }
        for nd in self.nodes.values() {
            if let Some((l, r)) = nd.children {
                let (l, r) = (&self.nodes[&l], &self.nodes[&r]);
                if l.d1_idx.len() + r.d1_idx.len() != nd.d1_idx.len() || l.d2_idx.len() + r.d2_idx.len() != nd.d2_idx.len() {
                    return Err(Error::numerical("children do not partition their parent"));
                }
            }
        }
        Ok(())
    }

    /// Leaf id reached by `x` following the split rules from the root.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = self.root;
        while let Some((l, r)) = self.nodes[&id].children {
            let split = self.nodes[&id].split.as_ref().expect("internal node has a split");
            id = if split.branch_of(x) == Branch::Left { l } else { r };
        }
        id
    }

    pub fn to_json(&self) -> Result<String> {
        let nodes = self.nodes.values().map(|nd| NodeJson::from_node(nd, self.method)).collect::<Result<Vec<_>>>()?;
        let j = TreeJson {
            alpha: f17(self.alpha)?,
            method: self.method.map(|m| m.tag()),
            direction: self.direction.to_string(),
            root: self.root,
            n_leaves: self.n_leaves(),
            nodes,
        };
        Ok(serde_json::to_string_pretty(&j)?)
    }
}

/// Leaf id for every row of `data`.
pub fn assign_labels(tree: &ClusterTree, data: &DataMatrix) -> Result<Vec<usize>> {
    if data.cols() != tree.d {
        return Err(Error::DimensionMismatch {
            expected: tree.d,
            got: data.cols(),
        });
    }
    Ok(data.iter_rows().map(|x| tree.leaf_of(x)).collect())
}

fn f17(v: f64) -> Result<Box<RawValue>> {
    let s = if v.is_finite() { format!("{v:.16e}") } else { "null".to_string() };
    Ok(RawValue::from_string(s)?)
}

#[derive(Serialize)]
struct TreeJson {
    alpha: Box<RawValue>,
    method: Option<&'static str>,
    direction: String,
    root: usize,
    n_leaves: usize,
    nodes: Vec<NodeJson>,
}

#[derive(Serialize)]
struct MixtureJson {
    weights: Vec<Box<RawValue>>,
    means: Vec<Vec<Box<RawValue>>>,
    covariances: Vec<Vec<Vec<Box<RawValue>>>>,
}

#[derive(Serialize)]
struct NodeJson {
    id: usize,
    depth: usize,
    parent: Option<usize>,
    children: Vec<usize>,
    method: Option<&'static str>,
    level: Option<Box<RawValue>>,
    p_value: Option<Box<RawValue>>,
    reject: Option<bool>,
    n_d1: usize,
    n_d2: usize,
    mixture: Option<MixtureJson>,
}

impl NodeJson {
    fn from_node(nd: &ClusterNode, method: Option<Method>) -> Result<Self> {
        let mixture = match &nd.split {
            None => None,
            Some(m) => Some(MixtureJson {
                weights: m.weights().iter().map(|&w| f17(w)).collect::<Result<_>>()?,
                means: m.components().iter().map(|g| g.mean().iter().map(|&v| f17(v)).collect()).collect::<Result<_>>()?,
                covariances: m
                    .components()
                    .iter()
                    .map(|g| {
                        let s = g.cov();
                        (0..s.nrows()).map(|i| (0..s.ncols()).map(|j| f17(s[(i, j)])).collect()).collect()
                    })
                    .collect::<Result<_>>()?,
            }),
        };
        Ok(Self {
            id: nd.id,
            depth: nd.depth,
            parent: nd.parent,
            children: nd.children.map(|(l, r)| vec![l, r]).unwrap_or_default(),
            method: method.map(|m| m.tag()),
            level: nd.level.map(f17).transpose()?,
            p_value: nd.outcome.as_ref().map(|o| f17(o.p_value)).transpose()?,
            reject: nd.outcome.as_ref().map(|o| o.reject),
            n_d1: nd.d1_idx.len(),
            n_d2: nd.d2_idx.len(),
            mixture,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{mixture_sample, mvn_sample, Gaussian};
    use nalgebra::DMatrix;

    fn square(delta: f64, per: usize, seed: u64) -> DataMatrix {
        let h = delta / 2.0;
        let comps = [(-h, -h), (-h, h), (h, -h), (h, h)]
            .iter()
            .map(|&(a, b)| Gaussian::new(vec![a, b], DMatrix::identity(2, 2)).unwrap())
            .collect();
        let m = Mixture::new(vec![0.25; 4], comps).unwrap();
        mixture_sample(&m, 4 * per, &RngStream::new(seed, 0)).unwrap().0
    }

    #[test]
    fn zero_alpha_gives_single_leaf() {
        let x = square(6.0, 50, 1);
        let c = FitConstraints::default_for(&x);
        let t = topdown_cluster(&x, Method::Mrift, 0.0, &c, &TreeOptions::default(), &RngStream::new(1, 1)).unwrap();
        assert_eq!(t.n_leaves(), 1);
        let labels = assign_labels(&t, &x).unwrap();
        assert!(labels.iter().all(|&l| l == labels[0]));
    }

    #[test]
    fn topdown_square_finds_four() {
        let x = square(6.0, 50, 2);
        let c = FitConstraints::default_for(&x);
        let t = topdown_cluster(&x, Method::Mrift, 0.05, &c, &TreeOptions::default(), &RngStream::new(2, 1)).unwrap();
        assert_eq!(t.n_leaves(), 4);
        assert!(t.spent_level() <= 0.05);
        let labels = assign_labels(&t, &x).unwrap();
        assert_eq!(labels, assign_labels(&t, &x).unwrap());
        for leaf in t.leaves() {
            for &i in leaf.d1_idx.iter().chain(&leaf.d2_idx) {
                assert_eq!(labels[i], leaf.id);
            }
        }
        let json = t.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), t.nodes.len());
        assert!(json.contains("e-") || json.contains("e0"));
    }

    #[test]
    fn levels_follow_schedule() {
        assert_eq!(topdown_level(0.05, 0), 0.025);
        assert_eq!(topdown_level(0.05, 1), 0.05 / 8.0);
        assert_eq!(topdown_level(0.05, 2), 0.05 / 32.0);
    }

    #[test]
    fn grow_limits() {
        let x = square(6.0, 50, 3);
        let c = FitConstraints::default_for(&x);
        let o = TreeOptions::default();
        let s = RngStream::new(3, 1);
        assert_eq!(grow_full_tree(&x, &c, 0, 8, &o, &s).unwrap().nodes.len(), 1);
        assert!(grow_full_tree(&x, &c, 2, 8, &o, &s).unwrap().nodes.len() <= 7);
        assert_eq!(grow_full_tree(&x, &c, 32, x.rows(), &o, &s).unwrap().nodes.len(), 1);
        let small = mvn_sample(&Gaussian::standard(2), 15, &s).unwrap();
        assert!(grow_full_tree(&small, &c, 2, 8, &o, &s).is_err());
    }

    #[test]
    fn prune_properties() {
        let x = square(6.0, 50, 4);
        let c = FitConstraints::default_for(&x);
        let o = TreeOptions::default();
        let s = RngStream::new(4, 1);
        let full = grow_full_tree(&x, &c, 32, 8, &o, &s).unwrap();
        let zero = prune_bottom_up(&full, &x, Method::Mrift, 0.0, &c, &o, &s).unwrap();
        assert_eq!(zero.nodes.len(), 1);
        let p1 = prune_bottom_up(&full, &x, Method::Mrift, 0.05, &c, &o, &s).unwrap();
        assert!(p1.n_leaves() <= full.n_leaves());
        let p2 = prune_bottom_up(&p1, &x, Method::Mrift, 0.05, &c, &o, &s).unwrap();
        assert_eq!(p1.nodes.keys().collect::<Vec<_>>(), p2.nodes.keys().collect::<Vec<_>>());

        let leaf = grow_full_tree(&x, &c, 0, 8, &o, &s).unwrap();
        let pl = prune_bottom_up(&leaf, &x, Method::Mrift, 0.05, &c, &o, &s).unwrap();
        assert_eq!(pl.nodes.len(), 1);
    }

    #[test]
    fn direction_tags() {
        assert_eq!("topdown".parse::<Direction>().unwrap(), Direction::TopDown);
        assert_eq!(Direction::BottomUp.to_string(), "bottomup");
        assert!("sideways".parse::<Direction>().is_err());
    }
}
