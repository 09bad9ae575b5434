use super::{AffineBound, GroupRelaxation, MaxPoolStrategy, PoolGroup, MAX_GROUP_SIZE};
use crate::error::{Error, Result};

/// A pool input (leaf) or the output of a group (node).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Leaf(usize),
    Node(usize),
}

/// Balanced tree of groups. Nodes are stored children first; the last node
/// is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolTree {
    leaves: usize,
    nodes: Vec<Vec<NodeRef>>,
}

impl PoolTree {
    pub fn leaves(&self) -> usize {
        self.leaves
    }

    /// Children of every group, children first.
    pub fn nodes(&self) -> &[Vec<NodeRef>] {
        &self.nodes
    }

    pub fn root(&self) -> NodeRef {
        match self.nodes.len() {
            0 => NodeRef::Leaf(0),
            k => NodeRef::Node(k - 1),
        }
    }

    /// Number of levels of groups above the leaves.
    pub fn depth(&self) -> usize {
        fn depth_of(tree: &PoolTree, r: NodeRef) -> usize {
            match r {
                NodeRef::Leaf(_) => 0,
                NodeRef::Node(k) => 1 + tree.nodes[k].iter().map(|c| depth_of(tree, *c)).max().unwrap_or(0),
            }
        }
        depth_of(self, self.root())
    }
}

/// Groups `n` inputs, in index order, into a balanced tree of groups with at
/// most `group_size` members each.
pub fn pool_tree(n: usize, group_size: usize) -> Result<PoolTree> {
    if n == 0 {
        return Err(Error::PoolInvariant("max pool over zero inputs".into()));
    }
    if group_size < 2 {
        return Err(Error::InvalidArgument(format!("group size must be at least 2, got {group_size}")));
    }
    let mut nodes = Vec::new();
    let mut level: Vec<NodeRef> = (0..n).map(NodeRef::Leaf).collect();
    while level.len() > 1 {
        let groups = level.len().div_ceil(group_size);
        let (base, extra) = (level.len() / groups, level.len() % groups);
        let mut next = Vec::with_capacity(groups);
        let mut rest = &level[..];
        for g in 0..groups {
            let size = base + usize::from(g < extra);
            let (chunk, tail) = rest.split_at(size);
            rest = tail;
            if chunk.len() == 1 {
                next.push(chunk[0]);
            } else {
                nodes.push(chunk.to_vec());
                next.push(NodeRef::Node(nodes.len() - 1));
            }
        }
        level = next;
    }
    Ok(PoolTree { leaves: n, nodes })
}

/// Extra information about the pool inputs beyond their concrete bounds.
pub trait TreeOracle {
    /// Sound lower bound of `a − b`, if available.
    fn diff_lower(&self, _relax: &TreeRelaxation, _a: NodeRef, _b: NodeRef) -> Option<f64> {
        None
    }

    /// Tightened bounds of a freshly relaxed node; must contain `interval`'s
    /// true range.
    fn refine(&self, _relax: &TreeRelaxation, _node: usize, interval: (f64, f64)) -> (f64, f64) {
        interval
    }
}

struct NoOracle;

impl TreeOracle for NoOracle {}

/// Relaxation of every group of a pool tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeRelaxation {
    pub tree: PoolTree,
    pub leaf_bounds: Vec<(f64, f64)>,
    pub groups: Vec<GroupRelaxation>,
    pub node_bounds: Vec<(f64, f64)>,
}

impl TreeRelaxation {
    pub fn bounds(&self, r: NodeRef) -> (f64, f64) {
        match r {
            NodeRef::Leaf(i) => self.leaf_bounds[i],
            NodeRef::Node(k) => self.node_bounds[k],
        }
    }

    pub fn root_bounds(&self) -> (f64, f64) {
        self.bounds(self.tree.root())
    }

    /// Adds `coef · r` to an affine form over the leaves, replacing nodes by
    /// their lower relaxation where the coefficient is positive and by their
    /// upper relaxation where it is negative. The result is a lower bound.
    pub fn expand(&self, r: NodeRef, coef: f64, leaf_coeffs: &mut [f64], constant: &mut f64) {
        if coef == 0.0 {
            return;
        }
        match r {
            NodeRef::Leaf(i) => leaf_coeffs[i] += coef,
            NodeRef::Node(k) => {
                let g = &self.groups[k];
                let side = if coef > 0.0 { &g.lower } else { &g.upper };
                *constant += coef * side.constant;
                for (child, c) in self.tree.nodes[k].iter().zip(&side.coeffs) {
                    self.expand(*child, coef * c, leaf_coeffs, constant);
                }
            }
        }
    }

    /// Lower and upper bounds of the pool output as affine forms over the
    /// leaves.
    pub fn leaf_bounds_affine(&self) -> (AffineBound, AffineBound) {
        let n = self.tree.leaves;
        let mut lower = AffineBound::constant(n, 0.0);
        self.expand(self.tree.root(), 1.0, &mut lower.coeffs, &mut lower.constant);
        let mut neg_upper = AffineBound::constant(n, 0.0);
        self.expand(self.tree.root(), -1.0, &mut neg_upper.coeffs, &mut neg_upper.constant);
        let upper = AffineBound {
            coeffs: neg_upper.coeffs.iter().map(|c| -c).collect(),
            constant: -neg_upper.constant,
        };
        (lower, upper)
    }
}

/// Relaxes every group of `tree`, children first.
pub fn relax_tree(
    tree: PoolTree,
    leaf_bounds: Vec<(f64, f64)>,
    strategy: &dyn MaxPoolStrategy,
    oracle: &dyn TreeOracle,
) -> Result<TreeRelaxation> {
    if leaf_bounds.len() != tree.leaves {
        return Err(Error::PoolInvariant("leaf count does not match the tree".into()));
    }
    let mut relax = TreeRelaxation {
        groups: Vec::with_capacity(tree.nodes.len()),
        node_bounds: Vec::with_capacity(tree.nodes.len()),
        tree,
        leaf_bounds,
    };
    for k in 0..relax.tree.nodes.len() {
        let children = relax.tree.nodes[k].clone();
        let bounds: Vec<(f64, f64)> = children.iter().map(|c| relax.bounds(*c)).collect();
        let diff = |j: usize, i: usize| {
            oracle
                .diff_lower(&relax, children[j], children[i])
                .unwrap_or(f64::NEG_INFINITY)
        };
        let group = PoolGroup::with_differences(&bounds, &diff);
        let g = strategy.relax(&group)?;

        let floor = bounds.iter().map(|b| b.0).fold(f64::NEG_INFINITY, f64::max);
        let ceil = bounds.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
        let lo = g.lower.concretize(&bounds).0.max(floor);
        let hi = g.upper.concretize(&bounds).1.min(ceil);
        relax.groups.push(g);
        relax.node_bounds.push((lo, hi));
        let (rlo, rhi) = oracle.refine(&relax, k, (lo, hi));
        relax.node_bounds[k] = (rlo.max(lo), rhi.min(hi));
    }
    Ok(relax)
}

/// Relaxes a pool over inputs with the given bounds. Grouped strategies use
/// a balanced tree with `group_size` inputs per group; flat strategies relax
/// all inputs together.
pub fn grouped_maxpool(
    leaf_bounds: &[(f64, f64)],
    group_size: usize,
    strategy: &dyn MaxPoolStrategy,
) -> Result<TreeRelaxation> {
    tree_for(leaf_bounds.len(), group_size, strategy)
        .and_then(|tree| relax_tree(tree, leaf_bounds.to_vec(), strategy, &NoOracle))
}

pub(crate) fn tree_for(n: usize, group_size: usize, strategy: &dyn MaxPoolStrategy) -> Result<PoolTree> {
    if !(2..=MAX_GROUP_SIZE).contains(&group_size) {
        return Err(Error::InvalidArgument(format!(
            "max-pool group size must be in 2..={MAX_GROUP_SIZE}, got {group_size}"
        )));
    }
    let size = if strategy.grouped() { group_size } else { n.max(2) };
    pool_tree(n, size)
}
