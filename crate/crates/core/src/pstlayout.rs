//! The parametrized external-memory priority search tree skeleton.
//!
//! Each node takes the `B` lowest points (by `y`, ties by `x`) of its
//! subproblem; the rest are split into `f` equal-sized groups consecutive in
//! `x` and recursed on. Children of a node are either all leaves or all
//! internal: they become leaves when every group has at most `f*l + B`
//! points. This keeps all leaves at one depth and every internal node with
//! exactly `f` children, so a node is addressed by its path of child
//! indices.
//!
//! The skeleton is an in-memory description; [`crate::polybase`] and
//! [`crate::threesided`] serialize it into blocks.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::point::{heap_key, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PstParams {
    /// Branching parameter `f`.
    pub fanout: usize,
    /// Leaf parameter `l`.
    pub leaf_param: usize,
    /// Points per node, `B`.
    pub node_points: usize,
}

impl PstParams {
    pub fn new(fanout: usize, leaf_param: usize, node_points: usize) -> Result<Self> {
        if fanout < 2 || leaf_param < 1 || node_points < 1 {
            return Err(Error::Config(format!(
                "invalid tree parameters f={fanout} l={leaf_param} B={node_points}"
            )));
        }
        Ok(PstParams {
            fanout,
            leaf_param,
            node_points,
        })
    }

    /// Largest subproblem that becomes a leaf, `f*l + B`.
    pub fn leaf_max(&self) -> usize {
        self.fanout * self.leaf_param + self.node_points
    }

    /// Bits per child index in a packed path.
    pub fn path_step_bits(&self) -> u32 {
        usize::BITS - (self.fanout - 1).leading_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Internal,
    Leaf,
}

#[derive(Clone, Debug)]
pub struct PstNode {
    pub id: usize,
    pub kind: NodeKind,
    /// The minimum-`y` points of the subtree; a leaf holds all its points.
    /// Sorted by `x`.
    pub own: Vec<Point>,
    pub children: Vec<usize>,
    /// Smallest `x`-interval start of children `1..f`.
    pub splitters: Vec<u64>,
    pub parent: Option<usize>,
    pub depth: u32,
    /// Child indices from the root, `path_step_bits` each, last step lowest.
    pub path_bits: u128,
    /// Own point with the largest `(y, x)`.
    pub marked: Option<Point>,
    /// Inclusive `x`-interval covered by the subtree.
    pub x_lo: u64,
    pub x_hi: u64,
    /// Number of points in the subtree.
    pub subtree_size: usize,
}

impl PstNode {
    pub fn is_leaf(&self) -> bool {
        self.kind == NodeKind::Leaf
    }
}

#[derive(Clone, Debug)]
pub struct PstTree {
    pub nodes: Vec<PstNode>,
    pub params: PstParams,
    pub n: usize,
    by_path: HashMap<(u32, u128), usize>,
}

pub const ROOT: usize = 0;

impl PstTree {
    /// Builds the layout. `x` coordinates must be pairwise distinct.
    pub fn build(points: &[Point], params: PstParams) -> Result<PstTree> {
        let mut pts = points.to_vec();
        pts.sort_by_key(|p| (p.x, p.y, p.payload));
        if let Some(w) = pts.windows(2).find(|w| w[0].x == w[1].x) {
            return Err(Error::NotRankSpace(w[0].x));
        }
        let mut tree = PstTree {
            nodes: Vec::new(),
            params,
            n: pts.len(),
            by_path: HashMap::new(),
        };
        // Level by level, left to right, so that one decision makes a whole
        // level leaves: subproblem sizes within a level differ by at most one.
        type Pending = (Vec<Point>, Option<usize>, u128, u64, u64);
        let mut level: Vec<Pending> = vec![(pts, None, 0, 0, u64::MAX)];
        let mut depth = 0u32;
        let mut leaf = tree.n <= params.leaf_max();
        while !level.is_empty() {
            let mut next: Vec<Pending> = Vec::new();
            for (group, parent, path, lo, hi) in level {
                let id = tree.nodes.len();
                if let Some(p) = parent {
                    tree.nodes[p].children.push(id);
                }
                let subtree_size = group.len();
                let (own, rest) = if leaf {
                    (group, Vec::new())
                } else {
                    take_lowest(group, params.node_points)
                };
                let marked = own.iter().copied().max_by_key(heap_key);
                let mut node = PstNode {
                    id,
                    kind: if leaf {
                        NodeKind::Leaf
                    } else {
                        NodeKind::Internal
                    },
                    own,
                    children: Vec::new(),
                    splitters: Vec::new(),
                    parent,
                    depth,
                    path_bits: path,
                    marked,
                    x_lo: lo,
                    x_hi: hi,
                    subtree_size,
                };
                if !leaf {
                    let f = params.fanout;
                    let groups = split_even(rest, f);
                    let mut starts: Vec<u64> = Vec::with_capacity(f);
                    for (i, g) in groups.iter().enumerate() {
                        starts.push(if i == 0 {
                            lo
                        } else {
                            g.first().map_or(starts[i - 1], |p| p.x)
                        });
                    }
                    node.splitters = starts[1..].to_vec();
                    for (i, g) in groups.into_iter().enumerate() {
                        let clo = starts[i];
                        let chi = if i + 1 < f {
                            starts[i + 1].saturating_sub(1).max(clo)
                        } else {
                            hi
                        };
                        let cpath = (path << params.path_step_bits()) | i as u128;
                        next.push((g, Some(id), cpath, clo, chi));
                    }
                }
                tree.by_path.insert((depth, path), id);
                tree.nodes.push(node);
            }
            leaf = next.iter().all(|g| g.0.len() <= params.leaf_max());
            level = next;
            depth += 1;
        }
        Ok(tree)
    }

    pub fn root(&self) -> &PstNode {
        &self.nodes[ROOT]
    }

    pub fn node(&self, id: usize) -> &PstNode {
        &self.nodes[id]
    }

    pub fn height(&self) -> u32 {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0) + 1
    }

    pub fn leaves(&self) -> impl Iterator<Item = &PstNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Node at `depth` whose path is `path`.
    pub fn node_at(&self, depth: u32, path: u128) -> Option<usize> {
        self.by_path.get(&(depth, path)).copied()
    }

    /// Lowest common ancestor, from depths and packed paths alone.
    pub fn lca(&self, a: usize, b: usize) -> usize {
        let (na, nb) = (&self.nodes[a], &self.nodes[b]);
        let (d, pa, pb) = lca_path(
            na.depth,
            na.path_bits,
            nb.depth,
            nb.path_bits,
            self.params.path_step_bits(),
        );
        debug_assert_eq!(pa, pb);
        self.node_at(d, pa).expect("every path prefix names a node")
    }

    /// Index of the child whose `x`-interval contains `x`, clamped to the
    /// first and last child.
    pub fn locate_child(&self, node: usize, x: u64) -> usize {
        self.nodes[node].splitters.partition_point(|&s| s <= x)
    }

    /// Leaf whose `x`-interval contains `x`.
    pub fn leaf_for(&self, x: u64) -> usize {
        let mut v = ROOT;
        while !self.nodes[v].is_leaf() {
            v = self.nodes[v].children[self.locate_child(v, x)];
        }
        v
    }
}

/// Common prefix of two packed paths: returns `(depth, prefix_a, prefix_b)`.
pub fn lca_path(da: u32, pa: u128, db: u32, pb: u128, step: u32) -> (u32, u128, u128) {
    let d = da.min(db);
    let mut a = pa >> ((da - d) * step);
    let mut b = pb >> ((db - d) * step);
    let mut depth = d;
    while a != b {
        a >>= step;
        b >>= step;
        depth -= 1;
    }
    (depth, a, b)
}

/// Splits off the `count` lowest points by `(y, x)`; both halves stay sorted by `x`.
fn take_lowest(group: Vec<Point>, count: usize) -> (Vec<Point>, Vec<Point>) {
    if group.len() <= count {
        return (group, Vec::new());
    }
    let mut order: Vec<usize> = (0..group.len()).collect();
    order.select_nth_unstable_by_key(count - 1, |&i| heap_key(&group[i]));
    let mut chosen = vec![false; group.len()];
    for &i in &order[..count] {
        chosen[i] = true;
    }
    let mut own = Vec::with_capacity(count);
    let mut rest = Vec::with_capacity(group.len() - count);
    for (i, p) in group.into_iter().enumerate() {
        if chosen[i] {
            own.push(p);
        } else {
            rest.push(p);
        }
    }
    (own, rest)
}

/// `f` consecutive groups whose sizes differ by at most one, larger first.
fn split_even(points: Vec<Point>, f: usize) -> Vec<Vec<Point>> {
    let n = points.len();
    let mut out = Vec::with_capacity(f);
    let mut it = points.into_iter();
    for i in 0..f {
        let size = n / f + usize::from(i < n % f);
        out.push(it.by_ref().take(size).collect());
    }
    out
}

/// Full-traversal audit of the layout invariants. Returns a description of
/// the first violation found.
pub fn audit(tree: &PstTree, input: &[Point]) -> std::result::Result<(), String> {
    let p = tree.params;
    let mut seen: Vec<Point> = Vec::new();
    for v in &tree.nodes {
        seen.extend(&v.own);
        for q in &v.own {
            if q.x < v.x_lo || q.x > v.x_hi {
                return Err(format!(
                    "node {} point {q:?} outside [{}, {}]",
                    v.id, v.x_lo, v.x_hi
                ));
            }
        }
        match v.kind {
            NodeKind::Leaf => {
                let n = v.own.len();
                if v.id != ROOT && (n < p.leaf_param || n > p.leaf_max()) {
                    return Err(format!(
                        "leaf {} size {n} outside [{}, {}]",
                        v.id,
                        p.leaf_param,
                        p.leaf_max()
                    ));
                }
            }
            NodeKind::Internal => {
                if v.own.len() != p.node_points {
                    return Err(format!(
                        "internal node {} holds {} points",
                        v.id,
                        v.own.len()
                    ));
                }
                if v.children.len() != p.fanout {
                    return Err(format!(
                        "internal node {} has {} children",
                        v.id,
                        v.children.len()
                    ));
                }
                let max_own = v.own.iter().map(heap_key).max().expect("non-empty");
                let mut prev_hi: Option<u64> = None;
                for (i, &c) in v.children.iter().enumerate() {
                    let cn = &tree.nodes[c];
                    if let Some(h) = prev_hi {
                        if cn.x_lo != h + 1 {
                            return Err(format!("child intervals of {} not contiguous", v.id));
                        }
                    }
                    prev_hi = Some(cn.x_hi);
                    if i > 0 && v.splitters[i - 1] != cn.x_lo {
                        return Err(format!("splitter mismatch at node {}", v.id));
                    }
                    let mut stack = vec![c];
                    while let Some(d) = stack.pop() {
                        for q in &tree.nodes[d].own {
                            if heap_key(q) < max_own {
                                return Err(format!("heap order violated below node {}", v.id));
                            }
                        }
                        stack.extend(&tree.nodes[d].children);
                    }
                }
                if tree.nodes[v.children[0]].x_lo != v.x_lo
                    || tree.nodes[*v.children.last().unwrap()].x_hi != v.x_hi
                {
                    return Err(format!("children of {} do not cover its interval", v.id));
                }
            }
        }
    }
    seen.sort();
    let mut want = input.to_vec();
    want.sort();
    if seen != want {
        return Err("own points do not partition the input".into());
    }
    let leaf_depths: std::collections::BTreeSet<u32> = tree.leaves().map(|l| l.depth).collect();
    if leaf_depths.len() > 1 {
        return Err(format!("leaves at several depths {leaf_depths:?}"));
    }
    let n = tree.n.max(1) as f64;
    let bound = (n / p.leaf_param as f64)
        .log(p.fanout as f64)
        .ceil()
        .max(0.0) as u32
        + 1;
    if tree.n > p.leaf_max() && tree.height() > bound + 1 {
        return Err(format!("height {} exceeds {}", tree.height(), bound + 1));
    }
    Ok(())
}
