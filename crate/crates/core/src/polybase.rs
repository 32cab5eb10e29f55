//! Three-sided reporting on polynomially many points: a short priority
//! search tree whose internal nodes carry a small node structure
//! ([`crate::catalog`] or [`crate::microbase`]) over the points of their
//! children.
//!
//! Query: walk the two root-to-leaf paths of `x1` and `x2`, scanning own
//! points of path nodes. Below the split node every child hanging off a path
//! inside `[x1, x2]` is covered by an aligned node-structure query; a child
//! is entered only when its marked point came back, which means all of its
//! own points were reported.
//!
//! Record layout of a node: a header with the smallest own `y`, `f + 1`
//! interval bounds and `f` child locations (both bit-packed), own points
//! sorted by `y`, then either `f` catalog history roots or one microbase
//! descriptor. A path step usually touches only the first block. The root
//! record is prefixed by the global fields and doubles as the structure's
//! descriptor.

use crate::catalog::{build_catalog_parts, scan_catalog};
use crate::checks::{check, Check};
use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, Store, WordSpan};
use crate::error::{Error, Result};
use crate::microbase::{build_micro, query_micro, TabRegistry, Widths};
use crate::persist1d::P1Layout;
use crate::point::Point;
use crate::pstlayout::{PstParams, PstTree};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Backend {
    Micro,
    Catalog,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolyConfig {
    /// Forces a backend instead of the regime rule.
    pub backend: Option<Backend>,
    pub fanout: Option<usize>,
    pub leaf_param: Option<usize>,
    pub height_max: u32,
    /// Largest accepted input.
    pub cap: usize,
}

impl Default for PolyConfig {
    fn default() -> Self {
        PolyConfig {
            backend: None,
            fanout: None,
            leaf_param: None,
            height_max: 40,
            cap: 1 << 24,
        }
    }
}

/// `ceil(lg(n)^(1/16))`.
fn regime_threshold(n: usize) -> usize {
    let lg = (n.max(2) as f64).log2();
    lg.powf(1.0 / 16.0).ceil() as usize
}

/// Backend and tree parameters chosen for `n` points on this store.
pub fn plan(store: &Store, n: usize, cfg: &PolyConfig) -> Result<(Backend, PstParams)> {
    let sc = store.config();
    let bw = sc.block_words();
    let backend = cfg.backend.unwrap_or(if bw >= regime_threshold(n) {
        Backend::Catalog
    } else {
        Backend::Micro
    });
    let f = cfg.fanout.unwrap_or(match backend {
        Backend::Catalog => bw,
        Backend::Micro => ((sc.block_bits() as f64).powf(1.0 / 16.0).floor() as usize).max(2),
    });
    let l = cfg.leaf_param.unwrap_or(bw);
    Ok((backend, PstParams::new(f, l, bw)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolyStructure {
    /// The root record.
    pub descriptor: BlockId,
    pub len: usize,
    pub backend: Backend,
    pub height: u32,
}

/// Fields shared by all nodes, stored once in front of the root.
#[derive(Clone, Copy, Debug)]
struct Globals {
    widths: Widths,
    child_bits: u32,
    backend: Backend,
    layout: P1Layout,
}

const GLOBAL_BITS: u32 = 4 * 7 + 1 + P1Layout::ENCODED_BITS;

fn global_words(wb: u32) -> usize {
    GLOBAL_BITS.div_ceil(wb) as usize
}

impl Globals {
    fn encode(&self, wb: u32) -> Vec<u64> {
        let mut w = BitWriter::new(wb);
        w.push(self.widths.x as u64, 7);
        w.push(self.widths.y as u64, 7);
        w.push(self.widths.payload as u64, 7);
        w.push(self.child_bits as u64, 7);
        w.push((self.backend == Backend::Catalog) as u64, 1);
        self.layout.write(&mut w);
        let mut words = w.finish();
        words.resize(global_words(wb), 0);
        words
    }

    fn decode(span: &WordSpan, wb: u32) -> Self {
        let mut r = span.bits_at(wb, 0);
        let widths = Widths {
            x: r.read(7) as u32,
            y: r.read(7) as u32,
            payload: r.read(7) as u32,
        };
        let child_bits = r.read(7) as u32;
        let backend = if r.read(1) == 1 {
            Backend::Catalog
        } else {
            Backend::Micro
        };
        Globals {
            widths,
            child_bits,
            backend,
            layout: P1Layout::read(&mut r, wb),
        }
    }

    fn tagged(&self) -> Widths {
        Widths {
            payload: self.widths.payload + self.child_bits + 1,
            ..self.widths
        }
    }

    fn point_bits(&self) -> u32 {
        self.widths.x + self.widths.y + self.widths.payload
    }
}

fn header_bits(widths: Widths) -> u32 {
    1 + 1 + 16 + 16 + 7 + 7 + widths.y
}

fn header_words(wb: u32, widths: Widths) -> usize {
    header_bits(widths).div_ceil(wb) as usize
}

/// A node as built, before encoding.
struct NodeRec {
    leaf: bool,
    children_leaves: bool,
    /// Sorted by `y`.
    own: Vec<Point>,
    /// Child interval starts, `x_lo` first, then the exclusive end.
    bounds: Vec<u64>,
    children: Vec<BlockId>,
    /// Catalog roots, or the microbase descriptor.
    structure: Vec<u64>,
}

impl NodeRec {
    fn encode(&self, wb: u32, g: &Globals) -> Vec<u64> {
        let f = self.bounds.len().saturating_sub(1);
        let bb = self.bounds.iter().map(|&b| bits_for(b)).max().unwrap_or(0);
        let cb = self
            .children
            .iter()
            .map(|c| bits_for(c.0))
            .max()
            .unwrap_or(0);
        let mut w = BitWriter::new(wb);
        w.push(self.leaf as u64, 1);
        w.push(self.children_leaves as u64, 1);
        w.push(self.own.len() as u64, 16);
        w.push(f as u64, 16);
        w.push(bb as u64, 7);
        w.push(cb as u64, 7);
        w.push(self.own.first().map_or(0, |p| p.y), g.widths.y);
        w.align_word();
        for &b in &self.bounds {
            w.push(b, bb);
        }
        w.align_word();
        for c in &self.children {
            w.push(c.0, cb);
        }
        w.align_word();
        for p in &self.own {
            w.push(p.x, g.widths.x);
            w.push(p.y, g.widths.y);
            w.push(p.payload, g.widths.payload);
        }
        let mut words = w.finish();
        words.extend_from_slice(&self.structure);
        words
    }
}

/// A node being read: the header is held, other fields are fetched on use.
struct Node {
    at: BlockId,
    span: WordSpan,
    leaf: bool,
    children_leaves: bool,
    count: usize,
    f: usize,
    bound_bits: u32,
    child_bits: u32,
    min_y: u64,
    bounds_at: usize,
    children_at: usize,
    own_at: usize,
    structure_at: usize,
    bounds: Vec<u64>,
}

impl Node {
    fn child_of(&self, x: u64) -> usize {
        self.bounds[1..self.f].partition_point(|&s| s <= x)
    }
}

/// Builds the structure. `registry` is used by the microbase backend.
pub fn build_poly(
    store: &mut Store,
    session: &mut Session,
    registry: &mut TabRegistry,
    points: &[Point],
    cfg: &PolyConfig,
) -> Result<PolyStructure> {
    if points.len() > cfg.cap {
        return Err(Error::Capacity {
            len: points.len(),
            cap: cfg.cap,
        });
    }
    let top = store.config().word_mask();
    if let Some(p) = points.iter().find(|p| p.x >= top) {
        return Err(Error::OutOfRange(format!("x {} must be below {top}", p.x)));
    }
    let (backend, params) = plan(store, points.len(), cfg)?;
    let tree = PstTree::build(points, params)?;
    let height = tree.height();
    if height > cfg.height_max {
        return Err(Error::Config(format!(
            "tree height {height} exceeds {}",
            cfg.height_max
        )));
    }
    let wb = store.config().word_bits();
    let widths = Widths::of(points);
    let child_bits = bits_for(params.fanout as u64 - 1).max(1);
    let mut g = Globals {
        widths,
        child_bits,
        backend,
        layout: P1Layout::new(store, 1, 1, 1)?,
    };
    let tagged = g.tagged();
    if tagged.payload > 64 {
        return Err(Error::Config(
            "payload too wide to tag with child index".into(),
        ));
    }
    g.layout = P1Layout::new(store, tagged.x, tagged.y, tagged.payload)?;
    let mut locs = vec![BlockId(0); tree.nodes.len()];
    for v in tree.nodes.iter().rev() {
        let mut own = v.own.clone();
        own.sort_unstable_by_key(|p| (p.y, p.x));
        let mut rec = NodeRec {
            leaf: v.is_leaf(),
            children_leaves: false,
            own,
            bounds: Vec::new(),
            children: Vec::new(),
            structure: Vec::new(),
        };
        if !v.is_leaf() {
            rec.children_leaves = tree.node(v.children[0]).is_leaf();
            rec.bounds.push(v.x_lo);
            rec.bounds.extend_from_slice(&v.splitters);
            rec.bounds.push(v.x_hi.saturating_add(1).min(top));
            if !rec.children_leaves {
                rec.children = v.children.iter().map(|&c| locs[c]).collect();
            }
            let mut pts = Vec::new();
            for (i, &c) in v.children.iter().enumerate() {
                let child = tree.node(c);
                for p in &child.own {
                    let marked = child.marked == Some(*p);
                    let tag = ((p.payload << child_bits | i as u64) << 1) | marked as u64;
                    pts.push(Point { payload: tag, ..*p });
                }
            }
            rec.structure = match backend {
                Backend::Catalog => {
                    let (parts, _) =
                        build_catalog_parts(store, session, &pts, &rec.bounds, tagged)?;
                    debug_assert_eq!(parts.layout, g.layout);
                    let mut roots = parts.roots;
                    roots.pop();
                    roots
                }
                Backend::Micro => vec![
                    build_micro(store, session, registry, &pts, tagged, pts.len())?
                        .descriptor
                        .0,
                ],
            };
        }
        // Leaf points live only in the parent's node structure.
        if v.parent.is_none() {
            let mut words = g.encode(wb);
            words.extend(rec.encode(wb, &g));
            locs[v.id] = store.append_record(session, &words)?;
        } else if !v.is_leaf() {
            locs[v.id] = store.append_record(session, &rec.encode(wb, &g))?;
        }
    }
    Ok(PolyStructure {
        descriptor: locs[0],
        len: points.len(),
        backend,
        height,
    })
}

impl PolyStructure {
    pub fn query(
        &self,
        store: &Store,
        session: &mut Session,
        x1: u64,
        x2: u64,
        y: u64,
    ) -> Result<Vec<Point>> {
        query_poly(store, session, self.descriptor, x1, x2, y)
    }
}

struct Query<'a, 's> {
    store: &'a Store,
    session: &'s mut Session,
    g: Globals,
    x1: u64,
    x2: u64,
    y: u64,
    out: Vec<Point>,
}

/// Points with `x1 <= x <= x2` and `y' <= y`.
pub fn query_poly(
    store: &Store,
    session: &mut Session,
    descriptor: BlockId,
    x1: u64,
    x2: u64,
    y: u64,
) -> Result<Vec<Point>> {
    if x1 > x2 {
        return Ok(Vec::new());
    }
    let wb = store.config().word_bits();
    let gw = global_words(wb);
    let span = store.read_words(session, descriptor, 0, gw)?;
    let g = Globals::decode(&span, wb);
    let mut q = Query {
        store,
        session,
        g,
        x1,
        x2,
        y,
        out: Vec::new(),
    };
    let root = q.open_with(descriptor, gw, span)?;
    q.run(root)?;
    Ok(q.out)
}

impl Query<'_, '_> {
    fn open(&mut self, at: BlockId) -> Result<Node> {
        self.open_with(at, 0, WordSpan::default())
    }

    fn open_with(&mut self, at: BlockId, base: usize, mut span: WordSpan) -> Result<Node> {
        let wb = self.store.config().word_bits();
        let hw = header_words(wb, self.g.widths);
        span.ensure(self.store, self.session, at, base, base + hw)?;
        let mut r = span.bits_at(wb, base as u64 * wb as u64);
        let leaf = r.read(1) == 1;
        let children_leaves = r.read(1) == 1;
        let count = r.read(16) as usize;
        let f = r.read(16) as usize;
        let bound_bits = r.read(7) as u32;
        let child_bits = r.read(7) as u32;
        let min_y = r.read(self.g.widths.y);
        let words = |n: usize, bits: u32| (n as u64 * bits as u64).div_ceil(wb as u64) as usize;
        let bounds_at = base + hw;
        let children_at = bounds_at + if leaf { 0 } else { words(f + 1, bound_bits) };
        let own_at = children_at
            + if leaf || children_leaves {
                0
            } else {
                words(f, child_bits)
            };
        let structure_at = own_at + words(count, self.g.point_bits());
        Ok(Node {
            at,
            span,
            leaf,
            children_leaves,
            count,
            f,
            bound_bits,
            child_bits,
            min_y,
            bounds_at,
            children_at,
            own_at,
            structure_at,
            bounds: Vec::new(),
        })
    }

    fn word(&mut self, v: &mut Node, i: usize) -> Result<u64> {
        v.span.ensure(self.store, self.session, v.at, i, i + 1)?;
        Ok(v.span.word(i))
    }

    fn load_bounds(&mut self, v: &mut Node) -> Result<()> {
        if v.bounds.is_empty() {
            let wb = self.store.config().word_bits();
            v.span
                .ensure(self.store, self.session, v.at, v.bounds_at, v.children_at)?;
            let mut r = v.span.bits_at(wb, v.bounds_at as u64 * wb as u64);
            v.bounds = (0..=v.f).map(|_| r.read(v.bound_bits)).collect();
        }
        Ok(())
    }

    fn child_loc(&mut self, v: &mut Node, c: usize) -> Result<BlockId> {
        let wb = self.store.config().word_bits() as u64;
        let bit = v.children_at as u64 * wb + c as u64 * v.child_bits as u64;
        let (a, b) = (
            (bit / wb) as usize,
            (bit + v.child_bits as u64).div_ceil(wb) as usize,
        );
        v.span
            .ensure(self.store, self.session, v.at, a, b.max(a + 1))?;
        Ok(BlockId(v.span.bits_at(wb as u32, bit).read(v.child_bits)))
    }

    fn child(&mut self, v: &mut Node, c: usize) -> Result<Node> {
        let at = self.child_loc(v, c)?;
        self.open(at)
    }

    /// Reports own points in range; false if the subtree below is empty
    /// for this `y`.
    fn scan_own(&mut self, v: &mut Node) -> Result<bool> {
        if v.count == 0 || v.min_y > self.y {
            return Ok(false);
        }
        let wb = self.store.config().word_bits() as u64;
        let pb = self.g.point_bits() as u64;
        let w = self.g.widths;
        for i in 0..v.count as u64 {
            let bit = v.own_at as u64 * wb + i * pb;
            let (a, b) = ((bit / wb) as usize, (bit + pb).div_ceil(wb) as usize);
            v.span
                .ensure(self.store, self.session, v.at, a, b.max(a + 1))?;
            let mut r = v.span.bits_at(wb as u32, bit);
            let (x, y) = (r.read(w.x), r.read(w.y));
            if y > self.y {
                break;
            }
            let payload = r.read(w.payload);
            if self.x1 <= x && x <= self.x2 {
                self.out.push(Point { x, y, payload });
            }
        }
        Ok(true)
    }

    fn run(&mut self, mut v: Node) -> Result<()> {
        loop {
            if !self.scan_own(&mut v)? || v.leaf {
                return Ok(());
            }
            self.load_bounds(&mut v)?;
            let (c1, c2) = (v.child_of(self.x1), v.child_of(self.x2));
            if v.children_leaves {
                return self.cover(&mut v, c1, c2 + 1, true);
            }
            if c1 == c2 {
                v = self.child(&mut v, c1)?;
                continue;
            }
            self.cover(&mut v, c1 + 1, c2, false)?;
            let left = self.child(&mut v, c1)?;
            let right = self.child(&mut v, c2)?;
            self.walk(left, true)?;
            return self.walk(right, false);
        }
    }

    /// Follows one path below the split node.
    fn walk(&mut self, mut v: Node, left: bool) -> Result<()> {
        loop {
            if !self.scan_own(&mut v)? {
                return Ok(());
            }
            self.load_bounds(&mut v)?;
            let f = v.f;
            let c = v.child_of(if left { self.x1 } else { self.x2 });
            if v.children_leaves {
                // The path leaf is read through the same structure, clipped.
                let (lo, hi) = if left { (c, f) } else { (0, c + 1) };
                return self.cover(&mut v, lo, hi, true);
            }
            let (lo, hi) = if left { (c + 1, f) } else { (0, c) };
            self.cover(&mut v, lo, hi, false)?;
            v = self.child(&mut v, c)?;
        }
    }

    /// Reports everything in children `lo..hi` of `v`, which lie inside the
    /// x-range, and recurses where a marked point came back.
    /// With `clip` the outer children may stick out of the range and hits
    /// are filtered on x.
    fn cover(&mut self, v: &mut Node, lo: usize, hi: usize, clip: bool) -> Result<()> {
        let f = v.f;
        check(Check::CatalogAlignment, lo <= hi && hi <= f, || {
            format!("children {lo}..{hi} of {f}")
        });
        if lo >= hi {
            return Ok(());
        }
        let s = v.structure_at;
        let hits = match self.g.backend {
            Backend::Catalog => {
                let root = self.word(v, s + lo)?;
                let (a, end) = (v.bounds[lo], v.bounds[hi]);
                scan_catalog(
                    self.store,
                    self.session,
                    &self.g.layout,
                    root,
                    a,
                    end,
                    self.y,
                )?
            }
            Backend::Micro => {
                let desc = BlockId(self.word(v, s)?);
                let (mut a, mut b) = (v.bounds[lo], v.bounds[hi] - 1);
                if clip {
                    (a, b) = (a.max(self.x1), b.min(self.x2));
                }
                query_micro(self.store, self.session, desc, a, b, self.y)?
            }
        };
        let cb = self.g.child_bits;
        let mut counts = vec![0usize; f];
        let mut marked = vec![false; f];
        for p in hits {
            if clip && !(self.x1 <= p.x && p.x <= self.x2) {
                continue;
            }
            let child = ((p.payload >> 1) & ((1 << cb) - 1)) as usize;
            counts[child] += 1;
            marked[child] |= p.payload & 1 == 1;
            self.out.push(Point {
                payload: p.payload >> (cb + 1),
                ..p
            });
        }
        if v.children_leaves {
            return Ok(());
        }
        for c in lo..hi {
            if cfg!(debug_assertions) {
                let mut quiet = Session::new();
                let wb = self.store.config().word_bits() as u64;
                let bit = v.children_at as u64 * wb + c as u64 * v.child_bits as u64;
                let span = self.store.peek_words(
                    v.at,
                    (bit / wb) as usize,
                    (bit + v.child_bits as u64).div_ceil(wb) as usize + 1,
                )?;
                let at = BlockId(span.bits_at(wb as u32, bit).read(v.child_bits));
                let mut q = Query {
                    store: self.store,
                    session: &mut quiet,
                    g: self.g,
                    x1: 0,
                    x2: u64::MAX,
                    y: u64::MAX,
                    out: Vec::new(),
                };
                let mut u = q.open(at)?;
                q.scan_own(&mut u)?;
                let all = counts[c] == q.out.len();
                check(Check::MarkedPoint, marked[c] == all, || {
                    format!(
                        "child {c}: marked {} count {}/{}",
                        marked[c],
                        counts[c],
                        q.out.len()
                    )
                });
            }
            if !marked[c] {
                continue;
            }
            let mut u = self.child(v, c)?;
            check(Check::RecursionGuard, counts[c] == u.count, || {
                format!("entered child with {} of {} reported", counts[c], u.count)
            });
            if !u.leaf {
                self.load_bounds(&mut u)?;
                let n = u.f;
                self.cover(&mut u, 0, n, false)?;
            }
        }
        Ok(())
    }
}
