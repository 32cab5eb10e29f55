//! Three-sided range reporting on `n` points with `O(1 + k/B)` reads.
//!
//! A binary priority search tree with leaf parameter `B·ceil(lg² n)`. Every
//! leaf stores a [`PolyStructure`] on its points, and for every ancestor `w`
//! another one on the own points of the nodes from `w` down to the leaf's
//! parent together with their siblings, each tagged with its origin node
//! and whether it is that node's marked point. A leaf array maps every x to
//! the leaf record whose interval contains it, and a directory maps every
//! node to a record of its own points sorted by y.
//!
//! Query: fetch leaves `u1`, `u2` for `x1`, `x2`; query their base
//! structures, plus a sibling's when it lies between them; query `u1`'s
//! path structure from the root and `u2`'s from the grandchild of the LCA
//! on its side. Any node off both paths whose marked point came back is
//! fully inside the range and had all its own points reported. Its children
//! are then read from the directory up to the first point above `y`, and a
//! child is entered in turn when all its own points qualified.
//!
//! Since the tree is binary with all leaves at one depth, node ids are
//! heap-ordered: node `i` has children `2i + 1` and `2i + 2`.

use std::collections::{BTreeMap, BTreeSet};

use crate::checks::{check, Check};
use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::microbase::{TabRegistry, Widths};
use crate::point::Point;
use crate::polybase::{build_poly, query_poly, PolyConfig};
use crate::pstlayout::{lca_path, PstParams, PstTree};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TopConfig {
    /// Overrides `l = B·ceil(lg² n)`.
    pub leaf_param: Option<usize>,
    pub poly: PolyConfig,
}

/// `B·ceil(lg² n)` with `lg` the base-2 logarithm.
pub fn default_leaf_param(block_words: usize, n: usize) -> usize {
    let lg = (n.max(2) as f64).log2();
    block_words * (lg * lg).ceil() as usize
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TopStructure {
    pub manifest: BlockId,
    pub len: usize,
    /// Depth of every leaf.
    pub leaf_depth: u32,
    pub leaves: usize,
    pub leaf_param: usize,
}

#[derive(Clone, Copy, Debug)]
struct Manifest {
    max_x: u64,
    leaf_array: BlockId,
    directory: BlockId,
    leaf_depth: u32,
    widths: Widths,
    id_bits: u32,
    empty: bool,
}

const MANIFEST_WORDS: usize = 5;

impl Manifest {
    fn encode(&self, wb: u32) -> Vec<u64> {
        let mut w = BitWriter::new(wb);
        w.push(self.leaf_depth as u64, 8);
        w.push(self.widths.x as u64, 7);
        w.push(self.widths.y as u64, 7);
        w.push(self.widths.payload as u64, 7);
        w.push(self.id_bits as u64, 7);
        w.push(self.empty as u64, 1);
        let mut words = w.finish();
        words.resize(2, 0);
        words.extend([self.max_x, self.leaf_array.0, self.directory.0]);
        words
    }

    fn load(store: &Store, session: &mut Session, at: BlockId) -> Result<Self> {
        let wb = store.config().word_bits();
        let span = store.read_words(session, at, 0, MANIFEST_WORDS)?;
        let mut r = span.bits_at(wb, 0);
        let leaf_depth = r.read(8) as u32;
        let widths = Widths {
            x: r.read(7) as u32,
            y: r.read(7) as u32,
            payload: r.read(7) as u32,
        };
        let id_bits = r.read(7) as u32;
        let empty = r.read(1) == 1;
        Ok(Manifest {
            leaf_depth,
            widths,
            id_bits,
            empty,
            max_x: span.word(2),
            leaf_array: BlockId(span.word(3)),
            directory: BlockId(span.word(4)),
        })
    }
}

/// Leaf record: path bits, own base, sibling base (0 if none), then one
/// path structure per ancestor depth.
#[derive(Clone, Debug)]
struct LeafRec {
    path: u64,
    base: BlockId,
    sibling: BlockId,
    paths: Vec<BlockId>,
}

impl LeafRec {
    fn encode(&self) -> Vec<u64> {
        let mut w = vec![self.path, self.base.0, self.sibling.0];
        w.extend(self.paths.iter().map(|p| p.0));
        w
    }

    fn load(store: &Store, session: &mut Session, at: BlockId, depth: u32) -> Result<Self> {
        let span = store.read_words(session, at, 0, 3 + depth as usize)?;
        Ok(LeafRec {
            path: span.word(0),
            base: BlockId(span.word(1)),
            sibling: BlockId(span.word(2)),
            paths: (3..3 + depth as usize)
                .map(|i| BlockId(span.word(i)))
                .collect(),
        })
    }
}

fn encode_own(points: &[Point], wb: u32, widths: Widths) -> Vec<u64> {
    let mut w = BitWriter::new(wb);
    w.push(points.len() as u64, 16);
    for p in points {
        w.push(p.x, widths.x);
        w.push(p.y, widths.y);
        w.push(p.payload, widths.payload);
    }
    w.finish()
}

fn load_own(
    store: &Store,
    session: &mut Session,
    at: BlockId,
    widths: Widths,
) -> Result<Vec<Point>> {
    let cfg = store.config();
    let wb = cfg.word_bits();
    let mut span = store.read_words(session, at, 0, 1)?;
    let count = span.bits_at(wb, 0).read(16) as usize;
    let bits = 16 + count as u64 * (widths.x + widths.y + widths.payload) as u64;
    span.ensure(store, session, at, 0, bits.div_ceil(wb as u64) as usize)?;
    let mut r = span.bits_at(wb, 16);
    Ok((0..count)
        .map(|_| {
            let x = r.read(widths.x);
            let y = r.read(widths.y);
            Point {
                x,
                y,
                payload: r.read(widths.payload),
            }
        })
        .collect())
}

/// Leading points of a `y`-sorted record with `y' <= y`, reading only the
/// blocks they occupy; the flag tells whether that was all of them.
fn load_own_upto(
    store: &Store,
    session: &mut Session,
    at: BlockId,
    widths: Widths,
    y: u64,
) -> Result<(Vec<Point>, bool)> {
    let wb = store.config().word_bits() as u64;
    let mut span = store.read_words(session, at, 0, 1)?;
    let count = span.bits_at(wb as u32, 0).read(16) as usize;
    let pb = (widths.x + widths.y + widths.payload) as u64;
    let mut hits = Vec::new();
    for i in 0..count as u64 {
        let bit = 16 + i * pb;
        span.ensure(
            store,
            session,
            at,
            (bit / wb) as usize,
            ((bit + pb).div_ceil(wb) as usize).max(1),
        )?;
        let mut r = span.bits_at(wb as u32, bit);
        let (x, py) = (r.read(widths.x), r.read(widths.y));
        if py > y {
            return Ok((hits, false));
        }
        hits.push(Point {
            x,
            y: py,
            payload: r.read(widths.payload),
        });
    }
    Ok((hits, true))
}

fn by_y(points: &[Point]) -> Vec<Point> {
    let mut v = points.to_vec();
    v.sort_unstable_by_key(|p| (p.y, p.x));
    v
}

fn depth_of(id: usize) -> u32 {
    usize::BITS - 1 - (id + 1).leading_zeros()
}

fn path_of(id: usize) -> u64 {
    (id + 1 - (1 << depth_of(id))) as u64
}

fn id_of(depth: u32, path: u64) -> usize {
    (1usize << depth) - 1 + path as usize
}

fn sibling(id: usize) -> usize {
    if id % 2 == 1 {
        id + 1
    } else {
        id - 1
    }
}

pub fn build_top(
    store: &mut Store,
    session: &mut Session,
    points: &[Point],
    cfg: &TopConfig,
) -> Result<TopStructure> {
    let sc = store.config();
    let (bw, wb) = (sc.block_words(), sc.word_bits());
    let n = points.len();
    let leaf_param = cfg.leaf_param.unwrap_or_else(|| default_leaf_param(bw, n));
    let tree = PstTree::build(points, PstParams::new(2, leaf_param, bw)?)?;
    let leaf_depth = tree.height() - 1;
    if leaf_depth >= wb || leaf_depth >= 60 {
        return Err(Error::Config(format!("tree too deep ({leaf_depth})")));
    }
    for v in &tree.nodes {
        debug_assert_eq!(v.id, id_of(v.depth, v.path_bits as u64));
    }
    let max_x = points.iter().map(|p| p.x).max().unwrap_or(0);
    if max_x >= sc.word_mask() {
        return Err(Error::OutOfRange(format!("x {max_x} does not fit a word")));
    }
    let widths = Widths::of(points);
    let id_bits = bits_for(tree.nodes.len() as u64).max(1);
    let tagged = Widths {
        payload: widths.payload + id_bits + 1,
        ..widths
    };
    let mut registry = TabRegistry::new();
    let poly =
        |store: &mut Store, session: &mut Session, registry: &mut TabRegistry, pts: &[Point]| {
            build_poly(store, session, registry, pts, &cfg.poly).map(|p| p.descriptor)
        };

    let mut locs = vec![BlockId(0); tree.nodes.len()];
    let mut bases = vec![BlockId(0); tree.nodes.len()];
    for v in tree.leaves() {
        bases[v.id] = poly(store, session, &mut registry, &v.own)?;
    }
    let tag = |p: &Point, origin: usize, marked: bool| Point {
        payload: (((p.payload << id_bits) | origin as u64) << 1) | marked as u64,
        ..*p
    };
    for v in tree.leaves() {
        let ancestors: Vec<usize> =
            std::iter::successors(v.parent, |&a| tree.node(a).parent).collect();
        // ancestors[0] is the parent; the one at depth d is ancestors[len - 1 - d].
        let mut paths = Vec::with_capacity(leaf_depth as usize);
        for d in 0..leaf_depth as usize {
            let mut pts = Vec::new();
            for &a in &ancestors[..ancestors.len() - d] {
                let mut members = vec![a];
                if a != 0 {
                    members.push(sibling(a));
                }
                for m in members {
                    let node = tree.node(m);
                    pts.extend(node.own.iter().map(|p| tag(p, m, node.marked == Some(*p))));
                }
            }
            if tagged.payload > 64 {
                return Err(Error::Config("payload too wide to tag with origin".into()));
            }
            paths.push(poly(store, session, &mut registry, &pts)?);
        }
        let rec = LeafRec {
            path: v.path_bits as u64,
            base: bases[v.id],
            sibling: if v.id == 0 {
                BlockId(0)
            } else {
                bases[sibling(v.id)]
            },
            paths,
        };
        locs[v.id] = store.append_record(session, &rec.encode())?;
    }
    // The directory holds own-point records sorted by y; for a leaf that is
    // all of its points, read when the leaf lies inside the query range.
    let mut dir = vec![0u64; tree.nodes.len()];
    for v in &tree.nodes {
        dir[v.id] = store
            .append_record(session, &encode_own(&by_y(&v.own), wb, widths))?
            .0;
    }
    let directory = store.append_record(session, &dir)?;

    let mut array = vec![0u64; max_x as usize + 1];
    for v in tree.leaves() {
        if v.x_lo > max_x {
            continue;
        }
        let hi = v.x_hi.min(max_x);
        array[v.x_lo as usize..=hi as usize].fill(locs[v.id].0);
    }
    let leaf_array = store.append_record(session, &array)?;
    let m = Manifest {
        max_x,
        leaf_array,
        directory,
        leaf_depth,
        widths,
        id_bits,
        empty: n == 0,
    };
    let manifest = store.append_record(session, &m.encode(wb))?;
    Ok(TopStructure {
        manifest,
        len: n,
        leaf_depth,
        leaves: tree.leaves().count(),
        leaf_param,
    })
}

impl TopStructure {
    pub fn query(
        &self,
        store: &Store,
        session: &mut Session,
        x1: u64,
        x2: u64,
        y: u64,
    ) -> Result<Vec<Point>> {
        query_top(store, session, self.manifest, x1, x2, y)
    }
}

struct Query<'a, 's> {
    store: &'a Store,
    session: &'s mut Session,
    m: Manifest,
    x1: u64,
    x2: u64,
    y: u64,
    out: Vec<Point>,
}

/// Points with `x1 <= x <= x2` and `y' <= y`.
pub fn query_top(
    store: &Store,
    session: &mut Session,
    manifest: BlockId,
    x1: u64,
    x2: u64,
    y: u64,
) -> Result<Vec<Point>> {
    if x1 > x2 {
        return Ok(Vec::new());
    }
    let m = Manifest::load(store, session, manifest)?;
    if m.empty || x1 > m.max_x {
        return Ok(Vec::new());
    }
    let mut q = Query {
        store,
        session,
        m,
        x1,
        x2,
        y,
        out: Vec::new(),
    };
    q.run()?;
    Ok(q.out)
}

impl Query<'_, '_> {
    fn run(&mut self) -> Result<()> {
        let h = self.m.leaf_depth;
        let (a, b) = (self.x1 as usize, self.x2.min(self.m.max_x) as usize);
        let mut span = self
            .store
            .read_words(self.session, self.m.leaf_array, a, a + 1)?;
        span.ensure(self.store, self.session, self.m.leaf_array, b, b + 1)?;
        let (l1, l2) = (BlockId(span.word(a)), BlockId(span.word(b)));
        let r1 = LeafRec::load(self.store, self.session, l1, h)?;
        let r2 = if l2 == l1 {
            r1.clone()
        } else {
            LeafRec::load(self.store, self.session, l2, h)?
        };

        let mut bases = BTreeSet::new();
        bases.extend([r1.base, r2.base]);
        // Leaves are in x order by path; a sibling matters only if it lies
        // between the two end leaves. The root leaf has none.
        if h > 0 {
            for r in [&r1, &r2] {
                if (r1.path..=r2.path).contains(&(r.path ^ 1)) {
                    bases.insert(r.sibling);
                }
            }
        }
        for base in bases {
            self.poly(base)?;
        }
        if h == 0 {
            return Ok(());
        }
        let (dl, _, _) = lca_path(h, r1.path as u128, h, r2.path as u128, 1);
        let mut tagged = query_poly(
            self.store,
            self.session,
            r1.paths[0],
            self.x1,
            self.x2,
            self.y,
        )?;
        if h >= dl + 3 {
            tagged.extend(query_poly(
                self.store,
                self.session,
                r2.paths[dl as usize + 2],
                self.x1,
                self.x2,
                self.y,
            )?);
        }
        let ib = self.m.id_bits;
        let mut by_origin: BTreeMap<usize, (usize, bool)> = BTreeMap::new();
        for p in tagged {
            let origin = ((p.payload >> 1) & ((1 << ib) - 1)) as usize;
            let e = by_origin.entry(origin).or_default();
            e.0 += 1;
            e.1 |= p.payload & 1 == 1;
            self.out.push(Point {
                payload: p.payload >> (ib + 1),
                ..p
            });
        }
        let on_path = |id: usize| {
            let d = depth_of(id);
            let p = path_of(id);
            (r1.path >> (h - d)) == p || (r2.path >> (h - d)) == p
        };
        for (origin, (count, marked)) in by_origin {
            if on_path(origin) {
                continue;
            }
            if cfg!(debug_assertions) {
                let own = self.own_unmetered(origin)?;
                check(Check::MarkedPoint, marked == (count == own), || {
                    format!("node {origin}: marked {marked}, {count}/{own}")
                });
            }
            if marked {
                self.descend(origin)?;
            }
        }
        Ok(())
    }

    fn own_unmetered(&self, id: usize) -> Result<usize> {
        let dir = self.store.peek_words(self.m.directory, id, id + 1)?;
        Ok(load_own(
            self.store,
            &mut Session::new(),
            BlockId(dir.word(id)),
            self.m.widths,
        )?
        .len())
    }

    fn poly(&mut self, desc: BlockId) -> Result<()> {
        let hits = query_poly(self.store, self.session, desc, self.x1, self.x2, self.y)?;
        self.out.extend(hits);
        Ok(())
    }

    /// `v` lies inside the x-range and all its own points were reported.
    fn descend(&mut self, v: usize) -> Result<()> {
        let (c0, c1) = (2 * v + 1, 2 * v + 2);
        let mut dir = self
            .store
            .read_words(self.session, self.m.directory, c0, c0 + 1)?;
        dir.ensure(self.store, self.session, self.m.directory, c1, c1 + 1)?;
        let children = [BlockId(dir.word(c0)), BlockId(dir.word(c1))];
        let leaves = depth_of(c0) == self.m.leaf_depth;
        for (id, at) in [c0, c1].into_iter().zip(children) {
            let (hits, all) = load_own_upto(self.store, self.session, at, self.m.widths, self.y)?;
            let entered = all && !hits.is_empty() && !leaves;
            if entered {
                check(
                    Check::RecursionGuard,
                    hits.iter().all(|p| p.x >= self.x1 && p.x <= self.x2),
                    || format!("node {id} is not inside [{}, {}]", self.x1, self.x2),
                );
            }
            self.out.extend(hits);
            if entered {
                self.descend(id)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checks;
    use crate::emsim::SimConfig;
    use crate::oracle::brute_threesided;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(bw: usize) -> (Store, Session) {
        (Store::new(SimConfig::new(bw, 32).unwrap()), Session::new())
    }

    fn rank_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
        let mut ys: Vec<u64> = (1..=n as u64).collect();
        ys.shuffle(rng);
        ys.iter()
            .enumerate()
            .map(|(i, &y)| Point::with_payload(i as u64 + 1, y, i as u64))
            .collect()
    }

    fn sorted(mut v: Vec<Point>) -> Vec<Point> {
        v.sort();
        v
    }

    #[test]
    fn heap_ids() {
        assert_eq!((depth_of(0), path_of(0)), (0, 0));
        assert_eq!((depth_of(5), path_of(5)), (2, 2));
        assert_eq!(id_of(3, 7), 14);
        assert_eq!(sibling(5), 6);
        assert_eq!(sibling(6), 5);
    }

    #[test]
    fn single_leaf_delegates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = rank_points(&mut rng, 100);
        let (mut st, mut s) = store(4);
        let t = build_top(&mut st, &mut s, &pts, &TopConfig::default()).unwrap();
        assert_eq!(t.leaf_depth, 0);
        for (a, b, y) in [(1, 100, 100), (5, 60, 30), (60, 5, 30), (200, 300, 5)] {
            assert_eq!(
                sorted(t.query(&st, &mut Session::new(), a, b, y).unwrap()),
                brute_threesided(&pts, a, b, y)
            );
        }
    }

    #[test]
    fn empty() {
        let (mut st, mut s) = store(4);
        let t = build_top(&mut st, &mut s, &[], &TopConfig::default()).unwrap();
        assert!(t
            .query(&st, &mut Session::new(), 0, 10, 10)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn duplicate_x_rejected() {
        let (mut st, mut s) = store(4);
        let pts = [Point::new(1, 1), Point::new(1, 2)];
        assert!(build_top(&mut st, &mut s, &pts, &TopConfig::default()).is_err());
    }

    #[test]
    fn leaf_array_first_leaf_for_small_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts: Vec<Point> = rank_points(&mut rng, 300)
            .into_iter()
            .map(|p| Point { x: p.x + 10, ..p })
            .collect();
        let (mut st, mut s) = store(4);
        let cfg = TopConfig {
            leaf_param: Some(8),
            ..Default::default()
        };
        let t = build_top(&mut st, &mut s, &pts, &cfg).unwrap();
        let m = Manifest::load(&st, &mut Session::new(), t.manifest).unwrap();
        let first = LeafRec::load(
            &st,
            &mut Session::new(),
            BlockId(st.peek_words(m.leaf_array, 0, 1).unwrap().word(0)),
            m.leaf_depth,
        )
        .unwrap();
        assert_eq!(first.path, 0);
        assert_eq!(
            sorted(t.query(&st, &mut Session::new(), 0, 12, 1000).unwrap()),
            brute_threesided(&pts, 0, 12, 1000)
        );
    }

    #[test]
    fn random_queries_multi_level() {
        let before = checks::total_failures();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for bw in [4, 8, 16] {
            for (n, l) in [(500, Some(4)), (2000, Some(16)), (3000, None)] {
                let pts = rank_points(&mut rng, n);
                let (mut st, mut s) = store(bw);
                let t = build_top(
                    &mut st,
                    &mut s,
                    &pts,
                    &TopConfig {
                        leaf_param: l,
                        ..Default::default()
                    },
                )
                .unwrap();
                for _ in 0..200 {
                    let a = rng.gen_range(0..=n as u64 + 1);
                    let b = if rng.gen_bool(0.5) {
                        a + rng.gen_range(0..40)
                    } else {
                        rng.gen_range(0..=n as u64 + 1)
                    };
                    let y = rng.gen_range(0..=n as u64 + 1);
                    let got = t.query(&st, &mut Session::new(), a, b, y).unwrap();
                    let dup = got.len();
                    let got = sorted(got);
                    assert_eq!(got.len(), dup);
                    assert_eq!(
                        got,
                        brute_threesided(&pts, a, b, y),
                        "B={bw} n={n} l={l:?} q=({a},{b},{y})"
                    );
                }
            }
        }
        assert_eq!(checks::total_failures(), before);
    }

    #[test]
    fn duplicate_y_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Point> = (1..=600)
            .map(|x| Point::with_payload(x, rng.gen_range(0..4), x))
            .collect();
        let (mut st, mut s) = store(4);
        let t = build_top(
            &mut st,
            &mut s,
            &pts,
            &TopConfig {
                leaf_param: Some(6),
                ..Default::default()
            },
        )
        .unwrap();
        for _ in 0..300 {
            let a = rng.gen_range(0..=601);
            let b = rng.gen_range(a..=602);
            let y = rng.gen_range(0..5);
            assert_eq!(
                sorted(t.query(&st, &mut Session::new(), a, b, y).unwrap()),
                brute_threesided(&pts, a, b, y)
            );
        }
    }
}
