//! Node-level three-sided structure for queries aligned to child boundaries.
//!
//! Same y-sweep into a persistent 1d list as [`crate::microbase`], but the
//! start block comes from a per-boundary history instead of a shape table:
//! for boundary `β_i` a step function ([`crate::history`]) maps each time to the record
//! holding the predecessor of `β_i` from that time on. Entries are added
//! only when the holding block changes.
//!
//! Boundaries `β_0 < ... < β_f` split x into `f` children; child `i` covers
//! `[β_i, β_{i+1})`. The last boundary is an exclusive upper end.

use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::history;
use crate::microbase::Widths;
use crate::persist1d::{self, P1Layout, Persist1dBuilder};
use crate::point::Point;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CatalogStructure {
    pub descriptor: BlockId,
    pub len: usize,
    /// Number of boundaries, `f + 1`.
    pub boundaries: usize,
}

/// Build statistics, mostly for audits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CatalogStats {
    pub splits: usize,
    /// Entries in each boundary history.
    pub history_lens: Vec<usize>,
    /// Blocks allocated by the build.
    pub blocks: usize,
}

const HEADER_BITS: u32 = 16 + P1Layout::ENCODED_BITS;

fn header_words(word_bits: u32) -> usize {
    HEADER_BITS.div_ceil(word_bits) as usize
}

/// What a query needs besides the boundaries: the record layout and one
/// history reference per boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogParts {
    pub layout: P1Layout,
    pub roots: Vec<u64>,
}

/// Builds the persistent list and boundary histories without a descriptor,
/// for callers that keep the parts in their own records.
pub fn build_catalog_parts(
    store: &mut Store,
    session: &mut Session,
    points: &[Point],
    boundaries: &[u64],
    widths: Widths,
) -> Result<(CatalogParts, CatalogStats)> {
    if boundaries.len() < 2 || boundaries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedKeys);
    }
    let (lo, hi) = (boundaries[0], *boundaries.last().unwrap());
    if let Some(p) = points.iter().find(|p| p.x < lo || p.x >= hi) {
        return Err(Error::OutOfRange(format!("x {} outside [{lo}, {hi})", p.x)));
    }
    let before = store.len();
    let mut sweep = points.to_vec();
    sweep.sort_unstable_by_key(|p| (p.y, p.x));
    let layout = P1Layout::new(store, widths.x, widths.y, widths.payload)?;
    let mut builder = Persist1dBuilder::new(store, session, layout)?;
    let mut histories: Vec<Vec<(u64, usize)>> = boundaries
        .iter()
        .map(|&b| vec![(0, builder.locate(b))])
        .collect();
    for p in &sweep {
        builder.insert(store, session, p.x, p.y, p.payload)?;
        for (h, &b) in histories.iter_mut().zip(boundaries) {
            let id = builder.locate(b);
            let last = h.last_mut().unwrap();
            if last.1 != id {
                if last.0 == p.y {
                    last.1 = id;
                } else {
                    h.push((p.y, id));
                }
            }
        }
    }
    let splits = builder.splits();
    let locations: Vec<u64> = (1..=builder.block_count())
        .map(|id| builder.location(id).0)
        .collect();
    builder.seal(store, session)?;

    // The last boundary only ends ranges and never starts a scan.
    let lists: Vec<Vec<(u64, u64)>> = histories[..histories.len() - 1]
        .iter()
        .map(|h| h.iter().map(|e| (e.0, locations[e.1 - 1])).collect())
        .collect();
    let mut roots = history::write_all(store, session, &lists, widths.y.max(1))?;
    roots.push(0);
    let stats = CatalogStats {
        splits,
        history_lens: histories.iter().map(Vec::len).collect(),
        blocks: store.len() - before,
    };
    Ok((CatalogParts { layout, roots }, stats))
}

pub fn build_catalog(
    store: &mut Store,
    session: &mut Session,
    points: &[Point],
    boundaries: &[u64],
    widths: Widths,
) -> Result<(CatalogStructure, CatalogStats)> {
    let before = store.len();
    let (parts, mut stats) = build_catalog_parts(store, session, points, boundaries, widths)?;
    let wb = store.config().word_bits();
    let mut w = BitWriter::new(wb);
    w.push(boundaries.len() as u64, 16);
    parts.layout.write(&mut w);
    let mut words = w.finish();
    words.resize(header_words(wb), 0);
    words.extend_from_slice(boundaries);
    words.extend_from_slice(&parts.roots);
    let descriptor = store.append_record(session, &words)?;
    stats.blocks = store.len() - before;
    Ok((
        CatalogStructure {
            descriptor,
            len: points.len(),
            boundaries: boundaries.len(),
        },
        stats,
    ))
}

/// Points with `x1 <= x < end` and `y' <= y`, starting from the history of
/// the boundary `x1`.
pub fn scan_catalog(
    store: &Store,
    session: &mut Session,
    layout: &P1Layout,
    root: u64,
    x1: u64,
    end: u64,
    y: u64,
) -> Result<Vec<Point>> {
    let Some(loc) = history::lookup(store, session, root, y)? else {
        return Ok(Vec::new());
    };
    let mut hits = Vec::new();
    persist1d::scan_from(
        store,
        session,
        layout,
        BlockId(loc),
        x1,
        end - 1,
        y,
        &mut hits,
    )?;
    Ok(hits
        .into_iter()
        .map(|e| Point {
            x: e.coord,
            y: e.time,
            payload: e.payload,
        })
        .collect())
}

impl CatalogStructure {
    /// Points with `β_lo <= x < β_hi` and `y' <= y`.
    pub fn query(
        &self,
        store: &Store,
        session: &mut Session,
        lo: usize,
        hi: usize,
        y: u64,
    ) -> Result<Vec<Point>> {
        query_catalog(store, session, self.descriptor, lo, hi, y)
    }

    /// Same as [`CatalogStructure::query`] with coordinates; `x1` must be a
    /// boundary and `x2 + 1` must be a boundary.
    pub fn query_range(
        &self,
        store: &Store,
        session: &mut Session,
        x1: u64,
        x2: u64,
        y: u64,
    ) -> Result<Vec<Point>> {
        if x1 > x2 {
            return Ok(Vec::new());
        }
        let hw = header_words(store.config().word_bits());
        let bounds = store.peek_words(self.descriptor, hw, hw + self.boundaries)?;
        let all: Vec<u64> = (hw..hw + self.boundaries).map(|i| bounds.word(i)).collect();
        let lo = all.iter().position(|&b| b == x1).ok_or(Error::Misaligned)?;
        let hi = all
            .iter()
            .position(|&b| Some(b) == x2.checked_add(1))
            .ok_or(Error::Misaligned)?;
        self.query(store, session, lo, hi, y)
    }
}

pub fn query_catalog(
    store: &Store,
    session: &mut Session,
    descriptor: BlockId,
    lo: usize,
    hi: usize,
    y: u64,
) -> Result<Vec<Point>> {
    let wb = store.config().word_bits();
    let hw = header_words(wb);
    let mut span = store.read_words(session, descriptor, 0, hw)?;
    let mut r = span.bits_at(wb, 0);
    let count = r.read(16) as usize;
    let layout = P1Layout::read(&mut r, wb);
    if lo > hi || hi >= count {
        return Err(Error::Misaligned);
    }
    if lo == hi {
        return Ok(Vec::new());
    }
    let root_at = hw + count + lo;
    span.ensure(store, session, descriptor, hw + lo, hw + lo + 1)?;
    span.ensure(store, session, descriptor, hw + hi, hw + hi + 1)?;
    span.ensure(store, session, descriptor, root_at, root_at + 1)?;
    let (x1, end) = (span.word(hw + lo), span.word(hw + hi));
    scan_catalog(store, session, &layout, span.word(root_at), x1, end, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emsim::SimConfig;
    use crate::microbase::{build_micro, TabRegistry};
    use crate::oracle::brute_threesided;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn store(bw: usize) -> (Store, Session) {
        (Store::new(SimConfig::new(bw, 32).unwrap()), Session::new())
    }

    fn instance(rng: &mut ChaCha8Rng, n: usize, f: usize) -> (Vec<Point>, Vec<u64>) {
        let span = (n as u64 * 3).max(f as u64 + 1);
        let mut xs: Vec<u64> = (1..=span).collect();
        xs.shuffle(rng);
        let pts: Vec<Point> = xs[..n]
            .iter()
            .enumerate()
            .map(|(i, &x)| Point::with_payload(x, rng.gen_range(0..n as u64 + 5), i as u64))
            .collect();
        let mut cuts: Vec<u64> = (2..=span).collect();
        cuts.shuffle(rng);
        let mut b: Vec<u64> = cuts[..f - 1].to_vec();
        b.push(1);
        b.push(span + 1);
        b.sort_unstable();
        (pts, b)
    }

    fn sorted(mut v: Vec<Point>) -> Vec<Point> {
        v.sort();
        v
    }

    #[test]
    fn no_splits_means_single_history_entries() {
        let pts = [Point::new(2, 1), Point::new(5, 0)];
        let (mut st, mut s) = store(8);
        let (c, stats) =
            build_catalog(&mut st, &mut s, &pts, &[0, 4, 10], Widths::of(&pts)).unwrap();
        assert_eq!(stats.splits, 0);
        assert!(stats.history_lens.iter().all(|&l| l == 1));
        let mut q = Session::new();
        assert!(c.query(&st, &mut q, 0, 2, 0).unwrap().len() == 1);
        assert_eq!(
            sorted(c.query(&st, &mut q, 0, 2, 9).unwrap()),
            sorted(pts.to_vec())
        );
    }

    #[test]
    fn rejects_bad_boundaries() {
        let (mut st, mut s) = store(4);
        let pts = [Point::new(2, 1)];
        assert!(matches!(
            build_catalog(&mut st, &mut s, &pts, &[0, 5, 5], Widths::of(&pts)),
            Err(Error::UnsortedKeys)
        ));
        assert!(build_catalog(&mut st, &mut s, &pts, &[3, 5], Widths::of(&pts)).is_err());
    }

    #[test]
    fn misaligned_range_rejected() {
        let pts = [Point::new(2, 1), Point::new(5, 0)];
        let (mut st, mut s) = store(4);
        let (c, _) = build_catalog(&mut st, &mut s, &pts, &[0, 4, 10], Widths::of(&pts)).unwrap();
        let mut q = Session::new();
        let err = c.query_range(&st, &mut q, 1, 9, 5).unwrap_err();
        assert_eq!(err.to_string(), "catalog requires aligned range");
        assert_eq!(
            c.query_range(&st, &mut q, 4, 9, 5).unwrap(),
            vec![Point::new(5, 0)]
        );
        assert!(c.query(&st, &mut q, 2, 1, 5).is_err());
    }

    #[test]
    fn histories_change_only_at_splits() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (pts, b) = instance(&mut rng, 64, 8);
        let (mut st, mut s) = store(4);
        let (_, stats) = build_catalog(&mut st, &mut s, &pts, &b, Widths::of(&pts)).unwrap();
        assert!(stats.splits > 0);
        for &l in &stats.history_lens {
            assert!(l <= stats.splits + 1);
        }
    }

    #[test]
    fn space_is_linear_in_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for bw in [4, 8, 16] {
            let f = bw;
            let (pts, b) = instance(&mut rng, f * bw, f);
            let (mut st, mut s) = store(bw);
            let (_, stats) = build_catalog(&mut st, &mut s, &pts, &b, Widths::of(&pts)).unwrap();
            assert!(stats.blocks <= 6 * 2 * f, "B={bw}: {} blocks", stats.blocks);
        }
    }

    #[test]
    fn aligned_queries_match_oracle_and_microbase() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for bw in [4, 8, 16] {
            for _ in 0..6 {
                let f = rng.gen_range(2..=8);
                let n = rng.gen_range(1..=f * bw);
                let (pts, b) = instance(&mut rng, n, f);
                let (mut st, mut s) = store(bw);
                let w = Widths::of(&pts);
                let (c, _) = build_catalog(&mut st, &mut s, &pts, &b, w).unwrap();
                let micro =
                    build_micro(&mut st, &mut s, &mut TabRegistry::new(), &pts, w, n).unwrap();
                for lo in 0..b.len() {
                    for hi in lo..b.len() {
                        for y in [0, 1, n as u64 / 2, n as u64 + 10] {
                            let mut q = Session::new();
                            let got = sorted(c.query(&st, &mut q, lo, hi, y).unwrap());
                            if lo == hi {
                                assert!(got.is_empty());
                                continue;
                            }
                            let want = brute_threesided(&pts, b[lo], b[hi] - 1, y);
                            assert_eq!(got, want);
                            let m = sorted(
                                micro
                                    .query(&st, &mut Session::new(), b[lo], b[hi] - 1, y)
                                    .unwrap(),
                            );
                            assert_eq!(m, want);
                        }
                    }
                }
            }
        }
    }
}
