//! Three-sided reporting on a handful of points.
//!
//! The points are swept bottom-up into a [`Persist1dBuilder`] with x as
//! the coordinate and y as the insertion time. A query `[x1, x2] × (-∞, y]`
//! becomes a 1d query at time `y` that starts from the block holding the
//! predecessor of `x1`. That block id depends only on the rank-space shape
//! of the point set and the ranks of `x1` and `y`, so it is tabulated once
//! per shape in a [`TabRegistry`] and shared by every structure with the
//! same shape.

use std::collections::HashMap;

use num_bigint::BigUint;

use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::packedpred::{self, PackedPredecessor, PredMode};
use crate::persist1d::{self, P1Layout, Persist1dBuilder};
use crate::point::Point;

/// Default capacity: `floor(b^(1/8))`, at least 4.
pub fn default_m_max(block_bits: u64) -> usize {
    let mut r = 1usize;
    while ((r + 1) as f64).powi(8) <= block_bits as f64 {
        r += 1;
    }
    r.max(4)
}

/// Field widths shared by structures that should share tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Widths {
    pub x: u32,
    pub y: u32,
    pub payload: u32,
}

impl Widths {
    pub fn of(points: &[Point]) -> Self {
        let max = |f: fn(&Point) -> u64| points.iter().map(f).max().map_or(1, bits_for).max(1);
        Widths {
            x: max(|p| p.x),
            y: max(|p| p.y),
            payload: max(|p| p.payload),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct ShapeKey {
    m: usize,
    cap: usize,
}

/// Start-block tables keyed by point-set shape.
#[derive(Debug, Default)]
pub struct TabRegistry {
    tables: HashMap<(ShapeKey, BigUint), BlockId>,
    entries: usize,
}

impl TabRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shapes(&self) -> usize {
        self.tables.len()
    }

    /// Table entries stored across all shapes.
    pub fn entries(&self) -> usize {
        self.entries
    }
}

/// Factorial-base code of the y-rank permutation of `points` (sorted by x).
pub fn shape_code(points: &[Point]) -> BigUint {
    let mut by_y: Vec<usize> = (0..points.len()).collect();
    by_y.sort_by_key(|&i| (points[i].y, points[i].x));
    let mut rank = vec![0usize; points.len()];
    for (r, &i) in by_y.iter().enumerate() {
        rank[i] = r;
    }
    let mut code = BigUint::from(0u32);
    for i in 0..rank.len() {
        let smaller_after = rank[i + 1..].iter().filter(|&&r| r < rank[i]).count();
        code = code * (rank.len() - i) + smaller_after;
    }
    code
}

/// Handle to a built structure; everything lives in the store behind the
/// descriptor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MicroStructure {
    pub descriptor: BlockId,
    pub len: usize,
}

struct Descriptor {
    m: usize,
    layout: P1Layout,
    directory: BlockId,
    blocks: usize,
    x_pred: BlockId,
    y_pred: BlockId,
    table: BlockId,
}

impl Descriptor {
    fn encode(&self, word_bits: u32) -> Vec<u64> {
        let mut w = BitWriter::new(word_bits);
        w.push(self.m as u64, 16);
        self.layout.write(&mut w);
        w.push(self.blocks as u64, 32);
        for id in [self.directory, self.x_pred, self.y_pred, self.table] {
            w.push(id.0, word_bits);
        }
        w.finish()
    }

    fn words(word_bits: u32) -> usize {
        (16 + P1Layout::ENCODED_BITS + 32 + 4 * word_bits).div_ceil(word_bits) as usize
    }

    fn load(store: &Store, session: &mut Session, at: BlockId) -> Result<Self> {
        let wb = store.config().word_bits();
        let span = store.read_words(session, at, 0, Self::words(wb))?;
        let mut r = span.bits_at(wb, 0);
        let m = r.read(16) as usize;
        let layout = P1Layout::read(&mut r, wb);
        let blocks = r.read(32) as usize;
        let mut ids = [BlockId(0); 4];
        for id in &mut ids {
            *id = BlockId(r.read(wb));
        }
        Ok(Descriptor {
            m,
            layout,
            directory: ids[0],
            blocks,
            x_pred: ids[1],
            y_pred: ids[2],
            table: ids[3],
        })
    }
}

/// Builds the structure over `points`. `widths` fixes the field widths of
/// the 1d records; pass the same value to structures that should share
/// tables. Points must have distinct x.
pub fn build_micro(
    store: &mut Store,
    session: &mut Session,
    registry: &mut TabRegistry,
    points: &[Point],
    widths: Widths,
    m_max: usize,
) -> Result<MicroStructure> {
    let m = points.len();
    if m > m_max {
        return Err(Error::MicroCapacity { len: m, cap: m_max });
    }
    let mut by_x = points.to_vec();
    by_x.sort_unstable_by_key(|p| p.x);
    if let Some(w) = by_x.windows(2).find(|w| w[0].x == w[1].x) {
        return Err(Error::DuplicateCoordinate(w[0].x));
    }
    let layout = P1Layout::new(store, widths.x, widths.y, widths.payload)?;
    let mut builder = Persist1dBuilder::new(store, session, layout)?;
    let mut sweep = by_x.clone();
    sweep.sort_unstable_by_key(|p| (p.y, p.x));

    let key = (ShapeKey { m, cap: layout.cap }, shape_code(&by_x));
    let known = registry.tables.get(&key).copied();
    let side = m + 1;
    let mut table = if known.is_none() {
        vec![0u64; side * side]
    } else {
        Vec::new()
    };
    let record = |b: &Persist1dBuilder, ry: usize, table: &mut Vec<u64>| {
        if table.is_empty() {
            return;
        }
        for rx1 in 0..side {
            let id = if rx1 == 0 {
                b.live_head()
            } else {
                b.locate(by_x[rx1 - 1].x)
            };
            table[rx1 * side + ry] = id as u64;
        }
    };
    record(&builder, 0, &mut table);
    for (i, p) in sweep.iter().enumerate() {
        builder.insert(store, session, p.x, p.y, p.payload)?;
        record(&builder, i + 1, &mut table);
    }
    let p1 = builder.seal(store, session)?;

    let table_at = match known {
        Some(t) => t,
        None => {
            let t = store.append_record(session, &table)?;
            registry.tables.insert(key, t);
            registry.entries += table.len();
            t
        }
    };

    // Rank maps: x -> number of points with x' <= x, same for y.
    let xs: Vec<u64> = by_x.iter().map(|p| p.x).collect();
    let xr: Vec<u64> = (1..=m as u64).collect();
    let x_pred = PackedPredecessor::build(store, session, &xs, &xr, widths.x, PredMode::Sketch)?;
    let mut ys: Vec<u64> = Vec::new();
    let mut yr: Vec<u64> = Vec::new();
    for (i, p) in sweep.iter().enumerate() {
        if ys.last() == Some(&p.y) {
            *yr.last_mut().unwrap() = i as u64 + 1;
        } else {
            ys.push(p.y);
            yr.push(i as u64 + 1);
        }
    }
    let y_pred = PackedPredecessor::build(store, session, &ys, &yr, widths.y, PredMode::Sketch)?;

    let d = Descriptor {
        m,
        layout,
        directory: p1.directory,
        blocks: p1.blocks,
        x_pred: x_pred.root,
        y_pred: y_pred.root,
        table: table_at,
    };
    let descriptor = store.append_record(session, &d.encode(store.config().word_bits()))?;
    Ok(MicroStructure { descriptor, len: m })
}

impl MicroStructure {
    pub fn query(
        &self,
        store: &Store,
        session: &mut Session,
        x1: u64,
        x2: u64,
        y: u64,
    ) -> Result<Vec<Point>> {
        query_micro(store, session, self.descriptor, x1, x2, y)
    }
}

/// Points with `x1 <= x <= x2` and `y' <= y`.
pub fn query_micro(
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
    let d = Descriptor::load(store, session, descriptor)?;
    if d.m == 0 {
        return Ok(Vec::new());
    }
    let Some((_, ry)) = packedpred::predecessor(store, session, d.y_pred, y)? else {
        return Ok(Vec::new());
    };
    let rx1 = packedpred::predecessor(store, session, d.x_pred, x1)?.map_or(0, |(_, r)| r);
    let side = d.m + 1;
    let slot = rx1 as usize * side + ry as usize;
    let span = store.read_words(session, d.table, slot, slot + 1)?;
    let start = span.word(slot) as usize;
    let loc = persist1d::resolve(store, session, d.directory, d.blocks, start)?;
    let mut hits = Vec::new();
    persist1d::scan_from(store, session, &d.layout, loc, x1, x2, y, &mut hits)?;
    Ok(hits
        .into_iter()
        .map(|e| Point {
            x: e.coord,
            y: e.time,
            payload: e.payload,
        })
        .collect())
}
