//! Block-resident static predecessor search over a small key set.
//!
//! A node packs a one-block *head* followed by an *entry region* of
//! `(key, payload)` pairs. In sketch mode the head holds the
//! distinguishing bit positions of the sorted keys and each key's sketch
//! (its bits at those positions). A query compares sketches in memory, reads
//! the two sketch neighbours to find the longest common prefix with the
//! query, and then repeats the sketch search on a corrected query, so one
//! node costs at most four reads: the head, at most two entry blocks for
//! the neighbours, and one entry block for the answer. In packed mode the
//! head simply holds the sorted keys.
//!
//! Key sets larger than one node's capacity are split into groups whose
//! first keys are indexed by a parent node, whose payloads are the child
//! root ids.
//!
//! Head layout, bit-packed from the first word of the record:
//!
//! | field        | bits |
//! |--------------|------|
//! | mode         | 1    |
//! | leaf         | 1    |
//! | key count    | 10   |
//! | key bits     | 7    |
//! | payload bits | 7    |
//! | positions    | 6    |
//!
//! followed by the positions (6 bits each, high to low) and sketches
//! (`positions` bits each) or, in packed mode, the keys (`key bits` each).
//! Entries never straddle a block boundary. If the head and every entry fit
//! in one block they share it; otherwise entries start at the second block.

use crate::emsim::bits::{bits_for, BitWriter};
use crate::emsim::SpanReader;
use crate::emsim::{BlockId, Session, Store, WordSpan};
use crate::error::{Error, Result};

const HEADER_BITS: u64 = 32;
const POS_BITS: u32 = 6;
const MAX_NODE_KEYS: usize = 1023;

/// Search method used inside a node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum PredMode {
    /// Distinguishing-bit sketches.
    #[default]
    Sketch,
    /// Plain sorted keys in the head block.
    Packed,
}

/// Handle of a built structure. The root block alone identifies it; the
/// rest of the metadata is kept for callers' convenience.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PackedPredecessor {
    pub root: BlockId,
    pub len: usize,
    pub key_bits: u32,
    pub levels: u32,
}

/// Maximum number of keys a single node holds.
pub fn node_capacity(block_bits: u64, key_bits: u32, mode: PredMode) -> usize {
    let avail = block_bits.saturating_sub(HEADER_BITS);
    let cap = match mode {
        PredMode::Sketch => {
            // Worst case: m - 1 distinguishing positions.
            let mut m = 1u64;
            while (m) * POS_BITS as u64 + (m + 1) * m <= avail {
                m += 1;
            }
            m as usize
        }
        PredMode::Packed => (avail / key_bits.max(1) as u64) as usize,
    };
    cap.min(MAX_NODE_KEYS)
}

struct NodeShape {
    mode: PredMode,
    leaf: bool,
    m: usize,
    key_bits: u32,
    payload_bits: u32,
    positions: Vec<u32>,
}

impl NodeShape {
    fn head_bits(&self) -> u64 {
        HEADER_BITS
            + match self.mode {
                PredMode::Sketch => {
                    self.positions.len() as u64 * POS_BITS as u64
                        + self.m as u64 * self.positions.len() as u64
                }
                PredMode::Packed => self.m as u64 * self.key_bits as u64,
            }
    }

    fn entry_bits(&self) -> u64 {
        (self.key_bits + self.payload_bits).max(1) as u64
    }

    /// Bit offset of entry `i` within the record.
    fn entry_pos(&self, i: usize, block_bits: u64) -> u64 {
        let eb = self.entry_bits();
        let head = self.head_bits();
        if head + self.m as u64 * eb <= block_bits {
            head + i as u64 * eb
        } else {
            let per = block_bits / eb;
            block_bits * (1 + i as u64 / per) + (i as u64 % per) * eb
        }
    }
}

fn sketch(key: u64, positions: &[u32]) -> u64 {
    positions
        .iter()
        .fold(0u64, |acc, &p| (acc << 1) | ((key >> p) & 1))
}

/// Highest differing bit of each adjacent key pair, sorted high to low.
fn distinguishing_positions(keys: &[u64]) -> Vec<u32> {
    let mut ps: Vec<u32> = keys
        .windows(2)
        .map(|w| 63 - (w[0] ^ w[1]).leading_zeros())
        .collect();
    ps.sort_unstable_by(|a, b| b.cmp(a));
    ps.dedup();
    ps
}

impl PackedPredecessor {
    /// Builds the structure. `keys` must be strictly increasing and fit in
    /// `key_bits` bits; `payloads` is aligned with `keys`.
    pub fn build(
        store: &mut Store,
        session: &mut Session,
        keys: &[u64],
        payloads: &[u64],
        key_bits: u32,
        mode: PredMode,
    ) -> Result<Self> {
        let cfg = store.config();
        if keys.len() != payloads.len() {
            return Err(Error::Config("keys and payloads differ in length".into()));
        }
        if key_bits as u64 > cfg.block_bits() || key_bits > 64 || key_bits == 0 {
            return Err(Error::Config(format!("unsupported key width {key_bits}")));
        }
        if keys.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedKeys);
        }
        if key_bits < 64 && keys.last().is_some_and(|&k| k >> key_bits != 0) {
            return Err(Error::Config(format!("key does not fit {key_bits} bits")));
        }
        let cap = node_capacity(cfg.block_bits(), key_bits, mode);
        if cap < 2 {
            return Err(Error::Config(
                "block too small for a predecessor node".into(),
            ));
        }
        let (root, levels) =
            build_level(store, session, keys, payloads, key_bits, mode, cap, true)?;
        Ok(PackedPredecessor {
            root,
            len: keys.len(),
            key_bits,
            levels,
        })
    }

    pub fn predecessor(
        &self,
        store: &Store,
        session: &mut Session,
        q: u64,
    ) -> Result<Option<(u64, u64)>> {
        predecessor(store, session, self.root, q)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_level(
    store: &mut Store,
    session: &mut Session,
    keys: &[u64],
    payloads: &[u64],
    key_bits: u32,
    mode: PredMode,
    cap: usize,
    leaf: bool,
) -> Result<(BlockId, u32)> {
    if keys.len() <= cap {
        let root = write_node(store, session, keys, payloads, key_bits, mode, leaf)?;
        return Ok((root, 1));
    }
    let groups = keys.len().div_ceil(cap);
    let mut firsts = Vec::with_capacity(groups);
    let mut children = Vec::with_capacity(groups);
    let mut depth = 0;
    let mut start = 0;
    for g in 0..groups {
        let end = start + (keys.len() - start) / (groups - g);
        let (child, d) = build_level(
            store,
            session,
            &keys[start..end],
            &payloads[start..end],
            key_bits,
            mode,
            cap,
            leaf,
        )?;
        firsts.push(keys[start]);
        children.push(child.0);
        depth = d;
        start = end;
    }
    let (root, d) = build_level(
        store, session, &firsts, &children, key_bits, mode, cap, false,
    )?;
    Ok((root, d + depth))
}

fn write_node(
    store: &mut Store,
    session: &mut Session,
    keys: &[u64],
    payloads: &[u64],
    key_bits: u32,
    mode: PredMode,
    leaf: bool,
) -> Result<BlockId> {
    let cfg = store.config();
    let payload_bits = payloads.iter().map(|&p| bits_for(p)).max().unwrap_or(0);
    if key_bits + payload_bits > 64 + 63 || payload_bits > 64 {
        return Err(Error::Config("payload too wide".into()));
    }
    let shape = NodeShape {
        mode,
        leaf,
        m: keys.len(),
        key_bits,
        payload_bits,
        positions: match mode {
            PredMode::Sketch => distinguishing_positions(keys),
            PredMode::Packed => Vec::new(),
        },
    };
    if (shape.entry_bits()) > cfg.block_bits() {
        return Err(Error::Config("entry wider than a block".into()));
    }
    debug_assert!(shape.head_bits() <= cfg.block_bits());
    let mut w = BitWriter::new(cfg.word_bits());
    w.push(matches!(mode, PredMode::Packed) as u64, 1);
    w.push(leaf as u64, 1);
    w.push(keys.len() as u64, 10);
    w.push(key_bits as u64, 7);
    w.push(payload_bits as u64, 7);
    w.push(shape.positions.len() as u64, 6);
    match mode {
        PredMode::Sketch => {
            for &p in &shape.positions {
                w.push(p as u64, POS_BITS);
            }
            let s = shape.positions.len() as u32;
            for &k in keys {
                w.push(sketch(k, &shape.positions), s);
            }
        }
        PredMode::Packed => {
            for &k in keys {
                w.push(k, key_bits);
            }
        }
    }
    for (i, (&k, &p)) in keys.iter().zip(payloads).enumerate() {
        let pos = shape.entry_pos(i, cfg.block_bits());
        w.pad(pos - w.bit_len());
        w.push(k, key_bits);
        w.push(p, payload_bits);
    }
    store.append_record(session, &w.finish())
}

fn read_shape(r: &mut SpanReader<'_>) -> NodeShape {
    let mode = if r.read(1) == 1 {
        PredMode::Packed
    } else {
        PredMode::Sketch
    };
    let leaf = r.read(1) == 1;
    let m = r.read(10) as usize;
    let key_bits = r.read(7) as u32;
    let payload_bits = r.read(7) as u32;
    let s = r.read(6) as usize;
    let positions = if mode == PredMode::Sketch {
        (0..s).map(|_| r.read(POS_BITS) as u32).collect()
    } else {
        Vec::new()
    };
    NodeShape {
        mode,
        leaf,
        m,
        key_bits,
        payload_bits,
        positions,
    }
}

fn read_entry(
    store: &Store,
    session: &mut Session,
    root: BlockId,
    span: &mut WordSpan,
    shape: &NodeShape,
    i: usize,
) -> Result<(u64, u64)> {
    let cfg = store.config();
    let wb = cfg.word_bits() as u64;
    let pos = shape.entry_pos(i, cfg.block_bits());
    let lo = (pos / wb) as usize;
    let hi = (pos + shape.entry_bits()).div_ceil(wb) as usize;
    span.ensure(store, session, root, lo, hi)?;
    let mut r = span.bits_at(cfg.word_bits(), pos);
    let k = r.read(shape.key_bits);
    let p = r.read(shape.payload_bits);
    Ok((k, p))
}

/// Largest key `<= q` with its payload.
pub fn predecessor(
    store: &Store,
    session: &mut Session,
    root: BlockId,
    q: u64,
) -> Result<Option<(u64, u64)>> {
    let mut node = root;
    loop {
        let mut span = store.read_words(session, node, 0, 1)?;
        let cfg = store.config();
        let bw = cfg.block_words();
        // The head never exceeds one block.
        span.ensure(store, session, node, 0, bw)?;
        let mut r = span.bits_at(cfg.word_bits(), 0);
        let shape = read_shape(&mut r);
        if shape.m == 0 {
            return Ok(None);
        }
        let q = if shape.key_bits < 64 {
            q.min((1u64 << shape.key_bits) - 1)
        } else {
            q
        };
        let idx = match shape.mode {
            PredMode::Packed => {
                let keys: Vec<u64> = (0..shape.m).map(|_| r.read(shape.key_bits)).collect();
                keys.partition_point(|&k| k <= q).checked_sub(1)
            }
            PredMode::Sketch => {
                let s = shape.positions.len() as u32;
                let sketches: Vec<u64> = (0..shape.m).map(|_| r.read(s)).collect();
                sketch_search(store, session, node, &mut span, &shape, &sketches, q)?
            }
        };
        let Some(i) = idx else { return Ok(None) };
        let (k, p) = read_entry(store, session, node, &mut span, &shape, i)?;
        if shape.leaf {
            return Ok(Some((k, p)));
        }
        node = BlockId(p);
    }
}

fn sketch_search(
    store: &Store,
    session: &mut Session,
    node: BlockId,
    span: &mut WordSpan,
    shape: &NodeShape,
    sketches: &[u64],
    q: u64,
) -> Result<Option<usize>> {
    let ps = &shape.positions;
    let r = sketches.partition_point(|&s| s <= sketch(q, ps));
    let mut best: Option<(u32, u64)> = None;
    for i in [r.wrapping_sub(1), r] {
        if i >= shape.m {
            continue;
        }
        let (k, _) = read_entry(store, session, node, span, shape, i)?;
        if k == q {
            return Ok(Some(i));
        }
        let lcp = (k ^ q).leading_zeros();
        if best.is_none_or(|(l, _)| lcp > l) {
            best = Some((lcp, k));
        }
    }
    let (lcp, _) = best.expect("at least one neighbour exists");
    let j = 63 - lcp;
    let above = if j == 63 {
        0
    } else {
        q & !((1u64 << (j + 1)) - 1)
    };
    let count = if (q >> j) & 1 == 1 {
        let e = above | ((1u64 << j) - 1);
        let se = sketch(e, ps);
        sketches.partition_point(|&s| s <= se)
    } else {
        let e = above | (1u64 << j);
        let se = sketch(e, ps);
        sketches.partition_point(|&s| s < se)
    };
    Ok(count.checked_sub(1))
}
