//! Step functions `time -> value` stored compactly.
//!
//! Most histories have one or two entries, so a full predecessor node per
//! history wastes a block each. Short histories are bit-packed into a shared
//! region, never straddling a block, and read with one I/O. Histories too
//! long for one block fall back to a [`PackedPredecessor`].
//!
//! A reference is one word: the top bit set means a region word address,
//! clear means a predecessor-structure root.

use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, Store};
use crate::error::{Error, Result};
use crate::packedpred::{self, PackedPredecessor, PredMode};

const LEN_BITS: u32 = 16;
const WIDTH_BITS: u32 = 7;

fn tag(word_bits: u32) -> u64 {
    1u64 << (word_bits - 1)
}

/// Writes every history (each sorted by strictly increasing time) and
/// returns one reference word per history.
pub fn write_all(
    store: &mut Store,
    session: &mut Session,
    lists: &[Vec<(u64, u64)>],
    time_bits: u32,
) -> Result<Vec<u64>> {
    let cfg = store.config();
    let (bw, wb) = (cfg.block_words(), cfg.word_bits());
    let mut refs = vec![0u64; lists.len()];
    let mut region: Vec<u64> = Vec::new();
    let mut placed: Vec<(usize, usize)> = Vec::new();
    for (i, h) in lists.iter().enumerate() {
        let vb = h.iter().map(|e| bits_for(e.1)).max().unwrap_or(0);
        let bits = LEN_BITS + 2 * WIDTH_BITS + h.len() as u32 * (time_bits + vb);
        if bits as u64 <= cfg.block_bits() && !h.is_empty() {
            let mut w = BitWriter::new(wb);
            w.push(h.len() as u64, LEN_BITS);
            w.push(time_bits as u64, WIDTH_BITS);
            w.push(vb as u64, WIDTH_BITS);
            for &(t, v) in h {
                w.push(t, time_bits);
                w.push(v, vb);
            }
            let words = w.finish();
            let room = bw - region.len() % bw;
            if words.len() > room {
                region.resize(region.len() + room, 0);
            }
            placed.push((i, region.len()));
            region.extend(words);
        } else {
            let keys: Vec<u64> = h.iter().map(|e| e.0).collect();
            let vals: Vec<u64> = h.iter().map(|e| e.1).collect();
            let p = PackedPredecessor::build(
                store,
                session,
                &keys,
                &vals,
                time_bits.max(1),
                PredMode::Sketch,
            )?;
            if p.root.0 & tag(wb) != 0 {
                return Err(Error::WordOverflow {
                    value: p.root.0,
                    word_bits: wb,
                });
            }
            refs[i] = p.root.0;
        }
    }
    if !region.is_empty() {
        let base = store.append_record(session, &region)?.0 as usize * bw;
        for (i, off) in placed {
            let addr = (base + off) as u64;
            if addr & tag(wb) != 0 || addr >= cfg.word_mask() {
                return Err(Error::WordOverflow {
                    value: addr,
                    word_bits: wb,
                });
            }
            refs[i] = addr | tag(wb);
        }
    }
    Ok(refs)
}

/// Value of the last entry with time `<= t`.
pub fn lookup(store: &Store, session: &mut Session, href: u64, t: u64) -> Result<Option<u64>> {
    let cfg = store.config();
    let wb = cfg.word_bits();
    if href & tag(wb) == 0 {
        return Ok(packedpred::predecessor(store, session, BlockId(href), t)?.map(|e| e.1));
    }
    let bw = cfg.block_words();
    let addr = (href & !tag(wb)) as usize;
    let (block, off) = (BlockId((addr / bw) as u64), addr % bw);
    let span = store.read_words(session, block, off, bw)?;
    let mut r = span.bits_at(wb, off as u64 * wb as u64);
    let len = r.read(LEN_BITS) as usize;
    let tb = r.read(WIDTH_BITS) as u32;
    let vb = r.read(WIDTH_BITS) as u32;
    let mut best = None;
    for _ in 0..len {
        let time = r.read(tb);
        let v = r.read(vb);
        if time > t {
            break;
        }
        best = Some(v);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emsim::SimConfig;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_scan(raw in proptest::collection::vec(proptest::collection::btree_map(0u64..5000, 0u64..100_000, 0..40), 1..30), probes in proptest::collection::vec(0u64..5100, 20)) {
            let lists: Vec<Vec<(u64, u64)>> = raw.into_iter().map(|m| m.into_iter().collect()).collect();
            let mut st = Store::new(SimConfig::new(4, 32).unwrap());
            let mut s = Session::new();
            let refs = write_all(&mut st, &mut s, &lists, 13).unwrap();
            for (h, &r) in lists.iter().zip(&refs) {
                for &t in &probes {
                    let want = h.iter().rev().find(|e| e.0 <= t).map(|e| e.1);
                    let mut q = Session::new();
                    prop_assert_eq!(lookup(&st, &mut q, r, t).unwrap(), want);
                    if r & tag(32) != 0 {
                        prop_assert_eq!(q.stats().reads, 1);
                    }
                }
            }
        }
    }

    #[test]
    fn short_histories_share_blocks() {
        let lists: Vec<Vec<(u64, u64)>> = (0..40).map(|i| vec![(0, i), (i + 1, i + 100)]).collect();
        let mut st = Store::new(SimConfig::new(8, 32).unwrap());
        let mut s = Session::new();
        write_all(&mut st, &mut s, &lists, 8).unwrap();
        assert!(st.len() <= 10, "{} blocks", st.len());
    }
}
