//! Insertion-only 1d range reporting made partially persistent.
//!
//! The live structure is a linked list of blocks, each holding fewer than
//! `L` entries, with every coordinate in a block smaller than every
//! coordinate in its successor. Entries inside a block are unsorted. When a
//! block reaches `L` entries it is frozen and replaced by two fresh blocks
//! holding the lower and upper halves.
//!
//! Persistence: frozen blocks stay on disk; blocks get increasing ids from
//! 1; a directory maps ids to record locations; each block keeps the
//! history of its successor pointer (see [`crate::history`]) keyed by the
//! time of each change; entries carry their insertion time. Times are
//! non-decreasing labels, so several inserts may share a time, and the
//! state "at time `t`" is the one after every insert labelled `<= t`.
//!
//! Record layout of a block (bit-packed): entry count, history root
//! (one word), then the entries as `(coord, time, payload)`.

use std::collections::HashSet;

use crate::emsim::bits::bits_for;
use crate::emsim::{BitWriter, BlockId, Session, SpanReader, Store};
use crate::error::{Error, Result};
use crate::history;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Entry {
    pub coord: u64,
    pub time: u64,
    pub payload: u64,
}

/// Field widths and block geometry shared by the builder and queries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct P1Layout {
    pub coord_bits: u32,
    pub time_bits: u32,
    pub payload_bits: u32,
    /// Maximum entries stored in a block, `L - 1`.
    pub cap: usize,
    /// Physical blocks per record.
    pub record_blocks: usize,
    word_bits: u32,
}

impl P1Layout {
    /// Chooses the smallest record size whose capacity reaches `B - 1`.
    pub fn new(store: &Store, coord_bits: u32, time_bits: u32, payload_bits: u32) -> Result<Self> {
        let cfg = store.config();
        if coord_bits > 64 || time_bits > 64 || payload_bits > 64 {
            return Err(Error::Config("field wider than 64 bits".into()));
        }
        let eb = (coord_bits + time_bits + payload_bits).max(1) as u64;
        let target = (cfg.block_words() - 1).max(1) as u64;
        let mut r = 1u64;
        loop {
            let avail = r * cfg.block_bits();
            let cnt_bits = bits_for(avail / eb) as u64;
            let hb = cnt_bits + cfg.word_bits() as u64;
            if avail > hb && (avail - hb) / eb >= target {
                let cap = ((avail - hb) / eb) as usize;
                return Ok(P1Layout {
                    coord_bits,
                    time_bits,
                    payload_bits,
                    cap,
                    record_blocks: r as usize,
                    word_bits: cfg.word_bits(),
                });
            }
            r += 1;
        }
    }

    fn count_bits(&self) -> u32 {
        bits_for(self.cap as u64)
    }

    fn encode(&self, entries: &[Entry], history: Option<BlockId>) -> Vec<u64> {
        let mut w = BitWriter::new(self.word_bits);
        w.push(entries.len() as u64, self.count_bits());
        w.push(history.map_or(0, |h| h.0), self.word_bits);
        for e in entries {
            w.push(e.coord, self.coord_bits);
            w.push(e.time, self.time_bits);
            w.push(e.payload, self.payload_bits);
        }
        w.finish()
    }

    pub fn write(&self, w: &mut BitWriter) {
        w.push(self.coord_bits as u64, 7);
        w.push(self.time_bits as u64, 7);
        w.push(self.payload_bits as u64, 7);
        w.push(self.cap as u64, 20);
        w.push(self.record_blocks as u64, 8);
    }

    pub fn read(r: &mut SpanReader<'_>, word_bits: u32) -> Self {
        P1Layout {
            coord_bits: r.read(7) as u32,
            time_bits: r.read(7) as u32,
            payload_bits: r.read(7) as u32,
            cap: r.read(20) as usize,
            record_blocks: r.read(8) as usize,
            word_bits,
        }
    }

    /// Bits taken by [`P1Layout::write`].
    pub const ENCODED_BITS: u32 = 49;
}

#[derive(Clone, Debug)]
struct BlockState {
    entries: Vec<Entry>,
    frozen: bool,
    location: BlockId,
    /// `(time, successor id)`; id 0 means no successor.
    history: Vec<(u64, usize)>,
}

/// The structure while inserts are still being applied.
#[derive(Clone, Debug)]
pub struct Persist1dBuilder {
    layout: P1Layout,
    /// Index `i` holds the block with id `i + 1`.
    blocks: Vec<BlockState>,
    /// Live block ids in coordinate order.
    live: Vec<usize>,
    coords: HashSet<u64>,
    last_time: u64,
    inserts: usize,
    splits: usize,
}

impl Persist1dBuilder {
    /// Starts with one empty live block (id 1).
    pub fn new(store: &mut Store, session: &mut Session, layout: P1Layout) -> Result<Self> {
        let mut b = Persist1dBuilder {
            layout,
            blocks: Vec::new(),
            live: Vec::new(),
            coords: HashSet::new(),
            last_time: 0,
            inserts: 0,
            splits: 0,
        };
        let id = b.create(store, session, Vec::new(), 0, 0)?;
        b.live.push(id);
        Ok(b)
    }

    pub fn layout(&self) -> P1Layout {
        self.layout
    }

    fn create(
        &mut self,
        store: &mut Store,
        session: &mut Session,
        entries: Vec<Entry>,
        time: u64,
        succ: usize,
    ) -> Result<usize> {
        let words = self.layout.encode(&entries, None);
        let mut padded = words;
        padded.resize(self.layout.record_blocks * store.config().block_words(), 0);
        let location = store.append_record(session, &padded)?;
        self.blocks.push(BlockState {
            entries,
            frozen: false,
            location,
            history: vec![(time, succ)],
        });
        Ok(self.blocks.len())
    }

    fn block(&self, id: usize) -> &BlockState {
        &self.blocks[id - 1]
    }

    /// Position in the live list of the block holding the largest
    /// coordinate `<= x`, or of the head block if there is none.
    fn live_pos(&self, x: u64) -> usize {
        let mut pos = 0;
        for (i, &id) in self.live.iter().enumerate() {
            let b = self.block(id);
            if b.entries.iter().any(|e| e.coord <= x) {
                pos = i;
            } else if !b.entries.is_empty() {
                break;
            }
        }
        pos
    }

    /// Id of the live block containing the predecessor of `x` (the head if
    /// `x` precedes every coordinate).
    pub fn locate(&self, x: u64) -> usize {
        self.live[self.live_pos(x)]
    }

    /// Id of the first live block.
    pub fn live_head(&self) -> usize {
        self.live[0]
    }

    /// Live block ids in coordinate order.
    pub fn live_ids(&self) -> &[usize] {
        &self.live
    }

    /// Entries currently held by block `id`.
    pub fn entries_of(&self, id: usize) -> &[Entry] {
        &self.block(id).entries
    }

    /// Record location of block `id`.
    pub fn location(&self, id: usize) -> BlockId {
        self.block(id).location
    }

    pub fn insert(
        &mut self,
        store: &mut Store,
        session: &mut Session,
        coord: u64,
        time: u64,
        payload: u64,
    ) -> Result<()> {
        if !self.coords.insert(coord) {
            return Err(Error::DuplicateCoordinate(coord));
        }
        if time < self.last_time {
            return Err(Error::Config(format!(
                "time {time} precedes {}",
                self.last_time
            )));
        }
        let l = self.layout;
        if (l.coord_bits < 64 && coord >> l.coord_bits != 0)
            || (l.time_bits < 64 && time >> l.time_bits != 0)
            || (l.payload_bits < 64 && payload >> l.payload_bits != 0)
        {
            return Err(Error::Config("entry field exceeds its width".into()));
        }
        self.last_time = time;
        self.inserts += 1;
        let pos = self.live_pos(coord);
        let id = self.live[pos];
        let entry = Entry {
            coord,
            time,
            payload,
        };
        if self.block(id).entries.len() < self.layout.cap {
            self.blocks[id - 1].entries.push(entry);
            let b = self.block(id);
            let words = self.layout.encode(&b.entries, None);
            store.rewrite_record(session, b.location, &words)?;
            return Ok(());
        }
        // The block reaches L entries: freeze it and split around the median.
        self.splits += 1;
        let mut all = self.block(id).entries.clone();
        all.push(entry);
        all.sort_unstable_by_key(|e| e.coord);
        let upper = all.split_off(all.len() / 2);
        let old_succ = self.block(id).history.last().map_or(0, |h| h.1);
        self.blocks[id - 1].frozen = true;
        let hi = self.create(store, session, upper, time, old_succ)?;
        let lo = self.create(store, session, all, time, hi)?;
        self.live.splice(pos..=pos, [lo, hi]);
        if pos > 0 {
            let prev = self.live[pos - 1];
            push_history(&mut self.blocks[prev - 1].history, time, lo);
        }
        Ok(())
    }

    pub fn inserts(&self) -> usize {
        self.inserts
    }

    pub fn splits(&self) -> usize {
        self.splits
    }

    /// Number of block ids created so far.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Coordinates of each live block, in list order.
    pub fn live_blocks(&self) -> Vec<Vec<u64>> {
        self.live
            .iter()
            .map(|&id| {
                let mut c: Vec<u64> = self.block(id).entries.iter().map(|e| e.coord).collect();
                c.sort_unstable();
                c
            })
            .collect()
    }

    /// Ids of blocks frozen so far.
    pub fn frozen_ids(&self) -> Vec<usize> {
        (1..=self.blocks.len())
            .filter(|&id| self.block(id).frozen)
            .collect()
    }

    /// Materializes successor histories and the id directory.
    pub fn seal(self, store: &mut Store, session: &mut Session) -> Result<Persist1d> {
        let lists: Vec<Vec<(u64, u64)>> = self
            .blocks
            .iter()
            .map(|b| {
                b.history
                    .iter()
                    .map(|h| {
                        (
                            h.0,
                            if h.1 == 0 {
                                0
                            } else {
                                self.block(h.1).location.0 + 1
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        let refs = history::write_all(store, session, &lists, self.layout.time_bits.max(1))?;
        for (b, &href) in self.blocks.iter().zip(&refs) {
            let words = self.layout.encode(&b.entries, Some(BlockId(href)));
            store.rewrite_record(session, b.location, &words)?;
        }
        let dir: Vec<u64> = self.blocks.iter().map(|b| b.location.0).collect();
        let directory = store.append_record(session, &dir)?;
        Ok(Persist1d {
            layout: self.layout,
            directory,
            blocks: self.blocks.len(),
        })
    }
}

fn push_history(h: &mut Vec<(u64, usize)>, time: u64, succ: usize) {
    match h.last_mut() {
        Some(last) if last.0 == time => last.1 = succ,
        _ => h.push((time, succ)),
    }
}

/// A sealed, queryable structure.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Persist1d {
    pub layout: P1Layout,
    pub directory: BlockId,
    pub blocks: usize,
}

impl Persist1d {
    /// Record location of block `id`, one read.
    pub fn resolve(&self, store: &Store, session: &mut Session, id: usize) -> Result<BlockId> {
        resolve(store, session, self.directory, self.blocks, id)
    }

    /// Entries with `x1 <= coord <= x2` and `time <= t`, starting the scan
    /// at block `start_id`, which must be the block that held the
    /// predecessor of `x1` (or the head) at time `t`.
    pub fn query_at_time(
        &self,
        store: &Store,
        session: &mut Session,
        x1: u64,
        x2: u64,
        t: u64,
        start_id: usize,
    ) -> Result<Vec<Entry>> {
        let loc = self.resolve(store, session, start_id)?;
        let mut out = Vec::new();
        scan_from(store, session, &self.layout, loc, x1, x2, t, &mut out)?;
        Ok(out)
    }
}

pub fn resolve(
    store: &Store,
    session: &mut Session,
    directory: BlockId,
    blocks: usize,
    id: usize,
) -> Result<BlockId> {
    if id == 0 || id > blocks {
        return Err(Error::OutOfRange(format!("block id {id} of {blocks}")));
    }
    let span = store.read_words(session, directory, id - 1, id)?;
    Ok(BlockId(span.word(id - 1)))
}

/// Runs the time-`t` list scan from the record at `loc`, appending hits
/// to `out`. Returns the number of blocks visited.
#[allow(clippy::too_many_arguments)]
pub fn scan_from(
    store: &Store,
    session: &mut Session,
    layout: &P1Layout,
    mut loc: BlockId,
    x1: u64,
    x2: u64,
    t: u64,
    out: &mut Vec<Entry>,
) -> Result<usize> {
    let bw = store.config().block_words();
    let wb = store.config().word_bits();
    let mut visited = 0;
    loop {
        visited += 1;
        let span = store.read_words(session, loc, 0, layout.record_blocks * bw)?;
        let mut r = span.bits_at(wb, 0);
        let count = r.read(layout.count_bits()) as usize;
        let hist = BlockId(r.read(wb));
        let mut stop = false;
        for _ in 0..count {
            let coord = r.read(layout.coord_bits);
            let time = r.read(layout.time_bits);
            let payload = r.read(layout.payload_bits);
            if time > t {
                continue;
            }
            if coord > x2 {
                stop = true;
            } else if coord >= x1 {
                out.push(Entry {
                    coord,
                    time,
                    payload,
                });
            }
        }
        if stop {
            return Ok(visited);
        }
        match history::lookup(store, session, hist.0, t)? {
            Some(succ) if succ != 0 => loc = BlockId(succ - 1),
            _ => return Ok(visited),
        }
    }
}
