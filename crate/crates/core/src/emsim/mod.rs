//! Simulated external memory.
//!
//! A [`Store`] is an append-only array of fixed-size blocks of `B` words,
//! each word holding at most `w` bits. Every transfer goes through a
//! [`Session`], which counts block reads, block writes and scatter I/Os.
//! There is no cache: reading the same block twice costs two reads. Query
//! code that needs a block more than once within an operation keeps the
//! decoded contents itself.

pub mod bits;
mod dump;

use crate::error::{Error, Result};

pub use bits::{BitReader, BitWriter};

/// Model parameters: `B` words per block, `w` bits per word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SimConfig {
    block_words: usize,
    word_bits: u32,
}

impl SimConfig {
    pub fn new(block_words: usize, word_bits: u32) -> Result<Self> {
        if block_words < 2 {
            return Err(Error::Config(format!(
                "block_words must be >= 2, got {block_words}"
            )));
        }
        if !(16..=64).contains(&word_bits) {
            return Err(Error::Config(format!(
                "word_bits must be in 16..=64, got {word_bits}"
            )));
        }
        Ok(SimConfig {
            block_words,
            word_bits,
        })
    }

    /// `B`.
    pub fn block_words(&self) -> usize {
        self.block_words
    }

    /// `w`.
    pub fn word_bits(&self) -> u32 {
        self.word_bits
    }

    /// `b = B * w`.
    pub fn block_bits(&self) -> u64 {
        self.block_words as u64 * self.word_bits as u64
    }

    pub fn word_mask(&self) -> u64 {
        if self.word_bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.word_bits) - 1
        }
    }

    /// Number of blocks needed to hold `words` words (at least one).
    pub fn blocks_for(&self, words: usize) -> usize {
        words.div_ceil(self.block_words).max(1)
    }
}

/// Dense block identifier, assigned in allocation order starting at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BlockId(pub u64);

impl BlockId {
    pub fn offset(self, k: usize) -> BlockId {
        BlockId(self.0 + k as u64)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for BlockId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Transfer counters of one session.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IoStats {
    pub reads: u64,
    pub writes: u64,
    pub scatter_ios: u64,
}

impl IoStats {
    pub fn since(&self, earlier: &IoStats) -> IoStats {
        IoStats {
            reads: self.reads - earlier.reads,
            writes: self.writes - earlier.writes,
            scatter_ios: self.scatter_ios - earlier.scatter_ios,
        }
    }
}

/// Per-caller accounting context. Sessions are independent of each other,
/// so concurrent readers of one `&Store` each keep exact counts.
#[derive(Debug, Default)]
pub struct Session {
    stats: IoStats,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn stats(&self) -> IoStats {
        self.stats
    }
}

/// The block store.
#[derive(Clone, Debug)]
pub struct Store {
    config: SimConfig,
    words: Vec<u64>,
}

impl Store {
    pub fn new(config: SimConfig) -> Self {
        Store {
            config,
            words: Vec::new(),
        }
    }

    pub fn config(&self) -> SimConfig {
        self.config
    }

    /// Total blocks allocated so far.
    pub fn len(&self) -> usize {
        self.words.len() / self.config.block_words
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Allocates one zero-filled block.
    pub fn allocate(&mut self) -> BlockId {
        let id = BlockId(self.len() as u64);
        self.words
            .resize(self.words.len() + self.config.block_words, 0);
        id
    }

    /// Allocates `count` consecutive zero-filled blocks and returns the first.
    pub fn allocate_run(&mut self, count: usize) -> BlockId {
        let id = BlockId(self.len() as u64);
        self.words
            .resize(self.words.len() + count * self.config.block_words, 0);
        id
    }

    fn range(&self, id: BlockId) -> Result<std::ops::Range<usize>> {
        if id.index() >= self.len() {
            return Err(Error::InvalidBlock(id.0));
        }
        let lo = id.index() * self.config.block_words;
        Ok(lo..lo + self.config.block_words)
    }

    /// Reads one block, charging one read to `session`.
    pub fn read<'s>(&'s self, session: &mut Session, id: BlockId) -> Result<&'s [u64]> {
        let r = self.range(id)?;
        session.stats.reads += 1;
        Ok(&self.words[r])
    }

    /// Uncharged access, for audits and debug-mode checks only.
    pub fn peek(&self, id: BlockId) -> Result<&[u64]> {
        let r = self.range(id)?;
        Ok(&self.words[r])
    }

    /// Replaces the contents of a block. `block` may be shorter than `B`
    /// words; the remainder is zero-filled.
    pub fn write(&mut self, session: &mut Session, id: BlockId, block: &[u64]) -> Result<()> {
        let r = self.range(id)?;
        if block.len() > self.config.block_words {
            return Err(Error::Config(format!(
                "block of {} words exceeds B = {}",
                block.len(),
                self.config.block_words
            )));
        }
        let mask = self.config.word_mask();
        if let Some(&w) = block.iter().find(|&&w| w & !mask != 0) {
            return Err(Error::WordOverflow {
                value: w,
                word_bits: self.config.word_bits,
            });
        }
        let dst = &mut self.words[r];
        dst[..block.len()].copy_from_slice(block);
        dst[block.len()..].fill(0);
        session.stats.writes += 1;
        Ok(())
    }

    /// Fetches up to `B` words at arbitrary `(block, offset)` addresses in one
    /// scatter I/O. An empty request costs nothing.
    pub fn scatter_read(
        &self,
        session: &mut Session,
        addresses: &[(BlockId, usize)],
    ) -> Result<Vec<u64>> {
        if addresses.len() > self.config.block_words {
            return Err(Error::ScatterWidth {
                requested: addresses.len(),
                limit: self.config.block_words,
            });
        }
        let mut out = Vec::with_capacity(addresses.len());
        for &(id, off) in addresses {
            let r = self.range(id)?;
            if off >= self.config.block_words {
                return Err(Error::InvalidAddress {
                    block: id.0,
                    offset: off,
                });
            }
            out.push(self.words[r.start + off]);
        }
        if !addresses.is_empty() {
            session.stats.scatter_ios += 1;
        }
        Ok(out)
    }

    /// Writes `words` into freshly allocated consecutive blocks and returns
    /// the first one. An empty record still occupies one block.
    pub fn append_record(&mut self, session: &mut Session, words: &[u64]) -> Result<BlockId> {
        let bw = self.config.block_words;
        let n = self.config.blocks_for(words.len());
        let first = self.allocate_run(n);
        for (i, chunk) in words.chunks(bw).enumerate() {
            self.write(session, first.offset(i), chunk)?;
        }
        if words.is_empty() {
            self.write(session, first, &[])?;
        }
        Ok(first)
    }

    /// Overwrites a record previously placed with [`Store::append_record`].
    /// The record must not grow past the blocks it already owns.
    pub fn rewrite_record(
        &mut self,
        session: &mut Session,
        first: BlockId,
        words: &[u64],
    ) -> Result<()> {
        for (i, chunk) in words.chunks(self.config.block_words).enumerate() {
            self.write(session, first.offset(i), chunk)?;
        }
        Ok(())
    }

    /// Reads words `lo..hi` of the record starting at `first`, charging one
    /// read per block touched.
    pub fn read_words(
        &self,
        session: &mut Session,
        first: BlockId,
        lo: usize,
        hi: usize,
    ) -> Result<WordSpan> {
        let mut span = WordSpan {
            block_words: self.config.block_words,
            ..Default::default()
        };
        span.ensure(self, session, first, lo, hi)?;
        Ok(span)
    }

    /// Uncharged counterpart of [`Store::read_words`].
    pub fn peek_words(&self, first: BlockId, lo: usize, hi: usize) -> Result<WordSpan> {
        let mut s = Session::new();
        self.read_words(&mut s, first, lo, hi)
    }

    /// Raw word slice of all blocks, in id order.
    pub(crate) fn raw(&self) -> &[u64] {
        &self.words
    }

    pub(crate) fn from_raw(config: SimConfig, words: Vec<u64>) -> Self {
        Store { config, words }
    }
}

/// Blocks of one record held in memory after being paid for, indexed by
/// word position within the record. Blocks need not be contiguous.
#[derive(Clone, Debug, Default)]
pub struct WordSpan {
    block_words: usize,
    blocks: std::collections::BTreeMap<usize, Vec<u64>>,
}

impl WordSpan {
    /// Word at record position `i`. Panics if its block was not read.
    pub fn word(&self, i: usize) -> u64 {
        let bw = self.block_words;
        self.blocks
            .get(&(i / bw))
            .map(|b| b[i % bw])
            .unwrap_or_else(|| panic!("word {i} not loaded"))
    }

    pub fn contains_word(&self, i: usize) -> bool {
        self.block_words > 0 && self.blocks.contains_key(&(i / self.block_words))
    }

    /// Number of blocks held.
    pub fn held(&self) -> usize {
        self.blocks.len()
    }

    /// Bit-level reader positioned at record bit `bit`.
    pub fn bits_at(&self, word_bits: u32, bit: u64) -> SpanReader<'_> {
        SpanReader {
            span: self,
            word_bits,
            pos: bit,
        }
    }

    /// Makes words `lo..hi` available, reading only blocks not yet held.
    pub fn ensure(
        &mut self,
        store: &Store,
        session: &mut Session,
        first: BlockId,
        lo: usize,
        hi: usize,
    ) -> Result<()> {
        let bw = store.config().block_words();
        self.block_words = bw;
        if hi <= lo {
            return Ok(());
        }
        for b in lo / bw..=(hi - 1) / bw {
            if let std::collections::btree_map::Entry::Vacant(e) = self.blocks.entry(b) {
                e.insert(store.read(session, first.offset(b))?.to_vec());
            }
        }
        Ok(())
    }
}

/// Sequential field reader over a [`WordSpan`].
pub struct SpanReader<'a> {
    span: &'a WordSpan,
    word_bits: u32,
    pos: u64,
}

impl SpanReader<'_> {
    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn seek(&mut self, pos: u64) {
        self.pos = pos;
    }

    pub fn skip(&mut self, bits: u64) {
        self.pos += bits;
    }

    pub fn read(&mut self, width: u32) -> u64 {
        let wb = self.word_bits as u64;
        let mut out = 0u64;
        let mut left = width;
        while left > 0 {
            let wi = (self.pos / wb) as usize;
            let off = (self.pos % wb) as u32;
            let room = self.word_bits - off;
            let take = room.min(left);
            let m = if take >= 64 {
                u64::MAX
            } else {
                (1u64 << take) - 1
            };
            let chunk = (self.span.word(wi) >> (room - take)) & m;
            out = if take == 64 {
                chunk
            } else {
                (out << take) | chunk
            };
            left -= take;
            self.pos += take as u64;
        }
        out
    }

    pub fn read_u128(&mut self, width: u32) -> u128 {
        if width > 64 {
            let hi = self.read(width - 64) as u128;
            (hi << 64) | self.read(64) as u128
        } else {
            self.read(width) as u128
        }
    }
}
