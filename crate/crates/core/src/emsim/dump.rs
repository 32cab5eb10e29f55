//! Flat binary image of a store.
//!
//! Layout: the magic `EMS1`, then `block_words`, `word_bits` and the block
//! count as little-endian `u64`s, then every block in id order with each
//! word stored big-endian in `ceil(word_bits / 8)` bytes.

use std::io::{Read, Write};

use super::{SimConfig, Store};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"EMS1";

impl Store {
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        let cfg = self.config();
        out.write_all(MAGIC)?;
        out.write_all(&(cfg.block_words() as u64).to_le_bytes())?;
        out.write_all(&(cfg.word_bits() as u64).to_le_bytes())?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        let nbytes = cfg.word_bits().div_ceil(8) as usize;
        let mut buf = Vec::with_capacity(self.raw().len() * nbytes);
        for &w in self.raw() {
            buf.extend_from_slice(&w.to_be_bytes()[8 - nbytes..]);
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Store> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("bad store magic".into()));
        }
        let mut u = [0u8; 8];
        let mut next = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut u)?;
            Ok(u64::from_le_bytes(u))
        };
        let block_words = next(&mut input)? as usize;
        let word_bits = next(&mut input)? as u32;
        let count = next(&mut input)? as usize;
        let cfg = SimConfig::new(block_words, word_bits)?;
        let nbytes = word_bits.div_ceil(8) as usize;
        let total = count
            .checked_mul(block_words)
            .ok_or_else(|| Error::Format("block count overflow".into()))?;
        let mut buf = vec![0u8; total * nbytes];
        input.read_exact(&mut buf)?;
        let mask = cfg.word_mask();
        let mut words = Vec::with_capacity(total);
        for chunk in buf.chunks_exact(nbytes) {
            let mut be = [0u8; 8];
            be[8 - nbytes..].copy_from_slice(chunk);
            let w = u64::from_be_bytes(be);
            if w & !mask != 0 {
                return Err(Error::WordOverflow {
                    value: w,
                    word_bits,
                });
            }
            words.push(w);
        }
        Ok(Store::from_raw(cfg, words))
    }
}
