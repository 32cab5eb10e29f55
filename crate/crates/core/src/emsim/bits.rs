//! Bit-level packing of fixed-width fields into `w`-bit words.
//!
//! Fields are laid out most significant bit first: the first field pushed
//! occupies the high bits of word 0, and a field may straddle a word
//! boundary.

/// Minimum number of bits needed to represent `v` (zero needs zero bits).
pub fn bits_for(v: u64) -> u32 {
    64 - v.leading_zeros()
}

#[derive(Clone, Debug)]
pub struct BitWriter {
    word_bits: u32,
    words: Vec<u64>,
    /// Bits used in the last word.
    used: u32,
}

impl BitWriter {
    pub fn new(word_bits: u32) -> Self {
        BitWriter {
            word_bits,
            words: Vec::new(),
            used: word_bits,
        }
    }

    pub fn bit_len(&self) -> u64 {
        if self.words.is_empty() {
            0
        } else {
            (self.words.len() as u64 - 1) * self.word_bits as u64 + self.used as u64
        }
    }

    /// Appends the low `width` bits of `value`. Panics if `value` does not fit.
    pub fn push(&mut self, value: u64, width: u32) {
        assert!(width <= 64);
        assert!(
            width == 64 || value >> width == 0,
            "value {value} does not fit {width} bits"
        );
        let mut left = width;
        while left > 0 {
            if self.used == self.word_bits {
                self.words.push(0);
                self.used = 0;
            }
            let room = self.word_bits - self.used;
            let take = room.min(left);
            let chunk = (value >> (left - take)) & mask(take);
            let last = self.words.last_mut().expect("word pushed above");
            *last |= chunk << (room - take);
            self.used += take;
            left -= take;
        }
    }

    pub fn push_u128(&mut self, value: u128, width: u32) {
        if width > 64 {
            self.push((value >> 64) as u64, width - 64);
            self.push(value as u64, 64);
        } else {
            self.push(value as u64, width);
        }
    }

    /// Pads with zero bits up to the next multiple of `bits`.
    pub fn align_to(&mut self, bits: u64) {
        let rem = self.bit_len() % bits;
        if rem != 0 {
            self.pad(bits - rem);
        }
    }

    pub fn pad(&mut self, mut bits: u64) {
        while bits > 0 {
            let take = bits.min(64) as u32;
            self.push(0, take);
            bits -= take as u64;
        }
    }

    /// Pads to a whole word boundary.
    pub fn align_word(&mut self) {
        self.align_to(self.word_bits as u64);
    }

    pub fn finish(self) -> Vec<u64> {
        self.words
    }
}

fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Sequential reader over a word slice.
#[derive(Clone, Debug)]
pub struct BitReader<'a> {
    words: &'a [u64],
    word_bits: u32,
    pos: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(words: &'a [u64], word_bits: u32, pos: u64) -> Self {
        BitReader {
            words,
            word_bits,
            pos,
        }
    }

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
        let v = get(self.words, self.word_bits, self.pos, width);
        self.pos += width as u64;
        v
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

/// Reads the `width`-bit field starting at bit `pos`.
pub fn get(words: &[u64], word_bits: u32, pos: u64, width: u32) -> u64 {
    let mut out = 0u64;
    let mut left = width;
    let mut p = pos;
    while left > 0 {
        let wi = (p / word_bits as u64) as usize;
        let off = (p % word_bits as u64) as u32;
        let room = word_bits - off;
        let take = room.min(left);
        let chunk = (words[wi] >> (room - take)) & mask(take);
        out = if take == 64 {
            chunk
        } else {
            (out << take) | chunk
        };
        left -= take;
        p += take as u64;
    }
    out
}
