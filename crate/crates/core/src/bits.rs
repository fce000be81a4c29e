//! Packed bit strings.
//!
//! Bits are stored MSB-first: bit `i` is bit `63 - i % 64` of word `i / 64`,
//! which makes the big-endian byte image of the words identical to the
//! MSB-first byte packing used in every file format of this crate. Bits past
//! `len` in the last word are always zero.

use std::fmt;

use rand::RngCore;

#[derive(Clone, Default, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = Self::default();
        for b in bits {
            out.push(b);
        }
        out
    }

    /// Parses a string of `0`/`1` characters, bit 0 first. Other characters
    /// (spaces, underscores) are skipped.
    pub fn from_str_bits(s: &str) -> Self {
        Self::from_bits(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    /// Takes the first `len` bits of an MSB-first packed byte slice.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Self {
        assert!(len <= bytes.len() * 8, "not enough bytes for {len} bits");
        let mut words = vec![0u64; len.div_ceil(64)];
        for (w, chunk) in words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_be_bytes(buf);
        }
        let mut out = Self { words, len };
        out.clear_tail();
        out
    }

    /// MSB-first packed bytes; the last byte is zero-padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    pub fn random<R: RngCore + ?Sized>(rng: &mut R, len: usize) -> Self {
        let words: Vec<u64> = (0..len.div_ceil(64)).map(|_| rng.next_u64()).collect();
        let mut out = Self { words, len };
        out.clear_tail();
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / 64] >> (63 - i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (63 - i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, value: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, value);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!(width <= 64);
        if width == 0 {
            return;
        }
        let value = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let offset = (self.len % 64) as u32;
        let aligned = value << (64 - width);
        if offset == 0 {
            self.words.push(aligned);
        } else {
            let last = self.words.len() - 1;
            self.words[last] |= aligned >> offset;
            if offset + width > 64 {
                self.words.push(aligned << (64 - offset));
            }
        }
        self.len += width as usize;
    }

    pub fn extend_from(&mut self, other: &BitString) {
        if self.len % 64 == 0 {
            self.words.extend_from_slice(&other.words);
            self.len += other.len;
            return;
        }
        let full = other.len / 64;
        for &w in &other.words[..full] {
            self.push_bits(w, 64);
        }
        let rest = (other.len % 64) as u32;
        if rest > 0 {
            self.push_bits(other.words[full] >> (64 - rest), rest);
        }
    }

    /// Bits `[start, start + len)` as a new string.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitString {
            words: Vec::with_capacity(len.div_ceil(64)),
            len: 0,
        };
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let take = (end - pos).min(64) as u32;
            out.push_bits(self.read_bits(pos, take), take);
            pos += take as usize;
        }
        out
    }

    /// Reads `width <= 64` bits starting at `pos` as an MSB-first integer.
    #[inline]
    pub fn read_bits(&self, pos: usize, width: u32) -> u64 {
        debug_assert!(width <= 64 && pos + width as usize <= self.len);
        if width == 0 {
            return 0;
        }
        let w = pos / 64;
        let off = (pos % 64) as u32;
        let mut v = self.words[w] << off;
        if off > 0 && w + 1 < self.words.len() {
            v |= self.words[w + 1] >> (64 - off);
        }
        v >> (64 - width)
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        BitString {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        }
    }

    /// Bits in reverse order.
    pub fn reversed(&self) -> BitString {
        let mut words = vec![0u64; self.words.len()];
        let shift = (self.words.len() * 64 - self.len) as u32;
        // Reversing all words and their order puts bit len-1 at position
        // `shift`; shift everything left by that amount.
        let rev: Vec<u64> = self.words.iter().rev().map(|w| w.reverse_bits()).collect();
        for i in 0..words.len() {
            words[i] = if shift == 0 {
                rev[i]
            } else {
                let hi = rev[i] << shift;
                let lo = rev.get(i + 1).map_or(0, |n| n >> (64 - shift));
                hi | lo
            };
        }
        BitString { words, len: self.len }
    }

    /// Bits mapped to ±1 (`1 -> +1`, `0 -> -1`).
    pub fn to_signs(&self) -> Vec<f64> {
        self.iter().map(|b| if b { 1.0 } else { -1.0 }).collect()
    }

    pub fn truncate(&mut self, len: usize) {
        if len >= self.len {
            return;
        }
        self.len = len;
        self.words.truncate(len.div_ceil(64));
        self.clear_tail();
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= !0u64 << (64 - rem);
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            let s: String = self.iter().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "BitString({s})")
        } else {
            write!(f, "BitString(len={})", self.len)
        }
    }
}
