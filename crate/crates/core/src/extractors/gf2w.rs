//! Binary extension fields GF(2^w) for the one-bit extractor.
//!
//! Elements are polynomials over GF(2) stored little-endian: coefficient of
//! `x^j` is bit `j % 64` of word `j / 64`. Supported widths and their
//! reduction polynomials are fixed in [`SUPPORTED_WIDTHS`].

use super::ExtractError;

/// Largest supported field width, bits.
pub const MAX_WIDTH: u32 = 256;
const WORDS: usize = (MAX_WIDTH / 64) as usize;

/// `(w, low terms of the modulus)`: the field is `GF(2)[x] / (x^w + low)`.
pub const SUPPORTED_WIDTHS: [(u32, u64); 8] = [
    (2, 0b11),                                  // x^2 + x + 1
    (4, 0b11),                                  // x^4 + x + 1
    (8, 0b1_1011),                              // x^8 + x^4 + x^3 + x + 1
    (16, 0b10_1011),                            // x^16 + x^5 + x^3 + x + 1
    (32, 0b1000_1101),                          // x^32 + x^7 + x^3 + x^2 + 1
    (64, 0b1_1011),                             // x^64 + x^4 + x^3 + x + 1
    (128, 0b1000_0111),                         // x^128 + x^7 + x^2 + x + 1
    (256, (1 << 10) | (1 << 5) | (1 << 2) | 1), // x^256 + x^10 + x^5 + x^2 + 1
];

pub type Element = [u64; WORDS];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gf2w {
    width: u32,
    low: u64,
    words: usize,
    top_mask: u64,
}

impl Gf2w {
    pub fn new(width: u32) -> Result<Self, ExtractError> {
        let (_, low) = SUPPORTED_WIDTHS
            .iter()
            .copied()
            .find(|(w, _)| *w == width)
            .ok_or(ExtractError::InvalidFieldSize(width as usize))?;
        let words = width.div_ceil(64) as usize;
        let rem = width % 64;
        Ok(Self {
            width,
            low,
            words,
            top_mask: if rem == 0 { !0 } else { (1u64 << rem) - 1 },
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    /// Bit `j` of the modulus for `j < width`.
    pub fn modulus_low(&self) -> u64 {
        self.low
    }

    /// Reads `width` bits of `bits` starting at `pos`; the first bit becomes
    /// the coefficient of `x^(w-1)`. Positions at or past `limit` read as 0.
    pub fn element_from_bits(&self, bits: &crate::bits::BitString, pos: usize, limit: usize) -> Element {
        let mut e = [0u64; WORDS];
        let w = self.width as usize;
        // walk from the most significant coefficient down in 64-bit pieces
        let mut remaining = w;
        let mut cursor = pos;
        while remaining > 0 {
            let take = remaining.min(64);
            let avail = limit.saturating_sub(cursor).min(take);
            let mut v = if avail > 0 { bits.read_bits(cursor, avail as u32) } else { 0 };
            if avail < take {
                v <<= take - avail;
            }
            // these `take` bits are coefficients remaining-1 ..= remaining-take
            let low_index = remaining - take;
            let (word, off) = (low_index / 64, low_index % 64);
            e[word] |= v << off;
            if off + take > 64 {
                e[word + 1] |= v >> (64 - off);
            }
            remaining -= take;
            cursor += take;
        }
        e
    }

    #[inline]
    fn mul_x(&self, a: &mut Element) {
        let top_bit = (a[self.words - 1] >> ((self.width - 1) % 64)) & 1;
        for i in (1..self.words).rev() {
            a[i] = (a[i] << 1) | (a[i - 1] >> 63);
        }
        a[0] <<= 1;
        a[self.words - 1] &= self.top_mask;
        if top_bit == 1 {
            a[0] ^= self.low;
        }
    }

    pub fn add(&self, a: &Element, b: &Element) -> Element {
        let mut out = *a;
        for i in 0..self.words {
            out[i] ^= b[i];
        }
        out
    }

    /// Product by shift-and-add with interleaved reduction.
    pub fn mul(&self, a: &Element, b: &Element) -> Element {
        let mut acc = [0u64; WORDS];
        for bit in (0..self.width as usize).rev() {
            self.mul_x(&mut acc);
            if (a[bit / 64] >> (bit % 64)) & 1 == 1 {
                for i in 0..self.words {
                    acc[i] ^= b[i];
                }
            }
        }
        acc
    }

    /// Parity of `a AND b`.
    pub fn inner_product(&self, a: &Element, b: &Element) -> bool {
        let mut acc = 0u64;
        for i in 0..self.words {
            acc ^= a[i] & b[i];
        }
        acc.count_ones() & 1 == 1
    }

    pub fn one(&self) -> Element {
        let mut e = [0u64; WORDS];
        e[0] = 1;
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense polynomial over GF(2), coefficient `i` at index `i`.
    #[derive(Clone, PartialEq, Debug)]
    struct Poly(Vec<bool>);

    impl Poly {
        fn trim(mut self) -> Self {
            while self.0.last() == Some(&false) {
                self.0.pop();
            }
            self
        }
        fn degree(&self) -> Option<usize> {
            self.0.iter().rposition(|&b| b)
        }
        fn modulus(w: u32, low: u64) -> Self {
            let mut v = vec![false; w as usize + 1];
            v[w as usize] = true;
            for j in 0..64.min(w as usize) {
                v[j] = (low >> j) & 1 == 1;
            }
            Poly(v)
        }
        fn rem(&self, m: &Poly) -> Poly {
            let mut r = self.0.clone();
            let dm = m.degree().unwrap();
            for i in (dm..r.len()).rev() {
                if r[i] {
                    for j in 0..=dm {
                        r[i - dm + j] ^= m.0[j];
                    }
                }
            }
            r.truncate(dm);
            Poly(r).trim()
        }
        fn square_mod(&self, m: &Poly) -> Poly {
            let mut v = vec![false; self.0.len() * 2];
            for (i, &b) in self.0.iter().enumerate() {
                v[2 * i] = b;
            }
            Poly(v).rem(m)
        }
        fn add(&self, o: &Poly) -> Poly {
            let n = self.0.len().max(o.0.len());
            Poly((0..n)
                .map(|i| self.0.get(i).copied().unwrap_or(false) ^ o.0.get(i).copied().unwrap_or(false))
                .collect())
            .trim()
        }
        fn gcd(a: Poly, b: Poly) -> Poly {
            let (mut a, mut b) = (a.trim(), b.trim());
            while b.degree().is_some() {
                let r = a.rem(&b);
                a = b;
                b = r;
            }
            a
        }
        fn mul_mod(&self, o: &Poly, m: &Poly) -> Poly {
            let mut v = vec![false; self.0.len() + o.0.len()];
            for (i, &a) in self.0.iter().enumerate() {
                if a {
                    for (j, &b) in o.0.iter().enumerate() {
                        v[i + j] ^= b;
                    }
                }
            }
            Poly(v).rem(m)
        }
    }

    /// Rabin's test for degree w = 2^s: irreducible iff x^(2^w) = x mod f and
    /// gcd(x^(2^(w/2)) - x, f) = 1.
    fn rabin_irreducible(w: u32, low: u64) -> bool {
        let f = Poly::modulus(w, low);
        let x = Poly(vec![false, true]);
        let mut p = x.clone();
        let mut half = None;
        for i in 1..=w {
            p = p.square_mod(&f);
            if i == w / 2 {
                half = Some(p.clone());
            }
        }
        let full_ok = p == x.clone().rem(&f);
        let g = match half {
            Some(h) => Poly::gcd(f.clone(), h.add(&x)),
            None => Poly(vec![true]),
        };
        full_ok && g.degree() == Some(0)
    }

    #[test]
    fn moduli_are_irreducible() {
        for (w, low) in SUPPORTED_WIDTHS {
            assert!(w.is_power_of_two());
            assert!(rabin_irreducible(w, low), "w = {w}");
        }
        // x^4 + x^2 + 1 = (x^2 + x + 1)^2 is caught
        assert!(!rabin_irreducible(4, 0b101));
    }

    fn to_poly(e: &Element, w: u32) -> Poly {
        Poly((0..w as usize).map(|j| (e[j / 64] >> (j % 64)) & 1 == 1).collect()).trim()
    }

    #[test]
    fn mul_matches_dense_polynomial_oracle() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (w, low) in SUPPORTED_WIDTHS {
            let f = Gf2w::new(w).unwrap();
            let m = Poly::modulus(w, low);
            for _ in 0..20 {
                let mut a = [0u64; WORDS];
                let mut b = [0u64; WORDS];
                for i in 0..f.words {
                    a[i] = rng.next_u64();
                    b[i] = rng.next_u64();
                }
                a[f.words - 1] &= f.top_mask;
                b[f.words - 1] &= f.top_mask;
                let got = to_poly(&f.mul(&a, &b), w);
                let want = to_poly(&a, w).mul_mod(&to_poly(&b, w), &m);
                assert_eq!(got, want, "w = {w}");
                assert_eq!(f.mul(&a, &f.one()), a);
            }
        }
    }

    #[test]
    fn element_from_bits_order_and_padding() {
        let f = Gf2w::new(4).unwrap();
        let bits = crate::bits::BitString::from_str_bits("1000 01");
        let e = f.element_from_bits(&bits, 0, bits.len());
        assert_eq!(e[0], 0b1000);
        // second chunk runs past the limit and is zero padded: 01 -> 0100
        let e = f.element_from_bits(&bits, 4, bits.len());
        assert_eq!(e[0], 0b0100);

        let f = Gf2w::new(128).unwrap();
        let mut bits = crate::bits::BitString::zeros(128);
        bits.set(0, true);
        bits.set(127, true);
        let e = f.element_from_bits(&bits, 0, 128);
        assert_eq!(e[1], 1 << 63);
        assert_eq!(e[0], 1);
    }

    #[test]
    fn unsupported_width() {
        assert!(Gf2w::new(12).is_err());
    }
}
