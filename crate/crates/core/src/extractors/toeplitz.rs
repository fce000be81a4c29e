//! Toeplitz hashing over GF(2).
//!
//! The `m x n` matrix is built from seed bits `s[0 .. n+m-1)` as
//! `T[i][j] = s[i + (n - 1) - j]`: `s[0..n)` is the first row reversed and
//! `s[n-1 .. n+m-1)` is the first column. Output bit `i` is
//! `sum_j T[i][j] x[j] mod 2`, which equals the parity of the seed window
//! `s[i .. i+n)` AND-ed with the reversed input.
//!
//! Equivalently, with `S(z) = sum_k s_k z^k` and `X(z) = sum_j x_j z^j`,
//! output bit `i` is the coefficient of `z^(i+n-1)` in `S(z) X(z)`. On x86-64
//! with carry-less multiplication the product is computed directly; the
//! portable kernel keeps 64 bit-shifted copies of the seed so every window
//! is a word-aligned slice.

use super::{ExtractError, ExtractorParams};
use crate::bits::BitString;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToeplitzSeed(BitString);

impl ToeplitzSeed {
    pub fn new(bits: BitString, params: &ExtractorParams) -> Result<Self, ExtractError> {
        let expected = params.n + params.m - 1;
        if bits.len() != expected {
            return Err(ExtractError::LengthMismatch {
                what: "toeplitz seed",
                expected,
                got: bits.len(),
            });
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

/// A Toeplitz hash with its seed preprocessed for repeated use.
#[derive(Debug, Clone)]
pub struct ToeplitzExtractor {
    params: ExtractorParams,
    /// `shifted[s][w]` holds seed bits `64 w + s .. 64 w + s + 64`.
    shifted: Vec<Vec<u64>>,
    /// Seed as a polynomial, coefficient `k` at bit `k % 64` of word `k / 64`.
    poly: Vec<u64>,
    clmul: bool,
}

impl ToeplitzExtractor {
    pub fn new(seed: &ToeplitzSeed, params: &ExtractorParams) -> Result<Self, ExtractError> {
        if params.m == 0 || params.n == 0 {
            return Err(ExtractError::InvalidParams("n and m must be positive".into()));
        }
        let seed = ToeplitzSeed::new(seed.0.clone(), params)?;
        let mut words = seed.0.words().to_vec();
        words.extend_from_slice(&[0, 0]);
        let shifted = (0..64u32)
            .map(|s| {
                (0..words.len() - 1)
                    .map(|w| {
                        if s == 0 {
                            words[w]
                        } else {
                            (words[w] << s) | (words[w + 1] >> (64 - s))
                        }
                    })
                    .collect()
            })
            .collect();
        let poly = seed.0.words().iter().map(|w| w.reverse_bits()).collect();
        Ok(Self {
            params: *params,
            shifted,
            poly,
            clmul: clmul::available(),
        })
    }

    pub fn params(&self) -> &ExtractorParams {
        &self.params
    }

    pub fn extract(&self, input: &BitString) -> Result<BitString, ExtractError> {
        let n = self.params.n;
        if input.len() != n {
            return Err(ExtractError::LengthMismatch {
                what: "toeplitz input",
                expected: n,
                got: input.len(),
            });
        }
        if self.clmul {
            return Ok(self.extract_clmul(input));
        }
        Ok(self.extract_portable(input))
    }

    fn extract_clmul(&self, input: &BitString) -> BitString {
        let (n, m) = (self.params.n, self.params.m);
        let x: Vec<u64> = input.words().iter().map(|w| w.reverse_bits()).collect();
        let mut prod = vec![0u64; self.poly.len() + x.len() + 1];
        clmul::mul_into(&self.poly, &x, &mut prod);
        let (w0, off) = ((n - 1) / 64, ((n - 1) % 64) as u32);
        let words: Vec<u64> = (0..m.div_ceil(64))
            .map(|r| {
                let lo = prod[w0 + r] >> off;
                let hi = if off == 0 { 0 } else { prod[w0 + r + 1] << (64 - off) };
                (lo | hi).reverse_bits()
            })
            .collect();
        from_words(&words, m)
    }

    fn extract_portable(&self, input: &BitString) -> BitString {
        let m = self.params.m;
        let rev = input.reversed();
        let rx = rev.words();
        let mut out = vec![0u64; m.div_ceil(64)];
        for (s, copy) in self.shifted.iter().enumerate() {
            // rows with i = 64 * row + s < m
            let rows = (m + 63 - s) / 64;
            for (row, word) in out.iter_mut().enumerate().take(rows) {
                let window = &copy[row..row + rx.len()];
                let acc = window.iter().zip(rx).fold(0u64, |acc, (a, b)| acc ^ (a & b));
                *word |= ((acc.count_ones() & 1) as u64) << (63 - s);
            }
        }
        from_words(&out, m)
    }
}

fn from_words(words: &[u64], len: usize) -> BitString {
    let bytes: Vec<u8> = words.iter().flat_map(|w| w.to_be_bytes()).collect();
    BitString::from_bytes(&bytes, len)
}

/// Carry-less polynomial multiplication over GF(2).
mod clmul {
    pub fn available() -> bool {
        #[cfg(target_arch = "x86_64")]
        {
            std::arch::is_x86_feature_detected!("pclmulqdq")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    }

    /// `out ^= a * b` for little-endian word polynomials;
    /// `out.len() >= a.len() + b.len()`. Callers check [`available`].
    pub fn mul_into(a: &[u64], b: &[u64], out: &mut [u64]) {
        assert!(out.len() >= a.len() + b.len());
        #[cfg(target_arch = "x86_64")]
        {
            assert!(available());
            // SAFETY: the CPU supports pclmulqdq (checked above) and all
            // indices stay below a.len() + b.len() <= out.len().
            unsafe { mul_into_x86(a, b, out) }
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            let _ = (a, b, out);
            unreachable!("carry-less multiplication is only wired up on x86-64")
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "pclmulqdq")]
    unsafe fn mul_into_x86(a: &[u64], b: &[u64], out: &mut [u64]) {
        use std::arch::x86_64::{__m128i, _mm_clmulepi64_si128, _mm_set_epi64x, _mm_storeu_si128};
        for (i, &ai) in a.iter().enumerate() {
            let va = _mm_set_epi64x(0, ai as i64);
            for (j, &bj) in b.iter().enumerate() {
                let p = _mm_clmulepi64_si128(va, _mm_set_epi64x(0, bj as i64), 0x00);
                let mut lanes = [0u64; 2];
                _mm_storeu_si128(lanes.as_mut_ptr() as *mut __m128i, p);
                out[i + j] ^= lanes[0];
                out[i + j + 1] ^= lanes[1];
            }
        }
    }
}

/// One-shot Toeplitz hash of `input` under `seed`.
pub fn toeplitz_extract(
    input: &BitString,
    seed: &ToeplitzSeed,
    params: &ExtractorParams,
) -> Result<BitString, ExtractError> {
    ToeplitzExtractor::new(seed, params)?.extract(input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dense matrix oracle.
    fn naive(input: &BitString, seed: &BitString, n: usize, m: usize) -> BitString {
        BitString::from_bits((0..m).map(|i| {
            (0..n).fold(false, |acc, j| acc ^ (seed.get(i + n - 1 - j) & input.get(j)))
        }))
    }

    fn params(n: usize, m: usize) -> ExtractorParams {
        ExtractorParams::toeplitz(n, m).unwrap()
    }

    #[test]
    fn zero_seed_gives_zero_output() {
        let p = params(100, 40);
        let seed = ToeplitzSeed::new(BitString::zeros(139), &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = BitString::random(&mut rng, 100);
        assert_eq!(toeplitz_extract(&x, &seed, &p).unwrap(), BitString::zeros(40));
    }

    #[test]
    fn one_by_one() {
        let p = params(1, 1);
        for (b, x) in [(false, false), (false, true), (true, false), (true, true)] {
            let seed = ToeplitzSeed::new(BitString::from_bits([b]), &p).unwrap();
            let out = toeplitz_extract(&BitString::from_bits([x]), &seed, &p).unwrap();
            assert_eq!(out, BitString::from_bits([b & x]));
        }
    }

    #[test]
    fn small_explicit_instance() {
        // T = [[s3 s2 s1 s0], [s4 s3 s2 s1]] = [[1 1 0 1], [0 1 1 0]],
        // x = 1101 -> (1+1+0+1, 0+1+0+0) mod 2 = 11
        let p = params(4, 2);
        let seed = ToeplitzSeed::new(BitString::from_str_bits("10110"), &p).unwrap();
        let x = BitString::from_str_bits("1101");
        let out = toeplitz_extract(&x, &seed, &p).unwrap();
        assert_eq!(out, BitString::from_str_bits("11"));
        assert_eq!(out, naive(&x, seed.bits(), 4, 2));
    }

    #[test]
    fn length_checks() {
        let p = params(8, 4);
        assert!(matches!(
            ToeplitzSeed::new(BitString::zeros(10), &p),
            Err(ExtractError::LengthMismatch { .. })
        ));
        let seed = ToeplitzSeed::new(BitString::zeros(11), &p).unwrap();
        assert!(matches!(
            toeplitz_extract(&BitString::zeros(7), &seed, &p),
            Err(ExtractError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn matches_naive_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..2000 {
            let n = rng.random_range(1..=256);
            let m = rng.random_range(1..=n);
            let p = params(n, m);
            let seed = BitString::random(&mut rng, n + m - 1);
            let x = BitString::random(&mut rng, n);
            let got = toeplitz_extract(&x, &ToeplitzSeed::new(seed.clone(), &p).unwrap(), &p).unwrap();
            assert_eq!(got, naive(&x, &seed, n, m), "n={n} m={m}");
        }
    }

    #[test]
    fn kernels_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(78);
        for (n, m) in [(1, 1), (64, 64), (65, 1), (128, 63), (4096, 3230), (300, 299)] {
            let p = params(n, m);
            let seed = ToeplitzSeed::new(BitString::random(&mut rng, n + m - 1), &p).unwrap();
            let ex = ToeplitzExtractor::new(&seed, &p).unwrap();
            for _ in 0..5 {
                let x = BitString::random(&mut rng, n);
                let portable = ex.extract_portable(&x);
                if ex.clmul {
                    assert_eq!(ex.extract_clmul(&x), portable, "n={n} m={m}");
                }
                if n <= 300 {
                    assert_eq!(portable, naive(&x, seed.bits(), n, m));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn linear_over_gf2(xs in any::<[u64; 2]>(), ys in any::<[u64; 2]>(), ss in any::<[u64; 2]>()) {
            let p = params(64, 32);
            let to_bits = |w: [u64; 2], len: usize| {
                let bytes: Vec<u8> = w.iter().flat_map(|v| v.to_be_bytes()).collect();
                BitString::from_bytes(&bytes, len)
            };
            let x = to_bits(xs, 64);
            let y = to_bits(ys, 64);
            let ex = ToeplitzExtractor::new(&ToeplitzSeed::new(to_bits(ss, 95), &p).unwrap(), &p).unwrap();
            let lhs = ex.extract(&x.xor(&y)).unwrap();
            let rhs = ex.extract(&x).unwrap().xor(&ex.extract(&y).unwrap());
            prop_assert_eq!(lhs, rhs);
        }
    }
}
