//! Trevisan's extractor: a weak design composed with a one-bit extractor.
//!
//! One-bit extractor `C(x, y)`: the input is cut into `l = ceil(n / w)`
//! elements `c_0 .. c_{l-1}` of GF(2^w) (first bit of a chunk is the top
//! coefficient, last chunk zero-padded). The `2w`-bit seed is split into a
//! point `alpha` (first `w` bits) and a mask `r` (next `w` bits), and
//! `C(x, y) = <q_x(alpha), r>` with `q_x(z) = c_0 z^(l-1) + ... + c_{l-1}`.
//! This is Reed-Solomon encoding followed by a Hadamard bit.
//!
//! The design runs over GF(t) with `t = 2w`, so the seed length is `4 w^2`.
//! Output bit `i` applies `C` to the seed restricted to `S_i`.

use serde::{Deserialize, Serialize};

use super::gf2w::{Element, Gf2w, SUPPORTED_WIDTHS};
use super::{weak_design, ExtractError, ExtractorParams, WeakDesign, BASIC_DESIGN_RHO};
use crate::bits::BitString;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrevisanParams {
    /// `epsilon` is the design error bound for `(n, k, m)`; `d = t^2`.
    pub base: ExtractorParams,
    /// `w`, bits per field element of the one-bit extractor.
    pub field_bits: u32,
    /// `t = 2w`, the design field order and set size.
    pub design_field: usize,
    pub rho: f64,
}

impl TrevisanParams {
    /// Parameters for explicit sizes; `epsilon` is filled in from the
    /// design bound.
    pub fn for_sizes(n: usize, k: usize, m: usize, w: u32) -> Result<Self, ExtractError> {
        if n == 0 || m == 0 {
            return Err(ExtractError::InvalidParams("n and m must be positive".into()));
        }
        Gf2w::new(w)?;
        let t = 2 * w as usize;
        let design = weak_design(m, t)?;
        let epsilon = trevisan_error_bound(n, w, k, &design);
        Ok(Self {
            base: ExtractorParams {
                n,
                k,
                m,
                epsilon,
                d: t * t,
            },
            field_bits: w,
            design_field: t,
            rho: BASIC_DESIGN_RHO,
        })
    }

    /// Recovers the field width from a seed length `d = 4 w^2`.
    pub fn width_for_seed_len(d: usize) -> Result<u32, ExtractError> {
        SUPPORTED_WIDTHS
            .iter()
            .map(|&(w, _)| w)
            .find(|&w| 4 * (w as usize).pow(2) == d)
            .ok_or(ExtractError::InvalidParams(format!(
                "seed length {d} does not match any supported field width"
            )))
    }
}

/// Error of the one-bit extractor on an `n`-bit source with `k1` bits of
/// min-entropy: `0.5 * sqrt(2^(1-k1) + (l-1)/2^w)`, capped at 1.
///
/// The family `x -> <q_x(alpha), r>` collides on distinct inputs with
/// probability at most `(1 + (l-1)/2^w) / 2`; the leftover hash lemma for
/// one output bit gives the bound.
pub fn one_bit_error(n: usize, w: u32, k1: f64) -> f64 {
    let l = n.div_ceil(w as usize).max(1) as f64;
    let e = 0.5 * ((1.0 - k1).exp2() + (l - 1.0) * (-(w as f64)).exp2()).sqrt();
    e.min(1.0)
}

/// `sum_i one_bit_error(n, w, k - A_i)` over the sets of `design`.
pub fn trevisan_error_bound(n: usize, w: u32, k: usize, design: &WeakDesign) -> f64 {
    design
        .overlap_profile()
        .iter()
        .map(|a| one_bit_error(n, w, k as f64 - a))
        .sum()
}

/// Longest output for an `n`-bit block at min-entropy rate `h_min_rate`
/// whose design error bound stays within `epsilon`. Every supported width
/// is tried; ties go to the smaller width.
pub fn trevisan_output_length(
    n: usize,
    h_min_rate: f64,
    epsilon: f64,
) -> Result<TrevisanParams, ExtractError> {
    if n == 0 {
        return Err(ExtractError::InvalidParams("n must be positive".into()));
    }
    if !(h_min_rate > 0.0 && h_min_rate <= 1.0) || !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(ExtractError::InvalidParams(format!(
            "need rate in (0, 1] and epsilon in (0, 1], got {h_min_rate} and {epsilon}"
        )));
    }
    let k = (n as f64 * h_min_rate).floor() as usize;
    let mut best: Option<(usize, u32, f64)> = None;
    for &(w, _) in SUPPORTED_WIDTHS.iter() {
        if one_bit_error(n, w, f64::INFINITY) > epsilon || k == 0 {
            continue;
        }
        // S_i does not depend on the number of sets, so one design with k
        // sets gives the bound for every prefix.
        let design = weak_design(k, 2 * w as usize)?;
        let mut total = 0.0;
        let mut m = 0;
        for a in design.overlap_profile() {
            total += one_bit_error(n, w, k as f64 - a);
            if total > epsilon {
                break;
            }
            m += 1;
        }
        if m > 0 && best.is_none_or(|(bm, _, _)| m > bm) {
            best = Some((m, w, total));
        }
    }
    let (m, w, _) = best.ok_or(ExtractError::EntropyDeficit {
        k,
        penalty: super::leftover_hash_penalty(epsilon),
    })?;
    TrevisanParams::for_sizes(n, k, m, w)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrevisanSeed(BitString);

impl TrevisanSeed {
    pub fn new(bits: BitString, params: &TrevisanParams) -> Result<Self, ExtractError> {
        if bits.len() != params.base.d {
            return Err(ExtractError::LengthMismatch {
                what: "trevisan seed",
                expected: params.base.d,
                got: bits.len(),
            });
        }
        Ok(Self(bits))
    }

    pub fn bits(&self) -> &BitString {
        &self.0
    }
}

/// A Trevisan extractor with per-output-bit seed restrictions decoded.
#[derive(Debug, Clone)]
pub struct TrevisanExtractor {
    params: TrevisanParams,
    field: Gf2w,
    /// `(alpha_i, r_i)` for each output bit.
    keys: Vec<(Element, Element)>,
}

impl TrevisanExtractor {
    pub fn new(seed: &TrevisanSeed, params: &TrevisanParams) -> Result<Self, ExtractError> {
        let design = weak_design(params.base.m, params.design_field)?;
        Self::with_design(seed, params, &design)
    }

    fn with_design(
        seed: &TrevisanSeed,
        params: &TrevisanParams,
        design: &WeakDesign,
    ) -> Result<Self, ExtractError> {
        let field = Gf2w::new(params.field_bits)?;
        let w = params.field_bits as usize;
        if design.t != 2 * w {
            return Err(ExtractError::InvalidParams(format!(
                "design set size {} does not match one-bit seed length {}",
                design.t,
                2 * w
            )));
        }
        if design.len() < params.base.m {
            return Err(ExtractError::DesignMismatch {
                sets: design.len(),
                needed: params.base.m,
            });
        }
        if seed.0.len() != design.universe() {
            return Err(ExtractError::LengthMismatch {
                what: "trevisan seed",
                expected: design.universe(),
                got: seed.0.len(),
            });
        }
        let keys = design.sets[..params.base.m]
            .iter()
            .map(|set| {
                let restricted = BitString::from_bits(set.iter().map(|&u| seed.0.get(u)));
                (
                    field.element_from_bits(&restricted, 0, 2 * w),
                    field.element_from_bits(&restricted, w, 2 * w),
                )
            })
            .collect();
        Ok(Self {
            params: *params,
            field,
            keys,
        })
    }

    pub fn params(&self) -> &TrevisanParams {
        &self.params
    }

    pub fn extract(&self, input: &BitString) -> Result<BitString, ExtractError> {
        let n = self.params.base.n;
        if input.len() != n {
            return Err(ExtractError::LengthMismatch {
                what: "trevisan input",
                expected: n,
                got: input.len(),
            });
        }
        let w = self.params.field_bits as usize;
        let coeffs: Vec<Element> = (0..n.div_ceil(w))
            .map(|j| self.field.element_from_bits(input, j * w, n))
            .collect();
        Ok(BitString::from_bits(self.keys.iter().map(|(alpha, r)| {
            let value = coeffs
                .iter()
                .fold([0u64; 4], |acc, c| self.field.add(&self.field.mul(&acc, alpha), c));
            self.field.inner_product(&value, r)
        })))
    }
}

/// One-shot extraction with an explicit design.
pub fn trevisan_extract(
    input: &BitString,
    seed: &TrevisanSeed,
    params: &TrevisanParams,
    design: &WeakDesign,
) -> Result<BitString, ExtractError> {
    TrevisanExtractor::with_design(seed, params, design)?.extract(input)
}
