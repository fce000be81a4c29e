//! Small finite fields GF(p^k) with table-driven arithmetic, used to build
//! polynomial weak designs.
//!
//! An element is encoded as the integer whose base-`p` digits are its
//! polynomial coefficients (digit `i` = coefficient of `x^i`). The modulus is
//! the first primitive polynomial in lexicographic order, so multiplication
//! goes through discrete-log tables of the generator `x`.

use super::ExtractError;

#[derive(Debug, Clone)]
pub struct SmallField {
    p: u32,
    k: u32,
    order: u32,
    exp: Vec<u32>,
    log: Vec<u32>,
}

/// Largest field order accepted.
pub const MAX_ORDER: u64 = 1 << 20;

/// `Some((p, k))` when `q = p^k` for a prime `p` and `k >= 1`.
pub fn prime_power(q: u64) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let p = (2..).take_while(|d| d * d <= q).find(|d| q % d == 0).unwrap_or(q);
    let mut rest = q;
    let mut k = 0;
    while rest % p == 0 {
        rest /= p;
        k += 1;
    }
    (rest == 1).then_some((p as u32, k))
}

impl SmallField {
    pub fn new(order: usize) -> Result<Self, ExtractError> {
        let (p, k) = prime_power(order as u64)
            .filter(|_| order as u64 <= MAX_ORDER)
            .ok_or(ExtractError::InvalidFieldSize(order))?;
        let q = order as u32;
        if k == 1 {
            let exp_log = (1..q)
                .find_map(|g| Self::tables(q, |a| ((a as u64 * g as u64) % q as u64) as u32))
                .ok_or(ExtractError::InvalidFieldSize(order))?;
            return Ok(Self { p, k, order: q, exp: exp_log.0, log: exp_log.1 });
        }
        // Monic modulus x^k + c_{k-1} x^{k-1} + ... + c_0, low coefficients
        // enumerated as the integer `low`; keep the first for which x
        // generates the multiplicative group.
        for low in 1..q {
            let low_digits = digits(low, p, k);
            let times_x = |a: u32| {
                let mut d = digits(a, p, k + 1);
                d.rotate_right(1);
                let top = d[k as usize] as u64;
                // x^k = -(c_{k-1} x^{k-1} + ... + c_0)
                let mut out = 0u32;
                for i in (0..k as usize).rev() {
                    let v = (d[i] as u64 + (p - low_digits[i]) as u64 * top) % p as u64;
                    out = out * p + v as u32;
                }
                out
            };
            if let Some((exp, log)) = Self::tables(q, times_x) {
                return Ok(Self { p, k, order: q, exp, log });
            }
        }
        Err(ExtractError::InvalidFieldSize(order))
    }

    /// Powers of a generator under `times_g`; `None` if it is not primitive.
    fn tables(q: u32, times_g: impl Fn(u32) -> u32) -> Option<(Vec<u32>, Vec<u32>)> {
        let mut exp = Vec::with_capacity(q as usize - 1);
        let mut log = vec![u32::MAX; q as usize];
        let mut cur = 1u32;
        for i in 0..q - 1 {
            if log[cur as usize] != u32::MAX {
                return None;
            }
            log[cur as usize] = i;
            exp.push(cur);
            cur = times_g(cur);
        }
        (cur == 1).then_some((exp, log))
    }

    pub fn order(&self) -> usize {
        self.order as usize
    }

    pub fn characteristic(&self) -> u32 {
        self.p
    }

    pub fn degree(&self) -> u32 {
        self.k
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        if self.p == 2 {
            return a ^ b;
        }
        let (mut a, mut b, mut out, mut place) = (a, b, 0u32, 1u32);
        for _ in 0..self.k {
            out += (a % self.p + b % self.p) % self.p * place;
            a /= self.p;
            b /= self.p;
            place *= self.p;
        }
        out
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let n = self.order - 1;
        let e = (self.log[a as usize] + self.log[b as usize]) % n;
        self.exp[e as usize]
    }

    /// Horner evaluation of `sum_j coeffs[j] * x^j`.
    pub fn eval_poly(&self, coeffs: &[u32], x: u32) -> u32 {
        coeffs
            .iter()
            .rev()
            .fold(0, |acc, &c| self.add(self.mul(acc, x), c))
    }
}

fn digits(mut v: u32, p: u32, len: u32) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let d = v % p;
            v /= p;
            d
        })
        .collect()
}
