//! Polynomial weak designs.
//!
//! Over a field GF(t), set `S_i = { a * t + p_i(a) : a in GF(t) }` where the
//! coefficients of `p_i` are the base-`t` digits of `i` (constant term
//! least significant) and `deg p_i < c` with `c` the smallest integer such
//! that `t^c >= m`. Two distinct polynomials of degree `< c` agree on at
//! most `c - 1` points, which bounds every pairwise overlap.

use super::{ExtractError, SmallField};

/// Overlap parameter documented for the basic polynomial design.
pub const BASIC_DESIGN_RHO: f64 = 2.0 * std::f64::consts::E;

#[derive(Debug, Clone, PartialEq)]
pub struct WeakDesign {
    /// `sets[i]` holds the `t` seed positions of output bit `i`, ascending.
    pub sets: Vec<Vec<usize>>,
    pub t: usize,
    pub degree_bound: u32,
    pub overlap_rho: f64,
}

impl WeakDesign {
    /// Seed length required by the design, `t^2`.
    pub fn universe(&self) -> usize {
        self.t * self.t
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// `A_i = sum_{j<i} 2^{|S_i ∩ S_j|}` for every `i`.
    pub fn overlap_profile(&self) -> Vec<f64> {
        // occupants[u] lists earlier sets containing position u
        let mut occupants: Vec<Vec<u32>> = vec![Vec::new(); self.universe()];
        let mut counts = vec![0u32; self.sets.len()];
        let mut out = Vec::with_capacity(self.sets.len());
        for (i, set) in self.sets.iter().enumerate() {
            let mut touched = Vec::new();
            for &u in set {
                for &j in &occupants[u] {
                    if counts[j as usize] == 0 {
                        touched.push(j);
                    }
                    counts[j as usize] += 1;
                }
            }
            let disjoint = i - touched.len();
            let mut a = disjoint as f64;
            for &j in &touched {
                a += 2f64.powi(counts[j as usize] as i32);
                counts[j as usize] = 0;
            }
            out.push(a);
            for &u in set {
                occupants[u].push(i as u32);
            }
        }
        out
    }

    /// Whether `A_i <= overlap_rho * (m - 1)` for every `i`.
    pub fn satisfies_overlap(&self) -> bool {
        let bound = self.overlap_rho * (self.sets.len().saturating_sub(1)) as f64;
        self.overlap_profile().iter().all(|&a| a <= bound)
    }
}

/// Builds the polynomial design with `m` sets over GF(`t`).
pub fn weak_design(m: usize, t: usize) -> Result<WeakDesign, ExtractError> {
    if m == 0 {
        return Err(ExtractError::InvalidParams("a design needs at least one set".into()));
    }
    let field = SmallField::new(t)?;
    let mut c = 1u32;
    while (t as u128).pow(c) < m as u128 {
        c += 1;
    }
    let sets = (0..m)
        .map(|i| {
            let coeffs = base_digits(i, t, c);
            (0..t)
                .map(|a| a * t + field.eval_poly(&coeffs, a as u32) as usize)
                .collect()
        })
        .collect();
    Ok(WeakDesign {
        sets,
        t,
        degree_bound: c,
        overlap_rho: BASIC_DESIGN_RHO,
    })
}

fn base_digits(mut i: usize, t: usize, len: u32) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let d = i % t;
            i /= t;
            d as u32
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn naive_profile(d: &WeakDesign) -> Vec<f64> {
        let sets: Vec<HashSet<usize>> = d.sets.iter().map(|s| s.iter().copied().collect()).collect();
        (0..sets.len())
            .map(|i| {
                (0..i)
                    .map(|j| 2f64.powi(sets[i].intersection(&sets[j]).count() as i32))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn single_set_is_zero_polynomial() {
        let d = weak_design(1, 5).unwrap();
        assert_eq!(d.sets, vec![vec![0, 5, 10, 15, 20]]);
        assert_eq!(d.universe(), 25);
        assert_eq!(d.degree_bound, 1);
    }

    #[test]
    fn constants_are_disjoint() {
        let d = weak_design(2, 2).unwrap();
        assert_eq!(d.sets, vec![vec![0, 2], vec![1, 3]]);
        assert_eq!(d.overlap_profile(), vec![0.0, 1.0]);
    }

    #[test]
    fn lines_over_gf3_meet_at_most_once() {
        let d = weak_design(9, 3).unwrap();
        assert_eq!(d.degree_bound, 2);
        for i in 0..9 {
            for j in 0..i {
                let common = d.sets[i].iter().filter(|u| d.sets[j].contains(u)).count();
                assert!(common <= 1, "S{i} and S{j} share {common}");
            }
        }
    }

    #[test]
    fn sets_have_size_t_in_universe() {
        for t in [2, 3, 4, 8, 9, 25, 32] {
            let d = weak_design(40, t).unwrap();
            for s in &d.sets {
                assert_eq!(s.len(), t);
                assert!(s.windows(2).all(|w| w[0] < w[1]));
                assert!(*s.last().unwrap() < d.universe());
            }
        }
    }

    #[test]
    fn rejects_bad_sizes() {
        assert_eq!(weak_design(4, 6), Err(ExtractError::InvalidFieldSize(6)));
        assert_eq!(weak_design(4, 1), Err(ExtractError::InvalidFieldSize(1)));
        assert!(weak_design(0, 4).is_err());
    }

    #[test]
    fn profile_matches_set_intersection() {
        for t in [2, 3, 4, 5, 7, 8] {
            let d = weak_design(60, t).unwrap();
            assert_eq!(d.overlap_profile(), naive_profile(&d), "t={t}");
        }
    }

    #[test]
    fn distinct_polynomials_agree_below_degree_bound() {
        let d = weak_design(200, 7).unwrap();
        let c = d.degree_bound as usize;
        for i in 0..200 {
            for j in 0..i {
                let common = d.sets[i].iter().filter(|u| d.sets[j].contains(u)).count();
                assert!(common < c);
            }
        }
    }
}
