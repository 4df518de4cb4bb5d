//! The alternating dyadic allocations on `[0, 1)` for two goods at prices
//! `(1/2, 1/2)`, where every type is indifferent between `(1,0)` and `(0,1)`.
//!
//! `x^n` gives bundle `(1,0)` on `[k/2^n, (k+1)/2^n)` for odd `k` and `(0,1)`
//! otherwise. Every `x^n` clears the market at `(1/2, 1/2)`, yet any two
//! distinct levels are at L¹ distance exactly 1, so the sequence has no
//! convergent subsequence.

use num_rational::Ratio;

use crate::error::{Error, Result};

pub const MAX_LEVEL: u32 = 30;

/// Index of bundle `(1,0)` in binary-counting order.
pub const BUNDLE_FIRST: usize = 1;
/// Index of bundle `(0,1)` in binary-counting order.
pub const BUNDLE_SECOND: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DyadicAllocation {
    level: u32,
}

/// A maximal interval on which the allocation is constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Piece {
    pub start: Ratio<u64>,
    pub end: Ratio<u64>,
    pub bundle: usize,
}

fn check_level(n: u32) -> Result<()> {
    if !(1..=MAX_LEVEL).contains(&n) {
        return Err(Error::LevelOutOfRange(n));
    }
    Ok(())
}

pub fn dyadic_allocation(n: u32) -> Result<DyadicAllocation> {
    check_level(n)?;
    Ok(DyadicAllocation { level: n })
}

impl DyadicAllocation {
    pub fn level(&self) -> u32 {
        self.level
    }

    fn cells(&self) -> u64 {
        1 << self.level
    }

    fn bundle_of_cell(k: u64) -> usize {
        if k % 2 == 1 {
            BUNDLE_FIRST
        } else {
            BUNDLE_SECOND
        }
    }

    /// The `2^n` dyadic cells in order, each carrying its bundle.
    pub fn pieces(&self) -> impl Iterator<Item = Piece> + '_ {
        let d = self.cells();
        (0..d).map(move |k| Piece {
            start: Ratio::new(k, d),
            end: Ratio::new(k + 1, d),
            bundle: Self::bundle_of_cell(k),
        })
    }

    /// The bundle held by type `t ∈ [0, 1)`.
    pub fn bundle_at(&self, t: Ratio<u64>) -> Option<usize> {
        if t >= Ratio::from_integer(1) {
            return None;
        }
        let k = (t * self.cells()).to_integer();
        Some(Self::bundle_of_cell(k))
    }

    /// Lebesgue measure of the types holding `(1,0)` and `(0,1)`; this is the
    /// aggregate demand for goods 1 and 2.
    pub fn aggregate_demand(&self) -> [Ratio<u64>; 2] {
        let d = self.cells();
        let odd = count_odd(0, d);
        [Ratio::new(odd, d), Ratio::new(d - odd, d)]
    }
}

/// Number of odd integers in `[start, start + len)`.
fn count_odd(start: u64, len: u64) -> u64 {
    (start + len) / 2 - start / 2
}

/// `‖x^n − x^m‖ = Σ_x ∫ |x^n_x − x^m_x| dλ`, exactly.
///
/// Inside each coarse cell `k` the finer allocation alternates over `2^{|n−m|}`
/// subcells whose first index `k·2^{|n−m|}` is even; the mismatching subcells
/// are counted per parity class of `k`.
pub fn dyadic_l1_distance(n: u32, m: u32) -> Result<Ratio<u64>> {
    check_level(n)?;
    check_level(m)?;
    if n == m {
        return Ok(Ratio::from_integer(0));
    }
    let (coarse, fine) = (n.min(m), n.max(m));
    let cells = 1_u64 << coarse;
    let block = 1_u64 << (fine - coarse);
    let odd_coarse = count_odd(0, cells);
    let even_coarse = cells - odd_coarse;
    // Coarse value (1,0) on odd k: mismatch where the fine index is even.
    let odd_in_block = count_odd(0, block);
    let even_in_block = block - count_odd(block, block);
    let mismatched = even_coarse * odd_in_block + odd_coarse * even_in_block;
    // The (0,1) coordinate is the complement of (1,0) and mismatches on the
    // same set.
    Ok(Ratio::new(2 * mismatched, 1 << fine))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of both allocations on every cell of the finer grid.
    fn brute_force_distance(n: u32, m: u32) -> Ratio<u64> {
        let fine = n.max(m);
        let d = 1_u64 << fine;
        let xn = dyadic_allocation(n).unwrap();
        let xm = dyadic_allocation(m).unwrap();
        let mut total = Ratio::from_integer(0);
        for j in 0..d {
            let t = Ratio::new(j, d);
            let a = xn.bundle_at(t).unwrap();
            let b = xm.bundle_at(t).unwrap();
            if a != b {
                // Both coordinates (1,0) and (0,1) differ by one.
                total += Ratio::new(2, d);
            }
        }
        total
    }

    #[test]
    fn level_one() {
        let x = dyadic_allocation(1).unwrap();
        let pieces: Vec<_> = x.pieces().collect();
        assert_eq!(pieces[0].bundle, BUNDLE_SECOND);
        assert_eq!((pieces[0].start, pieces[0].end), (Ratio::new(0, 1), Ratio::new(1, 2)));
        assert_eq!(pieces[1].bundle, BUNDLE_FIRST);
        assert_eq!((pieces[1].start, pieces[1].end), (Ratio::new(1, 2), Ratio::new(1, 1)));
    }

    #[test]
    fn aggregate_is_one_half_each() {
        for n in 1..=MAX_LEVEL {
            let x = dyadic_allocation(n).unwrap();
            assert_eq!(x.aggregate_demand(), [Ratio::new(1, 2), Ratio::new(1, 2)]);
        }
        // Cross-check against summed piece lengths on small levels.
        for n in 1..=10 {
            let mut first = Ratio::from_integer(0);
            for p in dyadic_allocation(n).unwrap().pieces() {
                if p.bundle == BUNDLE_FIRST {
                    first += p.end - p.start;
                }
            }
            assert_eq!(first, Ratio::new(1, 2));
        }
    }

    #[test]
    fn distances_match_brute_force() {
        for n in 1..=10 {
            for m in 1..=10 {
                assert_eq!(
                    dyadic_l1_distance(n, m).unwrap(),
                    brute_force_distance(n, m),
                    "({n}, {m})"
                );
            }
        }
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dyadic_l1_distance(1, 2).unwrap(), Ratio::from_integer(1));
        assert_eq!(dyadic_l1_distance(3, 7).unwrap(), Ratio::from_integer(1));
        assert_eq!(dyadic_l1_distance(5, 5).unwrap(), Ratio::from_integer(0));
        assert_eq!(dyadic_l1_distance(29, 30).unwrap(), Ratio::from_integer(1));
    }

    #[test]
    fn levels_out_of_range() {
        assert!(matches!(dyadic_allocation(0), Err(Error::LevelOutOfRange(0))));
        assert!(matches!(dyadic_l1_distance(1, 31), Err(Error::LevelOutOfRange(31))));
    }
}
