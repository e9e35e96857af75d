//! Small-integer step functions on the dyadic grid j/2ⁿ, used by the
//! enumeration kernels. Every value here is finite.

use std::ops::ControlFlow;

use num_bigint::BigInt;

use crate::error::{Error, Result};
use crate::numbers::{ExtNat, Rational};
use crate::stepfn::{cell_criterion, Partition, StepFn};

/// A lsc step function constant on the open cells of equidistant(2^exp).
/// `points[j]` is the value at j/2^exp, `intervals[k]` the value on
/// (k/2^exp, (k+1)/2^exp).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridFn {
    pub exp: u32,
    pub intervals: Vec<u32>,
    pub points: Vec<u32>,
}

impl GridFn {
    pub fn width(&self) -> usize {
        self.intervals.len()
    }

    pub fn to_stepfn(&self) -> StepFn {
        let w = 1u64 << self.exp;
        let bps = Partition::equidistant(w).breakpoints().to_vec();
        let iv = self.intervals.iter().map(|&v| ExtNat::fin(v as u64)).collect();
        let pv = self.points.iter().map(|&v| ExtNat::fin(v as u64)).collect();
        StepFn::from_raw(bps, iv, pv)
    }

    /// The grid representation of `f` at resolution 2^exp, when `f` is
    /// finite-valued with breakpoints on that grid.
    pub fn from_stepfn(f: &StepFn, exp: u32) -> Option<GridFn> {
        let w = 1u64 << exp;
        let fine = f.refine(&Partition::equidistant(w)).ok()?;
        let conv = |v: &ExtNat| v.to_u64().and_then(|x| u32::try_from(x).ok());
        Some(GridFn {
            exp,
            intervals: fine.intervals().iter().map(conv).collect::<Option<_>>()?,
            points: fine.points().iter().map(conv).collect::<Option<_>>()?,
        })
    }

    pub fn is_lsc(&self) -> bool {
        let w = self.width();
        (0..=w).all(|j| {
            let p = self.points[j];
            (j == 0 || p <= self.intervals[j - 1]) && (j == w || p <= self.intervals[j])
        })
    }

    /// Cellwise upper bounds for every g on the same grid with g ≪ self:
    /// each cell's value is bounded by the minimum over the cells its
    /// closure meets.
    pub fn way_below_bounds(&self) -> (Vec<u32>, Vec<u32>) {
        let w = self.width();
        let iv = &self.intervals;
        let pv = &self.points;
        let ib = (0..w)
            .map(|k| {
                let mut m = iv[k].min(pv[k]).min(pv[k + 1]);
                if k > 0 {
                    m = m.min(iv[k - 1]);
                }
                if k + 1 < w {
                    m = m.min(iv[k + 1]);
                }
                m
            })
            .collect();
        let pb = (0..=w)
            .map(|j| {
                let mut m = pv[j];
                if j > 0 {
                    m = m.min(iv[j - 1]);
                }
                if j < w {
                    m = m.min(iv[j]);
                }
                m
            })
            .collect();
        (ib, pb)
    }

    pub fn way_below(&self, other: &GridFn) -> bool {
        debug_assert_eq!(self.exp, other.exp);
        cell_criterion(&self.intervals, &self.points, &other.intervals, &other.points)
    }

    pub fn leq(&self, other: &GridFn) -> bool {
        self.intervals.iter().zip(&other.intervals).all(|(a, b)| a <= b)
            && self.points.iter().zip(&other.points).all(|(a, b)| a <= b)
    }

    /// Position of a rational in the grid: `Err(j)` for the point j/2^exp,
    /// `Ok(k)` for the open interval k.
    pub fn locate(exp: u32, x: &Rational) -> std::result::Result<usize, usize> {
        let scaled = x * Rational::from_integer(BigInt::from(1u64 << exp));
        let fl = scaled.floor().to_integer();
        let idx: usize = usize::try_from(fl).expect("grid position out of range");
        if scaled.is_integer() {
            Err(idx)
        } else {
            Ok(idx)
        }
    }
}

/// A family of grid functions: values bounded by `cap`, interior values
/// free, endpoint values restricted to `endpoints`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpace {
    pub exp: u32,
    pub cap: u32,
    pub endpoints: Vec<u32>,
}

impl GridSpace {
    pub fn width(&self) -> usize {
        1usize << self.exp
    }

    /// Number of members below the given cellwise bounds, saturating.
    pub fn count_below(&self, ib: &[u32], pb: &[u32]) -> u128 {
        let w = self.width();
        let ends = |v: u32, b: u32| self.endpoints.iter().filter(|&&e| e <= v && e <= b).count() as u128;
        let top0 = ib[0].min(self.cap);
        let mut dp: Vec<u128> = (0..=top0).map(|a| ends(a, pb[0])).collect();
        for k in 1..w {
            let top = ib[k].min(self.cap);
            let mut nd = vec![0u128; top as usize + 1];
            for (b, slot) in nd.iter_mut().enumerate() {
                let b = b as u32;
                let mut acc = 0u128;
                for (a, &ways) in dp.iter().enumerate() {
                    let choices = (a as u32).min(b).min(pb[k]) as u128 + 1;
                    acc = acc.saturating_add(ways.saturating_mul(choices));
                }
                *slot = acc;
            }
            dp = nd;
        }
        dp.iter()
            .enumerate()
            .map(|(a, &ways)| ways.saturating_mul(ends(a as u32, pb[w])))
            .fold(0u128, u128::saturating_add)
    }

    pub fn count(&self) -> u128 {
        let w = self.width();
        self.count_below(&vec![self.cap; w], &vec![self.cap; w + 1])
    }

    /// Calls `visit` on every member below the bounds, in lexicographic
    /// order of (intervals, interior points, endpoints).
    pub fn for_each_below(&self, ib: &[u32], pb: &[u32], mut visit: impl FnMut(&GridFn)) {
        let _ = self.try_for_each_below::<()>(ib, pb, |g| {
            visit(g);
            ControlFlow::Continue(())
        });
    }

    /// As `for_each_below`, stopping at the first `Break`.
    pub fn try_for_each_below<B>(
        &self,
        ib: &[u32],
        pb: &[u32],
        mut visit: impl FnMut(&GridFn) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let w = self.width();
        let ib: Vec<u32> = ib.iter().map(|&b| b.min(self.cap)).collect();
        let mut g = GridFn { exp: self.exp, intervals: vec![0; w], points: vec![0; w + 1] };
        loop {
            self.fill_points(&mut g, pb, &mut visit)?;
            // odometer over interval values
            let mut k = w;
            loop {
                if k == 0 {
                    return ControlFlow::Continue(());
                }
                k -= 1;
                if g.intervals[k] < ib[k] {
                    g.intervals[k] += 1;
                    for v in &mut g.intervals[k + 1..] {
                        *v = 0;
                    }
                    break;
                }
            }
        }
    }

    fn fill_points<B>(
        &self,
        g: &mut GridFn,
        pb: &[u32],
        visit: &mut impl FnMut(&GridFn) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let w = self.width();
        let e0: Vec<u32> = self.endpoints.iter().copied().filter(|&e| e <= g.intervals[0] && e <= pb[0]).collect();
        let e1: Vec<u32> = self.endpoints.iter().copied().filter(|&e| e <= g.intervals[w - 1] && e <= pb[w]).collect();
        if e0.is_empty() || e1.is_empty() {
            return ControlFlow::Continue(());
        }
        let top: Vec<u32> = (1..w).map(|j| g.intervals[j - 1].min(g.intervals[j]).min(pb[j])).collect();
        for v in &mut g.points[1..w] {
            *v = 0;
        }
        loop {
            for &a in &e0 {
                g.points[0] = a;
                for &b in &e1 {
                    g.points[w] = b;
                    visit(g)?;
                }
            }
            let mut j = w - 1;
            loop {
                if j == 0 {
                    return ControlFlow::Continue(());
                }
                if g.points[j] < top[j - 1] {
                    g.points[j] += 1;
                    for v in &mut g.points[j + 1..w] {
                        *v = 0;
                    }
                    break;
                }
                j -= 1;
            }
        }
    }

    pub fn for_each(&self, visit: impl FnMut(&GridFn)) {
        let w = self.width();
        self.for_each_below(&vec![self.cap; w], &vec![self.cap; w + 1], visit)
    }

    /// All members, refusing when there are more than `ceiling`.
    pub fn enumerate(&self, ceiling: u128) -> Result<Vec<GridFn>> {
        let n = self.count();
        if n > ceiling {
            return Err(Error::ResourceLimit(format!(
                "{n} grid functions at resolution 2^{} exceed the ceiling {ceiling}",
                self.exp
            )));
        }
        let mut out = Vec::with_capacity(n as usize);
        self.for_each(|g| out.push(g.clone()));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn lambda(q: u32, exp: u32) -> GridSpace {
        GridSpace { exp, cap: q, endpoints: vec![0, q] }
    }

    /// Brute force over all value vectors with an explicit lsc filter.
    fn brute(space: &GridSpace) -> usize {
        let w = space.width();
        let cells = 2 * w + 1;
        let mut count = 0;
        let mut vals = vec![0u32; cells];
        loop {
            let g = GridFn { exp: space.exp, intervals: vals[..w].to_vec(), points: vals[w..].to_vec() };
            if g.is_lsc() && space.endpoints.contains(&g.points[0]) && space.endpoints.contains(&g.points[w]) {
                count += 1;
            }
            let mut i = 0;
            loop {
                if i == cells {
                    return count;
                }
                if vals[i] < space.cap {
                    vals[i] += 1;
                    break;
                }
                vals[i] = 0;
                i += 1;
            }
        }
    }

    #[test]
    fn lambda_counts_match_brute_force() {
        for q in [2, 3] {
            for exp in 0..=1 {
                let s = lambda(q, exp);
                let all = s.enumerate(u128::MAX).unwrap();
                assert_eq!(all.len(), brute(&s), "q={q} exp={exp}");
                assert_eq!(all.len() as u128, s.count());
                let distinct: HashSet<_> = all.iter().collect();
                assert_eq!(distinct.len(), all.len());
                assert!(all.iter().all(GridFn::is_lsc));
            }
        }
        assert_eq!(lambda(2, 0).count(), 6);
        assert_eq!(lambda(2, 1).count(), 29);
        assert_eq!(lambda(2, 2).count(), 737);
        assert_eq!(lambda(3, 2).count(), 3697);
        assert_eq!(lambda(6, 2).count(), 105_678);
    }

    #[test]
    fn bounded_enumeration_matches_filter() {
        let s = lambda(2, 2);
        let all = s.enumerate(u128::MAX).unwrap();
        for h in all.iter().step_by(7) {
            let (ib, pb) = h.way_below_bounds();
            let mut got = Vec::new();
            s.for_each_below(&ib, &pb, |g| got.push(g.clone()));
            let want: Vec<_> = all.iter().filter(|g| g.way_below(h)).cloned().collect();
            let mut got_sorted = got.clone();
            got_sorted.sort();
            let mut want_sorted = want.clone();
            want_sorted.sort();
            assert_eq!(got_sorted, want_sorted);
            assert_eq!(s.count_below(&ib, &pb), got.len() as u128);
        }
    }

    #[test]
    fn grid_way_below_agrees_with_stepfn() {
        let s = lambda(2, 1);
        let all = s.enumerate(u128::MAX).unwrap();
        for a in &all {
            for b in &all {
                let want = crate::stepfn::way_below(&a.to_stepfn(), &b.to_stepfn());
                assert_eq!(a.way_below(b), want);
            }
        }
    }

    #[test]
    fn stepfn_roundtrip() {
        let s = lambda(3, 2);
        s.for_each(|g| {
            let f = g.to_stepfn();
            assert_eq!(GridFn::from_stepfn(&f, 2).as_ref(), Some(g));
        });
    }

    #[test]
    fn ceiling_refuses() {
        assert!(matches!(lambda(6, 2).enumerate(1000), Err(Error::ResourceLimit(_))));
    }
}
