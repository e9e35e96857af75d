//! Exact lower semicontinuous step functions [0,1] → N̄.
//!
//! A function is stored on a partition with rational breakpoints in (0,1).
//! With k breakpoints there are k+1 open interval cells and k+2 point cells
//! (0, each breakpoint, 1). Point `j` sits between intervals `j-1` and `j`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numbers::{dyadic_unit, ext_add, format_rational, parse_rational, ExtNat, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    breakpoints: Vec<Rational>,
}

impl Partition {
    pub fn new(breakpoints: Vec<Rational>) -> Result<Self> {
        check_breakpoints(&breakpoints)?;
        Ok(Partition { breakpoints })
    }

    pub fn trivial() -> Self {
        Partition { breakpoints: Vec::new() }
    }

    /// Breakpoints k/w for 1 ≤ k ≤ w−1.
    pub fn equidistant(w: u64) -> Self {
        assert!(w >= 1, "equidistant partition needs w >= 1");
        let d = BigInt::from(w);
        let breakpoints = (1..w).map(|k| Rational::new(BigInt::from(k), d.clone())).collect();
        Partition { breakpoints }
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn union(&self, other: &Partition) -> Partition {
        Partition { breakpoints: merge_sorted(&self.breakpoints, &other.breakpoints) }
    }

    /// True when every breakpoint of `other` is a breakpoint of `self`.
    pub fn refines(&self, other: &Partition) -> bool {
        other.breakpoints.iter().all(|b| self.breakpoints.binary_search(b).is_ok())
    }
}

fn check_breakpoints(bps: &[Rational]) -> Result<()> {
    let zero = Rational::zero();
    let one = Rational::one();
    for (i, b) in bps.iter().enumerate() {
        if *b <= zero || *b >= one {
            return Err(Error::InvalidStepFn(format!("breakpoint {b} outside (0,1)")));
        }
        if i > 0 && bps[i - 1] >= *b {
            return Err(Error::InvalidStepFn("breakpoints not strictly increasing".into()));
        }
    }
    Ok(())
}

pub(crate) fn merge_sorted(a: &[Rational], b: &[Rational]) -> Vec<Rational> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i].clone());
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j].clone());
            j += 1;
        } else {
            out.push(a[i].clone());
            i += 1;
            j += 1;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StepFn {
    breakpoints: Vec<Rational>,
    intervals: Vec<ExtNat>,
    points: Vec<ExtNat>,
}

impl StepFn {
    /// Validates shape and lower semicontinuity, then canonicalizes.
    pub fn new(breakpoints: Vec<Rational>, intervals: Vec<ExtNat>, points: Vec<ExtNat>) -> Result<Self> {
        check_breakpoints(&breakpoints)?;
        if intervals.len() != breakpoints.len() + 1 || points.len() != breakpoints.len() + 2 {
            return Err(Error::InvalidStepFn(format!(
                "{} breakpoints need {} interval and {} point values, got {} and {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                breakpoints.len() + 2,
                intervals.len(),
                points.len()
            )));
        }
        let f = StepFn { breakpoints, intervals, points };
        f.check_lsc()?;
        Ok(f.canonicalize())
    }

    /// Builds from data already known to be lower semicontinuous.
    pub(crate) fn from_raw(breakpoints: Vec<Rational>, intervals: Vec<ExtNat>, points: Vec<ExtNat>) -> Self {
        debug_assert_eq!(intervals.len() + 1, points.len());
        debug_assert_eq!(breakpoints.len() + 1, intervals.len());
        let f = StepFn { breakpoints, intervals, points };
        debug_assert!(f.check_lsc().is_ok(), "from_raw given a non-lsc function");
        f.canonicalize()
    }

    pub fn zero() -> Self {
        Self::constant(ExtNat::zero())
    }

    pub fn constant(v: ExtNat) -> Self {
        StepFn { breakpoints: Vec::new(), intervals: vec![v.clone()], points: vec![v.clone(), v] }
    }

    pub fn constant_u64(v: u64) -> Self {
        Self::constant(ExtNat::fin(v))
    }

    /// `v` on the open interval (a,b), zero elsewhere; 0 ≤ a < b ≤ 1.
    pub fn open_indicator(a: &Rational, b: &Rational, v: ExtNat) -> Result<Self> {
        if a >= b || *a < Rational::zero() || *b > Rational::one() {
            return Err(Error::InvalidStepFn(format!("bad indicator interval ({a},{b})")));
        }
        let mut bps = Vec::new();
        let mut intervals = Vec::new();
        let mut points = vec![ExtNat::zero()];
        if !a.is_zero() {
            bps.push(a.clone());
            intervals.push(ExtNat::zero());
            points.push(ExtNat::zero());
        }
        intervals.push(v);
        if !b.is_one() {
            bps.push(b.clone());
            points.push(ExtNat::zero());
            intervals.push(ExtNat::zero());
        }
        points.push(ExtNat::zero());
        StepFn::new(bps, intervals, points)
    }

    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    pub fn intervals(&self) -> &[ExtNat] {
        &self.intervals
    }

    pub fn points(&self) -> &[ExtNat] {
        &self.points
    }

    pub fn partition(&self) -> Partition {
        Partition { breakpoints: self.breakpoints.clone() }
    }

    pub fn value_at_zero(&self) -> &ExtNat {
        &self.points[0]
    }

    pub fn value_at_one(&self) -> &ExtNat {
        self.points.last().expect("points never empty")
    }

    pub fn check_lsc(&self) -> Result<()> {
        for (j, p) in self.points.iter().enumerate() {
            let left = j.checked_sub(1).map(|i| &self.intervals[i]);
            let right = self.intervals.get(j);
            for side in [left, right].into_iter().flatten() {
                if p > side {
                    return Err(Error::InvalidStepFn(format!(
                        "not lower semicontinuous at point cell {j}: value {p} exceeds adjacent interval value {side}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Merges every breakpoint whose point value equals both adjacent
    /// interval values.
    pub fn canonicalize(mut self) -> Self {
        let mut k = 0;
        while k < self.breakpoints.len() {
            if self.intervals[k] == self.intervals[k + 1] && self.points[k + 1] == self.intervals[k] {
                self.breakpoints.remove(k);
                self.intervals.remove(k + 1);
                self.points.remove(k + 1);
            } else {
                k += 1;
            }
        }
        self
    }

    pub fn is_canonical(&self) -> bool {
        self.clone().canonicalize().breakpoints.len() == self.breakpoints.len()
    }

    /// Index of the open interval containing `x` when `x` is not a
    /// breakpoint, or `Err(point index)` when `x` is a point cell.
    fn locate(&self, x: &Rational) -> std::result::Result<usize, usize> {
        if x.is_zero() {
            return Err(0);
        }
        if x.is_one() {
            return Err(self.breakpoints.len() + 1);
        }
        match self.breakpoints.binary_search(x) {
            Ok(i) => Err(i + 1),
            Err(i) => Ok(i),
        }
    }

    pub fn eval(&self, x: &Rational) -> &ExtNat {
        debug_assert!(*x >= Rational::zero() && *x <= Rational::one());
        match self.locate(x) {
            Ok(i) => &self.intervals[i],
            Err(j) => &self.points[j],
        }
    }

    /// Values on the cells of a partition whose breakpoints contain ours.
    /// The superset condition is not checked.
    fn values_on(&self, bps: &[Rational]) -> (Vec<ExtNat>, Vec<ExtNat>) {
        let mut intervals = Vec::with_capacity(bps.len() + 1);
        let mut points = Vec::with_capacity(bps.len() + 2);
        points.push(self.points[0].clone());
        let mut own = 0; // number of own breakpoints strictly below the current position
        for b in bps {
            intervals.push(self.intervals[own].clone());
            if own < self.breakpoints.len() && self.breakpoints[own] == *b {
                own += 1;
                points.push(self.points[own].clone());
            } else {
                points.push(self.intervals[own].clone());
            }
        }
        intervals.push(self.intervals[own].clone());
        points.push(self.value_at_one().clone());
        (intervals, points)
    }

    /// Same function on a finer partition; the result is not canonical.
    pub fn refine(&self, p: &Partition) -> Result<StepFn> {
        if !p.refines(&self.partition()) {
            return Err(Error::NotARefinement);
        }
        let (intervals, points) = self.values_on(&p.breakpoints);
        Ok(StepFn { breakpoints: p.breakpoints.clone(), intervals, points })
    }

    pub fn leq(&self, other: &StepFn) -> bool {
        let bps = merge_sorted(&self.breakpoints, &other.breakpoints);
        let (fi, fp) = self.values_on(&bps);
        let (gi, gp) = other.values_on(&bps);
        fi.iter().zip(&gi).all(|(a, b)| a <= b) && fp.iter().zip(&gp).all(|(a, b)| a <= b)
    }

    fn combine(&self, other: &StepFn, op: impl Fn(&ExtNat, &ExtNat) -> ExtNat) -> StepFn {
        let bps = merge_sorted(&self.breakpoints, &other.breakpoints);
        let (fi, fp) = self.values_on(&bps);
        let (gi, gp) = other.values_on(&bps);
        let intervals = fi.iter().zip(&gi).map(|(a, b)| op(a, b)).collect();
        let points = fp.iter().zip(&gp).map(|(a, b)| op(a, b)).collect();
        StepFn::from_raw(bps, intervals, points)
    }

    pub fn add(&self, other: &StepFn) -> StepFn {
        self.combine(other, ext_add)
    }

    /// Pointwise maximum (the supremum of two functions).
    pub fn max(&self, other: &StepFn) -> StepFn {
        self.combine(other, |a, b| a.max(b).clone())
    }

    /// Pointwise minimum; again lower semicontinuous.
    pub fn min(&self, other: &StepFn) -> StepFn {
        self.combine(other, |a, b| a.min(b).clone())
    }

    pub fn scale(&self, k: &BigUint) -> StepFn {
        let intervals = self.intervals.iter().map(|v| v.scale(k)).collect();
        let points = self.points.iter().map(|v| v.scale(k)).collect();
        StepFn::from_raw(self.breakpoints.clone(), intervals, points)
    }

    pub fn is_zero(&self) -> bool {
        self.breakpoints.is_empty() && self.intervals[0].is_zero() && self.points.iter().all(ExtNat::is_zero)
    }

    pub fn is_finite_valued(&self) -> bool {
        self.intervals.iter().all(ExtNat::is_finite)
    }

    /// Largest value, ∞ included.
    pub fn max_value(&self) -> ExtNat {
        self.intervals.iter().max().cloned().unwrap_or_else(ExtNat::zero)
    }

    /// Smallest value over the closed interval [lo, hi] ⊆ [0,1].
    pub fn min_on_closed(&self, lo: &Rational, hi: &Rational) -> ExtNat {
        debug_assert!(lo <= hi);
        let mut best = self.eval(lo).clone();
        let hv = self.eval(hi);
        if *hv < best {
            best = hv.clone();
        }
        // every cell meeting (lo, hi): intervals overlapping it and points inside it
        let start = match self.breakpoints.binary_search(lo) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        let end = match self.breakpoints.binary_search(hi) {
            Ok(i) => i,
            Err(i) => i,
        };
        if lo < hi {
            for i in start..=end {
                if self.intervals[i] < best {
                    best = self.intervals[i].clone();
                }
            }
            for j in start..end {
                if self.points[j + 1] < best {
                    best = self.points[j + 1].clone();
                }
            }
        }
        best
    }

    /// x ↦ self(start + (end − start)·x), the pullback along an affine path
    /// in [0,1]. A constant path gives a constant function.
    pub fn pullback_affine(&self, start: &Rational, end: &Rational) -> StepFn {
        if start == end {
            return StepFn::constant(self.eval(start).clone());
        }
        let slope = end - start;
        let mut bps: Vec<Rational> = self
            .breakpoints
            .iter()
            .map(|b| (b - start) / &slope)
            .filter(|t| *t > Rational::zero() && *t < Rational::one())
            .collect();
        bps.sort();
        let two = Rational::from_integer(BigInt::from(2));
        let mut intervals = Vec::with_capacity(bps.len() + 1);
        let mut points = Vec::with_capacity(bps.len() + 2);
        points.push(self.eval(start).clone());
        let mut prev = Rational::zero();
        for b in bps.iter().chain(std::iter::once(&Rational::one())) {
            let mid = (&prev + b) / &two;
            intervals.push(self.eval(&(start + &slope * &mid)).clone());
            if !b.is_one() {
                points.push(self.eval(&(start + &slope * b)).clone());
            }
            prev = b.clone();
        }
        points.push(self.eval(end).clone());
        StepFn::from_raw(bps, intervals, points)
    }

    pub fn to_json(&self) -> StepFnJson {
        StepFnJson {
            breakpoints: self.breakpoints.iter().map(format_rational).collect(),
            intervals: self.intervals.iter().map(ToString::to_string).collect(),
            points: self.points.iter().map(ToString::to_string).collect(),
        }
    }

    pub fn from_json(j: &StepFnJson) -> Result<StepFn> {
        let bps = j.breakpoints.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        let intervals = j.intervals.iter().map(|s| s.parse()).collect::<Result<Vec<ExtNat>>>()?;
        let points = j.points.iter().map(|s| s.parse()).collect::<Result<Vec<ExtNat>>>()?;
        StepFn::new(bps, intervals, points)
    }
}

impl fmt::Display for StepFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.points[0])?;
        for (i, v) in self.intervals.iter().enumerate() {
            write!(f, " ({v}) ")?;
            if i < self.breakpoints.len() {
                write!(f, "{}:[{}]", self.breakpoints[i], self.points[i + 1])?;
            }
        }
        write!(f, "[{}]", self.value_at_one())
    }
}

/// Wire format with exact decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFnJson {
    pub breakpoints: Vec<String>,
    pub intervals: Vec<String>,
    pub points: Vec<String>,
}

impl Serialize for StepFn {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StepFn {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StepFnJson::deserialize(d)?;
        StepFn::from_json(&j).map_err(serde::de::Error::custom)
    }
}

pub fn refine(f: &StepFn, p: &Partition) -> Result<StepFn> {
    f.refine(p)
}

pub fn leq(f: &StepFn, g: &StepFn) -> bool {
    f.leq(g)
}

pub fn add(f: &StepFn, g: &StepFn) -> StepFn {
    f.add(g)
}

pub fn sup_chain(fs: &[StepFn]) -> Result<StepFn> {
    let mut acc = StepFn::zero();
    for (i, f) in fs.iter().enumerate() {
        if i > 0 && !fs[i - 1].leq(f) {
            return Err(Error::NotIncreasing(i));
        }
        acc = acc.max(f);
    }
    Ok(acc)
}

/// Way-below decided by the cell criterion on the common refinement.
pub fn way_below(f: &StepFn, g: &StepFn) -> bool {
    if !f.is_finite_valued() {
        return false;
    }
    let bps = merge_sorted(&f.breakpoints, &g.breakpoints);
    let (fi, fp) = f.values_on(&bps);
    let (gi, gp) = g.values_on(&bps);
    cell_criterion(&fi, &fp, &gi, &gp)
}

/// The cell criterion on a shared partition: an interval sees itself, its
/// two bounding points and its two neighbouring intervals; a point sees
/// itself and its adjacent intervals.
pub(crate) fn cell_criterion<T: PartialOrd>(fi: &[T], fp: &[T], gi: &[T], gp: &[T]) -> bool {
    let k = fi.len();
    for t in 0..k {
        let v = &fi[t];
        if v > &gi[t] || v > &gp[t] || v > &gp[t + 1] {
            return false;
        }
        if t > 0 && v > &gi[t - 1] {
            return false;
        }
        if t + 1 < k && v > &gi[t + 1] {
            return false;
        }
    }
    for j in 0..fp.len() {
        let v = &fp[j];
        if v > &gp[j] {
            return false;
        }
        if j > 0 && v > &gi[j - 1] {
            return false;
        }
        if j < k && v > &gi[j] {
            return false;
        }
    }
    true
}

pub fn is_compact(f: &StepFn) -> bool {
    way_below(f, f)
}

/// min(n, inf of g over the closed ball of radius 1/2ⁿ), an independent
/// approximation from below used to cross-check `way_below`.
pub fn canonical_approx(g: &StepFn, n: u32) -> StepFn {
    let r = dyadic_unit(n);
    let zero = Rational::zero();
    let one = Rational::one();
    let mut anchors = vec![zero.clone()];
    anchors.extend(g.breakpoints.iter().cloned());
    anchors.push(one.clone());
    let mut cand: Vec<Rational> = anchors
        .iter()
        .flat_map(|b| [b - &r, b + &r])
        .filter(|t| *t > zero && *t < one)
        .collect();
    cand.sort();
    cand.dedup();
    let cap = ExtNat::fin(n as u64);
    let ball_min = |x: &Rational| -> ExtNat {
        let lo = if x - &r < zero { zero.clone() } else { x - &r };
        let hi = if x + &r > one { one.clone() } else { x + &r };
        g.min_on_closed(&lo, &hi).min(cap.clone())
    };
    let two = Rational::from_integer(BigInt::from(2));
    let mut intervals = Vec::with_capacity(cand.len() + 1);
    let mut points = Vec::with_capacity(cand.len() + 2);
    points.push(ball_min(&zero));
    let mut prev = zero.clone();
    for b in cand.iter().chain(std::iter::once(&one)) {
        intervals.push(ball_min(&((&prev + b) / &two)));
        if *b != one {
            points.push(ball_min(b));
        }
        prev = b.clone();
    }
    points.push(ball_min(&one));
    StepFn::from_raw(cand, intervals, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numbers::rat;

    fn fin(v: u64) -> ExtNat {
        ExtNat::fin(v)
    }

    #[test]
    fn refine_examples() {
        let one = StepFn::constant_u64(1);
        let r = one.refine(&Partition::equidistant(4)).unwrap();
        assert_eq!(r.intervals(), &[fin(1), fin(1), fin(1), fin(1)]);
        assert_eq!(r.points(), &[fin(1), fin(1), fin(1), fin(1), fin(1)]);
        assert_eq!(r.clone().canonicalize(), one);

        let ind = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), fin(1)).unwrap();
        let r = ind.refine(&Partition::equidistant(2)).unwrap();
        assert_eq!(r.intervals(), &[fin(1), fin(1)]);
        assert_eq!(r.points(), &[fin(0), fin(1), fin(0)]);

        let f = StepFn::new(vec![rat(1, 2)], vec![fin(2), fin(3)], vec![fin(0), fin(1), fin(3)]).unwrap();
        let p = Partition::new(vec![rat(1, 3), rat(1, 2), rat(2, 3)]).unwrap();
        let r = f.refine(&p).unwrap();
        assert_eq!(r.intervals(), &[fin(2), fin(2), fin(3), fin(3)]);
        assert_eq!(r.points(), &[fin(0), fin(2), fin(1), fin(3), fin(3)]);
        assert_eq!(r.canonicalize(), f);
        assert_eq!(f.refine(&Partition::equidistant(3)), Err(Error::NotARefinement));
    }

    #[test]
    fn rejects_non_lsc() {
        let e = StepFn::new(vec![rat(1, 2)], vec![fin(1), fin(1)], vec![fin(0), fin(2), fin(0)]);
        assert!(matches!(e, Err(Error::InvalidStepFn(_))));
        let e = StepFn::new(vec![], vec![fin(1)], vec![fin(2), fin(0)]);
        assert!(e.is_err());
    }

    #[test]
    fn leq_and_add_examples() {
        let c1 = StepFn::constant_u64(1);
        let c2 = StepFn::constant_u64(2);
        assert!(StepFn::zero().leq(&c1));
        assert!(!c2.leq(&c1));
        let half = StepFn::open_indicator(&rat(0, 1), &rat(1, 2), fin(1)).unwrap();
        let other = StepFn::open_indicator(&rat(1, 2), &rat(1, 1), fin(1)).unwrap();
        let whole = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), fin(1)).unwrap();
        assert!(half.leq(&whole));
        assert_eq!(c1.add(&c2), StepFn::constant_u64(3));
        assert_eq!(half.add(&StepFn::zero()), half);
        let s = half.add(&other);
        assert_eq!(s.breakpoints(), &[rat(1, 2)]);
        assert_eq!(s.intervals(), &[fin(1), fin(1)]);
        assert_eq!(s.points(), &[fin(0), fin(0), fin(0)]);
    }

    #[test]
    fn sup_chain_examples() {
        let f = StepFn::open_indicator(&rat(1, 4), &rat(1, 2), fin(2)).unwrap();
        assert_eq!(sup_chain(&[f.clone(), f.clone(), f.clone()]).unwrap(), f);
        let cs: Vec<_> = (1..=3).map(StepFn::constant_u64).collect();
        assert_eq!(sup_chain(&cs).unwrap(), StepFn::constant_u64(3));
        let bad = vec![StepFn::constant_u64(2), StepFn::constant_u64(1)];
        assert_eq!(sup_chain(&bad), Err(Error::NotIncreasing(1)));
    }

    #[test]
    fn way_below_examples() {
        let g = StepFn::constant(ExtNat::Inf);
        assert!(way_below(&StepFn::zero(), &g));
        let f = StepFn::open_indicator(&rat(0, 1), &rat(1, 2), fin(1)).unwrap();
        let g = StepFn::new(vec![rat(3, 4)], vec![fin(1), fin(0)], vec![fin(1), fin(0), fin(0)]).unwrap();
        assert!(way_below(&f, &g));
        let h = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), fin(1)).unwrap();
        assert!(!way_below(&h, &h));
        // infinite values are never way below anything
        assert!(!way_below(&StepFn::constant(ExtNat::Inf), &StepFn::constant(ExtNat::Inf)));
    }

    #[test]
    fn compact_examples() {
        assert!(is_compact(&StepFn::constant_u64(4)));
        assert!(is_compact(&StepFn::zero()));
        let h = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), fin(1)).unwrap();
        assert!(!is_compact(&h));
    }

    #[test]
    fn canonical_approx_examples() {
        assert_eq!(canonical_approx(&StepFn::constant(ExtNat::Inf), 3), StepFn::constant_u64(3));
        for n in 1..5 {
            assert_eq!(canonical_approx(&StepFn::zero(), n), StepFn::zero());
        }
        let g = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), fin(5)).unwrap();
        let a = canonical_approx(&g, 5);
        let inner = StepFn::open_indicator(&rat(1, 32), &rat(31, 32), fin(5)).unwrap();
        // the ball infimum is 5 exactly on the open inner region
        assert_eq!(a, inner);
        assert!(way_below(&a, &g));
    }

    #[test]
    fn pullback_examples() {
        let f = StepFn::new(vec![rat(1, 4), rat(3, 4)], vec![fin(1), fin(2), fin(3)], vec![fin(0), fin(1), fin(2), fin(3)])
            .unwrap();
        // t ↦ t/2 sees only the first two cells of f
        let p = f.pullback_affine(&rat(0, 1), &rat(1, 2));
        assert_eq!(p.breakpoints(), &[rat(1, 2)]);
        assert_eq!(p.intervals(), &[fin(1), fin(2)]);
        assert_eq!(p.points(), &[fin(0), fin(1), fin(2)]);
        // t ↦ 1 − t/2 runs backwards
        let p = f.pullback_affine(&rat(1, 1), &rat(1, 2));
        assert_eq!(p.breakpoints(), &[rat(1, 2)]);
        assert_eq!(p.intervals(), &[fin(3), fin(2)]);
        assert_eq!(p.points(), &[fin(3), fin(2), fin(2)]);
        assert_eq!(f.pullback_affine(&rat(1, 4), &rat(1, 4)), StepFn::constant_u64(1));
    }

    #[test]
    fn min_on_closed_sees_boundary_cells() {
        let f = StepFn::new(vec![rat(1, 2)], vec![fin(3), fin(5)], vec![fin(3), fin(2), fin(5)]).unwrap();
        assert_eq!(f.min_on_closed(&rat(1, 4), &rat(1, 2)), fin(2));
        assert_eq!(f.min_on_closed(&rat(3, 4), &rat(1, 1)), fin(5));
        assert_eq!(f.min_on_closed(&rat(1, 4), &rat(3, 4)), fin(2));
        assert_eq!(f.min_on_closed(&rat(0, 1), &rat(1, 4)), fin(3));
    }

    #[test]
    fn json_roundtrip() {
        let f = StepFn::new(vec![rat(1, 4)], vec![fin(1), ExtNat::Inf], vec![fin(0), fin(1), fin(2)]).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"breakpoints":["1/4"],"intervals":["1","inf"],"points":["0","1","2"]}"#);
        let back: StepFn = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
