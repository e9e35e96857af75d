//! Cu-morphisms between the concrete objects of `cusemi`, built from pullbacks
//! along affine paths and sums of point evaluations; induced K-theory data;
//! the dd semi-metric and the intertwining checks.
//!
//! A `Path` term sends h to mult·(h∘γ) with γ(t) = start + (end − start)t.
//! A constant path is a point evaluation. A `Nodes` term sends h to the
//! constant mult·Σ_{k=1}^{den−1} h(γ(k/den)). Both families are closed under
//! composition, so composites never need expanding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::ControlFlow;

use num_bigint::{BigInt, BigUint};
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::cusemi::{lambda_space, member, BasisLevel, CuObject};
use crate::error::{Error, Result};
use crate::grid::{GridFn, GridSpace};
use crate::numbers::{dyadic_unit, ext_add, in_unit_interval, ExtNat, Rational};
use crate::stepfn::{merge_sorted, Partition, StepFn};
use crate::systems::{InductiveSystem, SystemParams, Variant};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Path { start: Rational, end: Rational, mult: BigUint },
    Nodes { start: Rational, end: Rational, den: BigUint, mult: BigUint },
}

fn along(start: &Rational, end: &Rational, t: &Rational) -> Rational {
    start + (end - start) * t
}

fn big_rat(n: &BigUint) -> Rational {
    Rational::from_integer(BigInt::from(n.clone()))
}

impl Term {
    pub fn point_eval(t: Rational, mult: u64) -> Term {
        Term::Path { start: t.clone(), end: t, mult: BigUint::from(mult) }
    }

    pub fn path(start: Rational, end: Rational, mult: u64) -> Term {
        Term::Path { start, end, mult: BigUint::from(mult) }
    }

    pub fn mult(&self) -> &BigUint {
        match self {
            Term::Path { mult, .. } | Term::Nodes { mult, .. } => mult,
        }
    }

    fn endpoints(&self) -> (&Rational, &Rational) {
        match self {
            Term::Path { start, end, .. } | Term::Nodes { start, end, .. } => (start, end),
        }
    }

    /// The term's weight on the K₀ generator.
    pub fn k0_weight(&self) -> BigUint {
        match self {
            Term::Path { mult, .. } => mult.clone(),
            Term::Nodes { den, mult, .. } => (den - 1u8) * mult,
        }
    }

    /// The term's weight on K₁: only non-constant paths leaving 0 carry the
    /// K₁ generator; evaluations factor through contractible fibers.
    pub fn k1_weight(&self) -> BigUint {
        match self {
            Term::Path { start, end, mult } if start.is_zero() && start != end => mult.clone(),
            _ => BigUint::zero(),
        }
    }

    /// The term with each path precomposed by the affine path `inner`
    /// (the term applied after a path term start→end).
    fn precompose(&self, outer_mult: &BigUint, inner: &Term) -> Term {
        match (inner, self) {
            // self ∘ (h ↦ h∘γ_inner): nodes and paths of self are pushed through γ_inner
            (Term::Path { start: s, end: e, mult: m }, Term::Path { start, end, mult }) => Term::Path {
                start: along(s, e, start),
                end: along(s, e, end),
                mult: mult * m * outer_mult,
            },
            (Term::Path { start: s, end: e, mult: m }, Term::Nodes { start, end, den, mult }) => Term::Nodes {
                start: along(s, e, start),
                end: along(s, e, end),
                den: den.clone(),
                mult: mult * m * outer_mult,
            },
            // inner is a constant function; any outer term only rescales it
            (Term::Nodes { .. }, _) => unreachable!("handled by compose"),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Path { start, end, mult } if start == end => write!(f, "{mult}·ev({start})"),
            Term::Path { start, end, mult } => write!(f, "{mult}·path({start}→{end})"),
            Term::Nodes { start, end, den, mult } => write!(f, "{mult}·nodes({start}→{end}, /{den})"),
        }
    }
}

impl Serialize for Term {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(None)?;
        match self {
            Term::Path { start, end, mult } if start == end => {
                m.serialize_entry("kind", "pointEval")?;
                m.serialize_entry("t", &start.to_string())?;
                m.serialize_entry("mult", &mult.to_string())?;
            }
            Term::Path { start, end, mult } => {
                m.serialize_entry("kind", "path")?;
                m.serialize_entry("start", &start.to_string())?;
                m.serialize_entry("end", &end.to_string())?;
                m.serialize_entry("mult", &mult.to_string())?;
            }
            Term::Nodes { start, end, den, mult } => {
                m.serialize_entry("kind", "nodes")?;
                m.serialize_entry("start", &start.to_string())?;
                m.serialize_entry("end", &end.to_string())?;
                m.serialize_entry("den", &den.to_string())?;
                m.serialize_entry("mult", &mult.to_string())?;
            }
        }
        m.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum TermKey {
    Path(Rational, Rational),
    Nodes(Rational, Rational, BigUint),
}

/// Merges equal shapes, drops empty terms, rewrites constant node sums as
/// point evaluations, and sorts.
fn normalize(terms: Vec<Term>) -> Vec<Term> {
    let mut acc: BTreeMap<TermKey, BigUint> = BTreeMap::new();
    for t in terms {
        let (key, w) = match t {
            Term::Path { start, end, mult } => (TermKey::Path(start, end), mult),
            Term::Nodes { start, end, den, mult } => {
                if den <= BigUint::one() {
                    continue;
                }
                if start == end {
                    let w = (&den - 1u8) * mult;
                    (TermKey::Path(start, end), w)
                } else {
                    (TermKey::Nodes(start, end, den), mult)
                }
            }
        };
        *acc.entry(key).or_insert_with(BigUint::zero) += w;
    }
    acc.into_iter()
        .filter(|(_, m)| !m.is_zero())
        .map(|(k, mult)| match k {
            TermKey::Path(start, end) => Term::Path { start, end, mult },
            TermKey::Nodes(start, end, den) => Term::Nodes { start, end, den, mult },
        })
        .collect()
}

/// Number of nodes γ(k/den), 1 ≤ k ≤ den−1, in each cell of the partition
/// `bps` (open intervals, then points 0, bps…, 1).
pub fn node_counts(bps: &[Rational], start: &Rational, end: &Rational, den: &BigUint) -> (Vec<BigUint>, Vec<BigUint>) {
    let mut iv = vec![BigUint::zero(); bps.len() + 1];
    let mut pt = vec![BigUint::zero(); bps.len() + 2];
    if den <= &BigUint::one() {
        return (iv, pt);
    }
    let total = den - 1u8;
    if start == end {
        match locate(bps, start) {
            Ok(i) => iv[i] = total,
            Err(j) => pt[j] = total,
        }
        return (iv, pt);
    }
    let den_i = BigInt::from(den.clone());
    let scale = big_rat(den) / (end - start);
    let kappa = |x: &Rational| (x - start) * &scale;
    let one = BigInt::one();
    let last = &den_i - 1;
    let mut positions = vec![Rational::zero()];
    positions.extend(bps.iter().cloned());
    positions.push(Rational::one());
    let ks: Vec<Rational> = positions.iter().map(kappa).collect();
    for (j, k) in ks.iter().enumerate() {
        if k.is_integer() && k.to_integer() >= one && k.to_integer() <= last {
            pt[j] = BigUint::one();
        }
    }
    for i in 0..ks.len() - 1 {
        let (lo, hi) = if ks[i] <= ks[i + 1] { (&ks[i], &ks[i + 1]) } else { (&ks[i + 1], &ks[i]) };
        let kmin: BigInt = (lo.floor().to_integer() + &one).max(one.clone());
        let kmax: BigInt = (hi.ceil().to_integer() - &one).min(last.clone());
        if kmax >= kmin {
            iv[i] = (kmax - kmin + &one).to_biguint().expect("non-negative count");
        }
    }
    (iv, pt)
}

/// `Ok(i)` for the open interval i, `Err(j)` for point j (0 is the left end).
fn locate(bps: &[Rational], x: &Rational) -> std::result::Result<usize, usize> {
    if x.is_zero() {
        return Err(0);
    }
    if x.is_one() {
        return Err(bps.len() + 1);
    }
    match bps.binary_search(x) {
        Ok(i) => Err(i + 1),
        Err(i) => Ok(i),
    }
}

/// Σ_{k=1}^{den−1} h(γ(k/den)).
fn node_sum(h: &StepFn, start: &Rational, end: &Rational, den: &BigUint) -> ExtNat {
    let (iv, pt) = node_counts(h.breakpoints(), start, end, den);
    let mut acc = ExtNat::zero();
    for (c, v) in iv.iter().zip(h.intervals()).chain(pt.iter().zip(h.points())) {
        acc = ext_add(&acc, &v.scale(c));
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CuMorphism {
    pub domain: CuObject,
    pub codomain: CuObject,
    pub terms: Vec<Term>,
}

impl CuMorphism {
    /// Validates the terms and that every member of the domain is sent to a
    /// member of the codomain.
    pub fn new(domain: CuObject, codomain: CuObject, terms: Vec<Term>) -> Result<Self> {
        if domain.is_direct_sum() || codomain.is_direct_sum() {
            return Err(Error::DomainMismatch("single morphisms act between non-sum objects".into()));
        }
        for t in &terms {
            let (s, e) = t.endpoints();
            if !in_unit_interval(s) || !in_unit_interval(e) {
                return Err(Error::DomainMismatch(format!("term {t} leaves [0,1]")));
            }
        }
        let m = CuMorphism { domain, codomain, terms: normalize(terms) };
        if let Some(why) = m.endpoint_obstruction() {
            return Err(Error::DomainMismatch(why));
        }
        Ok(m)
    }

    pub fn zero(domain: CuObject, codomain: CuObject) -> Self {
        CuMorphism { domain, codomain, terms: Vec::new() }
    }

    pub fn identity(obj: CuObject) -> Self {
        CuMorphism {
            domain: obj.clone(),
            codomain: obj,
            terms: vec![Term::path(Rational::zero(), Rational::one(), 1)],
        }
    }

    /// h ↦ p·h(t/2) + (q−p)·h(1−t/2).
    pub fn fold(domain: CuObject, codomain: CuObject, p: u64, q: u64) -> Result<Self> {
        if p > q {
            return Err(Error::InvalidParams(format!("fold rank {p} exceeds fiber size {q}")));
        }
        let half = Rational::new(1.into(), 2.into());
        Self::new(
            domain,
            codomain,
            vec![Term::path(Rational::zero(), half.clone(), p), Term::path(Rational::one(), half, q - p)],
        )
    }

    pub fn point_eval(domain: CuObject, codomain: CuObject, t: Rational, mult: u64) -> Result<Self> {
        Self::new(domain, codomain, vec![Term::point_eval(t, mult)])
    }

    /// h ↦ mult·Σ_{k=1}^{den−1} h(k/den).
    pub fn node_sum(domain: CuObject, codomain: CuObject, den: BigUint, mult: BigUint) -> Result<Self> {
        Self::new(domain, codomain, vec![Term::Nodes { start: Rational::zero(), end: Rational::one(), den, mult }])
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn plus(&self, other: &CuMorphism) -> Result<CuMorphism> {
        if self.domain != other.domain || self.codomain != other.codomain {
            return Err(Error::DomainMismatch("sum of morphisms with different objects".into()));
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Ok(CuMorphism { domain: self.domain.clone(), codomain: self.codomain.clone(), terms: normalize(terms) })
    }

    /// Why some member of the domain could be sent outside the codomain, if
    /// it can. Output values at 0 and 1 are integer combinations of input
    /// values; interior input values are unconstrained, endpoint values are
    /// multiples of the domain modulus.
    fn endpoint_obstruction(&self) -> Option<String> {
        let q_out = BigUint::from(self.codomain.endpoint_modulus());
        if q_out.is_one() {
            return None;
        }
        let q_in = BigUint::from(self.domain.endpoint_modulus());
        let zero = Rational::zero();
        let one = Rational::one();
        for s in [&zero, &one] {
            let mut coeff: BTreeMap<Rational, BigUint> = BTreeMap::new();
            for t in &self.terms {
                match t {
                    Term::Path { start, end, mult } => {
                        *coeff.entry(along(start, end, s)).or_insert_with(BigUint::zero) += mult;
                    }
                    Term::Nodes { start, end, den, mult } => {
                        if (mult % &q_out).is_zero() {
                            continue;
                        }
                        if den > &BigUint::from(100_000u32) {
                            return Some(format!("node sum {t} with a multiplicity not divisible by {q_out}"));
                        }
                        let d = big_rat(den);
                        let mut k = BigUint::one();
                        while &k < den {
                            let x = along(start, end, &(big_rat(&k) / &d));
                            *coeff.entry(x).or_insert_with(BigUint::zero) += mult;
                            k += 1u8;
                        }
                    }
                }
            }
            for (x, c) in coeff {
                let effective = if x.is_zero() || x.is_one() { c * &q_in } else { c };
                if !(effective % &q_out).is_zero() {
                    return Some(format!("the output value at {s} picks up the input at {x} with a weight not divisible by {q_out}"));
                }
            }
        }
        None
    }

    pub fn apply(&self, h: &StepFn) -> Result<StepFn> {
        if !member(&self.domain, h) {
            return Err(Error::DomainMismatch(format!("{h} is not a member of {}", self.domain.label())));
        }
        let out = self.apply_unchecked(h);
        if !member(&self.codomain, &out) {
            return Err(Error::DomainMismatch(format!("image {out} is not a member of {}", self.codomain.label())));
        }
        Ok(out)
    }

    fn apply_unchecked(&self, h: &StepFn) -> StepFn {
        let mut acc = StepFn::zero();
        for t in &self.terms {
            let part = match t {
                Term::Path { start, end, mult } => h.pullback_affine(start, end).scale(mult),
                Term::Nodes { start, end, den, mult } => StepFn::constant(node_sum(h, start, end, den).scale(mult)),
            };
            acc = acc.add(&part);
        }
        acc
    }

    pub fn induced_k0(&self) -> BigUint {
        self.terms.iter().map(Term::k0_weight).sum()
    }

    /// The induced map on K₁ = Z/q of the codomain, as a multiplier mod q
    /// (0 when the codomain has trivial K₁).
    pub fn induced_k1(&self) -> BigUint {
        let q = BigUint::from(self.codomain.endpoint_modulus());
        let total: BigUint = self.terms.iter().map(Term::k1_weight).sum();
        total % q
    }
}

impl fmt::Display for CuMorphism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let parts: Vec<String> = self.terms.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join(" + "))
    }
}

/// m2 ∘ m1.
pub fn compose(m2: &CuMorphism, m1: &CuMorphism) -> Result<CuMorphism> {
    if m1.codomain != m2.domain {
        return Err(Error::DomainMismatch(format!(
            "cannot compose: {} is not {}",
            m1.codomain.label(),
            m2.domain.label()
        )));
    }
    let mut terms = Vec::new();
    for outer in &m2.terms {
        for inner in &m1.terms {
            match inner {
                Term::Path { .. } => terms.push(outer.precompose(&BigUint::one(), inner)),
                // m1 contributes a constant; the outer term rescales it by its K₀ weight
                Term::Nodes { start, end, den, mult } => terms.push(Term::Nodes {
                    start: start.clone(),
                    end: end.clone(),
                    den: den.clone(),
                    mult: mult * outer.k0_weight(),
                }),
            }
        }
    }
    Ok(CuMorphism { domain: m1.domain.clone(), codomain: m2.codomain.clone(), terms: normalize(terms) })
}

/// A matrix of morphisms between direct sums: `entries[row][col]` maps
/// source component `col` to target component `row`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockMorphism {
    pub domain: CuObject,
    pub codomain: CuObject,
    pub entries: Vec<Vec<Option<CuMorphism>>>,
}

impl BlockMorphism {
    pub fn new(domain: CuObject, codomain: CuObject, entries: Vec<Vec<Option<CuMorphism>>>) -> Result<Self> {
        let src = domain.components();
        let tgt = codomain.components();
        if entries.len() != tgt.len() || entries.iter().any(|r| r.len() != src.len()) {
            return Err(Error::DomainMismatch(format!(
                "block matrix shape does not match {} → {}",
                domain.label(),
                codomain.label()
            )));
        }
        for (r, row) in entries.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                if let Some(m) = e {
                    if m.domain != *src[c] || m.codomain != *tgt[r] {
                        return Err(Error::DomainMismatch(format!("entry ({r},{c}) has the wrong objects")));
                    }
                }
            }
        }
        Ok(BlockMorphism { domain, codomain, entries })
    }

    pub fn entry(&self, row: usize, col: usize) -> Option<&CuMorphism> {
        self.entries.get(row).and_then(|r| r.get(col)).and_then(Option::as_ref)
    }

    pub fn apply(&self, hs: &[StepFn]) -> Result<Vec<StepFn>> {
        if hs.len() != self.domain.components().len() {
            return Err(Error::DomainMismatch("tuple length does not match the domain".into()));
        }
        self.entries
            .iter()
            .map(|row| {
                let mut acc = StepFn::zero();
                for (m, h) in row.iter().zip(hs) {
                    if let Some(m) = m {
                        acc = acc.add(&m.apply(h)?);
                    }
                }
                Ok(acc)
            })
            .collect()
    }

    /// second ∘ first.
    pub fn compose(second: &BlockMorphism, first: &BlockMorphism) -> Result<BlockMorphism> {
        if first.codomain != second.domain {
            return Err(Error::DomainMismatch("block morphisms do not compose".into()));
        }
        let mid = first.codomain.components().len();
        let cols = first.domain.components().len();
        let mut entries = Vec::new();
        for row in &second.entries {
            let mut out_row = Vec::with_capacity(cols);
            for c in 0..cols {
                let mut acc: Option<CuMorphism> = None;
                for k in 0..mid {
                    if let (Some(b), Some(a)) = (&row[k], first.entry(k, c)) {
                        let term = compose(b, a)?;
                        acc = Some(match acc {
                            None => term,
                            Some(x) => x.plus(&term)?,
                        });
                    }
                }
                out_row.push(acc.filter(|m| !m.is_zero()));
            }
            entries.push(out_row);
        }
        BlockMorphism::new(first.domain.clone(), second.codomain.clone(), entries)
    }
}

/// A morphism restricted to one grid resolution of its domain and compiled
/// into a sparse linear map from grid cell values to output cell values.
#[derive(Debug, Clone)]
pub struct Kernel {
    pub exp: u32,
    pub out_breakpoints: Vec<Rational>,
    rows: Vec<Vec<(usize, u128)>>,
}

impl Kernel {
    pub fn out_len(&self) -> usize {
        self.rows.len()
    }

    /// Output values on the cells of `out_breakpoints`: intervals first,
    /// then the points 0, breakpoints…, 1.
    pub fn eval(&self, g: &GridFn, out: &mut [u128]) {
        let w = g.intervals.len();
        for (slot, row) in out.iter_mut().zip(&self.rows) {
            let mut acc = 0u128;
            for &(idx, c) in row {
                let v = if idx < w { g.intervals[idx] } else { g.points[idx - w] };
                acc += c * v as u128;
            }
            *slot = acc;
        }
    }

    pub fn to_stepfn(&self, out: &[u128]) -> StepFn {
        let k = self.out_breakpoints.len();
        let conv = |v: &u128| ExtNat::Fin(BigUint::from(*v));
        StepFn::new(self.out_breakpoints.clone(), out[..=k].iter().map(conv).collect(), out[k + 1..].iter().map(conv).collect())
            .expect("images of lsc functions are lsc")
    }
}

/// Breakpoints of h∘γ for every grid function h at resolution 2^exp.
fn grid_preimages(m: &CuMorphism, exp: u32) -> Vec<Rational> {
    let w = BigInt::from(1u64 << exp);
    let mut out = BTreeSet::new();
    for t in &m.terms {
        if let Term::Path { start, end, .. } = t {
            if start == end {
                continue;
            }
            let (lo, hi) = if start < end { (start, end) } else { (end, start) };
            let first = (lo * Rational::from_integer(w.clone())).ceil().to_integer();
            let last = (hi * Rational::from_integer(w.clone())).floor().to_integer();
            let mut j = first;
            while j <= last {
                let x = Rational::new(j.clone(), w.clone());
                let s = (x - start) / (end - start);
                if s > Rational::zero() && s < Rational::one() {
                    out.insert(s);
                }
                j += 1;
            }
        }
    }
    out.into_iter().collect()
}

fn compile_on(m: &CuMorphism, exp: u32, out_bps: &[Rational], cap: u32) -> Result<Kernel> {
    let w = 1usize << exp;
    let grid = Partition::equidistant(w as u64).breakpoints().to_vec();
    let overflow = || Error::ResourceLimit("morphism coefficients exceed 128-bit arithmetic".into());
    // constant contributions of node sums
    let mut constant: BTreeMap<usize, u128> = BTreeMap::new();
    for t in &m.terms {
        if let Term::Nodes { start, end, den, mult } = t {
            let (iv, pt) = node_counts(&grid, start, end, den);
            for (idx, c) in iv.iter().chain(pt.iter()).enumerate() {
                if c.is_zero() {
                    continue;
                }
                let c = (c * mult).to_u128().ok_or_else(overflow)?;
                let slot = constant.entry(idx).or_insert(0);
                *slot = slot.checked_add(c).ok_or_else(overflow)?;
            }
        }
    }
    let two = Rational::from_integer(2.into());
    let mut reps: Vec<Rational> = Vec::with_capacity(2 * out_bps.len() + 3);
    let mut prev = Rational::zero();
    for b in out_bps.iter().chain(std::iter::once(&Rational::one())) {
        reps.push((&prev + b) / &two);
        prev = b.clone();
    }
    reps.push(Rational::zero());
    reps.extend(out_bps.iter().cloned());
    reps.push(Rational::one());

    let mut rows = Vec::with_capacity(reps.len());
    for x in &reps {
        let mut row = constant.clone();
        for t in &m.terms {
            if let Term::Path { start, end, mult } = t {
                let y = along(start, end, x);
                let idx = match GridFn::locate(exp, &y) {
                    Ok(k) => k,
                    Err(j) => w + j,
                };
                let c = mult.to_u128().ok_or_else(overflow)?;
                let slot = row.entry(idx).or_insert(0);
                *slot = slot.checked_add(c).ok_or_else(overflow)?;
            }
        }
        let total = row.values().try_fold(0u128, |a, &c| a.checked_add(c)).ok_or_else(overflow)?;
        total.checked_mul(cap as u128).ok_or_else(overflow)?;
        rows.push(row.into_iter().collect());
    }
    Ok(Kernel { exp, out_breakpoints: out_bps.to_vec(), rows })
}

/// Compiles one morphism at resolution 2^exp for inputs bounded by `cap`.
pub fn compile(m: &CuMorphism, exp: u32, cap: u32) -> Result<Kernel> {
    compile_on(m, exp, &grid_preimages(m, exp), cap)
}

/// Compiles two morphisms onto a shared output partition so that their
/// images can be compared cell by cell.
pub fn compile_pair(a: &CuMorphism, b: &CuMorphism, exp: u32, cap: u32) -> Result<(Kernel, Kernel)> {
    let bps = merge_sorted(&grid_preimages(a, exp), &grid_preimages(b, exp));
    Ok((compile_on(a, exp, &bps, cap)?, compile_on(b, exp, &bps, cap)?))
}

/// Ceilings for the exhaustive checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Limits {
    /// Largest Λₙ (or basis slice) that is enumerated.
    pub lambda_ceiling: u64,
    /// Largest number of pairs h′ ≪ h that is enumerated.
    pub pair_ceiling: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { lambda_ceiling: 2_000_000, pair_ceiling: 4_000_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Witness {
    pub h: StepFn,
    pub h_prime: StepFn,
    /// The inequality that fails.
    pub side: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LevelOutcome {
    pub level: u32,
    pub equivalent: bool,
    pub lambda_size: u64,
    pub pairs: u64,
    pub witness: Option<Witness>,
}

fn check_comparable(a: &CuMorphism, b: &CuMorphism) -> Result<()> {
    if a.domain != b.domain || a.codomain != b.codomain {
        return Err(Error::DomainMismatch("morphisms with different objects".into()));
    }
    if !matches!(a.domain, CuObject::FoldingCu { .. }) {
        return Err(Error::DomainMismatch(format!("Λₙ needs a FoldingCu domain, not {}", a.domain.label())));
    }
    Ok(())
}

fn sat64(x: u128) -> u64 {
    u64::try_from(x).unwrap_or(u64::MAX)
}

/// Whether a ≃ b on Λₙ: α(h′) ≤ β(h) and β(h′) ≤ α(h) for every pair
/// h′ ≪ h in Λₙ. Every pair is visited; only h′ below the way-below bounds
/// of h are generated.
pub fn equiv_at_level_report(a: &CuMorphism, b: &CuMorphism, n: u32, limits: &Limits) -> Result<LevelOutcome> {
    check_comparable(a, b)?;
    let space = lambda_space(&a.domain, n)?;
    let size = space.count();
    if size > limits.lambda_ceiling as u128 {
        return Err(Error::ResourceLimit(format!("|Λ_{n}| = {size} exceeds the ceiling {}", limits.lambda_ceiling)));
    }
    let hs = space.enumerate(limits.lambda_ceiling as u128)?;
    let pairs = hs
        .par_iter()
        .map(|h| {
            let (ib, pb) = h.way_below_bounds();
            space.count_below(&ib, &pb)
        })
        .reduce(|| 0u128, u128::saturating_add);
    if pairs > limits.pair_ceiling as u128 {
        return Err(Error::ResourceLimit(format!(
            "{pairs} pairs at level {n} exceed the ceiling {}",
            limits.pair_ceiling
        )));
    }
    let (ka, kb) = compile_pair(a, b, n, space.cap)?;
    let witness = hs.par_iter().find_map_first(|h| pair_violation(&space, &ka, &kb, h));
    Ok(LevelOutcome {
        level: n,
        equivalent: witness.is_none(),
        lambda_size: sat64(size),
        pairs: sat64(pairs),
        witness,
    })
}

fn pair_violation(space: &GridSpace, ka: &Kernel, kb: &Kernel, h: &GridFn) -> Option<Witness> {
    let len = ka.out_len();
    let mut ah = vec![0u128; len];
    let mut bh = vec![0u128; len];
    ka.eval(h, &mut ah);
    kb.eval(h, &mut bh);
    let mut ap = vec![0u128; len];
    let mut bp = vec![0u128; len];
    let (ib, pb) = h.way_below_bounds();
    let found = space.try_for_each_below(&ib, &pb, |hp| {
        ka.eval(hp, &mut ap);
        if ap.iter().zip(&bh).any(|(x, y)| x > y) {
            return ControlFlow::Break((hp.clone(), "alpha(h') <= beta(h)"));
        }
        kb.eval(hp, &mut bp);
        if bp.iter().zip(&ah).any(|(x, y)| x > y) {
            return ControlFlow::Break((hp.clone(), "beta(h') <= alpha(h)"));
        }
        ControlFlow::Continue(())
    });
    match found {
        ControlFlow::Break((hp, side)) => {
            Some(Witness { h: h.to_stepfn(), h_prime: hp.to_stepfn(), side: side.into() })
        }
        ControlFlow::Continue(()) => None,
    }
}

pub fn equiv_at_level(a: &CuMorphism, b: &CuMorphism, n: u32) -> Result<bool> {
    Ok(equiv_at_level_report(a, b, n, &Limits::default())?.equivalent)
}

/// Levels 0..=n_max of the dd semi-metric: the certified bound is 1/2ⁿ for
/// the largest passing n. The true infimum is never claimed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DdReport {
    pub levels: Vec<LevelOutcome>,
    pub best_level: Option<u32>,
    pub bound: String,
    pub all_levels_pass: bool,
    /// Levels that fail after a lower level passed.
    pub anomalies: Vec<String>,
    /// Set when a resource ceiling cut the scan short.
    pub stopped: Option<String>,
}

pub fn dd_distance(a: &CuMorphism, b: &CuMorphism, n_max: u32, limits: &Limits) -> Result<DdReport> {
    check_comparable(a, b)?;
    let mut levels = Vec::new();
    let mut stopped = None;
    for n in 0..=n_max {
        match equiv_at_level_report(a, b, n, limits) {
            Ok(o) => levels.push(o),
            Err(Error::ResourceLimit(msg)) => {
                stopped = Some(msg);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let best_level = levels.iter().filter(|o| o.equivalent).map(|o| o.level).max();
    let mut anomalies = Vec::new();
    let mut first_pass: Option<u32> = None;
    for o in &levels {
        match (o.equivalent, first_pass) {
            (true, None) => first_pass = Some(o.level),
            (false, Some(p)) => anomalies.push(format!("level {p} passes but level {} fails", o.level)),
            _ => {}
        }
    }
    let tested = levels.last().map_or(0, |o| o.level);
    let bound = match best_level {
        Some(l) => dyadic_unit(l).to_string(),
        None => format!("unknown beyond 1/2^{tested}"),
    };
    let all_levels_pass = stopped.is_none() && levels.iter().all(|o| o.equivalent);
    Ok(DdReport { levels, best_level, bound, all_levels_pass, anomalies, stopped })
}

/// The per-cell certificate for a fold-plus-nodes pair with fiber size q and
/// node denominator q^r.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CriterionCertificate {
    pub q: u64,
    pub r: u32,
    /// l = max{l : 2ˡ ≤ q^r / q}.
    pub level: u32,
    pub bound: String,
    /// Least number of nodes k/q^r in a closed cell of equidistant(2ˡ).
    pub min_cell_count: String,
    /// Whether the cell counts were enumerated (otherwise bounded in closed form).
    pub enumerated: bool,
}

impl CriterionCertificate {
    pub fn bound_value(&self) -> Rational {
        dyadic_unit(self.level)
    }
}

const CELL_ENUMERATION_LIMIT: u32 = 20;

/// Computes l = max{l : 2ˡ ≤ q^{r−1}}, checks that every closed cell of
/// equidistant(2ˡ) holds at least q of the nodes k/q^r (1 ≤ k ≤ q^r − 1),
/// and returns the bound 1/2ˡ.
pub fn criterion_for(q: u64, r: u32) -> Result<CriterionCertificate> {
    if q < 2 || r == 0 {
        return Err(Error::ConditionFailed(format!("criterion needs q ≥ 2 and r ≥ 1 (q={q}, r={r})")));
    }
    let qb = BigUint::from(q);
    let big_q = qb.pow(r);
    let ratio = &big_q / &qb;
    let level = (ratio.bits() - 1) as u32; // 2^level ≤ ratio < 2^(level+1)
    let cells = BigUint::one() << level as usize;
    let last = &big_q - 1u8;
    let (min_count, enumerated) = if level <= CELL_ENUMERATION_LIMIT {
        let mut min: Option<BigUint> = None;
        let mut a = BigUint::zero();
        while a < cells {
            // nodes k with a/2ˡ ≤ k/Q ≤ (a+1)/2ˡ, i.e. ⌈aQ/2ˡ⌉ ≤ k ≤ ⌊(a+1)Q/2ˡ⌋
            let lo_num = &a * &big_q;
            let lo = (&lo_num + &cells - 1u8) / &cells;
            let hi = ((&a + 1u8) * &big_q) / &cells;
            let lo = lo.max(BigUint::one());
            let hi = hi.min(last.clone());
            let c = if hi >= lo { hi - lo + 1u8 } else { BigUint::zero() };
            if min.as_ref().is_none_or(|m| c < *m) {
                min = Some(c);
            }
            a += 1u8;
        }
        (min.expect("at least one cell"), true)
    } else {
        // every closed cell has length L = Q/2ˡ ≥ q, so it holds at least ⌊L⌋
        // nodes once the excluded ends 0 and Q are accounted for
        let l_floor = &big_q / &cells;
        (l_floor.min(last), false)
    };
    if min_count < qb {
        return Err(Error::ConditionFailed(format!(
            "a cell of equidistant(2^{level}) holds {min_count} < {q} nodes of 1/{big_q}"
        )));
    }
    Ok(CriterionCertificate {
        q,
        r,
        level,
        bound: dyadic_unit(level).to_string(),
        min_cell_count: min_count.to_string(),
        enumerated,
    })
}

/// Outcome of a containment check α(M_j) ⊆ M_{j′} (target uncapped).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ContainmentReport {
    pub source_level: u32,
    pub target_level: u32,
    /// Grid-preimage certificate covering the whole source level.
    pub structural: bool,
    /// Cap of the enumerated slice of the source level, if any was enumerated.
    pub enumerated_cap: Option<u64>,
    pub enumerated: u64,
    pub failures: u64,
    pub witness: Option<StepFn>,
    pub holds: bool,
}

/// Structural certificate: every breakpoint of an image lies on the target
/// grid. Membership of the images is guaranteed by construction.
pub fn containment_structural(m: &CuMorphism, j_src: u32, j_tgt: u32) -> bool {
    let w = Rational::from_integer(BigInt::from(1u64 << j_tgt));
    grid_preimages(m, j_src).iter().all(|s| (s * &w).is_integer())
}

/// α(M_j) ⊆ M_{j−1} of the codomain: the structural certificate plus an
/// exhaustive check over the capped slice of M_j. The cap is the level's
/// default 2ʲ, lowered when that slice exceeds the ceiling.
pub fn basis_containment(m: &CuMorphism, j: u32, limits: &Limits) -> Result<ContainmentReport> {
    if j == 0 {
        return Err(Error::Precondition("basis containment needs j ≥ 1".into()));
    }
    containment_report(m, j, j - 1, limits)
}

pub fn containment_report(m: &CuMorphism, j_src: u32, j_tgt: u32, limits: &Limits) -> Result<ContainmentReport> {
    let structural = containment_structural(m, j_src, j_tgt);
    let modulus = m.domain.endpoint_modulus();
    let mut cap = 1u64 << j_src;
    let space = loop {
        let s = BasisLevel::with_cap(m.domain.clone(), j_src, cap).grid_space()?;
        if s.count() <= limits.lambda_ceiling as u128 {
            break Some(s);
        }
        if cap <= modulus {
            break None;
        }
        cap -= 1;
    };
    let mut report = ContainmentReport {
        source_level: j_src,
        target_level: j_tgt,
        structural,
        enumerated_cap: None,
        enumerated: 0,
        failures: 0,
        witness: None,
        holds: false,
    };
    if let Some(space) = space {
        let kernel = compile(m, j_src, space.cap)?;
        let hs = space.enumerate(limits.lambda_ceiling as u128)?;
        let target = BasisLevel::uncapped(m.codomain.clone(), j_tgt);
        let failures: Vec<&GridFn> = hs.par_iter().filter(|h| !image_in_level(&kernel, h, &target)).collect();
        report.enumerated_cap = Some(space.cap as u64);
        report.enumerated = hs.len() as u64;
        report.failures = failures.len() as u64;
        report.witness = failures.first().map(|h| h.to_stepfn());
    }
    report.holds = report.structural && report.failures == 0;
    Ok(report)
}

/// Whether the image of h lies in the target level: breakpoints of the
/// compiled partition off the target grid must be removable, and endpoint
/// values must be multiples of the codomain modulus.
fn image_in_level(k: &Kernel, h: &GridFn, target: &BasisLevel) -> bool {
    let mut out = vec![0u128; k.out_len()];
    k.eval(h, &mut out);
    let nb = k.out_breakpoints.len();
    let w = Rational::from_integer(BigInt::from(target.resolution()));
    for (i, b) in k.out_breakpoints.iter().enumerate() {
        if !(b * &w).is_integer() {
            let (left, pt, right) = (out[i], out[nb + 1 + i + 1], out[i + 1]);
            if left != pt || pt != right {
                return false;
            }
        }
    }
    let q = target.object.endpoint_modulus() as u128;
    out[nb + 1].is_multiple_of(q) && out[2 * nb + 2].is_multiple_of(q)
}

/// The certified bound 1/2^{l_{n,i}} for dd(α^i, β^i) at the map from stage
/// n, with q = q_i and node denominator q_i^{r_n}.
pub fn criterion_bound(params: &SystemParams, n: usize, i: usize) -> Result<CriterionCertificate> {
    if i >= n {
        return Err(Error::Precondition(format!("block {i} does not exist at stage {n}")));
    }
    let r = *params.exponents.get(n).ok_or(Error::StageExhausted(n))?;
    criterion_for(params.q(i), r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckMode {
    Exhaustive,
    Criterion,
}

/// One entry of a connecting map checked for α_{n,n+1}(M_{jₙ}) ⊆ M_{j_{n+1}}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntryContainment {
    pub row: usize,
    pub col: usize,
    pub variant: Variant,
    pub structural: bool,
    /// Present when the capped slice was enumerated as well.
    pub enumerated: Option<ContainmentReport>,
    pub holds: bool,
}

/// dd(α^i, β^i) for one diagonal block of the map from stage n.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockDistance {
    pub stage: usize,
    pub block: usize,
    pub q: u64,
    pub mode: CheckMode,
    /// Level at which equivalence was established.
    pub level: Option<u32>,
    pub bound: String,
    /// Exhaustive outcome at level jₙ.
    pub exhaustive: Option<LevelOutcome>,
    /// Exhaustive outcome at level jₙ + 1, which makes the bound strict.
    pub strict_exhaustive: Option<LevelOutcome>,
    pub criterion: Option<CriterionCertificate>,
    pub witness: Option<Witness>,
    /// dd < 1/2^{jₙ} is certified.
    pub passes: bool,
    pub notes: Vec<String>,
    pub resource_limited: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageCheck {
    pub stage: usize,
    pub j: u32,
    pub j_next: u32,
    pub containment: Vec<EntryContainment>,
    pub blocks: Vec<BlockDistance>,
    /// The entries outside the diagonal blocks agree in A and B.
    pub shared_entries_agree: bool,
    /// Bound on dd(α_{n,n+1}, β_{n,n+1}): the maximum over the blocks.
    pub stage_bound: String,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IntertwiningReport {
    pub mode: CheckMode,
    pub n_max: usize,
    pub j_seq: Vec<u32>,
    pub stages: Vec<StageCheck>,
    pub condition_failures: Vec<String>,
    pub resource_limited: bool,
    pub certified: bool,
    pub verdict: String,
}

/// Checks both hypotheses of the approximate intertwining for the maps from
/// stages 0..=n_max: (i) α_{n,n+1}(M_{jₙ}) ⊆ M_{j_{n+1}} entrywise (composites
/// follow by chaining), and (ii) dd(α_{n,n+1}, β_{n,n+1}) < 1/2^{jₙ}.
/// Failures are report entries, not errors.
pub fn intertwining_check(
    sys_a: &InductiveSystem,
    sys_b: &InductiveSystem,
    j_seq: Option<&[u32]>,
    n_max: usize,
    mode: CheckMode,
    limits: &Limits,
) -> IntertwiningReport {
    let params = &sys_a.params;
    let j_seq: Vec<u32> = match j_seq {
        Some(js) => js.to_vec(),
        None => (0..=n_max as u32 + 1).collect(),
    };
    let mut condition_failures = Vec::new();
    if sys_a.params != sys_b.params {
        condition_failures.push("the systems are built from different parameters".to_string());
    }
    if sys_a.variant == sys_b.variant {
        condition_failures.push("both systems are the same variant".to_string());
    }
    if j_seq.len() < n_max + 2 {
        condition_failures.push(format!("j sequence needs {} entries, got {}", n_max + 2, j_seq.len()));
    }
    if let (Some(&q0), Some(&r0)) = (params.primes.first(), params.exponents.first()) {
        if let Err(e) = criterion_for(q0, r0) {
            condition_failures.push(format!("estimate at stage 0 (q₀ = {q0}, r₀ = {r0}): {e}"));
        }
    }
    let mut stages = Vec::new();
    if condition_failures.is_empty() {
        for n in 0..=n_max {
            let (Some(ma), Some(mb)) = (sys_a.morphisms.get(n), sys_b.morphisms.get(n)) else {
                condition_failures.push(format!("{}", Error::StageExhausted(n + 1)));
                break;
            };
            stages.push(check_stage(params, n, ma, mb, j_seq[n], j_seq[n + 1], mode, limits));
        }
    }
    let resource_limited = stages.iter().flat_map(|s| &s.blocks).any(|b| b.resource_limited);
    let all_pass = !stages.is_empty() && stages.iter().all(|s| s.passes) && condition_failures.is_empty();
    let canonical = j_seq.iter().take(n_max + 2).enumerate().all(|(k, &j)| j as usize == k);
    let certified = all_pass && canonical;
    let verdict = if certified {
        format!("Cu(A) ≅ Cu(B) certified at desk scale (n ≤ {n_max})")
    } else if all_pass {
        "hypotheses hold, but jₙ ≠ n".to_string()
    } else if resource_limited {
        "not certified: resource ceilings reached".to_string()
    } else {
        "not certified".to_string()
    };
    IntertwiningReport { mode, n_max, j_seq, stages, condition_failures, resource_limited, certified, verdict }
}

#[allow(clippy::too_many_arguments)]
fn check_stage(
    params: &SystemParams,
    n: usize,
    ma: &BlockMorphism,
    mb: &BlockMorphism,
    j: u32,
    j_next: u32,
    mode: CheckMode,
    limits: &Limits,
) -> StageCheck {
    let mut containment = Vec::new();
    for (variant, m) in [(Variant::A, ma), (Variant::B, mb)] {
        for (row, entries) in m.entries.iter().enumerate() {
            for (col, e) in entries.iter().enumerate() {
                let Some(e) = e else { continue };
                let structural = containment_structural(e, j, j_next);
                let enumerated = match mode {
                    CheckMode::Exhaustive => containment_report(e, j, j_next, limits).ok(),
                    CheckMode::Criterion => None,
                };
                let holds = structural && enumerated.as_ref().is_none_or(|r| r.holds);
                containment.push(EntryContainment { row, col, variant, structural, enumerated, holds });
            }
        }
    }
    let mut shared_entries_agree = ma.entries.len() == mb.entries.len();
    for (row, (ra, rb)) in ma.entries.iter().zip(&mb.entries).enumerate() {
        for (col, (ea, eb)) in ra.iter().zip(rb).enumerate() {
            if !(row == col && row < n) && ea != eb {
                shared_entries_agree = false;
            }
        }
    }
    let blocks: Vec<BlockDistance> = (0..n)
        .map(|i| {
            let a = ma.entry(i, i).expect("diagonal entry");
            let b = mb.entry(i, i).expect("diagonal entry");
            block_distance(params, n, i, a, b, j, mode, limits)
        })
        .collect();
    // the shared entries coincide, so the stage distance is the block maximum
    let stage_level = blocks.iter().map(|b| b.level).try_fold(u32::MAX, |acc, l| l.map(|l| acc.min(l)));
    let stage_bound = match stage_level {
        Some(u32::MAX) => "0".to_string(),
        Some(l) => dyadic_unit(l).to_string(),
        None => "unknown".to_string(),
    };
    let passes =
        shared_entries_agree && containment.iter().all(|c| c.holds) && blocks.iter().all(|b| b.passes);
    StageCheck { stage: n, j, j_next, containment, blocks, shared_entries_agree, stage_bound, passes }
}

#[allow(clippy::too_many_arguments)]
fn block_distance(
    params: &SystemParams,
    n: usize,
    i: usize,
    a: &CuMorphism,
    b: &CuMorphism,
    j: u32,
    mode: CheckMode,
    limits: &Limits,
) -> BlockDistance {
    let mut d = BlockDistance {
        stage: n,
        block: i,
        q: params.q(i),
        mode,
        level: None,
        bound: format!("unknown beyond 1/2^{j}"),
        exhaustive: None,
        strict_exhaustive: None,
        criterion: None,
        witness: None,
        passes: false,
        notes: Vec::new(),
        resource_limited: false,
    };
    let criterion = criterion_bound(params, n, i);
    if mode == CheckMode::Exhaustive {
        match equiv_at_level_report(a, b, j, limits) {
            Ok(o) => {
                d.witness = o.witness.clone();
                let eq = o.equivalent;
                d.exhaustive = Some(o);
                if !eq {
                    return d;
                }
                d.level = Some(j);
                d.bound = dyadic_unit(j).to_string();
            }
            Err(Error::ResourceLimit(msg)) => {
                d.notes.push(msg);
                d.resource_limited = true;
            }
            Err(e) => {
                d.notes.push(e.to_string());
                return d;
            }
        }
        if d.level.is_some() {
            match equiv_at_level_report(a, b, j + 1, limits) {
                Ok(o) => {
                    let eq = o.equivalent;
                    d.strict_exhaustive = Some(o);
                    if eq {
                        d.level = Some(j + 1);
                        d.bound = dyadic_unit(j + 1).to_string();
                        d.passes = true;
                        return d;
                    }
                    d.notes.push(format!("level {} fails; strictness rests on the criterion", j + 1));
                }
                Err(Error::ResourceLimit(msg)) => {
                    d.notes.push(format!("{msg}; strictness rests on the criterion"));
                }
                Err(e) => d.notes.push(e.to_string()),
            }
        }
    }
    if d.resource_limited {
        // the criterion is still reported, but the block stays unverified
        if let Ok(c) = criterion {
            d.criterion = Some(c);
        }
        return d;
    }
    match criterion {
        Ok(c) => {
            if d.level.is_none_or(|l| c.level > l) {
                d.level = Some(c.level);
                d.bound = c.bound.clone();
            }
            d.passes = c.level > j;
            if !d.passes {
                d.notes.push(format!("criterion bound {} is not below 1/2^{j}", c.bound));
            }
            d.criterion = Some(c);
        }
        Err(e) => d.notes.push(e.to_string()),
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cusemi::enumerate_lambda;
    use crate::numbers::rat;
    use crate::systems::{build_system, build_system_relaxed};

    fn fc(q: u64, level: u32) -> CuObject {
        CuObject::FoldingCu { q, level }
    }

    /// The fold-plus-nodes map with fiber q, rank p and node denominator q^r.
    fn phi(q: u64, p: u64, r: u32, level: u32) -> CuMorphism {
        let f = CuMorphism::fold(fc(q, level), fc(q, level + 1), p, q).unwrap();
        let den = BigUint::from(q).pow(r);
        let nodes = CuMorphism::node_sum(fc(q, level), fc(q, level + 1), den, BigUint::from(q)).unwrap();
        f.plus(&nodes).unwrap()
    }

    /// The same map with the node sum written out as point evaluations.
    fn phi_expanded(q: u64, p: u64, r: u32, level: u32) -> CuMorphism {
        let den = q.pow(r);
        let half = rat(1, 2);
        let mut terms = vec![Term::path(rat(0, 1), half.clone(), p), Term::path(rat(1, 1), half, q - p)];
        for k in 1..den {
            terms.push(Term::point_eval(rat(k as i64, den as i64), q));
        }
        CuMorphism::new(fc(q, level), fc(q, level + 1), terms).unwrap()
    }

    /// Direct evaluation of a term list at a point, independent of the
    /// step-function machinery.
    fn eval_direct(m: &CuMorphism, h: &StepFn, x: &Rational) -> ExtNat {
        let mut acc = ExtNat::zero();
        for t in &m.terms {
            match t {
                Term::Path { start, end, mult } => acc = ext_add(&acc, &h.eval(&along(start, end, x)).scale(mult)),
                Term::Nodes { start, end, den, mult } => {
                    let d = den.to_u64().unwrap();
                    for k in 1..d {
                        let y = along(start, end, &rat(k as i64, d as i64));
                        acc = ext_add(&acc, &h.eval(&y).scale(mult));
                    }
                }
            }
        }
        acc
    }

    fn sample_points() -> Vec<Rational> {
        (0..=48).map(|k| rat(k, 48)).chain((0..20).map(|k| rat(2 * k + 1, 41))).collect()
    }

    #[test]
    fn apply_examples() {
        let z = CuMorphism::zero(fc(2, 1), fc(2, 2));
        assert_eq!(z.apply(&StepFn::constant_u64(4)).unwrap(), StepFn::zero());
        let f = CuMorphism::fold(fc(2, 1), fc(2, 2), 1, 2).unwrap();
        assert_eq!(f.apply(&StepFn::constant_u64(2)).unwrap(), StepFn::constant_u64(4));
        let ev = CuMorphism::point_eval(CuObject::PlainLsc, CuObject::PlainLsc, rat(1, 2), 2).unwrap();
        let h = StepFn::open_indicator(&rat(0, 1), &rat(1, 1), ExtNat::fin(3)).unwrap();
        assert_eq!(ev.apply(&h).unwrap(), StepFn::constant_u64(6));
        assert!(f.apply(&StepFn::constant_u64(1)).is_err());
    }

    #[test]
    fn apply_matches_direct_evaluation() {
        let m = phi(2, 1, 2, 1);
        for h in enumerate_lambda(&fc(2, 1), 2, u128::MAX).unwrap().iter().step_by(5) {
            let out = m.apply(h).unwrap();
            for x in sample_points() {
                assert_eq!(*out.eval(&x), eval_direct(&m, h, &x), "h={h} x={x}");
            }
        }
    }

    #[test]
    fn node_sum_matches_expansion() {
        for (q, r) in [(2, 2), (2, 3), (3, 2), (6, 2)] {
            let a = phi(q, 1, r, 1);
            let b = phi_expanded(q, 1, r, 1);
            assert_eq!(a.induced_k0(), b.induced_k0());
            for h in enumerate_lambda(&fc(q, 1), 1, u128::MAX).unwrap() {
                assert_eq!(a.apply(&h).unwrap(), b.apply(&h).unwrap());
            }
        }
    }

    #[test]
    fn membership_is_validated() {
        // an evaluation at an interior point with weight 1 breaks divisibility
        assert!(CuMorphism::point_eval(fc(2, 1), fc(2, 2), rat(1, 3), 1).is_err());
        assert!(CuMorphism::point_eval(fc(2, 1), fc(2, 2), rat(0, 1), 1).is_ok());
        assert!(CuMorphism::point_eval(CuObject::PlainLsc, fc(4, 1), rat(0, 1), 8).is_ok());
        assert!(CuMorphism::fold(fc(2, 1), fc(2, 1), 3, 2).is_err());
    }

    #[test]
    fn composition_examples() {
        let m = phi(2, 1, 2, 1);
        let id = CuMorphism::identity(fc(2, 2));
        assert_eq!(compose(&id, &m).unwrap(), m);
        let z = CuMorphism::zero(fc(2, 2), fc(2, 3));
        assert!(compose(&z, &m).unwrap().is_zero());
        let f = CuMorphism::fold(fc(2, 1), fc(2, 2), 1, 2).unwrap();
        let ev = CuMorphism::point_eval(fc(2, 2), fc(2, 3), rat(1, 3), 2).unwrap();
        let c = compose(&ev, &f).unwrap();
        let want = CuMorphism::new(
            fc(2, 1),
            fc(2, 3),
            vec![Term::point_eval(rat(1, 6), 2), Term::point_eval(rat(5, 6), 2)],
        )
        .unwrap();
        assert_eq!(c, want);
        assert!(compose(&m, &m).is_err());
    }

    #[test]
    fn composition_matches_sequential_apply() {
        let m1 = phi(2, 1, 2, 1);
        let m2 = phi(2, 1, 3, 2);
        let c = compose(&m2, &m1).unwrap();
        for h in enumerate_lambda(&fc(2, 1), 2, u128::MAX).unwrap().iter().step_by(3) {
            assert_eq!(c.apply(h).unwrap(), m2.apply(&m1.apply(h).unwrap()).unwrap());
        }
        assert_eq!(c.induced_k0(), m1.induced_k0() * m2.induced_k0());
        assert_eq!(c.induced_k1(), (m1.induced_k1() * m2.induced_k1()) % 2u8);
    }

    #[test]
    fn induced_maps() {
        let f = CuMorphism::fold(fc(2, 1), fc(2, 2), 1, 2).unwrap();
        assert_eq!(f.induced_k0(), BigUint::from(2u8));
        assert_eq!(f.induced_k1(), BigUint::one());
        assert_eq!(phi_expanded(2, 1, 2, 1).induced_k0(), BigUint::from(8u8));
        assert_eq!(phi(2, 1, 2, 1).induced_k0(), BigUint::from(8u8));
        let ev = CuMorphism::point_eval(fc(2, 1), fc(2, 2), rat(1, 3), 2).unwrap();
        assert!(ev.induced_k1().is_zero());
        assert_eq!(phi(6, 2, 2, 1).induced_k1(), BigUint::from(2u8));
        assert_eq!(phi(6, 3, 2, 1).induced_k1(), BigUint::from(3u8));
        assert!(CuMorphism::zero(fc(2, 1), fc(2, 2)).induced_k0().is_zero());
    }

    #[test]
    fn kernel_matches_apply() {
        for (m, n) in [(phi(2, 1, 3, 1), 2), (phi(3, 1, 2, 1), 1), (phi(6, 2, 2, 1), 1)] {
            let space = lambda_space(&m.domain, n).unwrap();
            let k = compile(&m, n, space.cap).unwrap();
            space.for_each(|g| {
                let mut out = vec![0u128; k.out_len()];
                k.eval(g, &mut out);
                assert_eq!(k.to_stepfn(&out), m.apply(&g.to_stepfn()).unwrap());
            });
        }
    }

    #[test]
    fn equivalence_examples() {
        let a = phi(2, 1, 3, 1);
        let b = phi(2, 2, 3, 1);
        let z = CuMorphism::zero(fc(2, 1), fc(2, 2));
        for n in 0..=2 {
            assert!(equiv_at_level(&a, &a, n).unwrap());
        }
        assert!(equiv_at_level(&a, &b, 2).unwrap());
        let r = equiv_at_level_report(&a, &z, 1, &Limits::default()).unwrap();
        assert!(!r.equivalent);
        let w = r.witness.unwrap();
        assert!(crate::stepfn::way_below(&w.h_prime, &w.h));
    }

    /// Brute force over all pairs of Λₙ with the generic apply.
    fn equiv_brute(a: &CuMorphism, b: &CuMorphism, n: u32) -> bool {
        let all = enumerate_lambda(&a.domain, n, u128::MAX).unwrap();
        let imgs: Vec<(StepFn, StepFn)> = all.iter().map(|h| (a.apply(h).unwrap(), b.apply(h).unwrap())).collect();
        for (i, h) in all.iter().enumerate() {
            for (j, hp) in all.iter().enumerate() {
                if crate::stepfn::way_below(hp, h) && !(imgs[j].0.leq(&imgs[i].1) && imgs[j].1.leq(&imgs[i].0)) {
                    return false;
                }
            }
        }
        true
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let cases = [
            (phi(2, 1, 2, 1), phi(2, 2, 2, 1)),
            (phi(2, 1, 1, 1), phi(2, 2, 1, 1)),
            (phi(3, 1, 1, 1), phi(3, 2, 1, 1)),
            (phi(2, 1, 2, 1), CuMorphism::zero(fc(2, 1), fc(2, 2))),
        ];
        for (a, b) in &cases {
            for n in 0..=1 {
                assert_eq!(equiv_at_level(a, b, n).unwrap(), equiv_brute(a, b, n), "{a} vs {b} at {n}");
            }
        }
    }

    #[test]
    fn dd_examples() {
        let a = phi(2, 1, 3, 1);
        let b = phi(2, 2, 3, 1);
        let lim = Limits::default();
        let same = dd_distance(&a, &a, 2, &lim).unwrap();
        assert!(same.all_levels_pass);
        assert_eq!(same.bound, "1/4");
        let ab = dd_distance(&a, &b, 2, &lim).unwrap();
        assert_eq!(ab.best_level, Some(2));
        let ba = dd_distance(&b, &a, 2, &lim).unwrap();
        let pattern = |r: &DdReport| r.levels.iter().map(|o| o.equivalent).collect::<Vec<_>>();
        assert_eq!(pattern(&ab), pattern(&ba));
        let z = CuMorphism::zero(fc(2, 1), fc(2, 2));
        let az = dd_distance(&a, &z, 1, &lim).unwrap();
        assert_eq!(az.best_level, None);
        assert!(az.bound.starts_with("unknown beyond"));
        assert!(az.levels.iter().all(|o| o.witness.is_some()));
    }

    #[test]
    fn criterion_examples() {
        let c = criterion_for(2, 3).unwrap();
        assert_eq!((c.level, c.bound.as_str()), (2, "1/4"));
        let c = criterion_for(2, 2).unwrap();
        assert_eq!((c.level, c.bound.as_str()), (1, "1/2"));
        assert!(matches!(criterion_for(2, 1), Err(Error::ConditionFailed(_))));
        assert!(matches!(criterion_for(6, 1), Err(Error::ConditionFailed(_))));
        for q in [2u64, 3, 6, 15, 35] {
            for r in 2..=7u32 {
                let c = criterion_for(q, r).unwrap();
                let cap = Rational::new(1.into(), BigInt::from(q).pow(r - 2));
                assert!(c.bound_value() <= cap, "q={q} r={r}");
            }
        }
    }

    #[test]
    fn criterion_closed_form_agrees_with_enumeration() {
        // the closed-form minimum is a lower bound for the enumerated one
        for q in [2u64, 3, 5, 6] {
            for r in 2..=6u32 {
                let c = criterion_for(q, r).unwrap();
                let qb = BigUint::from(q).pow(r);
                let cells = BigUint::one() << c.level as usize;
                let closed = (&qb / &cells).min(&qb - 1u8);
                assert!(closed <= c.min_cell_count.parse::<BigUint>().unwrap());
            }
        }
    }

    #[test]
    fn criterion_implies_exhaustive() {
        for (q, r) in [(2, 2), (2, 3), (3, 2)] {
            let c = criterion_for(q, r).unwrap();
            let a = phi(q, 1, r, 1);
            let b = phi(q, q - 1, r, 1);
            assert!(equiv_at_level(&a, &b, c.level).unwrap(), "q={q} r={r}");
        }
    }

    #[test]
    fn containment_examples() {
        let lim = Limits::default();
        let z = CuMorphism::zero(fc(2, 1), fc(2, 2));
        assert!(basis_containment(&z, 2, &lim).unwrap().holds);
        for j in 1..=2 {
            let r = basis_containment(&phi(2, 1, 3, 1), j, &lim).unwrap();
            assert!(r.holds && r.enumerated_cap == Some(1 << j), "{r:?}");
        }
        let ev = CuMorphism::point_eval(fc(2, 1), fc(2, 2), rat(1, 3), 2).unwrap();
        assert!(basis_containment(&ev, 2, &lim).unwrap().holds);
        // a path of length 2/3 pulls the grid point 1/2 back to 3/4
        let bad = CuMorphism::new(fc(2, 1), CuObject::PlainLsc, vec![Term::path(rat(0, 1), rat(2, 3), 1)]).unwrap();
        let r = basis_containment(&bad, 1, &lim).unwrap();
        assert!(!r.structural && r.failures > 0 && !r.holds);
    }

    #[test]
    fn containment_vector_check_matches_stepfn_route() {
        let m = phi(2, 1, 3, 1);
        let bad = CuMorphism::new(fc(2, 1), fc(2, 2), vec![Term::path(rat(0, 1), rat(2, 3), 2)]).unwrap();
        for m in [m, bad] {
            let space = BasisLevel::new(m.domain.clone(), 2).grid_space().unwrap();
            let k = compile(&m, 2, space.cap).unwrap();
            let target = BasisLevel::uncapped(m.codomain.clone(), 1);
            space.for_each(|g| {
                let via_stepfn = target.contains(&m.apply(&g.to_stepfn()).unwrap());
                assert_eq!(image_in_level(&k, g, &target), via_stepfn);
            });
        }
    }

    #[test]
    fn block_morphisms_compose() {
        let d1 = CuObject::DirectSum { components: vec![fc(2, 1), CuObject::PlainLsc] };
        let d2 = CuObject::DirectSum { components: vec![fc(2, 2), CuObject::PlainLsc] };
        let d3 = CuObject::DirectSum { components: vec![fc(2, 3), CuObject::PlainLsc] };
        let step = |a: u32, dom: &CuObject, cod: &CuObject| {
            BlockMorphism::new(
                dom.clone(),
                cod.clone(),
                vec![
                    vec![Some(phi(2, 1, 2, a)), Some(CuMorphism::point_eval(CuObject::PlainLsc, fc(2, a + 1), rat(0, 1), 8).unwrap())],
                    vec![None, Some(CuMorphism::point_eval(CuObject::PlainLsc, CuObject::PlainLsc, rat(1, 2), 1).unwrap())],
                ],
            )
            .unwrap()
        };
        let s1 = step(1, &d1, &d2);
        let s2 = step(2, &d2, &d3);
        let c = BlockMorphism::compose(&s2, &s1).unwrap();
        let hs = vec![StepFn::constant_u64(2), StepFn::open_indicator(&rat(1, 4), &rat(3, 4), ExtNat::fin(3)).unwrap()];
        assert_eq!(c.apply(&hs).unwrap(), s2.apply(&s1.apply(&hs).unwrap()).unwrap());
        assert!(BlockMorphism::new(d1.clone(), d2.clone(), vec![vec![None]]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn morphism_laws_on_samples(seed in proptest::collection::vec(0u32..3, 17), seed2 in proptest::collection::vec(0u32..3, 17)) {
            let mk = |s: &[u32]| {
                let mut g = GridFn { exp: 3, intervals: s[..8].to_vec(), points: s[8..].to_vec() };
                for j in 0..=8 {
                    let mut cap = g.points[j];
                    if j > 0 { cap = cap.min(g.intervals[j - 1]); }
                    if j < 8 { cap = cap.min(g.intervals[j]); }
                    g.points[j] = cap;
                }
                g.points[0] -= g.points[0] % 2;
                g.points[8] -= g.points[8] % 2;
                g.to_stepfn()
            };
            let (x, y) = (mk(&seed), mk(&seed2));
            let m = phi(2, 1, 2, 1);
            let mx = m.apply(&x).unwrap();
            let my = m.apply(&y).unwrap();
            proptest::prop_assert_eq!(m.apply(&StepFn::zero()).unwrap(), StepFn::zero());
            proptest::prop_assert_eq!(m.apply(&x.add(&y)).unwrap(), mx.add(&my));
            if x.leq(&y) {
                proptest::prop_assert!(mx.leq(&my));
            }
            if crate::stepfn::way_below(&x, &y) {
                proptest::prop_assert!(crate::stepfn::way_below(&mx, &my));
            }
        }
    }

    fn standard_pair() -> (InductiveSystem, InductiveSystem) {
        let p = SystemParams::standard();
        (build_system(&p, Variant::A).unwrap(), build_system(&p, Variant::B).unwrap())
    }

    #[test]
    fn criterion_bound_values() {
        let p = SystemParams::standard();
        // q₀ = 2, r₁ = 3: l = 2
        assert_eq!(criterion_bound(&p, 1, 0).unwrap().bound_value(), rat(1, 4));
        assert!(criterion_bound(&p, 1, 1).is_err());
        for n in 1..4 {
            for i in 0..n {
                let c = criterion_bound(&p, n, i).unwrap();
                let q = BigInt::from(p.q(i));
                let loose = Rational::new(BigInt::one(), q.pow(p.exponents[n] - 2));
                assert!(c.bound_value() <= loose);
                assert!(c.bound_value() < dyadic_unit(n as u32));
            }
        }
    }

    #[test]
    fn intertwining_criterion_mode() {
        let p = SystemParams::extended();
        let a = build_system(&p, Variant::A).unwrap();
        let b = build_system(&p, Variant::B).unwrap();
        let r = intertwining_check(&a, &b, None, 4, CheckMode::Criterion, &Limits::default());
        assert!(r.certified, "{:?}", r.condition_failures);
        assert_eq!(r.stages.len(), 5);
        assert!(r.stages.iter().all(|s| s.shared_entries_agree));
    }

    #[test]
    fn intertwining_exhaustive_mode() {
        let (a, b) = standard_pair();
        let r = intertwining_check(&a, &b, None, 2, CheckMode::Exhaustive, &Limits::default());
        let q2 = &r.stages[2].blocks[0];
        // Λ₃ for q = 2 is enumerated in full
        assert_eq!(q2.strict_exhaustive.as_ref().map(|o| (o.lambda_size, o.equivalent)), Some((478910, true)));
        assert_eq!(r.stages[2].blocks[1].level, Some(7));
        assert!(r.certified, "{}", r.verdict);
        assert!(!r.resource_limited);
    }

    #[test]
    fn intertwining_reports_failures() {
        let (a, b) = standard_pair();
        let tight = Limits { lambda_ceiling: 100, pair_ceiling: 1000 };
        let r = intertwining_check(&a, &b, None, 2, CheckMode::Exhaustive, &tight);
        assert!(r.resource_limited && !r.certified);
        let r = intertwining_check(&a, &a, None, 1, CheckMode::Criterion, &Limits::default());
        assert!(!r.certified);
        let mut p = SystemParams::standard();
        p.exponents = vec![1, 3, 4, 5];
        let a = build_system_relaxed(&p, Variant::A).unwrap();
        let b = build_system_relaxed(&p, Variant::B).unwrap();
        let r = intertwining_check(&a, &b, None, 2, CheckMode::Criterion, &Limits::default());
        assert!(r.condition_failures.iter().any(|f| f.contains("condition failed")), "{:?}", r.condition_failures);
        assert!(!r.certified);
        let (a, b) = standard_pair();
        let r = intertwining_check(&a, &b, Some(&[0, 0, 1, 2]), 2, CheckMode::Criterion, &Limits::default());
        assert!(!r.certified);
    }
}
