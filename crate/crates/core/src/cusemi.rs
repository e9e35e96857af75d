//! Concrete Cu-semigroups: Cu of folding interval algebras (unscaled rank
//! picture) and of C([0,1]), their uniform basis levels M′ₙ, the
//! projections ε′ₙ and the finite test sets Λₙ.

use num_bigint::{BigInt, BigUint};
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFn, GridSpace};
use crate::numbers::{dyadic_unit, ExtNat, Rational};
use crate::stepfn::{self, merge_sorted, sup_chain, way_below, Partition, StepFn};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CuObject {
    /// Cu of a folding interval algebra of fiber size q and level l:
    /// functions whose endpoint values are multiples of q.
    FoldingCu { q: u64, level: u32 },
    /// Cu(C([0,1])) = Lsc([0,1], N̄).
    PlainLsc,
    DirectSum { components: Vec<CuObject> },
}

impl CuObject {
    /// Modulus imposed on the endpoint values (1 when unconstrained).
    pub fn endpoint_modulus(&self) -> u64 {
        match self {
            CuObject::FoldingCu { q, .. } => *q,
            _ => 1,
        }
    }

    pub fn components(&self) -> Vec<&CuObject> {
        match self {
            CuObject::DirectSum { components } => components.iter().collect(),
            other => vec![other],
        }
    }

    pub fn is_direct_sum(&self) -> bool {
        matches!(self, CuObject::DirectSum { .. })
    }

    pub fn label(&self) -> String {
        match self {
            CuObject::FoldingCu { q, level } => format!("FoldingCu(q={q}, l={level})"),
            CuObject::PlainLsc => "PlainLsc".into(),
            CuObject::DirectSum { components } => {
                let inner: Vec<_> = components.iter().map(CuObject::label).collect();
                format!("DirectSum({})", inner.join(", "))
            }
        }
    }
}

/// Membership of a single step function in a non-sum object.
pub fn member(obj: &CuObject, f: &StepFn) -> bool {
    match obj {
        CuObject::FoldingCu { q, .. } => {
            let q = BigUint::from(*q);
            f.value_at_zero().divisible_by(&q) && f.value_at_one().divisible_by(&q)
        }
        CuObject::PlainLsc => true,
        CuObject::DirectSum { .. } => false,
    }
}

/// Membership of a tuple in a direct sum (or a 1-tuple in a single object).
pub fn member_tuple(obj: &CuObject, fs: &[StepFn]) -> bool {
    let comps = obj.components();
    comps.len() == fs.len() && comps.iter().zip(fs).all(|(o, f)| member(o, f))
}

/// The level-n basis M′ₙ: members constant on the open cells of
/// equidistant(2ⁿ), finite-valued, values at most `cap` when one is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisLevel {
    pub object: CuObject,
    pub n: u32,
    pub cap: Option<u64>,
}

impl BasisLevel {
    /// Level n with the default cap 2ⁿ.
    pub fn new(object: CuObject, n: u32) -> Self {
        BasisLevel { object, n, cap: Some(1u64 << n) }
    }

    pub fn with_cap(object: CuObject, n: u32, cap: u64) -> Self {
        BasisLevel { object, n, cap: Some(cap) }
    }

    /// Level n without a value cap; used as the target of containment checks.
    pub fn uncapped(object: CuObject, n: u32) -> Self {
        BasisLevel { object, n, cap: None }
    }

    pub fn resolution(&self) -> u64 {
        1u64 << self.n
    }

    pub fn contains(&self, f: &StepFn) -> bool {
        if !member(&self.object, f) || !f.is_finite_valued() {
            return false;
        }
        if let Some(c) = self.cap {
            if f.max_value() > ExtNat::fin(c) {
                return false;
            }
        }
        Partition::equidistant(self.resolution()).refines(&f.partition())
    }

    /// The capped slice of this level as a grid space (needs a cap).
    pub fn grid_space(&self) -> Result<GridSpace> {
        let cap = self.cap.ok_or_else(|| Error::Precondition("an uncapped level cannot be enumerated".into()))?;
        let cap32 = u32::try_from(cap).map_err(|_| Error::ResourceLimit(format!("cap {cap} too large")))?;
        let m = self.object.endpoint_modulus() as u32;
        let endpoints = (0..=cap32).filter(|v| v % m == 0).collect();
        Ok(GridSpace { exp: self.n, cap: cap32, endpoints })
    }
}

/// ε′ₙ: the greatest element of M′ₙ (cap 2ⁿ) that is way below `f`.
pub fn basis_project(obj: &CuObject, f: &StepFn, n: u32) -> Result<StepFn> {
    if !member(obj, f) {
        return Err(Error::DomainMismatch(format!("{f} is not a member of {}", obj.label())));
    }
    Ok(project_with_cap(obj.endpoint_modulus(), f, n, 1u64 << n))
}

fn project_with_cap(modulus: u64, f: &StepFn, n: u32, cap: u64) -> StepFn {
    let w = 1u64 << n;
    let den = BigInt::from(w);
    let cap = ExtNat::fin(cap);
    // the bound for an open grid cell is the minimum of f over its closure
    let cells: Vec<ExtNat> = (0..w)
        .map(|k| {
            let a = Rational::new(BigInt::from(k), den.clone());
            let b = Rational::new(BigInt::from(k + 1), den.clone());
            f.min_on_closed(&a, &b).min(cap.clone())
        })
        .collect();
    let round_down = |v: &ExtNat| -> ExtNat {
        let v = v.as_finite().expect("capped values are finite");
        let m = BigUint::from(modulus);
        ExtNat::Fin(v - (v % &m))
    };
    let wu = w as usize;
    let mut points = Vec::with_capacity(wu + 1);
    points.push(round_down(&cells[0]));
    for j in 1..wu {
        points.push(cells[j - 1].clone().min(cells[j].clone()));
    }
    points.push(round_down(&cells[wu - 1]));
    let bps = Partition::equidistant(w).breakpoints().to_vec();
    StepFn::new(bps, cells, points).expect("projection is lsc by construction")
}

/// The test set Λₙ of FoldingCu(q, ·) as a grid space.
pub fn lambda_space(obj: &CuObject, n: u32) -> Result<GridSpace> {
    match obj {
        CuObject::FoldingCu { q, .. } => {
            let q = u32::try_from(*q).map_err(|_| Error::ResourceLimit(format!("fiber size {q} too large")))?;
            Ok(GridSpace { exp: n, cap: q, endpoints: vec![0, q] })
        }
        other => Err(Error::DomainMismatch(format!("Λₙ is defined for FoldingCu objects, not {}", other.label()))),
    }
}

pub fn lambda_count(obj: &CuObject, n: u32) -> Result<u128> {
    Ok(lambda_space(obj, n)?.count())
}

/// Λₙ as canonical step functions, refusing above `ceiling` elements.
pub fn enumerate_lambda(obj: &CuObject, n: u32, ceiling: u128) -> Result<Vec<StepFn>> {
    let space = lambda_space(obj, n)?;
    Ok(space.enumerate(ceiling)?.iter().map(GridFn::to_stepfn).collect())
}

/// Outcome of checking that the basis projections of `f` exhaust it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Reconstruction {
    pub holds: bool,
    pub levels: Vec<u32>,
    pub failure: Option<String>,
}

/// Checks, for each level in `levels` (increasing), that ε′ₙ(f) ≪ f, that
/// the projections increase, and that ε′ₙ(f) agrees with f on every point
/// cell of f and at every x farther than 2⁻ⁿ from the points cells of f.
/// Since those regions exhaust [0,1] as n grows, the supremum of the chain
/// is exactly f.
pub fn basis_sup_recovers(obj: &CuObject, f: &StepFn, levels: &[u32]) -> Result<Reconstruction> {
    let mut prev: Option<StepFn> = None;
    let fail = |msg: String| Reconstruction { holds: false, levels: levels.to_vec(), failure: Some(msg) };
    for &n in levels {
        let g = basis_project(obj, f, n)?;
        if !way_below(&g, f) {
            return Ok(fail(format!("level {n}: projection is not way below f")));
        }
        if let Some(p) = &prev {
            if !p.leq(&g) {
                return Ok(fail(format!("level {n}: projections decrease")));
            }
        }
        if let Some(msg) = margin_mismatch(f, &g, &dyadic_unit(n)) {
            return Ok(fail(format!("level {n}: {msg}")));
        }
        prev = Some(g);
    }
    Ok(Reconstruction { holds: true, levels: levels.to_vec(), failure: None })
}

fn margin_mismatch(f: &StepFn, g: &StepFn, r: &Rational) -> Option<String> {
    let zero = Rational::zero();
    let one = Rational::from_integer(1.into());
    let mut anchors = vec![zero.clone()];
    anchors.extend(f.breakpoints().iter().cloned());
    anchors.push(one.clone());
    let mut marks: Vec<Rational> =
        anchors.iter().flat_map(|b| [b - r, b + r]).filter(|t| *t > zero && *t < one).collect();
    marks.sort();
    marks.dedup();
    let bps = merge_sorted(&merge_sorted(f.breakpoints(), g.breakpoints()), &marks);
    let far = |x: &Rational| anchors.iter().all(|b| {
        let d = if x > b { x - b } else { b - x };
        d > *r
    });
    for b in &anchors {
        if f.eval(b) != g.eval(b) {
            return Some(format!("differs at the point cell {b}"));
        }
    }
    let two = Rational::from_integer(2.into());
    let mut prev = zero;
    for b in bps.iter().chain(std::iter::once(&one)) {
        let mid = (&prev + b) / &two;
        if far(&mid) && f.eval(&mid) != g.eval(&mid) {
            return Some(format!("differs on ({prev}, {b})"));
        }
        if b != &one && far(b) && f.eval(b) != g.eval(b) {
            return Some(format!("differs at {b}"));
        }
        prev = b.clone();
    }
    None
}

/// Result of one axiom spot check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AxiomCheck {
    pub axiom: String,
    pub holds: bool,
    pub instances: usize,
    pub witness: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SpotCheckReport {
    pub object: String,
    pub checks: Vec<AxiomCheck>,
}

impl SpotCheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Checks (O0)–(O4) on samples and chains of members. Non-members are
/// rejected before any check runs.
pub fn axioms_spot_check(obj: &CuObject, samples: &[StepFn], chains: &[Vec<StepFn>]) -> Result<SpotCheckReport> {
    for f in samples.iter().chain(chains.iter().flatten()) {
        if !member(obj, f) {
            return Err(Error::DomainMismatch(format!("{f} is not a member of {}", obj.label())));
        }
    }
    let mut checks = Vec::new();
    let zero = StepFn::zero();
    checks.push(AxiomCheck {
        axiom: "O0".into(),
        holds: way_below(&zero, &zero),
        instances: 1,
        witness: None,
    });

    let mut o1 = AxiomCheck { axiom: "O1".into(), holds: true, instances: 0, witness: None };
    for chain in chains {
        o1.instances += 1;
        match sup_chain(chain) {
            Ok(s) if member(obj, &s) && chain.iter().all(|c| c.leq(&s)) => {}
            Ok(s) => {
                o1.holds = false;
                o1.witness = Some(format!("supremum {s} is not an upper bound in the object"));
            }
            Err(e) => {
                o1.holds = false;
                o1.witness = Some(e.to_string());
            }
        }
    }
    checks.push(o1);

    let mut o2 = AxiomCheck { axiom: "O2".into(), holds: true, instances: 0, witness: None };
    for f in samples.iter().filter(|f| f.is_finite_valued()) {
        o2.instances += 1;
        let levels = reconstruction_levels(f);
        let r = basis_sup_recovers(obj, f, &levels)?;
        if !r.holds {
            o2.holds = false;
            o2.witness = Some(format!("{f}: {}", r.failure.unwrap_or_default()));
            break;
        }
    }
    checks.push(o2);

    let wb: Vec<(&StepFn, &StepFn)> = samples
        .iter()
        .flat_map(|a| samples.iter().map(move |b| (a, b)))
        .filter(|(a, b)| way_below(a, b))
        .collect();
    let mut o3 = AxiomCheck { axiom: "O3".into(), holds: true, instances: 0, witness: None };
    'outer: for (x1, y1) in &wb {
        for (x2, y2) in &wb {
            o3.instances += 1;
            if !way_below(&x1.add(x2), &y1.add(y2)) {
                o3.holds = false;
                o3.witness = Some(format!("{x1} ≪ {y1} and {x2} ≪ {y2} but the sums are not"));
                break 'outer;
            }
        }
    }
    checks.push(o3);

    let mut o4 = AxiomCheck { axiom: "O4".into(), holds: true, instances: 0, witness: None };
    'o4: for a in chains {
        for b in chains.iter().filter(|b| b.len() == a.len()) {
            o4.instances += 1;
            let sums: Vec<StepFn> = a.iter().zip(b).map(|(x, y)| x.add(y)).collect();
            let lhs = sup_chain(&sums);
            let rhs = match (sup_chain(a), sup_chain(b)) {
                (Ok(x), Ok(y)) => Some(x.add(&y)),
                _ => None,
            };
            if lhs.ok() != rhs {
                o4.holds = false;
                o4.witness = Some("supremum of sums differs from sum of suprema".into());
                break 'o4;
            }
        }
    }
    checks.push(o4);
    Ok(SpotCheckReport { object: obj.label(), checks })
}

/// Levels at which a finite dyadic function must already be recovered:
/// above its resolution exponent and above log₂ of its largest value.
pub fn reconstruction_levels(f: &StepFn) -> Vec<u32> {
    let res = f
        .breakpoints()
        .iter()
        .map(|b| {
            let d = b.denom().to_u64().unwrap_or(u64::MAX);
            if d.is_power_of_two() {
                d.trailing_zeros()
            } else {
                0
            }
        })
        .max()
        .unwrap_or(0);
    let maxv = f.max_value().to_u64().unwrap_or(0);
    let mut val_exp = 0;
    while (1u64 << val_exp) < maxv {
        val_exp += 1;
    }
    let start = res.max(val_exp) + 1;
    (start..start + 3).collect()
}

/// Convenience for tests and reports: ≪ between tuples, componentwise.
pub fn way_below_tuple(a: &[StepFn], b: &[StepFn]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| stepfn::way_below(x, y))
}
