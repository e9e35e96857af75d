//! Finitely generated abelian groups, Smith normal form, colimits of the two
//! shapes of inductive sequences that occur here, and isomorphism classes
//! of the groups produced by the inductive systems.

use std::collections::BTreeSet;
use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numbers::{is_prime, LocalizedClass};

pub type Matrix = Vec<Vec<BigInt>>;

pub fn zeros(rows: usize, cols: usize) -> Matrix {
    vec![vec![BigInt::zero(); cols]; rows]
}

pub fn identity(n: usize) -> Matrix {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = BigInt::one();
    }
    m
}

pub fn from_i64(rows: &[&[i64]]) -> Matrix {
    rows.iter().map(|r| r.iter().map(|&x| BigInt::from(x)).collect()).collect()
}

pub fn mat_mul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    let k = b.len();
    let m = b.first().map_or(0, Vec::len);
    let mut out = zeros(n, m);
    for i in 0..n {
        for t in 0..k {
            if a[i][t].is_zero() {
                continue;
            }
            for j in 0..m {
                out[i][j] += &a[i][t] * &b[t][j];
            }
        }
    }
    out
}

pub fn mat_vec(a: &Matrix, v: &[BigInt]) -> Vec<BigInt> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Determinant by fraction-free elimination (Bareiss).
pub fn determinant(m: &Matrix) -> BigInt {
    let n = m.len();
    if n == 0 {
        return BigInt::one();
    }
    let mut a = m.clone();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                Some(i) => {
                    a.swap(i, k);
                    sign = -sign;
                }
                None => return BigInt::zero(),
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    sign * &a[n - 1][n - 1]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snf {
    pub d: Matrix,
    pub u: Matrix,
    pub v: Matrix,
}

impl Snf {
    /// Diagonal entries d₁ | d₂ | … (zeros last).
    pub fn diagonal(&self) -> Vec<BigInt> {
        let r = self.d.len().min(self.d.first().map_or(0, Vec::len));
        (0..r).map(|i| self.d[i][i].clone()).collect()
    }

    pub fn rank(&self) -> usize {
        self.diagonal().iter().filter(|x| !x.is_zero()).count()
    }
}

/// D = U·M·V with U, V unimodular and D diagonal with a divisibility chain.
pub fn smith_normal_form(m: &Matrix) -> Snf {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut a = m.clone();
    let mut u = identity(rows);
    let mut v = identity(cols);
    let mut t = 0;
    while t < rows.min(cols) {
        // pivot: a nonzero entry of least absolute value in the trailing block
        let mut best: Option<(usize, usize)> = None;
        for i in t..rows {
            for j in t..cols {
                if !a[i][j].is_zero() && best.is_none_or(|(bi, bj)| a[i][j].abs() < a[bi][bj].abs()) {
                    best = Some((i, j));
                }
            }
        }
        let Some((pi, pj)) = best else { break };
        a.swap(t, pi);
        u.swap(t, pi);
        swap_cols(&mut a, t, pj);
        swap_cols(&mut v, t, pj);

        let mut clean = true;
        for i in t + 1..rows {
            if a[i][t].is_zero() {
                continue;
            }
            let f = a[i][t].div_floor(&a[t][t]);
            row_axpy(&mut a, i, t, &f);
            row_axpy(&mut u, i, t, &f);
            if !a[i][t].is_zero() {
                clean = false;
            }
        }
        for j in t + 1..cols {
            if a[t][j].is_zero() {
                continue;
            }
            let f = a[t][j].div_floor(&a[t][t]);
            col_axpy(&mut a, j, t, &f);
            col_axpy(&mut v, j, t, &f);
            if !a[t][j].is_zero() {
                clean = false;
            }
        }
        if !clean {
            continue; // a smaller remainder now exists; pick a new pivot
        }
        // divisibility: fold an offending row into row t and retry
        let offending = (t + 1..rows).find(|&i| (t + 1..cols).any(|j| !(&a[i][j] % &a[t][t]).is_zero()));
        if let Some(i) = offending {
            let one = -BigInt::one();
            row_axpy(&mut a, t, i, &one);
            row_axpy(&mut u, t, i, &one);
            continue;
        }
        if a[t][t].sign() == Sign::Minus {
            for x in a[t].iter_mut() {
                *x = -x.clone();
            }
            for x in u[t].iter_mut() {
                *x = -x.clone();
            }
        }
        t += 1;
    }
    Snf { d: a, u, v }
}

fn swap_cols(a: &mut Matrix, i: usize, j: usize) {
    if i != j {
        for row in a.iter_mut() {
            row.swap(i, j);
        }
    }
}

/// row[dst] −= f·row[src]
fn row_axpy(a: &mut Matrix, dst: usize, src: usize, f: &BigInt) {
    let s = a[src].clone();
    for (x, y) in a[dst].iter_mut().zip(&s) {
        *x -= f * y;
    }
}

/// col[dst] −= f·col[src]
fn col_axpy(a: &mut Matrix, dst: usize, src: usize, f: &BigInt) {
    for row in a.iter_mut() {
        let y = row[src].clone();
        row[dst] -= f * y;
    }
}

/// Z^rank ⊕ ⊕ Z/dᵢ with d₁ | d₂ | … and every dᵢ ≥ 2. Elements use
/// coordinates (torsion coordinates first, reduced mod dᵢ, then free ones).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FgAbGroup {
    pub free_rank: usize,
    pub invariant_factors: Vec<BigInt>,
}

impl FgAbGroup {
    pub fn trivial() -> Self {
        FgAbGroup { free_rank: 0, invariant_factors: Vec::new() }
    }

    pub fn free(rank: usize) -> Self {
        FgAbGroup { free_rank: rank, invariant_factors: Vec::new() }
    }

    pub fn cyclic(n: u64) -> Self {
        Self::from_diagonal(&[BigInt::from(n)], 0)
    }

    /// The group ⊕ Z/nᵢ ⊕ Z^free for arbitrary nᵢ ≥ 0 (Z/0 = Z, Z/1 = 0).
    pub fn from_diagonal(ns: &[BigInt], free: usize) -> Self {
        let k = ns.len();
        let mut m = zeros(k, k);
        for (i, n) in ns.iter().enumerate() {
            m[i][i] = n.clone();
        }
        let pres = Presentation::cokernel(k, &m);
        let mut g = pres.group;
        g.free_rank += free;
        g
    }

    pub fn torsion_len(&self) -> usize {
        self.invariant_factors.len()
    }

    pub fn dim(&self) -> usize {
        self.invariant_factors.len() + self.free_rank
    }

    pub fn is_trivial(&self) -> bool {
        self.dim() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.free_rank == 0
    }

    pub fn order(&self) -> Option<BigInt> {
        self.is_finite().then(|| self.invariant_factors.iter().product())
    }

    pub fn direct_sum(&self, other: &FgAbGroup) -> FgAbGroup {
        let mut ns = self.invariant_factors.clone();
        ns.extend(other.invariant_factors.iter().cloned());
        FgAbGroup::from_diagonal(&ns, self.free_rank + other.free_rank)
    }

    /// Reduces torsion coordinates into [0, dᵢ).
    pub fn reduce(&self, v: &[BigInt]) -> Vec<BigInt> {
        v.iter()
            .enumerate()
            .map(|(i, x)| match self.invariant_factors.get(i) {
                Some(d) => x.mod_floor(d),
                None => x.clone(),
            })
            .collect()
    }

    pub fn zero_element(&self) -> Vec<BigInt> {
        vec![BigInt::zero(); self.dim()]
    }

    pub fn generator(&self, i: usize) -> Vec<BigInt> {
        let mut v = self.zero_element();
        v[i] = BigInt::one();
        v
    }

    pub fn is_zero_element(&self, v: &[BigInt]) -> bool {
        self.reduce(v).iter().all(Zero::is_zero)
    }

    /// Every element, when finite and of order at most `limit`.
    pub fn elements(&self, limit: u64) -> Option<Vec<Vec<BigInt>>> {
        let ord = self.order()?.to_u64()?;
        if ord > limit {
            return None;
        }
        let mut out = vec![Vec::new()];
        for d in &self.invariant_factors {
            let d = d.to_u64()?;
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..d).map(move |x| {
                        let mut p = prefix.clone();
                        p.push(BigInt::from(x));
                        p
                    })
                })
                .collect();
        }
        Some(out)
    }

    /// Elementary divisors (prime powers) of the torsion part, sorted.
    pub fn elementary_divisors(&self) -> Vec<BigUint> {
        let mut out = Vec::new();
        for d in &self.invariant_factors {
            let mut rest = d.magnitude().clone();
            let mut p = BigUint::from(2u8);
            while &p * &p <= rest {
                if (&rest % &p).is_zero() {
                    let mut pk = BigUint::one();
                    while (&rest % &p).is_zero() {
                        rest /= &p;
                        pk *= &p;
                    }
                    out.push(pk);
                }
                p += 1u8;
            }
            if !rest.is_one() {
                out.push(rest);
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for FgAbGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.invariant_factors.iter().map(|d| format!("Z/{d}")).collect();
        match self.free_rank {
            0 => {}
            1 => parts.push("Z".into()),
            r => parts.push(format!("Z^{r}")),
        }
        if parts.is_empty() {
            f.write_str("0")
        } else {
            f.write_str(&parts.join(" ⊕ "))
        }
    }
}

impl Serialize for FgAbGroup {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("freeRank", &self.free_rank)?;
        let inv: Vec<String> = self.invariant_factors.iter().map(ToString::to_string).collect();
        m.serialize_entry("invariantFactors", &inv)?;
        m.end()
    }
}

/// A group given as Z^g / (column span of a relation matrix), with the
/// change of coordinates to the canonical form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Presentation {
    pub group: FgAbGroup,
    /// Rows of U that survive (dᵢ ≠ 1), torsion rows first then free rows.
    coords: Matrix,
}

impl Presentation {
    /// Z^g modulo the columns of `relations` (a g × r matrix).
    pub fn cokernel(g: usize, relations: &Matrix) -> Presentation {
        let snf = smith_normal_form(relations);
        let diag = snf.diagonal();
        let mut torsion = Vec::new();
        let mut coords = Vec::new();
        let mut free_rows = Vec::new();
        for i in 0..g {
            let d = diag.get(i).cloned().unwrap_or_else(BigInt::zero);
            if d.is_zero() {
                free_rows.push(snf.u[i].clone());
            } else if !d.is_one() {
                torsion.push(d);
                coords.push(snf.u[i].clone());
            }
        }
        let free_rank = free_rows.len();
        coords.extend(free_rows);
        Presentation { group: FgAbGroup { free_rank, invariant_factors: torsion }, coords }
    }

    /// Canonical coordinates of the class of `v` ∈ Z^g.
    pub fn coordinates(&self, v: &[BigInt]) -> Vec<BigInt> {
        self.group.reduce(&mat_vec(&self.coords, v))
    }
}

/// The subgroup of `ambient` generated by `gens`, presented on those
/// generators: Z^m modulo the relations the generators satisfy.
pub fn subgroup_presentation(ambient: &FgAbGroup, gens: &[Vec<BigInt>]) -> Presentation {
    let m = gens.len();
    let t = ambient.torsion_len();
    let n = ambient.dim();
    // columns: generators, then the torsion relations of the ambient group
    let mut a = zeros(n, m + t);
    for (j, g) in gens.iter().enumerate() {
        for i in 0..n {
            a[i][j] = g[i].clone();
        }
    }
    for (i, d) in ambient.invariant_factors.iter().enumerate() {
        a[i][m + i] = d.clone();
    }
    let snf = smith_normal_form(&a);
    let rank = snf.rank();
    let cols = m + t;
    let kernel: Vec<Vec<BigInt>> = (rank..cols).map(|j| (0..m).map(|i| snf.v[i][j].clone()).collect()).collect();
    let mut rel = zeros(m, kernel.len());
    for (j, kv) in kernel.iter().enumerate() {
        for i in 0..m {
            rel[i][j] = kv[i].clone();
        }
    }
    Presentation::cokernel(m, &rel)
}

/// A homomorphism given by its matrix on canonical coordinates
/// (target.dim() rows, source.dim() columns).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMorphism {
    pub source: FgAbGroup,
    pub target: FgAbGroup,
    pub matrix: Matrix,
}

impl GroupMorphism {
    pub fn new(source: FgAbGroup, target: FgAbGroup, matrix: Matrix) -> Result<Self> {
        let m = GroupMorphism { source, target, matrix };
        m.check()?;
        Ok(m)
    }

    pub fn identity(g: &FgAbGroup) -> Self {
        GroupMorphism { source: g.clone(), target: g.clone(), matrix: identity(g.dim()) }
    }

    pub fn zero(source: &FgAbGroup, target: &FgAbGroup) -> Self {
        GroupMorphism { source: source.clone(), target: target.clone(), matrix: zeros(target.dim(), source.dim()) }
    }

    /// Multiplication by k on a group.
    pub fn scalar(g: &FgAbGroup, k: i64) -> Self {
        let mut m = identity(g.dim());
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = BigInt::from(k);
        }
        GroupMorphism { source: g.clone(), target: g.clone(), matrix: m }
    }

    /// Well-definedness: each torsion generator of order d maps to an
    /// element killed by d, and torsion never maps to free coordinates
    /// nontrivially.
    pub fn check(&self) -> Result<()> {
        if self.matrix.len() != self.target.dim() || self.matrix.iter().any(|r| r.len() != self.source.dim()) {
            return Err(Error::DomainMismatch("matrix shape does not match the groups".into()));
        }
        for (j, d) in self.source.invariant_factors.iter().enumerate() {
            let col: Vec<BigInt> = self.matrix.iter().map(|r| &r[j] * d).collect();
            if !self.target.is_zero_element(&col) {
                return Err(Error::DomainMismatch(format!("generator {j} of order {d} is not mapped to a {d}-torsion element")));
            }
        }
        Ok(())
    }

    pub fn apply(&self, v: &[BigInt]) -> Vec<BigInt> {
        self.target.reduce(&mat_vec(&self.matrix, v))
    }

    /// self ∘ first
    pub fn after(&self, first: &GroupMorphism) -> GroupMorphism {
        GroupMorphism {
            source: first.source.clone(),
            target: self.target.clone(),
            matrix: mat_mul(&self.matrix, &first.matrix),
        }
    }

    /// Equality as maps (columns compared modulo the target relations).
    pub fn same_map(&self, other: &GroupMorphism) -> bool {
        self.source == other.source
            && self.target == other.target
            && (0..self.source.dim()).all(|j| {
                let e = self.source.generator(j);
                self.apply(&e) == other.apply(&e)
            })
    }
}

/// The colimit of G →φ G →φ … for a finite group G: the eventual image
/// φᵏ(G), on which φ is bijective.
pub fn colim_finite(g: &FgAbGroup, phi: &GroupMorphism) -> Result<FgAbGroup> {
    if !g.is_finite() {
        return Err(Error::Precondition(format!("{g} is not finite")));
    }
    if phi.source != *g || phi.target != *g {
        return Err(Error::DomainMismatch("φ must be an endomorphism of G".into()));
    }
    let mut gens: Vec<Vec<BigInt>> = (0..g.dim()).map(|i| g.generator(i)).collect();
    let mut current = subgroup_presentation(g, &gens).group;
    loop {
        let next_gens: Vec<Vec<BigInt>> = gens.iter().map(|x| phi.apply(x)).collect();
        let next = subgroup_presentation(g, &next_gens).group;
        if next.order() == current.order() {
            return Ok(current);
        }
        gens = next_gens;
        current = next;
    }
}

/// The colimit of Z →×m₀ Z →×m₁ …, classified by the primes of the
/// multipliers.
pub fn colim_rank_one(multipliers: &[BigUint]) -> Result<GroupClass> {
    let mut support = BTreeSet::new();
    for m in multipliers {
        if m.is_zero() {
            return Err(Error::UnsupportedSystem("a zero multiplier collapses the colimit".into()));
        }
        support.extend(crate::numbers::prime_support(m));
    }
    Ok(GroupClass::Localized(LocalizedClass { support }))
}

/// Which family of summands an index rule produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum RuleKind {
    /// Z/p_k
    CyclicPrime,
    /// Z[1/q_k] with q_k = p_k·p_{k−1}
    LocalizedSemiprime,
}

/// ⊕_{i ≥ 0} G(i + offset) for a rule kind G, over a prime sequence whose
/// known prefix is `primes` (p₋₁ = 1).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexRule {
    pub kind: RuleKind,
    pub offset: i64,
    pub primes: Vec<u64>,
}

impl IndexRule {
    pub fn new(kind: RuleKind, offset: i64, primes: Vec<u64>) -> Result<Self> {
        let min = match kind {
            RuleKind::CyclicPrime => -1,
            RuleKind::LocalizedSemiprime => 0,
        };
        if offset < min {
            return Err(Error::InvalidParams(format!("rule offset {offset} reaches undefined primes")));
        }
        Ok(IndexRule { kind, offset, primes })
    }

    /// True when the prefix is the initial run of all primes, so the rule
    /// denotes the same sequence however long the prefix.
    pub fn canonical_primes(&self) -> bool {
        let mut expect = 2u64;
        for &p in &self.primes {
            if p != expect {
                return false;
            }
            expect += 1;
            while !is_prime(expect) {
                expect += 1;
            }
        }
        true
    }

    fn prime(&self, k: i64) -> Option<u64> {
        if k == -1 {
            return Some(1);
        }
        usize::try_from(k).ok().and_then(|k| self.primes.get(k).copied())
    }

    /// The k-th summand of the family (before re-indexing), when the prime
    /// prefix reaches it.
    pub fn summand(&self, k: i64) -> Option<GroupClass> {
        match self.kind {
            RuleKind::CyclicPrime => self.prime(k).map(|p| GroupClass::Finite(FgAbGroup::cyclic(p))),
            RuleKind::LocalizedSemiprime => {
                let q = self.prime(k)? * self.prime(k - 1)?;
                Some(GroupClass::Localized(LocalizedClass::inverting(&BigUint::from(q))))
            }
        }
    }

    /// First family index whose summand is nontrivial.
    pub fn start(&self) -> i64 {
        match self.kind {
            RuleKind::CyclicPrime => self.offset.max(0),
            RuleKind::LocalizedSemiprime => self.offset,
        }
    }

    pub fn describe(&self) -> String {
        let idx = match self.offset {
            0 => "i".to_string(),
            o if o > 0 => format!("i+{o}"),
            o => format!("i{o}"),
        };
        let sub = if idx == "i" { "_i".to_string() } else { format!("_{{{idx}}}") };
        match self.kind {
            RuleKind::CyclicPrime => format!("Z/p{sub}, i>=0"),
            RuleKind::LocalizedSemiprime => format!("Z[1/q{sub}], i>=0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FormalSum {
    pub terms: Vec<GroupClass>,
    pub rule: Option<IndexRule>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroupClass {
    /// A finite group (free rank 0).
    Finite(FgAbGroup),
    Localized(LocalizedClass),
    FormalSum(FormalSum),
}

impl GroupClass {
    pub fn zero() -> Self {
        GroupClass::Finite(FgAbGroup::trivial())
    }

    pub fn integers() -> Self {
        GroupClass::Localized(LocalizedClass::integers())
    }

    pub fn cyclic(n: u64) -> Self {
        GroupClass::Finite(FgAbGroup::cyclic(n))
    }

    pub fn sum(terms: Vec<GroupClass>) -> Self {
        GroupClass::FormalSum(FormalSum { terms, rule: None })
    }

    pub fn rule_sum(rule: IndexRule, terms: Vec<GroupClass>) -> Self {
        GroupClass::FormalSum(FormalSum { terms, rule: Some(rule) })
    }

    pub fn normal_form(&self) -> NormalForm {
        let mut nf = NormalForm::default();
        nf.absorb(self);
        nf.finish()
    }
}

impl fmt::Display for GroupClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupClass::Finite(g) => write!(f, "{g}"),
            GroupClass::Localized(l) => write!(f, "{l}"),
            GroupClass::FormalSum(s) => {
                let mut parts: Vec<String> = s.terms.iter().map(ToString::to_string).collect();
                if let Some(r) = &s.rule {
                    parts.insert(0, format!("⊕({})", r.describe()));
                }
                if parts.is_empty() {
                    f.write_str("0")
                } else {
                    f.write_str(&parts.join(" ⊕ "))
                }
            }
        }
    }
}

impl Serialize for GroupClass {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(1))?;
        match self {
            GroupClass::Finite(g) => {
                let inv: Vec<String> = g.invariant_factors.iter().map(ToString::to_string).collect();
                m.serialize_entry("finite", &inv)?;
            }
            GroupClass::Localized(l) => m.serialize_entry("localized", &l.support)?,
            GroupClass::FormalSum(fs) => {
                #[derive(Serialize)]
                struct Body<'a> {
                    #[serde(skip_serializing_if = "Option::is_none")]
                    rule: Option<String>,
                    #[serde(skip_serializing_if = "Option::is_none")]
                    primes: Option<&'a [u64]>,
                    terms: &'a [GroupClass],
                }
                let body = Body {
                    rule: fs.rule.as_ref().map(IndexRule::describe),
                    primes: fs.rule.as_ref().map(|r| r.primes.as_slice()),
                    terms: &fs.terms,
                };
                m.serialize_entry("formalSum", &body)?;
            }
        }
        m.end()
    }
}

/// Canonical data of a group class: the merged finite part, the multiset of
/// rank-one localized summands, and an infinite tail rule with its first
/// index after absorbing explicit summands that continue it downwards.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalForm {
    pub torsion: Vec<BigUint>,
    pub localized: Vec<LocalizedClass>,
    pub rule: Option<(RuleKind, i64, Vec<u64>, bool)>,
    finite_parts: Vec<BigInt>,
    rules: Vec<IndexRule>,
}

impl NormalForm {
    fn absorb(&mut self, c: &GroupClass) {
        match c {
            GroupClass::Finite(g) => self.finite_parts.extend(g.invariant_factors.iter().cloned()),
            GroupClass::Localized(l) => self.localized.push(l.clone()),
            GroupClass::FormalSum(s) => {
                for t in &s.terms {
                    self.absorb(t);
                }
                if let Some(r) = &s.rule {
                    self.rules.push(r.clone());
                }
            }
        }
    }

    fn finish(mut self) -> NormalForm {
        let finite = FgAbGroup::from_diagonal(&self.finite_parts, 0);
        self.torsion = finite.elementary_divisors();
        self.localized.sort();
        // more than one tail rule is kept unresolved; comparison reports it
        if self.rules.len() == 1 {
            let r = self.rules[0].clone();
            let mut start = r.start();
            while start >= 1 {
                let prev = r.summand(start - 1);
                let taken = match prev {
                    Some(GroupClass::Finite(g)) => {
                        let ed = g.elementary_divisors();
                        remove_sub_multiset(&mut self.torsion, &ed)
                    }
                    Some(GroupClass::Localized(l)) => match self.localized.iter().position(|x| *x == l) {
                        Some(i) => {
                            self.localized.remove(i);
                            true
                        }
                        None => false,
                    },
                    _ => false,
                };
                if !taken {
                    break;
                }
                start -= 1;
            }
            let canonical = r.canonical_primes();
            self.rule = Some((r.kind, start, r.primes.clone(), canonical));
        }
        self
    }

    fn unresolved_rules(&self) -> bool {
        self.rules.len() > 1
    }
}

fn remove_sub_multiset(from: &mut Vec<BigUint>, part: &[BigUint]) -> bool {
    let mut copy = from.clone();
    for p in part {
        match copy.iter().position(|x| x == p) {
            Some(i) => {
                copy.remove(i);
            }
            None => return false,
        }
    }
    *from = copy;
    true
}

/// Isomorphism of group classes. Infinite sums are compared through their
/// index rules; rules over different, non-canonical prime sequences cannot
/// be compared.
pub fn class_iso(a: &GroupClass, b: &GroupClass) -> Result<bool> {
    let na = a.normal_form();
    let nb = b.normal_form();
    if na.unresolved_rules() || nb.unresolved_rules() {
        return Err(Error::Undecidable("several infinite index rules in one sum".into()));
    }
    let tails_match = match (&na.rule, &nb.rule) {
        (None, None) => true,
        (Some(_), None) | (None, Some(_)) => false,
        (Some((ka, sa, pa, ca)), Some((kb, sb, pb, cb))) => {
            if ka != kb {
                false
            } else if pa != pb && !(*ca && *cb) {
                return Err(Error::Undecidable(format!(
                    "index rules over different prime sequences {pa:?} and {pb:?}"
                )));
            } else {
                sa == sb
            }
        }
    };
    Ok(tails_match && na.torsion == nb.torsion && na.localized == nb.localized)
}

/// K-theory of an extension 0 → I → A → C → 0 with vanishing index map:
/// K₁(A) = K₁(I), K₀(A) = K₀(I) ⊕ Z.
pub fn six_term_assemble(ideal_k0: &GroupClass, ideal_k1: &GroupClass) -> (GroupClass, GroupClass) {
    let k0 = GroupClass::sum(vec![ideal_k0.clone(), GroupClass::integers()]);
    (k0, ideal_k1.clone())
}
