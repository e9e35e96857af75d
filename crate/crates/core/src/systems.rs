//! The inductive systems A and B: stage algebras as direct sums of folding
//! interval blocks plus C([0,1]), their Cu objects and connecting block
//! morphisms, the simple-ideal subsystems and their K-theory.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::abgroups::{
    class_iso, colim_finite, colim_rank_one, six_term_assemble, FgAbGroup, GroupClass, GroupMorphism, IndexRule,
    RuleKind,
};
use crate::cumorph::{BlockMorphism, CuMorphism};
use crate::cusemi::CuObject;
use crate::error::{Error, Result};
use crate::numbers::{in_unit_interval, is_prime, parse_rational, Rational};
use crate::stepfn::StepFn;

/// The parameters as they appear in a params file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ParamsFile {
    pub primes: Vec<u64>,
    pub exponents: Vec<u32>,
    #[serde(default)]
    pub dense_points: Vec<String>,
    pub stages: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemParams {
    pub primes: Vec<u64>,
    pub exponents: Vec<u32>,
    /// d₀, d₁, …; at least `stages` of them.
    pub dense_points: Vec<Rational>,
    /// Index N of the last stage; the system has stages A₀ … A_N.
    pub stages: usize,
}

/// Odd dyadics of each level, then the triadics of the same level:
/// 1/2, 1/3, 2/3, 1/4, 3/4, 1/9, 2/9, 4/9, …
pub fn default_dense_points(count: usize) -> Vec<Rational> {
    let mut out: Vec<Rational> = Vec::with_capacity(count);
    let mut level = 1u32;
    while out.len() < count {
        for base in [2i64, 3] {
            let den = base.pow(level);
            for j in 1..den {
                let r = Rational::new(j.into(), den.into());
                if j % base != 0 && !out.contains(&r) {
                    out.push(r);
                }
            }
        }
        level += 1;
    }
    out.truncate(count);
    out
}

impl SystemParams {
    pub fn standard() -> Self {
        SystemParams {
            primes: vec![2, 3, 5, 7],
            exponents: vec![2, 3, 4, 5],
            dense_points: default_dense_points(4),
            stages: 4,
        }
    }

    /// One more prime and exponent than `standard`, so that stage maps up to
    /// n = 4 exist.
    pub fn extended() -> Self {
        SystemParams {
            primes: vec![2, 3, 5, 7, 11],
            exponents: vec![2, 3, 4, 5, 6],
            dense_points: default_dense_points(5),
            stages: 5,
        }
    }

    /// Reads a params file. Missing dense points are filled from the default
    /// enumeration, skipping any already given.
    pub fn from_file(f: &ParamsFile) -> Result<Self> {
        let mut dense = f.dense_points.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>>>()?;
        let mut extra = default_dense_points(f.stages + dense.len()).into_iter();
        while dense.len() < f.stages {
            let d = extra.next().expect("enough default points");
            if !dense.contains(&d) {
                dense.push(d);
            }
        }
        Ok(SystemParams {
            primes: f.primes.clone(),
            exponents: f.exponents.clone(),
            dense_points: dense,
            stages: f.stages,
        })
    }

    pub fn to_file(&self) -> ParamsFile {
        ParamsFile {
            primes: self.primes.clone(),
            exponents: self.exponents.clone(),
            dense_points: self.dense_points.iter().map(ToString::to_string).collect(),
            stages: self.stages,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ParamsFile = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(&f)
    }

    /// Full validation, including r₀ ≥ 2.
    pub fn validate(&self) -> Result<()> {
        self.validate_relaxed()?;
        if let Some(&r0) = self.exponents.first() {
            if r0 < 2 {
                return Err(Error::InvalidParams(format!("r₀ = {r0}, but r₀ ≥ 2 is required")));
            }
        }
        Ok(())
    }

    /// Validation without the r₀ ≥ 2 requirement, for diagnostic builds.
    pub fn validate_relaxed(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.primes.len() < self.stages {
            return bad(format!("{} stages need {} primes, got {}", self.stages, self.stages, self.primes.len()));
        }
        if self.exponents.len() < self.stages {
            return bad(format!("{} stages need {} exponents, got {}", self.stages, self.stages, self.exponents.len()));
        }
        if self.dense_points.len() < self.stages {
            return bad(format!("{} stages need {} dense points", self.stages, self.stages));
        }
        if let Some(p) = self.primes.iter().find(|&&p| !is_prime(p)) {
            return bad(format!("{p} is not prime"));
        }
        if self.primes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("primes must be strictly increasing".into());
        }
        if self.exponents.windows(2).any(|w| w[0] >= w[1]) {
            return bad("exponents must be strictly increasing".into());
        }
        if self.exponents.first() == Some(&0) {
            return bad("exponents must be positive".into());
        }
        if let Some(d) = self.dense_points.iter().find(|d| !in_unit_interval(d)) {
            return bad(format!("dense point {d} is outside [0,1]"));
        }
        Ok(())
    }

    /// p_k, with p₋₁ = 1.
    pub fn prime(&self, k: i64) -> u64 {
        if k < 0 {
            1
        } else {
            self.primes[k as usize]
        }
    }

    /// q_k = p_k·p_{k−1}.
    pub fn q(&self, k: usize) -> u64 {
        self.prime(k as i64) * self.prime(k as i64 - 1)
    }

    /// [n,i] = Π_{j=i}^{n−1} q_i^{r_j}.
    pub fn order(&self, n: usize, i: usize) -> BigUint {
        let q = BigUint::from(self.q(i));
        (i..n).map(|j| q.pow(self.exponents[j])).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    A,
    B,
}

impl Variant {
    /// Rank of the projection e used by the folds of block k.
    pub fn rank_e(self, params: &SystemParams, k: usize) -> u64 {
        match self {
            Variant::A => params.prime(k as i64 - 1),
            Variant::B => params.prime(k as i64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FoldBlock {
    pub index: usize,
    pub q: u64,
    pub level: u32,
    #[serde(serialize_with = "ser_big")]
    pub order: BigUint,
    pub rank_e: u64,
}

fn ser_big<S: serde::Serializer>(x: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

impl FoldBlock {
    pub fn cu_object(&self) -> CuObject {
        CuObject::FoldingCu { q: self.q, level: self.level }
    }

    /// The unit of M_{[n,i]}(𝓘^{n−i}_q) in the rank picture: [n,i]·q^{n−i}.
    pub fn unit_value(&self) -> BigUint {
        &self.order * BigUint::from(self.q).pow(self.level)
    }
}

/// Stage A_n: fold blocks 0..n and a final C([0,1]) block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageAlgebra {
    pub n: usize,
    pub blocks: Vec<FoldBlock>,
}

impl StageAlgebra {
    pub fn cu_object(&self) -> CuObject {
        if self.blocks.is_empty() {
            return CuObject::PlainLsc;
        }
        let mut components: Vec<CuObject> = self.blocks.iter().map(FoldBlock::cu_object).collect();
        components.push(CuObject::PlainLsc);
        CuObject::DirectSum { components }
    }

    /// The unit as a tuple (fold blocks, then the interval block).
    pub fn unit(&self) -> Vec<StepFn> {
        let mut out: Vec<StepFn> =
            self.blocks.iter().map(|b| StepFn::constant(crate::numbers::ExtNat::Fin(b.unit_value()))).collect();
        out.push(StepFn::constant_u64(1));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InductiveSystem {
    pub variant: Variant,
    #[serde(skip)]
    pub params: SystemParams,
    pub stages: Vec<StageAlgebra>,
    /// morphisms[n]: A_n → A_{n+1}.
    pub morphisms: Vec<BlockMorphism>,
}

fn stage(params: &SystemParams, variant: Variant, n: usize) -> StageAlgebra {
    let blocks = (0..n)
        .map(|i| FoldBlock {
            index: i,
            q: params.q(i),
            level: (n - i) as u32,
            order: params.order(n, i),
            rank_e: variant.rank_e(params, i),
        })
        .collect();
    StageAlgebra { n, blocks }
}

/// The partial map of block i < n from stage n to n+1:
/// Fold{rank e, q_i} + Σ_{k=1}^{q_i^{r_n}−1} PointEval{k/q_i^{r_n}, q_i}.
pub fn partial_map(params: &SystemParams, variant: Variant, n: usize, i: usize) -> Result<CuMorphism> {
    let q = params.q(i);
    let dom = CuObject::FoldingCu { q, level: (n - i) as u32 };
    let cod = CuObject::FoldingCu { q, level: (n + 1 - i) as u32 };
    let fold = CuMorphism::fold(dom.clone(), cod.clone(), variant.rank_e(params, i), q)?;
    let den = BigUint::from(q).pow(params.exponents[n]);
    let nodes = CuMorphism::node_sum(dom, cod, den, BigUint::from(q))?;
    fold.plus(&nodes)
}

fn connecting(params: &SystemParams, variant: Variant, from: &StageAlgebra, to: &StageAlgebra) -> Result<BlockMorphism> {
    let n = from.n;
    let rows = n + 2;
    let cols = n + 1;
    let mut entries: Vec<Vec<Option<CuMorphism>>> = vec![vec![None; cols]; rows];
    for i in 0..n {
        entries[i][i] = Some(partial_map(params, variant, n, i)?);
    }
    let qn = params.q(n);
    let new_block = CuObject::FoldingCu { q: qn, level: 1 };
    let mult = BigUint::from(qn).pow(params.exponents[n] + 1);
    entries[n][n] = Some(CuMorphism::new(
        CuObject::PlainLsc,
        new_block,
        vec![crate::cumorph::Term::Path { start: Rational::zero(), end: Rational::zero(), mult }],
    )?);
    entries[n + 1][n] = Some(CuMorphism::point_eval(
        CuObject::PlainLsc,
        CuObject::PlainLsc,
        params.dense_points[n].clone(),
        1,
    )?);
    BlockMorphism::new(from.cu_object(), to.cu_object(), entries)
}

/// Builds A or B after full parameter validation.
pub fn build_system(params: &SystemParams, variant: Variant) -> Result<InductiveSystem> {
    params.validate()?;
    build_unchecked(params, variant)
}

/// Builds without the r₀ ≥ 2 requirement; used to diagnose why the
/// estimates need it.
pub fn build_system_relaxed(params: &SystemParams, variant: Variant) -> Result<InductiveSystem> {
    params.validate_relaxed()?;
    build_unchecked(params, variant)
}

fn build_unchecked(params: &SystemParams, variant: Variant) -> Result<InductiveSystem> {
    let stages: Vec<StageAlgebra> = (0..=params.stages).map(|n| stage(params, variant, n)).collect();
    let mut morphisms = Vec::with_capacity(params.stages);
    for n in 0..params.stages {
        let m = connecting(params, variant, &stages[n], &stages[n + 1])?;
        // unitality is checked, not assumed
        let image = m.apply(&stages[n].unit())?;
        if image != stages[n + 1].unit() {
            return Err(Error::InvalidParams(format!("the map A_{n} → A_{} is not unital", n + 1)));
        }
        morphisms.push(m);
    }
    Ok(InductiveSystem { variant, params: params.clone(), stages, morphisms })
}

impl InductiveSystem {
    pub fn last_stage(&self) -> usize {
        self.stages.len() - 1
    }

    /// Number of simple-ideal subsystems with at least one connecting map.
    pub fn ideal_count(&self) -> usize {
        self.last_stage().saturating_sub(1)
    }
}

pub fn stage_cu(sys: &InductiveSystem, n: usize) -> Result<CuObject> {
    sys.stages.get(n).map(StageAlgebra::cu_object).ok_or(Error::StageExhausted(n))
}

pub fn stage_cu_morphism(sys: &InductiveSystem, n: usize) -> Result<&BlockMorphism> {
    sys.morphisms.get(n).ok_or(Error::StageExhausted(n))
}

/// The subsystem of block i: stages i+1 … N with the diagonal maps φ^i.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IdealSubsystem {
    pub variant: Variant,
    pub index: usize,
    pub q: u64,
    pub rank_e: u64,
    /// (stage n, block i of A_n) for n = i+1 … N.
    pub blocks: Vec<(usize, FoldBlock)>,
    /// maps[k]: stage i+1+k → i+2+k.
    pub maps: Vec<CuMorphism>,
}

impl IdealSubsystem {
    pub fn first_stage(&self) -> usize {
        self.index + 1
    }

    /// Block indices of stage n outside the subsystem (the complement ideal).
    pub fn complement_blocks(&self, stage: &StageAlgebra) -> Vec<usize> {
        (0..stage.blocks.len()).filter(|&b| b != self.index).collect()
    }

    pub fn map_at(&self, n: usize) -> Option<&CuMorphism> {
        n.checked_sub(self.first_stage()).and_then(|k| self.maps.get(k))
    }
}

pub fn simple_ideal_subsystem(sys: &InductiveSystem, i: usize) -> Result<IdealSubsystem> {
    if i >= sys.ideal_count() {
        return Err(Error::Precondition(format!(
            "ideal {i} needs stages beyond {} (valid: i < {})",
            sys.last_stage(),
            sys.ideal_count()
        )));
    }
    let blocks: Vec<(usize, FoldBlock)> =
        (i + 1..=sys.last_stage()).map(|n| (n, sys.stages[n].blocks[i].clone())).collect();
    let maps: Vec<CuMorphism> = (i + 1..sys.last_stage())
        .map(|n| sys.morphisms[n].entry(i, i).cloned().expect("diagonal entry present"))
        .collect();
    Ok(IdealSubsystem {
        variant: sys.variant,
        index: i,
        q: sys.params.q(i),
        rank_e: sys.variant.rank_e(&sys.params, i),
        blocks,
        maps,
    })
}

/// (K₀, K₁) of the i-th simple ideal: a rank-one colimit over the induced
/// K₀ multipliers and the eventual image on Z/q_i of the induced K₁
/// multipliers. Each multiplier is checked against the closed formulas
/// q_i^{r_n+1} and rank e.
pub fn ideal_invariants(sys: &InductiveSystem, i: usize) -> Result<(GroupClass, GroupClass)> {
    let sub = simple_ideal_subsystem(sys, i)?;
    let q = sub.q;
    let mut k0_mults = Vec::new();
    let mut k1_mults = Vec::new();
    for (k, m) in sub.maps.iter().enumerate() {
        let n = sub.first_stage() + k;
        let k0 = m.induced_k0();
        let expected = BigUint::from(q).pow(sys.params.exponents[n] + 1);
        if k0 != expected {
            return Err(Error::UnsupportedSystem(format!("K₀ multiplier {k0} at stage {n}, expected {expected}")));
        }
        let k1 = m.induced_k1();
        if k1 != BigUint::from(sub.rank_e % q) {
            return Err(Error::UnsupportedSystem(format!("K₁ multiplier {k1} at stage {n}, expected {}", sub.rank_e)));
        }
        k0_mults.push(k0);
        k1_mults.push(k1);
    }
    let k0 = colim_rank_one(&k0_mults)?;
    let first = k1_mults.first().cloned().unwrap_or_else(BigUint::one);
    if k1_mults.iter().any(|m| *m != first) {
        return Err(Error::UnsupportedSystem("K₁ multipliers vary along the subsystem".into()));
    }
    let g = FgAbGroup::cyclic(q);
    let mult: i64 = first.try_into().map_err(|_| Error::UnsupportedSystem("K₁ multiplier too large".into()))?;
    let k1 = colim_finite(&g, &GroupMorphism::scalar(&g, mult))?;
    Ok((k0, GroupClass::Finite(k1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum RowSource {
    /// Computed from the built subsystem.
    Computed,
    /// Continued from the index rule fitted to the computed rows.
    Rule,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantRow {
    pub i: usize,
    pub k0: GroupClass,
    pub k1: GroupClass,
    pub source: RowSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InvariantTable {
    pub variant: Variant,
    pub rows: Vec<InvariantRow>,
    #[serde(skip)]
    pub k0_rule: Option<IndexRule>,
    #[serde(skip)]
    pub k1_rule: Option<IndexRule>,
    pub k0_rule_text: Option<String>,
    pub k1_rule_text: Option<String>,
}

/// The first rule among the candidates whose summands match every row.
fn fit_rule(rows: &[GroupClass], candidates: &[(RuleKind, i64)], primes: &[u64]) -> Option<IndexRule> {
    if rows.is_empty() {
        return None;
    }
    candidates.iter().find_map(|&(kind, offset)| {
        let rule = IndexRule::new(kind, offset, primes.to_vec()).ok()?;
        let fits = rows.iter().enumerate().all(|(i, c)| {
            rule.summand(i as i64 + offset)
                .map(|s| class_iso(c, &s).unwrap_or(false))
                .unwrap_or(false)
        });
        fits.then_some(rule)
    })
}

const K0_RULES: [(RuleKind, i64); 2] = [(RuleKind::LocalizedSemiprime, 0), (RuleKind::LocalizedSemiprime, 1)];
const K1_RULES: [(RuleKind, i64); 3] = [(RuleKind::CyclicPrime, 0), (RuleKind::CyclicPrime, -1), (RuleKind::CyclicPrime, 1)];

/// Rows i < ideal_count() computed from the system, continued up to
/// `through` (inclusive) by the index rules that fit the computed rows,
/// as far as the prime list reaches.
pub fn invariant_table(sys: &InductiveSystem, through: Option<usize>) -> Result<InvariantTable> {
    let mut rows = Vec::new();
    for i in 0..sys.ideal_count() {
        let (k0, k1) = ideal_invariants(sys, i)?;
        rows.push(InvariantRow { i, k0, k1, source: RowSource::Computed });
    }
    let primes = &sys.params.primes;
    let k0s: Vec<GroupClass> = rows.iter().map(|r| r.k0.clone()).collect();
    let k1s: Vec<GroupClass> = rows.iter().map(|r| r.k1.clone()).collect();
    let k0_rule = fit_rule(&k0s, &K0_RULES, primes);
    let k1_rule = fit_rule(&k1s, &K1_RULES, primes);
    if let (Some(last), Some(r0), Some(r1)) = (through, &k0_rule, &k1_rule) {
        for i in rows.len()..=last {
            let (Some(k0), Some(k1)) = (r0.summand(i as i64 + r0.offset), r1.summand(i as i64 + r1.offset)) else {
                break;
            };
            rows.push(InvariantRow { i, k0, k1, source: RowSource::Rule });
        }
    }
    if let Some(last) = through {
        rows.truncate(last + 1);
    }
    Ok(InvariantTable {
        variant: sys.variant,
        rows,
        k0_rule_text: k0_rule.as_ref().map(IndexRule::describe),
        k1_rule_text: k1_rule.as_ref().map(IndexRule::describe),
        k0_rule,
        k1_rule,
    })
}

/// K₀ and K₁ of the limit algebra: the sum over the simple ideals, carried
/// by the fitted index rules, with the quotient ℂ contributing Z to K₀.
/// Without a fitting rule the computed rows are summed as they are.
pub fn algebra_k_theory(sys: &InductiveSystem) -> Result<(GroupClass, GroupClass)> {
    let table = invariant_table(sys, None)?;
    let sum = |rule: &Option<IndexRule>, pick: fn(&InvariantRow) -> GroupClass| match rule {
        Some(r) => GroupClass::rule_sum(r.clone(), Vec::new()),
        None => GroupClass::sum(table.rows.iter().map(pick).collect()),
    };
    let ideal_k0 = sum(&table.k0_rule, |r| r.k0.clone());
    let ideal_k1 = sum(&table.k1_rule, |r| r.k1.clone());
    Ok(six_term_assemble(&ideal_k0, &ideal_k1))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimplicityWitness {
    /// Stage whose outgoing node evaluation sees the support.
    pub m: usize,
    pub point: String,
    /// Stage at which the image is full.
    pub full_at: usize,
}

/// Pushes g (a member of block i at stage n) along the subsystem until some
/// node k/q_i^{r_m} lies in the support of its image at stage m. The node
/// evaluations of the next map then make the image full.
pub fn simplicity_witness(sys: &InductiveSystem, i: usize, g: &StepFn, n: usize) -> Result<SimplicityWitness> {
    let sub = simple_ideal_subsystem(sys, i)?;
    if n < sub.first_stage() || n > sys.last_stage() {
        return Err(Error::Precondition(format!("block {i} does not exist at stage {n}")));
    }
    if g.is_zero() {
        return Err(Error::Precondition("the zero element generates the zero ideal".into()));
    }
    let obj = sys.stages[n].blocks[i].cu_object();
    if !crate::cusemi::member(&obj, g) {
        return Err(Error::DomainMismatch(format!("{g} is not a member of {}", obj.label())));
    }
    let q = BigUint::from(sub.q);
    let mut current = g.clone();
    let mut m = n;
    loop {
        let Some(&r) = sys.params.exponents.get(m) else {
            return Err(Error::StageExhausted(m));
        };
        if let Some(point) = node_in_support(&current, &q.pow(r)) {
            return Ok(SimplicityWitness { m, point: point.to_string(), full_at: m + 1 });
        }
        let Some(map) = sub.map_at(m) else {
            return Err(Error::StageExhausted(m));
        };
        current = map.apply(&current)?;
        m += 1;
    }
}

/// Some k/den (1 ≤ k < den) inside an open interval where f is positive.
fn node_in_support(f: &StepFn, den: &BigUint) -> Option<Rational> {
    let d = Rational::from_integer(den.clone().into());
    let mut lo = Rational::zero();
    let bps = f.breakpoints();
    for (idx, v) in f.intervals().iter().enumerate() {
        let hi = bps.get(idx).cloned().unwrap_or_else(Rational::one);
        if !v.is_zero() {
            let k = (&lo * &d).floor() + Rational::one();
            let x = &k / &d;
            if x < hi && k >= Rational::one() && k < d {
                return Some(x);
            }
        }
        lo = hi;
    }
    None
}

/// A printable inventory of a built system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SystemSummary {
    pub variant: Variant,
    pub stages: Vec<StageSummary>,
    pub morphisms: Vec<MorphismSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StageSummary {
    pub n: usize,
    pub cu: String,
    pub blocks: Vec<FoldBlock>,
    pub interval_block: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MorphismSummary {
    pub from: usize,
    pub entries: Vec<EntrySummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EntrySummary {
    pub row: usize,
    pub col: usize,
    pub terms: String,
    pub k0: String,
    pub k1: String,
}

pub fn summarize(sys: &InductiveSystem) -> SystemSummary {
    let stages = sys
        .stages
        .iter()
        .map(|s| StageSummary { n: s.n, cu: s.cu_object().label(), blocks: s.blocks.clone(), interval_block: true })
        .collect();
    let morphisms = sys
        .morphisms
        .iter()
        .enumerate()
        .map(|(from, m)| {
            let mut entries = Vec::new();
            for (row, r) in m.entries.iter().enumerate() {
                for (col, e) in r.iter().enumerate() {
                    if let Some(e) = e {
                        entries.push(EntrySummary {
                            row,
                            col,
                            terms: e.to_string(),
                            k0: e.induced_k0().to_string(),
                            k1: e.induced_k1().to_string(),
                        });
                    }
                }
            }
            MorphismSummary { from, entries }
        })
        .collect();
    SystemSummary { variant: sys.variant, stages, morphisms }
}
