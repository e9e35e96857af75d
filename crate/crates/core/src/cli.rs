//! Batch driver. Exit codes: 0 pass, 1 negative result, 2 configuration
//! error, 3 undecidable comparison, 4 resource limit.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::abgroups::{class_iso, GroupClass};
use crate::cumorph::{intertwining_check, CheckMode, IntertwiningReport, Limits};
use crate::cusemi::{enumerate_lambda, CuObject};
use crate::error::{Error, Result};
use crate::report::{input_hash, render_svg, render_text, to_json, write_atomic, Report, RunConfig, SCHEMA};
use crate::stepfn::StepFn;
use crate::systems::{
    algebra_k_theory, build_system, build_system_relaxed, invariant_table, summarize, InductiveSystem, InvariantTable,
    SystemParams, SystemSummary, Variant,
};
use crate::unitary::{
    axiom_check, grothendieck_compacts, ideal_generated, obstruction_match, shipped_models, Axiom, AxiomVerdict,
    FiniteModel, HStar, IdealFormula, MatchReport,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_UNDECIDABLE: i32 = 3;
pub const EXIT_RESOURCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "cuntz-lab", version, about = "Cuntz semigroup and K-theory checks for the systems A and B")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Svg,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Text => "text",
            Format::Svg => "svg",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    A,
    B,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pair {
    Ab,
    Ba,
    Aa,
    Bb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Exhaustive,
    Criterion,
}

#[derive(Debug, Args)]
struct Output {
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Debug, Args)]
struct Config {
    /// Params file for A (and for B unless --config-b is given).
    /// Defaults to the standard parameters.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the systems and print their stages and connecting maps.
    Build {
        #[command(flatten)]
        config: Config,
        #[arg(long, value_enum, default_value = "both")]
        variant: Which,
        /// Also enumerate Λ at this level for every folding block of the last stage.
        #[arg(long)]
        dump_lambda: Option<u32>,
        #[arg(long, default_value_t = Limits::default().lambda_ceiling)]
        lambda_ceiling: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Tabulate K-theory of the simple ideals and compare the algebras.
    KTheory {
        #[command(flatten)]
        config: Config,
        #[arg(long)]
        config_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        variant: Which,
        #[command(flatten)]
        output: Output,
    },
    /// Check the hypotheses of the approximate intertwining of A and B.
    Intertwine {
        #[command(flatten)]
        config: Config,
        #[arg(long)]
        config_b: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "exhaustive")]
        mode: Mode,
        #[arg(long, default_value_t = 2)]
        n_max: usize,
        #[arg(long, default_value_t = Limits::default().lambda_ceiling)]
        lambda_ceiling: u64,
        #[arg(long, default_value_t = Limits::default().pair_ceiling)]
        pair_ceiling: u64,
        /// Build without the r₀ ≥ 2 requirement and report what fails.
        #[arg(long)]
        relaxed: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Look for a bijection of simple ideals preserving (K₀, K₁).
    Obstruct {
        #[command(flatten)]
        config: Config,
        #[arg(long)]
        config_b: Option<PathBuf>,
        /// Compare rows i ≤ n-max.
        #[arg(long, default_value_t = 3)]
        n_max: usize,
        #[arg(long, value_enum, default_value = "ab")]
        pair: Pair,
        #[command(flatten)]
        output: Output,
    },
    /// Check PD, PC, PWC, PCC and O0–O4 on a model file, or on the shipped models.
    Axioms {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Draw a step function given as JSON.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Undecidable(_) => EXIT_UNDECIDABLE,
        Error::ResourceLimit(_) => EXIT_RESOURCE,
        _ => EXIT_CONFIG,
    }
}

struct Loaded {
    params: SystemParams,
    raw: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn load_params(path: Option<&Path>) -> Result<Loaded> {
    match path {
        None => Ok(Loaded { params: SystemParams::standard(), raw: Vec::new() }),
        Some(p) => {
            let raw = read(p)?;
            let text = String::from_utf8(raw.clone()).map_err(|e| Error::Parse(e.to_string()))?;
            Ok(Loaded { params: SystemParams::from_json(&text)?, raw })
        }
    }
}

fn params_value(p: &SystemParams) -> serde_json::Value {
    serde_json::to_value(p.to_file()).expect("params serialize")
}

fn base_config(command: &str, output: &Output) -> RunConfig {
    RunConfig {
        command: command.into(),
        config_path: None,
        config_b_path: None,
        params: None,
        params_b: None,
        mode: None,
        n_max: None,
        lambda_ceiling: None,
        pair_ceiling: None,
        extra: Vec::new(),
        input_path: None,
        out_path: output.out.as_ref().map(|p| p.display().to_string()),
        format: output.format.name().into(),
    }
}

fn path_string(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

/// Writes the report (or `text` for the text format) and returns `code`.
fn emit<T: Serialize>(config: RunConfig, inputs: &[&[u8]], code: i32, result: T, text: String, output: &Output) -> i32 {
    let hash = input_hash(&config, inputs);
    let body = match output.format {
        Format::Json => {
            let report = Report { schema: SCHEMA, config, input_hash: hash, exit_code: code, result };
            match to_json(&report) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_CONFIG;
                }
            }
        }
        _ => format!("{text}schema: {SCHEMA}\ninput hash: {hash}\nexit code: {code}\n"),
    };
    match &output.out {
        Some(path) => {
            if let Err(e) = write_atomic(path, body.as_bytes()) {
                eprintln!("error: cannot write {}: {e}", path.display());
                return EXIT_CONFIG;
            }
        }
        None => print!("{body}"),
    }
    code
}

fn variants(which: Which) -> Vec<Variant> {
    match which {
        Which::A => vec![Variant::A],
        Which::B => vec![Variant::B],
        Which::Both => vec![Variant::A, Variant::B],
    }
}

pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Build { config, variant, dump_lambda, lambda_ceiling, output } => {
            cmd_build(config, variant, dump_lambda, lambda_ceiling, output)
        }
        Command::KTheory { config, config_b, variant, output } => cmd_ktheory(config, config_b, variant, output),
        Command::Intertwine { config, config_b, mode, n_max, lambda_ceiling, pair_ceiling, relaxed, output } => {
            let limits = Limits { lambda_ceiling, pair_ceiling };
            cmd_intertwine(config, config_b, mode, n_max, limits, relaxed, output)
        }
        Command::Obstruct { config, config_b, n_max, pair, output } => cmd_obstruct(config, config_b, n_max, pair, output),
        Command::Axioms { model, output } => cmd_axioms(model, output),
        Command::Render { input, output } => cmd_render(input, output),
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct LambdaDump {
    block: usize,
    cu: String,
    level: u32,
    elements: Vec<StepFn>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct BuildResult {
    systems: Vec<SystemSummary>,
    lambda: Vec<LambdaDump>,
}

fn cmd_build(config: Config, which: Which, dump: Option<u32>, ceiling: u64, output: Output) -> Result<i32> {
    let loaded = load_params(config.config.as_deref())?;
    let mut rc = base_config("build", &output);
    rc.config_path = path_string(&config.config);
    rc.params = Some(params_value(&loaded.params));
    rc.extra.push(("variant".into(), format!("{which:?}").to_lowercase()));
    if let Some(l) = dump {
        rc.extra.push(("dumpLambda".into(), l.to_string()));
        rc.lambda_ceiling = Some(ceiling);
    }
    let systems: Vec<InductiveSystem> =
        variants(which).into_iter().map(|v| build_system(&loaded.params, v)).collect::<Result<_>>()?;
    let mut lambda = Vec::new();
    if let Some(level) = dump {
        let sys = &systems[0];
        let last = &sys.stages[sys.last_stage()];
        let components = last.cu_object().components().into_iter().cloned().collect::<Vec<_>>();
        for (block, obj) in components.iter().enumerate().filter(|(_, o)| matches!(o, CuObject::FoldingCu { .. })) {
            let elements = enumerate_lambda(obj, level, ceiling as u128)?;
            lambda.push(LambdaDump { block, cu: obj.label(), level, elements });
        }
    }
    let summaries: Vec<SystemSummary> = systems.iter().map(summarize).collect();
    let mut text = String::new();
    for s in &summaries {
        let _ = writeln!(text, "system {:?}: {} stages", s.variant, s.stages.len());
        for st in &s.stages {
            let mut blocks: Vec<String> =
                st.blocks.iter().map(|b| format!("I^{}_{{{},{}}}", b.level, b.q, b.rank_e)).collect();
            blocks.push("C[0,1]".into());
            let _ = writeln!(text, "  {:?}_{}: {}  Cu = {}", s.variant, st.n, blocks.join(" ⊕ "), st.cu);
        }
        for m in &s.morphisms {
            let _ = writeln!(text, "  map {} → {}: {} entries", m.from, m.from + 1, m.entries.len());
        }
    }
    for d in &lambda {
        let _ = writeln!(text, "Λ_{} of block {} ({}): {} elements", d.level, d.block, d.cu, d.elements.len());
    }
    let result = BuildResult { systems: summaries, lambda };
    Ok(emit(rc, &[&loaded.raw], EXIT_PASS, result, text, &output))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct SystemK {
    table: InvariantTable,
    k0: GroupClass,
    k1: GroupClass,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct KTheoryResult {
    systems: Vec<SystemK>,
    k0_verdict: Option<String>,
    k1_verdict: Option<String>,
    warnings: Vec<String>,
}

fn verdict(a: &GroupClass, b: &GroupClass, warnings: &mut Vec<String>, which: &str) -> String {
    match class_iso(a, b) {
        Ok(true) => "isomorphic".into(),
        Ok(false) => "not isomorphic".into(),
        Err(e) => {
            warnings.push(format!("{which}: {e}"));
            "undecidable".into()
        }
    }
}

fn cmd_ktheory(config: Config, config_b: Option<PathBuf>, which: Which, output: Output) -> Result<i32> {
    let la = load_params(config.config.as_deref())?;
    let lb = match &config_b {
        Some(p) => load_params(Some(p))?,
        None => Loaded { params: la.params.clone(), raw: Vec::new() },
    };
    let mut rc = base_config("k-theory", &output);
    rc.config_path = path_string(&config.config);
    rc.config_b_path = path_string(&config_b);
    rc.params = Some(params_value(&la.params));
    rc.params_b = config_b.as_ref().map(|_| params_value(&lb.params));
    rc.extra.push(("variant".into(), format!("{which:?}").to_lowercase()));
    let mut systems = Vec::new();
    for v in variants(which) {
        let params = if v == Variant::B { &lb.params } else { &la.params };
        let sys = build_system(params, v)?;
        let table = invariant_table(&sys, None)?;
        let (k0, k1) = algebra_k_theory(&sys)?;
        systems.push(SystemK { table, k0, k1 });
    }
    let mut warnings = Vec::new();
    let (mut k0_verdict, mut k1_verdict) = (None, None);
    if let [a, b] = systems.as_slice() {
        k0_verdict = Some(verdict(&a.k0, &b.k0, &mut warnings, "K₀"));
        k1_verdict = Some(verdict(&a.k1, &b.k1, &mut warnings, "K₁"));
    }
    let code = match (&k0_verdict, &k1_verdict) {
        _ if !warnings.is_empty() => EXIT_UNDECIDABLE,
        (Some(a), Some(b)) if a == "isomorphic" && b == "isomorphic" => EXIT_PASS,
        (None, None) => EXIT_PASS,
        _ => EXIT_NEGATIVE,
    };
    let mut text = String::new();
    for s in &systems {
        let _ = writeln!(text, "system {:?}", s.table.variant);
        for r in &s.table.rows {
            let _ = writeln!(text, "  ideal {}: K₀ = {}  K₁ = {}", r.i, r.k0, r.k1);
        }
        let _ = writeln!(text, "  K₀ = {}  K₁ = {}", s.k0, s.k1);
    }
    if let (Some(a), Some(b)) = (&k0_verdict, &k1_verdict) {
        let _ = writeln!(text, "K₀: {a}\nK₁: {b}");
    }
    for w in &warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let result = KTheoryResult { systems, k0_verdict, k1_verdict, warnings };
    Ok(emit(rc, &[&la.raw, &lb.raw], code, result, text, &output))
}

fn cmd_intertwine(
    config: Config,
    config_b: Option<PathBuf>,
    mode: Mode,
    n_max: usize,
    limits: Limits,
    relaxed: bool,
    output: Output,
) -> Result<i32> {
    let la = load_params(config.config.as_deref())?;
    let lb = match &config_b {
        Some(p) => load_params(Some(p))?,
        None => Loaded { params: la.params.clone(), raw: Vec::new() },
    };
    let check_mode = match mode {
        Mode::Exhaustive => CheckMode::Exhaustive,
        Mode::Criterion => CheckMode::Criterion,
    };
    let mut rc = base_config("intertwine", &output);
    rc.config_path = path_string(&config.config);
    rc.config_b_path = path_string(&config_b);
    rc.params = Some(params_value(&la.params));
    rc.params_b = config_b.as_ref().map(|_| params_value(&lb.params));
    rc.mode = Some(format!("{mode:?}").to_lowercase());
    rc.n_max = Some(n_max);
    rc.lambda_ceiling = Some(limits.lambda_ceiling);
    rc.pair_ceiling = Some(limits.pair_ceiling);
    if relaxed {
        rc.extra.push(("relaxed".into(), "true".into()));
    }
    let build = if relaxed { build_system_relaxed } else { build_system };
    let a = build(&la.params, Variant::A)?;
    let b = build(&lb.params, Variant::B)?;
    if n_max >= a.params.stages {
        return Err(Error::InvalidParams(format!(
            "n-max {n_max} needs {} stages, the config has {}",
            n_max + 1,
            a.params.stages
        )));
    }
    let report: IntertwiningReport = intertwining_check(&a, &b, None, n_max, check_mode, &limits);
    let code = if report.certified {
        EXIT_PASS
    } else if report.resource_limited {
        EXIT_RESOURCE
    } else {
        EXIT_NEGATIVE
    };
    let mut text = String::new();
    for st in &report.stages {
        let _ = writeln!(text, "stage {} (j = {}): dd ≤ {}  {}", st.stage, st.j, st.stage_bound, pass(st.passes));
        for b in &st.blocks {
            let _ = writeln!(text, "  block {} (q = {}): bound {}  {}", b.block, b.q, b.bound, pass(b.passes));
            for n in &b.notes {
                let _ = writeln!(text, "    {n}");
            }
        }
    }
    for f in &report.condition_failures {
        let _ = writeln!(text, "condition failed: {f}");
    }
    let _ = writeln!(text, "{}", report.verdict);
    Ok(emit(rc, &[&la.raw, &lb.raw], code, report, text, &output))
}

fn pass(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAILS"
    }
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct ObstructResult {
    table_a: InvariantTable,
    table_b: InvariantTable,
    report: MatchReport,
    verdict: String,
}

fn cmd_obstruct(config: Config, config_b: Option<PathBuf>, n_max: usize, pair: Pair, output: Output) -> Result<i32> {
    let la = load_params(config.config.as_deref())?;
    let lb = match &config_b {
        Some(p) => load_params(Some(p))?,
        None => Loaded { params: la.params.clone(), raw: Vec::new() },
    };
    let mut rc = base_config("obstruct", &output);
    rc.config_path = path_string(&config.config);
    rc.config_b_path = path_string(&config_b);
    rc.params = Some(params_value(&la.params));
    rc.params_b = config_b.as_ref().map(|_| params_value(&lb.params));
    rc.n_max = Some(n_max);
    rc.extra.push(("pair".into(), format!("{pair:?}").to_lowercase()));
    let (va, vb) = match pair {
        Pair::Ab => (Variant::A, Variant::B),
        Pair::Ba => (Variant::B, Variant::A),
        Pair::Aa => (Variant::A, Variant::A),
        Pair::Bb => (Variant::B, Variant::B),
    };
    let ta = invariant_table(&build_system(&la.params, va)?, Some(n_max))?;
    let tb = invariant_table(&build_system(&lb.params, vb)?, Some(n_max))?;
    let report = obstruction_match(&ta, &tb);
    let (code, verdict) = if report.undecidable {
        (EXIT_UNDECIDABLE, "undecidable rows; see warnings".to_string())
    } else if report.feasible {
        (EXIT_NEGATIVE, "a matching exists; no obstruction".to_string())
    } else {
        (EXIT_PASS, format!("no bijection of simple ideals preserves (K₀, K₁) for i ≤ {n_max}: Cu₁ differs"))
    };
    let mut text = String::new();
    for r in &report.rows {
        let reason = r.reason.as_ref().map_or(String::new(), |m| {
            let show = |j: Option<usize>| j.map_or("-".into(), |j| j.to_string());
            format!("  K₀ forces j = {}, K₁ forces j = {}", show(m.k0_forced_j), show(m.k1_forced_j))
        });
        let _ = writeln!(text, "row {}: candidates {:?}{reason}", r.i, r.candidates);
    }
    for w in &report.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    let _ = writeln!(text, "{}\n{verdict}", report.note);
    let result = ObstructResult { table_a: ta, table_b: tb, report, verdict };
    Ok(emit(rc, &[&la.raw, &lb.raw], code, result, text, &output))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct ModelResult {
    name: String,
    synthetic: bool,
    verdicts: Vec<AxiomVerdict>,
    /// The ideal generated by 0 under each applicable formula.
    zero_ideal: Vec<String>,
    hstar: Option<HStar>,
    hstar_refused: Option<String>,
}

fn check_model(m: &FiniteModel) -> ModelResult {
    let verdicts: Vec<AxiomVerdict> = Axiom::ALL.iter().map(|&a| axiom_check(m, a)).collect();
    let holds = |a: Axiom| verdicts.iter().any(|v| v.axiom == a && v.holds);
    let formula = if holds(Axiom::PD) && holds(Axiom::PC) { IdealFormula::Erratum } else { IdealFormula::Positive };
    let zero_ideal = ideal_generated(m, m.zero, formula)
        .map(|v| v.iter().map(|&i| m.elements[i].clone()).collect())
        .unwrap_or_default();
    let (hstar, hstar_refused) = match grothendieck_compacts(m) {
        Ok(h) => (Some(h), None),
        Err(e) => (None, Some(e.to_string())),
    };
    ModelResult { name: m.name.clone(), synthetic: m.synthetic, verdicts, zero_ideal, hstar, hstar_refused }
}

fn cmd_axioms(model: Option<PathBuf>, output: Output) -> Result<i32> {
    let mut rc = base_config("axioms", &output);
    rc.input_path = path_string(&model);
    let (models, raw) = match &model {
        Some(p) => {
            let raw = read(p)?;
            let text = String::from_utf8(raw.clone()).map_err(|e| Error::Parse(e.to_string()))?;
            (vec![FiniteModel::from_json(&text)?], raw)
        }
        None => (shipped_models(), Vec::new()),
    };
    let results: Vec<ModelResult> = models.iter().map(check_model).collect();
    let mut text = String::new();
    for r in &results {
        let tag = if r.synthetic { " (synthetic)" } else { "" };
        let _ = writeln!(text, "model {}{tag}", r.name);
        for v in &r.verdicts {
            let detail = v.witness.as_deref().unwrap_or("");
            let _ = writeln!(text, "  {:<4} {} ({} instances) {detail}", v.axiom.to_string(), pass(v.holds), v.instances);
        }
        let _ = writeln!(text, "  I₀ = {{{}}}", r.zero_ideal.join(", "));
        if let Some(h) = &r.hstar {
            let _ = writeln!(text, "  H_* = {}", h.group);
        }
        if let Some(e) = &r.hstar_refused {
            let _ = writeln!(text, "  H_* refused: {e}");
        }
    }
    Ok(emit(rc, &[&raw], EXIT_PASS, results, text, &output))
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct RenderResult {
    function: StepFn,
    text: String,
}

fn cmd_render(input: PathBuf, output: Output) -> Result<i32> {
    let raw = read(&input)?;
    let f: StepFn = serde_json::from_slice(&raw).map_err(|e| Error::Parse(e.to_string()))?;
    let body = match output.format {
        Format::Svg => render_svg(&f),
        Format::Text => render_text(&f),
        Format::Json => {
            let mut rc = base_config("render", &output);
            rc.input_path = Some(input.display().to_string());
            let text = render_text(&f);
            return Ok(emit(rc, &[&raw], EXIT_PASS, RenderResult { function: f, text }, String::new(), &output));
        }
    };
    match &output.out {
        Some(p) => write_atomic(p, body.as_bytes()).map_err(|e| Error::Parse(format!("{}: {e}", p.display())))?,
        None => print!("{body}"),
    }
    Ok(EXIT_PASS)
}
