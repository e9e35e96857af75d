//! Versioned JSON reports and step-function renderings.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_traits::ToPrimitive;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numbers::{ExtNat, Rational};
use crate::stepfn::StepFn;

pub const SCHEMA: &str = "cuntz-lab/1";

/// Everything a run depends on, echoed into its report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunConfig {
    pub command: String,
    pub config_path: Option<String>,
    pub config_b_path: Option<String>,
    /// The parsed parameters of each config, as they were used.
    pub params: Option<serde_json::Value>,
    pub params_b: Option<serde_json::Value>,
    pub mode: Option<String>,
    pub n_max: Option<usize>,
    pub lambda_ceiling: Option<u64>,
    pub pair_ceiling: Option<u64>,
    pub extra: Vec<(String, String)>,
    pub input_path: Option<String>,
    pub out_path: Option<String>,
    pub format: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report<T: Serialize> {
    pub schema: &'static str,
    pub config: RunConfig,
    /// SHA-256 over the config and the raw bytes of every input file.
    pub input_hash: String,
    pub exit_code: i32,
    pub result: T,
}

/// Hashes the canonical JSON of the config, then each input in order.
pub fn input_hash(config: &RunConfig, inputs: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    for bytes in inputs {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

fn finite_max(f: &StepFn) -> u64 {
    f.intervals()
        .iter()
        .chain(f.points())
        .filter_map(ExtNat::to_u64)
        .max()
        .unwrap_or(0)
}

fn label(v: &ExtNat) -> String {
    v.to_string()
}

/// A listing of the point and interval values followed by a coarse plot;
/// ∞ is drawn one row above the largest finite value.
pub fn render_text(f: &StepFn) -> String {
    let bps = f.breakpoints();
    let mut out = String::new();
    let mut xs: Vec<String> = vec!["0".into()];
    xs.extend(bps.iter().map(ToString::to_string));
    xs.push("1".into());
    for (i, x) in xs.iter().enumerate() {
        out.push_str(&format!("x = {x}: {}\n", label(&f.points()[i])));
        if i + 1 < xs.len() {
            out.push_str(&format!("({x}, {}): {}\n", xs[i + 1], label(&f.intervals()[i])));
        }
    }
    let top = finite_max(f);
    let has_inf = f.intervals().iter().chain(f.points()).any(|v| !v.is_finite());
    let rows = top.min(8) + u64::from(has_inf);
    const WIDTH: usize = 48;
    let height = |v: &ExtNat| -> u64 {
        match v.to_u64() {
            None => rows,
            Some(0) => 0,
            Some(x) if top <= 8 => x,
            Some(x) => (x * 8).div_ceil(top),
        }
    };
    let column_value = |c: usize| -> &ExtNat {
        let x = Rational::new((2 * c + 1).into(), (2 * WIDTH).into());
        f.eval(&x)
    };
    for row in (1..=rows).rev() {
        let tag = if has_inf && row == rows { "∞".to_string() } else { row.to_string() };
        let line: String = (0..WIDTH).map(|c| if height(column_value(c)) >= row { '#' } else { ' ' }).collect();
        out.push_str(&format!("{tag:>3} |{}\n", line.trim_end()));
    }
    out.push_str(&format!("    +{}\n", "-".repeat(WIDTH)));
    out
}

/// An SVG plot: segments for the interval values, filled dots for the
/// point values and open dots where an interval's limit is not attained.
pub fn render_svg(f: &StepFn) -> String {
    const W: f64 = 480.0;
    const H: f64 = 240.0;
    const PAD: f64 = 30.0;
    let top = finite_max(f).max(1);
    let has_inf = f.intervals().iter().chain(f.points()).any(|v| !v.is_finite());
    let levels = top as f64 + if has_inf { 1.0 } else { 0.0 };
    let y = |v: &ExtNat| -> f64 {
        let h = v.to_u64().map_or(levels, |x| x as f64);
        H - PAD - h / levels * (H - 2.0 * PAD)
    };
    let x = |r: &Rational| -> f64 { PAD + r.to_f64().unwrap_or(0.0) * (W - 2.0 * PAD) };
    let mut xs: Vec<Rational> = vec![Rational::from_integer(0.into())];
    xs.extend(f.breakpoints().iter().cloned());
    xs.push(Rational::from_integer(1.into()));
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    ));
    s.push_str(&format!(
        "  <line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#888\"/>\n",
        H - PAD,
        W - PAD
    ));
    if has_inf {
        s.push_str(&format!(
            "  <text x=\"4\" y=\"{:.2}\" font-size=\"12\">∞</text>\n",
            y(&ExtNat::Inf) + 4.0
        ));
    }
    for (i, v) in f.intervals().iter().enumerate() {
        let (a, b) = (x(&xs[i]), x(&xs[i + 1]));
        let yv = y(v);
        s.push_str(&format!(
            "  <line x1=\"{a:.2}\" y1=\"{yv:.2}\" x2=\"{b:.2}\" y2=\"{yv:.2}\" stroke=\"black\" stroke-width=\"2\"/>\n"
        ));
    }
    for (i, p) in f.points().iter().enumerate() {
        let px = x(&xs[i]);
        let neighbours = [i.checked_sub(1).map(|j| &f.intervals()[j]), f.intervals().get(i)];
        for v in neighbours.into_iter().flatten() {
            if v != p {
                s.push_str(&format!(
                    "  <circle cx=\"{px:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"white\" stroke=\"black\"/>\n",
                    y(v)
                ));
            }
        }
        s.push_str(&format!("  <circle cx=\"{px:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"black\"/>\n", y(p)));
    }
    s.push_str("</svg>\n");
    s
}
