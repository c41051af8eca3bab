//! Scenario files: TOML with a `schema_version` key and one table per block.
//!
//! ```toml
//! schema_version = 1
//! name = "torus_exp"
//! operations = ["verify_structural", "verify_inequalities"]
//!
//! [fiber]
//! kind = "torus"
//! n = 2
//! grids = [32, 64, 128]
//!
//! [warping]
//! kind = "exp"
//!
//! [surface]
//! expr = "0.1*sin(x)*cos(y)"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use toml::Spanned;

use grw_core::expr::{self, Expr};
use grw_core::fiber::{FiberKind, PatchParams};
use grw_core::solver::TheoremTag;
use grw_core::verify::GSpec;
use grw_core::warping::{make_tabulated_warping, make_warping, Interval, WarpingFunction, WarpingKind};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Operation {
    VerifyStructural,
    VerifyComposite,
    VerifyTheta,
    VerifyInequalities,
    CheckConditions,
    CheckOmori,
    CheckParabolicity,
    Solve,
    Uniqueness,
}

impl Operation {
    pub fn is_solver(self) -> bool {
        matches!(self, Self::Solve | Self::Uniqueness)
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "verify_structural" => Self::VerifyStructural,
            "verify_composite" => Self::VerifyComposite,
            "verify_theta" => Self::VerifyTheta,
            "verify_inequalities" => Self::VerifyInequalities,
            "check_conditions" => Self::CheckConditions,
            "check_omori" => Self::CheckOmori,
            "check_parabolicity" => Self::CheckParabolicity,
            "solve" => Self::Solve,
            "uniqueness" => Self::Uniqueness,
            other => return Err(format!("unknown operation '{other}'")),
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "schema_version")]
    _schema_version: i64,
    name: Spanned<String>,
    operations: Vec<Spanned<String>>,
    out: Option<String>,
    fiber: RawFiber,
    warping: Option<RawWarping>,
    surface: Option<RawSurface>,
    conditions: Option<RawConditions>,
    solve: Option<RawSolve>,
    uniqueness: Option<RawUniqueness>,
    omori: Option<RawOmori>,
    parabolicity: Option<RawParabolicity>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFiber {
    kind: Spanned<String>,
    n: Option<usize>,
    grids: Vec<usize>,
    theta0: Option<f64>,
    r_max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWarping {
    kind: Spanned<String>,
    #[serde(default)]
    params: Vec<f64>,
    interval: Option<[f64; 2]>,
    table: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSurface {
    expr: Option<Spanned<String>>,
    csv: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConditions {
    slab: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawTarget {
    Value(f64),
    Rule(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    k: usize,
    t0: f64,
    target: Option<RawTarget>,
    seed: Option<u64>,
    amplitude: Option<f64>,
    tol_residual: Option<f64>,
    max_iter: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUniqueness {
    k: usize,
    t0: f64,
    slab: [f64; 2],
    theorem: Spanned<String>,
    seeds: Vec<u64>,
    target: Option<RawTarget>,
    amplitude: Option<f64>,
    negative_control: Option<bool>,
    tol_residual: Option<f64>,
    max_iter: Option<usize>,
    slice_tol: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOmori {
    c: f64,
    r_max: f64,
    g: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParabolicity {
    profile: Spanned<String>,
    exponent: Option<f64>,
    t_max: Option<f64>,
}

/// `None` is the slice value at `t0`.
pub type Target = Option<f64>;

#[derive(Debug, Clone)]
pub struct FiberBlock {
    pub kind: FiberKind,
    pub n: usize,
    pub grids: Vec<usize>,
    pub patch: PatchParams,
}

#[derive(Debug, Clone)]
pub enum SurfaceSource {
    Expression(Expr),
    /// Heights in grid order, one number per record field.
    Values(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SolveBlock {
    pub k: usize,
    pub t0: f64,
    pub target: Target,
    pub seed: Option<u64>,
    pub amplitude: f64,
    pub tol_residual: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone)]
pub struct UniquenessBlock {
    pub k: usize,
    pub t0: f64,
    pub slab: Interval,
    pub theorem: TheoremTag,
    pub seeds: Vec<u64>,
    pub target: Target,
    pub amplitude: f64,
    pub negative_control: bool,
    pub tol_residual: f64,
    pub max_iter: usize,
    pub slice_tol: f64,
}

#[derive(Debug, Clone)]
pub struct OmoriBlock {
    pub c: f64,
    pub r_max: f64,
    pub g: GSpec,
}

#[derive(Debug, Clone, Copy)]
pub enum ProfileKind {
    Plane,
    Hyperbolic,
    Power(f64),
}

#[derive(Debug, Clone)]
pub struct ParabolicityBlock {
    pub profile: ProfileKind,
    pub t_max: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub operations: Vec<Operation>,
    pub out: Option<PathBuf>,
    pub fiber: FiberBlock,
    pub warping: Option<WarpingFunction>,
    pub surface: Option<SurfaceSource>,
    pub slab: Option<Interval>,
    pub solve: Option<SolveBlock>,
    pub uniqueness: Option<UniquenessBlock>,
    pub omori: Option<OmoriBlock>,
    pub parabolicity: Option<ParabolicityBlock>,
}

/// 1-based line and column of a byte offset.
pub fn line_column(src: &str, offset: usize) -> (usize, usize) {
    let before = &src[..offset.min(src.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

struct Ctx<'a> {
    src: &'a str,
    base: &'a Path,
}

impl Ctx<'_> {
    fn at<T>(&self, span: std::ops::Range<usize>, message: impl Into<String>) -> Result<T> {
        let (line, column) = line_column(self.src, span.start);
        Err(CliError::Parse { line, column, message: message.into() })
    }

    fn parse<T: FromStr>(&self, s: &Spanned<String>) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match s.get_ref().parse::<T>() {
            Ok(v) => Ok(v),
            Err(e) => self.at(s.span(), e.to_string()),
        }
    }

    fn expression(&self, s: &Spanned<String>) -> Result<Expr> {
        match expr::parse(s.get_ref()) {
            Ok(e) => Ok(e),
            Err(grw_core::Error::Expression { column, message }) => {
                // the span includes the opening quote
                let (line, col) = line_column(self.src, s.span().start);
                Err(CliError::Parse { line, column: col + column, message })
            }
            Err(e) => self.at(s.span(), e.to_string()),
        }
    }

    fn path(&self, p: &str) -> PathBuf {
        self.base.join(p)
    }
}

fn interval(pair: [f64; 2]) -> Result<Interval> {
    Interval::new(pair[0], pair[1]).map_err(|e| CliError::Invalid(e.to_string()))
}

fn target(t: Option<RawTarget>) -> Result<Target> {
    match t {
        None => Ok(None),
        Some(RawTarget::Value(v)) => Ok(Some(v)),
        Some(RawTarget::Rule(r)) if r == "slice" => Ok(None),
        Some(RawTarget::Rule(r)) => Err(CliError::Invalid(format!("target must be \"slice\" or a number, got '{r}'"))),
    }
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::io(path, e.to_string()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::io(path, e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(v) => rows.push(v),
            // a header row is allowed
            Err(_) if i == 0 => {}
            Err(e) => {
                return Err(CliError::Parse { line: i + 1, column: 1, message: format!("{}: {e}", path.display()) })
            }
        }
    }
    Ok(rows)
}

/// Two-column `t, rho` table.
pub fn read_warping_table(path: &Path) -> Result<WarpingFunction> {
    let rows = read_numbers(path)?;
    if let Some(i) = rows.iter().position(|r| r.len() != 2) {
        return Err(CliError::Parse { line: i + 1, column: 1, message: "expected two columns t, rho".into() });
    }
    let (ts, rhos): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|r| (r[0], r[1])).unzip();
    make_tabulated_warping(ts, rhos).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn convert(raw: RawScenario, ctx: &Ctx) -> Result<Scenario> {
    if raw.operations.is_empty() {
        return Err(CliError::Invalid("operations list is empty".into()));
    }
    let name = raw.name.get_ref().clone();
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return ctx.at(raw.name.span(), "name must be non-empty and use only [A-Za-z0-9_-]");
    }
    let operations = raw.operations.iter().map(|o| ctx.parse::<Operation>(o)).collect::<Result<Vec<_>>>()?;

    let kind: FiberKind = ctx.parse(&raw.fiber.kind)?;
    let defaults = PatchParams::default();
    let fiber = FiberBlock {
        kind,
        n: raw.fiber.n.unwrap_or(2),
        grids: raw.fiber.grids,
        patch: PatchParams {
            theta0: raw.fiber.theta0.unwrap_or(defaults.theta0),
            r_max: raw.fiber.r_max.unwrap_or(defaults.r_max),
        },
    };
    if fiber.grids.is_empty() {
        return Err(CliError::Invalid("fiber.grids is empty".into()));
    }

    let warping = match raw.warping {
        None => None,
        Some(w) => {
            let kind: WarpingKind = ctx.parse(&w.kind)?;
            Some(if kind == WarpingKind::Tabulated {
                let Some(table) = w.table else {
                    return ctx.at(w.kind.span(), "tabulated warping needs `table = \"file.csv\"`");
                };
                read_warping_table(&ctx.path(&table))?
            } else {
                let iv = interval(w.interval.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]))?;
                make_warping(kind, &w.params, iv).map_err(|e| CliError::Invalid(format!("warping: {e}")))?
            })
        }
    };

    let surface = match raw.surface {
        None => None,
        Some(RawSurface { expr: Some(e), csv: None }) => Some(SurfaceSource::Expression(ctx.expression(&e)?)),
        Some(RawSurface { expr: None, csv: Some(p) }) => {
            Some(SurfaceSource::Values(read_numbers(&ctx.path(&p))?.into_iter().flatten().collect()))
        }
        Some(_) => return Err(CliError::Invalid("surface needs exactly one of `expr` or `csv`".into())),
    };

    let slab = raw.conditions.map(|c| interval(c.slab)).transpose()?;

    let solve = match raw.solve {
        None => None,
        Some(s) => Some(SolveBlock {
            k: s.k,
            t0: s.t0,
            target: target(s.target)?,
            seed: s.seed,
            amplitude: s.amplitude.unwrap_or(0.05),
            tol_residual: s.tol_residual.unwrap_or(1e-10),
            max_iter: s.max_iter.unwrap_or(200),
        }),
    };

    let uniqueness = match raw.uniqueness {
        None => None,
        Some(u) => Some(UniquenessBlock {
            k: u.k,
            t0: u.t0,
            slab: interval(u.slab)?,
            theorem: ctx.parse(&u.theorem)?,
            seeds: u.seeds,
            target: target(u.target)?,
            amplitude: u.amplitude.unwrap_or(0.05),
            negative_control: u.negative_control.unwrap_or(false),
            tol_residual: u.tol_residual.unwrap_or(1e-10),
            max_iter: u.max_iter.unwrap_or(200),
            slice_tol: u.slice_tol.unwrap_or(1e-6),
        }),
    };

    let omori = match raw.omori {
        None => None,
        Some(o) => {
            let g = match o.g.get_ref().as_str() {
                "quadratic_plus_one" => GSpec::QuadraticPlusOne,
                "quadratic_log" => GSpec::QuadraticLog,
                "exponential" => GSpec::Exponential,
                s => match s.strip_prefix("power:") {
                    Some(p) => match p.trim().parse::<f64>() {
                        Ok(p) => GSpec::Power(p),
                        Err(_) => return ctx.at(o.g.span(), format!("bad exponent in '{s}'")),
                    },
                    None => GSpec::Expression(ctx.expression(&o.g)?),
                },
            };
            Some(OmoriBlock { c: o.c, r_max: o.r_max, g })
        }
    };

    let parabolicity = match raw.parabolicity {
        None => None,
        Some(p) => {
            let profile = match (p.profile.get_ref().as_str(), p.exponent) {
                ("plane", _) => ProfileKind::Plane,
                ("hyperbolic", _) => ProfileKind::Hyperbolic,
                ("power", Some(a)) => ProfileKind::Power(a),
                ("power", None) => return ctx.at(p.profile.span(), "power profile needs `exponent`"),
                (other, _) => return ctx.at(p.profile.span(), format!("unknown profile '{other}'")),
            };
            Some(ParabolicityBlock { profile, t_max: p.t_max.unwrap_or(1e6) })
        }
    };

    Ok(Scenario {
        name,
        operations,
        out: raw.out.map(PathBuf::from),
        fiber,
        warping,
        surface,
        slab,
        solve,
        uniqueness,
        omori,
        parabolicity,
    })
}

/// Parse scenario text; relative paths inside resolve against `base`.
pub fn parse_scenario(src: &str, base: &Path) -> Result<Scenario> {
    let table: toml::Table = toml::from_str(src).map_err(|e| toml_error(src, &e))?;
    match table.get("schema_version") {
        Some(toml::Value::Integer(v)) if *v == SCHEMA_VERSION => {}
        Some(toml::Value::Integer(v)) => {
            return Err(CliError::SchemaVersionMismatch { found: *v, supported: SCHEMA_VERSION })
        }
        Some(_) => return Err(CliError::Invalid("schema_version must be an integer".into())),
        None => return Err(CliError::Invalid("missing schema_version".into())),
    }
    let raw: RawScenario = toml::from_str(src).map_err(|e| toml_error(src, &e))?;
    convert(raw, &Ctx { src, base })
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let src = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e.to_string()))?;
    parse_scenario(&src, path.parent().unwrap_or(Path::new(".")))
}

fn toml_error(src: &str, e: &toml::de::Error) -> CliError {
    let (line, column) = e.span().map_or((1, 1), |s| line_column(src, s.start));
    CliError::Parse { line, column, message: e.message().to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "flat"
operations = ["verify_structural"]

[fiber]
kind = "torus"
grids = [16]

[warping]
kind = "exp"

[surface]
expr = "0.2"
"#;

    #[test]
    fn minimal_scenario_parses() {
        let s = parse_scenario(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(s.operations, vec![Operation::VerifyStructural]);
        assert_eq!(s.fiber.n, 2);
        assert!(matches!(s.surface, Some(SurfaceSource::Expression(_))));
    }

    #[test]
    fn errors_carry_positions() {
        let bad = MINIMAL.replace("kind = \"torus\"", "kind = \"klein\"");
        match parse_scenario(&bad, Path::new(".")) {
            Err(CliError::Parse { line, column, .. }) => assert_eq!((line, column), (7, 8)),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("expr = \"0.2\"", "expr = \"0.2 * sin(\"");
        assert!(matches!(parse_scenario(&bad, Path::new(".")), Err(CliError::Parse { line: 14, .. })));
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 3");
        assert!(matches!(parse_scenario(&bad, Path::new(".")), Err(CliError::SchemaVersionMismatch { found: 3, .. })));
        let bad = MINIMAL.replace("grids = [16]", "grids = [16");
        assert!(matches!(parse_scenario(&bad, Path::new(".")), Err(CliError::Parse { line: 10, .. })));
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }
}
