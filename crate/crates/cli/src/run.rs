//! Operation dispatch and artifact collection.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use grw_core::fiber::{make_fiber, Fiber};
use grw_core::hypersurface::{build_graph, curvature_bundle, shape_operator};
use grw_core::solver::{
    perturbation, slice_target, solve_constant_hk, uniqueness_experiment, SolveOptions, UniquenessReport,
    UniquenessScenario,
};
use grw_core::verify::{
    check_omori, check_parabolicity, condition_reports, merge_refinement, verify_composite, verify_inequalities,
    verify_structural, verify_theta, GammaSpec, IdentityClass, IdentityReport, OmoriModel, Profile,
};
use grw_core::warping::{check_conditions, WarpingFunction};
use grw_core::{ambient_curvature, Error as CoreError};

use crate::config::{Operation, ProfileKind, Scenario, SurfaceSource, SCHEMA_VERSION};
use crate::error::{CliError, Result};
use crate::plot;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_FAIL: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verb {
    Verify,
    Solve,
    Check,
}

impl Verb {
    fn as_str(self) -> &'static str {
        match self {
            Self::Verify => "verify",
            Self::Solve => "solve",
            Self::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grids: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub strict: bool,
}

/// Files keyed by name, plus the assertion outcome.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub files: BTreeMap<String, Vec<u8>>,
    pub failures: Vec<String>,
    pub warnings: Vec<String>,
    /// One line per report for the terminal.
    pub log: Vec<String>,
}

impl Artifacts {
    fn json<T: Serialize>(&mut self, name: String, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serializable report");
        bytes.push(b'\n');
        self.files.insert(name, bytes);
    }

    fn text(&mut self, name: String, body: String) {
        self.files.insert(name, body.into_bytes());
    }

    pub fn exit_code(&self, strict: bool) -> i32 {
        if self.failures.is_empty() && (!strict || self.warnings.is_empty()) {
            EXIT_PASS
        } else {
            EXIT_FAIL
        }
    }
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

fn emit_identity(a: &mut Artifacts, scenario: &str, r: &IdentityReport, asserted: bool) {
    let stem = format!("{scenario}__{}", r.name());
    a.json(format!("{stem}.json"), r);
    let rows: Vec<Vec<String>> = r
        .grids
        .iter()
        .map(|g| {
            vec![
                g.shape.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("x"),
                format!("{:e}", g.spacing),
                format!("{:e}", g.max),
                format!("{:e}", g.l2),
                opt(g.min_slack),
            ]
        })
        .collect();
    if !rows.is_empty() {
        a.files.insert(format!("{stem}.csv"), csv_bytes(&["shape", "spacing", "max", "l2", "min_slack"], &rows));
    }
    if r.grids.len() >= 2 {
        let hs: Vec<f64> = r.grids.iter().map(|g| g.spacing).collect();
        let vs: Vec<f64> = r.grids.iter().map(|g| g.max).collect();
        a.text(format!("{stem}.svg"), plot::loglog(&r.name(), &hs, &vs, r.fitted_order));
    }
    let order = r.fitted_order.map(|p| format!(" order {p:.2}")).unwrap_or_default();
    let status = if r.pass { "PASS" } else if asserted { "FAIL" } else { "WARN" };
    a.log.push(format!("{status} {}{order}", r.name()));
    if !r.pass {
        let msg = format!("{} did not pass", r.name());
        if asserted {
            a.failures.push(msg);
        } else {
            a.warnings.push(msg);
        }
    }
}

fn warping(sc: &Scenario) -> Result<&WarpingFunction> {
    sc.warping.as_ref().ok_or_else(|| CliError::Invalid("operation needs a [warping] block".into()))
}

fn fiber(sc: &Scenario, size: usize) -> Result<Fiber> {
    Ok(make_fiber(sc.fiber.kind, sc.fiber.n, &[size], sc.fiber.patch)?)
}

fn heights(sc: &Scenario, f: &Fiber) -> Result<Vec<f64>> {
    match &sc.surface {
        None => Err(CliError::Invalid("operation needs a [surface] block".into())),
        Some(SurfaceSource::Expression(e)) => Ok(f.grid().sample(|x| e.eval(x))),
        Some(SurfaceSource::Values(v)) if v.len() == f.len() => Ok(v.clone()),
        Some(SurfaceSource::Values(v)) => Err(CliError::Invalid(format!(
            "surface csv has {} values, grid {:?} needs {}",
            v.len(),
            f.grid().shape(),
            f.len()
        ))),
    }
}

fn run_identities(sc: &Scenario, ops: &[Operation], a: &mut Artifacts) -> Result<()> {
    let w = warping(sc)?;
    let one_grid = |size: usize| -> Result<Vec<IdentityReport>> {
        let f = fiber(sc, size)?;
        let u = f.scalar_field(heights(sc, &f)?)?;
        let s = build_graph(&f, w, &u)?;
        let b = curvature_bundle(&s, &shape_operator(&s))?;
        let mut out = Vec::new();
        for op in ops {
            match op {
                Operation::VerifyStructural => out.extend(verify_structural(&s, &b)?),
                Operation::VerifyComposite => out.extend(verify_composite(&s, &b)?),
                Operation::VerifyTheta => out.extend(verify_theta(&s, &b)?),
                Operation::VerifyInequalities => out.extend(verify_inequalities(&s, &b, &ambient_curvature(&s)?)?),
                _ => {}
            }
        }
        Ok(out)
    };
    let per_grid = std::thread::scope(|scope| {
        let handles: Vec<_> = sc.fiber.grids.iter().map(|&g| scope.spawn(move || one_grid(g))).collect();
        handles.into_iter().map(|h| h.join().expect("grid worker panicked")).collect::<Result<Vec<_>>>()
    })?;
    for r in merge_refinement(per_grid) {
        emit_identity(a, &sc.name, &r, r.class != IdentityClass::Predicate);
    }
    Ok(())
}

fn run_conditions(sc: &Scenario, a: &mut Artifacts) -> Result<()> {
    let w = warping(sc)?;
    let slab = sc
        .slab
        .or(sc.uniqueness.as_ref().map(|u| u.slab))
        .ok_or_else(|| CliError::Invalid("check_conditions needs [conditions] slab".into()))?;
    let f = fiber(sc, sc.fiber.grids[0])?;
    let cond = check_conditions(w, slab, f.kappa(), f.n())?;
    a.json(format!("{}__conditions.json", sc.name), &cond);
    for r in condition_reports(&cond) {
        emit_identity(a, &sc.name, &r, false);
    }
    Ok(())
}

fn run_omori(sc: &Scenario, a: &mut Artifacts) -> Result<()> {
    let o = sc.omori.as_ref().ok_or_else(|| CliError::Invalid("check_omori needs an [omori] block".into()))?;
    let check = check_omori(OmoriModel { c: o.c, r_max: o.r_max }, GammaSpec::RSquared, &o.g)?;
    a.json(
        format!("{}__omori.json", sc.name),
        &json!({ "model": { "c": o.c, "r_max": o.r_max, "gamma": "r^2", "G": o.g.label() }, "check": check }),
    );
    for r in check.reports() {
        emit_identity(a, &sc.name, &r, false);
    }
    Ok(())
}

fn run_parabolicity(sc: &Scenario, a: &mut Artifacts) -> Result<()> {
    let p = sc
        .parabolicity
        .as_ref()
        .ok_or_else(|| CliError::Invalid("check_parabolicity needs a [parabolicity] block".into()))?;
    let profile = match p.profile {
        ProfileKind::Plane => Profile::plane(),
        ProfileKind::Hyperbolic => Profile::hyperbolic(),
        ProfileKind::Power(e) => Profile::power(e),
    };
    match check_parabolicity(&profile, p.t_max) {
        Ok(res) => {
            a.json(format!("{}__parabolicity.json", sc.name), &json!({ "profile": profile.name, "result": res }));
            emit_identity(a, &sc.name, &res.report(), true);
        }
        Err(e @ CoreError::AmbiguousTail { .. }) => {
            a.json(format!("{}__parabolicity.json", sc.name), &json!({ "profile": profile.name, "error": e.to_string() }));
            a.failures.push(e.to_string());
            a.log.push(format!("FAIL parabolicity_criterion: {e}"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn contour_svg(f: &Fiber, u: &[f64], title: &str) -> Option<String> {
    let shape = f.grid().shape();
    if shape.len() != 2 || u.is_empty() {
        return None;
    }
    let m = u.iter().sum::<f64>() / u.len() as f64;
    let dev: Vec<f64> = u.iter().map(|v| v - m).collect();
    Some(plot::contour(title, &dev, shape[0], shape[1], 8))
}

/// Core failures that are results rather than bad input.
fn solver_failure(a: &mut Artifacts, file: String, op: &str, e: CoreError) -> Result<()> {
    if CliError::from(e.clone()).is_input_error() {
        return Err(e.into());
    }
    let kind = match &e {
        CoreError::HypothesisViolation { .. } => "HypothesisViolation",
        CoreError::NonConvergence { .. } => "NonConvergence",
        CoreError::LostEllipticity { .. } => "LostEllipticity",
        _ => "Error",
    };
    let mut body = json!({ "error": kind, "message": e.to_string(), "uniqueness_asserted": false });
    if let CoreError::HypothesisViolation { predicate } = &e {
        body["predicate"] = json!(predicate);
    }
    if let CoreError::NonConvergence { residual_history, .. } = &e {
        body["residual_history"] = json!(residual_history);
    }
    a.json(file, &body);
    a.failures.push(format!("{op}: {kind}: {e}"));
    a.log.push(format!("FAIL {op}: {e}"));
    Ok(())
}

fn run_solve(sc: &Scenario, ov: &Overrides, a: &mut Artifacts) -> Result<()> {
    let s = sc.solve.as_ref().ok_or_else(|| CliError::Invalid("solve needs a [solve] block".into()))?;
    let w = warping(sc)?;
    let f = fiber(sc, sc.fiber.grids[0])?;
    let target = match s.target {
        Some(t) => t,
        None => slice_target(w, s.t0, s.k)?,
    };
    let u0 = match (&sc.surface, ov.seed.or(s.seed)) {
        (Some(_), _) => heights(sc, &f)?,
        (None, Some(seed)) => perturbation(&f, seed, s.amplitude).iter().map(|v| s.t0 + v).collect(),
        (None, None) => vec![s.t0; f.len()],
    };
    let mut opts = SolveOptions::new(s.k, target);
    opts.tol_residual = s.tol_residual;
    opts.max_iter = s.max_iter;
    let stem = format!("{}__solve", sc.name);
    match solve_constant_hk(&f, w, &u0, &opts) {
        Ok(out) => {
            a.json(format!("{stem}.json"), &json!({ "options": opts, "outcome": out }));
            let rows: Vec<Vec<String>> =
                out.residual_history.iter().enumerate().map(|(i, r)| vec![i.to_string(), format!("{r:e}")]).collect();
            a.files.insert(format!("{stem}_residuals.csv"), csv_bytes(&["iteration", "residual"], &rows));
            if let Some(svg) = contour_svg(&f, &out.u, "u* - mean height") {
                a.text(format!("{stem}_contour.svg"), svg);
            }
            a.log.push(format!(
                "PASS solve: {} iterations, residual {:e}, slice distance {:e}",
                out.iterations, out.final_residual, out.slice_distance
            ));
            Ok(())
        }
        Err(e) => solver_failure(a, format!("{stem}.json"), "solve", e),
    }
}

fn emit_uniqueness(sc: &Scenario, f: &Fiber, r: &UniquenessReport, a: &mut Artifacts) {
    let stem = format!("{}__uniqueness", sc.name);
    a.json(format!("{stem}.json"), r);
    let rows: Vec<Vec<String>> = r
        .runs
        .iter()
        .flat_map(|run| {
            run.residual_history.iter().enumerate().map(move |(i, v)| vec![run.seed.to_string(), i.to_string(), format!("{v:e}")])
        })
        .collect();
    a.files.insert(format!("{stem}_residuals.csv"), csv_bytes(&["seed", "iteration", "residual"], &rows));
    for run in &r.runs {
        if let Some(svg) = contour_svg(f, &run.u, &format!("seed {}: u* - mean height", run.seed)) {
            a.text(format!("{stem}_seed{}_contour.svg", run.seed), svg);
        }
    }
    if r.negative_control {
        let failing: Vec<&str> = r.hypotheses.failing().iter().map(|p| p.name.as_str()).collect();
        a.warnings.push(format!("uniqueness: negative control, no assertion made (failing: {})", failing.join(", ")));
        a.log.push(format!("WARN uniqueness: negative control ({} runs)", r.runs.len()));
    } else if r.passed {
        a.log.push(format!(
            "PASS uniqueness: {} runs reached the slice (max {} iterations, slice distance {:e})",
            r.runs.len(),
            r.iterations,
            r.slice_distance
        ));
    } else {
        let bad: Vec<String> = r.runs.iter().filter(|x| !x.reached_slice).map(|x| x.seed.to_string()).collect();
        a.failures.push(format!("uniqueness: seeds {} did not reach a slice", bad.join(", ")));
        a.log.push(format!("FAIL uniqueness: seeds {} did not reach a slice", bad.join(", ")));
    }
}

fn run_uniqueness(sc: &Scenario, ov: &Overrides, a: &mut Artifacts) -> Result<()> {
    let u = sc.uniqueness.as_ref().ok_or_else(|| CliError::Invalid("uniqueness needs a [uniqueness] block".into()))?;
    let w = warping(sc)?;
    let f = fiber(sc, sc.fiber.grids[0])?;
    let mut exp = UniquenessScenario::new(&f, w, u.slab, u.k, u.t0, u.theorem);
    exp.target = u.target;
    exp.amplitude = u.amplitude;
    exp.seeds = match ov.seed {
        Some(s) => (s..s + u.seeds.len() as u64).collect(),
        None => u.seeds.clone(),
    };
    exp.negative_control = u.negative_control;
    exp.tol_residual = u.tol_residual;
    exp.max_iter = u.max_iter;
    exp.slice_tol = u.slice_tol;
    match uniqueness_experiment(&exp) {
        Ok(r) => {
            emit_uniqueness(sc, &f, &r, a);
            Ok(())
        }
        Err(e) => solver_failure(a, format!("{}__uniqueness.json", sc.name), "uniqueness", e),
    }
}

/// Run the operations selected by `verb` in listed order.
pub fn run_scenario(sc: &Scenario, verb: Verb, ov: &Overrides) -> Result<Artifacts> {
    let mut sc = sc.clone();
    if let Some(g) = &ov.grids {
        if g.is_empty() {
            return Err(CliError::Invalid("--grids is empty".into()));
        }
        sc.fiber.grids = g.clone();
    }
    let ops: Vec<Operation> = match verb {
        Verb::Verify => sc.operations.iter().copied().filter(|o| !o.is_solver()).collect(),
        Verb::Solve => sc.operations.iter().copied().filter(|o| o.is_solver()).collect(),
        Verb::Check => vec![Operation::CheckConditions],
    };
    let mut a = Artifacts::default();
    let identity_ops: Vec<Operation> = ops
        .iter()
        .copied()
        .filter(|o| {
            matches!(
                o,
                Operation::VerifyStructural
                    | Operation::VerifyComposite
                    | Operation::VerifyTheta
                    | Operation::VerifyInequalities
            )
        })
        .collect();
    let mut identities_done = false;
    for op in &ops {
        match op {
            Operation::VerifyStructural
            | Operation::VerifyComposite
            | Operation::VerifyTheta
            | Operation::VerifyInequalities => {
                // one pass per grid serves every identity group
                if !identities_done {
                    run_identities(&sc, &identity_ops, &mut a)?;
                    identities_done = true;
                }
            }
            Operation::CheckConditions => run_conditions(&sc, &mut a)?,
            Operation::CheckOmori => run_omori(&sc, &mut a)?,
            Operation::CheckParabolicity => run_parabolicity(&sc, &mut a)?,
            Operation::Solve => run_solve(&sc, ov, &mut a)?,
            Operation::Uniqueness => run_uniqueness(&sc, ov, &mut a)?,
        }
    }
    let exit_code = a.exit_code(ov.strict);
    let manifest = json!({
        "schema_version": SCHEMA_VERSION,
        "scenario": sc.name,
        "command": verb.as_str(),
        "strict": ov.strict,
        "grids": sc.fiber.grids,
        "operations": ops.iter().map(|o| format!("{o:?}")).collect::<Vec<_>>(),
        "files": a.files.keys().collect::<Vec<_>>(),
        "failures": a.failures,
        "warnings": a.warnings,
        "passed": exit_code == EXIT_PASS,
        "exit_code": exit_code,
    });
    a.json("manifest.json".to_string(), &manifest);
    Ok(a)
}

pub fn write_artifacts(a: &Artifacts, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e.to_string()))?;
    for (name, bytes) in &a.files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e.to_string()))?;
    }
    Ok(())
}

/// Summarize an output directory: one CSV row per report file.
pub fn report_dir(dir: &Path) -> Result<(i32, Vec<String>)> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e.to_string()))?;
    let manifest: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    let files = manifest["files"].as_array().cloned().unwrap_or_default();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for name in files.iter().filter_map(|f| f.as_str()).filter(|f| f.ends_with(".json")) {
        let p = dir.join(name);
        let body = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e.to_string()))?;
        let v: serde_json::Value = serde_json::from_str(&body)
            .map_err(|e| CliError::Parse { line: e.line(), column: e.column(), message: format!("{name}: {e}") })?;
        let status = match (v.get("pass").or_else(|| v.get("passed")).and_then(|x| x.as_bool()), v.get("error")) {
            (_, Some(err)) => format!("error: {}", err.as_str().unwrap_or("?")),
            (Some(true), _) => "pass".to_string(),
            (Some(false), _) => "fail".to_string(),
            (None, _) => "info".to_string(),
        };
        lines.push(format!("{status:<10} {name}"));
        rows.push(vec![name.to_string(), status]);
    }
    std::fs::write(dir.join("summary.csv"), csv_bytes(&["file", "status"], &rows))
        .map_err(|e| CliError::io(&dir.join("summary.csv"), e.to_string()))?;
    let code = manifest["exit_code"].as_i64().unwrap_or(EXIT_FAIL as i64) as i32;
    Ok((code, lines))
}
