//! Mode dispatch, the structured report, and file export.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::born_infeld::reduce;
use crate::bubbles::{bubble_asymptotics, default_epsilons, estimate_s, interval_split, level_bound_check};
use crate::config::{print_config, OutputConfig, RunConfig, RunMode};
use crate::error::{Error, Result};
use crate::mountain_pass::{
    continue_lambda, ground_state_search, mp_candidate, multiplicity_search, refine_to_critical,
    verify_mp_geometry, BranchRun, Continuation, SeedOutcome, Solution,
};
use crate::nonlinearity::validate_hypotheses;

pub const SCHEMA: &str = "sbi-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    ConfigError,
    NonConvergence,
    CertificationFailed,
    IoError,
}

impl Status {
    /// 0 ok, 1 i/o failure, 2 config error, 3 non-convergence, 4 failed
    /// certification.
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::IoError => 1,
            Status::ConfigError => 2,
            Status::NonConvergence => 3,
            Status::CertificationFailed => 4,
        }
    }

    pub fn of_error(err: &Error) -> Self {
        match err {
            Error::InvalidParameter(_) | Error::ConfigParse { .. } | Error::ConfigRange { .. } => {
                Status::ConfigError
            }
            Error::Certification(_) => Status::CertificationFailed,
            Error::Io { .. } => Status::IoError,
            _ => Status::NonConvergence,
        }
    }
}

/// Radial profile `r, u, φ_u, φ_u', Q` with `Q` the enclosed charge.
#[derive(Debug, Clone)]
pub struct Profile {
    pub name: String,
    pub rows: Vec<[f64; 5]>,
}

impl Profile {
    pub fn of(name: impl Into<String>, sol: &Solution) -> Self {
        let pot = reduce(&sol.u);
        let rows = sol
            .u
            .grid()
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                [
                    r,
                    sol.u.values()[i],
                    pot.phi.values()[i],
                    pot.dphi.values()[i],
                    pot.charge.values()[i],
                ]
            })
            .collect();
        Self {
            name: name.into(),
            rows,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub solution: usize,
    pub stage: &'static str,
    pub iteration: usize,
    pub energy: f64,
    pub grad: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub record: &'static str,
    pub lambda: f64,
    pub energy: f64,
    pub grad: f64,
    pub pohozaev: f64,
    /// `‖u_λ - u_{λ_prev}‖`, absent for the first record.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub status: Status,
    pub mode: RunMode,
    /// The structured report written to `report.json`.
    pub payload: Value,
    pub profiles: Vec<Profile>,
    pub trace: Vec<TraceRow>,
    pub sweep: Vec<SweepRecord>,
    pub elapsed: Duration,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    /// Dotted-path lookup into the payload, e.g. `energy.total`.
    pub fn get(&self, path: &str) -> Option<&Value> {
        path.split('.').try_fold(&self.payload, |v, key| v.get(key))
    }
}

#[derive(Default)]
struct Outcome {
    status: Option<Status>,
    body: Map<String, Value>,
    profiles: Vec<Profile>,
    trace: Vec<TraceRow>,
    sweep: Vec<SweepRecord>,
}

impl Outcome {
    fn fail(&mut self, status: Status) {
        if self.status.is_none() {
            self.status = Some(status);
        }
    }
}

fn solution_record(sol: &Solution) -> Value {
    json!({
        "lambda": sol.lambda,
        "energy": { "total": sol.energy.total, "parts": sol.energy.parts },
        "residual": sol.residuals,
        "level": { "c_lambda": sol.c_level.unwrap_or(sol.energy.total) },
        "norm": sol.norm,
        "u0": sol.u.values()[0],
        "converged": sol.converged,
    })
}

/// Copies the `energy`, `residual` and `level` blocks of `record` to the top.
fn promote(body: &mut Map<String, Value>, record: &Value) {
    for key in ["energy", "residual", "level", "norm", "converged"] {
        if let Some(v) = record.get(key) {
            body.insert(key.to_string(), v.clone());
        }
    }
}

fn push_trace(trace: &mut Vec<TraceRow>, k: usize, sol: &Solution) {
    trace.extend(sol.trace.iter().enumerate().map(|(i, t)| TraceRow {
        solution: k,
        stage: "newton",
        iteration: i,
        energy: t.energy,
        grad: Some(t.grad),
    }));
}

fn sweep_of(cont: &Continuation) -> Vec<SweepRecord> {
    let mut out: Vec<SweepRecord> = cont
        .solutions
        .iter()
        .enumerate()
        .map(|(k, s)| SweepRecord {
            record: "lambda",
            lambda: s.lambda,
            energy: s.energy.total,
            grad: s.residuals.grad,
            pohozaev: s.residuals.pohozaev,
            difference: k.checked_sub(1).map(|j| cont.differences[j]),
        })
        .collect();
    if let Some(lim) = &cont.limit {
        out.push(SweepRecord {
            record: "limit",
            lambda: 0.0,
            energy: lim.energy,
            grad: lim.grad,
            pohozaev: lim.pohozaev,
            difference: None,
        });
    }
    out
}

fn branch_summary(run: &BranchRun) -> Value {
    let mut v = json!({
        "seed": run.seed,
        "geometry": { "rho": run.geometry_rho, "delta": run.geometry_delta, "t_escape": run.t_escape },
        "c_estimate": run.candidate.c_estimate,
        "minimax_steps": run.candidate.history.len(),
        "energy": run.limit_solution.energy.total,
        "converged": run.limit_solution.converged,
    });
    if let Some(l) = &run.continuation.limit {
        v["limit"] = json!({ "grad": l.grad, "pohozaev": l.pohozaev, "energy": l.energy });
    }
    v
}

fn runs_summary(runs: &[SeedOutcome]) -> Value {
    runs.iter()
        .map(|r| match r {
            SeedOutcome::Solved(run) => branch_summary(run),
            SeedOutcome::Failed { seed, error } => json!({ "seed": seed, "error": error }),
        })
        .collect()
}

fn run_solve(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let grid = cfg.build_grid()?;
    let lambda = cfg.model.lambda.ok_or_else(|| Error::invalid("lambda is required"))?;
    let params = cfg.params_at(lambda)?;
    let opts = cfg.solve_options();
    let seed = cfg.run.seeds[0];
    let geometry = verify_mp_geometry(&params, &seed.field(&grid), opts.rng_seed)?;
    let cand = mp_candidate(&params, &geometry.e_escape, &opts)?;
    let mut sol = refine_to_critical(&cand.u_peak, &params, &opts)?;
    sol.c_level = Some(sol.energy.total);
    let record = solution_record(&sol);
    promote(&mut out.body, &record);
    out.body.insert(
        "level".into(),
        json!({ "c_lambda": sol.energy.total, "c_estimate": cand.c_estimate }),
    );
    out.body.insert(
        "geometry".into(),
        json!({ "rho": geometry.rho, "delta": geometry.delta, "t_escape": geometry.t_escape }),
    );
    out.body.insert("seed".into(), json!(seed));
    out.trace.extend(cand.history.iter().enumerate().map(|(i, &e)| TraceRow {
        solution: 0,
        stage: "minimax",
        iteration: i,
        energy: e,
        grad: None,
    }));
    push_trace(&mut out.trace, 0, &sol);
    out.profiles.push(Profile::of("profile", &sol));
    if !sol.converged {
        out.fail(Status::NonConvergence);
    }
    Ok(())
}

fn run_continue(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let grid = cfg.build_grid()?;
    let schedule = cfg.schedule();
    let params = cfg.params_at(schedule[0])?;
    let opts = cfg.solve_options();
    let seed = cfg.run.seeds[0];
    let geometry = verify_mp_geometry(&params, &seed.field(&grid), opts.rng_seed)?;
    let cand = mp_candidate(&params, &geometry.e_escape, &opts)?;
    let cont = continue_lambda(&params, &schedule, &cand.u_peak, &opts)?;
    out.sweep = sweep_of(&cont);
    for (k, s) in cont.solutions.iter().enumerate() {
        push_trace(&mut out.trace, k, s);
    }
    let levels: Vec<f64> = cont.solutions.iter().map(|s| s.energy.total).collect();
    out.body.insert("differences".into(), json!(cont.differences));
    out.body.insert("c_levels".into(), json!(levels));
    if let Some(reason) = &cont.failure {
        out.body.insert("continuation_failure".into(), json!(reason));
        out.fail(Status::NonConvergence);
        return Ok(());
    }
    let limit = cont
        .limit
        .as_ref()
        .ok_or_else(|| Error::invalid("continuation needs at least two λ values"))?;
    out.body.insert(
        "limit".into(),
        json!({ "grad": limit.grad, "pohozaev": limit.pohozaev, "energy": limit.energy }),
    );
    let sol = refine_to_critical(&limit.u_limit, &params.with_lambda(0.0)?, &opts)?;
    promote(&mut out.body, &solution_record(&sol));
    push_trace(&mut out.trace, cont.solutions.len(), &sol);
    out.profiles.push(Profile::of("profile", &sol));
    if !sol.converged {
        out.fail(Status::NonConvergence);
    }
    Ok(())
}

fn run_ground_state(cfg: &RunConfig, out: &mut Outcome) -> Result<Option<f64>> {
    let grid = cfg.build_grid()?;
    let schedule = cfg.schedule();
    let params = cfg.params_at(schedule[0])?;
    let opts = cfg.solve_options();
    let gs = ground_state_search(&params, &grid, &cfg.run.seeds, &schedule, &opts)?;
    let sol = &gs.solution;
    promote(&mut out.body, &solution_record(sol));
    out.body.insert("c_star".into(), json!(sol.energy.total));
    out.body.insert("branches".into(), runs_summary(&gs.runs));
    out.body.insert("coercivity".into(), json!(gs.coercivity));
    if let Some(nb) = &gs.norm_bound {
        out.body.insert("norm_bound".into(), json!(nb));
        if !nb.holds {
            out.fail(Status::CertificationFailed);
        }
    }
    if let SeedOutcome::Solved(run) = &gs.runs[gs.branch] {
        out.sweep = sweep_of(&run.continuation);
    }
    push_trace(&mut out.trace, 0, sol);
    out.profiles.push(Profile::of("profile", sol));
    Ok(Some(sol.energy.total))
}

fn run_multiplicity(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let grid = cfg.build_grid()?;
    let schedule = cfg.schedule();
    let params = cfg.params_at(schedule[0])?;
    let opts = cfg.solve_options();
    let found = multiplicity_search(&params, &grid, cfg.run.count, &schedule, &opts)?;
    let records: Vec<Value> = found.solutions.iter().map(solution_record).collect();
    if let Some(first) = records.first() {
        promote(&mut out.body, first);
    }
    out.body.insert("solutions".into(), Value::Array(records));
    out.body.insert("seeds".into(), json!(found.seeds));
    out.body.insert("diagnostics".into(), json!(found.diagnostics));
    for (k, s) in found.solutions.iter().enumerate() {
        push_trace(&mut out.trace, k, s);
        out.profiles.push(Profile::of(format!("profile_{k}"), s));
    }
    let increasing = found
        .solutions
        .windows(2)
        .all(|w| w[0].energy.total < w[1].energy.total);
    out.body.insert("strictly_increasing".into(), json!(increasing));
    if found.solutions.len() < cfg.run.count || found.solutions.iter().any(|s| !s.converged) {
        out.fail(Status::NonConvergence);
    } else if !increasing {
        out.fail(Status::CertificationFailed);
    }
    Ok(())
}

fn run_critical(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let bgrid = cfg.build_bubble_grid()?;
    let a = cfg.bubbles.a;
    let eps = default_epsilons();
    let s = estimate_s(&bgrid, a, &eps)?;
    let params = cfg.params_at(1.0)?;
    let level = level_bound_check(&params, &bgrid, a, &eps, s.s_num)?;
    let split = interval_split(&params, &bgrid, a, &eps, s.s_num)?;
    let asym = bubble_asymptotics(&bgrid, a, &eps, s.s_num)?;
    out.body.insert("sobolev".into(), json!(s));
    out.body.insert("level_bound".into(), json!(level));
    out.body.insert("interval_split".into(), json!(split));
    out.body.insert("asymptotics".into(), json!(asym));
    if !level.passes {
        out.fail(Status::CertificationFailed);
    }
    let energy = run_ground_state(cfg, out)?;
    let below = energy.is_some_and(|e| e < level.threshold);
    if let Some(Value::Object(block)) = out.body.get_mut("level") {
        block.insert("threshold".into(), json!(level.threshold));
        block.insert("below_threshold".into(), json!(below));
    }
    if !below {
        out.fail(Status::CertificationFailed);
    }
    Ok(())
}

fn run_validate(cfg: &RunConfig, out: &mut Outcome) -> Result<()> {
    let report = validate_hypotheses(&cfg.nonlinearity())?;
    out.body.insert("hypotheses".into(), json!(report));
    out.body.insert("all_pass".into(), json!(report.all_pass()));
    if !report.all_pass() {
        out.fail(Status::CertificationFailed);
    }
    Ok(())
}

/// Paths of `null` leaves, which stand for values that were not finite.
fn null_paths(v: &Value, path: &str, acc: &mut Vec<String>) {
    match v {
        Value::Null => acc.push(path.to_string()),
        Value::Array(items) => {
            for (i, x) in items.iter().enumerate() {
                null_paths(x, &format!("{path}[{i}]"), acc);
            }
        }
        Value::Object(map) => {
            for (k, x) in map {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                null_paths(x, &p, acc);
            }
        }
        _ => {}
    }
}

/// Runs the configured mode. Solver errors become a report with a non-ok
/// status rather than an `Err`.
pub fn run(cfg: &RunConfig) -> RunReport {
    let start = Instant::now();
    let mut out = Outcome::default();
    let result = cfg.validate().and_then(|_| match cfg.run.mode {
        RunMode::Solve => run_solve(cfg, &mut out),
        RunMode::Continue => run_continue(cfg, &mut out),
        RunMode::GroundState => run_ground_state(cfg, &mut out).map(|_| ()),
        RunMode::Multiplicity => run_multiplicity(cfg, &mut out),
        RunMode::CriticalCertify => run_critical(cfg, &mut out),
        RunMode::Validate => run_validate(cfg, &mut out),
    });
    if let Err(err) = &result {
        out.fail(Status::of_error(err));
        out.body.insert("error".into(), json!(err.to_string()));
    }
    let mut nulls = Vec::new();
    null_paths(&Value::Object(out.body.clone()), "", &mut nulls);
    if !nulls.is_empty() {
        out.body.insert("non_finite".into(), json!(nulls));
        out.fail(Status::CertificationFailed);
    }
    let status = out.status.unwrap_or(Status::Ok);
    let mut payload = Map::new();
    payload.insert("schema".into(), json!(SCHEMA));
    payload.insert("mode".into(), json!(cfg.run.mode.name()));
    payload.insert("status".into(), json!(status));
    payload.insert("config".into(), json!(print_config(cfg)));
    payload.extend(out.body);
    RunReport {
        status,
        mode: cfg.run.mode,
        payload: Value::Object(payload),
        profiles: out.profiles,
        trace: out.trace,
        sweep: out.sweep,
        elapsed: start.elapsed(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::invalid(format!("csv encoding: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(&row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv encoding: {e}")))
}

/// Shortest exponent form that round-trips.
fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes `report.json`, one `<profile>.csv` per solution, `trace.csv`,
/// `sweep.csv` (continuation modes) and `timing.json`. Everything except
/// `timing.json` is a deterministic function of the configuration.
pub fn export(report: &RunReport, dir: &Path, output: &OutputConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    let mut put = |name: &str, bytes: Vec<u8>| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    let mut text = serde_json::to_string_pretty(&report.payload)
        .map_err(|e| Error::invalid(format!("report encoding: {e}")))?;
    text.push('\n');
    put("report.json", text.into_bytes())?;
    if output.profiles {
        for p in &report.profiles {
            let rows = p.rows.iter().map(|row| row.iter().map(|&v| num(v)).collect());
            put(&format!("{}.csv", p.name), csv_bytes(&["r", "u", "phi", "dphi", "Q"], rows)?)?;
        }
    }
    if output.traces && !report.trace.is_empty() {
        let rows = report.trace.iter().map(|t| {
            vec![
                t.solution.to_string(),
                t.stage.to_string(),
                t.iteration.to_string(),
                num(t.energy),
                opt(t.grad),
            ]
        });
        put("trace.csv", csv_bytes(&["solution", "stage", "iteration", "energy", "grad"], rows)?)?;
    }
    if !report.sweep.is_empty() {
        let rows = report.sweep.iter().map(|s| {
            vec![
                s.record.to_string(),
                num(s.lambda),
                num(s.energy),
                num(s.grad),
                num(s.pohozaev),
                opt(s.difference),
            ]
        });
        put(
            "sweep.csv",
            csv_bytes(&["record", "lambda", "energy", "grad", "pohozaev", "difference"], rows)?,
        )?;
    }
    let timing = format!("{{\"elapsed_seconds\": {}}}\n", report.elapsed.as_secs_f64());
    put("timing.json", timing.into_bytes())?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn validate_mode_reports_all_checks() {
        let cfg = parse_config("[model]\np = 3\n[run]\nmode = validate\n").unwrap();
        let report = run(&cfg);
        assert_eq!(report.status, Status::Ok);
        assert_eq!(report.get("all_pass"), Some(&json!(true)));
        assert_eq!(report.get("schema"), Some(&json!(SCHEMA)));
    }

    #[test]
    fn exit_codes_are_documented_values() {
        let codes: Vec<i32> = [
            Status::Ok,
            Status::IoError,
            Status::ConfigError,
            Status::NonConvergence,
            Status::CertificationFailed,
        ]
        .iter()
        .map(|s| s.exit_code())
        .collect();
        assert_eq!(codes, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn export_writes_atomically_named_files() {
        let cfg = parse_config("[model]\np = 3\n[run]\nmode = validate\n").unwrap();
        let report = run(&cfg);
        let dir = tempfile::tempdir().unwrap();
        let files = export(&report, dir.path(), &cfg.output).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["report.json", "timing.json"]);
        let left: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(left.len(), 2);
    }
}
