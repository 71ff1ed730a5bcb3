//! Run configuration: a line-based `key = value` document with `[section]`
//! headers, validated against the model's parameter ranges before any
//! computation.

use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::sync::Arc;

use crate::bubbles;
use crate::energy::ModelParams;
use crate::error::{Error, Result};
use crate::grid::{build_grid, RadialGrid};
use crate::mountain_pass::{default_seeds, geometric_schedule, Seed, SolveOptions};
use crate::nonlinearity::Nonlinearity;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Solve,
    Continue,
    GroundState,
    Multiplicity,
    CriticalCertify,
    Validate,
}

impl RunMode {
    pub const ALL: [RunMode; 6] = [
        RunMode::Solve,
        RunMode::Continue,
        RunMode::GroundState,
        RunMode::Multiplicity,
        RunMode::CriticalCertify,
        RunMode::Validate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Solve => "solve",
            RunMode::Continue => "continue",
            RunMode::GroundState => "ground_state",
            RunMode::Multiplicity => "multiplicity",
            RunMode::CriticalCertify => "critical_certify",
            RunMode::Validate => "validate",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub r_max: f64,
    pub n: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub p: f64,
    /// `f(s) = coeff·|s|^{p-1}s`.
    pub coeff: f64,
    pub varrho: f64,
    pub mu: f64,
    pub lambda: Option<f64>,
    pub q: Option<f64>,
    pub d: Option<f64>,
    pub r: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub tol_grad: f64,
    pub handoff_grad: f64,
    pub path_points: usize,
    pub max_outer: usize,
    pub max_newton: usize,
    /// The λ schedule is `2^{-k}` for `k` in `schedule_from..=schedule_to`.
    pub schedule_from: u32,
    pub schedule_to: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub mode: RunMode,
    pub seeds: Vec<Seed>,
    pub rng_seed: u64,
    /// Number of solutions requested in multiplicity mode.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BubbleConfig {
    pub r_max: f64,
    pub n: usize,
    pub gamma: f64,
    pub a: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub profiles: bool,
    pub traces: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub solver: SolverConfig,
    pub run: RunSection,
    pub bubbles: BubbleConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Defaults for everything except the mode and `p`.
    pub fn new(mode: RunMode, p: f64) -> Self {
        let opts = SolveOptions::default();
        Self {
            grid: GridConfig {
                r_max: 20.0,
                n: 2001,
                gamma: 2.0,
            },
            model: ModelConfig {
                p,
                coeff: 1.0,
                varrho: 3.5,
                mu: 0.0,
                lambda: None,
                q: None,
                d: None,
                r: None,
            },
            solver: SolverConfig {
                tol_grad: opts.tol_grad,
                handoff_grad: opts.handoff_grad,
                path_points: opts.path_points,
                max_outer: opts.max_outer,
                max_newton: opts.max_newton,
                schedule_from: 0,
                schedule_to: 12,
            },
            run: RunSection {
                mode,
                seeds: default_seeds(),
                rng_seed: 0,
                count: 3,
            },
            bubbles: BubbleConfig {
                r_max: 4.0,
                n: 4001,
                gamma: 3.0,
                a: bubbles::DEFAULT_CUTOFF,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                profiles: true,
                traces: true,
            },
        }
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        let m = &self.model;
        let nl = Nonlinearity::scaled_power(m.coeff, m.p, m.varrho);
        match (m.d, m.r) {
            (Some(d), Some(r)) => nl.with_lower_bound(d, r),
            _ => nl,
        }
    }

    /// Model parameters at `lambda`.
    pub fn params_at(&self, lambda: f64) -> Result<ModelParams> {
        let params = ModelParams {
            nonlinearity: self.nonlinearity(),
            mu: self.model.mu,
            lambda,
            q: self.model.q,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn build_grid(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.grid.r_max, self.grid.n, self.grid.gamma)
    }

    pub fn build_bubble_grid(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.bubbles.r_max, self.bubbles.n, self.bubbles.gamma)
    }

    pub fn solve_options(&self) -> SolveOptions {
        let s = &self.solver;
        SolveOptions {
            tol_grad: s.tol_grad,
            handoff_grad: s.handoff_grad,
            path_points: s.path_points,
            max_outer: s.max_outer,
            max_newton: s.max_newton,
            rng_seed: self.run.rng_seed,
            ..SolveOptions::default()
        }
    }

    pub fn schedule(&self) -> Vec<f64> {
        geometric_schedule(self.solver.schedule_to)[self.solver.schedule_from as usize..].to_vec()
    }

    /// Range and mode checks; errors name the offending key.
    pub fn validate(&self) -> Result<()> {
        let range = |key: &str, msg: String| Err(Error::ConfigRange { key: key.into(), msg });
        let g = &self.grid;
        if !(g.r_max > 0.0 && g.r_max.is_finite()) {
            return range("R_max", format!("must be positive, got {}", g.r_max));
        }
        if g.n < 16 {
            return range("N", format!("must be at least 16, got {}", g.n));
        }
        if !(g.gamma >= 1.0 && g.gamma.is_finite()) {
            return range("gamma", format!("must be at least 1, got {}", g.gamma));
        }
        let m = &self.model;
        if !(m.p > 2.0 && m.p < 5.0) {
            return range("p", format!("p must lie in (2,5), got {}", m.p));
        }
        if !(m.coeff > 0.0 && m.coeff.is_finite()) {
            return range("coeff", format!("must be positive, got {}", m.coeff));
        }
        if !(m.varrho > 3.0 && m.varrho < 4.0) {
            return range("varrho", format!("varrho must lie in (3,4), got {}", m.varrho));
        }
        if !(m.mu >= 0.0 && m.mu.is_finite()) {
            return range("mu", format!("mu must be nonnegative, got {}", m.mu));
        }
        if let Some(l) = m.lambda {
            if !(l > 0.0 && l <= 1.0) {
                return range("lambda", format!("lambda must satisfy λ ∈ (0,1], got {l}"));
            }
        }
        if let Some(q) = m.q {
            let lo = m.p.max(4.0);
            if !(q > lo && q < 5.0) {
                return range("q", format!("q must exceed max{{p,4}} = {lo} and stay below 5, got {q}"));
            }
            if m.mu > 0.0 {
                return range("q", "q is not used when mu > 0".into());
            }
        }
        match (m.d, m.r) {
            (Some(d), Some(r)) => {
                if !(d > 0.0 && d.is_finite()) {
                    return range("D", format!("D must be positive, got {d}"));
                }
                if !(r > 2.0 && r < 6.0) {
                    return range("r", format!("r must lie in (2,6), got {r}"));
                }
            }
            (Some(_), None) => return range("r", "D is given without r".into()),
            (None, Some(_)) => return range("D", "r is given without D".into()),
            (None, None) => {}
        }
        let s = &self.solver;
        if !(s.tol_grad > 0.0) {
            return range("tol_grad", format!("must be positive, got {}", s.tol_grad));
        }
        if !(s.handoff_grad > 0.0) {
            return range("handoff_grad", format!("must be positive, got {}", s.handoff_grad));
        }
        if s.path_points < 8 {
            return range("path_points", format!("must be at least 8, got {}", s.path_points));
        }
        if s.max_outer == 0 {
            return range("max_outer", "must be positive".into());
        }
        if s.max_newton == 0 {
            return range("max_newton", "must be positive".into());
        }
        if s.schedule_to > 13 {
            return range("schedule_to", format!("2^-{} is below 1e-4", s.schedule_to));
        }
        if s.schedule_from >= s.schedule_to {
            return range("schedule_from", "must be smaller than schedule_to".into());
        }
        let b = &self.bubbles;
        if !(b.a > 0.0 && 2.0 * b.a <= b.r_max) {
            return range("a", format!("cutoff support 2a must fit in R_max = {}", b.r_max));
        }
        if b.n < 16 {
            return range("N", format!("bubble grid needs at least 16 nodes, got {}", b.n));
        }
        if !(b.gamma >= 1.0) {
            return range("gamma", format!("bubble grading must be at least 1, got {}", b.gamma));
        }
        let run = &self.run;
        match run.mode {
            RunMode::Solve => {
                if m.lambda.is_none() {
                    return range("lambda", "required in solve mode".into());
                }
                if m.mu == 0.0 && m.q.is_none() {
                    return range("q", "required when mu = 0 and lambda > 0".into());
                }
            }
            RunMode::Continue | RunMode::GroundState | RunMode::Multiplicity => {
                if m.mu == 0.0 && m.q.is_none() {
                    return range("q", "required when mu = 0 and lambda > 0".into());
                }
            }
            RunMode::CriticalCertify => {
                if !(m.mu > 0.0) {
                    return range("mu", "critical_certify needs mu > 0".into());
                }
                if m.d.is_none() {
                    return range("D", "critical_certify needs (f4) data D and r".into());
                }
            }
            RunMode::Validate => {}
        }
        if run.mode == RunMode::Multiplicity {
            if m.mu != 0.0 {
                return range("mu", "multiplicity needs mu = 0".into());
            }
            if run.count == 0 {
                return range("count", "must be positive".into());
            }
        }
        if matches!(run.mode, RunMode::GroundState | RunMode::CriticalCertify) && run.seeds.len() < 3 {
            return range("seeds", "ground-state search needs at least 3 seeds".into());
        }
        if matches!(run.mode, RunMode::Solve | RunMode::Continue) && run.seeds.is_empty() {
            return range("seeds", "at least one seed is required".into());
        }
        for s in &run.seeds {
            if !(s.alpha != 0.0 && s.alpha.is_finite() && s.sigma > 0.0 && s.sigma.is_finite()) {
                return range("seeds", format!("seed {}:{} needs alpha != 0 and sigma > 0", s.alpha, s.sigma));
            }
        }
        Ok(())
    }
}

/// Multiplicity runs search below `λ = 2^{-6}` unless told otherwise.
pub const MULTIPLICITY_SCHEDULE_FROM: u32 = 6;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigParse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| parse_err(line, format!("`{key}`: cannot parse `{v}`")))
}

fn flag(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(parse_err(line, format!("`{key}`: expected true or false, got `{v}`"))),
    }
}

fn seeds(line: usize, v: &str) -> Result<Vec<Seed>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.split(':').collect();
            if !(2..=3).contains(&parts.len()) {
                return Err(parse_err(line, format!("seed `{item}`: expected alpha:sigma[:nodes]")));
            }
            Ok(Seed {
                alpha: num(line, "seeds", parts[0])?,
                sigma: num(line, "seeds", parts[1])?,
                nodes: parts.get(2).map(|n| num(line, "seeds", n)).transpose()?.unwrap_or(0),
            })
        })
        .collect()
}

/// Strict parse: unknown sections and keys are errors.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let (cfg, unknown) = parse_inner(text, true)?;
    debug_assert!(unknown.is_empty());
    Ok(cfg)
}

/// Like [`parse_config`] but unknown keys are skipped and reported.
pub fn parse_config_lenient(text: &str) -> Result<(RunConfig, Vec<String>)> {
    parse_inner(text, false)
}

fn parse_inner(text: &str, strict: bool) -> Result<(RunConfig, Vec<String>)> {
    let mut cfg = RunConfig::new(RunMode::Solve, f64::NAN);
    let mut section = String::new();
    let mut seen_mode = false;
    let mut seen_p = false;
    let mut seen = std::collections::BTreeSet::new();
    let mut unknown = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| parse_err(line, "unterminated section header"))?
                .trim();
            if !["grid", "model", "solver", "run", "bubbles", "output"].contains(&name) {
                if strict {
                    return Err(parse_err(line, format!("unknown section [{name}]")));
                }
                unknown.push(format!("line {line}: unknown section [{name}]"));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected key = value, got `{content}`")))?;
        let (key, v) = (key.trim(), value.trim());
        if section.is_empty() {
            return Err(parse_err(line, format!("key `{key}` outside any section")));
        }
        if !seen.insert(format!("{section}.{key}")) {
            return Err(parse_err(line, format!("duplicate key `{key}` in [{section}]")));
        }
        match (section.as_str(), key) {
            ("grid", "R_max") => cfg.grid.r_max = num(line, key, v)?,
            ("grid", "N") => cfg.grid.n = num(line, key, v)?,
            ("grid", "gamma") => cfg.grid.gamma = num(line, key, v)?,
            ("model", "p") => {
                cfg.model.p = num(line, key, v)?;
                seen_p = true;
            }
            ("model", "coeff") => cfg.model.coeff = num(line, key, v)?,
            ("model", "varrho") => cfg.model.varrho = num(line, key, v)?,
            ("model", "mu") => cfg.model.mu = num(line, key, v)?,
            ("model", "lambda") => cfg.model.lambda = Some(num(line, key, v)?),
            ("model", "q") => cfg.model.q = Some(num(line, key, v)?),
            ("model", "D") => cfg.model.d = Some(num(line, key, v)?),
            ("model", "r") => cfg.model.r = Some(num(line, key, v)?),
            ("solver", "tol_grad") => cfg.solver.tol_grad = num(line, key, v)?,
            ("solver", "handoff_grad") => cfg.solver.handoff_grad = num(line, key, v)?,
            ("solver", "path_points") => cfg.solver.path_points = num(line, key, v)?,
            ("solver", "max_outer") => cfg.solver.max_outer = num(line, key, v)?,
            ("solver", "max_newton") => cfg.solver.max_newton = num(line, key, v)?,
            ("solver", "schedule_from") => cfg.solver.schedule_from = num(line, key, v)?,
            ("solver", "schedule_to") => cfg.solver.schedule_to = num(line, key, v)?,
            ("run", "mode") => {
                cfg.run.mode = RunMode::parse(v).ok_or_else(|| {
                    let names: Vec<&str> = RunMode::ALL.iter().map(|m| m.name()).collect();
                    parse_err(line, format!("unknown mode `{v}`; expected one of {}", names.join(", ")))
                })?;
                seen_mode = true;
            }
            ("run", "seeds") => cfg.run.seeds = seeds(line, v)?,
            ("run", "rng_seed") => cfg.run.rng_seed = num(line, key, v)?,
            ("run", "count") => cfg.run.count = num(line, key, v)?,
            ("bubbles", "R_max") => cfg.bubbles.r_max = num(line, key, v)?,
            ("bubbles", "N") => cfg.bubbles.n = num(line, key, v)?,
            ("bubbles", "gamma") => cfg.bubbles.gamma = num(line, key, v)?,
            ("bubbles", "a") => cfg.bubbles.a = num(line, key, v)?,
            ("output", "dir") => cfg.output.dir = PathBuf::from(v),
            ("output", "profiles") => cfg.output.profiles = flag(line, key, v)?,
            ("output", "traces") => cfg.output.traces = flag(line, key, v)?,
            _ if strict => {
                return Err(parse_err(line, format!("unknown key `{key}` in [{section}]")));
            }
            _ => unknown.push(format!("line {line}: unknown key `{key}` in [{section}]")),
        }
    }
    if !seen_mode {
        return Err(Error::ConfigRange {
            key: "mode".into(),
            msg: "[run] mode is required".into(),
        });
    }
    if !seen_p {
        return Err(Error::ConfigRange {
            key: "p".into(),
            msg: "[model] p is required".into(),
        });
    }
    if cfg.run.mode == RunMode::Multiplicity && !seen.contains("solver.schedule_from") {
        cfg.solver.schedule_from = MULTIPLICITY_SCHEDULE_FROM;
    }
    cfg.validate()?;
    Ok((cfg, unknown))
}

/// Canonical document; `parse_config(&print_config(c)) == c`.
pub fn print_config(cfg: &RunConfig) -> String {
    cfg.to_string()
}

impl fmt::Display for RunConfig {
    fn fmt(&self, out: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let g = &self.grid;
        writeln!(s, "[grid]\nR_max = {}\nN = {}\ngamma = {}\n", g.r_max, g.n, g.gamma)?;
        let m = &self.model;
        writeln!(s, "[model]\np = {}\ncoeff = {}\nvarrho = {}\nmu = {}", m.p, m.coeff, m.varrho, m.mu)?;
        for (key, v) in [("lambda", m.lambda), ("q", m.q), ("D", m.d), ("r", m.r)] {
            if let Some(v) = v {
                writeln!(s, "{key} = {v}")?;
            }
        }
        let sv = &self.solver;
        writeln!(
            s,
            "\n[solver]\ntol_grad = {}\nhandoff_grad = {}\npath_points = {}\nmax_outer = {}\nmax_newton = {}\nschedule_from = {}\nschedule_to = {}\n",
            sv.tol_grad, sv.handoff_grad, sv.path_points, sv.max_outer, sv.max_newton, sv.schedule_from, sv.schedule_to
        )?;
        let seeds: Vec<String> = self
            .run
            .seeds
            .iter()
            .map(|x| format!("{}:{}:{}", x.alpha, x.sigma, x.nodes))
            .collect();
        writeln!(
            s,
            "[run]\nmode = {}\nseeds = {}\nrng_seed = {}\ncount = {}\n",
            self.run.mode.name(),
            seeds.join(", "),
            self.run.rng_seed,
            self.run.count
        )?;
        let b = &self.bubbles;
        writeln!(s, "[bubbles]\nR_max = {}\nN = {}\ngamma = {}\na = {}\n", b.r_max, b.n, b.gamma, b.a)?;
        let o = &self.output;
        write!(
            s,
            "[output]\ndir = {}\nprofiles = {}\ntraces = {}\n",
            o.dir.display(),
            o.profiles,
            o.traces
        )?;
        out.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[model]\np = 3\nlambda = 0.5\nq = 4.5\n\n[run]\nmode = solve\n";

    #[test]
    fn minimal_solve_document_parses() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.run.mode, RunMode::Solve);
        assert_eq!(cfg.model.lambda, Some(0.5));
        assert_eq!(cfg.grid.n, 2001);
    }

    #[test]
    fn round_trip() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&print_config(&cfg)).unwrap(), cfg);
    }

    #[test]
    fn range_errors_name_the_key() {
        let q = MINIMAL.replace("q = 4.5", "q = 3.5");
        match parse_config(&q) {
            Err(Error::ConfigRange { key, msg }) => {
                assert_eq!(key, "q");
                assert!(msg.contains("q must exceed max{p,4}"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
        let l = MINIMAL.replace("lambda = 0.5", "lambda = 1.5");
        match parse_config(&l) {
            Err(Error::ConfigRange { key, msg }) => {
                assert_eq!(key, "lambda");
                assert!(msg.contains("λ ∈ (0,1]"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let bad = format!("{MINIMAL}bogus = 1\n");
        match parse_config(&bad) {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 8),
            other => panic!("{other:?}"),
        }
        match parse_config("[model]\np = three\n") {
            Err(Error::ConfigParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let (_, unknown) = parse_config_lenient(&bad).unwrap();
        assert_eq!(unknown.len(), 1);
    }

    #[test]
    fn seeds_parse_with_optional_nodes() {
        let doc = format!("{MINIMAL}seeds = 1:0.3, 2:1:2\n");
        let cfg = parse_config(&doc).unwrap();
        assert_eq!(cfg.run.seeds, vec![Seed::gaussian(1.0, 0.3), Seed { alpha: 2.0, sigma: 1.0, nodes: 2 }]);
    }

    #[test]
    fn mode_requirements() {
        assert!(parse_config("[model]\np = 3\nq = 4.5\n[run]\nmode = solve\n").is_err());
        assert!(parse_config("[model]\np = 3\n[run]\nmode = validate\n").is_ok());
        assert!(parse_config("[model]\np = 4\nmu = 1\n[run]\nmode = critical_certify\n").is_err());
        assert!(parse_config("[model]\np = 4\nmu = 1\nD = 1\nr = 5\n[run]\nmode = critical_certify\n").is_ok());
    }
}
