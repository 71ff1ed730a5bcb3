//! Critical points of `I_λ`/`J_λ`: mountain-pass geometry, a ray minimax
//! for the mountain-pass level, Newton refinement with deflation, and
//! continuation in `λ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::born_infeld::{bi_identity_residual, reduce};
use crate::energy::{
    coercivity_certificate, gradient_of, h1_matrix, CoercivityCertificate, Evaluation,
    FunctionalValue, ModelParams, Mode,
};
use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::{cholesky_solve, dot, minres};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRule {
    /// Backtracking factor.
    pub shrink: f64,
    /// Sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 30,
        }
    }
}

/// Residual bounds a converged solution has to meet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Nehari residual relative to `‖u‖²`.
    pub nehari: f64,
    pub pohozaev: f64,
    pub bi_identity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            nehari: 1e-6,
            pohozaev: 1e-3,
            bi_identity: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub path_points: usize,
    pub max_outer: usize,
    pub max_newton: usize,
    /// Absolute tolerance on the dual norm of the first variation.
    pub tol_grad: f64,
    /// Minimax descent hands over to Newton once the gradient drops below
    /// this multiple of `max(1, ‖u‖)`.
    pub handoff_grad: f64,
    pub step_rule: StepRule,
    pub tolerances: Tolerances,
    /// Known solutions repelled by deflation.
    pub deflation: Vec<RadialField>,
    pub deflation_strength: f64,
    /// Also deflate `-u_k` (for odd `f`).
    pub deflate_negatives: bool,
    pub rng_seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            path_points: 21,
            max_outer: 300,
            max_newton: 60,
            tol_grad: 1e-6,
            handoff_grad: 1e-4,
            step_rule: StepRule::default(),
            tolerances: Tolerances::default(),
            deflation: Vec::new(),
            deflation_strength: 1.0,
            deflate_negatives: false,
            rng_seed: 0,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if self.path_points < 8 {
            return Err(Error::invalid(format!(
                "path_points must be at least 8, got {}",
                self.path_points
            )));
        }
        if !(self.tol_grad > 0.0) {
            return Err(Error::invalid("tol_grad must be positive"));
        }
        if !(self.handoff_grad > 0.0) {
            return Err(Error::invalid("handoff_grad must be positive"));
        }
        if !(self.deflation_strength > 0.0) {
            return Err(Error::invalid("deflation strength must be positive"));
        }
        let sr = &self.step_rule;
        if !(sr.shrink > 0.0 && sr.shrink < 1.0 && sr.armijo > 0.0 && sr.armijo < 0.5) {
            return Err(Error::invalid("step rule needs shrink in (0,1) and armijo in (0,1/2)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Residuals {
    /// Dual norm of the first variation.
    pub grad: f64,
    /// `|I'(u)[u]|`.
    pub nehari: f64,
    pub pohozaev: f64,
    pub bi_identity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub energy: f64,
    pub grad: f64,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: RadialField,
    pub lambda: f64,
    pub energy: FunctionalValue,
    pub c_level: Option<f64>,
    pub residuals: Residuals,
    pub trace: Vec<TraceEntry>,
    pub norm: f64,
    pub converged: bool,
}

impl Solution {
    fn certify(eval: &Evaluation, grad: f64, trace: Vec<TraceEntry>, opts: &SolveOptions) -> Result<Self> {
        let potential = reduce(&eval.u);
        let norm_sq = eval.norm_sq();
        let residuals = Residuals {
            grad,
            nehari: eval.nehari().abs(),
            pohozaev: eval.pohozaev_residual(),
            bi_identity: bi_identity_residual(&eval.u, &potential)?,
        };
        let tol = &opts.tolerances;
        let converged = grad < opts.tol_grad
            && residuals.nehari <= tol.nehari * norm_sq.max(1e-300)
            && residuals.pohozaev < tol.pohozaev
            && residuals.bi_identity < tol.bi_identity;
        Ok(Self {
            u: eval.u.clone(),
            lambda: eval.params.lambda,
            energy: eval.value,
            c_level: None,
            residuals,
            trace,
            norm: norm_sq.sqrt(),
            converged,
        })
    }
}

/// Lower functional valid for every `λ ∈ (0,1]`: the auxiliary `J` when a
/// `q`-term is present, `I` otherwise.
fn uniform_lower(u: &RadialField, params: &ModelParams) -> Result<f64> {
    let base = Evaluation::new(u, &params.with_lambda(0.0)?)?;
    match (params.mu == 0.0, params.q) {
        (true, Some(q)) => {
            let power: f64 = u
                .grid()
                .mass()
                .iter()
                .zip(u.values())
                .map(|(m, v)| m * v.abs().powf(q + 1.0))
                .sum();
            let it = &base.integrals;
            Ok(0.5 * (it.gradient + it.mass) - it.primitive - power / (q + 1.0))
        }
        _ => Ok(base.value.total),
    }
}

/// Upper functional valid for every `λ ∈ (0,1]`: `I + (1/3)‖u‖₂³`.
fn uniform_upper(u: &RadialField, params: &ModelParams) -> Result<f64> {
    let base = Evaluation::new(u, &params.with_lambda(0.0)?)?;
    Ok(base.value.total + base.integrals.mass.powf(1.5) / 3.0)
}

fn h1_norm(grid: &RadialGrid, v: &[f64]) -> f64 {
    let a = h1_matrix(grid);
    let n = a.len();
    dot(&a.apply(&v[..n]), &v[..n]).max(0.0).sqrt()
}

fn random_direction(rng: &mut ChaCha8Rng, grid: &std::sync::Arc<RadialGrid>) -> RadialField {
    let amp: f64 = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
    let s: f64 = 10f64.powf(rng.gen_range(-1.0..1.3));
    let b: f64 = rng.gen_range(-1.0..1.0);
    let c: f64 = rng.gen_range(0.0..3.0);
    RadialField::from_fn(grid.clone(), move |r| amp * (-s * r * r).exp() * (1.0 + b * (c * r).cos()))
        .with_dirichlet()
}

/// Sampled mountain-pass geometry: `L ≥ δ` on the sphere `‖u‖ = ρ` and a
/// point `e_t` of the scaling path with `I_λ(e_t) < 0` for all `λ ∈ (0,1]`.
#[derive(Debug, Clone)]
pub struct GeometryCertificate {
    pub rho: f64,
    pub delta: f64,
    pub t_escape: f64,
    pub e_escape: RadialField,
    /// Sampled points of the sphere.
    pub sphere: Vec<RadialField>,
}

impl GeometryCertificate {
    /// Minimum of the functional at `params` over the stored sphere samples.
    pub fn sphere_minimum(&self, params: &ModelParams) -> Result<f64> {
        let values: Result<Vec<f64>> = self
            .sphere
            .par_iter()
            .map(|u| Ok(Evaluation::new(u, params)?.value.total))
            .collect();
        Ok(values?.into_iter().fold(f64::INFINITY, f64::min))
    }

    /// Re-checks `(ρ, δ)` and the escape point at `params`.
    pub fn revalidate(&self, params: &ModelParams) -> Result<bool> {
        let min = self.sphere_minimum(params)?;
        let escape = Evaluation::new(&self.e_escape, params)?.value.total;
        Ok(min >= self.delta && escape < 0.0)
    }
}

/// Directions sampled on the sphere besides `e` itself.
const SPHERE_SAMPLES: usize = 64;
const ESCAPE_CAP: f64 = 4096.0;

pub fn verify_mp_geometry(
    params: &ModelParams,
    e: &RadialField,
    rng_seed: u64,
) -> Result<GeometryCertificate> {
    params.validate()?;
    let grid = e.grid().clone();
    let e = e.clone().with_dirichlet();
    if e.is_zero() {
        return Err(Error::invalid("mountain-pass seed must be nonzero"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut directions = vec![e.clone()];
    directions.extend((0..SPHERE_SAMPLES).map(|_| random_direction(&mut rng, &grid)));
    let unit: Vec<RadialField> = directions
        .iter()
        .map(|d| d.scaled(1.0 / h1_norm(&grid, d.values())))
        .collect();
    let mut rho = 1.0;
    let mut found = None;
    for _ in 0..40 {
        let sphere: Vec<RadialField> = unit.iter().map(|d| d.scaled(rho)).collect();
        let values: Result<Vec<f64>> = sphere.par_iter().map(|u| uniform_lower(u, params)).collect();
        let delta = values?.into_iter().fold(f64::INFINITY, f64::min);
        if delta > 0.0 {
            found = Some((sphere, delta));
            break;
        }
        rho *= 0.5;
    }
    let (sphere, delta) =
        found.ok_or_else(|| Error::Certification("no sphere with positive minimum found".into()))?;
    let upper_at = |t: f64| -> Result<(f64, RadialField)> {
        let et = crate::energy::scaling_path(&e, t)?.with_dirichlet();
        Ok((uniform_upper(&et, params)?, et))
    };
    let mut hi = 1.0;
    let mut lo = 0.0;
    let (mut value, mut e_escape) = upper_at(hi)?;
    while value >= 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > ESCAPE_CAP {
            return Err(Error::NoEscape { t_cap: ESCAPE_CAP });
        }
        (value, e_escape) = upper_at(hi)?;
    }
    // Pull the escape point back towards the zero crossing so that the
    // mountain-pass path is not dominated by the deep negative region.
    while hi - lo > 0.02 * hi {
        let mid = 0.5 * (lo + hi);
        let (v, et) = upper_at(mid)?;
        if v < 0.0 {
            hi = mid;
            e_escape = et;
        } else {
            lo = mid;
        }
    }
    let t = hi;
    Ok(GeometryCertificate {
        rho,
        delta,
        t_escape: t,
        e_escape,
        sphere,
    })
}

#[derive(Debug, Clone)]
pub struct MpCandidate {
    pub u_peak: RadialField,
    pub c_estimate: f64,
    /// Peak energy after each accepted outer iteration, nonincreasing.
    pub history: Vec<f64>,
    /// Maximum of the functional at `params` along the initial ray.
    pub initial_peak: f64,
    /// Maximum of `I + (1/3)‖u‖₂³` along the initial ray.
    pub initial_upper: f64,
    /// Energies at the scan points of the final ray.
    pub path_energies: Vec<f64>,
}

struct RayPeak {
    t: f64,
    eval: Evaluation,
    samples: Vec<f64>,
}

/// Global maximum of `t ↦ I(t w)` on `[0, T]`, where `T` is the first
/// doubling of `t_guess` past which the energy is negative. A uniform scan
/// locates the bracket and golden-section search polishes it.
fn ray_peak(
    w: &RadialField,
    params: &ModelParams,
    t_guess: f64,
    samples: usize,
) -> Result<RayPeak> {
    let at = |t: f64| Evaluation::new(&w.scaled(t), params);
    let mut t_end = t_guess.max(1e-3);
    let mut tries = 0;
    while at(t_end)?.value.total >= 0.0 {
        t_end *= 2.0;
        tries += 1;
        if tries > 40 {
            return Err(Error::NoEscape { t_cap: t_end });
        }
    }
    let ts: Vec<f64> = (0..=samples).map(|k| t_end * k as f64 / samples as f64).collect();
    let values: Vec<f64> = ts
        .par_iter()
        .map(|&t| Ok(at(t)?.value.total))
        .collect::<Result<_>>()?;
    let k = (0..values.len())
        .max_by(|&i, &j| values[i].total_cmp(&values[j]))
        .unwrap_or(0);
    let mut lo = ts[k.saturating_sub(1)];
    let mut hi = ts[(k + 1).min(samples)];
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = at(x1)?.value.total;
    let mut f2 = at(x2)?.value.total;
    while hi - lo > 1e-10 * hi.max(1.0) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = at(x2)?.value.total;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = at(x1)?.value.total;
        }
    }
    let t = 0.5 * (lo + hi);
    let eval = at(t)?;
    let (t, eval) = if eval.value.total >= values[k] {
        (t, eval)
    } else {
        (ts[k], at(ts[k])?)
    };
    Ok(RayPeak { t, eval, samples: values })
}

/// Peak of the functional on `span{v} ⊕ span(basis)` with coordinates
/// `coef = (t, c_1, …)`, `t > 0` the coefficient of `v`.
pub struct Peak {
    pub coef: Vec<f64>,
    pub eval: Evaluation,
    pub samples: Vec<f64>,
}

fn combine(v: &RadialField, basis: &[RadialField], x: &[f64]) -> Result<RadialField> {
    let mut u = v.scaled(x[0]);
    for (b, &c) in basis.iter().zip(&x[1..]) {
        u = u.lin_comb(1.0, b, c)?;
    }
    Ok(u)
}

/// Global maximum along the ray when `basis` is empty; otherwise a local
/// maximum in the span reached by damped Newton ascent from `x0`.
fn peak_on(
    v: &RadialField,
    basis: &[RadialField],
    params: &ModelParams,
    x0: &[f64],
    samples: usize,
) -> Result<Peak> {
    if basis.is_empty() {
        let rp = ray_peak(v, params, x0[0], samples)?;
        return Ok(Peak {
            coef: vec![rp.t],
            eval: rp.eval,
            samples: rp.samples,
        });
    }
    let elems: Vec<&RadialField> = std::iter::once(v).chain(basis).collect();
    let m = elems.len();
    let mut x = x0.to_vec();
    let mut eval = Evaluation::new(&combine(v, basis, &x)?, params)?;
    for _ in 0..100 {
        let r = eval.nodal_residual();
        let g: Vec<f64> = elems.iter().map(|e| dot(&r, e.values())).collect();
        if dot(&g, &g).sqrt() <= 1e-11 * eval.value.total.abs().max(1.0) {
            break;
        }
        let hv: Vec<Vec<f64>> = elems.iter().map(|e| eval.hessian_apply(e.values())).collect();
        let neg_h: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| -dot(&hv[i], elems[j].values())).collect())
            .collect();
        let step = cholesky_solve(&neg_h, &g).unwrap_or_else(|| {
            let scale = (0..m).map(|i| neg_h[i][i].abs()).fold(1e-12, f64::max);
            g.iter().map(|gi| gi / scale).collect()
        });
        let slope = dot(&g, &step);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let xt: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            if let Ok(e) = Evaluation::new(&combine(v, basis, &xt)?, params) {
                if e.value.total >= eval.value.total + 1e-4 * alpha * slope {
                    accepted = Some((xt, e));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xt, e)) = accepted else { break };
        x = xt;
        eval = e;
    }
    Ok(Peak {
        coef: x,
        eval,
        samples: Vec::new(),
    })
}

/// H¹-orthonormal basis of `span(fields)`, dropping near-dependent members.
fn orthonormalize(grid: &RadialGrid, fields: &[RadialField]) -> Result<Vec<RadialField>> {
    let mut basis: Vec<RadialField> = Vec::new();
    for f in fields {
        let mut w = f.clone();
        for b in &basis {
            let c = h1_dot(grid, w.values(), b.values());
            w = w.lin_comb(1.0, b, -c)?;
        }
        let n = h1_norm(grid, w.values());
        if n > 1e-10 * h1_norm(grid, f.values()) {
            basis.push(w.scaled(1.0 / n));
        }
    }
    Ok(basis)
}

fn h1_dot(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    let m = h1_matrix(grid);
    let n = m.len();
    dot(&m.apply(&a[..n]), &b[..n])
}

pub struct Minimax {
    pub initial: Peak,
    pub peak: Peak,
    pub history: Vec<f64>,
}

/// Local minimax: `v ⟂ support` descends along the Sobolev gradient taken at
/// the peak of the functional on `span{v} ⊕ support`, with backtracking so
/// the recorded peak energies are nonincreasing. With an empty support this
/// is a minimax over rays `[0, T v]`, each an admissible mountain-pass path.
pub fn local_minimax(
    params: &ModelParams,
    v0: &RadialField,
    support: &[RadialField],
    opts: &SolveOptions,
) -> Result<Minimax> {
    let grid = v0.grid().clone();
    let samples = opts.path_points.max(8);
    let basis = orthonormalize(&grid, support)?;
    let mut v = v0.clone().with_dirichlet();
    for b in &basis {
        let c = h1_dot(&grid, v.values(), b.values());
        v = v.lin_comb(1.0, b, -c)?;
    }
    let nv = h1_norm(&grid, v.values());
    if !(nv > 0.0) {
        return Err(Error::invalid("minimax direction lies in the support span"));
    }
    let v = v.scaled(1.0 / nv);
    let mut x0 = vec![0.0; basis.len() + 1];
    x0[0] = if basis.is_empty() { 1.0 } else { ray_peak(&v, params, 1.0, samples)?.t };
    let initial = peak_on(&v, &basis, params, &x0, samples)?;
    let mut peak = Peak {
        coef: initial.coef.clone(),
        eval: initial.eval.clone(),
        samples: initial.samples.clone(),
    };
    let mut v = v;
    let mut history = vec![peak.eval.value.total];
    let mut alpha: f64 = 1.0;
    let rule = opts.step_rule;
    for _ in 0..opts.max_outer {
        let grad = gradient_of(&peak.eval)?;
        let gn = grad.dual_norm;
        let level = peak.eval.value.total;
        if gn <= opts.handoff_grad * h1_norm(&grid, peak.eval.u.values()).max(1.0) {
            break;
        }
        let mut accepted = None;
        for _ in 0..rule.max_backtracks {
            let mut moved = v.scaled(peak.coef[0]).lin_comb(1.0, &grad.field, -alpha)?.with_dirichlet();
            for b in &basis {
                let c = h1_dot(&grid, moved.values(), b.values());
                moved = moved.lin_comb(1.0, b, -c)?;
            }
            let norm = h1_norm(&grid, moved.values());
            if norm > 0.0 {
                let dir = moved.scaled(1.0 / norm);
                let mut x = peak.coef.clone();
                x[0] = norm;
                match peak_on(&dir, &basis, params, &x, samples) {
                    Ok(next)
                        if next.coef[0] > 0.0
                            && next.eval.value.total <= level - rule.armijo * alpha * gn * gn =>
                    {
                        accepted = Some((dir, next));
                        break;
                    }
                    Ok(_) | Err(Error::NonFinite(_)) | Err(Error::NoEscape { .. }) => {}
                    Err(err) => return Err(err),
                }
            }
            alpha *= rule.shrink;
        }
        let Some((dir, next)) = accepted else { break };
        let drop = level - next.eval.value.total;
        v = dir;
        peak = next;
        history.push(peak.eval.value.total);
        alpha = (alpha * 2.0).min(1e3);
        if drop <= 1e-12 * level.abs().max(1.0) {
            break;
        }
    }
    Ok(Minimax {
        initial,
        peak,
        history,
    })
}

/// Mountain-pass level estimate from the ray minimax started at the
/// direction of `e_escape`.
pub fn mp_candidate(
    params: &ModelParams,
    e_escape: &RadialField,
    opts: &SolveOptions,
) -> Result<MpCandidate> {
    opts.validate()?;
    let end = Evaluation::new(e_escape, params)?.value.total;
    if !(end < 0.0) {
        return Err(Error::invalid("mountain-pass endpoint must have negative energy"));
    }
    let grid = e_escape.grid().clone();
    let samples = opts.path_points.max(8);
    let w = e_escape.scaled(1.0 / h1_norm(&grid, e_escape.values()));
    let run = local_minimax(params, &w, &[], opts)?;
    let t_init = run.initial.coef[0];
    let initial_upper = (0..=samples)
        .map(|k| uniform_upper(&w.scaled(2.0 * t_init * k as f64 / samples as f64), params))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(MpCandidate {
        u_peak: run.peak.eval.u.clone(),
        c_estimate: run.peak.eval.value.total,
        history: run.history,
        initial_peak: run.initial.eval.value.total,
        initial_upper,
        path_energies: run.peak.samples,
    })
}

/// `log M(u)` for the deflation operator `M(u) = Π(1 + β/‖u-u_k‖²)` and its
/// derivative along `d`.
fn deflation_terms(grid: &RadialGrid, u: &[f64], d: &[f64], opts: &SolveOptions) -> (f64, f64) {
    let a = h1_matrix(grid);
    let n = a.len();
    let beta = opts.deflation_strength;
    let mut log_m = 0.0;
    let mut dlog = 0.0;
    for known in &opts.deflation {
        let signs: &[f64] = if opts.deflate_negatives { &[1.0, -1.0] } else { &[1.0] };
        for &sgn in signs {
            let diff: Vec<f64> = u[..n]
                .iter()
                .zip(&known.values()[..n])
                .map(|(a, b)| a - sgn * b)
                .collect();
            let ad = a.apply(&diff);
            let dist2 = dot(&ad, &diff).max(1e-300);
            let factor = 1.0 + beta / dist2;
            log_m += factor.ln();
            let ddist2 = 2.0 * dot(&ad, &d[..n]);
            dlog += -beta * ddist2 / (dist2 * dist2) / factor;
        }
    }
    (log_m, dlog)
}

const COLLAPSE_NORM: f64 = 1e-8;

/// Damped Newton on the first variation with the merit `½‖I'(u)‖²_{H⁻¹}`
/// (deflated merit when known solutions are supplied). Linear systems are
/// solved by MINRES preconditioned with the H¹ Gram matrix.
pub fn refine_to_critical(
    u0: &RadialField,
    params: &ModelParams,
    opts: &SolveOptions,
) -> Result<Solution> {
    opts.validate()?;
    params.validate()?;
    let grid = u0.grid().clone();
    let n = grid.len();
    let pre = h1_matrix(&grid);
    let mut u = u0.clone().with_dirichlet();
    if u.is_zero() {
        return Err(Error::TrivialLimit { norm: 0.0 });
    }
    let mut trace = Vec::new();
    let mut eval = Evaluation::new(&u, params)?;
    let mut grad = gradient_of(&eval)?;
    let zero_dir = vec![0.0; n];
    let merit_of = |eval: &Evaluation, dual: f64| -> f64 {
        let (log_m, _) = deflation_terms(&grid, eval.u.values(), &zero_dir, opts);
        0.5 * (log_m.exp() * dual).powi(2)
    };
    let mut merit = merit_of(&eval, grad.dual_norm);
    for iteration in 0..=opts.max_newton {
        let norm = eval.norm_sq().sqrt();
        trace.push(TraceEntry {
            energy: eval.value.total,
            grad: grad.dual_norm,
        });
        if norm < COLLAPSE_NORM {
            return Err(Error::TrivialLimit { norm });
        }
        if grad.dual_norm < opts.tol_grad {
            return Solution::certify(&eval, grad.dual_norm, trace, opts);
        }
        if iteration == opts.max_newton {
            break;
        }
        let r = eval.nodal_residual();
        let rhs: Vec<f64> = r[..n - 1].iter().map(|v| -v).collect();
        let op = |w: &[f64]| -> Vec<f64> {
            let mut full = w.to_vec();
            full.push(0.0);
            let mut hw = eval.hessian_apply(&full);
            hw.truncate(n - 1);
            hw
        };
        let solve = minres(op, |v| pre.solve(v), &rhs, 1e-10, 2000)?;
        let mut step = solve.x;
        step.push(0.0);
        if !opts.deflation.is_empty() {
            let (_, dlog) = deflation_terms(&grid, u.values(), &step, opts);
            let denom = 1.0 - dlog;
            if denom.abs() > 1e-12 {
                for s in step.iter_mut() {
                    *s /= denom;
                }
            }
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.step_rule.max_backtracks {
            let cand_vals: Vec<f64> = u.values().iter().zip(&step).map(|(a, b)| a + alpha * b).collect();
            let cand = RadialField::new(grid.clone(), cand_vals)?;
            if let Ok(ce) = Evaluation::new(&cand, params) {
                let cg = gradient_of(&ce)?;
                let cm = merit_of(&ce, cg.dual_norm);
                if cm <= (1.0 - 2.0 * opts.step_rule.armijo * alpha) * merit {
                    accepted = Some((ce, cg, cm));
                    break;
                }
            }
            alpha *= opts.step_rule.shrink;
        }
        match accepted {
            Some((ce, cg, cm)) => {
                if merit - cm < 1e-14 * merit.max(1e-300) {
                    return Err(Error::NonConvergence {
                        iterations: iteration,
                        residual: cg.dual_norm,
                        reason: "stalled".into(),
                    });
                }
                u = ce.u.clone();
                eval = ce;
                grad = cg;
                merit = cm;
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations: iteration,
                    residual: grad.dual_norm,
                    reason: "line search failed".into(),
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_newton,
        residual: grad.dual_norm,
        reason: "iteration limit".into(),
    })
}

/// `{1, 1/2, …, 2^{-k}}`.
pub fn geometric_schedule(k: u32) -> Vec<f64> {
    (0..=k).map(|i| 0.5f64.powi(i as i32)).collect()
}

#[derive(Debug, Clone)]
pub struct LimitCertificate {
    pub u_limit: RadialField,
    /// Dual norm of `I'(u_limit)`.
    pub grad: f64,
    pub pohozaev: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Continuation {
    pub solutions: Vec<Solution>,
    /// `‖u_{λ_k} - u_{λ_{k+1}}‖`.
    pub differences: Vec<f64>,
    pub limit: Option<LimitCertificate>,
    /// Set when a step failed; earlier solutions are kept.
    pub failure: Option<String>,
}

/// Polynomial extrapolation of `λ ↦ u_λ` to `λ = 0` through the given
/// solutions (Richardson for a geometric schedule).
fn extrapolate_to_zero(tail: &[Solution]) -> Result<RadialField> {
    let mut acc = tail[0].u.scaled(0.0);
    for (i, si) in tail.iter().enumerate() {
        let weight: f64 = tail
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, sj)| sj.lambda / (sj.lambda - si.lambda))
            .product();
        acc = acc.lin_comb(1.0, &si.u, weight)?;
    }
    Ok(acc)
}

const SUBSTEP_DEPTH: u32 = 6;

/// Reaches `lambda` from `prev` through the geometric midpoint, recursing
/// when either half fails.
fn substep(
    prev: &Solution,
    lambda: f64,
    params: &ModelParams,
    opts: &SolveOptions,
    depth: u32,
) -> Result<Solution> {
    let mid = (prev.lambda * lambda).sqrt();
    let at_mid = match refine_to_critical(&prev.u, &params.with_lambda(mid)?, opts) {
        Ok(sol) => sol,
        Err(err) if depth == 0 => return Err(err),
        Err(_) => substep(prev, mid, params, opts, depth - 1)?,
    };
    let w = (lambda - mid) / (mid - prev.lambda);
    let guess = at_mid.u.lin_comb(1.0 + w, &prev.u, -w)?;
    match refine_to_critical(&guess, &params.with_lambda(lambda)?, opts) {
        Ok(sol) => Ok(sol),
        Err(err) if depth == 0 => Err(err),
        Err(_) => substep(&at_mid, lambda, params, opts, depth - 1),
    }
}

/// Warm-started solves down a decreasing schedule, starting from `u_start`
/// and bisecting a step in `log λ` when its solve fails, followed by
/// extrapolation of `u_λ` to `λ = 0`.
pub fn continue_lambda(
    params: &ModelParams,
    schedule: &[f64],
    u_start: &RadialField,
    opts: &SolveOptions,
) -> Result<Continuation> {
    if schedule.is_empty() {
        return Err(Error::invalid("empty λ schedule"));
    }
    for w in schedule.windows(2) {
        if !(w[1] < w[0]) {
            return Err(Error::invalid("λ schedule must be strictly decreasing"));
        }
    }
    let last = *schedule.last().unwrap();
    if !(schedule[0] <= 1.0 && last >= 1e-4) {
        return Err(Error::invalid("λ schedule must lie in [1e-4, 1]"));
    }
    let grid = u_start.grid().clone();
    let mut solutions: Vec<Solution> = Vec::new();
    let mut differences = Vec::new();
    let mut failure = None;
    for (k, &lambda) in schedule.iter().enumerate() {
        let p = params.with_lambda(lambda)?;
        let guess = match solutions.len() {
            0 => u_start.clone(),
            1 => solutions[0].u.clone(),
            len => {
                let (a, b) = (&solutions[len - 2], &solutions[len - 1]);
                let w = (lambda - b.lambda) / (b.lambda - a.lambda);
                b.u.lin_comb(1.0 + w, &a.u, -w)?
            }
        };
        let attempt = match refine_to_critical(&guess, &p, opts) {
            Ok(sol) => Ok(sol),
            Err(err) => match solutions.last() {
                Some(prev) => substep(prev, lambda, params, opts, SUBSTEP_DEPTH).map_err(|_| err),
                None => Err(err),
            },
        };
        match attempt {
            Ok(mut sol) => {
                sol.c_level = Some(sol.energy.total);
                if let Some(prev) = solutions.last() {
                    let diff = sol.u.lin_comb(1.0, &prev.u, -1.0)?;
                    differences.push(h1_norm(&grid, diff.values()));
                }
                solutions.push(sol);
            }
            Err(err) => {
                failure = Some(format!("λ = {lambda} (step {k}): {err}"));
                break;
            }
        }
    }
    let limit = if failure.is_none() && solutions.len() >= 2 {
        let u_limit = extrapolate_to_zero(&solutions[solutions.len().saturating_sub(3)..])?;
        let base = params.with_lambda(0.0)?;
        let eval = Evaluation::new(&u_limit, &base)?;
        let grad = gradient_of(&eval)?.dual_norm;
        Some(LimitCertificate {
            grad,
            pohozaev: eval.pohozaev_residual(),
            energy: eval.value.total,
            u_limit,
        })
    } else {
        None
    };
    Ok(Continuation {
        solutions,
        differences,
        limit,
        failure,
    })
}

/// Seed `α L_n(2σr²) e^{-σr²} / L_n(0)` with `L_n` the generalized Laguerre
/// polynomial of order ½; `n` is the number of sign changes (`0` gives the
/// Gaussian `α e^{-σr²}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seed {
    pub alpha: f64,
    pub sigma: f64,
    pub nodes: u32,
}

impl Seed {
    pub fn gaussian(alpha: f64, sigma: f64) -> Self {
        Self { alpha, sigma, nodes: 0 }
    }

    pub fn field(&self, grid: &std::sync::Arc<RadialGrid>) -> RadialField {
        let (a, s, n) = (self.alpha, self.sigma, self.nodes);
        let scale = laguerre_half(n, 0.0);
        RadialField::from_fn(grid.clone(), move |r| {
            a * laguerre_half(n, 2.0 * s * r * r) / scale * (-s * r * r).exp()
        })
        .with_dirichlet()
    }
}

fn laguerre_half(n: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.5 - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.5 - x) * cur - (k + 0.5) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// One seed carried through geometry, path, Newton and continuation.
#[derive(Debug, Clone)]
pub struct BranchRun {
    pub seed: Seed,
    pub geometry_rho: f64,
    pub geometry_delta: f64,
    pub t_escape: f64,
    pub candidate: MpCandidate,
    pub continuation: Continuation,
    /// Critical point of the unperturbed functional refined from the limit.
    pub limit_solution: Solution,
}

/// Runs the full pipeline for one seed: geometry and path at `λ =
/// schedule[0]`, Newton at the path peak, continuation down the schedule and
/// a final Newton solve of the unperturbed problem from the extrapolated
/// limit.
pub fn run_branch(
    params: &ModelParams,
    grid: &std::sync::Arc<RadialGrid>,
    seed: Seed,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<BranchRun> {
    let e = seed.field(grid);
    let first = params.with_lambda(*schedule.first().ok_or_else(|| Error::invalid("empty λ schedule"))?)?;
    let geometry = verify_mp_geometry(&first, &e, opts.rng_seed)?;
    let candidate = mp_candidate(&first, &geometry.e_escape, opts)?;
    let continuation = continue_lambda(params, schedule, &candidate.u_peak, opts)?;
    if let Some(reason) = &continuation.failure {
        return Err(Error::NonConvergence {
            iterations: continuation.solutions.len(),
            residual: f64::NAN,
            reason: reason.clone(),
        });
    }
    let limit = continuation
        .limit
        .as_ref()
        .ok_or_else(|| Error::invalid("continuation needs at least two λ values"))?;
    let limit_solution = refine_to_critical(&limit.u_limit, &params.with_lambda(0.0)?, opts)?;
    Ok(BranchRun {
        seed,
        geometry_rho: geometry.rho,
        geometry_delta: geometry.delta,
        t_escape: geometry.t_escape,
        candidate,
        continuation,
        limit_solution,
    })
}

/// `α ∈ {1, 2, 4}` by `σ ∈ {0.3, 1}`.
pub fn default_seeds() -> Vec<Seed> {
    let mut seeds = Vec::new();
    for alpha in [1.0, 2.0, 4.0] {
        for sigma in [0.3, 1.0] {
            seeds.push(Seed::gaussian(alpha, sigma));
        }
    }
    seeds
}

#[derive(Debug, Clone)]
pub enum SeedOutcome {
    Solved(Box<BranchRun>),
    Failed { seed: Seed, error: String },
}

/// Small-norm bound for nontrivial critical points of `I`: the Nehari
/// identity with `|f(s)s| ≤ ½s² + C_½|s|^{p+1}` and the embedding
/// `∫|v|^{p+1} ≤ S‖v‖^{p+1}` give `‖u‖ ≥ (1/(2C_½S))^{1/(p-1)}`.
#[derive(Debug, Clone, Serialize)]
pub struct NormBound {
    pub c_half: f64,
    /// Largest sampled embedding ratio, the solution included.
    pub embedding: f64,
    pub rho_min: f64,
    pub norm: f64,
    pub holds: bool,
}

const EMBEDDING_SAMPLES: usize = 32;

pub fn norm_lower_bound(u: &RadialField, params: &ModelParams, rng_seed: u64) -> NormBound {
    let grid = u.grid().clone();
    let p = params.nonlinearity.p();
    let ratio = |v: &[f64]| {
        let lp: f64 = grid.mass().iter().zip(v).map(|(m, x)| m * x.abs().powf(p + 1.0)).sum();
        lp / h1_norm(&grid, v).powf(p + 1.0)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let embedding = (0..EMBEDDING_SAMPLES)
        .map(|_| ratio(random_direction(&mut rng, &grid).values()))
        .fold(ratio(u.values()), f64::max);
    let c_half = params.nonlinearity.small_norm_constant(0.5);
    let rho_min = (1.0 / (2.0 * c_half * embedding)).powf(1.0 / (p - 1.0));
    let norm = h1_norm(&grid, u.values());
    NormBound {
        c_half,
        embedding,
        rho_min,
        norm,
        holds: norm >= rho_min,
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub solution: Solution,
    /// Index into `runs` of the least-energy branch.
    pub branch: usize,
    pub runs: Vec<SeedOutcome>,
    /// `I(u) ≥ C‖u‖²` for every converged candidate, in `runs` order.
    pub coercivity: Vec<CoercivityCertificate>,
    /// Present for `μ = 0`.
    pub norm_bound: Option<NormBound>,
}

/// Runs every seed through [`run_branch`] in parallel and keeps the
/// least-energy nontrivial critical point of the unperturbed functional.
pub fn ground_state_search(
    params: &ModelParams,
    grid: &std::sync::Arc<RadialGrid>,
    seeds: &[Seed],
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<GroundState> {
    if seeds.len() < 3 {
        return Err(Error::invalid("ground-state search needs at least 3 seeds"));
    }
    let runs: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| match run_branch(params, grid, seed, schedule, opts) {
            Ok(run) => SeedOutcome::Solved(Box::new(run)),
            Err(err) => SeedOutcome::Failed {
                seed,
                error: err.to_string(),
            },
        })
        .collect();
    let base = params.with_lambda(0.0)?;
    let mut coercivity = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (k, outcome) in runs.iter().enumerate() {
        let SeedOutcome::Solved(run) = outcome else { continue };
        let sol = &run.limit_solution;
        if !sol.converged || sol.norm < COLLAPSE_NORM {
            continue;
        }
        let cert = coercivity_certificate(&Evaluation::new(&sol.u, &base)?, 1e-8);
        if !cert.holds {
            return Err(Error::Certification(format!(
                "I(u) = {:.6e} below C‖u‖² = {:.6e} for seed {:?}",
                cert.energy,
                cert.constant * cert.norm_sq,
                run.seed
            )));
        }
        coercivity.push(cert);
        if best.is_none_or(|(_, e)| sol.energy.total < e) {
            best = Some((k, sol.energy.total));
        }
    }
    let (branch, _) = best.ok_or_else(|| {
        Error::SearchFailed(
            "no seed produced a converged nontrivial solution; try larger seed amplitudes".into(),
        )
    })?;
    let SeedOutcome::Solved(run) = &runs[branch] else { unreachable!() };
    let solution = run.limit_solution.clone();
    let norm_bound = (params.mu == 0.0).then(|| norm_lower_bound(&solution.u, &base, opts.rng_seed));
    Ok(GroundState {
        solution,
        branch,
        runs,
        coercivity,
        norm_bound,
    })
}

#[derive(Debug, Clone)]
pub struct Multiplicity {
    /// Certified solutions of the unperturbed problem, by increasing energy.
    pub solutions: Vec<Solution>,
    /// Seeds that produced them, in the same order.
    pub seeds: Vec<Seed>,
    /// Notes on seeds that failed or produced duplicates.
    pub diagnostics: Vec<String>,
}

/// Minimal distance from `u` to `±v` over `known`.
fn distance_to(grid: &RadialGrid, u: &RadialField, known: &[RadialField]) -> f64 {
    known
        .iter()
        .flat_map(|k| {
            [1.0, -1.0].map(|sgn| {
                let diff: Vec<f64> = u.values().iter().zip(k.values()).map(|(a, b)| a - sgn * b).collect();
                h1_norm(grid, &diff)
            })
        })
        .fold(f64::INFINITY, f64::min)
}

/// Minimum H¹ distance between reported solutions (and their negatives).
pub const DISTINCT_TOL: f64 = 1e-3;
const MULTIPLICITY_WIDTHS: [f64; 3] = [0.3, 1.0, 0.1];

/// Iterated deflation for odd `f` and `μ = 0`.
///
/// At `λ = schedule[0]` a local minimax with the critical points found so far
/// as support, started from a seed with as many sign changes as there are
/// known points, feeds a Newton solve deflated against `±` those points.
/// Each new point joins the support and is carried down the schedule; its
/// branch counts when the deflated Newton solve at `λ = 0` started from the
/// extrapolated limit stays close to that limit. Branches that blow up as
/// `λ → 0` are reported in the diagnostics. Returns fewer than `count`
/// solutions when the attempt budget runs out.
pub fn multiplicity_search(
    params: &ModelParams,
    grid: &std::sync::Arc<RadialGrid>,
    count: usize,
    schedule: &[f64],
    opts: &SolveOptions,
) -> Result<Multiplicity> {
    if params.mode() == Mode::Critical || params.mu != 0.0 {
        return Err(Error::invalid("multiplicity search requires μ = 0"));
    }
    if !params.nonlinearity.is_odd() {
        return Err(Error::invalid("multiplicity search requires an odd nonlinearity"));
    }
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    let first = params.with_lambda(*schedule.first().ok_or_else(|| Error::invalid("empty λ schedule"))?)?;
    let base = params.with_lambda(0.0)?;
    let deflated = |list: Vec<RadialField>| SolveOptions {
        deflation: list,
        deflate_negatives: true,
        ..opts.clone()
    };
    let mut support: Vec<RadialField> = Vec::new();
    let mut found: Vec<(Solution, Seed)> = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = 0;
    while found.len() < count && support.len() < 2 * count + 2 {
        let Some(&sigma) = MULTIPLICITY_WIDTHS.get(failures) else { break };
        let seed = Seed {
            alpha: 1.0,
            sigma,
            nodes: support.len() as u32,
        };
        let at_first = local_minimax(&first, &seed.field(grid), &support, opts).and_then(|m| {
            refine_to_critical(&m.peak.eval.u, &first, &deflated(support.clone()))
        });
        let at_first = match at_first {
            Ok(sol) if distance_to(grid, &sol.u, &support) > DISTINCT_TOL => sol,
            Ok(_) => {
                diagnostics.push(format!("{seed:?}: converged to a known point at λ = {}", first.lambda));
                failures += 1;
                continue;
            }
            Err(err) => {
                diagnostics.push(format!("{seed:?}: solve at λ = {}: {err}", first.lambda));
                failures += 1;
                continue;
            }
        };
        failures = 0;
        support.push(at_first.u.clone());
        let known: Vec<RadialField> = found.iter().map(|(s, _)| s.u.clone()).collect();
        match carry_to_zero(&base, schedule, &at_first.u, &deflated(known.clone()), opts) {
            Ok(sol) if distance_to(grid, &sol.u, &known) > DISTINCT_TOL => found.push((sol, seed)),
            Ok(_) => diagnostics.push(format!(
                "{seed:?}: branch from energy {:.6e} at λ = {} reaches a known solution",
                at_first.energy.total, first.lambda
            )),
            Err(err) => diagnostics.push(format!(
                "{seed:?}: branch from energy {:.6e} at λ = {} discarded: {err}",
                at_first.energy.total, first.lambda
            )),
        }
    }
    found.sort_by(|a, b| a.0.energy.total.total_cmp(&b.0.energy.total));
    for w in found.windows(2) {
        if !(w[1].0.energy.total > w[0].0.energy.total) {
            diagnostics.push(format!(
                "energies not strictly increasing: {} then {}",
                w[0].0.energy.total, w[1].0.energy.total
            ));
        }
    }
    if found.len() < count {
        diagnostics.push(format!("found {} of {count} requested solutions", found.len()));
    }
    let (solutions, seeds) = found.into_iter().unzip();
    Ok(Multiplicity {
        solutions,
        seeds,
        diagnostics,
    })
}

/// Relative H¹ distance allowed between the extrapolated limit of a branch
/// and the solution Newton reaches from it.
const LIMIT_DRIFT: f64 = 0.1;

fn carry_to_zero(
    base: &ModelParams,
    schedule: &[f64],
    start: &RadialField,
    final_opts: &SolveOptions,
    opts: &SolveOptions,
) -> Result<Solution> {
    let grid = start.grid().clone();
    let continuation = continue_lambda(base, schedule, start, opts)?;
    if let Some(reason) = continuation.failure {
        return Err(Error::SearchFailed(format!("continuation: {reason}")));
    }
    let limit = continuation
        .limit
        .ok_or_else(|| Error::invalid("continuation needs at least two λ values"))?;
    let sol = refine_to_critical(&limit.u_limit, base, final_opts)
        .map_err(|err| Error::SearchFailed(format!("solve at λ = 0: {err}")))?;
    if !sol.converged {
        return Err(Error::SearchFailed("limit solution failed certification".into()));
    }
    let drift = distance_to(&grid, &sol.u, std::slice::from_ref(&limit.u_limit));
    if drift > LIMIT_DRIFT * h1_norm(&grid, limit.u_limit.values()) {
        return Err(Error::SearchFailed(format!(
            "no limit as λ → 0 (Newton moved {drift:.3e} from the extrapolated limit)"
        )));
    }
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::build_grid;
    use crate::nonlinearity::Nonlinearity;
    use std::sync::{Arc, OnceLock};

    fn grid() -> Arc<RadialGrid> {
        build_grid(20.0, 801, 2.0).unwrap()
    }

    fn cubic(lambda: f64) -> ModelParams {
        ModelParams::subcritical(Nonlinearity::power(3.0, 3.9), lambda, Some(4.5)).unwrap()
    }

    /// Converged critical point of `I_{1/2}` shared by several tests.
    fn half_solution() -> &'static Solution {
        static SOL: OnceLock<Solution> = OnceLock::new();
        SOL.get_or_init(|| {
            let params = cubic(0.5);
            let opts = SolveOptions::default();
            let e = Seed::gaussian(1.0, 1.0).field(&grid());
            let geo = verify_mp_geometry(&params, &e, 3).unwrap();
            let cand = mp_candidate(&params, &geo.e_escape, &opts).unwrap();
            refine_to_critical(&cand.u_peak, &params, &opts).unwrap()
        })
    }

    fn sign_changes(u: &RadialField) -> usize {
        let vals: Vec<f64> = u.values().iter().copied().filter(|v| v.abs() > 1e-12).collect();
        vals.windows(2).filter(|w| w[0] * w[1] < 0.0).count()
    }

    #[test]
    fn seeds_have_requested_sign_changes() {
        let g = grid();
        for nodes in 0..6 {
            let u = Seed { alpha: 1.0, sigma: 0.5, nodes }.field(&g);
            assert_eq!(sign_changes(&u), nodes as usize);
            assert!((u.values()[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_is_geometric() {
        let s = geometric_schedule(12);
        assert_eq!(s.len(), 13);
        assert_eq!(s[0], 1.0);
        assert_eq!(*s.last().unwrap(), 2f64.powi(-12));
    }

    #[test]
    fn options_are_validated() {
        let bad = SolveOptions { tol_grad: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { path_points: 3, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions {
            step_rule: StepRule { shrink: 1.5, ..Default::default() },
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn geometry_certificate_is_uniform_in_lambda() {
        let params = cubic(1.0);
        let e = Seed::gaussian(1.0, 1.0).field(&grid());
        let geo = verify_mp_geometry(&params, &e, 0).unwrap();
        assert!(geo.delta > 0.0 && geo.rho > 0.0);
        for lambda in [1.0, 0.5, 0.25, 1e-3] {
            assert!(geo.revalidate(&cubic(lambda)).unwrap(), "λ = {lambda}");
        }
    }

    #[test]
    fn zero_seed_is_rejected() {
        let e = RadialField::zeros(grid());
        assert!(matches!(
            verify_mp_geometry(&cubic(0.5), &e, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn peak_energies_never_increase() {
        let params = cubic(0.5);
        let e = Seed::gaussian(2.0, 0.3).field(&grid());
        let geo = verify_mp_geometry(&params, &e, 1).unwrap();
        let cand = mp_candidate(&params, &geo.e_escape, &SolveOptions::default()).unwrap();
        for w in cand.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(cand.c_estimate >= geo.delta);
        assert!(cand.c_estimate <= cand.initial_peak);
        assert!(cand.initial_peak <= cand.initial_upper);
    }

    #[test]
    fn newton_from_peak_certifies() {
        let sol = half_solution();
        assert!(sol.converged);
        assert!(sol.residuals.grad < 1e-6);
        assert!(sol.residuals.pohozaev < 1e-3);
        assert!(sol.residuals.nehari < 1e-6 * sol.norm * sol.norm);
        assert!(sol.energy.total > 0.0);
    }

    #[test]
    fn converged_start_is_a_fixed_point() {
        let sol = half_solution();
        let again = refine_to_critical(&sol.u, &cubic(0.5), &SolveOptions::default()).unwrap();
        assert_eq!(again.trace.len(), 1);
        assert_eq!(again.u.values(), sol.u.values());
    }

    #[test]
    fn zero_start_is_trivial() {
        let u = RadialField::zeros(grid());
        assert!(matches!(
            refine_to_critical(&u, &cubic(0.5), &SolveOptions::default()),
            Err(Error::TrivialLimit { .. })
        ));
    }

    #[test]
    fn perturbation_terms_match_definition() {
        let sol = half_solution();
        let base = Evaluation::new(&sol.u, &cubic(0.0)).unwrap();
        let pert = Evaluation::new(&sol.u, &cubic(0.5)).unwrap();
        let it = &pert.integrals;
        let expected = -(0.5 / 3.0) * it.mass.powf(1.5) + 0.5 / 5.5 * it.power;
        let diff = base.value.total - pert.value.total;
        assert!((diff - expected).abs() < 1e-12 * expected.abs().max(1.0), "{diff} vs {expected}");
    }

    #[test]
    fn continuation_rejects_bad_schedules() {
        let sol = half_solution();
        let opts = SolveOptions::default();
        for schedule in [vec![], vec![0.5, 0.5], vec![0.25, 0.5], vec![2.0, 1.0], vec![1e-3, 1e-5]] {
            assert!(continue_lambda(&cubic(0.5), &schedule, &sol.u, &opts).is_err(), "{schedule:?}");
        }
    }

    #[test]
    fn richardson_is_exact_for_quadratic_branches() {
        let g = grid();
        let a = RadialField::from_fn(g.clone(), |r| (-r * r).exp());
        let b = RadialField::from_fn(g.clone(), |r| r * (-r).exp());
        let c = RadialField::from_fn(g.clone(), |r| 1.0 / (1.0 + r * r));
        let sol = half_solution();
        let branch: Vec<Solution> = [0.4, 0.2, 0.1]
            .iter()
            .map(|&l| {
                let u = a.lin_comb(1.0, &b, l).unwrap().lin_comb(1.0, &c, l * l).unwrap();
                Solution { u, lambda: l, ..sol.clone() }
            })
            .collect();
        let limit = extrapolate_to_zero(&branch).unwrap();
        for (x, y) in limit.values().iter().zip(a.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deflation_vanishes_far_away() {
        let g = grid();
        let u = Seed::gaussian(1.0, 1.0).field(&g);
        let far = u.scaled(1e4);
        let opts = SolveOptions {
            deflation: vec![far],
            ..Default::default()
        };
        let (log_m, _) = deflation_terms(&g, u.values(), &vec![0.0; g.len()], &opts);
        assert!(log_m < 1e-6);
    }
}
