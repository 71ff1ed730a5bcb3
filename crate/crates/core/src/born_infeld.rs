//! The reduction map `u ↦ φ_u` for the Born–Infeld equation
//! `-div(∇φ/√(1-|∇φ|²)) = u²` in radial symmetry.
//!
//! Integrating the flux once gives `r²φ'/√(1-φ'²) = -Q(r)` with the enclosed
//! charge `Q(r) = ∫_0^r s²u² ds`, so `φ' = -Q/√(r⁴+Q²)` and φ follows by
//! integrating inward from infinity. Beyond `R_max` the charge is frozen at
//! `Q(R_max)`; the exterior integrals are smooth in `x = R_max/s` and are
//! evaluated with Gauss–Legendre.
//!
//! Two realizations are provided:
//!
//! * [`reduce`] returns a high-order [`BornInfeldPotential`] used for
//!   reporting and for the identity certificates.
//! * [`DiscreteReduction`] is the exact minimizer of the finite-element
//!   energy `E_u`. The variational solver uses it so that the envelope
//!   property `d/du[-½E_u(φ_u)] = φ_u u` holds for the discrete functional.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::grid::{integrate_with, RadialField};
use crate::quadrature::{running_integral, GaussLegendre};

/// Trial potentials with `‖ψ'‖_∞` above this bound are rejected.
pub const TRIAL_SLOPE_BOUND: f64 = 1.0 - 1e-12;

fn exterior_rule() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(48))
}

/// Closed-form exterior field of a frozen charge `q` (in `∫ s²u² ds` units)
/// outside radius `r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exterior {
    /// `φ(r) = ∫_r^∞ q/√(s⁴+q²) ds`.
    pub potential: f64,
    /// `d potential / dq`.
    pub potential_dq: f64,
    /// `∫_r^∞ 4πs² (1 - √(1-φ'²)) ds`.
    pub curvature: f64,
}

impl Exterior {
    pub fn new(r: f64, q: f64) -> Self {
        if q == 0.0 {
            let dq = exterior_rule().integrate(0.0, 1.0, |_| 1.0 / r);
            return Self {
                potential: 0.0,
                potential_dq: dq,
                curvature: 0.0,
            };
        }
        let r2 = r * r;
        let r4 = r2 * r2;
        let rule = exterior_rule();
        let potential = rule.integrate(0.0, 1.0, |x| q * r / (r4 + q * q * x.powi(4)).sqrt());
        let potential_dq =
            rule.integrate(0.0, 1.0, |x| r * r4 / (r4 + q * q * x.powi(4)).powf(1.5));
        let curvature = rule.integrate(0.0, 1.0, |x| {
            let root = (r4 + q * q * x.powi(4)).sqrt();
            4.0 * PI * r2 * r * q * q / (root * (root + r2))
        });
        Self {
            potential,
            potential_dq,
            curvature,
        }
    }

    /// Charge whose exterior potential at `r` equals `value`.
    pub fn charge_for_potential(r: f64, value: f64) -> f64 {
        if value == 0.0 {
            return 0.0;
        }
        let target = value.abs();
        // potential(q) is increasing and concave with potential ~ q/r for small q.
        let mut q = target * r;
        for _ in 0..200 {
            let ext = Exterior::new(r, q);
            let step = (ext.potential - target) / ext.potential_dq;
            let next = (q - step).max(0.5 * q);
            if (next - q).abs() <= 1e-15 * q.max(1e-300) {
                q = next;
                break;
            }
            q = next;
        }
        q.copysign(value)
    }
}

/// `φ_u` together with its derivative, the enclosed charge and the exterior
/// contribution at `R_max`.
#[derive(Debug, Clone)]
pub struct BornInfeldPotential {
    pub phi: RadialField,
    pub dphi: RadialField,
    /// `Q(r) = ∫_0^r s² u(s)² ds`.
    pub charge: RadialField,
    /// `φ(R_max)`, the potential generated outside the truncated domain.
    pub tail: f64,
}

impl BornInfeldPotential {
    pub fn total_charge(&self) -> f64 {
        *self.charge.values().last().unwrap_or(&0.0)
    }

    fn exterior(&self) -> Exterior {
        Exterior::new(self.phi.grid().r_max(), self.total_charge())
    }
}

/// `Q(r_i) = ∫_0^{r_i} s² u(s)² ds`.
pub fn cumulative_charge(u: &RadialField) -> RadialField {
    let r = u.grid().nodes();
    let g: Vec<f64> = r.iter().zip(u.values()).map(|(r, v)| r * r * v * v).collect();
    let mut q = running_integral(r, &g);
    // Monotone by construction in the continuum; clip interpolation wiggles.
    for i in 1..q.len() {
        if q[i] < q[i - 1] {
            q[i] = q[i - 1];
        }
    }
    RadialField::from_raw(u.grid().clone(), q)
}

/// Solves the Born–Infeld equation for the source `u²`.
pub fn reduce(u: &RadialField) -> BornInfeldPotential {
    let grid = u.grid().clone();
    let charge = cumulative_charge(u);
    let r = grid.nodes();
    let dphi: Vec<f64> = r
        .iter()
        .zip(charge.values())
        .map(|(&r, &q)| if q == 0.0 { 0.0 } else { -q / (r.powi(4) + q * q).sqrt() })
        .collect();
    let total = *charge.values().last().unwrap();
    let tail = Exterior::new(grid.r_max(), total).potential;
    let slope: Vec<f64> = dphi.iter().map(|d| -d).collect();
    let acc = running_integral(r, &slope);
    let inner = *acc.last().unwrap();
    let mut phi: Vec<f64> = acc.iter().map(|a| tail + (inner - a)).collect();
    for i in (0..phi.len() - 1).rev() {
        if phi[i] < phi[i + 1] {
            phi[i] = phi[i + 1];
        }
    }
    BornInfeldPotential {
        phi: RadialField::from_raw(grid.clone(), phi),
        dphi: RadialField::from_raw(grid, dphi),
        charge,
        tail,
    }
}

/// Candidate potential for the Born–Infeld energy `E_u`.
#[derive(Debug, Clone, Copy)]
pub enum TrialPotential<'a> {
    Reduced(&'a BornInfeldPotential),
    /// Nodal trial, read as its piecewise-linear interpolant (so the
    /// gradient term is exact per shell) and continued outside `R_max` by
    /// the least-energy exterior profile.
    Field(&'a RadialField),
}

/// `E_u(φ) = ∫(1-√(1-|∇φ|²)) - ∫φu²`.
pub fn energy_e(u: &RadialField, trial: TrialPotential<'_>) -> Result<f64> {
    match trial {
        TrialPotential::Reduced(p) => {
            u.check_grid(&p.phi)?;
            Ok(curvature_term(p) - integrate_with_product(&p.phi, u)?)
        }
        TrialPotential::Field(psi) => {
            u.check_grid(psi)?;
            let grid = psi.grid();
            let vals = psi.values();
            let slopes: Vec<f64> = (0..grid.len() - 1)
                .map(|j| (vals[j + 1] - vals[j]) / grid.step(j))
                .collect();
            let max_slope = slopes.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if max_slope > TRIAL_SLOPE_BOUND {
                return Err(Error::InadmissibleTrial { max_slope });
            }
            let interior: f64 = grid.shells().iter().zip(&slopes).map(|(k, g)| k * bi_density(*g)).sum();
            let boundary = *psi.values().last().unwrap();
            let r_max = psi.grid().r_max();
            let q = Exterior::charge_for_potential(r_max, boundary);
            let exterior = Exterior::new(r_max, q.abs()).curvature;
            Ok(interior + exterior - integrate_with_product(psi, u)?)
        }
    }
}

/// `1 - √(1-t²)` without cancellation.
fn bi_density(t: f64) -> f64 {
    let t2 = t * t;
    t2 / (1.0 + (1.0 - t2).max(0.0).sqrt())
}

fn integrate_with_product(phi: &RadialField, u: &RadialField) -> Result<f64> {
    phi.check_grid(u)?;
    Ok(phi
        .grid()
        .weights()
        .iter()
        .zip(phi.values().iter().zip(u.values()))
        .map(|(w, (p, v))| w * p * v * v)
        .sum())
}

/// `∫ φ_u u²`.
pub fn coupling_term(u: &RadialField, p: &BornInfeldPotential) -> Result<f64> {
    integrate_with_product(&p.phi, u)
}

/// `∫(1-√(1-|∇φ|²))` including the exterior field.
pub fn curvature_term(p: &BornInfeldPotential) -> f64 {
    integrate_with(&p.dphi, bi_density) + p.exterior().curvature
}

/// Relative mismatch in `∫|∇φ|²/√(1-|∇φ|²) = ∫φu²`; absolute when both
/// sides vanish.
pub fn bi_identity_residual(u: &RadialField, p: &BornInfeldPotential) -> Result<f64> {
    let lhs = integrate_with(&p.dphi, |t| t * t / (1.0 - t * t).sqrt())
        + 4.0 * PI * p.total_charge() * p.tail;
    let rhs = coupling_term(u, p)?;
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        return Ok((lhs - rhs).abs());
    }
    Ok((lhs - rhs).abs() / scale)
}

/// Exact minimizer of the finite-element Born–Infeld energy
///
/// ```text
/// E_u(φ) = Σ_j k_j (1 - √(1 - g_j²)) + E_ext(φ_{N-1}) - Σ_i m_i φ_i u_i²
/// ```
///
/// with interval slopes `g_j`, shell volumes `k_j` and lumped masses `m_i`.
/// Stationarity gives the flux balance `k_j g_j/(h_j√(1-g_j²)) = -C_j` with
/// `C_j = Σ_{i≤j} m_i u_i²`, solved in closed form.
#[derive(Debug, Clone)]
pub struct DiscreteReduction {
    pub phi: Vec<f64>,
    /// `C_j`, the lumped charge enclosed by interval `j` (includes 4π).
    pub enclosed: Vec<f64>,
    /// `a_j = h_j C_j / k_j`; the slope is `-a_j/√(1+a_j²)`.
    ratio: Vec<f64>,
    pub total_charge: f64,
    exterior: Exterior,
    /// `Σ k_j(1-√(1-g_j²)) + E_ext`.
    pub curvature: f64,
    /// `Σ m_i φ_i u_i²`.
    pub coupling: f64,
}

impl DiscreteReduction {
    pub fn new(u: &RadialField) -> Self {
        let grid = u.grid();
        let n = grid.len();
        let m = grid.mass();
        let k = grid.shells();
        let v = u.values();
        let mut enclosed = Vec::with_capacity(n - 1);
        let mut acc = 0.0;
        for j in 0..n - 1 {
            acc += m[j] * v[j] * v[j];
            enclosed.push(acc);
        }
        let total = acc + m[n - 1] * v[n - 1] * v[n - 1];
        let exterior = Exterior::new(grid.r_max(), total / (4.0 * PI));
        let ratio: Vec<f64> = (0..n - 1).map(|j| grid.step(j) * enclosed[j] / k[j]).collect();
        let mut phi = vec![0.0; n];
        phi[n - 1] = exterior.potential;
        let mut curvature = exterior.curvature;
        for j in (0..n - 1).rev() {
            let a = ratio[j];
            let root = (1.0 + a * a).sqrt();
            phi[j] = phi[j + 1] + grid.step(j) * a / root;
            curvature += k[j] * a * a / (root * (root + 1.0));
        }
        let coupling = m
            .iter()
            .zip(phi.iter().zip(v))
            .map(|(m, (p, u))| m * p * u * u)
            .sum();
        Self {
            phi,
            enclosed,
            ratio,
            total_charge: total,
            exterior,
            curvature,
            coupling,
        }
    }

    /// `E_u(φ_u)`; nonpositive.
    pub fn energy(&self) -> f64 {
        self.curvature - self.coupling
    }

    /// Directional derivative of `φ_u` with respect to `u` along `w`.
    pub fn potential_derivative(&self, u: &RadialField, w: &[f64]) -> Vec<f64> {
        let grid = u.grid();
        let n = grid.len();
        let m = grid.mass();
        let k = grid.shells();
        let v = u.values();
        let mut d_enclosed = 0.0;
        let mut ds = vec![0.0; n - 1];
        for j in 0..n - 1 {
            d_enclosed += 2.0 * m[j] * v[j] * w[j];
            let h = grid.step(j);
            let a = self.ratio[j];
            ds[j] = h * (h / k[j]) * (1.0 + a * a).powf(-1.5) * d_enclosed;
        }
        let d_total = d_enclosed + 2.0 * m[n - 1] * v[n - 1] * w[n - 1];
        let mut out = vec![0.0; n];
        out[n - 1] = self.exterior.potential_dq * d_total / (4.0 * PI);
        for j in (0..n - 1).rev() {
            out[j] = out[j + 1] + ds[j];
        }
        out
    }
}
