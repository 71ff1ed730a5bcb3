//! Reduced functionals `I`, `I_λ`, `J_λ`, their first variations, and the
//! identity residuals used as solution certificates.
//!
//! All functionals share one finite-element discretization: piecewise-linear
//! `u` with exact shell volumes for `∫|∇u|²`, lumped mass for every local
//! term, and the exact discrete Born–Infeld minimizer for the nonlocal part.
//! Differentiating the discrete functional therefore gives exactly the
//! discrete weak form, with `φ_u` held fixed.

use serde::Serialize;

use crate::born_infeld::DiscreteReduction;
use crate::error::{Error, Result};
use crate::grid::{RadialField, RadialGrid};
use crate::linalg::Tridiagonal;
use crate::nonlinearity::{check_ranges, Nonlinearity};

/// Which functional a parameter set selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mode {
    /// `I` (with its sextic term when `μ > 0`).
    Unperturbed,
    /// `I_λ = I + (λ/3)‖u‖₂³ - λ/(q+1)‖u‖_{q+1}^{q+1}`.
    Perturbed,
    /// `J_λ = I + (λ/3)‖u‖₂³` with `μ > 0`.
    Critical,
}

#[derive(Debug, Clone)]
pub struct ModelParams {
    pub nonlinearity: Nonlinearity,
    pub mu: f64,
    pub lambda: f64,
    pub q: Option<f64>,
}

impl ModelParams {
    /// `μ = 0`; `q` is required when `λ > 0`.
    pub fn subcritical(nonlinearity: Nonlinearity, lambda: f64, q: Option<f64>) -> Result<Self> {
        let params = Self {
            nonlinearity,
            mu: 0.0,
            lambda,
            q,
        };
        params.validate()?;
        Ok(params)
    }

    /// `μ = 1`, no `q`-term.
    pub fn critical(nonlinearity: Nonlinearity, lambda: f64) -> Result<Self> {
        let params = Self {
            nonlinearity,
            mu: 1.0,
            lambda,
            q: None,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_ranges(&self.nonlinearity)?;
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return Err(Error::invalid(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!(
                "lambda must satisfy λ ∈ (0,1] (or 0 for the unperturbed functional), got {}",
                self.lambda
            )));
        }
        let p = self.nonlinearity.p();
        if self.mu > 0.0 {
            if self.q.is_some() {
                return Err(Error::invalid("q is not used in critical mode"));
            }
        } else {
            match self.q {
                Some(q) => {
                    let lo = p.max(4.0);
                    if !(q > lo && q < 5.0) {
                        return Err(Error::invalid(format!(
                            "q must exceed max{{p,4}} = {lo} and stay below 5, got {q}"
                        )));
                    }
                }
                None if self.lambda > 0.0 => {
                    return Err(Error::invalid("q is required when lambda > 0 and mu = 0"));
                }
                None => {}
            }
        }
        Ok(())
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        let params = Self {
            lambda,
            ..self.clone()
        };
        params.validate()?;
        Ok(params)
    }

    pub fn mode(&self) -> Mode {
        if self.lambda == 0.0 {
            Mode::Unperturbed
        } else if self.mu > 0.0 {
            Mode::Critical
        } else {
            Mode::Perturbed
        }
    }

    /// Exponent `q` when the `λ|u|^{q+1}` term is active.
    fn power_term(&self) -> Option<f64> {
        if self.mu == 0.0 && self.lambda > 0.0 {
            self.q
        } else {
            None
        }
    }
}

/// Raw integrals of a state in the solver discretization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Integrals {
    /// `∫|∇u|²`.
    pub gradient: f64,
    /// `∫u²`.
    pub mass: f64,
    /// `∫φ_u u²`.
    pub coupling: f64,
    /// `∫(1-√(1-|∇φ_u|²))`.
    pub curvature: f64,
    /// `∫F(u)`.
    pub primitive: f64,
    /// `∫f(u)u`.
    pub work: f64,
    /// `∫u⁶`.
    pub sextic: f64,
    /// `∫|u|^{q+1}`, zero when no `q` is set.
    pub power: f64,
}

/// Signed contributions to the functional.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyParts {
    /// `½∫(|∇u|²+u²)`.
    pub kinetic_mass: f64,
    /// `½∫φ_u u²`.
    pub coupling: f64,
    /// `-½∫(1-√(1-|∇φ_u|²))`.
    pub curvature: f64,
    /// `-∫F(u)`.
    pub nonlinear: f64,
    /// `-(μ/6)∫u⁶`.
    pub critical: f64,
    /// `(λ/3)‖u‖₂³`.
    pub lambda_mass: f64,
    /// `-λ/(q+1)∫|u|^{q+1}`.
    pub lambda_power: f64,
}

impl EnergyParts {
    pub fn sum(&self) -> f64 {
        self.kinetic_mass
            + self.coupling
            + self.curvature
            + self.nonlinear
            + self.critical
            + self.lambda_mass
            + self.lambda_power
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalValue {
    pub total: f64,
    pub parts: EnergyParts,
}

/// A state evaluated once: reduction, integrals and functional value.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub u: RadialField,
    pub params: ModelParams,
    pub reduction: DiscreteReduction,
    pub integrals: Integrals,
    pub value: FunctionalValue,
}

impl Evaluation {
    pub fn new(u: &RadialField, params: &ModelParams) -> Result<Self> {
        params.validate()?;
        if u.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state contains non-finite values".into()));
        }
        let grid = u.grid();
        let v = u.values();
        let m = grid.mass();
        let k = grid.shells();
        let nl = &params.nonlinearity;
        let reduction = DiscreteReduction::new(u);
        let gradient = (0..grid.len() - 1)
            .map(|j| {
                let h = grid.step(j);
                k[j] * (v[j + 1] - v[j]).powi(2) / (h * h)
            })
            .sum();
        let mut it = Integrals {
            gradient,
            coupling: reduction.coupling,
            curvature: reduction.curvature,
            ..Integrals::default()
        };
        let q = params.q;
        for (mi, &ui) in m.iter().zip(v) {
            let u2 = ui * ui;
            it.mass += mi * u2;
            it.primitive += mi * nl.primitive(ui);
            it.work += mi * nl.f(ui) * ui;
            it.sextic += mi * u2 * u2 * u2;
            if let Some(q) = q {
                it.power += mi * ui.abs().powf(q + 1.0);
            }
        }
        let lambda = params.lambda;
        let mut parts = EnergyParts {
            kinetic_mass: 0.5 * (it.gradient + it.mass),
            coupling: 0.5 * it.coupling,
            curvature: -0.5 * it.curvature,
            nonlinear: -it.primitive,
            critical: -params.mu / 6.0 * it.sextic,
            lambda_mass: lambda / 3.0 * it.mass.powf(1.5),
            lambda_power: 0.0,
        };
        if let Some(q) = params.power_term() {
            parts.lambda_power = -lambda / (q + 1.0) * it.power;
        }
        let value = FunctionalValue {
            total: parts.sum(),
            parts,
        };
        if !value.total.is_finite() {
            return Err(Error::NonFinite("functional value".into()));
        }
        Ok(Self {
            u: u.clone(),
            params: params.clone(),
            reduction,
            integrals: it,
            value,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        self.u.grid()
    }

    /// Nodal weak-form residual `r_i = I'(u)[e_i]` for the hat functions `e_i`.
    pub fn nodal_residual(&self) -> Vec<f64> {
        let grid = self.u.grid();
        let n = grid.len();
        let v = self.u.values();
        let m = grid.mass();
        let k = grid.shells();
        let nl = &self.params.nonlinearity;
        let lambda = self.params.lambda;
        let mass_coeff = lambda * self.integrals.mass.sqrt();
        let power_q = self.params.power_term();
        let mu = self.params.mu;
        let mut r = vec![0.0; n];
        for j in 0..n - 1 {
            let h = grid.step(j);
            let flux = k[j] * (v[j + 1] - v[j]) / (h * h);
            r[j] -= flux;
            r[j + 1] += flux;
        }
        for i in 0..n {
            let ui = v[i];
            let mut local = ui + self.reduction.phi[i] * ui + mass_coeff * ui - nl.f(ui);
            if let Some(q) = power_q {
                local -= lambda * ui.abs().powf(q - 1.0) * ui;
            }
            if mu > 0.0 {
                local -= mu * ui.powi(5);
            }
            r[i] += m[i] * local;
        }
        r
    }

    /// Second variation applied to `w` (nodal values).
    pub fn hessian_apply(&self, w: &[f64]) -> Vec<f64> {
        let grid = self.u.grid();
        let n = grid.len();
        let v = self.u.values();
        let m = grid.mass();
        let k = grid.shells();
        let nl = &self.params.nonlinearity;
        let lambda = self.params.lambda;
        let mass = self.integrals.mass;
        let sqrt_mass = mass.sqrt();
        let power_q = self.params.power_term();
        let mu = self.params.mu;
        let mut out = vec![0.0; n];
        for j in 0..n - 1 {
            let h = grid.step(j);
            let flux = k[j] * (w[j + 1] - w[j]) / (h * h);
            out[j] -= flux;
            out[j + 1] += flux;
        }
        let dphi = self.reduction.potential_derivative(&self.u, w);
        let muw: f64 = (0..n).map(|i| m[i] * v[i] * w[i]).sum();
        let rank_one = if sqrt_mass > 0.0 {
            lambda * muw / sqrt_mass
        } else {
            0.0
        };
        for i in 0..n {
            let ui = v[i];
            let mut diag = 1.0 + self.reduction.phi[i] + lambda * sqrt_mass - nl.derivative(ui);
            if let Some(q) = power_q {
                diag -= lambda * q * ui.abs().powf(q - 1.0);
            }
            if mu > 0.0 {
                diag -= 5.0 * mu * ui.powi(4);
            }
            out[i] += m[i] * (diag * w[i] + ui * dphi[i] + rank_one * ui);
        }
        out
    }

    /// `I'(u)[u]`.
    pub fn nehari(&self) -> f64 {
        let it = &self.integrals;
        let lambda = self.params.lambda;
        let mut value = it.gradient + it.mass + it.coupling + lambda * it.mass.powf(1.5) - it.work
            - self.params.mu * it.sextic;
        if self.params.power_term().is_some() {
            value -= lambda * it.power;
        }
        value
    }

    /// Both sides of the Pohozaev identity matching the mode.
    pub fn pohozaev_sides(&self) -> (f64, f64) {
        let it = &self.integrals;
        let lambda = self.params.lambda;
        let lhs = 0.5 * it.gradient + 1.5 * it.mass + 2.0 * it.coupling - 1.5 * it.curvature
            + 1.5 * lambda * it.mass.powf(1.5);
        let mut rhs = 3.0 * it.primitive + 0.5 * self.params.mu * it.sextic;
        if let Some(q) = self.params.power_term() {
            rhs += 3.0 * lambda / (q + 1.0) * it.power;
        }
        (lhs, rhs)
    }

    pub fn pohozaev_residual(&self) -> f64 {
        let (lhs, rhs) = self.pohozaev_sides();
        (lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1.0)
    }

    /// `‖u‖² = ∫(|∇u|²+u²)`.
    pub fn norm_sq(&self) -> f64 {
        self.integrals.gradient + self.integrals.mass
    }
}

/// `(K + M)` on the nodes `0..N-1` with the Dirichlet node removed.
pub fn h1_matrix(grid: &RadialGrid) -> Tridiagonal {
    let n = grid.len() - 1;
    let k = grid.shells();
    let m = grid.mass();
    let mut diag: Vec<f64> = m[..n].to_vec();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for j in 0..n {
        let h = grid.step(j);
        let kappa = k[j] / (h * h);
        diag[j] += kappa;
        if j + 1 < n {
            diag[j + 1] += kappa;
            off[j] = -kappa;
        }
    }
    Tridiagonal {
        lower: off.clone(),
        diag,
        upper: off,
    }
}

/// Riesz representative of the first variation in the discrete H¹ product.
#[derive(Debug, Clone)]
pub struct Gradient {
    pub field: RadialField,
    /// `√(gᵀ(K+M)g)`, the dual norm of the residual.
    pub dual_norm: f64,
}

pub fn gradient_of(eval: &Evaluation) -> Result<Gradient> {
    let grid = eval.u.grid();
    let n = grid.len();
    let r = eval.nodal_residual();
    let a = h1_matrix(grid);
    let mut g = a.solve(&r[..n - 1])?;
    let dual = g.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>().max(0.0).sqrt();
    g.push(0.0);
    Ok(Gradient {
        field: RadialField::new(grid.clone(), g)?,
        dual_norm: dual,
    })
}

pub fn eval_functional(u: &RadialField, params: &ModelParams) -> Result<FunctionalValue> {
    Ok(Evaluation::new(u, params)?.value)
}

pub fn first_variation(u: &RadialField, v: &RadialField, params: &ModelParams) -> Result<f64> {
    u.check_grid(v)?;
    let r = Evaluation::new(u, params)?.nodal_residual();
    Ok(r.iter().zip(v.values()).map(|(a, b)| a * b).sum())
}

pub fn gradient_field(u: &RadialField, params: &ModelParams) -> Result<RadialField> {
    Ok(gradient_of(&Evaluation::new(u, params)?)?.field)
}

pub fn pohozaev_residual(u: &RadialField, params: &ModelParams) -> Result<f64> {
    Ok(Evaluation::new(u, params)?.pohozaev_residual())
}

pub fn nehari_residual(u: &RadialField, params: &ModelParams) -> Result<f64> {
    Ok(Evaluation::new(u, params)?.nehari())
}

/// `e_t(r) = t² e(tr)`, zero beyond `R_max/t`.
pub fn scaling_path(e: &RadialField, t: f64) -> Result<RadialField> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("scaling parameter must be positive, got {t}")));
    }
    let grid = e.grid().clone();
    let values = grid.nodes().iter().map(|&r| t * t * e.sample(t * r)).collect();
    RadialField::new(grid, values)
}

/// `J(u) = ½‖u‖² - ∫F(u) - 1/(q+1)∫|u|^{q+1}`, a lower bound for every
/// `I_λ` with `λ ∈ (0,1]`.
pub fn auxiliary_j(u: &RadialField, params: &ModelParams) -> Result<f64> {
    let q = params
        .q
        .ok_or_else(|| Error::invalid("auxiliary functional needs q"))?;
    let base = Evaluation::new(u, &params.with_lambda(0.0)?)?;
    let it = &base.integrals;
    let power: f64 = u
        .grid()
        .mass()
        .iter()
        .zip(u.values())
        .map(|(m, v)| m * v.abs().powf(q + 1.0))
        .sum();
    Ok(0.5 * (it.gradient + it.mass) - it.primitive - power / (q + 1.0))
}

/// Coefficients of the `b = 2` lower bound for the energy of a critical
/// point, one per integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoercivityCoefficients {
    pub gradient: f64,
    pub mass: f64,
    pub coupling: f64,
    pub lambda_mass: f64,
    pub lambda_power: f64,
    pub sextic: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoercivityCertificate {
    pub coefficients: CoercivityCoefficients,
    pub lower_bound: f64,
    pub energy: f64,
    /// `C = min(coefficient of ∫|∇u|², coefficient of ∫u²)`.
    pub constant: f64,
    pub norm_sq: f64,
    pub holds: bool,
}

pub fn coercivity_coefficients(params: &ModelParams) -> CoercivityCoefficients {
    let b = 2.0;
    let a = 1.0 - b;
    let rho = params.nonlinearity.varrho();
    let q = params.power_term();
    CoercivityCoefficients {
        gradient: 1.0 / 3.0 + b * (rho - 6.0) / (6.0 * rho),
        mass: b / 2.0 - b / rho,
        coupling: 0.5 - 2.0 * a / 3.0 - b / rho - b / 4.0,
        lambda_mass: 1.0 / 3.0 - a / 2.0 - b / rho,
        lambda_power: q.map_or(0.0, |q| a / (q + 1.0) + b / rho - 1.0 / (q + 1.0)),
        sextic: params.mu * (-1.0 / 6.0 + a / 6.0 + b / rho),
    }
}

/// Evaluates the lower bound line by line at a (numerical) critical point.
/// `slack` absorbs discretization error in the identities the bound uses.
pub fn coercivity_certificate(eval: &Evaluation, slack: f64) -> CoercivityCertificate {
    let c = coercivity_coefficients(&eval.params);
    let it = &eval.integrals;
    let lambda = eval.params.lambda;
    let lower_bound = c.gradient * it.gradient
        + c.mass * it.mass
        + c.coupling * it.coupling
        + c.lambda_mass * lambda * it.mass.powf(1.5)
        + c.lambda_power * lambda * it.power
        + c.sextic * it.sextic;
    let constant = c.gradient.min(c.mass);
    let energy = eval.value.total;
    let positive = [c.gradient, c.mass, c.coupling, c.lambda_mass]
        .iter()
        .all(|&x| x > 0.0)
        && c.lambda_power >= 0.0
        && c.sextic >= 0.0;
    let norm_sq = eval.norm_sq();
    CoercivityCertificate {
        coefficients: c,
        lower_bound,
        energy,
        constant,
        norm_sq,
        holds: positive
            && energy >= lower_bound - slack * energy.abs().max(1e-300)
            && lower_bound >= constant * norm_sq * (1.0 - 1e-12),
    }
}
