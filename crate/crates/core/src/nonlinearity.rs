//! Nonlinearities `f` with primitive `F(s) = ∫_0^s f`, and sampled checks of
//! the structural hypotheses (f1)–(f4).

use std::fmt;
use std::sync::{Arc, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{adaptive_simpson, GaussLegendre};

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lower-bound data `(D, r)` for (f4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBound {
    pub d: f64,
    pub r: f64,
}

#[derive(Clone)]
enum Kind {
    /// `coeff·|s|^{p-1}s`.
    Power { coeff: f64 },
    Custom {
        f: ScalarMap,
        primitive: Option<ScalarMap>,
        derivative: Option<ScalarMap>,
        table: Arc<PrimitiveTable>,
    },
}

#[derive(Clone)]
pub struct Nonlinearity {
    kind: Kind,
    p: f64,
    varrho: f64,
    lower: Option<LowerBound>,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::Power { coeff } => format!("power(coeff={coeff})"),
            Kind::Custom { .. } => "custom".to_string(),
        };
        fmt.debug_struct("Nonlinearity")
            .field("kind", &kind)
            .field("p", &self.p)
            .field("varrho", &self.varrho)
            .field("lower", &self.lower)
            .finish()
    }
}

impl Nonlinearity {
    /// `f(s) = |s|^{p-1}s`.
    pub fn power(p: f64, varrho: f64) -> Self {
        Self::scaled_power(1.0, p, varrho)
    }

    /// `f(s) = coeff·|s|^{p-1}s`.
    pub fn scaled_power(coeff: f64, p: f64, varrho: f64) -> Self {
        Self {
            kind: Kind::Power { coeff },
            p,
            varrho,
            lower: None,
        }
    }

    /// User-supplied `f`; `F` is tabulated by quadrature on a lattice.
    pub fn custom(f: ScalarMap, p: f64, varrho: f64) -> Self {
        Self {
            kind: Kind::Custom {
                table: Arc::new(PrimitiveTable::new(f.clone())),
                f,
                primitive: None,
                derivative: None,
            },
            p,
            varrho,
            lower: None,
        }
    }

    /// User-supplied pair `(f, F)`.
    pub fn custom_pair(f: ScalarMap, primitive: ScalarMap, p: f64, varrho: f64) -> Self {
        let mut nl = Self::custom(f, p, varrho);
        if let Kind::Custom { primitive: slot, .. } = &mut nl.kind {
            *slot = Some(primitive);
        }
        nl
    }

    /// Supplies `f'` for custom nonlinearities; otherwise it is differenced.
    pub fn with_derivative(mut self, df: ScalarMap) -> Self {
        if let Kind::Custom { derivative, .. } = &mut self.kind {
            *derivative = Some(df);
        }
        self
    }

    pub fn with_lower_bound(mut self, d: f64, r: f64) -> Self {
        self.lower = Some(LowerBound { d, r });
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn varrho(&self) -> f64 {
        self.varrho
    }

    pub fn lower_bound(&self) -> Option<LowerBound> {
        self.lower
    }

    /// Coefficient for pure powers, `None` for custom maps.
    pub fn power_coefficient(&self) -> Option<f64> {
        match self.kind {
            Kind::Power { coeff } => Some(coeff),
            Kind::Custom { .. } => None,
        }
    }

    pub fn f(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Power { coeff } => coeff * s.abs().powf(self.p - 1.0) * s,
            Kind::Custom { f, .. } => f(s),
        }
    }

    /// `F(s) = ∫_0^s f`.
    pub fn primitive(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Power { coeff } => coeff * s.abs().powf(self.p + 1.0) / (self.p + 1.0),
            Kind::Custom {
                primitive: Some(big_f),
                ..
            } => big_f(s),
            Kind::Custom { table, .. } => table.eval(s),
        }
    }

    /// `f'(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        match &self.kind {
            Kind::Power { coeff } => coeff * self.p * s.abs().powf(self.p - 1.0),
            Kind::Custom {
                derivative: Some(df),
                ..
            } => df(s),
            Kind::Custom { f, .. } => {
                let h = 1e-6 * s.abs().max(1e-3);
                (f(s + h) - f(s - h)) / (2.0 * h)
            }
        }
    }

    /// Sampled `C_ε = sup (|f(s)s| - εs²)/|s|^{p+1}`, so that
    /// `|f(s)s| ≤ εs² + C_ε|s|^{p+1}` on the lattice.
    pub fn small_norm_constant(&self, eps: f64) -> f64 {
        sample_points()
            .iter()
            .flat_map(|&s| [s, -s])
            .map(|s| ((self.f(s) * s).abs() - eps * s * s) / s.abs().powf(self.p + 1.0))
            .fold(0.0, f64::max)
    }

    /// Sampled oddness `f(-s) = -f(s)`.
    pub fn is_odd(&self) -> bool {
        match self.kind {
            Kind::Power { .. } => true,
            Kind::Custom { .. } => sample_points().iter().all(|&s| {
                let a = self.f(s);
                let b = self.f(-s);
                (a + b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
            }),
        }
    }
}

/// Lazily grown lattice of primitive values with Gauss–Legendre cells.
struct PrimitiveTable {
    f: ScalarMap,
    rule: GaussLegendre,
    positive: RwLock<Vec<f64>>,
    negative: RwLock<Vec<f64>>,
}

/// Cells of width 1/64 on [0, 4], then geometric with ratio 1 + 1/64.
const CELLS_PER_UNIT: f64 = 64.0;
const UNIFORM_CELLS: usize = 256;

fn cell_start(k: usize) -> f64 {
    if k <= UNIFORM_CELLS {
        k as f64 / CELLS_PER_UNIT
    } else {
        4.0 * (1.0 + 1.0 / CELLS_PER_UNIT).powi((k - UNIFORM_CELLS) as i32)
    }
}

fn cell_index(x: f64) -> usize {
    if x < 4.0 {
        (x * CELLS_PER_UNIT).floor() as usize
    } else {
        let k = UNIFORM_CELLS + ((x / 4.0).ln() / (1.0 / CELLS_PER_UNIT).ln_1p()).floor() as usize;
        // Guard against rounding at cell boundaries.
        if cell_start(k) > x {
            k - 1
        } else if cell_start(k + 1) <= x {
            k + 1
        } else {
            k
        }
    }
}

impl PrimitiveTable {
    fn new(f: ScalarMap) -> Self {
        Self {
            f,
            rule: GaussLegendre::new(8),
            positive: RwLock::new(vec![0.0]),
            negative: RwLock::new(vec![0.0]),
        }
    }

    fn eval(&self, s: f64) -> f64 {
        if !s.is_finite() {
            return f64::NAN;
        }
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let x = s.abs();
        let k = cell_index(x);
        let lattice = if sign > 0.0 { &self.positive } else { &self.negative };
        let base = lattice.read().unwrap().get(k).copied();
        let base = match base {
            Some(v) => v,
            None => {
                let mut write = lattice.write().unwrap();
                while write.len() <= k {
                    let j = write.len() - 1;
                    let cell = self
                        .rule
                        .integrate(cell_start(j), cell_start(j + 1), |t| (self.f)(sign * t));
                    let next = write[j] + sign * cell;
                    write.push(next);
                }
                write[k]
            }
        };
        base + sign * self.rule.integrate(cell_start(k), x, |t| (self.f)(sign * t))
    }
}

/// Outcome of one sampled hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub passed: bool,
    /// Sample point where the check failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    /// Fitted constant of (f2).
    pub growth_constant: f64,
    /// Largest relative mismatch between `F` and adaptive quadrature of `f`.
    pub primitive_error: f64,
}

impl HypothesisReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn sample_points() -> Vec<f64> {
    (0..=144).map(|k| 10f64.powf(-12.0 + k as f64 / 8.0)).collect()
}

/// Parameter ranges: `p ∈ (2,5)`, `ϱ ∈ (3,4)` and, with (f4) data,
/// `D > 0`, `r ∈ (2,6)`.
pub fn check_ranges(nl: &Nonlinearity) -> Result<()> {
    if !(nl.p > 2.0 && nl.p < 5.0) {
        return Err(Error::invalid(format!("p must lie in (2,5), got {}", nl.p)));
    }
    if !(nl.varrho > 3.0 && nl.varrho < 4.0) {
        return Err(Error::invalid(format!("varrho must lie in (3,4), got {}", nl.varrho)));
    }
    if let Some(lb) = nl.lower {
        if !(lb.d > 0.0 && lb.d.is_finite()) {
            return Err(Error::invalid(format!("D must be positive, got {}", lb.d)));
        }
        if !(lb.r > 2.0 && lb.r < 6.0) {
            return Err(Error::invalid(format!("r must lie in (2,6), got {}", lb.r)));
        }
    }
    if let Kind::Power { coeff } = nl.kind {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(Error::invalid(format!("power coefficient must be positive, got {coeff}")));
        }
    }
    Ok(())
}

/// Samples (f1)–(f4) on a log-spaced lattice `s ∈ [1e-12, 1e6]`.
///
/// (f3) is checked for `s > 0` only. (f4) is checked in the integrated form
/// `F(t) ≥ (D/r)t^r`, which is the bound the level estimate consumes.
pub fn validate_hypotheses(nl: &Nonlinearity) -> Result<HypothesisReport> {
    check_ranges(nl)?;
    let pts = sample_points();
    for &s in &pts {
        for v in [nl.f(s), nl.f(-s), nl.primitive(s), nl.primitive(-s)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("nonlinearity sample at s = ±{s:e}")));
            }
        }
    }
    let mut checks = Vec::new();

    // (f1): f(s)/s must decay along s → 0 on both sides.
    let small: Vec<f64> = pts.iter().copied().filter(|&s| s <= 1e-2).collect();
    let mut f1_witness = None;
    let mut worst_ratio: f64 = 0.0;
    for &s in small.iter().take(8) {
        for x in [s, -s] {
            let ratio = (nl.f(x) / x).abs();
            if ratio > worst_ratio {
                worst_ratio = ratio;
                if ratio > 1e-3 {
                    f1_witness = Some(x);
                }
            }
        }
    }
    let tail_ok = {
        let a = (nl.f(1e-12) / 1e-12).abs();
        let b = (nl.f(1e-6) / 1e-6).abs();
        a <= b.max(1e-3)
    };
    let f1_ok = f1_witness.is_none() && tail_ok;
    checks.push(HypothesisCheck {
        name: "f1".into(),
        passed: f1_ok,
        witness: if f1_ok { None } else { f1_witness.or(Some(1e-12)) },
        detail: format!("max |f(s)/s| for |s| ≤ 1e-11 is {worst_ratio:.3e}"),
    });

    // (f2): fit C on |s| ≤ 1e3, confirm with margin 2 up to 1e6.
    let bound = |s: f64| nl.f(s).abs() / (1.0 + s.abs().powf(nl.p));
    let growth_constant = pts
        .iter()
        .filter(|&&s| s <= 1e3)
        .flat_map(|&s| [bound(s), bound(-s)])
        .fold(0.0_f64, f64::max);
    let f2_witness = pts
        .iter()
        .filter(|&&s| s > 1e3)
        .flat_map(|&s| [s, -s])
        .find(|&s| bound(s) > 2.0 * growth_constant.max(1e-300));
    checks.push(HypothesisCheck {
        name: "f2".into(),
        passed: f2_witness.is_none(),
        witness: f2_witness,
        detail: format!("fitted C = {growth_constant:.6e}"),
    });

    // (f3): 0 < ϱF(s) ≤ f(s)s for s > 0.
    let f3_witness = pts.iter().copied().find(|&s| {
        let lhs = nl.varrho * nl.primitive(s);
        let rhs = nl.f(s) * s;
        !(lhs > 0.0 && lhs <= rhs * (1.0 + 1e-12))
    });
    checks.push(HypothesisCheck {
        name: "f3".into(),
        passed: f3_witness.is_none(),
        witness: f3_witness,
        detail: format!("varrho = {}", nl.varrho),
    });

    if let Some(LowerBound { d, r }) = nl.lower {
        let f4_witness = pts
            .iter()
            .copied()
            .find(|&t| nl.primitive(t) < d / r * t.powf(r) * (1.0 - 1e-12));
        checks.push(HypothesisCheck {
            name: "f4".into(),
            passed: f4_witness.is_none(),
            witness: f4_witness,
            detail: format!("F(t) ≥ ({d}/{r}) t^{r}"),
        });
    }

    let mut primitive_error: f64 = 0.0;
    for &s in pts.iter().filter(|&&s| (1e-3..=1e2).contains(&s)).step_by(4) {
        for x in [s, -s] {
            let reference = adaptive_simpson(&|t| nl.f(t), 0.0, x, 1e-12);
            let got = nl.primitive(x);
            let scale = reference.abs().max(1e-300);
            primitive_error = primitive_error.max((got - reference).abs() / scale);
        }
    }
    checks.push(HypothesisCheck {
        name: "primitive".into(),
        passed: primitive_error < 1e-8,
        witness: None,
        detail: format!("max relative mismatch {primitive_error:.3e}"),
    });

    Ok(HypothesisReport {
        checks,
        growth_constant,
        primitive_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_power_passes_f1_to_f3() {
        let rep = validate_hypotheses(&Nonlinearity::power(3.0, 3.9)).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        assert!((rep.growth_constant - 1.0).abs() < 1e-6);
    }

    #[test]
    fn linear_map_fails_f1_with_witness() {
        let nl = Nonlinearity::custom(Arc::new(|s| s), 3.0, 3.5);
        let rep = validate_hypotheses(&nl).unwrap();
        let f1 = rep.check("f1").unwrap();
        assert!(!f1.passed);
        assert!(f1.witness.is_some());
    }

    #[test]
    fn out_of_range_varrho_is_rejected() {
        let err = validate_hypotheses(&Nonlinearity::power(3.0, 4.5)).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
        assert!(validate_hypotheses(&Nonlinearity::power(5.5, 3.5)).is_err());
        let bad_r = Nonlinearity::power(3.0, 3.5).with_lower_bound(1.0, 7.0);
        assert!(validate_hypotheses(&bad_r).is_err());
    }

    #[test]
    fn varrho_above_p_plus_one_fails_f3() {
        let rep = validate_hypotheses(&Nonlinearity::power(2.25, 3.5)).unwrap();
        assert!(!rep.check("f3").unwrap().passed);
        let rep = validate_hypotheses(&Nonlinearity::power(2.25, 3.2)).unwrap();
        assert!(rep.all_pass());
    }

    #[test]
    fn growth_violation_detected() {
        let nl = Nonlinearity::custom(Arc::new(|s: f64| s.abs().powi(5) * s), 3.0, 3.5);
        let rep = validate_hypotheses(&nl).unwrap();
        assert!(!rep.check("f2").unwrap().passed);
    }

    #[test]
    fn tabulated_primitive_matches_closed_form() {
        let f: ScalarMap = Arc::new(|s: f64| s.abs().powf(2.0) * s + 0.5 * s.abs().powf(3.0) * s);
        let nl = Nonlinearity::custom(f, 4.0, 3.5);
        for &s in &[0.0_f64, 1e-4, 0.3, 1.0, 2.71, -1.3, 17.0] {
            let exact = s.abs().powi(4) / 4.0 + 0.5 * s.abs().powi(5) / 5.0;
            assert!((nl.primitive(s) - exact).abs() <= 1e-12 * exact.max(1.0), "{s}");
        }
        let rep = validate_hypotheses(&nl).unwrap();
        assert!(rep.all_pass(), "{rep:?}");
        assert!(nl.is_odd());
    }

    #[test]
    fn lower_bound_integrated_form() {
        let nl = Nonlinearity::scaled_power(1.0, 4.0, 3.9).with_lower_bound(1.0, 5.0);
        assert!(validate_hypotheses(&nl).unwrap().all_pass());
        let nl = Nonlinearity::scaled_power(1.0, 4.0, 3.9).with_lower_bound(2.0, 5.0);
        let rep = validate_hypotheses(&nl).unwrap();
        assert!(!rep.check("f4").unwrap().passed);
    }

    #[test]
    fn derivative_matches_differences() {
        let nl = Nonlinearity::power(3.0, 3.5);
        let custom = Nonlinearity::custom(Arc::new(|s: f64| s.abs().powi(2) * s), 3.0, 3.5);
        for &s in &[0.1, 0.7, -1.5, 3.0] {
            assert!((nl.derivative(s) - 3.0 * s * s).abs() < 1e-12);
            assert!((custom.derivative(s) - 3.0 * s * s).abs() < 1e-6);
        }
    }

    #[test]
    fn non_finite_samples_rejected() {
        let nl = Nonlinearity::custom(Arc::new(|s: f64| if s > 1e5 { f64::NAN } else { s * s * s }), 3.0, 3.5);
        assert!(matches!(validate_hypotheses(&nl), Err(Error::NonFinite(_))));
    }
}
