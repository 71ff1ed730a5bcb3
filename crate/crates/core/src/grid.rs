//! Graded radial meshes on `[0, R_max]` and nodal fields representing radial
//! functions on ℝ³.
//!
//! Every integral is taken with respect to the three-dimensional measure, so
//! `Σ w_i g(r_i) ≈ 4π ∫_0^{R_max} r² g(r) dr`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{interpolate, GaussLegendre};

/// Intervals integrated with the linear product rule before quadratic panels
/// take over. Near the origin the `r²` weight is so lopsided that quadratic
/// panels produce negative node weights.
const LINEAR_LEAD: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub n: usize,
    pub gamma: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.r_max, self.n, self.gamma)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    spec: GridSpec,
    nodes: Vec<f64>,
    /// High-order quadrature weights (ℝ³ measure).
    weights: Vec<f64>,
    /// Lumped P1 mass: `∫ 4πr² hat_i`.
    mass: Vec<f64>,
    /// Shell volume of each interval `[r_j, r_{j+1}]`.
    shells: Vec<f64>,
}

/// Builds the mesh `r_i = R_max (i/(N-1))^gamma`.
pub fn build_grid(r_max: f64, n: usize, gamma: f64) -> Result<Arc<RadialGrid>> {
    if !(r_max.is_finite() && r_max > 0.0) {
        return Err(Error::invalid(format!("R_max must be positive, got {r_max}")));
    }
    if n < 2 {
        return Err(Error::invalid(format!("N must be at least 2, got {n}")));
    }
    if !(gamma.is_finite() && gamma >= 1.0) {
        return Err(Error::invalid(format!("gamma must be >= 1, got {gamma}")));
    }
    let last = (n - 1) as f64;
    let mut nodes: Vec<f64> = (0..n).map(|i| r_max * (i as f64 / last).powf(gamma)).collect();
    nodes[n - 1] = r_max;

    let rule = GaussLegendre::new(3);
    let mut weights = vec![0.0; n];
    let mut mass = vec![0.0; n];
    let mut shells = vec![0.0; n - 1];
    for j in 0..n - 1 {
        let (a, b) = (nodes[j], nodes[j + 1]);
        let h = b - a;
        let (wa, wb) = linear_moments(a, h);
        mass[j] += wa;
        mass[j + 1] += wb;
        shells[j] = 4.0 * PI * h * (a * a + a * h + h * h / 3.0);
    }

    let mut j = 0;
    while j < n - 1 && j < LINEAR_LEAD {
        let (wa, wb) = linear_moments(nodes[j], nodes[j + 1] - nodes[j]);
        weights[j] += wa;
        weights[j + 1] += wb;
        j += 1;
    }
    while j + 2 < n {
        let xs = [nodes[j], nodes[j + 1], nodes[j + 2]];
        for (g, gw) in rule.nodes.iter().zip(&rule.weights) {
            let half = 0.5 * (xs[2] - xs[0]);
            let r = 0.5 * (xs[0] + xs[2]) + half * g;
            let dens = 4.0 * PI * r * r * gw * half;
            for i in 0..3 {
                let mut basis = 1.0;
                for k in 0..3 {
                    if k != i {
                        basis *= (r - xs[k]) / (xs[i] - xs[k]);
                    }
                }
                weights[j + i] += dens * basis;
            }
        }
        j += 2;
    }
    if j < n - 1 {
        let (wa, wb) = linear_moments(nodes[j], nodes[j + 1] - nodes[j]);
        weights[j] += wa;
        weights[j + 1] += wb;
    }

    Ok(Arc::new(RadialGrid {
        spec: GridSpec { r_max, n, gamma },
        nodes,
        weights,
        mass,
        shells,
    }))
}

/// `4π ∫_a^{a+h} r² (1-x)` and `4π ∫ r² x` with `x = (r-a)/h`.
fn linear_moments(a: f64, h: f64) -> (f64, f64) {
    let left = h * (a * a / 2.0 + a * h / 3.0 + h * h / 12.0);
    let right = h * (a * a / 2.0 + 2.0 * a * h / 3.0 + h * h / 4.0);
    (4.0 * PI * left, 4.0 * PI * right)
}

impl RadialGrid {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn r_max(&self) -> f64 {
        self.spec.r_max
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn shells(&self) -> &[f64] {
        &self.shells
    }

    /// Width of interval `j`.
    pub fn step(&self, j: usize) -> f64 {
        self.nodes[j + 1] - self.nodes[j]
    }

    /// Same radius and grading with `2(N-1)+1` nodes, so every old node is kept.
    pub fn refined(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.spec.r_max, 2 * (self.spec.n - 1) + 1, self.spec.gamma)
    }
}

/// Nodal values of a radial function on a [`RadialGrid`].
#[derive(Debug, Clone)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl PartialEq for RadialField {
    fn eq(&self, other: &Self) -> bool {
        (Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid)
            && self.values == other.values
    }
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<RadialGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: Arc<RadialGrid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_grid(&self, other: &RadialField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RadialField {
        Self::from_raw(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn scaled(&self, a: f64) -> RadialField {
        self.map(|v| a * v)
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &RadialField, b: f64) -> Result<RadialField> {
        self.check_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Self::from_raw(self.grid.clone(), values))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Value at arbitrary radius by cubic interpolation; zero beyond `R_max`.
    pub fn sample(&self, r: f64) -> f64 {
        if r > self.grid.r_max() {
            return 0.0;
        }
        interpolate(self.grid.nodes(), &self.values, r.max(0.0)).unwrap_or(0.0)
    }

    /// Resamples onto another grid by cubic interpolation.
    pub fn resample(&self, target: &Arc<RadialGrid>) -> RadialField {
        RadialField::from_fn(target.clone(), |r| self.sample(r))
    }

    /// Enforces the truncation boundary condition `u(R_max) = 0`.
    pub fn with_dirichlet(mut self) -> RadialField {
        if let Some(v) = self.values.last_mut() {
            *v = 0.0;
        }
        self
    }
}

/// `Σ w_i g(r_i)`, the ℝ³ integral of a radial function.
pub fn integrate(g: &RadialField) -> f64 {
    g.grid
        .weights()
        .iter()
        .zip(&g.values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Integral of `h(u(r))` without building an intermediate field.
pub fn integrate_with(u: &RadialField, h: impl Fn(f64) -> f64) -> f64 {
    u.grid
        .weights()
        .iter()
        .zip(&u.values)
        .map(|(w, &v)| w * h(v))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum NormKind {
    /// `L^s` with `1 <= s < ∞`.
    Lebesgue(f64),
    Sup,
    /// `(∫ |∇u|² + u²)^{1/2}` in the finite-element discretization used by
    /// the energy functionals.
    H1,
}

pub fn norm(u: &RadialField, kind: NormKind) -> Result<f64> {
    match kind {
        NormKind::Lebesgue(s) => {
            if !(s >= 1.0) || !s.is_finite() {
                return Err(Error::invalid(format!("L^s norm needs s >= 1, got {s}")));
            }
            Ok(integrate_with(u, |v| v.abs().powf(s)).powf(1.0 / s))
        }
        NormKind::Sup => Ok(u.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))),
        NormKind::H1 => Ok(h1_inner(u, u)?.max(0.0).sqrt()),
    }
}

/// `∫ u'v'` with piecewise-linear derivatives and exact shell volumes.
pub fn stiffness_inner(u: &RadialField, v: &RadialField) -> Result<f64> {
    u.check_grid(v)?;
    let g = &u.grid;
    Ok((0..g.len() - 1)
        .map(|j| {
            let h = g.step(j);
            g.shells[j] * (u.values[j + 1] - u.values[j]) * (v.values[j + 1] - v.values[j]) / (h * h)
        })
        .sum())
}

/// Lumped-mass inner product `Σ m_i u_i v_i`.
pub fn mass_inner(u: &RadialField, v: &RadialField) -> Result<f64> {
    u.check_grid(v)?;
    Ok(u.grid
        .mass()
        .iter()
        .zip(u.values.iter().zip(&v.values))
        .map(|(m, (a, b))| m * a * b)
        .sum())
}

/// Discrete H¹ inner product (stiffness plus lumped mass).
pub fn h1_inner(u: &RadialField, v: &RadialField) -> Result<f64> {
    Ok(stiffness_inner(u, v)? + mass_inner(u, v)?)
}

/// Three-point radial derivative on the nonuniform mesh, with `u'(0) = 0`.
pub fn deriv(u: &RadialField) -> Result<RadialField> {
    let n = u.grid.len();
    if n < 3 {
        return Err(Error::invalid("deriv needs at least 3 nodes"));
    }
    let r = u.grid.nodes();
    let v = &u.values;
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let h1 = r[i] - r[i - 1];
        let h2 = r[i + 1] - r[i];
        out[i] = -h2 / (h1 * (h1 + h2)) * v[i - 1] + (h2 - h1) / (h1 * h2) * v[i]
            + h1 / (h2 * (h1 + h2)) * v[i + 1];
    }
    let h1 = r[n - 2] - r[n - 3];
    let h2 = r[n - 1] - r[n - 2];
    out[n - 1] = h2 / (h1 * (h1 + h2)) * v[n - 3] - (h1 + h2) / (h1 * h2) * v[n - 2]
        + (h1 + 2.0 * h2) / (h2 * (h1 + h2)) * v[n - 1];
    Ok(RadialField::from_raw(u.grid.clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_node_unit_ball() {
        let g = build_grid(1.0, 2, 1.0).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        let one = RadialField::from_fn(g.clone(), |_| 1.0);
        assert!((integrate(&one) - 4.0 * PI / 3.0).abs() < 1e-14);
    }

    #[test]
    fn grading_formula() {
        let g = build_grid(20.0, 2001, 2.0).unwrap();
        assert!((g.nodes()[1000] - 5.0).abs() < 1e-12);
        assert_eq!(g.nodes()[2000], 20.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_grid(0.0, 100, 1.0).is_err());
        assert!(build_grid(1.0, 1, 1.0).is_err());
        assert!(build_grid(1.0, 100, 0.5).is_err());
        assert!(build_grid(f64::NAN, 100, 1.0).is_err());
    }

    #[test]
    fn weights_are_nonnegative_and_sum_to_ball_volume() {
        for &gamma in &[1.0, 1.5, 2.0, 3.0, 4.0] {
            for &n in &[16, 17, 101, 2001, 4002] {
                let g = build_grid(20.0, n, gamma).unwrap();
                assert!(g.weights().iter().all(|&w| w >= 0.0), "gamma {gamma} n {n}");
                let vol = 4.0 / 3.0 * PI * 8000.0;
                let s: f64 = g.weights().iter().sum();
                assert!(((s - vol) / vol).abs() < 1e-10, "gamma {gamma} n {n}");
                let m: f64 = g.mass().iter().sum();
                assert!(((m - vol) / vol).abs() < 1e-10);
                let k: f64 = g.shells().iter().sum();
                assert!(((k - vol) / vol).abs() < 1e-10);
                let r = g.nodes();
                assert!(r.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn gaussian_integral() {
        let g = build_grid(20.0, 2001, 2.0).unwrap();
        let f = RadialField::from_fn(g, |r| (-r * r).exp());
        let exact = PI.powf(1.5);
        assert!(((integrate(&f) - exact) / exact).abs() < 1e-8);
    }

    #[test]
    fn exponential_integral() {
        let g = build_grid(40.0, 4001, 2.0).unwrap();
        let f = RadialField::from_fn(g, |r| (-r).exp());
        let exact = 8.0 * PI;
        assert!(((integrate(&f) - exact) / exact).abs() < 1e-6);
    }

    #[test]
    fn zero_and_unit_integrands() {
        let g = build_grid(1.0, 64, 2.0).unwrap();
        assert_eq!(integrate(&RadialField::zeros(g.clone())), 0.0);
        let one = RadialField::from_fn(g, |_| 1.0);
        assert!((integrate(&one) - 4.0 * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn refinement_convergence_is_at_least_second_order() {
        let f = |r: f64| (-r * r).exp() * (1.0 + r);
        let errs: Vec<f64> = [201usize, 401, 801]
            .iter()
            .map(|&n| {
                let g = build_grid(12.0, n, 2.0).unwrap();
                integrate(&RadialField::from_fn(g.clone(), f))
            })
            .collect();
        let e1 = (errs[0] - errs[2]).abs();
        let e2 = (errs[1] - errs[2]).abs();
        assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
    }

    #[test]
    fn norms() {
        let g = build_grid(20.0, 2001, 2.0).unwrap();
        let z = RadialField::zeros(g.clone());
        for kind in [NormKind::Lebesgue(2.0), NormKind::Lebesgue(2.4), NormKind::Sup, NormKind::H1] {
            assert_eq!(norm(&z, kind).unwrap(), 0.0);
        }
        let u = RadialField::from_fn(g.clone(), |r| (-r * r / 2.0).exp());
        let n2 = norm(&u, NormKind::Lebesgue(2.0)).unwrap();
        assert!((n2 * n2 - PI.powf(1.5)).abs() < 1e-8);
        let s = 12.0 / 5.0;
        let a = norm(&u.scaled(-2.0), NormKind::Lebesgue(s)).unwrap();
        let b = norm(&u, NormKind::Lebesgue(s)).unwrap();
        assert!((a - 2.0 * b).abs() < 1e-12 * a);
        assert!(norm(&u, NormKind::Lebesgue(0.5)).is_err());
        assert!((norm(&u, NormKind::Sup).unwrap() - 1.0).abs() < 1e-15);
        // ‖∇u‖² = 3π^{3/2}/2 and ‖u‖² = π^{3/2} for this Gaussian.
        let h1 = norm(&u, NormKind::H1).unwrap();
        let exact = (2.5 * PI.powf(1.5)).sqrt();
        assert!(((h1 - exact) / exact).abs() < 1e-4);
    }

    #[test]
    fn derivative_of_constant_and_quadratic() {
        let g = build_grid(3.0, 50, 2.0).unwrap();
        let c = deriv(&RadialField::from_fn(g.clone(), |_| 4.2)).unwrap();
        assert!(c.values().iter().all(|v| v.abs() < 1e-10));
        let q = deriv(&RadialField::from_fn(g.clone(), |r| r * r)).unwrap();
        for (i, (&r, &d)) in g.nodes().iter().zip(q.values()).enumerate().skip(1) {
            assert!((d - 2.0 * r).abs() < 1e-9, "node {i}");
        }
        assert_eq!(q.values()[0], 0.0);
    }

    #[test]
    fn derivative_error_is_second_order() {
        let err = |n: usize| {
            let g = build_grid(10.0, n, 1.0).unwrap();
            let d = deriv(&RadialField::from_fn(g.clone(), |r| (-r).exp())).unwrap();
            (1..n - 1)
                .map(|i| (d.values()[i] + (-g.nodes()[i]).exp()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(401) / err(801);
        assert!(ratio > 3.6 && ratio < 4.4, "ratio {ratio}");
    }

    #[test]
    fn field_validation() {
        let g = build_grid(1.0, 16, 1.0).unwrap();
        assert!(RadialField::new(g.clone(), vec![0.0; 15]).is_err());
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(RadialField::new(g.clone(), v).is_err());
        let other = build_grid(2.0, 16, 1.0).unwrap();
        let a = RadialField::zeros(g);
        let b = RadialField::zeros(other);
        assert!(a.lin_comb(1.0, &b, 1.0).is_err());
    }

    #[test]
    fn resampling_to_finer_grid_preserves_integral() {
        let f = |r: f64| (-r * r).exp() * r.cos();
        let diff = |n: usize| {
            let g = build_grid(10.0, n, 2.0).unwrap();
            let u = RadialField::from_fn(g.clone(), f);
            let fine = u.resample(&g.refined().unwrap());
            (integrate(&fine) - integrate(&u)).abs()
        };
        let (d1, d2) = (diff(101), diff(201));
        assert!(d2 < d1 / 3.5, "{d1} {d2}");
    }

    proptest! {
        #[test]
        fn quadrature_is_linear(a in -5.0f64..5.0, b in -5.0f64..5.0, s in 0.2f64..3.0) {
            let g = build_grid(15.0, 301, 2.0).unwrap();
            let f = RadialField::from_fn(g.clone(), |r| (-s * r * r).exp());
            let h = RadialField::from_fn(g.clone(), |r| 1.0 / (1.0 + r * r));
            let lhs = integrate(&f.lin_comb(a, &h, b).unwrap());
            let rhs = a * integrate(&f) + b * integrate(&h);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs().max(rhs.abs())).max(1.0));
        }

        #[test]
        fn triangle_inequality_and_homogeneity(
            a in -3.0f64..3.0, s1 in 0.3f64..2.0, s2 in 0.3f64..2.0, c in 0.5f64..2.0,
            p in 1.0f64..6.0,
        ) {
            let g = build_grid(15.0, 301, 2.0).unwrap();
            let u = RadialField::from_fn(g.clone(), |r| (-s1 * r * r).exp() * (1.0 - r / 3.0));
            let v = RadialField::from_fn(g.clone(), |r| c * (-s2 * r).exp());
            for kind in [NormKind::Lebesgue(p), NormKind::Sup, NormKind::H1] {
                let nu = norm(&u, kind).unwrap();
                let nv = norm(&v, kind).unwrap();
                let nsum = norm(&u.lin_comb(1.0, &v, 1.0).unwrap(), kind).unwrap();
                prop_assert!(nsum <= (nu + nv) * (1.0 + 1e-12));
                let na = norm(&u.scaled(a), kind).unwrap();
                prop_assert!((na - a.abs() * nu).abs() <= 1e-12 * nu.max(1e-300) * 10.0);
            }
        }
    }
}
