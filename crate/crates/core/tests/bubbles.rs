use std::f64::consts::PI;
use std::sync::OnceLock;

use sbi_core::bubbles::{
    bubble_asymptotics, bubble_grid, default_epsilons, estimate_s, fiber_profile, integrals_of,
    level_bound_check, make_bubble, sextic_complement, SEstimate, DEFAULT_CUTOFF,
};
use sbi_core::energy::ModelParams;
use sbi_core::nonlinearity::Nonlinearity;
use sbi_core::{build_grid, integrate, RadialField};

fn sobolev_exact() -> f64 {
    3.0 * (PI / 2.0).powf(4.0 / 3.0)
}

fn s_estimate() -> &'static SEstimate {
    static S: OnceLock<SEstimate> = OnceLock::new();
    S.get_or_init(|| estimate_s(&bubble_grid().unwrap(), DEFAULT_CUTOFF, &default_epsilons()).unwrap())
}

fn critical(d: f64, r: f64) -> ModelParams {
    ModelParams::critical(Nonlinearity::power(4.0, 3.9).with_lower_bound(d, r), 1.0).unwrap()
}

#[test]
fn estimated_constant_matches_closed_form() {
    let s = s_estimate();
    let rel = (s.s_num - sobolev_exact()).abs() / sobolev_exact();
    assert!(rel < 1e-4, "S_num = {} rel {rel}", s.s_num);
    assert!(s.error < 1e-3);
    assert!(s.sqrt_coefficient > 0.0);
    // 5.4776336 on the default grid.
    assert!((s.s_num - 5.4776336).abs() < 1e-6, "{}", s.s_num);
}

#[test]
fn uncut_bubble_on_large_domain_attains_constant() {
    let eps: f64 = 1e-2;
    let g = build_grid(40.0, 20001, 3.0).unwrap();
    let slope = RadialField::from_fn(g.clone(), |r| -eps.powf(0.25) * r / (eps + r * r).powf(1.5));
    let value = RadialField::from_fn(g.clone(), |r| eps.powf(0.25) / (eps + r * r).sqrt());
    let r_max = g.r_max();
    // Exterior contributions of the r⁻⁴ and r⁻⁶ tails.
    let grad_tail = 4.0 * PI * eps.sqrt() / r_max;
    let sextic_tail = 4.0 * PI * eps.powf(1.5) / (3.0 * r_max.powi(3));
    let grad = integrate(&slope.map(|d| d * d)) + grad_tail;
    let sextic = integrate(&value.map(|v| v.powi(6))) + sextic_tail;
    let q = grad / sextic.cbrt();
    assert!((q - sobolev_exact()).abs() < 1e-3 * sobolev_exact(), "{q}");
    // ∫|∇U|² = S^{3/2}/√3 for the unnormalized profile.
    let expected = sobolev_exact().powf(1.5) / 3f64.sqrt();
    assert!((grad - expected).abs() < 1e-3 * expected, "{grad} vs {expected}");
}

#[test]
fn fiber_peak_matches_fine_scan() {
    let g = bubble_grid().unwrap();
    let b = make_bubble(1e-3, DEFAULT_CUTOFF, &g).unwrap();
    let m = integrals_of(&b.field).unwrap();
    let t_peak = m.fiber_peak();
    let ts: Vec<f64> = (0..2001).map(|k| t_peak * (0.99 + 0.02 * k as f64 / 2000.0)).collect();
    let fiber = fiber_profile(&b.field, &critical(1.0, 5.0), &ts).unwrap();
    let scanned = fiber.quadratic_sextic.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!((scanned - fiber.y_peak).abs() < 1e-8, "{scanned} vs {}", fiber.y_peak);
    assert_eq!(fiber.t_peak, t_peak);
    let closed = m.norm_sq().powf(1.5) / (3.0 * m.sextic.sqrt());
    assert!((fiber.y_peak - closed).abs() < 1e-12 * closed);
}

#[test]
fn fiber_functional_positive_then_negative() {
    let g = bubble_grid().unwrap();
    let b = make_bubble(1e-3, DEFAULT_CUTOFF, &g).unwrap();
    let t_peak = integrals_of(&b.field).unwrap().fiber_peak();
    let ts = [1e-3 * t_peak, 1e-2 * t_peak, 3.0 * t_peak, 5.0 * t_peak];
    let fiber = fiber_profile(&b.field, &critical(1.0, 5.0), &ts).unwrap();
    assert!(fiber.energies[0] > 0.0 && fiber.energies[1] > 0.0, "{:?}", fiber.energies);
    assert!(fiber.energies[2] < 0.0 && fiber.energies[3] < 0.0, "{:?}", fiber.energies);
}

#[test]
fn level_margin_grows_with_d() {
    let g = bubble_grid().unwrap();
    let s = s_estimate().s_num;
    let eps = [1e-5, 1e-4, 1e-3];
    let weak = level_bound_check(&critical(0.5, 5.0), &g, DEFAULT_CUTOFF, &eps, s).unwrap();
    let strong = level_bound_check(&critical(5.0, 5.0), &g, DEFAULT_CUTOFF, &eps, s).unwrap();
    for (w, st) in weak.entries.iter().zip(&strong.entries) {
        assert!(st.margin > w.margin, "eps {}: {} vs {}", w.epsilon, st.margin, w.margin);
    }
    assert!(strong.passes);
}

#[test]
fn level_without_lower_bound_exceeds_fiber_level() {
    let g = bubble_grid().unwrap();
    let s = s_estimate().s_num;
    let eps = [1e-4, 1e-3, 1e-2];
    let check = level_bound_check(&critical(1e-12, 5.0), &g, DEFAULT_CUTOFF, &eps, s).unwrap();
    for e in &check.entries {
        let y = integrals_of(&make_bubble(e.epsilon, DEFAULT_CUTOFF, &g).unwrap().field)
            .unwrap()
            .fiber_level();
        assert!(e.level >= y - 1e-9, "eps {}: {} < {y}", e.epsilon, e.level);
    }
    assert!(!check.passes);
}

#[test]
fn level_dichotomy_for_cubic_lower_bound() {
    let g = bubble_grid().unwrap();
    let s = s_estimate().s_num;
    let eps = default_epsilons();
    assert!(level_bound_check(&critical(50.0, 3.0), &g, DEFAULT_CUTOFF, &eps, s).unwrap().passes);
    assert!(!level_bound_check(&critical(0.01, 3.0), &g, DEFAULT_CUTOFF, &eps, s).unwrap().passes);
}

#[test]
fn sextic_complement_matches_direct_quadrature() {
    let (eps, a): (f64, f64) = (1e-3, 1.0);
    // ∫(1-φ⁶)V⁶ over r > a with V = 3^{1/4}U, by composite Simpson on [a, 2a]
    // plus the closed-form tail beyond 2a.
    let v6 = |r: f64| 3f64.powf(1.5) * eps.powf(1.5) / (eps + r * r).powi(3);
    let n = 20000;
    let h = a / n as f64;
    let mut sum = 0.0;
    for k in 0..=n {
        let r = a + k as f64 * h;
        let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
        let phi = sbi_core::bubbles::cutoff(r, a);
        sum += w * (1.0 - phi.powi(6)) * v6(r) * 4.0 * PI * r * r;
    }
    let inner = sum * h / 3.0;
    // Tail ∫_{2a}^∞ r²/(ε+r²)³ dr in closed form via x = r/√ε.
    let tail = {
        let x0 = 2.0 * a / eps.sqrt();
        let prim = |x: f64| {
            // ∫ x²/(1+x²)³ dx
            x.atan() / 8.0 + x * (x * x - 1.0) / (8.0 * (1.0 + x * x).powi(2))
        };
        let integral = (PI / 16.0 - prim(x0)) / eps.powf(1.5);
        3f64.powf(1.5) * eps.powf(1.5) * 4.0 * PI * integral
    };
    let direct = inner + tail;
    let got = sextic_complement(eps, a);
    assert!((got - direct).abs() < 1e-8 * direct, "{got} vs {direct}");
}

#[test]
fn asymptotic_exponents_match() {
    let g = bubble_grid().unwrap();
    let s = s_estimate().s_num;
    let asym = bubble_asymptotics(&g, DEFAULT_CUTOFF, &default_epsilons(), s).unwrap();
    let slope = |name: &str| asym.fit(name).unwrap().slope;
    assert!((slope("l2") - 0.5).abs() < 0.05);
    assert!((slope("l4") - 0.5).abs() < 0.05);
    assert!((slope("sextic_deficit") - 1.5).abs() < 0.15);
    assert!((slope("gradient_deficit") - 0.5).abs() < 0.05);
    assert!((slope("l3_over_log") - 0.75).abs() < 0.05);
    for f in &asym.fits {
        assert!(f.r_squared >= 0.95, "{} R² {}", f.name, f.r_squared);
    }
}

#[test]
fn make_bubble_rejects_bad_inputs() {
    let g = bubble_grid().unwrap();
    assert!(make_bubble(0.0, 1.0, &g).is_err());
    assert!(make_bubble(1.0, 1.0, &g).is_err());
    assert!(make_bubble(1e-3, 0.0, &g).is_err());
    assert!(make_bubble(1e-3, 3.0, &g).is_err());
}
