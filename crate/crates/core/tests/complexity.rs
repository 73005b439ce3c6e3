use std::sync::Arc;

use nonholo::complexity::*;
use nonholo::path::{uniform_grid, FlowPath, FnPath};
use nonholo::planner::{CostKind, Planner};
use nonholo::systems::{heisenberg, heisenberg_drift, heisenberg_vanishing_drift};
use nonholo::{parse_field, ControlAffineSystem, Error};
use proptest::prelude::*;

fn segment(n: usize, i: usize, domain: (f64, f64), timed: bool) -> CurveSpec {
    let unit = move |t: f64| {
        let mut v = vec![0.0; n];
        v[i] = t;
        v
    };
    let p = Arc::new(FnPath::new(n, domain, unit, move |_| unit(1.0)));
    if timed {
        CurveSpec::path("segment", p).unwrap()
    } else {
        CurveSpec::curve("segment", p).unwrap()
    }
}

fn opts(cost: CostKind) -> EstimatorOptions {
    EstimatorOptions::new(cost)
}

fn ols_slope(points: &[(f64, f64)]) -> f64 {
    // slope of log v against -log eps, computed by hand
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| -p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

#[test]
fn exact_power_law_fits_exactly() {
    let eps = geometric_sweep(0.4, 0.04, 6);
    let pts: Vec<(f64, f64)> = eps.iter().map(|e| (*e, 3.0 / (e * e))).collect();
    let fit = fit_points(&pts).unwrap();
    assert!((fit.slope - 2.0).abs() <= 1e-9);
    assert!((fit.r2 - 1.0).abs() <= 1e-12);
    assert!(fit.half_width <= 1e-9);
}

#[test]
fn modulated_power_law_fits_within_a_tenth() {
    let eps = geometric_sweep(0.4, 0.04, 8);
    let pts: Vec<(f64, f64)> = eps.iter().map(|e| (*e, (1.0 + 0.1 * e.ln().sin()) / (e * e))).collect();
    let fit = fit_points(&pts).unwrap();
    assert!((fit.slope - 2.0).abs() <= 0.1, "{}", fit.slope);
    assert!((fit.slope - ols_slope(&pts)).abs() <= 1e-12);
}

#[test]
fn fit_preconditions() {
    let three = [(0.4, 1.0), (0.2, 2.0), (0.1, 4.0)];
    assert!(matches!(fit_points(&three), Err(Error::FitPrecondition(_))));
    let narrow: Vec<(f64, f64)> = geometric_sweep(0.4, 0.2, 5).into_iter().map(|e| (e, 1.0 / e)).collect();
    assert!(matches!(fit_points(&narrow), Err(Error::FitPrecondition(_))));
    let mut bad: Vec<(f64, f64)> = geometric_sweep(0.4, 0.05, 5).into_iter().map(|e| (e, 1.0 / e)).collect();
    bad[2].1 = 0.0;
    assert!(matches!(fit_points(&bad), Err(Error::FitPrecondition(_))));
}

#[test]
fn complexity_curve_needs_decreasing_eps() {
    let s = |eps| ComplexitySample {
        eps,
        value: 1.0,
        pieces: 1,
        converged: true,
        saturated: false,
    };
    assert!(ComplexityCurve::new(ComplexityKind::Cost, CostKind::J, vec![s(0.2), s(0.1)]).is_ok());
    assert!(ComplexityCurve::new(ComplexityKind::Cost, CostKind::J, vec![s(0.1), s(0.2)]).is_err());
    assert!(ComplexityCurve::new(ComplexityKind::Cost, CostKind::J, vec![s(0.1), s(0.1)]).is_err());
}

#[test]
fn predicted_exponents() {
    use ComplexityKind::*;
    assert_eq!(predicted_exponent(Cost, 2, 2, true).unwrap(), 2);
    assert_eq!(predicted_exponent(App, 1, 3, true).unwrap(), 1);
    assert_eq!(predicted_exponent(Time, 1, 2, true).unwrap(), 2);
    assert_eq!(predicted_exponent(Neig, 3, 2, true).unwrap(), 3);
    assert_eq!(predicted_exponent(Time, 2, 0, false).unwrap(), 2);
    assert_eq!(predicted_exponent(LtlcNeig, 1, 3, true).unwrap(), 3);
    assert!(predicted_exponent(Cost, 0, 2, true).is_err());
    assert!(predicted_exponent(Time, 1, 1, true).is_err());
}

#[test]
fn kinds_round_trip() {
    for k in ComplexityKind::ALL {
        assert_eq!(k.to_string().parse::<ComplexityKind>().unwrap(), k);
        assert_eq!(format!("sigma_{k}").parse::<ComplexityKind>().unwrap(), k);
    }
    assert!("tube".parse::<ComplexityKind>().is_err());
}

#[test]
fn curves_must_be_regular_and_injective() {
    let still = Arc::new(FnPath::new(3, (0.0, 1.0), |_| vec![0.0; 3], |_| vec![0.0; 3]));
    assert!(matches!(CurveSpec::curve("still", still), Err(Error::ZeroVelocity { .. })));
    let circle = Arc::new(FnPath::new(
        3,
        (0.0, std::f64::consts::TAU),
        |t| vec![t.cos(), t.sin(), 0.0],
        |t| vec![-t.sin(), t.cos(), 0.0],
    ));
    assert!(CurveSpec::curve("loop", circle).is_err());
    let late = Arc::new(FnPath::new(3, (1.0, 2.0), |t| vec![t, 0.0, 0.0], |_| vec![1.0, 0.0, 0.0]));
    assert!(CurveSpec::path("late", late).is_err());
}

#[test]
fn horizontal_segment_costs_its_length() {
    // pieces of an SR-geodesic segment: total cost equals the length
    let h = heisenberg();
    let planner = Planner::new(&h);
    let line = segment(3, 0, (0.0, 1.0), false);
    for eps in [0.3, 0.1] {
        let e = sigma_cost(&planner, &line, eps, CostKind::SR, &opts(CostKind::SR)).unwrap();
        assert!((e.value * eps - 1.0).abs() <= 1e-6, "{}", e.value);
        // legs land in [(1 - 1e-3)ε, ε]
        assert!(e.pieces >= (1.0f64 / eps).ceil() as usize);
        assert!(e.pieces <= (1.0 / ((1.0 - 1e-3) * eps)).ceil() as usize + 1);
        assert!(e.legs.windows(2).all(|w| w[0].to == w[1].from));
    }
}

#[test]
fn vertical_pieces_match_the_isoperimetric_bound() {
    // a loop of length ε encloses at most ε²/(4π), so ≈ 4πL/ε² pieces
    let h = heisenberg();
    let planner = Planner::new(&h);
    let line = segment(3, 2, (0.0, 0.1), false);
    let eps = 0.3;
    let e = sigma_cost(&planner, &line, eps, CostKind::SR, &opts(CostKind::SR)).unwrap();
    let bound = 4.0 * std::f64::consts::PI * 0.1 / (eps * eps);
    assert!(e.pieces as f64 >= bound.floor(), "{} < {bound}", e.pieces);
    assert!((e.pieces as f64) <= 1.2 * bound + 1.0, "{} vs {bound}", e.pieces);
}

#[test]
fn time_interpolation_of_a_horizontal_path() {
    // σ̃(δ) = δ T on a unit-speed horizontal path, so σ_time = T²/ε
    let h = heisenberg();
    let planner = Planner::new(&h);
    let path = segment(3, 0, (0.0, 0.25), true);
    let aux = sigma_time_aux(&planner, &path, 0.25 / 16.0, CostKind::SR, &opts(CostKind::SR), None).unwrap();
    assert!((aux.value - 0.25 * 0.25 / 16.0).abs() <= 1e-9);
    assert_eq!(aux.pieces, 16);
    let eps = 0.004;
    let e = sigma_time(&planner, &path, eps, CostKind::SR, &opts(CostKind::SR), None).unwrap();
    let oracle = 0.25 * 0.25 / eps;
    assert!(!e.saturated);
    // uniform partitions only realise δ = T/K, so allow one step of slack
    assert!(e.value >= oracle * (1.0 - 1e-3) && e.value <= oracle * 1.1, "{} vs {oracle}", e.value);
}

#[test]
fn drift_orbit_saturates() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let orbit = CurveSpec::path(
        "orbit",
        Arc::new(FlowPath {
            field: sys.drift().unwrap().clone(),
            start: vec![0.1, 0.0, 0.0],
            horizon: 0.25,
        }),
    )
    .unwrap();
    for eps in [0.2, 0.01] {
        let e = sigma_time(&planner, &orbit, eps, CostKind::J, &opts(CostKind::J), None).unwrap();
        assert!(e.saturated);
        assert!((e.value - 8.0).abs() <= 1e-12);
    }
}

#[test]
fn ltlc_vanishes_where_the_drift_does() {
    let sys = heisenberg_vanishing_drift();
    let planner = Planner::new(&sys);
    let q0 = [0.0, 0.4, 0.2];
    let o = opts(CostKind::J);
    assert_eq!(ltlc_time(&planner, &q0, 0.25, 0.05, CostKind::J, &o).unwrap().value, 0.0);
    assert_eq!(ltlc_neig(&planner, &q0, 0.25, 0.05, CostKind::I, &o).unwrap().value, 0.0);
    let away = ltlc_neig(&planner, &[0.3, 0.0, 0.0], 0.25, 0.2, CostKind::J, &o).unwrap();
    assert!(away.value > 0.0);
    assert!(ltlc_time(&Planner::new(&heisenberg()), &[0.0; 3], 0.25, 0.1, CostKind::J, &o).is_err());
}

#[test]
fn ltlc_scales_with_the_horizon() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let o = opts(CostKind::J);
    let short = ltlc_neig(&planner, &[0.0; 3], 0.125, 0.2, CostKind::J, &o).unwrap().value;
    let long = ltlc_neig(&planner, &[0.0; 3], 0.25, 0.2, CostKind::J, &o).unwrap().value;
    let ratio = long / short;
    assert!((ratio - 2.0).abs() <= 0.3, "{short} {long}");
}

#[test]
fn cusp_classification() {
    let sys = heisenberg_drift();
    let cusp = CurveSpec::curve(
        "cusp",
        Arc::new(FnPath::new(3, (-0.2, 0.2), |t| vec![t * t, 0.0, t], |t| vec![2.0 * t, 0.0, 1.0])),
    )
    .unwrap();
    let r = cusp_condition(&sys, &cusp, &uniform_grid((-0.2, 0.2), 41)).unwrap();
    assert_eq!(r.order, 2);
    // det(γ', f1, f2) = 1 at (t², 0, t): the sum is everything, tangency only at 0
    assert!(r.points.iter().all(|p| p.in_sum));
    assert_eq!(r.suspects(), vec![0.0]);
    assert_eq!(r.certificate, None);

    let axis = segment(3, 0, (0.0, 1.0), false);
    let r = cusp_condition(&sys, &axis, &uniform_grid((0.0, 1.0), 41)).unwrap();
    assert!(r.suspects().is_empty());
    assert_eq!(r.certificate, Some(NoCuspCertificate::Transverse));

    let orbit = segment(3, 2, (0.0, 0.25), true);
    let r = cusp_condition(&sys, &orbit, &uniform_grid((0.0, 0.25), 21)).unwrap();
    assert!(r.points.iter().all(|p| p.tangent && p.in_sum));
    assert_eq!(r.certificate, Some(NoCuspCertificate::Contained));

    assert!(matches!(cusp_condition(&heisenberg(), &axis, &[0.0, 0.5]), Err(Error::DriftAbsent)));
}

#[test]
fn j_estimates_stay_below_i_estimates() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let o = opts(CostKind::J);
    let axis = segment(3, 0, (0.0, 0.5), false);
    let path = segment(3, 0, (0.0, 0.25), true);
    for (kind, curve, eps) in [
        (ComplexityKind::Cost, &axis, 0.15),
        (ComplexityKind::App, &axis, 0.15),
        (ComplexityKind::Neig, &path, 0.3),
        (ComplexityKind::Time, &path, 0.1),
    ] {
        let (j, i) = estimate_pair(&planner, kind, curve, eps, &o);
        let (j, i) = (j.unwrap(), i.unwrap());
        let slack = 2.0 * 1e-4 * i.pieces.max(j.pieces) as f64 / eps;
        assert!(j.value <= i.value + slack, "{kind}: {} > {}", j.value, i.value);
    }
}

#[test]
fn curve_complexities_with_drift_stay_below_the_small_system() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let axis = segment(3, 0, (0.0, 1.0), false);
    for eps in [0.3, 0.15] {
        let i = sigma_cost(&planner, &axis, eps, CostKind::I, &opts(CostKind::I)).unwrap();
        let sr = sigma_cost(&planner, &axis, eps, CostKind::SR, &opts(CostKind::SR)).unwrap();
        assert!(i.value <= sr.value + 2.0 * 1e-4 * i.pieces as f64 / eps, "{} {}", i.value, sr.value);
    }
}

#[test]
fn complexity_blows_up_monotonically() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let axis = segment(3, 0, (0.0, 1.0), false);
    let mut last = 0.0;
    for eps in geometric_sweep(0.4, 0.1, 5) {
        let v = sigma_app(&planner, &axis, eps, CostKind::J, &opts(CostKind::J)).unwrap().value;
        assert!(v >= last, "{eps}: {v} < {last}");
        last = v;
    }
}

#[test]
fn nested_curves_need_fewer_pieces() {
    let h = heisenberg();
    let planner = Planner::new(&h);
    let whole = segment(3, 2, (0.0, 0.1), false);
    let part = segment(3, 2, (0.0, 0.05), false);
    let eps = 0.3;
    let a = sigma_cost(&planner, &part, eps, CostKind::SR, &opts(CostKind::SR)).unwrap();
    let b = sigma_cost(&planner, &whole, eps, CostKind::SR, &opts(CostKind::SR)).unwrap();
    assert!(a.value <= b.value * 1.01, "{} {}", a.value, b.value);
}

#[test]
fn trajectories_have_bounded_neighbouring_cost() {
    // γ(t) = e^{t(f0 + f1)}(0) is admissible with J(γ) = T
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let f = sys.drift().unwrap().add(&sys.controlled()[0]).unwrap();
    let path = CurveSpec::path(
        "trajectory",
        Arc::new(FlowPath {
            field: f,
            start: vec![0.0; 3],
            horizon: 0.25,
        }),
    )
    .unwrap();
    for eps in [0.4, 0.2, 0.1] {
        let e = sigma_neig(&planner, &path, eps, CostKind::J, &opts(CostKind::J)).unwrap();
        assert!(e.value * eps <= 1.5 * 0.25, "{eps}: {}", e.value * eps);
    }
}

#[test]
fn tube_stays_below_moving_ball() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let path = segment(3, 0, (0.0, 0.25), true);
    let eps = 0.3;
    let app = sigma_app(&planner, &path, eps, CostKind::J, &opts(CostKind::J)).unwrap();
    let neig = sigma_neig(&planner, &path, eps, CostKind::J, &opts(CostKind::J)).unwrap();
    assert!(app.value <= neig.value + 2.0 * 1e-4 * neig.pieces as f64 / eps);
}

#[test]
fn drift_inside_the_distribution_keeps_curve_exponents() {
    // f0 = ∂x lies in the first layer
    let h = heisenberg();
    let sys = ControlAffineSystem::new("drift-in-layer", Some(parse_field("1, 0, 0", 3).unwrap()), h.controlled().to_vec()).unwrap();
    let vertical = segment(3, 2, (0.0, 0.1), false);
    let eps = geometric_sweep(0.4, 0.1, 5);
    let mut slopes = Vec::new();
    for s in [&h, &sys] {
        let planner = Planner::new(s);
        let cost = if s.has_drift() { CostKind::J } else { CostKind::SR };
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| (e, sigma_cost(&planner, &vertical, e, cost, &opts(cost)).unwrap().value))
            .collect();
        slopes.push(fit_points(&pts).unwrap().slope);
    }
    assert!((slopes[0] - slopes[1]).abs() <= 0.15, "{slopes:?}");
    assert!((slopes[1] - 2.0).abs() <= 0.3);
}

#[test]
fn sweep_results_do_not_depend_on_scheduling() {
    let h = heisenberg();
    let planner = Planner::new(&h);
    let line = segment(3, 2, (0.0, 0.1), false);
    let eps = [0.4, 0.3];
    let o = opts(CostKind::SR);
    let a = sweep(&planner, ComplexityKind::Cost, &line, &eps, CostKind::SR, &o);
    let b: Vec<_> = eps
        .iter()
        .rev()
        .map(|&e| sweep(&planner, ComplexityKind::Cost, &line, &[e], CostKind::SR, &o).remove(0))
        .collect();
    assert_eq!(a[0].as_ref().unwrap().value, b[1].as_ref().unwrap().value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fit_recovers_power_laws(slope in 0.2f64..4.0, c in 0.01f64..100.0, hi in 0.05f64..1.0, n in 5usize..10) {
        let pts: Vec<(f64, f64)> = geometric_sweep(hi, hi / 10.0, n).into_iter().map(|e| (e, c * e.powf(-slope))).collect();
        let fit = fit_points(&pts).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-9);
        prop_assert!((fit.intercept - c.ln()).abs() <= 1e-8);
    }

    #[test]
    fn geometric_sweeps_are_decreasing(hi in 0.01f64..1.0, ratio in 1.5f64..20.0, n in 2usize..12) {
        let s = geometric_sweep(hi, hi / ratio, n);
        prop_assert_eq!(s.len(), n);
        prop_assert_eq!(s[0], hi);
        prop_assert_eq!(s[n - 1], hi / ratio);
        prop_assert!(s.windows(2).all(|w| w[1] < w[0]));
    }
}
