use nonholo::charts::build_drift_chart;
use nonholo::ode::flow;
use nonholo::planner::*;
use nonholo::systems::{heisenberg, heisenberg_drift};
use nonholo::Tolerance;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn random_point(rng: &mut ChaCha8Rng, r: f64) -> Vec<f64> {
    vec![rng.gen_range(-r..r), rng.gen_range(-r..r), rng.gen_range(-r * r..r * r)]
}

#[test]
fn integrate_examples() {
    let drift = heisenberg_drift();
    let tr = integrate(&drift, &ControlSignal::zero(2, 4, 0.3), &[0.0; 3]).unwrap();
    assert!(dist(tr.endpoint(), &[0.0, 0.0, 0.3]) < 1e-12);
    assert_eq!(tr.states[0], vec![0.0; 3]);

    let h = heisenberg();
    let c = ControlSignal::new(vec![vec![1.0, 0.0]], 1.0).unwrap();
    assert!(dist(integrate(&h, &c, &[0.0; 3]).unwrap().endpoint(), &[1.0, 0.0, 0.0]) < 1e-12);
    // ż = x u2 = a along the whole segment
    let a = 0.7;
    let c = ControlSignal::new(vec![vec![0.0, 1.0]], 1.0).unwrap();
    assert!(dist(integrate(&h, &c, &[a, 0.0, 0.0]).unwrap().endpoint(), &[a, 1.0, a]) < 1e-12);
}

#[test]
fn trajectory_samples_are_consistent() {
    let h = heisenberg_drift();
    let c = ControlSignal::new(vec![vec![0.4, -1.0], vec![1.5, 0.2], vec![-0.3, 0.9]], 0.6).unwrap();
    let coarse = integrate(&h, &c, &[0.1, 0.2, 0.3]).unwrap();
    let fine = integrate_sampled(&h, &c, &[0.1, 0.2, 0.3], 3).unwrap();
    assert_eq!(fine.states.len(), 13);
    for (k, s) in coarse.states.iter().enumerate() {
        assert!(dist(s, &fine.states[4 * k]) < 1e-8);
    }
}

#[test]
fn heisenberg_horizontal_distance() {
    let d = sr_distance(&heisenberg(), &[0.0; 3], &[0.5, 0.0, 0.0], 20_000).unwrap();
    assert!((d - 0.5).abs() <= 0.025, "{d}");
    assert_eq!(sr_distance(&heisenberg(), &[0.3, 0.1, 0.2], &[0.3, 0.1, 0.2], 100).unwrap(), 0.0);
}

#[test]
fn null_control_along_the_drift() {
    let sys = heisenberg_drift();
    let q = [0.1, -0.2, 0.05];
    let target = flow(sys.drift().unwrap(), &q, 0.2, Tolerance::default()).unwrap();
    let plan = steer(&sys, &q, &target, CostKind::J, 0.25, 20_000).unwrap();
    assert!(plan.converged);
    assert_eq!(plan.cost_j, 0.0);
    assert!(value_j(&sys, &q, &target, 0.25, 20_000).unwrap() <= 1e-9);
    let vi = value_i(&sys, &q, &target, 0.25, 20_000).unwrap();
    assert!((vi - 0.2).abs() <= 1e-6, "{vi}");
}

#[test]
fn vertical_displacement_matches_oracles() {
    let h = heisenberg();
    let planner = Planner::new(&h);
    let target = [0.0, 0.0, 0.1];
    let base = planner.sr_plan(&[0.0; 3], &target, &SteerOptions::new(CostKind::SR)).unwrap();
    assert!(base.converged);
    let fine = planner
        .sr_plan(
            &[0.0; 3],
            &target,
            &SteerOptions::new(CostKind::SR).segments(128).budget(2_000_000).warm(base.control.clone()),
        )
        .unwrap();
    assert!(fine.converged);
    assert!((base.cost_j - fine.cost_j).abs() <= 0.1 * fine.cost_j);
    // the optimal loop is a circle enclosing area h: length sqrt(4πh)
    let circle = (4.0 * std::f64::consts::PI * 0.1f64).sqrt();
    assert!((base.cost_j - circle).abs() <= 0.1 * circle);
    assert!(base.cost_j >= circle * (1.0 - 1e-9));
}

#[test]
fn reported_costs_recompute() {
    let h = heisenberg_drift();
    let plan = steer(&h, &[0.0; 3], &[0.05, -0.02, 0.1], CostKind::I, 0.25, 20_000).unwrap();
    assert!((plan.control.cost_j() - plan.cost_j).abs() <= 1e-12);
    assert!((plan.control.cost_i() - plan.cost_i).abs() <= 1e-12);
    let tr = integrate(&h, &plan.control, &[0.0; 3]).unwrap();
    assert!(dist(tr.endpoint(), &plan.endpoint) <= 1e-8);
}

#[test]
fn distance_is_nearly_symmetric() {
    let h = heisenberg();
    let planner = Planner::new(&h);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = SteerOptions::new(CostKind::SR).restarts(2);
    for _ in 0..10 {
        let (a, b) = (random_point(&mut rng, 0.3), random_point(&mut rng, 0.3));
        let fwd = planner.sr_plan(&a, &b, &opts).unwrap();
        let back = planner.sr_plan(&b, &a, &opts.clone().warm(fwd.control.reversed())).unwrap();
        let plain = planner.sr_plan(&b, &a, &opts).unwrap();
        assert!(back.cost_j <= fwd.cost_j + 1e-9);
        assert!((plain.cost_j - fwd.cost_j).abs() <= 0.1 * fwd.cost_j, "{} {}", plain.cost_j, fwd.cost_j);
    }
}

#[test]
fn concatenation_keeps_distances_subadditive() {
    let h = heisenberg();
    let planner = Planner::new(&h);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = SteerOptions::new(CostKind::SR).restarts(1);
    for _ in 0..4 {
        let q: Vec<Vec<f64>> = (0..3).map(|_| random_point(&mut rng, 0.3)).collect();
        let a = planner.sr_plan(&q[0], &q[1], &opts).unwrap();
        let b = planner.sr_plan(&q[1], &q[2], &opts).unwrap();
        let joined = a.control.concat(&b.control);
        let c = planner.sr_plan(&q[0], &q[2], &opts.clone().warm(joined)).unwrap();
        assert!(c.converged);
        assert!(c.cost_j <= a.cost_j + b.cost_j + 1e-6);
    }
}

#[test]
fn more_budget_never_hurts() {
    let h = heisenberg_drift();
    let planner = Planner::new(&h);
    let target = [0.05, 0.1, 0.02];
    let mut last = f64::INFINITY;
    for budget in [200, 400, 800, 1600, 3200] {
        let p = planner.steer(&[0.0; 3], &target, &SteerOptions::new(CostKind::J).budget(budget)).unwrap();
        let v = if p.converged { p.cost_j } else { f64::INFINITY };
        assert!(v <= last, "{budget}: {v} > {last}");
        last = v;
    }
    assert!(last.is_finite());
}

#[test]
fn value_j_below_value_i() {
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let opts = SteerOptions::new(CostKind::J).restarts(0);
    for _ in 0..20 {
        let (a, b) = (random_point(&mut rng, 0.2), random_point(&mut rng, 0.2));
        let (vj, vi) = planner.value_pair(&a, &b, &opts).unwrap();
        assert!(vj <= vi + 1e-12, "{vj} {vi}");
    }
}

#[test]
fn reachable_sets_shrink_to_the_drift_segment() {
    let h = heisenberg();
    for p in reachable_sample(&h, &[0.1, 0.2, 0.3], 0.0, 0.5, 12, 1).unwrap() {
        assert!(dist(&p, &[0.1, 0.2, 0.3]) < 1e-14);
    }
    let sys = heisenberg_drift();
    let chart = build_drift_chart(&sys, &[0.0; 3], 1e-8).unwrap();
    let l = chart.drift_slot.unwrap();
    let mut last = f64::INFINITY;
    for eps in [0.1, 0.01, 0.001] {
        let far = reachable_sample(&sys, &[0.0; 3], eps, 0.2, 90, 2)
            .unwrap()
            .iter()
            .map(|p| {
                let mut z = chart.to_coords(p).unwrap();
                z[l] -= z[l].clamp(0.0, 0.2);
                z.iter().map(|v| v.abs()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        assert!(far < last && far <= 2.0 * eps, "{eps}: {far}");
        last = far;
    }
}

#[test]
fn time_bound_and_cost_equivalence_near_the_drift() {
    // T ≤ C (J^s + z_ℓ⁺) and I/J bounded for small transverse plans
    let sys = heisenberg_drift();
    let planner = Planner::new(&sys);
    let chart = build_drift_chart(&sys, &[0.0; 3], 1e-8).unwrap();
    let l = chart.drift_slot.unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst_time: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..12 {
        let z = vec![rng.gen_range(-0.04..0.04), rng.gen_range(-0.04..0.04), rng.gen_range(-0.002..0.05)];
        let p = chart.from_coords(&z).unwrap();
        let pj = planner.steer(&[0.0; 3], &p, &SteerOptions::new(CostKind::J).restarts(1)).unwrap();
        let pi = planner.steer(&[0.0; 3], &p, &SteerOptions::new(CostKind::I).restarts(1)).unwrap();
        assert!(pj.converged && pi.converged);
        if pj.cost_j > 0.0 && pj.cost_j <= 0.1 {
            let bound = pj.cost_j.powi(2) + z[l].max(0.0);
            worst_time = worst_time.max(pi.control.horizon / bound);
            worst_ratio = worst_ratio.max(pi.cost_i / pj.cost_j);
        }
    }
    assert!(worst_time <= 8.0, "{worst_time}");
    assert!(worst_ratio <= 8.0, "{worst_ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn cost_sandwich(values in prop::collection::vec(prop::array::uniform2(-5.0f64..5.0), 1..8), t in 0.01f64..2.0) {
        let c = ControlSignal::new(values.iter().map(|v| v.to_vec()).collect(), t).unwrap();
        let (j, i) = (c.cost_j(), c.cost_i());
        prop_assert!(j >= 0.0 && j <= i + 1e-12 && i <= j + t + 1e-12 && i >= t - 1e-12);
        prop_assert!((c.reversed().cost_j() - j).abs() <= 1e-12);
    }
}
