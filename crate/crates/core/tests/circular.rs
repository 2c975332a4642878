use std::f64::consts::TAU;

use uavplan_core::circular::{
    circle_power, init_plan, init_state, radius_interval, search_radius, solve_p3, solve_p31, solve_p32,
    solve_p4, CircularProblem, CircularState, InitMode, Step,
};
use uavplan_core::model::audit;
use uavplan_core::oracle::{audit_circular, brute_force_circular};
use uavplan_core::planners::Objective;
use uavplan_core::surrogates::Curvature;
use uavplan_core::{DinkelbachStart, Error, RunStatus, ScaConfig, Scenario, Vec2};

fn centred(period: f64, n: usize) -> Scenario {
    Scenario::reference(vec![Vec2::new(40.0, 25.0)], period, n)
}

#[test]
fn radius_interval_example() {
    let s = centred(100.0, 30);
    let (lo, hi) = radius_interval(&s).unwrap();
    assert!((lo - 47.75).abs() < 5e-3, "{lo}");
    assert!((hi - 1266.5).abs() < 5e-2, "{hi}");
    // Brute-force scan at 0.1 m with constant ω = 2π/T.
    let w = TAU / s.period;
    let ok = |r: f64| r * w >= s.v_min && r * w <= s.v_max && r * w * w <= s.a_max;
    let scan: Vec<f64> = (0..20_000).map(|i| i as f64 * 0.1).filter(|&r| ok(r)).collect();
    assert!((scan[0] - lo).abs() <= 0.1);
    assert!((scan[scan.len() - 1] - hi).abs() <= 0.1);
}

#[test]
fn circle_power_examples() {
    let s = centred(100.0, 30);
    let w = TAU / s.period;
    let r = 30.0 / w;
    // c1 v³ + c2/v = 100.002 W at 30 m/s plus the centripetal term c2 r ω³ / g².
    let expected = 9.26e-4 * 27_000.0 + 2250.0 / 30.0 + 2250.0 * r * w.powi(3) / 9.8f64.powi(2);
    assert!((circle_power(&s, r) - expected).abs() < 1e-9);
    assert!((circle_power(&s, r) - 102.78).abs() < 5e-3);
    let state = CircularState::uniform(&s, r, 0.0);
    assert!((state.prop_power(&s, 3) - circle_power(&s, r)).abs() < 1e-9);
    assert!((state.average_prop_power(&s) - circle_power(&s, r)).abs() < 1e-9);
}

#[test]
fn initial_plan_is_feasible() {
    for n in [12, 30, 60] {
        let s = Scenario::reference(vec![Vec2::new(-300.0, 0.0), Vec2::new(300.0, 100.0)], 90.0, n);
        for mode in [InitMode::MinRate, InitMode::EnergyEfficiency] {
            let plan = init_plan(&s, mode).unwrap();
            let check = if mode == InitMode::EnergyEfficiency { s.clone().with_prop_limit(None) } else { s.clone() };
            let rep = audit(&check, &plan.traj, &plan.link);
            assert!(rep.is_feasible(&check, 1e-9), "N={n} {mode:?}: {rep:?}");
            assert!(plan.link.p.iter().flatten().all(|&p| p == s.peak_power));
        }
    }
}

#[test]
fn tiny_power_limit_is_infeasible() {
    let s = centred(60.0, 24);
    let limit = s.min_feasible_prop_power() + 0.5;
    let tight = s.with_prop_limit(Some(limit));
    assert!(matches!(init_plan(&tight, InitMode::MinRate), Err(Error::InfeasibleScenario(_))));
    assert!(brute_force_circular(&tight, 64, 8).is_none());
    // The energy-efficiency initialiser ignores the limit.
    assert!(init_plan(&tight, InitMode::EnergyEfficiency).is_ok());
}

#[test]
fn centred_node_without_limit_picks_smallest_radius() {
    let s = centred(60.0, 24).with_prop_limit(None);
    let (lo, _) = radius_interval(&s).unwrap();
    let r = search_radius(&s, InitMode::MinRate).unwrap();
    assert!((r - lo).abs() <= 0.1 + 1e-3 * lo, "{r} vs {lo}");
}

#[test]
fn centred_node_baseline_matches_closed_form() {
    let s = centred(60.0, 24);
    let out = solve_p3(&s, &init_state(&s, InitMode::MinRate).unwrap(), &ScaConfig::default()).unwrap();
    let st = &out.state;
    assert_eq!(out.outcome.report.status, RunStatus::Converged);
    // Distance to the node does not depend on the angle, so full power at
    // the smallest radius meeting the limit is optimal.
    let closed = (1.0 + s.peak_power * s.ref_snr / (st.radius.powi(2) + s.altitude.powi(2))).log2();
    assert!((st.min_rate() - closed).abs() <= 1e-6 * closed);
    let limit = s.prop_limit.unwrap();
    assert!(st.average_prop_power(&s) >= limit * (1.0 - 1e-4));
    // Any constant-rate circle meeting the limit is no better.
    let grid = brute_force_circular(&s, 256, 1).unwrap();
    assert!(st.min_rate() >= grid.min_rate - 1e-9);
}

#[test]
fn symmetric_pair_equalises_rates() {
    let s = Scenario::reference(vec![Vec2::new(-250.0, 0.0), Vec2::new(250.0, 0.0)], 60.0, 24);
    let start = init_state(&s, InitMode::MinRate).unwrap();
    let next = solve_p31(&s, &start, &ScaConfig::default()).unwrap();
    let rates: Vec<f64> = next.s.iter().map(|row| row.iter().map(|g| g.max(0.0)).sum::<f64>()).collect();
    assert!(next.min_rate() >= start.min_rate() - 1e-9);
    let out = solve_p3(&s, &start, &ScaConfig::default()).unwrap();
    let avg = &out.outcome.report.avg_rate_per_gn;
    assert!((avg[0] - avg[1]).abs() <= 1e-4 * avg[0], "{avg:?}");
    assert!(rates.iter().all(|r| r.is_finite()));
}

#[test]
fn steps_are_tight_at_expansion_and_ascend() {
    let s = Scenario::reference(
        vec![Vec2::new(-300.0, -100.0), Vec2::new(250.0, 0.0), Vec2::new(0.0, 300.0)],
        60.0,
        20,
    );
    let state = init_state(&s, InitMode::MinRate).unwrap();
    for step in [Step::Radius, Step::Angle] {
        for kind in [Curvature::Tangent, Curvature::Uniform] {
            let p = CircularProblem::build(&s, &state, step, Objective::MinRate, kind).unwrap();
            let sur = p.surrogate_rates(&p.point(&state, 0.0));
            let m = sur.iter().copied().fold(f64::INFINITY, f64::min);
            assert!((m - state.min_rate()).abs() <= 1e-9, "{step:?} {kind:?}: {m} vs {}", state.min_rate());
        }
    }
    let cfg = ScaConfig::default();
    let after_radius = solve_p31(&s, &state, &cfg).unwrap();
    assert!(after_radius.min_rate() >= state.min_rate() - 1e-7);
    let after_angle = solve_p32(&s, &after_radius, &cfg).unwrap();
    assert!(after_angle.min_rate() >= after_radius.min_rate() - 1e-7);
    let rep = audit_circular(
        &s,
        after_angle.radius,
        &after_angle.theta,
        &after_angle.omega,
        &after_angle.alpha,
        &after_angle.plan(&s).link.p,
    );
    assert!(rep.passes(1e-5), "{rep:?}");
}

#[test]
fn cartesian_reconstruction_error_shrinks_with_slot_length() {
    let residual = |n: usize| {
        let s = centred(60.0, n);
        let st = CircularState::uniform(&s, 200.0, 0.3);
        let plan = st.plan(&s);
        let rep = audit(&s, &plan.traj, &plan.link);
        // ‖a‖² of the reconstruction is r²(α² + ω⁴) exactly.
        for (i, a) in plan.traj.a.iter().enumerate() {
            let expect = st.radius.powi(2) * (st.alpha[i].powi(2) + st.omega[i].powi(4));
            assert!((a.norm_squared() - expect).abs() <= 1e-12 * expect.max(1.0));
        }
        rep.kinematic_position.max(rep.kinematic_velocity)
    };
    let (coarse, fine) = (residual(30), residual(60));
    assert!(fine < coarse / 3.0, "{coarse} vs {fine}");
}

#[test]
fn energy_baseline_reaches_fixed_point() {
    let s = Scenario::reference(vec![Vec2::new(-250.0, 0.0), Vec2::new(250.0, 0.0)], 60.0, 20);
    for start in [DinkelbachStart::Zero, DinkelbachStart::InitialPlan] {
        let cfg = ScaConfig { dinkelbach_start: start, ..ScaConfig::default() };
        let out = solve_p4(&s, &init_state(&s, InitMode::EnergyEfficiency).unwrap(), &cfg).unwrap();
        let r = &out.outcome.report;
        assert_eq!(r.status, RunStatus::Converged, "{start:?}");
        if start == DinkelbachStart::Zero {
            assert_eq!(r.lambda_trace[0], 0.0);
        }
        assert!(r.lambda_trace.windows(2).all(|w| w[1] >= w[0]));
        let energy = out.state.average_prop_power(&s) * s.period;
        let lambda = *r.lambda_trace.last().unwrap();
        assert!(r.dinkelbach_residual.unwrap().abs() <= 1e-3 * (lambda * energy).max(1.0));
    }
}
