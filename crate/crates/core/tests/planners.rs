use uavplan_core::circular::{circle_plan, init_plan, InitMode};
use uavplan_core::model::{average_prop_power, rate_from_received};
use uavplan_core::oracle::{audit_plan, recompute_metrics};
use uavplan_core::planners::{
    build_p12, build_p23, min_rate_of, recover_power, solve_ee, solve_min_rate, TrajectoryProblem,
};
use uavplan_core::surrogates::Curvature;
use uavplan_core::{scatter_gns, DinkelbachStart, Plan, RunStatus, ScaConfig, Scenario, Trajectory, Vec2};

fn two_gns(n: usize) -> Scenario {
    Scenario::reference(vec![Vec2::new(-250.0, 0.0), Vec2::new(250.0, 0.0)], 60.0, n)
}

fn true_avg_rates(plan: &Plan) -> Vec<f64> {
    let n = plan.traj.slots();
    (0..plan.link.g.len())
        .map(|k| {
            (0..n)
                .map(|i| {
                    let slot: Vec<f64> = plan.link.g.iter().map(|row| row[i]).collect();
                    rate_from_received(&slot, k)
                })
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

#[test]
fn recovered_power_examples() {
    let s = Scenario::reference(vec![Vec2::zeros()], 60.0, 4);
    let overhead = Trajectory {
        q: vec![Vec2::zeros(); 5],
        v: vec![Vec2::new(30.0, 0.0); 5],
        a: vec![Vec2::zeros(); 5],
    };
    // h = γ0/H² = 1e4 directly overhead.
    let r = recover_power(&s, &overhead, &[vec![100.0, 0.0, 50.0, 100.0]]);
    assert!((r.p[0][0] - 0.01).abs() < 1e-15);
    assert_eq!(r.p[0][1], 0.0);
    assert!((r.p[0][2] - 0.005).abs() < 1e-15);
    assert!(r.max_excess <= 1e-15);
    let over = recover_power(&s, &overhead, &[vec![200.0; 4]]);
    assert_eq!(over.p[0][0], 0.01);
    assert!((over.max_excess - 0.01).abs() < 1e-15);
}

#[test]
fn problem_shape_and_tightness_at_expansion() {
    let s = two_gns(20);
    let init = init_plan(&s, InitMode::MinRate).unwrap();
    for kind in [Curvature::Tangent, Curvature::Uniform] {
        let p = TrajectoryProblem::build(&s, &init, uavplan_core::planners::Objective::MinRate, kind).unwrap();
        // q0, v0, a[0..N), G, V1, τ.
        assert_eq!(p.sp.dim(), 2 + 2 + 2 * 20 + 2 * 20 + 20 + 1);
        let x = p.point(&init, 0.0);
        let sur = p.surrogate_rates(&x);
        for (a, b) in sur.iter().zip(true_avg_rates(&init)) {
            assert!((a - b).abs() <= 1e-9 * b.max(1.0), "{a} vs {b}");
        }
    }
    let ee = build_p23(&s, &init, 1e4).unwrap();
    assert_eq!(ee.sp.dim(), 2 + 2 + 2 * 20 + 2 * 20 + 20 + 1);
}

#[test]
fn single_node_loiters_and_beats_the_circle() {
    let s = Scenario::reference(vec![Vec2::zeros()], 60.0, 30).with_prop_limit(Some(400.0));
    let init = init_plan(&s, InitMode::MinRate).unwrap();
    let start = min_rate_of(&init.link.g);
    let out = solve_min_rate(&s, &init, &ScaConfig::default()).unwrap();
    assert_eq!(out.report.status, RunStatus::Converged);
    assert!(out.report.min_avg_rate > start + 1e-3, "{} vs {start}", out.report.min_avg_rate);
    let mean_dist = out.plan.traj.q.iter().map(|q| q.norm()).sum::<f64>() / 31.0;
    let circle_dist = init.traj.q[0].norm();
    assert!(mean_dist < circle_dist, "{mean_dist} vs {circle_dist}");
}

#[test]
fn limit_at_initial_power_stays_tight() {
    let base = two_gns(24).with_prop_limit(None);
    let init = init_plan(&base, InitMode::MinRate).unwrap();
    let limit = average_prop_power(&base, &init.traj);
    let s = base.with_prop_limit(Some(limit));
    let out = solve_min_rate(&s, &init, &ScaConfig::default()).unwrap();
    let p = out.report.avg_prop_power_w;
    assert!(p <= limit * (1.0 + 1e-6), "{p} > {limit}");
    let audit = audit_plan(&s, &out.plan.traj, &out.plan.link.p);
    assert!(audit.passes(1e-6), "{audit:?}");
}

#[test]
fn min_rate_traces_are_monotone_on_random_layouts() {
    let cfg = ScaConfig::default();
    for seed in 0..10u64 {
        let k = 1 + (seed as usize % 4);
        let n = 16 + 4 * (seed as usize % 7);
        let s = Scenario::reference(scatter_gns(k, 300.0, seed), 60.0, n);
        let init = init_plan(&s, InitMode::MinRate).unwrap();
        let out = solve_min_rate(&s, &init, &cfg).unwrap();
        let tr = &out.report.objective_trace;
        assert!(tr.windows(2).all(|w| w[1] >= w[0] - 1e-6), "seed {seed}: {tr:?}");
        assert!(*tr.first().unwrap() >= min_rate_of(&init.link.g) - 1e-6);
        // Reported objective and the model's recomputation agree.
        let last = *tr.last().unwrap();
        assert!((last - out.report.min_avg_rate).abs() <= 1e-6 * last.max(1.0), "seed {seed}");
        let oracle = recompute_metrics(&s, &out.plan.traj, &out.plan.link.p);
        assert!((oracle.min_avg_rate - out.report.min_avg_rate).abs() <= 1e-9 * last.max(1.0));
        // Recovered powers stay in the box.
        assert!(out.plan.link.p.iter().flatten().all(|&p| (0.0..=s.peak_power * (1.0 + 1e-8)).contains(&p)));
        assert!(audit_plan(&s, &out.plan.traj, &out.plan.link.p).passes(1e-5), "seed {seed}");
    }
}

#[test]
fn dinkelbach_from_zero_starts_with_the_min_rate_problem() {
    let s = two_gns(20);
    let init = init_plan(&s, InitMode::EnergyEfficiency).unwrap();
    let cfg = ScaConfig {
        dinkelbach_start: DinkelbachStart::Zero,
        max_dinkelbach_rounds: 1,
        ..ScaConfig::default()
    };
    let ee = solve_ee(&s, &init, &cfg).unwrap();
    assert_eq!(ee.report.lambda_trace, vec![0.0]);
    let plain = solve_min_rate(&s.clone().with_prop_limit(None), &init, &ScaConfig::default()).unwrap();
    let (a, b) = (ee.report.min_avg_rate, plain.report.min_avg_rate);
    assert!((a - b).abs() <= 1e-4 * b, "{a} vs {b}");
}

#[test]
fn dinkelbach_fixed_point() {
    let s = two_gns(20);
    let init = init_plan(&s, InitMode::EnergyEfficiency).unwrap();
    for start in [DinkelbachStart::Zero, DinkelbachStart::InitialPlan] {
        let cfg = ScaConfig { dinkelbach_start: start, ..ScaConfig::default() };
        let out = solve_ee(&s, &init, &cfg).unwrap();
        let r = &out.report;
        assert_eq!(r.status, RunStatus::Converged, "{start:?}");
        assert!(r.lambda_trace.windows(2).all(|w| w[1] >= w[0]), "{start:?}: {:?}", r.lambda_trace);
        let lambda = *r.lambda_trace.last().unwrap();
        let f = r.dinkelbach_residual.unwrap();
        assert!(f.abs() <= 1e-3 * (lambda * r.total_prop_energy_j).max(1.0));
        let ee = recompute_metrics(&s, &out.plan.traj, &out.plan.link.p).ee_bits_per_joule;
        assert!((lambda - ee).abs() <= 1e-3 * ee, "{start:?}: {lambda} vs {ee}");
    }
}

#[test]
fn energy_plan_flies_steadier_than_unlimited_min_rate() {
    let s = two_gns(30).with_prop_limit(None);
    let ee = solve_ee(&s, &init_plan(&s, InitMode::EnergyEfficiency).unwrap(), &ScaConfig::default()).unwrap();
    let mr = solve_min_rate(&s, &init_plan(&s, InitMode::MinRate).unwrap(), &ScaConfig::default()).unwrap();
    let std = |t: &Trajectory| {
        let sp: Vec<f64> = t.v[1..].iter().map(|v| v.norm()).collect();
        let m = sp.iter().sum::<f64>() / sp.len() as f64;
        (sp.iter().map(|v| (v - m).powi(2)).sum::<f64>() / sp.len() as f64).sqrt()
    };
    assert!(std(&ee.plan.traj) < std(&mr.plan.traj));
    assert!(ee.report.avg_prop_power_w < mr.report.avg_prop_power_w);
}

#[test]
fn infeasible_initial_plan_is_rejected() {
    let s = two_gns(20);
    let mut bad = circle_plan(&s, 300.0);
    bad.traj.q[3].x += 50.0;
    assert!(matches!(solve_min_rate(&s, &bad, &ScaConfig::default()), Err(uavplan_core::Error::InfeasibleInit(_))));
    assert!(build_p12(&s, &bad).is_err());
}
