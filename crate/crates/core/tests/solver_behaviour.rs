use noisy_gp::geometry::ConvexRegion;
use noisy_gp::solvers::{
    calibration_update, gp_ls_iterate, relaxed_armijo_accept, solve, solve_with_lipschitz, CalibrationState, GradientSource,
    CAL_ALPHA0_CEIL, CAL_FLOOR,
};
use noisy_gp::stochastic::{
    make_surrogate_problem, random_point, test_quadratic, AdditiveNoise, AdditiveNoiseOracle, ExactProblem,
};
use noisy_gp::{ProblemSpec, SolverConfig, SolverMode};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn horn_configs() -> Vec<SolverConfig> {
    vec![
        SolverConfig::gp_f(0.05).with_max_iterations(60),
        SolverConfig::gp_ls(0.25, 1e-3).with_max_iterations(60),
        SolverConfig::gp_ls_cal(0.025, 1e-2, 2e-2).with_max_iterations(60),
    ]
}

#[test]
fn iterates_stay_feasible() {
    for cfg in horn_configs() {
        for seed in 0..3 {
            let p = make_surrogate_problem(&ProblemSpec::horn(10, seed)).unwrap();
            let trace = solve(p.oracle.as_ref(), &p.region, &p.start, &cfg).unwrap();
            for r in &trace {
                assert!(p.region.contains(&r.x_next, 1e-12), "{:?} k={}", cfg.mode, r.k);
            }
        }
    }
}

#[test]
fn runs_repeat_bit_for_bit() {
    let mut fd = SolverConfig::gp_ls(0.25, 1e-3).with_max_iterations(30);
    fd.gradient = GradientSource::FiniteDifference;
    fd.eps_f = Some(5e-3);
    let mut configs = horn_configs();
    configs.push(fd);
    for cfg in configs {
        let run = || {
            let p = make_surrogate_problem(&ProblemSpec::horn(10, 9)).unwrap();
            solve_with_lipschitz(p.oracle.as_ref(), &p.region, &p.start, &cfg, Some(p.lipschitz)).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b, "{:?}", cfg.mode);
    }
}

#[test]
fn line_search_rarely_hits_cap_at_standard_parameters() {
    let cfg = SolverConfig::gp_ls(1.0, 1e-3).with_max_iterations(300);
    let (mut capped, mut total) = (0, 0);
    for seed in 0..3 {
        let p = make_surrogate_problem(&ProblemSpec::horn(100, 40 + seed)).unwrap();
        let trace = solve(p.oracle.as_ref(), &p.region, &p.start, &cfg).unwrap();
        capped += trace.iter().filter(|r| r.capped).count();
        total += trace.len();
    }
    assert!((capped as f64) < 0.01 * total as f64, "{capped}/{total} capped");
}

#[test]
fn accepted_steps_obey_bounded_noise_descent() {
    let bound = 1e-3;
    let eps_a = 2e-3;
    let exact = test_quadratic();
    for seed in 0..5 {
        let p = make_surrogate_problem(&ProblemSpec::quadratic(bound, seed)).unwrap();
        let cfg = SolverConfig::gp_ls(0.5, eps_a).with_max_iterations(200);
        let trace = solve(p.oracle.as_ref(), &p.region, &p.start, &cfg).unwrap();
        for r in trace.iter().filter(|r| !r.capped) {
            let slope: f64 = r.direction.iter().zip(&r.gradient).map(|(d, g)| d * g).sum();
            let rhs = exact.value(&r.x) + cfg.c * r.beta * slope + 2.0 * eps_a + 2.0 * bound;
            assert!(exact.value(&r.x_next) <= rhs + 1e-12, "seed {seed} k={}", r.k);
        }
    }
}

#[test]
fn gp_ls_cal_parameters_change_only_at_window_ends_and_stay_clamped() {
    let eps_f = 2e-2;
    let cfg = SolverConfig::gp_ls_cal(0.025, 1e-2, eps_f).with_max_iterations(200);
    let p = make_surrogate_problem(&ProblemSpec::horn(10, 5)).unwrap();
    let trace = solve(p.oracle.as_ref(), &p.region, &p.start, &cfg).unwrap();
    for pair in trace.windows(2) {
        if pair[1].k % cfg.memory != 0 {
            assert_eq!(pair[0].eps_a_used, pair[1].eps_a_used);
            assert_eq!(pair[0].alpha0_used, pair[1].alpha0_used);
        }
    }
    for r in &trace {
        assert!((CAL_FLOOR..=2.0 * eps_f).contains(&r.eps_a_used));
        assert!((CAL_FLOOR..=CAL_ALPHA0_CEIL).contains(&r.alpha0_used));
        assert!(r.backtracks <= 3 * cfg.memory);
        if r.capped {
            assert_eq!(r.beta, cfg.rho.powi(3 * cfg.memory as i32));
        }
    }
}

#[test]
fn finite_difference_effort_per_iteration() {
    let p = make_surrogate_problem(&ProblemSpec::quadratic(1e-4, 1)).unwrap();
    let mut cfg = SolverConfig::gp_f(0.1).with_max_iterations(10);
    cfg.gradient = GradientSource::FiniteDifference;
    cfg.eps_f = Some(1e-4);
    let trace = solve_with_lipschitz(p.oracle.as_ref(), &p.region, &p.start, &cfg, Some(p.lipschitz)).unwrap();
    let n = p.region.dim() as u64;
    for r in &trace {
        assert_eq!(r.effort, (r.k as u64 + 1) * (n + 1));
    }
}

#[test]
fn effort_budget_stops_the_run() {
    let p = make_surrogate_problem(&ProblemSpec::horn(10, 2)).unwrap();
    let mut cfg = SolverConfig::gp_ls(0.25, 1e-3).with_max_iterations(10_000);
    cfg.effort_budget = Some(500);
    let trace = solve(p.oracle.as_ref(), &p.region, &p.start, &cfg).unwrap();
    let last = trace.last().unwrap();
    assert!(p.oracle.effort() >= 500);
    assert!(trace[trace.len() - 2].effort < 500);
    assert_eq!(last.effort, p.oracle.effort());
}

proptest! {
    #[test]
    fn armijo_relaxation_is_monotone(
        f_trial in -10.0..10.0f64, f_base in -10.0..10.0f64, beta in 0.0..=1.0f64,
        slope in -10.0..=0.0f64, e1 in 0.0..1.0f64, extra in 0.0..1.0f64,
    ) {
        if relaxed_armijo_accept(f_trial, f_base, beta, slope, 1e-4, e1) {
            prop_assert!(relaxed_armijo_accept(f_trial, f_base, beta, slope, 1e-4, e1 + extra));
        }
    }

    #[test]
    fn larger_relaxation_never_needs_more_backtracks(seed in 0u64..1000, e1 in 1e-5..1e-2f64, factor in 1.0..100.0f64) {
        let p = make_surrogate_problem(&ProblemSpec::horn(10, seed)).unwrap();
        let x = random_point(&p.region, &mut ChaCha8Rng::seed_from_u64(seed));
        let count = |eps_a: f64| {
            let cfg = SolverConfig::gp_ls(0.5, eps_a);
            p.oracle.pin_batch(seed);
            let r = gp_ls_iterate(p.oracle.as_ref(), &p.region, &x, &cfg, None).unwrap();
            p.oracle.release_batch();
            r.backtracks
        };
        prop_assert!(count(e1 * factor) <= count(e1));
    }

    #[test]
    fn noise_free_steps_respect_curvature_floor(alpha0 in 0.05..2.0f64, seed in any::<u64>()) {
        let q = test_quadratic();
        let lipschitz = q.lipschitz();
        let p = make_surrogate_problem(&ProblemSpec::quadratic(0.0, 0)).unwrap();
        let x0 = random_point(&p.region, &mut ChaCha8Rng::seed_from_u64(seed));
        let oracle = AdditiveNoiseOracle::new(Box::new(q), 6, AdditiveNoise::None, 0).unwrap();
        let cfg = SolverConfig::gp_ls(alpha0, 0.0).with_max_iterations(30);
        let trace = solve(&oracle, &p.region, &x0, &cfg).unwrap();
        let floor = (cfg.rho * 2.0 * (1.0 - cfg.c) / (alpha0 * lipschitz)).min(1.0);
        for r in &trace {
            prop_assert!(r.beta >= floor * (1.0 - 1e-12), "beta {} floor {}", r.beta, floor);
        }
    }

    #[test]
    fn calibration_keeps_parameters_clamped(
        window in prop::collection::vec(0usize..40, 1..8),
        eps_f in 1e-4..1.0f64, eps_frac in 0.0..=1.0f64, alpha_frac in 0.0..=1.0f64,
    ) {
        let eps_a = CAL_FLOOR + eps_frac * (2.0 * eps_f - CAL_FLOOR);
        let alpha0 = CAL_FLOOR + alpha_frac * (CAL_ALPHA0_CEIL - CAL_FLOOR);
        let mut cal = CalibrationState::new(window.len(), eps_a, alpha0, eps_f);
        for b in window {
            cal.push(b);
        }
        let mut state = cal;
        for _ in 0..20 {
            state = calibration_update(&state);
            prop_assert!(state.within_bounds(), "{:?}", state);
        }
    }
}

#[test]
fn solver_mode_names_round_trip() {
    for m in [SolverMode::GpF, SolverMode::GpLs, SolverMode::GpLsCal] {
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<SolverMode>(&text).unwrap(), m);
        assert_eq!(text.trim_matches('"'), m.as_str());
    }
}
