use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softcrowd::control::{
    iterated_mse_bound, optimize_beta_mc, optimize_beta_robust, optimize_profile_mc, phase_diagram,
    robust_cost_bound, robust_dynamic_schedule, schedule_bound_cost, RobustProblem,
};
use softcrowd::grid::range_inclusive;
use softcrowd::montecarlo::McSpec;
use softcrowd::CrowdConfig;

/// Sum of the normalized bound iterated by hand: v <- m^2 v + (1-b)^2 r, v(0) = 1.
fn termwise_cost(g: f64, r: f64, t: usize, b: f64) -> f64 {
    let m = (1.0 - b) * g + b;
    let mut v = 1.0;
    let mut total = 0.0;
    for _ in 0..t {
        total += v;
        v = m * m * v + (1.0 - b) * (1.0 - b) * r;
    }
    total
}

fn brute_argmin(g: f64, r: f64, t: usize) -> f64 {
    let mut best = (0.0, f64::INFINITY);
    for k in 0..100_000 {
        let b = k as f64 * 1e-5;
        let c = termwise_cost(g, r, t, b);
        if c < best.1 {
            best = (b, c);
        }
    }
    best.0
}

#[test]
fn closed_form_matches_termwise_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..1000 {
        let g = rng.random_range(0.01..0.99);
        let r = rng.random_range(0.0..2.0);
        let t = rng.random_range(1..200);
        let b = rng.random_range(0.0..0.999);
        let p = RobustProblem::new(g, r, t).unwrap();
        let closed = robust_cost_bound(&p, b).unwrap();
        let oracle = termwise_cost(g, r, t, b);
        assert!(((closed - oracle) / oracle).abs() < 1e-9, "g={g} r={r} t={t} b={b}");
        let via_series: f64 = (0..t).map(|k| iterated_mse_bound(&p, b, k).unwrap()).sum();
        assert!(((via_series - oracle) / oracle).abs() < 1e-9);
    }
}

#[test]
fn robust_optimum_matches_brute_force() {
    for (g, r, t) in [(0.75, 0.05, 30), (0.96, 0.03, 69), (0.85, 0.05, 30), (0.95, 0.05, 30), (0.6, 0.2, 10)] {
        let d = optimize_beta_robust(&RobustProblem::new(g, r, t).unwrap()).unwrap();
        let oracle = brute_argmin(g, r, t);
        assert!((d.beta.unwrap() - oracle).abs() < 2e-4, "g={g}: {} vs {oracle}", d.beta.unwrap());
    }
}

#[test]
fn robust_optimum_reference_values() {
    // Oracle values from the brute-force search above.
    let d = optimize_beta_robust(&RobustProblem::new(0.75, 0.05, 30).unwrap()).unwrap();
    assert!((d.beta.unwrap() - 0.256).abs() < 0.002);
    assert!(d.delta_mse > 0.0);
    let t09 = optimize_beta_robust(&RobustProblem::new(0.96, 0.03, 69).unwrap()).unwrap();
    assert!((t09.beta.unwrap() - 0.35).abs() < 0.05);
}

#[test]
fn greedy_schedule_never_loses_to_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..40 {
        let p = RobustProblem::new(rng.random_range(0.3..0.98), rng.random_range(0.0..0.5), rng.random_range(2..60)).unwrap();
        let dynamic = robust_dynamic_schedule(&p).unwrap();
        let constant = optimize_beta_robust(&p).unwrap();
        assert!(dynamic.predicted_cost <= constant.predicted_cost * (1.0 + 1e-9));
        let schedule = dynamic.schedule.unwrap();
        assert_eq!(schedule.len(), p.horizon);
        assert!(schedule.iter().all(|b| (0.0..1.0).contains(b)));
        let replay = schedule_bound_cost(&p, &schedule).unwrap();
        assert!((replay - dynamic.predicted_cost).abs() < 1e-9 * replay);
    }
}

#[test]
fn phase_diagram_shape() {
    let gains = range_inclusive(0.05, 0.95, 0.05).unwrap();
    let ratios = range_inclusive(0.0, 0.25, 0.01).unwrap();
    let d = phase_diagram(&gains, &ratios, 30).unwrap();
    for row in &d.beta {
        assert_eq!(row[0], 0.0);
        for w in row.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "{row:?}");
        }
    }
    let at = |g: f64| d.beta[gains.iter().position(|x| (x - g).abs() < 1e-9).unwrap()][5];
    assert!(at(0.95) > at(0.85));
}

fn set_b() -> CrowdConfig {
    CrowdConfig::uniform(39, 0.75, 60.0, 72000.0)
}

#[test]
fn mc_optimum_beats_open_loop_and_is_consistent() {
    let grid = range_inclusive(0.0, 0.6, 0.05).unwrap();
    let sweep = optimize_beta_mc(&set_b(), 30, McSpec::new(1000, 7), &grid).unwrap();
    let d = &sweep.design;
    assert!(d.delta_mse > 0.0);
    assert!((0.2..=0.4).contains(&d.beta.unwrap()));
    // The beta = 0 grid point is the open-loop baseline on the same draws.
    assert_eq!(sweep.costs[0], sweep.open_loop.mean_cost);
    let min = sweep.costs.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(d.predicted_cost, min);
}

#[test]
fn profile_beats_constant_under_common_draws() {
    let spec = McSpec::new(1000, 8);
    let constant = optimize_beta_mc(&set_b(), 30, spec, &range_inclusive(0.0, 0.6, 0.05).unwrap()).unwrap();
    let profile = optimize_profile_mc(&set_b(), 30, spec, &range_inclusive(0.005, 0.06, 0.005).unwrap()).unwrap();
    assert_eq!(constant.open_loop, profile.open_loop);
    assert!(profile.design.delta_mse > constant.design.delta_mse);
}
