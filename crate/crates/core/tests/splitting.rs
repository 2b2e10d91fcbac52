use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rphedge::hedging::{AlgorithmConfig, ParallelState, PhState, RoundOutcome, RphState};
use rphedge::hydro::HydroSpec;
use rphedge::iterate::IterateMatrix;
use rphedge::problem::StochasticProblem;
use rphedge::prox::{ProxSettings, ProxWorkspace};
use rphedge::random::{self, Limits};
use rphedge::runtime::SimSchedule;
use rphedge::splitting::{arock_step, dr_step, rdr_step, SplittingState};

/// Random instance with a point `x ∈ W`, multipliers `w ∈ W⊥` and `μ`.
fn case(seed: u64) -> (StochasticProblem, IterateMatrix, IterateMatrix, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = random::problem(&mut rng, &Limits::default()).unwrap();
    let (s, n) = (problem.num_scenarios(), problem.dim());
    let tree = problem.tree();
    let x = tree.project_nonanticipative(&random::iterate(&mut rng, s, n, 2.0)).unwrap();
    let raw = random::iterate(&mut rng, s, n, 2.0);
    let w = raw.sub(&tree.project_nonanticipative(&raw).unwrap()).unwrap();
    let mu = rng.gen_range(0.2..3.0);
    (problem, x, w, mu)
}

fn config(mu: f64) -> AlgorithmConfig {
    AlgorithmConfig { mu, ..AlgorithmConfig::default() }
}

#[test]
fn ph_iteration_is_a_douglas_rachford_step() {
    for seed in 0..50 {
        let (problem, x, w, mu) = case(seed);
        let z = x.add_scaled(mu, &w).unwrap();
        let mut ws = ProxWorkspace::batch(problem.num_scenarios());
        let next = dr_step(&SplittingState::new(z, mu).unwrap(), &problem, &ProxSettings::default(), &mut ws).unwrap();
        let mut ph = PhState::from_parts(&problem, &config(mu), x, w);
        ph.step().unwrap();
        assert!(ph.z().max_abs_diff(&next.z) <= 1e-10, "seed {seed}: {}", ph.z().max_abs_diff(&next.z));
        assert!(problem.tree().project_nonanticipative(&next.z).unwrap().max_abs_diff(ph.x()) <= 1e-10);
    }
}

#[test]
fn rph_step_is_a_randomized_douglas_rachford_step() {
    for seed in 0..50 {
        let (problem, x, w, mu) = case(seed);
        let z = x.add_scaled(mu, &w).unwrap();
        let s = (seed as usize * 7) % problem.num_scenarios();
        let mut ws = ProxWorkspace::new();
        let next = rdr_step(&SplittingState::new(z.clone(), mu).unwrap(), &problem, s, &ProxSettings::default(), &mut ws)
            .unwrap();
        let mut rph = RphState::new(&problem, &config(mu)).unwrap();
        rph.set_z(z.clone()).unwrap();
        rph.step_with(s).unwrap();
        for r in 0..problem.num_scenarios() {
            let (a, b) = (rph.z().row(r), next.z.row(r));
            if r == s {
                let err = a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
                assert!(err <= 1e-12, "seed {seed}: {err}");
            } else {
                assert_eq!(a, z.row(r));
                assert_eq!(b, z.row(r));
            }
        }
    }
}

#[test]
fn delay_free_arock_with_matched_stepsize_is_randomized_douglas_rachford() {
    for seed in 0..50 {
        let (problem, x, w, mu) = case(seed);
        let z = x.add_scaled(mu, &w).unwrap();
        let state = SplittingState::new(z.clone(), mu).unwrap();
        let s = seed as usize % problem.num_scenarios();
        let q = 1.0 / problem.num_scenarios() as f64;
        let eta = problem.num_scenarios() as f64 * q / 2.0;
        let settings = ProxSettings::default();
        let a = arock_step(&state, &z, s, eta, q, &problem, &settings, &mut ProxWorkspace::new()).unwrap();
        let r = rdr_step(&state, &problem, s, &settings, &mut ProxWorkspace::new()).unwrap();
        assert!(a.z.max_abs_diff(&r.z) <= 1e-12, "seed {seed}");
    }
}

#[test]
fn full_parallel_round_is_a_douglas_rachford_step() {
    for seed in 0..20 {
        let (problem, x, w, mu) = case(seed);
        let s_count = problem.num_scenarios();
        let z = x.add_scaled(mu, &w).unwrap();
        let mut ws = ProxWorkspace::batch(s_count);
        let next = dr_step(&SplittingState::new(z.clone(), mu).unwrap(), &problem, &ProxSettings::default(), &mut ws)
            .unwrap();
        let cfg = AlgorithmConfig { workers: s_count, schedule: Some(SimSchedule::constant(3)), ..config(mu) };
        let mut par = ParallelState::new(&problem, &cfg).unwrap();
        par.set_z(z).unwrap();
        let mut order: Vec<usize> = (0..s_count).rev().collect();
        order.rotate_left(seed as usize % s_count);
        assert_eq!(par.round_with(&order).unwrap(), RoundOutcome::Applied(order.clone()));
        assert!(par.z().max_abs_diff(&next.z) <= 1e-10, "seed {seed}");
    }
}

/// Fixed point `z* = x* + μw*` from a long PH run on a bounded instance.
fn fixed_point(problem: &StochasticProblem, mu: f64) -> IterateMatrix {
    let mut ph = PhState::new(problem, &config(mu));
    for _ in 0..100_000 {
        if ph.step().unwrap() <= 1e-13 {
            break;
        }
    }
    ph.z()
}

#[test]
fn douglas_rachford_iterates_are_fejer_monotone() {
    let owned = HydroSpec { lambda: 0.05, ..HydroSpec::new(2, 3, 11) }.generate().unwrap().build().unwrap();
    let problem = &owned;
    let mu = 1.0;
    let star = fixed_point(problem, mu);
    let settings = ProxSettings::default();
    let mut ws = ProxWorkspace::batch(problem.num_scenarios());
    let again = dr_step(&SplittingState::new(star.clone(), mu).unwrap(), problem, &settings, &mut ws).unwrap();
    assert!(again.z.max_abs_diff(&star) <= 1e-8);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut state = SplittingState::new(random::iterate(&mut rng, problem.num_scenarios(), problem.dim(), 4.0), mu).unwrap();
    let tree = problem.tree();
    let mut dist = tree.p_norm(&state.z.sub(&star).unwrap()).unwrap();
    for _ in 0..60 {
        state = dr_step(&state, problem, &settings, &mut ws).unwrap();
        let next = tree.p_norm(&state.z.sub(&star).unwrap()).unwrap();
        assert!(next <= dist + 1e-9, "{next} > {dist}");
        dist = next;
    }
}
