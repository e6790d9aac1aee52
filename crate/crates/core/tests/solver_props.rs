mod common;

use common::*;
use rand::Rng;
use rcc_core::experiments::{gen_bsc, gen_neighbor_ring, gen_random_power4};
use rcc_core::{
    blahut_arimoto, gap_estimate, mutual_information, solve, InputDistribution, SetKind,
    SolverConfig, Termination,
};

fn cfg(epsilon: f64) -> SolverConfig {
    SolverConfig {
        epsilon,
        ..SolverConfig::default()
    }
}

/// `min_xi C(Q(xi))` over a one- or two-dimensional set by grid search on
/// a parametrization of the set, each point solved with Blahut–Arimoto.
fn minimax_grid(model: &rcc_core::UncertaintyModel) -> f64 {
    let kind = model.set().kind;
    let point = |u: &[f64]| -> Vec<f64> {
        match kind {
            SetKind::InfBall => u.iter().map(|v| 2.0 * v - 1.0).collect(),
            SetKind::TwoBall => ball_point(u, false),
            SetKind::BoxCapTwoBall => ball_point(u, true),
            SetKind::Simplex if model.dim() == 1 => vec![1.0],
            SetKind::Simplex => vec![u[0], 1.0 - u[0]],
        }
    };
    let value = |xi: &[f64]| {
        blahut_arimoto(&model.assemble(xi).unwrap(), 1e-11)
            .unwrap()
            .capacity
    };
    let d = if kind == SetKind::Simplex {
        1
    } else {
        model.dim()
    };
    let u = refined_grid(|u| value(&point(u)), |_| true, d, 0.0, 1.0);
    value(&point(&u))
}

#[test]
fn certain_models_reproduce_blahut_arimoto() {
    let mut r = rng(30);
    for i in 0..20 {
        let n = r.random_range(2..6);
        let m = r.random_range(2..6);
        let model = random_model(&mut r, n, m, 2, SetKind::InfBall)
            .with_scale(0.0)
            .unwrap();
        let rep = solve(&model, &cfg(1e-5)).unwrap();
        let ba = blahut_arimoto(model.nominal(), 1e-11).unwrap();
        assert!(rep.robust_capacity <= ba.capacity + 1e-9, "instance {i}");
        assert!(
            ba.capacity - rep.robust_capacity <= 1e-5,
            "instance {i}: {} vs {}",
            rep.robust_capacity,
            ba.capacity
        );
    }
}

#[test]
fn small_models_match_the_minimax_grid() {
    let mut r = rng(31);
    for kind in [
        SetKind::InfBall,
        SetKind::TwoBall,
        SetKind::Simplex,
        SetKind::BoxCapTwoBall,
    ] {
        for s in [1usize, 2] {
            let model = random_model(&mut r, 2, 3, s, kind);
            let want = minimax_grid(&model);
            let rep = solve(&model, &cfg(1e-5)).unwrap();
            assert_ne!(rep.termination, Termination::MaxIters, "{kind:?} s={s}");
            assert!(
                rep.robust_capacity <= want + 1e-7,
                "{kind:?} s={s}: {} vs {want}",
                rep.robust_capacity
            );
            assert!(
                rep.upper_bound >= want - 1e-7,
                "{kind:?} s={s}: up {} want {want} lo {} term {:?}",
                rep.upper_bound,
                rep.robust_capacity,
                rep.termination
            );
            assert!(want - rep.robust_capacity <= 1e-5 + 1e-7);
        }
    }
}

#[test]
fn reported_bounds_bracket_the_worst_channel_capacity() {
    let mut r = rng(32);
    for kind in [
        SetKind::InfBall,
        SetKind::TwoBall,
        SetKind::Simplex,
        SetKind::BoxCapTwoBall,
    ] {
        let model = random_model(&mut r, 4, 4, 3, kind);
        let rep = solve(&model, &cfg(1e-4)).unwrap();
        assert!(rep.upper_bound - rep.robust_capacity <= 1e-4 + 1e-12);
        let worst = blahut_arimoto(&model.assemble(&rep.worst_xi).unwrap(), 1e-11).unwrap();
        assert!(rep.robust_capacity <= worst.capacity + 1e-9);
        let nominal = blahut_arimoto(model.nominal(), 1e-11).unwrap();
        assert!(rep.robust_capacity <= nominal.capacity + 1e-9);
        let p = InputDistribution::new(rep.ergodic.p.clone()).unwrap();
        let at_worst = mutual_information(&p, &model.assemble(&rep.worst_xi).unwrap()).unwrap();
        assert!((at_worst - rep.robust_capacity).abs() <= 1e-9);
        let est = gap_estimate(&rep.ergodic, &model).unwrap();
        assert!((est.gap - rep.best_gap).abs() <= 1e-9);
    }
}

#[test]
fn runs_are_deterministic() {
    let (model, _) = gen_random_power4(12, 12, 3, 0.5, 9).unwrap();
    let a = serde_json::to_string(&solve(&model, &cfg(1e-3)).unwrap()).unwrap();
    let b = serde_json::to_string(&solve(&model, &cfg(1e-3)).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn balanced_ring_equals_the_nominal_capacity() {
    let model = gen_neighbor_ring(50, 25).unwrap();
    let rep = solve(&model, &cfg(1e-3)).unwrap();
    let nominal = blahut_arimoto(model.nominal(), 1e-10).unwrap().capacity;
    assert!((rep.robust_capacity - nominal).abs() <= 1e-3);
    let w10 = solve(&gen_neighbor_ring(50, 10).unwrap(), &cfg(1e-3)).unwrap();
    let w40 = solve(&gen_neighbor_ring(50, 40).unwrap(), &cfg(1e-3)).unwrap();
    assert!((w10.robust_capacity - w40.robust_capacity).abs() <= 2e-3);
    assert!(w10.robust_capacity < nominal);
}

#[test]
fn best_gap_shrinks_with_the_iteration_budget() {
    let (model, _) = gen_random_power4(10, 10, 3, 0.75, 4).unwrap();
    let mut prev = f64::INFINITY;
    for t in [50usize, 100, 200, 400] {
        let c = SolverConfig {
            epsilon: 1e-14,
            max_iters: t,
            ..SolverConfig::default()
        };
        let rep = solve(&model, &c).unwrap();
        assert!(rep.best_gap <= prev + 1e-15, "T={t}");
        assert!(rep.gap_trace.iter().all(|&(_, g)| g >= 0.0));
        prev = rep.best_gap;
    }
}

#[test]
fn theoretical_step_needs_at_most_two_inner_steps() {
    let (model, _) = gen_random_power4(8, 8, 2, 0.5, 2).unwrap();
    let gmax = solve(&model, &cfg(1e-3)).unwrap().constants.gamma_max;
    let c = SolverConfig {
        fixed_gamma: Some(gmax),
        max_iters: 300,
        epsilon: 1e-14,
        ..SolverConfig::default()
    };
    let rep = solve(&model, &c).unwrap();
    assert!(rep.inner_iter_counts.iter().all(|&k| k <= 2));
    assert!(rep.gamma_trace.iter().all(|&g| g == gmax));
}

#[test]
fn bsc_interval_converges_to_the_analytic_saddle() {
    let model = gen_bsc(0.3, 0.45).unwrap();
    let rep = solve(&model, &cfg(1e-6)).unwrap();
    let want = std::f64::consts::LN_2 + 0.45f64 * 0.45f64.ln() + 0.55f64 * 0.55f64.ln();
    assert!((rep.robust_capacity - want).abs() <= 1e-6);
    assert!((rep.ergodic.p[0] - 0.5).abs() <= 1e-2);
}
