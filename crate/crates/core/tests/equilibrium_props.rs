mod common;

use gridgame_core::attack::AggregateTable;
use gridgame_core::equilibrium::{
    defender_utility, defense_candidates, enumerate_psne, evaluate_defense, find_hierarchical_eq, is_psne,
    lri_update, normalize_payoff, payoff_bounds, run_learning, satisfaction_search, search_stats, AttackGame,
    Game, SatisfactionConfig, StrategyVector, UtilityTensor,
};
use gridgame_core::LearningConfig;
use proptest::prelude::*;

/// Pure equilibria by checking every deviation of every profile.
fn brute_psne(shape: &[usize], u: &dyn Fn(usize, &[usize]) -> f64) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::new();
    for code in 0..total {
        let mut p = vec![0; shape.len()];
        let mut c = code;
        for m in (0..shape.len()).rev() {
            p[m] = c % shape[m];
            c /= shape[m];
        }
        let stable = (0..shape.len()).all(|m| {
            (0..shape[m]).all(|a| {
                let mut d = p.clone();
                d[m] = a;
                u(m, &d) <= u(m, &p) + 1e-12
            })
        });
        if stable {
            out.push(p);
        }
    }
    out
}

fn table_game(shape: Vec<usize>, values: Vec<f64>) -> (UtilityTensor<f64>, impl Fn(usize, &[usize]) -> f64) {
    let players = shape.len();
    let s2 = shape.clone();
    let lookup = move |m: usize, p: &[usize]| {
        let mut idx = 0;
        for (k, &a) in p.iter().enumerate() {
            idx = idx * s2[k] + a;
        }
        values[idx * players + m]
    };
    let l2 = lookup.clone();
    (UtilityTensor::from_fn(shape, move |m, p| l2(m, p)), lookup)
}

fn random_game() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(1usize..5, 2..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>() * shape.len();
        // Small integer payoffs make ties and multiple equilibria common.
        (Just(shape), prop::collection::vec((-3i32..4).prop_map(f64::from), n))
    })
}

fn simplex(n: usize) -> impl Strategy<Value = StrategyVector<f64>> {
    prop::collection::vec(0.01..1.0f64, n).prop_map(|w| {
        let s: f64 = w.iter().sum();
        StrategyVector(w.iter().map(|x| x / s).collect())
    })
}

proptest! {
    #[test]
    fn enumeration_matches_brute_force((shape, values) in random_game()) {
        let (game, u) = table_game(shape.clone(), values);
        let fast = enumerate_psne(&game, 1_000_000).unwrap();
        prop_assert_eq!(&fast, &brute_psne(&shape, &u));
        for p in &fast {
            prop_assert!(is_psne(&game, p));
        }
    }

    #[test]
    fn lri_stays_on_the_simplex(
        q in simplex(7),
        chosen in 0usize..7,
        r in 0.0..=1.0f64,
        b in 0.001..0.5f64,
    ) {
        let next = lri_update(&q, chosen, r, b);
        prop_assert!(next.is_valid());
        prop_assert!((next.0.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(next.0[chosen] >= q.0[chosen] - 1e-15);
        for (k, (&a, &p)) in next.0.iter().zip(&q.0).enumerate() {
            if k != chosen {
                prop_assert!((a - p * (1.0 - b * r)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_preserves_order(
        us in prop::collection::vec(-100.0..100.0f64, 2..20),
    ) {
        let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ns: Vec<f64> = us.iter().map(|&u| normalize_payoff(u, lo, hi)).collect();
        for i in 0..us.len() {
            prop_assert!((0.0..=1.0).contains(&ns[i]));
            for j in 0..us.len() {
                if us[i] > us[j] {
                    prop_assert!(ns[i] >= ns[j]);
                }
            }
        }
        let arg = |v: &[f64]| v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b });
        prop_assert_eq!(arg(&us), arg(&ns));
    }
}

/// Both players prefer action 1 whatever the other does.
fn dominant_game() -> UtilityTensor<f64> {
    UtilityTensor::from_fn(vec![2, 2], |m, p| {
        let (me, other) = if m == 0 { (p[0], p[1]) } else { (p[1], p[0]) };
        [[3.0, 0.0], [5.0, 1.0]][me][other]
    })
}

#[test]
fn dominant_game_learning_is_reliable() {
    let game = dominant_game();
    let bounds = payoff_bounds(&game);
    let hits = (0..100)
        .filter(|&seed| {
            let cfg = LearningConfig { step: 0.02, seed, ..LearningConfig::default() };
            let out = run_learning(&game, &cfg, &bounds);
            out.converged && out.profile == vec![1, 1]
        })
        .count();
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn matching_pennies_has_no_pure_equilibrium() {
    let game = UtilityTensor::from_fn(vec![2, 2], |m, p| {
        let same = if p[0] == p[1] { 1.0 } else { -1.0 };
        if m == 0 { same } else { -same }
    });
    assert!(enumerate_psne(&game, 100).unwrap().is_empty());
}

#[test]
fn flat_game_never_learns() {
    let game = UtilityTensor::from_fn(vec![4, 3], |_, _| 2.5);
    let bounds = payoff_bounds(&game);
    let cfg = LearningConfig { max_iterations: 2_000, ..LearningConfig::default() };
    let out = run_learning(&game, &cfg, &bounds);
    assert!(!out.converged);
    assert_eq!(out.strategies[0], StrategyVector::uniform(4));
    assert_eq!(out.strategies[1], StrategyVector::uniform(3));
}

#[test]
fn search_statistics_closed_forms() {
    let s = search_stats(9, 36, 10);
    assert_eq!(s.p0, 0.25);
    assert!((s.p0_star - 0.9437).abs() < 5e-5);
    assert_eq!((s.mu0, s.v0), (Some(4.0), Some(12.0)));
}

#[test]
fn search_with_replacement_is_geometric() {
    // 9 of 36 defenses satisfy the threshold, so trials follow Geometric(1/4).
    let vulnerable: Vec<usize> = (0..9).collect();
    let good: Vec<Vec<usize>> = defense_candidates(&vulnerable, 2, 2).into_iter().step_by(4).collect();
    assert_eq!(good.len(), 9);
    let runs = 1000;
    let trials: Vec<f64> = (0..runs)
        .map(|seed| {
            let cfg = SatisfactionConfig {
                gamma0: 1.0,
                max_trials: 10_000,
                seed,
                vulnerable: vulnerable.clone(),
                with_replacement: true,
            };
            let out = satisfaction_search(&cfg, 2, |d| Ok(if good.contains(&d.to_vec()) { 0.5 } else { 2.0 })).unwrap();
            assert!(out.accepted.is_some());
            out.trials as f64
        })
        .collect();
    let mean = trials.iter().sum::<f64>() / runs as f64;
    let var = trials.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
    let s = search_stats(9, 36, 10);
    assert!((mean / s.mu0.unwrap() - 1.0).abs() < 0.10, "mean {mean}");
    assert!((var / s.v0.unwrap() - 1.0).abs() < 0.20, "variance {var}");
}

#[test]
fn search_without_replacement_never_repeats() {
    let cfg = SatisfactionConfig {
        gamma0: 1.0,
        max_trials: 36,
        seed: 4,
        vulnerable: (0..9).collect(),
        with_replacement: false,
    };
    let out = satisfaction_search(&cfg, 2, |_| Ok(5.0)).unwrap();
    let mut seen: Vec<_> = out.history.iter().map(|(d, _)| d.clone()).collect();
    seen.sort();
    seen.dedup();
    assert_eq!(seen.len(), 36);
}

#[test]
fn hierarchical_equilibrium_is_the_best_defense() {
    // Attackers 2 and 3 keep the grid small.
    let ctx = common::context_with(&[1, 2]);
    let table = AggregateTable::build(&ctx, 10_000_000).unwrap();
    let vulnerable: Vec<usize> = ctx.specs.iter().flat_map(|s| s.k_indices.clone()).collect();
    let he = find_hierarchical_eq(&ctx, &table, 1, &vulnerable, 0.0, 10_000_000).unwrap();
    assert_eq!(he.evaluations.len(), 1 + vulnerable.len());
    for e in &he.evaluations {
        assert!(he.best.u0 <= e.u0);
        let again = evaluate_defense(&ctx, &table, &e.defense, 0.0, 10_000_000).unwrap();
        assert_eq!(again.u0, e.u0);
        let expect = defender_utility(ctx.case.total_load(), e.rmsd, 0.0);
        assert!((e.u0 - expect).abs() < 1e-12);
    }
    // Worst case over the equilibria: no equilibrium is worse for the defender.
    let game = AttackGame::new(&ctx, &table, &he.best.defense);
    for p in enumerate_psne(&game, 10_000_000).unwrap() {
        let o = ctx.outcome(game.outcome_id(&p));
        assert!(defender_utility(ctx.case.total_load(), o.rmsd, 0.0) <= he.best.u0 + 1e-12);
    }
}

fn solo_runs(which: usize, seeds: u64) -> (Vec<f64>, Vec<(bool, bool, f64)>) {
    let ctx = common::context_with(&[which]);
    let table = AggregateTable::build(&ctx, 1_000).unwrap();
    let game = AttackGame::new(&ctx, &table, &[]);
    let payoffs: Vec<f64> = (0..game.num_actions(0)).map(|a| game.payoff(0, &[a])).collect();
    let bounds = payoff_bounds(&game);
    let runs = (0..seeds)
        .map(|seed| {
            let cfg = LearningConfig { step: 0.002, max_iterations: 1_000_000, seed, ..LearningConfig::default() };
            let out = run_learning(&game, &cfg, &bounds);
            (out.converged, out.rejected, payoffs[out.profile[0]])
        })
        .collect();
    (payoffs, runs)
}

#[test]
fn solo_learning_finds_the_enumerated_best_response() {
    for which in [0, 1] {
        let (payoffs, runs) = solo_runs(which, 5);
        let top = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (converged, _, u) in runs {
            assert!(converged, "attacker {}", which + 1);
            assert_eq!(u, top);
        }
    }
}

#[test]
fn solo_learning_is_near_optimal_when_best_actions_nearly_tie() {
    // Attacker 3's best few actions differ only by attack cost, well under
    // 1% of its payoff range, so a finite step can absorb on a runner-up.
    let (payoffs, runs) = solo_runs(2, 5);
    let top = payoffs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let low = payoffs.iter().cloned().fold(f64::INFINITY, f64::min);
    for (converged, rejected, u) in runs {
        assert!(converged || rejected);
        assert!((top - u) / (top - low) < 0.01);
    }
}
