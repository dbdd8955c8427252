use gridgame_core::grid::{build_shift_factors, GridCase as Case};
use gridgame_core::lp::{LinearProgram, Relation};
use gridgame_core::market::{
    compute_lmps, congestion_rent, solve_da_dcopf, solve_expost_dcopf, Bandwidth, CongestionSets,
};
use gridgame_core::synth::{random_case, random_lp};
use gridgame_core::GridCase;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exhaustive vertex search: every choice of `n` tight rows (constraints or
/// bounds) that is nonsingular and feasible is a vertex.
fn vertex_oracle(lp: &LinearProgram<f64>) -> f64 {
    let n = lp.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = lp.constraints.iter().map(|c| (c.coeffs.clone(), c.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        rows.push((e.clone(), lp.lower[j]));
        if let Some(u) = lp.upper[j] {
            rows.push((e, u));
        }
    }
    let feasible = |x: &[f64]| {
        lp.max_violation(x) < 1e-7
            && (0..n).all(|j| x[j] >= lp.lower[j] - 1e-7 && lp.upper[j].map_or(true, |u| x[j] <= u + 1e-7))
    };
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
        let b = DVector::from_iterator(n, pick.iter().map(|&r| rows[r].1));
        if a.determinant().abs() > 1e-9 {
            if let Some(x) = a.lu().solve(&b) {
                let x: Vec<f64> = x.iter().copied().collect();
                if feasible(&x) {
                    let obj: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                    best = best.min(obj);
                }
            }
        }
        // next combination
        let m = rows.len();
        let mut i = n;
        while i > 0 && pick[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for k in i..n {
            pick[k] = pick[k - 1] + 1;
        }
    }
}

/// min cᵀx over x ≥ 0 with c > 0, mixed ≤/≥ rows around an interior point.
fn positive_cost_lp(seed: u64, rows: usize, vars: usize) -> LinearProgram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = (0..vars).map(|_| rng.gen_range(0.5..5.0)).collect();
    let mut lp = LinearProgram::new(c);
    let x0: Vec<f64> = (0..vars).map(|_| rng.gen_range(1.0..5.0)).collect();
    for _ in 0..rows {
        let a: Vec<f64> = (0..vars).map(|_| rng.gen_range(-1.0..3.0)).collect();
        let act: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        if rng.gen_bool(0.6) {
            lp.push(a, Relation::Ge, act - rng.gen_range(0.5..4.0));
        } else {
            lp.push(a, Relation::Le, act + rng.gen_range(0.5..4.0));
        }
    }
    lp
}

#[test]
fn ten_by_ten_lps_match_vertex_enumeration() {
    for seed in 0..5 {
        let lp = positive_cost_lp(seed, 10, 10);
        let sol = lp.solve().unwrap();
        let oracle = vertex_oracle(&lp);
        assert!((sol.objective - oracle).abs() < 1e-6, "seed {seed}: {} vs {oracle}", sol.objective);
        assert!(lp.max_violation(&sol.x) < 1e-7);
        assert!((lp.dual_objective(&sol) - sol.objective).abs() < 1e-6 * (1.0 + sol.objective.abs()));
    }
}

#[test]
fn boxed_lps_match_vertex_enumeration() {
    for seed in 0..30 {
        let lp = random_lp(seed, 6, 4);
        let sol = lp.solve().unwrap();
        let oracle = vertex_oracle(&lp);
        assert!((sol.objective - oracle).abs() < 1e-6, "seed {seed}");
        assert!((lp.dual_objective(&sol) - sol.objective).abs() < 1e-6 * (1.0 + sol.objective.abs()));
    }
}

fn two_bus(limit: f64) -> GridCase {
    two_bus_ref(limit, 2)
}

fn two_bus_ref(limit: f64, reference: usize) -> GridCase {
    Case::from_json(&format!(
        r#"{{"buses":[{{"id":1,"load":0}},{{"id":2,"load":150}}],
            "lines":[{{"from":1,"to":2,"reactance":0.1,"limit":{limit}}}],
            "generators":[{{"bus":1,"p_min":0,"p_max":100,"price":10}},{{"bus":2,"p_min":0,"p_max":100,"price":20}}],
            "reference_bus":{reference},"sigma":1}}"#
    ))
    .unwrap()
}

fn three_bus() -> GridCase {
    Case::from_json(
        r#"{"buses":[{"id":1,"load":0},{"id":2,"load":0},{"id":3,"load":100}],
            "lines":[{"from":1,"to":3,"reactance":0.1,"limit":50},
                     {"from":1,"to":2,"reactance":0.1,"limit":100},
                     {"from":2,"to":3,"reactance":0.1,"limit":100}],
            "generators":[{"bus":1,"p_min":0,"p_max":200,"price":10},{"bus":2,"p_min":0,"p_max":200,"price":30}],
            "reference_bus":3,"sigma":1}"#,
    )
    .unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn two_bus_hand_kkt() {
    let case = two_bus(100.0);
    let x = build_shift_factors(&case).unwrap();
    let da = solve_da_dcopf(&case, &x).unwrap();
    assert!(close(&da.dispatch, &[100.0, 50.0], 1e-9));
    assert!(close(&da.lmps, &[10.0, 20.0], 1e-6));
    assert_eq!(da.congestion.all(), vec![0]);

    let loose = two_bus(200.0);
    let da2 = solve_da_dcopf(&loose, &build_shift_factors(&loose).unwrap()).unwrap();
    assert!(close(&da2.lmps, &[20.0, 20.0], 1e-6));
    assert!(da2.congestion.is_empty());

    let rt = solve_expost_dcopf(&case, &x, &CongestionSets::new(vec![0], vec![]), &da, Bandwidth::default()).unwrap();
    assert!(close(&rt.lmps, &[10.0, 20.0], 1e-6));
    assert_eq!(rt.lower_duals[0], 0.0);
}

#[test]
fn degenerate_two_bus_reports_a_valid_dual() {
    // Unit 1 sits at capacity exactly where the line binds, so any line
    // price in [0, 10] is optimal; only the flag and the price range are fixed.
    let case = two_bus_ref(100.0, 1);
    let x = build_shift_factors(&case).unwrap();
    let da = solve_da_dcopf(&case, &x).unwrap();
    assert!(da.degenerate);
    assert!((da.lmps[1] - 20.0).abs() < 1e-6);
    assert!(da.lmps[0] >= 10.0 - 1e-6 && da.lmps[0] <= 20.0 + 1e-6);
}

#[test]
fn three_bus_hand_kkt() {
    // Line 1→3 binds at P = (50, 50): μ₁ = 10 and μ₂ = 30 are the marginal
    // offers, μ₃ = λ₀ solves λ₀ − λ·2/3 = 10, λ₀ − λ/3 = 30.
    let case = three_bus();
    let x = build_shift_factors(&case).unwrap();
    let da = solve_da_dcopf(&case, &x).unwrap();
    assert!(close(&da.dispatch, &[50.0, 50.0], 1e-9));
    assert!(close(&da.lmps, &[10.0, 30.0, 50.0], 1e-6));
    assert!((da.energy_price - 50.0).abs() < 1e-6);
    assert!((da.upper_duals[0] - 60.0).abs() < 1e-6);
    assert!((congestion_rent(&case, &da) - 3000.0).abs() < 1e-6);
    let again = compute_lmps(da.energy_price, &da.upper_duals, &da.lower_duals, &x, &[0, 1, 2]);
    assert!(close(&again, &da.lmps, 1e-12));
}

/// Angle formulation with one balance row per bus; its balance duals are
/// the LMPs directly.
fn bus_balance_lmps(case: &GridCase) -> Vec<f64> {
    let (n, g) = (case.num_buses(), case.num_generators());
    let vars = g + n;
    let big = 1e4;
    let mut c: Vec<f64> = case.generators.iter().map(|g| g.price).collect();
    c.extend(vec![0.0; n]);
    let mut lower: Vec<f64> = case.generators.iter().map(|g| g.p_min).collect();
    let mut upper: Vec<Option<f64>> = case.generators.iter().map(|g| Some(g.p_max)).collect();
    for i in 0..n {
        let fixed = i + 1 == case.reference_bus;
        lower.push(if fixed { 0.0 } else { -big });
        upper.push(Some(if fixed { 0.0 } else { big }));
    }
    let mut lp = LinearProgram::new(c).with_bounds(lower, upper);
    for i in 0..n {
        let mut row = vec![0.0; vars];
        for (k, gen) in case.generators.iter().enumerate() {
            if gen.bus == i + 1 {
                row[k] = 1.0;
            }
        }
        for l in &case.lines {
            let y = 1.0 / l.reactance;
            if l.from == i + 1 {
                row[g + l.from - 1] -= y;
                row[g + l.to - 1] += y;
            }
            if l.to == i + 1 {
                row[g + l.from - 1] += y;
                row[g + l.to - 1] -= y;
            }
        }
        lp.push(row, Relation::Eq, case.buses[i].load);
    }
    for l in &case.lines {
        let mut row = vec![0.0; vars];
        row[g + l.from - 1] = 1.0 / l.reactance;
        row[g + l.to - 1] = -1.0 / l.reactance;
        lp.push(row.clone(), Relation::Le, l.limit);
        lp.push(row, Relation::Ge, -l.limit);
    }
    let sol = lp.solve().unwrap();
    sol.duals[..n].to_vec()
}

fn congested_random(seed: u64) -> Option<GridCase> {
    let mut case = random_case(seed, 6 + (seed % 6) as usize);
    let x = build_shift_factors(&case).ok()?;
    let da = solve_da_dcopf(&case, &x).ok()?;
    let (l, f) = da
        .flows
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())?;
    case.lines[l].limit = 0.7 * f.abs();
    let tight = solve_da_dcopf(&case, &x).ok()?;
    (!tight.degenerate && !tight.congestion.is_empty()).then_some(case)
}

#[test]
fn lmps_match_bus_balance_duals_and_finite_differences() {
    let mut cases = vec![three_bus()];
    cases.extend((0..40).filter_map(congested_random));
    assert!(cases.len() >= 10);
    for case in &cases {
        let x = build_shift_factors(case).unwrap();
        let da = solve_da_dcopf(case, &x).unwrap();
        assert!(close(&da.lmps, &bus_balance_lmps(case), 1e-6), "{}", case.name);
        let h = 1e-5;
        for i in 0..case.num_buses() {
            let mut bumped = case.clone();
            bumped.buses[i].load += h;
            let up = solve_da_dcopf(&bumped, &x).unwrap();
            let fd = (up.objective - da.objective) / h;
            assert!((fd - da.lmps[i]).abs() < 1e-6 * (1.0 + da.lmps[i].abs()), "{} bus {}", case.name, i + 1);
        }
        assert!(congestion_rent(case, &da) >= -1e-9);
    }
}

#[test]
fn empty_expost_sets_keep_day_ahead_prices() {
    for seed in 0..100 {
        let case = random_case(1000 + seed, 5 + (seed % 20) as usize);
        let x = build_shift_factors(&case).unwrap();
        let da = solve_da_dcopf(&case, &x).unwrap();
        assert!(da.congestion.is_empty());
        let rt = solve_expost_dcopf(&case, &x, &CongestionSets::default(), &da, Bandwidth::default()).unwrap();
        assert!(close(&rt.lmps, &da.lmps, 1e-9), "seed {seed}");
    }
}
