use std::time::Instant;

use gridgame_core::grid::{build_measurement_model, build_measurement_model_with_variances, build_shift_factors, load_case};
use gridgame_core::linalg::Matrix;
use gridgame_core::synth::random_case;
use gridgame_core::GridCase;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ieee30() -> GridCase {
    load_case(concat!(env!("CARGO_MANIFEST_DIR"), "/../../cases/ieee30.case")).unwrap()
}

fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

#[test]
fn hat_matrix_is_a_symmetric_projection() {
    let case = ieee30();
    let start = Instant::now();
    let model = build_measurement_model(&case, 0.975).unwrap();
    let mh = model.gain_map.mul(&model.h);
    let s = &model.hat;
    let id = Matrix::identity(29);
    assert!(mh.max_abs_diff(&id) < 1e-9);
    assert!(s.max_abs_diff(&s.transpose()) < 1e-9);
    assert!(s.mul(s).max_abs_diff(s) < 1e-9);
    assert!((s.trace() - 29.0).abs() < 1e-6);
    let w = &model.residual;
    assert!(w.mul(w).max_abs_diff(w) < 1e-9);
    assert!(start.elapsed().as_secs_f64() < 1.0);
    assert_eq!((model.num_measurements(), model.num_states(), model.dof), (71, 29, 42));
}

#[test]
fn gain_map_matches_pseudo_inverse() {
    let case = ieee30();
    let model = build_measurement_model(&case, 0.975).unwrap();
    let h = to_na(&model.h);
    let pinv = h.clone().pseudo_inverse(1e-12).unwrap();
    let ours = to_na(&model.gain_map);
    assert!((pinv - ours).abs().max() < 1e-8);
}

#[test]
fn weighted_hat_matrix_is_not_symmetric() {
    let case = ieee30();
    let n = case.num_buses() + case.num_lines();
    let variances: Vec<f64> = (0..n).map(|i| 0.5 + (i % 7) as f64 * 0.3).collect();
    let model = build_measurement_model_with_variances(&case, variances, 0.975).unwrap();
    let s = &model.hat;
    assert!(s.max_abs_diff(&s.transpose()) > 1e-3);
    assert!(s.mul(s).max_abs_diff(s) < 1e-9);
    assert!((s.trace() - 29.0).abs() < 1e-6);
}

/// Independent angle solve with nalgebra: B'·θ = p, F = (θ_from − θ_to)/x.
fn dc_flows(case: &GridCase, injection: &[f64]) -> Vec<f64> {
    let n = case.num_buses();
    let r = case.reference_bus - 1;
    let keep: Vec<usize> = (0..n).filter(|&i| i != r).collect();
    let mut b = DMatrix::<f64>::zeros(n, n);
    for l in &case.lines {
        let (i, j, y) = (l.from - 1, l.to - 1, 1.0 / l.reactance);
        b[(i, i)] += y;
        b[(j, j)] += y;
        b[(i, j)] -= y;
        b[(j, i)] -= y;
    }
    let br = DMatrix::from_fn(n - 1, n - 1, |a, c| b[(keep[a], keep[c])]);
    let p = DVector::from_iterator(n - 1, keep.iter().map(|&i| injection[i]));
    let t = br.lu().solve(&p).unwrap();
    let mut theta = vec![0.0; n];
    for (a, &i) in keep.iter().enumerate() {
        theta[i] = t[a];
    }
    case.lines
        .iter()
        .map(|l| (theta[l.from - 1] - theta[l.to - 1]) / l.reactance)
        .collect()
}

fn balanced(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(-20.0..20.0)).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v -= s / n as f64);
    p
}

#[test]
fn shift_factors_reproduce_dc_flows() {
    let case = ieee30();
    let x = build_shift_factors(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for _ in 0..1000 {
        let p = balanced(&mut rng, 30);
        let ours = x.flows(&p);
        let oracle = dc_flows(&case, &p);
        let err = ours.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "max error {err}");
    }
    let r = case.reference_bus - 1;
    assert!((0..case.num_lines()).all(|l| x.get(l, r) == 0.0));
}

#[test]
fn shift_factors_on_random_networks() {
    for seed in 0..20 {
        let case = random_case(seed, 5 + seed as usize);
        case.validate().unwrap();
        let x = build_shift_factors(&case).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = balanced(&mut rng, case.num_buses());
        let err = x
            .flows(&p)
            .iter()
            .zip(dc_flows(&case, &p))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-8);
    }
}

#[test]
fn three_bus_ring_splits_two_to_one() {
    let case = GridCase::from_json(
        r#"{"buses":[{"id":1,"load":0},{"id":2,"load":0},{"id":3,"load":1}],
            "lines":[{"from":1,"to":3,"reactance":0.1,"limit":10},
                     {"from":1,"to":2,"reactance":0.1,"limit":10},
                     {"from":2,"to":3,"reactance":0.1,"limit":10}],
            "generators":[{"bus":1,"p_min":0,"p_max":5,"price":1}],
            "reference_bus":3,"sigma":1}"#,
    )
    .unwrap();
    let x = build_shift_factors(&case).unwrap();
    let f = x.flows(&[1.0, 0.0, -1.0]);
    assert!((f[0] - 2.0 / 3.0).abs() < 1e-12);
    assert!((f[1] - 1.0 / 3.0).abs() < 1e-12);
    assert!((f[2] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn bundled_case_shape() {
    let case = ieee30();
    assert_eq!((case.num_buses(), case.num_lines(), case.num_generators()), (30, 41, 6));
    assert!(!case.provenance.is_empty());
}
