//! Seeded random instances for property tests and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::{Bus, Generator, GridCase, Line};
use crate::lp::{LinearProgram, Relation};

/// A connected network with `buses ≥ 2`: a random spanning tree plus about
/// `buses / 2` extra lines. Limits are loose, so the day-ahead market is
/// uncongested unless the caller tightens a line.
pub fn random_case(seed: u64, buses: usize) -> GridCase<f64> {
    assert!(buses >= 2, "need at least two buses");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (2..=buses).map(|b| (rng.gen_range(1..b), b)).collect();
    for _ in 0..buses / 2 {
        let a = rng.gen_range(1..=buses);
        let b = rng.gen_range(1..=buses);
        if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
            edges.push((a, b));
        }
    }
    let bus_list: Vec<Bus<f64>> = (1..=buses)
        .map(|id| Bus {
            id,
            load: if rng.gen_bool(0.7) { (rng.gen_range(1.0..20.0f64) * 10.0).round() / 10.0 } else { 0.0 },
        })
        .collect();
    let total: f64 = bus_list.iter().map(|b| b.load).sum::<f64>().max(1.0);
    let lines = edges
        .into_iter()
        .map(|(from, to)| Line {
            from,
            to,
            reactance: rng.gen_range(0.05..0.5),
            limit: 10.0 * total,
        })
        .collect();
    let count = (buses / 4).max(2);
    let mut gen_buses: Vec<usize> = (1..=buses).collect();
    for i in 0..count {
        let j = rng.gen_range(i..buses);
        gen_buses.swap(i, j);
    }
    let generators = gen_buses[..count]
        .iter()
        .map(|&bus| Generator {
            bus,
            p_min: 0.0,
            p_max: (2.0 * total / count as f64 * rng.gen_range(0.8..1.5) * 10.0).round() / 10.0,
            price: (rng.gen_range(10.0..50.0f64) * 100.0).round() / 100.0,
        })
        .collect();
    GridCase {
        name: format!("random-{seed}"),
        provenance: Vec::new(),
        buses: bus_list,
        lines,
        generators,
        reference_bus: 1,
        sigma: 1.0,
    }
}

/// A feasible, bounded LP with `rows` inequality rows over `vars` variables
/// boxed in `[0, 10]`; a random interior point satisfies every row.
pub fn random_lp(seed: u64, rows: usize, vars: usize) -> LinearProgram<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objective = (0..vars).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let mut lp = LinearProgram::new(objective).with_bounds(vec![0.0; vars], vec![Some(10.0); vars]);
    let x0: Vec<f64> = (0..vars).map(|_| rng.gen_range(1.0..9.0)).collect();
    for _ in 0..rows {
        let a: Vec<f64> = (0..vars).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let act: f64 = a.iter().zip(&x0).map(|(p, q)| p * q).sum();
        if rng.gen_bool(0.5) {
            lp.push(a, Relation::Le, act + rng.gen_range(0.5..5.0));
        } else {
            lp.push(a, Relation::Ge, act - rng.gen_range(0.5..5.0));
        }
    }
    lp
}
