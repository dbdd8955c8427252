//! Day-ahead DCOPF and real-time ex-post incremental DCOPF.
//!
//! Both markets are linear programs over generator outputs; LMPs are
//! assembled from the energy-balance and line-flow shadow prices:
//!
//! ```text
//! μᵢ = λ₀ + Σₗ (λₗ⁻ − λₗ⁺)·χₗᵢ
//! ```

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{GridCase, ShiftFactors};
use crate::lp::{LinearProgram, Relation};
use crate::scalar::Scalar;

/// Tolerance (MW) used to decide whether a flow sits at its limit.
pub const CONGESTION_TOLERANCE: f64 = 1e-6;

/// Lines congested in (C⁺) and against (C⁻) their reference direction,
/// 0-based and sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CongestionSets {
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
}

impl CongestionSets {
    pub fn new(mut upper: Vec<usize>, mut lower: Vec<usize>) -> Self {
        upper.sort_unstable();
        upper.dedup();
        lower.sort_unstable();
        lower.dedup();
        Self { upper, lower }
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty() && self.lower.is_empty()
    }

    /// `C⁺ ∪ C⁻`, sorted.
    pub fn all(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.upper.iter().chain(&self.lower).copied().collect();
        v.sort_unstable();
        v
    }
}

/// Ex-post redispatch bandwidth `[−down, +up]` MW around the day-ahead schedule.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Bandwidth {
    pub down: f64,
    pub up: f64,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Self { down: 2.0, up: 0.1 }
    }
}

#[derive(Debug, Clone)]
pub struct MarketSolution<T> {
    /// `P` (day-ahead) or `ΔP` (ex-post) per generator, MW.
    pub dispatch: Vec<T>,
    /// λ₀, $/MWh.
    pub energy_price: T,
    /// λₗ⁺ per line (zero for lines without an active constraint).
    pub upper_duals: Vec<T>,
    /// λₗ⁻ per line.
    pub lower_duals: Vec<T>,
    /// μ per bus, $/MWh.
    pub lmps: Vec<T>,
    pub congestion: CongestionSets,
    /// Line flows implied by `dispatch` (flow increments for ex-post).
    pub flows: Vec<T>,
    pub objective: T,
    pub degenerate: bool,
}

/// `μᵢ = λ₀ + Σ_{l ∈ lines} (λₗ⁻ − λₗ⁺)·χₗᵢ`.
pub fn compute_lmps<T: Scalar>(
    energy_price: T,
    upper_duals: &[T],
    lower_duals: &[T],
    x: &ShiftFactors<T>,
    lines: &[usize],
) -> Vec<T> {
    let n = x.matrix.cols();
    (0..n)
        .map(|i| {
            let mut mu = energy_price;
            for &l in lines {
                mu += (lower_duals[l] - upper_duals[l]) * x.get(l, i);
            }
            mu
        })
        .collect()
}

fn clean<T: Scalar>(v: T) -> T {
    if v.abs() <= T::tolerance() {
        T::zero()
    } else {
        v
    }
}

fn generator_row<T: Scalar>(case: &GridCase<T>, x: &ShiftFactors<T>, line: usize) -> Vec<T> {
    case.generators.iter().map(|g| x.get(line, g.bus - 1)).collect()
}

/// Builds the day-ahead DCOPF: min Σ Cᵢ·Pᵢ subject to balance, generator
/// limits and both flow directions on every line.
pub fn da_dcopf_program<T: Scalar>(case: &GridCase<T>, x: &ShiftFactors<T>) -> LinearProgram<T> {
    let prices: Vec<T> = case.generators.iter().map(|g| g.price).collect();
    let lower = case.generators.iter().map(|g| g.p_min).collect();
    let upper = case.generators.iter().map(|g| Some(g.p_max)).collect();
    let mut lp = LinearProgram::new(prices).with_bounds(lower, upper);
    let g = case.num_generators();
    lp.push(vec![T::one(); g], Relation::Eq, case.total_load());
    let loads = case.loads();
    for l in 0..case.num_lines() {
        let row = generator_row(case, x, l);
        let load_flow: T = loads.iter().enumerate().map(|(i, &d)| x.get(l, i) * d).sum();
        let limit = case.lines[l].limit;
        lp.push(row.clone(), Relation::Le, limit + load_flow);
        lp.push(row, Relation::Ge, -limit + load_flow);
    }
    lp
}

pub fn solve_da_dcopf<T: Scalar>(
    case: &GridCase<T>,
    x: &ShiftFactors<T>,
) -> Result<MarketSolution<T>> {
    let lp = da_dcopf_program(case, x);
    let sol = lp.solve()?;
    let nl = case.num_lines();
    let energy_price = clean(sol.duals[0]);
    let mut upper_duals = vec![T::zero(); nl];
    let mut lower_duals = vec![T::zero(); nl];
    for l in 0..nl {
        upper_duals[l] = clean(-sol.duals[1 + 2 * l]).max(T::zero());
        lower_duals[l] = clean(sol.duals[2 + 2 * l]).max(T::zero());
    }
    let all_lines: Vec<usize> = (0..nl).collect();
    let lmps = compute_lmps(energy_price, &upper_duals, &lower_duals, x, &all_lines);
    let flows = x.flows(&case.net_injection(&sol.x));
    let tol = T::lit(CONGESTION_TOLERANCE);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (l, &f) in flows.iter().enumerate() {
        let limit = case.lines[l].limit;
        if f >= limit - tol {
            upper.push(l);
        } else if f <= -limit + tol {
            lower.push(l);
        }
    }
    Ok(MarketSolution {
        dispatch: sol.x,
        energy_price,
        upper_duals,
        lower_duals,
        lmps,
        congestion: CongestionSets::new(upper, lower),
        flows,
        objective: sol.objective,
        degenerate: sol.degenerate,
    })
}

/// Builds the ex-post incremental DCOPF. Increments are bounded by the
/// bandwidth; the downward bound is also clipped so no unit is scheduled
/// below its minimum output. Flow constraints exist only for lines in
/// `congestion`, in the order C⁺ then C⁻.
pub fn expost_program<T: Scalar>(
    case: &GridCase<T>,
    x: &ShiftFactors<T>,
    congestion: &CongestionSets,
    da: &MarketSolution<T>,
    bandwidth: Bandwidth,
) -> LinearProgram<T> {
    let prices: Vec<T> = case.generators.iter().map(|g| g.price).collect();
    let down = T::lit(bandwidth.down);
    let up = T::lit(bandwidth.up);
    let lower = case
        .generators
        .iter()
        .zip(&da.dispatch)
        .map(|(g, &p)| (-down).max(g.p_min - p).min(T::zero()))
        .collect();
    let upper = vec![Some(up); case.num_generators()];
    let mut lp = LinearProgram::new(prices).with_bounds(lower, upper);
    lp.push(vec![T::one(); case.num_generators()], Relation::Eq, T::zero());
    for &l in &congestion.upper {
        lp.push(generator_row(case, x, l), Relation::Le, T::zero());
    }
    for &l in &congestion.lower {
        lp.push(generator_row(case, x, l), Relation::Ge, T::zero());
    }
    lp
}

pub fn solve_expost_dcopf<T: Scalar>(
    case: &GridCase<T>,
    x: &ShiftFactors<T>,
    congestion: &CongestionSets,
    da: &MarketSolution<T>,
    bandwidth: Bandwidth,
) -> Result<MarketSolution<T>> {
    let lp = expost_program(case, x, congestion, da, bandwidth);
    let sol = lp.solve()?;
    let nl = case.num_lines();
    let energy_price = clean(sol.duals[0]);
    let mut upper_duals = vec![T::zero(); nl];
    let mut lower_duals = vec![T::zero(); nl];
    let mut row = 1;
    for &l in &congestion.upper {
        upper_duals[l] = clean(-sol.duals[row]).max(T::zero());
        row += 1;
    }
    for &l in &congestion.lower {
        lower_duals[l] = clean(sol.duals[row]).max(T::zero());
        row += 1;
    }
    let lines = congestion.all();
    let lmps = compute_lmps(energy_price, &upper_duals, &lower_duals, x, &lines);
    let mut increments = vec![T::zero(); case.num_buses()];
    for (g, &dp) in case.generators.iter().zip(&sol.x) {
        increments[g.bus - 1] += dp;
    }
    Ok(MarketSolution {
        flows: x.flows(&increments),
        dispatch: sol.x,
        energy_price,
        upper_duals,
        lower_duals,
        lmps,
        congestion: congestion.clone(),
        objective: sol.objective,
        degenerate: sol.degenerate,
    })
}

/// Congestion rent `Σᵢ μᵢ·(Dᵢ − Pᵢ)`; nonnegative for a correctly priced dispatch.
pub fn congestion_rent<T: Scalar>(case: &GridCase<T>, sol: &MarketSolution<T>) -> T {
    let net = case.net_injection(&sol.dispatch);
    net.iter().zip(&sol.lmps).map(|(&p, &mu)| -p * mu).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_shift_factors;

    fn two_bus(limit: f64) -> GridCase<f64> {
        GridCase::from_json(&format!(
            r#"{{
            "buses": [{{"id": 1, "load": 0}}, {{"id": 2, "load": 150}}],
            "lines": [{{"from": 1, "to": 2, "reactance": 0.1, "limit": {limit}}}],
            "generators": [
                {{"bus": 1, "p_min": 0, "p_max": 100, "price": 10}},
                {{"bus": 2, "p_min": 0, "p_max": 100, "price": 20}}
            ],
            "reference_bus": 2, "sigma": 1.0 }}"#
        ))
        .unwrap()
    }

    #[test]
    fn lmps_with_no_congestion_are_energy_price() {
        let case = two_bus(200.0);
        let x = build_shift_factors(&case).unwrap();
        let mu = compute_lmps(7.0, &[0.0], &[0.0], &x, &[0]);
        assert_eq!(mu, vec![7.0, 7.0]);
    }

    #[test]
    fn lmps_single_congested_line() {
        let case = two_bus(200.0);
        let x = build_shift_factors(&case).unwrap();
        let mu = compute_lmps(20.0, &[5.0], &[0.0], &x, &[0]);
        assert_eq!(mu, vec![20.0 - 5.0 * x.get(0, 0), 20.0]);
    }

    #[test]
    fn two_bus_congested_and_uncongested() {
        let case = two_bus(100.0);
        let x = build_shift_factors(&case).unwrap();
        let da = solve_da_dcopf(&case, &x).unwrap();
        assert!((da.dispatch[0] - 100.0).abs() < 1e-9);
        assert!((da.dispatch[1] - 50.0).abs() < 1e-9);
        assert!((da.lmps[0] - 10.0).abs() < 1e-9 && (da.lmps[1] - 20.0).abs() < 1e-9);
        assert_eq!(da.congestion.upper, vec![0]);

        let case = two_bus(200.0);
        let da = solve_da_dcopf(&case, &x).unwrap();
        assert!(da.congestion.is_empty());
        assert!((da.lmps[0] - 20.0).abs() < 1e-9 && (da.lmps[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn expost_reproduces_prices() {
        let case = two_bus(100.0);
        let x = build_shift_factors(&case).unwrap();
        let da = solve_da_dcopf(&case, &x).unwrap();
        let rt = solve_expost_dcopf(
            &case,
            &x,
            &CongestionSets::new(vec![0], vec![]),
            &da,
            Bandwidth::default(),
        )
        .unwrap();
        assert!((rt.lmps[0] - 10.0).abs() < 1e-9 && (rt.lmps[1] - 20.0).abs() < 1e-9);
        assert_eq!(rt.lower_duals[0], 0.0);

        let uncongested = two_bus(200.0);
        let da = solve_da_dcopf(&uncongested, &x).unwrap();
        let rt =
            solve_expost_dcopf(&uncongested, &x, &CongestionSets::default(), &da, Bandwidth::default())
                .unwrap();
        assert_eq!(rt.lmps, da.lmps);
    }
}
