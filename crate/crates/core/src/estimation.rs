//! WLS state estimation, bad-data processing and attacked-flow statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{chi_square_radius, wls_operators, GridCase, MeasurementModel};
use crate::linalg::Matrix;
use crate::market::{CongestionSets, CONGESTION_TOLERANCE};
use crate::scalar::{norm2, Scalar};

/// Additive attack on the measurement vector owned by one attacker.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackVector<T> {
    pub owner: usize,
    /// Length `n`; nonzero only on the owner's attackable meters.
    pub values: Vec<T>,
}

impl<T: Scalar> AttackVector<T> {
    pub fn zeros(owner: usize, n: usize) -> Self {
        Self {
            owner,
            values: vec![T::zero(); n],
        }
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.values[i] != T::zero())
            .collect()
    }
}

/// Sum of a set of attack vectors.
pub fn aggregate<T: Scalar>(attacks: &[AttackVector<T>], n: usize) -> Vec<T> {
    let mut total = vec![T::zero(); n];
    for a in attacks {
        for (t, &v) in total.iter_mut().zip(&a.values) {
            *t += v;
        }
    }
    total
}

#[derive(Debug, Clone)]
pub struct EstimationResult<T> {
    /// θ̂ (reference angle removed).
    pub states: Vec<T>,
    /// ẑ = H·θ̂ for every meter.
    pub estimates: Vec<T>,
    /// r = z − ẑ for every meter (meters removed as bad data included).
    pub residuals: Vec<T>,
    /// ‖r‖₂ over the meters still in use.
    pub residual_norm: T,
    /// Threshold for the meters still in use.
    pub threshold: T,
    /// F̂ = H_F·θ̂.
    pub flows: Vec<T>,
    pub detected: bool,
    /// Meters discarded as bad data, in removal order.
    pub removed: Vec<usize>,
    /// Identification stopped because the next removal would make the
    /// system unobservable.
    pub observability_limited: bool,
}

/// z = H·θ + e for the DC flow of a net injection vector, with
/// e ~ N(0, σ²·I) drawn from a seeded generator (σ = 0 gives exact values).
pub fn simulate_measurements<T: Scalar>(
    model: &MeasurementModel<T>,
    net_injection: &[T],
    sigma: T,
    seed: u64,
) -> Result<Vec<T>> {
    let theta = true_states(model, net_injection)?;
    let mut z = model.h.mul_vec(&theta);
    if sigma > T::zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for zi in z.iter_mut() {
            let e: f64 = StandardNormal.sample(&mut rng);
            *zi += sigma * T::lit(e);
        }
    }
    Ok(z)
}

/// Bus angles (states) solving the DC flow for a balanced injection.
pub fn true_states<T: Scalar>(model: &MeasurementModel<T>, net_injection: &[T]) -> Result<Vec<T>> {
    if net_injection.len() != model.num_buses() {
        return Err(Error::Dimension(format!(
            "{} injections for {} buses",
            net_injection.len(),
            model.num_buses()
        )));
    }
    // Injection rows of H at the state buses form the reduced susceptance matrix.
    let b_red = model.h.select_rows(&model.state_buses);
    let rhs: Vec<T> = model.state_buses.iter().map(|&b| net_injection[b]).collect();
    Ok(b_red.lu()?.solve(&rhs))
}

/// Adds every attack to `z`, zeroing components on defended meters.
pub fn apply_attacks<T: Scalar>(z: &[T], attacks: &[AttackVector<T>], defended: &[usize]) -> Vec<T> {
    let mut out = z.to_vec();
    for a in attacks {
        for (i, &v) in a.values.iter().enumerate() {
            if !defended.contains(&i) {
                out[i] += v;
            }
        }
    }
    out
}

pub fn estimate<T: Scalar>(z: &[T], model: &MeasurementModel<T>) -> EstimationResult<T> {
    assert_eq!(z.len(), model.num_measurements(), "measurement vector length");
    let states = model.gain_map.mul_vec(z);
    let estimates = model.h.mul_vec(&states);
    let residuals: Vec<T> = z.iter().zip(&estimates).map(|(&a, &b)| a - b).collect();
    let residual_norm = norm2(&residuals);
    let flows = model.h_flow.mul_vec(&states);
    EstimationResult {
        detected: residual_norm > model.threshold,
        threshold: model.threshold,
        states,
        estimates,
        residuals,
        residual_norm,
        flows,
        removed: Vec::new(),
        observability_limited: false,
    }
}

/// Residual change `Δr = W·Σ z⁽ᵐ⁾`.
pub fn residual_shift<T: Scalar>(attacks: &[AttackVector<T>], model: &MeasurementModel<T>) -> Vec<T> {
    let total = aggregate(attacks, model.num_measurements());
    model.residual.mul_vec(&total)
}

/// WLS operators restricted to a subset of meters.
#[derive(Debug, Clone)]
pub struct Estimator<T> {
    /// Meters in use, ascending.
    pub active: Vec<usize>,
    /// `N_θ × |active|`.
    pub gain_map: Matrix<T>,
    /// `|active| × |active|`.
    pub residual: Matrix<T>,
    pub variances: Vec<T>,
    pub dof: usize,
    pub threshold: T,
}

impl<T: Scalar> Estimator<T> {
    /// Operators with the `removed` meters dropped; fails if the remaining
    /// set no longer observes every state.
    pub fn without(model: &MeasurementModel<T>, removed: &[usize]) -> Result<Self> {
        let active: Vec<usize> = (0..model.num_measurements())
            .filter(|i| !removed.contains(i))
            .collect();
        let h = model.h.select_rows(&active);
        let variances: Vec<T> = active.iter().map(|&i| model.variances[i]).collect();
        let ops = wls_operators(&h, &variances)?;
        let dof = active.len() - model.num_states();
        let threshold = model.sigma * T::lit(chi_square_radius(model.confidence, dof)?);
        Ok(Self {
            active,
            gain_map: ops.gain_map,
            residual: ops.residual,
            variances,
            dof,
            threshold,
        })
    }

    /// θ̂ from the active entries of a full-length measurement vector.
    pub fn states(&self, z: &[T]) -> Vec<T> {
        let za: Vec<T> = self.active.iter().map(|&i| z[i]).collect();
        self.gain_map.mul_vec(&za)
    }

    /// Position of the meter with the largest normalized residual
    /// `|rᵢ| / sqrt(Wᵢᵢ·Rᵢᵢ)`; critical meters (Wᵢᵢ ≈ 0) are skipped.
    /// Scores within a relative 1e-9 of the maximum count as tied and the
    /// lowest meter wins, so rounding never decides between a critical pair.
    pub fn largest_normalized(&self, active_residuals: &[T]) -> Option<usize> {
        let floor = T::lit(1e-10);
        let scores: Vec<Option<T>> = active_residuals
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let w = self.residual[(k, k)];
                (w > floor).then(|| r.abs() / (w * self.variances[k]).sqrt())
            })
            .collect();
        let max = scores.iter().flatten().copied().fold(None, |m: Option<T>, s| Some(m.map_or(s, |m| m.max(s))))?;
        let cut = max * (T::one() - T::lit(1e-9));
        let k = scores.iter().position(|s| s.is_some_and(|s| s >= cut))?;
        Some(self.active[k])
    }
}

fn result_from_estimator<T: Scalar>(
    z: &[T],
    model: &MeasurementModel<T>,
    est: &Estimator<T>,
    removed: Vec<usize>,
    observability_limited: bool,
) -> EstimationResult<T> {
    let states = est.states(z);
    let estimates = model.h.mul_vec(&states);
    let residuals: Vec<T> = z.iter().zip(&estimates).map(|(&a, &b)| a - b).collect();
    let active_r: Vec<T> = est.active.iter().map(|&i| residuals[i]).collect();
    let residual_norm = norm2(&active_r);
    EstimationResult {
        flows: model.h_flow.mul_vec(&states),
        detected: residual_norm > est.threshold,
        threshold: est.threshold,
        states,
        estimates,
        residuals,
        residual_norm,
        removed,
        observability_limited,
    }
}

/// Chi-square detection followed by largest-normalized-residual
/// identification: while `‖r‖₂ > τ`, drop the worst meter and re-estimate,
/// at most `max_removals` times and never past the point of observability.
pub fn detect_and_identify<T: Scalar>(
    result: EstimationResult<T>,
    z: &[T],
    model: &MeasurementModel<T>,
    max_removals: usize,
) -> EstimationResult<T> {
    detect_and_identify_with(result, z, model, max_removals, |removed| {
        Estimator::without(model, removed).map(Box::new)
    })
}

/// [`detect_and_identify`] with a caller-supplied source of reduced
/// estimators (e.g. a cache keyed by the removal set).
pub fn detect_and_identify_with<T, E, F>(
    result: EstimationResult<T>,
    z: &[T],
    model: &MeasurementModel<T>,
    max_removals: usize,
    mut estimator_for: F,
) -> EstimationResult<T>
where
    T: Scalar,
    E: std::ops::Deref<Target = Estimator<T>>,
    F: FnMut(&[usize]) -> Result<E>,
{
    if !result.detected {
        return result;
    }
    let mut removed: Vec<usize> = Vec::new();
    let mut est = match estimator_for(&removed) {
        Ok(e) => e,
        Err(_) => return result,
    };
    loop {
        let current = result_from_estimator(z, model, &est, removed.clone(), false);
        if !current.detected || removed.len() >= max_removals {
            return current;
        }
        let active_r: Vec<T> = est.active.iter().map(|&i| current.residuals[i]).collect();
        let Some(worst) = est.largest_normalized(&active_r) else {
            return current;
        };
        let mut candidate = removed.clone();
        candidate.push(worst);
        match estimator_for(&candidate) {
            Ok(next) => {
                removed = candidate;
                est = next;
            }
            Err(_) => {
                return EstimationResult {
                    observability_limited: true,
                    ..current
                }
            }
        }
    }
}

/// Mean and variance of the estimated flows under attack.
#[derive(Debug, Clone)]
pub struct FlowStats<T> {
    /// `F_t + S^F·Σz⁽ⁱ⁾`.
    pub mean: Vec<T>,
    /// Diagonal of `S^F·R·S^Fᵀ`.
    pub variance: Vec<T>,
}

pub fn attacked_flow_stats<T: Scalar>(
    true_flows: &[T],
    attacks: &[AttackVector<T>],
    model: &MeasurementModel<T>,
) -> FlowStats<T> {
    let total = aggregate(attacks, model.num_measurements());
    let shift = model.flow_sensitivity.mul_vec(&total);
    let mean = true_flows.iter().zip(&shift).map(|(&f, &s)| f + s).collect();
    let sf = &model.flow_sensitivity;
    let variance = (0..sf.rows())
        .map(|l| {
            sf.row(l)
                .iter()
                .zip(&model.variances)
                .map(|(&s, &r)| s * s * r)
                .sum()
        })
        .collect();
    FlowStats { mean, variance }
}

/// `l ∈ C⁺` iff `F̂ₗ ≥ Fₗ^max − tol`, `l ∈ C⁻` iff `F̂ₗ ≤ −Fₗ^max + tol`.
pub fn congestion_sets<T: Scalar>(flows: &[T], case: &GridCase<T>) -> CongestionSets {
    let tol = T::lit(CONGESTION_TOLERANCE);
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for (l, (&f, line)) in flows.iter().zip(&case.lines).enumerate() {
        if f >= line.limit - tol {
            upper.push(l);
        } else if f <= -line.limit + tol {
            lower.push(l);
        }
    }
    CongestionSets::new(upper, lower)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_measurement_model, GridCase};

    fn triangle() -> GridCase<f64> {
        GridCase::from_json(
            r#"{
            "buses": [{"id": 1}, {"id": 2, "load": 40}, {"id": 3, "load": 60}],
            "lines": [
                {"from": 1, "to": 2, "reactance": 0.1, "limit": 200},
                {"from": 2, "to": 3, "reactance": 0.1, "limit": 200},
                {"from": 1, "to": 3, "reactance": 0.1, "limit": 200}
            ],
            "generators": [{"bus": 1, "p_min": 0, "p_max": 300, "price": 10}],
            "reference_bus": 1, "sigma": 1.0 }"#,
        )
        .unwrap()
    }

    #[test]
    fn equal_weight_average() {
        // H = [1; 1], R = I: θ̂ is the mean and r = (−1, 1).
        let h: Matrix<f64> = Matrix::from_rows(&[vec![1.0], vec![1.0]]);
        let ops = wls_operators(&h, &[1.0, 1.0]).unwrap();
        let theta = ops.gain_map.mul_vec(&[1.0, 3.0]);
        let r = ops.residual.mul_vec(&[1.0, 3.0]);
        assert!((theta[0] - 2.0).abs() < 1e-12);
        assert!((r[0] + 1.0).abs() < 1e-12 && (r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_measurements_have_zero_residual() {
        let case = triangle();
        let model = build_measurement_model(&case, 0.975).unwrap();
        let z = simulate_measurements(&model, &case.net_injection(&[100.0]), 0.0, 1).unwrap();
        let res = estimate(&z, &model);
        assert!(res.residual_norm < 1e-9);
        assert!(!res.detected);
        let cleaned = detect_and_identify(res, &z, &model, 3);
        assert!(cleaned.removed.is_empty());
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let case = triangle();
        let model = build_measurement_model(&case, 0.975).unwrap();
        let p = case.net_injection(&[100.0]);
        let a = simulate_measurements(&model, &p, 1.0, 42).unwrap();
        let b = simulate_measurements(&model, &p, 1.0, 42).unwrap();
        let c = simulate_measurements(&model, &p, 1.0, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn gross_error_is_identified() {
        let case = triangle();
        let model = build_measurement_model(&case, 0.975).unwrap();
        let mut z = simulate_measurements(&model, &case.net_injection(&[100.0]), 0.0, 0).unwrap();
        // +50σ on the flow meter of line 2.
        let bad = model.flow_index(1);
        z[bad] += 50.0;
        let res = estimate(&z, &model);
        assert!(res.detected);
        let cleaned = detect_and_identify(res, &z, &model, 3);
        assert_eq!(cleaned.removed, vec![bad]);
        assert!(!cleaned.detected);
        assert!(cleaned.residual_norm < 1e-9);
    }

    #[test]
    fn boundary_flows_are_congested() {
        let case = triangle();
        let sets = congestion_sets(&[200.0, -200.0, 10.0], &case);
        assert_eq!(sets.upper, vec![0]);
        assert_eq!(sets.lower, vec![1]);
        assert!(congestion_sets(&[199.0, -199.0, 0.0], &case).is_empty());
    }

    #[test]
    fn defended_meters_block_attacks() {
        let z = vec![1.0, 2.0, 3.0];
        let a = AttackVector {
            owner: 0,
            values: vec![0.0, 5.0, 0.0],
        };
        assert_eq!(apply_attacks(&z, &[a.clone()], &[1]), z);
        assert_eq!(apply_attacks(&z, &[a], &[]), vec![1.0, 7.0, 3.0]);
    }
}
