//! Network cases, DC shift factors and the linear measurement model.

use std::collections::VecDeque;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Bus<T> {
    pub id: usize,
    /// MW.
    #[serde(default)]
    pub load: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Line<T> {
    /// Reference direction is `from → to`.
    pub from: usize,
    pub to: usize,
    /// Series reactance, p.u.
    pub reactance: T,
    /// Thermal limit, MW.
    pub limit: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Generator<T> {
    pub bus: usize,
    pub p_min: T,
    pub p_max: T,
    /// Linear offer, $/MWh.
    pub price: T,
}

/// A validated network case.
///
/// Buses are stored sorted by id and ids are exactly `1..=N`; lines are
/// numbered `1..=L` in file order. Internally everything is 0-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GridCase<T> {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub provenance: Vec<String>,
    pub buses: Vec<Bus<T>>,
    pub lines: Vec<Line<T>>,
    pub generators: Vec<Generator<T>>,
    pub reference_bus: usize,
    /// Measurement noise standard deviation, MW.
    pub sigma: T,
}

impl<T: Scalar> GridCase<T> {
    pub fn from_json(text: &str) -> Result<Self> {
        let mut case: Self = serde_json::from_str(text).map_err(|e| Error::from_json(&e))?;
        case.buses.sort_by_key(|b| b.id);
        case.validate()?;
        Ok(case)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case serializes")
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    /// 0-based index of the reference bus.
    pub fn reference_index(&self) -> usize {
        self.reference_bus - 1
    }

    pub fn total_load(&self) -> T {
        self.buses.iter().map(|b| b.load).sum()
    }

    pub fn loads(&self) -> Vec<T> {
        self.buses.iter().map(|b| b.load).collect()
    }

    pub fn limits(&self) -> Vec<T> {
        self.lines.iter().map(|l| l.limit).collect()
    }

    /// Net injection `P − D` per bus for a generator dispatch.
    pub fn net_injection(&self, dispatch: &[T]) -> Vec<T> {
        let mut p: Vec<T> = self.buses.iter().map(|b| -b.load).collect();
        for (g, &pg) in self.generators.iter().zip(dispatch) {
            p[g.bus - 1] += pg;
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.buses.len();
        if n < 2 {
            return Err(Error::Validation("a case needs at least two buses".into()));
        }
        for (k, b) in self.buses.iter().enumerate() {
            if b.id != k + 1 {
                return Err(Error::Validation(format!(
                    "bus ids must be exactly 1..={n}; found {} at position {}",
                    b.id,
                    k + 1
                )));
            }
            if !b.load.is_finite() {
                return Err(Error::Validation(format!("bus {} has a non-finite load", b.id)));
            }
        }
        let bus_ok = |id: usize| (1..=n).contains(&id);
        if !bus_ok(self.reference_bus) {
            return Err(Error::Validation(format!(
                "reference bus {} does not exist",
                self.reference_bus
            )));
        }
        if self.lines.is_empty() {
            return Err(Error::Validation("a case needs at least one line".into()));
        }
        for (k, l) in self.lines.iter().enumerate() {
            let id = k + 1;
            if !bus_ok(l.from) || !bus_ok(l.to) {
                return Err(Error::Validation(format!("line {id} references a missing bus")));
            }
            if l.from == l.to {
                return Err(Error::Validation(format!("line {id} is a self loop")));
            }
            if !(l.reactance > T::zero()) {
                return Err(Error::Validation(format!(
                    "line {id} has non-positive reactance {}",
                    l.reactance
                )));
            }
            if !(l.limit > T::zero()) {
                return Err(Error::Validation(format!(
                    "line {id} has non-positive flow limit {}",
                    l.limit
                )));
            }
        }
        if self.generators.is_empty() {
            return Err(Error::Validation("a case needs at least one generator".into()));
        }
        for (k, g) in self.generators.iter().enumerate() {
            let id = k + 1;
            if !bus_ok(g.bus) {
                return Err(Error::Validation(format!(
                    "generator {id} sits on missing bus {}",
                    g.bus
                )));
            }
            if !(g.p_min <= g.p_max) || !g.price.is_finite() {
                return Err(Error::Validation(format!(
                    "generator {id} violates p_min <= p_max or has a non-finite price"
                )));
            }
        }
        if !(self.sigma > T::zero()) {
            return Err(Error::Validation("sigma must be positive".into()));
        }
        let capacity: T = self.generators.iter().map(|g| g.p_max).sum();
        let floor: T = self.generators.iter().map(|g| g.p_min).sum();
        let load = self.total_load();
        if capacity < load {
            return Err(Error::Validation(format!(
                "case is not servable: capacity {capacity} MW < load {load} MW"
            )));
        }
        if floor > load {
            return Err(Error::Validation(format!(
                "minimum generation {floor} MW exceeds load {load} MW"
            )));
        }
        if let Some(isolated) = self.disconnected_bus() {
            return Err(Error::Validation(format!(
                "network is disconnected: bus {isolated} is unreachable from the reference bus"
            )));
        }
        Ok(())
    }

    fn disconnected_bus(&self) -> Option<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from - 1].push(l.to - 1);
            adj[l.to - 1].push(l.from - 1);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.reference_index()]);
        seen[self.reference_index()] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|s| !s).map(|i| i + 1)
    }

    /// Full `N × N` susceptance matrix (1/x weights).
    pub fn susceptance(&self) -> Matrix<T> {
        let n = self.num_buses();
        let mut b = Matrix::zeros(n, n);
        for l in &self.lines {
            let (f, t) = (l.from - 1, l.to - 1);
            let y = T::one() / l.reactance;
            b[(f, f)] += y;
            b[(t, t)] += y;
            b[(f, t)] -= y;
            b[(t, f)] -= y;
        }
        b
    }

    /// Bus indices with the reference removed, in order; `reduced[k]` is the
    /// bus whose angle is state `k`.
    pub fn state_buses(&self) -> Vec<usize> {
        let r = self.reference_index();
        (0..self.num_buses()).filter(|&i| i != r).collect()
    }
}

/// Reads and validates a case file.
pub fn load_case<T: Scalar>(path: impl AsRef<Path>) -> Result<GridCase<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    GridCase::from_json(&text)
}

/// Line-flow sensitivities to bus injections withdrawn at the reference bus.
#[derive(Debug, Clone)]
pub struct ShiftFactors<T> {
    /// `L × N`.
    pub matrix: Matrix<T>,
}

impl<T: Scalar> ShiftFactors<T> {
    #[inline]
    pub fn get(&self, line: usize, bus: usize) -> T {
        self.matrix[(line, bus)]
    }

    /// `F = X·(P − D)`.
    pub fn flows(&self, net_injection: &[T]) -> Vec<T> {
        self.matrix.mul_vec(net_injection)
    }
}

pub fn build_shift_factors<T: Scalar>(case: &GridCase<T>) -> Result<ShiftFactors<T>> {
    let n = case.num_buses();
    let states = case.state_buses();
    let b = case.susceptance();
    let reduced = Matrix::from_fn(states.len(), states.len(), |i, j| b[(states[i], states[j])]);
    let inv = reduced.lu().map_err(|_| {
        Error::Singular("reduced susceptance matrix is singular (disconnected network?)".into())
    })?;
    let inv = inv.inverse()?;
    // Angle sensitivity of every bus (reference row stays zero).
    let mut angle = Matrix::zeros(n, n);
    for (i, &bi) in states.iter().enumerate() {
        for (j, &bj) in states.iter().enumerate() {
            angle[(bi, bj)] = inv[(i, j)];
        }
    }
    let matrix = Matrix::from_fn(case.num_lines(), n, |l, i| {
        let line = &case.lines[l];
        (angle[(line.from - 1, i)] - angle[(line.to - 1, i)]) / line.reactance
    });
    Ok(ShiftFactors { matrix })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measurement {
    /// Net injection meter at a bus (1-based id).
    Injection { bus: usize },
    /// Flow meter on a line (1-based id), reference direction.
    Flow { line: usize },
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measurement::Injection { bus } => write!(f, "bus {bus} injection"),
            Measurement::Flow { line } => write!(f, "line {line} flow"),
        }
    }
}

/// WLS operators for a given Jacobian and measurement variances.
#[derive(Debug, Clone)]
pub struct WlsOperators<T> {
    /// `M = (HᵀR⁻¹H)⁻¹HᵀR⁻¹`, `N_θ × n`.
    pub gain_map: Matrix<T>,
    /// `S = H·M`.
    pub hat: Matrix<T>,
    /// `W = I − S`.
    pub residual: Matrix<T>,
}

pub fn wls_operators<T: Scalar>(h: &Matrix<T>, variances: &[T]) -> Result<WlsOperators<T>> {
    let n = h.rows();
    let ns = h.cols();
    if variances.len() != n {
        return Err(Error::Dimension(format!(
            "{n} measurements but {} variances",
            variances.len()
        )));
    }
    if n < ns {
        return Err(Error::Unobservable(format!("{n} measurements for {ns} states")));
    }
    // HᵀR⁻¹
    let ht_rinv = Matrix::from_fn(ns, n, |i, j| h[(j, i)] / variances[j]);
    let gain = ht_rinv.mul(h);
    let gain_inv = gain
        .lu()
        .map_err(|_| Error::Unobservable("gain matrix HᵀR⁻¹H is singular".into()))?
        .inverse()?;
    let gain_map = gain_inv.mul(&ht_rinv);
    let hat = h.mul(&gain_map);
    let residual = Matrix::identity(n).sub(&hat);
    Ok(WlsOperators {
        gain_map,
        hat,
        residual,
    })
}

/// `sqrt` of the chi-square quantile at `confidence` with `dof` degrees of freedom.
pub fn chi_square_radius(confidence: f64, dof: usize) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Config(format!("confidence {confidence} not in (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::Unobservable("no redundancy: zero degrees of freedom".into()));
    }
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Config(e.to_string()))?;
    // The library inverse is only good to ~1e-5; polish with Newton on the CDF.
    let mut q = dist.inverse_cdf(confidence);
    for _ in 0..8 {
        let step = (dist.cdf(q) - confidence) / dist.pdf(q);
        q -= step;
        if step.abs() <= 1e-14 * q.max(1.0) {
            break;
        }
    }
    Ok(q.sqrt())
}

/// Linearized measurement model: one injection meter per bus followed by one
/// flow meter per line.
#[derive(Debug, Clone)]
pub struct MeasurementModel<T> {
    pub measurements: Vec<Measurement>,
    /// `n × N_θ`.
    pub h: Matrix<T>,
    /// `L × N_θ`.
    pub h_flow: Matrix<T>,
    /// Diagonal of `R`.
    pub variances: Vec<T>,
    pub gain_map: Matrix<T>,
    pub hat: Matrix<T>,
    pub residual: Matrix<T>,
    /// `S^F = H_F·M`, `L × n`.
    pub flow_sensitivity: Matrix<T>,
    pub sigma: T,
    pub confidence: f64,
    pub dof: usize,
    /// Detection threshold on `‖r‖₂`, MW.
    pub threshold: T,
    /// Bus of each state variable (0-based).
    pub state_buses: Vec<usize>,
}

impl<T: Scalar> MeasurementModel<T> {
    pub fn num_measurements(&self) -> usize {
        self.measurements.len()
    }

    pub fn num_states(&self) -> usize {
        self.h.cols()
    }

    pub fn num_buses(&self) -> usize {
        self.state_buses.len() + 1
    }

    /// Index of the flow meter of a 0-based line.
    pub fn flow_index(&self, line: usize) -> usize {
        self.num_buses() + line
    }

    pub fn injection_index(&self, bus: usize) -> usize {
        bus
    }

    /// Position of a measurement in the vector, if metered.
    pub fn index_of(&self, m: Measurement) -> Option<usize> {
        self.measurements.iter().position(|&x| x == m)
    }

    /// Angles of all buses (reference at zero) from a state vector.
    pub fn bus_angles(&self, states: &[T]) -> Vec<T> {
        let mut theta = vec![T::zero(); self.num_buses()];
        for (&b, &v) in self.state_buses.iter().zip(states) {
            theta[b] = v;
        }
        theta
    }
}

fn jacobian<T: Scalar>(case: &GridCase<T>) -> (Vec<Measurement>, Matrix<T>, Matrix<T>) {
    let n = case.num_buses();
    let nl = case.num_lines();
    let states = case.state_buses();
    let mut col_of = vec![None; n];
    for (k, &b) in states.iter().enumerate() {
        col_of[b] = Some(k);
    }
    let b = case.susceptance();
    let mut h = Matrix::zeros(n + nl, states.len());
    let mut measurements = Vec::with_capacity(n + nl);
    for i in 0..n {
        measurements.push(Measurement::Injection { bus: i + 1 });
        for (k, &bk) in states.iter().enumerate() {
            h[(i, k)] = b[(i, bk)];
        }
    }
    for (l, line) in case.lines.iter().enumerate() {
        measurements.push(Measurement::Flow { line: l + 1 });
        let y = T::one() / line.reactance;
        if let Some(k) = col_of[line.from - 1] {
            h[(n + l, k)] += y;
        }
        if let Some(k) = col_of[line.to - 1] {
            h[(n + l, k)] -= y;
        }
    }
    let h_flow = Matrix::from_fn(nl, states.len(), |l, k| h[(n + l, k)]);
    (measurements, h, h_flow)
}

/// Builds the model with `R = σ²·I`.
pub fn build_measurement_model<T: Scalar>(
    case: &GridCase<T>,
    confidence: f64,
) -> Result<MeasurementModel<T>> {
    let n = case.num_buses() + case.num_lines();
    let variances = vec![case.sigma * case.sigma; n];
    build_measurement_model_with_variances(case, variances, confidence)
}

/// Builds the model with an arbitrary diagonal covariance.
pub fn build_measurement_model_with_variances<T: Scalar>(
    case: &GridCase<T>,
    variances: Vec<T>,
    confidence: f64,
) -> Result<MeasurementModel<T>> {
    let (measurements, h, h_flow) = jacobian(case);
    let ops = wls_operators(&h, &variances)?;
    let flow_sensitivity = h_flow.mul(&ops.gain_map);
    let dof = h.rows() - h.cols();
    let radius = chi_square_radius(confidence, dof)?;
    let threshold = case.sigma * T::lit(radius);
    Ok(MeasurementModel {
        measurements,
        h,
        h_flow,
        variances,
        gain_map: ops.gain_map,
        hat: ops.hat,
        residual: ops.residual,
        flow_sensitivity,
        sigma: case.sigma,
        confidence,
        dof,
        threshold,
        state_buses: case.state_buses(),
    })
}
