//! Attackers, their payoffs and the memoized attack → estimate → market pipeline.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    apply_attacks, congestion_sets, detect_and_identify_with, estimate, simulate_measurements,
    AttackVector, Estimator,
};
use crate::grid::{GridCase, MeasurementModel, ShiftFactors};
use crate::linalg::Matrix;
use crate::market::{solve_expost_dcopf, Bandwidth, CongestionSets, MarketSolution};
use crate::scalar::{norm2, Scalar};

/// A measurement named either by raw index or as `"line:K"` / `"bus:K"` (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasurementRef {
    Index(usize),
    Name(String),
}

impl MeasurementRef {
    pub fn resolve<T: Scalar>(&self, model: &MeasurementModel<T>) -> Result<usize> {
        match self {
            MeasurementRef::Index(i) if *i < model.num_measurements() => Ok(*i),
            MeasurementRef::Index(i) => Err(Error::Attacker(format!(
                "measurement index {i} out of range (n = {})",
                model.num_measurements()
            ))),
            MeasurementRef::Name(s) => {
                let bad = || Error::Attacker(format!("bad measurement reference {s:?}; expected \"line:K\" or \"bus:K\""));
                let (kind, num) = s.split_once(':').ok_or_else(bad)?;
                let k: usize = num.trim().parse().map_err(|_| bad())?;
                let (count, index) = match kind.trim() {
                    "line" => (model.h_flow.rows(), model.num_buses() + k.wrapping_sub(1)),
                    "bus" => (model.num_buses(), k.wrapping_sub(1)),
                    _ => return Err(bad()),
                };
                if k == 0 || k > count {
                    return Err(Error::Attacker(format!("{s:?} does not exist ({count} available)")));
                }
                Ok(index)
            }
        }
    }
}

/// One level set shared by every index, or one per index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LevelsConfig {
    Shared(Vec<f64>),
    PerIndex(Vec<Vec<f64>>),
}

/// Level set used when a scenario does not give one, MW.
pub const DEFAULT_LEVELS: [f64; 5] = [-3.5, -2.0, 0.0, 2.0, 3.5];

/// Serialized attacker description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackerConfig {
    pub k_indices: Vec<MeasurementRef>,
    #[serde(default)]
    pub levels: Option<LevelsConfig>,
    /// Bought day-ahead, sold real-time (1-based bus id).
    pub i_bus: usize,
    /// Sold day-ahead, bought real-time (1-based bus id).
    pub j_bus: usize,
    #[serde(rename = "P")]
    pub power: f64,
    pub kappa: f64,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_beta")]
    pub beta_prime: f64,
}

fn default_gamma() -> f64 {
    2.0
}

fn default_beta() -> f64 {
    0.1
}

impl AttackerConfig {
    pub fn resolve<T: Scalar>(&self, id: usize, model: &MeasurementModel<T>) -> Result<AttackerSpec<T>> {
        let k_indices = self
            .k_indices
            .iter()
            .map(|r| r.resolve(model))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Attacker(format!("attacker {id}: k_indices: {e}")))?;
        let levels = match &self.levels {
            None => vec![DEFAULT_LEVELS.to_vec(); k_indices.len()],
            Some(LevelsConfig::Shared(l)) => vec![l.clone(); k_indices.len()],
            Some(LevelsConfig::PerIndex(l)) => l.clone(),
        };
        let epsilon = match self.epsilon {
            Some(e) => T::lit(e),
            None => T::lit(3.0) * model.sigma * T::lit(model.dof as f64).sqrt(),
        };
        let spec = AttackerSpec {
            id,
            k_indices,
            levels: levels.iter().map(|l| l.iter().map(|&v| T::lit(v)).collect()).collect(),
            i_bus: self.i_bus,
            j_bus: self.j_bus,
            power: T::lit(self.power),
            kappa: T::lit(self.kappa),
            epsilon,
            gamma: T::lit(self.gamma),
            beta: T::lit(self.beta),
            beta_prime: T::lit(self.beta_prime),
        };
        spec.validate(model.num_measurements(), model.num_buses())?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackerSpec<T> {
    pub id: usize,
    /// Attackable measurement indices `K_m`.
    pub k_indices: Vec<usize>,
    /// Level set per attackable index, MW.
    pub levels: Vec<Vec<T>>,
    /// 1-based bus bought day-ahead and sold real-time.
    pub i_bus: usize,
    /// 1-based bus sold day-ahead and bought real-time.
    pub j_bus: usize,
    /// Virtual power `P_m`, MW.
    pub power: T,
    pub kappa: T,
    pub epsilon: T,
    pub gamma: T,
    pub beta: T,
    pub beta_prime: T,
}

impl<T: Scalar> AttackerSpec<T> {
    pub fn validate(&self, n: usize, buses: usize) -> Result<()> {
        let err = |msg: String| Err(Error::Attacker(format!("attacker {}: {msg}", self.id)));
        if self.k_indices.is_empty() {
            return err("k_indices is empty".into());
        }
        if self.levels.len() != self.k_indices.len() {
            return err(format!(
                "{} level sets for {} indices",
                self.levels.len(),
                self.k_indices.len()
            ));
        }
        for (pos, &k) in self.k_indices.iter().enumerate() {
            if k >= n {
                return err(format!("measurement index {k} out of range"));
            }
            if self.k_indices[..pos].contains(&k) {
                return err(format!("measurement index {k} listed twice"));
            }
        }
        for (k, l) in self.k_indices.iter().zip(&self.levels) {
            if !l.iter().any(|v| *v == T::zero()) {
                return err(format!("level set for index {k} lacks 0"));
            }
        }
        for (name, bus) in [("i_bus", self.i_bus), ("j_bus", self.j_bus)] {
            if bus == 0 || bus > buses {
                return err(format!("{name} = {bus} is not a bus id"));
            }
        }
        if !(self.gamma > T::one()) {
            return err("gamma must exceed 1".into());
        }
        for (name, v) in [("beta", self.beta), ("beta_prime", self.beta_prime)] {
            if !(v > T::zero() && v <= T::one()) {
                return err(format!("{name} must lie in (0, 1]"));
            }
        }
        if !(self.power >= T::zero()) || !(self.kappa >= T::zero()) || !(self.epsilon > T::zero()) {
            return err("P and kappa must be nonnegative and epsilon positive".into());
        }
        Ok(())
    }

    /// Number of grid actions, `Π |levels_k|`.
    pub fn num_actions(&self) -> usize {
        self.levels.iter().map(Vec::len).product()
    }

    /// Level index per attackable meter; the first meter is the most significant digit.
    pub fn digits(&self, action: usize) -> Vec<usize> {
        let mut rest = action;
        let mut digits = vec![0; self.levels.len()];
        for (d, l) in digits.iter_mut().zip(&self.levels).rev() {
            *d = rest % l.len();
            rest /= l.len();
        }
        digits
    }

    pub fn action_levels(&self, action: usize) -> Vec<T> {
        self.digits(action)
            .iter()
            .zip(&self.levels)
            .map(|(&d, l)| l[d])
            .collect()
    }

    /// Inverse of [`Self::action_levels`]; the first matching level wins.
    pub fn action_of(&self, values: &[T]) -> Option<usize> {
        if values.len() != self.levels.len() {
            return None;
        }
        let mut action = 0;
        for (v, l) in values.iter().zip(&self.levels) {
            let d = l.iter().position(|x| (*x - *v).abs() <= T::tolerance())?;
            action = action * l.len() + d;
        }
        Some(action)
    }

    /// Action placing the zero level on every meter.
    pub fn zero_action(&self) -> usize {
        self.action_of(&vec![T::zero(); self.levels.len()])
            .expect("validated level sets contain 0")
    }

    pub fn attack_vector(&self, action: usize, n: usize) -> AttackVector<T> {
        let mut v = AttackVector::zeros(self.id, n);
        for (&k, level) in self.k_indices.iter().zip(self.action_levels(action)) {
            v.values[k] = level;
        }
        v
    }
}

/// Attackable sets must not overlap.
pub fn validate_specs<T: Scalar>(specs: &[AttackerSpec<T>], n: usize, buses: usize) -> Result<()> {
    for s in specs {
        s.validate(n, buses)?;
    }
    for (a, sa) in specs.iter().enumerate() {
        for sb in &specs[a + 1..] {
            if let Some(k) = sa.k_indices.iter().find(|k| sb.k_indices.contains(k)) {
                return Err(Error::Attacker(format!(
                    "attackers {} and {} share measurement {k}",
                    sa.id, sb.id
                )));
            }
        }
    }
    Ok(())
}

/// Pure-strategy profile: one grid action per attacker.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAttack {
    pub actions: Vec<usize>,
}

impl JointAttack {
    pub fn zero<T: Scalar>(specs: &[AttackerSpec<T>]) -> Self {
        Self {
            actions: specs.iter().map(AttackerSpec::zero_action).collect(),
        }
    }

    pub fn vectors<T: Scalar>(&self, specs: &[AttackerSpec<T>], n: usize) -> Vec<AttackVector<T>> {
        specs
            .iter()
            .zip(&self.actions)
            .map(|(s, &a)| s.attack_vector(a, n))
            .collect()
    }

    pub fn levels<T: Scalar>(&self, specs: &[AttackerSpec<T>]) -> Vec<Vec<T>> {
        specs
            .iter()
            .zip(&self.actions)
            .map(|(s, &a)| s.action_levels(a))
            .collect()
    }
}

/// Line groups used by the congestion surrogate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineSets {
    /// `χ_{l,j} − χ_{l,i} > 0`.
    pub plus: Vec<usize>,
    /// `χ_{l,j} − χ_{l,i} < 0`.
    pub minus: Vec<usize>,
    /// Day-ahead flow in the reference direction (zero flow included).
    pub reference: Vec<usize>,
    /// Day-ahead flow against the reference direction.
    pub opposite: Vec<usize>,
}

impl LineSets {
    /// Lines where creating congestion pays: `(L⁺ ∩ Lᴿ) ∪ (L⁻ ∩ Lᴼ)`.
    pub fn congest_targets(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .plus
            .iter()
            .filter(|l| self.reference.contains(l))
            .chain(self.minus.iter().filter(|l| self.opposite.contains(l)))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }

    /// Lines where removing congestion pays: `(L⁺ ∩ Lᴼ) ∪ (L⁻ ∩ Lᴿ)`.
    pub fn decongest_targets(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .plus
            .iter()
            .filter(|l| self.opposite.contains(l))
            .chain(self.minus.iter().filter(|l| self.reference.contains(l)))
            .copied()
            .collect();
        out.sort_unstable();
        out
    }
}

/// Sensitivity differences below this are treated as zero.
const SENSITIVITY_FLOOR: f64 = 1e-10;

pub fn classify_lines<T: Scalar>(spec: &AttackerSpec<T>, x: &ShiftFactors<T>, da_flows: &[T]) -> LineSets {
    let floor = T::lit(SENSITIVITY_FLOOR);
    let mut sets = LineSets {
        plus: Vec::new(),
        minus: Vec::new(),
        reference: Vec::new(),
        opposite: Vec::new(),
    };
    for (l, &f) in da_flows.iter().enumerate() {
        let d = x.get(l, spec.j_bus - 1) - x.get(l, spec.i_bus - 1);
        if d > floor {
            sets.plus.push(l);
        } else if d < -floor {
            sets.minus.push(l);
        }
        if f >= T::zero() {
            sets.reference.push(l);
        } else {
            sets.opposite.push(l);
        }
    }
    sets
}

/// `ζ = (μᵢᴿᵀ − μᵢᴰᴬ) + (μⱼᴰᴬ − μⱼᴿᵀ)`, $/MWh.
pub fn zeta<T: Scalar>(spec: &AttackerSpec<T>, da: &MarketSolution<T>, rt: &MarketSolution<T>) -> T {
    zeta_from_lmps(spec, &da.lmps, &rt.lmps)
}

pub fn zeta_from_lmps<T: Scalar>(spec: &AttackerSpec<T>, da: &[T], rt: &[T]) -> T {
    let (i, j) = (spec.i_bus - 1, spec.j_bus - 1);
    (rt[i] - da[i]) + (da[j] - rt[j])
}

/// ζ written through line duals:
/// `Σₗ (χ_{l,j} − χ_{l,i})·((λₗᴰᴬ⁻ − λₗᴰᴬ⁺) + (λₗᴿᵀ⁺ − λₗᴿᵀ⁻))`.
pub fn zeta_dual_form<T: Scalar>(
    spec: &AttackerSpec<T>,
    x: &ShiftFactors<T>,
    da: &MarketSolution<T>,
    rt: &MarketSolution<T>,
) -> T {
    (0..x.matrix.rows())
        .map(|l| {
            let d = x.get(l, spec.j_bus - 1) - x.get(l, spec.i_bus - 1);
            d * ((da.lower_duals[l] - da.upper_duals[l]) + (rt.upper_duals[l] - rt.lower_duals[l]))
        })
        .sum()
}

/// `κ·Σ zᵢ²`.
pub fn attack_cost<T: Scalar>(values: &[T], kappa: T) -> T {
    kappa * values.iter().map(|&v| v * v).sum::<T>()
}

/// `‖W·z⁽ᵐ⁾‖₂ + Σ_{l≠m} ‖W·z⁽ˡ⁾‖₂ ≤ ε_m`.
pub fn residual_feasible<T: Scalar>(
    attacks: &[AttackVector<T>],
    epsilon: T,
    model: &MeasurementModel<T>,
) -> bool {
    let total: T = attacks
        .iter()
        .map(|a| norm2(&model.residual.mul_vec(&a.values)))
        .sum();
    total <= epsilon
}

/// Closed-form `(δ*, α*)` of `max δ − γα` s.t. `δ − α ≤ s`, `0 ≤ δ ≤ βF`, `0 ≤ α ≤ β′F`.
pub fn relaxation<T: Scalar>(slack: T, limit: T, beta: T, beta_prime: T) -> (T, T) {
    let clamp = |v: T, hi: T| v.max(T::zero()).min(hi);
    let alpha = clamp(-slack, beta_prime * limit);
    let delta = clamp(slack + alpha, beta * limit);
    (delta, alpha)
}

/// Slack of the surrogate constraint for line `l` at expected flow `e`.
pub fn surrogate_slack<T: Scalar>(sets: &LineSets, l: usize, e: T, limit: T) -> Option<T> {
    let plus = sets.plus.contains(&l);
    let minus = sets.minus.contains(&l);
    let reference = sets.reference.contains(&l);
    match (plus, minus, reference) {
        (true, _, true) => Some(e - limit),
        (true, _, false) => Some(limit + e),
        (_, true, true) => Some(limit - e),
        (_, true, false) => Some(-e - limit),
        _ => None,
    }
}

/// `Σ (δ* − γ·α*) − c_m(z⁽ᵐ⁾)` over `L⁺ ∪ L⁻`, with expected flows
/// `F_t + S^F·Σz` after defended meters are blocked.
pub fn surrogate_objective<T: Scalar>(
    m: usize,
    attacks: &[AttackVector<T>],
    defended: &[usize],
    specs: &[AttackerSpec<T>],
    case: &GridCase<T>,
    x: &ShiftFactors<T>,
    model: &MeasurementModel<T>,
    da: &MarketSolution<T>,
) -> T {
    let spec = &specs[m];
    let sets = classify_lines(spec, x, &da.flows);
    let blocked: Vec<AttackVector<T>> = attacks
        .iter()
        .map(|a| AttackVector {
            owner: a.owner,
            values: apply_attacks(&vec![T::zero(); a.values.len()], std::slice::from_ref(a), defended),
        })
        .collect();
    let stats = crate::estimation::attacked_flow_stats(&da.flows, &blocked, model);
    let mut total = T::zero();
    for l in 0..case.num_lines() {
        let limit = case.lines[l].limit;
        if let Some(s) = surrogate_slack(&sets, l, stats.mean[l], limit) {
            let (d, a) = relaxation(s, limit, spec.beta, spec.beta_prime);
            total += d - spec.gamma * a;
        }
    }
    total - attack_cost(&attacks[m].values, spec.kappa)
}

/// Market outcome shared by every aggregate attack that yields the same
/// estimated congestion.
#[derive(Debug, Clone, Serialize)]
pub struct Outcome<T> {
    pub congestion: CongestionSets,
    pub rt_lmps: Vec<T>,
    /// ζ per attacker, $/MWh.
    pub zeta: Vec<T>,
    /// `Σᵢ (μᵢᴿᵀ − μᵢᴰᴬ)²`.
    pub r0: T,
    /// `sqrt(r0 / N)`, $/MWh.
    pub rmsd: T,
    pub degenerate: bool,
    /// The ex-post market failed and the attack was discarded.
    pub discarded: bool,
}

/// What the estimator and detector made of one measurement vector.
#[derive(Debug, Clone)]
pub struct Detection<T> {
    pub flows: Vec<T>,
    pub congestion: CongestionSets,
    pub detected: bool,
    pub removed: Vec<usize>,
    pub residual_norm: T,
}

/// Everything needed to turn attacks into payoffs, with caches for ex-post
/// prices (by congestion sets) and reduced estimators (by removal set).
pub struct AttackContext<T: Scalar> {
    pub case: GridCase<T>,
    pub shift: ShiftFactors<T>,
    pub model: MeasurementModel<T>,
    pub da: MarketSolution<T>,
    pub specs: Vec<AttackerSpec<T>>,
    pub bandwidth: Bandwidth,
    pub max_removals: usize,
    /// Measurements before any attack.
    pub z_clean: Vec<T>,
    clean_residuals: Vec<T>,
    clean_flows: Vec<T>,
    outcomes: RwLock<OutcomeStore<T>>,
    estimators: Mutex<HashMap<Vec<usize>, Arc<Reduced<T>>>>,
}

/// A reduced estimator with its response to the clean measurements, so a
/// sparse perturbation costs only a few columns.
struct Reduced<T> {
    est: Arc<Estimator<T>>,
    /// Position of each meter in `est.active`.
    pos: Vec<Option<usize>>,
    /// `Wᵀ`, one row per active meter.
    residual_t: Matrix<T>,
    /// `(H_F·gain_map)ᵀ`, one row per active meter.
    flow_t: Matrix<T>,
    clean_residuals: Vec<T>,
    clean_flows: Vec<T>,
}

impl<T> std::ops::Deref for Reduced<T> {
    type Target = Estimator<T>;
    fn deref(&self) -> &Estimator<T> {
        &self.est
    }
}

impl<T: Scalar> Reduced<T> {
    fn new(model: &MeasurementModel<T>, removed: &[usize], z_clean: &[T]) -> Result<Self> {
        let est = Estimator::without(model, removed)?;
        let mut pos = vec![None; model.num_measurements()];
        for (p, &i) in est.active.iter().enumerate() {
            pos[i] = Some(p);
        }
        let flow = model.h_flow.mul(&est.gain_map);
        let za: Vec<T> = est.active.iter().map(|&i| z_clean[i]).collect();
        Ok(Self {
            pos,
            residual_t: est.residual.transpose(),
            clean_residuals: est.residual.mul_vec(&za),
            clean_flows: flow.mul_vec(&za),
            flow_t: flow.transpose(),
            est: Arc::new(est),
        })
    }

    fn residuals(&self, perturbation: &[(usize, T)]) -> Vec<T> {
        let mut r = self.clean_residuals.clone();
        for &(k, v) in perturbation {
            if let (Some(p), true) = (self.pos[k], v != T::zero()) {
                for (ri, &w) in r.iter_mut().zip(self.residual_t.row(p)) {
                    *ri += w * v;
                }
            }
        }
        r
    }

    fn flows(&self, perturbation: &[(usize, T)]) -> Vec<T> {
        let mut f = self.clean_flows.clone();
        for &(k, v) in perturbation {
            if let (Some(p), true) = (self.pos[k], v != T::zero()) {
                for (fi, &s) in f.iter_mut().zip(self.flow_t.row(p)) {
                    *fi += s * v;
                }
            }
        }
        f
    }
}

struct OutcomeStore<T> {
    ids: HashMap<CongestionSets, u32>,
    list: Vec<Arc<Outcome<T>>>,
}

/// Measurement noise used to build the clean measurement vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    None,
    Seeded { seed: u64 },
}

impl<T: Scalar> AttackContext<T> {
    pub fn new(
        case: GridCase<T>,
        shift: ShiftFactors<T>,
        model: MeasurementModel<T>,
        da: MarketSolution<T>,
        specs: Vec<AttackerSpec<T>>,
        noise: Noise,
    ) -> Result<Self> {
        validate_specs(&specs, model.num_measurements(), model.num_buses())?;
        let injection = case.net_injection(&da.dispatch);
        let z_clean = match noise {
            Noise::None => simulate_measurements(&model, &injection, T::zero(), 0)?,
            Noise::Seeded { seed } => simulate_measurements(&model, &injection, model.sigma, seed)?,
        };
        let clean = estimate(&z_clean, &model);
        Ok(Self {
            clean_residuals: clean.residuals,
            clean_flows: clean.flows,
            case,
            shift,
            model,
            da,
            specs,
            bandwidth: Bandwidth::default(),
            max_removals: 3,
            z_clean,
            outcomes: RwLock::new(OutcomeStore {
                ids: HashMap::new(),
                list: Vec::new(),
            }),
            estimators: Mutex::new(HashMap::new()),
        })
    }

    pub fn num_attackers(&self) -> usize {
        self.specs.len()
    }

    pub fn num_measurements(&self) -> usize {
        self.model.num_measurements()
    }

    fn estimator(&self, removed: &[usize]) -> Result<Arc<Reduced<T>>> {
        let mut key = removed.to_vec();
        key.sort_unstable();
        if let Some(e) = self.estimators.lock().unwrap().get(&key) {
            return Ok(e.clone());
        }
        let est = Arc::new(Reduced::new(&self.model, &key, &self.z_clean)?);
        self.estimators.lock().unwrap().insert(key, est.clone());
        Ok(est)
    }

    /// Estimation and bad-data processing for an additive perturbation of
    /// the clean measurements, given as sparse `(index, value)` pairs.
    /// Same result as [`Self::detect_full`] on the perturbed vector.
    pub fn detect_sparse(&self, perturbation: &[(usize, T)]) -> Detection<T> {
        let w = &self.model.residual;
        let sf = &self.model.flow_sensitivity;
        let mut r = self.clean_residuals.clone();
        for &(k, v) in perturbation {
            if v != T::zero() {
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri += w[(i, k)] * v;
                }
            }
        }
        let norm = norm2(&r);
        if norm <= self.model.threshold {
            let mut flows = self.clean_flows.clone();
            for &(k, v) in perturbation {
                if v != T::zero() {
                    for (l, f) in flows.iter_mut().enumerate() {
                        *f += sf[(l, k)] * v;
                    }
                }
            }
            let congestion = congestion_sets(&flows, &self.case);
            return Detection {
                flows,
                congestion,
                detected: false,
                removed: Vec::new(),
                residual_norm: norm,
            };
        }
        // Largest-normalized-residual identification on cached reduced
        // estimators; mirrors `detect_and_identify_with`.
        let mut removed: Vec<usize> = Vec::new();
        let mut est = match self.estimator(&removed) {
            Ok(e) => e,
            Err(_) => return self.detect_full(&self.perturbed(perturbation)),
        };
        loop {
            let r = est.residuals(perturbation);
            let norm = norm2(&r);
            let detected = norm > est.threshold;
            let finish = |est: &Reduced<T>, removed: Vec<usize>| {
                let flows = est.flows(perturbation);
                Detection {
                    congestion: congestion_sets(&flows, &self.case),
                    flows,
                    detected: true,
                    removed,
                    residual_norm: norm,
                }
            };
            if !detected || removed.len() >= self.max_removals {
                return finish(&est, removed);
            }
            let Some(worst) = est.largest_normalized(&r) else {
                return finish(&est, removed);
            };
            let mut candidate = removed.clone();
            candidate.push(worst);
            match self.estimator(&candidate) {
                Ok(next) => {
                    removed = candidate;
                    est = next;
                }
                Err(_) => return finish(&est, removed),
            }
        }
    }

    fn perturbed(&self, perturbation: &[(usize, T)]) -> Vec<T> {
        let mut z = self.z_clean.clone();
        for &(k, v) in perturbation {
            z[k] += v;
        }
        z
    }

    /// Estimation and bad-data processing of a full measurement vector.
    pub fn detect_full(&self, z: &[T]) -> Detection<T> {
        let first = estimate(z, &self.model);
        let res = detect_and_identify_with(first, z, &self.model, self.max_removals, |removed| {
            self.estimator(removed).map(|r| r.est.clone())
        });
        Detection {
            congestion: congestion_sets(&res.flows, &self.case),
            flows: res.flows,
            detected: !res.removed.is_empty() || res.detected,
            removed: res.removed,
            residual_norm: res.residual_norm,
        }
    }

    /// Id of the market outcome for a congestion pattern, solving the
    /// ex-post market on first sight.
    pub fn outcome_id(&self, congestion: &CongestionSets) -> u32 {
        if let Some(&id) = self.outcomes.read().unwrap().ids.get(congestion) {
            return id;
        }
        let outcome = Arc::new(self.solve_outcome(congestion));
        let mut store = self.outcomes.write().unwrap();
        if let Some(&id) = store.ids.get(congestion) {
            return id;
        }
        let id = store.list.len() as u32;
        store.list.push(outcome);
        store.ids.insert(congestion.clone(), id);
        id
    }

    pub fn outcome(&self, id: u32) -> Arc<Outcome<T>> {
        self.outcomes.read().unwrap().list[id as usize].clone()
    }

    pub fn num_outcomes(&self) -> usize {
        self.outcomes.read().unwrap().list.len()
    }

    /// Uncached ex-post pricing of a congestion pattern. A failed market
    /// discards the attack and prices the clean estimate instead.
    pub fn solve_outcome(&self, congestion: &CongestionSets) -> Outcome<T> {
        match solve_expost_dcopf(&self.case, &self.shift, congestion, &self.da, self.bandwidth) {
            Ok(rt) => self.outcome_from(congestion.clone(), rt, false),
            Err(_) => {
                let clean = congestion_sets(&self.clean_flows, &self.case);
                let rt = solve_expost_dcopf(&self.case, &self.shift, &clean, &self.da, self.bandwidth)
                    .expect("the zero increment is always feasible");
                self.outcome_from(congestion.clone(), rt, true)
            }
        }
    }

    fn outcome_from(&self, congestion: CongestionSets, rt: MarketSolution<T>, discarded: bool) -> Outcome<T> {
        let zeta = self
            .specs
            .iter()
            .map(|s| zeta_from_lmps(s, &self.da.lmps, &rt.lmps))
            .collect();
        let r0: T = rt
            .lmps
            .iter()
            .zip(&self.da.lmps)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum();
        let n = T::lit(rt.lmps.len() as f64);
        Outcome {
            congestion,
            zeta,
            rmsd: (r0 / n).sqrt(),
            r0,
            degenerate: rt.degenerate,
            discarded,
            rt_lmps: rt.lmps,
        }
    }

    /// `U_m = ζ_m·P_m − c_m(z⁽ᵐ⁾)` for a profile, through the caches.
    pub fn attacker_utility(&self, m: usize, joint: &JointAttack, defended: &[usize]) -> T {
        let outcome = self.outcome(self.profile_outcome(joint, defended));
        let spec = &self.specs[m];
        outcome.zeta[m] * spec.power - attack_cost(&spec.action_levels(joint.actions[m]), spec.kappa)
    }

    /// Outcome id of a profile after defended meters are blocked.
    pub fn profile_outcome(&self, joint: &JointAttack, defended: &[usize]) -> u32 {
        let mut perturbation = Vec::new();
        for (spec, &a) in self.specs.iter().zip(&joint.actions) {
            for (&k, v) in spec.k_indices.iter().zip(spec.action_levels(a)) {
                if !defended.contains(&k) {
                    perturbation.push((k, v));
                }
            }
        }
        let det = self.detect_sparse(&perturbation);
        self.outcome_id(&det.congestion)
    }

    /// The whole pipeline with no caches:
    /// apply → estimate → identify → congestion → ex-post market → ζ.
    pub fn attacker_utility_uncached(&self, m: usize, joint: &JointAttack, defended: &[usize]) -> Result<T> {
        let n = self.num_measurements();
        let attacks = joint.vectors(&self.specs, n);
        let z = apply_attacks(&self.z_clean, &attacks, defended);
        let first = estimate(&z, &self.model);
        let res = crate::estimation::detect_and_identify(first, &z, &self.model, self.max_removals);
        let congestion = congestion_sets(&res.flows, &self.case);
        let spec = &self.specs[m];
        let cost = attack_cost(&attacks[m].values, spec.kappa);
        let rt = match solve_expost_dcopf(&self.case, &self.shift, &congestion, &self.da, self.bandwidth) {
            Ok(rt) => rt,
            Err(_) => {
                let clean = estimate(&self.z_clean, &self.model);
                let sets = congestion_sets(&clean.flows, &self.case);
                solve_expost_dcopf(&self.case, &self.shift, &sets, &self.da, self.bandwidth)?
            }
        };
        Ok(zeta(spec, &self.da, &rt) * spec.power - cost)
    }

    /// Dense outcome table over every combination of attack levels.
    pub fn build_table(&self, cap: usize) -> Result<AggregateTable> {
        AggregateTable::build(self, cap)
    }
}

/// Outcome id for every aggregate attack the attackers can form.
///
/// Because attackable sets are disjoint, an aggregate is one level choice per
/// attackable meter; the code is the mixed-radix number of those choices. A
/// defended meter behaves like its zero level, so one table serves every
/// defense.
#[derive(Debug, Clone)]
pub struct AggregateTable {
    /// Attackable meters in attacker order.
    pub meters: Vec<usize>,
    radix: Vec<usize>,
    weight: Vec<usize>,
    zero_digit: Vec<usize>,
    /// First position of each attacker's meters in `meters`.
    start: Vec<usize>,
    ids: Vec<u32>,
}

impl AggregateTable {
    pub fn build<T: Scalar>(ctx: &AttackContext<T>, cap: usize) -> Result<Self> {
        let mut meters = Vec::new();
        let mut radix = Vec::new();
        let mut zero_digit = Vec::new();
        let mut levels: Vec<Vec<T>> = Vec::new();
        let mut start = Vec::new();
        for spec in &ctx.specs {
            start.push(meters.len());
            for (&k, l) in spec.k_indices.iter().zip(&spec.levels) {
                meters.push(k);
                radix.push(l.len());
                zero_digit.push(l.iter().position(|v| *v == T::zero()).expect("validated"));
                levels.push(l.clone());
            }
        }
        let size = radix.iter().try_fold(1u128, |acc, &r| Some(acc * r as u128)).unwrap_or(u128::MAX);
        if size > cap as u128 {
            return Err(Error::ResourceGuard {
                size,
                cap: cap as u128,
            });
        }
        let size = size as usize;
        let mut weight = vec![1; radix.len()];
        for u in (0..radix.len().saturating_sub(1)).rev() {
            weight[u] = weight[u + 1] * radix[u + 1];
        }

        const CHUNK: usize = 1 << 12;
        let chunks: Vec<(Vec<u32>, Vec<CongestionSets>)> = (0..size.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(size);
                let mut local: HashMap<CongestionSets, u32> = HashMap::new();
                let mut order = Vec::new();
                let mut ids = Vec::with_capacity(hi - lo);
                let mut perturbation = Vec::with_capacity(meters.len());
                for code in lo..hi {
                    perturbation.clear();
                    for u in 0..meters.len() {
                        let d = (code / weight[u]) % radix[u];
                        perturbation.push((meters[u], levels[u][d]));
                    }
                    let det = ctx.detect_sparse(&perturbation);
                    let next = order.len() as u32;
                    let id = *local.entry(det.congestion.clone()).or_insert_with(|| {
                        order.push(det.congestion);
                        next
                    });
                    ids.push(id);
                }
                (ids, order)
            })
            .collect();

        let mut ids = Vec::with_capacity(size);
        for (local_ids, order) in chunks {
            let map: Vec<u32> = order.iter().map(|c| ctx.outcome_id(c)).collect();
            ids.extend(local_ids.into_iter().map(|i| map[i as usize]));
        }
        Ok(Self {
            meters,
            radix,
            weight,
            zero_digit,
            start,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Contribution of every action of attacker `m` to the aggregate code,
    /// with defended meters forced to their zero level.
    pub fn offsets<T: Scalar>(&self, m: usize, spec: &AttackerSpec<T>, defended: &[usize]) -> Vec<usize> {
        let base = self.start[m];
        (0..spec.num_actions())
            .map(|a| {
                spec.digits(a)
                    .iter()
                    .enumerate()
                    .map(|(p, &d)| {
                        let u = base + p;
                        let d = if defended.contains(&self.meters[u]) {
                            self.zero_digit[u]
                        } else {
                            d
                        };
                        d * self.weight[u]
                    })
                    .sum()
            })
            .collect()
    }

    pub fn id(&self, code: usize) -> u32 {
        self.ids[code]
    }

    pub fn radix(&self) -> &[usize] {
        &self.radix
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> AttackerSpec<f64> {
        AttackerSpec {
            id: 1,
            k_indices: vec![3, 4, 5],
            levels: vec![DEFAULT_LEVELS.to_vec(); 3],
            i_bus: 1,
            j_bus: 2,
            power: 100.0,
            kappa: 0.25,
            epsilon: 10.0,
            gamma: 2.0,
            beta: 0.1,
            beta_prime: 0.1,
        }
    }

    #[test]
    fn action_grid_round_trips() {
        let s = spec();
        assert_eq!(s.num_actions(), 125);
        for a in 0..125 {
            assert_eq!(s.action_of(&s.action_levels(a)), Some(a));
        }
        assert_eq!(s.action_levels(s.zero_action()), vec![0.0; 3]);
        assert_eq!(s.action_levels(0), vec![-3.5; 3]);
        assert_eq!(s.action_levels(124), vec![3.5; 3]);
    }

    #[test]
    fn cost_of_levels() {
        assert_eq!(attack_cost(&[0.0, 3.5, 2.0], 0.25), 4.0625);
        assert_eq!(attack_cost(&[0.0; 3], 0.25), 0.0);
        assert_eq!(attack_cost(&[0.0, -3.5, -2.0], 0.25), 4.0625);
    }

    #[test]
    fn relaxation_clamps() {
        // Comfortably congested: δ at its cap, no relaxation.
        assert_eq!(relaxation(50.0, 100.0, 0.1, 0.2), (10.0, 0.0));
        // Hopeless: α at its cap.
        let (d, a) = relaxation(-50.0, 100.0, 0.1, 0.2);
        assert_eq!((d, a), (0.0, 20.0));
        // Partially reachable.
        assert_eq!(relaxation(-5.0, 100.0, 0.1, 0.2), (0.0, 5.0));
        assert_eq!(relaxation(3.0, 100.0, 0.1, 0.2), (3.0, 0.0));
    }

    #[test]
    fn config_rejects_missing_zero_and_bad_gamma() {
        let mut s = spec();
        s.levels[1] = vec![-1.0, 1.0];
        assert!(s.validate(10, 3).is_err());
        let mut s = spec();
        s.gamma = 1.0;
        assert!(s.validate(10, 3).is_err());
        let mut s = spec();
        s.j_bus = 4;
        assert!(s.validate(10, 3).is_err());
        assert!(spec().validate(10, 3).is_ok());
    }

    #[test]
    fn overlapping_attackers_are_rejected() {
        let a = spec();
        let mut b = spec();
        b.id = 2;
        b.k_indices = vec![5, 6, 7];
        assert!(validate_specs(&[a.clone(), b.clone()], 10, 3).is_err());
        b.k_indices = vec![6, 7, 8];
        assert!(validate_specs(&[a, b], 10, 3).is_ok());
    }
}
