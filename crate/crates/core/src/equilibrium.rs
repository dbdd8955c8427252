//! Attacker equilibria, the defender's min-max choice and satisfaction search.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::attack::{attack_cost, AggregateTable, AttackContext, JointAttack};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Finite normal-form game with pure actions `0..num_actions(m)`.
pub trait Game<T>: Sync {
    fn num_players(&self) -> usize;
    fn num_actions(&self, player: usize) -> usize;
    fn payoff(&self, player: usize, profile: &[usize]) -> T;
}

/// Number of pure profiles, saturating.
pub fn num_profiles<T, G: Game<T> + ?Sized>(game: &G) -> u128 {
    (0..game.num_players()).fold(1u128, |acc, m| acc.saturating_mul(game.num_actions(m) as u128))
}

/// Dense payoff table; profiles are mixed-radix numbers with player 0 most significant.
#[derive(Debug, Clone)]
pub struct UtilityTensor<T> {
    pub shape: Vec<usize>,
    /// `payoffs[m][index]`.
    pub payoffs: Vec<Vec<T>>,
}

impl<T: Scalar> UtilityTensor<T> {
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(usize, &[usize]) -> T) -> Self {
        let total: usize = shape.iter().product();
        let mut payoffs = vec![Vec::with_capacity(total); shape.len()];
        let mut profile = vec![0; shape.len()];
        for _ in 0..total {
            for (m, p) in payoffs.iter_mut().enumerate() {
                p.push(f(m, &profile));
            }
            advance(&mut profile, &shape);
        }
        Self { shape, payoffs }
    }

    pub fn build<G: Game<T> + ?Sized>(game: &G, cap: usize) -> Result<Self> {
        guard(game, cap)?;
        let shape = (0..game.num_players()).map(|m| game.num_actions(m)).collect();
        Ok(Self::from_fn(shape, |m, p| game.payoff(m, p)))
    }

    pub fn index(&self, profile: &[usize]) -> usize {
        profile.iter().zip(&self.shape).fold(0, |acc, (&a, &n)| acc * n + a)
    }
}

impl<T: Scalar> Game<T> for UtilityTensor<T> {
    fn num_players(&self) -> usize {
        self.shape.len()
    }

    fn num_actions(&self, player: usize) -> usize {
        self.shape[player]
    }

    fn payoff(&self, player: usize, profile: &[usize]) -> T {
        self.payoffs[player][self.index(profile)]
    }
}

fn advance(profile: &mut [usize], shape: &[usize]) {
    for m in (0..profile.len()).rev() {
        profile[m] += 1;
        if profile[m] < shape[m] {
            return;
        }
        profile[m] = 0;
    }
}

fn guard<T, G: Game<T> + ?Sized>(game: &G, cap: usize) -> Result<()> {
    let size = num_profiles(game);
    if size > cap as u128 {
        return Err(Error::ResourceGuard {
            size,
            cap: cap as u128,
        });
    }
    Ok(())
}

/// Default cap on enumerated joint profiles.
pub const PROFILE_CAP: usize = 50_000_000;

fn improves<T: Scalar>(candidate: T, current: T) -> bool {
    candidate > current + T::tolerance() * T::one().max(current.abs())
}

/// Best-response payoff of every player against every opponent profile.
/// `best[m][k]` where `k` is the profile index with player m's digit removed.
fn best_responses<T: Scalar, G: Game<T> + ?Sized>(game: &G) -> Vec<Vec<T>> {
    let shape: Vec<usize> = (0..game.num_players()).map(|m| game.num_actions(m)).collect();
    let total: usize = shape.iter().product();
    let mut best: Vec<Vec<T>> = shape.iter().map(|&n| vec![T::neg_infinity(); total / n]).collect();
    let mut profile = vec![0; shape.len()];
    let weights = weights(&shape);
    for p in 0..total {
        for m in 0..shape.len() {
            let k = others_index(p, m, &shape, &weights);
            let u = game.payoff(m, &profile);
            if u > best[m][k] {
                best[m][k] = u;
            }
        }
        advance(&mut profile, &shape);
    }
    best
}

fn weights(shape: &[usize]) -> Vec<usize> {
    let mut w = vec![1; shape.len()];
    for m in (0..shape.len().saturating_sub(1)).rev() {
        w[m] = w[m + 1] * shape[m + 1];
    }
    w
}

fn others_index(p: usize, m: usize, shape: &[usize], weights: &[usize]) -> usize {
    (p / (weights[m] * shape[m])) * weights[m] + p % weights[m]
}

/// Whether no player gains by a unilateral deviation on the grid.
pub fn is_psne<T: Scalar, G: Game<T> + ?Sized>(game: &G, profile: &[usize]) -> bool {
    let mut dev = profile.to_vec();
    (0..game.num_players()).all(|m| {
        let current = game.payoff(m, profile);
        let ok = (0..game.num_actions(m)).all(|a| {
            dev[m] = a;
            !improves(game.payoff(m, &dev), current)
        });
        dev[m] = profile[m];
        ok
    })
}

/// Every pure-strategy Nash equilibrium, in profile order.
pub fn enumerate_psne<T: Scalar, G: Game<T> + ?Sized>(game: &G, cap: usize) -> Result<Vec<Vec<usize>>> {
    guard(game, cap)?;
    let shape: Vec<usize> = (0..game.num_players()).map(|m| game.num_actions(m)).collect();
    let total: usize = shape.iter().product();
    let best = best_responses(game);
    let weights = weights(&shape);
    let mut out = Vec::new();
    let mut profile = vec![0; shape.len()];
    for p in 0..total {
        let stable = (0..shape.len()).all(|m| {
            let k = others_index(p, m, &shape, &weights);
            !improves(best[m][k], game.payoff(m, &profile))
        });
        if stable {
            out.push(profile.clone());
        }
        advance(&mut profile, &shape);
    }
    Ok(out)
}

/// Smallest and largest payoff of each player over the whole grid.
pub fn payoff_bounds<T: Scalar, G: Game<T> + ?Sized>(game: &G) -> (Vec<T>, Vec<T>) {
    let shape: Vec<usize> = (0..game.num_players()).map(|m| game.num_actions(m)).collect();
    let total: usize = shape.iter().product();
    let mut lo = vec![T::infinity(); shape.len()];
    let mut hi = vec![T::neg_infinity(); shape.len()];
    let mut profile = vec![0; shape.len()];
    for _ in 0..total {
        for m in 0..shape.len() {
            let u = game.payoff(m, &profile);
            lo[m] = lo[m].min(u);
            hi[m] = hi[m].max(u);
        }
        advance(&mut profile, &shape);
    }
    (lo, hi)
}

/// `clamp((U − U_min)/(U_max − U_min), 0, 1)`; a flat range maps to 0.
pub fn normalize_payoff<T: Scalar>(u: T, u_min: T, u_max: T) -> T {
    if !(u_max > u_min) {
        return T::zero();
    }
    ((u - u_min) / (u_max - u_min)).max(T::zero()).min(T::one())
}

/// Mixed strategy over one automaton's action grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyVector<T>(pub Vec<T>);

impl<T: Scalar> StrategyVector<T> {
    pub fn uniform(n: usize) -> Self {
        Self(vec![T::one() / T::lit(n as f64); n])
    }

    pub fn is_valid(&self) -> bool {
        let sum: T = self.0.iter().copied().sum();
        self.0.iter().all(|&p| p >= T::zero()) && (sum - T::one()).abs() <= T::lit(1e-9).max(T::tolerance())
    }

    /// Index of the largest probability (first on ties).
    pub fn mode(&self) -> (usize, T) {
        let mut best = (0, self.0[0]);
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > best.1 {
                best = (i, p);
            }
        }
        best
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, p) in self.0.iter().enumerate() {
            acc += p.as_f64();
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the last cumulative value.
        self.0.iter().rposition(|p| *p > T::zero()).unwrap_or(self.0.len() - 1)
    }
}

/// Linear reward-inaction: `q′ = q + b·r·(e_chosen − q)`.
pub fn lri_update<T: Scalar>(q: &StrategyVector<T>, chosen: usize, r: T, b: T) -> StrategyVector<T> {
    let mut next = q.clone();
    lri_update_in_place(&mut next, chosen, r, b);
    next
}

fn lri_update_in_place<T: Scalar>(q: &mut StrategyVector<T>, chosen: usize, r: T, b: T) {
    let step = b * r;
    if step == T::zero() {
        return;
    }
    for p in q.0.iter_mut() {
        *p -= step * *p;
    }
    // Writing the chosen entry as 1 − Σ others keeps the simplex exact.
    let others: T = q
        .0
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != chosen)
        .map(|(_, &p)| p)
        .sum();
    q.0[chosen] = T::one() - others;
}

#[derive(Debug, Clone)]
pub struct LearningConfig<T> {
    pub step: T,
    pub max_iterations: usize,
    pub eta: T,
    pub seed: u64,
    /// Record the trace every this many iterations (0 disables it).
    pub trace_every: usize,
}

impl<T: Scalar> Default for LearningConfig<T> {
    fn default() -> Self {
        Self {
            step: T::lit(0.02),
            max_iterations: 200_000,
            eta: T::lit(1e-3),
            seed: 0,
            trace_every: 1000,
        }
    }
}

/// Modal action of one automaton at one point of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub attacker: usize,
    pub action: usize,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct LearningOutcome<T> {
    /// Modal action of every automaton at exit.
    pub profile: Vec<usize>,
    /// Every automaton reached `max q ≥ 1 − η` and the profile passed the
    /// PSNE check.
    pub converged: bool,
    /// Automata absorbed but the profile is not an equilibrium.
    pub rejected: bool,
    pub iterations: usize,
    pub strategies: Vec<StrategyVector<T>>,
    pub trace: Vec<TracePoint>,
}

/// Distributed learning automata: every player samples from its strategy
/// vector, receives its normalized payoff and applies [`lri_update`].
pub fn run_learning<T: Scalar, G: Game<T> + ?Sized>(
    game: &G,
    cfg: &LearningConfig<T>,
    bounds: &(Vec<T>, Vec<T>),
) -> LearningOutcome<T> {
    let players = game.num_players();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q: Vec<StrategyVector<T>> = (0..players).map(|m| StrategyVector::uniform(game.num_actions(m))).collect();
    let mut trace = Vec::new();
    let mut profile = vec![0; players];
    let target = T::one() - cfg.eta;
    let record = |trace: &mut Vec<TracePoint>, it: usize, q: &[StrategyVector<T>]| {
        for (m, s) in q.iter().enumerate() {
            let (action, p) = s.mode();
            trace.push(TracePoint {
                iteration: it,
                attacker: m,
                action,
                probability: p.as_f64(),
            });
        }
    };
    let mut iterations = 0;
    let mut absorbed = false;
    while iterations < cfg.max_iterations {
        if cfg.trace_every > 0 && iterations % cfg.trace_every == 0 {
            record(&mut trace, iterations, &q);
        }
        for (m, s) in q.iter().enumerate() {
            profile[m] = s.sample(&mut rng);
        }
        for m in 0..players {
            let u = game.payoff(m, &profile);
            let r = normalize_payoff(u, bounds.0[m], bounds.1[m]);
            lri_update_in_place(&mut q[m], profile[m], r, cfg.step);
        }
        iterations += 1;
        if q.iter().all(|s| s.mode().1 >= target) {
            absorbed = true;
            break;
        }
    }
    if cfg.trace_every > 0 {
        record(&mut trace, iterations, &q);
    }
    let modal: Vec<usize> = q.iter().map(|s| s.mode().0).collect();
    let stable = absorbed && is_psne(game, &modal);
    LearningOutcome {
        profile: modal,
        converged: stable,
        rejected: absorbed && !stable,
        iterations,
        strategies: q,
        trace,
    }
}

/// Defended measurement indices with the budget they were chosen under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefenseAction {
    pub indices: Vec<usize>,
    pub budget: usize,
    /// Per-measurement defense cost, $.
    pub kappa0: f64,
}

impl DefenseAction {
    pub fn new(mut indices: Vec<usize>, budget: usize, kappa0: f64) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if indices.len() > budget {
            return Err(Error::Config(format!(
                "{} defended measurements exceed the budget of {budget}",
                indices.len()
            )));
        }
        Ok(Self {
            indices,
            budget,
            kappa0,
        })
    }

    pub fn cost(&self) -> f64 {
        self.kappa0 * self.indices.len() as f64
    }
}

/// Subsets of `vulnerable` with `min_size ≤ |a₀| ≤ max_size`, by size then lexicographically.
pub fn defense_candidates(vulnerable: &[usize], min_size: usize, max_size: usize) -> Vec<Vec<usize>> {
    let mut v = vulnerable.to_vec();
    v.sort_unstable();
    v.dedup();
    let mut out = Vec::new();
    for size in min_size..=max_size.min(v.len()) {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            out.push(idx.iter().map(|&i| v[i]).collect());
            let Some(pos) = (0..size).rev().find(|&p| idx[p] != p + v.len() - size) else {
                break;
            };
            idx[pos] += 1;
            for p in pos + 1..size {
                idx[p] = idx[p - 1] + 1;
            }
        }
    }
    out
}

/// `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// The attackers' game under one defense, read from the aggregate table.
pub struct AttackGame<'a, T: Scalar> {
    ctx: &'a AttackContext<T>,
    table: &'a AggregateTable,
    offsets: Vec<Vec<usize>>,
    costs: Vec<Vec<T>>,
    /// `ζ_m·P_m` per outcome id.
    gains: Vec<Vec<T>>,
    pub defended: Vec<usize>,
}

impl<'a, T: Scalar> AttackGame<'a, T> {
    pub fn new(ctx: &'a AttackContext<T>, table: &'a AggregateTable, defended: &[usize]) -> Self {
        let offsets = ctx
            .specs
            .iter()
            .enumerate()
            .map(|(m, s)| table.offsets(m, s, defended))
            .collect();
        let costs = ctx
            .specs
            .iter()
            .map(|s| (0..s.num_actions()).map(|a| attack_cost(&s.action_levels(a), s.kappa)).collect())
            .collect();
        let gains = (0..ctx.num_outcomes() as u32)
            .map(|id| {
                let o = ctx.outcome(id);
                ctx.specs.iter().zip(&o.zeta).map(|(s, &z)| z * s.power).collect()
            })
            .collect();
        Self {
            ctx,
            table,
            offsets,
            costs,
            gains,
            defended: defended.to_vec(),
        }
    }

    pub fn outcome_id(&self, profile: &[usize]) -> u32 {
        let code: usize = profile.iter().zip(&self.offsets).map(|(&a, o)| o[a]).sum();
        self.table.id(code)
    }

    pub fn context(&self) -> &AttackContext<T> {
        self.ctx
    }
}

impl<T: Scalar> Game<T> for AttackGame<'_, T> {
    fn num_players(&self) -> usize {
        self.offsets.len()
    }

    fn num_actions(&self, player: usize) -> usize {
        self.offsets[player].len()
    }

    fn payoff(&self, player: usize, profile: &[usize]) -> T {
        let id = self.outcome_id(profile);
        self.gains[id as usize][player] - self.costs[player][profile[player]]
    }
}

/// Total load times the RMS price deviation, plus the defense cost.
pub fn defender_utility<T: Scalar>(total_load: T, rmsd_abs: T, defense_cost: T) -> T {
    total_load * rmsd_abs + defense_cost
}

/// Eq.-style RMSD between two price vectors.
pub fn rmsd<T: Scalar>(da: &[T], rt: &[T]) -> T {
    assert_eq!(da.len(), rt.len(), "price vectors differ in length");
    let n = T::lit(da.len() as f64);
    let s: T = da.iter().zip(rt).map(|(&a, &b)| (b - a) * (b - a)).sum();
    (s / n).sqrt()
}

/// RMSD divided by the load-weighted mean day-ahead price.
pub fn relative_rmsd<T: Scalar>(rmsd_abs: T, reference_price: T) -> T {
    rmsd_abs / reference_price
}

/// `Σᵢ Dᵢ·μᵢ / Σᵢ Dᵢ`.
pub fn load_weighted_price<T: Scalar>(loads: &[T], lmps: &[T]) -> T {
    let total: T = loads.iter().copied().sum();
    loads.iter().zip(lmps).map(|(&d, &mu)| d * mu).sum::<T>() / total
}

/// `U₀(HHE) − U₀(HE)`.
pub fn price_of_information<T: Scalar>(u0_hhe: T, u0_he: T) -> T {
    u0_hhe - u0_he
}

/// Attackers' worst-case equilibrium for one defense.
#[derive(Debug, Clone, Serialize)]
pub struct DefenseEvaluation<T> {
    pub defense: Vec<usize>,
    pub psne_count: usize,
    /// Profile with the largest `U₀` among the equilibria (or among all
    /// profiles when no equilibrium exists).
    pub profile: Vec<usize>,
    pub u0: T,
    pub rmsd: T,
    pub r0: T,
    pub outcome: u32,
    /// No pure equilibrium exists; `profile` is the worst profile overall.
    pub no_psne: bool,
}

/// Worst case over the attackers' pure equilibria under `defense`.
pub fn evaluate_defense<T: Scalar>(
    ctx: &AttackContext<T>,
    table: &AggregateTable,
    defense: &[usize],
    kappa0: f64,
    cap: usize,
) -> Result<DefenseEvaluation<T>> {
    let game = AttackGame::new(ctx, table, defense);
    let psne = enumerate_psne(&game, cap)?;
    let total_load = ctx.case.total_load();
    let cost = T::lit(kappa0 * defense.len() as f64);
    let u0_of = |id: u32| defender_utility(total_load, ctx.outcome(id).rmsd, cost);
    let no_psne = psne.is_empty();
    let candidates: Box<dyn Iterator<Item = Vec<usize>>> = if no_psne {
        let shape: Vec<usize> = (0..game.num_players()).map(|m| game.num_actions(m)).collect();
        let total: usize = shape.iter().product();
        let mut p = vec![0; shape.len()];
        Box::new((0..total).map(move |_| {
            let cur = p.clone();
            advance(&mut p, &shape);
            cur
        }))
    } else {
        Box::new(psne.clone().into_iter())
    };
    let mut worst: Option<(Vec<usize>, u32, T)> = None;
    for profile in candidates {
        let id = game.outcome_id(&profile);
        let u0 = u0_of(id);
        if worst.as_ref().map_or(true, |w| improves(u0, w.2)) {
            worst = Some((profile, id, u0));
        }
    }
    let (profile, outcome, u0) = worst.expect("the grid is nonempty");
    let o = ctx.outcome(outcome);
    Ok(DefenseEvaluation {
        defense: defense.to_vec(),
        psne_count: psne.len(),
        profile,
        u0,
        rmsd: o.rmsd,
        r0: o.r0,
        outcome,
        no_psne,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HierarchicalResult<T> {
    pub best: DefenseEvaluation<T>,
    /// Every feasible defense with its worst-case equilibrium, in candidate order.
    pub evaluations: Vec<DefenseEvaluation<T>>,
}

/// Min over defenses `|a₀| ≤ B₀` of the worst-case equilibrium `U₀`.
/// Ties go to the smaller, then lexicographically first, defense.
pub fn find_hierarchical_eq<T: Scalar>(
    ctx: &AttackContext<T>,
    table: &AggregateTable,
    budget: usize,
    vulnerable: &[usize],
    kappa0: f64,
    cap: usize,
) -> Result<HierarchicalResult<T>> {
    let candidates = defense_candidates(vulnerable, 0, budget);
    let evaluations = candidates
        .par_iter()
        .map(|d| evaluate_defense(ctx, table, d, kappa0, cap))
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, e) in evaluations.iter().enumerate() {
        if improves(evaluations[best].u0, e.u0) {
            best = i;
        }
    }
    Ok(HierarchicalResult {
        best: evaluations[best].clone(),
        evaluations,
    })
}

/// The defender's satisfaction level, either on `r₀` directly or as a
/// percentage RMSD relative to a reference price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Threshold {
    Absolute(f64),
    RelativeRmsd { percent: f64 },
}

impl Threshold {
    /// Equivalent bound on `r₀ = N·RMSD²`.
    pub fn as_r0(&self, buses: usize, reference_price: f64) -> f64 {
        match *self {
            Threshold::Absolute(r0) => r0,
            Threshold::RelativeRmsd { percent } => {
                let rmsd = percent / 100.0 * reference_price;
                buses as f64 * rmsd * rmsd
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct SatisfactionConfig {
    /// Γ₀ as a bound on r₀.
    pub gamma0: f64,
    pub max_trials: usize,
    pub seed: u64,
    pub vulnerable: Vec<usize>,
    pub with_replacement: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchStats {
    pub p0: f64,
    pub p0_star: f64,
    /// `None` when `p₀ = 0`.
    pub mu0: Option<f64>,
    pub v0: Option<f64>,
}

/// `p₀ = n₀/|A₀|`, `p₀* = 1 − (1 − p₀)^N₀`, `μ₀ = 1/p₀`, `v₀ = (1 − p₀)/p₀²`.
pub fn search_stats(n0: usize, actions: usize, max_trials: usize) -> SearchStats {
    let p0 = if actions == 0 { 0.0 } else { n0 as f64 / actions as f64 };
    let p0_star = 1.0 - (1.0 - p0).powi(max_trials as i32);
    let (mu0, v0) = if p0 > 0.0 {
        (Some(1.0 / p0), Some((1.0 - p0) / (p0 * p0)))
    } else {
        (None, None)
    };
    SearchStats { p0, p0_star, mu0, v0 }
}

#[derive(Debug, Clone, Serialize)]
pub struct SatisfactionOutcome {
    /// First defense meeting the threshold.
    pub accepted: Option<Vec<usize>>,
    pub trials: usize,
    /// Lowest-r₀ defense seen (the accepted one on success).
    pub best_seen: Vec<usize>,
    pub best_r0: f64,
    /// Every defense tried, in order, with its r₀.
    pub history: Vec<(Vec<usize>, f64)>,
}

/// Random search over size-`B₀` defenses for one with `r₀ ≤ Γ₀`, where
/// `evaluate` returns r₀ at the attackers' response to a defense.
pub fn satisfaction_search<F>(cfg: &SatisfactionConfig, budget: usize, mut evaluate: F) -> Result<SatisfactionOutcome>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    if cfg.max_trials == 0 {
        return Err(Error::Config("satisfaction search needs at least one trial".into()));
    }
    if !(cfg.gamma0 > 0.0) {
        return Err(Error::Config("satisfaction threshold must be positive".into()));
    }
    let actions = defense_candidates(&cfg.vulnerable, budget, budget);
    if actions.is_empty() {
        return Err(Error::Config(format!(
            "no defense of size {budget} within {} vulnerable measurements",
            cfg.vulnerable.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let order: Vec<usize> = if cfg.with_replacement {
        (0..cfg.max_trials).map(|_| rng.gen_range(0..actions.len())).collect()
    } else {
        let mut o: Vec<usize> = (0..actions.len()).collect();
        o.shuffle(&mut rng);
        o.truncate(cfg.max_trials);
        o
    };
    let mut history = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &i in &order {
        let r0 = evaluate(&actions[i])?;
        history.push((actions[i].clone(), r0));
        if best.map_or(true, |(_, b)| r0 < b) {
            best = Some((i, r0));
        }
        if r0 <= cfg.gamma0 {
            return Ok(SatisfactionOutcome {
                accepted: Some(actions[i].clone()),
                trials: history.len(),
                best_seen: actions[i].clone(),
                best_r0: r0,
                history,
            });
        }
    }
    let (i, r0) = best.expect("at least one trial ran");
    Ok(SatisfactionOutcome {
        accepted: None,
        trials: history.len(),
        best_seen: actions[i].clone(),
        best_r0: r0,
        history,
    })
}

/// Best action of attacker `m` when it acts alone.
pub fn solo_best_response<T: Scalar>(game: &AttackGame<'_, T>, zero: &JointAttack, m: usize) -> usize {
    let mut profile = zero.actions.clone();
    let mut best = (zero.actions[m], game.payoff(m, &profile));
    for a in 0..game.num_actions(m) {
        profile[m] = a;
        let u = game.payoff(m, &profile);
        if improves(u, best.1) {
            best = (a, u);
        }
    }
    best.0
}
