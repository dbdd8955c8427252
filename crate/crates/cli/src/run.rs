//! Experiment orchestration for `gridgame run`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gridgame_core::attack::{AggregateTable, AttackContext, AttackerSpec, JointAttack, Noise, Outcome};
use gridgame_core::equilibrium::{
    defender_utility, evaluate_defense, find_hierarchical_eq, load_weighted_price, payoff_bounds, relative_rmsd,
    run_learning, satisfaction_search, search_stats, solo_best_response, AttackGame, DefenseEvaluation, Game,
    LearningConfig, LearningOutcome, SatisfactionConfig, Threshold, TracePoint, PROFILE_CAP,
};
use gridgame_core::estimation::{apply_attacks, AttackVector, congestion_sets, detect_and_identify, estimate, EstimationResult};
use gridgame_core::grid::{build_measurement_model, build_shift_factors, load_case, GridCase, MeasurementModel};
use gridgame_core::market::{da_dcopf_program, expost_program, solve_da_dcopf, CongestionSets};

use crate::report::*;
use crate::scenario::{Mode, Response, Scenario};

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub dump_lp: bool,
    pub dump_estimation: bool,
}

/// How the run ended, mapped to the process exit code by the binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    Unsatisfied,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::Unsatisfied => 2,
        }
    }
}

/// Everything a run produces, before it is written out.
pub struct Artifacts {
    pub report: Report,
    pub lmps: Vec<LmpRow>,
    pub trace: Vec<TracePoint>,
    pub summary: String,
    pub status: Status,
    pub estimation: Option<EstimationResult<f64>>,
    pub z: Vec<f64>,
    pub lp_dumps: Vec<(String, String)>,
}

pub struct LmpRow {
    pub profile: String,
    pub bus: usize,
    pub mu_da: f64,
    pub mu_rt: f64,
}

pub fn run(path: &Path, opts: &RunOptions) -> Result<Status> {
    let artifacts = execute(path, opts)?;
    write_artifacts(&artifacts, opts)?;
    Ok(artifacts.status)
}

/// Runs a scenario without touching the filesystem beyond reading inputs.
pub fn execute(path: &Path, opts: &RunOptions) -> Result<Artifacts> {
    let (scenario, case_path) = Scenario::load(path)?;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let session = Session::new(&scenario, &case_path, seed)?;
    let mut art = match scenario.mode {
        Mode::Stackelberg => session.stackelberg()?,
        Mode::Satisfaction => session.satisfaction()?,
        Mode::SoloAttacks => session.solo()?,
        Mode::SingleRun => session.single_run()?,
    };
    if opts.dump_lp {
        art.lp_dumps = session.lp_dumps(&art.report);
    }
    Ok(art)
}

pub fn write_artifacts(art: &Artifacts, opts: &RunOptions) -> Result<()> {
    let out = &opts.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut json = serde_json::to_string_pretty(&art.report)?;
    json.push('\n');
    write(out, "report.json", json.as_bytes())?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["profile", "bus", "mu_da", "mu_rt"])?;
    for r in &art.lmps {
        w.write_record([r.profile.clone(), r.bus.to_string(), fmt(r.mu_da), fmt(r.mu_rt)])?;
    }
    write(out, "lmps.csv", &w.into_inner()?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iteration", "attacker", "action", "probability"])?;
    for t in &art.trace {
        w.write_record([
            t.iteration.to_string(),
            (t.attacker + 1).to_string(),
            t.action.to_string(),
            fmt(t.probability),
        ])?;
    }
    write(out, "convergence.csv", &w.into_inner()?)?;
    write(out, "summary.txt", art.summary.as_bytes())?;

    if opts.dump_estimation {
        let est = art.estimation.as_ref().context("no estimation to dump")?;
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["index", "z", "z_hat", "r"])?;
        for (i, ((z, zh), r)) in art.z.iter().zip(&est.estimates).zip(&est.residuals).enumerate() {
            w.write_record([i.to_string(), fmt(*z), fmt(*zh), fmt(*r)])?;
        }
        write(out, "estimation.csv", &w.into_inner()?)?;
    }
    for (name, text) in &art.lp_dumps {
        write(out, name, text.as_bytes())?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
}

fn fmt(v: f64) -> String {
    format!("{v:.9}")
}

/// Shared state of one scenario run.
struct Session<'a> {
    scenario: &'a Scenario,
    seed: u64,
    ctx: AttackContext<f64>,
    vulnerable: Vec<usize>,
    reference_price: f64,
    name: String,
}

impl<'a> Session<'a> {
    fn new(scenario: &'a Scenario, case_path: &Path, seed: u64) -> Result<Self> {
        let case: GridCase<f64> =
            load_case(case_path).with_context(|| format!("loading case {}", case_path.display()))?;
        let x = build_shift_factors(&case)?;
        let da = solve_da_dcopf(&case, &x).context("day-ahead market")?;
        let model = build_measurement_model(&case, scenario.confidence)?;
        let specs = scenario
            .attackers
            .iter()
            .enumerate()
            .map(|(m, a)| a.resolve(m + 1, &model).with_context(|| format!("attackers[{m}]")))
            .collect::<Result<Vec<_>>>()?;
        let attackable: Vec<usize> = specs.iter().flat_map(|s| s.k_indices.clone()).collect();
        let vulnerable = scenario.vulnerable_indices(&model, &attackable)?;
        let noise = if scenario.noise {
            Noise::Seeded { seed }
        } else {
            Noise::None
        };
        let reference_price = load_weighted_price(&case.loads(), &da.lmps);
        let name = case_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ctx = AttackContext::new(case, x, model, da, specs, noise)?;
        Ok(Self {
            scenario,
            seed,
            ctx,
            vulnerable,
            reference_price,
            name,
        })
    }

    fn table(&self) -> Result<AggregateTable> {
        Ok(self.ctx.build_table(PROFILE_CAP)?)
    }

    fn model(&self) -> &MeasurementModel<f64> {
        &self.ctx.model
    }

    fn specs(&self) -> &[AttackerSpec<f64>] {
        &self.ctx.specs
    }

    fn total_load(&self) -> f64 {
        self.ctx.case.total_load()
    }

    fn name_of(&self, k: usize) -> String {
        measurement_name(self.model(), k)
    }

    fn names(&self, ks: &[usize]) -> Vec<String> {
        ks.iter().map(|&k| self.name_of(k)).collect()
    }

    fn case_summary(&self) -> CaseSummary {
        let c = &self.ctx.case;
        CaseSummary {
            name: self.name.clone(),
            buses: c.num_buses(),
            lines: c.num_lines(),
            generators: c.num_generators(),
            total_load: c.total_load(),
            da_energy_price: self.ctx.da.energy_price,
            reference_price: self.reference_price,
            da_congested_lines: self.ctx.da.congestion.all().iter().map(|l| l + 1).collect(),
            detection_threshold: self.model().threshold,
        }
    }

    fn defense_report(&self, defense: &[usize]) -> DefenseReport {
        DefenseReport {
            indices: defense.to_vec(),
            measurements: self.names(defense),
            budget: self.scenario.budget,
            cost: self.scenario.kappa0 * defense.len() as f64,
        }
    }

    fn profile_levels(&self, profile: &[usize]) -> Vec<Vec<f64>> {
        self.specs()
            .iter()
            .zip(profile)
            .map(|(s, &a)| s.action_levels(a))
            .collect()
    }

    fn attackers_report(&self, game: &AttackGame<'_, f64>, profile: &[usize], outcome: &Outcome<f64>) -> Vec<AttackerReport> {
        self.specs()
            .iter()
            .enumerate()
            .map(|(m, s)| AttackerReport {
                id: s.id,
                measurements: self.names(&s.k_indices),
                levels: s.action_levels(profile[m]),
                action: Some(profile[m]),
                utility: game.payoff(m, profile),
                zeta: outcome.zeta[m],
            })
            .collect()
    }

    fn lmp_rows(&self, label: &str, rt: &[f64]) -> Vec<LmpRow> {
        self.ctx
            .da
            .lmps
            .iter()
            .zip(rt)
            .enumerate()
            .map(|(i, (&d, &r))| LmpRow {
                profile: label.to_string(),
                bus: i + 1,
                mu_da: d,
                mu_rt: r,
            })
            .collect()
    }

    fn relative(&self, rmsd: f64) -> f64 {
        100.0 * relative_rmsd(rmsd, self.reference_price)
    }

    fn evaluation_row(&self, e: &DefenseEvaluation<f64>) -> EvaluationRow {
        EvaluationRow {
            defense: self.names(&e.defense),
            psne_count: e.psne_count,
            no_psne: e.no_psne,
            u0: e.u0,
            rmsd: e.rmsd,
            r0: e.r0,
            profile: self.profile_levels(&e.profile),
            congestion: congestion_report(&self.ctx.outcome(e.outcome).congestion),
        }
    }

    fn learning_config(&self, seed: u64) -> LearningConfig<f64> {
        let l = &self.scenario.learning;
        LearningConfig {
            step: l.step,
            max_iterations: l.max_iterations,
            eta: l.eta,
            seed,
            trace_every: l.trace_every,
        }
    }

    /// Seeded automata runs on `game`; the trace of the first run is kept.
    fn cross_check(&self, game: &AttackGame<'_, f64>) -> (LearningReport, Vec<TracePoint>) {
        let bounds = payoff_bounds(game);
        let runs = self.scenario.learning.restarts;
        let outcomes: Vec<LearningOutcome<f64>> = (0..runs)
            .map(|r| run_learning(game, &self.learning_config(self.seed.wrapping_add(r as u64)), &bounds))
            .collect();
        let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for o in outcomes.iter().filter(|o| o.converged) {
            *counts.entry(o.profile.clone()).or_default() += 1;
        }
        let total_load = self.total_load();
        let profiles = counts
            .into_iter()
            .map(|(p, count)| LearnedProfile {
                levels: self.profile_levels(&p),
                count,
                u0: total_load * self.ctx.outcome(game.outcome_id(&p)).rmsd,
            })
            .collect();
        let mean_iterations = if runs == 0 {
            0.0
        } else {
            outcomes.iter().map(|o| o.iterations as f64).sum::<f64>() / runs as f64
        };
        let report = LearningReport {
            runs,
            converged: outcomes.iter().filter(|o| o.converged).count(),
            rejected: outcomes.iter().filter(|o| o.rejected).count(),
            mean_iterations,
            profiles,
        };
        let trace = outcomes.into_iter().next().map(|o| o.trace).unwrap_or_default();
        (report, trace)
    }

    /// Full pipeline on explicit attack vectors, for dumps and single runs.
    fn pipeline(&self, attacks: &[AttackVector<f64>], defended: &[usize]) -> (Vec<f64>, EstimationResult<f64>) {
        let z = apply_attacks(&self.ctx.z_clean, attacks, defended);
        let first = estimate(&z, self.model());
        let res = detect_and_identify(first, &z, self.model(), self.ctx.max_removals);
        (z, res)
    }

    fn profile_pipeline(&self, profile: &[usize], defended: &[usize]) -> (Vec<f64>, EstimationResult<f64>) {
        let joint = JointAttack {
            actions: profile.to_vec(),
        };
        self.pipeline(&joint.vectors(self.specs(), self.ctx.num_measurements()), defended)
    }

    fn base_report(&self, method: &'static str, defense: &[usize]) -> Report {
        Report {
            mode: self.scenario.mode.tag(),
            method,
            seed: self.seed,
            case: self.case_summary(),
            defense: self.defense_report(defense),
            attackers: Vec::new(),
            u0: 0.0,
            rmsd: 0.0,
            relative_rmsd_percent: 0.0,
            r0: 0.0,
            congestion: CongestionReport::default(),
            equilibria: None,
            evaluations: Vec::new(),
            learning: None,
            satisfaction: None,
            price_of_information: None,
            solo: Vec::new(),
            cross_effects: Vec::new(),
            detection: None,
        }
    }

    fn fill_outcome(&self, report: &mut Report, outcome: &Outcome<f64>, defense_cost: f64) {
        report.u0 = defender_utility(self.total_load(), outcome.rmsd, defense_cost);
        report.rmsd = outcome.rmsd;
        report.relative_rmsd_percent = self.relative(outcome.rmsd);
        report.r0 = outcome.r0;
        report.congestion = congestion_report(&outcome.congestion);
    }

    fn stackelberg(&self) -> Result<Artifacts> {
        let table = self.table()?;
        let he = find_hierarchical_eq(
            &self.ctx,
            &table,
            self.scenario.budget,
            &self.vulnerable,
            self.scenario.kappa0,
            PROFILE_CAP,
        )?;
        let best = &he.best;
        let game = AttackGame::new(&self.ctx, &table, &best.defense);
        let outcome = self.ctx.outcome(best.outcome);
        let mut report = self.base_report("enumeration", &best.defense);
        report.attackers = self.attackers_report(&game, &best.profile, &outcome);
        let cost = report.defense.cost;
        self.fill_outcome(&mut report, &outcome, cost);
        report.equilibria = Some(EquilibriumSummary {
            psne_count: best.psne_count,
            no_psne: best.no_psne,
        });
        report.evaluations = he.evaluations.iter().map(|e| self.evaluation_row(e)).collect();
        let (learning, trace) = self.cross_check(&game);
        report.learning = Some(learning);

        let mut lmps = Vec::new();
        for e in &he.evaluations {
            let label = defense_label(&self.names(&e.defense));
            lmps.extend(self.lmp_rows(&label, &self.ctx.outcome(e.outcome).rt_lmps));
        }
        let (z, est) = self.profile_pipeline(&best.profile, &best.defense);
        let summary = self.summary_stackelberg(&report);
        Ok(Artifacts {
            report,
            lmps,
            trace,
            summary,
            status: Status::Success,
            estimation: Some(est),
            z,
            lp_dumps: Vec::new(),
        })
    }

    fn satisfaction(&self) -> Result<Artifacts> {
        let settings = self.scenario.satisfaction.as_ref().expect("checked on load");
        let budget = self.scenario.budget;
        let table = self.table()?;
        let threshold: Threshold = settings.threshold.into();
        let gamma0 = threshold.as_r0(self.ctx.case.num_buses(), self.reference_price);
        let actions = gridgame_core::equilibrium::defense_candidates(&self.vulnerable, budget, budget);
        let max_trials = settings.max_trials.unwrap_or(actions.len());
        let kappa0 = self.scenario.kappa0;

        // r₀ at the attackers' response to a defense, by the configured rule.
        let response = |d: &[usize], salt: u64| -> Result<(f64, Vec<usize>, u32)> {
            match settings.response {
                Response::WorstCase => {
                    let e = evaluate_defense(&self.ctx, &table, d, kappa0, PROFILE_CAP)?;
                    Ok((e.r0, e.profile, e.outcome))
                }
                Response::Learning => {
                    let game = AttackGame::new(&self.ctx, &table, d);
                    let cfg = self.learning_config(self.seed.wrapping_add(salt));
                    let o = run_learning(&game, &cfg, &payoff_bounds(&game));
                    let id = game.outcome_id(&o.profile);
                    Ok((self.ctx.outcome(id).r0, o.profile, id))
                }
            }
        };
        let salt_of = |d: &[usize]| actions.iter().position(|a| a == d).unwrap_or(0) as u64;
        let cfg = SatisfactionConfig {
            gamma0,
            max_trials,
            seed: self.seed,
            vulnerable: self.vulnerable.clone(),
            with_replacement: settings.with_replacement,
        };
        let outcome = satisfaction_search(&cfg, budget, |d| {
            response(d, salt_of(d))
                .map(|r| r.0)
                .map_err(|e| gridgame_core::Error::Config(format!("{e:#}")))
        })?;

        let mut n0 = 0;
        for a in &actions {
            if response(a, salt_of(a))?.0 <= gamma0 {
                n0 += 1;
            }
        }
        let stats = search_stats(n0, actions.len(), max_trials);
        let he = find_hierarchical_eq(&self.ctx, &table, budget, &self.vulnerable, kappa0, PROFILE_CAP)?;

        let chosen = outcome.accepted.clone().unwrap_or_else(|| outcome.best_seen.clone());
        let (_, profile, id) = response(&chosen, salt_of(&chosen))?;
        let game = AttackGame::new(&self.ctx, &table, &chosen);
        let o = self.ctx.outcome(id);
        let accepted = outcome.accepted.is_some();
        let mut report = self.base_report(if accepted { "satisfaction" } else { "satisfaction-failure" }, &chosen);
        report.attackers = self.attackers_report(&game, &profile, &o);
        let cost = report.defense.cost;
        self.fill_outcome(&mut report, &o, cost);
        // PI compares worst-case losses so it never goes negative.
        let hhe = evaluate_defense(&self.ctx, &table, &chosen, kappa0, PROFILE_CAP)?;
        report.price_of_information = Some((hhe.u0 - he.best.u0).max(0.0));
        report.equilibria = Some(EquilibriumSummary {
            psne_count: hhe.psne_count,
            no_psne: hhe.no_psne,
        });
        report.satisfaction = Some(SatisfactionReport {
            response: match settings.response {
                Response::WorstCase => "worst-case",
                Response::Learning => "learning",
            },
            threshold_r0: gamma0,
            accepted,
            trials: outcome.trials,
            max_trials,
            with_replacement: settings.with_replacement,
            best_r0: outcome.best_r0,
            history: outcome.history.iter().map(|(d, r)| (self.names(d), *r)).collect(),
            n0,
            actions: actions.len(),
            p0: stats.p0,
            p0_star: stats.p0_star,
            mu0: stats.mu0,
            v0: stats.v0,
            he_defense: self.names(&he.best.defense),
            he_u0: he.best.u0,
        });
        let (learning, trace) = self.cross_check(&game);
        report.learning = Some(learning);

        let mut lmps = Vec::new();
        for (d, _) in &outcome.history {
            let (_, _, id) = response(d, salt_of(d))?;
            lmps.extend(self.lmp_rows(&defense_label(&self.names(d)), &self.ctx.outcome(id).rt_lmps));
        }
        let (z, est) = self.profile_pipeline(&profile, &chosen);
        let summary = self.summary_satisfaction(&report);
        Ok(Artifacts {
            report,
            lmps,
            trace,
            summary,
            status: if accepted { Status::Success } else { Status::Unsatisfied },
            estimation: Some(est),
            z,
            lp_dumps: Vec::new(),
        })
    }

    fn solo(&self) -> Result<Artifacts> {
        let table = self.table()?;
        let game = AttackGame::new(&self.ctx, &table, &[]);
        let zero = JointAttack::zero(self.specs());
        let total_load = self.total_load();
        let mut solo = Vec::new();
        let mut lmps = Vec::new();
        let mut trace = Vec::new();
        let mut outcomes = Vec::new();
        for (m, spec) in self.specs().iter().enumerate() {
            let mut profile = zero.actions.clone();
            profile[m] = solo_best_response(&game, &zero, m);
            let id = game.outcome_id(&profile);
            let o = self.ctx.outcome(id);
            let one = SoloGame {
                game: &game,
                base: zero.actions.clone(),
                player: m,
            };
            let learned = run_learning(&one, &self.learning_config(self.seed.wrapping_add(m as u64)), &payoff_bounds(&one));
            trace.extend(learned.trace.iter().map(|t| TracePoint {
                attacker: m,
                ..t.clone()
            }));
            solo.push(SoloReport {
                attacker: spec.id,
                levels: spec.action_levels(profile[m]),
                utility: game.payoff(m, &profile),
                u0: defender_utility(total_load, o.rmsd, 0.0),
                rmsd: o.rmsd,
                relative_rmsd_percent: self.relative(o.rmsd),
                congestion: congestion_report(&o.congestion),
                learned_levels: learned.converged.then(|| spec.action_levels(learned.profile[0])),
            });
            lmps.extend(self.lmp_rows(&format!("attacker{}", spec.id), &o.rt_lmps));
            outcomes.push(o);
        }
        let cross_effects = self
            .specs()
            .iter()
            .enumerate()
            .map(|(i, s)| outcomes.iter().map(|o| o.zeta[i] * s.power).collect())
            .collect();
        let mut report = self.base_report("enumeration", &[]);
        report.attackers = self
            .specs()
            .iter()
            .map(|s| AttackerReport {
                id: s.id,
                measurements: self.names(&s.k_indices),
                levels: vec![0.0; s.k_indices.len()],
                action: Some(s.zero_action()),
                utility: 0.0,
                zeta: 0.0,
            })
            .collect();
        report.solo = solo;
        report.cross_effects = cross_effects;
        let (z, est) = self.profile_pipeline(&zero.actions, &[]);
        let summary = self.summary_solo(&report);
        Ok(Artifacts {
            report,
            lmps,
            trace,
            summary,
            status: Status::Success,
            estimation: Some(est),
            z,
            lp_dumps: Vec::new(),
        })
    }

    fn single_run(&self) -> Result<Artifacts> {
        let run = self.scenario.single_run.as_ref().expect("checked on load");
        let mut defense = run
            .defense
            .iter()
            .map(|r| r.resolve(self.model()))
            .collect::<gridgame_core::Result<Vec<_>>>()
            .context("single_run.defense")?;
        defense.sort_unstable();
        defense.dedup();
        if defense.len() > self.scenario.budget {
            bail!(
                "single_run.defense: {} measurements exceed the budget of {}",
                defense.len(),
                self.scenario.budget
            );
        }
        let n = self.ctx.num_measurements();
        let mut attacks = Vec::new();
        for (m, (spec, levels)) in self.specs().iter().zip(&run.profile).enumerate() {
            if levels.len() != spec.k_indices.len() {
                bail!(
                    "single_run.profile[{m}]: {} levels for {} measurements",
                    levels.len(),
                    spec.k_indices.len()
                );
            }
            let mut v = AttackVector::zeros(spec.id, n);
            for (&k, &a) in spec.k_indices.iter().zip(levels) {
                v.values[k] = a;
            }
            attacks.push(v);
        }
        let (z, est) = self.pipeline(&attacks, &defense);
        let congestion = congestion_sets(&est.flows, &self.ctx.case);
        let o = self.ctx.outcome(self.ctx.outcome_id(&congestion));
        let mut report = self.base_report("pipeline", &defense);
        report.attackers = self
            .specs()
            .iter()
            .zip(&run.profile)
            .enumerate()
            .map(|(m, (s, levels))| {
                let cost = gridgame_core::attack::attack_cost(levels, s.kappa);
                AttackerReport {
                    id: s.id,
                    measurements: self.names(&s.k_indices),
                    levels: levels.clone(),
                    action: s.action_of(levels),
                    utility: o.zeta[m] * s.power - cost,
                    zeta: o.zeta[m],
                }
            })
            .collect();
        let cost = report.defense.cost;
        self.fill_outcome(&mut report, &o, cost);
        report.detection = Some(DetectionReport {
            residual_norm: est.residual_norm,
            threshold: est.threshold,
            detected: est.detected,
            removed: self.names(&est.removed),
            observability_limited: est.observability_limited,
            discarded: o.discarded,
        });
        let lmps = self.lmp_rows("single-run", &o.rt_lmps);
        let summary = self.summary_single(&report);
        Ok(Artifacts {
            report,
            lmps,
            trace: Vec::new(),
            summary,
            status: Status::Success,
            estimation: Some(est),
            z,
            lp_dumps: Vec::new(),
        })
    }

    fn lp_dumps(&self, report: &Report) -> Vec<(String, String)> {
        let case = &self.ctx.case;
        let da = da_dcopf_program(case, &self.ctx.shift);
        let mut out = vec![("lp_da.txt".to_string(), da.dump())];
        let c = &report.congestion;
        let sets = CongestionSets::new(
            c.upper.iter().map(|l| l - 1).collect(),
            c.lower.iter().map(|l| l - 1).collect(),
        );
        let rt = expost_program(case, &self.ctx.shift, &sets, &self.ctx.da, self.ctx.bandwidth);
        out.push(("lp_rt.txt".to_string(), rt.dump()));
        out
    }

    fn summary_header(&self, s: &mut String, report: &Report) {
        let c = &report.case;
        let _ = writeln!(s, "scenario mode: {} ({})", report.mode, report.method);
        let _ = writeln!(
            s,
            "case {}: {} buses, {} lines, {} generators, load {:.1} MW",
            c.name, c.buses, c.lines, c.generators, c.total_load
        );
        let _ = writeln!(
            s,
            "day-ahead energy price {:.4} $/MWh, reference price {:.4} $/MWh, congested lines {:?}",
            c.da_energy_price, c.reference_price, c.da_congested_lines
        );
        let _ = writeln!(s, "seed {}", report.seed);
    }

    fn summary_outcome(&self, s: &mut String, report: &Report) {
        let _ = writeln!(s, "defense: {}", defense_label(&report.defense.measurements));
        for a in &report.attackers {
            let _ = writeln!(s, "  attacker {}: levels {:?}, U = {:.2} $", a.id, a.levels, a.utility);
        }
        let _ = writeln!(
            s,
            "U0 = {:.2} $, RMSD = {:.4} $/MWh ({:.2}%), congestion + {:?} - {:?}",
            report.u0, report.rmsd, report.relative_rmsd_percent, report.congestion.upper, report.congestion.lower
        );
    }

    fn summary_learning(&self, s: &mut String, report: &Report) {
        if let Some(l) = &report.learning {
            let _ = writeln!(
                s,
                "learning: {}/{} runs converged ({} rejected), mean {:.0} iterations",
                l.converged, l.runs, l.rejected, l.mean_iterations
            );
        }
    }

    fn summary_stackelberg(&self, report: &Report) -> String {
        let mut s = String::new();
        self.summary_header(&mut s, report);
        let _ = writeln!(s, "budget B0 = {}", self.scenario.budget);
        self.summary_outcome(&mut s, report);
        if let Some(e) = &report.equilibria {
            let _ = writeln!(s, "pure equilibria under the chosen defense: {}{}", e.psne_count, if e.no_psne { " (none; worst profile shown)" } else { "" });
        }
        self.summary_learning(&mut s, report);
        let _ = writeln!(s, "worst-case U0 by defense:");
        for e in &report.evaluations {
            let _ = writeln!(s, "  {:<24} {:>10.2}", defense_label(&e.defense), e.u0);
        }
        s
    }

    fn summary_satisfaction(&self, report: &Report) -> String {
        let mut s = String::new();
        self.summary_header(&mut s, report);
        let sat = report.satisfaction.as_ref().expect("set by caller");
        let _ = writeln!(
            s,
            "threshold r0 <= {:.6} ({} response), {}",
            sat.threshold_r0,
            sat.response,
            if sat.accepted { "satisfied" } else { "NOT satisfied; threshold must be raised" }
        );
        let _ = writeln!(s, "trials {} of {}", sat.trials, sat.max_trials);
        self.summary_outcome(&mut s, report);
        let _ = writeln!(
            s,
            "HE defense {} with U0 = {:.2} $, price of information {:.2} $",
            defense_label(&sat.he_defense),
            sat.he_u0,
            report.price_of_information.unwrap_or(0.0)
        );
        let _ = writeln!(
            s,
            "n0 = {} of {} actions, p0 = {:.4}, p0* = {:.4}, mu0 = {}, v0 = {}",
            sat.n0,
            sat.actions,
            sat.p0,
            sat.p0_star,
            sat.mu0.map_or("undefined".into(), |v| format!("{v:.3}")),
            sat.v0.map_or("undefined".into(), |v| format!("{v:.3}"))
        );
        self.summary_learning(&mut s, report);
        s
    }

    fn summary_solo(&self, report: &Report) -> String {
        let mut s = String::new();
        self.summary_header(&mut s, report);
        let _ = writeln!(s, "solo attacks (no defense, other attackers idle):");
        for r in &report.solo {
            let _ = writeln!(
                s,
                "  attacker {}: levels {:?}, U = {:.2} $, U0 = {:.2} $, RMSD {:.2}%",
                r.attacker, r.levels, r.utility, r.u0, r.relative_rmsd_percent
            );
        }
        let _ = writeln!(s, "payoff of attacker i (row) under attacker j's solo attack (column), $:");
        for row in &report.cross_effects {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>10.2}")).collect();
            let _ = writeln!(s, "  {}", cells.join(" "));
        }
        s
    }

    fn summary_single(&self, report: &Report) -> String {
        let mut s = String::new();
        self.summary_header(&mut s, report);
        self.summary_outcome(&mut s, report);
        if let Some(d) = &report.detection {
            let _ = writeln!(
                s,
                "residual norm {:.4} vs threshold {:.4}; detected {}; removed {:?}",
                d.residual_norm, d.threshold, d.detected, d.removed
            );
        }
        s
    }
}

/// One attacker alone, everyone else held at `base`.
struct SoloGame<'g, 'c> {
    game: &'g AttackGame<'c, f64>,
    base: Vec<usize>,
    player: usize,
}

impl Game<f64> for SoloGame<'_, '_> {
    fn num_players(&self) -> usize {
        1
    }

    fn num_actions(&self, _: usize) -> usize {
        self.game.num_actions(self.player)
    }

    fn payoff(&self, _: usize, profile: &[usize]) -> f64 {
        let mut p = self.base.clone();
        p[self.player] = profile[0];
        self.game.payoff(self.player, &p)
    }
}

pub fn measurement_name(model: &MeasurementModel<f64>, k: usize) -> String {
    let n = model.num_buses();
    if k < n {
        format!("bus:{}", k + 1)
    } else {
        format!("line:{}", k - n + 1)
    }
}

fn defense_label(names: &[String]) -> String {
    if names.is_empty() {
        "none".to_string()
    } else {
        names.join("+")
    }
}

fn congestion_report(c: &CongestionSets) -> CongestionReport {
    CongestionReport {
        upper: c.upper.iter().map(|l| l + 1).collect(),
        lower: c.lower.iter().map(|l| l + 1).collect(),
    }
}
