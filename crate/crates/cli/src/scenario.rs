//! Scenario files: which case to load, who attacks, what the defender may do
//! and which experiment to run.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gridgame_core::attack::{AttackerConfig, MeasurementRef};
use gridgame_core::equilibrium::Threshold;
use gridgame_core::grid::MeasurementModel;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Stackelberg,
    Satisfaction,
    SoloAttacks,
    SingleRun,
}

impl Mode {
    pub fn tag(self) -> &'static str {
        match self {
            Mode::Stackelberg => "stackelberg",
            Mode::Satisfaction => "satisfaction",
            Mode::SoloAttacks => "solo-attacks",
            Mode::SingleRun => "single-run",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Case file, relative to the scenario file.
    pub case: PathBuf,
    pub mode: Mode,
    pub attackers: Vec<AttackerConfig>,
    #[serde(default)]
    pub budget: usize,
    #[serde(default)]
    pub kappa0: f64,
    /// Measurements the defender may protect; defaults to every attackable one.
    #[serde(default)]
    pub vulnerable: Option<Vec<MeasurementRef>>,
    #[serde(default)]
    pub seed: u64,
    /// Draw seeded measurement noise instead of using exact measurements.
    #[serde(default)]
    pub noise: bool,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub learning: LearningSettings,
    #[serde(default)]
    pub satisfaction: Option<SatisfactionSettings>,
    #[serde(default)]
    pub single_run: Option<SingleRun>,
}

fn default_confidence() -> f64 {
    0.975
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSettings {
    pub step: f64,
    pub max_iterations: usize,
    pub eta: f64,
    /// Independent automata runs used to cross-check the enumerated equilibria.
    pub restarts: usize,
    pub trace_every: usize,
}

impl Default for LearningSettings {
    fn default() -> Self {
        Self {
            step: 0.02,
            max_iterations: 200_000,
            eta: 1e-3,
            restarts: 20,
            trace_every: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Response {
    /// Worst-case pure equilibrium found by enumeration.
    #[default]
    WorstCase,
    /// Modal profile of one learning-automata run.
    Learning,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    /// Bound on `r₀`, $²/MWh².
    Absolute(f64),
    /// RMSD as a percentage of the load-weighted mean day-ahead price.
    RelativeRmsd(f64),
}

impl From<ThresholdSpec> for Threshold {
    fn from(t: ThresholdSpec) -> Self {
        match t {
            ThresholdSpec::Absolute(v) => Threshold::Absolute(v),
            ThresholdSpec::RelativeRmsd(p) => Threshold::RelativeRmsd { percent: p },
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatisfactionSettings {
    pub threshold: ThresholdSpec,
    #[serde(default)]
    pub max_trials: Option<usize>,
    #[serde(default)]
    pub with_replacement: bool,
    #[serde(default)]
    pub response: Response,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingleRun {
    #[serde(default)]
    pub defense: Vec<MeasurementRef>,
    /// Attack level per attackable meter, one list per attacker.
    pub profile: Vec<Vec<f64>>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading scenario {}", path.display()))?;
        let scenario: Scenario =
            serde_json::from_str(&text).with_context(|| format!("parsing scenario {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let case = base.join(&scenario.case);
        scenario.check()?;
        Ok((scenario, case))
    }

    fn check(&self) -> Result<()> {
        if self.attackers.is_empty() {
            bail!("attackers: at least one attacker is required");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            bail!("confidence: must lie in (0, 1), got {}", self.confidence);
        }
        if self.kappa0 < 0.0 {
            bail!("kappa0: must be nonnegative");
        }
        let l = &self.learning;
        if !(l.step > 0.0 && l.step < 1.0) {
            bail!("learning.step: must lie in (0, 1)");
        }
        if !(l.eta > 0.0 && l.eta < 1.0) {
            bail!("learning.eta: must lie in (0, 1)");
        }
        match self.mode {
            Mode::Satisfaction => {
                let Some(s) = &self.satisfaction else {
                    bail!("satisfaction: required in satisfaction mode");
                };
                if self.budget == 0 {
                    bail!("budget: satisfaction mode needs a budget of at least 1");
                }
                if s.max_trials == Some(0) {
                    bail!("satisfaction.max_trials: must be at least 1");
                }
            }
            Mode::SingleRun => {
                let Some(r) = &self.single_run else {
                    bail!("single_run: required in single-run mode");
                };
                if r.profile.len() != self.attackers.len() {
                    bail!(
                        "single_run.profile: {} entries for {} attackers",
                        r.profile.len(),
                        self.attackers.len()
                    );
                }
            }
            Mode::Stackelberg | Mode::SoloAttacks => {}
        }
        Ok(())
    }

    /// Vulnerable measurement indices, sorted.
    pub fn vulnerable_indices(&self, model: &MeasurementModel<f64>, attackable: &[usize]) -> Result<Vec<usize>> {
        let mut v = match &self.vulnerable {
            Some(list) => list
                .iter()
                .map(|r| r.resolve(model))
                .collect::<gridgame_core::Result<Vec<_>>>()
                .context("vulnerable")?,
            None => attackable.to_vec(),
        };
        v.sort_unstable();
        v.dedup();
        Ok(v)
    }
}
