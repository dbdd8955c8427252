//! Serialized run artifacts.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub mode: &'static str,
    /// enumeration | automata | satisfaction | satisfaction-failure | pipeline
    pub method: &'static str,
    pub seed: u64,
    pub case: CaseSummary,
    pub defense: DefenseReport,
    pub attackers: Vec<AttackerReport>,
    /// Defender loss `P_L·RMSD + c₀`, $.
    pub u0: f64,
    /// $/MWh.
    pub rmsd: f64,
    pub relative_rmsd_percent: f64,
    pub r0: f64,
    pub congestion: CongestionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibria: Option<EquilibriumSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub evaluations: Vec<EvaluationRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning: Option<LearningReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfaction: Option<SatisfactionReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub price_of_information: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub solo: Vec<SoloReport>,
    /// `cross_effects[i][j]`: ζᵢ·Pᵢ when attacker j's solo attack lands, $.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cross_effects: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<DetectionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseSummary {
    pub name: String,
    pub buses: usize,
    pub lines: usize,
    pub generators: usize,
    pub total_load: f64,
    pub da_energy_price: f64,
    /// Load-weighted mean day-ahead LMP, the base of relative RMSD.
    pub reference_price: f64,
    pub da_congested_lines: Vec<usize>,
    pub detection_threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DefenseReport {
    pub indices: Vec<usize>,
    pub measurements: Vec<String>,
    pub budget: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackerReport {
    pub id: usize,
    pub measurements: Vec<String>,
    pub levels: Vec<f64>,
    pub action: Option<usize>,
    /// `U_m`, $.
    pub utility: f64,
    /// ζ_m, $/MWh.
    pub zeta: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct CongestionReport {
    /// 1-based lines congested along their reference direction.
    pub upper: Vec<usize>,
    pub lower: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSummary {
    pub psne_count: usize,
    /// No pure equilibrium exists; the report shows the worst profile overall.
    pub no_psne: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationRow {
    pub defense: Vec<String>,
    pub psne_count: usize,
    pub no_psne: bool,
    pub u0: f64,
    pub rmsd: f64,
    pub r0: f64,
    pub profile: Vec<Vec<f64>>,
    pub congestion: CongestionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearningReport {
    pub runs: usize,
    pub converged: usize,
    /// Absorbed on a profile that failed the equilibrium check.
    pub rejected: usize,
    pub mean_iterations: f64,
    /// Distinct converged profiles with how often each was reached.
    pub profiles: Vec<LearnedProfile>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LearnedProfile {
    pub levels: Vec<Vec<f64>>,
    pub count: usize,
    pub u0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SatisfactionReport {
    pub response: &'static str,
    pub threshold_r0: f64,
    pub accepted: bool,
    pub trials: usize,
    pub max_trials: usize,
    pub with_replacement: bool,
    pub best_r0: f64,
    /// Defenses tried, in order, with r₀ at the attackers' response.
    pub history: Vec<(Vec<String>, f64)>,
    /// Satisfying actions among all size-B₀ defenses.
    pub n0: usize,
    pub actions: usize,
    pub p0: f64,
    pub p0_star: f64,
    pub mu0: Option<f64>,
    pub v0: Option<f64>,
    pub he_defense: Vec<String>,
    pub he_u0: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SoloReport {
    pub attacker: usize,
    pub levels: Vec<f64>,
    pub utility: f64,
    pub u0: f64,
    pub rmsd: f64,
    pub relative_rmsd_percent: f64,
    pub congestion: CongestionReport,
    /// Action reached by a one-player learning run, if it converged.
    pub learned_levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectionReport {
    pub residual_norm: f64,
    pub threshold: f64,
    pub detected: bool,
    pub removed: Vec<String>,
    pub observability_limited: bool,
    pub discarded: bool,
}
