//! `gridgame verify`: load a case and report what the solver sees.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use gridgame_core::grid::{build_measurement_model, build_shift_factors, load_case, GridCase};
use gridgame_core::market::solve_da_dcopf;

/// Summary text for a valid case; any validation or solver failure is an error.
pub fn verify(path: &Path) -> Result<String> {
    let case: GridCase<f64> = load_case(path).with_context(|| format!("loading case {}", path.display()))?;
    let x = build_shift_factors(&case).context("shift factors")?;
    let model = build_measurement_model(&case, 0.975).context("measurement model")?;
    let da = solve_da_dcopf(&case, &x).context("day-ahead market")?;

    let mut s = String::new();
    let _ = writeln!(s, "N = {} buses, L = {} lines, G = {} generators", case.num_buses(), case.num_lines(), case.num_generators());
    let _ = writeln!(s, "reference bus {}, sigma {} MW", case.reference_bus, case.sigma);
    let _ = writeln!(
        s,
        "observable: {} meters, {} states, {} degrees of freedom, detection threshold {:.4} MW",
        model.num_measurements(),
        model.num_states(),
        model.dof,
        model.threshold
    );
    let _ = writeln!(s, "total load {:.2} MW, day-ahead energy price {:.4} $/MWh", case.total_load(), da.energy_price);
    if da.congestion.is_empty() {
        let _ = writeln!(s, "day-ahead: no congested lines");
    } else {
        let _ = writeln!(
            s,
            "day-ahead congested lines: upper {:?}, lower {:?}",
            da.congestion.upper.iter().map(|l| l + 1).collect::<Vec<_>>(),
            da.congestion.lower.iter().map(|l| l + 1).collect::<Vec<_>>()
        );
    }
    Ok(s)
}
