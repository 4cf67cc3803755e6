use std::fs;

use crate::config::ScenarioConfig;
use crate::experiments::RunOutcome;
use crate::CliError;

/// Writes `report.json`, the CSV tables, the SVG plots, extra files and `summary.txt`.
pub fn write_outcome(cfg: &ScenarioConfig, outcome: &RunOutcome) -> Result<(), CliError> {
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("output_dir {} is not writable: {e}", dir.display())))?;
    let json = serde_json::to_string(&outcome.report).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(dir.join("report.json"), json + "\n")?;
    for (name, table) in &outcome.csvs {
        fs::write(dir.join(format!("{name}.csv")), table.to_string_lossy())?;
    }
    for (name, plot) in &outcome.plots {
        fs::write(dir.join(format!("{name}.svg")), plot.render())?;
    }
    for (name, text) in &outcome.files {
        fs::write(dir.join(name), text)?;
    }
    fs::write(dir.join("summary.txt"), &outcome.summary)?;
    Ok(())
}
