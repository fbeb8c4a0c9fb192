use std::io::Write;

use screwsim_core::sim::scenario::{run_scenario_with_library, ScenarioConfig};
use screwsim_core::terrain::TerrainLibrary;

use crate::config::Context;
use crate::{output, CliError, Outcome, RunArgs};

pub fn run(ctx: &Context, a: RunArgs) -> Result<Outcome, CliError> {
    let cfg = ScenarioConfig::load(&a.scenario)?;
    let run = run_scenario_with_library(&cfg, &TerrainLibrary::new(ctx.terrain_dir()))?;
    if let Some(path) = &a.out {
        run.log.write_csv(run.geometry.n_segments, output(Some(path))?)?;
    }
    let summary = run.summary.to_toml_string()?;
    let mut out = output(a.summary.as_deref())?;
    out.write_all(summary.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(a.summary.as_deref().unwrap_or("<stdout>".as_ref()), e))?;
    Ok(Outcome::Pass)
}
