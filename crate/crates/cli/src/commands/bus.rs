use std::io::Write;

use screwsim_core::bus::{BusModel, PidGains, VirtualBus};

use crate::config::Context;
use crate::{output, BusAnalyzeArgs, CliError, Outcome};

pub fn analyze(ctx: &Context, a: BusAnalyzeArgs) -> Result<Outcome, CliError> {
    let d = &ctx.defaults.bus;
    let model = BusModel {
        base_rtt: a.base_rtt.unwrap_or(d.base_rtt),
        per_hop: a.per_hop.unwrap_or(d.per_hop),
        loop_rate: a.rate.unwrap_or(d.loop_rate),
        jitter_sd: a.jitter_sd.unwrap_or(d.jitter_sd),
    };
    model.validate()?;
    let max_n = a.max_n.unwrap_or(d.max_n);
    if max_n == 0 {
        return Err(CliError::Usage("--max-n must be >= 1".into()));
    }
    let report = model.schedule(max_n).to_toml_string()?;
    let mut out = output(a.out.as_deref())?;
    out.write_all(report.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(a.out.as_deref().unwrap_or("<stdout>".as_ref()), e))?;

    if let Some(path) = &a.trace {
        if !(a.duration_ms > 0.0 && a.duration_ms.is_finite()) {
            return Err(CliError::Usage("--duration-ms must be positive".into()));
        }
        let bus = trace_run(model, a.segments, a.duration_ms, a.seed.unwrap_or(ctx.defaults.seed))?;
        bus.write_trace_csv(output(Some(path))?)?;
    }
    Ok(Outcome::Pass)
}

/// Drives a chain with a slow yaw sweep, one broadcast per loop period.
pub fn trace_run(model: BusModel, segments: usize, duration_ms: f64, seed: u64) -> Result<VirtualBus, CliError> {
    let mut bus = VirtualBus::new(model, segments, PidGains::default(), seed)?;
    let period = model.period();
    let screws = vec![1.0; segments];
    let mut k = 0u64;
    while (k as f64) * period < duration_ms {
        let yaw = 0.5 * (k as f64 * period / 1000.0).sin();
        bus.broadcast(&vec![yaw; segments - 1], &screws)?;
        bus.tick(period)?;
        k += 1;
    }
    Ok(bus)
}
