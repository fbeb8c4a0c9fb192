use screwsim_core::terrain::TerrainLibrary;
use screwsim_teleop::{ClampPolicy, GatewayConfig};

use crate::config::Context;
use crate::{CliError, Outcome, ServeArgs};

pub fn gateway_config(ctx: &Context, a: &ServeArgs) -> Result<GatewayConfig, CliError> {
    let d = &ctx.defaults;
    let terrain = TerrainLibrary::new(ctx.terrain_dir()).resolve(a.terrain.as_deref().unwrap_or(&d.serve.terrain))?;
    let limit = a.device_limit_deg.unwrap_or(d.serve.device_limit_deg).to_radians();
    let cfg = GatewayConfig {
        terrain,
        policy: ClampPolicy::symmetric(limit),
        bus: d.bus.model(),
        seed: a.seed.unwrap_or(d.seed),
        ..GatewayConfig::default()
    };
    cfg.policy
        .validate(cfg.geometry.joint_limit)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

pub fn serve(ctx: &Context, a: ServeArgs) -> Result<Outcome, CliError> {
    let cfg = gateway_config(ctx, &a)?;
    let addr = format!("{}:{}", a.bind, a.port.unwrap_or(ctx.defaults.serve.port));
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::io("<runtime>".as_ref(), e))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| CliError::io(addr.as_ref(), e))?;
        eprintln!(
            "teleop gateway on ws://{}/ws (observers: /observe, limits: /policy)",
            listener.local_addr().map_err(|e| CliError::io(addr.as_ref(), e))?
        );
        screwsim_teleop::server::serve(listener, cfg, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
        Ok(Outcome::Pass)
    })
}
