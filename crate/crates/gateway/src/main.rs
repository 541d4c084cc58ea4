use std::path::PathBuf;

use clap::Parser;
use tracing_subscriber::EnvFilter;

use objectlens_gateway::{build_state, router, GatewayConfig};

/// Data-protection gateway: serves policy-transformed views of stored
/// objects over HTTP.
#[derive(Parser, Debug)]
#[command(name = "olens-gateway", version)]
struct Args {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Listen address, e.g. 127.0.0.1:9870.
    #[arg(long)]
    listen: Option<String>,
    /// Filesystem backend root directory.
    #[arg(long)]
    backend_root: Option<PathBuf>,
    /// TOML file with a [tokens] table mapping bearer token to user.
    #[arg(long)]
    token_table: Option<PathBuf>,
    /// Compiled-policy cache capacity (0 disables).
    #[arg(long)]
    cache_capacity: Option<usize>,
    /// Exclusive upper bound on homomorphic plaintexts.
    #[arg(long)]
    plaintext_bound: Option<u64>,
    /// Metadata snapshot file (loaded on start, written on change).
    #[arg(long)]
    metadata: Option<PathBuf>,
}

fn effective_config(args: &Args) -> Result<GatewayConfig, String> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("reading {}: {e}", path.display()))?;
            GatewayConfig::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => GatewayConfig::default(),
    };
    if let Some(v) = &args.listen {
        config.listen = v.clone();
    }
    if let Some(v) = &args.backend_root {
        config.backend_root = v.clone();
    }
    if let Some(v) = &args.token_table {
        config.token_table = Some(v.clone());
    }
    if let Some(v) = args.cache_capacity {
        config.cache_capacity = v;
    }
    if let Some(v) = args.plaintext_bound {
        config.plaintext_bound = v;
    }
    if let Some(v) = &args.metadata {
        config.metadata_path = Some(v.clone());
    }
    Ok(config)
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();

    let args = Args::parse();
    let config = effective_config(&args)?;
    if config.token_table.is_none() {
        return Err("a token table is required; pass --token-table or set it in the config".into());
    }

    let state = build_state(&config)?;
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(
        listen = %listener.local_addr()?,
        backend = %config.backend_root.display(),
        "gateway up"
    );

    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            tracing::info!("shutting down");
        })
        .await?;
    Ok(())
}
