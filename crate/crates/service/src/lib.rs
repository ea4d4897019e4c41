//! HTTP service for building tutors and training their agents remotely.
//!
//! State lives in a directory (see [`store`]); every accepted teacher message
//! is durably logged before the agent's reply is returned, and live logs left
//! by a crash are replayed on startup.

pub mod api;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{router, AppState};
pub use store::{Store, StoreError};

pub const DATA_DIR_ENV: &str = "ATB_DATA_DIR";
pub const BIND_ENV: &str = "ATB_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_DATA_DIR: &str = "atb-data";

#[derive(Clone, Debug)]
pub struct Config {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
}

impl Config {
    pub fn from_env() -> Result<Self, String> {
        let data_dir = std::env::var_os(DATA_DIR_ENV)
            .map_or_else(|| PathBuf::from(DEFAULT_DATA_DIR), PathBuf::from);
        let bind = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.to_owned());
        let bind = bind
            .parse()
            .map_err(|e| format!("{BIND_ENV}={bind}: {e}"))?;
        Ok(Config { data_dir, bind })
    }
}

/// Recovers the store, binds, prints `listening on <addr>` and serves until
/// the process exits.
pub async fn serve(config: Config) -> Result<(), Box<dyn std::error::Error>> {
    let store = Store::open(&config.data_dir)?;
    for session in store.recover()? {
        eprintln!("recovered session {session}");
    }
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    println!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(store))).await?;
    Ok(())
}
