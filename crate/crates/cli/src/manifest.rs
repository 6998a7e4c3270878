use serde::Serialize;

/// Everything needed to replay a run. Only `started_unix` differs between
/// two runs with the same arguments.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<P: Serialize> {
    pub subcommand: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub threads: Option<usize>,
    pub started_unix: u64,
    pub params: P,
}

impl<P: Serialize> RunManifest<P> {
    pub fn new(subcommand: &'static str, seed: u64, threads: Option<usize>, params: P) -> Self {
        let started_unix = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            subcommand,
            version: env!("CARGO_PKG_VERSION"),
            seed,
            threads,
            started_unix,
            params,
        }
    }
}
