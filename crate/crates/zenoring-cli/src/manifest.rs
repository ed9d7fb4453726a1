//! Run provenance record. This is the only produced file that carries
//! timestamps; the data files stay byte-stable across identical runs.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub overrides: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
    pub timestamp_unix_s: u64,
}

impl RunManifest {
    pub fn new(config_path: &Path, overrides: &[String]) -> std::io::Result<Self> {
        let bytes = std::fs::read(config_path)?;
        let digest = Sha256::digest(&bytes);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: std::env::args().collect::<Vec<_>>().join(" "),
            config_path: config_path.display().to_string(),
            config_sha256: hex,
            overrides: overrides.to_vec(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            timestamp_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn record(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(&self, out_dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out_dir.join("run_manifest.json"), json + "\n")
    }
}
