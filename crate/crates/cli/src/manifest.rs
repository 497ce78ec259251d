//! Run manifest appended to `<out-dir>/run_manifest.txt`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use evdenoise::harness::RunConfig;
use evdenoise::Result;

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.to_text().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn append(out_dir: &Path, command: &str, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(out_dir.join("run_manifest.txt"))?;
    writeln!(f, "[run]")?;
    writeln!(f, "command = {command}")?;
    writeln!(f, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(f, "config_sha256 = {}", config_hash(cfg))?;
    writeln!(f, "seed = {}", cfg.seed)?;
    for o in outputs {
        writeln!(f, "output = {}", o.display())?;
    }
    writeln!(f)?;
    Ok(())
}
