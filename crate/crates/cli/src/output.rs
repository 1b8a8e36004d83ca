use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lobsim_core::export::Meta;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{rt, CliError};

/// Where a run writes, and the provenance stamped on each file.
pub struct Output {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), hash: cfg.hash(), written: Vec::new() })
    }

    pub fn meta(&self, seed: Option<u64>) -> Meta {
        Meta::new(seed, self.hash.clone())
    }

    pub fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    /// CSV with the meta line and a header.
    pub fn csv<R: Serialize>(&mut self, name: &str, seed: Option<u64>, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<(), CliError> {
        let meta = self.meta(seed);
        let w = self.create(name)?;
        lobsim_core::export::write_csv(w, &meta, header, rows).map_err(rt)
    }

    /// Writes `<command>_summary.json` and returns its path.
    pub fn summary(&mut self, command: &str, cfg: &RunConfig, results: Value) -> Result<PathBuf, CliError> {
        let name = format!("{command}_summary.json");
        let files: Vec<String> = self.written.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
        let doc = json!({
            "command": command,
            "config_hash": self.hash,
            "config": cfg,
            "files": files,
            "results": results,
        });
        let mut w = self.create(&name)?;
        serde_json::to_writer_pretty(&mut w, &doc).map_err(rt)?;
        writeln!(w)?;
        w.flush()?;
        Ok(self.dir.join(name))
    }
}
