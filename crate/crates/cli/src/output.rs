//! Output files with provenance: every CSV carries `#` metadata lines and
//! every JSON file a `meta` object naming the config hash and versions.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

pub struct Outputs {
    dir: PathBuf,
    command: &'static str,
    hash: String,
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    config_sha256: &'a str,
    isolab_cli: &'static str,
    isolab_core: &'static str,
}

#[derive(Serialize)]
struct Tagged<'a, T> {
    meta: Meta<'a>,
    result: &'a T,
}

impl Outputs {
    /// Creates the output directory and records the resolved config in it.
    pub fn open(cfg: &RunConfig, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out_dir)?;
        let out = Self {
            dir: cfg.out_dir.clone(),
            command,
            hash: cfg.hash(),
        };
        fs::write(out.path(&format!("{command}.config.toml")), cfg.to_toml())?;
        Ok(out)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn meta_lines(&self) -> Vec<String> {
        vec![
            format!("isolab-cli {} isolab-core {}", env!("CARGO_PKG_VERSION"), isolab::VERSION),
            format!("command {}", self.command),
            format!("config_sha256 {}", self.hash),
        ]
    }

    /// Writes a CSV through `emit`, which receives the writer and the metadata.
    pub fn csv(
        &self,
        name: &str,
        emit: impl FnOnce(&mut BufWriter<File>, &[String]) -> isolab::Result<()>,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        emit(&mut w, &self.meta_lines())?;
        w.flush()?;
        Ok(path)
    }

    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, CliError> {
        let tagged = Tagged {
            meta: Meta {
                command: self.command,
                config_sha256: &self.hash,
                isolab_cli: env!("CARGO_PKG_VERSION"),
                isolab_core: isolab::VERSION,
            },
            result: body,
        };
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(&tagged).map_err(|e| CliError::Config(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

pub fn announce(path: &Path) {
    println!("wrote {}", path.display());
}
