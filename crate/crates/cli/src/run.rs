//! Output directory bookkeeping: `run.toml` records the command, arguments,
//! resolved config and a hash of every output file; `run.log` holds the
//! wall-clock details that would otherwise break byte-identical reruns.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use pivot_core::rng::fnv64;
use serde::Serialize;
use toml::{Table, Value};

use crate::config::RunConfig;

pub const MANIFEST: &str = "run.toml";
pub const LOG: &str = "run.log";

pub struct Run {
    pub out: PathBuf,
    command: &'static str,
    args: Table,
    config: Option<RunConfig>,
    started: SystemTime,
    clock: Instant,
    log: Vec<String>,
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    bytes: u64,
    fnv64: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: String,
    command: &'a str,
    args: &'a Table,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a RunConfig>,
    outputs: Vec<OutputEntry>,
}

impl Run {
    /// Creates `out`, which must not exist or be empty.
    pub fn start(out: &Path, command: &'static str, args: &impl Serialize) -> Result<Self> {
        if out.exists() {
            let mut entries = fs::read_dir(out).with_context(|| format!("reading {}", out.display()))?;
            if entries.next().is_some() {
                bail!(
                    "output directory {} is not empty; choose another --out or remove it",
                    out.display()
                );
            }
        }
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let args = match Value::try_from(args).context("encoding arguments")? {
            Value::Table(t) => t,
            _ => Table::new(),
        };
        Ok(Run {
            out: out.to_path_buf(),
            command,
            args,
            config: None,
            started: SystemTime::now(),
            clock: Instant::now(),
            log: Vec::new(),
        })
    }

    pub fn with_config(mut self, cfg: &RunConfig) -> Self {
        self.config = Some(cfg.clone());
        self
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Prints a line and keeps it for the log.
    pub fn say(&mut self, line: impl Into<String>) {
        let line = line.into();
        println!("{line}");
        self.log.push(line);
    }

    pub fn warn(&mut self, line: impl Into<String>) {
        let line = line.into();
        eprintln!("warning: {line}");
        self.log.push(format!("warning: {line}"));
    }

    pub fn finish(self, jobs: usize) -> Result<()> {
        let mut outputs = Vec::new();
        for rel in list_files(&self.out)? {
            if rel == MANIFEST || rel == LOG {
                continue;
            }
            let bytes = fs::read(self.out.join(&rel)).with_context(|| format!("reading {rel}"))?;
            outputs.push(OutputEntry {
                path: rel,
                bytes: bytes.len() as u64,
                fnv64: format!("{:016x}", fnv64(&bytes)),
            });
        }
        let manifest = Manifest {
            tool: format!("pivot {}", env!("CARGO_PKG_VERSION")),
            command: self.command,
            args: &self.args,
            config: self.config.as_ref(),
            outputs,
        };
        let text = toml::to_string(&manifest).context("encoding run manifest")?;
        fs::write(self.out.join(MANIFEST), text).context("writing run manifest")?;

        let since = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let mut log = format!(
            "command = {}\nargv = {:?}\njobs = {}\nstarted_unix = {}\nelapsed_s = {:.3}\n\n",
            self.command,
            std::env::args().collect::<Vec<_>>(),
            jobs,
            since(self.started),
            self.clock.elapsed().as_secs_f64()
        );
        for l in &self.log {
            log.push_str(l);
            log.push('\n');
        }
        fs::write(self.out.join(LOG), log).context("writing run log")?;
        Ok(())
    }
}

/// Relative paths of every file under `root`, sorted, `/`-separated.
pub fn list_files(root: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    let mut stack = vec![PathBuf::new()];
    while let Some(rel) = stack.pop() {
        let dir = root.join(&rel);
        for entry in fs::read_dir(&dir).with_context(|| format!("reading {}", dir.display()))? {
            let entry = entry?;
            let child = rel.join(entry.file_name());
            if entry.file_type()?.is_dir() {
                stack.push(child);
            } else {
                let parts: Vec<String> = child.iter().map(|p| p.to_string_lossy().into_owned()).collect();
                out.push(parts.join("/"));
            }
        }
    }
    out.sort();
    Ok(out)
}
