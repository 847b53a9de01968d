//! Command-line front end for the `qpf` library: TOML experiment configs,
//! figure recipes and CSV/JSON/SVG artifacts.
//!
//! Exit status: `0` success, `1` a computed finding failed (lemma
//! counterexample, inconclusive classification, solver failure), `2` a
//! usage or configuration error.

pub mod commands;
pub mod config;
pub mod svg;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use commands::{execute, Command, Outcome, RunError};
pub use config::{ConfigError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "qpf", version, about = "Experiments on quasiperiodically forced maps")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// TOML experiment file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set system.beta=0.97`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub iterates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Artifact file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub svg: bool,
    #[arg(long, value_parser = ["strict", "empirical"])]
    pub mode: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn quoted(s: &str) -> String {
    toml::Value::String(s.into()).to_string()
}

impl Cli {
    /// Flag overrides in the `section.key=value` form, applied after `--set`.
    pub fn flag_overrides(&self) -> Vec<String> {
        let mut out = self.overrides.clone();
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{k}={v}"));
            }
        };
        push("system.alpha", self.alpha.map(|x| format!("{x:?}")));
        push("system.beta", self.beta.map(|x| format!("{x:?}")));
        push("run.grid", self.grid.map(|x| x.to_string()));
        push("run.iterates", self.iterates.map(|x| x.to_string()));
        push("run.seed", self.seed.map(|x| x.to_string()));
        push("run.threads", self.threads.map(|x| x.to_string()));
        push("run.mode", self.mode.as_deref().map(quoted));
        push("output.dir", self.out.as_ref().map(|p| quoted(&p.to_string_lossy())));
        push("output.name", self.name.as_deref().map(quoted));
        if self.svg {
            out.push("run.svg=true".into());
        }
        out
    }

    pub fn load(&self) -> Result<ExperimentConfig, RunError> {
        let text = match &self.config {
            Some(p) => std::fs::read_to_string(p).map_err(|e| RunError::Usage(format!("{}: {e}", p.display())))?,
            None => String::new(),
        };
        ExperimentConfig::from_toml(&text, &self.flag_overrides()).map_err(|e| RunError::Usage(format!("config error at {e}")))
    }
}

/// Runs a command in a pool of `cfg.run.threads` workers (`0`: default pool).
pub fn run_config(cmd: Command, cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    if cfg.run.threads == 0 {
        return execute(cmd, cfg);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.threads)
        .build()
        .map_err(|e| RunError::Usage(format!("run.threads: {e}")))?;
    pool.install(|| execute(cmd, cfg))
}

/// Parses arguments, runs the command and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = cli.load().and_then(|cfg| run_config(cli.command, &cfg));
    match result {
        Ok(out) => {
            println!("{}", out.summary);
            for a in &out.artifacts {
                println!("wrote {}", a.display());
            }
            if out.ok {
                0
            } else {
                eprintln!("finding: a checked statement failed");
                1
            }
        }
        Err(e) => {
            eprintln!("qpf {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}
