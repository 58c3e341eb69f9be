//! Flags, the flat config file, and their merge into an experiment configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use wasep_core::experiments::{ExperimentConfig, Group};

#[derive(Parser, Debug)]
#[command(name = "wasep", version, about = "Boundary-driven WASEP simulator and verification harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate trajectories and write snapshots and events as CSV.
    Simulate(Common),
    /// Empirical density against the Burgers solution.
    Hydro(Common),
    /// Gaussian fluctuation suite and quadratic variation.
    Fluct(Common),
    /// Heat-kernel and row-sum sweep.
    Kernel(Common),
    /// Exact pathwise identities and the remarkable identity.
    Identities(Common),
    /// Small-N comparison against the matrix exponential.
    Oracle(Common),
    /// The full claim registry, or the subset given by --only.
    Claims(Common),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Self::Simulate(c)
            | Self::Hydro(c)
            | Self::Fluct(c)
            | Self::Kernel(c)
            | Self::Identities(c)
            | Self::Oracle(c)
            | Self::Claims(c) => c,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate(_) => "simulate",
            Self::Hydro(_) => "hydro",
            Self::Fluct(_) => "fluct",
            Self::Kernel(_) => "kernel",
            Self::Identities(_) => "identities",
            Self::Oracle(_) => "oracle",
            Self::Claims(_) => "claims",
        }
    }

    /// Groups run by the subcommand when --only is absent; empty means the whole registry.
    pub fn groups(&self) -> &'static [Group] {
        match self {
            Self::Simulate(_) | Self::Claims(_) => &[],
            Self::Hydro(_) => &[Group::Hydrodynamics],
            Self::Fluct(_) => &[Group::Fluctuation],
            Self::Kernel(_) => &[Group::Kernel],
            Self::Identities(_) => &[Group::Identities, Group::Remarkable],
            Self::Oracle(_) => &[Group::Oracle],
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct Common {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lattice sizes, comma separated and ascending.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long = "e-field")]
    pub e_field: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub beta: Option<String>,
    /// `constant:c`, `linear` or `cosine`.
    #[arg(long)]
    pub profile: Option<String>,
    #[arg(long = "t-max", visible_alias = "t")]
    pub t_max: Option<String>,
    /// Observation times, comma separated.
    #[arg(long = "obs-times")]
    pub obs_times: Option<String>,
    #[arg(long)]
    pub replicas: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Claim ids or group names, comma separated.
    #[arg(long)]
    pub only: Option<String>,
    /// Per-claim tolerance override, `ID=VALUE`; repeatable.
    #[arg(long = "tolerance", value_name = "KEY=VAL")]
    pub tolerance: Vec<String>,
    /// Worker threads for the replica pool.
    #[arg(long)]
    pub workers: Option<String>,
}

/// Failure to assemble a valid invocation; maps to exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<wasep_core::Error> for UsageError {
    fn from(e: wasep_core::Error) -> Self {
        Self(e.to_string())
    }
}

/// Settings after merging the config file and the flags.
#[derive(Debug, Default)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
    /// Keys given explicitly, from either source.
    pub given: Vec<String>,
}

impl Resolved {
    pub fn has(&self, key: &str) -> bool {
        self.given.iter().any(|k| k == key)
    }
}

/// Parses the flat config format: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, UsageError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn canonical(key: &str) -> &str {
    match key {
        "ns" => "n",
        "t" => "t_max",
        "only" => "claims",
        k => k,
    }
}

pub fn resolve(common: &Common) -> Result<Resolved, UsageError> {
    let mut pairs = Vec::new();
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        pairs.extend(parse_config(&text)?);
    }
    let flags = [
        ("n", &common.n),
        ("e_field", &common.e_field),
        ("alpha", &common.alpha),
        ("beta", &common.beta),
        ("profile", &common.profile),
        ("t_max", &common.t_max),
        ("obs_times", &common.obs_times),
        ("replicas", &common.replicas),
        ("seed", &common.seed),
        ("claims", &common.only),
        ("workers", &common.workers),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            pairs.push((k.to_string(), v.clone()));
        }
    }
    for t in &common.tolerance {
        let (k, v) = t.split_once('=').ok_or_else(|| UsageError(format!("--tolerance expects KEY=VAL, got `{t}`")))?;
        let k = k.trim();
        let k = if k.starts_with("tolerances.") { k.to_string() } else { format!("tolerances.{k}") };
        pairs.push((k, v.to_string()));
    }

    let mut r = Resolved { out_dir: PathBuf::from("wasep-out"), ..Resolved::default() };
    for (k, v) in pairs {
        let key = canonical(&k).to_string();
        if key == "out_dir" {
            r.out_dir = PathBuf::from(v);
        } else {
            r.cfg.set(&key, &v)?;
        }
        if !r.given.contains(&key) {
            r.given.push(key);
        }
    }
    if let Some(out) = &common.out {
        r.out_dir = out.clone();
    }
    r.cfg.validate()?;
    Ok(r)
}

/// Creates the output directory and proves it is writable.
pub fn prepare_out_dir(dir: &Path) -> Result<(), UsageError> {
    let fail = |e: std::io::Error| UsageError(format!("output directory {} is not writable: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".wasep-write-probe");
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)?;
    Ok(())
}
