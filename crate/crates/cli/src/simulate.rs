//! Raw trajectory export.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use wasep_core::experiments::{derive_seed, fmt_num, run_replicas};
use wasep_core::process::{sample_initial, simulate_trajectory, EventLog, Snapshots};
use wasep_core::{Engine, Params, Profile, ReplicaStream};

use crate::args::{Resolved, UsageError};
use crate::output::write_metadata;

/// Keys simulate will not default.
const REQUIRED: [&str; 5] = ["n", "e_field", "alpha", "beta", "t_max"];

fn missing(r: &Resolved) -> Vec<&'static str> {
    REQUIRED.iter().copied().filter(|k| !r.has(k)).collect()
}

/// Checked before touching the output directory.
pub fn check(r: &Resolved) -> Result<(), UsageError> {
    let m = missing(r);
    if m.is_empty() {
        Ok(())
    } else {
        Err(UsageError(format!("simulate needs {} (flags or config file)", m.join(", "))))
    }
}

pub struct Trajectories {
    pub snapshots: String,
    pub events: String,
    pub runtime: Duration,
}

/// Runs the replicas and renders the CSV bodies.
pub fn run(r: &Resolved) -> wasep_core::Result<Trajectories> {
    let cfg = &r.cfg;
    let start = Instant::now();
    let (e, a, b, t) = (
        cfg.e_field.expect("checked"),
        cfg.alpha.expect("checked"),
        cfg.beta.expect("checked"),
        cfg.t_max.expect("checked"),
    );
    let profile = Profile::parse(cfg.profile.as_deref().unwrap_or("linear"), a, b)?;
    let obs = match &cfg.obs_times {
        Some(v) if !v.is_empty() => v.clone(),
        _ => (1..=10).map(|i| t * f64::from(i) / 10.0).collect(),
    };
    let replicas = cfg.replicas.unwrap_or(1);
    let mut snapshots = String::from("n,replica,time,site,eta,current\n");
    let mut events = String::from("n,replica,time,bond,direction\n");
    for &n in cfg.ns.as_deref().expect("checked") {
        let params = Params::new(n, e, a, b)?;
        let seed = derive_seed(cfg.seed, "simulate", n as u64);
        let per = run_replicas(replicas, cfg.workers, |rep| {
            let mut stream = ReplicaStream::new(seed, rep);
            let init = sample_initial(&profile, &params, &mut stream)?;
            let mut obs_state = (Snapshots::default(), EventLog::default());
            simulate_trajectory(&params, &init, t, &obs, Engine::Auto, &mut stream, &mut obs_state)?;
            Ok(obs_state)
        })?;
        for (rep, (snaps, log)) in per.iter().enumerate() {
            for ((time, config), ledger) in obs.iter().zip(&snaps.configs).zip(&snaps.ledgers) {
                for j in 0..n {
                    let eta = if j == 0 { String::new() } else { config.get(j).to_string() };
                    let _ = writeln!(snapshots, "{n},{rep},{},{j},{eta},{}", fmt_num(*time), ledger.get(j));
                }
            }
            for ev in &log.events {
                let _ = writeln!(events, "{n},{rep},{},{},{}", fmt_num(ev.time), ev.bond, ev.direction);
            }
        }
    }
    Ok(Trajectories { snapshots, events, runtime: start.elapsed() })
}

pub fn write(dir: &Path, tr: &Trajectories) -> std::io::Result<()> {
    std::fs::write(dir.join("snapshots.csv"), &tr.snapshots)?;
    std::fs::write(dir.join("events.csv"), &tr.events)?;
    write_metadata(dir, "simulate", &[("simulate".to_string(), tr.runtime)])
}
