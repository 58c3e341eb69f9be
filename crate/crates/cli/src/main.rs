//! `wasep`: run simulations and claim checks, writing CSV, JSON and plot scripts.
//!
//! Exit codes: 0 when every selected check passes, 1 when one fails, 2 for usage errors.

mod args;
mod output;
mod simulate;

use std::process::ExitCode;

use clap::Parser;
use wasep_core::experiments::{run_claims, RunOutcome};

use args::{prepare_out_dir, resolve, Cli, Command, Resolved, UsageError};

enum Failure {
    Usage(String),
    Run(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Self::Usage(e.0)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(command: &Command) -> Result<bool, Failure> {
    let mut r = resolve(command.common())?;
    if let Command::Simulate(_) = command {
        simulate::check(&r)?;
        prepare_out_dir(&r.out_dir)?;
        let tr = simulate::run(&r).map_err(|e| Failure::Run(e.to_string()))?;
        simulate::write(&r.out_dir, &tr).map_err(|e| Failure::Run(e.to_string()))?;
        println!("wrote {}", r.out_dir.join("snapshots.csv").display());
        return Ok(true);
    }
    if r.cfg.claims.is_empty() {
        r.cfg.claims = command.groups().iter().map(|g| g.name().to_string()).collect();
    }
    check_groups(&r)?;
    prepare_out_dir(&r.out_dir)?;
    let outcome = run_claims(&r.cfg).map_err(|e| Failure::Run(e.to_string()))?;
    output::write_outcome(&r.out_dir, command.name(), &outcome).map_err(|e| Failure::Run(e.to_string()))?;
    if let Command::Oracle(_) = command {
        print_z_scores(&outcome);
    }
    for rep in &outcome.reports {
        println!("{}", rep.summary_line());
        for note in rep.notes.iter().filter(|n| n.starts_with("FAILED")) {
            println!("    {note}");
        }
    }
    Ok(outcome.passed())
}

/// Settings of every selected group are checked before any work starts.
fn check_groups(r: &Resolved) -> Result<(), UsageError> {
    for g in r.cfg.selected_groups()? {
        g.settings(&r.cfg)?;
    }
    Ok(())
}

fn print_z_scores(outcome: &RunOutcome) {
    for t in outcome.tables.iter().filter(|t| t.name.starts_with("oracle")) {
        println!("{}", t.columns.join("\t"));
        for row in &t.rows {
            println!("{}", row.join("\t"));
        }
    }
}
