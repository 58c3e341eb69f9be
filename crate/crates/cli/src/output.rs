//! Files written into the output directory.

use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use wasep_core::experiments::{DataTable, RunOutcome};

/// Writes `name.csv` and the matching `plot_name.py`.
pub fn write_table(dir: &Path, table: &DataTable) -> io::Result<PathBuf> {
    let csv = dir.join(format!("{}.csv", table.name));
    std::fs::write(&csv, table.to_csv())?;
    std::fs::write(dir.join(format!("plot_{}.py", table.name)), plot_script(table))?;
    Ok(csv)
}

/// A standalone matplotlib script reading only the CSV next to it.
///
/// The first column splits the rows into series when it is `n`; the next numeric column is
/// the abscissa and every remaining numeric column gets its own panel.
pub fn plot_script(table: &DataTable) -> String {
    let name = &table.name;
    format!(
        r#"import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
SOURCE = os.path.join(HERE, "{name}.csv")


def numeric(rows, key):
    try:
        return [float(r[key]) for r in rows]
    except (TypeError, ValueError):
        return None


def main():
    with open(SOURCE, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        sys.exit("{name}.csv has no rows")
    cols = list(rows[0].keys())
    group = "n" if cols[0] == "n" else None
    rest = [c for c in cols if c != group and numeric(rows, c) is not None]
    if len(rest) < 2:
        rest = ["__index__"] + rest
        for i, r in enumerate(rows):
            r["__index__"] = i
    x, ys = rest[0], rest[1:]
    series = {{}}
    for r in rows:
        series.setdefault(r[group] if group else "", []).append(r)
    fig, axes = plt.subplots(len(ys), 1, figsize=(6, 3 * len(ys)), squeeze=False)
    for ax, y in zip(axes[:, 0], ys):
        for label, part in series.items():
            ax.plot(numeric(part, x), numeric(part, y), ".-", label=f"N = {{label}}" if label else None)
        ax.set_xlabel(x)
        ax.set_ylabel(y)
        if group:
            ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(HERE, "{name}.png"), dpi=120)


if __name__ == "__main__":
    main()
"#
    )
}

/// Writes the reports, their flat summary, the data tables and the metadata header.
pub fn write_outcome(dir: &Path, command: &str, outcome: &RunOutcome) -> io::Result<()> {
    let json = outcome.to_json().map_err(|e| io::Error::other(e.to_string()))?;
    std::fs::write(dir.join("claims.json"), json + "\n")?;
    std::fs::write(dir.join("claims.csv"), outcome.summary_table().to_csv())?;
    for t in &outcome.tables {
        write_table(dir, t)?;
    }
    let runtimes: Vec<(String, Duration)> =
        outcome.runtimes.iter().map(|(g, d)| (g.name().to_string(), *d)).collect();
    write_metadata(dir, command, &runtimes)
}

/// The only file that differs between identical runs: one line with the clock and wall times.
pub fn write_metadata(dir: &Path, command: &str, runtimes: &[(String, Duration)]) -> io::Result<()> {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_secs();
    let mut line = format!("# wasep {command} unix_time={now}");
    for (name, d) in runtimes {
        line.push_str(&format!(" {name}={:.3}s", d.as_secs_f64()));
    }
    line.push('\n');
    std::fs::write(dir.join("metadata.txt"), line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plot_script_references_only_its_csv() {
        let t = DataTable::new("kernel", &["n", "t", "c"]);
        let s = plot_script(&t);
        assert!(s.contains("\"kernel.csv\""));
        assert_eq!(s.matches(".csv").count(), 2);
    }
}
