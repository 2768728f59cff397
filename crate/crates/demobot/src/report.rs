//! Report files: a commented table for people followed by TOML for programs.

use crate::config::Config;
use crate::error::{Error, Result};
use crate::harness::{CellResult, Comparison, EpisodeRecord, Profile, ResultTable, Scenario};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

/// The machine-readable part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub name: String,
    pub task: Scenario,
    pub profile: Profile,
    pub config_hash: String,
    #[serde(default)]
    pub cells: Vec<CellResult>,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
    pub config: Config,
}

pub fn render_report(table: &ResultTable, config: &Config) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# demobot report: {}", table.name);
    let _ = writeln!(
        out,
        "# task {}, profile {}, config {}",
        table.task, table.profile, table.config_hash
    );
    if !table.cells.is_empty() {
        let _ = writeln!(out, "#");
        let _ = writeln!(
            out,
            "# {:<10} {:>5} {:>8} {:>6} {:>16} {:>10} {:>9}",
            "policy", "demos", "success", "rate", "95% CI", "mean_steps", "fallback"
        );
        for c in &table.cells {
            let _ = writeln!(
                out,
                "# {:<10} {:>5} {:>8} {:>6.2} {:>16} {:>10.1} {:>9.3}",
                c.policy.name(),
                c.demos,
                format!("{}/{}", c.successes, c.episodes),
                c.rate(),
                format!("[{:.2}, {:.2}]", c.ci_low, c.ci_high),
                c.mean_steps,
                c.fallback_rate
            );
        }
        for cmp in &table.comparisons {
            let _ = writeln!(
                out,
                "# {} vs {} at {} demos: two-sided exact p = {:.4}",
                cmp.policy, cmp.control, cmp.demos, cmp.p_value
            );
        }
    }
    let report = Report {
        name: table.name.clone(),
        task: table.task,
        profile: table.profile,
        config_hash: table.config_hash.clone(),
        cells: table.cells.clone(),
        comparisons: table.comparisons.clone(),
        config: config.clone(),
    };
    out.push('\n');
    out.push_str(&toml::to_string(&report).expect("reports are representable as TOML"));
    out
}

pub fn emit_report(table: &ResultTable, config: &Config, path: &Path) -> Result<()> {
    std::fs::write(path, render_report(table, config)).map_err(|e| Error::io(path, e))
}

pub fn parse_report(text: &str) -> Result<Report> {
    toml::from_str(text).map_err(|e| Error::Config(format!("report: {e}")))
}

pub fn load_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_report(&text).map_err(|e| e.context(path.display().to_string()))
}

/// One JSON line per episode, in cell then episode order.
pub fn write_episode_log<W: Write>(episodes: &[EpisodeRecord], mut w: W) -> std::io::Result<()> {
    for e in episodes {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}
