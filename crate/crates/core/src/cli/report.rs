//! JSON and CSV report files.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dimtest::{SequentialReport, TestReport};
use crate::error::{Error, Result};
use crate::kron::RssSummary;
use crate::simulate::McResult;

/// Artifact name written into every JSON report.
pub const ARTIFACT: &str = "covdim";

/// Asymptotic power at one grid value, averaged over scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub w: f64,
    pub gamma: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub alpha: f64,
    pub scenarios_per_point: usize,
    pub points: Vec<PowerPoint>,
}

/// Result of any command.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Report {
    Test(TestReport),
    Seq(SequentialReport),
    Simulate(McResult),
    Power(PowerCurve),
    Kron(RssSummary),
}

#[derive(Serialize)]
struct Envelope<'a> {
    artifact: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    report: &'a Report,
}

/// Writes `<stem>.json` (envelope with version, resolved config and seed)
/// and `<stem>.csv`. Neither file carries a timestamp, so identical runs
/// produce identical bytes.
pub fn emit_report(report: &Report, cfg: &RunConfig, stem: &str) -> Result<()> {
    let json_path = PathBuf::from(format!("{stem}.json"));
    let csv_path = PathBuf::from(format!("{stem}.csv"));
    let envelope = Envelope {
        artifact: ARTIFACT,
        version: env!("CARGO_PKG_VERSION"),
        command: cfg.command.name(),
        seed: cfg.seed,
        config: cfg,
        report,
    };
    let mut text = serde_json::to_string_pretty(&envelope)
        .map_err(|e| Error::Data(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    std::fs::write(&csv_path, csv_table(report)?).map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

fn csv_table(report: &Report) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut put = |fields: Vec<String>| w.write_record(&fields);
    let test_header = |first: &str| -> Vec<String> {
        [first, "statistic", "p_value", "reject", "m_hat_d0", "m_hat_d0p1", "beta_hat", "sigma_hat", "alpha", "q", "p"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    };
    let test_row = |d: usize, t: &TestReport| -> Vec<String> {
        vec![
            d.to_string(),
            t.statistic.to_string(),
            t.p_value.to_string(),
            t.reject.to_string(),
            t.m_hat_d0.to_string(),
            t.m_hat_d0p1.to_string(),
            t.beta_hat.to_string(),
            t.sigma_hat.to_string(),
            t.alpha.to_string(),
            t.q.to_string(),
            t.p.to_string(),
        ]
    };
    let res = (|| -> csv::Result<()> {
        match report {
            Report::Test(t) => {
                put(test_header("d0"))?;
                put(test_row(t.d0, t))?;
            }
            Report::Seq(s) => {
                put(test_header("d"))?;
                for step in &s.per_d {
                    put(test_row(step.d, &step.report))?;
                }
            }
            Report::Simulate(m) => {
                put(strings(&["w", "empirical_rate", "theoretical", "reps", "excluded"]))?;
                for k in 0..m.w_grid.len() {
                    put(vec![
                        m.w_grid[k].to_string(),
                        m.rejection_rate[k].to_string(),
                        m.theoretical[k].to_string(),
                        m.reps.to_string(),
                        m.excluded[k].to_string(),
                    ])?;
                }
            }
            Report::Power(c) => {
                put(strings(&["w", "gamma", "power"]))?;
                for pt in &c.points {
                    put(vec![pt.w.to_string(), pt.gamma.to_string(), pt.power.to_string()])?;
                }
            }
            Report::Kron(k) => {
                let mut header = vec!["split".to_string()];
                header.extend(k.ranks.iter().map(|d| format!("rss_{d}")));
                put(header)?;
                for s in 0..k.splits {
                    let mut row = vec![s.to_string()];
                    row.extend(k.rss_by_rank.iter().map(|r| r[s].to_string()));
                    put(row)?;
                }
            }
        }
        Ok(())
    })();
    res.map_err(|e| Error::Data(format!("cannot format CSV: {e}")))?;
    w.into_inner()
        .map_err(|e| Error::Data(format!("cannot format CSV: {e}")))
}

fn strings(s: &[&str]) -> Vec<String> {
    s.iter().map(|x| x.to_string()).collect()
}
