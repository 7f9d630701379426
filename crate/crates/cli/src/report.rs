//! Report and summary documents. Field order is the serialized key order.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Serialize;
use shasmc::casestudy::CaseStudyConfig;
use shasmc::query::{render_table, CheckConfig, SmcResult};
use shasmc::sim::{SimConfig, Termination};

use crate::{CheckArgs, ModelArgs, SimulateArgs};

#[derive(Serialize)]
pub struct CheckEcho {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_study: Option<CaseStudyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 4]>,
    pub queries: Vec<String>,
    pub check: CheckConfig,
    pub allow_falsified: bool,
    /// Arguments that reproduce this report.
    pub args: Vec<String>,
}

#[derive(Serialize)]
#[serde(untagged)]
pub enum Row<'a> {
    Done {
        index: usize,
        #[serde(flatten)]
        result: &'a SmcResult,
        #[serde(skip_serializing_if = "Option::is_none")]
        evidence_file: Option<String>,
    },
    Failed {
        index: usize,
        query: &'a str,
        error: String,
    },
}

#[derive(Serialize)]
pub struct RunReport<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: CheckEcho,
    pub results: Vec<Row<'a>>,
}

#[derive(Serialize)]
pub struct Timings {
    pub prepare_ms: f64,
    pub evaluate_ms: f64,
    pub total_ms: f64,
}

impl RunReport<'_> {
    pub fn table(&self) -> String {
        let rows: Vec<(String, String)> = self
            .results
            .iter()
            .map(|r| match r {
                Row::Done { result, .. } => (result.query.clone(), result.verdict.to_string()),
                Row::Failed { query, error, .. } => (query.to_string(), format!("error: {error}")),
            })
            .collect();
        render_table(&rows)
    }

    pub fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = ["index", "query", "result", "estimate", "ci_lo", "ci_hi", "runs_used", "runs_flagged", "evidence_trial", "evidence_time"];
        w.write_record(header).expect("in-memory csv");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.results {
            let rec = match r {
                Row::Done { index, result, .. } => vec![
                    index.to_string(),
                    result.query.clone(),
                    result.verdict.to_string(),
                    opt(result.estimate.map(|e| e.mean.to_string())),
                    opt(result.ci.map(|c| c.lo.to_string())),
                    opt(result.ci.map(|c| c.hi.to_string())),
                    result.runs_used.to_string(),
                    result.runs_flagged.to_string(),
                    opt(result.evidence.as_ref().map(|e| e.trial.to_string())),
                    opt(result.evidence.as_ref().map(|e| e.time.to_string())),
                ],
                Row::Failed { index, query, error } => {
                    let mut v = vec![index.to_string(), query.to_string(), format!("error: {error}")];
                    v.resize(header.len(), String::new());
                    v
                }
            };
            w.write_record(&rec).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }
}

#[derive(Serialize)]
pub struct SimulateEcho {
    pub model: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_file: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub case_study: Option<CaseStudyConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<[f64; 4]>,
    pub sim: SimConfig,
    pub runs: u64,
    pub monitors: Vec<String>,
    pub args: Vec<String>,
}

#[derive(Serialize)]
pub struct TrialSummary {
    pub trial: u64,
    pub file: String,
    pub terminated_by: Termination,
    pub final_time: f64,
    pub steps: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<u64>,
    /// `goIdle` after each completed arrival batch.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub go_idle_history: Option<Vec<u8>>,
    pub final_values: BTreeMap<String, f64>,
}

#[derive(Serialize)]
pub struct SimulateSummary {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: SimulateEcho,
    pub runs: Vec<TrialSummary>,
}

fn model_args(m: &ModelArgs, out: &mut Vec<String>) {
    out.extend(["--model".into(), m.model.clone()]);
    if let Some(c) = &m.config {
        out.extend(["--config".into(), c.display().to_string()]);
    }
    if let Some(t) = m.thresholds {
        let t = t.values().map(|v| v.to_string());
        out.extend(["--thresholds".into(), t.join(",")]);
    }
}

/// Canonical argument list of a check run with its seed resolved. Queries
/// from files are inlined so the list does not depend on the files.
pub fn check_args(a: &CheckArgs, seed: u64) -> Vec<String> {
    let mut v = vec!["check".to_string()];
    model_args(&a.model, &mut v);
    v.extend(["--seed".into(), seed.to_string(), "--horizon".into(), a.horizon.to_string()]);
    if let Some(n) = a.runs {
        v.extend(["--runs".into(), n.to_string()]);
    }
    v.extend([
        "--monitored-runs".into(),
        a.monitored_runs.to_string(),
        "--epsilon".into(),
        a.epsilon.to_string(),
        "--alpha".into(),
        a.alpha.to_string(),
        "--confidence".into(),
        a.confidence.to_string(),
    ]);
    if let Some(g) = a.grace {
        v.extend(["--grace".into(), g.to_string()]);
    }
    for (on, flag) in [
        (a.vacuous_pending, "--vacuous-pending"),
        (a.no_evidence, "--no-evidence"),
        (a.sequential, "--sequential"),
        (a.allow_falsified, "--allow-falsified"),
    ] {
        if on {
            v.push(flag.into());
        }
    }
    v.extend(["--format".into(), a.format.name().into()]);
    v
}

/// Appends the evaluated queries to a check argument list.
pub fn with_queries(mut args: Vec<String>, queries: &[String]) -> Vec<String> {
    for q in queries {
        args.extend(["--query".into(), q.clone()]);
    }
    args
}

pub fn simulate_args(a: &SimulateArgs, seed: u64) -> Vec<String> {
    let mut v = vec!["simulate".to_string()];
    model_args(&a.model, &mut v);
    v.extend([
        "--seed".into(),
        seed.to_string(),
        "--horizon".into(),
        a.horizon.to_string(),
        "--runs".into(),
        a.runs.to_string(),
    ]);
    for m in &a.monitors {
        v.extend(["--monitor".into(), m.clone()]);
    }
    if a.sequential {
        v.push("--sequential".into());
    }
    v
}
