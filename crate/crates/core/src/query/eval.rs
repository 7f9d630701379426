//! Monte Carlo evaluation of compiled queries.
//!
//! Queries whose trajectories share a horizon are evaluated on the same
//! trials: trial `i` is simulated once and every query that uses at least
//! `i + 1` runs observes it. Since trial streams depend only on the seed and
//! the trial index, this gives the same answers as evaluating each query on
//! its own.

use std::fmt;
use std::ops::ControlFlow;

use serde::Serialize;

use super::{BoundQuery, CompiledQuery, Extremum, QueryError};
use crate::expr::Expr;
use crate::network::{Network, NetworkState};
use crate::sim::{map_trials, record_trial_until, run_trial, Execution, Monitor, SimConfig, Termination, Trace};
use crate::stats::{chernoff_runs, clopper_pearson, mean_std, student_t_ci, ConfidenceInterval};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckConfig {
    /// Horizon of monitored queries, seed and engine settings. Expectation and
    /// probability queries carry their own horizon.
    pub sim: SimConfig,
    /// Overrides the run count of every query.
    pub runs: Option<u64>,
    /// Runs for `A[]`, `E<>`, `-->` and deadlock queries.
    pub monitored_runs: u64,
    pub epsilon: f64,
    pub alpha: f64,
    /// Level of the Student-t interval of expectation queries.
    pub confidence: f64,
    pub execution: Execution,
    /// How far past the horizon leads-to obligations may be discharged.
    /// `None` means one more horizon.
    pub leads_to_grace: Option<f64>,
    /// Treat leads-to obligations still open at the end of a run as met.
    pub pending_is_vacuous: bool,
    /// Re-simulate the deciding trial to attach a trace.
    pub evidence: bool,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            sim: SimConfig::default(),
            runs: None,
            monitored_runs: 1000,
            epsilon: 0.05,
            alpha: 0.05,
            confidence: 0.95,
            execution: Execution::Parallel,
            leads_to_grace: None,
            pending_is_vacuous: false,
            evidence: true,
        }
    }
}

impl CheckConfig {
    pub fn validate(&self) -> Result<(), QueryError> {
        self.sim.validate().map_err(|e| QueryError::Invalid(e.to_string()))?;
        let bad = |m: &str| Err(QueryError::Invalid(m.into()));
        if self.runs == Some(0) || self.monitored_runs == 0 {
            return bad("run count must be positive");
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha must lie in (0, 1)");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        if self.leads_to_grace.is_some_and(|g| !(g >= 0.0)) {
            return bad("leads-to grace must be non-negative");
        }
        Ok(())
    }

    fn runs_for(&self, q: &CompiledQuery) -> u64 {
        self.runs.unwrap_or(match q {
            CompiledQuery::ExpectedValue { runs, .. } => *runs,
            CompiledQuery::Probability { .. } => chernoff_runs(self.epsilon, self.alpha),
            _ => self.monitored_runs,
        })
    }

    fn horizon_for(&self, q: &CompiledQuery) -> f64 {
        match q {
            CompiledQuery::ExpectedValue { horizon, .. } | CompiledQuery::Probability { horizon, .. } => *horizon,
            CompiledQuery::LeadsTo(..) => self.sim.horizon + self.leads_to_grace.unwrap_or(self.sim.horizon),
            _ => self.sim.horizon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Verdict {
    Number { value: f64 },
    Interval { lo: f64, hi: f64 },
    PassedRuns { runs: u64 },
    WitnessFound { trial: u64, time: f64 },
    NotFound { runs: u64 },
    Falsified { trial: u64, time: f64 },
}

impl Verdict {
    /// True for verdicts that count as "valid" in a report.
    pub fn is_positive(&self) -> bool {
        matches!(self, Verdict::PassedRuns { .. } | Verdict::WitnessFound { .. })
    }
}

/// Up to six significant decimals, trailing zeros removed.
fn short(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Number { value } => write!(f, "{value:.2}"),
            Verdict::Interval { lo, hi } => write!(f, "[{},{}]", short(*lo), short(*hi)),
            Verdict::PassedRuns { runs } => write!(f, "valid (statistical, passed {runs} runs)"),
            Verdict::WitnessFound { trial, time } => write!(f, "valid (witness in trial {trial} at t={})", short(*time)),
            Verdict::NotFound { runs } => write!(f, "not found in {runs} runs"),
            Verdict::Falsified { trial, time } => write!(f, "invalid (falsified in trial {trial} at t={})", short(*time)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub trial: u64,
    pub time: f64,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmcResult {
    pub query: String,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<Estimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<ConfidenceInterval>,
    pub runs_used: u64,
    /// Runs excluded because they hit the step cap.
    pub runs_flagged: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Evidence>,
    /// Per-run values of expectation queries, in trial order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Per-trial bookkeeping of one query.
enum Probe<'q> {
    Extremum { expr: &'q Expr, max: bool, best: f64 },
    /// `E<>`, `Pr[..](<> ..)`: time of the first satisfying snapshot.
    Reach { pred: &'q Expr, hit: Option<f64> },
    /// `A[]`: time of the first violating snapshot.
    Always { pred: &'q Expr, hit: Option<f64> },
    LeadsTo { ante: &'q Expr, cons: &'q Expr, cutoff: f64, pending: Option<f64>, hit: Option<f64> },
    Deadlock { hit: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct TrialOutcome {
    value: f64,
    hit: Option<f64>,
    flagged: bool,
}

impl<'q> Probe<'q> {
    fn new(q: &'q CompiledQuery, cutoff: f64) -> Self {
        match q {
            CompiledQuery::ExpectedValue { extremum, expr, .. } => {
                let max = *extremum == Extremum::Max;
                Probe::Extremum { expr, max, best: if max { f64::NEG_INFINITY } else { f64::INFINITY } }
            }
            CompiledQuery::Probability { predicate, .. } => Probe::Reach { pred: predicate, hit: None },
            CompiledQuery::Exists(p) => Probe::Reach { pred: p, hit: None },
            CompiledQuery::Always(p) => Probe::Always { pred: p, hit: None },
            CompiledQuery::LeadsTo(a, b) => Probe::LeadsTo { ante: a, cons: b, cutoff, pending: None, hit: None },
            CompiledQuery::NoDeadlock => Probe::Deadlock { hit: None },
        }
    }

    fn observe(&mut self, s: &NetworkState) {
        let holds = |e: &Expr| e.holds(&s.vals, &s.locations);
        match self {
            Probe::Extremum { expr, max, best } => {
                let v = expr.eval(&s.vals, &s.locations);
                *best = if *max { best.max(v) } else { best.min(v) };
            }
            Probe::Reach { pred, hit } => {
                if hit.is_none() && holds(pred) {
                    *hit = Some(s.time);
                }
            }
            Probe::Always { pred, hit } => {
                if hit.is_none() && !holds(pred) {
                    *hit = Some(s.time);
                }
            }
            Probe::LeadsTo { ante, cons, cutoff, pending, hit } => {
                if hit.is_some() {
                    return;
                }
                if holds(cons) {
                    *pending = None;
                } else if pending.is_none() && s.time <= *cutoff && holds(ante) {
                    *pending = Some(s.time);
                }
            }
            Probe::Deadlock { .. } => {}
        }
    }

    /// Nothing later in the run can change the outcome.
    fn settled(&self, time: f64) -> bool {
        match self {
            Probe::Extremum { .. } | Probe::Deadlock { .. } => false,
            Probe::Reach { hit, .. } | Probe::Always { hit, .. } => hit.is_some(),
            Probe::LeadsTo { cutoff, pending, hit, .. } => hit.is_some() || (time > *cutoff && pending.is_none()),
        }
    }

    fn finish(&mut self, end: &NetworkState, termination: Termination, vacuous: bool) -> TrialOutcome {
        let settled = self.settled(end.time);
        if let Probe::LeadsTo { pending: Some(_), hit, .. } = self {
            if !vacuous && termination != Termination::StepCap {
                *hit = Some(end.time);
            }
        }
        if let Probe::Deadlock { hit } = self {
            if termination == Termination::Deadlock {
                *hit = Some(end.time);
            }
        }
        let flagged = termination == Termination::StepCap && !settled;
        match self {
            Probe::Extremum { best, .. } => TrialOutcome { value: *best, hit: None, flagged },
            Probe::Reach { hit, .. }
            | Probe::Always { hit, .. }
            | Probe::LeadsTo { hit, .. }
            | Probe::Deadlock { hit } => TrialOutcome { value: f64::NAN, hit: *hit, flagged },
        }
    }
}

/// Simulates trials `0..max(runs)` once and feeds every query of the group.
fn run_group(
    net: &Network,
    cfg: &CheckConfig,
    sim: &SimConfig,
    queries: &[(&CompiledQuery, u64)],
) -> Result<Vec<Vec<TrialOutcome>>, QueryError> {
    let n = queries.iter().map(|q| q.1).max().unwrap_or(0);
    let cutoff = cfg.sim.horizon;
    let per_trial = map_trials(n, cfg.execution, |trial| {
        let active: Vec<usize> = (0..queries.len()).filter(|&k| queries[k].1 > trial).collect();
        let mut probes: Vec<Probe> = active.iter().map(|&k| Probe::new(queries[k].0, cutoff)).collect();
        let mut observer = |_: &Network, s: &NetworkState, _: crate::sim::Event<'_>| {
            for p in probes.iter_mut() {
                p.observe(s);
            }
            if probes.iter().all(|p| p.settled(s.time)) {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        };
        let out = run_trial(net, sim, trial, &mut observer).map_err(|error| QueryError::Simulation { trial, error })?;
        Ok::<_, QueryError>(
            probes
                .iter_mut()
                .zip(&active)
                .map(|(p, &k)| (k, p.finish(&out.final_state, out.termination, cfg.pending_is_vacuous)))
                .collect::<Vec<_>>(),
        )
    });
    let mut table: Vec<Vec<TrialOutcome>> = queries.iter().map(|q| Vec::with_capacity(q.1 as usize)).collect();
    for trial in per_trial {
        for (k, o) in trial? {
            table[k].push(o);
        }
    }
    Ok(table)
}

fn evidence_trace(
    net: &Network,
    sim: &SimConfig,
    q: &CompiledQuery,
    source: &super::Query,
    trial: u64,
) -> Result<Trace, QueryError> {
    use super::Query as Q;
    let mon = |name: String, expr: &Expr| Monitor { name, expr: expr.clone() };
    let monitors = match (q, source) {
        (CompiledQuery::Always(p), Q::Always(a)) | (CompiledQuery::Exists(p), Q::Exists(a)) => {
            vec![mon(a.to_string(), p)]
        }
        (CompiledQuery::LeadsTo(p, r), Q::LeadsTo(a, b)) => vec![mon(a.to_string(), p), mon(b.to_string(), r)],
        _ => Vec::new(),
    };
    let trace = match q {
        CompiledQuery::Always(p) => record_trial_until(net, sim, &monitors, trial, |s| !p.holds(&s.vals, &s.locations)),
        CompiledQuery::Exists(p) => record_trial_until(net, sim, &monitors, trial, |s| p.holds(&s.vals, &s.locations)),
        _ => record_trial_until(net, sim, &monitors, trial, |_| false),
    };
    trace.map_err(|error| QueryError::Simulation { trial, error })
}

fn summarize(
    net: &Network,
    cfg: &CheckConfig,
    sim: &SimConfig,
    bq: &BoundQuery,
    runs: u64,
    outcomes: &[TrialOutcome],
) -> Result<SmcResult, QueryError> {
    let flagged = outcomes.iter().filter(|o| o.flagged).count() as u64;
    let valid = || outcomes.iter().filter(|o| !o.flagged);
    let mut result = SmcResult {
        query: bq.text.clone(),
        verdict: Verdict::PassedRuns { runs },
        estimate: None,
        ci: None,
        runs_used: runs - flagged,
        runs_flagged: flagged,
        evidence: None,
        samples: Vec::new(),
    };
    let first_hit = || outcomes.iter().enumerate().find_map(|(i, o)| o.hit.map(|t| (i as u64, t)));
    let attach = |result: &mut SmcResult, trial: u64, time: f64| -> Result<(), QueryError> {
        let trace = if cfg.evidence { Some(evidence_trace(net, sim, &bq.compiled, &bq.query, trial)?) } else { None };
        result.evidence = Some(Evidence { trial, time, trace });
        Ok(())
    };
    match &bq.compiled {
        CompiledQuery::ExpectedValue { .. } => {
            let xs: Vec<f64> = valid().map(|o| o.value).collect();
            if xs.is_empty() {
                return Err(QueryError::Invalid(format!("all {runs} runs hit the step cap")));
            }
            let (mean, std) = mean_std(&xs);
            result.verdict = Verdict::Number { value: mean };
            result.estimate = Some(Estimate { mean, std });
            result.ci = student_t_ci(mean, std, xs.len(), cfg.confidence);
            result.samples = xs;
        }
        CompiledQuery::Probability { .. } => {
            let n = valid().count() as u64;
            if n == 0 {
                return Err(QueryError::Invalid(format!("all {runs} runs hit the step cap")));
            }
            let k = valid().filter(|o| o.hit.is_some()).count() as u64;
            let p = k as f64 / n as f64;
            let ci = clopper_pearson(k, n, cfg.alpha);
            result.verdict = Verdict::Interval { lo: ci.lo, hi: ci.hi };
            result.estimate = Some(Estimate { mean: p, std: (p * (1.0 - p)).sqrt() });
            result.ci = Some(ci);
        }
        CompiledQuery::Exists(_) => match first_hit() {
            Some((trial, time)) => {
                result.verdict = Verdict::WitnessFound { trial, time };
                result.runs_used = trial + 1;
                attach(&mut result, trial, time)?;
            }
            None => result.verdict = Verdict::NotFound { runs: runs - flagged },
        },
        CompiledQuery::Always(_) | CompiledQuery::LeadsTo(..) | CompiledQuery::NoDeadlock => match first_hit() {
            Some((trial, time)) => {
                result.verdict = Verdict::Falsified { trial, time };
                result.runs_used = trial + 1;
                attach(&mut result, trial, time)?;
            }
            None => result.verdict = Verdict::PassedRuns { runs: runs - flagged },
        },
    }
    Ok(result)
}

/// Evaluates several queries, sharing trials between queries with equal horizons.
pub fn evaluate_all(net: &Network, queries: &[BoundQuery], cfg: &CheckConfig) -> Vec<Result<SmcResult, QueryError>> {
    if let Err(e) = cfg.validate() {
        return queries.iter().map(|_| Err(e.clone())).collect();
    }
    let mut out: Vec<Option<Result<SmcResult, QueryError>>> = vec![None; queries.len()];
    let mut horizons: Vec<f64> = Vec::new();
    for q in queries {
        let h = cfg.horizon_for(&q.compiled);
        if !horizons.contains(&h) {
            horizons.push(h);
        }
    }
    for h in horizons {
        let members: Vec<usize> = (0..queries.len()).filter(|&i| cfg.horizon_for(&queries[i].compiled) == h).collect();
        let group: Vec<(&CompiledQuery, u64)> =
            members.iter().map(|&i| (&queries[i].compiled, cfg.runs_for(&queries[i].compiled))).collect();
        let sim = cfg.sim.with_horizon(h);
        match run_group(net, cfg, &sim, &group) {
            Ok(table) => {
                for ((&i, (_, runs)), outcomes) in members.iter().zip(&group).zip(&table) {
                    out[i] = Some(summarize(net, cfg, &sim, &queries[i], *runs, outcomes));
                }
            }
            Err(e) => {
                for &i in &members {
                    out[i] = Some(Err(e.clone()));
                }
            }
        }
    }
    out.into_iter().map(|r| r.expect("every query belongs to a group")).collect()
}

pub fn evaluate(net: &Network, query: &BoundQuery, cfg: &CheckConfig) -> Result<SmcResult, QueryError> {
    evaluate_all(net, std::slice::from_ref(query), cfg).pop().expect("one result")
}

fn expect_kind(query: &BoundQuery, ok: bool, what: &str) -> Result<(), QueryError> {
    if ok {
        Ok(())
    } else {
        Err(QueryError::Invalid(format!("`{}` is not {what}", query.text)))
    }
}

/// Mean, std and Student-t interval of the per-run maximum (or minimum).
pub fn estimate_expectation(net: &Network, query: &BoundQuery, cfg: &CheckConfig) -> Result<SmcResult, QueryError> {
    expect_kind(query, matches!(query.compiled, CompiledQuery::ExpectedValue { .. }), "an expectation query")?;
    evaluate(net, query, cfg)
}

/// Fraction of runs reaching the predicate, with a Clopper-Pearson interval.
pub fn estimate_probability(net: &Network, query: &BoundQuery, cfg: &CheckConfig) -> Result<SmcResult, QueryError> {
    expect_kind(query, matches!(query.compiled, CompiledQuery::Probability { .. }), "a probability query")?;
    evaluate(net, query, cfg)
}

/// Trace-monitored `A[]`, `E<>`, `-->` and deadlock queries.
pub fn check_monitored(net: &Network, query: &BoundQuery, cfg: &CheckConfig) -> Result<SmcResult, QueryError> {
    let monitored = matches!(
        query.compiled,
        CompiledQuery::Always(_) | CompiledQuery::Exists(_) | CompiledQuery::LeadsTo(..) | CompiledQuery::NoDeadlock
    );
    expect_kind(query, monitored, "a monitored query")?;
    evaluate(net, query, cfg)
}

/// Plain-text table with one numbered row per query.
pub fn render_table(rows: &[(String, String)]) -> String {
    let qw = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0).max("Query".len());
    let iw = rows.len().to_string().len().max(1);
    let mut out = format!("{:>iw$}  {:<qw$}  Result\n", "#", "Query");
    out.push_str(&format!("{}\n", "-".repeat(iw + qw + 12)));
    for (i, (q, r)) in rows.iter().enumerate() {
        out.push_str(&format!("{:>iw$}  {:<qw$}  {}\n", i + 1, q, r));
    }
    out
}
