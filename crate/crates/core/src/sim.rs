//! Stochastic trajectory generation.
//!
//! Each step first picks a delay, then a discrete move:
//!
//! * eager edges fire at the earliest delay at which they become enabled;
//! * otherwise, when some non-eager move can become enabled at delay `lo`,
//!   the delay is uniform on `[lo, max_delay]`, or `lo + Exp(rate)` when the
//!   invariants leave the delay unbounded. An eager deadline that comes first
//!   preempts the sample;
//! * after the delay, one enabled move is chosen with probability
//!   proportional to its weight.
//!
//! A state with no reachable move inside a bounded delay window is a
//! deadlock, reported once time has reached the window's end. A state with no reachable move and no invariant bound lets
//! time run to the horizon.
//!
//! Trial `i` of a batch draws from its own ChaCha8 stream seeded with
//! [`trial_seed`]`(seed, i)`, so results do not depend on scheduling.

use std::ops::ControlFlow;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::Expr;
use crate::network::{EnabledMove, MaxDelay, Move, Network, NetworkState, SimError, Timing};
use crate::query::QueryError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub seed: u64,
    /// Rate of the exponential delay used when no invariant bounds the delay.
    pub unbounded_delay_rate: f64,
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { horizon: 10_800.0, seed: 0, unbounded_delay_rate: 1.0, max_steps: 1_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("unbounded delay rate must be positive, got {0}")]
    Rate(f64),
    #[error("step cap must be positive")]
    Steps,
}

impl SimConfig {
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.horizon > 0.0) {
            return Err(ConfigError::Horizon(self.horizon));
        }
        if !(self.unbounded_delay_rate > 0.0) || !self.unbounded_delay_rate.is_finite() {
            return Err(ConfigError::Rate(self.unbounded_delay_rate));
        }
        if self.max_steps == 0 {
            return Err(ConfigError::Steps);
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed of trial `trial`: `splitmix64(seed ^ splitmix64(trial))`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, trial))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Horizon,
    Deadlock,
    StepCap,
    /// An observer asked to stop.
    Stopped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Event<'a> {
    Start,
    Delay(f64),
    Jump(&'a Move),
}

/// Called at the initial state, after every delay and after every jump.
pub trait Observer {
    fn observe(&mut self, net: &Network, state: &NetworkState, event: Event<'_>) -> ControlFlow<()>;
}

impl<F> Observer for F
where
    F: FnMut(&Network, &NetworkState, Event<'_>) -> ControlFlow<()>,
{
    fn observe(&mut self, net: &Network, state: &NetworkState, event: Event<'_>) -> ControlFlow<()> {
        self(net, state, event)
    }
}

/// Observer that never interferes.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: &Network, _: &NetworkState, _: Event<'_>) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub termination: Termination,
    pub final_state: NetworkState,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DelayChoice {
    Delay(f64),
    /// Nothing can fire within the bounded delay window.
    Deadlock,
    /// Nothing can ever fire and time may pass freely.
    Quiescent,
}

fn choose_delay(timing: &Timing, rate: f64, rng: &mut dyn RngCore) -> DelayChoice {
    match (timing.lazy, timing.eager) {
        (None, None) => match timing.max_delay {
            MaxDelay::Bounded(_) => DelayChoice::Deadlock,
            MaxDelay::Unbounded => DelayChoice::Quiescent,
        },
        (None, Some(e)) => DelayChoice::Delay(e),
        (Some(_), Some(e)) if e == 0.0 => DelayChoice::Delay(0.0),
        (Some(lo), eager) => {
            let sampled = match timing.max_delay {
                MaxDelay::Bounded(hi) if hi > lo => rng.random_range(lo..=hi),
                MaxDelay::Bounded(_) => lo,
                MaxDelay::Unbounded => {
                    let exp = Exp::new(rate).expect("rate checked by SimConfig::validate");
                    lo + exp.sample(rng)
                }
            };
            DelayChoice::Delay(eager.map_or(sampled, |e| e.min(sampled)))
        }
    }
}

/// Samples the next delay from `state`.
pub fn sample_delay(net: &Network, state: &NetworkState, unbounded_rate: f64, rng: &mut dyn RngCore) -> DelayChoice {
    let rates = net.rates(state);
    choose_delay(&net.timing(state, &rates), unbounded_rate, rng)
}

/// Index of the chosen move; move `i` is picked with probability `w_i / sum(w)`.
pub fn choose_move(moves: &[EnabledMove], rng: &mut dyn RngCore) -> Result<usize, SimError> {
    let mut total = 0.0;
    for m in moves {
        if m.weight < 0.0 || m.weight.is_nan() {
            return Err(SimError::NegativeWeight { step: format!("{:?}", m.mv), weight: m.weight });
        }
        total += m.weight;
    }
    if !(total > 0.0) {
        return Err(SimError::ZeroTotalWeight { time: f64::NAN });
    }
    if moves.len() == 1 {
        return Ok(0);
    }
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, m) in moves.iter().enumerate() {
        if m.weight > 0.0 {
            if u < m.weight {
                return Ok(i);
            }
            u -= m.weight;
            last = i;
        }
    }
    Ok(last)
}

struct Scratch {
    rates: Vec<f64>,
    moves: Vec<EnabledMove>,
    saved: NetworkState,
}

/// Lands a delay on the float grid: if the planned eager deadline is missed
/// by rounding, neighbouring representable delays are tried.
fn land(
    net: &Network,
    state: &mut NetworkState,
    delay: f64,
    expect_move: bool,
    scratch: &mut Scratch,
) -> Result<(), SimError> {
    scratch.saved.clone_from(state);
    net.advance_unchecked(state, delay, &scratch.rates);
    let good = |net: &Network, s: &NetworkState, moves: &mut Vec<EnabledMove>| {
        if !net.invariants_hold(s) {
            return false;
        }
        if !expect_move {
            return true;
        }
        net.enabled_moves_into(s, moves);
        !moves.is_empty()
    };
    if good(net, state, &mut scratch.moves) {
        return Ok(());
    }
    let mut up = delay;
    let mut down = delay;
    for _ in 0..8 {
        up = up.next_up();
        down = down.next_down().max(0.0);
        for candidate in [up, down] {
            state.clone_from(&scratch.saved);
            net.advance_unchecked(state, candidate, &scratch.rates);
            if good(net, state, &mut scratch.moves) {
                return Ok(());
            }
        }
    }
    state.clone_from(&scratch.saved);
    if expect_move {
        // no neighbour enables the deadline; fall back to the plain delay
        net.advance_unchecked(state, delay, &scratch.rates);
        if net.invariants_hold(state) {
            return Ok(());
        }
        state.clone_from(&scratch.saved);
    }
    net.elapse_in_place(state, delay, &scratch.rates)
}

/// Runs one trajectory with an explicit random stream.
pub fn run_with_rng<O: Observer + ?Sized>(
    net: &Network,
    config: &SimConfig,
    rng: &mut dyn RngCore,
    observer: &mut O,
) -> Result<RunOutcome, SimError> {
    let mut state = net.initial_state();
    let mut scratch = Scratch { rates: Vec::new(), moves: Vec::new(), saved: state.clone() };
    net.rates_into(&state.locations, &mut scratch.rates);
    let done = |termination, state, steps| Ok(RunOutcome { termination, final_state: state, steps });
    if observer.observe(net, &state, Event::Start).is_break() {
        return done(Termination::Stopped, state, 0);
    }
    let mut steps = 0u64;
    loop {
        if state.time >= config.horizon {
            return done(Termination::Horizon, state, steps);
        }
        if steps >= config.max_steps {
            return done(Termination::StepCap, state, steps);
        }
        steps += 1;
        let timing = net.timing(&state, &scratch.rates);
        // a stuck state still lets time pass up to its invariant bound
        let (delay, stuck) = match choose_delay(&timing, config.unbounded_delay_rate, rng) {
            DelayChoice::Delay(d) => (d, false),
            DelayChoice::Deadlock => (timing.max_delay.bound(), true),
            DelayChoice::Quiescent => (f64::INFINITY, false),
        };
        let remaining = config.horizon - state.time;
        if delay >= remaining {
            net.elapse_in_place(&mut state, remaining, &scratch.rates)?;
            state.time = config.horizon;
            let flow = observer.observe(net, &state, Event::Delay(remaining));
            let t = if flow.is_break() { Termination::Stopped } else { Termination::Horizon };
            return done(t, state, steps);
        }
        if delay > 0.0 {
            let expect_move = !stuck && timing.eager == Some(delay);
            land(net, &mut state, delay, expect_move, &mut scratch)?;
            if observer.observe(net, &state, Event::Delay(delay)).is_break() {
                return done(Termination::Stopped, state, steps);
            }
        }
        if stuck {
            return done(Termination::Deadlock, state, steps);
        }
        net.enabled_moves_into(&state, &mut scratch.moves);
        if scratch.moves.is_empty() {
            continue;
        }
        let pick = choose_move(&scratch.moves, rng).map_err(|e| match e {
            SimError::ZeroTotalWeight { .. } => SimError::ZeroTotalWeight { time: state.time },
            other => other,
        })?;
        let mv = scratch.moves[pick].mv;
        net.apply_move_in_place(&mut state, &mv, rng)?;
        net.rates_into(&state.locations, &mut scratch.rates);
        if observer.observe(net, &state, Event::Jump(&mv)).is_break() {
            return done(Termination::Stopped, state, steps);
        }
    }
}

/// Runs trial `trial` of the batch seeded by `config.seed`.
pub fn run_trial<O: Observer + ?Sized>(
    net: &Network,
    config: &SimConfig,
    trial: u64,
    observer: &mut O,
) -> Result<RunOutcome, SimError> {
    let mut rng = trial_rng(config.seed, trial);
    run_with_rng(net, config, &mut rng, observer)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Parallel,
    Sequential,
}

/// Evaluates `f` on trials `0..n`, results in trial order.
pub fn map_trials<T, F>(n: u64, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        Execution::Parallel => (0..n).into_par_iter().map(f).collect(),
    }
}

/// Lowest trial index for which `f` returns `Some`, with its value.
pub fn find_first_trial<T, F>(n: u64, exec: Execution, f: F) -> Option<(u64, T)>
where
    T: Send,
    F: Fn(u64) -> Option<T> + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).find_map(|i| f(i).map(|v| (i, v))),
        Execution::Parallel => (0..n).into_par_iter().find_map_first(|i| f(i).map(|v| (i, v))),
    }
}

/// A named expression sampled along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Monitor {
    pub name: String,
    pub expr: Expr,
}

impl Monitor {
    pub fn new(net: &Network, source: &str) -> Result<Self, QueryError> {
        Ok(Monitor { name: source.trim().to_string(), expr: net.compile_expr(source)? })
    }

    /// One monitor per global variable, in declaration order.
    pub fn globals(net: &Network) -> Vec<Monitor> {
        net.global_vars()
            .map(|(id, v)| Monitor { name: v.name.clone(), expr: Expr::Var(id) })
            .collect()
    }

    pub fn eval(&self, state: &NetworkState) -> f64 {
        self.expr.eval(&state.vals, &state.locations)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TraceEventKind {
    Start,
    Delay { duration: f64 },
    Jump { step: String, movers: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: TraceEventKind,
    pub locations: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub trial: u64,
    pub automata: Vec<String>,
    pub location_names: Vec<Vec<String>>,
    pub monitors: Vec<String>,
    pub events: Vec<TraceEvent>,
    pub final_state: NetworkState,
    pub terminated_by: Termination,
    pub steps: u64,
}

struct Recorder<'m, F> {
    monitors: &'m [Monitor],
    events: Vec<TraceEvent>,
    stop: F,
}

impl<F: FnMut(&NetworkState) -> bool> Observer for Recorder<'_, F> {
    fn observe(&mut self, net: &Network, state: &NetworkState, event: Event<'_>) -> ControlFlow<()> {
        let kind = match event {
            Event::Start => TraceEventKind::Start,
            Event::Delay(d) => TraceEventKind::Delay { duration: d },
            Event::Jump(mv) => TraceEventKind::Jump {
                step: net.describe_move(mv),
                movers: match *mv {
                    Move::Internal { automaton, .. } => vec![automaton],
                    Move::Sync { sender, receiver, .. } => vec![sender.0, receiver.0],
                },
            },
        };
        self.events.push(TraceEvent {
            time: state.time,
            kind,
            locations: state.locations.clone(),
            values: self.monitors.iter().map(|m| m.eval(state)).collect(),
        });
        if (self.stop)(state) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

/// Records trial `trial`, stopping early once `stop` returns true on a snapshot.
pub fn record_trial_until(
    net: &Network,
    config: &SimConfig,
    monitors: &[Monitor],
    trial: u64,
    stop: impl FnMut(&NetworkState) -> bool,
) -> Result<Trace, SimError> {
    let mut rec = Recorder { monitors, events: Vec::new(), stop };
    let out = run_trial(net, config, trial, &mut rec)?;
    Ok(Trace {
        trial,
        automata: net.automata.iter().map(|a| a.name.clone()).collect(),
        location_names: net
            .automata
            .iter()
            .map(|a| a.locations.iter().map(|l| l.name.clone()).collect())
            .collect(),
        monitors: monitors.iter().map(|m| m.name.clone()).collect(),
        events: rec.events,
        final_state: out.final_state,
        terminated_by: out.termination,
        steps: out.steps,
    })
}

pub fn simulate_trial(net: &Network, config: &SimConfig, monitors: &[Monitor], trial: u64) -> Result<Trace, SimError> {
    record_trial_until(net, config, monitors, trial, |_| false)
}

/// Full trajectory of trial 0 of `config.seed`.
pub fn simulate_run(net: &Network, config: &SimConfig, monitors: &[Monitor]) -> Result<Trace, SimError> {
    simulate_trial(net, config, monitors, 0)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Trace {
    fn location(&self, automaton: usize, loc: usize) -> &str {
        &self.location_names[automaton][loc]
    }

    /// CSV with columns `time,automaton,location,event` followed by one
    /// column per monitor. Jumps list the moving automata; other rows list
    /// every automaton. Multiple entries are separated by `|`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,automaton,location,event");
        for m in &self.monitors {
            out.push(',');
            out.push_str(&csv_field(m));
        }
        out.push('\n');
        for e in &self.events {
            let (who, event): (Vec<usize>, String) = match &e.kind {
                TraceEventKind::Start => ((0..self.automata.len()).collect(), "start".into()),
                TraceEventKind::Delay { duration } => ((0..self.automata.len()).collect(), format!("delay {duration}")),
                TraceEventKind::Jump { step, movers } => (movers.clone(), step.clone()),
            };
            let names: Vec<&str> = who.iter().map(|&a| self.automata[a].as_str()).collect();
            let locs: Vec<&str> = who.iter().map(|&a| self.location(a, e.locations[a])).collect();
            out.push_str(&format!(
                "{},{},{},{}",
                e.time,
                csv_field(&names.join("|")),
                csv_field(&locs.join("|")),
                csv_field(&event)
            ));
            for v in &e.values {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Automaton, Edge, Location, NetworkDef, Variable};
    use crate::network::validate_network;

    fn one_location(rate: f64) -> Network {
        validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "L".into(),
                locals: vec![Variable::real("v", 0.0)],
                locations: vec![Location::new("L").rate("v", rate)],
                edges: vec![],
            }],
            ..Default::default()
        })
        .unwrap()
    }

    fn branching(w1: &str, w2: &str) -> Network {
        validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "S".into(),
                locals: vec![],
                locations: vec![Location::new("S"), Location::new("A"), Location::new("B")],
                edges: vec![Edge::new("S", "A").weight(w1).eager(), Edge::new("S", "B").weight(w2).eager()],
            }],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn constant_rate_run_reaches_horizon() {
        let net = one_location(1.0);
        let cfg = SimConfig::default().with_horizon(5.0);
        let trace = simulate_run(&net, &cfg, &[Monitor::new(&net, "P.v").unwrap()]).unwrap();
        assert_eq!(trace.terminated_by, Termination::Horizon);
        assert_eq!(trace.final_state.vals[0], 5.0);
        assert_eq!(trace.events.last().unwrap().values, vec![5.0]);
    }

    #[test]
    fn same_seed_same_trace() {
        let net = branching("3", "1");
        let cfg = SimConfig::default().with_horizon(1.0).with_seed(99);
        let a = simulate_trial(&net, &cfg, &[], 7).unwrap();
        let b = simulate_trial(&net, &cfg, &[], 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn delay_sampling_respects_bounds() {
        let net = validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "L".into(),
                locals: vec![Variable::clock("e1")],
                locations: vec![Location::new("L").invariant("e1 <= 15")],
                edges: vec![Edge::new("L", "L")],
            }],
            ..Default::default()
        })
        .unwrap();
        let mut s = net.initial_state();
        s.vals[0] = 5.0;
        let mut rng = trial_rng(3, 0);
        for _ in 0..2000 {
            match sample_delay(&net, &s, 1.0, &mut rng) {
                DelayChoice::Delay(d) => assert!((0.0..=10.0).contains(&d)),
                other => panic!("{other:?}"),
            }
        }
        s.vals[0] = 15.0;
        assert_eq!(sample_delay(&net, &s, 1.0, &mut rng), DelayChoice::Delay(0.0));
    }

    #[test]
    fn eager_edges_fire_immediately() {
        let net = branching("1", "1");
        let s = net.initial_state();
        assert_eq!(sample_delay(&net, &s, 1.0, &mut trial_rng(0, 0)), DelayChoice::Delay(0.0));
    }

    #[test]
    fn unbounded_delay_has_exponential_mean() {
        let net = validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "L".into(),
                locals: vec![],
                locations: vec![Location::new("L")],
                edges: vec![Edge::new("L", "L")],
            }],
            ..Default::default()
        })
        .unwrap();
        let s = net.initial_state();
        let mut rng = trial_rng(11, 0);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let DelayChoice::Delay(d) = sample_delay(&net, &s, 0.1, &mut rng) else { panic!() };
            sum += d;
        }
        let mean = sum / n as f64;
        assert!((mean - 10.0).abs() < 0.2, "mean {mean}");
    }

    #[test]
    fn weighted_choice_frequencies() {
        let moves = |ws: &[f64]| -> Vec<EnabledMove> {
            ws.iter()
                .enumerate()
                .map(|(i, &w)| EnabledMove { mv: Move::Internal { automaton: 0, edge: i }, weight: w, eager: false })
                .collect()
        };
        let mut rng = trial_rng(5, 0);
        let m = moves(&[3.0, 1.0]);
        let n = 100_000;
        let first = (0..n).filter(|_| choose_move(&m, &mut rng).unwrap() == 0).count();
        let freq = first as f64 / n as f64;
        assert!((freq - 0.75).abs() < 0.01, "freq {freq}");

        assert_eq!(choose_move(&moves(&[2.0]), &mut rng).unwrap(), 0);
        let degenerate = moves(&[20.0, 0.0, 0.0, 0.0, 0.0]);
        assert!((0..1000).all(|_| choose_move(&degenerate, &mut rng).unwrap() == 0));
        assert!(matches!(choose_move(&moves(&[0.0, 0.0]), &mut rng), Err(SimError::ZeroTotalWeight { .. })));
    }

    #[test]
    fn zero_weight_model_error_surfaces() {
        let net = branching("0", "0");
        let err = simulate_run(&net, &SimConfig::default().with_horizon(1.0), &[]).unwrap_err();
        assert!(matches!(err, SimError::ZeroTotalWeight { .. }));
    }

    #[test]
    fn bounded_stuck_state_is_a_deadlock() {
        let net = validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "L".into(),
                locals: vec![Variable::clock("c")],
                locations: vec![Location::new("L").invariant("c <= 3")],
                edges: vec![Edge::new("L", "L").guard("c >= 5")],
            }],
            ..Default::default()
        })
        .unwrap();
        let trace = simulate_run(&net, &SimConfig::default().with_horizon(100.0), &[]).unwrap();
        assert_eq!(trace.terminated_by, Termination::Deadlock);
    }

    #[test]
    fn zeno_loop_hits_step_cap() {
        let net = branching("1", "1");
        let looping = validate_network(&NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: "S".into(),
                locals: vec![],
                locations: vec![Location::new("S")],
                edges: vec![Edge::new("S", "S").eager()],
            }],
            ..Default::default()
        })
        .unwrap();
        let cfg = SimConfig { max_steps: 500, ..SimConfig::default() };
        let trace = simulate_run(&looping, &cfg, &[]).unwrap();
        assert_eq!(trace.terminated_by, Termination::StepCap);
        assert_eq!(trace.steps, 500);
        // the branching model stops moving once in A or B and idles to the horizon
        let t = simulate_run(&net, &cfg.with_horizon(3.0), &[]).unwrap();
        assert_eq!(t.terminated_by, Termination::Horizon);
    }

    #[test]
    fn trial_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| trial_seed(42, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let net = branching("3", "1");
        let cfg = SimConfig::default().with_horizon(1.0).with_seed(1);
        let run = |i| simulate_trial(&net, &cfg, &[], i).unwrap().final_state.locations;
        assert_eq!(map_trials(64, Execution::Parallel, run), map_trials(64, Execution::Sequential, run));
        let pick = |i| (simulate_trial(&net, &cfg, &[], i).unwrap().final_state.locations[0] == 2).then_some(());
        assert_eq!(
            find_first_trial(64, Execution::Parallel, pick),
            find_first_trial(64, Execution::Sequential, pick)
        );
    }

    #[test]
    fn csv_has_header_and_monitor_columns() {
        let net = one_location(2.0);
        let trace = simulate_run(&net, &SimConfig::default().with_horizon(1.5), &Monitor::globals(&net)).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("time,automaton,location,event"));
        assert_eq!(lines.next(), Some("0,P,L,start"));
        assert_eq!(lines.next(), Some("1.5,P,L,delay 1.5"));
    }
}
