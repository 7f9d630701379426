//! Validated networks of stochastic hybrid automata and their single-step
//! semantics: discrete jumps (internal or binary-synchronized) and time
//! elapse with constant-rate integration.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{parse_expr, Ast, Expr, ResolveError, Symbol, SyntaxError, VarId};
use crate::interval::DelaySet;
use crate::model::{NetworkDef, VarKind};
use crate::predictor::{PredictorBinding, INTERVALS, WINDOW};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{context}: channel `{channel}` has no matching {missing} partner")]
    UnpairedChannel { context: String, channel: String, missing: &'static str },
    #[error("{context}: unknown variable `{name}`")]
    UnknownVariable { context: String, name: String },
    #[error("{context}: unknown location `{name}`")]
    UnknownLocation { context: String, name: String },
    #[error("duplicate {kind} `{name}`")]
    DuplicateId { kind: &'static str, name: String },
    #[error("{context}: weight {weight} is negative")]
    NegativeConstantWeight { context: String, weight: f64 },
    #[error("{context}: invalid rate for `{var}`: {reason}")]
    InvalidRate { context: String, var: String, reason: String },
    #[error("{context}: {error}")]
    Syntax { context: String, error: SyntaxError },
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("target invariant violated in {automaton}.{location} after {step}; state: {state}")]
    TargetInvariantViolated { automaton: String, location: String, step: String, state: String },
    #[error("invariant of {automaton}.{location} violated during a delay of {delay}")]
    InvariantViolatedDuringDelay { automaton: String, location: String, delay: f64 },
    #[error("negative delay {0}")]
    NegativeDelay(f64),
    #[error("enabled moves have zero total weight at time {time}")]
    ZeroTotalWeight { time: f64 },
    #[error("negative weight {weight} on {step}")]
    NegativeWeight { step: String, weight: f64 },
    #[error("clock `{clock}` assigned negative value {value}")]
    NegativeClock { clock: String, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarInfo {
    /// Globals by plain name, locals as `Automaton.name`.
    pub name: String,
    pub kind: VarKind,
    pub init: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sync {
    None,
    Send(usize),
    Receive(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Update {
    Assign(VarId, Expr),
    Call(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledEdge {
    pub source: usize,
    pub target: usize,
    pub guard: Option<Expr>,
    pub sync: Sync,
    pub weight: Expr,
    pub eager: bool,
    pub updates: Vec<Update>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledLocation {
    pub name: String,
    pub invariant: Option<Expr>,
    pub rates: Vec<(VarId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledAutomaton {
    pub name: String,
    pub initial: usize,
    pub locations: Vec<CompiledLocation>,
    pub edges: Vec<CompiledEdge>,
    /// Outgoing edge indices per location.
    pub outgoing: Vec<Vec<usize>>,
    locals: HashMap<String, VarId>,
    location_index: HashMap<String, usize>,
}

impl CompiledAutomaton {
    pub fn location_id(&self, name: &str) -> Option<usize> {
        self.location_index.get(name).copied()
    }
}

/// A validated, immutable network. Safe to share across simulation workers.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub vars: Vec<VarInfo>,
    pub automata: Vec<CompiledAutomaton>,
    pub channels: Vec<String>,
    pub predictors: Vec<PredictorBinding>,
    /// `(automaton, edge)` pairs receiving on each channel.
    receivers: Vec<Vec<(usize, usize)>>,
    globals: HashMap<String, VarId>,
    automaton_index: HashMap<String, usize>,
    clocks: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub locations: Vec<usize>,
    pub vals: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Move {
    Internal { automaton: usize, edge: usize },
    Sync { channel: usize, sender: (usize, usize), receiver: (usize, usize) },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnabledMove {
    pub mv: Move,
    pub weight: f64,
    pub eager: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaxDelay {
    Bounded(f64),
    Unbounded,
}

impl MaxDelay {
    pub fn bound(self) -> f64 {
        match self {
            MaxDelay::Bounded(d) => d,
            MaxDelay::Unbounded => f64::INFINITY,
        }
    }
}

/// Earliest delays at which moves become enabled, within the admissible window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub max_delay: MaxDelay,
    /// Earliest attained delay at which some eager move is enabled.
    pub eager: Option<f64>,
    /// Infimum of delays at which some non-eager move is enabled.
    pub lazy: Option<f64>,
}

fn is_valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

struct Builder {
    vars: Vec<VarInfo>,
    globals: HashMap<String, VarId>,
    errors: Vec<ModelError>,
}

impl Builder {
    fn declare(&mut self, qualified: String, key: &str, kind: VarKind, init: f64, scope: &mut HashMap<String, VarId>) -> VarId {
        if scope.contains_key(key) {
            self.errors.push(ModelError::DuplicateId { kind: "variable", name: qualified.clone() });
        }
        if !is_valid_ident(key) {
            self.errors.push(ModelError::Invalid {
                context: qualified.clone(),
                message: "variable names must be identifiers".into(),
            });
        }
        let id = self.vars.len();
        let init = if kind == VarKind::Int { init.trunc() } else { init };
        self.vars.push(VarInfo { name: qualified, kind, init });
        scope.insert(key.to_string(), id);
        id
    }
}

/// Checks a network definition and compiles it. Returns every violation found.
pub fn validate_network(def: &NetworkDef) -> Result<Network, Vec<ModelError>> {
    let mut b = Builder { vars: Vec::new(), globals: HashMap::new(), errors: Vec::new() };

    let mut globals = HashMap::new();
    for v in &def.globals {
        b.declare(v.name.clone(), &v.name, v.kind, v.init, &mut globals);
    }

    let mut predictors = Vec::new();
    let mut predictor_index = HashMap::new();
    for p in &def.predictors {
        if predictor_index.insert(p.name.clone(), predictors.len()).is_some() {
            b.errors.push(ModelError::DuplicateId { kind: "predictor", name: p.name.clone() });
        }
        let mut decl = |name: String, kind: VarKind, init: f64| {
            let full = format!("{}{}", p.prefix, name);
            b.declare(full.clone(), &full, kind, init, &mut globals)
        };
        let buffer: [VarId; WINDOW] = std::array::from_fn(|i| decl(format!("env_{i}"), VarKind::Real, 0.0));
        let counter = decl("counter".into(), VarKind::Int, 0.0);
        let latest = decl("latest".into(), VarKind::Real, 0.0);
        let counts: [VarId; INTERVALS] =
            std::array::from_fn(|i| decl(format!("TI{}", i + 1), VarKind::Int, p.initial_weights[i] as f64));
        let q2 = decl("q2".into(), VarKind::Int, 0.0);
        let q3 = decl("q3".into(), VarKind::Int, 0.0);
        let go_idle = decl("goIdle".into(), VarKind::Int, if p.initial_go_idle { 1.0 } else { 0.0 });
        let arrivals = decl("arrivals".into(), VarKind::Int, 0.0);
        let decisions = decl("decisions".into(), VarKind::Int, 0.0);
        predictors.push(PredictorBinding {
            name: p.name.clone(),
            value: usize::MAX,
            thresholds: p.thresholds,
            sort_batches: p.sort_batches,
            buffer,
            counter,
            latest,
            counts,
            q2,
            q3,
            go_idle,
            arrivals,
            decisions,
        });
    }
    b.globals = globals;
    for (binding, p) in predictors.iter_mut().zip(&def.predictors) {
        match b.globals.get(&p.value) {
            Some(&v) => binding.value = v,
            None => b.errors.push(ModelError::UnknownVariable {
                context: format!("predictor {}", p.name),
                name: p.value.clone(),
            }),
        }
    }

    let mut channels = HashMap::new();
    for (i, c) in def.channels.iter().enumerate() {
        if channels.insert(c.clone(), i).is_some() {
            b.errors.push(ModelError::DuplicateId { kind: "channel", name: c.clone() });
        }
    }

    // First pass: automaton names, locations and locals, so expressions may
    // refer to any automaton's locations and variables.
    let mut automaton_index = HashMap::new();
    let mut shells = Vec::new();
    for (ai, a) in def.automata.iter().enumerate() {
        if automaton_index.insert(a.name.clone(), ai).is_some() {
            b.errors.push(ModelError::DuplicateId { kind: "automaton", name: a.name.clone() });
        }
        let mut location_index = HashMap::new();
        for (li, l) in a.locations.iter().enumerate() {
            if location_index.insert(l.name.clone(), li).is_some() {
                b.errors.push(ModelError::DuplicateId { kind: "location", name: format!("{}.{}", a.name, l.name) });
            }
        }
        let mut locals = HashMap::new();
        for v in &a.locals {
            b.declare(format!("{}.{}", a.name, v.name), &v.name, v.kind, v.init, &mut locals);
        }
        let initial = match location_index.get(&a.initial) {
            Some(&i) => i,
            None => {
                b.errors.push(ModelError::UnknownLocation { context: format!("{} initial", a.name), name: a.initial.clone() });
                0
            }
        };
        shells.push((initial, locals, location_index));
    }
    if def.automata.iter().any(|a| a.locations.is_empty()) {
        b.errors.push(ModelError::Invalid { context: "network".into(), message: "every automaton needs a location".into() });
        return Err(b.errors);
    }

    let lookup = |scope: Option<usize>, qualifier: Option<&str>, name: &str| -> Option<Symbol> {
        match qualifier {
            Some(q) => {
                let ai = *automaton_index.get(q)?;
                let (_, locals, locs) = &shells[ai];
                if let Some(&l) = locs.get(name) {
                    return Some(Symbol::Location { automaton: ai, location: l });
                }
                locals.get(name).map(|&v| Symbol::Var(v))
            }
            None => {
                if let Some(ai) = scope {
                    if let Some(&v) = shells[ai].1.get(name) {
                        return Some(Symbol::Var(v));
                    }
                }
                b.globals.get(name).map(|&v| Symbol::Var(v))
            }
        }
    };

    let mut errors = std::mem::take(&mut b.errors);
    let compile = |errors: &mut Vec<ModelError>, scope: usize, src: &str, context: String, allow_random: bool| -> Option<Expr> {
        let ast = match parse_expr(src) {
            Ok(a) => a,
            Err(error) => {
                errors.push(ModelError::Syntax { context, error });
                return None;
            }
        };
        match Expr::resolve(&ast, &|q, n| lookup(Some(scope), q, n)) {
            Ok(e) => {
                if !allow_random && e.is_random() {
                    errors.push(ModelError::Invalid { context, message: "uniform() is only allowed in updates".into() });
                    return None;
                }
                Some(e)
            }
            Err(ResolveError::UnknownIdentifier { name, .. }) => {
                errors.push(ModelError::UnknownVariable { context, name });
                None
            }
            Err(other) => {
                errors.push(ModelError::Invalid { context, message: other.to_string() });
                None
            }
        }
    };

    let mut automata = Vec::new();
    let mut senders: Vec<Vec<usize>> = vec![Vec::new(); def.channels.len()];
    let mut receivers: Vec<Vec<(usize, usize)>> = vec![Vec::new(); def.channels.len()];
    let mut pending_updates = Vec::new();
    for (ai, a) in def.automata.iter().enumerate() {
        let (initial, locals, location_index) = &shells[ai];
        let mut locations = Vec::new();
        for l in &a.locations {
            let ctx = format!("{}.{}", a.name, l.name);
            let invariant = l
                .invariant
                .as_ref()
                .and_then(|src| compile(&mut errors, ai, src, format!("{ctx} invariant"), false));
            let mut rates = Vec::new();
            for (var, &rate) in &l.rates {
                let id = locals.get(var).or_else(|| b.globals.get(var)).copied();
                match id {
                    None => errors.push(ModelError::UnknownVariable { context: format!("{ctx} rates"), name: var.clone() }),
                    Some(v) if b.vars[v].kind != VarKind::Real => errors.push(ModelError::InvalidRate {
                        context: ctx.clone(),
                        var: var.clone(),
                        reason: "only real variables accrue at a rate".into(),
                    }),
                    Some(_) if !rate.is_finite() => errors.push(ModelError::InvalidRate {
                        context: ctx.clone(),
                        var: var.clone(),
                        reason: "rate must be finite".into(),
                    }),
                    Some(v) => rates.push((v, rate)),
                }
            }
            locations.push(CompiledLocation { name: l.name.clone(), invariant, rates });
        }

        let mut edges = Vec::new();
        let mut outgoing = vec![Vec::new(); a.locations.len()];
        for (ei, e) in a.edges.iter().enumerate() {
            let ctx = format!("{} edge {} ({} -> {})", a.name, ei, e.from, e.to);
            let loc = |name: &str, errors: &mut Vec<ModelError>| match location_index.get(name) {
                Some(&l) => l,
                None => {
                    errors.push(ModelError::UnknownLocation { context: ctx.clone(), name: name.to_string() });
                    0
                }
            };
            let source = loc(&e.from, &mut errors);
            let target = loc(&e.to, &mut errors);
            let guard = e.guard.as_ref().and_then(|g| compile(&mut errors, ai, g, format!("{ctx} guard"), false));
            let weight = compile(&mut errors, ai, &e.weight, format!("{ctx} weight"), false).unwrap_or(Expr::Const(1.0));
            if let Some(w) = weight.constant_value() {
                if w < 0.0 {
                    errors.push(ModelError::NegativeConstantWeight { context: ctx.clone(), weight: w });
                }
            }
            let sync = match &e.sync {
                None => Sync::None,
                Some(s) => {
                    let (name, send) = if let Some(n) = s.strip_suffix('!') {
                        (n.trim(), true)
                    } else if let Some(n) = s.strip_suffix('?') {
                        (n.trim(), false)
                    } else {
                        errors.push(ModelError::Invalid {
                            context: ctx.clone(),
                            message: format!("sync label `{s}` must end in `!` or `?`"),
                        });
                        (s.as_str(), true)
                    };
                    match channels.get(name) {
                        None => {
                            errors.push(ModelError::UnpairedChannel {
                                context: ctx.clone(),
                                channel: name.to_string(),
                                missing: "declared",
                            });
                            Sync::None
                        }
                        Some(&c) if send => {
                            senders[c].push(ai);
                            Sync::Send(c)
                        }
                        Some(&c) => {
                            receivers[c].push((ai, ei));
                            Sync::Receive(c)
                        }
                    }
                }
            };
            outgoing[source].push(ei);
            pending_updates.push((ai, ei, ctx.clone()));
            edges.push(CompiledEdge { source, target, guard, sync, weight, eager: e.eager, updates: Vec::new() });
        }
        automata.push(CompiledAutomaton {
            name: a.name.clone(),
            initial: *initial,
            locations,
            edges,
            outgoing,
            locals: locals.clone(),
            location_index: location_index.clone(),
        });
    }

    for (ai, ei, ctx) in pending_updates {
        let mut updates = Vec::new();
        for (ui, src) in def.automata[ai].edges[ei].updates.iter().enumerate() {
            let uctx = format!("{ctx} update {ui}");
            let src = src.trim();
            if let Some(name) = src.strip_prefix("call ") {
                match predictor_index.get(name.trim()) {
                    Some(&p) => updates.push(Update::Call(p)),
                    None => errors.push(ModelError::Invalid { context: uctx, message: format!("unknown procedure `{}`", name.trim()) }),
                }
                continue;
            }
            let Some((lhs, rhs)) = src.split_once(":=") else {
                errors.push(ModelError::Invalid { context: uctx, message: format!("expected `var := expr` or `call name`, got `{src}`") });
                continue;
            };
            let target = match parse_expr(lhs.trim()) {
                Ok(Ast::Name { qualifier, name, .. }) => match lookup(Some(ai), qualifier.as_deref(), &name) {
                    Some(Symbol::Var(v)) => Some(v),
                    _ => {
                        errors.push(ModelError::UnknownVariable { context: uctx.clone(), name: lhs.trim().to_string() });
                        None
                    }
                },
                _ => {
                    errors.push(ModelError::Invalid { context: uctx.clone(), message: format!("cannot assign to `{}`", lhs.trim()) });
                    None
                }
            };
            let value = compile(&mut errors, ai, rhs.trim(), uctx, true);
            if let (Some(t), Some(v)) = (target, value) {
                updates.push(Update::Assign(t, v));
            }
        }
        automata[ai].edges[ei].updates = updates;
    }

    for (c, name) in def.channels.iter().enumerate() {
        for &sa in &senders[c] {
            if !receivers[c].iter().any(|&(ra, _)| ra != sa) {
                errors.push(ModelError::UnpairedChannel {
                    context: def.automata[sa].name.clone(),
                    channel: name.clone(),
                    missing: "receive",
                });
            }
        }
    }

    let mut seen = HashSet::new();
    for a in &def.automata {
        if !seen.insert(a.name.as_str()) {
            continue;
        }
        if b.globals.contains_key(&a.name) {
            errors.push(ModelError::DuplicateId { kind: "automaton/variable", name: a.name.clone() });
        }
    }

    if !errors.is_empty() {
        return Err(errors);
    }
    let clocks = b.vars.iter().enumerate().filter(|(_, v)| v.kind == VarKind::Clock).map(|(i, _)| i).collect();
    Ok(Network {
        vars: b.vars,
        automata,
        channels: def.channels.clone(),
        predictors,
        receivers,
        globals: b.globals,
        automaton_index,
        clocks,
    })
}

impl Network {
    pub fn initial_state(&self) -> NetworkState {
        NetworkState {
            locations: self.automata.iter().map(|a| a.initial).collect(),
            vals: self.vars.iter().map(|v| v.init).collect(),
            time: 0.0,
        }
    }

    pub fn automaton_id(&self, name: &str) -> Option<usize> {
        self.automaton_index.get(name).copied()
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        if let Some((q, n)) = name.split_once('.') {
            let a = &self.automata[self.automaton_id(q)?];
            return a.locals.get(n).copied();
        }
        self.globals.get(name).copied()
    }

    pub fn global_vars(&self) -> impl Iterator<Item = (VarId, &VarInfo)> {
        self.vars.iter().enumerate().filter(|(_, v)| !v.name.contains('.'))
    }

    /// Name resolution for expressions written outside any automaton (queries,
    /// monitors): qualified names reach locations and locals, plain names reach globals.
    pub fn lookup(&self, qualifier: Option<&str>, name: &str) -> Option<Symbol> {
        match qualifier {
            Some(q) => {
                let ai = self.automaton_id(q)?;
                let a = &self.automata[ai];
                if let Some(l) = a.location_id(name) {
                    return Some(Symbol::Location { automaton: ai, location: l });
                }
                a.locals.get(name).map(|&v| Symbol::Var(v))
            }
            None => self.globals.get(name).map(|&v| Symbol::Var(v)),
        }
    }

    /// Parses and resolves an expression in the global scope.
    pub fn compile_expr(&self, src: &str) -> Result<Expr, crate::query::QueryError> {
        let ast = parse_expr(src)?;
        Ok(Expr::resolve(&ast, &|q, n| self.lookup(q, n))?)
    }

    pub fn location_name(&self, automaton: usize, location: usize) -> &str {
        &self.automata[automaton].locations[location].name
    }

    pub fn describe_move(&self, mv: &Move) -> String {
        let edge = |(a, e): (usize, usize)| {
            let aut = &self.automata[a];
            let edge = &aut.edges[e];
            format!(
                "{}: {} -> {}",
                aut.name, aut.locations[edge.source].name, aut.locations[edge.target].name
            )
        };
        match *mv {
            Move::Internal { automaton, edge: e } => edge((automaton, e)),
            Move::Sync { channel, sender, receiver } => {
                format!("{} [{}] {}", edge(sender), self.channels[channel], edge(receiver))
            }
        }
    }

    pub fn describe_state(&self, state: &NetworkState) -> String {
        let mut s = format!("t={}", state.time);
        for (a, &l) in self.automata.iter().zip(&state.locations) {
            s.push_str(&format!(" {}={}", a.name, a.locations[l].name));
        }
        for (v, x) in self.vars.iter().zip(&state.vals) {
            s.push_str(&format!(" {}={}", v.name, x));
        }
        s
    }

    /// Current derivative of every variable.
    pub fn rates_into(&self, locations: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.vars.len(), 0.0);
        for &c in &self.clocks {
            out[c] = 1.0;
        }
        for (a, &l) in self.automata.iter().zip(locations) {
            for &(v, r) in &a.locations[l].rates {
                out[v] += r;
            }
        }
    }

    pub fn rates(&self, state: &NetworkState) -> Vec<f64> {
        let mut out = Vec::new();
        self.rates_into(&state.locations, &mut out);
        out
    }

    fn edge(&self, (a, e): (usize, usize)) -> &CompiledEdge {
        &self.automata[a].edges[e]
    }

    fn guard_holds(&self, edge: &CompiledEdge, state: &NetworkState) -> bool {
        edge.guard.as_ref().is_none_or(|g| g.holds(&state.vals, &state.locations))
    }

    fn guard_set(&self, edge: &CompiledEdge, state: &NetworkState, rates: &[f64]) -> DelaySet {
        match &edge.guard {
            None => DelaySet::all(),
            Some(g) => g.holds_set(&state.vals, rates, &state.locations),
        }
    }

    /// Visits every candidate move from the current locations, ignoring guards.
    fn for_each_candidate(&self, state: &NetworkState, mut f: impl FnMut(Move, &CompiledEdge, Option<&CompiledEdge>)) {
        for (ai, a) in self.automata.iter().enumerate() {
            for &ei in &a.outgoing[state.locations[ai]] {
                let edge = &a.edges[ei];
                match edge.sync {
                    Sync::Receive(_) => {}
                    Sync::None => f(Move::Internal { automaton: ai, edge: ei }, edge, None),
                    Sync::Send(c) => {
                        for &(ra, re) in &self.receivers[c] {
                            let recv = &self.automata[ra].edges[re];
                            if ra != ai && recv.source == state.locations[ra] {
                                f(
                                    Move::Sync { channel: c, sender: (ai, ei), receiver: (ra, re) },
                                    edge,
                                    Some(recv),
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    /// Moves whose guards hold in `state`, each with its evaluated weight.
    /// A send is only enabled together with an enabled receive on another automaton.
    pub fn enabled_moves(&self, state: &NetworkState) -> Vec<EnabledMove> {
        let mut out = Vec::new();
        self.enabled_moves_into(state, &mut out);
        out
    }

    pub fn enabled_moves_into(&self, state: &NetworkState, out: &mut Vec<EnabledMove>) {
        out.clear();
        self.for_each_candidate(state, |mv, edge, recv| {
            if !self.guard_holds(edge, state) || !recv.is_none_or(|r| self.guard_holds(r, state)) {
                return;
            }
            let mut weight = edge.weight.eval(&state.vals, &state.locations);
            if let Some(r) = recv {
                weight *= r.weight.eval(&state.vals, &state.locations);
            }
            out.push(EnabledMove { mv, weight, eager: edge.eager });
        });
    }

    /// Whether every active location invariant holds.
    pub fn invariants_hold(&self, state: &NetworkState) -> bool {
        self.violated_invariant(state).is_none()
    }

    fn violated_invariant(&self, state: &NetworkState) -> Option<usize> {
        self.automata.iter().enumerate().find_map(|(ai, a)| {
            let loc = &a.locations[state.locations[ai]];
            match &loc.invariant {
                Some(inv) if !inv.holds(&state.vals, &state.locations) => Some(ai),
                _ => None,
            }
        })
    }

    fn invariant_set(&self, state: &NetworkState, rates: &[f64]) -> DelaySet {
        let mut set = DelaySet::all();
        for (ai, a) in self.automata.iter().enumerate() {
            if let Some(inv) = &a.locations[state.locations[ai]].invariant {
                set = set.intersect(&inv.holds_set(&state.vals, rates, &state.locations));
                if set.is_empty() {
                    break;
                }
            }
        }
        set
    }

    /// Largest delay for which all active invariants hold throughout.
    /// Exact for invariants that are affine in the delay.
    pub fn max_delay(&self, state: &NetworkState) -> MaxDelay {
        let rates = self.rates(state);
        self.max_delay_with(state, &rates)
    }

    pub fn max_delay_with(&self, state: &NetworkState, rates: &[f64]) -> MaxDelay {
        match self.invariant_set(state, rates).reach_from_zero() {
            None => MaxDelay::Bounded(0.0),
            Some(d) if d.is_infinite() => MaxDelay::Unbounded,
            Some(d) => MaxDelay::Bounded(d),
        }
    }

    /// Admissible delay window and earliest enabling delays of eager and
    /// non-eager moves inside it.
    pub fn timing(&self, state: &NetworkState, rates: &[f64]) -> Timing {
        let max_delay = self.max_delay_with(state, rates);
        let bound = max_delay.bound();
        let mut eager: Option<f64> = None;
        let mut lazy: Option<f64> = None;
        self.for_each_candidate(state, |_, edge, recv| {
            let mut set = self.guard_set(edge, state, rates);
            if let Some(r) = recv {
                if !set.is_empty() {
                    set = set.intersect(&self.guard_set(r, state, rates));
                }
            }
            if bound.is_finite() {
                set = set.clip(bound);
            }
            let Some((t, attained)) = set.earliest() else { return };
            if edge.eager && attained {
                eager = Some(eager.map_or(t, |e| e.min(t)));
            } else {
                lazy = Some(lazy.map_or(t, |e| e.min(t)));
            }
        });
        Timing { max_delay, eager, lazy }
    }

    /// Fires a move: target locations are entered, then the sender's updates
    /// run in order, then the receiver's. Time does not change.
    pub fn apply_move(&self, state: &NetworkState, mv: &Move, rng: &mut dyn RngCore) -> Result<NetworkState, SimError> {
        let mut next = state.clone();
        self.apply_move_in_place(&mut next, mv, rng)?;
        Ok(next)
    }

    pub fn apply_move_in_place(&self, state: &mut NetworkState, mv: &Move, rng: &mut dyn RngCore) -> Result<(), SimError> {
        let (first, second) = match *mv {
            Move::Internal { automaton, edge } => ((automaton, edge), None),
            Move::Sync { sender, receiver, .. } => (sender, Some(receiver)),
        };
        for (a, e) in std::iter::once(first).chain(second) {
            state.locations[a] = self.edge((a, e)).target;
        }
        for ae in std::iter::once(first).chain(second) {
            for u in &self.edge(ae).updates {
                match u {
                    Update::Assign(v, expr) => {
                        let mut x = expr.eval_random(&state.vals, &state.locations, rng);
                        match self.vars[*v].kind {
                            VarKind::Int => x = x.trunc(),
                            VarKind::Clock if x < 0.0 => {
                                return Err(SimError::NegativeClock { clock: self.vars[*v].name.clone(), value: x })
                            }
                            _ => {}
                        }
                        state.vals[*v] = x;
                    }
                    Update::Call(p) => self.predictors[*p].apply(&mut state.vals),
                }
            }
        }
        if let Some(ai) = self.violated_invariant(state) {
            let a = &self.automata[ai];
            return Err(SimError::TargetInvariantViolated {
                automaton: a.name.clone(),
                location: a.locations[state.locations[ai]].name.clone(),
                step: self.describe_move(mv),
                state: self.describe_state(state),
            });
        }
        Ok(())
    }

    /// Lets `dt` time units pass. Every variable moves by `rate * dt`.
    pub fn elapse(&self, state: &NetworkState, dt: f64) -> Result<NetworkState, SimError> {
        let rates = self.rates(state);
        let mut next = state.clone();
        self.elapse_in_place(&mut next, dt, &rates)?;
        Ok(next)
    }

    pub fn elapse_in_place(&self, state: &mut NetworkState, dt: f64, rates: &[f64]) -> Result<(), SimError> {
        if dt < 0.0 || dt.is_nan() {
            return Err(SimError::NegativeDelay(dt));
        }
        if dt == 0.0 {
            return Ok(());
        }
        let within = |set: DelaySet| set.parts().first().is_some_and(|iv| iv.contains(0.0) && iv.contains(dt));
        let ok = within(self.invariant_set(state, rates));
        if ok {
            advance(state, dt, rates);
            if self.invariants_hold(state) {
                return Ok(());
            }
        }
        let ai = self
            .automata
            .iter()
            .enumerate()
            .find(|(ai, a)| {
                a.locations[state.locations[*ai]]
                    .invariant
                    .as_ref()
                    .is_some_and(|inv| !ok && !within(inv.holds_set(&state.vals, rates, &state.locations)) || ok && !inv.holds(&state.vals, &state.locations))
            })
            .map_or(0, |(ai, _)| ai);
        let a = &self.automata[ai];
        Err(SimError::InvariantViolatedDuringDelay {
            automaton: a.name.clone(),
            location: a.locations[state.locations[ai]].name.clone(),
            delay: dt,
        })
    }

    /// Elapse without invariant checks, for probing candidate landing points.
    pub(crate) fn advance_unchecked(&self, state: &mut NetworkState, dt: f64, rates: &[f64]) {
        advance(state, dt, rates);
    }
}

fn advance(state: &mut NetworkState, dt: f64, rates: &[f64]) {
    for (x, &r) in state.vals.iter_mut().zip(rates) {
        if r != 0.0 {
            *x += r * dt;
        }
    }
    state.time += dt;
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Move::Internal { automaton, edge } => write!(f, "{automaton}:{edge}"),
            Move::Sync { channel, sender, receiver } => {
                write!(f, "{}:{}!{channel}?{}:{}", sender.0, sender.1, receiver.0, receiver.1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Automaton, Edge, Location, Variable};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    fn single(locations: Vec<Location>, edges: Vec<Edge>, locals: Vec<Variable>) -> NetworkDef {
        NetworkDef {
            automata: vec![Automaton {
                name: "P".into(),
                initial: locations[0].name.clone(),
                locals,
                locations,
                edges,
            }],
            ..Default::default()
        }
    }

    #[test]
    fn degenerate_network_is_valid() {
        let def = single(vec![Location::new("L")], vec![], vec![]);
        let net = validate_network(&def).unwrap();
        assert_eq!(net.initial_state().locations, vec![0]);
        assert!(net.enabled_moves(&net.initial_state()).is_empty());
        assert_eq!(net.max_delay(&net.initial_state()), MaxDelay::Unbounded);
    }

    #[test]
    fn send_on_undeclared_channel_is_unpaired() {
        let def = single(
            vec![Location::new("L")],
            vec![Edge::new("L", "L").send("go")],
            vec![],
        );
        let errs = validate_network(&def).unwrap_err();
        assert!(matches!(&errs[0], ModelError::UnpairedChannel { channel, .. } if channel == "go"));
    }

    #[test]
    fn send_without_receiver_is_unpaired() {
        let mut def = single(vec![Location::new("L")], vec![Edge::new("L", "L").send("go")], vec![]);
        def.channels.push("go".into());
        let errs = validate_network(&def).unwrap_err();
        assert!(matches!(&errs[0], ModelError::UnpairedChannel { missing: "receive", .. }));
    }

    #[test]
    fn collects_every_violation() {
        let mut def = single(
            vec![Location::new("L").rate("ghost", 1.0), Location::new("L")],
            vec![Edge::new("L", "L").guard("y > 1").weight("-2")],
            vec![Variable::int("x", 0.0), Variable::int("x", 0.0)],
        );
        def.globals.push(Variable::real("g", 0.0));
        let errs = validate_network(&def).unwrap_err();
        let has = |f: &dyn Fn(&ModelError) -> bool| errs.iter().any(f);
        assert!(has(&|e| matches!(e, ModelError::DuplicateId { kind: "variable", .. })));
        assert!(has(&|e| matches!(e, ModelError::DuplicateId { kind: "location", .. })));
        assert!(has(&|e| matches!(e, ModelError::UnknownVariable { name, .. } if name == "y")));
        assert!(has(&|e| matches!(e, ModelError::UnknownVariable { name, .. } if name == "ghost")));
        assert!(has(&|e| matches!(e, ModelError::NegativeConstantWeight { weight, .. } if *weight == -2.0)));
    }

    #[test]
    fn rate_on_clock_is_rejected() {
        let def = single(vec![Location::new("L").rate("c", 2.0)], vec![], vec![Variable::clock("c")]);
        let errs = validate_network(&def).unwrap_err();
        assert!(matches!(&errs[0], ModelError::InvalidRate { .. }));
    }

    #[test]
    fn random_guard_is_rejected() {
        let def = single(vec![Location::new("L")], vec![Edge::new("L", "L").guard("uniform(0, 1) > 0.5")], vec![]);
        assert!(validate_network(&def).is_err());
    }

    #[test]
    fn weights_are_reported_per_move() {
        let def = single(
            vec![Location::new("L"), Location::new("A"), Location::new("B")],
            vec![Edge::new("L", "A").weight("3"), Edge::new("L", "B").weight("1")],
            vec![],
        );
        let net = validate_network(&def).unwrap();
        let moves = net.enabled_moves(&net.initial_state());
        let weights: Vec<f64> = moves.iter().map(|m| m.weight).collect();
        assert_eq!(weights, vec![3.0, 1.0]);
    }

    #[test]
    fn no_guard_holds_means_no_moves() {
        let def = single(
            vec![Location::new("L")],
            vec![Edge::new("L", "L").guard("x > 5")],
            vec![Variable::int("x", 0.0)],
        );
        let net = validate_network(&def).unwrap();
        assert!(net.enabled_moves(&net.initial_state()).is_empty());
    }

    fn sender_receiver() -> NetworkDef {
        NetworkDef {
            channels: vec!["move".into()],
            globals: vec![Variable::real("energy", 0.0)],
            automata: vec![
                Automaton {
                    name: "Env".into(),
                    initial: "W".into(),
                    locals: vec![Variable::clock("x"), Variable::int("n", 0.0)],
                    locations: vec![Location::new("W").invariant("x <= 4")],
                    edges: vec![Edge::new("W", "W")
                        .guard("x >= 4")
                        .send("move")
                        .eager()
                        .update("x := 0")
                        .update("n := n + 1")],
                },
                Automaton {
                    name: "Robot".into(),
                    initial: "Idle".into(),
                    locals: vec![Variable::int("seen", 0.0)],
                    locations: vec![
                        Location::new("Idle").rate("energy", 37.45),
                        Location::new("Busy"),
                    ],
                    edges: vec![
                        Edge::new("Idle", "Busy").receive("move").update("seen := Env.n").update("energy := energy + 374.0"),
                        Edge::new("Busy", "Idle").receive("move"),
                    ],
                },
            ],
            ..Default::default()
        }
    }

    #[test]
    fn synchronized_move_fires_sender_updates_first() {
        let net = validate_network(&sender_receiver()).unwrap();
        let s0 = net.initial_state();
        assert!(net.enabled_moves(&s0).is_empty());
        let s1 = net.elapse(&s0, 4.0).unwrap();
        let moves = net.enabled_moves(&s1);
        assert_eq!(moves.len(), 1);
        assert!(matches!(moves[0].mv, Move::Sync { .. }));
        let s2 = net.apply_move(&s1, &moves[0].mv, &mut rng()).unwrap();
        assert_eq!(s2.time, s1.time);
        let seen = net.var_id("Robot.seen").unwrap();
        assert_eq!(s2.vals[seen], 1.0, "receiver observes the sender's update");
        let energy = net.var_id("energy").unwrap();
        assert!((s2.vals[energy] - (4.0 * 37.45 + 374.0)).abs() < 1e-9);
        assert_eq!(net.location_name(1, s2.locations[1]), "Busy");
    }

    #[test]
    fn empty_update_list_only_moves_location() {
        let def = single(vec![Location::new("A"), Location::new("B")], vec![Edge::new("A", "B")], vec![Variable::int("k", 3.0)]);
        let net = validate_network(&def).unwrap();
        let s0 = net.initial_state();
        let mv = net.enabled_moves(&s0)[0].mv;
        let s1 = net.apply_move(&s0, &mv, &mut rng()).unwrap();
        assert_eq!(s1.locations, vec![1]);
        assert_eq!(s1.vals, s0.vals);
    }

    #[test]
    fn target_invariant_violation_is_reported() {
        let def = single(
            vec![Location::new("A"), Location::new("B").invariant("c <= 1")],
            vec![Edge::new("A", "B")],
            vec![Variable::clock("c")],
        );
        let net = validate_network(&def).unwrap();
        let s = net.elapse(&net.initial_state(), 2.0).unwrap();
        let mv = net.enabled_moves(&s)[0].mv;
        let err = net.apply_move(&s, &mv, &mut rng()).unwrap_err();
        assert!(matches!(err, SimError::TargetInvariantViolated { ref location, .. } if location == "B"));
    }

    #[test]
    fn elapse_integrates_constant_rates() {
        let def = single(
            vec![Location::new("Idle").rate("e", 37.45), Location::new("C").rate("e", 40.45)],
            vec![Edge::new("Idle", "C")],
            vec![Variable::real("e", 0.0)],
        );
        let net = validate_network(&def).unwrap();
        let s = net.elapse(&net.initial_state(), 10.0).unwrap();
        assert!((s.vals[0] - 374.5).abs() < 1e-9);
        assert_eq!(s.time, 10.0);
        let zero = net.elapse(&s, 0.0).unwrap();
        assert_eq!(zero, s);
        let mut c = s.clone();
        c.locations[0] = 1;
        let c2 = net.elapse(&c, 2.0).unwrap();
        assert!((c2.vals[0] - c.vals[0] - 80.9).abs() < 1e-9);
    }

    #[test]
    fn max_delay_cases() {
        let def = single(vec![Location::new("L").invariant("e1 <= 15")], vec![], vec![Variable::clock("e1")]);
        let net = validate_network(&def).unwrap();
        let mut s = net.initial_state();
        s.vals[0] = 5.0;
        assert_eq!(net.max_delay(&s), MaxDelay::Bounded(10.0));
        s.vals[0] = 15.0;
        assert_eq!(net.max_delay(&s), MaxDelay::Bounded(0.0));
        assert!(matches!(net.elapse(&s, 0.5), Err(SimError::InvariantViolatedDuringDelay { .. })));
    }

    #[test]
    fn timing_reports_eager_enabling() {
        let net = validate_network(&sender_receiver()).unwrap();
        let s = net.initial_state();
        let t = net.timing(&s, &net.rates(&s));
        assert_eq!(t.max_delay, MaxDelay::Bounded(4.0));
        assert_eq!(t.eager, Some(4.0));
        assert_eq!(t.lazy, None);
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn delay_additivity(a in 0u32..4096, b in 0u32..4096) {
            // dyadic delays keep the arithmetic exact
            let (a, b) = (a as f64 / 256.0, b as f64 / 256.0);
            let def = single(
                vec![Location::new("L").rate("e", 37.5)],
                vec![],
                vec![Variable::real("e", 0.0), Variable::clock("c")],
            );
            let net = validate_network(&def).unwrap();
            let s = net.initial_state();
            let two = net.elapse(&net.elapse(&s, a).unwrap(), b).unwrap();
            let one = net.elapse(&s, a + b).unwrap();
            prop_assert_eq!(two, one);
        }
    }
}
