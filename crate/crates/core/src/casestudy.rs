//! The sorting-cell case study: a robot arm that picks boxes at A and drops
//! them at B or C, an environment that delivers boxes, and a predictor that
//! decides whether the arm should go idle between boxes.
//!
//! Robot cycle (clock `e1`, energy accrued on the robot's energy variable):
//!
//! ```text
//! Idle | InIdle | StandbyB | StandbyC --move?--> ReadyA     travel to A
//! ReadyA    --e1 >= to_a-->        Grab                     GoR := 0
//! Grab      --e1 >= handling-->    BoxMovedB | BoxMovedC    by target
//! BoxMovedX --e1 >= a_to_x-->      StandbyX                 GoR := 1
//! StandbyX  --idle guard-->        InIdle                   adaptive / always-idle only
//! ```
//!
//! Move costs are charged when a move starts; locations accrue their dwell
//! rate. The environment waits until the robot is free again plus a gap drawn
//! from one of five ranges, delivers the box and records the gap with the
//! predictor. In the comparison network it delivers each box on `move` and
//! then on `move2` at the same instant, so both robots see the same stream.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Automaton, Edge, Location, NetworkDef, PredictorDecl, Variable};
use crate::network::{validate_network, ModelError, Network};
use crate::predictor::{Thresholds, INTERVALS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CaseStudyError {
    #[error("inconsistent specification: {0}")]
    SpecInconsistent(String),
    #[error("idling never pays off: the idle rate is not below the standby rate")]
    NoBreakEven,
    #[error("case-study model failed validation: {0:?}")]
    Model(Vec<ModelError>),
}

/// Move costs in J and dwell rates in J/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyTable {
    pub a_to_b: f64,
    pub a_to_c: f64,
    pub b_to_a: f64,
    pub c_to_a: f64,
    pub b_to_idle: f64,
    pub c_to_idle: f64,
    pub idle_to_a: f64,
    pub rate_a: f64,
    pub rate_b: f64,
    pub rate_c: f64,
    pub rate_idle: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            a_to_b: 374.0,
            a_to_c: 293.3,
            b_to_a: 196.1,
            c_to_a: 125.7,
            b_to_idle: 198.6,
            c_to_idle: 145.0,
            idle_to_a: 112.3,
            rate_a: 40.20,
            rate_b: 39.87,
            rate_c: 40.45,
            rate_idle: 37.45,
        }
    }
}

impl EnergyTable {
    pub fn validate(&self) -> Result<(), CaseStudyError> {
        let all = [
            self.a_to_b,
            self.a_to_c,
            self.b_to_a,
            self.c_to_a,
            self.b_to_idle,
            self.c_to_idle,
            self.idle_to_a,
            self.rate_a,
            self.rate_b,
            self.rate_c,
            self.rate_idle,
        ];
        if all.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(CaseStudyError::SpecInconsistent("energy entries must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Standby {
    B,
    C,
}

/// Dwell time at which going idle and staying in standby cost the same:
/// `go_idle + idle_rate * t + idle_to_a = standby_rate * t + return_cost`.
pub fn break_even_dwell(table: &EnergyTable, from: Standby) -> Result<f64, CaseStudyError> {
    let (go, ret, rate) = match from {
        Standby::B => (table.b_to_idle, table.b_to_a, table.rate_b),
        Standby::C => (table.c_to_idle, table.c_to_a, table.rate_c),
    };
    if rate <= table.rate_idle {
        return Err(CaseStudyError::NoBreakEven);
    }
    Ok((go + table.idle_to_a - ret) / (rate - table.rate_idle))
}

/// Energy of one idle cycle minus one standby cycle for the given dwell.
pub fn idle_minus_standby(table: &EnergyTable, from: Standby, dwell: f64) -> f64 {
    let (go, ret, rate) = match from {
        Standby::B => (table.b_to_idle, table.b_to_a, table.rate_b),
        Standby::C => (table.c_to_idle, table.c_to_a, table.rate_c),
    };
    go + table.idle_to_a - ret - (rate - table.rate_idle) * dwell
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    /// Go idle from standby whenever the idle guard holds.
    AdaptiveIdle,
    NeverIdle,
    AlwaysIdle,
}

/// Joint angles in degrees for each pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Poses {
    pub in_idle: [i32; 6],
    pub ready_a: [i32; 6],
    pub standby_b: [i32; 6],
    pub standby_c: [i32; 6],
}

impl Default for Poses {
    fn default() -> Self {
        Poses {
            in_idle: [-8, -79, -87, -105, 87, -51],
            ready_a: [-8, -87, -128, -56, 87, -52],
            standby_b: [177, -123, -80, -66, 90, -46],
            standby_c: [83, -114, -95, -65, 93, -49],
        }
    }
}

/// Move durations in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Durations {
    /// Travel from idle or standby to A.
    pub to_a: f64,
    /// Grabbing the box at A.
    pub handling: f64,
    pub a_to_b: f64,
    pub a_to_c: f64,
}

impl Default for Durations {
    fn default() -> Self {
        Durations { to_a: 5.0, handling: 2.0, a_to_b: 8.0, a_to_c: 12.0 }
    }
}

impl Durations {
    /// Time from receiving a box until the robot is in standby again.
    pub fn busy(&self, to: Standby) -> f64 {
        self.to_a
            + self.handling
            + match to {
                Standby::B => self.a_to_b,
                Standby::C => self.a_to_c,
            }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotSpec {
    pub name: String,
    /// Global variable that accrues this robot's energy.
    pub energy_var: String,
    pub channel: String,
    pub policy: Policy,
    /// Guard of the standby-to-idle edges under the adaptive policy.
    pub idle_guard: String,
    pub poses: Poses,
    pub durations: Durations,
    /// Upper bounds on `e1` while carrying a box to B and C.
    pub deadline_b: f64,
    pub deadline_c: f64,
}

pub const DEFAULT_IDLE_GUARD: &str = "goIdle == 1";

impl Default for RobotSpec {
    fn default() -> Self {
        RobotSpec {
            name: "Behavior".into(),
            energy_var: "energy".into(),
            channel: "move".into(),
            policy: Policy::AdaptiveIdle,
            idle_guard: DEFAULT_IDLE_GUARD.into(),
            poses: Poses::default(),
            durations: Durations::default(),
            deadline_b: 10.0,
            deadline_c: 15.0,
        }
    }
}

impl RobotSpec {
    /// The never-idle baseline robot of the comparison network.
    pub fn baseline() -> Self {
        RobotSpec {
            name: "Behavior2".into(),
            energy_var: "energy2".into(),
            channel: "move2".into(),
            policy: Policy::NeverIdle,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CaseStudyError> {
        let bad = |m: String| Err(CaseStudyError::SpecInconsistent(m));
        let d = &self.durations;
        if [d.to_a, d.handling, d.a_to_b, d.a_to_c].iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad(format!("{}: move durations must be positive", self.name));
        }
        if d.a_to_b > self.deadline_b {
            return bad(format!("{}: A to B takes {} s, deadline is {} s", self.name, d.a_to_b, self.deadline_b));
        }
        if d.a_to_c > self.deadline_c {
            return bad(format!("{}: A to C takes {} s, deadline is {} s", self.name, d.a_to_c, self.deadline_c));
        }
        if self.policy != Policy::AdaptiveIdle && self.idle_guard != DEFAULT_IDLE_GUARD {
            return bad(format!("{}: an idle guard is only meaningful for the adaptive policy", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSpec {
    /// Gap ranges `(lo, hi]` in seconds for the five branches.
    pub ranges: [(f64, f64); INTERVALS],
    pub thresholds: Thresholds,
    pub initial_weights: [u32; INTERVALS],
    pub initial_go_idle: bool,
    /// Sort each completed batch before histogramming it.
    pub sort_batches: bool,
    /// Relative frequency of destination B versus C.
    pub dest_weights: [f64; 2],
}

impl Default for EnvSpec {
    fn default() -> Self {
        EnvSpec {
            ranges: [(0.0, 15.0), (15.0, 44.0), (44.0, 60.0), (60.0, 90.0), (90.0, 150.0)],
            thresholds: Thresholds::default(),
            initial_weights: [4; INTERVALS],
            initial_go_idle: true,
            sort_batches: false,
            dest_weights: [0.5, 0.5],
        }
    }
}

impl EnvSpec {
    /// Sets the thresholds and moves the range boundaries onto them. The last
    /// range keeps its width.
    pub fn with_thresholds(mut self, thresholds: Thresholds) -> Self {
        let t = thresholds.values();
        let width = self.ranges[4].1 - self.ranges[4].0;
        let mut lo = 0.0;
        for k in 0..4 {
            self.ranges[k] = (lo, t[k]);
            lo = t[k];
        }
        self.ranges[4] = (t[3], t[3] + width);
        self.thresholds = thresholds;
        self
    }

    /// Ranges must tile `(0, hi_5]` at the thresholds.
    pub fn validate(&self) -> Result<(), CaseStudyError> {
        let t = self.thresholds.values();
        let mut lo = 0.0;
        for (k, &(a, b)) in self.ranges.iter().enumerate() {
            let hi = if k < 4 { t[k] } else { b.max(t[3]) };
            if a != lo || b != hi || !(b > a) || !b.is_finite() {
                return Err(CaseStudyError::SpecInconsistent(format!(
                    "gap range {} is ({a}, {b}], expected ({lo}, {}] to match thresholds {t:?}",
                    k + 1,
                    if k < 4 { hi.to_string() } else { format!("> {}", t[3]) }
                )));
            }
            lo = b;
        }
        if self.ranges[4].1 <= t[3] {
            return Err(CaseStudyError::SpecInconsistent("last gap range must extend past t4".into()));
        }
        if self.dest_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) || self.dest_weights.iter().sum::<f64>() <= 0.0 {
            return Err(CaseStudyError::SpecInconsistent("destination weights must be non-negative, not both zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseStudyConfig {
    pub energy: EnergyTable,
    /// The adaptive robot; the comparison network adds a never-idle copy.
    pub robot: RobotSpec,
    pub environment: EnvSpec,
}

fn angle_updates(pose: &[i32; 6]) -> impl Iterator<Item = String> + '_ {
    pose.iter().enumerate().map(|(i, a)| format!("angle{} := {a}", i + 1))
}

fn with_updates(mut e: Edge, ups: impl IntoIterator<Item = String>) -> Edge {
    e.updates.extend(ups);
    e
}

/// Robot automaton for `spec`.
pub fn build_robot(spec: &RobotSpec, table: &EnergyTable) -> Result<Automaton, CaseStudyError> {
    spec.validate()?;
    table.validate()?;
    let en = &spec.energy_var;
    let d = &spec.durations;
    let charge = |cost: f64| format!("{en} := {en} + {cost}");
    let mut locals: Vec<Variable> = (1..=6)
        .map(|i| Variable::int(format!("angle{i}"), spec.poses.in_idle[i - 1] as f64))
        .collect();
    locals.extend([
        Variable::clock("e1"),
        Variable::int("FB", 0.0),
        Variable::int("GoR", 1.0),
        Variable::int("target", 0.0),
    ]);
    let locations = vec![
        Location::new("Idle").rate(en, table.rate_idle),
        Location::new("InIdle").rate(en, table.rate_idle),
        Location::new("ReadyA").invariant(format!("e1 <= {}", d.to_a)),
        Location::new("Grab").invariant(format!("e1 <= {}", d.handling)).rate(en, table.rate_a),
        Location::new("BoxMovedB").invariant(format!("e1 <= {}", spec.deadline_b)),
        Location::new("BoxMovedC").invariant(format!("e1 <= {}", spec.deadline_c)),
        Location::new("StandbyB").rate(en, table.rate_b),
        Location::new("StandbyC").rate(en, table.rate_c),
    ];
    let to_ready = |from: &str, cost: f64, fb: u8| {
        let e = Edge::new(from, "ReadyA")
            .receive(&spec.channel)
            .update("target := dest")
            .update(charge(cost))
            .update(format!("FB := {fb}"))
            .update("e1 := 0");
        with_updates(e, angle_updates(&spec.poses.ready_a))
    };
    let mut edges = vec![
        to_ready("Idle", table.idle_to_a, 3),
        to_ready("InIdle", table.idle_to_a, 3),
        to_ready("StandbyB", table.b_to_a, 1),
        to_ready("StandbyC", table.c_to_a, 1),
        Edge::new("ReadyA", "Grab").guard(format!("e1 >= {}", d.to_a)).eager().update("GoR := 0").update("e1 := 0"),
        Edge::new("Grab", "BoxMovedB")
            .guard(format!("e1 >= {} && target == 0", d.handling))
            .eager()
            .update(charge(table.a_to_b))
            .update("e1 := 0")
            .update("FB := 0"),
        Edge::new("Grab", "BoxMovedC")
            .guard(format!("e1 >= {} && target == 1", d.handling))
            .eager()
            .update(charge(table.a_to_c))
            .update("e1 := 0")
            .update("FB := 0"),
        with_updates(
            Edge::new("BoxMovedB", "StandbyB").guard(format!("e1 >= {}", d.a_to_b)).eager().update("GoR := 1"),
            angle_updates(&spec.poses.standby_b),
        ),
        with_updates(
            Edge::new("BoxMovedC", "StandbyC").guard(format!("e1 >= {}", d.a_to_c)).eager().update("GoR := 1"),
            angle_updates(&spec.poses.standby_c),
        ),
    ];
    let idle_guard = match spec.policy {
        Policy::NeverIdle => None,
        Policy::AlwaysIdle => Some("true"),
        Policy::AdaptiveIdle => Some(spec.idle_guard.as_str()),
    };
    if let Some(g) = idle_guard {
        for (from, cost) in [("StandbyB", table.b_to_idle), ("StandbyC", table.c_to_idle)] {
            edges.push(with_updates(
                Edge::new(from, "InIdle").guard(g).eager().update(charge(cost)).update("FB := 2"),
                angle_updates(&spec.poses.in_idle),
            ));
        }
    }
    Ok(Automaton { name: spec.name.clone(), initial: "Idle".into(), locals, locations, edges })
}

/// Environment automaton delivering on each of `channels` in turn.
pub fn build_environment(spec: &EnvSpec, durations: &Durations, channels: &[&str]) -> Result<Automaton, CaseStudyError> {
    spec.validate()?;
    if channels.is_empty() {
        return Err(CaseStudyError::SpecInconsistent("the environment needs at least one channel".into()));
    }
    let locals = vec![
        Variable::clock("x"),
        Variable::real("gap", 0.0),
        Variable::real("wait", 0.0),
        Variable::real("busy", 0.0),
    ];
    let mut locations = vec![Location::new("Start"), Location::new("Wait").invariant("x <= wait")];
    let deliver = |i: usize| if i == 0 { "Deliver".to_string() } else { format!("Deliver{}", i + 1) };
    locations.extend((0..channels.len()).map(|i| Location::new(deliver(i))));
    let mut edges: Vec<Edge> = spec
        .ranges
        .iter()
        .enumerate()
        .map(|(k, (lo, hi))| {
            Edge::new("Start", "Wait")
                .eager()
                .weight(format!("TI{}", k + 1))
                .update(format!("gap := uniform({lo}, {hi})"))
                .update("wait := busy + gap")
        })
        .collect();
    for (dest, to, w) in [(0, Standby::B, spec.dest_weights[0]), (1, Standby::C, spec.dest_weights[1])] {
        edges.push(
            Edge::new("Wait", "Deliver")
                .guard("x >= wait")
                .eager()
                .weight(w.to_string())
                .update(format!("dest := {dest}"))
                .update("b := gap")
                .update("call predictor")
                .update(format!("busy := {}", durations.busy(to))),
        );
    }
    for (i, ch) in channels.iter().enumerate() {
        let to = if i + 1 < channels.len() { deliver(i + 1) } else { "Start".to_string() };
        let mut e = Edge::new(deliver(i), to).send(ch).eager();
        if i + 1 == channels.len() {
            e = e.update("x := 0");
        }
        edges.push(e);
    }
    Ok(Automaton { name: "Environment".into(), initial: "Start".into(), locals, locations, edges })
}

fn network_def(cfg: &CaseStudyConfig, robots: &[RobotSpec]) -> Result<NetworkDef, CaseStudyError> {
    let channels: Vec<&str> = robots.iter().map(|r| r.channel.as_str()).collect();
    let env = build_environment(&cfg.environment, &cfg.robot.durations, &channels)?;
    let mut automata = vec![env];
    for r in robots {
        automata.push(build_robot(r, &cfg.energy)?);
    }
    let mut globals = vec![Variable::int("dest", 0.0), Variable::real("b", 0.0)];
    globals.extend(robots.iter().map(|r| Variable::real(r.energy_var.clone(), 0.0)));
    let e = &cfg.environment;
    Ok(NetworkDef {
        channels: channels.iter().map(|c| c.to_string()).collect(),
        globals,
        predictors: vec![PredictorDecl {
            thresholds: e.thresholds,
            initial_weights: e.initial_weights,
            initial_go_idle: e.initial_go_idle,
            sort_batches: e.sort_batches,
            ..PredictorDecl::new("predictor", "b")
        }],
        automata,
    })
}

/// Environment plus the configured robot.
pub fn casestudy_def(cfg: &CaseStudyConfig) -> Result<NetworkDef, CaseStudyError> {
    network_def(cfg, std::slice::from_ref(&cfg.robot))
}

/// Environment plus the configured robot and a never-idle copy accruing `energy2`.
pub fn comparison_def(cfg: &CaseStudyConfig) -> Result<NetworkDef, CaseStudyError> {
    let baseline = RobotSpec {
        poses: cfg.robot.poses,
        durations: cfg.robot.durations,
        deadline_b: cfg.robot.deadline_b,
        deadline_c: cfg.robot.deadline_c,
        ..RobotSpec::baseline()
    };
    if baseline.name == cfg.robot.name || baseline.energy_var == cfg.robot.energy_var || baseline.channel == cfg.robot.channel {
        return Err(CaseStudyError::SpecInconsistent(
            "the adaptive robot must not reuse the baseline's name, energy variable or channel".into(),
        ));
    }
    network_def(cfg, &[cfg.robot.clone(), baseline])
}

pub fn build(def: &NetworkDef) -> Result<Network, CaseStudyError> {
    validate_network(def).map_err(CaseStudyError::Model)
}

pub fn build_casestudy(cfg: &CaseStudyConfig) -> Result<Network, CaseStudyError> {
    build(&casestudy_def(cfg)?)
}

pub fn build_comparison(cfg: &CaseStudyConfig) -> Result<Network, CaseStudyError> {
    build(&comparison_def(cfg)?)
}

/// Names accepted by [`builtin_def`].
pub const BUILTIN_MODELS: [&str; 2] = ["casestudy", "casestudy-compare"];

pub fn builtin_def(name: &str, cfg: &CaseStudyConfig) -> Option<Result<NetworkDef, CaseStudyError>> {
    match name {
        "casestudy" => Some(casestudy_def(cfg)),
        "casestudy-compare" => Some(comparison_def(cfg)),
        _ => None,
    }
}

/// The verification queries of the case study, one per line.
pub const CASESTUDY_QUERIES: &str = include_str!("casestudy.q");
