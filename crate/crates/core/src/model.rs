//! Declarative network definitions.
//!
//! These types are the model-file schema (TOML or JSON) and the target of the
//! programmatic builders. Expressions are kept as source text and parsed by
//! [`crate::network::validate_network`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::predictor::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    /// Integer-valued; assignments truncate toward zero.
    Int,
    /// Real-valued; may accrue at a constant rate per location.
    Real,
    /// Rate 1 everywhere, never negative.
    Clock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    #[serde(default)]
    pub init: f64,
}

impl Variable {
    pub fn int(name: impl Into<String>, init: f64) -> Self {
        Variable { name: name.into(), kind: VarKind::Int, init }
    }

    pub fn real(name: impl Into<String>, init: f64) -> Self {
        Variable { name: name.into(), kind: VarKind::Real, init }
    }

    pub fn clock(name: impl Into<String>) -> Self {
        Variable { name: name.into(), kind: VarKind::Clock, init: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Location {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant: Option<String>,
    /// Constant derivative of real variables while in this location.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub rates: BTreeMap<String, f64>,
}

impl Location {
    pub fn new(name: impl Into<String>) -> Self {
        Location { name: name.into(), ..Default::default() }
    }

    pub fn invariant(mut self, inv: impl Into<String>) -> Self {
        self.invariant = Some(inv.into());
        self
    }

    pub fn rate(mut self, var: impl Into<String>, rate: f64) -> Self {
        self.rates.insert(var.into(), rate);
        self
    }
}

fn default_weight() -> String {
    "1".to_string()
}

fn is_default_weight(w: &String) -> bool {
    w == "1"
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guard: Option<String>,
    /// `"chan!"` to send, `"chan?"` to receive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sync: Option<String>,
    #[serde(default = "default_weight", skip_serializing_if = "is_default_weight")]
    pub weight: String,
    /// Taken as soon as it becomes enabled.
    #[serde(default, skip_serializing_if = "is_false")]
    pub eager: bool,
    /// `"var := expr"` or `"call predictor"`, applied in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub updates: Vec<String>,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
            guard: None,
            sync: None,
            weight: default_weight(),
            eager: false,
            updates: Vec::new(),
        }
    }

    pub fn guard(mut self, g: impl Into<String>) -> Self {
        self.guard = Some(g.into());
        self
    }

    pub fn send(mut self, chan: &str) -> Self {
        self.sync = Some(format!("{chan}!"));
        self
    }

    pub fn receive(mut self, chan: &str) -> Self {
        self.sync = Some(format!("{chan}?"));
        self
    }

    pub fn weight(mut self, w: impl Into<String>) -> Self {
        self.weight = w.into();
        self
    }

    pub fn eager(mut self) -> Self {
        self.eager = true;
        self
    }

    pub fn update(mut self, u: impl Into<String>) -> Self {
        self.updates.push(u.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Automaton {
    pub name: String,
    pub initial: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub locals: Vec<Variable>,
    pub locations: Vec<Location>,
    #[serde(default)]
    pub edges: Vec<Edge>,
}

/// A predictor whose state is stored in global variables. Declaring it creates
/// `TI1..TI5`, `goIdle`, `q2`, `q3`, `counter`, `env_0..env_19`, `arrivals` and
/// `decisions`, each prefixed with `prefix`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorDecl {
    pub name: String,
    /// Variable holding the value to record when `call <name>` runs.
    pub value: String,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "uniform_prior")]
    pub initial_weights: [u32; 5],
    #[serde(default = "default_true")]
    pub initial_go_idle: bool,
    #[serde(default)]
    pub sort_batches: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prefix: String,
}

fn uniform_prior() -> [u32; 5] {
    [4; 5]
}

fn default_true() -> bool {
    true
}

impl PredictorDecl {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        PredictorDecl {
            name: name.into(),
            value: value.into(),
            thresholds: Thresholds::default(),
            initial_weights: uniform_prior(),
            initial_go_idle: true,
            sort_batches: false,
            prefix: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NetworkDef {
    #[serde(default)]
    pub channels: Vec<String>,
    #[serde(default)]
    pub globals: Vec<Variable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictors: Vec<PredictorDecl>,
    #[serde(default)]
    pub automata: Vec<Automaton>,
}
