//! Windowed arrival predictor.
//!
//! Inter-arrival times are collected in a batch of [`WINDOW`] values. When the
//! batch is complete, the values are histogrammed into five intervals split by
//! four thresholds. The counts become the branch weights of the environment
//! for the next batch, and the idle policy is decided by comparing the short
//! intervals (1 and 2) against the long ones (3, 4 and 5): idling is disabled
//! when short arrivals are at least as frequent.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::VarId;

pub const WINDOW: usize = 20;
pub const INTERVALS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThresholdError {
    #[error("thresholds must satisfy 0 < t1 < t2 < t3 < t4, got {0:?}")]
    NotIncreasing([f64; 4]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct Thresholds([f64; 4]);

impl Thresholds {
    pub fn new(t: [f64; 4]) -> Result<Self, ThresholdError> {
        let ok = t[0] > 0.0 && t.windows(2).all(|w| w[0] < w[1]) && t.iter().all(|x| x.is_finite());
        if ok {
            Ok(Thresholds(t))
        } else {
            Err(ThresholdError::NotIncreasing(t))
        }
    }

    pub fn values(&self) -> [f64; 4] {
        self.0
    }
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds([15.0, 44.0, 60.0, 90.0])
    }
}

impl TryFrom<[f64; 4]> for Thresholds {
    type Error = ThresholdError;
    fn try_from(t: [f64; 4]) -> Result<Self, Self::Error> {
        Thresholds::new(t)
    }
}

impl From<Thresholds> for [f64; 4] {
    fn from(t: Thresholds) -> Self {
        t.0
    }
}

/// Interval index in `1..=5` for a non-negative value. Upper bounds are inclusive.
pub fn interval_of(value: f64, thresholds: &Thresholds) -> usize {
    let t = &thresholds.0;
    if value <= t[0] {
        1
    } else if value <= t[1] {
        2
    } else if value <= t[2] {
        3
    } else if value <= t[3] {
        4
    } else {
        5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// Arrivals in intervals 1 and 2.
    pub q2: u32,
    /// Arrivals in intervals 3, 4 and 5.
    pub q3: u32,
    pub go_idle: bool,
}

impl Decision {
    pub fn from_counts(counts: &[u32; INTERVALS]) -> Self {
        let q2 = counts[0] + counts[1];
        let q3 = counts[2] + counts[3] + counts[4];
        Decision { q2, q3, go_idle: q2 < q3 }
    }
}

/// Predictor state for one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalWindow {
    pub buffer: [f64; WINDOW],
    /// Fill index; the next arrival goes to `buffer[counter]`.
    pub counter: usize,
    pub latest: f64,
    pub counts: [u32; INTERVALS],
    pub go_idle: bool,
    pub thresholds: Thresholds,
    /// Ascending-sorted copy of the last full batch. Only filled when
    /// `sort_batches` is set; the histogram does not depend on it.
    pub scratch: [f64; WINDOW],
    pub sort_batches: bool,
    pub last_decision: Option<Decision>,
}

impl ArrivalWindow {
    /// Fresh window with the given prior weights and initial idle policy.
    pub fn new(thresholds: Thresholds, initial_weights: [u32; INTERVALS], initial_go_idle: bool) -> Self {
        ArrivalWindow {
            buffer: [0.0; WINDOW],
            counter: 0,
            latest: 0.0,
            counts: initial_weights,
            go_idle: initial_go_idle,
            thresholds,
            scratch: [0.0; WINDOW],
            sort_batches: false,
            last_decision: None,
        }
    }

    pub fn with_sorting(mut self, on: bool) -> Self {
        self.sort_batches = on;
        self
    }

    /// Records one inter-arrival time. The 20th value of a batch completes it:
    /// the histogram and the idle decision are recomputed and the fill index
    /// goes back to zero.
    pub fn record_arrival(mut self, value: f64) -> Self {
        self.latest = value;
        if self.counter < WINDOW - 1 {
            self.buffer[self.counter] = value;
            self.counter += 1;
            return self;
        }
        self.buffer[WINDOW - 1] = value;
        if self.sort_batches {
            self.scratch = self.buffer;
            self.scratch.sort_by(f64::total_cmp);
        }
        let mut counts = [0u32; INTERVALS];
        for &v in &self.buffer {
            counts[interval_of(v, &self.thresholds) - 1] += 1;
        }
        let decision = Decision::from_counts(&counts);
        self.counts = counts;
        self.go_idle = decision.go_idle;
        self.last_decision = Some(decision);
        self.counter = 0;
        self
    }

    /// Weights for the five arrival branches: the prior until the first batch
    /// completes, the last histogram afterwards.
    pub fn branch_weights(&self) -> [u32; INTERVALS] {
        self.counts
    }
}

/// Binding of a predictor onto network variables, so its whole state lives in
/// the valuation and is snapshotted and replayed with it.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBinding {
    pub name: String,
    pub value: VarId,
    pub thresholds: Thresholds,
    pub sort_batches: bool,
    pub buffer: [VarId; WINDOW],
    pub counter: VarId,
    pub latest: VarId,
    pub counts: [VarId; INTERVALS],
    pub q2: VarId,
    pub q3: VarId,
    pub go_idle: VarId,
    pub arrivals: VarId,
    pub decisions: VarId,
}

impl PredictorBinding {
    fn load(&self, vals: &[f64]) -> ArrivalWindow {
        let mut w = ArrivalWindow::new(
            self.thresholds,
            self.counts.map(|v| vals[v] as u32),
            vals[self.go_idle] != 0.0,
        )
        .with_sorting(self.sort_batches);
        w.buffer = self.buffer.map(|v| vals[v]);
        w.counter = vals[self.counter] as usize;
        w.latest = vals[self.latest];
        w
    }

    /// Feeds the bound value variable into the window stored in `vals`.
    pub fn apply(&self, vals: &mut [f64]) {
        let window = self.load(vals).record_arrival(vals[self.value]);
        for (slot, v) in self.buffer.iter().zip(window.buffer) {
            vals[*slot] = v;
        }
        vals[self.counter] = window.counter as f64;
        vals[self.latest] = window.latest;
        vals[self.arrivals] += 1.0;
        if let Some(d) = window.last_decision {
            for (slot, c) in self.counts.iter().zip(window.counts) {
                vals[*slot] = c as f64;
            }
            vals[self.q2] = d.q2 as f64;
            vals[self.q3] = d.q3 as f64;
            vals[self.go_idle] = if d.go_idle { 1.0 } else { 0.0 };
            vals[self.decisions] += 1.0;
        }
    }
}
