use proptest::prelude::*;
use shasmc::casestudy::{build_comparison, CaseStudyConfig};
use shasmc::model::NetworkDef;
use shasmc::network::{validate_network, Network};
use shasmc::query::{evaluate, BoundQuery, CheckConfig};
use shasmc::sim::{simulate_trial, Monitor, SimConfig, Termination, TraceEventKind};

fn from_json(src: &str) -> Network {
    let def: NetworkDef = serde_json::from_str(src).unwrap();
    validate_network(&def).unwrap()
}

// A clock reset somewhere in [1, 2] after each reset.
const TICKER: &str = r#"{
  "globals": [{"name": "count", "kind": "int"}],
  "automata": [{
    "name": "T",
    "initial": "L",
    "locals": [{"name": "x", "kind": "clock"}],
    "locations": [{"name": "L", "invariant": "x <= 2"}],
    "edges": [{"from": "L", "to": "L", "guard": "x >= 1", "updates": ["x := 0", "count := count + 1"]}]
  }]
}"#;

#[test]
fn ticker_gaps_stay_in_window() {
    let net = from_json(TICKER);
    let m = [Monitor::new(&net, "count").unwrap()];
    for trial in 0..20 {
        let trace = simulate_trial(&net, &SimConfig::default().with_horizon(200.0).with_seed(3), &m, trial).unwrap();
        let jumps: Vec<f64> =
            trace.events.iter().filter(|e| matches!(e.kind, TraceEventKind::Jump { .. })).map(|e| e.time).collect();
        let mut last = 0.0;
        for t in &jumps {
            let gap = t - last;
            assert!((1.0 - 1e-9..=2.0 + 1e-9).contains(&gap), "gap {gap}");
            last = *t;
        }
        assert_eq!(trace.terminated_by, Termination::Horizon);
        assert_eq!(m[0].eval(&trace.final_state), jumps.len() as f64);
    }
}

#[test]
fn ticker_rate_matches_renewal_mean() {
    // gaps uniform on [1, 2] have mean 1.5, so about 1000/1.5 ticks by t = 1000
    let net = from_json(TICKER);
    let q = BoundQuery::new(&net, "E[<=1000; 200] (max: count)").unwrap();
    let r = evaluate(&net, &q, &CheckConfig { sim: SimConfig::default().with_seed(8), ..Default::default() }).unwrap();
    let mean = r.estimate.unwrap().mean;
    assert!((mean - 1000.0 / 1.5).abs() < 2.0, "{mean}");
}

#[test]
fn sync_weight_is_sender_times_receiver() {
    let net = from_json(
        r#"{
      "channels": ["c"],
      "automata": [
        {"name": "S", "initial": "A", "locations": [{"name": "A"}, {"name": "B"}],
         "edges": [{"from": "A", "to": "B", "sync": "c!", "eager": true, "weight": "2"}]},
        {"name": "R1", "initial": "W", "locations": [{"name": "W"}, {"name": "Got"}],
         "edges": [{"from": "W", "to": "Got", "sync": "c?"}]},
        {"name": "R2", "initial": "W", "locations": [{"name": "W"}, {"name": "Got"}],
         "edges": [{"from": "W", "to": "Got", "sync": "c?", "weight": "3"}]}
      ]
    }"#,
    );
    let q = BoundQuery::new(&net, "Pr[t<=1](<> R2.Got)").unwrap();
    let cfg = CheckConfig { sim: SimConfig::default().with_seed(1), runs: Some(4000), ..Default::default() };
    let p = evaluate(&net, &q, &cfg).unwrap().estimate.unwrap().mean;
    assert!((p - 0.75).abs() < 0.03, "{p}");
    // exactly one receiver moves
    let both = BoundQuery::new(&net, "E<> R1.Got and R2.Got").unwrap();
    let r = evaluate(&net, &both, &CheckConfig { monitored_runs: 200, ..cfg }).unwrap();
    assert!(!r.verdict.is_positive());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn casestudy_traces_are_well_formed(seed in any::<u64>(), horizon in 1.0f64..2500.0) {
        let net = build_comparison(&CaseStudyConfig::default()).unwrap();
        let m = [Monitor::new(&net, "energy").unwrap(), Monitor::new(&net, "energy2").unwrap()];
        let trace = simulate_trial(&net, &SimConfig::default().with_horizon(horizon).with_seed(seed), &m, 0).unwrap();
        prop_assert_eq!(trace.terminated_by, Termination::Horizon);
        prop_assert_eq!(trace.final_state.time, horizon);
        for w in trace.events.windows(2) {
            prop_assert!(w[0].time <= w[1].time);
            prop_assert!(w[0].values[0] <= w[1].values[0] + 1e-9);
            prop_assert!(w[0].values[1] <= w[1].values[1] + 1e-9);
        }
        prop_assert!(trace.events.last().unwrap().time <= horizon);
    }
}
