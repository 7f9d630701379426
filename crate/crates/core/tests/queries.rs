use shasmc::casestudy::{build_comparison, CaseStudyConfig, CASESTUDY_QUERIES};
use shasmc::model::{Automaton, Location, NetworkDef, Variable};
use shasmc::network::{validate_network, Network};
use shasmc::query::{evaluate, evaluate_all, query_lines, BoundQuery, CheckConfig, QueryError, Verdict};
use shasmc::sim::SimConfig;

fn clock_only() -> Network {
    validate_network(&NetworkDef {
        automata: vec![Automaton {
            name: "P".into(),
            initial: "L".into(),
            locals: vec![Variable::clock("x")],
            locations: vec![Location::new("L")],
            edges: vec![],
        }],
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn clock_maximum_is_the_horizon() {
    let net = clock_only();
    let cfg = CheckConfig::default();
    let r = evaluate(&net, &BoundQuery::new(&net, "E[<=50; 5] (max: P.x)").unwrap(), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Number { value: 50.0 });
    let r = evaluate(&net, &BoundQuery::new(&net, "E[<=50; 5] (min: P.x)").unwrap(), &cfg).unwrap();
    assert_eq!(r.verdict, Verdict::Number { value: 0.0 });
    let r = evaluate(&net, &BoundQuery::new(&net, "Pr[t<=50](<> P.x >= 50)").unwrap(), &cfg).unwrap();
    assert_eq!(r.runs_used, 738);
    assert!(matches!(r.verdict, Verdict::Interval { hi, .. } if hi == 1.0));
    // past the horizon is never reached
    let r = evaluate(&net, &BoundQuery::new(&net, "Pr[t<=50](<> P.x > 50)").unwrap(), &cfg).unwrap();
    assert!(matches!(r.verdict, Verdict::Interval { lo, .. } if lo == 0.0));
}

#[test]
fn resolution_errors() {
    let net = clock_only();
    assert!(matches!(BoundQuery::new(&net, "A[] Q.L"), Err(QueryError::Resolve(_))));
    assert!(matches!(BoundQuery::new(&net, "A[] P.y > 0"), Err(QueryError::Resolve(_))));
    assert!(matches!(BoundQuery::new(&net, "E<> uniform(0, 1) > 0.5"), Err(QueryError::Invalid(_))));
}

#[test]
fn casestudy_queries_parse_against_comparison_model() {
    let net = build_comparison(&CaseStudyConfig::default()).unwrap();
    let lines = query_lines(CASESTUDY_QUERIES);
    assert_eq!(lines.len(), 16);
    for (_, q) in lines {
        BoundQuery::new(&net, q).unwrap();
    }
}

#[test]
fn casestudy_sanity_queries() {
    let net = build_comparison(&CaseStudyConfig::default()).unwrap();
    let cfg = CheckConfig {
        sim: SimConfig::default().with_horizon(3000.0).with_seed(17),
        monitored_runs: 50,
        ..Default::default()
    };
    let qs: Vec<BoundQuery> = [
        "A[] energy >= 0 and energy2 >= 0",
        "A[] not Behavior2.InIdle",
        "E<> Behavior.InIdle",
        "E<> energy > energy2",
        "Behavior.Grab --> Behavior.StandbyB or Behavior.StandbyC",
    ]
    .iter()
    .map(|q| BoundQuery::new(&net, q).unwrap())
    .collect();
    let rs: Vec<Verdict> = evaluate_all(&net, &qs, &cfg).into_iter().map(|r| r.unwrap().verdict).collect();
    assert!(rs.iter().all(|v| v.is_positive()), "{rs:?}");
}
