use ksanon_core::audit::audit_releases;
use ksanon_core::{
    AttributeValue, Engine, EngineConfig, GeneralizationRule, GeneralizerKind, IncomingTuple, LossMetric, RuleSet, Tau,
};
use proptest::prelude::*;

const PLACES: [[&str; 3]; 6] = [
    ["Paris", "France", "EU"],
    ["Lyon", "France", "EU"],
    ["Madrid", "Spain", "EU"],
    ["Seville", "Spain", "EU"],
    ["Austin", "Texas", "US"],
    ["Dallas", "Texas", "US"],
];

fn rules(metric: LossMetric) -> Vec<GeneralizationRule> {
    vec![
        GeneralizationRule::new(0, GeneralizerKind::NumericInterval).quasi_identifier(),
        GeneralizationRule::new(1, GeneralizerKind::CategoricalDgh)
            .quasi_identifier()
            .with_metric(metric),
        GeneralizationRule::new(2, GeneralizerKind::Passthrough).sensitive(),
        GeneralizationRule::new(3, GeneralizerKind::NumericInterval).sensitive(),
        GeneralizationRule::new(4, GeneralizerKind::Passthrough),
    ]
}

#[derive(Debug, Clone)]
struct Case {
    k: usize,
    l: usize,
    delta: u64,
    beta: usize,
    tau: Option<f64>,
    metric: LossMetric,
    rows: Vec<(u8, u16, u8, u8, u8)>,
}

fn arb_case() -> impl Strategy<Value = Case> {
    (1usize..=10, 1usize..=3, 1usize..=20)
        .prop_flat_map(|(k, l, beta)| {
            (
                Just(k),
                Just(l),
                (k as u64)..=200,
                Just(beta),
                proptest::option::of(0.0f64..0.5),
                prop_oneof![Just(LossMetric::Glm), Just(LossMetric::Ncp), Just(LossMetric::Prl)],
                proptest::collection::vec((0u8..30, 0u16..1000, 0u8..6, 0u8..4, 0u8..5), 0..400),
            )
        })
        .prop_map(|(k, l, delta, beta, tau, metric, rows)| Case {
            k,
            l,
            delta,
            beta,
            tau,
            metric,
            rows,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn guarantees_hold_at_every_step(case in arb_case()) {
        let tau = case.tau.map_or(Tau::Auto, Tau::Fixed);
        let config = EngineConfig::new(case.k, case.l, case.delta, case.beta).with_tau(tau);
        let mut engine = Engine::new(config).unwrap();
        engine.apply_rules(rules(case.metric)).unwrap();
        let mut released = Vec::new();
        for (i, (subject, x, place, s, v)) in case.rows.iter().enumerate() {
            let tuple = IncomingTuple::new(
                format!("m{i}"),
                format!("s{subject}"),
                vec![
                    AttributeValue::Numeric(f64::from(*x)),
                    AttributeValue::with_path(PLACES[*place as usize]).unwrap(),
                    AttributeValue::Categorical(format!("c{s}")),
                    AttributeValue::Numeric(f64::from(*v)),
                    AttributeValue::Categorical("note".into()),
                ],
            );
            released.extend(engine.ingest(tuple).unwrap());
            prop_assert!(engine.open_cluster_count() <= case.beta);
            prop_assert!(engine.max_buffered_age().map_or(true, |a| a < case.delta));
        }
        released.extend(engine.flush());
        prop_assert_eq!(engine.buffered_count(), 0);
        prop_assert_eq!(released.len(), case.rows.len());
        for r in &released {
            prop_assert!(r.egress_index - r.arrival_index < case.delta);
        }
        let audit = audit_releases(&released, &RuleSet::new(rules(case.metric)).unwrap(), case.k, case.l);
        prop_assert!(audit.is_clean(), "{:?}", audit.violations);
    }
}

#[test]
fn flush_stamps_last_arrival_index() {
    let config = EngineConfig::new(2, 1, 5, 3);
    let mut engine = Engine::new(config).unwrap();
    engine.apply_rules(rules(LossMetric::Glm)).unwrap();
    for i in 0..3 {
        engine
            .ingest(IncomingTuple::new(
                format!("m{i}"),
                format!("s{i}"),
                vec![
                    AttributeValue::Numeric(f64::from(i)),
                    AttributeValue::with_path(PLACES[0]).unwrap(),
                    AttributeValue::Categorical("c".into()),
                    AttributeValue::Numeric(1.0),
                    AttributeValue::Categorical("note".into()),
                ],
            ))
            .unwrap();
    }
    let out = engine.flush();
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|r| r.egress_index == 2));
}
