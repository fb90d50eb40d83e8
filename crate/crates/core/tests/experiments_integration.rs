use std::path::PathBuf;

use proptest::prelude::*;

use critbubble::config::{DomainChoice, LabConfig, ThetaKind};
use critbubble::constants::SobolevConstants;
use critbubble::experiments::{
    refine_study, rendered_output, run, ExperimentConfig, ExperimentKind, RecordStore, StudyTarget, Table,
};
use critbubble::variational::{minimize_s_lambda, MinimizeOptions, MinimizeReport};
use critbubble::Error;

fn lab_strategy() -> impl Strategy<Value = LabConfig> {
    (3usize..8, 0.1f64..5.0, 0.0f64..3.0, 0.5f64..4.0, any::<bool>(), 0.0f64..2.0, 0.5f64..3.0, any::<bool>(), 64usize..1024)
        .prop_map(|(n, p0, beta, k, power, c, m, annulus, grid_m)| LabConfig {
            n,
            p0,
            beta,
            k,
            theta: if power { ThetaKind::Power } else { ThetaKind::Zero },
            theta_c: c,
            theta_m: m,
            domain: if annulus { DomainChoice::Annulus } else { DomainChoice::Ball },
            radius: 1.0,
            eps_hole: 0.2,
            grid_m,
            grid_ratio: 0.97,
        })
}

proptest! {
    #[test]
    fn lab_config_roundtrip(cfg in lab_strategy()) {
        prop_assert_eq!(LabConfig::parse(&cfg.emit()).unwrap(), cfg);
    }

    #[test]
    fn experiment_config_roundtrip(
        lab in lab_strategy(),
        kind in 0usize..9,
        lambda in prop::option::of(-5.0f64..50.0),
        steps in prop::option::of(2usize..40),
        seed in any::<u64>(),
    ) {
        let mut c = ExperimentConfig::new(lab, ExperimentKind::ALL[kind]);
        c.params.lambda = lambda;
        c.params.steps = steps;
        c.seed = seed;
        c.output = Some(PathBuf::from("results/out.json"));
        prop_assert_eq!(ExperimentConfig::parse(&c.emit()).unwrap(), c);
    }

    #[test]
    fn table_csv_roundtrip(rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 0..10)) {
        let t = Table { header: vec!["a".into(), "b".into(), "c".into()], rows };
        prop_assert_eq!(Table::from_csv(&t.to_csv().unwrap()).unwrap(), t);
    }
}

#[test]
fn minimize_report_json_roundtrip() {
    let c = ExperimentConfig::parse("kind=minimize\nn=5\nbeta=1\nk=2\ngrid_M=64\n").unwrap();
    let rep = minimize_s_lambda(
        &c.lab.weight().unwrap(),
        &c.lab.domain().unwrap(),
        &c.lab.grid().unwrap(),
        18.0,
        &MinimizeOptions::default(),
    )
    .unwrap();
    let back: MinimizeReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn malformed_key_names_the_key() {
    let e = ExperimentConfig::parse("kind=eigen\nn=3\nbetta=2\n").unwrap_err();
    match e {
        Error::Config { key, .. } => assert_eq!(key, "betta"),
        other => panic!("unexpected error {other}"),
    }
    let e = LabConfig::parse("grid_M=lots\n").unwrap_err().to_string();
    assert!(e.contains("grid_M"), "{e}");
}

#[test]
fn constants_run_matches_recompute() {
    let c = ExperimentConfig::parse("kind=constants\nn=3\nhardy_samples=10\n").unwrap();
    let rec = run(&c, None).unwrap();
    let fresh = SobolevConstants::compute(3).unwrap();
    assert_eq!(rec.payload["K1"].as_f64().unwrap(), fresh.k1);
    assert_eq!(rec.payload["S"].as_f64().unwrap(), fresh.s);
    assert!(rec.checks.iter().all(|c| c.pass));
}

#[test]
fn fresh_runs_are_deterministic_and_cache_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = "kind=curve\nn=4\nbeta=1\nk=2\ngrid_M=64\nlambda_from=0\nlambda_to=10\nsteps=5\nseed=3\n";
    let mut c = ExperimentConfig::parse(text).unwrap();
    c.output = Some(dir.path().join("a.csv"));
    run(&c, None).unwrap();
    c.output = Some(dir.path().join("b.csv"));
    run(&c, None).unwrap();
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.csv")).unwrap());

    let store = RecordStore::new(dir.path().join("cache"));
    c.output = None;
    let first = run(&c, Some(&store)).unwrap();
    let stored = std::fs::read(store.path_for(&first.cache_key)).unwrap();
    let second = run(&c, Some(&store)).unwrap();
    assert_eq!(first, second);
    assert_eq!(stored, std::fs::read(store.path_for(&first.cache_key)).unwrap());
    assert_eq!(rendered_output(&second).unwrap().as_bytes(), &a[..]);
}

#[test]
fn json_payload_has_stable_key_order() {
    let c = ExperimentConfig::parse("kind=eigen\nn=3\ngrid_M=64\ngrid_ratio=1\n").unwrap();
    let a = rendered_output(&run(&c, None).unwrap()).unwrap();
    let b = rendered_output(&run(&c, None).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn eigen_refinement_is_second_order() {
    let c = ExperimentConfig::parse("kind=eigen\nn=3\ngrid_ratio=1\n").unwrap();
    let t = refine_study(&c, &[50, 100, 200, 400], StudyTarget::Eigen, Some(std::f64::consts::PI.powi(2))).unwrap();
    let order = t.observed_order.unwrap();
    assert!((order - 2.0).abs() < 0.1, "{order}");
}

#[test]
fn minimize_refinement_is_nonincreasing() {
    let c = ExperimentConfig::parse("kind=minimize\nn=5\nbeta=1\nk=2\nlambda=19\n").unwrap();
    let t = refine_study(&c, &[64, 128, 256], StudyTarget::Minimize, None).unwrap();
    assert!(t.rows.windows(2).all(|p| p[1].value <= p[0].value * (1.0 + 1e-10)), "{:?}", t.rows);
}
