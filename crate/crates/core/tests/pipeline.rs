//! End-to-end runs across the optimizer, ensemble, persistence and report layers.

use adabo::bench::{load_ensembles, write_ensembles, SyntheticKind};
use adabo::report::parse_table;
use adabo::*;

fn quick(variant: Variant, selection: SelectionKind) -> OptimizerConfig {
    OptimizerConfig {
        variant,
        selection,
        iterations: 6,
        mle_restarts: 2,
        gpi: GpiConfig { trial_threshold: 4, mle_restarts: 2, ..GpiConfig::default() },
        gpi_condition: GpiCondition::Periodic { period: 3 },
        maximizer: MaximizerBudget { seed_count: 64, refine_top: 2, refine_steps: 20, ..MaximizerBudget::default() },
        ..OptimizerConfig::default()
    }
}

fn all_variants() -> Vec<NamedConfig> {
    Variant::ALL
        .into_iter()
        .flat_map(|v| {
            let sels: &[SelectionKind] =
                if v.is_adaptive() { &[SelectionKind::Uniform, SelectionKind::Categorical] } else { &[SelectionKind::Uniform] };
            sels.iter().map(move |&s| NamedConfig { label: format!("{v}-{}", s.name()), config: quick(v, s) })
        })
        .collect()
}

fn settings(obj: &SyntheticObjective) -> EnsembleSettings {
    EnsembleSettings {
        objective_name: obj.label(),
        lower_bound: obj.lower_bound(),
        n_init: 12,
        seeds: vec![0, 1, 2],
        shared_init: true,
    }
}

#[test]
fn every_variant_completes_and_records_gpi_events() {
    let obj = SyntheticObjective::new(SyntheticKind::Sphere, 3).unwrap();
    let ensembles = run_ensemble(&obj, &all_variants(), &settings(&obj)).unwrap();
    assert_eq!(ensembles.len(), 10);
    for e in &ensembles {
        assert_eq!(e.aborted_runs(), 0, "{}", e.label);
        for r in &e.runs {
            assert_eq!(r.history.records.len(), 6);
            let events: Vec<usize> = r.history.records.iter().filter(|x| x.gpi_event).map(|x| x.iteration).collect();
            if e.variant.uses_gpi() {
                assert_eq!(events, vec![1, 4], "{}", e.label);
            } else {
                assert!(events.is_empty(), "{}", e.label);
            }
            let n_acq = if e.variant.is_adaptive() { 3 } else { 1 };
            assert!(r.history.records.iter().all(|x| x.acquisition < n_acq));
        }
    }
}

#[test]
fn quartile_curves_never_increase() {
    let obj = SyntheticObjective::new(SyntheticKind::AlpineN2, 2).unwrap();
    let configs = vec![
        NamedConfig { label: "bo".into(), config: quick(Variant::Bo, SelectionKind::Uniform) },
        NamedConfig { label: "iada".into(), config: quick(Variant::BoIAda, SelectionKind::Categorical) },
    ];
    for e in run_ensemble(&obj, &configs, &settings(&obj)).unwrap() {
        let q = quartile_curves(&e).unwrap();
        for curve in &q {
            assert!(curve.windows(2).all(|w| w[1] <= w[0]), "{}: {curve:?}", e.label);
        }
        for i in 0..e.iterations {
            assert!((0..4).all(|k| q[k][i] <= q[k + 1][i]));
        }
    }
}

#[test]
fn persisted_ensembles_reproduce_the_report() {
    let obj = SyntheticObjective::new(SyntheticKind::Sphere, 2).unwrap();
    let s = settings(&obj);
    let reference = run_ensemble(
        &obj,
        &[
            NamedConfig { label: "bo-a".into(), config: quick(Variant::Bo, SelectionKind::Uniform) },
            NamedConfig {
                label: "bo-b".into(),
                config: OptimizerConfig { acquisition: AcquisitionKind::ucb(), ..quick(Variant::Bo, SelectionKind::Uniform) },
            },
        ],
        &s,
    )
    .unwrap();
    let challengers = run_ensemble(
        &obj,
        &[NamedConfig { label: "gpi-iada".into(), config: quick(Variant::BoGpiIAda, SelectionKind::Categorical) }],
        &s,
    )
    .unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_ensembles(&dir.path().join("r"), &reference).unwrap();
    write_ensembles(&dir.path().join("c"), &challengers).unwrap();
    let reference2 = load_ensembles(&dir.path().join("r")).unwrap();
    let challengers2 = load_ensembles(&dir.path().join("c")).unwrap();
    assert_eq!(reference, reference2);
    assert_eq!(challengers, challengers2);

    let table = emit_table(&wcri_table(&reference, &challengers).unwrap(), '\t');
    assert_eq!(table, emit_table(&wcri_table(&reference2, &challengers2).unwrap(), '\t'));
    let rows = parse_table(&table, '\t').unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].values, [0.0; 5]);
}

#[test]
fn identical_configs_under_shared_init_give_identical_runs() {
    let obj = SyntheticObjective::new(SyntheticKind::Sphere, 2).unwrap();
    let c = quick(Variant::BoAda, SelectionKind::Categorical);
    let configs = vec![
        NamedConfig { label: "x".into(), config: c.clone() },
        NamedConfig { label: "y".into(), config: c },
    ];
    let e = run_ensemble(&obj, &configs, &settings(&obj)).unwrap();
    assert_eq!(e[0].runs, e[1].runs);
    assert_eq!(e[0].config_digest, e[1].config_digest);
}
