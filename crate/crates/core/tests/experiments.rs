use trip_neighbors::eval::{self, sweep_neighbors, DataSource, SweepResult};
use trip_neighbors::synth::{self, SynthParams};
use trip_neighbors::MetricVariant;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let (ds, _) = synth::generate(&SynthParams::new(11, &[4])).unwrap();
    let run =
        || -> SweepResult { sweep_neighbors(&ds, MetricVariant::Ordered, 12, None, None).unwrap() };
    let one = in_pool(1, run);
    for threads in [2, 4, 8] {
        assert_eq!(in_pool(threads, run), one);
    }
}

#[test]
fn k_max_zero_is_the_self_only_baseline() {
    let (ds, _) = synth::generate(&SynthParams::new(5, &[3])).unwrap();
    let r = sweep_neighbors(&ds, MetricVariant::All2All, 0, None, None).unwrap();
    assert_eq!(r.curve.len(), 1);
    assert_eq!(r.summary.oracle_k, 0);
    assert_eq!(r.summary.nearest_neighbor_mse, None);
    let own = eval::mse(&eval::self_only_predictions(&ds, None).unwrap(), &ds, None).unwrap();
    assert_eq!(r.summary.self_only_mse, own);
}

#[test]
fn neighbors_help_without_outliers() {
    // Diagnostic companion to the outlier-laden default: with clean test
    // trips the pooled medoid beats the self-only one by well over 15%.
    for l in [4, 6, 8, 10] {
        let params = SynthParams {
            outlier_rate: 0.0,
            ..SynthParams::new(42, &[l])
        };
        let (ds, _) = synth::generate(&params).unwrap();
        for variant in MetricVariant::ALL {
            let s = sweep_neighbors(&ds, variant, 30, None, None)
                .unwrap()
                .summary;
            let ratio = s.oracle_mse / s.self_only_mse;
            assert!(ratio <= 0.85, "L={l} {variant}: ratio {ratio}");
            assert!(s.oracle_k > 0);
        }
    }
}

#[test]
fn error_shrinks_with_noise() {
    let mut last = f64::INFINITY;
    for sigma in [0.004, 0.002, 0.001, 0.0005, 0.0] {
        let params = SynthParams {
            noise_sigma: sigma,
            outlier_rate: 0.0,
            ..SynthParams::new(9, &[4])
        };
        let (ds, _) = synth::generate(&params).unwrap();
        let mse = sweep_neighbors(&ds, MetricVariant::All2All, 5, None, None)
            .unwrap()
            .summary
            .self_only_mse;
        assert!(mse < last, "sigma {sigma}: {mse} >= {last}");
        last = mse;
    }
    assert_eq!(last, 0.0);
}

#[test]
fn longer_mixed_histories_predict_better() {
    let source = DataSource::Synthetic(SynthParams::new(42, &[1]));
    let short = eval::experiment_mixed(&source.mixed(&[3, 4, 5, 6], None).unwrap(), 30).unwrap();
    let long = eval::experiment_mixed(&source.mixed(&[7, 8, 9, 10], None).unwrap(), 30).unwrap();
    assert_eq!(short.config.n_eval_entities, 800);
    assert_eq!(short.config.experiment_id, "mixed-L3+4+5+6");
    assert!(long.summary.oracle_mse <= short.summary.oracle_mse);
}

#[test]
fn mixed_on_one_length_reduces_to_a_sweep() {
    let (ds, _) = synth::generate(&SynthParams::new(3, &[5])).unwrap();
    let mixed = eval::experiment_mixed(&ds, 8).unwrap();
    let plain = sweep_neighbors(&ds, MetricVariant::All2All, 8, None, None).unwrap();
    assert_eq!(mixed.curve, plain.curve);
    assert_eq!(mixed.summary, plain.summary);
}

#[test]
fn augment_restricts_error_to_short_entities() {
    let source = DataSource::Synthetic(SynthParams::new(42, &[1]));
    let short = source.dataset_for(2, Some(60)).unwrap();
    let long = source.dataset_for(8, Some(60)).unwrap();
    let out = eval::experiment_augment(&short, &long, &[0, 10, 60, 100], 10, 1).unwrap();
    let ids: Vec<&str> = out
        .results
        .iter()
        .map(|r| r.config.experiment_id.as_str())
        .collect();
    assert_eq!(ids, ["augment-n10", "augment-n60", "augment-n100"]);
    assert_eq!(out.results[0].config.n_eval_entities, 10);
    assert_eq!(out.results[0].config.n_dataset_entities, 70);
    assert_eq!(out.results[2].config.n_eval_entities, 60);
    assert_eq!(out.warnings.len(), 2);
}
