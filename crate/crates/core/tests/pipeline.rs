use gapcast::data::{Normalization, SineStream, SporadicSeries};
use gapcast::eval::{predict, Traces};
use gapcast::ingest::apply_cutoff;
use gapcast::model::{load_model, save_model, ForecastModel, Variant};
use gapcast::pipeline::{ablate, prepare, prepare_raw, run, Ablation, PipelineConfig};
use gapcast::train::TrainConfig;

fn series(seed: u64) -> SporadicSeries<f64> {
    let stream = SineStream {
        steps: 160,
        offset: 20.0,
        amplitude: 2.0,
        seed,
        ..SineStream::default()
    };
    SporadicSeries::from_events(&stream.events::<f64>(), 2).unwrap()
}

fn config(variant: Variant) -> PipelineConfig {
    PipelineConfig {
        variant,
        train: TrainConfig {
            ar: 4,
            hidden: 6,
            epochs: 3,
            batch_size: 16,
            learning_rate: 5e-3,
            seed: 3,
            ..TrainConfig::default()
        },
        cutoffs: vec![20.0, f64::INFINITY],
        ..PipelineConfig::default()
    }
}

#[test]
fn statistics_come_from_the_training_split_only() {
    let s = series(1);
    let cfg = config(Variant::Simple);
    let (train_raw, test_raw) = prepare_raw(&s, &cfg).unwrap();
    let p = prepare(&s, &cfg).unwrap();
    assert_eq!(p.stats, Normalization::fit(&train_raw).unwrap());
    assert_ne!(p.stats, Normalization::fit(&test_raw).unwrap());
    assert_eq!(p.test.normalization.as_ref(), Some(&p.stats));
    assert_eq!(p.test.len(), test_raw.len());
}

#[test]
fn runs_are_bitwise_reproducible_for_every_variant() {
    let s = series(2);
    for variant in Variant::ALL {
        let cfg = config(variant);
        let a = run(&s, &cfg).unwrap();
        let b = run(&s, &cfg).unwrap();
        assert_eq!(a.to_report(&cfg), b.to_report(&cfg));
        assert_eq!(a.model, b.model);
        let traces = |o: &gapcast::pipeline::RunOutcome| {
            Traces::collect(&o.predictions, &o.prepared.test, &apply_cutoff(&o.prepared.test, 30.0)).to_csv()
        };
        assert_eq!(traces(&a), traces(&b));
        assert_eq!(a.history.len(), 3);
        assert_eq!(a.reports.len(), 2);
    }
}

#[test]
fn zero_epochs_return_the_initialization() {
    let s = series(3);
    let cfg = PipelineConfig {
        train: TrainConfig { epochs: 0, ..config(Variant::Velocity).train },
        ..config(Variant::Velocity)
    };
    let out = run(&s, &cfg).unwrap();
    let init = ForecastModel::new(Variant::Velocity, 2, 6, out.prepared.stats.clone(), 3).unwrap();
    assert_eq!(out.model, init);
    assert!(out.history.is_empty());
}

#[test]
fn checkpoint_reload_predicts_identically() {
    let s = series(4);
    let out = run(&s, &config(Variant::BiLayer)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_model(&out.model, &path).unwrap();
    let back: ForecastModel<f64> = load_model(&path).unwrap();
    assert_eq!(back, out.model);
    assert_eq!(predict(&back, &out.prepared.test).unwrap(), out.predictions);
}

#[test]
fn ablation_baseline_is_the_plain_run() {
    let s = series(5);
    let cfg = config(Variant::Simple);
    let report = ablate(&s, &cfg, Ablation::UnmaskedLoss).unwrap();
    assert_eq!(report.baseline, run(&s, &cfg).unwrap().reports);
    assert_eq!(report.ablated, run(&s, &cfg.with_ablation(Ablation::UnmaskedLoss)).unwrap().reports);
    assert!(report.to_report().starts_with("ablation=unmasked-loss\n"));
    assert_eq!("no-imputation".parse::<Ablation>().unwrap(), Ablation::NoImputation);
    assert!("none".parse::<Ablation>().is_err());
}
