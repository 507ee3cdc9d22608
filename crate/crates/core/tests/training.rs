use std::path::Path;

use swtf_core::dataio::{synth_generate, SynthSpec};
use swtf_core::net::BaseNet;
use swtf_core::optim::LrSchedule;
use swtf_core::pipeline::{
    evaluate, evaluate_snippets, train, Checkpoint, Dataset, MetricsReport, RunConfig,
};

fn small_spec(per_class: usize, test_fraction: f64) -> SynthSpec {
    SynthSpec {
        snippets_per_class: per_class,
        t: 8,
        height: 32,
        width: 32,
        sprite_size: 7.0,
        test_fraction,
        ..SynthSpec::default()
    }
}

fn config(root: &Path, out: &Path, spec: SynthSpec, epochs: u32) -> RunConfig {
    RunConfig {
        dataset_root: root.to_path_buf(),
        t: spec.t,
        synth: spec,
        epochs,
        output_dir: out.to_path_buf(),
        augment: None,
        seed: 4,
        ..RunConfig::default()
    }
}

#[test]
fn memorizes_eight_snippets() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let spec = small_spec(2, 0.0);
    synth_generate(&spec, 3, &root).unwrap();
    let mut config = config(&root, &dir.path().join("run"), spec, 200);
    // Overfitting check: constant, larger step instead of the decaying recipe.
    config.schedule = LrSchedule {
        base_lr: 1e-3,
        period: 1000,
        ..LrSchedule::default()
    };
    let summary = train(&config).unwrap();
    assert_eq!(summary.history.epochs(), 200);
    assert_eq!(
        summary.history.train_acc.last(),
        Some(&1.0),
        "{:?}",
        summary.history.train_acc
    );
    let report = evaluate(
        &Checkpoint::load(&summary.last_checkpoint).unwrap(),
        "train",
    )
    .unwrap();
    assert_eq!(report.accuracy, 1.0, "{}", report.to_text());
}

#[test]
fn untrained_model_is_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let spec = SynthSpec {
        t: 6,
        height: 24,
        width: 24,
        sprite_size: 5.0,
        ..small_spec(250, 0.0)
    };
    synth_generate(&spec, 8, &root).unwrap();
    let config = config(&root, &dir.path().join("run"), spec, 1);
    let dataset = Dataset::open(&config, false).unwrap();
    let split = dataset.load_split("train").unwrap();
    assert_eq!(split.snippets.len(), 1000);
    let net = BaseNet::<f32>::new(config.net.clone(), 21).unwrap();
    let confusion = evaluate_snippets(&net, &config, &split.snippets, &dataset.classes).unwrap();
    let report = MetricsReport::from_confusion(dataset.classes.clone(), confusion, vec![]);
    assert!(
        (report.accuracy - 0.25).abs() <= 0.05,
        "{}",
        report.to_text()
    );
    for row in &report.confusion {
        assert_eq!(row.iter().sum::<u64>(), 250);
    }
}

#[test]
fn lr_drops_tenfold_after_thirty_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    let spec = SynthSpec {
        t: 4,
        height: 16,
        width: 16,
        sprite_size: 4.0,
        speed: 0.5,
        ..small_spec(1, 0.0)
    };
    synth_generate(&spec, 1, &root).unwrap();
    let summary = train(&config(&root, &dir.path().join("run"), spec, 31)).unwrap();
    let lr = &summary.history.lr;
    assert_eq!(lr[0], 1e-5);
    assert_eq!(lr[29], 1e-5);
    assert_eq!(lr[30], 1e-6);
}
