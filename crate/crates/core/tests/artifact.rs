use std::fs;

use discalign::artifact::{load_artifact, save_artifact};
use discalign::ingest::synthetic_splits;
use discalign::training::{train, train_baseline_classifier};
use discalign::{Error, ExperimentConfig};

fn config() -> ExperimentConfig {
    ExperimentConfig {
        learning_rate: 3e-3,
        baseline_learning_rate: 1.5e-2,
        max_epochs: 2,
        batch_size: 8,
        ..ExperimentConfig::default()
    }
}

#[test]
fn round_trip_is_bit_exact() {
    let (splits, tax) = synthetic_splits(3, (10, 3, 3), 4).unwrap();
    let a = train(&config(), &splits, &tax).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_artifact(dir.path(), &a).unwrap();
    let b = load_artifact(dir.path()).unwrap();
    assert!(a.label_table.matrix.iter().zip(b.label_table.matrix.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_eq!(a.model, b.model);
    assert_eq!(a.config, b.config);
    assert_eq!(a.taxonomy, b.taxonomy);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.log, b.log);
    assert_eq!(a.seed, b.seed);
    assert_eq!(a.label_table.provenance, b.label_table.provenance);
    assert_eq!(a.model.predict(&splits.test).unwrap(), b.model.predict(&splits.test).unwrap());
}

#[test]
fn classifier_round_trip_keeps_head_rows() {
    let (splits, tax) = synthetic_splits(3, (10, 3, 3), 4).unwrap();
    let a = train_baseline_classifier(&config(), &splits, &tax).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_artifact(dir.path(), &a).unwrap();
    let b = load_artifact(dir.path()).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(b.label_table.matrix, b.model.head_w);
    assert!(b.label_table.provenance.classifier_head);
}

#[test]
fn unwritable_destination_names_the_path() {
    let (splits, tax) = synthetic_splits(2, (6, 2, 2), 4).unwrap();
    let a = train(&config(), &splits, &tax).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("not-a-dir");
    fs::write(&blocker, "x").unwrap();
    let target = blocker.join("artifact");
    match save_artifact(&target, &a) {
        Err(e @ Error::Io { .. }) => assert!(e.to_string().contains("not-a-dir"), "{e}"),
        other => panic!("expected an I/O error, got {other:?}"),
    }
}

#[test]
fn missing_artifact_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_artifact(dir.path().join("absent")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err}");
    assert!(!err.is_validation());
}

#[test]
fn row_count_mismatch_is_rejected() {
    let (splits, tax) = synthetic_splits(3, (6, 2, 2), 4).unwrap();
    let a = train(&config(), &splits, &tax).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_artifact(dir.path(), &a).unwrap();
    let path = dir.path().join("label_table.tsv");
    let text = fs::read_to_string(&path).unwrap();
    let trimmed: Vec<&str> = text.lines().take(2).collect();
    fs::write(&path, trimmed.join("\n")).unwrap();
    let err = load_artifact(dir.path()).unwrap_err();
    assert!(err.is_validation(), "{err}");
    assert!(err.to_string().contains("2 label rows"), "{err}");
}

#[test]
fn corrupt_model_state_is_rejected() {
    let (splits, tax) = synthetic_splits(2, (6, 2, 2), 4).unwrap();
    let a = train(&config(), &splits, &tax).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_artifact(dir.path(), &a).unwrap();
    let path = dir.path().join("model.bin");
    let bytes = fs::read(&path).unwrap();
    fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
    let err = load_artifact(dir.path()).unwrap_err();
    assert!(err.to_string().contains("model.bin"), "{err}");
}
