//! Ingestion, model files and end-to-end runs on a small synthetic corpus.

use std::fs;

use userprof::domain::{build_domain_model, domain_dataset, DomainDims, DomainLabel, DomainVariant};
use userprof::harness::{
    ingest_bbc, run_experiment, split_dataset, synthetic_news, write_bbc_layout, ExperimentConfig, ModelFile, ModelHeader,
    ModelKind, BBC_FOLDERS,
};
use userprof::nn::{predict, Parameters};
use userprof::text::TextPipeline;
use userprof::Error;

#[test]
fn ingest_sorts_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let docs = synthetic_news(3, 1);
    // write in reverse so directory order cannot match by accident
    let mut rev = docs.clone();
    rev.reverse();
    write_bbc_layout(dir.path(), &rev).unwrap();
    fs::write(dir.path().join("sport").join("000.txt"), b"caf\xe9 owner \xff wins").unwrap();

    let got = ingest_bbc(dir.path()).unwrap();
    assert_eq!(got.len(), 16);
    let ids: Vec<&str> = got.iter().map(|d| d.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    let odd = got.iter().find(|d| d.id == "sport/000.txt").unwrap();
    assert!(odd.text.contains('\u{fffd}'));
    for d in &got {
        let label = d.label.as_deref().unwrap();
        assert!(d.id.starts_with(label));
        label.parse::<DomainLabel>().unwrap();
    }
}

#[test]
fn ingest_rejects_wrong_folders() {
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(ingest_bbc(empty.path()), Err(Error::Data(_))));

    let dir = tempfile::tempdir().unwrap();
    write_bbc_layout(dir.path(), &synthetic_news(1, 0)).unwrap();
    fs::create_dir(dir.path().join("weather")).unwrap();
    let err = ingest_bbc(dir.path()).unwrap_err().to_string();
    assert!(err.contains("weather"), "{err}");

    fs::remove_dir(dir.path().join("weather")).unwrap();
    fs::remove_dir_all(dir.path().join(BBC_FOLDERS[0])).unwrap();
    assert!(ingest_bbc(dir.path()).is_err());
}

fn small_model() -> (ModelFile, userprof::nn::Dataset) {
    let docs = synthetic_news(12, 5);
    let (train, test) = split_dataset(&docs, 0.8, 5).unwrap();
    let texts: Vec<&str> = train.iter().map(|d| d.text.as_str()).collect();
    let pipeline = TextPipeline::fit(&texts, 300).unwrap();
    let dims = DomainDims {
        vocab_size: 300,
        ..DomainDims::default()
    };
    let spec = build_domain_model(DomainVariant::M1Ann, &dims).unwrap();
    let seqs: Vec<_> = test.iter().map(|d| pipeline.encode(&d.text)).collect();
    let labels: Vec<DomainLabel> = test.iter().map(|d| d.label.as_deref().unwrap().parse().unwrap()).collect();
    let set = domain_dataset(&seqs, &labels).unwrap();
    let model = ModelFile {
        header: ModelHeader {
            kind: ModelKind::Domain,
            variant: "M1_ANN".into(),
            table_faithful: false,
            spec: spec.clone(),
            pipeline: Some(pipeline),
            encoder: None,
            metrics: None,
        },
        params: Parameters::init(&spec, 11),
    };
    (model, set)
}

#[test]
fn model_file_round_trip_within_f32_precision() {
    let (model, set) = small_model();
    let bytes = model.to_bytes().unwrap();
    assert_eq!(&bytes[..4], b"PFLM");
    let loaded = ModelFile::from_bytes(&bytes).unwrap();
    assert_eq!(loaded.header, model.header);
    let spec = &model.header.spec;
    let before = predict(spec, &model.params, set.inputs()).unwrap();
    let after = predict(spec, &loaded.params, set.inputs()).unwrap();
    let worst = before
        .data()
        .iter()
        .zip(after.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-6, "max probability difference {worst:e}");
    // loading is a fixed point once weights are f32
    assert_eq!(loaded.to_bytes().unwrap(), bytes);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pflm");
    model.save(&path).unwrap();
    assert_eq!(ModelFile::load(&path).unwrap(), loaded);
}

#[test]
fn corrupt_model_files_are_rejected() {
    let (model, _) = small_model();
    let bytes = model.to_bytes().unwrap();

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(ModelFile::from_bytes(&bad), Err(Error::Format(_))));

    let mut wrong_version = bytes.clone();
    wrong_version[4..8].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(ModelFile::from_bytes(&wrong_version), Err(Error::Format(_))));

    let cut = &bytes[..bytes.len() - 10];
    match ModelFile::from_bytes(cut) {
        Err(e @ Error::Length { expected, found }) => {
            assert_eq!(expected, bytes.len());
            assert_eq!(found, bytes.len() - 10);
            assert!(e.to_string().contains(&bytes.len().to_string()));
        }
        other => panic!("expected a length error, got {other:?}"),
    }
    assert!(matches!(ModelFile::from_bytes(&bytes[..20]), Err(Error::Length { .. })));

    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(ModelFile::from_bytes(&longer), Err(Error::Format(_))));
}

fn smoke_config(data: &std::path::Path, out: &std::path::Path, variant: &str) -> ExperimentConfig {
    ExperimentConfig {
        variant: variant.into(),
        epochs: Some(2),
        data: Some(data.to_path_buf()),
        out_dir: out.to_path_buf(),
        vocab_size: 400,
        ..ExperimentConfig::default()
    }
}

#[test]
fn experiment_outputs_are_deterministic() {
    let data = tempfile::tempdir().unwrap();
    write_bbc_layout(data.path(), &synthetic_news(20, 3)).unwrap();
    for variant in ["M1_ANN", "M3_CNN"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ca = smoke_config(data.path(), a.path(), variant);
        let cb = smoke_config(data.path(), b.path(), variant);
        let out = run_experiment(&ca).unwrap();
        run_experiment(&cb).unwrap();
        assert_eq!(out.curve.rows.len(), 2);
        for name in [format!("{variant}_curve.csv"), format!("{variant}.pflm"), "results.csv".into()] {
            let x = fs::read(a.path().join(&name)).unwrap();
            let y = fs::read(b.path().join(&name)).unwrap();
            assert_eq!(x, y, "{name} differs between identical runs");
        }
        let curve = fs::read_to_string(a.path().join(format!("{variant}_curve.csv"))).unwrap();
        assert!(curve.starts_with("epoch,train_acc,train_loss,test_acc,test_loss\n"));
        let results = fs::read_to_string(a.path().join("results.csv")).unwrap();
        assert!(results.starts_with("model,epochs,train_acc,test_acc\n"));
    }
}

#[test]
fn glove_initialized_run() {
    let data = tempfile::tempdir().unwrap();
    write_bbc_layout(data.path(), &synthetic_news(10, 8)).unwrap();
    let out = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        glove: Some(Default::default()),
        ..smoke_config(data.path(), out.path(), "M1_ANN")
    };
    let run = run_experiment(&config).unwrap();
    assert!(run.model.params.all_finite());
}

#[test]
fn synthetic_news_is_learnable() {
    let data = tempfile::tempdir().unwrap();
    write_bbc_layout(data.path(), &synthetic_news(60, 21)).unwrap();
    let out = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        epochs: Some(15),
        ..smoke_config(data.path(), out.path(), "M1_ANN")
    };
    let run = run_experiment(&config).unwrap();
    println!("{:?}", run.metrics);
    assert!(run.metrics.test_acc > 0.9, "{:?}", run.metrics);
}

#[test]
fn phase_two_experiment_writes_outputs() {
    let out = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        phase: 2,
        variant: "P2_M1_SMALL".into(),
        epochs: Some(2),
        n_users: 300,
        out_dir: out.path().to_path_buf(),
        table_faithful: true,
        ..ExperimentConfig::default()
    };
    let run = run_experiment(&config).unwrap();
    assert_eq!(run.model.header.spec.param_count(), 231);
    let loaded = ModelFile::load(&out.path().join("P2_M1_SMALL.pflm")).unwrap();
    assert!(loaded.header.encoder.is_some());
}

#[test]
fn stage_is_named_in_errors() {
    let out = tempfile::tempdir().unwrap();
    let data = tempfile::tempdir().unwrap();
    let err = run_experiment(&smoke_config(data.path(), out.path(), "M1_ANN")).unwrap_err();
    assert!(err.to_string().starts_with("ingest:"), "{err}");
    assert!(matches!(err.root(), Error::Data(_)));
}
