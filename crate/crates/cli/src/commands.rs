use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use userprof::domain::{build_domain_model, domain_dataset, evaluate_with_loss, predict_domain, DomainDims, DomainLabel, DomainVariant};
use userprof::glove::{export_text, train_glove, CooccurrenceMatrix, GloveConfig, DEFAULT_WINDOW};
use userprof::harness::{
    ingest_bbc, parameter_table, run_experiment, split_dataset, split_stratified, ExperimentConfig, GloveSettings, ModelFile,
    ModelKind,
};
use userprof::interest::{build_interest_model, generate_synthetic_users, predict_interests, read_users_csv, write_users_csv, InterestVariant};
use userprof::profile::{
    load_profile, rerank, save_profile, ConceptScores, DomainModelClassifier, FeedbackEvent, FeedbackOutcome, FeedbackUpdater,
    SearchIndex, EMA_LAMBDA,
};
use userprof::text::{RawDocument, Stopwords, TextPipeline};

use crate::cli::{Command, Common, SplitArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { data, common } => ingest(&data, &common),
        Command::Split { input, split, common } => split_cmd(&input, &split, &common),
        Command::GloveTrain {
            data,
            vocab_size,
            dim,
            window,
            common,
        } => glove_train(&data, vocab_size, dim, window, &common),
        Command::TrainDomain {
            data,
            vocab_size,
            glove,
            glove_epochs,
            split,
            optim,
            common,
        } => {
            let config = ExperimentConfig {
                phase: 1,
                variant: common.variant.clone().unwrap_or_else(|| DomainVariant::M1Ann.tag().into()),
                data: Some(data),
                vocab_size,
                glove: glove.then_some(GloveSettings {
                    epochs: glove_epochs,
                    window: DEFAULT_WINDOW,
                }),
                batch_size: optim.batch_size,
                learning_rate: optim.learning_rate,
                ..experiment_base(&common, &split)
            };
            train(&config)
        }
        Command::TrainInterest {
            data,
            n_users,
            split,
            optim,
            common,
        } => {
            let config = ExperimentConfig {
                phase: 2,
                variant: common.variant.clone().unwrap_or_else(|| InterestVariant::Large.tag().into()),
                data,
                n_users,
                batch_size: optim.batch_size,
                learning_rate: optim.learning_rate,
                ..experiment_base(&common, &split)
            };
            train(&config)
        }
        Command::Evaluate {
            model,
            data,
            test_split,
            split,
            common,
        } => evaluate(&model, &data, test_split.then_some(&split), &common),
        Command::Predict {
            model,
            text,
            file,
            users,
            k,
            common: _,
        } => predict(&model, text, file, users, k),
        Command::Feedback {
            model,
            data,
            profiles,
            user,
            document,
            clicked,
            reading_time,
            threshold,
            common,
        } => {
            let event = FeedbackEvent {
                user_id: user,
                document_id: document,
                clicked,
                reading_time_secs: reading_time,
                timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            };
            let dir = profiles.unwrap_or_else(|| common.out.join("profiles"));
            feedback(&model, &data, &dir, event, threshold)
        }
        Command::Search { data, query, k, common: _ } => {
            let docs = load_documents(&data)?;
            let index = SearchIndex::build(&docs, Stopwords::english());
            for (rank, (doc, score)) in index.search(&query, k).iter().enumerate() {
                println!("{}\t{doc}\t{score:.6}", rank + 1);
            }
            Ok(())
        }
        Command::Rerank {
            data,
            query,
            k,
            model,
            profiles,
            user,
            common,
        } => {
            let dir = profiles.unwrap_or_else(|| common.out.join("profiles"));
            rerank_cmd(&data, &query, k, &model, &dir, &user)
        }
        Command::GenUsers { n, common } => {
            let users = generate_synthetic_users(n, common.seed)?;
            fs::create_dir_all(&common.out)?;
            let path = common.out.join("users.csv");
            write_users_csv(fs::File::create(&path)?, &users)?;
            println!("wrote {} users to {}", users.len(), path.display());
            Ok(())
        }
        Command::ReproTables { data, train, common } => repro_tables(data, train, &common),
    }
}

fn experiment_base(common: &Common, split: &SplitArgs) -> ExperimentConfig {
    ExperimentConfig {
        seed: common.seed,
        epochs: common.epochs,
        out_dir: common.out.clone(),
        table_faithful: common.table_faithful,
        split_fraction: split.fraction,
        stratified: split.stratified,
        ..ExperimentConfig::default()
    }
}

fn train(config: &ExperimentConfig) -> Result<()> {
    let out = run_experiment(config)?;
    let m = &out.metrics;
    println!("model,epochs,train_acc,test_acc");
    println!("{}", m.to_csv_line());
    println!("curve: {}", config.curve_path().display());
    println!("model file: {}", config.model_path().display());
    Ok(())
}

/// A corpus directory, or a JSON-lines file of documents.
fn load_documents(path: &Path) -> Result<Vec<RawDocument>> {
    if path.is_dir() {
        return Ok(ingest_bbc(path)?);
    }
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: RawDocument = serde_json::from_str(&line)
            .map_err(userprof::Error::from)
            .with_context(|| format!("{} line {}", path.display(), i + 1))?;
        docs.push(doc);
    }
    Ok(docs)
}

fn write_jsonl(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for d in docs {
        serde_json::to_writer(&mut f, d)?;
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

fn ingest(data: &Path, common: &Common) -> Result<()> {
    let docs = ingest_bbc(data)?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &docs {
        *counts.entry(d.label.as_deref().unwrap_or("")).or_default() += 1;
    }
    fs::create_dir_all(&common.out)?;
    let path = common.out.join("documents.jsonl");
    write_jsonl(&path, &docs)?;
    let per_label: Vec<String> = counts.iter().map(|(l, n)| format!("{l} {n}")).collect();
    println!("{} documents: {}", docs.len(), per_label.join(", "));
    println!("wrote {}", path.display());
    Ok(())
}

fn split_cmd(input: &Path, split: &SplitArgs, common: &Common) -> Result<()> {
    fs::create_dir_all(&common.out)?;
    let is_csv = input.extension().is_some_and(|e| e == "csv");
    let (n_train, n_test) = if is_csv {
        let users = read_users_csv(fs::File::open(input)?)?;
        let (train, test) = if split.stratified {
            split_stratified(&users, |u| u.interest, split.fraction, common.seed)?
        } else {
            split_dataset(&users, split.fraction, common.seed)?
        };
        write_users_csv(fs::File::create(common.out.join("train.csv"))?, &train)?;
        write_users_csv(fs::File::create(common.out.join("test.csv"))?, &test)?;
        (train.len(), test.len())
    } else {
        let docs = load_documents(input)?;
        let (train, test) = if split.stratified {
            split_stratified(&docs, |d| d.label.clone(), split.fraction, common.seed)?
        } else {
            split_dataset(&docs, split.fraction, common.seed)?
        };
        write_jsonl(&common.out.join("train.jsonl"), &train)?;
        write_jsonl(&common.out.join("test.jsonl"), &test)?;
        (train.len(), test.len())
    };
    println!("train {n_train}, test {n_test}");
    Ok(())
}

fn glove_train(data: &Path, vocab_size: usize, dim: usize, window: usize, common: &Common) -> Result<()> {
    let docs = load_documents(data)?;
    let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
    let pipeline = TextPipeline::fit(&texts, vocab_size)?;
    let corpus: Vec<Vec<u32>> = texts
        .iter()
        .map(|t| {
            pipeline
                .tokens(t)
                .iter()
                .map(|tok| pipeline.vocabulary.index_of(tok))
                .collect()
        })
        .collect();
    let gm = CooccurrenceMatrix::build(&corpus, pipeline.vocabulary.len(), window)?;
    let config = GloveConfig {
        dim,
        epochs: common.epochs.unwrap_or(GloveConfig::default().epochs),
        seed: common.seed,
        ..GloveConfig::default()
    };
    let fit = train_glove(&gm, &config)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join("vectors.txt");
    fs::write(&path, export_text(&fit.params, &pipeline.vocabulary))?;
    println!(
        "{} co-occurring pairs, loss {:.4} -> {:.4}",
        gm.len(),
        fit.initial_loss,
        fit.final_loss()
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn evaluate(model_path: &Path, data: &Path, split: Option<&SplitArgs>, common: &Common) -> Result<()> {
    let model = load_model(model_path)?;
    let h = &model.header;
    let set = match h.kind {
        ModelKind::Domain => {
            let mut docs = load_documents(data)?;
            if let Some(s) = split {
                docs = if s.stratified {
                    split_stratified(&docs, |d| d.label.clone(), s.fraction, common.seed)?.1
                } else {
                    split_dataset(&docs, s.fraction, common.seed)?.1
                };
            }
            let pipeline = h.pipeline.as_ref().context("model file has no text pipeline")?;
            let seqs: Vec<_> = docs.iter().map(|d| pipeline.encode(&d.text)).collect();
            let labels = docs
                .iter()
                .map(|d| {
                    d.label
                        .as_deref()
                        .with_context(|| format!("document {} has no label", d.id))?
                        .parse::<DomainLabel>()
                        .map_err(Into::into)
                })
                .collect::<Result<Vec<_>>>()?;
            domain_dataset(&seqs, &labels)?
        }
        ModelKind::Interest => {
            let mut users = read_users_csv(fs::File::open(data)?)?;
            if let Some(s) = split {
                users = if s.stratified {
                    split_stratified(&users, |u| u.interest, s.fraction, common.seed)?.1
                } else {
                    split_dataset(&users, s.fraction, common.seed)?.1
                };
            }
            let encoder = h.encoder.as_ref().context("model file has no user encoder")?;
            encoder.dataset(&users, h.spec.input_shape[0])?
        }
    };
    let (acc, loss) = evaluate_with_loss(&h.spec, &model.params, &set)?;
    println!("{} n={} accuracy={acc:.4} loss={loss:.4}", h.variant, set.len());
    Ok(())
}

fn predict(model_path: &Path, text: Option<String>, file: Option<PathBuf>, users: Option<PathBuf>, k: usize) -> Result<()> {
    let model = load_model(model_path)?;
    let h = &model.header;
    match h.kind {
        ModelKind::Domain => {
            let text = match (text, file) {
                (Some(t), _) => t,
                (None, Some(f)) => String::from_utf8_lossy(&fs::read(&f)?).into_owned(),
                (None, None) => return Err(userprof::Error::InvalidConfig("predict needs --text or --file".into()).into()),
            };
            let pipeline = h.pipeline.as_ref().context("model file has no text pipeline")?;
            let pred = predict_domain(&h.spec, &model.params, pipeline, &text)?;
            println!("{}", pred.label);
            for (label, p) in pred.labeled() {
                println!("  {label:<14}{p:.4}");
            }
        }
        ModelKind::Interest => {
            let path = users.ok_or_else(|| userprof::Error::InvalidConfig("predict needs --users for an interest model".into()))?;
            let encoder = h.encoder.as_ref().context("model file has no user encoder")?;
            for user in read_users_csv(fs::File::open(&path)?)? {
                let encoded = encoder.encode(&user, h.spec.input_shape[0])?;
                let top = predict_interests(&h.spec, &model.params, &encoded.features, k)?;
                let shown: Vec<String> = top.iter().map(|(i, p)| format!("{i} ({p:.3})")).collect();
                let flag = if encoded.unseen.is_empty() {
                    String::new()
                } else {
                    format!(" [unseen: {}]", encoded.unseen.join(", "))
                };
                println!("{}: {}{flag}", user.user_id, shown.join(", "));
            }
        }
    }
    Ok(())
}

fn read_queue(path: &Path) -> Result<Vec<FeedbackEvent>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut events = Vec::new();
    for line in fs::read_to_string(path)?.lines().filter(|l| !l.trim().is_empty()) {
        events.push(serde_json::from_str(line).map_err(userprof::Error::from)?);
    }
    Ok(events)
}

fn feedback(model_path: &Path, data: &Path, dir: &Path, event: FeedbackEvent, threshold: f64) -> Result<()> {
    let docs = load_documents(data)?;
    let documents: HashMap<String, String> = docs.into_iter().map(|d| (d.id, d.text)).collect();
    if !documents.contains_key(&event.document_id) {
        bail!(userprof::Error::Data(format!("document {} is not in {}", event.document_id, data.display())));
    }
    let mut profile = load_profile(dir, &event.user_id)?;
    let mut updater = FeedbackUpdater::new(threshold, EMA_LAMBDA)?;
    let queue_path = dir.join("pending.jsonl");
    for e in read_queue(&queue_path)? {
        updater.enqueue(e);
    }

    let model = ModelFile::load(model_path).ok().filter(|m| m.header.kind == ModelKind::Domain);
    let outcome = match &model {
        Some(m) => {
            let classifier = DomainModelClassifier {
                spec: &m.header.spec,
                params: &m.params,
                pipeline: m.header.pipeline.as_ref().context("model file has no text pipeline")?,
                documents,
            };
            let retried = updater.retry_queued(&mut profile, &classifier)?;
            if !retried.is_empty() {
                println!("applied {} queued events", retried.len());
            }
            updater.record(&mut profile, &event, &classifier)?
        }
        None => {
            eprintln!("warning: classifier unavailable ({}), queueing event", model_path.display());
            let unavailable = |_: &str| -> Option<ConceptScores> { None };
            updater.record(&mut profile, &event, &unavailable)?
        }
    };

    fs::create_dir_all(dir)?;
    let mut queue = String::new();
    for e in updater.queued() {
        queue.push_str(&serde_json::to_string(e)?);
        queue.push('\n');
    }
    fs::write(&queue_path, queue)?;
    let path = save_profile(dir, &profile)?;
    match outcome {
        FeedbackOutcome::Ignored => println!("ignored (not a click of at least {threshold} s)"),
        FeedbackOutcome::Queued => println!("queued"),
        FeedbackOutcome::Updated { concept, weight } => println!("{concept} -> {weight:.4}"),
    }
    println!("profile: {}", path.display());
    Ok(())
}

fn rerank_cmd(data: &Path, query: &str, k: usize, model_path: &Path, dir: &Path, user: &str) -> Result<()> {
    let docs = load_documents(data)?;
    let hits = SearchIndex::build(&docs, Stopwords::english()).search(query, k);
    let model = load_model(model_path)?;
    if model.header.kind != ModelKind::Domain {
        bail!(userprof::Error::InvalidConfig("rerank needs a domain model".into()));
    }
    let classifier = DomainModelClassifier {
        spec: &model.header.spec,
        params: &model.params,
        pipeline: model.header.pipeline.as_ref().context("model file has no text pipeline")?,
        documents: docs.into_iter().map(|d| (d.id, d.text)).collect(),
    };
    let profile = load_profile(dir, user)?;
    for (rank, r) in rerank(&hits, &profile, &classifier)?.iter().enumerate() {
        println!(
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            rank + 1,
            r.document_id,
            r.baseline_score,
            r.score,
            r.concepts.join("|")
        );
    }
    Ok(())
}

fn repro_tables(data: Option<PathBuf>, train: bool, common: &Common) -> Result<()> {
    for v in DomainVariant::ALL {
        let spec = build_domain_model(v, &DomainDims::table_faithful())?;
        println!("{v}\n{}", parameter_table(&spec)?);
    }
    for v in InterestVariant::ALL {
        let spec = build_interest_model(v, true)?;
        println!("{v}\n{}", parameter_table(&spec)?);
    }
    if !train {
        return Ok(());
    }
    let split = SplitArgs {
        fraction: 0.8,
        stratified: false,
    };
    let mut rows = Vec::new();
    if let Some(root) = &data {
        for v in DomainVariant::ALL {
            let config = ExperimentConfig {
                phase: 1,
                variant: v.tag().into(),
                data: Some(root.clone()),
                ..experiment_base(common, &split)
            };
            rows.push(run_experiment(&config)?.metrics);
        }
    } else {
        eprintln!("no --data given, skipping the document models");
    }
    for v in InterestVariant::ALL {
        let config = ExperimentConfig {
            phase: 2,
            variant: v.tag().into(),
            ..experiment_base(common, &split)
        };
        rows.push(run_experiment(&config)?.metrics);
    }
    println!("{:<18}{:>8}{:>12}{:>12}", "model", "epochs", "train_acc", "test_acc");
    for r in &rows {
        println!(
            "{:<18}{:>8}{:>11.2}%{:>11.2}%",
            r.model,
            r.epochs,
            100.0 * r.train_acc,
            100.0 * r.test_acc
        );
    }
    Ok(())
}
