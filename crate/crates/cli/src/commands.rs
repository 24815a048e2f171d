use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ademiner::bundle::{load_bundle, save_bundle, PipelineManifest, StageModel, BUNDLE_VERSION};
use ademiner::classifier::{evaluate_classifier, train_classifier, ClassifierConfig};
use ademiner::config::ConfigFile;
use ademiner::corpus::{corpus_stats, read_conll, read_jsonl_docs, write_jsonl_docs, Document, TagScheme};
use ademiner::eval::{
    benchmark_timing, run_cv_experiment, time_inference, EntityEvaluator, MatchMode, TaskConfig, TimingReport,
};
use ademiner::ner::{train_ner, NerConfig};
use ademiner::pipeline::{bundle_manifest, run_batch, ExecOptions, Pipeline};
use ademiner::relation::{evaluate_re, relation_examples, train_re, ReConfig};
use ademiner::train::TrainReport;
use ademiner::{open_vectors, synth, EmbeddingStore, OovPolicy};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::args::{Command, Common, DataArgs, DevArgs, Scheme, Stage, SynthKind};

/// A flag combination clap cannot express; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Stage configuration and OOV policy stored in every bundle.
#[derive(Debug, Serialize, Deserialize)]
struct Echo<T> {
    config: T,
    oov: OovPolicy,
}

struct Ctx<'a> {
    common: &'a Common,
    file: Option<ConfigFile>,
}

impl<'a> Ctx<'a> {
    fn new(common: &'a Common) -> Result<Self> {
        let file = common
            .config
            .as_ref()
            .map(|p| ConfigFile::read(p).with_context(|| format!("reading config {}", p.display())))
            .transpose()?;
        Ok(Self { common, file })
    }

    /// Flag, then config file, then `fallback`.
    fn oov(&self, fallback: Option<OovPolicy>) -> Result<OovPolicy> {
        if let Some(s) = &self.common.oov {
            let f = ConfigFile::parse(&format!("oov = {s}")).map_err(|e| usage(e.to_string()))?;
            return Ok(f
                .oov_policy()
                .map_err(|e| usage(format!("--oov: {e}")))?
                .unwrap_or_default());
        }
        if let Some(p) = self.file.as_ref().map(ConfigFile::oov_policy).transpose()?.flatten() {
            return Ok(p);
        }
        Ok(fallback.unwrap_or_default())
    }

    fn store(&self, oov: OovPolicy) -> Result<EmbeddingStore> {
        let path = self
            .common
            .embeddings
            .as_ref()
            .ok_or_else(|| usage("--embeddings is required for this command"))?;
        let store = open_vectors(path).with_context(|| format!("loading {}", path.display()))?;
        log::info!("{} vectors of dim {} from {}", store.len(), store.dim(), path.display());
        Ok(store.with_oov(oov)?)
    }

    fn seed(&self, seed: &mut u64) {
        if let Some(s) = self.common.seed {
            *seed = s;
        }
    }

    fn classifier_config(&self) -> Result<ClassifierConfig> {
        let mut c = ClassifierConfig::default();
        if let Some(f) = &self.file {
            f.apply_classifier(&mut c)?;
        }
        self.seed(&mut c.train.seed);
        Ok(c)
    }

    fn ner_config(&self) -> Result<NerConfig> {
        let mut c = NerConfig::default();
        if let Some(f) = &self.file {
            f.apply_ner(&mut c)?;
        }
        self.seed(&mut c.train.seed);
        Ok(c)
    }

    fn re_config(&self) -> Result<ReConfig> {
        let mut c = ReConfig::default();
        if let Some(f) = &self.file {
            f.apply_re(&mut c)?;
        }
        self.seed(&mut c.train.seed);
        Ok(c)
    }

    fn task_config(&self, stage: Stage, relax_mode: MatchMode) -> Result<TaskConfig> {
        Ok(match stage {
            Stage::Classifier => TaskConfig::Classify(self.classifier_config()?),
            Stage::Ner => TaskConfig::Ner {
                config: self.ner_config()?,
                relax_mode,
            },
            Stage::Re => TaskConfig::Re(self.re_config()?),
        })
    }
}

fn scheme(s: Scheme) -> TagScheme {
    match s {
        Scheme::Iob => TagScheme::Iob,
        Scheme::Bioes => TagScheme::Bioes,
    }
}

fn read_docs(jsonl: Option<&Path>, conll: Option<&Path>, s: Scheme) -> Result<Vec<Document>> {
    match (jsonl, conll) {
        (Some(p), _) => read_jsonl_docs(p).with_context(|| format!("reading {}", p.display())),
        (None, Some(p)) => Ok(read_conll(p, scheme(s))
            .with_context(|| format!("reading {}", p.display()))?
            .docs),
        (None, None) => Ok(Vec::new()),
    }
}

fn load_data(data: &DataArgs, s: Scheme) -> Result<Vec<Document>> {
    read_docs(data.data.as_deref(), data.conll.as_deref(), s)
}

fn write_json(path: Option<&Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn stage_name(stage: Stage) -> &'static str {
    match stage {
        Stage::Classifier => "classifier",
        Stage::Ner => "ner",
        Stage::Re => "re",
    }
}

fn print_epochs(report: &TrainReport) {
    for e in &report.epochs {
        let mut line = format!(
            "epoch {:>3}  lr {:.6}  train_loss {:.6}",
            e.epoch, e.learning_rate, e.train_loss
        );
        if let Some(d) = e.dev_loss {
            line.push_str(&format!("  dev_loss {d:.6}"));
        }
        if let Some(s) = e.dev_score {
            line.push_str(&format!("  dev_score {s:.4}"));
        }
        eprintln!("{line}");
    }
    eprintln!("selected epoch {}", report.selected_epoch);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn run(command: &Command, common: &Common) -> Result<i32> {
    let ctx = Ctx::new(common)?;
    match command {
        Command::Train {
            stage,
            data,
            dev,
            scheme,
            out,
            metrics,
        } => train(&ctx, *stage, data, dev, *scheme, out.as_deref(), metrics.as_deref()),
        Command::Eval {
            stage,
            data,
            scheme,
            bundle,
            cv,
            mode,
            report,
            csv,
            workers,
        } => eval(
            &ctx,
            *stage,
            load_data(data, *scheme)?,
            bundle.as_deref(),
            *cv,
            mode.as_deref(),
            report.as_deref(),
            csv.as_deref(),
            *workers,
        ),
        Command::Predict {
            pipeline,
            classifier,
            ner,
            re,
            input,
            output,
            stream,
            flush_each,
            workers,
        } => {
            let bundles = match (pipeline, ner, re) {
                (Some(m), _, _) => Bundles::Manifest(m.clone()),
                (None, Some(n), Some(r)) => Bundles::Files {
                    classifier: classifier.clone(),
                    ner: n.clone(),
                    re: r.clone(),
                },
                _ => return Err(usage("give --pipeline or both --ner and --re")),
            };
            predict(
                &ctx,
                &bundles,
                input.as_deref(),
                output.as_deref(),
                *stream,
                *flush_each,
                *workers,
            )
        }
        Command::Benchmark {
            stage,
            data,
            scheme,
            duplicate,
            repeats,
            report,
        } => benchmark(
            &ctx,
            *stage,
            load_data(data, *scheme)?,
            *duplicate,
            *repeats,
            report.as_deref(),
        ),
        Command::Stats { data, scheme } => {
            let docs = load_data(data, *scheme)?;
            write_json(None, &corpus_stats(&docs)?)?;
            Ok(0)
        }
        Command::Compose {
            classifier,
            ner,
            re,
            out,
        } => compose(classifier.as_deref(), ner, re, out),
        Command::Synth {
            kind,
            n,
            out,
            vectors,
            dim,
            threshold,
        } => {
            let seed = common.seed.unwrap_or(42);
            let docs = match kind {
                SynthKind::Ner => synth::ner_corpus(*n),
                SynthKind::Classify => synth::classification_corpus(*n, seed),
                SynthKind::Re => synth::relation_corpus(*n, *threshold, seed),
                SynthKind::Examples => synth::example_documents(),
            };
            let mut w = BufWriter::new(File::create(out).with_context(|| format!("creating {}", out.display()))?);
            write_jsonl_docs(&docs, &mut w)?;
            w.flush()?;
            if let Some(v) = vectors {
                let mut w = BufWriter::new(File::create(v).with_context(|| format!("creating {}", v.display()))?);
                synth::embeddings(*dim, seed)?.write_text(&mut w)?;
                w.flush()?;
            }
            eprintln!("wrote {} documents to {}", docs.len(), out.display());
            Ok(0)
        }
    }
}

fn train(
    ctx: &Ctx,
    stage: Stage,
    data: &DataArgs,
    dev: &DevArgs,
    s: Scheme,
    out: Option<&Path>,
    metrics: Option<&Path>,
) -> Result<i32> {
    if stage == Stage::Re && (data.conll.is_some() || dev.dev_conll.is_some()) {
        return Err(usage("relation training needs JSONL documents with relations (--data)"));
    }
    let oov = ctx.oov(None)?;
    let store = ctx.store(oov)?;
    let train_docs = load_data(data, s)?;
    let dev_docs = read_docs(dev.dev_data.as_deref(), dev.dev_conll.as_deref(), s)?;
    let out = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from(format!("{}.bundle", stage_name(stage))));
    let metrics = metrics
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("metrics.json"));

    let (model, report, config) = match stage {
        Stage::Classifier => {
            let cfg = ctx.classifier_config()?;
            let (m, r) = train_classifier(&train_docs, &dev_docs, &store, &cfg)?;
            (StageModel::Classifier(m), r, serde_json::to_value(&cfg)?)
        }
        Stage::Ner => {
            let cfg = ctx.ner_config()?;
            let (m, r) = train_ner(&train_docs, &dev_docs, &store, &cfg)?;
            (StageModel::Ner(m), r, serde_json::to_value(&cfg)?)
        }
        Stage::Re => {
            let cfg = ctx.re_config()?;
            let (tr, dv) = (relation_examples(&train_docs)?, relation_examples(&dev_docs)?);
            let (m, r) = train_re(&tr, &dv, &store, &cfg)?;
            (StageModel::Re(m), r, serde_json::to_value(&cfg)?)
        }
    };
    print_epochs(&report);
    save_bundle(&model, &Echo { config: &config, oov }, &out)?;
    write_json(
        Some(&metrics),
        &json!({
            "stage": stage_name(stage),
            "config": config,
            "oov": oov,
            "n_train": train_docs.len(),
            "n_dev": dev_docs.len(),
            "bundle": out,
            "report": report,
        }),
    )?;
    eprintln!("wrote {} and {}", out.display(), metrics.display());
    Ok(0)
}

fn oov_from_bundle(path: &Path) -> Result<Option<OovPolicy>> {
    let m = bundle_manifest(path)?;
    Ok(m.config.get("oov").cloned().map(serde_json::from_value).transpose()?)
}

fn parse_modes(modes: Option<&[String]>) -> Result<Vec<MatchMode>> {
    let Some(modes) = modes else {
        return Ok(vec![MatchMode::Strict, MatchMode::Relax]);
    };
    let mut out = Vec::new();
    for m in modes {
        let mode = MatchMode::parse(m.trim())
            .ok_or_else(|| usage(format!("unknown mode {m:?} (expected strict, relax or overlap-any)")))?;
        if !out.contains(&mode) {
            out.push(mode);
        }
    }
    if out.is_empty() {
        return Err(usage("--mode needs at least one mode"));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn eval(
    ctx: &Ctx,
    stage: Stage,
    docs: Vec<Document>,
    bundle: Option<&Path>,
    cv: Option<usize>,
    modes: Option<&[String]>,
    report: Option<&Path>,
    csv: Option<&Path>,
    workers: Option<usize>,
) -> Result<i32> {
    if stage != Stage::Ner && modes.is_some() {
        return Err(usage("--mode applies to ner only"));
    }
    let modes = parse_modes(modes)?;
    let relax_mode = if modes.contains(&MatchMode::OverlapAny) && !modes.contains(&MatchMode::Relax) {
        MatchMode::OverlapAny
    } else {
        MatchMode::Relax
    };

    if let Some(k) = cv {
        if modes.contains(&MatchMode::Relax) && modes.contains(&MatchMode::OverlapAny) {
            return Err(usage("cross-validation scores one relaxed mode; pick relax or overlap"));
        }
        let store = ctx.store(ctx.oov(None)?)?;
        let config = ctx.task_config(stage, relax_mode)?;
        let seed = ctx.common.seed.unwrap_or(42);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.unwrap_or(0))
            .build()?;
        let result = pool.install(|| run_cv_experiment(&docs, k, seed, &config, &store))?;
        write_json(report, &result)?;
        if let Some(p) = csv {
            std::fs::write(p, result.to_csv()).with_context(|| format!("writing {}", p.display()))?;
        }
        for s in &result.summary {
            eprintln!(
                "{:<14} {:<5} F1 {:.4} ± {:.4}",
                s.block, s.average, s.mean.f1, s.stdev.f1
            );
        }
        return Ok(0);
    }

    let path = bundle.expect("clap requires --bundle without --cv");
    let store = ctx.store(ctx.oov(oov_from_bundle(path)?)?)?;
    let (manifest, model) = load_bundle(path)?;
    let expected = match stage {
        Stage::Classifier => "classifier",
        Stage::Ner => "ner",
        Stage::Re => "re",
    };
    if manifest.stage.as_str() != expected {
        bail!(
            "{} holds a {} stage, not {expected}",
            path.display(),
            manifest.stage.as_str()
        );
    }
    let mut out = json!({
        "stage": expected,
        "bundle": path,
        "config": manifest.config,
        "n_docs": docs.len(),
    });
    match &model {
        StageModel::Classifier(m) => {
            out["classification"] = serde_json::to_value(evaluate_classifier(m, &docs, &store)?)?
        }
        StageModel::Re(m) => {
            out["classification"] = serde_json::to_value(evaluate_re(m, &relation_examples(&docs)?, &store)?)?
        }
        StageModel::Ner(m) => {
            let predictions = docs
                .iter()
                .map(|d| m.predict_entities(d, &store))
                .collect::<ademiner::Result<Vec<_>>>()?;
            let score = |mode: MatchMode| -> Result<_> {
                let mut ev = EntityEvaluator::new(mode);
                for (d, p) in docs.iter().zip(&predictions) {
                    ev.add(d.gold_spans.as_deref().unwrap_or(&[]), p)?;
                }
                Ok(ev.report())
            };
            let base = score(MatchMode::Relax)?;
            if modes.contains(&MatchMode::Strict) {
                out["strict"] = serde_json::to_value(&base.strict)?;
            }
            if modes.contains(&MatchMode::Relax) {
                out["relax"] = serde_json::to_value(&base.relax)?;
                out["relax_greedy_deficit"] = json!(base.relax_greedy_deficit);
            }
            if modes.contains(&MatchMode::OverlapAny) {
                out["overlap_any"] = serde_json::to_value(score(MatchMode::OverlapAny)?.relax)?;
            }
        }
    }
    write_json(report, &out)?;
    Ok(0)
}

enum Bundles {
    Manifest(PathBuf),
    Files {
        classifier: Option<PathBuf>,
        ner: PathBuf,
        re: PathBuf,
    },
}

fn predict(
    ctx: &Ctx,
    bundles: &Bundles,
    input: Option<&Path>,
    output: Option<&Path>,
    stream: bool,
    flush_each: bool,
    workers: usize,
) -> Result<i32> {
    if workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    let ner_path = match bundles {
        Bundles::Manifest(m) => PipelineManifest::load(m)?.resolve(m).1,
        Bundles::Files { ner, .. } => ner.clone(),
    };
    let store = Arc::new(ctx.store(ctx.oov(oov_from_bundle(&ner_path)?)?)?);
    let pipeline = match bundles {
        Bundles::Manifest(m) => Pipeline::load(m, store)?,
        Bundles::Files { classifier, ner, re } => Pipeline::from_bundle_paths(classifier.as_deref(), ner, re, store)?,
    };
    let options = if stream {
        ExecOptions::stream(workers, flush_each)
    } else {
        ExecOptions::batch(workers)
    };
    let summary = match (input, output) {
        (Some(i), o) => {
            let reader = BufReader::new(File::open(i).with_context(|| format!("opening {}", i.display()))?);
            execute(&pipeline, reader, o, options)?
        }
        (None, o) => execute(&pipeline, io::stdin().lock(), o, options)?,
    };
    eprintln!("{}", serde_json::to_string(&summary)?);
    if summary.errors > 0 {
        eprintln!("{} of {} records failed", summary.errors, summary.records);
        return Ok(1);
    }
    Ok(0)
}

fn execute(
    pipeline: &Pipeline,
    reader: impl io::BufRead,
    output: Option<&Path>,
    options: ExecOptions,
) -> Result<ademiner::pipeline::RunSummary> {
    Ok(match output {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            run_batch(pipeline, reader, &mut w, options)?
        }
        None => run_batch(pipeline, reader, &mut BufWriter::new(io::stdout()), options)?,
    })
}

fn benchmark(
    ctx: &Ctx,
    stage: Stage,
    docs: Vec<Document>,
    duplicate: usize,
    repeats: usize,
    report: Option<&Path>,
) -> Result<i32> {
    if duplicate == 0 || repeats == 0 {
        return Err(usage("--duplicate and --repeats must be at least 1"));
    }
    let store = ctx.store(ctx.oov(None)?)?;
    let config = ctx.task_config(stage, MatchMode::Relax)?;
    let (timing, model) = benchmark_timing(&docs, &config, &store)?;
    let scaled: Vec<Document> = std::iter::repeat(&docs).take(duplicate).flatten().cloned().collect();
    let fastest = |d: &[Document]| -> Result<f64> {
        let mut best = f64::INFINITY;
        for _ in 0..repeats {
            best = best.min(time_inference(&model, d, &store)?);
        }
        Ok(best)
    };
    let base = fastest(&docs)?;
    let dup = fastest(&scaled)?;
    let ratio = if base > 0.0 {
        dup / (base * duplicate as f64)
    } else {
        f64::NAN
    };
    println!("{}", TimingReport::TABLE_HEADER);
    println!("{}", timing.table_row());
    println!("inference x{duplicate}: {dup:.4}s vs {base:.4}s (ratio to linear {ratio:.3})");
    if let Some(p) = report {
        write_json(
            Some(p),
            &json!({
                "timing": timing,
                "linearity": {
                    "factor": duplicate,
                    "repeats": repeats,
                    "base_seconds": base,
                    "scaled_seconds": dup,
                    "ratio_to_linear": ratio,
                },
            }),
        )?;
    }
    Ok(0)
}

fn compose(classifier: Option<&Path>, ner: &Path, re: &Path, out: &Path) -> Result<i32> {
    let mut dims = Vec::new();
    for (path, expected) in classifier
        .map(|c| (c, "classifier"))
        .into_iter()
        .chain([(ner, "ner"), (re, "re")])
    {
        let m = bundle_manifest(path).with_context(|| format!("reading {}", path.display()))?;
        if m.stage.as_str() != expected {
            bail!("{} holds a {} stage, not {expected}", path.display(), m.stage.as_str());
        }
        dims.push(m.embedding_dim);
    }
    if dims.iter().any(|&d| d != dims[0]) {
        bail!("stage bundles disagree on the embedding dimension: {dims:?}");
    }
    let base = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let rel = |p: &Path| {
        let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        abs.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(abs)
    };
    PipelineManifest {
        format_version: BUNDLE_VERSION,
        embedding_dim: dims[0],
        classifier: classifier.map(rel),
        ner: rel(ner),
        re: rel(re),
    }
    .save(out)?;
    eprintln!("wrote {}", out.display());
    Ok(0)
}
