use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{io_err, AnnoArgs, CliError, Command, EvalArgs, ExplainArgs, MixArgs, NormalizeArgs, ReportArgs, RunContext, TrainArgs};
use crate::anno;
use crate::eval::{self, f1, map_prediction, Averaging, EvalError, EvalReport, RunMetrics, Table, EVAL_SETS};
use crate::explain::{self, ClaimView, ExplanationCache, GenerateConfig, LlmClient, NeiPolicy, OpenAiClient, Scenario, Session, StubClient};
use crate::mixture::{build, parse_mixture_name, MixtureSpec, Sampling};
use crate::schema::{self, DatasetStore, NativeFormat, NormalizeOptions, Split, LABEL_MAP_VERSION};
use crate::verifier::{self, BackendName, BackendRegistry, Checkpoint, CheckpointConfig, TrainConfig, Verifier};

pub(super) fn dispatch(command: &Command, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    match command {
        Command::Normalize(a) => normalize(a, ctx),
        Command::Mix(a) => mix(a, ctx),
        Command::Train(a) => train(a, ctx),
        Command::Explain(a) => explain_cmd(a, ctx),
        Command::Eval(a) => eval_cmd(a, ctx),
        Command::Anno(a) => anno_cmd(a, ctx),
        Command::Report(a) => report_cmd(a, ctx),
    }
}

fn usage<T: std::fmt::Display>(e: T) -> CliError {
    CliError::Usage(e.to_string())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("json") + "\n"))
}

fn path_value(p: &Path) -> Value {
    Value::String(p.display().to_string())
}

fn parse_members(members: &str) -> Result<Vec<String>, CliError> {
    if members.contains('+') {
        return Ok(parse_mixture_name(members)?.into_iter().collect());
    }
    let keys: Vec<String> = members.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if keys.is_empty() {
        return Err(CliError::Usage("no mixture members given".into()));
    }
    Ok(keys)
}

fn normalize(a: &NormalizeArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let adapter = schema::adapter(&a.dataset).ok_or_else(|| CliError::Usage(format!("unknown dataset {:?}", a.dataset)))?;
    let opts = NormalizeOptions { strict_images: a.strict_images, image_root: a.image_root.clone() };
    let format_of = |p: &Path| match p.extension().and_then(|e| e.to_str()) {
        Some("jsonl") => NativeFormat::Jsonl,
        Some("tsv") => NativeFormat::Tsv,
        _ => adapter.format,
    };
    let files: Vec<(Split, PathBuf)> = if a.input.is_dir() {
        let base = if a.input.join(&a.dataset).is_dir() { a.input.join(&a.dataset) } else { a.input.clone() };
        Split::ALL
            .into_iter()
            .map(|s| (s, base.join(format!("{}.{}", s.as_str(), adapter.format.extension()))))
            .filter(|(_, p)| p.is_file())
            .collect()
    } else if a.input.is_file() {
        vec![(a.split.parse().map_err(usage)?, a.input.clone())]
    } else {
        return Err(CliError::Data(format!("{}: no such file or directory", a.input.display())));
    };
    if files.is_empty() {
        return Err(CliError::Data(format!("no split files for {} under {}", a.dataset, a.input.display())));
    }
    let mut examples = Vec::new();
    let mut counts = Map::new();
    for (split, path) in &files {
        let raw = schema::read_raw_file(path, format_of(path))?;
        for rec in &raw {
            examples.push(schema::normalize(rec, &a.dataset, *split, &opts)?);
        }
        counts.insert(split.as_str().into(), json!(raw.len()));
    }
    DatasetStore::from_examples(examples.iter().cloned())?.check_ids()?;
    let output = ctx.resolve(a.output.as_deref().unwrap_or(Path::new(&format!("{}.jsonl", a.dataset))));
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    schema::write_jsonl(&output, examples.iter())?;
    let mut out = Map::new();
    out.insert("output".into(), path_value(&output));
    out.insert("examples".into(), json!(examples.len()));
    out.insert("splits".into(), Value::Object(counts));
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct MixtureFile {
    spec: MixtureSpec,
    store: PathBuf,
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf())
}

fn mix(a: &MixArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let store = DatasetStore::load(&a.store)?;
    store.check_ids()?;
    let sampling: Sampling = a.sampling.parse().map_err(usage)?;
    let members = parse_members(&a.members)?;
    let spec = MixtureSpec::with_store(&members, sampling, a.seed, &store)?;
    let path = ctx.dir.join("mixture.json");
    write_json(&path, &MixtureFile { spec: spec.clone(), store: absolute(&a.store) })?;
    let mut sizes = Map::new();
    for split in Split::ALL {
        let stream = build(&spec, &store, split)?;
        sizes.insert(split.as_str().into(), json!(stream.len()));
        if a.materialize {
            let p = ctx.dir.join("mixture").join(format!("{}.jsonl", split.as_str()));
            std::fs::create_dir_all(p.parent().unwrap()).map_err(io_err(&p))?;
            schema::write_jsonl(&p, stream.iter())?;
        }
    }
    let mut out = Map::new();
    out.insert("mixture".into(), path_value(&path));
    out.insert("name".into(), json!(spec.name));
    out.insert("sizes".into(), Value::Object(sizes));
    Ok(out)
}

fn train(a: &TrainArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let (spec, store) = match (&a.mixture, &a.store, &a.members) {
        (Some(path), _, _) => {
            let file: MixtureFile = read_json(path)?;
            let store = DatasetStore::load(&file.store)?;
            (file.spec, store)
        }
        (None, Some(store_dir), Some(members)) => {
            let store = DatasetStore::load(store_dir)?;
            let spec = MixtureSpec::with_store(&parse_members(members)?, a.sampling.parse().map_err(usage)?, a.seed, &store)?;
            (spec, store)
        }
        _ => return Err(CliError::Usage("train needs --mixture or --store with --members".into())),
    };
    let backend_name: BackendName = a.backend.parse().map_err(|e: verifier::VerifierError| CliError::Usage(e.to_string()))?;
    let backend = BackendRegistry::default().open(backend_name, a.backend_seed)?;
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        micro_batch: a.micro_batch,
        lr: a.lr,
        optimizer: a.optimizer.parse().map_err(usage)?,
        seed: a.seed,
        aggregation: a.aggregation.parse().map_err(usage)?,
        weight_decay: a.weight_decay,
    };
    let outcome = verifier::train(&spec, &store, &cfg, backend.as_ref())?;
    let ckpt = Checkpoint {
        config: CheckpointConfig {
            model: outcome.params.config,
            train: cfg,
            mixture: spec,
            backend: backend_name,
            backend_seed: a.backend_seed,
            label_map_version: LABEL_MAP_VERSION,
        },
        params: outcome.params,
        metrics: outcome.log,
    };
    let dir = ctx.resolve(&a.output);
    ckpt.save(&dir)?;
    let mut out = Map::new();
    out.insert("checkpoint".into(), path_value(&dir));
    if let Some(last) = ckpt.metrics.last() {
        out.insert("train_loss".into(), json!(last.train_loss));
        out.insert("val_f1".into(), json!(last.val_f1));
    }
    Ok(out)
}

fn explain_cmd(a: &ExplainArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let scenario: Scenario = a.scenario.parse().map_err(usage)?;
    let nei: NeiPolicy = a.nei.parse().map_err(usage)?;
    let store = DatasetStore::load(&a.store)?;
    let train = store
        .split(&a.dataset, Split::Train)
        .filter(|t| !t.is_empty())
        .ok_or_else(|| CliError::Data(format!("store has no training split for {}", a.dataset)))?;

    let client: Box<dyn LlmClient> = if a.stub {
        Box::new(StubClient::new())
    } else {
        Box::new(OpenAiClient::from_env(&a.generator, Duration::from_secs(a.timeout_secs)).map_err(|e| CliError::Backend(e.to_string()))?)
    };
    let cache_path = a.cache.as_deref().map(|p| ctx.resolve(p)).unwrap_or_else(|| ctx.dir.join("cache.jsonl"));
    let cache = ExplanationCache::open(&cache_path)?;
    let config = GenerateConfig { concurrency: a.concurrency, max_retries: a.max_retries, budget: a.budget, ..GenerateConfig::default() };
    let session = Session::new(client.as_ref(), &cache, config);

    let mut zero_shot = HashMap::new();
    if scenario == Scenario::Guided {
        let views: Vec<ClaimView<'_>> = train.iter().map(ClaimView::from).collect();
        let labels = session.zero_shot(&views)?;
        let mut tsv = String::from("claim_id\tlabel\n");
        for (v, l) in views.iter().zip(&labels) {
            tsv.push_str(&format!("{}\t{}\n", v.id, l.word()));
            zero_shot.insert(v.id.to_string(), *l);
        }
        write_text(&ctx.dir.join("zero_shot.tsv"), &tsv)?;
    }
    let requests = explain::plan_requests(train, scenario, a.seed, &zero_shot, nei)?;
    let generated = session.generate(&requests);
    cache.persist()?;
    let records = generated?;

    let mut lines = String::new();
    for r in &records {
        lines.push_str(&serde_json::to_string(r).expect("json"));
        lines.push('\n');
    }
    let exp_path = ctx.dir.join("explanations.jsonl");
    write_text(&exp_path, &lines)?;
    let stats = session.stats();
    write_json(&ctx.dir.join("stats.json"), &stats)?;

    let mut out = Map::new();
    out.insert("explanations".into(), path_value(&exp_path));
    out.insert("records".into(), json!(records.len()));
    out.insert("stats".into(), serde_json::to_value(&stats).expect("json"));
    if a.augment {
        let augmented = explain::augment(train, &records, scenario, true)?;
        let mut new_store = DatasetStore::new();
        for ex in store.all().filter(|e| !(e.dataset == a.dataset && e.split == Split::Train)) {
            new_store.insert(ex.clone());
        }
        for ex in augmented {
            new_store.insert(ex);
        }
        let dir = ctx.dir.join("store");
        new_store.save(&dir)?;
        out.insert("store".into(), path_value(&dir));
    }
    Ok(out)
}

fn eval_cmd(a: &EvalArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let averaging: Averaging = a.averaging.parse().map_err(usage)?;
    let split: Split = a.split.parse().map_err(usage)?;
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let verifier = Verifier::from_checkpoint(&ckpt, &BackendRegistry::default())?;
    let store = DatasetStore::load(&a.store)?;
    let has = |k: &str| store.split(k, split).is_some_and(|s| !s.is_empty());
    let sets: Vec<String> = if a.eval_sets == "all" {
        EVAL_SETS.iter().filter(|k| has(k)).map(|k| k.to_string()).collect()
    } else {
        let keys: Vec<String> = a.eval_sets.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        if let Some(missing) = keys.iter().find(|k| !has(k)) {
            return Err(EvalError::UnknownEvalSet(format!("{missing} (no {} split in store)", split.as_str())).into());
        }
        keys
    };
    if sets.is_empty() {
        return Err(CliError::Data(format!("store has no eval sets with a {} split", split.as_str())));
    }
    let mut scores = BTreeMap::new();
    for key in &sets {
        let examples = store.split(key, split).unwrap();
        let space = store.label_space(key).unwrap_or_else(schema::ternary_space);
        let mut preds = Vec::with_capacity(examples.len());
        for ex in examples {
            preds.push(map_prediction(&verifier.predict(ex)?, &space)?);
        }
        let golds: Vec<_> = examples.iter().map(|e| e.label).collect();
        scores.insert(key.clone(), f1(&preds, &golds, averaging)?);
    }
    let run = RunMetrics { run_id: ctx.run_id.clone(), averaging, f1: scores };
    let baseline = match &a.baseline {
        Some(p) => {
            let r: EvalReport = read_json(p)?;
            Some(RunMetrics { run_id: r.run_id, averaging: r.averaging, f1: r.per_set_f1 })
        }
        None => None,
    };
    let report = eval::report(&run, baseline.as_ref())?;
    write_report_files(ctx, &report)
}

fn write_report_files(ctx: &RunContext, report: &EvalReport) -> Result<Map<String, Value>, CliError> {
    let mut out = Map::new();
    let json_path = ctx.dir.join("report.json");
    write_json(&json_path, report)?;
    let table = report.f1_table();
    write_text(&ctx.dir.join("report.tsv"), &table.to_tsv())?;
    write_text(&ctx.dir.join("report.txt"), &table.to_text())?;
    out.insert("report".into(), path_value(&json_path));
    out.insert("f1".into(), json!(report.per_set_f1));
    if let Some(deltas) = report.delta_table() {
        write_text(&ctx.dir.join("deltas.tsv"), &deltas.to_tsv())?;
        out.insert("deltas".into(), path_value(&ctx.dir.join("deltas.tsv")));
    }
    Ok(out)
}

fn anno_cmd(a: &AnnoArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let rows = anno::read_tsv(&a.input)?;
    if a.raters > 0 {
        anno::check_complete(&rows, a.raters)?;
    }
    let report = anno::aggregate(&rows, a.threshold);
    let path = ctx.dir.join("anno_report.json");
    write_json(&path, &report)?;
    let mut out = Map::new();
    out.insert("report".into(), path_value(&path));
    out.insert("removed".into(), json!(report.filter.removed.iter().map(|(w, _)| w).collect::<Vec<_>>()));
    Ok(out)
}

fn report_cmd(a: &ReportArgs, ctx: &RunContext) -> Result<Map<String, Value>, CliError> {
    let paths: Vec<PathBuf> = a.runs.split(',').map(|s| PathBuf::from(s.trim())).filter(|p| !p.as_os_str().is_empty()).collect();
    if paths.is_empty() {
        return Err(CliError::Usage("no runs given".into()));
    }
    let baseline = match &a.baseline {
        Some(p) => {
            let r: EvalReport = read_json(p)?;
            Some(RunMetrics { run_id: r.run_id, averaging: r.averaging, f1: r.per_set_f1 })
        }
        None => None,
    };
    let mut reports = Vec::new();
    for p in &paths {
        let r: EvalReport = read_json(p)?;
        let run = RunMetrics { run_id: r.run_id, averaging: r.averaging, f1: r.per_set_f1 };
        reports.push(eval::report(&run, baseline.as_ref())?);
    }
    let mut keys: Vec<&String> = reports.iter().flat_map(|r| r.per_set_f1.keys()).collect();
    keys.sort_by_key(|k| (EVAL_SETS.iter().position(|e| e == k).unwrap_or(EVAL_SETS.len()), k.to_string()));
    keys.dedup();
    let header = || std::iter::once("run".to_string()).chain(keys.iter().map(|k| crate::mixture::abbrev(k)));
    let mut f1_table = Table::new(header());
    let mut delta_table = Table::new(header());
    for r in &reports {
        f1_table.push(std::iter::once(r.run_id.clone()).chain(keys.iter().map(|k| r.per_set_f1.get(*k).map_or("-".into(), |v| format!("{v:.2}")))));
        if let Some(d) = &r.delta_f1 {
            delta_table.push(std::iter::once(r.run_id.clone()).chain(keys.iter().map(|k| d.get(*k).map_or("-".into(), |v| eval::format_delta(*v)))));
        }
    }
    write_text(&ctx.dir.join("report.tsv"), &f1_table.to_tsv())?;
    write_text(&ctx.dir.join("report.txt"), &f1_table.to_text())?;
    let mut out = Map::new();
    out.insert("report".into(), path_value(&ctx.dir.join("report.tsv")));
    if !delta_table.rows.is_empty() {
        write_text(&ctx.dir.join("deltas.tsv"), &delta_table.to_tsv())?;
        write_text(&ctx.dir.join("deltas.txt"), &delta_table.to_text())?;
        out.insert("deltas".into(), path_value(&ctx.dir.join("deltas.tsv")));
    }
    Ok(out)
}
