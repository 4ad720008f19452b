//! One function per subcommand. Each reads its declared inputs from the work
//! directory, writes its outputs there, and returns a short human summary.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::time::{Duration, Instant};

use qagen::corpus::{
    chunk_document, load_corpus, load_expert_pool, save_corpus, save_expert_pool, sort_chunks, split_pool,
    DocumentChunk, ExpertQA,
};
use qagen::dedup::{dedup_against, dedup_within, select};
use qagen::exec::parallel_map;
use qagen::gateway::http::{HttpProvider, HttpSettings};
use qagen::gateway::mock::MockProvider;
use qagen::gateway::{EmbedInput, Gateway, ResponseCache, UsageTotals};
use qagen::generator::{
    canonical_sort, load_generated, save_generated, GeneratedQA, Generator, Pipeline, RunReport, TopicStore,
};
use qagen::jsonl;
use qagen::metrics::bloom::{classify_bloom, BloomLabel, BloomLevel};
use qagen::metrics::report::{write_bloom_csv, write_preference_csv};
use qagen::metrics::{
    aggregate_report, efficiency, preference_metrics, topic_coverage, BloomHistogram, MetricsReport,
    PipelineMetrics, PreferenceStat, PreferenceSummary,
};
use qagen::retrieval::{
    evaluate_topk, train_adapter, AdapterModel, EmbeddingStore, Pair, RetrievalResult, TestQuery,
};
use serde::{Deserialize, Serialize};

use crate::config::{FewshotPool, ProviderKind, RunConfig};
use crate::{CliError, WorkDir};

type Result<T> = std::result::Result<T, CliError>;

pub struct Context {
    pub config: RunConfig,
    pub work: WorkDir,
}

impl Context {
    pub fn new(config: RunConfig, work: WorkDir) -> Self {
        Context { config, work }
    }

    fn seed(&self) -> u64 {
        self.config.provider.seed
    }

    pub fn gateway(&self) -> Result<Gateway> {
        let p = &self.config.provider;
        let gw = match p.kind {
            ProviderKind::Mock => Gateway::new(MockProvider::with_settings(p.seed, p.mock)),
            ProviderKind::Openai => {
                let api_key = std::env::var(&p.api_key_env).ok();
                if api_key.is_none() {
                    log::warn!("{} is not set; sending requests without a key", p.api_key_env);
                }
                let provider = HttpProvider::new(HttpSettings {
                    base_url: p.base_url.clone(),
                    api_key,
                    chat_model: p.chat_model.clone(),
                    reward_model: p.reward_model.clone(),
                    embedding_model: p.embedding_model.clone(),
                    timeout: Duration::from_secs(p.timeout_secs),
                })
                .map_err(|e| CliError::Config(format!("HTTP client: {e}")))?;
                Gateway::new(provider)
            }
        };
        let mut gw = gw.with_retry(p.retry).with_in_flight(p.in_flight);
        if p.cache {
            gw = gw.with_cache(ResponseCache::open(&self.work.cache())?);
        }
        Ok(gw)
    }

    fn chunks(&self) -> Result<Vec<DocumentChunk>> {
        Ok(load_corpus(&WorkDir::require(self.work.chunks(), "ingest")?)?)
    }

    fn pool(&self, path: std::path::PathBuf, chunks: &[DocumentChunk]) -> Result<Vec<ExpertQA>> {
        let path = WorkDir::require(path, "ingest")?;
        Ok(load_expert_pool(&path, &self.config.generation.styles, Some(chunks))?)
    }
}

pub fn cmd_ingest(ctx: &Context) -> Result<String> {
    let cfg = &ctx.config;
    let mut chunks = match (&cfg.io.documents, &cfg.io.chunks) {
        (Some(dir), _) => chunk_directory(dir, cfg.corpus.max_chunk_chars)?,
        (None, Some(path)) => load_corpus(path)?,
        (None, None) => unreachable!("validated"),
    };
    sort_chunks(&mut chunks);
    let pool = load_expert_pool(&cfg.io.expert_pool, &cfg.generation.styles, Some(&chunks))?;
    let (train, test) = split_pool(&pool, cfg.corpus.test_fraction, ctx.seed())?;
    save_corpus(&ctx.work.chunks(), &chunks)?;
    save_expert_pool(&ctx.work.expert_pool(), &pool)?;
    save_expert_pool(&ctx.work.expert_train(), &train)?;
    save_expert_pool(&ctx.work.expert_test(), &test)?;
    let docs: std::collections::BTreeSet<&str> = chunks.iter().map(|c| c.doc_id.as_str()).collect();
    Ok(format!(
        "ingested {} chunk(s) from {} document(s); expert pool {} (train {}, test {})",
        chunks.len(),
        docs.len(),
        pool.len(),
        train.len(),
        test.len()
    ))
}

fn chunk_directory(dir: &Path, max_chars: usize) -> Result<Vec<DocumentChunk>> {
    let entries = std::fs::read_dir(dir).map_err(|e| qagen::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    let mut chunks = Vec::new();
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| qagen::Error::Io {
            path: f.clone(),
            source: e,
        })?;
        let doc_id = f.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        for (seq, part) in chunk_document(&text, max_chars).into_iter().enumerate() {
            chunks.push(DocumentChunk::new(&doc_id, seq as u64, &part)?);
        }
    }
    Ok(chunks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    #[serde(flatten)]
    pub report: RunReport,
}

/// Timing and provider usage of one stage invocation. Kept apart from the
/// deterministic stage outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageFile {
    pub command: String,
    pub wall_time_secs: f64,
    pub usage: UsageTotals,
}

pub fn cmd_generate(ctx: &Context, pipeline: Pipeline) -> Result<String> {
    let started = Instant::now();
    let mut chunks = ctx.chunks()?;
    let pool_path = match ctx.config.corpus.fewshot_pool {
        FewshotPool::All => ctx.work.expert_pool(),
        FewshotPool::Train => ctx.work.expert_train(),
    };
    let pool = ctx.pool(pool_path, &chunks)?;
    let gw = ctx.gateway()?;
    let gen = Generator::new(&gw, &ctx.config.generation, ctx.seed());
    let topics_path = ctx.work.topics();
    let mut store = TopicStore::default();
    let out = match pipeline {
        Pipeline::Expertgenqa => {
            let out = gen.run_expertgenqa(&mut chunks, &pool, &mut store)?;
            store.save(&topics_path)?;
            out
        }
        Pipeline::Fewshot => gen.run_fewshot_baseline(&chunks, &pool)?,
        Pipeline::Template => gen.run_template_baseline(&chunks)?,
    };
    let mut records = out.records;
    canonical_sort(&mut records, &chunks);
    save_generated(&ctx.work.generated(pipeline), &records)?;
    let run = RunFile { report: out.report };
    jsonl::write_json(&ctx.work.run_report(pipeline), &run)?;
    let usage = UsageFile {
        command: "generate".into(),
        wall_time_secs: started.elapsed().as_secs_f64(),
        usage: gw.usage(),
    };
    jsonl::write_json(&ctx.work.usage(pipeline), &usage)?;
    let r = &run.report;
    if r.calls_attempted > 0 && r.calls_failed == r.calls_attempted {
        return Err(CliError::Stage(format!(
            "{pipeline}: all {} generation call(s) failed; see the log for provider errors",
            r.calls_attempted
        )));
    }
    let mut msg = format!(
        "{pipeline}: {} record(s) from {} call(s), {} failed",
        r.records_emitted, r.calls_attempted, r.calls_failed
    );
    if !r.chunks_skipped.is_empty() {
        msg.push_str(&format!("; {} chunk(s) skipped", r.chunks_skipped.len()));
    }
    if !r.styles_dropped.is_empty() {
        msg.push_str(&format!("; styles dropped: {}", r.styles_dropped.join(", ")));
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DedupFile {
    pub input: usize,
    pub dropped_within: usize,
    pub dropped_against_test: usize,
    pub kept: usize,
    pub threshold: f64,
    pub mode: qagen::dedup::OverlapMode,
}

pub fn cmd_dedup(ctx: &Context, pipeline: Pipeline) -> Result<String> {
    let records = load_generated(&WorkDir::require(ctx.work.generated(pipeline), "generate")?)?;
    let chunks = ctx.chunks()?;
    let test = ctx.pool(ctx.work.expert_test(), &chunks)?;
    let cfg = ctx.config.dedup.core();
    let questions: Vec<&str> = records.iter().map(|r| r.question.as_str()).collect();
    let within = dedup_within(&questions, &cfg)?;
    let mut kept = select(&records, &within);
    let mut dropped_against = 0;
    if ctx.config.dedup.against_test {
        let qs: Vec<&str> = kept.iter().map(|r| r.question.as_str()).collect();
        let refs: Vec<&str> = test.iter().map(|q| q.question.as_str()).collect();
        let against = dedup_against(&qs, &refs, &cfg)?;
        dropped_against = against.dropped.len();
        kept = select(&kept, &against);
    } else {
        log::warn!("dedup.against_test is off; training pairs may overlap the test set");
    }
    jsonl::write(&ctx.work.deduped(pipeline), &kept)?;
    let summary = DedupFile {
        input: records.len(),
        dropped_within: within.dropped.len(),
        dropped_against_test: dropped_against,
        kept: kept.len(),
        threshold: cfg.threshold,
        mode: cfg.mode,
    };
    jsonl::write_json(&ctx.work.dedup_report(pipeline), &summary)?;
    Ok(format!(
        "{pipeline}: kept {} of {} ({} near-duplicate, {} against test)",
        summary.kept, summary.input, summary.dropped_within, summary.dropped_against_test
    ))
}

pub fn cmd_metrics(ctx: &Context, pipeline: Pipeline) -> Result<String> {
    let run: RunFile = jsonl::read_json(&WorkDir::require(ctx.work.run_report(pipeline), "generate")?)?;
    let kept: Vec<GeneratedQA> = jsonl::read(&WorkDir::require(ctx.work.deduped(pipeline), "dedup")?)?;
    let mut chunks = ctx.chunks()?;
    let gw = ctx.gateway()?;
    let threads = ctx.config.generation.concurrency;

    let mut m = PipelineMetrics::new(pipeline);
    if run.report.records_emitted > 0 {
        m.efficiency = Some(
            efficiency(run.report.records_emitted, kept.len() as u64)?.labeled(pipeline, run.report.n_shots),
        );
    } else {
        log::warn!("{pipeline}: no records were generated; efficiency undefined");
    }

    let topics_path = ctx.work.topics();
    let mut store = if topics_path.is_file() {
        TopicStore::load(&topics_path)?
    } else {
        TopicStore::default()
    };
    let gen = Generator::new(&gw, &ctx.config.generation, ctx.seed());
    let mut topic_report = RunReport::default();
    gen.extract_all_topics(&mut chunks, &mut store, &mut topic_report)?;
    if topic_report.topic_calls > 0 {
        store.save(&topics_path)?;
    }
    m.coverage = Some(topic_coverage(&chunks, &kept));

    if ctx.config.metrics.bloom {
        let labels = parallel_map(&kept, threads, |r| match classify_bloom(&gw, &r.question) {
            Err(qagen::Error::Provider { .. }) => Ok(BloomLabel {
                level: BloomLevel::Understand,
                uncertain: true,
            }),
            other => other,
        });
        let labels: Vec<(String, BloomLabel)> = kept
            .iter()
            .zip(labels)
            .map(|(r, l)| l.map(|l| (r.id.clone(), l)))
            .collect::<std::result::Result<_, _>>()?;
        write_bloom_csv(&ctx.work.bloom_csv(pipeline), &labels)?;
        m.bloom = Some(BloomHistogram::from_labels(labels.iter().map(|(_, l)| l)));
    }

    if ctx.config.metrics.preference {
        let pcfg = &ctx.config.metrics.preference_config;
        let passages: HashMap<&str, &str> = chunks.iter().map(|c| (c.id.as_str(), c.text.as_str())).collect();
        let limit = pcfg.max_questions.unwrap_or(kept.len()).min(kept.len());
        let stats = parallel_map(&kept[..limit], threads, |r| {
            let passage = passages.get(r.source_chunk_id.as_str()).copied().unwrap_or_default();
            preference_metrics(&gw, &r.id, passage, &r.question, pcfg)
        })
        .into_iter()
        .collect::<std::result::Result<Vec<PreferenceStat>, _>>()?;
        write_preference_csv(&ctx.work.preference_csv(pipeline), &stats)?;
        m.preference = Some(PreferenceSummary::from_stats(&stats));
    }

    jsonl::write_json(&ctx.work.metrics(pipeline), &m)?;
    let mut msg = format!("{pipeline}:");
    if let Some(e) = &m.efficiency {
        msg.push_str(&format!(" efficiency {e}"));
    }
    if let Some(c) = &m.coverage {
        msg.push_str(&format!(" TC {:.4}", c.tc));
    }
    if let Some(p) = &m.preference {
        msg.push_str(&format!(
            " RM(y_l) {:.2} len ratio {:.2} gap {:.2}",
            p.mean_rejected_reward, p.mean_rejected_length_ratio, p.mean_reward_gap
        ));
    }
    Ok(msg)
}

/// Embeds every owner in `wanted` missing from the store at `path`, in
/// batches, and saves the store.
fn ensure_embeddings(ctx: &Context, gw: &Gateway, wanted: Vec<EmbedInput>) -> Result<EmbeddingStore> {
    let path = ctx.work.embeddings();
    let mut store = if path.is_file() {
        EmbeddingStore::load(&path)?
    } else {
        EmbeddingStore::new()
    };
    let mut seen = std::collections::HashSet::new();
    let missing: Vec<EmbedInput> = wanted
        .into_iter()
        .filter(|w| !store.contains(&w.owner_id) && seen.insert(w.owner_id.clone()))
        .collect();
    if missing.is_empty() {
        return Ok(store);
    }
    for batch in missing.chunks(ctx.config.provider.embed_batch) {
        for r in gw.embed(batch)? {
            store.insert(r.owner_id, r.vector)?;
        }
    }
    store.save(&path)?;
    Ok(store)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainFile {
    pub pairs: usize,
    pub steps: usize,
    pub loss_curve: Vec<f64>,
    pub config: qagen::retrieval::TrainConfig,
}

pub fn cmd_train(ctx: &Context, pipeline: Pipeline) -> Result<String> {
    let kept: Vec<GeneratedQA> = jsonl::read(&WorkDir::require(ctx.work.deduped(pipeline), "dedup")?)?;
    let chunks = ctx.chunks()?;
    let test = ctx.pool(ctx.work.expert_test(), &chunks)?;
    let gw = ctx.gateway()?;
    let wanted: Vec<EmbedInput> = chunks
        .iter()
        .map(|c| EmbedInput::new(&c.id, &c.text))
        .chain(test.iter().map(|q| EmbedInput::new(&q.id, &q.question)))
        .chain(kept.iter().map(|r| EmbedInput::new(&r.id, &r.question)))
        .collect();
    let store = ensure_embeddings(ctx, &gw, wanted)?;
    let pairs: Vec<Pair> = kept
        .iter()
        .map(|r| Pair {
            query_id: r.id.clone(),
            chunk_id: r.source_chunk_id.clone(),
        })
        .collect();
    let tcfg = ctx.config.retrieval.train_config(ctx.seed());
    let out = train_adapter(&pairs, &store, &tcfg)?;
    jsonl::write(&ctx.work.pairs(pipeline), &pairs)?;
    jsonl::write_json(&ctx.work.adapter(pipeline), &out.adapter)?;
    let file = TrainFile {
        pairs: out.pairs,
        steps: out.steps,
        loss_curve: out.loss_curve,
        config: tcfg,
    };
    jsonl::write_json(&ctx.work.train_report(pipeline), &file)?;
    let curve: Vec<String> = file.loss_curve.iter().map(|l| format!("{l:.4}")).collect();
    Ok(format!(
        "{pipeline}: trained on {} pair(s), {} step(s); loss per epoch [{}]",
        file.pairs,
        file.steps,
        curve.join(", ")
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalFile {
    pub baseline: RetrievalResult,
    pub trained: RetrievalResult,
}

pub fn cmd_eval(ctx: &Context, pipeline: Pipeline) -> Result<String> {
    let adapter: AdapterModel = jsonl::read_json(&WorkDir::require(ctx.work.adapter(pipeline), "train")?)?;
    let store = EmbeddingStore::load(&WorkDir::require(ctx.work.embeddings(), "train")?)?;
    let chunks = ctx.chunks()?;
    let test = ctx.pool(ctx.work.expert_test(), &chunks)?;
    let queries: Vec<TestQuery> = test
        .iter()
        .map(|q| TestQuery {
            query_id: q.id.clone(),
            gold_chunk_ids: q.source_chunk_ids.clone(),
        })
        .collect();
    let candidates: Vec<String> = chunks.iter().map(|c| c.id.clone()).collect();
    let ks = &ctx.config.retrieval.ks;
    let identity = AdapterModel::identity(store.dim(), adapter.temperature);
    let baseline = evaluate_topk(&identity, &queries, &store, &candidates, ks)?;
    let trained = evaluate_topk(&adapter, &queries, &store, &candidates, ks)?;
    let mut table = baseline.table("identity");
    table.push_str(trained.table(pipeline.as_str()).lines().nth(1).unwrap_or_default());
    jsonl::write_json(&ctx.work.retrieval(pipeline), &RetrievalFile { baseline, trained })?;
    Ok(table)
}

pub fn cmd_report(ctx: &Context) -> Result<String> {
    let mut pipelines = Vec::new();
    let mut baseline = None;
    for p in Pipeline::ALL {
        let mut m = if ctx.work.metrics(p).is_file() {
            jsonl::read_json::<PipelineMetrics>(&ctx.work.metrics(p))?
        } else {
            PipelineMetrics::new(p)
        };
        if ctx.work.retrieval(p).is_file() {
            let r: RetrievalFile = jsonl::read_json(&ctx.work.retrieval(p))?;
            baseline.get_or_insert(r.baseline);
            m.retrieval = Some(r.trained);
        }
        pipelines.push(m);
    }
    let report = match aggregate_report(ctx.config.echo(), pipelines, baseline) {
        Ok(r) => r,
        Err(qagen::Error::Validation(_)) => {
            return Err(CliError::Dependency {
                path: ctx.work.metrics(Pipeline::Expertgenqa),
                command: "metrics",
            })
        }
        Err(e) => return Err(e.into()),
    };
    let path = ctx.work.report();
    std::fs::write(&path, report.to_json()?).map_err(|e| qagen::Error::Io { path: path.clone(), source: e })?;
    Ok(summary_table(&report))
}

/// Aligned text summary of a report.
pub fn summary_table(report: &MetricsReport) -> String {
    let ks: Vec<usize> = report
        .baseline_retrieval
        .as_ref()
        .map(|r| r.top_k_accuracy.keys().copied().collect())
        .unwrap_or_default();
    let mut out = format!(
        "{:<12}{:>11}{:>8}{:>10}{:>10}{:>8}",
        "pipeline", "efficiency", "TC", "RM(y_l)", "len", "gap"
    );
    for k in &ks {
        out.push_str(&format!("{:>9}", format!("top-{k}")));
    }
    out.push('\n');
    let cell = |v: Option<String>, w: usize| format!("{:>w$}", v.unwrap_or_else(|| "-".into()));
    let row = |name: &str, m: Option<&PipelineMetrics>, r: Option<&RetrievalResult>| {
        let mut line = format!("{name:<12}");
        line.push_str(&cell(m.and_then(|m| m.efficiency.as_ref()).map(|e| e.to_string()), 11));
        line.push_str(&cell(m.and_then(|m| m.coverage.as_ref()).map(|c| format!("{:.3}", c.tc)), 8));
        let p = m.and_then(|m| m.preference.as_ref());
        line.push_str(&cell(p.map(|p| format!("{:.2}", p.mean_rejected_reward)), 10));
        line.push_str(&cell(p.map(|p| format!("{:.2}", p.mean_rejected_length_ratio)), 10));
        line.push_str(&cell(p.map(|p| format!("{:.2}", p.mean_reward_gap)), 8));
        for k in &ks {
            line.push_str(&cell(r.and_then(|r| r.top_k_accuracy.get(k)).map(|a| format!("{:.2}", a * 100.0)), 9));
        }
        line.push('\n');
        line
    };
    if let Some(b) = &report.baseline_retrieval {
        out.push_str(&row("identity", None, Some(b)));
    }
    for (p, m) in &report.pipelines {
        out.push_str(&row(p.as_str(), Some(m), m.retrieval.as_ref()));
    }
    for n in &report.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

/// Every stage for each pipeline, then the report.
pub fn cmd_run(ctx: &Context, pipelines: &[Pipeline]) -> Result<Vec<String>> {
    let mut log = vec![cmd_ingest(ctx)?];
    for &p in pipelines {
        log.push(cmd_generate(ctx, p)?);
        log.push(cmd_dedup(ctx, p)?);
        log.push(cmd_metrics(ctx, p)?);
        log.push(cmd_train(ctx, p)?);
        log.push(cmd_eval(ctx, p)?);
    }
    log.push(cmd_report(ctx)?);
    Ok(log)
}

/// Runs-so-far per pipeline, for `status`.
pub fn stage_status(work: &WorkDir) -> BTreeMap<Pipeline, Vec<(&'static str, bool)>> {
    Pipeline::ALL
        .into_iter()
        .map(|p| {
            let stages = vec![
                ("generate", work.generated(p).is_file()),
                ("dedup", work.deduped(p).is_file()),
                ("metrics", work.metrics(p).is_file()),
                ("train", work.adapter(p).is_file()),
                ("eval", work.retrieval(p).is_file()),
            ];
            (p, stages)
        })
        .collect()
}
