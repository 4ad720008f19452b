//! Question generation: the style × topic few-shot protocol plus the random
//! few-shot and template baselines.
//!
//! For each chunk `d`, each style `s` and each combination `k` in `0..K`, a set
//! of `n` style-matching expert examples is sampled; each extracted topic `t` of
//! `d` then gets one generation call with `n_samples` completions. Topics are the
//! innermost loop so the example block is a shared prompt prefix.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentChunk, ExpertQA, StyleCategory, StyleSet, Topic};
use crate::error::{Error, Result};
use crate::exec::parallel_map;
use crate::gateway::prompts::{
    clean_question, render_answer_prompt, render_fewshot_prompt, render_generation_prompt,
    render_paraphrase_prompt, render_template_prompt, render_topic_prompt, PromptTemplate,
};
use crate::gateway::{parse_topics, ChatRequest, Gateway};
use crate::jsonl;
use crate::text::{content_id, derive_seed};

/// Resampling budget when a combination repeats an earlier one as a set.
pub const MAX_COMBO_TRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pipeline {
    Expertgenqa,
    Fewshot,
    Template,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Expertgenqa, Pipeline::Fewshot, Pipeline::Template];

    pub fn as_str(&self) -> &'static str {
        match self {
            Pipeline::Expertgenqa => "expertgenqa",
            Pipeline::Fewshot => "fewshot",
            Pipeline::Template => "template",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown pipeline {s:?}; expected expertgenqa, fewshot or template"
                ))
            })
    }
}

/// A synthetic question with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQA {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub answer: Option<String>,
    pub source_chunk_id: String,
    #[serde(default)]
    pub style: Option<StyleCategory>,
    #[serde(default)]
    pub topic: Option<Topic>,
    pub combo_id: u32,
    pub sample_idx: u32,
    pub pipeline: Pipeline,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template_id: Option<String>,
}

/// Question-type × answer-length × style-directive grid for the template baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBank {
    pub question_types: Vec<String>,
    pub answer_lengths: Vec<String>,
    pub style_directives: Vec<String>,
}

impl Default for TemplateBank {
    fn default() -> Self {
        let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect();
        TemplateBank {
            question_types: s(&["factual", "inference", "summarization", "comparison"]),
            answer_lengths: s(&["a single sentence", "a short paragraph"]),
            style_directives: s(&["interrogative", "imperative"]),
        }
    }
}

impl TemplateBank {
    pub fn templates(&self) -> Vec<PromptTemplate> {
        let mut out = Vec::new();
        for q in &self.question_types {
            for a in &self.answer_lengths {
                for s in &self.style_directives {
                    out.push(PromptTemplate {
                        id: format!("t{:03}", out.len()),
                        question_type: q.clone(),
                        answer_length: a.clone(),
                        style_directive: s.clone(),
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    /// Few-shot combinations per style.
    pub k: usize,
    /// Examples per combination.
    pub n: usize,
    pub n_samples: u32,
    pub temperature: f64,
    pub topic_temperature: f64,
    pub max_tokens: u32,
    pub styles: StyleSet,
    /// Error instead of dropping a style that has fewer than `n` examples.
    pub strict: bool,
    /// Generation attempts per chunk for the random few-shot baseline.
    pub fewshot_attempts: usize,
    pub templates: TemplateBank,
    /// Passes over the template bank per chunk.
    pub template_rounds: usize,
    /// Concurrent generation jobs; the gateway's in-flight limit still applies.
    pub concurrency: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            k: 3,
            n: 10,
            n_samples: 5,
            temperature: 1.0,
            topic_temperature: 0.0,
            max_tokens: 256,
            styles: StyleSet::default(),
            strict: false,
            fewshot_attempts: 3,
            templates: TemplateBank::default(),
            template_rounds: 1,
            concurrency: crate::gateway::DEFAULT_IN_FLIGHT,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("generation.k must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("generation.n_samples must be positive".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::Config("generation.temperature must be >= 0".into()));
        }
        if self.styles.is_empty() {
            return Err(Error::Config("generation.styles is empty".into()));
        }
        Ok(())
    }
}

/// Per-chunk topic cache persisted beside the chunk store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TopicStore {
    topics: BTreeMap<String, Vec<Topic>>,
}

#[derive(Serialize, Deserialize)]
struct TopicRecord {
    chunk_id: String,
    topics: Vec<Topic>,
}

impl TopicStore {
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Ok(TopicStore::default());
        }
        let records: Vec<TopicRecord> = jsonl::read(path)?;
        Ok(TopicStore {
            topics: records.into_iter().map(|r| (r.chunk_id, r.topics)).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<TopicRecord> = self
            .topics
            .iter()
            .map(|(k, v)| TopicRecord {
                chunk_id: k.clone(),
                topics: v.clone(),
            })
            .collect();
        jsonl::write(path, &records)
    }

    pub fn get(&self, chunk_id: &str) -> Option<&[Topic]> {
        self.topics.get(chunk_id).map(Vec::as_slice)
    }

    pub fn insert(&mut self, chunk_id: &str, topics: Vec<Topic>) {
        self.topics.insert(chunk_id.to_string(), topics);
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Copies cached topics into chunks that have none.
    pub fn apply(&self, chunks: &mut [DocumentChunk]) {
        for c in chunks.iter_mut().filter(|c| c.topics.is_empty()) {
            if let Some(t) = self.topics.get(&c.id) {
                c.topics = t.clone();
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub pipeline: Option<Pipeline>,
    pub n_shots: usize,
    pub calls_attempted: u64,
    pub calls_failed: u64,
    pub records_emitted: u64,
    pub empty_completions: u64,
    pub topic_calls: u64,
    pub chunks_skipped: Vec<String>,
    pub styles_dropped: Vec<String>,
    pub combo_collisions: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationOutput {
    pub records: Vec<GeneratedQA>,
    pub report: RunReport,
}

/// Samples `n` distinct examples of `style`, deterministically under `seed`.
pub fn sample_fewshot(
    pool: &[ExpertQA],
    style: &StyleCategory,
    n: usize,
    seed: u64,
) -> Result<Vec<ExpertQA>> {
    let candidates: Vec<&ExpertQA> = pool.iter().filter(|q| &q.style == style).collect();
    if candidates.len() < n {
        return Err(Error::Config(format!(
            "style {style} has {} expert example(s), {n} requested",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw(&candidates, n, &mut rng))
}

fn draw(candidates: &[&ExpertQA], n: usize, rng: &mut ChaCha8Rng) -> Vec<ExpertQA> {
    candidates
        .choose_multiple(rng, n)
        .map(|q| (*q).clone())
        .collect()
}

fn id_set(examples: &[ExpertQA]) -> BTreeSet<String> {
    examples.iter().map(|e| e.id.clone()).collect()
}

struct Job<'a> {
    chunk: &'a DocumentChunk,
    style: Option<StyleCategory>,
    combo_id: u32,
    examples: Vec<ExpertQA>,
    template: Option<PromptTemplate>,
}

#[derive(Default)]
struct JobOutcome {
    records: Vec<GeneratedQA>,
    attempted: u64,
    failed: u64,
    empty: u64,
}

pub struct Generator<'a> {
    gateway: &'a Gateway,
    config: &'a GenerationConfig,
    seed: u64,
}

impl<'a> Generator<'a> {
    pub fn new(gateway: &'a Gateway, config: &'a GenerationConfig, seed: u64) -> Self {
        Generator {
            gateway,
            config,
            seed,
        }
    }

    fn topic_request(&self, chunk: &DocumentChunk, salt: u32) -> Result<ChatRequest> {
        let mut req = render_topic_prompt(chunk)?
            .with_temperature(self.config.topic_temperature)
            .with_max_tokens(self.config.max_tokens);
        req.retry_salt = salt;
        Ok(req)
    }

    fn fetch_topics(&self, chunk: &DocumentChunk) -> Result<Vec<Topic>> {
        let mut last = None;
        for salt in 0..2 {
            let completion = self.gateway.chat(&self.topic_request(chunk, salt)?)?;
            match parse_topics(&completion[0]) {
                Ok(t) => return Ok(t),
                Err(e) => {
                    log::warn!("chunk {}: {e}", chunk.id);
                    last = Some(e);
                }
            }
        }
        Err(last.expect("two attempts"))
    }

    /// Returns the chunk's topics, calling the model only when neither the chunk
    /// nor the store has them. Malformed output is re-asked once.
    pub fn extract_topics(
        &self,
        chunk: &mut DocumentChunk,
        store: &mut TopicStore,
    ) -> Result<Vec<Topic>> {
        if !chunk.topics.is_empty() {
            store.insert(&chunk.id, chunk.topics.clone());
            return Ok(chunk.topics.clone());
        }
        if let Some(t) = store.get(&chunk.id) {
            chunk.topics = t.to_vec();
            return Ok(chunk.topics.clone());
        }
        let topics = self.fetch_topics(chunk)?;
        store.insert(&chunk.id, topics.clone());
        chunk.topics = topics.clone();
        Ok(topics)
    }

    /// Extracts topics for every chunk lacking them. Failing chunks are skipped
    /// and listed in the report.
    pub fn extract_all_topics(
        &self,
        chunks: &mut [DocumentChunk],
        store: &mut TopicStore,
        report: &mut RunReport,
    ) -> Result<()> {
        store.apply(chunks);
        let missing: Vec<usize> = (0..chunks.len())
            .filter(|&i| chunks[i].topics.is_empty())
            .collect();
        let fetched = {
            let view: Vec<&DocumentChunk> = missing.iter().map(|&i| &chunks[i]).collect();
            parallel_map(&view, self.config.concurrency, |c| self.fetch_topics(c))
        };
        report.topic_calls += missing.len() as u64;
        for (i, result) in missing.into_iter().zip(fetched) {
            match result {
                Ok(t) => {
                    store.insert(&chunks[i].id, t.clone());
                    chunks[i].topics = t;
                }
                Err(Error::Contract(m)) => return Err(Error::Contract(m)),
                Err(e) => {
                    log::warn!("skipping chunk {}: {e}", chunks[i].id);
                    report.chunks_skipped.push(chunks[i].id.clone());
                }
            }
        }
        for c in chunks.iter() {
            store.insert(&c.id, c.topics.clone());
        }
        Ok(())
    }

    fn request(&self, mut req: ChatRequest) -> ChatRequest {
        req.n_samples = self.config.n_samples;
        req.temperature = self.config.temperature;
        req.max_tokens = self.config.max_tokens;
        req
    }

    fn run_job(&self, pipeline: Pipeline, job: &Job<'_>) -> Result<JobOutcome> {
        let mut requests: Vec<(Option<Topic>, ChatRequest)> = Vec::new();
        match pipeline {
            Pipeline::Expertgenqa => {
                for t in &job.chunk.topics {
                    let req = render_generation_prompt(job.chunk, &job.chunk.topics, t, &job.examples)?;
                    requests.push((Some(t.clone()), self.request(req)));
                }
            }
            Pipeline::Fewshot => {
                requests.push((None, self.request(render_fewshot_prompt(job.chunk, &job.examples)?)));
            }
            Pipeline::Template => {
                let template = job.template.as_ref().expect("template job");
                requests.push((None, self.request(render_template_prompt(job.chunk, template)?)));
            }
        }
        let mut out = JobOutcome::default();
        for (topic, req) in requests {
            out.attempted += 1;
            let completions = match self.gateway.chat(&req) {
                Ok(c) => c,
                Err(e @ Error::Contract(_)) => return Err(e),
                Err(e) => {
                    log::warn!("generation call for chunk {} failed: {e}", job.chunk.id);
                    out.failed += 1;
                    continue;
                }
            };
            for (j, completion) in completions.iter().enumerate() {
                let question = clean_question(completion);
                if question.is_empty() {
                    out.empty += 1;
                    continue;
                }
                let style = job.style.as_ref().map(|s| s.name().to_string()).unwrap_or_default();
                let topic_label = topic.as_ref().map(|t| t.label().to_string()).unwrap_or_default();
                let template_id = job.template.as_ref().map(|t| t.id.clone());
                let id = format!(
                    "g-{}",
                    content_id(&[
                        pipeline.as_str(),
                        &job.chunk.id,
                        &style,
                        &job.combo_id.to_string(),
                        &topic_label,
                        template_id.as_deref().unwrap_or(""),
                        &j.to_string(),
                    ])
                );
                out.records.push(GeneratedQA {
                    id,
                    question,
                    answer: None,
                    source_chunk_id: job.chunk.id.clone(),
                    style: job.style.clone(),
                    topic: topic.clone(),
                    combo_id: job.combo_id,
                    sample_idx: j as u32,
                    pipeline,
                    template_id,
                });
            }
        }
        Ok(out)
    }

    fn execute(
        &self,
        pipeline: Pipeline,
        chunks: &[DocumentChunk],
        jobs: Vec<Job<'_>>,
        mut report: RunReport,
    ) -> Result<GenerationOutput> {
        let outcomes = parallel_map(&jobs, self.config.concurrency, |j| self.run_job(pipeline, j));
        let mut records = Vec::new();
        for o in outcomes {
            let o = o?;
            report.calls_attempted += o.attempted;
            report.calls_failed += o.failed;
            report.empty_completions += o.empty;
            records.extend(o.records);
        }
        canonical_sort(&mut records, chunks);
        report.records_emitted = records.len() as u64;
        report.pipeline = Some(pipeline);
        Ok(GenerationOutput { records, report })
    }

    /// K combinations of `n` examples for one (chunk, style); resamples on
    /// set-collision up to [`MAX_COMBO_TRIES`] times.
    fn style_combos(
        &self,
        chunk: &DocumentChunk,
        style: &StyleCategory,
        candidates: &[&ExpertQA],
        report: &mut RunReport,
    ) -> Vec<Vec<ExpertQA>> {
        let n = self.config.n;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &["combo", &chunk.id, style.name()]));
        let mut combos: Vec<Vec<ExpertQA>> = Vec::with_capacity(self.config.k);
        let mut seen: Vec<BTreeSet<String>> = Vec::new();
        for _ in 0..self.config.k {
            let mut pick = draw(candidates, n, &mut rng);
            if n > 0 {
                let mut tries = 1;
                while seen.contains(&id_set(&pick)) && tries < MAX_COMBO_TRIES {
                    pick = draw(candidates, n, &mut rng);
                    tries += 1;
                }
                if seen.contains(&id_set(&pick)) {
                    log::warn!(
                        "chunk {} style {style}: accepting a repeated combination after {MAX_COMBO_TRIES} tries",
                        chunk.id
                    );
                    report.combo_collisions += 1;
                }
            }
            seen.push(id_set(&pick));
            combos.push(pick);
        }
        combos
    }

    pub fn run_expertgenqa(
        &self,
        chunks: &mut [DocumentChunk],
        pool: &[ExpertQA],
        store: &mut TopicStore,
    ) -> Result<GenerationOutput> {
        self.config.validate()?;
        let mut report = RunReport {
            n_shots: self.config.n,
            ..Default::default()
        };
        self.extract_all_topics(chunks, store, &mut report)?;

        let mut active: Vec<(StyleCategory, Vec<&ExpertQA>)> = Vec::new();
        for style in self.config.styles.iter() {
            let candidates: Vec<&ExpertQA> = pool.iter().filter(|q| &q.style == style).collect();
            if candidates.len() < self.config.n {
                let msg = format!(
                    "style {style} has {} expert example(s), {} requested",
                    candidates.len(),
                    self.config.n
                );
                if self.config.strict {
                    return Err(Error::Config(msg));
                }
                log::warn!("dropping {msg}");
                report.styles_dropped.push(style.name().to_string());
                continue;
            }
            active.push((style.clone(), candidates));
        }

        let skipped: BTreeSet<&str> = report.chunks_skipped.iter().map(String::as_str).collect();
        let mut jobs = Vec::new();
        let mut combo_report = RunReport::default();
        for chunk in chunks.iter().filter(|c| !skipped.contains(c.id.as_str())) {
            for (style, candidates) in &active {
                let combos = self.style_combos(chunk, style, candidates, &mut combo_report);
                for (k, examples) in combos.into_iter().enumerate() {
                    jobs.push(Job {
                        chunk,
                        style: Some(style.clone()),
                        combo_id: k as u32,
                        examples,
                        template: None,
                    });
                }
            }
        }
        report.combo_collisions = combo_report.combo_collisions;
        self.execute(Pipeline::Expertgenqa, chunks, jobs, report)
    }

    /// Random `n` examples from the whole pool per attempt; no style or topic.
    pub fn run_fewshot_baseline(
        &self,
        chunks: &[DocumentChunk],
        pool: &[ExpertQA],
    ) -> Result<GenerationOutput> {
        self.config.validate()?;
        if self.config.n > pool.len() {
            return Err(Error::Config(format!(
                "few-shot baseline needs {} examples, pool has {}",
                self.config.n,
                pool.len()
            )));
        }
        let all: Vec<&ExpertQA> = pool.iter().collect();
        let mut jobs = Vec::new();
        for chunk in chunks {
            for attempt in 0..self.config.fewshot_attempts {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    self.seed,
                    &["fewshot", &chunk.id, &attempt.to_string()],
                ));
                jobs.push(Job {
                    chunk,
                    style: None,
                    combo_id: attempt as u32,
                    examples: draw(&all, self.config.n, &mut rng),
                    template: None,
                });
            }
        }
        let report = RunReport {
            n_shots: self.config.n,
            ..Default::default()
        };
        self.execute(Pipeline::Fewshot, chunks, jobs, report)
    }

    /// Each round visits every template once per chunk, in a seeded order.
    pub fn run_template_baseline(&self, chunks: &[DocumentChunk]) -> Result<GenerationOutput> {
        self.config.validate()?;
        let bank = self.config.templates.templates();
        if bank.is_empty() {
            return Err(Error::Config("template bank is empty".into()));
        }
        let mut jobs = Vec::new();
        for chunk in chunks {
            for round in 0..self.config.template_rounds {
                let mut order = bank.clone();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                    self.seed,
                    &["template", &chunk.id, &round.to_string()],
                )));
                for (pos, template) in order.into_iter().enumerate() {
                    jobs.push(Job {
                        chunk,
                        style: None,
                        combo_id: (round * bank.len() + pos) as u32,
                        examples: Vec::new(),
                        template: Some(template),
                    });
                }
            }
        }
        self.execute(Pipeline::Template, chunks, jobs, RunReport::default())
    }

    /// Optional answer pass for records that have none.
    pub fn synthesize_answers(
        &self,
        records: &mut [GeneratedQA],
        chunks: &[DocumentChunk],
    ) -> Result<usize> {
        let text: HashMap<&str, &str> = chunks.iter().map(|c| (c.id.as_str(), c.text.as_str())).collect();
        let todo: Vec<usize> = (0..records.len()).filter(|&i| records[i].answer.is_none()).collect();
        let answers = {
            let view: Vec<&GeneratedQA> = todo.iter().map(|&i| &records[i]).collect();
            parallel_map(&view, self.config.concurrency, |r| {
                let passage = text.get(r.source_chunk_id.as_str()).copied().unwrap_or_default();
                let req = render_answer_prompt(passage, &r.question)
                    .with_temperature(0.0)
                    .with_max_tokens(self.config.max_tokens);
                self.gateway.chat(&req).map(|mut c| c.remove(0))
            })
        };
        let mut filled = 0;
        for (i, a) in todo.into_iter().zip(answers) {
            match a {
                Ok(a) => {
                    records[i].answer = Some(a.trim().to_string());
                    filled += 1;
                }
                Err(e) => log::warn!("answer for {} failed: {e}", records[i].id),
            }
        }
        Ok(filled)
    }
}

/// Rewrites a question in the style of the given examples.
pub fn paraphrase_question(gateway: &Gateway, question: &str, examples: &[ExpertQA]) -> Result<String> {
    let req = render_paraphrase_prompt(question, examples)?;
    let mut out = gateway.chat(&req)?;
    Ok(clean_question(&out.remove(0)))
}

/// Orders records by (doc_id, seq, style, combo_id, topic, template, sample_idx).
pub fn canonical_sort(records: &mut [GeneratedQA], chunks: &[DocumentChunk]) {
    let pos: HashMap<&str, (&str, u64)> = chunks
        .iter()
        .map(|c| (c.id.as_str(), (c.doc_id.as_str(), c.seq)))
        .collect();
    records.sort_by(|a, b| {
        let key = |r: &GeneratedQA| {
            (
                pos.get(r.source_chunk_id.as_str()).copied().unwrap_or(("", u64::MAX)),
                r.style.as_ref().map(|s| s.name().to_string()),
                r.combo_id,
                r.topic.as_ref().map(|t| t.label().to_string()),
                r.template_id.clone(),
                r.sample_idx,
            )
        };
        key(a).cmp(&key(b)).then_with(|| a.id.cmp(&b.id))
    });
}

pub fn save_generated(path: &Path, records: &[GeneratedQA]) -> Result<()> {
    jsonl::write(path, records)
}

pub fn load_generated(path: &Path) -> Result<Vec<GeneratedQA>> {
    jsonl::read(path)
}
