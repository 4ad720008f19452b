//! Prompt templates. Every model-facing string lives here so the mock provider
//! and the tests can recognise request kinds by their markers.

use serde::{Deserialize, Serialize};

use super::{ChatRequest, Message, RewardRequest, Role};
use crate::corpus::{DocumentChunk, ExpertQA, Topic};
use crate::error::{Error, Result};

pub const PASSAGE_PREFIX: &str = "Passage: ";
pub const SEPARATOR: &str = "\n\n-----\n\n";

pub const TOPIC_INSTRUCTION: &str = "Please analyze the given passage and identify its main topics. \
Provide your response in JSON format where the key is 'topics' and its value is an array of the \
main topic names. For example:\n\n{\n'topics': ['topic1', 'topic2', 'topic3']\n}";

pub const TOPIC_LIST_HEADER: &str = "The passage above covers the following topics:";
pub const GENERATION_MARKER: &str = "Generate a question from the passage related to '";
pub const FEWSHOT_INSTRUCTION: &str = "Please generate a question from the passage above.";
pub const EXAMPLES_HEADER: &str = "Here are example questions written by domain experts:";
pub const TEMPLATE_MARKER: &str = "question from the passage above. Its answer should be";

pub const PARAPHRASE_INSTRUCTION: &str = "Please paraphrase the target question to match the style \
of the examples. Do not make any changes that would alter the meaning and change its answer. Do not \
answer the question. Respond with only the rephrased question (without any tags).";

pub const REWARD_SYSTEM: &str = "A chat between a curious user and an artificial intelligence \
assistant. The assistant gives helpful, detailed, and polite answers to the user's questions.";

pub const ANSWER_MARKER: &str = "Answer the following question using the passage above.";

/// Bumped whenever the classification prompt text changes.
pub const BLOOM_PROMPT_VERSION: &str = "bloom-v1";
pub const BLOOM_MARKER: &str = "according to Bloom's Revised Taxonomy";

fn passage_block(text: &str) -> String {
    format!("{PASSAGE_PREFIX}{text}{SEPARATOR}")
}

fn require_text(chunk: &DocumentChunk) -> Result<()> {
    if chunk.text.trim().is_empty() {
        return Err(Error::Contract(format!("chunk {} has empty text", chunk.id)));
    }
    Ok(())
}

/// Serialized few-shot block; empty for zero-shot so the prompt starts at the passage.
pub fn examples_block(examples: &[ExpertQA]) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let mut out = String::from(EXAMPLES_HEADER);
    out.push_str("\n\n");
    for (i, ex) in examples.iter().enumerate() {
        out.push_str(&format!("Example {}:\nQuestion: {}\n", i + 1, ex.question));
        if !ex.answer.is_empty() {
            out.push_str(&format!("Answer: {}\n", ex.answer));
        }
        out.push('\n');
    }
    out.push_str("-----\n\n");
    out
}

pub fn render_topic_prompt(chunk: &DocumentChunk) -> Result<ChatRequest> {
    require_text(chunk)?;
    Ok(ChatRequest::user(format!("{}{TOPIC_INSTRUCTION}", passage_block(&chunk.text))))
}

/// Few-shot block, then passage, then the topic list and the selected topic, so
/// every topic of one combination shares the prefix through the passage.
pub fn render_generation_prompt(
    chunk: &DocumentChunk,
    topics: &[Topic],
    selected: &Topic,
    fewshot: &[ExpertQA],
) -> Result<ChatRequest> {
    require_text(chunk)?;
    if !topics.contains(selected) {
        return Err(Error::Contract(format!(
            "selected topic {selected:?} is not among the chunk's topics"
        )));
    }
    let list: String = topics.iter().map(|t| format!("- {t}\n")).collect();
    Ok(ChatRequest::user(format!(
        "{}{}{TOPIC_LIST_HEADER}\n{list}\n{GENERATION_MARKER}{selected}'.",
        examples_block(fewshot),
        passage_block(&chunk.text),
    )))
}

/// Baseline: examples (style-agnostic) and the passage, no topic conditioning.
pub fn render_fewshot_prompt(chunk: &DocumentChunk, fewshot: &[ExpertQA]) -> Result<ChatRequest> {
    require_text(chunk)?;
    Ok(ChatRequest::user(format!(
        "{}{}{FEWSHOT_INSTRUCTION}",
        examples_block(fewshot),
        passage_block(&chunk.text)
    )))
}

/// One entry of the template bank used by the template baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub question_type: String,
    pub answer_length: String,
    pub style_directive: String,
}

pub fn render_template_prompt(
    chunk: &DocumentChunk,
    template: &PromptTemplate,
) -> Result<ChatRequest> {
    require_text(chunk)?;
    Ok(ChatRequest::user(format!(
        "{}Generate a {} {TEMPLATE_MARKER} {}. Phrase the question in {} form.",
        passage_block(&chunk.text),
        template.question_type,
        template.answer_length,
        template.style_directive
    )))
}

pub fn render_paraphrase_prompt(question: &str, examples: &[ExpertQA]) -> Result<ChatRequest> {
    if examples.is_empty() {
        return Err(Error::Contract(
            "paraphrasing needs at least one style example".into(),
        ));
    }
    let list: Vec<&str> = examples.iter().map(|e| e.question.as_str()).collect();
    Ok(ChatRequest::user(format!(
        "<target_question>\n{question}\n</target_question>\n\n<examples>\n{}\n</examples>\n\n{PARAPHRASE_INSTRUCTION}",
        list.join("\n")
    )))
}

/// Transcript for scoring a question as the assistant's "response" to a
/// request for a question about the passage.
pub fn question_reward_request(passage: &str, question: &str) -> RewardRequest {
    RewardRequest {
        transcript: vec![
            Message::new(Role::System, REWARD_SYSTEM),
            Message::new(
                Role::User,
                format!("{PASSAGE_PREFIX}{passage}\n-----\n{FEWSHOT_INSTRUCTION}"),
            ),
            Message::new(Role::Assistant, question),
        ],
    }
}

/// The context-question `x` a response is sampled for.
pub fn response_context(passage: &str, question: &str) -> String {
    format!("{}{question}", passage_block(passage))
}

pub fn render_response_prompt(passage: &str, question: &str) -> ChatRequest {
    let mut req = ChatRequest::user(response_context(passage, question));
    req.system = Some(REWARD_SYSTEM.to_string());
    req
}

pub fn response_reward_request(passage: &str, question: &str, response: &str) -> RewardRequest {
    RewardRequest {
        transcript: vec![
            Message::new(Role::System, REWARD_SYSTEM),
            Message::new(Role::User, response_context(passage, question)),
            Message::new(Role::Assistant, response),
        ],
    }
}

pub fn render_answer_prompt(passage: &str, question: &str) -> ChatRequest {
    ChatRequest::user(format!(
        "{}{ANSWER_MARKER}\n\nQuestion: {question}",
        passage_block(passage)
    ))
}

pub fn render_bloom_prompt(question: &str) -> Result<ChatRequest> {
    if question.trim().is_empty() {
        return Err(Error::Contract("cannot classify an empty question".into()));
    }
    Ok(ChatRequest::user(format!(
        "Classify the question below {BLOOM_MARKER}. Choose exactly one of the six cognitive \
         levels: Remember, Understand, Apply, Analyze, Evaluate, Create.\n\n<question>\n{}\n</question>\n\n\
         Respond with only the level name.",
        question.trim()
    ))
    .with_temperature(0.0)
    .with_max_tokens(8))
}

/// Passage embedded in a rendered prompt, if any.
pub fn extract_passage(prompt: &str) -> Option<&str> {
    let start = prompt.find(PASSAGE_PREFIX)? + PASSAGE_PREFIX.len();
    let rest = &prompt[start..];
    let end = rest
        .find(SEPARATOR)
        .or_else(|| rest.find("\n-----\n"))
        .unwrap_or(rest.len());
    Some(&rest[..end])
}

/// Topic selected in a generation prompt, if any.
pub fn extract_selected_topic(prompt: &str) -> Option<&str> {
    let start = prompt.rfind(GENERATION_MARKER)? + GENERATION_MARKER.len();
    prompt[start..].strip_suffix("'.")
}

/// Text between `<tag>` and `</tag>`.
pub fn extract_tagged<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = prompt.find(&open)? + open.len();
    let end = prompt[start..].find(&close)? + start;
    Some(prompt[start..end].trim())
}

/// Strips common wrappers ("Question:", quotes) around a generated question.
pub fn clean_question(completion: &str) -> String {
    let mut q = completion.trim();
    for label in ["Question:", "question:", "Q:"] {
        if let Some(rest) = q.strip_prefix(label) {
            q = rest.trim();
        }
    }
    let q = q.trim_matches(|c| c == '"' || c == '\u{201c}' || c == '\u{201d}');
    crate::text::normalize_whitespace(q)
}
