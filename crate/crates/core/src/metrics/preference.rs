//! Response-preference statistics from reward-model scores.
//!
//! For each question, `n` responses are sampled for the context-question `x`,
//! scored, and summarized by the rejected (lowest-reward) response:
//! its reward, its length relative to `x`, and the gap to the chosen one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::prompts::{render_response_prompt, response_context, response_reward_request};
use crate::gateway::Gateway;
use crate::text::whitespace_len;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    #[default]
    Tokens,
    Chars,
}

impl LengthUnit {
    pub fn measure(&self, text: &str) -> usize {
        match self {
            LengthUnit::Tokens => whitespace_len(text),
            LengthUnit::Chars => text.chars().count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreferenceConfig {
    pub n: u32,
    pub temperature: f64,
    pub max_tokens: u32,
    pub length_unit: LengthUnit,
    /// Count the passage as part of `x` when computing length ratios.
    pub include_context: bool,
    /// Score at most this many questions per pipeline.
    pub max_questions: Option<usize>,
}

impl Default for PreferenceConfig {
    fn default() -> Self {
        PreferenceConfig {
            n: 10,
            temperature: 1.0,
            max_tokens: 256,
            length_unit: LengthUnit::Tokens,
            include_context: true,
            max_questions: None,
        }
    }
}

impl PreferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "preference sampling needs n >= 2, got {}",
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceStat {
    pub question_id: String,
    pub rewards: Vec<f64>,
    pub chosen_idx: usize,
    pub rejected_idx: usize,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
    pub rejected_length_ratio: f64,
    pub reward_gap: f64,
    /// False when some responses could not be sampled or scored; the other
    /// fields then describe only the scored subset (or zero if none).
    pub complete: bool,
}

impl PreferenceStat {
    /// Summarizes scored responses. Ties go to the lowest index for both the
    /// chosen and the rejected response.
    pub fn from_rewards(
        question_id: impl Into<String>,
        rewards: Vec<f64>,
        rejected_len: usize,
        context_len: usize,
    ) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Contract("no rewards to summarize".into()));
        }
        if context_len == 0 {
            return Err(Error::Contract("context x has zero length".into()));
        }
        if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
            return Err(Error::Contract(format!("non-finite reward {r}")));
        }
        let mut chosen = 0;
        let mut rejected = 0;
        for (i, &r) in rewards.iter().enumerate() {
            if r > rewards[chosen] {
                chosen = i;
            }
            if r < rewards[rejected] {
                rejected = i;
            }
        }
        Ok(PreferenceStat {
            question_id: question_id.into(),
            chosen_idx: chosen,
            rejected_idx: rejected,
            chosen_reward: rewards[chosen],
            rejected_reward: rewards[rejected],
            rejected_length_ratio: rejected_len as f64 / context_len as f64,
            reward_gap: rewards[chosen] - rewards[rejected],
            rewards,
            complete: true,
        })
    }

    fn incomplete(question_id: &str) -> Self {
        PreferenceStat {
            question_id: question_id.to_string(),
            rewards: Vec::new(),
            chosen_idx: 0,
            rejected_idx: 0,
            chosen_reward: 0.0,
            rejected_reward: 0.0,
            rejected_length_ratio: 0.0,
            reward_gap: 0.0,
            complete: false,
        }
    }
}

/// Samples `cfg.n` responses for the question in its passage context and
/// scores each one. Provider failures mark the stat incomplete rather than
/// failing the whole run.
pub fn preference_metrics(
    gateway: &Gateway,
    question_id: &str,
    passage: &str,
    question: &str,
    cfg: &PreferenceConfig,
) -> Result<PreferenceStat> {
    cfg.validate()?;
    let req = render_response_prompt(passage, question)
        .with_samples(cfg.n)
        .with_temperature(cfg.temperature)
        .with_max_tokens(cfg.max_tokens);
    let responses = match gateway.chat(&req) {
        Ok(r) => r,
        Err(e @ Error::Provider { .. }) => {
            log::warn!("sampling responses for {question_id} failed: {e}");
            return Ok(PreferenceStat::incomplete(question_id));
        }
        Err(e) => return Err(e),
    };
    let mut rewards = Vec::with_capacity(responses.len());
    let mut lens = Vec::with_capacity(responses.len());
    let mut complete = true;
    for resp in &responses {
        match gateway.score(&response_reward_request(passage, question, resp)) {
            Ok(r) => {
                rewards.push(r);
                lens.push(cfg.length_unit.measure(resp));
            }
            Err(e @ Error::Provider { .. }) => {
                log::warn!("scoring a response for {question_id} failed: {e}");
                complete = false;
            }
            Err(e) => return Err(e),
        }
    }
    if rewards.is_empty() {
        return Ok(PreferenceStat::incomplete(question_id));
    }
    let x = if cfg.include_context {
        response_context(passage, question)
    } else {
        question.to_string()
    };
    let context_len = cfg.length_unit.measure(&x);
    let rejected_len = {
        let mut idx = 0;
        for (i, &r) in rewards.iter().enumerate() {
            if r < rewards[idx] {
                idx = i;
            }
        }
        lens[idx]
    };
    let mut stat = PreferenceStat::from_rewards(question_id, rewards, rejected_len, context_len)?;
    stat.complete = complete;
    Ok(stat)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSummary {
    pub questions: usize,
    pub incomplete: usize,
    pub mean_rejected_reward: f64,
    pub mean_rejected_length_ratio: f64,
    pub mean_reward_gap: f64,
}

impl PreferenceSummary {
    /// Means over complete stats only.
    pub fn from_stats(stats: &[PreferenceStat]) -> Self {
        let done: Vec<&PreferenceStat> = stats.iter().filter(|s| s.complete).collect();
        let mean = |f: fn(&PreferenceStat) -> f64| {
            if done.is_empty() {
                0.0
            } else {
                done.iter().map(|s| f(s)).sum::<f64>() / done.len() as f64
            }
        };
        PreferenceSummary {
            questions: done.len(),
            incomplete: stats.len() - done.len(),
            mean_rejected_reward: mean(|s| s.rejected_reward),
            mean_rejected_length_ratio: mean(|s| s.rejected_length_ratio),
            mean_reward_gap: mean(|s| s.reward_gap),
        }
    }
}
