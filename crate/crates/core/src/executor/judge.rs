//! Answer normalization and correctness judging.

use serde::{Deserialize, Serialize};

use crate::error::BackendError;
use crate::executor::llm::{ChatBackend, ChatMessage, ChatRequest};
use crate::plan::JudgeVerdict;

/// Lowercases, collapses whitespace and strips quotes, backticks and
/// trailing periods.
pub fn normalize_answer(s: &str) -> String {
    let lowered = s.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_matches(|c: char| matches!(c, '"' | '\'' | '`' | '.') || c.is_whitespace())
        .to_string()
}

fn as_number(s: &str) -> Option<f64> {
    let v: f64 = s.parse().ok()?;
    v.is_finite().then_some(v)
}

/// Equal after normalization, or both numeric within relative 1e-6.
pub fn answers_match(a: &str, b: &str) -> bool {
    let (na, nb) = (normalize_answer(a), normalize_answer(b));
    if na == nb {
        return true;
    }
    match (as_number(&na), as_number(&nb)) {
        (Some(x), Some(y)) => {
            let scale = x.abs().max(y.abs());
            (x - y).abs() <= 1e-6 * scale
        }
        _ => false,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeMode {
    #[default]
    ExactNormalized,
    LlmJudge,
}

pub fn judge_exact(answer: Option<&str>, gold: &str) -> JudgeVerdict {
    match answer {
        Some(a) => {
            let success = answers_match(a, gold);
            JudgeVerdict {
                success,
                normalized_answer: normalize_answer(a),
                rationale: if success { "matches gold".into() } else { format!("expected `{}`", normalize_answer(gold)) },
            }
        }
        None => JudgeVerdict { success: false, normalized_answer: String::new(), rationale: "no final answer".into() },
    }
}

pub const JUDGE_RUBRIC: &str = "You grade answers. Compare the candidate answer with the reference answer \
for the question. Minor formatting differences do not matter. Reply with a single line: \
VERDICT: CORRECT or VERDICT: INCORRECT.";

/// Reads the verdict line from a judge reply.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let upper = reply.to_uppercase();
    let tail = upper.rsplit_once("VERDICT:")?.1.trim_start();
    if tail.starts_with("INCORRECT") {
        Some(false)
    } else if tail.starts_with("CORRECT") {
        Some(true)
    } else {
        None
    }
}

/// Judges with a chat model. Returns the verdict with the judge's token usage.
pub fn judge_with_llm(
    chat: &dyn ChatBackend,
    model: &str,
    query: &str,
    answer: Option<&str>,
    gold: &str,
) -> Result<(JudgeVerdict, u64, u64), BackendError> {
    let Some(answer) = answer else {
        return Ok((judge_exact(None, gold), 0, 0));
    };
    let req = ChatRequest {
        model: model.to_string(),
        messages: vec![
            ChatMessage::system(JUDGE_RUBRIC),
            ChatMessage::user(format!("Question: {query}\nReference answer: {gold}\nCandidate answer: {answer}")),
        ],
        temperature: 0.0,
        max_tokens: 64,
    };
    let resp = chat.chat(&req)?;
    let success = parse_verdict(&resp.content)
        .ok_or_else(|| BackendError::Malformed(format!("judge reply has no verdict: {}", resp.content)))?;
    let verdict = JudgeVerdict {
        success,
        normalized_answer: normalize_answer(answer),
        rationale: resp.content.trim().to_string(),
    };
    Ok((verdict, resp.tokens_in, resp.tokens_out))
}
