//! Query construction: prefix trimming and the three retrieval strategies
//! (raw prefix, LLM intent description, hypothetical code completion).

use serde::{Deserialize, Serialize};

use crate::corpus::CompletionTask;
use crate::error::{Error, Result};
use crate::llm::LlmClient;

/// Instruction prepended to query embeddings (documents are embedded plain).
pub const QUERY_EMBED_INSTRUCTION: &str = "Instruct: Given the code, find APIs based on their JSDoc that this code might need to complete its intended purpose.\nCode:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Prefix,
    Description,
    Hypothetical,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "prefix" => Ok(Strategy::Prefix),
            "description" => Ok(Strategy::Description),
            "hypothetical" => Ok(Strategy::Hypothetical),
            other => Err(format!(
                "unknown strategy {other:?} (use prefix|description|hypothetical)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Prefix => write!(f, "prefix"),
            Strategy::Description => write!(f, "description"),
            Strategy::Hypothetical => write!(f, "hypothetical"),
        }
    }
}

/// Prefix trimming knobs. The tail lines carry the strongest signal about
/// the upcoming API call and are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrimConfig {
    pub max_lines: usize,
    pub protect_tail_lines: usize,
}

impl Default for TrimConfig {
    fn default() -> Self {
        TrimConfig {
            max_lines: 10,
            protect_tail_lines: 2,
        }
    }
}

impl TrimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_lines == 0 || self.protect_tail_lines == 0 {
            return Err(Error::Validation("trim lines must be >= 1".into()));
        }
        if self.protect_tail_lines > self.max_lines {
            return Err(Error::Validation(
                "protect_tail_lines must be <= max_lines".into(),
            ));
        }
        Ok(())
    }
}

/// A built retrieval query with audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub task_id: String,
    pub strategy: Strategy,
    pub fim: bool,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llm_raw: Option<String>,
    /// Set when an LLM strategy fell back to the plain prefix query.
    #[serde(default)]
    pub downgraded: bool,
}

/// Prompt templates, loaded from prompts.toml; defaults are compiled in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prompts {
    pub description_prompt: String,
    pub hypothetical_prompt: String,
    pub triplet_prompt: String,
    pub fim_pre_sentinel: String,
    pub fim_suf_sentinel: String,
}

impl Default for Prompts {
    fn default() -> Self {
        toml::from_str(include_str!("../assets/prompts.toml"))
            .expect("bundled prompts.toml parses")
    }
}

impl Prompts {
    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::io(path.as_ref().display().to_string(), e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("prompts file: {e}")))
    }
}

/// Keep the last `max_lines` non-blank lines of `code_before`. The final
/// lines are returned verbatim, so the result always ends with the input's
/// last non-blank line.
pub fn trim_prefix(code_before: &str, cfg: &TrimConfig) -> String {
    let lines: Vec<&str> = code_before
        .lines()
        .filter(|l| !l.trim().is_empty())
        .collect();
    let start = lines.len().saturating_sub(cfg.max_lines);
    lines[start..].join("\n")
}

/// Strategy 1: the trimmed prefix itself (optionally FIM-formatted with the
/// suffix appended behind sentinels).
pub fn make_prefix_query(
    task: &CompletionTask,
    cfg: &TrimConfig,
    prompts: &Prompts,
    fim: bool,
) -> Result<QueryBundle> {
    let trimmed = trim_prefix(&task.code_before, cfg);
    if trimmed.is_empty() {
        return Err(Error::EmptyQuery {
            task_id: task.id.clone(),
        });
    }
    let fim = fim && task.fim_capable();
    let text = if fim {
        format!(
            "{}\n{}\n{}\n{}",
            prompts.fim_pre_sentinel,
            trimmed,
            prompts.fim_suf_sentinel,
            task.code_after.as_deref().unwrap_or_default()
        )
    } else {
        trimmed
    };
    Ok(QueryBundle {
        task_id: task.id.clone(),
        strategy: Strategy::Prefix,
        fim,
        text,
        llm_raw: None,
        downgraded: false,
    })
}

fn complete_with_retry(
    llm: &dyn LlmClient,
    prompt: &str,
    max_tokens: usize,
    task_id: &str,
) -> Result<String> {
    let mut last_err: Option<Error> = None;
    for _ in 0..2 {
        match llm.complete(prompt, max_tokens, 0.0) {
            Ok(text) if !text.trim().is_empty() => return Ok(text),
            Ok(_) => {
                last_err = Some(Error::transport(llm.tag(), "empty completion"));
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err
        .unwrap_or_else(|| Error::transport(llm.tag(), "no attempts made"))
        .for_task(task_id))
}

/// Strategy 2: one-line natural language intent, normalized to "INTENT: ...".
pub fn make_description_query(
    task: &CompletionTask,
    llm: &dyn LlmClient,
    cfg: &TrimConfig,
    prompts: &Prompts,
) -> Result<QueryBundle> {
    let trimmed = trim_prefix(&task.code_before, cfg);
    if trimmed.is_empty() {
        return Err(Error::EmptyQuery {
            task_id: task.id.clone(),
        });
    }
    let prompt = prompts.description_prompt.replace("{code}", &trimmed);
    let raw = complete_with_retry(llm, &prompt, 256, &task.id)?;
    let text = normalize_intent(&raw);
    Ok(QueryBundle {
        task_id: task.id.clone(),
        strategy: Strategy::Description,
        fim: false,
        text,
        llm_raw: Some(raw),
        downgraded: false,
    })
}

/// First line starting with "INTENT:" wins; otherwise the first non-empty
/// line is used with the marker prefixed.
fn normalize_intent(raw: &str) -> String {
    for line in raw.lines() {
        let line = line.trim();
        if line.starts_with("INTENT:") {
            return line.to_string();
        }
    }
    let first = raw.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    format!("INTENT: {}", first.trim())
}

/// Strategy 3: trimmed prefix plus an LLM-generated hypothetical completion.
/// Falls back to the plain prefix query (flagged) if the LLM yields nothing.
pub fn make_hypothetical_query(
    task: &CompletionTask,
    llm: &dyn LlmClient,
    cfg: &TrimConfig,
    prompts: &Prompts,
) -> Result<QueryBundle> {
    let trimmed = trim_prefix(&task.code_before, cfg);
    if trimmed.is_empty() {
        return Err(Error::EmptyQuery {
            task_id: task.id.clone(),
        });
    }
    let prompt = prompts.hypothetical_prompt.replace("{code}", &trimmed);
    match complete_with_retry(llm, &prompt, 512, &task.id) {
        Ok(raw) => {
            let completion = strip_fences(&raw);
            Ok(QueryBundle {
                task_id: task.id.clone(),
                strategy: Strategy::Hypothetical,
                fim: false,
                text: format!("{trimmed}\n{completion}"),
                llm_raw: Some(raw),
                downgraded: false,
            })
        }
        Err(_) => {
            tracing::warn!(task_id = %task.id, "hypothetical generation failed; downgrading to prefix query");
            let mut bundle = make_prefix_query(task, cfg, prompts, false)?;
            bundle.strategy = Strategy::Hypothetical;
            bundle.downgraded = true;
            Ok(bundle)
        }
    }
}

/// Drop Markdown code-fence lines, keeping their contents.
fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockLlm;

    fn task(before: &str, after: Option<&str>) -> CompletionTask {
        CompletionTask {
            id: "t1".into(),
            code_before: before.into(),
            code_middle: "x".into(),
            code_after: after.map(String::from),
            ground_truth: "ArrayUtil".into(),
            intent: Default::default(),
            extra: Default::default(),
        }
    }

    #[test]
    fn trims_to_last_max_lines() {
        let input: Vec<String> = (1..=30).map(|i| format!("line{i};")).collect();
        let out = trim_prefix(&input.join("\n"), &TrimConfig::default());
        let lines: Vec<&str> = out.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[0], "line21;");
        assert_eq!(lines[9], "line30;");
    }

    #[test]
    fn short_input_unchanged() {
        let input = "a;\nb;\nc;\nd;";
        assert_eq!(trim_prefix(input, &TrimConfig::default()), input);
    }

    #[test]
    fn result_ends_with_final_line() {
        let input = "first;\n\nmiddle;\n\nvar last = x.compare();\n";
        let out = trim_prefix(input, &TrimConfig::default());
        assert!(out.ends_with("var last = x.compare();"));
    }

    #[test]
    fn trim_is_idempotent() {
        let input: Vec<String> = (0..25).map(|i| format!("l{i}")).collect();
        let cfg = TrimConfig::default();
        let once = trim_prefix(&input.join("\n"), &cfg);
        assert_eq!(trim_prefix(&once, &cfg), once);
    }

    #[test]
    fn prefix_query_is_line_suffix_of_input() {
        let input: Vec<String> = (0..20).map(|i| format!("stmt{i};")).collect();
        let t = task(&input.join("\n"), None);
        let q = make_prefix_query(&t, &TrimConfig::default(), &Prompts::default(), false).unwrap();
        assert_eq!(q.strategy, Strategy::Prefix);
        assert!(!q.fim);
        assert!(input.join("\n").ends_with(&q.text));
    }

    #[test]
    fn empty_prefix_is_an_error() {
        let t = task("", None);
        assert!(matches!(
            make_prefix_query(&t, &TrimConfig::default(), &Prompts::default(), false),
            Err(Error::EmptyQuery { .. })
        ));
    }

    #[test]
    fn fim_query_contains_both_segments() {
        let t = task("var a = 1;", Some("return result;"));
        let prompts = Prompts::default();
        let q = make_prefix_query(&t, &TrimConfig::default(), &prompts, true).unwrap();
        assert!(q.fim);
        assert!(q.text.contains(&prompts.fim_pre_sentinel));
        assert!(q.text.contains(&prompts.fim_suf_sentinel));
        assert!(q.text.contains("var a = 1;"));
        assert!(q.text.contains("return result;"));
    }

    #[test]
    fn fim_downgrades_without_suffix() {
        let t = task("var a = 1;", None);
        let q = make_prefix_query(&t, &TrimConfig::default(), &Prompts::default(), true).unwrap();
        assert!(!q.fim);
    }

    #[test]
    fn description_normalizes_to_intent_line() {
        let t = task("commonGrp.push(currentGrpList[i]);", None);
        let llm = MockLlm::always(
            "Some preamble.\nINTENT: Identify users common to both lists.\nMore text.",
        );
        let q =
            make_description_query(&t, &llm, &TrimConfig::default(), &Prompts::default()).unwrap();
        assert_eq!(q.text, "INTENT: Identify users common to both lists.");
        assert!(q.llm_raw.is_some());
    }

    #[test]
    fn description_without_marker_gets_prefixed() {
        let t = task("var a;", None);
        let llm = MockLlm::always("finds shared members of two arrays");
        let q =
            make_description_query(&t, &llm, &TrimConfig::default(), &Prompts::default()).unwrap();
        assert_eq!(q.text, "INTENT: finds shared members of two arrays");
    }

    #[test]
    fn hypothetical_contains_prefix_and_completion() {
        let t = task("for (i = 0; i < n; i++) {", None);
        let llm = MockLlm::always(
            "```js\n/**\n * @description compares the arrays\n */\nvar util = x;\n```",
        );
        let q =
            make_hypothetical_query(&t, &llm, &TrimConfig::default(), &Prompts::default()).unwrap();
        assert!(q.text.starts_with("for (i = 0; i < n; i++) {"));
        assert!(q.text.contains("@description compares the arrays"));
        assert!(!q.text.contains("```"));
        assert!(!q.downgraded);
    }

    #[test]
    fn hypothetical_falls_back_on_empty_output() {
        let t = task("var a = 1;", None);
        let llm = MockLlm::always("   ");
        let q =
            make_hypothetical_query(&t, &llm, &TrimConfig::default(), &Prompts::default()).unwrap();
        assert!(q.downgraded);
        assert_eq!(q.strategy, Strategy::Hypothetical);
        assert_eq!(q.text, "var a = 1;");
    }

    #[test]
    fn trim_config_validation() {
        assert!(TrimConfig {
            max_lines: 5,
            protect_tail_lines: 6
        }
        .validate()
        .is_err());
        assert!(TrimConfig::default().validate().is_ok());
    }
}
