use serde::{Deserialize, Serialize};

use crate::corpus::ScriptIncludeRecord;
use crate::tokenize::tokenize;

/// Which text the index is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentSource {
    Jsdoc,
    RawCode,
}

impl std::str::FromStr for DocumentSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsdoc" => Ok(DocumentSource::Jsdoc),
            "raw" | "raw_code" => Ok(DocumentSource::RawCode),
            other => Err(format!("unknown document source {other:?} (use jsdoc|raw)")),
        }
    }
}

/// One indexed document. Exactly one per namespace: all member methods are
/// grouped under the parent namespace rather than indexed individually.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDocument {
    pub namespace: String,
    pub text: String,
    pub tokens: Vec<String>,
    pub token_count: usize,
}

/// Build one document per namespace. With `source = jsdoc`, the body is the
/// record's JSDoc summary (falling back to raw code when absent, with a
/// warning) followed by the method JSDoc fragments under a namespace header.
pub fn build_documents(
    corpus: &[ScriptIncludeRecord],
    source: DocumentSource,
) -> Vec<IndexDocument> {
    corpus
        .iter()
        .map(|rec| {
            let mut text = format!("{}\n", rec.namespace);
            match source {
                DocumentSource::RawCode => text.push_str(&rec.raw_code),
                DocumentSource::Jsdoc => {
                    match rec.jsdoc_summary.as_deref() {
                        Some(summary) => text.push_str(summary),
                        None => {
                            tracing::warn!(
                                namespace = %rec.namespace,
                                "no jsdoc_summary; falling back to raw code"
                            );
                            text.push_str(&rec.raw_code);
                        }
                    }
                    for method in &rec.methods {
                        if let Some(fragment) = method.jsdoc.as_deref() {
                            text.push('\n');
                            text.push_str(fragment);
                        }
                    }
                }
            }
            let tokens = tokenize(&text);
            IndexDocument {
                namespace: rec.namespace.clone(),
                token_count: tokens.len(),
                text,
                tokens,
            }
        })
        .collect()
}
