//! Shared code tokenizer used by the corpus statistics, BM25 index, mock
//! embedder and dataset-cleaning passes.
//!
//! Rules: split on non-alphanumeric characters, additionally split camelCase
//! and snake_case boundaries, lowercase everything, drop empty tokens.
//! `getHTTPResponse` becomes `[get, http, response]`.

/// Version tag persisted in index manifests; bump on any rule change.
pub const TOKENIZER_TAG: &str = "code-tokenizer-v1";

/// Tokenize a piece of code or prose.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split(|c: char| !c.is_ascii_alphanumeric()) {
        if word.is_empty() {
            continue;
        }
        split_camel_into(word, &mut tokens);
    }
    tokens
}

/// Split one alphanumeric word at camelCase boundaries, lowercasing the parts.
/// Boundaries: lower/digit -> upper, and the last upper of an acronym run
/// followed by a lower ("HTTPResponse" -> "http", "response").
fn split_camel_into(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let boundary = (cur.is_ascii_uppercase() && !prev.is_ascii_uppercase())
            || (cur.is_ascii_lowercase()
                && prev.is_ascii_uppercase()
                && i >= 2
                && chars[i - 2].is_ascii_uppercase());
        let split_at = if boundary {
            if cur.is_ascii_lowercase() {
                i - 1
            } else {
                i
            }
        } else {
            continue;
        };
        if split_at > start {
            out.push(chars[start..split_at].iter().collect::<String>().to_lowercase());
            start = split_at;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
}

/// Extract whole identifiers ([A-Za-z_][A-Za-z0-9_]*) from code, keeping case.
pub fn identifiers(code: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = code.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_ascii_alphanumeric() || c == '_' {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push(&code[start..i]);
        } else {
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_camel_and_snake() {
        assert_eq!(tokenize("ArrayUtil"), vec!["array", "util"]);
        assert_eq!(tokenize("array_util"), vec!["array", "util"]);
        assert_eq!(tokenize("getHTTPResponse"), vec!["get", "http", "response"]);
        assert_eq!(tokenize("arrayUtil()"), vec!["array", "util"]);
    }

    #[test]
    fn drops_empty_and_lowercases() {
        assert_eq!(tokenize("  foo.Bar::baz_QUX  "), vec!["foo", "bar", "baz", "qux"]);
        assert!(tokenize("***").is_empty());
        assert!(tokenize("").is_empty());
    }

    #[test]
    fn digits_kept_with_preceding_run() {
        assert_eq!(tokenize("sha256Sum v2"), vec!["sha256", "sum", "v2"]);
    }

    #[test]
    fn identifier_extraction() {
        assert_eq!(
            identifiers("var x = new ArrayUtil(); x.u_field"),
            vec!["var", "x", "new", "ArrayUtil", "x", "u_field"]
        );
    }
}
