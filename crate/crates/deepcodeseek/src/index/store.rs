//! On-disk index layout:
//!   manifest.json   version, tokenizer tag, bm25 params, dim, checksums
//!   bm25.postings   little-endian length-prefixed term -> postings
//!   dense.vecs      dim header then row-major 32-bit floats (optional)
//!   docids.jsonl    ordinal -> namespace
//! Load verifies checksums and structural invariants before returning.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::index::bm25::Bm25Index;
use crate::index::dense::DenseIndex;
use crate::index::docs::DocumentSource;
use crate::tokenize::TOKENIZER_TAG;

pub const INDEX_FORMAT_VERSION: &str = "dcs-index-v1";

const MANIFEST: &str = "manifest.json";
const BM25_FILE: &str = "bm25.postings";
const DENSE_FILE: &str = "dense.vecs";
const DOCIDS_FILE: &str = "docids.jsonl";

/// The persisted retrieval indexes; dense is optional (no embedder
/// configured at build time).
#[derive(Debug, Clone, PartialEq)]
pub struct IndexBundle {
    pub source: DocumentSource,
    pub bm25: Bm25Index,
    pub dense: Option<DenseIndex>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    tokenizer_tag: String,
    source: DocumentSource,
    k1: f64,
    b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embedder_tag: Option<String>,
    checksums: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct DocIdLine {
    ordinal: usize,
    namespace: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
    file: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::CorruptIndex {
                file: self.file.to_string(),
                message: "unexpected end of file".into(),
            });
        }
        let slice = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn done(&self) -> bool {
        self.pos == self.data.len()
    }
}

fn encode_bm25(index: &Bm25Index) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, index.doc_lengths.len() as u32);
    for &len in &index.doc_lengths {
        put_u32(&mut out, len);
    }
    put_u32(&mut out, index.postings.len() as u32);
    for (term, postings) in &index.postings {
        put_u32(&mut out, term.len() as u32);
        out.extend_from_slice(term.as_bytes());
        put_u32(&mut out, postings.len() as u32);
        for &(ordinal, tf) in postings {
            put_u32(&mut out, ordinal);
            put_u32(&mut out, tf);
        }
    }
    out
}

fn decode_bm25(data: &[u8], k1: f64, b: f64, doc_ids: Vec<String>) -> Result<Bm25Index> {
    let mut cur = Cursor {
        data,
        pos: 0,
        file: BM25_FILE,
    };
    let n_docs = cur.u32()? as usize;
    if n_docs != doc_ids.len() {
        return Err(Error::CorruptIndex {
            file: BM25_FILE.into(),
            message: format!("doc count {n_docs} != docids {}", doc_ids.len()),
        });
    }
    let mut doc_lengths = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        doc_lengths.push(cur.u32()?);
    }
    let n_terms = cur.u32()? as usize;
    let mut postings = BTreeMap::new();
    for _ in 0..n_terms {
        let len = cur.u32()? as usize;
        let term = String::from_utf8(cur.take(len)?.to_vec()).map_err(|_| Error::CorruptIndex {
            file: BM25_FILE.into(),
            message: "non-utf8 term".into(),
        })?;
        let n_postings = cur.u32()? as usize;
        let mut list = Vec::with_capacity(n_postings);
        for _ in 0..n_postings {
            let ordinal = cur.u32()?;
            let tf = cur.u32()?;
            if ordinal as usize >= n_docs || tf == 0 {
                return Err(Error::CorruptIndex {
                    file: BM25_FILE.into(),
                    message: format!("bad posting ({ordinal}, {tf}) for term {term:?}"),
                });
            }
            list.push((ordinal, tf));
        }
        postings.insert(term, list);
    }
    if !cur.done() {
        return Err(Error::CorruptIndex {
            file: BM25_FILE.into(),
            message: "trailing bytes".into(),
        });
    }
    let avgdl = doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / n_docs as f64;
    Ok(Bm25Index {
        postings,
        doc_lengths,
        avgdl,
        k1,
        b,
        doc_ids,
    })
}

fn encode_dense(index: &DenseIndex) -> Vec<u8> {
    let mut out = Vec::new();
    put_u32(&mut out, index.dim as u32);
    put_u32(&mut out, index.vectors.len() as u32);
    for row in &index.vectors {
        for &x in row {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode_dense(
    data: &[u8],
    embedder_tag: String,
    doc_ids: Vec<String>,
) -> Result<DenseIndex> {
    let mut cur = Cursor {
        data,
        pos: 0,
        file: DENSE_FILE,
    };
    let dim = cur.u32()? as usize;
    let n_docs = cur.u32()? as usize;
    if n_docs != doc_ids.len() {
        return Err(Error::CorruptIndex {
            file: DENSE_FILE.into(),
            message: format!("doc count {n_docs} != docids {}", doc_ids.len()),
        });
    }
    let mut vectors = Vec::with_capacity(n_docs);
    for _ in 0..n_docs {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(cur.f32()?);
        }
        vectors.push(row);
    }
    if !cur.done() {
        return Err(Error::CorruptIndex {
            file: DENSE_FILE.into(),
            message: "trailing bytes".into(),
        });
    }
    Ok(DenseIndex {
        dim,
        vectors,
        doc_ids,
        embedder_tag,
    })
}

/// Write the bundle into `dir` (created if absent). Byte-stable: the same
/// bundle always serializes to the same files.
pub fn save_index(bundle: &IndexBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let mut docids = Vec::new();
    for (ordinal, namespace) in bundle.bm25.doc_ids.iter().enumerate() {
        let line = serde_json::to_string(&DocIdLine {
            ordinal,
            namespace: namespace.clone(),
        })
        .expect("docid serializes");
        docids.extend_from_slice(line.as_bytes());
        docids.push(b'\n');
    }

    let bm25_bytes = encode_bm25(&bundle.bm25);
    let mut checksums = BTreeMap::new();
    checksums.insert(BM25_FILE.to_string(), sha256_hex(&bm25_bytes));
    checksums.insert(DOCIDS_FILE.to_string(), sha256_hex(&docids));

    let dense_bytes = bundle.dense.as_ref().map(|d| {
        if d.doc_ids != bundle.bm25.doc_ids {
            panic!("dense and bm25 doc id order must match");
        }
        encode_dense(d)
    });
    if let Some(bytes) = &dense_bytes {
        checksums.insert(DENSE_FILE.to_string(), sha256_hex(bytes));
    }

    let manifest = Manifest {
        version: INDEX_FORMAT_VERSION.to_string(),
        tokenizer_tag: TOKENIZER_TAG.to_string(),
        source: bundle.source,
        k1: bundle.bm25.k1,
        b: bundle.bm25.b,
        dim: bundle.dense.as_ref().map(|d| d.dim),
        embedder_tag: bundle.dense.as_ref().map(|d| d.embedder_tag.clone()),
        checksums,
    };

    let write = |name: &str, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        let mut f =
            std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
        f.write_all(bytes)
            .map_err(|e| Error::io(path.display().to_string(), e))
    };
    write(
        MANIFEST,
        serde_json::to_string_pretty(&manifest)
            .expect("manifest serializes")
            .as_bytes(),
    )?;
    write(BM25_FILE, &bm25_bytes)?;
    write(DOCIDS_FILE, &docids)?;
    if let Some(bytes) = &dense_bytes {
        write(DENSE_FILE, bytes)?;
    }
    Ok(())
}

/// Read and verify a bundle from `dir`.
pub fn load_index(dir: impl AsRef<Path>) -> Result<IndexBundle> {
    let dir = dir.as_ref();
    let read = |name: &str| -> Result<Vec<u8>> {
        let path = dir.join(name);
        std::fs::read(&path).map_err(|e| Error::io(path.display().to_string(), e))
    };

    let manifest: Manifest =
        serde_json::from_slice(&read(MANIFEST)?).map_err(|e| Error::CorruptIndex {
            file: MANIFEST.into(),
            message: e.to_string(),
        })?;
    if manifest.version != INDEX_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            expected: INDEX_FORMAT_VERSION.into(),
            found: manifest.version,
        });
    }
    if manifest.tokenizer_tag != TOKENIZER_TAG {
        return Err(Error::VersionMismatch {
            expected: TOKENIZER_TAG.into(),
            found: manifest.tokenizer_tag,
        });
    }

    let verify = |name: &str, bytes: &[u8]| -> Result<()> {
        match manifest.checksums.get(name) {
            Some(expected) if *expected == sha256_hex(bytes) => Ok(()),
            _ => Err(Error::ChecksumFailure { file: name.into() }),
        }
    };

    let docids_bytes = read(DOCIDS_FILE)?;
    verify(DOCIDS_FILE, &docids_bytes)?;
    let mut doc_ids = Vec::new();
    for (i, line) in String::from_utf8_lossy(&docids_bytes).lines().enumerate() {
        let parsed: DocIdLine =
            serde_json::from_str(line).map_err(|e| Error::CorruptIndex {
                file: DOCIDS_FILE.into(),
                message: e.to_string(),
            })?;
        if parsed.ordinal != i {
            return Err(Error::CorruptIndex {
                file: DOCIDS_FILE.into(),
                message: format!("ordinal {} at line {}", parsed.ordinal, i + 1),
            });
        }
        doc_ids.push(parsed.namespace);
    }

    let bm25_bytes = read(BM25_FILE)?;
    verify(BM25_FILE, &bm25_bytes)?;
    let bm25 = decode_bm25(&bm25_bytes, manifest.k1, manifest.b, doc_ids.clone())?;

    let dense = if manifest.checksums.contains_key(DENSE_FILE) {
        let dense_bytes = read(DENSE_FILE)?;
        verify(DENSE_FILE, &dense_bytes)?;
        Some(decode_dense(
            &dense_bytes,
            manifest.embedder_tag.clone().unwrap_or_default(),
            doc_ids,
        )?)
    } else {
        None
    };

    Ok(IndexBundle {
        source: manifest.source,
        bm25,
        dense,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::MockEmbedder;
    use crate::index::bm25::{build_bm25, DEFAULT_B, DEFAULT_K1};
    use crate::index::dense::build_dense;
    use crate::index::docs::{build_documents, DocumentSource};
    use crate::tokenize::tokenize;

    fn bundle() -> IndexBundle {
        let mut rec: crate::corpus::ScriptIncludeRecord = serde_json::from_str(
            r#"{"namespace":"ArrayUtil","scope":"global","package":"core","methods":[],"raw_code":"var x;","jsdoc_summary":"Finds common array elements."}"#,
        )
        .unwrap();
        rec.finalize("global");
        let mut rec2 = rec.clone();
        rec2.namespace = "Differ".into();
        rec2.jsdoc_summary = Some("Computes diffs between records.".into());
        let docs = build_documents(&[rec, rec2], DocumentSource::Jsdoc);
        let bm25 = build_bm25(&docs, DEFAULT_K1, DEFAULT_B).unwrap();
        let dense = build_dense(&docs, &MockEmbedder::default(), None, 8).unwrap();
        IndexBundle {
            source: DocumentSource::Jsdoc,
            bm25,
            dense: Some(dense),
        }
    }

    #[test]
    fn round_trip_is_structurally_equal() {
        let dir = tempfile::tempdir().unwrap();
        let original = bundle();
        save_index(&original, dir.path()).unwrap();
        let loaded = load_index(dir.path()).unwrap();
        assert_eq!(original, loaded);
        // scoring still works after reload
        let ranked = crate::index::score_bm25(&loaded.bm25, &tokenize("common array"));
        assert_eq!(ranked[0].0, "ArrayUtil");
    }

    #[test]
    fn truncated_vectors_fail_checksum() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&bundle(), dir.path()).unwrap();
        let path = dir.path().join(DENSE_FILE);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        match load_index(dir.path()) {
            Err(Error::ChecksumFailure { file }) => assert_eq!(file, DENSE_FILE),
            other => panic!("expected checksum failure, got {other:?}"),
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&bundle(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace(INDEX_FORMAT_VERSION, "dcs-index-v0");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_index(dir.path()),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn tokenizer_tag_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_index(&bundle(), dir.path()).unwrap();
        let path = dir.path().join(MANIFEST);
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace(TOKENIZER_TAG, "code-tokenizer-v0");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_index(dir.path()),
            Err(Error::VersionMismatch { .. })
        ));
    }

    #[test]
    fn bm25_only_bundle_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = bundle();
        b.dense = None;
        save_index(&b, dir.path()).unwrap();
        let loaded = load_index(dir.path()).unwrap();
        assert!(loaded.dense.is_none());
        assert_eq!(b, loaded);
    }
}
