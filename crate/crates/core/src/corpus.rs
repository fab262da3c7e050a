//! Data model and JSONL loaders/writers for every pipeline artifact.
//!
//! Line formats:
//!
//! ```text
//! corpus.jsonl      {"image_id": str, "captions": [str], "contexts": [{"label": str, "confidence": f, "source": str}]}
//! candidates.jsonl  {"image_id": str, "candidates": [{"text": str, "score": f}]}
//! embeddings.jsonl  {"key": str, "vector": [f; D]}
//! relatedness.jsonl {"caption": str, "context": str, "cosine": f, "label": 0|1, "threshold": f}
//! ```

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{normalized, Scalar};

/// Which visual classifier produced a detection.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Source {
    Resnet152,
    Clip,
    Frcnn,
    Other(String),
}

impl From<String> for Source {
    fn from(s: String) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "resnet152" => Source::Resnet152,
            "clip" => Source::Clip,
            "frcnn" => Source::Frcnn,
            _ => Source::Other(s),
        }
    }
}

impl From<Source> for String {
    fn from(s: Source) -> Self {
        s.to_string()
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Resnet152 => f.write_str("resnet152"),
            Source::Clip => f.write_str("clip"),
            Source::Frcnn => f.write_str("frcnn"),
            Source::Other(tag) => f.write_str(tag),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub confidence: f64,
    pub source: Source,
}

impl Detection {
    pub fn new(label: impl Into<String>, confidence: f64, source: Source) -> Self {
        Detection {
            label: label.into(),
            confidence,
            source,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.label.trim().is_empty() {
            return Err("detection label is empty".into());
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!(
                "confidence {} of {:?} is outside [0, 1]",
                self.confidence, self.label
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    #[serde(rename = "captions")]
    pub human_captions: Vec<String>,
    #[serde(rename = "contexts", default)]
    pub detections: Vec<Detection>,
}

impl ImageRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.image_id.is_empty() {
            return Err("image_id is empty".into());
        }
        if self.human_captions.is_empty() {
            return Err(format!("image {:?} has no captions", self.image_id));
        }
        if self.human_captions.iter().any(|c| c.trim().is_empty()) {
            return Err(format!("image {:?} has an empty caption", self.image_id));
        }
        self.detections.iter().try_for_each(Detection::validate)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCaption {
    pub text: String,
    pub baseline_score: f64,
    pub original_rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub image_id: String,
    pub candidates: Vec<CandidateCaption>,
}

impl CandidateSet {
    /// Builds a set whose ranks are the array positions.
    pub fn from_ranked(image_id: impl Into<String>, items: Vec<(String, f64)>) -> Self {
        CandidateSet {
            image_id: image_id.into(),
            candidates: items
                .into_iter()
                .enumerate()
                .map(|(i, (text, baseline_score))| CandidateCaption {
                    text,
                    baseline_score,
                    original_rank: i,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.candidates.is_empty() {
            return Err(format!("candidate set {:?} is empty", self.image_id));
        }
        let k = self.candidates.len();
        let mut seen = vec![false; k];
        for c in &self.candidates {
            if c.original_rank >= k {
                return Err(format!(
                    "rank {} out of range for {} candidates",
                    c.original_rank, k
                ));
            }
            if std::mem::replace(&mut seen[c.original_rank], true) {
                return Err(format!("duplicate original_rank {}", c.original_rank));
            }
            if !c.baseline_score.is_finite() {
                return Err(format!("non-finite score for rank {}", c.original_rank));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatednessRecord {
    pub caption: String,
    pub context: String,
    pub cosine: f64,
    pub label: u8,
    pub threshold: f64,
}

#[derive(Deserialize, Serialize)]
struct CandidateLine {
    image_id: String,
    candidates: Vec<CandidateEntry>,
}

#[derive(Deserialize, Serialize)]
struct CandidateEntry {
    text: String,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
}

#[derive(Deserialize, Serialize)]
struct EmbeddingLine<V> {
    key: String,
    vector: V,
}

fn schema(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses every nonblank line of `path`, passing `(line_number, value)` to `f`.
fn read_jsonl<T, F>(path: &Path, mut f: F) -> Result<()>
where
    T: DeserializeOwned,
    F: FnMut(usize, T) -> std::result::Result<(), String>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: T =
            serde_json::from_str(&line).map_err(|e| schema(path, lineno, e.to_string()))?;
        f(lineno, value).map_err(|m| schema(path, lineno, m))?;
    }
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, items: &[T]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    read_jsonl(path.as_ref(), |_, v| {
        out.push(v);
        Ok(())
    })?;
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<ImageRecord>> {
    let mut out: Vec<ImageRecord> = Vec::new();
    let mut ids = HashSet::new();
    read_jsonl(path.as_ref(), |_, rec: ImageRecord| {
        rec.validate()?;
        if !ids.insert(rec.image_id.clone()) {
            return Err(format!("duplicate image_id {:?}", rec.image_id));
        }
        out.push(rec);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &[ImageRecord]) -> Result<()> {
    write_jsonl(path, corpus)
}

pub fn load_candidates(path: impl AsRef<Path>) -> Result<Vec<CandidateSet>> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    read_jsonl(path.as_ref(), |_, line: CandidateLine| {
        let set = CandidateSet {
            image_id: line.image_id,
            candidates: line
                .candidates
                .into_iter()
                .enumerate()
                .map(|(i, c)| CandidateCaption {
                    text: c.text,
                    baseline_score: c.score,
                    original_rank: c.rank.unwrap_or(i),
                })
                .collect(),
        };
        set.validate()?;
        if !ids.insert(set.image_id.clone()) {
            return Err(format!("duplicate image_id {:?}", set.image_id));
        }
        out.push(set);
        Ok(())
    })?;
    Ok(out)
}

pub fn write_candidates(path: impl AsRef<Path>, sets: &[CandidateSet]) -> Result<()> {
    let lines: Vec<CandidateLine> = sets
        .iter()
        .map(|s| {
            let mut cands: Vec<&CandidateCaption> = s.candidates.iter().collect();
            cands.sort_by_key(|c| c.original_rank);
            CandidateLine {
                image_id: s.image_id.clone(),
                candidates: cands
                    .into_iter()
                    .map(|c| CandidateEntry {
                        text: c.text.clone(),
                        score: c.baseline_score,
                        rank: None,
                    })
                    .collect(),
            }
        })
        .collect();
    write_jsonl(path, &lines)
}

pub fn load_relatedness(path: impl AsRef<Path>) -> Result<Vec<RelatednessRecord>> {
    let mut out = Vec::new();
    read_jsonl(path.as_ref(), |_, r: RelatednessRecord| {
        if r.label > 1 {
            return Err(format!("label {} is not 0 or 1", r.label));
        }
        if !r.cosine.is_finite() || !r.threshold.is_finite() {
            return Err("non-finite cosine or threshold".into());
        }
        out.push(r);
        Ok(())
    })?;
    Ok(out)
}

/// Text key to unit vector map. Keys keep their insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    dim: usize,
    keys: Vec<String>,
    entries: HashMap<String, Vec<T>>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(EmbeddingTable {
            dim,
            keys: Vec::new(),
            entries: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Normalizes and stores `vector`. Duplicate keys are an error.
    pub fn insert(&mut self, key: impl Into<String>, vector: &[T]) -> Result<()> {
        let key = key.into();
        if vector.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if self.entries.contains_key(&key) {
            return Err(Error::DuplicateKey(key));
        }
        let unit = normalized(vector).ok_or_else(|| Error::ZeroVector(Some(key.clone())))?;
        self.keys.push(key.clone());
        self.entries.insert(key, unit);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&[T]> {
        self.entries.get(key).map(Vec::as_slice)
    }

    pub fn require(&self, key: &str) -> Result<&[T]> {
        self.get(key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[T])> {
        self.keys
            .iter()
            .map(move |k| (k.as_str(), self.entries[k].as_slice()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let lines: Vec<EmbeddingLine<Vec<f64>>> = self
            .iter()
            .map(|(k, v)| EmbeddingLine {
                key: k.to_string(),
                vector: v.iter().map(|x| x.as_f64()).collect(),
            })
            .collect();
        write_jsonl(path, &lines)
    }
}

pub fn load_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    expected_dim: Option<usize>,
) -> Result<EmbeddingTable<T>> {
    let path: PathBuf = path.as_ref().to_path_buf();
    let mut table: Option<EmbeddingTable<T>> = match expected_dim {
        Some(d) => Some(EmbeddingTable::new(d)?),
        None => None,
    };
    read_jsonl(&path, |_, line: EmbeddingLine<Vec<f64>>| {
        if line.vector.iter().any(|x| !x.is_finite()) {
            return Err(format!("non-finite component in {:?}", line.key));
        }
        let t = match &mut table {
            Some(t) => t,
            None => table.insert(EmbeddingTable::new(line.vector.len()).map_err(|e| e.to_string())?),
        };
        let v: Vec<T> = line.vector.iter().map(|&x| T::of(x)).collect();
        t.insert(line.key, &v).map_err(|e| match e {
            Error::DimMismatch { expected, actual } => {
                format!("mixed dimensions: expected {expected}, got {actual}")
            }
            other => other.to_string(),
        })
    })?;
    match table {
        Some(t) => Ok(t),
        None => Err(Error::invalid(format!(
            "{}: no embeddings and no expected dimension",
            path.display()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file_with(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn corpus_line_loads() {
        let f = file_with(
            r#"{"image_id":"i1","captions":["there are containers filled with different kinds of foods."],"contexts":[{"label":"broccoli","confidence":0.9,"source":"resnet152"}]}"#,
        );
        let c = load_corpus(f.path()).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].human_captions.len(), 1);
        assert_eq!(c[0].detections.len(), 1);
        assert_eq!(c[0].detections[0].source, Source::Resnet152);
    }

    #[test]
    fn empty_corpus_file() {
        let f = file_with("");
        assert!(load_corpus(f.path()).unwrap().is_empty());
    }

    #[test]
    fn confidence_out_of_range_names_line() {
        let f = file_with(concat!(
            r#"{"image_id":"i1","captions":["a"],"contexts":[]}"#,
            "\n",
            r#"{"image_id":"i2","captions":["b"],"contexts":[{"label":"dog","confidence":1.5,"source":"clip"}]}"#,
            "\n"
        ));
        match load_corpus(f.path()) {
            Err(Error::Schema { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("confidence"), "{message}");
            }
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_image_id_rejected() {
        let f = file_with(concat!(
            r#"{"image_id":"i1","captions":["a"]}"#,
            "\n",
            r#"{"image_id":"i1","captions":["b"]}"#
        ));
        assert!(matches!(load_corpus(f.path()), Err(Error::Schema { line: 2, .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let err = load_corpus("/nonexistent/corpus.jsonl").unwrap_err();
        assert!(err.is_io());
    }

    #[test]
    fn candidates_nine_and_one() {
        let nine: Vec<String> = (0..9)
            .map(|i| format!(r#"{{"text":"cap {i}","score":-{i}.5}}"#))
            .collect();
        let f = file_with(&format!(
            "{{\"image_id\":\"a\",\"candidates\":[{}]}}\n{{\"image_id\":\"b\",\"candidates\":[{{\"text\":\"x\",\"score\":0.1}}]}}\n",
            nine.join(",")
        ));
        let sets = load_candidates(f.path()).unwrap();
        assert_eq!(sets[0].candidates.len(), 9);
        assert_eq!(sets[0].candidates[4].original_rank, 4);
        assert_eq!(sets[1].candidates.len(), 1);
    }

    #[test]
    fn duplicate_rank_rejected() {
        let f = file_with(
            r#"{"image_id":"a","candidates":[{"text":"x","score":0,"rank":0},{"text":"y","score":0,"rank":0}]}"#,
        );
        let err = load_candidates(f.path()).unwrap_err();
        assert!(err.to_string().contains("duplicate original_rank"), "{err}");
    }

    #[test]
    fn embeddings_normalized() {
        let f = file_with(r#"{"key":"dog","vector":[3.0,4.0]}"#);
        let t: EmbeddingTable<f64> = load_embeddings(f.path(), None).unwrap();
        assert_eq!(t.dim(), 2);
        let v = t.get("dog").unwrap();
        assert!((v[0] - 0.6).abs() < 1e-12 && (v[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn embeddings_errors() {
        let mixed = file_with("{\"key\":\"a\",\"vector\":[1,2]}\n{\"key\":\"b\",\"vector\":[1,2,3]}\n");
        let err = load_embeddings::<f64>(mixed.path(), None).unwrap_err();
        assert!(err.to_string().contains("mixed dimensions"), "{err}");

        let zero = file_with(r#"{"key":"a","vector":[0,0]}"#);
        let err = load_embeddings::<f64>(zero.path(), None).unwrap_err();
        assert!(err.to_string().contains("zero vector"), "{err}");

        let dup = file_with("{\"key\":\"a\",\"vector\":[1,0]}\n{\"key\":\"a\",\"vector\":[0,1]}\n");
        let err = load_embeddings::<f64>(dup.path(), None).unwrap_err();
        assert!(err.to_string().contains("duplicate key"), "{err}");

        let wrong = file_with(r#"{"key":"a","vector":[1,0]}"#);
        assert!(load_embeddings::<f64>(wrong.path(), Some(3)).is_err());
    }
}
