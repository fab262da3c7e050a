//! Exact cosine nearest-neighbour search over caption embeddings.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, HashMap, HashSet};

use serde::Serialize;

use crate::corpus::EmbeddingTable;
use crate::error::{Error, Result};
use crate::scalar::{dot, normalized, Scalar};

/// Row-major matrix of unit vectors; row `i` belongs to `ids[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchIndex<T> {
    dim: usize,
    ids: Vec<String>,
    matrix: Vec<T>,
    lookup: HashMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit<T> {
    pub id: String,
    pub score: T,
}

impl<T: Scalar> SearchIndex<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }
}

/// Normalizes every vector and keeps insertion order.
pub fn build_index<T, I, S>(entries: I) -> Result<SearchIndex<T>>
where
    T: Scalar,
    I: IntoIterator<Item = (S, Vec<T>)>,
    S: Into<String>,
{
    let mut dim = None;
    let mut ids = Vec::new();
    let mut matrix = Vec::new();
    let mut lookup = HashMap::new();
    for (id, v) in entries {
        let id = id.into();
        let d = *dim.get_or_insert(v.len());
        if v.len() != d {
            return Err(Error::DimMismatch {
                expected: d,
                actual: v.len(),
            });
        }
        if lookup.contains_key(&id) {
            return Err(Error::DuplicateKey(id));
        }
        let unit = normalized(&v).ok_or_else(|| Error::ZeroVector(Some(id.clone())))?;
        lookup.insert(id.clone(), ids.len());
        ids.push(id);
        matrix.extend(unit);
    }
    let dim = dim.ok_or_else(|| Error::invalid("cannot build an index from no entries"))?;
    if dim == 0 {
        return Err(Error::invalid("zero-dimensional vectors"));
    }
    Ok(SearchIndex {
        dim,
        ids,
        matrix,
        lookup,
    })
}

/// Indexes every entry of an embedding table under its key.
pub fn index_from_table<T: Scalar>(emb: &EmbeddingTable<T>) -> Result<SearchIndex<T>> {
    build_index(emb.iter().map(|(k, v)| (k.to_string(), v.to_vec())))
}

/// Heap entry ordered so that "greater" means "better": higher score, then
/// smaller id.
struct Scored<'a, T> {
    score: T,
    id: &'a str,
    row: usize,
}

impl<T: Scalar> Ord for Scored<'_, T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .partial_cmp(&other.score)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.id.cmp(self.id))
    }
}

impl<T: Scalar> PartialOrd for Scored<'_, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> PartialEq for Scored<'_, T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Scored<'_, T> {}

/// Exact top-`k` by cosine, best first, ties by ascending id.
pub fn knn<T: Scalar>(index: &SearchIndex<T>, query: &[T], k: usize) -> Result<Vec<Hit<T>>> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if query.len() != index.dim {
        return Err(Error::DimMismatch {
            expected: index.dim,
            actual: query.len(),
        });
    }
    let q = normalized(query).ok_or(Error::ZeroVector(None))?;
    let mut heap: BinaryHeap<Reverse<Scored<'_, T>>> = BinaryHeap::with_capacity(k + 1);
    for (i, id) in index.ids.iter().enumerate() {
        let cand = Scored {
            score: dot(index.row(i), &q),
            id,
            row: i,
        };
        if heap.len() < k {
            heap.push(Reverse(cand));
        } else if heap.peek().is_some_and(|Reverse(worst)| cand > *worst) {
            heap.pop();
            heap.push(Reverse(cand));
        }
    }
    let mut best: Vec<Scored<'_, T>> = heap.into_iter().map(|Reverse(s)| s).collect();
    best.sort_by(|a, b| b.cmp(a));
    Ok(best
        .into_iter()
        .map(|s| Hit {
            id: index.ids[s.row].clone(),
            score: s.score,
        })
        .collect())
}

/// Fraction of `(query, gold id)` pairs whose gold id is in the top `k`.
pub fn recall_at_k<T: Scalar>(
    index: &SearchIndex<T>,
    queries: &[(Vec<T>, String)],
    k: usize,
) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::invalid("no queries"));
    }
    let mut hits = 0usize;
    for (q, gold) in queries {
        if !index.contains(gold) {
            return Err(Error::invalid(format!("gold id {gold:?} is not in the index")));
        }
        hits += usize::from(knn(index, q, k)?.iter().any(|h| &h.id == gold));
    }
    Ok(hits as f64 / queries.len() as f64)
}

/// Uses the embedding of the space-joined labels as the query.
pub fn search_by_context<T: Scalar, S: AsRef<str>>(
    index: &SearchIndex<T>,
    context_labels: &[S],
    emb: &EmbeddingTable<T>,
    k: usize,
) -> Result<Vec<Hit<T>>> {
    let labels: Vec<&str> = context_labels
        .iter()
        .map(|s| s.as_ref().trim())
        .filter(|s| !s.is_empty())
        .collect();
    if labels.is_empty() {
        return Err(Error::invalid("no context labels to search with"));
    }
    let mut seen = HashSet::new();
    let labels: Vec<&str> = labels.into_iter().filter(|l| seen.insert(*l)).collect();
    knn(index, emb.require(&labels.join(" "))?, k)
}
