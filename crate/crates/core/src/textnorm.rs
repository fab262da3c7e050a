//! Tokenization, n-gram extraction and the gender-term lexicon.
//!
//! Every module that looks at caption text goes through [`tokenize`], so
//! metric counts, overlap detection and bias counts agree on what a word is.

use std::collections::{BTreeSet, HashMap};
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lowercased tokens with no empty entries and no surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self) -> String {
        self.0.join(" ")
    }

    /// Whether `needle` occurs as a contiguous run of tokens.
    pub fn contains_run(&self, needle: &[String]) -> bool {
        !needle.is_empty() && self.0.windows(needle.len()).any(|w| w == needle)
    }
}

impl Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenSeq {
    /// Builds a sequence from already-normalized tokens. Empty strings are skipped.
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenSeq(
            iter.into_iter()
                .map(Into::into)
                .filter(|s: &String| !s.is_empty())
                .collect(),
        )
    }
}

fn is_joiner(c: char) -> bool {
    matches!(c, '-' | '\'' | '\u{2019}')
}

/// Lowercases, drops punctuation and splits on whitespace.
///
/// Hyphens and apostrophes survive only between two alphanumeric characters
/// ("t-shirt", "man's"). Any other non-alphanumeric character acts as a
/// separator.
pub fn tokenize(text: &str) -> TokenSeq {
    let lower = text.to_lowercase();
    let chars: Vec<char> = lower.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let keep = if c.is_alphanumeric() {
            true
        } else if is_joiner(c) {
            let prev_ok = i > 0 && chars[i - 1].is_alphanumeric();
            let next_ok = chars.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            prev_ok && next_ok
        } else {
            false
        };
        if keep {
            cur.push(c);
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    TokenSeq(tokens)
}

/// Multiset of n-grams over a token sequence, iterated in first-occurrence order.
#[derive(Debug, Clone)]
pub struct Ngrams<'a> {
    order: Vec<&'a [String]>,
    counts: HashMap<&'a [String], usize>,
    total: usize,
}

impl<'a> Ngrams<'a> {
    /// Number of n-gram occurrences, `max(0, L - n + 1)`.
    pub fn total(&self) -> usize {
        self.total
    }

    pub fn unique(&self) -> usize {
        self.order.len()
    }

    pub fn count(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Distinct n-grams with their multiplicity.
    pub fn iter(&self) -> impl Iterator<Item = (&'a [String], usize)> + '_ {
        self.order.iter().map(move |g| (*g, self.counts[g]))
    }
}

pub fn ngrams(seq: &[String], n: usize) -> Result<Ngrams<'_>> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let mut order = Vec::new();
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    let mut total = 0;
    if seq.len() >= n {
        for w in seq.windows(n) {
            total += 1;
            let c = counts.entry(w).or_insert(0);
            if *c == 0 {
                order.push(w);
            }
            *c += 1;
        }
    }
    Ok(Ngrams {
        order,
        counts,
        total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Man,
    Woman,
    Person,
}

/// Three disjoint sets of gendered person words plus the subset that is plural.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenderLexicon {
    man: BTreeSet<String>,
    woman: BTreeSet<String>,
    person: BTreeSet<String>,
    plural: BTreeSet<String>,
}

/// On-disk lexicon override. `plural` is optional and lists the terms that
/// neutralize to "people" instead of "person".
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexiconFile {
    pub man: Vec<String>,
    pub woman: Vec<String>,
    pub person: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plural: Vec<String>,
}

impl GenderLexicon {
    pub fn new<I, S>(man: I, woman: I, person: I, plural: impl IntoIterator<Item = S>) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let norm = |it: I| -> BTreeSet<String> {
            it.into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .filter(|s| !s.is_empty())
                .collect()
        };
        let lex = GenderLexicon {
            man: norm(man),
            woman: norm(woman),
            person: norm(person),
            plural: plural
                .into_iter()
                .map(|s| s.as_ref().trim().to_lowercase())
                .collect(),
        };
        lex.validate()?;
        Ok(lex)
    }

    fn validate(&self) -> Result<()> {
        for (name, set) in [("man", &self.man), ("woman", &self.woman), ("person", &self.person)] {
            if set.is_empty() {
                return Err(Error::invalid(format!("lexicon: {name} terms are empty")));
            }
        }
        let pairs = [
            ("man", &self.man, "woman", &self.woman),
            ("man", &self.man, "person", &self.person),
            ("woman", &self.woman, "person", &self.person),
        ];
        for (an, a, bn, b) in pairs {
            if let Some(t) = a.intersection(b).next() {
                return Err(Error::invalid(format!(
                    "lexicon: {t:?} appears in both {an} and {bn} terms"
                )));
            }
        }
        Ok(())
    }

    pub fn from_file(file: LexiconFile) -> Result<Self> {
        GenderLexicon::new(file.man, file.woman, file.person, file.plural)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: LexiconFile = serde_json::from_str(&text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        GenderLexicon::from_file(file)
    }

    pub fn classify(&self, token: &str) -> Option<Gender> {
        if self.man.contains(token) {
            Some(Gender::Man)
        } else if self.woman.contains(token) {
            Some(Gender::Woman)
        } else if self.person.contains(token) {
            Some(Gender::Person)
        } else {
            None
        }
    }

    pub fn terms(&self, g: Gender) -> &BTreeSet<String> {
        match g {
            Gender::Man => &self.man,
            Gender::Woman => &self.woman,
            Gender::Person => &self.person,
        }
    }

    pub fn is_plural(&self, token: &str) -> bool {
        self.plural.contains(token)
    }

    pub fn to_file(&self) -> LexiconFile {
        LexiconFile {
            man: self.man.iter().cloned().collect(),
            woman: self.woman.iter().cloned().collect(),
            person: self.person.iter().cloned().collect(),
            plural: self.plural.iter().cloned().collect(),
        }
    }
}

impl Default for GenderLexicon {
    fn default() -> Self {
        default_gender_lexicon()
    }
}

pub fn default_gender_lexicon() -> GenderLexicon {
    GenderLexicon::new(
        vec![
            "man", "men", "boy", "boys", "male", "males", "gentleman", "gentlemen", "guy", "guys",
        ],
        vec![
            "woman", "women", "girl", "girls", "female", "females", "lady", "ladies",
        ],
        vec!["person", "people", "persons"],
        vec![
            "men", "boys", "males", "gentlemen", "guys", "women", "girls", "females", "ladies",
            "people", "persons",
        ],
    )
    .expect("built-in lexicon is disjoint")
}
