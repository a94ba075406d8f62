//! Tag alphabets and tagged corpora.
//!
//! A [`TagCorpus`] is a list of sentences, each a non-empty array of tag IDs
//! drawn from a [`TagAlphabet`]. Corpora are read either from the canonical
//! tag-stream format (one sentence per line, blank line between documents)
//! or from CoNLL-U files, whose UPOS column is mapped through the alphabet's
//! reduction table.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of a tag within its alphabet.
pub type TagId = u16;

/// The 17 Universal Dependencies v2 part-of-speech categories.
pub const UPOS_TAGS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

/// Shared reduction table, also read by the Python tagging adapter.
pub const DEFAULT_REDUCTION_JSON: &str = include_str!("../data/reduction_default.json");

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unknown tag {name:?} on line {line}")]
    UnknownTag { name: String, line: usize },
    #[error("malformed line {line}: expected at least 5 tab-separated fields")]
    MalformedLine { line: usize },
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("tag id {id} is outside the alphabet (size {size})")]
    TagOutOfRange { id: TagId, size: usize },
    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// On-disk shape of an alphabet: ordered tag names plus a source-tag → tag-name map.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlphabetFile {
    pub tags: Vec<String>,
    #[serde(default)]
    pub reduction: BTreeMap<String, String>,
}

/// A closed vocabulary of tag categories plus the mask sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagAlphabet {
    tags: Vec<String>,
    reduction: BTreeMap<String, TagId>,
}

impl TagAlphabet {
    /// Builds an alphabet from ordered tag names and a map from source tag
    /// names (e.g. UPOS) to those tag names. Names are upper-cased.
    pub fn new(
        tags: Vec<String>,
        reduction: BTreeMap<String, String>,
    ) -> Result<Self, IngestError> {
        if tags.is_empty() {
            return Err(IngestError::InvalidAlphabet("no tags".into()));
        }
        if tags.len() >= TagId::MAX as usize {
            return Err(IngestError::InvalidAlphabet(format!(
                "too many tags ({})",
                tags.len()
            )));
        }
        let tags: Vec<String> = tags.into_iter().map(|t| t.trim().to_uppercase()).collect();
        let mut index = BTreeMap::new();
        for (i, t) in tags.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(IngestError::InvalidAlphabet(format!("bad tag name {t:?}")));
            }
            if index.insert(t.clone(), i as TagId).is_some() {
                return Err(IngestError::InvalidAlphabet(format!("duplicate tag {t}")));
            }
        }
        let mut mapped = BTreeMap::new();
        for (src, dst) in reduction {
            let dst = dst.trim().to_uppercase();
            let id = *index.get(&dst).ok_or_else(|| {
                IngestError::InvalidAlphabet(format!("{src} maps to unknown tag {dst}"))
            })?;
            mapped.insert(src.trim().to_uppercase(), id);
        }
        Ok(Self {
            tags,
            reduction: mapped,
        })
    }

    /// An alphabet whose reduction is the identity on its own names.
    pub fn from_names<I, S>(names: I) -> Result<Self, IngestError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(names.into_iter().map(Into::into).collect(), BTreeMap::new())
    }

    pub fn from_json(json: &str) -> Result<Self, IngestError> {
        let file: AlphabetFile = serde_json::from_str(json)
            .map_err(|e| IngestError::InvalidAlphabet(e.to_string()))?;
        Self::new(file.tags, file.reduction)
    }

    pub fn to_file(&self) -> AlphabetFile {
        AlphabetFile {
            tags: self.tags.clone(),
            reduction: self
                .reduction
                .iter()
                .map(|(k, &v)| (k.clone(), self.tags[v as usize].clone()))
                .collect(),
        }
    }

    /// Number of real tags, excluding the mask sentinel.
    pub fn size(&self) -> usize {
        self.tags.len()
    }

    /// The mask sentinel; always equal to `size()` and so never a real tag.
    pub fn mask_id(&self) -> TagId {
        self.tags.len() as TagId
    }

    pub fn tags(&self) -> &[String] {
        &self.tags
    }

    pub fn name(&self, id: TagId) -> &str {
        if id == self.mask_id() {
            "[MASK]"
        } else {
            &self.tags[id as usize]
        }
    }

    /// Resolves one of this alphabet's own tag names (case-insensitive).
    pub fn tag_id(&self, name: &str) -> Option<TagId> {
        let upper = name.to_uppercase();
        self.tags.iter().position(|t| *t == upper).map(|i| i as TagId)
    }

    /// Maps a source tag (e.g. a UPOS name) through the reduction table,
    /// falling back to the alphabet's own tag names.
    pub fn lookup(&self, name: &str) -> Option<TagId> {
        let upper = name.to_uppercase();
        self.reduction
            .get(&upper)
            .copied()
            .or_else(|| self.tag_id(&upper))
    }

    pub fn reduction(&self) -> impl Iterator<Item = (&str, TagId)> {
        self.reduction.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

/// The nine-category alphabet (ADJ, ADP, ADV, CONJ, DET, NOUN, PRON, VERB,
/// OTHER) with the UPOS reduction from `data/reduction_default.json`.
pub fn default_reduction() -> TagAlphabet {
    TagAlphabet::from_json(DEFAULT_REDUCTION_JSON).expect("bundled reduction table is valid")
}

/// Sentences of tag IDs grouped into documents. Immutable once built.
#[derive(Debug, Clone)]
pub struct TagCorpus {
    sentences: Vec<Vec<TagId>>,
    /// Index of the first sentence of each document; always starts with 0.
    doc_starts: Vec<usize>,
    alphabet: Arc<TagAlphabet>,
    token_count: usize,
}

impl PartialEq for TagCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.sentences == other.sentences
            && self.doc_starts == other.doc_starts
            && *self.alphabet == *other.alphabet
    }
}

impl TagCorpus {
    /// A single-document corpus. Empty sentences are dropped.
    pub fn new(sentences: Vec<Vec<TagId>>, alphabet: Arc<TagAlphabet>) -> Result<Self, IngestError> {
        Self::with_documents(sentences, vec![0], alphabet)
    }

    /// Builds a corpus whose documents begin at the given sentence indices.
    pub fn with_documents(
        sentences: Vec<Vec<TagId>>,
        doc_starts: Vec<usize>,
        alphabet: Arc<TagAlphabet>,
    ) -> Result<Self, IngestError> {
        let size = alphabet.size();
        // Remap document starts while dropping empty sentences.
        let mut kept = Vec::with_capacity(sentences.len());
        let mut starts = Vec::new();
        let mut doc_iter = doc_starts.iter().copied().peekable();
        for (i, s) in sentences.into_iter().enumerate() {
            let mut opens_doc = false;
            while doc_iter.peek().is_some_and(|&d| d <= i) {
                doc_iter.next();
                opens_doc = true;
            }
            if opens_doc && starts.last() != Some(&kept.len()) {
                starts.push(kept.len());
            }
            if s.is_empty() {
                continue;
            }
            if let Some(&id) = s.iter().find(|&&id| id as usize >= size) {
                return Err(IngestError::TagOutOfRange { id, size });
            }
            kept.push(s);
        }
        starts.retain(|&d| d < kept.len());
        if kept.is_empty() {
            return Err(IngestError::EmptyCorpus);
        }
        if starts.first() != Some(&0) {
            starts.insert(0, 0);
        }
        let token_count = kept.iter().map(Vec::len).sum();
        Ok(Self {
            sentences: kept,
            doc_starts: starts,
            alphabet,
            token_count,
        })
    }

    pub fn sentences(&self) -> &[Vec<TagId>] {
        &self.sentences
    }

    pub fn alphabet(&self) -> &Arc<TagAlphabet> {
        &self.alphabet
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    pub fn document_starts(&self) -> &[usize] {
        &self.doc_starts
    }

    /// Sentences of each document.
    pub fn documents(&self) -> impl Iterator<Item = &[Vec<TagId>]> {
        let ends = self
            .doc_starts
            .iter()
            .skip(1)
            .copied()
            .chain(std::iter::once(self.sentences.len()));
        self.doc_starts
            .iter()
            .zip(ends)
            .map(move |(&a, b)| &self.sentences[a..b])
    }

    /// Concatenates the sentences of each document into one sequence, so
    /// that context windows may cross sentence boundaries.
    pub fn as_document_stream(&self) -> TagCorpus {
        let sentences: Vec<Vec<TagId>> = self.documents().map(|d| d.concat()).collect();
        let doc_starts = (0..sentences.len()).collect();
        TagCorpus {
            token_count: self.token_count,
            sentences,
            doc_starts,
            alphabet: Arc::clone(&self.alphabet),
        }
    }

    /// Relative tag frequencies over the whole corpus.
    pub fn unigram(&self) -> Vec<f64> {
        let mut counts = vec![0u64; self.alphabet.size()];
        for &t in self.sentences.iter().flatten() {
            counts[t as usize] += 1;
        }
        let total = self.token_count as f64;
        counts.iter().map(|&c| c as f64 / total).collect()
    }

    /// Writes the canonical tag-stream form: one sentence per line, single
    /// spaces between tags, a blank line between documents.
    pub fn write_tagstream<W: Write>(&self, mut out: W) -> io::Result<()> {
        let mut next_doc = self.doc_starts.iter().skip(1).peekable();
        for (i, sentence) in self.sentences.iter().enumerate() {
            if next_doc.peek() == Some(&&i) {
                next_doc.next();
                out.write_all(b"\n")?;
            }
            let mut first = true;
            for &t in sentence {
                if !first {
                    out.write_all(b" ")?;
                }
                first = false;
                out.write_all(self.alphabet.name(t).as_bytes())?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_tagstream(&self) -> String {
        let mut buf = Vec::with_capacity(self.token_count * 5);
        self.write_tagstream(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("tag names are UTF-8")
    }
}

/// Reads the tag-stream format. Each non-blank line is a sentence of
/// whitespace-separated tag names; blank lines separate documents.
pub fn read_tagstream<R: BufRead>(
    input: R,
    alphabet: Arc<TagAlphabet>,
) -> Result<TagCorpus, IngestError> {
    let mut sentences = Vec::new();
    let mut doc_starts = vec![0];
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            if doc_starts.last() != Some(&sentences.len()) {
                doc_starts.push(sentences.len());
            }
            continue;
        }
        let sentence = line
            .split_whitespace()
            .map(|name| {
                alphabet.tag_id(name).ok_or_else(|| IngestError::UnknownTag {
                    name: name.to_string(),
                    line: lineno + 1,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        sentences.push(sentence);
    }
    TagCorpus::with_documents(sentences, doc_starts, alphabet)
}

/// Reads the UPOS column of a CoNLL-U file and reduces it through `alphabet`.
///
/// Multiword-token ranges (`1-2`) and empty nodes (`8.1`) are skipped. A
/// `# newdoc` comment starts a new document.
pub fn read_conllu<R: BufRead>(
    input: R,
    alphabet: Arc<TagAlphabet>,
) -> Result<TagCorpus, IngestError> {
    let mut sentences = Vec::new();
    let mut doc_starts = vec![0];
    let mut current = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if comment.trim_start().starts_with("newdoc") {
                if !current.is_empty() {
                    sentences.push(std::mem::take(&mut current));
                }
                if doc_starts.last() != Some(&sentences.len()) {
                    doc_starts.push(sentences.len());
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 5 {
            return Err(IngestError::MalformedLine { line: lineno + 1 });
        }
        let id = fields[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let upos = fields[3].trim();
        let tag = alphabet.lookup(upos).ok_or_else(|| IngestError::UnknownTag {
            name: upos.to_string(),
            line: lineno + 1,
        })?;
        current.push(tag);
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    TagCorpus::with_documents(sentences, doc_starts, alphabet)
}
