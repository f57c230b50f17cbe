//! Text corpora, their JSONL interchange format, and the shared tokenizer.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// One identified text sample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

impl Record {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Record {
            id: id.into(),
            text: text.into(),
            labels: BTreeSet::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_labels<I, S>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.labels = labels.into_iter().map(Into::into).collect();
        self
    }

    fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation("record id must be non-empty"));
        }
        if self.text.trim().is_empty() {
            return Err(Error::validation(format!(
                "record {:?} has empty text",
                self.id
            )));
        }
        Ok(())
    }

    pub fn tokens(&self) -> TokenSeq {
        tokenize(&self.text)
    }
}

/// An ordered, id-unique collection of records.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Corpus {
    pub name: String,
    records: Vec<Record>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids and empty texts.
    pub fn new(name: impl Into<String>, records: Vec<Record>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            r.validate()?;
            if !seen.insert(r.id.as_str()) {
                return Err(Error::validation(format!("duplicate record id {:?}", r.id)));
            }
        }
        Ok(Corpus {
            name: name.into(),
            records,
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.records.iter().map(|r| r.id.as_str())
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    /// Id → record lookup table borrowing from this corpus.
    pub fn index(&self) -> HashMap<&str, &Record> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }

    /// Returns the records with the given ids in the order given.
    pub fn select(&self, ids: &[String]) -> Result<Vec<Record>> {
        let index = self.index();
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            match index.get(id.as_str()) {
                Some(r) => out.push((*r).clone()),
                None => missing.push(id.clone()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Coverage {
                what: format!("records in corpus {:?}", self.name),
                missing,
            });
        }
        Ok(out)
    }
}

/// Loads a JSONL corpus. The corpus name is the file stem.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let rows: Vec<(usize, Record)> = jsonl::read_lines(path)?;
    let mut seen: HashMap<String, usize> = HashMap::with_capacity(rows.len());
    let mut records = Vec::with_capacity(rows.len());
    for (line, record) in rows {
        record.validate().map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if let Some(first) = seen.insert(record.id.clone(), line) {
            return Err(Error::Validation(format!(
                "{}:{line}: duplicate record id {:?} (first seen on line {first})",
                path.display(),
                record.id
            )));
        }
        records.push(record);
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Corpus { name, records })
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    jsonl::write_lines(path, corpus.records())
}

/// Lowercased, punctuation-trimmed whitespace tokens.
#[derive(Clone, Debug, PartialEq, Eq, Default, Hash)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    pub fn join(&self, sep: &str) -> String {
        self.0.join(sep)
    }
}

impl std::ops::Deref for TokenSeq {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00A1}' | '\u{00A7}' | '\u{00AB}' | '\u{00B6}' | '\u{00B7}' | '\u{00BB}' | '\u{00BF}'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205E}'
            | '\u{3001}'..='\u{3003}'
            | '\u{3008}'..='\u{3011}'
            | '\u{FF01}'..='\u{FF0F}'
            | '\u{FF1A}'..='\u{FF1F}')
}

/// Splits on Unicode whitespace, lowercases, trims punctuation from both ends
/// of each token and drops tokens that end up empty.
pub fn tokenize(text: &str) -> TokenSeq {
    TokenSeq(
        text.split_whitespace()
            .filter_map(|raw| {
                let lower = raw.to_lowercase();
                let trimmed = lower.trim_matches(is_punct);
                (!trimmed.is_empty()).then(|| trimmed.to_string())
            })
            .collect(),
    )
}

/// Whitespace tokens with no normalisation at all.
pub fn raw_tokens(text: &str) -> TokenSeq {
    TokenSeq(text.split_whitespace().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strs(t: &TokenSeq) -> Vec<&str> {
        t.iter().map(String::as_str).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(strs(&tokenize("The cat, sat.")), ["the", "cat", "sat"]);
        assert!(tokenize("").is_empty());
        assert_eq!(strs(&tokenize("A  a\tA")), ["a", "a", "a"]);
        assert_eq!(strs(&tokenize("... -- !!")), Vec::<&str>::new());
        assert_eq!(strs(&tokenize("«naïve» “测试”")), ["naïve", "测试"]);
        assert_eq!(strs(&tokenize("don't")), ["don't"]);
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn load_preserves_order_and_ids() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.jsonl",
            "{\"id\":\"b\",\"text\":\"x\"}\n{\"id\":\"a\",\"text\":\"y\",\"labels\":[\"L\"]}\n{\"id\":\"c\",\"text\":\"z\",\"meta\":{\"k\":\"v\"}}\n",
        );
        let c = load_corpus(&p).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.ids().collect::<Vec<_>>(), ["b", "a", "c"]);
        assert!(c.records()[1].labels.contains("L"));
        assert_eq!(c.records()[2].meta["k"], "v");
        assert_eq!(c.name, "c");
    }

    #[test]
    fn duplicate_id_cites_second_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = [
            r#"{"id":"r0","text":"a"}"#,
            r#"{"id":"r1","text":"b"}"#,
            r#"{"id":"r2","text":"c"}"#,
            r#"{"id":"r3","text":"d"}"#,
            r#"{"id":"r1","text":"e"}"#,
        ]
        .join("\n");
        let p = write(&dir, "d.jsonl", &body);
        let err = load_corpus(&p).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
        let msg = err.to_string();
        assert!(msg.contains(":5:"), "{msg}");
        assert!(msg.contains("r1"), "{msg}");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "m.jsonl",
            "{\"id\":\"a\",\"text\":\"x\"}\n{not json}\n",
        );
        match load_corpus(&p).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.jsonl", "");
        assert!(load_corpus(&p).unwrap().is_empty());
    }

    #[test]
    fn blank_text_rejected() {
        assert!(Corpus::new("x", vec![Record::new("a", "   ")]).is_err());
        assert!(Corpus::new("x", vec![Record::new("", "t")]).is_err());
    }

    #[test]
    fn unicode_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = Corpus::new("u", vec![Record::new("r1", "naïve 测试")]).unwrap();
        let p = dir.path().join("u.jsonl");
        save_corpus(&c, &p).unwrap();
        assert_eq!(load_corpus(&p).unwrap().records()[0].text, "naïve 测试");
    }

    #[test]
    fn save_to_missing_dir_is_io_error() {
        let c = Corpus::new("u", vec![Record::new("r1", "x")]).unwrap();
        let err = save_corpus(&c, Path::new("/nonexistent-dir/xyz/c.jsonl")).unwrap_err();
        assert!(err.is_io());
        assert!(err.to_string().contains("/nonexistent-dir/xyz/c.jsonl"));
    }

    fn arb_record() -> impl Strategy<Value = Record> {
        (
            "[a-z0-9]{1,8}",
            "\\PC{0,20}[a-zA-Zé测]\\PC{0,20}",
            proptest::collection::btree_set("[a-z]{1,5}", 0..3),
            proptest::collection::btree_map("[a-z]{1,4}", "\\PC{0,6}", 0..2),
        )
            .prop_map(|(id, text, labels, meta)| Record {
                id,
                text,
                labels,
                meta,
            })
    }

    proptest! {
        #[test]
        fn save_load_round_trip(records in proptest::collection::vec(arb_record(), 0..12)) {
            let mut seen = HashSet::new();
            let records: Vec<Record> = records.into_iter().filter(|r| seen.insert(r.id.clone())).collect();
            let c = Corpus::new("rt", records).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("rt.jsonl");
            save_corpus(&c, &p).unwrap();
            let back = load_corpus(&p).unwrap();
            prop_assert_eq!(back.records(), c.records());
        }

        #[test]
        fn tokenize_idempotent(text in "\\PC{0,60}") {
            let once = tokenize(&text);
            let twice = tokenize(&once.join(" "));
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn tokenize_case_insensitive(text in "[a-zA-Z ,.!?]{0,40}") {
            prop_assert_eq!(tokenize(&text.to_uppercase()), tokenize(&text.to_lowercase()));
        }

        #[test]
        fn tokens_never_empty(text in "\\PC{0,60}") {
            prop_assert!(tokenize(&text).iter().all(|t| !t.is_empty()));
        }
    }
}
