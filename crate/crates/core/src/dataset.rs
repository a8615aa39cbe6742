//! Dataset loading and answer canonicalization for the two supported
//! question-answering benchmarks.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    #[serde(rename = "strategyqa")]
    StrategyQa,
    #[serde(rename = "hotpotqa")]
    HotpotQa,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::StrategyQa => "strategyqa",
            DatasetKind::HotpotQa => "hotpotqa",
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "strategyqa" => Ok(DatasetKind::StrategyQa),
            "hotpotqa" => Ok(DatasetKind::HotpotQa),
            other => Err(format!("unknown dataset kind `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read dataset file {path}: {source}")]
    FileUnreadable {
        path: String,
        source: std::io::Error,
    },
    #[error("dataset file {path} is not valid JSON: {source}")]
    InvalidJson {
        path: String,
        source: serde_json::Error,
    },
    #[error("schema violation at record {index}, field `{field}`: {detail}")]
    SchemaViolation {
        index: usize,
        field: String,
        detail: String,
    },
    #[error("no boolean answer token in `{0}`")]
    Unparseable(String),
}

/// One dataset item in canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub question: String,
    pub gold_answer: String,
    pub kind: DatasetKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub records: Vec<QaRecord>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn load_dataset(path: &Path, kind: DatasetKind) -> Result<Dataset, DatasetError> {
    match kind {
        DatasetKind::StrategyQa => load_strategyqa(path),
        DatasetKind::HotpotQa => load_hotpotqa(path),
    }
}

/// JSON array of `{qid, question, answer: bool}` objects; extra fields ignored.
pub fn load_strategyqa(path: &Path) -> Result<Dataset, DatasetError> {
    let items = read_array(path)?;
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let id = require_string(item, index, "qid")?;
        let question = require_string(item, index, "question")?;
        let answer = item
            .get("answer")
            .ok_or_else(|| missing(index, "answer"))?
            .as_bool()
            .ok_or_else(|| DatasetError::SchemaViolation {
                index,
                field: "answer".into(),
                detail: "expected a boolean".into(),
            })?;
        records.push(QaRecord {
            id,
            question,
            gold_answer: if answer { "true" } else { "false" }.to_string(),
            kind: DatasetKind::StrategyQa,
        });
    }
    check_unique_ids(&records)?;
    Ok(Dataset {
        kind: DatasetKind::StrategyQa,
        records,
    })
}

/// JSON array of `{_id, question, answer}` objects; supporting paragraphs and
/// any other extra fields are ignored (evaluation is closed-book).
pub fn load_hotpotqa(path: &Path) -> Result<Dataset, DatasetError> {
    let items = read_array(path)?;
    let mut records = Vec::with_capacity(items.len());
    for (index, item) in items.iter().enumerate() {
        let id = require_string(item, index, "_id")?;
        let question = require_string(item, index, "question")?;
        let answer = require_string(item, index, "answer")?;
        records.push(QaRecord {
            id,
            question,
            gold_answer: answer.trim().to_string(),
            kind: DatasetKind::HotpotQa,
        });
    }
    check_unique_ids(&records)?;
    Ok(Dataset {
        kind: DatasetKind::HotpotQa,
        records,
    })
}

fn read_array(path: &Path) -> Result<Vec<Value>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatasetError::FileUnreadable {
        path: path.display().to_string(),
        source,
    })?;
    let value: Value =
        serde_json::from_str(&text).map_err(|source| DatasetError::InvalidJson {
            path: path.display().to_string(),
            source,
        })?;
    match value {
        Value::Array(items) => Ok(items),
        _ => Err(DatasetError::SchemaViolation {
            index: 0,
            field: "<root>".into(),
            detail: "expected a JSON array".into(),
        }),
    }
}

fn require_string(item: &Value, index: usize, field: &str) -> Result<String, DatasetError> {
    let value = item.get(field).ok_or_else(|| missing(index, field))?;
    let s = value
        .as_str()
        .ok_or_else(|| DatasetError::SchemaViolation {
            index,
            field: field.into(),
            detail: "expected a string".into(),
        })?;
    if field == "question" && s.trim().is_empty() {
        return Err(DatasetError::SchemaViolation {
            index,
            field: field.into(),
            detail: "question is empty".into(),
        });
    }
    Ok(s.to_string())
}

fn missing(index: usize, field: &str) -> DatasetError {
    DatasetError::SchemaViolation {
        index,
        field: field.into(),
        detail: "field missing".into(),
    }
}

fn check_unique_ids(records: &[QaRecord]) -> Result<(), DatasetError> {
    let mut seen = std::collections::HashSet::new();
    for (index, record) in records.iter().enumerate() {
        if !seen.insert(record.id.as_str()) {
            return Err(DatasetError::SchemaViolation {
                index,
                field: "id".into(),
                detail: format!("duplicate id `{}`", record.id),
            });
        }
    }
    Ok(())
}

/// Fold a raw model answer into the dataset's canonical form.
///
/// StrategyQA collapses to "true"/"false" (accepting yes/no, since the CoT
/// exemplars answer in that vocabulary); HotpotQA strips an optional
/// "Answer:" prefix, angle brackets, and surrounding quotes.
pub fn normalize_answer(raw: &str, kind: DatasetKind) -> Result<String, DatasetError> {
    match kind {
        DatasetKind::StrategyQa => {
            let stripped = strip_answer_prefix(raw.trim());
            let mut verdicts = std::collections::BTreeSet::new();
            for token in stripped
                .split(|c: char| !c.is_ascii_alphanumeric())
                .filter(|t| !t.is_empty())
            {
                match token.to_ascii_lowercase().as_str() {
                    "true" | "yes" => {
                        verdicts.insert(true);
                    }
                    "false" | "no" => {
                        verdicts.insert(false);
                    }
                    _ => {}
                }
            }
            match (verdicts.contains(&true), verdicts.contains(&false)) {
                (true, false) => Ok("true".to_string()),
                (false, true) => Ok("false".to_string()),
                _ => Err(DatasetError::Unparseable(raw.to_string())),
            }
        }
        DatasetKind::HotpotQa => {
            let mut s = strip_answer_prefix(raw.trim()).trim();
            // prefer an explicit <answer> span when the model emitted one
            if let (Some(open), Some(close)) = (s.find('<'), s.rfind('>')) {
                if open < close {
                    s = s[open + 1..close].trim();
                }
            }
            loop {
                let t = s.trim_matches(|c| c == '"' || c == '\'').trim();
                if t == s {
                    break;
                }
                s = t;
            }
            Ok(s.to_string())
        }
    }
}

fn strip_answer_prefix(s: &str) -> &str {
    let lower = s.to_ascii_lowercase();
    if let Some(pos) = lower.find("answer:") {
        // only treat it as a prefix, not mid-text occurrences
        if lower[..pos].trim().is_empty() {
            return s[pos + "answer:".len()..].trim_start();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn strategyqa_maps_booleans() {
        let f = write_tmp(
            r#"[{"qid":"q1","question":"Did Aristotle use a laptop?","answer":false}]"#,
        );
        let ds = load_strategyqa(f.path()).unwrap();
        assert_eq!(ds.records.len(), 1);
        assert_eq!(ds.records[0].gold_answer, "false");
        assert_eq!(ds.records[0].kind, DatasetKind::StrategyQa);
    }

    #[test]
    fn strategyqa_empty_array() {
        let f = write_tmp("[]");
        assert!(load_strategyqa(f.path()).unwrap().is_empty());
    }

    #[test]
    fn strategyqa_missing_answer_field() {
        let f = write_tmp(r#"[{"qid":"q1","question":"x?"}]"#);
        match load_strategyqa(f.path()) {
            Err(DatasetError::SchemaViolation { index, field, .. }) => {
                assert_eq!(index, 0);
                assert_eq!(field, "answer");
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn hotpotqa_trims_gold_answer() {
        let f = write_tmp(
            r#"[{"_id":"a","question":"Who wrote Hamlet?","answer":" Shakespeare "}]"#,
        );
        let ds = load_hotpotqa(f.path()).unwrap();
        assert_eq!(ds.records[0].gold_answer, "Shakespeare");
    }

    #[test]
    fn hotpotqa_duplicate_ids_rejected() {
        let f = write_tmp(
            r#"[{"_id":"a","question":"x?","answer":"1"},{"_id":"a","question":"y?","answer":"2"}]"#,
        );
        match load_hotpotqa(f.path()) {
            Err(DatasetError::SchemaViolation { index, detail, .. }) => {
                assert_eq!(index, 1);
                assert!(detail.contains("duplicate"));
            }
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn hotpotqa_preserves_order() {
        let items: Vec<String> = (0..20)
            .map(|i| format!(r#"{{"_id":"id{i}","question":"q{i}?","answer":"a{i}"}}"#))
            .collect();
        let f = write_tmp(&format!("[{}]", items.join(",")));
        let ds = load_hotpotqa(f.path()).unwrap();
        assert_eq!(ds.len(), 20);
        for (i, r) in ds.records.iter().enumerate() {
            assert_eq!(r.id, format!("id{i}"));
        }
    }

    #[test]
    fn load_determinism() {
        let f = write_tmp(
            r#"[{"qid":"q1","question":"x?","answer":true},{"qid":"q2","question":"y?","answer":false}]"#,
        );
        assert_eq!(
            load_strategyqa(f.path()).unwrap(),
            load_strategyqa(f.path()).unwrap()
        );
    }

    #[test]
    fn missing_file_is_unreadable() {
        assert!(matches!(
            load_strategyqa(Path::new("/nonexistent/file.json")),
            Err(DatasetError::FileUnreadable { .. })
        ));
    }

    #[test]
    fn normalize_strategyqa_variants() {
        for (raw, want) in [
            ("Answer: no", "false"),
            ("TRUE.", "true"),
            ("yes", "true"),
            ("  False!  ", "false"),
            ("Answer: Yes", "true"),
        ] {
            assert_eq!(
                normalize_answer(raw, DatasetKind::StrategyQa).unwrap(),
                want,
                "raw = {raw:?}"
            );
        }
    }

    #[test]
    fn normalize_strategyqa_unparseable() {
        assert!(matches!(
            normalize_answer("maybe", DatasetKind::StrategyQa),
            Err(DatasetError::Unparseable(_))
        ));
        // contradictory tokens are also unparseable
        assert!(normalize_answer("yes no", DatasetKind::StrategyQa).is_err());
    }

    #[test]
    fn normalize_hotpotqa_strips_wrapping() {
        for (raw, want) in [
            ("I think <Paris>", "Paris"),
            ("Answer: \"Shakespeare\"", "Shakespeare"),
            ("<William Shakespeare>", "William Shakespeare"),
            ("  plain phrase  ", "plain phrase"),
        ] {
            assert_eq!(
                normalize_answer(raw, DatasetKind::HotpotQa).unwrap(),
                want,
                "raw = {raw:?}"
            );
        }
    }

    #[test]
    fn normalize_is_idempotent() {
        for kind in [DatasetKind::StrategyQa, DatasetKind::HotpotQa] {
            for canonical in ["true", "false"] {
                let once = normalize_answer(canonical, kind).unwrap();
                assert_eq!(normalize_answer(&once, kind).unwrap(), once);
            }
        }
        let once = normalize_answer("Paris", DatasetKind::HotpotQa).unwrap();
        assert_eq!(normalize_answer(&once, DatasetKind::HotpotQa).unwrap(), once);
    }
}
