use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Corpus, CorpusError, Label, Sex, Split, SubjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" | "ndjson" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown corpus format {other:?}")),
        }
    }
}

/// On-disk row shape shared by both formats.
#[derive(Debug, Serialize)]
struct Row<'a> {
    subject_id: &'a str,
    age: u32,
    sex: Sex,
    task1: &'a str,
    task2: &'a str,
    label: Label,
    #[serde(skip_serializing_if = "Option::is_none")]
    split: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rationale: Option<&'a str>,
}

impl<'a> From<&'a SubjectRecord> for Row<'a> {
    fn from(s: &'a SubjectRecord) -> Self {
        Row {
            subject_id: &s.subject_id,
            age: s.age,
            sex: s.sex,
            task1: &s.transcript_task1,
            task2: &s.transcript_task2,
            label: s.label,
            split: (s.split != Split::Unassigned).then(|| s.split.token()),
            rationale: s.rationale.as_deref(),
        }
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let subjects = match format {
        CorpusFormat::Jsonl => parse_jsonl(&text)?,
        CorpusFormat::Csv => parse_csv(&text)?,
    };
    Corpus::new(subjects, path.display().to_string())
}

fn malformed(line: usize, reason: impl Into<String>) -> CorpusError {
    CorpusError::MalformedRow {
        line,
        reason: reason.into(),
    }
}

fn parse_jsonl(text: &str) -> Result<Vec<SubjectRecord>, CorpusError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| malformed(line, format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| malformed(line, "row is not a JSON object"))?;
        out.push(record_from_object(obj, line)?);
    }
    Ok(out)
}

fn record_from_object(obj: &Map<String, Value>, line: usize) -> Result<SubjectRecord, CorpusError> {
    let text = |key: &str| -> Result<String, CorpusError> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(malformed(line, format!("field {key:?} must be a string"))),
            None => Err(malformed(line, format!("missing field {key:?}"))),
        }
    };
    let optional = |key: &str| -> Result<Option<String>, CorpusError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(_) => Err(malformed(line, format!("field {key:?} must be a string"))),
        }
    };
    let age = match obj.get("age") {
        Some(v) => v
            .as_u64()
            .and_then(|a| u32::try_from(a).ok())
            .ok_or_else(|| malformed(line, "field \"age\" must be a nonnegative integer"))?,
        None => return Err(malformed(line, "missing field \"age\"")),
    };
    let split = match optional("split")? {
        Some(s) => Split::from_str(&s).map_err(|e| malformed(line, e))?,
        None => Split::Unassigned,
    };
    Ok(SubjectRecord {
        subject_id: text("subject_id")?,
        age,
        sex: Sex::from_str(&text("sex")?).map_err(|e| malformed(line, e))?,
        transcript_task1: text("task1")?,
        transcript_task2: text("task2")?,
        label: Label::from_str(&text("label")?).map_err(|e| malformed(line, e))?,
        split,
        rationale: optional("rationale")?,
    })
}

fn parse_csv(text: &str) -> Result<Vec<SubjectRecord>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |name: &str| -> Result<&str, CorpusError> {
            col(name)
                .and_then(|i| record.get(i))
                .ok_or_else(|| malformed(line, format!("missing field {name:?}")))
        };
        let opt = |name: &str| col(name).and_then(|i| record.get(i)).filter(|v| !v.is_empty());
        let age = field("age")?
            .trim()
            .parse::<u32>()
            .map_err(|_| malformed(line, "field \"age\" must be a nonnegative integer"))?;
        let split = match opt("split") {
            Some(s) => Split::from_str(s).map_err(|e| malformed(line, e))?,
            None => Split::Unassigned,
        };
        out.push(SubjectRecord {
            subject_id: field("subject_id")?.to_string(),
            age,
            sex: Sex::from_str(field("sex")?).map_err(|e| malformed(line, e))?,
            transcript_task1: field("task1")?.to_string(),
            transcript_task2: field("task2")?.to_string(),
            label: Label::from_str(field("label")?).map_err(|e| malformed(line, e))?,
            split,
            rationale: opt("rationale").map(str::to_string),
        });
    }
    Ok(out)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    match format {
        CorpusFormat::Jsonl => {
            let mut buf = Vec::new();
            for s in corpus.subjects() {
                serde_json::to_writer(&mut buf, &Row::from(s)).expect("row serializes");
                buf.push(b'\n');
            }
            fs::write(path, buf).map_err(io_err)?;
        }
        CorpusFormat::Csv => {
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record([
                "subject_id",
                "age",
                "sex",
                "task1",
                "task2",
                "label",
                "split",
                "rationale",
            ])?;
            for s in corpus.subjects() {
                let sex = match s.sex {
                    Sex::F => "F",
                    Sex::M => "M",
                };
                let split = if s.split == Split::Unassigned {
                    ""
                } else {
                    s.split.token()
                };
                writer.write_record([
                    s.subject_id.as_str(),
                    &s.age.to_string(),
                    sex,
                    &s.transcript_task1,
                    &s.transcript_task2,
                    s.label.token(),
                    split,
                    s.rationale.as_deref().unwrap_or(""),
                ])?;
            }
            let bytes = writer.into_inner().map_err(|e| io_err(e.into_error()))?;
            let mut file = fs::File::create(path).map_err(io_err)?;
            file.write_all(&bytes).map_err(io_err)?;
        }
    }
    Ok(())
}
