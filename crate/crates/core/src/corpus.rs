//! Table-to-text corpora: record parsing, loading, and summary statistics.
//!
//! Records are stored one JSON object per line:
//!
//! ```json
//! {"table_id": "t1", "caption": "Results", "rows": [["a", "b"]], "header_rows": 1,
//!  "description": "A beats B.", "split": "train", "setting": "medium"}
//! ```
//!
//! `header_rows` is optional and defaults to zero. Rows may be ragged.

pub mod scigen;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// A caption plus a grid of cell strings, before serialization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScientificTable {
    pub table_id: String,
    pub caption: String,
    pub rows: Vec<Vec<String>>,
    #[serde(default, rename = "header_rows")]
    pub column_header_row_count: usize,
}

impl ScientificTable {
    /// Builds a table and checks its structural invariants.
    pub fn new(
        table_id: impl Into<String>,
        caption: impl Into<String>,
        rows: Vec<Vec<String>>,
        column_header_row_count: usize,
    ) -> Result<Self, RecordError> {
        let table = Self {
            table_id: table_id.into(),
            caption: caption.into(),
            rows,
            column_header_row_count,
        };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.rows.is_empty() {
            return Err(RecordError::EmptyTable { row: None });
        }
        if let Some(idx) = self.rows.iter().position(|r| r.is_empty()) {
            return Err(RecordError::EmptyTable { row: Some(idx) });
        }
        if self.column_header_row_count > self.rows.len() {
            return Err(RecordError::InvalidField {
                field: "header_rows",
                reason: format!(
                    "{} header rows but only {} rows",
                    self.column_header_row_count,
                    self.rows.len()
                ),
            });
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(RecordError::InvalidSplit(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "few-shot")]
    FewShot,
    #[serde(rename = "medium")]
    Medium,
    #[serde(rename = "large")]
    Large,
}

impl Setting {
    pub fn as_str(self) -> &'static str {
        match self {
            Setting::FewShot => "few-shot",
            Setting::Medium => "medium",
            Setting::Large => "large",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Setting {
    type Err = RecordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "few-shot" | "few_shot" | "fewshot" => Ok(Setting::FewShot),
            "medium" => Ok(Setting::Medium),
            "large" => Ok(Setting::Large),
            other => Err(RecordError::InvalidSetting(other.to_string())),
        }
    }
}

/// One table with its gold description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub table: ScientificTable,
    pub gold_description: String,
    pub split: Split,
    pub setting: Setting,
}

impl DatasetRecord {
    pub fn table_id(&self) -> &str {
        &self.table.table_id
    }

    pub fn description_words(&self) -> usize {
        word_count(&self.gold_description)
    }

    /// Serializes back into the single-line record format.
    pub fn to_json_line(&self) -> String {
        let wire = WireRecord {
            table_id: &self.table.table_id,
            caption: &self.table.caption,
            rows: &self.table.rows,
            header_rows: self.table.column_header_row_count,
            description: &self.gold_description,
            split: self.split,
            setting: self.setting,
        };
        serde_json::to_string(&wire).expect("record serialization is infallible")
    }
}

#[derive(Serialize)]
struct WireRecord<'a> {
    table_id: &'a str,
    caption: &'a str,
    rows: &'a [Vec<String>],
    header_rows: usize,
    description: &'a str,
    split: Split,
    setting: Setting,
}

/// Whitespace-delimited word count (Unicode whitespace).
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RecordError {
    #[error("record is not valid JSON: {0}")]
    Json(String),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("table has no rows")]
    EmptyTable { row: Option<usize> },
    #[error("unknown split label `{0}`")]
    InvalidSplit(String),
    #[error("unknown setting label `{0}`")]
    InvalidSetting(String),
    #[error("gold description is empty")]
    EmptyDescription,
    #[error("duplicate table_id `{0}`")]
    DuplicateTableId(String),
}

/// A record error tagged with its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub error: RecordError,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.error)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {}: {source}", path.display())]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{} malformed line(s) in {}; first: {}", errors.len(), path.display(), errors[0])]
    ParseFailure {
        path: PathBuf,
        errors: Vec<LineError>,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error(transparent)]
    Record(#[from] RecordError),
}

fn required<'a>(
    obj: &'a Map<String, Value>,
    field: &'static str,
) -> Result<&'a Value, RecordError> {
    match obj.get(field) {
        Some(Value::Null) | None => Err(RecordError::MissingField(field)),
        Some(v) => Ok(v),
    }
}

fn required_str<'a>(
    obj: &'a Map<String, Value>,
    field: &'static str,
) -> Result<&'a str, RecordError> {
    required(obj, field)?
        .as_str()
        .ok_or_else(|| RecordError::InvalidField {
            field,
            reason: "expected a string".into(),
        })
}

fn parse_rows(value: &Value) -> Result<Vec<Vec<String>>, RecordError> {
    let invalid = |reason: &str| RecordError::InvalidField {
        field: "rows",
        reason: reason.to_string(),
    };
    let rows = value
        .as_array()
        .ok_or_else(|| invalid("expected a list of rows"))?;
    rows.iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| invalid("expected each row to be a list of cells"))?
                .iter()
                .map(|cell| match cell {
                    Value::String(s) => Ok(s.trim().to_string()),
                    _ => Err(invalid("expected every cell to be a string")),
                })
                .collect()
        })
        .collect()
}

/// Parses and validates one record line.
pub fn parse_record(raw: &str) -> Result<DatasetRecord, RecordError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| RecordError::Json(e.to_string()))?;
    let obj = value.as_object().ok_or(RecordError::NotAnObject)?;

    let table_id = required_str(obj, "table_id")?;
    let caption = required_str(obj, "caption")?;
    let rows = parse_rows(required(obj, "rows")?)?;
    let description = required_str(obj, "description")?;
    let split: Split = required_str(obj, "split")?.parse()?;
    let setting: Setting = required_str(obj, "setting")?.parse()?;
    let header_rows = match obj.get("header_rows") {
        None | Some(Value::Null) => 0,
        Some(v) => v.as_u64().ok_or_else(|| RecordError::InvalidField {
            field: "header_rows",
            reason: "expected a non-negative integer".into(),
        })? as usize,
    };

    if word_count(description) == 0 {
        return Err(RecordError::EmptyDescription);
    }
    let table = ScientificTable::new(table_id.trim(), caption.trim(), rows, header_rows)?;
    Ok(DatasetRecord {
        table,
        gold_description: description.trim().to_string(),
        split,
        setting,
    })
}

/// Parses every non-blank line, collecting per-line failures instead of stopping.
pub fn parse_lines<R: BufRead>(reader: R) -> std::io::Result<(Vec<DatasetRecord>, Vec<LineError>)> {
    let (numbered, errors) = parse_numbered(reader)?;
    Ok((numbered.into_iter().map(|(_, r)| r).collect(), errors))
}

/// Records tagged with their 1-based line numbers, plus per-line failures.
type NumberedParse = (Vec<(usize, DatasetRecord)>, Vec<LineError>);

fn parse_numbered<R: BufRead>(reader: R) -> std::io::Result<NumberedParse> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(&line) {
            Ok(rec) => records.push((idx + 1, rec)),
            Err(error) => errors.push(LineError {
                line: idx + 1,
                error,
            }),
        }
    }
    Ok((records, errors))
}

/// A validated collection of records with unique table ids.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    records: Vec<DatasetRecord>,
    counts: BTreeMap<Split, usize>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(records: Vec<DatasetRecord>) -> Result<Self, RecordError> {
        let mut index = HashMap::with_capacity(records.len());
        let mut counts = BTreeMap::new();
        for (i, rec) in records.iter().enumerate() {
            if index.insert(rec.table.table_id.clone(), i).is_some() {
                return Err(RecordError::DuplicateTableId(rec.table.table_id.clone()));
            }
            *counts.entry(rec.split).or_insert(0) += 1;
        }
        Ok(Self {
            records,
            counts,
            index,
        })
    }

    pub fn records(&self) -> &[DatasetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn count(&self, split: Split) -> usize {
        self.counts.get(&split).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<Split, usize> {
        &self.counts
    }

    pub fn get(&self, table_id: &str) -> Option<&DatasetRecord> {
        self.index.get(table_id).map(|&i| &self.records[i])
    }

    /// Position of a table in load order.
    pub fn position(&self, table_id: &str) -> Option<usize> {
        self.index.get(table_id).copied()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &DatasetRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }
}

/// Loads a record-per-line corpus. When `setting` is given, records labelled
/// with a different setting are skipped.
pub fn load_corpus(path: &Path, setting: Option<Setting>) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    })?;
    let (numbered, mut errors) =
        parse_numbered(BufReader::new(file)).map_err(|source| CorpusError::IoFailure {
            path: path.to_path_buf(),
            source,
        })?;
    let mut seen = HashMap::new();
    let mut records = Vec::with_capacity(numbered.len());
    for (line, rec) in numbered {
        if setting.is_some_and(|s| rec.setting != s) {
            continue;
        }
        if seen.insert(rec.table.table_id.clone(), line).is_some() {
            errors.push(LineError {
                line,
                error: RecordError::DuplicateTableId(rec.table.table_id.clone()),
            });
            continue;
        }
        records.push(rec);
    }
    errors.sort_by_key(|e| e.line);
    if !errors.is_empty() {
        return Err(CorpusError::ParseFailure {
            path: path.to_path_buf(),
            errors,
        });
    }
    Ok(Corpus::new(records)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SplitStats {
    pub records: usize,
    pub mean_description_words: f64,
    pub mean_cell_count: f64,
}

impl SplitStats {
    fn from_records<'a>(records: impl Iterator<Item = &'a DatasetRecord>) -> Self {
        let (mut n, mut words, mut cells) = (0usize, 0usize, 0usize);
        for rec in records {
            n += 1;
            words += rec.description_words();
            cells += rec.table.cell_count();
        }
        let mean = |total: usize| if n == 0 { 0.0 } else { total as f64 / n as f64 };
        Self {
            records: n,
            mean_description_words: mean(words),
            mean_cell_count: mean(cells),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusStats {
    pub per_split: BTreeMap<Split, SplitStats>,
    pub overall: SplitStats,
}

pub fn corpus_stats(corpus: &Corpus) -> Result<CorpusStats, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let per_split = Split::ALL
        .iter()
        .map(|&s| (s, SplitStats::from_records(corpus.split(s))))
        .collect();
    Ok(CorpusStats {
        per_split,
        overall: SplitStats::from_records(corpus.records().iter()),
    })
}

/// Fixed-width stats table; means are printed to one decimal.
pub fn render_stats(stats: &CorpusStats) -> String {
    let mut out = format!(
        "{:<12}{:>10}{:>12}{:>12}\n",
        "split", "records", "mean_words", "mean_cells"
    );
    let mut line = |name: &str, s: &SplitStats| {
        out.push_str(&format!(
            "{:<12}{:>10}{:>12.1}{:>12.1}\n",
            name, s.records, s.mean_description_words, s.mean_cell_count
        ));
    };
    for (split, s) in &stats.per_split {
        line(split.as_str(), s);
    }
    line("overall", &stats.overall);
    out
}
