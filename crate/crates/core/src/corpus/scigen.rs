//! Adapter from the SciGen release layout to the record-per-line format.
//!
//! The release stores each split as a JSON object keyed by example id:
//!
//! ```json
//! {"0": {"paper": "...", "paper_id": "...", "table_caption": "...",
//!        "table_column_names": ["..."], "table_content_values": [["..."]],
//!        "text": "..."}}
//! ```
//!
//! Files are found recursively under a root directory. The split comes from the
//! file name (`train`, `dev`/`valid`, `test`). A file below a directory named after
//! a different setting (`few-shot`, `medium`, `large`) is skipped, so the shared
//! test files are picked up for every setting.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{CorpusError, DatasetRecord, LineError, RecordError, ScientificTable, Setting, Split};

#[derive(Debug, Deserialize)]
struct SciGenEntry {
    #[serde(default)]
    table_caption: Option<String>,
    #[serde(default)]
    table_column_names: Vec<String>,
    #[serde(default)]
    table_content_values: Vec<Vec<String>>,
    #[serde(default)]
    text: Option<String>,
}

fn split_for(path: &Path) -> Option<Split> {
    let stem = path.file_stem()?.to_str()?.to_ascii_lowercase();
    if stem.contains("train") {
        Some(Split::Train)
    } else if stem.contains("dev") || stem.contains("valid") {
        Some(Split::Validation)
    } else if stem.contains("test") {
        Some(Split::Test)
    } else {
        None
    }
}

fn excluded_by_setting(root: &Path, path: &Path, setting: Setting) -> bool {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components().any(|c| {
        c.as_os_str()
            .to_str()
            .and_then(|s| s.parse::<Setting>().ok())
            .is_some_and(|s| s != setting)
    })
}

fn collect_json_files(dir: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_json_files(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "json") {
            out.push(path);
        }
    }
    Ok(())
}

fn key_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

fn convert(
    file_tag: &str,
    key: &str,
    entry: SciGenEntry,
    split: Split,
    setting: Setting,
) -> Result<DatasetRecord, RecordError> {
    let caption = entry
        .table_caption
        .ok_or(RecordError::MissingField("table_caption"))?;
    let text = entry.text.ok_or(RecordError::MissingField("text"))?;
    if text.split_whitespace().next().is_none() {
        return Err(RecordError::EmptyDescription);
    }
    let trim_row = |row: Vec<String>| {
        row.into_iter()
            .map(|c| c.trim().to_string())
            .collect::<Vec<_>>()
    };
    let mut rows = Vec::with_capacity(entry.table_content_values.len() + 1);
    let header_rows = usize::from(!entry.table_column_names.is_empty());
    if header_rows == 1 {
        rows.push(trim_row(entry.table_column_names));
    }
    rows.extend(entry.table_content_values.into_iter().map(trim_row));
    let table = ScientificTable::new(
        format!("{file_tag}:{key}"),
        caption.trim(),
        rows,
        header_rows,
    )?;
    Ok(DatasetRecord {
        table,
        gold_description: text.trim().to_string(),
        split,
        setting,
    })
}

/// Reads every SciGen split file under `root` that belongs to `setting`.
pub fn ingest_dir(root: &Path, setting: Setting) -> Result<Vec<DatasetRecord>, CorpusError> {
    let io_err = |path: &Path, source| CorpusError::IoFailure {
        path: path.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    collect_json_files(root, &mut files).map_err(|e| io_err(root, e))?;
    files.sort();

    let mut records = Vec::new();
    for path in files {
        let Some(split) = split_for(&path) else {
            continue;
        };
        if excluded_by_setting(root, &path, setting) {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        let entries: BTreeMap<String, serde_json::Value> =
            serde_json::from_slice(&bytes).map_err(|e| CorpusError::ParseFailure {
                path: path.clone(),
                errors: vec![LineError {
                    line: e.line(),
                    error: RecordError::Json(e.to_string()),
                }],
            })?;
        let mut keys: Vec<_> = entries.into_iter().collect();
        keys.sort_by(|a, b| key_order(&a.0, &b.0));

        let file_tag = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("scigen")
            .to_string();
        let mut errors = Vec::new();
        for (ordinal, (key, value)) in keys.into_iter().enumerate() {
            let converted = serde_json::from_value::<SciGenEntry>(value)
                .map_err(|e| RecordError::Json(e.to_string()))
                .and_then(|entry| convert(&file_tag, &key, entry, split, setting));
            match converted {
                Ok(rec) => records.push(rec),
                Err(error) => errors.push(LineError {
                    line: ordinal + 1,
                    error,
                }),
            }
        }
        if !errors.is_empty() {
            return Err(CorpusError::ParseFailure { path, errors });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(path: &Path, body: &str) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(path, body).unwrap();
    }

    const ENTRY: &str = r#"{"paper":"p","paper_id":"1","table_caption":"Table 1: x","table_column_names":["Model","F1"],"table_content_values":[["A","0.5"],["B","0.7"]],"text":"B is better than A ."}"#;

    #[test]
    fn picks_setting_and_shared_test_files() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        write(
            &root.join("train/medium/train.json"),
            &format!(r#"{{"0":{ENTRY},"1":{ENTRY}}}"#),
        );
        write(
            &root.join("train/large/train.json"),
            &format!(r#"{{"0":{ENTRY}}}"#),
        );
        write(
            &root.join("development/medium/dev.json"),
            &format!(r#"{{"0":{ENTRY}}}"#),
        );
        write(
            &root.join("test/test-CL.json"),
            &format!(r#"{{"0":{ENTRY}}}"#),
        );
        write(
            &root.join("test/test-Other.json"),
            &format!(r#"{{"0":{ENTRY}}}"#),
        );

        let recs = ingest_dir(root, Setting::Medium).unwrap();
        let count = |s| recs.iter().filter(|r| r.split == s).count();
        assert_eq!(
            (
                count(Split::Train),
                count(Split::Validation),
                count(Split::Test)
            ),
            (2, 1, 2)
        );
        let first = &recs.iter().find(|r| r.split == Split::Train).unwrap().table;
        assert_eq!(first.rows[0], vec!["Model", "F1"]);
        assert_eq!(first.column_header_row_count, 1);
        assert_eq!(first.rows.len(), 3);
        // ids stay unique across the two test files
        super::super::Corpus::new(recs).unwrap();
    }

    #[test]
    fn reports_entry_without_text() {
        let dir = tempfile::tempdir().unwrap();
        write(
            &dir.path().join("medium/train.json"),
            r#"{"0":{"table_caption":"c","table_column_names":["a"],"table_content_values":[]}}"#,
        );
        let err = ingest_dir(dir.path(), Setting::Medium).unwrap_err();
        match err {
            CorpusError::ParseFailure { errors, .. } => {
                assert_eq!(errors[0].error, RecordError::MissingField("text"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
