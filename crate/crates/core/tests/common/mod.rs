//! Shared fixtures: a 10-table corpus and a keyed mock teacher that yields 20
//! pairs of which 17 verify "Yes", 2 "No", and 1 with an unparseable answer.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use tabdistill::corpus::{parse_record, DatasetRecord};
use tabdistill::llm::{messages_hash, MockScript, ScriptMode, ScriptedResponse};
use tabdistill::pipeline::PipelineConfig;
use tabdistill::prompt::{build_cot_prompt_with_pairs, build_verification_prompt, Demonstration};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn demo_path() -> PathBuf {
    manifest_dir().join("assets/demonstration.json")
}

pub fn demo() -> Demonstration {
    Demonstration::load(&demo_path()).expect("demonstration asset loads")
}

pub fn committed_e2e_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/e2e")
}

struct FixtureTable {
    caption: &'static str,
    header: [&'static str; 3],
    rows: [[&'static str; 3]; 3],
    gold: &'static str,
}

const FIXTURE_TABLES: [FixtureTable; 10] = [
    FixtureTable {
        caption: "Table 1: BLEU scores on the WMT14 test set.",
        header: ["Model", "En-De", "En-Fr"],
        rows: [
            ["Baseline", "25.1", "37.2"],
            ["Transformer", "27.3", "38.9"],
            ["Ours", "28.4", "40.1"],
        ],
        gold: "Our model obtains the best BLEU on both language pairs.",
    },
    FixtureTable {
        caption: "Table 2: Accuracy on the SNLI dev set.",
        header: ["Encoder", "Params", "Acc"],
        rows: [
            ["LSTM", "3M", "84.6"],
            ["BiLSTM", "6M", "86.1"],
            ["ESIM", "4M", "88.0"],
        ],
        gold: "ESIM reaches 88.0 accuracy with fewer parameters than BiLSTM.",
    },
    FixtureTable {
        caption: "Table 3: F1 of entity recognizers.",
        header: ["System", "CoNLL", "OntoNotes"],
        rows: [
            ["CRF", "84.2", "79.1"],
            ["BiLSTM-CRF", "90.9", "86.3"],
            ["BERT", "92.4", "89.2"],
        ],
        gold: "BERT is the strongest recognizer on both datasets.",
    },
    FixtureTable {
        caption: "Table 4: Ablation of the attention module.",
        header: ["Variant", "ROUGE-1", "ROUGE-L"],
        rows: [
            ["Full", "41.2", "38.0"],
            ["- attention", "38.5", "35.1"],
            ["- copy", "39.9", "36.7"],
        ],
        gold: "Removing attention causes the largest drop in ROUGE.",
    },
    FixtureTable {
        caption: "Table 5: Perplexity of language models.",
        header: ["Model", "PTB", "WikiText-2"],
        rows: [
            ["KN-5", "141.2", "-"],
            ["AWD-LSTM", "57.3", "65.8"],
            ["Ours", "55.9", "63.1"],
        ],
        gold: "Our model lowers perplexity on both benchmarks.",
    },
    FixtureTable {
        caption: "Table 6: Retrieval results (MRR).",
        header: ["Method", "MSMARCO", "TREC"],
        rows: [
            ["BM25", "18.7", "50.6"],
            ["DPR", "31.1", "62.2"],
            ["ColBERT", "36.0", "66.8"],
        ],
        gold: "ColBERT outperforms both BM25 and DPR.",
    },
    FixtureTable {
        caption: "Table 7: Exact match on SQuAD.",
        header: ["Model", "EM", "F1"],
        rows: [
            ["BiDAF", "67.7", "77.3"],
            ["R-Net", "71.3", "79.7"],
            ["QANet", "73.6", "82.7"],
        ],
        gold: "QANet achieves the highest EM and F1.",
    },
    FixtureTable {
        caption: "Table 8: Training time per epoch (minutes).",
        header: ["Model", "GPU", "CPU"],
        rows: [
            ["Small", "3", "41"],
            ["Base", "9", "133"],
            ["Large", "27", "402"],
        ],
        gold: "Training time grows with model size on both devices.",
    },
    FixtureTable {
        caption: "Table 9: Human evaluation of fluency and adequacy.",
        header: ["System", "Fluency", "Adequacy"],
        rows: [
            ["Template", "3.1", "3.9"],
            ["Seq2Seq", "3.8", "3.2"],
            ["Ours", "4.2", "3.8"],
        ],
        gold: "Our system is rated the most fluent.",
    },
    FixtureTable {
        caption: "Table 10: Macro F1 for sentiment classification.",
        header: ["Model", "SST-2", "IMDB"],
        rows: [
            ["NB-SVM", "81.2", "88.3"],
            ["CNN", "86.8", "89.1"],
            ["RoBERTa", "94.8", "95.3"],
        ],
        gold: "RoBERTa gives the best macro F1 on SST-2 and IMDB.",
    },
];

pub fn fixture_records() -> Vec<DatasetRecord> {
    FIXTURE_TABLES
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rows = vec![s.header.to_vec()];
            rows.extend(s.rows.iter().map(|r| r.to_vec()));
            let line = serde_json::json!({
                "table_id": format!("t{:02}", i + 1),
                "caption": s.caption,
                "rows": rows,
                "header_rows": 1,
                "description": s.gold,
                "split": "train",
                "setting": "medium",
            });
            parse_record(&line.to_string()).expect("fixture record parses")
        })
        .collect()
}

/// Pairs whose verification answer is not "Yes".
pub const REFUTED: [(&str, u8); 2] = [("t03", 2), ("t07", 1)];
pub const UNVERIFIABLE: [(&str, u8); 1] = [("t09", 2)];

pub fn pair_text(rec: &DatasetRecord, k: u8) -> (String, String) {
    let rows = &rec.table.rows;
    let (top, bottom) = (&rows[1], &rows[3]);
    if k == 1 {
        (
            format!(
                "In column {} the value for {} is {} and for {} is {}.",
                rows[0][1], top[0], top[1], bottom[0], bottom[1]
            ),
            format!(
                "{} scores {} on {}, compared with {} for {}.",
                bottom[0], bottom[1], rows[0][1], top[1], top[0]
            ),
        )
    } else {
        (
            format!(
                "Column {} lists {}, {} and {} from top to bottom.",
                rows[0][2], rows[1][2], rows[2][2], rows[3][2]
            ),
            format!(
                "On {}, {} reports {} while {} reports {}.",
                rows[0][2], rows[2][0], rows[2][2], bottom[0], bottom[2]
            ),
        )
    }
}

pub fn teacher_reply(rec: &DatasetRecord) -> String {
    let (r1, d1) = pair_text(rec, 1);
    let (r2, d2) = pair_text(rec, 2);
    format!("Reasoning 1: {r1}\nDescription 1: {d1}\nReasoning 2: {r2}\nDescription 2: {d2}")
}

pub fn verification_answer(table_id: &str, k: u8) -> &'static str {
    if REFUTED.contains(&(table_id, k)) {
        "No, the values do not match."
    } else if UNVERIFIABLE.contains(&(table_id, k)) {
        "I cannot tell from the table."
    } else {
        "Yes."
    }
}

/// Keyed script: one entry per generation prompt and per verification prompt.
pub fn mock_script(
    records: &[DatasetRecord],
    demo: &Demonstration,
    config: &PipelineConfig,
) -> MockScript {
    let mut keyed = BTreeMap::new();
    for rec in records {
        let gen = build_cot_prompt_with_pairs(
            demo,
            &rec.table,
            config.pairs_per_table,
            config.context_limit,
        )
        .unwrap();
        keyed.insert(
            messages_hash(&gen.messages),
            ScriptedResponse::Reply(teacher_reply(rec)),
        );
        for k in 1..=2u8 {
            let (_, description) = pair_text(rec, k);
            let ver =
                build_verification_prompt(&rec.table, &description, config.context_limit).unwrap();
            let answer = verification_answer(rec.table_id(), k);
            keyed.insert(
                messages_hash(&ver.messages),
                ScriptedResponse::Reply(answer.to_string()),
            );
        }
    }
    MockScript {
        mode: ScriptMode::Keyed,
        responses: Vec::new(),
        keyed,
    }
}

pub const RUN_TOML: &str = "corpus = \"corpus.jsonl\"\n\
demo = \"demonstration.json\"\n\
output_dir = \"out\"\n\
splits = [\"train\"]\n\
workers = 4\n\
checkpoint_every = 3\n\
emit_mode = \"cot_input\"\n\
mock_script = \"script.json\"\n\
\n\
[backend]\n\
max_requests_per_minute = 600\n\
\n\
[generation]\n\
model_name = \"teacher\"\n";

pub struct E2eFiles {
    pub corpus: PathBuf,
    pub demo: PathBuf,
    pub script: PathBuf,
    pub config: PathBuf,
}

pub fn corpus_text(records: &[DatasetRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

pub fn script_text(script: &MockScript) -> String {
    serde_json::to_string_pretty(script).unwrap() + "\n"
}

/// Writes corpus, demonstration, script and config into `dir`.
pub fn write_e2e(dir: &Path) -> E2eFiles {
    fs::create_dir_all(dir).unwrap();
    let records = fixture_records();
    let demo = demo();
    let config = PipelineConfig {
        model_name: "teacher".into(),
        ..PipelineConfig::default()
    };
    let files = E2eFiles {
        corpus: dir.join("corpus.jsonl"),
        demo: dir.join("demonstration.json"),
        script: dir.join("script.json"),
        config: dir.join("run.toml"),
    };
    fs::write(&files.corpus, corpus_text(&records)).unwrap();
    fs::copy(demo_path(), &files.demo).unwrap();
    fs::write(
        &files.script,
        script_text(&mock_script(&records, &demo, &config)),
    )
    .unwrap();
    fs::write(&files.config, RUN_TOML).unwrap();
    files
}

/// Runs the CLI in-process, returning (exit code, stdout, stderr).
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("tabdistill").chain(args.iter().copied());
    let code = tabdistill::cli::dispatch(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

/// Every file under `dir`, relative path to bytes.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(dir)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub const GOLDEN_NAMES: [&str; 3] = [
    "prompt_cot.txt",
    "prompt_direct.txt",
    "prompt_verification.txt",
];

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

/// The three prompt variants for fixture table t01, rendered.
pub fn golden_prompts() -> Vec<(&'static str, tabdistill::prompt::GenerationPrompt)> {
    use tabdistill::prompt::{build_cot_prompt, build_direct_prompt, DEFAULT_CONTEXT_LIMIT};
    let records = fixture_records();
    let rec = &records[0];
    let demo = demo();
    vec![
        (
            GOLDEN_NAMES[0],
            build_cot_prompt(&demo, &rec.table, DEFAULT_CONTEXT_LIMIT).unwrap(),
        ),
        (
            GOLDEN_NAMES[1],
            build_direct_prompt(&demo, &rec.table, DEFAULT_CONTEXT_LIMIT).unwrap(),
        ),
        (
            GOLDEN_NAMES[2],
            build_verification_prompt(&rec.table, &rec.gold_description, DEFAULT_CONTEXT_LIMIT)
                .unwrap(),
        ),
    ]
}

/// Compares rendered prompts with the frozen goldens, rewriting them instead
/// when `UPDATE_GOLDEN=1`. Returns the names that differ.
pub fn check_goldens() -> Vec<String> {
    let update = std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1");
    let mut mismatched = Vec::new();
    for (name, prompt) in golden_prompts() {
        let path = golden_dir().join(name);
        let rendered = prompt.render();
        if update {
            fs::create_dir_all(golden_dir()).unwrap();
            fs::write(&path, &rendered).unwrap();
        } else if fs::read_to_string(&path).ok().as_deref() != Some(rendered.as_str()) {
            mismatched.push(name.to_string());
        }
    }
    mismatched
}
