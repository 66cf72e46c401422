//! Special-token serialization of tables and the `T <CoT> R` input form.
//!
//! Format contract (caption first, single spaces around every marker):
//!
//! ```text
//! <CAP> caption <R> <C> cell <C> cell <R> <C> cell ... [<CoT> reasoning]
//! ```
//!
//! Cell and caption whitespace is collapsed to single spaces before
//! serialization. Text that already contains one of the four markers verbatim is
//! escaped by inserting U+200B after the opening `<`, and the occurrence is
//! reported on the output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ScientificTable;

pub const ROW_TOKEN: &str = "<R>";
pub const CELL_TOKEN: &str = "<C>";
pub const CAPTION_TOKEN: &str = "<CAP>";
pub const COT_TOKEN: &str = "<CoT>";

/// The four structure markers, in row/cell/caption/reasoning order.
pub const SPECIAL_TOKENS: [&str; 4] = [ROW_TOKEN, CELL_TOKEN, CAPTION_TOKEN, COT_TOKEN];

const ESCAPE_MARK: char = '\u{200B}';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    TableOnly,
    TableWithCot,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TextLocation {
    Caption,
    Cell { row: usize, col: usize },
    Reasoning,
}

/// A marker found verbatim inside table or reasoning text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCollision {
    pub location: TextLocation,
    pub token: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedInput {
    pub text: String,
    pub kind: InputKind,
    pub source_table_id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub collisions: Vec<TokenCollision>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CollisionPolicy {
    #[default]
    Escape,
    Reject,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LinearizeError {
    #[error("special token {token} appears verbatim in {location:?}")]
    SpecialTokenCollision {
        location: TextLocation,
        token: String,
    },
    #[error("reasoning is empty")]
    EmptyReasoning,
    #[error("expected a table-only input, got {0:?}")]
    WrongKind(InputKind),
    #[error("malformed linearized input at token {position}: {reason}")]
    MalformedInput { position: usize, reason: String },
}

fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn first_collision(text: &str) -> Option<&'static str> {
    SPECIAL_TOKENS.iter().copied().find(|t| text.contains(t))
}

/// Neutralizes any special token in free text so it cannot be mistaken for a marker.
pub fn escape(text: &str) -> String {
    let mut out = text.to_string();
    for token in SPECIAL_TOKENS {
        let escaped = format!("<{ESCAPE_MARK}{}", &token[1..]);
        out = out.replace(token, &escaped);
    }
    out
}

fn unescape(text: &str) -> String {
    let mut out = text.to_string();
    for token in SPECIAL_TOKENS {
        let escaped = format!("<{ESCAPE_MARK}{}", &token[1..]);
        out = out.replace(&escaped, token);
    }
    out
}

fn guard(
    text: String,
    location: TextLocation,
    policy: CollisionPolicy,
    collisions: &mut Vec<TokenCollision>,
) -> Result<String, LinearizeError> {
    let Some(token) = first_collision(&text) else {
        return Ok(text);
    };
    if policy == CollisionPolicy::Reject {
        return Err(LinearizeError::SpecialTokenCollision {
            location,
            token: token.to_string(),
        });
    }
    for t in SPECIAL_TOKENS.iter().filter(|t| text.contains(**t)) {
        log::warn!("escaping special token {t} found in {location:?}");
        collisions.push(TokenCollision {
            location: location.clone(),
            token: t.to_string(),
        });
    }
    Ok(escape(&text))
}

/// Serializes a table, escaping any verbatim markers.
pub fn linearize_table(table: &ScientificTable) -> Result<LinearizedInput, LinearizeError> {
    linearize_table_with(table, CollisionPolicy::Escape)
}

pub fn linearize_table_with(
    table: &ScientificTable,
    policy: CollisionPolicy,
) -> Result<LinearizedInput, LinearizeError> {
    let mut collisions = Vec::new();
    let mut pieces: Vec<String> = vec![CAPTION_TOKEN.to_string()];
    let caption = guard(
        normalize_whitespace(&table.caption),
        TextLocation::Caption,
        policy,
        &mut collisions,
    )?;
    if !caption.is_empty() {
        pieces.push(caption);
    }
    for (r, row) in table.rows.iter().enumerate() {
        pieces.push(ROW_TOKEN.to_string());
        for (c, cell) in row.iter().enumerate() {
            pieces.push(CELL_TOKEN.to_string());
            let cell = guard(
                normalize_whitespace(cell),
                TextLocation::Cell { row: r, col: c },
                policy,
                &mut collisions,
            )?;
            if !cell.is_empty() {
                pieces.push(cell);
            }
        }
    }
    Ok(LinearizedInput {
        text: pieces.join(" "),
        kind: InputKind::TableOnly,
        source_table_id: table.table_id.clone(),
        collisions,
    })
}

/// Appends ` <CoT> reasoning` to a table-only input. The prefix is left untouched.
pub fn attach_reasoning(
    table_input: &LinearizedInput,
    reasoning: &str,
) -> Result<LinearizedInput, LinearizeError> {
    if table_input.kind != InputKind::TableOnly {
        return Err(LinearizeError::WrongKind(table_input.kind));
    }
    if reasoning.trim().is_empty() {
        return Err(LinearizeError::EmptyReasoning);
    }
    let mut collisions = table_input.collisions.clone();
    let reasoning = guard(
        reasoning.to_string(),
        TextLocation::Reasoning,
        CollisionPolicy::Escape,
        &mut collisions,
    )?;
    Ok(LinearizedInput {
        text: format!("{} {COT_TOKEN} {reasoning}", table_input.text),
        kind: InputKind::TableWithCot,
        source_table_id: table_input.source_table_id.clone(),
        collisions,
    })
}

/// The structure recovered from a linearized string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delinearized {
    pub caption: String,
    pub rows: Vec<Vec<String>>,
    pub reasoning: Option<String>,
}

impl Delinearized {
    pub fn into_table(self, table_id: impl Into<String>) -> ScientificTable {
        ScientificTable {
            table_id: table_id.into(),
            caption: self.caption,
            rows: self.rows,
            column_header_row_count: 0,
        }
    }
}

/// Byte offset of the first whitespace-delimited `<CoT>` marker.
fn find_cot_marker(text: &str) -> Option<usize> {
    text.match_indices(COT_TOKEN).map(|(i, _)| i).find(|&i| {
        let before_ok = text[..i]
            .chars()
            .next_back()
            .is_none_or(char::is_whitespace);
        let after_ok = text[i + COT_TOKEN.len()..]
            .chars()
            .next()
            .is_none_or(char::is_whitespace);
        before_ok && after_ok
    })
}

/// Parses output of [`linearize_table`] / [`attach_reasoning`] back into a grid.
pub fn delinearize(text: &str) -> Result<Delinearized, LinearizeError> {
    let (table_part, reasoning) = match find_cot_marker(text) {
        Some(pos) => {
            let rest = &text[pos + COT_TOKEN.len()..];
            let rest = rest.strip_prefix(' ').unwrap_or(rest);
            if rest.trim().is_empty() {
                return Err(LinearizeError::MalformedInput {
                    position: text[..pos].split_whitespace().count(),
                    reason: "empty reasoning after <CoT>".into(),
                });
            }
            (&text[..pos], Some(unescape(rest)))
        }
        None => (text, None),
    };

    let malformed = |position: usize, reason: &str| LinearizeError::MalformedInput {
        position,
        reason: reason.to_string(),
    };

    #[derive(PartialEq)]
    enum At {
        Start,
        Caption,
        RowStart,
        Cell,
    }

    let mut state = At::Start;
    let mut caption: Vec<&str> = Vec::new();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut words: Vec<&str> = Vec::new();

    let flush = |rows: &mut Vec<Vec<String>>, words: &mut Vec<&str>| {
        if let Some(row) = rows.last_mut() {
            row.push(unescape(&words.join(" ")));
        }
        words.clear();
    };

    for (i, tok) in table_part.split_whitespace().enumerate() {
        match (tok, &state) {
            (CAPTION_TOKEN, At::Start) => state = At::Caption,
            (_, At::Start) => return Err(malformed(i, "input must start with <CAP>")),
            (CAPTION_TOKEN, _) => return Err(malformed(i, "repeated <CAP>")),
            (COT_TOKEN, _) => return Err(malformed(i, "unexpected <CoT>")),
            (ROW_TOKEN, At::RowStart) => return Err(malformed(i, "row without cells")),
            (ROW_TOKEN, At::Cell) => {
                flush(&mut rows, &mut words);
                rows.push(Vec::new());
                state = At::RowStart;
            }
            (ROW_TOKEN, At::Caption) => {
                rows.push(Vec::new());
                state = At::RowStart;
            }
            (CELL_TOKEN, At::Caption) => return Err(malformed(i, "<C> before any <R>")),
            (CELL_TOKEN, At::RowStart) => state = At::Cell,
            (CELL_TOKEN, At::Cell) => flush(&mut rows, &mut words),
            (word, At::Caption) => caption.push(word),
            (_, At::RowStart) => return Err(malformed(i, "text between <R> and <C>")),
            (word, At::Cell) => words.push(word),
        }
    }
    match state {
        At::Start => return Err(malformed(0, "empty input")),
        At::Caption => return Err(malformed(0, "table has no rows")),
        At::RowStart => return Err(malformed(0, "row without cells")),
        At::Cell => flush(&mut rows, &mut words),
    }
    Ok(Delinearized {
        caption: unescape(&caption.join(" ")),
        rows,
        reasoning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(caption: &str, rows: &[&[&str]]) -> ScientificTable {
        ScientificTable::new(
            "t",
            caption,
            rows.iter()
                .map(|r| r.iter().map(|c| c.to_string()).collect())
                .collect(),
            0,
        )
        .unwrap()
    }

    #[test]
    fn tokens_are_distinct_and_not_nested() {
        for (i, a) in SPECIAL_TOKENS.iter().enumerate() {
            for (j, b) in SPECIAL_TOKENS.iter().enumerate() {
                if i != j {
                    assert!(!a.contains(b), "{a} contains {b}");
                }
            }
        }
    }

    #[test]
    fn one_by_one() {
        let out = linearize_table(&table("c", &[&["v"]])).unwrap();
        assert_eq!(out.text, "<CAP> c <R> <C> v");
        assert_eq!(out.kind, InputKind::TableOnly);
        assert_eq!(out.source_table_id, "t");
    }

    #[test]
    fn two_by_two() {
        let out = linearize_table(&table("t", &[&["a", "b"], &["c", "d"]])).unwrap();
        assert_eq!(out.text, "<CAP> t <R> <C> a <C> b <R> <C> c <C> d");
    }

    #[test]
    fn cell_whitespace_is_collapsed() {
        let out = linearize_table(&table("a\tcap", &[&["x\n y", ""]])).unwrap();
        assert_eq!(out.text, "<CAP> a cap <R> <C> x y <C>");
    }

    #[test]
    fn attach_appends_cot_segment() {
        let base = linearize_table(&table("c", &[&["v"]])).unwrap();
        let out = attach_reasoning(&base, "row one shows v").unwrap();
        assert_eq!(out.text, "<CAP> c <R> <C> v <CoT> row one shows v");
        assert_eq!(out.kind, InputKind::TableWithCot);
        assert_eq!(
            attach_reasoning(&base, ""),
            Err(LinearizeError::EmptyReasoning)
        );
        assert_eq!(
            attach_reasoning(&base, " \n"),
            Err(LinearizeError::EmptyReasoning)
        );
        assert_eq!(
            attach_reasoning(&out, "again"),
            Err(LinearizeError::WrongKind(InputKind::TableWithCot))
        );
    }

    #[test]
    fn delinearize_inverse_example() {
        let d = delinearize("<CAP> t <R> <C> a <C> b").unwrap();
        assert_eq!(d.caption, "t");
        assert_eq!(d.rows, vec![vec!["a".to_string(), "b".to_string()]]);
        assert_eq!(d.reasoning, None);
    }

    #[test]
    fn delinearize_rejects_grammar_violations() {
        for bad in [
            "<C> a <CAP> t",
            "<CAP> t <C> a",
            "<CAP> t",
            "<CAP> t <R>",
            "<CAP> t <R> x <C> a",
            "<CAP> t <R> <C> a <CAP> u",
            "<CAP> t <R> <C> a <CoT>",
            "",
        ] {
            assert!(
                matches!(delinearize(bad), Err(LinearizeError::MalformedInput { .. })),
                "{bad:?} should be malformed"
            );
        }
    }

    #[test]
    fn reasoning_is_recovered_verbatim() {
        let base = linearize_table(&table("c", &[&["v"]])).unwrap();
        let r = "first line\n  second  line";
        let d = delinearize(&attach_reasoning(&base, r).unwrap().text).unwrap();
        assert_eq!(d.reasoning.as_deref(), Some(r));
    }

    #[test]
    fn collisions_are_escaped_and_reported() {
        let t = table("see <R> here", &[&["a<C>b", "<CoT>"]]);
        let out = linearize_table(&t).unwrap();
        assert_eq!(out.collisions.len(), 3);
        assert_eq!(out.collisions[0].location, TextLocation::Caption);
        assert_eq!(out.text.matches(ROW_TOKEN).count(), 1);
        assert_eq!(out.text.matches(CELL_TOKEN).count(), 2);
        assert!(!out.text.contains(COT_TOKEN));

        let back = delinearize(&out.text).unwrap();
        assert_eq!(back.caption, "see <R> here");
        assert_eq!(
            back.rows,
            vec![vec!["a<C>b".to_string(), "<CoT>".to_string()]]
        );

        let with = attach_reasoning(&out, "r mentions <CoT> too").unwrap();
        assert_eq!(with.text.matches(COT_TOKEN).count(), 1);
        assert_eq!(
            delinearize(&with.text).unwrap().reasoning.as_deref(),
            Some("r mentions <CoT> too")
        );
    }

    #[test]
    fn reject_policy_errors_on_collision() {
        let t = table("c", &[&["x <CAP> y"]]);
        assert_eq!(
            linearize_table_with(&t, CollisionPolicy::Reject),
            Err(LinearizeError::SpecialTokenCollision {
                location: TextLocation::Cell { row: 0, col: 0 },
                token: CAPTION_TOKEN.into()
            })
        );
    }
}
