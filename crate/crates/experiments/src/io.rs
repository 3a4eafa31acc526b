//! Dataset loaders.
//!
//! Text is normalized before symbol mapping: lowercased, every whitespace run
//! becomes one space, and only `a-z`, space and the punctuation in
//! [`KEPT_PUNCTUATION`] survive (at most 31 symbols). Everything else is
//! dropped.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use dpvi_models::{Cell, Relation};

pub const KEPT_PUNCTUATION: [char; 4] = ['.', ',', '\'', '!'];

#[derive(Debug, Clone, PartialEq)]
pub struct TextData {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// `alphabet[s]` is the character of symbol `s`.
    pub alphabet: Vec<char>,
}

pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars().flat_map(char::to_lowercase) {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if ch.is_ascii_lowercase() || KEPT_PUNCTUATION.contains(&ch) {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(ch);
        }
    }
    out
}

/// Splits normalized text into the first `train_chars` and the following
/// `test_chars` symbols. The alphabet covers both parts, sorted.
pub fn text_sequence(raw: &str, train_chars: usize, test_chars: usize) -> Result<TextData> {
    let chars: Vec<char> = normalize_text(raw).chars().collect();
    if train_chars == 0 || chars.len() < train_chars + test_chars {
        bail!(
            "text too short: {} usable characters, need {} + {}",
            chars.len(),
            train_chars,
            test_chars
        );
    }
    let used = &chars[..train_chars + test_chars];
    let mut alphabet = used.to_vec();
    alphabet.sort_unstable();
    alphabet.dedup();
    let symbols: Vec<usize> = used
        .iter()
        .map(|c| alphabet.binary_search(c).expect("char is in the alphabet"))
        .collect();
    Ok(TextData {
        train: symbols[..train_chars].to_vec(),
        test: symbols[train_chars..].to_vec(),
        alphabet,
    })
}

pub fn load_text_sequence(path: &Path, train_chars: usize, test_chars: usize) -> Result<TextData> {
    let raw = fs::read_to_string(path).with_context(|| format!("reading text from {}", path.display()))?;
    text_sequence(&raw, train_chars, test_chars)
}

/// Writes the symbol table as a JSON array of one-character strings.
pub fn save_alphabet(path: &Path, alphabet: &[char]) -> Result<()> {
    let table: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    fs::write(path, serde_json::to_string(&table)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load_alphabet(path: &Path) -> Result<Vec<char>> {
    let table: Vec<String> = serde_json::from_str(&fs::read_to_string(path)?)?;
    table
        .iter()
        .map(|s| {
            let mut it = s.chars();
            match (it.next(), it.next()) {
                (Some(c), None) => Ok(c),
                _ => bail!("alphabet entry `{s}` is not a single character"),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointsCsv {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<usize>>,
}

/// Numeric CSV with a header row. A column named `label` holds optional
/// integer ground-truth labels; every other column is a coordinate.
pub fn load_points_csv(path: &Path) -> Result<PointsCsv> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let label_col = headers.iter().position(|h| h.trim().eq_ignore_ascii_case("label"));
    let mut points = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let mut point = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if Some(col) == label_col {
                labels.push(field.parse::<usize>().with_context(|| format!("row {}: bad label `{field}`", row + 1))?);
            } else {
                point.push(field.parse::<f64>().with_context(|| format!("row {}: bad number `{field}`", row + 1))?);
            }
        }
        if point.is_empty() {
            bail!("row {} has no coordinates", row + 1);
        }
        points.push(point);
    }
    if points.is_empty() {
        bail!("{} has no data rows", path.display());
    }
    Ok(PointsCsv {
        points,
        labels: label_col.map(|_| labels),
    })
}

/// Dense binary matrix, one row per entity of the first type, entries
/// separated by commas or whitespace. `?` or `nan` marks a missing cell.
pub fn parse_relation_matrix(text: &str) -> Result<Relation> {
    let mut cells = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        match cols {
            None => cols = Some(fields.len()),
            Some(c) if c != fields.len() => bail!("row {} has {} entries, expected {c}", rows + 1, fields.len()),
            _ => {}
        }
        for (j, f) in fields.iter().enumerate() {
            let value = match *f {
                "?" | "nan" | "NaN" => continue,
                "0" => false,
                "1" => true,
                other => match other.parse::<f64>() {
                    Ok(v) if v == 0.0 || v == 1.0 => v == 1.0,
                    _ => bail!("row {}: entry `{other}` is not binary", rows + 1),
                },
            };
            cells.push(Cell {
                index: vec![rows, j],
                value,
            });
        }
        rows += 1;
    }
    let Some(cols) = cols else {
        bail!("relation matrix is empty");
    };
    let relation = Relation {
        type_sizes: vec![rows, cols],
        positions: vec![0, 1],
        cells,
    };
    relation.validate()?;
    Ok(relation)
}

pub fn load_relation_matrix(path: &Path) -> Result<Relation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading relation from {}", path.display()))?;
    parse_relation_matrix(&text)
}
