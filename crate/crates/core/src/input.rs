//! Reading sets from plain text, single-column CSV or JSON.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::moments::check_values;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputFormat {
    /// JSON when the first visible character is `[` or `{`, CSV when the
    /// file name ends in `.csv`, plain text otherwise.
    #[default]
    Auto,
    /// One value per line; blank lines and `#` comments are skipped.
    Text,
    /// One column, with an optional non-numeric header row.
    Csv,
    /// An array of numbers or an object with a `values` array.
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(InputFormat::Auto),
            "text" => Ok(InputFormat::Text),
            "csv" => Ok(InputFormat::Csv),
            "json" => Ok(InputFormat::Json),
            other => Err(Error::Config(format!("unknown input format {other:?} (expected auto, text, csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct InputDocument {
    pub values: Vec<f64>,
    pub name: Option<String>,
    /// Declared source family, e.g. `"chi_square"`.
    pub family: Option<String>,
}

pub fn read_input(path: &Path, format: InputFormat) -> Result<InputDocument> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let format = match format {
        InputFormat::Auto if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => {
            if looks_like_json(&text) {
                InputFormat::Json
            } else {
                InputFormat::Csv
            }
        }
        f => f,
    };
    parse_input(&text, format)
}

pub fn parse_input(text: &str, format: InputFormat) -> Result<InputDocument> {
    let doc = match format {
        InputFormat::Auto if looks_like_json(text) => parse_json(text)?,
        InputFormat::Auto | InputFormat::Text => parse_text(text)?,
        InputFormat::Csv => parse_csv(text)?,
        InputFormat::Json => parse_json(text)?,
    };
    check_values(&doc.values)?;
    Ok(doc)
}

fn looks_like_json(text: &str) -> bool {
    matches!(text.trim_start().chars().next(), Some('[' | '{'))
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

fn parse_value(raw: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| parse_error(line, column, format!("not a number: {raw:?}")))?;
    if !v.is_finite() {
        return Err(parse_error(line, column, format!("value is not finite: {raw:?}")));
    }
    Ok(v)
}

fn parse_text(text: &str) -> Result<InputDocument> {
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let column = line.len() - line.trim_start().len() + 1;
        values.push(parse_value(trimmed, i + 1, column)?);
    }
    Ok(InputDocument { values, ..Default::default() })
}

fn parse_csv(text: &str) -> Result<InputDocument> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut name = None;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_error(line, 1, e.to_string())
        })?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.len() == 1 && record[0].trim().is_empty() {
            continue;
        }
        if record.len() != 1 {
            let column = record[0].len() + 2;
            return Err(parse_error(line, column, format!("expected one column, found {}", record.len())));
        }
        let field = record[0].trim();
        match parse_value(field, line, 1) {
            Ok(v) => values.push(v),
            Err(_) if values.is_empty() && name.is_none() => name = Some(field.to_string()),
            Err(e) => return Err(e),
        }
    }
    Ok(InputDocument { values, name, family: None })
}

#[derive(Deserialize)]
struct JsonDocument {
    values: Vec<f64>,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    family: Option<String>,
}

fn parse_json(text: &str) -> Result<InputDocument> {
    let positioned = |e: serde_json::Error| parse_error(e.line(), e.column(), e.to_string());
    if text.trim_start().starts_with('[') {
        let values: Vec<f64> = serde_json::from_str(text).map_err(positioned)?;
        return Ok(InputDocument { values, ..Default::default() });
    }
    let doc: JsonDocument = serde_json::from_str(text).map_err(positioned)?;
    Ok(InputDocument { values: doc.values, name: doc.name, family: doc.family })
}
