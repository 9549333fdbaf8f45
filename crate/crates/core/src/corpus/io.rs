//! TSV and JSONL dataset files.
//!
//! TSV rows are `id, language, score, origin, confidence_std, text`, tab
//! separated, with empty cells for absent values. Tabs and line breaks inside
//! text become single spaces on write. Reals are written in the shortest form
//! that parses back to the same `f64`, so a write/read cycle is lossless.
//!
//! JSONL rows are objects with the same field names; absent values are `null`.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Dataset, Example, Origin};
use crate::error::{Error, Result};

pub const TSV_HEADER: &str = "id\tlanguage\tscore\torigin\tconfidence_std\ttext";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tsv,
    Jsonl,
}

impl Format {
    /// `.jsonl` and `.json` map to JSONL, everything else to TSV.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Tsv,
        }
    }
}

pub fn read_dataset(path: &Path, format: Format) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_from(BufReader::new(file), format, path)
}

pub(crate) fn read_from<R: BufRead>(reader: R, format: Format, path: &Path) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut ids = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() || (lineno == 1 && format == Format::Tsv && line == TSV_HEADER) {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            message,
        };
        let ex = match format {
            Format::Tsv => parse_tsv_row(line).map_err(parse_err)?,
            Format::Jsonl => {
                serde_json::from_str::<Example>(line).map_err(|e| parse_err(e.to_string()))?
            }
        };
        ex.validate().map_err(|e| parse_err(e.to_string()))?;
        if !ids.insert(ex.id.clone()) {
            return Err(parse_err(format!("duplicate id {:?}", ex.id)));
        }
        examples.push(ex);
    }
    Dataset::new(examples)
}

fn parse_tsv_row(line: &str) -> std::result::Result<Example, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 6 {
        return Err(format!(
            "expected 6 tab-separated columns, found {}",
            cols.len()
        ));
    }
    let score = parse_opt_f64(cols[2], "score")?;
    let origin = Origin::from_str(cols[3])?;
    let confidence_std = parse_opt_f64(cols[4], "confidence_std")?;
    Ok(Example {
        id: cols[0].to_string(),
        language: cols[1].to_string(),
        score,
        origin,
        confidence_std,
        text: cols[5].to_string(),
    })
}

fn parse_opt_f64(cell: &str, field: &str) -> std::result::Result<Option<f64>, String> {
    if cell.is_empty() {
        return Ok(None);
    }
    cell.parse::<f64>()
        .map(Some)
        .map_err(|_| format!("{field} {cell:?} is not a number"))
}

pub fn write_dataset(ds: &Dataset, path: &Path, format: Format, header: bool) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_to(ds, &mut out, format, header).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_to<W: Write>(
    ds: &Dataset,
    out: &mut W,
    format: Format,
    header: bool,
) -> std::io::Result<()> {
    if header && format == Format::Tsv {
        writeln!(out, "{TSV_HEADER}")?;
    }
    for ex in ds {
        match format {
            Format::Tsv => writeln!(out, "{}", tsv_row(ex))?,
            Format::Jsonl => {
                serde_json::to_writer(&mut *out, ex)?;
                writeln!(out)?;
            }
        }
    }
    Ok(())
}

pub(crate) fn tsv_row(ex: &Example) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}",
        ex.id,
        ex.language,
        opt_f64(ex.score),
        ex.origin,
        opt_f64(ex.confidence_std),
        tsv_text(&ex.text)
    )
}

pub(crate) fn tsv_text(text: &str) -> String {
    text.replace(['\t', '\n', '\r'], " ")
}

fn opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
