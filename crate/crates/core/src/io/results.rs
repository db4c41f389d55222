//! Tabular experiment output: CSV or JSON lines, one record per row.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::MarginRecord;

/// Column order of exported records.
pub const COLUMNS: [&str; 13] = [
    "algorithm",
    "sigma",
    "p",
    "repetition",
    "seed",
    "committee_size",
    "selection_acc",
    "test_acc",
    "margin_top1_test",
    "margin_topn_test",
    "margin_top1_selection",
    "margin_topn_selection",
    "wall_ms",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultFormat {
    #[serde(rename = "csv")]
    Csv,
    #[serde(rename = "jsonl")]
    JsonLines,
}

impl FromStr for ResultFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ResultFormat::Csv),
            "jsonl" | "json-lines" => Ok(ResultFormat::JsonLines),
            other => Err(Error::InvalidParameter(format!("unknown result format {other:?}"))),
        }
    }
}

pub fn write_csv<W: Write>(rows: &[MarginRecord], out: W) -> Result<()> {
    let mut writer =
        csv::WriterBuilder::new().has_headers(false).terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    writer.write_record(COLUMNS)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_json_lines<W: Write>(rows: &[MarginRecord], mut out: W) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n").map_err(|e| Error::io("<json-lines output>", e))?;
    }
    out.flush().map_err(|e| Error::io("<json-lines output>", e))
}

pub fn export_results(rows: &[MarginRecord], path: impl AsRef<Path>, format: ResultFormat) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let out = BufWriter::new(file);
    match format {
        ResultFormat::Csv => write_csv(rows, out),
        ResultFormat::JsonLines => write_json_lines(rows, out),
    }
}

pub fn read_results(path: impl AsRef<Path>, format: ResultFormat) -> Result<Vec<MarginRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        ResultFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            reader.deserialize().map(|r| r.map_err(Error::from)).collect()
        }
        ResultFormat::JsonLines => BufReader::new(file)
            .lines()
            .filter(|l| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
            .map(|line| {
                let line = line.map_err(|e| Error::io(path, e))?;
                Ok(serde_json::from_str(&line)?)
            })
            .collect(),
    }
}
