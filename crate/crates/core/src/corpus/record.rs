use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One review-response pair with the app metadata it was collected with.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub app_name: String,
    pub category: String,
    pub rating: i64,
    #[serde(rename = "review")]
    pub review_text: String,
    #[serde(rename = "response", default)]
    pub response_text: String,
}

impl ReviewRecord {
    pub fn new(
        app_name: impl Into<String>,
        category: impl Into<String>,
        rating: i64,
        review_text: impl Into<String>,
        response_text: impl Into<String>,
    ) -> Self {
        Self {
            app_name: app_name.into(),
            category: category.into(),
            rating,
            review_text: review_text.into(),
            response_text: response_text.into(),
        }
    }

    /// Checks the record-level invariants, returning a description of the
    /// first violation.
    pub fn check(&self) -> std::result::Result<(), String> {
        if !(1..=5).contains(&self.rating) {
            return Err(format!("rating {} is outside 1..=5", self.rating));
        }
        if self.review_text.trim().is_empty() {
            return Err("review text is empty".to_owned());
        }
        if self.category.is_empty() || self.category.chars().any(char::is_whitespace) {
            return Err(format!("category {:?} must be a non-empty label without whitespace", self.category));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    /// `.tsv` files are tab-separated; everything else is JSON-Lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("tsv") => CorpusFormat::Tsv,
            _ => CorpusFormat::Jsonl,
        }
    }
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(CorpusFormat::Jsonl),
            "tsv" => Ok(CorpusFormat::Tsv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Vec<ReviewRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), path, format)
}

/// Parse one record per line. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn read_corpus<R: BufRead>(reader: R, path: &Path, format: CorpusFormat) -> Result<Vec<ReviewRecord>> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = match format {
            CorpusFormat::Jsonl => parse_json_line(&line),
            CorpusFormat::Tsv => parse_tsv_line(&line),
        }
        .map_err(|message| Error::Parse {
            path: path.to_owned(),
            line: line_no,
            message,
        })?;
        record.check().map_err(|message| Error::Validation {
            path: path.to_owned(),
            line: line_no,
            message,
        })?;
        records.push(record);
    }
    Ok(records)
}

fn parse_json_line(line: &str) -> std::result::Result<ReviewRecord, String> {
    serde_json::from_str(line).map_err(|e| e.to_string())
}

fn parse_tsv_line(line: &str) -> std::result::Result<ReviewRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 tab-separated fields, found {}", fields.len()));
    }
    let rating = fields[2]
        .trim()
        .parse::<i64>()
        .map_err(|e| format!("rating {:?}: {e}", fields[2]))?;
    Ok(ReviewRecord::new(fields[0], fields[1], rating, fields[3], fields[4]))
}

pub fn write_corpus<W: Write>(mut out: W, records: &[ReviewRecord], format: CorpusFormat) -> std::io::Result<()> {
    for r in records {
        match format {
            CorpusFormat::Jsonl => {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
            CorpusFormat::Tsv => writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.app_name, r.category, r.rating, r.review_text, r.response_text
            )?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, format: CorpusFormat) -> Result<Vec<ReviewRecord>> {
        read_corpus(text.as_bytes(), Path::new("mem"), format)
    }

    #[test]
    fn reads_records_in_order() {
        let text = concat!(
            r#"{"app_name":"A","category":"TOOLS","rating":5,"review":"great","response":"thanks"}"#, "\n",
            r#"{"app_name":"B","category":"GAME","rating":1,"review":"crashes","response":"sorry"}"#, "\n",
            r#"{"app_name":"C","category":"GAME","rating":3,"review":"ok","response":"noted"}"#, "\n",
        );
        let records = parse(text, CorpusFormat::Jsonl).unwrap();
        let names: Vec<_> = records.iter().map(|r| r.app_name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert_eq!(records[1].rating, 1);
    }

    #[test]
    fn out_of_range_rating_names_the_line() {
        let text = concat!(
            r#"{"app_name":"A","category":"TOOLS","rating":5,"review":"great","response":"thanks"}"#, "\n",
            r#"{"app_name":"A","category":"TOOLS","rating":7,"review":"great","response":"thanks"}"#, "\n",
        );
        match parse(text, CorpusFormat::Jsonl) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_the_line() {
        let text = "{\"app_name\":\"A\"}\n";
        assert!(matches!(parse(text, CorpusFormat::Jsonl), Err(Error::Parse { line: 1, .. })));
        let tsv = "A\tTOOLS\t5\tgood\tthanks\nA\tTOOLS\tfive\tgood\tthanks\n";
        assert!(matches!(parse(tsv, CorpusFormat::Tsv), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn empty_review_is_rejected() {
        let tsv = "A\tTOOLS\t5\t   \tthanks\n";
        assert!(matches!(parse(tsv, CorpusFormat::Tsv), Err(Error::Validation { line: 1, .. })));
    }

    #[test]
    fn missing_response_defaults_to_empty() {
        let text = r#"{"app_name":"A","category":"TOOLS","rating":4,"review":"nice"}"#;
        let records = parse(text, CorpusFormat::Jsonl).unwrap();
        assert_eq!(records[0].response_text, "");
    }

    #[test]
    fn tsv_and_jsonl_writers_read_back() {
        let records = vec![
            ReviewRecord::new("A", "TOOLS", 2, "slow app", "we are on it"),
            ReviewRecord::new("B", "GAME", 5, "fun", ""),
        ];
        for format in [CorpusFormat::Jsonl, CorpusFormat::Tsv] {
            let mut buf = Vec::new();
            write_corpus(&mut buf, &records, format).unwrap();
            let back = read_corpus(buf.as_slice(), Path::new("mem"), format).unwrap();
            assert_eq!(back, records);
        }
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(CorpusFormat::from_path(Path::new("x.TSV")), CorpusFormat::Tsv);
        assert_eq!(CorpusFormat::from_path(Path::new("x.jsonl")), CorpusFormat::Jsonl);
        assert!("csv".parse::<CorpusFormat>().is_err());
    }
}
