//! Review and label file parsing.
//!
//! Review files are CSV with a header naming `reviewer_id`, `product_id`,
//! `rating`, `date` and optionally `text`, or JSON lines with the same keys.
//! Dates are ISO-8601 calendar dates (a time suffix is ignored) or integer
//! day numbers. Bad rows are rejected with a reason rather than coerced.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{Dataset, RatingScale, Review};

/// Abort when more than this fraction of rows is rejected.
pub const MAX_REJECTED_FRACTION: f64 = 0.10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReviewFormat {
    Csv,
    JsonLines,
}

impl ReviewFormat {
    /// `.jsonl`, `.ndjson` and `.json` are JSON lines; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("jsonl" | "ndjson" | "json") => ReviewFormat::JsonLines,
            _ => ReviewFormat::Csv,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ParseReport {
    pub rows_read: u64,
    pub rows_accepted: u64,
    pub rejected: Vec<Rejection>,
}

impl ParseReport {
    pub fn rows_rejected(&self) -> u64 {
        self.rejected.len() as u64
    }

    fn reject(&mut self, line: u64, reason: impl Into<String>) {
        self.rows_read += 1;
        self.rejected.push(Rejection {
            line,
            reason: reason.into(),
        });
    }

    fn accept(&mut self) {
        self.rows_read += 1;
        self.rows_accepted += 1;
    }
}

/// Days since 1970-01-01 for a proleptic Gregorian date.
pub fn days_from_civil(year: i64, month: u32, day: u32) -> i64 {
    let y = if month <= 2 { year - 1 } else { year };
    let era = y.div_euclid(400);
    let yoe = y - era * 400;
    let m = i64::from(month);
    let doy = (153 * (if m > 2 { m - 3 } else { m + 9 }) + 2) / 5 + i64::from(day) - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

/// Inverse of [`days_from_civil`], formatted as `YYYY-MM-DD`.
pub fn civil_from_days(days: i64) -> String {
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}")
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

/// Parses `YYYY-MM-DD` (optionally followed by `T` or a space and a time) or
/// a plain integer day number.
pub fn parse_date(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(d) = s.parse::<i64>() {
        return Some(d);
    }
    let date = match s.find(['T', ' ']) {
        Some(k) => &s[..k],
        None => s,
    };
    let mut parts = date.split('-');
    let (y, m, d) = (parts.next()?, parts.next()?, parts.next()?);
    if parts.next().is_some() || y.len() != 4 || m.len() != 2 || d.len() != 2 {
        return None;
    }
    let y: i64 = y.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    let d: u32 = d.parse().ok()?;
    let month_len = match m {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(y) => 29,
        2 => 28,
        _ => return None,
    };
    (1..=month_len).contains(&d).then(|| days_from_civil(y, m, d))
}

fn parse_rating(s: &str, scale: RatingScale) -> std::result::Result<i32, String> {
    let r: i32 = s
        .trim()
        .parse()
        .map_err(|_| format!("rating `{s}` is not an integer"))?;
    if !scale.contains(r) {
        return Err(format!("rating {r} outside scale [{}, {}]", scale.min, scale.max));
    }
    Ok(r)
}

fn nonempty(field: &str, value: &str) -> std::result::Result<String, String> {
    let v = value.trim();
    if v.is_empty() {
        Err(format!("empty {field}"))
    } else {
        Ok(v.to_owned())
    }
}

fn parse_csv<R: Read>(
    reader: R,
    scale: RatingScale,
    report: &mut ParseReport,
) -> std::result::Result<Vec<Review>, String> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(ri), Some(pi), Some(ti), Some(di)) = (col("reviewer_id"), col("product_id"), col("rating"), col("date"))
    else {
        if headers.iter().all(|h| h.trim().is_empty()) {
            return Ok(Vec::new());
        }
        return Err(format!(
            "header must name reviewer_id, product_id, rating, date (and optionally text); found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        ));
    };
    let xi = col("text");
    let mut reviews = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = rdr.position().line();
        match rdr.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                report.reject(line, e.to_string());
                continue;
            }
        }
        let line = record.position().map_or(line, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let get = |k: usize| record.get(k).unwrap_or("");
        let row = (|| {
            Ok::<_, String>(Review {
                reviewer_id: nonempty("reviewer_id", get(ri))?,
                product_id: nonempty("product_id", get(pi))?,
                rating: parse_rating(get(ti), scale)?,
                day: parse_date(get(di)).ok_or_else(|| format!("unparseable date `{}`", get(di)))?,
                text: xi.map(|k| get(k).to_owned()).unwrap_or_default(),
            })
        })();
        match row {
            Ok(r) => {
                report.accept();
                reviews.push(r);
            }
            Err(reason) => report.reject(line, reason),
        }
    }
    Ok(reviews)
}

fn json_string(v: Option<&Value>, field: &str) -> std::result::Result<String, String> {
    match v {
        Some(Value::String(s)) => nonempty(field, s),
        Some(Value::Number(n)) => Ok(n.to_string()),
        Some(other) => Err(format!("{field} has unexpected value {other}")),
        None => Err(format!("missing {field}")),
    }
}

fn parse_json_row(line: &str, scale: RatingScale) -> std::result::Result<Review, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let obj = value.as_object().ok_or("row is not a JSON object")?;
    let rating = match obj.get("rating") {
        Some(Value::Number(n)) => {
            let r = n.as_i64().ok_or_else(|| format!("rating {n} is not an integer"))?;
            let r = i32::try_from(r).map_err(|_| format!("rating {r} out of range"))?;
            parse_rating(&r.to_string(), scale)?
        }
        Some(Value::String(s)) => parse_rating(s, scale)?,
        _ => return Err("missing rating".into()),
    };
    let day = match obj.get("date") {
        Some(Value::Number(n)) => n.as_i64().ok_or_else(|| format!("date {n} is not an integer"))?,
        Some(Value::String(s)) => parse_date(s).ok_or_else(|| format!("unparseable date `{s}`"))?,
        _ => return Err("missing date".into()),
    };
    let text = match obj.get("text") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(format!("text has unexpected value {other}")),
    };
    Ok(Review {
        reviewer_id: json_string(obj.get("reviewer_id"), "reviewer_id")?,
        product_id: json_string(obj.get("product_id"), "product_id")?,
        rating,
        day,
        text,
    })
}

fn parse_json_lines<R: Read>(reader: R, scale: RatingScale, report: &mut ParseReport) -> std::io::Result<Vec<Review>> {
    let mut reviews = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_json_row(&line, scale) {
            Ok(r) => {
                report.accept();
                reviews.push(r);
            }
            Err(reason) => report.reject(k as u64 + 1, reason),
        }
    }
    Ok(reviews)
}

/// Parses review rows without building a dataset. `origin` names the source
/// in errors.
pub fn parse_reviews<R: Read>(
    reader: R,
    format: ReviewFormat,
    scale: RatingScale,
    origin: &Path,
) -> Result<(Vec<Review>, ParseReport)> {
    let mut report = ParseReport::default();
    let reviews = match format {
        ReviewFormat::Csv => parse_csv(reader, scale, &mut report).map_err(|m| Error::format(origin, m))?,
        ReviewFormat::JsonLines => parse_json_lines(reader, scale, &mut report).map_err(|e| Error::io(origin, e))?,
    };
    if report.rows_read == 0 {
        return Err(Error::EmptyInput);
    }
    let rejected = report.rows_rejected();
    if rejected as f64 > MAX_REJECTED_FRACTION * report.rows_read as f64 {
        let first = &report.rejected[0];
        return Err(Error::TooManyRejected {
            path: origin.to_owned(),
            read: report.rows_read,
            rejected,
            first: format!("line {}: {}", first.line, first.reason),
        });
    }
    for r in &report.rejected {
        log::warn!("{}: line {}: {}", origin.display(), r.line, r.reason);
    }
    Ok((reviews, report))
}

/// Loads a review file and builds a dataset, attaching `labels` if given.
pub fn load_reviews(
    path: &Path,
    format: ReviewFormat,
    scale: RatingScale,
    labels: Option<&HashMap<String, bool>>,
) -> Result<(Dataset, ParseReport)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (reviews, report) = parse_reviews(file, format, scale, path)?;
    if reviews.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((Dataset::build(reviews, scale, labels)?, report))
}

/// Reads a `reviewer_id,label` CSV with labels 0 or 1.
pub fn read_labels<R: Read>(reader: R) -> Result<HashMap<String, bool>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::MalformedRow {
        line: 1,
        reason: e.to_string(),
    })?;
    if headers.len() < 2 || headers[0].trim() != "reviewer_id" || headers[1].trim() != "label" {
        return Err(Error::MalformedRow {
            line: 1,
            reason: "header must be `reviewer_id,label`".into(),
        });
    }
    let mut labels = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = record[0].trim();
        if id.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty reviewer_id".into(),
            });
        }
        let flag = match record[1].trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("label `{other}` is not 0 or 1"),
                })
            }
        };
        if let Some(prev) = labels.insert(id.to_owned(), flag) {
            if prev != flag {
                return Err(Error::ConflictingLabel(id.to_owned()));
            }
        }
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<HashMap<String, bool>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(file)
}

/// Writes reviews as CSV with days rendered as ISO dates.
pub fn write_reviews_csv<W: Write>(reviews: &[Review], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reviewer_id", "product_id", "rating", "date", "text"])?;
    for r in reviews {
        w.write_record([
            r.reviewer_id.as_str(),
            r.product_id.as_str(),
            &r.rating.to_string(),
            &civil_from_days(r.day),
            r.text.as_str(),
        ])?;
    }
    w.flush()
}

/// Writes labels sorted by reviewer id.
pub fn write_labels_csv<W: Write>(labels: &HashMap<String, bool>, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["reviewer_id", "label"])?;
    let mut ids: Vec<_> = labels.iter().collect();
    ids.sort();
    for (id, &flag) in ids {
        w.write_record([id.as_str(), if flag { "1" } else { "0" }])?;
    }
    w.flush()
}
