//! Reading the five-column corpus and deriving the two task labels.
//!
//! A corpus file carries an English sentence, its Hindi translation, the
//! synthetic Hinglish sentence, and either the two derived scores (average
//! rating, disagreement) or the two raw annotator ratings they come from.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Number of classes shared by both tasks.
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: column count {found}, expected {expected}")]
    Columns { line: u64, found: usize, expected: usize },
    #[error("line {line}: {column} value {value:?} is not an integer in {min}..={max}")]
    Rating { line: u64, column: &'static str, value: String, min: u8, max: u8 },
    #[error("line {line}: {column} text is empty")]
    EmptyText { line: u64, column: &'static str },
    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("rating {0} is outside 1..=10")]
    OutOfRange(u8),
}

/// Which two numeric columns follow the three text columns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelColumns {
    /// Average rating (1–10) and disagreement (0–9).
    #[default]
    Derived,
    /// The two annotators' raw ratings (1–10 each).
    RawRatings,
    /// Text only; used for prediction inputs. Trailing label columns, if
    /// present, are ignored.
    None,
}

/// One corpus row as read from disk.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRecord {
    /// 1-based line number in the source file.
    pub line: u64,
    pub english: String,
    pub hindi: String,
    pub hinglish: String,
    pub rating_a: Option<u8>,
    pub rating_b: Option<u8>,
    pub average_rating: Option<u8>,
    pub disagreement: Option<u8>,
}

impl RawRecord {
    /// Labels from the file when present, otherwise derived from the raw
    /// ratings. `None` for text-only rows.
    pub fn scores(&self) -> Result<Option<(u8, u8)>, CorpusError> {
        match (self.average_rating, self.disagreement, self.rating_a, self.rating_b) {
            (Some(avg), Some(dis), _, _) => Ok(Some((avg, dis))),
            (_, _, Some(a), Some(b)) => Ok(Some((derive_average_rating(a, b)?, derive_disagreement(a, b)?))),
            _ => Ok(None),
        }
    }
}

/// A labelled training or evaluation example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub english: String,
    pub hindi: String,
    pub hinglish: String,
    /// Average rating `r` stored as class `r - 1`.
    pub avg_rating_label: u8,
    /// Disagreement `d` stored as class `d`.
    pub disagreement_label: u8,
}

impl Example {
    pub fn from_record(record: &RawRecord) -> Result<Option<Self>, CorpusError> {
        Ok(record.scores()?.map(|(avg, dis)| Example {
            english: record.english.clone(),
            hindi: record.hindi.clone(),
            hinglish: record.hinglish.clone(),
            avg_rating_label: avg - 1,
            disagreement_label: dis,
        }))
    }
}

#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

/// The two prediction targets. Both are ten-way classification problems.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    AverageRating,
    Disagreement,
}

impl Task {
    pub fn label(self, example: &Example) -> usize {
        match self {
            Task::AverageRating => example.avg_rating_label as usize,
            Task::Disagreement => example.disagreement_label as usize,
        }
    }

    /// Maps a class index back to the task's own scale.
    pub fn to_scale(self, class: usize) -> i64 {
        match self {
            Task::AverageRating => class as i64 + 1,
            Task::Disagreement => class as i64,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Task::AverageRating => "avg-rating",
            Task::Disagreement => "disagreement",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "avg-rating" | "average_rating" => Some(Task::AverageRating),
            "disagreement" => Some(Task::Disagreement),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

fn check_rating(r: u8) -> Result<u8, CorpusError> {
    if (1..=10).contains(&r) {
        Ok(r)
    } else {
        Err(CorpusError::OutOfRange(r))
    }
}

/// Rounded mean of two 1–10 ratings; halves round up.
pub fn derive_average_rating(rating_a: u8, rating_b: u8) -> Result<u8, CorpusError> {
    let sum = check_rating(rating_a)? + check_rating(rating_b)?;
    Ok(sum.div_ceil(2))
}

/// Absolute difference of two 1–10 ratings.
pub fn derive_disagreement(rating_a: u8, rating_b: u8) -> Result<u8, CorpusError> {
    Ok(check_rating(rating_a)?.abs_diff(check_rating(rating_b)?))
}

/// Parses a corpus file. Rows are returned in file order.
pub fn parse_dataset(path: impl AsRef<Path>, has_header: bool, columns: LabelColumns) -> Result<Vec<RawRecord>, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
    parse_reader(file, has_header, columns)
}

pub fn parse_reader(reader: impl Read, has_header: bool, columns: LabelColumns) -> Result<Vec<RawRecord>, CorpusError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(has_header).flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for row in csv.records() {
        let row = row.map_err(|e| CorpusError::Csv { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = row.position().map_or(0, |p| p.line());
        out.push(parse_row(&row, line, columns)?);
    }
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, line: u64, columns: LabelColumns) -> Result<RawRecord, CorpusError> {
    let count_ok = match columns {
        LabelColumns::None => row.len() == 3 || row.len() == 5,
        _ => row.len() == 5,
    };
    if !count_ok {
        let expected = if columns == LabelColumns::None { 3 } else { 5 };
        return Err(CorpusError::Columns { line, found: row.len(), expected });
    }
    let text = |i: usize, column: &'static str| -> Result<String, CorpusError> {
        let t = row[i].trim();
        if t.is_empty() {
            Err(CorpusError::EmptyText { line, column })
        } else {
            Ok(t.to_owned())
        }
    };
    let number = |i: usize, column: &'static str, min: u8, max: u8| -> Result<u8, CorpusError> {
        let raw = row[i].trim();
        raw.parse::<u8>().ok().filter(|v| (min..=max).contains(v)).ok_or_else(|| CorpusError::Rating {
            line,
            column,
            value: raw.to_owned(),
            min,
            max,
        })
    };
    let mut record = RawRecord {
        line,
        english: text(0, "English")?,
        hindi: text(1, "Hindi")?,
        hinglish: text(2, "Hinglish")?,
        rating_a: None,
        rating_b: None,
        average_rating: None,
        disagreement: None,
    };
    match columns {
        LabelColumns::Derived => {
            record.average_rating = Some(number(3, "Average rating", 1, 10)?);
            record.disagreement = Some(number(4, "Disagreement", 0, 9)?);
        }
        LabelColumns::RawRatings => {
            record.rating_a = Some(number(3, "Rating-A", 1, 10)?);
            record.rating_b = Some(number(4, "Rating-B", 1, 10)?);
        }
        LabelColumns::None => {}
    }
    Ok(record)
}

/// Guesses whether the first row is a header: it is one when its fourth
/// column is not a number, or when it has only text columns whose first
/// field reads "english".
pub fn detect_header(path: impl AsRef<Path>) -> Result<bool, CorpusError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_owned(), source })?;
    let mut csv = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(file);
    let Some(first) = csv.records().next() else { return Ok(false) };
    let first = first.map_err(|e| CorpusError::Csv { line: 1, message: e.to_string() })?;
    Ok(match first.get(3) {
        Some(field) => field.trim().parse::<f64>().is_err(),
        None => first.get(0).is_some_and(|f| f.trim().eq_ignore_ascii_case("english")),
    })
}

/// Writes records back out with a header row, in the given label layout.
pub fn write_dataset(records: &[RawRecord], writer: impl Write, columns: LabelColumns) -> Result<(), CorpusError> {
    let io = |e: csv::Error| CorpusError::Csv { line: 0, message: e.to_string() };
    let mut w = csv::Writer::from_writer(writer);
    let header: &[&str] = match columns {
        LabelColumns::Derived => &["English", "Hindi", "Hinglish", "Average rating", "Disagreement"],
        LabelColumns::RawRatings => &["English", "Hindi", "Hinglish", "Rating-A", "Rating-B"],
        LabelColumns::None => &["English", "Hindi", "Hinglish"],
    };
    w.write_record(header).map_err(io)?;
    for r in records {
        let mut fields = vec![r.english.clone(), r.hindi.clone(), r.hinglish.clone()];
        let pair = match columns {
            LabelColumns::Derived => r.scores()?,
            LabelColumns::RawRatings => r.rating_a.zip(r.rating_b),
            LabelColumns::None => None,
        };
        if let Some((x, y)) = pair {
            fields.push(x.to_string());
            fields.push(y.to_string());
        }
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|source| CorpusError::Io { path: PathBuf::from("<writer>"), source })?;
    Ok(())
}

/// Turns parsed rows into labelled examples, dropping none: every row must
/// carry or imply both labels.
pub fn to_examples(records: &[RawRecord]) -> Result<Vec<Example>, CorpusError> {
    records.iter().map(|r| Example::from_record(r)?.ok_or(CorpusError::Columns { line: r.line, found: 3, expected: 5 })).collect()
}

/// Loads the three split files. Each file's header row is detected
/// independently.
pub fn load_splits(
    train_path: impl AsRef<Path>,
    validation_path: impl AsRef<Path>,
    test_path: impl AsRef<Path>,
    columns: LabelColumns,
) -> Result<DatasetSplit, CorpusError> {
    let load = |path: &Path, name: &str| -> Result<Vec<Example>, CorpusError> {
        let header = detect_header(path)?;
        let examples = to_examples(&parse_dataset(path, header, columns)?)?;
        if examples.is_empty() {
            log::warn!("{} split {} is empty", name, path.display());
        }
        Ok(examples)
    };
    Ok(DatasetSplit {
        train: load(train_path.as_ref(), "train")?,
        validation: load(validation_path.as_ref(), "validation")?,
        test: load(test_path.as_ref(), "test")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, columns: LabelColumns) -> Result<Vec<RawRecord>, CorpusError> {
        parse_reader(text.as_bytes(), false, columns)
    }

    #[test]
    fn maps_fields_directly() {
        let rows = parse("I am going home,मैं घर जा रहा हूँ,main ghar ja raha hoon,8,1\n", LabelColumns::Derived).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].hindi, "मैं घर जा रहा हूँ");
        assert_eq!(rows[0].average_rating, Some(8));
        assert_eq!(rows[0].disagreement, Some(1));
        assert_eq!(rows[0].line, 1);
    }

    #[test]
    fn wrong_column_count_names_line() {
        let err = parse("a,b,c,1,0\na,b,c,1\n", LabelColumns::Derived).unwrap_err();
        assert_eq!(err.to_string(), "line 2: column count 4, expected 5");
    }

    #[test]
    fn out_of_range_and_empty_text_rejected() {
        assert!(matches!(parse("a,b,c,11,0\n", LabelColumns::Derived), Err(CorpusError::Rating { line: 1, .. })));
        assert!(matches!(parse("a,b,c,5,10\n", LabelColumns::Derived), Err(CorpusError::Rating { .. })));
        assert!(matches!(parse("a,b,c,0,5\n", LabelColumns::RawRatings), Err(CorpusError::Rating { .. })));
        assert!(matches!(parse("a, ,c,5,1\n", LabelColumns::Derived), Err(CorpusError::EmptyText { column: "Hindi", .. })));
    }

    #[test]
    fn quoted_delimiters_survive() {
        let rows = parse("\"Yes, sir\",\"जी, हाँ\",\"haan, sir\",7,2\n", LabelColumns::Derived).unwrap();
        assert_eq!(rows[0].english, "Yes, sir");
    }

    #[test]
    fn derivation_examples() {
        assert_eq!(derive_average_rating(5, 5).unwrap(), 5);
        assert_eq!(derive_average_rating(7, 8).unwrap(), 8);
        assert_eq!(derive_average_rating(1, 10).unwrap(), 6);
        assert_eq!(derive_disagreement(7, 7).unwrap(), 0);
        assert_eq!(derive_disagreement(1, 10).unwrap(), 9);
        assert_eq!(derive_disagreement(3, 8).unwrap(), 5);
        assert!(derive_average_rating(0, 5).is_err());
        assert!(derive_disagreement(5, 11).is_err());
    }

    #[test]
    fn raw_ratings_are_derived_into_labels() {
        let rows = parse("a,b,c,9,9\n", LabelColumns::RawRatings).unwrap();
        let ex = to_examples(&rows).unwrap();
        assert_eq!(ex[0].avg_rating_label, 8);
        assert_eq!(ex[0].disagreement_label, 0);
    }

    #[test]
    fn text_only_rows() {
        let rows = parse("a,b,c\n", LabelColumns::None).unwrap();
        assert_eq!(rows[0].scores().unwrap(), None);
        assert!(to_examples(&rows).is_err());
    }

    #[test]
    fn task_scales() {
        assert_eq!(Task::AverageRating.to_scale(0), 1);
        assert_eq!(Task::AverageRating.to_scale(9), 10);
        assert_eq!(Task::Disagreement.to_scale(9), 9);
        assert_eq!(Task::from_id("avg-rating"), Some(Task::AverageRating));
    }
}
