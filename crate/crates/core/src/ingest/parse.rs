//! CSV/TSV interaction-log parsing.

use std::path::Path;

use rayon::prelude::*;

use super::{Interaction, InteractionDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LogFormat {
    Csv,
    Tsv,
}

impl LogFormat {
    fn delimiter(self) -> u8 {
        match self {
            LogFormat::Csv => b',',
            LogFormat::Tsv => b'\t',
        }
    }
}

/// Column mapping and dialect for a raw log file.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ParseOptions {
    pub format: LogFormat,
    /// Overrides the format's delimiter byte when set.
    pub delimiter: Option<u8>,
    pub has_header: bool,
    pub user_col: usize,
    pub item_col: usize,
    pub time_col: usize,
    /// Optional explicit-rating column; presence of a rating only
    /// binarizes (the value itself is discarded).
    pub rating_col: Option<usize>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            format: LogFormat::Csv,
            delimiter: None,
            has_header: false,
            user_col: 0,
            item_col: 1,
            time_col: 2,
            rating_col: None,
        }
    }
}

/// Row-level outcome of a parse: how many rows were kept, and samples
/// of what was skipped and why.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ParseReport {
    pub rows_total: usize,
    pub rows_kept: usize,
    pub rows_skipped: usize,
    /// First few skipped rows, as `(1-based line, reason)`.
    pub sample_errors: Vec<(usize, String)>,
}

const MAX_SAMPLE_ERRORS: usize = 10;

fn parse_row(record: &csv::StringRecord, opts: &ParseOptions) -> std::result::Result<Interaction, String> {
    let field = |col: usize, name: &str| -> std::result::Result<&str, String> {
        record
            .get(col)
            .map(str::trim)
            .ok_or_else(|| format!("missing {name} column {col}"))
    };
    let user = field(opts.user_col, "user")?;
    let item = field(opts.item_col, "item")?;
    let time_raw = field(opts.time_col, "timestamp")?;
    if user.is_empty() {
        return Err("empty user id".into());
    }
    if item.is_empty() {
        return Err("empty item id".into());
    }
    let timestamp: i64 = time_raw
        .parse()
        .map_err(|_| format!("unparsable timestamp {time_raw:?}"))?;
    if timestamp < 0 {
        return Err(format!("negative timestamp {timestamp}"));
    }
    let rating = match opts.rating_col {
        Some(col) => {
            let raw = field(col, "rating")?;
            if raw.is_empty() {
                None
            } else {
                Some(
                    raw.parse::<f64>()
                        .map_err(|_| format!("unparsable rating {raw:?}"))?,
                )
            }
        }
        None => None,
    };
    Ok(Interaction {
        user: user.to_string(),
        item: item.to_string(),
        timestamp,
        rating,
    })
}

/// Parse a raw log into a dataset. Rows with unparsable fields are
/// skipped and reported; zero surviving rows is an error. Row order in
/// the file drives dense-id assignment and timestamp tie-breaks, so the
/// result is reproducible, and the sharded parse below is merged in
/// file order to keep that guarantee.
pub fn parse_log(path: &Path, opts: &ParseOptions) -> Result<(InteractionDataset, ParseReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter.unwrap_or_else(|| opts.format.delimiter()))
        .has_headers(opts.has_header)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::data(format!("cannot open {}: {e}", path.display())))?;
    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::data(format!("malformed {}: {e}", path.display())))?;

    let parsed: Vec<std::result::Result<Interaction, String>> = records
        .par_iter()
        .map(|rec| parse_row(rec, opts))
        .collect();

    let mut report = ParseReport {
        rows_total: parsed.len(),
        ..Default::default()
    };
    let header_off = if opts.has_header { 2 } else { 1 };
    let mut interactions = Vec::with_capacity(parsed.len());
    for (i, row) in parsed.into_iter().enumerate() {
        match row {
            Ok(it) => {
                report.rows_kept += 1;
                interactions.push(it);
            }
            Err(reason) => {
                report.rows_skipped += 1;
                if report.sample_errors.len() < MAX_SAMPLE_ERRORS {
                    report.sample_errors.push((i + header_off, reason));
                }
            }
        }
    }
    let ds = InteractionDataset::from_interactions(&interactions)?;
    Ok((ds, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn field_mapping_example() {
        let f = write_tmp("u1,i9,4.5,1609459200\n");
        let opts = ParseOptions {
            time_col: 3,
            rating_col: Some(2),
            ..Default::default()
        };
        let (ds, report) = parse_log(f.path(), &opts).unwrap();
        assert_eq!(report.rows_kept, 1);
        assert_eq!(ds.users, vec!["u1".to_string()]);
        assert_eq!(ds.items, vec!["i9".to_string()]);
        assert_eq!(ds.sequences[0], vec![(0, 1609459200)]);
    }

    #[test]
    fn rows_sorted_by_timestamp() {
        let f = write_tmp("u1,a,200\nu1,b,100\n");
        let (ds, _) = parse_log(f.path(), &ParseOptions::default()).unwrap();
        assert_eq!(ds.sequences[0][0].1, 100);
        assert_eq!(ds.sequences[0][1].1, 200);
    }

    #[test]
    fn bad_timestamp_skipped_and_reported() {
        let f = write_tmp("u1,a,100\nu1,b,abc\nu1,c,300\n");
        let (ds, report) = parse_log(f.path(), &ParseOptions::default()).unwrap();
        assert_eq!(report.rows_kept, 2);
        assert_eq!(report.rows_skipped, 1);
        assert_eq!(report.sample_errors.len(), 1);
        assert_eq!(report.sample_errors[0].0, 2);
        assert!(report.sample_errors[0].1.contains("timestamp"));
        assert_eq!(ds.n_interactions(), 2);
    }

    #[test]
    fn zero_valid_rows_is_an_error() {
        let f = write_tmp("u1,a,nope\nu2,b,also-nope\n");
        assert!(parse_log(f.path(), &ParseOptions::default()).is_err());
        let empty = write_tmp("");
        assert!(parse_log(empty.path(), &ParseOptions::default()).is_err());
    }

    #[test]
    fn custom_delimiter() {
        let f = write_tmp("u1;a;10\nu1;b;20\n");
        let opts = ParseOptions {
            delimiter: Some(b';'),
            ..Default::default()
        };
        let (ds, _) = parse_log(f.path(), &opts).unwrap();
        assert_eq!(ds.n_interactions(), 2);
    }

    #[test]
    fn tsv_and_header() {
        let f = write_tmp("user\titem\tts\nu1\ta\t10\nu1\tb\t20\n");
        let opts = ParseOptions {
            format: LogFormat::Tsv,
            has_header: true,
            ..Default::default()
        };
        let (ds, report) = parse_log(f.path(), &opts).unwrap();
        assert_eq!(report.rows_kept, 2);
        assert_eq!(ds.n_interactions(), 2);
    }

    #[test]
    fn same_file_same_ids() {
        let f = write_tmp("u2,x,5\nu1,y,3\nu2,z,4\n");
        let (a, _) = parse_log(f.path(), &ParseOptions::default()).unwrap();
        let (b, _) = parse_log(f.path(), &ParseOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.users, vec!["u2".to_string(), "u1".to_string()]);
    }
}
