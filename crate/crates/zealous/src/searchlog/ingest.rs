//! TSV ingestion: the native 4-column format and the AOL-style
//! 5-column format.
//!
//! Native lines are `user ⇥ query text ⇥ unix-seconds ⇥ url,url` (the
//! click column may be empty or absent). AOL lines are `AnonID ⇥ Query
//! ⇥ YYYY-MM-DD HH:MM:SS ⇥ ItemRank ⇥ ClickURL` where the last two
//! columns are present only for click-through rows; an `AnonID` header
//! line is skipped. Malformed lines are counted and reported; more
//! than 10% malformed aborts the ingest.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use chrono::NaiveDateTime;
use thiserror::Error;

use super::{normalize_query, SearchEntry, SearchLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogFormat {
    #[default]
    Native,
    Aol,
}

impl std::str::FromStr for LogFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "native" | "tsv" => Ok(LogFormat::Native),
            "aol" => Ok(LogFormat::Aol),
            other => Err(format!("unknown log format `{other}`")),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read log: {0}")]
    Io(#[from] std::io::Error),
    #[error(
        "{malformed} of {total} lines malformed (>10%); first bad line {first_line}: {first_reason}"
    )]
    TooManyMalformed { malformed: usize, total: usize, first_line: usize, first_reason: String },
}

/// Counters accumulated while parsing.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct IngestStats {
    pub total_lines: usize,
    pub malformed_lines: usize,
    pub entries: usize,
    pub users: u64,
}

#[derive(Debug)]
pub struct Ingested {
    pub log: SearchLog,
    pub stats: IngestStats,
}

/// Parse one native line into an entry.
fn parse_native_line(line: &str) -> Result<SearchEntry, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 && fields.len() != 4 {
        return Err(format!("expected 3 or 4 tab-separated fields, found {}", fields.len()));
    }
    let user_id = fields[0].trim();
    if user_id.is_empty() {
        return Err("empty user id".into());
    }
    let query = normalize_query(fields[1]);
    if query.is_empty() {
        return Err("query normalizes to nothing".into());
    }
    let time: i64 = fields[2].trim().parse().map_err(|_| format!("bad timestamp `{}`", fields[2]))?;
    let clicks = fields
        .get(3)
        .map(|c| {
            c.split(',').map(str::trim).filter(|u| !u.is_empty()).map(String::from).collect()
        })
        .unwrap_or_default();
    Ok(SearchEntry { user_id: user_id.to_string(), query, time, clicks })
}

/// Parse one AOL line into an entry.
fn parse_aol_line(line: &str) -> Result<SearchEntry, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 && fields.len() != 5 {
        return Err(format!("expected 3 or 5 tab-separated fields, found {}", fields.len()));
    }
    let user_id = fields[0].trim();
    if user_id.is_empty() {
        return Err("empty user id".into());
    }
    let query = normalize_query(fields[1]);
    if query.is_empty() {
        return Err("query normalizes to nothing".into());
    }
    let time = NaiveDateTime::parse_from_str(fields[2].trim(), "%Y-%m-%d %H:%M:%S")
        .map_err(|_| format!("bad query time `{}`", fields[2]))?
        .and_utc()
        .timestamp();
    let clicks = match fields.get(4) {
        Some(url) if !url.trim().is_empty() => vec![url.trim().to_string()],
        _ => Vec::new(),
    };
    Ok(SearchEntry { user_id: user_id.to_string(), query, time, clicks })
}

/// Parse a whole log from a reader. Blank lines are ignored; an AOL
/// header line is skipped.
pub fn parse_log<R: Read>(reader: R, format: LogFormat) -> Result<Ingested, IngestError> {
    let mut entries = Vec::new();
    let mut stats = IngestStats::default();
    let mut first_bad: Option<(usize, String)> = None;

    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if format == LogFormat::Aol && stats.total_lines == 0 && line.to_ascii_lowercase().starts_with("anonid\t") {
            continue;
        }
        stats.total_lines += 1;
        let parsed = match format {
            LogFormat::Native => parse_native_line(&line),
            LogFormat::Aol => parse_aol_line(&line),
        };
        match parsed {
            Ok(entry) => entries.push(entry),
            Err(reason) => {
                stats.malformed_lines += 1;
                first_bad.get_or_insert((idx + 1, reason));
            }
        }
    }

    if stats.malformed_lines * 10 > stats.total_lines {
        let (first_line, first_reason) = first_bad.unwrap();
        return Err(IngestError::TooManyMalformed {
            malformed: stats.malformed_lines,
            total: stats.total_lines,
            first_line,
            first_reason,
        });
    }

    let log = SearchLog::from_entries(entries);
    stats.entries = log.entry_count();
    stats.users = log.user_count();
    Ok(Ingested { log, stats })
}

/// Parse a log file on disk.
pub fn ingest_tsv<P: AsRef<Path>>(path: P, format: LogFormat) -> Result<Ingested, IngestError> {
    parse_log(File::open(path)?, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_native_record() {
        let got = parse_log("u1\tfoo bar\t100\t".as_bytes(), LogFormat::Native).unwrap();
        assert_eq!(got.log.user_count(), 1);
        assert_eq!(got.stats.entries, 1);
        let entry = got.log.entries().next().unwrap();
        assert_eq!(entry.query, vec!["foo", "bar"]);
        assert_eq!(entry.time, 100);
        assert!(entry.clicks.is_empty());
    }

    #[test]
    fn empty_file_gives_empty_log() {
        let got = parse_log("".as_bytes(), LogFormat::Native).unwrap();
        assert_eq!(got.log.user_count(), 0);
        assert_eq!(got.stats.total_lines, 0);
    }

    #[test]
    fn clicks_are_comma_separated() {
        let got =
            parse_log("u\tq\t5\thttp://a,http://b".as_bytes(), LogFormat::Native).unwrap();
        let entry = got.log.entries().next().unwrap();
        assert_eq!(entry.clicks, vec!["http://a", "http://b"]);
    }

    #[test]
    fn malformed_lines_are_counted() {
        let text = "u\tq\t1\t\nbroken line without tabs\nu\tq2\t2\t\nu\tq3\t3\t\nu\tq4\t4\t\nu\tq5\t5\t\nu\tq6\t6\t\nu\tq7\t7\t\nu\tq8\t8\t\nu\tq9\t9\t\n";
        let got = parse_log(text.as_bytes(), LogFormat::Native).unwrap();
        assert_eq!(got.stats.malformed_lines, 1);
        assert_eq!(got.stats.total_lines, 10);
    }

    #[test]
    fn too_many_malformed_aborts() {
        let text = "garbage\nu\tq\t1\t\n";
        let err = parse_log(text.as_bytes(), LogFormat::Native).unwrap_err();
        match err {
            IngestError::TooManyMalformed { malformed, total, first_line, .. } => {
                assert_eq!((malformed, total, first_line), (1, 2, 1));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    /// Independent line-by-line reference parser for the AOL format,
    /// kept free of the production parsing helpers.
    fn aol_reference(text: &str) -> Vec<(String, Vec<String>, i64)> {
        let mut rows = Vec::new();
        for line in text.lines() {
            if line.is_empty() || line.starts_with("AnonID") {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let user = cols[0].to_string();
            let mut kws = Vec::new();
            for token in cols[1].split(' ') {
                let cleaned: String = token
                    .chars()
                    .filter(char::is_ascii_alphanumeric)
                    .map(|c| c.to_ascii_lowercase())
                    .collect();
                if !cleaned.is_empty() {
                    kws.push(cleaned);
                }
            }
            // Seconds since the epoch, computed via days-from-civil.
            let date = cols[2].as_bytes();
            let y: i64 = cols[2][0..4].parse().unwrap();
            let m: i64 = cols[2][5..7].parse().unwrap();
            let d: i64 = cols[2][8..10].parse().unwrap();
            let hh: i64 = cols[2][11..13].parse().unwrap();
            let mm: i64 = cols[2][14..16].parse().unwrap();
            let ss: i64 = cols[2][17..19].parse().unwrap();
            assert_eq!(date[4], b'-');
            let y_adj = if m <= 2 { y - 1 } else { y };
            let era = y_adj.div_euclid(400);
            let yoe = y_adj - era * 400;
            let mp = (m + 9) % 12;
            let doy = (153 * mp + 2) / 5 + d - 1;
            let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
            let days = era * 146097 + doe - 719468;
            rows.push((user, kws, days * 86400 + hh * 3600 + mm * 60 + ss));
        }
        rows
    }

    #[test]
    fn aol_parser_matches_reference_and_sorts_by_time() {
        let text = "AnonID\tQuery\tQueryTime\tItemRank\tClickURL\n\
                    217\tlottery results\t2006-03-03 11:58:51\t1\thttp://www.calottery.com\n\
                    217\tlottery\t2006-03-01 11:58:51\n\
                    1337\tcar parts!\t2006-03-02 09:00:00\n\
                    99\tdog\t2006-04-30 23:59:59\t3\thttp://dogs.example\n";
        let got = parse_log(text.as_bytes(), LogFormat::Aol).unwrap();
        assert_eq!(got.log.user_count(), 3);
        assert_eq!(got.stats.malformed_lines, 0);

        let reference = aol_reference(text);
        assert_eq!(got.stats.entries, reference.len());
        for (user, kws, time) in &reference {
            let found = got
                .log
                .history(user)
                .unwrap()
                .iter()
                .any(|e| e.time == *time && e.query == *kws);
            assert!(found, "reference row {user} {kws:?} {time} missing");
        }
        // Per-user histories sorted by time.
        for (_, history) in got.log.users() {
            assert!(history.windows(2).all(|w| w[0].time <= w[1].time));
        }
        // User 217's earlier query comes first even though the file
        // lists it second.
        let h217 = got.log.history("217").unwrap();
        assert_eq!(h217[0].query, vec!["lottery"]);
        assert_eq!(h217[1].query, vec!["lottery", "results"]);
        assert_eq!(h217[1].clicks, vec!["http://www.calottery.com"]);
    }
}
