//! File formats: JSON-lines and CSV histograms, the sanitized-release
//! JSON schema, and the CSV row shapes used by evaluation sweeps.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::plan::ZealousPlan;
use crate::sanitizer::SanitizedHistogram;
use crate::searchlog::{Histogram, ItemKind};

/// One `{"item": ..., "count": ...}` line of a histogram export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRecord {
    pub item: String,
    pub count: u64,
}

pub fn write_histogram_jsonl<W: Write>(hist: &Histogram, mut out: W) -> io::Result<()> {
    for (item, count) in hist.iter() {
        let record = HistogramRecord { item: item.to_string(), count };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_histogram_jsonl<R: Read>(kind: ItemKind, reader: R) -> io::Result<Histogram> {
    let mut counts = BTreeMap::new();
    for line in BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: HistogramRecord = serde_json::from_str(&line)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        counts.insert(record.item, record.count);
    }
    Ok(Histogram::from_counts(kind, counts))
}

pub fn write_histogram_csv<W: Write>(hist: &Histogram, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (item, count) in hist.iter() {
        w.serialize(HistogramRecord { item: item.to_string(), count })?;
    }
    w.flush()
}

/// The plan block of the sanitized-release schema. The user count is
/// serialized under the key `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub m: u32,
    pub lambda: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_prime: f64,
    pub delta_prime: f64,
    #[serde(rename = "U")]
    pub users: u64,
}

impl From<&ZealousPlan> for PlanJson {
    fn from(p: &ZealousPlan) -> Self {
        PlanJson {
            m: p.m,
            lambda: p.lambda,
            tau: p.tau,
            tau_prime: p.tau_prime,
            epsilon: p.epsilon,
            delta: p.delta,
            epsilon_prime: p.epsilon_prime,
            delta_prime: p.delta_prime,
            users: p.users,
        }
    }
}

impl From<&PlanJson> for ZealousPlan {
    fn from(p: &PlanJson) -> Self {
        ZealousPlan {
            m: p.m,
            lambda: p.lambda,
            tau: p.tau,
            tau_prime: p.tau_prime,
            users: p.users,
            epsilon: p.epsilon,
            delta: p.delta,
            epsilon_prime: p.epsilon_prime,
            delta_prime: p.delta_prime,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedEntryJson {
    pub item: String,
    pub noisy_count: f64,
}

/// Sanitized-release schema: kind, plan, entries, plus the seed so the
/// release can be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SanitizedJson {
    pub kind: ItemKind,
    pub plan: PlanJson,
    pub entries: Vec<SanitizedEntryJson>,
    pub seed: u64,
}

impl From<&SanitizedHistogram> for SanitizedJson {
    fn from(s: &SanitizedHistogram) -> Self {
        SanitizedJson {
            kind: s.kind,
            plan: (&s.plan).into(),
            entries: s
                .entries
                .iter()
                .map(|(item, &noisy_count)| SanitizedEntryJson {
                    item: item.clone(),
                    noisy_count,
                })
                .collect(),
            seed: s.seed,
        }
    }
}

impl From<&SanitizedJson> for SanitizedHistogram {
    fn from(s: &SanitizedJson) -> Self {
        SanitizedHistogram {
            kind: s.kind,
            entries: s.entries.iter().map(|e| (e.item.clone(), e.noisy_count)).collect(),
            plan: (&s.plan).into(),
            seed: s.seed,
        }
    }
}

pub fn write_sanitized_json<W: Write>(s: &SanitizedHistogram, mut out: W) -> io::Result<()> {
    let json = SanitizedJson::from(s);
    serde_json::to_writer_pretty(&mut out, &json)?;
    out.write_all(b"\n")
}

pub fn read_sanitized_json<R: Read>(reader: R) -> io::Result<SanitizedHistogram> {
    let json: SanitizedJson = serde_json::from_reader(reader)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    Ok((&json).into())
}

/// CSV variant of the sanitized release: one `#`-prefixed plan line,
/// then `item,noisy_count` rows.
pub fn write_sanitized_csv<W: Write>(s: &SanitizedHistogram, mut out: W) -> io::Result<()> {
    writeln!(
        out,
        "# kind={} m={} lambda={} tau={} tau_prime={} epsilon={} delta={} epsilon_prime={} delta_prime={} U={} seed={}",
        s.kind,
        s.plan.m,
        s.plan.lambda,
        s.plan.tau,
        s.plan.tau_prime,
        s.plan.epsilon,
        s.plan.delta,
        s.plan.epsilon_prime,
        s.plan.delta_prime,
        s.plan.users,
        s.seed
    )?;
    let mut w = csv::Writer::from_writer(out);
    for (item, &noisy_count) in &s.entries {
        w.serialize(SanitizedEntryJson { item: item.clone(), noisy_count })?;
    }
    w.flush()
}

/// One row of an evaluation sweep, keyed by item kind, algorithm, and
/// whichever of `m`, `epsilon`, `k`, `j` the sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub kind: String,
    pub algorithm: String,
    pub m: Option<u32>,
    pub epsilon: Option<f64>,
    pub k: Option<u32>,
    pub j: Option<usize>,
    pub metric: String,
    pub value: f64,
}

pub fn write_metric_rows<W: Write>(rows: &[MetricRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

/// One row of an application evaluation: `(algorithm, parameter,
/// metric, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppRow {
    pub algorithm: String,
    pub parameter: String,
    pub metric: String,
    pub value: f64,
}

pub fn write_app_rows<W: Write>(rows: &[AppRow], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()
}

/// Posting lengths as `keyword,length` CSV with a header.
pub fn read_posting_lengths<R: Read>(reader: R) -> io::Result<BTreeMap<String, u64>> {
    let mut lengths = BTreeMap::new();
    let mut r = csv::Reader::from_reader(reader);
    for record in r.deserialize() {
        let (keyword, length): (String, u64) = record?;
        lengths.insert(keyword, length);
    }
    Ok(lengths)
}

pub fn write_posting_lengths<W: Write>(
    lengths: &BTreeMap<String, u64>,
    out: W,
) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["keyword", "length"])?;
    for (keyword, length) in lengths {
        w.write_record([keyword.as_str(), &length.to_string()])?;
    }
    w.flush()
}

/// Write a file via a temporary sibling and an atomic rename.
pub fn atomic_write<P: AsRef<Path>>(path: P, contents: &[u8]) -> io::Result<()> {
    let path = path.as_ref();
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}
