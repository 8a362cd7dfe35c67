use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::RateReport;
use crate::pgm::Method;

/// Decimal places of every real-valued CSV field.
pub const CSV_DECIMALS: usize = 12;

pub const ITERATION_HEADER: [&str; 10] = [
    "run_id",
    "realization_id",
    "method",
    "iteration",
    "R0",
    "MI",
    "MI_stderr",
    "MI_lower_bound",
    "gaussian_rate",
    "f_log",
];

pub const SUMMARY_HEADER: [&str; 15] = [
    "run_id",
    "realization_id",
    "method",
    "iterations",
    "termination",
    "R0",
    "MI",
    "MI_stderr",
    "MI_lower_bound",
    "gaussian_rate",
    "f_log",
    "gaussian_reference",
    "unit_modulus_residual",
    "power_residual",
    "theta_gradient_evals",
];

/// A channel realization index, or the across-realization mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RealizationId {
    Index(usize),
    Mean,
}

impl fmt::Display for RealizationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RealizationId::Index(i) => write!(f, "{i}"),
            RealizationId::Mean => f.write_str("mean"),
        }
    }
}

impl FromStr for RealizationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mean" {
            return Ok(RealizationId::Mean);
        }
        s.parse().map(RealizationId::Index).map_err(|_| Error::Config(format!("bad realization id `{s}`")))
    }
}

/// Rates at one iterate of one optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: String,
    pub realization: RealizationId,
    pub method: Method,
    /// 1-based and contiguous within a run.
    pub iteration: usize,
    pub rates: RateReport,
}

/// Final state of one optimizer run, re-evaluated with the final MI budget.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub run_id: String,
    pub realization: RealizationId,
    pub method: Method,
    pub iterations: usize,
    pub termination: String,
    pub rates: RateReport,
    /// Water-filling Gaussian capacity of `H(θ)` at the final θ.
    pub gaussian_reference: f64,
    pub unit_modulus_residual: f64,
    pub power_residual: f64,
    pub theta_gradient_evals: usize,
}

fn fmt_real(x: f64) -> String {
    format!("{x:.prec$}", prec = CSV_DECIMALS)
}

fn rate_fields(r: &RateReport) -> [String; 6] {
    [r.r0, r.mi, r.mi_stderr, r.mi_lower_bound, r.gaussian_rate, r.f_log].map(fmt_real)
}

fn field(rec: &csv::StringRecord, idx: usize) -> Result<&str> {
    rec.get(idx).ok_or_else(|| Error::Config(format!("CSV row has no column {idx}")))
}

fn parse_field<T: FromStr>(rec: &csv::StringRecord, idx: usize) -> Result<T> {
    let raw = field(rec, idx)?;
    raw.parse().map_err(|_| Error::Config(format!("cannot parse CSV field `{raw}` in column {idx}")))
}

fn parse_rates(rec: &csv::StringRecord, first: usize) -> Result<RateReport> {
    Ok(RateReport {
        r0: parse_field(rec, first)?,
        mi: parse_field(rec, first + 1)?,
        mi_stderr: parse_field(rec, first + 2)?,
        mi_lower_bound: parse_field(rec, first + 3)?,
        gaussian_rate: parse_field(rec, first + 4)?,
        f_log: parse_field(rec, first + 5)?,
    })
}

fn check_header(reader: &mut csv::Reader<impl Read>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    Ok(())
}

pub fn write_records<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ITERATION_HEADER)?;
    for r in records {
        let mut row = vec![r.run_id.clone(), r.realization.to_string(), r.method.to_string(), r.iteration.to_string()];
        row.extend(rate_fields(&r.rates));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &ITERATION_HEADER)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(RunRecord {
                run_id: field(&rec, 0)?.to_string(),
                realization: parse_field(&rec, 1)?,
                method: parse_field(&rec, 2)?,
                iteration: parse_field(&rec, 3)?,
                rates: parse_rates(&rec, 4)?,
            })
        })
        .collect()
}

pub fn write_summaries<W: Write>(records: &[SummaryRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    for r in records {
        let mut row = vec![
            r.run_id.clone(),
            r.realization.to_string(),
            r.method.to_string(),
            r.iterations.to_string(),
            r.termination.clone(),
        ];
        row.extend(rate_fields(&r.rates));
        row.extend([r.gaussian_reference, r.unit_modulus_residual, r.power_residual].map(fmt_real));
        row.push(r.theta_gradient_evals.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries<R: Read>(input: R) -> Result<Vec<SummaryRecord>> {
    let mut reader = csv::Reader::from_reader(input);
    check_header(&mut reader, &SUMMARY_HEADER)?;
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            Ok(SummaryRecord {
                run_id: field(&rec, 0)?.to_string(),
                realization: parse_field(&rec, 1)?,
                method: parse_field(&rec, 2)?,
                iterations: parse_field(&rec, 3)?,
                termination: field(&rec, 4)?.to_string(),
                rates: parse_rates(&rec, 5)?,
                gaussian_reference: parse_field(&rec, 11)?,
                unit_modulus_residual: parse_field(&rec, 12)?,
                power_residual: parse_field(&rec, 13)?,
                theta_gradient_evals: parse_field(&rec, 14)?,
            })
        })
        .collect()
}

/// Writes per-iteration records to `path`.
pub fn emit_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    write_records(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn emit_summary_csv(records: &[SummaryRecord], path: &Path) -> Result<()> {
    write_summaries(records, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_records(path: &Path) -> Result<Vec<RunRecord>> {
    read_records(std::fs::File::open(path)?)
}

pub fn load_summaries(path: &Path) -> Result<Vec<SummaryRecord>> {
    read_summaries(std::fs::File::open(path)?)
}
