//! CSV schemas owned by the command line tool.

use std::io::{Read, Write};

use amsp_core::estimator::FilterRun;
use amsp_core::machine::StateVector;
use amsp_core::{Error, Result};

pub const ESTIMATES_HEADER: [&str; 9] =
    ["t", "delta", "domega", "eq_p", "ed_p", "var_delta", "var_domega", "var_eq_p", "var_ed_p"];
pub const TRACES_HEADER: [&str; 6] = ["t", "n_phi", "n_h", "sub_n_phi", "sub_n_h", "mp"];

pub fn write_estimates<W: Write>(times: &[f64], run: &FilterRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATES_HEADER)?;
    for (t, b) in times.iter().zip(&run.estimates) {
        let mut row = vec![t.to_string()];
        row.extend(b.mean.iter().map(f64::to_string));
        row.extend(b.cov.diagonal().iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_traces<W: Write>(times: &[f64], run: &FilterRun, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACES_HEADER)?;
    for (k, t) in times.iter().enumerate() {
        let (i, s) = (run.index_trace[k], run.substep_index_trace[k]);
        w.write_record([
            t.to_string(),
            i.n_phi.to_string(),
            i.n_h.to_string(),
            s.n_phi.to_string(),
            s.n_h.to_string(),
            run.mp_trace[k].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct EstimateRow {
    pub t: f64,
    pub mean: StateVector,
    pub variance: [f64; 4],
}

pub struct TraceRow {
    pub t: f64,
    pub n_phi: f64,
    pub n_h: f64,
    pub sub_n_phi: f64,
    pub sub_n_h: f64,
    pub mp: u32,
}

fn rows<R: Read>(input: R, header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut r = csv::Reader::from_reader(input);
    let got: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if got != header {
        return Err(Error::Ingestion { row: 0, reason: format!("expected header {}", header.join(",")) });
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(String::from).collect()))
        .collect()
}

fn num<T: std::str::FromStr>(v: &str, row: usize) -> Result<T> {
    v.parse().map_err(|_| Error::Ingestion { row, reason: format!("cannot parse `{v}`") })
}

pub fn read_estimates<R: Read>(input: R) -> Result<Vec<EstimateRow>> {
    rows(input, &ESTIMATES_HEADER)?
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let v: Vec<f64> = r.iter().map(|s| num(s, k + 1)).collect::<Result<_>>()?;
            Ok(EstimateRow {
                t: v[0],
                mean: StateVector::new(v[1], v[2], v[3], v[4]),
                variance: [v[5], v[6], v[7], v[8]],
            })
        })
        .collect()
}

pub fn read_traces<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    rows(input, &TRACES_HEADER)?
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(TraceRow {
                t: num(&r[0], k + 1)?,
                n_phi: num(&r[1], k + 1)?,
                n_h: num(&r[2], k + 1)?,
                sub_n_phi: num(&r[3], k + 1)?,
                sub_n_h: num(&r[4], k + 1)?,
                mp: num(&r[5], k + 1)?,
            })
        })
        .collect()
}

/// One row of `mmse.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseRow {
    pub mode: String,
    pub state: String,
    pub segment: String,
    pub mmse: f64,
}

pub fn read_mmse<R: Read>(input: R) -> Result<Vec<MmseRow>> {
    rows(input, &["mode", "state", "segment", "mMSE"])?
        .into_iter()
        .enumerate()
        .map(|(k, mut r)| {
            let mmse = num(&r[3], k + 1)?;
            r.truncate(3);
            let [mode, state, segment]: [String; 3] = r.try_into().expect("three columns");
            Ok(MmseRow { mode, state, segment, mmse })
        })
        .collect()
}

/// One row of `timing.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub mode: String,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn read_timing<R: Read>(input: R) -> Result<Vec<TimingRow>> {
    rows(input, &["mode", "mean_s", "min_s", "max_s"])?
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(TimingRow {
                mode: r[0].clone(),
                mean: num(&r[1], k + 1)?,
                min: num(&r[2], k + 1)?,
                max: num(&r[3], k + 1)?,
            })
        })
        .collect()
}
