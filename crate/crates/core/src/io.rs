//! CSV schemas for trajectories and PMU measurement streams.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! reading a file back reproduces the in-memory values bit for bit.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::machine::{InputVector, MeasurementVector, StateVector};
use crate::pmu::MeasurementSeries;
use crate::scenario::TruthTrajectory;

pub const TRAJECTORY_HEADER: [&str; 11] =
    ["t", "delta", "domega", "eq_p", "ed_p", "T_m", "E_fd", "i_R", "i_I", "e_R", "e_I"];

pub const MEASUREMENT_HEADER: [&str; 7] = ["t", "e_R", "e_I", "i_R", "i_I", "T_m", "E_fd"];

/// Relative tolerance on the time grid spacing, in seconds.
pub const GRID_TOLERANCE: f64 = 1e-9;

pub fn write_trajectory<W: Write>(traj: &TruthTrajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for k in 0..traj.len() {
        let (x, u, z) = (&traj.states[k], &traj.inputs[k], &traj.measurements[k]);
        let row = [
            traj.times[k], x.delta, x.domega, x.eq_p, x.ed_p, u.t_m, u.e_fd, u.i_r, u.i_i, z.e_r,
            z.e_i,
        ];
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_measurements<W: Write>(series: &MeasurementSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(MEASUREMENT_HEADER)?;
    for k in 0..series.len() {
        let (z, u) = (&series.z_seq[k], &series.u_seq[k]);
        let row = [series.times[k], z.e_r, z.e_i, u.i_r, u.i_i, u.t_m, u.e_fd];
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a CSV with the given required columns (any order, extra columns
/// ignored) into rows of floats ordered like `columns`.
fn read_table<R: Read>(input: R, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers().map_err(|e| Error::Ingestion { row: 0, reason: e.to_string() })?.clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let mut positions = Vec::with_capacity(columns.len());
    for col in columns {
        match index.get(col) {
            Some(&i) => positions.push(i),
            None => {
                return Err(Error::Ingestion { row: 0, reason: format!("missing column `{col}`") })
            }
        }
    }
    let mut rows = Vec::new();
    for (n, record) in reader.records().enumerate() {
        let row = n + 1;
        let record = record.map_err(|e| Error::Ingestion { row, reason: e.to_string() })?;
        let mut values = Vec::with_capacity(columns.len());
        for (col, &i) in columns.iter().zip(&positions) {
            let raw = record
                .get(i)
                .ok_or_else(|| Error::Ingestion { row, reason: format!("missing value for `{col}`") })?;
            let v: f64 = raw.trim().parse().map_err(|_| Error::Ingestion {
                row,
                reason: format!("cannot parse `{raw}` in column `{col}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion { row, reason: format!("non-finite value in column `{col}`") });
            }
            values.push(v);
        }
        rows.push(values);
    }
    check_grid(rows.iter().map(|r| r[0]))?;
    Ok(rows)
}

fn check_grid(times: impl Iterator<Item = f64>) -> Result<()> {
    let times: Vec<f64> = times.collect();
    if times.len() < 2 {
        return Ok(());
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Ingestion { row: 2, reason: "times must be strictly increasing".into() });
    }
    for (k, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - dt).abs() > GRID_TOLERANCE {
            return Err(Error::Ingestion {
                row: k + 2,
                reason: format!("non-uniform time grid: step {} differs from {dt}", w[1] - w[0]),
            });
        }
    }
    Ok(())
}

pub fn read_trajectory<R: Read>(input: R) -> Result<TruthTrajectory> {
    let rows = read_table(input, &TRAJECTORY_HEADER)?;
    let mut traj = TruthTrajectory::default();
    for r in rows {
        traj.push(
            r[0],
            StateVector::new(r[1], r[2], r[3], r[4]),
            InputVector::new(r[5], r[6], r[7], r[8]),
            MeasurementVector::new(r[9], r[10]),
        );
    }
    Ok(traj)
}

/// Reads a measurement stream; `truth_ref` is left empty.
pub fn read_measurements<R: Read>(input: R) -> Result<MeasurementSeries> {
    let rows = read_table(input, &MEASUREMENT_HEADER)?;
    let mut series = MeasurementSeries::default();
    for r in rows {
        series.times.push(r[0]);
        series.z_seq.push(MeasurementVector::new(r[1], r[2]));
        series.u_seq.push(InputVector::new(r[5], r[6], r[3], r[4]));
    }
    Ok(series)
}

/// Reads and validates an external trajectory file.
pub fn ingest_trajectory(path: &Path) -> Result<TruthTrajectory> {
    read_trajectory(File::open(path)?)
}

pub fn save_trajectory(traj: &TruthTrajectory, path: &Path) -> Result<()> {
    write_trajectory(traj, File::create(path)?)
}

pub fn load_measurements(path: &Path) -> Result<MeasurementSeries> {
    read_measurements(File::open(path)?)
}

pub fn save_measurements(series: &MeasurementSeries, path: &Path) -> Result<()> {
    write_measurements(series, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn sample() -> TruthTrajectory {
        let mut t = TruthTrajectory::default();
        for k in 0..5 {
            let f = k as f64;
            t.push(
                f * 0.001,
                StateVector::new(0.8 + 1e-7 * f, -3.2e-5 * f, 1.0 / 3.0, 0.1 + f),
                InputVector::new(0.9, 1.7, 0.61 * f, -0.2),
                MeasurementVector::new(0.99, 0.1 / 7.0),
            );
        }
        t
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        let t = sample();
        let mut buf = Vec::new();
        write_trajectory(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,delta,domega,eq_p,ed_p,T_m,E_fd,i_R,i_I,e_R,e_I\n"));
        assert_eq!(read_trajectory(buf.as_slice()).unwrap(), t);
    }

    #[test]
    fn missing_column_is_named() {
        let csv = "t,delta,domega,eq_p,ed_p,T_m,E_fd,i_R,i_I,e_R\n0,0,0,0,0,0,0,0,0,0\n";
        match read_trajectory(csv.as_bytes()) {
            Err(Error::Ingestion { row: 0, reason }) => assert!(reason.contains("e_I"), "{reason}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_rows_are_located() {
        let head = "t,e_R,e_I,i_R,i_I,T_m,E_fd\n";
        let nonuniform = format!("{head}0,1,0,0,0,0,0\n0.04,1,0,0,0,0,0\n0.1,1,0,0,0,0,0\n");
        assert!(matches!(read_measurements(nonuniform.as_bytes()), Err(Error::Ingestion { row: 3, .. })));
        let nan = format!("{head}0,1,0,0,0,0,0\n0.04,NaN,0,0,0,0,0\n");
        assert!(matches!(read_measurements(nan.as_bytes()), Err(Error::Ingestion { row: 2, .. })));
        let junk = format!("{head}0,1,0,zz,0,0,0\n");
        assert!(matches!(read_measurements(junk.as_bytes()), Err(Error::Ingestion { row: 1, .. })));
    }

    #[test]
    fn measurement_columns_map_to_inputs() {
        let csv = "t,e_R,e_I,i_R,i_I,T_m,E_fd\n0,1,2,3,4,5,6\n";
        let s = read_measurements(csv.as_bytes()).unwrap();
        assert_eq!(s.z_seq[0], MeasurementVector::new(1.0, 2.0));
        assert_eq!(s.u_seq[0], InputVector::new(5.0, 6.0, 3.0, 4.0));
        assert!(s.truth_ref.is_none());
    }

    proptest! {
        #[test]
        fn measurement_round_trip(values in proptest::collection::vec(proptest::array::uniform6(-1e3f64..1e3), 1..20)) {
            let mut s = MeasurementSeries::default();
            for (k, v) in values.iter().enumerate() {
                s.times.push(k as f64 * 0.04);
                s.z_seq.push(MeasurementVector::new(v[0], v[1]));
                s.u_seq.push(InputVector::new(v[2], v[3], v[4], v[5]));
            }
            let mut buf = Vec::new();
            write_measurements(&s, &mut buf).unwrap();
            let back = read_measurements(buf.as_slice()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
