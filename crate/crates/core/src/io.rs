//! CSV encoding of per-particle vector histories (`step,time,particle_id,x,y`).
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits.

use crate::dynamics::{DynamicsError, ParticleState};
use crate::forces::Vec2;
use std::io::{Read, Write};
use thiserror::Error;

pub const VECTOR_HEADER: [&str; 5] = ["step", "time", "particle_id", "x", "y"];

#[derive(Debug, Error)]
pub enum CsvInputError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: cannot parse {field:?}")]
    Parse { line: usize, field: String },
    #[error("no rows")]
    Empty,
    #[error(transparent)]
    State(#[from] DynamicsError),
}

/// One row of a vector-history CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorRow {
    pub step: usize,
    pub time: f64,
    pub particle_id: usize,
    pub value: Vec2,
}

pub fn write_vectors_csv<'a, W, I>(out: W, rows: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (usize, f64, &'a [Vec2])>,
{
    let mut w = csv::Writer::from_writer(out);
    w.write_record(VECTOR_HEADER)?;
    for (step, time, values) in rows {
        let (s, t) = (step.to_string(), time.to_string());
        for (i, v) in values.iter().enumerate() {
            w.write_record([s.as_str(), t.as_str(), &i.to_string(), &v.x.to_string(), &v.y.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn column(headers: &csv::StringRecord, name: &'static str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

fn parse<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, line: usize) -> Result<T, CsvInputError> {
    let field = rec.get(idx).unwrap_or("").trim();
    field.parse().map_err(|_| CsvInputError::Parse { line, field: field.to_string() })
}

/// Reads every row of a vector-history CSV.
pub fn read_vectors_csv<R: Read>(input: R) -> Result<Vec<VectorRow>, CsvInputError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let cx = column(&headers, "x").ok_or(CsvInputError::MissingColumn("x"))?;
    let cy = column(&headers, "y").ok_or(CsvInputError::MissingColumn("y"))?;
    let cstep = column(&headers, "step");
    let ctime = column(&headers, "time");
    let cid = column(&headers, "particle_id");
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        rows.push(VectorRow {
            step: cstep.map(|c| parse(&rec, c, line)).transpose()?.unwrap_or(0),
            time: ctime.map(|c| parse(&rec, c, line)).transpose()?.unwrap_or(0.0),
            particle_id: cid.map(|c| parse(&rec, c, line)).transpose()?.unwrap_or(k),
            value: Vec2::new(parse(&rec, cx, line)?, parse(&rec, cy, line)?),
        });
    }
    Ok(rows)
}

/// Reads a particle state from a CSV with `x,y` columns. If a `step` column
/// is present only the rows of the largest step are used.
pub fn read_positions_csv<R: Read>(input: R) -> Result<ParticleState, CsvInputError> {
    let rows = read_vectors_csv(input)?;
    let last = rows.iter().map(|r| r.step).max().ok_or(CsvInputError::Empty)?;
    let mut picked: Vec<_> = rows.into_iter().filter(|r| r.step == last).collect();
    picked.sort_by_key(|r| r.particle_id);
    Ok(ParticleState::new(picked.into_iter().map(|r| r.value).collect())?)
}

pub fn write_state_csv<W: Write>(out: W, state: &ParticleState) -> csv::Result<()> {
    write_vectors_csv(out, [(0usize, 0.0, state.positions())])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_round_trip_bitwise() {
        let s = ParticleState::new(vec![
            Vec2::new(0.1, 0.7),
            Vec2::new(1.0 / 3.0, 0.999_999_999_999_9),
            Vec2::new(0.0, 5e-324),
        ])
        .unwrap();
        let mut buf = Vec::new();
        write_state_csv(&mut buf, &s).unwrap();
        let back = read_positions_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn reads_plain_xy_and_last_step() {
        let plain = "x,y\n0.1,0.2\n0.3,0.4\n";
        let s = read_positions_csv(plain.as_bytes()).unwrap();
        assert_eq!(s.positions()[1], Vec2::new(0.3, 0.4));

        let hist = "step,time,particle_id,x,y\n0,0,0,0.1,0.1\n0,0,1,0.2,0.2\n5,1,1,0.6,0.6\n5,1,0,0.5,0.5\n";
        let s = read_positions_csv(hist.as_bytes()).unwrap();
        assert_eq!(s.positions(), &[Vec2::new(0.5, 0.5), Vec2::new(0.6, 0.6)]);
    }

    #[test]
    fn reports_bad_input() {
        assert!(matches!(read_positions_csv("a,b\n1,2\n".as_bytes()), Err(CsvInputError::MissingColumn("x"))));
        assert!(matches!(read_positions_csv("x,y\n".as_bytes()), Err(CsvInputError::Empty)));
        assert!(matches!(read_positions_csv("x,y\n0.1,zz\n".as_bytes()), Err(CsvInputError::Parse { line: 2, .. })));
        assert!(matches!(read_positions_csv("x,y\n1.5,0.1\n".as_bytes()), Err(CsvInputError::State(_))));
    }
}
