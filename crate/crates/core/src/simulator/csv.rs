//! Path dumps: `t, x1..xN, u1..uP, V, int_l`, one row per grid time. The long layout adds a
//! leading `path_id` column. Values are written with 17 significant digits so they re-parse
//! to the same `f64`.

use super::SdePath;
use crate::{Error, Result};
use std::io::{Read, Write};

fn header(path: &SdePath, with_id: bool) -> Vec<String> {
    let n = path.states.first().map_or(0, |x| x.len());
    let p = path.controls.first().map_or(0, |u| u.len());
    let mut h = Vec::with_capacity(n + p + 4);
    if with_id {
        h.push("path_id".to_string());
    }
    h.push("t".to_string());
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.extend((1..=p).map(|i| format!("u{i}")));
    h.push("V".to_string());
    h.push("int_l".to_string());
    h
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn rows(path: &SdePath, id: Option<usize>) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..path.states.len()).map(move |i| {
        let mut r = Vec::new();
        if let Some(id) = id {
            r.push(id.to_string());
        }
        r.push(num(path.times[i]));
        r.extend(path.states[i].iter().map(|v| num(*v)));
        r.extend(path.controls[i].iter().map(|v| num(*v)));
        r.push(num(path.v_values.get(i).copied().unwrap_or(f64::NAN)));
        r.push(num(path
            .running_l_integral
            .get(i)
            .copied()
            .unwrap_or(f64::NAN)));
        r
    })
}

pub fn write_path_csv<W: Write>(path: &SdePath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(path, false))?;
    for r in rows(path, None) {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

/// All paths in one table, distinguished by `path_id` (the index in `paths`).
pub fn write_long_csv<W: Write>(paths: &[SdePath], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = paths.first() {
        w.write_record(header(first, true))?;
    }
    for (id, p) in paths.iter().enumerate() {
        for r in rows(p, Some(id)) {
            w.write_record(r)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A numeric CSV table.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

pub fn read_csv<R: Read>(input: R) -> Result<CsvTable> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, s)| {
                s.parse::<f64>().map_err(|e| Error::Parse {
                    context: "csv".into(),
                    line: line + 2,
                    column: col + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}
