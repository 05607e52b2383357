//! `n,value` CSV files for sequence-valued inputs and outputs.

use std::path::Path;

use hardyline::sequence::FiniteSeq;
use hardyline::{Error, Result};

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_rows(path: &Path, rows: impl IntoIterator<Item = (u64, f64)>) -> Result<usize> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    w.write_record(["n", "value"]).map_err(|e| io(path, e))?;
    let mut count = 0;
    for (n, v) in rows {
        // `{:?}` keeps round-trip precision and never groups digits
        w.write_record([n.to_string(), format!("{v:?}")]).map_err(|e| io(path, e))?;
        count += 1;
    }
    w.flush().map_err(|e| io(path, e))?;
    Ok(count)
}

/// Rows may come in any order; missing indices are zero.
pub fn read_seq(path: &Path) -> Result<FiniteSeq> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io(path, e))?;
    let mut values: Vec<f64> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io(path, e))?;
        if rec.len() != 2 {
            return Err(Error::Parse {
                token: rec.iter().collect::<Vec<_>>().join(","),
                reason: "expected `n,value`".into(),
            });
        }
        let (n, v) = (&rec[0], &rec[1]);
        let Ok(n) = n.parse::<u64>() else {
            if i == 0 {
                continue;
            }
            return Err(Error::Parse {
                token: n.into(),
                reason: "row index".into(),
            });
        };
        if n == 0 {
            return Err(Error::Parse {
                token: "0".into(),
                reason: "u_0 is pinned to zero; rows start at n = 1".into(),
            });
        }
        let v: f64 = v.parse().map_err(|_| Error::Parse {
            token: v.into(),
            reason: "row value".into(),
        })?;
        if values.len() < n as usize {
            values.resize(n as usize, 0.0);
        }
        values[n as usize - 1] = v;
    }
    FiniteSeq::new(values)
}
