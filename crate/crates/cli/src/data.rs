//! Observation files: CSV with columns x,y,replicate,value.

use ratfield::{Error, Result};
use std::collections::BTreeMap;
use std::path::Path;

/// Locations shared by all replicates and the replicate-major values.
pub fn read_observations(path: &Path) -> Result<(Vec<[f64; 2]>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse(format!("missing column {name}")))
    };
    let (cx, cy, cr, cv) = (col("x")?, col("y")?, col("replicate")?, col("value")?);
    let mut reps: BTreeMap<u64, Vec<([f64; 2], f64)>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("");
            s.parse::<f64>().map_err(|_| Error::Parse(format!("record {}: bad number {s:?}", line + 1)))
        };
        let r = rec
            .get(cr)
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| Error::Parse(format!("record {}: bad replicate index", line + 1)))?;
        reps.entry(r).or_default().push(([num(cx)?, num(cy)?], num(cv)?));
    }
    let first = reps.values().next().ok_or_else(|| Error::Invalid("no observations".into()))?;
    let locs: Vec<[f64; 2]> = first.iter().map(|(p, _)| *p).collect();
    let mut y = Vec::with_capacity(reps.len());
    for (r, rows) in &reps {
        if rows.len() != locs.len() || rows.iter().zip(&locs).any(|((p, _), q)| p != q) {
            return Err(Error::Invalid(format!("replicate {r} does not share the locations of the first replicate")));
        }
        y.push(rows.iter().map(|(_, v)| *v).collect());
    }
    Ok((locs, y))
}
