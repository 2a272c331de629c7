use super::SparseMat;
use crate::error::{Error, Result};
use std::io::{BufRead, Write};

/// Writes coordinate real general Matrix Market (1-based indices).
pub fn write_matrix_market<W: Write>(a: &SparseMat, mut w: W) -> Result<()> {
    writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(w, "{} {} {}", a.nrows(), a.ncols(), a.nnz())?;
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            writeln!(w, "{} {} {:.17e}", i + 1, j + 1, v)?;
        }
    }
    Ok(())
}

/// Reads coordinate Matrix Market; `general` and `symmetric` real or integer.
pub fn read_matrix_market<R: BufRead>(r: R) -> Result<SparseMat> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty Matrix Market file".into()))??;
    let h = header.to_lowercase();
    let tokens: Vec<&str> = h.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" || tokens[2] != "coordinate" {
        return Err(Error::Parse(format!("unsupported Matrix Market header: {header}")));
    }
    if tokens[3] != "real" && tokens[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type {}", tokens[3])));
    }
    let symmetric = match tokens[4] {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::Parse(format!("unsupported symmetry {other}"))),
    };
    let mut size: Option<(usize, usize, usize)> = None;
    let mut trip = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("{s}: {e}")));
        match size {
            None => {
                if parts.len() != 3 {
                    return Err(Error::Parse("bad size line".into()));
                }
                size = Some((parse_usize(parts[0])?, parse_usize(parts[1])?, parse_usize(parts[2])?));
            }
            Some((nr, nc, _)) => {
                if parts.len() != 3 {
                    return Err(Error::Parse(format!("bad entry line: {t}")));
                }
                let i = parse_usize(parts[0])?;
                let j = parse_usize(parts[1])?;
                let v: f64 = parts[2].parse().map_err(|e| Error::Parse(format!("{}: {e}", parts[2])))?;
                if i == 0 || j == 0 || i > nr || j > nc {
                    return Err(Error::Parse(format!("entry ({i}, {j}) out of range")));
                }
                trip.push((i - 1, j - 1, v));
                if symmetric && i != j {
                    trip.push((j - 1, i - 1, v));
                }
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| Error::Parse("missing size line".into()))?;
    let stored = if symmetric { trip.iter().filter(|t| t.0 >= t.1).count() } else { trip.len() };
    if stored != nnz {
        return Err(Error::Parse(format!("expected {nnz} entries, found {stored}")));
    }
    let mut m = SparseMat::from_triplets(nr, nc, &trip)?;
    m.symmetric = symmetric;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_bitwise() {
        let a = SparseMat::from_triplets(3, 4, &[(0, 1, 0.1), (2, 3, -1.0 / 3.0), (1, 0, 7e-300)]).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&a, &mut buf).unwrap();
        let b = read_matrix_market(std::io::Cursor::new(buf)).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(a.indices(), b.indices());
    }
}
