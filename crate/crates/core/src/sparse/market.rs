//! Matrix Market coordinate format (`real general`, 1-based indices).

use std::io::{BufRead, Write};

use super::SparseMatrix;
use crate::error::{Error, Result};

pub const HEADER: &str = "%%MatrixMarket matrix coordinate real general";

pub fn write<W: Write>(m: &SparseMatrix, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "{} {} {}", m.n_rows(), m.n_cols(), m.nnz())?;
    for (r, c, v) in m.iter() {
        // shortest round-trip representation keeps output byte-stable
        writeln!(out, "{} {} {:?}", r + 1, c + 1, v)?;
    }
    Ok(())
}

pub fn read<R: BufRead>(input: R, source: &str) -> Result<SparseMatrix> {
    let err = |line: usize, message: String| Error::Parse {
        location: format!("{source}:{line}"),
        message,
    };
    let mut lines = input.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let header = header?;
    let lower = header.to_ascii_lowercase();
    let tokens: Vec<&str> = lower.split_whitespace().collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(err(1, format!("not a Matrix Market header: {header}")));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" || tokens[4] != "general" {
        return Err(err(1, "only 'coordinate real general' matrices are supported".into()));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut trips = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(err(lineno, "expected 'rows cols nnz'".into()));
                }
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|e| err(lineno, format!("bad size field '{s}': {e}")))
                };
                size = Some((p(fields[0])?, p(fields[1])?, p(fields[2])?));
            }
            Some((nr, nc, _)) => {
                if fields.len() != 3 {
                    return Err(err(lineno, "expected 'row col value'".into()));
                }
                let r: usize = fields[0]
                    .parse()
                    .map_err(|e| err(lineno, format!("bad row index: {e}")))?;
                let c: usize = fields[1]
                    .parse()
                    .map_err(|e| err(lineno, format!("bad column index: {e}")))?;
                let v: f64 = fields[2].parse().map_err(|e| err(lineno, format!("bad value: {e}")))?;
                if r == 0 || c == 0 || r > nr || c > nc {
                    return Err(err(
                        lineno,
                        format!("index ({r}, {c}) outside {nr}x{nc} (indices are 1-based)"),
                    ));
                }
                trips.push((r - 1, c - 1, v));
            }
        }
    }
    let (nr, nc, nnz) = size.ok_or_else(|| err(1, "missing size line".into()))?;
    if trips.len() != nnz {
        return Err(err(1, format!("header declares {nnz} entries, found {}", trips.len())));
    }
    SparseMatrix::from_triplets(nr, nc, trips)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let m = SparseMatrix::from_triplets(3, 2, vec![(0, 1, 0.25), (2, 0, -1.5e-7)]).unwrap();
        let mut buf = Vec::new();
        write(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(HEADER));
        assert!(text.contains("1 2 0.25"));
        let back = read(&buf[..], "mem").unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_zero_based_index() {
        let text = format!("{HEADER}\n2 2 1\n0 1 1.0\n");
        let e = read(text.as_bytes(), "w.mtx").unwrap_err();
        assert!(e.to_string().contains("w.mtx:3"));
    }

    #[test]
    fn rejects_count_mismatch() {
        let text = format!("{HEADER}\n% comment\n2 2 2\n1 1 1.0\n");
        assert!(read(text.as_bytes(), "w.mtx").is_err());
    }
}
