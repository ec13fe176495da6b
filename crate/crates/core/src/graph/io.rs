//! Matrix-list files: one comment header line, then one record per matrix:
//! `k,N,a_00,a_01,…,a_{N−1,N−1}` in row-major order.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::GraphSequence;
use crate::error::{Error, Result};
use crate::output::write_atomic;

pub const MATRIX_LIST_HEADER: &str = "# fixnet matrix-list v1";

/// Writes `A_0, …, A_{count−1}` to `path`.
pub fn write_matrix_list(path: &Path, g: &GraphSequence, count: usize) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "{MATRIX_LIST_HEADER}")?;
    for (k, a) in g.prefix(count).iter().enumerate() {
        write!(buf, "{k},{}", a.nrows())?;
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                write!(buf, ",{}", a[(i, j)])?;
            }
        }
        writeln!(buf)?;
    }
    write_atomic(path, &buf)
}

/// Reads a matrix-list file back into `(k, A_k)` pairs.
pub fn read_matrix_list(path: &Path) -> Result<Vec<(usize, DMatrix<f64>)>> {
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if lineno == 0 {
            if line.trim() != MATRIX_LIST_HEADER {
                return Err(Error::Parse(format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| Error::Parse(format!("line {}: {what}", lineno + 1));
        let mut fields = line.split(',');
        let k: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| bad("bad index"))?;
        let n: usize = fields
            .next()
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| bad("bad size"))?;
        let vals = fields
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad("bad entry")))
            .collect::<Result<Vec<_>>>()?;
        if vals.len() != n * n {
            return Err(bad("entry count does not match size"));
        }
        out.push((k, DMatrix::from_row_slice(n, n, &vals)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("graph.csv");
        let g = GraphSequence::from_spec(&GraphSpec::RandomPool {
            agents: 3,
            templates: None,
            seed: 4,
        })
        .unwrap();
        write_matrix_list(&path, &g, 12).unwrap();
        let back = read_matrix_list(&path).unwrap();
        assert_eq!(back.len(), 12);
        for (k, a) in back {
            assert_eq!(a, g.matrix(k));
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "nope\n0,1,1\n").unwrap();
        assert!(read_matrix_list(&path).is_err());
    }
}
