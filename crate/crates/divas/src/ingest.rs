//! Headerless numeric CSV in and out, plus block preprocessing.
//!
//! Rows are traits and columns are objects.

use crate::config::{BlockSpec, RunConfig};
use crate::error::{CliError, Result};
use divas_core::preprocess::{preprocess, RemovedMeans};
use divas_core::signal::DataBlock;
use divas_core::DMatrix;
use std::io::Write;
use std::path::Path;

fn ingest_err(msg: impl Into<String>) -> CliError {
    CliError::Ingest(msg.into())
}

/// Parse a rectangular numeric CSV held in memory. `what` names the
/// source in error messages.
pub fn parse_matrix(text: &str, what: &str) -> Result<DMatrix<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| ingest_err(format!("{what}: {e}")))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(ingest_err(format!("{what}: row {} has {} fields, expected {c}", i + 1, rec.len())));
            }
            _ => {}
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| ingest_err(format!("{what}: row {} column {} is not numeric: {cell:?}", i + 1, j + 1)))?;
            if !v.is_finite() {
                return Err(ingest_err(format!("{what}: row {} column {} is not finite", i + 1, j + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    let Some(cols) = cols else { return Err(ingest_err(format!("{what}: no data"))) };
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| ingest_err(format!("cannot read {}: {e}", path.display())))?;
    parse_matrix(&text, &path.display().to_string())
}

/// Shortest round-trip decimal for every entry, so a written matrix reads
/// back bit for bit.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| CliError::output(path.display(), e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for j in 0..m.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&m[(i, j)].to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(|e| CliError::output(path.display(), e))?;
    }
    w.flush().map_err(|e| CliError::output(path.display(), e))
}

/// Read, transform and center one configured block.
pub fn ingest(cfg: &RunConfig, spec: &BlockSpec) -> Result<(DataBlock, RemovedMeans)> {
    let raw = read_matrix(&cfg.block_path(spec))?;
    prepare(&raw, spec)
}

pub fn prepare(raw: &DMatrix<f64>, spec: &BlockSpec) -> Result<(DataBlock, RemovedMeans)> {
    let (m, removed) = preprocess(raw, spec.logit_transform, spec.trait_centered, spec.object_centered)
        .map_err(|e| ingest_err(format!("{}: {e}", spec.name)))?;
    let block = DataBlock::with_flags(spec.name.clone(), m, spec.trait_centered, spec.object_centered, spec.logit_transform)
        .map_err(|e| ingest_err(format!("{}: {e}", spec.name)))?;
    Ok((block, removed))
}

/// Ingest every block and check they share one object set.
pub fn ingest_all(cfg: &RunConfig) -> Result<Vec<(DataBlock, RemovedMeans)>> {
    let out = cfg.blocks.iter().map(|b| ingest(cfg, b)).collect::<Result<Vec<_>>>()?;
    let n = out[0].0.objects();
    if let Some((b, _)) = out.iter().find(|(b, _)| b.objects() != n) {
        return Err(ingest_err(format!("block {} has {} objects (columns), expected {n}", b.name(), b.objects())));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(logit: bool, tc: bool, oc: bool) -> BlockSpec {
        BlockSpec { path: "x.csv".into(), name: "x".into(), trait_centered: tc, object_centered: oc, logit_transform: logit }
    }

    #[test]
    fn parses_and_reports_bad_cells() {
        let m = parse_matrix("1, 2,3\n4,5,6\n\n", "t").unwrap();
        assert_eq!(m.shape(), (2, 3));
        assert_eq!(m[(1, 2)], 6.0);
        let ragged = parse_matrix("1,2,3\n4,5\n", "t").unwrap_err().to_string();
        assert!(ragged.contains("row 2"), "{ragged}");
        let bad = parse_matrix("1,2\n3,x\n", "t").unwrap_err().to_string();
        assert!(bad.contains("row 2 column 2"), "{bad}");
        assert!(parse_matrix("", "t").is_err());
        assert!(parse_matrix("1,NaN\n1,2\n", "t").is_err());
    }

    #[test]
    fn write_then_read_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powf(j as f64 + 0.7) / 3.0 - 1e-17);
        write_matrix(&p, &m).unwrap();
        let back = read_matrix(&p).unwrap();
        assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn preprocessing_examples() {
        let constant = DMatrix::from_element(3, 4, 2.5);
        let (b, _) = prepare(&constant, &spec(false, true, true)).unwrap();
        assert!(b.values().amax() < 1e-12);
        let half = DMatrix::from_element(2, 2, 0.5);
        let (b, _) = prepare(&half, &spec(true, false, false)).unwrap();
        assert_eq!(b.values().amax(), 0.0);
        let out = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 1.0, 0.5]);
        let err = prepare(&out, &spec(true, false, false)).unwrap_err().to_string();
        assert!(err.contains("row 2 column 1"), "{err}");
        let centered = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let (b, _) = prepare(&centered, &spec(false, true, true)).unwrap();
        assert!((b.values() - &centered).amax() <= 1e-12);
    }
}
