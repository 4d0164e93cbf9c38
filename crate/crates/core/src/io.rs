//! File formats: fragment JSON, COPE CSV with a block sidecar, curve and
//! scan CSVs, and factor dumps.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::{Block, CopeMatrix, Fragment, Labeled};
use crate::quantum::{bloch_state, Ket};
use crate::solvers::{CurveRow, ScanPoint};
use crate::SCHEMA;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FragmentFile {
    #[serde(default)]
    schema: Option<String>,
    dim: usize,
    preparations: Vec<EntryFile>,
    measurements: Vec<EntryFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    label: String,
    #[serde(default)]
    ket: Option<Ket>,
    #[serde(default)]
    bloch: Option<[f64; 2]>,
}

#[derive(Serialize)]
struct FragmentOut<'a> {
    schema: &'static str,
    dim: usize,
    preparations: &'a [Labeled],
    measurements: &'a [Labeled],
}

fn entry_ket(e: EntryFile, dim: usize, field: &str, index: usize) -> Result<Labeled> {
    let ket = match (e.ket, e.bloch) {
        (Some(k), None) => k,
        (None, Some([theta, phi])) => {
            if dim != 2 {
                return Err(Error::DimensionMismatch { expected: dim, found: 2 });
            }
            bloch_state(theta, phi)
        }
        _ => {
            return Err(Error::Parse(format!(
                "{field}[{index}] ({:?}): exactly one of \"ket\" or \"bloch\" is required",
                e.label
            )))
        }
    };
    if ket.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: ket.dim() });
    }
    Ok(Labeled::new(e.label, ket))
}

/// Parses fragment JSON. Syntax errors carry line and column.
pub fn parse_fragment(text: &str) -> Result<Fragment> {
    let file: FragmentFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if let Some(s) = &file.schema {
        if s != SCHEMA {
            return Err(Error::Parse(format!("unsupported schema {s:?}, expected {SCHEMA:?}")));
        }
    }
    if file.dim == 0 {
        return Err(Error::Parse("dim must be positive".into()));
    }
    let dim = file.dim;
    let convert = |list: Vec<EntryFile>, field: &str| -> Result<Vec<Labeled>> {
        list.into_iter().enumerate().map(|(i, e)| entry_ket(e, dim, field, i)).collect()
    };
    let preps = convert(file.preparations, "preparations")?;
    let tests = convert(file.measurements, "measurements")?;
    Fragment::new(preps, tests)
}

pub fn read_fragment(path: &Path) -> Result<Fragment> {
    let text = fs::read_to_string(path)?;
    parse_fragment(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn fragment_to_json(f: &Fragment) -> Result<String> {
    Ok(serde_json::to_string_pretty(&FragmentOut {
        schema: SCHEMA,
        dim: f.dim(),
        preparations: f.preparations(),
        measurements: f.measurements(),
    })?)
}

#[derive(Serialize, Deserialize)]
struct BlockSidecar {
    schema: String,
    row_labels: Vec<String>,
    blocks: Vec<Block>,
}

/// `<matrix>.blocks.json` next to a matrix CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".blocks.json");
    PathBuf::from(name)
}

/// Header of column labels, then one numeric line per row.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, column_labels: &[String], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(column_labels)?;
    for row in m.row_iter() {
        out.write_record(row.iter().map(|x| x.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn blocks_json(c: &CopeMatrix) -> Result<String> {
    Ok(serde_json::to_string_pretty(&BlockSidecar {
        schema: SCHEMA.into(),
        row_labels: c.row_labels(),
        blocks: c.blocks().to_vec(),
    })?)
}

/// Writes the matrix CSV and its block sidecar.
pub fn write_cope(c: &CopeMatrix, path: &Path) -> Result<()> {
    write_matrix_csv(c.entries(), c.column_labels(), fs::File::create(path)?)?;
    fs::write(sidecar_path(path), blocks_json(c)?)?;
    Ok(())
}

/// Reads a numeric CSV. A first line that does not parse as numbers is
/// taken as column labels.
pub fn read_matrix_csv<R: Read>(r: R) -> Result<(DMatrix<f64>, Option<Vec<String>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(r);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => header = Some(record.iter().map(String::from).collect()),
            Err(e) => return Err(Error::Parse(format!("line {}: {e}", line + 1))),
        }
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
        return Err(Error::Shape(format!("row {} has {} entries, expected {cols}", bad + 1, rows[bad].len())));
    }
    let m = DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten());
    Ok((m, header))
}

/// Matrix, optional column labels, optional sidecar blocks.
pub type MatrixFile = (DMatrix<f64>, Option<Vec<String>>, Option<Vec<Block>>);

/// Matrix CSV plus the block structure from its sidecar, if present.
pub fn read_matrix_file(path: &Path) -> Result<MatrixFile> {
    let (m, header) = read_matrix_csv(fs::File::open(path)?)?;
    let side = sidecar_path(path);
    let blocks = if side.exists() {
        let s: BlockSidecar = serde_json::from_str(&fs::read_to_string(&side)?)
            .map_err(|e| Error::Parse(format!("{}: {e}", side.display())))?;
        Some(s.blocks)
    } else {
        None
    };
    Ok((m, header, blocks))
}

/// Reads a COPE written by [`write_cope`].
pub fn read_cope(path: &Path) -> Result<CopeMatrix> {
    let (m, header, blocks) = read_matrix_file(path)?;
    let blocks = blocks.ok_or_else(|| Error::Parse(format!("missing {}", sidecar_path(path).display())))?;
    let labels = header.unwrap_or_else(|| (0..m.ncols()).map(|i| format!("p{i}")).collect());
    CopeMatrix::new(m, blocks, labels)
}

pub fn write_curve_csv<W: Write>(rows: &[CurveRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_scan_csv<W: Write>(points: &[ScanPoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["c", "d", "fourth_eigenvalue", "rank3_flag"])?;
    for p in points {
        out.write_record([
            p.c.to_string(),
            p.d.to_string(),
            p.fourth_eigenvalue.to_string(),
            u8::from(p.rank3).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fragments::{cope_from_fragment, meqsd_cope, meqsd_geometric, MeqsdParams};

    #[test]
    fn fragment_roundtrip() {
        let f = meqsd_geometric(0.4).unwrap();
        let back = parse_fragment(&fragment_to_json(&f).unwrap()).unwrap();
        let (a, b) = (cope_from_fragment(&f).unwrap(), cope_from_fragment(&back).unwrap());
        assert!((a.entries() - b.entries()).abs().max() < 1e-15);
    }

    #[test]
    fn bloch_entries_and_errors() {
        let ok = r#"{"dim": 2, "preparations": [{"label": "z", "bloch": [0, 0]}],
                     "measurements": [{"label": "m", "ket": [[1, 0], [0, 0]]}]}"#;
        assert_eq!(parse_fragment(ok).unwrap().preparations().len(), 1);
        let both = r#"{"dim": 2, "preparations": [{"label": "z"}], "measurements": []}"#;
        assert!(matches!(parse_fragment(both), Err(Error::Parse(_))));
        let mismatch = r#"{"dim": 2, "preparations": [{"label": "z", "ket": [[1,0],[0,0],[0,0],[0,0]]}], "measurements": []}"#;
        assert!(matches!(parse_fragment(mismatch), Err(Error::DimensionMismatch { .. })));
        let broken = "{\"dim\": 2,\n \"preparations\": [";
        let Err(Error::Parse(msg)) = parse_fragment(broken) else { panic!() };
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn cope_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let c = meqsd_cope(MeqsdParams::helstrom(0.5).unwrap());
        write_cope(&c, &path).unwrap();
        assert_eq!(read_cope(&path).unwrap(), c);
    }

    #[test]
    fn headerless_csv() {
        let (m, h) = read_matrix_csv("1,0\n0,1\n".as_bytes()).unwrap();
        assert_eq!(m, DMatrix::identity(2, 2));
        assert!(h.is_none());
        assert!(read_matrix_csv("1,0\n0\n".as_bytes()).is_err());
        assert!(read_matrix_csv("a,b\n1,x\n".as_bytes()).is_err());
    }
}
