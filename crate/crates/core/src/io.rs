//! Dataset files: JSON `{n, p, X, y, y_c, seed}` with `X` row-major, or the
//! same JSON with `X` moved to a binary sidecar (`"GMMDSET1"`, `n` and `p`
//! as little-endian `u32`, then row-major little-endian `f64`).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GmmError, Result};
use crate::model::{Dataset, GmmModel};

pub const SIDECAR_MAGIC: &[u8; 8] = b"GMMDSET1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    /// Sidecar path, relative to the JSON file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_sidecar: Option<String>,
    pub y: Vec<f64>,
    pub y_c: Vec<f64>,
    pub seed: u64,
}

fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    x.transpose().as_slice().to_vec()
}

impl DatasetFile {
    pub fn from_dataset(ds: &Dataset) -> Self {
        DatasetFile {
            n: ds.n(),
            p: ds.p(),
            x: Some(row_major(ds.x())),
            x_sidecar: None,
            y: ds.y().iter().copied().collect(),
            y_c: ds.y_c().iter().copied().collect(),
            seed: ds.seed(),
        }
    }

    fn into_dataset(self, x: Vec<f64>) -> Result<Dataset> {
        if x.len() != self.n * self.p || self.y.len() != self.n || self.y_c.len() != self.n {
            return Err(GmmError::InvalidInput(format!(
                "dataset shape mismatch: n={} p={} but X has {}, y {} and y_c {} entries",
                self.n,
                self.p,
                x.len(),
                self.y.len(),
                self.y_c.len()
            )));
        }
        Dataset::new(
            DMatrix::from_row_slice(self.n, self.p, &x),
            DVector::from_vec(self.y),
            DVector::from_vec(self.y_c),
            self.seed,
        )
    }
}

pub fn write_dataset_json(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string(&DatasetFile::from_dataset(ds))?)?;
    Ok(())
}

/// Write the labels to `path` and `X` to `<path stem>.bin` next to it.
pub fn write_dataset_with_sidecar(ds: &Dataset, path: &Path) -> Result<()> {
    let bin = path.with_extension("bin");
    write_sidecar(ds.x(), &bin)?;
    let mut file = DatasetFile::from_dataset(ds);
    file.x = None;
    file.x_sidecar = Some(bin.file_name().unwrap_or_default().to_string_lossy().into_owned());
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file: DatasetFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let x = match (&file.x, &file.x_sidecar) {
        (Some(x), None) => x.clone(),
        (None, Some(side)) => {
            let dir = path.parent().unwrap_or(Path::new("."));
            let (n, p, x) = read_sidecar(&dir.join(side))?;
            if (n, p) != (file.n, file.p) {
                return Err(GmmError::InvalidInput(format!(
                    "sidecar is {n}x{p} but the JSON says {}x{}",
                    file.n, file.p
                )));
            }
            x
        }
        _ => {
            return Err(GmmError::InvalidInput(
                "dataset needs exactly one of 'X' and 'x_sidecar'".into(),
            ))
        }
    };
    file.into_dataset(x)
}

pub fn write_sidecar(x: &DMatrix<f64>, path: &Path) -> Result<()> {
    let too_big = |v: usize| u32::try_from(v).map_err(|_| GmmError::InvalidInput(format!("dimension {v} exceeds u32")));
    let mut buf = Vec::with_capacity(16 + 8 * x.len());
    buf.extend_from_slice(SIDECAR_MAGIC);
    buf.extend_from_slice(&too_big(x.nrows())?.to_le_bytes());
    buf.extend_from_slice(&too_big(x.ncols())?.to_le_bytes());
    for v in row_major(x) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

/// `(n, p, row-major X)`.
pub fn read_sidecar(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| GmmError::InvalidInput(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != SIDECAR_MAGIC {
        return Err(bad("missing GMMDSET1 header"));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let p = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != 8 * n * p {
        return Err(bad(&format!("expected {} bytes of data, found {}", 8 * n * p, body.len())));
    }
    let x = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((n, p, x))
}

pub fn read_model(path: &Path) -> Result<GmmModel> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
