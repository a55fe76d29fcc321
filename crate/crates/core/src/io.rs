//! Field files: a raw little-endian f32 payload next to a JSON sidecar.
//!
//! `brain.raw` is described by `brain.json`:
//! `{"dims":[..],"spacing":[..],"kind":"scalar"|"vector"|"labels","components":n}`.
//! Vector payloads are component-major. Either file name may be passed to the
//! loaders.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, ScalarField, VectorField};
use crate::metrics::LabelField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Scalar,
    Vector,
    Labels,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub kind: FieldKind,
    pub components: usize,
}

impl Header {
    fn grid(&self, path: &Path) -> Result<Grid> {
        Grid::new(&self.dims, &self.spacing).map_err(|e| format_err(path, e.to_string()))
    }
}

/// Any field read from disk.
#[derive(Clone, Debug)]
pub enum LoadedField {
    Scalar(ScalarField),
    Vector(VectorField),
    Labels(LabelField),
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// (payload, sidecar) paths for either file name.
pub fn paths(path: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let p = path.as_ref();
    (p.with_extension("raw"), p.with_extension("json"))
}

pub fn read_header(path: impl AsRef<Path>) -> Result<Header> {
    let (_, json) = paths(path);
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(&json, e.to_string()))
}

fn write(path: &Path, header: &Header, comps: &[&[f64]]) -> Result<()> {
    let (raw, json) = paths(path);
    if let Some(dir) = raw.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut bytes = Vec::with_capacity(4 * comps.iter().map(|c| c.len()).sum::<usize>());
    for c in comps {
        for &v in c.iter() {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))?;
    let text = serde_json::to_string_pretty(header).expect("header serializes");
    fs::write(&json, text).map_err(|e| Error::io(&json, e))
}

fn header_for(grid: &Grid, kind: FieldKind, components: usize) -> Header {
    Header {
        dims: grid.dims().to_vec(),
        spacing: grid.spacing().to_vec(),
        kind,
        components,
    }
}

pub fn save_scalar(path: impl AsRef<Path>, f: &ScalarField) -> Result<()> {
    write(path.as_ref(), &header_for(f.grid(), FieldKind::Scalar, 1), &[f.values()])
}

pub fn save_vector(path: impl AsRef<Path>, f: &VectorField) -> Result<()> {
    let d = f.grid().ndim();
    let comps: Vec<&[f64]> = (0..d).map(|i| f.component(i)).collect();
    write(path.as_ref(), &header_for(f.grid(), FieldKind::Vector, d), &comps)
}

pub fn save_labels(path: impl AsRef<Path>, f: &LabelField) -> Result<()> {
    if f.labels().iter().any(|&l| l > 1 << 24) {
        return Err(format_err(path.as_ref(), "labels above 2^24 do not fit an f32 payload"));
    }
    let vals: Vec<f64> = f.labels().iter().map(|&l| l as f64).collect();
    write(path.as_ref(), &header_for(f.grid(), FieldKind::Labels, 1), &[&vals])
}

/// Reads any field, validating the payload against its header.
pub fn load_field(path: impl AsRef<Path>) -> Result<LoadedField> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let (raw, json) = paths(path);
    let grid = header.grid(&json)?;
    let expected_components = match header.kind {
        FieldKind::Scalar | FieldKind::Labels => 1,
        FieldKind::Vector => grid.ndim(),
    };
    if header.components != expected_components {
        return Err(format_err(
            &json,
            format!("{:?} field with {} components", header.kind, header.components),
        ));
    }
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let n = grid.len() * header.components;
    if bytes.len() != 4 * n {
        return Err(format_err(
            &raw,
            format!("payload has {} bytes, header {:?} implies {}", bytes.len(), header.dims, 4 * n),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(format_err(&raw, format!("non-finite value at index {i}")));
    }
    Ok(match header.kind {
        FieldKind::Scalar => LoadedField::Scalar(ScalarField::new(grid, values)?),
        FieldKind::Vector => {
            let comps = values.chunks_exact(grid.len()).map(|c| c.to_vec()).collect();
            LoadedField::Vector(VectorField::new(grid, comps)?)
        }
        FieldKind::Labels => {
            if values.iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                return Err(format_err(&raw, "labels must be non-negative integers"));
            }
            LoadedField::Labels(LabelField::new(grid, values.into_iter().map(|v| v as u32).collect())?)
        }
    })
}

pub fn load_scalar(path: impl AsRef<Path>) -> Result<ScalarField> {
    match load_field(&path)? {
        LoadedField::Scalar(f) => Ok(f),
        _ => Err(format_err(path.as_ref(), "expected a scalar field")),
    }
}

pub fn load_vector(path: impl AsRef<Path>) -> Result<VectorField> {
    match load_field(&path)? {
        LoadedField::Vector(f) => Ok(f),
        _ => Err(format_err(path.as_ref(), "expected a vector field")),
    }
}

/// Label maps may also be stored as scalar files with integer values.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelField> {
    match load_field(&path)? {
        LoadedField::Labels(f) => Ok(f),
        LoadedField::Scalar(f) => {
            if f.values().iter().any(|&v| v < 0.0 || v.fract() != 0.0) {
                return Err(format_err(path.as_ref(), "labels must be non-negative integers"));
            }
            let labels = f.values().iter().map(|&v| v as u32).collect();
            LabelField::new(f.grid().clone(), labels)
        }
        _ => Err(format_err(path.as_ref(), "expected a label field")),
    }
}
