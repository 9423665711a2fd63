use std::fmt::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::repulsion::{FieldVector, VectorField};
use crate::error::{Error, Result};
use crate::grid::GridCoord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    /// Navigation field `M_F`.
    #[serde(rename = "M_F")]
    Navigation,
    /// Obstacle field `M_C`.
    #[serde(rename = "M_C")]
    Obstacle,
    /// Pedestrian field `M_I`.
    #[serde(rename = "M_I")]
    Pedestrian,
    /// Global field `M_G = M_F + M_C + M_I`.
    #[serde(rename = "M_G")]
    Global,
}

impl FieldKind {
    pub fn label(self) -> &'static str {
        match self {
            FieldKind::Navigation => "M_F",
            FieldKind::Obstacle => "M_C",
            FieldKind::Pedestrian => "M_I",
            FieldKind::Global => "M_G",
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-cell scalar potential. Values are finite and non-negative, or `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMatrix {
    kind: FieldKind,
    width: i32,
    height: i32,
    values: Vec<f64>,
}

impl FieldMatrix {
    pub fn filled(kind: FieldKind, width: i32, height: i32, value: f64) -> Self {
        FieldMatrix {
            kind,
            width,
            height,
            values: vec![value; (width * height) as usize],
        }
    }

    /// Row-major values, row `j = 0` first.
    pub fn from_values(kind: FieldKind, width: i32, height: i32, values: Vec<f64>) -> Result<Self> {
        if width < 1 || height < 1 || values.len() != (width * height) as usize {
            return Err(Error::invalid(format!(
                "{} values do not fill a {width}x{height} matrix",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::invalid(format!("field value {v} is not a non-negative extended real")));
        }
        Ok(FieldMatrix {
            kind,
            width,
            height,
            values,
        })
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn width(&self) -> i32 {
        self.width
    }

    pub fn height(&self) -> i32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[cfg(test)]
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, c: GridCoord) -> f64 {
        if c.i < 0 || c.j < 0 || c.i >= self.width || c.j >= self.height {
            return f64::INFINITY;
        }
        self.values[(c.j * self.width + c.i) as usize]
    }

    pub fn same_shape(&self, other: &FieldMatrix) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// CSV text: one line per row `j` (ascending), `inf` for `+inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 6);
        for row in self.values.chunks(self.width as usize) {
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                if v.is_infinite() {
                    out.push_str("inf");
                } else {
                    write!(out, "{v}").unwrap();
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(kind: FieldKind, text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut width = None;
        let mut height = 0;
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|s| match s.trim() {
                    "inf" => Ok(f64::INFINITY),
                    s => s.parse::<f64>().map_err(|e| Error::parse("<csv>", n + 1, format!("{s:?}: {e}"))),
                })
                .collect::<Result<_>>()?;
            if *width.get_or_insert(row.len()) != row.len() {
                return Err(Error::parse("<csv>", n + 1, "ragged row"));
            }
            values.extend(row);
            height += 1;
        }
        FieldMatrix::from_values(kind, width.unwrap_or(0) as i32, height, values)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Euclidean magnitude of each cell vector; `+inf` stays `+inf`.
pub fn magnitude_matrix(field: &VectorField, kind: FieldKind) -> FieldMatrix {
    let values = field
        .values()
        .iter()
        .map(|v| match *v {
            FieldVector::Finite { x, y } => x.hypot(y),
            FieldVector::Infinite => f64::INFINITY,
        })
        .collect();
    FieldMatrix {
        kind,
        width: field.width(),
        height: field.height(),
        values,
    }
}

/// `M_G = M_F + M_C + M_I`, elementwise, with `+inf` absorbing.
pub fn global_field(mf: &FieldMatrix, mc: &FieldMatrix, mi: &FieldMatrix) -> Result<FieldMatrix> {
    if !(mf.same_shape(mc) && mf.same_shape(mi)) {
        return Err(Error::invalid(format!(
            "field shapes differ: {}x{}, {}x{}, {}x{}",
            mf.width, mf.height, mc.width, mc.height, mi.width, mi.height
        )));
    }
    let values = mf
        .values
        .iter()
        .zip(&mc.values)
        .zip(&mi.values)
        .map(|((f, c), i)| f + c + i)
        .collect();
    Ok(FieldMatrix {
        kind: FieldKind::Global,
        width: mf.width,
        height: mf.height,
        values,
    })
}
