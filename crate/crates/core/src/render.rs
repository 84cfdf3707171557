//! Binary graymap (P5) output for fields and error maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::field::{CellClass, FieldGrid};

/// Inclusive display range `lo..hi` mapped onto gray levels 0..255.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderRange {
    pub lo: f64,
    pub hi: f64,
}

impl RenderRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::usage(format!("invalid render range {lo}:{hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn symmetric(half: f64) -> Result<Self> {
        Self::new(-half, half)
    }

    /// Parses `lo:hi`.
    pub fn parse(text: &str) -> Result<Self> {
        let (lo, hi) = text
            .split_once(':')
            .ok_or_else(|| Error::usage(format!("range must look like lo:hi, got '{text}'")))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::usage(format!("bad range bound '{s}'")))
        };
        Self::new(num(lo)?, num(hi)?)
    }

    /// Gray level of `u`, rounding half up and clamping to the range.
    pub fn level(&self, u: f64) -> u8 {
        if u.is_nan() {
            return 0;
        }
        let t = (u - self.lo) / (self.hi - self.lo);
        (t * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
    }
}

/// Encodes the field; row 0 is the top edge `y = +extent`.
pub fn to_pgm(grid: &FieldGrid, range: RenderRange) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
    out.reserve(grid.nx * grid.ny);
    for j in (0..grid.ny).rev() {
        for i in 0..grid.nx {
            let cell = grid.cell(i, j);
            out.push(match cell.class {
                CellClass::Invalid => 0,
                _ => range.level(cell.mean),
            });
        }
    }
    out
}

pub fn write_pgm(grid: &FieldGrid, range: RenderRange, path: &Path) -> Result<()> {
    std::fs::write(path, to_pgm(grid, range)).map_err(|e| Error::io(path.display().to_string(), e))
}
