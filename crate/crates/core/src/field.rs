//! Node lattice holding a solution field, and its CSV form.
//!
//! Nodes sit at `x_i = −extent + i·2·extent/(nx−1)` (likewise `y_j`), so the
//! lattice includes the edges of the bounding square. Storage and CSV rows
//! are row-major with `j` (y) outer and `i` (x) inner.
//!
//! CSV header: `x,y,u,stderr,n,flag` with `flag ∈ {solved, fixed, invalid}`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellClass {
    Solved,
    FixedBoundary(f64),
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub class: CellClass,
    pub mean: f64,
    pub stderr: f64,
    pub n: u64,
}

impl Cell {
    pub fn solved(mean: f64, stderr: f64, n: u64) -> Self {
        Self {
            class: CellClass::Solved,
            mean,
            stderr,
            n,
        }
    }

    pub fn fixed(value: f64) -> Self {
        Self {
            class: CellClass::FixedBoundary(value),
            mean: value,
            stderr: 0.0,
            n: 0,
        }
    }

    pub fn invalid() -> Self {
        Self {
            class: CellClass::Invalid,
            mean: 0.0,
            stderr: 0.0,
            n: 0,
        }
    }

    pub fn is_solved(&self) -> bool {
        self.class == CellClass::Solved
    }

    fn flag(&self) -> &'static str {
        match self.class {
            CellClass::Solved => "solved",
            CellClass::FixedBoundary(_) => "fixed",
            CellClass::Invalid => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub nx: usize,
    pub ny: usize,
    pub extent: f64,
    pub cells: Vec<Cell>,
}

/// Coordinate of node `i` on an `n`-node axis spanning `[-extent, extent]`.
#[inline]
pub fn node_coord(i: usize, n: usize, extent: f64) -> f64 {
    if i + 1 == n {
        extent
    } else {
        -extent + i as f64 * (2.0 * extent) / (n - 1) as f64
    }
}

impl FieldGrid {
    pub fn new(nx: usize, ny: usize, extent: f64, cells: Vec<Cell>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::usage(format!("grid must be at least 2x2, got {nx}x{ny}")));
        }
        if cells.len() != nx * ny {
            return Err(Error::usage(format!(
                "grid {nx}x{ny} needs {} cells, got {}",
                nx * ny,
                cells.len()
            )));
        }
        Ok(Self {
            nx,
            ny,
            extent,
            cells,
        })
    }

    pub fn node(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            node_coord(i, self.nx, self.extent),
            node_coord(j, self.ny, self.extent),
        )
    }

    pub fn cell(&self, i: usize, j: usize) -> &Cell {
        &self.cells[j * self.nx + i]
    }

    pub fn same_shape(&self, other: &FieldGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.extent == other.extent
    }

    pub fn solved(&self) -> impl Iterator<Item = (usize, usize, &Cell)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_solved())
            .map(|(k, c)| (k % self.nx, k / self.nx, c))
    }

    /// Bilinear interpolation of the field values at `p`; `None` outside the
    /// lattice or next to an invalid node.
    pub fn sample(&self, p: Point2) -> Option<f64> {
        let fx = (p.x + self.extent) / (2.0 * self.extent) * (self.nx - 1) as f64;
        let fy = (p.y + self.extent) / (2.0 * self.extent) * (self.ny - 1) as f64;
        let eps = 1e-9;
        if !(fx >= -eps && fy >= -eps && fx <= (self.nx - 1) as f64 + eps && fy <= (self.ny - 1) as f64 + eps) {
            return None;
        }
        let i0 = (fx.floor().max(0.0) as usize).min(self.nx - 2);
        let j0 = (fy.floor().max(0.0) as usize).min(self.ny - 2);
        let (tx, ty) = ((fx - i0 as f64).clamp(0.0, 1.0), (fy - j0 as f64).clamp(0.0, 1.0));
        let mut acc = 0.0;
        for (di, wx) in [(0, 1.0 - tx), (1, tx)] {
            for (dj, wy) in [(0, 1.0 - ty), (1, ty)] {
                let w = wx * wy;
                if w == 0.0 {
                    continue;
                }
                let c = self.cell(i0 + di, j0 + dj);
                if c.class == CellClass::Invalid {
                    return None;
                }
                acc += w * c.mean;
            }
        }
        Some(acc)
    }

    /// Transfers the field onto an `nx × ny` lattice over the same extent.
    ///
    /// When the target nodes are a subset of this lattice the values are
    /// copied; otherwise they are interpolated bilinearly. A target node keeps
    /// the class of the nearest source node.
    pub fn resample(&self, nx: usize, ny: usize) -> Result<FieldGrid> {
        if nx < 2 || ny < 2 {
            return Err(Error::usage("resample target must be at least 2x2"));
        }
        let exact = (self.nx - 1).is_multiple_of(nx - 1) && (self.ny - 1).is_multiple_of(ny - 1);
        let mut cells = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let cell = if exact {
                    *self.cell(i * (self.nx - 1) / (nx - 1), j * (self.ny - 1) / (ny - 1))
                } else {
                    let p = Point2::new(node_coord(i, nx, self.extent), node_coord(j, ny, self.extent));
                    let near = |f: f64, n: usize| {
                        (((f + self.extent) / (2.0 * self.extent) * (n - 1) as f64).round() as usize)
                            .min(n - 1)
                    };
                    let nearest = self.cell(near(p.x, self.nx), near(p.y, self.ny));
                    match (nearest.class, self.sample(p)) {
                        (CellClass::Invalid, _) | (_, None) => Cell::invalid(),
                        (CellClass::Solved, Some(v)) => Cell::solved(v, nearest.stderr, nearest.n),
                        (CellClass::FixedBoundary(b), Some(_)) => Cell::fixed(b),
                    }
                };
                cells.push(cell);
            }
        }
        FieldGrid::new(nx, ny, self.extent, cells)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 96);
        out.push_str("x,y,u,stderr,n,flag\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let p = self.node(i, j);
                let c = self.cell(i, j);
                writeln!(
                    out,
                    "{:.9e},{:.9e},{:.9e},{:.9e},{},{}",
                    p.x,
                    p.y,
                    c.mean,
                    c.stderr,
                    c.n,
                    c.flag()
                )
                .unwrap();
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<FieldGrid> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "x,y,u,stderr,n,flag" => {}
            _ => return Err(Error::parse("field CSV must start with header x,y,u,stderr,n,flag")),
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut cells = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 6 {
                return Err(Error::parse(format!("row {}: expected 6 columns", lineno + 2)));
            }
            let num = |k: usize| -> Result<f64> {
                cols[k]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(format!("row {}: bad number {:?}", lineno + 2, cols[k])))
            };
            let (x, y, u, se) = (num(0)?, num(1)?, num(2)?, num(3)?);
            let n = cols[4]
                .parse::<u64>()
                .map_err(|_| Error::parse(format!("row {}: bad count", lineno + 2)))?;
            let class = match cols[5] {
                "solved" => CellClass::Solved,
                "fixed" => CellClass::FixedBoundary(u),
                "invalid" => CellClass::Invalid,
                other => return Err(Error::parse(format!("row {}: bad flag {other:?}", lineno + 2))),
            };
            xs.push(x);
            ys.push(y);
            cells.push(Cell {
                class,
                mean: u,
                stderr: se,
                n,
            });
        }
        if cells.is_empty() {
            return Err(Error::parse("field CSV has no rows"));
        }
        // row-major: x restarts every nx rows
        let nx = xs.iter().skip(1).position(|&x| x <= xs[0]).map_or(xs.len(), |k| k + 1);
        if nx < 2 || cells.len() % nx != 0 {
            return Err(Error::parse("field CSV is not a rectangular lattice"));
        }
        let ny = cells.len() / nx;
        let extent = xs[nx - 1];
        let grid = FieldGrid::new(nx, ny, extent, cells).map_err(|e| Error::parse(e.to_string()))?;
        let tol = 1e-7 * extent.abs().max(1.0);
        for j in 0..ny {
            for i in 0..nx {
                let p = grid.node(i, j);
                let k = j * nx + i;
                if (p.x - xs[k]).abs() > tol || (p.y - ys[k]).abs() > tol {
                    return Err(Error::parse(format!(
                        "row {}: coordinates do not match a {nx}x{ny} lattice",
                        k + 2
                    )));
                }
            }
        }
        Ok(grid)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read_csv(path: &Path) -> Result<FieldGrid> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        FieldGrid::from_csv(&text)
    }
}
