//! Finite-difference reference solver.
//!
//! The domain is rasterized on the field lattice by node membership
//! (staircase boundaries): nodes that are interior become unknowns, every
//! other node is held at the boundary data evaluated at the node. The
//! operator `α∆u + ω·∇u − σu + f` is discretized with the 5-point Laplacian
//! and central first differences and solved with red-black SOR.

use crate::error::{Error, Result};
use crate::field::{node_coord, Cell, CellClass, FieldGrid};
use crate::geometry::{DomainSpec, Point2, RegionClass};
use crate::sde::SdeParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StencilNode {
    /// Index into the unknown vector.
    Unknown(usize),
    Fixed(f64),
}

/// Rasterized Dirichlet problem, independent of the PDE coefficients.
#[derive(Debug, Clone)]
pub struct StencilSystem {
    pub nx: usize,
    pub ny: usize,
    pub extent: f64,
    pub hx: f64,
    pub hy: f64,
    pub nodes: Vec<StencilNode>,
    /// Nodes outside the outer boundary.
    pub exterior: Vec<bool>,
    /// Lattice index of each unknown.
    pub unknowns: Vec<usize>,
}

impl StencilSystem {
    pub fn unknown_count(&self) -> usize {
        self.unknowns.len()
    }

    pub fn node_point(&self, i: usize, j: usize) -> Point2 {
        Point2::new(
            node_coord(i, self.nx, self.extent),
            node_coord(j, self.ny, self.extent),
        )
    }
}

pub fn rasterize(domain: &DomainSpec, nx: usize, ny: usize) -> Result<StencilSystem> {
    if nx < 8 || ny < 8 {
        return Err(Error::usage(format!("finite-difference grid must be at least 8x8, got {nx}x{ny}")));
    }
    let extent = domain.extent();
    let hx = 2.0 * extent / (nx - 1) as f64;
    let hy = 2.0 * extent / (ny - 1) as f64;
    let h = hx.max(hy);

    let gap = |inc: &crate::geometry::Inclusion| match domain.outer() {
        crate::geometry::OuterShape::Square { half_width } => {
            (half_width - inc.center.x.abs()).min(half_width - inc.center.y.abs()) - inc.radius
        }
        crate::geometry::OuterShape::Disk { radius } => radius - inc.center.norm() - inc.radius,
    };
    let mut covered = vec![false; domain.inclusions().len()];
    let mut nodes = Vec::with_capacity(nx * ny);
    let mut exterior = Vec::with_capacity(nx * ny);
    let mut unknowns = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = Point2::new(node_coord(i, nx, extent), node_coord(j, ny, extent));
            let class = domain.classify(p);
            exterior.push(class == RegionClass::Exterior);
            let node = match class {
                RegionClass::Interior => {
                    if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                        return Err(Error::config("interior node on the lattice edge"));
                    }
                    unknowns.push(j * nx + i);
                    StencilNode::Unknown(unknowns.len() - 1)
                }
                RegionClass::Boundary { region, value } => {
                    if let crate::geometry::RegionId::Inclusion(k) = region {
                        covered[k] = true;
                    }
                    StencilNode::Fixed(value)
                }
                RegionClass::Exterior => StencilNode::Fixed(domain.outer_value().at(p)),
            };
            nodes.push(node);
        }
    }
    for (k, inc) in domain.inclusions().iter().enumerate() {
        if !covered[k] || gap(inc) < h {
            return Err(Error::config(format!(
                "grid {nx}x{ny} too coarse to resolve inclusion {k} against the outer boundary"
            )));
        }
    }
    if unknowns.is_empty() {
        return Err(Error::config("rasterized domain has no interior nodes"));
    }
    Ok(StencilSystem {
        nx,
        ny,
        extent,
        hx,
        hy,
        nodes,
        exterior,
        unknowns,
    })
}

/// 5-point coefficients, shared by every unknown (constant coefficients).
#[derive(Debug, Clone, Copy)]
struct Stencil {
    diag: f64,
    east: f64,
    west: f64,
    north: f64,
    south: f64,
    source: f64,
}

impl Stencil {
    fn new(system: &StencilSystem, params: &SdeParams) -> Self {
        let cx = params.alpha() / (system.hx * system.hx);
        let cy = params.alpha() / (system.hy * system.hy);
        let [wx, wy] = params.omega();
        let px = wx / (2.0 * system.hx);
        let py = wy / (2.0 * system.hy);
        Self {
            diag: 2.0 * cx + 2.0 * cy + params.sigma_abs(),
            east: cx + px,
            west: cx - px,
            north: cy + py,
            south: cy - py,
            source: params.source_f(),
        }
    }
}

/// Assembled linear system `A u = b` in neighbour-list form.
struct Assembled {
    stencil: Stencil,
    /// Neighbour unknown indices (E, W, N, S); `usize::MAX` for fixed.
    nbr: Vec<[usize; 4]>,
    rhs: Vec<f64>,
    colors: [Vec<usize>; 2],
}

fn assemble(system: &StencilSystem, params: &SdeParams) -> Assembled {
    let st = Stencil::new(system, params);
    let coeffs = [st.east, st.west, st.north, st.south];
    let nx = system.nx;
    let mut nbr = Vec::with_capacity(system.unknowns.len());
    let mut rhs = Vec::with_capacity(system.unknowns.len());
    let mut colors = [Vec::new(), Vec::new()];
    for (u, &k) in system.unknowns.iter().enumerate() {
        let (i, j) = (k % nx, k / nx);
        let around = [k + 1, k - 1, k + nx, k - nx];
        let mut links = [usize::MAX; 4];
        let mut b = st.source;
        for (slot, &m) in around.iter().enumerate() {
            match system.nodes[m] {
                StencilNode::Unknown(v) => links[slot] = v,
                StencilNode::Fixed(g) => b += coeffs[slot] * g,
            }
        }
        nbr.push(links);
        rhs.push(b);
        colors[(i + j) % 2].push(u);
    }
    Assembled {
        stencil: st,
        nbr,
        rhs,
        colors,
    }
}

impl Assembled {
    #[inline]
    fn off_diagonal_sum(&self, u: &[f64], k: usize) -> f64 {
        let st = &self.stencil;
        let coeffs = [st.east, st.west, st.north, st.south];
        let mut s = 0.0;
        for (slot, &v) in self.nbr[k].iter().enumerate() {
            if v != usize::MAX {
                s += coeffs[slot] * u[v];
            }
        }
        s
    }

    fn relative_residual(&self, u: &[f64]) -> f64 {
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        for k in 0..u.len() {
            let r = self.rhs[k] + self.off_diagonal_sum(u, k) - self.stencil.diag * u[k];
            r2 += r * r;
            b2 += self.rhs[k] * self.rhs[k];
        }
        if b2 == 0.0 {
            r2.sqrt()
        } else {
            (r2 / b2).sqrt()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdSolution {
    pub grid: FieldGrid,
    pub iterations: usize,
    /// `‖b − A u‖₂ / ‖b‖₂` at termination (absolute when `b = 0`).
    pub residual: f64,
}

/// Solves the rasterized problem to a relative residual of `tol`.
pub fn solve_fd(system: &StencilSystem, params: &SdeParams, tol: f64, max_iter: usize) -> Result<FdSolution> {
    if !(tol > 0.0) {
        return Err(Error::usage(format!("tolerance must be positive, got {tol}")));
    }
    let [wx, wy] = params.omega();
    let peclet = (wx.abs() * system.hx).max(wy.abs() * system.hy) / (2.0 * params.alpha());
    if peclet >= 1.0 {
        return Err(Error::config(format!(
            "grid Peclet number {peclet:.3} >= 1; refine the grid or reduce the drift"
        )));
    }
    let asm = assemble(system, params);
    let n = system.unknowns.len();
    let mut u = vec![0.0; n];
    let relax = 2.0 / (1.0 + (std::f64::consts::PI / (system.nx.max(system.ny) - 1) as f64).sin());
    let diag = asm.stencil.diag;

    let mut residual = asm.relative_residual(&u);
    let mut iterations = 0;
    while residual > tol {
        if iterations >= max_iter {
            return Err(Error::numerical(format!(
                "SOR did not reach tolerance {tol:e} within {max_iter} iterations (residual {residual:e})"
            )));
        }
        for color in &asm.colors {
            for &k in color {
                let gs = (asm.rhs[k] + asm.off_diagonal_sum(&u, k)) / diag;
                u[k] += relax * (gs - u[k]);
            }
        }
        iterations += 1;
        if iterations % 10 == 0 || iterations == max_iter {
            residual = asm.relative_residual(&u);
            if !residual.is_finite() {
                return Err(Error::numerical("SOR iteration diverged"));
            }
        }
    }

    let cells = system
        .nodes
        .iter()
        .zip(&system.exterior)
        .map(|(node, &outside)| match *node {
            StencilNode::Unknown(k) => Cell::solved(u[k], 0.0, 0),
            StencilNode::Fixed(_) if outside => Cell::invalid(),
            StencilNode::Fixed(g) => Cell::fixed(g),
        })
        .collect();
    Ok(FdSolution {
        grid: FieldGrid::new(system.nx, system.ny, system.extent, cells)?,
        iterations,
        residual,
    })
}

/// Recomputes the relative residual of `grid` straight from the difference
/// formulas, without the assembled matrix used by the solver.
pub fn verify_residual(system: &StencilSystem, params: &SdeParams, grid: &FieldGrid) -> Result<f64> {
    if grid.nx != system.nx || grid.ny != system.ny {
        return Err(Error::usage("grid does not match the stencil system"));
    }
    let value = |i: usize, j: usize, zero_unknowns: bool| -> f64 {
        match system.nodes[j * system.nx + i] {
            StencilNode::Fixed(g) => g,
            StencilNode::Unknown(_) if zero_unknowns => 0.0,
            StencilNode::Unknown(_) => grid.cell(i, j).mean,
        }
    };
    let (hx, hy) = (system.hx, system.hy);
    let [wx, wy] = params.omega();
    let apply = |i: usize, j: usize, zero: bool| -> f64 {
        let c = value(i, j, zero);
        let (e, w) = (value(i + 1, j, zero), value(i - 1, j, zero));
        let (nn, s) = (value(i, j + 1, zero), value(i, j - 1, zero));
        params.alpha() * ((e - 2.0 * c + w) / (hx * hx) + (nn - 2.0 * c + s) / (hy * hy))
            + wx * (e - w) / (2.0 * hx)
            + wy * (nn - s) / (2.0 * hy)
            - params.sigma_abs() * c
            + params.source_f()
    };
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for &k in &system.unknowns {
        let (i, j) = (k % system.nx, k / system.nx);
        r2 += apply(i, j, false).powi(2);
        b2 += apply(i, j, true).powi(2);
    }
    Ok(if b2 == 0.0 { r2.sqrt() } else { (r2 / b2).sqrt() })
}

/// Pointwise differences between two fields over the cells solved in both.
#[derive(Debug, Clone)]
pub struct ErrorStats {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub rms: f64,
    pub count: usize,
    /// Signed `a − b` per cell; cells not solved in both are invalid.
    pub errors: FieldGrid,
}

impl ErrorStats {
    pub fn summary_line(&self) -> String {
        format!(
            "max_abs={:.6} mean_abs={:.6} rms={:.6}",
            self.max_abs, self.mean_abs, self.rms
        )
    }
}

pub fn compare(a: &FieldGrid, b: &FieldGrid) -> Result<ErrorStats> {
    if !a.same_shape(b) {
        return Err(Error::usage(format!(
            "cannot compare a {}x{} field with a {}x{} field",
            a.nx, a.ny, b.nx, b.ny
        )));
    }
    let mut max_abs = 0.0_f64;
    let mut sum_abs = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0;
    let cells = a
        .cells
        .iter()
        .zip(&b.cells)
        .map(|(ca, cb)| {
            if ca.class == CellClass::Solved && cb.class == CellClass::Solved {
                let e = ca.mean - cb.mean;
                max_abs = max_abs.max(e.abs());
                sum_abs += e.abs();
                sum_sq += e * e;
                count += 1;
                Cell::solved(e, ca.stderr.hypot(cb.stderr), 0)
            } else {
                Cell::invalid()
            }
        })
        .collect();
    let denom = count.max(1) as f64;
    Ok(ErrorStats {
        max_abs,
        mean_abs: sum_abs / denom,
        rms: (sum_sq / denom).sqrt(),
        count,
        errors: FieldGrid::new(a.nx, a.ny, a.extent, cells)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{BoundaryValue, Inclusion, OuterShape};

    fn lap() -> SdeParams {
        SdeParams::default()
    }

    #[test]
    fn rasterize_examples() {
        let d = DomainSpec::benchmark();
        // 101 nodes put x = -0.35, y = 0.35 on the lattice
        let s = rasterize(&d, 101, 101).unwrap();
        let at = |x: f64, y: f64| {
            let i = ((x + 1.0) / s.hx).round() as usize;
            let j = ((y + 1.0) / s.hy).round() as usize;
            s.nodes[j * s.nx + i]
        };
        assert_eq!(at(-0.35, 0.35), StencilNode::Fixed(-1.0));
        assert_eq!(at(0.35, -0.35), StencilNode::Fixed(1.0));
        assert_eq!(at(1.0, 0.3), StencilNode::Fixed(0.0));
        assert!(matches!(at(0.0, 0.0), StencilNode::Unknown(_)));

        let s = rasterize(&d, 100, 100).unwrap();
        assert!(s.unknown_count() <= 10_000);
        let fixed = s.nodes.iter().filter(|n| matches!(n, StencilNode::Fixed(_))).count();
        assert_eq!(s.unknown_count(), 10_000 - fixed);
    }

    #[test]
    fn rasterize_rejects_coarse_grids() {
        let d = DomainSpec::benchmark();
        assert!(matches!(rasterize(&d, 7, 20), Err(Error::Usage(_))));
        let tight = DomainSpec::new(
            OuterShape::Square { half_width: 1.0 },
            0.0,
            vec![Inclusion::new(Point2::new(0.0, 0.0), 0.9, 1.0)],
        )
        .unwrap();
        assert!(matches!(rasterize(&tight, 10, 10), Err(Error::Config(_))));
        let tiny = DomainSpec::new(
            OuterShape::Square { half_width: 1.0 },
            0.0,
            vec![Inclusion::new(Point2::new(0.01, 0.013), 0.02, 1.0)],
        )
        .unwrap();
        assert!(matches!(rasterize(&tiny, 10, 10), Err(Error::Config(_))));
    }

    #[test]
    fn constant_data_gives_constant_field() {
        let c = -0.4;
        let d = DomainSpec::new(
            OuterShape::Square { half_width: 1.0 },
            c,
            vec![Inclusion::new(Point2::new(0.3, 0.3), 0.2, c)],
        )
        .unwrap();
        let sys = rasterize(&d, 41, 41).unwrap();
        let sol = solve_fd(&sys, &lap(), 1e-10, 10_000).unwrap();
        for (_, _, cell) in sol.grid.solved() {
            assert!((cell.mean - c).abs() < 1e-8);
        }
    }

    #[test]
    fn benchmark_center_and_maximum_principle() {
        let sys = rasterize(&DomainSpec::benchmark(), 81, 81).unwrap();
        let sol = solve_fd(&sys, &lap(), 1e-8, 20_000).unwrap();
        assert!(sol.residual <= 1e-8);
        assert!(verify_residual(&sys, &lap(), &sol.grid).unwrap() <= 1e-8 * 1.01);
        assert!(sol.grid.cell(40, 40).mean.abs() < 1e-6);
        for (_, _, c) in sol.grid.solved() {
            assert!((-1.0..=1.0).contains(&c.mean));
        }
        // upper-left lobe negative, lower-right positive
        assert!(sol.grid.sample(Point2::new(-0.35, 0.7)).unwrap() < -0.1);
        assert!(sol.grid.sample(Point2::new(0.35, -0.7)).unwrap() > 0.1);
    }

    #[test]
    fn screened_problem_with_drift_and_source() {
        // u = x is an exact discrete solution of α∆u + ω·∇u − σu + f = 0
        // when f = σx − ωx; check with f constant by choosing σ = 0.
        let d = DomainSpec::new(
            OuterShape::Square { half_width: 1.0 },
            BoundaryValue::field(|p| p.x),
            vec![],
        )
        .unwrap();
        let params = SdeParams::new(0.5, [0.8, 0.0], 0.0, -0.8).unwrap();
        let sys = rasterize(&d, 33, 33).unwrap();
        let sol = solve_fd(&sys, &params, 1e-12, 20_000).unwrap();
        for (i, j, c) in sol.grid.solved() {
            assert!((c.mean - sol.grid.node(i, j).x).abs() < 1e-9);
        }
        assert!(verify_residual(&sys, &params, &sol.grid).unwrap() < 1e-11);
    }

    #[test]
    fn peclet_and_tolerance_checks() {
        let sys = rasterize(&DomainSpec::benchmark(), 21, 21).unwrap();
        let strong = SdeParams::new(0.01, [5.0, 0.0], 0.0, 0.0).unwrap();
        assert!(matches!(solve_fd(&sys, &strong, 1e-8, 100), Err(Error::Config(_))));
        assert!(matches!(solve_fd(&sys, &lap(), 0.0, 100), Err(Error::Usage(_))));
        assert!(matches!(solve_fd(&sys, &lap(), 1e-12, 2), Err(Error::Numerical(_))));
    }

    #[test]
    fn compare_identity_symmetry_and_shape() {
        let sys = rasterize(&DomainSpec::benchmark(), 21, 21).unwrap();
        let a = solve_fd(&sys, &lap(), 1e-8, 10_000).unwrap().grid;
        let mut b = a.clone();
        let same = compare(&a, &a).unwrap();
        assert_eq!(same.max_abs, 0.0);
        assert_eq!(same.rms, 0.0);
        for c in b.cells.iter_mut().filter(|c| c.is_solved()) {
            c.mean += 0.01 * c.mean.signum();
        }
        assert_eq!(compare(&a, &b).unwrap().max_abs, compare(&b, &a).unwrap().max_abs);
        let other = solve_fd(&rasterize(&DomainSpec::benchmark(), 23, 21).unwrap(), &lap(), 1e-8, 10_000)
            .unwrap()
            .grid;
        assert!(matches!(compare(&a, &other), Err(Error::Usage(_))));
    }
}
