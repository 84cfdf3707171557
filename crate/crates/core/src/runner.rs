//! Command implementations behind the `fkwalk` binary.
//!
//! Each command writes its files, prints its summary to standard output and
//! returns a report. Progress goes to standard error.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimator::{Estimator, FieldSolution, GridSpec};
use crate::fdref::{compare, rasterize, solve_fd, verify_residual, ErrorStats};
use crate::field::FieldGrid;
use crate::geometry::{LookupBoundaryOracle, LUT_VALUE_BITS};
use crate::geometry::{BoundaryOracle, Point2};
use crate::render::{write_pgm, RenderRange};
use crate::sde::{exit_time_study, ExitTimeRow};

pub const DEFAULT_WALKS: u64 = 200;
pub const DEFAULT_STUDY_WALKS: u64 = 10_000;
pub const DEFAULT_ERROR_RANGE: f64 = 0.15;

fn with_ext(prefix: &str, ext: &str) -> PathBuf {
    PathBuf::from(format!("{prefix}.{ext}"))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_field(grid: &FieldGrid, prefix: &str, image: Option<RenderRange>) -> Result<()> {
    let csv = with_ext(prefix, "csv");
    ensure_parent(&csv)?;
    grid.write_csv(&csv)?;
    if let Some(range) = image {
        write_pgm(grid, range, &with_ext(prefix, "pgm"))?;
    }
    Ok(())
}

fn image_range(cfg: &RunConfig) -> Option<RenderRange> {
    if cfg.image || cfg.range.is_some() {
        Some(cfg.range.unwrap_or(RenderRange { lo: -1.0, hi: 1.0 }))
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct McReport {
    pub solution: FieldSolution,
    pub seconds: f64,
}

impl McReport {
    pub fn summary_line(&self) -> String {
        let rate = if self.seconds > 0.0 {
            self.solution.walks as f64 / self.seconds
        } else {
            0.0
        };
        format!(
            "walks={} censored={} seconds={:.3} walks_per_second={:.0}",
            self.solution.walks, self.solution.censored, self.seconds, rate
        )
    }
}

fn sweep<B: BoundaryOracle + ?Sized>(cfg: &RunConfig, boundary: &B, extent: f64) -> Result<McReport> {
    let est = Estimator::new(boundary, cfg.params()?, cfg.machine()?, cfg.walk_config()?).with_noise(cfg.noise);
    let grid = GridSpec {
        nx: cfg.nx,
        ny: cfg.ny,
        extent,
    };
    let progress = |done: usize, total: usize| {
        eprintln!("row {done}/{total}");
    };
    let start = Instant::now();
    let solution = est.solve_field(grid, cfg.walks_or(DEFAULT_WALKS), cfg.seed, cfg.workers, Some(&progress))?;
    let seconds = start.elapsed().as_secs_f64();
    for (i, j, msg) in &solution.failures {
        eprintln!("node ({i}, {j}) failed: {msg}");
    }
    Ok(McReport { solution, seconds })
}

/// Monte Carlo field over the configured domain.
pub fn solve_mc(cfg: &RunConfig) -> Result<McReport> {
    let domain = cfg.domain()?;
    let report = sweep(cfg, &domain, domain.extent())?;
    write_field(&report.solution.grid, &cfg.out_or("mc_field"), image_range(cfg))?;
    println!("{}", report.summary_line());
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct FdReport {
    pub grid: FieldGrid,
    pub iterations: usize,
    pub residual: f64,
    /// Residual recomputed independently from the returned field.
    pub verified_residual: f64,
    pub unknowns: usize,
    pub seconds: f64,
}

/// Finite-difference reference field.
pub fn solve_fd_cmd(cfg: &RunConfig) -> Result<FdReport> {
    let domain = cfg.domain()?;
    let params = cfg.params()?;
    let start = Instant::now();
    let system = rasterize(&domain, cfg.nx, cfg.ny)?;
    let sol = solve_fd(&system, &params, cfg.fd_tol, cfg.fd_max_iter)?;
    let seconds = start.elapsed().as_secs_f64();
    let verified = verify_residual(&system, &params, &sol.grid)?;
    write_field(&sol.grid, &cfg.out_or("fd_field"), image_range(cfg))?;
    println!(
        "unknowns={} iterations={} residual={:.3e} verified_residual={:.3e} seconds={:.3}",
        system.unknown_count(),
        sol.iterations,
        sol.residual,
        verified,
        seconds
    );
    Ok(FdReport {
        grid: sol.grid,
        iterations: sol.iterations,
        residual: sol.residual,
        verified_residual: verified,
        unknowns: system.unknown_count(),
        seconds,
    })
}

/// Compares two field CSVs. With `resample`, the second field is first
/// interpolated onto the lattice of the first.
pub fn compare_cmd(a: &Path, b: &Path, resample: bool, cfg: &RunConfig) -> Result<ErrorStats> {
    let fa = FieldGrid::read_csv(a)?;
    let mut fb = FieldGrid::read_csv(b)?;
    if resample && !fa.same_shape(&fb) {
        fb = fb.resample(fa.nx, fa.ny)?;
    }
    let stats = compare(&fa, &fb)?;
    let prefix = cfg.out_or("compare");
    let range = match cfg.range {
        Some(r) => r,
        None => RenderRange::symmetric(DEFAULT_ERROR_RANGE)?,
    };
    write_field(&stats.errors, &prefix, Some(range))?;
    println!("{}", stats.summary_line());
    Ok(stats)
}

#[derive(Debug, Clone)]
pub struct BiasReport {
    pub rows: Vec<ExitTimeRow>,
    /// Naive mean exit time at least the interpolated one in every row.
    pub ordering_ok: bool,
    /// Naive mean exit time non-increasing as dt shrinks, within two pooled
    /// standard errors.
    pub monotone_ok: bool,
}

pub fn bias_checks(rows: &[ExitTimeRow]) -> (bool, bool) {
    let ordering = rows.iter().all(|r| r.mean_tau_naive >= r.mean_tau_interpolated);
    let monotone = rows.windows(2).all(|w| {
        let pooled = w[0].stderr_naive.hypot(w[1].stderr_naive);
        w[1].mean_tau_naive <= w[0].mean_tau_naive + 2.0 * pooled
    });
    (ordering, monotone)
}

pub fn bias_study(cfg: &RunConfig, dts: &[f64], start: Point2) -> Result<BiasReport> {
    let domain = cfg.domain()?;
    let walks = cfg.walks_or(DEFAULT_STUDY_WALKS) as usize;
    let rows = exit_time_study(
        &domain,
        &cfg.params()?,
        &cfg.machine()?,
        start,
        dts,
        walks,
        cfg.seed,
        cfg.walk.max_steps,
    )?;
    let mut csv = String::from("dt,mean_tau_naive,mean_tau_interp,stderr\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.dt, r.mean_tau_naive, r.mean_tau_interpolated, r.stderr_naive
        ));
    }
    write_text(&with_ext(&cfg.out_or("bias_study"), "csv"), &csv)?;
    let (ordering_ok, monotone_ok) = bias_checks(&rows);
    let verdict = |ok: bool| if ok { "pass" } else { "fail" };
    let censored: u64 = rows.iter().map(|r| r.censored).sum();
    println!(
        "ordering={} monotone={} censored={censored}",
        verdict(ordering_ok),
        verdict(monotone_ok)
    );
    Ok(BiasReport {
        rows,
        ordering_ok,
        monotone_ok,
    })
}

/// Builds the boundary lookup table and writes `<out>.lut`.
pub fn make_lut(cfg: &RunConfig, resolution: Option<usize>) -> Result<LookupBoundaryOracle> {
    let domain = cfg.domain()?;
    let lut = LookupBoundaryOracle::build(&domain, resolution.unwrap_or(cfg.lut_resolution), LUT_VALUE_BITS)?;
    let path = with_ext(&cfg.out_or("boundary"), "lut");
    ensure_parent(&path)?;
    lut.write(&path)?;
    println!(
        "resolution={} payload_bytes={} file_bytes={}",
        lut.resolution(),
        lut.words().len(),
        lut.to_bytes().len()
    );
    Ok(lut)
}

/// Monte Carlo field using only the lookup table for boundary detection.
/// The table covers the configured domain's extent.
pub fn lut_solve(cfg: &RunConfig, lut_path: &Path) -> Result<McReport> {
    let extent = cfg.domain()?.extent();
    let lut = LookupBoundaryOracle::read(lut_path, extent)?;
    let report = sweep(cfg, &lut, extent)?;
    write_field(&report.solution.grid, &cfg.out_or("lut_field"), image_range(cfg))?;
    println!("{}", report.summary_line());
    Ok(report)
}

/// Renders a field CSV to a graymap at `out`.
pub fn render_cmd(field: &Path, out: &Path, range: Option<RenderRange>) -> Result<()> {
    let grid = FieldGrid::read_csv(field)?;
    ensure_parent(out)?;
    write_pgm(&grid, range.unwrap_or(RenderRange { lo: -1.0, hi: 1.0 }), out)
}
