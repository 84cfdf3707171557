//! Aggregation of walk payoffs into point estimates and whole fields.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{node_coord, Cell, FieldGrid};
use crate::geometry::{BoundaryOracle, NodeClass, Point2};
use crate::machine::{MachineModel, NoiseMode, NoiseSource};
use crate::sde::{payoff, run_walk, ExitCause, SdeParams, WalkConfig};

/// Running mean and sum of squared deviations (Welford), mergeable across
/// workers with Chan's pairwise update.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointEstimate {
    pub mean: f64,
    pub m2: f64,
    pub n: u64,
    pub n_censored: u64,
}

impl PointEstimate {
    pub fn push(&mut self, sample: f64) -> Result<()> {
        if !sample.is_finite() {
            return Err(Error::numerical(format!("non-finite sample {sample}")));
        }
        self.n += 1;
        let delta = sample - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (sample - self.mean);
        Ok(())
    }

    pub fn merge(&self, other: &PointEstimate) -> PointEstimate {
        let n_censored = self.n_censored + other.n_censored;
        if other.n == 0 {
            return PointEstimate { n_censored, ..*self };
        }
        if self.n == 0 {
            return PointEstimate { n_censored, ..*other };
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let (na, nb) = (self.n as f64, other.n as f64);
        PointEstimate {
            mean: self.mean + delta * nb / n as f64,
            m2: self.m2 + other.m2 + delta * delta * na * nb / n as f64,
            n,
            n_censored,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Standard error of the mean; 0 below two samples.
    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 * (self.n - 1) as f64)).sqrt()
        }
    }
}

/// Seed of walk `j` started from lattice node `(ix, iy)`.
///
/// Each coordinate is folded in through the SplitMix64 finalizer, so seeds
/// depend only on their inputs and never on which worker runs the walk.
pub fn seed_for(base_seed: u64, ix: u64, iy: u64, j: u64) -> u64 {
    const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut h = mix64(base_seed.wrapping_add(GAMMA));
    for v in [ix, iy, j] {
        h = mix64(h ^ v.wrapping_mul(GAMMA).wrapping_add(GAMMA));
    }
    h
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Lattice over the square `[-extent, extent]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub extent: f64,
}

/// Result of a field sweep.
#[derive(Debug, Clone)]
pub struct FieldSolution {
    pub grid: FieldGrid,
    /// Walks launched, including censored ones.
    pub walks: u64,
    pub censored: u64,
    /// Nodes whose estimate failed, with the reason; they are marked invalid.
    pub failures: Vec<(usize, usize, String)>,
}

/// Everything that stays fixed across the walks of a sweep.
pub struct Estimator<'a, B: BoundaryOracle + ?Sized> {
    pub boundary: &'a B,
    pub params: SdeParams,
    pub machine: MachineModel,
    pub walk: WalkConfig,
    pub noise: NoiseMode,
}

impl<'a, B: BoundaryOracle + ?Sized> Estimator<'a, B> {
    pub fn new(boundary: &'a B, params: SdeParams, machine: MachineModel, walk: WalkConfig) -> Self {
        Self {
            boundary,
            params,
            machine,
            walk,
            noise: NoiseMode::Ideal,
        }
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    /// Runs `n_walks` walks from `start`, seeding walk `j` with
    /// `seed_for(base_seed, ix, iy, j)` where `(ix, iy) = index`.
    pub fn estimate_point(
        &self,
        start: Point2,
        n_walks: u64,
        base_seed: u64,
        index: (u64, u64),
    ) -> Result<PointEstimate> {
        if n_walks == 0 {
            return Err(Error::usage("n_walks must be at least 1"));
        }
        let mut est = PointEstimate::default();
        for j in 0..n_walks {
            let mut noise = NoiseSource::new(seed_for(base_seed, index.0, index.1, j), self.noise);
            let outcome = run_walk(self.boundary, &self.params, &self.machine, &self.walk, start, &mut noise)?;
            if outcome.cause == ExitCause::MaxSteps {
                est.n_censored += 1;
                continue;
            }
            est.push(payoff(&outcome, &self.params)?)?;
        }
        if est.n == 0 {
            return Err(Error::EmptyEstimate {
                n_censored: est.n_censored,
            });
        }
        Ok(est)
    }

    /// Estimates every interior lattice node using `workers` threads
    /// (0 = one per core). Results do not depend on `workers`.
    ///
    /// `progress` is called with the number of completed grid rows each
    /// time a row finishes.
    pub fn solve_field(
        &self,
        grid: GridSpec,
        n_walks: u64,
        base_seed: u64,
        workers: usize,
        progress: Option<&(dyn Fn(usize, usize) + Sync)>,
    ) -> Result<FieldSolution> {
        if grid.nx < 2 || grid.ny < 2 {
            return Err(Error::usage("field grid must be at least 2x2"));
        }
        if !(grid.extent > 0.0 && grid.extent.is_finite()) {
            return Err(Error::usage("grid extent must be positive"));
        }
        self.walk.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;

        let row_left: Vec<AtomicUsize> = (0..grid.ny).map(|_| AtomicUsize::new(grid.nx)).collect();
        let rows_done = AtomicUsize::new(0);

        let results: Vec<(Cell, u64, u64, Option<String>)> = pool.install(|| {
            (0..grid.nx * grid.ny)
                .into_par_iter()
                .map(|k| {
                    let (i, j) = (k % grid.nx, k / grid.nx);
                    let p = Point2::new(
                        node_coord(i, grid.nx, grid.extent),
                        node_coord(j, grid.ny, grid.extent),
                    );
                    let r = match self.boundary.node_class(p) {
                        NodeClass::Fixed(v) => (Cell::fixed(v), 0, 0, None),
                        NodeClass::Invalid => (Cell::invalid(), 0, 0, None),
                        NodeClass::Interior => {
                            match self.estimate_point(p, n_walks, base_seed, (i as u64, j as u64)) {
                                Ok(e) => (Cell::solved(e.mean, e.stderr(), e.n), n_walks, e.n_censored, None),
                                Err(err) => {
                                    let censored = match err {
                                        Error::EmptyEstimate { n_censored } => n_censored,
                                        _ => 0,
                                    };
                                    (Cell::invalid(), n_walks, censored, Some(err.to_string()))
                                }
                            }
                        }
                    };
                    if row_left[j].fetch_sub(1, Ordering::AcqRel) == 1 {
                        let done = rows_done.fetch_add(1, Ordering::AcqRel) + 1;
                        if let Some(cb) = progress {
                            cb(done, grid.ny);
                        }
                    }
                    r
                })
                .collect()
        });

        let mut cells = Vec::with_capacity(results.len());
        let mut walks = 0;
        let mut censored = 0;
        let mut failures = Vec::new();
        for (k, (cell, w, c, failure)) in results.into_iter().enumerate() {
            cells.push(cell);
            walks += w;
            censored += c;
            if let Some(msg) = failure {
                failures.push((k % grid.nx, k / grid.nx, msg));
            }
        }
        Ok(FieldSolution {
            grid: FieldGrid::new(grid.nx, grid.ny, grid.extent, cells)?,
            walks,
            censored,
            failures,
        })
    }
}
