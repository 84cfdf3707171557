//! One realization of the Itô diffusion from a start point to its exit.
//!
//! The walk integrates `dX = ω dt + β dW` with Euler–Maruyama steps, where
//! `β = √(2α)` so that the generator of the process is `α∆ + ω·∇`. With that
//! convention the expectation of
//!
//! ```text
//! e^{−σ τ} g(X_τ) + ∫₀^τ e^{−σ t} f dt
//! ```
//!
//! solves `α∆u + ω·∇u − σu + f = 0` with `u = g` on the boundary.

use crate::error::{Error, Result};
use crate::estimator::{seed_for, PointEstimate};
use crate::geometry::{BoundaryOracle, ExitMode, Point2, RegionId};
use crate::machine::{MachineModel, NoiseMode, NoiseSource};
use rayon::prelude::*;

/// Constant PDE coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeParams {
    alpha: f64,
    omega: [f64; 2],
    sigma_abs: f64,
    source_f: f64,
    beta: f64,
}

impl SdeParams {
    pub fn new(alpha: f64, omega: [f64; 2], sigma_abs: f64, source_f: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::config(format!("alpha must be positive, got {alpha}")));
        }
        if !(sigma_abs >= 0.0 && sigma_abs.is_finite()) {
            return Err(Error::config(format!(
                "absorption must be non-negative, got {sigma_abs}"
            )));
        }
        if !(omega.iter().all(|w| w.is_finite()) && source_f.is_finite()) {
            return Err(Error::config("drift and source must be finite"));
        }
        Ok(Self {
            alpha,
            omega,
            sigma_abs,
            source_f,
            beta: (2.0 * alpha).sqrt(),
        })
    }

    /// Pure diffusion `α∆u = 0`.
    pub fn laplace(alpha: f64) -> Result<Self> {
        Self::new(alpha, [0.0, 0.0], 0.0, 0.0)
    }

    /// Drift-only transport; no noise reaches the path. Not a valid elliptic
    /// problem, but useful to check exit-time bookkeeping on a known path.
    pub fn drift_only(omega: [f64; 2]) -> Self {
        Self {
            alpha: 0.0,
            omega,
            sigma_abs: 0.0,
            source_f: 0.0,
            beta: 0.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn omega(&self) -> [f64; 2] {
        self.omega
    }

    pub fn sigma_abs(&self) -> f64 {
        self.sigma_abs
    }

    pub fn source_f(&self) -> f64 {
        self.source_f
    }

    /// Diffusion amplitude of the SDE.
    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Default for SdeParams {
    fn default() -> Self {
        Self::laplace(0.5).unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkConfig {
    pub dt: f64,
    pub max_steps: u64,
    pub exit_mode: ExitMode,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            max_steps: 1_000_000,
            exit_mode: ExitMode::Interpolated,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.max_steps == 0 {
            return Err(Error::config("max_steps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExitCause {
    HitBoundary(RegionId),
    Overload,
    MaxSteps,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkOutcome {
    /// Halt position as read back through the machine's readout.
    pub exit_point: Point2,
    pub tau: f64,
    pub cause: ExitCause,
    /// Boundary value at the halt position (0 for censored walks).
    pub boundary_value: f64,
    /// `∫ e^{−σ t} f dt` along the path.
    pub source_integral: f64,
    pub steps_taken: u64,
}

/// Runs one walk from `start` until the boundary, an overload, or the step
/// budget stops it.
pub fn run_walk<B: BoundaryOracle + ?Sized>(
    boundary: &B,
    params: &SdeParams,
    machine: &MachineModel,
    cfg: &WalkConfig,
    start: Point2,
    noise: &mut NoiseSource,
) -> Result<WalkOutcome> {
    if !boundary.is_interior(start) {
        return Err(Error::usage(format!("walk start {start} is not interior")));
    }
    cfg.validate()?;
    let dt = cfg.dt;
    let drift = Point2::new(params.omega[0] * dt, params.omega[1] * dt);
    let beta = params.beta;
    let has_source = params.source_f != 0.0;

    let mut p = start;
    let mut source_integral = 0.0;
    for k in 0..cfg.max_steps {
        let t_k = k as f64 * dt;
        if has_source {
            source_integral += (-params.sigma_abs * t_k).exp() * params.source_f * dt;
        }
        let (dwx, dwy) = noise.sample_increment(dt)?;
        let next = Point2::new(p.x + drift.x + beta * dwx, p.y + drift.y + beta * dwy);
        if !next.is_finite() {
            return Err(Error::numerical(format!("walk state became non-finite at step {k}")));
        }

        let finish = |fraction: f64, point: Point2, cause: ExitCause, value: f64| WalkOutcome {
            exit_point: machine.quantize_point(point),
            tau: match cfg.exit_mode {
                ExitMode::Naive => (k + 1) as f64 * dt,
                ExitMode::Interpolated => (k as f64 + fraction) * dt,
            },
            cause,
            boundary_value: value,
            source_integral,
            steps_taken: k + 1,
        };

        if machine.check_overload(next) {
            let (fraction, point) = match cfg.exit_mode {
                ExitMode::Naive => (1.0, next),
                ExitMode::Interpolated => {
                    let f = machine.overload_fraction(p, next);
                    // a boundary strictly before the range edge halts first
                    if let Some(hit) = boundary.detect_exit(p, next, cfg.exit_mode) {
                        if hit.fraction < f {
                            return Ok(finish(
                                hit.fraction,
                                hit.point,
                                ExitCause::HitBoundary(hit.region),
                                hit.value,
                            ));
                        }
                    }
                    (f, p.lerp(next, f))
                }
            };
            let point = Point2::new(
                point.x.clamp(-machine.range_limit, machine.range_limit),
                point.y.clamp(-machine.range_limit, machine.range_limit),
            );
            return Ok(finish(
                fraction,
                point,
                ExitCause::Overload,
                boundary.overload_value(point),
            ));
        }
        if let Some(hit) = boundary.detect_exit(p, next, cfg.exit_mode) {
            return Ok(finish(
                hit.fraction,
                hit.point,
                ExitCause::HitBoundary(hit.region),
                hit.value,
            ));
        }
        p = next;
    }
    Ok(WalkOutcome {
        exit_point: p,
        tau: cfg.max_steps as f64 * dt,
        cause: ExitCause::MaxSteps,
        boundary_value: 0.0,
        source_integral,
        steps_taken: cfg.max_steps,
    })
}

/// Feynman–Kac payoff `e^{−σ τ} g + ∫ e^{−σ t} f dt` of a finished walk.
pub fn payoff(outcome: &WalkOutcome, params: &SdeParams) -> Result<f64> {
    if outcome.cause == ExitCause::MaxSteps {
        return Err(Error::Censored {
            max_steps: outcome.steps_taken,
        });
    }
    let discount = if params.sigma_abs == 0.0 {
        1.0
    } else {
        (-params.sigma_abs * outcome.tau).exp()
    };
    Ok(discount * outcome.boundary_value + outcome.source_integral)
}

/// Mean exit times for one step size, both exit modes on identical paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitTimeRow {
    pub dt: f64,
    pub mean_tau_naive: f64,
    pub mean_tau_interpolated: f64,
    pub stderr_naive: f64,
    pub stderr_interpolated: f64,
    /// Walks excluded because either mode hit the step budget.
    pub censored: u64,
}

/// Measures how the discrete exit check overestimates the exit time.
///
/// For every step size, walk `j` uses the same noise stream in both exit
/// modes, so the naive halt can only come at or after the interpolated one.
pub fn exit_time_study<B: BoundaryOracle + ?Sized>(
    boundary: &B,
    params: &SdeParams,
    machine: &MachineModel,
    start: Point2,
    dt_list: &[f64],
    n_walks: usize,
    seed: u64,
    max_steps: u64,
) -> Result<Vec<ExitTimeRow>> {
    if dt_list.len() < 2 {
        return Err(Error::usage("exit-time study needs at least two step sizes"));
    }
    if dt_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::usage("step sizes must be strictly decreasing"));
    }
    if n_walks < 1000 {
        return Err(Error::usage(format!(
            "exit-time study needs at least 1000 walks, got {n_walks}"
        )));
    }
    dt_list
        .iter()
        .map(|&dt| {
            let naive_cfg = WalkConfig {
                dt,
                max_steps,
                exit_mode: ExitMode::Naive,
            };
            let interp_cfg = WalkConfig {
                exit_mode: ExitMode::Interpolated,
                ..naive_cfg
            };
            let taus = (0..n_walks)
                .into_par_iter()
                .map(|j| {
                    let s = seed_for(seed, 0, 0, j as u64);
                    let a = run_walk(
                        boundary,
                        params,
                        machine,
                        &naive_cfg,
                        start,
                        &mut NoiseSource::new(s, NoiseMode::Ideal),
                    )?;
                    let b = run_walk(
                        boundary,
                        params,
                        machine,
                        &interp_cfg,
                        start,
                        &mut NoiseSource::new(s, NoiseMode::Ideal),
                    )?;
                    let censored = a.cause == ExitCause::MaxSteps || b.cause == ExitCause::MaxSteps;
                    Ok((!censored).then_some((a.tau, b.tau)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut naive = PointEstimate::default();
            let mut interp = PointEstimate::default();
            let mut censored = 0;
            for pair in taus {
                match pair {
                    Some((a, b)) => {
                        naive.push(a)?;
                        interp.push(b)?;
                    }
                    None => censored += 1,
                }
            }
            Ok(ExitTimeRow {
                dt,
                mean_tau_naive: naive.mean(),
                mean_tau_interpolated: interp.mean(),
                stderr_naive: naive.stderr(),
                stderr_interpolated: interp.stderr(),
                censored,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DomainSpec;

    fn noise(seed: u64) -> NoiseSource {
        NoiseSource::ideal(seed)
    }

    #[test]
    fn beta_matches_generator() {
        let p = SdeParams::new(0.5, [0.0, 0.0], 0.0, 0.0).unwrap();
        assert_eq!(p.beta() * p.beta(), 2.0 * p.alpha());
        assert!(SdeParams::new(0.0, [0.0, 0.0], 0.0, 0.0).is_err());
        assert!(SdeParams::new(1.0, [0.0, 0.0], -1.0, 0.0).is_err());
    }

    #[test]
    fn walk_from_corner_terminates() {
        let d = DomainSpec::benchmark();
        let out = run_walk(
            &d,
            &SdeParams::default(),
            &MachineModel::default(),
            &WalkConfig::default(),
            Point2::new(0.9, 0.9),
            &mut noise(1),
        )
        .unwrap();
        assert!(matches!(
            out.cause,
            ExitCause::HitBoundary(_) | ExitCause::Overload
        ));
        assert!(out.tau > 0.0);
        assert_eq!(out.source_integral, 0.0);
    }

    #[test]
    fn deterministic_drift_transit_time() {
        let d = DomainSpec::benchmark();
        let params = SdeParams::drift_only([1.0, 0.0]);
        for (mode, tol) in [(ExitMode::Naive, 1e-3), (ExitMode::Interpolated, 1e-9)] {
            let cfg = WalkConfig {
                dt: 1e-3,
                max_steps: 10_000,
                exit_mode: mode,
            };
            let out = run_walk(
                &d,
                &params,
                &MachineModel::default(),
                &cfg,
                Point2::new(0.0, 0.0),
                &mut noise(5),
            )
            .unwrap();
            assert!((out.exit_point.x - 1.0).abs() < 1e-9, "{mode:?} {:?}", out);
            assert!((out.tau - 1.0).abs() <= tol, "{mode:?} tau {}", out.tau);
        }
    }

    #[test]
    fn start_must_be_interior() {
        let d = DomainSpec::benchmark();
        let r = run_walk(
            &d,
            &SdeParams::default(),
            &MachineModel::default(),
            &WalkConfig::default(),
            Point2::new(-0.35, 0.35),
            &mut noise(1),
        );
        assert!(matches!(r, Err(Error::Usage(_))));
    }

    #[test]
    fn step_budget_censors() {
        let d = DomainSpec::benchmark();
        let cfg = WalkConfig {
            dt: 1e-6,
            max_steps: 10,
            exit_mode: ExitMode::Interpolated,
        };
        let out = run_walk(
            &d,
            &SdeParams::default(),
            &MachineModel::default(),
            &cfg,
            Point2::new(0.0, 0.0),
            &mut noise(2),
        )
        .unwrap();
        assert_eq!(out.cause, ExitCause::MaxSteps);
        assert!(out.tau <= cfg.dt * cfg.max_steps as f64 + 1e-15);
        assert!(matches!(
            payoff(&out, &SdeParams::default()),
            Err(Error::Censored { .. })
        ));
    }

    #[test]
    fn payoff_examples() {
        let base = WalkOutcome {
            exit_point: Point2::new(0.35, -0.1),
            tau: 0.3,
            cause: ExitCause::HitBoundary(RegionId::Inclusion(1)),
            boundary_value: 1.0,
            source_integral: 0.0,
            steps_taken: 3000,
        };
        let lap = SdeParams::default();
        assert_eq!(payoff(&base, &lap).unwrap(), 1.0);
        let overload = WalkOutcome {
            cause: ExitCause::Overload,
            boundary_value: 0.0,
            ..base
        };
        assert_eq!(payoff(&overload, &lap).unwrap(), 0.0);
        let screened = SdeParams::new(0.5, [0.0, 0.0], 1.0, 0.0).unwrap();
        let instant = WalkOutcome {
            tau: 0.0,
            boundary_value: -0.7,
            ..base
        };
        assert_eq!(payoff(&instant, &screened).unwrap(), -0.7);
        assert!((payoff(&base, &screened).unwrap() - (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn identical_seed_identical_outcome() {
        let d = DomainSpec::benchmark();
        let run = |seed| {
            run_walk(
                &d,
                &SdeParams::default(),
                &MachineModel::default(),
                &WalkConfig::default(),
                Point2::new(0.2, 0.1),
                &mut noise(seed),
            )
            .unwrap()
        };
        let a = run(99);
        let b = run(99);
        assert_eq!(a.tau.to_bits(), b.tau.to_bits());
        assert_eq!(a.exit_point, b.exit_point);
        assert_eq!(a.cause, b.cause);
    }

    #[test]
    fn unit_disk_constant_data_gives_exact_one() {
        let d = DomainSpec::disk(1.0, 1.0).unwrap();
        for alpha in [0.1, 0.5, 2.0] {
            let params = SdeParams::laplace(alpha).unwrap();
            for seed in 0..50 {
                let out = run_walk(
                    &d,
                    &params,
                    &MachineModel::default(),
                    &WalkConfig::default(),
                    Point2::new(0.3, -0.2),
                    &mut noise(seed),
                )
                .unwrap();
                assert_eq!(payoff(&out, &params).unwrap(), 1.0);
            }
        }
    }

    #[test]
    fn source_term_accumulates() {
        // α∆u + 1 = 0 on the unit disk with u = 0 on the rim: u(0) = 1/(4α)
        let d = DomainSpec::disk(1.0, 0.0).unwrap();
        let params = SdeParams::new(0.5, [0.0, 0.0], 0.0, 1.0).unwrap();
        let cfg = WalkConfig::default();
        let mut est = PointEstimate::default();
        for seed in 0..2000 {
            let out = run_walk(
                &d,
                &params,
                &MachineModel::default(),
                &cfg,
                Point2::new(0.0, 0.0),
                &mut noise(seed),
            )
            .unwrap();
            est.push(payoff(&out, &params).unwrap()).unwrap();
        }
        assert!((est.mean() - 0.5).abs() < 3.0 * est.stderr() + 0.01, "{est:?}");
    }

    #[test]
    fn exit_time_ordering_and_drift_case() {
        let d = DomainSpec::benchmark();
        let m = MachineModel::default();
        let rows = exit_time_study(
            &d,
            &SdeParams::default(),
            &m,
            Point2::new(0.9, 0.9),
            &[4e-4, 1e-4],
            1000,
            7,
            1_000_000,
        )
        .unwrap();
        for r in &rows {
            assert!(r.mean_tau_naive >= r.mean_tau_interpolated);
        }

        let drift = SdeParams::drift_only([1.0, 0.3]);
        let rows = exit_time_study(
            &d,
            &drift,
            &m,
            Point2::new(0.0, 0.0),
            &[3e-3, 1e-3],
            1000,
            7,
            100_000,
        )
        .unwrap();
        for r in rows {
            let gap = r.mean_tau_naive - r.mean_tau_interpolated;
            assert!((0.0..=r.dt).contains(&gap), "{r:?}");
        }
    }

    #[test]
    fn exit_time_study_preconditions() {
        let d = DomainSpec::benchmark();
        let m = MachineModel::default();
        let p = SdeParams::default();
        let s = Point2::new(0.9, 0.9);
        assert!(exit_time_study(&d, &p, &m, s, &[1e-4], 1000, 1, 10).is_err());
        assert!(exit_time_study(&d, &p, &m, s, &[1e-4, 2e-4], 1000, 1, 10).is_err());
        assert!(exit_time_study(&d, &p, &m, s, &[2e-4, 1e-4], 999, 1, 10).is_err());
    }
}
