//! Behavioural model of the analog signal chain: noise sources feeding the
//! path integrators, the ±1 machine value range, and readout precision.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Operating mode of a noise source.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum NoiseMode {
    /// Zero-mean, unit-variance white Gaussian noise on both axes.
    #[default]
    Ideal,
    /// Noise with a constant offset `dc_bias`, passed through a first-order
    /// DC-removal loop with time constant `time_constant` (machine time).
    Biased {
        dc_bias: [f64; 2],
        time_constant: f64,
    },
}

/// One two-axis noise generator.
///
/// Normal variates come from the Marsaglia polar method driven by a ChaCha8
/// stream, which yields exactly one `(x, y)` pair per accepted draw. A source
/// is owned by a single walk; streams for different walks come from
/// different seeds.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    mode: NoiseMode,
    bias_estimate: [f64; 2],
}

impl NoiseSource {
    pub fn new(seed: u64, mode: NoiseMode) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
            bias_estimate: [0.0; 2],
        }
    }

    pub fn ideal(seed: u64) -> Self {
        Self::new(seed, NoiseMode::Ideal)
    }

    pub fn mode(&self) -> NoiseMode {
        self.mode
    }

    /// Current state of the DC-removal loop (zero in ideal mode).
    pub fn bias_estimate(&self) -> [f64; 2] {
        self.bias_estimate
    }

    #[inline]
    fn uniform_pm1(&mut self) -> f64 {
        // 53 random bits onto [-1, 1)
        let u = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        2.0 * u - 1.0
    }

    /// A pair of independent standard normal variates.
    #[inline]
    pub fn standard_normal_pair(&mut self) -> (f64, f64) {
        loop {
            let u = self.uniform_pm1();
            let v = self.uniform_pm1();
            let s = u * u + v * v;
            if s < 1.0 && s > 0.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                return (u * factor, v * factor);
            }
        }
    }

    /// Wiener increments `(dWx, dWy)` over a time step `dt`.
    #[inline]
    pub fn sample_increment(&mut self, dt: f64) -> Result<(f64, f64)> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::usage(format!("time step must be positive, got {dt}")));
        }
        let (zx, zy) = self.standard_normal_pair();
        let scale = dt.sqrt();
        match self.mode {
            NoiseMode::Ideal => Ok((zx * scale, zy * scale)),
            NoiseMode::Biased {
                dc_bias,
                time_constant,
            } => {
                let gain = (dt / time_constant).min(1.0);
                let mut out = [0.0; 2];
                for (axis, z) in [zx, zy].into_iter().enumerate() {
                    let raw = z + dc_bias[axis];
                    out[axis] = raw - self.bias_estimate[axis];
                    self.bias_estimate[axis] += gain * (raw - self.bias_estimate[axis]);
                }
                Ok((out[0] * scale, out[1] * scale))
            }
        }
    }
}

/// Fidelity limits of the machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineModel {
    /// Largest representable magnitude; exceeding it is an overload.
    pub range_limit: f64,
    /// Readout resolution; 0 reads back exact values.
    pub readout_quantum: f64,
    pub overload_enabled: bool,
}

impl Default for MachineModel {
    fn default() -> Self {
        Self {
            range_limit: 1.0,
            readout_quantum: 1e-4,
            overload_enabled: true,
        }
    }
}

impl MachineModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.range_limit > 0.0 && self.range_limit.is_finite()) {
            return Err(Error::config("machine range limit must be positive"));
        }
        if !(self.readout_quantum >= 0.0 && self.readout_quantum < self.range_limit) {
            return Err(Error::config(
                "readout quantum must be non-negative and below the range limit",
            ));
        }
        Ok(())
    }

    /// Rounds to the nearest readout level (ties to even) within the range.
    pub fn quantize_readout(&self, v: f64) -> f64 {
        let q = if self.readout_quantum > 0.0 {
            (v / self.readout_quantum).round_ties_even() * self.readout_quantum
        } else {
            v
        };
        q.clamp(-self.range_limit, self.range_limit)
    }

    pub fn quantize_point(&self, p: Point2) -> Point2 {
        Point2::new(self.quantize_readout(p.x), self.quantize_readout(p.y))
    }

    #[inline]
    pub fn check_overload(&self, p: Point2) -> bool {
        self.overload_enabled && (p.x.abs() > self.range_limit || p.y.abs() > self.range_limit)
    }

    /// Fraction along `p0 -> p1` at which the path leaves the range box,
    /// for `p0` inside it and `p1` outside.
    pub(crate) fn overload_fraction(&self, p0: Point2, p1: Point2) -> f64 {
        crate::geometry::square_exit(p0, p1 - p0, self.range_limit)
            .map_or(1.0, |(lambda, _)| lambda)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(source: &mut NoiseSource, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|_| source.sample_increment(dt).unwrap().0).collect()
    }

    #[test]
    fn ideal_increments_have_wiener_moments() {
        let dt = 1e-4;
        let n = 1_000_000;
        let mut src = NoiseSource::ideal(7);
        let xs = stream(&mut src, dt, n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.02, "var {var}");

        let lag1 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>()
            / ((n - 1) as f64 * var);
        assert!(lag1.abs() < 4.0 / (n as f64).sqrt(), "rho1 {lag1}");
    }

    #[test]
    fn axes_are_uncorrelated() {
        let n = 200_000;
        let mut src = NoiseSource::ideal(11);
        let mut sxy = 0.0;
        for _ in 0..n {
            let (a, b) = src.standard_normal_pair();
            sxy += a * b;
        }
        assert!((sxy / n as f64).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn same_seed_same_stream() {
        let a = stream(&mut NoiseSource::ideal(42), 1e-3, 1000);
        let b = stream(&mut NoiseSource::ideal(42), 1e-3, 1000);
        let c = stream(&mut NoiseSource::ideal(43), 1e-3, 1000);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_non_positive_dt() {
        let mut src = NoiseSource::ideal(1);
        assert!(matches!(src.sample_increment(0.0), Err(Error::Usage(_))));
        assert!(src.sample_increment(-1e-3).is_err());
    }

    #[test]
    fn dc_removal_loop_rejects_bias() {
        let dt = 1e-4;
        let mode = NoiseMode::Biased {
            dc_bias: [0.5, -0.5],
            time_constant: 0.01,
        };
        let mut src = NoiseSource::new(3, mode);
        let steps = (1.0 / dt) as usize;
        let start = (0.1 / dt) as usize;
        let mut sum = 0.0;
        for k in 0..steps {
            let (dx, _) = src.sample_increment(dt).unwrap();
            if k >= start {
                sum += dx / dt.sqrt();
            }
        }
        let mean = sum / (steps - start) as f64;
        assert!(mean.abs() < 5e-3, "residual dc {mean}");
    }

    #[test]
    fn bias_estimate_converges_in_ensemble() {
        // after 10 time constants the loop state is within 1% of the offset;
        // a single source fluctuates, so average over independent sources
        let dt = 1e-4;
        let tc = 0.01;
        let mode = NoiseMode::Biased {
            dc_bias: [0.5, 0.25],
            time_constant: tc,
        };
        let sources = 10_000;
        let steps = (10.0 * tc / dt).round() as usize;
        let mut acc = [0.0; 2];
        for s in 0..sources {
            let mut src = NoiseSource::new(1000 + s as u64, mode);
            for _ in 0..steps {
                src.sample_increment(dt).unwrap();
            }
            let b = src.bias_estimate();
            acc[0] += b[0];
            acc[1] += b[1];
        }
        let mean = [acc[0] / sources as f64, acc[1] / sources as f64];
        assert!((mean[0] - 0.5).abs() < 0.005, "{mean:?}");
        assert!((mean[1] - 0.25).abs() < 0.0025, "{mean:?}");
    }

    #[test]
    fn quantize_examples() {
        let m = MachineModel::default();
        let q = m.quantize_readout(0.12345);
        assert!((q - 0.1234).abs() < 1e-12 || (q - 0.1235).abs() < 1e-12);
        let exact = MachineModel {
            readout_quantum: 0.0,
            ..m
        };
        assert_eq!(exact.quantize_readout(0.5), 0.5);
        assert_eq!(m.quantize_readout(1.7), 1.0);
        assert_eq!(m.quantize_readout(-3.0), -1.0);
        // ties go to the even level
        let coarse = MachineModel {
            readout_quantum: 0.5,
            ..m
        };
        assert_eq!(coarse.quantize_readout(0.25), 0.0);
        assert_eq!(coarse.quantize_readout(0.75), 1.0);
    }

    #[test]
    fn overload_examples() {
        let m = MachineModel::default();
        assert!(m.check_overload(Point2::new(1.01, 0.0)));
        assert!(!m.check_overload(Point2::new(0.99, -0.99)));
        let off = MachineModel {
            overload_enabled: false,
            ..m
        };
        assert!(!off.check_overload(Point2::new(0.0, -1.2)));
        let f = m.overload_fraction(Point2::new(0.99, 0.0), Point2::new(1.01, 0.0));
        assert!((f - 0.5).abs() < 1e-12);
    }
}
