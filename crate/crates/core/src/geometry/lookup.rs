//! Table-lookup boundary function generator.
//!
//! Two ADCs quantize `x` and `y` into a row/column address; the addressed
//! byte holds the characteristic flag χ in bit 7 (set = outside the open
//! domain, halt) and a 7-bit boundary value code in bits 0–6. Codes decode as
//! `(v − 64) / 63`, so codes 1, 64 and 127 give exactly −1, 0 and +1. Code 0
//! is never written.
//!
//! File layout (little endian):
//!
//! ```text
//! 0..8    magic "FKLUT1\0\0"
//! 8..12   u32 resolution
//! 12      u8  value_bits
//! 13..16  reserved, zero
//! 16..    resolution² words, row-major (y index outer, x index inner)
//! ```

use std::fs;
use std::path::Path;

use super::{BoundaryOracle, Crossing, DomainSpec, ExitMode, NodeClass, Point2, RegionClass, RegionId};
use crate::error::{Error, Result};

pub const LUT_MAGIC: [u8; 8] = *b"FKLUT1\0\0";
pub const LUT_HEADER_LEN: usize = 16;
/// Bits per value code; the eighth bit of each word is the boundary flag.
pub const LUT_VALUE_BITS: u8 = 7;

const CHI_BIT: u8 = 0x80;
const VALUE_MASK: u8 = 0x7f;
const ZERO_CODE: u8 = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LookupBoundaryOracle {
    resolution: usize,
    value_bits: u8,
    extent: f64,
    words: Vec<u8>,
}

fn encode_value(f: f64) -> u8 {
    let code = (f * 63.0).round() + f64::from(ZERO_CODE);
    code.clamp(1.0, 127.0) as u8
}

fn decode_value(word: u8) -> f64 {
    f64::from(i16::from(word & VALUE_MASK) - i16::from(ZERO_CODE)) / 63.0
}

fn check_format(resolution: usize, value_bits: u8) -> Result<()> {
    if !resolution.is_power_of_two() || !(16..=4096).contains(&resolution) {
        return Err(Error::usage(format!(
            "lookup resolution must be a power of two in [16, 4096], got {resolution}"
        )));
    }
    if value_bits != LUT_VALUE_BITS {
        return Err(Error::usage(format!(
            "lookup tables hold 7 value bits, got {value_bits}"
        )));
    }
    Ok(())
}

impl LookupBoundaryOracle {
    /// Rasterizes `domain` at the cell centres of a `resolution²` table
    /// covering the domain's bounding square.
    pub fn build(domain: &DomainSpec, resolution: usize, value_bits: u8) -> Result<Self> {
        check_format(resolution, value_bits)?;
        let extent = domain.extent();
        let cell = 2.0 * extent / resolution as f64;
        let mut words = Vec::with_capacity(resolution * resolution);
        for j in 0..resolution {
            let y = -extent + (j as f64 + 0.5) * cell;
            for i in 0..resolution {
                let p = Point2::new(-extent + (i as f64 + 0.5) * cell, y);
                let word = match domain.classify(p) {
                    RegionClass::Interior => ZERO_CODE,
                    RegionClass::Boundary { value, .. } => CHI_BIT | encode_value(value),
                    RegionClass::Exterior => CHI_BIT | encode_value(domain.outer_value().at(p)),
                };
                words.push(word);
            }
        }
        Ok(Self {
            resolution,
            value_bits,
            extent,
            words,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn value_bits(&self) -> u8 {
        self.value_bits
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn words(&self) -> &[u8] {
        &self.words
    }

    pub fn cell_size(&self) -> f64 {
        2.0 * self.extent / self.resolution as f64
    }

    /// ADC conversion of one coordinate; saturates at the edge cells.
    #[inline]
    fn index(&self, v: f64) -> usize {
        let scaled = ((v + self.extent) / (2.0 * self.extent) * self.resolution as f64).floor();
        if scaled.is_nan() || scaled < 0.0 {
            0
        } else {
            (scaled as usize).min(self.resolution - 1)
        }
    }

    pub fn cell_indices(&self, p: Point2) -> (usize, usize) {
        (self.index(p.x), self.index(p.y))
    }

    /// Returns `(χ, f)` at `p`.
    #[inline]
    pub fn query(&self, p: Point2) -> (bool, f64) {
        let (i, j) = self.cell_indices(p);
        let word = self.words[j * self.resolution + i];
        (word & CHI_BIT != 0, decode_value(word))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LUT_HEADER_LEN + self.words.len());
        out.extend_from_slice(&LUT_MAGIC);
        out.extend_from_slice(&(self.resolution as u32).to_le_bytes());
        out.push(self.value_bits);
        out.extend_from_slice(&[0, 0, 0]);
        out.extend_from_slice(&self.words);
        out
    }

    /// Parses a table file. The format does not record the covered extent,
    /// so the caller supplies it.
    pub fn from_bytes(bytes: &[u8], extent: f64) -> Result<Self> {
        if bytes.len() < LUT_HEADER_LEN {
            return Err(Error::parse("lookup file shorter than its header"));
        }
        if bytes[..8] != LUT_MAGIC {
            return Err(Error::parse("lookup file has a bad magic number"));
        }
        let resolution = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let value_bits = bytes[12];
        if bytes[13..16] != [0, 0, 0] {
            return Err(Error::parse("lookup header reserved bytes are not zero"));
        }
        check_format(resolution, value_bits).map_err(|e| Error::parse(e.to_string()))?;
        let payload = &bytes[LUT_HEADER_LEN..];
        if payload.len() != resolution * resolution {
            return Err(Error::parse(format!(
                "lookup payload is {} bytes, expected {}",
                payload.len(),
                resolution * resolution
            )));
        }
        if payload.iter().any(|w| w & VALUE_MASK == 0) {
            return Err(Error::parse("lookup table uses reserved value code 0"));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::usage(format!("lookup extent must be positive, got {extent}")));
        }
        Ok(Self {
            resolution,
            value_bits,
            extent,
            words: payload.to_vec(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn read(path: &Path, extent: f64) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_bytes(&bytes, extent)
    }
}

impl BoundaryOracle for LookupBoundaryOracle {
    #[inline]
    fn is_interior(&self, p: Point2) -> bool {
        !self.query(p).0
    }

    fn node_class(&self, p: Point2) -> NodeClass {
        if p.x.abs() > self.extent || p.y.abs() > self.extent {
            return NodeClass::Invalid;
        }
        match self.query(p) {
            (true, value) => NodeClass::Fixed(value),
            (false, _) => NodeClass::Interior,
        }
    }

    fn detect_exit(&self, p0: Point2, p1: Point2, mode: ExitMode) -> Option<Crossing> {
        let (chi, value) = self.query(p1);
        if !chi {
            return None;
        }
        let (fraction, point, value) = match mode {
            ExitMode::Naive => (1.0, p1, value),
            ExitMode::Interpolated => {
                // bisect on χ; the table has no finer geometry to solve against
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                let mut hi_value = value;
                for _ in 0..24 {
                    let mid = 0.5 * (lo + hi);
                    match self.query(p0.lerp(p1, mid)) {
                        (true, v) => {
                            hi = mid;
                            hi_value = v;
                        }
                        (false, _) => lo = mid,
                    }
                }
                (hi, p0.lerp(p1, hi), hi_value)
            }
        };
        Some(Crossing {
            point,
            fraction,
            region: RegionId::Lookup,
            value,
        })
    }

    fn overload_value(&self, at: Point2) -> f64 {
        self.query(at).1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_codes_round_trip_exactly_at_benchmark_levels() {
        for (f, code) in [(-1.0, 1u8), (0.0, 64), (1.0, 127)] {
            assert_eq!(encode_value(f), code);
            assert_eq!(decode_value(code), f);
            assert_eq!(decode_value(code | CHI_BIT), f);
        }
        for k in -63..=63 {
            let f = k as f64 / 63.0 + 0.004;
            assert!((decode_value(encode_value(f)) - f).abs() <= 0.5 / 63.0 + 1e-12);
        }
    }

    #[test]
    fn benchmark_table_examples() {
        let lut = LookupBoundaryOracle::build(&DomainSpec::benchmark(), 256, 7).unwrap();
        assert_eq!(lut.words().len(), 65_536);
        assert_eq!(lut.query(Point2::new(-0.35, 0.35)), (true, -1.0));
        assert_eq!(lut.query(Point2::new(0.35, -0.35)), (true, 1.0));
        assert!(!lut.query(Point2::new(0.0, 0.0)).0);
        assert_eq!(lut.cell_indices(Point2::new(-1.0, -1.0)), (0, 0));
        assert_eq!(lut.cell_indices(Point2::new(2.0, 0.0)).0, 255);
        assert_eq!(lut.cell_indices(Point2::new(-7.0, f64::NAN)), (0, 0));
    }

    #[test]
    fn rejects_bad_format_parameters() {
        let d = DomainSpec::benchmark();
        assert!(LookupBoundaryOracle::build(&d, 100, 7).is_err());
        assert!(LookupBoundaryOracle::build(&d, 8, 7).is_err());
        assert!(LookupBoundaryOracle::build(&d, 8192, 7).is_err());
        assert!(LookupBoundaryOracle::build(&d, 256, 8).is_err());
    }

    #[test]
    fn file_round_trip_and_corruption() {
        let lut = LookupBoundaryOracle::build(&DomainSpec::benchmark(), 64, 7).unwrap();
        let bytes = lut.to_bytes();
        assert_eq!(bytes.len(), 16 + 64 * 64);
        assert_eq!(&bytes[..8], b"FKLUT1\0\0");
        assert_eq!(&bytes[8..12], &64u32.to_le_bytes());
        assert_eq!(bytes[12], 7);
        assert_eq!(LookupBoundaryOracle::from_bytes(&bytes, 1.0).unwrap(), lut);

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            LookupBoundaryOracle::from_bytes(&bad, 1.0),
            Err(Error::Parse(_))
        ));
        let mut short = bytes.clone();
        short.pop();
        assert!(LookupBoundaryOracle::from_bytes(&short, 1.0).is_err());
        let mut reserved = bytes;
        reserved[20] = CHI_BIT;
        assert!(LookupBoundaryOracle::from_bytes(&reserved, 1.0).is_err());
    }

    #[test]
    fn lookup_fidelity_away_from_boundaries() {
        let d = DomainSpec::benchmark();
        let lut = LookupBoundaryOracle::build(&d, 256, 7).unwrap();
        let diag = lut.cell_size() * std::f64::consts::SQRT_2;
        let n = lut.resolution();
        // probe on a shifted lattice so samples are not cell centres
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    -1.0 + (i as f64 + 0.3) * lut.cell_size(),
                    -1.0 + (j as f64 + 0.7) * lut.cell_size(),
                );
                let (chi, value) = lut.query(p);
                let class = d.classify(p);
                if d.distance_to_boundary(p) > diag {
                    assert_eq!(chi, !class.is_interior(), "at {p}");
                }
                if let RegionClass::Boundary { value: exact, .. } = class {
                    if chi {
                        assert!((value - exact).abs() <= 1.0 / 63.0);
                    }
                }
            }
        }
    }

    #[test]
    fn interpolated_exit_brackets_the_flagged_cell() {
        let lut = LookupBoundaryOracle::build(&DomainSpec::benchmark(), 256, 7).unwrap();
        let p0 = Point2::new(-0.35, 0.05);
        let p1 = Point2::new(-0.35, 0.15);
        let hit = lut.detect_exit(p0, p1, ExitMode::Interpolated).unwrap();
        assert_eq!(hit.value, -1.0);
        // the table boundary sits within one cell of the exact crossing at 0.10
        assert!((hit.point.y - 0.10).abs() <= lut.cell_size());
        assert!(lut.detect_exit(p0, Point2::new(-0.35, 0.06), ExitMode::Naive).is_none());
    }
}
