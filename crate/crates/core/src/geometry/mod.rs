//! Solution domains and boundary queries.
//!
//! A domain is an outer shape (square or disk centred on the origin) with any
//! number of disjoint circular inclusions cut out of it. Boundaries are
//! closed: a point exactly on a boundary, or inside an inclusion, is not part
//! of the open set the walks live in.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use crate::error::{Error, Result};

mod lookup;

pub use lookup::{LookupBoundaryOracle, LUT_HEADER_LEN, LUT_MAGIC, LUT_VALUE_BITS};

/// A point in machine units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Point at `fraction` along the segment `self -> to`.
    pub fn lerp(self, to: Point2, fraction: f64) -> Point2 {
        Point2::new(
            self.x + fraction * (to.x - self.x),
            self.y + fraction * (to.y - self.y),
        )
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, rhs: f64) -> Point2 {
        Point2::new(self.x * rhs, self.y * rhs)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Dirichlet data on one boundary piece.
///
/// `Field` is evaluated wherever a walk halts on (or, for rasterized
/// solvers, near) the piece, so it should be a smooth extension of the
/// boundary data.
#[derive(Clone)]
pub enum BoundaryValue {
    Constant(f64),
    Field(Arc<dyn Fn(Point2) -> f64 + Send + Sync>),
}

impl BoundaryValue {
    pub fn field(f: impl Fn(Point2) -> f64 + Send + Sync + 'static) -> Self {
        BoundaryValue::Field(Arc::new(f))
    }

    #[inline]
    pub fn at(&self, p: Point2) -> f64 {
        match self {
            BoundaryValue::Constant(c) => *c,
            BoundaryValue::Field(f) => f(p),
        }
    }

    pub fn constant(&self) -> Option<f64> {
        match self {
            BoundaryValue::Constant(c) => Some(*c),
            BoundaryValue::Field(_) => None,
        }
    }
}

impl fmt::Debug for BoundaryValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryValue::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            BoundaryValue::Field(_) => f.write_str("Field(..)"),
        }
    }
}

impl From<f64> for BoundaryValue {
    fn from(c: f64) -> Self {
        BoundaryValue::Constant(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OuterShape {
    /// The square `[-half_width, half_width]²`.
    Square { half_width: f64 },
    /// The disk of `radius` around the origin.
    Disk { radius: f64 },
}

impl OuterShape {
    /// Half-width of the smallest origin-centred square containing the shape.
    pub fn extent(&self) -> f64 {
        match *self {
            OuterShape::Square { half_width } => half_width,
            OuterShape::Disk { radius } => radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Inclusion {
    pub center: Point2,
    pub radius: f64,
    pub value: BoundaryValue,
}

impl Inclusion {
    pub fn new(center: Point2, radius: f64, value: impl Into<BoundaryValue>) -> Self {
        Self {
            center,
            radius,
            value: value.into(),
        }
    }
}

/// Identifies one boundary piece. `Outer < Inclusion(0) < Inclusion(1) < ...`,
/// which is the tie-break order for simultaneous crossings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RegionId {
    Outer,
    Inclusion(usize),
    /// A boundary reported by the lookup-table oracle, which does not know
    /// which piece it encodes.
    Lookup,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegionClass {
    Interior,
    Boundary { region: RegionId, value: f64 },
    Exterior,
}

impl RegionClass {
    pub fn is_interior(&self) -> bool {
        matches!(self, RegionClass::Interior)
    }
}

/// First boundary contact along a step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub point: Point2,
    /// Position along the step in `[0, 1]`.
    pub fraction: f64,
    pub region: RegionId,
    /// Boundary value at `point`.
    pub value: f64,
}

/// How a walk decides it has left the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExitMode {
    /// Halt at the end of the first step that lands outside the open domain.
    Naive,
    /// Same trigger, but the exit is placed at the crossing along that step.
    #[default]
    Interpolated,
}

/// Classification of a lattice node for field solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeClass {
    Interior,
    Fixed(f64),
    Invalid,
}

/// What a walk needs to know about the boundary.
///
/// Implemented by the exact geometry ([`DomainSpec`]) and by the quantized
/// function-generator emulation ([`LookupBoundaryOracle`]).
pub trait BoundaryOracle: Sync {
    fn is_interior(&self, p: Point2) -> bool;

    fn node_class(&self, p: Point2) -> NodeClass;

    /// Exit test for the step `p0 -> p1`, where `p0` is interior.
    fn detect_exit(&self, p0: Point2, p1: Point2, mode: ExitMode) -> Option<Crossing>;

    /// Boundary value used when the walk halts on overload at `at`.
    fn overload_value(&self, at: Point2) -> f64;
}

#[derive(Debug, Clone)]
pub struct DomainSpec {
    outer: OuterShape,
    outer_value: BoundaryValue,
    inclusions: Vec<Inclusion>,
}

impl DomainSpec {
    pub fn new(
        outer: OuterShape,
        outer_value: impl Into<BoundaryValue>,
        inclusions: Vec<Inclusion>,
    ) -> Result<Self> {
        let domain = Self {
            outer,
            outer_value: outer_value.into(),
            inclusions,
        };
        domain.validate()?;
        Ok(domain)
    }

    /// Square `[-1,1]²` with value 0, minus the discs of radius 0.25 at
    /// (−0.35, +0.35) held at −1 and (+0.35, −0.35) held at +1.
    pub fn benchmark() -> Self {
        Self::new(
            OuterShape::Square { half_width: 1.0 },
            0.0,
            vec![
                Inclusion::new(Point2::new(-0.35, 0.35), 0.25, -1.0),
                Inclusion::new(Point2::new(0.35, -0.35), 0.25, 1.0),
            ],
        )
        .expect("benchmark geometry is valid")
    }

    /// Disk of `radius` around the origin with Dirichlet data `value`.
    pub fn disk(radius: f64, value: impl Into<BoundaryValue>) -> Result<Self> {
        Self::new(OuterShape::Disk { radius }, value, Vec::new())
    }

    pub fn outer(&self) -> OuterShape {
        self.outer
    }

    pub fn outer_value(&self) -> &BoundaryValue {
        &self.outer_value
    }

    pub fn inclusions(&self) -> &[Inclusion] {
        &self.inclusions
    }

    pub fn extent(&self) -> f64 {
        self.outer.extent()
    }

    fn validate(&self) -> Result<()> {
        let check_value = |what: &str, v: &BoundaryValue| match v.constant() {
            Some(c) if !(-1.0..=1.0).contains(&c) => Err(Error::config(format!(
                "{what} boundary value {c} outside the machine range [-1, 1]"
            ))),
            _ => Ok(()),
        };
        match self.outer {
            OuterShape::Square { half_width: w } | OuterShape::Disk { radius: w }
                if !(w.is_finite() && w > 0.0) =>
            {
                return Err(Error::config(format!("outer size must be positive, got {w}")));
            }
            _ => {}
        }
        check_value("outer", &self.outer_value)?;
        for (k, inc) in self.inclusions.iter().enumerate() {
            if !(inc.radius.is_finite() && inc.radius > 0.0) || !inc.center.is_finite() {
                return Err(Error::config(format!(
                    "inclusion {k}: radius must be positive and center finite"
                )));
            }
            let inside = match self.outer {
                OuterShape::Square { half_width } => {
                    inc.center.x.abs() + inc.radius < half_width
                        && inc.center.y.abs() + inc.radius < half_width
                }
                OuterShape::Disk { radius } => inc.center.norm() + inc.radius < radius,
            };
            if !inside {
                return Err(Error::config(format!(
                    "inclusion {k} does not lie strictly inside the outer boundary"
                )));
            }
            check_value(&format!("inclusion {k}"), &inc.value)?;
            for (m, other) in self.inclusions.iter().enumerate().skip(k + 1) {
                if (inc.center - other.center).norm() <= inc.radius + other.radius {
                    return Err(Error::config(format!("inclusions {k} and {m} overlap")));
                }
            }
        }
        Ok(())
    }

    pub fn classify(&self, p: Point2) -> RegionClass {
        let outer = match self.outer {
            OuterShape::Square { half_width: h } => {
                let m = p.x.abs().max(p.y.abs());
                m.partial_cmp(&h)
            }
            OuterShape::Disk { radius } => p.norm_sq().partial_cmp(&(radius * radius)),
        };
        match outer {
            Some(std::cmp::Ordering::Less) => {}
            Some(std::cmp::Ordering::Equal) => {
                return RegionClass::Boundary {
                    region: RegionId::Outer,
                    value: self.outer_value.at(p),
                }
            }
            _ => return RegionClass::Exterior,
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            if (p - inc.center).norm_sq() <= inc.radius * inc.radius {
                return RegionClass::Boundary {
                    region: RegionId::Inclusion(k),
                    value: inc.value.at(p),
                };
            }
        }
        RegionClass::Interior
    }

    pub fn boundary_value(&self, region: RegionId) -> Result<&BoundaryValue> {
        match region {
            RegionId::Outer => Ok(&self.outer_value),
            RegionId::Inclusion(k) => self
                .inclusions
                .get(k)
                .map(|inc| &inc.value)
                .ok_or_else(|| Error::usage(format!("no inclusion with index {k}"))),
            RegionId::Lookup => Err(Error::usage(
                "lookup regions carry no value in an exact domain",
            )),
        }
    }

    /// Earliest boundary crossing on the straight step `p0 -> p1`.
    ///
    /// `p0` must be interior. Returns `None` when `p1` is still interior, even
    /// if the step clipped an inclusion on the way.
    pub fn segment_exit(&self, p0: Point2, p1: Point2) -> Option<Crossing> {
        debug_assert!(self.classify(p0).is_interior(), "segment_exit from {p0}");
        if self.classify(p1).is_interior() {
            return None;
        }
        let d = p1 - p0;
        let mut best: Option<(f64, RegionId, Point2)> = None;
        let mut consider = |lambda: f64, region: RegionId, point: Point2| {
            if best.is_none_or(|(b, _, _)| lambda < b) {
                best = Some((lambda, region, point));
            }
        };

        match self.outer {
            OuterShape::Square { half_width: h } => {
                if let Some((lambda, point)) = square_exit(p0, d, h) {
                    consider(lambda, RegionId::Outer, point);
                }
            }
            OuterShape::Disk { radius } => {
                if let Some(lambda) = disk_exit(p0, d, radius) {
                    let q = p0 + d * lambda;
                    consider(lambda, RegionId::Outer, q * (radius / q.norm()));
                }
            }
        }
        for (k, inc) in self.inclusions.iter().enumerate() {
            if let Some(lambda) = circle_entry(p0, d, inc.center, inc.radius) {
                consider(lambda, RegionId::Inclusion(k), p0 + d * lambda);
            }
        }

        let (fraction, region, point) = match best {
            Some(b) => b,
            // p1 is on or past a boundary but no crossing solved to within
            // [0, 1] (rounding at a grazing contact); the endpoint is the exit.
            None => {
                let region = match self.classify(p1) {
                    RegionClass::Boundary { region, .. } => region,
                    _ => RegionId::Outer,
                };
                (1.0, region, p1)
            }
        };
        let value = match region {
            RegionId::Outer => self.outer_value.at(point),
            RegionId::Inclusion(k) => self.inclusions[k].value.at(point),
            RegionId::Lookup => unreachable!(),
        };
        Some(Crossing {
            point,
            fraction,
            region,
            value,
        })
    }

    /// Unsigned distance from `p` to the nearest boundary piece.
    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        let outer = match self.outer {
            OuterShape::Square { half_width: h } => {
                let (ax, ay) = (p.x.abs(), p.y.abs());
                if ax <= h && ay <= h {
                    (h - ax).min(h - ay)
                } else {
                    Point2::new((ax - h).max(0.0), (ay - h).max(0.0)).norm()
                }
            }
            OuterShape::Disk { radius } => (p.norm() - radius).abs(),
        };
        self.inclusions
            .iter()
            .map(|inc| ((p - inc.center).norm() - inc.radius).abs())
            .fold(outer, f64::min)
    }
}

/// Fraction at which `p0 + λ d` first reaches the boundary of the square
/// `[-h, h]²`, for `p0` strictly inside. The crossing coordinate is snapped
/// onto the edge.
pub(crate) fn square_exit(p0: Point2, d: Point2, h: f64) -> Option<(f64, Point2)> {
    let axis = |p: f64, dv: f64| -> Option<(f64, f64)> {
        if dv > 0.0 && p + dv >= h {
            Some(((h - p) / dv, h))
        } else if dv < 0.0 && p + dv <= -h {
            Some(((-h - p) / dv, -h))
        } else {
            None
        }
    };
    match (axis(p0.x, d.x), axis(p0.y, d.y)) {
        (None, None) => None,
        (Some((lx, ex)), None) => Some((lx, Point2::new(ex, p0.y + lx * d.y))),
        (None, Some((ly, ey))) => Some((ly, Point2::new(p0.x + ly * d.x, ey))),
        (Some((lx, ex)), Some((ly, ey))) => {
            if lx <= ly {
                Some((lx, Point2::new(ex, p0.y + lx * d.y)))
            } else {
                Some((ly, Point2::new(p0.x + ly * d.x, ey)))
            }
        }
    }
    .map(|(l, q)| (l.clamp(0.0, 1.0), q))
}

/// Smaller root in `[0, 1]` of `|p0 + λ d − c|² = r²` for `p0` outside the
/// circle.
fn circle_entry(p0: Point2, d: Point2, c: Point2, r: f64) -> Option<f64> {
    let rel = p0 - c;
    let a = d.norm_sq();
    let b = d.dot(rel);
    let c0 = rel.norm_sq() - r * r;
    if a == 0.0 || b >= 0.0 {
        return None;
    }
    let disc = b * b - a * c0;
    if disc < 0.0 {
        return None;
    }
    // c0 / (−b + √disc) is the small root without cancellation.
    let lambda = c0.max(0.0) / (-b + disc.sqrt());
    (lambda <= 1.0).then_some(lambda)
}

/// Larger root of `|p0 + λ d|² = R²` for `p0` inside the disk.
fn disk_exit(p0: Point2, d: Point2, r: f64) -> Option<f64> {
    let a = d.norm_sq();
    if a == 0.0 {
        return None;
    }
    let b = d.dot(p0);
    let c0 = p0.norm_sq() - r * r;
    let sq = (b * b - a * c0).max(0.0).sqrt();
    let lambda = if b > 0.0 {
        -c0.min(0.0) / (b + sq)
    } else {
        (-b + sq) / a
    };
    (lambda <= 1.0).then_some(lambda.max(0.0))
}

impl BoundaryOracle for DomainSpec {
    fn is_interior(&self, p: Point2) -> bool {
        self.classify(p).is_interior()
    }

    fn node_class(&self, p: Point2) -> NodeClass {
        match self.classify(p) {
            RegionClass::Interior => NodeClass::Interior,
            RegionClass::Boundary { value, .. } => NodeClass::Fixed(value),
            RegionClass::Exterior => NodeClass::Invalid,
        }
    }

    fn detect_exit(&self, p0: Point2, p1: Point2, mode: ExitMode) -> Option<Crossing> {
        match mode {
            ExitMode::Interpolated => self.segment_exit(p0, p1),
            ExitMode::Naive => match self.classify(p1) {
                RegionClass::Interior => None,
                RegionClass::Boundary { region, value } => Some(Crossing {
                    point: p1,
                    fraction: 1.0,
                    region,
                    value,
                }),
                RegionClass::Exterior => Some(Crossing {
                    point: p1,
                    fraction: 1.0,
                    region: RegionId::Outer,
                    value: self.outer_value.at(p1),
                }),
            },
        }
    }

    fn overload_value(&self, at: Point2) -> f64 {
        self.outer_value.at(at)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bench() -> DomainSpec {
        DomainSpec::benchmark()
    }

    #[test]
    fn classify_examples() {
        let d = bench();
        assert_eq!(d.classify(Point2::new(0.0, 0.0)), RegionClass::Interior);
        assert_eq!(
            d.classify(Point2::new(-0.35, 0.10)),
            RegionClass::Boundary {
                region: RegionId::Inclusion(0),
                value: -1.0
            }
        );
        assert_eq!(d.classify(Point2::new(1.2, 0.0)), RegionClass::Exterior);
        assert_eq!(
            d.classify(Point2::new(1.0, 0.3)),
            RegionClass::Boundary {
                region: RegionId::Outer,
                value: 0.0
            }
        );
        // circle interiors are outside the open domain
        assert!(matches!(
            d.classify(Point2::new(0.35, -0.35)),
            RegionClass::Boundary {
                region: RegionId::Inclusion(1),
                value
            } if value == 1.0
        ));
    }

    #[test]
    fn boundary_values_of_benchmark() {
        let d = bench();
        let v = |r| d.boundary_value(r).unwrap().constant().unwrap();
        assert_eq!(v(RegionId::Outer), 0.0);
        assert_eq!(v(RegionId::Inclusion(0)), -1.0);
        assert_eq!(v(RegionId::Inclusion(1)), 1.0);
        assert!(matches!(
            d.boundary_value(RegionId::Inclusion(2)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn invalid_domains_rejected() {
        let sq = OuterShape::Square { half_width: 1.0 };
        let touching_edge = Inclusion::new(Point2::new(0.8, 0.0), 0.2, 1.0);
        assert!(DomainSpec::new(sq, 0.0, vec![touching_edge]).is_err());
        let a = Inclusion::new(Point2::new(0.0, 0.0), 0.3, 1.0);
        let b = Inclusion::new(Point2::new(0.5, 0.0), 0.3, 1.0);
        assert!(DomainSpec::new(sq, 0.0, vec![a, b]).is_err());
        let zero = Inclusion::new(Point2::new(0.0, 0.0), 0.0, 1.0);
        assert!(DomainSpec::new(sq, 0.0, vec![zero]).is_err());
        assert!(DomainSpec::new(sq, 1.5, vec![]).is_err());
    }

    #[test]
    fn segment_exit_examples() {
        let d = bench();
        let hit = d
            .segment_exit(Point2::new(0.99, 0.0), Point2::new(1.01, 0.0))
            .unwrap();
        assert_eq!(hit.region, RegionId::Outer);
        assert_eq!(hit.point.x, 1.0);
        assert!((hit.fraction - 0.5).abs() < 1e-12);

        let hit = d
            .segment_exit(Point2::new(-0.35, 0.05), Point2::new(-0.35, 0.15))
            .unwrap();
        assert_eq!(hit.region, RegionId::Inclusion(0));
        assert_eq!(hit.value, -1.0);
        assert!((hit.fraction - 0.5).abs() < 1e-12);
        assert!((hit.point.y - 0.10).abs() < 1e-12);

        // independent oracle: bisection on classify along the same segment
        let (p0, p1) = (Point2::new(-0.35, 0.05), Point2::new(-0.35, 0.15));
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if d.classify(p0.lerp(p1, mid)).is_interior() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((hit.fraction - hi).abs() < 1e-12);

        assert!(d
            .segment_exit(Point2::new(0.0, 0.0), Point2::new(0.01, 0.01))
            .is_none());
    }

    #[test]
    fn earliest_crossing_wins() {
        let d = bench();
        // passes through circle 0 before reaching the left edge
        let hit = d
            .segment_exit(Point2::new(-0.05, 0.35), Point2::new(-1.05, 0.35))
            .unwrap();
        assert_eq!(hit.region, RegionId::Inclusion(0));
        assert!((hit.point.x - (-0.10)).abs() < 1e-12);
    }

    #[test]
    fn disk_exit_lands_on_circle() {
        let d = DomainSpec::disk(1.0, 1.0).unwrap();
        let hit = d
            .segment_exit(Point2::new(0.6, 0.79), Point2::new(0.62, 0.81))
            .unwrap();
        assert_eq!(hit.region, RegionId::Outer);
        assert!((hit.point.norm() - 1.0).abs() < 1e-14);
        assert!(hit.fraction > 0.0 && hit.fraction < 1.0);
    }

    #[test]
    fn benchmark_interior_area_fraction() {
        let d = bench();
        let n = 1024;
        let mut interior = 0usize;
        for j in 0..n {
            for i in 0..n {
                let p = Point2::new(
                    -1.0 + (i as f64 + 0.5) * 2.0 / n as f64,
                    -1.0 + (j as f64 + 0.5) * 2.0 / n as f64,
                );
                interior += usize::from(d.classify(p).is_interior());
            }
        }
        let frac = interior as f64 / (n * n) as f64;
        let exact = (4.0 - 2.0 * std::f64::consts::PI * 0.25 * 0.25) / 4.0;
        assert!((frac - exact).abs() < 1e-3, "{frac} vs {exact}");
    }

    proptest! {
        #[test]
        fn segment_exit_brackets_the_crossing(
            x0 in -0.99f64..0.99, y0 in -0.99f64..0.99,
            ang in 0.0f64..std::f64::consts::TAU, len in 0.001f64..0.8,
        ) {
            let d = bench();
            let p0 = Point2::new(x0, y0);
            prop_assume!(d.classify(p0).is_interior());
            let p1 = p0 + Point2::new(ang.cos(), ang.sin()) * len;
            prop_assume!(!d.classify(p1).is_interior());
            let hit = d.segment_exit(p0, p1).unwrap();
            // ignore grazing contacts, where the bracket is ill-posed
            prop_assume!(d.distance_to_boundary(p0) > 1e-6);
            let eps = 1e-9;
            let before = p0.lerp(p1, (hit.fraction - eps).max(0.0));
            let after = p0.lerp(p1, (hit.fraction + eps).min(1.0));
            prop_assert!(d.classify(before).is_interior());
            prop_assert!(!d.classify(after).is_interior());
        }
    }
}
