//! Möbius transformations of the upper half-plane and the hyperbolic
//! geometry primitives built on them.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance for algebraic identities (determinants, group laws).
pub const ALGEBRA_TOL: f64 = 1e-12;

/// Tolerance accepted on the determinant of user supplied matrices.
pub const INPUT_DET_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MobiusError {
    #[error("derivative has a pole at x = {0}")]
    PoleAtPoint(f64),
    #[error("derivative requested at the point at infinity")]
    InfiniteArgument,
    #[error("degenerate arc: height {h} is not below radius {r}")]
    DegenerateArc { r: f64, h: f64 },
    #[error("determinant {0} differs from 1")]
    NotUnitDeterminant(f64),
    #[error("({0}, {1}) is not a point of the upper half-plane")]
    NotInUpperHalfPlane(f64, f64),
}

/// Which metric on the boundary circle a derivative refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivativeMetric {
    /// The Euclidean metric of the real line.
    Euclidean,
    /// The visual (spherical) metric seen from the base point `i`,
    /// i.e. the angle coordinate `2·atan(x)`.
    #[default]
    Visual,
}

/// A point of the extended real line, the boundary of the upper half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryPoint {
    Finite(f64),
    Infinity,
}

impl BoundaryPoint {
    pub fn finite(self) -> Option<f64> {
        match self {
            BoundaryPoint::Finite(x) => Some(x),
            BoundaryPoint::Infinity => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, BoundaryPoint::Infinity)
    }

    /// Angle coordinate `2·atan(x)` in `(-π, π]`, with infinity at `π`.
    pub fn angle(self) -> f64 {
        match self {
            BoundaryPoint::Finite(x) => 2.0 * x.atan(),
            BoundaryPoint::Infinity => PI,
        }
    }

    pub fn from_angle(theta: f64) -> Self {
        let t = wrap_angle(theta);
        if (t - PI).abs() < 1e-300 {
            BoundaryPoint::Infinity
        } else {
            BoundaryPoint::Finite((t / 2.0).tan())
        }
    }

    /// Length of the shorter arc between the two points in the angle
    /// coordinate.
    pub fn chordal_distance(self, other: BoundaryPoint) -> f64 {
        let d = wrap_angle(self.angle() - other.angle()).abs();
        d.min(2.0 * PI - d)
    }

    pub fn approx_eq(self, other: BoundaryPoint, tol: f64) -> bool {
        self.chordal_distance(other) <= tol
    }
}

impl fmt::Display for BoundaryPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundaryPoint::Finite(x) => write!(f, "{x}"),
            BoundaryPoint::Infinity => write!(f, "inf"),
        }
    }
}

/// Reduce an angle to `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub x: f64,
    pub y: f64,
}

impl PlanePoint {
    pub const I: PlanePoint = PlanePoint { x: 0.0, y: 1.0 };

    pub fn new(x: f64, y: f64) -> Result<Self, MobiusError> {
        if y > 0.0 && x.is_finite() && y.is_finite() {
            Ok(PlanePoint { x, y })
        } else {
            Err(MobiusError::NotInUpperHalfPlane(x, y))
        }
    }
}

/// An element of PSL(2,R) stored as a determinant one matrix whose first
/// nonzero entry of the first column is positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobiusMap {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl MobiusMap {
    pub const IDENTITY: MobiusMap = MobiusMap {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    /// Build from entries that must already have determinant one (up to
    /// [`INPUT_DET_TOL`]); the result is rescaled to exact normalization.
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self, MobiusError> {
        let det = a * d - b * c;
        if !det.is_finite() || (det - 1.0).abs() > INPUT_DET_TOL {
            return Err(MobiusError::NotUnitDeterminant(det));
        }
        Ok(Self::normalized(a, b, c, d))
    }

    /// Build from any matrix with positive determinant.
    pub fn from_unnormalized(a: f64, b: f64, c: f64, d: f64) -> Result<Self, MobiusError> {
        let det = a * d - b * c;
        if !(det > 0.0) || !det.is_finite() {
            return Err(MobiusError::NotUnitDeterminant(det));
        }
        Ok(Self::normalized(a, b, c, d))
    }

    fn normalized(a: f64, b: f64, c: f64, d: f64) -> Self {
        let s = 1.0 / (a * d - b * c).sqrt();
        let (mut a, mut b, mut c, mut d) = (a * s, b * s, c * s, d * s);
        let flip = if a != 0.0 { a < 0.0 } else { c < 0.0 };
        if flip {
            a = -a;
            b = -b;
            c = -c;
            d = -d;
        }
        MobiusMap { a, b, c, d }
    }

    fn sign_normalized(a: f64, b: f64, c: f64, d: f64) -> Self {
        let flip = if a != 0.0 { a < 0.0 } else { c < 0.0 };
        if flip {
            MobiusMap { a: -a, b: -b, c: -c, d: -d }
        } else {
            MobiusMap { a, b, c, d }
        }
    }

    pub fn translation(s: f64) -> Self {
        MobiusMap {
            a: 1.0,
            b: s,
            c: 0.0,
            d: 1.0,
        }
    }

    /// `z ↦ λ z` for `λ > 0`.
    pub fn dilation(lambda: f64) -> Self {
        let r = lambda.sqrt();
        MobiusMap {
            a: r,
            b: 0.0,
            c: 0.0,
            d: 1.0 / r,
        }
    }

    pub fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn determinant(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn trace(&self) -> f64 {
        self.a + self.d
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &MobiusMap) -> MobiusMap {
        let a = self.a * other.a + self.b * other.c;
        let b = self.a * other.b + self.b * other.d;
        let c = self.c * other.a + self.d * other.c;
        let d = self.c * other.b + self.d * other.d;
        // determinants multiply; recomputing ad − bc for long products would
        // cancel catastrophically
        Self::sign_normalized(a, b, c, d)
    }

    pub fn inverse(&self) -> MobiusMap {
        Self::sign_normalized(self.d, -self.b, -self.c, self.a)
    }

    pub fn pow(&self, n: i64) -> MobiusMap {
        let base = if n < 0 { self.inverse() } else { *self };
        let mut e = n.unsigned_abs();
        let mut acc = MobiusMap::IDENTITY;
        let mut sq = base;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&sq);
            }
            sq = sq.compose(&sq);
            e >>= 1;
        }
        acc
    }

    pub fn apply_boundary(&self, x: BoundaryPoint) -> BoundaryPoint {
        match x {
            BoundaryPoint::Infinity => {
                if self.c == 0.0 {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::Finite(self.a / self.c)
                }
            }
            BoundaryPoint::Finite(x) => {
                let den = self.c * x + self.d;
                if den == 0.0 {
                    BoundaryPoint::Infinity
                } else {
                    BoundaryPoint::Finite((self.a * x + self.b) / den)
                }
            }
        }
    }

    /// Action on the angle coordinate of the boundary circle.
    pub fn apply_angle(&self, theta: f64) -> f64 {
        // e^{iθ} is the Cayley image of x = tan(θ/2); work with (cos, sin) of
        // the half angle to stay finite near θ = π.
        let (s, c) = (theta / 2.0).sin_cos();
        let num = self.a * s + self.b * c;
        let den = self.c * s + self.d * c;
        let mut phi = num.atan2(den);
        if phi > PI / 2.0 {
            phi -= PI;
        } else if phi <= -PI / 2.0 {
            phi += PI;
        }
        2.0 * phi
    }

    pub fn apply_plane(&self, z: PlanePoint) -> PlanePoint {
        // (a z + b)/(c z + d) with z = x + iy.
        let nr = self.a * z.x + self.b;
        let ni = self.a * z.y;
        let dr = self.c * z.x + self.d;
        let di = self.c * z.y;
        let den = dr * dr + di * di;
        PlanePoint {
            x: (nr * dr + ni * di) / den,
            y: z.y / den,
        }
    }

    /// Euclidean boundary derivative `1/(cx+d)²`.
    pub fn derivative_magnitude(&self, x: BoundaryPoint) -> Result<f64, MobiusError> {
        let x = x.finite().ok_or(MobiusError::InfiniteArgument)?;
        let den = self.c * x + self.d;
        if den == 0.0 {
            return Err(MobiusError::PoleAtPoint(x));
        }
        Ok(1.0 / (den * den))
    }

    /// Derivative in the visual metric, finite everywhere on the circle.
    pub fn visual_derivative(&self, x: BoundaryPoint) -> f64 {
        self.log_visual_derivative(x).exp()
    }

    pub fn log_visual_derivative(&self, x: BoundaryPoint) -> f64 {
        match x {
            BoundaryPoint::Infinity => -(self.a * self.a + self.c * self.c).ln(),
            BoundaryPoint::Finite(x) => {
                let p = self.a * x + self.b;
                let q = self.c * x + self.d;
                (1.0 + x * x).ln() - (p * p + q * q).ln()
            }
        }
    }

    /// Log derivative at a boundary point in the chosen metric.
    pub fn log_derivative(&self, x: BoundaryPoint, metric: DerivativeMetric) -> Result<f64, MobiusError> {
        match metric {
            DerivativeMetric::Euclidean => Ok(self.derivative_magnitude(x)?.ln()),
            DerivativeMetric::Visual => Ok(self.log_visual_derivative(x)),
        }
    }

    pub fn is_parabolic(&self, tol: f64) -> bool {
        let t = self.trace();
        (t * t - 4.0).abs() <= tol && !self.approx_eq(&MobiusMap::IDENTITY, tol)
    }

    pub fn is_hyperbolic(&self, tol: f64) -> bool {
        let t = self.trace();
        t * t - 4.0 > tol
    }

    /// Boundary fixed points: one for parabolic maps, two (attracting
    /// first) for hyperbolic maps, none otherwise.
    pub fn fixed_points(&self, tol: f64) -> Vec<BoundaryPoint> {
        let disc = self.trace() * self.trace() - 4.0;
        if disc < -tol {
            return Vec::new();
        }
        if self.c.abs() <= ALGEBRA_TOL * (self.a.abs() + self.d.abs()) {
            // z ↦ (a z + b)/d: fixes ∞, plus b/(d−a) when a ≠ d.
            if (self.a - self.d).abs() <= tol.sqrt() {
                return vec![BoundaryPoint::Infinity];
            }
            let x = BoundaryPoint::Finite(self.b / (self.d - self.a));
            // attracting point has derivative < 1 there
            return if self.a > self.d {
                vec![BoundaryPoint::Infinity, x]
            } else {
                vec![x, BoundaryPoint::Infinity]
            };
        }
        if disc.abs() <= tol {
            return vec![BoundaryPoint::Finite((self.a - self.d) / (2.0 * self.c))];
        }
        let r = disc.max(0.0).sqrt();
        let x1 = (self.a - self.d + r) / (2.0 * self.c);
        let x2 = (self.a - self.d - r) / (2.0 * self.c);
        let mut pts = vec![BoundaryPoint::Finite(x1), BoundaryPoint::Finite(x2)];
        pts.sort_by(|p, q| {
            let dp = self.derivative_magnitude(*p).unwrap_or(f64::INFINITY);
            let dq = self.derivative_magnitude(*q).unwrap_or(f64::INFINITY);
            dp.total_cmp(&dq)
        });
        pts
    }

    pub fn approx_eq(&self, other: &MobiusMap, tol: f64) -> bool {
        let p = self.entries();
        let q = other.entries();
        let same = p.iter().zip(q.iter()).all(|(x, y)| (x - y).abs() <= tol);
        let flipped = p.iter().zip(q.iter()).all(|(x, y)| (x + y).abs() <= tol);
        same || flipped
    }
}

impl fmt::Display for MobiusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[[{}, {}], [{}, {}]]", self.a, self.b, self.c, self.d)
    }
}

pub fn hyperbolic_distance(z: PlanePoint, w: PlanePoint) -> f64 {
    let dx = z.x - w.x;
    let dy = z.y - w.y;
    let chord = (dx * dx + dy * dy).sqrt();
    2.0 * (chord / (2.0 * (z.y * w.y).sqrt())).asinh()
}

/// Hyperbolic length of the part of the semicircle of radius `r` about a
/// boundary point lying above the horizontal line at height `h`.
pub fn arc_length_above_height(r: f64, h: f64) -> Result<f64, MobiusError> {
    if !(r > 0.0) || !(h > 0.0) || h >= r {
        return Err(MobiusError::DegenerateArc { r, h });
    }
    let a = ((r - h) * (r + h)).sqrt();
    Ok(2.0 * ((r + a) / h).ln())
}

/// A complete geodesic of the upper half-plane, given by its endpoints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodesic {
    pub start: BoundaryPoint,
    pub end: BoundaryPoint,
}

impl Geodesic {
    pub fn new(start: BoundaryPoint, end: BoundaryPoint) -> Self {
        Geodesic { start, end }
    }

    /// The oriented geodesic through two plane points.
    pub fn through(z: PlanePoint, w: PlanePoint) -> Self {
        let dx = w.x - z.x;
        if dx.abs() <= 1e-14 * (1.0 + z.x.abs() + w.x.abs()) {
            let x = BoundaryPoint::Finite(0.5 * (z.x + w.x));
            return if w.y > z.y {
                Geodesic::new(x, BoundaryPoint::Infinity)
            } else {
                Geodesic::new(BoundaryPoint::Infinity, x)
            };
        }
        let c = ((w.x * w.x + w.y * w.y) - (z.x * z.x + z.y * z.y)) / (2.0 * dx);
        let r = ((z.x - c).powi(2) + z.y * z.y).sqrt();
        if dx > 0.0 {
            Geodesic::new(BoundaryPoint::Finite(c - r), BoundaryPoint::Finite(c + r))
        } else {
            Geodesic::new(BoundaryPoint::Finite(c + r), BoundaryPoint::Finite(c - r))
        }
    }

    pub fn image(&self, m: &MobiusMap) -> Geodesic {
        Geodesic::new(m.apply_boundary(self.start), m.apply_boundary(self.end))
    }

    /// An orientation preserving map sending `start` to 0 and `end` to ∞.
    pub fn straightening(&self) -> MobiusMap {
        match (self.start, self.end) {
            (BoundaryPoint::Finite(u), BoundaryPoint::Infinity) => MobiusMap::translation(-u),
            (BoundaryPoint::Infinity, BoundaryPoint::Finite(v)) => MobiusMap {
                a: 0.0,
                b: -1.0,
                c: 1.0,
                d: -v,
            },
            (BoundaryPoint::Finite(u), BoundaryPoint::Finite(v)) => {
                // (z − u)/(z − v) up to sign, made orientation preserving.
                if u > v {
                    MobiusMap::normalized(1.0, -u, 1.0, -v)
                } else {
                    MobiusMap::normalized(-1.0, u, 1.0, -v)
                }
            }
            (BoundaryPoint::Infinity, BoundaryPoint::Infinity) => MobiusMap::IDENTITY,
        }
    }

    /// Hyperbolic distance between two complete geodesics; zero when they
    /// cross or share an endpoint.
    pub fn distance_to(&self, other: &Geodesic) -> f64 {
        let m = self.straightening();
        let p = m.apply_boundary(other.start);
        let q = m.apply_boundary(other.end);
        match (p, q) {
            (BoundaryPoint::Finite(p), BoundaryPoint::Finite(q)) => {
                if p * q <= 0.0 {
                    0.0
                } else {
                    ((p + q) / (q - p)).abs().acosh()
                }
            }
            _ => 0.0,
        }
    }
}

/// A frame in which the geodesic segment from `from` to `to` lies on the
/// imaginary axis, with `from` at `i`; positions along the segment are
/// `log Im` in this frame.
#[derive(Debug, Clone, Copy)]
pub struct SegmentFrame {
    pub map: MobiusMap,
    pub length: f64,
}

impl SegmentFrame {
    pub fn new(from: PlanePoint, to: PlanePoint) -> Self {
        let g = Geodesic::through(from, to);
        let s = g.straightening();
        let z = s.apply_plane(from);
        let scale = MobiusMap::dilation(1.0 / z.y);
        let map = scale.compose(&s);
        SegmentFrame {
            map,
            length: hyperbolic_distance(from, to),
        }
    }

    /// Position (signed arclength from the start) at which a geodesic crosses
    /// the segment's supporting line, if it does.
    pub fn crossing(&self, g: &Geodesic) -> Option<f64> {
        let p = self.map.apply_boundary(g.start).finite()?;
        let q = self.map.apply_boundary(g.end).finite()?;
        if p * q < 0.0 {
            Some(0.5 * (-p * q).ln())
        } else {
            None
        }
    }

    pub fn position(&self, z: PlanePoint) -> f64 {
        self.map.apply_plane(z).y.ln()
    }
}
