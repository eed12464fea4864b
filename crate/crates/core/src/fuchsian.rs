//! Group presentations: generators with their boundary intervals, the
//! Markov validation, horocircles at the cusps of the fundamental domain
//! and the geometric constants C0, C1, C2.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mobius::{
    hyperbolic_distance, BoundaryPoint, Geodesic, MobiusError, MobiusMap, PlanePoint, SegmentFrame,
};

/// Tolerance on trace² − 4 used to classify generators.
pub const KIND_TOL: f64 = 1e-10;
/// Two boundary points closer than this (in angle) are the same vertex.
pub const VERTEX_TOL: f64 = 1e-9;
/// Samples per boundary curve used for the default C0 estimate.
pub const DEFAULT_C0_RESOLUTION: usize = 257;

pub type Symbol = usize;

/// Index of the inverse symbol in the symmetric closure.
pub fn inverse(s: Symbol) -> Symbol {
    s ^ 1
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("generator {label}: determinant {det} differs from 1")]
    NotUnitDeterminant { label: String, det: f64 },
    #[error("generator {label}: trace {trace} does not match kind {kind:?}")]
    KindMismatch {
        label: String,
        kind: GeneratorKind,
        trace: f64,
    },
    #[error("presentation is not a free Markov system: {0}")]
    NotFree(String),
    #[error("no parabolic generator")]
    NoParabolic,
    #[error("elementary group: {0} generator(s)")]
    Elementary(usize),
    #[error("generator {0} is not parabolic")]
    NotParabolic(String),
    #[error("horocircles at {0} and {1} overlap")]
    HorocirclesOverlap(BoundaryPoint, BoundaryPoint),
    #[error("truncated fundamental domain is unbounded along the side of {0}")]
    UnboundedDomain(String),
    #[error(transparent)]
    Mobius(#[from] MobiusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Parabolic,
    Hyperbolic,
}

/// A positively oriented open arc of the boundary circle, running from
/// `start` to `end` in the direction of increasing angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub start: BoundaryPoint,
    pub end: BoundaryPoint,
}

impl Arc {
    pub fn new(start: BoundaryPoint, end: BoundaryPoint) -> Self {
        Arc { start, end }
    }

    pub fn span(&self) -> f64 {
        let s = (self.end.angle() - self.start.angle()).rem_euclid(2.0 * PI);
        if s == 0.0 {
            2.0 * PI
        } else {
            s
        }
    }

    /// Angle travelled from `start` to reach `x`.
    pub fn offset(&self, x: BoundaryPoint) -> f64 {
        (x.angle() - self.start.angle()).rem_euclid(2.0 * PI)
    }

    pub fn contains(&self, x: BoundaryPoint) -> bool {
        let o = self.offset(x);
        o > 0.0 && o < self.span()
    }

    pub fn point_at(&self, offset: f64) -> BoundaryPoint {
        BoundaryPoint::from_angle(self.start.angle() + offset)
    }

    pub fn midpoint(&self) -> BoundaryPoint {
        self.point_at(0.5 * self.span())
    }

    /// Closed containment of `other` in the closure of `self`.
    pub fn contains_arc(&self, other: &Arc, tol: f64) -> bool {
        let mut o = self.offset(other.start);
        if o > 2.0 * PI - tol {
            o -= 2.0 * PI;
        }
        o >= -tol && o + other.span() <= self.span() + tol
    }

    pub fn overlaps(&self, other: &Arc, tol: f64) -> bool {
        let o = self.offset(other.start);
        let p = other.offset(self.start);
        (o > tol && o < self.span() - tol)
            || (p > tol && p < other.span() - tol)
            || (o.min(2.0 * PI - o) <= tol && p.min(2.0 * PI - p) <= tol)
    }

    pub fn image(&self, m: &MobiusMap) -> Arc {
        Arc::new(m.apply_boundary(self.start), m.apply_boundary(self.end))
    }

    /// The geodesic of the upper half-plane with the same endpoints.
    pub fn geodesic(&self) -> Geodesic {
        Geodesic::new(self.start, self.end)
    }
}

/// Input description of one generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub label: String,
    pub kind: GeneratorKind,
    /// Row-major entries `[a, b, c, d]`.
    pub matrix: [f64; 4],
    /// The arc `g` maps the complement of `inverse_interval` onto.
    pub interval: Arc,
    /// The interval attached to the inverse generator.
    pub inverse_interval: Arc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDescription {
    pub generators: Vec<GeneratorSpec>,
}

/// One element of the symmetric generating set.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub label: String,
    pub kind: GeneratorKind,
    pub map: MobiusMap,
    pub fixed_points: Vec<BoundaryPoint>,
    pub interval: Arc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HoroShape {
    /// Horizontal line `Im z = height` (base point at infinity).
    Line { height: f64 },
    /// Circle tangent to the real line at the base point.
    Circle { diameter: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horocircle {
    pub base: BoundaryPoint,
    pub shape: HoroShape,
    /// Δ with Δ(base) = ∞; the horocircle is Δ⁻¹{Im z = 1/2}.
    pub conjugator: MobiusMap,
}

impl Horocircle {
    pub fn from_conjugator(delta: MobiusMap) -> Self {
        let e = delta.inverse();
        let [a, _, c, d] = e.entries();
        if c.abs() <= 1e-15 * (a.abs() + d.abs()) {
            Horocircle {
                base: BoundaryPoint::Infinity,
                shape: HoroShape::Line { height: 0.5 * a * a },
                conjugator: delta,
            }
        } else {
            Horocircle {
                base: BoundaryPoint::Finite(a / c),
                shape: HoroShape::Circle { diameter: 2.0 / (c * c) },
                conjugator: delta,
            }
        }
    }

    /// Normalize a parabolic map: returns Δ with Δ(p) = ∞ and
    /// Δ γ Δ⁻¹ = z ± 1, together with the sign.
    pub fn normalizer(gamma: &MobiusMap) -> Option<(MobiusMap, f64)> {
        if !gamma.is_parabolic(KIND_TOL) {
            return None;
        }
        let p = *gamma.fixed_points(KIND_TOL).first()?;
        let s = match p {
            BoundaryPoint::Infinity => MobiusMap::IDENTITY,
            BoundaryPoint::Finite(p) => MobiusMap::new(0.0, -1.0, 1.0, -p).ok()?,
        };
        let t = s.compose(gamma).compose(&s.inverse());
        let [a, b, _, _] = t.entries();
        let k = b / a;
        let delta = MobiusMap::dilation(1.0 / k.abs()).compose(&s);
        Some((delta, k.signum()))
    }

    pub fn for_parabolic(gamma: &MobiusMap) -> Option<Horocircle> {
        let (delta, sign) = Self::normalizer(gamma)?;
        let back = delta.inverse().compose(&MobiusMap::translation(sign)).compose(&delta);
        let scale = gamma.entries().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        if !back.approx_eq(gamma, 1e-10 * scale * scale) {
            return None;
        }
        Some(Horocircle::from_conjugator(delta))
    }

    pub fn image(&self, m: &MobiusMap) -> Horocircle {
        Horocircle::from_conjugator(self.conjugator.compose(&m.inverse()))
    }

    /// Strictly inside the horoball.
    pub fn contains(&self, z: PlanePoint) -> bool {
        match (self.base, self.shape) {
            (_, HoroShape::Line { height }) => z.y > height,
            (BoundaryPoint::Finite(p), HoroShape::Circle { diameter }) => {
                let r = 0.5 * diameter;
                (z.x - p).powi(2) + (z.y - r).powi(2) < r * r
            }
            _ => false,
        }
    }

    /// Positions where the supporting line of a segment frame enters and
    /// leaves the horoball; `None` when it misses.
    pub fn crossings(&self, frame: &SegmentFrame) -> Option<(f64, f64)> {
        let h = self.image(&frame.map);
        match h.shape {
            HoroShape::Line { height } => Some((height.ln(), f64::INFINITY)),
            HoroShape::Circle { diameter } => {
                let q = h.base.finite()?;
                let mut disc = diameter * diameter - 4.0 * q * q;
                if disc < 0.0 {
                    // tangency up to rounding still counts as a touch
                    if disc < -1e-9 * diameter * diameter {
                        return None;
                    }
                    disc = 0.0;
                }
                let r = disc.sqrt();
                let hi = 0.5 * (diameter + r);
                // product of the roots is q², keep the small one accurate
                let lo = if hi > 0.0 { q * q / hi } else { 0.0 };
                Some((lo.ln(), hi.ln()))
            }
        }
    }

    /// Disjointness (tangency allowed) of two horoballs.
    pub fn disjoint_from(&self, other: &Horocircle, tol: f64) -> bool {
        match (self.base, self.shape, other.base, other.shape) {
            (_, HoroShape::Line { height }, _, HoroShape::Circle { diameter })
            | (_, HoroShape::Circle { diameter }, _, HoroShape::Line { height }) => {
                diameter <= height * (1.0 + tol)
            }
            (BoundaryPoint::Finite(p), HoroShape::Circle { diameter: d1 }, BoundaryPoint::Finite(q), HoroShape::Circle { diameter: d2 }) => {
                (p - q).powi(2) >= d1 * d2 * (1.0 - tol)
            }
            _ => false,
        }
    }
}

pub fn horocircle_of(gen: &Generator) -> Result<Horocircle, GroupError> {
    if gen.kind != GeneratorKind::Parabolic {
        return Err(GroupError::NotParabolic(gen.label.clone()));
    }
    Horocircle::for_parabolic(&gen.map).ok_or_else(|| GroupError::NotParabolic(gen.label.clone()))
}

/// An ideal vertex of the fundamental domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Cusp {
    pub point: BoundaryPoint,
    /// Primitive parabolic stabilizer obtained from the vertex cycle.
    pub stabilizer: MobiusMap,
    pub horocircle: Horocircle,
    /// The parabolic generator fixing this point, if any; otherwise the cusp
    /// is accidental.
    pub generator: Option<Symbol>,
    /// Symbols whose intervals end and start at this vertex.
    pub adjacent: (Symbol, Symbol),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct C0Estimate {
    /// Conservative value: sampled diameter plus mesh margin.
    pub value: f64,
    /// Largest sampled pairwise distance.
    pub raw_max: f64,
    /// Largest distance between consecutive samples along a boundary curve.
    pub margin: f64,
    /// Samples per boundary curve.
    pub resolution: usize,
}

#[derive(Debug, Clone)]
pub struct GroupPresentation {
    pub symbols: Vec<Generator>,
    pub cusps: Vec<Cusp>,
    cusp_of_symbol: Vec<Option<usize>>,
    pub c0: C0Estimate,
    pub c1: f64,
    pub c2: f64,
}

impl GroupPresentation {
    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    pub fn generator_count(&self) -> usize {
        self.symbols.len() / 2
    }

    pub fn label(&self, s: Symbol) -> &str {
        &self.symbols[s].label
    }

    pub fn map(&self, s: Symbol) -> &MobiusMap {
        &self.symbols[s].map
    }

    pub fn interval(&self, s: Symbol) -> &Arc {
        &self.symbols[s].interval
    }

    pub fn is_parabolic(&self, s: Symbol) -> bool {
        self.symbols[s].kind == GeneratorKind::Parabolic
    }

    /// Number of parabolic generators (not counting inverses).
    pub fn parabolic_count(&self) -> usize {
        (0..self.symbols.len()).step_by(2).filter(|&s| self.is_parabolic(s)).count()
    }

    pub fn hyperbolic_count(&self) -> usize {
        self.generator_count() - self.parabolic_count()
    }

    pub fn symbol_by_label(&self, label: &str) -> Option<Symbol> {
        self.symbols.iter().position(|g| g.label == label)
    }

    /// Horocircle of the cusp fixed by a parabolic symbol.
    pub fn horocircle(&self, s: Symbol) -> Option<&Horocircle> {
        self.cusp_of_symbol[s].map(|k| &self.cusps[k].horocircle)
    }

    /// Symbol whose open interval contains `x`.
    pub fn symbol_containing(&self, x: BoundaryPoint) -> Option<Symbol> {
        self.symbols.iter().position(|g| g.interval.contains(x))
    }

    /// Pair interval `a(b(b))`: points whose first two symbols are `(a, b)`.
    pub fn pair_interval(&self, a: Symbol, b: Symbol) -> Arc {
        self.interval(b).image(self.map(a))
    }

    /// Admissible pair states `(a, b)`.
    pub fn pair_states(&self) -> Vec<(Symbol, Symbol)> {
        let n = self.symbol_count();
        let mut out = Vec::new();
        for a in 0..n {
            for b in 0..n {
                if b == inverse(a) || (b == a && self.is_parabolic(a)) {
                    continue;
                }
                out.push((a, b));
            }
        }
        out
    }

    pub fn word_map(&self, word: &[Symbol]) -> MobiusMap {
        word.iter().fold(MobiusMap::IDENTITY, |acc, &s| acc.compose(self.map(s)))
    }
}

pub fn build_group(desc: &GroupDescription) -> Result<GroupPresentation, GroupError> {
    let mut symbols = Vec::with_capacity(2 * desc.generators.len());
    for spec in &desc.generators {
        let [a, b, c, d] = spec.matrix;
        let map = MobiusMap::new(a, b, c, d).map_err(|e| match e {
            MobiusError::NotUnitDeterminant(det) => GroupError::NotUnitDeterminant {
                label: spec.label.clone(),
                det,
            },
            other => GroupError::Mobius(other),
        })?;
        let tr = map.trace();
        let ok = match spec.kind {
            GeneratorKind::Parabolic => map.is_parabolic(KIND_TOL),
            GeneratorKind::Hyperbolic => map.is_hyperbolic(KIND_TOL),
        };
        if !ok {
            return Err(GroupError::KindMismatch {
                label: spec.label.clone(),
                kind: spec.kind,
                trace: tr,
            });
        }
        let inv = map.inverse();
        symbols.push(Generator {
            label: spec.label.clone(),
            kind: spec.kind,
            map,
            fixed_points: map.fixed_points(KIND_TOL),
            interval: spec.interval,
        });
        symbols.push(Generator {
            label: format!("{}^-1", spec.label),
            kind: spec.kind,
            map: inv,
            fixed_points: inv.fixed_points(KIND_TOL),
            interval: spec.inverse_interval,
        });
    }
    let v = desc.generators.iter().filter(|g| g.kind == GeneratorKind::Parabolic).count();
    if v == 0 {
        return Err(GroupError::NoParabolic);
    }
    if desc.generators.len() <= 1 {
        return Err(GroupError::Elementary(desc.generators.len()));
    }
    validate_markov(&symbols)?;
    let cusps = find_cusps(&symbols)?;
    let mut cusp_of_symbol = vec![None; symbols.len()];
    for (s, g) in symbols.iter().enumerate() {
        if g.kind != GeneratorKind::Parabolic {
            continue;
        }
        let p = g.fixed_points[0];
        let k = cusps.iter().position(|c| c.point.approx_eq(p, VERTEX_TOL)).ok_or_else(|| {
            GroupError::NotFree(format!("fixed point of {} is not an ideal vertex", g.label))
        })?;
        cusp_of_symbol[s] = Some(k);
    }
    for (i, a) in cusps.iter().enumerate() {
        for b in &cusps[i + 1..] {
            if !a.horocircle.disjoint_from(&b.horocircle, 1e-9) {
                return Err(GroupError::HorocirclesOverlap(a.point, b.point));
            }
        }
    }
    let mut g = GroupPresentation {
        symbols,
        cusps,
        cusp_of_symbol,
        c0: C0Estimate {
            value: 0.0,
            raw_max: 0.0,
            margin: 0.0,
            resolution: 0,
        },
        c1: 0.0,
        c2: 0.0,
    };
    g.c0 = constant_c0(&g, DEFAULT_C0_RESOLUTION)?;
    let (c1, c2) = constants_c1_c2(&g);
    g.c1 = c1;
    g.c2 = c2;
    Ok(g)
}

fn validate_markov(symbols: &[Generator]) -> Result<(), GroupError> {
    let n = symbols.len();
    for i in 0..n {
        for j in i + 1..n {
            if symbols[i].interval.overlaps(&symbols[j].interval, VERTEX_TOL) {
                return Err(GroupError::NotFree(format!(
                    "intervals of {} and {} overlap",
                    symbols[i].label, symbols[j].label
                )));
            }
        }
    }
    for s in 0..n {
        let g = &symbols[s];
        let inv = &symbols[inverse(s)];
        // g maps the complement of cl b(g⁻¹) onto b(g)
        let hit_start = g.map.apply_boundary(inv.interval.end);
        let hit_end = g.map.apply_boundary(inv.interval.start);
        if !hit_start.approx_eq(g.interval.start, VERTEX_TOL) || !hit_end.approx_eq(g.interval.end, VERTEX_TOL) {
            return Err(GroupError::NotFree(format!(
                "{} does not map the complement of its inverse interval onto its interval",
                g.label
            )));
        }
        // Markov covering: T(b(g)) = g⁻¹(b(g)) contains every other interval
        let cover = g.interval.image(&inv.map);
        for (t, other) in symbols.iter().enumerate() {
            if t == inverse(s) {
                continue;
            }
            if !cover.contains_arc(&other.interval, VERTEX_TOL) {
                return Err(GroupError::NotFree(format!(
                    "image of the interval of {} misses the interval of {}",
                    g.label, other.label
                )));
            }
        }
    }
    Ok(())
}

fn find_cusps(symbols: &[Generator]) -> Result<Vec<Cusp>, GroupError> {
    let n = symbols.len();
    let mut cusps: Vec<Cusp> = Vec::new();
    for w in 0..n {
        let x = symbols[w].interval.end;
        let Some(w2) = (0..n).find(|&u| u != w && symbols[u].interval.start.approx_eq(x, VERTEX_TOL)) else {
            continue;
        };
        // walk the vertex cycle starting with the arc that begins at x
        let mut point = x;
        let mut sym = w2;
        let mut cycle = MobiusMap::IDENTITY;
        let mut closed = false;
        for _ in 0..=2 * n {
            let step = symbols[inverse(sym)].map;
            let next = step.apply_boundary(point);
            cycle = step.compose(&cycle);
            let arrived = inverse(sym);
            let other = (0..n).find(|&u| {
                u != arrived
                    && (symbols[u].interval.start.approx_eq(next, VERTEX_TOL)
                        || symbols[u].interval.end.approx_eq(next, VERTEX_TOL))
            });
            let Some(other) = other else { break };
            point = next;
            sym = other;
            if sym == w2 && point.approx_eq(x, VERTEX_TOL) {
                closed = true;
                break;
            }
        }
        if !closed || !cycle.is_parabolic(1e-8) {
            continue;
        }
        let Some(horocircle) = Horocircle::for_parabolic(&cycle) else {
            continue;
        };
        let generator = (0..n).find(|&s| {
            symbols[s].kind == GeneratorKind::Parabolic && symbols[s].map.approx_eq(&cycle, 1e-8)
        });
        cusps.push(Cusp {
            point: x,
            stabilizer: cycle,
            horocircle,
            generator: generator.map(|s| s & !1),
            adjacent: (w, w2),
        });
    }
    Ok(cusps)
}

fn cusp_at(g: &GroupPresentation, p: BoundaryPoint) -> Option<&Cusp> {
    g.cusps.iter().find(|c| c.point.approx_eq(p, VERTEX_TOL))
}

/// Hull of the level-two cylinders inside the interval of `s`, as an arc.
fn limit_hull(g: &GroupPresentation, s: Symbol) -> Arc {
    let b = g.interval(s);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in 0..g.symbol_count() {
        if t == inverse(s) {
            continue;
        }
        let c = g.interval(t).image(g.map(s));
        let o = b.offset(c.start);
        let o = if o > b.span() { o - 2.0 * PI } else { o };
        lo = lo.min(o);
        hi = hi.max(o + c.span());
    }
    Arc::new(b.point_at(lo.max(0.0)), b.point_at(hi.min(b.span())))
}

/// Geodesic from `i` through the boundary point `xi`, oriented toward it.
fn ray_from_i(xi: BoundaryPoint) -> Geodesic {
    match xi {
        BoundaryPoint::Infinity => Geodesic::new(BoundaryPoint::Finite(0.0), BoundaryPoint::Infinity),
        BoundaryPoint::Finite(x) if x == 0.0 => {
            Geodesic::new(BoundaryPoint::Infinity, BoundaryPoint::Finite(0.0))
        }
        BoundaryPoint::Finite(x) => {
            let c = (x * x - 1.0) / (2.0 * x);
            Geodesic::new(BoundaryPoint::Finite(2.0 * c - x), xi)
        }
    }
}

/// Sampled curves making up the boundary of the truncated domain.
fn boundary_curves(g: &GroupPresentation, resolution: usize) -> Result<Vec<Vec<PlanePoint>>, GroupError> {
    let n = resolution.max(2);
    let mut curves = Vec::new();
    for s in 0..g.symbol_count() {
        let b = *g.interval(s);
        let side = b.geodesic();
        let m = side.straightening();
        let minv = m.inverse();
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        if let Some(c) = cusp_at(g, b.start) {
            if let HoroShape::Circle { diameter } = c.horocircle.image(&m).shape {
                lo = lo.max(diameter.ln());
            }
        }
        if let Some(c) = cusp_at(g, b.end) {
            if let HoroShape::Line { height } = c.horocircle.image(&m).shape {
                hi = hi.min(height.ln());
            }
        }
        let hull = limit_hull(g, s);
        let frame_cross = |xi: BoundaryPoint| -> Option<f64> {
            let r = ray_from_i(xi).image(&m);
            let p = r.start.finite()?;
            let q = r.end.finite()?;
            (p * q < 0.0).then(|| 0.5 * (-p * q).ln())
        };
        if !hull.start.approx_eq(b.start, VERTEX_TOL) {
            if let Some(v) = frame_cross(hull.start) {
                lo = lo.max(v);
            }
        }
        if !hull.end.approx_eq(b.end, VERTEX_TOL) {
            if let Some(v) = frame_cross(hull.end) {
                hi = hi.min(v);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(GroupError::UnboundedDomain(g.label(s).to_string()));
        }
        if hi < lo {
            continue;
        }
        let pts = (0..n)
            .map(|k| {
                let u = lo + (hi - lo) * k as f64 / (n - 1) as f64;
                minv.apply_plane(PlanePoint { x: 0.0, y: u.exp() })
            })
            .collect();
        curves.push(pts);
    }
    for c in &g.cusps {
        let delta = c.horocircle.conjugator;
        let (w1, w2) = c.adjacent;
        let o1 = delta.apply_boundary(g.interval(w1).start).finite();
        let o2 = delta.apply_boundary(g.interval(w2).end).finite();
        let (Some(x1), Some(x2)) = (o1, o2) else { continue };
        let (x1, x2) = (x1.min(x2), x1.max(x2));
        let dinv = delta.inverse();
        let pts = (0..n)
            .map(|k| {
                let x = x1 + (x2 - x1) * k as f64 / (n - 1) as f64;
                dinv.apply_plane(PlanePoint { x, y: 0.5 })
            })
            .collect();
        curves.push(pts);
    }
    Ok(curves)
}

/// Diameter of the fundamental domain truncated at the horocircles and
/// restricted to the part crossed by geodesics toward the limit set,
/// estimated from boundary samples (plus the base point `i`).
pub fn constant_c0(g: &GroupPresentation, resolution: usize) -> Result<C0Estimate, GroupError> {
    let curves = boundary_curves(g, resolution)?;
    let mut margin: f64 = 0.0;
    let mut pts = vec![PlanePoint::I];
    for c in &curves {
        for w in c.windows(2) {
            margin = margin.max(hyperbolic_distance(w[0], w[1]));
        }
        pts.extend_from_slice(c);
    }
    let mut raw: f64 = 0.0;
    for (i, p) in pts.iter().enumerate() {
        for q in &pts[i + 1..] {
            raw = raw.max(hyperbolic_distance(*p, *q));
        }
    }
    Ok(C0Estimate {
        value: raw + margin,
        raw_max: raw,
        margin,
        resolution,
    })
}

/// `C1 = min{log 3, d(s,t)}` over sides with `t ∉ {s, s⁻¹}` and
/// `C2 = max{log 4, C0}`.
pub fn constants_c1_c2(g: &GroupPresentation) -> (f64, f64) {
    let mut c1 = 3f64.ln();
    let n = g.symbol_count();
    for s in 0..n {
        for t in 0..n {
            if t == s || t == inverse(s) {
                continue;
            }
            let d = g.interval(s).geodesic().distance_to(&g.interval(t).geodesic());
            c1 = c1.min(d);
        }
    }
    (c1, 4f64.ln().max(g.c0.value))
}

/// Distances `d(i, w i)` of the orbit points within `radius`, by depth-first
/// search over reduced words. A branch is cut once its distance exceeds
/// `radius + slack`.
pub fn orbit_distances(g: &GroupPresentation, radius: f64, slack: f64) -> Vec<f64> {
    let base = PlanePoint { x: 0.0, y: 1.0 };
    let mut out = Vec::new();
    let mut stack: Vec<(MobiusMap, Option<Symbol>)> = vec![(MobiusMap::translation(0.0), None)];
    while let Some((w, last)) = stack.pop() {
        let d = hyperbolic_distance(base, w.apply_plane(base));
        if d <= radius {
            out.push(d);
        }
        if d > radius + slack {
            continue;
        }
        for s in 0..g.symbol_count() {
            if last.is_some_and(|l| s == inverse(l)) {
                continue;
            }
            stack.push((w.compose(g.map(s)), Some(s)));
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Orbit-counting estimate of the critical exponent with a divergence probe
/// of the Poincaré series at `exponent ± offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareProbe {
    pub radius: f64,
    pub orbit_points: usize,
    /// Slope of `log N(r)` over `[radius/2, radius]`.
    pub exponent: f64,
    pub offset: f64,
    /// Growth rates of the shell increments of `Σ e^{−s d}` at
    /// `s = reference − offset` and `s = reference + offset`.
    pub rate_below: f64,
    pub rate_above: f64,
}

impl PoincareProbe {
    /// Partial sums grow below the reference and settle above it.
    pub fn brackets(&self) -> bool {
        self.rate_below > 0.0 && self.rate_above < 0.0
    }
}

pub fn poincare_probe(g: &GroupPresentation, radius: f64, reference: f64, offset: f64) -> PoincareProbe {
    let slack = (0..g.symbol_count())
        .map(|s| hyperbolic_distance(PlanePoint { x: 0.0, y: 1.0 }, g.map(s).apply_plane(PlanePoint { x: 0.0, y: 1.0 })))
        .fold(0.0, f64::max);
    let d = orbit_distances(g, radius, slack);
    let lo = 0.5 * radius;
    let samples: Vec<f64> = (0..=20).map(|k| lo + (radius - lo) * k as f64 / 20.0).collect();
    let counts: Vec<f64> = samples.iter().map(|&r| (d.partition_point(|&x| x <= r) as f64).ln()).collect();
    let rate = |s: f64| {
        let shells: Vec<(f64, f64)> = (lo.ceil() as usize..radius.floor() as usize)
            .map(|r| {
                let r = r as f64;
                let sum: f64 = d.iter().filter(|&&x| x > r && x <= r + 1.0).map(|x| (-s * x).exp()).sum();
                (r, sum.ln())
            })
            .collect();
        let (x, y): (Vec<f64>, Vec<f64>) = shells.into_iter().unzip();
        least_squares_slope(&x, &y)
    };
    PoincareProbe {
        radius,
        orbit_points: d.len(),
        exponent: least_squares_slope(&samples, &counts),
        offset,
        rate_below: rate(reference - offset),
        rate_above: rate(reference + offset),
    }
}

fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
