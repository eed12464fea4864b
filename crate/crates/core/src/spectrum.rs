//! Legendre transforms of the free energy: the spectrum
//! `f(α) = max{inf_β (t(β) + αβ), 0}`, its endpoint values and slopes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gdms::{BoundedWindingExpansion, FreeEnergyCurve, GdmsError, RootOptions, TransferOperator};

/// Largest allowed dip of `f` below a chord of its neighbours.
pub const CONCAVITY_TOL: f64 = 1e-6;
/// Endpoint slope magnitude read as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e3;
/// How close the finest grid must come to each end of the α range.
pub const GRID_REACH: f64 = 0.02;
/// Default noise floor for convexity of sampled free energies.
pub const CONVEXITY_NOISE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum End {
    /// `α → α₋`, reached as `β → +∞`.
    Low,
    /// `α → α₊`, reached as `β → −∞`.
    High,
}

impl std::fmt::Display for End {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            End::Low => "low",
            End::High => "high",
        })
    }
}

#[derive(Debug, Error)]
pub enum SpectrumError {
    #[error("samples not convex at index {index} (excess {excess:e})")]
    NotConvex { index: usize, excess: f64 },
    #[error("grid stops {distance} short of the {end} end of the alpha range")]
    InsufficientGridReach { end: End, distance: f64 },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error(transparent)]
    Gdms(#[from] GdmsError),
}

/// Sampled Legendre transform `ĝ(p) = sup_c (cp − g(c))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Legendre {
    pub p: Vec<f64>,
    pub value: Vec<f64>,
    /// The supremum is not attained inside the sampled domain (`ĝ = +∞`
    /// for a function defined on all of ℝ).
    pub unbounded: Vec<bool>,
    /// Maximiser `c*(p)`.
    pub argmax: Vec<f64>,
}

/// Height of each interior sample above the chord of its neighbours;
/// positive values are convexity violations.
pub fn chord_excess(x: &[f64], y: &[f64]) -> Vec<f64> {
    (1..x.len().saturating_sub(1))
        .map(|k| {
            let (x0, x1, x2) = (x[k - 1], x[k], x[k + 1]);
            let chord = ((x2 - x1) * y[k - 1] + (x1 - x0) * y[k + 1]) / (x2 - x0);
            y[k] - chord
        })
        .collect()
}

fn check_convex(x: &[f64], y: &[f64], noise: f64) -> Result<(), SpectrumError> {
    for (k, e) in chord_excess(x, y).into_iter().enumerate() {
        if e > noise {
            return Err(SpectrumError::NotConvex { index: k + 1, excess: e });
        }
    }
    Ok(())
}

/// Discrete supremum over the samples `(c, g)` (ascending `c`) with a local
/// quadratic refinement at the active index.
pub fn legendre(c: &[f64], g: &[f64], p: &[f64], noise: f64) -> Result<Legendre, SpectrumError> {
    let n = c.len();
    if n < 3 {
        return Err(SpectrumError::TooFewSamples { needed: 3, got: n });
    }
    check_convex(c, g, noise)?;
    // tangent slopes at the ends of the sampled domain
    let first = three_point(&c[..3], &g[..3], c[0]);
    let last = three_point(&c[n - 3..], &g[n - 3..], c[n - 1]);
    let mut out = Legendre {
        p: p.to_vec(),
        value: Vec::with_capacity(p.len()),
        unbounded: Vec::with_capacity(p.len()),
        argmax: Vec::with_capacity(p.len()),
    };
    for &q in p {
        let slack = 1e-6 * (1.0 + q.abs());
        let (k, best) = (0..n)
            .map(|k| (k, c[k] * q - g[k]))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let unbounded = q < first - slack || q > last + slack;
        let (mut value, mut arg) = (best, c[k]);
        if !unbounded && k > 0 && k + 1 < n {
            // quadratic through the active index and its neighbours
            let (h0, h1) = (c[k] - c[k - 1], c[k + 1] - c[k]);
            let s0 = (g[k] - g[k - 1]) / h0;
            let s1 = (g[k + 1] - g[k]) / h1;
            let curv = 2.0 * (s1 - s0) / (h0 + h1);
            let d1 = (s0 * h1 + s1 * h0) / (h0 + h1);
            if curv > 0.0 {
                let x = ((q - d1) / curv).clamp(-h0, h1);
                let v = (c[k] + x) * q - (g[k] + d1 * x + 0.5 * curv * x * x);
                if v > value {
                    (value, arg) = (v, c[k] + x);
                }
            }
        }
        out.value.push(if unbounded { f64::INFINITY } else { value });
        out.unbounded.push(unbounded);
        out.argmax.push(arg);
    }
    Ok(out)
}

/// Position of a point relative to the end it approaches, in logarithms so
/// that differences far below the resolution of `α` and `f` survive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndOffset {
    pub end: End,
    /// `log |α − α_end|`.
    pub log_dalpha: f64,
    /// `log (f − f_end)`.
    pub log_df: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumPoint {
    pub alpha: f64,
    pub f: f64,
    /// The β realising this α.
    pub beta: f64,
    pub residual: f64,
    /// `inf_β (t + αβ) < 0`: the level set is empty and `f` is clamped.
    pub clamped: bool,
    pub offset: Option<EndOffset>,
}

/// Limit value at an end of the α range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    pub alpha: f64,
    pub value: f64,
    /// Distance from the extrapolated value to the nearest sample.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    /// Sorted by increasing α.
    pub points: Vec<SpectrumPoint>,
    pub t0: Option<f64>,
    /// `α₀ = −t′(0)`.
    pub alpha0: Option<f64>,
    /// Where the ends of the α range lie: `0` and `s/2` for systems with a
    /// finiteness threshold `(1 − sβ)/2`, the grid extremes otherwise.
    pub ends: (f64, f64),
    pub low: Extrapolation,
    pub high: Extrapolation,
    /// Discretisation scale of the β grid, `max |Δ²t| / 8`.
    pub grid_tolerance: f64,
    /// The curve also bounds the one-sided level sets from above; there it
    /// is an upper bound only, and clamped points are empty sets.
    pub one_sided_upper_bound: bool,
}

impl SpectrumCurve {
    pub fn alphas(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.alpha).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.f).collect()
    }

    pub fn max(&self) -> (f64, f64) {
        self.points
            .iter()
            .map(|p| (p.alpha, p.f))
            .fold((f64::NAN, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    }

    /// Largest dip below a chord over the distinct α samples.
    pub fn concavity_defect(&self) -> f64 {
        let (a, f) = self.distinct();
        chord_excess(&a, &f.iter().map(|v| -v).collect::<Vec<_>>())
            .into_iter()
            .fold(0.0, f64::max)
    }

    fn distinct(&self) -> (Vec<f64>, Vec<f64>) {
        let mut a: Vec<f64> = Vec::new();
        let mut f: Vec<f64> = Vec::new();
        for p in &self.points {
            if a.last().is_some_and(|&x| p.alpha <= x) {
                continue;
            }
            a.push(p.alpha);
            f.push(p.f);
        }
        (a, f)
    }

    /// The curve with extra points merged in (a refinement toward the ends).
    pub fn with_points(&self, extra: &[SpectrumPoint]) -> SpectrumCurve {
        let mut out = self.clone();
        // Grid points lying beyond an added end point carry less accuracy than
        // the end data and are dropped.
        let beyond = |end: End| {
            extra
                .iter()
                .filter(|p| p.offset.is_some_and(|o| o.end == end))
                .map(|p| p.alpha)
                .reduce(if end == End::Low { f64::max } else { f64::min })
        };
        let (low, high) = (beyond(End::Low), beyond(End::High));
        out.points.retain(|p| {
            let keep = |end: End, cut: Option<f64>| {
                p.offset.is_some_and(|o| o.end == end)
                    || cut.is_none_or(|c| if end == End::Low { p.alpha > c } else { p.alpha < c })
            };
            keep(End::Low, low) && keep(End::High, high)
        });
        out.points.extend_from_slice(extra);
        out.points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(b.beta.total_cmp(&a.beta)));
        out.low = extrapolate(&out.points, out.ends.0, End::Low);
        out.high = extrapolate(&out.points, out.ends.1, End::High);
        out
    }

    pub fn extreme_quotient(&self, end: End) -> Option<f64> {
        let n = self.points.len();
        if n < 2 {
            return None;
        }
        let (outer, inner) = match end {
            End::Low => (self.points[0], self.points[1]),
            End::High => (self.points[n - 1], self.points[n - 2]),
        };
        Some(cell_quotient(&outer, &inner, end))
    }
}

/// `Δf/Δα` between the outermost point and its neighbour, evaluated from the
/// end offsets when both points carry them.
fn cell_quotient(outer: &SpectrumPoint, inner: &SpectrumPoint, end: End) -> f64 {
    if let (Some(o), Some(i)) = (outer.offset, inner.offset) {
        if o.end == end && i.end == end {
            let sign = if end == End::Low { 1.0 } else { -1.0 };
            let num = -(o.log_df - i.log_df).exp_m1();
            let den = -(o.log_dalpha - i.log_dalpha).exp_m1();
            return sign * (i.log_df - i.log_dalpha).exp() * num / den;
        }
    }
    (inner.f - outer.f) / (inner.alpha - outer.alpha)
}

fn extrapolate(points: &[SpectrumPoint], target: f64, end: End) -> Extrapolation {
    let n = points.len();
    let (outer, inner) = match end {
        End::Low => (points[0], points[1.min(n - 1)]),
        End::High => (points[n - 1], points[n.saturating_sub(2)]),
    };
    let q = if n > 1 { cell_quotient(&outer, &inner, end) } else { 0.0 };
    let q = if q.is_finite() { q } else { 0.0 };
    let value = outer.f + q * (target - outer.alpha);
    Extrapolation {
        alpha: target,
        value,
        residual: (value - outer.f).abs(),
    }
}

/// `−t′` over the grid: from the operator when available, else by finite
/// differences with one Richardson step on uniform grids.
pub fn exponent_map(curve: &FreeEnergyCurve) -> Vec<f64> {
    if let Some(s) = &curve.slope {
        return s.iter().map(|d| -d).collect();
    }
    let (b, t) = (&curve.beta, &curve.t);
    let n = b.len();
    let h = if n > 1 { b[1] - b[0] } else { 0.0 };
    let uniform = n > 1 && b.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs());
    (0..n)
        .map(|k| {
            let d = if uniform && k >= 2 && k + 2 < n {
                let d1 = (t[k + 1] - t[k - 1]) / (2.0 * h);
                let d2 = (t[k + 2] - t[k - 2]) / (4.0 * h);
                (4.0 * d1 - d2) / 3.0
            } else if k == 0 {
                three_point(&b[..3], &t[..3], b[0])
            } else if k + 1 == n {
                three_point(&b[n - 3..], &t[n - 3..], b[n - 1])
            } else {
                three_point(&b[k - 1..k + 2], &t[k - 1..k + 2], b[k])
            };
            -d
        })
        .collect()
}

/// Derivative at `x` of the parabola through three samples.
fn three_point(x: &[f64], y: &[f64], at: f64) -> f64 {
    let (x0, x1, x2) = (x[0], x[1], x[2]);
    y[0] * (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2))
        + y[1] * (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2))
        + y[2] * (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1))
}

/// `(inf, sup)` of `−t′` over the grid.
pub fn alpha_range(curve: &FreeEnergyCurve) -> (f64, f64) {
    exponent_map(curve)
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), a| (lo.min(a), hi.max(a)))
}

/// Parametric spectrum `f(α(β)) = t(β) + β α(β)` with `α = −t′`.
pub fn spectrum(curve: &FreeEnergyCurve) -> Result<SpectrumCurve, SpectrumError> {
    let n = curve.beta.len();
    if n < 3 {
        return Err(SpectrumError::TooFewSamples { needed: 3, got: n });
    }
    let noise = curve.residual.iter().fold(CONVEXITY_NOISE, |a, &r| a.max(10.0 * r));
    check_convex(&curve.beta, &curve.t, noise)?;
    let alpha = exponent_map(curve);
    let mut points: Vec<SpectrumPoint> = (0..n)
        .map(|k| {
            let (b, t, a) = (curve.beta[k], curve.t[k], alpha[k]);
            let raw = t + b * a;
            let offset = match (curve.threshold_scale, curve.log_gap[k], curve.log_gap_slope[k]) {
                (Some(_), Some(u), Some(du)) if b < 0.0 && du > 0.0 => Some(EndOffset {
                    end: End::High,
                    log_dalpha: u + du.ln(),
                    log_df: u + (1.0 - b * du).ln(),
                }),
                _ => None,
            };
            SpectrumPoint {
                alpha: a,
                f: raw.max(0.0),
                beta: b,
                residual: curve.residual[k],
                clamped: raw < 0.0,
                offset,
            }
        })
        .collect();
    points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(b.beta.total_cmp(&a.beta)));
    let zero = curve.beta.iter().position(|&b| b == 0.0);
    let (lo, hi) = alpha_range(curve);
    let ends = match curve.threshold_scale {
        Some(s) => (0.0, 0.5 * s),
        None => (lo, hi),
    };
    let grid_tolerance = (1..n - 1)
        .map(|k| (curve.t[k + 1] - 2.0 * curve.t[k] + curve.t[k - 1]).abs() / 8.0)
        .fold(0.0, f64::max);
    Ok(SpectrumCurve {
        low: extrapolate(&points, ends.0, End::Low),
        high: extrapolate(&points, ends.1, End::High),
        points,
        t0: zero.map(|k| curve.t[k]),
        alpha0: zero.map(|k| alpha[k]),
        ends,
        grid_tolerance,
        one_sided_upper_bound: true,
    })
}

/// `f(α) = max{−ĝ(−α), 0}` with `g = t`, by the sampled transform.
pub fn direct_spectrum(curve: &FreeEnergyCurve, alphas: &[f64]) -> Result<Vec<f64>, SpectrumError> {
    let noise = curve.residual.iter().fold(CONVEXITY_NOISE, |a, &r| a.max(10.0 * r));
    let p: Vec<f64> = alphas.iter().map(|a| -a).collect();
    let tr = legendre(&curve.beta, &curve.t, &p, noise)?;
    Ok(tr.value.iter().map(|v| (-v).max(0.0)).collect())
}

/// Largest difference between the parametric and the direct transform on
/// the parametric α grid, and the allowed `2 ×` grid tolerance.
pub fn transform_agreement(curve: &FreeEnergyCurve, spec: &SpectrumCurve) -> Result<(f64, f64), SpectrumError> {
    let alphas = spec.alphas();
    let direct = direct_spectrum(curve, &alphas)?;
    let diff = spec
        .points
        .iter()
        .zip(&direct)
        .map(|(p, d)| (p.f - d).abs())
        .fold(0.0, f64::max);
    Ok((diff, 2.0 * spec.grid_tolerance.max(f64::EPSILON)))
}

/// Points approaching the low end, from the large-β expansion of
/// `t − δ_c`.
pub fn low_end_ladder(exp: &BoundedWindingExpansion, betas: &[f64]) -> Vec<SpectrumPoint> {
    betas
        .iter()
        .map(|&b| {
            let (lg, dlg) = exp.log_excess(b);
            let alpha = -lg.exp() * dlg;
            SpectrumPoint {
                alpha,
                f: exp.delta_c + lg.exp() + b * alpha,
                beta: b,
                residual: 0.0,
                clamped: false,
                offset: Some(EndOffset {
                    end: End::Low,
                    log_dalpha: lg + (-dlg).ln(),
                    log_df: lg + (1.0 - b * dlg).ln(),
                }),
            }
        })
        .collect()
}

/// Points approaching the high end, from roots solved in `u = log(t − threshold)`.
pub fn high_end_ladder(op: &TransferOperator, betas: &[f64], opts: &RootOptions) -> Result<Vec<SpectrumPoint>, SpectrumError> {
    let curve = op.free_energy_curve(betas, opts)?;
    let s = curve.threshold_scale.unwrap_or(0.0);
    Ok((0..betas.len())
        .map(|k| {
            let b = betas[k];
            let (u, du) = (curve.log_gap[k].unwrap_or(f64::NAN), curve.log_gap_slope[k].unwrap_or(f64::NAN));
            let alpha = 0.5 * s - u.exp() * du;
            SpectrumPoint {
                alpha,
                f: curve.t[k] + b * alpha,
                beta: b,
                residual: curve.residual[k],
                clamped: false,
                offset: Some(EndOffset {
                    end: End::High,
                    log_dalpha: u + du.ln(),
                    log_df: u + (1.0 - b * du).ln(),
                }),
            }
        })
        .collect())
}

/// One-sided endpoint slopes under refinement toward the ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointSlopes {
    /// Extreme-cell quotients at the low end, coarsest first.
    pub low: Vec<f64>,
    pub high: Vec<f64>,
    pub low_diverges: bool,
    pub high_diverges: bool,
}

impl EndpointSlopes {
    pub fn finest(&self) -> (f64, f64) {
        (*self.low.last().unwrap_or(&f64::NAN), *self.high.last().unwrap_or(&f64::NAN))
    }
}

/// Quotients at the extreme grid cells of successively refined curves. A
/// slope diverges when its magnitude passes the threshold and grows
/// monotonically with refinement.
pub fn endpoint_slopes(refinements: &[SpectrumCurve]) -> Result<EndpointSlopes, SpectrumError> {
    let Some(finest) = refinements.last() else {
        return Err(SpectrumError::TooFewSamples { needed: 1, got: 0 });
    };
    let (a, _) = finest.distinct();
    let low_gap = a.first().map_or(f64::INFINITY, |x| x - finest.ends.0);
    let high_gap = a.last().map_or(f64::INFINITY, |x| finest.ends.1 - x);
    if low_gap > GRID_REACH {
        return Err(SpectrumError::InsufficientGridReach { end: End::Low, distance: low_gap });
    }
    if high_gap > GRID_REACH {
        return Err(SpectrumError::InsufficientGridReach { end: End::High, distance: high_gap });
    }
    let low: Vec<f64> = refinements.iter().filter_map(|c| c.extreme_quotient(End::Low)).collect();
    let high: Vec<f64> = refinements.iter().filter_map(|c| c.extreme_quotient(End::High)).collect();
    let grows = |v: &[f64]| v.len() >= 2 && v.windows(2).all(|w| w[1].abs() > w[0].abs());
    Ok(EndpointSlopes {
        low_diverges: low.last().is_some_and(|&q| q > DIVERGENCE_THRESHOLD) && grows(&low),
        high_diverges: high.last().is_some_and(|&q| q < -DIVERGENCE_THRESHOLD) && grows(&high),
        low,
        high,
    })
}

/// `base`, then `base` with the first `k` ladder points of each side, for
/// `k = 2, …`. With a single ladder point the extreme cell would join end
/// data to a grid point of coarser accuracy.
pub fn refinements(base: &SpectrumCurve, low: &[SpectrumPoint], high: &[SpectrumPoint]) -> Vec<SpectrumCurve> {
    let steps = low.len().max(high.len());
    (0..=steps)
        .filter(|&k| k != 1)
        .map(|k| {
            let mut extra: Vec<SpectrumPoint> = low[..k.min(low.len())].to_vec();
            extra.extend_from_slice(&high[..k.min(high.len())]);
            base.with_points(&extra)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn quadratic_is_self_dual() {
        let c = grid(-5.0, 5.0, 201);
        let g: Vec<f64> = c.iter().map(|x| 0.5 * x * x).collect();
        let p = grid(-4.0, 4.0, 81);
        let tr = legendre(&c, &g, &p, 1e-12).unwrap();
        let h = c[1] - c[0];
        for (q, v) in p.iter().zip(&tr.value) {
            assert!((v - 0.5 * q * q).abs() <= h * h, "{q}: {v}");
        }
        assert!(tr.unbounded.iter().all(|u| !u));
    }

    #[test]
    fn affine_transform() {
        let (a, b) = (0.3, -1.2);
        let c = grid(-5.0, 5.0, 101);
        let g: Vec<f64> = c.iter().map(|x| a + b * x).collect();
        let tr = legendre(&c, &g, &[b, b - 0.5, b + 0.5], 1e-12).unwrap();
        assert!((tr.value[0] + a).abs() < 1e-12);
        assert!(!tr.unbounded[0]);
        assert!(tr.unbounded[1] && tr.unbounded[2]);
        assert_eq!(tr.value[1], f64::INFINITY);
    }

    #[test]
    fn double_transform() {
        let c = grid(-3.0, 3.0, 301);
        let g: Vec<f64> = c.iter().map(|x| (1.0 + x * x).sqrt() + 0.2 * x).collect();
        let p = grid(-0.75, 1.15, 401);
        let once = legendre(&c, &g, &p, 1e-12).unwrap();
        let inner = grid(-1.5, 1.5, 31);
        let twice = legendre(&p, &once.value, &inner, 1e-10).unwrap();
        let h = c[1] - c[0];
        for (x, v) in inner.iter().zip(&twice.value) {
            let exact = (1.0 + x * x).sqrt() + 0.2 * x;
            assert!((v - exact).abs() <= h * h, "{x}: {v} vs {exact}");
        }
    }

    #[test]
    fn rejects_concave_samples() {
        let c = grid(-1.0, 1.0, 11);
        let g: Vec<f64> = c.iter().map(|x| -x * x).collect();
        assert!(matches!(legendre(&c, &g, &[0.0], 1e-9), Err(SpectrumError::NotConvex { .. })));
    }

    fn synthetic(n: usize) -> FreeEnergyCurve {
        let b = grid(-5.0, 5.0, n);
        let t = b.iter().map(|x| (1.0 + x * x).sqrt()).collect();
        FreeEnergyCurve::from_samples(b, t)
    }

    #[test]
    fn synthetic_spectrum() {
        let curve = synthetic(201);
        let s = spectrum(&curve).unwrap();
        // f(α) = √(1 − α²)
        for p in &s.points {
            assert!((p.f - (1.0 - p.alpha * p.alpha).sqrt()).abs() < 1e-5, "{p:?}");
        }
        assert!(s.concavity_defect() <= CONCAVITY_TOL);
        let (a, m) = s.max();
        assert!((m - s.t0.unwrap()).abs() < 1e-12 && a.abs() < 1e-6);
        let (diff, tol) = transform_agreement(&curve, &s).unwrap();
        assert!(diff <= tol, "{diff} > {tol}");
    }

    #[test]
    fn alpha_range_of_convex_curve() {
        let curve = synthetic(201);
        let h = curve.beta[1] - curve.beta[0];
        let (lo, hi) = alpha_range(&curve);
        let d = |x: f64| x / (1.0 + x * x).sqrt();
        assert!((lo + d(5.0)).abs() < h * h && (hi + d(-5.0)).abs() < h * h);
    }

    #[test]
    fn constant_ratio_gives_degenerate_range() {
        // ψ proportional to ζ makes t affine
        let b = grid(-2.0, 2.0, 41);
        let t = b.iter().map(|x| 0.7 - 0.4 * x).collect();
        let (lo, hi) = alpha_range(&FreeEnergyCurve::from_samples(b, t));
        assert!((hi - lo).abs() < 1e-9);
    }

    #[test]
    fn bounded_synthetic_slopes() {
        let refined: Vec<SpectrumCurve> = [51, 101, 201, 401].iter().map(|&n| spectrum(&synthetic(n)).unwrap()).collect();
        let s = endpoint_slopes(&refined).unwrap();
        assert!(!s.low_diverges && !s.high_diverges);
        let (lo, hi) = s.finest();
        assert!(lo.is_finite() && hi.is_finite() && lo.abs() < 10.0 && hi.abs() < 10.0);
    }

    #[test]
    fn short_grid_is_rejected() {
        let b = grid(-1.0, 1.0, 41);
        let t = b.iter().map(|x| (1.0 + x * x).sqrt()).collect();
        let mut s = spectrum(&FreeEnergyCurve::from_samples(b, t)).unwrap();
        s.ends = (-1.0, 1.0);
        assert!(matches!(endpoint_slopes(&[s]), Err(SpectrumError::InsufficientGridReach { .. })));
    }

    #[test]
    fn refinement_is_cauchy() {
        let f = |n: usize| {
            let s = spectrum(&synthetic(n)).unwrap();
            let i = s.points.iter().position(|p| p.beta == 1.0).unwrap();
            s.points[i].f
        };
        let (a, b, c) = (f(21), f(41), f(81));
        assert!((c - b).abs() <= (b - a).abs());
    }
}
