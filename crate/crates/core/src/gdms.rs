//! Conformal graph directed Markov systems on boundary intervals: pressure
//! of `tζ + βψ` through a collocated transfer operator, free energy and the
//! restricted system at the right end.

use std::f64::consts::{LN_2, PI};

use faer::{linalg::solvers::Solve, Col, Mat};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coding::log_plus;
use crate::fuchsian::{Arc, GroupPresentation};
use crate::induced::{letters_with_target, log_sum_exp, Core, PairState};
use crate::mobius::{BoundaryPoint, DerivativeMetric, MobiusError, MobiusMap};

pub const DEFAULT_ORDER: usize = 16;
pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_ROOT_TOL: f64 = 1e-11;
/// Below `log(t − threshold)` of this, slopes are differenced in `u`.
pub const GAP_SWITCH: f64 = -2.0;
pub const MAX_POWER_ITERATIONS: usize = 100_000;
const CONTAINMENT_TOL: f64 = 1e-9;
const STAGNATION_CHECK: usize = 5_000;
const COARSE_TOL: f64 = 1e-8;
const VECTOR_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GdmsError {
    #[error("power iteration did not settle on a simple positive dominant value")]
    NotIrreducible,
    #[error("power iteration did not converge after {iterations} iterations (last change {delta:e})")]
    NonConvergence { iterations: usize, delta: f64 },
    #[error("no sign change of the pressure for beta = {beta} on t in [{lo}, {hi}]")]
    NoSignChange { beta: f64, lo: f64, hi: f64 },
    #[error("pressure is infinite at t = {t}, beta = {beta}")]
    InfinitePressure { t: f64, beta: f64 },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error(transparent)]
    Mobius(#[from] MobiusError),
}

/// One contraction `Φ_e : X_source → X_target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub source: usize,
    pub target: usize,
    pub map: MobiusMap,
    pub psi: f64,
    pub label: String,
}

/// The countable family `head ∘ γ^a`, `a ≥ 0`, with
/// `ψ = −psi_scale · log⁺ a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicFamily {
    pub source: usize,
    pub target: usize,
    pub head: MobiusMap,
    pub parabolic: MobiusMap,
    /// `Δ` with `Δ γ Δ⁻¹ = z ↦ z + step`.
    pub conjugator: MobiusMap,
    pub step: f64,
    pub psi_scale: f64,
    pub label: String,
}

impl ParabolicFamily {
    pub fn new(
        source: usize,
        target: usize,
        head: MobiusMap,
        parabolic: MobiusMap,
        conjugator: MobiusMap,
        psi_scale: f64,
        label: String,
    ) -> Result<Self, GdmsError> {
        let [a, b, c, d] = conjugator.compose(&parabolic).compose(&conjugator.inverse()).entries();
        if c.abs() > 1e-8 || (a - d).abs() > 1e-8 || b.abs() < 1e-12 {
            return Err(GdmsError::InvalidSystem(format!("{label}: conjugator does not normalize the parabolic")));
        }
        Ok(ParabolicFamily {
            source,
            target,
            head,
            parabolic,
            conjugator,
            step: b / d,
            psi_scale,
            label,
        })
    }

    pub fn member(&self, a: usize) -> MobiusMap {
        self.head.compose(&self.parabolic.pow(a as i64))
    }

    pub fn psi(&self, a: usize) -> f64 {
        -self.psi_scale * log_plus(a)
    }

    /// `lim_a head(γ^a x)`.
    pub fn limit_point(&self) -> BoundaryPoint {
        self.head
            .apply_boundary(self.conjugator.inverse().apply_boundary(BoundaryPoint::Infinity))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdmsSystem {
    /// `X_v` as closed boundary arcs.
    pub vertices: Vec<Arc>,
    pub edges: Vec<Edge>,
    pub families: Vec<ParabolicFamily>,
    pub metric: DerivativeMetric,
}

/// How the countable families are cut off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PressureMode {
    /// Members with `a < cap` only.
    Truncated,
    /// Members with `a ≥ cap` summed in closed form at the limit point.
    Tail,
}

impl GdmsSystem {
    /// Validates indices, containment `Φ_e(X_source) ⊂ X_target` and
    /// irreducibility of the vertex graph. Incidence is vertex-determined:
    /// `e f` is admissible iff `target(f) = source(e)`.
    pub fn new(vertices: Vec<Arc>, edges: Vec<Edge>, families: Vec<ParabolicFamily>, metric: DerivativeMetric) -> Result<Self, GdmsError> {
        let sys = GdmsSystem {
            vertices,
            edges,
            families,
            metric,
        };
        let nv = sys.vertices.len();
        if nv == 0 {
            return Err(GdmsError::InvalidSystem("no vertices".into()));
        }
        let mut adj = vec![vec![false; nv]; nv];
        let mut check = |label: &str, s: usize, t: usize, m: &MobiusMap| -> Result<(), GdmsError> {
            if s >= nv || t >= nv {
                return Err(GdmsError::InvalidSystem(format!("{label}: vertex out of range")));
            }
            let img = sys.vertices[s].image(m);
            if !sys.vertices[t].contains_arc(&img, CONTAINMENT_TOL) {
                return Err(GdmsError::InvalidSystem(format!("{label}: image leaves its target interval")));
            }
            adj[s][t] = true;
            Ok(())
        };
        for e in &sys.edges {
            check(&e.label, e.source, e.target, &e.map)?;
        }
        for f in &sys.families {
            check(&f.label, f.source, f.target, &f.head)?;
            check(&f.label, f.source, f.target, &f.member(1))?;
        }
        for start in 0..nv {
            let mut seen = vec![false; nv];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(u) = stack.pop() {
                for v in 0..nv {
                    if adj[u][v] && !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            if seen.iter().any(|s| !s) {
                return Err(GdmsError::InvalidSystem("vertex graph is not strongly connected".into()));
            }
        }
        Ok(sys)
    }

    /// The induced system of a group: vertices are pair states, letters
    /// `g₁ h g₂` are single edges and letters `g₁ γⁿ g₂` form one family per
    /// `(g₁, γ, g₂)`.
    pub fn fuchsian(g: &GroupPresentation) -> Result<Self, GdmsError> {
        let states: Vec<PairState> = g.pair_states();
        let idx = |p: PairState| states.iter().position(|&q| q == p).unwrap();
        let vertices = states.iter().map(|&(a, b)| g.pair_interval(a, b)).collect();
        let mut edges = Vec::new();
        let mut families = Vec::new();
        for &p in &states {
            for e in letters_with_target(g, p, 1) {
                let (s, t) = (idx(e.source()), idx(e.target()));
                match e.core {
                    Core::Hyperbolic { .. } => edges.push(Edge {
                        source: s,
                        target: t,
                        map: e.branch(g),
                        psi: 0.0,
                        label: e.display(g),
                    }),
                    Core::Parabolic { gamma, .. } => {
                        let horo = g
                            .horocircle(gamma)
                            .ok_or_else(|| GdmsError::InvalidSystem(format!("no cusp for {}", g.label(gamma))))?;
                        families.push(ParabolicFamily::new(
                            s,
                            t,
                            *g.map(e.first),
                            *g.map(gamma),
                            horo.conjugator,
                            2.0,
                            format!("{} ({})^n {}", g.label(e.first), g.label(gamma), g.label(e.last)),
                        )?);
                    }
                }
            }
        }
        GdmsSystem::new(vertices, edges, families, DerivativeMetric::Visual)
    }

    /// Full shift on `k` affine maps of `[0, 1]` with derivative `e^{−χ}`.
    pub fn full_shift(k: usize, chi: f64) -> Result<Self, GdmsError> {
        let r = (-chi).exp();
        if k == 0 || r * k as f64 > 1.0 + 1e-12 {
            return Err(GdmsError::InvalidSystem("maps overlap".into()));
        }
        let edges = (0..k)
            .map(|j| {
                Ok(Edge {
                    source: 0,
                    target: 0,
                    map: affine(r, j as f64 / k as f64)?,
                    psi: 0.0,
                    label: format!("e{j}"),
                })
            })
            .collect::<Result<Vec<_>, GdmsError>>()?;
        GdmsSystem::new(
            vec![Arc::new(BoundaryPoint::Finite(0.0), BoundaryPoint::Finite(1.0))],
            edges,
            Vec::new(),
            DerivativeMetric::Euclidean,
        )
    }

    /// Divergence abscissa `(1 − psi_scale·β)/2` of the family series.
    pub fn finiteness_threshold(&self, beta: f64) -> Option<f64> {
        self.families
            .iter()
            .map(|f| 0.5 * (1.0 - f.psi_scale * beta))
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))))
    }

    /// The finite system keeping family members with `a < max_members`.
    pub fn restricted(&self, max_members: usize) -> GdmsSystem {
        GdmsSystem {
            vertices: self.vertices.clone(),
            edges: self.letters(max_members),
            families: Vec::new(),
            metric: self.metric,
        }
    }

    /// Edges plus family members with `a < cap`.
    pub fn letters(&self, cap: usize) -> Vec<Edge> {
        let mut out = self.edges.clone();
        for f in &self.families {
            let mut m = f.head;
            for a in 0..cap {
                out.push(Edge {
                    source: f.source,
                    target: f.target,
                    map: m,
                    psi: f.psi(a),
                    label: format!("{}[{a}]", f.label),
                });
                m = m.compose(&f.parabolic);
            }
        }
        out
    }

    /// `log Σ exp(t log|Φ_ω'(x_ω)| + β S_nψ(ω))` over admissible words of
    /// `n` letters with members `a < cap`, `x_ω` the midpoint of the last
    /// source interval.
    pub fn partition_sum(&self, t: f64, beta: f64, n: usize, cap: usize) -> Result<f64, GdmsError> {
        assert!(n >= 1);
        let letters = self.letters(cap);
        let mut by_target: Vec<Vec<usize>> = vec![Vec::new(); self.vertices.len()];
        for (i, e) in letters.iter().enumerate() {
            by_target[e.target].push(i);
        }
        let mut terms = Vec::new();
        let mut stack: Vec<(usize, MobiusMap, f64, usize)> = letters
            .iter()
            .enumerate()
            .map(|(i, e)| (i, e.map, e.psi, 1))
            .collect();
        while let Some((last, map, psi, len)) = stack.pop() {
            let e = &letters[last];
            if len == n {
                let x = self.vertices[e.source].midpoint();
                terms.push(t * map.log_derivative(x, self.metric)? + beta * psi);
                continue;
            }
            for &f in &by_target[e.source] {
                stack.push((f, map.compose(&letters[f].map), psi + letters[f].psi, len + 1));
            }
        }
        Ok(log_sum_exp(&terms))
    }

    pub fn operator(&self, cap: usize, order: usize, mode: PressureMode) -> Result<TransferOperator, GdmsError> {
        TransferOperator::new(self, cap, order, mode)
    }
}

fn affine(r: f64, c: f64) -> Result<MobiusMap, GdmsError> {
    Ok(MobiusMap::from_unnormalized(r, c, 0.0, 1.0)?)
}

/// Chebyshev nodes of the first kind on `[−1, 1]`.
fn chebyshev_nodes(k: usize) -> Vec<f64> {
    (0..k)
        .map(|j| ((2 * j + 1) as f64 * PI / (2 * k) as f64).cos())
        .collect()
}

/// Lagrange basis at `xi` for the Chebyshev nodes (barycentric form).
fn lagrange_basis(nodes: &[f64], xi: f64) -> Vec<f64> {
    let k = nodes.len();
    let mut out = vec![0.0; k];
    if k == 1 {
        out[0] = 1.0;
        return out;
    }
    if let Some(j) = nodes.iter().position(|&x| x == xi) {
        out[j] = 1.0;
        return out;
    }
    let mut total = 0.0;
    for j in 0..k {
        let w = if j % 2 == 0 { 1.0 } else { -1.0 } * ((2 * j + 1) as f64 * PI / (2 * k) as f64).sin();
        out[j] = w / (xi - nodes[j]);
        total += out[j];
    }
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Local coordinate in `[−1, 1]` of a point of (or next to) an arc.
fn local_coordinate(arc: &Arc, x: BoundaryPoint) -> f64 {
    let span = arc.span();
    let mut o = arc.offset(x);
    if o > span + 0.5 * (2.0 * PI - span) {
        o -= 2.0 * PI;
    }
    2.0 * o / span - 1.0
}

#[derive(Debug, Clone)]
struct TailTerm {
    /// `log` of the `x`-dependent prefactor.
    log_pref: f64,
    /// `log(α s²)`.
    log_lead: f64,
    b: f64,
    c: f64,
    col: usize,
    basis: Vec<f64>,
    psi_scale: f64,
}

#[derive(Debug, Clone, Default)]
struct RowTerms {
    ld: Vec<f64>,
    psi: Vec<f64>,
    col: Vec<usize>,
    basis: Vec<f64>,
    tails: Vec<TailTerm>,
}

/// The transfer operator `L f(x) = Σ_{source(e) = v(x)} |Φ_e'(x)|^t e^{βψ(e)} f(Φ_e x)`
/// collocated at Chebyshev nodes on every vertex interval, with all
/// `(t, β)`-independent data precomputed.
#[derive(Debug, Clone)]
pub struct TransferOperator {
    pub cap: usize,
    pub order: usize,
    pub mode: PressureMode,
    vertex_count: usize,
    psi_scale: Option<f64>,
    rows: Vec<RowTerms>,
    /// Tail start per family.
    tail_start: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureResult {
    /// `+∞` when the family series diverges.
    pub value: f64,
    pub cap: usize,
    pub order: usize,
    pub mode: PressureMode,
    /// Largest share of a row's weight carried by the closed-form tail.
    pub tail_share: f64,
    pub iterations: usize,
    /// Last relative change of the eigenvalue estimate.
    pub delta: f64,
}

impl PressureResult {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

impl TransferOperator {
    pub fn new(sys: &GdmsSystem, cap: usize, order: usize, mode: PressureMode) -> Result<Self, GdmsError> {
        assert!(cap >= 1 && order >= 1);
        let nodes = chebyshev_nodes(order);
        let nv = sys.vertices.len();
        let rows: Vec<Result<RowTerms, GdmsError>> = (0..nv * order)
            .into_par_iter()
            .map(|r| {
                let (u, j) = (r / order, r % order);
                let arc = &sys.vertices[u];
                let x = arc.point_at(0.5 * (nodes[j] + 1.0) * arc.span());
                let mut row = RowTerms::default();
                let push = |row: &mut RowTerms, m: &MobiusMap, psi: f64, target: usize| -> Result<(), GdmsError> {
                    row.ld.push(m.log_derivative(x, sys.metric)?);
                    row.psi.push(psi);
                    row.col.push(target);
                    let xi = local_coordinate(&sys.vertices[target], m.apply_boundary(x));
                    row.basis.extend(lagrange_basis(&nodes, xi));
                    Ok(())
                };
                for e in sys.edges.iter().filter(|e| e.source == u) {
                    push(&mut row, &e.map, e.psi, e.target)?;
                }
                for f in sys.families.iter().filter(|f| f.source == u) {
                    let mut m = f.head;
                    for a in 0..cap {
                        push(&mut row, &m, f.psi(a), f.target)?;
                        m = m.compose(&f.parabolic);
                    }
                    if mode == PressureMode::Tail {
                        row.tails.push(tail_term(f, x, sys.metric, &sys.vertices[f.target], &nodes)?);
                    }
                }
                Ok(row)
            })
            .collect();
        let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
        let psi_scale = sys.families.iter().map(|f| f.psi_scale).reduce(f64::max);
        Ok(TransferOperator {
            cap,
            order,
            mode,
            vertex_count: nv,
            psi_scale,
            rows,
            tail_start: cap,
        })
    }

    pub fn dimension(&self) -> usize {
        self.vertex_count * self.order
    }

    pub fn finiteness_threshold(&self, beta: f64) -> Option<f64> {
        self.psi_scale.map(|s| 0.5 * (1.0 - s * beta))
    }

    fn has_tail(&self) -> bool {
        self.mode == PressureMode::Tail && self.rows.iter().any(|r| !r.tails.is_empty())
    }

    /// Weight matrix (row major) scaled by `e^{−shift}`, the shift, and the
    /// tail share. `log_gap` is `log(t − threshold)` when known exactly.
    pub fn matrix(&self, t: f64, beta: f64, log_gap: Option<f64>) -> (Vec<f64>, f64, f64) {
        self.weights(t, beta, log_gap, true)
    }

    fn weights(&self, t: f64, beta: f64, log_gap: Option<f64>, balanced: bool) -> (Vec<f64>, f64, f64) {
        let n = self.dimension();
        let k = self.order;
        let mut logs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut tail_logs: Vec<Vec<f64>> = Vec::with_capacity(n);
        for row in &self.rows {
            let l: Vec<f64> = row.ld.iter().zip(&row.psi).map(|(d, p)| t * d + beta * p).collect();
            let tl: Vec<f64> = if self.mode == PressureMode::Tail {
                row.tails
                    .iter()
                    .map(|tt| {
                        let p = 2.0 * t + tt.psi_scale * beta;
                        let series = match log_gap {
                            // the pole term 1/(p − 1) swamps the rest in double precision
                            Some(u) if u < -40.0 => -(u + LN_2),
                            Some(u) => log_tail_series(p, 2.0 * u.exp(), self.tail_start, tt.b, tt.c, t),
                            None => log_tail_series(p, p - 1.0, self.tail_start, tt.b, tt.c, t),
                        };
                        t * (tt.log_pref - tt.log_lead) + series
                    })
                    .collect()
            } else {
                Vec::new()
            };
            logs.push(l);
            tail_logs.push(tl);
        }
        let h = if balanced {
            self.vertex_balance(&logs, &tail_logs)
        } else {
            vec![0.0; self.vertex_count]
        };
        let mut shift = f64::NEG_INFINITY;
        for (r, row) in self.rows.iter().enumerate() {
            let hu = h[r / k];
            for (i, &lw) in logs[r].iter().enumerate() {
                shift = shift.max(lw + hu - h[row.col[i]]);
            }
            for (tt, &lw) in row.tails.iter().zip(&tail_logs[r]) {
                shift = shift.max(lw + hu - h[tt.col]);
            }
        }
        let mut m = vec![0.0; n * n];
        let mut tail_share: f64 = 0.0;
        for (r, row) in self.rows.iter().enumerate() {
            let out = &mut m[r * n..(r + 1) * n];
            let hu = h[r / k];
            for (i, &lw) in logs[r].iter().enumerate() {
                let w = (lw + hu - h[row.col[i]] - shift).exp();
                let col = row.col[i] * k;
                for (j, b) in row.basis[i * k..(i + 1) * k].iter().enumerate() {
                    out[col + j] += w * b;
                }
            }
            for (tt, &lw) in row.tails.iter().zip(&tail_logs[r]) {
                let w = (lw + hu - h[tt.col] - shift).exp();
                for (j, b) in tt.basis.iter().enumerate() {
                    out[tt.col * k + j] += w * b;
                }
            }
            if !tail_logs[r].is_empty() {
                let all = log_sum_exp(&logs[r].iter().chain(&tail_logs[r]).copied().collect::<Vec<_>>());
                tail_share = tail_share.max((log_sum_exp(&tail_logs[r]) - all).exp());
            }
        }
        (m, shift, tail_share)
    }

    /// Vertex potentials `h` making the largest log weight into and out of
    /// every vertex equal. Conjugating by `diag(e^h)` keeps the spectrum and
    /// stops cycles of very large and very small weights from underflowing.
    fn vertex_balance(&self, logs: &[Vec<f64>], tail_logs: &[Vec<f64>]) -> Vec<f64> {
        let nv = self.vertex_count;
        let k = self.order;
        let mut top = vec![f64::NEG_INFINITY; nv * nv];
        for (r, row) in self.rows.iter().enumerate() {
            let u = r / k;
            for (i, &lw) in logs[r].iter().enumerate() {
                let e = &mut top[u * nv + row.col[i]];
                *e = e.max(lw);
            }
            for (tt, &lw) in row.tails.iter().zip(&tail_logs[r]) {
                let e = &mut top[u * nv + tt.col];
                *e = e.max(lw);
            }
        }
        let mut h = vec![0.0; nv];
        for _ in 0..500 {
            let mut moved: f64 = 0.0;
            for i in 0..nv {
                let mut out = f64::NEG_INFINITY;
                let mut inc = f64::NEG_INFINITY;
                for j in (0..nv).filter(|&j| j != i) {
                    out = out.max(top[i * nv + j] + h[i] - h[j]);
                    inc = inc.max(top[j * nv + i] + h[j] - h[i]);
                }
                if out.is_finite() && inc.is_finite() {
                    let d = 0.5 * (inc - out);
                    h[i] += d;
                    moved = moved.max(d.abs());
                }
            }
            if moved < 1e-3 {
                break;
            }
        }
        h
    }

    pub fn pressure(&self, t: f64, beta: f64) -> Result<PressureResult, GdmsError> {
        self.pressure_with(t, beta, None, DEFAULT_POWER_TOL)
    }

    /// Pressure at `t = threshold + gap`, passing the gap to the tail sum
    /// without cancellation.
    pub fn pressure_at_gap(&self, beta: f64, gap: f64, tol: f64) -> Result<PressureResult, GdmsError> {
        self.pressure_at_log_gap(beta, gap.ln(), tol)
    }

    /// Pressure at `t = threshold + e^u`; usable far below the resolution of
    /// `t` itself.
    pub fn pressure_at_log_gap(&self, beta: f64, u: f64, tol: f64) -> Result<PressureResult, GdmsError> {
        let thr = self.finiteness_threshold(beta).unwrap_or(0.0);
        self.pressure_with(thr + u.exp(), beta, Some(u), tol)
    }

    pub fn pressure_with(&self, t: f64, beta: f64, log_gap: Option<f64>, tol: f64) -> Result<PressureResult, GdmsError> {
        let mut result = PressureResult {
            value: f64::INFINITY,
            cap: self.cap,
            order: self.order,
            mode: self.mode,
            tail_share: 1.0,
            iterations: 0,
            delta: 0.0,
        };
        if self.has_tail() {
            let thr = self.finiteness_threshold(beta).unwrap_or(f64::NEG_INFINITY);
            if (log_gap.is_none() && !(t > thr)) || log_gap == Some(f64::NEG_INFINITY) {
                return Ok(result);
            }
        }
        let (m, shift, tail_share) = self.matrix(t, beta, log_gap);
        let (rho, iterations, delta) = dominant_eigenvalue(&m, self.dimension(), tol, MAX_POWER_ITERATIONS)?;
        result.value = rho.ln() + shift;
        result.tail_share = tail_share;
        result.iterations = iterations;
        result.delta = delta;
        Ok(result)
    }
}

fn tail_term(f: &ParabolicFamily, x: BoundaryPoint, metric: DerivativeMetric, target: &Arc, nodes: &[f64]) -> Result<TailTerm, GdmsError> {
    let xf = x.finite().ok_or(MobiusError::InfiniteArgument)?;
    let delta = f.conjugator;
    let y = delta
        .apply_boundary(x)
        .finite()
        .ok_or_else(|| GdmsError::InvalidSystem(format!("{}: node at the cusp point", f.label)))?;
    let [am, bm, cm, dm] = f.head.compose(&delta.inverse()).entries();
    let ld_delta = delta.derivative_magnitude(x)?.ln();
    // |Φ_a'(x)| = e^{L} / Q(y + s a)
    let (log_pref, alpha, beta, gamma) = match metric {
        DerivativeMetric::Visual => (
            ld_delta + (1.0 + xf * xf).ln(),
            am * am + cm * cm,
            am * bm + cm * dm,
            bm * bm + dm * dm,
        ),
        DerivativeMetric::Euclidean => (ld_delta, cm * cm, cm * dm, dm * dm),
    };
    let s = f.step;
    let qy = alpha * y * y + 2.0 * beta * y + gamma;
    let xi = local_coordinate(target, f.limit_point());
    Ok(TailTerm {
        log_pref,
        log_lead: (alpha * s * s).ln(),
        b: 2.0 * (alpha * y + beta) / (alpha * s),
        c: qy / (alpha * s * s),
        col: f.target,
        basis: lagrange_basis(nodes, xi),
        psi_scale: f.psi_scale,
    })
}

/// `log Σ_{a ≥ start} a^{−p} (1 + b/a + c/a²)^{−t}`, with `p − 1` supplied
/// separately so that the pole at `p = 1` is resolved.
pub fn log_tail_series(p: f64, pm1: f64, start: usize, b: f64, c: f64, t: f64) -> f64 {
    if !(pm1 > 0.0) {
        return f64::INFINITY;
    }
    // roots of 1 + b v + c v² bound the convergence radius in v = 1/a
    let radius = if c.abs() < 1e-300 {
        if b == 0.0 {
            f64::INFINITY
        } else {
            1.0 / b.abs()
        }
    } else {
        let disc = b * b - 4.0 * c;
        if disc < 0.0 {
            (1.0 / c).abs().sqrt()
        } else {
            let r1 = (-b + disc.sqrt()) / (2.0 * c);
            let r2 = (-b - disc.sqrt()) / (2.0 * c);
            r1.abs().min(r2.abs())
        }
    };
    let first = (start.max(1) as f64).max((4.0 / radius).ceil()) as usize;
    let a0 = first as f64;
    let h = |a: f64| (1.0 + b / a + c / (a * a)).powf(-t);
    // everything below is scaled by a0^p
    let mut explicit = 0.0;
    for a in start.max(1)..first {
        let a = a as f64;
        explicit += (a0 / a).powf(p) * h(a);
    }
    let mut total = 0.0;
    let (mut h0, mut h1) = (1.0, -t * b);
    let mut small = 0;
    for k in 0..400 {
        let hk = if k == 0 { h0 } else { h1 };
        let term = hk * a0.powi(-k) * scaled_hurwitz(p + k as f64, pm1 + k as f64, a0);
        total += term;
        if term.abs() <= 1e-17 * total.abs() {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        if k >= 1 {
            // (1 + b v + c v²)^{−t}: (k+1)h_{k+1} = −b(k+t)h_k − c(k−1+2t)h_{k−1}
            let kf = k as f64;
            let next = -(b * (kf + t) * h1 + c * (kf - 1.0 + 2.0 * t) * h0) / (kf + 1.0);
            h0 = h1;
            h1 = next;
        }
    }
    -p * a0.ln() + (explicit + total).ln()
}

/// `A^s ζ(s, A)` for `s > 1`, `s − 1` given exactly.
fn scaled_hurwitz(s: f64, sm1: f64, a0: f64) -> f64 {
    const BERNOULLI: [f64; 6] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0];
    let n = if a0 < 20.0 { (20.0 - a0).ceil() as usize } else { 0 };
    let mut sum = 0.0;
    for i in 0..n {
        sum += (a0 / (a0 + i as f64)).powf(s);
    }
    let q = a0 + n as f64;
    let r = (a0 / q).powf(s);
    sum += r * q / sm1 + 0.5 * r;
    let mut poch = s;
    let mut fact = 2.0;
    let mut qpow = r / q;
    for (j, bj) in BERNOULLI.iter().enumerate() {
        sum += bj / fact * poch * qpow;
        let m = (2 * j + 2) as f64;
        poch *= (s + m - 1.0) * (s + m);
        fact *= (m + 1.0) * (m + 2.0);
        qpow /= q * q;
    }
    sum
}

/// Spectral radius from a full eigenvalue decomposition of the balanced
/// matrix, polished by shifted inverse iteration. Power iteration alone is
/// unreliable here: the subdominant gap can be a few percent and the start
/// vector nearly orthogonal to the tail eigenvector.
pub fn dominant_eigenvalue(m: &[f64], n: usize, tol: f64, max_iter: usize) -> Result<(f64, usize, f64), GdmsError> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(GdmsError::NotIrreducible);
    }
    let mut a = Mat::from_fn(n, n, |i, j| m[i * n + j]);
    balance(&mut a);
    let scale = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| a[(i, j)].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return Err(GdmsError::NotIrreducible);
    }
    a /= faer::Scale(scale);
    let Ok(eig) = a.eigenvalues() else {
        return power_eigenvalue(&a, tol, max_iter).map(|(r, i, d)| (r * scale, i, d));
    };
    let radius = eig.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(radius > 0.0) {
        return Err(GdmsError::NotIrreducible);
    }
    // a period-k graph puts k eigenvalues on the circle; take the positive one
    let positive = eig
        .iter()
        .filter(|z| z.re > 0.0 && z.im.abs() <= 1e-9 * radius)
        .map(|z| z.re)
        .fold(0.0, f64::max);
    if positive < radius * (1.0 - 1e-9) {
        // complex dominant pair, a collocation artefact: report the modulus
        return Ok((radius * scale, 0, 0.0));
    }
    let start = Col::from_fn(n, |_| 1.0);
    let (rho, k, delta) = inverse_iteration(&a, positive, start, tol);
    Ok((rho * scale, k, delta))
}

/// Rayleigh-type estimates `μ + ⟨x, x⟩/⟨x, (A − μ)⁻¹x⟩` until they settle.
fn inverse_iteration(a: &Mat<f64>, mu: f64, mut x: Col<f64>, tol: f64) -> (f64, usize, f64) {
    let n = a.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { mu } else { 0.0 });
    let lu = shifted.partial_piv_lu();
    x /= faer::Scale(x.norm_l2());
    let mut rho = mu;
    let mut delta = f64::INFINITY;
    for k in 1..=50 {
        let y = lu.solve(&x);
        let yn = y.norm_l2();
        let xy = (x.transpose() * &y).abs();
        if !(yn.is_finite() && xy.is_finite() && xy > 0.0) {
            // the shift is an eigenvalue to working precision
            return (mu, k, 0.0);
        }
        let new = mu + 1.0 / (x.transpose() * &y);
        delta = ((new - rho) / new).abs();
        rho = new;
        x = y / faer::Scale(yn);
        if k > 1 && delta <= tol {
            return (rho, k, delta);
        }
    }
    (rho, 50, delta)
}

/// Osborne balancing by powers of two; leaves the spectrum unchanged and
/// makes eigenvalues of graded matrices accurate relative to their size.
fn balance(a: &mut Mat<f64>) {
    let n = a.nrows();
    for _ in 0..200 {
        let mut done = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in (0..n).filter(|&j| j != i) {
                c += a[(j, i)].abs();
                r += a[(i, j)].abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let total = c + r;
            let mut f = 1.0;
            while c < r / 2.0 {
                f *= 2.0;
                c *= 4.0;
            }
            while c > r * 2.0 {
                f /= 2.0;
                c /= 4.0;
            }
            // c now holds c₀f², so the new sums are c/f and r/f
            if (c + r) / f < 0.95 * total {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Shifted power iteration; fallback when the eigenvalue solver fails. The
/// positive shift separates `ρ` from `−ρ` on periodic graphs.
fn power_eigenvalue(a: &Mat<f64>, tol: f64, max_iter: usize) -> Result<(f64, usize, f64), GdmsError> {
    let n = a.nrows();
    let mut v = Col::<f64>::from_fn(n, |_| 1.0 / (n as f64).sqrt());
    let sigma = 1.0;
    let mut lambda = 0.0;
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let w = a * &v + &v * faer::Scale(sigma);
        let nw = w.norm_l2();
        if !(nw > 0.0) || !nw.is_finite() {
            return Err(GdmsError::NotIrreducible);
        }
        delta = ((nw - lambda) / nw).abs();
        lambda = nw;
        let next = w / faer::Scale(nw);
        let moved = (&next - &v).norm_l2();
        v = next;
        if it > 2 && moved <= VECTOR_TOL && delta <= COARSE_TOL {
            let rho = lambda - sigma;
            if !(rho > 0.0) {
                return Err(GdmsError::NotIrreducible);
            }
            let (rho, k, delta) = inverse_iteration(a, rho, v, tol);
            return Ok((rho, it + k, delta));
        }
        if it >= STAGNATION_CHECK && delta > 1e-4 {
            // a complex or negative dominant pair: the iterate rotates
            return Err(GdmsError::NonConvergence { iterations: it, delta });
        }
    }
    Err(GdmsError::NonConvergence {
        iterations: max_iter,
        delta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootOptions {
    pub residual: f64,
    pub power_tol: f64,
    pub max_steps: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        RootOptions {
            residual: DEFAULT_ROOT_TOL,
            power_tol: 1e-13,
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyPoint {
    pub beta: f64,
    pub t: f64,
    /// `log(t − threshold)` when solved in that coordinate.
    pub log_gap: Option<f64>,
    pub residual: f64,
    pub cap: usize,
}

/// Root of a decreasing function: bisection to width `1e−4`, then a
/// safeguarded secant until `|f| ≤ residual`.
fn decreasing_root<F>(f: F, mut lo: f64, mut flo: f64, mut hi: f64, mut fhi: f64, opts: &RootOptions) -> Result<(f64, f64), GdmsError>
where
    F: Fn(f64) -> Result<f64, GdmsError>,
{
    for _ in 0..opts.max_steps {
        if hi - lo <= 1e-4 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() <= opts.residual {
            return Ok((mid, fm));
        }
        if fm > 0.0 {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    let mut best = if flo.abs() < fhi.abs() { (lo, flo) } else { (hi, fhi) };
    for _ in 0..opts.max_steps {
        if best.1.abs() <= opts.residual || hi - lo <= 1e-15 * (1.0 + lo.abs()) {
            break;
        }
        let mut x = hi - fhi * (hi - lo) / (fhi - flo);
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x)?;
        if fx.abs() < best.1.abs() {
            best = (x, fx);
        }
        if fx > 0.0 {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Ok(best)
}

/// Centred difference at 0 with one Richardson step.
fn richardson(g: &dyn Fn(f64) -> Result<f64, GdmsError>, h: f64) -> Result<f64, GdmsError> {
    let d1 = (g(h)? - g(-h)?) / (2.0 * h);
    let d2 = (g(0.5 * h)? - g(-0.5 * h)?) / h;
    Ok((4.0 * d2 - d1) / 3.0)
}

impl TransferOperator {
    /// The free energy `t(β)`: the zero of `t ↦ P(t, β)`.
    pub fn free_energy(&self, beta: f64, opts: &RootOptions) -> Result<FreeEnergyPoint, GdmsError> {
        if self.has_tail() {
            // far above the threshold at strongly negative β the collocated
            // operator can have a spurious complex dominant pair; those
            // points lie above the root and are stepped over
            let u_raw = |u: f64| self.pressure_at_log_gap(beta, u, opts.power_tol).map(|p| p.value);
            let u_of = |u: f64| -> Result<f64, GdmsError> {
                match u_raw(u) {
                    Err(GdmsError::NonConvergence { .. }) => Ok(f64::NEG_INFINITY),
                    r => r,
                }
            };
            let (lo, flo, hi, fhi);
            match u_raw(0.0) {
                Ok(f0) if f0 > 0.0 => {
                    let (mut u, mut fu): (f64, f64) = (0.0, f0);
                    loop {
                        let f = u_of(u + 1.0)?;
                        if f <= 0.0 {
                            (lo, flo, hi, fhi) = (u, fu, u + 1.0, f);
                            break;
                        }
                        (u, fu) = (u + 1.0, f);
                        if u > 12.0 {
                            return Err(GdmsError::NoSignChange { beta, lo: 0.0, hi: u.exp() });
                        }
                    }
                }
                first => {
                    let mut last_neg = first.ok().map(|f| (0.0, f));
                    let mut u: f64 = 0.0;
                    let mut step: f64 = 4.0;
                    loop {
                        u -= step;
                        if u < -1e5 {
                            return Err(GdmsError::NoSignChange { beta, lo: u.exp(), hi: 1.0 });
                        }
                        match u_raw(u) {
                            Ok(f) if f > 0.0 => {
                                let (h, fh) = last_neg.unwrap_or((u + step, f64::NEG_INFINITY));
                                (lo, flo, hi, fhi) = (u, f, h, fh);
                                break;
                            }
                            Ok(f) => last_neg = Some((u, f)),
                            Err(GdmsError::NonConvergence { .. }) => last_neg = None,
                            Err(e) => return Err(e),
                        }
                        if u < -40.0 {
                            step *= 1.5;
                        }
                    }
                }
            }
            let (u, res) = decreasing_root(u_of, lo, flo, hi, fhi, opts)?;
            let thr = self.finiteness_threshold(beta).unwrap_or(0.0);
            Ok(FreeEnergyPoint {
                beta,
                t: thr + u.exp(),
                log_gap: Some(u),
                residual: res.abs(),
                cap: self.cap,
            })
        } else {
            let p = |t: f64| -> Result<f64, GdmsError> { Ok(self.pressure_with(t, beta, None, opts.power_tol)?.value) };
            let mut lo = 0.0;
            let mut flo = p(lo)?;
            let mut step = 1.0;
            while flo <= 0.0 {
                lo -= step;
                step *= 2.0;
                flo = p(lo)?;
                if step > 1e6 {
                    return Err(GdmsError::NoSignChange { beta, lo, hi: 0.0 });
                }
            }
            let mut hi = lo + 1.0;
            let mut fhi = p(hi)?;
            let mut step = 1.0;
            while fhi > 0.0 {
                lo = hi;
                flo = fhi;
                step *= 2.0;
                hi += step;
                fhi = p(hi)?;
                if step > 1e6 {
                    return Err(GdmsError::NoSignChange { beta, lo, hi });
                }
            }
            let (t, res) = decreasing_root(p, lo, flo, hi, fhi, opts)?;
            Ok(FreeEnergyPoint {
                beta,
                t,
                log_gap: None,
                residual: res.abs(),
                cap: self.cap,
            })
        }
    }

    /// `t′(β)` at a root by implicit differentiation of the pressure, with
    /// Richardson-extrapolated centred differences.
    pub fn free_energy_slope(&self, point: &FreeEnergyPoint, opts: &RootOptions) -> Result<f64, GdmsError> {
        Ok(self.slopes(point, opts)?.0)
    }

    /// `u′(β)` for `u = log(t − threshold)`.
    pub fn log_gap_slope(&self, point: &FreeEnergyPoint, opts: &RootOptions) -> Result<Option<f64>, GdmsError> {
        Ok(self.slopes(point, opts)?.1)
    }

    /// `(t′, u′)`. Close to the threshold the differences are taken in `u`,
    /// elsewhere in `t`: there `t′ = −s/2 + e^u u′` would cancel.
    fn slopes(&self, point: &FreeEnergyPoint, opts: &RootOptions) -> Result<(f64, Option<f64>), GdmsError> {
        let beta = point.beta;
        let half = 0.5 * self.psi_scale.unwrap_or(0.0);
        match point.log_gap {
            Some(u) if u < GAP_SWITCH => {
                let fu = richardson(&|d| Ok(self.pressure_at_log_gap(beta, u + d, opts.power_tol)?.value), 1e-3)?;
                let fb = richardson(&|d| Ok(self.pressure_at_log_gap(beta + d, u, opts.power_tol)?.value), 1e-3)?;
                let du = -fb / fu;
                Ok((-half + u.exp() * du, Some(du)))
            }
            gap => {
                let t = point.t;
                let pt = richardson(&|d| Ok(self.pressure_with(t + d, beta, None, opts.power_tol)?.value), 1e-3)?;
                let pb = richardson(&|d| Ok(self.pressure_with(t, beta + d, None, opts.power_tol)?.value), 1e-3)?;
                let dt = -pb / pt;
                Ok((dt, gap.map(|u| (dt + half) / u.exp())))
            }
        }
    }

    /// Free energy over a β grid, evaluated in parallel.
    pub fn free_energy_curve(&self, betas: &[f64], opts: &RootOptions) -> Result<FreeEnergyCurve, GdmsError> {
        let pts: Vec<Result<(FreeEnergyPoint, f64, Option<f64>), GdmsError>> = betas
            .par_iter()
            .map(|&b| {
                let p = self.free_energy(b, opts)?;
                let (dt, du) = self.slopes(&p, opts)?;
                Ok((p, dt, du))
            })
            .collect();
        let pts = pts.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(FreeEnergyCurve {
            beta: betas.to_vec(),
            t: pts.iter().map(|p| p.0.t).collect(),
            log_gap: pts.iter().map(|p| p.0.log_gap).collect(),
            residual: pts.iter().map(|p| p.0.residual).collect(),
            slope: Some(pts.iter().map(|p| p.1).collect()),
            log_gap_slope: pts.iter().map(|p| p.2).collect(),
            threshold_scale: self.psi_scale,
            cap: Some(self.cap),
        })
    }

    /// Free energy on `betas`, with midpoints inserted for `rounds` passes
    /// wherever `t′` changes by more than `max_jump` across a cell.
    pub fn refined_free_energy_curve(&self, betas: &[f64], max_jump: f64, rounds: usize, opts: &RootOptions) -> Result<FreeEnergyCurve, GdmsError> {
        let mut curve = self.free_energy_curve(betas, opts)?;
        for _ in 0..rounds {
            let Some(slope) = &curve.slope else { break };
            let mids: Vec<f64> = (1..curve.beta.len())
                .filter(|&k| (slope[k] - slope[k - 1]).abs() > max_jump)
                .map(|k| 0.5 * (curve.beta[k] + curve.beta[k - 1]))
                .collect();
            if mids.is_empty() {
                break;
            }
            curve = curve.merge(&self.free_energy_curve(&mids, opts)?);
        }
        Ok(curve)
    }
}

/// Sampled free energy `β ↦ t(β)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyCurve {
    pub beta: Vec<f64>,
    pub t: Vec<f64>,
    pub log_gap: Vec<Option<f64>>,
    pub residual: Vec<f64>,
    /// `t′(β)` when known from the operator.
    pub slope: Option<Vec<f64>>,
    /// `u′(β)` where `u = log(t − threshold)` is known.
    pub log_gap_slope: Vec<Option<f64>>,
    /// `ψ` scale of the finiteness threshold, if any.
    pub threshold_scale: Option<f64>,
    pub cap: Option<usize>,
}

impl FreeEnergyCurve {
    /// A curve from samples of a function, without operator data.
    pub fn from_samples(beta: Vec<f64>, t: Vec<f64>) -> Self {
        let n = beta.len();
        FreeEnergyCurve {
            beta,
            t,
            log_gap: vec![None; n],
            residual: vec![0.0; n],
            slope: None,
            log_gap_slope: vec![None; n],
            threshold_scale: None,
            cap: None,
        }
    }

    /// Union of two samplings of the same function, sorted by β.
    pub fn merge(&self, other: &FreeEnergyCurve) -> FreeEnergyCurve {
        let slope = match (&self.slope, &other.slope) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        let mut rows: Vec<(f64, f64, Option<f64>, f64, Option<f64>, Option<f64>)> = Vec::new();
        for (c, side) in [(self, 0), (other, 1)] {
            for k in 0..c.beta.len() {
                let s = slope.map(|(a, b)| if side == 0 { a[k] } else { b[k] });
                rows.push((c.beta[k], c.t[k], c.log_gap[k], c.residual[k], s, c.log_gap_slope[k]));
            }
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        rows.dedup_by(|a, b| a.0 == b.0);
        FreeEnergyCurve {
            beta: rows.iter().map(|r| r.0).collect(),
            t: rows.iter().map(|r| r.1).collect(),
            log_gap: rows.iter().map(|r| r.2).collect(),
            residual: rows.iter().map(|r| r.3).collect(),
            slope: slope.map(|_| rows.iter().map(|r| r.4.unwrap_or(f64::NAN)).collect()),
            log_gap_slope: rows.iter().map(|r| r.5).collect(),
            threshold_scale: self.threshold_scale,
            cap: self.cap,
        }
    }

    pub fn threshold(&self, beta: f64) -> Option<f64> {
        self.threshold_scale.map(|s| 0.5 * (1.0 - s * beta))
    }

    /// Violations of strict decrease, convexity (beyond `noise`) and the
    /// threshold bound.
    pub fn violations(&self, noise: f64) -> Vec<String> {
        let mut out = Vec::new();
        for k in 1..self.t.len() {
            if !(self.t[k] - self.t[k - 1] < noise) {
                out.push(format!("not decreasing at beta = {}", self.beta[k]));
            }
        }
        for k in 1..self.t.len().saturating_sub(1) {
            let (b0, b1, b2) = (self.beta[k - 1], self.beta[k], self.beta[k + 1]);
            let chord = ((b2 - b1) * self.t[k - 1] + (b1 - b0) * self.t[k + 1]) / (b2 - b0);
            if self.t[k] - chord > noise {
                out.push(format!("not convex at beta = {b1}"));
            }
        }
        for (k, &b) in self.beta.iter().enumerate() {
            if let Some(thr) = self.threshold(b) {
                let above = match self.log_gap[k] {
                    Some(u) => u.exp() > 0.0,
                    None => self.t[k] > thr,
                };
                if !above {
                    out.push(format!("t(beta) below 1/2 - beta at beta = {b}"));
                }
            }
        }
        out
    }
}

/// Dimension of the bounded-winding subsystem: family members with
/// exponent at most two.
pub fn delta_c(sys: &GdmsSystem, order: usize, opts: &RootOptions) -> Result<f64, GdmsError> {
    let op = sys.restricted(2).operator(1, order, PressureMode::Truncated)?;
    Ok(op.free_energy(0.0, opts)?.t)
}

/// First-order expansion of `t(β) − δ_c` for large `β`: every family member
/// beyond the bounded-winding ones perturbs the restricted operator by
/// `e^{βψ(a)} D_a`, so `t(β) − δ_c ≈ Σ_a c_a e^{βψ(a)} / |∂_t P|` with
/// `c_a = ⟨v_L, D_a v_R⟩ / ⟨v_L, v_R⟩` at `δ_c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedWindingExpansion {
    pub delta_c: f64,
    /// `∂_t P` of the restricted system at `δ_c`.
    pub dpdt: f64,
    /// `(ψ(a), log c_a)` for the members with a positive coefficient.
    pub terms: Vec<(f64, f64)>,
}

impl BoundedWindingExpansion {
    /// `log(t(β) − δ_c)` and its `β`-derivative.
    pub fn log_excess(&self, beta: f64) -> (f64, f64) {
        let logs: Vec<f64> = self.terms.iter().map(|(psi, lc)| beta * psi + lc).collect();
        let total = log_sum_exp(&logs);
        let slope = self
            .terms
            .iter()
            .zip(&logs)
            .map(|((psi, _), l)| psi * (l - total).exp())
            .sum::<f64>();
        (total - (-self.dpdt).ln(), slope)
    }
}

pub fn bounded_winding_expansion(sys: &GdmsSystem, order: usize, members: usize, opts: &RootOptions) -> Result<BoundedWindingExpansion, GdmsError> {
    const BOUNDED: usize = 2;
    let base = sys.restricted(BOUNDED).operator(1, order, PressureMode::Truncated)?;
    let root = base.free_energy(0.0, opts)?;
    let tc = root.t;
    let n = base.dimension();
    let raw = |op: &TransferOperator| {
        let (m, shift, _) = op.weights(tc, 0.0, None, false);
        Mat::from_fn(n, n, |i, j| m[i * n + j] * shift.exp())
    };
    let a = raw(&base);
    let (rho, _, _) = dominant_eigenvalue(&row_major(&a), n, opts.power_tol, MAX_POWER_ITERATIONS)?;
    let right = eigenvector(&a, rho);
    let left = eigenvector(&a.transpose().to_owned(), rho);
    let norm = (left.transpose() * &right) * rho;
    let dpdt = richardson(&|d| Ok(base.pressure_with(tc + d, 0.0, None, opts.power_tol)?.value), 1e-3)?;
    let mut terms = Vec::new();
    for f in &sys.families {
        for m in BOUNDED..members {
            let part = GdmsSystem {
                vertices: sys.vertices.clone(),
                edges: vec![Edge {
                    source: f.source,
                    target: f.target,
                    map: f.member(m),
                    psi: 0.0,
                    label: format!("{}[{m}]", f.label),
                }],
                families: Vec::new(),
                metric: sys.metric,
            };
            let d = raw(&part.operator(1, order, PressureMode::Truncated)?);
            let c = (left.transpose() * (&d * &right)) / norm;
            if c > 0.0 {
                terms.push((f.psi(m), c.ln()));
            }
        }
    }
    if terms.is_empty() {
        return Err(GdmsError::InvalidSystem("no unbounded-winding members".into()));
    }
    Ok(BoundedWindingExpansion { delta_c: tc, dpdt, terms })
}

fn row_major(a: &Mat<f64>) -> Vec<f64> {
    let n = a.nrows();
    (0..n * n).map(|k| a[(k / n, k % n)]).collect()
}

/// Eigenvector for a known simple eigenvalue, by inverse iteration.
fn eigenvector(a: &Mat<f64>, rho: f64) -> Col<f64> {
    let n = a.nrows();
    let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { rho * (1.0 + 1e-12) } else { 0.0 });
    let lu = shifted.partial_piv_lu();
    let mut x = Col::<f64>::from_fn(n, |_| 1.0);
    for _ in 0..3 {
        let y = lu.solve(&x);
        x = &y / faer::Scale(y.norm_l2());
    }
    if x.iter().sum::<f64>() < 0.0 {
        x = -x;
    }
    x
}

/// Whether `1/2 − β < t(β) < 1/2 − β + ε/2`.
pub fn left_asymptote_check(op: &TransferOperator, beta: f64, eps: f64, opts: &RootOptions) -> Result<bool, GdmsError> {
    assert!(beta <= -10.0, "the band is asymptotic in beta");
    let p = op.free_energy(beta, opts)?;
    let thr = op.finiteness_threshold(beta).unwrap_or(f64::NEG_INFINITY);
    let gap = p.log_gap.map_or(p.t - thr, f64::exp);
    Ok(gap > 0.0 && gap < 0.5 * eps)
}

/// Root of the truncated pressure for each cap.
pub fn cap_ladder(sys: &GdmsSystem, beta: f64, caps: &[usize], order: usize, mode: PressureMode, opts: &RootOptions) -> Result<Vec<FreeEnergyPoint>, GdmsError> {
    caps.par_iter()
        .map(|&c| sys.operator(c, order, mode)?.free_energy(beta, opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;
    use crate::fuchsian::build_group;

    fn hyp() -> GdmsSystem {
        GdmsSystem::fuchsian(&build_group(&preset("one-cusp-one-hyperbolic").unwrap()).unwrap()).unwrap()
    }

    fn gamma2() -> GdmsSystem {
        GdmsSystem::fuchsian(&build_group(&preset("gamma2-type").unwrap()).unwrap()).unwrap()
    }

    /// Three vertices with affine maps; pressure is log ρ of the matrix of
    /// summed `r^t e^{βψ}`.
    fn three_vertex() -> (GdmsSystem, Vec<(usize, usize, f64, f64)>) {
        let spec = vec![
            (0, 1, 0.2, 0.0),
            (0, 2, 0.3, -1.0),
            (1, 0, 0.25, 0.0),
            (1, 2, 0.1, -0.5),
            (2, 0, 0.4, 0.0),
            (2, 1, 0.15, -2.0),
            (0, 0, 0.1, -0.3),
        ];
        let vertices = (0..3)
            .map(|v| Arc::new(BoundaryPoint::Finite(2.0 * v as f64), BoundaryPoint::Finite(2.0 * v as f64 + 1.0)))
            .collect();
        let mut used = [0.0f64; 3];
        let edges = spec
            .iter()
            .enumerate()
            .map(|(i, &(s, t, r, psi))| {
                let off = 2.0 * t as f64 + used[t];
                used[t] += r + 0.01;
                Edge {
                    source: s,
                    target: t,
                    map: affine(r, off - r * 2.0 * s as f64).unwrap(),
                    psi,
                    label: format!("e{i}"),
                }
            })
            .collect();
        (GdmsSystem::new(vertices, edges, Vec::new(), DerivativeMetric::Euclidean).unwrap(), spec)
    }

    fn exact_three_vertex(spec: &[(usize, usize, f64, f64)], t: f64, beta: f64) -> f64 {
        let mut m = vec![0.0; 9];
        for &(s, tg, r, psi) in spec {
            m[s * 3 + tg] += r.powf(t) * (beta * psi).exp();
        }
        let (rho, _, _) = dominant_eigenvalue(&m, 3, 1e-15, 100_000).unwrap();
        rho.ln()
    }

    #[test]
    fn full_shift_pressure() {
        let sys = GdmsSystem::full_shift(3, 2.0).unwrap();
        let op = sys.operator(1, 4, PressureMode::Tail).unwrap();
        assert!((op.pressure(0.0, 0.0).unwrap().value - 3f64.ln()).abs() < 1e-10);
        let p = op.free_energy(0.7, &RootOptions::default()).unwrap();
        assert!((p.t - 3f64.ln() / 2.0).abs() < 1e-8);
    }

    #[test]
    fn three_vertex_matches_matrix() {
        let (sys, spec) = three_vertex();
        let op = sys.operator(1, 5, PressureMode::Truncated).unwrap();
        for &(t, b) in &[(0.3, 0.0), (1.0, 0.5), (0.5, -1.0), (2.0, 2.0)] {
            let p = op.pressure_with(t, b, None, 1e-14).unwrap().value;
            assert!((p - exact_three_vertex(&spec, t, b)).abs() < 1e-8, "{t} {b}");
        }
    }

    #[test]
    fn partition_sum_examples() {
        let sys = GdmsSystem::full_shift(1, 1.0).unwrap();
        assert!((sys.partition_sum(1.0, 0.0, 1, 1).unwrap() + 1.0).abs() < 1e-12);
        let sys = GdmsSystem::full_shift(4, 2.0).unwrap();
        for n in 1..5 {
            let z = sys.partition_sum(0.5, 0.0, n, 1).unwrap();
            assert!((z - n as f64 * (-1.0 + 4f64.ln())).abs() < 1e-9);
        }
    }

    #[test]
    fn threshold() {
        let s = hyp();
        assert_eq!(s.finiteness_threshold(0.0), Some(0.5));
        assert_eq!(s.finiteness_threshold(2.0), Some(-1.5));
        let op = s.operator(25, 4, PressureMode::Tail).unwrap();
        assert!(op.pressure(0.5, 0.0).unwrap().value.is_infinite());
        assert!(op.pressure(0.51, 0.0).unwrap().value.is_finite());
        assert!(op.pressure(0.45, 0.0).unwrap().value.is_infinite());
        let tr = s.operator(25, 4, PressureMode::Truncated).unwrap();
        assert!(tr.pressure(0.45, 0.0).unwrap().value.is_finite());
    }

    #[test]
    fn tail_series_matches_direct_sum() {
        for &(p, b, c, t) in &[(1.5, 0.3, 0.1, 0.8), (3.0, -2.0, 1.5, 1.7), (1.05, 1.0, 0.5, 0.5)] {
            let start = 30;
            let direct: f64 = (start..2_000_000)
                .map(|a| {
                    let a = a as f64;
                    a.powf(-p) * (1.0 + b / a + c / (a * a)).powf(-t)
                })
                .sum();
            // remainder of the direct sum beyond its cutoff
            let rem = 2e6f64.powf(1.0 - p) / (p - 1.0);
            let series = log_tail_series(p, p - 1.0, start, b, c, t).exp();
            assert!(((direct + rem) - series).abs() < 1e-6 * series, "{p}: {direct} vs {series}");
        }
    }

    #[test]
    fn tail_term_matches_members() {
        let s = hyp();
        let f = &s.families[0];
        let nodes = chebyshev_nodes(1);
        let x = s.vertices[f.source].midpoint();
        let tt = tail_term(f, x, DerivativeMetric::Visual, &s.vertices[f.target], &nodes).unwrap();
        for a in [1usize, 7, 50, 300] {
            let exact = f.member(a).log_visual_derivative(x);
            let af = a as f64;
            let formula = tt.log_pref - tt.log_lead - 2.0 * af.ln() - (1.0 + tt.b / af + tt.c / (af * af)).ln();
            assert!((exact - formula).abs() < 1e-9, "{a}: {exact} {formula}");
        }
    }

    #[test]
    fn fuchsian_pressure_monotone() {
        for sys in [hyp(), gamma2()] {
            // the one-node matrix is entrywise positive, so adding letters
            // can only raise its spectral radius
            let op = sys.operator(50, 1, PressureMode::Tail).unwrap();
            let small = sys.operator(25, 1, PressureMode::Truncated).unwrap();
            let big = sys.operator(50, 1, PressureMode::Truncated).unwrap();
            for beta in [-1.0, 0.0, 1.0] {
                let mut prev = f64::INFINITY;
                for k in 1..12 {
                    let t = 0.5 - beta + 0.1 * k as f64;
                    let p = op.pressure(t, beta).unwrap().value;
                    assert!(p < prev);
                    prev = p;
                    let ps = small.pressure(t, beta).unwrap().value;
                    let pb = big.pressure(t, beta).unwrap().value;
                    assert!(ps <= pb + 1e-9 && pb <= p + 1e-9);
                }
            }
        }
    }

    #[test]
    fn free_energy_hyperbolic_preset() {
        let sys = hyp();
        let op = sys.operator(400, 16, PressureMode::Tail).unwrap();
        let opts = RootOptions::default();
        let p = op.free_energy(0.0, &opts).unwrap();
        assert!((p.t - 0.816942).abs() < 1e-4, "{}", p.t);
        assert!(p.residual <= 1e-8);
        let dc = delta_c(&sys, 16, &opts).unwrap();
        assert!(dc > 0.0 && dc < p.t - 0.01);
        assert!(left_asymptote_check(&op, -20.0, 0.1, &opts).unwrap());
    }

    #[test]
    fn slope_matches_difference_quotient() {
        let sys = hyp();
        let op = sys.operator(100, 8, PressureMode::Tail).unwrap();
        let opts = RootOptions::default();
        let p = op.free_energy(0.5, &opts).unwrap();
        let s = op.free_energy_slope(&p, &opts).unwrap();
        let h = 1e-3;
        let fd = (op.free_energy(0.5 + h, &opts).unwrap().t - op.free_energy(0.5 - h, &opts).unwrap().t) / (2.0 * h);
        assert!((s - fd).abs() < 1e-5, "{s} {fd}");
        assert!(s < 0.0 && s > -1.0);
    }

    #[test]
    fn rejects_bad_systems() {
        assert!(GdmsSystem::full_shift(3, 0.5).is_err());
        let v = vec![
            Arc::new(BoundaryPoint::Finite(0.0), BoundaryPoint::Finite(1.0)),
            Arc::new(BoundaryPoint::Finite(2.0), BoundaryPoint::Finite(3.0)),
        ];
        let e = vec![Edge {
            source: 0,
            target: 0,
            map: affine(0.5, 0.0).unwrap(),
            psi: 0.0,
            label: "e".into(),
        }];
        assert!(matches!(
            GdmsSystem::new(v, e, Vec::new(), DerivativeMetric::Euclidean),
            Err(GdmsError::InvalidSystem(_))
        ));
    }
}
