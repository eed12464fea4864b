//! The induced Markov shift on points whose first block has length one:
//! its countable alphabet, incidence, potentials and the conjugacy with
//! the first-return map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coding::{bowen_series_step, log_plus, starts_short_block, CodingError, MAX_CODING_STEPS, ROUND_TRIP_TOL};
use crate::fuchsian::{inverse, Arc, GroupPresentation, Symbol};
use crate::mobius::{hyperbolic_distance, BoundaryPoint, DerivativeMetric, MobiusError, MobiusMap, PlanePoint};

/// A pair state `(a, b)`: the first two symbols of a coded point.
pub type PairState = (Symbol, Symbol);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Core {
    /// `γⁿ` with `n ≥ 1`.
    Parabolic { gamma: Symbol, n: usize },
    Hyperbolic { h: Symbol },
}

/// A letter `g₁ γⁿ g₂` or `g₁ h g₂` of the induced alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InducedLetter {
    pub first: Symbol,
    pub core: Core,
    pub last: Symbol,
}

impl InducedLetter {
    pub fn is_valid(&self, g: &GroupPresentation) -> bool {
        let n = g.symbol_count();
        if self.first >= n || self.last >= n {
            return false;
        }
        match self.core {
            Core::Parabolic { gamma, n: k } => {
                gamma < n
                    && k >= 1
                    && g.is_parabolic(gamma)
                    && self.first != gamma
                    && self.first != inverse(gamma)
                    && self.last != gamma
                    && self.last != inverse(gamma)
            }
            Core::Hyperbolic { h } => {
                h < n && !g.is_parabolic(h) && h != inverse(self.first) && self.last != inverse(h)
            }
        }
    }

    fn core_symbol(&self) -> Symbol {
        match self.core {
            Core::Parabolic { gamma, .. } => gamma,
            Core::Hyperbolic { h } => h,
        }
    }

    /// Word length `m = |ω₁|`.
    pub fn len(&self) -> usize {
        match self.core {
            Core::Parabolic { n, .. } => n + 2,
            Core::Hyperbolic { .. } => 3,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = vec![self.first];
        match self.core {
            Core::Parabolic { gamma, n } => out.extend(std::iter::repeat_n(gamma, n)),
            Core::Hyperbolic { h } => out.push(h),
        }
        out.push(self.last);
        out
    }

    /// Cusp winding of the core block.
    pub fn winding(&self) -> usize {
        match self.core {
            Core::Parabolic { n, .. } => n - 1,
            Core::Hyperbolic { .. } => 0,
        }
    }

    /// First two symbols.
    pub fn target(&self) -> PairState {
        (self.first, self.core_symbol())
    }

    /// Last two symbols.
    pub fn source(&self) -> PairState {
        (self.core_symbol(), self.last)
    }

    /// Inverse branch `Φ_e = ω₁⋯ω_{m−2}`, mapping the pair interval of
    /// [`source`](Self::source) into that of [`target`](Self::target).
    pub fn branch(&self, g: &GroupPresentation) -> MobiusMap {
        let head = *g.map(self.first);
        match self.core {
            Core::Parabolic { gamma, n } => head.compose(&g.map(gamma).pow(n as i64 - 1)),
            Core::Hyperbolic { .. } => head,
        }
    }

    /// First return time, `m − 2`.
    pub fn return_time(&self) -> usize {
        self.len() - 2
    }

    pub fn display(&self, g: &GroupPresentation) -> String {
        let core = match self.core {
            Core::Parabolic { gamma, n } if n > 1 => format!("({})^{n}", g.label(gamma)),
            _ => g.label(self.core_symbol()).to_string(),
        };
        format!("{} {} {}", g.label(self.first), core, g.label(self.last))
    }
}

/// `ψ(e) = −2 log⁺(|e| − 3)`.
pub fn psi(e: &InducedLetter) -> f64 {
    -2.0 * log_plus(e.len() - 3)
}

/// Letters whose first two symbols are `target`, with parabolic exponent at
/// most `n_max`.
pub fn letters_with_target(g: &GroupPresentation, target: PairState, n_max: usize) -> Vec<InducedLetter> {
    let (first, c) = target;
    let mut out = Vec::new();
    for last in 0..g.symbol_count() {
        if g.is_parabolic(c) {
            for n in 1..=n_max {
                out.push(InducedLetter {
                    first,
                    core: Core::Parabolic { gamma: c, n },
                    last,
                });
            }
        } else {
            out.push(InducedLetter {
                first,
                core: Core::Hyperbolic { h: c },
                last,
            });
        }
    }
    out.retain(|e| e.is_valid(g));
    out
}

/// The truncated alphabet: all letters with parabolic exponent `≤ n_max`.
pub fn alphabet(g: &GroupPresentation, n_max: usize) -> Vec<InducedLetter> {
    g.pair_states()
        .into_iter()
        .flat_map(|p| letters_with_target(g, p, n_max))
        .collect()
}

/// `A(e, f) = 1` iff the last two symbols of `e` are the first two of `f`.
pub fn incidence(e: &InducedLetter, f: &InducedLetter) -> bool {
    e.source() == f.target()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftWord {
    pub letters: Vec<InducedLetter>,
}

impl ShiftWord {
    pub fn is_admissible(&self) -> bool {
        self.letters.windows(2).all(|w| incidence(&w[0], &w[1]))
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        let mut out = Vec::new();
        for e in &self.letters {
            let s = e.symbols();
            out.extend_from_slice(&s[..s.len() - 2]);
        }
        if let Some(e) = self.letters.last() {
            let (a, b) = e.source();
            out.push(a);
            out.push(b);
        }
        out
    }

    /// `Φ_{e₁} ∘ ⋯ ∘ Φ_{e_n}`.
    pub fn branch(&self, g: &GroupPresentation) -> MobiusMap {
        self.letters
            .iter()
            .fold(MobiusMap::IDENTITY, |acc, e| acc.compose(&e.branch(g)))
    }
}

/// `exp(−|ω ∧ τ|)`.
pub fn shift_distance(a: &ShiftWord, b: &ShiftWord) -> f64 {
    let common = a.letters.iter().zip(&b.letters).take_while(|(x, y)| x == y).count();
    (-(common as f64)).exp()
}

/// Parse an exact letter from its symbols, if it is one.
pub fn letter_from_symbols(g: &GroupPresentation, s: &[Symbol]) -> Option<InducedLetter> {
    if s.len() < 3 {
        return None;
    }
    let m = s.len();
    let c = s[1];
    let e = if g.is_parabolic(c) {
        if s[1..m - 1].iter().any(|&x| x != c) {
            return None;
        }
        InducedLetter {
            first: s[0],
            core: Core::Parabolic { gamma: c, n: m - 2 },
            last: s[m - 1],
        }
    } else {
        if m != 3 {
            return None;
        }
        InducedLetter {
            first: s[0],
            core: Core::Hyperbolic { h: c },
            last: s[2],
        }
    };
    e.is_valid(g).then_some(e)
}

/// Cut a symbol sequence starting with a short block into induced letters;
/// as many complete letters as the sequence determines.
pub fn letters_from_symbols(g: &GroupPresentation, s: &[Symbol]) -> Result<Vec<InducedLetter>, CodingError> {
    if s.len() < 2 {
        return Ok(Vec::new());
    }
    if !starts_short_block(g, s, 0) {
        let run = s.iter().take_while(|&&x| x == s[0]).count();
        return Err(CodingError::NotInInducingSet(run));
    }
    let mut out = Vec::new();
    let mut p = 0;
    loop {
        let Some(next) = (p + 1..s.len().saturating_sub(1)).find(|&q| starts_short_block(g, s, q)) else {
            break;
        };
        if next + 2 > s.len() {
            break;
        }
        match letter_from_symbols(g, &s[p..next + 2]) {
            Some(e) => out.push(e),
            None => break,
        }
        p = next;
    }
    Ok(out)
}

/// Code a point of the inducing set into its first `n` induced letters.
pub fn code_induced(g: &GroupPresentation, x: BoundaryPoint, n: usize) -> Result<ShiftWord, CodingError> {
    let mut symbols: Vec<Symbol> = Vec::new();
    let mut starts = vec![0usize];
    let mut y = x;
    while starts.len() <= n || symbols.len() < starts[n] + 2 {
        if symbols.len() >= MAX_CODING_STEPS {
            return Err(CodingError::CodingStalled(starts.len() - 1));
        }
        let (next, s) = match bowen_series_step(g, y) {
            Ok(v) => v,
            Err(e) if symbols.is_empty() => return Err(e),
            Err(_) => return Err(CodingError::CodingStalled(starts.len().saturating_sub(2))),
        };
        symbols.push(s);
        y = next;
        if symbols.len() >= 2 {
            let q = symbols.len() - 2;
            if q == 0 && !starts_short_block(g, &symbols, 0) {
                return Err(CodingError::NotInInducingSet(2));
            }
            if q > 0 && starts.len() <= n && starts_short_block(g, &symbols, q) {
                starts.push(q);
            }
        }
    }
    let back = g.word_map(&symbols).apply_boundary(y);
    let err = back.chordal_distance(x);
    if err > ROUND_TRIP_TOL {
        return Err(CodingError::RoundTrip(err));
    }
    let letters = letters_from_symbols(g, &symbols[..starts[n] + 2])?;
    Ok(ShiftWord {
        letters: letters[..n].to_vec(),
    })
}

/// First-return map: `T^ρ(x) = Φ_{e₁}⁻¹(x)`.
pub fn induced_map(g: &GroupPresentation, x: BoundaryPoint) -> Result<BoundaryPoint, CodingError> {
    let w = code_induced(g, x, 1)?;
    Ok(w.letters[0].branch(g).inverse().apply_boundary(x))
}

/// Closed pair interval `a(b(b))`.
pub fn pair_interval(g: &GroupPresentation, p: PairState) -> Arc {
    g.pair_interval(p.0, p.1)
}

/// The point `Φ_{e₁} ∘ ⋯ ∘ Φ_{e_n}(m)` with `m` the midpoint of the pair
/// interval of the last source state.
pub fn point_from_letters(g: &GroupPresentation, w: &ShiftWord) -> BoundaryPoint {
    let Some(last) = w.letters.last() else {
        return BoundaryPoint::Finite(0.0);
    };
    w.branch(g).apply_boundary(pair_interval(g, last.source()).midpoint())
}

/// Random exponent with `P(n ≥ k) ≈ 1/k`, capped.
fn heavy_tailed<R: Rng>(rng: &mut R, cap: usize) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    ((1.0 / (1.0 - u)).floor() as usize).clamp(1, cap.max(1))
}

/// A random letter with the given first two symbols.
pub fn random_letter<R: Rng>(g: &GroupPresentation, rng: &mut R, target: PairState, max_exponent: usize) -> InducedLetter {
    let (first, c) = target;
    loop {
        let last = rng.random_range(0..g.symbol_count());
        let e = if g.is_parabolic(c) {
            InducedLetter {
                first,
                core: Core::Parabolic {
                    gamma: c,
                    n: heavy_tailed(rng, max_exponent),
                },
                last,
            }
        } else {
            InducedLetter {
                first,
                core: Core::Hyperbolic { h: c },
                last,
            }
        };
        if e.is_valid(g) {
            return e;
        }
    }
}

/// A random admissible word of `len` letters.
pub fn random_shift_word<R: Rng>(g: &GroupPresentation, rng: &mut R, len: usize, max_exponent: usize) -> ShiftWord {
    let states = g.pair_states();
    let mut letters: Vec<InducedLetter> = Vec::with_capacity(len);
    for _ in 0..len {
        let target = match letters.last() {
            Some(e) => e.source(),
            None => states[rng.random_range(0..states.len())],
        };
        letters.push(random_letter(g, rng, target, max_exponent));
    }
    ShiftWord { letters }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiValue {
    pub value: f64,
    /// Distortion of the evaluation over the depth cylinder.
    pub error: f64,
}

/// `φ(ω) = log|Φ_{ω₁}'(π(σω))|`, evaluated at the canonical point of the
/// cylinder `[ω₂ ⋯ ω_depth]`, with the oscillation over that cylinder as
/// error radius.
pub fn phi(g: &GroupPresentation, w: &ShiftWord, depth: usize, metric: DerivativeMetric) -> Result<PhiValue, MobiusError> {
    let depth = depth.clamp(1, w.letters.len().max(1));
    let first = w.letters[0];
    let rest = ShiftWord {
        letters: w.letters[1..depth].to_vec(),
    };
    let terminal = match rest.letters.last() {
        Some(e) => e.source(),
        None => first.source(),
    };
    let x_int = pair_interval(g, terminal);
    let inner = rest.branch(g);
    let centre = inner.apply_boundary(x_int.midpoint());
    let phi_map = first.branch(g);
    let value = phi_map.log_derivative(centre, metric)?;
    let mut error: f64 = 0.0;
    for p in [x_int.start, x_int.end] {
        let v = phi_map.log_derivative(inner.apply_boundary(p), metric)?;
        error = error.max((v - value).abs());
    }
    Ok(PhiValue { value, error })
}

/// Birkhoff sum `S_nφ(ω)` over the first `n` letters, evaluated at the
/// canonical point of the full word.
pub fn birkhoff_phi(g: &GroupPresentation, w: &ShiftWord, n: usize) -> f64 {
    let head = ShiftWord {
        letters: w.letters[..n].to_vec(),
    };
    let tail = ShiftWord {
        letters: w.letters[n..].to_vec(),
    };
    let y = if tail.letters.is_empty() {
        pair_interval(g, w.letters[n - 1].source()).midpoint()
    } else {
        point_from_letters(g, &tail)
    };
    head.branch(g).log_visual_derivative(y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub samples: usize,
    pub letters: usize,
    /// `(sample, letter index)` where shift and induced map disagree.
    pub mismatches: Vec<(usize, usize)>,
    /// Samples whose coding failed outright.
    pub failures: Vec<(usize, String)>,
    /// Draws discarded because their cylinder was below double resolution.
    pub rejected: usize,
}

impl ConjugacyReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.failures.is_empty()
    }
}

/// Smallest angular cylinder width whose code a double still determines.
pub const MIN_CYLINDER_SPAN: f64 = 1e-9;

/// Angular width of the cylinder `[e₁ ⋯ e_n]`.
pub fn cylinder_span(g: &GroupPresentation, letters: &[InducedLetter]) -> f64 {
    let w = ShiftWord {
        letters: letters.to_vec(),
    };
    match letters.last() {
        Some(e) => {
            // endpoint images coincide in floating point well before the
            // derivative underflows
            let x = pair_interval(g, e.source());
            x.span() * w.branch(g).log_visual_derivative(x.midpoint()).exp()
        }
        None => std::f64::consts::TAU,
    }
}

/// Check `π ∘ T_𝒟 = σ ∘ π` letter by letter on `samples` random points.
pub fn conjugacy_check<R: Rng>(
    g: &GroupPresentation,
    rng: &mut R,
    samples: usize,
    letters: usize,
    max_exponent: usize,
) -> ConjugacyReport {
    let mut report = ConjugacyReport {
        samples,
        letters,
        mismatches: Vec::new(),
        failures: Vec::new(),
        rejected: 0,
    };
    for k in 0..samples {
        let (w, x) = loop {
            let w = random_shift_word(g, rng, letters + 3, max_exponent);
            if cylinder_span(g, &w.letters[..letters + 1]) >= MIN_CYLINDER_SPAN {
                break (w.clone(), point_from_letters(g, &w));
            }
            report.rejected += 1;
        };
        let coded = match code_induced(g, x, letters + 1) {
            Ok(c) => c,
            Err(e) => {
                report.failures.push((k, e.to_string()));
                continue;
            }
        };
        let shifted = match induced_map(g, x).and_then(|y| code_induced(g, y, letters)) {
            Ok(c) => c,
            Err(e) => {
                report.failures.push((k, e.to_string()));
                continue;
            }
        };
        for j in 0..letters {
            if shifted.letters[j] != coded.letters[j + 1] || coded.letters[j] != w.letters[j] {
                report.mismatches.push((k, j));
            }
        }
    }
    report
}

/// Finite connectivity witness on the pair-state graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityWitness {
    /// Connector length `ℓ`.
    pub length: usize,
    /// Number of distinct connector words used.
    pub connectors: usize,
}

fn pair_graph(g: &GroupPresentation) -> (Vec<PairState>, Vec<Vec<bool>>) {
    let states = g.pair_states();
    let idx = |p: PairState| states.iter().position(|&q| q == p).unwrap();
    let mut adj = vec![vec![false; states.len()]; states.len()];
    for e in alphabet(g, 1) {
        // reading e then f requires target(f) = source(e)
        adj[idx(e.source())][idx(e.target())] = true;
    }
    (states, adj)
}

fn bool_mul(a: &[Vec<bool>], b: &[Vec<bool>]) -> Vec<Vec<bool>> {
    let n = a.len();
    let mut c = vec![vec![false; n]; n];
    for i in 0..n {
        for k in 0..n {
            if a[i][k] {
                for j in 0..n {
                    c[i][j] |= b[k][j];
                }
            }
        }
    }
    c
}

/// Finite primitivity: a single `ℓ ≤ max_len` such that every ordered pair of
/// letters `a, b` is joined by some `u` of exactly `ℓ` letters.
pub fn primitivity_witness(g: &GroupPresentation, max_len: usize) -> Option<ConnectivityWitness> {
    let (states, adj) = pair_graph(g);
    // a u b admissible with |u| = ℓ needs a path of ℓ letters from source(a)
    // to target(b); ℓ = 0 means source(a) = target(b).
    let n = states.len();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    for len in 0..=max_len {
        if reach.iter().all(|r| r.iter().all(|&x| x)) {
            return Some(ConnectivityWitness {
                length: len,
                connectors: n * n,
            });
        }
        reach = bool_mul(&reach, &adj);
    }
    None
}

/// Finite irreducibility: every ordered pair is joined by some connector of
/// length at most `max_len`; returns the longest one needed.
pub fn irreducibility_witness(g: &GroupPresentation, max_len: usize) -> Option<ConnectivityWitness> {
    let (states, adj) = pair_graph(g);
    let n = states.len();
    let mut reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
    let mut any = reach.clone();
    for len in 0..=max_len {
        if any.iter().all(|r| r.iter().all(|&x| x)) {
            return Some(ConnectivityWitness {
                length: len,
                connectors: n * n,
            });
        }
        reach = bool_mul(&reach, &adj);
        for i in 0..n {
            for j in 0..n {
                any[i][j] |= reach[i][j];
            }
        }
    }
    None
}

/// Period of the pair-state graph (gcd of cycle lengths through a state).
pub fn period(g: &GroupPresentation) -> usize {
    let (_, adj) = pair_graph(g);
    let n = adj.len();
    let mut reach = adj.clone();
    let mut d = 0usize;
    for len in 1..=2 * n {
        if reach.iter().enumerate().any(|(i, r)| r[i]) {
            d = gcd(d, len);
        }
        reach = bool_mul(&reach, &adj);
    }
    d
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DHatEstimate {
    /// `sup |d(Φ_{ω|n}(i), i) + S_nφ(ω)|` over the samples.
    pub value: f64,
    pub samples: usize,
}

/// Empirical constant comparing orbit displacement with Birkhoff sums of
/// the geometric potential (which is negative, so the two cancel).
pub fn estimate_d_hat<R: Rng>(g: &GroupPresentation, rng: &mut R, samples: usize, letters: usize, max_exponent: usize) -> DHatEstimate {
    let mut value: f64 = 0.0;
    for _ in 0..samples {
        let w = random_shift_word(g, rng, letters + 4, max_exponent);
        for n in 1..=letters {
            let head = ShiftWord {
                letters: w.letters[..n].to_vec(),
            };
            let d = hyperbolic_distance(head.branch(g).apply_plane(PlanePoint::I), PlanePoint::I);
            let s = birkhoff_phi(g, &w, n);
            value = value.max((d + s).abs());
        }
    }
    DHatEstimate { value, samples }
}

/// `log Σ exp(−t d(Φ_ω(i), i) + β S_nψ(ω))` over admissible `n`-letter words
/// of the alphabet truncated at `cap`.
pub fn geometric_partition_sum(g: &GroupPresentation, t: f64, beta: f64, n: usize, cap: usize) -> f64 {
    let states = g.pair_states();
    let by_target: Vec<Vec<(InducedLetter, MobiusMap)>> = states
        .iter()
        .map(|&p| {
            letters_with_target(g, p, cap)
                .into_iter()
                .map(|e| (e, e.branch(g)))
                .collect()
        })
        .collect();
    let idx = |p: PairState| states.iter().position(|&q| q == p).unwrap();
    let mut terms: Vec<f64> = Vec::new();
    fn rec(
        by_target: &[Vec<(InducedLetter, MobiusMap)>],
        idx: &dyn Fn(PairState) -> usize,
        state: usize,
        map: MobiusMap,
        psi_sum: f64,
        left: usize,
        t: f64,
        beta: f64,
        terms: &mut Vec<f64>,
    ) {
        for (e, m) in &by_target[state] {
            let next = map.compose(m);
            let ps = psi_sum + psi(e);
            if left == 1 {
                let d = hyperbolic_distance(next.apply_plane(PlanePoint::I), PlanePoint::I);
                terms.push(-t * d + beta * ps);
            } else {
                rec(by_target, idx, idx(e.source()), next, ps, left - 1, t, beta, terms);
            }
        }
    }
    for s in 0..states.len() {
        rec(&by_target, &idx, s, MobiusMap::IDENTITY, 0.0, n, t, beta, &mut terms);
    }
    log_sum_exp(&terms)
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::{code_point, random_block_word, return_time};
    use crate::config::preset;
    use crate::fuchsian::build_group;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gamma2() -> GroupPresentation {
        build_group(&preset("gamma2-type").unwrap()).unwrap()
    }

    fn hyp() -> GroupPresentation {
        build_group(&preset("one-cusp-one-hyperbolic").unwrap()).unwrap()
    }

    #[test]
    fn alphabet_sizes() {
        let g = gamma2();
        assert_eq!(alphabet(&g, 1).len(), 16);
        assert_eq!(alphabet(&g, 2).len(), 32);
        assert!(alphabet(&g, 3).iter().all(|e| matches!(e.core, Core::Parabolic { .. })));
        let h = hyp();
        for n in 1..5 {
            assert_eq!(alphabet(&h, n).len(), 8 * n + 18);
        }
    }

    #[test]
    fn incidence_is_overlap() {
        let g = hyp();
        // symbols: 0 = A, 1 = A⁻¹, 2 = H, 3 = H⁻¹
        let e = letter_from_symbols(&g, &[0, 2, 0]).unwrap();
        let f = letter_from_symbols(&g, &[2, 0, 0, 0, 2]).unwrap();
        assert!(incidence(&e, &f));
        assert!(!incidence(&e, &e));
        let e = letter_from_symbols(&g, &[2, 0, 0, 0, 3]).unwrap();
        let f = letter_from_symbols(&g, &[0, 3, 1]).unwrap();
        assert!(incidence(&e, &f));
    }

    #[test]
    fn psi_values() {
        let g = hyp();
        assert_eq!(psi(&letter_from_symbols(&g, &[0, 2, 0]).unwrap()), 0.0);
        assert_eq!(psi(&letter_from_symbols(&g, &[2, 0, 2]).unwrap()), 0.0);
        let e = letter_from_symbols(&g, &[2, 0, 0, 0, 0, 0, 3]).unwrap();
        assert!((psi(&e) + 2.0 * 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn return_time_matches_letter() {
        let g = hyp();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let w = random_shift_word(&g, &mut rng, 4, 40);
            let x = point_from_letters(&g, &w);
            assert_eq!(return_time(&g, x).unwrap(), w.letters[0].return_time());
        }
    }

    #[test]
    fn periodic_point_conjugacy() {
        let g = gamma2();
        // A B repeated: letters (A B A), (B A B), …
        let x = BoundaryPoint::Finite(1.0 + 2f64.sqrt());
        let w = code_induced(&g, x, 6).unwrap();
        let y = induced_map(&g, x).unwrap();
        let v = code_induced(&g, y, 5).unwrap();
        assert_eq!(&w.letters[1..], &v.letters[..]);
        assert_eq!(w.letters[0].symbols(), vec![0, 2, 0]);
    }

    #[test]
    fn random_conjugacy() {
        for g in [gamma2(), hyp()] {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let r = conjugacy_check(&g, &mut rng, 100, 10, 40);
            assert!(r.passed(), "{r:?}");
        }
        let g = hyp();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(conjugacy_check(&g, &mut rng, 0, 10, 5).passed());
    }

    #[test]
    fn letters_cover_block_coding() {
        let g = gamma2();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let w = random_shift_word(&g, &mut rng, 6, 20);
            let x = point_from_letters(&g, &w);
            let syms = w.symbols();
            let blocks = code_point(&g, x, 3).unwrap();
            assert_eq!(&blocks.symbols()[..], &syms[..blocks.symbols().len()]);
            assert_eq!(letters_from_symbols(&g, &syms).unwrap(), w.letters);
        }
        let _ = random_block_word(&g, &mut rng, 2, 3);
    }

    #[test]
    fn connectivity() {
        let h = hyp();
        // a letter ending in q cannot be followed by one starting with q⁻¹
        // through fewer than three connectors
        assert_eq!(primitivity_witness(&h, 8).unwrap().length, 3);
        assert_eq!(irreducibility_witness(&h, 8).unwrap().length, 3);
        assert_eq!(period(&h), 1);
        let g = gamma2();
        assert_eq!(period(&g), 2);
        assert!(primitivity_witness(&g, 8).is_none());
        assert_eq!(irreducibility_witness(&g, 8).unwrap().length, 3);
    }

    #[test]
    fn phi_properties() {
        for g in [gamma2(), hyp()] {
            let mut rng = ChaCha8Rng::seed_from_u64(4);
            for _ in 0..50 {
                let w = random_shift_word(&g, &mut rng, 10, 30);
                let a = phi(&g, &w, 2, DerivativeMetric::Visual).unwrap();
                let b = phi(&g, &w, 6, DerivativeMetric::Visual).unwrap();
                assert!(a.value < 0.0);
                assert!((a.value - b.value).abs() <= a.error + 1e-12);
                assert!(b.error <= a.error + 1e-12);
                // cocycle: φ(ω) + φ(σω) = log|(Φ_{ω₁}Φ_{ω₂})'|
                let two = birkhoff_phi(&g, &w, 2);
                let p1 = phi(&g, &w, 10, DerivativeMetric::Visual).unwrap();
                let rest = ShiftWord { letters: w.letters[1..].to_vec() };
                let p2 = phi(&g, &rest, 9, DerivativeMetric::Visual).unwrap();
                assert!((two - p1.value - p2.value).abs() <= p1.error + p2.error + 1e-10);
            }
        }
    }

    #[test]
    fn phi_of_translation_is_zero() {
        // a pure translation has unit Euclidean derivative
        let m = MobiusMap::translation(2.0).pow(3);
        assert_eq!(m.log_derivative(BoundaryPoint::Finite(0.3), DerivativeMetric::Euclidean).unwrap(), 0.0);
    }

    #[test]
    fn shift_metric() {
        let g = hyp();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let w = random_shift_word(&g, &mut rng, 6, 10);
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let mut v = w.clone();
            let t = v.letters[k].target();
            v.letters[k] = loop {
                let e = random_letter(&g, &mut rng, t, 10);
                if e != w.letters[k] {
                    break e;
                }
            };
            let d = shift_distance(&w, &v);
            assert!(d < prev);
            prev = d;
        }
    }
}
