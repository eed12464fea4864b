//! Bowen–Series coding of boundary points, block words and cusp windings,
//! displacements and the horocircle arc decomposition of orbit segments.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuchsian::{inverse, GroupPresentation, Symbol};
use crate::mobius::{hyperbolic_distance, BoundaryPoint, MobiusMap, PlanePoint, SegmentFrame};

/// Round-trip tolerance of [`code_point`] in the angle coordinate.
pub const ROUND_TRIP_TOL: f64 = 1e-8;
/// Upper bound on Bowen–Series iterations performed by one coding call.
pub const MAX_CODING_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodingError {
    #[error("{0} lies outside every open interval")]
    OutsideAllIntervals(BoundaryPoint),
    #[error("coding stalled after {0} blocks")]
    CodingStalled(usize),
    #[error("decoded word misses the point by {0}")]
    RoundTrip(f64),
    #[error("geodesic misses the horocircle of block {0}")]
    GeodesicMissesHorocircle(usize),
    #[error("point is not in the inducing set: its first block has length {0}")]
    NotInInducingSet(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub symbol: Symbol,
    pub exponent: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockWord {
    pub blocks: Vec<Block>,
}

impl BlockWord {
    /// Group a reduced symbol sequence into maximal blocks.
    pub fn from_symbols(g: &GroupPresentation, symbols: &[Symbol]) -> Self {
        let mut blocks: Vec<Block> = Vec::new();
        for &s in symbols {
            match blocks.last_mut() {
                Some(b) if b.symbol == s && g.is_parabolic(s) => b.exponent += 1,
                _ => blocks.push(Block { symbol: s, exponent: 1 }),
            }
        }
        BlockWord { blocks }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn prefix(&self, n: usize) -> BlockWord {
        BlockWord {
            blocks: self.blocks[..n.min(self.blocks.len())].to_vec(),
        }
    }

    pub fn symbols(&self) -> Vec<Symbol> {
        self.blocks
            .iter()
            .flat_map(|b| std::iter::repeat_n(b.symbol, b.exponent))
            .collect()
    }

    /// Cusp windings `a_k = |B_k| − 1`.
    pub fn windings(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.exponent - 1).collect()
    }

    pub fn map(&self, g: &GroupPresentation) -> MobiusMap {
        self.blocks
            .iter()
            .fold(MobiusMap::IDENTITY, |acc, b| acc.compose(&g.map(b.symbol).pow(b.exponent as i64)))
    }

    /// Reduced and with no two neighbouring blocks on the same parabolic
    /// symbol.
    pub fn is_valid(&self, g: &GroupPresentation) -> bool {
        self.blocks.iter().all(|b| b.exponent >= 1 && (b.exponent == 1 || g.is_parabolic(b.symbol)))
            && self.blocks.windows(2).all(|w| {
                w[1].symbol != inverse(w[0].symbol) && !(w[1].symbol == w[0].symbol && g.is_parabolic(w[0].symbol))
            })
    }

    pub fn display(&self, g: &GroupPresentation) -> String {
        self.blocks
            .iter()
            .map(|b| {
                if b.exponent == 1 {
                    g.label(b.symbol).to_string()
                } else {
                    format!("({})^{}", g.label(b.symbol), b.exponent)
                }
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// One step of the boundary map: if `x` lies in the interval of `s`, record
/// `s` and move to `s⁻¹(x)`.
pub fn bowen_series_step(g: &GroupPresentation, x: BoundaryPoint) -> Result<(BoundaryPoint, Symbol), CodingError> {
    let s = g.symbol_containing(x).ok_or(CodingError::OutsideAllIntervals(x))?;
    Ok((g.map(inverse(s)).apply_boundary(x), s))
}

/// The first `n` symbols of the coding of `x`, and the orbit point reached.
pub fn code_symbols(g: &GroupPresentation, x: BoundaryPoint, n: usize) -> Result<(Vec<Symbol>, BoundaryPoint), CodingError> {
    let mut out = Vec::with_capacity(n);
    let mut y = x;
    for _ in 0..n {
        let (next, s) = match bowen_series_step(g, y) {
            Ok(v) => v,
            Err(e) if out.is_empty() => return Err(e),
            Err(_) => return Err(CodingError::CodingStalled(out.len())),
        };
        out.push(s);
        y = next;
    }
    Ok((out, y))
}

/// Code `x` into its first `n_blocks` blocks.
pub fn code_point(g: &GroupPresentation, x: BoundaryPoint, n_blocks: usize) -> Result<BlockWord, CodingError> {
    if n_blocks == 0 {
        return Ok(BlockWord::default());
    }
    let mut symbols = Vec::new();
    let mut y = x;
    let mut blocks = 0usize;
    loop {
        if symbols.len() >= MAX_CODING_STEPS {
            return Err(CodingError::CodingStalled(blocks));
        }
        let (next, s) = match bowen_series_step(g, y) {
            Ok(v) => v,
            Err(e) if symbols.is_empty() => return Err(e),
            Err(_) => return Err(CodingError::CodingStalled(blocks.saturating_sub(1))),
        };
        let continues = symbols.last() == Some(&s) && g.is_parabolic(s);
        if !continues {
            if blocks == n_blocks {
                break;
            }
            blocks += 1;
        }
        symbols.push(s);
        y = next;
    }
    let word = BlockWord::from_symbols(g, &symbols);
    let back = g.word_map(&symbols).apply_boundary(y);
    let err = back.chordal_distance(x);
    if err > ROUND_TRIP_TOL {
        return Err(CodingError::RoundTrip(err));
    }
    Ok(word)
}

/// `d(B₁⋯B_n(i), i)`.
pub fn displacement(g: &GroupPresentation, w: &BlockWord) -> f64 {
    hyperbolic_distance(w.map(g).apply_plane(PlanePoint::I), PlanePoint::I)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArcDecomposition {
    /// Hyperbolic lengths `l(ξ_1), …, l(ξ_n)`.
    pub lengths: Vec<f64>,
    /// Length of the final arc up to `B₁⋯B_n(i)`.
    pub final_length: f64,
    /// Cusp windings of the blocks.
    pub windings: Vec<usize>,
    /// `d(B₁⋯B_n(i), i)`.
    pub distance: f64,
    /// The constant bounding the final arc.
    pub c0: f64,
}

impl ArcDecomposition {
    pub fn total(&self) -> f64 {
        self.lengths.iter().sum()
    }

    /// Whether `Σ l ≤ d ≤ Σ l + C₀` holds, with slack `tol`.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        let s = self.total();
        s <= self.distance + tol && self.distance <= s + self.c0 + tol
    }
}

/// Split the geodesic segment from `i` to `B₁⋯B_n(i)` at the exits of the
/// horocircles (blocks of length at least two) and at the crossings of the
/// sides (blocks of length one).
pub fn arc_decomposition(g: &GroupPresentation, w: &BlockWord) -> Result<ArcDecomposition, CodingError> {
    let target = w.map(g).apply_plane(PlanePoint::I);
    let distance = hyperbolic_distance(target, PlanePoint::I);
    let mut lengths = Vec::with_capacity(w.len());
    if w.is_empty() {
        return Ok(ArcDecomposition {
            lengths,
            final_length: distance,
            windings: Vec::new(),
            distance,
            c0: g.c0.value,
        });
    }
    // Work block by block in the frame where the current block starts at
    // the fundamental domain, so that all geometry stays of moderate size.
    let block_maps: Vec<MobiusMap> = w.blocks.iter().map(|b| g.map(b.symbol).pow(b.exponent as i64)).collect();
    let mut suffix = vec![MobiusMap::IDENTITY; w.len() + 1];
    for k in (0..w.len()).rev() {
        suffix[k] = block_maps[k].compose(&suffix[k + 1]);
    }
    let mut z = PlanePoint::I;
    for (k, b) in w.blocks.iter().enumerate() {
        let local_target = suffix[k].apply_plane(PlanePoint::I);
        let frame = SegmentFrame::new(z, local_target);
        let end = if b.exponent == 1 {
            frame
                .crossing(&g.interval(b.symbol).geodesic())
                .ok_or(CodingError::GeodesicMissesHorocircle(k))?
        } else {
            g.horocircle(b.symbol)
                .ok_or(CodingError::GeodesicMissesHorocircle(k))?
                .crossings(&frame)
                .ok_or(CodingError::GeodesicMissesHorocircle(k))?
                .1
        };
        if end.is_nan() {
            return Err(CodingError::GeodesicMissesHorocircle(k));
        }
        // the segment may stop on the last horocircle before leaving it
        let end = end.min(frame.length);
        lengths.push(end);
        let exit = frame.map.inverse().apply_plane(PlanePoint { x: 0.0, y: end.exp() });
        z = block_maps[k].inverse().apply_plane(exit);
    }
    Ok(ArcDecomposition {
        lengths,
        final_length: hyperbolic_distance(z, PlanePoint::I),
        windings: w.windings(),
        distance,
        c0: g.c0.value,
    })
}

pub fn log_plus(a: usize) -> f64 {
    if a <= 1 {
        0.0
    } else {
        (a as f64).ln()
    }
}

/// `2 Σ log⁺ a_k / d(B₁⋯B_n(i), i)` over the first `n` blocks of `x`.
pub fn mean_cusp_winding(g: &GroupPresentation, x: BoundaryPoint, n: usize) -> Result<f64, CodingError> {
    let w = code_point(g, x, n.max(1))?;
    Ok(winding_ratio(g, &w))
}

/// Mean winding ratio of a block word.
pub fn winding_ratio(g: &GroupPresentation, w: &BlockWord) -> f64 {
    let num: f64 = w.windings().into_iter().map(|a| 2.0 * log_plus(a)).sum();
    if num == 0.0 {
        return 0.0;
    }
    num / displacement(g, w)
}

/// Whether position `q` of a symbol sequence starts a block of length one.
pub fn starts_short_block(g: &GroupPresentation, symbols: &[Symbol], q: usize) -> bool {
    !g.is_parabolic(symbols[q]) || symbols.get(q + 1).is_some_and(|&t| t != symbols[q])
}

/// First return time of `x` to the set of points whose first block has
/// length one.
pub fn return_time(g: &GroupPresentation, x: BoundaryPoint) -> Result<usize, CodingError> {
    let first = code_point(g, x, 2)?;
    if first.blocks[0].exponent != 1 {
        return Err(CodingError::NotInInducingSet(first.blocks[0].exponent));
    }
    Ok(if first.blocks[1].exponent == 1 { 1 } else { first.blocks[1].exponent })
}

/// A random block word with `n_blocks` blocks whose parabolic exponents
/// are drawn from a heavy tailed law capped at `max_exponent`.
pub fn random_block_word<R: Rng>(g: &GroupPresentation, rng: &mut R, n_blocks: usize, max_exponent: usize) -> BlockWord {
    let n = g.symbol_count();
    let mut blocks: Vec<Block> = Vec::with_capacity(n_blocks);
    while blocks.len() < n_blocks {
        let s = rng.random_range(0..n);
        if let Some(prev) = blocks.last() {
            if s == inverse(prev.symbol) || (s == prev.symbol && g.is_parabolic(s)) {
                continue;
            }
        }
        let exponent = if g.is_parabolic(s) {
            let u: f64 = rng.random_range(0.0..1.0);
            // P(exponent ≥ k) ≈ 1/k
            ((1.0 / (1.0 - u)).floor() as usize).clamp(1, max_exponent.max(1))
        } else {
            1
        };
        blocks.push(Block { symbol: s, exponent });
    }
    BlockWord { blocks }
}

/// A boundary point whose coding starts with the given word: the image of
/// the midpoint of an interval compatible with the last symbol.
pub fn point_with_prefix(g: &GroupPresentation, w: &BlockWord) -> BoundaryPoint {
    let syms = w.symbols();
    let last = syms.last().copied();
    let tail = (0..g.symbol_count())
        .find(|&t| match last {
            Some(l) => t != inverse(l) && t != l,
            None => true,
        })
        .unwrap_or(0);
    g.word_map(&syms).apply_boundary(g.interval(tail).midpoint())
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn periodic_point_of_ab() {
        let g = gamma2();
        // AB fixes 1 + √2
        let x = BoundaryPoint::Finite(1.0 + 2f64.sqrt());
        let w = code_point(&g, x, 6).unwrap();
        assert_eq!(w.symbols(), vec![0, 2, 0, 2, 0, 2]);
        assert!(w.windings().iter().all(|&a| a == 0));
        assert!(mean_cusp_winding(&g, x, 6).unwrap() == 0.0);
    }

    #[test]
    fn periodic_point_of_aab() {
        let g = gamma2();
        let m = g.word_map(&[0, 0, 2]);
        let x = m.fixed_points(1e-12)[0];
        let w = code_point(&g, x, 6).unwrap();
        assert_eq!(w.windings(), vec![1, 0, 1, 0, 1, 0]);
    }

    #[test]
    fn endpoints_are_not_coded() {
        let g = gamma2();
        for x in [BoundaryPoint::Finite(1.0), BoundaryPoint::Finite(0.0), BoundaryPoint::Infinity] {
            assert_eq!(bowen_series_step(&g, x), Err(CodingError::OutsideAllIntervals(x)));
        }
        assert!(code_point(&g, BoundaryPoint::Finite(0.3), 0).unwrap().is_empty());
    }

    #[test]
    fn step_lands_outside_paired_interval() {
        let g = hyp();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let w = random_block_word(&g, &mut rng, 3, 20);
            let x = point_with_prefix(&g, &w);
            let (y, s) = bowen_series_step(&g, x).unwrap();
            assert!(!g.interval(inverse(s)).contains(y));
        }
    }

    #[test]
    fn translation_displacement() {
        let g = gamma2();
        for n in 1..6 {
            let w = BlockWord { blocks: vec![Block { symbol: 0, exponent: n }] };
            let expected = (1.0 + (2.0 * n as f64).powi(2) / 2.0).acosh();
            assert!((displacement(&g, &w) - expected).abs() < 1e-12);
        }
        assert_eq!(displacement(&g, &BlockWord::default()), 0.0);
    }

    #[test]
    fn return_times() {
        let g = hyp();
        // A H A ... starts with a short block followed by a hyperbolic one
        let w = BlockWord::from_symbols(&g, &[0, 2, 0, 2]);
        assert_eq!(return_time(&g, point_with_prefix(&g, &w)).unwrap(), 1);
        let w = BlockWord::from_symbols(&g, &[2, 0, 0, 0, 0, 0, 3, 1]);
        assert_eq!(return_time(&g, point_with_prefix(&g, &w)).unwrap(), 5);
        let w = BlockWord::from_symbols(&g, &[0, 0, 2, 0]);
        assert_eq!(return_time(&g, point_with_prefix(&g, &w)), Err(CodingError::NotInInducingSet(2)));
    }

    #[test]
    fn random_words_round_trip() {
        for g in [gamma2(), hyp()] {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            for _ in 0..100 {
                let w = random_block_word(&g, &mut rng, 8, 30);
                assert!(w.is_valid(&g));
                let x = point_with_prefix(&g, &w);
                let c = code_point(&g, x, 7).unwrap();
                assert_eq!(c, w.prefix(7));
            }
        }
    }

    #[test]
    fn excursion_bounds_on_random_prefixes() {
        for g in [gamma2(), hyp()] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for _ in 0..100 {
                let w = random_block_word(&g, &mut rng, 6, 50);
                let arcs = arc_decomposition(&g, &w).unwrap();
                assert!(arcs.sandwich_holds(1e-9), "{arcs:?}");
                assert!((arcs.total() + arcs.final_length - arcs.distance).abs() < 1e-8);
                for (l, &a) in arcs.lengths.iter().zip(&arcs.windings) {
                    assert!(*l >= 2.0 * log_plus(a) + g.c1 - 1e-9, "{l} {a}");
                    if g.cusps.iter().all(|c| c.generator.is_some()) {
                        assert!(*l <= 2.0 * ((a + 1) as f64).ln() + g.c2 + 1e-9, "{l} {a}");
                    }
                    if a >= 2 {
                        assert!(*l >= 2.0 * (a as f64).ln() + 3f64.ln() - 1e-9);
                    }
                }
            }
        }
    }
}
