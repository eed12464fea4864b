//! Acceptance suite. Prints one PASS/FAIL line per criterion. The process
//! exits non-zero on a failure only when `ACCEPTANCE_STRICT=1`.

use std::time::Instant;

use cuspwind::coding::{arc_decomposition, log_plus, point_with_prefix, random_block_word, winding_ratio, mean_cusp_winding};
use cuspwind::config::{preset, DEFAULT_SEED, PRESETS};
use cuspwind::fuchsian::{build_group, poincare_probe, GroupPresentation};
use cuspwind::gdms::{bounded_winding_expansion, delta_c, GdmsSystem, PressureMode, RootOptions, DEFAULT_ORDER};
use cuspwind::induced::{conjugacy_check, estimate_d_hat, geometric_partition_sum};
use cuspwind::mobius::arc_length_above_height;
use cuspwind::spectrum::{
    endpoint_slopes, high_end_ladder, legendre, low_end_ladder, refinements, spectrum, transform_agreement, CONCAVITY_TOL,
};
use cuspwind::FreeEnergyCurve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOP_CAP: usize = 400;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn group(name: &str) -> GroupPresentation {
    build_group(&preset(name).expect("preset")).expect("preset builds")
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn excursion_length() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut outside = Vec::new();
    for n in 3..=50usize {
        let r = (n - 1) as f64 / 2.0;
        let closed = arc_length_above_height(r, 0.5).expect("valid arc");
        let theta = (0.5 / r).asin();
        let quad = quadrature::integrate(|x: f64| 1.0 / x.sin(), theta, std::f64::consts::PI - theta, 1e-14).integral;
        worst = worst.max((closed - quad).abs() / quad);
        let m = ((n - 1) * (n - 1)) as f64;
        if !((3.0 * m).ln() <= closed && closed <= (4.0 * m).ln()) {
            outside.push(n);
        }
    }
    outcome(
        worst <= 1e-9 && outside.is_empty(),
        format!("max relative error {worst:.2e}, outside bounds {outside:?}"),
    )
}

fn distance_sandwich() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let g = group(name);
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        let (mut sandwich, mut lower, mut upper, mut failed) = (0, 0, 0, 0);
        let mut excess: f64 = 0.0;
        for _ in 0..200 {
            let w = random_block_word(&g, &mut rng, 8, 50);
            let Ok(arcs) = arc_decomposition(&g, &w) else {
                failed += 1;
                continue;
            };
            if !arcs.sandwich_holds(1e-9) {
                sandwich += 1;
            }
            for (l, &a) in arcs.lengths.iter().zip(&arcs.windings) {
                if *l < 2.0 * log_plus(a) + g.c1 - 1e-9 {
                    lower += 1;
                }
                let cap = 2.0 * ((a + 1) as f64).ln() + g.c2;
                if *l > cap + 1e-9 {
                    upper += 1;
                    excess = excess.max(l - cap);
                }
            }
        }
        pass &= sandwich + lower + upper + failed == 0;
        parts.push(format!(
            "{name}: sandwich {sandwich}, lower {lower}, upper {upper} (max excess {excess:.3}), undecomposed {failed}"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn conjugacy() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let g = group(name);
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        let r = conjugacy_check(&g, &mut rng, 100, 10, 40);
        pass &= r.passed();
        parts.push(format!(
            "{name}: {} mismatches, {} failures, {} redrawn",
            r.mismatches.len(),
            r.failures.len(),
            r.rejected
        ));
    }
    outcome(pass, parts.join("; "))
}

fn pressure_oracle() -> Outcome {
    const CAP: usize = 3;
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let g = group(name);
        let sys = GdmsSystem::fuchsian(&g).expect("system");
        let op = sys.operator(CAP, DEFAULT_ORDER, PressureMode::Truncated).expect("operator");
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        let d_hat = estimate_d_hat(&g, &mut rng, 200, 5, CAP).value;
        let mut worst: f64 = 0.0;
        let mut violations = 0;
        for _ in 0..20 {
            let beta: f64 = rng.random_range(-1.0..1.0);
            let t: f64 = 0.5 - beta + rng.random_range(0.1..1.0);
            let p = op.pressure(t, beta).expect("pressure").value;
            for n in 2..=5 {
                let z = geometric_partition_sum(&g, t, beta, n, CAP) / n as f64;
                let bound = (2.0 * t.abs() * g.c0.value + d_hat) / n as f64;
                let diff = (p - z).abs();
                worst = worst.max(diff / bound);
                if diff > bound {
                    violations += 1;
                }
            }
        }
        pass &= violations == 0;
        parts.push(format!(
            "{name}: D̂ = {d_hat:.3}, C₀ = {:.3}, {violations} violations, worst |P − Z_n/n| / bound = {worst:.3}",
            g.c0.value
        ));
    }
    outcome(pass, parts.join("; "))
}

fn finiteness_threshold() -> Outcome {
    let caps: Vec<usize> = (0..=14).map(|k| 25 << k).collect();
    let opts = RootOptions::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let sys = GdmsSystem::fuchsian(&group(name)).expect("system");
        for beta in [-1.0, 0.0, 1.0] {
            let ladder = |t: f64| -> Vec<f64> {
                caps.iter()
                    .map(|&c| {
                        sys.operator(c, 1, PressureMode::Truncated)
                            .and_then(|op| op.pressure_with(t, beta, None, opts.power_tol))
                            .map(|p| p.value)
                            .unwrap_or(f64::NAN)
                    })
                    .collect()
            };
            let near = ladder(0.5 - beta + 0.01);
            let far = ladder(0.5 - beta + 0.5);
            let monotone = near.windows(2).all(|w| w[1] >= w[0]);
            let top = *near.last().unwrap();
            let change = (far[far.len() - 1] - far[far.len() - 2]).abs();
            pass &= monotone && top > 5.0 && change < 1e-3;
            // the closed-form tail gives the value the ladder climbs to
            let limit = sys
                .operator(TOP_CAP, 1, PressureMode::Tail)
                .and_then(|op| op.pressure(0.51 - beta, beta))
                .map_or(f64::NAN, |p| p.value);
            parts.push(format!(
                "{name} β={beta}: near top {top:.3} (limit {limit:.3}) monotone {monotone}, far change {change:.1e}"
            ));
        }
    }
    outcome(pass, format!("caps 25..{}; {}", caps.last().unwrap(), parts.join("; ")))
}

struct Curves {
    name: &'static str,
    curve: FreeEnergyCurve,
    sys: GdmsSystem,
    delta_c: f64,
}

fn free_energy_asymptotics(curves: &mut Vec<Curves>) -> Outcome {
    let opts = RootOptions::default();
    let betas = grid(-20.0, 20.0, 81);
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let sys = GdmsSystem::fuchsian(&group(name)).expect("system");
        let op = sys.operator(TOP_CAP, DEFAULT_ORDER, PressureMode::Tail).expect("operator");
        let curve = op.free_energy_curve(&betas, &opts).expect("free energy");
        let dc = delta_c(&sys, DEFAULT_ORDER, &opts).expect("δ_c");
        let right = curve.t[80];
        let gap = curve.log_gap[0].map_or(curve.t[0] - 20.5, f64::exp);
        let ok = (right - dc).abs() <= 0.05 && gap > 0.0 && gap < 0.05;
        pass &= ok;
        parts.push(format!(
            "{name}: t(20) = {right:.6}, δ_c = {dc:.6}, t(−20) − 20.5 = {gap:.3e}"
        ));
        curves.push(Curves { name, curve, sys, delta_c: dc });
    }
    outcome(pass, parts.join("; "))
}

fn spectrum_shape(curves: &[Curves]) -> Outcome {
    let opts = RootOptions::default();
    let low_betas = [40.0, 80.0, 160.0, 320.0, 640.0, 1000.0, 2000.0];
    let high_betas: Vec<f64> = low_betas.iter().map(|b| -b).collect();
    let mut pass = true;
    let mut parts = Vec::new();
    for c in curves {
        let spec = match spectrum(&c.curve) {
            Ok(s) => s,
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", c.name));
                continue;
            }
        };
        let op = c.sys.operator(TOP_CAP, DEFAULT_ORDER, PressureMode::Tail).expect("operator");
        let exp = bounded_winding_expansion(&c.sys, DEFAULT_ORDER, 12, &opts).expect("expansion");
        let low = low_end_ladder(&exp, &low_betas);
        let high = high_end_ladder(&op, &high_betas, &opts).expect("ladder");
        let refined = refinements(&spec, &low, &high);
        let finest = refined.last().expect("refinements");
        let defect = spec.concavity_defect().max(finest.concavity_defect());
        let t0 = spec.t0.unwrap_or(f64::NAN);
        let (_, fmax) = finest.max();
        let slopes = endpoint_slopes(&refined);
        let (lo_q, hi_q, diverge) = match &slopes {
            Ok(s) => (s.finest().0, s.finest().1, s.low_diverges && s.high_diverges),
            Err(_) => (f64::NAN, f64::NAN, false),
        };
        let mut ok = defect <= CONCAVITY_TOL
            && (fmax - t0).abs() <= 1e-3
            && (finest.high.value - 0.5).abs() <= 0.05
            && (finest.low.value - c.delta_c).abs() <= 0.05
            && diverge;
        let mut line = format!(
            "{}: defect {defect:.1e}, max f − t(0) = {:.1e}, f(1) ≈ {:.6}, f(0) ≈ {:.6} vs δ_c {:.6}, end slopes {lo_q:.1} / {hi_q:.1} diverging {diverge}",
            c.name,
            fmax - t0,
            finest.high.value,
            finest.low.value,
            c.delta_c
        );
        if c.name == "gamma2-type" {
            let probe = poincare_probe(&c.sys_group(), 14.0, t0, 0.05);
            let agree = (probe.exponent - t0).abs() <= 0.05 && probe.brackets();
            ok &= (t0 - 1.0).abs() <= 0.05 && agree;
            line.push_str(&format!(
                ", t(0) = {t0:.6}, orbit-count exponent {:.4} over {} points, shell rates {:.3} / {:.3}",
                probe.exponent, probe.orbit_points, probe.rate_below, probe.rate_above
            ));
        }
        pass &= ok;
        parts.push(line);
    }
    outcome(pass, parts.join("; "))
}

impl Curves {
    fn sys_group(&self) -> GroupPresentation {
        group(self.name)
    }
}

fn legendre_machinery(curves: &[Curves]) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();

    let c = grid(-5.0, 5.0, 201);
    let h = c[1] - c[0];
    let g: Vec<f64> = c.iter().map(|x| 0.5 * x * x).collect();
    let p = grid(-4.0, 4.0, 81);
    let quad = legendre(&c, &g, &p, 1e-12).expect("convex");
    let err = p.iter().zip(&quad.value).map(|(q, v)| (v - 0.5 * q * q).abs()).fold(0.0, f64::max);
    pass &= err <= h * h;
    parts.push(format!("quadratic {err:.1e} (h² = {:.1e})", h * h));

    let (a, b) = (0.3, -1.2);
    let g: Vec<f64> = c.iter().map(|x| a + b * x).collect();
    let aff = legendre(&c, &g, &[b, b + 0.5], 1e-12).expect("convex");
    let aff_ok = (aff.value[0] + a).abs() <= h * h && !aff.unbounded[0] && aff.unbounded[1];
    pass &= aff_ok;
    parts.push(format!("affine {aff_ok}"));

    let c = grid(-3.0, 3.0, 301);
    let h = c[1] - c[0];
    let f = |x: f64| (1.0 + x * x).sqrt() + 0.2 * x;
    let g: Vec<f64> = c.iter().map(|&x| f(x)).collect();
    let p = grid(-0.75, 1.15, 401);
    let once = legendre(&c, &g, &p, 1e-12).expect("convex");
    let inner = grid(-1.5, 1.5, 31);
    let twice = legendre(&p, &once.value, &inner, 1e-10).expect("convex");
    let err = inner.iter().zip(&twice.value).map(|(&x, v)| (v - f(x)).abs()).fold(0.0, f64::max);
    pass &= err <= h * h;
    parts.push(format!("involution {err:.1e} (h² = {:.1e})", h * h));

    for c in curves {
        match spectrum(&c.curve).and_then(|s| transform_agreement(&c.curve, &s)) {
            Ok((diff, tol)) => {
                pass &= diff <= tol;
                parts.push(format!("{} parametric vs direct {diff:.1e} (tol {tol:.1e})", c.name));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{}: {e}", c.name));
            }
        }
    }
    outcome(pass, parts.join("; "))
}

fn fact_invariants() -> Outcome {
    const K: usize = 6;
    const SAMPLES: usize = 500;
    let mut pass = true;
    let mut parts = Vec::new();
    for name in PRESETS {
        let g = group(name);
        let mut rng = ChaCha8Rng::seed_from_u64(DEFAULT_SEED);
        let fact4 = if g.c1 > 0.0 { 1.0 / (1.0 + g.c1 / (2.0 * (K as f64).ln())) } else { 1.0 };
        let (mut bounded, mut arcs_bound, mut failed) = (0, 0, 0);
        let mut worst: f64 = 0.0;
        for _ in 0..SAMPLES {
            let w = random_block_word(&g, &mut rng, 10, K);
            let x = point_with_prefix(&g, &w);
            // the last block of x may run on past the drawn exponent
            let n = w.len() - 1;
            let (Ok(ratio), Ok(arcs)) = (mean_cusp_winding(&g, x, n), arc_decomposition(&g, &w.prefix(n))) else {
                failed += 1;
                continue;
            };
            if ratio != winding_ratio(&g, &w.prefix(n)) {
                failed += 1;
                continue;
            }
            let num: f64 = arcs.windings.iter().map(|&a| 2.0 * log_plus(a)).sum();
            let expression = if num == 0.0 { 0.0 } else { num / arcs.total() };
            worst = worst.max(ratio);
            if ratio > fact4 + 1e-12 {
                bounded += 1;
            }
            if ratio > expression + 1e-12 || expression > 1.0 + 1e-12 {
                arcs_bound += 1;
            }
        }
        pass &= bounded + arcs_bound + failed == 0;
        parts.push(format!(
            "{name}: digits ≤ {K}, bound {fact4:.4}, max ratio {worst:.4}, {bounded} above bound, {arcs_bound} above arc expression, {failed} uncoded"
        ));
    }
    outcome(pass, format!("{SAMPLES} samples per group; {}", parts.join("; ")))
}

fn report(n: usize, title: &str, start: Instant, o: Outcome, failures: &mut usize) {
    if !o.pass {
        *failures += 1;
    }
    println!(
        "criterion {n} {} {title}: {} [{:.1} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    );
}

fn main() {
    let mut failures = 0;
    let s = Instant::now();
    report(1, "excursion length", s, excursion_length(), &mut failures);
    let s = Instant::now();
    report(2, "distance sandwich and winding bounds", s, distance_sandwich(), &mut failures);
    let s = Instant::now();
    report(3, "conjugacy", s, conjugacy(), &mut failures);
    let s = Instant::now();
    report(4, "pressure oracle", s, pressure_oracle(), &mut failures);
    let s = Instant::now();
    report(5, "finiteness threshold", s, finiteness_threshold(), &mut failures);
    let mut curves = Vec::new();
    let s = Instant::now();
    report(6, "free-energy asymptotics", s, free_energy_asymptotics(&mut curves), &mut failures);
    let s = Instant::now();
    report(7, "spectrum shape", s, spectrum_shape(&curves), &mut failures);
    let s = Instant::now();
    report(8, "Legendre machinery", s, legendre_machinery(&curves), &mut failures);
    let s = Instant::now();
    report(9, "fact invariants", s, fact_invariants(), &mut failures);
    println!("{} of 9 criteria passed", 9 - failures);
    if failures > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
