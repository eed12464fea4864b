//! Command dispatch for the `cuspwind` binary.

pub mod figure;
pub mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use cuspwind::coding::{arc_decomposition, code_point, log_plus, point_with_prefix, random_block_word, winding_ratio};
use cuspwind::config::{load_config, preset_config, ConfigError, RunConfig};
use cuspwind::fuchsian::{poincare_probe, GroupPresentation};
use cuspwind::gdms::{delta_c, GdmsError, GdmsSystem, TransferOperator};
use cuspwind::induced::{conjugacy_check, irreducibility_witness, period, primitivity_witness};
use cuspwind::mobius::arc_length_above_height;
use cuspwind::spectrum::{spectrum, SpectrumError};
use cuspwind::{BoundaryPoint, CodingError, FreeEnergyCurve};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use figure::{emit_figure, FigureData};
pub use output::{parse_csv, Format, Table};

use output::{render_csv, render_json, write_file, Cell, Meta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_COMPUTATION: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Largest change of `α` across a β cell of the emitted spectrum.
const SPECTRUM_MAX_JUMP: f64 = 0.02;
const SPECTRUM_ROUNDS: usize = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Gdms(#[from] GdmsError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => EXIT_CONFIG,
            _ => EXIT_COMPUTATION,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Usage(_) => "usage",
            CliError::Gdms(_) => "pressure",
            CliError::Spectrum(_) => "spectrum",
            CliError::Coding(_) => "coding",
            CliError::Io(_) => "io",
        }
    }

    /// The machine-readable error object written to stderr.
    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() } })
    }
}

#[derive(Debug, Parser)]
#[command(name = "cuspwind", version, about = "Cusp-winding free energy and multifractal spectra of Fuchsian groups")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Group and engine configuration (TOML).
    #[arg(long, global = true, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in group: gamma2-type or one-cusp-one-hyperbolic.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Parabolic exponent cap.
    #[arg(long, global = true)]
    pub cap: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub beta_max: Option<f64>,
    #[arg(long, global = true)]
    pub beta_steps: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Group, coding and induced-system invariant suite.
    Validate {
        /// Random samples per check.
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Block coding of a boundary point.
    Code {
        #[arg(long, allow_hyphen_values = true)]
        point: f64,
        #[arg(long, default_value_t = 6)]
        blocks: usize,
    },
    /// Pressure over a (t, β) grid.
    Pressure {
        #[arg(long, default_value_t = 0.5, allow_hyphen_values = true)]
        t_min: f64,
        #[arg(long, default_value_t = 1.5, allow_hyphen_values = true)]
        t_max: f64,
        #[arg(long, default_value_t = 11)]
        t_steps: usize,
    },
    /// Free energy t(β).
    FreeEnergy,
    /// Spectrum f(α) with the two-panel figure.
    Spectrum,
    /// δ = t(0) and δ_c, with an orbit-counting cross-check.
    Delta {
        /// Orbit radius of the cross-check; 0 skips it.
        #[arg(long, default_value_t = 12.0)]
        radius: f64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Code { .. } => "code",
            Command::Pressure { .. } => "pressure",
            Command::FreeEnergy => "free-energy",
            Command::Spectrum => "spectrum",
            Command::Delta { .. } => "delta",
        }
    }

    fn default_format(&self) -> Format {
        match self {
            Command::Validate { .. } | Command::Code { .. } | Command::Delta { .. } => Format::Json,
            _ => Format::Csv,
        }
    }
}

/// A loaded run: configuration with flag overrides applied, and the group.
struct Run {
    config: RunConfig,
    group: GroupPresentation,
    name: String,
    out: PathBuf,
    format: Format,
    command: &'static str,
}

impl Run {
    fn new(common: &Common, command: &Command) -> Result<Self, CliError> {
        let mut config = match (&common.config, &common.preset) {
            (Some(path), _) => load_config(path)?,
            (None, Some(name)) => preset_config(name)?,
            (None, None) => preset_config("gamma2-type")?,
        };
        let e = &mut config.engine;
        if let Some(c) = common.cap {
            e.cap = c;
        }
        if let Some(b) = common.beta_min {
            e.beta_min = b;
        }
        if let Some(b) = common.beta_max {
            e.beta_max = b;
        }
        if let Some(n) = common.beta_steps {
            e.beta_steps = n;
        }
        if let Some(s) = common.seed {
            config.seed = s;
        }
        if let Some(o) = &common.out {
            config.output.dir = o.clone();
        }
        let group = config.build()?;
        let name = config.name.clone().unwrap_or_else(|| "custom".into());
        Ok(Run {
            out: config.output.dir.clone(),
            format: common.format.unwrap_or(command.default_format()),
            command: command.name(),
            config,
            group,
            name,
        })
    }

    fn meta(&self) -> Meta {
        let e = &self.config.engine;
        let mut p = BTreeMap::new();
        p.insert("cap".into(), json!(e.cap));
        p.insert("nodes".into(), json!(e.nodes));
        p.insert("tail".into(), json!(e.tail));
        p.insert("pressure_tol".into(), json!(e.pressure_tol));
        p.insert("root_tol".into(), json!(e.root_tol));
        p.insert("beta_min".into(), json!(e.beta_min));
        p.insert("beta_max".into(), json!(e.beta_max));
        p.insert("beta_steps".into(), json!(e.beta_steps));
        p.insert("seed".into(), json!(self.config.seed));
        Meta::new(self.command, &self.name, p)
    }

    fn betas(&self) -> Vec<f64> {
        let e = &self.config.engine;
        let n = e.beta_steps;
        let mut b: Vec<f64> = (0..n)
            .map(|k| e.beta_min + (e.beta_max - e.beta_min) * k as f64 / (n - 1) as f64)
            .collect();
        // snap the node nearest 0 so that t(0) is sampled when the grid allows it
        let h = (e.beta_max - e.beta_min) / (n - 1) as f64;
        if let Some(z) = b.iter_mut().find(|x| x.abs() < 1e-9 * h) {
            *z = 0.0;
        }
        b
    }

    fn system(&self) -> Result<GdmsSystem, CliError> {
        Ok(GdmsSystem::fuchsian(&self.group)?)
    }

    fn operator(&self, sys: &GdmsSystem) -> Result<TransferOperator, CliError> {
        let e = &self.config.engine;
        Ok(sys.operator(e.cap, e.nodes, e.mode())?)
    }

    fn free_energy(&self, sys: &GdmsSystem) -> Result<FreeEnergyCurve, CliError> {
        let op = self.operator(sys)?;
        Ok(op.free_energy_curve(&self.betas(), &self.config.engine.root_options())?)
    }

    /// Write the result file in the selected format and return its path.
    fn emit(&self, table: &Table, extra: Option<Value>) -> Result<PathBuf, CliError> {
        let meta = self.meta();
        let text = match self.format {
            Format::Csv => render_csv(&meta, table),
            Format::Json => render_json(&meta, table, extra),
        };
        write_file(&self.out, &format!("{}.{}", self.command, self.format.extension()), &text)
    }
}

fn validate(run: &Run, samples: usize) -> Result<(Table, Value), CliError> {
    let g = &run.group;
    let mut table = Table::new(&["check", "passed", "violations", "detail"]);
    let mut add = |name: &str, violations: usize, detail: String| {
        table.push(vec![
            name.into(),
            (violations == 0).into(),
            violations.into(),
            detail.into(),
        ]);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(run.config.seed);
    let mut round_trip = 0;
    for _ in 0..samples {
        let w = random_block_word(g, &mut rng, 8, 30);
        let x = point_with_prefix(g, &w);
        if code_point(g, x, 7).ok() != Some(w.prefix(7)) {
            round_trip += 1;
        }
    }
    add("coding round trip", round_trip, format!("{samples} random block words, 7 blocks"));

    let (mut sandwich, mut lower, mut upper, mut missed) = (0, 0, 0, 0);
    for _ in 0..samples {
        let w = random_block_word(g, &mut rng, 8, 50);
        let Ok(arcs) = arc_decomposition(g, &w) else {
            missed += 1;
            continue;
        };
        sandwich += usize::from(!arcs.sandwich_holds(1e-9));
        for (l, &a) in arcs.lengths.iter().zip(&arcs.windings) {
            lower += usize::from(*l < 2.0 * log_plus(a) + g.c1 - 1e-9);
            upper += usize::from(*l > 2.0 * ((a + 1) as f64).ln() + g.c2 + 1e-9);
        }
    }
    add("arc decomposition", missed, format!("{samples} prefixes"));
    add("distance sandwich", sandwich, format!("C0 = {}", g.c0.value));
    add("winding lower bound", lower, format!("C1 = {}", g.c1));
    add("winding upper bound", upper, format!("C2 = {}", g.c2));

    let outside = (3..=50usize)
        .filter(|&n| {
            let m = ((n - 1) * (n - 1)) as f64;
            let l = arc_length_above_height((n - 1) as f64 / 2.0, 0.5).unwrap_or(f64::NAN);
            !((3.0 * m).ln() <= l && l <= (4.0 * m).ln())
        })
        .count();
    add("excursion length bounds", outside, "n = 3..50".into());

    let mut mean = 0.0;
    let mut over = 0;
    for _ in 0..samples {
        let w = random_block_word(g, &mut rng, 10, 20);
        let r = winding_ratio(g, &w);
        mean += r / samples as f64;
        over += usize::from(r > 1.0 + 1e-12);
    }
    add("winding ratio at most one", over, format!("mean ratio {mean:.6}"));

    let c = conjugacy_check(g, &mut rng, samples, 10, 40);
    add(
        "conjugacy",
        c.mismatches.len() + c.failures.len(),
        format!("{} samples, 10 letters, {} redrawn", c.samples, c.rejected),
    );

    let irreducible = irreducibility_witness(g, 8);
    add(
        "finitely irreducible",
        usize::from(irreducible.is_none()),
        irreducible.map_or("no witness up to length 8".into(), |w| format!("connector length {}", w.length)),
    );

    let summary = json!({
        "symbols": g.symbol_count(),
        "parabolic": g.parabolic_count(),
        "hyperbolic": g.hyperbolic_count(),
        "cusps": g.cusps.len(),
        "accidental_cusps": g.cusps.iter().filter(|c| c.generator.is_none()).count(),
        "c0": g.c0.value,
        "c1": g.c1,
        "c2": g.c2,
        "period": period(g),
        "primitivity_length": primitivity_witness(g, 8).map(|w| w.length),
    });
    Ok((table, summary))
}

fn code(run: &Run, point: f64, blocks: usize) -> Result<(Table, Value), CliError> {
    let g = &run.group;
    let w = code_point(g, BoundaryPoint::Finite(point), blocks)?;
    let mut table = Table::new(&["block", "symbol", "exponent", "winding"]);
    for (k, (b, a)) in w.blocks.iter().zip(w.windings()).enumerate() {
        table.push(vec![(k + 1).into(), g.label(b.symbol).into(), b.exponent.into(), a.into()]);
    }
    let extra = json!({
        "point": point,
        "word": w.display(g),
        "windings": w.windings(),
        "mean_winding": winding_ratio(g, &w),
    });
    Ok((table, extra))
}

fn pressure(run: &Run, t_min: f64, t_max: f64, t_steps: usize) -> Result<Table, CliError> {
    if t_steps < 1 || !(t_min <= t_max) {
        return Err(CliError::Usage("need t_steps ≥ 1 and t_min ≤ t_max".into()));
    }
    let sys = run.system()?;
    let op = run.operator(&sys)?;
    let ts: Vec<f64> = (0..t_steps)
        .map(|k| if t_steps == 1 { t_min } else { t_min + (t_max - t_min) * k as f64 / (t_steps - 1) as f64 })
        .collect();
    let cells: Vec<(f64, f64)> = run.betas().iter().flat_map(|&b| ts.iter().map(move |&t| (t, b))).collect();
    let tol = run.config.engine.pressure_tol;
    let values = cells
        .par_iter()
        .map(|&(t, b)| op.pressure_with(t, b, None, tol).map(|p| p.value))
        .collect::<Result<Vec<f64>, _>>()?;
    let mut table = Table::new(&["t", "beta", "pressure"]);
    for (&(t, b), p) in cells.iter().zip(values) {
        table.push(vec![t.into(), b.into(), p.into()]);
    }
    Ok(table)
}

fn free_energy_table(curve: &FreeEnergyCurve) -> Table {
    let mut table = Table::new(&["beta", "t", "log_gap", "slope", "residual"]);
    for k in 0..curve.beta.len() {
        table.push(vec![
            curve.beta[k].into(),
            curve.t[k].into(),
            curve.log_gap[k].into(),
            curve.slope.as_ref().map(|s| s[k]).into(),
            curve.residual[k].into(),
        ]);
    }
    table
}

fn spectrum_run(run: &Run) -> Result<(Table, PathBuf), CliError> {
    let sys = run.system()?;
    let op = run.operator(&sys)?;
    // α moves fastest near β = 0, where a uniform grid leaves wide gaps
    let curve = op.refined_free_energy_curve(&run.betas(), SPECTRUM_MAX_JUMP, SPECTRUM_ROUNDS, &run.config.engine.root_options())?;
    let spec = spectrum(&curve)?;
    let dc = delta_c(&sys, run.config.engine.nodes, &run.config.engine.root_options())?;
    let mut table = Table::new(&["alpha", "f", "beta_source", "residual"]);
    for p in &spec.points {
        table.push(vec![p.alpha.into(), p.f.into(), p.beta.into(), p.residual.into()]);
    }
    let fig = FigureData {
        free_energy: curve.beta.iter().copied().zip(curve.t.iter().copied()).collect(),
        spectrum: spec.points.iter().map(|p| (p.alpha, p.f)).collect(),
        delta: spec.t0,
        delta_c: Some(dc),
    };
    let svg = write_file(&run.out, "spectrum.svg", &emit_figure(&fig))?;
    Ok((table, svg))
}

fn delta(run: &Run, radius: f64) -> Result<(Table, Value), CliError> {
    let sys = run.system()?;
    let opts = run.config.engine.root_options();
    let op = run.operator(&sys)?;
    let d = op.free_energy(0.0, &opts)?;
    let dc = delta_c(&sys, run.config.engine.nodes, &opts)?;
    let mut table = Table::new(&["quantity", "value"]);
    table.push(vec!["delta".into(), d.t.into()]);
    table.push(vec!["delta_c".into(), dc.into()]);
    let mut extra = json!({ "delta": d.t, "delta_c": dc, "residual": d.residual });
    if radius > 0.0 {
        let probe = poincare_probe(&run.group, radius, d.t, 0.05);
        table.push(vec!["orbit_exponent".into(), probe.exponent.into()]);
        extra["orbit_count"] = json!(probe);
    }
    Ok((table, extra))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let run = Run::new(&cli.common, &cli.command)?;
    let written = match &cli.command {
        Command::Validate { samples } => {
            let (table, summary) = validate(&run, *samples)?;
            let failed = table.rows.iter().filter(|r| r[1] == Cell::Bool(false)).count();
            println!("{} checks, {failed} with violations", table.rows.len());
            vec![run.emit(&table, Some(json!({ "group": summary })))?]
        }
        Command::Code { point, blocks } => {
            let (table, extra) = code(&run, *point, *blocks)?;
            println!("{}", extra["word"].as_str().unwrap_or_default());
            vec![run.emit(&table, Some(extra))?]
        }
        Command::Pressure { t_min, t_max, t_steps } => vec![run.emit(&pressure(&run, *t_min, *t_max, *t_steps)?, None)?],
        Command::FreeEnergy => {
            let curve = run.free_energy(&run.system()?)?;
            vec![run.emit(&free_energy_table(&curve), None)?]
        }
        Command::Spectrum => {
            let (table, svg) = spectrum_run(&run)?;
            vec![run.emit(&table, None)?, svg]
        }
        Command::Delta { radius } => {
            let (table, extra) = delta(&run, *radius)?;
            println!("delta = {}, delta_c = {}", extra["delta"], extra["delta_c"]);
            vec![run.emit(&table, Some(extra))?]
        }
    };
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Parse `argv` and run the command; returns the process exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return EXIT_OK;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
