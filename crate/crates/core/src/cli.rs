//! Command-line front end.
//!
//! Settings are layered: built-in defaults, then a named preset, then a JSON
//! config file, then command-line flags. The cache directory is taken from
//! `--cache-dir`, else `XYCONV_CACHE_DIR`, else the config file.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::{DiskCache, CACHE_DIR_ENV};
use crate::convertibility::{phase_diagram, sign_map, BoundaryEstimate, SignMap, SweepSpec, DEFAULT_DELTA};
use crate::eigensolve::{SectorPolicy, SolverConfig};
use crate::entanglement::{log_grid, schmidt_spectrum, with_sentinels, Bipartition, RenyiCurve};
use crate::error::{Error, Result};
use crate::fermion::{self, check_domain};
use crate::io::{self, Metadata, Outputs};
use crate::model::{aqc_schedule_to_g, Boundary, ChainParams};
use crate::scaling::scaling_study;
use crate::source::{GroundStateSource, Solver};

/// Exit code for unreadable or invalid configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for solver, fit or oracle failures.
pub const EXIT_NUMERICAL: i32 = 3;
/// Exit code for failures writing results.
pub const EXIT_IO: i32 = 1;

/// Tolerance of the oracle-check comparison.
pub const ORACLE_TOLERANCE: f64 = 1e-8;

const SECTOR_NOTE: &str = "auto: lower parity sector; exact ties (g = 0, separable circle) resolved to even parity";

#[derive(Debug, Parser)]
#[command(
    name = "xyconv",
    version,
    about = "Entanglement spectra and differential local convertibility of Ising and XY chains",
    after_help = "Settings precedence: defaults < --preset < --config file < flags.\n\
Cache directory: --cache-dir, else $XYCONV_CACHE_DIR, else the config file.\n\
Periodic chains include the bond (N, 1); for N = 2 this doubles the single bond.\n\
Exit codes: 0 success, 1 output error, 2 configuration error, 3 numerical failure."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Largest entanglement eigenvalues over a g sweep.
    Spectrum(Flags),
    /// Sign map of dS_α/dg and per-column convertibility verdicts.
    Signmap(Flags),
    /// Trajectory maxima of λ_k over chain lengths and their exponential fit.
    Scaling(Flags),
    /// Sign maps over a γ list with mixed-region boundary estimates.
    Phasediagram(Flags),
    /// Exact diagonalization against the free-fermion block spectra.
    OracleCheck(Flags),
    /// Maps adiabatic schedule values s to fields g and looks up verdicts.
    AqcMap(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum(_) => "spectrum",
            Command::Signmap(_) => "signmap",
            Command::Scaling(_) => "scaling",
            Command::Phasediagram(_) => "phasediagram",
            Command::OracleCheck(_) => "oracle-check",
            Command::AqcMap(_) => "aqc-map",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::Spectrum(f)
            | Command::Signmap(f)
            | Command::Scaling(f)
            | Command::Phasediagram(f)
            | Command::OracleCheck(f)
            | Command::AqcMap(f) => f,
        }
    }
}

/// Grid syntax for flags: `a,b,c`, `start:stop:step`, `lin:start:stop:count`
/// or `log:start:stop:count`.
#[derive(Debug, Args, Default, Clone)]
pub struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named reproduction preset (ising-n12-l6, xy-gamma-sqrt3over2-n14-l7).
    #[arg(long)]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub n_sites: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_parser = parse_boundary)]
    pub boundary: Option<Boundary>,
    /// Contiguous block sizes for Alice, comma separated.
    #[arg(long = "l", value_delimiter = ',')]
    pub l: Option<Vec<usize>>,
    /// Explicit bitmask of Alice's sites (bit i = site i); overrides --l.
    #[arg(long)]
    pub mask: Option<u64>,
    #[arg(long, value_parser = parse_grid)]
    pub g_grid: Option<Grid>,
    #[arg(long, value_parser = parse_grid)]
    pub alpha_grid: Option<Grid>,
    /// Leave out the α → 0 and α → ∞ sentinels (1e-6, 1e6).
    #[arg(long)]
    pub no_sentinels: bool,
    /// Finite-difference step in g.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Number of eigenvalues (spectrum) or eigenvalue index (scaling).
    #[arg(long)]
    pub k: Option<usize>,
    /// Chain lengths for scaling, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long, value_parser = parse_grid)]
    pub gammas: Option<Grid>,
    /// Schedule values for aqc-map, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub s: Option<Vec<f64>>,
    /// Verdict table for aqc-map lookups.
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub dense_max_sites: Option<usize>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub degeneracy_tol: Option<f64>,
    /// Also write full spectra and Rényi curves (spectrum).
    #[arg(long)]
    pub full_spectrum: bool,
    /// Chain length of a timed oracle-only run (oracle-check).
    #[arg(long)]
    pub smoke_sites: Option<usize>,
}

fn parse_boundary(s: &str) -> std::result::Result<Boundary, String> {
    match s {
        "periodic" => Ok(Boundary::Periodic),
        "open" => Ok(Boundary::Open),
        _ => Err(format!("unknown boundary '{s}' (periodic or open)")),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGrid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountGrid {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub log: bool,
}

/// A one-dimensional grid: explicit values, a stepped range (endpoints
/// included) or a fixed point count, linear or logarithmic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Step(StepGrid),
    Count(CountGrid),
}

const MAX_GRID_POINTS: usize = 1_000_000;

/// Rounds away accumulated binary noise so `0.05 * 7` prints as `0.35`.
fn tidy(x: f64) -> f64 {
    let t = (x * 1e12).round() / 1e12;
    if (t - x).abs() <= 1e-9 * x.abs().max(1e-3) {
        t
    } else {
        x
    }
}

impl Grid {
    pub fn points(&self) -> Result<Vec<f64>> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            Grid::Values(v) => Ok(v.clone()),
            Grid::Step(StepGrid { start, stop, step }) => {
                if !(step.is_finite() && *step > 0.0 && start.is_finite() && stop.is_finite() && stop >= start) {
                    return bad(format!("invalid stepped grid {start}:{stop}:{step}"));
                }
                let n = ((stop - start) / step + 1e-9).floor();
                if n >= MAX_GRID_POINTS as f64 {
                    return bad(format!("stepped grid has more than {MAX_GRID_POINTS} points"));
                }
                Ok((0..=n as usize).map(|i| tidy(start + i as f64 * step)).collect())
            }
            Grid::Count(CountGrid { start, stop, count, log }) => {
                if *count == 0 || *count > MAX_GRID_POINTS || !(start.is_finite() && stop.is_finite() && stop >= start) {
                    return bad(format!("invalid counted grid {start}:{stop}:{count}"));
                }
                if *log {
                    if *start <= 0.0 {
                        return bad("logarithmic grid needs a positive start".into());
                    }
                    Ok(log_grid(*start, *stop, *count))
                } else if *count == 1 {
                    Ok(vec![*start])
                } else {
                    let h = (stop - start) / (*count - 1) as f64;
                    Ok((0..*count).map(|i| if i + 1 == *count { *stop } else { tidy(start + i as f64 * h) }).collect())
                }
            }
        }
    }
}

pub fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad number '{x}' in grid '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [kind @ ("lin" | "log"), a, b, n] => Ok(Grid::Count(CountGrid {
            start: num(a)?,
            stop: num(b)?,
            count: n.trim().parse().map_err(|_| format!("bad count '{n}' in grid '{s}'"))?,
            log: *kind == "log",
        })),
        [a, b, h] => Ok(Grid::Step(StepGrid { start: num(a)?, stop: num(b)?, step: num(h)? })),
        [list] if !list.trim().is_empty() => list.split(',').map(num).collect::<std::result::Result<Vec<_>, _>>().map(Grid::Values),
        _ => Err(format!("unrecognized grid '{s}'")),
    }
}

/// A partial configuration: every field optional, unknown fields rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub n_sites: Option<usize>,
    pub gamma: Option<f64>,
    pub boundary: Option<Boundary>,
    pub l: Option<Vec<usize>>,
    pub mask: Option<u64>,
    pub g_grid: Option<Grid>,
    pub alpha_grid: Option<Grid>,
    pub sentinels: Option<bool>,
    pub delta: Option<f64>,
    pub k: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub gammas: Option<Grid>,
    pub s: Option<Vec<f64>>,
    pub verdicts: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub dense_max_sites: Option<usize>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub degeneracy_tol: Option<f64>,
    pub full_spectrum: Option<bool>,
    pub smoke_sites: Option<usize>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($field:ident),* $(,)?) => {
        ConfigLayer { $($field: $top.$field.or($base.$field)),* }
    };
}

impl ConfigLayer {
    /// Fields set in `top` win.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        overlay!(self, top; n_sites, gamma, boundary, l, mask, g_grid, alpha_grid, sentinels, delta, k, sizes,
            gammas, s, verdicts, output, workers, seed, cache_dir, dense_max_sites, max_iter, tol,
            degeneracy_tol, full_spectrum, smoke_sites)
    }

    pub fn from_json(text: &str) -> Result<ConfigLayer> {
        serde_json::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))
    }

    fn from_flags(f: &Flags) -> ConfigLayer {
        ConfigLayer {
            n_sites: f.n_sites,
            gamma: f.gamma,
            boundary: f.boundary,
            l: f.l.clone(),
            mask: f.mask,
            g_grid: f.g_grid.clone(),
            alpha_grid: f.alpha_grid.clone(),
            sentinels: f.no_sentinels.then_some(false),
            delta: f.delta,
            k: f.k,
            sizes: f.sizes.clone(),
            gammas: f.gammas.clone(),
            s: f.s.clone(),
            verdicts: f.verdicts.clone(),
            output: f.output.clone(),
            workers: f.workers,
            seed: f.seed,
            cache_dir: f.cache_dir.clone(),
            dense_max_sites: f.dense_max_sites,
            max_iter: f.max_iter,
            tol: f.tol,
            degeneracy_tol: f.degeneracy_tol,
            full_spectrum: f.full_spectrum.then_some(true),
            smoke_sites: f.smoke_sites,
        }
    }
}

const SIGNMAP_G_GRID: StepGrid = StepGrid { start: 0.05, stop: 2.0, step: 0.05 };

/// Reproduction presets by name.
pub fn preset(name: &str) -> Result<ConfigLayer> {
    let base = ConfigLayer { boundary: Some(Boundary::Periodic), g_grid: Some(Grid::Step(SIGNMAP_G_GRID)), ..Default::default() };
    match name {
        "ising-n12-l6" => Ok(ConfigLayer { n_sites: Some(12), gamma: Some(1.0), l: Some(vec![6]), ..base }),
        "xy-gamma-sqrt3over2-n14-l7" => Ok(ConfigLayer { n_sites: Some(14), gamma: Some(0.75f64.sqrt()), l: Some(vec![7]), ..base }),
        _ => Err(Error::InvalidParameter(format!("unknown preset '{name}'"))),
    }
}

/// Fully resolved settings; echoed into every output and accepted back as a
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub n_sites: usize,
    pub gamma: f64,
    pub boundary: Boundary,
    pub l: Vec<usize>,
    pub mask: Option<u64>,
    pub g_grid: Grid,
    pub alpha_grid: Grid,
    pub sentinels: bool,
    pub delta: f64,
    pub k: usize,
    pub sizes: Vec<usize>,
    pub gammas: Grid,
    pub s: Vec<f64>,
    pub verdicts: Option<PathBuf>,
    #[serde(skip)]
    pub output: PathBuf,
    pub workers: Option<usize>,
    pub seed: u64,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
    pub dense_max_sites: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub degeneracy_tol: f64,
    pub full_spectrum: bool,
    pub smoke_sites: Option<usize>,
}

impl RunConfig {
    /// Fills the command's defaults into `layer` and validates the result.
    pub fn resolve(command: &str, layer: ConfigLayer) -> Result<RunConfig> {
        let solver = SolverConfig::default();
        let n_sites = layer.n_sites.unwrap_or(12);
        let sweep = |start: f64| Grid::Step(StepGrid { start, stop: 2.0, step: 0.02 });
        let default_g = match command {
            "spectrum" | "scaling" => sweep(0.0),
            "oracle-check" => Grid::Values(vec![0.25, 0.7, 1.3, 1.6, 2.0]),
            _ => Grid::Step(SIGNMAP_G_GRID),
        };
        let default_gammas = match command {
            "oracle-check" => Grid::Values(vec![0.3, 0.55, 0.8, 1.0, 1.3]),
            _ => Grid::Values(vec![0.5, 0.75f64.sqrt(), 1.0]),
        };
        let default_l = match command {
            "oracle-check" => vec![n_sites / 4, n_sites / 2],
            _ => vec![n_sites / 2],
        };
        let cfg = RunConfig {
            n_sites,
            gamma: layer.gamma.unwrap_or(1.0),
            boundary: layer.boundary.unwrap_or_default(),
            l: layer.l.unwrap_or(default_l),
            mask: layer.mask,
            g_grid: layer.g_grid.unwrap_or(default_g),
            alpha_grid: layer.alpha_grid.unwrap_or(Grid::Count(CountGrid { start: 0.01, stop: 100.0, count: 60, log: true })),
            sentinels: layer.sentinels.unwrap_or(true),
            delta: layer.delta.unwrap_or(DEFAULT_DELTA),
            k: layer.k.unwrap_or(if command == "scaling" { 3 } else { 4 }),
            sizes: layer.sizes.unwrap_or_else(|| vec![8, 10, 12, 14]),
            gammas: layer.gammas.unwrap_or(default_gammas),
            s: layer.s.unwrap_or_else(|| vec![0.5, 2.0 / 3.0, 0.75, 0.9]),
            verdicts: layer.verdicts,
            output: layer.output.unwrap_or_else(|| PathBuf::from(".")),
            workers: layer.workers,
            seed: layer.seed.unwrap_or(solver.seed),
            cache_dir: layer.cache_dir,
            dense_max_sites: layer.dense_max_sites.unwrap_or(solver.dense_max_sites),
            max_iter: layer.max_iter.unwrap_or(solver.max_iter),
            tol: layer.tol.unwrap_or(solver.tol),
            degeneracy_tol: layer.degeneracy_tol.unwrap_or(solver.degeneracy_tol),
            full_spectrum: layer.full_spectrum.unwrap_or(false),
            smoke_sites: layer.smoke_sites,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        ChainParams::new(self.n_sites, self.gamma, 0.0, self.boundary)?;
        if self.l.is_empty() && self.mask.is_none() {
            return bad("at least one block size is required".into());
        }
        if let Some(&l) = self.l.iter().find(|&&l| l == 0 || l >= self.n_sites) {
            return bad(format!("block size L = {l} must satisfy 0 < L < N = {}", self.n_sites));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be positive, got {}", self.delta));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("workers must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.degeneracy_tol > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        for (name, grid, positive) in [("g", &self.g_grid, false), ("alpha", &self.alpha_grid, true), ("gammas", &self.gammas, false)] {
            let pts = grid.points()?;
            if pts.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
            if pts.iter().any(|x| !x.is_finite() || *x < 0.0 || (positive && *x == 0.0)) {
                return bad(format!("{name} grid has invalid entries"));
            }
            if pts.windows(2).any(|w| w[1] <= w[0]) {
                return bad(format!("{name} grid must be strictly ascending"));
            }
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            dense_max_sites: self.dense_max_sites,
            max_iter: self.max_iter,
            tol: self.tol,
            degeneracy_tol: self.degeneracy_tol,
            seed: self.seed,
        }
    }

    pub fn alphas(&self) -> Result<Vec<f64>> {
        let pts = self.alpha_grid.points()?;
        Ok(if self.sentinels { with_sentinels(&pts) } else { pts })
    }

    /// Bipartitions with their file-name suffixes.
    fn partitions(&self) -> Result<Vec<(String, Bipartition)>> {
        if let Some(mask) = self.mask {
            return Ok(vec![(String::new(), Bipartition::from_mask(self.n_sites, mask)?)]);
        }
        let many = self.l.len() > 1;
        self.l
            .iter()
            .map(|&l| Ok((if many { format!("_L{l}") } else { String::new() }, Bipartition::contiguous(self.n_sites, l)?)))
            .collect()
    }

    fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    fn metadata(&self, command: &str) -> Metadata {
        let solver = serde_json::to_string(&self.solver_config()).expect("solver config serializes");
        Metadata::new(command, self.echo()).note("solver", solver)
    }
}

/// Outcome of a command: files to write and whether the numerics partly
/// failed (exit code 3 after writing).
#[derive(Debug)]
pub struct Report {
    pub outputs: Outputs,
    pub numerical_failure: Option<String>,
}

fn map_metadata(cfg: &RunConfig, command: &str, map: &SignMap) -> Metadata {
    let mut meta = cfg
        .metadata(command)
        .note("sector", SECTOR_NOTE)
        .note("bipartition_mask", map.part.a_mask())
        .note("delta", map.delta)
        .note("gamma", map.gamma);
    let boundary = serde_json::to_string(&BoundaryEstimate::from_map(map)).expect("boundary serializes");
    meta = meta.note("boundary", boundary);
    for col in map.failed_columns() {
        meta = meta.note("failed_column", format!("g={} error={}", col.g, col.error.as_deref().unwrap_or("")));
    }
    meta
}

fn failure_summary<'a>(maps: impl Iterator<Item = &'a SignMap>) -> Option<String> {
    let failed: Vec<String> = maps.flat_map(|m| m.failed_columns().map(move |c| format!("gamma={} g={}", m.gamma, c.g))).collect();
    (!failed.is_empty()).then(|| format!("{} sign-map column(s) failed: {}", failed.len(), failed.join("; ")))
}

pub fn cmd_spectrum(cfg: &RunConfig, src: &dyn GroundStateSource) -> Result<Report> {
    let g_grid = cfg.g_grid.points()?;
    let alphas = cfg.alphas()?;
    let base = ChainParams::new(cfg.n_sites, cfg.gamma, 0.0, cfg.boundary)?;
    let mut outputs = Outputs::new();
    for (suffix, part) in cfg.partitions()? {
        if cfg.k > 1 << part.a_size() {
            return Err(Error::InvalidParameter(format!("k = {} exceeds the block dimension 2^{}", cfg.k, part.a_size())));
        }
        let spectra = g_grid
            .par_iter()
            .map(|&g| {
                let gs = src.ground_state(&base.with_g(g))?;
                schmidt_spectrum(&gs.vector, &part)
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = cfg.metadata("spectrum").note("sector", SECTOR_NOTE).note("bipartition_mask", part.a_mask());
        let mut columns = vec!["g".to_string()];
        columns.extend((1..=cfg.k).map(|i| format!("lambda_{i}")));
        let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = g_grid
            .iter()
            .zip(&spectra)
            .map(|(g, s)| std::iter::once(g.to_string()).chain((1..=cfg.k).map(|i| s.lambda(i).to_string())).collect())
            .collect();
        outputs.add(cfg.output.join(format!("spectrum{suffix}.csv")), io::csv_document(&meta, &columns, &rows));
        if cfg.full_spectrum {
            let mut full = Vec::new();
            let mut curves = Vec::new();
            for (g, s) in g_grid.iter().zip(&spectra) {
                full.extend(io::spectrum_rows(s).into_iter().map(|r| [vec![g.to_string()], r].concat()));
                let curve = RenyiCurve::from_spectrum(s, &alphas)?;
                curves.extend(io::curve_rows(&curve).into_iter().map(|r| [vec![g.to_string()], r].concat()));
            }
            outputs.add(cfg.output.join(format!("spectrum_full{suffix}.csv")), io::csv_document(&meta, &["g", "index", "lambda"], &full));
            outputs.add(cfg.output.join(format!("renyi{suffix}.csv")), io::csv_document(&meta, &["g", "alpha", "S_alpha"], &curves));
        }
    }
    Ok(Report { outputs, numerical_failure: None })
}

pub fn cmd_signmap(cfg: &RunConfig, src: &dyn GroundStateSource) -> Result<Report> {
    let g_grid = cfg.g_grid.points()?;
    let alphas = cfg.alphas()?;
    let spec = SweepSpec {
        gamma: cfg.gamma,
        n_sites: cfg.n_sites,
        boundary: cfg.boundary,
        g_grid: &g_grid,
        alpha_grid: &alphas,
        delta: cfg.delta,
    };
    let mut outputs = Outputs::new();
    let mut maps = Vec::new();
    for (suffix, part) in cfg.partitions()? {
        let map = sign_map(src, &spec, &part)?;
        let meta = map_metadata(cfg, "signmap", &map);
        outputs.add(cfg.output.join(format!("signs{suffix}.csv")), io::csv_document(&meta, &io::SIGN_COLUMNS, &io::sign_rows(&map)));
        outputs
            .add(cfg.output.join(format!("verdicts{suffix}.csv")), io::csv_document(&meta, &io::VERDICT_COLUMNS, &io::verdict_rows(&map)));
        maps.push(map);
    }
    Ok(Report { outputs, numerical_failure: failure_summary(maps.iter()) })
}

pub fn cmd_phasediagram(cfg: &RunConfig, src: &dyn GroundStateSource) -> Result<Report> {
    let g_grid = cfg.g_grid.points()?;
    let alphas = cfg.alphas()?;
    let gammas = cfg.gammas.points()?;
    let spec = SweepSpec {
        gamma: gammas[0],
        n_sites: cfg.n_sites,
        boundary: cfg.boundary,
        g_grid: &g_grid,
        alpha_grid: &alphas,
        delta: cfg.delta,
    };
    let mut outputs = Outputs::new();
    let mut all = Vec::new();
    for (suffix, part) in cfg.partitions()? {
        let diagram = phase_diagram(src, &gammas, &spec, &part)?;
        let mut meta = cfg.metadata("phasediagram").note("sector", SECTOR_NOTE).note("bipartition_mask", part.a_mask());
        for map in &diagram.maps {
            for col in map.failed_columns() {
                meta = meta.note("failed_column", format!("gamma={} g={} error={}", map.gamma, col.g, col.error.as_deref().unwrap_or("")));
            }
        }
        let signs: Vec<Vec<String>> = diagram.maps.iter().flat_map(io::sign_rows).collect();
        let verdicts: Vec<Vec<String>> = diagram.maps.iter().flat_map(io::verdict_rows).collect();
        outputs.add(cfg.output.join(format!("signs{suffix}.csv")), io::csv_document(&meta, &io::SIGN_COLUMNS, &signs));
        outputs.add(cfg.output.join(format!("verdicts{suffix}.csv")), io::csv_document(&meta, &io::VERDICT_COLUMNS, &verdicts));
        outputs.add(cfg.output.join(format!("boundaries{suffix}.json")), io::json_document(&meta, &diagram.boundaries)?);
        all.extend(diagram.maps);
    }
    Ok(Report { outputs, numerical_failure: failure_summary(all.iter()) })
}

pub fn cmd_scaling(cfg: &RunConfig, src: &dyn GroundStateSource) -> Result<Report> {
    if cfg.boundary != Boundary::Periodic {
        return Err(Error::InvalidParameter("scaling runs on periodic chains".into()));
    }
    if cfg.sizes.iter().any(|&n| n < 4) {
        return Err(Error::InvalidParameter("scaling sizes must be at least 4".into()));
    }
    let g_grid = cfg.g_grid.points()?;
    let (maxima, fit) = scaling_study(src, cfg.k, cfg.gamma, &cfg.sizes, &g_grid)?;
    let meta = cfg.metadata("scaling").note("sector", SECTOR_NOTE).note("bipartition", "contiguous L = N/2");
    let rows: Vec<Vec<String>> =
        maxima.iter().map(|m| vec![m.n_sites.to_string(), m.k.to_string(), m.g_k.to_string(), m.lambda_at_max.to_string()]).collect();
    let mut outputs = Outputs::new();
    outputs.add(cfg.output.join("scaling_maxima.csv"), io::csv_document(&meta, &["N", "k", "g_k", "lambda_at_max"], &rows));
    let summary = serde_json::json!({
        "a": fit.a,
        "b": fit.b,
        "c": fit.c,
        "rms": fit.rms_residual,
        "covariance": fit.covariance,
        "condition": fit.condition,
        "iterations": fit.iterations,
        "converged": fit.converged,
    });
    outputs.add(cfg.output.join("scaling_fit.json"), io::json_document(&meta, &summary)?);
    let failure = (!fit.converged).then(|| "exponential fit did not converge".to_string());
    Ok(Report { outputs, numerical_failure: failure })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OraclePoint {
    pub gamma: f64,
    pub g: f64,
    pub l: usize,
    /// `None` when the point was skipped.
    pub max_deviation: Option<f64>,
    pub skipped: Option<String>,
}

/// Compares exact-diagonalization block spectra (even sector) against the
/// free-fermion oracle on a γ × g grid.
pub fn oracle_comparison(cfg: &RunConfig, ed: &dyn GroundStateSource) -> Result<Vec<OraclePoint>> {
    let gammas = cfg.gammas.points()?;
    let g_grid = cfg.g_grid.points()?;
    let parts = cfg.partitions()?;
    let grid: Vec<(f64, f64)> = gammas.iter().flat_map(|&gm| g_grid.iter().map(move |&g| (gm, g))).collect();
    let per_point = grid
        .par_iter()
        .map(|&(gamma, g)| {
            let params = ChainParams::new(cfg.n_sites, gamma, g, cfg.boundary)?;
            let skip = |reason: String| {
                parts
                    .iter()
                    .map(|(_, p)| OraclePoint { gamma, g, l: p.a_size(), max_deviation: None, skipped: Some(reason.clone()) })
                    .collect()
            };
            if let Err(e) = check_domain(&params) {
                return Ok(skip(e.to_string()));
            }
            let corr = match fermion::correlation_matrix(&params) {
                Ok(c) => c,
                Err(e @ Error::OracleDeclined(_)) => return Ok(skip(e.to_string())),
                Err(e) => return Err(e),
            };
            let gs = ed.ground_state(&params)?;
            parts
                .iter()
                .map(|(_, part)| {
                    let exact = schmidt_spectrum(&gs.vector, part)?;
                    let free = corr.spectrum_for(part)?;
                    let len = exact.len().max(free.len());
                    let dev = (1..=len).map(|k| (exact.lambda(k) - free.lambda(k)).abs()).fold(0.0, f64::max);
                    Ok(OraclePoint { gamma, g, l: part.a_size(), max_deviation: Some(dev), skipped: None })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<Vec<_>>>>()?;
    Ok(per_point.into_iter().flatten().collect())
}

pub fn cmd_oracle_check(cfg: &RunConfig, ed: &dyn GroundStateSource) -> Result<Report> {
    let points = oracle_comparison(cfg, ed)?;
    let max_dev = points.iter().filter_map(|p| p.max_deviation).fold(0.0, f64::max);
    let compared = points.iter().filter(|p| p.max_deviation.is_some()).count();
    let pass = compared > 0 && max_dev <= ORACLE_TOLERANCE;
    let smoke = match cfg.smoke_sites {
        Some(n) => Some(smoke_run(cfg, n)?),
        None => None,
    };
    let mut meta = cfg.metadata("oracle-check").note("ed_sector", "even");
    if smoke.is_some() {
        meta = meta.note("nondeterministic", "smoke.runtime_seconds is a wall-clock measurement");
    }
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.gamma.to_string(),
                p.g.to_string(),
                p.l.to_string(),
                if p.skipped.is_some() { "skipped" } else { "compared" }.to_string(),
                io::opt(p.max_deviation),
            ]
        })
        .collect();
    let summary = serde_json::json!({
        "max_deviation": max_dev,
        "tolerance": ORACLE_TOLERANCE,
        "pass": pass,
        "compared": compared,
        "skipped": points.iter().filter(|p| p.skipped.is_some()).map(|p| serde_json::json!({"gamma": p.gamma, "g": p.g, "l": p.l, "reason": p.skipped})).collect::<Vec<_>>(),
        "smoke": smoke,
    });
    let mut outputs = Outputs::new();
    outputs.add(cfg.output.join("oracle_check.csv"), io::csv_document(&meta, &["gamma", "g", "L", "status", "max_deviation"], &rows));
    outputs.add(cfg.output.join("oracle_check.json"), io::json_document(&meta, &summary)?);
    let failure = (!pass).then(|| format!("oracle deviation {max_dev} exceeds {ORACLE_TOLERANCE} (or nothing compared)"));
    Ok(Report { outputs, numerical_failure: failure })
}

/// Times the oracle alone on a long chain at the first in-domain grid point.
fn smoke_run(cfg: &RunConfig, n: usize) -> Result<serde_json::Value> {
    let start = Instant::now();
    for gamma in cfg.gammas.points()? {
        for g in cfg.g_grid.points()? {
            let params = ChainParams::periodic(n, gamma, g)?;
            if check_domain(&params).is_err() {
                continue;
            }
            let corr = fermion::correlation_matrix(&params)?;
            let s1 = corr.block_renyi(0, n / 2, 1.0)?;
            let s2 = corr.block_renyi(0, n / 2, 2.0)?;
            return Ok(serde_json::json!({
                "n_sites": n, "l": n / 2, "gamma": gamma, "g": g,
                "S_1": s1, "S_2": s2,
                "runtime_seconds": start.elapsed().as_secs_f64(),
            }));
        }
    }
    Err(Error::InvalidParameter("no grid point inside the oracle domain for the smoke run".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AqcRow {
    pub s: f64,
    pub g: f64,
    pub verdict: Option<String>,
    pub phase_boundary: bool,
}

/// Nearest-g lookup within half the table's grid spacing.
pub fn lookup_verdict(table: &[io::VerdictRow], g: f64) -> Option<&io::VerdictRow> {
    let mut gs: Vec<f64> = table.iter().map(|r| r.g).collect();
    gs.sort_by(f64::total_cmp);
    let spacing = gs.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let reach = if spacing.is_finite() { 0.5 * spacing * (1.0 + 1e-9) } else { 1e-12 };
    table
        .iter()
        .map(|r| (r, (r.g - g).abs()))
        .filter(|(_, d)| *d <= reach)
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.g.total_cmp(&b.0.g)))
        .map(|(r, _)| r)
}

pub fn aqc_rows(s_values: &[f64], table: Option<&[io::VerdictRow]>) -> Result<Vec<AqcRow>> {
    s_values
        .iter()
        .map(|&s| {
            let g = aqc_schedule_to_g(s)?;
            let verdict = table.and_then(|t| lookup_verdict(t, g)).map(|r| io::verdict_label(r.verdict).to_string());
            Ok(AqcRow { s, g, verdict, phase_boundary: g == 1.0 })
        })
        .collect()
}

pub fn cmd_aqc(cfg: &RunConfig) -> Result<Report> {
    if cfg.s.is_empty() {
        return Err(Error::InvalidParameter("no schedule values given".into()));
    }
    let table = match &cfg.verdicts {
        Some(path) => {
            let rows = io::read_verdict_table(path)?;
            let ising: Vec<io::VerdictRow> = rows.into_iter().filter(|r| r.gamma == 1.0).collect();
            if ising.is_empty() {
                return Err(Error::InvalidParameter(format!("{} has no gamma = 1 rows", path.display())));
            }
            Some(ising)
        }
        None => None,
    };
    let rows = aqc_rows(&cfg.s, table.as_deref())?;
    let side = |g: f64| {
        if g > 1.0 {
            "paramagnetic"
        } else if g < 1.0 {
            "ferromagnetic"
        } else {
            "critical"
        }
    };
    let cells: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.s.to_string(),
                r.g.to_string(),
                side(r.g).to_string(),
                r.verdict.clone().unwrap_or_else(|| "none".into()),
                r.phase_boundary.to_string(),
            ]
        })
        .collect();
    let meta = cfg.metadata("aqc-map").note("mapping", "g = 2(1-s)/s");
    let mut outputs = Outputs::new();
    outputs.add(cfg.output.join("aqc_map.csv"), io::csv_document(&meta, &["s", "g", "side", "verdict", "phase_boundary"], &cells));
    Ok(Report { outputs, numerical_failure: None })
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Resolves the layered configuration for a parsed command line.
pub fn load_config(command: &Command) -> Result<RunConfig> {
    let flags = command.flags();
    let mut layer = ConfigLayer::default();
    if let Some(name) = &flags.preset {
        layer = layer.overlay(preset(name)?);
    }
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
        layer = layer.overlay(ConfigLayer::from_json(&text)?);
    }
    if flags.cache_dir.is_none() {
        if let Some(dir) = std::env::var_os(CACHE_DIR_ENV).filter(|d| !d.is_empty()) {
            layer.cache_dir = Some(PathBuf::from(dir));
        }
    }
    layer = layer.overlay(ConfigLayer::from_flags(flags));
    RunConfig::resolve(command.name(), layer)
}

fn build_solver(cfg: &RunConfig, policy: SectorPolicy) -> Result<Solver> {
    let mut solver = Solver::new(cfg.solver_config()).with_policy(policy);
    if let Some(dir) = &cfg.cache_dir {
        solver = solver.with_disk_cache(DiskCache::open(dir)?);
    }
    Ok(solver)
}

/// Runs one command to completion, without writing anything.
pub fn execute(command: &Command, cfg: &RunConfig) -> Result<Report> {
    let run = || -> Result<Report> {
        match command {
            Command::AqcMap(_) => cmd_aqc(cfg),
            Command::OracleCheck(_) => cmd_oracle_check(cfg, &build_solver(cfg, SectorPolicy::Even)?),
            _ => {
                let solver = build_solver(cfg, SectorPolicy::Auto)?;
                match command {
                    Command::Spectrum(_) => cmd_spectrum(cfg, &solver),
                    Command::Signmap(_) => cmd_signmap(cfg, &solver),
                    Command::Scaling(_) => cmd_scaling(cfg, &solver),
                    Command::Phasediagram(_) => cmd_phasediagram(cfg, &solver),
                    Command::AqcMap(_) | Command::OracleCheck(_) => unreachable!(),
                }
            }
        }
    };
    match cfg.workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Parses arguments, runs the command, writes its outputs and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    let outcome = load_config(&cli.command).and_then(|cfg| execute(&cli.command, &cfg));
    let report = match outcome {
        Ok(r) => r,
        Err(e) => {
            eprintln!("xyconv {}: {e}", cli.command.name());
            return exit_code(&e);
        }
    };
    match report.outputs.commit() {
        Ok(paths) => paths.iter().for_each(|p| println!("{}", display(p))),
        Err(e) => {
            eprintln!("xyconv {}: {e}", cli.command.name());
            return EXIT_IO;
        }
    }
    match report.numerical_failure {
        Some(msg) => {
            eprintln!("xyconv {}: {msg}", cli.command.name());
            EXIT_NUMERICAL
        }
        None => 0,
    }
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0.1,0.2").unwrap().points().unwrap(), vec![0.1, 0.2]);
        let g = parse_grid("0.05:2:0.05").unwrap().points().unwrap();
        assert_eq!(g.len(), 40);
        assert_eq!(g[6], 0.35);
        assert_eq!(*g.last().unwrap(), 2.0);
        let a = parse_grid("log:0.01:100:60").unwrap().points().unwrap();
        assert_eq!(a, crate::entanglement::default_alpha_grid::<f64>());
        assert_eq!(parse_grid("lin:0:1:5").unwrap().points().unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(parse_grid("a:b").is_err());
        assert!(Grid::Step(StepGrid { start: 1.0, stop: 0.0, step: 0.1 }).points().is_err());
    }

    #[test]
    fn grid_json_forms() {
        let l: ConfigLayer =
            ConfigLayer::from_json(r#"{"g_grid": [0.5, 1.0], "alpha_grid": {"start": 0.1, "stop": 10, "count": 3, "log": true}}"#).unwrap();
        assert_eq!(l.g_grid, Some(Grid::Values(vec![0.5, 1.0])));
        assert!(matches!(l.alpha_grid, Some(Grid::Count(_))));
        assert!(ConfigLayer::from_json(r#"{"n_site": 4}"#).is_err());
    }

    #[test]
    fn precedence() {
        let preset = preset("ising-n12-l6").unwrap();
        let file = ConfigLayer { n_sites: Some(10), l: Some(vec![5]), ..Default::default() };
        let flags = ConfigLayer { l: Some(vec![4]), ..Default::default() };
        let cfg = RunConfig::resolve("signmap", ConfigLayer::default().overlay(preset).overlay(file).overlay(flags)).unwrap();
        assert_eq!((cfg.n_sites, cfg.gamma, cfg.l.clone()), (10, 1.0, vec![4]));
        assert_eq!(cfg.g_grid, Grid::Step(SIGNMAP_G_GRID));
        assert!(preset_err("nope"));
    }

    fn preset_err(name: &str) -> bool {
        preset(name).is_err()
    }

    #[test]
    fn echo_round_trips_as_config() {
        let cfg = RunConfig::resolve("signmap", preset("xy-gamma-sqrt3over2-n14-l7").unwrap()).unwrap();
        let again = RunConfig::resolve("signmap", ConfigLayer::from_json(&cfg.echo().to_string()).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn invalid_configs() {
        let with = |l: ConfigLayer| RunConfig::resolve("signmap", l);
        assert!(with(ConfigLayer { n_sites: Some(6), l: Some(vec![6]), ..Default::default() }).is_err());
        assert!(with(ConfigLayer { alpha_grid: Some(Grid::Values(vec![])), ..Default::default() }).is_err());
        assert!(with(ConfigLayer { alpha_grid: Some(Grid::Values(vec![0.0, 1.0])), ..Default::default() }).is_err());
        assert!(with(ConfigLayer { g_grid: Some(Grid::Values(vec![1.0, 0.5])), ..Default::default() }).is_err());
        assert!(with(ConfigLayer { delta: Some(0.0), ..Default::default() }).is_err());
        let e = with(ConfigLayer { n_sites: Some(6), l: Some(vec![7]), ..Default::default() }).unwrap_err();
        assert_eq!(exit_code(&e), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::BoundaryMax { g: 0.0, n_sites: 8, k: 3 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::Io("x".into())), EXIT_IO);
    }

    #[test]
    fn aqc_lookup() {
        let table: Vec<io::VerdictRow> = (1..=40)
            .map(|i| {
                let g = i as f64 * 0.05;
                let v = if g > 1.0 {
                    crate::convertibility::Verdict::ConvertibleIncreasing
                } else {
                    crate::convertibility::Verdict::NonConvertible
                };
                io::VerdictRow { gamma: 1.0, g: tidy(g), verdict: Some(v) }
            })
            .collect();
        let rows = aqc_rows(&[0.5, 2.0 / 3.0, 0.75, 0.9], Some(&table)).unwrap();
        assert_eq!(rows[0].g, 2.0);
        assert_eq!(rows[0].verdict.as_deref(), Some("convertible_increasing"));
        assert!(rows[1].phase_boundary && rows[1].g == 1.0);
        assert_eq!(rows[2].verdict.as_deref(), Some("non_convertible"));
        assert_eq!(rows[3].verdict.as_deref(), Some("non_convertible"));
        assert!(aqc_rows(&[0.0], None).is_err());
        assert!(aqc_rows(&[1.5], None).is_err());
        assert!(lookup_verdict(&table, 3.0).is_none());
    }
}
