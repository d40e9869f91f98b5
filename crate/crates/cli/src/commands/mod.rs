//! Subcommand parameter resolution, dispatch, and manifest re-execution.
//!
//! Each command resolves its flags, config values, and defaults into a
//! self-contained parameter struct that is stored in the run manifest.
//! Re-execution (`lorentz rerun`) deserializes that struct and calls the
//! same entry point, so a manifest fully determines its outputs.

pub mod cells;
pub mod chain;
pub mod invariance;
pub mod lyapunov;
pub mod orbit;
pub mod report;
pub mod shadow;
pub mod table;

use crate::config::Cfg;
use crate::output::{read_manifest, Format, RunDir};
use crate::{CliError, CliResult, Command, ResolvedGlobals};
use clap::Subcommand;
use lorentz_core::geometry::{build_table, BilliardTable};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Corridor-enumeration cutoff used by every analysis command. The corridor
/// list only affects flight labels and the anchor inventory, never the
/// collision dynamics; a fixed cutoff keeps labels identical across runs.
pub const ANALYSIS_CUTOFF: u32 = 3;

pub fn analysis_table(r: f64, tau_max: f64) -> CliResult<BilliardTable> {
    let mut t = build_table(r, ANALYSIS_CUTOFF)?;
    t.tau_max = tau_max;
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OrientationArg {
    /// Cells of the forward map (label = next flight).
    Forward,
    /// Cells of the inverse map (label = previous flight).
    Backward,
    /// Both, reported side by side.
    Both,
}

impl OrientationArg {
    fn parse(s: &str) -> CliResult<OrientationArg> {
        match s {
            "forward" => Ok(OrientationArg::Forward),
            "backward" => Ok(OrientationArg::Backward),
            "both" => Ok(OrientationArg::Both),
            other => Err(CliError::Usage(format!(
                "orientation must be forward|backward|both, got \"{other}\""
            ))),
        }
    }

    pub fn list(self) -> Vec<lorentz_core::cells::Orientation> {
        use lorentz_core::cells::Orientation::*;
        match self {
            OrientationArg::Forward => vec![Forward],
            OrientationArg::Backward => vec![Backward],
            OrientationArg::Both => vec![Forward, Backward],
        }
    }
}

pub fn orientation_name(o: lorentz_core::cells::Orientation) -> &'static str {
    match o {
        lorentz_core::cells::Orientation::Forward => "forward",
        lorentz_core::cells::Orientation::Backward => "backward",
    }
}

#[derive(Subcommand, Debug)]
pub enum CellsCmd {
    /// Rasterize flight labels over a window at the anchor and extract cells.
    Scan {
        /// Index into the table's grazing-anchor list.
        #[arg(long)]
        anchor: Option<usize>,
        #[arg(long, value_enum)]
        orientation: Option<OrientationArg>,
        /// Smallest flight label scanned.
        #[arg(long)]
        n_lo: Option<u64>,
        /// Largest flight label scanned.
        #[arg(long)]
        n_hi: Option<u64>,
        /// Raster width (arclength-offset axis).
        #[arg(long)]
        width: Option<usize>,
        /// Raster height (deflection axis).
        #[arg(long)]
        height: Option<usize>,
        /// Cells resolved with fewer pixels are dropped from the atlas.
        #[arg(long)]
        min_pixels: Option<usize>,
    },
    /// Probe per-band geometry and one-step expansion over a label range.
    Expansion {
        #[arg(long)]
        anchor: Option<usize>,
        #[arg(long, value_enum)]
        orientation: Option<OrientationArg>,
        #[arg(long)]
        n_lo: Option<u64>,
        #[arg(long)]
        n_hi: Option<u64>,
        /// Number of log-spaced labels probed.
        #[arg(long)]
        points: Option<usize>,
    },
    /// Decide whether a forward cell meets a backward cell; trace corners.
    Intersect {
        #[arg(long)]
        anchor: Option<usize>,
        /// Forward-cell label.
        #[arg(long)]
        m: Option<u64>,
        /// Backward-cell label.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Fit the crossing constants (c, n*) and validate on held-out pairs.
    Constants {
        #[arg(long)]
        anchor: Option<usize>,
        /// Smallest window constant scanned.
        #[arg(long)]
        c_lo: Option<f64>,
        /// Largest window constant scanned.
        #[arg(long)]
        c_hi: Option<f64>,
        /// Grid step of the constant scan.
        #[arg(long)]
        c_step: Option<f64>,
        /// Labels probed for the fit (comma-separated).
        #[arg(long, value_delimiter = ',')]
        probe: Vec<u64>,
        /// Held-out labels validating the fit (comma-separated).
        #[arg(long, value_delimiter = ',')]
        holdout: Vec<u64>,
    },
}

#[derive(Subcommand, Debug)]
pub enum ChainMeasureCmd {
    /// Finite-entropy chain: ladder labels with a geometric stationary law.
    Mu1 {
        /// Ladder window constant (0.01 grid).
        #[arg(long)]
        ladder_c: Option<f64>,
        /// First ladder label.
        #[arg(long)]
        n0: Option<u64>,
        /// Number of ladder rungs computed.
        #[arg(long)]
        depth: Option<usize>,
        #[command(subcommand)]
        action: ChainActionCmd,
    },
    /// Infinite-entropy chain: factor product over a slowly decaying law.
    Mu2 {
        /// Offset of the slow stationary family.
        #[arg(long)]
        a: Option<f64>,
        /// Cut-schedule slope (> 2).
        #[arg(long)]
        c_bar: Option<f64>,
        /// Ladder window constant the chain must respect.
        #[arg(long)]
        window_c: Option<f64>,
        /// Symbol value of state 1 (must clear the window floor).
        #[arg(long)]
        n_start: Option<u64>,
        #[command(subcommand)]
        action: ChainActionCmd,
    },
}

#[derive(Subcommand, Debug)]
pub enum ChainActionCmd {
    /// Serialize states, stationary weights, and transition rows.
    Build {
        /// Largest state index listed.
        #[arg(long)]
        state_cap: Option<u64>,
    },
    /// Entropy rate (mu1) or row entropies and partial sums (mu2).
    Entropy {
        /// State indices probed (comma-separated).
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
    },
    /// Draw a stationary path and compare empirical state frequencies.
    Sample {
        /// Path length.
        #[arg(long)]
        len: Option<usize>,
        /// Largest state admitted for the initial draw (mu2 only).
        #[arg(long)]
        start_cap: Option<u64>,
        /// Also write the raw path (one row per step).
        #[arg(long)]
        emit_path: bool,
    },
    /// Validate the construction: row algebra, stationarity, divergences.
    Check {
        #[arg(long)]
        state_cap: Option<u64>,
        #[arg(long, value_delimiter = ',')]
        checkpoints: Vec<u64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    Mu1,
    Mu2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionKind {
    Build,
    Entropy,
    Sample,
    Check,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TableParams {
    pub r: f64,
    pub cutoff: u32,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitParams {
    pub r: f64,
    pub seed: u64,
    pub steps: u64,
    pub s0: Option<f64>,
    pub phi0: Option<f64>,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LyapunovParams {
    pub r: f64,
    pub seed: u64,
    pub collisions: u64,
    pub tau_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InvarianceParams {
    pub r: f64,
    pub seed: u64,
    pub samples: usize,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanParams {
    pub r: f64,
    pub anchor: usize,
    pub orientation: OrientationArg,
    pub n_lo: u64,
    pub n_hi: u64,
    pub width: usize,
    pub height: usize,
    pub min_pixels: usize,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExpansionParams {
    pub r: f64,
    pub anchor: usize,
    pub orientation: OrientationArg,
    pub n_lo: u64,
    pub n_hi: u64,
    pub points: usize,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntersectParams {
    pub r: f64,
    pub anchor: usize,
    pub m: u64,
    pub n: u64,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstantsParams {
    pub r: f64,
    pub anchor: usize,
    pub c_lo: f64,
    pub c_hi: f64,
    pub c_step: f64,
    pub probe: Vec<u64>,
    pub holdout: Vec<u64>,
    pub tau_max: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChainParams {
    pub measure: MeasureKind,
    pub action: ActionKind,
    pub seed: u64,
    pub format: Format,
    /// Ladder parameters (mu1).
    pub ladder_c: f64,
    pub n0: u64,
    pub depth: usize,
    /// Family and schedule parameters (mu2).
    pub a: f64,
    pub c_bar: f64,
    pub window_c: f64,
    pub n_start: u64,
    /// Shared knobs.
    pub state_cap: u64,
    pub len: usize,
    pub start_cap: u64,
    pub checkpoints: Vec<u64>,
    pub emit_path: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ShadowParams {
    pub r: f64,
    pub seed: u64,
    pub anchor: usize,
    pub count: usize,
    pub len: usize,
    pub sym_lo: u64,
    pub sym_hi: u64,
    pub tol: f64,
    pub tie: f64,
    pub words: Option<Vec<Vec<u64>>>,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportParams {
    pub r: f64,
    pub seed: u64,
    pub quick: bool,
    pub tau_max: f64,
    pub format: Format,
}

#[derive(Clone, Debug)]
pub enum Resolved {
    Table(TableParams),
    Orbit(OrbitParams),
    Lyapunov(LyapunovParams),
    Invariance(InvarianceParams),
    CellsScan(ScanParams),
    CellsExpansion(ExpansionParams),
    CellsIntersect(IntersectParams),
    CellsConstants(ConstantsParams),
    Chain(ChainParams),
    Shadow(ShadowParams),
    Report(ReportParams),
}

impl Resolved {
    pub fn name(&self) -> String {
        match self {
            Resolved::Table(_) => "table".into(),
            Resolved::Orbit(_) => "orbit".into(),
            Resolved::Lyapunov(_) => "lyapunov".into(),
            Resolved::Invariance(_) => "invariance".into(),
            Resolved::CellsScan(_) => "cells-scan".into(),
            Resolved::CellsExpansion(_) => "cells-expansion".into(),
            Resolved::CellsIntersect(_) => "cells-intersect".into(),
            Resolved::CellsConstants(_) => "cells-constants".into(),
            Resolved::Chain(p) => {
                let m = match p.measure {
                    MeasureKind::Mu1 => "mu1",
                    MeasureKind::Mu2 => "mu2",
                };
                let a = match p.action {
                    ActionKind::Build => "build",
                    ActionKind::Entropy => "entropy",
                    ActionKind::Sample => "sample",
                    ActionKind::Check => "check",
                };
                format!("chain-{m}-{a}")
            }
            Resolved::Shadow(_) => "shadow".into(),
            Resolved::Report(_) => "report".into(),
        }
    }

    pub fn params_json(&self) -> CliResult<serde_json::Value> {
        Ok(match self {
            Resolved::Table(p) => serde_json::to_value(p)?,
            Resolved::Orbit(p) => serde_json::to_value(p)?,
            Resolved::Lyapunov(p) => serde_json::to_value(p)?,
            Resolved::Invariance(p) => serde_json::to_value(p)?,
            Resolved::CellsScan(p) => serde_json::to_value(p)?,
            Resolved::CellsExpansion(p) => serde_json::to_value(p)?,
            Resolved::CellsIntersect(p) => serde_json::to_value(p)?,
            Resolved::CellsConstants(p) => serde_json::to_value(p)?,
            Resolved::Chain(p) => serde_json::to_value(p)?,
            Resolved::Shadow(p) => serde_json::to_value(p)?,
            Resolved::Report(p) => serde_json::to_value(p)?,
        })
    }
}

/// Merge flags, config values, and defaults into executable parameters.
pub fn resolve(cmd: &Command, g: &ResolvedGlobals, cfg: &Cfg) -> CliResult<Resolved> {
    Ok(match cmd {
        Command::Table { cutoff } => Resolved::Table(TableParams {
            r: g.r,
            cutoff: cutoff.or(cfg.u32("cutoff")?).unwrap_or(5),
            tau_max: g.tau_max,
            format: g.format,
        }),
        Command::Orbit { steps, s0, phi0 } => {
            let s0 = s0.or(cfg.f64("s0")?);
            let phi0 = phi0.or(cfg.f64("phi0")?);
            if s0.is_some() != phi0.is_some() {
                return Err(CliError::Usage(
                    "--s0 and --phi0 must be given together".into(),
                ));
            }
            Resolved::Orbit(OrbitParams {
                r: g.r,
                seed: g.seed,
                steps: steps.or(cfg.u64("steps")?).unwrap_or(1000),
                s0,
                phi0,
                tau_max: g.tau_max,
                format: g.format,
            })
        }
        Command::Lyapunov { steps } => Resolved::Lyapunov(LyapunovParams {
            r: g.r,
            seed: g.seed,
            collisions: steps.or(cfg.u64("steps")?).unwrap_or(1_000_000),
            tau_max: g.tau_max,
        }),
        Command::Invariance { samples } => Resolved::Invariance(InvarianceParams {
            r: g.r,
            seed: g.seed,
            samples: samples.or(cfg.usize("samples")?).unwrap_or(1_000_000),
            tau_max: g.tau_max,
            format: g.format,
        }),
        Command::Cells { action } => resolve_cells(action, g, cfg)?,
        Command::Chain { measure } => resolve_chain(measure, g, cfg)?,
        Command::Shadow {
            count,
            len,
            sym_lo,
            sym_hi,
            tol,
            tie,
            anchor,
            words,
        } => {
            let explicit = if words.is_empty() {
                cfg.words("words")?
            } else {
                let mut parsed = Vec::with_capacity(words.len());
                for w in words {
                    let mut word = Vec::new();
                    for part in w.split(';') {
                        let part = part.trim();
                        if part.is_empty() {
                            continue;
                        }
                        word.push(part.parse::<u64>().map_err(|_| {
                            CliError::Usage(format!(
                                "--word expects ';'-separated integers, got \"{w}\""
                            ))
                        })?);
                    }
                    if word.is_empty() {
                        return Err(CliError::Usage(format!("empty word \"{w}\"")));
                    }
                    parsed.push(word);
                }
                Some(parsed)
            };
            Resolved::Shadow(ShadowParams {
                r: g.r,
                seed: g.seed,
                anchor: anchor.or(cfg.usize("anchor")?).unwrap_or(0),
                count: count.or(cfg.usize("count")?).unwrap_or(12),
                len: len.or(cfg.usize("len")?).unwrap_or(6),
                sym_lo: sym_lo.or(cfg.u64("sym_lo")?).unwrap_or(20),
                sym_hi: sym_hi.or(cfg.u64("sym_hi")?).unwrap_or(80),
                tol: tol.or(cfg.f64("tol")?).unwrap_or(1e-9),
                tie: tie.or(cfg.f64("tie")?).unwrap_or(0.5),
                words: explicit,
                tau_max: g.tau_max,
                format: g.format,
            })
        }
        Command::Report { quick } => Resolved::Report(ReportParams {
            r: g.r,
            seed: g.seed,
            quick: *quick || cfg.bool("quick")?.unwrap_or(false),
            tau_max: g.tau_max,
            format: g.format,
        }),
        Command::Rerun { .. } => {
            return Err(CliError::Usage(
                "rerun is dispatched separately and records no new command".into(),
            ))
        }
    })
}

fn resolve_cells(action: &CellsCmd, g: &ResolvedGlobals, cfg: &Cfg) -> CliResult<Resolved> {
    let cfg_orientation = match cfg.string("orientation")? {
        Some(s) => Some(OrientationArg::parse(&s)?),
        None => None,
    };
    Ok(match action {
        CellsCmd::Scan {
            anchor,
            orientation,
            n_lo,
            n_hi,
            width,
            height,
            min_pixels,
        } => Resolved::CellsScan(ScanParams {
            r: g.r,
            anchor: anchor.or(cfg.usize("anchor")?).unwrap_or(0),
            orientation: orientation
                .or(cfg_orientation)
                .unwrap_or(OrientationArg::Forward),
            n_lo: n_lo.or(cfg.u64("n_lo")?).unwrap_or(10),
            n_hi: n_hi.or(cfg.u64("n_hi")?).unwrap_or(40),
            width: width.or(cfg.usize("width")?).unwrap_or(512),
            height: height.or(cfg.usize("height")?).unwrap_or(384),
            min_pixels: min_pixels.or(cfg.usize("min_pixels")?).unwrap_or(12),
            tau_max: g.tau_max,
            format: g.format,
        }),
        CellsCmd::Expansion {
            anchor,
            orientation,
            n_lo,
            n_hi,
            points,
        } => Resolved::CellsExpansion(ExpansionParams {
            r: g.r,
            anchor: anchor.or(cfg.usize("anchor")?).unwrap_or(0),
            orientation: orientation
                .or(cfg_orientation)
                .unwrap_or(OrientationArg::Both),
            n_lo: n_lo.or(cfg.u64("n_lo")?).unwrap_or(50),
            n_hi: n_hi.or(cfg.u64("n_hi")?).unwrap_or(2000),
            points: points.or(cfg.usize("points")?).unwrap_or(25),
            tau_max: g.tau_max,
            format: g.format,
        }),
        CellsCmd::Intersect { anchor, m, n } => Resolved::CellsIntersect(IntersectParams {
            r: g.r,
            anchor: anchor.or(cfg.usize("anchor")?).unwrap_or(0),
            m: m.or(cfg.u64("m")?).unwrap_or(12),
            n: n.or(cfg.u64("n")?).unwrap_or(30),
            tau_max: g.tau_max,
            format: g.format,
        }),
        CellsCmd::Constants {
            anchor,
            c_lo,
            c_hi,
            c_step,
            probe,
            holdout,
        } => {
            let default = lorentz_core::cells::ConstantsScan::default();
            Resolved::CellsConstants(ConstantsParams {
                r: g.r,
                anchor: anchor.or(cfg.usize("anchor")?).unwrap_or(0),
                c_lo: c_lo.or(cfg.f64("c_lo")?).unwrap_or(default.c_lo),
                c_hi: c_hi.or(cfg.f64("c_hi")?).unwrap_or(default.c_hi),
                c_step: c_step.or(cfg.f64("c_step")?).unwrap_or(default.c_step),
                probe: if probe.is_empty() {
                    cfg.u64_list("probe")?.unwrap_or(default.probe)
                } else {
                    probe.clone()
                },
                holdout: if holdout.is_empty() {
                    cfg.u64_list("holdout")?.unwrap_or(default.holdout)
                } else {
                    holdout.clone()
                },
                tau_max: g.tau_max,
            })
        }
    })
}

fn resolve_chain(measure: &ChainMeasureCmd, g: &ResolvedGlobals, cfg: &Cfg) -> CliResult<Resolved> {
    let (kind, action, ladder_c, n0, depth, a, c_bar, window_c, n_start) = match measure {
        ChainMeasureCmd::Mu1 {
            ladder_c,
            n0,
            depth,
            action,
        } => (
            MeasureKind::Mu1,
            action,
            ladder_c.or(cfg.f64("ladder_c")?).unwrap_or(1.3),
            n0.or(cfg.u64("n0")?).unwrap_or(14),
            depth.or(cfg.usize("depth")?).unwrap_or(40),
            1.5,
            3.0,
            1.05,
            3,
        ),
        ChainMeasureCmd::Mu2 {
            a,
            c_bar,
            window_c,
            n_start,
            action,
        } => (
            MeasureKind::Mu2,
            action,
            1.3,
            14,
            40,
            a.or(cfg.f64("a")?).unwrap_or(1.5),
            c_bar.or(cfg.f64("c_bar")?).unwrap_or(3.0),
            window_c.or(cfg.f64("window_c")?).unwrap_or(1.05),
            n_start.or(cfg.u64("n_start")?).unwrap_or(3),
        ),
    };
    let default_cap = match kind {
        MeasureKind::Mu1 => 60,
        MeasureKind::Mu2 => 200,
    };
    let default_len = match kind {
        MeasureKind::Mu1 => 1_000_000,
        MeasureKind::Mu2 => 200_000,
    };
    // Checkpoints index states: ladder states stop at depth - 1.
    let default_checkpoints = match kind {
        MeasureKind::Mu1 => {
            let top = depth.saturating_sub(1).max(4) as u64;
            vec![top / 4, top / 2, 3 * top / 4, top]
        }
        MeasureKind::Mu2 => vec![25, 100, 400, 1600],
    };
    let (action_kind, state_cap, len, start_cap, checkpoints, emit_path) = match action {
        ChainActionCmd::Build { state_cap } => (
            ActionKind::Build,
            state_cap.or(cfg.u64("state_cap")?).unwrap_or(default_cap),
            default_len,
            20_000,
            default_checkpoints,
            false,
        ),
        ChainActionCmd::Entropy { checkpoints } => (
            ActionKind::Entropy,
            default_cap,
            default_len,
            20_000,
            if checkpoints.is_empty() {
                cfg.u64_list("checkpoints")?.unwrap_or(default_checkpoints)
            } else {
                checkpoints.clone()
            },
            false,
        ),
        ChainActionCmd::Sample {
            len,
            start_cap,
            emit_path,
        } => (
            ActionKind::Sample,
            default_cap,
            len.or(cfg.usize("len")?).unwrap_or(default_len),
            start_cap.or(cfg.u64("start_cap")?).unwrap_or(20_000),
            default_checkpoints,
            *emit_path || cfg.bool("emit_path")?.unwrap_or(false),
        ),
        ChainActionCmd::Check {
            state_cap,
            checkpoints,
        } => (
            ActionKind::Check,
            state_cap.or(cfg.u64("state_cap")?).unwrap_or(default_cap),
            default_len,
            20_000,
            if checkpoints.is_empty() {
                cfg.u64_list("checkpoints")?.unwrap_or(default_checkpoints)
            } else {
                checkpoints.clone()
            },
            false,
        ),
    };
    Ok(Resolved::Chain(ChainParams {
        measure: kind,
        action: action_kind,
        seed: g.seed,
        format: g.format,
        ladder_c,
        n0,
        depth,
        a,
        c_bar,
        window_c,
        n_start,
        state_cap,
        len,
        start_cap,
        checkpoints,
        emit_path,
    }))
}

pub fn execute(resolved: &Resolved, run: &mut RunDir) -> CliResult<String> {
    match resolved {
        Resolved::Table(p) => table::run(p, run),
        Resolved::Orbit(p) => orbit::run(p, run),
        Resolved::Lyapunov(p) => lyapunov::run(p, run),
        Resolved::Invariance(p) => invariance::run(p, run),
        Resolved::CellsScan(p) => cells::run_scan(p, run),
        Resolved::CellsExpansion(p) => cells::run_expansion(p, run),
        Resolved::CellsIntersect(p) => cells::run_intersect(p, run),
        Resolved::CellsConstants(p) => cells::run_constants(p, run),
        Resolved::Chain(p) => chain::run(p, run),
        Resolved::Shadow(p) => shadow::run(p, run),
        Resolved::Report(p) => report::run(p, run),
    }
}

fn from_manifest(command: &str, params: serde_json::Value) -> CliResult<Resolved> {
    Ok(match command {
        "table" => Resolved::Table(serde_json::from_value(params)?),
        "orbit" => Resolved::Orbit(serde_json::from_value(params)?),
        "lyapunov" => Resolved::Lyapunov(serde_json::from_value(params)?),
        "invariance" => Resolved::Invariance(serde_json::from_value(params)?),
        "cells-scan" => Resolved::CellsScan(serde_json::from_value(params)?),
        "cells-expansion" => Resolved::CellsExpansion(serde_json::from_value(params)?),
        "cells-intersect" => Resolved::CellsIntersect(serde_json::from_value(params)?),
        "cells-constants" => Resolved::CellsConstants(serde_json::from_value(params)?),
        "shadow" => Resolved::Shadow(serde_json::from_value(params)?),
        "report" => Resolved::Report(serde_json::from_value(params)?),
        name if name.starts_with("chain-") => Resolved::Chain(serde_json::from_value(params)?),
        other => {
            return Err(CliError::Usage(format!(
                "manifest names unknown command \"{other}\""
            )))
        }
    })
}

/// Re-execute a recorded run and verify that every data file reproduces
/// bit for bit (same names, same SHA-256 digests).
pub fn rerun(manifest_path: &Path, g: &ResolvedGlobals) -> CliResult<String> {
    let manifest = read_manifest(manifest_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", manifest_path.display())))?;
    let resolved = from_manifest(&manifest.command, manifest.params.clone())?;
    let mut run = RunDir::create(&g.out, &manifest.command)?;
    let inner = execute(&resolved, &mut run)?;
    let dir = run.dir.clone();
    let (_, new_outputs) = run.finish(&manifest.command, g.threads, manifest.params.clone())?;

    let mut lines = vec![
        format!(
            "re-executed {} from {}",
            manifest.command,
            manifest_path.display()
        ),
        inner,
        format!("new run at {}", dir.display()),
    ];
    let mut ok = true;
    for old in &manifest.outputs {
        match new_outputs.iter().find(|n| n.file == old.file) {
            Some(new) if new.sha256 == old.sha256 && new.bytes == old.bytes => {
                lines.push(format!("  {}  sha256 {}  MATCH", old.file, &old.sha256[..16]));
            }
            Some(new) => {
                ok = false;
                lines.push(format!(
                    "  {}  sha256 {} -> {}  MISMATCH",
                    old.file,
                    &old.sha256[..16],
                    &new.sha256[..16]
                ));
            }
            None => {
                ok = false;
                lines.push(format!("  {}  missing from the re-run  MISMATCH", old.file));
            }
        }
    }
    for new in &new_outputs {
        if !manifest.outputs.iter().any(|o| o.file == new.file) {
            ok = false;
            lines.push(format!(
                "  {}  not present in the original run  MISMATCH",
                new.file
            ));
        }
    }
    if ok {
        lines.push(format!(
            "reproduced {}/{} data files bit-identically -> PASS",
            manifest.outputs.len(),
            manifest.outputs.len()
        ));
        Ok(lines.join("\n"))
    } else {
        lines.push("re-execution failed to reproduce the recorded outputs -> FAIL".into());
        Err(CliError::Reproduce(lines.join("\n")))
    }
}

/// Log-spaced integer labels from `lo` to `hi` inclusive, deduplicated.
pub fn log_spaced(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    let count = count.max(2);
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut v: Vec<u64> = (0..count)
        .map(|k| {
            (a + (b - a) * k as f64 / (count - 1) as f64)
                .exp()
                .round() as u64
        })
        .collect();
    v.dedup();
    v
}
