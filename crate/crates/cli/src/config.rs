//! Run configuration: flat `key = value` lines with dotted keys.
//!
//! ```text
//! # comment
//! mesh.family = kershaw
//! mesh.levels = 8, 16, 32
//! noise.rho = 0.2
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use sgrd_core::experiments::FamilySpec;
use sgrd_core::mesh::Rect;
use sgrd_core::solver::{Reaction, ReactionTreatment};
use sgrd_core::stochastic::NoiseKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: Rect,
    pub family: FamilySpec,
    pub levels: Vec<usize>,
    pub final_time: f64,
    /// One step for every level, or one per level.
    pub dts: Vec<f64>,
    pub noise_kind: NoiseKind,
    pub rho: f64,
    pub modes: usize,
    pub reaction: Reaction,
    pub treatment: ReactionTreatment,
    pub c: f64,
    pub wave_rhos: Vec<f64>,
    pub tracking_lag: f64,
    pub realizations: usize,
    pub realization: u64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub snapshot_times: Vec<f64>,
    pub tolerance: f64,
    pub stabilization: f64,
    pub write_paths: bool,
    pub full_scale: bool,
}

const KEYS: &[&str] = &[
    "domain.x0",
    "domain.x1",
    "domain.y0",
    "domain.y1",
    "mesh.family",
    "mesh.levels",
    "mesh.distortion",
    "time.final",
    "time.dt",
    "noise.kind",
    "noise.rho",
    "noise.modes",
    "reaction.kind",
    "reaction.treatment",
    "wave.c",
    "wave.rhos",
    "wave.tracking_lag",
    "run.realizations",
    "run.realization",
    "run.seed",
    "run.full_scale",
    "output.dir",
    "output.snapshot_times",
    "output.paths",
    "solver.tolerance",
    "solver.stabilization",
];

impl RunConfig {
    /// Desk-scale defaults.
    pub fn desk() -> Self {
        RunConfig {
            domain: Rect::centered_square(5.0),
            family: FamilySpec::Triangular,
            levels: vec![16, 32, 64],
            final_time: 1.0,
            dts: vec![0.001],
            noise_kind: NoiseKind::Linear,
            rho: 0.2,
            modes: 1,
            reaction: Reaction::AllenCahn,
            treatment: ReactionTreatment::Explicit,
            c: 0.3,
            wave_rhos: vec![0.0, 1.0, 5.0, 10.0],
            tracking_lag: 0.1,
            realizations: 20,
            realization: 0,
            seed: 0,
            output_dir: PathBuf::from("out"),
            snapshot_times: Vec::new(),
            tolerance: 1e-10,
            stabilization: std::f64::consts::SQRT_2,
            write_paths: false,
            full_scale: false,
        }
    }

    /// 100 realizations on four triangular levels, with the time steps
    /// paired to levels in the order the reference study lists them.
    pub fn full_scale() -> Self {
        RunConfig {
            levels: vec![16, 32, 64, 128],
            dts: vec![0.0001, 0.00025, 0.001, 0.00125],
            realizations: 100,
            full_scale: true,
            ..RunConfig::desk()
        }
    }

    /// Time step of level `i`.
    pub fn dt(&self, i: usize) -> f64 {
        if self.dts.len() == 1 {
            self.dts[0]
        } else {
            self.dts[i]
        }
    }

    pub fn finest_level(&self) -> usize {
        *self.levels.last().expect("validated non-empty")
    }

    pub fn dt_of_finest(&self) -> f64 {
        self.dt(self.levels.len() - 1)
    }

    /// Resolved settings as sorted `key = value` pairs.
    pub fn entries(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let (family, distortion) = match self.family {
            FamilySpec::Triangular => ("triangular", None),
            FamilySpec::Kershaw { distortion } => ("kershaw", Some(distortion)),
        };
        let mut out = vec![
            ("domain.x0", self.domain.x0.to_string()),
            ("domain.x1", self.domain.x1.to_string()),
            ("domain.y0", self.domain.y0.to_string()),
            ("domain.y1", self.domain.y1.to_string()),
            ("mesh.family", family.to_string()),
            (
                "mesh.levels",
                self.levels
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("time.final", self.final_time.to_string()),
            ("time.dt", list(&self.dts)),
            (
                "noise.kind",
                match self.noise_kind {
                    NoiseKind::Linear => "linear",
                    NoiseKind::Bistable => "bistable",
                }
                .to_string(),
            ),
            ("noise.rho", self.rho.to_string()),
            ("noise.modes", self.modes.to_string()),
            (
                "reaction.kind",
                match self.reaction {
                    Reaction::AllenCahn => "allen-cahn",
                    Reaction::Zero => "zero",
                }
                .to_string(),
            ),
            (
                "reaction.treatment",
                match self.treatment {
                    ReactionTreatment::Explicit => "explicit",
                    ReactionTreatment::Implicit => "implicit",
                }
                .to_string(),
            ),
            ("wave.c", self.c.to_string()),
            ("wave.rhos", list(&self.wave_rhos)),
            ("wave.tracking_lag", self.tracking_lag.to_string()),
            ("run.realizations", self.realizations.to_string()),
            ("run.realization", self.realization.to_string()),
            ("run.seed", self.seed.to_string()),
            ("run.full_scale", self.full_scale.to_string()),
            ("output.snapshot_times", list(&self.snapshot_times)),
            ("output.paths", self.write_paths.to_string()),
            ("solver.tolerance", self.tolerance.to_string()),
            ("solver.stabilization", self.stabilization.to_string()),
        ];
        if let Some(d) = distortion {
            out.push(("mesh.distortion", d.to_string()));
        }
        let mut out: Vec<(String, String)> =
            out.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        out.sort();
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: &str| Err(CliError::invalid(key, format!("{key} {msg}")));
        if Rect::new(
            self.domain.x0,
            self.domain.x1,
            self.domain.y0,
            self.domain.y1,
        )
        .is_err()
        {
            return bad("domain.x0", "must describe a non-empty rectangle");
        }
        if let FamilySpec::Kershaw { distortion } = self.family {
            if !(0.0..1.0).contains(&distortion) {
                return bad("mesh.distortion", "must be in [0, 1)");
            }
            if self.levels.iter().any(|n| n % 2 != 0) {
                return bad("mesh.levels", "must be even for kershaw meshes");
            }
        }
        if self.levels.is_empty() {
            return bad("mesh.levels", "must list at least one level");
        }
        if self.levels.contains(&0) {
            return bad("mesh.levels", "must be ≥ 1");
        }
        if !(self.final_time > 0.0) || !self.final_time.is_finite() {
            return bad("time.final", "must be > 0");
        }
        if self.dts.is_empty() || self.dts.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return bad("time.dt", "must be > 0");
        }
        if self.dts.len() != 1 && self.dts.len() != self.levels.len() {
            return bad("time.dt", "must give one step or one per level");
        }
        for &dt in &self.dts {
            if sgrd_core::gdisc::steps_for(self.final_time, dt).is_err() {
                return Err(CliError::invalid(
                    "time.dt",
                    format!(
                        "time.dt {dt} does not divide time.final {}",
                        self.final_time
                    ),
                ));
            }
        }
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return bad("noise.rho", "must be ≥ 0");
        }
        if self.wave_rhos.is_empty()
            || self
                .wave_rhos
                .iter()
                .any(|&r| !(r >= 0.0) || !r.is_finite())
        {
            return bad("wave.rhos", "must be a non-empty list of values ≥ 0");
        }
        if self.modes == 0 {
            return bad("noise.modes", "must be ≥ 1");
        }
        if !self.c.is_finite() {
            return bad("wave.c", "must be finite");
        }
        for rho in std::iter::once(self.rho).chain(self.wave_rhos.iter().copied()) {
            if sgrd_core::exact::WaveParams::new(self.c, rho).is_err() {
                return bad("wave.c", "is too large for a real wave profile");
            }
        }
        if !(self.tracking_lag > 0.0) {
            return bad("wave.tracking_lag", "must be > 0");
        }
        if self.realizations == 0 {
            return bad("run.realizations", "must be ≥ 1");
        }
        if self
            .snapshot_times
            .iter()
            .any(|&t| !(0.0..=self.final_time).contains(&t))
        {
            return bad("output.snapshot_times", "must lie in [0, time.final]");
        }
        if !(self.tolerance > 0.0) || self.tolerance >= 1.0 {
            return bad("solver.tolerance", "must be in (0, 1)");
        }
        if !(self.stabilization >= 0.0) || !self.stabilization.is_finite() {
            return bad("solver.stabilization", "must be ≥ 0");
        }
        Ok(())
    }
}

fn split_lines(text: &str) -> Result<BTreeMap<String, (usize, String)>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(CliError::Parse {
                line: line_no,
                message: format!("unknown key `{key}`"),
            });
        }
        if map
            .insert(key.to_string(), (line_no, value.trim().to_string()))
            .is_some()
        {
            return Err(CliError::Parse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    Ok(map)
}

fn parse_value<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Parse {
        line,
        message: format!("{key}: cannot parse `{v}`"),
    })
}

fn parse_list<T: std::str::FromStr>(key: &str, line: usize, v: &str) -> Result<Vec<T>, CliError> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| parse_value(key, line, s.trim()))
        .collect()
}

/// Parses configuration text, applying defaults for missing keys.
///
/// `full_scale` selects the full-scale defaults; the `run.full_scale` key
/// does the same from inside the file.
pub fn parse_config(text: &str, full_scale: bool) -> Result<RunConfig, CliError> {
    let map = split_lines(text)?;
    let file_full = match map.get("run.full_scale") {
        Some((line, v)) => parse_value::<bool>("run.full_scale", *line, v)?,
        None => false,
    };
    let mut cfg = if full_scale || file_full {
        RunConfig::full_scale()
    } else {
        RunConfig::desk()
    };
    let mut distortion = 0.3;
    let mut family = "triangular".to_string();
    for (key, (line, v)) in &map {
        let (line, v) = (*line, v.as_str());
        let k = key.as_str();
        match k {
            "domain.x0" => cfg.domain.x0 = parse_value(k, line, v)?,
            "domain.x1" => cfg.domain.x1 = parse_value(k, line, v)?,
            "domain.y0" => cfg.domain.y0 = parse_value(k, line, v)?,
            "domain.y1" => cfg.domain.y1 = parse_value(k, line, v)?,
            "mesh.family" => family = v.to_string(),
            "mesh.levels" => cfg.levels = parse_list(k, line, v)?,
            "mesh.distortion" => distortion = parse_value(k, line, v)?,
            "time.final" => cfg.final_time = parse_value(k, line, v)?,
            "time.dt" => cfg.dts = parse_list(k, line, v)?,
            "noise.kind" => {
                cfg.noise_kind = match v {
                    "linear" => NoiseKind::Linear,
                    "bistable" => NoiseKind::Bistable,
                    _ => {
                        return Err(CliError::invalid(
                            k,
                            format!("noise.kind must be linear or bistable, got `{v}`"),
                        ))
                    }
                }
            }
            "noise.rho" => cfg.rho = parse_value(k, line, v)?,
            "noise.modes" => cfg.modes = parse_value(k, line, v)?,
            "reaction.kind" => {
                cfg.reaction = match v {
                    "allen-cahn" => Reaction::AllenCahn,
                    "zero" => Reaction::Zero,
                    _ => {
                        return Err(CliError::invalid(
                            k,
                            format!("reaction.kind must be allen-cahn or zero, got `{v}`"),
                        ))
                    }
                }
            }
            "reaction.treatment" => {
                cfg.treatment = match v {
                    "explicit" => ReactionTreatment::Explicit,
                    "implicit" => ReactionTreatment::Implicit,
                    _ => {
                        return Err(CliError::invalid(
                            k,
                            format!("reaction.treatment must be explicit or implicit, got `{v}`"),
                        ))
                    }
                }
            }
            "wave.c" => cfg.c = parse_value(k, line, v)?,
            "wave.rhos" => cfg.wave_rhos = parse_list(k, line, v)?,
            "wave.tracking_lag" => cfg.tracking_lag = parse_value(k, line, v)?,
            "run.realizations" => cfg.realizations = parse_value(k, line, v)?,
            "run.realization" => cfg.realization = parse_value(k, line, v)?,
            "run.seed" => cfg.seed = parse_value(k, line, v)?,
            "run.full_scale" => {}
            "output.dir" => cfg.output_dir = PathBuf::from(v),
            "output.snapshot_times" => cfg.snapshot_times = parse_list(k, line, v)?,
            "output.paths" => cfg.write_paths = parse_value(k, line, v)?,
            "solver.tolerance" => cfg.tolerance = parse_value(k, line, v)?,
            "solver.stabilization" => cfg.stabilization = parse_value(k, line, v)?,
            _ => unreachable!("keys are checked against KEYS"),
        }
    }
    cfg.family = match family.as_str() {
        "triangular" => FamilySpec::Triangular,
        "kershaw" => FamilySpec::Kershaw { distortion },
        other => {
            return Err(CliError::invalid(
                "mesh.family",
                format!("mesh.family must be triangular or kershaw, got `{other}`"),
            ))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
