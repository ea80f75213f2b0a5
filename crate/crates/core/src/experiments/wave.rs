use std::f64::consts::SQRT_2;
use std::io::Write;

use super::{FamilySpec, MeshSpec, NoiseSpec};
use crate::error::{invalid, Result};
use crate::gdisc::{steps_for, DiscreteField, GradientDiscretisation, HmmOptions, TimeGrid};
use crate::par::Execution;
use crate::solver::{ReactionTreatment, SchemeConfig, Snapshot, Stepper};
use crate::stochastic::{sample_path, NoiseKind, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveConfig {
    pub mesh: MeshSpec,
    pub n: usize,
    pub dt: f64,
    pub final_time: f64,
    pub c: f64,
    pub kind: NoiseKind,
    pub rhos: Vec<f64>,
    pub modes: usize,
    /// Report times; the final time when empty.
    pub snapshot_times: Vec<f64>,
    /// Velocities compare each report time `t` with `t - tracking_lag`.
    pub tracking_lag: f64,
    pub seed: u64,
    pub realization: u64,
    pub treatment: ReactionTreatment,
    pub tolerance: f64,
    pub hmm: HmmOptions,
}

impl Default for WaveConfig {
    fn default() -> Self {
        WaveConfig {
            mesh: MeshSpec::square(FamilySpec::Triangular),
            n: 64,
            dt: 0.001,
            final_time: 1.0,
            c: 0.3,
            kind: NoiseKind::Linear,
            rhos: vec![0.0, 1.0, 5.0, 10.0],
            modes: 1,
            snapshot_times: Vec::new(),
            tracking_lag: 0.1,
            seed: 0,
            realization: 0,
            treatment: ReactionTreatment::Explicit,
            tolerance: 1e-10,
            hmm: HmmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveSample {
    pub rho: f64,
    pub time: f64,
    /// `max_K |v_K|`
    pub amplitude: f64,
    /// Signed arc length along `x = y` from the origin, ascending.
    pub fronts: Vec<f64>,
    /// One per front, matched to the nearest front one lag earlier; empty
    /// when there was no earlier front.
    pub velocities: Vec<f64>,
    pub field: DiscreteField,
}

impl WaveSample {
    pub fn front_count(&self) -> usize {
        self.fronts.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveReport {
    pub kind: NoiseKind,
    pub rows: Vec<WaveSample>,
}

impl WaveReport {
    /// CSV with columns
    /// `rho,time,amplitude,front_count,front_positions,front_velocities`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "rho,time,amplitude,front_count,front_positions,front_velocities"
        )?;
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.rho,
                r.time,
                r.amplitude,
                r.fronts.len(),
                join(&r.fronts),
                join(&r.velocities)
            )?;
        }
        Ok(())
    }
}

/// `Π_D v` along the diagonal `x = y`, as `(s, value)` with `s` the signed arc
/// length from the rectangle centre.
///
/// Each sample averages the cells just left and right of the line, since on
/// the triangular family the diagonal runs along cell edges.
pub fn diagonal_profile(gd: &GradientDiscretisation, field: &DiscreteField) -> Vec<(f64, f64)> {
    let mesh = gd.mesh();
    let rect = mesh.domain().unwrap_or_else(|| bounding_rect(gd));
    let (cx, cy) = (0.5 * (rect.x0 + rect.x1), 0.5 * (rect.y0 + rect.y1));
    let lo = (rect.x0 - cx).max(rect.y0 - cy);
    let hi = (rect.x1 - cx).min(rect.y1 - cy);
    let h = mesh.size().min(hi - lo);
    let count = ((hi - lo) / (0.25 * h)).ceil() as usize;
    let step = (hi - lo) / count as f64;
    let eps = 1e-3 * h;
    let values = gd.reconstruct_function(field);
    (0..count)
        .filter_map(|i| {
            let t = lo + (i as f64 + 0.5) * step;
            let (x, y) = (cx + t, cy + t);
            let a = mesh.locate([x - eps, y + eps]);
            let b = mesh.locate([x + eps, y - eps]);
            let v = match (a, b) {
                (Some(a), Some(b)) => 0.5 * (values[a] + values[b]),
                (Some(k), None) | (None, Some(k)) => values[k],
                (None, None) => return None,
            };
            Some((SQRT_2 * t, v))
        })
        .collect()
}

fn bounding_rect(gd: &GradientDiscretisation) -> crate::mesh::Rect {
    let vs = gd.mesh().vertices();
    let fold =
        |f: fn(f64, f64) -> f64, init: f64, i: usize| vs.iter().fold(init, |m, p| f(m, p[i]));
    crate::mesh::Rect {
        x0: fold(f64::min, f64::INFINITY, 0),
        x1: fold(f64::max, f64::NEG_INFINITY, 0),
        y0: fold(f64::min, f64::INFINITY, 1),
        y1: fold(f64::max, f64::NEG_INFINITY, 1),
    }
}

/// Crossings of `threshold` by the sampled profile, linearly interpolated.
pub fn front_positions(profile: &[(f64, f64)], threshold: f64) -> Vec<f64> {
    let mut fronts = Vec::new();
    for w in profile.windows(2) {
        let (s0, v0) = (w[0].0, w[0].1 - threshold);
        let (s1, v1) = (w[1].0, w[1].1 - threshold);
        if v0 == 0.0 {
            if fronts.last() != Some(&s0) {
                fronts.push(s0);
            }
        } else if v0 * v1 < 0.0 {
            fronts.push(s0 + (s1 - s0) * v0 / (v0 - v1));
        }
    }
    if let Some(&(s, v)) = profile.last() {
        if v == threshold && fronts.last() != Some(&s) {
            fronts.push(s);
        }
    }
    fronts
}

/// Fronts of a field at the midrange `(max + min) / 2` of its cell values.
fn fronts_of(gd: &GradientDiscretisation, field: &DiscreteField) -> Vec<f64> {
    let values = gd.reconstruct_function(field);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi > lo) {
        return Vec::new();
    }
    front_positions(&diagonal_profile(gd, field), 0.5 * (hi + lo))
}

fn velocities(now: &[f64], before: &[f64], lag: f64) -> Vec<f64> {
    if before.is_empty() {
        return Vec::new();
    }
    now.iter()
        .map(|&s| {
            let prev = before
                .iter()
                .copied()
                .min_by(|a, b| (a - s).abs().total_cmp(&(b - s).abs()))
                .expect("non-empty");
            (s - prev) / lag
        })
        .collect()
}

/// One seeded realization per `ρ`, all driven by the same Brownian path.
pub fn wave_dynamics(cfg: &WaveConfig, exec: Execution) -> Result<WaveReport> {
    if cfg.rhos.is_empty() {
        return Err(invalid("noise.rho", "need at least one intensity"));
    }
    if !(cfg.tracking_lag > 0.0) {
        return Err(invalid("wave.tracking_lag", "must be positive"));
    }
    let steps = steps_for(cfg.final_time, cfg.dt)?;
    let grid = TimeGrid::uniform_steps(cfg.final_time, steps)?;
    let report_times = if cfg.snapshot_times.is_empty() {
        vec![cfg.final_time]
    } else {
        cfg.snapshot_times.clone()
    };
    let mut tracked = Vec::new();
    let mut pairs = Vec::new();
    for &t in &report_times {
        let now = grid
            .index_of(t)
            .ok_or_else(|| invalid("snapshot_times", format!("{t} is not a grid time")))?;
        let lag = grid
            .index_of(t - cfg.tracking_lag)
            .filter(|_| t >= cfg.tracking_lag);
        pairs.push((now, lag));
        tracked.push(now);
        tracked.extend(lag);
    }
    tracked.sort_unstable();
    tracked.dedup();
    let snapshot_times: Vec<f64> = tracked.iter().map(|&i| grid.time(i)).collect();

    let noises: Vec<NoiseSpec> = cfg
        .rhos
        .iter()
        .map(|&rho| {
            let spec = NoiseSpec {
                model: NoiseModel::new(cfg.kind, rho)?,
                modes: cfg.modes,
            };
            spec.validate()?;
            spec.wave(cfg.c)?;
            Ok(spec)
        })
        .collect::<Result<_>>()?;

    let gd = cfg.mesh.discretise(cfg.n, grid.clone(), cfg.hmm)?;
    let weights = noises[0].weights();
    let path = sample_path(&grid, &weights, cfg.seed, cfg.realization)?;
    let modes = noises[0].spatial_modes(gd.mesh(), cfg.mesh.rect);

    let run_one = |noise: NoiseSpec| -> Result<Vec<WaveSample>> {
        let mut scheme = SchemeConfig::new(noise.wave(cfg.c)?, noise.model);
        scheme.treatment = cfg.treatment;
        scheme.tolerance = cfg.tolerance;
        scheme.snapshot_times = snapshot_times.clone();
        let stepper = Stepper::new(&gd, scheme)?.with_modes(modes.clone())?;
        let result = stepper.run_realization(&path)?;
        let find = |step: usize| -> &Snapshot {
            result
                .snapshots
                .iter()
                .find(|s| s.step == step)
                .expect("tracked step was captured")
        };
        Ok(pairs
            .iter()
            .map(|&(now, lag)| {
                let snap = find(now);
                let fronts = fronts_of(&gd, &snap.field);
                let velocities = match lag {
                    Some(l) => {
                        let before = fronts_of(&gd, &find(l).field);
                        velocities(&fronts, &before, snap.time - grid.time(l))
                    }
                    None => Vec::new(),
                };
                WaveSample {
                    rho: noise.model.rho,
                    time: snap.time,
                    amplitude: gd
                        .reconstruct_function(&snap.field)
                        .iter()
                        .fold(0.0, |m, v| m.max(v.abs())),
                    fronts,
                    velocities,
                    field: snap.field.clone(),
                }
            })
            .collect())
    };
    let run = |i: usize| -> Result<Vec<WaveSample>> {
        run_one(noises[i]).map_err(|e| e.context(format!("rho = {}", noises[i].model.rho)))
    };
    let mut rows = Vec::new();
    for r in exec.map_indexed(cfg.rhos.len(), run) {
        rows.extend(r?);
    }
    Ok(WaveReport {
        kind: cfg.kind,
        rows,
    })
}
