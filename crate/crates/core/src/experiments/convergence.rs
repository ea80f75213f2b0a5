use std::io::Write;

use super::{error_terms, mean_relative_errors, rate, ErrorTerms, FamilySpec, MeshSpec, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::gdisc::{steps_for, GradientDiscretisation, HmmOptions, TimeGrid};
use crate::par::Execution;
use crate::solver::{ReactionTreatment, SchemeConfig, Stepper};
use crate::stochastic::{sample_path, NoiseModel};

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceConfig {
    pub mesh: MeshSpec,
    /// Mesh parameter `n` of each level, coarsest first.
    pub levels: Vec<usize>,
    /// Time step of each level.
    pub dts: Vec<f64>,
    pub final_time: f64,
    /// Wave speed of the reference solution.
    pub c: f64,
    pub noise: NoiseSpec,
    pub realizations: usize,
    /// Index of the first realization; disjoint batches use disjoint ranges.
    pub first_realization: u64,
    pub seed: u64,
    pub treatment: ReactionTreatment,
    pub tolerance: f64,
    pub hmm: HmmOptions,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            mesh: MeshSpec::square(FamilySpec::Triangular),
            levels: vec![16, 32, 64],
            dts: vec![0.001; 3],
            final_time: 1.0,
            c: 0.3,
            noise: NoiseSpec::scalar(NoiseModel::linear(0.2)),
            realizations: 20,
            first_realization: 0,
            seed: 0,
            treatment: ReactionTreatment::Explicit,
            tolerance: 1e-10,
            hmm: HmmOptions::default(),
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(invalid("mesh.levels", "need at least one level"));
        }
        if self.levels.contains(&0) {
            return Err(invalid("mesh.levels", "levels must be >= 1"));
        }
        if self.dts.len() != self.levels.len() {
            return Err(invalid(
                "time.dt",
                format!("{} steps for {} levels", self.dts.len(), self.levels.len()),
            ));
        }
        if self.realizations == 0 {
            return Err(invalid("realizations", "must be >= 1"));
        }
        self.noise.validate()?;
        self.noise.wave(self.c)?;
        for &dt in &self.dts {
            steps_for(self.final_time, dt)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelReport {
    /// 1-based level index.
    pub level: usize,
    pub n: usize,
    pub h: f64,
    pub dt: f64,
    pub realizations: usize,
    pub err_v: f64,
    pub rate_v: Option<f64>,
    pub err_grad: f64,
    pub rate_grad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<LevelReport>,
    /// Realizations that aborted on some level and were left out.
    pub failures: usize,
    pub noise: NoiseSpec,
    pub final_time: f64,
    pub c: f64,
    pub seed: u64,
    /// `terms[r][l]` for every kept realization `r` and level `l`.
    pub terms: Vec<Vec<ErrorTerms>>,
}

impl ConvergenceReport {
    /// CSV with columns `level,h,dt,realizations,err_v,rate_v,err_grad,rate_grad`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "level,h,dt,realizations,err_v,rate_v,err_grad,rate_grad")?;
        let opt = |r: Option<f64>| r.map_or_else(String::new, |x| x.to_string());
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.level,
                r.h,
                r.dt,
                r.realizations,
                r.err_v,
                opt(r.rate_v),
                r.err_grad,
                opt(r.rate_grad)
            )?;
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Monte Carlo strong errors against the travelling wave on every level.
///
/// Each realization samples one Brownian path on the common refinement of all
/// time grids and sums it down to each level, so every level sees the same
/// `B(t)` and the same reference solution.
pub fn convergence_study(cfg: &ConvergenceConfig, exec: Execution) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let wave = cfg.noise.wave(cfg.c)?;
    let steps: Vec<usize> = cfg
        .dts
        .iter()
        .map(|&dt| steps_for(cfg.final_time, dt))
        .collect::<Result<_>>()?;
    let fine_steps = steps.iter().fold(1, |l, &s| l / gcd(l, s) * s);
    let fine_grid = TimeGrid::uniform_steps(cfg.final_time, fine_steps)?;
    let weights = cfg.noise.weights();

    let discs: Vec<GradientDiscretisation> = cfg
        .levels
        .iter()
        .zip(&steps)
        .map(|(&n, &s)| {
            cfg.mesh
                .discretise(n, TimeGrid::uniform_steps(cfg.final_time, s)?, cfg.hmm)
        })
        .collect::<Result<_>>()?;
    let steppers: Vec<Stepper> = discs
        .iter()
        .map(|gd| {
            let mut scheme = SchemeConfig::new(wave, cfg.noise.model);
            scheme.treatment = cfg.treatment;
            scheme.tolerance = cfg.tolerance;
            let modes = cfg.noise.spatial_modes(gd.mesh(), cfg.mesh.rect);
            Stepper::new(gd, scheme)?.with_modes(modes)
        })
        .collect::<Result<_>>()?;

    let run = |r: usize| -> Result<Vec<ErrorTerms>> {
        let index = cfg.first_realization + r as u64;
        let fine = sample_path(&fine_grid, &weights, cfg.seed, index)?;
        steppers
            .iter()
            .zip(&steps)
            .map(|(st, &s)| {
                let path = fine.coarsen(fine_steps / s)?;
                let res = st.run_realization(&path)?;
                Ok(error_terms(
                    st.discretisation(),
                    &res.final_field,
                    &wave,
                    cfg.final_time,
                    res.final_brownian,
                ))
            })
            .collect()
    };
    let outcomes = exec.map_indexed(cfg.realizations, run);

    let total = outcomes.len();
    let mut terms = Vec::with_capacity(total);
    let mut first_error = None;
    for o in outcomes {
        match o {
            Ok(t) => terms.push(t),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let failed = total - terms.len();
    if failed * 20 > total || terms.is_empty() {
        return Err(match (total, first_error) {
            (1, Some(e)) => e,
            _ => Error::TooManyFailures { failed, total },
        });
    }

    let per_level: Vec<(f64, f64)> = (0..cfg.levels.len())
        .map(|l| {
            let col: Vec<ErrorTerms> = terms.iter().map(|t| t[l]).collect();
            mean_relative_errors(&col)
        })
        .collect();
    let sizes: Vec<f64> = discs.iter().map(|gd| gd.mesh().size()).collect();
    let rates = |errors: Vec<f64>| -> Vec<Option<f64>> {
        let mut out = vec![None];
        match rate(&errors, &sizes) {
            Ok(r) => out.extend(r.into_iter().map(Some)),
            Err(_) => out.extend(std::iter::repeat_n(None, errors.len() - 1)),
        }
        out
    };
    let rates_v = rates(per_level.iter().map(|e| e.0).collect());
    let rates_g = rates(per_level.iter().map(|e| e.1).collect());

    let rows = (0..cfg.levels.len())
        .map(|l| LevelReport {
            level: l + 1,
            n: cfg.levels[l],
            h: sizes[l],
            dt: cfg.dts[l],
            realizations: terms.len(),
            err_v: per_level[l].0,
            rate_v: rates_v[l],
            err_grad: per_level[l].1,
            rate_grad: rates_g[l],
        })
        .collect();
    Ok(ConvergenceReport {
        rows,
        failures: failed,
        noise: cfg.noise,
        final_time: cfg.final_time,
        c: cfg.c,
        seed: cfg.seed,
        terms,
    })
}
