//! Time stepping of the gradient scheme.
//!
//! Each step solves
//!
//! ```text
//! (M + δt A) v^(n+1) = M (v^(n) + δt S(v^(n)) + g(v^(n)) ξ^(n+1)) - δt C b^(n+1)
//! ```
//!
//! where `M` is the lumped cell mass, `A` the HMM stiffness on the unknowns,
//! `C` its coupling to the boundary faces, `b^(n+1)` the Dirichlet data at
//! `t_(n+1)` and `ξ^(n+1)` the noise increment field. `δt` is the largest
//! step of the grid, so `M + δt A` is factorized once and shared by every
//! step and every realization.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::exact::WaveParams;
use crate::gdisc::{DiscreteField, GradientDiscretisation};
use crate::sparse::{norm, pcg, residual, CsrMatrix, SpdSolver};
use crate::stochastic::{BrownianPath, NoiseModel, SpatialModes};

/// Reaction term `S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reaction {
    /// `S(v) = v - v³`
    AllenCahn,
    /// `S(v) = 0`
    Zero,
}

impl Reaction {
    pub fn eval(self, v: f64) -> f64 {
        match self {
            Reaction::AllenCahn => v - v * v * v,
            Reaction::Zero => 0.0,
        }
    }

    pub fn derivative(self, v: f64) -> f64 {
        match self {
            Reaction::AllenCahn => 1.0 - 3.0 * v * v,
            Reaction::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    /// Zero Dirichlet data.
    Homogeneous,
    /// Dirichlet data from the travelling wave, driven by the realized
    /// Brownian value of mode 0.
    ExactWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionTreatment {
    /// `S(v^(n))`: one linear solve per step.
    Explicit,
    /// `S(v^(n+1))`, resolved by Newton iterations.
    Implicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub reaction: Reaction,
    pub noise: NoiseModel,
    /// Initial data, and boundary data in [`BoundaryMode::ExactWave`].
    pub wave: WaveParams,
    pub boundary: BoundaryMode,
    pub treatment: ReactionTreatment,
    /// Relative residual required of every linear solve.
    pub tolerance: f64,
    /// Times at which the field is kept; each must be a grid point.
    pub snapshot_times: Vec<f64>,
    /// Record `|Π_D (v^(n+1) - v^(n))|_{D,⋆}` every step (one extra solve).
    pub record_dual_increments: bool,
    /// A realization aborts once `max |v|` exceeds this.
    pub overflow_limit: f64,
}

impl SchemeConfig {
    /// Allen-Cahn reaction, travelling-wave initial and boundary data.
    pub fn new(wave: WaveParams, noise: NoiseModel) -> Self {
        SchemeConfig {
            reaction: Reaction::AllenCahn,
            noise,
            wave,
            boundary: BoundaryMode::ExactWave,
            treatment: ReactionTreatment::Explicit,
            tolerance: 1e-10,
            snapshot_times: Vec::new(),
            record_dual_increments: false,
            overflow_limit: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(invalid("tolerance", "must be positive"));
        }
        if !(self.overflow_limit > 0.0) {
            return Err(invalid("overflow_limit", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub time: f64,
    /// `‖Π_D v^(n)‖_{L²}`
    pub l2_norm: f64,
    /// `‖∇_D v^(n)‖_{L²}`, boundary data included.
    pub gradient_norm: f64,
    /// `‖G_D^(n)‖_{L²}`
    pub noise_norm: f64,
    pub dual_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub field: DiscreteField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationResult {
    pub final_field: DiscreteField,
    pub snapshots: Vec<Snapshot>,
    /// One entry per step, for `n = 1..=N`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub initial_l2_norm: f64,
    /// `B_0(T)` of the driving path.
    pub final_brownian: f64,
}

impl RealizationResult {
    /// `max_n ‖Π_D v^(n)‖²`, initial state included.
    pub fn max_energy(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.l2_norm * d.l2_norm)
            .fold(self.initial_l2_norm * self.initial_l2_norm, f64::max)
    }

    pub fn max_noise_norm(&self) -> f64 {
        self.diagnostics
            .iter()
            .map(|d| d.noise_norm)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub field: DiscreteField,
    pub relative_residual: f64,
}

const MAX_NEWTON_ITERATIONS: usize = 25;

/// A configured scheme on one discretisation, with `M + δt A` factorized.
#[derive(Debug)]
pub struct Stepper<'a> {
    gd: &'a GradientDiscretisation,
    config: SchemeConfig,
    dt: f64,
    system: SpdSolver,
    modes: SpatialModes,
}

impl<'a> Stepper<'a> {
    pub fn new(gd: &'a GradientDiscretisation, config: SchemeConfig) -> Result<Self> {
        config.validate()?;
        let dt = gd.time_grid().max_step();
        let matrix = gd.stiffness().scaled_plus_diagonal(dt, gd.mass());
        let system = SpdSolver::auto(matrix, config.tolerance)?;
        let modes = SpatialModes::uniform(gd.num_cells());
        Ok(Stepper {
            gd,
            config,
            dt,
            system,
            modes,
        })
    }

    /// Replaces the default single spatially constant noise mode.
    pub fn with_modes(mut self, modes: SpatialModes) -> Result<Self> {
        if modes.num_cells() != self.gd.num_cells() {
            return Err(Error::ShapeMismatch {
                context: "spatial modes",
                expected: self.gd.num_cells(),
                actual: modes.num_cells(),
            });
        }
        self.modes = modes;
        Ok(self)
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.config
    }

    pub fn discretisation(&self) -> &GradientDiscretisation {
        self.gd
    }

    /// `δt_D`
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `M + δt A`.
    pub fn system_matrix(&self) -> &CsrMatrix {
        self.system.matrix()
    }

    /// Dirichlet data at time `t` given the Brownian value `b_t`.
    pub fn boundary_at(&self, t: f64, b_t: f64) -> Vec<f64> {
        match self.config.boundary {
            BoundaryMode::Homogeneous => vec![0.0; self.gd.num_boundary_faces()],
            BoundaryMode::ExactWave => self
                .gd
                .boundary_values(|p| self.config.wave.value(t, p, b_t)),
        }
    }

    /// `J_D` of the wave at `t = 0`, with the boundary data of `t = 0`.
    pub fn initial_field(&self) -> DiscreteField {
        let wave = self.config.wave;
        let mut field = self.gd.interpolate(|p| wave.value(0.0, p, 0.0), 0.0);
        field.boundary = self.boundary_at(0.0, 0.0);
        field
    }

    /// Right-hand side without the reaction term.
    fn base_rhs(&self, v: &DiscreteField, xi: &[f64], boundary_next: &[f64]) -> Vec<f64> {
        let nc = self.gd.num_cells();
        let mass = self.gd.mass();
        let mut rhs = self.gd.coupling().mul_vec(boundary_next);
        rhs.iter_mut().for_each(|r| *r *= -self.dt);
        for k in 0..nc {
            let vk = v.values[k];
            rhs[k] += mass[k] * (vk + self.config.noise.g(vk) * xi[k]);
        }
        rhs
    }

    /// One step with a cellwise noise field `xi`.
    pub fn step(
        &self,
        v: &DiscreteField,
        xi: &[f64],
        boundary_next: Vec<f64>,
        t_next: f64,
    ) -> Result<StepOutput> {
        self.gd.check_field(v)?;
        let nc = self.gd.num_cells();
        if xi.len() != nc {
            return Err(Error::ShapeMismatch {
                context: "noise field",
                expected: nc,
                actual: xi.len(),
            });
        }
        if boundary_next.len() != self.gd.num_boundary_faces() {
            return Err(Error::ShapeMismatch {
                context: "boundary values",
                expected: self.gd.num_boundary_faces(),
                actual: boundary_next.len(),
            });
        }
        if v.values[..nc].iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { step: 0 });
        }
        let mut rhs = self.base_rhs(v, xi, &boundary_next);
        let mass = self.gd.mass();
        let reaction = self.config.reaction;
        for k in 0..nc {
            rhs[k] += mass[k] * self.dt * reaction.eval(v.values[k]);
        }
        let mut values = self.system.solve(&rhs)?;
        let mut relative_residual = relative(&residual(self.system.matrix(), &values, &rhs), &rhs);

        if self.config.treatment == ReactionTreatment::Implicit {
            let base = self.base_rhs(v, xi, &boundary_next);
            (values, relative_residual) = self.newton(values, &base)?;
        }

        Ok(StepOutput {
            field: DiscreteField {
                values,
                boundary: boundary_next,
                time: t_next,
            },
            relative_residual,
        })
    }

    /// One step with a scalar increment (single uniform mode).
    pub fn step_scalar(
        &self,
        v: &DiscreteField,
        db: f64,
        boundary_next: Vec<f64>,
        t_next: f64,
    ) -> Result<StepOutput> {
        let xi = vec![db; self.gd.num_cells()];
        self.step(v, &xi, boundary_next, t_next)
    }

    // Solves (M + δt A) v - δt M S(v) = base.
    fn newton(&self, mut v: Vec<f64>, base: &[f64]) -> Result<(Vec<f64>, f64)> {
        let nc = self.gd.num_cells();
        let mass = self.gd.mass();
        let reaction = self.config.reaction;
        let system = self.system.matrix();
        let residual_of = |v: &[f64]| {
            let mut f = system.mul_vec(v);
            for k in 0..nc {
                f[k] -= self.dt * mass[k] * reaction.eval(v[k]);
            }
            f.iter_mut().zip(base).for_each(|(fi, b)| *fi = b - *fi);
            f
        };
        let mut r = residual_of(&v);
        let mut rel = relative(&r, base);
        for it in 0..MAX_NEWTON_ITERATIONS {
            if rel <= self.config.tolerance {
                return Ok((v, rel));
            }
            let mut shift = vec![0.0; v.len()];
            for k in 0..nc {
                shift[k] = -self.dt * mass[k] * reaction.derivative(v[k]);
            }
            let jacobian = system.scaled_plus_diagonal(1.0, &shift);
            let inv_diag: Vec<f64> = jacobian.diagonal().iter().map(|d| 1.0 / d).collect();
            let inner_tol = (0.1 * self.config.tolerance * norm(base)
                / norm(&r).max(f64::MIN_POSITIVE))
            .clamp(1e-14, 1e-2);
            let dv =
                pcg(&jacobian, &inv_diag, &r, None, inner_tol, 20 * v.len()).map_err(|_| {
                    Error::NotConverged {
                        residual: rel,
                        iterations: it,
                    }
                })?;
            v.iter_mut().zip(&dv).for_each(|(x, d)| *x += d);
            r = residual_of(&v);
            rel = relative(&r, base);
        }
        if rel <= self.config.tolerance {
            Ok((v, rel))
        } else {
            Err(Error::NotConverged {
                residual: rel,
                iterations: MAX_NEWTON_ITERATIONS,
            })
        }
    }

    fn snapshot_steps(&self) -> Result<Vec<usize>> {
        let grid = self.gd.time_grid();
        self.config
            .snapshot_times
            .iter()
            .map(|&t| {
                grid.index_of(t)
                    .ok_or_else(|| invalid("snapshot_times", format!("{t} is not a grid time")))
            })
            .collect()
    }

    /// Runs the scheme from `J_D` of the initial data along `path`.
    pub fn run_realization(&self, path: &BrownianPath) -> Result<RealizationResult> {
        self.run_from(self.initial_field(), path)
    }

    pub fn run_from(
        &self,
        initial: DiscreteField,
        path: &BrownianPath,
    ) -> Result<RealizationResult> {
        let grid = self.gd.time_grid();
        if path.steps() != grid.steps() {
            return Err(Error::ShapeMismatch {
                context: "path steps",
                expected: grid.steps(),
                actual: path.steps(),
            });
        }
        if path
            .grid()
            .times()
            .iter()
            .zip(grid.times())
            .any(|(a, b)| (a - b).abs() > 1e-12 * grid.final_time())
        {
            return Err(invalid("path", "time grid differs from the discretisation"));
        }
        let snapshot_steps = self.snapshot_steps()?;
        let nc = self.gd.num_cells();
        let noise = self.config.noise;

        let mut v = initial;
        let initial_l2_norm = self.gd.cell_l2_norm(&v.values[..nc]);
        let mut snapshots = Vec::new();
        if snapshot_steps.contains(&0) {
            snapshots.push(Snapshot {
                step: 0,
                time: 0.0,
                field: v.clone(),
            });
        }
        let mut g_acc = vec![0.0; nc];
        let mut b0 = 0.0;
        let mut diagnostics = Vec::with_capacity(grid.steps());
        for n in 0..grid.steps() {
            let step = n + 1;
            let xi = self.modes.noise_field(path, n);
            b0 += path.increment(n, 0);
            let t_next = grid.time(step);
            let boundary = self.boundary_at(t_next, b0);
            if v.values[..nc].iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { step });
            }
            for k in 0..nc {
                g_acc[k] += noise.g(v.values[k]) * xi[k];
            }
            let out = self
                .step(&v, &xi, boundary, t_next)
                .map_err(|e| Error::AtStep {
                    step,
                    source: Box::new(e),
                })?;
            let max_abs = out.field.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !max_abs.is_finite() {
                return Err(Error::NonFinite { step });
            }
            if max_abs > self.config.overflow_limit {
                return Err(Error::Overflow { step, max_abs });
            }
            let dual_increment = if self.config.record_dual_increments {
                let diff: Vec<f64> = (0..nc).map(|k| out.field.values[k] - v.values[k]).collect();
                Some(self.gd.dual_norm(&diff)?)
            } else {
                None
            };
            v = out.field;
            diagnostics.push(StepDiagnostics {
                time: t_next,
                l2_norm: self.gd.cell_l2_norm(&v.values[..nc]),
                gradient_norm: self.gd.gradient_norm(&v),
                noise_norm: self.gd.cell_l2_norm(&g_acc),
                dual_increment,
            });
            if snapshot_steps.contains(&step) {
                snapshots.push(Snapshot {
                    step,
                    time: t_next,
                    field: v.clone(),
                });
            }
        }
        Ok(RealizationResult {
            final_field: v,
            snapshots,
            diagnostics,
            initial_l2_norm,
            final_brownian: b0,
        })
    }
}

fn relative(r: &[f64], b: &[f64]) -> f64 {
    let bn = norm(b);
    if bn == 0.0 {
        norm(r)
    } else {
        norm(r) / bn
    }
}

/// Snapshot CSV with columns `cell_id,x_K,y_K,value`.
pub fn write_snapshot_csv<W: Write>(
    gd: &GradientDiscretisation,
    field: &DiscreteField,
    mut w: W,
) -> Result<()> {
    writeln!(w, "cell_id,x_K,y_K,value")?;
    for (k, (cell, v)) in gd
        .mesh()
        .cells()
        .iter()
        .zip(gd.reconstruct_function(field))
        .enumerate()
    {
        writeln!(w, "{k},{},{},{v}", cell.centroid[0], cell.centroid[1])?;
    }
    Ok(())
}
