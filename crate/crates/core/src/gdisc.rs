//! Hybrid mimetic mixed (HMM) gradient discretisation.
//!
//! Unknowns live on cells and on interior faces. Boundary faces carry
//! prescribed Dirichlet values in a sidecar vector, so the homogeneous space
//! of the scheme is the special case of a zero sidecar. The reconstructed
//! function is piecewise constant on cells; the reconstructed gradient is
//! piecewise constant on the subcells `D_{K,σ}` (the triangle spanned by the
//! cell centroid and the face `σ`):
//!
//! ```text
//! ∇_K v        = 1/|K| Σ_σ |σ| (v_σ - v_K) n_{K,σ}
//! R_{K,σ}(v)   = v_σ - v_K - ∇_K v · (x_σ - x_K)
//! ∇_D v|D_{K,σ} = ∇_K v + (α / d_{K,σ}) R_{K,σ}(v) n_{K,σ}
//! ```
//!
//! with `α = √d` by default and `d_{K,σ}` the distance from `x_K` to the
//! hyperplane of `σ`.

use std::sync::{Arc, OnceLock};

use crate::error::{invalid, Error, Result};
use crate::mesh::{dot, sub, Mesh, Point};
use crate::sparse::{CsrMatrix, SpdSolver};

/// Strictly increasing time instants `0 = t_0 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("time_grid", "needs at least one step"));
        }
        if times[0] != 0.0 {
            return Err(invalid("time_grid", "must start at t = 0"));
        }
        if times
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(invalid("time_grid", "must be strictly increasing"));
        }
        Ok(TimeGrid { times })
    }

    /// `steps` equal steps over `[0, t_final]`.
    pub fn uniform_steps(t_final: f64, steps: usize) -> Result<Self> {
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(invalid("t_final", "must be positive"));
        }
        if steps == 0 {
            return Err(invalid("steps", "must be at least 1"));
        }
        let times = (0..=steps)
            .map(|n| t_final * n as f64 / steps as f64)
            .collect();
        Ok(TimeGrid { times })
    }

    /// Uniform grid with step `dt`, which must divide `t_final`.
    pub fn uniform(t_final: f64, dt: f64) -> Result<Self> {
        TimeGrid::uniform_steps(t_final, steps_for(t_final, dt)?)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of steps `N`.
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        self.times[n]
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// `t_{n+1} - t_n`.
    pub fn step_size(&self, n: usize) -> f64 {
        self.times[n + 1] - self.times[n]
    }

    /// `δt_D`, the largest step.
    pub fn max_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Index of the grid point within `1e-9 T` of `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * self.final_time();
        self.times.iter().position(|&s| (s - t).abs() <= tol)
    }
}

/// Number of steps of size `dt` in `[0, t_final]`, rejecting a `dt` that
/// does not divide `t_final`.
pub fn steps_for(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid("dt", "must be positive"));
    }
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(invalid("t_final", "must be positive"));
    }
    let steps = (t_final / dt).round();
    if steps < 1.0 || (steps * dt - t_final).abs() > 1e-9 * t_final {
        return Err(invalid("dt", format!("{dt} does not divide T = {t_final}")));
    }
    Ok(steps as usize)
}

/// Tuning knobs for the HMM gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmOptions {
    /// Stabilization weight `α` in `α / d_{K,σ}`. Zero disables the
    /// stabilization, which leaves the stiffness only semi-definite.
    pub stabilization: f64,
}

impl Default for HmmOptions {
    fn default() -> Self {
        HmmOptions {
            stabilization: std::f64::consts::SQRT_2,
        }
    }
}

/// Where a local degree of freedom lives in the global layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dof {
    /// Index into the unknown vector.
    Free(usize),
    /// Index into the boundary sidecar.
    Boundary(usize),
}

/// The subcell `D_{K,σ}` and its constant gradient stencil.
#[derive(Debug, Clone)]
pub struct Subcell {
    pub face: usize,
    pub measure: f64,
    pub centroid: Point,
    /// Distance from the cell centroid to the face line.
    pub distance: f64,
    /// Gradient coefficient of each local dof (cell first, then faces).
    pub stencil: Vec<Point>,
}

#[derive(Debug, Clone)]
struct CellOperator {
    dofs: Vec<Dof>,
    subcells: Vec<Subcell>,
}

/// Coefficients over the unknown layout plus the boundary-face sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    pub values: Vec<f64>,
    pub boundary: Vec<f64>,
    pub time: f64,
}

/// The assembled HMM discretisation of one mesh and time grid.
pub struct GradientDiscretisation {
    mesh: Arc<Mesh>,
    time_grid: TimeGrid,
    options: HmmOptions,
    cell_ops: Vec<CellOperator>,
    face_dofs: Vec<Dof>,
    boundary_faces: Vec<usize>,
    num_unknowns: usize,
    stiffness: CsrMatrix,
    coupling: CsrMatrix,
    mass: Vec<f64>,
    stiffness_solver: OnceLock<SpdSolver>,
}

impl std::fmt::Debug for GradientDiscretisation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GradientDiscretisation")
            .field("cells", &self.mesh.num_cells())
            .field("unknowns", &self.num_unknowns)
            .field("boundary_faces", &self.boundary_faces.len())
            .field("steps", &self.time_grid.steps())
            .finish()
    }
}

/// Relative tolerance of the solves behind the dual norms.
const DUAL_NORM_TOLERANCE: f64 = 1e-12;

pub fn build_hmm(mesh: Arc<Mesh>, time_grid: TimeGrid) -> Result<GradientDiscretisation> {
    build_hmm_with(mesh, time_grid, HmmOptions::default())
}

pub fn build_hmm_with(
    mesh: Arc<Mesh>,
    time_grid: TimeGrid,
    options: HmmOptions,
) -> Result<GradientDiscretisation> {
    if !(options.stabilization >= 0.0) {
        return Err(invalid("stabilization", "must be non-negative"));
    }
    if mesh.num_cells() == 0 {
        return Err(Error::InvalidMesh("no cells".into()));
    }
    let nc = mesh.num_cells();
    let mut face_dofs = Vec::with_capacity(mesh.num_faces());
    let mut boundary_faces = Vec::new();
    let mut next_free = nc;
    for (f, face) in mesh.faces().iter().enumerate() {
        if face.interior {
            face_dofs.push(Dof::Free(next_free));
            next_free += 1;
        } else {
            face_dofs.push(Dof::Boundary(boundary_faces.len()));
            boundary_faces.push(f);
        }
    }
    let num_unknowns = next_free;

    let mut cell_ops = Vec::with_capacity(nc);
    let mut free_entries = Vec::new();
    let mut coupling_entries = Vec::new();
    let dim = 2.0;
    for (k, cell) in mesh.cells().iter().enumerate() {
        let m = cell.faces.len();
        let xk = cell.centroid;
        let mut dofs = Vec::with_capacity(m + 1);
        dofs.push(Dof::Free(k));
        dofs.extend(cell.faces.iter().map(|&f| face_dofs[f]));

        // Consistent gradient coefficients.
        let mut consistent = vec![[0.0; 2]; m + 1];
        for (j, &f) in cell.faces.iter().enumerate() {
            let face = mesh.face(f);
            let n = face.normal_from(k);
            let w = face.measure / cell.measure;
            consistent[j + 1] = [w * n[0], w * n[1]];
            consistent[0][0] -= w * n[0];
            consistent[0][1] -= w * n[1];
        }

        let mut subcells = Vec::with_capacity(m);
        for (j, &f) in cell.faces.iter().enumerate() {
            let face = mesh.face(f);
            let n = face.normal_from(k);
            let offset = sub(face.centroid, xk);
            let distance = dot(offset, n);
            if !(distance > 1e-12 * cell.diameter) {
                return Err(Error::DegenerateSubcell {
                    cell: k,
                    face: f,
                    distance,
                });
            }
            // R = e_j - e_0 - consistent · (x_σ - x_K)
            let weight = options.stabilization / distance;
            let stencil = (0..=m)
                .map(|l| {
                    let mut r = -dot(consistent[l], offset);
                    if l == j + 1 {
                        r += 1.0;
                    }
                    if l == 0 {
                        r -= 1.0;
                    }
                    [
                        consistent[l][0] + weight * r * n[0],
                        consistent[l][1] + weight * r * n[1],
                    ]
                })
                .collect();
            let [a, b] = face.vertices.map(|v| mesh.vertices()[v]);
            subcells.push(Subcell {
                face: f,
                measure: face.measure * distance / dim,
                centroid: [(xk[0] + a[0] + b[0]) / 3.0, (xk[1] + a[1] + b[1]) / 3.0],
                distance,
                stencil,
            });
        }

        for (l, &dl) in dofs.iter().enumerate() {
            let Dof::Free(i) = dl else { continue };
            for (p, &dp) in dofs.iter().enumerate() {
                let a: f64 = subcells
                    .iter()
                    .map(|s| s.measure * dot(s.stencil[l], s.stencil[p]))
                    .sum();
                match dp {
                    Dof::Free(jj) => free_entries.push((i, jj, a)),
                    Dof::Boundary(b) => coupling_entries.push((i, b, a)),
                }
            }
        }
        cell_ops.push(CellOperator { dofs, subcells });
    }

    let stiffness = CsrMatrix::from_triplets(num_unknowns, num_unknowns, free_entries);
    let coupling = CsrMatrix::from_triplets(num_unknowns, boundary_faces.len(), coupling_entries);
    let mut mass = vec![0.0; num_unknowns];
    for (k, cell) in mesh.cells().iter().enumerate() {
        mass[k] = cell.measure;
    }

    Ok(GradientDiscretisation {
        mesh,
        time_grid,
        options,
        cell_ops,
        face_dofs,
        boundary_faces,
        num_unknowns,
        stiffness,
        coupling,
        mass,
        stiffness_solver: OnceLock::new(),
    })
}

impl GradientDiscretisation {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time_grid
    }

    pub fn options(&self) -> HmmOptions {
        self.options
    }

    pub fn num_cells(&self) -> usize {
        self.mesh.num_cells()
    }

    /// Size of `X_{D,0}`: cells plus interior faces.
    pub fn num_unknowns(&self) -> usize {
        self.num_unknowns
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.boundary_faces.len()
    }

    /// Face ids in sidecar order.
    pub fn boundary_faces(&self) -> &[usize] {
        &self.boundary_faces
    }

    pub fn face_dof(&self, face: usize) -> Dof {
        self.face_dofs[face]
    }

    /// `A_ij = ∫ ∇_D φ_i · ∇_D φ_j` over the unknowns.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Stiffness rows of the unknowns against boundary-face values.
    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    /// Lumped mass: `|K|` on cell unknowns, zero on face unknowns.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn subcells(&self, cell: usize) -> &[Subcell] {
        &self.cell_ops[cell].subcells
    }

    pub fn zero_field(&self) -> DiscreteField {
        DiscreteField {
            values: vec![0.0; self.num_unknowns],
            boundary: vec![0.0; self.boundary_faces.len()],
            time: 0.0,
        }
    }

    pub fn check_field(&self, field: &DiscreteField) -> Result<()> {
        if field.values.len() != self.num_unknowns {
            return Err(Error::ShapeMismatch {
                context: "field values",
                expected: self.num_unknowns,
                actual: field.values.len(),
            });
        }
        if field.boundary.len() != self.boundary_faces.len() {
            return Err(Error::ShapeMismatch {
                context: "boundary sidecar",
                expected: self.boundary_faces.len(),
                actual: field.boundary.len(),
            });
        }
        Ok(())
    }

    /// `J_D u`: cell values at centroids, face values at face midpoints,
    /// boundary sidecar at boundary-face midpoints.
    pub fn interpolate(&self, u: impl Fn(Point) -> f64, time: f64) -> DiscreteField {
        let mut values = vec![0.0; self.num_unknowns];
        for (k, cell) in self.mesh.cells().iter().enumerate() {
            values[k] = u(cell.centroid);
        }
        let mut boundary = vec![0.0; self.boundary_faces.len()];
        for (f, face) in self.mesh.faces().iter().enumerate() {
            match self.face_dofs[f] {
                Dof::Free(i) => values[i] = u(face.centroid),
                Dof::Boundary(b) => boundary[b] = u(face.centroid),
            }
        }
        DiscreteField {
            values,
            boundary,
            time,
        }
    }

    /// Boundary-face values of `u` in sidecar order.
    pub fn boundary_values(&self, u: impl Fn(Point) -> f64) -> Vec<f64> {
        self.boundary_faces
            .iter()
            .map(|&f| u(self.mesh.face(f).centroid))
            .collect()
    }

    /// `Π_D v`: one value per cell.
    pub fn reconstruct_function<'a>(&self, field: &'a DiscreteField) -> &'a [f64] {
        &field.values[..self.num_cells()]
    }

    fn local_value(&self, field: &DiscreteField, dof: Dof) -> f64 {
        match dof {
            Dof::Free(i) => field.values[i],
            Dof::Boundary(b) => field.boundary[b],
        }
    }

    /// Gradient on each subcell of `cell`, in face order.
    pub fn cell_gradients(&self, cell: usize, field: &DiscreteField) -> Vec<Point> {
        let op = &self.cell_ops[cell];
        let local: Vec<f64> = op
            .dofs
            .iter()
            .map(|&d| self.local_value(field, d))
            .collect();
        op.subcells
            .iter()
            .map(|s| {
                s.stencil.iter().zip(&local).fold([0.0; 2], |acc, (c, v)| {
                    [acc[0] + c[0] * v, acc[1] + c[1] * v]
                })
            })
            .collect()
    }

    /// `∇_D v` on every subcell, cells in order.
    pub fn reconstruct_gradient(&self, field: &DiscreteField) -> Vec<Point> {
        (0..self.num_cells())
            .flat_map(|k| self.cell_gradients(k, field))
            .collect()
    }

    /// `‖∇_D v‖_{L²}`, boundary sidecar included.
    pub fn gradient_norm(&self, field: &DiscreteField) -> f64 {
        let mut s = 0.0;
        for k in 0..self.num_cells() {
            for (g, sc) in self.cell_gradients(k, field).iter().zip(self.subcells(k)) {
                s += sc.measure * dot(*g, *g);
            }
        }
        s.sqrt()
    }

    /// `‖w‖_{L²}` of a piecewise-constant cell field.
    pub fn cell_l2_norm(&self, cell_values: &[f64]) -> f64 {
        self.mesh
            .cells()
            .iter()
            .zip(cell_values)
            .map(|(c, v)| c.measure * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Upper bound on `S_D(u)` given by the interpolant:
    /// `‖Π_D J u - u‖ + ‖∇_D J u - ∇u‖`, both integrated with the subcell
    /// centroid rule.
    pub fn consistency_defect(
        &self,
        u: impl Fn(Point) -> f64,
        grad_u: impl Fn(Point) -> Point,
    ) -> f64 {
        let field = self.interpolate(&u, 0.0);
        let mut value_sq = 0.0;
        let mut grad_sq = 0.0;
        for k in 0..self.num_cells() {
            let vk = field.values[k];
            for (g, sc) in self.cell_gradients(k, &field).iter().zip(self.subcells(k)) {
                let dv = vk - u(sc.centroid);
                let exact = grad_u(sc.centroid);
                let dg = sub(*g, exact);
                value_sq += sc.measure * dv * dv;
                grad_sq += sc.measure * dot(dg, dg);
            }
        }
        value_sq.sqrt() + grad_sq.sqrt()
    }

    /// Solver for the stiffness matrix, factorized on first use.
    pub fn stiffness_solver(&self) -> Result<&SpdSolver> {
        if let Some(s) = self.stiffness_solver.get() {
            return Ok(s);
        }
        let solver = SpdSolver::auto(self.stiffness.clone(), DUAL_NORM_TOLERANCE)?;
        Ok(self.stiffness_solver.get_or_init(|| solver))
    }

    /// `sqrt(rᵀ A⁻¹ r)`: the dual of the discrete gradient norm.
    pub fn dual_of_stiffness(&self, r: &[f64]) -> Result<f64> {
        if r.iter().all(|&x| x == 0.0) {
            return Ok(0.0);
        }
        let x = self.stiffness_solver()?.solve(r)?;
        Ok(crate::sparse::dot(r, &x).max(0.0).sqrt())
    }

    /// `W_D(θ)` for a flux `θ` with `θ·n = 0` on the boundary.
    ///
    /// The gradient pairing uses the subcell centroid rule and the
    /// divergence pairing the cell centroid rule.
    pub fn limit_conformity_defect(
        &self,
        theta: impl Fn(Point) -> Point,
        div_theta: impl Fn(Point) -> f64,
    ) -> Result<f64> {
        let mut r = vec![0.0; self.num_unknowns];
        for (k, op) in self.cell_ops.iter().enumerate() {
            let cell = self.mesh.cell(k);
            r[k] += cell.measure * div_theta(cell.centroid);
            for sc in &op.subcells {
                let th = theta(sc.centroid);
                for (l, &d) in op.dofs.iter().enumerate() {
                    if let Dof::Free(i) = d {
                        r[i] += sc.measure * dot(sc.stencil[l], th);
                    }
                }
            }
        }
        self.dual_of_stiffness(&r)
    }

    /// `|u|_{D,⋆}` of a cell field.
    pub fn dual_norm(&self, cell_values: &[f64]) -> Result<f64> {
        if cell_values.len() != self.num_cells() {
            return Err(Error::ShapeMismatch {
                context: "dual norm input",
                expected: self.num_cells(),
                actual: cell_values.len(),
            });
        }
        let mut b = vec![0.0; self.num_unknowns];
        for (k, (bk, u)) in b.iter_mut().zip(cell_values).enumerate() {
            *bk = self.mass[k] * u;
        }
        self.dual_of_stiffness(&b)
    }
}
