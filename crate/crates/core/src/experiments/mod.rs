//! Monte Carlo convergence studies, wave-dynamics runs and discretisation
//! diagnostics.

mod convergence;
mod wave;

pub use convergence::{convergence_study, ConvergenceConfig, ConvergenceReport, LevelReport};
pub use wave::{
    diagonal_profile, front_positions, wave_dynamics, WaveConfig, WaveReport, WaveSample,
};

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use crate::error::{invalid, Result};
use crate::exact::WaveParams;
use crate::gdisc::{build_hmm_with, DiscreteField, GradientDiscretisation, HmmOptions, TimeGrid};
use crate::mesh::{generate_kershaw, generate_triangular, Mesh, Point, Rect};
use crate::stochastic::{NoiseKind, NoiseModel, SpatialModes};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilySpec {
    Triangular,
    Kershaw { distortion: f64 },
}

/// A mesh family on a rectangle, refined by the level parameter `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeshSpec {
    pub rect: Rect,
    pub family: FamilySpec,
}

impl MeshSpec {
    /// The `[-5, 5]²` domain.
    pub fn square(family: FamilySpec) -> Self {
        MeshSpec {
            rect: Rect::centered_square(5.0),
            family,
        }
    }

    pub fn build(&self, n: usize) -> Result<Mesh> {
        match self.family {
            FamilySpec::Triangular => generate_triangular(self.rect, n),
            FamilySpec::Kershaw { distortion } => generate_kershaw(self.rect, n, distortion),
        }
    }

    pub fn discretise(
        &self,
        n: usize,
        grid: TimeGrid,
        options: HmmOptions,
    ) -> Result<GradientDiscretisation> {
        build_hmm_with(Arc::new(self.build(n)?), grid, options)
    }
}

/// Noise model plus the number of retained modes.
///
/// One mode is a scalar Brownian motion acting uniformly in space. With
/// `K > 1` modes the field is `Σ q_k e_k ΔB_k` over Dirichlet sine modes with
/// `q_k = 1 / (k + 1)`; mode 0 still drives the exact-wave boundary data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub modes: usize,
}

impl NoiseSpec {
    pub fn scalar(model: NoiseModel) -> Self {
        NoiseSpec { model, modes: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes == 0 {
            return Err(invalid("noise.modes", "must be >= 1"));
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.modes).map(|k| 1.0 / (k + 1) as f64).collect()
    }

    pub fn spatial_modes(&self, mesh: &Mesh, rect: Rect) -> SpatialModes {
        if self.modes == 1 {
            SpatialModes::uniform(mesh.num_cells())
        } else {
            SpatialModes::sine(mesh, rect, self.modes)
        }
    }

    /// Wave used for initial and boundary data: the noisy wave for linear
    /// noise, the deterministic one for bistable noise.
    pub fn wave(&self, c: f64) -> Result<WaveParams> {
        match self.model.kind {
            NoiseKind::Linear => WaveParams::new(c, self.model.rho),
            NoiseKind::Bistable => WaveParams::new(c, 0.0),
        }
    }
}

/// L² norms entering the relative errors of one realization.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorTerms {
    /// `‖v̄(T) - Π_D v‖`
    pub diff_v: f64,
    /// `‖v̄(T)‖`
    pub exact_v: f64,
    /// `‖∇v̄(T) - ∇_D v‖`
    pub diff_grad: f64,
    /// `‖∇v̄(T)‖`
    pub exact_grad: f64,
}

impl ErrorTerms {
    pub fn relative_v(&self) -> f64 {
        self.diff_v / self.exact_v
    }

    pub fn relative_grad(&self) -> f64 {
        self.diff_grad / self.exact_grad
    }

    fn add(&mut self, other: &ErrorTerms) {
        self.diff_v += other.diff_v;
        self.exact_v += other.exact_v;
        self.diff_grad += other.diff_grad;
        self.exact_grad += other.exact_grad;
    }
}

/// Errors of `field` against the wave at time `t` with `B(t) = b_t`.
///
/// Values use the cell centroid rule, gradients the subcell centroid rule.
pub fn error_terms(
    gd: &GradientDiscretisation,
    field: &DiscreteField,
    wave: &WaveParams,
    t: f64,
    b_t: f64,
) -> ErrorTerms {
    let mesh = gd.mesh();
    let mut dv = 0.0;
    let mut ev = 0.0;
    let mut dg = 0.0;
    let mut eg = 0.0;
    for (k, cell) in mesh.cells().iter().enumerate() {
        let u = wave.value(t, cell.centroid, b_t);
        let d = u - field.values[k];
        dv += cell.measure * d * d;
        ev += cell.measure * u * u;
        for (g, sc) in gd.cell_gradients(k, field).iter().zip(gd.subcells(k)) {
            let ex = wave.gradient(t, sc.centroid, b_t);
            let (d0, d1) = (ex[0] - g[0], ex[1] - g[1]);
            dg += sc.measure * (d0 * d0 + d1 * d1);
            eg += sc.measure * (ex[0] * ex[0] + ex[1] * ex[1]);
        }
    }
    ErrorTerms {
        diff_v: dv.sqrt(),
        exact_v: ev.sqrt(),
        diff_grad: dg.sqrt(),
        exact_grad: eg.sqrt(),
    }
}

/// Relative errors `(err_v, err_grad)` for a single realization.
pub fn relative_errors(
    gd: &GradientDiscretisation,
    field: &DiscreteField,
    wave: &WaveParams,
    b_t: f64,
) -> (f64, f64) {
    let e = error_terms(gd, field, wave, field.time, b_t);
    (e.relative_v(), e.relative_grad())
}

/// Ratio of means over realizations: `(Σ diff / Σ exact)` for values and
/// gradients.
pub fn mean_relative_errors(terms: &[ErrorTerms]) -> (f64, f64) {
    let mut sum = ErrorTerms::default();
    for t in terms {
        sum.add(t);
    }
    (sum.relative_v(), sum.relative_grad())
}

/// `rate_i = log(e_{i-1} / e_i) / log(h_{i-1} / h_i)`, one entry per level
/// after the first.
pub fn rate(errors: &[f64], sizes: &[f64]) -> Result<Vec<f64>> {
    if errors.len() != sizes.len() {
        return Err(invalid("rate", "errors and sizes differ in length"));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(invalid("rate", format!("error {e} is not positive")));
    }
    if sizes.windows(2).any(|w| !(w[1] < w[0]) || !(w[1] > 0.0)) {
        return Err(invalid(
            "rate",
            "sizes must be positive and strictly decreasing",
        ));
    }
    Ok(errors
        .windows(2)
        .zip(sizes.windows(2))
        .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect())
}

/// Refinement diagnostics of the discretisation on one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdmDiagnostics {
    pub n: usize,
    pub h: f64,
    /// Interpolant bound on `S_D` for `sin(πx/10) sin(πy/10)`.
    pub consistency: f64,
    /// `W_D` of the divergence-free bubble flux.
    pub conformity: f64,
    /// `|u|_{D,⋆}` of the cell values of the same sine product.
    pub dual_norm: f64,
}

fn sine_product(p: Point) -> f64 {
    (PI * p[0] / 10.0).sin() * (PI * p[1] / 10.0).sin()
}

fn sine_product_gradient(p: Point) -> Point {
    let (sx, cx) = (PI * p[0] / 10.0).sin_cos();
    let (sy, cy) = (PI * p[1] / 10.0).sin_cos();
    [PI / 10.0 * cx * sy, PI / 10.0 * sx * cy]
}

/// `θ = (∂_y φ, -∂_x φ)` for `φ = (a² - x²)² (a² - y²)² / a⁸` on `[-a, a]²`:
/// divergence free and tangential on the boundary.
pub fn bubble_flux(a: f64) -> impl Fn(Point) -> Point {
    let a2 = a * a;
    let scale = 1.0 / (a2 * a2 * a2 * a2);
    move |p: Point| {
        let (x, y) = (p[0], p[1]);
        let fx = (a2 - x * x).powi(2);
        let fy = (a2 - y * y).powi(2);
        let dfx = -4.0 * x * (a2 - x * x);
        let dfy = -4.0 * y * (a2 - y * y);
        [scale * fx * dfy, -scale * dfx * fy]
    }
}

/// Diagnostics on `[-5, 5]²` for each level of `spec`.
pub fn gdm_diagnostics(
    spec: &MeshSpec,
    levels: &[usize],
    options: HmmOptions,
) -> Result<Vec<GdmDiagnostics>> {
    let half = 0.5 * spec.rect.width();
    if (spec.rect.height() - spec.rect.width()).abs() > 1e-12 * half
        || (spec.rect.x0 + half).abs() > 1e-12 * half
        || (spec.rect.y0 + half).abs() > 1e-12 * half
    {
        return Err(invalid("mesh.rect", "diagnostics need a centred square"));
    }
    let theta = bubble_flux(half);
    levels
        .iter()
        .map(|&n| {
            let gd = spec.discretise(n, TimeGrid::uniform_steps(1.0, 1)?, options)?;
            let cells: Vec<f64> = gd
                .mesh()
                .cells()
                .iter()
                .map(|c| sine_product(c.centroid))
                .collect();
            Ok(GdmDiagnostics {
                n,
                h: gd.mesh().size(),
                consistency: gd.consistency_defect(sine_product, sine_product_gradient),
                conformity: gd.limit_conformity_defect(&theta, |_| 0.0)?,
                dual_norm: gd.dual_norm(&cells)?,
            })
        })
        .collect()
}

/// CSV with columns `n,h,consistency,conformity,dual_norm`.
pub fn write_diagnostics_csv<W: Write>(rows: &[GdmDiagnostics], mut w: W) -> Result<()> {
    writeln!(w, "n,h,consistency,conformity,dual_norm")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.n, r.h, r.consistency, r.conformity, r.dual_norm
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdisc::build_hmm;

    #[test]
    fn rate_of_tabulated_errors() {
        let r = rate(&[0.4708741, 0.2286052], &[0.625, 0.3125]).unwrap();
        assert!((r[0] - 1.0424831).abs() < 5e-7, "{}", r[0]);
        assert_eq!(rate(&[0.3, 0.3], &[0.5, 0.25]).unwrap(), vec![0.0]);
        assert!(rate(&[0.3], &[0.5]).unwrap().is_empty());
        assert!(rate(&[0.3, 0.0], &[0.5, 0.25]).is_err());
        assert!(rate(&[0.3, -1.0], &[0.5, 0.25]).is_err());
        assert!(rate(&[0.3, 0.1], &[0.25, 0.5]).is_err());
    }

    #[test]
    fn interpolant_has_zero_value_error() {
        let wave = WaveParams::new(0.3, 0.2).unwrap();
        for n in [4, 8] {
            let mesh = generate_triangular(Rect::centered_square(5.0), n).unwrap();
            let gd = build_hmm(Arc::new(mesh), TimeGrid::uniform(1.0, 0.5).unwrap()).unwrap();
            let field = gd.interpolate(|p| wave.value(1.0, p, 0.3), 1.0);
            let (ev, eg) = relative_errors(&gd, &field, &wave, 0.3);
            assert!(ev.abs() < 1e-12);
            assert!(eg > 0.0 && eg < 1.0);
            let zero = DiscreteField {
                time: 1.0,
                ..gd.zero_field()
            };
            let (ev, _) = relative_errors(&gd, &zero, &wave, 0.3);
            assert!((ev - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ratio_of_means_not_mean_of_ratios() {
        let a = ErrorTerms {
            diff_v: 1.0,
            exact_v: 2.0,
            diff_grad: 1.0,
            exact_grad: 1.0,
        };
        let b = ErrorTerms {
            diff_v: 1.0,
            exact_v: 8.0,
            diff_grad: 3.0,
            exact_grad: 1.0,
        };
        let (ev, eg) = mean_relative_errors(&[a, b]);
        assert!((ev - 0.2).abs() < 1e-15);
        assert!((eg - 2.0).abs() < 1e-15);
    }

    #[test]
    fn bubble_flux_is_divergence_free_and_tangential() {
        let theta = bubble_flux(5.0);
        let h = 1e-5;
        for &(x, y) in &[(0.3, -1.2), (2.0, 4.1), (-3.3, 0.7)] {
            let div = (theta([x + h, y])[0] - theta([x - h, y])[0]) / (2.0 * h)
                + (theta([x, y + h])[1] - theta([x, y - h])[1]) / (2.0 * h);
            assert!(div.abs() < 1e-8);
        }
        assert_eq!(theta([5.0, 1.0])[0], 0.0);
        assert_eq!(theta([1.0, -5.0])[1], 0.0);
    }

    #[test]
    fn diagnostics_rows_match_levels() {
        let rows = gdm_diagnostics(
            &MeshSpec::square(FamilySpec::Triangular),
            &[2, 4],
            HmmOptions::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows
            .iter()
            .all(|r| r.consistency > 0.0 && r.conformity > 0.0));
        let mut buf = Vec::new();
        write_diagnostics_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
        let off = MeshSpec {
            rect: Rect::unit_square(),
            family: FamilySpec::Triangular,
        };
        assert!(gdm_diagnostics(&off, &[2], HmmOptions::default()).is_err());
    }
}
