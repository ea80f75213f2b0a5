//! Brownian paths, multiplicative noise operators and the accumulated
//! noise diagnostic.
//!
//! Every normal draw is addressed by `(seed, mode, realization, step)`: the
//! seed and mode select a ChaCha8 key, the realization selects the stream
//! and the step selects the block position. Draws therefore do not depend on
//! the order in which realizations are generated or on the thread that
//! generates them.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::gdisc::TimeGrid;
use crate::mesh::{Mesh, Rect};

/// 32-bit words consumed per normal draw.
const WORDS_PER_DRAW: u128 = 4;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Counter-addressable stream of standard normal draws.
#[derive(Clone)]
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64, mode: usize, realization: u64) -> Self {
        let mut state = seed ^ (mode as u64).wrapping_mul(0xd134_2543_de82_ef95);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(realization);
        NormalStream { rng }
    }

    /// Moves the stream to draw number `step`.
    pub fn seek(&mut self, step: u64) {
        self.rng.set_word_pos(step as u128 * WORDS_PER_DRAW);
    }

    /// Next standard normal, by Box-Muller on two 53-bit uniforms.
    pub fn next_normal(&mut self) -> f64 {
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 / (1u64 << 53) as f64;
        let u2 = (self.rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// The draw at position `step`, independent of the current position.
    pub fn normal_at(&mut self, step: u64) -> f64 {
        self.seek(step);
        self.next_normal()
    }
}

/// Increments of `K` independent scalar Brownian motions on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    grid: TimeGrid,
    weights: Vec<f64>,
    /// Step-major: `increments[n * K + k]` is `ΔB_k` over `[t_n, t_{n+1}]`.
    increments: Vec<f64>,
    seed: u64,
    realization: u64,
}

impl BrownianPath {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn realization(&self) -> u64 {
        self.realization
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    /// `ΔB_k^(n+1) = B_k(t_{n+1}) - B_k(t_n)`.
    pub fn increment(&self, n: usize, k: usize) -> f64 {
        self.increments[n * self.modes() + k]
    }

    /// All mode increments of step `n`.
    pub fn step_increments(&self, n: usize) -> &[f64] {
        let m = self.modes();
        &self.increments[n * m..(n + 1) * m]
    }

    /// `B_k(t_n)`, summed from `t_0`.
    pub fn value(&self, n: usize, k: usize) -> f64 {
        (0..n).map(|i| self.increment(i, k)).sum()
    }

    /// Running values `B_k(t_0), ..., B_k(t_N)`.
    pub fn values(&self, k: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps() + 1);
        let mut acc = 0.0;
        out.push(acc);
        for n in 0..self.steps() {
            acc += self.increment(n, k);
            out.push(acc);
        }
        out
    }

    /// The same path on the grid keeping every `factor`-th time point:
    /// each coarse increment is the left-to-right sum of `factor` fine ones.
    pub fn coarsen(&self, factor: usize) -> Result<BrownianPath> {
        if factor == 0 || !self.steps().is_multiple_of(factor) {
            return Err(invalid(
                "factor",
                format!("{factor} does not divide {} steps", self.steps()),
            ));
        }
        let m = self.modes();
        let coarse_steps = self.steps() / factor;
        let times = (0..=coarse_steps)
            .map(|n| self.grid.time(n * factor))
            .collect();
        let mut increments = Vec::with_capacity(coarse_steps * m);
        for n in 0..coarse_steps {
            for k in 0..m {
                let mut s = self.increment(n * factor, k);
                for i in 1..factor {
                    s += self.increment(n * factor + i, k);
                }
                increments.push(s);
            }
        }
        Ok(BrownianPath {
            grid: TimeGrid::new(times)?,
            weights: self.weights.clone(),
            increments,
            seed: self.seed,
            realization: self.realization,
        })
    }
}

/// Draws `ΔB_k^(n+1) ~ N(0, t_{n+1} - t_n)` for every step and mode.
pub fn sample_path(
    grid: &TimeGrid,
    weights: &[f64],
    seed: u64,
    realization: u64,
) -> Result<BrownianPath> {
    if weights.is_empty() {
        return Err(invalid("modes", "need at least one mode"));
    }
    if weights.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
        return Err(invalid("weights", "must be finite and non-negative"));
    }
    let m = weights.len();
    let steps = grid.steps();
    let mut increments = vec![0.0; steps * m];
    for k in 0..m {
        let mut stream = NormalStream::new(seed, k, realization);
        stream.seek(0);
        for n in 0..steps {
            increments[n * m + k] = grid.step_size(n).sqrt() * stream.next_normal();
        }
    }
    Ok(BrownianPath {
        grid: grid.clone(),
        weights: weights.to_vec(),
        increments,
        seed,
        realization,
    })
}

/// Scalar Brownian motion (one mode, unit weight).
pub fn sample_scalar_path(grid: &TimeGrid, seed: u64, realization: u64) -> BrownianPath {
    sample_path(grid, &[1.0], seed, realization).expect("unit weight is valid")
}

/// CSV dump with columns `realization,step,mode,increment`.
pub fn write_paths_csv<W: Write>(paths: &[BrownianPath], mut w: W) -> Result<()> {
    writeln!(w, "realization,step,mode,increment")?;
    for p in paths {
        for n in 0..p.steps() {
            for k in 0..p.modes() {
                writeln!(w, "{},{},{},{}", p.realization, n, k, p.increment(n, k))?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// `g(v) = ρ v`
    Linear,
    /// `g(v) = ρ v (v - 1)`, vanishing at the rest and excited states.
    Bistable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub rho: f64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(invalid("rho", "must be >= 0"));
        }
        Ok(NoiseModel { kind, rho })
    }

    pub fn linear(rho: f64) -> Self {
        NoiseModel {
            kind: NoiseKind::Linear,
            rho,
        }
    }

    pub fn bistable(rho: f64) -> Self {
        NoiseModel {
            kind: NoiseKind::Bistable,
            rho,
        }
    }

    pub fn g(&self, v: f64) -> f64 {
        match self.kind {
            NoiseKind::Linear => self.rho * v,
            NoiseKind::Bistable => self.rho * v * (v - 1.0),
        }
    }
}

/// `g(v) ΔB` cellwise for a scalar increment.
pub fn apply_noise(model: &NoiseModel, v: &[f64], db: f64) -> Vec<f64> {
    v.iter().map(|&x| model.g(x) * db).collect()
}

/// `g(v_K) ξ_K` cellwise for a spatial increment field `ξ`.
pub fn apply_noise_field(model: &NoiseModel, v: &[f64], xi: &[f64]) -> Vec<f64> {
    v.iter().zip(xi).map(|(&x, &e)| model.g(x) * e).collect()
}

/// `G^(n+1) = G^(n) + g(v^(n)) ΔB^(n+1)`.
pub fn accumulate_g(previous: &[f64], model: &NoiseModel, v: &[f64], db: f64) -> Vec<f64> {
    previous
        .iter()
        .zip(v)
        .map(|(&g, &x)| g + model.g(x) * db)
        .collect()
}

/// Spatial eigenfunctions `e_k` of the noise covariance, sampled at cell
/// centroids, so that a step's noise field is `ξ_K = Σ_k q_k ΔB_k e_k(x_K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialModes {
    /// `shapes[k][K] = e_k(x_K)`.
    shapes: Vec<Vec<f64>>,
}

impl SpatialModes {
    /// A single spatially constant mode: `ξ = q_0 ΔB_0`.
    pub fn uniform(num_cells: usize) -> Self {
        SpatialModes {
            shapes: vec![vec![1.0; num_cells]],
        }
    }

    /// The first `count` L²-normalised Dirichlet sine modes of `rect`,
    /// ordered by total wavenumber `i + j`, then by `i`.
    pub fn sine(mesh: &Mesh, rect: Rect, count: usize) -> Self {
        let (a, b) = (rect.width(), rect.height());
        let scale = 2.0 / (a * b).sqrt();
        let mut pairs = Vec::with_capacity(count);
        let mut total = 2;
        while pairs.len() < count {
            for i in 1..total {
                if pairs.len() < count {
                    pairs.push((i, total - i));
                }
            }
            total += 1;
        }
        let pi = std::f64::consts::PI;
        let shapes = pairs
            .into_iter()
            .map(|(i, j)| {
                mesh.cells()
                    .iter()
                    .map(|c| {
                        let [x, y] = c.centroid;
                        scale
                            * (i as f64 * pi * (x - rect.x0) / a).sin()
                            * (j as f64 * pi * (y - rect.y0) / b).sin()
                    })
                    .collect()
            })
            .collect();
        SpatialModes { shapes }
    }

    pub fn modes(&self) -> usize {
        self.shapes.len()
    }

    pub fn num_cells(&self) -> usize {
        self.shapes.first().map_or(0, Vec::len)
    }

    /// `ξ_K` for step `n` of `path`.
    pub fn noise_field(&self, path: &BrownianPath, n: usize) -> Vec<f64> {
        let inc = path.step_increments(n);
        let q = path.weights();
        let mut xi = vec![0.0; self.num_cells()];
        for (k, shape) in self.shapes.iter().enumerate().take(inc.len()) {
            let w = q[k] * inc[k];
            xi.iter_mut().zip(shape).for_each(|(x, e)| *x += w * e);
        }
        xi
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_increments() {
        let grid = TimeGrid::uniform(1.0, 0.01).unwrap();
        let a = sample_path(&grid, &[1.0, 0.5], 42, 3).unwrap();
        let b = sample_path(&grid, &[1.0, 0.5], 42, 3).unwrap();
        assert_eq!(a, b);
        let c = sample_path(&grid, &[1.0, 0.5], 42, 4).unwrap();
        assert_ne!(a.increments, c.increments);
        assert_ne!(a.increment(0, 0), a.increment(0, 1));
    }

    #[test]
    fn random_access_matches_sequential() {
        let mut s = NormalStream::new(7, 0, 11);
        let seq: Vec<f64> = (0..20).map(|_| s.next_normal()).collect();
        let mut t = NormalStream::new(7, 0, 11);
        for n in (0..20).rev() {
            assert_eq!(t.normal_at(n as u64), seq[n]);
        }
    }

    #[test]
    fn final_value_is_increment_sum() {
        let grid = TimeGrid::uniform(1.0, 0.001).unwrap();
        let p = sample_scalar_path(&grid, 1, 0);
        let total: f64 = (0..p.steps()).map(|n| p.increment(n, 0)).sum();
        assert_eq!(p.value(p.steps(), 0), total);
        assert_eq!(*p.values(0).last().unwrap(), total);
    }

    #[test]
    fn bad_weights_rejected() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        assert!(sample_path(&grid, &[], 0, 0).is_err());
        assert!(sample_path(&grid, &[-1.0], 0, 0).is_err());
    }

    #[test]
    fn coupled_coarsening_is_bit_exact() {
        let fine_grid = TimeGrid::uniform(1.0, 0.005).unwrap();
        let fine = sample_scalar_path(&fine_grid, 9, 2);
        let coarse = fine.coarsen(2).unwrap();
        assert_eq!(coarse.steps(), 100);
        for n in 0..coarse.steps() {
            assert_eq!(
                coarse.increment(n, 0),
                fine.increment(2 * n, 0) + fine.increment(2 * n + 1, 0)
            );
        }
        // Sampling the coarse grid directly is not coupled.
        let direct = sample_scalar_path(coarse.grid(), 9, 2);
        assert!((0..100).any(|n| direct.increment(n, 0) != coarse.increment(n, 0)));
        assert!(fine.coarsen(3).is_err());
    }

    #[test]
    fn noise_operators() {
        let lin = NoiseModel::linear(0.2);
        assert!((apply_noise(&lin, &[1.0], 0.1)[0] - 0.02).abs() < 1e-17);
        let zero = NoiseModel::linear(0.0);
        assert!(apply_noise(&zero, &[3.0, -2.0], 0.7)
            .iter()
            .all(|&x| x == 0.0));
        let bi = NoiseModel::bistable(3.0);
        assert_eq!(apply_noise(&bi, &[0.0, 1.0], 0.9), vec![0.0, 0.0]);
        assert!(NoiseModel::new(NoiseKind::Linear, -1.0).is_err());
    }

    #[test]
    fn accumulator() {
        let m = NoiseModel::linear(0.5);
        let v = [1.0, 2.0];
        let g0 = vec![0.0; 2];
        let g1 = accumulate_g(&g0, &m, &v, 0.3);
        assert_eq!(g1, apply_noise(&m, &v, 0.3));
        let g2 = accumulate_g(&g1, &m, &v, 0.0);
        assert_eq!(g2, g1);
    }

    #[test]
    fn uniform_mode_reproduces_scalar_noise() {
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let p = sample_scalar_path(&grid, 3, 0);
        let modes = SpatialModes::uniform(4);
        assert_eq!(modes.noise_field(&p, 5), vec![p.increment(5, 0); 4]);
    }

    #[test]
    fn sine_modes_are_orthonormal_on_fine_mesh() {
        let rect = Rect::unit_square();
        let mesh = crate::mesh::generate_triangular(rect, 64).unwrap();
        let modes = SpatialModes::sine(&mesh, rect, 3);
        for a in 0..3 {
            for b in 0..3 {
                let ip: f64 = mesh
                    .cells()
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c.measure * modes.shapes[a][k] * modes.shapes[b][k])
                    .sum();
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((ip - target).abs() < 2e-3, "{a} {b} {ip}");
            }
        }
    }

    #[test]
    fn csv_dump() {
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let p = sample_scalar_path(&grid, 1, 4);
        let mut buf = Vec::new();
        write_paths_csv(std::slice::from_ref(&p), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "realization,step,mode,increment");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[2], format!("4,1,0,{}", p.increment(1, 0)));
    }
}
