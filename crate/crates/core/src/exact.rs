//! Travelling-wave reference solution of the stochastic Allen-Cahn problem
//! with linear multiplicative noise:
//!
//! ```text
//! v(t, x, y) = (-c/6 + 2κ tanh(κ (x + y - c t))) exp(ρ B(t) - ρ² t / 2)
//! κ = sqrt((ρ² + 2) / 8 - c² / 48)
//! ```

use crate::error::{invalid, Result};
use crate::mesh::Point;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveParams {
    /// Wave speed.
    pub c: f64,
    /// Noise intensity.
    pub rho: f64,
    kappa: f64,
}

impl WaveParams {
    pub fn new(c: f64, rho: f64) -> Result<Self> {
        if !c.is_finite() || !rho.is_finite() {
            return Err(invalid("wave", "parameters must be finite"));
        }
        let k2 = (rho * rho + 2.0) / 8.0 - c * c / 48.0;
        if !(k2 > 0.0) {
            return Err(invalid(
                "wave",
                format!("(ρ² + 2)/8 - c²/48 = {k2} must be positive"),
            ));
        }
        Ok(WaveParams {
            c,
            rho,
            kappa: k2.sqrt(),
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `exp(ρ B_t - ρ² t / 2)`.
    pub fn amplitude_factor(&self, t: f64, b_t: f64) -> f64 {
        (self.rho * b_t - 0.5 * self.rho * self.rho * t).exp()
    }

    pub fn value(&self, t: f64, p: Point, b_t: f64) -> f64 {
        let s = p[0] + p[1] - self.c * t;
        (-self.c / 6.0 + 2.0 * self.kappa * (self.kappa * s).tanh()) * self.amplitude_factor(t, b_t)
    }

    /// Spatial gradient. Both components are equal.
    pub fn gradient(&self, t: f64, p: Point, b_t: f64) -> Point {
        let s = p[0] + p[1] - self.c * t;
        let sech = 1.0 / (self.kappa * s).cosh();
        let g = 2.0 * self.kappa * self.kappa * sech * sech * self.amplitude_factor(t, b_t);
        [g, g]
    }
}

pub fn wave_value(params: &WaveParams, t: f64, x: f64, y: f64, b_t: f64) -> f64 {
    params.value(t, [x, y], b_t)
}

pub fn wave_gradient(params: &WaveParams, t: f64, x: f64, y: f64, b_t: f64) -> Point {
    params.gradient(t, [x, y], b_t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn kappa_at_default_speed() {
        let p = WaveParams::new(0.3, 0.0).unwrap();
        assert!((p.kappa() - 0.248125f64.sqrt()).abs() < 1e-15);
        assert!(WaveParams::new(100.0, 0.0).is_err());
    }

    #[test]
    fn reference_values() {
        let p = WaveParams::new(0.3, 0.0).unwrap();
        assert!((wave_value(&p, 0.0, 1.0, -1.0, 0.0) + 0.05).abs() < 1e-15);
        let far = wave_value(&p, 0.0, 50.0, 50.0, 0.0);
        assert!((far - (-0.05 + 2.0 * 0.248125f64.sqrt())).abs() < 1e-12);
        assert!((far - 0.9462).abs() < 1e-4);

        let p = WaveParams::new(0.3, 0.2).unwrap();
        let v = wave_value(&p, 1.0, 0.15, -0.15 + 0.3, 0.0);
        assert!((v - (-0.05 * (-0.02f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn gradient_decays_far_from_front() {
        let p = WaveParams::new(0.3, 0.2).unwrap();
        let g = wave_gradient(&p, 0.5, 40.0, 40.0, 0.1);
        assert!(g[0].abs() < 1e-12 && g[0] == g[1]);
    }

    // v_t - Δv - (v - v³) by central differences.
    fn pde_residual(p: &WaveParams, t: f64, x: f64, y: f64) -> f64 {
        let h = 1e-4;
        let u = |t: f64, x: f64, y: f64| p.value(t, [x, y], 0.0);
        let ut = (u(t + h, x, y) - u(t - h, x, y)) / (2.0 * h);
        let lap = (u(t, x + h, y) + u(t, x - h, y) + u(t, x, y + h) + u(t, x, y - h)
            - 4.0 * u(t, x, y))
            / (h * h);
        let v = u(t, x, y);
        ut - lap - (v - v * v * v)
    }

    fn sample_points() -> impl Iterator<Item = (f64, f64, f64)> {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        (0..100).map(move |_| (next(), 10.0 * next() - 5.0, 10.0 * next() - 5.0))
    }

    #[test]
    fn standing_wave_solves_allen_cahn() {
        let p = WaveParams::new(0.0, 0.0).unwrap();
        for (t, x, y) in sample_points() {
            assert!(pde_residual(&p, t, x, y).abs() < 1e-6);
        }
    }

    // For c != 0 the profile leaves a constant residual c (c² - 9) / 27,
    // so it solves the equation only up to that source term.
    #[test]
    fn moving_wave_residual_is_constant() {
        let c = 0.3;
        let p = WaveParams::new(c, 0.0).unwrap();
        let expected = c * (c * c - 9.0) / 27.0;
        for (t, x, y) in sample_points() {
            assert!((pde_residual(&p, t, x, y) - expected).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_central_differences(
            x in -5.0..5.0f64, y in -5.0..5.0f64, t in 0.0..1.0f64,
            b in -1.0..1.0f64, rho in 0.0..1.0f64,
        ) {
            let p = WaveParams::new(0.3, rho).unwrap();
            let h = 1e-6;
            let g = p.gradient(t, [x, y], b);
            let dx = (p.value(t, [x + h, y], b) - p.value(t, [x - h, y], b)) / (2.0 * h);
            let dy = (p.value(t, [x, y + h], b) - p.value(t, [x, y - h], b)) / (2.0 * h);
            prop_assert_eq!(g[0], g[1]);
            let scale = g[0].abs().max(1e-3);
            prop_assert!((dx - g[0]).abs() <= 1e-8 * scale.max(1.0) + 1e-9, "{} vs {}", dx, g[0]);
            prop_assert!((dy - g[1]).abs() <= 1e-8 * scale.max(1.0) + 1e-9);
        }
    }
}
