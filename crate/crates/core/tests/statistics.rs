use sgrd_core::gdisc::TimeGrid;
use sgrd_core::stochastic::sample_scalar_path;

fn increments(seed: u64, realization: u64, steps: usize, dt: f64) -> Vec<f64> {
    let grid = TimeGrid::uniform_steps(dt * steps as f64, steps).unwrap();
    let path = sample_scalar_path(&grid, seed, realization);
    (0..steps).map(|n| path.increment(n, 0)).collect()
}

#[test]
fn increments_have_brownian_moments() {
    let dt = 0.001;
    let n = 100_000;
    let inc = increments(11, 3, n, dt);
    let mean = inc.iter().sum::<f64>() / n as f64;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt(), "{mean}");
    assert!((var / dt - 1.0).abs() <= 0.05, "{}", var / dt);
}

#[test]
fn realizations_are_uncorrelated() {
    let n = 10_000;
    let a = increments(5, 0, n, 0.001);
    let b = increments(5, 1, n, 0.001);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() <= 4.0 / (n as f64).sqrt(), "{corr}");
}
