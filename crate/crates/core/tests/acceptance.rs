//! Acceptance criteria, one line each:
//!
//! ```text
//! criterion N (name): PASS|FAIL in 12.3s: details
//! ```
//!
//! Runs every criterion and exits non-zero if any failed or exceeded its
//! time budget.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use sgrd_core::exact::WaveParams;
use sgrd_core::experiments::{
    convergence_study, error_terms, gdm_diagnostics, wave_dynamics, ConvergenceConfig, FamilySpec,
    MeshSpec, NoiseSpec, WaveConfig,
};
use sgrd_core::gdisc::{build_hmm, HmmOptions, TimeGrid};
use sgrd_core::mesh::{generate_kershaw, generate_triangular, max_moment_defect, Mesh, Rect};
use sgrd_core::par::Execution;
use sgrd_core::solver::{SchemeConfig, Stepper};
use sgrd_core::stochastic::{sample_scalar_path, NoiseKind, NoiseModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn domain() -> Rect {
    Rect::centered_square(5.0)
}

fn test_meshes() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    for n in [1, 8, 16] {
        out.push((
            format!("triangular n={n}"),
            generate_triangular(domain(), n).unwrap(),
        ));
    }
    for n in [2, 8] {
        for d in [0.3, 0.6] {
            out.push((
                format!("kershaw n={n} d={d}"),
                generate_kershaw(domain(), n, d).unwrap(),
            ));
        }
    }
    out
}

fn affine_exactness() -> Outcome {
    let grad = [2.0, 3.0];
    let u = |p: [f64; 2]| grad[0] * p[0] + grad[1] * p[1] - 1.0;
    let scale = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
    let mut worst: f64 = 0.0;
    for (_, mesh) in test_meshes() {
        let gd = build_hmm(Arc::new(mesh), TimeGrid::uniform_steps(1.0, 1).unwrap()).unwrap();
        let field = gd.interpolate(u, 0.0);
        for g in gd.reconstruct_gradient(&field) {
            let e = ((g[0] - grad[0]).powi(2) + (g[1] - grad[1]).powi(2)).sqrt() / scale;
            worst = worst.max(e);
        }
    }
    outcome(
        worst <= 1e-12,
        format!("max relative gradient defect {worst:.3e}"),
    )
}

fn geometric_identities() -> Outcome {
    let mut sum_defect: f64 = 0.0;
    let mut moment_defect: f64 = 0.0;
    let mut meshes = test_meshes();
    meshes.push((
        "triangular n=64".into(),
        generate_triangular(domain(), 64).unwrap(),
    ));
    for (_, mesh) in &meshes {
        for k in 0..mesh.num_cells() {
            let s = mesh.flux_sum(k);
            let perimeter: f64 = mesh
                .cell(k)
                .faces
                .iter()
                .map(|&f| mesh.face(f).measure)
                .sum();
            sum_defect = sum_defect.max(s[0].hypot(s[1]) / perimeter);
        }
        moment_defect = moment_defect.max(max_moment_defect(mesh));
    }
    outcome(
        sum_defect <= 1e-12 && moment_defect <= 1e-12,
        format!(
            "flux sum {sum_defect:.3e}, moment {moment_defect:.3e} on {} meshes",
            meshes.len()
        ),
    )
}

fn fmt_rates(r: &[Option<f64>]) -> String {
    r.iter()
        .flatten()
        .map(|x| format!("{x:.4}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn deterministic_convergence() -> Outcome {
    let cfg = ConvergenceConfig {
        noise: NoiseSpec::scalar(NoiseModel::linear(0.0)),
        realizations: 1,
        ..ConvergenceConfig::default()
    };
    let report = convergence_study(&cfg, Execution::default()).unwrap();
    let rv: Vec<_> = report.rows.iter().map(|r| r.rate_v).collect();
    let rg: Vec<_> = report.rows.iter().map(|r| r.rate_grad).collect();
    let ok_v = rv.iter().flatten().all(|r| (0.8..=1.3).contains(r));
    let ok_g = rg.iter().flatten().all(|r| (0.8..=1.2).contains(r));
    let errs: Vec<String> = report
        .rows
        .iter()
        .map(|r| format!("{:.4}", r.err_v))
        .collect();
    outcome(
        ok_v && ok_g,
        format!(
            "err_v [{}], rate_v [{}] (need 0.8..1.3), rate_grad [{}] (need 0.8..1.2)",
            errs.join(", "),
            fmt_rates(&rv),
            fmt_rates(&rg)
        ),
    )
}

fn stochastic_convergence() -> Outcome {
    let cfg = ConvergenceConfig {
        levels: vec![16, 32],
        dts: vec![0.001; 2],
        realizations: 20,
        ..ConvergenceConfig::default()
    };
    let a = convergence_study(&cfg, Execution::default()).unwrap();
    let b = convergence_study(
        &ConvergenceConfig {
            first_realization: 20,
            ..cfg
        },
        Execution::default(),
    )
    .unwrap();
    let rate = a.rows[1].rate_v.unwrap();
    let (ea, eb) = (a.rows[1].err_v, b.rows[1].err_v);
    let batches = (ea - eb).abs() <= 0.25 * ea.min(eb);
    let rate_ok = (0.6..=1.4).contains(&rate);
    outcome(
        rate_ok && batches,
        format!(
            "rate_v {rate:.4} (need 0.6..1.4): {}; batch err_v {ea:.4} vs {eb:.4}: {}",
            if rate_ok { "ok" } else { "out of band" },
            if batches {
                "within 25%"
            } else {
                "differ by more than 25%"
            }
        ),
    )
}

fn error_norm_oracle() -> Outcome {
    let wave = WaveParams::new(0.3, 0.2).unwrap();
    let (t, b) = (1.0, 0.37);
    let mut meshes: Vec<(String, Mesh)> = [16, 32, 64]
        .into_iter()
        .map(|n| {
            (
                format!("triangular n={n}"),
                generate_triangular(domain(), n).unwrap(),
            )
        })
        .collect();
    for n in [8, 16] {
        meshes.push((
            format!("kershaw n={n}"),
            generate_kershaw(domain(), n, 0.3).unwrap(),
        ));
    }
    let mut pass = true;
    let mut worst_v: f64 = 0.0;
    let mut details = Vec::new();
    for (name, mesh) in meshes {
        let gd = build_hmm(Arc::new(mesh), TimeGrid::uniform_steps(1.0, 1).unwrap()).unwrap();
        let field = gd.interpolate(|p| wave.value(t, p, b), t);
        let e = error_terms(&gd, &field, &wave, t, b);
        let err_v = e.relative_v();
        let err_grad = e.relative_grad();
        let defect = gd.consistency_defect(|p| wave.value(t, p, b), |p| wave.gradient(t, p, b))
            / e.exact_grad;
        worst_v = worst_v.max(err_v.abs());
        pass &= err_v.abs() <= 1e-12 && err_grad < defect;
        details.push(format!("{name}: {err_grad:.4} < {defect:.4}"));
    }
    outcome(
        pass,
        format!(
            "max err_v {worst_v:.1e}; err_grad vs defect {}",
            details.join(", ")
        ),
    )
}

fn propagation_failure() -> Outcome {
    let cfg = WaveConfig {
        rhos: vec![0.0, 10.0],
        ..WaveConfig::default()
    };
    let report = wave_dynamics(&cfg, Execution::default()).unwrap();
    let a0 = report.rows[0].amplitude;
    let a10 = report.rows[1].amplitude;
    let cells = generate_triangular(domain(), cfg.n).unwrap().num_cells();
    let peak0 = report.rows[0].field.values[..cells]
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let ok0 = (0.85..=1.0).contains(&a0);
    let ok10 = a10 <= 0.2 * a0;
    outcome(
        ok0 && ok10,
        format!(
            "amplitude rho=0 {a0:.4} (need 0.85..1.0, max v {peak0:.4}): {}; rho=10 {a10:.3e} (need <= {:.4}): {}",
            if ok0 { "ok" } else { "out of band" },
            0.2 * a0,
            if ok10 { "ok" } else { "too large" }
        ),
    )
}

fn backfiring() -> Outcome {
    let base = WaveConfig {
        kind: NoiseKind::Bistable,
        rhos: vec![0.0],
        ..WaveConfig::default()
    };
    let det = wave_dynamics(&base, Execution::Sequential).unwrap();
    let row = &det.rows[0];
    let ok0 = row.front_count() == 1 && row.velocities.first().is_some_and(|&v| v > 0.0);

    let runs = Execution::default().map_indexed(10, |r| {
        wave_dynamics(
            &WaveConfig {
                rhos: vec![3.0],
                realization: r as u64,
                ..base.clone()
            },
            Execution::Sequential,
        )
    });
    let mut hits = 0;
    let mut aborted = 0;
    let mut counts = Vec::new();
    for r in runs {
        match r {
            Ok(rep) => {
                let s = &rep.rows[0];
                counts.push(s.front_count().to_string());
                let v = &s.velocities;
                if s.front_count() == 2 && v.len() == 2 && v[0] * v[1] < 0.0 {
                    hits += 1;
                }
            }
            Err(_) => {
                aborted += 1;
                counts.push("x".into());
            }
        }
    }
    outcome(
        ok0 && hits >= 7,
        format!(
            "rho=0 fronts {} velocity {:?}: {}; rho=3 split in {hits}/10 (need 7), front counts [{}], {aborted} aborted",
            row.front_count(),
            row.velocities,
            if ok0 { "ok" } else { "not a single advancing front" },
            counts.join(" ")
        ),
    )
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn gdm_decay() -> Outcome {
    let rows = gdm_diagnostics(
        &MeshSpec::square(FamilySpec::Triangular),
        &[8, 16, 32],
        HmmOptions::default(),
    )
    .unwrap();
    let s: Vec<f64> = rows.iter().map(|r| r.consistency).collect();
    let w: Vec<f64> = rows.iter().map(|r| r.conformity).collect();
    let dec = |v: &[f64]| v.windows(2).all(|p| p[1] < p[0]);
    outcome(
        dec(&s) && dec(&w),
        format!("S_D {}, W_D {}", sci(&s), sci(&w)),
    )
}

fn energy_bound() -> Outcome {
    let mesh = generate_triangular(domain(), 32).unwrap();
    let gd = build_hmm(Arc::new(mesh), TimeGrid::uniform(1.0, 0.001).unwrap()).unwrap();
    let run = |rho: f64, r: u64| {
        let cfg = SchemeConfig::new(WaveParams::new(0.3, rho).unwrap(), NoiseModel::linear(rho));
        let st = Stepper::new(&gd, cfg).unwrap();
        st.run_realization(&sample_scalar_path(gd.time_grid(), 7, r))
    };
    let det = run(0.0, 0).unwrap().max_energy();
    let results = Execution::default().map_indexed(20, |r| run(0.2, r as u64));
    let mut energies = Vec::new();
    let mut finite = true;
    for r in results {
        match r {
            Ok(res) => {
                let e = res.max_energy();
                finite &= e.is_finite()
                    && res
                        .diagnostics
                        .iter()
                        .all(|d| d.noise_norm.is_finite() && d.gradient_norm.is_finite());
                energies.push(e);
            }
            Err(_) => finite = false,
        }
    }
    let mean = energies.iter().sum::<f64>() / energies.len().max(1) as f64;
    outcome(
        finite && energies.len() == 20 && mean <= 10.0 * det,
        format!("mean max energy {mean:.4} vs deterministic {det:.4} (limit {:.4}), all finite: {finite}", 10.0 * det),
    )
}

fn brownian_statistics() -> Outcome {
    let dt = 0.001;
    let grid = TimeGrid::uniform_steps(100.0, 100_000).unwrap();
    let path = sample_scalar_path(&grid, 2024, 0);
    let n = path.steps() as f64;
    let inc: Vec<f64> = (0..path.steps()).map(|i| path.increment(i, 0)).collect();
    let mean = inc.iter().sum::<f64>() / n;
    let var = inc.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_ok = mean.abs() <= 4.0 * (dt / n).sqrt();
    let var_ok = (var - dt).abs() <= 0.05 * dt;

    let cfg = ConvergenceConfig {
        levels: vec![4, 8],
        dts: vec![0.01, 0.005],
        final_time: 0.2,
        realizations: 6,
        ..ConvergenceConfig::default()
    };
    let csv = |exec: Execution| {
        let mut buf = Vec::new();
        convergence_study(&cfg, exec)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        buf
    };
    let reference = csv(Execution::Sequential);
    let same = [
        Execution::Sequential,
        Execution::ParallelWith(2),
        Execution::ParallelWith(4),
        Execution::Parallel,
    ]
    .into_iter()
    .all(|e| csv(e) == reference);
    outcome(
        mean_ok && var_ok && same,
        format!(
            "mean {mean:.3e} (bound {:.3e}), variance/dt {:.4}, byte-identical across worker counts: {same}",
            4.0 * (dt / n).sqrt(),
            var / dt
        ),
    )
}

type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn main() {
    // Respect `cargo test -- <filter>` loosely: run everything unless a
    // criterion number is given.
    let filter: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let criteria: [Criterion; 10] = [
        (1, "affine exactness", 5, affine_exactness),
        (2, "geometric identities", 60, geometric_identities),
        (
            3,
            "deterministic convergence",
            180,
            deterministic_convergence,
        ),
        (4, "stochastic convergence", 600, stochastic_convergence),
        (5, "error-norm oracle", 60, error_norm_oracle),
        (6, "propagation failure", 240, propagation_failure),
        (7, "backfiring", 300, backfiring),
        (8, "GDM diagnostics decay", 60, gdm_decay),
        (9, "energy boundedness", 600, energy_bound),
        (10, "Brownian statistics", 60, brownian_statistics),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run));
        let elapsed = start.elapsed();
        let (pass, detail) = match result {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        let in_time = elapsed <= Duration::from_secs(limit);
        let pass = pass && in_time;
        let timing = if in_time {
            String::new()
        } else {
            format!(" (over the {limit}s budget)")
        };
        println!(
            "criterion {id} ({name}): {} in {:.1}s{timing}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
