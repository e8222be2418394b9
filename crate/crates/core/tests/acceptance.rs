//! Acceptance suite. Runs as a plain binary (`harness = false`) so that every
//! criterion prints exactly one PASS/FAIL line whether or not output capture
//! is on. Exits nonzero when any criterion fails.

use std::time::{Duration, Instant};

use euler_align::grid::{
    grid_diagnostics, grid_step, init_grid, run_grid, vanishing_viscosity_study, GridProfile, GridRunParams,
    PeriodicKernel, Reconstruction, VelocityField,
};
use euler_align::harness::{self, ScenarioConfig, SHIPPED};
use euler_align::kernels::{make_builtin, Kernel};
use euler_align::measures::{flat_metric, wasserstein, wasserstein_with, WassersteinMethod};
use euler_align::particles::{
    energy_identity_residual, simulate, Formulation, InitialCloud, ParticleState, Scheme, SimulationParams, Trajectory,
};
use euler_align::rng::generator;
use euler_align::stability::stability_sweep;
use euler_align::{AtomicMeasure, Result};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn scenario(name: &str) -> ScenarioConfig {
    harness::shipped_scenario(name).expect("shipped scenario")
}

/// Initial state and kernel of a shipped particle scenario.
fn particle_setup(name: &str) -> (ParticleState, Kernel, SimulationParams) {
    let cfg = scenario(name);
    let k = cfg.kernel.as_ref().unwrap().build().unwrap();
    let sec = cfg.particles.unwrap();
    let init = sec.cloud.build(k.dim(), cfg.seed).unwrap();
    (init, k, sec.simulation)
}

fn rk4(t_end: f64, dt: f64, formulation: Formulation) -> SimulationParams {
    SimulationParams {
        t_end,
        dt,
        scheme: Scheme::Rk4,
        formulation,
        record_every: 1,
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn energy_identity() -> Result<Outcome> {
    let start = Instant::now();
    let (init, k, _) = particle_setup("two_clusters_quadratic");
    assert_eq!(init.len(), 16);
    let traj = simulate(&init, &k, &rk4(2.0, 1e-3, Formulation::VelocityU))?;
    let worst = energy_identity_residual(&traj, &k)?
        .iter()
        .fold(0.0f64, |m, (_, r)| m.max(*r));
    let elapsed = start.elapsed();
    Ok(outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "max |dE/dt + D| = {worst:.3e} (tol 1e-6), {:.2}s (limit 5s)",
            elapsed.as_secs_f64()
        ),
    ))
}

fn psd_energy_inequality() -> Result<Outcome> {
    let mut worst = f64::NEG_INFINITY;
    for name in ["two_clusters_quadratic", "smoothed_norm_cloud"] {
        let (init, k, params) = particle_setup(name);
        assert!(k.flags.psd);
        let traj = simulate(&init, &k, &params)?;
        let e0 = traj.diagnostics[0].energy;
        for r in &traj.diagnostics {
            worst = worst.max((r.energy + r.dissipation_integral) / e0 - 1.0);
        }
    }
    Ok(outcome(
        worst <= 1e-6,
        format!("max (E + int D)/E0 - 1 = {worst:.3e} (tol 1e-6)"),
    ))
}

fn general_energy_bound() -> Result<Outcome> {
    let (init, k, params) = particle_setup("gaussian_bump_cloud");
    assert!(!k.flags.psd);
    let traj = simulate(&init, &k, &params)?;
    let e0 = traj.diagnostics[0].energy;
    let mut worst = f64::NEG_INFINITY;
    for r in traj.diagnostics.iter().filter(|r| r.time <= 1.0 + 1e-12) {
        let bound = (4.0 * r.time * k.hess_sup_norm).exp() * e0 * (1.0 + 1e-6);
        worst = worst.max(r.energy / bound);
    }
    Ok(outcome(worst <= 1.0, format!("max E(t) / bound = {worst:.6}")))
}

fn arz_equivalence() -> Result<Outcome> {
    let start = Instant::now();
    let mut drift = 0.0f64;
    for name in ["two_clusters_quadratic", "smoothed_norm_cloud", "gaussian_bump_cloud"] {
        let (init, k, params) = particle_setup(name);
        let traj = simulate(&init, &k, &params)?;
        drift = drift.max(traj.diagnostics.iter().fold(0.0, |m, r| m.max(r.w_drift)));
    }
    let mut gap = 0.0f64;
    for (kname, params) in [
        ("quadratic", vec![]),
        ("smoothed_norm", vec![0.5]),
        ("gaussian_bump", vec![1.0]),
    ] {
        for dim in [1, 2] {
            let k = make_builtin(kname, &params, dim)?;
            let init = InitialCloud::UniformBox {
                n: 8,
                half_width: 1.5,
                speed: 1.0,
            }
            .build(dim, 11)?;
            let end = |f: Formulation| -> Result<Vec<f64>> {
                let t = simulate(&init, &k, &rk4(1.0, 1e-3, f))?;
                Ok(t.final_state().unwrap().positions().to_vec())
            };
            gap = gap.max(max_abs_diff(&end(Formulation::VelocityU)?, &end(Formulation::OffsetW)?));
        }
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        drift <= 1e-8 && gap <= 1e-6 && elapsed < Duration::from_secs(5),
        format!(
            "w drift {drift:.3e} (tol 1e-8), position gap at t=1 {gap:.3e} (tol 1e-6), {:.2}s (limit 5s)",
            elapsed.as_secs_f64()
        ),
    ))
}

fn momentum(traj: &Trajectory, i: usize) -> &[f64] {
    &traj.diagnostics[i].momentum
}

fn momentum_conservation() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for (kname, params) in [
        ("quadratic", vec![]),
        ("smoothed_norm", vec![0.5]),
        ("gaussian_bump", vec![1.0]),
    ] {
        let k = make_builtin(kname, &params, 2)?;
        assert!(k.flags.even);
        let init = InitialCloud::UniformBox {
            n: 16,
            half_width: 2.0,
            speed: 1.0,
        }
        .build(2, 5)?;
        let mut p = rk4(10.0, 1e-2, Formulation::VelocityU);
        p.record_every = 10;
        let traj = simulate(&init, &k, &p)?;
        for i in 0..traj.diagnostics.len() {
            worst = worst.max(max_abs_diff(momentum(&traj, i), momentum(&traj, 0)));
        }
    }
    Ok(outcome(
        worst <= 1e-8,
        format!("max momentum drift over t <= 10: {worst:.3e} (tol 1e-8)"),
    ))
}

fn quadratic_closed_form() -> Result<Outcome> {
    let k = make_builtin("quadratic", &[], 2)?;
    let init = InitialCloud::UniformBox {
        n: 12,
        half_width: 2.0,
        speed: 1.5,
    }
    .build(2, 21)?;
    let traj = simulate(&init, &k, &rk4(5.0, 1e-3, Formulation::VelocityU))?;
    let m = init.measure.weights();
    let mut mean = [0.0; 2];
    for (i, w) in m.iter().enumerate() {
        for a in 0..2 {
            mean[a] += w * init.velocities[2 * i + a];
        }
    }
    let mut worst = 0.0f64;
    for snap in &traj.snapshots {
        let decay = (-snap.time).exp();
        for (j, v) in snap.velocities.iter().enumerate() {
            let exact = mean[j % 2] + (init.velocities[j] - mean[j % 2]) * decay;
            worst = worst.max((v - exact).abs());
        }
    }
    Ok(outcome(
        worst <= 1e-9,
        format!("max velocity error over t <= 5: {worst:.3e} (tol 1e-9)"),
    ))
}

fn random_probability(rng: &mut impl Rng, dim: usize, n: usize) -> AtomicMeasure {
    let coords = (0..n * dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    AtomicMeasure::from_flat(dim, coords, raw.iter().map(|w| w / total).collect()).unwrap()
}

fn metric_suite() -> Result<Outcome> {
    let start = Instant::now();
    let mut dirac_err = 0.0f64;
    for (x, y) in [
        (vec![0.0], vec![0.5]),
        (vec![0.0], vec![1.999]),
        (vec![-1.0], vec![4.0]),
        (vec![0.0, 0.0], vec![0.6, 0.8]),
        (vec![1.0, 1.0], vec![-2.0, 3.0]),
        (vec![0.25, -0.5, 2.0], vec![0.25, -0.5, 2.0]),
    ] {
        let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let d = flat_metric(&AtomicMeasure::dirac(x), &AtomicMeasure::dirac(y))?.value;
        dirac_err = dirac_err.max((d - dist.min(2.0)).abs());
    }

    let mut rng = generator(2024);
    let mut quantile_err = 0.0f64;
    for _ in 0..200 {
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let mu = random_probability(&mut rng, 1, n);
        let nu = random_probability(&mut rng, 1, m);
        let q = wasserstein_with(&mu, &nu, 2, WassersteinMethod::Auto)?.value;
        let lp = wasserstein_with(&mu, &nu, 2, WassersteinMethod::Lp)?.value;
        quantile_err = quantile_err.max((q - lp).abs());
    }

    let mut order_violation = 0.0f64;
    for i in 0..500 {
        let dim = 1 + i % 2;
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let mu = random_probability(&mut rng, dim, n);
        let nu = random_probability(&mut rng, dim, m);
        let df = flat_metric(&mu, &nu)?.value;
        let w1 = wasserstein(&mu, &nu, 1)?.value;
        let w2 = wasserstein(&mu, &nu, 2)?.value;
        order_violation = order_violation.max(df - w1).max(w1 - w2);
    }
    let elapsed = start.elapsed();
    Ok(outcome(
        dirac_err <= 1e-9 && quantile_err <= 1e-9 && order_violation <= 1e-9 && elapsed < Duration::from_secs(30),
        format!(
            "dirac pairs {dirac_err:.1e}, quantile vs LP W2 {quantile_err:.1e}, ordering excess {order_violation:.1e} \
             (tol 1e-9), {:.2}s (limit 30s)",
            elapsed.as_secs_f64()
        ),
    ))
}

fn bump() -> GridProfile {
    GridProfile::GaussianBump {
        center: 0.0,
        width: 0.8,
        velocity: VelocityField::Tanh {
            drift: 0.2,
            amplitude: -0.5,
            scale: 1.0,
            center: 0.0,
        },
    }
}

fn viscous_solver() -> Result<Outcome> {
    let k = make_builtin("smoothed_norm", &[0.5], 1)?;
    let (length, cells, inv_n) = (8.0, 128, 0.01);
    let pk = PeriodicKernel::new(&k, length, cells)?;

    let mut g = init_grid(&bump(), length, cells, inv_n, None)?;
    let mass0 = g.mass();
    let mom0 = g.momentum();
    let mut mass_drift = 0.0f64;
    let mut mom_drift = 0.0f64;
    for _ in 0..10_000 {
        let dt = g.max_dt(&pk);
        g = grid_step(&g, &pk, dt, Reconstruction::Minmod)?;
        mass_drift = mass_drift.max((g.mass() - mass0).abs() / mass0);
        mom_drift = mom_drift.max((g.momentum() - mom0).abs());
    }

    let flat = GridProfile::Constant { velocity: 0.7 };
    let c0 = init_grid(&flat, length, cells, inv_n, None)?;
    let mut c = c0.clone();
    for _ in 0..200 {
        let dt = c.max_dt(&pk);
        c = grid_step(&c, &pk, dt, Reconstruction::Minmod)?;
    }
    let still = max_abs_diff(&c.rho, &c0.rho).max(max_abs_diff(&c.mom, &c0.mom));

    let g0 = init_grid(&bump(), length, cells, inv_n, None)?;
    let run = run_grid(
        &g0,
        &pk,
        &GridRunParams {
            t_end: 1.0,
            probe_times: vec![],
            record_every: 1,
            reconstruction: Reconstruction::Minmod,
        },
    )?;
    let d = &run.diagnostics;
    let e0 = d[0].energy;
    let mut integral = 0.0;
    let mut energy_excess = f64::NEG_INFINITY;
    for w in d.windows(2) {
        let rate = |r: &euler_align::grid::GridDiagnostics| r.viscous_dissipation + r.alignment_dissipation;
        integral += 0.5 * (w[1].time - w[0].time) * (rate(&w[0]) + rate(&w[1]));
        energy_excess = energy_excess.max((w[1].energy + integral) / e0 - 1.0);
    }
    let diag0 = grid_diagnostics(&g0, &pk);
    assert_eq!(diag0.energy, e0);

    Ok(outcome(
        mass_drift <= 1e-12 && still <= 1e-13 && energy_excess <= 1e-3 && mom_drift <= 1e-10,
        format!(
            "mass drift {mass_drift:.1e} over 1e4 steps (tol 1e-12), constant state {still:.1e} (tol 1e-13), \
             energy excess {energy_excess:.1e} (tol 1e-3), momentum drift {mom_drift:.1e} (tol 1e-10)"
        ),
    ))
}

fn vanishing_viscosity() -> Result<Outcome> {
    let start = Instant::now();
    let cfg = scenario("viscosity_sweep");
    let k = cfg.kernel.as_ref().unwrap().build()?;
    let study = cfg.vanishing_viscosity.unwrap();
    assert_eq!(study.cells, 512);
    assert_eq!(study.n_list, vec![50, 100, 200, 400, 800]);
    let table = vanishing_viscosity_study(&study, &k)?;
    let d: Vec<f64> = table.rows.iter().map(|r| r.flat_metric).collect();
    let monotone = d.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let ratio = d[0] / d[d.len() - 1];
    let elapsed = start.elapsed();
    Ok(outcome(
        monotone && ratio >= 4.0 && elapsed < Duration::from_secs(180),
        format!(
            "d_f = {:?}, non-increasing within 10%: {monotone}, N=50/N=800 ratio {ratio:.2} (need >= 4), \
             {:.2}s (limit 180s)",
            d.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    ))
}

fn stability_results() -> Result<Vec<euler_align::stability::SweepResult>> {
    let cfg = scenario("stability_sweep");
    let k = cfg.kernel.as_ref().unwrap().build()?;
    let sc = cfg.stability.unwrap();
    assert_eq!(sc.deltas, vec![0.1, 0.01, 0.001]);
    assert_eq!(sc.t_end, 1.0);
    stability_sweep(&sc, &k)
}

fn weak_strong(results: &[euler_align::stability::SweepResult], elapsed: Duration) -> Outcome {
    let sups: Vec<f64> = results.iter().map(|r| r.sup_error).collect();
    let ratios: Vec<f64> = sups.windows(2).map(|w| w[0] / w[1]).collect();
    let decay = ratios.iter().all(|r| *r >= 10.0);
    let gronwall = results.iter().all(|r| r.gronwall.passed);
    outcome(
        decay && gronwall && elapsed < Duration::from_secs(60),
        format!(
            "sup error per decade ratios {:?} (need >= 10), gronwall passed on all runs: {gronwall}, \
             {:.2}s (limit 60s)",
            ratios.iter().map(|r| format!("{r:.1}")).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    )
}

fn figalli_kang(results: &[euler_align::stability::SweepResult]) -> Outcome {
    let matched = results
        .iter()
        .all(|r| r.initial.tv0 == 0.0 && r.initial.tv_moment0 == 0.0);
    let min_margin = results
        .iter()
        .flat_map(|r| r.figalli_kang.margin.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let records: usize = results.iter().map(|r| r.figalli_kang.margin.len()).sum();
    outcome(
        matched && min_margin >= 0.0,
        format!("min margin {min_margin:.3e} over {records} records, matched initial densities: {matched}"),
    )
}

fn determinism() -> Result<Outcome> {
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut mismatched = Vec::new();
    for (name, _) in SHIPPED {
        let cfg = scenario(name);
        let a = harness::manifest(&cfg, &harness::execute(&cfg)?);
        let b = single.install(|| harness::execute(&cfg).map(|art| harness::manifest(&cfg, &art)))?;
        if harness::canonical_json(&a) != harness::canonical_json(&b) {
            mismatched.push(*name);
        }
    }
    Ok(outcome(
        mismatched.is_empty(),
        format!(
            "{} shipped scenarios rerun (default pool vs 1 thread), mismatched manifests: {mismatched:?}",
            SHIPPED.len()
        ),
    ))
}

fn report(id: usize, title: &str, result: Result<Outcome>) -> bool {
    let o = result.unwrap_or_else(|e| outcome(false, format!("error: {e}")));
    println!(
        "{} [{id:>2}] {title}: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.detail
    );
    o.passed
}

fn main() {
    let mut ok = true;
    ok &= report(1, "energy identity", energy_identity());
    ok &= report(2, "PSD energy inequality", psd_energy_inequality());
    ok &= report(3, "general energy bound", general_energy_bound());
    ok &= report(4, "ARZ equivalence", arz_equivalence());
    ok &= report(5, "momentum conservation", momentum_conservation());
    ok &= report(6, "quadratic closed form", quadratic_closed_form());
    ok &= report(7, "metric suite", metric_suite());
    ok &= report(8, "viscous solver", viscous_solver());
    ok &= report(9, "vanishing viscosity", vanishing_viscosity());
    let start = Instant::now();
    let sweep = stability_results();
    let elapsed = start.elapsed();
    match sweep {
        Ok(results) => {
            ok &= report(10, "weak-strong stability", Ok(weak_strong(&results, elapsed)));
            ok &= report(11, "Figalli-Kang check", Ok(figalli_kang(&results)));
        }
        Err(e) => {
            let msg = e.to_string();
            ok &= report(10, "weak-strong stability", Err(e));
            ok &= report(11, "Figalli-Kang check", Ok(outcome(false, format!("error: {msg}"))));
        }
    }
    ok &= report(12, "determinism", determinism());
    if !ok {
        std::process::exit(1);
    }
}
