//! Acceptance gate: one test per numbered criterion, each printing a single
//! `[criterion N] PASS/FAIL` line (visible with `--nocapture`, or in the
//! failure output) before asserting. Tests serialize on a mutex so the
//! per-criterion runtime budgets are measured uncontended.

use std::process::Command;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use num_complex::Complex;
use squeeze_core::adiabatic::{
    adiabatic_drift, analytic_variance, longtime_variance, optimal_time_min_variance,
    reduced_two_mode_quadrature, AdiabaticParams,
};
use squeeze_core::dynamics::dark_mode;
use squeeze_core::{
    augmented_variance, build_drift_diffusion, candidate_mode, collective_quadrature,
    default_pulse_time, evolve_exact, evolve_exact_observed, inhomogeneous_system, mean_excitation,
    optimize_mode, output_kernels, quadrature_variance, settled_state, spectrum_report,
    stability_classify, symplectic_eigenvalues, two_mode_quadrature, vacuum_state,
    CandidateKind, CollectiveWeighting, CovarianceState, FrequencyDistribution, ModeSystem,
    OutputStagePlan, Stability, Trajectory,
};
use tempfile::tempdir;

static GATE: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|p| p.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    println!("[criterion {n}] {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn budget(n: u32, elapsed: Duration, limit_s: f64) {
    assert!(
        elapsed.as_secs_f64() < limit_s,
        "criterion {n} over budget: {:.1}s of {limit_s}s",
        elapsed.as_secs_f64()
    );
}

fn homogeneous_trajectory(
    g_a: f64,
    g_b: f64,
    kappa: f64,
    delta: f64,
    t_end: f64,
    steps: usize,
    stride: usize,
) -> (ModeSystem, Trajectory) {
    let sys = ModeSystem::homogeneous(g_a, g_b, kappa, delta).unwrap();
    let dd = build_drift_diffusion(&sys);
    let traj = evolve_exact(&dd, &vacuum_state(&sys), t_end, steps, stride).unwrap();
    (sys, traj)
}

#[test]
fn criterion_01_eigenvalue_closed_form_on_grid() {
    let _g = serial();
    let t0 = Instant::now();
    // 5 x 5 x 3 x 3; g_a = g_b is avoided because the zero pair turns
    // defective there and numeric eigensolvers legitimately scatter
    let gas = [0.37f64, 0.71, 1.33, 2.17, 3.81];
    let gbs = [0.52f64, 0.94, 1.61, 2.73, 4.4];
    let kappas = [0.3f64, 1.0, 2.4];
    let deltas = [0.0f64, 3.2, 11.0];
    let mut worst = 0.0f64;
    for &ga in &gas {
        for &gb in &gbs {
            for &k in &kappas {
                for &d in &deltas {
                    let sys = ModeSystem::homogeneous(ga, gb, k, d).unwrap();
                    let rep = spectrum_report(&sys).unwrap();
                    worst = worst.max(match_spectra(&rep.numeric, &rep.analytic));
                }
            }
        }
    }
    let pass = worst < 1e-9;
    report(1, pass, &format!("drift spectra match the closed form, worst gap {worst:.3e}"));
    budget(1, t0.elapsed(), 5.0);
    assert!(pass, "worst eigenvalue gap {worst:.3e} >= 1e-9");
}

fn match_spectra(numeric: &[Complex<f64>], analytic: &[Complex<f64>]) -> f64 {
    let mut used = vec![false; analytic.len()];
    let mut worst = 0.0f64;
    for n in numeric {
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        for (j, a) in analytic.iter().enumerate() {
            if !used[j] {
                let gap = (n - a).norm();
                if gap < best {
                    best = gap;
                    best_j = j;
                }
            }
        }
        used[best_j] = true;
        worst = worst.max(best);
    }
    worst
}

#[test]
fn criterion_02_stability_regimes() {
    let _g = serial();
    let t0 = Instant::now();
    let gb = 5.0f64;
    let mut ok = true;
    let mut notes = Vec::new();

    for ratio in [0.6f64, 0.9] {
        let ga = ratio * gb;
        let damped = stability_classify(ga, gb, 1.0, 10.0) == Stability::Damped;
        let (sys, traj) = homogeneous_trajectory(ga, gb, 1.0, 10.0, 30.0, 1200, 2);
        let na: Vec<f64> =
            traj.states.iter().map(|s| mean_excitation(s, &sys, "a").unwrap()).collect();
        let peak = na.iter().cloned().fold(0.0f64, f64::max);
        let last = *na.last().unwrap();
        let maxima = na.windows(3).filter(|w| w[1] > w[0] && w[1] > w[2]).count();
        let oscillating_decay = peak > 1.2 * last && maxima >= 2;
        ok &= damped && oscillating_decay;
        notes.push(format!("r={ratio}: damped={damped} osc-decay={oscillating_decay}"));
    }

    let ga = 1.2 * gb;
    let growing = stability_classify(ga, gb, 1.0, 10.0) == Stability::Growing;
    let (sys, traj) = homogeneous_trajectory(ga, gb, 1.0, 10.0, 30.0, 600, 25);
    let na: Vec<f64> =
        traj.states.iter().map(|s| mean_excitation(s, &sys, "a").unwrap()).collect();
    let n = na.len();
    let sustained = na[n - 1] > 100.0 * na[n / 2];
    let r1 = na[n - 3] / na[n - 5];
    let r2 = na[n - 1] / na[n - 3];
    let exponential = r1 > 1.5 && (r1 / r2 - 1.0).abs() < 0.05;
    ok &= growing && sustained && exponential;
    notes.push(format!("r=1.2: growing={growing} exponential={}", sustained && exponential));

    report(2, ok, &notes.join("; "));
    budget(2, t0.elapsed(), 10.0);
    assert!(ok, "{}", notes.join("; "));
}

#[test]
fn criterion_03_short_time_law() {
    let _g = serial();
    let t0 = Instant::now();
    // curvature of var X_ab(0) at t = 0 from vacuum, kappa = 0, delta = 0,
    // one-sided second difference (2f0 - 5f1 + 4f2 - f3)/h^2
    let pairs = [(1.0f64, 0.75), (2.0, 1.5), (1.0, 0.5), (1.5, 1.0), (0.8, 1.2)];
    let mut ok = true;
    let mut notes = Vec::new();
    for (ga, gb) in pairs {
        let sys = ModeSystem::homogeneous(ga, gb, 0.0, 0.0).unwrap();
        let dd = build_drift_diffusion(&sys);
        let spec = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
        let h = 1e-3 / ga.max(gb);
        let traj = evolve_exact(&dd, &vacuum_state(&sys), 3.0 * h, 3, 1).unwrap();
        let f: Vec<f64> =
            traj.states.iter().map(|s| quadrature_variance(s, &spec).unwrap()).collect();
        let fd = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h);
        let claimed = 3.0 * ga * ga - 4.0 * ga * gb;
        let within = (fd - claimed).abs() <= 0.01 * claimed.abs().max(fd.abs());
        ok &= within;
        notes.push(format!("({ga},{gb}): fd {fd:.4e} vs claimed {claimed:.4e}"));
    }
    report(3, ok, &notes.join("; "));
    budget(3, t0.elapsed(), 5.0);
    assert!(ok, "curvature disagrees with 3g_a^2 - 4 g_a g_b: {}", notes.join("; "));
}

#[test]
fn criterion_04_adiabatic_agreement() {
    let _g = serial();
    let t0 = Instant::now();
    let p = AdiabaticParams::new(4.5f64, 5.0, 1.0, 75.0).unwrap();
    let t_star = std::f64::consts::PI * p.delta / (p.g_b * p.g_b - p.g_a * p.g_a);
    let horizon = 3.0 * t_star;

    let (sys, traj) = homogeneous_trajectory(p.g_a, p.g_b, p.kappa, p.delta, horizon, 600, 1);
    let spec = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
    let mut worst_full = 0.0f64;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let v = quadrature_variance(s, &spec).unwrap();
        worst_full = worst_full.max((v - analytic_variance(&p, *t).unwrap()).abs());
    }

    let dd = adiabatic_drift(&p);
    let vac = CovarianceState { time: 0.0, sigma: nalgebra::DMatrix::identity(4, 4) * 0.5 };
    let rspec = reduced_two_mode_quadrature(0.0);
    let rtraj = evolve_exact(&dd, &vac, horizon, 600, 1).unwrap();
    let mut worst_reduced = 0.0f64;
    for (t, s) in rtraj.times.iter().zip(&rtraj.states) {
        let v = quadrature_variance(s, &rspec).unwrap();
        worst_reduced = worst_reduced.max((v - analytic_variance(&p, *t).unwrap()).abs());
    }

    let pass = worst_full < 0.02 && worst_reduced < 1e-6;
    report(
        4,
        pass,
        &format!("full vs formula {worst_full:.3e} (< 0.02), reduced {worst_reduced:.3e} (< 1e-6)"),
    );
    budget(4, t0.elapsed(), 20.0);
    assert!(pass, "full {worst_full:.3e}, reduced {worst_reduced:.3e}");
}

#[test]
fn criterion_05_longtime_limit() {
    let _g = serial();
    let t0 = Instant::now();
    let gb = 5.0f64;
    let mut ok = true;
    let mut worst = 0.0f64;
    for ratio in [0.6f64, 0.7, 0.8, 0.9] {
        let ga = ratio * gb;
        let sys = ModeSystem::homogeneous(ga, gb, 1.0, 75.0).unwrap();
        let dd = build_drift_diffusion(&sys);
        let spec = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
        let settled = settled_state(&dd, &vacuum_state(&sys), 0.0, 1e-6).unwrap();
        let v = quadrature_variance(&settled, &spec).unwrap();
        let p = AdiabaticParams::new(ga, gb, 1.0, 75.0).unwrap();
        let expect = longtime_variance(&p).unwrap();
        let rel = (v - expect).abs() / expect;
        worst = worst.max(rel);
        ok &= rel < 0.05;
    }
    report(5, ok, &format!("settled variance vs g_b^2/(4(g_a+g_b)^2), worst rel {worst:.3e}"));
    budget(5, t0.elapsed(), 10.0);
    assert!(ok, "worst relative gap {worst:.3e} >= 5%");
}

#[test]
fn criterion_06_optimal_time_minimum() {
    let _g = serial();
    let t0 = Instant::now();
    let p = AdiabaticParams::new(4.5f64, 5.0, 1.0, 75.0).unwrap();
    let (t_star, formula_min) = optimal_time_min_variance(&p).unwrap();

    let (sys, traj) =
        homogeneous_trajectory(p.g_a, p.g_b, p.kappa, p.delta, 1.5 * t_star, 4000, 1);
    let spec = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
    let min = traj.min_variance(&spec).unwrap();

    let loc_rel = (min.time - t_star).abs() / t_star;
    let val_rel = (min.value - formula_min).abs() / formula_min;
    let loc_ok = loc_rel < 0.05;
    let val_ok = val_rel < 0.10;
    report(
        6,
        loc_ok && val_ok,
        &format!(
            "min at t {:.4} vs t* {t_star:.4} (rel {loc_rel:.3e}); value {:.6e} vs formula {formula_min:.6e} (rel {val_rel:.3e})",
            min.time, min.value
        ),
    );
    budget(6, t0.elapsed(), 10.0);
    assert!(loc_ok, "minimum location off by {loc_rel:.3e}");
    assert!(val_ok, "minimum value {:.6e} vs formula {formula_min:.6e}", min.value);
}

#[test]
fn criterion_07_physicality_and_purity() {
    let _g = serial();
    // no budget of its own: the runtime is part of criteria 2-6
    // representative trajectories of criteria 2-6
    let runs: Vec<(ModeSystem, Trajectory, bool)> = vec![
        {
            let (s, t) = homogeneous_trajectory(3.0, 5.0, 1.0, 10.0, 30.0, 600, 2);
            (s, t, false)
        },
        {
            let (s, t) = homogeneous_trajectory(6.0, 5.0, 1.0, 10.0, 30.0, 600, 25);
            (s, t, false)
        },
        {
            let (s, t) = homogeneous_trajectory(1.0, 0.75, 0.0, 0.0, 2.0, 200, 2);
            (s, t, true)
        },
        {
            let (s, t) = homogeneous_trajectory(4.5, 5.0, 1.0, 75.0, 150.0, 600, 2);
            (s, t, false)
        },
    ];
    let mut min_nu = f64::INFINITY;
    let mut worst_purity = 0.0f64;
    let mut min_product = f64::INFINITY;
    for (sys, traj, kappa_zero) in &runs {
        let spec0 = two_mode_quadrature(sys, "a", "b", 0.0).unwrap();
        let spec90 = two_mode_quadrature(sys, "a", "b", std::f64::consts::FRAC_PI_2).unwrap();
        for s in &traj.states {
            let nus = symplectic_eigenvalues(s).unwrap();
            for nu in &nus {
                min_nu = min_nu.min(*nu);
                if *kappa_zero {
                    worst_purity = worst_purity.max((nu - 0.5).abs());
                }
            }
            let product =
                quadrature_variance(s, &spec0).unwrap() * quadrature_variance(s, &spec90).unwrap();
            min_product = min_product.min(product);
        }
    }
    // the settled state of criterion 5 participates too
    {
        let sys = ModeSystem::homogeneous(3.0f64, 5.0, 1.0, 75.0).unwrap();
        let dd = build_drift_diffusion(&sys);
        let settled = settled_state(&dd, &vacuum_state(&sys), 0.0, 1e-6).unwrap();
        for nu in symplectic_eigenvalues(&settled).unwrap() {
            min_nu = min_nu.min(nu);
        }
    }
    let pass = min_nu >= 0.5 - 1e-9 && worst_purity < 1e-8 && min_product >= 1.0 / 16.0 - 1e-10;
    report(
        7,
        pass,
        &format!(
            "min symplectic eigenvalue {min_nu:.12}, kappa=0 purity gap {worst_purity:.3e}, min uncertainty product {min_product:.12}"
        ),
    );
    assert!(pass, "nu_min {min_nu}, purity gap {worst_purity:.3e}, product {min_product}");
}

#[test]
fn criterion_08_dark_mode_conservation() {
    let _g = serial();
    let t0 = Instant::now();
    let mut worst = 0.0f64;
    for (ga, gb, k, d) in [(2.2f64, 3.1, 1.0, 1.5), (4.5, 5.0, 1.0, 10.0), (3.0, 5.0, 0.5, 7.0)] {
        let sys = ModeSystem::homogeneous(ga, gb, k, d).unwrap();
        let dd = build_drift_diffusion(&sys);
        let (xd, pd) = dark_mode(&sys).unwrap();
        let traj = evolve_exact(&dd, &vacuum_state(&sys), 10.0 / k, 800, 4).unwrap();
        for spec in [&xd, &pd] {
            let v0 = quadrature_variance(&traj.states[0], spec).unwrap();
            for s in &traj.states {
                worst = worst.max((quadrature_variance(s, spec).unwrap() - v0).abs());
            }
        }
    }
    let pass = worst < 1e-8;
    report(8, pass, &format!("dark-mode variance drift over [0, 10/kappa]: {worst:.3e}"));
    budget(8, t0.elapsed(), 5.0);
    assert!(pass, "dark variance drifted by {worst:.3e}");
}

#[test]
fn criterion_09_output_field_dual_route() {
    let _g = serial();
    let t0 = Instant::now();
    let stage1 = ModeSystem::homogeneous(1.125f64, 1.25, 1.0, 0.001).unwrap();
    let t_pulse = default_pulse_time(&stage1, 40.0).unwrap();
    let plan = OutputStagePlan::new(stage1, t_pulse, 10.0, 2000).unwrap();
    let kernels = output_kernels(&plan).unwrap();

    let best = |mode: &squeeze_core::ModeFunction| -> (f64, f64) {
        let (anom, norm) = kernels.filtered_moments(mode).unwrap();
        let theta = (std::f64::consts::PI - anom.im.atan2(anom.re)) / 2.0;
        (theta, 0.25 + 0.5 * (norm.re - anom.norm()))
    };
    let exp_mode = candidate_mode(&plan, CandidateKind::ExpDecay).unwrap();
    let sqrt_mode = candidate_mode(&plan, CandidateKind::SqrtPhoton).unwrap();
    let opt = optimize_mode(&kernels).unwrap();
    let (theta_exp, var_exp) = best(&exp_mode);
    let (theta_sqrt, var_sqrt) = best(&sqrt_mode);

    let mut worst_route = 0.0f64;
    for (mode, theta, var) in [
        (&exp_mode, theta_exp, var_exp),
        (&sqrt_mode, theta_sqrt, var_sqrt),
        (&opt.mode, opt.theta, opt.variance),
    ] {
        let aug = augmented_variance(&plan, mode, theta).unwrap();
        worst_route = worst_route.max((aug.variance - var).abs());
    }

    let ordered = opt.variance <= var_sqrt + 1e-12 && var_sqrt <= var_exp + 1e-12;
    let squeezed = opt.variance < 0.25;
    let beta0 = kernels.beta[0];
    let beta_exact = beta0.re == -2.0 && beta0.im == 0.0;
    let pass = worst_route < 1e-4 && ordered && squeezed && beta_exact;
    report(
        9,
        pass,
        &format!(
            "routes agree to {worst_route:.3e}; opt {:.6e} <= sqrt {var_sqrt:.6e} <= exp {var_exp:.6e}; beta(0) = {beta0}",
            opt.variance
        ),
    );
    budget(9, t0.elapsed(), 60.0);
    assert!(pass, "routes {worst_route:.3e}, ordered {ordered}, squeezed {squeezed}, beta {beta0}");
}

fn broadened_min_and_curve(
    delta_c: f64,
    width: f64,
    bins: usize,
    t_end: f64,
    steps: usize,
) -> (f64, Vec<f64>) {
    let dist = if width == 0.0 {
        FrequencyDistribution::new(0.0, 4.0, 1).unwrap()
    } else {
        FrequencyDistribution::new(width, 4.0, bins).unwrap()
    };
    let sys = inhomogeneous_system(4.5, 5.0, 1.0, delta_c, &dist).unwrap();
    let dd = build_drift_diffusion(&sys);
    let spec = collective_quadrature(&sys, 0.0, CollectiveWeighting::Coupling).unwrap();
    let mut vars = Vec::with_capacity(steps + 1);
    evolve_exact_observed(&dd, &vacuum_state(&sys), t_end, steps, |_t, sigma| {
        vars.push((sigma * &spec.coefficients).dot(&spec.coefficients));
    })
    .unwrap();
    (vars.iter().cloned().fold(f64::INFINITY, f64::min), vars)
}

#[test]
fn criterion_10_broadening_reduction_ordering_refinement() {
    let _g = serial();
    let t0 = Instant::now();
    let widths = [0.0f64, 0.05, 0.5, 5.0];
    let sets = [(75.0f64, 60.0, 600usize), (0.5, 10.0, 500)];

    // width 0 collapses to the homogeneous model
    let mut worst_w0 = 0.0f64;
    for &(delta_c, t_end, steps) in &sets {
        let (_, binned) = broadened_min_and_curve(delta_c, 0.0, 51, t_end, steps);
        let sys = ModeSystem::homogeneous(4.5f64, 5.0, 1.0, delta_c).unwrap();
        let dd = build_drift_diffusion(&sys);
        let spec = two_mode_quadrature(&sys, "a", "b", 0.0).unwrap();
        let mut k = 0;
        evolve_exact_observed(&dd, &vacuum_state(&sys), t_end, steps, |_t, sigma| {
            let v = (sigma * &spec.coefficients).dot(&spec.coefficients);
            worst_w0 = worst_w0.max((v - binned[k]).abs());
            k += 1;
        })
        .unwrap();
    }
    let w0_ok = worst_w0 < 1e-8;

    // minima ordered across widths (run at the resolution the refinement
    // sub-check itself shows is needed), and 51 -> 101 refinement stable
    let mut ordering_ok = true;
    let mut refine_ok = true;
    let mut notes = vec![format!("width-0 gap {worst_w0:.3e}")];
    for &(delta_c, t_end, steps) in &sets {
        let mut mins = Vec::new();
        for &w in &widths {
            let (min101, curve101) = broadened_min_and_curve(delta_c, w, 101, t_end, steps);
            let (_, curve51) = broadened_min_and_curve(delta_c, w, 51, t_end, steps);
            let gap = curve51
                .iter()
                .zip(&curve101)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            if gap >= 1e-3 {
                refine_ok = false;
                notes.push(format!("delta_c={delta_c} width={w}: 51->101 gap {gap:.3e}"));
            }
            mins.push(min101);
        }
        let ordered = mins.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        if !ordered {
            ordering_ok = false;
        }
        notes.push(format!(
            "delta_c={delta_c} minima {:?} ordered={ordered}",
            mins.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>()
        ));
    }

    let pass = w0_ok && ordering_ok && refine_ok;
    report(10, pass, &notes.join("; "));
    budget(10, t0.elapsed(), 60.0);
    assert!(pass, "{}", notes.join("; "));
}

#[test]
fn criterion_11_preset_determinism() {
    let _g = serial();
    let presets = [
        "fig3a",
        "fig3b",
        "fig3c",
        "fig4",
        "fig5",
        "fig6",
        "fig7",
        "fig8",
        "fig9",
        "fig10top",
        "fig10bottom",
    ];
    let da = tempdir().unwrap();
    let db = tempdir().unwrap();
    let mut pass_times = Vec::new();
    for dir in [da.path(), db.path()] {
        let t0 = Instant::now();
        for id in presets {
            let out = Command::new(env!("CARGO_BIN_EXE_simulate"))
                .args(["--preset", id, "--out"])
                .arg(dir)
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "{id}: {}",
                String::from_utf8_lossy(&out.stderr)
            );
        }
        pass_times.push(t0.elapsed().as_secs_f64());
    }

    let mut names: Vec<String> = std::fs::read_dir(da.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(names.len() >= 2 * presets.len(), "missing outputs: {names:?}");
    let mut diffs = Vec::new();
    for name in &names {
        let a = std::fs::read(da.path().join(name)).unwrap();
        let b = std::fs::read(db.path().join(name)).unwrap();
        if a != b {
            diffs.push(name.clone());
        }
    }
    let identical = diffs.is_empty();
    let in_budget = pass_times.iter().all(|&t| t < 60.0);
    report(
        11,
        identical && in_budget,
        &format!(
            "{} files byte-identical across reruns; passes {:.1}s / {:.1}s",
            names.len(),
            pass_times[0],
            pass_times[1]
        ),
    );
    assert!(identical, "differing outputs: {diffs:?}");
    assert!(in_budget, "preset passes took {pass_times:?}");
}
