//! Figure presets: canned parameter sets reproducing the reference
//! figures, runnable as `simulate --preset <id>`. Each writes its data
//! files plus a `<id>.manifest.json` into the output directory.

use rayon::prelude::*;
use squeeze_core::{
    augmented_variance, build_drift_diffusion, candidate_mode, default_pulse_time,
    optimize_mode, output_kernels, two_mode_quadrature, vacuum_state, AdiabaticParams,
    CandidateKind, CollectiveWeighting, ModeSystem, OutputStagePlan,
};

use crate::config::{Resolved, TableFormat};
use crate::emit::{Sink, Table};
use crate::error::{CliError, Result};
use crate::scenarios::{
    evaluate_mode, gate_growth, inhomo_series, min_var_streamed, observable_series, var_of,
};

/// Every preset id, in run order.
pub const ALL: [&str; 11] = [
    "fig3a", "fig3b", "fig3c", "fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10top",
    "fig10bottom",
];

/// One line per preset for `--list-presets`.
pub fn describe(id: &str) -> Option<&'static str> {
    Some(match id {
        "fig3a" => "ensemble excitations, damped: g_a=0.6 g_b, g_b=5, kappa=1, delta=10, t in [0,30]",
        "fig3b" => "ensemble excitations, near threshold: g_a=0.9 g_b, g_b=5, kappa=1, delta=10, t in [0,30]",
        "fig3c" => "ensemble excitations, growing (runs with allow_growing): g_a=1.2 g_b, g_b=5, kappa=1, delta=10, t in [0,30]",
        "fig4" => "collective quadrature variances X(0), X(pi/2): g_a=0.5 g_b, g_b=kappa=1, delta=5, t in [0,20]",
        "fig5" => "Var X(0) for delta in {75,50,20,5}: g_a=0.9 g_b, g_b=5, kappa=1, t in [0,60]",
        "fig6" => "minimum Var X(0) over the (kappa, g_a) grid at delta=g_b (axes in units of g_b)",
        "fig7" => "adiabatic closed-form Var X(0), g_a/g_b in {0.9,0.8,0.7,0.6}: g_b=5, kappa=1, delta=75, t in [0,150]",
        "fig8" => "output-mode variances vs kappa in {0.2..2.0} (units of g_b): g_a=0.9 g_b, delta=0.01 g_b",
        "fig9" => "output temporal modes (exp, sqrt-photon, optimized): g_b=1.25 kappa, g_a=0.9 g_b, delta=0.001",
        "fig10top" => "broadened-ensemble Var X(0), widths {0,0.05,0.5,5} kappa: g_b=5, g_a=4.5, delta=75, t in [0,60]",
        "fig10bottom" => "broadened-ensemble Var X(0), widths {0,0.05,0.5,5} kappa: g_b=5, g_a=4.5, delta=0.5, t in [0,10]",
        _ => return None,
    })
}

pub fn run_figure(r: &Resolved) -> Result<()> {
    let id = r.figure.as_deref().expect("figure scenario resolved without an id");
    match id {
        "fig3a" => fig3(r, "fig3a", 3.0, false),
        "fig3b" => fig3(r, "fig3b", 4.5, false),
        "fig3c" => fig3(r, "fig3c", 6.0, true),
        "fig4" => fig4(r),
        "fig5" => fig5(r),
        "fig6" => fig6(r),
        "fig7" => fig7(r),
        "fig8" => fig8(r),
        "fig9" => fig9(r),
        "fig10top" => fig10(r, "fig10top", 75.0, 60.0, 600),
        "fig10bottom" => fig10(r, "fig10bottom", 0.5, 10.0, 500),
        other => {
            let known = ALL.join(", ");
            Err(CliError::Config(format!("unknown figure `{other}` (known: {known})")))
        }
    }
}

fn sink_for(r: &Resolved) -> Result<Sink> {
    Sink::new(&r.out_dir, r.format == TableFormat::Json)
}

fn params_json(g_a: f64, g_b: f64, kappa: f64, delta: f64) -> serde_json::Value {
    serde_json::json!({ "g_a": g_a, "g_b": g_b, "kappa": kappa, "delta": delta })
}

fn fig3(r: &Resolved, id: &str, g_a: f64, embeds_allow: bool) -> Result<()> {
    let (g_b, kappa, delta, t_end, steps) = (5.0, 1.0, 10.0, 30.0, 1200);
    gate_growth(g_a, g_b, kappa, delta, r.allow_growing || embeds_allow)?;
    let sys = ModeSystem::homogeneous(g_a, g_b, kappa, delta)?;
    let dd = build_drift_diffusion(&sys);
    let n_of = |j: usize| {
        let (x, p) = (2 * j, 2 * j + 1);
        move |sigma: &nalgebra::DMatrix<f64>| 0.5 * (sigma[(x, x)] + sigma[(p, p)] - 1.0)
    };
    let (f_a, f_b, f_c) = (
        n_of(sys.mode_index("a")?),
        n_of(sys.mode_index("b")?),
        n_of(sys.cavity_index()),
    );
    let obs: Vec<&dyn Fn(&nalgebra::DMatrix<f64>) -> f64> = vec![&f_a, &f_b, &f_c];
    let (times, rows) = observable_series(&dd, &vacuum_state(&sys), t_end, steps, &obs)?;

    let mut table = Table::new(vec!["t", "n_a", "n_b", "n_cavity"]);
    for (t, row) in times.iter().zip(&rows) {
        let mut line = vec![*t];
        line.extend_from_slice(row);
        table.push(line);
    }
    let mut sink = sink_for(r)?;
    sink.table(id, "timeseries", &table)?;
    sink.finish(
        id,
        "figure",
        params_json(g_a, g_b, kappa, delta),
        serde_json::json!({ "preset": describe(id), "allow_growing": embeds_allow }),
    )
}

fn fig4(r: &Resolved) -> Result<()> {
    let (g_a, g_b, kappa, delta, t_end, steps) = (0.5, 1.0, 1.0, 5.0, 20.0, 2000);
    let sys = ModeSystem::homogeneous(g_a, g_b, kappa, delta)?;
    let dd = build_drift_diffusion(&sys);
    let spec0 = two_mode_quadrature(&sys, "a", "b", 0.0)?;
    let spec90 = two_mode_quadrature(&sys, "a", "b", std::f64::consts::FRAC_PI_2)?;
    let (f0, f90) = (var_of(&spec0), var_of(&spec90));
    let obs: Vec<&dyn Fn(&nalgebra::DMatrix<f64>) -> f64> = vec![&f0, &f90];
    let (times, rows) = observable_series(&dd, &vacuum_state(&sys), t_end, steps, &obs)?;

    let mut table = Table::new(vec!["t", "var_X0", "var_Xpi2"]);
    for (t, row) in times.iter().zip(&rows) {
        table.push(vec![*t, row[0], row[1]]);
    }
    let mut sink = sink_for(r)?;
    sink.table("fig4", "timeseries", &table)?;
    sink.finish(
        "fig4",
        "figure",
        params_json(g_a, g_b, kappa, delta),
        serde_json::json!({ "preset": describe("fig4") }),
    )
}

fn fig5(r: &Resolved) -> Result<()> {
    let (g_a, g_b, kappa, t_end, steps) = (4.5, 5.0, 1.0, 60.0, 2400);
    let detunings = [75.0, 50.0, 20.0, 5.0];
    let curves: Vec<(Vec<f64>, Vec<f64>)> = detunings
        .par_iter()
        .map(|&delta| {
            let sys = ModeSystem::homogeneous(g_a, g_b, kappa, delta)?;
            let dd = build_drift_diffusion(&sys);
            let spec = two_mode_quadrature(&sys, "a", "b", 0.0)?;
            let f = var_of(&spec);
            let obs: Vec<&dyn Fn(&nalgebra::DMatrix<f64>) -> f64> = vec![&f];
            let (times, rows) = observable_series(&dd, &vacuum_state(&sys), t_end, steps, &obs)?;
            Ok((times, rows.into_iter().map(|row| row[0]).collect()))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec!["t", "var_d75", "var_d50", "var_d20", "var_d5"]);
    for (k, t) in curves[0].0.iter().enumerate() {
        table.push(vec![*t, curves[0].1[k], curves[1].1[k], curves[2].1[k], curves[3].1[k]]);
    }
    let mut sink = sink_for(r)?;
    sink.table("fig5", "timeseries", &table)?;
    sink.finish(
        "fig5",
        "figure",
        serde_json::json!({
            "g_a": g_a, "g_b": g_b, "kappa": kappa, "delta": detunings, "t_end": t_end,
        }),
        serde_json::json!({ "preset": describe("fig5") }),
    )
}

fn fig6(r: &Resolved) -> Result<()> {
    // Axes in units of g_b: kappa/g_b from 0.1 to 2.0, g_a/g_b from 0.05
    // to 0.95, with delta = g_b. Internally kappa = 1, so g_b = 1/x.
    let kappas: Vec<f64> = (1..=20).map(|k| k as f64 / 10.0).collect();
    let ratios: Vec<f64> = (1..=19).map(|j| j as f64 * 0.05).collect();
    let (t_end, steps) = (120.0, 3000);

    let mut cells: Vec<(f64, f64)> = Vec::new();
    for &x in &kappas {
        for &ratio in &ratios {
            cells.push((x, ratio));
        }
    }
    let rows: Vec<Vec<f64>> = cells
        .par_iter()
        .map(|&(x, ratio)| {
            let g_b = 1.0 / x;
            let g_a = ratio * g_b;
            let sys = ModeSystem::homogeneous(g_a, g_b, 1.0, g_b)?;
            let dd = build_drift_diffusion(&sys);
            let spec = two_mode_quadrature(&sys, "a", "b", 0.0)?;
            let min = min_var_streamed(&dd, &vacuum_state(&sys), t_end, steps, &spec)?;
            Ok(vec![x, ratio, min])
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec!["kappa", "g_a", "min_variance"]);
    for row in rows {
        table.push(row);
    }
    let mut sink = sink_for(r)?;
    sink.table("fig6", "grid", &table)?;
    sink.finish(
        "fig6",
        "figure",
        serde_json::json!({
            "delta": "g_b",
            "kappa_over_gb": { "from": 0.1, "to": 2.0, "step": 0.1 },
            "ga_over_gb": { "from": 0.05, "to": 0.95, "step": 0.05 },
            "t_end_internal": t_end,
        }),
        serde_json::json!({ "preset": describe("fig6") }),
    )
}

fn fig7(r: &Resolved) -> Result<()> {
    let (g_b, kappa, delta, t_end, n) = (5.0, 1.0, 75.0, 150.0, 3000);
    let ratios = [0.9, 0.8, 0.7, 0.6];
    let times: Vec<f64> = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for &ratio in &ratios {
        let p = AdiabaticParams::new(ratio * g_b, g_b, kappa, delta)?;
        let curve: Vec<f64> = times
            .iter()
            .map(|&t| squeeze_core::adiabatic::analytic_variance(&p, t))
            .collect::<squeeze_core::Result<_>>()?;
        columns.push(curve);
    }

    let mut table = Table::new(vec!["t", "var_r090", "var_r080", "var_r070", "var_r060"]);
    for (k, t) in times.iter().enumerate() {
        table.push(vec![*t, columns[0][k], columns[1][k], columns[2][k], columns[3][k]]);
    }
    let mut sink = sink_for(r)?;
    sink.table("fig7", "timeseries", &table)?;
    sink.finish(
        "fig7",
        "figure",
        serde_json::json!({
            "g_b": g_b, "kappa": kappa, "delta": delta, "ga_over_gb": ratios, "t_end": t_end,
        }),
        serde_json::json!({ "preset": describe("fig7") }),
    )
}

fn fig8(r: &Resolved) -> Result<()> {
    // Couplings fixed, cavity linewidth swept: g_b = 1 sets the unit.
    let (g_a, g_b, delta, t_pulse, n_grid) = (0.9, 1.0, 0.01, 300.0, 1000);
    let kappas: Vec<f64> = (1..=10).map(|k| k as f64 / 5.0).collect();
    let rows: Vec<Vec<f64>> = kappas
        .par_iter()
        .map(|&kappa| {
            let stage1 = ModeSystem::homogeneous(g_a, g_b, kappa, delta)?;
            let plan = OutputStagePlan::new(stage1, t_pulse, 10.0 / kappa, n_grid)?;
            let kernels = output_kernels(&plan)?;
            let exp = evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::ExpDecay)?)?;
            let sqrt =
                evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::SqrtPhoton)?)?;
            let opt = optimize_mode(&kernels)?;
            Ok(vec![kappa, exp.variance, sqrt.variance, opt.variance])
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec!["kappa", "var_exp", "var_sqrt", "var_opt"]);
    for row in rows {
        table.push(row);
    }
    let mut sink = sink_for(r)?;
    sink.table("fig8", "grid", &table)?;
    sink.finish(
        "fig8",
        "figure",
        serde_json::json!({
            "g_a": g_a, "g_b": g_b, "delta": delta, "kappa_over_gb": kappas,
            "t_pulse": t_pulse, "grid_points": n_grid,
        }),
        serde_json::json!({ "preset": describe("fig8") }),
    )
}

fn fig9(r: &Resolved) -> Result<()> {
    let (g_a, g_b, kappa, delta, horizon, n_grid) = (1.125, 1.25, 1.0, 0.001, 10.0, 2000);
    let stage1 = ModeSystem::homogeneous(g_a, g_b, kappa, delta)?;
    let t_pulse = default_pulse_time(&stage1, 40.0)?;
    let plan = OutputStagePlan::new(stage1, t_pulse, horizon, n_grid)?;
    let kernels = output_kernels(&plan)?;

    let exp = evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::ExpDecay)?)?;
    let sqrt = evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::SqrtPhoton)?)?;
    let opt = optimize_mode(&kernels)?;
    let augmented = augmented_variance(&plan, &opt.mode, opt.theta)?;

    let mut sink = sink_for(r)?;
    sink.mode("fig9_exp", &exp.mode.times, &exp.mode.samples)?;
    sink.mode("fig9_sqrt", &sqrt.mode.times, &sqrt.mode.samples)?;
    sink.mode("fig9_opt", &opt.mode.times, &opt.mode.samples)?;
    sink.finish(
        "fig9",
        "figure",
        serde_json::json!({
            "g_a": g_a, "g_b": g_b, "kappa": kappa, "delta": delta,
            "horizon": horizon, "grid_points": n_grid,
        }),
        serde_json::json!({
            "preset": describe("fig9"),
            "t_pulse": t_pulse,
            "var_exp": exp.variance,
            "var_sqrt": sqrt.variance,
            "var_opt": opt.variance,
            "theta_opt": opt.theta,
            "var_opt_augmented": augmented.variance,
            "commutator": augmented.commutator,
            "beta0_re": kernels.beta[0].re,
            "beta0_im": kernels.beta[0].im,
        }),
    )
}

fn fig10(r: &Resolved, id: &str, delta_c: f64, t_end: f64, steps: usize) -> Result<()> {
    let (g_a, g_b, kappa, bins) = (4.5, 5.0, 1.0, 101);
    let widths = [0.0, 0.05, 0.5, 5.0];
    let curves: Vec<(Vec<f64>, Vec<f64>)> = widths
        .par_iter()
        .map(|&w| {
            let (times, vars, _) = inhomo_series(
                g_a,
                g_b,
                kappa,
                delta_c,
                w,
                squeeze_core::inhomo::DEFAULT_CUTOFF,
                bins,
                CollectiveWeighting::Coupling,
                0.0,
                t_end,
                steps,
            )?;
            Ok((times, vars))
        })
        .collect::<Result<_>>()?;

    let mut table = Table::new(vec!["t", "var_w0", "var_w0p05", "var_w0p5", "var_w5"]);
    for (k, t) in curves[0].0.iter().enumerate() {
        table.push(vec![*t, curves[0].1[k], curves[1].1[k], curves[2].1[k], curves[3].1[k]]);
    }
    let mut sink = sink_for(r)?;
    sink.table(id, "timeseries", &table)?;
    sink.finish(
        id,
        "figure",
        serde_json::json!({
            "g_a": g_a, "g_b": g_b, "kappa": kappa, "delta": delta_c,
            "widths": widths, "bins": bins, "cutoff": squeeze_core::inhomo::DEFAULT_CUTOFF,
            "t_end": t_end, "steps": steps, "weighting": "coupling",
        }),
        serde_json::json!({ "preset": describe(id) }),
    )
}
