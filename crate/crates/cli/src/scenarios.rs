//! Scenario executors: each takes the resolved configuration, runs the
//! corresponding library routines, and emits data files plus a manifest.

use nalgebra::DMatrix;
use num_complex::Complex;
use squeeze_core::{
    analytic_eigenvalues, augmented_variance, build_drift_diffusion, candidate_mode,
    default_pulse_time, evolve_exact_observed, inhomogeneous_system, mode_variance,
    optimize_mode, output_kernels, settled_state, spectrum_report, stability_classify,
    two_mode_quadrature, vacuum_state, AdiabaticParams, CandidateKind, CovarianceState,
    DriftDiffusion, FrequencyDistribution, ModeFunction, ModeSystem, OutputKernels,
    OutputStagePlan, QuadratureSpec, Stability,
};

use crate::config::{Resolved, Scenario};
use crate::emit::{read_mode_csv, Sink, Table};
use crate::error::{CliError, Result};
use crate::presets;

pub fn run(r: &Resolved) -> Result<()> {
    match r.scenario {
        Scenario::Evolve => evolve_scenario(r),
        Scenario::Steady => steady_scenario(r),
        Scenario::Spectrum => spectrum_scenario(r),
        Scenario::Adiabatic => adiabatic_scenario(r),
        Scenario::Output => output_scenario(r),
        Scenario::Inhomo => inhomo_scenario(r),
        Scenario::Figure => presets::run_figure(r),
    }
}

/// Refuses growing dynamics unless the run opted in. The classification
/// comes from the closed-form spectrum of the (g_a, g_b, kappa, delta)
/// balance; broadened systems share the same gain budget, and the
/// stepping routines still guard against divergence at run time.
pub fn gate_growth(g_a: f64, g_b: f64, kappa: f64, delta: f64, allow: bool) -> Result<()> {
    if allow {
        return Ok(());
    }
    if let Stability::Growing = stability_classify(g_a, g_b, kappa, delta) {
        let eigs = analytic_eigenvalues(g_a, g_b, kappa, delta);
        let worst = eigs
            .iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .expect("spectrum is non-empty");
        return Err(CliError::Growing { re: worst.re, im: worst.im });
    }
    Ok(())
}

fn config_err(e: squeeze_core::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Streams one exact trajectory, evaluating `observables` on every
/// sampled state instead of storing the covariance history.
pub fn observable_series(
    dd: &DriftDiffusion,
    initial: &CovarianceState,
    t_end: f64,
    steps: usize,
    observables: &[&dyn Fn(&DMatrix<f64>) -> f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let mut times = Vec::with_capacity(steps + 1);
    let mut rows = Vec::with_capacity(steps + 1);
    evolve_exact_observed(dd, initial, t_end, steps, |t, sigma| {
        times.push(t);
        rows.push(observables.iter().map(|f| f(sigma)).collect());
    })?;
    Ok((times, rows))
}

pub fn var_of(spec: &QuadratureSpec) -> impl Fn(&DMatrix<f64>) -> f64 + '_ {
    move |sigma| (sigma * &spec.coefficients).dot(&spec.coefficients)
}

fn excitation_of(mode_index: usize) -> impl Fn(&DMatrix<f64>) -> f64 {
    let (x, p) = (2 * mode_index, 2 * mode_index + 1);
    move |sigma| 0.5 * (sigma[(x, x)] + sigma[(p, p)] - 1.0)
}

/// Minimum of Var X(spec) along a streamed trajectory.
pub fn min_var_streamed(
    dd: &DriftDiffusion,
    initial: &CovarianceState,
    t_end: f64,
    steps: usize,
    spec: &QuadratureSpec,
) -> Result<f64> {
    let mut min = f64::INFINITY;
    evolve_exact_observed(dd, initial, t_end, steps, |_, sigma| {
        let v = (sigma * &spec.coefficients).dot(&spec.coefficients);
        if v < min {
            min = v;
        }
    })?;
    Ok(min)
}

fn evolve_scenario(r: &Resolved) -> Result<()> {
    gate_growth(r.g_a, r.g_b, r.kappa, r.delta, r.allow_growing)?;
    let sys = ModeSystem::homogeneous(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let dd = build_drift_diffusion(&sys);
    let spec = two_mode_quadrature(&sys, "a", "b", r.theta)?;
    let spec_conj =
        two_mode_quadrature(&sys, "a", "b", r.theta + std::f64::consts::FRAC_PI_2)?;
    let (f_var, f_conj) = (var_of(&spec), var_of(&spec_conj));
    let f_na = excitation_of(sys.mode_index("a")?);
    let f_nb = excitation_of(sys.mode_index("b")?);
    let f_nc = excitation_of(sys.cavity_index());
    let obs: Vec<&dyn Fn(&DMatrix<f64>) -> f64> = vec![&f_var, &f_conj, &f_na, &f_nb, &f_nc];
    let (times, rows) =
        observable_series(&dd, &vacuum_state(&sys), r.t_end, r.steps, &obs)?;

    let mut table = Table::new(vec!["t", "var_X", "var_X_conj", "n_a", "n_b", "n_cavity"]);
    for (t, row) in times.iter().zip(&rows) {
        let mut line = vec![*t];
        line.extend_from_slice(row);
        table.push(line);
    }
    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.table("evolve", "timeseries", &table)?;
    let classification = format!("{}", stability_classify(r.g_a, r.g_b, r.kappa, r.delta));
    sink.finish(
        "evolve",
        "evolve",
        r.parameters_json(),
        serde_json::json!({ "classification": classification }),
    )
}

fn steady_scenario(r: &Resolved) -> Result<()> {
    let sys = ModeSystem::homogeneous(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let dd = build_drift_diffusion(&sys);
    let settled = settled_state(&dd, &vacuum_state(&sys), 0.0, 1e-6).map_err(|e| match e {
        squeeze_core::Error::NotHurwitz { re, im } => CliError::NoSteadyState { re, im },
        other => CliError::from(other),
    })?;

    let labels = ["x_a", "p_a", "x_b", "p_b", "x_cavity", "p_cavity"];
    let mut table = Table::new(labels.to_vec());
    for i in 0..settled.sigma.nrows() {
        table.push((0..settled.sigma.ncols()).map(|j| settled.sigma[(i, j)]).collect());
    }

    let spec0 = two_mode_quadrature(&sys, "a", "b", 0.0)?;
    let spec90 = two_mode_quadrature(&sys, "a", "b", std::f64::consts::FRAC_PI_2)?;
    let var0 = (&settled.sigma * &spec0.coefficients).dot(&spec0.coefficients);
    let var90 = (&settled.sigma * &spec90.coefficients).dot(&spec90.coefficients);
    let n_of = |j: usize| 0.5 * (settled.sigma[(2 * j, 2 * j)] + settled.sigma[(2 * j + 1, 2 * j + 1)] - 1.0);

    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.table("steady", "matrix", &table)?;
    sink.finish(
        "steady",
        "steady",
        r.parameters_json(),
        serde_json::json!({
            "var_X0": var0,
            "var_Xpi2": var90,
            "n_a": n_of(sys.mode_index("a")?),
            "n_b": n_of(sys.mode_index("b")?),
            "n_cavity": n_of(sys.cavity_index()),
            "settle_time": settled.time,
        }),
    )
}

fn spectrum_scenario(r: &Resolved) -> Result<()> {
    let sys = ModeSystem::homogeneous(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let report = spectrum_report(&sys)?;
    let listing = |eigs: &[Complex<f64>]| {
        eigs.iter()
            .map(|z| serde_json::json!({ "re": z.re, "im": z.im }))
            .collect::<Vec<_>>()
    };
    let body = serde_json::json!({
        "parameters": r.parameters_json(),
        "classification": format!("{}", report.classification),
        "analytic": listing(&report.analytic),
        "numeric": listing(&report.numeric),
    });
    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.json("spectrum", "spectrum", &body)?;
    sink.finish("spectrum", "spectrum", r.parameters_json(), serde_json::json!({}))
}

fn adiabatic_scenario(r: &Resolved) -> Result<()> {
    gate_growth(r.g_a, r.g_b, r.kappa, r.delta, r.allow_growing)?;
    let p = AdiabaticParams::new(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let sys = ModeSystem::homogeneous(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let dd = build_drift_diffusion(&sys);
    let spec = two_mode_quadrature(&sys, "a", "b", 0.0)?;
    let f_var = var_of(&spec);
    let obs: Vec<&dyn Fn(&DMatrix<f64>) -> f64> = vec![&f_var];
    let (times, rows) =
        observable_series(&dd, &vacuum_state(&sys), r.t_end, r.steps, &obs)?;

    let mut table = Table::new(vec!["t", "var_analytic", "var_full"]);
    for (t, row) in times.iter().zip(&rows) {
        table.push(vec![*t, squeeze_core::adiabatic::analytic_variance(&p, *t)?, row[0]]);
    }

    let mut extra = serde_json::Map::new();
    extra.insert("weak_detuning".into(), p.weak_detuning().into());
    if let Ok(v) = squeeze_core::adiabatic::longtime_variance(&p) {
        extra.insert("longtime_variance".into(), v.into());
    }
    if let Ok((t_star, v_min)) = squeeze_core::adiabatic::optimal_time_min_variance(&p) {
        extra.insert("optimal_time".into(), t_star.into());
        extra.insert("closed_form_min".into(), v_min.into());
    }

    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.table("adiabatic", "timeseries", &table)?;
    sink.finish(
        "adiabatic",
        "adiabatic",
        r.parameters_json(),
        serde_json::Value::Object(extra),
    )
}

/// Phase minimizing Var X_u(theta) given the filtered anomalous moment,
/// and the variance there: Var = 1/4 + (Re(e^{2i theta} anom) + norm)/2
/// is smallest when the rotated moment points along -1.
pub fn best_phase(anom: Complex<f64>, norm_re: f64) -> (f64, f64) {
    let theta = (std::f64::consts::PI - anom.arg()) * 0.5;
    let theta = theta.rem_euclid(std::f64::consts::PI);
    (theta, 0.25 + 0.5 * (norm_re - anom.norm()))
}

pub struct EvaluatedMode {
    pub mode: ModeFunction,
    pub theta: f64,
    pub variance: f64,
}

pub fn evaluate_mode(kernels: &OutputKernels, mode: ModeFunction) -> Result<EvaluatedMode> {
    let (anom, norm) = kernels.filtered_moments(&mode)?;
    let (theta, variance) = best_phase(anom, norm.re);
    // The closed form above and the generic evaluator must agree; use the
    // evaluator's number so every reported variance has one provenance.
    let variance_check = mode_variance(kernels, &mode, theta)?;
    debug_assert!((variance - variance_check).abs() < 1e-12 * (1.0 + variance.abs()));
    Ok(EvaluatedMode { mode, theta, variance: variance_check })
}

fn output_scenario(r: &Resolved) -> Result<()> {
    gate_growth(r.g_a, r.g_b, r.kappa, r.delta, r.allow_growing)?;
    let stage1 = ModeSystem::homogeneous(r.g_a, r.g_b, r.kappa, r.delta).map_err(config_err)?;
    let t_pulse = match r.t_pulse {
        Some(t) => t,
        None => default_pulse_time(&stage1, r.t_end.max(40.0))?,
    };
    let plan = OutputStagePlan::new(stage1, t_pulse, r.horizon, r.grid_points)
        .map_err(config_err)?;
    let kernels = output_kernels(&plan)?;

    let exp = evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::ExpDecay)?)?;
    let sqrt = evaluate_mode(&kernels, candidate_mode(&plan, CandidateKind::SqrtPhoton)?)?;
    let opt = optimize_mode(&kernels)?;
    let augmented = augmented_variance(&plan, &opt.mode, opt.theta)?;

    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.mode("output_exp", &exp.mode.times, &exp.mode.samples)?;
    sink.mode("output_sqrt", &sqrt.mode.times, &sqrt.mode.samples)?;
    sink.mode("output_opt", &opt.mode.times, &opt.mode.samples)?;

    let mut extra = serde_json::Map::new();
    extra.insert("t_pulse".into(), t_pulse.into());
    extra.insert("horizon".into(), r.horizon.into());
    extra.insert("grid_points".into(), r.grid_points.into());
    extra.insert("var_exp".into(), exp.variance.into());
    extra.insert("theta_exp".into(), exp.theta.into());
    extra.insert("var_sqrt".into(), sqrt.variance.into());
    extra.insert("theta_sqrt".into(), sqrt.theta.into());
    extra.insert("var_opt".into(), opt.variance.into());
    extra.insert("theta_opt".into(), opt.theta.into());
    extra.insert("var_opt_augmented".into(), augmented.variance.into());
    extra.insert("commutator".into(), augmented.commutator.into());
    extra.insert("beta0_re".into(), kernels.beta[0].re.into());
    extra.insert("beta0_im".into(), kernels.beta[0].im.into());
    extra.insert("emitted_photons".into(), kernels.emitted_photons().into());
    extra.insert("available_photons".into(), kernels.available_photons().into());

    if let Some(path) = &r.mode_file {
        let (times, samples) = read_mode_csv(path)?;
        let user = ModeFunction::new(times, samples).map_err(config_err)?;
        let user = evaluate_mode(&kernels, user).map_err(|e| match e {
            CliError::Compute(inner) => CliError::Config(format!(
                "mode file {}: {} (the mode grid must match the plan's {} samples over [0, {}])",
                path.display(),
                inner,
                r.grid_points,
                r.horizon
            )),
            other => other,
        })?;
        extra.insert("var_user".into(), user.variance.into());
        extra.insert("theta_user".into(), user.theta.into());
    }

    sink.finish(
        "output",
        "output",
        r.parameters_json(),
        serde_json::Value::Object(extra),
    )
}

/// One broadened-ensemble variance curve, streamed.
pub fn inhomo_series(
    g_a: f64,
    g_b: f64,
    kappa: f64,
    delta_c: f64,
    sigma_width: f64,
    cutoff: f64,
    bins: usize,
    weighting: squeeze_core::CollectiveWeighting,
    theta: f64,
    t_end: f64,
    steps: usize,
) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let dist = if sigma_width == 0.0 {
        FrequencyDistribution::new(0.0, cutoff, 1)
    } else {
        FrequencyDistribution::new(sigma_width, cutoff, bins)
    }
    .map_err(config_err)?;
    let sys = inhomogeneous_system(g_a, g_b, kappa, delta_c, &dist).map_err(config_err)?;
    let dd = build_drift_diffusion(&sys);
    let spec = squeeze_core::collective_quadrature(&sys, theta, weighting)?;
    let mut times = Vec::with_capacity(steps + 1);
    let mut vars = Vec::with_capacity(steps + 1);
    evolve_exact_observed(&dd, &vacuum_state(&sys), t_end, steps, |t, sigma| {
        times.push(t);
        vars.push((sigma * &spec.coefficients).dot(&spec.coefficients));
    })?;
    Ok((times, vars, sys.dim() / 2))
}

fn inhomo_scenario(r: &Resolved) -> Result<()> {
    gate_growth(r.g_a, r.g_b, r.kappa, r.delta, r.allow_growing)?;
    let sigma = r.sigma_width();
    let (times, vars, n_modes) = inhomo_series(
        r.g_a,
        r.g_b,
        r.kappa,
        r.delta,
        sigma,
        r.cutoff,
        r.bins,
        r.weighting_core(),
        r.theta,
        r.t_end,
        r.steps,
    )?;
    let mut table = Table::new(vec!["t", "var_X"]);
    for (t, v) in times.iter().zip(&vars) {
        table.push(vec![*t, *v]);
    }
    let mut sink = Sink::new(&r.out_dir, r.format == crate::config::TableFormat::Json)?;
    sink.table("inhomo", "timeseries", &table)?;
    sink.finish(
        "inhomo",
        "inhomo",
        r.parameters_json(),
        serde_json::json!({
            "sigma_width": sigma,
            "cutoff": r.cutoff,
            "bins": r.bins,
            "weighting": match r.weighting_core() {
                squeeze_core::CollectiveWeighting::Coupling => "coupling",
                squeeze_core::CollectiveWeighting::Uniform => "uniform",
            },
            "modes": n_modes,
        }),
    )
}
