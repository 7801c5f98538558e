//! Command orchestration behind the `wavelab` binary: read one config, run
//! one command, write CSV + JSON artifacts, return the contract exit code
//! (0 success, 2 validation error, 3 assertion failure, 4 solver failure).

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use crate::config::{
    parse_config, CompareTarget, ConfigError, DomainConfig, DtSpec, RunConfig,
};
use crate::error::{Error, Result};
use crate::formulation::{
    build_formulation, DiscreteSystem, FormulationSpec, Profile,
};
use crate::integrator::{IntegratorConfig, Scheme};
use crate::mesh::{build_interval_mesh, build_rect_mesh, Mesh};
use crate::report::{self, OutputSet};
use crate::solver::power_iteration_genevp;
use crate::verification::{
    cfl_scan, check_equivalence, check_reduction, convergence_study, energy_audit,
    EquivalenceReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Compare,
    Energy,
    Cfl,
    Converge,
    Spectrum,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Compare => "compare",
            Command::Energy => "energy",
            Command::Cfl => "cfl",
            Command::Converge => "converge",
            Command::Spectrum => "spectrum",
        }
    }
}

#[derive(Debug, Clone)]
pub struct CliOptions {
    pub config_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub export_matrices: bool,
    /// Overrides the command's pass/fail tolerance.
    pub tol: Option<f64>,
    /// Recorded in reports; only randomized property tests consume it.
    pub seed: Option<u64>,
}

#[derive(Debug, serde::Serialize)]
struct ErrorReport {
    schema: &'static str,
    command: &'static str,
    error_code: i32,
    error_kind: String,
    message: String,
    config_errors: Option<Vec<ConfigError>>,
}

#[derive(Debug, serde::Serialize)]
struct RunSummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    formulation: &'static str,
    integrator: String,
    steps: usize,
    dt: f64,
    lambda_max: Option<f64>,
    energy_initial: f64,
    energy_final: f64,
    relative_drift: f64,
    stable: bool,
    pass: bool,
}

#[derive(Debug, serde::Serialize)]
struct CompareSummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    pair: [String; 2],
    integrator: String,
    n: usize,
    dt: f64,
    tol: f64,
    max_discrepancy: f64,
    mapping: &'static str,
    pass: bool,
}

#[derive(Debug, serde::Serialize)]
struct EnergySummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    formulation: &'static str,
    integrator: String,
    steps: usize,
    dt: f64,
    energy_initial: f64,
    relative_drift: f64,
    oscillation_amplitude: f64,
    drift_tol: f64,
    stable: bool,
    nonnegative: bool,
    pass: bool,
}

#[derive(Debug, serde::Serialize)]
struct CflSummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    formulation: &'static str,
    lambda_max: f64,
    threshold_predicted: f64,
    threshold_empirical: f64,
    relative_mismatch: f64,
    tol: f64,
    pass: bool,
}

#[derive(Debug, serde::Serialize)]
struct ConvergeSummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    formulation: &'static str,
    integrator: String,
    mode: usize,
    h: Vec<f64>,
    errors: Vec<f64>,
    orders: Vec<f64>,
    order_min: f64,
    order_max: f64,
    pass: bool,
}

#[derive(Debug, serde::Serialize)]
struct SpectrumSummary {
    schema: &'static str,
    command: &'static str,
    seed: Option<u64>,
    formulation: &'static str,
    dofs: usize,
    lambda_max: f64,
    dt_max: f64,
    elapsed_ms: f64,
}

const REPORT_SCHEMA: &str = "wavelab/report/v1";

/// Run a command end to end; returns the process exit code.
pub fn execute(command: Command, opts: &CliOptions) -> i32 {
    let text = match std::fs::read_to_string(&opts.config_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read {}: {e}", opts.config_path.display());
            return 1;
        }
    };
    let cfg = match parse_config(&text) {
        Ok(cfg) => cfg,
        Err(errors) => {
            for e in &errors {
                eprintln!("config error: {e}");
            }
            let out_dir = opts.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let report = ErrorReport {
                schema: REPORT_SCHEMA,
                command: command.name(),
                error_code: 2,
                error_kind: "validation".into(),
                message: "configuration invalid".into(),
                config_errors: Some(errors),
            };
            let mut outputs = OutputSet::new();
            let _ = outputs.write(&out_dir.join("report.json"), &report::to_json(&report));
            return 2;
        }
    };
    let out_dir = opts
        .out_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));

    let mut outputs = OutputSet::new();
    match dispatch(command, &cfg, opts, &out_dir, &mut outputs) {
        Ok(pass) => {
            if pass {
                0
            } else {
                3
            }
        }
        Err(err) => {
            // partial outputs are removed; the failure report remains
            outputs.remove_all();
            let code = err.exit_code();
            eprintln!("{}: {err}", command.name());
            let report = ErrorReport {
                schema: REPORT_SCHEMA,
                command: command.name(),
                error_code: code,
                error_kind: err.kind().into(),
                message: err.to_string(),
                config_errors: None,
            };
            let mut out = OutputSet::new();
            let _ = out.write(&out_dir.join("report.json"), &report::to_json(&report));
            code
        }
    }
}

fn dispatch(
    command: Command,
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    match command {
        Command::Run => cmd_run(cfg, opts, out_dir, outputs),
        Command::Compare => cmd_compare(cfg, opts, out_dir, outputs),
        Command::Energy => cmd_energy(cfg, opts, out_dir, outputs),
        Command::Cfl => cmd_cfl(cfg, opts, out_dir, outputs),
        Command::Converge => cmd_converge(cfg, opts, out_dir, outputs),
        Command::Spectrum => cmd_spectrum(cfg, opts, out_dir, outputs),
    }
}

fn build_mesh(domain: &DomainConfig) -> Result<Arc<Mesh>> {
    Ok(Arc::new(match *domain {
        DomainConfig::Interval { a, b, n } => build_interval_mesh(a, b, n)?,
        DomainConfig::Rect { x0, x1, y0, y1, nx, ny } => {
            build_rect_mesh((x0, x1), (y0, y1), nx, ny)?
        }
    }))
}

/// A validated configuration resolved into a ready-to-run system; the entry
/// point for embedding the lab behind the C interface.
pub struct PreparedRun {
    pub system: DiscreteSystem,
    pub integrator: IntegratorConfig,
    /// Present when dt came from a CFL fraction.
    pub lambda_max: Option<f64>,
    pub spec: FormulationSpec,
}

/// Build mesh, formulation and integrator settings from a parsed config,
/// resolving a CFL-fraction time step through the stability pencil.
pub fn prepare_run(cfg: &RunConfig) -> Result<PreparedRun> {
    let mesh = build_mesh(&cfg.domain)?;
    let spec = FormulationSpec::new(cfg.formulation, mesh, cfg.material);
    let system = build_formulation(&spec)?;
    let (dt, lambda_max) = resolve_dt(&system, cfg)?;
    let mut integrator = IntegratorConfig::new(cfg.scheme, dt, cfg.steps);
    if cfg.scheme == Scheme::Newmark {
        integrator = integrator.with_newmark_params(cfg.gamma, cfg.beta);
    }
    integrator.solver = cfg.solver;
    integrator.midpoint_path = cfg.midpoint_path;
    integrator.validate()?;
    Ok(PreparedRun {
        system,
        integrator,
        lambda_max,
        spec,
    })
}

/// Resolve the [compare] section of a config into an equivalence report.
pub fn compare_from_config(cfg: &RunConfig, tol_override: Option<f64>) -> Result<EquivalenceReport> {
    let compare = cfg.compare.as_ref().ok_or_else(|| {
        Error::invalid_argument("the compare command needs a [compare] section with `against`")
    })?;
    let prepared = prepare_run(cfg)?;
    // default tolerance per scheme class: explicit 1e-10, implicit 1e-9
    let tol = tol_override.or(compare.tol).unwrap_or(match cfg.scheme {
        Scheme::ImplicitMidpoint => 1e-9,
        _ => 1e-10,
    });
    match &compare.against {
        CompareTarget::Formulation(kind_b) => {
            let spec_b = FormulationSpec::new(
                *kind_b,
                Arc::clone(prepared.system.mesh()),
                cfg.material,
            );
            let sys_b = build_formulation(&spec_b)?;
            check_equivalence(
                &prepared.system,
                &sys_b,
                &prepared.integrator,
                cfg.profile,
                tol,
            )
        }
        CompareTarget::Reduction(reduction) => check_reduction(
            &prepared.spec,
            *reduction,
            &prepared.integrator,
            cfg.profile,
            tol,
        ),
    }
}

fn resolve_dt(system: &DiscreteSystem, cfg: &RunConfig) -> Result<(f64, Option<f64>)> {
    match cfg.dt_spec {
        DtSpec::Fixed(dt) => Ok((dt, None)),
        DtSpec::CflFraction(f) => {
            let (k, m) = system.stability_pencil();
            let lambda = power_iteration_genevp(&k, &m, 1e-10)?;
            Ok((f * 2.0 / lambda.sqrt(), Some(lambda)))
        }
    }
}

fn export_matrices(
    system: &DiscreteSystem,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<()> {
    for (name, matrix) in system.export_blocks() {
        outputs.write(
            &out_dir.join("matrices").join(format!("{name}.txt")),
            &matrix.to_coordinate_text(),
        )?;
    }
    Ok(())
}

fn scheme_label(cfg: &RunConfig) -> String {
    match cfg.scheme {
        Scheme::Newmark => format!("newmark(gamma={}, beta={})", cfg.gamma, cfg.beta),
        Scheme::Leapfrog => "leapfrog".into(),
        Scheme::StormerVerlet => "stormer-verlet".into(),
        Scheme::ImplicitMidpoint => "implicit-midpoint".into(),
    }
}

fn cmd_run(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    let prepared = prepare_run(cfg)?;
    if opts.export_matrices {
        export_matrices(&prepared.system, out_dir, outputs)?;
    }
    let trace = prepared.system.run(cfg.profile, &prepared.integrator)?;
    outputs.write(&out_dir.join("run.csv"), &report::run_csv(&trace))?;
    outputs.write(&out_dir.join("snapshot.csv"), &report::snapshot_csv(&trace))?;
    let e0 = trace.energies[0];
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    let drift = trace
        .energies
        .iter()
        .map(|e| (e - e0).abs() / scale)
        .fold(0.0f64, f64::max);
    let stable = trace.instability.is_none();
    let summary = RunSummary {
        schema: REPORT_SCHEMA,
        command: "run",
        seed: opts.seed,
        formulation: cfg.formulation.id(),
        integrator: scheme_label(cfg),
        steps: trace.len().saturating_sub(1),
        dt: prepared.integrator.dt,
        lambda_max: prepared.lambda_max,
        energy_initial: e0,
        energy_final: *trace.energies.last().unwrap(),
        relative_drift: drift,
        stable,
        pass: stable,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(stable)
}

fn cmd_compare(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    if opts.export_matrices {
        let prepared = prepare_run(cfg)?;
        export_matrices(&prepared.system, out_dir, outputs)?;
    }
    let report = compare_from_config(cfg, opts.tol)?;
    outputs.write(&out_dir.join("compare.csv"), &report::compare_csv(&report))?;
    let summary = CompareSummary {
        schema: REPORT_SCHEMA,
        command: "compare",
        seed: opts.seed,
        pair: report.pair.clone(),
        integrator: report.integrator.clone(),
        n: report.steps,
        dt: report.dt,
        tol: report.tol,
        max_discrepancy: report.max_discrepancy,
        mapping: report.mapping,
        pass: report.pass,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(report.pass)
}

fn cmd_energy(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    let prepared = prepare_run(cfg)?;
    let audit = energy_audit(&prepared.system, &prepared.integrator, cfg.profile)?;
    let mut csv = String::from("# schema: wavelab/energy/v1\nstep,t,energy,energy_instantaneous\n");
    for (n, (e, ei)) in audit
        .energies
        .iter()
        .zip(&audit.energies_instantaneous)
        .enumerate()
    {
        csv.push_str(&format!(
            "{n},{},{},{}\n",
            report::fmt_float(n as f64 * prepared.integrator.dt),
            report::fmt_float(*e),
            report::fmt_float(*ei)
        ));
    }
    outputs.write(&out_dir.join("energy.csv"), &csv)?;
    let drift_tol = opts.tol.unwrap_or(cfg.energy_drift_tol);
    let stable = audit.instability.is_none();
    let pass = stable && audit.nonnegative && audit.relative_drift <= drift_tol;
    let summary = EnergySummary {
        schema: REPORT_SCHEMA,
        command: "energy",
        seed: opts.seed,
        formulation: cfg.formulation.id(),
        integrator: scheme_label(cfg),
        steps: audit.energies.len().saturating_sub(1),
        dt: prepared.integrator.dt,
        energy_initial: audit.initial,
        relative_drift: audit.relative_drift,
        oscillation_amplitude: audit.oscillation_amplitude,
        drift_tol,
        stable,
        nonnegative: audit.nonnegative,
        pass,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(pass)
}

fn cmd_cfl(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    let prepared = prepare_run(cfg)?;
    let (k, m) = prepared.system.stability_pencil();
    let lambda = power_iteration_genevp(&k, &m, 1e-10)?;
    let predicted = 2.0 / lambda.sqrt();
    let grid: Vec<f64> = cfg.cfl_fractions.iter().map(|f| f * predicted).collect();
    let scan = cfl_scan(&prepared.system, cfg.profile, &grid, &cfg.solver)?;
    outputs.write(&out_dir.join("cfl.csv"), &report::cfl_csv(&scan))?;
    let mismatch =
        (scan.threshold_empirical - scan.threshold_predicted).abs() / scan.threshold_predicted;
    let tol = opts.tol.unwrap_or(0.02);
    let pass = mismatch <= tol;
    let summary = CflSummary {
        schema: REPORT_SCHEMA,
        command: "cfl",
        seed: opts.seed,
        formulation: cfg.formulation.id(),
        lambda_max: scan.lambda_max,
        threshold_predicted: scan.threshold_predicted,
        threshold_empirical: scan.threshold_empirical,
        relative_mismatch: mismatch,
        tol,
        pass,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(pass)
}

fn cmd_converge(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    if cfg.domain.dim() != 1 {
        return Err(Error::invalid_argument(
            "the convergence study uses the 1D standing-wave solution",
        ));
    }
    let mode = match cfg.profile {
        Profile::StandingMode { mode, .. } => mode,
        Profile::Zero => {
            return Err(Error::invalid_argument(
                "convergence studies need a standing-mode profile",
            ))
        }
    };
    let table = convergence_study(
        cfg.formulation,
        cfg.scheme,
        cfg.material,
        mode,
        &cfg.converge.cells,
        cfg.converge.dt_fraction,
        cfg.converge.t_final,
        &cfg.solver,
    )?;
    outputs.write(&out_dir.join("converge.csv"), &report::converge_csv(&table))?;
    let pass = !table.orders.is_empty()
        && table
            .orders
            .iter()
            .all(|o| *o >= cfg.converge.order_min && *o <= cfg.converge.order_max);
    let summary = ConvergeSummary {
        schema: REPORT_SCHEMA,
        command: "converge",
        seed: opts.seed,
        formulation: cfg.formulation.id(),
        integrator: scheme_label(cfg),
        mode,
        h: table.h.clone(),
        errors: table.errors.clone(),
        orders: table.orders.clone(),
        order_min: cfg.converge.order_min,
        order_max: cfg.converge.order_max,
        pass,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(pass)
}

fn cmd_spectrum(
    cfg: &RunConfig,
    opts: &CliOptions,
    out_dir: &Path,
    outputs: &mut OutputSet,
) -> Result<bool> {
    let mesh = build_mesh(&cfg.domain)?;
    let spec = FormulationSpec::new(cfg.formulation, mesh, cfg.material);
    let system = build_formulation(&spec)?;
    if opts.export_matrices {
        export_matrices(&system, out_dir, outputs)?;
    }
    let start = Instant::now();
    let (k, m) = system.stability_pencil();
    let lambda = power_iteration_genevp(&k, &m, 1e-10)?;
    let elapsed = start.elapsed().as_secs_f64() * 1e3;
    let summary = SpectrumSummary {
        schema: REPORT_SCHEMA,
        command: "spectrum",
        seed: opts.seed,
        formulation: cfg.formulation.id(),
        dofs: k.rows(),
        lambda_max: lambda,
        dt_max: 2.0 / lambda.sqrt(),
        elapsed_ms: elapsed,
    };
    outputs.write(&out_dir.join("report.json"), &report::to_json(&summary))?;
    Ok(true)
}

/// Convenience entry point used by tests: run a command against a config file
/// in `out_dir` and return the exit code.
pub fn run_to_dir(command: Command, config_path: &Path, out_dir: &Path) -> i32 {
    execute(
        command,
        &CliOptions {
            config_path: config_path.to_path_buf(),
            out_dir: Some(out_dir.to_path_buf()),
            export_matrices: false,
            tol: None,
            seed: None,
        },
    )
}
