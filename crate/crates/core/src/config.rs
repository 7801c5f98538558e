//! Run configuration: a small sectioned key-value format and its validation.
//!
//! Grammar (one statement per line):
//!   - `# ...` comment, blank lines ignored
//!   - `[section]` opens a section
//!   - `key = value` inside a section
//!
//! Parsing collects every problem it finds (unknown key, missing required
//! key, ill-typed value), each with the offending line number, instead of
//! stopping at the first.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::assembly::MaterialParams;
use crate::formulation::{FormulationKind, Profile};
use crate::integrator::{MidpointPath, Scheme};
use crate::solver::{Method, SolverConfig};
use crate::verification::ReductionKind;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum DomainConfig {
    Interval { a: f64, b: f64, n: usize },
    Rect { x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize },
}

impl DomainConfig {
    pub fn dim(&self) -> usize {
        match self {
            DomainConfig::Interval { .. } => 1,
            DomainConfig::Rect { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub enum DtSpec {
    Fixed(f64),
    /// Fraction of the stability limit 2 / sqrt(lambda_max).
    CflFraction(f64),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum CompareTarget {
    Formulation(FormulationKind),
    Reduction(ReductionKind),
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CompareConfig {
    pub against: CompareTarget,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ConvergeConfig {
    pub cells: Vec<usize>,
    pub dt_fraction: f64,
    pub t_final: f64,
    pub order_min: f64,
    pub order_max: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        ConvergeConfig {
            cells: vec![16, 32, 64],
            dt_fraction: 0.5,
            t_final: 1.0,
            order_min: 1.8,
            order_max: 2.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub formulation: FormulationKind,
    pub material: MaterialParams,
    /// Material was given as permittivity/permeability.
    pub electromagnetic: bool,
    pub profile: Profile,
    pub scheme: Scheme,
    pub gamma: f64,
    pub beta: f64,
    pub steps: usize,
    pub dt_spec: DtSpec,
    pub solver: SolverConfig,
    pub midpoint_path: MidpointPath,
    pub compare: Option<CompareConfig>,
    pub energy_drift_tol: f64,
    /// dt grid for the stability scan, as fractions of the predicted limit.
    pub cfl_fractions: Vec<f64>,
    pub converge: ConvergeConfig,
    pub output_dir: Option<PathBuf>,
}

struct RawValue {
    line: usize,
    text: String,
}

type Section = BTreeMap<String, RawValue>;

const KNOWN: &[(&str, &[&str])] = &[
    ("domain", &["dim", "a", "b", "n", "x0", "x1", "y0", "y1", "nx", "ny"]),
    ("model", &["formulation", "rho", "k", "epsilon", "mu"]),
    ("profile", &["mode", "amplitude", "zero"]),
    ("time", &["integrator", "gamma", "beta", "steps", "dt", "cfl_fraction"]),
    (
        "solver",
        &["tol", "max_iterations", "method", "gmres_restart", "midpoint_path"],
    ),
    ("compare", &["against", "tol"]),
    ("energy", &["drift_tol"]),
    ("cfl", &["fractions"]),
    (
        "converge",
        &["cells", "dt_fraction", "t_final", "order_min", "order_max"],
    ),
    ("output", &["dir"]),
];

/// Parse and validate a configuration, reporting every error found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(p) => &raw_line[..p],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if !KNOWN.iter().any(|(s, _)| *s == name) {
                errors.push(ConfigError {
                    line: Some(line_no),
                    message: format!("unknown section [{name}]"),
                });
            }
            sections.entry(name.clone()).or_default();
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("expected `key = value`, got `{line}`"),
            });
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        let Some(section_name) = &current else {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("key `{key}` appears before any [section]"),
            });
            continue;
        };
        if let Some((_, keys)) = KNOWN.iter().find(|(s, _)| s == section_name) {
            if !keys.contains(&key.as_str()) {
                errors.push(ConfigError {
                    line: Some(line_no),
                    message: format!("unknown key `{key}` in [{section_name}]"),
                });
                continue;
            }
        }
        let section = sections.entry(section_name.clone()).or_default();
        if section.contains_key(&key) {
            errors.push(ConfigError {
                line: Some(line_no),
                message: format!("duplicate key `{key}` in [{section_name}]"),
            });
            continue;
        }
        section.insert(key, RawValue { line: line_no, text: value });
    }

    let cfg = extract(&sections, &mut errors);
    match cfg {
        Some(cfg) if errors.is_empty() => Ok(cfg),
        _ => Err(errors),
    }
}

fn extract(sections: &BTreeMap<String, Section>, errors: &mut Vec<ConfigError>) -> Option<RunConfig> {
    let mut ctx = Extractor { sections, errors };

    let domain = ctx.domain();
    let formulation = ctx.formulation();
    let material = ctx.material(formulation);
    let profile = ctx.profile();
    let time = ctx.time();
    let solver = ctx.solver();
    let compare = ctx.compare();
    let energy_drift_tol = ctx
        .float("energy", "drift_tol", Some(1e-10))
        .unwrap_or(1e-10);
    let cfl_fractions = ctx.float_list(
        "cfl",
        "fractions",
        &[0.5, 0.8, 0.9, 0.95, 0.99, 1.01, 1.05, 1.2],
    );
    let converge = ctx.converge();
    let output_dir = ctx
        .string("output", "dir", None)
        .map(PathBuf::from);

    let (domain, formulation, material_pair, time, solver_pair) =
        match (domain, formulation, material, time, solver) {
            (Some(d), Some(f), Some(m), Some(t), Some(s)) => (d, f, m, t, s),
            _ => return None,
        };
    let (material, electromagnetic) = material_pair;
    let (scheme, gamma, beta, steps, dt_spec) = time;
    let (solver, midpoint_path) = solver_pair;

    // cross validation
    validate_cross(&domain, formulation, scheme, ctx.errors);

    Some(RunConfig {
        domain,
        formulation,
        material,
        electromagnetic,
        profile,
        scheme,
        gamma,
        beta,
        steps,
        dt_spec,
        solver,
        midpoint_path,
        compare,
        energy_drift_tol,
        cfl_fractions,
        converge,
        output_dir,
    })
}

fn validate_cross(
    domain: &DomainConfig,
    formulation: FormulationKind,
    scheme: Scheme,
    errors: &mut Vec<ConfigError>,
) {
    let dim = domain.dim();
    match formulation {
        FormulationKind::MixedGradVS if dim != 1 => errors.push(ConfigError {
            line: None,
            message: "compatibility violation: mixed-grad-vs needs a 1D domain \
                      (the grad-side pair has no compatible 2D space); use mixed-div-vs"
                .into(),
        }),
        FormulationKind::MaxwellTM if dim != 2 => errors.push(ConfigError {
            line: None,
            message: "maxwell-tm needs a 2D domain".into(),
        }),
        _ => {}
    }
    let second_order = formulation.is_second_order();
    match scheme {
        Scheme::Newmark if !second_order => errors.push(ConfigError {
            line: None,
            message: format!(
                "{} is first order in time; use leapfrog or implicit-midpoint",
                formulation.id()
            ),
        }),
        Scheme::Leapfrog | Scheme::StormerVerlet | Scheme::ImplicitMidpoint if second_order => {
            errors.push(ConfigError {
                line: None,
                message: format!(
                    "{} is stepped by the Newmark family; set integrator = newmark \
                     with gamma/beta 0.5/0 (leapfrog) or 0.5/0.25 (midpoint)",
                    formulation.id()
                ),
            })
        }
        _ => {}
    }
}

struct Extractor<'a> {
    sections: &'a BTreeMap<String, Section>,
    errors: &'a mut Vec<ConfigError>,
}

impl<'a> Extractor<'a> {
    fn raw(&self, section: &str, key: &str) -> Option<&'a RawValue> {
        self.sections.get(section).and_then(|s| s.get(key))
    }

    fn push(&mut self, line: Option<usize>, message: String) {
        self.errors.push(ConfigError { line, message });
    }

    fn string(&mut self, section: &str, key: &str, default: Option<&str>) -> Option<String> {
        match self.raw(section, key) {
            Some(v) => Some(v.text.clone()),
            None => default.map(str::to_string),
        }
    }

    fn float(&mut self, section: &str, key: &str, default: Option<f64>) -> Option<f64> {
        match self.raw(section, key) {
            Some(v) => match v.text.parse::<f64>() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.push(
                        Some(v.line),
                        format!("`{key}` must be a number, got `{}`", v.text),
                    );
                    None
                }
            },
            None => default,
        }
    }

    fn integer(&mut self, section: &str, key: &str, default: Option<usize>) -> Option<usize> {
        match self.raw(section, key) {
            Some(v) => match v.text.parse::<usize>() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.push(
                        Some(v.line),
                        format!("`{key}` must be a non-negative integer, got `{}`", v.text),
                    );
                    None
                }
            },
            None => default,
        }
    }

    fn positive_integer(&mut self, section: &str, key: &str, default: Option<usize>) -> Option<usize> {
        let v = self.integer(section, key, default)?;
        if v == 0 {
            let line = self.raw(section, key).map(|r| r.line);
            self.push(line, format!("`{key}` must be at least 1"));
            return None;
        }
        Some(v)
    }

    fn float_list(&mut self, section: &str, key: &str, default: &[f64]) -> Vec<f64> {
        match self.raw(section, key) {
            Some(v) => {
                let mut out = Vec::new();
                for part in v.text.split(',') {
                    match part.trim().parse::<f64>() {
                        Ok(x) => out.push(x),
                        Err(_) => {
                            self.push(
                                Some(v.line),
                                format!("`{key}` must be a comma-separated number list"),
                            );
                            return default.to_vec();
                        }
                    }
                }
                out
            }
            None => default.to_vec(),
        }
    }

    fn usize_list(&mut self, section: &str, key: &str, default: &[usize]) -> Vec<usize> {
        match self.raw(section, key) {
            Some(v) => {
                let mut out = Vec::new();
                for part in v.text.split(',') {
                    match part.trim().parse::<usize>() {
                        Ok(x) if x > 0 => out.push(x),
                        _ => {
                            self.push(
                                Some(v.line),
                                format!("`{key}` must be a comma-separated list of positive integers"),
                            );
                            return default.to_vec();
                        }
                    }
                }
                out
            }
            None => default.to_vec(),
        }
    }

    fn domain(&mut self) -> Option<DomainConfig> {
        if self.sections.get("domain").is_none() {
            self.push(None, "missing required section [domain]".into());
            return None;
        }
        let dim = self.integer("domain", "dim", Some(1))?;
        match dim {
            1 => {
                let a = self.float("domain", "a", Some(0.0))?;
                let b = self.float("domain", "b", Some(1.0))?;
                let n = self.positive_integer("domain", "n", None);
                let Some(n) = n else {
                    if self.raw("domain", "n").is_none() {
                        self.push(None, "missing required key `n` in [domain]".into());
                    }
                    return None;
                };
                if a >= b {
                    self.push(None, format!("domain bounds must satisfy a < b, got [{a}, {b}]"));
                    return None;
                }
                Some(DomainConfig::Interval { a, b, n })
            }
            2 => {
                let x0 = self.float("domain", "x0", Some(0.0))?;
                let x1 = self.float("domain", "x1", Some(1.0))?;
                let y0 = self.float("domain", "y0", Some(0.0))?;
                let y1 = self.float("domain", "y1", Some(1.0))?;
                let nx = self.positive_integer("domain", "nx", None);
                let ny = self.positive_integer("domain", "ny", None);
                let (Some(nx), Some(ny)) = (nx, ny) else {
                    if self.raw("domain", "nx").is_none() || self.raw("domain", "ny").is_none() {
                        self.push(None, "2D domains need `nx` and `ny` in [domain]".into());
                    }
                    return None;
                };
                if x0 >= x1 || y0 >= y1 {
                    self.push(None, "rectangle extents must be positive".into());
                    return None;
                }
                Some(DomainConfig::Rect { x0, x1, y0, y1, nx, ny })
            }
            other => {
                let line = self.raw("domain", "dim").map(|r| r.line);
                self.push(line, format!("`dim` must be 1 or 2, got {other}"));
                None
            }
        }
    }

    fn formulation(&mut self) -> Option<FormulationKind> {
        let Some(raw) = self.raw("model", "formulation") else {
            self.push(None, "missing required key `formulation` in [model]".into());
            return None;
        };
        match FormulationKind::parse(&raw.text) {
            Ok(k) => Some(k),
            Err(e) => {
                self.push(Some(raw.line), e.to_string());
                None
            }
        }
    }

    fn material(&mut self, formulation: Option<FormulationKind>) -> Option<(MaterialParams, bool)> {
        let has_em = self.raw("model", "epsilon").is_some() || self.raw("model", "mu").is_some();
        let has_mech = self.raw("model", "rho").is_some() || self.raw("model", "k").is_some();
        if has_em && has_mech {
            let line = self.raw("model", "epsilon").or(self.raw("model", "rho")).map(|r| r.line);
            self.push(
                line,
                "give either (rho, k) or (epsilon, mu), not both".into(),
            );
            return None;
        }
        let em = has_em || formulation == Some(FormulationKind::MaxwellTM);
        let result = if em {
            let eps = self.float("model", "epsilon", Some(1.0))?;
            let mu = self.float("model", "mu", Some(1.0))?;
            MaterialParams::from_em(eps, mu)
        } else {
            let rho = self.float("model", "rho", Some(1.0))?;
            let k = self.float("model", "k", Some(1.0))?;
            MaterialParams::new(rho, k)
        };
        match result {
            Ok(m) => Some((m, em)),
            Err(e) => {
                self.push(None, e.to_string());
                None
            }
        }
    }

    fn profile(&mut self) -> Profile {
        let zero = self
            .string("profile", "zero", Some("false"))
            .map(|s| s == "true")
            .unwrap_or(false);
        if zero {
            return Profile::Zero;
        }
        let mode = self.positive_integer("profile", "mode", Some(1)).unwrap_or(1);
        let amplitude = self.float("profile", "amplitude", Some(1.0)).unwrap_or(1.0);
        Profile::StandingMode { mode, amplitude }
    }

    #[allow(clippy::type_complexity)]
    fn time(&mut self) -> Option<(Scheme, f64, f64, usize, DtSpec)> {
        let Some(raw) = self.raw("time", "integrator") else {
            self.push(None, "missing required key `integrator` in [time]".into());
            return None;
        };
        let scheme = match raw.text.as_str() {
            "newmark" => Scheme::Newmark,
            "leapfrog" => Scheme::Leapfrog,
            "stormer-verlet" => Scheme::StormerVerlet,
            "implicit-midpoint" => Scheme::ImplicitMidpoint,
            other => {
                self.push(
                    Some(raw.line),
                    format!(
                        "unknown integrator `{other}` \
                         (known: newmark, leapfrog, stormer-verlet, implicit-midpoint)"
                    ),
                );
                return None;
            }
        };
        let (default_gamma, default_beta) = match scheme {
            Scheme::Leapfrog | Scheme::StormerVerlet => (0.5, 0.0),
            _ => (0.5, 0.25),
        };
        let gamma = self.float("time", "gamma", Some(default_gamma))?;
        let beta = self.float("time", "beta", Some(default_beta))?;
        if scheme != Scheme::Newmark
            && (self.raw("time", "gamma").is_some() || self.raw("time", "beta").is_some())
            && (gamma != default_gamma || beta != default_beta)
        {
            let line = self
                .raw("time", "gamma")
                .or(self.raw("time", "beta"))
                .map(|r| r.line);
            self.push(
                line,
                format!("gamma/beta overrides apply to integrator = newmark only; {} is fixed at ({default_gamma}, {default_beta})", raw.text),
            );
        }
        let steps = self.integer("time", "steps", Some(100))?;
        let dt_raw = self.raw("time", "dt").map(|r| r.line);
        let cfl_raw = self.raw("time", "cfl_fraction").map(|r| r.line);
        let dt_spec = match (dt_raw, cfl_raw) {
            (Some(l1), Some(_l2)) => {
                self.push(
                    Some(l1),
                    "`dt` and `cfl_fraction` are mutually exclusive; give exactly one".into(),
                );
                return None;
            }
            (Some(_), None) => {
                let dt = self.float("time", "dt", None)?;
                if !(dt > 0.0 && dt.is_finite()) {
                    self.push(dt_raw, "`dt` must be positive and finite".into());
                    return None;
                }
                DtSpec::Fixed(dt)
            }
            (None, Some(_)) => {
                let f = self.float("time", "cfl_fraction", None)?;
                if !(f > 0.0 && f.is_finite()) {
                    self.push(cfl_raw, "`cfl_fraction` must be positive".into());
                    return None;
                }
                DtSpec::CflFraction(f)
            }
            (None, None) => DtSpec::CflFraction(0.9),
        };
        Some((scheme, gamma, beta, steps, dt_spec))
    }

    fn solver(&mut self) -> Option<(SolverConfig, MidpointPath)> {
        let tol = self.float("solver", "tol", Some(1e-12))?;
        let max_iterations = self.positive_integer("solver", "max_iterations", Some(200_000))?;
        let gmres_restart = self.positive_integer("solver", "gmres_restart", Some(50))?;
        let method = match self.string("solver", "method", Some("auto")).as_deref() {
            Some("auto") => Method::Auto,
            Some("cg") => Method::Cg,
            Some("gmres") => Method::Gmres,
            Some("direct") => Method::DirectBanded,
            Some(other) => {
                let line = self.raw("solver", "method").map(|r| r.line);
                self.push(line, format!("unknown solver method `{other}`"));
                return None;
            }
            None => Method::Auto,
        };
        let midpoint_path = match self
            .string("solver", "midpoint_path", Some("schur"))
            .as_deref()
        {
            Some("schur") => MidpointPath::Schur,
            Some("monolithic") => MidpointPath::Monolithic,
            Some(other) => {
                let line = self.raw("solver", "midpoint_path").map(|r| r.line);
                self.push(line, format!("unknown midpoint path `{other}`"));
                return None;
            }
            None => MidpointPath::Schur,
        };
        let cfg = SolverConfig {
            tol,
            max_iterations,
            method,
            gmres_restart,
        };
        if let Err(e) = cfg.validate() {
            self.push(None, e.to_string());
            return None;
        }
        Some((cfg, midpoint_path))
    }

    fn compare(&mut self) -> Option<CompareConfig> {
        let raw = self.raw("compare", "against")?;
        let against = if let Ok(k) = FormulationKind::parse(&raw.text) {
            CompareTarget::Formulation(k)
        } else if let Ok(r) = ReductionKind::parse(&raw.text) {
            CompareTarget::Reduction(r)
        } else {
            self.push(
                Some(raw.line),
                format!("`against` must name a formulation or a reduction, got `{}`", raw.text),
            );
            return None;
        };
        let tol = self.float("compare", "tol", None);
        Some(CompareConfig { against, tol })
    }

    fn converge(&mut self) -> ConvergeConfig {
        let d = ConvergeConfig::default();
        ConvergeConfig {
            cells: self.usize_list("converge", "cells", &d.cells),
            dt_fraction: self
                .float("converge", "dt_fraction", Some(d.dt_fraction))
                .unwrap_or(d.dt_fraction),
            t_final: self
                .float("converge", "t_final", Some(d.t_final))
                .unwrap_or(d.t_final),
            order_min: self
                .float("converge", "order_min", Some(d.order_min))
                .unwrap_or(d.order_min),
            order_max: self
                .float("converge", "order_max", Some(d.order_max))
                .unwrap_or(d.order_max),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[domain]
n = 32

[model]
formulation = hamiltonian-vq

[time]
integrator = leapfrog
steps = 10
";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.domain, DomainConfig::Interval { a: 0.0, b: 1.0, n: 32 });
        assert_eq!(cfg.solver.tol, 1e-12);
        assert_eq!(cfg.dt_spec, DtSpec::CflFraction(0.9));
        assert_eq!(cfg.scheme, Scheme::Leapfrog);
        assert_eq!(
            cfg.profile,
            Profile::StandingMode { mode: 1, amplitude: 1.0 }
        );
    }

    #[test]
    fn dt_and_cfl_fraction_conflict() {
        let text = format!("{MINIMAL}dt = 0.001\ncfl_fraction = 0.5\n");
        let errs = parse_config(&text).unwrap_err();
        assert!(
            errs.iter()
                .any(|e| e.message.contains("dt") && e.message.contains("cfl_fraction")),
            "{errs:?}"
        );
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = "[domain]\nn = 4\nwobble = 3\n\n[model]\nformulation = hamiltonian-vq\n\n[time]\nintegrator = leapfrog\n";
        let errs = parse_config(text).unwrap_err();
        let e = errs.iter().find(|e| e.message.contains("wobble")).unwrap();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn ill_typed_value_reports_line() {
        let text = "[domain]\nn = lots\n\n[model]\nformulation = hamiltonian-vq\n\n[time]\nintegrator = leapfrog\n";
        let errs = parse_config(text).unwrap_err();
        let e = errs.iter().find(|e| e.message.contains("`n`")).unwrap();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn missing_required_keys_are_all_reported() {
        let errs = parse_config("[domain]\nn = 4\n").unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("formulation")));
        assert!(errs.iter().any(|e| e.message.contains("integrator")));
    }

    #[test]
    fn grad_mixed_on_2d_domain_is_a_compatibility_violation() {
        let text = "\
[domain]
dim = 2
nx = 4
ny = 4

[model]
formulation = mixed-grad-vs

[time]
integrator = leapfrog
";
        let errs = parse_config(text).unwrap_err();
        assert!(
            errs.iter()
                .any(|e| e.message.contains("compatibility violation")),
            "{errs:?}"
        );
    }

    #[test]
    fn newmark_on_first_order_formulation_rejected() {
        let text = MINIMAL.replace("leapfrog", "newmark");
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("first order")));
    }

    #[test]
    fn gamma_override_outside_newmark_rejected() {
        let text = format!("{MINIMAL}gamma = 0.6\n");
        let errs = parse_config(&text).unwrap_err();
        assert!(errs.iter().any(|e| e.message.contains("newmark")));
    }

    #[test]
    fn compare_target_parses_formulations_and_reductions() {
        let text = format!("{MINIMAL}\n[compare]\nagainst = mixed-grad-vs\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(
            cfg.compare.unwrap().against,
            CompareTarget::Formulation(FormulationKind::MixedGradVS)
        );
        let text = format!("{MINIMAL}\n[compare]\nagainst = staggered-velocity-recurrence\n");
        let cfg = parse_config(&text).unwrap();
        assert_eq!(
            cfg.compare.unwrap().against,
            CompareTarget::Reduction(ReductionKind::StaggeredVelocityRecurrence)
        );
    }

    #[test]
    fn em_material_aliases() {
        let text = "\
[domain]
dim = 2
nx = 2
ny = 2

[model]
formulation = maxwell-tm
epsilon = 2.0
mu = 4.0

[time]
integrator = implicit-midpoint
";
        let cfg = parse_config(text).unwrap();
        assert!(cfg.electromagnetic);
        assert!((cfg.material.rho - 2.0).abs() < 1e-15);
        assert!((cfg.material.compliance() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let text = format!("# header\n\n{MINIMAL}# trailing\n");
        assert!(parse_config(&text).is_ok());
    }
}
