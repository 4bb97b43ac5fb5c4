//! Run configuration: flat INI-style sections with typed keys, strict about
//! unknown or duplicate keys, with line-numbered errors. Defaults reproduce
//! the plasma-relaxation example (κ=1, A₁=1, τₐ=1, d₁=0.5, τ_d=1, B₂=0.4,
//! B₁=0.2, τ_b=1, μ=0.5, γ₁=1.5, γ₂=1, D=0.01, N=1).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::coefficients::{CoefficientKind, CoefficientModel, Table};
use crate::error::Error;
use crate::solver::{AxisSpec, GridSpec, InitialCondition};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum CoeffKindConfig {
    ExponentialRelaxation,
    Tabulated,
}

#[derive(Clone, Debug)]
pub struct CoefficientsConfig {
    pub kind: CoeffKindConfig,
    pub a1: f64,
    pub tau_a: f64,
    pub d1: f64,
    pub tau_d: f64,
    pub b1: f64,
    pub b2: f64,
    pub tau_b: f64,
    /// CSV path with rows (t, a, b, diffusion) for the tabulated kind.
    pub table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialKindConfig {
    DoubleGaussian,
    Grid,
}

#[derive(Clone, Debug)]
pub struct InitialConfig {
    pub kind: InitialKindConfig,
    pub n: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub eps: f64,
    /// CSV path with columns (x1, x2, v) on a uniform grid, for kind = grid.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GermConfig {
    Auto,
    Fixed { beta1: f64, beta2: f64 },
}

#[derive(Clone, Debug)]
pub struct NumericsConfig {
    pub d: f64,
    pub kappa: f64,
    pub mu: f64,
    pub n_max: usize,
    pub dt: f64,
    pub dt_fd: f64,
    pub t_end: f64,
    pub germ: GermConfig,
    pub n0: f64,
}

#[derive(Clone, Debug)]
pub struct GridConfig {
    pub x1_min: f64,
    pub x1_max: f64,
    pub n1: usize,
    pub x2_min: f64,
    pub x2_max: f64,
    pub n2: usize,
}

#[derive(Clone, Debug)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Times at which field/residual rows are emitted.
    pub times: Vec<f64>,
    /// Sampling step for the time-series CSVs (sigma, germ, modes).
    pub sample_dt: f64,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub coefficients: CoefficientsConfig,
    pub initial: InitialConfig,
    pub numerics: NumericsConfig,
    pub grid: GridConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            coefficients: CoefficientsConfig {
                kind: CoeffKindConfig::ExponentialRelaxation,
                a1: 1.0,
                tau_a: 1.0,
                d1: 0.5,
                tau_d: 1.0,
                b1: 0.2,
                b2: 0.4,
                tau_b: 1.0,
                table: None,
            },
            initial: InitialConfig {
                kind: InitialKindConfig::DoubleGaussian,
                n: 1.0,
                gamma1: 1.5,
                gamma2: 1.0,
                eps: 0.85,
                path: None,
            },
            numerics: NumericsConfig {
                d: 0.01,
                kappa: 1.0,
                mu: 0.5,
                n_max: 8,
                dt: 1e-3,
                dt_fd: 1e-4,
                t_end: 5.0,
                germ: GermConfig::Auto,
                n0: 1.0,
            },
            grid: GridConfig {
                x1_min: -1.0,
                x1_max: 1.0,
                n1: 201,
                x2_min: -1.0,
                x2_max: 1.0,
                n2: 201,
            },
            output: OutputConfig {
                dir: PathBuf::from("out"),
                times: vec![0.0, 1.0, 2.0, 5.0],
                sample_dt: 0.05,
            },
        }
    }
}

fn cfg_err(line: Option<usize>, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        message: message.into(),
    }
}

impl RunConfig {
    /// Parse a config file and apply it on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_with_defaults(&text)
    }

    pub fn from_str_with_defaults(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        let mut seen: BTreeSet<String> = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(Some(lineno), "unterminated section header"))?;
                section = name.trim().to_string();
                match section.as_str() {
                    "coefficients" | "initial" | "numerics" | "grid" | "output" => {}
                    other => return Err(cfg_err(Some(lineno), format!("unknown section [{other}]"))),
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(Some(lineno), format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            let value = value.trim();
            if section.is_empty() {
                return Err(cfg_err(Some(lineno), "key before any [section] header"));
            }
            let full = format!("{section}.{key}");
            if !seen.insert(full.clone()) {
                return Err(cfg_err(Some(lineno), format!("duplicate key {full}")));
            }
            cfg.apply(&section, key, value, Some(lineno))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply one `section.key=value` override (the CLI `--override` flag).
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (path, value) = spec
            .split_once('=')
            .ok_or_else(|| cfg_err(None, format!("override must be section.key=value, got `{spec}`")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| cfg_err(None, format!("override key must be section.key, got `{path}`")))?;
        self.apply(section, key, value.trim(), None)
    }

    fn apply(&mut self, section: &str, key: &str, value: &str, line: Option<usize>) -> Result<()> {
        let f = |v: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| cfg_err(line, format!("expected a number, got `{v}`")))
        };
        let pos = |v: &str, name: &str| -> Result<f64> {
            let x = f(v)?;
            if !(x > 0.0) {
                return Err(cfg_err(line, format!("{name} must be > 0, got {x}")));
            }
            Ok(x)
        };
        let usz = |v: &str| -> Result<usize> {
            v.parse::<usize>()
                .map_err(|_| cfg_err(line, format!("expected a non-negative integer, got `{v}`")))
        };
        match (section, key) {
            ("coefficients", "kind") => {
                self.coefficients.kind = match value {
                    "exponential_relaxation" => CoeffKindConfig::ExponentialRelaxation,
                    "tabulated" => CoeffKindConfig::Tabulated,
                    other => {
                        return Err(cfg_err(
                            line,
                            format!("kind must be exponential_relaxation or tabulated, got `{other}`"),
                        ))
                    }
                }
            }
            ("coefficients", "a1") => self.coefficients.a1 = f(value)?,
            ("coefficients", "tau_a") => self.coefficients.tau_a = pos(value, "tau_a")?,
            ("coefficients", "d1") => self.coefficients.d1 = f(value)?,
            ("coefficients", "tau_d") => self.coefficients.tau_d = pos(value, "tau_d")?,
            ("coefficients", "b1") => self.coefficients.b1 = f(value)?,
            ("coefficients", "b2") => self.coefficients.b2 = f(value)?,
            ("coefficients", "tau_b") => self.coefficients.tau_b = pos(value, "tau_b")?,
            ("coefficients", "table") => self.coefficients.table = Some(PathBuf::from(value)),
            ("initial", "kind") => {
                self.initial.kind = match value {
                    "double_gaussian" => InitialKindConfig::DoubleGaussian,
                    "grid" => InitialKindConfig::Grid,
                    other => {
                        return Err(cfg_err(
                            line,
                            format!("kind must be double_gaussian or grid, got `{other}`"),
                        ))
                    }
                }
            }
            ("initial", "n") => self.initial.n = pos(value, "n")?,
            ("initial", "gamma1") => self.initial.gamma1 = pos(value, "gamma1")?,
            ("initial", "gamma2") => self.initial.gamma2 = pos(value, "gamma2")?,
            ("initial", "eps") => {
                let x = f(value)?;
                if !(0.0..=1.0).contains(&x) {
                    return Err(cfg_err(line, format!("eps must lie in [0, 1], got {x}")));
                }
                self.initial.eps = x;
            }
            ("initial", "path") => self.initial.path = Some(PathBuf::from(value)),
            ("numerics", "d") => self.numerics.d = pos(value, "d")?,
            ("numerics", "kappa") => {
                let x = f(value)?;
                if x < 0.0 {
                    return Err(cfg_err(line, format!("kappa must be >= 0, got {x}")));
                }
                self.numerics.kappa = x;
            }
            ("numerics", "mu") => self.numerics.mu = pos(value, "mu")?,
            ("numerics", "n_max") => self.numerics.n_max = usz(value)?,
            ("numerics", "dt") => self.numerics.dt = pos(value, "dt")?,
            ("numerics", "dt_fd") => self.numerics.dt_fd = pos(value, "dt_fd")?,
            ("numerics", "t_end") => self.numerics.t_end = pos(value, "t_end")?,
            ("numerics", "n0") => self.numerics.n0 = pos(value, "n0")?,
            ("numerics", "germ") => {
                self.numerics.germ = if value == "auto" {
                    GermConfig::Auto
                } else {
                    let (b1, b2) = value.split_once(',').ok_or_else(|| {
                        cfg_err(line, format!("germ must be `auto` or `beta1,beta2`, got `{value}`"))
                    })?;
                    let beta1 = pos(b1.trim(), "beta1")?;
                    let beta2 = pos(b2.trim(), "beta2")?;
                    GermConfig::Fixed { beta1, beta2 }
                }
            }
            ("grid", "x1_min") => self.grid.x1_min = f(value)?,
            ("grid", "x1_max") => self.grid.x1_max = f(value)?,
            ("grid", "n1") => self.grid.n1 = usz(value)?,
            ("grid", "x2_min") => self.grid.x2_min = f(value)?,
            ("grid", "x2_max") => self.grid.x2_max = f(value)?,
            ("grid", "n2") => self.grid.n2 = usz(value)?,
            ("output", "dir") => self.output.dir = PathBuf::from(value),
            ("output", "times") => {
                let mut times = Vec::new();
                for part in value.split(',') {
                    times.push(f(part.trim())?);
                }
                if times.is_empty() {
                    return Err(cfg_err(line, "times must list at least one value"));
                }
                self.output.times = times;
            }
            ("output", "sample_dt") => self.output.sample_dt = pos(value, "sample_dt")?,
            (s, k) => return Err(cfg_err(line, format!("unknown key {s}.{k}"))),
        }
        Ok(())
    }

    /// Cross-field validation (anything not already enforced per key).
    pub fn validate(&self) -> Result<()> {
        if self.coefficients.kind == CoeffKindConfig::Tabulated && self.coefficients.table.is_none()
        {
            return Err(cfg_err(None, "coefficients.kind = tabulated needs coefficients.table"));
        }
        if self.initial.kind == InitialKindConfig::Grid && self.initial.path.is_none() {
            return Err(cfg_err(None, "initial.kind = grid needs initial.path"));
        }
        if self.initial.gamma1 < self.initial.gamma2 {
            return Err(cfg_err(None, "need gamma1 >= gamma2"));
        }
        if !(self.grid.x1_max > self.grid.x1_min) || !(self.grid.x2_max > self.grid.x2_min) {
            return Err(cfg_err(None, "grid extents must satisfy max > min"));
        }
        if self.grid.n1 < 2 || self.grid.n2 < 2 {
            return Err(cfg_err(None, "grids need at least 2 points per axis"));
        }
        if self.numerics.n_max > crate::hermite::HERMITE_ORDER_CAP {
            return Err(cfg_err(
                None,
                format!(
                    "n_max {} above the Hermite cap {}",
                    self.numerics.n_max,
                    crate::hermite::HERMITE_ORDER_CAP
                ),
            ));
        }
        for &t in &self.output.times {
            if t < 0.0 || t > self.numerics.t_end {
                return Err(cfg_err(
                    None,
                    format!("output time {t} outside [0, t_end = {}]", self.numerics.t_end),
                ));
            }
        }
        Ok(())
    }

    /// Build the coefficient model (reads the table file for tabulated kind).
    pub fn coefficient_model(&self) -> Result<Arc<CoefficientModel>> {
        let kind = match self.coefficients.kind {
            CoeffKindConfig::ExponentialRelaxation => CoefficientKind::ExponentialRelaxation {
                a1: self.coefficients.a1,
                tau_a: self.coefficients.tau_a,
                d1: self.coefficients.d1,
                tau_d: self.coefficients.tau_d,
                b1: self.coefficients.b1,
                b2: self.coefficients.b2,
                tau_b: self.coefficients.tau_b,
            },
            CoeffKindConfig::Tabulated => {
                let path = self.coefficients.table.as_ref().expect("validated");
                let rows = load_coefficient_table(path)?;
                CoefficientKind::UserTabulated(Table::new(&rows)?)
            }
        };
        Ok(Arc::new(CoefficientModel::new(
            kind,
            self.numerics.mu,
            self.numerics.kappa,
            self.numerics.d,
        )?))
    }

    /// Build the initial condition (reads the field file for grid kind).
    pub fn initial_condition(&self) -> Result<InitialCondition> {
        match self.initial.kind {
            InitialKindConfig::DoubleGaussian => Ok(InitialCondition::DoubleGaussian {
                n_amp: self.initial.n,
                gamma1: self.initial.gamma1,
                gamma2: self.initial.gamma2,
                eps: self.initial.eps,
            }),
            InitialKindConfig::Grid => {
                let path = self.initial.path.as_ref().expect("validated");
                let (values, grid) = load_field_csv(path)?;
                Ok(InitialCondition::Gridded { values, grid })
            }
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(
            AxisSpec::new(self.grid.x1_min, self.grid.x1_max, self.grid.n1)?,
            AxisSpec::new(self.grid.x2_min, self.grid.x2_max, self.grid.n2)?,
        ))
    }

    /// The effective (defaulted) configuration as deterministic
    /// `section.key=value` lines for the run manifest.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let kind = match self.coefficients.kind {
            CoeffKindConfig::ExponentialRelaxation => "exponential_relaxation",
            CoeffKindConfig::Tabulated => "tabulated",
        };
        out.push_str(&format!("coefficients.kind={kind}\n"));
        out.push_str(&format!("coefficients.a1={}\n", self.coefficients.a1));
        out.push_str(&format!("coefficients.tau_a={}\n", self.coefficients.tau_a));
        out.push_str(&format!("coefficients.d1={}\n", self.coefficients.d1));
        out.push_str(&format!("coefficients.tau_d={}\n", self.coefficients.tau_d));
        out.push_str(&format!("coefficients.b1={}\n", self.coefficients.b1));
        out.push_str(&format!("coefficients.b2={}\n", self.coefficients.b2));
        out.push_str(&format!("coefficients.tau_b={}\n", self.coefficients.tau_b));
        if let Some(t) = &self.coefficients.table {
            out.push_str(&format!("coefficients.table={}\n", t.display()));
        }
        let ikind = match self.initial.kind {
            InitialKindConfig::DoubleGaussian => "double_gaussian",
            InitialKindConfig::Grid => "grid",
        };
        out.push_str(&format!("initial.kind={ikind}\n"));
        out.push_str(&format!("initial.n={}\n", self.initial.n));
        out.push_str(&format!("initial.gamma1={}\n", self.initial.gamma1));
        out.push_str(&format!("initial.gamma2={}\n", self.initial.gamma2));
        out.push_str(&format!("initial.eps={}\n", self.initial.eps));
        if let Some(p) = &self.initial.path {
            out.push_str(&format!("initial.path={}\n", p.display()));
        }
        out.push_str(&format!("numerics.d={}\n", self.numerics.d));
        out.push_str(&format!("numerics.kappa={}\n", self.numerics.kappa));
        out.push_str(&format!("numerics.mu={}\n", self.numerics.mu));
        out.push_str(&format!("numerics.n_max={}\n", self.numerics.n_max));
        out.push_str(&format!("numerics.dt={}\n", self.numerics.dt));
        out.push_str(&format!("numerics.dt_fd={}\n", self.numerics.dt_fd));
        out.push_str(&format!("numerics.t_end={}\n", self.numerics.t_end));
        out.push_str(&format!("numerics.n0={}\n", self.numerics.n0));
        match self.numerics.germ {
            GermConfig::Auto => out.push_str("numerics.germ=auto\n"),
            GermConfig::Fixed { beta1, beta2 } => {
                out.push_str(&format!("numerics.germ={beta1},{beta2}\n"))
            }
        }
        out.push_str(&format!("grid.x1_min={}\n", self.grid.x1_min));
        out.push_str(&format!("grid.x1_max={}\n", self.grid.x1_max));
        out.push_str(&format!("grid.n1={}\n", self.grid.n1));
        out.push_str(&format!("grid.x2_min={}\n", self.grid.x2_min));
        out.push_str(&format!("grid.x2_max={}\n", self.grid.x2_max));
        out.push_str(&format!("grid.n2={}\n", self.grid.n2));
        out.push_str(&format!("output.dir={}\n", self.output.dir.display()));
        let times: Vec<String> = self.output.times.iter().map(|t| t.to_string()).collect();
        out.push_str(&format!("output.times={}\n", times.join(",")));
        out.push_str(&format!("output.sample_dt={}\n", self.output.sample_dt));
        out
    }
}

/// Read a coefficient table CSV with header `t,a,b,diffusion`.
pub fn load_coefficient_table(path: &Path) -> Result<Vec<(f64, f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != "t,a,b,diffusion" {
                return Err(cfg_err(
                    Some(1),
                    format!("coefficient table header must be `t,a,b,diffusion`, got `{line}`"),
                ));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(cfg_err(Some(idx + 1), format!("expected 4 columns, got {}", parts.len())));
        }
        let mut vals = [0.0; 4];
        for (k, p) in parts.iter().enumerate() {
            vals[k] = p
                .trim()
                .parse::<f64>()
                .map_err(|_| cfg_err(Some(idx + 1), format!("bad number `{p}`")))?;
        }
        rows.push((vals[0], vals[1], vals[2], vals[3]));
    }
    Ok(rows)
}

/// Read a gridded field CSV with header `x1,x2,v`; the sample points must
/// form a full uniform tensor grid (any row order).
pub fn load_field_csv(path: &Path) -> Result<(Vec<f64>, GridSpec)> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == 0 {
            if line != "x1,x2,v" {
                return Err(cfg_err(
                    Some(1),
                    format!("field header must be `x1,x2,v`, got `{line}`"),
                ));
            }
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(cfg_err(Some(idx + 1), format!("expected 3 columns, got {}", parts.len())));
        }
        let p = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| cfg_err(Some(idx + 1), format!("bad number `{s}`")))
        };
        rows.push((p(parts[0])?, p(parts[1])?, p(parts[2])?));
    }
    if rows.is_empty() {
        return Err(cfg_err(None, "field file has no data rows"));
    }
    let mut x1: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut x2: Vec<f64> = rows.iter().map(|r| r.1).collect();
    x1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    x1.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    x2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    x2.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let (n1, n2) = (x1.len(), x2.len());
    if n1 * n2 != rows.len() {
        return Err(cfg_err(
            None,
            format!("field rows ({}) do not fill a {}x{} tensor grid", rows.len(), n1, n2),
        ));
    }
    for (axis, pts) in [("x1", &x1), ("x2", &x2)] {
        let h = pts[1] - pts[0];
        for w in pts.windows(2) {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0) {
                return Err(cfg_err(None, format!("{axis} samples are not uniformly spaced")));
            }
        }
    }
    let grid = GridSpec::new(
        AxisSpec::new(x1[0], *x1.last().unwrap(), n1)?,
        AxisSpec::new(x2[0], *x2.last().unwrap(), n2)?,
    );
    let locate = |pts: &[f64], v: f64| -> usize {
        let h = (pts[pts.len() - 1] - pts[0]) / (pts.len() - 1) as f64;
        ((v - pts[0]) / h).round() as usize
    };
    let mut values = vec![f64::NAN; n1 * n2];
    for (a, b, v) in rows {
        values[locate(&x1, a) * n2 + locate(&x2, b)] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(cfg_err(None, "field file does not cover the full grid"));
    }
    Ok((values, grid))
}
