//! Command implementations behind the `semikin` binary. Every command loads
//! the effective configuration, echoes it to `run_manifest`, wires the
//! pipeline and emits deterministic CSV artifacts (atomic write-then-rename,
//! shortest round-trip float formatting, no timestamps).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{GermConfig, InitialKindConfig, RunConfig};
use crate::ee::{moments_from_field, EESolution, MomentState};
use crate::error::Error;
use crate::hermite::{
    gaussian_ic_coeffs, hermite_poly, ic_moments_from_coeffs, mode_moments, optimal_beta,
    project_ic, HermiteExpansion, ModeIndex,
};
use crate::numeric::Kahan;
use crate::solver::{
    apply_ladder_check, build_solution, grid_mass, single_mode_solution, GermChoice,
    GridSpec, InitialCondition, SolutionField,
};
use crate::variational::{Axis, GermParams};
use crate::Result;

/// Check-suite tolerances (fixed at build time, not configurable).
mod tol {
    /// Skew-product drift over the full horizon at the configured dt.
    pub const SKEW: f64 = 1e-8;
    /// Relative diagonal error and off-diagonal mass of the ψ Gram matrix.
    pub const ORTHOGONALITY: f64 = 1e-6;
    /// Mutual agreement of the three initial-moment routes.
    pub const MOMENTS: f64 = 1e-5;
    /// Ladder identities: nullification, raising, commutator.
    pub const LADDER_LOWER: f64 = 1e-10;
    pub const LADDER_RAISE: f64 = 1e-6;
    pub const LADDER_COMM: f64 = 1e-6;
    /// Relative residual of the associated linear equation.
    pub const ALE: f64 = 1e-5;
    /// Exact linear case: sigma paths and (when representable) the field.
    pub const LINEAR: f64 = 1e-8;
    /// Least admissible decay ratio per 4x step of D (the D^{3/2} bound).
    pub const DSCALING_MIN_RATIO: f64 = 4.0;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Table,
    Sigma,
    Field,
    Germ,
    Residual,
    Modes,
    Check,
}

/// Run one command; returns the process exit code (0 success, 4 for a check
/// suite failure — config/validity errors surface as `Err`).
pub fn run(cmd: Command, cfg: &RunConfig) -> Result<i32> {
    fs::create_dir_all(&cfg.output.dir)?;
    write_atomic(&cfg.output.dir.join("run_manifest"), &cfg.manifest())?;
    match cmd {
        Command::Table => cmd_table(cfg).map(|_| 0),
        Command::Sigma => cmd_sigma(cfg).map(|_| 0),
        Command::Field => cmd_field(cfg).map(|_| 0),
        Command::Germ => cmd_germ(cfg).map(|_| 0),
        Command::Residual => cmd_residual(cfg).map(|_| 0),
        Command::Modes => cmd_modes(cfg).map(|_| 0),
        Command::Check => cmd_check(cfg),
    }
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn germ_choice(cfg: &RunConfig) -> Result<GermChoice> {
    Ok(match cfg.numerics.germ {
        GermConfig::Auto => GermChoice::Auto,
        GermConfig::Fixed { beta1, beta2 } => GermChoice::Fixed(GermParams::new(beta1, beta2)?),
    })
}

fn build_field(cfg: &RunConfig) -> Result<SolutionField> {
    let model = cfg.coefficient_model()?;
    let ic = cfg.initial_condition()?;
    let field = build_solution(
        &ic,
        model,
        germ_choice(cfg)?,
        cfg.numerics.n_max,
        cfg.numerics.t_end,
        cfg.numerics.dt,
        cfg.numerics.dt_fd,
        cfg.numerics.n0,
    )?;
    if let Some(t) = field.ee().beta_warning() {
        eprintln!("warning: beta_eff(t) <= 0 from t = {t:.4}; outside the semiclassical regime");
    }
    Ok(field)
}

fn sample_times(cfg: &RunConfig) -> Vec<f64> {
    let n = (cfg.numerics.t_end / cfg.output.sample_dt).round() as usize;
    (0..=n)
        .map(|i| (i as f64 * cfg.output.sample_dt).min(cfg.numerics.t_end))
        .collect()
}

/// The two ε values of the mass-relaxation figure: the configured one plus
/// ε = 1 (or the published pair when the configured value already is 1).
fn eps_pair(cfg: &RunConfig) -> Vec<f64> {
    let e = cfg.initial.eps;
    if (e - 1.0).abs() < 1e-15 {
        vec![0.85, 1.0]
    } else {
        vec![e, 1.0]
    }
}

fn matched_ee(cfg: &RunConfig, eps: f64) -> Result<EESolution> {
    let model = cfg.coefficient_model()?;
    let sigma = 2.0 * std::f64::consts::PI * cfg.initial.n * (cfg.initial.gamma1 - eps * cfg.initial.gamma2);
    let alpha = cfg.numerics.d
        * (cfg.initial.gamma1 * cfg.initial.gamma1 - eps * cfg.initial.gamma2 * cfg.initial.gamma2)
        / (cfg.initial.gamma1 - eps * cfg.initial.gamma2);
    let moments = MomentState {
        sigma,
        center: [0.0, 0.0],
        alpha: crate::ee::Sym2::diag(alpha, alpha),
    };
    EESolution::match_constants(&moments, model, cfg.numerics.t_end)
}

/// Sample the configured double-Gaussian profile on the configured grid.
fn sampled_profile(cfg: &RunConfig, eps: f64) -> Result<(Vec<f64>, GridSpec)> {
    let grid = cfg.grid_spec()?;
    let x1 = grid.x1.points();
    let x2 = grid.x2.points();
    let d = cfg.numerics.d;
    let (g1, g2, n_amp) = (cfg.initial.gamma1, cfg.initial.gamma2, cfg.initial.n);
    let mut values = vec![0.0; x1.len() * x2.len()];
    for (i, &a) in x1.iter().enumerate() {
        for (j, &b) in x2.iter().enumerate() {
            let r2 = a * a + b * b;
            values[i * x2.len() + j] = n_amp / d
                * ((-r2 / (2.0 * g1 * d)).exp() - eps * (-r2 / (2.0 * g2 * d)).exp());
        }
    }
    Ok((values, grid))
}

fn beta_for_table(cfg: &RunConfig) -> Result<f64> {
    Ok(match cfg.numerics.germ {
        GermConfig::Auto => optimal_beta(cfg.initial.gamma1, cfg.initial.gamma2)?,
        GermConfig::Fixed { beta1, .. } => beta1,
    })
}

/// `table`: expansion coefficients for nᵢ ≤ 4, closed form and projection
/// quadrature, for both ε values.
fn cmd_table(cfg: &RunConfig) -> Result<()> {
    if cfg.initial.kind != InitialKindConfig::DoubleGaussian {
        return Err(Error::Domain(
            "the table command needs a double-Gaussian initial condition".into(),
        ));
    }
    let beta = beta_for_table(cfg)?;
    let params = GermParams::isotropic(beta)?;
    let mut csv = String::from("eps,n1,n2,k,source,abs_diff\n");
    for eps in eps_pair(cfg) {
        let (values, grid) = sampled_profile(cfg, eps)?;
        let projected = project_ic(&values, &grid, params, cfg.numerics.d, 4, cfg.numerics.n0)?;
        for n1 in 0..=4usize {
            for n2 in 0..=4usize {
                let closed = gaussian_ic_coeffs(
                    cfg.initial.n,
                    cfg.initial.gamma1,
                    cfg.initial.gamma2,
                    eps,
                    beta,
                    ModeIndex::new(n1, n2),
                )?;
                let quad = projected.k(n1, n2);
                let diff = (closed - quad).abs();
                let _ = writeln!(csv, "{eps},{n1},{n2},{closed},closed_form,{diff}");
                let _ = writeln!(csv, "{eps},{n1},{n2},{quad},quadrature,{diff}");
            }
        }
    }
    write_atomic(&cfg.output.dir.join("coeffs.csv"), &csv)
}

/// `sigma`: mass relaxation curves with the ODE-oracle column.
fn cmd_sigma(cfg: &RunConfig) -> Result<()> {
    let mut csv = String::from("eps,t,sigma,sigma_ode_oracle,rel_diff\n");
    let times = sample_times(cfg);
    let mut emit = |eps_label: f64, ee: &EESolution| -> Result<()> {
        let oracle = ee.sigma_ode_check(cfg.numerics.t_end, cfg.numerics.dt)?;
        for &t in &times {
            let idx = ((t / cfg.numerics.dt).round() as usize).min(oracle.len() - 1);
            let (t_o, s_o) = oracle[idx];
            debug_assert!((t_o - t).abs() < cfg.numerics.dt);
            let s = ee.sigma(t)?;
            let rel = (s - s_o).abs() / s_o.abs();
            let _ = writeln!(csv, "{eps_label},{t},{s},{s_o},{rel}");
        }
        Ok(())
    };
    match cfg.initial.kind {
        InitialKindConfig::DoubleGaussian => {
            for eps in eps_pair(cfg) {
                let ee = matched_ee(cfg, eps)?;
                if let Some(tw) = ee.beta_warning() {
                    eprintln!("warning: beta_eff(t) <= 0 from t = {tw:.4} (eps = {eps})");
                }
                emit(eps, &ee)?;
            }
        }
        InitialKindConfig::Grid => {
            let model = cfg.coefficient_model()?;
            let ic = cfg.initial_condition()?;
            let InitialCondition::Gridded { values, grid } = &ic else {
                unreachable!()
            };
            let fm = moments_from_field(values, grid)?;
            let ee = EESolution::match_constants(&fm.moments, model, cfg.numerics.t_end)?;
            emit(f64::NAN, &ee)?;
        }
    }
    write_atomic(&cfg.output.dir.join("sigma.csv"), &csv)
}

/// `germ`: variational solutions and the skew products. W⁻ is stored as
/// integrated (the published figure flips its sign for display).
fn cmd_germ(cfg: &RunConfig) -> Result<()> {
    let field = build_field(cfg)?;
    let traj = field.trajectory();
    let mut csv = String::from("t,W1p,W1m,Z1p,Z1m,W2p,W2m,Z2p,Z2m,skew1,skew2\n");
    for t in sample_times(cfg) {
        let s = traj.state(t)?;
        let (a1, a2) = (s.axis[0], s.axis[1]);
        let skew1 = a1.z_minus * a1.w_plus - a1.z_plus * a1.w_minus;
        let skew2 = a2.z_minus * a2.w_plus - a2.z_plus * a2.w_minus;
        let _ = writeln!(
            csv,
            "{t},{},{},{},{},{},{},{},{},{skew1},{skew2}",
            a1.w_plus,
            a1.w_minus,
            a1.z_plus,
            a1.z_minus,
            a2.w_plus,
            a2.w_minus,
            a2.z_plus,
            a2.z_minus,
        );
    }
    write_atomic(&cfg.output.dir.join("germ.csv"), &csv)
}

/// `field`: the x₂ = 0 section of the reconstruction at the output times.
fn cmd_field(cfg: &RunConfig) -> Result<()> {
    let field = build_field(cfg)?;
    let grid = cfg.grid_spec()?;
    let mut csv = String::from("t,x1,x2,v\n");
    for &t in &cfg.output.times {
        for &x in &grid.x1.points() {
            let v = field.evaluate([x, 0.0], t)?;
            let _ = writeln!(csv, "{t},{x},0,{v}");
        }
    }
    write_atomic(&cfg.output.dir.join("field.csv"), &csv)
}

const RESIDUAL_POINTS: [[f64; 2]; 9] = [
    [0.0, 0.0],
    [0.1, 0.0],
    [0.2, 0.0],
    [0.0, 0.1],
    [0.0, 0.2],
    [0.1, 0.1],
    [0.2, 0.1],
    [0.1, 0.2],
    [0.2, 0.2],
];

/// `residual`: ALE and nonlocal residuals at fixed probe points, plus the
/// moment-transport comparison (EE mass vs grid mass of the reconstruction).
fn cmd_residual(cfg: &RunConfig) -> Result<()> {
    let field = build_field(cfg)?;
    let grid = cfg.grid_spec()?;
    let dt_fd = cfg.numerics.dt_fd;
    let mut csv = String::from("t,x1,x2,ale_res,nonlocal_res\n");
    for &t in &cfg.output.times {
        if t - dt_fd < 0.0 || t + dt_fd > field.validity_end() {
            continue; // centered differences need both neighbours
        }
        for p in RESIDUAL_POINTS {
            let ale = field.ale_residual(p, t, dt_fd)?;
            let nl = field.nonlocal_residual(p, t, &grid)?;
            let _ = writeln!(csv, "{t},{},{},{ale},{nl}", p[0], p[1]);
        }
    }
    write_atomic(&cfg.output.dir.join("residual.csv"), &csv)?;

    let mut mc = String::from("t,sigma_ee,sigma_grid,rel_diff\n");
    for t in sample_times(cfg) {
        if t > field.validity_end() {
            break;
        }
        let frames = field.evaluate_grid(&grid, &[t])?;
        let sg = grid_mass(&frames[0].values, &grid);
        let se = field.ee().sigma(t)?;
        let rel = (sg - se).abs() / se.abs();
        let _ = writeln!(mc, "{t},{se},{sg},{rel}");
    }
    write_atomic(&cfg.output.dir.join("moments_check.csv"), &mc)
}

const MODE_LIST: [(usize, usize); 4] = [(0, 0), (2, 0), (0, 2), (2, 2)];

/// `modes`: standalone mode solutions — their germ-expressed moments against
/// the EE mass they are matched to.
fn cmd_modes(cfg: &RunConfig) -> Result<()> {
    let model = cfg.coefficient_model()?;
    let params = match cfg.numerics.germ {
        GermConfig::Auto => GermParams::isotropic(optimal_beta(cfg.initial.gamma1, cfg.initial.gamma2)?)?,
        GermConfig::Fixed { beta1, beta2 } => GermParams::new(beta1, beta2)?,
    };
    let mut csv = String::from("n1,n2,t,sigma_mode,alpha11_mode,alpha22_mode,sigma_ee,rel_diff\n");
    for (n1, n2) in MODE_LIST {
        let mode = ModeIndex::new(n1, n2);
        // a standalone mode can leave the semiclassical regime before t_end
        // (beta_eff < 0 drives its mass to a finite-time blow-up); report it
        // as far as it is regular
        let mut t_end = cfg.numerics.t_end;
        let field = loop {
            match single_mode_solution(
                mode,
                model.clone(),
                params,
                cfg.numerics.n0,
                t_end,
                cfg.numerics.dt,
                cfg.numerics.dt_fd,
            ) {
                Ok(field) => break field,
                Err(Error::SingularSigma { t }) if t > 10.0 * cfg.output.sample_dt => {
                    eprintln!(
                        "warning: mode ({n1},{n2}) mass blows up near t = {t:.4}; reporting up to there"
                    );
                    t_end = 0.95 * t;
                }
                Err(e) => return Err(e),
            }
        };
        for t in sample_times(cfg) {
            if t > field.validity_end() {
                break;
            }
            let mm = match mode_moments(mode, field.trajectory(), field.ee(), t, cfg.numerics.n0) {
                Ok(mm) => mm,
                Err(Error::GermDegeneracy { t }) => {
                    eprintln!("warning: mode ({n1},{n2}) delocalizes near t = {t:.4}; rows stop there");
                    break;
                }
                Err(e) => return Err(e),
            };
            let alpha = mm.alpha.expect("even mode");
            let se = field.ee().sigma(t)?;
            let rel = (mm.sigma - se).abs() / se.abs();
            let _ = writeln!(csv, "{n1},{n2},{t},{},{},{},{se},{rel}", mm.sigma, alpha[0], alpha[1]);
        }
    }
    write_atomic(&cfg.output.dir.join("modes.csv"), &csv)
}

struct CheckRow {
    suite: &'static str,
    name: String,
    measured: f64,
    tolerance: f64,
    pass: bool,
}

fn check_le(rows: &mut Vec<CheckRow>, suite: &'static str, name: impl Into<String>, measured: f64, tolerance: f64) {
    rows.push(CheckRow {
        suite,
        name: name.into(),
        measured,
        tolerance,
        pass: measured.is_finite() && measured <= tolerance,
    });
}

/// `check`: the invariant suites. Exit code 4 when any suite fails.
fn cmd_check(cfg: &RunConfig) -> Result<i32> {
    let mut rows: Vec<CheckRow> = Vec::new();
    let field = build_field(cfg)?;
    let traj = field.trajectory();
    let grid = cfg.grid_spec()?;

    // skew-product conservation over the horizon
    {
        let b = traj.params();
        let mut worst: f64 = 0.0;
        let n = (cfg.numerics.t_end / cfg.numerics.dt).round() as usize;
        for i in 0..=n {
            let t = (i as f64 * cfg.numerics.dt).min(traj.t_end());
            worst = worst.max((traj.skew_product(Axis::X1, t)? - 2.0 * b.beta1).abs());
            worst = worst.max((traj.skew_product(Axis::X2, t)? - 2.0 * b.beta2).abs());
        }
        check_le(&mut rows, "skew", "max_drift", worst, tol::SKEW);
    }

    // orthogonality of the basis on the configured grid
    {
        let p = field.expansion().params();
        let d = cfg.numerics.d;
        let n_max = 4usize.min(cfg.numerics.n_max.max(1));
        let axis_tables = |pts: &[f64], beta: f64| -> Result<Vec<Vec<f64>>> {
            let mut out = Vec::with_capacity(n_max + 1);
            for n in 0..=n_max {
                let mut v = Vec::with_capacity(pts.len());
                for &x in pts {
                    let xi = x * (beta / d).sqrt();
                    v.push(hermite_poly(n, xi)? * (-beta * x * x / (2.0 * d)).exp());
                }
                out.push(v);
            }
            Ok(out)
        };
        let t1 = axis_tables(&grid.x1.points(), p.beta1)?;
        let t2 = axis_tables(&grid.x2.points(), p.beta2)?;
        let inner = |t: &Vec<Vec<f64>>, a: usize, b: usize, h: f64| -> f64 {
            let mut acc = Kahan::new();
            for i in 0..t[a].len() {
                acc.add(t[a][i] * t[b][i]);
            }
            acc.value() * h
        };
        let mut worst_diag: f64 = 0.0;
        let mut worst_off: f64 = 0.0;
        let fact = |n: usize| (1..=n).fold(1.0, |acc, i| acc * i as f64);
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                for m1 in 0..=n_max {
                    for m2 in 0..=n_max {
                        let val = inner(&t1, n1, m1, grid.x1.step())
                            * inner(&t2, n2, m2, grid.x2.step())
                            / (d * d);
                        let scale = 2f64.powi((n1 + n2) as i32) * fact(n1) * fact(n2)
                            * std::f64::consts::PI
                            / (d * (p.beta1 * p.beta2).sqrt());
                        if n1 == m1 && n2 == m2 {
                            worst_diag = worst_diag.max((val / scale - 1.0).abs());
                        } else {
                            worst_off = worst_off.max((val / scale).abs());
                        }
                    }
                }
            }
        }
        check_le(&mut rows, "orthogonality", "diag_rel_err", worst_diag, tol::ORTHOGONALITY);
        check_le(&mut rows, "orthogonality", "offdiag_mass", worst_off, tol::ORTHOGONALITY);
    }

    // initial-moment consistency across routes
    {
        match cfg.initial.kind {
            InitialKindConfig::DoubleGaussian => {
                let eps = cfg.initial.eps;
                let (values, pgrid) = sampled_profile(cfg, eps)?;
                let fm = moments_from_field(&values, &pgrid)?;
                let beta = beta_for_table(cfg)?;
                let expansion = HermiteExpansion::double_gaussian(
                    cfg.initial.n,
                    cfg.initial.gamma1,
                    cfg.initial.gamma2,
                    eps,
                    beta,
                    24,
                    cfg.numerics.d,
                    cfg.numerics.n0,
                )?;
                let from_sums = ic_moments_from_coeffs(&expansion)?;
                let (g1, g2, n_amp) = (cfg.initial.gamma1, cfg.initial.gamma2, cfg.initial.n);
                let closed_sigma = 2.0 * std::f64::consts::PI * n_amp * (g1 - eps * g2);
                let closed_alpha = cfg.numerics.d * (g1 * g1 - eps * g2 * g2) / (g1 - eps * g2);
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
                let worst_sigma = rel(fm.moments.sigma, closed_sigma).max(rel(from_sums.sigma, closed_sigma));
                let worst_alpha = rel(fm.moments.alpha.a11, closed_alpha)
                    .max(rel(from_sums.alpha.a11, closed_alpha))
                    .max(rel(fm.moments.alpha.a22, closed_alpha))
                    .max(rel(from_sums.alpha.a22, closed_alpha));
                check_le(&mut rows, "moments", "sigma_routes", worst_sigma, tol::MOMENTS);
                check_le(&mut rows, "moments", "alpha_routes", worst_alpha, tol::MOMENTS);
            }
            InitialKindConfig::Grid => {
                // grid data: quadrature moments vs the coefficient sums
                let ic = cfg.initial_condition()?;
                let InitialCondition::Gridded { values, grid: g } = &ic else {
                    unreachable!()
                };
                let fm = moments_from_field(values, g)?;
                let from_sums = ic_moments_from_coeffs(field.expansion())?;
                let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
                check_le(
                    &mut rows,
                    "moments",
                    "sigma_routes",
                    rel(from_sums.sigma, fm.moments.sigma),
                    tol::MOMENTS.max(10.0 * field.expansion().tail_estimate()),
                );
            }
        }
    }

    // ladder identities on the Gaussian mode
    {
        let params = field.expansion().params();
        let mode = single_mode_solution(
            ModeIndex::new(0, 0),
            cfg.coefficient_model()?,
            params,
            cfg.numerics.n0,
            cfg.numerics.t_end,
            cfg.numerics.dt,
            cfg.numerics.dt_fd,
        )?;
        let mut worst = [0.0f64; 3];
        for &t in &[0.0, 0.5 * cfg.numerics.t_end, 0.9 * cfg.numerics.t_end] {
            let rep = apply_ladder_check(&mode, t, &grid)?;
            worst[0] = worst[0].max(rep.lowering_ratio);
            worst[1] = worst[1].max(rep.raising_deviation);
            worst[2] = worst[2].max(rep.commutator_deviation);
        }
        check_le(&mut rows, "ladder", "lowering", worst[0], tol::LADDER_LOWER);
        check_le(&mut rows, "ladder", "raising", worst[1], tol::LADDER_RAISE);
        check_le(&mut rows, "ladder", "commutator", worst[2], tol::LADDER_COMM);
    }

    // ALE residual at the probe points
    {
        let dt_fd = cfg.numerics.dt_fd;
        let mut worst: f64 = 0.0;
        for &t in &[0.5, 1.0, 2.0] {
            if t - dt_fd < 0.0 || t + dt_fd > field.validity_end() {
                continue;
            }
            for p in RESIDUAL_POINTS {
                let r = field.ale_residual(p, t, dt_fd)?;
                let v = field.evaluate(p, t)?;
                worst = worst.max((r / v).abs());
            }
        }
        check_le(&mut rows, "ale", "rel_residual", worst, tol::ALE);
    }

    // exact linear case, engaged when kappa = 0
    if cfg.numerics.kappa == 0.0 {
        let oracle = field.ee().sigma_ode_check(cfg.numerics.t_end, cfg.numerics.dt)?;
        let mut worst: f64 = 0.0;
        for (t, s_o) in oracle.iter().step_by(10) {
            worst = worst.max((field.ee().sigma(*t)? - s_o).abs() / s_o);
        }
        check_le(&mut rows, "linear", "sigma_paths", worst, tol::LINEAR);
        let one_term = field.expansion().tail_estimate()
            <= 1e-12 * field.expansion().k(0, 0).abs();
        if one_term && cfg.initial.kind == InitialKindConfig::DoubleGaussian {
            // one-term expansion: compare the field with the spreading
            // Gaussian pointwise
            let model = field.ee().model().clone();
            let (g1, n_amp, d) = (cfg.initial.gamma1, cfg.initial.n, cfg.numerics.d);
            let mut worst: f64 = 0.0;
            for &t in &cfg.output.times {
                let j = model.int_diffusion(t)?;
                let grow = model.int_a(t)?.exp();
                let frames = field.evaluate_grid(&grid, &[t])?;
                for (i, &a) in grid.x1.points().iter().enumerate() {
                    for (jj, &b) in grid.x2.points().iter().enumerate() {
                        let r2 = a * a + b * b;
                        let exact = grow * n_amp / d * (g1 / (g1 + 2.0 * j))
                            * (-r2 / (2.0 * d * (g1 + 2.0 * j))).exp();
                        let v = frames[0].values[i * grid.x2.n + jj];
                        worst = worst.max(((v - exact) / exact).abs());
                    }
                }
            }
            check_le(&mut rows, "linear", "field_pointwise", worst, tol::LINEAR);
        }
    }

    // D-scaling of the nonlocal residual at the origin (the bound: each 4x
    // drop of D must shrink the relative residual at least 4x). Only the
    // named profile re-matches its width as D varies, and with kappa = 0 the
    // nonlocal residual is pure rounding noise, so those configs skip the
    // suite. A sub-run that fails to build (e.g. mass blow-up inside the
    // probe window) is recorded as a suite failure, not a command error.
    if cfg.initial.kind == InitialKindConfig::DoubleGaussian && cfg.numerics.kappa > 0.0 {
        let d0 = cfg.numerics.d;
        let mut residuals = Vec::new();
        let t_probe = 0.1;
        for factor in [4.0, 1.0, 0.25] {
            let d = d0 * factor;
            let mut sub = cfg.clone();
            sub.numerics.d = d;
            let one = || -> Result<f64> {
                let model = sub.coefficient_model()?;
                let ic = sub.initial_condition()?;
                let sub_field = build_solution(
                    &ic,
                    model,
                    germ_choice(&sub)?,
                    sub.numerics.n_max,
                    0.15,
                    sub.numerics.dt,
                    sub.numerics.dt_fd,
                    sub.numerics.n0,
                )?;
                let half = 1.0f64.max(8.0 * (sub.initial.gamma1 * d).sqrt());
                let n =
                    ((2.0 * half / (sub.initial.gamma2 * d).sqrt() * 4.0).ceil() as usize | 1).max(201);
                let conv = GridSpec::centered(half, n);
                let r = sub_field.nonlocal_residual([0.0, 0.0], t_probe, &conv)?;
                let v = sub_field.evaluate([0.0, 0.0], t_probe)?;
                Ok((r / v).abs())
            };
            match one() {
                Ok(r) => residuals.push(r),
                Err(e) => {
                    eprintln!("dscaling run at D = {d} failed: {e}");
                    residuals.push(f64::NAN);
                }
            }
        }
        let r1 = residuals[0] / residuals[1];
        let r2 = residuals[1] / residuals[2];
        rows.push(CheckRow {
            suite: "dscaling",
            name: format!("ratio_4d_to_d (res {:.3e} -> {:.3e})", residuals[0], residuals[1]),
            measured: r1,
            tolerance: tol::DSCALING_MIN_RATIO,
            pass: r1.is_finite() && r1 >= tol::DSCALING_MIN_RATIO,
        });
        rows.push(CheckRow {
            suite: "dscaling",
            name: format!("ratio_d_to_d4 (res {:.3e} -> {:.3e})", residuals[1], residuals[2]),
            measured: r2,
            tolerance: tol::DSCALING_MIN_RATIO,
            pass: r2.is_finite() && r2 >= tol::DSCALING_MIN_RATIO,
        });
    }

    // report
    let mut csv = String::from("suite,name,measured,tolerance,pass\n");
    let mut all_pass = true;
    for row in &rows {
        all_pass &= row.pass;
        let verdict = if row.pass { "PASS" } else { "FAIL" };
        println!(
            "check {}/{}: measured {:.3e} tol {:.3e} {}",
            row.suite, row.name, row.measured, row.tolerance, verdict
        );
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            row.suite, row.name, row.measured, row.tolerance, row.pass
        );
    }
    write_atomic(&cfg.output.dir.join("check_summary.csv"), &csv)?;
    Ok(if all_pass { 0 } else { 4 })
}
