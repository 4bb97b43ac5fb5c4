//! Assembly of the full pipeline: initial data → matched constants → EE
//! solution → germ → Hermite expansion → an evaluable evolving field
//!
//! ```text
//! v(x,t) = e^{S/D + φ} Σₙ kₙ (Z₁⁺/Z₁⁻)^{n₁/2} (Z₂⁺/Z₂⁻)^{n₂/2} Ψₙ(x,t),
//! ```
//!
//! plus residual diagnostics against the associated linear equation and the
//! full nonlocal kinetic equation, standalone single-mode solutions, and the
//! ladder-operator checks.
//!
//! The factor (Z⁺/Z⁻)^{n/2}Hₙ(ξ) with ξ = x√(β/(DZ⁻Z⁺)) is never formed as
//! printed: with y = x√(β/D) it satisfies the polynomial recurrence
//!
//! ```text
//! G₀ = 1,  G₁ = 2y/Z⁻,  G_{k+1} = (2y/Z⁻)G_k − 2k(Z⁺/Z⁻)G_{k−1},
//! ```
//!
//! which is real for any sign of Z⁺Z⁻ and regular where Z⁺ crosses zero, so
//! the removable discontinuity of the raw formulas needs no special casing.

use std::sync::Arc;

use crate::coefficients::CoefficientModel;
use crate::ee::{self, EESolution, MomentState};
use crate::error::Error;
use crate::hermite::{
    mode_constants, optimal_beta, project_ic, HermiteExpansion, ModeIndex,
};
use crate::numeric::{golden_min, Kahan};
use crate::variational::{integrate_germ, GermParams, VariationalTrajectory};
use crate::Result;

/// One axis of a uniform evaluation grid.
#[derive(Clone, Copy, Debug)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub n: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, n: usize) -> Result<Self> {
        if !(max > min) || n < 2 || !min.is_finite() || !max.is_finite() {
            return Err(Error::Domain(format!(
                "invalid axis spec: [{min}, {max}] with {n} points"
            )));
        }
        Ok(Self { min, max, n })
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.n - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.step();
        (0..self.n).map(|i| self.min + h * i as f64).collect()
    }
}

/// Uniform tensor-product grid.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub x1: AxisSpec,
    pub x2: AxisSpec,
}

impl GridSpec {
    pub fn new(x1: AxisSpec, x2: AxisSpec) -> Self {
        Self { x1, x2 }
    }

    /// Square grid [−half, half]² with n points per axis.
    pub fn centered(half: f64, n: usize) -> Self {
        let axis = AxisSpec::new(-half, half, n).expect("valid half-width");
        Self { x1: axis, x2: axis }
    }
}

/// Field values on a grid at one time, row-major over (x1, x2).
#[derive(Clone, Debug)]
pub struct GridFrame {
    pub t: f64,
    pub values: Vec<f64>,
}

/// Initial data for the pipeline.
#[derive(Clone, Debug)]
pub enum InitialCondition {
    /// φ(x) = (N/D)(e^{−x²/2γ₁D} − ε e^{−x²/2γ₂D}), the ring-shaped profile
    /// of a kinetically enhanced medium for ε > γ₂/γ₁.
    DoubleGaussian {
        n_amp: f64,
        gamma1: f64,
        gamma2: f64,
        eps: f64,
    },
    /// Arbitrary localized data sampled on a uniform grid.
    Gridded { values: Vec<f64>, grid: GridSpec },
}

/// Germ parameter selection for [`build_solution`].
#[derive(Clone, Copy, Debug)]
pub enum GermChoice {
    /// 1/√(γ₁γ₂) for double-Gaussian data, a numeric tail minimizer otherwise.
    Auto,
    Fixed(GermParams),
}

/// The reconstructed semiclassical field with everything needed to evaluate
/// it: the matched EE solution, the germ trajectory and the expansion.
/// Immutable after build; evaluation is pure.
#[derive(Clone)]
pub struct SolutionField {
    ee: Arc<EESolution>,
    traj: Arc<VariationalTrajectory>,
    expansion: Arc<HermiteExpansion>,
    dt_fd: f64,
}

/// Diagonal per-axis evaluation tables at a fixed time.
struct AxisTables {
    /// G_n(y) for n = 0..=n_max at each point, laid out n-major.
    g: Vec<f64>,
    /// exp(Q x² / 2D) at each point.
    e: Vec<f64>,
    npts: usize,
}

impl SolutionField {
    pub fn from_parts(
        ee: Arc<EESolution>,
        traj: Arc<VariationalTrajectory>,
        expansion: Arc<HermiteExpansion>,
        dt_fd: f64,
    ) -> Self {
        Self {
            ee,
            traj,
            expansion,
            dt_fd,
        }
    }

    pub fn ee(&self) -> &Arc<EESolution> {
        &self.ee
    }

    pub fn trajectory(&self) -> &Arc<VariationalTrajectory> {
        &self.traj
    }

    pub fn expansion(&self) -> &Arc<HermiteExpansion> {
        &self.expansion
    }

    pub fn dt_fd(&self) -> f64 {
        self.dt_fd
    }

    /// End of the evaluable interval: the germ horizon, shortened by an
    /// unremovable Z⁻ degeneracy or a σ blow-up when present.
    pub fn validity_end(&self) -> f64 {
        let mut end = self.traj.validity_end().min(self.traj.t_end());
        if let Some(ts) = self.ee.singular_at() {
            end = end.min(ts);
        }
        end
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        let end = self.validity_end();
        if t > end {
            if end < self.traj.t_end() {
                return Err(Error::GermDegeneracy { t: end });
            }
            return Err(Error::Domain(format!(
                "t = {t} beyond the field horizon {end}"
            )));
        }
        Ok(())
    }

    /// exp(S/D + φ) and the per-axis germ data at time t.
    fn frame(&self, t: f64) -> Result<FrameData> {
        self.check_t(t)?;
        let st = self.traj.state(t)?;
        let amp = (st.s_over_d + st.phi).exp();
        Ok(FrameData { state: st, amp })
    }

    fn axis_tables(&self, points: &[f64], axis: usize, frame: &FrameData) -> AxisTables {
        let n_max = self.expansion.n_max();
        let d = self.ee.model().d;
        let p = self.expansion.params();
        let beta = if axis == 0 { p.beta1 } else { p.beta2 };
        let a = frame.state.axis[axis];
        let (zm, zp) = (a.z_minus, a.z_plus);
        let q_over_d = a.w_minus / a.z_minus / d;
        let sb = (beta / d).sqrt();
        let npts = points.len();
        let mut g = vec![0.0; (n_max + 1) * npts];
        let mut e = vec![0.0; npts];
        for (i, &x) in points.iter().enumerate() {
            let y = x * sb;
            e[i] = (0.5 * q_over_d * x * x).exp();
            g[i] = 1.0;
            if n_max >= 1 {
                g[npts + i] = 2.0 * y / zm;
            }
            for k in 1..n_max {
                g[(k + 1) * npts + i] =
                    (2.0 * y / zm) * g[k * npts + i] - 2.0 * k as f64 * (zp / zm) * g[(k - 1) * npts + i];
            }
        }
        AxisTables { g, e, npts }
    }

    /// Series value at a single point.
    pub fn evaluate(&self, x: [f64; 2], t: f64) -> Result<f64> {
        let frame = self.frame(t)?;
        let t1 = self.axis_tables(&[x[0]], 0, &frame);
        let t2 = self.axis_tables(&[x[1]], 1, &frame);
        let n_max = self.expansion.n_max();
        let mut acc = Kahan::new();
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                let k = self.expansion.k(n1, n2);
                if k != 0.0 {
                    acc.add(k * t1.g[n1] * t2.g[n2]);
                }
            }
        }
        Ok(frame.amp / self.ee.model().d * acc.value() * t1.e[0] * t2.e[0])
    }

    /// Tensor evaluation over a grid for each requested time; the Hermite
    /// recurrences are shared per axis.
    pub fn evaluate_grid(&self, grid: &GridSpec, times: &[f64]) -> Result<Vec<GridFrame>> {
        let x1 = grid.x1.points();
        let x2 = grid.x2.points();
        let n_max = self.expansion.n_max();
        let mut frames = Vec::with_capacity(times.len());
        for &t in times {
            let frame = self.frame(t)?;
            let t1 = self.axis_tables(&x1, 0, &frame);
            let t2 = self.axis_tables(&x2, 1, &frame);
            let scale = frame.amp / self.ee.model().d;
            // inner[n1][j] = Σ_{n2} k(n1,n2) G2[n2][j]
            let mut inner = vec![0.0; (n_max + 1) * t2.npts];
            for n1 in 0..=n_max {
                for n2 in 0..=n_max {
                    let k = self.expansion.k(n1, n2);
                    if k == 0.0 {
                        continue;
                    }
                    let src = &t2.g[n2 * t2.npts..(n2 + 1) * t2.npts];
                    let dst = &mut inner[n1 * t2.npts..(n1 + 1) * t2.npts];
                    for j in 0..t2.npts {
                        dst[j] += k * src[j];
                    }
                }
            }
            let mut values = vec![0.0; t1.npts * t2.npts];
            for i in 0..t1.npts {
                for j in 0..t2.npts {
                    let mut s = 0.0;
                    for n1 in 0..=n_max {
                        s += t1.g[n1 * t1.npts + i] * inner[n1 * t2.npts + j];
                    }
                    values[i * t2.npts + j] = scale * s * t1.e[i] * t2.e[j];
                }
            }
            frames.push(GridFrame { t, values });
        }
        Ok(frames)
    }

    /// Value, gradient and Laplacian at one point (spatial derivatives are
    /// analytic through the Hermite ladder identities).
    pub fn evaluate_with_derivatives(&self, x: [f64; 2], t: f64) -> Result<PointEval> {
        let frame = self.frame(t)?;
        let n_max = self.expansion.n_max();
        let d = self.ee.model().d;
        let p = self.expansion.params();

        // per-axis value/first/second factors for each order n
        let mut fac = Vec::with_capacity(2);
        for axis in 0..2 {
            let beta = if axis == 0 { p.beta1 } else { p.beta2 };
            let a = frame.state.axis[axis];
            let (zm, zp) = (a.z_minus, a.z_plus);
            let q = a.w_minus / a.z_minus;
            let sb = (beta / d).sqrt();
            let y = x[axis] * sb;
            let e = (0.5 * q / d * x[axis] * x[axis]).exp();
            let mut g = vec![0.0; n_max + 1];
            g[0] = 1.0;
            if n_max >= 1 {
                g[1] = 2.0 * y / zm;
            }
            for k in 1..n_max {
                g[k + 1] = (2.0 * y / zm) * g[k] - 2.0 * k as f64 * (zp / zm) * g[k - 1];
            }
            // value, d/dx, d²/dx² of G_n(y(x)) e^{qx²/2D}
            let qx = q * x[axis] / d;
            let mut v = vec![0.0; n_max + 1];
            let mut dv = vec![0.0; n_max + 1];
            let mut ddv = vec![0.0; n_max + 1];
            for n in 0..=n_max {
                let gp = if n >= 1 {
                    sb * 2.0 * n as f64 / zm * g[n - 1]
                } else {
                    0.0
                };
                let gpp = if n >= 2 {
                    sb * sb * 4.0 * (n * (n - 1)) as f64 / (zm * zm) * g[n - 2]
                } else {
                    0.0
                };
                v[n] = g[n] * e;
                dv[n] = (gp + g[n] * qx) * e;
                ddv[n] = (gpp + 2.0 * gp * qx + g[n] * (qx * qx + q / d)) * e;
            }
            fac.push((v, dv, ddv));
        }

        let scale = frame.amp / d;
        let (v1, d1, dd1) = &fac[0];
        let (v2, d2, dd2) = &fac[1];
        let mut value = Kahan::new();
        let mut g1 = Kahan::new();
        let mut g2 = Kahan::new();
        let mut lap = Kahan::new();
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                let k = self.expansion.k(n1, n2);
                if k == 0.0 {
                    continue;
                }
                value.add(k * v1[n1] * v2[n2]);
                g1.add(k * d1[n1] * v2[n2]);
                g2.add(k * v1[n1] * d2[n2]);
                lap.add(k * (dd1[n1] * v2[n2] + v1[n1] * dd2[n2]));
            }
        }
        Ok(PointEval {
            v: scale * value.value(),
            grad: [scale * g1.value(), scale * g2.value()],
            lap: scale * lap.value(),
        })
    }

    /// Analytic mass of the truncated series at time t (the per-mode Gauss–
    /// Hermite integrals in their Z⁺-regular form). Serves as the dual route
    /// against grid quadrature of [`SolutionField::evaluate_grid`] output.
    pub fn series_mass(&self, t: f64) -> Result<f64> {
        let frame = self.frame(t)?;
        let d = self.ee.model().d;
        let n_max = self.expansion.n_max();
        let mut axis_int = Vec::with_capacity(2);
        for axis in 0..2 {
            let a = frame.state.axis[axis];
            if !(a.z_minus > 0.0) || !(a.w_minus < 0.0) {
                return Err(Error::GermDegeneracy { t });
            }
            let base = (2.0 * std::f64::consts::PI * d * a.z_minus / (-a.w_minus)).sqrt();
            let ratio = -a.w_plus / a.w_minus;
            let mut ints = vec![0.0; n_max + 1];
            for m in 0..=(n_max / 2) {
                let n = 2 * m;
                if n <= n_max {
                    ints[n] = base * fact(2 * m) / fact(m) * ratio.powi(m as i32);
                }
            }
            axis_int.push(ints);
        }
        let mut acc = Kahan::new();
        for n1 in (0..=n_max).step_by(2) {
            for n2 in (0..=n_max).step_by(2) {
                let k = self.expansion.k(n1, n2);
                if k != 0.0 {
                    acc.add(k * axis_int[0][n1] * axis_int[1][n2]);
                }
            }
        }
        Ok(frame.amp / d * acc.value())
    }

    /// Associated-linear-equation residual at one point:
    /// (−∂ₜ + DD̃ₐΔ + a − (κ/μ²)bσ²(μ² − 2D Sp d − x²)) v, with the time
    /// derivative by central finite difference and analytic space derivatives.
    pub fn ale_residual(&self, x: [f64; 2], t: f64, dt_fd: f64) -> Result<f64> {
        if !(dt_fd > 0.0) {
            return Err(Error::Domain(format!("dt_fd must be > 0, got {dt_fd}")));
        }
        if t - dt_fd < 0.0 || t + dt_fd > self.validity_end() {
            return Err(Error::Domain(format!(
                "t ± dt_fd must stay inside [0, {}], got t = {t}",
                self.validity_end()
            )));
        }
        let vp = self.evaluate(x, t + dt_fd)?;
        let vm = self.evaluate(x, t - dt_fd)?;
        let dv_dt = (vp - vm) / (2.0 * dt_fd);
        let pe = self.evaluate_with_derivatives(x, t)?;
        let m = self.ee.model();
        let sigma = self.ee.sigma(t)?;
        let dmat = self.ee.d_matrix(t)?;
        let spd = dmat[0] + dmat[1];
        let x2 = x[0] * x[0] + x[1] * x[1];
        let potential = m.kappa / (m.mu * m.mu)
            * m.eval_b(t)?
            * sigma
            * sigma
            * (m.mu * m.mu - 2.0 * m.d * spd - x2);
        Ok(-dv_dt + m.d * m.eval_diffusion(t)? * pe.lap + m.eval_a(t)? * pe.v - potential * pe.v)
    }

    /// Residual of the full nonlocal equation at one point:
    /// ∂ₜv − DD̃ₐΔv − av + κb v [G_μ * v]², with the Gaussian convolution by
    /// tensor quadrature on `conv_grid`.
    pub fn nonlocal_residual(&self, x: [f64; 2], t: f64, conv_grid: &GridSpec) -> Result<f64> {
        let dt_fd = self.dt_fd;
        if t - dt_fd < 0.0 || t + dt_fd > self.validity_end() {
            return Err(Error::Domain(format!(
                "t ± dt_fd must stay inside [0, {}], got t = {t}",
                self.validity_end()
            )));
        }
        let m = self.ee.model();
        // the grid must resolve the kernel and the field, and it must
        // contain the field's effective support
        let st = self.traj.state(t)?;
        let mut width: f64 = f64::INFINITY;
        for a in st.axis {
            if a.w_minus < 0.0 && a.z_minus > 0.0 {
                width = width.min((m.d * a.z_minus / (-a.w_minus)).sqrt());
            }
        }
        let need_step = (m.mu.min(width)) / 4.0;
        for (name, axis) in [("x1", conv_grid.x1), ("x2", conv_grid.x2)] {
            if axis.step() > need_step {
                return Err(Error::Resolution(format!(
                    "convolution grid {name} step {:.3e} too coarse (need <= {:.3e})",
                    axis.step(),
                    need_step
                )));
            }
            if (axis.max - axis.min) * 0.5 < 4.0 * width {
                return Err(Error::Resolution(format!(
                    "convolution grid {name} half-extent {:.3} below 4 field widths {:.3}",
                    (axis.max - axis.min) * 0.5,
                    4.0 * width
                )));
            }
        }

        let frames = self.evaluate_grid(conv_grid, &[t])?;
        let values = &frames[0].values;
        let x1 = conv_grid.x1.points();
        let x2 = conv_grid.x2.points();
        let cell = conv_grid.x1.step() * conv_grid.x2.step();
        let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
        let two_mu2 = 2.0 * m.mu * m.mu;
        // separable kernel: conv = Σ_i K1(i) Σ_j K2(j) v(i, j)
        let k2: Vec<f64> = x2
            .iter()
            .enumerate()
            .map(|(j, &y)| (-(x[1] - y) * (x[1] - y) / two_mu2).exp() * weight(j, x2.len()))
            .collect();
        let mut conv = Kahan::new();
        for (i, &y) in x1.iter().enumerate() {
            let k1 = (-(x[0] - y) * (x[0] - y) / two_mu2).exp() * weight(i, x1.len());
            let mut row = Kahan::new();
            for j in 0..x2.len() {
                row.add(k2[j] * values[i * x2.len() + j]);
            }
            conv.add(k1 * row.value());
        }
        let conv = conv.value() * cell;

        let vp = self.evaluate(x, t + dt_fd)?;
        let vm = self.evaluate(x, t - dt_fd)?;
        let dv_dt = (vp - vm) / (2.0 * dt_fd);
        let pe = self.evaluate_with_derivatives(x, t)?;
        Ok(dv_dt - m.d * m.eval_diffusion(t)? * pe.lap - m.eval_a(t)? * pe.v
            + m.kappa * m.eval_b(t)? * pe.v * conv * conv)
    }
}

/// Value, gradient and Laplacian of the field at one point.
#[derive(Clone, Copy, Debug)]
pub struct PointEval {
    pub v: f64,
    pub grad: [f64; 2],
    pub lap: f64,
}

struct FrameData {
    state: crate::variational::GermState,
    amp: f64,
}

fn fact(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Trapezoid mass of gridded values.
pub fn grid_mass(values: &[f64], grid: &GridSpec) -> f64 {
    let (n1, n2) = (grid.x1.n, grid.x2.n);
    let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut acc = Kahan::new();
    for i in 0..n1 {
        let wi = weight(i, n1);
        for j in 0..n2 {
            acc.add(wi * weight(j, n2) * values[i * n2 + j]);
        }
    }
    acc.value() * grid.x1.step() * grid.x2.step()
}

/// Build the full pipeline for the given initial data. The EE solution and
/// the germ are integrated slightly past t_end so that centered time
/// differences at t_end remain inside the horizon.
pub fn build_solution(
    ic: &InitialCondition,
    model: Arc<CoefficientModel>,
    germ: GermChoice,
    n_max: usize,
    t_end: f64,
    dt: f64,
    dt_fd: f64,
    n0: f64,
) -> Result<SolutionField> {
    let horizon = t_end + (10.0 * dt_fd).max(1e-6);
    let (moments, params, expansion) = match ic {
        InitialCondition::DoubleGaussian {
            n_amp,
            gamma1,
            gamma2,
            eps,
        } => {
            let sigma = 2.0 * std::f64::consts::PI * n_amp * (gamma1 - eps * gamma2);
            if !(sigma > 0.0) {
                return Err(Error::DegenerateMass);
            }
            let alpha = model.d * (gamma1 * gamma1 - eps * gamma2 * gamma2) / (gamma1 - eps * gamma2);
            let moments = MomentState {
                sigma,
                center: [0.0, 0.0],
                alpha: ee::Sym2::diag(alpha, alpha),
            };
            let params = match germ {
                GermChoice::Auto => GermParams::isotropic(optimal_beta(*gamma1, *gamma2)?)?,
                GermChoice::Fixed(p) => p,
            };
            if (params.beta1 - params.beta2).abs() > 1e-12 {
                return Err(Error::Domain(
                    "double-Gaussian data uses an isotropic germ (beta1 = beta2)".into(),
                ));
            }
            let expansion = HermiteExpansion::double_gaussian(
                *n_amp,
                *gamma1,
                *gamma2,
                *eps,
                params.beta1,
                n_max,
                model.d,
                n0,
            )?;
            (moments, params, expansion)
        }
        InitialCondition::Gridded { values, grid } => {
            let fm = ee::moments_from_field(values, grid)?;
            let params = match germ {
                GermChoice::Auto => {
                    // tail-minimizing isotropic β around the width-matched guess
                    let alpha = fm.moments.alpha;
                    let guess = model.d / (alpha.a11 * alpha.a22).sqrt().max(f64::MIN_POSITIVE);
                    let obj = |u: f64| {
                        let beta = u.exp();
                        match GermParams::isotropic(beta)
                            .and_then(|p| project_ic(values, grid, p, model.d, n_max, n0))
                        {
                            Ok(exp) => exp.tail_estimate(),
                            Err(_) => f64::INFINITY,
                        }
                    };
                    let u = golden_min(&obj, guess.ln() - 2.0, guess.ln() + 2.0, 1e-6);
                    GermParams::isotropic(u.exp())?
                }
                GermChoice::Fixed(p) => p,
            };
            let expansion = project_ic(values, grid, params, model.d, n_max, n0)?;
            (fm.moments, params, expansion)
        }
    };
    let ee_sol = Arc::new(EESolution::match_constants(&moments, model, horizon)?);
    let traj = Arc::new(integrate_germ(&ee_sol, params, horizon, dt)?);
    Ok(SolutionField::from_parts(
        ee_sol,
        traj,
        Arc::new(expansion),
        dt_fd,
    ))
}

/// Standalone asymptotic solution u₂ₘ: the EE system is re-solved with the
/// mode constants C₂ₘ and the expansion carries the single coefficient
/// k₂ₘ = N₀/√(2^{|2m|}(2m)!).
pub fn single_mode_solution(
    n: ModeIndex,
    model: Arc<CoefficientModel>,
    params: GermParams,
    n0: f64,
    t_end: f64,
    dt: f64,
    dt_fd: f64,
) -> Result<SolutionField> {
    if !n.is_even() {
        return Err(Error::Domain(format!(
            "standalone solutions exist for even modes only, got ({}, {})",
            n.n1, n.n2
        )));
    }
    let horizon = t_end + (10.0 * dt_fd).max(1e-6);
    let constants = mode_constants(n, params, n0)?;
    let ee_sol = Arc::new(EESolution::from_constants(
        model,
        constants.c2,
        constants.dbar,
        horizon,
    )?);
    let traj = Arc::new(integrate_germ(&ee_sol, params, horizon, dt)?);
    let n_max = n.n1.max(n.n2);
    let mut k = vec![0.0; (n_max + 1) * (n_max + 1)];
    k[n.n1 * (n_max + 1) + n.n2] =
        n0 / (2f64.powi(n.order() as i32) * fact(n.n1) * fact(n.n2)).sqrt();
    let expansion = HermiteExpansion::from_coefficients(k, n_max, params, ee_sol.model().d, n0);
    Ok(SolutionField::from_parts(
        ee_sol,
        traj,
        Arc::new(expansion),
        dt_fd,
    ))
}

/// Report of the ladder-operator checks on the Gaussian mode v₀.
#[derive(Clone, Copy, Debug)]
pub struct LadderReport {
    /// ‖â₁⁻ v₀‖ / ‖v₀‖ — zero for the exact germ.
    pub lowering_ratio: f64,
    /// Relative L² deviation of â₁⁺ v₀ from the closed-form first mode.
    pub raising_deviation: f64,
    /// Relative L² deviation of [â₁⁻, â₁⁺] v₀ from v₀.
    pub commutator_deviation: f64,
}

/// Apply the axis-1 ladder operators to a pure (0,0)-mode field and measure
/// the defining identities. The operators are first-order in ∂₁ and act
/// within the family (polynomial in x₁) × v₀, so the application is carried
/// on polynomial coefficients with the analytic ∂₁ of v₀; norms are grid L².
pub fn apply_ladder_check(field: &SolutionField, t: f64, grid: &GridSpec) -> Result<LadderReport> {
    let exp = field.expansion();
    let n_max = exp.n_max();
    for n1 in 0..=n_max {
        for n2 in 0..=n_max {
            if (n1, n2) != (0, 0) && exp.k(n1, n2) != 0.0 {
                return Err(Error::Domain(
                    "ladder check requires a pure (0,0)-mode field".into(),
                ));
            }
        }
    }
    let st = field.trajectory().state(t)?;
    let a1 = st.axis[0];
    let m = field.ee().model();
    let d = m.d;
    let beta1 = exp.params().beta1;
    let q1 = a1.w_minus / a1.z_minus;
    let norm_a = 1.0 / (2.0 * beta1 * d).sqrt();

    // â±, acting on coefficient vectors of polynomials in x₁ against v₀:
    //   âf = s·N_a (Z D ∂₁ − W x₁) (P v₀) = s·N_a (Z D P' + (Z Q₁ − W) x₁ P) v₀
    let apply = |p: &[f64], z: f64, w: f64, sign: f64| -> Vec<f64> {
        let mut out = vec![0.0; p.len() + 1];
        for (k, &c) in p.iter().enumerate() {
            if k >= 1 {
                out[k - 1] += sign * norm_a * z * d * k as f64 * c;
            }
            out[k + 1] += sign * norm_a * (z * q1 - w) * c;
        }
        out
    };
    let lower = |p: &[f64]| apply(p, a1.z_minus, a1.w_minus, -1.0);
    let raise = |p: &[f64]| apply(p, a1.z_plus, a1.w_plus, 1.0);

    // grid L² norm of P(x₁)·v₀
    let x1 = grid.x1.points();
    let x2 = grid.x2.points();
    let cell = grid.x1.step() * grid.x2.step();
    let frames = field.evaluate_grid(grid, &[t])?;
    let v0 = &frames[0].values;
    let norm = |p: &[f64]| -> f64 {
        let mut acc = Kahan::new();
        for (i, &xv) in x1.iter().enumerate() {
            let poly: f64 = p
                .iter()
                .enumerate()
                .map(|(k, &c)| c * xv.powi(k as i32))
                .sum();
            for j in 0..x2.len() {
                let w = poly * v0[i * x2.len() + j];
                acc.add(w * w);
            }
        }
        (acc.value() * cell).sqrt()
    };
    let diff_norm = |p: &[f64], q: &[f64]| -> f64 {
        let len = p.len().max(q.len());
        let r: Vec<f64> = (0..len)
            .map(|k| p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0))
            .collect();
        norm(&r)
    };

    let one = vec![1.0];
    let v0_norm = norm(&one);

    let lowered = lower(&one);
    let lowering_ratio = norm(&lowered) / v0_norm;

    // closed-form first mode: v₁₀ = −√2 (x₁ √(β₁/D)) / Z₁⁻ · v₀
    let raised = raise(&one);
    let closed = vec![0.0, -(2.0f64).sqrt() * (beta1 / d).sqrt() / a1.z_minus];
    let raising_deviation = diff_norm(&raised, &closed) / norm(&closed);

    let commutator = {
        let pm = lower(&raise(&one));
        let mp = raise(&lower(&one));
        let len = pm.len().max(mp.len());
        let r: Vec<f64> = (0..len)
            .map(|k| pm.get(k).copied().unwrap_or(0.0) - mp.get(k).copied().unwrap_or(0.0))
            .collect();
        diff_norm(&r, &one) / v0_norm
    };

    Ok(LadderReport {
        lowering_ratio,
        raising_deviation,
        commutator_deviation: commutator,
    })
}
