//! The Einstein–Ehrenfest moment system for the specialized two-dimensional
//! case: total mass σ(t), center x(t) ≡ 0, second moments α⁽²⁾(t) = 2D d(t)
//! with d(t) = d̄ + I₂∫₀ᵗD̃ₐ.
//!
//! The mass equation σ̇ = a(t)σ − κβ(t)σ³ with β(t) = b(t)(1 − (4D/μ²)Sp d(t))
//! is a Bernoulli equation: w = σ⁻² obeys the linear equation
//! ẇ = −2a(t)w + 2κβ(t), so
//!
//! ```text
//! σ(t) = [σ(0)⁻² ϖ(t,0) + 2κ ∫₀ᵗ β(τ) ϖ(t,τ) dτ]^{−1/2},
//! ϖ(t,τ) = exp(−2∫_τ^t a).
//! ```
//!
//! [`EESolution::sigma`] evaluates this quadrature form from a cached mesh;
//! [`EESolution::sigma_ode_check`] integrates the nonlinear ODE directly and
//! serves exclusively as an independent oracle (the two routes share no code
//! beyond the coefficients).

use std::sync::Arc;

use crate::coefficients::CoefficientModel;
use crate::error::Error;
use crate::numeric::{cumulative_integral, CubicMesh, Kahan, Rk4Dense};
use crate::solver::GridSpec;
use crate::Result;

/// Diagonal-dominant symmetric 2×2 matrix of central second moments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub fn diag(a11: f64, a22: f64) -> Self {
        Self { a11, a12: 0.0, a22 }
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }
}

/// Moments of a concentrated field: mass, center and central second moments.
#[derive(Clone, Copy, Debug)]
pub struct MomentState {
    pub sigma: f64,
    pub center: [f64; 2],
    pub alpha: Sym2,
}

/// Result of [`moments_from_field`]: the moments plus a Richardson error
/// estimate for the mass quadrature (|I_h − I_{2h}|/3), when the grid allows
/// 2× coarsening.
#[derive(Clone, Copy, Debug)]
pub struct FieldMoments {
    pub moments: MomentState,
    pub sigma_error_estimate: Option<f64>,
}

/// Off-diagonal tolerance for the axis-aligned germ: |α₁₂|/Sp α.
const DIAGONALITY_TOL: f64 = 1e-8;

/// The matched general solution of the EE system: σ(0) = c², d̄, and the
/// cached w(t) = σ(t)⁻² mesh plus the action S(t, D).
#[derive(Clone, Debug)]
pub struct EESolution {
    model: Arc<CoefficientModel>,
    c2: f64,
    dbar: [f64; 2],
    horizon: f64,
    w: CubicMesh,
    action: CubicMesh,
    /// First time at which w(t) ≤ 0 (mass blow-up), if any.
    singular_at: Option<f64>,
    /// First time at which β(t) ≤ 0 (outside the semiclassical regime), if any.
    beta_nonpositive_at: Option<f64>,
}

impl EESolution {
    /// Build the solution for given integration constants C = (c², 0, 2Dd̄)
    /// on [0, horizon].
    pub fn from_constants(
        model: Arc<CoefficientModel>,
        c2: f64,
        dbar: [f64; 2],
        horizon: f64,
    ) -> Result<Self> {
        if !(c2 > 0.0) {
            return Err(Error::Domain(format!("sigma(0) = c^2 must be > 0, got {c2}")));
        }
        if !(dbar[0] > 0.0 && dbar[1] > 0.0) {
            return Err(Error::Domain(format!(
                "dbar must have positive diagonal, got ({}, {})",
                dbar[0], dbar[1]
            )));
        }
        if !(horizon > 0.0) {
            return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
        }
        // fail here (not deep inside a quadrature closure) when the model
        // cannot cover the horizon, e.g. a coefficient table that is too short
        model.eval_a(horizon)?;
        model.eval_b(horizon)?;
        model.eval_diffusion(horizon)?;
        model.int_a(horizon)?;
        model.int_diffusion(horizon)?;

        let beta = {
            let model = model.clone();
            let dsum = dbar[0] + dbar[1];
            move |t: f64| -> f64 {
                let spd = dsum + 2.0 * model.int_diffusion(t).expect("t >= 0");
                model.eval_b(t).expect("t >= 0") * (1.0 - 4.0 * model.d / (model.mu * model.mu) * spd)
            }
        };

        // w(t) = e^{-2A(t)} (w0 + 2κ J(t)),  J(t) = ∫₀ᵗ β e^{2A}
        let w0 = c2.powi(-2);
        let kappa = model.kappa;
        let big_a = |t: f64| model.int_a(t).expect("t >= 0");
        let j_mesh = {
            let beta = beta.clone();
            let g = move |t: f64| beta(t) * (2.0 * big_a(t)).exp();
            cumulative_integral(&g, horizon, 1e-12)
        };
        let n = (j_mesh.len() - 1).max(256);
        let dt = horizon / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        let mut derivs = Vec::with_capacity(n + 1);
        let mut beta_nonpositive_at = None;
        for i in 0..=n {
            let t = i as f64 * dt;
            let bt = beta(t);
            if bt <= 0.0 && beta_nonpositive_at.is_none() {
                beta_nonpositive_at = Some(t);
            }
            let w = (-2.0 * big_a(t)).exp() * (w0 + 2.0 * kappa * j_mesh.eval(t));
            values.push(w);
            derivs.push(-2.0 * model.eval_a(t).expect("t >= 0") * w + 2.0 * kappa * bt);
        }
        let w = CubicMesh::new(0.0, dt, values.clone(), derivs);

        // locate a mass blow-up (w crossing zero), if any
        let mut singular_at = None;
        for i in 0..n {
            if values[i] > 0.0 && values[i + 1] <= 0.0 {
                let (mut lo, mut hi) = (i as f64 * dt, (i + 1) as f64 * dt);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if w.eval(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                singular_at = Some(0.5 * (lo + hi));
                break;
            }
        }

        // S(t) = D ∫₀ᵗ [a − κ b σ² (1 − (2D/μ²) Sp d)] dτ, integrable only
        // up to the blow-up when there is one
        let s_horizon = match singular_at {
            Some(ts) => ts * (1.0 - 1e-6),
            None => horizon,
        };
        let action = {
            let model = model.clone();
            let w = w.clone();
            let dsum = dbar[0] + dbar[1];
            let integrand = move |t: f64| {
                let sig2 = 1.0 / w.eval(t);
                let spd = dsum + 2.0 * model.int_diffusion(t).expect("t >= 0");
                model.d
                    * (model.eval_a(t).expect("t >= 0")
                        - model.kappa
                            * model.eval_b(t).expect("t >= 0")
                            * sig2
                            * (1.0 - 2.0 * model.d / (model.mu * model.mu) * spd))
            };
            cumulative_integral(&integrand, s_horizon, 1e-13)
        };

        Ok(Self {
            model,
            c2,
            dbar,
            horizon,
            w,
            action,
            singular_at,
            beta_nonpositive_at,
        })
    }

    /// Match the integration constants to initial-data moments:
    /// c² = σ_φ and d̄ = α_φ⁽²⁾/(2D). The germ is axis-aligned, so
    /// off-diagonal second moments beyond tolerance are rejected.
    pub fn match_constants(
        ic_moments: &MomentState,
        model: Arc<CoefficientModel>,
        horizon: f64,
    ) -> Result<Self> {
        let alpha = ic_moments.alpha;
        let ratio = alpha.a12.abs() / alpha.trace().abs().max(f64::MIN_POSITIVE);
        if ratio >= DIAGONALITY_TOL {
            return Err(Error::Anisotropy { ratio });
        }
        if !(ic_moments.sigma > 0.0) {
            return Err(Error::Domain(format!(
                "initial mass must be positive to match constants, got {}",
                ic_moments.sigma
            )));
        }
        let dbar = [alpha.a11 / (2.0 * model.d), alpha.a22 / (2.0 * model.d)];
        Self::from_constants(model, ic_moments.sigma, dbar, horizon)
    }

    pub fn model(&self) -> &Arc<CoefficientModel> {
        &self.model
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn dbar(&self) -> [f64; 2] {
        self.dbar
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// First time β(t) ≤ 0 on the solution interval, if any. Formulas stay
    /// evaluable; callers should surface this as a modeling warning.
    pub fn beta_warning(&self) -> Option<f64> {
        self.beta_nonpositive_at
    }

    /// Blow-up time of σ, if the mass solution has one on the horizon.
    pub fn singular_at(&self) -> Option<f64> {
        self.singular_at
    }

    fn check_t(&self, t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "t = {t} beyond the solution horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// d(t) = d̄ + I₂ ∫₀ᵗ D̃ₐ (diagonal, returned as the two diagonal entries).
    pub fn d_matrix(&self, t: f64) -> Result<[f64; 2]> {
        self.check_t(t)?;
        let j = self.model.int_diffusion(t)?;
        Ok([self.dbar[0] + j, self.dbar[1] + j])
    }

    /// β(t) = b(t)(1 − (4D/μ²) Sp d(t)).
    pub fn beta_eff(&self, t: f64) -> Result<f64> {
        let d = self.d_matrix(t)?;
        let m = &self.model;
        Ok(self.model.eval_b(t)? * (1.0 - 4.0 * m.d / (m.mu * m.mu) * (d[0] + d[1])))
    }

    /// σ(t) from the quadrature form of the general solution.
    pub fn sigma(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        if let Some(ts) = self.singular_at {
            if t >= ts {
                return Err(Error::SingularSigma { t: ts });
            }
        }
        let w = self.w.eval(t);
        if !(w > 0.0) {
            return Err(Error::SingularSigma { t });
        }
        Ok(w.powf(-0.5))
    }

    /// Independent oracle: RK4 on σ̇ = a(t)σ − κβ(t)σ³ from σ(0) = c².
    /// Returns the (t, σ) trajectory at the integration nodes.
    pub fn sigma_ode_check(&self, t_end: f64, dt: f64) -> Result<Vec<(f64, f64)>> {
        if !(dt > 0.0 && t_end > 0.0) {
            return Err(Error::Domain("need dt > 0 and t_end > 0".into()));
        }
        let model = self.model.clone();
        let dsum = self.dbar[0] + self.dbar[1];
        let rhs = move |t: f64, y: &[f64; 1]| {
            let spd = dsum + 2.0 * model.int_diffusion(t).expect("t >= 0");
            let beta =
                model.eval_b(t).expect("t >= 0") * (1.0 - 4.0 * model.d / (model.mu * model.mu) * spd);
            [model.eval_a(t).expect("t >= 0") * y[0] - model.kappa * beta * y[0].powi(3)]
        };
        let steps = (t_end / dt).round().max(1.0) as usize;
        let sol = Rk4Dense::integrate(&rhs, [self.c2], t_end, steps)
            .map_err(|t| Error::SingularSigma { t })?;
        let mut out = Vec::with_capacity(steps + 1);
        for (i, y) in sol.values.iter().enumerate() {
            if !(y[0] > 0.0) {
                return Err(Error::SingularSigma {
                    t: i as f64 * sol.dt,
                });
            }
            out.push((i as f64 * sol.dt, y[0]));
        }
        Ok(out)
    }

    /// α⁽²⁾(t) = 2D d(t) (diagonal entries).
    pub fn alpha2(&self, t: f64) -> Result<[f64; 2]> {
        let d = self.d_matrix(t)?;
        Ok([2.0 * self.model.d * d[0], 2.0 * self.model.d * d[1]])
    }

    /// Action S(t, D) = D∫₀ᵗ[a − κbσ²(1 − (2D/μ²)Sp d)] dτ; S(0) = 0.
    pub fn action_s(&self, t: f64) -> Result<f64> {
        self.check_t(t)?;
        if let Some(ts) = self.singular_at {
            // the action integrand ~ σ² is only integrable up to the blow-up
            if t > self.action.t_end() {
                return Err(Error::SingularSigma { t: ts });
            }
        }
        Ok(self.action.eval(t))
    }

    /// The action integrand divided by D: Ṡ/D = a − κbσ²(1 − (2D/μ²)Sp d).
    /// Used by the germ integrator to carry S/D as a dense state component.
    pub fn action_rate(&self, t: f64) -> Result<f64> {
        let sigma = self.sigma(t)?;
        let m = &self.model;
        let d = self.d_matrix(t)?;
        Ok(m.eval_a(t)?
            - m.kappa
                * m.eval_b(t)?
                * sigma
                * sigma
                * (1.0 - 2.0 * m.d / (m.mu * m.mu) * (d[0] + d[1])))
    }
}

/// Moments (σ_φ, x_φ, α_φ⁽²⁾) of a gridded field by tensor-product trapezoid
/// quadrature, with a Richardson error estimate for σ when the grid coarsens
/// cleanly.
pub fn moments_from_field(values: &[f64], grid: &GridSpec) -> Result<FieldMoments> {
    let (n1, n2) = (grid.x1.n, grid.x2.n);
    if values.len() != n1 * n2 {
        return Err(Error::Domain(format!(
            "field has {} values but the grid is {}x{}",
            values.len(),
            n1,
            n2
        )));
    }
    let x1 = grid.x1.points();
    let x2 = grid.x2.points();
    let (h1, h2) = (grid.x1.step(), grid.x2.step());

    let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let cell = h1 * h2;

    let mut s = Kahan::new();
    let mut m1 = Kahan::new();
    let mut m2 = Kahan::new();
    for i in 0..n1 {
        let wi = weight(i, n1);
        for j in 0..n2 {
            let w = wi * weight(j, n2) * values[i * n2 + j];
            s.add(w);
            m1.add(w * x1[i]);
            m2.add(w * x2[j]);
        }
    }
    let sigma = s.value() * cell;
    if sigma.abs() < 1e-12 * (n1 * n2) as f64 {
        return Err(Error::DegenerateMass);
    }
    let center = [m1.value() * cell / sigma, m2.value() * cell / sigma];

    let mut a11 = Kahan::new();
    let mut a12 = Kahan::new();
    let mut a22 = Kahan::new();
    for i in 0..n1 {
        let wi = weight(i, n1);
        let dx1 = x1[i] - center[0];
        for j in 0..n2 {
            let w = wi * weight(j, n2) * values[i * n2 + j];
            let dx2 = x2[j] - center[1];
            a11.add(w * dx1 * dx1);
            a12.add(w * dx1 * dx2);
            a22.add(w * dx2 * dx2);
        }
    }
    let alpha = Sym2 {
        a11: a11.value() * cell / sigma,
        a12: a12.value() * cell / sigma,
        a22: a22.value() * cell / sigma,
    };

    // Richardson: redo the mass on the 2x-coarsened grid when both axes allow it
    let sigma_error_estimate = if (n1 - 1) % 2 == 0 && (n2 - 1) % 2 == 0 && n1 >= 5 && n2 >= 5 {
        let mut sc = Kahan::new();
        let (c1, c2) = ((n1 - 1) / 2 + 1, (n2 - 1) / 2 + 1);
        for i in 0..c1 {
            let wi = weight(i, c1);
            for j in 0..c2 {
                sc.add(wi * weight(j, c2) * values[(2 * i) * n2 + 2 * j]);
            }
        }
        let sigma_coarse = sc.value() * 4.0 * cell;
        Some((sigma - sigma_coarse).abs() / 3.0)
    } else {
        None
    };

    Ok(FieldMoments {
        moments: MomentState {
            sigma,
            center,
            alpha,
        },
        sigma_error_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientKind, CoefficientModel};
    use crate::solver::GridSpec;
    use approx::assert_relative_eq;

    fn model(kappa: f64, d: f64) -> Arc<CoefficientModel> {
        Arc::new(
            CoefficientModel::new(
                CoefficientKind::ExponentialRelaxation {
                    a1: 1.0,
                    tau_a: 1.0,
                    d1: 0.5,
                    tau_d: 1.0,
                    b1: 0.2,
                    b2: 0.4,
                    tau_b: 1.0,
                },
                0.5,
                kappa,
                d,
            )
            .unwrap(),
        )
    }

    /// §6 double-Gaussian moments via the closed form.
    fn ic_moments(eps: f64, d: f64) -> MomentState {
        let (g1, g2) = (1.5, 1.0);
        let sigma = 2.0 * std::f64::consts::PI * (g1 - eps * g2);
        let a = d * (g1 * g1 - eps * g2 * g2) / (g1 - eps * g2);
        MomentState {
            sigma,
            center: [0.0, 0.0],
            alpha: Sym2::diag(a, a),
        }
    }

    #[test]
    fn match_constants_section6() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(1.0, 0.01), 5.0).unwrap();
        assert_relative_eq!(ee.c2(), 4.08407045, epsilon = 1e-7);
        assert_relative_eq!(ee.dbar()[0], 1.07692308, epsilon = 1e-7);
        assert_relative_eq!(ee.dbar()[1], 1.07692308, epsilon = 1e-7);

        let ee1 = EESolution::match_constants(&ic_moments(1.0, 0.01), model(1.0, 0.01), 5.0).unwrap();
        assert_relative_eq!(ee1.c2(), std::f64::consts::PI, epsilon = 1e-9);
        assert_relative_eq!(ee1.dbar()[0], 1.25, epsilon = 1e-9);
    }

    #[test]
    fn rejects_rotated_moments() {
        let mut m = ic_moments(0.85, 0.01);
        m.alpha.a12 = 1e-3 * m.alpha.trace();
        match EESolution::match_constants(&m, model(1.0, 0.01), 5.0) {
            Err(Error::Anisotropy { .. }) => {}
            other => panic!("expected anisotropy error, got {other:?}"),
        }
    }

    #[test]
    fn d_matrix_and_beta_formulas() {
        // formula checks with the mode-0 style dbar = 0.6124
        let ee = EESolution::from_constants(model(1.0, 0.01), 4.0, [0.6124, 0.6124], 5.0).unwrap();
        let d1 = ee.d_matrix(1.0).unwrap();
        assert_relative_eq!(d1[0], 0.92846028, epsilon = 1e-7);
        assert_relative_eq!(ee.d_matrix(0.0).unwrap()[0], 0.6124);
        assert_relative_eq!(ee.beta_eff(0.0).unwrap(), 0.16080640, epsilon = 1e-7);
        // trace grows monotonically under positive diffusion
        let mut prev = 0.0;
        for i in 0..=50 {
            let t = i as f64 * 0.1;
            let tr = ee.d_matrix(t).unwrap()[0] + ee.d_matrix(t).unwrap()[1];
            assert!(tr >= prev);
            prev = tr;
        }
    }

    #[test]
    fn beta_reduces_to_b_without_diffusion_correction() {
        // D -> tiny makes the correction negligible
        let ee = EESolution::from_constants(model(1.0, 1e-12), 4.0, [1.0, 1.0], 5.0).unwrap();
        for &t in &[0.0, 1.0, 3.0] {
            assert_relative_eq!(
                ee.beta_eff(t).unwrap(),
                ee.model().eval_b(t).unwrap(),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn sigma_against_ode_oracle_section6() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(1.0, 0.01), 5.0).unwrap();
        assert_relative_eq!(ee.sigma(0.0).unwrap(), ee.c2(), max_relative = 1e-12);
        let oracle = ee.sigma_ode_check(5.0, 1e-3).unwrap();
        let mut worst: f64 = 0.0;
        for &(t, s_ode) in oracle.iter().step_by(50) {
            let s = ee.sigma(t).unwrap();
            worst = worst.max((s - s_ode).abs() / s_ode);
        }
        assert!(worst < 1e-6, "sigma paths disagree: {worst:.3e}");
        // strictly decreasing after the initial transient (relaxation)
        assert!(ee.sigma(5.0).unwrap() < ee.sigma(1.0).unwrap());
        assert!(ee.sigma(1.0).unwrap() < ee.sigma(0.2).unwrap());
    }

    #[test]
    fn sigma_kappa_zero_is_pure_growth() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(0.0, 0.01), 5.0).unwrap();
        for &t in &[0.5, 2.0, 5.0] {
            let expect = ee.c2() * ee.model().int_a(t).unwrap().exp();
            assert_relative_eq!(ee.sigma(t).unwrap(), expect, max_relative = 1e-10);
        }
    }

    #[test]
    fn sigma_ode_separable_closed_form() {
        // a ≡ 0, constant beta: sigma = sigma0 / sqrt(1 + 2 kappa beta sigma0^2 t)
        let m = Arc::new(
            CoefficientModel::new(
                CoefficientKind::ExponentialRelaxation {
                    a1: 0.0,
                    tau_a: 1.0,
                    d1: 0.0,
                    tau_d: 1.0,
                    b1: 0.3,
                    b2: 0.3,
                    tau_b: 1.0,
                },
                1e6, // huge mu: beta(t) = b = 0.3 up to 1e-12 corrections
                1.0,
                0.01,
            )
            .unwrap(),
        );
        let ee = EESolution::from_constants(m, 1.0, [0.5, 0.5], 5.0).unwrap();
        let beta = 0.3;
        for &(t, _s) in ee.sigma_ode_check(5.0, 1e-3).unwrap().iter().step_by(500) {
            let expect = 1.0 / (1.0 + 2.0 * beta * t).sqrt();
            assert_relative_eq!(ee.sigma(t).unwrap(), expect, max_relative = 1e-9);
        }
        let oracle = ee.sigma_ode_check(5.0, 1e-3).unwrap();
        let (t_last, s_last) = *oracle.last().unwrap();
        assert_relative_eq!(
            s_last,
            1.0 / (1.0 + 2.0 * beta * t_last).sqrt(),
            max_relative = 1e-10
        );
    }

    #[test]
    fn ode_oracle_order_four() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(1.0, 0.01), 5.0).unwrap();
        let reference = ee.sigma(2.0).unwrap();
        let err = |dt: f64| {
            let traj = ee.sigma_ode_check(2.0, dt).unwrap();
            (traj.last().unwrap().1 - reference).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        assert!(
            e1 / e2 > 10.0,
            "halving dt should shrink the error ~16x, got {e1:.2e}/{e2:.2e}"
        );
    }

    #[test]
    fn alpha2_transport_is_exact_quadrature() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(1.0, 0.01), 5.0).unwrap();
        let a0 = ee.alpha2(0.0).unwrap();
        assert_relative_eq!(a0[0], 0.02153846, epsilon = 1e-7);
        for &t in &[0.7, 3.3, 5.0] {
            let a = ee.alpha2(t).unwrap();
            let expect = a0[0] + 2.0 * 0.01 * ee.model().int_diffusion(t).unwrap();
            assert_relative_eq!(a[0], expect, max_relative = 1e-12);
            assert_relative_eq!(a[1], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn action_examples() {
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(0.0, 0.01), 5.0).unwrap();
        assert_eq!(ee.action_s(0.0).unwrap(), 0.0);
        // kappa = 0: S = D ∫ a
        for &t in &[1.0, 4.0] {
            assert_relative_eq!(
                ee.action_s(t).unwrap(),
                0.01 * ee.model().int_a(t).unwrap(),
                max_relative = 1e-10
            );
        }
        // fundamental theorem: finite difference of S matches the integrand
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.01), model(1.0, 0.01), 5.0).unwrap();
        let t = 1.3;
        let h = 1e-4;
        let fd = (ee.action_s(t + h).unwrap() - ee.action_s(t - h).unwrap()) / (2.0 * h);
        let m = ee.model();
        let sig = ee.sigma(t).unwrap();
        let spd = ee.d_matrix(t).unwrap()[0] + ee.d_matrix(t).unwrap()[1];
        let integrand = m.d
            * (m.eval_a(t).unwrap()
                - m.kappa * m.eval_b(t).unwrap() * sig * sig * (1.0 - 2.0 * m.d / (m.mu * m.mu) * spd));
        assert_relative_eq!(fd, integrand, max_relative = 1e-6);
    }

    #[test]
    fn detects_blowup_for_negative_beta() {
        // D = 0.04 with the §6-matched IC puts beta_eff(0) < 0 and the mass
        // solution blows up in finite time
        let ee = EESolution::match_constants(&ic_moments(0.85, 0.04), model(1.0, 0.04), 5.0).unwrap();
        assert!(ee.beta_warning().is_some());
        let ts = ee.singular_at().expect("blow-up expected");
        assert!(ts > 0.1 && ts < 0.5, "blow-up at {ts}");
        assert!(ee.sigma(0.1).unwrap() > 0.0);
        match ee.sigma(ts + 0.05) {
            Err(Error::SingularSigma { .. }) => {}
            other => panic!("expected singular sigma, got {other:?}"),
        }
        match ee.sigma_ode_check(5.0, 1e-3) {
            Err(Error::SingularSigma { .. }) => {}
            other => panic!("expected singular sigma from oracle, got {other:?}"),
        }
    }

    #[test]
    fn grid_moments_of_double_gaussian() {
        let d = 0.01;
        let (n, g1, g2, eps) = (1.0, 1.5, 1.0, 0.85);
        let grid = GridSpec::centered(1.0, 401);
        let x1 = grid.x1.points();
        let x2 = grid.x2.points();
        let mut values = vec![0.0; 401 * 401];
        for (i, &a) in x1.iter().enumerate() {
            for (j, &b) in x2.iter().enumerate() {
                let r2 = a * a + b * b;
                values[i * 401 + j] = n / d
                    * ((-r2 / (2.0 * g1 * d)).exp() - eps * (-r2 / (2.0 * g2 * d)).exp());
            }
        }
        let fm = moments_from_field(&values, &grid).unwrap();
        let m = fm.moments;
        let sigma_exact = 2.0 * std::f64::consts::PI * (g1 - eps * g2);
        let alpha_exact = d * (g1 * g1 - eps * g2 * g2) / (g1 - eps * g2);
        assert_relative_eq!(m.sigma, sigma_exact, max_relative = 1e-8);
        assert!(m.center[0].abs() < 1e-12 && m.center[1].abs() < 1e-12);
        assert_relative_eq!(m.alpha.a11, alpha_exact, max_relative = 1e-8);
        assert_relative_eq!(m.alpha.a22, alpha_exact, max_relative = 1e-8);
        assert!(m.alpha.a12.abs() < 1e-14);
        assert!(fm.sigma_error_estimate.unwrap() < 1e-6);
    }

    #[test]
    fn grid_moments_reject_zero_mass() {
        let grid = GridSpec::centered(1.0, 51);
        let values = vec![0.0; 51 * 51];
        match moments_from_field(&values, &grid) {
            Err(Error::DegenerateMass) => {}
            other => panic!("expected degenerate mass, got {other:?}"),
        }
    }

    #[test]
    fn grid_moments_center_vanishes_for_even_fields() {
        let grid = GridSpec::centered(0.8, 201);
        let x1 = grid.x1.points();
        let x2 = grid.x2.points();
        let mut values = vec![0.0; 201 * 201];
        for (i, &a) in x1.iter().enumerate() {
            for (j, &b) in x2.iter().enumerate() {
                values[i * 201 + j] = (-(a * a + 2.0 * b * b) / 0.02).exp() * (1.0 + a * a * b * b);
            }
        }
        let fm = moments_from_field(&values, &grid).unwrap();
        assert!(fm.moments.center[0].abs() < 1e-13);
        assert!(fm.moments.center[1].abs() < 1e-13);
    }
}
