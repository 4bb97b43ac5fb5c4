//! The Hermite–Gauss mode basis and the nonlinear-superposition bookkeeping:
//! basis functions ψₙ, projection of initial data onto them, the closed-form
//! coefficients for double-Gaussian data, the optimal localization parameter
//! β, and the per-mode moments / integration constants that turn modes into
//! standalone asymptotic solutions.

use crate::ee::{EESolution, MomentState, Sym2};
use crate::error::Error;
use crate::numeric::{golden_min, Kahan};
use crate::solver::GridSpec;
use crate::variational::{Axis, GermParams, VariationalTrajectory};
use crate::Result;

/// Highest Hermite order evaluated in double precision; beyond this the
/// recurrence and factorials start flirting with overflow.
pub const HERMITE_ORDER_CAP: usize = 60;

/// Physicists' Hermite polynomial H_k(ξ) by the three-term upward recurrence
/// H_{k+1} = 2ξH_k − 2kH_{k−1}.
pub fn hermite_poly(k: usize, xi: f64) -> Result<f64> {
    let table = hermite_table(k, xi)?;
    Ok(table[k])
}

/// H_0..H_k at one point.
pub fn hermite_table(k: usize, xi: f64) -> Result<Vec<f64>> {
    if k > HERMITE_ORDER_CAP {
        return Err(Error::Config {
            line: None,
            message: format!("Hermite order {k} above the cap {HERMITE_ORDER_CAP}"),
        });
    }
    let mut h = Vec::with_capacity(k + 1);
    h.push(1.0);
    if k >= 1 {
        h.push(2.0 * xi);
    }
    for m in 1..k {
        h.push(2.0 * xi * h[m] - 2.0 * m as f64 * h[m - 1]);
    }
    Ok(h)
}

/// Two-dimensional multi-index n = (n₁, n₂).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModeIndex {
    pub n1: usize,
    pub n2: usize,
}

impl ModeIndex {
    pub fn new(n1: usize, n2: usize) -> Self {
        Self { n1, n2 }
    }

    pub fn order(&self) -> usize {
        self.n1 + self.n2
    }

    pub fn is_even(&self) -> bool {
        self.n1 % 2 == 0 && self.n2 % 2 == 0
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Basis function at t = 0:
/// ψₙ(x) = H_{n₁}(x₁√(β₁/D)) H_{n₂}(x₂√(β₂/D)) (1/D) e^{−(β₁x₁²+β₂x₂²)/2D}.
pub fn psi_n(n: ModeIndex, x: [f64; 2], params: GermParams, d: f64) -> Result<f64> {
    let xi1 = x[0] * (params.beta1 / d).sqrt();
    let xi2 = x[1] * (params.beta2 / d).sqrt();
    let h1 = hermite_poly(n.n1, xi1)?;
    let h2 = hermite_poly(n.n2, xi2)?;
    Ok(h1 * h2 / d * (-(params.beta1 * x[0] * x[0] + params.beta2 * x[1] * x[1]) / (2.0 * d)).exp())
}

/// Truncated expansion of an initial condition over ψₙ: coefficients kₙ for
/// nᵢ ≤ n_max, the basis parameters, and a tail diagnostic (the largest |kₙ|
/// on the boundary shell n₁ = n_max or n₂ = n_max).
#[derive(Clone, Debug)]
pub struct HermiteExpansion {
    k: Vec<f64>,
    n_max: usize,
    params: GermParams,
    /// Small diffusion parameter D of the basis.
    pub d: f64,
    /// Global mode normalization N₀.
    pub n0: f64,
    tail: f64,
}

impl HermiteExpansion {
    pub fn from_coefficients(
        k: Vec<f64>,
        n_max: usize,
        params: GermParams,
        d: f64,
        n0: f64,
    ) -> Self {
        assert_eq!(k.len(), (n_max + 1) * (n_max + 1));
        let mut tail: f64 = 0.0;
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                if n1 == n_max || n2 == n_max {
                    tail = tail.max(k[n1 * (n_max + 1) + n2].abs());
                }
            }
        }
        Self {
            k,
            n_max,
            params,
            d,
            n0,
            tail,
        }
    }

    /// Closed-form expansion of the double-Gaussian profile (β₁ = β₂ = β).
    pub fn double_gaussian(
        n_amp: f64,
        gamma1: f64,
        gamma2: f64,
        eps: f64,
        beta: f64,
        n_max: usize,
        d: f64,
        n0: f64,
    ) -> Result<Self> {
        let params = GermParams::isotropic(beta)?;
        let mut k = vec![0.0; (n_max + 1) * (n_max + 1)];
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                k[n1 * (n_max + 1) + n2] =
                    gaussian_ic_coeffs(n_amp, gamma1, gamma2, eps, beta, ModeIndex::new(n1, n2))?;
            }
        }
        Ok(Self::from_coefficients(k, n_max, params, d, n0))
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn params(&self) -> GermParams {
        self.params
    }

    /// kₙ, zero outside the truncation square.
    pub fn k(&self, n1: usize, n2: usize) -> f64 {
        if n1 > self.n_max || n2 > self.n_max {
            0.0
        } else {
            self.k[n1 * (self.n_max + 1) + n2]
        }
    }

    /// Largest |kₙ| on the truncation boundary shell.
    pub fn tail_estimate(&self) -> f64 {
        self.tail
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.k
    }
}

/// Expansion coefficients of a gridded field:
/// kₙ = D√(β₁β₂)/(2^{|n|} n! π) ∫ φ ψₙ dx, tensor-product trapezoid with
/// compensated reductions.
pub fn project_ic(
    values: &[f64],
    grid: &GridSpec,
    params: GermParams,
    d: f64,
    n_max: usize,
    n0: f64,
) -> Result<HermiteExpansion> {
    if n_max > HERMITE_ORDER_CAP {
        return Err(Error::Config {
            line: None,
            message: format!("n_max {n_max} above the Hermite cap {HERMITE_ORDER_CAP}"),
        });
    }
    let (n1g, n2g) = (grid.x1.n, grid.x2.n);
    if values.len() != n1g * n2g {
        return Err(Error::Domain(format!(
            "field has {} values but the grid is {}x{}",
            values.len(),
            n1g,
            n2g
        )));
    }
    // the highest mode oscillates with wavelength ~ π√(D/β)/√(2n+1);
    // require at least 8 grid points per oscillation
    for (axis, beta, step) in [
        ("x1", params.beta1, grid.x1.step()),
        ("x2", params.beta2, grid.x2.step()),
    ] {
        let wavelength =
            std::f64::consts::PI * (d / beta).sqrt() / ((2 * n_max + 1) as f64).sqrt();
        if step > wavelength / 8.0 {
            return Err(Error::Resolution(format!(
                "{axis} step {step:.4e} under-resolves mode {n_max} (need <= {:.4e})",
                wavelength / 8.0
            )));
        }
    }

    let x1 = grid.x1.points();
    let x2 = grid.x2.points();
    let cell = grid.x1.step() * grid.x2.step();
    let weight = |i: usize, n: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };

    // mass gate (the superposition constants need sigma(0) != 0)
    let mut mass = Kahan::new();
    for i in 0..n1g {
        let wi = weight(i, n1g);
        for j in 0..n2g {
            mass.add(wi * weight(j, n2g) * values[i * n2g + j]);
        }
    }
    if (mass.value() * cell).abs() < 1e-12 * (n1g * n2g) as f64 {
        return Err(Error::DegenerateMass);
    }

    // per-axis tables H_n(ξ) e^{−βx²/2D}, trapezoid-weighted on axis 1
    let mut t1 = vec![0.0; (n_max + 1) * n1g];
    for (i, &x) in x1.iter().enumerate() {
        let xi = x * (params.beta1 / d).sqrt();
        let h = hermite_table(n_max, xi)?;
        let e = (-params.beta1 * x * x / (2.0 * d)).exp() * weight(i, n1g);
        for n in 0..=n_max {
            t1[n * n1g + i] = h[n] * e;
        }
    }
    let mut t2 = vec![0.0; (n_max + 1) * n2g];
    for (j, &x) in x2.iter().enumerate() {
        let xi = x * (params.beta2 / d).sqrt();
        let h = hermite_table(n_max, xi)?;
        let e = (-params.beta2 * x * x / (2.0 * d)).exp() * weight(j, n2g);
        for n in 0..=n_max {
            t2[n * n2g + j] = h[n] * e;
        }
    }

    // inner contraction: inner[n2][i] = Σ_j φ[i,j] t2[n2][j]
    let mut inner = vec![0.0; (n_max + 1) * n1g];
    for i in 0..n1g {
        let row = &values[i * n2g..(i + 1) * n2g];
        for n2 in 0..=n_max {
            let tab = &t2[n2 * n2g..(n2 + 1) * n2g];
            let mut acc = Kahan::new();
            for j in 0..n2g {
                acc.add(row[j] * tab[j]);
            }
            inner[n2 * n1g + i] = acc.value();
        }
    }

    let mut k = vec![0.0; (n_max + 1) * (n_max + 1)];
    for n1 in 0..=n_max {
        for n2 in 0..=n_max {
            let mut acc = Kahan::new();
            for i in 0..n1g {
                acc.add(t1[n1 * n1g + i] * inner[n2 * n1g + i]);
            }
            let integral = acc.value() * cell / d; // the 1/D of ψ
            let norm = d * (params.beta1 * params.beta2).sqrt()
                / (2f64.powi((n1 + n2) as i32)
                    * factorial(n1)
                    * factorial(n2)
                    * std::f64::consts::PI);
            k[n1 * (n_max + 1) + n2] = norm * integral;
        }
    }
    Ok(HermiteExpansion::from_coefficients(k, n_max, params, d, n0))
}

/// Closed-form expansion coefficient of the double-Gaussian profile
/// φ = (N/D)(e^{−x²/2γ₁D} − ε e^{−x²/2γ₂D}) over the isotropic basis
/// β₁ = β₂ = β. Odd indices vanish identically.
pub fn gaussian_ic_coeffs(
    n_amp: f64,
    gamma1: f64,
    gamma2: f64,
    eps: f64,
    beta: f64,
    n: ModeIndex,
) -> Result<f64> {
    if !(gamma1 >= gamma2 && gamma2 > 0.0) {
        return Err(Error::Domain(format!(
            "need gamma1 >= gamma2 > 0, got ({gamma1}, {gamma2})"
        )));
    }
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("need 0 <= eps <= 1, got {eps}")));
    }
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("need beta > 0, got {beta}")));
    }
    if !n.is_even() {
        return Ok(0.0);
    }
    let (m1, m2) = (n.n1 / 2, n.n2 / 2);
    let m = (m1 + m2) as i32;
    let g = |gamma: f64| 2.0 * gamma / (1.0 + beta * gamma);
    let r = |gamma: f64| (beta * gamma - 1.0) / (1.0 + beta * gamma);
    let value = n_amp * beta / (2f64.powi((n.n1 + n.n2) as i32) * factorial(m1) * factorial(m2))
        * (g(gamma1) * r(gamma1).powi(m) - eps * g(gamma2) * r(gamma2).powi(m));
    Ok(value)
}

/// Tail-convergence factor f(β) whose minimum defines the optimal β:
/// f(β) = max(|βγ₁−1|/(1+βγ₁), |βγ₂−1|/(1+βγ₂)).
pub fn convergence_factor(gamma1: f64, gamma2: f64, beta: f64) -> f64 {
    let r = |g: f64| ((beta * g - 1.0) / (1.0 + beta * g)).abs();
    r(gamma1).max(r(gamma2))
}

/// Optimal localization parameter β = 1/√(γ₁γ₂) for double-Gaussian data.
pub fn optimal_beta(gamma1: f64, gamma2: f64) -> Result<f64> {
    if !(gamma1 >= gamma2 && gamma2 > 0.0) {
        return Err(Error::Domain(format!(
            "need gamma1 >= gamma2 > 0, got ({gamma1}, {gamma2})"
        )));
    }
    Ok(1.0 / (gamma1 * gamma2).sqrt())
}

/// Numeric minimizer of the convergence factor, exposed to validate the
/// closed form (golden section on a log-spaced bracket).
pub fn optimal_beta_numeric(gamma1: f64, gamma2: f64) -> Result<f64> {
    optimal_beta(gamma1, gamma2)?; // validates the arguments
    let f = |u: f64| convergence_factor(gamma1, gamma2, u.exp());
    let center = -(0.5 * (gamma1 * gamma2).ln());
    Ok(golden_min(&f, center - 3.0, center + 3.0, 1e-12).exp())
}

/// Initial moments recovered from the expansion coefficients alone:
/// σ(0) = Σ k₍₂ₘ₎ (2π/√(β₁β₂)) (2m₁)!(2m₂)!/(m₁!m₂!) and the matching
/// second-moment sums with the (1+4mᵢ)(D/βᵢ) factors.
pub fn ic_moments_from_coeffs(expansion: &HermiteExpansion) -> Result<MomentState> {
    let p = expansion.params();
    let pref = 2.0 * std::f64::consts::PI / (p.beta1 * p.beta2).sqrt();
    let mut s = Kahan::new();
    let mut s1 = Kahan::new();
    let mut s2 = Kahan::new();
    for m1 in 0..=(expansion.n_max() / 2) {
        for m2 in 0..=(expansion.n_max() / 2) {
            let k = expansion.k(2 * m1, 2 * m2);
            if k == 0.0 {
                continue;
            }
            let w = pref * factorial(2 * m1) * factorial(2 * m2) / (factorial(m1) * factorial(m2));
            s.add(k * w);
            s1.add(k * w * (1.0 + 4.0 * m1 as f64));
            s2.add(k * w * (1.0 + 4.0 * m2 as f64));
        }
    }
    let sigma = s.value();
    if sigma.abs() < 1e-14 {
        return Err(Error::DegenerateMass);
    }
    let alpha = Sym2::diag(
        expansion.d / p.beta1 * s1.value() / sigma,
        expansion.d / p.beta2 * s2.value() / sigma,
    );
    Ok(MomentState {
        sigma,
        center: [0.0, 0.0],
        alpha,
    })
}

/// Integration constants that make mode 2m a standalone asymptotic solution:
/// c² = σ₂ₘ(0) and d̄ᵢ = (1 + 4mᵢ)/(2βᵢ).
#[derive(Clone, Copy, Debug)]
pub struct ModeConstants {
    pub c2: f64,
    pub dbar: [f64; 2],
}

pub fn mode_constants(n: ModeIndex, params: GermParams, n0: f64) -> Result<ModeConstants> {
    if !n.is_even() {
        return Err(Error::Domain(format!(
            "mode constants exist for even indices only, got ({}, {})",
            n.n1, n.n2
        )));
    }
    let (m1, m2) = (n.n1 / 2, n.n2 / 2);
    let c2 = n0 / 2f64.powi((m1 + m2) as i32 - 1) * std::f64::consts::PI
        / (params.beta1 * params.beta2).sqrt()
        * (factorial(2 * m1) * factorial(2 * m2)).sqrt()
        / (factorial(m1) * factorial(m2));
    Ok(ModeConstants {
        c2,
        dbar: [
            (1.0 + 4.0 * m1 as f64) / (2.0 * params.beta1),
            (1.0 + 4.0 * m2 as f64) / (2.0 * params.beta2),
        ],
    })
}

/// Mass and second moments of a single mode at time t.
#[derive(Clone, Copy, Debug)]
pub struct ModeMoments {
    pub sigma: f64,
    /// Diagonal second moments; `None` for odd indices (their mass vanishes
    /// identically and the normalized moments are undefined).
    pub alpha: Option<[f64; 2]>,
}

/// Mode moments σₙ(t), α⁽²⁾ₙ(t) expressed through the germ. The raw formulas
/// contain Z⁺ in removable combinations; here they are reduced through the
/// skew identity Z⁻W⁺ − Z⁺W⁻ = 2β to
///
/// ```text
/// σ₂ₘ(t) = N₀ e^{S/D+φ} 2π √(Z₁⁻Z₂⁻/(W₁⁻W₂⁻)) √((2m₁)!(2m₂)!)/(2^{|m|}m₁!m₂!)
///          · (−W₁⁺/W₁⁻)^{m₁} (−W₂⁺/W₂⁻)^{m₂},
/// α₍ᵢᵢ₎,₂ₘ(t) = −D (Zᵢ⁻/Wᵢ⁻) [1 + 4βᵢmᵢ/(Zᵢ⁻Wᵢ⁺)],
/// ```
///
/// which stay regular where Z⁺ crosses zero.
pub fn mode_moments(
    n: ModeIndex,
    traj: &VariationalTrajectory,
    ee: &EESolution,
    t: f64,
    n0: f64,
) -> Result<ModeMoments> {
    if !n.is_even() {
        return Ok(ModeMoments {
            sigma: 0.0,
            alpha: None,
        });
    }
    let (m1, m2) = (n.n1 / 2, n.n2 / 2);
    let state = traj.state(t)?;
    let d = ee.model().d;
    let params = traj.params();
    let (a1, a2) = (state.axis[0], state.axis[1]);
    // localization requires Q = W⁻/Z⁻ < 0; past a W⁻ sign change the mode's
    // mass integral diverges and the formulas only continue analytically
    for (w, z) in [(a1.w_minus, a1.z_minus), (a2.w_minus, a2.z_minus)] {
        if w >= -1e-12 || z < 1e-12 {
            return Err(Error::GermDegeneracy { t });
        }
    }
    let ratio = (a1.z_minus * a2.z_minus) / (a1.w_minus * a2.w_minus);
    let amp = (ee.action_s(t)? / d + traj.phase_phi(t)?).exp();
    let sigma = n0
        * amp
        * 2.0
        * std::f64::consts::PI
        * ratio.sqrt()
        * (factorial(2 * m1) * factorial(2 * m2)).sqrt()
        / (2f64.powi((m1 + m2) as i32) * factorial(m1) * factorial(m2))
        * (-a1.w_plus / a1.w_minus).powi(m1 as i32)
        * (-a2.w_plus / a2.w_minus).powi(m2 as i32);
    let alpha1 = -d * a1.z_minus / a1.w_minus
        * (1.0 + 4.0 * params.beta(Axis::X1) * m1 as f64 / (a1.z_minus * a1.w_plus));
    let alpha2 = -d * a2.z_minus / a2.w_minus
        * (1.0 + 4.0 * params.beta(Axis::X2) * m2 as f64 / (a2.z_minus * a2.w_plus));
    Ok(ModeMoments {
        sigma,
        alpha: Some([alpha1, alpha2]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil;
    use crate::variational::integrate_germ;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn hermite_seeds_and_h4() {
        assert_eq!(hermite_poly(0, 0.37).unwrap(), 1.0);
        assert_eq!(hermite_poly(1, 0.37).unwrap(), 0.74);
        assert_eq!(hermite_poly(4, 0.0).unwrap(), 12.0);
        assert!(hermite_poly(61, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn hermite_parity(k in 0usize..20, xi in -4.0f64..4.0) {
            let lhs = hermite_poly(k, -xi).unwrap();
            let rhs = hermite_poly(k, xi).unwrap() * if k % 2 == 0 { 1.0 } else { -1.0 };
            prop_assert!((lhs - rhs).abs() <= 1e-9 * rhs.abs().max(1.0));
        }
    }

    #[test]
    fn psi_basics() {
        let p = GermParams::isotropic(0.8).unwrap();
        assert_relative_eq!(
            psi_n(ModeIndex::new(0, 0), [0.0, 0.0], p, 0.01).unwrap(),
            100.0
        );
        // parity per axis
        let v = psi_n(ModeIndex::new(3, 2), [0.11, -0.07], p, 0.01).unwrap();
        let w = psi_n(ModeIndex::new(3, 2), [-0.11, -0.07], p, 0.01).unwrap();
        assert_relative_eq!(v, -w, max_relative = 1e-12);
    }

    #[test]
    fn table1_closed_form_values() {
        let beta = testutil::beta_opt();
        let k = |eps: f64, n1: usize, n2: usize| {
            gaussian_ic_coeffs(1.0, 1.5, 1.0, eps, beta, ModeIndex::new(n1, n2)).unwrap()
        };
        // eps = 0.85 column of the published table
        assert_relative_eq!(k(0.85, 0, 0), 3.37e-1, max_relative = 5e-3);
        assert_relative_eq!(k(0.85, 0, 2), 4.71e-2, max_relative = 5e-3);
        assert_relative_eq!(k(0.85, 0, 4), 1.07e-4, max_relative = 5e-3);
        assert_relative_eq!(k(0.85, 2, 2), 2.15e-4, max_relative = 5e-3);
        assert_relative_eq!(k(0.85, 2, 4), 1.50e-5, max_relative = 5e-3);
        assert_relative_eq!(k(0.85, 4, 4), 3.43e-8, max_relative = 5e-3);
        // eps = 1
        assert_relative_eq!(k(1.0, 0, 0), 2.02e-1, max_relative = 5e-3);
        assert_relative_eq!(k(1.0, 2, 2), 1.29e-4, max_relative = 5e-3);
        assert_relative_eq!(k(1.0, 4, 4), 2.05e-8, max_relative = 5e-3);
        // odd indices vanish identically
        assert_eq!(k(0.85, 1, 2), 0.0);
        assert_eq!(k(0.85, 0, 3), 0.0);
        // symmetry in the index pair
        assert_eq!(k(1.0, 0, 4), k(1.0, 4, 0));
    }

    #[test]
    fn matched_beta_kills_higher_modes() {
        // single Gaussian with beta = 1/gamma: only k00 survives
        let k = |n1, n2| gaussian_ic_coeffs(1.0, 1.5, 1.0, 0.0, 1.0 / 1.5, ModeIndex::new(n1, n2));
        assert!(k(0, 0).unwrap() > 0.0);
        for (n1, n2) in [(2usize, 0usize), (0, 2), (2, 2), (4, 0), (4, 4)] {
            assert_eq!(k(n1, n2).unwrap(), 0.0);
        }
    }

    #[test]
    fn optimal_beta_examples() {
        assert_relative_eq!(optimal_beta(2.0, 2.0).unwrap(), 0.5);
        assert_relative_eq!(optimal_beta(1.5, 1.0).unwrap(), 0.8164966, epsilon = 1e-7);
        assert_relative_eq!(
            optimal_beta_numeric(1.5, 1.0).unwrap(),
            optimal_beta(1.5, 1.0).unwrap(),
            epsilon = 1e-8
        );
        // equioscillation at the optimum
        let b = optimal_beta(1.5, 1.0).unwrap();
        let r1 = ((b * 1.5 - 1.0) / (1.0 + b * 1.5)).abs();
        let r2 = ((b * 1.0 - 1.0) / (1.0 + b * 1.0)).abs();
        assert_relative_eq!(r1, r2, epsilon = 1e-12);
    }

    #[test]
    fn tail_decay_best_at_optimal_beta() {
        let shell_max = |beta: f64| {
            let mut worst: f64 = 0.0;
            for m1 in 0..=4usize {
                let m2 = 4 - m1;
                worst = worst.max(
                    gaussian_ic_coeffs(1.0, 1.5, 1.0, 0.85, beta, ModeIndex::new(2 * m1, 2 * m2))
                        .unwrap()
                        .abs(),
                );
            }
            worst
        };
        let b = testutil::beta_opt();
        assert!(shell_max(b) < shell_max(1.5 * b));
    }

    #[test]
    fn orthogonality_gram_matrix() {
        // Gram of ψ_n for n_i <= 4 under 2D quadrature vs (2^|n| n! π)/(D√(β₁β₂))
        let d = 0.01;
        let p = GermParams::isotropic(testutil::beta_opt()).unwrap();
        let grid = GridSpec::centered(1.0, 401);
        let x1 = grid.x1.points();
        let cell = grid.x1.step() * grid.x2.step();
        // per-axis tables
        let n_max = 4usize;
        let tab: Vec<Vec<f64>> = (0..=n_max)
            .map(|n| {
                x1.iter()
                    .map(|&x| {
                        let xi = x * (p.beta1 / d).sqrt();
                        hermite_poly(n, xi).unwrap() * (-p.beta1 * x * x / (2.0 * d)).exp()
                    })
                    .collect()
            })
            .collect();
        let axis_inner = |a: usize, b: usize| -> f64 {
            let mut acc = Kahan::new();
            for i in 0..x1.len() {
                acc.add(tab[a][i] * tab[b][i]);
            }
            acc.value()
        };
        let mut off_mass: f64 = 0.0;
        for n1 in 0..=n_max {
            for n2 in 0..=n_max {
                for m1 in 0..=n_max {
                    for m2 in 0..=n_max {
                        let val =
                            axis_inner(n1, m1) * axis_inner(n2, m2) * cell / (d * d);
                        let expect = if n1 == m1 && n2 == m2 {
                            2f64.powi((n1 + n2) as i32) * factorial(n1) * factorial(n2)
                                * std::f64::consts::PI
                                / (d * (p.beta1 * p.beta2).sqrt())
                        } else {
                            0.0
                        };
                        if expect != 0.0 {
                            assert_relative_eq!(val, expect, max_relative = 1e-6);
                        } else {
                            let scale = 2f64.powi((n1 + n2) as i32) * factorial(n1) * factorial(n2)
                                * std::f64::consts::PI
                                / (d * (p.beta1 * p.beta2).sqrt());
                            off_mass = off_mass.max((val / scale).abs());
                        }
                    }
                }
            }
        }
        assert!(off_mass < 1e-6, "off-diagonal Gram mass {off_mass:.2e}");
    }

    #[test]
    fn projection_round_trip_of_a_basis_function() {
        let d = 0.01;
        let p = GermParams::isotropic(testutil::beta_opt()).unwrap();
        let grid = GridSpec::centered(1.0, 401);
        let x1 = grid.x1.points();
        let x2 = grid.x2.points();
        let mut values = vec![0.0; x1.len() * x2.len()];
        for (i, &a) in x1.iter().enumerate() {
            for (j, &b) in x2.iter().enumerate() {
                values[i * x2.len() + j] = psi_n(ModeIndex::new(2, 0), [a, b], p, d).unwrap();
            }
        }
        let exp = project_ic(&values, &grid, p, d, 6, 1.0).unwrap();
        for n1 in 0..=6 {
            for n2 in 0..=6 {
                let expect = if (n1, n2) == (2, 0) { 1.0 } else { 0.0 };
                assert!(
                    (exp.k(n1, n2) - expect).abs() < 1e-8,
                    "k[{n1},{n2}] = {}",
                    exp.k(n1, n2)
                );
            }
        }
    }

    #[test]
    fn projection_matches_closed_form_table() {
        let d = 0.01;
        let beta = testutil::beta_opt();
        let p = GermParams::isotropic(beta).unwrap();
        let grid = GridSpec::centered(1.0, 401);
        let x1 = grid.x1.points();
        let x2 = grid.x2.points();
        let mut values = vec![0.0; x1.len() * x2.len()];
        for (i, &a) in x1.iter().enumerate() {
            for (j, &b) in x2.iter().enumerate() {
                let r2 = a * a + b * b;
                values[i * x2.len() + j] =
                    1.0 / d * ((-r2 / (2.0 * 1.5 * d)).exp() - 0.85 * (-r2 / (2.0 * d)).exp());
            }
        }
        let exp = project_ic(&values, &grid, p, d, 8, 1.0).unwrap();
        let mut worst: f64 = 0.0;
        for n1 in 0..=8usize {
            for n2 in 0..=8usize {
                let closed =
                    gaussian_ic_coeffs(1.0, 1.5, 1.0, 0.85, beta, ModeIndex::new(n1, n2)).unwrap();
                if closed != 0.0 {
                    worst = worst.max((exp.k(n1, n2) - closed).abs() / closed.abs());
                } else {
                    assert!(exp.k(n1, n2).abs() < 1e-10);
                }
            }
        }
        assert!(worst < 1e-5, "closed vs quadrature rel diff {worst:.2e}");
    }

    #[test]
    fn projection_resolution_gate() {
        let d = 0.01;
        let p = GermParams::isotropic(testutil::beta_opt()).unwrap();
        let grid = GridSpec::centered(1.0, 41);
        let values = vec![1.0; 41 * 41];
        match project_ic(&values, &grid, p, d, 8, 1.0) {
            Err(Error::Resolution(_)) => {}
            other => panic!("expected resolution error, got {other:?}"),
        }
    }

    #[test]
    fn ic_moments_from_sums_match_closed_moments() {
        let d = 0.01;
        let beta = testutil::beta_opt();
        for &eps in &[0.85, 1.0] {
            let exp =
                HermiteExpansion::double_gaussian(1.0, 1.5, 1.0, eps, beta, 24, d, 1.0).unwrap();
            let m = ic_moments_from_coeffs(&exp).unwrap();
            let reference = testutil::double_gaussian_moments(eps, d);
            assert_relative_eq!(m.sigma, reference.sigma, max_relative = 1e-6);
            assert_relative_eq!(m.alpha.a11, reference.alpha.a11, max_relative = 1e-6);
            assert_relative_eq!(m.alpha.a22, reference.alpha.a22, max_relative = 1e-6);
        }
    }

    #[test]
    fn ic_moments_single_term_and_sign_flip() {
        let d = 0.01;
        let p = GermParams::new(0.8, 1.1).unwrap();
        let mut k = vec![0.0; 25];
        k[0] = 0.3;
        let exp = HermiteExpansion::from_coefficients(k.clone(), 4, p, d, 1.0);
        let m = ic_moments_from_coeffs(&exp).unwrap();
        assert_relative_eq!(
            m.sigma,
            0.3 * 2.0 * std::f64::consts::PI / (0.8f64 * 1.1).sqrt(),
            max_relative = 1e-12
        );
        assert_relative_eq!(m.alpha.a11, d / 0.8, max_relative = 1e-12);
        assert_relative_eq!(m.alpha.a22, d / 1.1, max_relative = 1e-12);
        // sign flip of all coefficients flips sigma, keeps alpha
        let flipped: Vec<f64> = k.iter().map(|v| -v).collect();
        let expf = HermiteExpansion::from_coefficients(flipped, 4, p, d, 1.0);
        let mf = ic_moments_from_coeffs(&expf).unwrap();
        assert_relative_eq!(mf.sigma, -m.sigma);
        assert_relative_eq!(mf.alpha.a11, m.alpha.a11);
    }

    #[test]
    fn mode_constants_examples() {
        let p = GermParams::isotropic(0.8165).unwrap();
        let c = mode_constants(ModeIndex::new(0, 0), p, 1.0).unwrap();
        assert_relative_eq!(c.dbar[0], 1.0 / (2.0 * 0.8165), max_relative = 1e-12);
        let c2 = mode_constants(ModeIndex::new(4, 0), p, 1.0).unwrap();
        assert_relative_eq!(c2.dbar[0], 9.0 / (2.0 * 0.8165), max_relative = 1e-12);
        assert_relative_eq!(c2.dbar[1], 1.0 / (2.0 * 0.8165), max_relative = 1e-12);
        assert_relative_eq!(c2.dbar[0], 5.51133, epsilon = 1e-4);
        assert!(mode_constants(ModeIndex::new(1, 0), p, 1.0).is_err());
    }

    #[test]
    fn mode_moments_reduce_to_initial_constants() {
        let beta = testutil::beta_opt();
        let params = GermParams::isotropic(beta).unwrap();
        let ee = testutil::section6_ee(0.85, 1.0, 0.01, 5.0);
        let traj = integrate_germ(&ee, params, 5.0, 1e-3).unwrap();
        for (m1, m2) in [(0usize, 0usize), (1, 0), (1, 2), (2, 2)] {
            let n = ModeIndex::new(2 * m1, 2 * m2);
            let mm = mode_moments(n, &traj, &ee, 0.0, 1.0).unwrap();
            let c = mode_constants(n, params, 1.0).unwrap();
            assert_relative_eq!(mm.sigma, c.c2, max_relative = 1e-12);
            let alpha = mm.alpha.unwrap();
            assert_relative_eq!(alpha[0], 0.01 / beta * (1.0 + 4.0 * m1 as f64), max_relative = 1e-12);
            assert_relative_eq!(alpha[1], 0.01 / beta * (1.0 + 4.0 * m2 as f64), max_relative = 1e-12);
        }
        // odd modes carry no mass
        let odd = mode_moments(ModeIndex::new(1, 2), &traj, &ee, 1.3, 1.0).unwrap();
        assert_eq!(odd.sigma, 0.0);
        assert!(odd.alpha.is_none());
    }
}
