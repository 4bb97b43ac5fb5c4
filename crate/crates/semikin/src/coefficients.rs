//! Time-dependent equation coefficients a(t), b(t), D̃ₐ(t), the nonlocality
//! kernel p(r₁, r₂, μ), and the integral primitives built on them
//! (∫a, ∫D̃ₐ and the damping factor ϖ(t, τ) = exp(−2∫_τ^t a)).

use crate::error::Error;
use crate::Result;

/// Plasma-relaxation coefficient family or a user-supplied table.
#[derive(Clone, Debug)]
pub enum CoefficientKind {
    /// a(t) = A₁e^{−t/τₐ}, D̃ₐ(t) = d₁e^{−t/τ_d}, b(t) = B₂ + (B₁−B₂)e^{−t/τ_b}.
    ExponentialRelaxation {
        a1: f64,
        tau_a: f64,
        d1: f64,
        tau_d: f64,
        b1: f64,
        b2: f64,
        tau_b: f64,
    },
    /// Sampled (t, a, b, D̃ₐ) rows interpolated by monotone piecewise cubics.
    UserTabulated(Table),
}

/// The coefficient model of the kinetic equation: the triple (a, b, D̃ₐ)
/// plus the kernel width μ, the nonlinearity strength κ and the small
/// diffusion parameter D. Immutable after construction; all evaluations are
/// pure.
#[derive(Clone, Debug)]
pub struct CoefficientModel {
    pub kind: CoefficientKind,
    /// Kernel nonlocality width μ > 0.
    pub mu: f64,
    /// Nonlinearity strength κ ≥ 0.
    pub kappa: f64,
    /// Small diffusion parameter D > 0.
    pub d: f64,
}

impl CoefficientModel {
    pub fn new(kind: CoefficientKind, mu: f64, kappa: f64, d: f64) -> Result<Self> {
        if !(mu > 0.0) {
            return Err(Error::Domain(format!("kernel width mu must be > 0, got {mu}")));
        }
        if !(kappa >= 0.0) {
            return Err(Error::Domain(format!("kappa must be >= 0, got {kappa}")));
        }
        if !(d > 0.0) {
            return Err(Error::Domain(format!("diffusion parameter D must be > 0, got {d}")));
        }
        if let CoefficientKind::ExponentialRelaxation {
            tau_a, tau_d, tau_b, ..
        } = kind
        {
            for (name, tau) in [("tau_a", tau_a), ("tau_d", tau_d), ("tau_b", tau_b)] {
                if !(tau > 0.0) {
                    return Err(Error::Domain(format!("{name} must be > 0, got {tau}")));
                }
            }
        }
        Ok(Self { kind, mu, kappa, d })
    }

    fn check_t(t: f64) -> Result<()> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::Domain(format!("time must be >= 0, got {t}")));
        }
        Ok(())
    }

    /// Growth-rate coefficient a(t).
    pub fn eval_a(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(match &self.kind {
            CoefficientKind::ExponentialRelaxation { a1, tau_a, .. } => a1 * (-t / tau_a).exp(),
            CoefficientKind::UserTabulated(tab) => tab.a.eval(t)?,
        })
    }

    /// Recombination-rate coefficient b(t).
    pub fn eval_b(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(match &self.kind {
            CoefficientKind::ExponentialRelaxation { b1, b2, tau_b, .. } => {
                b2 + (b1 - b2) * (-t / tau_b).exp()
            }
            CoefficientKind::UserTabulated(tab) => tab.b.eval(t)?,
        })
    }

    /// Scaled ambipolar diffusion coefficient D̃ₐ(t).
    pub fn eval_diffusion(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(match &self.kind {
            CoefficientKind::ExponentialRelaxation { d1, tau_d, .. } => d1 * (-t / tau_d).exp(),
            CoefficientKind::UserTabulated(tab) => tab.diff.eval(t)?,
        })
    }

    /// ∫₀ᵗ a(ζ) dζ.
    pub fn int_a(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(match &self.kind {
            CoefficientKind::ExponentialRelaxation { a1, tau_a, .. } => {
                a1 * tau_a * (1.0 - (-t / tau_a).exp())
            }
            CoefficientKind::UserTabulated(tab) => tab.a.integral(t)?,
        })
    }

    /// ∫₀ᵗ D̃ₐ(τ) dτ, the accumulated spreading that drives d(t).
    pub fn int_diffusion(&self, t: f64) -> Result<f64> {
        Self::check_t(t)?;
        Ok(match &self.kind {
            CoefficientKind::ExponentialRelaxation { d1, tau_d, .. } => {
                d1 * tau_d * (1.0 - (-t / tau_d).exp())
            }
            CoefficientKind::UserTabulated(tab) => tab.diff.integral(t)?,
        })
    }

    /// ϖ(t, τ) = exp(−2 ∫_τ^t a(ζ) dζ); ϖ(t, t) = 1 and
    /// ϖ(t, s)·ϖ(s, τ) = ϖ(t, τ).
    pub fn varpi(&self, t: f64, tau: f64) -> Result<f64> {
        Ok((-2.0 * (self.int_a(t)? - self.int_a(tau)?)).exp())
    }
}

/// Gaussian interaction kernel p(r₁, r₂, μ) = exp(−(|r₁|² + |r₂|²)/2μ²);
/// values in (0, 1], peak 1 at r₁ = r₂ = 0.
pub fn kernel_p(r1: [f64; 2], r2: [f64; 2], mu: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("kernel width mu must be > 0, got {mu}")));
    }
    let q = r1[0] * r1[0] + r1[1] * r1[1] + r2[0] * r2[0] + r2[1] * r2[1];
    Ok((-q / (2.0 * mu * mu)).exp())
}

/// Sampled coefficient table with monotone cubic interpolants per column.
#[derive(Clone, Debug)]
pub struct Table {
    pub a: Pchip,
    pub b: Pchip,
    pub diff: Pchip,
}

impl Table {
    /// Build from rows (t, a, b, D̃ₐ). The time column must start at 0 and
    /// increase strictly; evaluation beyond the last knot is an error.
    pub fn new(rows: &[(f64, f64, f64, f64)]) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Domain(
                "coefficient table needs at least 3 rows".into(),
            ));
        }
        if rows[0].0 != 0.0 {
            return Err(Error::Domain(format!(
                "coefficient table must start at t = 0, got {}",
                rows[0].0
            )));
        }
        let t: Vec<f64> = rows.iter().map(|r| r.0).collect();
        for w in t.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::Domain(
                    "coefficient table times must increase strictly".into(),
                ));
            }
        }
        Ok(Self {
            a: Pchip::new(t.clone(), rows.iter().map(|r| r.1).collect())?,
            b: Pchip::new(t.clone(), rows.iter().map(|r| r.2).collect())?,
            diff: Pchip::new(t, rows.iter().map(|r| r.3).collect())?,
        })
    }
}

/// Fritsch–Carlson monotonicity-preserving piecewise cubic with exact
/// segment integrals (a cubic integrates in closed form, so no quadrature
/// is needed for the table primitives).
#[derive(Clone, Debug)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    /// Cumulative integral at the knots.
    cum: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        assert_eq!(x.len(), y.len());
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let slope: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if slope[i - 1] * slope[i] <= 0.0 {
                d[i] = 0.0;
            } else {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / slope[i - 1] + w2 / slope[i]);
            }
        }
        d[0] = edge_derivative(h[0], h.get(1).copied().unwrap_or(h[0]), slope[0], slope.get(1).copied().unwrap_or(slope[0]));
        let m = n - 1;
        d[m] = edge_derivative(
            h[m - 1],
            h.get(m.wrapping_sub(2)).copied().unwrap_or(h[m - 1]),
            slope[m - 1],
            slope.get(m.wrapping_sub(2)).copied().unwrap_or(slope[m - 1]),
        );
        let mut cum = vec![0.0; n];
        for i in 0..n - 1 {
            cum[i + 1] = cum[i] + segment_integral(h[i], y[i], y[i + 1], d[i], d[i + 1], 1.0);
        }
        Ok(Self { x, y, d, cum })
    }

    fn segment(&self, t: f64) -> Result<(usize, f64)> {
        let n = self.x.len();
        if t < self.x[0] - 1e-12 || t > self.x[n - 1] + 1e-12 {
            return Err(Error::Domain(format!(
                "t = {t} outside the tabulated range [{}, {}] (no extrapolation)",
                self.x[0],
                self.x[n - 1]
            )));
        }
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let i = match self
            .x
            .binary_search_by(|v| v.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i - 1,
        };
        Ok((i, t))
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let (i, t) = self.segment(t)?;
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        let (u2, u3) = (u * u, u * u * u);
        Ok((2.0 * u3 - 3.0 * u2 + 1.0) * self.y[i]
            + (u3 - 2.0 * u2 + u) * h * self.d[i]
            + (-2.0 * u3 + 3.0 * u2) * self.y[i + 1]
            + (u3 - u2) * h * self.d[i + 1])
    }

    /// ∫_{x₀}^{t} of the interpolant, exact per cubic segment.
    pub fn integral(&self, t: f64) -> Result<f64> {
        let (i, t) = self.segment(t)?;
        let h = self.x[i + 1] - self.x[i];
        let u = (t - self.x[i]) / h;
        Ok(self.cum[i] + segment_integral(h, self.y[i], self.y[i + 1], self.d[i], self.d[i + 1], u))
    }
}

fn edge_derivative(h0: f64, h1: f64, s0: f64, s1: f64) -> f64 {
    // three-point estimate with the usual monotonicity clamps
    let d = ((2.0 * h0 + h1) * s0 - h0 * s1) / (h0 + h1);
    if d * s0 <= 0.0 {
        0.0
    } else if s0 * s1 <= 0.0 && d.abs() > 3.0 * s0.abs() {
        3.0 * s0
    } else {
        d
    }
}

/// ∫₀^{uh} of a Hermite segment (y0, y1 values; d0, d1 endpoint slopes).
fn segment_integral(h: f64, y0: f64, y1: f64, d0: f64, d1: f64, u: f64) -> f64 {
    let (u2, u3, u4) = (u * u, u * u * u, u * u * u * u);
    let i00 = 0.5 * u4 - u3 + u;
    let i10 = 0.25 * u4 - 2.0 / 3.0 * u3 + 0.5 * u2;
    let i01 = -0.5 * u4 + u3;
    let i11 = 0.25 * u4 - u3 / 3.0;
    h * (y0 * i00 + h * d0 * i10 + y1 * i01 + h * d1 * i11)
}
