//! Small numerical building blocks: compensated summation, cubic-Hermite
//! dense meshes, adaptive cumulative quadrature, a fixed-step RK4 driver
//! with dense output, and a golden-section minimizer.

/// Kahan–Babuška compensated accumulator. Grid reductions here routinely
/// cancel twelve orders of magnitude, so plain `sum()` is not enough.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Sum an iterator with compensation.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = Kahan::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Cubic Hermite interpolant on a uniform mesh, built from node values and
/// node derivatives (which the producers get for free from the ODE/integrand
/// right-hand side).
#[derive(Clone, Debug)]
pub struct CubicMesh {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl CubicMesh {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>, derivs: Vec<f64>) -> Self {
        assert_eq!(values.len(), derivs.len());
        assert!(values.len() >= 2 && dt > 0.0);
        Self {
            t0,
            dt,
            values,
            derivs,
        }
    }

    pub fn t_end(&self) -> f64 {
        self.t0 + self.dt * (self.values.len() - 1) as f64
    }

    /// Uniform node spacing.
    pub fn step(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let s = ((t - self.t0) / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let mut i = s.floor() as usize;
        if i >= self.values.len() - 1 {
            i = self.values.len() - 2;
        }
        (i, s - i as f64)
    }

    /// Interpolated value at `t` (clamped to the mesh span).
    pub fn eval(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * self.dt, self.derivs[i + 1] * self.dt);
        let u2 = u * u;
        let u3 = u2 * u;
        (2.0 * u3 - 3.0 * u2 + 1.0) * y0
            + (u3 - 2.0 * u2 + u) * d0
            + (-2.0 * u3 + 3.0 * u2) * y1
            + (u3 - u2) * d1
    }

    /// Derivative of the interpolant at `t`.
    pub fn eval_deriv(&self, t: f64) -> f64 {
        let (i, u) = self.locate(t);
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (d0, d1) = (self.derivs[i] * self.dt, self.derivs[i + 1] * self.dt);
        let u2 = u * u;
        ((6.0 * u2 - 6.0 * u) * y0
            + (3.0 * u2 - 4.0 * u + 1.0) * d0
            + (-6.0 * u2 + 6.0 * u) * y1
            + (3.0 * u2 - 2.0 * u) * d1)
            / self.dt
    }
}

/// 5-point Gauss–Legendre nodes/weights on [-1, 1].
const GL5_X: [f64; 5] = [
    -0.906179845938664,
    -0.5384693101056831,
    0.0,
    0.5384693101056831,
    0.906179845938664,
];
const GL5_W: [f64; 5] = [
    0.23692688505618908,
    0.47862867049936647,
    0.5688888888888889,
    0.47862867049936647,
    0.23692688505618908,
];

fn gl5(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let m = 0.5 * (a + b);
    let mut acc = 0.0;
    for i in 0..5 {
        acc += GL5_W[i] * f(m + h * GL5_X[i]);
    }
    acc * h
}

/// Adaptive integral of `f` over [a, b]: 5-point Gauss–Legendre with interval
/// halving until the refinement changes less than the tolerance.
pub fn integrate(f: &impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        abs_tol: f64,
        rel_tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let left = gl5(f, a, m);
        let right = gl5(f, m, b);
        let err = (left + right - whole).abs();
        if depth >= 20 || err <= abs_tol.max(rel_tol * (left + right).abs()) {
            return left + right;
        }
        recurse(f, a, m, left, 0.5 * abs_tol, rel_tol, depth + 1)
            + recurse(f, m, b, right, 0.5 * abs_tol, rel_tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(f, a, b, gl5(f, a, b), abs_tol, rel_tol, 0)
}

/// Cumulative integral t ↦ ∫₀ᵗ f on [0, t_end] as a cubic-Hermite mesh with
/// derivative nodes f(tᵢ). The mesh is refined until the interpolation error
/// probed at interval midpoints drops below `tol` (the cubic-Hermite error
/// scales as h⁴, so the required node count is estimated from the first
/// probe instead of blind doubling).
pub fn cumulative_integral(f: &impl Fn(f64) -> f64, t_end: f64, tol: f64) -> CubicMesh {
    assert!(t_end > 0.0);
    let inner_abs = (tol * 1e-2).max(1e-14);
    let build = |n: usize| -> CubicMesh {
        let dt = t_end / n as f64;
        let mut values = Vec::with_capacity(n + 1);
        let mut derivs = Vec::with_capacity(n + 1);
        let mut acc = Kahan::new();
        values.push(0.0);
        derivs.push(f(0.0));
        for i in 0..n {
            let a = i as f64 * dt;
            acc.add(integrate(f, a, a + dt, inner_abs, 1e-11));
            values.push(acc.value());
            derivs.push(f(a + dt));
        }
        CubicMesh::new(0.0, dt, values, derivs)
    };
    let probe_error = |mesh: &CubicMesh| -> f64 {
        let n = mesh.len() - 1;
        let dt = mesh.step();
        let mut worst: f64 = 0.0;
        let probes = n.min(16);
        for p in 0..probes {
            let i = p * n / probes;
            let tm = (i as f64 + 0.5) * dt;
            let direct = mesh.values[i] + integrate(f, i as f64 * dt, tm, inner_abs, 1e-11);
            worst = worst.max((mesh.eval(tm) - direct).abs());
        }
        worst
    };
    let mut n = 64usize;
    let mut mesh = build(n);
    for _ in 0..6 {
        let err = probe_error(&mesh);
        if err <= tol || n >= 1 << 14 {
            break;
        }
        let factor = (err / tol).powf(0.25).ceil().clamp(2.0, 16.0) as usize;
        n = (n * factor).min(1 << 14);
        mesh = build(n);
    }
    mesh
}

/// Fixed-step classical RK4 with stored node values and right-hand sides,
/// giving free cubic-Hermite dense output.
#[derive(Clone, Debug)]
pub struct Rk4Dense<const N: usize> {
    pub dt: f64,
    pub values: Vec<[f64; N]>,
    pub derivs: Vec<[f64; N]>,
}

impl<const N: usize> Rk4Dense<N> {
    /// Integrate y' = f(t, y) from y0 on [0, T] with `steps` uniform steps.
    /// Returns None if the state stops being finite (blow-up), together with
    /// the last good index encoded in the partial result — callers that need
    /// the failure time should use [`Rk4Dense::integrate_checked`].
    pub fn integrate(
        f: &impl Fn(f64, &[f64; N]) -> [f64; N],
        y0: [f64; N],
        t_end: f64,
        steps: usize,
    ) -> Result<Self, f64> {
        assert!(steps > 0 && t_end > 0.0);
        let dt = t_end / steps as f64;
        let mut values = Vec::with_capacity(steps + 1);
        let mut derivs = Vec::with_capacity(steps + 1);
        let mut y = y0;
        values.push(y);
        derivs.push(f(0.0, &y));
        for i in 0..steps {
            let t = i as f64 * dt;
            let k1 = derivs[i];
            let k2 = f(t + 0.5 * dt, &add(&y, &k1, 0.5 * dt));
            let k3 = f(t + 0.5 * dt, &add(&y, &k2, 0.5 * dt));
            let k4 = f(t + dt, &add(&y, &k3, dt));
            for j in 0..N {
                y[j] += dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(t + dt);
            }
            values.push(y);
            derivs.push(f(t + dt, &y));
        }
        Ok(Self { dt, values, derivs })
    }

    pub fn t_end(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    /// Dense state at `t` (clamped to the integration span).
    pub fn state(&self, t: f64) -> [f64; N] {
        let s = (t / self.dt).clamp(0.0, (self.values.len() - 1) as f64);
        let mut i = s.floor() as usize;
        if i >= self.values.len() - 1 {
            i = self.values.len() - 2;
        }
        let u = s - i as f64;
        let u2 = u * u;
        let u3 = u2 * u;
        let (h00, h10, h01, h11) = (
            2.0 * u3 - 3.0 * u2 + 1.0,
            u3 - 2.0 * u2 + u,
            -2.0 * u3 + 3.0 * u2,
            u3 - u2,
        );
        let mut out = [0.0; N];
        for j in 0..N {
            out[j] = h00 * self.values[i][j]
                + h10 * self.derivs[i][j] * self.dt
                + h01 * self.values[i + 1][j]
                + h11 * self.derivs[i + 1][j] * self.dt;
        }
        out
    }

    /// Times where component `j` changes sign, refined by bisection on the
    /// dense interpolant.
    pub fn zero_crossings(&self, j: usize) -> Vec<f64> {
        let mut out = Vec::new();
        for i in 0..self.values.len() - 1 {
            let (a, b) = (self.values[i][j], self.values[i + 1][j]);
            if a == 0.0 {
                out.push(i as f64 * self.dt);
            } else if a * b < 0.0 {
                let (mut lo, mut hi) = (i as f64 * self.dt, (i + 1) as f64 * self.dt);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.state(mid)[j] * a <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                out.push(0.5 * (lo + hi));
            }
        }
        out
    }
}

#[inline]
fn add<const N: usize>(y: &[f64; N], k: &[f64; N], h: f64) -> [f64; N] {
    let mut out = *y;
    for j in 0..N {
        out[j] += h * k[j];
    }
    out
}

/// Golden-section minimum of a unimodal function on [a, b].
pub fn golden_min(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.6180339887498949;
    let (mut a, mut b) = (a, b);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn integrate_exp() {
        let v = integrate(&|x: f64| x.exp(), 0.0, 1.0, 1e-14, 1e-14);
        assert_relative_eq!(v, 1f64.exp() - 1.0, max_relative = 1e-13);
    }

    #[test]
    fn cumulative_matches_closed_form() {
        let mesh = cumulative_integral(&|x: f64| (-x).exp(), 5.0, 1e-12);
        for &t in &[0.3, 1.7, 4.999] {
            assert_relative_eq!(mesh.eval(t), 1.0 - (-t).exp(), epsilon = 1e-11);
        }
        assert_relative_eq!(mesh.eval_deriv(2.0), (-2.0f64).exp(), epsilon = 1e-9);
    }

    #[test]
    fn rk4_harmonic_order() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let errs: Vec<f64> = [200usize, 400]
            .iter()
            .map(|&n| {
                let sol = Rk4Dense::integrate(&f, [1.0, 0.0], 10.0, n).unwrap();
                (sol.values[n][0] - 10f64.cos()).abs()
            })
            .collect();
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 3.8, "observed order {order}");
    }

    #[test]
    fn rk4_dense_and_crossings() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let sol = Rk4Dense::integrate(&f, [1.0, 0.0], 7.0, 7000).unwrap();
        assert_relative_eq!(sol.state(1.234)[0], 1.234f64.cos(), epsilon = 1e-9);
        let zeros = sol.zero_crossings(0);
        assert_eq!(zeros.len(), 2);
        assert_relative_eq!(zeros[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn kahan_beats_naive() {
        let xs: Vec<f64> = (0..100_000).map(|i| 1e8 + (i as f64) * 1e-8).collect();
        let naive: f64 = xs.iter().sum();
        let comp = kahan_sum(xs.iter().copied());
        let exact = 1e8 * 1e5 + (0..100_000).map(|i| i as f64).sum::<f64>() * 1e-8;
        assert!((comp - exact).abs() <= (naive - exact).abs());
        assert_relative_eq!(comp, exact, max_relative = 1e-15);
    }

    #[test]
    fn golden_finds_parabola_min() {
        let m = golden_min(&|x: f64| (x - 0.3).powi(2), -2.0, 2.0, 1e-10);
        assert_relative_eq!(m, 0.3, epsilon = 1e-8);
    }
}
