//! Shared fixtures for the in-crate tests: the plasma-relaxation parameter
//! set used throughout the experiments.

use std::sync::Arc;

use crate::coefficients::{CoefficientKind, CoefficientModel};
use crate::ee::{EESolution, MomentState, Sym2};

pub const GAMMA1: f64 = 1.5;
pub const GAMMA2: f64 = 1.0;

pub fn model(kappa: f64, d: f64) -> Arc<CoefficientModel> {
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

/// Closed-form moments of the double-Gaussian initial condition.
pub fn double_gaussian_moments(eps: f64, d: f64) -> MomentState {
    let sigma = 2.0 * std::f64::consts::PI * (GAMMA1 - eps * GAMMA2);
    let a = d * (GAMMA1 * GAMMA1 - eps * GAMMA2 * GAMMA2) / (GAMMA1 - eps * GAMMA2);
    MomentState {
        sigma,
        center: [0.0, 0.0],
        alpha: Sym2::diag(a, a),
    }
}

/// Matched EE solution for the double-Gaussian initial condition.
pub fn section6_ee(eps: f64, kappa: f64, d: f64, horizon: f64) -> EESolution {
    EESolution::match_constants(&double_gaussian_moments(eps, d), model(kappa, d), horizon).unwrap()
}

/// Optimal localization parameter for the §-six profile.
pub fn beta_opt() -> f64 {
    1.0 / (GAMMA1 * GAMMA2).sqrt()
}
