use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::clearing::{mixed_jacobian, solve_mean_field_price};
use super::{Policy, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{guarded_inverse, inf_norm, operator_norm, rows, to_vec};
use crate::model::{Arms, MeanField, Scenario, TreatmentKind};
use crate::rng::{self, Stream};

const SINGULAR_H_ADVICE: &str =
    "the mean-field excess demand is flat in price here; check the price box and treatment probability";

/// `∇_p z_π(p*)`, `∂z_π/∂π` and `dp*/dπ = −H⁻¹ ∂z_π/∂π`.
pub(crate) fn sensitivity_parts(
    mf: &dyn MeanField,
    policy: &Policy,
    p_star: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let h = mixed_jacobian(mf, policy, p_star);
    let t = mf.excess_demand(policy.arms.treated, p_star);
    let c = mf.excess_demand(policy.arms.control, p_star);
    let dz = DVector::from_iterator(t.len(), t.iter().zip(&c).map(|(t, c)| t - c));
    let h_inv = guarded_inverse(&h, "mean-field excess demand Jacobian", SINGULAR_H_ADVICE)?;
    let dp = -(&h_inv * &dz);
    Ok((h, dz, dp))
}

/// `dp*_π/dπ` at a solved mean-field price.
pub fn price_sensitivity(scenario: &Scenario, policy: &Policy, p_star: &[f64]) -> Result<Vec<f64>> {
    let mf = scenario.mean_field();
    let (_, _, dp) = sensitivity_parts(mf.as_ref(), policy, p_star)?;
    Ok(to_vec(&dp))
}

/// Limits as the perturbation of a continuous policy vanishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEffects {
    pub eta: f64,
    /// Mean-field price when every unit receives `η`.
    pub p_eta: Vec<f64>,
    /// `dp*/dη`.
    pub dp_deta: Vec<f64>,
    /// Direct policy effect `∂y/∂w` at `(η, p*(η))`.
    pub dpe: f64,
    /// Indirect policy effect `∇_p yᵀ dp*/dη`.
    pub ipe: f64,
    /// `dpe + ipe`.
    pub mpe: f64,
    /// Central difference of `η ↦ y(η, p*(η))`, as a cross-check of `mpe`.
    pub mpe_fd: f64,
}

/// Mean-field quantities for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldSolution {
    pub pi: f64,
    pub treated_value: f64,
    pub control_value: f64,
    pub p_star: Vec<f64>,
    pub clearing_residual: f64,
    /// `H = ∇_p z_π(p*)`, row `j` = good `j`.
    pub z_jacobian: Vec<Vec<f64>>,
    /// `‖I + H‖₂` at `p*`.
    pub contraction_at_star: f64,
    pub dz_dpi: Vec<f64>,
    pub dpdpi: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub tau_ade_star: f64,
    pub tau_aie_star: f64,
    /// `γ = H⁻ᵀ ∇_p y_π(p*)`, the population coefficient of `Y` on `Z`.
    pub gamma: Vec<f64>,
    /// `v² = E[(Y_i(W_i, p*) − Z_i(W_i, p*)ᵀγ)²]`.
    pub residual_var: Option<f64>,
    pub sigma2_d: Option<f64>,
    pub sigma2_i: Option<f64>,
    /// Units drawn for the variance oracles.
    pub oracle_samples: usize,
    pub policy_effects: Option<PolicyEffects>,
}

/// Solve the mean field and evaluate all effects and variance oracles.
pub fn true_effects(
    scenario: &Scenario,
    policy: &Policy,
    settings: &SolverSettings,
) -> Result<MeanFieldSolution> {
    let mf = scenario.mean_field();
    let mf = mf.as_ref();
    let Policy { pi, arms } = *policy;
    let solved = solve_mean_field_price(scenario, policy, settings)?;
    let p = solved.p_star;
    let j = p.len();

    let (h, dz, dp) = sensitivity_parts(mf, policy, &p)?;
    let g1 = mf.outcome_gradient(arms.treated, &p);
    let g0 = mf.outcome_gradient(arms.control, &p);
    let grad_y = DVector::from_iterator(j, g1.iter().zip(&g0).map(|(a, b)| pi * a + (1.0 - pi) * b));
    let tau_ade = mf.outcome(arms.treated, &p) - mf.outcome(arms.control, &p);
    let tau_aie = grad_y.dot(&dp);

    let h_inv = guarded_inverse(&h, "mean-field excess demand Jacobian", SINGULAR_H_ADVICE)?;
    let h_inv_t = h_inv.transpose();
    let gamma = &h_inv_t * &grad_y;
    // a = ∇y(w₁) − ∇y(w₀); g = H⁻ᵀ a so that aᵀH⁻¹Z = gᵀZ
    let a = DVector::from_iterator(j, g1.iter().zip(&g0).map(|(a, b)| a - b));
    let g = &h_inv_t * &a;

    let (residual_var, sigma2_d) = if pi > 0.0 && pi < 1.0 && settings.oracle_samples > 1 {
        let o = variance_oracle(scenario, policy, &p, gamma.as_slice(), g.as_slice(), settings);
        (Some(o.0), Some(o.1))
    } else {
        (None, None)
    };
    let sigma2_i = residual_var.map(|v2| dp.norm_squared() * v2);

    let policy_effects = match scenario.treatment {
        TreatmentKind::Continuous { eta, .. } => Some(policy_effects(scenario, eta, settings)?),
        TreatmentKind::Binary => None,
    };

    Ok(MeanFieldSolution {
        pi,
        treated_value: arms.treated,
        control_value: arms.control,
        clearing_residual: solved.residual,
        contraction_at_star: operator_norm(&(DMatrix::identity(j, j) + &h)),
        z_jacobian: rows(&h),
        dz_dpi: to_vec(&dz),
        dpdpi: to_vec(&dp),
        grad_y: to_vec(&grad_y),
        tau_ade_star: tau_ade,
        tau_aie_star: tau_aie,
        gamma: to_vec(&gamma),
        residual_var,
        sigma2_d,
        sigma2_i,
        oracle_samples: settings.oracle_samples,
        policy_effects,
        p_star: p,
    })
}

/// Returns `(v², σ²_D)` by Monte Carlo over freshly drawn units at frozen `p*`.
fn variance_oracle(
    scenario: &Scenario,
    policy: &Policy,
    p: &[f64],
    gamma: &[f64],
    g: &[f64],
    settings: &SolverSettings,
) -> (f64, f64) {
    let Policy { pi, arms } = *policy;
    let mut rng = rng::stream(settings.oracle_seed, Stream::Integration);
    let j = p.len();
    let (mut z1, mut z0) = (vec![0.0; j], vec![0.0; j]);
    let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>();

    let m = settings.oracle_samples;
    let (mut v2, mut r2) = (0.0, 0.0);
    // Welford for Var[T]
    let (mut t_mean, mut t_m2) = (0.0, 0.0);
    for k in 0..m {
        let unit = scenario.sample_unit(&mut rng);
        let y1 = unit.outcome(arms.treated, p);
        let y0 = unit.outcome(arms.control, p);
        unit.excess_demand(arms.treated, p, &mut z1);
        unit.excess_demand(arms.control, p, &mut z0);
        let (c1, c0) = (dot(g, &z1), dot(g, &z0));
        let r = y1 / pi + y0 / (1.0 - pi) - (c1 - c0);
        let t = y1 - y0 - (pi * c1 + (1.0 - pi) * c0);
        r2 += r * r;
        let delta = t - t_mean;
        t_mean += delta / (k + 1) as f64;
        t_m2 += delta * (t - t_mean);
        let e1 = y1 - dot(&z1, gamma);
        let e0 = y0 - dot(&z0, gamma);
        v2 += pi * e1 * e1 + (1.0 - pi) * e0 * e0;
    }
    let mf = m as f64;
    (v2 / mf, pi * (1.0 - pi) * r2 / mf + t_m2 / mf)
}

/// Step of the central difference in `η` used for `mpe_fd`.
const ETA_STEP: f64 = 1e-4;

fn policy_effects(scenario: &Scenario, eta: f64, settings: &SolverSettings) -> Result<PolicyEffects> {
    let mf = scenario.mean_field();
    let mf = mf.as_ref();
    let at = |e: f64| -> Result<Vec<f64>> {
        let policy = Policy::new(1.0, Arms::around(e, 0.0))?;
        Ok(solve_mean_field_price(scenario, &policy, settings)?.p_star)
    };
    let p = at(eta)?;
    let j = p.len();
    let h = mf.excess_demand_jacobian(eta, &p);
    let h_inv = guarded_inverse(&h, "mean-field excess demand Jacobian", SINGULAR_H_ADVICE)?;
    let dz = DVector::from_vec(mf.excess_demand_dw(eta, &p));
    let dp = -(&h_inv * dz);
    let grad = DVector::from_vec(mf.outcome_gradient(eta, &p));
    let dpe = mf.outcome_dw(eta, &p);
    let ipe = grad.dot(&dp);

    let up = at(eta + ETA_STEP)?;
    let down = at(eta - ETA_STEP)?;
    let mpe_fd = (mf.outcome(eta + ETA_STEP, &up) - mf.outcome(eta - ETA_STEP, &down)) / (2.0 * ETA_STEP);
    if !(mpe_fd.is_finite() && inf_norm(dp.as_slice()).is_finite()) {
        return Err(Error::Internal("non-finite policy effect".into()));
    }
    debug_assert_eq!(dp.len(), j);
    Ok(PolicyEffects {
        eta,
        p_eta: p,
        dp_deta: to_vec(&dp),
        dpe,
        ipe,
        mpe: dpe + ipe,
        mpe_fd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SolverSettings {
        SolverSettings {
            oracle_samples: 200_000,
            ..SolverSettings::default()
        }
    }

    #[test]
    fn tech_effects() {
        let s = Scenario::tech();
        let sol = true_effects(&s, &Policy::binary(0.5).unwrap(), &quick()).unwrap();
        assert!((sol.p_star[0] - 25.0 / 3.0).abs() < 1e-10);
        assert!((sol.tau_ade_star - 2.0 / 9.0).abs() < 1e-10);
        assert!((sol.z_jacobian[0][0] + 0.42).abs() < 1e-10);
        assert!((sol.dz_dpi[0] + 0.4 / 3.0).abs() < 1e-10);
        assert!((sol.dpdpi[0] + 0.1333333333333333 / 0.42).abs() < 1e-9);
        assert!((sol.tau_aie_star - sol.grad_y[0] * sol.dpdpi[0]).abs() < 1e-15);
        assert!((sol.gamma[0] - sol.grad_y[0] / -0.42).abs() < 1e-10);
        assert!((sol.contraction_at_star - 0.58).abs() < 1e-9);
        assert!(sol.sigma2_d.unwrap() > 0.0 && sol.sigma2_i.unwrap() > 0.0);
    }

    #[test]
    fn sensitivity_matches_finite_difference() {
        let s = Scenario::tech();
        let settings = quick();
        let price = |pi: f64| {
            solve_mean_field_price(&s, &Policy::binary(pi).unwrap(), &settings)
                .unwrap()
                .p_star[0]
        };
        let d = 1e-4;
        let fd = (price(0.5 + d) - price(0.5 - d)) / (2.0 * d);
        let dp = price_sensitivity(&s, &Policy::binary(0.5).unwrap(), &[price(0.5)]).unwrap()[0];
        assert!(((dp - fd) / dp).abs() < 1e-4);
    }

    #[test]
    fn no_treatment_pressure_means_no_price_response() {
        let s = Scenario::tech()
            .with_treatment(TreatmentKind::Continuous {
                eta: 0.0,
                xi_scale: 1.0,
                xi_exponent: 1.0 / 3.0,
            })
            .unwrap();
        // both arms identical ⇒ ∂z/∂π = 0
        let policy = Policy::new(0.5, Arms::around(0.3, 0.0)).unwrap();
        let p = solve_mean_field_price(&s, &policy, &quick()).unwrap().p_star;
        let dp = price_sensitivity(&s, &policy, &p).unwrap();
        assert_eq!(dp, vec![0.0]);
    }

    #[test]
    fn continuous_tech_policy_effects() {
        // With subsidy w the multiplier is m = 1 + 0.2 w and
        // p*(w) = (12 + 5m)/(1 + m); y = m (p − 5)²/10.
        let s = Scenario::tech()
            .with_treatment(TreatmentKind::Continuous {
                eta: 0.5,
                xi_scale: 1.0,
                xi_exponent: 1.0 / 3.0,
            })
            .unwrap();
        let sol = true_effects(&s, &Policy::for_scenario(&s, 0.5, 1000).unwrap(), &quick()).unwrap();
        let pe = sol.policy_effects.unwrap();
        let y = |w: f64| {
            let m = 1.0 + 0.2 * w;
            let p = (12.0 + 5.0 * m) / (1.0 + m);
            m * (p - 5.0) * (p - 5.0) / 10.0
        };
        let d = 1e-5;
        let mpe = (y(0.5 + d) - y(0.5 - d)) / (2.0 * d);
        assert!((pe.mpe - mpe).abs() < 1e-6, "{} vs {mpe}", pe.mpe);
        assert!((pe.mpe_fd - mpe).abs() < 1e-6);
        assert!((pe.dpe + pe.ipe - pe.mpe).abs() < 1e-15);
    }
}
