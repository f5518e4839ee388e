//! Point estimates, plug-in variances and confidence intervals from one
//! experiment.
//!
//! Orientation: regressions on the perturbations return `J × K` matrices,
//! so `delta_z_hat[(k, j)]` estimates `∂z_j/∂p_k`. Its transpose `Ĥ`
//! estimates the Jacobian `∇_p z` (row = good). The indirect effect is
//! `−Δ̂_yᵀ Ĥ⁻¹ τ̂_z = −γ̂ᵀ τ̂_z` with `γ̂ = Δ̂_z⁻¹ Δ̂_y`, the IV coefficient of
//! `Y` on `Z` instrumented by `U`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::experiment::{check_probability, ExperimentDataset};
use crate::linalg::{guarded_inverse, rows, to_vec};

const SINGULAR_DZ_ADVICE: &str = "increase the perturbation size h_n or the sample size n";

/// Horvitz-Thompson contrast `(1/n) Σ [W_i v_i / π − (1 − W_i) v_i / (1 − π)]`
/// of every column of `values`.
pub fn ht_estimate(values: &DMatrix<f64>, treated: &[bool], pi: f64) -> Result<Vec<f64>> {
    check_probability(pi)?;
    if values.nrows() != treated.len() {
        return Err(Error::invalid(format!(
            "{} rows of values but {} treatment indicators",
            values.nrows(),
            treated.len()
        )));
    }
    let n = treated.len() as f64;
    let weights: Vec<f64> = treated.iter().map(|t| signed_weight(*t, pi)).collect();
    Ok((0..values.ncols())
        .map(|c| values.column(c).iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>() / n)
        .collect())
}

#[inline]
fn signed_weight(treated: bool, pi: f64) -> f64 {
    if treated {
        1.0 / pi
    } else {
        -1.0 / (1.0 - pi)
    }
}

#[inline]
fn literal_weight(treated: bool, pi: f64) -> f64 {
    if treated {
        1.0 / pi
    } else {
        1.0 / (1.0 - pi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    All,
    Treated,
    Control,
}

/// Least squares `(UᵀU)⁻¹ Uᵀ targets` over the chosen units.
pub fn regress_on_perturbations(
    targets: &DMatrix<f64>,
    u: &DMatrix<f64>,
    treated: &[bool],
    subset: Subset,
) -> Result<DMatrix<f64>> {
    let n = u.nrows();
    if targets.nrows() != n || treated.len() != n {
        return Err(Error::invalid("targets, perturbations and treatments must have the same rows"));
    }
    let keep: Vec<usize> = (0..n)
        .filter(|&i| match subset {
            Subset::All => true,
            Subset::Treated => treated[i],
            Subset::Control => !treated[i],
        })
        .collect();
    let uu = u.select_rows(&keep);
    let tt = targets.select_rows(&keep);
    if let Some(x) = sign_design_solve(&uu, &tt)? {
        return Ok(x);
    }
    let j = u.ncols();
    let gram = uu.transpose() * &uu;
    let rank = gram.rank(1e-12 * gram.amax().max(f64::MIN_POSITIVE));
    if rank < j {
        return Err(Error::RankDeficient { rank, dim: j });
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient { rank, dim: j })?;
    Ok(chol.solve(&(uu.transpose() * tt)))
}

/// Least squares for a design whose entries are all `±h`.
///
/// With `U = h S` the normal equations become `G X = Sᵀ (T / h)` for the
/// integer matrix `G = SᵀS`, solved through its exact adjugate. Regressing
/// `U` on itself then returns the identity exactly. `None` if `U` is not of
/// this form.
fn sign_design_solve(u: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let h = match u.iter().next() {
        Some(v) if *v != 0.0 && v.is_finite() => v.abs(),
        _ => return Ok(None),
    };
    if u.iter().any(|v| v.abs() != h) {
        return Ok(None);
    }
    let (n, j) = u.shape();
    let sign = |i: usize, k: usize| if u[(i, k)] > 0.0 { 1i128 } else { -1i128 };
    let mut gram = vec![vec![0i128; j]; j];
    for i in 0..n {
        for a in 0..j {
            for b in 0..j {
                gram[a][b] += sign(i, a) * sign(i, b);
            }
        }
    }
    let Some((adj, det)) = adjugate(&gram) else {
        let g = DMatrix::from_fn(j, j, |a, b| gram[a][b] as f64);
        return Err(Error::RankDeficient {
            rank: g.rank(0.5),
            dim: j,
        });
    };
    // R = Sᵀ (T / h)
    let mut r = DMatrix::<f64>::zeros(j, targets.ncols());
    for i in 0..n {
        for a in 0..j {
            let s = sign(i, a) as f64;
            for c in 0..targets.ncols() {
                r[(a, c)] += s * (targets[(i, c)] / h);
            }
        }
    }
    let det = det as f64;
    Ok(Some(DMatrix::from_fn(j, targets.ncols(), |a, c| {
        (0..j).map(|k| adj[a][k] as f64 * r[(k, c)]).sum::<f64>() / det
    })))
}

/// Exact determinant by Bareiss fraction-free elimination.
fn bareiss_det(mut m: Vec<Vec<i128>>) -> i128 {
    let j = m.len();
    if j == 0 {
        return 1;
    }
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..j - 1 {
        let Some(p) = (k..j).find(|&r| m[r][k] != 0) else {
            return 0;
        };
        if p != k {
            m.swap(p, k);
            sign = -sign;
        }
        for r in k + 1..j {
            for c in k + 1..j {
                m[r][c] = (m[r][c] * m[k][k] - m[r][k] * m[k][c]) / prev;
            }
        }
        prev = m[k][k];
    }
    sign * m[j - 1][j - 1]
}

/// `(adj(G), det(G))` from exact cofactors; `None` if `G` is singular.
fn adjugate(g: &[Vec<i128>]) -> Option<(Vec<Vec<i128>>, i128)> {
    let j = g.len();
    let det = bareiss_det(g.to_vec());
    if det == 0 {
        return None;
    }
    let minor = |skip_r: usize, skip_c: usize| -> Vec<Vec<i128>> {
        (0..j)
            .filter(|&r| r != skip_r)
            .map(|r| (0..j).filter(|&c| c != skip_c).map(|c| g[r][c]).collect())
            .collect()
    };
    let adj = (0..j)
        .map(|a| {
            (0..j)
                .map(|b| {
                    let cof = bareiss_det(minor(b, a));
                    if (a + b) % 2 == 0 {
                        cof
                    } else {
                        -cof
                    }
                })
                .collect()
        })
        .collect();
    Some((adj, det))
}

/// How the direct-effect variance is weighted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceForm {
    /// Weight `W/π − (1 − W)/(1 − π)`: the variance of the HT influence function.
    Signed,
    /// Weight `W/π + (1 − W)/(1 − π)` as printed in the estimator display.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    /// Confidence level of the intervals.
    pub level: f64,
    pub variance_form: VarianceForm,
    /// Build the indirect-effect interval from the second-order corrected variance.
    pub corrected_ci: bool,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            level: 0.95,
            variance_form: VarianceForm::Signed,
            corrected_ci: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Rescaled effects of a continuous policy perturbed by `±ξ_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyEstimates {
    pub xi: f64,
    pub dpe: f64,
    pub ipe: f64,
    /// `dpe + ipe`.
    pub mpe: f64,
    /// Estimated `dp*/dη`.
    pub dp_deta: Vec<f64>,
}

/// Every estimate and intermediate of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub pi: f64,
    pub h_n: f64,
    pub xi_n: Option<f64>,
    pub p_tilde: Vec<f64>,
    pub clearing_residual: f64,
    pub tau_ade_hat: f64,
    pub tau_aie_hat: f64,
    pub tau_z_ht: Vec<f64>,
    pub delta_y_hat: Vec<f64>,
    /// Row `k` = price `k`, column `j` = good `j`.
    pub delta_z_hat: Vec<Vec<f64>>,
    pub delta_y1_hat: Vec<f64>,
    pub delta_y0_hat: Vec<f64>,
    pub delta_z1_hat: Vec<Vec<f64>>,
    pub delta_z0_hat: Vec<Vec<f64>>,
    pub gamma_hat: Vec<f64>,
    /// `Ĥ⁻¹ τ̂_z`, an estimate of `−dp*/dπ`.
    pub b_hat: Vec<f64>,
    /// `−b̂`.
    pub dpdpi_hat: Vec<f64>,
    pub v2_hat: f64,
    pub sigma2_d_hat: f64,
    pub sigma2_i_hat: f64,
    pub sigma2_i_corrected: f64,
    pub level: f64,
    pub variance_form: VarianceForm,
    pub corrected_ci: bool,
    pub ci_ade: Interval,
    pub ci_aie: Interval,
    pub policy: Option<PolicyEstimates>,
}

/// Minimum units per arm.
const MIN_ARM: usize = 2;

fn check_arms(treated: &[bool], j: usize) -> Result<()> {
    let t = treated.iter().filter(|x| **x).count();
    let c = treated.len() - t;
    let required = MIN_ARM.max(j);
    if t < required {
        return Err(Error::DegenerateArm {
            arm: "treated",
            count: t,
            required,
        });
    }
    if c < required {
        return Err(Error::DegenerateArm {
            arm: "control",
            count: c,
            required,
        });
    }
    Ok(())
}

/// Core quantities shared by the individual estimators.
struct Fit {
    treated: Vec<bool>,
    y: DMatrix<f64>,
    tau_z: DVector<f64>,
    delta_y: DVector<f64>,
    delta_z: DMatrix<f64>,
    h_inv: DMatrix<f64>,
    gamma: DVector<f64>,
    b: DVector<f64>,
}

impl Fit {
    fn new(data: &ExperimentDataset) -> Result<Self> {
        let treated = data.treated();
        check_arms(&treated, data.num_goods)?;
        let y = DMatrix::from_column_slice(data.n, 1, &data.y);
        let tau_z = DVector::from_vec(ht_estimate(&data.z, &treated, data.pi)?);
        let delta_y = regress_on_perturbations(&y, &data.u, &treated, Subset::All)?.column(0).into_owned();
        let delta_z = regress_on_perturbations(&data.z, &data.u, &treated, Subset::All)?;
        let h_inv = guarded_inverse(&delta_z.transpose(), "estimated excess-demand Jacobian", SINGULAR_DZ_ADVICE)?;
        let gamma = h_inv.transpose() * &delta_y;
        let b = &h_inv * &tau_z;
        Ok(Fit {
            treated,
            y,
            tau_z,
            delta_y,
            delta_z,
            h_inv,
            gamma,
            b,
        })
    }

    fn tau_aie(&self) -> f64 {
        -self.delta_y.dot(&self.b)
    }
}

/// `−Δ̂_yᵀ Ĥ⁻¹ τ̂_z` from its ingredients, with `delta_z` in regression
/// orientation (`Ĥ = delta_zᵀ`).
pub fn indirect_from_parts(delta_y: &[f64], delta_z: &DMatrix<f64>, tau_z: &[f64]) -> Result<f64> {
    let j = delta_y.len();
    if delta_z.shape() != (j, j) || tau_z.len() != j {
        return Err(Error::invalid("delta_y, delta_z and tau_z dimensions disagree"));
    }
    let h_inv = guarded_inverse(&delta_z.transpose(), "estimated excess-demand Jacobian", SINGULAR_DZ_ADVICE)?;
    let b = h_inv * DVector::from_column_slice(tau_z);
    Ok(-DVector::from_column_slice(delta_y).dot(&b))
}

/// `τ̂_AIE = −Δ̂_yᵀ Ĥ⁻¹ τ̂_z`.
pub fn indirect_effect(data: &ExperimentDataset) -> Result<f64> {
    Ok(Fit::new(data)?.tau_aie())
}

/// `(Δ̂_y1, Δ̂_y0, Δ̂_z1, Δ̂_z0)`.
type ArmFits = (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>);

/// Arm-specific regressions.
fn arm_regressions(data: &ExperimentDataset, fit: &Fit) -> Result<ArmFits> {
    let t = &fit.treated;
    let y1 = regress_on_perturbations(&fit.y, &data.u, t, Subset::Treated)?.column(0).into_owned();
    let y0 = regress_on_perturbations(&fit.y, &data.u, t, Subset::Control)?.column(0).into_owned();
    let z1 = regress_on_perturbations(&data.z, &data.u, t, Subset::Treated)?;
    let z0 = regress_on_perturbations(&data.z, &data.u, t, Subset::Control)?;
    Ok((y1, y0, z1, z0))
}

/// Empirical (1/n) variance.
fn empirical_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Arm factor `−Wπ` (treated) or `(1 − W)(1 − π)` (control) of the price-correction terms.
#[inline]
fn correction_factor(treated: bool, pi: f64) -> f64 {
    if treated {
        -pi
    } else {
        1.0 - pi
    }
}

fn sigma2_d(data: &ExperimentDataset, fit: &Fit, y1: &DVector<f64>, y0: &DVector<f64>, form: VarianceForm) -> f64 {
    let pi = data.pi;
    // âᵀ Ĥ⁻¹ Z_i = gᵀ Z_i
    let g = fit.h_inv.transpose() * (y1 - y0);
    let terms: Vec<f64> = (0..data.n)
        .map(|i| {
            let t = fit.treated[i];
            let c: f64 = (0..data.num_goods).map(|k| g[k] * data.z[(i, k)]).sum();
            let a_hat = correction_factor(t, pi) * c;
            let weight = match form {
                VarianceForm::Signed => signed_weight(t, pi),
                VarianceForm::Literal => literal_weight(t, pi),
            };
            weight * (data.y[i] + a_hat)
        })
        .collect();
    empirical_variance(&terms)
}

/// Plug-in variance of the direct effect.
pub fn variance_direct(data: &ExperimentDataset, form: VarianceForm) -> Result<f64> {
    let fit = Fit::new(data)?;
    let (y1, y0, _, _) = arm_regressions(data, &fit)?;
    Ok(sigma2_d(data, &fit, &y1, &y0, form))
}

/// `v̂² = (1/n) Σ (Y_i − Z_iᵀγ̂)²`.
fn v2(data: &ExperimentDataset, fit: &Fit) -> f64 {
    let resid = fit.y.column(0) - &data.z * &fit.gamma;
    resid.norm_squared() / data.n as f64
}

/// `γ̂ᵀ Ω̂ γ̂` with `Ω̂ = Var̂[sgn_i (Z_i + B̂_i)]` and
/// `B̂_i = factor_i (Ĥ₁ − Ĥ₀) Ĥ⁻¹ Z_i`.
fn omega_quadratic(data: &ExperimentDataset, fit: &Fit, z1: &DMatrix<f64>, z0: &DMatrix<f64>) -> f64 {
    let pi = data.pi;
    let m = (z1 - z0).transpose() * &fit.h_inv;
    // project onto γ̂ first: γ̂ᵀ Ω̂ γ̂ = Var̂[γ̂ᵀ sgn_i (Z_i + B̂_i)]
    let gm = m.transpose() * &fit.gamma;
    let terms: Vec<f64> = (0..data.n)
        .map(|i| {
            let t = fit.treated[i];
            let zi = data.z.row(i);
            let gz: f64 = (0..data.num_goods).map(|k| fit.gamma[k] * zi[k]).sum();
            let gb: f64 = (0..data.num_goods).map(|k| gm[k] * zi[k]).sum();
            signed_weight(t, pi) * (gz + correction_factor(t, pi) * gb)
        })
        .collect();
    empirical_variance(&terms)
}

/// `(σ̂²_I, σ̃²_I)`: plug-in variance of the indirect effect and its
/// second-order corrected version.
pub fn variance_indirect(data: &ExperimentDataset) -> Result<(f64, f64)> {
    let fit = Fit::new(data)?;
    let (_, _, z1, z0) = arm_regressions(data, &fit)?;
    let plain = fit.b.norm_squared() * v2(data, &fit);
    Ok((plain, plain + data.h_n * data.h_n * omega_quadratic(data, &fit, &z1, &z0)))
}

/// Normal intervals `τ̂_D ± z σ̂_D/√n` and `τ̂_I ± z σ̂_I/(√n h_n)`.
pub fn confidence_intervals(
    tau_d: f64,
    sigma2_d: f64,
    tau_i: f64,
    sigma2_i: f64,
    n: usize,
    h_n: f64,
    level: f64,
) -> Result<(Interval, Interval)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let z = normal_quantile(0.5 + 0.5 * level);
    let rn = (n as f64).sqrt();
    let hd = z * sigma2_d.max(0.0).sqrt() / rn;
    let hi = z * sigma2_i.max(0.0).sqrt() / (rn * h_n);
    Ok((
        Interval {
            lower: tau_d - hd,
            upper: tau_d + hd,
        },
        Interval {
            lower: tau_i - hi,
            upper: tau_i + hi,
        },
    ))
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

/// DPE, IPE and MPE of a continuous design: the binary estimates divided by `2ξ_n`.
pub fn mpe_estimate(report: &EstimateReport) -> Result<PolicyEstimates> {
    let xi = report
        .xi_n
        .ok_or_else(|| Error::invalid("marginal policy effects need a continuous treatment design"))?;
    Ok(policy_estimates(report.tau_ade_hat, report.tau_aie_hat, &report.dpdpi_hat, xi))
}

fn policy_estimates(tau_ade: f64, tau_aie: f64, dpdpi: &[f64], xi: f64) -> PolicyEstimates {
    let dpe = tau_ade / (2.0 * xi);
    let ipe = tau_aie / (2.0 * xi);
    PolicyEstimates {
        xi,
        dpe,
        ipe,
        mpe: dpe + ipe,
        dp_deta: dpdpi.iter().map(|d| d / (2.0 * xi)).collect(),
    }
}

/// Indirect effect from a supply elasticity `κ_s`, a demand elasticity `κ_d`
/// and a direct effect: `κ_s τ / (κ_d − κ_s)`.
pub fn aie_from_elasticities(kappa_s: f64, kappa_d: f64, tau_ade: f64) -> Result<f64> {
    if !(kappa_s.is_finite() && kappa_d.is_finite() && tau_ade.is_finite()) {
        return Err(Error::invalid("elasticities and direct effect must be finite"));
    }
    if kappa_d == kappa_s {
        return Err(Error::invalid(
            "demand and supply elasticities must differ (equal elasticities leave the price response undefined)",
        ));
    }
    Ok(kappa_s * tau_ade / (kappa_d - kappa_s))
}

/// Compute everything from one dataset.
pub fn estimate(data: &ExperimentDataset, options: &EstimatorOptions) -> Result<EstimateReport> {
    check_probability(data.pi)?;
    let fit = Fit::new(data)?;
    let (y1, y0, z1, z0) = arm_regressions(data, &fit)?;
    let tau_ade = ht_estimate(&fit.y, &fit.treated, data.pi)?[0];
    let tau_aie = fit.tau_aie();
    let s2d = sigma2_d(data, &fit, &y1, &y0, options.variance_form);
    let v2_hat = v2(data, &fit);
    let s2i = fit.b.norm_squared() * v2_hat;
    let s2i_c = s2i + data.h_n * data.h_n * omega_quadratic(data, &fit, &z1, &z0);
    let (ci_ade, ci_aie) = confidence_intervals(
        tau_ade,
        s2d,
        tau_aie,
        if options.corrected_ci { s2i_c } else { s2i },
        data.n,
        data.h_n,
        options.level,
    )?;
    let dpdpi: Vec<f64> = fit.b.iter().map(|b| -b).collect();
    let policy = data.xi_n.map(|xi| policy_estimates(tau_ade, tau_aie, &dpdpi, xi));
    Ok(EstimateReport {
        n: data.n,
        pi: data.pi,
        h_n: data.h_n,
        xi_n: data.xi_n,
        p_tilde: data.p_tilde.clone(),
        clearing_residual: data.clearing_residual,
        tau_ade_hat: tau_ade,
        tau_aie_hat: tau_aie,
        tau_z_ht: to_vec(&fit.tau_z),
        delta_y_hat: to_vec(&fit.delta_y),
        delta_z_hat: rows(&fit.delta_z),
        delta_y1_hat: to_vec(&y1),
        delta_y0_hat: to_vec(&y0),
        delta_z1_hat: rows(&z1),
        delta_z0_hat: rows(&z0),
        gamma_hat: to_vec(&fit.gamma),
        b_hat: to_vec(&fit.b),
        dpdpi_hat: dpdpi,
        v2_hat,
        sigma2_d_hat: s2d,
        sigma2_i_hat: s2i,
        sigma2_i_corrected: s2i_c,
        level: options.level,
        variance_form: options.variance_form,
        corrected_ci: options.corrected_ci,
        ci_ade,
        ci_aie,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Arms;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn ht_arithmetic() {
        assert_eq!(ht_estimate(&col(&[3.0, 1.0]), &[true, false], 0.5).unwrap(), vec![2.0]);
        assert_eq!(ht_estimate(&col(&[1.0, 1.0]), &[true, false], 0.5).unwrap(), vec![0.0]);
        assert!(ht_estimate(&col(&[1.0, 1.0]), &[true, false], 0.0).is_err());
    }

    #[test]
    fn two_point_regression() {
        let u = col(&[0.1, -0.1]);
        let d = regress_on_perturbations(&col(&[1.2, 1.0]), &u, &[true, false], Subset::All).unwrap();
        assert!((d[(0, 0)] - 1.0).abs() < 1e-12);
        // a constant perturbation column is fine; a zero one is not
        let z = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, -0.1, 0.0, 0.1, 0.0]);
        assert!(matches!(
            regress_on_perturbations(&col(&[1.0, 2.0, 3.0]), &z, &[true; 3], Subset::All),
            Err(Error::RankDeficient { rank: 1, dim: 2 })
        ));
    }

    #[test]
    fn regression_of_u_on_itself_is_identity() {
        let u = DMatrix::from_row_slice(4, 2, &[0.1, 0.1, -0.1, 0.1, 0.1, -0.1, -0.1, -0.1]);
        let d = regress_on_perturbations(&u, &u, &[true; 4], Subset::All).unwrap();
        assert_eq!(d, DMatrix::identity(2, 2));
    }

    #[test]
    fn exact_adjugate() {
        let g = vec![vec![4, 1, 0], vec![1, 3, -1], vec![0, -1, 2]];
        let (adj, det) = adjugate(&g).unwrap();
        assert_eq!(det, 4 * (6 - 1) - 1 * (2 - 0));
        for r in 0..3 {
            for c in 0..3 {
                let v: i128 = (0..3).map(|k| adj[r][k] * g[k][c]).sum();
                assert_eq!(v, if r == c { det } else { 0 });
            }
        }
        assert!(adjugate(&[vec![1, 2], vec![2, 4]]).is_none());
    }

    #[test]
    fn sign_design_matches_least_squares() {
        let u = DMatrix::from_row_slice(5, 2, &[0.3, 0.3, -0.3, 0.3, 0.3, -0.3, -0.3, -0.3, 0.3, 0.3]);
        let t = DMatrix::from_row_slice(5, 1, &[1.0, 2.0, -1.0, 0.5, 3.0]);
        let exact = sign_design_solve(&u, &t).unwrap().unwrap();
        let ls = (u.transpose() * &u).try_inverse().unwrap() * u.transpose() * &t;
        assert!((exact - ls).amax() < 1e-12);
    }

    #[test]
    fn confidence_interval_arithmetic() {
        let (ci, _) = confidence_intervals(2.0, 1.0, 0.0, 0.0, 100, 0.1, 0.95).unwrap();
        assert!((ci.lower - 1.804).abs() < 1e-3 && (ci.upper - 2.196).abs() < 1e-3);
        let (ci, cj) = confidence_intervals(2.0, 0.0, -1.0, 0.0, 100, 0.1, 0.95).unwrap();
        assert_eq!((ci.lower, ci.upper), (2.0, 2.0));
        assert_eq!((cj.lower, cj.upper), (-1.0, -1.0));
        assert!(confidence_intervals(0.0, 1.0, 0.0, 1.0, 10, 0.1, 1.0).is_err());
    }

    #[test]
    fn elasticities() {
        assert!((aie_from_elasticities(1.8, -1.5, 4.0).unwrap() - 7.2 / -3.3).abs() < 1e-15);
        assert_eq!(aie_from_elasticities(0.0, -1.5, 4.0).unwrap(), 0.0);
        assert_eq!(aie_from_elasticities(1.0, -1.0, 2.0).unwrap(), -1.0);
        assert!(aie_from_elasticities(1.5, 1.5, 4.0).is_err());
    }

    fn synthetic(y: Vec<f64>, z: Vec<f64>, w: Vec<f64>, u: Vec<f64>) -> ExperimentDataset {
        let n = y.len();
        let zm = col(&z);
        ExperimentDataset {
            n,
            num_goods: 1,
            pi: 0.5,
            h_n: 0.1,
            xi_n: None,
            arms: Arms::BINARY,
            seed: 0,
            w,
            u: col(&u),
            y,
            d: zm.map(|v| v.max(0.0)),
            s: zm.map(|v| (-v).max(0.0)),
            z: zm,
            p_tilde: vec![8.0],
            clearing_residual: 0.0,
        }
    }

    #[test]
    fn degenerate_variances() {
        let w = vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        // perturbations sum to zero within each arm
        let u = vec![0.1, 0.1, -0.1, -0.1, 0.1, -0.1, -0.1, 0.1];
        // Z_i ∝ U_i keeps Δ̂_z invertible while Δ̂_{y1} = Δ̂_{y0} = 0 kills Â
        let z: Vec<f64> = u.iter().map(|x| -4.0 * x).collect();
        let data = synthetic(vec![3.0; 8], z.clone(), w.clone(), u.clone());
        assert_eq!(variance_direct(&data, VarianceForm::Literal).unwrap(), 0.0);
        assert!(variance_direct(&data, VarianceForm::Signed).unwrap() > 0.0);

        // Y = γ Z exactly ⇒ v̂² = 0
        let y: Vec<f64> = z.iter().map(|v| 0.5 * v).collect();
        let data = synthetic(y, z, w, u);
        let (plain, corrected) = variance_indirect(&data).unwrap();
        assert!(plain.abs() < 1e-25);
        assert!(corrected >= plain);
    }

    #[test]
    fn degenerate_arm_is_an_error() {
        let data = synthetic(vec![1.0; 4], vec![0.1, -0.1, 0.1, -0.1], vec![1.0; 4], vec![0.1, -0.1, 0.1, -0.1]);
        assert!(matches!(
            estimate(&data, &EstimatorOptions::default()),
            Err(Error::DegenerateArm { arm: "control", .. })
        ));
    }

    #[test]
    fn plug_in_arithmetic() {
        let dz = DMatrix::from_element(1, 1, -0.42);
        let aie = indirect_from_parts(&[0.733333], &dz, &[-0.133333]).unwrap();
        assert!((aie + 0.23280).abs() < 1e-4);
        assert_eq!(indirect_from_parts(&[0.733333], &dz, &[0.0]).unwrap(), 0.0);
        let flat = DMatrix::from_element(1, 1, 0.0);
        assert!(matches!(indirect_from_parts(&[1.0], &flat, &[1.0]), Err(Error::Singular { .. })));
    }

    #[test]
    fn orientation_for_two_goods() {
        // Ĥ = [[-1, 0.5], [0, -2]]; regression orientation stores Ĥᵀ
        let h = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -2.0]);
        let dy = [0.3, -0.7];
        let tz = [0.2, 0.1];
        let expected = -DVector::from_column_slice(&dy).dot(&(h.clone().try_inverse().unwrap() * DVector::from_column_slice(&tz)));
        let got = indirect_from_parts(&dy, &h.transpose(), &tz).unwrap();
        assert!((got - expected).abs() < 1e-15);
    }
}
