use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Policy, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, l2_norm, operator_norm};
use crate::model::{MeanField, PriceBox, Scenario};

/// `z_π(p) = π z(w₁, p) + (1 − π) z(w₀, p)`.
pub(crate) fn mixed_excess_demand(mf: &dyn MeanField, policy: &Policy, p: &[f64]) -> Vec<f64> {
    let Policy { pi, arms } = *policy;
    let t = mf.excess_demand(arms.treated, p);
    let c = mf.excess_demand(arms.control, p);
    t.iter().zip(c).map(|(t, c)| pi * t + (1.0 - pi) * c).collect()
}

/// `∇_p z_π(p)`, entry `(j, k) = ∂z_j / ∂p_k`.
pub(crate) fn mixed_jacobian(mf: &dyn MeanField, policy: &Policy, p: &[f64]) -> DMatrix<f64> {
    let Policy { pi, arms } = *policy;
    mf.excess_demand_jacobian(arms.treated, p) * pi
        + mf.excess_demand_jacobian(arms.control, p) * (1.0 - pi)
}

fn check_price(price_box: &PriceBox, p: &[f64]) -> Result<()> {
    if p.len() != price_box.dim() {
        return Err(Error::invalid(format!(
            "price has {} components, scenario has {} goods",
            p.len(),
            price_box.dim()
        )));
    }
    if !price_box.contains(p) {
        return Err(Error::invalid(format!(
            "price {p:?} lies outside the box [{:?}, {:?}]",
            price_box.lower, price_box.upper
        )));
    }
    Ok(())
}

/// Expected excess demand of the market at price `p`.
pub fn mean_field_excess_demand(scenario: &Scenario, policy: &Policy, p: &[f64]) -> Result<Vec<f64>> {
    check_price(&scenario.price_box, p)?;
    Ok(mixed_excess_demand(scenario.mean_field().as_ref(), policy, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPrice {
    pub p_star: Vec<f64>,
    /// `‖z_π(p*)‖∞`.
    pub residual: f64,
    pub iterations: usize,
    /// Ratio of the last two fixed-point step lengths.
    pub contraction_estimate: f64,
}

/// Residual below which Newton steps are attempted.
const NEWTON_BASIN: f64 = 1e-3;

/// Damped fixed-point iteration with Newton polish.
pub fn solve_mean_field_price(
    scenario: &Scenario,
    policy: &Policy,
    settings: &SolverSettings,
) -> Result<MeanFieldPrice> {
    settings.validate()?;
    let mf = scenario.mean_field();
    let mf = mf.as_ref();
    let bx = &scenario.price_box;

    let mut p = bx.center();
    let mut z = mixed_excess_demand(mf, policy, &p);
    let mut lambda = settings.damping;
    let mut last_step = f64::NAN;
    let mut ratio = f64::NAN;
    let mut tiny_steps = 0;

    for it in 0..settings.max_iters {
        let r = inf_norm(&z);
        if r <= settings.tolerance {
            return Ok(MeanFieldPrice {
                p_star: p,
                residual: r,
                iterations: it,
                contraction_estimate: ratio,
            });
        }

        if r < NEWTON_BASIN {
            if let Some((q, zq)) = newton_step(mf, policy, bx, &p, r) {
                p = q;
                z = zq;
                continue;
            }
        }

        let mut q: Vec<f64> = p.iter().zip(&z).map(|(p, z)| p + lambda * z).collect();
        bx.clamp(&mut q);
        let zq = mixed_excess_demand(mf, policy, &q);
        // overshoot: the excess demand flipped direction
        if z.iter().zip(&zq).map(|(a, b)| a * b).sum::<f64>() < 0.0 {
            lambda *= 0.5;
        }
        let step = l2_norm(&p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>());
        if last_step > 0.0 {
            ratio = step / last_step;
        }
        last_step = step;
        p = q;
        z = zq;

        let scale = 1.0 + inf_norm(&p);
        if step <= 1e-14 * scale {
            tiny_steps += 1;
        } else {
            tiny_steps = 0;
        }
        // A Monte Carlo mean field of step units has no exact root; the
        // iterate has collapsed onto the jump.
        if tiny_steps >= 20 && !scenario.has_closed_form() {
            return Ok(MeanFieldPrice {
                residual: inf_norm(&z),
                p_star: p,
                iterations: it + 1,
                contraction_estimate: ratio,
            });
        }
    }

    Err(Error::NoConvergence {
        iterations: settings.max_iters,
        residual: inf_norm(&z),
        contraction: ratio,
        last: p,
    })
}

fn newton_step(
    mf: &dyn MeanField,
    policy: &Policy,
    bx: &PriceBox,
    p: &[f64],
    r: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let jac = mixed_jacobian(mf, policy, p);
    let rhs = -DVector::from_column_slice(&mixed_excess_demand(mf, policy, p));
    let dp = jac.lu().solve(&rhs)?;
    let mut t = 1.0;
    for _ in 0..8 {
        let mut q: Vec<f64> = p.iter().zip(dp.iter()).map(|(p, d)| p + t * d).collect();
        bx.clamp(&mut q);
        let zq = mixed_excess_demand(mf, policy, &q);
        if inf_norm(&zq) < r {
            return Some((q, zq));
        }
        t *= 0.5;
    }
    None
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub points: Vec<Vec<f64>>,
    /// `‖I + ∇_p z_π(p)‖₂` at each point.
    pub norms: Vec<f64>,
    pub max_norm: f64,
    /// True iff `max_norm < 1`.
    pub contracting: bool,
}

/// Operator norm of the Jacobian of `f(p) = p + z_π(p)` over a grid.
pub fn check_contraction(
    scenario: &Scenario,
    policy: &Policy,
    grid: &[Vec<f64>],
) -> Result<ContractionReport> {
    let mf = scenario.mean_field();
    let j = scenario.num_goods;
    let mut norms = Vec::with_capacity(grid.len());
    for p in grid {
        check_price(&scenario.price_box, p)?;
        let f = DMatrix::<f64>::identity(j, j) + mixed_jacobian(mf.as_ref(), policy, p);
        norms.push(operator_norm(&f));
    }
    let max_norm = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ContractionReport {
        points: grid.to_vec(),
        norms,
        max_norm,
        contracting: max_norm < 1.0,
    })
}

/// Tensor grid of `per_dim` points per coordinate strictly inside `[lo, hi]`.
pub fn interior_grid(lo: &[f64], hi: &[f64], per_dim: usize) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(l, u)| {
            (0..per_dim)
                .map(|k| l + (k + 1) as f64 / (per_dim + 1) as f64 * (u - l))
                .collect()
        })
        .collect();
    let mut grid = vec![Vec::new()];
    for axis in &axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix: Vec<f64>| {
                axis.iter().map(move |x| {
                    let mut v = prefix.clone();
                    v.push(*x);
                    v
                })
            })
            .collect();
    }
    grid
}
