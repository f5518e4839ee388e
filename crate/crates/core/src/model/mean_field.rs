//! Population-average (mean-field) outcome and excess demand functions.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::quadrature;
use super::unit::{logistic, Unit};

/// Expected outcome `y(w, p)` and excess demand `z(w, p) = d(w, p) - s(w, p)`
/// of one randomly drawn unit.
pub trait MeanField: Send + Sync + fmt::Debug {
    fn num_goods(&self) -> usize;

    fn outcome(&self, w: f64, p: &[f64]) -> f64;

    fn excess_demand(&self, w: f64, p: &[f64]) -> Vec<f64>;

    /// Step used by the finite-difference derivative defaults.
    fn fd_step(&self) -> f64 {
        1e-5
    }

    /// `J × J` Jacobian, entry `(j, k) = ∂z_j / ∂p_k`.
    fn excess_demand_jacobian(&self, w: f64, p: &[f64]) -> DMatrix<f64> {
        let j = self.num_goods();
        let h = self.fd_step();
        let mut jac = DMatrix::zeros(j, j);
        let mut q = p.to_vec();
        for k in 0..j {
            q[k] = p[k] + h;
            let up = self.excess_demand(w, &q);
            q[k] = p[k] - h;
            let down = self.excess_demand(w, &q);
            q[k] = p[k];
            for r in 0..j {
                jac[(r, k)] = (up[r] - down[r]) / (2.0 * h);
            }
        }
        jac
    }

    fn outcome_gradient(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let h = self.fd_step();
        let mut q = p.to_vec();
        (0..p.len())
            .map(|k| {
                q[k] = p[k] + h;
                let up = self.outcome(w, &q);
                q[k] = p[k] - h;
                let down = self.outcome(w, &q);
                q[k] = p[k];
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `∂y/∂w` at fixed price.
    fn outcome_dw(&self, w: f64, p: &[f64]) -> f64 {
        let h = self.fd_step();
        (self.outcome(w + h, p) - self.outcome(w - h, p)) / (2.0 * h)
    }

    /// `∂z/∂w` at fixed price.
    fn excess_demand_dw(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let h = self.fd_step();
        let up = self.excess_demand(w + h, p);
        let down = self.excess_demand(w - h, p);
        up.iter().zip(down).map(|(a, b)| (a - b) / (2.0 * h)).collect()
    }
}

/// Treatment values of the treated and control arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arms {
    pub treated: f64,
    pub control: f64,
}

impl Arms {
    pub const BINARY: Arms = Arms {
        treated: 1.0,
        control: 0.0,
    };

    /// Arm `η ± ξ` of a continuous policy.
    pub fn around(eta: f64, xi: f64) -> Self {
        Arms {
            treated: eta + xi,
            control: eta - xi,
        }
    }
}

#[inline]
fn uniform_cdf(x: f64, lo: f64, hi: f64) -> f64 {
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// `E[(p - C)^+]` for `C ~ U(lo, hi)`.
fn uniform_call(p: f64, lo: f64, hi: f64) -> f64 {
    if p <= lo {
        0.0
    } else if p >= hi {
        p - 0.5 * (lo + hi)
    } else {
        (p - lo) * (p - lo) / (2.0 * (hi - lo))
    }
}

/// Closed forms for [`super::unit::TechUnit`] with uniform value and cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TechMeanField {
    pub value: (f64, f64),
    pub cost: (f64, f64),
    pub boost: f64,
}

impl TechMeanField {
    fn multiplier(&self, w: f64) -> f64 {
        1.0 + self.boost * w
    }

    fn inside(x: f64, lo: f64, hi: f64) -> f64 {
        if x > lo && x < hi {
            1.0
        } else {
            0.0
        }
    }
}

impl MeanField for TechMeanField {
    fn num_goods(&self) -> usize {
        1
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        self.multiplier(w) * uniform_call(p[0], self.cost.0, self.cost.1)
    }

    fn excess_demand(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let d = 1.0 - uniform_cdf(p[0], self.value.0, self.value.1);
        let s = self.multiplier(w) * uniform_cdf(p[0], self.cost.0, self.cost.1);
        vec![d - s]
    }

    fn excess_demand_jacobian(&self, w: f64, p: &[f64]) -> DMatrix<f64> {
        let (vl, vh) = self.value;
        let (cl, ch) = self.cost;
        let dd = -Self::inside(p[0], vl, vh) / (vh - vl);
        let ds = self.multiplier(w) * Self::inside(p[0], cl, ch) / (ch - cl);
        DMatrix::from_element(1, 1, dd - ds)
    }

    fn outcome_gradient(&self, w: f64, p: &[f64]) -> Vec<f64> {
        vec![self.multiplier(w) * uniform_cdf(p[0], self.cost.0, self.cost.1)]
    }

    fn outcome_dw(&self, _w: f64, p: &[f64]) -> f64 {
        self.boost * uniform_call(p[0], self.cost.0, self.cost.1)
    }

    fn excess_demand_dw(&self, _w: f64, p: &[f64]) -> Vec<f64> {
        vec![-self.boost * uniform_cdf(p[0], self.cost.0, self.cost.1)]
    }
}

/// Exact piecewise-polynomial integrals for [`super::unit::GoatHayUnit`].
///
/// With `X = p_G + w - p_H - C^G` and `R = p_H - C^H` the farmer raises a goat
/// iff `X > max(R, 0)` and grows hay iff `R > max(X, 0)`; both are
/// independent uniforms, so every expectation is a one-dimensional integral of
/// a piecewise polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoatHayMeanField {
    pub value: (f64, f64),
    pub goat_cost: (f64, f64),
    pub hay_cost: (f64, f64),
}

#[derive(Debug, Clone, Copy)]
struct GoatHayMoments {
    goat_demand: f64,
    goat_share: f64,
    hay_share: f64,
    goat_profit: f64,
}

impl GoatHayMeanField {
    fn moments(&self, w: f64, p: &[f64]) -> GoatHayMoments {
        let margin = p[0] + w - p[1];
        let (xl, xh) = (margin - self.goat_cost.1, margin - self.goat_cost.0);
        let (rl, rh) = (p[1] - self.hay_cost.1, p[1] - self.hay_cost.0);
        let fx = 1.0 / (xh - xl);
        let fr = 1.0 / (rh - rl);
        let kinks_x = [rl, rh];
        let kinks_r = [xl, xh];
        let goat_share = quadrature::piecewise(
            |x| fx * uniform_cdf(x, rl, rh),
            xl.max(0.0),
            xh,
            &kinks_x,
        );
        let hay_share = quadrature::piecewise(
            |r| fr * uniform_cdf(r, xl, xh),
            rl.max(0.0),
            rh,
            &kinks_r,
        );
        let goat_profit = quadrature::piecewise(
            |x| x * fx * uniform_cdf(x, rl, rh),
            xl.max(0.0),
            xh,
            &kinks_x,
        );
        GoatHayMoments {
            goat_demand: 1.0 - uniform_cdf(p[0], self.value.0, self.value.1),
            goat_share,
            hay_share,
            goat_profit,
        }
    }
}

impl MeanField for GoatHayMeanField {
    fn num_goods(&self) -> usize {
        2
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        self.moments(w, p).goat_profit
    }

    fn excess_demand(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let m = self.moments(w, p);
        vec![m.goat_demand - m.goat_share, m.goat_share - m.hay_share]
    }
}

/// Mean field of [`super::unit::LogisticUnit`] by composite Gauss-Legendre
/// quadrature over the uniform value and cost supports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticMeanField {
    pub value: (f64, f64),
    pub cost: (f64, f64),
    pub boost: f64,
    pub temperature: f64,
}

const LOGISTIC_PANELS: usize = 64;

impl MeanField for LogisticMeanField {
    fn num_goods(&self) -> usize {
        1
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        let (cl, ch) = self.cost;
        let m = 1.0 + self.boost * w;
        let t = self.temperature;
        m * quadrature::composite(
            |c| (p[0] - c) * logistic((p[0] - c) / t),
            cl,
            ch,
            LOGISTIC_PANELS,
        ) / (ch - cl)
    }

    fn excess_demand(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let (vl, vh) = self.value;
        let (cl, ch) = self.cost;
        let t = self.temperature;
        let d = quadrature::composite(|v| logistic((v - p[0]) / t), vl, vh, LOGISTIC_PANELS)
            / (vh - vl);
        let s = (1.0 + self.boost * w)
            * quadrature::composite(|c| logistic((p[0] - c) / t), cl, ch, LOGISTIC_PANELS)
            / (ch - cl);
        vec![d - s]
    }
}

/// Monte Carlo mean field over a frozen sample of units.
pub struct SampleMeanField {
    units: Vec<Box<dyn Unit>>,
    num_goods: usize,
    fd_step: f64,
}

impl fmt::Debug for SampleMeanField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampleMeanField")
            .field("samples", &self.units.len())
            .field("num_goods", &self.num_goods)
            .finish()
    }
}

impl SampleMeanField {
    pub fn new(units: Vec<Box<dyn Unit>>, num_goods: usize, fd_step: f64) -> Self {
        SampleMeanField {
            units,
            num_goods,
            fd_step,
        }
    }

    pub fn samples(&self) -> usize {
        self.units.len()
    }
}

impl MeanField for SampleMeanField {
    fn num_goods(&self) -> usize {
        self.num_goods
    }

    fn fd_step(&self) -> f64 {
        self.fd_step
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        self.units.iter().map(|u| u.outcome(w, p)).sum::<f64>() / self.units.len() as f64
    }

    fn excess_demand(&self, w: f64, p: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.num_goods];
        let mut z = vec![0.0; self.num_goods];
        for u in &self.units {
            u.excess_demand(w, p, &mut z);
            for (a, v) in acc.iter_mut().zip(&z) {
                *a += v;
            }
        }
        let n = self.units.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

/// Shared handle to a mean field.
pub type SharedMeanField = Arc<dyn MeanField>;
