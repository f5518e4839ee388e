//! Finite-sample clearing price `argmin_p ‖(1/n) Σ Z_i(W_i, p + U_i)‖₂`.
//!
//! For step-function units the objective is piecewise constant along each
//! coordinate, changing only at unit breakpoints. One coordinate is solved
//! exactly by sorting the breakpoints of all units and sweeping them once,
//! so the cost is `O(n log n)` instead of `O(n²)` for a naive scan. With
//! several goods the same sweep runs along the coordinate axes, the current
//! excess-demand direction and the pairwise diagonals, repeated until no
//! line improves. Smooth units use a projected Newton iteration instead.
//!
//! Ties: if some breakpoint is strictly better than every open interval the
//! lowest such breakpoint is returned; otherwise the lowest run of optimal
//! intervals (joined through breakpoints that are optimal too) is located
//! and its midpoint returned.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::{inf_norm, l2_norm};
use crate::model::{PriceBox, PriceShape, Unit};

/// Objective values closer than this are treated as equal.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Cap on passes over the coordinates.
const MAX_PASSES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSamplePrice {
    pub price: Vec<f64>,
    /// `‖Z̄(P̃)‖₂` at the returned price.
    pub objective: f64,
    /// `‖Z̄(P̃)‖∞`.
    pub residual: f64,
    /// Coordinate passes (step units) or Newton iterations (smooth units).
    pub iterations: usize,
}

/// Mean excess demand `(1/n) Σ Z_i(W_i, p + U_i)`.
pub fn mean_excess_demand(units: &[Box<dyn Unit>], w: &[f64], u: &DMatrix<f64>, p: &[f64]) -> Vec<f64> {
    let j = p.len();
    let mut acc = vec![0.0; j];
    let mut z = vec![0.0; j];
    let mut q = vec![0.0; j];
    for (i, unit) in units.iter().enumerate() {
        for k in 0..j {
            q[k] = p[k] + u[(i, k)];
        }
        unit.excess_demand(w[i], &q, &mut z);
        for k in 0..j {
            acc[k] += z[k];
        }
    }
    let n = units.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `‖(1/n) Σ Z_i(W_i, p + U_i)‖₂`, evaluated directly.
pub fn objective(units: &[Box<dyn Unit>], w: &[f64], u: &DMatrix<f64>, p: &[f64]) -> f64 {
    l2_norm(&mean_excess_demand(units, w, u, p))
}

fn check_inputs(units: &[Box<dyn Unit>], w: &[f64], u: &DMatrix<f64>, bx: &PriceBox) -> Result<()> {
    let n = units.len();
    if n == 0 {
        return Err(Error::invalid("cannot clear an empty market"));
    }
    if w.len() != n || u.nrows() != n {
        return Err(Error::invalid(format!(
            "treatments ({}) and perturbation rows ({}) must match the {n} units",
            w.len(),
            u.nrows()
        )));
    }
    if u.ncols() != bx.dim() {
        return Err(Error::invalid(format!(
            "perturbations have {} columns, the price box has {}",
            u.ncols(),
            bx.dim()
        )));
    }
    if let Some(bad) = units.iter().find(|x| x.num_goods() != bx.dim()) {
        return Err(Error::invalid(format!(
            "unit with {} goods in a {}-good market",
            bad.num_goods(),
            bx.dim()
        )));
    }
    Ok(())
}

/// Minimize the clearing objective over the price box.
///
/// `start` seeds the coordinate sweeps and Newton iteration (box center if absent).
pub fn solve_finite_sample_price(
    units: &[Box<dyn Unit>],
    w: &[f64],
    u: &DMatrix<f64>,
    price_box: &PriceBox,
    start: Option<&[f64]>,
    settings: &SolverSettings,
) -> Result<FiniteSamplePrice> {
    check_inputs(units, w, u, price_box)?;
    let mut p = match start {
        Some(s) if s.len() == price_box.dim() => s.to_vec(),
        Some(_) => return Err(Error::invalid("start price has the wrong dimension")),
        None => price_box.center(),
    };
    price_box.clamp(&mut p);

    let all_steps = units.iter().all(|x| x.shape() == PriceShape::Step);
    let (price, iterations) = if all_steps {
        coordinate_sweeps(units, w, u, price_box, p, settings)
    } else {
        projected_newton(units, w, u, price_box, p)
    };
    let zbar = mean_excess_demand(units, w, u, &price);
    let objective = l2_norm(&zbar);
    if !objective.is_finite() {
        return Err(Error::Internal(format!(
            "clearing objective is not finite at {price:?}"
        )));
    }
    Ok(FiniteSamplePrice {
        residual: inf_norm(&zbar),
        objective,
        price,
        iterations,
    })
}

/// Search directions tried after the coordinate axes when `J ≥ 2`.
fn extra_directions(j: usize, zbar: &[f64]) -> Vec<Vec<f64>> {
    let mut dirs = Vec::new();
    // tâtonnement direction: raise the price of goods in excess demand
    if l2_norm(zbar) > 0.0 {
        dirs.push(zbar.to_vec());
    }
    for a in 0..j {
        for b in a + 1..j {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; j];
                d[a] = 1.0;
                d[b] = sign;
                dirs.push(d);
            }
        }
    }
    dirs
}

fn coordinate_sweeps(
    units: &[Box<dyn Unit>],
    w: &[f64],
    u: &DMatrix<f64>,
    bx: &PriceBox,
    mut p: Vec<f64>,
    settings: &SolverSettings,
) -> (Vec<f64>, usize) {
    let j = bx.dim();
    let mut sweeper = Sweeper::new(j);
    if j == 1 {
        // one exact sweep is the global minimum
        let line = Line::axis(bx, &p, 0);
        let (x, _) = sweeper.solve(units, w, u, &line).expect("axis sweep always applies");
        return (line.at(x), 1);
    }
    let mut best = objective(units, w, u, &p);
    let mut passes = 0;
    while passes < MAX_PASSES && best > 0.0 {
        passes += 1;
        let mut improved = false;
        let zbar = mean_excess_demand(units, w, u, &p);
        let axes = (0..j).map(Search::Axis);
        let searches: Vec<Search> = axes
            .chain(extra_directions(j, &zbar).into_iter().map(Search::Along))
            .collect();
        for search in searches {
            // each search starts from the latest iterate
            let line = match search {
                Search::Axis(k) => Some(Line::axis(bx, &p, k)),
                Search::Along(d) => Line::through(bx, &p, d),
            };
            let Some(line) = line else { continue };
            let Some((s, _)) = sweeper.solve(units, w, u, &line) else {
                continue;
            };
            let mut q = line.at(s);
            bx.clamp(&mut q);
            let obj = objective(units, w, u, &q);
            if obj < best - TIE_TOLERANCE {
                p = q;
                best = obj;
                improved = true;
            }
        }
        if !improved || !settings.breakpoint_refinement {
            break;
        }
    }
    (p, passes)
}

enum Search {
    Axis(usize),
    Along(Vec<f64>),
}

/// The segment `base + s·dir`, `s ∈ [lo, hi]`, of a line through the box.
/// Axis lines zero the swept coordinate of `base` so that `s` is the price itself.
#[derive(Debug, Clone)]
struct Line {
    base: Vec<f64>,
    dir: Vec<f64>,
    lo: f64,
    hi: f64,
    axis: Option<usize>,
}

impl Line {
    fn axis(bx: &PriceBox, p: &[f64], k: usize) -> Line {
        let mut base = p.to_vec();
        base[k] = 0.0;
        let mut dir = vec![0.0; p.len()];
        dir[k] = 1.0;
        Line {
            base,
            dir,
            lo: bx.lower[k],
            hi: bx.upper[k],
            axis: Some(k),
        }
    }

    fn through(bx: &PriceBox, p: &[f64], dir: Vec<f64>) -> Option<Line> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for (c, d) in dir.iter().enumerate() {
            if *d != 0.0 {
                let a = (bx.lower[c] - p[c]) / d;
                let b = (bx.upper[c] - p[c]) / d;
                lo = lo.max(a.min(b));
                hi = hi.min(a.max(b));
            }
        }
        (lo < hi && lo.is_finite() && hi.is_finite()).then(|| Line {
            base: p.to_vec(),
            dir,
            lo,
            hi,
            axis: None,
        })
    }

    fn at(&self, s: f64) -> Vec<f64> {
        match self.axis {
            Some(k) => {
                let mut q = self.base.clone();
                q[k] = s;
                q
            }
            None => self.base.iter().zip(&self.dir).map(|(b, d)| b + s * d).collect(),
        }
    }
}

/// Scratch buffers reused across sweeps.
struct Sweeper {
    j: usize,
    bps: Vec<f64>,
    /// `(position, offset into data)`; data holds `delta_at` then `delta_after`.
    events: Vec<(f64, usize)>,
    data: Vec<f64>,
    q: Vec<f64>,
    x: Vec<f64>,
    z_prev: Vec<f64>,
    z_pt: Vec<f64>,
    z_next: Vec<f64>,
}

impl Sweeper {
    fn new(j: usize) -> Self {
        Sweeper {
            j,
            bps: Vec::new(),
            events: Vec::new(),
            data: Vec::new(),
            q: vec![0.0; j],
            x: vec![0.0; j],
            z_prev: vec![0.0; j],
            z_pt: vec![0.0; j],
            z_next: vec![0.0; j],
        }
    }

    /// Exact minimizer of the objective along `line`; `None` if some unit
    /// cannot report its breakpoints in this direction.
    fn solve(
        &mut self,
        units: &[Box<dyn Unit>],
        w: &[f64],
        u: &DMatrix<f64>,
        line: &Line,
    ) -> Option<(f64, f64)> {
        let j = self.j;
        let (lo, hi) = (line.lo, line.hi);
        let dir = &line.dir;
        self.events.clear();
        self.data.clear();
        let mut at_lo = vec![0.0; j];
        let mut at_hi = vec![0.0; j];
        let mut first = vec![0.0; j];

        for (i, unit) in units.iter().enumerate() {
            // faced price at step s is q + s·dir
            for c in 0..j {
                self.q[c] = line.base[c] + u[(i, c)];
            }
            self.bps.clear();
            if !unit.breakpoints_along(w[i], &self.q, dir, &mut self.bps) {
                return None;
            }
            let mut m = 0;
            for r in 0..self.bps.len() {
                let b = self.bps[r];
                if b > lo && b < hi && b.is_finite() {
                    self.bps[m] = b;
                    m += 1;
                }
            }
            self.bps.truncate(m);
            self.bps.sort_by(f64::total_cmp);
            self.bps.dedup();

            let q = &self.q;
            let x = &mut self.x;
            let mut eval = |s: f64, out: &mut Vec<f64>| {
                for c in 0..j {
                    x[c] = q[c] + s * dir[c];
                }
                unit.excess_demand(w[i], x, out);
            };
            eval(lo, &mut self.z_pt);
            add(&mut at_lo, &self.z_pt);
            eval(hi, &mut self.z_pt);
            add(&mut at_hi, &self.z_pt);

            let first_right = self.bps.first().copied().unwrap_or(hi);
            eval(0.5 * (lo + first_right), &mut self.z_prev);
            add(&mut first, &self.z_prev);
            for r in 0..self.bps.len() {
                let b = self.bps[r];
                let right = self.bps.get(r + 1).copied().unwrap_or(hi);
                eval(b, &mut self.z_pt);
                eval(0.5 * (b + right), &mut self.z_next);
                self.events.push((b, self.data.len()));
                for c in 0..j {
                    self.data.push(self.z_pt[c] - self.z_prev[c]);
                }
                for c in 0..j {
                    self.data.push(self.z_next[c] - self.z_prev[c]);
                }
                std::mem::swap(&mut self.z_prev, &mut self.z_next);
            }
        }
        self.events.sort_by(|a, b| a.0.total_cmp(&b.0));

        // positions s_0 = lo < s_1 < … < s_m = hi with point and interval objectives
        let n = units.len() as f64;
        let norm = |v: &[f64]| v.iter().map(|x| (x / n) * (x / n)).sum::<f64>().sqrt();
        let mut xs = vec![lo];
        let mut point_obj = vec![norm(&at_lo)];
        let mut interval_obj = Vec::new();
        let mut level = first;
        let mut pt = vec![0.0; j];
        let mut e = 0;
        while e < self.events.len() {
            interval_obj.push(norm(&level));
            let x = self.events[e].0;
            pt.copy_from_slice(&level);
            while e < self.events.len() && self.events[e].0 == x {
                let off = self.events[e].1;
                for c in 0..j {
                    pt[c] += self.data[off + c];
                    level[c] += self.data[off + j + c];
                }
                e += 1;
            }
            xs.push(x);
            point_obj.push(norm(&pt));
        }
        interval_obj.push(norm(&level));
        xs.push(hi);
        point_obj.push(norm(&at_hi));

        Some(select(&xs, &point_obj, &interval_obj))
    }
}

fn add(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}

/// Apply the tie rule. `xs` has `m + 1` sorted positions, `point_obj` one
/// value per position and `interval_obj` one per open interval between them.
pub(crate) fn select(xs: &[f64], point_obj: &[f64], interval_obj: &[f64]) -> (f64, f64) {
    let min_i = interval_obj.iter().cloned().fold(f64::INFINITY, f64::min);
    let min_p = point_obj.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_p < min_i - TIE_TOLERANCE {
        let k = point_obj
            .iter()
            .position(|v| *v <= min_p + TIE_TOLERANCE)
            .expect("minimum is attained");
        return (xs[k], point_obj[k]);
    }
    let target = min_i + TIE_TOLERANCE;
    let k = interval_obj
        .iter()
        .position(|v| *v <= target)
        .expect("minimum is attained");
    let mut r = k;
    while r + 1 < interval_obj.len() && point_obj[r + 1] <= target && interval_obj[r + 1] <= target {
        r += 1;
    }
    (0.5 * (xs[k] + xs[r + 1]), interval_obj[k])
}

/// Newton on `Z̄(p) = 0` with a forward-difference Jacobian, backtracking on
/// `‖Z̄‖₂` and projection onto the box; falls back to steepest descent on
/// `‖Z̄‖²` when the Newton direction does not help.
fn projected_newton(
    units: &[Box<dyn Unit>],
    w: &[f64],
    u: &DMatrix<f64>,
    bx: &PriceBox,
    mut p: Vec<f64>,
) -> (Vec<f64>, usize) {
    let j = bx.dim();
    let mut z = mean_excess_demand(units, w, u, &p);
    let mut f = l2_norm(&z);
    let mut it = 0;
    while it < 200 && f > 1e-13 {
        it += 1;
        let mut jac = DMatrix::zeros(j, j);
        for k in 0..j {
            let h = 1e-7 * (1.0 + p[k].abs());
            let mut q = p.clone();
            q[k] += h;
            let zq = mean_excess_demand(units, w, u, &q);
            for r in 0..j {
                jac[(r, k)] = (zq[r] - z[r]) / h;
            }
        }
        let zv = DVector::from_column_slice(&z);
        let newton = jac.clone().lu().solve(&(-&zv));
        let descent = -(jac.transpose() * &zv);
        let mut moved = false;
        for dir in newton.into_iter().chain(std::iter::once(descent)) {
            let mut t = 1.0;
            for _ in 0..40 {
                let mut q: Vec<f64> = p.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                bx.clamp(&mut q);
                let zq = mean_excess_demand(units, w, u, &q);
                let fq = l2_norm(&zq);
                if fq < f {
                    p = q;
                    z = zq;
                    f = fq;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if moved {
                break;
            }
        }
        if !moved {
            break;
        }
    }
    (p, it)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LogisticUnit, TechUnit};

    fn tech(v: f64, c: f64) -> Box<dyn Unit> {
        Box::new(TechUnit {
            value: v,
            cost: c,
            boost: 0.2,
        })
    }

    fn solve(units: &[Box<dyn Unit>], w: &[f64]) -> FiniteSamplePrice {
        let bx = PriceBox::new(vec![5.01], vec![11.99]).unwrap();
        let u = DMatrix::zeros(units.len(), 1);
        solve_finite_sample_price(units, w, &u, &bx, None, &SolverSettings::default()).unwrap()
    }

    #[test]
    fn midpoint_of_clearing_interval() {
        let r = solve(&[tech(9.0, 6.0), tech(8.0, 7.0)], &[0.0, 0.0]);
        assert_eq!(r.price, vec![7.5]);
        assert_eq!(r.objective, 0.0);
        let r = solve(&[tech(9.0, 6.0)], &[0.0]);
        assert_eq!(r.price, vec![7.5]);
    }

    #[test]
    fn strictly_better_breakpoint_wins() {
        // only the point p = 7 balances:
        // unit A: V = 7, C = 5.5  → Z = 1(7 > p) − 1(5.5 < p)
        // unit B: V = 11, C = 7   → Z = 1(11 > p) − 1(7 < p)
        // p in (5.5, 7): A = 0, B = 1; p = 7: A = −1, B = 1; p in (7, 11): A = −1, B = 0
        let r = solve(&[tech(7.0, 5.5), tech(11.0, 7.0)], &[0.0, 0.0]);
        assert_eq!(r.price, vec![7.0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn select_rules() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        // run (0,1] ∪ (1,2) joined through an optimal point
        assert_eq!(select(&xs, &[5.0, 0.0, 5.0, 5.0], &[0.0, 0.0, 1.0]), (1.0, 0.0));
        // a non-optimal breakpoint splits the run; lowest interval wins
        assert_eq!(select(&xs, &[5.0, 3.0, 5.0, 5.0], &[0.0, 0.0, 1.0]), (0.5, 0.0));
        assert_eq!(select(&xs, &[5.0, 5.0, 0.5, 5.0], &[1.0, 1.0, 1.0]), (2.0, 0.5));
    }

    #[test]
    fn logistic_units_clear_exactly() {
        let units: Vec<Box<dyn Unit>> = (0..50)
            .map(|i| {
                Box::new(LogisticUnit {
                    value: 7.0 + 0.1 * i as f64,
                    cost: 5.0 + 0.1 * i as f64,
                    boost: 0.2,
                    temperature: 0.5,
                }) as Box<dyn Unit>
            })
            .collect();
        let w: Vec<f64> = (0..50).map(|i| (i % 2) as f64).collect();
        let r = solve(&units, &w);
        assert!(r.residual < 1e-10, "{}", r.residual);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let bx = PriceBox::new(vec![5.01], vec![11.99]).unwrap();
        let units = [tech(9.0, 6.0), tech(8.0, 7.0)];
        let u = DMatrix::zeros(2, 1);
        let s = SolverSettings::default();
        assert!(solve_finite_sample_price(&units, &[0.0], &u, &bx, None, &s).is_err());
        assert!(solve_finite_sample_price(&units, &[0.0, 1.0], &DMatrix::zeros(3, 1), &bx, None, &s).is_err());
    }
}
