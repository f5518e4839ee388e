use std::fmt;

/// How a unit's excess demand varies with its own price.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriceShape {
    /// Piecewise constant in each coordinate; jumps are reported by [`Unit::breakpoints`].
    Step,
    /// Continuous in price.
    Smooth,
}

/// One sampled agent: outcome, demand and supply as functions of its own
/// treatment `w` and the price vector `p` it faces.
///
/// Implementations must be deterministic and pure.
pub trait Unit: Send + Sync + fmt::Debug {
    fn num_goods(&self) -> usize;

    fn outcome(&self, w: f64, p: &[f64]) -> f64;

    fn demand(&self, w: f64, p: &[f64], out: &mut [f64]);

    fn supply(&self, w: f64, p: &[f64], out: &mut [f64]);

    /// `Z = D - S`.
    fn excess_demand(&self, w: f64, p: &[f64], out: &mut [f64]) {
        let mut s = vec![0.0; out.len()];
        self.demand(w, p, out);
        self.supply(w, p, &mut s);
        for (z, s) in out.iter_mut().zip(s) {
            *z -= s;
        }
    }

    fn shape(&self) -> PriceShape {
        PriceShape::Smooth
    }

    /// Prices along coordinate `coord`, all other coordinates held at `p`,
    /// where this unit's excess demand may jump. Extra points are harmless;
    /// a missing jump is a bug. Only consulted for [`PriceShape::Step`] units.
    fn breakpoints(&self, _w: f64, _p: &[f64], _coord: usize, _out: &mut Vec<f64>) {}

    /// Steps `t` at which the excess demand along `p + t·dir` may jump.
    /// Returns `false` if the unit cannot report them for this direction.
    ///
    /// The default handles axis directions through [`Unit::breakpoints`].
    fn breakpoints_along(&self, w: f64, p: &[f64], dir: &[f64], out: &mut Vec<f64>) -> bool {
        let mut axis = None;
        for (k, d) in dir.iter().enumerate() {
            if *d != 0.0 {
                if axis.is_some() {
                    return false;
                }
                axis = Some(k);
            }
        }
        let Some(k) = axis else { return true };
        let start = out.len();
        self.breakpoints(w, p, k, out);
        for b in &mut out[start..] {
            *b = (*b - p[k]) / dir[k];
        }
        true
    }

    /// Named latent draws, for inspection and export.
    fn latent(&self) -> Vec<(&'static str, f64)>;
}

/// Push the step at which `p + t·dir` crosses the hyperplane `a·x = c`.
#[inline]
fn crossing(a: &[f64], c: f64, p: &[f64], dir: &[f64], out: &mut Vec<f64>) {
    let ad: f64 = a.iter().zip(dir).map(|(a, d)| a * d).sum();
    if ad != 0.0 {
        let ap: f64 = a.iter().zip(p).map(|(a, p)| a * p).sum();
        out.push((c - ap) / ad);
    }
}

#[inline]
fn ind(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Buyer with value `value` paired with a seller with cost `cost`. Treated
/// sellers produce `1 + boost * w` units at the same cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TechUnit {
    pub value: f64,
    pub cost: f64,
    pub boost: f64,
}

impl TechUnit {
    #[inline]
    fn units_supplied(&self, w: f64, p: f64) -> f64 {
        (1.0 + self.boost * w) * ind(self.cost < p)
    }
}

impl Unit for TechUnit {
    fn num_goods(&self) -> usize {
        1
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        (p[0] - self.cost) * self.units_supplied(w, p[0])
    }

    fn demand(&self, _w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = ind(self.value > p[0]);
    }

    fn supply(&self, w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = self.units_supplied(w, p[0]);
    }

    fn excess_demand(&self, w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = ind(self.value > p[0]) - self.units_supplied(w, p[0]);
    }

    fn shape(&self) -> PriceShape {
        PriceShape::Step
    }

    fn breakpoints(&self, _w: f64, _p: &[f64], _coord: usize, out: &mut Vec<f64>) {
        out.push(self.value);
        out.push(self.cost);
    }

    fn breakpoints_along(&self, _w: f64, p: &[f64], dir: &[f64], out: &mut Vec<f64>) -> bool {
        if dir[0] != 0.0 {
            out.push((self.value - p[0]) / dir[0]);
            out.push((self.cost - p[0]) / dir[0]);
        }
        true
    }

    fn latent(&self) -> Vec<(&'static str, f64)> {
        vec![("value", self.value), ("cost", self.cost)]
    }
}

/// A goat buyer paired with a farmer who either raises a goat (consuming one
/// unit of hay), grows hay, or stays idle. Goods are `[goat, hay]`; the
/// treatment `w` is a per-goat subsidy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoatHayUnit {
    pub value: f64,
    pub goat_cost: f64,
    pub hay_cost: f64,
}

/// Occupation choice of one farmer at given prices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarmerChoice {
    pub goat: bool,
    pub hay: bool,
    pub goat_profit: f64,
    pub hay_profit: f64,
}

impl GoatHayUnit {
    pub fn choice(&self, w: f64, p: &[f64]) -> FarmerChoice {
        let goat_profit = (p[0] + w - self.goat_cost - p[1]).max(0.0);
        let hay_profit = (p[1] - self.hay_cost).max(0.0);
        FarmerChoice {
            goat: goat_profit > hay_profit,
            hay: hay_profit > goat_profit,
            goat_profit,
            hay_profit,
        }
    }
}

impl Unit for GoatHayUnit {
    fn num_goods(&self) -> usize {
        2
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        let c = self.choice(w, p);
        ind(c.goat) * c.goat_profit
    }

    fn demand(&self, w: f64, p: &[f64], out: &mut [f64]) {
        let c = self.choice(w, p);
        out[0] = ind(self.value > p[0]);
        out[1] = ind(c.goat);
    }

    fn supply(&self, w: f64, p: &[f64], out: &mut [f64]) {
        let c = self.choice(w, p);
        out[0] = ind(c.goat);
        out[1] = ind(c.hay);
    }

    fn excess_demand(&self, w: f64, p: &[f64], out: &mut [f64]) {
        let c = self.choice(w, p);
        out[0] = ind(self.value > p[0]) - ind(c.goat);
        out[1] = ind(c.goat) - ind(c.hay);
    }

    fn shape(&self) -> PriceShape {
        PriceShape::Step
    }

    fn breakpoints(&self, w: f64, p: &[f64], coord: usize, out: &mut Vec<f64>) {
        match coord {
            0 => {
                out.push(self.value);
                out.push(self.goat_cost + p[1] - w + (p[1] - self.hay_cost).max(0.0));
            }
            _ => {
                let margin = p[0] + w - self.goat_cost;
                out.push(margin);
                out.push(self.hay_cost);
                out.push(0.5 * (margin + self.hay_cost));
            }
        }
    }

    fn breakpoints_along(&self, w: f64, p: &[f64], dir: &[f64], out: &mut Vec<f64>) -> bool {
        // buyer: pG = V; farmer: goat margin = hay margin, goat margin = 0, hay margin = 0
        crossing(&[1.0, 0.0], self.value, p, dir, out);
        crossing(&[1.0, -2.0], self.goat_cost - w - self.hay_cost, p, dir, out);
        crossing(&[1.0, -1.0], self.goat_cost - w, p, dir, out);
        crossing(&[0.0, 1.0], self.hay_cost, p, dir, out);
        true
    }

    fn latent(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("value", self.value),
            ("goat_cost", self.goat_cost),
            ("hay_cost", self.hay_cost),
        ]
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smoothed version of [`TechUnit`]: indicators replaced by logistic
/// curves of width `temperature`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticUnit {
    pub value: f64,
    pub cost: f64,
    pub boost: f64,
    pub temperature: f64,
}

impl LogisticUnit {
    #[inline]
    fn units_supplied(&self, w: f64, p: f64) -> f64 {
        (1.0 + self.boost * w) * logistic((p - self.cost) / self.temperature)
    }
}

impl Unit for LogisticUnit {
    fn num_goods(&self) -> usize {
        1
    }

    fn outcome(&self, w: f64, p: &[f64]) -> f64 {
        (p[0] - self.cost) * self.units_supplied(w, p[0])
    }

    fn demand(&self, _w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = logistic((self.value - p[0]) / self.temperature);
    }

    fn supply(&self, w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = self.units_supplied(w, p[0]);
    }

    fn excess_demand(&self, w: f64, p: &[f64], out: &mut [f64]) {
        out[0] = logistic((self.value - p[0]) / self.temperature) - self.units_supplied(w, p[0]);
    }

    fn latent(&self) -> Vec<(&'static str, f64)> {
        vec![("value", self.value), ("cost", self.cost)]
    }
}
