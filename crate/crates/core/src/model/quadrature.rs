//! Gauss-Legendre rules for the built-in mean-field integrals.

// 4-point rule, exact for polynomials up to degree 7.
const NODES: [f64; 4] = [
    -0.861_136_311_594_052_6,
    -0.339_981_043_584_856_3,
    0.339_981_043_584_856_3,
    0.861_136_311_594_052_6,
];
const WEIGHTS: [f64; 4] = [
    0.347_854_845_137_453_8,
    0.652_145_154_862_546_1,
    0.652_145_154_862_546_1,
    0.347_854_845_137_453_8,
];

/// Integral of `f` over `[lo, hi]`, split at every kink inside the range.
/// Exact when `f` is a polynomial of degree ≤ 7 between kinks.
pub fn piecewise<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, kinks: &[f64]) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut pts = Vec::with_capacity(kinks.len() + 2);
    pts.push(lo);
    pts.extend(kinks.iter().cloned().filter(|k| *k > lo && *k < hi));
    pts.push(hi);
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.windows(2).map(|w| panel(&f, w[0], w[1])).sum()
}

/// Composite rule with `panels` equal panels, for smooth integrands.
pub fn composite<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, panels: usize) -> f64 {
    let width = (hi - lo) / panels as f64;
    (0..panels)
        .map(|k| {
            let a = lo + width * k as f64;
            panel(&f, a, a + width)
        })
        .sum()
}

fn panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    NODES
        .iter()
        .zip(WEIGHTS.iter())
        .map(|(x, w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}
