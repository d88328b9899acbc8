//! Gauss-Legendre rules on intervals and their tensor products.

use std::f64::consts::PI;

/// A one-dimensional quadrature rule: nodes with matching weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    /// `n`-point Gauss-Legendre rule on `[a, b]`, exact for degree `2n-1`.
    pub fn gauss(n: usize, a: f64, b: f64) -> Self {
        let (x, w) = gauss_legendre_unit(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Rule {
            nodes: x.iter().map(|t| mid + half * t).collect(),
            weights: w.iter().map(|wi| half * wi).collect(),
        }
    }

    /// Composite rule with `n` points on every panel between consecutive breaks.
    /// Breaks are sorted and deduplicated; zero-width panels are skipped.
    pub fn composite(n: usize, breaks: &[f64]) -> Self {
        let mut b: Vec<f64> = breaks.to_vec();
        b.sort_by(|x, y| x.total_cmp(y));
        b.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
        let mut rule = Rule {
            nodes: Vec::new(),
            weights: Vec::new(),
        };
        for w in b.windows(2) {
            if w[1] - w[0] <= 0.0 {
                continue;
            }
            let panel = Rule::gauss(n, w[0], w[1]);
            rule.nodes.extend(panel.nodes);
            rule.weights.extend(panel.weights);
        }
        rule
    }

    /// Composite rule with `panels` equal panels on `[a, b]` plus any extra breaks inside.
    pub fn panels(n: usize, a: f64, b: f64, panels: usize, extra: &[f64]) -> Self {
        let panels = panels.max(1);
        let mut breaks: Vec<f64> = (0..=panels)
            .map(|i| a + (b - a) * i as f64 / panels as f64)
            .collect();
        breaks.extend(extra.iter().copied().filter(|&x| x > a && x < b));
        Rule::composite(n, &breaks)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes and weights on `[-1, 1]` by Newton iteration on the Legendre recurrence.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Calls `f(point, weight)` for every node of the tensor product of `axes`.
pub fn tensor_for_each(axes: &[Rule], mut f: impl FnMut(&[f64], f64)) {
    let d = axes.len();
    if d == 0 || axes.iter().any(|r| r.is_empty()) {
        return;
    }
    let mut idx = vec![0usize; d];
    let mut point: Vec<f64> = axes.iter().map(|r| r.nodes[0]).collect();
    loop {
        let w: f64 = axes.iter().zip(&idx).map(|(r, &i)| r.weights[i]).product();
        f(&point, w);
        let mut ax = d;
        loop {
            if ax == 0 {
                return;
            }
            ax -= 1;
            idx[ax] += 1;
            if idx[ax] < axes[ax].len() {
                point[ax] = axes[ax].nodes[idx[ax]];
                break;
            }
            idx[ax] = 0;
            point[ax] = axes[ax].nodes[0];
        }
    }
}

pub fn tensor_integrate(axes: &[Rule], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut acc = 0.0;
    tensor_for_each(axes, |p, w| acc += w * f(p));
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        let r = Rule::gauss(4, 0.0, 1.0);
        for k in 0..8 {
            let got = r.integrate(|x| x.powi(k));
            assert!((got - 1.0 / (k as f64 + 1.0)).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn composite_handles_kinks() {
        let r = Rule::composite(3, &[0.0, 0.3, 1.0]);
        let got = r.integrate(|x| (x - 0.3).abs());
        assert!((got - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn high_order_weights_sum() {
        let r = Rule::gauss(80, -2.0, 3.0);
        let s: f64 = r.weights.iter().sum();
        assert!((s - 5.0).abs() < 1e-12);
    }

    #[test]
    fn tensor_volume() {
        let axes = vec![Rule::gauss(2, 0.0, 2.0), Rule::gauss(3, 0.0, 0.5)];
        let v = tensor_integrate(&axes, |p| p[0] * p[1]);
        assert!((v - 2.0 * 0.125).abs() < 1e-14);
    }
}
