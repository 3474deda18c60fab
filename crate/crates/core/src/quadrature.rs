//! Gauss–Legendre rules, composite integration and least-squares line fits.

use std::f64::consts::PI;

/// Nodes and weights of an n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Builds the rule by Newton iteration on the Legendre polynomial P_n.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess for the i-th root.
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
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Integral of `f` over [a, b] with a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
            * half
    }

    /// Composite rule with `panels` equal panels on [a, b].
    pub fn integrate_composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let width = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let lo = a + p as f64 * width;
                self.integrate(lo, lo + width, &mut f)
            })
            .sum()
    }

    /// Mapped nodes and weights on [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, w * half))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// ∫₀^{x_k} f for every point of the strictly increasing sequence `points`,
/// accumulated outward from 0 with `panels` Gauss–Legendre panels per gap.
/// Calls `f` only at interior quadrature nodes.
pub fn cumulative_from_zero<F: FnMut(f64) -> f64>(
    rule: &GaussLegendre,
    points: &[f64],
    panels: usize,
    mut f: F,
) -> Vec<f64> {
    let mut out = vec![0.0; points.len()];
    let split = points.partition_point(|&x| x < 0.0);
    let mut acc = 0.0;
    let mut prev = 0.0;
    for k in split..points.len() {
        acc += rule.integrate_composite(prev, points[k], panels, &mut f);
        out[k] = acc;
        prev = points[k];
    }
    acc = 0.0;
    prev = 0.0;
    for k in (0..split).rev() {
        acc -= rule.integrate_composite(points[k], prev, panels, &mut f);
        out[k] = acc;
        prev = points[k];
    }
    out
}

/// Ordinary least-squares line y ≈ slope·x + intercept.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
    /// Coefficient of determination.
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Some(LineFit {
        slope,
        intercept,
        rms_residual: (sse / nf).sqrt(),
        r_squared,
    })
}

/// Trapezoidal rule on an ordered, possibly non-uniform abscissa.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two() {
        for n in 1..=20 {
            let gl = GaussLegendre::new(n);
            let s: f64 = gl.weights().iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n} sum={s}");
        }
    }

    #[test]
    fn exact_for_polynomials_up_to_degree_2n_minus_1() {
        let gl = GaussLegendre::new(6);
        for deg in 0..12 {
            let got = gl.integrate(0.0, 1.0, |x| x.powi(deg));
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((got - exact).abs() < 1e-14, "deg {deg}: {got} vs {exact}");
        }
    }

    #[test]
    fn gaussian_integral() {
        let gl = GaussLegendre::new(10);
        let z = gl.integrate_composite(-10.0, 10.0, 40, |x| (-0.5 * x * x).exp());
        assert!((z - (2.0 * PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-14);
        assert!((fit.intercept + 1.0).abs() < 1e-14);
        assert!((fit.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cumulative_integral_of_linear() {
        let gl = GaussLegendre::new(4);
        let pts = [-2.0, -0.5, 0.0, 0.25, 3.0];
        let got = cumulative_from_zero(&gl, &pts, 1, |x| 2.0 * x + 1.0);
        for (x, v) in pts.iter().zip(&got) {
            assert!((v - (x * x + x)).abs() < 1e-13);
        }
    }

    #[test]
    fn trapezoid_exact_on_linear() {
        let xs = [0.0, 0.3, 1.0, 2.5];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&xs, &ys) - (3.0 * 2.5 * 2.5 / 2.0 + 2.5)).abs() < 1e-12);
    }
}
