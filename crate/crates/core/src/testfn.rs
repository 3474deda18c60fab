//! Smooth compactly supported test functions with analytic derivatives.
//!
//! φ(x) = B((x − c)/s) · P(x), where B(z) = exp(−1/(1−|z|²)) on |z| < 1 and P is a
//! quadratic polynomial P(x) = p0 + p1 x1 + p2 x2 + p3 x1² + p4 x1 x2 + p5 x2².

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub dim: usize,
    pub center: [f64; 2],
    pub scale: f64,
    pub poly: [f64; 6],
}

/// Value, gradient and Hessian at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: [[f64; 2]; 2],
}

impl TestFunction {
    pub fn bump(dim: usize, center: [f64; 2], scale: f64) -> Self {
        Self {
            dim,
            center,
            scale,
            poly: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// B(x/s)·x1².
    pub fn bump_times_square(dim: usize, scale: f64) -> Self {
        Self {
            dim,
            center: [0.0; 2],
            scale,
            poly: [0.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        }
    }

    /// Radius of the smallest origin-centered ball containing the support.
    pub fn support_radius(&self) -> f64 {
        let c: f64 = self.center[..self.dim].iter().map(|t| t * t).sum::<f64>().sqrt();
        c + self.scale
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        let d = self.dim;
        let s = self.scale;
        let mut z = [0.0; 2];
        for i in 0..d {
            z[i] = (x[i] - self.center[i]) / s;
        }
        let u: f64 = z[..d].iter().map(|t| t * t).sum();
        if u >= 1.0 {
            return Jet::default();
        }
        let q = 1.0 - u;
        let b = (-1.0 / q).exp();
        let bu = -b / (q * q);
        let buu = b / q.powi(4) - 2.0 * b / q.powi(3);
        let mut bg = [0.0; 2];
        let mut bh = [[0.0; 2]; 2];
        for i in 0..d {
            bg[i] = bu * 2.0 * z[i] / s;
            for j in 0..d {
                let delta = if i == j { 1.0 } else { 0.0 };
                bh[i][j] = buu * 4.0 * z[i] * z[j] / (s * s) + bu * 2.0 * delta / (s * s);
            }
        }
        let p = &self.poly;
        let (x1, x2) = (x[0], if d == 2 { x[1] } else { 0.0 });
        let pv = p[0] + p[1] * x1 + p[2] * x2 + p[3] * x1 * x1 + p[4] * x1 * x2 + p[5] * x2 * x2;
        let pg = [p[1] + 2.0 * p[3] * x1 + p[4] * x2, p[2] + p[4] * x1 + 2.0 * p[5] * x2];
        let ph = [[2.0 * p[3], p[4]], [p[4], 2.0 * p[5]]];
        let mut jet = Jet {
            value: b * pv,
            ..Jet::default()
        };
        for i in 0..d {
            jet.grad[i] = bg[i] * pv + b * pg[i];
            for j in 0..d {
                jet.hess[i][j] = bh[i][j] * pv + bg[i] * pg[j] + bg[j] * pg[i] + b * ph[i][j];
            }
        }
        jet
    }
}

/// `count` test functions with centers uniform in the ball of radius
/// `center_radius`, scales in [0.5, 2] and polynomial coefficients in [−1, 1].
pub fn random_test_functions(dim: usize, count: usize, center_radius: f64, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut center = [0.0; 2];
            loop {
                for c in center.iter_mut().take(dim) {
                    *c = rng.gen_range(-center_radius..=center_radius);
                }
                if center[..dim].iter().map(|t| t * t).sum::<f64>() <= center_radius * center_radius {
                    break;
                }
            }
            let scale = rng.gen_range(0.5..=2.0);
            let mut poly = [0.0; 6];
            for (k, c) in poly.iter_mut().enumerate() {
                let used = dim == 2 || matches!(k, 0 | 1 | 3);
                if used {
                    *c = rng.gen_range(-1.0..=1.0);
                }
            }
            TestFunction {
                dim,
                center,
                scale,
                poly,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_check(phi: &TestFunction, x: [f64; 2]) {
        let d = phi.dim;
        let h = 1e-5;
        let jet = phi.jet(&x);
        for i in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let g = (phi.jet(&xp).value - phi.jet(&xm).value) / (2.0 * h);
            assert!((g - jet.grad[i]).abs() < 1e-6, "grad {i}: {g} vs {}", jet.grad[i]);
            for j in 0..d {
                let hs = (phi.jet(&xp).grad[j] - phi.jet(&xm).grad[j]) / (2.0 * h);
                assert!(
                    (hs - jet.hess[i][j]).abs() < 1e-5,
                    "hess {i}{j}: {hs} vs {}",
                    jet.hess[i][j]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for d in 1..=2 {
            for phi in random_test_functions(d, 5, 2.0, 11) {
                let x = [phi.center[0] + 0.3 * phi.scale, phi.center[1] - 0.2 * phi.scale];
                numeric_check(&phi, x);
            }
        }
    }

    #[test]
    fn vanishes_outside_support() {
        let phi = TestFunction::bump(1, [1.0, 0.0], 0.5);
        assert_eq!(phi.jet(&[1.6]).value, 0.0);
        assert!(phi.jet(&[1.1]).value > 0.0);
        assert_eq!(phi.support_radius(), 1.5);
    }
}
