//! Compressed sparse row matrices, ILU(0) and preconditioned BiCGSTAB.

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros kept (they fix the ILU(0) pattern).
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < n && c < n, "triplet ({r}, {c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n {
            indptr[r + 1] += indptr[r];
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.values[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.nnz());
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                t.push((c, r, v));
            }
        }
        Self::from_triplets(self.n, t)
    }

    /// Multiplies row r (and nothing else) by `s[r]`.
    pub fn scale_rows(&mut self, s: &[f64]) {
        for (r, &sr) in s.iter().enumerate().take(self.n) {
            for k in self.indptr[r]..self.indptr[r + 1] {
                self.values[k] *= sr;
            }
        }
    }

    /// Replaces row r by the unit row e_r.
    pub fn set_identity_row(&mut self, r: usize) {
        for k in self.indptr[r]..self.indptr[r + 1] {
            self.values[k] = if self.indices[k] == r { 1.0 } else { 0.0 };
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }
}

/// Incomplete LU factorization with the sparsity pattern of A.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.indptr[r]..lu.indptr[r + 1] {
                if lu.indices[k] == r {
                    diag_pos[r] = k;
                }
            }
            if diag_pos[r] == usize::MAX {
                return invalid(format!("ILU(0): row {r} has no diagonal entry"));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.indptr[i], lu.indptr[i + 1]);
            for k in start..end {
                pos[lu.indices[k]] = k;
            }
            for k in start..end {
                let col = lu.indices[k];
                if col >= i {
                    break;
                }
                let pivot = lu.values[diag_pos[col]];
                let factor = lu.values[k] / pivot;
                lu.values[k] = factor;
                for m in (diag_pos[col] + 1)..lu.indptr[col + 1] {
                    let p = pos[lu.indices[m]];
                    if p != usize::MAX {
                        lu.values[p] -= factor * lu.values[m];
                    }
                }
            }
            for k in start..end {
                pos[lu.indices[k]] = usize::MAX;
            }
            if lu.values[diag_pos[i]] == 0.0 || !lu.values[diag_pos[i]].is_finite() {
                return invalid(format!("ILU(0): zero pivot in row {i}"));
            }
        }
        Ok(Self { lu, diag_pos })
    }

    /// Solves (LU) z = r.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = self.lu.n;
        for i in 0..n {
            let mut s = r[i];
            for k in self.lu.indptr[i]..self.diag_pos[i] {
                s -= self.lu.values[k] * z[self.lu.indices[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (self.diag_pos[i] + 1)..self.lu.indptr[i + 1] {
                s -= self.lu.values[k] * z[self.lu.indices[k]];
            }
            z[i] = s / self.lu.values[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative residual ‖b − Ax‖/‖b‖ after each iteration.
    pub history: Vec<f64>,
    pub final_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB. `x` holds the initial guess on entry.
/// Restarts from the current iterate on breakdown; fails with the residual
/// history if `tol` is not reached within `max_iter` iterations.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x: &mut [f64],
    precond: &Ilu0,
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = a.dim();
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            history: vec![0.0],
            final_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    let residual = |x: &[f64], r: &mut [f64]| {
        a.matvec(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
    };
    residual(x, &mut r);
    let mut history = vec![norm2(&r) / bnorm];
    let mut iterations = 0;
    let (mut p, mut v, mut ph, mut s, mut sh, mut t) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );

    'restart: while iterations < max_iter {
        if *history.last().unwrap() <= tol {
            break;
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        while iterations < max_iter {
            iterations += 1;
            let rho_new = dot(&r_hat, &r);
            if rho_new.abs() < 1e-300 || omega == 0.0 {
                residual(x, &mut r);
                continue 'restart;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            precond.apply(&p, &mut ph);
            a.matvec(&ph, &mut v);
            let denom = dot(&r_hat, &v);
            if denom == 0.0 {
                residual(x, &mut r);
                continue 'restart;
            }
            alpha = rho / denom;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            if norm2(&s) / bnorm <= tol {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                residual(x, &mut r);
                history.push(norm2(&r) / bnorm);
                if *history.last().unwrap() <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
            precond.apply(&s, &mut sh);
            a.matvec(&sh, &mut t);
            let tt = dot(&t, &t);
            omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            let rel = norm2(&r) / bnorm;
            history.push(rel);
            if !rel.is_finite() {
                break 'restart;
            }
            if rel <= tol {
                // Confirm with the true residual before accepting.
                residual(x, &mut r);
                let true_rel = norm2(&r) / bnorm;
                *history.last_mut().unwrap() = true_rel;
                if true_rel <= tol {
                    break 'restart;
                }
                continue 'restart;
            }
        }
    }
    let final_residual = *history.last().unwrap();
    if final_residual <= tol {
        Ok(SolveStats {
            iterations,
            history,
            final_residual,
        })
    } else {
        Err(Error::Convergence {
            final_residual,
            iterations,
            history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn convection_diffusion(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.5));
            if i > 0 {
                t.push((i, i - 1, -1.3));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.7));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_merge_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.transpose().get(0, 1), 2.0);
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let a = convection_diffusion(50);
        let ilu = Ilu0::new(&a).unwrap();
        let x_true: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; 50];
        a.matvec(&x_true, &mut b);
        let mut x = vec![0.0; 50];
        ilu.apply(&b, &mut x);
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn bicgstab_solves_2d_operator() {
        let m = 30;
        let n = m * m;
        let mut t = Vec::new();
        for j in 0..m {
            for i in 0..m {
                let r = i + m * j;
                t.push((r, r, 4.2));
                if i > 0 {
                    t.push((r, r - 1, -1.2));
                }
                if i + 1 < m {
                    t.push((r, r + 1, -0.8));
                }
                if j > 0 {
                    t.push((r, r - m, -1.0));
                }
                if j + 1 < m {
                    t.push((r, r + m, -1.0));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n, t);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 13) as f64 - 6.0).collect();
        let ilu = Ilu0::new(&a).unwrap();
        let mut x = vec![0.0; n];
        let stats = bicgstab(&a, &b, &mut x, &ilu, 1e-12, 500).unwrap();
        assert!(stats.final_residual <= 1e-12);
        let mut ax = vec![0.0; n];
        a.matvec(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        assert!(err / norm2(&b) < 1e-11);
    }

    #[test]
    fn reports_history_on_failure() {
        let a = convection_diffusion(200);
        let ilu = Ilu0::new(&CsrMatrix::from_triplets(200, (0..200).map(|i| (i, i, 1.0)).collect())).unwrap();
        let b = vec![1.0; 200];
        let mut x = vec![0.0; 200];
        match bicgstab(&a, &b, &mut x, &ilu, 1e-14, 2) {
            Err(Error::Convergence { history, .. }) => assert!(history.len() >= 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
