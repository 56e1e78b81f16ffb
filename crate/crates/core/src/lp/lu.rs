//! Dense LU factorization with partial pivoting.

use super::{LpError, PIVOT_TOL};

/// `P·B = L·U` for a square matrix stored row-major.
#[derive(Clone, Debug)]
pub struct LuFactors {
    n: usize,
    /// Packed factors: strict lower part holds L (unit diagonal), upper part U.
    lu: Vec<f64>,
    /// `perm[i]` = row of B that ended up in position i.
    perm: Vec<usize>,
}

impl LuFactors {
    pub fn factorize(n: usize, mut a: Vec<f64>) -> Result<Self, LpError> {
        assert_eq!(a.len(), n * n);
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = a.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let (mut p, mut best) = (k, a[k * n + k].abs());
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best <= PIVOT_TOL * scale * 1e-3 {
                return Err(LpError::NumericalBreakdown {
                    pivot_tol: PIVOT_TOL,
                });
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / pivot;
                if f == 0.0 {
                    continue;
                }
                a[i * n + k] = f;
                for c in k + 1..n {
                    a[i * n + c] -= f * a[k * n + c];
                }
            }
        }
        Ok(LuFactors { n, lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `B x = rhs`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for k in 0..i {
                acc -= self.lu[i * n + k] * x[k];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self.lu[i * n + k] * x[k];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }

    /// Solves `Bᵀ x = rhs`.
    pub fn solve_transpose(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        // Bᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = rhs, Lᵀ w = z, x = Pᵀ w.
        let mut z = rhs.to_vec();
        for i in 0..n {
            let mut acc = z[i];
            for k in 0..i {
                acc -= self.lu[k * n + i] * z[k];
            }
            z[i] = acc / self.lu[i * n + i];
        }
        for i in (0..n).rev() {
            let mut acc = z[i];
            for k in i + 1..n {
                acc -= self.lu[k * n + i] * z[k];
            }
            z[i] = acc;
        }
        let mut x = vec![0.0; n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = z[i];
        }
        x
    }

    /// Dense row-major inverse.
    pub fn inverse(&self) -> Vec<f64> {
        let n = self.n;
        let mut inv = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        for c in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[c] = 1.0;
            let col = self.solve(&e);
            for r in 0..n {
                inv[r * n + c] = col[r];
            }
        }
        inv
    }
}
