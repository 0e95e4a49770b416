//! Independent reference computations for the integration tests. Nothing
//! here calls into the scheme or the solver.

#![allow(dead_code)]

/// Dense Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        assert!(a[c][c] != 0.0, "singular matrix");
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// The implicit two-point flux system on a 2×2 grid of squares of side
/// `h`, written out by hand: every interior edge has `τ = 1`, every cell has
/// area `h²`. Cells are numbered row by row from the lower left.
pub struct TwoByTwo {
    pub h: f64,
    pub dt: f64,
    pub delta: f64,
    pub mu: f64,
    pub n_prev: [f64; 4],
}

pub const PAIRS: [(usize, usize); 4] = [(0, 1), (2, 3), (0, 2), (1, 3)];

impl TwoByTwo {
    /// Residual of the 8 equations at `x = (n_0..n_3, S_0..S_3)`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let m = self.h * self.h;
        let (n, s) = x.split_at(4);
        let mut r = vec![0.0; 8];
        for k in 0..4 {
            r[k] = m * (n[k] - self.n_prev[k]) / self.dt;
            r[4 + k] = m * s[k] - self.mu * m * n[k];
        }
        for &(k, l) in &PAIRS {
            let ds = s[l] - s[k];
            // Flux from k to l: diffusion plus upwinded drift up the signal.
            let flux = (n[k] - n[l]) + ds.max(0.0) * n[k] - (-ds).max(0.0) * n[l];
            r[k] += flux;
            r[l] -= flux;
            // Signal equation: Σ τ (S_K − S_L) + m S_K = μ m n_K + δ Σ τ (n_L − n_K).
            let sflux = (s[k] - s[l]) - self.delta * (n[l] - n[k]);
            r[4 + k] += sflux;
            r[4 + l] -= sflux;
        }
        r
    }

    /// Newton with a central-difference Jacobian, from `x0`.
    pub fn newton(&self, x0: &[f64]) -> (Vec<f64>, f64) {
        let mut x = x0.to_vec();
        let mut norm = f64::INFINITY;
        for _ in 0..50 {
            let r = self.residual(&x);
            norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if norm < 1e-13 {
                break;
            }
            let mut jac = vec![vec![0.0; 8]; 8];
            for j in 0..8 {
                let e = 1e-7 * x[j].abs().max(1.0);
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += e;
                xm[j] -= e;
                let (rp, rm) = (self.residual(&xp), self.residual(&xm));
                for i in 0..8 {
                    jac[i][j] = (rp[i] - rm[i]) / (2.0 * e);
                }
            }
            let dx = dense_solve(jac, r.iter().map(|v| -v).collect());
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        (x, norm)
    }
}

/// Eigenvalue of the discrete Neumann Laplacian on a uniform 1D grid of
/// `n` cells and width `len` for the cosine mode with `k` half-waves.
pub fn neumann_eigenvalue_1d(n: usize, len: f64, k: usize) -> f64 {
    let h = len / n as f64;
    2.0 * (1.0 - (std::f64::consts::PI * k as f64 / n as f64).cos()) / (h * h)
}
