//! Lawson–Hanson active-set solver for projecting onto a finitely generated
//! cone in a diagonal metric:
//!
//! ```text
//! minimize ½ (f − Gλ)ᵀ H (f − Gλ)   subject to λ ≥ 0
//! ```
//!
//! Columns of `G` are sparse. Only the Gram block of the passive set is ever
//! formed, so the cost per iteration is one sweep over the nonzeros plus a
//! Cholesky factorisation of size `|P|`.

use super::sparse::SparseVec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct NnlsOptions {
    /// A column enters the passive set only if its scaled gradient exceeds
    /// this (relative to `‖g‖_H ‖f‖_H`).
    pub dual_tol: f64,
    /// Relative pivot below which a column is treated as linearly dependent.
    pub pivot_tol: f64,
    pub max_iter: usize,
}

impl Default for NnlsOptions {
    fn default() -> Self {
        Self { dual_tol: 1e-13, pivot_tol: 1e-13, max_iter: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct ConeProjection {
    /// One multiplier per input column.
    pub lambda: Vec<f64>,
    /// `Gλ`, the projection of `f`.
    pub u: Vec<f64>,
    /// Columns with positive multiplier.
    pub passive: Vec<usize>,
    pub iterations: usize,
}

/// Projects `f` onto `cone(cols)` in the metric `⟨a,b⟩ = Σ a_i h_i b_i`.
///
/// `warm` lists columns likely to be in the optimal passive set, e.g. the
/// previous step's; it only affects speed.
pub fn project(
    cols: &[SparseVec],
    f: &[f64],
    h: &[f64],
    warm: &[usize],
    opts: &NnlsOptions,
) -> Result<ConeProjection> {
    let n = f.len();
    let p = cols.len();
    let max_iter = if opts.max_iter == 0 { 3 * p + 3 * n + 50 } else { opts.max_iter };
    let fnorm = f.iter().zip(h).map(|(a, w)| a * a * w).sum::<f64>().sqrt();
    let col_norm: Vec<f64> = cols.iter().map(|c| c.weighted_dot(c, h).sqrt()).collect();

    let mut lambda = vec![0.0; p];
    let mut in_p = vec![false; p];
    let mut excluded = vec![false; p];
    let mut passive: Vec<usize> = Vec::new();
    for &j in warm {
        if j < p && !in_p[j] && col_norm[j] > 0.0 {
            in_p[j] = true;
            passive.push(j);
        }
    }

    if fnorm == 0.0 || p == 0 {
        return Ok(ConeProjection { lambda, u: vec![0.0; n], passive: Vec::new(), iterations: 0 });
    }

    let solver = PassiveSolver::new(cols, f, h, opts.pivot_tol);

    // Warm start: shrink the guess until the unconstrained solution on it is
    // strictly positive, which is the invariant the main loop relies on.
    while !passive.is_empty() {
        let (s, dropped) = solver.solve(&passive);
        for j in dropped {
            in_p[j] = false;
        }
        passive.retain(|&j| in_p[j]);
        if passive.iter().all(|&j| s[j] > 0.0) {
            for &j in &passive {
                lambda[j] = s[j];
            }
            break;
        }
        for &j in &passive {
            if s[j] <= 0.0 {
                in_p[j] = false;
            }
        }
        passive.retain(|&j| in_p[j]);
    }

    let mut iterations = 0;
    let mut reopened = false;
    let mut resid = vec![0.0; n];
    loop {
        iterations += 1;
        if iterations > max_iter {
            let r = dual_violation(cols, &lambda, f, h, &col_norm, fnorm, &in_p, &mut resid);
            return Err(Error::NoConvergence { iterations, residual: r });
        }

        // Weighted residual H(f − Gλ).
        weighted_residual(cols, &lambda, f, h, &mut resid);
        let mut best = None;
        let mut best_w = 0.0;
        for j in 0..p {
            if in_p[j] || excluded[j] || col_norm[j] == 0.0 {
                continue;
            }
            let w = cols[j].dot(&resid) / col_norm[j];
            if w > opts.dual_tol * fnorm && w > best_w {
                best_w = w;
                best = Some(j);
            }
        }
        let Some(jstar) = best else {
            // Dependent columns set aside earlier may have become useful
            // after the passive set changed; give them one more chance.
            if !reopened && excluded.iter().any(|&e| e) {
                reopened = true;
                excluded.iter_mut().for_each(|e| *e = false);
                continue;
            }
            break;
        };

        in_p[jstar] = true;
        passive.push(jstar);
        loop {
            let (s, dropped) = solver.solve(&passive);
            if !dropped.is_empty() {
                for &j in &dropped {
                    in_p[j] = false;
                    excluded[j] = true;
                    lambda[j] = 0.0;
                }
                passive.retain(|&j| in_p[j]);
            }
            if passive.iter().all(|&j| s[j] > 0.0) {
                for &j in &passive {
                    lambda[j] = s[j];
                }
                break;
            }
            // Move toward s until the first multiplier hits zero.
            let mut alpha = f64::INFINITY;
            let mut first = passive[0];
            for &j in &passive {
                if s[j] <= 0.0 {
                    let a = lambda[j] / (lambda[j] - s[j]);
                    if a < alpha {
                        alpha = a;
                        first = j;
                    }
                }
            }
            for &j in &passive {
                let before = lambda[j];
                lambda[j] += alpha * (s[j] - lambda[j]);
                if j == first || (s[j] <= 0.0 && lambda[j] <= 1e-12 * before) {
                    in_p[j] = false;
                    lambda[j] = 0.0;
                    if j == jstar {
                        excluded[j] = true;
                    }
                }
            }
            passive.retain(|&j| in_p[j]);
            if passive.is_empty() {
                break;
            }
        }
    }

    let mut u = vec![0.0; n];
    for &j in &passive {
        cols[j].axpy(lambda[j], &mut u);
    }
    Ok(ConeProjection { lambda, u, passive, iterations })
}

fn weighted_residual(cols: &[SparseVec], lambda: &[f64], f: &[f64], h: &[f64], out: &mut [f64]) {
    out.copy_from_slice(f);
    for (j, c) in cols.iter().enumerate() {
        if lambda[j] != 0.0 {
            c.axpy(-lambda[j], out);
        }
    }
    for (o, w) in out.iter_mut().zip(h) {
        *o *= w;
    }
}

#[allow(clippy::too_many_arguments)]
fn dual_violation(
    cols: &[SparseVec],
    lambda: &[f64],
    f: &[f64],
    h: &[f64],
    col_norm: &[f64],
    fnorm: f64,
    in_p: &[bool],
    buf: &mut [f64],
) -> f64 {
    weighted_residual(cols, lambda, f, h, buf);
    let mut worst: f64 = 0.0;
    for (j, c) in cols.iter().enumerate() {
        if !in_p[j] && col_norm[j] > 0.0 {
            worst = worst.max(c.dot(buf) / (col_norm[j] * fnorm));
        }
    }
    worst
}

/// Solves the normal equations restricted to a passive set, detecting
/// numerically dependent columns during the factorisation.
struct PassiveSolver<'a> {
    cols: &'a [SparseVec],
    f: &'a [f64],
    h: &'a [f64],
    pivot_tol: f64,
}

impl<'a> PassiveSolver<'a> {
    fn new(cols: &'a [SparseVec], f: &'a [f64], h: &'a [f64], pivot_tol: f64) -> Self {
        Self { cols, f, h, pivot_tol }
    }

    /// Returns a dense-by-column solution vector (entries outside `passive`
    /// are zero) and the columns rejected as dependent.
    fn solve(&self, passive: &[usize]) -> (Vec<f64>, Vec<usize>) {
        let mut keep: Vec<usize> = passive.to_vec();
        let mut dropped = Vec::new();
        loop {
            let m = keep.len();
            let mut q = vec![0.0; m * m];
            for a in 0..m {
                for b in 0..=a {
                    let v = self.cols[keep[a]].weighted_dot(&self.cols[keep[b]], self.h);
                    q[a * m + b] = v;
                    q[b * m + a] = v;
                }
            }
            let c: Vec<f64> = keep
                .iter()
                .map(|&j| self.cols[j].iter().map(|(i, v)| v * self.h[i] * self.f[i]).sum())
                .collect();
            match cholesky(&q, m, self.pivot_tol) {
                Ok(l) => {
                    let mut s = chol_solve(&l, m, &c);
                    // One step of iterative refinement on the normal equations.
                    let r: Vec<f64> =
                        (0..m).map(|a| c[a] - (0..m).map(|b| q[a * m + b] * s[b]).sum::<f64>()).collect();
                    let d = chol_solve(&l, m, &r);
                    for (x, y) in s.iter_mut().zip(d) {
                        *x += y;
                    }
                    let mut full = vec![0.0; self.cols.len()];
                    for (a, &j) in keep.iter().enumerate() {
                        full[j] = s[a];
                    }
                    return (full, dropped);
                }
                Err(bad) => {
                    dropped.push(keep[bad]);
                    keep.remove(bad);
                }
            }
        }
    }
}

/// Dense Cholesky `Q = LLᵀ`, row-major lower triangle. Returns the index of
/// the first column whose pivot collapses relative to its diagonal.
fn cholesky(q: &[f64], m: usize, pivot_tol: f64) -> std::result::Result<Vec<f64>, usize> {
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let mut d = q[j * m + j];
        for k in 0..j {
            d -= l[j * m + k] * l[j * m + k];
        }
        if !(d > pivot_tol * q[j * m + j]) || d <= 0.0 {
            return Err(j);
        }
        let djj = d.sqrt();
        l[j * m + j] = djj;
        for i in (j + 1)..m {
            let mut s = q[i * m + j];
            for k in 0..j {
                s -= l[i * m + k] * l[j * m + k];
            }
            l[i * m + j] = s / djj;
        }
    }
    Ok(l)
}

fn chol_solve(l: &[f64], m: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..m {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * m + k] * y[k];
        }
        y[i] = s / l[i * m + i];
    }
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in (i + 1)..m {
            s -= l[k * m + i] * y[k];
        }
        y[i] = s / l[i * m + i];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(dense: &[&[f64]]) -> Vec<SparseVec> {
        dense.iter().map(|d| SparseVec::from_dense(d)).collect()
    }

    #[test]
    fn projects_onto_orthant_face() {
        // cone{e1, e2} in R^3, f = (-1, 2, 3): u = (0, 2, 0).
        let g = cols(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]);
        let r = project(&g, &[-1.0, 2.0, 3.0], &[1.0; 3], &[], &NnlsOptions::default()).unwrap();
        assert_eq!(r.passive, vec![1]);
        assert!((r.u[1] - 2.0).abs() < 1e-15 && r.u[0] == 0.0 && r.u[2] == 0.0);
    }

    #[test]
    fn duplicate_and_opposite_columns_are_harmless() {
        let g = cols(&[&[1.0, 1.0], &[1.0, 1.0], &[-1.0, -1.0], &[0.0, 1.0]]);
        let r = project(&g, &[-3.0, 1.0], &[1.0, 2.0], &[0, 1, 2, 3], &NnlsOptions::default()).unwrap();
        // The line ±(1,1) plus e2 spans R^2 as a cone containing f, so u = f.
        assert!((r.u[0] + 3.0).abs() < 1e-12 && (r.u[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_does_not_change_answer() {
        let g = cols(&[&[1.0, -1.0, 0.0], &[0.0, 1.0, -1.0], &[1.0, 1.0, 1.0], &[0.0, 0.0, 1.0]]);
        let f = [0.3, -0.7, 1.1];
        let h = [0.5, 2.0, 1.5];
        let cold = project(&g, &f, &h, &[], &NnlsOptions::default()).unwrap();
        let warm = project(&g, &f, &h, &[3, 2, 1, 0], &NnlsOptions::default()).unwrap();
        for i in 0..3 {
            assert!((cold.u[i] - warm.u[i]).abs() < 1e-12);
        }
    }
}
