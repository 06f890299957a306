//! One-sided Jacobi SVD and the nearest-orthonormal (polar) projection.
//!
//! Jacobi is chosen over QR-based orthogonalisation because gradient
//! matrices are routinely rank deficient; the rotation sweeps never divide
//! by a small singular value, so near-zero directions stay stable. Output
//! is a deterministic function of the input bits.

use super::{frobenius_norm, LinalgError, Matrix};

/// Relative off-diagonal tolerance for sweep convergence.
const JACOBI_TOL: f64 = 1e-12;
/// Sweep budget before reporting non-convergence.
const MAX_SWEEPS: usize = 30;
/// Singular values below `RANK_TOL * sigma_max` are treated as zero and
/// their left singular vectors completed by Gram-Schmidt.
const RANK_TOL: f64 = 1e-14;

/// Thin SVD: `u` is P×k, `sigma` has k non-increasing non-negative entries,
/// `vt` is k×N, with k = min(P, N).
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub vt: Matrix,
}

impl SvdResult {
    /// Reconstruct `U · diag(sigma) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let k = self.sigma.len();
        let mut scaled = self.u.clone();
        for r in 0..scaled.rows() {
            for c in 0..k {
                let v = scaled.get(r, c) * self.sigma[c];
                scaled.set(r, c, v);
            }
        }
        scaled.matmul(&self.vt).expect("k dims agree")
    }
}

/// Singular value decomposition by cyclic one-sided Jacobi.
pub fn svd(g: &Matrix) -> Result<SvdResult, LinalgError> {
    if g.rows() == 0 || g.cols() == 0 {
        return Err(LinalgError::EmptyMatrix);
    }
    for (i, &x) in g.data().iter().enumerate() {
        if !x.is_finite() {
            return Err(LinalgError::NonFinite {
                row: i / g.cols(),
                col: i % g.cols(),
            });
        }
    }
    if g.rows() >= g.cols() {
        svd_tall(g)
    } else {
        // G = (Gᵀ)ᵀ = (U' Σ V'ᵀ)ᵀ = V' Σ U'ᵀ.
        let t = svd_tall(&g.transposed())?;
        Ok(SvdResult {
            u: vt_to_v(&t.vt),
            sigma: t.sigma,
            vt: t.u.transposed(),
        })
    }
}

/// Nearest orthonormal matrix `O = U·Vᵀ` (the polar factor). For tall or
/// square input the columns are orthonormal; for wide input the rows are
/// (the nearest semi-orthogonal matrix).
pub fn nearest_orthonormal(g: &Matrix) -> Result<Matrix, LinalgError> {
    if frobenius_norm(g) == 0.0 {
        return Err(LinalgError::DegenerateInput);
    }
    let dec = svd(g)?;
    dec.u.matmul(&dec.vt)
}

fn vt_to_v(vt: &Matrix) -> Matrix {
    vt.transposed()
}

/// One-sided Jacobi on a tall (m ≥ n) matrix. Rotations are applied on the
/// right so the columns of the working matrix converge to `U·Σ` while `V`
/// accumulates the rotations.
fn svd_tall(g: &Matrix) -> Result<SvdResult, LinalgError> {
    let m = g.rows();
    let n = g.cols();

    // Column-major working storage keeps the rotated columns contiguous.
    let mut w: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..m).map(|r| g.get(r, c)).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| {
            let mut col = vec![0.0; n];
            col[c] = 1.0;
            col
        })
        .collect();

    let mut converged = false;
    for _sweep in 0..MAX_SWEEPS {
        let mut worst = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (app, aqq, apq) = gram_entries(&w[p], &w[q]);
                let denom = (app * aqq).sqrt();
                if denom == 0.0 {
                    continue;
                }
                let rel = apq.abs() / denom;
                if rel <= JACOBI_TOL {
                    continue;
                }
                worst = worst.max(rel);
                let (c, s) = rotation(app, aqq, apq);
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if worst <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged && n > 1 {
        // Re-check: the last sweep may have finished the job.
        let mut residual = 0.0f64;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let (app, aqq, apq) = gram_entries(&w[p], &w[q]);
                let denom = (app * aqq).sqrt();
                if denom > 0.0 {
                    residual = residual.max(apq.abs() / denom);
                }
            }
        }
        if residual > JACOBI_TOL {
            return Err(LinalgError::NonConvergence {
                residual,
                sweeps: MAX_SWEEPS,
            });
        }
    }

    // Singular values and deterministic non-increasing order (stable on
    // ties by original column index).
    let norms: Vec<f64> = w.iter().map(|col| norm(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap().then(a.cmp(&b)));

    let sigma_max = order.first().map(|&i| norms[i]).unwrap_or(0.0);
    let cutoff = RANK_TOL * sigma_max;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut zero_slots = Vec::new();
    for (slot, &idx) in order.iter().enumerate() {
        let s = norms[idx];
        if s > cutoff && s > 0.0 {
            sigma.push(s);
            let inv = 1.0 / s;
            u_cols.push(w[idx].iter().map(|x| x * inv).collect());
        } else {
            sigma.push(0.0);
            u_cols.push(vec![0.0; m]);
            zero_slots.push(slot);
        }
    }
    for slot in zero_slots {
        u_cols[slot] = complete_orthonormal(&u_cols, m);
    }

    let mut u = Matrix::zeros(m, n);
    for (c, col) in u_cols.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            u.set(r, c, x);
        }
    }
    let mut vt = Matrix::zeros(n, n);
    for (k, &idx) in order.iter().enumerate() {
        for i in 0..n {
            vt.set(k, i, v[idx][i]);
        }
    }
    Ok(SvdResult { u, sigma, vt })
}

/// Fixed 4-lane accumulation so the three reductions vectorise; the
/// summation order is defined by the code alone.
fn gram_entries(cp: &[f64], cq: &[f64]) -> (f64, f64, f64) {
    let mut app = [0.0f64; 4];
    let mut aqq = [0.0f64; 4];
    let mut apq = [0.0f64; 4];
    let chunks = cp.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        for l in 0..4 {
            let p = cp[i + l];
            let q = cq[i + l];
            app[l] += p * p;
            aqq[l] += q * q;
            apq[l] += p * q;
        }
    }
    let (mut a, mut b, mut x) = (0.0, 0.0, 0.0);
    for i in chunks * 4..cp.len() {
        a += cp[i] * cp[i];
        b += cq[i] * cq[i];
        x += cp[i] * cq[i];
    }
    (
        (app[0] + app[1]) + (app[2] + app[3]) + a,
        (aqq[0] + aqq[1]) + (aqq[2] + aqq[3]) + b,
        (apq[0] + apq[1]) + (apq[2] + apq[3]) + x,
    )
}

/// Jacobi rotation zeroing the (p,q) Gram entry.
fn rotation(app: f64, aqq: f64, apq: f64) -> (f64, f64) {
    let zeta = (aqq - app) / (2.0 * apq);
    let t = if zeta >= 0.0 {
        1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
    } else {
        -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    (c, c * t)
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    debug_assert!(p < q);
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for i in 0..cp.len() {
        let xp = cp[i];
        let xq = cq[i];
        cp[i] = c * xp - s * xq;
        cq[i] = s * xp + c * xq;
    }
}

fn norm(col: &[f64]) -> f64 {
    col.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Deterministic completion of a left singular vector for a zero singular
/// value: take the standard basis vector with the largest residual against
/// the current columns, orthogonalise twice, normalise. With orthonormal
/// columns the squared residual of e_i is 1 − Σ_k u_k[i]², so the best
/// candidate falls out of the row norms.
fn complete_orthonormal(u_cols: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut row_norm_sq = vec![0.0f64; m];
    for col in u_cols {
        for (slot, &x) in row_norm_sq.iter_mut().zip(col) {
            *slot += x * x;
        }
    }
    let mut best = 0;
    for i in 1..m {
        if row_norm_sq[i] < row_norm_sq[best] {
            best = i;
        }
    }
    let mut col = vec![0.0; m];
    col[best] = 1.0;
    project_out(&mut col, u_cols);
    project_out(&mut col, u_cols);
    let n = norm(&col);
    for x in &mut col {
        *x /= n;
    }
    col
}

fn project_out(cand: &mut [f64], u_cols: &[Vec<f64>]) {
    for col in u_cols {
        let n2 = crate::scalar::dot(col.as_slice(), col.as_slice());
        if n2 == 0.0 {
            continue;
        }
        let d = crate::scalar::dot(cand, col.as_slice());
        for i in 0..cand.len() {
            cand[i] -= d * col[i];
        }
    }
}
