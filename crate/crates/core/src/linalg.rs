//! Small dense kernels shared across the lab: an in-place thin QR used by the
//! cocycle cursor, compound (exterior-power) matrices, complex SVD wrappers,
//! and a symmetric eigensolver specialized for the block Jacobi operators
//! (tridiagonal QL plus a Householder reduction for the dense case).



use crate::error::{Error, Result};
use crate::{C64, CMatrix, RMatrix};

/// Thin QR by modified Gram-Schmidt with a second orthogonalization pass.
///
/// `a` is overwritten by Q (orthonormal columns); `rdiag` receives the
/// diagonal of R, which is real and positive by construction. The product of
/// the `rdiag` entries over repeated calls equals the volume stretch of the
/// corresponding column prefixes, which is what the cocycle cursor
/// accumulates.
pub fn thin_qr_inplace(a: &mut CMatrix, rdiag: &mut Vec<f64>) -> Result<()> {
    let nrows = a.nrows();
    let ncols = a.ncols();
    if ncols > nrows {
        return Err(Error::dim(format!("thin QR needs ncols <= nrows, got {nrows}x{ncols}")));
    }
    let data = a.as_mut_slice();
    rdiag.clear();
    for j in 0..ncols {
        let (head, tail) = data.split_at_mut(j * nrows);
        let col_j = &mut tail[..nrows];
        // Two passes keep orthogonality at machine precision even when a
        // transfer step is badly conditioned (heavy-tailed potentials).
        for _ in 0..2 {
            for i in 0..j {
                let col_i = &head[i * nrows..(i + 1) * nrows];
                let mut c = C64::new(0.0, 0.0);
                for r in 0..nrows {
                    c += col_i[r].conj() * col_j[r];
                }
                for r in 0..nrows {
                    col_j[r] -= c * col_i[r];
                }
            }
        }
        let norm = col_j.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > f64::MIN_POSITIVE) {
            return Err(Error::DegenerateFrame {
                context: format!("column {j} residual norm {norm:e} in QR step"),
            });
        }
        let inv = 1.0 / norm;
        for v in col_j.iter_mut() {
            *v *= inv;
        }
        rdiag.push(norm);
    }
    Ok(())
}

/// Max orthonormality defect `‖QᴴQ − I‖_max` of a frame.
pub fn orthonormality_defect(q: &CMatrix) -> f64 {
    let g = q.adjoint() * q;
    let mut defect = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
            defect = defect.max((g[(i, j)] - target).norm());
        }
    }
    defect
}

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
}

/// Symmetry defect `‖A − Aᵀ‖_max` of a real matrix.
pub fn symmetry_defect(m: &RMatrix) -> f64 {
    let mut defect = 0.0f64;
    for i in 0..m.nrows() {
        for j in 0..i {
            defect = defect.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    defect
}

/// Full SVD of a complex matrix: returns `(U, σ, V)` with σ sorted
/// non-increasing and `A = U diag(σ) Vᴴ`.
pub fn svd_full(a: &CMatrix) -> Result<(CMatrix, Vec<f64>, CMatrix)> {
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 1000)
        .ok_or_else(|| Error::Numeric { context: "SVD failed to converge".into() })?;
    let u = svd.u.expect("u requested");
    let v = svd.v_t.expect("v_t requested").adjoint();
    Ok((u, svd.singular_values.as_slice().to_vec(), v))
}

/// Singular values only, sorted non-increasing.
pub fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    let svd = a
        .clone()
        .try_svd(false, false, f64::EPSILON, 1000)
        .ok_or_else(|| Error::Numeric { context: "SVD failed to converge".into() })?;
    Ok(svd.singular_values.as_slice().to_vec())
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    (0..n).combinations(k).collect()
}

/// k-th compound matrix: entries are the k×k minors `det A[rows, cols]` over
/// lexicographically ordered k-subsets. Its operator norm is `s_1 ⋯ s_k(A)`,
/// and its largest entry modulus is the max-entry statistic used by the
/// interval-cover construction.
pub fn compound_matrix(a: &CMatrix, k: usize) -> Result<CMatrix> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::dim("compound matrix requires a square input"));
    }
    if k == 0 || k > n {
        return Err(Error::WedgeIndexOutOfRange { k, max: n });
    }
    let idx = subsets(n, k);
    let m = idx.len();
    let mut out = CMatrix::zeros(m, m);
    let mut minor = CMatrix::zeros(k, k);
    for (r, rows) in idx.iter().enumerate() {
        for (c, cols) in idx.iter().enumerate() {
            for (i, &ri) in rows.iter().enumerate() {
                for (j, &cj) in cols.iter().enumerate() {
                    minor[(i, j)] = a[(ri, cj)];
                }
            }
            out[(r, c)] = minor.determinant();
        }
    }
    Ok(out)
}

/// Eigenvalues of a symmetric tridiagonal matrix by the implicit QL method
/// with shifts, eigenvalues only. Returns them sorted ascending.
pub fn sym_tridiag_eigenvalues(diag: &[f64], offdiag: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if offdiag.len() + 1 != n {
        return Err(Error::dim(format!(
            "tridiagonal sizes: diag {n}, offdiag {} (want {})",
            offdiag.len(),
            n - 1
        )));
    }
    let mut d = diag.to_vec();
    let mut e = offdiag.to_vec();
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::Numeric {
                    context: format!("tridiagonal QL did not converge at row {l}"),
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p = 0.0f64;
            let mut underflow = false;
            let mut i = m;
            while i > l {
                let f = s * e[i - 1];
                let b = c * e[i - 1];
                r = f.hypot(g);
                e[i] = r;
                if r == 0.0 {
                    d[i] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i] - p;
                r = (d[i - 1] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i] = g + p;
                g = c * r - b;
                i -= 1;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(d)
}

/// Householder reduction of a dense symmetric matrix to tridiagonal form,
/// without accumulating the transform (eigenvalues-only path).
fn householder_tridiagonalize(a: &RMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = a.nrows();
    let mut m = a.clone_owned();
    let mut e = vec![0.0f64; n.saturating_sub(1)];
    let mut v = vec![0.0f64; n];
    let mut p = vec![0.0f64; n];
    for k in 0..n.saturating_sub(2) {
        let mut norm2 = 0.0;
        for i in k + 1..n {
            norm2 += m[(i, k)] * m[(i, k)];
        }
        let norm = norm2.sqrt();
        if norm == 0.0 {
            e[k] = 0.0;
            continue;
        }
        let alpha = -norm.copysign(m[(k + 1, k)]);
        e[k] = alpha;
        v[k + 1] = m[(k + 1, k)] - alpha;
        for i in k + 2..n {
            v[i] = m[(i, k)];
        }
        let beta: f64 = (k + 1..n).map(|i| v[i] * v[i]).sum();
        if beta == 0.0 {
            continue;
        }
        // p = 2 A v / beta on the trailing block
        for i in k + 1..n {
            let mut acc = 0.0;
            for j in k + 1..n {
                acc += m[(i, j)] * v[j];
            }
            p[i] = 2.0 * acc / beta;
        }
        let kappa: f64 = (k + 1..n).map(|i| v[i] * p[i]).sum::<f64>() / beta;
        for i in k + 1..n {
            p[i] -= kappa * v[i];
        }
        for i in k + 1..n {
            for j in k + 1..=i {
                let upd = v[i] * p[j] + p[i] * v[j];
                let val = m[(i, j)] - upd;
                m[(i, j)] = val;
                m[(j, i)] = val;
            }
        }
    }
    if n >= 2 {
        e[n - 2] = m[(n - 1, n - 2)];
    }
    let d: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    (d, e)
}

/// Eigenvalues of a dense real symmetric matrix, sorted ascending.
pub fn sym_eigenvalues_dense(a: &RMatrix) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("symmetric eigensolver requires a square matrix"));
    }
    let (d, e) = householder_tridiagonalize(a);
    sym_tridiag_eigenvalues(&d, &e)
}
