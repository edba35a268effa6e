//! Finite-volume operator side: block Jacobi matrices with Lagrangian
//! boundary data, integrated density of states, the Thouless cross-check
//! against pooled eigenvalues, and Green-function decay probes.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::drivers::PotentialModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::stats::{self, derive_seed};
use crate::symplectic::LagrangianFrame;
use crate::{C64, CMatrix, RMatrix};

/// Dense eigensolves above this size are refused (desk-scale ceiling).
pub const MAX_DENSE_DIM: usize = 8000;

/// Block Jacobi operator on `L` sites with identity hopping and a Lagrangian
/// boundary condition folded into the first diagonal block.
///
/// A real boundary frame `[X; Y]` with invertible `X` pins `ψ(0) = Θψ(1)`
/// with `Θ = Y X⁻¹` (symmetric by the Lagrangian property), so the operator
/// acts as the plain truncation with `V_1` replaced by `V_1 + Θ`.
#[derive(Debug, Clone)]
pub struct FiniteOperator {
    w: usize,
    l: usize,
    blocks: Vec<RMatrix>,
    theta: RMatrix,
}

/// Assemble the finite-volume operator for one orbit realization.
pub fn assemble_finite(
    model: &PotentialModel,
    seed: u64,
    l: usize,
    boundary: &LagrangianFrame,
) -> Result<FiniteOperator> {
    if l < 2 {
        return Err(Error::param(format!("need at least 2 sites, got {l}")));
    }
    let w = model.w();
    if boundary.w() != w {
        return Err(Error::dim(format!("boundary width {} vs model width {w}", boundary.w())));
    }
    let defect = boundary.isotropy_defect();
    if defect > crate::symplectic::LAGRANGIAN_TOL {
        return Err(Error::NotLagrangian { defect, tol: crate::symplectic::LAGRANGIAN_TOL });
    }
    let (x, y) = boundary.real_blocks()?;
    // Θ = Y X⁻¹; boundary frames with singular X (Neumann-type components)
    // are outside the supported family
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(smax > 0.0) || smin < 1e-8 * smax {
        return Err(Error::UnsupportedBoundary {
            context: "boundary frame has a (near-)singular upper block".into(),
        });
    }
    let xinv = x.try_inverse().ok_or(Error::UnsupportedBoundary {
        context: "boundary upper block is not invertible".into(),
    })?;
    let mut theta = y * xinv;
    // symmetric up to round-off by the Lagrangian property
    theta = 0.5 * (&theta + theta.transpose());
    let orbit = model.orbit(seed);
    let blocks: Vec<RMatrix> = (1..=l as u64).map(|n| orbit.at(n)).collect();
    Ok(FiniteOperator { w, l, blocks, theta })
}

impl FiniteOperator {
    pub fn w(&self) -> usize {
        self.w
    }

    pub fn sites(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.w * self.l
    }

    /// Effective diagonal block at site `i` (1-based): `V_1 + Θ` at the edge.
    pub fn diagonal_block(&self, i: usize) -> RMatrix {
        if i == 1 {
            &self.blocks[0] + &self.theta
        } else {
            self.blocks[i - 1].clone()
        }
    }

    pub fn to_dense(&self) -> RMatrix {
        let d = self.dim();
        let mut h = RMatrix::zeros(d, d);
        for site in 1..=self.l {
            let blk = self.diagonal_block(site);
            let off = (site - 1) * self.w;
            for a in 0..self.w {
                for b in 0..self.w {
                    h[(off + a, off + b)] = blk[(a, b)];
                }
            }
            if site < self.l {
                for a in 0..self.w {
                    h[(off + a, off + self.w + a)] = 1.0;
                    h[(off + self.w + a, off + a)] = 1.0;
                }
            }
        }
        h
    }

    /// All eigenvalues, sorted ascending. Scalar case goes through the
    /// tridiagonal QL path; block case reduces a dense matrix.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        if self.w == 1 {
            let diag: Vec<f64> = (1..=self.l).map(|i| self.diagonal_block(i)[(0, 0)]).collect();
            let off = vec![1.0f64; self.l - 1];
            linalg::sym_tridiag_eigenvalues(&diag, &off)
        } else {
            if self.dim() > MAX_DENSE_DIM {
                return Err(Error::param(format!(
                    "dense eigensolve of dimension {} exceeds the ceiling {MAX_DENSE_DIM}",
                    self.dim()
                )));
            }
            linalg::sym_eigenvalues_dense(&self.to_dense())
        }
    }
}

/// Pooled finite-volume eigenvalues over independent realizations, with the
/// empirical eigenvalue-counting CDF.
#[derive(Debug, Clone, Serialize)]
pub struct IdsEstimate {
    pub w: usize,
    pub l: usize,
    pub samples: usize,
    /// Sorted pooled eigenvalues.
    pub eigenvalues: Vec<f64>,
}

pub fn ids_estimate(model: &PotentialModel, l: usize, samples: usize, seed: u64) -> Result<IdsEstimate> {
    if samples == 0 {
        return Err(Error::param("samples must be at least 1"));
    }
    let boundary = LagrangianFrame::dirichlet(model.w());
    let pools: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let op = assemble_finite(model, derive_seed(seed, i as u64), l, &boundary)?;
            op.eigenvalues()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut eigenvalues: Vec<f64> = pools.into_iter().flatten().collect();
    eigenvalues.sort_by(|a, b| a.partial_cmp(b).expect("finite eigenvalues"));
    Ok(IdsEstimate { w: model.w(), l, samples, eigenvalues })
}

impl IdsEstimate {
    /// Empirical CDF `κ(E)`: fraction of pooled eigenvalues at or below `E`.
    pub fn kappa(&self, e: f64) -> f64 {
        let count = self.eigenvalues.partition_point(|&x| x <= e);
        count as f64 / self.eigenvalues.len() as f64
    }

    pub fn support_hull(&self) -> (f64, f64) {
        (
            *self.eigenvalues.first().expect("non-empty pool"),
            *self.eigenvalues.last().expect("non-empty pool"),
        )
    }

    /// Mean of `log|z − E_i|` over the pool: the discrete logarithmic
    /// potential of the eigenvalue-counting measure.
    pub fn log_potential(&self, z: C64) -> f64 {
        let logs: Vec<f64> = self.eigenvalues.iter().map(|&e| (z - C64::new(e, 0.0)).norm().ln()).collect();
        stats::pairwise_sum(&logs) / logs.len() as f64
    }

    /// Binned increments of κ over the given edges.
    pub fn bin_increments(&self, edges: &[f64]) -> Vec<f64> {
        edges.windows(2).map(|w| self.kappa(w[1]) - self.kappa(w[0])).collect()
    }

    /// CSV rows `E,kappa` over the pooled eigenvalues.
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "E,kappa")?;
        let n = self.eigenvalues.len();
        for (i, e) in self.eigenvalues.iter().enumerate() {
            writeln!(out, "{e:.16e},{:.16e}", (i + 1) as f64 / n as f64)?;
        }
        Ok(())
    }
}

/// Why a Thouless test point was left out of the sup.
#[derive(Debug, Clone, Serialize)]
pub struct ExcludedPoint {
    pub z_re: f64,
    pub z_im: f64,
    pub reason: String,
}

/// Sup-residual between exponent estimates and the pooled-eigenvalue
/// logarithmic potential.
#[derive(Debug, Clone, Serialize)]
pub struct ThoulessReport {
    pub residual: f64,
    pub per_point: Vec<(f64, f64, f64)>,
    pub excluded: Vec<ExcludedPoint>,
}

/// Compare `Γ̂_W(z)/W` estimates against `mean_i log|z − E_i|` over test
/// points. Points within 0.5 of the spectrum region or within `1/L` of a
/// pooled eigenvalue are excluded with a diagnostic.
pub fn thouless_residual(points: &[(C64, f64)], ids: &IdsEstimate) -> Result<ThoulessReport> {
    if points.is_empty() {
        return Err(Error::param("no test points supplied"));
    }
    let hull = ids.support_hull();
    let mut residual = 0.0f64;
    let mut per_point = Vec::new();
    let mut excluded = Vec::new();
    for &(z, gamma_mean) in points {
        let dist_hull = if z.re < hull.0 {
            C64::new(z.re - hull.0, z.im).norm()
        } else if z.re > hull.1 {
            C64::new(z.re - hull.1, z.im).norm()
        } else {
            z.im.abs()
        };
        if dist_hull < 0.5 {
            excluded.push(ExcludedPoint {
                z_re: z.re,
                z_im: z.im,
                reason: format!("distance {dist_hull:.3} to the spectrum region below 0.5"),
            });
            continue;
        }
        let min_gap = ids
            .eigenvalues
            .iter()
            .map(|&e| (z - C64::new(e, 0.0)).norm())
            .fold(f64::INFINITY, f64::min);
        if min_gap < 1.0 / ids.l as f64 {
            excluded.push(ExcludedPoint {
                z_re: z.re,
                z_im: z.im,
                reason: format!("within {min_gap:.2e} of a pooled eigenvalue"),
            });
            continue;
        }
        let pot = ids.log_potential(z);
        let r = (gamma_mean - pot).abs();
        per_point.push((z.re, z.im, r));
        if r > residual {
            residual = r;
        }
    }
    if per_point.is_empty() {
        return Err(Error::param("every test point was excluded"));
    }
    Ok(ThoulessReport { residual, per_point, excluded })
}

/// Standard Thouless test points: sweeps along `Im z ∈ {0.5, 1, 2}` above the
/// spectrum hull plus a far circle `|z| = 100`.
pub fn default_test_points(hull: (f64, f64)) -> Vec<C64> {
    let mut points = Vec::new();
    let (lo, hi) = (hull.0 - 1.0, hull.1 + 1.0);
    for im in [0.5, 1.0, 2.0] {
        for i in 0..7 {
            let re = lo + (hi - lo) * i as f64 / 6.0;
            points.push(C64::new(re, im));
        }
    }
    for i in 0..8 {
        let th = std::f64::consts::TAU * i as f64 / 8.0;
        points.push(C64::new(100.0 * th.cos(), 100.0 * th.sin()));
    }
    points
}

/// Off-diagonal resolvent decay probe: block norms `‖G_z(1,n)‖` and their
/// log-linear fit.
#[derive(Debug, Clone, Serialize)]
pub struct GreenProbe {
    pub z_re: f64,
    pub z_im: f64,
    pub l: usize,
    pub sites: Vec<usize>,
    pub norms: Vec<f64>,
    /// Decay rate (minus the fitted slope of `log ‖G(1,n)‖` against n).
    pub rate: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `rate / log(1 + |Im z|)`: the per-model Combes-Thomas ratio.
    pub ct_ratio: f64,
}

impl GreenProbe {
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,norm")?;
        for (n, norm) in self.sites.iter().zip(self.norms.iter()) {
            writeln!(out, "{n},{norm:.16e}")?;
        }
        Ok(())
    }
}

/// First block column `G(·,1)` of `(H − z)⁻¹` by block LU (Thomas) sweep.
/// By symmetry of the complex-symmetric resolvent, `G(1,n) = G(n,1)ᵀ`.
pub fn green_first_column(
    model: &PotentialModel,
    seed: u64,
    z: C64,
    l: usize,
    boundary: &LagrangianFrame,
) -> Result<Vec<CMatrix>> {
    if z.im == 0.0 {
        return Err(Error::RealSpectralParameter);
    }
    let op = assemble_finite(model, seed, l, boundary)?;
    let w = op.w();
    let to_c = |m: &RMatrix| CMatrix::from_fn(w, w, |i, j| C64::new(m[(i, j)], 0.0));
    let zid = CMatrix::from_diagonal(&DVector::from_element(w, z));
    let mut dinv: Vec<CMatrix> = Vec::with_capacity(l);
    for site in 1..=l {
        let mut d = to_c(&op.diagonal_block(site)) - &zid;
        if let Some(prev) = dinv.last() {
            d -= prev;
        }
        let inv = d.try_inverse().ok_or_else(|| Error::Numeric {
            context: format!("singular pivot block at site {site}"),
        })?;
        dinv.push(inv);
    }
    // forward sweep: Y_1 = I, Y_i = −D_{i−1}⁻¹ Y_{i−1}
    let mut y: Vec<CMatrix> = Vec::with_capacity(l);
    y.push(CMatrix::identity(w, w));
    for site in 2..=l {
        let next = -(&dinv[site - 2] * &y[site - 2]);
        y.push(next);
    }
    // back substitution: G_L = D_L⁻¹ Y_L, G_i = D_i⁻¹ (Y_i − G_{i+1})
    let mut g = vec![CMatrix::zeros(w, w); l];
    g[l - 1] = &dinv[l - 1] * &y[l - 1];
    for site in (1..l).rev() {
        let rhs = &y[site - 1] - &g[site];
        g[site - 1] = &dinv[site - 1] * rhs;
    }
    Ok(g)
}

/// Probe `‖G_z(1,n)‖` for `n` in `n_range` (inclusive) on an `l`-site volume
/// with Dirichlet boundary, fitting the exponential decay rate.
pub fn green_block(
    model: &PotentialModel,
    seed: u64,
    z: C64,
    n_range: (usize, usize),
    l: usize,
) -> Result<GreenProbe> {
    let (n_lo, n_hi) = n_range;
    if n_lo == 0 || n_hi < n_lo {
        return Err(Error::param(format!("bad site range {n_lo}..={n_hi}")));
    }
    if l < n_hi + 10 {
        return Err(Error::param(format!("need l >= {} for range end {n_hi}", n_hi + 10)));
    }
    let boundary = LagrangianFrame::dirichlet(model.w());
    let column = green_first_column(model, seed, z, l, &boundary)?;
    let sites: Vec<usize> = (n_lo..=n_hi).collect();
    let mut norms = Vec::with_capacity(sites.len());
    for &n in &sites {
        let s = linalg::singular_values(&column[n - 1])?;
        norms.push(s[0]);
    }
    let xs: Vec<f64> = sites.iter().map(|&n| n as f64).collect();
    let ys: Vec<f64> = norms.iter().map(|&v| v.ln()).collect();
    let fit = stats::linear_fit(&xs, &ys)
        .ok_or_else(|| Error::param("need at least two sites to fit a rate"))?;
    Ok(GreenProbe {
        z_re: z.re,
        z_im: z.im,
        l,
        sites,
        norms,
        rate: -fit.slope,
        intercept: fit.intercept,
        r2: fit.r2,
        ct_ratio: -fit.slope / (1.0 + z.im.abs()).ln(),
    })
}
