//! Exact small-matrix machinery for symplectic Schrödinger cocycles:
//! transfer matrices, QR-reorthogonalized products, wedge-power log-sums,
//! Lagrangian frames, slow subspaces, and principal angles.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::{C64, CMatrix, RMatrix};

/// Tolerance for potential-block symmetry.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Tolerance on frame orthonormality after a cursor step.
pub const ORTHONORMALITY_TOL: f64 = 1e-12;
/// Acceptance tolerance on the symplectic (isotropy) defect of a Lagrangian frame.
pub const LAGRANGIAN_TOL: f64 = 1e-8;

const ONE: C64 = C64::new(1.0, 0.0);
const ZERO: C64 = C64::new(0.0, 0.0);

/// The standard symplectic form `J = [[0, −I], [I, 0]]` on 2W-space.
pub fn symplectic_form(w: usize) -> CMatrix {
    let mut j = CMatrix::zeros(2 * w, 2 * w);
    for i in 0..w {
        j[(i, w + i)] = -ONE;
        j[(w + i, i)] = ONE;
    }
    j
}

/// Max-entry defect of `MᵀJM − J` (transpose, not conjugate transpose: the
/// complexified real symplectic group).
pub fn symplectic_defect(m: &CMatrix) -> f64 {
    let w = m.nrows() / 2;
    let j = symplectic_form(w);
    let residual = m.transpose() * &j * m - &j;
    linalg::max_abs(&residual)
}

/// One-step transfer matrix `[[zI − V, −I], [I, 0]]` of the block Schrödinger
/// operator at spectral parameter `z`.
#[derive(Debug, Clone)]
pub struct TransferMatrix {
    mat: CMatrix,
    z: C64,
    w: usize,
}

/// Build the transfer matrix for a symmetric potential block `V`.
pub fn build_transfer(z: C64, v: &RMatrix) -> Result<TransferMatrix> {
    let w = v.nrows();
    if v.ncols() != w {
        return Err(Error::dim(format!("potential block must be square, got {}x{}", v.nrows(), v.ncols())));
    }
    let defect = linalg::symmetry_defect(v);
    if defect > SYMMETRY_TOL {
        return Err(Error::NonSymmetricPotential { defect, tol: SYMMETRY_TOL });
    }
    let mut mat = CMatrix::zeros(2 * w, 2 * w);
    for i in 0..w {
        for jj in 0..w {
            mat[(i, jj)] = -C64::new(v[(i, jj)], 0.0);
        }
        mat[(i, i)] += z;
        mat[(i, w + i)] = -ONE;
        mat[(w + i, i)] = ONE;
    }
    Ok(TransferMatrix { mat, z, w })
}

impl TransferMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn symplectic_defect(&self) -> f64 {
        symplectic_defect(&self.mat)
    }
}

/// Sum of the k largest log singular values, `Σ_{j≤k} log s_j(A)` — the log
/// operator norm of the k-th exterior power.
///
/// Returns `-∞` when `A` has rank below `k`.
pub fn wedge_logsum(a: &CMatrix, k: usize) -> Result<f64> {
    let n = a.nrows().min(a.ncols());
    if k == 0 || k > n {
        return Err(Error::WedgeIndexOutOfRange { k, max: n });
    }
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numeric { context: "wedge_logsum input has non-finite entries".into() });
    }
    let s = linalg::singular_values(a)?;
    if s[k - 1] == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(s.iter().take(k).map(|v| v.ln()).sum())
}

/// State of a QR-reorthogonalized cocycle product: an orthonormal frame plus
/// the accumulated per-column log stretches.
///
/// For an initial frame made of the first `m` columns of the identity, the
/// partial sums `Σ_{i≤k} logstretch_i` track the log k-volume of the image of
/// those columns exactly (up to round-off), for every `k ≤ m`.
#[derive(Debug, Clone)]
pub struct CocycleCursor {
    frame: CMatrix,
    scratch: CMatrix,
    rdiag: Vec<f64>,
    logstretch: Vec<f64>,
    steps: u64,
    pending: usize,
    z: C64,
    w: usize,
}

impl CocycleCursor {
    /// Cursor carrying the full 2W identity frame.
    pub fn full(z: C64, w: usize) -> Self {
        let dim = 2 * w;
        Self::new_unchecked(z, w, CMatrix::identity(dim, dim))
    }

    /// Cursor carrying the first `m` columns of the identity.
    pub fn partial(z: C64, w: usize, m: usize) -> Result<Self> {
        let dim = 2 * w;
        if m == 0 || m > dim {
            return Err(Error::dim(format!("partial frame width {m} out of 1..={dim}")));
        }
        Ok(Self::new_unchecked(z, w, CMatrix::identity(dim, dim).columns(0, m).into_owned()))
    }

    /// Cursor starting from an arbitrary orthonormal frame.
    pub fn with_frame(z: C64, w: usize, frame: CMatrix) -> Result<Self> {
        if frame.nrows() != 2 * w {
            return Err(Error::dim(format!(
                "frame has {} rows, expected {}",
                frame.nrows(),
                2 * w
            )));
        }
        if frame.ncols() == 0 || frame.ncols() > 2 * w {
            return Err(Error::dim(format!("frame width {} out of range", frame.ncols())));
        }
        let defect = linalg::orthonormality_defect(&frame);
        if defect > 1e-10 {
            return Err(Error::DegenerateFrame {
                context: format!("initial frame orthonormality defect {defect:e}"),
            });
        }
        Ok(Self::new_unchecked(z, w, frame))
    }

    /// Cursor whose initial frame is a Lagrangian basis (the `Φ_n π_F^*`
    /// restricted product).
    pub fn from_lagrangian(z: C64, frame: &LagrangianFrame) -> Self {
        Self::new_unchecked(z, frame.w(), frame.basis().clone())
    }

    fn new_unchecked(z: C64, w: usize, frame: CMatrix) -> Self {
        let m = frame.ncols();
        let scratch = frame.clone();
        CocycleCursor {
            frame,
            scratch,
            rdiag: Vec::with_capacity(m),
            logstretch: vec![0.0; m],
            steps: 0,
            pending: 0,
            z,
            w,
        }
    }

    /// Multiply the frame by `T` without reorthogonalizing. Used by strided
    /// evolution; call [`CocycleCursor::reorthogonalize`] before reading
    /// stretches.
    pub fn apply(&mut self, t: &TransferMatrix) -> Result<()> {
        if t.w != self.w {
            return Err(Error::dim(format!("transfer width {} vs cursor width {}", t.w, self.w)));
        }
        if t.z != self.z {
            return Err(Error::param(format!("transfer z {} differs from cursor z {}", t.z, self.z)));
        }
        self.scratch.gemm(ONE, &t.mat, &self.frame, ZERO);
        std::mem::swap(&mut self.scratch, &mut self.frame);
        self.steps += 1;
        self.pending += 1;
        Ok(())
    }

    /// Thin-QR the frame and accumulate `log R_ii` into the stretches.
    pub fn reorthogonalize(&mut self) -> Result<()> {
        if self.pending == 0 {
            return Ok(());
        }
        linalg::thin_qr_inplace(&mut self.frame, &mut self.rdiag)?;
        for (ls, r) in self.logstretch.iter_mut().zip(self.rdiag.iter()) {
            *ls += r.ln();
        }
        self.pending = 0;
        Ok(())
    }

    /// One multiply-and-reorthogonalize step.
    pub fn step(&mut self, t: &TransferMatrix) -> Result<()> {
        self.apply(t)?;
        self.reorthogonalize()
    }

    pub fn logstretch(&self) -> &[f64] {
        &self.logstretch
    }

    /// Per-column rates `logstretch_i / steps`.
    pub fn rates(&self) -> Vec<f64> {
        let n = self.steps.max(1) as f64;
        self.logstretch.iter().map(|v| v / n).collect()
    }

    /// Stretches sorted non-increasing (robust accessor for the `s_j` proxy
    /// when early steps transiently reorder columns).
    pub fn sorted_logstretch(&self) -> Vec<f64> {
        let mut v = self.logstretch.clone();
        v.sort_by(|a, b| b.partial_cmp(a).expect("finite stretches"));
        v
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn frame(&self) -> &CMatrix {
        &self.frame
    }

    pub fn z(&self) -> C64 {
        self.z
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn ncols(&self) -> usize {
        self.frame.ncols()
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.frame)
    }
}

/// Dense cocycle product with scalar rescaling, for moderate `n` where the
/// full matrix (not just a frame) is needed: slow subspaces, wedge statistics,
/// covers. The scalar scale keeps entries inside f64 range; singular-value
/// logs are recovered by adding `log_scale` back.
#[derive(Debug, Clone)]
pub struct ScaledMatrix {
    mat: CMatrix,
    scratch: CMatrix,
    log_scale: f64,
}

impl ScaledMatrix {
    pub fn identity(dim: usize) -> Self {
        ScaledMatrix {
            mat: CMatrix::identity(dim, dim),
            scratch: CMatrix::zeros(dim, dim),
            log_scale: 0.0,
        }
    }

    /// Left-multiply by a transfer matrix, rescaling when entries grow large.
    pub fn apply_left(&mut self, t: &TransferMatrix) -> Result<()> {
        if t.mat.nrows() != self.mat.nrows() {
            return Err(Error::dim("transfer/product dimension mismatch"));
        }
        self.scratch.gemm(ONE, &t.mat, &self.mat, ZERO);
        std::mem::swap(&mut self.scratch, &mut self.mat);
        let mx = linalg::max_abs(&self.mat);
        if !(mx.is_finite() && mx > 0.0) {
            return Err(Error::Numeric { context: format!("product max entry {mx:e}") });
        }
        if mx > 1e120 || mx < 1e-120 {
            let inv = C64::new(1.0 / mx, 0.0);
            self.mat *= inv;
            self.log_scale += mx.ln();
        }
        Ok(())
    }

    /// The rescaled matrix; the true product is `exp(log_scale) · matrix()`.
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// `Σ_{j≤k} log s_j` of the true (unscaled) product.
    pub fn wedge_logsum(&self, k: usize) -> Result<f64> {
        Ok(wedge_logsum(&self.mat, k)? + k as f64 * self.log_scale)
    }

    /// `log max |entry|` of the true product.
    pub fn log_max_abs(&self) -> f64 {
        linalg::max_abs(&self.mat).ln() + self.log_scale
    }

    /// `log max |entry|` of the k-th compound of the true product.
    pub fn compound_log_max_abs(&self, k: usize) -> Result<f64> {
        let c = linalg::compound_matrix(&self.mat, k)?;
        Ok(linalg::max_abs(&c).ln() + k as f64 * self.log_scale)
    }

    /// Log singular values of the true product, sorted non-increasing.
    pub fn log_singular_values(&self) -> Result<Vec<f64>> {
        let s = linalg::singular_values(&self.mat)?;
        Ok(s.iter().map(|v| v.ln() + self.log_scale).collect())
    }
}

/// Orthonormal basis of a Lagrangian subspace: `span(basis) = (J·span(basis))ᵀ⊥`,
/// tested as `basisᵀ J basis = 0`.
#[derive(Debug, Clone)]
pub struct LagrangianFrame {
    basis: CMatrix,
}

impl LagrangianFrame {
    /// Validate and wrap a 2W×W orthonormal isotropic basis.
    pub fn new(basis: CMatrix) -> Result<Self> {
        if basis.nrows() != 2 * basis.ncols() || basis.ncols() == 0 {
            return Err(Error::dim(format!(
                "Lagrangian basis must be 2W x W, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        let ortho = linalg::orthonormality_defect(&basis);
        if ortho > 1e-8 {
            return Err(Error::DegenerateFrame {
                context: format!("basis orthonormality defect {ortho:e}"),
            });
        }
        let frame = LagrangianFrame { basis };
        let defect = frame.isotropy_defect();
        if defect > LAGRANGIAN_TOL {
            return Err(Error::NotLagrangian { defect, tol: LAGRANGIAN_TOL });
        }
        Ok(frame)
    }

    /// `span{(v, 0)}`: the Dirichlet-type frame `[I; 0]`.
    pub fn horizontal(w: usize) -> Self {
        let mut basis = CMatrix::zeros(2 * w, w);
        for i in 0..w {
            basis[(i, i)] = ONE;
        }
        LagrangianFrame { basis }
    }

    /// `span{e_{W+1..2W}}`: the frame `[0; I]`, default tie-break reference.
    pub fn vertical(w: usize) -> Self {
        let mut basis = CMatrix::zeros(2 * w, w);
        for i in 0..w {
            basis[(w + i, i)] = ONE;
        }
        LagrangianFrame { basis }
    }

    /// Dirichlet boundary frame (alias for [`LagrangianFrame::horizontal`]).
    pub fn dirichlet(w: usize) -> Self {
        Self::horizontal(w)
    }

    /// Reproducible Haar-like random real Lagrangian frame: the columns
    /// `[Re U; Im U]` of a unitary `U` obtained by QR of a complex Gaussian
    /// matrix are orthonormal and exactly isotropic.
    pub fn random(w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = CMatrix::zeros(w, w);
        for j in 0..w {
            for i in 0..w {
                let (a, b) = gauss_pair(&mut rng);
                g[(i, j)] = C64::new(a, b);
            }
        }
        let mut rdiag = Vec::new();
        linalg::thin_qr_inplace(&mut g, &mut rdiag).expect("Gaussian matrix is a.s. full rank");
        let mut basis = CMatrix::zeros(2 * w, w);
        for j in 0..w {
            for i in 0..w {
                basis[(i, j)] = C64::new(g[(i, j)].re, 0.0);
                basis[(w + i, j)] = C64::new(g[(i, j)].im, 0.0);
            }
        }
        // [Re U; Im U] is orthonormal because UᴴU = I; renormalize anyway to
        // absorb round-off.
        let mut rdiag2 = Vec::new();
        linalg::thin_qr_inplace(&mut basis, &mut rdiag2).expect("orthonormal up to round-off");
        LagrangianFrame { basis }
    }

    pub fn basis(&self) -> &CMatrix {
        &self.basis
    }

    pub fn w(&self) -> usize {
        self.basis.ncols()
    }

    /// `‖basisᵀ J basis‖_max`.
    pub fn isotropy_defect(&self) -> f64 {
        let j = symplectic_form(self.w());
        let m = self.basis.transpose() * &j * &self.basis;
        linalg::max_abs(&m)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.basis)
    }

    /// Largest imaginary part over entries; real frames are required by the
    /// finite-volume operator boundary.
    pub fn max_imag(&self) -> f64 {
        self.basis.iter().fold(0.0f64, |acc, v| acc.max(v.im.abs()))
    }

    /// Split a real frame into its upper (`ψ(1)`) and lower (`ψ(0)`) blocks.
    pub fn real_blocks(&self) -> Result<(RMatrix, RMatrix)> {
        if self.max_imag() > 1e-12 {
            return Err(Error::UnsupportedBoundary {
                context: "boundary frame must be real".into(),
            });
        }
        let w = self.w();
        let x = RMatrix::from_fn(w, w, |i, j| self.basis[(i, j)].re);
        let y = RMatrix::from_fn(w, w, |i, j| self.basis[(w + i, j)].re);
        Ok((x, y))
    }
}

fn gauss_pair(rng: &mut ChaCha8Rng) -> (f64, f64) {
    // Box-Muller; u in (0,1]
    let u: f64 = 1.0 - rng.gen::<f64>();
    let v: f64 = rng.gen();
    let r = (-2.0 * u.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * v;
    (r * t.cos(), r * t.sin())
}

/// Largest principal angle between two equal-dimension frames, in [0, π/2].
///
/// Computed from the sine route `σ_max((I − F₁F₁ᴴ) F₂)`, which stays accurate
/// for small angles.
pub fn principal_angle(f1: &LagrangianFrame, f2: &LagrangianFrame) -> Result<f64> {
    if f1.w() != f2.w() {
        return Err(Error::dim(format!("frame widths {} vs {}", f1.w(), f2.w())));
    }
    let cross = f1.basis.adjoint() * &f2.basis;
    let residual = &f2.basis - &f1.basis * cross;
    let s = linalg::singular_values(&residual)?;
    let sine = s.first().copied().unwrap_or(0.0).clamp(0.0, 1.0);
    Ok(sine.asin())
}

/// Slow Lagrangian subspace of an invertible symplectic product: the span of
/// right singular vectors for the W smallest singular values, with a
/// deterministic Lagrangian completion when the central singular values
/// degenerate.
pub fn slow_subspace(phi: &CMatrix) -> Result<LagrangianFrame> {
    slow_subspace_with_reference(phi, None)
}

/// As [`slow_subspace`], with an explicit tie-break reference frame. When the
/// central gap degenerates the completion is seeded from the reference
/// (defaulting to `span{e_{W+1..2W}}`), keeping scans continuous in `E` and
/// reproducible.
pub fn slow_subspace_with_reference(
    phi: &CMatrix,
    reference: Option<&LagrangianFrame>,
) -> Result<LagrangianFrame> {
    let dim = phi.nrows();
    if phi.ncols() != dim || dim % 2 != 0 || dim == 0 {
        return Err(Error::dim("slow_subspace needs a square 2W x 2W matrix"));
    }
    let w = dim / 2;
    let (_u, s, v) = linalg::svd_full(phi)?;
    if s[w - 1] == 0.0 {
        return Err(Error::DegenerateFrame { context: "matrix is singular beyond half rank".into() });
    }
    let rel_gap = (s[w - 1] - s[w]) / s[w - 1];
    if rel_gap > 1e-6 {
        let basis = v.columns(w, w).into_owned();
        return LagrangianFrame::new(lagrangian_polish(basis));
    }

    // Degenerate central cluster: keep the strictly contracted directions and
    // complete to a Lagrangian frame inside the cluster, biased toward the
    // reference frame.
    let vertical = LagrangianFrame::vertical(w);
    let reference = reference.unwrap_or(&vertical);
    let center = (s[w - 1] * s[w]).sqrt();
    let band = 1e-5;
    let strict: Vec<usize> = (0..dim).filter(|&j| s[j] < center * (1.0 - band)).collect();
    let cluster: Vec<usize> = (0..dim)
        .filter(|&j| s[j] >= center * (1.0 - band) && s[j] <= center * (1.0 + band))
        .collect();
    let j_form = symplectic_form(w);

    let mut result: Vec<DVector<C64>> = Vec::with_capacity(w);
    let mut constraints: Vec<DVector<C64>> = Vec::new();
    let push_member = |col: DVector<C64>,
                           result: &mut Vec<DVector<C64>>,
                           constraints: &mut Vec<DVector<C64>>| {
        let g = (&j_form * &col).map(|z| z.conj());
        for basis_vec in [col.clone(), g] {
            let mut r = basis_vec;
            for c in constraints.iter() {
                let proj = c.dotc(&r);
                r -= c * proj;
            }
            let norm = r.norm();
            if norm > 1e-10 {
                constraints.push(r / C64::new(norm, 0.0));
            }
        }
        result.push(col);
    };

    for &idx in strict.iter().rev().take(w) {
        push_member(v.column(idx).into_owned(), &mut result, &mut constraints);
    }

    // Candidates: reference columns projected onto the cluster span, ordered
    // by projection norm, then the cluster directions themselves as fallback.
    let p = {
        let mut m = CMatrix::zeros(dim, cluster.len());
        for (c, &idx) in cluster.iter().enumerate() {
            m.set_column(c, &v.column(idx));
        }
        m
    };
    let mut candidates: Vec<(usize, f64, DVector<C64>)> = Vec::new();
    for jc in 0..w {
        let b = reference.basis().column(jc).into_owned();
        let coords = p.adjoint() * &b;
        let proj = &p * coords;
        let norm = proj.norm();
        candidates.push((jc, -norm, proj));
    }
    candidates.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut ordered: Vec<DVector<C64>> = candidates.into_iter().map(|(_, _, v)| v).collect();
    for c in 0..p.ncols() {
        ordered.push(p.column(c).into_owned());
    }

    for cand in ordered {
        if result.len() == w {
            break;
        }
        let mut r = cand;
        for c in constraints.iter() {
            let proj = c.dotc(&r);
            r -= c * proj;
        }
        let norm = r.norm();
        if norm > 1e-6 {
            push_member(r / C64::new(norm, 0.0), &mut result, &mut constraints);
        }
    }
    if result.len() < w {
        return Err(Error::DegenerateFrame {
            context: "could not complete a Lagrangian frame in the degenerate cluster".into(),
        });
    }
    let mut basis = CMatrix::zeros(dim, w);
    for (c, col) in result.iter().enumerate() {
        basis.set_column(c, col);
    }
    LagrangianFrame::new(lagrangian_polish(basis))
}

/// Gram-Schmidt sweep that enforces both orthonormality and isotropy
/// (`l_iᵀ J l_j = 0`), scrubbing round-off from an almost-Lagrangian basis.
fn lagrangian_polish(mut basis: CMatrix) -> CMatrix {
    let w = basis.ncols();
    let j_form = symplectic_form(w);
    for _sweep in 0..2 {
        for jcol in 0..w {
            let mut c = basis.column(jcol).into_owned();
            for i in 0..jcol {
                let li = basis.column(i).into_owned();
                let proj = li.dotc(&c);
                c -= &li * proj;
                let gi = (&j_form * &li).map(|z| z.conj());
                let gproj = gi.dotc(&c);
                c -= &gi * gproj;
            }
            let norm = c.norm();
            if norm > 0.0 {
                c /= C64::new(norm, 0.0);
            }
            basis.set_column(jcol, &c);
        }
    }
    basis
}
