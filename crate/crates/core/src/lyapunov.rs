//! Lyapunov spectrum estimation, large-deviation tails, and the doubling
//! monotonicity of the expected wedge statistics.

use rayon::prelude::*;
use serde::Serialize;

use crate::drivers::{Orbit, PotentialModel};
use crate::error::{Error, Result};
use crate::stats::{self, derive_seed};
use crate::symplectic::{build_transfer, CocycleCursor, LagrangianFrame, ScaledMatrix};
use crate::C64;

/// Closed-form top exponent of the free scalar cocycle: `log` of the larger
/// root modulus of `λ² − zλ + 1 = 0`. Vanishes on the band `[−2, 2]` and is
/// positive elsewhere; for the free block model every `γ_j` equals this value.
pub fn free_exponent(z: C64) -> f64 {
    let disc = (z * z - C64::new(4.0, 0.0)).sqrt();
    let half = C64::new(0.5, 0.0);
    let l1 = (z + disc) * half;
    let l2 = (z - disc) * half;
    l1.norm().max(l2.norm()).ln()
}

/// Exact Lyapunov exponent of the Lloyd model (scalar Cauchy potential with
/// the given scale): the free exponent evaluated at `E + i·scale`.
pub fn lloyd_exponent(e: f64, scale: f64) -> f64 {
    free_exponent(C64::new(e, scale))
}

/// Incremental cocycle evaluation bound to one orbit: advances a QR cursor
/// through `Φ_n(z)` with a configurable reorthogonalization stride.
pub struct CocycleRunner<'m> {
    orbit: Orbit<'m>,
    cursor: CocycleCursor,
    stride: usize,
    position: u64,
}

/// Reorthogonalization strides beyond this are rejected; stretches lose
/// accuracy once raw products grow too long between QR sweeps.
pub const MAX_STRIDE: usize = 10;

impl<'m> CocycleRunner<'m> {
    pub fn new(model: &'m PotentialModel, seed: u64, z: C64, stride: usize, cursor: CocycleCursor) -> Result<Self> {
        if stride == 0 || stride > MAX_STRIDE {
            return Err(Error::param(format!("stride {stride} out of 1..={MAX_STRIDE}")));
        }
        if cursor.w() != model.w() {
            return Err(Error::dim(format!("cursor width {} vs model width {}", cursor.w(), model.w())));
        }
        let _ = z;
        Ok(CocycleRunner { orbit: model.orbit(seed), cursor, stride, position: 0 })
    }

    pub fn new_full(model: &'m PotentialModel, seed: u64, z: C64, stride: usize) -> Result<Self> {
        let cursor = CocycleCursor::full(z, model.w());
        Self::new(model, seed, z, stride, cursor)
    }

    pub fn new_framed(
        model: &'m PotentialModel,
        seed: u64,
        z: C64,
        stride: usize,
        frame: &LagrangianFrame,
    ) -> Result<Self> {
        let cursor = CocycleCursor::from_lagrangian(z, frame);
        Self::new(model, seed, z, stride, cursor)
    }

    /// Advance to step `n` (absolute), reorthogonalizing on stride boundaries
    /// and once more before returning, so stretches are readable.
    pub fn advance_to(&mut self, n: u64) -> Result<&CocycleCursor> {
        if n < self.position {
            return Err(Error::param(format!(
                "cannot rewind cursor from {} to {n}",
                self.position
            )));
        }
        let z = self.cursor.z();
        while self.position < n {
            self.position += 1;
            let v = self.orbit.at(self.position);
            let t = build_transfer(z, &v)?;
            self.cursor.apply(&t)?;
            if self.position % self.stride as u64 == 0 {
                self.cursor.reorthogonalize()?;
            }
        }
        self.cursor.reorthogonalize()?;
        Ok(&self.cursor)
    }

    pub fn cursor(&self) -> &CocycleCursor {
        &self.cursor
    }

    pub fn position(&self) -> u64 {
        self.position
    }
}

/// Dense `Φ_n(z)` as a rescaled product; for moderate `n` where the full
/// matrix is needed.
pub fn dense_product(model: &PotentialModel, seed: u64, z: C64, n: u64) -> Result<ScaledMatrix> {
    let orbit = model.orbit(seed);
    let mut phi = ScaledMatrix::identity(2 * model.w());
    for m in 1..=n {
        phi.apply_left(&build_transfer(z, &orbit.at(m))?)?;
    }
    Ok(phi)
}

/// Estimated Lyapunov spectrum at one spectral parameter.
///
/// `gamma` holds the first W exponents after pairing symmetrization
/// `(r_j − r_{2W+1−j})/2`; the full 2W-vector is recovered by antisymmetry.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovEstimate {
    pub z_re: f64,
    pub z_im: f64,
    pub w: usize,
    pub n: u64,
    pub samples: usize,
    pub stride: usize,
    pub gamma: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Mean raw per-column rates (pre-symmetrization), all 2W of them.
    pub raw_rates: Vec<f64>,
}

impl LyapunovEstimate {
    pub fn z(&self) -> C64 {
        C64::new(self.z_re, self.z_im)
    }

    /// All 2W exponents, `γ_{2W+1−j} = −γ_j` by construction.
    pub fn gamma_full(&self) -> Vec<f64> {
        let mut out = self.gamma.clone();
        out.extend(self.gamma.iter().rev().map(|g| -g));
        out
    }

    /// Partial sum `Γ_k = γ_1 + ... + γ_k`, `k ≤ W`.
    pub fn gamma_sum(&self, k: usize) -> f64 {
        self.gamma.iter().take(k).sum()
    }
}

/// Estimate the Lyapunov spectrum by QR-reorthogonalized ensemble runs.
pub fn lyapunov_spectrum(
    model: &PotentialModel,
    z: C64,
    n: u64,
    samples: usize,
    stride: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n < 100 {
        return Err(Error::param(format!("n = {n} below the minimum 100")));
    }
    if samples == 0 {
        return Err(Error::param("samples must be at least 1"));
    }
    let w = model.w();
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut runner = CocycleRunner::new_full(model, derive_seed(seed, i as u64), z, stride)?;
            let cursor = runner.advance_to(n)?;
            Ok(cursor.rates())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut gamma = Vec::with_capacity(w);
    let mut stderr = Vec::with_capacity(w);
    for j in 0..w {
        let sym: Vec<f64> = per_sample
            .iter()
            .map(|r| 0.5 * (r[j] - r[2 * w - 1 - j]))
            .collect();
        let (m, se) = stats::mean_stderr(&sym);
        gamma.push(m);
        stderr.push(se);
    }
    let raw_rates: Vec<f64> = (0..2 * w)
        .map(|j| {
            let col: Vec<f64> = per_sample.iter().map(|r| r[j]).collect();
            stats::mean(&col)
        })
        .collect();
    Ok(LyapunovEstimate {
        z_re: z.re,
        z_im: z.im,
        w,
        n,
        samples,
        stride,
        gamma,
        stderr,
        raw_rates,
    })
}

/// Estimated large-deviation tail `p̂(n) = P{|logstretch_j/n − γ_j| ≥ ε}` with
/// an exponential-rate fit over the levels where `p̂ > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct LdpCurve {
    pub e: f64,
    pub j: usize,
    pub epsilon: f64,
    pub n_list: Vec<u64>,
    pub p_hat: Vec<f64>,
    /// Fitted rate `c` in `p ≈ C e^{−cn}`; when every level is censored
    /// (`p̂ = 0`) this is the rule-of-three lower bound `log(M/3)/n_min`.
    pub rate: f64,
    pub log_c: Option<f64>,
    pub r2: Option<f64>,
    pub censored: bool,
    pub ensemble: usize,
}

/// Measure the large-deviation tail of the `j`-th stretch at real energy `e`.
///
/// `gamma_ref` must be an estimate at the same energy whose standard error is
/// well below `epsilon`.
#[allow(clippy::too_many_arguments)]
pub fn ldp_tail(
    model: &PotentialModel,
    e: f64,
    j: usize,
    epsilon: f64,
    n_list: &[u64],
    ensemble: usize,
    gamma_ref: &LyapunovEstimate,
    seed: u64,
) -> Result<LdpCurve> {
    let w = model.w();
    if j == 0 || j > w {
        return Err(Error::param(format!("stretch index j = {j} out of 1..={w}")));
    }
    if ensemble < 1000 {
        return Err(Error::param(format!("ensemble {ensemble} below the minimum 1000")));
    }
    if n_list.is_empty() {
        return Err(Error::param("empty n_list"));
    }
    if (gamma_ref.z() - C64::new(e, 0.0)).norm() > 1e-12 {
        return Err(Error::param("gamma_ref was computed at a different energy"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon must be positive"));
    }
    if gamma_ref.stderr[j - 1] > epsilon / 3.0 {
        return Err(Error::param(format!(
            "reference stderr {:e} too large for epsilon {epsilon}",
            gamma_ref.stderr[j - 1]
        )));
    }
    let mut levels: Vec<u64> = n_list.to_vec();
    levels.sort_unstable();
    levels.dedup();
    let gamma_j = gamma_ref.gamma[j - 1];
    let z = C64::new(e, 0.0);

    let exceed_counts: Vec<Vec<bool>> = (0..ensemble)
        .into_par_iter()
        .map(|i| -> Result<Vec<bool>> {
            let mut runner = CocycleRunner::new_full(model, derive_seed(seed, i as u64), z, 1)?;
            let mut flags = Vec::with_capacity(levels.len());
            for &n in &levels {
                let cursor = runner.advance_to(n)?;
                let rate = cursor.logstretch()[j - 1] / n as f64;
                flags.push((rate - gamma_j).abs() >= epsilon);
            }
            Ok(flags)
        })
        .collect::<Result<Vec<_>>>()?;

    let p_hat: Vec<f64> = (0..levels.len())
        .map(|k| exceed_counts.iter().filter(|f| f[k]).count() as f64 / ensemble as f64)
        .collect();

    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .zip(p_hat.iter())
        .filter(|(_, &p)| p > 0.0)
        .map(|(&n, &p)| (n as f64, p.ln()))
        .unzip();
    let (rate, log_c, r2, censored) = if xs.len() >= 2 {
        let fit = stats::linear_fit(&xs, &ys).expect("two distinct levels");
        (-fit.slope, Some(fit.intercept), Some(fit.r2), false)
    } else {
        // rule of three: p(n_min) <= 3/M at confidence ~95%
        let bound = (ensemble as f64 / 3.0).ln() / levels[0] as f64;
        (bound, None, None, true)
    };
    Ok(LdpCurve {
        e,
        j,
        epsilon,
        n_list: levels,
        p_hat,
        rate,
        log_c,
        r2,
        censored,
        ensemble,
    })
}

/// Craig–Simon doubling statistics: ensemble means of the per-step wedge
/// statistic `(1/m) Σ_{j≤k} log s_j(Φ_m)` at `m = n` and `m = 2n`.
#[derive(Debug, Clone, Serialize)]
pub struct DoublingCheck {
    pub z_re: f64,
    pub z_im: f64,
    pub w: usize,
    pub n: u64,
    pub samples: usize,
    pub a_n: Vec<f64>,
    pub a_2n: Vec<f64>,
    pub se_n: Vec<f64>,
    pub se_2n: Vec<f64>,
    /// `a_{2n} ≤ a_n + 3(σ_n + σ_{2n})` per k.
    pub holds: Vec<bool>,
}

pub fn doubling_check(
    model: &PotentialModel,
    z: C64,
    n: u64,
    samples: usize,
    seed: u64,
) -> Result<DoublingCheck> {
    if samples < 100 {
        return Err(Error::param(format!("samples {samples} below the minimum 100")));
    }
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let w = model.w();
    let run = |m: u64, salt: u64| -> Result<Vec<Vec<f64>>> {
        (0..samples)
            .into_par_iter()
            .map(|i| -> Result<Vec<f64>> {
                let phi = dense_product(model, derive_seed(seed, salt + i as u64), z, m)?;
                let logs = phi.log_singular_values()?;
                let mut partial = Vec::with_capacity(w);
                let mut acc = 0.0;
                for item in logs.iter().take(w) {
                    acc += item;
                    partial.push(acc / m as f64);
                }
                Ok(partial)
            })
            .collect()
    };
    let at_n = run(n, 0)?;
    let at_2n = run(2 * n, samples as u64)?;
    let mut a_n = Vec::with_capacity(w);
    let mut a_2n = Vec::with_capacity(w);
    let mut se_n = Vec::with_capacity(w);
    let mut se_2n = Vec::with_capacity(w);
    let mut holds = Vec::with_capacity(w);
    for k in 0..w {
        let col_n: Vec<f64> = at_n.iter().map(|v| v[k]).collect();
        let col_2n: Vec<f64> = at_2n.iter().map(|v| v[k]).collect();
        let (m1, s1) = stats::mean_stderr(&col_n);
        let (m2, s2) = stats::mean_stderr(&col_2n);
        holds.push(m2 <= m1 + 3.0 * (s1 + s2));
        a_n.push(m1);
        a_2n.push(m2);
        se_n.push(s1);
        se_2n.push(s2);
    }
    Ok(DoublingCheck {
        z_re: z.re,
        z_im: z.im,
        w,
        n,
        samples,
        a_n,
        a_2n,
        se_n,
        se_2n,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::FillMode;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_exponent_closed_form_values() {
        // golden-ratio value at z = 3
        let expect = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert_abs_diff_eq!(free_exponent(C64::new(3.0, 0.0)), expect, epsilon = 1e-14);
        // vanishes inside the band
        assert!(free_exponent(C64::new(0.7, 0.0)).abs() < 1e-12);
        // Lloyd at E = 0, scale 1: log golden ratio
        let golden = ((1.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert_abs_diff_eq!(lloyd_exponent(0.0, 1.0), golden, epsilon = 1e-14);
    }

    #[test]
    fn free_model_spectrum_estimate() {
        let model = PotentialModel::free(1);
        let est = lyapunov_spectrum(&model, C64::new(3.0, 0.0), 20_000, 1, 1, 7).unwrap();
        let expect = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert!((est.gamma[0] - expect).abs() < 1e-3, "gamma {}", est.gamma[0]);
        let inside = lyapunov_spectrum(&model, C64::new(0.0, 0.0), 10_000, 1, 1, 7).unwrap();
        assert!(inside.gamma[0].abs() < 1e-2);
    }

    #[test]
    fn spectrum_is_antisymmetric_and_ordered() {
        let model = PotentialModel::uniform(2, -1.0, 1.0, FillMode::Diagonal).unwrap();
        let est = lyapunov_spectrum(&model, C64::new(0.4, 0.6), 2_000, 4, 1, 3).unwrap();
        let full = est.gamma_full();
        assert_eq!(full.len(), 4);
        assert_abs_diff_eq!(full[3], -full[0], epsilon = 1e-15);
        assert_abs_diff_eq!(full[2], -full[1], epsilon = 1e-15);
        assert!(est.gamma[0] >= est.gamma[1]);
        assert!(est.gamma[1] >= 0.0);
    }

    #[test]
    fn spectrum_rejects_bad_parameters() {
        let model = PotentialModel::free(1);
        assert!(lyapunov_spectrum(&model, C64::new(0.0, 0.0), 10, 1, 1, 0).is_err());
        assert!(lyapunov_spectrum(&model, C64::new(0.0, 0.0), 1000, 0, 1, 0).is_err());
        assert!(lyapunov_spectrum(&model, C64::new(0.0, 0.0), 1000, 1, 11, 0).is_err());
    }

    #[test]
    fn strided_run_matches_per_step_rates() {
        let model = PotentialModel::anderson_bernoulli(1, 1.0);
        let z = C64::new(0.5, 0.0);
        let a = lyapunov_spectrum(&model, z, 5_000, 1, 1, 11).unwrap();
        let b = lyapunov_spectrum(&model, z, 5_000, 1, 5, 11).unwrap();
        assert!((a.gamma[0] - b.gamma[0]).abs() < 1e-6, "{} vs {}", a.gamma[0], b.gamma[0]);
    }

    #[test]
    fn ldp_tail_constant_model_is_censored() {
        let model = PotentialModel::constant(crate::RMatrix::zeros(1, 1)).unwrap();
        let z = C64::new(3.0, 0.0);
        let gamma_ref = lyapunov_spectrum(&model, z, 10_000, 1, 1, 0).unwrap();
        let curve = ldp_tail(&model, 3.0, 1, 0.1, &[500, 1000], 1000, &gamma_ref, 5).unwrap();
        assert!(curve.p_hat.iter().all(|&p| p == 0.0));
        assert!(curve.censored);
        assert!(curve.rate > 0.0);
    }

    #[test]
    fn ldp_large_epsilon_forces_zero_tail() {
        // bounded increments cannot deviate by 1.0 from gamma at n >= 1000
        let model = PotentialModel::anderson_bernoulli(1, 1.0);
        let gamma_ref = lyapunov_spectrum(&model, C64::new(0.5, 0.0), 100_000, 1, 1, 2).unwrap();
        let curve =
            ldp_tail(&model, 0.5, 1, 1.0, &[1000], 1000, &gamma_ref, 77).unwrap();
        assert_eq!(curve.p_hat[0], 0.0);
        assert!(curve.censored);
    }

    #[test]
    fn ldp_decay_measurable_at_small_epsilon() {
        // at epsilon = 0.02 (about 1 sigma at n = 200) the Bernoulli tail is
        // resolvable with a small ensemble and decays exponentially
        let model = PotentialModel::anderson_bernoulli(1, 1.0);
        let gamma_ref = lyapunov_spectrum(&model, C64::new(0.5, 0.0), 400_000, 4, 1, 9).unwrap();
        let curve =
            ldp_tail(&model, 0.5, 1, 0.02, &[200, 400, 800, 1600], 2000, &gamma_ref, 21).unwrap();
        assert!(!curve.censored);
        for win in curve.p_hat.windows(2) {
            assert!(win[1] < win[0], "p_hat not decreasing: {:?}", curve.p_hat);
        }
        assert!(curve.rate > 0.0, "rate {}", curve.rate);
        assert!(curve.r2.unwrap() > 0.9, "r2 {:?}", curve.r2);
    }

    #[test]
    fn doubling_constant_model_is_monotone() {
        let v = crate::RMatrix::from_row_slice(1, 1, &[0.7]);
        let model = PotentialModel::constant(v).unwrap();
        let check = doubling_check(&model, C64::new(3.2, 0.0), 16, 100, 1).unwrap();
        assert!(check.a_2n[0] <= check.a_n[0] + 1e-12);
        assert!(check.holds[0]);
    }

    #[test]
    fn doubling_free_model_tracks_exponent() {
        let model = PotentialModel::free(1);
        let check = doubling_check(&model, C64::new(3.0, 0.0), 64, 100, 1).unwrap();
        let expect = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
        assert!((check.a_n[0] - expect).abs() < 0.05);
        assert!(check.a_2n[0] <= check.a_n[0] + 1e-12);
    }
}
