//! Exceptional-set statistics over energy grids: schedule-based liminf scans,
//! weighted scans, the interval-cover construction with Hausdorff gauge
//! content, subsequence statistics, and Lagrangian-restricted growth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::drivers::PotentialModel;
use crate::error::{Error, Result};
use crate::lyapunov::{dense_product, CocycleRunner, LyapunovEstimate};
use crate::symplectic::LagrangianFrame;
use crate::C64;

/// Smallest schedule level the scan statistics trust; shorter products are
/// dominated by the transient of the initial frame.
pub const MIN_SCAN_LEVEL: u64 = 10;

/// Geometric sampling schedule `n_i = ⌊exp(τ·i)⌋`, deduplicated increasing.
#[derive(Debug, Clone, Serialize)]
pub struct Schedule {
    pub tau: f64,
    pub i_max: usize,
    levels: Vec<u64>,
}

impl Schedule {
    pub fn new(tau: f64, i_max: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::param(format!("schedule tau = {tau} must be positive")));
        }
        if i_max == 0 {
            return Err(Error::param("schedule needs i_max >= 1"));
        }
        let mut levels = Vec::with_capacity(i_max);
        for i in 1..=i_max {
            let n = (tau * i as f64).exp().floor() as u64;
            if levels.last() != Some(&n) && n >= 1 {
                levels.push(n);
            }
        }
        Ok(Schedule { tau, i_max, levels })
    }

    /// From explicit levels (deduplicated, increasing required).
    pub fn from_levels(levels: Vec<u64>) -> Result<Self> {
        if levels.is_empty() || levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("explicit levels must be strictly increasing and non-empty"));
        }
        Ok(Schedule { tau: 0.0, i_max: levels.len(), levels })
    }

    pub fn levels(&self) -> &[u64] {
        &self.levels
    }

    /// Levels at or above the scan floor.
    pub fn trusted_levels(&self) -> impl Iterator<Item = u64> + '_ {
        self.levels.iter().copied().filter(|&n| n >= MIN_SCAN_LEVEL)
    }
}

/// One energy where the scan statistic undershoots its reference.
#[derive(Debug, Clone, Serialize)]
pub struct Dip {
    pub e: f64,
    pub depth: f64,
}

/// Result of an energy-grid scan. `dips` is recomputable from the arrays:
/// `statistic[i] < threshold[i]`.
#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub energies: Vec<f64>,
    pub statistic: Vec<f64>,
    pub reference: Vec<f64>,
    pub threshold: Vec<f64>,
    pub dips: Vec<Dip>,
    pub levels: Vec<u64>,
}

impl ScanReport {
    /// CSV rows `E,statistic,reference,threshold`.
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "E,statistic,reference,threshold")?;
        for i in 0..self.energies.len() {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.energies[i], self.statistic[i], self.reference[i], self.threshold[i]
            )?;
        }
        Ok(())
    }
}

fn dips_from(energies: &[f64], statistic: &[f64], threshold: &[f64]) -> Vec<Dip> {
    energies
        .iter()
        .zip(statistic.iter().zip(threshold.iter()))
        .filter(|(_, (s, t))| s < t)
        .map(|(&e, (&s, &t))| Dip { e, depth: t - s })
        .collect()
}

/// Schedule-minimum proxy for `liminf (1/n) log s_W(Φ_n(E))` along one fixed
/// orbit: for each grid energy, one cursor is advanced through the schedule
/// and the minimum of the W-th stretch rate over trusted levels is recorded.
///
/// Dips are energies where the statistic falls below `γ_W(E) − ε`, with
/// `ε = 0.1·γ_W(E)` unless an absolute `epsilon` is given.
pub fn liminf_scan(
    model: &PotentialModel,
    seed: u64,
    e_grid: &[f64],
    schedule: &Schedule,
    gamma_ref: &[f64],
    epsilon: Option<f64>,
) -> Result<ScanReport> {
    if e_grid.len() != gamma_ref.len() {
        return Err(Error::dim(format!(
            "energy grid ({}) and gamma_ref ({}) lengths differ",
            e_grid.len(),
            gamma_ref.len()
        )));
    }
    let levels: Vec<u64> = schedule.trusted_levels().collect();
    if levels.is_empty() {
        return Err(Error::param(format!(
            "schedule has no levels at or above {MIN_SCAN_LEVEL}"
        )));
    }
    let w = model.w();
    let statistic: Vec<f64> = e_grid
        .par_iter()
        .map(|&e| -> Result<f64> {
            let mut runner = CocycleRunner::new_full(model, seed, C64::new(e, 0.0), 1)?;
            let mut best = f64::INFINITY;
            for &n in &levels {
                let cursor = runner.advance_to(n)?;
                let val = cursor.sorted_logstretch()[w - 1] / n as f64;
                if val < best {
                    best = val;
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let threshold: Vec<f64> = gamma_ref
        .iter()
        .map(|&g| match epsilon {
            Some(eps) => g - eps,
            None => g - 0.1 * g.abs(),
        })
        .collect();
    let dips = dips_from(e_grid, &statistic, &threshold);
    Ok(ScanReport {
        energies: e_grid.to_vec(),
        statistic,
        reference: gamma_ref.to_vec(),
        threshold,
        dips,
        levels,
    })
}

/// Weight sequences for the `p_n s_W` scans. The catalog admits only
/// positive, decaying weights: `p_n = n^{−s}` with `s > 1/2` (square-summable,
/// bounded models only) and `p_n = e^{−εn}` with `ε > 0`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PnWeights {
    Polynomial { s: f64 },
    Exponential { eps: f64 },
}

impl PnWeights {
    pub fn polynomial(s: f64) -> Result<Self> {
        if !(s > 0.5) {
            return Err(Error::param(format!(
                "polynomial weights need s > 1/2 for square-summability, got {s}"
            )));
        }
        Ok(PnWeights::Polynomial { s })
    }

    pub fn exponential(eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::param(format!("exponential weights need eps > 0, got {eps}")));
        }
        Ok(PnWeights::Exponential { eps })
    }

    pub fn ln_at(&self, n: u64) -> f64 {
        match self {
            PnWeights::Polynomial { s } => -s * (n as f64).ln(),
            PnWeights::Exponential { eps } => -eps * n as f64,
        }
    }

    pub fn requires_bounded(&self) -> bool {
        matches!(self, PnWeights::Polynomial { .. })
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            PnWeights::Polynomial { s } => Self::polynomial(s),
            PnWeights::Exponential { eps } => Self::exponential(eps),
        }
    }
}

/// Weighted scan `statistic(E) = min_{n ≤ n_max} log(p_n · s_W(Φ_n(E)))`,
/// computed in the log domain along one fixed orbit.
///
/// Dips are energies where the weighted minimum falls below `log θ` for the
/// configured dip level `θ` (default 1: the weight overtakes the growth).
pub fn pn_scan(
    model: &PotentialModel,
    seed: u64,
    e_grid: &[f64],
    weights: &PnWeights,
    n_max: u64,
    gamma_ref: &[f64],
    dip_level: Option<f64>,
) -> Result<ScanReport> {
    weights.validate()?;
    if weights.requires_bounded() && !model.is_bounded() {
        return Err(Error::UnboundedModelPolynomialWeight);
    }
    if e_grid.len() != gamma_ref.len() {
        return Err(Error::dim("energy grid and gamma_ref lengths differ"));
    }
    if n_max < MIN_SCAN_LEVEL {
        return Err(Error::LevelTooSmall { n: n_max as usize, min: MIN_SCAN_LEVEL as usize });
    }
    let w = model.w();
    let log_dip = dip_level.unwrap_or(1.0).ln();
    let statistic: Vec<f64> = e_grid
        .par_iter()
        .map(|&e| -> Result<f64> {
            let mut runner = CocycleRunner::new_full(model, seed, C64::new(e, 0.0), 1)?;
            let mut best = f64::INFINITY;
            for n in MIN_SCAN_LEVEL..=n_max {
                let cursor = runner.advance_to(n)?;
                let val = weights.ln_at(n) + cursor.sorted_logstretch()[w - 1];
                if val < best {
                    best = val;
                }
            }
            Ok(best)
        })
        .collect::<Result<Vec<_>>>()?;
    let threshold = vec![log_dip; e_grid.len()];
    let dips = dips_from(e_grid, &statistic, &threshold);
    Ok(ScanReport {
        energies: e_grid.to_vec(),
        statistic,
        reference: gamma_ref.to_vec(),
        threshold,
        dips,
        levels: vec![n_max],
    })
}

/// Finite interval cover of the sub-threshold set at one schedule level.
#[derive(Debug, Clone, Serialize)]
pub struct Cover {
    pub intervals: Vec<(f64, f64)>,
    pub level: u64,
    pub threshold: f64,
    /// Initial sampling step used for detection; endpoints were refined by
    /// bisection below this scale. The cover is approximate at this
    /// resolution.
    pub resolution: f64,
}

impl Cover {
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn max_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).fold(0.0, f64::max)
    }

    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "a,b,length")?;
        for (a, b) in &self.intervals {
            writeln!(out, "{a:.16e},{b:.16e},{:.16e}", b - a)?;
        }
        Ok(())
    }
}

/// Build the sub-level cover of §-style max-entry wedge statistics on one
/// interval at one level: the set of energies where
/// `(1/n)·log max-entry(Φ_n(E)^∧(W−1)) ≤ Σ_{j≤W−1} γ_j(a) − ε/4`.
///
/// At W = 1 the wedge degenerates and the criterion falls back to the
/// max-entry of `Φ_n(E)` itself against `γ_1(a) − ε/4`.
pub fn build_cover(
    model: &PotentialModel,
    seed: u64,
    interval: (f64, f64),
    eps: f64,
    level: u64,
    gamma_ref: &LyapunovEstimate,
) -> Result<Cover> {
    let (a, b) = interval;
    if !(b > a) {
        return Err(Error::param(format!("empty interval [{a}, {b}]")));
    }
    if level < MIN_SCAN_LEVEL {
        return Err(Error::LevelTooSmall { n: level as usize, min: MIN_SCAN_LEVEL as usize });
    }
    let w = model.w();
    let threshold = if w == 1 {
        gamma_ref.gamma[0] - eps / 4.0
    } else {
        gamma_ref.gamma_sum(w - 1) - eps / 4.0
    };
    let statistic = |e: f64| -> Result<f64> {
        let phi = dense_product(model, seed, C64::new(e, 0.0), level)?;
        let val = if w == 1 {
            phi.log_max_abs()
        } else {
            phi.compound_log_max_abs(w - 1)?
        };
        Ok(val / level as f64)
    };

    // sampling resolution from the top exponent, capped at 1e6 nodes
    let gamma1 = gamma_ref.gamma[0].max(0.0);
    let mut step = (1e-4f64).max((-2.0 * gamma1 * level as f64).exp() / 10.0);
    let max_nodes = 1_000_000usize;
    let mut nodes = ((b - a) / step).ceil() as usize + 1;
    if nodes > max_nodes {
        nodes = max_nodes;
        step = (b - a) / (nodes - 1) as f64;
    }
    let xs: Vec<f64> = (0..nodes).map(|i| a + (b - a) * i as f64 / (nodes - 1) as f64).collect();
    let below: Vec<bool> = xs
        .par_iter()
        .map(|&e| statistic(e).map(|v| v <= threshold))
        .collect::<Result<Vec<_>>>()?;

    // refine a crossing between sample nodes to relative 1e-3 of the step
    let tol = (step * 1e-3).max(1e-12);
    let refine = |mut lo: f64, mut hi: f64, lo_below: bool| -> Result<f64> {
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            let mid_below = statistic(mid)? <= threshold;
            if mid_below == lo_below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    };

    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut open: Option<f64> = None;
    for i in 0..nodes {
        match (open, below[i]) {
            (None, true) => {
                let left = if i == 0 { a } else { refine(xs[i - 1], xs[i], false)? };
                open = Some(left);
            }
            (Some(left), false) => {
                let right = refine(xs[i - 1], xs[i], true)?;
                if right > left {
                    intervals.push((left, right));
                }
                open = None;
            }
            _ => {}
        }
    }
    if let Some(left) = open {
        if b > left {
            intervals.push((left, b));
        }
    }
    Ok(Cover { intervals, level, threshold, resolution: step })
}

/// Gauge functions ρ for Hausdorff content sums: continuous, increasing,
/// ρ(0+) = 0 on (0, 1]. The `integrable` flag records whether `∫₀¹ ρ(t)/t dt`
/// converges (declared analytically per catalog entry).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Gauge {
    /// `ρ(t) = t^s`, `s > 0`; integrable for every such s.
    Power { s: f64 },
    /// `ρ(t) = log^{−(1+δ)}(e/t)`, `δ ≥ 0`; integrable iff `δ > 0`.
    LogInverse { delta: f64 },
}

impl Gauge {
    pub fn power(s: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::param(format!("power gauge needs s > 0, got {s}")));
        }
        Ok(Gauge::Power { s })
    }

    pub fn log_inverse(delta: f64) -> Result<Self> {
        if !(delta >= 0.0) {
            return Err(Error::param(format!("log gauge needs delta >= 0, got {delta}")));
        }
        Ok(Gauge::LogInverse { delta })
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Gauge::Power { s } => Self::power(s),
            Gauge::LogInverse { delta } => Self::log_inverse(delta),
        }
    }

    /// ρ(t), with t clamped into (0, 1].
    pub fn eval(&self, t: f64) -> f64 {
        let t = t.clamp(f64::MIN_POSITIVE, 1.0);
        match self {
            Gauge::Power { s } => t.powf(*s),
            Gauge::LogInverse { delta } => {
                (std::f64::consts::E / t).ln().powf(-(1.0 + delta))
            }
        }
    }

    /// Whether `∫₀¹ ρ(t)/t dt < ∞`.
    pub fn integrable(&self) -> bool {
        match self {
            Gauge::Power { .. } => true,
            Gauge::LogInverse { delta } => *delta > 0.0,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Gauge::Power { s } => format!("t^{s}"),
            Gauge::LogInverse { delta } => format!("log^-{}(e/t)", 1.0 + delta),
        }
    }
}

/// Hausdorff content sum `Σ ρ(|I|)` over a cover's intervals.
pub fn gauge_content(cover: &Cover, gauge: &Gauge) -> f64 {
    cover.intervals.iter().map(|(a, b)| gauge.eval(b - a)).sum()
}

/// Subsequence deviation statistic along one trajectory:
/// `value(n) = max_{1≤j≤W} |logstretch_j/n − γ_j|`, with its minimum over
/// `n ≤ n_max` (the liminf witness).
#[derive(Debug, Clone, Serialize)]
pub struct SubseqReport {
    pub e: f64,
    pub n_max: u64,
    pub values: Vec<f64>,
    pub min_value: f64,
    pub argmin_n: u64,
}

impl SubseqReport {
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "n,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{v:.16e}", i + 1)?;
        }
        Ok(())
    }
}

pub fn subseq_statistic(
    model: &PotentialModel,
    seed: u64,
    e: f64,
    n_max: u64,
    gamma_ref: &LyapunovEstimate,
) -> Result<SubseqReport> {
    if n_max == 0 {
        return Err(Error::param("n_max must be positive"));
    }
    let w = model.w();
    if gamma_ref.w != w {
        return Err(Error::dim("gamma_ref width differs from the model"));
    }
    let mut runner = CocycleRunner::new_full(model, seed, C64::new(e, 0.0), 1)?;
    let mut values = Vec::with_capacity(n_max as usize);
    let mut min_value = f64::INFINITY;
    let mut argmin_n = 1;
    for n in 1..=n_max {
        let cursor = runner.advance_to(n)?;
        let ls = cursor.logstretch();
        let mut worst = 0.0f64;
        for j in 0..w {
            let dev = (ls[j] / n as f64 - gamma_ref.gamma[j]).abs();
            if dev > worst {
                worst = dev;
            }
        }
        values.push(worst);
        if worst < min_value {
            min_value = worst;
            argmin_n = n;
        }
    }
    Ok(SubseqReport { e, n_max, values, min_value, argmin_n })
}

/// Growth rates of the Lagrangian-restricted product `Φ_n(z) π_F^*`.
#[derive(Debug, Clone, Serialize)]
pub struct RestrictedGrowth {
    pub z_re: f64,
    pub z_im: f64,
    pub n: u64,
    /// `(1/n) Σ_{j≤W} log s_j(Φ_n π_F^*)`: total log-volume rate of the
    /// F-framed product.
    pub volume_rate: f64,
    /// `(1/n) log s_W(Φ_n π_F^*)`: smallest per-column rate.
    pub min_rate: f64,
}

pub fn restricted_growth(
    model: &PotentialModel,
    seed: u64,
    z: C64,
    frame: &LagrangianFrame,
    n: u64,
) -> Result<RestrictedGrowth> {
    if n == 0 {
        return Err(Error::param("n must be positive"));
    }
    let defect = frame.isotropy_defect();
    if defect > crate::symplectic::LAGRANGIAN_TOL {
        return Err(Error::NotLagrangian { defect, tol: crate::symplectic::LAGRANGIAN_TOL });
    }
    let mut runner = CocycleRunner::new_framed(model, seed, z, 1, frame)?;
    let cursor = runner.advance_to(n)?;
    let ls = cursor.logstretch();
    let volume_rate = ls.iter().sum::<f64>() / n as f64;
    let min_rate = ls.iter().cloned().fold(f64::INFINITY, f64::min) / n as f64;
    Ok(RestrictedGrowth { z_re: z.re, z_im: z.im, n, volume_rate, min_rate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::lyapunov_spectrum;

    #[test]
    fn schedule_levels_dedup_and_grow() {
        let s = Schedule::new(0.5, 20).unwrap();
        let levels = s.levels();
        assert!(levels.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*levels.last().unwrap(), (0.5f64 * 20.0).exp().floor() as u64);
        assert!(Schedule::new(0.0, 5).is_err());
        assert!(Schedule::from_levels(vec![5, 5]).is_err());
    }

    #[test]
    fn pn_weights_catalog_validation() {
        assert!(PnWeights::polynomial(0.5).is_err());
        assert!(PnWeights::polynomial(1.0).is_ok());
        assert!(PnWeights::exponential(0.0).is_err());
        let lloyd = PotentialModel::lloyd(1.0);
        let grid = [0.0];
        let gamma = [0.5];
        let err = pn_scan(&lloyd, 1, &grid, &PnWeights::Polynomial { s: 1.0 }, 100, &gamma, None);
        assert!(matches!(err, Err(Error::UnboundedModelPolynomialWeight)));
    }

    #[test]
    fn gauge_catalog_values_and_flags() {
        let sqrt = Gauge::power(0.5).unwrap();
        assert!((sqrt.eval(0.25) - 0.5).abs() < 1e-15);
        assert!(sqrt.integrable());
        let borderline = Gauge::log_inverse(0.0).unwrap();
        assert!(!borderline.integrable());
        let ok = Gauge::log_inverse(1.0).unwrap();
        assert!(ok.integrable());
        assert!((ok.eval(1.0) - 1.0).abs() < 1e-15);
        assert!(Gauge::power(0.0).is_err());
    }

    #[test]
    fn gauge_content_matches_direct_sum() {
        // lengths 2^-i, rho = log^-2(e/t): compare against a direct sum
        let intervals: Vec<(f64, f64)> = (1..=20).map(|i| (0.0, (2.0f64).powi(-i))).collect();
        let cover = Cover { intervals: intervals.clone(), level: 100, threshold: 0.0, resolution: 1e-4 };
        let gauge = Gauge::log_inverse(1.0).unwrap();
        let content = gauge_content(&cover, &gauge);
        let direct: f64 = (1..=20)
            .map(|i| {
                let t = (2.0f64).powi(-i);
                (std::f64::consts::E / t).ln().powi(-2)
            })
            .sum();
        assert!((content - direct).abs() < 1e-12);
        // single interval, rho(t) = t
        let one = Cover { intervals: vec![(0.25, 0.5)], level: 100, threshold: 0.0, resolution: 1e-4 };
        assert!((gauge_content(&one, &Gauge::Power { s: 1.0 }) - 0.25).abs() < 1e-15);
        // empty cover
        let empty = Cover { intervals: vec![], level: 100, threshold: 0.0, resolution: 1e-4 };
        assert_eq!(gauge_content(&empty, &gauge), 0.0);
    }

    #[test]
    fn gauge_flags_match_quadrature() {
        // numerically integrate rho(t)/t dt from a to 1 and watch the growth
        // as a shrinks; integrable gauges converge, the borderline one keeps
        // growing
        let quad = |g: &Gauge, a: f64| -> f64 {
            // substitute t = e^{-u}: integral of rho(e^-u) du, u in [0, ln(1/a)]
            let umax = (1.0 / a).ln();
            let steps = 40_000;
            let du = umax / steps as f64;
            let mut acc = 0.0;
            for i in 0..steps {
                let u = (i as f64 + 0.5) * du;
                acc += g.eval((-u).exp()) * du;
            }
            acc
        };
        for g in [Gauge::power(0.5).unwrap(), Gauge::power(2.0).unwrap(), Gauge::log_inverse(1.0).unwrap()] {
            let growth = quad(&g, 1e-12) - quad(&g, 1e-6);
            assert!(growth < 0.1, "{} grew by {growth}", g.name());
            assert!(g.integrable());
        }
        let borderline = Gauge::log_inverse(0.0).unwrap();
        let growth = quad(&borderline, 1e-12) - quad(&borderline, 1e-6);
        assert!(growth > 0.3, "borderline gauge grew only {growth}");
        assert!(!borderline.integrable());
    }

    #[test]
    fn liminf_scan_constant_model_off_spectrum_has_no_dips() {
        let model = PotentialModel::free(1);
        let schedule = Schedule::new(0.5, 14).unwrap();
        let e_grid: Vec<f64> = (0..8).map(|i| 2.5 + 0.25 * i as f64).collect();
        let gamma_ref: Vec<f64> =
            e_grid.iter().map(|&e| crate::lyapunov::free_exponent(C64::new(e, 0.0))).collect();
        let report = liminf_scan(&model, 3, &e_grid, &schedule, &gamma_ref, None).unwrap();
        assert!(report.dips.is_empty(), "dips {:?}", report.dips);
        for (s, g) in report.statistic.iter().zip(gamma_ref.iter()) {
            assert!((s - g).abs() < 2e-2, "statistic {s} vs gamma {g}");
        }
    }

    #[test]
    fn liminf_scan_free_inside_band_is_flat_zero() {
        let model = PotentialModel::free(1);
        let schedule = Schedule::new(0.5, 14).unwrap();
        let e_grid = [0.0];
        let gamma_ref = [0.0];
        let report = liminf_scan(&model, 3, &e_grid, &schedule, &gamma_ref, Some(0.05)).unwrap();
        assert!(report.statistic[0].abs() < 0.05);
        assert!(report.dips.is_empty());
    }

    #[test]
    fn pn_scan_exponential_weights_off_spectrum_stay_positive() {
        // constant model at E=3.5: growth ~ 1.19 beats eps = 0.3
        let v = crate::RMatrix::zeros(1, 1);
        let model = PotentialModel::constant(v).unwrap();
        let e_grid = [3.5];
        let gamma_ref = [crate::lyapunov::free_exponent(C64::new(3.5, 0.0))];
        let weights = PnWeights::exponential(0.3).unwrap();
        let report = pn_scan(&model, 1, &e_grid, &weights, 400, &gamma_ref, None).unwrap();
        assert!(report.statistic[0] > 0.0, "statistic {}", report.statistic[0]);
        assert!(report.dips.is_empty());
    }

    #[test]
    fn cover_inversion_and_off_spectrum_cases() {
        let model = PotentialModel::free(1);
        // reference anchored at the LEFT end of the interval; the free
        // exponent increases on [2.8, 3.2], so nothing falls below
        // gamma(2.8) - eps/4 off spectrum
        let gamma_ref = lyapunov_spectrum(&model, C64::new(2.8, 0.0), 10_000, 1, 1, 5).unwrap();
        let cover = build_cover(&model, 5, (2.8, 3.2), 0.2, 60, &gamma_ref).unwrap();
        assert!(cover.intervals.is_empty(), "intervals {:?}", cover.intervals);
        // eps = -1 raises the threshold above every value: whole interval
        let all = build_cover(&model, 5, (2.8, 3.2), -1.0, 60, &gamma_ref).unwrap();
        assert_eq!(all.intervals.len(), 1);
        let (a, b) = all.intervals[0];
        assert!((a - 2.8).abs() < 1e-9 && (b - 3.2).abs() < 1e-9);
        // level guard
        assert!(matches!(
            build_cover(&model, 5, (0.0, 1.0), 0.2, 5, &gamma_ref),
            Err(Error::LevelTooSmall { .. })
        ));
    }

    #[test]
    fn subseq_statistic_constant_model_decays() {
        let model = PotentialModel::free(1);
        let gamma_ref = lyapunov_spectrum(&model, C64::new(3.0, 0.0), 100_000, 1, 1, 2).unwrap();
        let report = subseq_statistic(&model, 2, 3.0, 2_000, &gamma_ref).unwrap();
        assert!(report.min_value < 1e-3, "min {}", report.min_value);
        // deviations shrink like O(1/n): late values below early values
        assert!(report.values[1999] < report.values[9]);
    }

    #[test]
    fn subseq_statistic_free_band_bounded_by_c_over_n() {
        let model = PotentialModel::free(1);
        let gamma_ref = lyapunov_spectrum(&model, C64::new(0.0, 0.0), 1_000, 1, 1, 2).unwrap();
        let report = subseq_statistic(&model, 2, 0.0, 1_000, &gamma_ref).unwrap();
        for (i, v) in report.values.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!(*v <= 2.0 / n + 1e-9, "value {v} at n={n}");
        }
    }

    #[test]
    fn restricted_growth_never_exceeds_unrestricted() {
        // the unrestricted side must be the true singular values
        // (s_1...s_W = sup of W-volumes over all frames), not a prefix volume
        let model = PotentialModel::anderson_bernoulli(2, 1.0);
        let z = C64::new(0.0, 1.0);
        let n = 2_000u64;
        let phi = dense_product(&model, 9, z, n).unwrap();
        let logs = phi.log_singular_values().unwrap();
        let full: f64 = logs[..2].iter().sum::<f64>() / n as f64;
        for fseed in 0..5u64 {
            let frame = LagrangianFrame::random(2, fseed);
            let restricted = restricted_growth(&model, 9, z, &frame, n).unwrap();
            assert!(
                restricted.volume_rate <= full + 1e-8,
                "restricted {} > full {full}",
                restricted.volume_rate
            );
        }
    }

    #[test]
    fn restricted_growth_free_model_hits_gamma_sum() {
        let model = PotentialModel::free(1);
        let z = C64::new(0.0, 1.0);
        let frame = LagrangianFrame::dirichlet(1);
        let r = restricted_growth(&model, 1, z, &frame, 10_000).unwrap();
        let expect = crate::lyapunov::free_exponent(z);
        assert!((r.volume_rate - expect).abs() < 1e-2, "{} vs {expect}", r.volume_rate);
    }
}
