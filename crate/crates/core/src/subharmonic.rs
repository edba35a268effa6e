//! Subharmonic field laboratory: `Γ_{k,n}` sampled over complex grids,
//! discrete sub-mean-value checks, Riesz measures by the 5-point Laplacian,
//! logarithmic potentials, and circular means.

use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::drivers::PotentialModel;
use crate::error::{Error, Result};
use crate::lyapunov::CocycleRunner;
use crate::stats::{self, derive_seed};
use crate::C64;

/// Rectangular node lattice in the complex plane.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ComplexGrid {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub h: f64,
    nx: usize,
    ny: usize,
}

impl ComplexGrid {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid { context: format!("spacing h = {h}") });
        }
        if !(x1 > x0 && y1 > y0) {
            return Err(Error::InvalidGrid { context: "empty grid rectangle".into() });
        }
        let nx = ((x1 - x0) / h + 1e-9).floor() as usize + 1;
        let ny = ((y1 - y0) / h + 1e-9).floor() as usize + 1;
        if nx < 10 || ny < 10 {
            return Err(Error::InvalidGrid {
                context: format!("need at least 8x8 interior nodes, got {}x{}", nx.saturating_sub(2), ny.saturating_sub(2)),
            });
        }
        Ok(ComplexGrid { x0, x1, y0, y1, h, nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn node(&self, i: usize, j: usize) -> C64 {
        C64::new(self.x0 + i as f64 * self.h, self.y0 + j as f64 * self.h)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

/// Whether grid nodes share one potential realization or draw independent
/// seeds (the `Γ_{k,n,ω}` versus `E Γ_{k,n}` reading of the field).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FieldMode {
    IndependentSeeds,
    SharedOmega,
}

/// `Γ_{k,n}` (nats per step) sampled on a grid: per node, the ensemble mean of
/// `(1/n) Σ_{j≤k} logstretch_j`.
#[derive(Debug, Clone, Serialize)]
pub struct GridField {
    pub grid: ComplexGrid,
    pub k: usize,
    pub n: u64,
    pub samples: usize,
    pub mode: Option<FieldMode>,
    values: Vec<f64>,
}

/// Sample `Γ_{k,n}` over a grid by QR cocycle runs (spec operation name).
pub fn field_gamma(
    model: &PotentialModel,
    grid: ComplexGrid,
    n: u64,
    k: usize,
    samples: usize,
    mode: FieldMode,
    seed: u64,
) -> Result<GridField> {
    GridField::sample(model, grid, n, k, samples, mode, seed)
}

impl GridField {
    pub fn sample(
        model: &PotentialModel,
        grid: ComplexGrid,
        n: u64,
        k: usize,
        samples: usize,
        mode: FieldMode,
        seed: u64,
    ) -> Result<Self> {
        let w = model.w();
        if k == 0 || k > w {
            return Err(Error::param(format!("partial-sum index k = {k} out of 1..={w}")));
        }
        if samples == 0 || n == 0 {
            return Err(Error::param("need samples >= 1 and n >= 1"));
        }
        let nodes: Vec<(usize, usize)> =
            (0..grid.ny()).flat_map(|j| (0..grid.nx()).map(move |i| (i, j))).collect();
        let values: Vec<f64> = nodes
            .par_iter()
            .map(|&(i, j)| -> Result<f64> {
                let z = grid.node(i, j);
                let node_idx = grid.index(i, j) as u64;
                let mut acc = Vec::with_capacity(samples);
                for s in 0..samples {
                    let run_seed = match mode {
                        FieldMode::IndependentSeeds => {
                            derive_seed(seed, node_idx * samples as u64 + s as u64)
                        }
                        FieldMode::SharedOmega => derive_seed(seed, s as u64),
                    };
                    let mut runner = CocycleRunner::new_full(model, run_seed, z, 1)?;
                    let cursor = runner.advance_to(n)?;
                    let sum: f64 = cursor.logstretch().iter().take(k).sum();
                    acc.push(sum / n as f64);
                }
                Ok(stats::mean(&acc))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GridField { grid, k, n, samples, mode: Some(mode), values })
    }

    /// Analytic field: evaluate a closed-form `Γ_k` (or any test function) on
    /// the grid nodes.
    pub fn from_fn(grid: ComplexGrid, k: usize, f: impl Fn(C64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            for i in 0..grid.nx() {
                values.push(f(grid.node(i, j)));
            }
        }
        GridField { grid, k, n: 0, samples: 0, mode: None, values }
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Nodes closer to the real axis than one spacing converge slowly and are
    /// flagged rather than excluded.
    pub fn near_axis(&self, _i: usize, j: usize) -> bool {
        (self.grid.y0 + j as f64 * self.grid.h).abs() < self.grid.h
    }

    /// Count of nodes below `-tol` (the `Γ_{k,n} ≥ 0` diagnostic).
    pub fn negative_violations(&self, tol: f64) -> usize {
        self.values.iter().filter(|&&v| v < -tol).count()
    }

    /// Discrete L¹ distance `h² Σ |u − v|` over shared nodes.
    pub fn l1_distance(&self, other: &GridField) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::dim("grid fields have different node counts"));
        }
        let diffs: Vec<f64> =
            self.values.iter().zip(other.values.iter()).map(|(a, b)| (a - b).abs()).collect();
        Ok(stats::pairwise_sum(&diffs) * self.grid.h * self.grid.h)
    }

    /// CSV rows `x,y,value`.
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "x,y,value")?;
        for j in 0..self.grid.ny() {
            for i in 0..self.grid.nx() {
                let z = self.grid.node(i, j);
                writeln!(out, "{:.16e},{:.16e},{:.16e}", z.re, z.im, self.value(i, j))?;
            }
        }
        Ok(())
    }
}

/// Maximal positive part of `value − (mean of 8 neighbors)` over interior
/// nodes: zero (up to `O(h²)` and sampling noise) for subharmonic fields.
pub fn submean_defect(field: &GridField) -> f64 {
    let g = &field.grid;
    let mut defect = 0.0f64;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let mut nb = 0.0;
            for (di, dj) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                nb += field.value((i as i64 + di) as usize, (j as i64 + dj) as usize);
            }
            let excess = field.value(i, j) - nb / 8.0;
            if excess > defect {
                defect = excess;
            }
        }
    }
    defect
}

/// Discrete Riesz measure of a grid field: 5-point Laplacian per interior
/// cell, scaled by `h²/(2πk)` so that `Γ_k/k`-type fields integrate to total
/// mass ≈ 1.
///
/// Negative cells (sampling noise and near-support discretization error) are
/// clipped and accounted in `negative_clipped`; the clipped masses are then
/// rescaled so the total matches the signed Laplacian sum, which telescopes
/// to the exact boundary flux of the field. Without the rescale, clipping
/// systematically inflates totals by several percent for measures carried by
/// points or segments.
#[derive(Debug, Clone, Serialize)]
pub struct RieszEstimate {
    pub grid: ComplexGrid,
    pub k: usize,
    /// Non-negative cell masses (clipped, rescaled), interior nodes only,
    /// row-major.
    pub cell_mass: Vec<f64>,
    /// Signed masses before clipping (for bin statistics that must stay
    /// unbiased under noise).
    pub signed_mass: Vec<f64>,
    pub total: f64,
    pub negative_clipped: f64,
    pub boundary_ring_mass: f64,
    pub boundary_warning: bool,
}

pub fn riesz_measure(field: &GridField) -> RieszEstimate {
    let g = &field.grid;
    let cx = g.nx() - 2;
    let cy = g.ny() - 2;
    let scale = 1.0 / (2.0 * std::f64::consts::PI * field.k as f64);
    let mut signed = Vec::with_capacity(cx * cy);
    let mut clipped = Vec::with_capacity(cx * cy);
    let mut negative = 0.0;
    for j in 1..g.ny() - 1 {
        for i in 1..g.nx() - 1 {
            let lap = field.value(i + 1, j) + field.value(i - 1, j) + field.value(i, j + 1)
                + field.value(i, j - 1)
                - 4.0 * field.value(i, j);
            let mass = lap * scale;
            signed.push(mass);
            if mass >= 0.0 {
                clipped.push(mass);
            } else {
                negative += -mass;
                clipped.push(0.0);
            }
        }
    }
    let signed_total = stats::pairwise_sum(&signed);
    let clipped_total = stats::pairwise_sum(&clipped);
    if clipped_total > 0.0 && signed_total > 0.0 {
        let rescale = signed_total / clipped_total;
        for m in clipped.iter_mut() {
            *m *= rescale;
        }
    }
    let total = stats::pairwise_sum(&clipped);
    let mut ring = 0.0;
    for cj in 0..cy {
        for ci in 0..cx {
            if ci == 0 || cj == 0 || ci == cx - 1 || cj == cy - 1 {
                ring += clipped[cj * cx + ci];
            }
        }
    }
    let boundary_warning = ring > 0.01 * total.max(1e-12);
    RieszEstimate {
        grid: *g,
        k: field.k,
        cell_mass: clipped,
        signed_mass: signed,
        total,
        negative_clipped: negative,
        boundary_ring_mass: ring,
        boundary_warning,
    }
}

impl RieszEstimate {
    fn cx(&self) -> usize {
        self.grid.nx() - 2
    }

    fn cy(&self) -> usize {
        self.grid.ny() - 2
    }

    /// Center of interior cell `(ci, cj)`.
    pub fn cell_center(&self, ci: usize, cj: usize) -> C64 {
        self.grid.node(ci + 1, cj + 1)
    }

    /// Clipped mass inside a vertical strip `x_lo ≤ Re z ≤ x_hi`.
    pub fn strip_mass(&self, x_lo: f64, x_hi: f64) -> f64 {
        let mut acc = Vec::new();
        for cj in 0..self.cy() {
            for ci in 0..self.cx() {
                let c = self.cell_center(ci, cj);
                if c.re >= x_lo && c.re <= x_hi {
                    acc.push(self.cell_mass[cj * self.cx() + ci]);
                }
            }
        }
        stats::pairwise_sum(&acc)
    }

    /// Signed mass per real-axis bin (summed over the full grid height).
    /// Signed sums keep Monte-Carlo noise zero-mean where clipping would
    /// bias it; used by the IDS cross-check.
    pub fn real_axis_bins(&self, edges: &[f64]) -> Vec<f64> {
        let nb = edges.len().saturating_sub(1);
        let mut bins = vec![0.0; nb];
        for cj in 0..self.cy() {
            for ci in 0..self.cx() {
                let x = self.cell_center(ci, cj).re;
                for b in 0..nb {
                    if x >= edges[b] && x < edges[b + 1] {
                        bins[b] += self.signed_mass[cj * self.cx() + ci];
                        break;
                    }
                }
            }
        }
        bins
    }

    /// Desk-scale version of the ball-mass bound: the max over support cells
    /// `z` and dyadic radii `r ∈ {h, 2h, ...} ∩ (0, 1/e]` of
    /// `mass(B(z,r))·|log r|/(1 + log₊|z|)`.
    pub fn ball_mass_bound(&self) -> f64 {
        let mut support: Vec<(C64, f64)> = Vec::new();
        for cj in 0..self.cy() {
            for ci in 0..self.cx() {
                let m = self.cell_mass[cj * self.cx() + ci];
                if m > 1e-12 {
                    support.push((self.cell_center(ci, cj), m));
                }
            }
        }
        let mut radii = Vec::new();
        let mut r = self.grid.h;
        while r <= 1.0 / std::f64::consts::E {
            radii.push(r);
            r *= 2.0;
        }
        let mut bound = 0.0f64;
        for &(z, _) in &support {
            for &r in &radii {
                let mass: f64 = support
                    .iter()
                    .filter(|(c, _)| (c - z).norm() <= r)
                    .map(|(_, m)| m)
                    .sum();
                let val = mass * r.ln().abs() / (1.0 + z.norm().ln().max(0.0));
                if val > bound {
                    bound = val;
                }
            }
        }
        bound
    }

    /// CSV rows `x,y,mass` over interior cells.
    pub fn to_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "x,y,mass")?;
        for cj in 0..self.cy() {
            for ci in 0..self.cx() {
                let c = self.cell_center(ci, cj);
                writeln!(out, "{:.16e},{:.16e},{:.16e}", c.re, c.im, self.cell_mass[cj * self.cx() + ci])?;
            }
        }
        Ok(())
    }
}

/// Logarithmic potential `Σ mass · log|z − center|` of a discrete measure.
///
/// Rejects evaluation on top of a cell holding more than half the mass
/// (the discretization cannot resolve the singularity there).
pub fn log_potential(measure: &RieszEstimate, z: C64) -> Result<f64> {
    let h = measure.grid.h;
    let cx = measure.cx();
    let mut acc = Vec::new();
    for cj in 0..measure.cy() {
        for ci in 0..cx {
            let m = measure.cell_mass[cj * cx + ci];
            if m == 0.0 {
                continue;
            }
            let c = measure.cell_center(ci, cj);
            let on_cell = (z.re - c.re).abs() <= h / 2.0 && (z.im - c.im).abs() <= h / 2.0;
            if m > 0.5 && on_cell {
                return Err(Error::SingularProximity { mass: m });
            }
            let d = (z - c).norm();
            if d == 0.0 {
                return Err(Error::SingularProximity { mass: m });
            }
            acc.push(m * d.ln());
        }
    }
    Ok(stats::pairwise_sum(&acc))
}

/// Circular means `M_j(R)`: the trapezoidal θ-average of the per-j exponent
/// estimates on the circle `|z| = R`.
#[derive(Debug, Clone, Serialize)]
pub struct CircularMean {
    pub r: f64,
    pub ntheta: usize,
    pub n: u64,
    pub samples: usize,
    /// `M_1 ≥ M_2 ≥ ... ≥ M_W`.
    pub m: Vec<f64>,
}

pub fn circular_mean(
    model: &PotentialModel,
    r: f64,
    ntheta: usize,
    n: u64,
    samples: usize,
    seed: u64,
) -> Result<CircularMean> {
    if ntheta < 64 {
        return Err(Error::param(format!("ntheta = {ntheta} below the minimum 64")));
    }
    if !(r > 0.0) || n == 0 || samples == 0 {
        return Err(Error::param("need r > 0, n >= 1, samples >= 1"));
    }
    let w = model.w();
    let per_theta: Vec<Vec<f64>> = (0..ntheta)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let theta = std::f64::consts::TAU * t as f64 / ntheta as f64;
            let z = C64::new(r * theta.cos(), r * theta.sin());
            let mut acc = vec![Vec::with_capacity(samples); w];
            for s in 0..samples {
                let run_seed = derive_seed(seed, (t * samples + s) as u64);
                let mut runner = CocycleRunner::new_full(model, run_seed, z, 1)?;
                let cursor = runner.advance_to(n)?;
                let rates = cursor.rates();
                for (j, bucket) in acc.iter_mut().enumerate() {
                    bucket.push(0.5 * (rates[j] - rates[2 * w - 1 - j]));
                }
            }
            Ok(acc.iter().map(|b| stats::mean(b)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    // uniform nodes on a closed circle: the periodic trapezoid rule is the mean
    let m: Vec<f64> = (0..w)
        .map(|j| {
            let col: Vec<f64> = per_theta.iter().map(|v| v[j]).collect();
            stats::mean(&col)
        })
        .collect();
    Ok(CircularMean { r, ntheta, n, samples, m })
}
