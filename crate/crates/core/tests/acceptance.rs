//! Acceptance suite: one test per exit criterion, each printing a PASS line
//! with the measured numbers (run with `--nocapture` to see them all).

use cocycle_lab::drivers::PotentialModel;
use cocycle_lab::linalg;
use cocycle_lab::lyapunov::{
    dense_product, doubling_check, ldp_tail, lyapunov_spectrum, CocycleRunner,
};
use cocycle_lab::operator::{default_test_points, green_block, ids_estimate, thouless_residual};
use cocycle_lab::scanner::{build_cover, gauge_content, restricted_growth, subseq_statistic, Gauge};
use cocycle_lab::stats;
use cocycle_lab::subharmonic::{circular_mean, riesz_measure, ComplexGrid, GridField};
use cocycle_lab::symplectic::{wedge_logsum, LagrangianFrame};
use cocycle_lab::{C64, CMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn z(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Closed-form top exponent of the constant (free) scalar cocycle, written
/// out independently of the library: log of the larger root of
/// `λ² − zλ + 1 = 0`.
fn free_oracle(zv: C64) -> f64 {
    let disc = (zv * zv - z(4.0, 0.0)).sqrt();
    let l1 = (zv + disc) * z(0.5, 0.0);
    let l2 = (zv - disc) * z(0.5, 0.0);
    l1.norm().max(l2.norm()).ln()
}

#[test]
fn criterion_01_symplectic_pairing() {
    let n = 10_000u64;
    let mut worst = 0.0f64;
    for w in [1usize, 2, 3] {
        let model = PotentialModel::anderson_bernoulli(w, 1.0);
        let mut runner = CocycleRunner::new_full(&model, 0xC0A1, z(0.5, 0.0), 1).unwrap();
        let cursor = runner.advance_to(n).unwrap();
        let ls = cursor.logstretch();
        for j in 0..w {
            let defect = (ls[j] + ls[2 * w - 1 - j]).abs() / n as f64;
            worst = worst.max(defect);
        }
    }
    assert!(worst <= 1e-8, "pairing defect {worst:e}");
    println!("ACCEPTANCE 01 symplectic-pairing: PASS (max defect {worst:.3e} <= 1e-8)");
}

#[test]
fn criterion_02_free_model_exponent() {
    let model = PotentialModel::free(1);
    let est = lyapunov_spectrum(&model, z(3.0, 0.0), 100_000, 1, 1, 0x02).unwrap();
    let expect = ((3.0 + 5.0f64.sqrt()) / 2.0).ln();
    let err = (est.gamma[0] - expect).abs();
    assert!(err <= 1e-3, "free exponent error {err:e}");
    let inside = lyapunov_spectrum(&model, z(0.0, 0.0), 100_000, 1, 1, 0x02).unwrap();
    assert!(inside.gamma[0].abs() <= 1e-2, "gamma(0) = {}", inside.gamma[0]);
    println!(
        "ACCEPTANCE 02 free-exponent: PASS (|gamma(3)-{expect:.5}| = {err:.2e} <= 1e-3, gamma(0) = {:.2e} <= 1e-2)",
        inside.gamma[0]
    );
}

#[test]
fn criterion_03_lloyd_model() {
    let model = PotentialModel::lloyd(1.0);
    let mut worst = 0.0f64;
    for e in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        // n x samples = 10^6
        let est = lyapunov_spectrum(&model, z(e, 0.0), 100_000, 10, 1, 0x03).unwrap();
        let oracle = free_oracle(z(e, 1.0));
        let err = (est.gamma[0] - oracle).abs();
        worst = worst.max(err);
        assert!(err <= 2e-2, "Lloyd at E={e}: {} vs {oracle} (err {err:.3e})", est.gamma[0]);
    }
    println!("ACCEPTANCE 03 lloyd-model: PASS (max |gamma - gamma_free(E+i)| = {worst:.3e} <= 2e-2)");
}

#[test]
fn criterion_05_riesz_mass_and_arcsine_slice() {
    // analytic free-model field (allowed by the criterion)
    let grid = ComplexGrid::new(-6.0, 6.0, -3.0, 3.0, 0.05).unwrap();
    let field = GridField::from_fn(grid, 1, free_oracle);
    let measure = riesz_measure(&field);
    assert!(
        (0.95..=1.05).contains(&measure.total),
        "total mass {} outside [0.95, 1.05]",
        measure.total
    );
    let strip = measure.strip_mass(-1.0, 1.0);
    // arcsine measure of [-1,1]: kappa(1) - kappa(-1) = 1/3
    let err = (strip - 1.0 / 3.0).abs();
    assert!(err <= 0.02, "strip mass {strip} vs 1/3");
    println!(
        "ACCEPTANCE 05 riesz-arcsine: PASS (total {:.4} in [0.95,1.05], strip {:.4} = 1/3 +- {err:.3e})",
        measure.total, strip
    );
}

#[test]
fn criterion_06_wedge_power_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x06);
    let mut worst = 0.0f64;
    for dim in [4usize, 6] {
        for _ in 0..100 {
            let a = CMatrix::from_fn(dim, dim, |_, _| {
                C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
            });
            let k = 2;
            let direct = wedge_logsum(&a, k).unwrap();
            let compound = linalg::compound_matrix(&a, k).unwrap();
            let oracle = linalg::singular_values(&compound).unwrap()[0].ln();
            worst = worst.max((direct - oracle).abs());
        }
    }
    assert!(worst <= 1e-10, "wedge mismatch {worst:e}");
    println!("ACCEPTANCE 06 wedge-equivalence: PASS (max |svd-route - minors-route| = {worst:.3e} <= 1e-10)");
}

#[test]
fn criterion_08_craig_simon_doubling() {
    let model = PotentialModel::anderson_bernoulli(1, 1.0);
    let mut lines = Vec::new();
    for n in [64u64, 128, 256] {
        let check = doubling_check(&model, z(0.5, 0.5), n, 500, 0x08).unwrap();
        for k in 0..check.w {
            assert!(
                check.holds[k],
                "a_2n > a_n + 3 sigma at n={n}, k={}: {} vs {}",
                k + 1,
                check.a_2n[k],
                check.a_n[k]
            );
        }
        lines.push(format!("n={n}: a_n={:.5} a_2n={:.5}", check.a_n[0], check.a_2n[0]));
    }
    println!("ACCEPTANCE 08 craig-simon-doubling: PASS ({})", lines.join("; "));
}

#[test]
fn criterion_09_ldp_decay() {
    let model = PotentialModel::anderson_bernoulli(1, 1.0);
    let e = 0.5;
    let gamma_ref = lyapunov_spectrum(&model, z(e, 0.0), 400_000, 4, 1, 0x09).unwrap();
    let curve = ldp_tail(&model, e, 1, 0.1, &[200, 400, 800, 1600], 4000, &gamma_ref, 0x19).unwrap();
    let strictly_decreasing = curve.p_hat.windows(2).all(|w| w[1] < w[0]);
    let r2 = curve.r2.unwrap_or(f64::NAN);
    let ok = strictly_decreasing && !curve.censored && curve.rate > 0.0 && r2 >= 0.9;
    println!(
        "ACCEPTANCE 09 ldp-decay: {} (p_hat {:?}, rate {:.5}, R2 {r2:.4}, censored {})",
        if ok { "PASS" } else { "FAIL" },
        curve.p_hat,
        curve.rate,
        curve.censored
    );
    // epsilon = 0.1 is ~4 sigma at n = 200 for this model (gamma(0.5) = 0.133,
    // sigma(n) ~ 0.36/sqrt(n)), so every level censors at 0 with M = 4000;
    // the same pipeline at epsilon = 0.02 decays cleanly (see the lyapunov
    // module test ldp_decay_measurable_at_small_epsilon)
    assert!(
        ok,
        "criterion unattainable at the pinned epsilon: p_hat {:?} (all censored)",
        curve.p_hat
    );
}
