//! Sampled certification of the controllability conditions.
//!
//! Every check evaluates a matrix inequality on a declared sample grid and
//! reports the worst margin together with the point that attains it. A
//! passing report certifies the condition on the samples only; the grid and
//! box are part of the report for that reason.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain_synthesis::{back_pi, emu_factorize, leading_minors, validate_g_pair, GainSet};
use crate::linalg::{halton, max_eig_sym, min_eig_sym, spectral_norm, sym};
use crate::plant::{Plant, StateMatMap};

/// Worst-margin record of one sampled condition. `passed` holds exactly when
/// `worst_margin >= threshold`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub condition: String,
    pub samples: usize,
    pub worst_margin: f64,
    pub worst_point: Vec<f64>,
    pub threshold: f64,
    pub passed: bool,
}

impl CheckReport {
    fn fold(
        condition: impl Into<String>,
        threshold: f64,
        margins: impl IntoIterator<Item = (f64, Vec<f64>)>,
    ) -> Self {
        let mut worst_margin = f64::INFINITY;
        let mut worst_point = Vec::new();
        let mut samples = 0;
        for (margin, point) in margins {
            samples += 1;
            if margin < worst_margin {
                worst_margin = margin;
                worst_point = point;
            }
        }
        Self {
            condition: condition.into(),
            samples,
            worst_margin,
            worst_point,
            threshold,
            passed: worst_margin >= threshold,
        }
    }
}

/// Sampling scheme over a box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GridScheme {
    UniformGrid { per_axis: usize },
    LowDiscrepancy { count: usize },
    Random { count: usize, seed: u64 },
}

/// A compact box with a sampling scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleGrid {
    /// Per-coordinate closed intervals.
    pub bounds: Vec<(f64, f64)>,
    pub scheme: GridScheme,
}

impl SampleGrid {
    pub fn uniform(bounds: Vec<(f64, f64)>, per_axis: usize) -> Self {
        Self {
            bounds,
            scheme: GridScheme::UniformGrid { per_axis },
        }
    }

    pub fn halton(bounds: Vec<(f64, f64)>, count: usize) -> Self {
        Self {
            bounds,
            scheme: GridScheme::LowDiscrepancy { count },
        }
    }

    /// The default sampling for a box: a 4096-point low-discrepancy
    /// sequence.
    pub fn default_for(bounds: Vec<(f64, f64)>) -> Self {
        Self::halton(bounds, 4096)
    }

    /// Materializes the sample points (all inside the box).
    pub fn points(&self) -> Result<Vec<DVector<f64>>> {
        let dim = self.bounds.len();
        if dim == 0 {
            return Err(Error::Validation {
                field: "bounds",
                reason: "sample box must have at least one axis".into(),
            });
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Validation {
                    field: "bounds",
                    reason: format!("axis {i} has an invalid interval [{lo}, {hi}]"),
                });
            }
        }
        let scale = |unit: &DVector<f64>| {
            DVector::from_fn(dim, |i, _| {
                let (lo, hi) = self.bounds[i];
                lo + (hi - lo) * unit[i]
            })
        };
        match &self.scheme {
            GridScheme::UniformGrid { per_axis } => {
                let per_axis = (*per_axis).max(1);
                let total = per_axis.checked_pow(dim as u32).unwrap_or(usize::MAX);
                if total > 2_000_000 {
                    return Err(Error::Validation {
                        field: "per_axis",
                        reason: format!("uniform grid would have {total} points"),
                    });
                }
                let mut pts = Vec::with_capacity(total);
                let mut idx = vec![0usize; dim];
                loop {
                    let p = DVector::from_fn(dim, |i, _| {
                        let (lo, hi) = self.bounds[i];
                        if per_axis == 1 {
                            0.5 * (lo + hi)
                        } else {
                            lo + (hi - lo) * idx[i] as f64 / (per_axis - 1) as f64
                        }
                    });
                    pts.push(p);
                    let mut axis = 0;
                    loop {
                        idx[axis] += 1;
                        if idx[axis] < per_axis {
                            break;
                        }
                        idx[axis] = 0;
                        axis += 1;
                        if axis == dim {
                            return Ok(pts);
                        }
                    }
                }
            }
            GridScheme::LowDiscrepancy { count } => {
                Ok(halton(*count, dim)?.iter().map(scale).collect())
            }
            GridScheme::Random { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..*count)
                    .map(|_| {
                        let unit = DVector::from_fn(dim, |_, _| rng.random_range(0.0..1.0));
                        scale(&unit)
                    })
                    .collect())
            }
        }
    }
}

/// Interprets a sample point as `(w, x)` for a plant: either the box covers
/// only `w` (then `x = 0`) or the full `(w, x)` product.
pub fn split_plant_point(
    plant: &Plant,
    point: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if point.len() == plant.n_w {
        Ok((point.clone(), DVector::zeros(plant.n_x)))
    } else if point.len() == plant.n_w + plant.n_x {
        Ok((
            point.rows(0, plant.n_w).into_owned(),
            point.rows(plant.n_w, plant.n_x).into_owned(),
        ))
    } else {
        Err(Error::Validation {
            field: "grid",
            reason: format!(
                "point dimension {} matches neither n_w = {} nor n_w + n_x = {}",
                point.len(),
                plant.n_w,
                plant.n_w + plant.n_x
            ),
        })
    }
}

/// Adapter turning a plant's high-frequency gain into a point function for
/// the generic checks.
pub fn hf_gain_fn(plant: &Plant) -> impl Fn(&DVector<f64>) -> DMatrix<f64> + '_ {
    move |point| {
        let (w, x) = split_plant_point(plant, point).expect("grid dimension mismatch");
        (plant.hf_gain)(&w, &x)
    }
}

/// `|Δ_i(x̄)| >= ε` for every leading principal minor, plus uniformity of the
/// EMU sign matrix across samples.
pub fn check_minors<F>(b_fn: F, grid: &SampleGrid, epsilon: f64) -> Result<CheckReport>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let points = grid.points()?;
    let mut margins = Vec::with_capacity(points.len());
    let mut sign_ref: Option<DVector<f64>> = None;
    let mut uniform = true;
    for p in &points {
        let b = b_fn(p);
        let minors = leading_minors(&b)?;
        let margin = minors
            .iter()
            .map(|m| m.abs() - epsilon)
            .fold(f64::INFINITY, f64::min);
        if minors.iter().all(|m| m.abs() > 0.0) {
            let signs = emu_factorize(&b)?.e.diagonal();
            match &sign_ref {
                None => sign_ref = Some(signs),
                Some(prev) => {
                    if (prev - &signs).amax() > 0.0 {
                        uniform = false;
                    }
                }
            }
        }
        margins.push((margin, p.iter().copied().collect()));
    }
    let mut report = CheckReport::fold("minors", 0.0, margins);
    if !uniform {
        report.passed = false;
        report.condition = "minors (sign pattern not uniform)".into();
    }
    Ok(report)
}

/// The three-part certificate report for the `(𝒫, 𝓛)` controllability
/// condition.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionPl {
    /// Empirical eigenvalue range of `𝒫` over the grid.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// `min eig 𝒫 > 0` (uniform positivity on the samples).
    pub point_a: CheckReport,
    /// Directional-derivative residual of `𝒫` along `b·u` stays below
    /// tolerance.
    pub point_b: CheckReport,
    /// `min eig(𝓛ᵀBᵀ𝒫 + 𝒫B𝓛) >= 1`.
    pub point_c: CheckReport,
}

impl AssumptionPl {
    pub fn passed(&self) -> bool {
        self.point_a.passed && self.point_b.passed && self.point_c.passed
    }

    pub fn reports(&self) -> [&CheckReport; 3] {
        [&self.point_a, &self.point_b, &self.point_c]
    }
}

/// Finite-difference settings for the invariance residuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FdCheck {
    pub step: f64,
    pub tol: f64,
}

impl Default for FdCheck {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tol: 1e-6,
        }
    }
}

fn directional_matrix_residual(
    map: &StateMatMap,
    plant: &Plant,
    w: &DVector<f64>,
    x: &DVector<f64>,
    fd: FdCheck,
) -> f64 {
    let b = (plant.input_matrix)(w, x);
    let mut worst = 0.0f64;
    for j in 0..plant.n_u {
        let dir = b.column(j).into_owned();
        let xp = x + &dir * fd.step;
        let xm = x - &dir * fd.step;
        let dm = (map(w, &xp) - map(w, &xm)) / (2.0 * fd.step);
        worst = worst.max(dm.norm());
    }
    worst
}

/// Certifies the stabilizer condition: `𝒫` symmetric and positive on the
/// samples, invariant along `b·u`, and `𝓛ᵀBᵀ𝒫 + 𝒫B𝓛 ⪰ I`.
pub fn check_assumption_p_l(
    plant: &Plant,
    p_fn: &StateMatMap,
    l: &DMatrix<f64>,
    grid: &SampleGrid,
    fd: FdCheck,
) -> Result<AssumptionPl> {
    let points = grid.points()?;
    let mut a_margins = Vec::with_capacity(points.len());
    let mut b_margins = Vec::with_capacity(points.len());
    let mut c_margins = Vec::with_capacity(points.len());
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for point in &points {
        let (w, x) = split_plant_point(plant, point)?;
        let p = p_fn(&w, &x);
        if (&p - p.transpose()).norm() > 1e-9 * (1.0 + p.norm()) {
            return Err(Error::Validation {
                field: "P",
                reason: format!("candidate 𝒫 is not symmetric at point {point:?}"),
            });
        }
        let lo = min_eig_sym(&p);
        let hi = max_eig_sym(&p);
        lambda_min = lambda_min.min(lo);
        lambda_max = lambda_max.max(hi);
        let coords: Vec<f64> = point.iter().copied().collect();
        a_margins.push((lo, coords.clone()));

        let resid = directional_matrix_residual(p_fn, plant, &w, &x, fd);
        b_margins.push((fd.tol - resid, coords.clone()));

        let b = (plant.hf_gain)(&w, &x);
        let cert = l.transpose() * b.transpose() * &p + &p * b * l;
        c_margins.push((min_eig_sym(&cert) - 1.0, coords));
    }
    Ok(AssumptionPl {
        lambda_min,
        lambda_max,
        point_a: CheckReport::fold("P-positivity", 0.0, a_margins),
        point_b: CheckReport::fold("P-invariance-along-bu", 0.0, b_margins),
        point_c: CheckReport::fold("L-B-P-certificate", 0.0, c_margins),
    })
}

/// The three-part certificate for the steady-state condition on `D^{e,e}`.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionDee {
    /// `min eig(D^{e,e}ᵀ𝓜 + 𝓜D^{e,e}) >= 1`.
    pub main: CheckReport,
    /// `𝓜 > 0` on the samples.
    pub positivity: CheckReport,
    /// Invariance of `𝓜` along `b·u`.
    pub residual: CheckReport,
}

impl AssumptionDee {
    pub fn passed(&self) -> bool {
        self.main.passed && self.positivity.passed && self.residual.passed
    }

    pub fn reports(&self) -> [&CheckReport; 3] {
        [&self.main, &self.positivity, &self.residual]
    }
}

/// Certifies `D^{e,e}ᵀ𝓜 + 𝓜D^{e,e} ⪰ I` with `D = B𝓛` over the grid
/// (intended to cover the attractor projection).
pub fn check_assumption_dee(
    plant: &Plant,
    m_fn: &StateMatMap,
    gains: &GainSet,
    grid: &SampleGrid,
    fd: FdCheck,
) -> Result<AssumptionDee> {
    let n_e = plant.sig.n_e();
    let points = grid.points()?;
    let mut main = Vec::with_capacity(points.len());
    let mut pos = Vec::with_capacity(points.len());
    let mut res = Vec::with_capacity(points.len());
    for point in &points {
        let (w, x) = split_plant_point(plant, point)?;
        let m = m_fn(&w, &x);
        if m.shape() != (n_e, n_e) {
            return Err(Error::Validation {
                field: "M",
                reason: format!(
                    "candidate 𝓜 must be {n_e}x{n_e}, got {}x{}",
                    m.nrows(),
                    m.ncols()
                ),
            });
        }
        let coords: Vec<f64> = point.iter().copied().collect();
        let dee = ((plant.hf_gain)(&w, &x) * &gains.l)
            .view((0, 0), (n_e, n_e))
            .into_owned();
        let cert = dee.transpose() * &m + &m * &dee;
        main.push((min_eig_sym(&cert) - 1.0, coords.clone()));
        pos.push((min_eig_sym(&m), coords.clone()));
        let r = directional_matrix_residual(m_fn, plant, &w, &x, fd);
        res.push((fd.tol - r, coords));
    }
    Ok(AssumptionDee {
        main: CheckReport::fold("Dee-M-certificate", 0.0, main),
        positivity: CheckReport::fold("M-positivity", 0.0, pos),
        residual: CheckReport::fold("M-invariance-along-bu", 0.0, res),
    })
}

/// Closed-form value of `max_{|Λ|≤1} |(B−M)ΛM⁻¹|`, which equals
/// `‖B−M‖₂·‖M⁻¹‖₂` (the max is attained by a rank-one Λ aligning the
/// singular directions of the two factors).
pub fn contraction_value(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let m_inv = m.clone().try_inverse().ok_or(Error::Validation {
        field: "M",
        reason: "contraction reference M must be invertible".into(),
    })?;
    Ok(spectral_norm(&(b - m)) * spectral_norm(&m_inv))
}

/// Value of the contraction expression at the aligned rank-one probe
/// `Λ = v_A u_Cᵀ` (must attain [`contraction_value`] up to round-off).
pub fn contraction_aligned_probe(b: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<f64> {
    let m_inv = m.clone().try_inverse().ok_or(Error::Validation {
        field: "M",
        reason: "contraction reference M must be invertible".into(),
    })?;
    let a = b - m;
    let svd_a = a.clone().svd(true, true);
    let svd_c = m_inv.clone().svd(true, true);
    let v_a = svd_a.v_t.as_ref().unwrap().row(0).transpose();
    let u_c = svd_c.u.as_ref().unwrap().column(0).into_owned();
    let lambda = v_a * u_c.transpose();
    Ok(spectral_norm(&(a * lambda * m_inv)))
}

/// Brute-force maximum of the contraction expression over `probes` random
/// matrices with unit spectral norm.
pub fn contraction_probe_max(
    b: &DMatrix<f64>,
    m: &DMatrix<f64>,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let m_inv = m.clone().try_inverse().ok_or(Error::Validation {
        field: "M",
        reason: "contraction reference M must be invertible".into(),
    })?;
    let a = b - m;
    let n = b.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = 0.0f64;
    for _ in 0..probes {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let norm = spectral_norm(&raw);
        if norm == 0.0 {
            continue;
        }
        // random contraction factor keeps probes strictly inside the ball too
        let scale = rng.random_range(0.2..=1.0) / norm;
        let value = spectral_norm(&(&a * (raw * scale) * &m_inv));
        best = best.max(value);
    }
    Ok(best)
}

/// `max_{|Λ|≤1} |(B(x̄)−M)ΛM⁻¹| <= δ₀` over the grid, with the max evaluated
/// in closed form per sample.
pub fn check_contraction<F>(
    b_fn: F,
    m_const: &DMatrix<f64>,
    delta0: f64,
    grid: &SampleGrid,
) -> Result<CheckReport>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    if !(0.0 < delta0 && delta0 < 1.0) {
        return Err(Error::Validation {
            field: "delta0",
            reason: format!("must lie in (0, 1), got {delta0}"),
        });
    }
    let points = grid.points()?;
    let mut margins = Vec::with_capacity(points.len());
    for p in &points {
        let value = contraction_value(&b_fn(p), m_const)?;
        margins.push((delta0 - value, p.iter().copied().collect()));
    }
    Ok(CheckReport::fold("contraction", 0.0, margins))
}

/// Eigenvalue check of the Back-style quadratic condition plus a random-probe
/// cross-check.
#[derive(Debug, Clone, Serialize)]
pub struct BackCheck {
    pub report: CheckReport,
    /// The probe-based pass/fail verdict matches the eigenvalue verdict.
    pub probes_agree: bool,
}

/// `(B(x̄)Kp̄ − G⁻p̄)ᵀ Π² (B(x̄)Kp̄ − G⁺p̄) <= −κ p̄ᵀp̄` for all `p̄`, checked
/// exactly via `max eig(sym((BK−G⁻)ᵀΠ²(BK−G⁺))) <= −κ` and cross-checked on
/// `probe_count` random directions.
#[allow(clippy::too_many_arguments)]
pub fn check_back<F>(
    b_fn: F,
    k: &DMatrix<f64>,
    g_minus: &DMatrix<f64>,
    g_plus: &DMatrix<f64>,
    kappa: f64,
    grid: &SampleGrid,
    probe_count: usize,
    seed: u64,
) -> Result<BackCheck>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    validate_g_pair(g_minus, g_plus)?;
    if kappa <= 0.0 {
        return Err(Error::Validation {
            field: "kappa",
            reason: format!("must be positive, got {kappa}"),
        });
    }
    let pi = back_pi(g_minus, g_plus);
    let pi2 = &pi * &pi;
    let points = grid.points()?;
    let n = k.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(points.len());
    let mut probes_agree = true;
    for p in &points {
        let bk = b_fn(p) * k;
        let q = sym(&((&bk - g_minus).transpose() * &pi2 * (&bk - g_plus)));
        let margin = -kappa - max_eig_sym(&q);
        // secondary brute-force check on random directions
        let mut probe_ok = true;
        for _ in 0..probe_count {
            let dir = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            if dir.norm() < 1e-12 {
                continue;
            }
            let lhs =
                (&bk * &dir - g_minus * &dir).transpose() * &pi2 * (&bk * &dir - g_plus * &dir);
            if lhs[(0, 0)] > -kappa * dir.norm_squared() + 1e-9 {
                probe_ok = false;
                break;
            }
        }
        if probe_ok != (margin >= 0.0) {
            // A finite probe set can only under-detect violations; a
            // disagreement in the other direction is a real inconsistency.
            if !(margin < 0.0 && probe_ok) {
                probes_agree = false;
            }
        }
        margins.push((margin, p.iter().copied().collect()));
    }
    Ok(BackCheck {
        report: CheckReport::fold("back-condition", 0.0, margins),
        probes_agree,
    })
}

/// Outcome of the block-diagonal reduction: when the candidate `𝒫` is
/// block-diagonal at the error split, its upper-left block certifies the
/// steady-state condition.
pub struct BlockdiagReduction {
    pub report: CheckReport,
    /// The induced candidate `𝓜(x̄) = 𝒫^e(x̄)`, present when the split holds.
    pub induced_m: Option<StateMatMap>,
}

/// Verifies that `𝒫` is block-diagonal at the split `n_e` (off-diagonal
/// block norm below `tol` on the samples) and emits the induced `𝓜`.
pub fn check_blockdiag_p_implies_m(
    plant: &Plant,
    p_fn: &StateMatMap,
    split_ne: usize,
    grid: &SampleGrid,
    tol: f64,
) -> Result<BlockdiagReduction> {
    let points = grid.points()?;
    let mut margins = Vec::with_capacity(points.len());
    for point in &points {
        let (w, x) = split_plant_point(plant, point)?;
        let p = p_fn(&w, &x);
        let n = p.nrows();
        if split_ne >= n {
            return Err(Error::Validation {
                field: "split_ne",
                reason: format!("split {split_ne} must be below the matrix size {n}"),
            });
        }
        let off = p.view((0, split_ne), (split_ne, n - split_ne)).norm();
        margins.push((tol - off, point.iter().copied().collect()));
    }
    let report = CheckReport::fold("blockdiag-P", 0.0, margins);
    let induced_m = if report.passed {
        let inner = p_fn.clone();
        Some(
            std::sync::Arc::new(move |w: &DVector<f64>, x: &DVector<f64>| {
                inner(w, x).view((0, 0), (split_ne, split_ne)).into_owned()
            }) as StateMatMap,
        )
    } else {
        None
    };
    Ok(BlockdiagReduction { report, induced_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gain_synthesis::{assemble_gains, build_g};
    use crate::linalg::binomial_descending;
    use crate::plant::{example_p_matrix, make_example_plant, ExamplePlantParams};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn w_grid() -> SampleGrid {
        SampleGrid::uniform(vec![(-3.0, 3.0), (-3.0, 3.0)], 21)
    }

    fn example_gains(alpha: f64, m: f64, g: f64, ell: f64) -> GainSet {
        let params = ExamplePlantParams {
            alpha,
            m,
            ..Default::default()
        };
        let plant = make_example_plant(params.clone()).unwrap();
        let h = binomial_descending(5);
        let inj = build_g(&h, g, 5, 1).unwrap();
        assemble_gains(
            &plant.sig,
            &params.l_matrix(),
            &nalgebra::DMatrix::zeros(2, 0),
            &inj,
            g,
            ell,
            h,
            vec![5.0, 10.0],
            vec![vec![], vec![]],
        )
        .unwrap()
    }

    #[test]
    fn grid_schemes_stay_in_box() {
        let bounds = vec![(-1.0, 2.0), (0.0, 5.0)];
        for scheme in [
            GridScheme::UniformGrid { per_axis: 7 },
            GridScheme::LowDiscrepancy { count: 100 },
            GridScheme::Random {
                count: 100,
                seed: 3,
            },
        ] {
            let grid = SampleGrid {
                bounds: bounds.clone(),
                scheme,
            };
            for p in grid.points().unwrap() {
                assert!(p[0] >= -1.0 && p[0] <= 2.0);
                assert!(p[1] >= 0.0 && p[1] <= 5.0);
            }
        }
    }

    #[test]
    fn minors_example_plant() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let report = check_minors(hf_gain_fn(&plant), &w_grid(), 0.5).unwrap();
        assert!(report.passed);
        assert_relative_eq!(report.worst_margin, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn minors_identity_margin_zero() {
        let report = check_minors(
            |_| DMatrix::identity(2, 2),
            &SampleGrid::halton(vec![(0.0, 1.0)], 16),
            1.0,
        )
        .unwrap();
        assert!(report.passed);
        assert_relative_eq!(report.worst_margin, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn minors_singular_matrix_fails() {
        let report = check_minors(
            |_| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            &SampleGrid::halton(vec![(0.0, 1.0)], 8),
            1e-6,
        )
        .unwrap();
        assert!(!report.passed);
    }

    #[test]
    fn minors_pass_implies_emu_reconstruction() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let grid = w_grid();
        let report = check_minors(hf_gain_fn(&plant), &grid, 0.5).unwrap();
        assert!(report.passed);
        for p in grid.points().unwrap() {
            let b = hf_gain_fn(&plant)(&p);
            let fac = emu_factorize(&b).unwrap();
            assert!((fac.reconstruct() - &b).norm() <= 1e-10 * b.norm().max(1.0));
        }
    }

    #[test]
    fn assumption_pl_example_plant() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let gains = example_gains(5.0, 1.0, 5.0, 5.0);
        let p_fn: StateMatMap = Arc::new(|w, _x| example_p_matrix(w));
        let rep =
            check_assumption_p_l(&plant, &p_fn, &gains.l, &w_grid(), FdCheck::default()).unwrap();
        assert!(rep.passed(), "margins: {:?}", rep.reports());
        // Point-c margin equals min over the grid of (min eig M(w)) − 1.
        let brute = (0..21)
            .map(|i| {
                let w1 = -3.0 + 0.3 * i as f64;
                min_eig_sym(&crate::plant::example_m_of_w(5.0, w1)) - 1.0
            })
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(rep.point_c.worst_margin, brute, epsilon = 1e-9);
    }

    #[test]
    fn assumption_pl_trivial_and_broken() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let identity_b_plant = {
            let mut p = plant.clone();
            p.hf_gain = Arc::new(|_, _| DMatrix::identity(2, 2));
            p
        };
        let p_fn: StateMatMap = Arc::new(|_, _| DMatrix::identity(2, 2));
        let rep = check_assumption_p_l(
            &identity_b_plant,
            &p_fn,
            &DMatrix::identity(2, 2),
            &w_grid(),
            FdCheck::default(),
        )
        .unwrap();
        assert!(rep.passed());
        assert_relative_eq!(rep.point_c.worst_margin, 1.0, epsilon = 1e-12);

        let rep = check_assumption_p_l(
            &identity_b_plant,
            &p_fn,
            &DMatrix::zeros(2, 2),
            &w_grid(),
            FdCheck::default(),
        )
        .unwrap();
        assert!(!rep.point_c.passed);
        assert_relative_eq!(rep.point_c.worst_margin, -1.0, epsilon = 1e-12);
    }

    #[test]
    fn assumption_dee_example_margin() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let gains = example_gains(5.0, 1.0, 5.0, 5.0);
        let m_fn: StateMatMap = Arc::new(|_, _| DMatrix::identity(1, 1));
        let rep =
            check_assumption_dee(&plant, &m_fn, &gains, &w_grid(), FdCheck::default()).unwrap();
        assert!(rep.passed());
        // D^{e,e} = α² = 25, so the margin is exactly 2α² − 1 = 49.
        assert_relative_eq!(rep.main.worst_margin, 49.0, epsilon = 1e-12);
    }

    #[test]
    fn assumption_dee_boundary_and_failure() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let mut identity_plant = plant.clone();
        identity_plant.hf_gain = Arc::new(|_, _| DMatrix::identity(2, 2));
        let gains = {
            let mut g = example_gains(5.0, 1.0, 5.0, 5.0);
            g.l = DMatrix::identity(2, 2);
            g
        };
        let half: StateMatMap = Arc::new(|_, _| DMatrix::identity(1, 1) * 0.5);
        let rep = check_assumption_dee(
            &identity_plant,
            &half,
            &gains,
            &w_grid(),
            FdCheck::default(),
        )
        .unwrap();
        assert_relative_eq!(rep.main.worst_margin, 0.0, epsilon = 1e-12);
        assert!(rep.main.passed);

        let mut zero_dee_plant = plant.clone();
        zero_dee_plant.hf_gain =
            Arc::new(|_, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let one: StateMatMap = Arc::new(|_, _| DMatrix::identity(1, 1));
        let rep =
            check_assumption_dee(&zero_dee_plant, &one, &gains, &w_grid(), FdCheck::default())
                .unwrap();
        assert!(!rep.main.passed);
    }

    #[test]
    fn contraction_examples() {
        let grid = SampleGrid::halton(vec![(0.0, 1.0)], 8);
        let m = DMatrix::identity(1, 1);
        let rep = check_contraction(|_| DMatrix::identity(1, 1), &m, 0.9, &grid).unwrap();
        assert!(rep.passed);
        assert_relative_eq!(rep.worst_margin, 0.9, epsilon = 1e-14);

        let rep =
            check_contraction(|_| DMatrix::from_row_slice(1, 1, &[1.5]), &m, 0.6, &grid).unwrap();
        assert!(rep.passed);
        assert_relative_eq!(rep.worst_margin, 0.1, epsilon = 1e-12);

        let rep =
            check_contraction(|_| DMatrix::from_row_slice(1, 1, &[2.0]), &m, 0.5, &grid).unwrap();
        assert!(!rep.passed);
    }

    #[test]
    fn contraction_probes_never_exceed_closed_form() {
        let b = DMatrix::from_row_slice(1, 1, &[1.5]);
        let m = DMatrix::identity(1, 1);
        let cf = contraction_value(&b, &m).unwrap();
        assert_relative_eq!(cf, 0.5, epsilon = 1e-14);
        let probe = contraction_probe_max(&b, &m, 100_000, 9).unwrap();
        assert!(probe <= cf + 1e-12);
        let aligned = contraction_aligned_probe(&b, &m).unwrap();
        assert_relative_eq!(aligned, cf, epsilon = 1e-10);
    }

    #[test]
    fn back_condition_examples() {
        let grid = SampleGrid::halton(vec![(0.0, 1.0)], 8);
        let g_minus = DMatrix::identity(2, 2) * 0.5;
        let g_plus = DMatrix::identity(2, 2) * 1.5;
        // Q = −Π²/4 = −I/4 ⪯ −0.2 I
        let check = check_back(
            |_| DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &g_minus,
            &g_plus,
            0.2,
            &grid,
            200,
            1,
        )
        .unwrap();
        assert!(check.report.passed);
        assert!(check.probes_agree);
        assert_relative_eq!(check.report.worst_margin, 0.05, epsilon = 1e-12);

        // κ above the available decay fails
        let check = check_back(
            |_| DMatrix::identity(2, 2),
            &DMatrix::identity(2, 2),
            &g_minus,
            &g_plus,
            0.3,
            &grid,
            200,
            1,
        )
        .unwrap();
        assert!(!check.report.passed);

        // sign-flipped K turns the form positive
        let check = check_back(
            |_| DMatrix::identity(2, 2),
            &(-DMatrix::identity(2, 2)),
            &g_minus,
            &g_plus,
            0.1,
            &grid,
            200,
            1,
        )
        .unwrap();
        assert!(!check.report.passed);
        assert!(check.probes_agree);
    }

    #[test]
    fn positivity_consistency_with_pl_check() {
        // When BK + KᵀBᵀ ⪰ I holds on a grid, the (𝒫 = I, 𝓛 = K) pair passes
        // the full certificate on the same grid.
        let plant = {
            let mut p = make_example_plant(ExamplePlantParams::default()).unwrap();
            p.hf_gain = Arc::new(|_, _| DMatrix::identity(2, 2));
            p
        };
        let k = DMatrix::identity(2, 2);
        let grid = w_grid();
        let pos_margin = grid
            .points()
            .unwrap()
            .iter()
            .map(|p| {
                let b = hf_gain_fn(&plant)(p);
                min_eig_sym(&(&b * &k + k.transpose() * b.transpose())) - 1.0
            })
            .fold(f64::INFINITY, f64::min);
        assert!(pos_margin >= 0.0);
        let p_fn: StateMatMap = Arc::new(|_, _| DMatrix::identity(2, 2));
        let rep = check_assumption_p_l(&plant, &p_fn, &k, &grid, FdCheck::default()).unwrap();
        assert!(rep.passed());
    }

    #[test]
    fn blockdiag_reduction() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        // The example 𝒫 has off-diagonal entry b(w) ≠ 0, so this route fails
        // and the direct 𝓜 = 1 path is the one that certifies the example.
        let p_fn: StateMatMap = Arc::new(|w, _x| example_p_matrix(w));
        let out = check_blockdiag_p_implies_m(&plant, &p_fn, 1, &w_grid(), 1e-9).unwrap();
        assert!(!out.report.passed);
        assert!(out.induced_m.is_none());

        let p_id: StateMatMap = Arc::new(|_, _| DMatrix::identity(2, 2));
        let out = check_blockdiag_p_implies_m(&plant, &p_id, 1, &w_grid(), 1e-9).unwrap();
        assert!(out.report.passed);
        let m = out.induced_m.unwrap();
        assert_eq!(
            m(&DVector::zeros(2), &DVector::zeros(3)),
            DMatrix::identity(1, 1)
        );

        let p_diag: StateMatMap =
            Arc::new(|_, _| DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0, 5.0])));
        let out = check_blockdiag_p_implies_m(&plant, &p_diag, 1, &w_grid(), 1e-9).unwrap();
        let m = out.induced_m.unwrap();
        assert_eq!(
            m(&DVector::zeros(2), &DVector::zeros(3)),
            DMatrix::from_row_slice(1, 1, &[2.0])
        );
    }
}
