//! The postprocessing internal-model unit and control law.
//!
//! The regulator state η ∈ ℝ^{d·n_e} follows `η̇ = Φ(η) + Ge` where `Φ` is a
//! shift chain closed by a Lipschitz map `φ`, and the input is
//! `u = 𝓛(𝒦_ξ ξ + 𝒦_ζ ζ + 𝒦_η η₁)`. This module also computes the ideal
//! steady state `η₁*(w, x)` from the error-zeroing equation and estimates the
//! internal-model mismatch `δ(t) = φ(η*(t)) − η₁*^{(d)}(t)` along simulated
//! trajectory tails.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gain_synthesis::GainSet;
use crate::linalg::{central_stencil, spectral_norm};
use crate::plant::Plant;
use crate::sim_engine::Trajectory;

/// A user-supplied chain-closing map.
pub type EtaMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// The chain-closing map φ. `Linear` holds the `n_e × (d·n_e)` coefficient
/// matrix of `φ(η) = Φ_row η`; `Custom` carries a compiled-in nonlinear map
/// with a declared Lipschitz constant.
#[derive(Clone)]
pub enum PhiMap {
    Zero,
    Linear(DMatrix<f64>),
    Custom {
        name: String,
        map: EtaMap,
        lipschitz: f64,
    },
}

impl PhiMap {
    pub fn eval(&self, eta: &DVector<f64>, n_e: usize) -> DVector<f64> {
        match self {
            PhiMap::Zero => DVector::zeros(n_e),
            PhiMap::Linear(row) => row * eta,
            PhiMap::Custom { map, .. } => map(eta),
        }
    }

    /// Declared (or induced) global Lipschitz constant.
    pub fn lipschitz(&self) -> f64 {
        match self {
            PhiMap::Zero => 0.0,
            PhiMap::Linear(row) => spectral_norm(row),
            PhiMap::Custom { lipschitz, .. } => *lipschitz,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            PhiMap::Zero => "zero".into(),
            PhiMap::Linear(row) => format!("linear({} coeffs)", row.ncols()),
            PhiMap::Custom { name, .. } => format!("builtin:{name}"),
        }
    }
}

/// Internal-model order, chain-closing map and gains.
#[derive(Clone)]
pub struct RegulatorConfig {
    pub d: usize,
    pub phi: PhiMap,
    pub lip_phi: f64,
    pub gains: GainSet,
}

impl RegulatorConfig {
    /// Validates `d >= 1`, consistency with the gain set, and `φ(0) = 0`.
    /// `d = 1` is the integral-action mode and is admitted with a warning,
    /// since the boundedness result assumes `d > 1`.
    pub fn new(d: usize, phi: PhiMap, gains: GainSet) -> Result<Self> {
        if d < 1 {
            return Err(Error::Validation {
                field: "d",
                reason: "internal-model order must be >= 1".into(),
            });
        }
        if d != gains.d {
            return Err(Error::Validation {
                field: "d",
                reason: format!(
                    "d = {d} does not match the injection gain (d = {})",
                    gains.d
                ),
            });
        }
        if d == 1 {
            log::warn!(
                "d = 1 selects integral-action mode, outside the d > 1 boundedness hypotheses"
            );
        }
        let at_zero = phi.eval(&DVector::zeros(d * gains.n_e), gains.n_e);
        if at_zero.norm() > 1e-12 {
            return Err(Error::Validation {
                field: "phi",
                reason: format!("phi(0) must vanish, got |phi(0)| = {:.3e}", at_zero.norm()),
            });
        }
        if let PhiMap::Linear(row) = &phi {
            if row.shape() != (gains.n_e, d * gains.n_e) {
                return Err(Error::Validation {
                    field: "phi",
                    reason: format!(
                        "linear phi must be {}x{}, got {}x{}",
                        gains.n_e,
                        d * gains.n_e,
                        row.nrows(),
                        row.ncols()
                    ),
                });
            }
        }
        let lip_phi = phi.lipschitz();
        Ok(Self {
            d,
            phi,
            lip_phi,
            gains,
        })
    }

    pub fn n_e(&self) -> usize {
        self.gains.n_e
    }

    pub fn dim_eta(&self) -> usize {
        self.d * self.gains.n_e
    }
}

/// Closed-loop state `(w, x, η)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopState {
    pub w: DVector<f64>,
    pub x: DVector<f64>,
    pub eta: DVector<f64>,
}

impl ClosedLoopState {
    pub fn flatten(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.w.len() + self.x.len() + self.eta.len());
        out.rows_mut(0, self.w.len()).copy_from(&self.w);
        out.rows_mut(self.w.len(), self.x.len()).copy_from(&self.x);
        out.rows_mut(self.w.len() + self.x.len(), self.eta.len())
            .copy_from(&self.eta);
        out
    }

    pub fn from_flat(flat: &DVector<f64>, n_w: usize, n_x: usize, n_eta: usize) -> Self {
        Self {
            w: flat.rows(0, n_w).into_owned(),
            x: flat.rows(n_w, n_x).into_owned(),
            eta: flat.rows(n_w + n_x, n_eta).into_owned(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().all(|v| v.is_finite())
            && self.x.iter().all(|v| v.is_finite())
            && self.eta.iter().all(|v| v.is_finite())
    }
}

/// `η̇_i = η_{i+1} + G_i e` for `i < d` and `η̇_d = φ(η) + G_d e`.
pub fn internal_model_rhs(
    eta: &DVector<f64>,
    e: &DVector<f64>,
    config: &RegulatorConfig,
) -> DVector<f64> {
    let n_e = config.n_e();
    let d = config.d;
    let mut out = DVector::zeros(d * n_e);
    for blk in 0..d - 1 {
        out.rows_mut(blk * n_e, n_e)
            .copy_from(&eta.rows((blk + 1) * n_e, n_e));
    }
    out.rows_mut((d - 1) * n_e, n_e)
        .copy_from(&config.phi.eval(eta, n_e));
    out += &config.gains.injection * e;
    out
}

/// `u = 𝓛(𝒦_ξ ξ + 𝒦_ζ ζ + 𝒦_η η₁)`.
pub fn control_law(
    xi: &DVector<f64>,
    zeta: &DVector<f64>,
    eta1: &DVector<f64>,
    gains: &GainSet,
) -> DVector<f64> {
    &gains.l * (&gains.k_xi * xi + &gains.k_zeta * zeta + &gains.k_eta * eta1)
}

/// The transformed coordinate `ζ̄ = ζ − Kξ − (𝒦_η/ℓ)η₁`, in which the
/// control law reads `u = −ℓ𝓛ζ̄`.
pub fn zeta_bar(
    xi: &DVector<f64>,
    zeta: &DVector<f64>,
    eta1: &DVector<f64>,
    gains: &GainSet,
) -> DVector<f64> {
    zeta - &gains.k * xi - (&gains.k_eta * eta1) / gains.ell
}

/// Concatenated closed-loop derivatives `(s(w), f + b·u, Φ(η) + G h_e)`.
/// A non-finite map output aborts with the offending state preserved by the
/// caller.
pub fn closed_loop_rhs(
    state: &ClosedLoopState,
    plant: &Plant,
    config: &RegulatorConfig,
) -> Result<ClosedLoopState> {
    let xi = (plant.xi_map)(&state.w, &state.x);
    let zeta = (plant.zeta_map)(&state.w, &state.x);
    let e = (plant.error_output)(&state.w, &state.x);
    let eta1 = state.eta.rows(0, config.n_e()).into_owned();
    let u = control_law(&xi, &zeta, &eta1, &config.gains);
    let dw = (plant.exo_field)(&state.w);
    let dx = (plant.drift)(&state.w, &state.x) + (plant.input_matrix)(&state.w, &state.x) * &u;
    let deta = internal_model_rhs(&state.eta, &e, config);
    let out = ClosedLoopState {
        w: dw,
        x: dx,
        eta: deta,
    };
    if !out.is_finite() {
        return Err(Error::NonFinite { t: f64::NAN });
    }
    Ok(out)
}

/// Solves the error-zeroing equation
/// `D^{e,e} 𝒦'_η η₁* = −q^e − D^{e,e}(𝒦_ξ^{e,a} ξ^a + 𝒦_ζ^{e,a} ζ^a)
///  − D^{e,a}(𝒦_ξ^{a,a} ξ^a + 𝒦_ζ^{a,a} ζ^a)` at the point `(w, x)`.
pub fn ideal_eta1_star(
    w: &DVector<f64>,
    x: &DVector<f64>,
    plant: &Plant,
    gains: &GainSet,
) -> Result<DVector<f64>> {
    let sig = &plant.sig;
    let n_e = sig.n_e();
    let n_a = sig.n_a();
    let dxe = sig.dim_xi_e();
    let dxa = sig.dim_xi() - dxe;

    let d_mat = (plant.hf_gain)(w, x) * &gains.l;
    let dee = d_mat.view((0, 0), (n_e, n_e)).into_owned();
    let dea = d_mat.view((0, n_e), (n_e, n_a)).into_owned();

    let xi = (plant.xi_map)(w, x);
    let xia = xi.rows(dxe, dxa).into_owned();
    let zeta = (plant.zeta_map)(w, x);
    let zeta_a = zeta.rows(n_e, n_a).into_owned();
    let q_e = (plant.zeta_drift)(w, x).rows(0, n_e).into_owned();

    let k_xi_ea = gains.k_xi.view((0, dxe), (n_e, dxa));
    let k_xi_aa = gains.k_xi.view((n_e, dxe), (n_a, dxa));
    let k_zeta_ea = gains.k_zeta.view((0, n_e), (n_e, n_a));
    let k_zeta_aa = gains.k_zeta.view((n_e, n_e), (n_a, n_a));

    let rhs = -q_e
        - &dee * (k_xi_ea * &xia + k_zeta_ea * &zeta_a)
        - &dea * (k_xi_aa * &xia + k_zeta_aa * &zeta_a);

    let lhs = &dee * gains.k_eta_prime();
    let smallest_sv = lhs
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    lhs.lu().solve(&rhs).ok_or(Error::Singular {
        what: "eta1_star",
        detail: format!("D^ee 𝒦'_η has smallest singular value {smallest_sv:.3e}"),
    })
}

/// Right-hand side of the error-chain rate `ζ̇^e` with every signal supplied
/// explicitly; substituting `ξ^e = 0`, `ζ^e = 0`, `η₁ = η₁*(w,x)` must give
/// zero.
#[allow(clippy::too_many_arguments)]
pub fn zeta_e_rate(
    plant: &Plant,
    gains: &GainSet,
    w: &DVector<f64>,
    x: &DVector<f64>,
    xi_e: &DVector<f64>,
    xi_a: &DVector<f64>,
    zeta_e: &DVector<f64>,
    zeta_a: &DVector<f64>,
    eta1: &DVector<f64>,
) -> DVector<f64> {
    let sig = &plant.sig;
    let n_e = sig.n_e();
    let n_a = sig.n_a();
    let dxe = sig.dim_xi_e();
    let dxa = sig.dim_xi() - dxe;

    let d_mat = (plant.hf_gain)(w, x) * &gains.l;
    let dee = d_mat.view((0, 0), (n_e, n_e));
    let dea = d_mat.view((0, n_e), (n_e, n_a));
    let q_e = (plant.zeta_drift)(w, x).rows(0, n_e).into_owned();

    let kx = &gains.k_xi;
    let kz = &gains.k_zeta;
    let inner_e = kx.view((0, 0), (n_e, dxe)) * xi_e
        + kx.view((0, dxe), (n_e, dxa)) * xi_a
        + kz.view((0, 0), (n_e, n_e)) * zeta_e
        + kz.view((0, n_e), (n_e, n_a)) * zeta_a
        + gains.k_eta_prime() * eta1;
    let inner_a = kx.view((n_e, 0), (n_a, dxe)) * xi_e
        + kx.view((n_e, dxe), (n_a, dxa)) * xi_a
        + kz.view((n_e, 0), (n_a, n_e)) * zeta_e
        + kz.view((n_e, n_e), (n_a, n_a)) * zeta_a;
    q_e + dee * inner_e + dea * inner_a
}

/// Mismatch series along a trajectory tail.
#[derive(Debug, Clone)]
pub struct MismatchReport {
    /// Interior tail times at which δ is defined.
    pub t: Vec<f64>,
    /// δ(t) samples.
    pub delta: Vec<DVector<f64>>,
    /// `max_t |δ(t)|` over the tail.
    pub delta_bar: f64,
    /// Round-off floor of the d-th-derivative stencil on this grid; a
    /// `delta_bar` at or below this level is indistinguishable from zero.
    pub noise_floor: f64,
    pub window: (f64, f64),
    pub grid_step: f64,
    pub stencil_width: usize,
}

impl MismatchReport {
    /// Whether the estimate is at the differencing noise floor.
    pub fn at_noise_floor(&self) -> bool {
        self.delta_bar <= self.noise_floor
    }
}

/// Evaluates `η₁*` along the final `tail_fraction` of the trajectory,
/// differentiates it up to order `d` with centered stencils, and returns
/// `δ(t) = φ(η*(t)) − η₁*^{(d)}(t)` together with `δ̄ = max |δ|`.
pub fn mismatch_along(
    traj: &Trajectory,
    plant: &Plant,
    config: &RegulatorConfig,
    tail_fraction: f64,
) -> Result<MismatchReport> {
    if !(0.0..1.0).contains(&tail_fraction) || tail_fraction == 0.0 {
        return Err(Error::Validation {
            field: "tail_fraction",
            reason: "must lie in (0, 1)".into(),
        });
    }
    if traj.meta.aborted.is_some() {
        return Err(Error::Validation {
            field: "trajectory",
            reason: "mismatch estimation needs a completed trajectory".into(),
        });
    }
    let n = traj.t.len();
    if n < 3 {
        return Err(Error::GridTooCoarse { needed: 3, got: n });
    }
    let h = traj.t[1] - traj.t[0];
    for k in 1..n - 1 {
        if ((traj.t[k + 1] - traj.t[k]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::Validation {
                field: "trajectory",
                reason: "mismatch estimation needs a uniform reporting grid".into(),
            });
        }
    }

    let d = config.d;
    let mut width = 9usize.max(d + 3);
    if width.is_multiple_of(2) {
        width += 1;
    }
    let t_end = traj.t[n - 1];
    let t_start = traj.t[0];
    let window_start = t_end - tail_fraction * (t_end - t_start);
    let first = traj
        .t
        .iter()
        .position(|t| *t >= window_start - 1e-12)
        .unwrap();
    let tail_len = n - first;
    if tail_len < width + 2 {
        return Err(Error::GridTooCoarse {
            needed: width + 2,
            got: tail_len,
        });
    }

    let n_e = config.n_e();
    let mut star = Vec::with_capacity(tail_len);
    for idx in first..n {
        let st = &traj.states[idx];
        star.push(ideal_eta1_star(&st.w, &st.x, plant, &config.gains)?);
    }

    // Derivative series, orders 1..=d, on the interior of the tail.
    let half = width / 2;
    let interior = tail_len - 2 * half;
    let mut derivs: Vec<Vec<DVector<f64>>> = Vec::with_capacity(d);
    let mut dmax_stencil_sum = 0.0;
    for order in 1..=d {
        let wts = central_stencil(order, width, h);
        if order == d {
            dmax_stencil_sum = wts.iter().map(|c| c.abs()).sum();
        }
        let series: Vec<DVector<f64>> = (0..interior)
            .map(|j| {
                let mut acc = DVector::zeros(n_e);
                for (k, c) in wts.iter().enumerate() {
                    acc += &star[j + k] * *c;
                }
                acc
            })
            .collect();
        derivs.push(series);
    }

    let max_star = star.iter().map(|v| v.amax()).fold(0.0f64, f64::max);
    let noise_floor = f64::EPSILON * dmax_stencil_sum * max_star;

    let mut t_out = Vec::with_capacity(interior);
    let mut delta = Vec::with_capacity(interior);
    let mut delta_bar = 0.0f64;
    for j in 0..interior {
        let mut stacked = DVector::zeros(d * n_e);
        stacked.rows_mut(0, n_e).copy_from(&star[j + half]);
        for order in 1..d {
            stacked
                .rows_mut(order * n_e, n_e)
                .copy_from(&derivs[order - 1][j]);
        }
        let dj = config.phi.eval(&stacked, n_e) - &derivs[d - 1][j];
        delta_bar = delta_bar.max(dj.norm());
        t_out.push(traj.t[first + half + j]);
        delta.push(dj);
    }

    Ok(MismatchReport {
        t: t_out,
        delta,
        delta_bar,
        noise_floor,
        window: (window_start, t_end),
        grid_step: h,
        stencil_width: width,
    })
}

/// Samples `pairs` random pairs in `bounds` and reports the largest observed
/// ratio `|φ(a) − φ(b)|/|a − b|`; `ok` allows a 1% excess over the declared
/// constant.
pub fn check_phi_lipschitz(
    phi: &PhiMap,
    n_e: usize,
    declared: f64,
    bounds: &[(f64, f64)],
    pairs: usize,
    seed: u64,
) -> (f64, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = bounds.len();
    let sample = |rng: &mut ChaCha8Rng| {
        DVector::from_fn(dim, |i, _| {
            let (lo, hi) = bounds[i];
            rng.random_range(lo..hi)
        })
    };
    let mut max_ratio = 0.0f64;
    for _ in 0..pairs {
        let a = sample(&mut rng);
        let b = sample(&mut rng);
        let gap = (&a - &b).norm();
        if gap < 1e-12 {
            continue;
        }
        let ratio = (phi.eval(&a, n_e) - phi.eval(&b, n_e)).norm() / gap;
        max_ratio = max_ratio.max(ratio);
    }
    (max_ratio, max_ratio <= declared * 1.01 + 1e-15)
}
