//! The worked three-state example plant.
//!
//! Exosystem: harmonic rotation on the disk of radius 3. Plant:
//!
//! ```text
//! ẋ₁ = x₃
//! ẋ₂ = q·exp(2w₁²) + u₁ + u₂
//! ẋ₃ = w₁² − w₁u₁ + (1 − w₁)u₂
//! ```
//!
//! with regulation error `e = x₂` and measured auxiliary output
//! `y_a = (x₁, x₃)`. The normal-form coordinates are `ζ₁ = x₂` and
//! `ζ₂ = x₃ + x₁ + κ(x₁)` (two relative-degree-one chains, no ξ), so the
//! high-frequency gain is the 2×2 matrix `B(w) = [[1, 1], [−w₁, 1−w₁]]` with
//! `det B ≡ 1`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::min_eig_sym;
use crate::normal_form::Signature;

use super::{Plant, SetPredicate};

type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Tunable data of the example plant. `q` scales the exponential
/// nonlinearity (`q = 0` gives asymptotic regulation, `q > 0` practical),
/// `alpha` and `m` fix the stabilizer scaling `𝓛 = diag(α², α)/m`, and
/// `kappa` is the damping function of the ζ₂ coordinate (zero in the
/// reference simulations).
#[derive(Clone)]
pub struct ExamplePlantParams {
    pub q: f64,
    pub alpha: f64,
    pub m: f64,
    pub kappa: ScalarMap,
    pub kappa_deriv: ScalarMap,
}

impl Default for ExamplePlantParams {
    fn default() -> Self {
        Self {
            q: 0.0,
            alpha: 5.0,
            m: 1.0,
            kappa: Arc::new(|_| 0.0),
            kappa_deriv: Arc::new(|_| 0.0),
        }
    }
}

impl ExamplePlantParams {
    /// Same defaults with a given `q`.
    pub fn with_q(q: f64) -> Self {
        Self {
            q,
            ..Self::default()
        }
    }

    /// The stabilizer scaling `𝓛 = diag(α², α)/m`.
    pub fn l_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.alpha * self.alpha / self.m,
            self.alpha / self.m,
        ]))
    }

    fn validate(&self) -> Result<()> {
        if self.q < 0.0 {
            return Err(Error::Config(format!("q must be >= 0, got {}", self.q)));
        }
        if self.m <= 0.0 {
            return Err(Error::Config(format!("m must be > 0, got {}", self.m)));
        }
        // 4α > 1 + sup_{w∈W} (1 + b(w))² with b = w₁ ranging over [-3, 3].
        let sup = (0..=600)
            .map(|i| {
                let w1 = -3.0 + i as f64 * 0.01;
                (1.0 + w1) * (1.0 + w1)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        if 4.0 * self.alpha <= 1.0 + sup {
            return Err(Error::Config(format!(
                "alpha = {} violates 4α > 1 + sup(1+b)² = {}",
                self.alpha,
                1.0 + sup
            )));
        }
        // κ admissibility: s(f₁(s) − κ(s)) <= 0 with f₁ = 0, sampled on
        // 10⁴ points over [-10, 10].
        for i in 0..10_000 {
            let s = -10.0 + 20.0 * (i as f64 + 0.5) / 10_000.0;
            if s * (-(self.kappa)(s)) > 0.0 {
                return Err(Error::Config(format!(
                    "kappa violates s(f₁(s) − κ(s)) <= 0 at s = {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the example plant. The signature has two relative-degree-one
/// blocks (`p = [1,1]`, `N = [1,1]`, `r_e = 1`), so ξ is empty, `n_e = 1`,
/// and the measured auxiliary output has dimension 2.
pub fn make_example_plant(params: ExamplePlantParams) -> Result<Plant> {
    params.validate()?;
    let sig = Signature::new(vec![1, 1], vec![1, 1], 1)?;
    let q_scale = params.q;
    let kappa = params.kappa.clone();
    let kappa_d = params.kappa_deriv.clone();

    let w_contains: SetPredicate = Arc::new(|w: &DVector<f64>| w.norm() <= 3.0 + 1e-12);

    Ok(Plant {
        sig,
        n_w: 2,
        n_x: 3,
        n_u: 2,
        n_ya: 2,
        exo_field: Arc::new(|w| DVector::from_vec(vec![w[1], -w[0]])),
        drift: Arc::new(move |w, x| {
            let gamma2 = q_scale * (2.0 * w[0] * w[0]).exp();
            DVector::from_vec(vec![x[2], gamma2, w[0] * w[0]])
        }),
        input_matrix: Arc::new(|w, _x| {
            DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 1.0, -w[0], 1.0 - w[0]])
        }),
        error_output: Arc::new(|_w, x| DVector::from_vec(vec![x[1]])),
        aux_output: Arc::new(|_w, x| DVector::from_vec(vec![x[0], x[2]])),
        xi_map: Arc::new(|_w, _x| DVector::zeros(0)),
        zeta_map: Arc::new(move |_w, x| DVector::from_vec(vec![x[1], x[2] + x[0] + kappa(x[0])])),
        zeta_drift: Arc::new(move |w, x| {
            let gamma2 = q_scale * (2.0 * w[0] * w[0]).exp();
            let gamma3 = w[0] * w[0];
            DVector::from_vec(vec![gamma2, gamma3 + (1.0 + kappa_d(x[0])) * (x[2])])
        }),
        hf_gain: Arc::new(|w, _x| DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -w[0], 1.0 - w[0]])),
        w_box: vec![(-3.0, 3.0), (-3.0, 3.0)],
        w_contains,
    })
}

/// The candidate certificate matrix `𝒫(w) = [[1+b², b], [b, 1]]` with
/// `b = w₁`.
pub fn example_p_matrix(w: &DVector<f64>) -> DMatrix<f64> {
    let b = w[0];
    DMatrix::from_row_slice(2, 2, &[1.0 + b * b, b, b, 1.0])
}

/// The closed form `M(w) = 𝓛₀ᵀBᵀ𝒫 + 𝒫B𝓛₀ = [[2α², α(1+b)], [α(1+b), 2α]]`.
pub fn example_m_of_w(alpha: f64, w1: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        2,
        2,
        &[
            2.0 * alpha * alpha,
            alpha * (1.0 + w1),
            alpha * (1.0 + w1),
            2.0 * alpha,
        ],
    )
}

/// Grid-certified lower bound `m` with `min eig M(w) >= m` over the
/// `[-3,3]²` exosystem box (`grid_per_axis` points per axis).
pub fn certified_m(alpha: f64, grid_per_axis: usize) -> f64 {
    let mut m = f64::INFINITY;
    for i in 0..grid_per_axis {
        let w1 = -3.0 + 6.0 * i as f64 / (grid_per_axis - 1) as f64;
        m = m.min(min_eig_sym(&example_m_of_w(alpha, w1)));
    }
    m
}
