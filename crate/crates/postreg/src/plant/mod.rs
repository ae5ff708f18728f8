//! Plant/exosystem contract and the built-in plants.
//!
//! A [`Plant`] is a bundle of callable maps: the exosystem field `s(w)`, the
//! state dynamics `f(w,x) + b(w,x)u`, the outputs, and the partial-normal-form
//! coordinates `ξ(w,x)`, `ζ(w,x)` together with the ζ-dynamics data `q(w,x)`
//! and the high-frequency gain `B(w,x)`. The coordinates are supplied, not
//! derived; [`validate_plant`] checks the chain structure numerically.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal_form::{build_structure, Signature};

mod example;
mod linear;

pub use example::{
    certified_m, example_m_of_w, example_p_matrix, make_example_plant, ExamplePlantParams,
};
pub use linear::{
    harmonic_oracle_spec, integrator_oracle_spec, make_linear_oracle_plant, LinearPlantSpec,
};

/// Exosystem vector field `w ↦ s(w)`.
pub type ExoMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
/// State-dependent vector map `(w, x) ↦ v`.
pub type StateMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
/// State-dependent matrix map `(w, x) ↦ M`.
pub type StateMatMap = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
/// Membership predicate for the exosystem invariant set.
pub type SetPredicate = Arc<dyn Fn(&DVector<f64>) -> bool + Send + Sync>;

/// A multivariable nonlinear plant in partial normal form, together with its
/// exosystem. All maps must be reentrant; the struct is immutable and safe to
/// share across threads.
#[derive(Clone)]
pub struct Plant {
    pub sig: Signature,
    pub n_w: usize,
    pub n_x: usize,
    pub n_u: usize,
    /// Dimension of the measured auxiliary output `y_a`. This is the number
    /// of physically measured channels and may differ from the normal-form
    /// auxiliary dimension `sig.n_a()` (the measured channels are only used
    /// to *construct* ζ).
    pub n_ya: usize,
    /// Exosystem field `s(w)`.
    pub exo_field: ExoMap,
    /// Drift `f(w, x)`.
    pub drift: StateMap,
    /// Input matrix `b(w, x)` of shape `n_x × n_u`.
    pub input_matrix: StateMatMap,
    /// Regulation error `h_e(w, x)`.
    pub error_output: StateMap,
    /// Measured auxiliary output `h_a(w, x)` of dimension `n_ya`.
    pub aux_output: StateMap,
    /// Chain coordinates `ξ(w, x)`.
    pub xi_map: StateMap,
    /// Chain coordinates `ζ(w, x)`.
    pub zeta_map: StateMap,
    /// ζ-drift `q(w, x)`.
    pub zeta_drift: StateMap,
    /// High-frequency gain `B(w, x)` of shape `n_y × n_u`.
    pub hf_gain: StateMatMap,
    /// Bounding box of the exosystem invariant set `W`.
    pub w_box: Vec<(f64, f64)>,
    /// Membership predicate for `W`.
    pub w_contains: SetPredicate,
}

impl Plant {
    /// Checks the static dimension contract by probing every map at the
    /// origin: output sizes, `n_u >= n_y`, and box dimensions.
    pub fn check_dims(&self) -> Result<()> {
        let sig = &self.sig;
        if self.n_u < sig.n_y() {
            return Err(Error::Config(format!(
                "n_u = {} must be >= n_y = {}",
                self.n_u,
                sig.n_y()
            )));
        }
        if self.w_box.len() != self.n_w {
            return Err(Error::Config(format!(
                "w_box has {} axes, expected n_w = {}",
                self.w_box.len(),
                self.n_w
            )));
        }
        let w0 = DVector::zeros(self.n_w);
        let x0 = DVector::zeros(self.n_x);
        let probes: [(&str, usize); 6] = [
            ("s", (self.exo_field)(&w0).len()),
            ("f", (self.drift)(&w0, &x0).len()),
            ("h_e", (self.error_output)(&w0, &x0).len()),
            ("h_a", (self.aux_output)(&w0, &x0).len()),
            ("xi", (self.xi_map)(&w0, &x0).len()),
            ("zeta", (self.zeta_map)(&w0, &x0).len()),
        ];
        let expect: [usize; 6] = [
            self.n_w,
            self.n_x,
            sig.n_e(),
            self.n_ya,
            sig.dim_xi(),
            sig.n_y(),
        ];
        for ((name, got), want) in probes.iter().zip(expect.iter()) {
            if got != want {
                return Err(Error::Config(format!(
                    "map `{name}` returns dimension {got}, expected {want}"
                )));
            }
        }
        let b = (self.input_matrix)(&w0, &x0);
        if b.shape() != (self.n_x, self.n_u) {
            return Err(Error::Config(format!(
                "input matrix is {}x{}, expected {}x{}",
                b.nrows(),
                b.ncols(),
                self.n_x,
                self.n_u
            )));
        }
        let hf = (self.hf_gain)(&w0, &x0);
        if hf.shape() != (sig.n_y(), self.n_u) {
            return Err(Error::Config(format!(
                "high-frequency gain is {}x{}, expected {}x{}",
                hf.nrows(),
                hf.ncols(),
                sig.n_y(),
                self.n_u
            )));
        }
        if (self.zeta_drift)(&w0, &x0).len() != sig.n_y() {
            return Err(Error::Config("map `q` has wrong dimension".into()));
        }
        Ok(())
    }

    /// Splits ξ into its error and auxiliary parts per the block partition.
    pub fn split_xi(&self, xi: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ne = self.sig.dim_xi_e();
        (
            xi.rows(0, ne).into_owned(),
            xi.rows(ne, xi.len() - ne).into_owned(),
        )
    }

    /// Splits ζ into its error and auxiliary parts.
    pub fn split_zeta(&self, zeta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let ne = self.sig.n_e();
        (
            zeta.rows(0, ne).into_owned(),
            zeta.rows(ne, zeta.len() - ne).into_owned(),
        )
    }
}

/// Outcome of the numerical chain-structure check.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Max residual of the ξ-derivative along the drift `(s, f)` against
    /// `Fξ + Hζ`.
    pub max_drift_residual: f64,
    /// Max residual of the ξ-derivative along `b(w,x)·u` over the input basis
    /// (must vanish for a partial normal form).
    pub max_input_residual: f64,
    /// Norm of `q(0, 0)` (zero for the normalized system class).
    pub q_origin_norm: f64,
    /// Points at which some map returned a non-finite value.
    pub invalid_points: usize,
    pub samples_checked: usize,
}

impl ValidationReport {
    /// Both residuals below `tol` and no invalid points.
    pub fn passes(&self, tol: f64) -> bool {
        self.invalid_points == 0 && self.max_drift_residual <= tol && self.max_input_residual <= tol
    }
}

/// Central-difference check that `ξ̇ = Fξ + Hζ` along the drift and that the
/// ξ-derivative along `b·u` vanishes, at the given `(w, x)` sample points.
pub fn validate_plant(
    plant: &Plant,
    samples: &[(DVector<f64>, DVector<f64>)],
    fd_step: f64,
) -> Result<ValidationReport> {
    if fd_step <= 0.0 {
        return Err(Error::Validation {
            field: "fd_step",
            reason: "must be positive".into(),
        });
    }
    plant.check_dims()?;
    let sm = build_structure(&plant.sig, None)?;
    let mut max_drift = 0.0f64;
    let mut max_input = 0.0f64;
    let mut invalid = 0usize;

    for (w, x) in samples {
        let s = (plant.exo_field)(w);
        let f = (plant.drift)(w, x);
        let xi = (plant.xi_map)(w, x);
        let zeta = (plant.zeta_map)(w, x);
        if !all_finite(&s) || !all_finite(&f) || !all_finite(&xi) || !all_finite(&zeta) {
            invalid += 1;
            continue;
        }
        // d/dt ξ along the drift, central difference in the flow direction.
        let wp = w + &s * fd_step;
        let wm = w - &s * fd_step;
        let xp = x + &f * fd_step;
        let xm = x - &f * fd_step;
        let dxi = ((plant.xi_map)(&wp, &xp) - (plant.xi_map)(&wm, &xm)) / (2.0 * fd_step);
        if !all_finite(&dxi) {
            invalid += 1;
            continue;
        }
        let expected = &sm.f * &xi + &sm.h * &zeta;
        max_drift = max_drift.max((dxi - expected).norm());

        // The ξ-derivative along b·u is linear in u, so probing the input
        // basis vectors covers the whole input space.
        let b = (plant.input_matrix)(w, x);
        for j in 0..plant.n_u {
            let dir = b.column(j).into_owned();
            let xp = x + &dir * fd_step;
            let xm = x - &dir * fd_step;
            let d = ((plant.xi_map)(w, &xp) - (plant.xi_map)(w, &xm)) / (2.0 * fd_step);
            if !all_finite(&d) {
                invalid += 1;
                break;
            }
            max_input = max_input.max(d.norm());
        }
    }

    let q0 = (plant.zeta_drift)(&DVector::zeros(plant.n_w), &DVector::zeros(plant.n_x));
    Ok(ValidationReport {
        max_drift_residual: max_drift,
        max_input_residual: max_input,
        q_origin_norm: q0.norm(),
        invalid_points: invalid,
        samples_checked: samples.len(),
    })
}

pub(crate) fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_samples(plant: &Plant, n: usize, seed: u64) -> Vec<(DVector<f64>, DVector<f64>)> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let w = DVector::from_fn(plant.n_w, |i, _| {
                    let (lo, hi) = plant.w_box[i];
                    rng.random_range(lo..hi)
                });
                let x = DVector::from_fn(plant.n_x, |_, _| rng.random_range(-2.0..2.0));
                (w, x)
            })
            .collect()
    }

    #[test]
    fn example_plant_validates() {
        let plant = make_example_plant(ExamplePlantParams::default()).unwrap();
        let samples = random_samples(&plant, 100, 7);
        let report = validate_plant(&plant, &samples, 1e-5).unwrap();
        // ξ is empty here, so both residuals are identically zero.
        assert!(report.max_drift_residual < 1e-6);
        assert!(report.max_input_residual < 1e-6);
        assert_eq!(report.invalid_points, 0);
    }

    #[test]
    fn linear_oracle_validates() {
        let plant = make_linear_oracle_plant(harmonic_oracle_spec(1.0)).unwrap();
        let samples = random_samples(&plant, 100, 13);
        let report = validate_plant(&plant, &samples, 1e-5).unwrap();
        assert!(report.max_drift_residual < 1e-6);
        assert!(report.max_input_residual < 1e-6);
    }

    #[test]
    fn corrupted_zeta_is_flagged() {
        let mut plant = make_linear_oracle_plant(harmonic_oracle_spec(1.0)).unwrap();
        let inner = plant.zeta_map.clone();
        plant.zeta_map = Arc::new(move |w, x| {
            let mut z = inner(w, x);
            z[0] += 0.3 * x[0] * x[0]; // deliberate corruption
            z
        });
        let samples = random_samples(&plant, 100, 17);
        let report = validate_plant(&plant, &samples, 1e-5).unwrap();
        assert!(report.max_drift_residual > 1e-2);
    }
}
