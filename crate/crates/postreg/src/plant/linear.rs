//! Linear benchmark plants with harmonic exosystems.
//!
//! These plants live directly in chain coordinates, `x = (ξ, ζ)`, with
//!
//! ```text
//! ξ̇ = Fξ + Hζ
//! ζ̇ = P_x x + P_w w + B₀ u
//! ```
//!
//! so the closed loop under the synthesized regulator is linear and can be
//! compared exactly with the classical linear-regulator solution.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::normal_form::{build_structure, Signature};

use super::Plant;

/// Data of a linear benchmark plant.
#[derive(Debug, Clone)]
pub struct LinearPlantSpec {
    pub sig: Signature,
    /// Exosystem frequencies: `0` contributes one constant state, `ω > 0` a
    /// 2-dimensional rotation block.
    pub exo_freqs: Vec<f64>,
    /// Disturbance injection into ζ̇, shape `n_y × n_w`.
    pub p_w: DMatrix<f64>,
    /// State feedback into ζ̇, shape `n_y × n_x` with `n_x = N`.
    pub p_x: DMatrix<f64>,
    /// Constant high-frequency gain, shape `n_y × n_u`.
    pub b0: DMatrix<f64>,
    /// Bounding box of the exosystem invariant set.
    pub w_box: Vec<(f64, f64)>,
}

impl LinearPlantSpec {
    pub fn n_w(&self) -> usize {
        self.exo_freqs
            .iter()
            .map(|f| if *f == 0.0 { 1 } else { 2 })
            .sum()
    }

    /// Block-diagonal exosystem matrix.
    pub fn exo_matrix(&self) -> DMatrix<f64> {
        let n = self.n_w();
        let mut s = DMatrix::zeros(n, n);
        let mut at = 0;
        for f in &self.exo_freqs {
            if *f == 0.0 {
                at += 1;
            } else {
                s[(at, at + 1)] = *f;
                s[(at + 1, at)] = -*f;
                at += 2;
            }
        }
        s
    }

    /// Open-loop state matrix `[[F, H], [P_x]]` over `x = (ξ, ζ)`.
    pub fn state_matrix(&self) -> Result<DMatrix<f64>> {
        let sm = build_structure(&self.sig, None)?;
        let dxi = self.sig.dim_xi();
        let ny = self.sig.n_y();
        let n = dxi + ny;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (dxi, dxi)).copy_from(&sm.f);
        a.view_mut((0, dxi), (dxi, ny)).copy_from(&sm.h);
        a.view_mut((dxi, 0), (ny, n)).copy_from(&self.p_x);
        Ok(a)
    }

    /// Input matrix `[0; B₀]` over `x = (ξ, ζ)`.
    pub fn input_matrix(&self) -> DMatrix<f64> {
        let dxi = self.sig.dim_xi();
        let ny = self.sig.n_y();
        let nu = self.b0.ncols();
        let mut b = DMatrix::zeros(dxi + ny, nu);
        b.view_mut((dxi, 0), (ny, nu)).copy_from(&self.b0);
        b
    }
}

/// Single chain `p = [1]`, `N = [2]` driven through ζ̇ by one harmonic
/// disturbance of frequency `omega`.
pub fn harmonic_oracle_spec(omega: f64) -> LinearPlantSpec {
    let sig = Signature::new(vec![1], vec![2], 1).unwrap();
    LinearPlantSpec {
        sig,
        exo_freqs: vec![omega],
        p_w: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        p_x: DMatrix::zeros(1, 2),
        b0: DMatrix::from_row_slice(1, 1, &[1.0]),
        w_box: vec![(-1.5, 1.5), (-1.5, 1.5)],
    }
}

/// Integral-action benchmark: a single relative-degree-one output with a
/// constant disturbance (`ẇ = 0`).
pub fn integrator_oracle_spec() -> LinearPlantSpec {
    let sig = Signature::new(vec![1], vec![1], 1).unwrap();
    LinearPlantSpec {
        sig,
        exo_freqs: vec![0.0],
        p_w: DMatrix::from_row_slice(1, 1, &[1.0]),
        p_x: DMatrix::zeros(1, 1),
        b0: DMatrix::from_row_slice(1, 1, &[1.0]),
        w_box: vec![(-2.0, 2.0)],
    }
}

/// Builds a [`Plant`] from linear data, checking shapes and stabilizability
/// (PBH test on the eigenvalues of the open-loop state matrix).
pub fn make_linear_oracle_plant(spec: LinearPlantSpec) -> Result<Plant> {
    let n_w = spec.n_w();
    let n_x = spec.sig.n_total();
    let n_y = spec.sig.n_y();
    let n_u = spec.b0.ncols();
    if spec.p_w.shape() != (n_y, n_w) {
        return Err(Error::Config(format!(
            "p_w must be {}x{}, got {}x{}",
            n_y,
            n_w,
            spec.p_w.nrows(),
            spec.p_w.ncols()
        )));
    }
    if spec.p_x.shape() != (n_y, n_x) {
        return Err(Error::Config(format!(
            "p_x must be {}x{}, got {}x{}",
            n_y,
            n_x,
            spec.p_x.nrows(),
            spec.p_x.ncols()
        )));
    }
    if spec.b0.nrows() != n_y || n_u < n_y {
        return Err(Error::Config(format!(
            "b0 must be {n_y}xn_u with n_u >= {n_y}, got {}x{}",
            spec.b0.nrows(),
            spec.b0.ncols()
        )));
    }
    if spec.w_box.len() != n_w {
        return Err(Error::Config(format!(
            "w_box must have {n_w} axes, got {}",
            spec.w_box.len()
        )));
    }

    let a = spec.state_matrix()?;
    let b = spec.input_matrix();
    if !is_stabilizable(&a, &b) {
        return Err(Error::Config(
            "linear plant data is not stabilizable (PBH test failed)".into(),
        ));
    }

    let sig = spec.sig.clone();
    let dxi = sig.dim_xi();
    let s_mat = spec.exo_matrix();
    let a_for_drift = a.clone();
    let p_w_drift = {
        // w enters only the ζ rows
        let mut p = DMatrix::zeros(n_x, n_w);
        p.view_mut((dxi, 0), (n_y, n_w)).copy_from(&spec.p_w);
        p
    };
    let b_full = b.clone();
    let hf = spec.b0.clone();
    let p_w = spec.p_w.clone();
    let p_x = spec.p_x.clone();

    // Output of chain i: ξ^i_1 for N_i >= 2, ζ^i for the degenerate chains.
    let output_rows = |range: std::ops::Range<usize>, sig: &Signature| {
        let mut rows: Vec<usize> = Vec::new();
        for i in range {
            let base = if sig.chain_lengths()[i] >= 2 {
                sig.xi_offset(i)
            } else {
                sig.dim_xi() + sig.y_offset(i)
            };
            rows.extend(base..base + sig.p()[i]);
        }
        rows
    };
    let e_rows = output_rows(0..sig.r_e(), &sig);
    let a_rows = output_rows(sig.r_e()..sig.r(), &sig);
    let n_ya = a_rows.len();

    Ok(Plant {
        sig: sig.clone(),
        n_w,
        n_x,
        n_u,
        n_ya,
        exo_field: Arc::new(move |w| &s_mat * w),
        drift: Arc::new(move |w, x| &a_for_drift * x + &p_w_drift * w),
        input_matrix: Arc::new(move |_w, _x| b_full.clone()),
        error_output: Arc::new(move |_w, x| {
            DVector::from_iterator(e_rows.len(), e_rows.iter().map(|r| x[*r]))
        }),
        aux_output: Arc::new(move |_w, x| {
            DVector::from_iterator(a_rows.len(), a_rows.iter().map(|r| x[*r]))
        }),
        xi_map: Arc::new(move |_w, x| x.rows(0, dxi).into_owned()),
        zeta_map: Arc::new(move |_w, x| x.rows(dxi, n_y).into_owned()),
        zeta_drift: Arc::new(move |w, x| &p_x * x + &p_w * w),
        hf_gain: Arc::new(move |_w, _x| hf.clone()),
        w_box: spec.w_box.clone(),
        w_contains: Arc::new(|_w| true),
    })
}

/// PBH stabilizability: for every eigenvalue `λ = a + bi` of `A` with
/// `Re λ >= 0`, `rank [A − λI  B] = n`, evaluated through the real embedding
/// of the complex pencil.
fn is_stabilizable(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    if n == 0 {
        return true;
    }
    let eigs = a.clone().complex_eigenvalues();
    for lam in eigs.iter() {
        if lam.re < -1e-9 {
            continue;
        }
        let m = b.ncols();
        // [[A - aI, bI, B, 0], [-bI, A - aI, 0, B]] has rank 2n iff
        // [A - λI, B] has full row rank over the complex field.
        let mut big = DMatrix::zeros(2 * n, 2 * (n + m));
        let shifted = a - DMatrix::identity(n, n) * lam.re;
        big.view_mut((0, 0), (n, n)).copy_from(&shifted);
        big.view_mut((n, n), (n, n)).copy_from(&shifted);
        big.view_mut((0, n), (n, n))
            .copy_from(&(DMatrix::identity(n, n) * lam.im));
        big.view_mut((n, 0), (n, n))
            .copy_from(&(DMatrix::identity(n, n) * (-lam.im)));
        big.view_mut((0, 2 * n), (n, m)).copy_from(b);
        big.view_mut((n, 2 * n + m), (n, m)).copy_from(b);
        let rank = big.svd(false, false).rank(1e-9);
        if rank < 2 * n {
            return false;
        }
    }
    true
}
