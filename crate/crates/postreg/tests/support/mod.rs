//! Independent oracles for the integration suites.
//!
//! Everything here re-derives closed-loop quantities from first principles
//! of linear systems theory (Sylvester/regulator equations, matrix-power
//! derivative propagation) so the main library path can be checked against
//! an algebraically separate route.

use nalgebra::{DMatrix, DVector};
use postreg::gain_synthesis::GainSet;
use postreg::normal_form::{build_internal_model_matrices, Signature};
use postreg::plant::LinearPlantSpec;

/// Solves the Sylvester equation `Π S = A Π + B` for `Π` via the Kronecker
/// vectorization `(Sᵀ ⊗ I − I ⊗ A) vec(Π) = vec(B)`.
pub fn sylvester_solve(a: &DMatrix<f64>, s: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = s.nrows();
    assert_eq!(b.shape(), (n, m));
    let lhs =
        s.transpose().kronecker(&DMatrix::identity(n, n)) - DMatrix::identity(m, m).kronecker(a);
    let rhs = DVector::from_column_slice(b.as_slice());
    let sol = lhs.lu().solve(&rhs).expect("sylvester system is singular");
    DMatrix::from_column_slice(n, m, sol.as_slice())
}

/// Rows of the error output `e` inside the chain state `x = (ξ, ζ)`:
/// `ξ^i_1` for chains with `N_i >= 2`, `ζ^i` for degenerate chains.
pub fn error_selector(sig: &Signature) -> DMatrix<f64> {
    let n_x = sig.n_total();
    let mut rows = Vec::new();
    for i in 0..sig.r_e() {
        let base = if sig.chain_lengths()[i] >= 2 {
            sig.xi_offset(i)
        } else {
            sig.dim_xi() + sig.y_offset(i)
        };
        rows.extend(base..base + sig.p()[i]);
    }
    let mut sel = DMatrix::zeros(rows.len(), n_x);
    for (r, c) in rows.iter().enumerate() {
        sel[(r, *c)] = 1.0;
    }
    sel
}

/// Closed-loop matrices of a linear plant under the synthesized regulator,
/// assembled independently of the library's right-hand side:
/// state `z = (x, η)`, input `w`, so `ż = A_cl z + B_cl w`.
pub struct LinearClosedLoop {
    pub a_cl: DMatrix<f64>,
    pub b_cl: DMatrix<f64>,
    pub exo: DMatrix<f64>,
    pub e_sel: DMatrix<f64>,
    pub n_x: usize,
    pub n_eta: usize,
}

impl LinearClosedLoop {
    pub fn assemble(spec: &LinearPlantSpec, gains: &GainSet, phi_row: &DMatrix<f64>) -> Self {
        let sig = &spec.sig;
        let n_x = sig.n_total();
        let n_e = sig.n_e();
        let d = gains.d;
        let n_eta = d * n_e;

        let a_p = spec.state_matrix().unwrap();
        let b_p = spec.input_matrix();
        let exo = spec.exo_matrix();
        let n_w = exo.nrows();
        let e_sel = error_selector(sig);

        // u = 𝓛([𝒦_ξ 𝒦_ζ] x + 𝒦_η Γ η)
        let mut kxz = DMatrix::zeros(sig.n_y(), n_x);
        kxz.view_mut((0, 0), (sig.n_y(), sig.dim_xi()))
            .copy_from(&gains.k_xi);
        kxz.view_mut((0, sig.dim_xi()), (sig.n_y(), sig.n_y()))
            .copy_from(&gains.k_zeta);
        let im = build_internal_model_matrices(d, n_e, &gains.h).unwrap();
        let phi_mat = &im.a + &im.e * phi_row;

        let mut a_cl = DMatrix::zeros(n_x + n_eta, n_x + n_eta);
        a_cl.view_mut((0, 0), (n_x, n_x))
            .copy_from(&(&a_p + &b_p * &gains.l * &kxz));
        a_cl.view_mut((0, n_x), (n_x, n_eta))
            .copy_from(&(&b_p * &gains.l * &gains.k_eta * &im.gamma));
        a_cl.view_mut((n_x, 0), (n_eta, n_x))
            .copy_from(&(&gains.injection * &e_sel));
        a_cl.view_mut((n_x, n_x), (n_eta, n_eta))
            .copy_from(&phi_mat);

        let mut b_cl = DMatrix::zeros(n_x + n_eta, n_w);
        b_cl.view_mut((sig.dim_xi(), 0), (sig.n_y(), n_w))
            .copy_from(&spec.p_w);

        Self {
            a_cl,
            b_cl,
            exo,
            e_sel,
            n_x,
            n_eta,
        }
    }

    /// Steady-state map `Π` with `z = Π w` on the attractor: solves
    /// `Π S = A_cl Π + B_cl`.
    pub fn regulator_equation(&self) -> DMatrix<f64> {
        sylvester_solve(&self.a_cl, &self.exo, &self.b_cl)
    }

    /// Full autonomous matrix over `(w, x, η)` for exact derivative
    /// propagation along closed-loop trajectories.
    pub fn full_autonomous(&self) -> DMatrix<f64> {
        let n_w = self.exo.nrows();
        let n_z = self.a_cl.nrows();
        let mut full = DMatrix::zeros(n_w + n_z, n_w + n_z);
        full.view_mut((0, 0), (n_w, n_w)).copy_from(&self.exo);
        full.view_mut((n_w, 0), (n_z, n_w)).copy_from(&self.b_cl);
        full.view_mut((n_w, n_w), (n_z, n_z)).copy_from(&self.a_cl);
        full
    }

    pub fn is_hurwitz(&self) -> bool {
        postreg::linalg::is_hurwitz_matrix(&self.a_cl)
    }
}
