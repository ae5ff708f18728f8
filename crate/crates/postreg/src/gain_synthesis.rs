//! Regulator gain construction.
//!
//! Four routes produce the stabilizer matrix `𝓛` from controllability data
//! (leading-minor / EMU factorization, positivity, negativity, and the
//! Back-style quadratic condition); the cascade gain `K` comes from the
//! block scaling construction, and the internal-model injection `G` stacks
//! `g^i h_i I` blocks. [`assemble_gains`] bundles everything into a
//! [`GainSet`] with the shapes the control law expects.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, is_hurwitz_poly, matrix_to_rows, min_eig_sym};
use crate::normal_form::{build_structure, Signature};

/// `B = E·M·(I+U)` with `E` diagonal ±1, `M` symmetric positive definite and
/// `U` strictly upper triangular.
#[derive(Debug, Clone)]
pub struct EmuFactorization {
    pub e: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl EmuFactorization {
    /// Reassembles `E·M·(I+U)`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.u.nrows();
        &self.e * &self.m * (DMatrix::identity(n, n) + &self.u)
    }

    /// The companion certificate `𝒫 = E M⁻¹ E`.
    pub fn p_matrix(&self) -> Result<DMatrix<f64>> {
        let m_inv = self.m.clone().try_inverse().ok_or(Error::Singular {
            what: "M",
            detail: "factor M is numerically singular".into(),
        })?;
        Ok(&self.e * m_inv * &self.e)
    }
}

/// Pivot-free LDU split `B = L₀ D U₀` with unit-triangular factors; defined
/// exactly when all leading principal minors are nonzero.
fn ldu_no_pivot(b: &DMatrix<f64>) -> Result<(DMatrix<f64>, DVector<f64>, DMatrix<f64>)> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::Validation {
            field: "B",
            reason: format!("must be square, got {}x{}", b.nrows(), b.ncols()),
        });
    }
    let mut a = b.clone();
    let mut l0 = DMatrix::identity(n, n);
    let mut d = DVector::zeros(n);
    for k in 0..n {
        let pivot = a[(k, k)];
        if pivot == 0.0 {
            return Err(Error::SingularMinor {
                index: k + 1,
                value: 0.0,
            });
        }
        d[k] = pivot;
        for i in (k + 1)..n {
            let factor = a[(i, k)] / pivot;
            l0[(i, k)] = factor;
            for j in k..n {
                a[(i, j)] -= factor * a[(k, j)];
            }
        }
    }
    let mut u0 = DMatrix::identity(n, n);
    for k in 0..n {
        for j in (k + 1)..n {
            u0[(k, j)] = a[(k, j)] / d[k];
        }
    }
    Ok((l0, d, u0))
}

/// Leading principal minors `Δ_1, …, Δ_n` of a square matrix.
pub fn leading_minors(b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::Validation {
            field: "B",
            reason: format!("must be square, got {}x{}", b.nrows(), b.ncols()),
        });
    }
    Ok((1..=n)
        .map(|i| b.view((0, 0), (i, i)).determinant())
        .collect())
}

/// Factorizes `B = E·M·(I+U)`: LDU-split `B = L₀DU₀`, set `E = sign(D)`,
/// `L₁ = E L₀ E`, `M = L₁|D|L₁ᵀ` and `I+U = L₁⁻ᵀU₀`.
pub fn emu_factorize(b: &DMatrix<f64>) -> Result<EmuFactorization> {
    let (l0, d, u0) = ldu_no_pivot(b)?;
    let n = d.len();
    let e = DMatrix::from_diagonal(&d.map(f64::signum));
    let abs_d = DMatrix::from_diagonal(&d.map(f64::abs));
    let l1 = &e * &l0 * &e;
    let m = &l1 * abs_d * l1.transpose();
    // L₁ᵀ X = U₀ has the unit-upper solution X = L₁⁻ᵀ U₀.
    let iu = l1
        .transpose()
        .solve_upper_triangular(&u0)
        .ok_or(Error::Singular {
            what: "L1",
            detail: "unit-triangular solve failed".into(),
        })?;
    let u = iu - DMatrix::identity(n, n);
    Ok(EmuFactorization { e, m, u })
}

/// Builds `𝓛 = E·C` with `C = diag(c^{n-1}, …, c, 1)` from samples of the
/// high-frequency gain, doubling `c` from 2 until
/// `(I+U)C + C(I+U)ᵀ ⪰ I` holds at every sample. Requires all leading
/// minors to stay at least `epsilon` in magnitude and the sign matrix `E`
/// to be the same across samples. Returns `(𝓛, c)`.
pub fn build_l_minors(samples: &[DMatrix<f64>], epsilon: f64) -> Result<(DMatrix<f64>, f64)> {
    if samples.is_empty() {
        return Err(Error::Validation {
            field: "samples",
            reason: "at least one sample is required".into(),
        });
    }
    let n = samples[0].nrows();
    let mut factorizations = Vec::with_capacity(samples.len());
    let mut e_ref: Option<DVector<f64>> = None;
    for (s_idx, b) in samples.iter().enumerate() {
        let minors = leading_minors(b)?;
        for (i, m) in minors.iter().enumerate() {
            if m.abs() < epsilon {
                return Err(Error::Condition {
                    name: "leading-minors",
                    detail: format!(
                        "|Δ_{}| = {:.3e} < ε = {:.3e} at sample {s_idx}",
                        i + 1,
                        m.abs(),
                        epsilon
                    ),
                });
            }
        }
        let fac = emu_factorize(b)?;
        let signs = fac.e.diagonal();
        match &e_ref {
            None => e_ref = Some(signs),
            Some(prev) => {
                if (prev - &signs).amax() > 0.0 {
                    return Err(Error::Condition {
                        name: "sign-pattern",
                        detail: format!("sign pattern not uniform at sample {s_idx}"),
                    });
                }
            }
        }
        factorizations.push(fac);
    }

    let mut c = 2.0f64;
    let c_cap = 65536.0;
    loop {
        let scale = DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| c.powi((n - 1 - i) as i32)));
        let ok = factorizations.iter().all(|fac| {
            let iu = DMatrix::identity(n, n) + &fac.u;
            min_eig_sym(&(&iu * &scale + &scale * iu.transpose())) >= 1.0 - 1e-10
        });
        if ok {
            let e = DMatrix::from_diagonal(&e_ref.unwrap());
            return Ok((e * scale, c));
        }
        c *= 2.0;
        if c > c_cap {
            return Err(Error::Condition {
                name: "minors-c-search",
                detail: format!("no admissible c found up to {c_cap}"),
            });
        }
    }
}

/// Positivity route: the caller asserts `B K + KᵀBᵀ ⪰ I` on the working
/// set, and `𝓛 = K` (with companion certificate `𝒫 = I`).
pub fn build_l_positivity(k_pos: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k_pos.nrows() != k_pos.ncols() {
        return Err(Error::Validation {
            field: "K",
            reason: "positivity route needs a square K".into(),
        });
    }
    // Positivity forces invertibility; a singular K means the asserted
    // condition cannot hold.
    if k_pos.clone().lu().determinant().abs() < 1e-12 {
        return Err(Error::Condition {
            name: "positivity",
            detail: "K is singular, so BK + KᵀBᵀ ⪰ I cannot hold".into(),
        });
    }
    Ok(k_pos.clone())
}

/// Negativity route: `B M + MᵀBᵀ ≺ −κ I` implies positivity with
/// `𝓛 = −M/κ`.
pub fn build_l_negativity(m_neg: &DMatrix<f64>, kappa: f64) -> Result<DMatrix<f64>> {
    if kappa <= 0.0 {
        return Err(Error::Validation {
            field: "kappa",
            reason: format!("must be positive, got {kappa}"),
        });
    }
    Ok(-(m_neg / kappa))
}

/// Back-style route: with `Π = 2(G⁺+G⁻)⁻¹`, the quadratic condition implies
/// negativity for `M = −KΠ⁻¹` with constant `κ' = κ·min eig(Π²)`; chaining
/// through [`build_l_negativity`] gives `𝓛 = KΠ⁻¹/κ'`. Returns `(𝓛, κ')`.
pub fn build_l_back(
    k_back: &DMatrix<f64>,
    g_minus: &DMatrix<f64>,
    g_plus: &DMatrix<f64>,
    kappa: f64,
) -> Result<(DMatrix<f64>, f64)> {
    validate_g_pair(g_minus, g_plus)?;
    if kappa <= 0.0 {
        return Err(Error::Validation {
            field: "kappa",
            reason: format!("must be positive, got {kappa}"),
        });
    }
    let pi = back_pi(g_minus, g_plus);
    let pi_inv = pi.clone().try_inverse().expect("Π is positive diagonal");
    let kappa_eff = kappa
        * pi.diagonal()
            .iter()
            .map(|v| v * v)
            .fold(f64::INFINITY, f64::min);
    let m_neg = -(k_back * &pi_inv);
    Ok((build_l_negativity(&m_neg, kappa_eff)?, kappa_eff))
}

/// `Π = 2(G⁺+G⁻)⁻¹` for diagonal `0 ≺ G⁻ ≺ G⁺`.
pub fn back_pi(g_minus: &DMatrix<f64>, g_plus: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_fn(g_minus.nrows(), |i, _| {
        2.0 / (g_plus[(i, i)] + g_minus[(i, i)])
    }))
}

pub(crate) fn validate_g_pair(g_minus: &DMatrix<f64>, g_plus: &DMatrix<f64>) -> Result<()> {
    let n = g_minus.nrows();
    if g_minus.shape() != (n, n) || g_plus.shape() != (n, n) {
        return Err(Error::Validation {
            field: "G",
            reason: "G⁻ and G⁺ must be square of equal size".into(),
        });
    }
    let diagonal = |m: &DMatrix<f64>| {
        m.iter()
            .enumerate()
            .all(|(idx, v)| idx / n == idx % n || *v == 0.0)
    };
    if !diagonal(g_minus) || !diagonal(g_plus) {
        return Err(Error::Validation {
            field: "G",
            reason: "G⁻ and G⁺ must be diagonal".into(),
        });
    }
    for i in 0..n {
        if !(0.0 < g_minus[(i, i)] && g_minus[(i, i)] < g_plus[(i, i)]) {
            return Err(Error::Validation {
                field: "G",
                reason: format!("need 0 < G⁻ < G⁺ entrywise, violated at {i}"),
            });
        }
    }
    Ok(())
}

/// The cascade gain `K = diag(k_1 D¹ Λ_1(k_1), …, k_r D^r Λ_r(k_r))` with
/// `Dⁱ = (−α₁ⁱ I, …, −α_{N_i−1}ⁱ I)`. Blocks with `N_i = 1` contribute a
/// zero-width column block. `alpha_rows[i]` holds the ascending coefficients
/// `(α₁ⁱ, …, α_{N_i−1}ⁱ)` of a Hurwitz polynomial, and `k` must be positive
/// and nondecreasing.
pub fn synthesize_k(sig: &Signature, alpha_rows: &[Vec<f64>], k: &[f64]) -> Result<DMatrix<f64>> {
    if alpha_rows.len() != sig.r() {
        return Err(Error::Validation {
            field: "alpha_rows",
            reason: format!("expected {} rows, got {}", sig.r(), alpha_rows.len()),
        });
    }
    if k.len() != sig.r() {
        return Err(Error::Validation {
            field: "k",
            reason: format!("expected {} gains, got {}", sig.r(), k.len()),
        });
    }
    for (i, ki) in k.iter().enumerate() {
        if *ki <= 0.0 {
            return Err(Error::Validation {
                field: "k",
                reason: format!("k_{i} must be positive"),
            });
        }
        if i > 0 && *ki < k[i - 1] {
            return Err(Error::Validation {
                field: "k",
                reason: format!("cascade gains must be nondecreasing, k_{i} < k_{}", i - 1),
            });
        }
    }

    let mut out = DMatrix::zeros(sig.n_y(), sig.dim_xi());
    for i in 0..sig.r() {
        let n = sig.chain_lengths()[i];
        let p = sig.p()[i];
        let row = &alpha_rows[i];
        if row.len() != n - 1 {
            return Err(Error::Validation {
                field: "alpha_rows",
                reason: format!(
                    "row {i} must have {} coefficients, got {}",
                    n - 1,
                    row.len()
                ),
            });
        }
        if n < 2 {
            continue;
        }
        if !is_hurwitz_poly(row) {
            return Err(Error::Validation {
                field: "alpha_rows",
                reason: format!("row {i} = {row:?} is not a Hurwitz coefficient vector"),
            });
        }
        // k_i Dⁱ Λ_i(k_i): column group j carries −α_j k_i^{N_i−j} I_p.
        for (j, alpha_j) in row.iter().enumerate() {
            let value = -alpha_j * k[i].powi((n - 1 - j) as i32);
            for c in 0..p {
                out[(sig.y_offset(i) + c, sig.xi_offset(i) + j * p + c)] = value;
            }
        }
    }
    Ok(out)
}

/// Geometric default cascade `k_i = k1 · ratio^{i}` preserving the required
/// ordering.
pub fn default_cascade(r: usize, k1: f64, ratio: f64) -> Vec<f64> {
    (0..r).map(|i| k1 * ratio.powi(i as i32)).collect()
}

/// Binomial default rows `αⁱ` of `(λ+1)^{N_i−1}` for every block.
pub fn default_alpha_rows(sig: &Signature) -> Vec<Vec<f64>> {
    sig.chain_lengths()
        .iter()
        .map(|n| {
            let deg = n - 1;
            (0..deg).map(|j| binomial(deg as u64, j as u64)).collect()
        })
        .collect()
}

fn binomial(n: u64, k: u64) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// The internal-model injection `G = col(g¹h_1 I, …, g^d h_d I)`.
pub fn build_g(h: &[f64], g: f64, d: usize, n_e: usize) -> Result<DMatrix<f64>> {
    if h.len() != d || d < 1 {
        return Err(Error::Validation {
            field: "h",
            reason: format!("expected {d} coefficients, got {}", h.len()),
        });
    }
    if g <= 0.0 {
        return Err(Error::Validation {
            field: "g",
            reason: "high-gain parameter must be positive".into(),
        });
    }
    let ascending: Vec<f64> = h.iter().rev().copied().collect();
    if !is_hurwitz_poly(&ascending) {
        return Err(Error::Validation {
            field: "h",
            reason: format!("{h:?} are not Hurwitz coefficients"),
        });
    }
    let mut out = DMatrix::zeros(d * n_e, n_e);
    for (i, hi) in h.iter().enumerate() {
        let v = g.powi(i as i32 + 1) * hi;
        out.view_mut((i * n_e, 0), (n_e, n_e))
            .copy_from(&(DMatrix::identity(n_e, n_e) * v));
    }
    Ok(out)
}

/// The full gain bundle used by the control law
/// `u = 𝓛(𝒦_ξ ξ + 𝒦_ζ ζ + 𝒦_η η₁)` and the internal model
/// `η̇ = Φ(η) + G e`.
#[derive(Debug, Clone)]
pub struct GainSet {
    /// Stabilizer matrix `𝓛`, `n_u × n_y`, full column rank.
    pub l: DMatrix<f64>,
    /// Cascade gain `K`, `n_y × (N − n_y)`.
    pub k: DMatrix<f64>,
    /// `𝒦_ξ = ℓK`.
    pub k_xi: DMatrix<f64>,
    /// `𝒦_ζ = −ℓI`.
    pub k_zeta: DMatrix<f64>,
    /// `𝒦_η = (𝒦'_η; 0)`, `n_y × n_e` with invertible upper block.
    pub k_eta: DMatrix<f64>,
    /// Internal-model injection `G`, `(d·n_e) × n_e`.
    pub injection: DMatrix<f64>,
    pub g: f64,
    pub ell: f64,
    pub cascade: Vec<f64>,
    pub h: Vec<f64>,
    pub alpha_rows: Vec<Vec<f64>>,
    pub n_y: usize,
    pub n_e: usize,
    pub d: usize,
}

impl GainSet {
    /// Upper `n_e × n_e` block of `𝒦_η`.
    pub fn k_eta_prime(&self) -> DMatrix<f64> {
        self.k_eta.rows(0, self.n_e).into_owned()
    }

    /// Serializable report with matrices as row-major nested arrays.
    pub fn report(&self) -> GainReport {
        GainReport {
            l: matrix_to_rows(&self.l),
            k: matrix_to_rows(&self.k),
            k_xi: matrix_to_rows(&self.k_xi),
            k_zeta: matrix_to_rows(&self.k_zeta),
            k_eta: matrix_to_rows(&self.k_eta),
            injection: matrix_to_rows(&self.injection),
            g: self.g,
            ell: self.ell,
            cascade: self.cascade.clone(),
            h: self.h.clone(),
            alpha_rows: self.alpha_rows.clone(),
            d: self.d,
        }
    }
}

/// Row-major serialization of a [`GainSet`].
#[derive(Debug, Clone, Serialize)]
pub struct GainReport {
    pub l: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub k_xi: Vec<Vec<f64>>,
    pub k_zeta: Vec<Vec<f64>>,
    pub k_eta: Vec<Vec<f64>>,
    pub injection: Vec<Vec<f64>>,
    pub g: f64,
    pub ell: f64,
    pub cascade: Vec<f64>,
    pub h: Vec<f64>,
    pub alpha_rows: Vec<Vec<f64>>,
    pub d: usize,
}

/// Assembles a [`GainSet`]: `𝒦_ξ = ℓK`, `𝒦_ζ = −ℓI`, and `𝒦_η = ℓKC_eᵀ`
/// with the upper block of every degenerate error chain (`N_i = 1`) replaced
/// by `−ℓ I_{p_i}`. The projection formula is vacuous for those chains, and
/// the replacement must carry the same negative sign as the nondegenerate
/// blocks `−ℓα₁ⁱk_i^{N_i−1}I`: positive blocks flip the e ≈ −η₁ coupling
/// that keeps the internal-model loop Hurwitz and the closed loop diverges.
#[allow(clippy::too_many_arguments)]
pub fn assemble_gains(
    sig: &Signature,
    l: &DMatrix<f64>,
    k: &DMatrix<f64>,
    injection: &DMatrix<f64>,
    g: f64,
    ell: f64,
    h: Vec<f64>,
    cascade: Vec<f64>,
    alpha_rows: Vec<Vec<f64>>,
) -> Result<GainSet> {
    let n_y = sig.n_y();
    let n_e = sig.n_e();
    if ell <= 0.0 {
        return Err(Error::Synthesis(format!("ℓ must be positive, got {ell}")));
    }
    if l.nrows() < n_y || l.ncols() != n_y {
        return Err(Error::Synthesis(format!(
            "𝓛 must be n_u×{n_y} with n_u >= {n_y}, got {}x{}",
            l.nrows(),
            l.ncols()
        )));
    }
    if l.clone().svd(false, false).rank(1e-10) < n_y {
        return Err(Error::Synthesis("𝓛 must have full column rank".into()));
    }
    if k.shape() != (n_y, sig.dim_xi()) {
        return Err(Error::Synthesis(format!(
            "K must be {n_y}x{}, got {}x{}",
            sig.dim_xi(),
            k.nrows(),
            k.ncols()
        )));
    }
    if injection.ncols() != n_e || !injection.nrows().is_multiple_of(n_e) || injection.nrows() == 0
    {
        return Err(Error::Synthesis(format!(
            "G must stack d blocks of {n_e}x{n_e}, got {}x{}",
            injection.nrows(),
            injection.ncols()
        )));
    }
    let d = injection.nrows() / n_e;

    let sm = build_structure(sig, None)?;
    let mut k_eta = (k * sm.c_e.transpose()) * ell;
    for i in 0..sig.r_e() {
        if sig.chain_lengths()[i] == 1 {
            let p = sig.p()[i];
            let at = sig.y_offset(i);
            k_eta
                .view_mut((at, at), (p, p))
                .copy_from(&(DMatrix::identity(p, p) * -ell));
        }
    }
    let k_eta_prime = k_eta.rows(0, n_e).into_owned();
    if k_eta_prime.clone().lu().determinant().abs() < 1e-12 {
        return Err(Error::Synthesis(
            "𝒦'_η is singular; the ideal steady state would be ill-defined".into(),
        ));
    }

    Ok(GainSet {
        l: l.clone(),
        k: k.clone(),
        k_xi: k * ell,
        k_zeta: DMatrix::identity(n_y, n_y) * (-ell),
        k_eta,
        injection: injection.clone(),
        g,
        ell,
        cascade,
        h,
        alpha_rows,
        n_y,
        n_e,
        d,
    })
}

/// One-call synthesis with the library defaults: binomial `α` rows and `h`,
/// geometric cascade, and a caller-chosen `𝓛`.
pub fn synthesize_default_gains(
    sig: &Signature,
    l: &DMatrix<f64>,
    d: usize,
    g: f64,
    ell: f64,
    k1: f64,
    k_ratio: f64,
) -> Result<GainSet> {
    let alpha_rows = default_alpha_rows(sig);
    let cascade = default_cascade(sig.r(), k1, k_ratio);
    let k = synthesize_k(sig, &alpha_rows, &cascade)?;
    let h = linalg::binomial_descending(d);
    let injection = build_g(&h, g, d, sig.n_e())?;
    assemble_gains(sig, l, &k, &injection, g, ell, h, cascade, alpha_rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::is_hurwitz_matrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn emu_identity() {
        let fac = emu_factorize(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(fac.e, DMatrix::identity(3, 3));
        assert_eq!(fac.m, DMatrix::identity(3, 3));
        assert_eq!(fac.u, DMatrix::zeros(3, 3));
    }

    #[test]
    fn emu_example_plant_matrix() {
        // B at b(w) = 1.
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]);
        let fac = emu_factorize(&b).unwrap();
        assert!((b - fac.reconstruct()).norm() < 1e-12);
        assert!(min_eig_sym(&fac.m) > 0.0);
        // U strictly upper
        assert_eq!(fac.u[(0, 0)], 0.0);
        assert_eq!(fac.u[(1, 0)], 0.0);
        assert_eq!(fac.u[(1, 1)], 0.0);
    }

    #[test]
    fn emu_diagonal_case() {
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, -3.0]));
        let fac = emu_factorize(&b).unwrap();
        assert_eq!(
            fac.e,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]))
        );
        assert_eq!(
            fac.m,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]))
        );
        assert_eq!(fac.u, DMatrix::zeros(2, 2));
    }

    #[test]
    fn emu_rejects_vanishing_minor() {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        match emu_factorize(&b) {
            Err(Error::SingularMinor { index: 1, .. }) => {}
            other => panic!("expected SingularMinor(1), got {other:?}"),
        }
    }

    #[test]
    fn l_minors_identity_samples() {
        let samples = vec![DMatrix::identity(2, 2); 4];
        let (l, c) = build_l_minors(&samples, 0.5).unwrap();
        assert_relative_eq!(c, 2.0);
        assert_eq!(
            l,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))
        );
    }

    #[test]
    fn l_minors_example_plant_certificate() {
        // B(w) over a w₁ grid; the produced 𝓛 must satisfy the sampled
        // certificate with the grid-fitted 𝒫 = E M⁻¹ E.
        let samples: Vec<DMatrix<f64>> = (0..61)
            .map(|i| {
                let b = -3.0 + 0.1 * i as f64;
                DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -b, 1.0 - b])
            })
            .collect();
        let (l, _c) = build_l_minors(&samples, 0.5).unwrap();
        for b in &samples {
            let p = emu_factorize(b).unwrap().p_matrix().unwrap();
            let cert = l.transpose() * b.transpose() * &p + &p * b * &l;
            assert!(min_eig_sym(&cert) >= 1.0 - 1e-9);
        }
    }

    #[test]
    fn l_minors_flags_small_minor() {
        let samples = vec![DMatrix::from_row_slice(2, 2, &[1e-9, 1.0, 1.0, 1.0])];
        assert!(matches!(
            build_l_minors(&samples, 1e-6),
            Err(Error::Condition {
                name: "leading-minors",
                ..
            })
        ));
    }

    #[test]
    fn l_minors_flags_sign_flip() {
        let samples = vec![
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0])),
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0])),
        ];
        assert!(matches!(
            build_l_minors(&samples, 0.5),
            Err(Error::Condition {
                name: "sign-pattern",
                ..
            })
        ));
    }

    #[test]
    fn positivity_route() {
        let l = build_l_positivity(&DMatrix::identity(2, 2)).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2));
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(build_l_positivity(&singular).is_err());
    }

    #[test]
    fn positivity_grid_decides_admissibility() {
        // The candidate K = β[[1,−1],[1,1]] against the example-plant B(w):
        // BK + KᵀBᵀ = β[[4, 1−2w₁], [1−2w₁, 2]]. Positive definiteness needs
        // |1−2w₁| small, so the grid decides: accepted on w₁ ∈ [0,1],
        // rejected on w₁ ∈ [−3,3] for every β.
        let cert = |beta: f64, w1: f64| {
            let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -w1, 1.0 - w1]);
            let k = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 1.0]) * beta;
            min_eig_sym(&(&b * &k + k.transpose() * b.transpose()))
        };
        let min_over = |beta: f64, lo: f64, hi: f64| {
            (0..=60)
                .map(|i| cert(beta, lo + (hi - lo) * i as f64 / 60.0))
                .fold(f64::INFINITY, f64::min)
        };
        assert!(min_over(1.0, 0.0, 1.0) >= 1.0);
        for beta in [0.1, 1.0, 10.0, 100.0] {
            assert!(min_over(beta, -3.0, 3.0) < 1.0);
        }
    }

    #[test]
    fn negativity_route() {
        let l = build_l_negativity(&(-DMatrix::identity(2, 2)), 2.0).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2) * 0.5);
        // B = diag(1,3): B𝓛 + 𝓛ᵀBᵀ = diag(1,3) ⪰ ... eigencheck
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]));
        let cert = &b * &l + l.transpose() * b.transpose();
        assert_relative_eq!(min_eig_sym(&cert), 1.0, epsilon = 1e-12);
        assert!(build_l_negativity(&(-DMatrix::identity(2, 2)), 0.0).is_err());
    }

    #[test]
    fn back_route() {
        let g_minus = DMatrix::identity(2, 2);
        let g_plus = DMatrix::identity(2, 2) * 3.0;
        let pi = back_pi(&g_minus, &g_plus);
        assert_eq!(pi, DMatrix::identity(2, 2) * 0.5);

        let (l, kappa_eff) =
            build_l_back(&DMatrix::identity(2, 2), &g_minus, &g_plus, 1.0).unwrap();
        assert_relative_eq!(kappa_eff, 0.25);
        assert_eq!(l, DMatrix::identity(2, 2) * 8.0);
        // Resulting 𝓛 satisfies the positivity certificate for B = I.
        let cert = &l + l.transpose();
        assert!(min_eig_sym(&cert) >= 1.0);

        assert!(build_l_back(
            &DMatrix::identity(2, 2),
            &(DMatrix::identity(2, 2) * 2.0),
            &DMatrix::identity(2, 2),
            1.0
        )
        .is_err());
    }

    #[test]
    fn cascade_gain_single_chain() {
        let sig = Signature::new(vec![1], vec![3], 1).unwrap();
        let k = synthesize_k(&sig, &[vec![1.0, 2.0]], &[2.0]).unwrap();
        // k D Λ(k) = 2·(−1,−2)·diag(2,1) = (−4,−4)
        assert_eq!(k, DMatrix::from_row_slice(1, 2, &[-4.0, -4.0]));
        // F + H Dⁱ Hurwitz with D = (−1,−2)
        let sm = build_structure(&sig, None).unwrap();
        let d = DMatrix::from_row_slice(1, 2, &[-1.0, -2.0]);
        assert!(is_hurwitz_matrix(&(&sm.f + &sm.h * &d)));
    }

    #[test]
    fn cascade_gain_degenerate_and_multi() {
        let sig = Signature::new(vec![1, 1, 1], vec![1, 1, 1], 1).unwrap();
        let k = synthesize_k(&sig, &[vec![], vec![], vec![]], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(k.shape(), (3, 0));

        let sig = Signature::new(vec![1, 1], vec![2, 2], 1).unwrap();
        let k = synthesize_k(&sig, &[vec![1.0], vec![1.0]], &[2.0, 4.0]).unwrap();
        assert_eq!(k, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -4.0]));
    }

    #[test]
    fn cascade_gain_rejects_bad_input() {
        let sig = Signature::new(vec![1], vec![3], 1).unwrap();
        // λ² − λ + 1 has roots in the right half plane
        assert!(synthesize_k(&sig, &[vec![1.0, -1.0]], &[2.0]).is_err());
        assert!(synthesize_k(&sig, &[vec![1.0, 2.0]], &[-1.0]).is_err());
        let sig2 = Signature::new(vec![1, 1], vec![3, 3], 1).unwrap();
        assert!(synthesize_k(&sig2, &[vec![1.0, 2.0], vec![1.0, 2.0]], &[4.0, 2.0]).is_err());
    }

    #[test]
    fn injection_examples() {
        let g = build_g(&[2.0, 1.0], 3.0, 2, 1).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 1, &[6.0, 9.0]));

        let g = build_g(&[1.0], 5.0, 1, 2).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2) * 5.0);

        let g = build_g(&[5.0, 10.0, 10.0, 5.0, 1.0], 5.0, 5, 1).unwrap();
        let expect = [25.0, 250.0, 1250.0, 3125.0, 3125.0];
        for (i, v) in expect.iter().enumerate() {
            assert_relative_eq!(g[(i, 0)], v);
        }
    }

    #[test]
    fn assemble_example_plant_gains() {
        // Empty-ξ case: K is 2×0 and 𝒦_η degenerates to −ℓ(I; 0).
        let sig = Signature::new(vec![1, 1], vec![1, 1], 1).unwrap();
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![25.0, 5.0]));
        let k = DMatrix::zeros(2, 0);
        let inj = build_g(&linalg::binomial_descending(5), 5.0, 5, 1).unwrap();
        let gains = assemble_gains(
            &sig,
            &l,
            &k,
            &inj,
            5.0,
            5.0,
            linalg::binomial_descending(5),
            vec![5.0, 10.0],
            vec![vec![], vec![]],
        )
        .unwrap();
        assert_eq!(gains.k_eta, DMatrix::from_row_slice(2, 1, &[-5.0, 0.0]));
        assert_eq!(gains.k_zeta, DMatrix::identity(2, 2) * -5.0);
        assert_eq!(gains.d, 5);
    }

    #[test]
    fn assemble_full_chain_gains() {
        let sig = Signature::new(vec![1], vec![3], 1).unwrap();
        let k = synthesize_k(&sig, &[vec![1.0, 2.0]], &[2.0]).unwrap();
        let inj = build_g(&[2.0, 1.0], 1.0, 2, 1).unwrap();
        let gains = assemble_gains(
            &sig,
            &DMatrix::identity(1, 1),
            &k,
            &inj,
            1.0,
            2.0,
            vec![2.0, 1.0],
            vec![2.0],
            vec![vec![1.0, 2.0]],
        )
        .unwrap();
        assert_eq!(gains.k_xi, DMatrix::from_row_slice(1, 2, &[-8.0, -8.0]));
        assert_eq!(gains.k_zeta, DMatrix::from_row_slice(1, 1, &[-2.0]));
        assert_eq!(gains.k_eta_prime(), DMatrix::from_row_slice(1, 1, &[-8.0]));
    }

    #[test]
    fn assemble_rejects_rank_deficient_l() {
        let sig = Signature::new(vec![1, 1], vec![1, 1], 1).unwrap();
        let l = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let err = assemble_gains(
            &sig,
            &l,
            &DMatrix::zeros(2, 0),
            &build_g(&[1.0], 1.0, 1, 1).unwrap(),
            1.0,
            1.0,
            vec![1.0],
            vec![1.0, 1.0],
            vec![vec![], vec![]],
        );
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn emu_reconstructs_random_matrices(seed in 0u64..300, n in 2usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // rejection-sample a matrix with healthy leading minors
            let b = loop {
                let cand = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
                if leading_minors(&cand)
                    .map(|m| m.iter().all(|v| v.abs() >= 0.1))
                    .unwrap_or(false)
                {
                    break cand;
                }
            };
            let fac = emu_factorize(&b).unwrap();
            let rel = (&b - fac.reconstruct()).norm() / b.norm();
            prop_assert!(rel <= 1e-10);
            prop_assert!(min_eig_sym(&fac.m) > 0.0);
            for i in 0..n {
                for j in 0..=i {
                    prop_assert_eq!(fac.u[(i, j)], 0.0);
                }
            }
        }

        #[test]
        fn synthesized_blocks_are_hurwitz(n in 2usize..6, p in 1usize..3, k1 in 1.0f64..10.0) {
            let sig = Signature::new(vec![p], vec![n], 1).unwrap();
            let rows = default_alpha_rows(&sig);
            let _k = synthesize_k(&sig, &rows, &[k1]).unwrap();
            let sm = build_structure(&sig, None).unwrap();
            // Dⁱ from the same rows
            let mut d = DMatrix::zeros(p, p * (n - 1));
            for (j, a) in rows[0].iter().enumerate() {
                for c in 0..p {
                    d[(c, j * p + c)] = -a;
                }
            }
            prop_assert!(is_hurwitz_matrix(&(&sm.f + &sm.h * &d)));
        }
    }
}
