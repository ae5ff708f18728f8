//! Structural matrices of the partial normal form and of the internal model.
//!
//! Everything here is determined by a [`Signature`]: the block widths `p_i`,
//! the chain lengths `N_i` and the number `r_e` of error blocks. Blocks with
//! `N_i = 1` have no ξ-chain and contribute zero-width blocks throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Dimension bookkeeping for a partial normal form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    p: Vec<usize>,
    #[serde(rename = "N")]
    chain: Vec<usize>,
    r_e: usize,
}

impl Signature {
    /// Builds and validates a signature from output-block widths `p`, chain
    /// lengths `chain` and the number of error blocks `r_e`.
    pub fn new(p: Vec<usize>, chain: Vec<usize>, r_e: usize) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Validation {
                field: "p",
                reason: "at least one output block is required".into(),
            });
        }
        if p.len() != chain.len() {
            return Err(Error::Validation {
                field: "N",
                reason: format!(
                    "length {} does not match p (length {})",
                    chain.len(),
                    p.len()
                ),
            });
        }
        if let Some(i) = p.iter().position(|&v| v < 1) {
            return Err(Error::Validation {
                field: "p",
                reason: format!("entry {i} must be >= 1"),
            });
        }
        if let Some(i) = chain.iter().position(|&v| v < 1) {
            return Err(Error::Validation {
                field: "N",
                reason: format!("entry {i} must be >= 1"),
            });
        }
        if r_e < 1 || r_e > p.len() {
            return Err(Error::Validation {
                field: "r_e",
                reason: format!("must lie in 1..={}, got {r_e}", p.len()),
            });
        }
        Ok(Self { p, chain, r_e })
    }

    /// Number of output blocks `r`.
    pub fn r(&self) -> usize {
        self.p.len()
    }

    /// Number of error blocks.
    pub fn r_e(&self) -> usize {
        self.r_e
    }

    /// Output-block widths `p_i`.
    pub fn p(&self) -> &[usize] {
        &self.p
    }

    /// Chain lengths `N_i`.
    pub fn chain_lengths(&self) -> &[usize] {
        &self.chain
    }

    /// Total output dimension `n_y = Σ p_i`.
    pub fn n_y(&self) -> usize {
        self.p.iter().sum()
    }

    /// Regulation-error dimension `n_e = Σ_{i<=r_e} p_i`.
    pub fn n_e(&self) -> usize {
        self.p[..self.r_e].iter().sum()
    }

    /// Auxiliary-output dimension `n_a = n_y - n_e`.
    pub fn n_a(&self) -> usize {
        self.n_y() - self.n_e()
    }

    /// Total chain dimension `N = Σ p_i N_i`.
    pub fn n_total(&self) -> usize {
        self.p.iter().zip(&self.chain).map(|(p, n)| p * n).sum()
    }

    /// ξ-width of block `i`: `p_i (N_i - 1)`.
    pub fn xi_block_dim(&self, i: usize) -> usize {
        self.p[i] * (self.chain[i] - 1)
    }

    /// Dimension of the full ξ vector, `N - n_y`.
    pub fn dim_xi(&self) -> usize {
        (0..self.r()).map(|i| self.xi_block_dim(i)).sum()
    }

    /// Dimension of the error part ξ^e (blocks `i <= r_e`).
    pub fn dim_xi_e(&self) -> usize {
        (0..self.r_e).map(|i| self.xi_block_dim(i)).sum()
    }

    /// Offset of block `i` inside ξ.
    pub fn xi_offset(&self, i: usize) -> usize {
        (0..i).map(|j| self.xi_block_dim(j)).sum()
    }

    /// Offset of block `i` inside ζ (and inside y).
    pub fn y_offset(&self, i: usize) -> usize {
        self.p[..i].iter().sum()
    }
}

/// The matrices `F`, `H`, `C` of the partial normal form, with the error /
/// auxiliary row split of `C`.
#[derive(Debug, Clone)]
pub struct StructureMatrices {
    pub f: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub c_e: DMatrix<f64>,
    pub c_a: DMatrix<f64>,
}

/// User-supplied strictly lower block entries for `F` and `H`; `(i, j, block)`
/// with `i > j` in block coordinates.
#[derive(Debug, Clone, Default)]
pub struct LowerBlocks {
    pub f: Vec<(usize, usize, DMatrix<f64>)>,
    pub h: Vec<(usize, usize, DMatrix<f64>)>,
}

/// Assembles `F`, `H`, `C` for a signature. The diagonal blocks are fixed by
/// the normal form; off-diagonal lower blocks default to zero and may be
/// supplied through `lower`.
pub fn build_structure(sig: &Signature, lower: Option<&LowerBlocks>) -> Result<StructureMatrices> {
    let dim_xi = sig.dim_xi();
    let n_y = sig.n_y();
    let mut f = DMatrix::zeros(dim_xi, dim_xi);
    let mut h = DMatrix::zeros(dim_xi, n_y);
    let mut c = DMatrix::zeros(n_y, dim_xi);

    for i in 0..sig.r() {
        let p = sig.p()[i];
        let n = sig.chain_lengths()[i];
        if n < 2 {
            continue; // no ξ-chain for this block
        }
        let ro = sig.xi_offset(i);
        let width = sig.xi_block_dim(i);
        // F_ii = [0 I; 0 0] shifted by one p-block
        if n > 2 {
            f.view_mut((ro, ro + p), (width - p, width - p))
                .copy_from(&DMatrix::identity(width - p, width - p));
        }
        // H_ii = [0; I_p] in the last p rows of the block
        h.view_mut((ro + width - p, sig.y_offset(i)), (p, p))
            .copy_from(&DMatrix::identity(p, p));
        // C_i = [I_p 0]
        c.view_mut((sig.y_offset(i), ro), (p, p))
            .copy_from(&DMatrix::identity(p, p));
    }

    if let Some(lb) = lower {
        for (i, j, block) in &lb.f {
            let (i, j) = (*i, *j);
            if i <= j || i >= sig.r() {
                return Err(Error::Validation {
                    field: "lower.f",
                    reason: format!("block ({i},{j}) is not strictly lower"),
                });
            }
            let (rows, cols) = (sig.xi_block_dim(i), sig.xi_block_dim(j));
            if block.shape() != (rows, cols) {
                return Err(Error::Validation {
                    field: "lower.f",
                    reason: format!(
                        "block ({i},{j}) must be {rows}x{cols}, got {}x{}",
                        block.nrows(),
                        block.ncols()
                    ),
                });
            }
            f.view_mut((sig.xi_offset(i), sig.xi_offset(j)), (rows, cols))
                .copy_from(block);
        }
        for (i, j, block) in &lb.h {
            let (i, j) = (*i, *j);
            if i <= j || i >= sig.r() {
                return Err(Error::Validation {
                    field: "lower.h",
                    reason: format!("block ({i},{j}) is not strictly lower"),
                });
            }
            let (rows, cols) = (sig.xi_block_dim(i), sig.p()[j]);
            if block.shape() != (rows, cols) {
                return Err(Error::Validation {
                    field: "lower.h",
                    reason: format!(
                        "block ({i},{j}) must be {rows}x{cols}, got {}x{}",
                        block.nrows(),
                        block.ncols()
                    ),
                });
            }
            h.view_mut((sig.xi_offset(i), sig.y_offset(j)), (rows, cols))
                .copy_from(block);
        }
    }

    let c_e = c.rows(0, sig.n_e()).into_owned();
    let c_a = c.rows(sig.n_e(), sig.n_a()).into_owned();
    Ok(StructureMatrices { f, h, c, c_e, c_a })
}

/// The scaling matrix `Λ_i(k) = diag(k^{N_i-2} I_{p_i}, …, k I_{p_i}, I_{p_i})`
/// for block `i` (0-based). Requires `N_i >= 2`.
pub fn build_lambda(i: usize, k: f64, sig: &Signature) -> Result<DMatrix<f64>> {
    if i >= sig.r() {
        return Err(Error::Validation {
            field: "i",
            reason: format!("block index {i} out of range (r = {})", sig.r()),
        });
    }
    if k <= 0.0 {
        return Err(Error::Validation {
            field: "k",
            reason: "scaling gain must be positive".into(),
        });
    }
    let n = sig.chain_lengths()[i];
    if n < 2 {
        return Err(Error::Validation {
            field: "i",
            reason: format!("no ξ-chain for block {i} (N_{i} = 1)"),
        });
    }
    let p = sig.p()[i];
    let mut diag = Vec::with_capacity(p * (n - 1));
    for level in (0..=(n - 2)).rev() {
        let v = k.powi(level as i32);
        diag.extend(std::iter::repeat_n(v, p));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

/// The internal-model scaling `Δ(g) = diag(I, g I, …, g^{d-1} I)` with
/// `n_e`-sized identity blocks.
pub fn build_delta_scaling(d: usize, g: f64, n_e: usize) -> Result<DMatrix<f64>> {
    if d < 1 {
        return Err(Error::Validation {
            field: "d",
            reason: "internal-model order must be >= 1".into(),
        });
    }
    if g <= 0.0 {
        return Err(Error::Validation {
            field: "g",
            reason: "scaling gain must be positive".into(),
        });
    }
    let mut diag = Vec::with_capacity(d * n_e);
    for level in 0..d {
        diag.extend(std::iter::repeat_n(g.powi(level as i32), n_e));
    }
    Ok(DMatrix::from_diagonal(&DVector::from_vec(diag)))
}

/// Shift, injection and selection matrices of the internal-model unit.
#[derive(Debug, Clone)]
pub struct InternalModelMatrices {
    /// Block upper-shift `A`.
    pub a: DMatrix<f64>,
    /// Last-block-row injector `E`.
    pub e: DMatrix<f64>,
    /// First-block-row selector `Γ`.
    pub gamma: DMatrix<f64>,
    /// Stacked `h_i I` blocks `R`.
    pub r: DMatrix<f64>,
    /// `M = A - RΓ`; Hurwitz whenever `h` is a Hurwitz coefficient vector.
    pub m: DMatrix<f64>,
    pub d: usize,
    pub n_e: usize,
    pub h: Vec<f64>,
}

/// Builds `A`, `E`, `Γ`, `R(h)` and `M(h) = A - R(h)Γ` for an internal model
/// of order `d` on an `n_e`-dimensional error.
pub fn build_internal_model_matrices(
    d: usize,
    n_e: usize,
    h: &[f64],
) -> Result<InternalModelMatrices> {
    if d < 1 {
        return Err(Error::Validation {
            field: "d",
            reason: "internal-model order must be >= 1".into(),
        });
    }
    if h.len() != d {
        return Err(Error::Validation {
            field: "h",
            reason: format!("expected {d} coefficients, got {}", h.len()),
        });
    }
    let dim = d * n_e;
    let mut a = DMatrix::zeros(dim, dim);
    for blk in 0..d.saturating_sub(1) {
        a.view_mut((blk * n_e, (blk + 1) * n_e), (n_e, n_e))
            .copy_from(&DMatrix::identity(n_e, n_e));
    }
    let mut e = DMatrix::zeros(dim, n_e);
    e.view_mut(((d - 1) * n_e, 0), (n_e, n_e))
        .copy_from(&DMatrix::identity(n_e, n_e));
    let mut gamma = DMatrix::zeros(n_e, dim);
    gamma
        .view_mut((0, 0), (n_e, n_e))
        .copy_from(&DMatrix::identity(n_e, n_e));
    let mut r = DMatrix::zeros(dim, n_e);
    for (i, hi) in h.iter().enumerate() {
        r.view_mut((i * n_e, 0), (n_e, n_e))
            .copy_from(&(DMatrix::identity(n_e, n_e) * *hi));
    }
    let m = &a - &r * &gamma;
    Ok(InternalModelMatrices {
        a,
        e,
        gamma,
        r,
        m,
        d,
        n_e,
        h: h.to_vec(),
    })
}

/// Convenience: Hurwitz coefficients `(h_1, …, h_d)` of `(λ+1)^d`.
pub fn binomial_hurwitz(d: usize) -> Vec<f64> {
    linalg::binomial_descending(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn sig(p: &[usize], n: &[usize], r_e: usize) -> Signature {
        Signature::new(p.to_vec(), n.to_vec(), r_e).unwrap()
    }

    #[test]
    fn signature_dimensions() {
        let s = sig(&[1, 1, 1], &[1, 1, 1], 1);
        assert_eq!(s.n_y(), 3);
        assert_eq!(s.n_e(), 1);
        assert_eq!(s.dim_xi(), 0);

        let s = sig(&[1], &[1], 1);
        assert_eq!((s.n_y(), s.n_e(), s.dim_xi()), (1, 1, 0));

        let s = sig(&[2, 1], &[3, 2], 1);
        assert_eq!(s.n_total(), 8);
        assert_eq!(s.n_y(), 3);
        assert_eq!(s.dim_xi(), 5);
        assert_eq!(s.n_e(), 2);
    }

    #[test]
    fn signature_rejects_bad_input() {
        assert!(Signature::new(vec![], vec![], 1).is_err());
        assert!(Signature::new(vec![1, 2], vec![1], 1).is_err());
        assert!(Signature::new(vec![1, 0], vec![1, 1], 1).is_err());
        assert!(Signature::new(vec![1], vec![0], 1).is_err());
        assert!(Signature::new(vec![1], vec![1], 0).is_err());
        assert!(Signature::new(vec![1], vec![1], 2).is_err());
    }

    #[test]
    fn structure_single_chain() {
        let s = sig(&[1], &[3], 1);
        let sm = build_structure(&s, None).unwrap();
        assert_eq!(sm.f, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(sm.h, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(sm.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
    }

    #[test]
    fn structure_degenerate_chains() {
        let s = sig(&[1], &[2], 1);
        let sm = build_structure(&s, None).unwrap();
        assert_eq!(sm.f, DMatrix::zeros(1, 1));
        assert_eq!(sm.h, DMatrix::from_row_slice(1, 1, &[1.0]));
        assert_eq!(sm.c, DMatrix::from_row_slice(1, 1, &[1.0]));

        let s = sig(&[2], &[2], 1);
        let sm = build_structure(&s, None).unwrap();
        assert_eq!(sm.f, DMatrix::zeros(2, 2));
        assert_eq!(sm.h, DMatrix::identity(2, 2));
        assert_eq!(sm.c, DMatrix::identity(2, 2));
    }

    #[test]
    fn structure_rejects_misshaped_lower_blocks() {
        let s = sig(&[1, 1], &[3, 3], 1);
        let lb = LowerBlocks {
            f: vec![(1, 0, DMatrix::zeros(1, 2))],
            h: vec![],
        };
        assert!(build_structure(&s, Some(&lb)).is_err());
        let lb = LowerBlocks {
            f: vec![(0, 1, DMatrix::zeros(2, 2))],
            h: vec![],
        };
        assert!(build_structure(&s, Some(&lb)).is_err());
    }

    #[test]
    fn lambda_examples() {
        let s = sig(&[1], &[3], 1);
        let l = build_lambda(0, 2.0, &s).unwrap();
        assert_eq!(
            l,
            DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]))
        );

        let s = sig(&[2], &[2], 1);
        let l = build_lambda(0, 7.0, &s).unwrap();
        assert_eq!(l, DMatrix::identity(2, 2));

        let s = sig(&[2], &[4], 1);
        let l = build_lambda(0, 3.0, &s).unwrap();
        let expect = DVector::from_vec(vec![9.0, 9.0, 3.0, 3.0, 1.0, 1.0]);
        assert_eq!(l, DMatrix::from_diagonal(&expect));

        let s = sig(&[1], &[1], 1);
        assert!(build_lambda(0, 2.0, &s).is_err());
    }

    #[test]
    fn delta_scaling_examples() {
        let d = build_delta_scaling(2, 3.0, 1).unwrap();
        assert_eq!(
            d,
            DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0]))
        );
        let d = build_delta_scaling(1, 10.0, 2).unwrap();
        assert_eq!(d, DMatrix::identity(2, 2));
        let d = build_delta_scaling(3, 2.0, 2).unwrap();
        let expect = DVector::from_vec(vec![1.0, 1.0, 2.0, 2.0, 4.0, 4.0]);
        assert_eq!(d, DMatrix::from_diagonal(&expect));
    }

    #[test]
    fn internal_model_examples() {
        let im = build_internal_model_matrices(2, 1, &[2.0, 1.0]).unwrap();
        assert_eq!(im.m, DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, 0.0]));
        for re in linalg::eigenvalue_real_parts(&im.m) {
            assert_relative_eq!(re, -1.0, epsilon = 1e-9);
        }

        let im = build_internal_model_matrices(1, 1, &[1.0]).unwrap();
        assert_eq!(im.m, DMatrix::from_row_slice(1, 1, &[-1.0]));

        // (λ+1)⁵ has a quintuple root; its eigenvalue cluster spreads by
        // O(ε^{1/5}) ≈ 1e-3, so assert the cluster and the exact mean.
        let im = build_internal_model_matrices(5, 1, &binomial_hurwitz(5)).unwrap();
        let res = linalg::eigenvalue_real_parts(&im.m);
        assert!(res.iter().all(|re| *re < 0.0));
        assert!(res.iter().all(|re| (re + 1.0).abs() < 1e-2));
        assert_relative_eq!(res.iter().sum::<f64>() / 5.0, -1.0, epsilon = 1e-9);

        assert!(build_internal_model_matrices(2, 1, &[1.0]).is_err());
    }

    #[test]
    fn internal_model_matches_companion_eigenvalues() {
        // M(h) and the companion matrix of λ^d + h_1 λ^{d-1} + … + h_d must
        // agree spectrally for random Hurwitz h (distinct roots keep the
        // eigenproblems well conditioned).
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for d in 2..=8usize {
            for _ in 0..5 {
                // distinct negative roots separated by at least 0.25
                let mut roots: Vec<f64> = (0..d)
                    .map(|i| -0.3 - 0.25 * i as f64 - rng.random_range(0.0..0.2))
                    .collect();
                roots.reverse();
                // expand Π(λ − r_i) into monic coefficients, ascending order
                let mut asc = vec![1.0];
                for r in &roots {
                    let mut next = vec![0.0; asc.len() + 1];
                    for (p, c) in asc.iter().enumerate() {
                        next[p + 1] += c;
                        next[p] += -r * c;
                    }
                    asc = next;
                }
                asc.pop(); // drop the leading 1
                let mut h: Vec<f64> = asc.clone();
                h.reverse();
                let im = build_internal_model_matrices(d, 1, &h).unwrap();
                let comp = linalg::companion(&asc);
                let mut a: Vec<f64> = linalg::eigenvalue_real_parts(&im.m);
                let mut b: Vec<f64> = linalg::eigenvalue_real_parts(&comp);
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
                for (x, y) in a.iter().zip(b.iter()) {
                    assert_relative_eq!(x, y, epsilon = 1e-9, max_relative = 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn f_ce_identities(r in 1usize..4, seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<usize> = (0..r).map(|_| rng.random_range(1..=3)).collect();
            let r_e = rng.random_range(1..=r);
            // F·C_eᵀ = 0 holds for every signature, degenerate chains
            // included.
            let n_any: Vec<usize> = (0..r).map(|_| rng.random_range(1..=5)).collect();
            let s = Signature::new(p.clone(), n_any, r_e).unwrap();
            let sm = build_structure(&s, None).unwrap();
            let fce = &sm.f * sm.c_e.transpose();
            prop_assert!(fce.iter().all(|v| *v == 0.0));
            // C_e C_eᵀ = I additionally needs every error chain to carry a
            // ξ-block (N_i >= 2); degenerate error chains have no row in C.
            let n_full: Vec<usize> = (0..r)
                .map(|i| if i < r_e { rng.random_range(2..=5) } else { rng.random_range(1..=5) })
                .collect();
            let s = Signature::new(p, n_full, r_e).unwrap();
            let sm = build_structure(&s, None).unwrap();
            let fce = &sm.f * sm.c_e.transpose();
            prop_assert!(fce.iter().all(|v| *v == 0.0));
            let cce = &sm.c_e * sm.c_e.transpose();
            prop_assert!((cce - DMatrix::identity(s.n_e(), s.n_e())).iter().all(|v| *v == 0.0));
        }

        #[test]
        fn lambda_scaling_identities(k in 1.0f64..8.0, p in 1usize..3, n in 2usize..6) {
            let s = sig(&[p], &[n], 1);
            let sm = build_structure(&s, None).unwrap();
            let lam = build_lambda(0, k, &s).unwrap();
            let lam_inv = lam.clone().try_inverse().unwrap();
            let lhs = &lam * &sm.f * &lam_inv;
            let rhs = &sm.f * k;
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + sm.f.norm() * k));
            prop_assert!((&lam * &sm.h - &sm.h).norm() <= 1e-12);
            let ct = sm.c.transpose();
            let scaled = &lam * &ct;
            let expect = &ct * k.powi(n as i32 - 2);
            prop_assert!((scaled - expect).norm() <= 1e-9 * (1.0 + k.powi(n as i32 - 2)));
        }
    }
}
