//! Tour of the stabilizer-matrix construction routes and the cascade gain.
//!
//! ```bash
//! cargo run --example gain_synthesis_tour
//! ```

use nalgebra::DMatrix;
use postreg::gain_synthesis::{
    build_l_back, build_l_minors, build_l_negativity, build_l_positivity, emu_factorize,
    synthesize_k,
};
use postreg::linalg::min_eig_sym;
use postreg::normal_form::Signature;

fn main() -> postreg::Result<()> {
    // EMU factorization of a nonsymmetric gain matrix with unit minors.
    let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -1.0, 0.0]);
    let fac = emu_factorize(&b)?;
    println!("B = {b}");
    println!("E = {}", fac.e);
    println!("M = {}", fac.m);
    println!("U = {}", fac.u);
    println!(
        "reconstruction error |B - EM(I+U)| = {:.2e}",
        (fac.reconstruct() - &b).norm()
    );

    // Leading-minors route over a family of gain matrices.
    let samples: Vec<DMatrix<f64>> = (0..31)
        .map(|i| {
            let w1 = -3.0 + 0.2 * i as f64;
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, -w1, 1.0 - w1])
        })
        .collect();
    let (l, c) = build_l_minors(&samples, 0.5)?;
    println!("minors route: c = {c}, L = {l}");
    for b in &samples {
        let p = emu_factorize(b)?.p_matrix()?;
        let cert = l.transpose() * b.transpose() * &p + &p * b * &l;
        assert!(min_eig_sym(&cert) >= 1.0 - 1e-9);
    }
    println!(
        "certificate L'B'P + PBL >= I holds at all {} samples",
        samples.len()
    );

    // Positivity, negativity and the Back-style reduction.
    let l_pos = build_l_positivity(&DMatrix::identity(2, 2))?;
    println!("positivity route: L = {l_pos}");
    let l_neg = build_l_negativity(&(-DMatrix::identity(2, 2)), 2.0)?;
    println!("negativity route (kappa = 2): L = {l_neg}");
    let g_minus = DMatrix::identity(2, 2);
    let g_plus = DMatrix::identity(2, 2) * 3.0;
    let (l_back, kappa_eff) = build_l_back(&DMatrix::identity(2, 2), &g_minus, &g_plus, 1.0)?;
    println!("back route: effective kappa = {kappa_eff}, L = {l_back}");

    // Cascade gain for a two-chain signature.
    let sig = Signature::new(vec![1, 2], vec![3, 2], 1)?;
    let k = synthesize_k(&sig, &[vec![1.0, 2.0], vec![1.0]], &[2.0, 4.0])?;
    println!("cascade gain K ({}x{}) = {k}", k.nrows(), k.ncols());
    Ok(())
}
