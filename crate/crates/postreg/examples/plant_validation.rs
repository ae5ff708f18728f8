//! Numerically checking that supplied chain coordinates really satisfy
//! `ξ̇ = Fξ + Hζ` with the ξ-derivative along `b·u` vanishing — plus a
//! negative control with a corrupted ζ map.
//!
//! ```bash
//! cargo run --example plant_validation
//! ```

use std::sync::Arc;

use nalgebra::DVector;
use postreg::plant::{harmonic_oracle_spec, make_linear_oracle_plant, validate_plant};

fn main() -> postreg::Result<()> {
    let plant = make_linear_oracle_plant(harmonic_oracle_spec(1.0))?;
    let samples: Vec<_> = (0..200)
        .map(|i| {
            let s = i as f64 * 0.05;
            (
                DVector::from_vec(vec![s.cos(), -s.sin()]),
                DVector::from_vec(vec![0.4 * s.sin(), 1.0 - 0.2 * s]),
            )
        })
        .collect();

    let report = validate_plant(&plant, &samples, 1e-5)?;
    println!(
        "clean plant:     drift residual {:.2e}, input residual {:.2e}, |q(0,0)| = {:.1e}",
        report.max_drift_residual, report.max_input_residual, report.q_origin_norm
    );
    assert!(report.passes(1e-6));

    let mut corrupted = plant.clone();
    let inner = corrupted.zeta_map.clone();
    corrupted.zeta_map = Arc::new(move |w, x| {
        let mut z = inner(w, x);
        z[0] += 0.25 * x[0] * x[0];
        z
    });
    let report = validate_plant(&corrupted, &samples, 1e-5)?;
    println!(
        "corrupted zeta:  drift residual {:.2e} (flagged, as it should be)",
        report.max_drift_residual
    );
    assert!(report.max_drift_residual > 1e-2);
    Ok(())
}
