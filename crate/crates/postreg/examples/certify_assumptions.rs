//! Sampled certification of the controllability conditions for the example
//! plant: leading minors, the (𝒫, 𝓛) stabilizer certificate, the steady-state
//! condition on D^{e,e}, and the block-diagonal reduction (which fails here,
//! showing why the direct candidate 𝓜 = 1 is the one that certifies this
//! plant).
//!
//! ```bash
//! cargo run --example certify_assumptions
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;
use postreg::assumption_checks::{
    check_assumption_dee, check_assumption_p_l, check_blockdiag_p_implies_m, check_minors,
    hf_gain_fn, FdCheck, SampleGrid,
};
use postreg::gain_synthesis::{assemble_gains, build_g};
use postreg::linalg::binomial_descending;
use postreg::plant::{example_p_matrix, make_example_plant, ExamplePlantParams, StateMatMap};

fn main() -> postreg::Result<()> {
    let params = ExamplePlantParams::default();
    let plant = make_example_plant(params.clone())?;
    let h = binomial_descending(5);
    let gains = assemble_gains(
        &plant.sig,
        &params.l_matrix(),
        &DMatrix::zeros(2, 0),
        &build_g(&h, 5.0, 5, 1)?,
        5.0,
        5.0,
        h,
        vec![5.0, 10.0],
        vec![vec![], vec![]],
    )?;

    let grid = SampleGrid::uniform(vec![(-3.0, 3.0), (-3.0, 3.0)], 101);
    let fd = FdCheck::default();

    let minors = check_minors(hf_gain_fn(&plant), &grid, 0.5)?;
    println!(
        "minors:           passed = {}, worst margin = {:+.4e}",
        minors.passed, minors.worst_margin
    );

    let p_fn: StateMatMap = Arc::new(|w, _x| example_p_matrix(w));
    let pl = check_assumption_p_l(&plant, &p_fn, &gains.l, &grid, fd)?;
    println!(
        "(P, L) condition: passed = {}, P eigenvalues in [{:.3}, {:.3}]",
        pl.passed(),
        pl.lambda_min,
        pl.lambda_max
    );
    for rep in pl.reports() {
        println!(
            "  {:<24} margin {:+.4e} at point {:?}",
            rep.condition, rep.worst_margin, rep.worst_point
        );
    }

    let m_fn: StateMatMap = Arc::new(|_w, _x| DMatrix::identity(1, 1));
    let dee = check_assumption_dee(&plant, &m_fn, &gains, &grid, fd)?;
    println!(
        "D^ee condition:   passed = {}, margin = {:+.4e} (expected 2*alpha^2 - 1 = 49)",
        dee.passed(),
        dee.main.worst_margin
    );

    let reduction = check_blockdiag_p_implies_m(&plant, &p_fn, 1, &grid, 1e-9)?;
    println!(
        "blockdiag route:  passed = {} (the off-diagonal entry of P is b(w), so this
                  reduction cannot certify the example; the direct M = 1 candidate does)",
        reduction.report.passed
    );

    // The steady-state condition is meant to hold on the attractor; rerun it
    // over the reachable-set proxy: the inflated bounding box of a simulated
    // trajectory tail.
    let phi = postreg::regulator::PhiMap::Linear(DMatrix::from_row_slice(
        1,
        5,
        &[0.0, 0.0, 0.0, -4.0, 0.0],
    ));
    let regulator = postreg::regulator::RegulatorConfig::new(5, phi, gains.clone())?;
    let initial = postreg::regulator::ClosedLoopState {
        w: nalgebra::DVector::from_vec(vec![1.0, 0.0]),
        x: nalgebra::DVector::from_vec(vec![3.0, 5.0, -2.0]),
        eta: nalgebra::DVector::zeros(5),
    };
    let opts = postreg::sim_engine::SolverOpts::default();
    let traj = postreg::sim_engine::integrate(&plant, &regulator, &initial, 60.0, &opts)?;
    let tail_box = postreg::sim_engine::attractor_box(&traj, 40.0)?;
    let tail_grid = SampleGrid::default_for(tail_box);
    let dee_tail = check_assumption_dee(&plant, &m_fn, &gains, &tail_grid, fd)?;
    println!(
        "D^ee on the attractor proxy: passed = {}, margin = {:+.4e}",
        dee_tail.passed(),
        dee_tail.main.worst_margin
    );
    Ok(())
}
