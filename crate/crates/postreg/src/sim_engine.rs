//! Closed-loop integration, tail statistics and parameter sweeps.
//!
//! Two integrators: fixed-step RK4 and embedded Dormand–Prince RK45. Both
//! land exactly on a uniform reporting grid, which keeps the mismatch
//! differencing well posed, and both abort (with the trajectory prefix
//! preserved) when a state component leaves the blow-up box.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::Plant;
use crate::regulator::{
    closed_loop_rhs, control_law, mismatch_along, ClosedLoopState, MismatchReport, RegulatorConfig,
};

/// Integration scheme selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverKind {
    Rk4 { step: f64 },
    Rk45 { rtol: f64, atol: f64 },
}

/// Integrator options; `report_step` is the uniform output spacing and
/// `blowup` the per-component abort threshold.
#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    pub solver: SolverKind,
    pub report_step: f64,
    pub blowup: f64,
    pub seed: u64,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            solver: SolverKind::Rk4 { step: 1e-3 },
            report_step: 1e-2,
            blowup: 1e9,
            seed: 0,
        }
    }
}

/// Why an integration stopped early.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AbortReason {
    BlowUp,
    NonFinite,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AbortInfo {
    /// Last time with a finite recorded state.
    pub t: f64,
    pub reason: AbortReason,
}

#[derive(Debug, Clone)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub report_step: f64,
    pub seed: u64,
    pub aborted: Option<AbortInfo>,
}

/// Time grid, states and derived signals of one closed-loop run. The derived
/// signals are evaluated once, straight from the stored states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<ClosedLoopState>,
    pub e: Vec<DVector<f64>>,
    pub y_a: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub xi: Vec<DVector<f64>>,
    pub zeta: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

/// `(e, y_a, u, ξ, ζ)` at one state.
pub type DerivedSignals = (
    DVector<f64>,
    DVector<f64>,
    DVector<f64>,
    DVector<f64>,
    DVector<f64>,
);

/// Derived signals at one state, computed through the single shared path.
pub fn derived_signals(
    state: &ClosedLoopState,
    plant: &Plant,
    config: &RegulatorConfig,
) -> DerivedSignals {
    let xi = (plant.xi_map)(&state.w, &state.x);
    let zeta = (plant.zeta_map)(&state.w, &state.x);
    let e = (plant.error_output)(&state.w, &state.x);
    let y_a = (plant.aux_output)(&state.w, &state.x);
    let eta1 = state.eta.rows(0, config.n_e()).into_owned();
    let u = control_law(&xi, &zeta, &eta1, &config.gains);
    (e, y_a, u, xi, zeta)
}

/// Time grid, flat states and the abort record of a raw integration.
pub type RawIntegration = (Vec<f64>, Vec<DVector<f64>>, Option<AbortInfo>);

/// Generic fixed/adaptive integrator on a flat autonomous field, reporting on
/// the uniform grid `0, Δ, 2Δ, …`. Returns the grid, the states, and the
/// abort record if the run stopped early.
pub fn integrate_autonomous<F>(
    rhs: F,
    y0: &DVector<f64>,
    horizon: f64,
    opts: &SolverOpts,
) -> Result<RawIntegration>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if horizon <= 0.0 {
        return Err(Error::Validation {
            field: "horizon",
            reason: "must be positive".into(),
        });
    }
    if opts.report_step <= 0.0 {
        return Err(Error::Validation {
            field: "report_step",
            reason: "must be positive".into(),
        });
    }
    let n_report = (horizon / opts.report_step).round().max(1.0) as usize;
    let mut t_grid = Vec::with_capacity(n_report + 1);
    let mut states = Vec::with_capacity(n_report + 1);
    t_grid.push(0.0);
    states.push(y0.clone());

    let ok = |y: &DVector<f64>| y.iter().all(|v| v.is_finite() && v.abs() <= opts.blowup);
    if !ok(y0) {
        return Err(Error::Validation {
            field: "initial_state",
            reason: "initial state is outside the blow-up box".into(),
        });
    }

    let mut y = y0.clone();
    let mut h_adaptive = opts.report_step; // persistent adaptive step guess
    for k in 1..=n_report {
        let t_target = k as f64 * opts.report_step;
        let t_prev = (k - 1) as f64 * opts.report_step;
        let advanced = match opts.solver {
            SolverKind::Rk4 { step } => advance_rk4(&rhs, &mut y, opts.report_step, step, &ok),
            SolverKind::Rk45 { rtol, atol } => advance_rk45(
                &rhs,
                &mut y,
                opts.report_step,
                rtol,
                atol,
                &mut h_adaptive,
                &ok,
            ),
        };
        match advanced {
            Ok(()) => {
                t_grid.push(t_target);
                states.push(y.clone());
            }
            Err(reason) => {
                return Ok((t_grid, states, Some(AbortInfo { t: t_prev, reason })));
            }
        }
    }
    Ok((t_grid, states, None))
}

fn rk4_step<F>(rhs: &F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(y)?;
    let k2 = rhs(&(y + &k1 * (h / 2.0)))?;
    let k3 = rhs(&(y + &k2 * (h / 2.0)))?;
    let k4 = rhs(&(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn advance_rk4<F, G>(
    rhs: &F,
    y: &mut DVector<f64>,
    span: f64,
    step: f64,
    ok: &G,
) -> std::result::Result<(), AbortReason>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    G: Fn(&DVector<f64>) -> bool,
{
    let n_sub = (span / step).ceil().max(1.0) as usize;
    let h = span / n_sub as f64;
    for _ in 0..n_sub {
        let next = rk4_step(rhs, y, h).map_err(|_| AbortReason::NonFinite)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(AbortReason::NonFinite);
        }
        if !ok(&next) {
            return Err(AbortReason::BlowUp);
        }
        *y = next;
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
    ],
    &[
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
    ],
    &[
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const DP_ERR: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn advance_rk45<F, G>(
    rhs: &F,
    y: &mut DVector<f64>,
    span: f64,
    rtol: f64,
    atol: f64,
    h_guess: &mut f64,
    ok: &G,
) -> std::result::Result<(), AbortReason>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
    G: Fn(&DVector<f64>) -> bool,
{
    let mut remaining = span;
    let h_min = span * 1e-12;
    let mut h = (*h_guess).min(span).max(h_min);
    while remaining > 1e-14 * span {
        h = h.min(remaining);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        k.push(rhs(y).map_err(|_| AbortReason::NonFinite)?);
        for stage in 0..6 {
            let mut arg = y.clone();
            for (j, a) in DP_A[stage].iter().enumerate() {
                arg += &k[j] * (a * h);
            }
            let _ = DP_C[stage];
            k.push(rhs(&arg).map_err(|_| AbortReason::NonFinite)?);
        }
        // 5th-order solution uses the last A row; the error estimate uses
        // the difference coefficients directly.
        let mut y_next = y.clone();
        for (j, a) in DP_A[5].iter().enumerate() {
            y_next += &k[j] * (a * h);
        }
        let mut err_vec = DVector::zeros(y.len());
        for (j, c) in DP_ERR.iter().enumerate() {
            err_vec += &k[j] * (c * h);
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let scale = atol + rtol * y[i].abs().max(y_next[i].abs());
            let r = err_vec[i] / scale;
            err += r * r;
        }
        let err = (err / y.len() as f64).sqrt();

        if !y_next.iter().all(|v| v.is_finite()) {
            return Err(AbortReason::NonFinite);
        }
        if err <= 1.0 {
            if !ok(&y_next) {
                return Err(AbortReason::BlowUp);
            }
            *y = y_next;
            remaining -= h;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < h_min {
            return Err(AbortReason::StepUnderflow);
        }
        *h_guess = h;
    }
    Ok(())
}

/// Integrates the closed loop `(ẇ, ẋ, η̇)` over `[0, horizon]`.
pub fn integrate(
    plant: &Plant,
    config: &RegulatorConfig,
    initial: &ClosedLoopState,
    horizon: f64,
    opts: &SolverOpts,
) -> Result<Trajectory> {
    if initial.w.len() != plant.n_w
        || initial.x.len() != plant.n_x
        || initial.eta.len() != config.dim_eta()
    {
        return Err(Error::Validation {
            field: "initial_state",
            reason: format!(
                "expected dims ({}, {}, {}), got ({}, {}, {})",
                plant.n_w,
                plant.n_x,
                config.dim_eta(),
                initial.w.len(),
                initial.x.len(),
                initial.eta.len()
            ),
        });
    }
    let (n_w, n_x, n_eta) = (plant.n_w, plant.n_x, config.dim_eta());
    let rhs = |flat: &DVector<f64>| -> Result<DVector<f64>> {
        let state = ClosedLoopState::from_flat(flat, n_w, n_x, n_eta);
        Ok(closed_loop_rhs(&state, plant, config)?.flatten())
    };
    let (t, flat_states, aborted) = integrate_autonomous(rhs, &initial.flatten(), horizon, opts)?;

    let states: Vec<ClosedLoopState> = flat_states
        .iter()
        .map(|f| ClosedLoopState::from_flat(f, n_w, n_x, n_eta))
        .collect();
    let mut e = Vec::with_capacity(states.len());
    let mut y_a = Vec::with_capacity(states.len());
    let mut u = Vec::with_capacity(states.len());
    let mut xi = Vec::with_capacity(states.len());
    let mut zeta = Vec::with_capacity(states.len());
    for s in &states {
        let (ei, yi, ui, xii, zi) = derived_signals(s, plant, config);
        e.push(ei);
        y_a.push(yi);
        u.push(ui);
        xi.push(xii);
        zeta.push(zi);
    }
    let integrator = match opts.solver {
        SolverKind::Rk4 { step } => format!("rk4(step={step})"),
        SolverKind::Rk45 { rtol, atol } => format!("rk45(rtol={rtol},atol={atol})"),
    };
    Ok(Trajectory {
        t,
        states,
        e,
        y_a,
        u,
        xi,
        zeta,
        meta: TrajectoryMeta {
            integrator,
            report_step: opts.report_step,
            seed: opts.seed,
            aborted,
        },
    })
}

/// Tail statistics: the sup of `|e|` over the final window plus a dyadic
/// sequence of disjoint windows marching toward the end of the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct TailStats {
    pub window: (f64, f64),
    pub sup_abs_e: f64,
    /// `(start, end, sup |e|)` for the dyadic windows.
    pub dyadic: Vec<(f64, f64, f64)>,
    pub decreasing: bool,
}

const DYADIC_WINDOWS: usize = 6;
// A window counts as "still decreasing" if it does not grow by more than 10%
// over its predecessor, or if it already sits below an absolute noise floor.
const DYADIC_SLACK: f64 = 1.1;
const DYADIC_FLOOR: f64 = 1e-8;

/// Computes [`TailStats`] over the final `tail_fraction` of a completed
/// trajectory.
pub fn tail_stats(traj: &Trajectory, tail_fraction: f64) -> Result<TailStats> {
    if traj.meta.aborted.is_some() {
        return Err(Error::Validation {
            field: "trajectory",
            reason: "tail statistics are invalid for an aborted (blow-up) run".into(),
        });
    }
    if !(0.0..1.0).contains(&tail_fraction) || tail_fraction == 0.0 {
        return Err(Error::Validation {
            field: "tail_fraction",
            reason: "must lie in (0, 1)".into(),
        });
    }
    let t0 = traj.t[0];
    let t_end = *traj.t.last().unwrap();
    let span = t_end - t0;
    let sup_over = |a: f64, b: f64| -> f64 {
        traj.t
            .iter()
            .zip(traj.e.iter())
            .filter(|(t, _)| **t >= a - 1e-12 && **t <= b + 1e-12)
            .map(|(_, e)| e.norm())
            .fold(0.0f64, f64::max)
    };
    let window = (t_end - tail_fraction * span, t_end);
    let sup_abs_e = sup_over(window.0, window.1);

    let mut dyadic = Vec::with_capacity(DYADIC_WINDOWS);
    for k in 1..=DYADIC_WINDOWS {
        let a = t0 + span * (1.0 - 0.5f64.powi(k as i32));
        let b = if k == DYADIC_WINDOWS {
            t_end
        } else {
            t0 + span * (1.0 - 0.5f64.powi(k as i32 + 1))
        };
        dyadic.push((a, b, sup_over(a, b)));
    }
    let decreasing = dyadic
        .windows(2)
        .all(|pair| pair[1].2 <= pair[0].2 * DYADIC_SLACK || pair[1].2 <= DYADIC_FLOOR);

    Ok(TailStats {
        window,
        sup_abs_e,
        dyadic,
        decreasing,
    })
}

/// Flattened states observed after `discard_time`: a finite sample of the
/// ω-limit set used to bound the mismatch-estimation region.
pub fn omega_limit_sample(traj: &Trajectory, discard_time: f64) -> Result<Vec<DVector<f64>>> {
    if traj.meta.aborted.is_some() {
        return Err(Error::Validation {
            field: "trajectory",
            reason: "ω-limit sampling needs a completed trajectory".into(),
        });
    }
    let cloud: Vec<DVector<f64>> = traj
        .t
        .iter()
        .zip(traj.states.iter())
        .filter(|(t, _)| **t >= discard_time)
        .map(|(_, s)| s.flatten())
        .collect();
    if cloud.is_empty() {
        return Err(Error::Validation {
            field: "discard_time",
            reason: format!(
                "no samples after t = {discard_time} (horizon {})",
                traj.t.last().unwrap()
            ),
        });
    }
    Ok(cloud)
}

/// The default working-box proxy for the attractor projection: the `(w, x)`
/// bounding box of the trajectory tail after `discard_time`, widened by 10%.
/// Suitable as the grid box for the steady-state certificate checks.
pub fn attractor_box(traj: &Trajectory, discard_time: f64) -> Result<Vec<(f64, f64)>> {
    let cloud = omega_limit_sample(traj, discard_time)?;
    let n_wx = traj.states[0].w.len() + traj.states[0].x.len();
    let wx: Vec<DVector<f64>> = cloud.iter().map(|p| p.rows(0, n_wx).into_owned()).collect();
    Ok(bounding_box(&wx, 0.1))
}

/// Componentwise bounding box of a point cloud, widened by `inflate`
/// (e.g. `0.1` for 10%).
pub fn bounding_box(points: &[DVector<f64>], inflate: f64) -> Vec<(f64, f64)> {
    if points.is_empty() {
        return Vec::new();
    }
    let dim = points[0].len();
    (0..dim)
        .map(|i| {
            let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[i])
                .fold(f64::NEG_INFINITY, f64::max);
            let center = 0.5 * (lo + hi);
            let half = (0.5 * (hi - lo)).max(1e-9) * (1.0 + inflate);
            (center - half, center + half)
        })
        .collect()
}

/// Maximum pairwise-coordinate extent of a cloud (diameter in the ∞-norm).
pub fn cloud_diameter(points: &[DVector<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let dim = points[0].len();
    (0..dim)
        .map(|i| {
            let lo = points.iter().map(|p| p[i]).fold(f64::INFINITY, f64::min);
            let hi = points
                .iter()
                .map(|p| p[i])
                .fold(f64::NEG_INFINITY, f64::max);
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// One integration plus its tail statistics and optional mismatch estimate.
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub tail: Option<TailStats>,
    pub mismatch: Option<MismatchReport>,
}

/// Convenience wrapper: integrate, then compute tail stats and (optionally)
/// the mismatch estimate on the same tail window.
pub fn run_closed_loop(
    plant: &Plant,
    config: &RegulatorConfig,
    initial: &ClosedLoopState,
    horizon: f64,
    opts: &SolverOpts,
    tail_fraction: f64,
    estimate_mismatch: bool,
) -> Result<RunOutcome> {
    let trajectory = integrate(plant, config, initial, horizon, opts)?;
    if trajectory.meta.aborted.is_some() {
        return Ok(RunOutcome {
            trajectory,
            tail: None,
            mismatch: None,
        });
    }
    let tail = Some(tail_stats(&trajectory, tail_fraction)?);
    let mismatch = if estimate_mismatch {
        Some(mismatch_along(&trajectory, plant, config, tail_fraction)?)
    } else {
        None
    };
    Ok(RunOutcome {
        trajectory,
        tail,
        mismatch,
    })
}

/// One sweep row: the grid point, its tail sup, mismatch estimate and
/// boundedness flag; failures are recorded per row without stopping the
/// sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    pub tail_sup_e: Option<f64>,
    pub delta_bar: Option<f64>,
    pub bounded: bool,
    pub error: Option<String>,
}

/// Runs `run` at every grid point (in parallel) and collects rows in grid
/// order.
pub fn sweep<F>(points: &[Vec<(String, f64)>], run: F) -> Vec<SweepRow>
where
    F: Fn(&[(String, f64)]) -> Result<RunOutcome> + Sync,
{
    points
        .par_iter()
        .map(|point| match run(point) {
            Ok(outcome) => SweepRow {
                params: point.clone(),
                tail_sup_e: outcome.tail.as_ref().map(|t| t.sup_abs_e),
                delta_bar: outcome.mismatch.as_ref().map(|m| m.delta_bar),
                bounded: outcome.trajectory.meta.aborted.is_none(),
                error: outcome
                    .trajectory
                    .meta
                    .aborted
                    .map(|a| format!("aborted at t = {} ({:?})", a.t, a.reason)),
            },
            Err(err) => SweepRow {
                params: point.clone(),
                tail_sup_e: None,
                delta_bar: None,
                bounded: false,
                error: Some(err.to_string()),
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn harmonic_rhs(y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![y[1], -y[0]]))
    }

    #[test]
    fn rk4_order_check() {
        // Error against the exact rotation must drop by about 2⁴ when the
        // step is halved; require at least 2³·0.8.
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let horizon: f64 = 5.0;
        let exact = DVector::from_vec(vec![horizon.cos(), -horizon.sin()]);
        let run = |step: f64| {
            let opts = SolverOpts {
                solver: SolverKind::Rk4 { step },
                report_step: horizon,
                ..Default::default()
            };
            let (_, states, aborted) =
                integrate_autonomous(harmonic_rhs, &y0, horizon, &opts).unwrap();
            assert!(aborted.is_none());
            (states.last().unwrap() - &exact).norm()
        };
        let coarse = run(0.02);
        let fine = run(0.01);
        assert!(coarse / fine >= 8.0 * 0.8, "ratio {}", coarse / fine);
    }

    #[test]
    fn rk45_matches_exact_rotation() {
        let y0 = DVector::from_vec(vec![1.0, 0.0]);
        let opts = SolverOpts {
            solver: SolverKind::Rk45 {
                rtol: 1e-10,
                atol: 1e-12,
            },
            report_step: 0.5,
            ..Default::default()
        };
        let (t, states, aborted) = integrate_autonomous(harmonic_rhs, &y0, 20.0, &opts).unwrap();
        assert!(aborted.is_none());
        for (tk, yk) in t.iter().zip(states.iter()) {
            assert_relative_eq!(yk[0], tk.cos(), epsilon = 1e-7);
        }
    }

    #[test]
    fn zero_field_constant_trajectory() {
        let rhs = |y: &DVector<f64>| Ok(DVector::zeros(y.len()));
        let y0 = DVector::from_vec(vec![2.0, -1.0]);
        let (_, states, aborted) =
            integrate_autonomous(rhs, &y0, 1.0, &SolverOpts::default()).unwrap();
        assert!(aborted.is_none());
        for s in states {
            assert_eq!(s, y0);
        }
    }

    #[test]
    fn blowup_truncates_with_flag() {
        // ẏ = y² from y(0) = 1 escapes at t = 1.
        let rhs = |y: &DVector<f64>| Ok(DVector::from_vec(vec![y[0] * y[0]]));
        let y0 = DVector::from_vec(vec![1.0]);
        let opts = SolverOpts {
            solver: SolverKind::Rk4 { step: 1e-4 },
            report_step: 0.05,
            blowup: 1e6,
            seed: 0,
        };
        let (t, states, aborted) = integrate_autonomous(rhs, &y0, 2.0, &opts).unwrap();
        let abort = aborted.expect("must abort");
        assert_eq!(abort.reason, AbortReason::BlowUp);
        assert!(abort.t < 1.05);
        assert_eq!(t.len(), states.len());
        assert!(states.iter().all(|s| s[0].is_finite()));
    }

    #[test]
    fn determinism_bit_identical() {
        let y0 = DVector::from_vec(vec![0.3, 0.7]);
        let opts = SolverOpts::default();
        let (_, a, _) = integrate_autonomous(harmonic_rhs, &y0, 3.0, &opts).unwrap();
        let (_, b, _) = integrate_autonomous(harmonic_rhs, &y0, 3.0, &opts).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert!(x
                .iter()
                .zip(y.iter())
                .all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    fn synthetic_trajectory(e_of_t: impl Fn(f64) -> f64, horizon: f64, step: f64) -> Trajectory {
        let n = (horizon / step).round() as usize;
        let t: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
        let states: Vec<ClosedLoopState> = t
            .iter()
            .map(|_| ClosedLoopState {
                w: DVector::zeros(1),
                x: DVector::zeros(1),
                eta: DVector::zeros(1),
            })
            .collect();
        let e: Vec<DVector<f64>> = t
            .iter()
            .map(|tk| DVector::from_vec(vec![e_of_t(*tk)]))
            .collect();
        let zero = |_: &f64| DVector::zeros(1);
        Trajectory {
            e,
            y_a: t.iter().map(zero).collect(),
            u: t.iter().map(zero).collect(),
            xi: t.iter().map(|_| DVector::zeros(0)).collect(),
            zeta: t.iter().map(zero).collect(),
            states,
            t,
            meta: TrajectoryMeta {
                integrator: "synthetic".into(),
                report_step: step,
                seed: 0,
                aborted: None,
            },
        }
    }

    #[test]
    fn tail_stats_analytic_decay() {
        let traj = synthetic_trajectory(|t| (-t).exp(), 10.0, 0.01);
        let stats = tail_stats(&traj, 0.2).unwrap();
        assert_relative_eq!(stats.sup_abs_e, (-8.0f64).exp(), epsilon = 1e-12);
        assert!(stats.decreasing);
    }

    #[test]
    fn tail_stats_detects_floor() {
        let traj = synthetic_trajectory(|t| 0.1 + (-t).exp(), 10.0, 0.01);
        let stats = tail_stats(&traj, 0.2).unwrap();
        assert_relative_eq!(stats.sup_abs_e, 0.1 + (-8.0f64).exp(), epsilon = 1e-12);
        assert!(stats.decreasing);
        // sups converge to the floor from above
        let last = stats.dyadic.last().unwrap().2;
        assert!((0.1..0.101).contains(&last));
    }

    #[test]
    fn tail_stats_flags_growth() {
        let traj = synthetic_trajectory(|t| 0.01 * t.exp(), 10.0, 0.01);
        let stats = tail_stats(&traj, 0.2).unwrap();
        assert!(!stats.decreasing);
    }

    #[test]
    fn subwindow_sup_dominated_by_window_sup() {
        let traj = synthetic_trajectory(|t| (t * 1.3).sin().abs() + 0.2, 10.0, 0.01);
        let wide = tail_stats(&traj, 0.5).unwrap();
        let narrow = tail_stats(&traj, 0.1).unwrap();
        assert!(narrow.sup_abs_e <= wide.sup_abs_e + 1e-15);
    }

    #[test]
    fn omega_cloud_shrinks_for_settling_signal() {
        let traj = synthetic_trajectory(|t| (-t).exp(), 40.0, 0.01);
        // constant synthetic states: diameter zero, cloud non-empty
        let cloud = omega_limit_sample(&traj, 30.0).unwrap();
        assert!(!cloud.is_empty());
        assert_eq!(cloud_diameter(&cloud), 0.0);
        assert!(omega_limit_sample(&traj, 100.0).is_err());
    }

    #[test]
    fn empty_sweep_grid_gives_empty_table() {
        let rows = sweep(&[], |_| Err(Error::Config("never called".into())));
        assert!(rows.is_empty());
    }

    #[test]
    fn sweep_preserves_grid_order_and_records_failures() {
        let points: Vec<Vec<(String, f64)>> =
            (0..6).map(|i| vec![("g".to_string(), i as f64)]).collect();
        let rows = sweep(&points, |p| {
            if p[0].1 == 3.0 {
                Err(Error::Config("synthetic failure".into()))
            } else {
                let traj = synthetic_trajectory(|t| (-t).exp(), 5.0, 0.01);
                let tail = tail_stats(&traj, 0.2).unwrap();
                Ok(RunOutcome {
                    trajectory: traj,
                    tail: Some(tail),
                    mismatch: None,
                })
            }
        });
        assert_eq!(rows.len(), 6);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.params[0].1, i as f64);
        }
        assert!(rows[3].error.is_some());
        assert!(rows[2].error.is_none());
        assert!(rows[2].tail_sup_e.is_some());
    }
}
