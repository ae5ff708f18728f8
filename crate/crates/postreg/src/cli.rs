//! Command implementations behind the `postreg` binary.
//!
//! Exit-code contract: `0` success, `2` configuration/validation error,
//! `3` blow-up detected during integration, `4` at least one check failed.
//! Output files are written atomically (temp file + rename) and all floats
//! carry 17 significant digits, so reruns with the same config and seed are
//! byte-identical.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::assumption_checks::{
    check_assumption_dee, check_assumption_p_l, check_back, check_blockdiag_p_implies_m,
    check_contraction, check_minors, hf_gain_fn, CheckReport,
};
use crate::config::{build_run_setup, resolve_candidate, CheckSpec, PlantConfig, RunConfig};
use crate::error::{Error, Result};
use crate::regulator::MismatchReport;
use crate::sim_engine::{run_closed_loop, sweep, RunOutcome, SweepRow, Trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

fn apply_overrides(cfg: &mut RunConfig, ov: &Overrides) {
    if let Some(out) = &ov.out {
        cfg.outputs.dir = out.to_string_lossy().into_owned();
    }
    if let Some(seed) = ov.seed {
        cfg.sim.seed = seed;
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn vector_header(prefix: &str, n: usize) -> String {
    (1..=n).map(|i| format!(",{prefix}{i}")).collect()
}

/// Renders a trajectory as CSV with the schema
/// `t,w1..,x1..,eta1..,e1..,ya1..,u1..`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let (n_w, n_x, n_eta) = match traj.states.first() {
        Some(s) => (s.w.len(), s.x.len(), s.eta.len()),
        None => (0, 0, 0),
    };
    let n_e = traj.e.first().map_or(0, |v| v.len());
    let n_ya = traj.y_a.first().map_or(0, |v| v.len());
    let n_u = traj.u.first().map_or(0, |v| v.len());
    out.push('t');
    out.push_str(&vector_header("w", n_w));
    out.push_str(&vector_header("x", n_x));
    out.push_str(&vector_header("eta", n_eta));
    out.push_str(&vector_header("e", n_e));
    out.push_str(&vector_header("ya", n_ya));
    out.push_str(&vector_header("u", n_u));
    out.push('\n');
    for k in 0..traj.t.len() {
        out.push_str(&fmt_f64(traj.t[k]));
        let state = &traj.states[k];
        for block in [
            &state.w,
            &state.x,
            &state.eta,
            &traj.e[k],
            &traj.y_a[k],
            &traj.u[k],
        ] {
            for v in block.iter() {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct MismatchSummary {
    delta_bar: f64,
    noise_floor: f64,
    at_noise_floor: bool,
    window: (f64, f64),
    grid_step: f64,
    stencil_width: usize,
}

impl From<&MismatchReport> for MismatchSummary {
    fn from(m: &MismatchReport) -> Self {
        Self {
            delta_bar: m.delta_bar,
            noise_floor: m.noise_floor,
            at_noise_floor: m.at_noise_floor(),
            window: m.window,
            grid_step: m.grid_step,
            stencil_width: m.stencil_width,
        }
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    plant: String,
    horizon: f64,
    seed: u64,
    integrator: String,
    aborted: Option<crate::sim_engine::AbortInfo>,
    tail: Option<&'a crate::sim_engine::TailStats>,
    mismatch: Option<MismatchSummary>,
    checks_passed: Option<bool>,
    exit_code: i32,
}

/// Serializable record of one executed check.
#[derive(Serialize)]
pub struct CheckRecord {
    pub kind: String,
    pub passed: bool,
    pub reports: Vec<CheckReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_range: Option<(f64, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes_agree: Option<bool>,
}

/// Executes every configured check against the resolved plant and gains.
pub fn run_checks(cfg: &RunConfig) -> Result<Vec<CheckRecord>> {
    let setup = build_run_setup(cfg)?;
    let plant = &setup.plant;
    let gains = &setup.regulator.gains;
    let mut records = Vec::with_capacity(cfg.checks.len());
    for spec in &cfg.checks {
        let record = match spec {
            CheckSpec::Minors { epsilon, grid } => {
                let report = check_minors(hf_gain_fn(plant), grid, *epsilon)?;
                CheckRecord {
                    kind: "minors".into(),
                    passed: report.passed,
                    reports: vec![report],
                    lambda_range: None,
                    probes_agree: None,
                }
            }
            CheckSpec::AssumptionPL { p, grid, fd } => {
                let p_fn = resolve_candidate(p)?;
                let rep = check_assumption_p_l(plant, &p_fn, &gains.l, grid, *fd)?;
                CheckRecord {
                    kind: "assumption_p_l".into(),
                    passed: rep.passed(),
                    lambda_range: Some((rep.lambda_min, rep.lambda_max)),
                    reports: vec![rep.point_a, rep.point_b, rep.point_c],
                    probes_agree: None,
                }
            }
            CheckSpec::AssumptionDee { m, grid, fd } => {
                let m_fn = resolve_candidate(m)?;
                let rep = check_assumption_dee(plant, &m_fn, gains, grid, *fd)?;
                CheckRecord {
                    kind: "assumption_dee".into(),
                    passed: rep.passed(),
                    reports: vec![rep.main, rep.positivity, rep.residual],
                    lambda_range: None,
                    probes_agree: None,
                }
            }
            CheckSpec::Contraction { m, delta0, grid } => {
                let m = crate::linalg::rows_to_matrix(m)?;
                let report = check_contraction(hf_gain_fn(plant), &m, *delta0, grid)?;
                CheckRecord {
                    kind: "contraction".into(),
                    passed: report.passed,
                    reports: vec![report],
                    lambda_range: None,
                    probes_agree: None,
                }
            }
            CheckSpec::Back {
                k,
                g_minus,
                g_plus,
                kappa,
                probes,
                grid,
            } => {
                let k = crate::linalg::rows_to_matrix(k)?;
                let gm = DMatrix::from_diagonal(&DVector::from_vec(g_minus.clone()));
                let gp = DMatrix::from_diagonal(&DVector::from_vec(g_plus.clone()));
                let chk = check_back(
                    hf_gain_fn(plant),
                    &k,
                    &gm,
                    &gp,
                    *kappa,
                    grid,
                    *probes,
                    cfg.sim.seed,
                )?;
                CheckRecord {
                    kind: "back".into(),
                    passed: chk.report.passed && chk.probes_agree,
                    probes_agree: Some(chk.probes_agree),
                    reports: vec![chk.report],
                    lambda_range: None,
                }
            }
            CheckSpec::BlockdiagP {
                p,
                split,
                tol,
                grid,
            } => {
                let p_fn = resolve_candidate(p)?;
                let out = check_blockdiag_p_implies_m(plant, &p_fn, *split, grid, *tol)?;
                CheckRecord {
                    kind: "blockdiag_p".into(),
                    passed: out.report.passed,
                    reports: vec![out.report],
                    lambda_range: None,
                    probes_agree: None,
                }
            }
        };
        records.push(record);
    }
    Ok(records)
}

fn print_check_summary(records: &[CheckRecord], quiet: bool) {
    if quiet {
        return;
    }
    for rec in records {
        for rep in &rec.reports {
            println!(
                "check {:<24} [{}] worst margin {:+.6e} over {} samples (threshold {})",
                rep.condition,
                if rep.passed { "pass" } else { "FAIL" },
                rep.worst_margin,
                rep.samples,
                rep.threshold
            );
        }
    }
}

fn run_config(
    cfg: &RunConfig,
    quiet: bool,
) -> Result<(
    i32,
    RunOutcome,
    Option<Vec<CheckRecord>>,
    crate::gain_synthesis::GainReport,
)> {
    let setup = build_run_setup(cfg)?;
    let gain_report = setup.regulator.gains.report();
    let checks = if cfg.checks.is_empty() {
        None
    } else {
        let records = run_checks(cfg)?;
        print_check_summary(&records, quiet);
        Some(records)
    };
    let outcome = run_closed_loop(
        &setup.plant,
        &setup.regulator,
        &setup.initial,
        setup.horizon,
        &setup.solver,
        setup.tail_fraction,
        cfg.outputs.mismatch,
    )?;
    let exit = if outcome.trajectory.meta.aborted.is_some() {
        EXIT_BLOWUP
    } else {
        EXIT_OK
    };
    Ok((exit, outcome, checks, gain_report))
}

fn write_run_outputs(
    cfg: &RunConfig,
    outcome: &RunOutcome,
    checks: Option<&Vec<CheckRecord>>,
    gain_report: &crate::gain_synthesis::GainReport,
    exit: i32,
) -> Result<()> {
    let dir = PathBuf::from(&cfg.outputs.dir);
    if cfg.outputs.trajectory {
        write_atomic(
            &dir.join("trajectory.csv"),
            &trajectory_csv(&outcome.trajectory),
        )?;
    }
    if cfg.outputs.gains {
        write_atomic(
            &dir.join("gains.json"),
            &serde_json::to_string_pretty(gain_report)?,
        )?;
    }
    if let Some(records) = checks {
        write_atomic(
            &dir.join("checks.json"),
            &serde_json::to_string_pretty(records)?,
        )?;
    }
    let summary = RunSummary {
        plant: match &cfg.plant {
            PlantConfig::Example(_) => "example".into(),
            PlantConfig::Linear(_) => "linear".into(),
        },
        horizon: cfg.sim.horizon,
        seed: cfg.sim.seed,
        integrator: outcome.trajectory.meta.integrator.clone(),
        aborted: outcome.trajectory.meta.aborted,
        tail: outcome.tail.as_ref(),
        mismatch: outcome.mismatch.as_ref().map(MismatchSummary::from),
        checks_passed: checks.map(|c| c.iter().all(|r| r.passed)),
        exit_code: exit,
    };
    write_atomic(
        &dir.join("summary.json"),
        &serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(())
}

/// `postreg run <config>`: integrate, write trajectory/summary/gain/check
/// artifacts, exit 0/2/3.
pub fn cmd_run(cfg_path: &Path, ov: &Overrides) -> i32 {
    let attempt = || -> Result<i32> {
        let mut cfg = RunConfig::load(cfg_path)?;
        apply_overrides(&mut cfg, ov);
        let (exit, outcome, checks, gain_report) = run_config(&cfg, ov.quiet)?;
        write_run_outputs(&cfg, &outcome, checks.as_ref(), &gain_report, exit)?;
        if !ov.quiet {
            match (&outcome.trajectory.meta.aborted, &outcome.tail) {
                (Some(a), _) => println!(
                    "run aborted at t = {} ({:?}); trajectory prefix written to {}",
                    a.t, a.reason, cfg.outputs.dir
                ),
                (None, Some(tail)) => {
                    println!(
                        "run complete: tail sup |e| = {:.6e} over [{:.1}, {:.1}] (decreasing: {})",
                        tail.sup_abs_e, tail.window.0, tail.window.1, tail.decreasing
                    );
                    if let Some(m) = &outcome.mismatch {
                        println!(
                            "mismatch estimate: delta_bar = {:.6e} (noise floor {:.2e})",
                            m.delta_bar, m.noise_floor
                        );
                    }
                }
                _ => {}
            }
        }
        Ok(exit)
    };
    finish(attempt())
}

/// Parses `--param name=v1,v2,…`.
pub fn parse_param_spec(spec: &str) -> Result<(String, Vec<f64>)> {
    let (name, values) = spec.split_once('=').ok_or(Error::Validation {
        field: "param",
        reason: "expected name=v1,v2,…".into(),
    })?;
    let name = name.trim().to_string();
    let values: std::result::Result<Vec<f64>, _> =
        values.split(',').map(|v| v.trim().parse::<f64>()).collect();
    let values = values.map_err(|e| Error::Validation {
        field: "param",
        reason: format!("bad value list: {e}"),
    })?;
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation {
            field: "param",
            reason: "value list is empty or non-finite".into(),
        });
    }
    Ok((name, values))
}

fn apply_param(cfg: &mut RunConfig, name: &str, value: f64) -> Result<()> {
    match name {
        "g" => cfg.internal_model.g = value,
        "ell" => cfg.stabilizer.ell = value,
        "d" => cfg.internal_model.d = value as usize,
        "k1" => {
            let ratio = match &cfg.stabilizer.k {
                Some(crate::config::CascadeConfig::Geometric { ratio, .. }) => *ratio,
                _ => 2.0,
            };
            cfg.stabilizer.k = Some(crate::config::CascadeConfig::Geometric { k1: value, ratio });
        }
        "horizon" => cfg.sim.horizon = value,
        "seed" => cfg.sim.seed = value as u64,
        "q" | "alpha" | "m" => match &mut cfg.plant {
            PlantConfig::Example(e) => match name {
                "q" => e.q = value,
                "alpha" => e.alpha = value,
                _ => e.m = value,
            },
            PlantConfig::Linear(_) => {
                return Err(Error::Validation {
                    field: "param",
                    reason: format!("`{name}` only applies to the example plant"),
                })
            }
        },
        other => {
            return Err(Error::Validation {
                field: "param",
                reason: format!(
                    "unknown sweep parameter `{other}` (supported: g, ell, d, k1, q, alpha, m, horizon, seed)"
                ),
            })
        }
    }
    Ok(())
}

fn param_dir_name(name: &str, value: f64) -> String {
    format!("run_{name}={value}")
}

/// Renders the sweep table CSV: `param,tail_sup_e,delta_bar,bounded_flag`.
pub fn sweep_csv(name: &str, rows: &[SweepRow]) -> String {
    let mut out = format!("{name},tail_sup_e,delta_bar,bounded_flag\n");
    for row in rows {
        let v = row.params[0].1;
        let tail = row.tail_sup_e.map(fmt_f64).unwrap_or_default();
        let delta = row.delta_bar.map(fmt_f64).unwrap_or_default();
        let _ = writeln!(out, "{v},{tail},{delta},{}", u8::from(row.bounded));
    }
    out
}

/// `postreg sweep <config> --param name=v1,v2,…`.
pub fn cmd_sweep(cfg_path: &Path, param: &str, trajectories: bool, ov: &Overrides) -> i32 {
    let attempt = || -> Result<i32> {
        let mut cfg = RunConfig::load(cfg_path)?;
        apply_overrides(&mut cfg, ov);
        let (name, values) = parse_param_spec(param)?;
        // Every grid point must at least produce a well-formed config.
        for v in &values {
            let mut probe = cfg.clone();
            apply_param(&mut probe, &name, *v)?;
        }
        let points: Vec<Vec<(String, f64)>> =
            values.iter().map(|v| vec![(name.clone(), *v)]).collect();
        let out_dir = PathBuf::from(&cfg.outputs.dir);

        let runner = |point: &[(String, f64)]| -> Result<RunOutcome> {
            let mut row_cfg = cfg.clone();
            let (pname, pval) = &point[0];
            apply_param(&mut row_cfg, pname, *pval)?;
            let setup = build_run_setup(&row_cfg)?;
            let outcome = run_closed_loop(
                &setup.plant,
                &setup.regulator,
                &setup.initial,
                setup.horizon,
                &setup.solver,
                setup.tail_fraction,
                row_cfg.outputs.mismatch,
            )?;
            if trajectories {
                let dir = out_dir.join(param_dir_name(pname, *pval));
                write_atomic(
                    &dir.join("trajectory.csv"),
                    &trajectory_csv(&outcome.trajectory),
                )?;
            }
            Ok(outcome)
        };

        let rows = match sweep_pool()? {
            Some(pool) => pool.install(|| sweep(&points, runner)),
            None => sweep(&points, runner),
        };

        write_atomic(&out_dir.join("sweep.csv"), &sweep_csv(&name, &rows))?;
        if !ov.quiet {
            for row in &rows {
                println!(
                    "{} = {:<8} tail sup |e| = {:<12} bounded = {}{}",
                    name,
                    row.params[0].1,
                    row.tail_sup_e
                        .map(|v| format!("{v:.4e}"))
                        .unwrap_or_else(|| "-".into()),
                    row.bounded,
                    row.error
                        .as_ref()
                        .map(|e| format!("  ({e})"))
                        .unwrap_or_default()
                );
            }
        }
        Ok(EXIT_OK)
    };
    finish(attempt())
}

fn sweep_pool() -> Result<Option<rayon::ThreadPool>> {
    match std::env::var("POSTREG_THREADS") {
        Ok(v) => {
            let n: usize = v.parse().map_err(|_| {
                Error::Config(format!(
                    "POSTREG_THREADS must be a positive integer, got `{v}`"
                ))
            })?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("cannot build sweep pool: {e}")))?;
            Ok(Some(pool))
        }
        Err(_) => Ok(None),
    }
}

/// `postreg check <config>`: run the configured certification checks.
pub fn cmd_check(cfg_path: &Path, ov: &Overrides) -> i32 {
    let attempt = || -> Result<i32> {
        let mut cfg = RunConfig::load(cfg_path)?;
        apply_overrides(&mut cfg, ov);
        if cfg.checks.is_empty() {
            return Err(Error::Config("config declares no checks".into()));
        }
        let records = run_checks(&cfg)?;
        print_check_summary(&records, ov.quiet);
        let dir = PathBuf::from(&cfg.outputs.dir);
        write_atomic(
            &dir.join("checks.json"),
            &serde_json::to_string_pretty(&records)?,
        )?;
        let all_passed = records.iter().all(|r| r.passed);
        Ok(if all_passed {
            EXIT_OK
        } else {
            EXIT_CHECK_FAILED
        })
    };
    finish(attempt())
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        rows.push(
            row.map_err(|e| Error::Config(format!("bad CSV row in {}: {e}", path.display())))?,
        );
    }
    Ok((header, rows))
}

fn columns_with_prefix(header: &[String], prefix: &str) -> Vec<usize> {
    header
        .iter()
        .enumerate()
        .filter(|(_, h)| {
            h.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
        })
        .map(|(i, _)| i)
        .collect()
}

/// `postreg plotdata <run_dir>`: emit the figure CSVs from run artifacts.
pub fn cmd_plotdata(run_dir: &Path, quiet: bool) -> i32 {
    let attempt = || -> Result<i32> {
        let traj_path = run_dir.join("trajectory.csv");
        let sweep_path = run_dir.join("sweep.csv");
        let mut wrote = false;

        if traj_path.exists() {
            let (header, rows) = read_csv(&traj_path)?;
            let e_cols = columns_with_prefix(&header, "e");
            let ya_cols = columns_with_prefix(&header, "ya");
            if e_cols.is_empty() {
                return Err(Error::Config("trajectory.csv has no error columns".into()));
            }
            let mut left = if e_cols.len() == 1 {
                "t,e\n".to_string()
            } else {
                format!("t{}\n", vector_header("e", e_cols.len()))
            };
            for row in &rows {
                left.push_str(&fmt_f64(row[0]));
                for c in &e_cols {
                    left.push(',');
                    left.push_str(&fmt_f64(row[*c]));
                }
                left.push('\n');
            }
            write_atomic(&run_dir.join("fig1_left.csv"), &left)?;

            let mut right = format!("t{}\n", vector_header("ya", ya_cols.len()));
            for row in &rows {
                right.push_str(&fmt_f64(row[0]));
                for c in &ya_cols {
                    right.push(',');
                    right.push_str(&fmt_f64(row[*c]));
                }
                right.push('\n');
            }
            write_atomic(&run_dir.join("fig1_right.csv"), &right)?;
            wrote = true;
            if !quiet {
                println!("wrote fig1_left.csv, fig1_right.csv");
            }
        }

        if sweep_path.exists() {
            let (header, rows) = read_csv(&sweep_path)?;
            let name = header
                .first()
                .cloned()
                .ok_or_else(|| Error::Config("sweep.csv has no parameter column".into()))?;
            let mut t_ref: Option<Vec<f64>> = None;
            let mut series: Vec<(String, Vec<f64>)> = Vec::new();
            for row in &rows {
                let value = row[0];
                let run_traj = run_dir
                    .join(param_dir_name(&name, value))
                    .join("trajectory.csv");
                if !run_traj.exists() {
                    return Err(Error::Config(format!(
                        "missing per-run trajectory {}",
                        run_traj.display()
                    )));
                }
                let (h, r) = read_csv(&run_traj)?;
                let e_cols = columns_with_prefix(&h, "e");
                let e0 = *e_cols.first().ok_or_else(|| {
                    Error::Config("per-run trajectory has no error column".into())
                })?;
                let t: Vec<f64> = r.iter().map(|row| row[0]).collect();
                match &t_ref {
                    None => t_ref = Some(t),
                    Some(prev) => {
                        if prev.len() != t.len() {
                            return Err(Error::Config(
                                "per-run trajectories have mismatched grids".into(),
                            ));
                        }
                    }
                }
                series.push((
                    format!("e_{name}{value}"),
                    r.iter().map(|row| row[e0]).collect(),
                ));
            }
            let t = t_ref.ok_or_else(|| Error::Config("sweep.csv has no rows".into()))?;
            let mut fig2 = String::from("t");
            for (label, _) in &series {
                fig2.push(',');
                fig2.push_str(label);
            }
            fig2.push('\n');
            for (i, tv) in t.iter().enumerate() {
                fig2.push_str(&fmt_f64(*tv));
                for (_, col) in &series {
                    fig2.push(',');
                    fig2.push_str(&fmt_f64(col[i]));
                }
                fig2.push('\n');
            }
            write_atomic(&run_dir.join("fig2.csv"), &fig2)?;
            wrote = true;
            if !quiet {
                println!("wrote fig2.csv ({} curves)", series.len());
            }
        }

        if !wrote {
            return Err(Error::Config(format!(
                "no run artifacts (trajectory.csv or sweep.csv) in {}",
                run_dir.display()
            )));
        }
        Ok(EXIT_OK)
    };
    finish(attempt())
}

fn finish(outcome: Result<i32>) -> i32 {
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_VALIDATION
        }
    }
}
