//! JSON run-configuration schema and its translation into plants, gains and
//! regulator state.
//!
//! The schema is strict: unknown keys are rejected everywhere, and
//! `parse → serialize → parse` is the identity on the normalized form.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assumption_checks::{FdCheck, SampleGrid};
use crate::error::{Error, Result};
use crate::gain_synthesis::{
    assemble_gains, build_g, build_l_back, build_l_minors, build_l_negativity, build_l_positivity,
    default_alpha_rows, default_cascade, synthesize_k, GainSet,
};
use crate::linalg::{binomial_descending, rows_to_matrix};
use crate::normal_form::Signature;
use crate::plant::{
    make_example_plant, make_linear_oracle_plant, ExamplePlantParams, LinearPlantSpec, Plant,
};
use crate::regulator::{ClosedLoopState, PhiMap, RegulatorConfig};
use crate::sim_engine::{SolverKind, SolverOpts};

pub type MatrixRows = Vec<Vec<f64>>;

/// Top-level run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub plant: PlantConfig,
    /// Optional signature cross-check against the plant's own signature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<SignatureConfig>,
    pub gains: GainsConfig,
    pub internal_model: InternalModelConfig,
    pub stabilizer: StabilizerConfig,
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckSpec>,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureConfig {
    pub p: Vec<usize>,
    #[serde(rename = "N")]
    pub chain: Vec<usize>,
    pub r_e: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantConfig {
    Example(ExamplePlantConfig),
    Linear(LinearPlantConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExamplePlantConfig {
    #[serde(default)]
    pub q: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_m")]
    pub m: f64,
}

fn default_alpha() -> f64 {
    5.0
}

fn default_m() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPlantConfig {
    pub p: Vec<usize>,
    #[serde(rename = "N")]
    pub chain: Vec<usize>,
    pub r_e: usize,
    pub exo_freqs: Vec<f64>,
    pub p_w: MatrixRows,
    pub p_x: MatrixRows,
    pub b0: MatrixRows,
    pub w_box: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainsConfig {
    /// Fully explicit 𝓛 and (optionally) K.
    Explicit(ExplicitGains),
    /// A stabilizer-matrix construction route; K is synthesized.
    Synthesis(SynthesisConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExplicitGains {
    pub l: MatrixRows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<MatrixRows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub l: LPathConfig,
}

/// The 𝓛 construction routes. `Example` uses the built-in plant's
/// `diag(α², α)/m`; `Minors` samples the plant's high-frequency gain over a
/// grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LPathConfig {
    Example,
    Matrix(MatrixRows),
    Minors {
        epsilon: f64,
        grid: SampleGrid,
    },
    Positivity {
        k: MatrixRows,
    },
    Negativity {
        m: MatrixRows,
        kappa: f64,
    },
    Back {
        k: MatrixRows,
        g_minus: Vec<f64>,
        g_plus: Vec<f64>,
        kappa: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalModelConfig {
    pub d: usize,
    pub phi: PhiConfig,
    pub h: HConfig,
    pub g: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhiConfig {
    Zero,
    Linear { coeffs: Vec<f64> },
    Builtin { name: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HConfig {
    Named(String),
    Coeffs(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilizerConfig {
    pub ell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<CascadeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_rows: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CascadeConfig {
    List(Vec<f64>),
    Geometric { k1: f64, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: f64,
    pub solver: SolverConfig,
    #[serde(default = "default_report_step")]
    pub report_step: f64,
    pub initial: InitialConfig,
    #[serde(default = "default_tail_fraction")]
    pub tail_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_blowup")]
    pub blowup: f64,
}

fn default_report_step() -> f64 {
    1e-2
}

fn default_tail_fraction() -> f64 {
    0.2
}

fn default_blowup() -> f64 {
    1e9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverConfig {
    Rk4 { step: f64 },
    Rk45 { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub w: Vec<f64>,
    pub x: Vec<f64>,
    pub eta: EtaConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EtaConfig {
    Named(String),
    Values(Vec<f64>),
}

/// One configured certification check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckSpec {
    Minors {
        epsilon: f64,
        grid: SampleGrid,
    },
    AssumptionPL {
        p: CandidateMatrix,
        grid: SampleGrid,
        #[serde(default)]
        fd: FdCheck,
    },
    AssumptionDee {
        m: CandidateMatrix,
        grid: SampleGrid,
        #[serde(default)]
        fd: FdCheck,
    },
    Contraction {
        m: MatrixRows,
        delta0: f64,
        grid: SampleGrid,
    },
    Back {
        k: MatrixRows,
        g_minus: Vec<f64>,
        g_plus: Vec<f64>,
        kappa: f64,
        probes: usize,
        grid: SampleGrid,
    },
    BlockdiagP {
        p: CandidateMatrix,
        split: usize,
        tol: f64,
        grid: SampleGrid,
    },
}

/// Candidate certificate matrices: a named builtin or a constant matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateMatrix {
    Builtin(String),
    Constant(MatrixRows),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    #[serde(default = "default_true")]
    pub trajectory: bool,
    #[serde(default = "default_true")]
    pub gains: bool,
    #[serde(default = "default_true")]
    pub mismatch: bool,
}

fn default_true() -> bool {
    true
}

impl RunConfig {
    /// Parses and schema-validates a config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Normalized serialization (pretty JSON with stable field order).
    pub fn to_normalized_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    fn validate(&self) -> Result<()> {
        if self.internal_model.d < 1 {
            return Err(Error::Validation {
                field: "internal_model.d",
                reason: "internal-model order must satisfy d >= 1".into(),
            });
        }
        if self.stabilizer.ell <= 0.0 {
            return Err(Error::Validation {
                field: "stabilizer.ell",
                reason: "must be positive".into(),
            });
        }
        if self.internal_model.g <= 0.0 {
            return Err(Error::Validation {
                field: "internal_model.g",
                reason: "must be positive".into(),
            });
        }
        if self.sim.horizon <= 0.0 {
            return Err(Error::Validation {
                field: "sim.horizon",
                reason: "must be positive".into(),
            });
        }
        if !(0.0..1.0).contains(&self.sim.tail_fraction) || self.sim.tail_fraction == 0.0 {
            return Err(Error::Validation {
                field: "sim.tail_fraction",
                reason: "must lie in (0, 1)".into(),
            });
        }
        if let EtaConfig::Named(name) = &self.sim.initial.eta {
            if name != "zero" {
                return Err(Error::Validation {
                    field: "sim.initial.eta",
                    reason: format!("unknown preset `{name}` (only \"zero\")"),
                });
            }
        }
        if let HConfig::Named(name) = &self.internal_model.h {
            if name != "binomial" {
                return Err(Error::Validation {
                    field: "internal_model.h",
                    reason: format!("unknown preset `{name}` (only \"binomial\")"),
                });
            }
        }
        Ok(())
    }
}

/// Everything a run needs, resolved from a [`RunConfig`].
pub struct RunSetup {
    pub plant: Plant,
    pub regulator: RegulatorConfig,
    pub initial: ClosedLoopState,
    pub horizon: f64,
    pub solver: SolverOpts,
    pub tail_fraction: f64,
}

/// Builds the plant selected by the config.
pub fn build_plant(cfg: &PlantConfig) -> Result<Plant> {
    match cfg {
        PlantConfig::Example(e) => {
            if e.q < 0.0 {
                return Err(Error::Config("example plant requires q >= 0".into()));
            }
            make_example_plant(ExamplePlantParams {
                q: e.q,
                alpha: e.alpha,
                m: e.m,
                ..Default::default()
            })
        }
        PlantConfig::Linear(l) => {
            let sig = Signature::new(l.p.clone(), l.chain.clone(), l.r_e)?;
            make_linear_oracle_plant(LinearPlantSpec {
                sig,
                exo_freqs: l.exo_freqs.clone(),
                p_w: rows_to_matrix(&l.p_w)?,
                p_x: rows_to_matrix(&l.p_x)?,
                b0: rows_to_matrix(&l.b0)?,
                w_box: l.w_box.clone(),
            })
        }
    }
}

fn resolve_l(cfg: &RunConfig, plant: &Plant) -> Result<DMatrix<f64>> {
    let path = match &cfg.gains {
        GainsConfig::Explicit(e) => return rows_to_matrix(&e.l),
        GainsConfig::Synthesis(s) => &s.l,
    };
    match path {
        LPathConfig::Example => match &cfg.plant {
            PlantConfig::Example(e) => Ok(ExamplePlantParams {
                q: e.q,
                alpha: e.alpha,
                m: e.m,
                ..Default::default()
            }
            .l_matrix()),
            _ => Err(Error::Config(
                "the `example` stabilizer route needs the example plant".into(),
            )),
        },
        LPathConfig::Matrix(rows) => rows_to_matrix(rows),
        LPathConfig::Minors { epsilon, grid } => {
            let samples: Result<Vec<DMatrix<f64>>> = grid
                .points()?
                .iter()
                .map(|p| {
                    let (w, x) = crate::assumption_checks::split_plant_point(plant, p)?;
                    Ok((plant.hf_gain)(&w, &x))
                })
                .collect();
            let (l, _c) = build_l_minors(&samples?, *epsilon)?;
            Ok(l)
        }
        LPathConfig::Positivity { k } => build_l_positivity(&rows_to_matrix(k)?),
        LPathConfig::Negativity { m, kappa } => build_l_negativity(&rows_to_matrix(m)?, *kappa),
        LPathConfig::Back {
            k,
            g_minus,
            g_plus,
            kappa,
        } => {
            let gm = DMatrix::from_diagonal(&DVector::from_vec(g_minus.clone()));
            let gp = DMatrix::from_diagonal(&DVector::from_vec(g_plus.clone()));
            Ok(build_l_back(&rows_to_matrix(k)?, &gm, &gp, *kappa)?.0)
        }
    }
}

/// Resolves the configured gain set for a plant.
pub fn build_gain_set(cfg: &RunConfig, plant: &Plant) -> Result<GainSet> {
    let sig = &plant.sig;
    let l = resolve_l(cfg, plant)?;

    let alpha_rows = match &cfg.stabilizer.alpha_rows {
        Some(rows) => rows.clone(),
        None => default_alpha_rows(sig),
    };
    let cascade = match &cfg.stabilizer.k {
        Some(CascadeConfig::List(list)) => list.clone(),
        Some(CascadeConfig::Geometric { k1, ratio }) => default_cascade(sig.r(), *k1, *ratio),
        None => default_cascade(sig.r(), 5.0, 2.0),
    };
    let k = match &cfg.gains {
        GainsConfig::Explicit(ExplicitGains { k: Some(rows), .. }) => rows_to_matrix(rows)?,
        _ => synthesize_k(sig, &alpha_rows, &cascade)?,
    };

    let d = cfg.internal_model.d;
    let h = match &cfg.internal_model.h {
        HConfig::Named(_) => binomial_descending(d),
        HConfig::Coeffs(c) => c.clone(),
    };
    let injection = build_g(&h, cfg.internal_model.g, d, sig.n_e())?;
    assemble_gains(
        sig,
        &l,
        &k,
        &injection,
        cfg.internal_model.g,
        cfg.stabilizer.ell,
        h,
        cascade,
        alpha_rows,
    )
}

/// Compiled-in nonlinear chain maps addressable from configs.
pub fn builtin_phi(name: &str, d: usize, n_e: usize) -> Result<PhiMap> {
    match name {
        // Saturated damping on the 4th chain state: φ(η) = −4·tanh(η₄),
        // globally Lipschitz with constant 4.
        "tanh4" => {
            if d < 4 || n_e != 1 {
                return Err(Error::Config(
                    "builtin phi `tanh4` needs d >= 4 and n_e = 1".into(),
                ));
            }
            Ok(PhiMap::Custom {
                name: "tanh4".into(),
                map: Arc::new(|eta: &DVector<f64>| DVector::from_vec(vec![-4.0 * eta[3].tanh()])),
                lipschitz: 4.0,
            })
        }
        other => Err(Error::Config(format!("unknown builtin phi `{other}`"))),
    }
}

fn resolve_phi(cfg: &InternalModelConfig, n_e: usize) -> Result<PhiMap> {
    match &cfg.phi {
        PhiConfig::Zero => Ok(PhiMap::Zero),
        PhiConfig::Linear { coeffs } => {
            if coeffs.len() != cfg.d * n_e {
                return Err(Error::Validation {
                    field: "internal_model.phi",
                    reason: format!(
                        "linear phi needs {} coefficients (d·n_e), got {}",
                        cfg.d * n_e,
                        coeffs.len()
                    ),
                });
            }
            Ok(PhiMap::Linear(DMatrix::from_row_slice(
                n_e,
                cfg.d * n_e,
                coeffs,
            )))
        }
        PhiConfig::Builtin { name } => builtin_phi(name, cfg.d, n_e),
    }
}

/// Resolves the full run setup: plant, gains, regulator, initial state and
/// solver options.
pub fn build_run_setup(cfg: &RunConfig) -> Result<RunSetup> {
    let plant = build_plant(&cfg.plant)?;
    plant.check_dims()?;
    if let Some(sc) = &cfg.signature {
        let declared = Signature::new(sc.p.clone(), sc.chain.clone(), sc.r_e)?;
        if declared != plant.sig {
            return Err(Error::Config(format!(
                "declared signature {:?}/{:?}/{} does not match the plant's {:?}/{:?}/{}",
                sc.p,
                sc.chain,
                sc.r_e,
                plant.sig.p(),
                plant.sig.chain_lengths(),
                plant.sig.r_e()
            )));
        }
    }
    let gains = build_gain_set(cfg, &plant)?;
    let phi = resolve_phi(&cfg.internal_model, plant.sig.n_e())?;
    let regulator = RegulatorConfig::new(cfg.internal_model.d, phi, gains)?;

    let eta0 = match &cfg.sim.initial.eta {
        EtaConfig::Named(_) => DVector::zeros(regulator.dim_eta()),
        EtaConfig::Values(v) => {
            if v.len() != regulator.dim_eta() {
                return Err(Error::Validation {
                    field: "sim.initial.eta",
                    reason: format!("expected {} entries, got {}", regulator.dim_eta(), v.len()),
                });
            }
            DVector::from_vec(v.clone())
        }
    };
    let initial = ClosedLoopState {
        w: DVector::from_vec(cfg.sim.initial.w.clone()),
        x: DVector::from_vec(cfg.sim.initial.x.clone()),
        eta: eta0,
    };
    if initial.w.len() != plant.n_w || initial.x.len() != plant.n_x {
        return Err(Error::Validation {
            field: "sim.initial",
            reason: format!(
                "initial (w, x) dims ({}, {}) do not match the plant ({}, {})",
                initial.w.len(),
                initial.x.len(),
                plant.n_w,
                plant.n_x
            ),
        });
    }

    let solver = SolverOpts {
        solver: match cfg.sim.solver {
            SolverConfig::Rk4 { step } => SolverKind::Rk4 { step },
            SolverConfig::Rk45 { rtol, atol } => SolverKind::Rk45 { rtol, atol },
        },
        report_step: cfg.sim.report_step,
        blowup: cfg.sim.blowup,
        seed: cfg.sim.seed,
    };

    Ok(RunSetup {
        plant,
        regulator,
        initial,
        horizon: cfg.sim.horizon,
        solver,
        tail_fraction: cfg.sim.tail_fraction,
    })
}

/// Resolves a candidate certificate matrix; builtins: `example` (the example
/// plant's 𝒫(w)).
pub fn resolve_candidate(c: &CandidateMatrix) -> Result<crate::plant::StateMatMap> {
    match c {
        CandidateMatrix::Builtin(name) => match name.as_str() {
            "example" => Ok(Arc::new(|w: &DVector<f64>, _x: &DVector<f64>| {
                crate::plant::example_p_matrix(w)
            })),
            other => Err(Error::Config(format!(
                "unknown builtin certificate matrix `{other}`"
            ))),
        },
        CandidateMatrix::Constant(rows) => {
            let m = rows_to_matrix(rows)?;
            Ok(Arc::new(move |_w: &DVector<f64>, _x: &DVector<f64>| {
                m.clone()
            }))
        }
    }
}
