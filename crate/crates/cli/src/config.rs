//! Experiment configuration: one JSON document per run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use kahlerlab_core::ma_solver::SolverOptions;
use kahlerlab_core::positivity::SubvarietyRecord;
use kahlerlab_core::{make_torus, HermitianMatrix, ScalarField, Torus, TrigPoly};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::mat1::Mat1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub n: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    /// Lattice generators as columns of length `2n`; the unit lattice if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods: Option<Vec<Vec<f64>>>,
}

fn default_grid() -> usize {
    16
}

impl GeometrySpec {
    pub fn torus(&self) -> Result<Arc<Torus>, CliError> {
        Ok(make_torus(self.n, self.grid, self.periods.clone())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    /// Integer frequency in lattice coordinates, length `2n`.
    pub m: Vec<i32>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// A scalar field: `Σ amplitude·cos(2π m·s + phase)`, a MAT1 file, or a
/// seeded random band-limited sum.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FieldSpec {
    #[default]
    Zero,
    Modes {
        modes: Vec<ModeSpec>,
        #[serde(default)]
        constant: f64,
    },
    File {
        path: PathBuf,
    },
    Random {
        max_mode: i32,
        terms: usize,
        amplitude: f64,
    },
}

impl FieldSpec {
    /// Relative file paths resolve against `base` (the config's directory).
    pub fn build<R: Rng>(&self, torus: &Arc<Torus>, base: &Path, rng: &mut R) -> Result<ScalarField, CliError> {
        let dims = torus.real_dim();
        match self {
            FieldSpec::Zero => Ok(ScalarField::zero(torus)),
            FieldSpec::Modes { modes, constant } => {
                let mut p = TrigPoly::constant(dims, *constant);
                for m in modes {
                    if m.m.len() != dims {
                        return Err(CliError::Config(format!(
                            "mode {:?} needs {dims} components",
                            m.m
                        )));
                    }
                    p = p.add(&TrigPoly::phase_mode(dims, &m.m, m.amplitude, m.phase));
                }
                Ok(ScalarField::from_trig(torus, p)?)
            }
            FieldSpec::File { path } => {
                let path = if path.is_absolute() { path.clone() } else { base.join(path) };
                let mut f = std::fs::File::open(&path)
                    .map_err(|e| CliError::Config(format!("field file {}: {e}", path.display())))?;
                Mat1::read_from(&mut f)?.to_field(torus)
            }
            FieldSpec::Random {
                max_mode,
                terms,
                amplitude,
            } => Ok(ScalarField::from_trig(
                torus,
                kahlerlab_core::sampling::random_band_limited(dims, *max_mode, *terms, *amplitude, rng),
            )?),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveParams {
    #[serde(default)]
    pub f: FieldSpec,
    /// Constant reference metric; the identity if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<HermitianMatrix>,
    #[serde(default = "yes")]
    pub normalize_b: bool,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Also write the potential as `phi.mat1`.
    #[serde(default = "yes")]
    pub dump_phi: bool,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepParams {
    /// Check names to run; all of them if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    /// Random instances per check.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_samples() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Schedule {
    Explicit { epsilons: Vec<f64>, widths: Vec<f64> },
    Geometric { eps0: f64, width0: f64, levels: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrateParams {
    pub alpha: HermitianMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<HermitianMatrix>,
    /// Points in lattice (fractional) coordinates.
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub delta: f64,
    pub schedule: Schedule,
    pub annulus: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub dump_fields: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeParams {
    pub alpha: HermitianMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<HermitianMatrix>,
    pub epsilon: f64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
}

fn default_restarts() -> usize {
    32
}
fn default_step() -> f64 {
    1e-2
}
fn default_iterations() -> usize {
    500
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeshadriParams {
    pub records: Vec<SubvarietyRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Solve,
    Verify,
    Concentrate,
    Sweep,
    Probe,
    Seshadri,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum Experiment {
    Solve(SolveParams),
    Verify(#[serde(default)] SweepParams),
    Concentrate(ConcentrateParams),
    Sweep(#[serde(default)] SweepParams),
    Probe(ProbeParams),
    Seshadri(SeshadriParams),
}

impl Experiment {
    pub fn kind(&self) -> Kind {
        match self {
            Experiment::Solve(_) => Kind::Solve,
            Experiment::Verify(_) => Kind::Verify,
            Experiment::Concentrate(_) => Kind::Concentrate,
            Experiment::Sweep(_) => Kind::Sweep,
            Experiment::Probe(_) => Kind::Probe,
            Experiment::Seshadri(_) => Kind::Seshadri,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub seed: u64,
    /// Overrides solver and check tolerances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(flatten)]
    pub experiment: Experiment,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut v: serde_json::Value = serde_json::from_str(text)?;
        // kinds whose parameters all have defaults may omit `params`
        if let Some(obj) = v.as_object_mut() {
            obj.entry("params").or_insert_with(|| serde_json::json!({}));
        }
        let c: Self = serde_json::from_value(v)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config(format!("tolerance {t} must be positive")));
            }
        }
        if let Experiment::Sweep(p) | Experiment::Verify(p) = &self.experiment {
            if let Some(names) = &p.checks {
                for name in names {
                    if !crate::checks::CHECK_NAMES.contains(&name.as_str()) {
                        return Err(CliError::Config(format!(
                            "unknown check {name:?}; known: {:?}",
                            crate::checks::CHECK_NAMES
                        )));
                    }
                }
            }
        }
        self.geometry.torus().map(|_| ())
    }
}
