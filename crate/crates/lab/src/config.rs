//! Experiment configuration. Every field has a default, so `{}` is a valid
//! config (the cat map with no generator).

use std::path::Path;

use livsic_core::circle_diffeo::DiffeoParams;
use livsic_core::cocycles::GeneratorSpec;
use livsic_core::conformal::{FiberMetric, SeedForm};
use livsic_core::fixtures;
use livsic_core::livsic::{FlowSolverParams, SolverParams};
use livsic_core::perturbed::{PerturbedToral, VectorFieldTerm};
use livsic_core::ToralAutomorphism;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Context, LabError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemSpec {
    /// `cat`, `conformal4` or `diagonal4`; ignored when `matrix` is given.
    pub fixture: String,
    pub matrix: Option<Vec<Vec<i64>>>,
    pub perturbation: Option<PerturbationSpec>,
}

impl Default for SystemSpec {
    fn default() -> Self {
        SystemSpec {
            fixture: "cat".into(),
            matrix: None,
            perturbation: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub epsilon: f64,
    pub terms: Vec<VectorFieldTerm>,
    #[serde(default = "default_cone_grid")]
    pub cone_grid: usize,
}

fn default_cone_grid() -> usize {
    64
}

impl SystemSpec {
    pub fn build(&self) -> Result<ToralAutomorphism> {
        match &self.matrix {
            Some(rows) => fixtures::from_rows(rows).ctx("system"),
            None => fixtures::by_name(&self.fixture).ok_or_else(|| {
                LabError::ConfigParse(format!("unknown fixture {:?}", self.fixture))
            }),
        }
    }

    pub fn build_perturbed(&self) -> Result<Option<PerturbedToral>> {
        let Some(p) = &self.perturbation else {
            return Ok(None);
        };
        let base = self.build()?;
        PerturbedToral::new(base, p.terms.clone(), p.epsilon, p.cone_grid)
            .ctx("perturbation")
            .map(Some)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitsOptions {
    pub n_max: u32,
    /// Largest number of points enumerated per period.
    pub cap: u64,
}

impl Default for OrbitsOptions {
    fn default() -> Self {
        OrbitsOptions {
            n_max: 6,
            cap: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CloseOptions {
    pub samples: usize,
    pub n_max: i64,
    /// Return gap `d(fⁿx, x)` of the generated near-returns is below this.
    pub gap: f64,
    pub eps0: f64,
}

impl Default for CloseOptions {
    fn default() -> Self {
        CloseOptions {
            samples: 100,
            n_max: 30,
            gap: 0.049,
            eps0: livsic_core::periodic::DEFAULT_EPS0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstructionOptions {
    pub n_max: u32,
    pub tol: f64,
    pub cap: u64,
}

impl Default for ObstructionOptions {
    fn default() -> Self {
        ObstructionOptions {
            n_max: 6,
            tol: livsic_core::livsic::DEFAULT_OBSTRUCTION_TOL,
            cap: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveOptions {
    /// Orbit half-lengths of a refinement ladder; empty for a single solve.
    pub ladder: Vec<usize>,
    /// Solve even when the periodic orbit obstruction fails.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowGeneratorKind {
    /// `X = Σ amp · basis` from the generator coefficients.
    Constant,
    /// The discrete generator spread over the fibre.
    #[default]
    Suspended,
    /// Flow coboundary of `ψ = exp(L)` with `L` the coefficient map.
    Coboundary,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowSolveOptions {
    pub kind: FlowGeneratorKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffSolveOptions {
    pub r: usize,
    pub kappa: f64,
    pub force: bool,
}

impl Default for DiffSolveOptions {
    fn default() -> Self {
        DiffSolveOptions {
            r: 3,
            kappa: 0.0,
            force: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistortionOptions {
    pub n_max: usize,
    /// Sample grid points per axis.
    pub res: usize,
    /// Periods enumerated for `C_per`.
    pub per_n_max: u32,
    pub metric: FiberMetric,
}

impl Default for DistortionOptions {
    fn default() -> Self {
        DistortionOptions {
            n_max: 40,
            res: 2,
            per_n_max: 3,
            metric: FiberMetric::Adapted,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConformalOptions {
    pub grid_res: usize,
    pub orbit_len: usize,
    pub seed_form: SeedForm,
    pub periodic_n_max: u32,
}

impl Default for ConformalOptions {
    fn default() -> Self {
        ConformalOptions {
            grid_res: 8,
            orbit_len: 300,
            seed_form: SeedForm::Eigen,
            periodic_n_max: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropOptions {
    pub samples: usize,
}

impl Default for PropOptions {
    fn default() -> Self {
        PropOptions { samples: 200 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemSpec,
    pub generator: Option<GeneratorSpec>,
    pub seed: u64,
    pub precision_bits: Option<u32>,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    pub diffeo: DiffeoParams,
    pub solver: SolverParams,
    pub flow: FlowSolverParams,
    pub orbits: OrbitsOptions,
    pub close: CloseOptions,
    pub obstruction: ObstructionOptions,
    pub solve: SolveOptions,
    pub flowsolve: FlowSolveOptions,
    pub diffsolve: DiffSolveOptions,
    pub distortion: DistortionOptions,
    pub conformal: ConformalOptions,
    pub proptest: PropOptions,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LabError::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }

    /// Applies command-line overrides and pushes the seed and precision into
    /// the solver parameters, so the echoed config alone reproduces a run.
    pub fn resolve(
        mut self,
        seed: Option<u64>,
        threads: Option<usize>,
        precision_bits: Option<u32>,
    ) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if threads.is_some() {
            self.threads = threads;
        }
        if precision_bits.is_some() {
            self.precision_bits = precision_bits;
        }
        self.solver.seed = self.seed;
        self.flow.seed = self.seed;
        if self.precision_bits.is_some() {
            self.solver.precision_bits = self.precision_bits;
        }
        self
    }

    pub fn generator(&self) -> Result<&GeneratorSpec> {
        self.generator
            .as_ref()
            .ok_or_else(|| LabError::ConfigParse("this command needs a generator".into()))
    }
}
