//! JSON run manifests and their translation into the objects a run needs.
//!
//! ```json
//! {
//!   "hamiltonian": {"spectrum": [[0.0, 2], [1.0, 1]]},
//!   "channel": "metropolis",
//!   "noise": {"pe": {"t": 6, "margin": 0.1}},
//!   "beta": 1.0,
//!   "samples": 1000,
//!   "seed": 7
//! }
//! ```
//!
//! Explicit stochastic matrices and Kraus operators act on the eigenbasis of
//! the Hamiltonian with eigenvalues sorted ascending.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cftp::{CftpConfig, Povm, DEFAULT_DEPTH_CAP, DEFAULT_MEASUREMENT_BUDGET};
use crate::channels::{self, QuantumChannel, StochasticMatrix};
use crate::linalg::CMat;
use crate::phase_estimation::{ConfusionModel, PeConfig, DEFAULT_MARGIN};
use crate::spectral::{self, Hamiltonian, SpectralCovering, SpectralDecomposition};
use crate::{Error, Result};

/// Largest dimension for which the full `d^2 x d^2` channel is materialized.
pub const MAX_SUPEROPERATOR_DIM: usize = 16;

/// A complex matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl ComplexMatrixSpec {
    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        if n == 0 || self.re.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("matrix rows must be non-empty and of equal length"));
        }
        if let Some(im) = &self.im {
            if im.len() != n || im.iter().any(|r| r.len() != cols) {
                return Err(Error::validation("imaginary part has a different shape"));
            }
        }
        Ok(CMat::from_fn(n, cols, |i, j| {
            Complex64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    Dense(ComplexMatrixSpec),
    /// `(energy, multiplicity)` pairs.
    Spectrum(Vec<(f64, usize)>),
    /// Path to a JSON file holding a `dense` or `spectrum` spec, relative to the manifest.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    /// Uniform-proposal Metropolis channel.
    #[default]
    Metropolis,
    /// Row-stochastic matrix on eigenstates, lifted to a channel.
    Stochastic(Vec<Vec<f64>>),
    Kraus(Vec<ComplexMatrixSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeSpec {
    pub t: u32,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlipSpec {
    pub flip: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ideal: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe: Option<PeSpec>,
    /// Replace the readout model with symmetric label flips.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi_override: Option<FlipSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PovmSpec {
    Eigenprojectors,
    Elements(Vec<ComplexMatrixSpec>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Pinsker,
    Stability,
    FaultyPe,
    Runtime,
    Phi,
}

impl ReportKind {
    pub const ALL: [ReportKind; 5] =
        [ReportKind::Pinsker, ReportKind::Stability, ReportKind::FaultyPe, ReportKind::Runtime, ReportKind::Phi];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Perturbation sizes for the stability and faulty-readout reports.
    #[serde(default)]
    pub eta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<HamiltonianSpec>,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_depth_cap")]
    pub depth_cap: usize,
    #[serde(default = "default_budget")]
    pub measurement_budget: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub povm: Option<PovmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covering_eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_tol: Option<f64>,
    /// Explicit chain for the classical sampler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<ReportKind>>,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default = "default_true")]
    pub prune: bool,
    #[serde(default)]
    pub reuse_successor: bool,
    /// Output path used when none is given on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_depth_cap() -> usize {
    DEFAULT_DEPTH_CAP
}

fn default_budget() -> u64 {
    DEFAULT_MEASUREMENT_BUDGET
}

fn default_true() -> bool {
    true
}

/// An error tied to a top-level manifest field.
#[derive(Debug, thiserror::Error)]
#[error("field `{field}`: {source}")]
pub struct FieldError {
    pub field: &'static str,
    #[source]
    pub source: Error,
}

trait AtField<T> {
    fn at(self, field: &'static str) -> Result<T, FieldError>;
}

impl<T> AtField<T> for Result<T> {
    fn at(self, field: &'static str) -> Result<T, FieldError> {
        self.map_err(|source| FieldError { field, source })
    }
}

fn invalid(field: &'static str, msg: impl Into<String>) -> FieldError {
    FieldError { field, source: Error::validation(msg) }
}

/// Everything a sampling run needs, derived from a manifest.
#[derive(Debug, Clone)]
pub struct Prepared {
    /// Decomposition of the Hamiltonian.
    pub sd: SpectralDecomposition,
    /// Decomposition with one level per sampled class.
    pub classes: SpectralDecomposition,
    pub covering: Option<SpectralCovering>,
    /// Chain on eigenstates, when it is available explicitly.
    pub state_chain: Option<StochasticMatrix>,
    /// State partition into sampled classes, indexed like `state_chain`.
    pub partition: Vec<Vec<usize>>,
    /// Lumped chain on classes; `None` if the channel is not lumpable.
    pub chain: Option<StochasticMatrix>,
    pub confusion: Option<ConfusionModel>,
    pub povm: Option<Povm>,
}

impl RunManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn config(&self) -> CftpConfig {
        CftpConfig {
            depth_cap: self.depth_cap,
            measurement_budget: self.measurement_budget,
            prune: self.prune,
            reuse_successor: self.reuse_successor,
        }
    }

    /// Field-level checks that need no linear algebra.
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.depth_cap == 0 {
            return Err(invalid("depth_cap", "depth cap must be positive"));
        }
        if let Some(eps) = self.covering_eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(invalid("covering_eps", "covering half-width must be positive"));
            }
        }
        match (self.noise.ideal, self.noise.pe) {
            (Some(true), Some(_)) => return Err(invalid("noise", "noise is both ideal and phase-estimated")),
            (Some(false), None) => return Err(invalid("noise", "non-ideal noise needs a `pe` model")),
            _ => {}
        }
        if let Some(flip) = self.noise.xi_override {
            if !(0.0..=1.0).contains(&flip.flip) {
                return Err(invalid("noise", "flip probability must lie in [0, 1]"));
            }
        }
        if self.sweep.eta.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("sweep", "sweep values must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Load and decompose the Hamiltonian; `base` resolves relative file paths.
    pub fn decomposition(&self, base: &Path) -> Result<SpectralDecomposition, FieldError> {
        let spec = self.hamiltonian.as_ref().ok_or_else(|| invalid("hamiltonian", "a Hamiltonian is required"))?;
        let h = load_hamiltonian(spec, base).at("hamiltonian")?;
        let tol = self.group_tol.unwrap_or_else(|| h.default_group_tol());
        spectral::decompose(&h, tol).at("hamiltonian")
    }

    /// Build the decomposition, covering, chains, readout model and POVM.
    pub fn prepare(&self, base: &Path) -> Result<Prepared, FieldError> {
        self.validate()?;
        let sd = self.decomposition(base)?;
        let covering = self.covering_eps.map(|eps| spectral::build_covering(&sd, eps)).transpose().at("covering_eps")?;
        let classes = covering.as_ref().map_or_else(|| sd.clone(), |c| sd.coarsen(c));
        let partition = class_partition(&sd, covering.as_ref());
        let class_sizes: Vec<usize> = partition.iter().map(Vec::len).collect();

        let (state_chain, chain) = match &self.channel {
            ChannelSpec::Metropolis => {
                let lumped = channels::metropolis_lumped(&classes, self.beta).at("channel")?;
                let states = if covering.is_none() { Some(channels::metropolis_chain(&sd, self.beta).at("channel")?) } else { None };
                (states, Some(lumped))
            }
            ChannelSpec::Stochastic(rows) => {
                let pi = StochasticMatrix::from_rows(rows).at("channel")?;
                if pi.dim() != sd.dim() {
                    return Err(invalid("channel", format!("chain has {} states, Hamiltonian has dimension {}", pi.dim(), sd.dim())));
                }
                let lumped = channels::lump(&pi, &partition, channels::DEFAULT_TOL).ok();
                (Some(pi), lumped)
            }
            ChannelSpec::Kraus(ops) => {
                let t = kraus_channel(ops).at("channel")?;
                if t.dim() != sd.dim() {
                    return Err(invalid("channel", "Kraus operators and Hamiltonian differ in dimension"));
                }
                let pi = channels::induced_transition_matrix(&t, &sd).at("channel")?;
                let lumped = channels::lump(&pi, &partition, channels::DEFAULT_TOL).ok();
                (Some(pi), lumped)
            }
        };

        let confusion = if let Some(flip) = self.noise.xi_override {
            Some(ConfusionModel::symmetric_flip(&class_sizes, flip.flip).at("noise")?)
        } else if let Some(pe) = self.noise.pe {
            let cov = covering.clone().unwrap_or_else(|| SpectralCovering::singletons(&sd));
            let cfg = PeConfig::new(&sd, pe.t, pe.margin).at("noise")?;
            Some(ConfusionModel::from_pe(&sd, &cov, &cfg).at("noise")?)
        } else {
            None
        };

        let povm = match &self.povm {
            None | Some(PovmSpec::Eigenprojectors) => None,
            Some(PovmSpec::Elements(elements)) => {
                let mats = elements.iter().map(ComplexMatrixSpec::to_matrix).collect::<Result<Vec<_>>>().at("povm")?;
                if mats.iter().any(|m| m.nrows() != sd.dim()) {
                    return Err(invalid("povm", "POVM elements and Hamiltonian differ in dimension"));
                }
                // elements are given in the eigenbasis; rotate into the Hamiltonian's frame
                let u = sd.basis();
                Some(Povm::new(mats.iter().map(|m| u * m * u.adjoint()).collect()).at("povm")?)
            }
        };

        Ok(Prepared { sd, classes, covering, state_chain, partition, chain, confusion, povm })
    }

    /// Chain for the classical sampler: the explicit `chain`, else the lumped channel chain.
    pub fn classical_chain(&self, base: &Path) -> Result<StochasticMatrix, FieldError> {
        if let Some(rows) = &self.chain {
            return StochasticMatrix::from_rows(rows).at("chain");
        }
        let prepared = self.prepare(base)?;
        prepared.chain.ok_or_else(|| invalid("channel", "channel is not lumpable"))
    }
}

/// States of every sampled class, in the eigenbasis order of `sd`.
pub fn class_partition(sd: &SpectralDecomposition, covering: Option<&SpectralCovering>) -> Vec<Vec<usize>> {
    let levels = sd.partition();
    match covering {
        None => levels,
        Some(cov) => cov.members().iter().map(|m| m.iter().flat_map(|&l| levels[l].iter().copied()).collect()).collect(),
    }
}

/// Kraus channel from eigenbasis-frame operators.
fn kraus_channel(ops: &[ComplexMatrixSpec]) -> Result<QuantumChannel> {
    let mats = ops.iter().map(ComplexMatrixSpec::to_matrix).collect::<Result<Vec<_>>>()?;
    if let Some(m) = mats.first() {
        if m.nrows() > MAX_SUPEROPERATOR_DIM {
            return Err(Error::validation(format!("Kraus channels are limited to dimension {MAX_SUPEROPERATOR_DIM}")));
        }
    }
    QuantumChannel::from_kraus(&mats)
}

fn load_hamiltonian(spec: &HamiltonianSpec, base: &Path) -> Result<Hamiltonian> {
    match spec {
        HamiltonianSpec::Dense(m) => Hamiltonian::dense(m.to_matrix()?),
        HamiltonianSpec::Spectrum(levels) => Hamiltonian::spectrum(levels.clone()),
        HamiltonianSpec::File(path) => {
            let path = base.join(path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::validation(format!("cannot read {}: {e}", path.display())))?;
            match serde_json::from_str::<HamiltonianSpec>(&text)? {
                HamiltonianSpec::File(_) => Err(Error::validation("Hamiltonian files cannot refer to other files")),
                inner => load_hamiltonian(&inner, base),
            }
        }
    }
}
