//! Voter coupling-from-the-past engines.
//!
//! [`classical_voter_cftp`] is the textbook column-by-column procedure for a
//! chain whose successor function can be queried at any state.
//! [`quantum_voter_cftp`] drives the same coalescence argument from a
//! [`MeasurementOracle`] that can only prepare the maximally mixed state, so
//! the state whose successor gets recorded is itself random. Transitions are
//! attached to a per-row frontier of the label graph and labels propagate back
//! along the recorded edges; the first constant column certifies a sample.

use std::collections::VecDeque;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::StochasticMatrix;
use crate::linalg::{self, CMat};
use crate::phase_estimation::ConfusionModel;
use crate::spectral::SpectralDecomposition;
use crate::{Error, Result};

pub const DEFAULT_DEPTH_CAP: usize = 1_000_000;
pub const DEFAULT_MEASUREMENT_BUDGET: u64 = 1_000_000_000;

const DYNAMICS_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const POVM_STREAM: u64 = 2;

/// Seeded generator for one of the independent random streams of a run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn weighted(row: &[f64]) -> Result<WeightedIndex<f64>> {
    WeightedIndex::new(row).map_err(|e| Error::validation(format!("bad probability row {row:?}: {e}")))
}

/// Outcome of one phase-estimation readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    /// Label recorded in the graph.
    pub label: usize,
    /// Energy class the system is actually in after the readout.
    pub class: usize,
}

/// Source of measured transitions.
pub trait MeasurementOracle {
    fn num_labels(&self) -> usize;

    /// Prepare the maximally mixed state and read out its energy label.
    fn prepare(&mut self) -> Observation;

    /// Apply the channel to the post-measurement state of `from` and read out again.
    fn evolve(&mut self, from: &Observation) -> Observation;
}

/// Exact classical simulation of the quantum measurement process.
///
/// True classes are drawn from `q(i) = |S_i| / d` and the lumped chain; with a
/// confusion model every readout is re-labelled through `Xi'`. Label noise uses
/// its own random stream, so an identity confusion model reproduces the ideal
/// trace exactly.
#[derive(Debug, Clone)]
pub struct SimulatedOracle {
    initial: WeightedIndex<f64>,
    successor: Vec<WeightedIndex<f64>>,
    emission: Option<Vec<WeightedIndex<f64>>>,
    dynamics: ChaCha8Rng,
    noise: ChaCha8Rng,
}

impl SimulatedOracle {
    fn emit(&mut self, class: usize) -> Observation {
        let label = match &self.emission {
            Some(rows) => rows[class].sample(&mut self.noise),
            None => class,
        };
        Observation { label, class }
    }
}

impl MeasurementOracle for SimulatedOracle {
    fn num_labels(&self) -> usize {
        self.successor.len()
    }

    fn prepare(&mut self) -> Observation {
        let class = self.initial.sample(&mut self.dynamics);
        self.emit(class)
    }

    fn evolve(&mut self, from: &Observation) -> Observation {
        let class = self.successor[from.class].sample(&mut self.dynamics);
        self.emit(class)
    }
}

/// Oracle for the lumped chain `chain` over classes of sizes `class_sizes`.
///
/// Conditioned on a label `i`, the true class is distributed as `Xi(i, .)`, so
/// observed labels follow `Xi * chain * Xi'`.
pub fn build_oracle(
    class_sizes: &[usize],
    chain: &StochasticMatrix,
    confusion: Option<&ConfusionModel>,
    seed: u64,
) -> Result<SimulatedOracle> {
    let k = class_sizes.len();
    if chain.dim() != k {
        return Err(Error::validation(format!("chain has {} states but there are {k} classes", chain.dim())));
    }
    if let Some(c) = confusion {
        if c.num_labels() != k {
            return Err(Error::validation("confusion model size differs from the number of classes"));
        }
    }
    let q: Vec<f64> = class_sizes.iter().map(|&s| s as f64).collect();
    Ok(SimulatedOracle {
        initial: weighted(&q)?,
        successor: chain.rows().iter().map(|r| weighted(r)).collect::<Result<_>>()?,
        emission: confusion.map(|c| c.forward.rows().iter().map(|r| weighted(r)).collect::<Result<_>>()).transpose()?,
        dynamics: stream_rng(seed, DYNAMICS_STREAM),
        noise: stream_rng(seed, NOISE_STREAM),
    })
}

/// A POVM on the system register.
#[derive(Debug, Clone)]
pub struct Povm {
    elements: Vec<CMat>,
}

impl Povm {
    pub fn new(elements: Vec<CMat>) -> Result<Self> {
        let d = elements.first().map(|f| f.nrows()).ok_or_else(|| Error::validation("POVM has no elements"))?;
        let mut total = CMat::zeros(d, d);
        for (m, f) in elements.iter().enumerate() {
            if f.nrows() != d || f.ncols() != d {
                return Err(Error::validation(format!("POVM element {m} is not {d} x {d}")));
            }
            if linalg::hermitian_deviation(f) > 1e-9 {
                return Err(Error::validation(format!("POVM element {m} is not Hermitian")));
            }
            let (vals, _) = linalg::hermitian_eigh(f);
            if vals[0] < -1e-10 {
                return Err(Error::validation(format!("POVM element {m} has eigenvalue {}", vals[0])));
            }
            total += f;
        }
        if linalg::max_abs(&(total - CMat::identity(d, d))) > 1e-9 {
            return Err(Error::validation("POVM elements do not sum to the identity"));
        }
        Ok(Povm { elements })
    }

    /// The eigenprojectors of `sd`; outcome `j` means energy class `j`.
    pub fn eigenprojectors(sd: &SpectralDecomposition) -> Self {
        Povm { elements: sd.levels().iter().map(|l| l.projector.clone()).collect() }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[CMat] {
        &self.elements
    }

    /// `tr(F_m P_j) / |S_j|` for every outcome `m`.
    pub fn outcome_probabilities(&self, class: usize, sd: &SpectralDecomposition) -> Vec<f64> {
        let level = &sd.levels()[class];
        self.elements
            .iter()
            .map(|f| (linalg::trace(&(f * &level.projector)).re / level.multiplicity as f64).max(0.0))
            .collect()
    }
}

/// Measure `povm` on `P_j / |S_j|`.
pub fn povm_measure<R: Rng + ?Sized>(class: usize, povm: &Povm, sd: &SpectralDecomposition, rng: &mut R) -> Result<usize> {
    if class >= sd.num_levels() {
        return Err(Error::validation(format!("class {class} out of range")));
    }
    Ok(weighted(&povm.outcome_probabilities(class, sd))?.sample(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CftpConfig {
    /// Abort once any row of the graph would grow deeper than this many columns.
    pub depth_cap: usize,
    /// Abort after this many state preparations.
    pub measurement_budget: u64,
    /// Keep only the most recent complete column and everything below it.
    pub prune: bool,
    /// Also realize pending samples from the post-transition state.
    pub reuse_successor: bool,
}

impl Default for CftpConfig {
    fn default() -> Self {
        CftpConfig {
            depth_cap: DEFAULT_DEPTH_CAP,
            measurement_budget: DEFAULT_MEASUREMENT_BUDGET,
            prune: true,
            reuse_successor: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    /// State preparations followed by a phase-estimation readout.
    pub measurements: u64,
    /// Channel applications, i.e. transitions fed to the graph.
    pub transitions: u64,
    pub columns_completed: u64,
    /// Deepest column touched by any certification round.
    pub max_depth: usize,
    /// Depth of the constant column behind every certification.
    pub sample_depths: Vec<usize>,
    /// Measurements spent until the first certification.
    pub first_certification_measurements: Option<u64>,
    /// Largest number of graph vertices held at once.
    pub peak_vertices: usize,
}

#[derive(Debug, Clone, Default)]
struct Column {
    /// 0 = unlabeled, otherwise class + 1
    labels: Vec<u32>,
    /// target row in the next shallower column
    edge: Vec<Option<u32>>,
    /// rows of the next deeper column pointing here
    incoming: Vec<Vec<u32>>,
}

impl Column {
    fn empty(k: usize) -> Self {
        Column { labels: vec![0; k], edge: vec![None; k], incoming: vec![Vec::new(); k] }
    }

    fn identity(k: usize) -> Self {
        Column { labels: (1..=k as u32).collect(), ..Column::empty(k) }
    }
}

/// Labelled voter-CFTP graph over `{0, -1, -2, ...} x [k]`.
///
/// Column depth `c` holds the vertices `(-c, i)`. Edges of a row are always
/// added at its frontier, so the edged vertices of every row form a
/// contiguous block below column 0 and every column shallower than the
/// smallest frontier is complete.
#[derive(Debug, Clone)]
pub struct CftpGraph {
    k: usize,
    columns: VecDeque<Column>,
    /// depth of `columns[0]`
    base: usize,
    frontier: Vec<usize>,
    complete: usize,
    prune: bool,
}

/// Result of feeding one transition to the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphEvent {
    Pending,
    ColumnCompleted { depth: usize },
    Certified { label: usize, depth: usize },
}

impl CftpGraph {
    pub fn new(k: usize, prune: bool) -> Self {
        CftpGraph {
            k,
            columns: VecDeque::from([Column::identity(k)]),
            base: 0,
            frontier: vec![1; k],
            complete: 0,
            prune,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.k
    }

    /// Depth of the next vertex of `row` that has no edge yet.
    pub fn frontier(&self, row: usize) -> usize {
        self.frontier[row]
    }

    /// Deepest column in which some vertex has an edge.
    pub fn depth(&self) -> usize {
        self.frontier.iter().max().map_or(0, |f| f - 1)
    }

    /// Deepest complete column.
    pub fn complete_depth(&self) -> usize {
        self.complete
    }

    fn column(&self, depth: usize) -> Option<&Column> {
        depth.checked_sub(self.base).and_then(|c| self.columns.get(c))
    }

    fn column_mut(&mut self, depth: usize) -> &mut Column {
        &mut self.columns[depth - self.base]
    }

    /// Label of vertex `(-depth, row)`: `None` if unlabeled or pruned away.
    pub fn label(&self, depth: usize, row: usize) -> Option<usize> {
        self.column(depth).and_then(|c| match c.labels[row] {
            0 => None,
            l => Some(l as usize - 1),
        })
    }

    pub fn stored_vertices(&self) -> usize {
        self.columns.len() * self.k
    }

    /// Retained column depths, shallowest first.
    pub fn retained_depths(&self) -> std::ops::Range<usize> {
        self.base..self.base + self.columns.len()
    }

    /// Number of unlabeled vertices in a retained column.
    pub fn unlabeled(&self, depth: usize) -> Option<usize> {
        self.column(depth).map(|c| c.labels.iter().filter(|&&l| l == 0).count())
    }

    /// True iff the graph equals its initial state: identity labels in column 0 and nothing else.
    pub fn is_initial(&self) -> bool {
        self.base == 0
            && self.columns.len() == 1
            && self.frontier.iter().all(|&f| f == 1)
            && self.columns[0].labels.iter().enumerate().all(|(i, &l)| l as usize == i + 1)
            && self.columns[0].incoming.iter().all(Vec::is_empty)
    }

    /// Every labelled vertex with an edge carries the label of its edge target.
    pub fn is_consistent(&self) -> bool {
        for depth in self.retained_depths().skip(1) {
            let col = self.column(depth).unwrap();
            for row in 0..self.k {
                if let (l @ 1.., Some(target)) = (col.labels[row], col.edge[row]) {
                    match self.column(depth - 1) {
                        Some(up) if up.labels[target as usize] != l => return false,
                        _ => {}
                    }
                }
            }
        }
        true
    }

    fn reset(&mut self) {
        *self = CftpGraph::new(self.k, self.prune);
    }

    /// Record a measured transition `row -> target` at the frontier of `row`.
    pub fn add_transition(&mut self, row: usize, target: usize) -> GraphEvent {
        let depth = self.frontier[row];
        while self.base + self.columns.len() <= depth {
            self.columns.push_back(Column::empty(self.k));
        }
        self.column_mut(depth).edge[row] = Some(target as u32);
        self.column_mut(depth - 1).incoming[target].push(row as u32);
        self.frontier[row] += 1;

        let label = self.column(depth - 1).map_or(0, |c| c.labels[target]);
        if label != 0 {
            self.propagate(depth, row, label);
        }

        let complete = self.frontier.iter().min().copied().unwrap_or(1) - 1;
        if complete <= self.complete {
            return GraphEvent::Pending;
        }
        self.complete = complete;
        let col = self.column(complete).expect("complete column is retained");
        debug_assert!(col.labels.iter().all(|&l| l != 0));
        let first = col.labels[0];
        if col.labels.iter().all(|&l| l == first) {
            self.reset();
            return GraphEvent::Certified { label: first as usize - 1, depth: complete };
        }
        if self.prune {
            while self.base < complete {
                self.columns.pop_front();
                self.base += 1;
            }
        }
        GraphEvent::ColumnCompleted { depth: complete }
    }

    /// Label `(depth, row)` and every vertex with a path into it.
    fn propagate(&mut self, depth: usize, row: usize, label: u32) {
        let mut stack = vec![(depth, row)];
        while let Some((d, r)) = stack.pop() {
            self.column_mut(d).labels[r] = label;
            let deeper = d + 1;
            if deeper >= self.base + self.columns.len() {
                continue;
            }
            let sources = self.column_mut(d).incoming[r].clone();
            for src in sources {
                if self.column(deeper).unwrap().labels[src as usize] == 0 {
                    stack.push((deeper, src as usize));
                }
            }
        }
    }
}

/// Samples and statistics of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub samples: Vec<usize>,
    /// Certified class labels in certification order.
    pub certified: Vec<usize>,
    pub stats: RunStats,
}

/// Step-by-step quantum voter-CFTP engine.
pub struct QuantumVoterCftp<'a, O: MeasurementOracle> {
    oracle: O,
    povm: Option<Vec<WeightedIndex<f64>>>,
    povm_rng: ChaCha8Rng,
    config: CftpConfig,
    graph: CftpGraph,
    /// certified labels not yet realized, per class
    pending: Vec<usize>,
    certified: Vec<usize>,
    samples: Vec<usize>,
    stats: RunStats,
    _sd: std::marker::PhantomData<&'a SpectralDecomposition>,
}

impl<'a, O: MeasurementOracle> QuantumVoterCftp<'a, O> {
    /// `sd` must have one level per oracle label. Without a POVM a sample is the
    /// energy class of the certified state.
    pub fn new(oracle: O, povm: Option<&Povm>, sd: &'a SpectralDecomposition, seed: u64, config: CftpConfig) -> Result<Self> {
        let k = oracle.num_labels();
        if sd.num_levels() != k {
            return Err(Error::validation(format!("oracle has {k} labels but the decomposition has {} levels", sd.num_levels())));
        }
        let povm = match povm {
            Some(p) => {
                if p.elements()[0].nrows() != sd.dim() {
                    return Err(Error::validation("POVM dimension differs from the Hamiltonian"));
                }
                Some((0..k).map(|j| weighted(&p.outcome_probabilities(j, sd))).collect::<Result<_>>()?)
            }
            None => None,
        };
        Ok(QuantumVoterCftp {
            oracle,
            povm,
            povm_rng: stream_rng(seed, POVM_STREAM),
            config,
            graph: CftpGraph::new(k, config.prune),
            pending: vec![0; k],
            certified: Vec::new(),
            samples: Vec::new(),
            stats: RunStats::default(),
            _sd: std::marker::PhantomData,
        })
    }

    pub fn graph(&self) -> &CftpGraph {
        &self.graph
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn certified(&self) -> &[usize] {
        &self.certified
    }

    fn realize(&mut self, obs: &Observation) {
        self.pending[obs.label] -= 1;
        let outcome = match &self.povm {
            Some(tables) => tables[obs.class].sample(&mut self.povm_rng),
            None => obs.class,
        };
        self.samples.push(outcome);
    }

    fn abort(&self, reason: String) -> Error {
        Error::Aborted { reason, stats: Box::new(self.stats.clone()), samples: self.samples.clone() }
    }

    /// One pass of the main loop. Returns the graph event, if a transition was recorded.
    pub fn step(&mut self) -> Result<Option<GraphEvent>> {
        if self.stats.measurements >= self.config.measurement_budget {
            return Err(self.abort(format!("measurement budget of {} exhausted", self.config.measurement_budget)));
        }
        let obs = self.oracle.prepare();
        self.stats.measurements += 1;
        if self.pending[obs.label] > 0 {
            self.realize(&obs);
            return Ok(None);
        }
        if self.graph.frontier(obs.label) > self.config.depth_cap {
            return Err(self.abort(format!("depth cap of {} columns exceeded", self.config.depth_cap)));
        }
        let next = self.oracle.evolve(&obs);
        self.stats.transitions += 1;
        self.stats.max_depth = self.stats.max_depth.max(self.graph.frontier(obs.label));
        let event = self.graph.add_transition(obs.label, next.label);
        self.stats.peak_vertices = self.stats.peak_vertices.max(self.graph.stored_vertices());
        match event {
            GraphEvent::Pending => {}
            GraphEvent::ColumnCompleted { .. } => self.stats.columns_completed += 1,
            GraphEvent::Certified { label, depth } => {
                self.stats.columns_completed += 1;
                self.stats.sample_depths.push(depth);
                self.stats.first_certification_measurements.get_or_insert(self.stats.measurements);
                self.certified.push(label);
                self.pending[label] += 1;
            }
        }
        if self.config.reuse_successor && self.pending[next.label] > 0 {
            self.realize(&next);
        }
        Ok(Some(event))
    }

    /// Run until `n` samples have been realized.
    pub fn run(mut self, n: usize) -> Result<RunOutput> {
        while self.samples.len() < n {
            self.step()?;
        }
        Ok(self.into_output())
    }

    pub fn into_output(self) -> RunOutput {
        RunOutput { samples: self.samples, certified: self.certified, stats: self.stats }
    }
}

/// Run the quantum voter-CFTP loop until `n` samples are realized.
pub fn quantum_voter_cftp<O: MeasurementOracle>(
    oracle: O,
    povm: Option<&Povm>,
    sd: &SpectralDecomposition,
    n: usize,
    seed: u64,
    config: CftpConfig,
) -> Result<RunOutput> {
    QuantumVoterCftp::new(oracle, povm, sd, seed, config)?.run(n)
}

/// Columns built by one run of [`classical_voter_cftp`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassicalOutcome {
    pub sample: usize,
    pub columns: usize,
}

/// Classical voter CFTP over states `0..n_states`: extend the graph one column
/// into the past at a time, copying `G(k-1, i) = G(k, successor(i))`, until a
/// column is constant.
pub fn classical_voter_cftp<R, F>(n_states: usize, mut successor: F, rng: &mut R, depth_cap: usize) -> Result<ClassicalOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(usize, &mut R) -> usize,
{
    if n_states == 0 {
        return Err(Error::validation("state space is empty"));
    }
    let mut labels: Vec<usize> = (0..n_states).collect();
    let mut columns = 0;
    while labels.iter().any(|&l| l != labels[0]) {
        if columns >= depth_cap {
            let stats = RunStats { columns_completed: columns as u64, max_depth: columns, ..RunStats::default() };
            return Err(Error::Aborted {
                reason: format!("depth cap of {depth_cap} columns exceeded"),
                stats: Box::new(stats),
                samples: Vec::new(),
            });
        }
        labels = (0..n_states).map(|i| labels[successor(i, rng)]).collect();
        columns += 1;
    }
    Ok(ClassicalOutcome { sample: labels[0], columns })
}

/// Successor sampler for an explicit chain, usable with [`classical_voter_cftp`].
pub fn chain_successor<R: Rng + ?Sized>(pi: &StochasticMatrix) -> Result<impl FnMut(usize, &mut R) -> usize> {
    let rows: Vec<WeightedIndex<f64>> = pi.rows().iter().map(|r| weighted(r)).collect::<Result<_>>()?;
    Ok(move |i: usize, rng: &mut R| rows[i].sample(rng))
}
