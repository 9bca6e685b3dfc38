//! Exact model of textbook `t`-qubit phase estimation: outcome distributions,
//! label assignment against a spectral covering, and the confusion matrices
//! that describe how measured labels differ from true energy classes.

use std::f64::consts::PI;

use crate::channels::StochasticMatrix;
use crate::linalg::RMat;
use crate::spectral::{SpectralCovering, SpectralDecomposition};
use crate::{Error, Result};

/// Largest `t` for which [`pe_distribution`] materializes the outcome vector.
pub const MAX_EXACT_T: u32 = 16;
/// Largest `t` accepted at all; beyond [`MAX_EXACT_T`] outcomes are streamed.
pub const MAX_T: u32 = 24;
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Register size and the affine map from energies to phases in `[0, 1 - margin]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeConfig {
    pub t: u32,
    pub offset: f64,
    pub scale: f64,
    pub margin: f64,
}

impl PeConfig {
    pub fn new(sd: &SpectralDecomposition, t: u32, margin: f64) -> Result<Self> {
        if t == 0 || t > MAX_T {
            return Err(Error::validation(format!("phase estimation needs 1 <= t <= {MAX_T}, got {t}")));
        }
        if !(margin > 0.0 && margin < 1.0) {
            return Err(Error::validation("phase margin must lie in (0, 1)"));
        }
        let e = sd.energies();
        let (lo, hi) = (e[0], e[e.len() - 1]);
        let scale = if hi > lo { (1.0 - margin) / (hi - lo) } else { 1.0 };
        Ok(PeConfig { t, offset: lo, scale, margin })
    }

    pub fn grid_size(&self) -> usize {
        1usize << self.t
    }

    pub fn to_phase(&self, energy: f64) -> f64 {
        (energy - self.offset) * self.scale
    }

    /// Inverse of [`to_phase`](Self::to_phase). Phases in the upper half of the
    /// margin gap are read as wrapped-around negative phases.
    pub fn to_energy(&self, phase: f64) -> f64 {
        let phase = if phase > 1.0 - 0.5 * self.margin { phase - 1.0 } else { phase };
        self.offset + phase / self.scale
    }

    pub fn outcome_energy(&self, m: usize) -> f64 {
        self.to_energy(m as f64 / self.grid_size() as f64)
    }

    /// Covering half-width in phase units.
    pub fn eps_phase(&self, cov: &SpectralCovering) -> f64 {
        cov.eps() * self.scale
    }
}

/// Probability of outcome `m` when estimating `phase` with a `2^t` grid:
/// `sin^2(pi N d) / (N^2 sin^2(pi d))` with `d = phase - m / N`.
pub fn pe_probability(phase: f64, t: u32, m: usize) -> f64 {
    let n = (1u64 << t) as f64;
    let delta = phase - m as f64 / n;
    let r = delta - delta.round();
    if r.abs() < 1e-15 {
        return 1.0;
    }
    let nr = n * r;
    if (nr - nr.round()).abs() < 1e-12 {
        // another grid point: the kernel vanishes exactly
        return 0.0;
    }
    let num = (PI * nr).sin();
    let den = n * (PI * r).sin();
    (num / den).powi(2)
}

/// Full outcome distribution over the `2^t` grid.
pub fn pe_distribution(phase: f64, t: u32) -> Result<Vec<f64>> {
    if t == 0 || t > MAX_EXACT_T {
        return Err(Error::validation(format!("exact outcome vectors need 1 <= t <= {MAX_EXACT_T}")));
    }
    if !(0.0..1.0).contains(&phase) {
        return Err(Error::validation(format!("phase {phase} outside [0, 1)")));
    }
    let n = 1usize << t;
    let r = phase * n as f64;
    if (r - r.round()).abs() < 1e-15 * n as f64 {
        let mut p = vec![0.0; n];
        p[(r.round() as usize) % n] = 1.0;
        return Ok(p);
    }
    Ok((0..n).map(|m| pe_probability(phase, t, m)).collect())
}

/// Label of outcome `m`: the covering interval containing its energy, else
/// the nearest center (ties to the lower index).
pub fn assign_label(m: usize, cov: &SpectralCovering, cfg: &PeConfig) -> usize {
    let e = cfg.outcome_energy(m);
    if let Some(class) = cov.containing(e) {
        return class;
    }
    let mut best = 0;
    for (k, c) in cov.centers().iter().enumerate() {
        if (e - c).abs() < (e - cov.centers()[best]).abs() {
            best = k;
        }
    }
    best
}

/// Labels of every grid outcome.
pub fn label_table(cov: &SpectralCovering, cfg: &PeConfig) -> Vec<usize> {
    (0..cfg.grid_size()).map(|m| assign_label(m, cov, cfg)).collect()
}

/// Forward confusion `Xi'(i, j) = P(label j | true class i)`, averaging the
/// levels of a class by multiplicity.
pub fn confusion_forward(sd: &SpectralDecomposition, cov: &SpectralCovering, cfg: &PeConfig) -> Result<StochasticMatrix> {
    let k = cov.len();
    let labels = label_table(cov, cfg);
    let mut fwd = RMat::zeros(k, k);
    for (class, members) in cov.members().iter().enumerate() {
        let size = cov.class_sizes()[class] as f64;
        for &lvl in members {
            let level = &sd.levels()[lvl];
            let weight = level.multiplicity as f64 / size;
            let phase = cfg.to_phase(level.energy);
            for (m, &label) in labels.iter().enumerate() {
                fwd[(class, label)] += weight * pe_probability(phase, cfg.t, m);
            }
        }
    }
    StochasticMatrix::with_tol(fwd, 1e-9)
}

/// Bayes inversion with prior `|S_j| / d`:
/// `Xi(i, j) = |S_j| Xi'(j, i) / sum_l |S_l| Xi'(l, i)`.
pub fn confusion_backward(fwd: &StochasticMatrix, class_sizes: &[usize]) -> Result<StochasticMatrix> {
    let k = fwd.dim();
    if class_sizes.len() != k {
        return Err(Error::validation("class sizes do not match the confusion matrix"));
    }
    let f = fwd.matrix();
    let mut bwd = RMat::zeros(k, k);
    for i in 0..k {
        let norm: f64 = (0..k).map(|l| class_sizes[l] as f64 * f[(l, i)]).sum();
        if norm <= 0.0 {
            return Err(Error::DeadLabel(i));
        }
        for j in 0..k {
            bwd[(i, j)] = class_sizes[j] as f64 * f[(j, i)] / norm;
        }
    }
    StochasticMatrix::with_tol(bwd, 1e-9)
}

/// `Delta(i, j)`: smallest circular grid distance between a true phase of class
/// `i` and an outcome grid point inside the interval of class `j`.
/// Entries with no grid point inside interval `j` are `+inf`.
pub fn delta_matrix(sd: &SpectralDecomposition, cov: &SpectralCovering, cfg: &PeConfig) -> RMat {
    let k = cov.len();
    let n = cfg.grid_size();
    let nf = n as f64;
    let mut inside: Vec<Vec<usize>> = vec![Vec::new(); k];
    for m in 0..n {
        if let Some(class) = cov.containing(cfg.outcome_energy(m)) {
            inside[class].push(m);
        }
    }
    RMat::from_fn(k, k, |i, j| {
        let mut best = f64::INFINITY;
        for &lvl in &cov.members()[i] {
            let x = nf * cfg.to_phase(sd.levels()[lvl].energy);
            for &m in &inside[j] {
                let diff = (x - m as f64).rem_euclid(nf);
                best = best.min(diff.min(nf - diff));
            }
        }
        best
    })
}

/// Misclassification bound `(2^{t+1} eps + 1) / Delta^2` with `eps` in phase units.
pub fn misclassification_bound(delta: f64, eps_phase: f64, t: u32) -> f64 {
    (2f64.powi(t as i32 + 1) * eps_phase + 1.0) / (delta * delta)
}

/// Lower bound on `xi` from the misclassification bound and `xi' >= 1 - delta_target`:
/// `min_j (1-d) / (1-d + (2^{t+1} eps + 1) |S_j|^{-1} sum_{l != j} |S_l| / Delta(l, j)^2)`.
pub fn xi_lower_bound(cov: &SpectralCovering, cfg: &PeConfig, delta: &RMat, delta_target: f64) -> f64 {
    let k = cov.len();
    let sizes = cov.class_sizes();
    let count = 2f64.powi(cfg.t as i32 + 1) * cfg.eps_phase(cov) + 1.0;
    (0..k)
        .map(|j| {
            let leak: f64 = (0..k)
                .filter(|&l| l != j)
                .map(|l| sizes[l] as f64 / delta[(l, j)].powi(2))
                .sum();
            let keep = 1.0 - delta_target;
            keep / (keep + count * leak / sizes[j] as f64)
        })
        .fold(1.0, f64::min)
}

/// Total output deviation bound under faulty phase estimation:
/// `1 - xi' + 2 (kappa + 2) (1 - xi xi' + (1-xi) xi' + xi (1-xi') + (1-xi)(1-xi'))`.
pub fn faulty_pe_total_bound(xi: f64, xi_fwd: f64, kappa: f64) -> f64 {
    let mix = 1.0 - xi * xi_fwd + (1.0 - xi) * xi_fwd + xi * (1.0 - xi_fwd) + (1.0 - xi) * (1.0 - xi_fwd);
    1.0 - xi_fwd + 2.0 * (kappa + 2.0) * mix
}

/// Label-noise model of the two phase-estimation steps.
#[derive(Debug, Clone)]
pub struct ConfusionModel {
    /// `Xi'(i, j) = P(label j | true class i)`.
    pub forward: StochasticMatrix,
    /// `Xi(i, j) = P(true class j | label i)` for a maximally mixed preparation.
    pub backward: StochasticMatrix,
    pub xi: f64,
    pub xi_fwd: f64,
    pub delta: Option<RMat>,
}

fn min_diagonal(m: &StochasticMatrix) -> f64 {
    (0..m.dim()).map(|i| m.matrix()[(i, i)]).fold(1.0, f64::min)
}

impl ConfusionModel {
    pub fn from_forward(forward: StochasticMatrix, class_sizes: &[usize]) -> Result<Self> {
        let backward = confusion_backward(&forward, class_sizes)?;
        Ok(ConfusionModel { xi: min_diagonal(&backward), xi_fwd: min_diagonal(&forward), forward, backward, delta: None })
    }

    pub fn identity(k: usize) -> Self {
        ConfusionModel {
            forward: StochasticMatrix::identity(k),
            backward: StochasticMatrix::identity(k),
            xi: 1.0,
            xi_fwd: 1.0,
            delta: None,
        }
    }

    /// Keep the label with probability `1 - eta`, otherwise flip uniformly to another label.
    pub fn symmetric_flip(class_sizes: &[usize], eta: f64) -> Result<Self> {
        let k = class_sizes.len();
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::validation("flip probability must lie in [0, 1]"));
        }
        if k == 1 {
            return Ok(Self::identity(1));
        }
        let off = eta / (k - 1) as f64;
        let fwd = RMat::from_fn(k, k, |i, j| if i == j { 1.0 - eta } else { off });
        Self::from_forward(StochasticMatrix::new(fwd)?, class_sizes)
    }

    /// Exact model of `t`-qubit phase estimation against a covering.
    pub fn from_pe(sd: &SpectralDecomposition, cov: &SpectralCovering, cfg: &PeConfig) -> Result<Self> {
        let forward = confusion_forward(sd, cov, cfg)?;
        let mut model = Self::from_forward(forward, cov.class_sizes())?;
        model.delta = Some(delta_matrix(sd, cov, cfg));
        Ok(model)
    }

    pub fn num_labels(&self) -> usize {
        self.forward.dim()
    }

    /// Transition matrix of observed labels, `Xi * pi * Xi'` as a row-stochastic product.
    pub fn label_transition(&self, pi: &StochasticMatrix) -> StochasticMatrix {
        self.backward.then(pi).then(&self.forward)
    }
}
