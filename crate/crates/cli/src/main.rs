//! `qcftp`: batch front end for the voter-CFTP Gibbs sampler.
//!
//! Exit codes: 0 success, 1 invalid manifest or failed check, 2 run aborted.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use gibbs_cftp::analysis::{self, BoundReport};
use gibbs_cftp::cftp::{
    build_oracle, chain_successor, classical_voter_cftp, stream_rng, QuantumVoterCftp, RunOutput, RunStats,
};
use gibbs_cftp::channels::{self, QuantumChannel, StochasticMatrix};
use gibbs_cftp::manifest::{FieldError, Prepared, ReportKind, RunManifest, MAX_SUPEROPERATOR_DIM};
use gibbs_cftp::spectral;
use gibbs_cftp::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "qcftp", version, about = "Perfect sampling of quantum Gibbs states by voter coupling from the past")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the quantum voter-CFTP sampler.
    Sample(Common),
    /// Run classical voter CFTP on an explicit chain.
    Classical(Common),
    /// Check the channel: eigenbasis preservation, lumpability, primitivity, detailed balance.
    Validate(Common),
    /// Evaluate the lumping, stability, readout-noise, coupon-collector and run-time bounds.
    Analyze(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    manifest: PathBuf,
    /// Output file; defaults to the manifest's `out` field, then stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    /// Independent sampler instances with derived seeds.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Report progress on stderr.
    #[arg(long)]
    progress: bool,
    /// Include wall-clock time in the output, which makes it non-reproducible.
    #[arg(long)]
    timing: bool,
}

/// Failure categories mapped onto the exit-code contract.
enum Failure {
    Invalid(String),
    Aborted(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Invalid(format!("{e:#}"))
    }
}

struct Loaded {
    manifest: RunManifest,
    text: String,
    path: PathBuf,
    hash: String,
}

impl Loaded {
    fn base(&self) -> &Path {
        self.path.parent().unwrap_or(Path::new("."))
    }

    /// Point a field error at the line of its key in the manifest.
    fn anchor(&self, err: FieldError) -> Failure {
        let key = format!("\"{}\"", err.field);
        let line = self.text.lines().position(|l| l.contains(&key)).map_or(1, |i| i + 1);
        Failure::Invalid(format!("{}:{line}: {err}", self.path.display()))
    }
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Failure::Invalid(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    let hash = hex::encode(Sha256::digest(text.as_bytes()));
    let loaded = Loaded { manifest, text, path: path.to_path_buf(), hash };
    loaded.manifest.validate().map_err(|e| loaded.anchor(e))?;
    Ok(loaded)
}

fn emit(args: &Common, loaded: &Loaded, json: &impl Serialize, csv_rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> anyhow::Result<()> {
    let bytes = if args.csv {
        let mut w = csv::Writer::from_writer(Vec::new());
        csv_rows(&mut w)?;
        w.into_inner().context("flushing CSV")?
    } else {
        let mut b = serde_json::to_vec_pretty(json)?;
        b.push(b'\n');
        b
    };
    match args.out.as_ref().or(loaded.manifest.out.as_ref()) {
        Some(path) => std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(&bytes)?,
    }
    Ok(())
}

/// Seed of worker `index`; worker 0 uses the manifest seed itself.
fn worker_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[derive(Serialize)]
struct WorkerResult {
    worker: usize,
    seed: u64,
    samples: Vec<usize>,
    certified: Vec<usize>,
    stats: RunStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
}

#[derive(Serialize)]
struct SampleRecord<'a> {
    command: &'static str,
    manifest_sha256: &'a str,
    seed: u64,
    class_energies: Vec<f64>,
    class_sizes: Vec<usize>,
    samples: Vec<usize>,
    workers: Vec<WorkerResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn run_worker(prepared: &Prepared, manifest: &RunManifest, index: usize, n: usize, progress: bool) -> WorkerResult {
    let seed = worker_seed(manifest.seed, index);
    let chain = prepared.chain.as_ref().expect("checked by caller");
    let sizes = prepared.classes.multiplicities();
    let result = build_oracle(&sizes, chain, prepared.confusion.as_ref(), seed)
        .and_then(|oracle| QuantumVoterCftp::new(oracle, prepared.povm.as_ref(), &prepared.classes, seed, manifest.config()))
        .and_then(|mut engine| {
            let every = (n / 10).max(1);
            while engine.samples().len() < n {
                let before = engine.samples().len();
                engine.step()?;
                let after = engine.samples().len();
                if progress && after != before && after % every == 0 {
                    eprintln!("worker {index}: {after}/{n} samples");
                }
            }
            Ok(engine.into_output())
        });
    match result {
        Ok(RunOutput { samples, certified, stats }) => {
            WorkerResult { worker: index, seed, samples, certified, stats, aborted: None }
        }
        Err(Error::Aborted { reason, stats, samples }) => {
            WorkerResult { worker: index, seed, samples, certified: Vec::new(), stats: *stats, aborted: Some(reason) }
        }
        Err(e) => WorkerResult {
            worker: index,
            seed,
            samples: Vec::new(),
            certified: Vec::new(),
            stats: RunStats::default(),
            aborted: Some(e.to_string()),
        },
    }
}

fn cmd_sample(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let loaded = load(&args.manifest)?;
    let m = &loaded.manifest;
    let prepared = m.prepare(loaded.base()).map_err(|e| loaded.anchor(e))?;
    if prepared.chain.is_none() {
        return Err(loaded.anchor(FieldError { field: "channel", source: Error::Validation("channel is not lumpable over the energy classes".into()) }));
    }
    let workers = args.workers.max(1);
    let share = |w: usize| m.samples / workers + usize::from(w < m.samples % workers);
    let results: Vec<WorkerResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let prepared = &prepared;
                scope.spawn(move || run_worker(prepared, m, w, share(w), args.progress))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let aborted = results.iter().find_map(|r| r.aborted.clone().map(|a| format!("worker {}: {a}", r.worker)));
    let record = SampleRecord {
        command: "sample",
        manifest_sha256: &loaded.hash,
        seed: m.seed,
        class_energies: prepared.classes.energies(),
        class_sizes: prepared.classes.multiplicities(),
        samples: results.iter().flat_map(|r| r.samples.iter().copied()).collect(),
        workers: results,
        aborted: aborted.clone(),
        wall_time_s: args.timing.then(|| start.elapsed().as_secs_f64()),
    };
    emit(args, &loaded, &record, |w| {
        w.write_record(["manifest_sha256", "seed", "worker", "worker_seed", "index", "sample"])?;
        for r in &record.workers {
            for (i, s) in r.samples.iter().enumerate() {
                w.write_record([&record.manifest_sha256.to_string(), &record.seed.to_string(), &r.worker.to_string(), &r.seed.to_string(), &i.to_string(), &s.to_string()])?;
            }
        }
        Ok(())
    })?;
    match aborted {
        Some(reason) => Err(Failure::Aborted(reason)),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct ClassicalRecord<'a> {
    command: &'static str,
    manifest_sha256: &'a str,
    seed: u64,
    samples: Vec<usize>,
    columns: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    aborted: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    wall_time_s: Option<f64>,
}

fn cmd_classical(args: &Common) -> Result<(), Failure> {
    let start = Instant::now();
    let loaded = load(&args.manifest)?;
    let m = &loaded.manifest;
    let pi = m.classical_chain(loaded.base()).map_err(|e| loaded.anchor(e))?;
    let mut record = ClassicalRecord {
        command: "classical",
        manifest_sha256: &loaded.hash,
        seed: m.seed,
        samples: Vec::new(),
        columns: Vec::new(),
        aborted: None,
        wall_time_s: None,
    };
    if !channels::is_primitive(&pi, channels::DEFAULT_TOL) {
        record.aborted = Some("chain is not primitive (reducible or periodic); columns would never coalesce".into());
    } else {
        let mut rng = stream_rng(m.seed, 0);
        let mut succ = chain_successor(&pi).map_err(|e| Failure::Invalid(e.to_string()))?;
        for i in 0..m.samples {
            match classical_voter_cftp(pi.dim(), &mut succ, &mut rng, m.depth_cap) {
                Ok(o) => {
                    record.samples.push(o.sample);
                    record.columns.push(o.columns);
                }
                Err(e) => {
                    record.aborted = Some(format!("sample {i}: {e}"));
                    break;
                }
            }
            if args.progress && (i + 1) % (m.samples / 10).max(1) == 0 {
                eprintln!("{}/{} samples", i + 1, m.samples);
            }
        }
    }
    record.wall_time_s = args.timing.then(|| start.elapsed().as_secs_f64());
    emit(args, &loaded, &record, |w| {
        w.write_record(["manifest_sha256", "seed", "index", "sample", "columns"])?;
        for (i, (s, c)) in record.samples.iter().zip(&record.columns).enumerate() {
            w.write_record([record.manifest_sha256, &record.seed.to_string(), &i.to_string(), &s.to_string(), &c.to_string()])?;
        }
        Ok(())
    })?;
    match &record.aborted {
        Some(reason) => Err(Failure::Aborted(reason.clone())),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    /// `None` when the check was skipped.
    pass: Option<bool>,
    detail: String,
}

impl Check {
    fn new(name: &'static str, result: gibbs_cftp::Result<bool>, ok: &str, bad: &str) -> Self {
        match result {
            Ok(true) => Check { name, pass: Some(true), detail: ok.into() },
            Ok(false) => Check { name, pass: Some(false), detail: bad.into() },
            Err(e) => Check { name, pass: Some(false), detail: e.to_string() },
        }
    }

    fn skipped(name: &'static str, detail: impl Into<String>) -> Self {
        Check { name, pass: None, detail: detail.into() }
    }
}

#[derive(Serialize)]
struct ValidateRecord<'a> {
    command: &'static str,
    manifest_sha256: &'a str,
    seed: u64,
    checks: Vec<Check>,
    pass: bool,
}

/// Gibbs probabilities of individual eigenstates.
fn state_gibbs(prepared: &Prepared, beta: f64) -> gibbs_cftp::Result<Vec<f64>> {
    let levels = spectral::gibbs_lumped(&prepared.sd, beta)?;
    let sd = &prepared.sd;
    Ok((0..sd.dim()).map(|s| {
        let l = sd.level_of_state(s);
        levels[l] / sd.levels()[l].multiplicity as f64
    }).collect())
}

fn quantum_channel(m: &RunManifest, prepared: &Prepared) -> Option<gibbs_cftp::Result<QuantumChannel>> {
    use gibbs_cftp::manifest::ChannelSpec;
    if prepared.sd.dim() > MAX_SUPEROPERATOR_DIM {
        return None;
    }
    Some(match &m.channel {
        ChannelSpec::Kraus(ops) => {
            let mats: gibbs_cftp::Result<Vec<_>> = ops.iter().map(|o| o.to_matrix()).collect();
            mats.and_then(|mats| QuantumChannel::from_kraus(&mats))
        }
        _ => QuantumChannel::classical_lift(prepared.state_chain.as_ref()?, prepared.sd.basis()),
    })
}

fn cmd_validate(args: &Common) -> Result<(), Failure> {
    let loaded = load(&args.manifest)?;
    let m = &loaded.manifest;
    let prepared = m.prepare(loaded.base()).map_err(|e| loaded.anchor(e))?;
    let tol = channels::DEFAULT_TOL;
    let mut checks = Vec::new();

    match quantum_channel(m, &prepared) {
        Some(Ok(t)) => {
            checks.push(Check::new("completely_positive", Ok(t.is_completely_positive()), "Choi matrix is PSD", "Choi matrix has a negative eigenvalue"));
            checks.push(Check::new("trace_preserving", Ok(t.is_trace_preserving(tol)), "trace is preserved", "trace is not preserved"));
            checks.push(Check::new(
                "eigenbasis_preserving",
                channels::is_eigenbasis_preserving(&t, &prepared.sd, m.beta, 1e-8),
                "commutes with the eigenprojectors and fixes the Gibbs state",
                "does not commute with the eigenprojectors or moves the Gibbs state",
            ));
        }
        Some(Err(e)) => checks.push(Check { name: "channel", pass: Some(false), detail: e.to_string() }),
        None => checks.push(Check::skipped("eigenbasis_preserving", format!("dimension above {MAX_SUPEROPERATOR_DIM}; superoperator not built"))),
    }

    match &prepared.state_chain {
        Some(pi) => checks.push(Check::new(
            "lumpable",
            channels::is_lumpable_chain(pi, &prepared.partition, tol),
            "row sums agree within every class",
            "row sums differ inside a class",
        )),
        None => checks.push(Check::skipped("lumpable", "chain built directly on classes")),
    }

    match &prepared.chain {
        Some(lumped) => {
            checks.push(Check::new("primitive", Ok(channels::is_primitive(lumped, tol)), "unique full-support stationary distribution", "reducible or periodic"));
            let target = spectral::gibbs_lumped(&prepared.classes, m.beta);
            checks.push(Check::new(
                "detailed_balance",
                target.and_then(|mu| channels::detailed_balance_classical(lumped, &mu, 1e-10)),
                "reversible with respect to the lumped Gibbs distribution",
                "violates detailed balance with respect to the lumped Gibbs distribution",
            ));
        }
        None => checks.push(Check { name: "primitive", pass: Some(false), detail: "no lumped chain".into() }),
    }
    if let Some(pi) = &prepared.state_chain {
        checks.push(Check::new(
            "state_detailed_balance",
            state_gibbs(&prepared, m.beta).and_then(|mu| channels::detailed_balance_classical(pi, &mu, 1e-10)),
            "reversible with respect to the Gibbs distribution on eigenstates",
            "violates detailed balance on eigenstates",
        ));
    }

    for c in &checks {
        let mark = match c.pass {
            Some(true) => "[ok]  ",
            Some(false) => "[FAIL]",
            None => "[skip]",
        };
        eprintln!("{mark} {}: {}", c.name, c.detail);
    }
    let pass = checks.iter().all(|c| c.pass != Some(false));
    let record = ValidateRecord { command: "validate", manifest_sha256: &loaded.hash, seed: m.seed, checks, pass };
    emit(args, &loaded, &record, |w| {
        w.write_record(["manifest_sha256", "seed", "check", "pass", "detail"])?;
        for c in &record.checks {
            let pass = c.pass.map_or("skipped".to_string(), |p| p.to_string());
            w.write_record([record.manifest_sha256, &record.seed.to_string(), c.name, &pass, &c.detail])?;
        }
        Ok(())
    })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Invalid("validation failed".into()))
    }
}

#[derive(Serialize)]
struct AnalyzeRecord<'a> {
    command: &'static str,
    manifest_sha256: &'a str,
    seed: u64,
    t_mix_lumped: Option<usize>,
    t_mix_states: Option<usize>,
    reports: Vec<BoundReport>,
    pass: bool,
}

const DEFAULT_SWEEP: [f64; 3] = [0.01, 0.02, 0.05];

fn analysis_err(e: Error) -> Failure {
    Failure::Invalid(e.to_string())
}

fn cmd_analyze(args: &Common) -> Result<(), Failure> {
    let loaded = load(&args.manifest)?;
    let m = &loaded.manifest;
    let requested: Vec<ReportKind> = match &m.reports {
        Some(r) => r.clone(),
        None => ReportKind::ALL.iter().copied().filter(|k| *k != ReportKind::Pinsker || m.covering_eps.is_some()).collect(),
    };
    if requested.contains(&ReportKind::Pinsker) && m.covering_eps.is_none() {
        return Err(loaded.anchor(FieldError { field: "reports", source: Error::Validation("the pinsker report needs `covering_eps`".into()) }));
    }
    let prepared = m.prepare(loaded.base()).map_err(|e| loaded.anchor(e))?;
    let pi = prepared.chain.clone().ok_or_else(|| {
        loaded.anchor(FieldError { field: "channel", source: Error::Validation("channel is not lumpable over the energy classes".into()) })
    })?;
    let sweep = if m.sweep.eta.is_empty() { DEFAULT_SWEEP.to_vec() } else { m.sweep.eta.clone() };
    let sizes = prepared.classes.multiplicities();
    let k = sizes.len();
    let instance = format!("d={} d'={k} beta={}", prepared.sd.dim(), m.beta);

    let t_mix_lumped = analysis::t_mix(&pi).ok();
    let t_mix_states = prepared.state_chain.as_ref().and_then(|s| analysis::t_mix(s).ok());
    let q = analysis::class_probabilities(&sizes);
    let phi = analysis::phi_exact(&q);
    let r = analysis::degeneracy_ratio(&sizes);
    let mut reports = Vec::new();

    for kind in &requested {
        match kind {
            ReportKind::Pinsker => {
                let cov = prepared.covering.as_ref().expect("covering_eps is set");
                let rep = analysis::pinsker_lumping_bound(&prepared.sd, cov, m.beta).map_err(analysis_err)?;
                reports.push(rep.distance);
                reports.push(rep.entropy);
            }
            ReportKind::Stability => {
                let uniform = StochasticMatrix::rank_one(&vec![1.0 / k as f64; k]).map_err(analysis_err)?;
                for &eta in &sweep {
                    let perturbed = StochasticMatrix::new(pi.matrix() * (1.0 - eta) + uniform.matrix() * eta).map_err(analysis_err)?;
                    let mut rep = analysis::stability_report(&pi, &perturbed).map_err(analysis_err)?;
                    rep.instance = format!("mix={eta} {}", rep.instance);
                    reports.push(rep);
                }
            }
            ReportKind::FaultyPe => {
                let model = prepared.confusion.clone().unwrap_or_else(|| gibbs_cftp::phase_estimation::ConfusionModel::identity(k));
                let mut rep = analysis::faulty_pe_report(&pi, &model).map_err(analysis_err)?;
                rep.instance = format!("manifest noise {}", rep.instance);
                reports.push(rep);
                for &eta in &sweep {
                    let flip = gibbs_cftp::phase_estimation::ConfusionModel::symmetric_flip(&sizes, eta).map_err(analysis_err)?;
                    let mut rep = analysis::faulty_pe_report(&pi, &flip).map_err(analysis_err)?;
                    rep.name = "faulty_phase_estimation_flip".into();
                    rep.instance = format!("flip={eta} {}", rep.instance);
                    reports.push(rep);
                }
            }
            ReportKind::Phi => match &phi {
                Ok(exact) => reports.push(BoundReport::new("coupon_collector", analysis::phi_bound(k, r), *exact, 1e-9, format!("{instance} r={r}"))),
                Err(_) => {
                    let mut rng = stream_rng(m.seed, 3);
                    let (mean, se) = analysis::phi_monte_carlo(&q, 10_000, &mut rng).map_err(analysis_err)?;
                    reports.push(BoundReport::new("coupon_collector", analysis::phi_bound(k, r), mean, 3.0 * se, format!("{instance} r={r} monte_carlo")));
                }
            },
            ReportKind::Runtime => {
                let phi_value = phi.as_ref().copied().unwrap_or_else(|_| analysis::phi_bound(k, r));
                let predicted = t_mix_lumped.map_or(f64::NAN, |t| analysis::runtime_prediction(t, k, phi_value));
                let measured = if m.samples > 0 {
                    let result = run_worker(&prepared, m, 0, m.samples, false);
                    if let Some(reason) = result.aborted {
                        return Err(Failure::Aborted(reason));
                    }
                    result.stats.measurements as f64 / m.samples as f64
                } else {
                    f64::NAN
                };
                reports.push(BoundReport::informational("runtime_measurements_per_sample", predicted, measured, format!("{instance} t_mix={} phi={phi_value}", t_mix_lumped.map_or("n/a".to_string(), |t| t.to_string()))));
            }
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    for r in reports.iter().filter(|r| !r.pass) {
        eprintln!("bound violated: {} predicted {} measured {} ({})", r.name, r.predicted, r.measured, r.instance);
    }
    let record = AnalyzeRecord { command: "analyze", manifest_sha256: &loaded.hash, seed: m.seed, t_mix_lumped, t_mix_states, reports, pass };
    emit(args, &loaded, &record, |w| {
        w.write_record(["manifest_sha256", "seed", "name", "predicted", "measured", "margin", "pass", "asserted", "instance"])?;
        for r in &record.reports {
            w.write_record([
                record.manifest_sha256,
                &record.seed.to_string(),
                &r.name,
                &r.predicted.to_string(),
                &r.measured.to_string(),
                &r.margin.to_string(),
                &r.pass.to_string(),
                &r.asserted.to_string(),
                &r.instance,
            ])?;
        }
        Ok(())
    })?;
    if pass {
        Ok(())
    } else {
        Err(Failure::Invalid("bound violated".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(a),
        Command::Classical(a) => cmd_classical(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Analyze(a) => cmd_analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Aborted(msg)) => {
            eprintln!("aborted: {msg}");
            ExitCode::from(2)
        }
    }
}
