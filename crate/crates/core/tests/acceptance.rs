//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::Instant;

use gibbs_cftp::analysis::{self, empirical_tv, phi_bound, phi_exact, phi_monte_carlo};
use gibbs_cftp::cftp::{
    build_oracle, chain_successor, classical_voter_cftp, quantum_voter_cftp, stream_rng, CftpConfig, Povm,
};
use gibbs_cftp::channels::{
    detailed_balance_classical, is_lumpable_chain, kappa, kappa_ratio, lump, metropolis_chain, metropolis_lumped,
    StochasticMatrix,
};
use gibbs_cftp::linalg::RMat;
use gibbs_cftp::phase_estimation::{
    misclassification_bound, pe_distribution, ConfusionModel, PeConfig,
};
use gibbs_cftp::spectral::{build_covering, gibbs_lumped, SpectralCovering, SpectralDecomposition};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_stochastic(rng: &mut ChaCha8Rng, n: usize) -> StochasticMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let r: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..1.0)).collect();
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        })
        .collect();
    StochasticMatrix::from_rows(&rows).unwrap()
}

/// Sorted distinct energies in `[0, span)` with random multiplicities.
fn random_spectrum(rng: &mut ChaCha8Rng, levels: usize, max_mult: usize, span: f64) -> Vec<(f64, usize)> {
    let mut energies: Vec<f64> = Vec::new();
    while energies.len() < levels {
        let e = rng.gen_range(0.0..span);
        if energies.iter().all(|x: &f64| (x - e).abs() > 1e-3) {
            energies.push(e);
        }
    }
    energies.sort_by(f64::total_cmp);
    energies.into_iter().map(|e| (e, rng.gen_range(1..=max_mult))).collect()
}

fn perfect_sampling() -> Outcome {
    let start = Instant::now();
    let sd = SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.0, 1), (2.0, 1)]).unwrap();
    let pi = metropolis_lumped(&sd, 1.0).unwrap();
    let oracle = build_oracle(&sd.multiplicities(), &pi, None, 20_251).unwrap();
    let povm = Povm::eigenprojectors(&sd);
    let n = 100_000;
    let out = quantum_voter_cftp(oracle, Some(&povm), &sd, n, 20_251, CftpConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let mu = gibbs_lumped(&sd, 1.0).unwrap();
    let tv = empirical_tv(&out.samples, &mu).unwrap();
    ensure(tv.within_band(), || format!("TV {:.5} outside 3-sigma band {:.5}", tv.distance, tv.band))?;
    ensure(elapsed <= 60.0, || format!("took {elapsed:.1} s"))?;
    Ok(format!("N={n}, TV={:.5} <= band {:.5}, {elapsed:.2} s", tv.distance, tv.band))
}

fn classical_baseline() -> Outcome {
    let pi = StochasticMatrix::from_rows(&[vec![0.75, 0.25], vec![0.5, 0.5]]).unwrap();
    let mut rng = stream_rng(2, 0);
    let mut succ = chain_successor(&pi).unwrap();
    let runs = 200_000;
    let samples: Vec<usize> = (0..runs)
        .map(|_| classical_voter_cftp(2, &mut succ, &mut rng, 100_000).map(|o| o.sample))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mu = [2.0 / 3.0, 1.0 / 3.0];
    let freq = analysis::empirical_frequencies(&samples, 2).unwrap();
    let sigma = (mu[0] * mu[1] / runs as f64).sqrt();
    for i in 0..2 {
        ensure((freq[i] - mu[i]).abs() <= 3.0 * sigma, || format!("class {i}: {} vs {}", freq[i], mu[i]))?;
    }
    Ok(format!("{runs} runs, frequencies ({:.4}, {:.4}), 3 sigma = {:.4}", freq[0], freq[1], 3.0 * sigma))
}

fn lumping_exactness() -> Outcome {
    let mut rng = stream_rng(3, 0);
    let mut done = 0;
    while done < 10 {
        let levels = rng.gen_range(2..=5);
        let spec = random_spectrum(&mut rng, levels, 3, 2.0);
        let d: usize = spec.iter().map(|l| l.1).sum();
        if d > 12 || spec.iter().all(|l| l.1 == 1) {
            continue;
        }
        let beta = rng.gen_range(0.2..3.0);
        let sd = SpectralDecomposition::from_spectrum(&spec).unwrap();
        let pi = metropolis_chain(&sd, beta).unwrap();
        let partition = sd.partition();
        ensure(is_lumpable_chain(&pi, &partition, 1e-12).unwrap(), || format!("{spec:?}: row sums disagree"))?;
        let lumped = lump(&pi, &partition, 1e-12).map_err(|e| e.to_string())?;
        let mu = lumped.stationary().map_err(|e| e.to_string())?;
        let target = gibbs_lumped(&sd, beta).unwrap();
        let err = mu.iter().zip(&target).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure(err <= 1e-10, || format!("{spec:?}: stationary off by {err:e}"))?;
        ensure(detailed_balance_classical(&lumped, &target, 1e-10).unwrap(), || format!("{spec:?}: detailed balance"))?;
        done += 1;
    }
    Ok("10 degenerate spectra: lumpable to 1e-12, stationary and detailed balance to 1e-10".into())
}

fn coupon_collector() -> Outcome {
    let cases: [(&str, Vec<f64>); 5] = [
        ("uniform 2", vec![0.5; 2]),
        ("uniform 3", vec![1.0 / 3.0; 3]),
        ("uniform 5", vec![0.2; 5]),
        ("skewed 3", vec![0.5, 0.25, 0.25]),
        ("skewed 5", vec![0.4, 0.3, 0.15, 0.1, 0.05]),
    ];
    let exact2 = phi_exact(&cases[0].1).unwrap();
    let exact3 = phi_exact(&cases[1].1).unwrap();
    ensure(exact2 == 3.0, || format!("uniform 2 gave {exact2}"))?;
    ensure(exact3 == 5.5, || format!("uniform 3 gave {exact3}"))?;
    let mut rng = stream_rng(4, 0);
    let mut worst: f64 = 0.0;
    for (name, q) in &cases {
        let exact = phi_exact(q).unwrap();
        let (mean, _) = phi_monte_carlo(q, 1_000_000, &mut rng).unwrap();
        let rel = (mean - exact).abs() / exact;
        worst = worst.max(rel);
        ensure(rel <= 0.005, || format!("{name}: exact {exact} vs Monte Carlo {mean}"))?;
        // every class has probability >= 1/r with r = 1/min q
        let r = 1.0 / q.iter().copied().fold(f64::INFINITY, f64::min);
        ensure(exact <= phi_bound(q.len(), r) + 1e-9, || format!("{name}: {exact} exceeds r H = {}", phi_bound(q.len(), r)))?;
    }
    Ok(format!("phi(2)=3, phi(3)=5.5 exactly; worst Monte Carlo deviation {:.3}%", 100.0 * worst))
}

fn pinsker_bound() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let betas = [0.1, 1.0, 5.0];
    let mut merged = 0;
    for inst in 0..50 {
        let levels = rng.gen_range(2..=7);
        let spec = random_spectrum(&mut rng, levels, 3, 2.0);
        let sd = SpectralDecomposition::from_spectrum(&spec).unwrap();
        let cov = loop {
            let eps = rng.gen_range(0.005..0.6);
            if let Ok(c) = build_covering(&sd, eps) {
                break c;
            }
        };
        if cov.len() < sd.num_levels() {
            merged += 1;
        }
        let beta = betas[inst % 3];
        let rep = analysis::pinsker_lumping_bound(&sd, &cov, beta).map_err(|e| e.to_string())?;
        ensure(rep.distance.pass, || format!("{:?}", rep.distance))?;
        ensure(rep.entropy.pass, || format!("{:?}", rep.entropy))?;
    }
    Ok(format!("50 spectra ({merged} with merged classes): distance and relative-entropy bounds hold"))
}

fn stability_bound() -> Outcome {
    let mut rng = stream_rng(6, 0);
    let mut tightest = f64::INFINITY;
    for _ in 0..50 {
        let n = rng.gen_range(2..=5);
        let pi = random_stochastic(&mut rng, n);
        let noise = random_stochastic(&mut rng, n);
        let s = rng.gen_range(0.0..0.025);
        let perturbed = StochasticMatrix::new(pi.matrix() * (1.0 - s) + noise.matrix() * s).unwrap();
        let rep = analysis::stability_report(&pi, &perturbed).map_err(|e| e.to_string())?;
        let eps = gibbs_cftp::channels::one_to_one_distance(&pi, &perturbed).unwrap();
        ensure(eps <= 0.05, || format!("perturbation {eps} too large"))?;
        ensure(rep.pass, || format!("{rep:?}"))?;
        if rep.predicted > 0.0 {
            tightest = tightest.min(rep.margin / rep.predicted);
        }
    }
    Ok(format!("50 chains pass; smallest relative margin {tightest:.3}"))
}

fn bayes_monte_carlo(model: &ConfusionModel, sizes: &[usize], shots: usize, rng: &mut ChaCha8Rng) -> Result<(), String> {
    let k = sizes.len();
    let prior = WeightedIndex::new(sizes).unwrap();
    let emit: Vec<WeightedIndex<f64>> = model.forward.rows().iter().map(|r| WeightedIndex::new(r).unwrap()).collect();
    let mut counts = RMat::zeros(k, k);
    for _ in 0..shots {
        let class = prior.sample(rng);
        let label = emit[class].sample(rng);
        counts[(label, class)] += 1.0;
    }
    for label in 0..k {
        let n: f64 = counts.row(label).sum();
        for class in 0..k {
            let p = model.backward.matrix()[(label, class)];
            let freq = counts[(label, class)] / n;
            let tol = (3.0 * (p * (1.0 - p) / n).sqrt()).max(1e-12);
            ensure((freq - p).abs() <= tol, || format!("Xi({label},{class}) = {p} vs frequency {freq}"))?;
        }
    }
    Ok(())
}

fn faulty_pe_bound() -> Outcome {
    let instances = [
        SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.0, 1)]).unwrap(),
        SpectralDecomposition::from_spectrum(&[(0.0, 2), (1.0, 1), (2.0, 1)]).unwrap(),
    ];
    let mut rows = Vec::new();
    for sd in &instances {
        let pi = metropolis_lumped(sd, 1.0).unwrap();
        for eta in [0.001, 0.01, 0.05] {
            let model = ConfusionModel::symmetric_flip(&sd.multiplicities(), eta).unwrap();
            let rep = analysis::faulty_pe_report(&pi, &model).map_err(|e| e.to_string())?;
            ensure(rep.pass, || format!("{rep:?}"))?;
            rows.push(format!("{:.2e}<={:.2e}", rep.measured, rep.predicted));
        }
    }
    let mut rng = stream_rng(7, 0);
    let sd = &instances[1];
    bayes_monte_carlo(&ConfusionModel::symmetric_flip(&sd.multiplicities(), 0.05).unwrap(), &sd.multiplicities(), 1_000_000, &mut rng)?;
    let uneven = SpectralDecomposition::from_spectrum(&[(0.0, 3), (0.37, 1), (1.0, 2)]).unwrap();
    let cov = SpectralCovering::singletons(&uneven);
    let cfg = PeConfig::new(&uneven, 4, 0.1).unwrap();
    let pe_model = ConfusionModel::from_pe(&uneven, &cov, &cfg).unwrap();
    bayes_monte_carlo(&pe_model, cov.class_sizes(), 1_000_000, &mut rng)?;
    Ok(format!("6 deviations within bound [{}]; Bayes matrix matches 1e6-shot frequencies", rows.join(", ")))
}

fn phase_estimation_model() -> Outcome {
    let grid: Vec<f64> = (0..1000).map(|k| k as f64 / 1000.0).collect();
    let mut worst_sum: f64 = 0.0;
    for t in 1..=12 {
        for &phase in &grid {
            let p = pe_distribution(phase, t).unwrap();
            worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        }
        for m in 0..(1usize << t) {
            let p = pe_distribution(m as f64 / (1u64 << t) as f64, t).unwrap();
            ensure(p[m] == 1.0, || format!("t={t}, m={m}: representable phase not deterministic"))?;
        }
    }
    ensure(worst_sum <= 1e-12, || format!("normalization error {worst_sum:e}"))?;

    for (n, delta) in [(4u32, 0.1f64), (6, 0.05)] {
        let t = n + (2.0 + 1.0 / (2.0 * delta)).log2().ceil() as u32;
        let size = (1u64 << t) as f64;
        let radius = 2f64.powi(-(n as i32));
        for &phase in &grid {
            let p = pe_distribution(phase, t).unwrap();
            let mass: f64 = p
                .iter()
                .enumerate()
                .filter(|(m, _)| {
                    let d = (*m as f64 / size - phase).rem_euclid(1.0);
                    d.min(1.0 - d) <= radius + 1e-12
                })
                .map(|(_, x)| x)
                .sum();
            ensure(mass >= 1.0 - delta, || format!("n={n}, delta={delta}, phase={phase}: mass {mass}"))?;
        }
    }

    let coverings = [
        (vec![(0.0, 1), (0.02, 1), (0.5, 2), (1.0, 1)], 0.2, 6),
        (vec![(0.0, 2), (1.0, 1), (2.0, 1)], 0.45, 5),
        (vec![(0.0, 1), (0.1, 1), (0.15, 1), (0.7, 2), (1.5, 1)], 0.3, 7),
    ];
    let mut checked = 0;
    for (spec, eps, t) in coverings {
        let sd = SpectralDecomposition::from_spectrum(&spec).unwrap();
        let cov = build_covering(&sd, eps).map_err(|e| e.to_string())?;
        let cfg = PeConfig::new(&sd, t, 0.1).unwrap();
        let model = ConfusionModel::from_pe(&sd, &cov, &cfg).unwrap();
        let delta = model.delta.as_ref().unwrap();
        for i in 0..cov.len() {
            for j in (0..cov.len()).filter(|&j| j != i) {
                let bound = misclassification_bound(delta[(i, j)], cfg.eps_phase(&cov), t);
                let value = model.forward.matrix()[(i, j)];
                ensure(value <= bound + 1e-12, || {
                    format!("{spec:?} eps={eps} t={t}: Xi'({i},{j}) = {value:e} > bound {bound:e}")
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("normalization error {worst_sum:.1e}; accuracy guarantee holds; {checked} off-diagonals within the misclassification bound"))
}

fn kappa_oracle() -> Outcome {
    let rank_one = StochasticMatrix::rank_one(&[0.2, 0.5, 0.3]).unwrap();
    let k1 = kappa(&rank_one).unwrap();
    ensure(k1 == 1.0, || format!("rank-one kappa = {k1}"))?;
    let mut rng = stream_rng(9, 0);
    let mut found = 0;
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let pi = random_stochastic(&mut rng, n);
        let k = kappa(&pi).unwrap();
        let mut best: f64 = 0.0;
        for _ in 0..10_000 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = x.iter().sum::<f64>() / n as f64;
            x.iter_mut().for_each(|v| *v -= mean);
            best = best.max(kappa_ratio(&pi, &x).unwrap());
        }
        // the vertices e_i - e_j, which the search treats as additional directions
        let mut vertex: f64 = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let mut x = vec![0.0; n];
                x[i] = 1.0;
                x[j] = -1.0;
                vertex = vertex.max(kappa_ratio(&pi, &x).unwrap());
            }
        }
        ensure(best <= k + 1e-9, || format!("search found {best} above kappa {k}"))?;
        ensure((vertex - k).abs() <= 1e-9, || format!("vertex search {vertex} vs kappa {k}"))?;
        if k - best <= 1e-9 {
            found += 1;
        }
    }
    Ok(format!("rank-one kappa = 1; 20 chains never exceeded, optimum hit by random search in {found}"))
}

fn mean_cost(spec: &[(f64, usize)], beta: f64, samples: usize, seed: u64) -> Result<f64, String> {
    let sd = SpectralDecomposition::from_spectrum(spec).unwrap();
    let pi = metropolis_lumped(&sd, beta).unwrap();
    let oracle = build_oracle(&sd.multiplicities(), &pi, None, seed).unwrap();
    let out = quantum_voter_cftp(oracle, None, &sd, samples, seed, CftpConfig::default()).map_err(|e| e.to_string())?;
    Ok(out.stats.measurements as f64 / samples as f64)
}

fn runtime_scaling() -> Outcome {
    let samples = 2_000;
    let degenerate: Vec<f64> = [4usize, 16, 64]
        .iter()
        .map(|&d| mean_cost(&[(0.0, d / 2), (1.0, d / 2)], 1.0, samples, 10 + d as u64))
        .collect::<Result<_, _>>()?;
    let (lo, hi) = degenerate.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    ensure(hi / lo <= 1.25, || format!("degenerate family not flat: {degenerate:?}"))?;
    let plain: Vec<f64> = [3usize, 5, 8]
        .iter()
        .map(|&d| {
            let spec: Vec<(f64, usize)> = (0..d).map(|i| (i as f64 / (d - 1) as f64, 1)).collect();
            mean_cost(&spec, 1.0, samples, 20 + d as u64)
        })
        .collect::<Result<_, _>>()?;
    ensure(plain[1] / plain[0] > 5.0 / 3.0 && plain[2] / plain[1] > 8.0 / 5.0, || format!("not superlinear: {plain:?}"))?;
    Ok(format!(
        "d'=2, d=4/16/64: {:.1}/{:.1}/{:.1} (ratio {:.3}); d'=d=3/5/8: {:.1}/{:.1}/{:.1}",
        degenerate[0], degenerate[1], degenerate[2], hi / lo, plain[0], plain[1], plain[2]
    ))
}

fn determinism_and_memory() -> Outcome {
    let sd = SpectralDecomposition::from_spectrum(&[(0.0, 2), (0.4, 1), (1.0, 3), (1.3, 1)]).unwrap();
    let cov = SpectralCovering::singletons(&sd);
    let pi = metropolis_lumped(&sd, 1.5).unwrap();
    let cfg = PeConfig::new(&sd, 5, 0.1).unwrap();
    let noisy = ConfusionModel::from_pe(&sd, &cov, &cfg).unwrap();
    let mut peak = (0, 0);
    for confusion in [None, Some(&noisy)] {
        let run = |prune: bool| {
            let oracle = build_oracle(&sd.multiplicities(), &pi, confusion, 77).unwrap();
            let config = CftpConfig { prune, ..CftpConfig::default() };
            quantum_voter_cftp(oracle, Some(&Povm::eigenprojectors(&sd)), &sd, 2_000, 77, config).unwrap()
        };
        let (a, b, c) = (run(true), run(true), run(false));
        ensure(serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap(), || "repeat run differs".into())?;
        ensure(a.samples == c.samples, || "pruned and unpruned samples differ".into())?;
        ensure(a.stats.sample_depths == c.stats.sample_depths, || "pruned and unpruned depths differ".into())?;
        peak = (a.stats.peak_vertices, c.stats.peak_vertices);
    }
    Ok(format!("repeat runs byte-identical; pruned engine matches unpruned (peak vertices {} vs {})", peak.0, peak.1))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("perfect-sampling correctness", perfect_sampling),
        ("classical baseline", classical_baseline),
        ("lumping exactness", lumping_exactness),
        ("coupon-collector formula", coupon_collector),
        ("Pinsker lumping bound", pinsker_bound),
        ("stability bound", stability_bound),
        ("faulty phase-estimation bound", faulty_pe_bound),
        ("phase-estimation model", phase_estimation_model),
        ("kappa oracle", kappa_oracle),
        ("run-time scaling trend", runtime_scaling),
        ("determinism and memory", determinism_and_memory),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name} ({secs:.1} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1} s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
