//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

#![allow(clippy::needless_range_loop)]

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajfda::cluster::{
    adjusted_rand_index, kmeans, kmedoids, label_clusters, robustness_sweep, Method, ShapeLabel, SweepOptions,
    DEFAULT_RESTARTS,
};
use trajfda::data::{write_corpus, CountTrajectory, Format, TimeGrid};
use trajfda::fpca::{
    eigendecompose_symmetric, fpca, select_k_loglik, truncate_basis, BandwidthPolicy, BasisPolicy, LatentBasis,
};
use trajfda::pipeline::{run_on_corpus, run_pipeline, sensitivity, PipelineConfig, SensitivityOptions};
use trajfda::poisson::{fit_corpus, fit_scores, loglik_grad_hess, poisson_loglik, FitOptions};
use trajfda::synth::{make_basis, recovery_report, simulate_corpus, BasisFamily, GeneratorSpec};
use trajfda::wsb::{compare_models, fit_wsb, fit_wsb_all, wsb_annual, WsbOptions, WsbParams};
use trajfda::Execution;

const SERIAL: Execution = Execution::Serial;

/// Print the verdict line and fail the test if needed. Writes to the raw
/// stderr handle so the line shows without `--nocapture`.
fn verdict(n: u32, title: &str, ok: bool, detail: String) {
    use std::io::Write;
    let line = format!(
        "criterion {n:>2} [{title}]: {} — {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

fn random_basis(rng: &mut ChaCha8Rng, t: usize, k: usize) -> LatentBasis {
    let phis = make_basis(t, k, BasisFamily::Polynomial).unwrap();
    let grid = TimeGrid::new(t).unwrap();
    let mean: Vec<f64> = (0..t)
        .map(|j| 1.0 + 0.8 * (j as f64 / t as f64) + rng.random_range(-0.2..0.2))
        .collect();
    LatentBasis {
        grid,
        mean_derivative: vec![0.0; t],
        mean,
        mean_bandwidth: 1.0,
        eigenvalues: (0..k).map(|i| 1.0 / (i + 1) as f64).collect(),
        eigenfunctions: phis,
        fve: vec![0.0; k],
    }
}

fn poisson_draw(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    use rand_distr::{Distribution, Poisson};
    Poisson::new(lambda).unwrap().sample(rng) as u64
}

fn eta_at(basis: &LatentBasis, xi: &[f64]) -> Vec<f64> {
    basis.eta(xi)
}

#[test]
fn c01_gradient_and_hessian_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (t, k) = (30, 4);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let basis = random_basis(&mut rng, t, k);
        let xi: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let counts: Vec<u64> = eta_at(&basis, &xi)
            .iter()
            .map(|e| poisson_draw(&mut rng, e.exp()))
            .collect();
        let (g, h) = loglik_grad_hess(&counts, &eta_at(&basis, &xi), &basis).unwrap();
        let ll = |x: &[f64]| poisson_loglik(&counts, &eta_at(&basis, x)).unwrap();
        let grad_at = |x: &[f64]| loglik_grad_hess(&counts, &eta_at(&basis, x), &basis).unwrap().0;
        let step = 1e-5;
        for a in 0..k {
            let mut xp = xi.clone();
            let mut xm = xi.clone();
            xp[a] += step;
            xm[a] -= step;
            let fd = (ll(&xp) - ll(&xm)) / (2.0 * step);
            worst = worst.max((g[a] - fd).abs() / g[a].abs().max(1.0));
            let (gp, gm) = (grad_at(&xp), grad_at(&xm));
            for b in 0..k {
                let fd = (gp[b] - gm[b]) / (2.0 * step);
                worst = worst.max((h[a][b] - fd).abs() / h[a][b].abs().max(1.0));
            }
        }
    }
    let el = start.elapsed();
    verdict(
        1,
        "gradient/Hessian",
        worst < 1e-6 && el < Duration::from_secs(5),
        format!("max relative error {worst:.2e} over 100 instances in {el:.2?}"),
    );
}

#[test]
fn c02_newton_attains_global_optimum() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (t, k) = (6, 2);
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..50 {
        let basis = random_basis(&mut rng, t, k);
        let xi: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let counts: Vec<u64> = eta_at(&basis, &xi)
            .iter()
            .map(|e| poisson_draw(&mut rng, e.exp()))
            .collect();
        let fit = fit_scores(
            &CountTrajectory::new("x", counts.clone()),
            &basis,
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        for i in 0..61 {
            for j in 0..61 {
                let x = [
                    fit.scores[0] - 3.0 + 0.1 * i as f64,
                    fit.scores[1] - 3.0 + 0.1 * j as f64,
                ];
                let eta = eta_at(&basis, &x);
                if let Ok(l) = poisson_loglik(&counts, &eta) {
                    worst_gap = worst_gap.max(l - fit.loglik);
                }
            }
        }
    }
    let el = start.elapsed();
    verdict(
        2,
        "global optimum",
        worst_gap <= 1e-9 && el < Duration::from_secs(10),
        format!("best grid point exceeds the MLE by {worst_gap:.2e} (50 instances, {el:.2?})"),
    );
}

#[test]
fn c03_eigenbasis_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let (mut recon, mut ortho) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let n = rng.random_range(1..=30);
        let mut c = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let v = rng.random_range(-1.0..1.0);
                c[i][j] = v;
                c[j][i] = v;
            }
        }
        let e = eigendecompose_symmetric(&c, 1.0).unwrap();
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n).map(|k| e.values[k] * e.vectors[k][i] * e.vectors[k][j]).sum();
                recon = recon.max((r - c[i][j]).abs());
                let d: f64 = (0..n).map(|s| e.vectors[i][s] * e.vectors[j][s]).sum();
                ortho = ortho.max((d - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    let two = eigendecompose_symmetric(&[vec![2.0, 1.0], vec![1.0, 2.0]], 1.0).unwrap();
    let exact = (two.values[0] - 3.0).abs().max((two.values[1] - 1.0).abs());
    verdict(
        3,
        "eigenbasis",
        recon < 1e-8 && ortho < 1e-8 && exact < 1e-12,
        format!("reconstruction {recon:.1e}, orthonormality {ortho:.1e}, 2x2 error {exact:.1e}"),
    );
}

#[test]
fn c04_synthetic_recovery() {
    let start = Instant::now();
    let seeds = 20;
    let mut recommended_four = 0;
    let mut first = None;
    for s in 0..seeds {
        let spec = GeneratorSpec {
            seed: GeneratorSpec::default().seed + s,
            ..Default::default()
        };
        let (corpus, truth) = simulate_corpus(&spec, SERIAL).unwrap();
        let decomp = fpca(&corpus, &BandwidthPolicy::default()).unwrap();
        let wide = truncate_basis(&decomp, BasisPolicy::Fixed(6)).unwrap();
        let table = select_k_loglik(&corpus, &wide, &[1, 2, 3, 4, 5, 6], 5, &FitOptions::default(), SERIAL).unwrap();
        if table.recommended_k == 4 {
            recommended_four += 1;
        }
        if s == 0 {
            let basis = wide.leading(4);
            let fits = fit_corpus(&corpus, &basis, &FitOptions::default(), SERIAL).unwrap();
            first = Some(recovery_report(&truth, &basis, &fits.fits, None).unwrap());
        }
    }
    let el = start.elapsed();
    let rep = first.unwrap();
    let min_corr = rep.score_correlations.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = rep.max_rms < 0.15
        && min_corr > 0.9
        && recommended_four as f64 >= 0.9 * seeds as f64
        && el < Duration::from_secs(60);
    verdict(
        4,
        "synthetic recovery",
        ok,
        format!(
            "eigenfunction RMS {:?}, score r {:?}, K=4 recommended in {recommended_four}/{seeds} seeds, {el:.2?}",
            rep.eigenfunction_rms
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>(),
            rep.score_correlations
                .iter()
                .map(|v| format!("{v:.3}"))
                .collect::<Vec<_>>(),
        ),
    );
}

/// Exhaustive minimum within-cluster SS over all partitions into `k` nonempty groups.
fn best_partition(points: &[Vec<f64>], k: usize) -> f64 {
    fn rec(i: usize, labels: &mut Vec<usize>, used: usize, k: usize, pts: &[Vec<f64>], best: &mut f64) {
        if i == pts.len() {
            if used == k {
                let mut ss = 0.0;
                for c in 0..k {
                    let members: Vec<&Vec<f64>> = pts
                        .iter()
                        .zip(labels.iter())
                        .filter(|(_, &l)| l == c)
                        .map(|(p, _)| p)
                        .collect();
                    let d = members[0].len();
                    let m: Vec<f64> = (0..d)
                        .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                        .collect();
                    ss += members
                        .iter()
                        .map(|p| p.iter().zip(&m).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                        .sum::<f64>();
                }
                *best = best.min(ss);
            }
            return;
        }
        for c in 0..(used + 1).min(k) {
            labels.push(c);
            rec(i + 1, labels, used.max(c + 1), k, pts, best);
            labels.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(0, &mut Vec::new(), 0, k, points, &mut best);
    best
}

const ORACLE_RESTARTS: usize = 50;

#[test]
fn c05_clustering_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut kmeans_gap = 0.0f64;
    let mut monotone = true;
    for trial in 0..30 {
        let n = rng.random_range(4..=8);
        let k = rng.random_range(2..=3.min(n));
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        // Tiny instances have many shallow local optima; use a generous restart budget.
        let m = kmeans(&pts, k, trial, ORACLE_RESTARTS, SERIAL).unwrap();
        kmeans_gap = kmeans_gap.max(m.within_ss - best_partition(&pts, k));
        monotone &= m.history.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    let mut pam_gap = 0.0f64;
    for trial in 0..30 {
        let pts: Vec<Vec<f64>> = (0..7)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let mut best = f64::INFINITY;
        for a in 0..7 {
            for b in a + 1..7 {
                best = best.min(pts.iter().map(|p| d(p, &pts[a]).min(d(p, &pts[b]))).sum());
            }
        }
        let m = kmedoids(&pts, 2, trial, DEFAULT_RESTARTS, SERIAL).unwrap();
        pam_gap = pam_gap.max((m.within_ss - best).abs());
    }
    // Larger data for the per-iteration monotonicity check.
    for seed in 0..10 {
        let pts: Vec<Vec<f64>> = (0..300)
            .map(|_| vec![rng.random(), rng.random(), rng.random()])
            .collect();
        let m = kmeans(&pts, 5, seed, 3, SERIAL).unwrap();
        monotone &= m.history.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    }
    verdict(
        5,
        "clustering oracles",
        kmeans_gap < 1e-9 && pam_gap < 1e-9 && monotone,
        format!("k-means gap {kmeans_gap:.1e}, PAM gap {pam_gap:.1e}, Lloyd monotone {monotone}"),
    );
}

#[test]
fn c06_four_archetype_discovery() {
    let spec = GeneratorSpec::default();
    let (corpus, truth) = simulate_corpus(&spec, SERIAL).unwrap();
    let decomp = fpca(&corpus, &BandwidthPolicy::default()).unwrap();
    let basis = truncate_basis(&decomp, BasisPolicy::Fixed(4)).unwrap();
    let fits = fit_corpus(&corpus, &basis, &FitOptions::default(), SERIAL).unwrap();
    let scores: Vec<Vec<f64>> = fits.fits.iter().map(|f| f.scores.clone()).collect();
    let model = kmeans(&scores, 4, spec.seed, DEFAULT_RESTARTS, SERIAL).unwrap();
    let labels = label_clusters(&model, &basis, &Default::default()).unwrap();
    let ari = adjusted_rand_index(&model.assignments, &truth.archetypes);
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    // Cluster holding most of the planted increasing archetype.
    let evergreen_arch = spec.archetypes.iter().position(|a| a.name == "evergreen").unwrap();
    let mut counts = [0usize; 4];
    for (&a, &t) in model.assignments.iter().zip(&truth.archetypes) {
        if t == evergreen_arch {
            counts[a] += 1;
        }
    }
    let ever_cluster = (0..4).max_by_key(|&c| counts[c]).unwrap();
    let ok = ari >= 0.8 && distinct.len() == 4 && labels[ever_cluster] == ShapeLabel::Evergreen;
    verdict(
        6,
        "four archetypes",
        ok,
        format!(
            "ARI {ari:.4}, labels {labels:?}, planted evergreen -> {}",
            labels[ever_cluster]
        ),
    );
}

#[test]
fn c07_wsb_baseline() {
    let grid = TimeGrid::new(30).unwrap();
    let mut worst = 0.0f64;
    for &(lambda, mu, sigma) in &[
        (1.2, 0.8, 0.6),
        (2.0, 1.5, 0.9),
        (1.5, 2.0, 1.0),
        (2.5, 1.0, 0.7),
        (0.9, 0.5, 0.5),
    ] {
        let truth = WsbParams {
            lambda,
            mu,
            sigma,
            m: 30.0,
        };
        let counts: Vec<u64> = wsb_annual(&truth, grid).iter().map(|v| v.round() as u64).collect();
        let fit = fit_wsb(&CountTrajectory::new("w", counts), 30.0, &WsbOptions::default()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        worst = worst
            .max(rel(fit.params.lambda, lambda))
            .max(rel(fit.params.mu, mu))
            .max(rel(fit.params.sigma, sigma));
    }

    let spec = GeneratorSpec {
        n: 600,
        seed: 707,
        ..Default::default()
    };
    let (corpus, _) = simulate_corpus(&spec, Execution::Parallel).unwrap();
    let decomp = fpca(&corpus, &BandwidthPolicy::default()).unwrap();
    let basis = truncate_basis(&decomp, BasisPolicy::Fixed(4)).unwrap();
    let fits = fit_corpus(&corpus, &basis, &FitOptions::default(), Execution::Parallel).unwrap();
    let wsb = fit_wsb_all(corpus.items(), 30.0, &WsbOptions::default(), Execution::Parallel).unwrap();
    let table = compare_models(&fits.fits, &wsb, 512).unwrap();
    let (mw, mf) = (table.median_log10_wsb(), table.median_log10_fpca());
    let (iw, ifp) = (table.kde_wsb.integral(), table.kde_fpca.integral());
    let ok = worst < 0.1 && mf <= mw && (iw - 1.0).abs() < 0.02 && (ifp - 1.0).abs() < 0.02;
    verdict(
        7,
        "WSB baseline",
        ok,
        format!(
            "worst parameter error {:.2}%, median log10 MSE fpca {mf:.3} vs wsb {mw:.3}, KDE integrals {iw:.4}/{ifp:.4}",
            100.0 * worst
        ),
    );
}

#[test]
fn c08_robustness_sweeps() {
    let start = Instant::now();
    let mut cfg = PipelineConfig {
        execution: SERIAL,
        ..Default::default()
    };
    cfg.settings.run_wsb = false;
    cfg.settings.run_sweep = false;
    cfg.settings.run_selection = false;
    cfg.settings.sensitivity_thresholds = vec![];
    let (corpus, _) = simulate_corpus(&GeneratorSpec::default(), SERIAL).unwrap();
    let model = run_on_corpus(&cfg, &corpus).unwrap();
    let body = &model.model;
    let scores: Vec<Vec<f64>> = body
        .fit
        .as_ref()
        .unwrap()
        .fits
        .iter()
        .map(|f| f.scores.clone())
        .collect();
    let opts = SweepOptions {
        seed: cfg.settings.seed,
        ..Default::default()
    };
    let sweep = robustness_sweep(&scores, None, Some(body.basis().unwrap()), &opts, SERIAL).unwrap();
    let min_ari = sweep
        .agreement
        .iter()
        .filter(|a| a.k == 4)
        .map(|a| a.ari)
        .fold(f64::INFINITY, f64::min);
    let sens = sensitivity(
        body,
        &SensitivityOptions {
            thresholds: vec![0, 10],
            ks: vec![4],
            methods: vec![Method::KMeans],
            refit: false,
        },
        SERIAL,
    )
    .unwrap();
    let cell = sens.cell(10, Method::KMeans, 4).unwrap();
    let el = start.elapsed();
    let ok = sweep.cells.len() == 15 && min_ari >= 0.8 && cell.ari_vs_reference >= 0.7 && el < Duration::from_secs(120);
    verdict(
        8,
        "robustness sweeps",
        ok,
        format!(
            "{} cells, min pairwise ARI at K=4 {min_ari:.4}, threshold 10 ARI {:.4} on {} common items, {el:.2?}",
            sweep.cells.len(),
            cell.ari_vs_reference,
            cell.common_items
        ),
    );
}

#[test]
fn c09_c10_determinism_and_scale() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("corpus.csv");
    let (corpus, _) = simulate_corpus(&GeneratorSpec::default(), SERIAL).unwrap();
    write_corpus(&corpus, Format::Csv, std::fs::File::create(&input).unwrap()).unwrap();

    let mut cfg = PipelineConfig {
        input: Some(input),
        ..Default::default()
    };
    cfg.execution = SERIAL;
    cfg.settings.run_wsb = false;
    let t0 = Instant::now();
    let no_wsb = run_pipeline(&cfg).unwrap();
    let without = t0.elapsed();
    drop(no_wsb);

    cfg.settings.run_wsb = true;
    let t0 = Instant::now();
    let serial = run_pipeline(&cfg).unwrap().stamped();
    let with = t0.elapsed();
    cfg.execution = Execution::Parallel;
    let parallel = run_pipeline(&cfg).unwrap();
    let again = run_pipeline(&cfg).unwrap();

    let strip = |m: &trajfda::pipeline::ModelFile| {
        let mut m = m.clone();
        m.created_at = None;
        m.to_json().unwrap()
    };
    let identical = strip(&serial) == strip(&parallel) && strip(&parallel) == strip(&again);
    verdict(
        9,
        "determinism",
        identical,
        format!(
            "serial, parallel and repeated runs byte-identical: {identical} ({} bytes)",
            strip(&serial).len()
        ),
    );
    let ok = without < Duration::from_secs(10) && with < Duration::from_secs(120);
    verdict(
        10,
        "end-to-end scale",
        ok,
        format!("n=2000 T=30 single-threaded: {without:.2?} without WSB, {with:.2?} with WSB"),
    );
}
