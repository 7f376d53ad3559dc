//! Wang–Song–Barabási baseline: `C(t) = m (exp(lambda Phi((ln t - mu) / sigma)) - 1)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{cumulative, CountTrajectory, TimeGrid};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::poisson::{fit_mse, PaperFit};
use crate::smoothing::{gaussian_kde, padded_grid, silverman_bandwidth, Bandwidth, DensityEstimate};

pub const DEFAULT_M: f64 = 30.0;
pub const LAMBDA_BOUNDS: (f64, f64) = (0.0, 20.0);
pub const MU_BOUNDS: (f64, f64) = (-2.0, 5.0);
pub const SIGMA_BOUNDS: (f64, f64) = (0.05, 5.0);
/// MSE floor applied before taking log10.
pub const MSE_FLOOR: f64 = 1e-12;

/// Standard normal CDF through `erfc`, accurate to ~1e-15 absolute.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WsbParams {
    pub lambda: f64,
    pub mu: f64,
    pub sigma: f64,
    pub m: f64,
}

impl WsbParams {
    /// Ultimate impact `m (e^lambda - 1)`.
    pub fn ceiling(&self) -> f64 {
        self.m * self.lambda.exp_m1()
    }
}

pub fn wsb_cumulative(t: f64, p: &WsbParams) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidInput(format!("WSB time must be positive, got {t}")));
    }
    Ok(cumulative_at(t, p))
}

fn cumulative_at(t: f64, p: &WsbParams) -> f64 {
    let z = (t.ln() - p.mu) / p.sigma;
    p.m * (p.lambda * normal_cdf(z)).exp_m1()
}

fn cumulative_curve(p: &WsbParams, grid: TimeGrid) -> Vec<f64> {
    grid.points().into_iter().map(|t| cumulative_at(t, p)).collect()
}

fn differences(cum: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    cum.iter()
        .map(|&c| {
            let d = c - prev;
            prev = c;
            d
        })
        .collect()
}

/// Annual increments with `C(0+) = 0`.
pub fn wsb_annual(p: &WsbParams, grid: TimeGrid) -> Vec<f64> {
    differences(&cumulative_curve(p, grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsbOptions {
    pub nelder_mead: NelderMeadOptionsDef,
}

/// Serializable mirror of [`NelderMeadOptions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptionsDef {
    pub max_iter: usize,
    pub ftol: f64,
    pub xtol: f64,
}

impl From<NelderMeadOptionsDef> for NelderMeadOptions {
    fn from(d: NelderMeadOptionsDef) -> Self {
        NelderMeadOptions {
            max_iter: d.max_iter,
            ftol: d.ftol,
            xtol: d.xtol,
        }
    }
}

impl Default for WsbOptions {
    fn default() -> Self {
        let d = NelderMeadOptions::default();
        Self {
            nelder_mead: NelderMeadOptionsDef {
                max_iter: d.max_iter,
                ftol: d.ftol,
                xtol: d.xtol,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsbFit {
    pub id: String,
    pub params: WsbParams,
    pub cumulative: Vec<f64>,
    pub annual: Vec<f64>,
    /// Mean squared error on annual counts.
    pub mse: f64,
    pub converged: bool,
    /// Sum of squared cumulative residuals.
    pub objective: f64,
    /// Objective at each multistart initial point (`None` if non-finite).
    pub initial_objectives: Vec<Option<f64>>,
    pub diagnostics: Option<String>,
}

/// Multistart initial points `(lambda, mu, sigma)` for an item with `total` counts.
pub fn multistarts(total: f64, m: f64) -> Vec<[f64; 3]> {
    let lambda0 = (total / m).ln_1p().clamp(LAMBDA_BOUNDS.0, LAMBDA_BOUNDS.1);
    let mut out = Vec::with_capacity(4);
    for mu in [2f64.ln(), 8f64.ln()] {
        for sigma in [0.5, 1.5] {
            out.push([lambda0, mu, sigma]);
        }
    }
    out
}

fn objective(x: &[f64], m: f64, grid: TimeGrid, observed: &[f64]) -> f64 {
    let p = WsbParams {
        lambda: x[0],
        mu: x[1],
        sigma: x[2],
        m,
    };
    grid.points()
        .iter()
        .zip(observed)
        .map(|(&t, &c)| (cumulative_at(t, &p) - c).powi(2))
        .sum()
}

/// Least-squares fit of cumulative counts, best of four Nelder–Mead runs.
pub fn fit_wsb(traj: &CountTrajectory, m: f64, opts: &WsbOptions) -> Result<WsbFit> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::Config(format!("WSB m must be positive, got {m}")));
    }
    if traj.total() == 0 {
        return Err(Error::InvalidInput(format!(
            "item {} has no counts; WSB needs total >= 1",
            traj.id
        )));
    }
    let grid = TimeGrid::new(traj.counts.len())?;
    let observed: Vec<f64> = cumulative(&traj.counts).into_iter().map(|c| c as f64).collect();
    let f = |x: &[f64]| objective(x, m, grid, &observed);
    let bounds = [LAMBDA_BOUNDS, MU_BOUNDS, SIGMA_BOUNDS];
    let nm: NelderMeadOptions = opts.nelder_mead.into();

    let starts = multistarts(traj.total() as f64, m);
    let mut initial_objectives = Vec::with_capacity(starts.len());
    let mut best: Option<crate::optim::Minimum> = None;
    for start in &starts {
        let f0 = f(start);
        if !f0.is_finite() {
            initial_objectives.push(None);
            continue;
        }
        initial_objectives.push(Some(f0));
        let steps = [0.25 * start[0].max(0.4), 0.5, 0.25];
        let mut run = nelder_mead(f, start, &steps, &bounds, &nm);
        // One restart from the optimum guards against a collapsed simplex.
        let again = nelder_mead(f, &run.x, &[0.1 * run.x[0].max(0.1), 0.1, 0.05], &bounds, &nm);
        if again.value <= run.value {
            run = crate::optim::Minimum {
                iterations: run.iterations + again.iterations,
                ..again
            };
        }
        if !run.value.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| run.value < b.value) {
            best = Some(run);
        }
    }

    let Some(best) = best else {
        let params = WsbParams {
            lambda: starts[0][0],
            mu: starts[0][1],
            sigma: starts[0][2],
            m,
        };
        let annual = vec![0.0; grid.len()];
        return Ok(WsbFit {
            id: traj.id.clone(),
            params,
            cumulative: vec![0.0; grid.len()],
            mse: fit_mse(&traj.counts, &annual),
            annual,
            converged: false,
            objective: f64::MAX,
            initial_objectives,
            diagnostics: Some("every multistart produced a non-finite objective".into()),
        });
    };
    let params = WsbParams {
        lambda: best.x[0],
        mu: best.x[1],
        sigma: best.x[2],
        m,
    };
    let cum = cumulative_curve(&params, grid);
    let annual = differences(&cum);
    Ok(WsbFit {
        id: traj.id.clone(),
        params,
        mse: fit_mse(&traj.counts, &annual),
        cumulative: cum,
        annual,
        converged: best.converged,
        objective: best.value,
        initial_objectives,
        diagnostics: (!best.converged).then(|| format!("Nelder-Mead hit {} iterations", best.iterations)),
    })
}

/// Fit every item with `total >= 1`; items without counts are skipped.
pub fn fit_wsb_all(items: &[CountTrajectory], m: f64, opts: &WsbOptions, exec: Execution) -> Result<Vec<WsbFit>> {
    let eligible: Vec<&CountTrajectory> = items.iter().filter(|t| t.total() >= 1).collect();
    map_indexed(exec, eligible.len(), |i| fit_wsb(eligible[i], m, opts))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub id: String,
    pub log10_mse_wsb: f64,
    pub log10_mse_fpca: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub kde_wsb: DensityEstimate,
    pub kde_fpca: DensityEstimate,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,log10_mse_wsb,log10_mse_fpca\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.id, r.log10_mse_wsb, r.log10_mse_fpca));
        }
        s
    }

    pub fn median_log10_wsb(&self) -> f64 {
        median(self.rows.iter().map(|r| r.log10_mse_wsb).collect())
    }

    pub fn median_log10_fpca(&self) -> f64 {
        median(self.rows.iter().map(|r| r.log10_mse_fpca).collect())
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn log10_floored(mse: f64) -> f64 {
    mse.max(MSE_FLOOR).log10()
}

/// Kernel bandwidth for log-MSE samples: Silverman, or 0.1 when the samples
/// have no spread.
fn kde_bandwidth(samples: &[f64]) -> Bandwidth {
    match silverman_bandwidth(samples) {
        Ok(h) => Bandwidth::Fixed(h),
        Err(_) => Bandwidth::Fixed(0.1),
    }
}

/// Pair Poisson and WSB fits by id and estimate densities of their log10 MSEs
/// on a shared grid of `eval_points` points.
pub fn compare_models(fits: &[PaperFit], wsb: &[WsbFit], eval_points: usize) -> Result<ComparisonTable> {
    let by_id: BTreeMap<&str, &WsbFit> = wsb.iter().map(|w| (w.id.as_str(), w)).collect();
    let fit_ids: BTreeSet<&str> = fits.iter().map(|f| f.id.as_str()).collect();
    let wsb_ids: BTreeSet<&str> = by_id.keys().copied().collect();
    let diff: Vec<String> = fit_ids.symmetric_difference(&wsb_ids).map(|s| s.to_string()).collect();
    if !diff.is_empty() || fits.is_empty() {
        return Err(Error::IdMismatch(diff));
    }
    let rows: Vec<ComparisonRow> = fits
        .iter()
        .map(|f| ComparisonRow {
            id: f.id.clone(),
            log10_mse_wsb: log10_floored(by_id[f.id.as_str()].mse),
            log10_mse_fpca: log10_floored(f.mse),
        })
        .collect();
    let a: Vec<f64> = rows.iter().map(|r| r.log10_mse_wsb).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.log10_mse_fpca).collect();
    let ha = kde_bandwidth(&a);
    let hb = kde_bandwidth(&b);
    let pad = 4.0
        * [ha, hb]
            .iter()
            .map(|h| if let Bandwidth::Fixed(h) = h { *h } else { 0.0 })
            .fold(0.0, f64::max);
    let all: Vec<f64> = a.iter().chain(&b).copied().collect();
    let eval = padded_grid(&all, pad, eval_points);
    Ok(ComparisonTable {
        kde_wsb: gaussian_kde(&a, ha, &eval)?,
        kde_fpca: gaussian_kde(&b, hb, &eval)?,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// erf by the everywhere-convergent series
    /// `2/sqrt(pi) e^{-x^2} sum 2^n x^{2n+1} / (1*3*...*(2n+1))`.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        let mut n = 0.0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) {
            n += 1.0;
            term *= 2.0 * x * x / (2.0 * n + 1.0);
            sum += term;
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    fn phi_oracle(x: f64) -> f64 {
        0.5 * (1.0 + erf_series(x / std::f64::consts::SQRT_2))
    }

    fn p(lambda: f64, mu: f64, sigma: f64) -> WsbParams {
        WsbParams {
            lambda,
            mu,
            sigma,
            m: 30.0,
        }
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.96) - 0.9750021).abs() < 1e-6);
        let mut prev = 0.0;
        for i in -600..=600 {
            let x = i as f64 * 0.01;
            let v = normal_cdf(x);
            assert!((v - phi_oracle(x)).abs() <= 1e-6, "x={x}");
            assert!((v + normal_cdf(-x) - 1.0).abs() < 1e-15);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn cumulative_examples() {
        assert_eq!(wsb_cumulative(5.0, &p(0.0, 1.0, 1.0)).unwrap(), 0.0);
        let c = wsb_cumulative(1.0, &p(1.0, 0.0, 1.0)).unwrap();
        assert!((c - 30.0 * (0.5f64.exp() - 1.0)).abs() < 1e-12);
        assert!((c - 19.4616).abs() < 1e-4);
        let far = wsb_cumulative(1e12, &p(1.0, 0.0, 1.0)).unwrap();
        assert!((far - 51.548).abs() < 1e-3);
        assert!(wsb_cumulative(0.0, &p(1.0, 0.0, 1.0)).is_err());
        assert!(wsb_cumulative(-1.0, &p(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn annual_examples() {
        let grid = TimeGrid::new(30).unwrap();
        assert!(wsb_annual(&p(0.0, 1.0, 1.0), grid).iter().all(|&v| v == 0.0));
        let q = p(1.3, 1.1, 0.7);
        let annual = wsb_annual(&q, grid);
        let total: f64 = annual.iter().sum();
        assert!((total - wsb_cumulative(30.0, &q).unwrap()).abs() < 1e-9);
        assert!((annual[0] - wsb_cumulative(1.0, &q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn recovers_generating_params() {
        let grid = TimeGrid::new(30).unwrap();
        let truth = p(1.2, 0.8, 0.6);
        let counts: Vec<u64> = wsb_annual(&truth, grid).iter().map(|v| v.round() as u64).collect();
        let traj = CountTrajectory::new("w", counts.clone());
        let fit = fit_wsb(&traj, 30.0, &WsbOptions::default()).unwrap();
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(fit.params.lambda, 1.2) < 0.1, "{:?}", fit.params);
        assert!(rel(fit.params.mu, 0.8) < 0.1, "{:?}", fit.params);
        assert!(rel(fit.params.sigma, 0.6) < 0.1, "{:?}", fit.params);
        let truth_mse = fit_mse(&counts, &wsb_annual(&truth, grid));
        assert!(fit.mse < truth_mse + 0.5);
        for c in fit.cumulative.windows(2) {
            assert!(c[1] >= c[0]);
        }
    }

    #[test]
    fn single_early_count() {
        let mut counts = vec![0u64; 30];
        counts[0] = 1;
        let fit = fit_wsb(&CountTrajectory::new("x", counts), 30.0, &WsbOptions::default()).unwrap();
        assert!((fit.cumulative[0] - 1.0).abs() < 0.05, "{:?}", fit.cumulative);
        assert!((fit.cumulative[29] - fit.cumulative[1]).abs() < 0.05);
        for init in fit.initial_objectives.iter().flatten() {
            assert!(fit.objective <= *init);
        }
    }

    #[test]
    fn zero_trajectory_rejected() {
        let r = fit_wsb(&CountTrajectory::new("z", vec![0; 10]), 30.0, &WsbOptions::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn best_m_reported_only() {
        // m is global; scanning it on one item only reports which value fits best.
        let grid = TimeGrid::new(30).unwrap();
        let truth = p(1.5, 1.5, 0.8);
        let counts: Vec<u64> = wsb_annual(&truth, grid).iter().map(|v| v.round() as u64).collect();
        let traj = CountTrajectory::new("m", counts);
        let fits: Vec<WsbFit> = [15.0, 30.0, 60.0]
            .iter()
            .map(|&m| fit_wsb(&traj, m, &WsbOptions::default()).unwrap())
            .collect();
        let best = fits.iter().map(|f| f.objective).fold(f64::INFINITY, f64::min);
        for f in &fits {
            assert!(best <= f.objective);
            // Every m reproduces the curve closely; the ceiling is shared.
            assert!(f.objective < 50.0, "{f:?}");
        }
    }

    fn paper_fit(id: &str, mse: f64) -> PaperFit {
        PaperFit {
            id: id.into(),
            scores: vec![],
            eta: vec![],
            intensity: vec![],
            loglik: 0.0,
            mse,
            iterations: 0,
            converged: true,
            ridge: false,
            max_abs_grad: 0.0,
        }
    }

    fn wsb_fit(id: &str, mse: f64) -> WsbFit {
        WsbFit {
            id: id.into(),
            params: p(1.0, 1.0, 1.0),
            cumulative: vec![],
            annual: vec![],
            mse,
            converged: true,
            objective: 0.0,
            initial_objectives: vec![],
            diagnostics: None,
        }
    }

    #[test]
    fn comparison_diagonal_and_floor() {
        let fits = vec![paper_fit("a", 2.0), paper_fit("b", 0.0), paper_fit("c", 10.0)];
        let wsb = vec![wsb_fit("c", 10.0), wsb_fit("a", 2.0), wsb_fit("b", 0.0)];
        let t = compare_models(&fits, &wsb, 128).unwrap();
        for r in &t.rows {
            assert_eq!(r.log10_mse_wsb, r.log10_mse_fpca);
        }
        assert_eq!(t.rows[1].log10_mse_fpca, -12.0);
        assert!((t.kde_wsb.integral() - 1.0).abs() < 0.02);
        assert!(t.to_csv().starts_with("id,log10_mse_wsb,log10_mse_fpca\na,"));
    }

    #[test]
    fn comparison_constant_samples_use_fixed_bandwidth() {
        let fits = vec![paper_fit("a", 1.0), paper_fit("b", 1.0)];
        let wsb = vec![wsb_fit("a", 1.0), wsb_fit("b", 1.0)];
        let t = compare_models(&fits, &wsb, 256).unwrap();
        assert_eq!(t.kde_fpca.bandwidth, 0.1);
        assert!((t.kde_fpca.integral() - 1.0).abs() < 0.02);
    }

    #[test]
    fn comparison_id_mismatch() {
        let fits = vec![paper_fit("a", 1.0), paper_fit("b", 1.0)];
        let wsb = vec![wsb_fit("b", 1.0), wsb_fit("c", 1.0)];
        match compare_models(&fits, &wsb, 64) {
            Err(Error::IdMismatch(ids)) => assert_eq!(ids, vec!["a".to_string(), "c".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(compare_models(&[], &[], 64).is_err());
    }

    proptest! {
        #[test]
        fn cumulative_monotone_and_bounded(lambda in 0.0f64..20.0, mu in -2.0f64..5.0, sigma in 0.05f64..5.0) {
            let q = p(lambda, mu, sigma);
            let mut prev = 0.0;
            for i in 1..=600 {
                let c = wsb_cumulative(i as f64 * 0.05, &q).unwrap();
                prop_assert!(c >= prev - 1e-9 * q.ceiling().max(1.0));
                prop_assert!(c >= 0.0 && c <= q.ceiling() * (1.0 + 1e-12));
                prev = c;
            }
        }

        #[test]
        fn annual_matches_direct_differences(lambda in 0.0f64..5.0, mu in -2.0f64..5.0, sigma in 0.05f64..5.0) {
            let q = p(lambda, mu, sigma);
            let grid = TimeGrid::new(12).unwrap();
            let annual = wsb_annual(&q, grid);
            for j in 0..12 {
                let hi = wsb_cumulative(j as f64 + 1.0, &q).unwrap();
                let lo = if j == 0 { 0.0 } else { wsb_cumulative(j as f64, &q).unwrap() };
                prop_assert!((annual[j] - (hi - lo)).abs() <= 1e-9 * q.ceiling().max(1.0));
            }
        }
    }
}
