//! Coupled Monte Carlo estimation of strong Lᵖ sup-errors and empirical
//! convergence orders.
//!
//! Every sample draws one Brownian path at `ref_resolution`. The reference
//! solution is the scheme run on that path; each coarse resolution `n` runs
//! the scheme on the subsampled path, so both see the same realization. Both
//! approximations are piecewise linear in `t`, hence the sup of their
//! difference over `[0, T]` is attained on the union of their breakpoints.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{em_simulate, EmPath};
use crate::brownian::BrownianPath;
use crate::diffusion::{builtin_coefficient, DiffusionCoefficient, SmoothnessClass};
use crate::error::{Error, Result};
use crate::timechange::{merge_sorted, sup_inverse_gap, sup_phi_gap, SamplePath, TimeChangePath};

/// Order used for the theoretical overlays; the rate theorems hold for every
/// α < 1/2.
pub const OVERLAY_ALPHA: f64 = 0.49;

/// Mean errors below this are excluded from the rate fit.
pub const ERROR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    TimeChange,
    EulerMaruyama,
}

impl Scheme {
    fn module(self) -> &'static str {
        match self {
            Scheme::TimeChange => "timechange",
            Scheme::EulerMaruyama => "baseline",
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::TimeChange
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Corpus name, see [`crate::diffusion::CORPUS`].
    pub coefficient: String,
    #[serde(default)]
    pub params: Vec<f64>,
    /// SDE horizon T.
    pub horizon: f64,
    #[serde(default)]
    pub x0: f64,
    pub resolutions: Vec<usize>,
    pub ref_resolution: usize,
    pub p: f64,
    pub samples: u64,
    pub master_seed: u64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    /// Run both schemes side by side (see [`compare_schemes`]).
    #[serde(default)]
    pub compare: bool,
}

impl ExperimentConfig {
    pub fn diffusion(&self) -> Result<DiffusionCoefficient> {
        builtin_coefficient(&self.coefficient, &self.params).map_err(|e| match e {
            Error::UnknownCoefficient { .. } => Error::config("coefficient", e.to_string()),
            other => Error::config("params", other.to_string()),
        })
    }

    /// Checks every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        self.diffusion()?;
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::config("horizon", "must be positive and finite"));
        }
        if !self.x0.is_finite() {
            return Err(Error::config("x0", "must be finite"));
        }
        self.check_resolutions()?;
        let top = *self.resolutions.iter().max().expect("non-empty");
        if self.ref_resolution < 4 * top {
            return Err(Error::config(
                "ref_resolution",
                format!(
                    "{} must be at least 4 x the largest resolution ({top})",
                    self.ref_resolution
                ),
            ));
        }
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::config("p", "must be a finite real >= 1"));
        }
        if self.samples < 2 {
            return Err(Error::config("samples", "need at least 2 samples"));
        }
        Ok(())
    }

    fn check_resolutions(&self) -> Result<()> {
        if self.ref_resolution == 0 {
            return Err(Error::config("ref_resolution", "must be positive"));
        }
        if self.resolutions.is_empty() {
            return Err(Error::config("resolutions", "must not be empty"));
        }
        for &n in &self.resolutions {
            if n == 0 || self.ref_resolution % n != 0 {
                return Err(Error::config(
                    "resolutions",
                    format!("{n} does not divide ref_resolution {}", self.ref_resolution),
                ));
            }
        }
        Ok(())
    }

    /// Brownian horizon drawn per sample: the time change needs at most
    /// `C2² T` of Brownian time, plus two coarse steps and a 10% margin.
    fn brownian_horizon(&self, sigma: &DiffusionCoefficient) -> f64 {
        let n_min = *self.resolutions.iter().min().expect("non-empty") as f64;
        let speed = match self.scheme {
            Scheme::TimeChange => sigma.upper_bound() * sigma.upper_bound(),
            Scheme::EulerMaruyama => 1.0,
        };
        1.1 * speed * self.horizon + 2.0 / n_min
    }

    fn with_scheme(&self, scheme: Scheme) -> Self {
        Self {
            scheme,
            compare: false,
            ..self.clone()
        }
    }
}

/// Empirical check of `sup |τ_n - τ_ref| <= C2² sup |φ_n - φ_ref|` for one
/// resolution of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeChangeBound {
    pub n: usize,
    /// `sup_{t <= T} |τ_n(t) - τ_ref(t)|`.
    pub tau_gap: f64,
    /// `sup_{s <= C2² T} |φ_n(s) - φ_ref(s)|`.
    pub phi_gap: f64,
    pub c2_squared: f64,
}

impl TimeChangeBound {
    pub fn holds(&self, tolerance: f64) -> bool {
        self.tau_gap <= self.c2_squared * self.phi_gap + tolerance
    }
}

/// Per-sample result.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    /// Sup-errors, one per configured resolution (config order).
    pub errors: Vec<f64>,
    /// Present when the bound check was requested and the scheme is
    /// [`Scheme::TimeChange`].
    pub bounds: Option<Vec<TimeChangeBound>>,
}

/// Sup-errors of one sample against its coupled reference, one per entry of
/// `config.resolutions`.
pub fn strong_error_one_sample(config: &ExperimentConfig, sample_index: u64) -> Result<Vec<f64>> {
    Ok(run_sample(config, sample_index, false)?.errors)
}

/// Like [`strong_error_one_sample`], additionally checking the time-change
/// bound at every resolution (time-change scheme only).
pub fn run_sample(
    config: &ExperimentConfig,
    sample_index: u64,
    check_bound: bool,
) -> Result<SampleOutcome> {
    config.check_resolutions()?;
    let sigma = config.diffusion()?;
    let fine = BrownianPath::generate(
        config.ref_resolution,
        config.brownian_horizon(&sigma),
        config.x0,
        config.master_seed,
        sample_index,
    )?;
    match config.scheme {
        Scheme::TimeChange => time_change_sample(config, &sigma, fine, check_bound),
        Scheme::EulerMaruyama => Ok(SampleOutcome {
            errors: em_sample(config, &sigma, &fine)?,
            bounds: None,
        }),
    }
}

fn time_change_sample(
    config: &ExperimentConfig,
    sigma: &DiffusionCoefficient,
    fine: BrownianPath,
    check_bound: bool,
) -> Result<SampleOutcome> {
    let horizon = config.horizon;
    let reference = SamplePath::build(fine, sigma, horizon)?;
    let ref_points = reference.breakpoints();

    let c2_squared = sigma.upper_bound() * sigma.upper_bound();
    let phi_span = c2_squared * horizon;
    let ref_through = if check_bound {
        Some(build_through(reference.xi().clone(), sigma, phi_span)?)
    } else {
        None
    };

    let mut errors = Vec::with_capacity(config.resolutions.len());
    let mut bounds = Vec::new();
    for &n in &config.resolutions {
        let xi = reference.xi().subsample(config.ref_resolution / n)?;
        let coarse = SamplePath::build(xi, sigma, horizon)?;
        errors.push(sup_gap(&coarse, &reference, &ref_points)?);

        if let Some(ref_through) = &ref_through {
            let coarse_through = build_through(coarse.xi().clone(), sigma, phi_span)?;
            bounds.push(TimeChangeBound {
                n,
                tau_gap: sup_inverse_gap(coarse.time_change(), reference.time_change(), horizon)?,
                phi_gap: sup_phi_gap(&coarse_through, ref_through, phi_span)?,
                c2_squared,
            });
        }
    }
    Ok(SampleOutcome {
        errors,
        bounds: ref_through.map(|_| bounds),
    })
}

fn build_through(
    mut xi: BrownianPath,
    sigma: &DiffusionCoefficient,
    brownian_time: f64,
) -> Result<TimeChangePath> {
    let needed = brownian_time + 2.0 / xi.n() as f64;
    if xi.last_time() < needed {
        xi.extend_to(needed)?;
    }
    TimeChangePath::build_through(&xi, sigma, brownian_time)
}

/// Sup of `|coarse - reference|` over the union of their breakpoints.
fn sup_gap(coarse: &SamplePath, reference: &SamplePath, ref_points: &[f64]) -> Result<f64> {
    let points = merge_sorted(&coarse.breakpoints(), ref_points);
    let (mut a, mut b) = (coarse.cursor(), reference.cursor());
    let mut sup = 0.0f64;
    for t in points {
        sup = sup.max((a.evaluate(t)? - b.evaluate(t)?).abs());
    }
    Ok(sup)
}

fn em_sample(
    config: &ExperimentConfig,
    sigma: &DiffusionCoefficient,
    fine: &BrownianPath,
) -> Result<Vec<f64>> {
    let reference = em_simulate(sigma, fine, config.horizon, config.x0)?;
    // Coarse EM knots are a subset of the reference knots.
    let points = reference.breakpoints();
    config
        .resolutions
        .iter()
        .map(|&n| {
            let driver = fine.subsample(config.ref_resolution / n)?;
            let coarse = em_simulate(sigma, &driver, config.horizon, config.x0)?;
            em_sup_gap(&coarse, &reference, &points)
        })
        .collect()
}

fn em_sup_gap(coarse: &EmPath, reference: &EmPath, points: &[f64]) -> Result<f64> {
    let mut sup = 0.0f64;
    for &t in points {
        sup = sup.max((coarse.evaluate(t)? - reference.evaluate(t)?).abs());
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolutionError {
    pub n: usize,
    /// `((1/M) Σ errᵖ)^(1/p)`.
    pub mean_error: f64,
    /// Delta-method standard error of `mean_error`.
    pub stderr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalOrders {
    pub alpha: f64,
    /// α²β, the guaranteed order of the time-change scheme for β-Hölder σ.
    pub holder: f64,
    /// α, the order for smooth σ; absent unless the coefficient claims it.
    pub smooth: Option<f64>,
    /// β - 1/2 for Euler–Maruyama (1/2 ≤ β ≤ 1); absent for β < 1/2 where no
    /// rate is known. β = 1/2 gives a logarithmic rate, reported as 0.
    pub euler_maruyama: Option<f64>,
}

impl TheoreticalOrders {
    pub fn for_coefficient(sigma: &DiffusionCoefficient) -> Self {
        let beta = sigma.holder_beta();
        let alpha = OVERLAY_ALPHA;
        Self {
            alpha,
            holder: alpha * alpha * beta,
            smooth: (sigma.smoothness() == SmoothnessClass::LipschitzSmooth).then_some(alpha),
            euler_maruyama: (beta >= 0.5).then(|| beta - 0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config: ExperimentConfig,
    pub coefficient_label: String,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub holder_beta: f64,
    pub tool: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub scheme: Scheme,
    pub per_resolution: Vec<ResolutionError>,
    /// Least-squares slope of `ln(error)` against `ln(1/n)`.
    pub fitted_order: Option<f64>,
    pub fit_stderr: Option<f64>,
    pub theoretical_orders: TheoreticalOrders,
    pub metadata: ReportMetadata,
}

impl RateReport {
    /// Writes the `n,mean_error,stderr` table.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,mean_error,stderr")?;
        for r in &self.per_resolution {
            writeln!(out, "{},{},{}", r.n, r.mean_error, r.stderr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub order: f64,
    /// `None` with fewer than three points.
    pub stderr: Option<f64>,
}

/// Ordinary least squares of `ln(error)` on `ln(1/n)`, skipping errors below
/// [`ERROR_FLOOR`]. Needs at least two usable points.
pub fn fit_order(points: &[(usize, f64)]) -> Option<LogLogFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, e)| *e >= ERROR_FLOOR && e.is_finite())
        .map(|&(n, e)| ((1.0 / n as f64).ln(), e.ln()))
        .collect();
    let k = usable.len();
    if k < 2 {
        return None;
    }
    let kf = k as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / kf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / kf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let order = sxy / sxx;
    let stderr = (k > 2).then(|| {
        let intercept = my - order * mx;
        let rss: f64 = usable
            .iter()
            .map(|p| (p.1 - intercept - order * p.0).powi(2))
            .sum();
        (rss / (kf - 2.0) / sxx).sqrt()
    });
    Some(LogLogFit { order, stderr })
}

/// Lᵖ mean and its delta-method standard error from per-sample sup-errors.
pub fn lp_mean(errors: &[f64], p: f64) -> (f64, f64) {
    let m = errors.len() as f64;
    let powers: Vec<f64> = errors.iter().map(|e| e.powf(p)).collect();
    let mean_p = powers.iter().sum::<f64>() / m;
    let mean = mean_p.powf(1.0 / p);
    if errors.len() < 2 || mean_p == 0.0 {
        return (mean, 0.0);
    }
    let var = powers.iter().map(|x| (x - mean_p).powi(2)).sum::<f64>() / (m - 1.0);
    let se_mean_p = (var / m).sqrt();
    (mean, mean_p.powf(1.0 / p - 1.0) / p * se_mean_p)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Collect [`TimeChangeBound`]s for every sample and resolution.
    pub check_time_change_bound: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RateReport,
    /// Indexed by sample, then by resolution.
    pub bounds: Option<Vec<Vec<TimeChangeBound>>>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RateReport> {
    Ok(run_experiment_with(config, RunOptions::default())?.report)
}

/// Runs all samples and reduces them in sample order, so the result does not
/// depend on the number of workers.
pub fn run_experiment_with(config: &ExperimentConfig, options: RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let sigma = config.diffusion()?;
    let work = || -> Vec<Result<SampleOutcome>> {
        (0..config.samples)
            .into_par_iter()
            .map(|i| run_sample(config, i, options.check_time_change_bound))
            .collect()
    };
    let results = match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    };

    let mut outcomes = Vec::with_capacity(results.len());
    for (index, r) in results.into_iter().enumerate() {
        outcomes.push(r.map_err(|e| Error::Sample {
            index: index as u64,
            module: match e {
                Error::PathExhausted { .. } => "brownian",
                _ => config.scheme.module(),
            },
            source: Box::new(e),
        })?);
    }

    let mut order: Vec<usize> = (0..config.resolutions.len()).collect();
    order.sort_by_key(|&i| config.resolutions[i]);
    let per_resolution: Vec<ResolutionError> = order
        .iter()
        .map(|&i| {
            let errs: Vec<f64> = outcomes.iter().map(|o| o.errors[i]).collect();
            let (mean_error, stderr) = lp_mean(&errs, config.p);
            ResolutionError {
                n: config.resolutions[i],
                mean_error,
                stderr,
            }
        })
        .collect();
    let fit = fit_order(
        &per_resolution
            .iter()
            .map(|r| (r.n, r.mean_error))
            .collect::<Vec<_>>(),
    );

    let report = RateReport {
        scheme: config.scheme,
        per_resolution,
        fitted_order: fit.map(|f| f.order),
        fit_stderr: fit.and_then(|f| f.stderr),
        theoretical_orders: TheoreticalOrders::for_coefficient(&sigma),
        metadata: ReportMetadata {
            config: config.clone(),
            coefficient_label: sigma.label().to_string(),
            lower_bound: sigma.lower_bound(),
            upper_bound: sigma.upper_bound(),
            holder_beta: sigma.holder_beta(),
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    let bounds = options
        .check_time_change_bound
        .then(|| outcomes.into_iter().filter_map(|o| o.bounds).collect());
    Ok(RunOutcome { report, bounds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeComparison {
    pub time_change: RateReport,
    pub euler_maruyama: RateReport,
}

/// Self-convergence of both schemes under one configuration. Each scheme is
/// compared against its own coupled reference; the two drivers live on
/// different clocks and are not compared pathwise.
pub fn compare_schemes(config: &ExperimentConfig) -> Result<SchemeComparison> {
    compare_schemes_with(config, RunOptions::default())
}

pub fn compare_schemes_with(
    config: &ExperimentConfig,
    options: RunOptions,
) -> Result<SchemeComparison> {
    let sigma = config.diffusion()?;
    if sigma.holder_beta() < 0.5 {
        return Err(Error::config(
            "coefficient",
            format!(
                "holder exponent {} < 1/2: Euler-Maruyama has no known strong solution \
                 to converge to, so its self-convergence would not measure anything",
                sigma.holder_beta()
            ),
        ));
    }
    let options = RunOptions {
        check_time_change_bound: false,
        ..options
    };
    Ok(SchemeComparison {
        time_change: run_experiment_with(&config.with_scheme(Scheme::TimeChange), options)?.report,
        euler_maruyama: run_experiment_with(&config.with_scheme(Scheme::EulerMaruyama), options)?
            .report,
    })
}

/// A single approximate path, for plotting.
pub enum DumpedPath {
    TimeChange(SamplePath),
    EulerMaruyama(EmPath),
}

impl DumpedPath {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        match self {
            DumpedPath::TimeChange(p) => p.write_csv(out),
            DumpedPath::EulerMaruyama(p) => p.write_csv(out),
        }
    }
}

/// Rebuilds sample `sample_index` at resolution `n` (a ladder entry or the
/// reference resolution) exactly as the experiment sees it.
pub fn sample_path(config: &ExperimentConfig, sample_index: u64, n: usize) -> Result<DumpedPath> {
    config.validate()?;
    if sample_index >= config.samples {
        return Err(Error::config(
            "sample",
            format!("index {sample_index} is outside 0..{}", config.samples),
        ));
    }
    if n != config.ref_resolution && !config.resolutions.contains(&n) {
        return Err(Error::config(
            "n",
            format!("{n} is neither a configured resolution nor ref_resolution"),
        ));
    }
    let sigma = config.diffusion()?;
    let fine = BrownianPath::generate(
        config.ref_resolution,
        config.brownian_horizon(&sigma),
        config.x0,
        config.master_seed,
        sample_index,
    )?;
    let xi = fine.subsample(config.ref_resolution / n)?;
    Ok(match config.scheme {
        Scheme::TimeChange => DumpedPath::TimeChange(SamplePath::build(xi, &sigma, config.horizon)?),
        Scheme::EulerMaruyama => {
            DumpedPath::EulerMaruyama(em_simulate(&sigma, &xi, config.horizon, config.x0)?)
        }
    })
}
