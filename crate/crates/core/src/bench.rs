//! Simulation harness: sparse and dense mean configurations, paired
//! replication control, squared-error tables with Monte Carlo standard
//! errors, regret curves against the oracle rule, and the knot/bandwidth
//! ablation grids.
//!
//! Determinism contract: a master seed plus (scenario, replication) tags
//! derive every stream, so tables are bit-identical across runs and across
//! any parallel execution order. Within a replication every estimator sees
//! the same draw.

use crate::density::BandwidthRule;
use crate::estimators::{
    self, fit_bg, fit_constrained_pwl, fit_jz_npmle, fit_linear_sure, fit_monotone_pwc,
    fit_tv_pwc, KnotStrategy, NpmleConfig, PwcFitConfig, PwcKnotStrategy, PwlFitConfig,
    TauSelector,
};
use crate::oracle::OracleRule;
use crate::rngutil::substream;
use crate::rules::SeparableRule;
use crate::sample::{SampleSet, TruthVector};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Dense prior families for the mean vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorTag {
    Uniform05,
    Normal01,
    Laplace01,
    MixHalfNormals,
}

impl PriorTag {
    pub fn label(&self) -> &'static str {
        match self {
            PriorTag::Uniform05 => "Uniform(0,5)",
            PriorTag::Normal01 => "N(0,1)",
            PriorTag::Laplace01 => "Laplace(0,1)",
            PriorTag::MixHalfNormals => "0.5N(-3,1)+0.5N(3,2)",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_0_5" => Ok(PriorTag::Uniform05),
            "normal" | "normal_0_1" => Ok(PriorTag::Normal01),
            "laplace" | "laplace_0_1" => Ok(PriorTag::Laplace01),
            "mixture" | "mix_half_normals" => Ok(PriorTag::MixHalfNormals),
            other => Err(Error::InvalidInput(format!("unknown prior tag '{other}'"))),
        }
    }
}

/// Mean-vector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// `k` coordinates equal to `mu` at seeded positions, the rest zero.
    Sparse { k: usize, mu: f64 },
    /// One seeded draw from the prior, fixed across replications.
    Dense { prior: PriorTag },
}

/// One simulation cell: sample size, noise level, truth, replication count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub sigma2: f64,
    pub truth: TruthKind,
    pub reps: usize,
}

impl Scenario {
    pub fn sparse(k: usize, mu: f64, sigma2: f64, n: usize, reps: usize) -> Self {
        Self {
            name: format!("sparse k={k} mu={mu}"),
            n,
            sigma2,
            truth: TruthKind::Sparse { k, mu },
            reps,
        }
    }

    pub fn dense(prior: PriorTag, sigma2: f64, n: usize, reps: usize) -> Self {
        Self { name: prior.label().to_string(), n, sigma2, truth: TruthKind::Dense { prior }, reps }
    }

    /// Low-noise tables aggregate the natural log of the error sum.
    pub fn uses_log_sse(&self) -> bool {
        self.sigma2 <= 1e-6
    }

    fn tag(&self) -> u64 {
        // stable tag from the scenario description
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.name.bytes().chain(self.n.to_le_bytes()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h ^ self.sigma2.to_bits()
    }
}

/// Draw the mean vector for a scenario. Sparse positions come from a seeded
/// shuffle; dense values are one draw from the prior. Both are fixed across
/// replications.
pub fn generate_truth(scenario: &Scenario, master_seed: u64) -> Result<TruthVector> {
    let n = scenario.n;
    match scenario.truth {
        TruthKind::Sparse { k, mu } => {
            if k > n {
                return Err(Error::InvalidInput(format!("sparse k = {k} exceeds n = {n}")));
            }
            let mut rng = substream(master_seed, &[scenario.tag(), 0]);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let mut thetas = vec![0.0; n];
            for &i in idx.iter().take(k) {
                thetas[i] = mu;
            }
            TruthVector::new(thetas)
        }
        TruthKind::Dense { prior } => {
            let mut rng = substream(master_seed, &[scenario.tag(), 1]);
            let thetas: Vec<f64> = (0..n).map(|_| draw_prior(prior, &mut rng)).collect();
            TruthVector::new(thetas)
        }
    }
}

fn draw_prior<R: Rng>(prior: PriorTag, rng: &mut R) -> f64 {
    match prior {
        PriorTag::Uniform05 => rng.gen_range(0.0..5.0),
        PriorTag::Normal01 => rng.sample(StandardNormal),
        PriorTag::Laplace01 => {
            // variance one: scale 1/sqrt(2); inverse-CDF draw
            let u: f64 = rng.gen_range(-0.5..0.5);
            let b = std::f64::consts::FRAC_1_SQRT_2;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        PriorTag::MixHalfNormals => {
            let z: f64 = rng.sample(StandardNormal);
            if rng.gen_bool(0.5) {
                -3.0 + z
            } else {
                3.0 + 2.0 * z
            }
        }
    }
}

/// Estimators available to the harness and the command-line front end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    Identity,
    Oracle,
    LinearSure,
    PwlUpperBound,
    PwlPlugin,
    PwlCv,
    PwcMonotone,
    PwcTv,
    Bg,
    JzNpmle,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 10] = [
        EstimatorId::Identity,
        EstimatorId::Oracle,
        EstimatorId::LinearSure,
        EstimatorId::PwlUpperBound,
        EstimatorId::PwlPlugin,
        EstimatorId::PwlCv,
        EstimatorId::PwcMonotone,
        EstimatorId::PwcTv,
        EstimatorId::Bg,
        EstimatorId::JzNpmle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorId::Identity => "identity",
            EstimatorId::Oracle => "oracle",
            EstimatorId::LinearSure => "linear_sure",
            EstimatorId::PwlUpperBound => "pwl_ub",
            EstimatorId::PwlPlugin => "pwl_pi",
            EstimatorId::PwlCv => "pwl_cv",
            EstimatorId::PwcMonotone => "pwc",
            EstimatorId::PwcTv => "pwc_tv",
            EstimatorId::Bg => "bg",
            EstimatorId::JzNpmle => "jz_em",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| Error::InvalidInput(format!("unknown estimator '{s}'")))
    }

    /// Fit on the sample and return the estimates, one per observation.
    /// `truth` is consulted only by the oracle; `seed` feeds fold shuffles.
    pub fn estimate(
        &self,
        sample: &SampleSet,
        truth: Option<&TruthVector>,
        seed: u64,
    ) -> Result<Vec<f64>> {
        match self {
            EstimatorId::Identity => Ok(sample.values().to_vec()),
            EstimatorId::Oracle => {
                let truth = truth.ok_or_else(|| {
                    Error::InvalidInput("oracle estimator needs the truth vector".into())
                })?;
                let rule = OracleRule::new(truth.clone(), sample.sigma())?;
                Ok(sample.values().iter().map(|&x| rule.evaluate(x)).collect())
            }
            EstimatorId::LinearSure => {
                let fit = fit_linear_sure(sample)?;
                Ok(estimators::predict(&fit.rule, sample.values()))
            }
            EstimatorId::PwlUpperBound => {
                let cfg = PwlFitConfig { tau_selector: TauSelector::UpperBound, seed, ..Default::default() };
                let fit = fit_constrained_pwl(sample, &cfg)?;
                Ok(estimators::predict_clipped(&fit.rule, sample))
            }
            EstimatorId::PwlPlugin => {
                let cfg = PwlFitConfig { tau_selector: TauSelector::Plugin, seed, ..Default::default() };
                let fit = fit_constrained_pwl(sample, &cfg)?;
                Ok(estimators::predict_clipped(&fit.rule, sample))
            }
            EstimatorId::PwlCv => {
                let cfg = PwlFitConfig {
                    tau_selector: TauSelector::Cv { k: 5, grid_size: 20 },
                    seed,
                    ..Default::default()
                };
                let fit = fit_constrained_pwl(sample, &cfg)?;
                Ok(estimators::predict_clipped(&fit.rule, sample))
            }
            EstimatorId::PwcMonotone => {
                let fit = fit_monotone_pwc(sample, &PwcFitConfig::default())?;
                Ok(estimators::predict(&fit.rule, sample.values()))
            }
            EstimatorId::PwcTv => {
                let fit = fit_tv_pwc(sample, &PwcFitConfig::default())?;
                Ok(estimators::predict(&fit.rule, sample.values()))
            }
            EstimatorId::Bg => {
                let fit = fit_bg(sample, None)?;
                Ok(estimators::predict(&fit.rule, sample.values()))
            }
            EstimatorId::JzNpmle => {
                let fit = fit_jz_npmle(sample, &NpmleConfig::default(), seed)?;
                Ok(estimators::predict(&fit.rule, sample.values()))
            }
        }
    }
}

/// Aggregated metric for one (estimator, scenario) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Cell {
    pub mean: f64,
    pub se: f64,
    pub reps: usize,
    /// Replications where the estimator failed (refused or errored);
    /// a fully failed cell has `mean = NaN` and a note.
    pub failed: usize,
    pub note: Option<String>,
}

impl Cell {
    fn from_values(values: &[f64], failed: usize, note: Option<String>) -> Self {
        if values.is_empty() {
            return Cell { mean: f64::NAN, se: f64::NAN, reps: 0, failed, note };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / if values.len() > 1 { n - 1.0 } else { 1.0 };
        let se = if values.len() > 1 { (var / n).sqrt() } else { 0.0 };
        Cell { mean, se, reps: values.len(), failed, note }
    }

    pub fn is_flagged(&self) -> bool {
        self.failed > 0 || !self.mean.is_finite()
    }
}

/// Rows are estimators, columns are scenario cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportTable {
    pub title: String,
    /// True when cells hold mean log-SSE instead of mean SSE.
    pub log_scale: bool,
    pub estimators: Vec<String>,
    pub scenarios: Vec<String>,
    pub cells: Vec<Vec<Cell>>,
}

impl ReportTable {
    pub fn cell(&self, estimator: EstimatorId, scenario_idx: usize) -> Option<&Cell> {
        let row = self.estimators.iter().position(|e| e == estimator.name())?;
        self.cells[row].get(scenario_idx)
    }

    /// Long-format CSV: estimator, scenario, mean, se, reps, failed.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "estimator,scenario,mean,se,reps,failed")?;
        for (ei, est) in self.estimators.iter().enumerate() {
            for (si, sc) in self.scenarios.iter().enumerate() {
                let c = &self.cells[ei][si];
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    csv_field(est),
                    csv_field(sc),
                    fmt_sig(c.mean),
                    fmt_sig(c.se),
                    c.reps,
                    c.failed
                )?;
            }
        }
        Ok(())
    }
}

/// Quote a CSV field when it contains separators or quotes.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Ten-significant-digit formatting for CSV payloads.
pub fn fmt_sig(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v:.9e}")
    }
}

/// Per-replication observations: `theta + sigma Z` under the replication
/// substream.
fn draw_sample(
    truth: &TruthVector,
    sigma: f64,
    scenario_tag: u64,
    rep: usize,
    master_seed: u64,
) -> SampleSet {
    let mut rng = substream(master_seed, &[scenario_tag, 2, rep as u64]);
    let xs: Vec<f64> =
        truth.thetas().iter().map(|&t| t + sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    SampleSet::new(xs, sigma).expect("finite draws")
}

/// Error metric of one fit: the sum of squared errors, or its natural log in
/// the low-noise regime.
fn metric(estimates: &[f64], truth: &TruthVector, log_scale: bool) -> f64 {
    let sse: f64 = estimates
        .iter()
        .zip(truth.thetas())
        .map(|(&v, &t)| (v - t) * (v - t))
        .sum();
    if log_scale {
        sse.ln()
    } else {
        sse
    }
}

/// Run one scenario for a list of estimators: a single-column table.
/// Replications execute in parallel; aggregation is in replication order.
pub fn run_scenario(
    scenario: &Scenario,
    estimators: &[EstimatorId],
    master_seed: u64,
) -> Result<ReportTable> {
    run_table(&format!("scenario: {}", scenario.name), &[scenario.clone()], estimators, master_seed)
}

/// Run a grid of scenarios into one table.
pub fn run_table(
    title: &str,
    scenarios: &[Scenario],
    estimators: &[EstimatorId],
    master_seed: u64,
) -> Result<ReportTable> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    let log_scale = scenarios[0].uses_log_sse();
    if scenarios.iter().any(|s| s.uses_log_sse() != log_scale) {
        return Err(Error::Config(
            "cannot mix low-noise (log) and high-noise (raw) scenarios in one table".into(),
        ));
    }

    let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); estimators.len()];
    for scenario in scenarios {
        let truth = generate_truth(scenario, master_seed)?;
        let sigma = scenario.sigma2.sqrt();
        let tag = scenario.tag();

        // per replication, fit every estimator on the same draw
        let rep_results: Vec<Vec<std::result::Result<f64, String>>> = (0..scenario.reps)
            .into_par_iter()
            .map(|rep| {
                let sample = draw_sample(&truth, sigma, tag, rep, master_seed);
                estimators
                    .iter()
                    .map(|est| {
                        let seed = master_seed ^ tag ^ (rep as u64).wrapping_mul(0x9e37);
                        est.estimate(&sample, Some(&truth), seed)
                            .map(|fitted| metric(&fitted, &truth, log_scale))
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            })
            .collect();

        for (ei, _) in estimators.iter().enumerate() {
            let mut values = Vec::with_capacity(scenario.reps);
            let mut failed = 0;
            let mut note = None;
            for rep in rep_results.iter() {
                match &rep[ei] {
                    Ok(v) => values.push(*v),
                    Err(msg) => {
                        failed += 1;
                        note.get_or_insert_with(|| msg.clone());
                    }
                }
            }
            cells[ei].push(Cell::from_values(&values, failed, note));
        }
    }

    Ok(ReportTable {
        title: title.to_string(),
        log_scale,
        estimators: estimators.iter().map(|e| e.name().to_string()).collect(),
        scenarios: scenarios.iter().map(|s| s.name.clone()).collect(),
        cells,
    })
}

/// Preset scenario grids reproducing the benchmark tables.
pub fn preset_scenarios(table: &str, reps: usize) -> Result<(Vec<Scenario>, Vec<EstimatorId>)> {
    let n = 1000;
    let sparse_grid = |sigma2: f64| -> Vec<Scenario> {
        let mut v = Vec::new();
        for &k in &[5usize, 50, 500] {
            for &mu in &[3.0, 4.0, 5.0, 7.0] {
                v.push(Scenario::sparse(k, mu, sigma2, n, reps));
            }
        }
        v
    };
    let dense_grid = |sigma2: f64| -> Vec<Scenario> {
        [PriorTag::Uniform05, PriorTag::Normal01, PriorTag::Laplace01, PriorTag::MixHalfNormals]
            .iter()
            .map(|&p| Scenario::dense(p, sigma2, n, reps))
            .collect()
    };
    let high = vec![
        EstimatorId::PwlUpperBound,
        EstimatorId::PwlPlugin,
        EstimatorId::PwlCv,
        EstimatorId::PwcMonotone,
        EstimatorId::JzNpmle,
        EstimatorId::Bg,
    ];
    // the plug-in refuses at low noise and is left out, as in the low-noise
    // benchmark rows
    let low = vec![
        EstimatorId::PwlUpperBound,
        EstimatorId::PwlCv,
        EstimatorId::PwcMonotone,
        EstimatorId::Bg,
        EstimatorId::JzNpmle,
    ];
    match table {
        "sparse-high" => Ok((sparse_grid(1.0), high)),
        "dense-high" => Ok((dense_grid(1.0), high)),
        "sparse-low" => Ok((sparse_grid(1e-8), low)),
        "dense-low" => Ok((dense_grid(1e-8), low)),
        other => Err(Error::InvalidInput(format!(
            "unknown table preset '{other}' (expected sparse-high, dense-high, sparse-low, dense-low)"
        ))),
    }
}

/// One point of a regret curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretPoint {
    pub n: usize,
    /// Mean paired difference of per-coordinate risk against the oracle.
    pub regret: f64,
    pub se: f64,
}

/// Paired Monte Carlo regret of an estimator against the oracle rule at each
/// sample size: same truth, same draws.
pub fn regret_curve(
    ns: &[usize],
    prior: PriorTag,
    sigma2: f64,
    estimator: EstimatorId,
    reps: usize,
    master_seed: u64,
) -> Result<Vec<RegretPoint>> {
    if ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("sample sizes must be increasing".into()));
    }
    let mut out = Vec::with_capacity(ns.len());
    for &n in ns {
        let scenario = Scenario::dense(prior, sigma2, n, reps);
        let truth = generate_truth(&scenario, master_seed)?;
        let sigma = sigma2.sqrt();
        let tag = scenario.tag();
        let oracle = OracleRule::new(truth.clone(), sigma)?;

        let diffs: Vec<f64> = (0..reps)
            .into_par_iter()
            .map(|rep| {
                let sample = draw_sample(&truth, sigma, tag, rep, master_seed);
                let seed = master_seed ^ tag ^ rep as u64;
                let est = estimator
                    .estimate(&sample, Some(&truth), seed)
                    .expect("estimator failed in regret curve");
                let est_loss = metric(&est, &truth, false) / n as f64;
                let oracle_est: Vec<f64> =
                    sample.values().iter().map(|&x| oracle.evaluate(x)).collect();
                let oracle_loss = metric(&oracle_est, &truth, false) / n as f64;
                est_loss - oracle_loss
            })
            .collect();

        let m = diffs.iter().sum::<f64>() / reps as f64;
        let var = diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>()
            / if reps > 1 { (reps - 1) as f64 } else { 1.0 };
        out.push(RegretPoint { n, regret: m, se: (var / reps as f64).sqrt() });
    }
    Ok(out)
}

/// Which ablation grid to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationKind {
    /// Knot strategies for the piecewise-linear fit (plug-in tau refit per
    /// strategy on shared draws).
    PwlKnots,
    /// Knot/density-path combinations for the monotone step fit.
    PwcKnots,
    /// Bandwidth ladder plus data-driven rules for the monotone step fit.
    PwcBandwidths,
}

/// Ablation settings: the dense priors plus the sparse-`k`, `mu = 5` rows.
pub fn ablation_scenarios(reps: usize, sparse_ks: &[usize], priors: &[PriorTag]) -> Vec<Scenario> {
    let n = 1000;
    let mut v: Vec<Scenario> =
        priors.iter().map(|&p| Scenario::dense(p, 1.0, n, reps)).collect();
    for &k in sparse_ks {
        v.push(Scenario::sparse(k, 5.0, 1.0, n, reps));
    }
    v
}

/// Run an ablation grid. Row labels name the varied component; draws are
/// shared across rows within each scenario so rows differ only by the
/// ablated choice.
pub fn ablation_knots_and_bandwidths(
    kind: AblationKind,
    scenarios: &[Scenario],
    master_seed: u64,
) -> Result<ReportTable> {
    type FitFn = Box<dyn Fn(&SampleSet, u64) -> Result<Vec<f64>> + Sync + Send>;
    let rows: Vec<(String, FitFn)> = match kind {
        AblationKind::PwlKnots => {
            let strategies: Vec<(String, KnotStrategy)> = vec![
                ("1000 regular".into(), KnotStrategy::Regular(1000)),
                ("300 regular".into(), KnotStrategy::Regular(300)),
                ("30 regular".into(), KnotStrategy::Regular(30)),
                ("order statistics".into(), KnotStrategy::OrderStatistics),
                ("percentiles".into(), KnotStrategy::Percentiles),
            ];
            strategies
                .into_iter()
                .map(|(name, strat)| {
                    let f: FitFn = Box::new(move |sample: &SampleSet, seed: u64| {
                        let cfg = PwlFitConfig {
                            knot_strategy: strat,
                            tau_selector: TauSelector::Plugin,
                            seed,
                        };
                        let fit = fit_constrained_pwl(sample, &cfg)?;
                        Ok(estimators::predict_clipped(&fit.rule, sample))
                    });
                    (name, f)
                })
                .collect()
        }
        AblationKind::PwcKnots => {
            let combos: Vec<(String, PwcKnotStrategy, crate::estimators::DensityPath)> = vec![
                ("approx fft".into(), PwcKnotStrategy::Midpoints, crate::estimators::DensityPath::Fft),
                ("approx exact".into(), PwcKnotStrategy::Midpoints, crate::estimators::DensityPath::Exact),
                ("opt fft".into(), PwcKnotStrategy::Optimal, crate::estimators::DensityPath::Fft),
                ("opt exact".into(), PwcKnotStrategy::Optimal, crate::estimators::DensityPath::Exact),
            ];
            combos
                .into_iter()
                .map(|(name, strat, path)| {
                    let f: FitFn = Box::new(move |sample: &SampleSet, _seed: u64| {
                        let cfg = PwcFitConfig {
                            knot_strategy: strat,
                            density_path: path,
                            ..Default::default()
                        };
                        let fit = fit_monotone_pwc(sample, &cfg)?;
                        Ok(estimators::predict(&fit.rule, sample.values()))
                    });
                    (name, f)
                })
                .collect()
        }
        AblationKind::PwcBandwidths => {
            let mut rows: Vec<(String, BandwidthRule)> = (2..=8)
                .map(|i| {
                    let h = i as f64 / 10.0;
                    (format!("{h:.1}"), BandwidthRule::Fixed { h })
                })
                .collect();
            rows.push(("silverman".into(), BandwidthRule::Silverman));
            rows.push(("asymptotic".into(), BandwidthRule::AsymptoticN16));
            rows.into_iter()
                .map(|(name, bw)| {
                    let f: FitFn = Box::new(move |sample: &SampleSet, _seed: u64| {
                        let cfg = PwcFitConfig { bandwidth: bw, ..Default::default() };
                        let fit = fit_monotone_pwc(sample, &cfg)?;
                        Ok(estimators::predict(&fit.rule, sample.values()))
                    });
                    (name, f)
                })
                .collect()
        }
    };

    let mut cells: Vec<Vec<Cell>> = vec![Vec::new(); rows.len()];
    for scenario in scenarios {
        let truth = generate_truth(scenario, master_seed)?;
        let sigma = scenario.sigma2.sqrt();
        let tag = scenario.tag();
        let log_scale = scenario.uses_log_sse();

        let rep_results: Vec<Vec<std::result::Result<f64, String>>> = (0..scenario.reps)
            .into_par_iter()
            .map(|rep| {
                let sample = draw_sample(&truth, sigma, tag, rep, master_seed);
                let seed = master_seed ^ tag ^ rep as u64;
                rows.iter()
                    .map(|(_, fit)| {
                        fit(&sample, seed)
                            .map(|est| metric(&est, &truth, log_scale))
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            })
            .collect();

        for ri in 0..rows.len() {
            let mut values = Vec::new();
            let mut failed = 0;
            let mut note = None;
            for rep in &rep_results {
                match &rep[ri] {
                    Ok(v) => values.push(*v),
                    Err(e) => {
                        failed += 1;
                        note.get_or_insert_with(|| e.clone());
                    }
                }
            }
            cells[ri].push(Cell::from_values(&values, failed, note));
        }
    }

    Ok(ReportTable {
        title: format!("{kind:?} ablation"),
        log_scale: scenarios.first().map(|s| s.uses_log_sse()).unwrap_or(false),
        estimators: rows.into_iter().map(|(name, _)| name).collect(),
        scenarios: scenarios.iter().map(|s| s.name.clone()).collect(),
        cells,
    })
}

/// Paired mean difference and its standard error between two rows of
/// replication-level values (used by the ablation agreement checks).
pub fn paired_diff_se(a: &[f64], b: &[f64]) -> (f64, f64) {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Replication-level metric values for one estimator on one scenario
/// (exposed for paired comparisons in tests and ablation reports).
pub fn replication_metrics(
    scenario: &Scenario,
    estimator: EstimatorId,
    master_seed: u64,
) -> Result<Vec<f64>> {
    let truth = generate_truth(scenario, master_seed)?;
    let sigma = scenario.sigma2.sqrt();
    let tag = scenario.tag();
    let log_scale = scenario.uses_log_sse();
    (0..scenario.reps)
        .into_par_iter()
        .map(|rep| {
            let sample = draw_sample(&truth, sigma, tag, rep, master_seed);
            let seed = master_seed ^ tag ^ (rep as u64).wrapping_mul(0x9e37);
            let est = estimator.estimate(&sample, Some(&truth), seed)?;
            Ok(metric(&est, &truth, log_scale))
        })
        .collect()
}
