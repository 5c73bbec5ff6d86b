use std::io::Write;
use std::path::{Path, PathBuf};

use fom::certificates::{certified_lower_bound, estimate_feasibility, Certificate, FeasibilityReport};
use fom::heatmap::{slice_values, to_csv, SliceSpec};
use fom::io::PairRecord;
use fom::problems::{ControlProblem, PerturbationBudget};
use fom::rollout::{segmented_rollout, ControlParameterization};
use fom::saddle::{
    compare, dual_update, dual_update_exchange, evaluate_gap, pruned_search, receding_horizon_step, ComparisonEntry,
    ComparisonRow, DecisionContext, DualUpdateReport, Exchange, GapReport, TraceRecord,
};
use fom::sampling::SampleSet;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{read_text, CliError, Manifest, OutputDir, Result};

/// Command-line values that override the config of `solve`.
#[derive(Clone, Debug, Default)]
pub struct SolveOverrides {
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub lambda: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaRecord {
    pub t0: f64,
    pub t_final: f64,
    pub knots: Vec<Vec<f64>>,
}

impl ThetaRecord {
    fn new(theta: &ControlParameterization<f64>) -> Self {
        ThetaRecord {
            t0: theta.t0(),
            t_final: theta.t_final(),
            knots: theta.knots().to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    #[serde(flatten)]
    pub record: TraceRecord<f64>,
}

/// `report.json` of `solve`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub underline_p: f64,
    pub eps: f64,
    pub eps_t: f64,
    pub validation: FeasibilityReport<f64>,
    pub exchange_rounds: usize,
    pub exchange_added: usize,
    pub evaluated: usize,
    pub pruned: usize,
    pub relaxations: usize,
}

fn load_certificate(path: &Path) -> Result<Certificate<f64>> {
    Ok(Certificate::from_text(&read_text(path)?)?)
}

fn effective_config(cfg: &RunConfig, out: &mut OutputDir) -> Result<String> {
    let text = cfg.to_toml()?;
    out.write("config.toml", &text)?;
    Ok(text)
}

/// Alternates pruned search and exchange dual updates, then writes the
/// final policy, certificate, primal pair, gap report and trace.
pub fn solve(cfg: &RunConfig, overrides: &SolveOverrides, out_dir: &Path, log: &mut dyn Write) -> Result<GapReport<f64>> {
    let mut cfg = cfg.clone();
    if let Some(seed) = overrides.seed {
        cfg.search.seed = seed;
    }
    if let Some(tau) = overrides.tau {
        cfg.search.tau = tau;
    }
    if let Some(lambda) = overrides.lambda {
        cfg.search.lambda = lambda;
    }
    let problem = cfg.problem()?;
    let basis = cfg.basis(&problem)?;
    let partition = cfg.partition(&problem)?;
    let options = cfg.rollout_options()?;
    let samples = SampleSet::from_plan(&problem, &cfg.sample_plan())?;
    let pool = SampleSet::from_plan(&problem, &cfg.pool_plan())?;
    let validation = SampleSet::from_plan(&problem, &cfg.validation_plan())?;

    let mut theta = cfg.initial_theta(&problem)?;
    let mut cert = Certificate::zero(basis.clone());
    let mut trace = Vec::new();
    let mut last = None;
    let (mut evaluated, mut pruned, mut relaxations) = (0, 0, 0);
    for round in 0..cfg.search.rounds {
        let search = cfg.search_config(&problem, round);
        let context = DecisionContext::from_rollouts(&[], &theta);
        let found = pruned_search(&problem, &cert, &theta, &partition, &options, &search, &context)?;
        evaluated += found.evaluated;
        pruned += found.pruned;
        relaxations += found.relaxations.len();
        trace.extend(found.trace.iter().map(|r| RoundTrace {
            round,
            record: r.clone(),
        }));
        let exchange = Exchange {
            pool: &pool,
            rounds: cfg.dual.exchange_rounds,
            batch: cfg.dual.exchange_batch,
        };
        let update = dual_update_exchange(
            &basis,
            &found.pair,
            &problem,
            &samples,
            exchange,
            &cfg.dual_config(),
            None,
            Some(&validation),
        )?;
        cert = update.update.certificate.clone();
        writeln!(
            log,
            "round {round}: J = {:.6}, exchange rounds {}, declared eps {:.3e}, eps_T {:.3e}",
            found.gap_report.j,
            update.rounds,
            cert.eps(),
            cert.eps_t()
        )
        .ok();
        theta = found.theta;
        last = Some((found.pair, update));
    }
    let (pair, update) = last.ok_or_else(|| CliError::Config("search.rounds must be positive".into()))?;
    let gap = evaluate_gap(&pair, &cert, problem.initial_measure(), &problem)?;
    let underline_p = certified_lower_bound(&cert, problem.initial_measure(), problem.horizon())?;
    let report = SolveReport {
        underline_p,
        eps: cert.eps(),
        eps_t: cert.eps_t(),
        validation: update
            .update
            .validation
            .clone()
            .ok_or_else(|| CliError::Validation("dual update returned no validation report".into()))?,
        exchange_rounds: update.rounds,
        exchange_added: update.added,
        evaluated,
        pruned,
        relaxations,
    };

    let mut out = OutputDir::create(out_dir)?;
    let config_text = effective_config(&cfg, &mut out)?;
    out.write("certificate.txt", &cert.to_text())?;
    out.write_json("theta.json", &ThetaRecord::new(&theta))?;
    out.write_json("pair.json", &PairRecord::from_pair(&pair))?;
    out.write_json("gap.json", &gap)?;
    out.write_json("report.json", &report)?;
    out.write_json_lines("trace.jsonl", &trace)?;
    let mut manifest = Manifest::new("solve", &config_text, &problem);
    manifest.seeds.insert("search".into(), cfg.search.seed);
    manifest.seeds.insert("samples".into(), cfg.dual.seed);
    manifest.seeds.insert("pool".into(), cfg.dual.pool_seed);
    manifest.seeds.insert("validation".into(), cfg.dual.validation_seed);
    manifest.samples.insert("constraints".into(), samples.hash());
    manifest.samples.insert("pool".into(), pool.hash());
    manifest.samples.insert("validation".into(), validation.hash());
    out.finish(manifest)?;

    writeln!(
        log,
        "J = {:.6}, underline J = {:.6}, gap = {:.6}, underline P = {:.6}",
        gap.j, gap.underline_j, gap.gap, underline_p
    )
    .ok();
    Ok(gap)
}

/// `certify.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub eps: f64,
    pub eps_t: f64,
    pub eps_hat: f64,
    pub eps_t_hat: f64,
    pub underline_p: f64,
    /// `(eps (T - t0) + eps_T) mu_0(X)`, the price of the tolerances in the bound.
    pub degradation: f64,
    pub passed: bool,
    pub validation: FeasibilityReport<f64>,
}

/// Re-estimates feasibility on the validation plan and prints the certified
/// lower bound. Fails when a declared tolerance is below its estimate.
pub fn certify(cfg: &RunConfig, certificate: &Path, out_dir: Option<&Path>, log: &mut dyn Write) -> Result<CertifyReport> {
    let problem = cfg.problem()?;
    let cert = load_certificate(certificate)?;
    let validation = SampleSet::from_plan(&problem, &cfg.validation_plan())?;
    let feasibility = estimate_feasibility(&cert, &problem, &validation)?;
    let mu0 = problem.initial_measure();
    let report = CertifyReport {
        eps: cert.eps(),
        eps_t: cert.eps_t(),
        eps_hat: feasibility.eps_hat,
        eps_t_hat: feasibility.eps_t_hat,
        underline_p: certified_lower_bound(&cert, mu0, problem.horizon())?,
        degradation: (cert.eps() * problem.horizon() + cert.eps_t()) * mu0.total_mass(),
        passed: feasibility.check_declared(&cert).is_ok(),
        validation: feasibility,
    };
    writeln!(log, "estimated eps {:.6e}, eps_T {:.6e}", report.eps_hat, report.eps_t_hat).ok();
    writeln!(log, "declared  eps {:.6e}, eps_T {:.6e}", report.eps, report.eps_t).ok();
    writeln!(log, "degradation {:.6e}", report.degradation).ok();
    writeln!(log, "underline P {:.6}", report.underline_p).ok();
    if let Some(dir) = out_dir {
        let mut out = OutputDir::create(dir)?;
        let config_text = effective_config(cfg, &mut out)?;
        out.write_json("certify.json", &report)?;
        let mut manifest = Manifest::new("certify", &config_text, &problem);
        manifest.seeds.insert("validation".into(), cfg.dual.validation_seed);
        manifest.samples.insert("validation".into(), validation.hash());
        manifest.arguments.insert("certificate".into(), certificate.display().to_string());
        out.finish(manifest)?;
    }
    if !report.passed {
        return Err(CliError::Validation(format!(
            "declared tolerances ({:.3e}, {:.3e}) are below the estimates ({:.3e}, {:.3e})",
            report.eps, report.eps_t, report.eps_hat, report.eps_t_hat
        )));
    }
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub iterations: usize,
    pub objective: f64,
    pub init_feasible: bool,
    pub eps_hat: f64,
    pub eps_t_hat: f64,
}

impl UpdateStats {
    fn new(report: &DualUpdateReport<f64>, validation: &FeasibilityReport<f64>) -> Self {
        UpdateStats {
            iterations: report.pivots,
            objective: report.objective,
            init_feasible: report.init_feasible,
            eps_hat: validation.eps_hat,
            eps_t_hat: validation.eps_t_hat,
        }
    }
}

/// `warmstart.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmstartReport {
    pub shift: f64,
    pub budget: PerturbationBudget<f64>,
    pub gradient_bound: f64,
    pub g_v: f64,
    pub eps: f64,
    pub eps_t: f64,
    /// Validation of the warm certificate on the new problem, before any update.
    pub warm_validation: FeasibilityReport<f64>,
    pub warm_passed: bool,
    pub warm: UpdateStats,
    pub cold: UpdateStats,
}

pub struct WarmstartArgs<'a> {
    pub certificate: &'a Path,
    pub shift: f64,
    pub budget: PerturbationBudget<f64>,
}

/// Shifts and degrades an old certificate for the configured problem moved
/// to the window `[t0 + shift, T + shift]`, validates it there, and compares
/// a warm dual update (pulled towards the warm coefficients) with a cold one
/// on the rollout of the initial policy.
pub fn warmstart(cfg: &RunConfig, args: &WarmstartArgs<'_>, out_dir: &Path, log: &mut dyn Write) -> Result<WarmstartReport> {
    let configured = cfg.problem()?;
    let old = load_certificate(args.certificate)?;
    let warm = receding_horizon_step(
        &old,
        &configured,
        args.shift,
        &args.budget,
        &SampleSet::from_plan(&configured, &cfg.sample_plan())?,
    )?;
    let problem = if args.shift > 0.0 {
        configured.shifted(args.shift)?
    } else {
        configured
    };
    let samples = SampleSet::from_plan(&problem, &cfg.sample_plan())?;
    let validation = SampleSet::from_plan(&problem, &cfg.validation_plan())?;
    let warm_validation = estimate_feasibility(&warm.certificate, &problem, &validation)?;
    let warm_passed = warm_validation.check_declared(&warm.certificate).is_ok();

    let pair = rollout_pair(cfg, &problem)?;
    let basis = warm.certificate.basis();
    let cold = dual_update(basis, &pair, &problem, &samples, &cfg.dual_config(), None, Some(&validation))?;
    let mut prox = cfg.dual_config();
    prox.proximal_weight = Some(cfg.dual.proximal_weight);
    let updated = dual_update(
        basis,
        &pair,
        &problem,
        &samples,
        &prox,
        Some(warm.certificate.psi()),
        Some(&validation),
    )?;
    let stats = |r: &DualUpdateReport<f64>| -> Result<UpdateStats> {
        let v = r
            .validation
            .as_ref()
            .ok_or_else(|| CliError::Validation("dual update returned no validation report".into()))?;
        Ok(UpdateStats::new(r, v))
    };
    let report = WarmstartReport {
        shift: args.shift,
        budget: args.budget,
        gradient_bound: warm.gradient_bound,
        g_v: warm.g_v,
        eps: warm.certificate.eps(),
        eps_t: warm.certificate.eps_t(),
        warm_validation,
        warm_passed,
        warm: stats(&updated)?,
        cold: stats(&cold)?,
    };

    let mut out = OutputDir::create(out_dir)?;
    let config_text = effective_config(cfg, &mut out)?;
    out.write("warm.txt", &warm.certificate.to_text())?;
    out.write("updated.txt", &updated.certificate.to_text())?;
    out.write_json("warmstart.json", &report)?;
    let mut manifest = Manifest::new("warmstart", &config_text, &problem);
    manifest.seeds.insert("samples".into(), cfg.dual.seed);
    manifest.seeds.insert("validation".into(), cfg.dual.validation_seed);
    manifest.samples.insert("constraints".into(), samples.hash());
    manifest.samples.insert("validation".into(), validation.hash());
    manifest.arguments.insert("certificate".into(), args.certificate.display().to_string());
    manifest.arguments.insert("shift".into(), args.shift.to_string());
    manifest.arguments.insert(
        "budget".into(),
        format!("{},{},{}", args.budget.delta_f, args.budget.delta_l, args.budget.delta_g),
    );
    out.finish(manifest)?;

    writeln!(
        log,
        "warm certificate: eps {:.3e} (estimate {:.3e}), eps_T {:.3e} (estimate {:.3e}), {}",
        report.eps,
        report.warm_validation.eps_hat,
        report.eps_t,
        report.warm_validation.eps_t_hat,
        if warm_passed { "valid" } else { "NOT valid" }
    )
    .ok();
    writeln!(
        log,
        "dual update iterations: warm {}, cold {}",
        report.warm.iterations, report.cold.iterations
    )
    .ok();
    if !warm_passed {
        return Err(CliError::Validation(
            "the warm certificate violates its degraded tolerances on the new problem".into(),
        ));
    }
    Ok(report)
}

fn rollout_pair(cfg: &RunConfig, problem: &ControlProblem<f64>) -> Result<fom::measures::PrimalPair<f64>> {
    let theta = cfg.initial_theta(problem)?;
    Ok(segmented_rollout(problem, &theta, &cfg.partition(problem)?, &[], &cfg.rollout_options()?)?.1)
}

/// Parsed `--grid lo:hi:n,lo:hi:n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub points: [usize; 2],
}

impl std::str::FromStr for GridSpec {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || CliError::Argument(format!("grid `{s}` is not of the form lo:hi:n,lo:hi:n"));
        let axes: Vec<&str> = s.split(',').collect();
        if axes.len() != 2 {
            return Err(bad());
        }
        let mut grid = GridSpec {
            lo: [0.0; 2],
            hi: [0.0; 2],
            points: [0; 2],
        };
        for (i, axis) in axes.iter().enumerate() {
            let f: Vec<&str> = axis.split(':').collect();
            if f.len() != 3 {
                return Err(bad());
            }
            grid.lo[i] = f[0].trim().parse().map_err(|_| bad())?;
            grid.hi[i] = f[1].trim().parse().map_err(|_| bad())?;
            grid.points[i] = f[2].trim().parse().map_err(|_| bad())?;
        }
        Ok(grid)
    }
}

pub struct HeatmapArgs<'a> {
    pub certificate: &'a Path,
    pub grid: GridSpec,
    pub axes: [usize; 2],
    pub time: f64,
    /// Fixed state coordinates; zeros when absent.
    pub base: Option<Vec<f64>>,
    /// Block index, or the full certificate when absent.
    pub block: Option<usize>,
}

/// Writes `x,y,value` rows of the certificate (or one block) on a planar grid.
pub fn export_heatmap(args: &HeatmapArgs<'_>, out: &Path) -> Result<usize> {
    let cert = load_certificate(args.certificate)?;
    let names = ["x", "y"].map(String::from);
    let spec = SliceSpec {
        t: args.time,
        axes: args.axes,
        lo: args.grid.lo,
        hi: args.grid.hi,
        points: args.grid.points,
        base: args.base.clone().unwrap_or_else(|| vec![0.0; cert.basis().dim_x()]),
    };
    let cells = slice_values(&cert, &spec, args.block)?;
    crate::write_text(out, &to_csv(&cells, [names[0].as_str(), names[1].as_str()]))?;
    Ok(cells.len())
}

/// Ranks solve directories of the same problem by their certified bound.
pub fn compare_runs(dirs: &[PathBuf], log: &mut dyn Write) -> Result<Vec<ComparisonRow<f64>>> {
    if dirs.is_empty() {
        return Err(CliError::Argument("compare needs at least one result directory".into()));
    }
    let mut entries = Vec::new();
    let mut reference = None;
    for dir in dirs {
        let cfg = RunConfig::load(&dir.join("config.toml"))?;
        let problem = cfg.problem()?;
        let report: GapReport<f64> = serde_json::from_str(&read_text(&dir.join("gap.json"))?)?;
        entries.push(ComparisonEntry {
            label: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
            problem_id: problem.id().to_string(),
            certificate: load_certificate(&dir.join("certificate.txt"))?,
            report,
        });
        reference.get_or_insert(problem);
    }
    let problem = reference.ok_or_else(|| CliError::Argument("no result directories".into()))?;
    let rows = compare(&entries, problem.initial_measure(), problem.horizon())?;
    writeln!(
        log,
        "{:>4}  {:<24} {:>12} {:>12} {:>12} {:>12}",
        "rank", "run", "underline_P", "underline_J", "J", "gap"
    )
    .ok();
    for r in &rows {
        writeln!(
            log,
            "{:>4}  {:<24} {:>12.6} {:>12.6} {:>12.6} {:>12.6}",
            r.rank, r.label, r.underline_p, r.underline_j, r.j, r.gap
        )
        .ok();
    }
    Ok(rows)
}
