//! Run configuration: a TOML file with the sections `[problem]`, `[basis]`,
//! `[rollout]`, `[search]` and `[dual]`. Every key except `problem.kind` has
//! a default.

use std::path::Path;
use std::sync::Arc;

use fom::certificates::{BasisBlock, FeatureBasis};
use fom::problems::{make_lqr, make_strict_feedback, make_unicycle_avoid, ControlProblem, Disc, LqrSpec, UnicycleSpec};
use fom::rollout::{ControlParameterization, Integrator, Partition, RolloutOptions};
use fom::saddle::{DualUpdateConfig, SearchConfig};
use fom::sampling::SamplePlan;
use serde::{Deserialize, Serialize};

use crate::{read_text, CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `dim` decoupled scalar integrators with quadratic costs.
    Lqr,
    DoubleIntegrator,
    StrictFeedback,
    Unicycle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Defaults: 1 for `lqr`, 2 for `double_integrator`, 4 for `unicycle`.
    /// The strict-feedback benchmark has a fixed unit horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "one_usize")]
    pub dim: usize,
    /// Running cost weighted by `exp(-discount * t)`; any positive value makes
    /// the problem time-dependent.
    #[serde(default)]
    pub discount: f64,
    /// Unicycle discs as `[cx, cy, radius]`.
    #[serde(default)]
    pub obstacles: Vec<[f64; 3]>,
    #[serde(default = "one_f64")]
    pub speed: f64,
    #[serde(default = "ten_f64")]
    pub penalty_scale: f64,
    /// Unicycle start atoms as `[weight, x, y, heading]`; empty keeps the
    /// single unit atom at `(-2, 0, 0)`.
    #[serde(default)]
    pub starts: Vec<[f64; 4]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    /// Quadratic forms in `x` times polynomials of degree `time_degree` in `T - t`.
    Quadratic,
    /// All monomials in `(t, x)` of total degree at most `degree`.
    TotalDegree,
    /// Spatial block on `(x, y)` (polynomials plus a bump grid) and a
    /// heading block on `theta`.
    Unicycle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Defaults to `unicycle` for the unicycle problem and `quadratic` otherwise.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<BasisKind>,
    pub time_degree: u32,
    pub degree: u32,
    pub bumps_per_axis: usize,
    pub bump_width: f64,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig {
            kind: None,
            time_degree: 4,
            degree: 2,
            bumps_per_axis: 7,
            bump_width: 1.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RolloutConfig {
    pub integrator: String,
    pub step: f64,
    pub segments: usize,
    pub knots: usize,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            integrator: "rk4".into(),
            step: 0.01,
            segments: 1,
            knots: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub tau: f64,
    pub lambda: f64,
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Alternations of primal search and dual update.
    pub rounds: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            tau: f64::INFINITY,
            lambda: 0.0,
            population: 48,
            elite_fraction: 0.125,
            iterations: 100,
            seed: 7,
            rounds: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DualSection {
    pub eps: f64,
    pub eps_t: f64,
    pub grid: usize,
    pub halton: usize,
    pub seed: u64,
    pub pool_seed: u64,
    pub validation_seed: u64,
    /// Exchange rounds against the denser pool; 0 solves on the base samples only.
    pub exchange_rounds: usize,
    pub exchange_batch: usize,
    pub box_bound: f64,
    /// Weight of the L1 pull towards the warm coefficients in `warmstart`.
    pub proximal_weight: f64,
}

impl Default for DualSection {
    fn default() -> Self {
        DualSection {
            eps: 0.0,
            eps_t: 0.0,
            grid: 9,
            halton: 2000,
            seed: 11,
            pool_seed: 12,
            validation_seed: 13,
            exchange_rounds: 10,
            exchange_batch: 200,
            box_bound: 1e4,
            proximal_weight: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default)]
    pub rollout: RolloutConfig,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub dual: DualSection,
}

fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn ten_f64() -> f64 {
    10.0
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::Config(m.into()));
        if self.problem.horizon.is_some_and(|h| !(h > 0.0 && h.is_finite())) {
            return bad("problem.horizon must be positive and finite");
        }
        if self.problem.kind == ProblemKind::StrictFeedback && self.problem.horizon.is_some() {
            return bad("the strict_feedback horizon is fixed at 1");
        }
        if self.problem.dim == 0 {
            return bad("problem.dim must be positive");
        }
        if !(self.problem.discount >= 0.0 && self.problem.discount.is_finite()) {
            return bad("problem.discount must be nonnegative");
        }
        if self.problem.kind != ProblemKind::Unicycle && (!self.problem.obstacles.is_empty() || !self.problem.starts.is_empty()) {
            return bad("obstacles and starts apply to the unicycle only");
        }
        if self.rollout.step <= 0.0 || self.rollout.segments == 0 || self.rollout.knots == 0 {
            return bad("rollout.step, segments and knots must be positive");
        }
        Integrator::parse(&self.rollout.integrator)?;
        if self.search.rounds == 0 {
            return bad("search.rounds must be positive");
        }
        if self.dual.exchange_batch == 0 {
            return bad("dual.exchange_batch must be positive");
        }
        if self.basis.kind == Some(BasisKind::Unicycle) && self.problem.kind != ProblemKind::Unicycle {
            return bad("the unicycle basis needs the unicycle problem");
        }
        Ok(())
    }

    pub fn problem(&self) -> Result<ControlProblem<f64>> {
        let p = &self.problem;
        let base = match p.kind {
            ProblemKind::Lqr => {
                let h = p.horizon.unwrap_or(1.0);
                let spec = if p.dim == 1 {
                    LqrSpec::scalar_integrator(h)
                } else {
                    LqrSpec::integrators(p.dim, h)
                };
                make_lqr(&spec)?.0
            }
            ProblemKind::DoubleIntegrator => make_lqr(&LqrSpec::double_integrator(p.horizon.unwrap_or(2.0)))?.0,
            ProblemKind::StrictFeedback => make_strict_feedback()?,
            ProblemKind::Unicycle => make_unicycle_avoid(&self.unicycle_spec())?,
        };
        if p.discount == 0.0 {
            return Ok(base);
        }
        let mut parts = base.parts().clone();
        let rate = p.discount;
        let cost = parts.running_cost.clone();
        parts.running_cost = Arc::new(move |t: f64, x: &[f64], u: &[f64]| (-rate * t).exp() * cost(t, x, u));
        parts.time_homogeneous = false;
        parts.blocks = None;
        parts.descriptor = format!("{}|discount({rate})", parts.descriptor);
        parts.name = format!("{}+discounted", parts.name);
        Ok(ControlProblem::new(parts)?)
    }

    pub fn unicycle_spec(&self) -> UnicycleSpec<f64> {
        let p = &self.problem;
        let discs = p
            .obstacles
            .iter()
            .map(|&[cx, cy, r]| Disc {
                center: [cx, cy],
                radius: r,
            })
            .collect();
        let mut spec = UnicycleSpec::new(discs, p.speed, p.horizon.unwrap_or(4.0));
        spec.penalty_scale = p.penalty_scale;
        if !p.starts.is_empty() {
            spec.starts = p.starts.iter().map(|&[w, x, y, h]| (w, [x, y, h])).collect();
        }
        spec
    }

    pub fn basis_kind(&self) -> BasisKind {
        self.basis.kind.unwrap_or(match self.problem.kind {
            ProblemKind::Unicycle => BasisKind::Unicycle,
            _ => BasisKind::Quadratic,
        })
    }

    pub fn basis(&self, problem: &ControlProblem<f64>) -> Result<FeatureBasis<f64>> {
        let b = &self.basis;
        let n = problem.dim_x();
        Ok(match self.basis_kind() {
            BasisKind::Quadratic => FeatureBasis::quadratic_forms(n, b.time_degree).with_time_origin(problem.t_final()),
            BasisKind::TotalDegree => FeatureBasis::total_degree(n, b.degree),
            BasisKind::Unicycle => {
                let xb = problem.state_box();
                let spatial = FeatureBasis::concat(vec![
                    FeatureBasis::total_degree(2, b.degree),
                    FeatureBasis::bump_grid(&xb.lo()[..2], &xb.hi()[..2], b.bumps_per_axis, b.bump_width, 1)?,
                ])?;
                FeatureBasis::blockwise(
                    3,
                    vec![
                        BasisBlock {
                            index_set: vec![0, 1],
                            basis: spatial,
                        },
                        BasisBlock {
                            index_set: vec![2],
                            basis: FeatureBasis::total_degree(1, 2),
                        },
                    ],
                )?
            }
        })
    }

    pub fn partition(&self, problem: &ControlProblem<f64>) -> Result<Partition<f64>> {
        Ok(Partition::uniform(problem.t0(), problem.t_final(), self.rollout.segments)?)
    }

    pub fn rollout_options(&self) -> Result<RolloutOptions<f64>> {
        Ok(RolloutOptions::new(Integrator::parse(&self.rollout.integrator)?, self.rollout.step))
    }

    /// Constant control at the center of the control box.
    pub fn initial_theta(&self, problem: &ControlProblem<f64>) -> Result<ControlParameterization<f64>> {
        Ok(ControlParameterization::constant(
            problem,
            self.rollout.knots,
            problem.control_box().center(),
        )?)
    }

    /// Search settings for alternation `round`; the seed advances per round.
    pub fn search_config(&self, problem: &ControlProblem<f64>, round: usize) -> SearchConfig<f64> {
        let s = &self.search;
        let mut cfg = SearchConfig::new(problem, s.tau, s.lambda, s.seed.wrapping_add(round as u64));
        cfg.population = s.population;
        cfg.elite_fraction = s.elite_fraction;
        cfg.iterations = s.iterations;
        cfg
    }

    pub fn dual_config(&self) -> DualUpdateConfig<f64> {
        let mut cfg = DualUpdateConfig::new(self.dual.eps, self.dual.eps_t);
        cfg.box_bound = self.dual.box_bound;
        cfg
    }

    pub fn sample_plan(&self) -> SamplePlan {
        SamplePlan::new(self.dual.grid, self.dual.halton, 0, self.dual.seed)
    }

    pub fn pool_plan(&self) -> SamplePlan {
        self.sample_plan().denser(self.dual.pool_seed)
    }

    pub fn validation_plan(&self) -> SamplePlan {
        self.sample_plan().denser(self.dual.validation_seed)
    }
}
