use std::sync::Arc;

use super::{fmt_vec, BlockSplit, BoxBounds, ControlProblem, ProblemParts, RunningCostFn, TerminalCostFn};
use crate::error::{Error, Result};
use crate::measures::{BoundaryAtom, BoundaryMeasure};
use crate::scalar::Scalar;

/// Circular obstacle in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Disc<S> {
    pub center: [S; 2],
    pub radius: S,
}

/// Constant-speed unicycle `(x, y, heading)` steered by its turn rate.
#[derive(Clone, Debug, PartialEq)]
pub struct UnicycleSpec<S> {
    pub obstacles: Vec<Disc<S>>,
    pub speed: S,
    pub horizon: S,
    pub goal: [S; 2],
    pub omega_max: S,
    pub tracking_weight: S,
    pub effort_weight: S,
    pub terminal_weight: S,
    pub penalty_scale: S,
    pub state_lo: [S; 3],
    pub state_hi: [S; 3],
    /// Weighted start states; a single unit atom in the common case.
    pub starts: Vec<(S, [S; 3])>,
}

impl<S: Scalar> UnicycleSpec<S> {
    pub fn new(obstacles: Vec<Disc<S>>, speed: S, horizon: S) -> Self {
        let pi = S::lit(std::f64::consts::PI);
        UnicycleSpec {
            obstacles,
            speed,
            horizon,
            goal: [S::lit(2.0), S::zero()],
            omega_max: S::lit(2.0),
            tracking_weight: S::one(),
            effort_weight: S::lit(0.1),
            terminal_weight: S::one(),
            penalty_scale: S::lit(10.0),
            state_lo: [S::lit(-3.0), S::lit(-3.0), -pi],
            state_hi: [S::lit(3.0), S::lit(3.0), pi],
            starts: vec![(S::one(), [S::lit(-2.0), S::zero(), S::zero()])],
        }
    }
}

/// `c * sum_k max(0, r_k^2 - |p - c_k|^2)^2`.
pub fn obstacle_penalty<S: Scalar>(p: [S; 2], discs: &[Disc<S>], scale: S) -> S {
    let mut acc = S::zero();
    for d in discs {
        let dx = p[0] - d.center[0];
        let dy = p[1] - d.center[1];
        let h = d.radius * d.radius - (dx * dx + dy * dy);
        if h > S::zero() {
            acc = acc + h * h;
        }
    }
    scale * acc
}

fn goal_distance_sq<S: Scalar>(x: &[S], goal: [S; 2]) -> S {
    let dx = x[0] - goal[0];
    let dy = x[1] - goal[1];
    dx * dx + dy * dy
}

/// Builds the obstacle-avoidance problem. Blocks: `{x, y}` carries tracking,
/// obstacle and terminal terms, `{heading}` carries the turn-rate effort.
pub fn make_unicycle_avoid<S: Scalar>(spec: &UnicycleSpec<S>) -> Result<ControlProblem<S>> {
    if !(spec.speed > S::zero()) {
        return Err(Error::InvalidProblem(format!("speed must be positive, got {}", spec.speed)));
    }
    if !(spec.omega_max > S::zero()) {
        return Err(Error::InvalidProblem("turn-rate bound must be positive".into()));
    }
    let state_box = BoxBounds::new(spec.state_lo.to_vec(), spec.state_hi.to_vec())?;
    if (0..3).any(|i| !(spec.state_lo[i] < spec.state_hi[i])) {
        return Err(Error::InvalidProblem("state box is empty".into()));
    }
    for (index, d) in spec.obstacles.iter().enumerate() {
        if !(d.radius > S::zero()) {
            return Err(Error::InvalidProblem(format!("obstacle {index} has nonpositive radius")));
        }
        let inside = (0..2).all(|i| {
            d.center[i] - d.radius >= spec.state_lo[i] && d.center[i] + d.radius <= spec.state_hi[i]
        });
        if !inside {
            return Err(Error::InvalidProblem(format!("obstacle {index} is not inside the state box")));
        }
        for (_, s) in &spec.starts {
            if goal_distance_sq(s, d.center) < d.radius * d.radius {
                return Err(Error::ObstacleCoversStart { index });
            }
        }
    }
    let atoms = spec
        .starts
        .iter()
        .map(|(w, s)| BoundaryAtom {
            weight: *w,
            x: s.to_vec(),
        })
        .collect();
    let initial_measure = BoundaryMeasure::new(S::zero(), 3, atoms)?;

    let discs: Vec<String> = spec
        .obstacles
        .iter()
        .map(|d| format!("({},{};{})", d.center[0], d.center[1], d.radius))
        .collect();
    let descriptor = format!(
        "unicycle|obs={}|V={}|T={}|goal={}|wmax={}|w=({},{},{})|c={}|lo={}|hi={}|starts={}",
        discs.join(""),
        spec.speed,
        spec.horizon,
        fmt_vec(&spec.goal),
        spec.omega_max,
        spec.tracking_weight,
        spec.effort_weight,
        spec.terminal_weight,
        spec.penalty_scale,
        fmt_vec(&spec.state_lo),
        fmt_vec(&spec.state_hi),
        spec.starts
            .iter()
            .map(|(w, s)| format!("{w}@{}", fmt_vec(s)))
            .collect::<Vec<_>>()
            .join(";")
    );

    let speed = spec.speed;
    let dynamics = Arc::new(move |_t: S, x: &[S], u: &[S]| vec![speed * x[2].cos(), speed * x[2].sin(), u[0]]);

    let (goal, wt, we, wg, c) = (
        spec.goal,
        spec.tracking_weight,
        spec.effort_weight,
        spec.terminal_weight,
        spec.penalty_scale,
    );
    let obstacles = spec.obstacles.clone();
    let spatial: RunningCostFn<S> = Arc::new(move |_t: S, x: &[S], _u: &[S]| {
        wt * goal_distance_sq(x, goal) + obstacle_penalty([x[0], x[1]], &obstacles, c)
    });
    let effort: RunningCostFn<S> = Arc::new(move |_t: S, _x: &[S], u: &[S]| we * u[0] * u[0]);
    let (sp, ef) = (spatial.clone(), effort.clone());
    let running_cost = Arc::new(move |t: S, x: &[S], u: &[S]| sp(t, x, u) + ef(t, x, u));
    let terminal_spatial: TerminalCostFn<S> = Arc::new(move |x: &[S]| wg * goal_distance_sq(x, goal));
    let terminal_heading: TerminalCostFn<S> = Arc::new(|_x: &[S]| S::zero());
    let ts = terminal_spatial.clone();
    let terminal_cost = Arc::new(move |x: &[S]| ts(x));

    ControlProblem::new(ProblemParts {
        name: "unicycle".into(),
        descriptor,
        dim_x: 3,
        dim_u: 1,
        t0: S::zero(),
        t_final: spec.horizon,
        dynamics,
        running_cost,
        terminal_cost,
        control_box: BoxBounds::symmetric(1, spec.omega_max)?,
        state_box,
        initial_measure,
        time_homogeneous: true,
        blocks: Some(BlockSplit {
            index_sets: vec![vec![0, 1], vec![2]],
            running: vec![spatial, effort],
            terminal: vec![terminal_spatial, terminal_heading],
        }),
        perturbation: None,
    })
}
