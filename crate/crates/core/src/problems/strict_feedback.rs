use std::sync::Arc;

use super::{BlockSplit, BoxBounds, ControlProblem, ProblemParts, RunningCostFn, TerminalCostFn};
use crate::error::Result;
use crate::measures::BoundaryMeasure;
use crate::scalar::Scalar;

/// Virtual control of the first block, `alpha(xi) = -xi`.
pub fn strict_feedback_alpha<S: Scalar>(xi: S) -> S {
    -xi
}

/// `xi' = -xi + eta`, `eta' = u` on `[0, 1]` from `(1, 0)`.
///
/// Blocks `S1 = {xi}` and `S2 = {xi, eta}` with `l1 = xi^2`,
/// `l2 = (eta - alpha(xi))^2 + u^2`, `g1 = xi^2`, `g2 = (eta - alpha(xi))^2 / 2`.
pub fn make_strict_feedback<S: Scalar>() -> Result<ControlProblem<S>> {
    let half = S::lit(0.5);
    let l1: RunningCostFn<S> = Arc::new(|_t: S, x: &[S], _u: &[S]| x[0] * x[0]);
    let l2: RunningCostFn<S> = Arc::new(|_t: S, x: &[S], u: &[S]| {
        let z = x[1] - strict_feedback_alpha(x[0]);
        z * z + u[0] * u[0]
    });
    let g1: TerminalCostFn<S> = Arc::new(|x: &[S]| x[0] * x[0]);
    let g2: TerminalCostFn<S> = Arc::new(move |x: &[S]| {
        let z = x[1] - strict_feedback_alpha(x[0]);
        half * z * z
    });
    let (a, b, c, d) = (l1.clone(), l2.clone(), g1.clone(), g2.clone());
    ControlProblem::new(ProblemParts {
        name: "strict_feedback".into(),
        descriptor: "strict_feedback|f=-xi+eta|eta'=u|T=1|x0=[1,0]|xb=2|ub=4".into(),
        dim_x: 2,
        dim_u: 1,
        t0: S::zero(),
        t_final: S::one(),
        dynamics: Arc::new(|_t: S, x: &[S], u: &[S]| vec![-x[0] + x[1], u[0]]),
        running_cost: Arc::new(move |t: S, x: &[S], u: &[S]| a(t, x, u) + b(t, x, u)),
        terminal_cost: Arc::new(move |x: &[S]| c(x) + d(x)),
        control_box: BoxBounds::symmetric(1, S::lit(4.0))?,
        state_box: BoxBounds::symmetric(2, S::lit(2.0))?,
        initial_measure: BoundaryMeasure::dirac(S::zero(), vec![S::one(), S::zero()])?,
        time_homogeneous: true,
        blocks: Some(BlockSplit {
            index_sets: vec![vec![0], vec![0, 1]],
            running: vec![l1, l2],
            terminal: vec![g1, g2],
        }),
        perturbation: None,
    })
}
