//! Optimal-control problem instances and benchmark constructors.

pub mod lqr;
mod perturb;
mod strict_feedback;
mod unicycle;

use std::fmt;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::BoundaryMeasure;
use crate::scalar::{all_finite, Scalar};

pub use lqr::{make_lqr, LqrSpec, RiccatiOracle};
pub use perturb::{perturb, Bump, PerturbationBudget, PerturbationRecord};
pub use strict_feedback::{make_strict_feedback, strict_feedback_alpha};
pub use unicycle::{make_unicycle_avoid, obstacle_penalty, Disc, UnicycleSpec};

pub type DynamicsFn<S> = Arc<dyn Fn(S, &[S], &[S]) -> Vec<S> + Send + Sync>;
pub type RunningCostFn<S> = Arc<dyn Fn(S, &[S], &[S]) -> S + Send + Sync>;
pub type TerminalCostFn<S> = Arc<dyn Fn(&[S]) -> S + Send + Sync>;

/// Axis-aligned box `[lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBounds<S> {
    lo: Vec<S>,
    hi: Vec<S>,
}

impl<S: Scalar> BoxBounds<S> {
    pub fn new(lo: Vec<S>, hi: Vec<S>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::LengthMismatch {
                what: "box upper bounds",
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.is_empty() {
            return Err(Error::InvalidProblem("box has no coordinates".into()));
        }
        if !all_finite(&lo) || !all_finite(&hi) {
            return Err(Error::InvalidProblem("box bounds must be finite".into()));
        }
        if let Some(i) = (0..lo.len()).find(|&i| !(lo[i] <= hi[i])) {
            return Err(Error::InvalidProblem(format!(
                "box is empty in coordinate {i}: [{}, {}]",
                lo[i], hi[i]
            )));
        }
        Ok(BoxBounds { lo, hi })
    }

    /// `[-b, b]^n`.
    pub fn symmetric(n: usize, b: S) -> Result<Self> {
        Self::new(vec![-b; n], vec![b; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
    pub fn lo(&self) -> &[S] {
        &self.lo
    }
    pub fn hi(&self) -> &[S] {
        &self.hi
    }

    pub fn contains(&self, x: &[S]) -> bool {
        x.len() == self.dim() && x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(&v, (&l, &h))| l <= v && v <= h)
    }

    pub fn center(&self) -> Vec<S> {
        let half = S::lit(0.5);
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| half * (l + h)).collect()
    }

    pub fn widths(&self) -> Vec<S> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| h - l).collect()
    }

    pub fn clip(&self, x: &[S]) -> Vec<S> {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&v, (&l, &h))| v.max(l).min(h))
            .collect()
    }

    /// Box grown by `factor` times its half-width around the center.
    pub fn inflate(&self, factor: S) -> Self {
        let half = S::lit(0.5);
        let (lo, hi) = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| {
                let c = half * (l + h);
                let r = half * (h - l) * factor;
                (c - r, c + r)
            })
            .unzip();
        BoxBounds { lo, hi }
    }

    /// Map from the unit cube `[0,1]^n` into the box.
    pub fn from_unit(&self, z: &[S]) -> Vec<S> {
        z.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&s, (&l, &h))| l + s * (h - l))
            .collect()
    }
}

/// Additive block structure of a problem: index sets `S_k` over the state
/// coordinates plus split running and terminal costs with `l = sum_k l_k`
/// and `g = sum_k g_k`.
#[derive(Clone)]
pub struct BlockSplit<S> {
    pub index_sets: Vec<Vec<usize>>,
    pub running: Vec<RunningCostFn<S>>,
    pub terminal: Vec<TerminalCostFn<S>>,
}

impl<S> fmt::Debug for BlockSplit<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlockSplit")
            .field("index_sets", &self.index_sets)
            .finish_non_exhaustive()
    }
}

/// Everything needed to build a [`ControlProblem`].
#[derive(Clone)]
pub struct ProblemParts<S> {
    pub name: String,
    /// Canonical textual description; hashed into the problem id.
    pub descriptor: String,
    pub dim_x: usize,
    pub dim_u: usize,
    pub t0: S,
    pub t_final: S,
    pub dynamics: DynamicsFn<S>,
    pub running_cost: RunningCostFn<S>,
    pub terminal_cost: TerminalCostFn<S>,
    pub control_box: BoxBounds<S>,
    pub state_box: BoxBounds<S>,
    pub initial_measure: BoundaryMeasure<S>,
    pub time_homogeneous: bool,
    pub blocks: Option<BlockSplit<S>>,
    pub perturbation: Option<PerturbationRecord<S>>,
}

/// Fixed-horizon Bolza problem `min int l dt + g(x(T))`, `x' = f(t, x, u)`.
#[derive(Clone)]
pub struct ControlProblem<S> {
    parts: ProblemParts<S>,
    id: String,
}

impl<S> fmt::Debug for ControlProblem<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlProblem")
            .field("name", &self.parts.name)
            .field("id", &self.id)
            .field("dim_x", &self.parts.dim_x)
            .field("dim_u", &self.parts.dim_u)
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> ControlProblem<S> {
    pub fn new(parts: ProblemParts<S>) -> Result<Self> {
        if parts.dim_x == 0 || parts.dim_u == 0 {
            return Err(Error::InvalidProblem("state and control dimensions must be positive".into()));
        }
        if !parts.t0.is_finite() || !parts.t_final.is_finite() || !(parts.t_final > parts.t0) {
            return Err(Error::InvalidProblem(format!(
                "horizon [{}, {}] must satisfy T > t0",
                parts.t0, parts.t_final
            )));
        }
        if parts.state_box.dim() != parts.dim_x {
            return Err(Error::LengthMismatch {
                what: "state box",
                expected: parts.dim_x,
                found: parts.state_box.dim(),
            });
        }
        if parts.control_box.dim() != parts.dim_u {
            return Err(Error::LengthMismatch {
                what: "control box",
                expected: parts.dim_u,
                found: parts.control_box.dim(),
            });
        }
        if parts.initial_measure.dim_x() != parts.dim_x {
            return Err(Error::LengthMismatch {
                what: "initial measure",
                expected: parts.dim_x,
                found: parts.initial_measure.dim_x(),
            });
        }
        if parts.initial_measure.time() != parts.t0 {
            return Err(Error::TimeMismatch {
                expected: parts.t0.as_f64(),
                found: parts.initial_measure.time().as_f64(),
            });
        }
        if let Some(blocks) = &parts.blocks {
            if blocks.running.len() != blocks.index_sets.len() || blocks.terminal.len() != blocks.index_sets.len() {
                return Err(Error::InvalidProblem("block split has inconsistent lengths".into()));
            }
            for set in &blocks.index_sets {
                if let Some(&index) = set.iter().find(|&&i| i >= parts.dim_x) {
                    return Err(Error::IndexOutOfRange {
                        index,
                        dim: parts.dim_x,
                    });
                }
            }
        }
        let id = hex::encode(&Sha256::digest(parts.descriptor.as_bytes())[..8]);
        let problem = ControlProblem { parts, id };
        problem.spot_check()?;
        Ok(problem)
    }

    /// Evaluates at the box centers and corners at both horizon ends.
    fn spot_check(&self) -> Result<()> {
        let p = &self.parts;
        let xs = [p.state_box.center(), p.state_box.lo().to_vec(), p.state_box.hi().to_vec()];
        let us = [p.control_box.center(), p.control_box.lo().to_vec(), p.control_box.hi().to_vec()];
        for x in &xs {
            for u in &us {
                let f0 = self.dynamics(p.t0, x, u);
                let f1 = self.dynamics(p.t_final, x, u);
                if f0.len() != p.dim_x {
                    return Err(Error::LengthMismatch {
                        what: "dynamics output",
                        expected: p.dim_x,
                        found: f0.len(),
                    });
                }
                let l0 = self.running_cost(p.t0, x, u);
                let l1 = self.running_cost(p.t_final, x, u);
                if !all_finite(&f0) || !all_finite(&f1) || !l0.is_finite() || !l1.is_finite() {
                    return Err(Error::InvalidProblem(format!("{}: non-finite evaluation on the box", p.name)));
                }
                if p.time_homogeneous && (f0 != f1 || l0 != l1) {
                    return Err(Error::InvalidProblem(format!(
                        "{}: declared time-homogeneous but evaluations depend on t",
                        p.name
                    )));
                }
            }
            if !self.terminal_cost(x).is_finite() {
                return Err(Error::InvalidProblem(format!("{}: non-finite terminal cost", p.name)));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }
    pub fn descriptor(&self) -> &str {
        &self.parts.descriptor
    }
    /// Short content hash of the descriptor.
    pub fn id(&self) -> &str {
        &self.id
    }
    pub fn dim_x(&self) -> usize {
        self.parts.dim_x
    }
    pub fn dim_u(&self) -> usize {
        self.parts.dim_u
    }
    pub fn t0(&self) -> S {
        self.parts.t0
    }
    pub fn t_final(&self) -> S {
        self.parts.t_final
    }
    pub fn horizon(&self) -> S {
        self.parts.t_final - self.parts.t0
    }
    pub fn control_box(&self) -> &BoxBounds<S> {
        &self.parts.control_box
    }
    pub fn state_box(&self) -> &BoxBounds<S> {
        &self.parts.state_box
    }
    pub fn initial_measure(&self) -> &BoundaryMeasure<S> {
        &self.parts.initial_measure
    }
    pub fn time_homogeneous(&self) -> bool {
        self.parts.time_homogeneous
    }
    pub fn blocks(&self) -> Option<&BlockSplit<S>> {
        self.parts.blocks.as_ref()
    }
    pub fn perturbation(&self) -> Option<&PerturbationRecord<S>> {
        self.parts.perturbation.as_ref()
    }
    pub fn parts(&self) -> &ProblemParts<S> {
        &self.parts
    }

    #[inline]
    pub fn dynamics(&self, t: S, x: &[S], u: &[S]) -> Vec<S> {
        (self.parts.dynamics)(t, x, u)
    }
    #[inline]
    pub fn running_cost(&self, t: S, x: &[S], u: &[S]) -> S {
        (self.parts.running_cost)(t, x, u)
    }
    #[inline]
    pub fn terminal_cost(&self, x: &[S]) -> S {
        (self.parts.terminal_cost)(x)
    }

    /// Same problem with a different initial measure (moved to `t0`).
    pub fn with_initial_measure(&self, mu0: BoundaryMeasure<S>) -> Result<Self> {
        let mut parts = self.parts.clone();
        parts.initial_measure = mu0.at_time(parts.t0);
        parts.descriptor = format!("{}|mu0={}", self.parts.descriptor, measure_digest(&parts.initial_measure));
        Self::new(parts)
    }

    /// Horizon `[t0 + tau, T + tau]` with the same data. Only meaningful for
    /// time-homogeneous problems.
    pub fn shifted(&self, tau: S) -> Result<Self> {
        if !self.parts.time_homogeneous {
            return Err(Error::NotTimeHomogeneous);
        }
        if tau < S::zero() {
            return Err(Error::NegativeShift(tau.as_f64()));
        }
        let mut parts = self.parts.clone();
        parts.t0 = parts.t0 + tau;
        parts.t_final = parts.t_final + tau;
        parts.initial_measure = parts.initial_measure.at_time(parts.t0);
        parts.descriptor = format!("{}|shift={}", self.parts.descriptor, tau);
        Self::new(parts)
    }
}

fn measure_digest<S: Scalar>(mu: &BoundaryMeasure<S>) -> String {
    let mut h = Sha256::new();
    for a in mu.atoms() {
        h.update(format!("{}", a.weight));
        for v in &a.x {
            h.update(format!(",{v}"));
        }
        h.update(";");
    }
    hex::encode(&h.finalize()[..6])
}

pub(crate) fn fmt_vec<S: Scalar>(v: &[S]) -> String {
    let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("[{}]", items.join(","))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_validation() {
        assert!(BoxBounds::new(vec![0.0], vec![-1.0]).is_err());
        assert!(BoxBounds::new(vec![0.0], vec![f64::INFINITY]).is_err());
        assert!(BoxBounds::<f64>::new(vec![], vec![]).is_err());
        let b = BoxBounds::symmetric(2, 1.0).unwrap();
        assert!(b.contains(&[0.5, -1.0]));
        assert!(!b.contains(&[0.5, -1.5]));
        assert_eq!(b.clip(&[3.0, -3.0]), vec![1.0, -1.0]);
        assert_eq!(b.inflate(2.0).hi(), &[2.0, 2.0]);
    }

    #[test]
    fn time_dependence_is_detected() {
        let (lqr, _) = make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap();
        let mut parts = lqr.parts().clone();
        parts.running_cost = Arc::new(|t: f64, x: &[f64], _u: &[f64]| t * x[0]);
        parts.time_homogeneous = true;
        assert!(matches!(ControlProblem::new(parts.clone()), Err(Error::InvalidProblem(_))));
        parts.time_homogeneous = false;
        let p = ControlProblem::new(parts).unwrap();
        assert!(matches!(p.shifted(0.1), Err(Error::NotTimeHomogeneous)));
    }

    #[test]
    fn shifted_problem_moves_horizon() {
        let (lqr, _) = make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap();
        let s = lqr.shifted(0.25).unwrap();
        assert_eq!((s.t0(), s.t_final()), (0.25, 1.25));
        assert_eq!(s.initial_measure().time(), 0.25);
        assert_ne!(s.id(), lqr.id());
        assert!(matches!(lqr.shifted(-0.1), Err(Error::NegativeShift(_))));
    }
}
