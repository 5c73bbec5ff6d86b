use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::ControlProblem;
use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};

/// Sup-norm budgets for dynamics, running cost and terminal cost changes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationBudget<S> {
    pub delta_f: S,
    pub delta_l: S,
    pub delta_g: S,
}

impl<S: Scalar> PerturbationBudget<S> {
    pub fn new(delta_f: S, delta_l: S, delta_g: S) -> Result<Self> {
        for (name, v) in [("delta_f", delta_f), ("delta_l", delta_l), ("delta_g", delta_g)] {
            if !v.is_finite() || v < S::zero() {
                return Err(Error::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(PerturbationBudget {
            delta_f,
            delta_l,
            delta_g,
        })
    }

    pub fn zero() -> Self {
        PerturbationBudget {
            delta_f: S::zero(),
            delta_l: S::zero(),
            delta_g: S::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta_f == S::zero() && self.delta_l == S::zero() && self.delta_g == S::zero()
    }
}

/// Compactly supported bump `amplitude * prod_i (1 - s_i^2)^2`,
/// `s_i = (z_i - center_i) / half_width_i`, zero outside the unit cube.
///
/// Its sup norm is `|amplitude|`, attained at the center.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bump<S> {
    pub center: Vec<S>,
    pub half_width: Vec<S>,
    pub amplitude: S,
}

impl<S: Scalar> Bump<S> {
    pub fn profile(&self, z: &[S]) -> S {
        let mut acc = S::one();
        for ((&zi, &c), &w) in z.iter().zip(&self.center).zip(&self.half_width) {
            let s = (zi - c) / w;
            if s.abs() >= S::one() {
                return S::zero();
            }
            let q = S::one() - s * s;
            acc = acc * q * q;
        }
        acc
    }

    pub fn eval(&self, z: &[S]) -> S {
        self.amplitude * self.profile(z)
    }
}

/// Which bumps were added by [`perturb`]; the dynamics bump pushes along a
/// fixed unit direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord<S> {
    pub budget: PerturbationBudget<S>,
    pub seed: u64,
    pub dynamics_bump: Option<(Bump<S>, Vec<S>)>,
    pub running_bump: Option<Bump<S>>,
    pub terminal_bump: Option<Bump<S>>,
}

fn random_bump<S: Scalar>(rng: &mut ChaCha8Rng, lo: &[S], hi: &[S], amplitude: S) -> Bump<S> {
    let mut center = Vec::with_capacity(lo.len());
    let mut half_width = Vec::with_capacity(lo.len());
    for (&l, &h) in lo.iter().zip(hi) {
        let (l, h) = (l.as_f64(), h.as_f64());
        let w = (h - l).max(1e-12);
        center.push(S::lit(rng.random_range(l..=h)));
        half_width.push(S::lit(w * rng.random_range(0.25..0.5)));
    }
    let sign = if rng.random_bool(0.5) { S::one() } else { -S::one() };
    Bump {
        center,
        half_width,
        amplitude: sign * amplitude,
    }
}

/// Adds smooth bounded bumps of sup norm exactly `delta_f`, `delta_l`,
/// `delta_g` to the dynamics (Euclidean norm), running cost and terminal
/// cost. Zero budgets leave the respective evaluator untouched.
pub fn perturb<S: Scalar>(problem: &ControlProblem<S>, budget: &PerturbationBudget<S>, seed: u64) -> Result<ControlProblem<S>> {
    let budget = PerturbationBudget::new(budget.delta_f, budget.delta_l, budget.delta_g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xb = problem.state_box();
    let ub = problem.control_box();
    let zlo: Vec<S> = xb.lo().iter().chain(ub.lo()).copied().collect();
    let zhi: Vec<S> = xb.hi().iter().chain(ub.hi()).copied().collect();

    // Draw everything up front so the stream does not depend on which
    // budgets are zero.
    let fb = random_bump(&mut rng, &zlo, &zhi, budget.delta_f);
    let dir: Vec<f64> = (0..problem.dim_x()).map(|_| rng.sample(StandardNormal)).collect();
    let lb = random_bump(&mut rng, &zlo, &zhi, budget.delta_l);
    let gb = random_bump(&mut rng, xb.lo(), xb.hi(), budget.delta_g);
    let dn = norm2(&dir).max(1e-300);
    let direction: Vec<S> = dir.iter().map(|&d| S::lit(d / dn)).collect();
    // Positive amplitude for the dynamics bump; the sign lives in the direction.
    let fb = Bump {
        amplitude: fb.amplitude.abs(),
        ..fb
    };

    let mut parts = problem.parts().clone();
    let record = PerturbationRecord {
        budget,
        seed,
        dynamics_bump: (budget.delta_f > S::zero()).then(|| (fb.clone(), direction.clone())),
        running_bump: (budget.delta_l > S::zero()).then(|| lb.clone()),
        terminal_bump: (budget.delta_g > S::zero()).then(|| gb.clone()),
    };
    if budget.delta_f > S::zero() {
        let base = parts.dynamics.clone();
        let bump = fb;
        let dir = direction;
        parts.dynamics = Arc::new(move |t: S, x: &[S], u: &[S]| {
            let mut f = base(t, x, u);
            let z: Vec<S> = x.iter().chain(u).copied().collect();
            let b = bump.eval(&z);
            if b != S::zero() {
                for (fi, &di) in f.iter_mut().zip(&dir) {
                    *fi = *fi + b * di;
                }
            }
            f
        });
    }
    if budget.delta_l > S::zero() {
        let base = parts.running_cost.clone();
        let bump = lb;
        parts.running_cost = Arc::new(move |t: S, x: &[S], u: &[S]| {
            let z: Vec<S> = x.iter().chain(u).copied().collect();
            base(t, x, u) + bump.eval(&z)
        });
    }
    if budget.delta_g > S::zero() {
        let base = parts.terminal_cost.clone();
        let bump = gb;
        parts.terminal_cost = Arc::new(move |x: &[S]| base(x) + bump.eval(x));
    }
    if !budget.is_zero() {
        // The split costs no longer sum to the perturbed costs.
        parts.blocks = None;
        parts.descriptor = format!(
            "{}|perturb(f={},l={},g={},seed={})",
            parts.descriptor, budget.delta_f, budget.delta_l, budget.delta_g, seed
        );
        parts.name = format!("{}+perturbed", parts.name);
    }
    parts.perturbation = Some(record);
    ControlProblem::new(parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::lqr::{make_lqr, LqrSpec};
    use proptest::prelude::*;

    fn grid_points(n: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut out = Vec::new();
        for i in 0..=n {
            for j in 0..=n {
                let x = -2.0 + 4.0 * i as f64 / n as f64;
                let u = -3.0 + 6.0 * j as f64 / n as f64;
                out.push((vec![x], vec![u]));
            }
        }
        out
    }

    #[test]
    fn zero_budget_is_identity() {
        let (p, _) = make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap();
        let q = perturb(&p, &PerturbationBudget::zero(), 9).unwrap();
        assert_eq!(q.id(), p.id());
        for (x, u) in grid_points(30) {
            assert_eq!(q.running_cost(0.2, &x, &u).to_bits(), p.running_cost(0.2, &x, &u).to_bits());
            assert_eq!(q.dynamics(0.2, &x, &u), p.dynamics(0.2, &x, &u));
            assert_eq!(q.terminal_cost(&x).to_bits(), p.terminal_cost(&x).to_bits());
        }
    }

    #[test]
    fn terminal_bump_attains_its_budget() {
        let (p, _) = make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap();
        let q = perturb(&p, &PerturbationBudget::new(0.0, 0.0, 0.1).unwrap(), 4).unwrap();
        let bump = q.perturbation().unwrap().terminal_bump.clone().unwrap();
        let mut max_diff: f64 = 0.0;
        for i in 0..=4000 {
            let x = [-2.0 + 4.0 * i as f64 / 4000.0];
            max_diff = max_diff.max((q.terminal_cost(&x) - p.terminal_cost(&x)).abs());
        }
        assert!(max_diff <= 0.1 + 1e-15);
        let at_center = (q.terminal_cost(&bump.center) - p.terminal_cost(&bump.center)).abs();
        assert!((at_center - 0.1).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_budgets() {
        assert!(PerturbationBudget::new(-1.0, 0.0, 0.0).is_err());
        assert!(PerturbationBudget::new(0.0, f64::NAN, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn perturbations_stay_within_budget(seed in 0u64..1000, df in 0.0f64..0.5, dl in 0.0f64..0.5) {
            let (p, _) = make_lqr(&LqrSpec::scalar_integrator(1.0)).unwrap();
            let q = perturb(&p, &PerturbationBudget::new(df, dl, 0.0).unwrap(), seed).unwrap();
            for (x, u) in grid_points(12) {
                let fd = (q.dynamics(0.0, &x, &u)[0] - p.dynamics(0.0, &x, &u)[0]).abs();
                let ld = (q.running_cost(0.0, &x, &u) - p.running_cost(0.0, &x, &u)).abs();
                prop_assert!(fd <= df * (1.0 + 1e-12));
                prop_assert!(ld <= dl * (1.0 + 1e-12));
            }
        }
    }
}
