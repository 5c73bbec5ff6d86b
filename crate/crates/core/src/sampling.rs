//! Deterministic sample sets over `[t0, T] x X x U` and over `X` at `T`.
//!
//! A plan is a tensor grid, a Halton block under a seeded random shift
//! (mod 1) and a seeded uniform refill. The
//! descriptor of the plan (and of any extra points) is hashed into every
//! report that uses the samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::measures::PrimalPair;
use crate::problems::{BoxBounds, ControlProblem};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    /// Points per axis of the tensor grid (0 disables the grid).
    pub grid_per_axis: usize,
    pub halton: usize,
    pub uniform: usize,
    pub seed: u64,
    /// Points per axis of the terminal grid over `X`.
    pub terminal_grid_per_axis: usize,
    pub terminal_halton: usize,
}

impl SamplePlan {
    pub fn new(grid_per_axis: usize, halton: usize, uniform: usize, seed: u64) -> Self {
        SamplePlan {
            grid_per_axis,
            halton,
            uniform,
            seed,
            terminal_grid_per_axis: grid_per_axis.max(2),
            terminal_halton: halton / 4,
        }
    }

    pub fn descriptor(&self) -> String {
        format!(
            "grid={},halton={},uniform={},seed={},tgrid={},thalton={}",
            self.grid_per_axis, self.halton, self.uniform, self.seed, self.terminal_grid_per_axis, self.terminal_halton
        )
    }

    /// Same plan with every count scaled up, for validation passes.
    pub fn denser(&self, seed: u64) -> Self {
        SamplePlan {
            grid_per_axis: self.grid_per_axis + self.grid_per_axis / 2 + 1,
            halton: self.halton * 2,
            uniform: self.uniform * 2,
            seed,
            terminal_grid_per_axis: self.terminal_grid_per_axis * 2 + 1,
            terminal_halton: self.terminal_halton * 2,
        }
    }
}

/// One running sample `(t, x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningSample<S> {
    pub t: S,
    pub x: Vec<S>,
    pub u: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet<S> {
    pub running: Vec<RunningSample<S>>,
    pub terminal: Vec<Vec<S>>,
    descriptor: String,
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// Halton point `index` (starting at 1) in `[0, 1]^dim`.
pub fn halton_point(index: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|d| radical_inverse(index, PRIMES[d % PRIMES.len()])).collect()
}

fn grid_coords(n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

fn tensor_grid(n: usize, dim: usize) -> Vec<Vec<f64>> {
    let axis = grid_coords(n);
    if axis.is_empty() {
        return Vec::new();
    }
    let mut out = vec![Vec::with_capacity(dim)];
    for _ in 0..dim {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for p in &out {
            for &a in &axis {
                let mut q = p.clone();
                q.push(a);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn shifted(mut z: Vec<f64>, shift: &[f64]) -> Vec<f64> {
    for (v, s) in z.iter_mut().zip(shift) {
        *v = (*v + s).fract();
    }
    z
}

fn split_running<S: Scalar>(z: &[f64], t0: S, t1: S, xb: &BoxBounds<S>, ub: &BoxBounds<S>) -> RunningSample<S> {
    let n = xb.dim();
    let zs: Vec<S> = z.iter().map(|&v| S::lit(v)).collect();
    RunningSample {
        t: t0 + zs[0] * (t1 - t0),
        x: xb.from_unit(&zs[1..1 + n]),
        u: ub.from_unit(&zs[1 + n..]),
    }
}

impl<S: Scalar> SampleSet<S> {
    /// Realizes `plan` on the problem's time, state and control boxes.
    pub fn from_plan(problem: &ControlProblem<S>, plan: &SamplePlan) -> Result<Self> {
        let (t0, t1) = (problem.t0(), problem.t_final());
        let xb = problem.state_box();
        let ub = problem.control_box();
        let dim = 1 + xb.dim() + ub.dim();
        let mut shift_rng = ChaCha8Rng::seed_from_u64(plan.seed);
        shift_rng.set_stream(1);
        let mut running = Vec::new();
        for z in tensor_grid(plan.grid_per_axis, dim) {
            running.push(split_running(&z, t0, t1, xb, ub));
        }
        let shift: Vec<f64> = (0..dim).map(|_| shift_rng.random::<f64>()).collect();
        for i in 0..plan.halton {
            running.push(split_running(&shifted(halton_point(i as u64 + 1, dim), &shift), t0, t1, xb, ub));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
        for _ in 0..plan.uniform {
            let z: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
            running.push(split_running(&z, t0, t1, xb, ub));
        }
        let mut terminal: Vec<Vec<S>> = tensor_grid(plan.terminal_grid_per_axis, xb.dim())
            .into_iter()
            .map(|z| xb.from_unit(&z.iter().map(|&v| S::lit(v)).collect::<Vec<_>>()))
            .collect();
        let shift: Vec<f64> = (0..xb.dim()).map(|_| shift_rng.random::<f64>()).collect();
        for i in 0..plan.terminal_halton {
            let z: Vec<S> = shifted(halton_point(i as u64 + 1, xb.dim()), &shift)
                .into_iter()
                .map(S::lit)
                .collect();
            terminal.push(xb.from_unit(&z));
        }
        for _ in 0..plan.uniform / 4 {
            let z: Vec<S> = (0..xb.dim()).map(|_| S::lit(rng.random::<f64>())).collect();
            terminal.push(xb.from_unit(&z));
        }
        Ok(SampleSet {
            running,
            terminal,
            descriptor: format!("plan({})@{}", plan.descriptor(), problem.id()),
        })
    }

    pub fn from_points(running: Vec<RunningSample<S>>, terminal: Vec<Vec<S>>, label: &str) -> Self {
        SampleSet {
            running,
            terminal,
            descriptor: format!("points({label})"),
        }
    }

    /// Adds the atoms of a primal pair as extra constraint points.
    pub fn with_pair_atoms(mut self, pair: &PrimalPair<S>) -> Self {
        for a in pair.occupation.atoms() {
            self.running.push(RunningSample {
                t: a.t,
                x: a.x.clone(),
                u: a.u.clone(),
            });
        }
        for a in pair.terminal.atoms() {
            self.terminal.push(a.x.clone());
        }
        self.descriptor = format!(
            "{}+pair({},{})",
            self.descriptor,
            pair.occupation.len(),
            pair.terminal.len()
        );
        self
    }

    pub fn union(mut self, other: &SampleSet<S>) -> Self {
        self.running.extend(other.running.iter().cloned());
        self.terminal.extend(other.terminal.iter().cloned());
        self.descriptor = format!("{}|{}", self.descriptor, other.descriptor);
        self
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    /// Content hash over the descriptor and the sample counts.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.descriptor.as_bytes());
        h.update(format!("|{}|{}", self.running.len(), self.terminal.len()));
        hex::encode(&h.finalize()[..8])
    }

    pub fn check_nonempty(&self) -> Result<()> {
        if self.running.is_empty() {
            return Err(Error::EmptySamples("running samples"));
        }
        if self.terminal.is_empty() {
            return Err(Error::EmptySamples("terminal samples"));
        }
        Ok(())
    }
}
