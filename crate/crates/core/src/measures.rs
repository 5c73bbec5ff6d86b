//! Atomic occupation and boundary measures, dual pairings, the space-time
//! transport operator and the weak Liouville residual.
//!
//! Every measure is a finite list of weighted atoms, so every pairing is an
//! exact finite sum. Zero-weight atoms are kept (grids stay aligned across
//! comparisons) but skipped by all pairings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::ControlProblem;
use crate::rollout::Integrator;
use crate::scalar::{all_finite, dot, Scalar};

/// Value, time derivative and state gradient of a scalar field at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet<S> {
    pub value: S,
    pub dt: S,
    pub grad: Vec<S>,
}

impl<S: Scalar> Jet<S> {
    pub fn zero(dim_x: usize) -> Self {
        Jet {
            value: S::zero(),
            dt: S::zero(),
            grad: vec![S::zero(); dim_x],
        }
    }
}

/// A C1 scalar field `v(t, x)` that can report its own derivatives.
pub trait SmoothField<S: Scalar>: Sync {
    fn dim_x(&self) -> usize;
    fn jet(&self, t: S, x: &[S]) -> Jet<S>;
    fn value(&self, t: S, x: &[S]) -> S {
        self.jet(t, x).value
    }
}

/// Field assembled from closures; handy for hand-written test functions.
pub struct FnField<S, V, D, G> {
    dim_x: usize,
    value: V,
    dt: D,
    grad: G,
    _marker: std::marker::PhantomData<S>,
}

impl<S, V, D, G> FnField<S, V, D, G>
where
    S: Scalar,
    V: Fn(S, &[S]) -> S + Sync,
    D: Fn(S, &[S]) -> S + Sync,
    G: Fn(S, &[S]) -> Vec<S> + Sync,
{
    pub fn new(dim_x: usize, value: V, dt: D, grad: G) -> Self {
        FnField {
            dim_x,
            value,
            dt,
            grad,
            _marker: std::marker::PhantomData,
        }
    }
}

impl<S, V, D, G> SmoothField<S> for FnField<S, V, D, G>
where
    S: Scalar,
    V: Fn(S, &[S]) -> S + Sync,
    D: Fn(S, &[S]) -> S + Sync,
    G: Fn(S, &[S]) -> Vec<S> + Sync,
{
    fn dim_x(&self) -> usize {
        self.dim_x
    }
    fn jet(&self, t: S, x: &[S]) -> Jet<S> {
        Jet {
            value: (self.value)(t, x),
            dt: (self.dt)(t, x),
            grad: (self.grad)(t, x),
        }
    }
    fn value(&self, t: S, x: &[S]) -> S {
        (self.value)(t, x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupationAtom<S> {
    pub weight: S,
    pub t: S,
    pub x: Vec<S>,
    pub u: Vec<S>,
}

/// Weighted atoms over `[t0, T] x X x U`.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationMeasure<S> {
    atoms: Vec<OccupationAtom<S>>,
    total_mass: S,
    dim_x: usize,
    dim_u: usize,
}

impl<S: Scalar> OccupationMeasure<S> {
    pub fn empty(dim_x: usize, dim_u: usize) -> Self {
        OccupationMeasure {
            atoms: Vec::new(),
            total_mass: S::zero(),
            dim_x,
            dim_u,
        }
    }

    pub fn from_atoms(dim_x: usize, dim_u: usize, atoms: Vec<OccupationAtom<S>>) -> Result<Self> {
        for a in &atoms {
            check_weight(a.weight)?;
            if a.x.len() != dim_x {
                return Err(Error::LengthMismatch {
                    what: "atom state",
                    expected: dim_x,
                    found: a.x.len(),
                });
            }
            if a.u.len() != dim_u {
                return Err(Error::LengthMismatch {
                    what: "atom control",
                    expected: dim_u,
                    found: a.u.len(),
                });
            }
            if !a.t.is_finite() || !all_finite(&a.x) || !all_finite(&a.u) {
                return Err(Error::NonFinite("occupation atom".into()));
            }
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Ok(OccupationMeasure {
            atoms,
            total_mass,
            dim_x,
            dim_u,
        })
    }

    /// Time pushforward of a sampled trajectory with trapezoid weights.
    ///
    /// Weights are `h_i / 2` at both ends of every interval, so they sum to
    /// the covered time span.
    pub fn from_trajectory(times: &[S], states: &[Vec<S>], controls: &[Vec<S>]) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::LengthMismatch {
                what: "trajectory times",
                expected: 2,
                found: times.len(),
            });
        }
        for (what, len) in [("states", states.len()), ("controls", controls.len())] {
            if len != times.len() {
                return Err(Error::LengthMismatch {
                    what,
                    expected: times.len(),
                    found: len,
                });
            }
        }
        for i in 1..times.len() {
            if !(times[i] > times[i - 1]) {
                return Err(Error::NonMonotoneTimes { index: i });
            }
        }
        let dim_x = states[0].len();
        let dim_u = controls[0].len();
        let half = S::lit(0.5);
        let last = times.len() - 1;
        let atoms = (0..times.len())
            .map(|i| {
                let left = if i > 0 { times[i] - times[i - 1] } else { S::zero() };
                let right = if i < last { times[i + 1] - times[i] } else { S::zero() };
                OccupationAtom {
                    weight: half * left + half * right,
                    t: times[i],
                    x: states[i].clone(),
                    u: controls[i].clone(),
                }
            })
            .collect();
        Self::from_atoms(dim_x, dim_u, atoms)
    }

    pub fn atoms(&self) -> &[OccupationAtom<S>] {
        &self.atoms
    }
    pub fn total_mass(&self) -> S {
        self.total_mass
    }
    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn dim_u(&self) -> usize {
        self.dim_u
    }
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `a * self`, for `a >= 0`.
    pub fn scaled(&self, a: S) -> Result<Self> {
        check_weight(a)?;
        let atoms = self
            .atoms
            .iter()
            .map(|at| OccupationAtom {
                weight: at.weight * a,
                ..at.clone()
            })
            .collect();
        Self::from_atoms(self.dim_x, self.dim_u, atoms)
    }

    /// Atom union, i.e. the sum of the two measures.
    pub fn union(&self, other: &Self) -> Result<Self> {
        if other.dim_x != self.dim_x || other.dim_u != self.dim_u {
            return Err(Error::LengthMismatch {
                what: "measure dimensions",
                expected: self.dim_x,
                found: other.dim_x,
            });
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Self::from_atoms(self.dim_x, self.dim_u, atoms)
    }

    /// Smallest and largest atom time, if any.
    pub fn time_span(&self) -> Option<(S, S)> {
        let mut it = self.atoms.iter().map(|a| a.t);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), t| (lo.min(t), hi.max(t))))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryAtom<S> {
    pub weight: S,
    pub x: Vec<S>,
}

/// Weighted atoms over `X` at a fixed time slice.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryMeasure<S> {
    time: S,
    atoms: Vec<BoundaryAtom<S>>,
    total_mass: S,
    dim_x: usize,
}

impl<S: Scalar> BoundaryMeasure<S> {
    pub fn new(time: S, dim_x: usize, atoms: Vec<BoundaryAtom<S>>) -> Result<Self> {
        if !time.is_finite() {
            return Err(Error::NonFinite("boundary time".into()));
        }
        for a in &atoms {
            check_weight(a.weight)?;
            if a.x.len() != dim_x {
                return Err(Error::LengthMismatch {
                    what: "boundary atom state",
                    expected: dim_x,
                    found: a.x.len(),
                });
            }
            if !all_finite(&a.x) {
                return Err(Error::NonFinite("boundary atom".into()));
            }
        }
        let total_mass = atoms.iter().map(|a| a.weight).sum();
        Ok(BoundaryMeasure {
            time,
            atoms,
            total_mass,
            dim_x,
        })
    }

    /// Unit point mass `delta_x` at `time`.
    pub fn dirac(time: S, x: Vec<S>) -> Result<Self> {
        let dim = x.len();
        Self::new(time, dim, vec![BoundaryAtom { weight: S::one(), x }])
    }

    pub fn time(&self) -> S {
        self.time
    }
    pub fn atoms(&self) -> &[BoundaryAtom<S>] {
        &self.atoms
    }
    pub fn total_mass(&self) -> S {
        self.total_mass
    }
    pub fn dim_x(&self) -> usize {
        self.dim_x
    }
    pub fn len(&self) -> usize {
        self.atoms.len()
    }
    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn at_time(&self, time: S) -> Self {
        BoundaryMeasure {
            time,
            ..self.clone()
        }
    }

    pub fn scaled(&self, a: S) -> Result<Self> {
        check_weight(a)?;
        let atoms = self
            .atoms
            .iter()
            .map(|at| BoundaryAtom {
                weight: at.weight * a,
                x: at.x.clone(),
            })
            .collect();
        Self::new(self.time, self.dim_x, atoms)
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        if other.time != self.time {
            return Err(Error::TimeMismatch {
                expected: self.time.as_f64(),
                found: other.time.as_f64(),
            });
        }
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().cloned());
        Self::new(self.time, self.dim_x, atoms)
    }

    /// `sum_i w_i test(x_i)`, skipping zero-weight atoms.
    pub fn pair(&self, test: impl Fn(&[S]) -> S) -> Result<S> {
        let mut acc = S::zero();
        for (i, a) in self.atoms.iter().enumerate() {
            if a.weight == S::zero() {
                continue;
            }
            let v = test(&a.x);
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("test value at boundary atom {i}")));
            }
            acc = acc + a.weight * v;
        }
        Ok(acc)
    }

    /// `<v(time, .), self>` for a smooth field.
    pub fn pair_field<F: SmoothField<S> + ?Sized>(&self, v: &F) -> Result<S> {
        self.pair(|x| v.value(self.time, x))
    }
}

/// Where a primal pair came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Provenance {
    ExplicitMixture {
        components: usize,
    },
    Rollout {
        segments: usize,
        integrator: Integrator,
        step: f64,
    },
}

/// Realized occupation measure together with its terminal measure.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalPair<S> {
    pub occupation: OccupationMeasure<S>,
    pub terminal: BoundaryMeasure<S>,
    pub provenance: Provenance,
}

impl<S: Scalar> PrimalPair<S> {
    pub fn new(
        occupation: OccupationMeasure<S>,
        terminal: BoundaryMeasure<S>,
        provenance: Provenance,
    ) -> Result<Self> {
        if occupation.dim_x() != terminal.dim_x() {
            return Err(Error::LengthMismatch {
                what: "terminal state dimension",
                expected: occupation.dim_x(),
                found: terminal.dim_x(),
            });
        }
        Ok(PrimalPair {
            occupation,
            terminal,
            provenance,
        })
    }

    /// Checks the terminal slice sits at the problem horizon.
    pub fn check_horizon(&self, problem: &ControlProblem<S>) -> Result<()> {
        if self.terminal.time() != problem.t_final() {
            return Err(Error::TimeMismatch {
                expected: problem.t_final().as_f64(),
                found: self.terminal.time().as_f64(),
            });
        }
        Ok(())
    }
}

fn check_weight<S: Scalar>(w: S) -> Result<()> {
    if !w.is_finite() || w < S::zero() {
        return Err(Error::InvalidArgument(format!(
            "atom weights must be finite and nonnegative, got {w}"
        )));
    }
    Ok(())
}

/// `<test, mu> = sum_i w_i test(t_i, x_i, u_i)`.
pub fn pair<S: Scalar>(
    test: impl Fn(S, &[S], &[S]) -> S,
    measure: &OccupationMeasure<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for (i, a) in measure.atoms.iter().enumerate() {
        if a.weight == S::zero() {
            continue;
        }
        let v = test(a.t, &a.x, &a.u);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("test value at occupation atom {i}")));
        }
        acc = acc + a.weight * v;
    }
    Ok(acc)
}

/// `(L_f v)(t,x,u) = dv/dt + grad_x v . f(t,x,u)`.
pub fn apply_transport<S: Scalar, F: SmoothField<S> + ?Sized>(
    v: &F,
    problem: &ControlProblem<S>,
    t: S,
    x: &[S],
    u: &[S],
) -> Result<S> {
    let jet = v.jet(t, x);
    transport_of_jet(&jet, problem, t, x, u)
}

pub(crate) fn transport_of_jet<S: Scalar>(
    jet: &Jet<S>,
    problem: &ControlProblem<S>,
    t: S,
    x: &[S],
    u: &[S],
) -> Result<S> {
    if !jet.dt.is_finite() || !all_finite(&jet.grad) {
        return Err(Error::NonFinite(format!("field gradient at t = {t}")));
    }
    let f = problem.dynamics(t, x, u);
    Ok(jet.dt + dot(&jet.grad, &f))
}

/// `<L_f v, mu>`.
pub fn pair_transport<S: Scalar, F: SmoothField<S> + ?Sized>(
    v: &F,
    problem: &ControlProblem<S>,
    measure: &OccupationMeasure<S>,
) -> Result<S> {
    let mut acc = S::zero();
    for a in measure.atoms() {
        if a.weight == S::zero() {
            continue;
        }
        acc = acc + a.weight * apply_transport(v, problem, a.t, &a.x, &a.u)?;
    }
    Ok(acc)
}

/// Weak Liouville residual `R(v) = <v, mu_T - mu_0> - <L_f v, mu>`.
pub fn liouville_residual<S: Scalar, F: SmoothField<S> + ?Sized>(
    pair: &PrimalPair<S>,
    mu0: &BoundaryMeasure<S>,
    v: &F,
    problem: &ControlProblem<S>,
) -> Result<S> {
    if mu0.time() != problem.t0() {
        return Err(Error::TimeMismatch {
            expected: problem.t0().as_f64(),
            found: mu0.time().as_f64(),
        });
    }
    pair.check_horizon(problem)?;
    let terminal = pair.terminal.pair_field(v)?;
    let initial = mu0.pair_field(v)?;
    let transport = pair_transport(v, problem, &pair.occupation)?;
    Ok(terminal - initial - transport)
}

/// Realized Bolza cost `J = <l, mu> + <g, mu_T>`.
pub fn realized_cost<S: Scalar>(pair: &PrimalPair<S>, problem: &ControlProblem<S>) -> Result<S> {
    let running = self::pair(|t, x, u| problem.running_cost(t, x, u), &pair.occupation)?;
    let terminal = pair.terminal.pair(|x| problem.terminal_cost(x))?;
    Ok(running + terminal)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport<S> {
    pub occupation_mass: S,
    pub terminal_mass: S,
    pub expected_occupation_mass: S,
    pub expected_terminal_mass: S,
    pub occupation_deviation: S,
    pub terminal_deviation: S,
}

/// Actual vs. expected masses: `mu(Z) = (T - t0) mu_0(X)`, `mu_T(X) = mu_0(X)`.
pub fn mass_report<S: Scalar>(pair: &PrimalPair<S>, mu0: &BoundaryMeasure<S>) -> MassReport<S> {
    let horizon = pair.terminal.time() - mu0.time();
    let expected_occupation_mass = horizon * mu0.total_mass();
    let expected_terminal_mass = mu0.total_mass();
    let occupation_mass = pair.occupation.total_mass();
    let terminal_mass = pair.terminal.total_mass();
    MassReport {
        occupation_mass,
        terminal_mass,
        expected_occupation_mass,
        expected_terminal_mass,
        occupation_deviation: (occupation_mass - expected_occupation_mass).abs(),
        terminal_deviation: (terminal_mass - expected_terminal_mass).abs(),
    }
}
