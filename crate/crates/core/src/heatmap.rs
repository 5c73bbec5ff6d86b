//! Value grids of a certificate on a two-coordinate slice, as CSV.

use std::fmt::Write as _;

use crate::certificates::Certificate;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceSpec<S> {
    pub t: S,
    /// Coordinates varied along the grid axes.
    pub axes: [usize; 2],
    pub lo: [S; 2],
    pub hi: [S; 2],
    pub points: [usize; 2],
    /// Full state vector supplying the coordinates that stay fixed.
    pub base: Vec<S>,
}

impl<S: Scalar> SliceSpec<S> {
    fn check(&self, dim_x: usize) -> Result<()> {
        if self.base.len() != dim_x {
            return Err(Error::LengthMismatch {
                what: "slice base state",
                expected: dim_x,
                found: self.base.len(),
            });
        }
        for &a in &self.axes {
            if a >= dim_x {
                return Err(Error::IndexOutOfRange { index: a, dim: dim_x });
            }
        }
        if self.axes[0] == self.axes[1] {
            return Err(Error::InvalidArgument("slice axes must differ".into()));
        }
        if self.points.iter().any(|&n| n < 2) || (0..2).any(|i| !(self.lo[i] < self.hi[i])) {
            return Err(Error::InvalidArgument("slice needs at least 2 points per axis on a nonempty range".into()));
        }
        Ok(())
    }

    fn coord(&self, axis: usize, i: usize) -> S {
        let n = self.points[axis];
        if i + 1 == n {
            return self.hi[axis];
        }
        self.lo[axis] + (self.hi[axis] - self.lo[axis]) * S::from_usize_lossy(i) / S::from_usize_lossy(n - 1)
    }
}

/// One grid value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell<S> {
    pub a: S,
    pub b: S,
    pub value: S,
}

/// Values of the full certificate (`block = None`) or of one block, row
/// major with the first axis outermost.
pub fn slice_values<S: Scalar>(cert: &Certificate<S>, spec: &SliceSpec<S>, block: Option<usize>) -> Result<Vec<Cell<S>>> {
    spec.check(cert.basis().dim_x())?;
    let mut out = Vec::with_capacity(spec.points[0] * spec.points[1]);
    let mut x = spec.base.clone();
    for i in 0..spec.points[0] {
        for j in 0..spec.points[1] {
            let (a, b) = (spec.coord(0, i), spec.coord(1, j));
            x[spec.axes[0]] = a;
            x[spec.axes[1]] = b;
            let value = match block {
                Some(k) => cert.block_value(k, spec.t, &x)?,
                None => cert.evaluate(spec.t, &x).value,
            };
            out.push(Cell { a, b, value });
        }
    }
    Ok(out)
}

pub fn to_csv<S: Scalar>(cells: &[Cell<S>], names: [&str; 2]) -> String {
    let mut s = format!("{},{},value\n", names[0], names[1]);
    for c in cells {
        let _ = writeln!(s, "{},{},{}", c.a, c.b, c.value);
    }
    s
}

pub fn from_csv<S: Scalar>(text: &str) -> Result<Vec<Cell<S>>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 3 fields, found {}", parts.len()),
            });
        }
        let p = |k: usize| crate::scalar::parse_scalar::<S>(parts[k].trim()).map_err(|m| Error::Parse { line: i + 1, message: m });
        out.push(Cell {
            a: p(0)?,
            b: p(1)?,
            value: p(2)?,
        });
    }
    Ok(out)
}

/// Location and size of the largest `|a - b|` over two grids on the same
/// points; the first maximum wins.
pub fn max_difference<S: Scalar>(a: &[Cell<S>], b: &[Cell<S>]) -> Result<Cell<S>> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::LengthMismatch {
            what: "heat map cells",
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut best = Cell {
        a: a[0].a,
        b: a[0].b,
        value: -S::one(),
    };
    for (p, q) in a.iter().zip(b) {
        if p.a != q.a || p.b != q.b {
            return Err(Error::InvalidArgument("heat maps use different grids".into()));
        }
        let d = (p.value - q.value).abs();
        if d > best.value {
            best = Cell { a: p.a, b: p.b, value: d };
        }
    }
    Ok(best)
}
