//! Differentiable feature families `phi_j(t, x)`.

use std::fmt::Write as _;

use crate::error::{parse_err, Error, Result};
use crate::scalar::{parse_scalar, Scalar};

/// Feature values, time derivatives and state gradients at one point.
/// `grad` is row-major, `len() x dim_x`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureEval<S> {
    pub value: Vec<S>,
    pub dt: Vec<S>,
    pub grad: Vec<S>,
    pub dim_x: usize,
}

impl<S: Scalar> FeatureEval<S> {
    fn zeros(len: usize, dim_x: usize) -> Self {
        FeatureEval {
            value: vec![S::zero(); len],
            dt: vec![S::zero(); len],
            grad: vec![S::zero(); len * dim_x],
            dim_x,
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }
    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
    pub fn grad_row(&self, j: usize) -> &[S] {
        &self.grad[j * self.dim_x..(j + 1) * self.dim_x]
    }
}

/// Products of powers of the time coordinate and the state coordinates.
/// Each exponent row is `[a_t, a_1, ..., a_n]`. With `time_origin = Some(T)`
/// the time coordinate is `T - t` instead of `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonomialBasis<S> {
    pub dim_x: usize,
    pub exponents: Vec<Vec<u32>>,
    pub time_origin: Option<S>,
}

/// Gaussian bumps `t^a exp(-|x - c|^2 / (2 w^2))` for every center and every
/// `a <= time_degree`.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpBasis<S> {
    pub dim_x: usize,
    pub centers: Vec<Vec<S>>,
    pub width: S,
    pub time_degree: u32,
}

/// Sub-basis evaluated only on the coordinates `index_set`.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisBlock<S> {
    pub index_set: Vec<usize>,
    pub basis: FeatureBasis<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureBasis<S> {
    Monomial(MonomialBasis<S>),
    Bumps(BumpBasis<S>),
    /// Features of every part, in order, all over the same coordinates.
    Concat { dim_x: usize, parts: Vec<FeatureBasis<S>> },
    /// `v(t, x) = sum_k v_k(t, x_{S_k})`.
    Blockwise { dim_x: usize, blocks: Vec<BasisBlock<S>> },
}

/// All exponent vectors of length `len` with entries summing to `total`,
/// in reverse lexicographic order.
fn compositions(len: usize, total: u32) -> Vec<Vec<u32>> {
    if len == 0 {
        return if total == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(len - 1, total - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

impl<S: Scalar> FeatureBasis<S> {
    /// All monomials in `(t, x)` of total degree `<= degree`, graded, so the
    /// degree-`d` basis is a prefix of the degree-`d+1` basis.
    pub fn total_degree(dim_x: usize, degree: u32) -> Self {
        let exponents = (0..=degree).flat_map(|k| compositions(dim_x + 1, k)).collect();
        FeatureBasis::Monomial(MonomialBasis {
            dim_x,
            exponents,
            time_origin: None,
        })
    }

    /// `t^a x^e` with `a <= time_degree` and `|e| <= state_degree`, graded by
    /// state degree first.
    pub fn tensor(dim_x: usize, time_degree: u32, state_degree: u32) -> Self {
        let mut exponents = Vec::new();
        for k in 0..=state_degree {
            for e in compositions(dim_x, k) {
                for a in 0..=time_degree {
                    let mut row = vec![a];
                    row.extend(&e);
                    exponents.push(row);
                }
            }
        }
        FeatureBasis::Monomial(MonomialBasis {
            dim_x,
            exponents,
            time_origin: None,
        })
    }

    /// Time polynomials times `{1} u {x_i x_j : i <= j}`.
    pub fn quadratic_forms(dim_x: usize, time_degree: u32) -> Self {
        let mut exponents = Vec::new();
        for a in 0..=time_degree {
            exponents.push(std::iter::once(a).chain(std::iter::repeat_n(0, dim_x)).collect());
        }
        for i in 0..dim_x {
            for j in i..dim_x {
                for a in 0..=time_degree {
                    let mut row = vec![0u32; dim_x + 1];
                    row[0] = a;
                    row[1 + i] += 1;
                    row[1 + j] += 1;
                    exponents.push(row);
                }
            }
        }
        FeatureBasis::Monomial(MonomialBasis {
            dim_x,
            exponents,
            time_origin: None,
        })
    }

    /// Monomial basis with the time coordinate replaced by `origin - t`.
    pub fn with_time_origin(self, origin: S) -> Self {
        match self {
            FeatureBasis::Monomial(m) => FeatureBasis::Monomial(MonomialBasis {
                time_origin: Some(origin),
                ..m
            }),
            other => other,
        }
    }

    pub fn monomials(dim_x: usize, exponents: Vec<Vec<u32>>, time_origin: Option<S>) -> Result<Self> {
        if let Some(row) = exponents.iter().find(|r| r.len() != dim_x + 1) {
            return Err(Error::LengthMismatch {
                what: "exponent row",
                expected: dim_x + 1,
                found: row.len(),
            });
        }
        Ok(FeatureBasis::Monomial(MonomialBasis {
            dim_x,
            exponents,
            time_origin,
        }))
    }

    pub fn bumps(dim_x: usize, centers: Vec<Vec<S>>, width: S, time_degree: u32) -> Result<Self> {
        if !(width > S::zero()) || !width.is_finite() {
            return Err(Error::InvalidArgument(format!("bump width must be positive, got {width}")));
        }
        if let Some(c) = centers.iter().find(|c| c.len() != dim_x) {
            return Err(Error::LengthMismatch {
                what: "bump center",
                expected: dim_x,
                found: c.len(),
            });
        }
        Ok(FeatureBasis::Bumps(BumpBasis {
            dim_x,
            centers,
            width,
            time_degree,
        }))
    }

    /// Bumps on a uniform grid with `per_axis` centers per coordinate and
    /// width equal to the grid spacing times `width_factor`.
    pub fn bump_grid(lo: &[S], hi: &[S], per_axis: usize, width_factor: S, time_degree: u32) -> Result<Self> {
        if per_axis == 0 {
            return Err(Error::InvalidArgument("bump grid needs at least one center per axis".into()));
        }
        let dim = lo.len();
        let axis = |i: usize, k: usize| -> S {
            if per_axis == 1 {
                S::lit(0.5) * (lo[i] + hi[i])
            } else {
                lo[i] + (hi[i] - lo[i]) * S::from_usize_lossy(k) / S::from_usize_lossy(per_axis - 1)
            }
        };
        let mut centers: Vec<Vec<S>> = vec![vec![]];
        for i in 0..dim {
            centers = centers
                .into_iter()
                .flat_map(|c| {
                    (0..per_axis).map(move |k| {
                        let mut c = c.clone();
                        c.push(axis(i, k));
                        c
                    })
                })
                .collect();
        }
        let spacing = (0..dim)
            .map(|i| (hi[i] - lo[i]) / S::from_usize_lossy(per_axis.max(2) - 1))
            .fold(S::zero(), |a, b| a.max(b));
        Self::bumps(dim, centers, spacing * width_factor, time_degree)
    }

    pub fn concat(parts: Vec<FeatureBasis<S>>) -> Result<Self> {
        let dim_x = parts.first().map_or(0, |p| p.dim_x());
        if let Some(p) = parts.iter().find(|p| p.dim_x() != dim_x) {
            return Err(Error::LengthMismatch {
                what: "concatenated basis dimension",
                expected: dim_x,
                found: p.dim_x(),
            });
        }
        Ok(FeatureBasis::Concat { dim_x, parts })
    }

    pub fn blockwise(dim_x: usize, blocks: Vec<BasisBlock<S>>) -> Result<Self> {
        for b in &blocks {
            if let Some(&index) = b.index_set.iter().find(|&&i| i >= dim_x) {
                return Err(Error::IndexOutOfRange { index, dim: dim_x });
            }
            if b.basis.dim_x() != b.index_set.len() {
                return Err(Error::LengthMismatch {
                    what: "block basis dimension",
                    expected: b.index_set.len(),
                    found: b.basis.dim_x(),
                });
            }
        }
        Ok(FeatureBasis::Blockwise { dim_x, blocks })
    }

    pub fn dim_x(&self) -> usize {
        match self {
            FeatureBasis::Monomial(m) => m.dim_x,
            FeatureBasis::Bumps(b) => b.dim_x,
            FeatureBasis::Concat { dim_x, .. } | FeatureBasis::Blockwise { dim_x, .. } => *dim_x,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FeatureBasis::Monomial(m) => m.exponents.len(),
            FeatureBasis::Bumps(b) => b.centers.len() * (b.time_degree as usize + 1),
            FeatureBasis::Concat { parts, .. } => parts.iter().map(|p| p.len()).sum(),
            FeatureBasis::Blockwise { blocks, .. } => blocks.iter().map(|b| b.basis.len()).sum(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index range of block `k`'s coefficients inside a blockwise basis.
    pub fn block_range(&self, k: usize) -> Option<std::ops::Range<usize>> {
        let FeatureBasis::Blockwise { blocks, .. } = self else {
            return None;
        };
        let start: usize = blocks.iter().take(k).map(|b| b.basis.len()).sum();
        blocks.get(k).map(|b| start..start + b.basis.len())
    }

    /// Short human-readable summary.
    pub fn summary(&self) -> String {
        match self {
            FeatureBasis::Monomial(m) => {
                let deg = m.exponents.iter().map(|e| e.iter().sum::<u32>()).max().unwrap_or(0);
                format!("monomial(n={},p={},deg={})", m.dim_x, m.exponents.len(), deg)
            }
            FeatureBasis::Bumps(b) => format!(
                "bumps(n={},centers={},width={},tdeg={})",
                b.dim_x,
                b.centers.len(),
                b.width,
                b.time_degree
            ),
            FeatureBasis::Concat { parts, .. } => {
                let inner: Vec<String> = parts.iter().map(|p| p.summary()).collect();
                format!("concat[{}]", inner.join(","))
            }
            FeatureBasis::Blockwise { blocks, .. } => {
                let inner: Vec<String> = blocks
                    .iter()
                    .map(|b| format!("{:?}:{}", b.index_set, b.basis.summary()))
                    .collect();
                format!("blockwise[{}]", inner.join(","))
            }
        }
    }

    pub fn eval(&self, t: S, x: &[S]) -> FeatureEval<S> {
        match self {
            FeatureBasis::Monomial(m) => eval_monomials(m, t, x),
            FeatureBasis::Bumps(b) => eval_bumps(b, t, x),
            FeatureBasis::Concat { dim_x, parts } => {
                let mut out = FeatureEval::zeros(0, *dim_x);
                for p in parts {
                    let e = p.eval(t, x);
                    out.value.extend(e.value);
                    out.dt.extend(e.dt);
                    out.grad.extend(e.grad);
                }
                out
            }
            FeatureBasis::Blockwise { dim_x, blocks } => {
                let mut out = FeatureEval::zeros(self.len(), *dim_x);
                let mut offset = 0;
                for b in blocks {
                    let sub: Vec<S> = b.index_set.iter().map(|&i| x[i]).collect();
                    let e = b.basis.eval(t, &sub);
                    for j in 0..e.len() {
                        out.value[offset + j] = e.value[j];
                        out.dt[offset + j] = e.dt[j];
                        let row = e.grad_row(j);
                        for (local, &global) in b.index_set.iter().enumerate() {
                            out.grad[(offset + j) * dim_x + global] = row[local];
                        }
                    }
                    offset += e.len();
                }
                out
            }
        }
    }

    /// Feature values only.
    pub fn values(&self, t: S, x: &[S]) -> Vec<S> {
        self.eval(t, x).value
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.write_text(&mut s);
        s
    }

    fn write_text(&self, out: &mut String) {
        match self {
            FeatureBasis::Monomial(m) => {
                let origin = m.time_origin.map_or("none".to_string(), |o| o.to_string());
                let _ = writeln!(out, "monomial {} {} {}", m.dim_x, origin, m.exponents.len());
                for e in &m.exponents {
                    let row: Vec<String> = e.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(out, "{}", row.join(" "));
                }
            }
            FeatureBasis::Bumps(b) => {
                let _ = writeln!(out, "bumps {} {} {} {}", b.dim_x, b.width, b.time_degree, b.centers.len());
                for c in &b.centers {
                    let row: Vec<String> = c.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(out, "{}", row.join(" "));
                }
            }
            FeatureBasis::Concat { dim_x, parts } => {
                let _ = writeln!(out, "concat {} {}", dim_x, parts.len());
                for p in parts {
                    p.write_text(out);
                }
            }
            FeatureBasis::Blockwise { dim_x, blocks } => {
                let _ = writeln!(out, "blockwise {} {}", dim_x, blocks.len());
                for b in blocks {
                    let idx: Vec<String> = b.index_set.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(out, "block {}", idx.join(","));
                    b.basis.write_text(out);
                }
            }
        }
    }

    /// Parses the format written by [`FeatureBasis::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = TextLines::new(text, 0);
        let basis = Self::parse(&mut lines)?;
        if let Some((n, l)) = lines.next() {
            return Err(parse_err(n, format!("unexpected trailing line `{l}`")));
        }
        Ok(basis)
    }

    pub(crate) fn parse(lines: &mut TextLines<'_>) -> Result<Self> {
        let (n, header) = lines.expect("basis header")?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        let num = |i: usize| -> Result<usize> {
            tok.get(i)
                .ok_or_else(|| parse_err(n, "missing field"))?
                .parse::<usize>()
                .map_err(|e| parse_err(n, e.to_string()))
        };
        match tok.first().copied() {
            Some("monomial") => {
                let dim_x = num(1)?;
                let origin = match tok.get(2).copied() {
                    Some("none") => None,
                    Some(v) => Some(parse_scalar::<S>(v).map_err(|e| parse_err(n, e))?),
                    None => return Err(parse_err(n, "missing time origin")),
                };
                let count = num(3)?;
                let mut exponents = Vec::with_capacity(count);
                for _ in 0..count {
                    let (m, l) = lines.expect("exponent row")?;
                    let row = l
                        .split_whitespace()
                        .map(|v| v.parse::<u32>().map_err(|e| parse_err(m, e.to_string())))
                        .collect::<Result<Vec<_>>>()?;
                    exponents.push(row);
                }
                Self::monomials(dim_x, exponents, origin)
            }
            Some("bumps") => {
                let dim_x = num(1)?;
                let width = parse_scalar::<S>(tok.get(2).copied().unwrap_or("")).map_err(|e| parse_err(n, e))?;
                let time_degree = num(3)? as u32;
                let count = num(4)?;
                let mut centers = Vec::with_capacity(count);
                for _ in 0..count {
                    let (m, l) = lines.expect("bump center")?;
                    let row = l
                        .split_whitespace()
                        .map(|v| parse_scalar::<S>(v).map_err(|e| parse_err(m, e)))
                        .collect::<Result<Vec<_>>>()?;
                    centers.push(row);
                }
                Self::bumps(dim_x, centers, width, time_degree)
            }
            Some("concat") => {
                let dim_x = num(1)?;
                let count = num(2)?;
                let parts = (0..count).map(|_| Self::parse(lines)).collect::<Result<Vec<_>>>()?;
                if parts.iter().any(|p| p.dim_x() != dim_x) {
                    return Err(parse_err(n, "concat part dimension mismatch"));
                }
                Ok(FeatureBasis::Concat { dim_x, parts })
            }
            Some("blockwise") => {
                let dim_x = num(1)?;
                let count = num(2)?;
                let mut blocks = Vec::with_capacity(count);
                for _ in 0..count {
                    let (m, l) = lines.expect("block header")?;
                    let rest = l
                        .strip_prefix("block ")
                        .ok_or_else(|| parse_err(m, "expected `block <indices>`"))?;
                    let index_set = rest
                        .split(',')
                        .map(|v| v.trim().parse::<usize>().map_err(|e| parse_err(m, e.to_string())))
                        .collect::<Result<Vec<_>>>()?;
                    let basis = Self::parse(lines)?;
                    blocks.push(BasisBlock { index_set, basis });
                }
                Self::blockwise(dim_x, blocks)
            }
            _ => Err(parse_err(n, format!("unknown basis kind in `{header}`"))),
        }
    }
}

/// Non-empty, non-comment lines with their 1-based line numbers.
pub(crate) struct TextLines<'a> {
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> TextLines<'a> {
    pub(crate) fn new(text: &'a str, first_line: usize) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(move |(i, l)| (first_line + i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty() && !l.starts_with('#')),
        );
        TextLines { inner: it.peekable() }
    }

    pub(crate) fn expect(&mut self, what: &str) -> Result<(usize, &'a str)> {
        self.inner
            .next()
            .ok_or_else(|| parse_err(0, format!("unexpected end of input, expected {what}")))
    }
}

impl<'a> Iterator for TextLines<'a> {
    type Item = (usize, &'a str);
    fn next(&mut self) -> Option<Self::Item> {
        self.inner.next()
    }
}

fn powers<S: Scalar>(v: S, max: usize) -> Vec<S> {
    let mut p = Vec::with_capacity(max + 1);
    let mut acc = S::one();
    for _ in 0..=max {
        p.push(acc);
        acc = acc * v;
    }
    p
}

fn eval_monomials<S: Scalar>(m: &MonomialBasis<S>, t: S, x: &[S]) -> FeatureEval<S> {
    let n = m.dim_x;
    let max = m.exponents.iter().flatten().copied().max().unwrap_or(0) as usize;
    let (tc, dsdt) = match m.time_origin {
        Some(o) => (o - t, -S::one()),
        None => (t, S::one()),
    };
    let tp = powers(tc, max);
    let xp: Vec<Vec<S>> = x.iter().map(|&v| powers(v, max)).collect();
    let mut out = FeatureEval::zeros(m.exponents.len(), n);
    for (j, e) in m.exponents.iter().enumerate() {
        let a = e[0] as usize;
        let mut prod_x = S::one();
        for i in 0..n {
            prod_x = prod_x * xp[i][e[i + 1] as usize];
        }
        out.value[j] = tp[a] * prod_x;
        if a > 0 {
            out.dt[j] = dsdt * S::from_usize_lossy(a) * tp[a - 1] * prod_x;
        }
        for i in 0..n {
            let ei = e[i + 1] as usize;
            if ei == 0 {
                continue;
            }
            let mut g = tp[a] * S::from_usize_lossy(ei) * xp[i][ei - 1];
            for k in 0..n {
                if k != i {
                    g = g * xp[k][e[k + 1] as usize];
                }
            }
            out.grad[j * n + i] = g;
        }
    }
    out
}

fn eval_bumps<S: Scalar>(b: &BumpBasis<S>, t: S, x: &[S]) -> FeatureEval<S> {
    let n = b.dim_x;
    let td = b.time_degree as usize;
    let tp = powers(t, td);
    let inv = S::one() / (b.width * b.width);
    let half = S::lit(0.5);
    let mut out = FeatureEval::zeros(b.centers.len() * (td + 1), n);
    for (c_idx, c) in b.centers.iter().enumerate() {
        let mut r2 = S::zero();
        for i in 0..n {
            let d = x[i] - c[i];
            r2 = r2 + d * d;
        }
        let g = (-half * r2 * inv).exp();
        for a in 0..=td {
            let j = c_idx * (td + 1) + a;
            out.value[j] = tp[a] * g;
            if a > 0 {
                out.dt[j] = S::from_usize_lossy(a) * tp[a - 1] * g;
            }
            for i in 0..n {
                out.grad[j * n + i] = -tp[a] * g * (x[i] - c[i]) * inv;
            }
        }
    }
    out
}
