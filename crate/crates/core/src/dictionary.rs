//! The parametric dictionary abstraction.
//!
//! A concrete dictionary only evaluates the *raw* (not yet normalized) atom
//! `r_λ` on the sample grid together with its analytic first and second
//! parameter derivatives. Boundary renormalization `g_λ = r_λ / ‖r_λ‖` and its
//! derivatives are derived here once, by the quotient rule, so that
//! `⟨∂ᵢg_λ, g_λ⟩ = 0` and `⟨∂ᵢⱼg_λ, g_λ⟩ = −G_ij` hold exactly on the discrete
//! grid, including for atoms truncated by the buffer boundary.

use std::fmt;
use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{dot, Shape, SignalBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordKind {
    Translation,
    Scale,
    Angle,
}

impl CoordKind {
    /// Central-difference step for a coordinate of this kind at value `x`.
    pub fn fd_step(self, x: f64) -> f64 {
        match self {
            CoordKind::Translation => 1e-3,
            CoordKind::Scale => 1e-3 * x.abs(),
            CoordKind::Angle => 1e-3,
        }
    }
}

/// A point λ of the continuous parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint(pub Vec<f64>);

impl ParamPoint {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        ParamPoint(coords.into())
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `self + t·dir`, coordinate-wise.
    pub fn offset(&self, dir: &[f64], t: f64) -> ParamPoint {
        ParamPoint(self.0.iter().zip(dir).map(|(x, d)| x + t * d).collect())
    }
}

impl Index<usize> for ParamPoint {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum JetOrder {
    Value,
    First,
    Second,
}

/// Raw atom samples and analytic parameter derivatives.
///
/// `second[i][j]` is filled for all `i, j` (symmetric) when requested.
#[derive(Clone, Debug)]
pub struct RawJet {
    pub value: Vec<f64>,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<Vec<f64>>>,
}

/// The unit-norm atom and its derivatives as signal buffers.
#[derive(Clone, Debug)]
pub struct AtomJet {
    pub atom: SignalBuffer,
    pub first: Vec<SignalBuffer>,
    pub second: Vec<Vec<SignalBuffer>>,
}

pub trait Dictionary: Send + Sync {
    fn name(&self) -> &'static str;

    /// Shape of every synthesized atom.
    fn shape(&self) -> Shape;

    fn kinds(&self) -> &[CoordKind];

    fn dim(&self) -> usize {
        self.kinds().len()
    }

    /// Errors unless `p` has the right length and lies in the domain.
    fn check_domain(&self, p: &ParamPoint) -> Result<()>;

    /// Maps an arbitrary point back into the domain: scales and translations
    /// are clamped, angles wrapped.
    fn canonicalize(&self, p: &ParamPoint) -> ParamPoint;

    /// Raw samples and derivatives up to `order`. Callers have already
    /// checked the domain.
    fn raw_jet(&self, p: &ParamPoint, order: JetOrder) -> RawJet;

    fn synthesize(&self, p: &ParamPoint) -> Result<SignalBuffer> {
        Ok(self.jet(p, JetOrder::Value)?.atom)
    }

    fn partials(&self, p: &ParamPoint) -> Result<Vec<SignalBuffer>> {
        Ok(self.jet(p, JetOrder::First)?.first)
    }

    fn second_partials(&self, p: &ParamPoint) -> Result<Vec<Vec<SignalBuffer>>> {
        Ok(self.jet(p, JetOrder::Second)?.second)
    }

    /// Normalized atom and derivatives up to `order`.
    fn jet(&self, p: &ParamPoint, order: JetOrder) -> Result<AtomJet> {
        self.check_domain(p)?;
        normalize_jet(self.shape(), self.raw_jet(p, order), order)
            .ok_or_else(|| Error::Domain(format!("atom at {p} has no mass inside the buffer")))
    }
}

fn normalize_jet(shape: Shape, raw: RawJet, order: JetOrder) -> Option<AtomJet> {
    let n2 = dot(&raw.value, &raw.value);
    if !(n2 > 0.0 && n2.is_finite()) {
        return None;
    }
    let n = n2.sqrt();
    let inv = 1.0 / n;
    let g: Vec<f64> = raw.value.iter().map(|v| v * inv).collect();
    let mut jet = AtomJet {
        atom: SignalBuffer::from_parts(shape, g),
        first: Vec::new(),
        second: Vec::new(),
    };
    if order == JetOrder::Value {
        return Some(jet);
    }
    let g = jet.atom.samples();
    let p = raw.first.len();
    // ∂ᵢn = ⟨g, ∂ᵢr⟩
    let dn: Vec<f64> = raw.first.iter().map(|ri| dot(g, ri)).collect();
    let first: Vec<Vec<f64>> = raw
        .first
        .iter()
        .zip(&dn)
        .map(|(ri, &dni)| ri.iter().zip(g).map(|(r, gv)| (r - gv * dni) * inv).collect())
        .collect();
    if order == JetOrder::Second {
        let mut second = vec![Vec::<Vec<f64>>::with_capacity(p); p];
        for i in 0..p {
            for j in 0..p {
                if j < i {
                    let sym: Vec<f64> = second[j][i].clone();
                    second[i].push(sym);
                    continue;
                }
                let rij = &raw.second[i][j];
                let d2n = (dot(&raw.first[i], &raw.first[j]) + dot(&raw.value, rij)) * inv - dn[i] * dn[j] * inv;
                let v: Vec<f64> = (0..g.len())
                    .map(|t| (rij[t] - first[j][t] * dn[i] - first[i][t] * dn[j] - g[t] * d2n) * inv)
                    .collect();
                second[i].push(v);
            }
        }
        jet.second = second
            .into_iter()
            .map(|row| row.into_iter().map(|v| SignalBuffer::from_parts(shape, v)).collect())
            .collect();
    }
    jet.first = first.into_iter().map(|v| SignalBuffer::from_parts(shape, v)).collect();
    Some(jet)
}

/// Central finite-difference partials of the full synthesis pipeline. Needs
/// `λ ± h` inside the domain along every coordinate.
pub fn finite_difference_partials<D: Dictionary + ?Sized>(
    dict: &D,
    p: &ParamPoint,
) -> Result<Vec<SignalBuffer>> {
    dict.check_domain(p)?;
    let kinds = dict.kinds();
    (0..dict.dim())
        .map(|i| {
            let h = kinds[i].fd_step(p[i]);
            let (plus, minus) = shifted(p, i, h);
            let gp = dict.synthesize(&plus)?;
            let gm = dict.synthesize(&minus)?;
            let v = gp.samples().iter().zip(gm.samples()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            Ok(SignalBuffer::from_parts(dict.shape(), v))
        })
        .collect()
}

/// Central finite differences of the analytic first partials.
pub fn finite_difference_second_partials<D: Dictionary + ?Sized>(
    dict: &D,
    p: &ParamPoint,
) -> Result<Vec<Vec<SignalBuffer>>> {
    dict.check_domain(p)?;
    let kinds = dict.kinds();
    let dim = dict.dim();
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        let h = kinds[j].fd_step(p[j]);
        let (plus, minus) = shifted(p, j, h);
        let fp = dict.partials(&plus)?;
        let fm = dict.partials(&minus)?;
        let col: Vec<SignalBuffer> = fp
            .iter()
            .zip(&fm)
            .map(|(a, b)| {
                let v = a.samples().iter().zip(b.samples()).map(|(x, y)| (x - y) / (2.0 * h)).collect();
                SignalBuffer::from_parts(dict.shape(), v)
            })
            .collect();
        out.push(col);
    }
    // out[j][i] = ∂ⱼ(∂ᵢg); transpose to [i][j]
    Ok((0..dim).map(|i| (0..dim).map(|j| out[j][i].clone()).collect()).collect())
}

fn shifted(p: &ParamPoint, i: usize, h: f64) -> (ParamPoint, ParamPoint) {
    let mut plus = p.clone();
    let mut minus = p.clone();
    plus.0[i] += h;
    minus.0[i] -= h;
    (plus, minus)
}

pub(crate) fn check_len(p: &ParamPoint, dim: usize) -> Result<()> {
    if p.dim() != dim {
        return Err(Error::Domain(format!("expected {dim} coordinates, got {}", p.dim())));
    }
    if p.0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite coordinate in {p}")));
    }
    Ok(())
}

/// Relative maximum deviation `max|a − b| / max|b|`.
pub fn relative_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
