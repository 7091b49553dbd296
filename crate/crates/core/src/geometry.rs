//! Riemannian quantities of the atom manifold.
//!
//! `ρ̂_d` is a Monte-Carlo lower bound of the density radius: the supremum is
//! taken over a finite probe set, and each distance uses a straight segment
//! in parameter space (an upper bound on the geodesic distance).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affine1d::TauAdicGrid;
use crate::aniso2d::{wrap_angle, Grid2D};
use crate::dictionary::{CoordKind, Dictionary, JetOrder, ParamPoint};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pursuit::search::{SearchGrid, SearchPlan};
use crate::signal::{SignalBuffer, dot};

pub const MAX_CONDITION: f64 = 1e12;

/// `G_ij = ⟨∂ᵢg, ∂ⱼg⟩` at one point, with its inverse.
#[derive(Clone, Debug)]
pub struct MetricTensor {
    pub point: ParamPoint,
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    pub condition: f64,
}

impl MetricTensor {
    pub fn from_partials(point: ParamPoint, partials: &[SignalBuffer]) -> Result<Self> {
        let p = partials.len();
        let g = DMatrix::from_fn(p, p, |i, j| dot(partials[i].samples(), partials[j].samples()));
        Self::from_matrix(point, g)
    }

    pub fn from_matrix(point: ParamPoint, g: DMatrix<f64>) -> Result<Self> {
        let eig = SymmetricEigen::new(g.clone());
        let hi = eig.eigenvalues.max();
        let lo = eig.eigenvalues.min();
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateMetric { condition });
        }
        let g_inv = g
            .clone()
            .cholesky()
            .ok_or(Error::DegenerateMetric { condition })?
            .inverse();
        Ok(Self {
            point,
            g,
            g_inv,
            condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `ξᵀ G ξ`.
    pub fn quadratic(&self, xi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(xi);
        v.dot(&(&self.g * &v))
    }

    /// Raises an index: `𝒢ⁱʲ vⱼ`.
    pub fn raise(&self, covector: &[f64]) -> Vec<f64> {
        (&self.g_inv * DVector::from_column_slice(covector)).as_slice().to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        rows(&self.g)
    }
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn metric<D: Dictionary + ?Sized>(dict: &D, p: &ParamPoint) -> Result<MetricTensor> {
    let jet = dict.jet(p, JetOrder::First)?;
    MetricTensor::from_partials(p.clone(), &jet.first)
}

/// `Γᵏ_ij = 𝒢ᵏˡ ⟨∂ᵢⱼg, ∂ₗg⟩`, indexed `[k][i][j]`.
pub fn christoffel<D: Dictionary + ?Sized>(dict: &D, p: &ParamPoint) -> Result<Vec<Vec<Vec<f64>>>> {
    let jet = dict.jet(p, JetOrder::Second)?;
    let m = MetricTensor::from_partials(p.clone(), &jet.first)?;
    let dim = m.dim();
    let mut out = vec![vec![vec![0.0; dim]; dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            let lowered: Vec<f64> = (0..dim)
                .map(|l| dot(jet.second[i][j].samples(), jet.first[l].samples()))
                .collect();
            let raised = m.raise(&lowered);
            for k in 0..dim {
                out[k][i][j] = raised[k];
            }
        }
    }
    Ok(out)
}

/// `[⟨∂ᵢⱼg, ∂ₖₗg⟩ 𝒢ⁱᵏ 𝒢ʲˡ]^½` at one point.
pub fn condition_bracket<D: Dictionary + ?Sized>(dict: &D, p: &ParamPoint) -> Result<f64> {
    let jet = dict.jet(p, JetOrder::Second)?;
    let m = MetricTensor::from_partials(p.clone(), &jet.first)?;
    let dim = m.dim();
    let gi = &m.g_inv;
    let mut total = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let w = gi[(i, k)] * gi[(j, l)];
                    if w != 0.0 {
                        total += w * dot(jet.second[i][j].samples(), jet.second[k][l].samples());
                    }
                }
            }
        }
    }
    Ok(total.max(0.0).sqrt())
}

/// `K̂`: the largest bracket over `samples`.
pub fn condition_bound<D: Dictionary + ?Sized>(dict: &D, samples: &[ParamPoint], exec: Execution) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Config("condition_bound needs at least one sample".into()));
    }
    let values = exec.map(samples.len(), |i| condition_bracket(dict, &samples[i]));
    let mut best = f64::NEG_INFINITY;
    for v in values {
        best = best.max(v?);
    }
    Ok(best)
}

/// Coordinate difference `b − a`, taking the short way round for angles.
fn displacement(kinds: &[CoordKind], a: &ParamPoint, b: &ParamPoint) -> Vec<f64> {
    kinds
        .iter()
        .enumerate()
        .map(|(i, k)| {
            let d = b[i] - a[i];
            match k {
                CoordKind::Angle => {
                    let w = wrap_angle(d);
                    if w >= std::f64::consts::FRAC_PI_2 {
                        w - std::f64::consts::PI
                    } else {
                        w
                    }
                }
                _ => d,
            }
        })
        .collect()
}

/// Length of the straight parameter segment from `a` to `b`, by the midpoint
/// rule on `segments` pieces.
pub fn path_length<D: Dictionary + ?Sized>(dict: &D, a: &ParamPoint, b: &ParamPoint, segments: usize) -> Result<f64> {
    if segments == 0 {
        return Err(Error::Config("path_length needs at least one segment".into()));
    }
    dict.check_domain(a)?;
    dict.check_domain(b)?;
    let kinds = dict.kinds();
    let delta = displacement(kinds, a, b);
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(0.0);
    }
    let piece: Vec<f64> = delta.iter().map(|d| d / segments as f64).collect();
    let mut total = 0.0;
    for s in 0..segments {
        let mut mid = a.offset(&delta, (s as f64 + 0.5) / segments as f64);
        for (i, k) in kinds.iter().enumerate() {
            if *k == CoordKind::Angle {
                mid.0[i] = wrap_angle(mid.0[i]);
            }
        }
        let m = metric(dict, &mid)?;
        total += m.quadratic(&piece).max(0.0).sqrt();
    }
    Ok(total)
}

/// `max_probe min_neighbor path_length(probe, k)`.
pub fn density_radius<G: SearchGrid>(
    dict: &G::Dict,
    grid: &G,
    probes: &[ParamPoint],
    segments: usize,
    exec: Execution,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let per_probe = exec.map(probes.len(), |i| -> Result<f64> {
        let probe = &probes[i];
        let candidates = grid.neighbors_of(probe);
        if candidates.is_empty() {
            return Err(Error::Domain(format!("no grid point near probe {probe}")));
        }
        let mut best = f64::INFINITY;
        for k in &candidates {
            best = best.min(path_length(dict, probe, k, segments)?);
        }
        Ok(best)
    });
    let mut radius = 0.0f64;
    for r in per_probe {
        radius = radius.max(r?);
    }
    Ok(radius)
}

/// Probes `(b, a)` with `a` log-uniform over the grid's scales and `b`
/// uniform over the buffer.
pub fn affine_probes(grid: &TauAdicGrid, count: usize, seed: u64) -> Vec<ParamPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (grid.scale(grid.jmin).ln(), grid.scale(grid.jmax).ln());
    let last = (grid.n.max(1) - 1) as f64;
    (0..count)
        .map(|_| {
            let a = if hi > lo { rng.gen_range(lo..hi).exp() } else { lo.exp() };
            let b = rng.gen_range(0.0..=last);
            ParamPoint(vec![b, a])
        })
        .collect()
}

/// Probes `(x, y, θ, a1, a2)` with positions uniform over the image, `θ`
/// uniform over `[0, π)` and both scales log-uniform over the grid's range.
pub fn aniso_probes(grid: &Grid2D, count: usize, seed: u64) -> Vec<ParamPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales = grid.scales();
    let (lo, hi) = (scales[0].ln(), scales[scales.len() - 1].ln());
    let (xl, yl) = ((grid.nx.max(1) - 1) as f64, (grid.ny.max(1) - 1) as f64);
    let log_scale = |rng: &mut ChaCha8Rng| if hi > lo { rng.gen_range(lo..hi).exp() } else { lo.exp() };
    (0..count)
        .map(|_| {
            let x = rng.gen_range(0.0..=xl);
            let y = rng.gen_range(0.0..=yl);
            let theta = rng.gen_range(0.0..std::f64::consts::PI);
            let a1 = log_scale(&mut rng);
            let a2 = log_scale(&mut rng);
            ParamPoint(vec![x, y, theta, a1, a2])
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeaknessReport {
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
    pub rho_d: f64,
    pub alpha_prime: Option<f64>,
    pub alpha_dprime: Option<f64>,
    pub density_ok: bool,
}

/// `α′ = α(1 − ρ²(1+K)/β²)^½` and `α″ = α(1 − ½ρ²(1+K)/β²)^½`. A factor is
/// `None` when its radicand is negative.
pub fn weakness_factors(alpha: f64, beta: f64, k: f64, rho_d: f64) -> WeaknessReport {
    let q = rho_d * rho_d * (1.0 + k) / (beta * beta);
    let factor = |r: f64| if r >= 0.0 { Some(alpha * r.sqrt()) } else { None };
    WeaknessReport {
        alpha,
        beta,
        k,
        rho_d,
        alpha_prime: factor(1.0 - q),
        alpha_dprime: factor(1.0 - 0.5 * q),
        density_ok: rho_d < beta / (1.0 + k).sqrt(),
    }
}

/// Empirical stand-in for the greedy factor: the smallest `√S_best` over a
/// corpus of residuals, each normalized to unit norm.
pub fn greedy_factor_surrogate(plan: &SearchPlan, corpus: &[SignalBuffer], exec: Execution) -> Result<f64> {
    let mut beta = f64::INFINITY;
    for u in corpus {
        let n = u.norm();
        if n == 0.0 {
            continue;
        }
        let res = plan.full_search(&u.scaled(1.0 / n), exec)?;
        beta = beta.min(res.best_score.sqrt());
    }
    if beta.is_finite() {
        Ok(beta.min(1.0))
    } else {
        Err(Error::Config("greedy factor needs a nonzero residual".into()))
    }
}
