//! Exhaustive grid search with FFT-accelerated translation axes.
//!
//! A grid is split into *slabs*: all translations sharing the remaining
//! parameters (one scale level in 1-D, one `(θ, a1, a2)` triple in 2-D).
//! Inside a slab, `⟨u, r_b⟩` is a cross-correlation of the residual with a
//! fixed kernel, and the in-bounds norms `‖r_b‖²` that implement boundary
//! renormalization depend only on the grid, so they are computed once per
//! plan. The score of translation `b` is `⟨u, r_b⟩² / ‖r_b‖²`.
//!
//! 1-D levels whose translation step is an integer use the FFT. Levels with
//! fractional steps (most τ-adic levels) have no common sample lattice and
//! are correlated directly over the atom's effective support, which costs
//! `O(N a₀ / b₀)` per level.

use std::collections::BTreeMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::affine1d::{hat, Affine1D, TauAdicGrid};
use crate::aniso2d::{kernel_value, mother_constant, Aniso2D, Grid2D};
use crate::dictionary::{Dictionary, ParamPoint};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::signal::{Shape, SignalBuffer};

/// Half-width, in scales, of the 1-D support used for direct correlation.
/// The Mexican Hat is below 1e-28 of its peak beyond it.
const SUPPORT_WIDTH: f64 = 12.0;

/// A discretization Λd that can be searched exhaustively.
pub trait SearchGrid: Sync {
    type Dict: Dictionary;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All grid points in enumeration order.
    fn points(&self) -> Vec<ParamPoint>;

    /// Grid points close to `p`, used by density-radius estimation.
    fn neighbors_of(&self, p: &ParamPoint) -> Vec<ParamPoint>;

    fn plan(&self, dict: &Self::Dict) -> Result<SearchPlan>;
}

impl SearchGrid for TauAdicGrid {
    type Dict = Affine1D;

    fn len(&self) -> usize {
        TauAdicGrid::len(self)
    }

    fn points(&self) -> Vec<ParamPoint> {
        self.enumerate()
    }

    fn neighbors_of(&self, p: &ParamPoint) -> Vec<ParamPoint> {
        self.neighbors(p)
    }

    fn plan(&self, dict: &Affine1D) -> Result<SearchPlan> {
        SearchPlan::line(dict, self)
    }
}

impl SearchGrid for Grid2D {
    type Dict = Aniso2D;

    fn len(&self) -> usize {
        Grid2D::len(self)
    }

    fn points(&self) -> Vec<ParamPoint> {
        self.enumerate()
    }

    fn neighbors_of(&self, p: &ParamPoint) -> Vec<ParamPoint> {
        self.neighbors(p)
    }

    fn plan(&self, dict: &Aniso2D) -> Result<SearchPlan> {
        SearchPlan::plane(dict, self)
    }
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    fn new(planner: &mut FftPlanner<f64>, len: usize) -> Self {
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

enum SlabKind {
    LineDirect {
        scale: f64,
        step: f64,
        n_lo: i64,
        c: f64,
    },
    LineFft {
        scale: f64,
        step: f64,
        stride: i64,
        n_lo: i64,
        size: usize,
        kernel: Vec<Complex64>,
    },
    Plane {
        theta: f64,
        a1: f64,
        a2: f64,
    },
}

struct Slab {
    offset: usize,
    count: usize,
    norms: Vec<f64>,
    kind: SlabKind,
}

/// Precomputed search state for one (dictionary, grid) pair.
pub struct SearchPlan {
    shape: Shape,
    slabs: Vec<Slab>,
    total: usize,
    line_ffts: BTreeMap<usize, FftPair>,
    plane_fft: Option<(usize, usize, FftPair, FftPair)>,
}

/// Scores of every grid atom, grouped by slab, plus the argmax.
#[derive(Clone, Debug)]
pub struct SearchResult {
    pub scores: Vec<Vec<f64>>,
    pub best_index: usize,
    pub best_score: f64,
}

impl SearchResult {
    /// First enumeration index whose score reaches `α² · best`.
    pub fn weak_index(&self, alpha: f64) -> usize {
        if alpha >= 1.0 {
            return self.best_index;
        }
        let threshold = alpha * alpha * self.best_score;
        let mut idx = 0;
        for slab in &self.scores {
            for &s in slab {
                if s >= threshold {
                    return idx;
                }
                idx += 1;
            }
        }
        self.best_index
    }

    pub fn score(&self, index: usize) -> f64 {
        let mut rest = index;
        for slab in &self.scores {
            if rest < slab.len() {
                return slab[rest];
            }
            rest -= slab.len();
        }
        f64::NAN
    }

    pub fn flat_scores(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }
}

impl SearchPlan {
    pub fn line(dict: &Affine1D, grid: &TauAdicGrid) -> Result<Self> {
        grid.validate_for(dict)?;
        let n = dict.len();
        let c = dict.constant();
        let mut planner = FftPlanner::new();
        let mut line_ffts = BTreeMap::new();
        let mut slabs = Vec::new();
        let mut offset = 0;
        for level in grid.levels() {
            if level.count == 0 {
                continue;
            }
            let a = level.scale;
            let positions: Vec<f64> = (0..level.count).map(|i| level.translation(i)).collect();
            let norms: Vec<f64> = positions
                .iter()
                .map(|&b| {
                    let (lo, hi) = support(b, a, n);
                    (lo..=hi).map(|t| dict.kernel(b, a, t as f64).powi(2)).sum()
                })
                .collect();
            let rounded = level.step.round();
            let integral = rounded >= 1.0 && (level.step - rounded).abs() <= 1e-9 * level.step;
            let kind = if integral {
                let stride = rounded as i64;
                let reach = (SUPPORT_WIDTH * a).ceil() as i64;
                let b_first = level.n_lo * stride;
                let b_last = b_first + (level.count as i64 - 1) * stride;
                // offsets x − b seen by the correlation, and the kernel support
                let span_lo = -b_last;
                let span_hi = (n as i64 - 1) - b_first;
                let d = reach.min(span_hi.max(-span_lo));
                let size = ((span_hi - span_lo + 1) as usize + d as usize + 1)
                    .max((b_last - b_first + 1) as usize)
                    .next_power_of_two();
                let pair = line_ffts
                    .entry(size)
                    .or_insert_with(|| FftPair::new(&mut planner, size))
                    .clone();
                let mut kernel = vec![Complex64::new(0.0, 0.0); size];
                for off in -d..=d {
                    let idx = off.rem_euclid(size as i64) as usize;
                    kernel[idx].re = c * hat(off as f64 / a).0 / a.sqrt();
                }
                pair.forward.process(&mut kernel);
                SlabKind::LineFft {
                    scale: a,
                    step: level.step,
                    stride,
                    n_lo: level.n_lo,
                    size,
                    kernel,
                }
            } else {
                SlabKind::LineDirect {
                    scale: a,
                    step: level.step,
                    n_lo: level.n_lo,
                    c,
                }
            };
            slabs.push(Slab {
                offset,
                count: level.count,
                norms,
                kind,
            });
            offset += level.count;
        }
        if offset == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(Self {
            shape: dict.shape(),
            slabs,
            total: offset,
            line_ffts,
            plane_fft: None,
        })
    }

    pub fn plane(dict: &Aniso2D, grid: &Grid2D) -> Result<Self> {
        grid.validate()?;
        let (nx, ny) = dict.dims();
        if (grid.nx, grid.ny) != (nx, ny) {
            return Err(Error::Config(format!(
                "grid {}x{} does not match dictionary {nx}x{ny}",
                grid.nx, grid.ny
            )));
        }
        let (lo, hi) = dict.scale_range();
        if grid.scales().iter().any(|&a| a < lo || a > hi) {
            return Err(Error::Config("grid scales outside dictionary range".into()));
        }
        let mx = (2 * nx - 1).next_power_of_two();
        let my = (2 * ny - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fx = FftPair::new(&mut planner, mx);
        let fy = FftPair::new(&mut planner, my);
        let npix = nx * ny;
        let slabs = grid
            .slabs()
            .into_iter()
            .enumerate()
            .map(|(s, (theta, a1, a2))| Slab {
                offset: s * npix,
                count: npix,
                norms: plane_norms(nx, ny, theta, a1, a2),
                kind: SlabKind::Plane { theta, a1, a2 },
            })
            .collect();
        Ok(Self {
            shape: dict.shape(),
            slabs,
            total: grid.len(),
            line_ffts: BTreeMap::new(),
            plane_fft: Some((mx, my, fx, fy)),
        })
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn slab_count(&self) -> usize {
        self.slabs.len()
    }

    /// Number of slabs scored through the FFT.
    pub fn fft_slab_count(&self) -> usize {
        self.slabs
            .iter()
            .filter(|s| !matches!(s.kind, SlabKind::LineDirect { .. }))
            .count()
    }

    pub fn point(&self, index: usize) -> ParamPoint {
        let slab = self
            .slabs
            .iter()
            .rev()
            .find(|s| s.offset <= index)
            .expect("index within plan");
        let i = index - slab.offset;
        match slab.kind {
            SlabKind::LineDirect { scale, step, n_lo, .. } => {
                ParamPoint(vec![(n_lo + i as i64) as f64 * step, scale])
            }
            SlabKind::LineFft { scale, step, n_lo, .. } => {
                ParamPoint(vec![(n_lo + i as i64) as f64 * step, scale])
            }
            SlabKind::Plane { theta, a1, a2 } => {
                let [nx, _] = self.shape.dims();
                ParamPoint(vec![(i % nx) as f64, (i / nx) as f64, theta, a1, a2])
            }
        }
    }

    /// Scores every atom of the grid against `residual`.
    pub fn full_search(&self, residual: &SignalBuffer, exec: Execution) -> Result<SearchResult> {
        if residual.shape() != self.shape {
            return Err(Error::ShapeMismatch {
                left: residual.shape(),
                right: self.shape,
            });
        }
        let spectra = self.residual_spectra(residual);
        let scores = exec.map(self.slabs.len(), |s| self.slab_scores(&self.slabs[s], residual, &spectra));
        let mut best_index = 0;
        let mut best_score = f64::NEG_INFINITY;
        let mut idx = 0;
        for slab in &scores {
            for &v in slab {
                if v > best_score {
                    best_score = v;
                    best_index = idx;
                }
                idx += 1;
            }
        }
        Ok(SearchResult {
            scores,
            best_index,
            best_score: best_score.max(0.0),
        })
    }

    fn residual_spectra(&self, residual: &SignalBuffer) -> Spectra {
        let u = residual.samples();
        let mut line = BTreeMap::new();
        for (&size, pair) in &self.line_ffts {
            let mut buf = vec![Complex64::new(0.0, 0.0); size];
            for (slot, &v) in buf.iter_mut().zip(u) {
                slot.re = v;
            }
            pair.forward.process(&mut buf);
            line.insert(size, buf);
        }
        let plane = self.plane_fft.as_ref().map(|(mx, my, fx, fy)| {
            let [nx, ny] = self.shape.dims();
            let mut buf = vec![Complex64::new(0.0, 0.0); mx * my];
            for y in 0..ny {
                for x in 0..nx {
                    buf[y * mx + x].re = u[y * nx + x];
                }
            }
            fft2(&mut buf, *mx, *my, &fx.forward, &fy.forward);
            buf
        });
        Spectra { line, plane }
    }

    fn slab_scores(&self, slab: &Slab, residual: &SignalBuffer, spectra: &Spectra) -> Vec<f64> {
        let u = residual.samples();
        let corr: Vec<f64> = match &slab.kind {
            SlabKind::LineDirect { scale, step, n_lo, c } => {
                let n = u.len();
                let a = *scale;
                let s = c / a.sqrt();
                (0..slab.count)
                    .map(|i| {
                        let b = (n_lo + i as i64) as f64 * step;
                        let (lo, hi) = support(b, a, n);
                        (lo..=hi).map(|t| u[t] * s * hat((t as f64 - b) / a).0).sum()
                    })
                    .collect()
            }
            SlabKind::LineFft {
                stride,
                n_lo,
                size,
                kernel,
                ..
            } => {
                let pair = &self.line_ffts[size];
                let spec = &spectra.line[size];
                let mut buf: Vec<Complex64> = spec.iter().zip(kernel).map(|(x, k)| x * k.conj()).collect();
                pair.inverse.process(&mut buf);
                let inv = 1.0 / *size as f64;
                (0..slab.count)
                    .map(|i| {
                        let b = (n_lo + i as i64) * stride;
                        buf[b.rem_euclid(*size as i64) as usize].re * inv
                    })
                    .collect()
            }
            SlabKind::Plane { theta, a1, a2 } => {
                let (mx, my, fx, fy) = self.plane_fft.as_ref().expect("plane plan");
                let [nx, ny] = self.shape.dims();
                let mut kernel = plane_kernel(nx, ny, *mx, *my, *theta, *a1, *a2);
                fft2(&mut kernel, *mx, *my, &fx.forward, &fy.forward);
                let spec = spectra.plane.as_ref().expect("plane spectrum");
                for (k, x) in kernel.iter_mut().zip(spec) {
                    *k = x * k.conj();
                }
                fft2(&mut kernel, *mx, *my, &fx.inverse, &fy.inverse);
                let inv = 1.0 / (mx * my) as f64;
                let mut out = Vec::with_capacity(nx * ny);
                for y in 0..ny {
                    for x in 0..nx {
                        out.push(kernel[y * mx + x].re * inv);
                    }
                }
                out
            }
        };
        corr.iter()
            .zip(&slab.norms)
            .map(|(&c, &n2)| if n2 > 0.0 { c * c / n2 } else { 0.0 })
            .collect()
    }
}

struct Spectra {
    line: BTreeMap<usize, Vec<Complex64>>,
    plane: Option<Vec<Complex64>>,
}

/// Samples of `[0, n)` within the effective support of the atom at `(b, a)`.
fn support(b: f64, a: f64, n: usize) -> (usize, usize) {
    let reach = SUPPORT_WIDTH * a;
    let lo = (b - reach).ceil().max(0.0) as usize;
    let hi = ((b + reach).floor().min((n - 1) as f64)).max(0.0) as usize;
    (lo.min(n - 1), hi)
}

fn plane_kernel(nx: usize, ny: usize, mx: usize, my: usize, theta: f64, a1: f64, a2: f64) -> Vec<Complex64> {
    let (sin, cos) = theta.sin_cos();
    let s = mother_constant() / (a1 * a2).sqrt();
    let mut k = vec![Complex64::new(0.0, 0.0); mx * my];
    for dy in -(ny as i64 - 1)..=(ny as i64 - 1) {
        let row = dy.rem_euclid(my as i64) as usize * mx;
        for dx in -(nx as i64 - 1)..=(nx as i64 - 1) {
            let col = dx.rem_euclid(mx as i64) as usize;
            k[row + col].re = kernel_value(dx as f64, dy as f64, cos, sin, a1, a2, s);
        }
    }
    k
}

/// `‖r_b‖²` over the image for every pixel position `b`, via a summed-area
/// table of the squared kernel.
fn plane_norms(nx: usize, ny: usize, theta: f64, a1: f64, a2: f64) -> Vec<f64> {
    let (sin, cos) = theta.sin_cos();
    let s = mother_constant() / (a1 * a2).sqrt();
    let (wx, wy) = (2 * nx - 1, 2 * ny - 1);
    // sat[(j) * (wx + 1) + i] = Σ h² over offsets with index < (i, j)
    let mut sat = vec![0.0f64; (wx + 1) * (wy + 1)];
    for j in 0..wy {
        let dy = j as f64 - (ny - 1) as f64;
        let mut row = 0.0;
        for i in 0..wx {
            let dx = i as f64 - (nx - 1) as f64;
            let h = kernel_value(dx, dy, cos, sin, a1, a2, s);
            row += h * h;
            sat[(j + 1) * (wx + 1) + i + 1] = sat[j * (wx + 1) + i + 1] + row;
        }
    }
    let at = |i: usize, j: usize| sat[j * (wx + 1) + i];
    let mut out = Vec::with_capacity(nx * ny);
    for by in 0..ny {
        for bx in 0..nx {
            // offsets dx ∈ [−bx, nx−1−bx] → indices [nx−1−bx, 2nx−2−bx]
            let (i0, i1) = (nx - 1 - bx, 2 * nx - 1 - bx);
            let (j0, j1) = (ny - 1 - by, 2 * ny - 1 - by);
            out.push(at(i1, j1) - at(i0, j1) - at(i1, j0) + at(i0, j0));
        }
    }
    out
}

fn fft2(buf: &mut [Complex64], mx: usize, my: usize, fx: &Arc<dyn Fft<f64>>, fy: &Arc<dyn Fft<f64>>) {
    fx.process(buf);
    let mut t = vec![Complex64::new(0.0, 0.0); mx * my];
    for y in 0..my {
        for x in 0..mx {
            t[x * my + y] = buf[y * mx + x];
        }
    }
    fy.process(&mut t);
    for x in 0..mx {
        for y in 0..my {
            buf[y * mx + x] = t[x * my + y];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(dict: &impl Dictionary, points: &[ParamPoint], u: &SignalBuffer) -> Vec<f64> {
        points
            .iter()
            .map(|p| dict.synthesize(p).unwrap().inner_product(u).unwrap().powi(2))
            .collect()
    }

    fn noise(shape: Shape, seed: u64) -> SignalBuffer {
        let mut state = seed;
        let v = (0..shape.len())
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        SignalBuffer::new(shape, v).unwrap()
    }

    #[test]
    fn line_plan_matches_naive_for_integer_and_fractional_levels() {
        let dict = Affine1D::new(96).unwrap();
        let grid = TauAdicGrid {
            b0: 1.0,
            a0: 1.0,
            tau: 2f64.sqrt(),
            jmin: 0,
            jmax: 6,
            n: 96,
        };
        let plan = SearchPlan::line(&dict, &grid).unwrap();
        assert!(plan.fft_slab_count() >= 3);
        assert!(plan.fft_slab_count() < plan.slab_count());
        let u = noise(Shape::D1(96), 3);
        let res = plan.full_search(&u, Execution::Sequential).unwrap();
        let pts = grid.enumerate();
        let oracle = naive(&dict, &pts, &u);
        let flat = res.flat_scores();
        assert_eq!(flat.len(), oracle.len());
        for (i, (a, b)) in flat.iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-10, "index {i}: {a} vs {b}");
            assert_eq!(plan.point(i), pts[i]);
        }
    }

    #[test]
    fn plane_plan_matches_naive() {
        let dict = Aniso2D::new(9, 7).unwrap();
        let grid = Grid2D { nx: 9, ny: 7, j: 2, k: 3 };
        let plan = SearchPlan::plane(&dict, &grid).unwrap();
        let u = noise(dict.shape(), 11);
        let res = plan.full_search(&u, Execution::Parallel).unwrap();
        let pts = grid.enumerate();
        let oracle = naive(&dict, &pts, &u);
        for (i, (a, b)) in res.flat_scores().iter().zip(&oracle).enumerate() {
            assert!((a - b).abs() < 1e-10, "index {i}: {a} vs {b}");
            assert_eq!(plan.point(i), pts[i]);
        }
    }

    #[test]
    fn zero_residual_picks_first_index() {
        let dict = Affine1D::new(32).unwrap();
        let grid = TauAdicGrid::covering(32, 1.0, 0.5).unwrap();
        let plan = SearchPlan::line(&dict, &grid).unwrap();
        let res = plan.full_search(&SignalBuffer::zeros(Shape::D1(32)), Execution::Parallel).unwrap();
        assert_eq!(res.best_index, 0);
        assert_eq!(res.best_score, 0.0);
    }

    #[test]
    fn on_grid_atom_is_found_exactly() {
        let dict = Affine1D::new(128).unwrap();
        let grid = TauAdicGrid::covering(128, 2.0, 0.5).unwrap();
        let plan = SearchPlan::line(&dict, &grid).unwrap();
        let pts = grid.enumerate();
        for k in [3usize, 40, pts.len() - 2] {
            let g = dict.synthesize(&pts[k]).unwrap();
            let res = plan.full_search(&g, Execution::Parallel).unwrap();
            assert_eq!(res.best_index, k);
            assert!((res.best_score - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn weak_index_respects_threshold() {
        let r = SearchResult {
            scores: vec![vec![0.1, 0.5], vec![0.9, 1.0]],
            best_index: 3,
            best_score: 1.0,
        };
        assert_eq!(r.weak_index(1.0), 3);
        assert_eq!(r.weak_index(0.7), 1);
        assert_eq!(r.weak_index(0.94), 2);
        assert_eq!(r.weak_index(0.95), 3);
        assert_eq!(r.score(2), 0.9);
    }
}
