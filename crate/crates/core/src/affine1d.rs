//! Mexican Hat wavelets under translation and dilation, with τ-adic grids.

use serde::{Deserialize, Serialize};

use crate::dictionary::{check_len, CoordKind, Dictionary, JetOrder, ParamPoint, RawJet};
use crate::error::{Error, Result};
use crate::signal::Shape;

/// Translations are kept within this many scales of the buffer.
pub const MASS_WIDTH: f64 = 4.0;

const KINDS: [CoordKind; 2] = [CoordKind::Translation, CoordKind::Scale];

/// Analytic unit-norm constant `2 / (√3 π^¼)` of `(1 − t²) e^{−t²/2}`.
pub fn mexican_hat_constant_analytic() -> f64 {
    2.0 / (3f64.sqrt() * std::f64::consts::PI.powf(0.25))
}

/// Unit-norm constant computed by composite Simpson quadrature of
/// `∫ (1 − t²)² e^{−t²} dt` over `[−14, 14]`.
pub fn mexican_hat_constant() -> f64 {
    let (lo, hi, n) = (-14.0f64, 14.0f64, 28_000usize);
    let h = (hi - lo) / n as f64;
    let f = |t: f64| {
        let p = 1.0 - t * t;
        p * p * (-t * t).exp()
    };
    let mut acc = f(lo) + f(hi);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(lo + k as f64 * h);
    }
    (acc * h / 3.0).sqrt().recip()
}

/// Mother function and its first two derivatives, without the constant.
#[inline]
pub(crate) fn hat(x: f64) -> (f64, f64, f64) {
    let x2 = x * x;
    let e = (-0.5 * x2).exp();
    ((1.0 - x2) * e, (x2 * x - 3.0 * x) * e, (-x2 * x2 + 6.0 * x2 - 3.0) * e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affine1D {
    n: usize,
    a_min: f64,
    a_max: f64,
    c: f64,
}

impl Affine1D {
    /// Dictionary on `n` samples with scales in `[1, n/2]`.
    pub fn new(n: usize) -> Result<Self> {
        Self::with_scales(n, 1.0, n as f64 / 2.0)
    }

    pub fn with_scales(n: usize, a_min: f64, a_max: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("signal length {n} too short")));
        }
        if !(a_min > 0.0 && a_max >= a_min && a_max.is_finite()) {
            return Err(Error::Config(format!("bad scale range [{a_min}, {a_max}]")));
        }
        Ok(Self {
            n,
            a_min,
            a_max,
            c: mexican_hat_constant(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn scale_range(&self) -> (f64, f64) {
        (self.a_min, self.a_max)
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    /// Allowed translations at scale `a`.
    pub fn translation_range(&self, a: f64) -> (f64, f64) {
        (-MASS_WIDTH * a, (self.n - 1) as f64 + MASS_WIDTH * a)
    }

    /// Raw atom sample `a^{-1/2} c g((t − b)/a)`.
    #[inline]
    pub(crate) fn kernel(&self, b: f64, a: f64, t: f64) -> f64 {
        self.c * hat((t - b) / a).0 / a.sqrt()
    }
}

impl Dictionary for Affine1D {
    fn name(&self) -> &'static str {
        "affine1d"
    }

    fn shape(&self) -> Shape {
        Shape::D1(self.n)
    }

    fn kinds(&self) -> &[CoordKind] {
        &KINDS
    }

    fn check_domain(&self, p: &ParamPoint) -> Result<()> {
        check_len(p, 2)?;
        let (b, a) = (p[0], p[1]);
        if !(a >= self.a_min && a <= self.a_max) {
            return Err(Error::Domain(format!(
                "scale {a} outside [{}, {}]",
                self.a_min, self.a_max
            )));
        }
        let (lo, hi) = self.translation_range(a);
        if !(b >= lo && b <= hi) {
            return Err(Error::Domain(format!("translation {b} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    fn canonicalize(&self, p: &ParamPoint) -> ParamPoint {
        let a = p[1].clamp(self.a_min, self.a_max);
        let (lo, hi) = self.translation_range(a);
        ParamPoint(vec![p[0].clamp(lo, hi), a])
    }

    fn raw_jet(&self, p: &ParamPoint, order: JetOrder) -> RawJet {
        let (b, a) = (p[0], p[1]);
        let n = self.n;
        let s = self.c / a.sqrt();
        let mut value = Vec::with_capacity(n);
        let want1 = order >= JetOrder::First;
        let want2 = order >= JetOrder::Second;
        let (mut db, mut da) = (Vec::new(), Vec::new());
        let (mut dbb, mut dab, mut daa) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..n {
            let x = (t as f64 - b) / a;
            let (g, g1, g2) = hat(x);
            value.push(s * g);
            if want1 {
                db.push(-s * g1 / a);
                da.push(-s * (0.5 * g + x * g1) / a);
            }
            if want2 {
                let a2 = a * a;
                dbb.push(s * g2 / a2);
                dab.push(s * (1.5 * g1 + x * g2) / a2);
                daa.push(s * (0.75 * g + 3.0 * x * g1 + x * x * g2) / a2);
            }
        }
        let first = if want1 { vec![db, da] } else { Vec::new() };
        let second = if want2 {
            vec![vec![dbb, dab.clone()], vec![dab, daa]]
        } else {
            Vec::new()
        };
        RawJet { value, first, second }
    }
}

/// One scale level of a τ-adic grid: translations `n·step` for
/// `n ∈ [n_lo, n_lo + count)` at scale `scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Level {
    pub j: i32,
    pub scale: f64,
    pub step: f64,
    pub n_lo: i64,
    pub count: usize,
}

impl Level {
    pub fn translation(&self, i: usize) -> f64 {
        (self.n_lo + i as i64) as f64 * self.step
    }
}

/// `{(n b₀ τʲ, a₀ τʲ)}` restricted to translations whose atoms reach the
/// buffer: `|b − clamp(b, 0, N−1)| ≤ 4a`. Enumerated by ascending `j`, then
/// ascending `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauAdicGrid {
    pub b0: f64,
    pub a0: f64,
    pub tau: f64,
    pub jmin: i32,
    pub jmax: i32,
    #[serde(rename = "N")]
    pub n: usize,
}

impl TauAdicGrid {
    /// `a₀ = 1` grid whose scales cover `[1, N/4]`.
    pub fn covering(n: usize, b0: f64, log2_tau: f64) -> Result<Self> {
        if !(log2_tau > 0.0) {
            return Err(Error::Config(format!("log2(tau) must be positive, got {log2_tau}")));
        }
        let top = (n as f64 / 4.0).max(1.0).log2();
        let jmax = (top / log2_tau + 1e-9).floor() as i32;
        let grid = Self {
            b0,
            a0: 1.0,
            tau: log2_tau.exp2(),
            jmin: 0,
            jmax,
            n,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.b0 > 0.0 && self.a0 > 0.0 && self.tau > 1.0) {
            return Err(Error::Config(format!(
                "need b0 > 0, a0 > 0, tau > 1 (got {}, {}, {})",
                self.b0, self.a0, self.tau
            )));
        }
        if self.jmin > self.jmax {
            return Err(Error::EmptyGrid);
        }
        if self.n == 0 {
            return Err(Error::EmptyGrid);
        }
        Ok(())
    }

    /// Checks that every scale of the grid lies inside the dictionary's range.
    pub fn validate_for(&self, dict: &Affine1D) -> Result<()> {
        self.validate()?;
        if dict.len() != self.n {
            return Err(Error::Config(format!(
                "grid N={} does not match dictionary length {}",
                self.n,
                dict.len()
            )));
        }
        let (lo, hi) = dict.scale_range();
        let eps = 1e-12;
        let smallest = self.scale(self.jmin);
        let largest = self.scale(self.jmax);
        if smallest < lo * (1.0 - eps) || largest > hi * (1.0 + eps) {
            return Err(Error::Config(format!(
                "grid scales [{smallest}, {largest}] exceed dictionary range [{lo}, {hi}]"
            )));
        }
        Ok(())
    }

    pub fn scale(&self, j: i32) -> f64 {
        self.a0 * self.growth(j)
    }

    /// `τʲ` from `log₂τ` snapped to a multiple of 2⁻⁴⁰, so that nested grids
    /// (τ and τ² with matching `j`) produce bit-identical points.
    pub fn growth(&self, j: i32) -> f64 {
        const Q: f64 = (1u64 << 40) as f64;
        let log2_tau = (self.tau.log2() * Q).round() / Q;
        (j as f64 * log2_tau).exp2()
    }

    pub fn levels(&self) -> Vec<Level> {
        let last = (self.n.max(1) - 1) as f64;
        (self.jmin..=self.jmax)
            .map(|j| {
                let scale = self.scale(j);
                let step = self.b0 * self.growth(j);
                let reach = MASS_WIDTH * scale;
                let inside = |n: i64| {
                    let b = n as f64 * step;
                    (b - b.clamp(0.0, last)).abs() <= reach
                };
                let mut lo = (-reach / step).ceil() as i64;
                while inside(lo - 1) {
                    lo -= 1;
                }
                while !inside(lo) {
                    lo += 1;
                }
                let mut hi = ((last + reach) / step).floor() as i64;
                while inside(hi + 1) {
                    hi += 1;
                }
                while !inside(hi) {
                    hi -= 1;
                }
                Level {
                    j,
                    scale,
                    step,
                    n_lo: lo,
                    count: (hi - lo + 1).max(0) as usize,
                }
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.levels().iter().map(|l| l.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn enumerate(&self) -> Vec<ParamPoint> {
        self.levels()
            .iter()
            .flat_map(|l| (0..l.count).map(move |i| ParamPoint(vec![l.translation(i), l.scale])))
            .collect()
    }

    /// Grid points near `p`: two levels on each side of the closest scale and
    /// a few translations around `b` on each of them.
    pub fn neighbors(&self, p: &ParamPoint) -> Vec<ParamPoint> {
        let (b, a) = (p[0], p[1]);
        let jc = ((a / self.a0).ln() / self.tau.ln()).round() as i32;
        let mut out = Vec::new();
        for l in self.levels() {
            if (l.j - jc).abs() > 2 || l.count == 0 {
                continue;
            }
            let nc = (b / l.step).round() as i64;
            for n in (nc - 2)..=(nc + 2) {
                if n >= l.n_lo && n < l.n_lo + l.count as i64 {
                    out.push(ParamPoint(vec![n as f64 * l.step, l.scale]));
                }
            }
        }
        out
    }
}
