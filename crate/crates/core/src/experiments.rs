//! Experiment protocols: random burst signals, residual-decay curves, NAE
//! and the image PSNR harness.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affine1d::{Affine1D, TauAdicGrid};
use crate::aniso2d::{Aniso2D, Grid2D};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::pursuit::{self, Mode, PursuitConfig, SearchGrid};
use crate::signal::{psnr, Shape, SignalBuffer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BurstKind {
    Gaussian,
    Rectangular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BurstSignalSpec {
    pub n: usize,
    pub n_bursts: usize,
    pub kind: BurstKind,
    /// Widths (rectangles) or standard deviations (Gaussians) are drawn from
    /// `[L/2, 3L/4]`.
    pub l: usize,
    pub magnitude: (f64, f64),
    pub seed: u64,
}

impl Default for BurstSignalSpec {
    fn default() -> Self {
        Self {
            n: 1 << 13,
            n_bursts: 100,
            kind: BurstKind::Gaussian,
            l: 1 << 8,
            magnitude: (0.5, 1.0),
            seed: 0,
        }
    }
}

impl BurstSignalSpec {
    pub fn desk(kind: BurstKind, seed: u64) -> Self {
        Self {
            n: 1 << 12,
            kind,
            seed,
            ..Self::default()
        }
    }

    pub fn width_range(&self) -> (f64, f64) {
        (0.5 * self.l as f64, 0.75 * self.l as f64)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

pub fn generate_burst_signal(spec: &BurstSignalSpec) -> Result<SignalBuffer> {
    if spec.n < spec.l || spec.l < 2 {
        return Err(Error::Config(format!(
            "signal length {} is shorter than the burst scale L = {}",
            spec.n, spec.l
        )));
    }
    if spec.n_bursts == 0 {
        return Err(Error::Config("need at least one burst".into()));
    }
    let (m_lo, m_hi) = spec.magnitude;
    if !(0.0 < m_lo && m_lo <= m_hi) {
        return Err(Error::Config("magnitude range must be positive and ordered".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w_lo, w_hi) = spec.width_range();
    let n = spec.n;
    let mut v = vec![0.0f64; n];
    for _ in 0..spec.n_bursts {
        let mag = rng.gen_range(m_lo..=m_hi);
        let w = rng.gen_range(w_lo..=w_hi);
        match spec.kind {
            BurstKind::Gaussian => {
                let center = rng.gen_range(0.0..n as f64);
                let inv = 1.0 / (2.0 * w * w);
                for (t, x) in v.iter_mut().enumerate() {
                    let d = t as f64 - center;
                    *x += mag * (-d * d * inv).exp();
                }
            }
            BurstKind::Rectangular => {
                let width = (w.round() as usize).min(n);
                let start = rng.gen_range(0..=n - width);
                for x in &mut v[start..start + width] {
                    *x += mag;
                }
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    SignalBuffer::from_1d(v)
}

/// Unit-norm white noise with samples uniform on `[-1, 1]` before scaling.
pub fn noise_signal(shape: Shape, seed: u64) -> SignalBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v: Vec<f64> = (0..shape.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let buf = SignalBuffer::new(shape, v).expect("length matches shape");
    if norm > 0.0 { buf.scaled(1.0 / norm) } else { buf }
}

/// Seed of trial `index` under `master` (SplitMix64 finalizer).
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// An engine together with the grid density it runs on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineSpec {
    pub mode: Mode,
    pub b0: f64,
    pub log2_tau: f64,
    pub kappa: usize,
}

impl EngineSpec {
    pub fn dmp(b0: f64, log2_tau: f64) -> Self {
        Self {
            mode: Mode::Dmp,
            b0,
            log2_tau,
            kappa: 0,
        }
    }

    pub fn gmp(b0: f64, log2_tau: f64, kappa: usize) -> Self {
        Self {
            mode: Mode::Gmp,
            b0,
            log2_tau,
            kappa,
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            Mode::Dmp => format!("dmp({},{})", self.b0, self.log2_tau),
            Mode::Gmp => format!("gmp({},{},k={})", self.b0, self.log2_tau, self.kappa),
        }
    }

    pub fn grid(&self, n: usize) -> Result<TauAdicGrid> {
        TauAdicGrid::covering(n, self.b0, self.log2_tau)
    }

    pub fn config(&self, max_iterations: usize, execution: Execution) -> PursuitConfig {
        let mut c = match self.mode {
            Mode::Dmp => PursuitConfig::dmp(max_iterations),
            Mode::Gmp => PursuitConfig::gmp(self.kappa, max_iterations),
        };
        c.execution = execution;
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// Mean `‖Rᵐf‖²` for `m = 0..=m_max`.
    pub mean: Vec<f64>,
    pub per_trial: Vec<Vec<f64>>,
}

/// Residual energy against iteration, averaged over `trials` signals drawn
/// with seeds derived from `class.seed`.
pub fn convergence_curve(
    class: &BurstSignalSpec,
    grid: &TauAdicGrid,
    config: &PursuitConfig,
    trials: usize,
    m_max: usize,
) -> Result<Curve> {
    if trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let dict = Affine1D::new(class.n)?;
    let plan = grid.plan(&dict)?;
    let config = PursuitConfig {
        max_iterations: m_max,
        ..config.clone()
    };
    let runs = config.execution.map(trials, |t| -> Result<Vec<f64>> {
        let f = generate_burst_signal(&class.with_seed(trial_seed(class.seed, t as u64)))?;
        let d = pursuit::run_with_plan(&f, &dict, &plan, &config)?;
        let mut e = d.energies();
        // an early stop leaves the residual unchanged
        let last = *e.last().expect("initial energy");
        e.resize(m_max + 1, last);
        Ok(e)
    });
    let per_trial = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = (0..=m_max)
        .map(|m| per_trial.iter().map(|e| e[m]).sum::<f64>() / trials as f64)
        .collect();
    Ok(Curve { mean, per_trial })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NaeResult {
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    pub at_iteration: usize,
    pub mode: Mode,
    pub grid: TauAdicGrid,
    pub per_trial: Vec<f64>,
}

/// Reference pipeline producing the residuals of later iterations: gMP with
/// κ = 10 on the densest grid `(b₀ = 1, log₂τ = 0.25)`.
pub fn reference_residual(f: &SignalBuffer, iterations: usize, execution: Execution) -> Result<SignalBuffer> {
    if iterations == 0 {
        return Ok(f.clone());
    }
    let n = f.len();
    let dict = Affine1D::new(n)?;
    let grid = TauAdicGrid::covering(n, 1.0, 0.25)?;
    let mut config = PursuitConfig::gmp(10, iterations);
    config.execution = execution;
    Ok(pursuit::run(f, &dict, &grid, &config)?.residual)
}

/// Mean selected score `⟨g_λ*, u/‖u‖⟩²` over `trials` signals, where `u` is
/// the residual before iteration `at_iteration`.
pub fn nae(
    class: &BurstSignalSpec,
    grid: &TauAdicGrid,
    config: &PursuitConfig,
    trials: usize,
    at_iteration: usize,
) -> Result<NaeResult> {
    if trials == 0 || at_iteration == 0 {
        return Err(Error::Config("need trials ≥ 1 and at_iteration ≥ 1".into()));
    }
    let dict = Affine1D::new(class.n)?;
    let plan = grid.plan(&dict)?;
    let one = PursuitConfig {
        max_iterations: 1,
        energy_floor: 0.0,
        ..config.clone()
    };
    let scores = config.execution.map(trials, |t| -> Result<f64> {
        let f = generate_burst_signal(&class.with_seed(trial_seed(class.seed, t as u64)))?;
        let u = reference_residual(&f, at_iteration - 1, config.execution)?;
        let norm = u.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let d = pursuit::run_with_plan(&u.scaled(1.0 / norm), &dict, &plan, &one)?;
        Ok(d.steps.first().map_or(0.0, |s| s.score.min(1.0)))
    });
    let per_trial = scores.into_iter().collect::<Result<Vec<_>>>()?;
    let mean = per_trial.iter().sum::<f64>() / trials as f64;
    let var = if trials > 1 {
        per_trial.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64
    } else {
        0.0
    };
    Ok(NaeResult {
        mean,
        std_error: (var / trials as f64).sqrt(),
        trials,
        at_iteration,
        mode: config.mode,
        grid: grid.clone(),
        per_trial,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub mode: Mode,
    pub kappa: usize,
    pub n_atoms: usize,
    pub psnr_db: f64,
    pub seconds: f64,
}

/// Decomposes `image` with each configuration and reports the PSNR of the
/// `n_atoms`-term reconstruction against `peak`.
pub fn image_harness(
    image: &SignalBuffer,
    j: usize,
    k: usize,
    n_atoms: usize,
    peak: f64,
    configs: &[PursuitConfig],
) -> Result<Vec<ImageRow>> {
    let Shape::D2 { nx, ny } = image.shape() else {
        return Err(Error::Config("image harness needs a 2-D buffer".into()));
    };
    let dict = Aniso2D::new(nx, ny)?;
    let grid = Grid2D { nx, ny, j, k };
    let plan = grid.plan(&dict)?;
    configs
        .iter()
        .map(|config| {
            let start = Instant::now();
            let config = PursuitConfig {
                max_iterations: n_atoms,
                ..config.clone()
            };
            let d = pursuit::run_with_plan(image, &dict, &plan, &config)?;
            let approx = pursuit::reconstruct(&d.steps, &dict, image.shape())?;
            Ok(ImageRow {
                mode: config.mode,
                kappa: if config.mode == Mode::Gmp { config.kappa } else { 0 },
                n_atoms,
                psnr_db: psnr(image, &approx, peak)?,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Deterministic 8-bit-range grayscale test picture: a shaded background,
/// a bright disc, a dark bar and a patch of oriented stripes.
pub fn synthetic_test_image(nx: usize, ny: usize) -> SignalBuffer {
    let (w, h) = (nx as f64, ny as f64);
    let mut v = Vec::with_capacity(nx * ny);
    for y in 0..ny {
        for x in 0..nx {
            let (u, t) = (x as f64 / w, y as f64 / h);
            let mut p = 70.0 + 60.0 * u + 30.0 * t;
            let (dx, dy) = (u - 0.3, t - 0.35);
            if dx * dx + dy * dy < 0.04 {
                p += 80.0;
            }
            if (0.55..0.68).contains(&u) && t > 0.15 {
                p -= 55.0;
            }
            if u > 0.7 && t > 0.6 {
                p += 35.0 * (((x + 2 * y) as f64) * std::f64::consts::PI / 3.0).sin();
            }
            v.push(p.round().clamp(0.0, 255.0));
        }
    }
    SignalBuffer::new(Shape::D2 { nx, ny }, v).expect("finite samples")
}
