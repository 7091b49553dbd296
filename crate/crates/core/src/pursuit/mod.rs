//! Weak matching pursuit over a discretized dictionary (dMP) and its
//! geometrically optimized variant (gMP).

pub mod ascent;
pub mod search;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dictionary::{Dictionary, ParamPoint};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::io::{format_f64, to_json_line};
use crate::signal::{Shape, SignalBuffer};

pub use ascent::{gradient, gradient_ascent, score, AscentOutcome, AscentParams, Gradient};
pub use search::{SearchGrid, SearchPlan, SearchResult};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Dmp,
    Gmp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizeScope {
    #[default]
    BestOnly,
    AllAtoms,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PursuitConfig {
    pub alpha: f64,
    pub mode: Mode,
    pub kappa: usize,
    pub chi: f64,
    pub max_halvings: usize,
    pub grad_stop_ratio: f64,
    pub max_iterations: usize,
    pub optimize_scope: OptimizeScope,
    /// Stop once `‖Rᵐf‖² < energy_floor · ‖f‖²`.
    pub energy_floor: f64,
    pub execution: Execution,
}

impl Default for PursuitConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            mode: Mode::Dmp,
            kappa: 10,
            chi: 0.1,
            max_halvings: 10,
            grad_stop_ratio: 1e-6,
            max_iterations: 12,
            optimize_scope: OptimizeScope::BestOnly,
            energy_floor: 1e-12,
            execution: Execution::Parallel,
        }
    }
}

impl PursuitConfig {
    pub fn dmp(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..Self::default()
        }
    }

    pub fn gmp(kappa: usize, max_iterations: usize) -> Self {
        Self {
            mode: Mode::Gmp,
            kappa,
            max_iterations,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.chi > 0.0 && self.chi.is_finite()) {
            return Err(Error::Config(format!("chi must be positive, got {}", self.chi)));
        }
        if !(self.grad_stop_ratio >= 0.0) || !(self.energy_floor >= 0.0) {
            return Err(Error::Config("thresholds must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn ascent(&self) -> AscentParams {
        AscentParams {
            kappa: self.kappa,
            chi: self.chi,
            max_halvings: self.max_halvings,
            grad_stop_ratio: self.grad_stop_ratio,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionStep {
    pub m: usize,
    pub lambda: ParamPoint,
    pub coeff: f64,
    pub score: f64,
    /// `‖Rᵐf‖²` after subtracting this atom.
    pub residual_energy: f64,
    pub seed_lambda: Option<ParamPoint>,
    pub ascent_steps: usize,
    /// Best score on the grid before optimization.
    #[serde(default, skip_serializing)]
    pub grid_score: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub initial_energy: f64,
    pub steps: Vec<DecompositionStep>,
    pub residual: SignalBuffer,
}

impl Decomposition {
    /// `‖Rᵐf‖²` for `m = 0..=M`.
    pub fn energies(&self) -> Vec<f64> {
        std::iter::once(self.initial_energy)
            .chain(self.steps.iter().map(|s| s.residual_energy))
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        steps_to_jsonl(&self.steps)
    }

    pub fn to_csv(&self) -> String {
        steps_to_csv(&self.steps)
    }
}

/// Runs `config.max_iterations` pursuit iterations of `signal` over `grid`.
pub fn run<G: SearchGrid>(signal: &SignalBuffer, dict: &G::Dict, grid: &G, config: &PursuitConfig) -> Result<Decomposition> {
    config.validate()?;
    let plan = grid.plan(dict)?;
    run_with_plan(signal, dict, &plan, config)
}

/// As [`run`], reusing a precomputed search plan.
pub fn run_with_plan<D: Dictionary + ?Sized>(
    signal: &SignalBuffer,
    dict: &D,
    plan: &SearchPlan,
    config: &PursuitConfig,
) -> Result<Decomposition> {
    config.validate()?;
    if signal.shape() != plan.shape() {
        return Err(Error::ShapeMismatch {
            left: signal.shape(),
            right: plan.shape(),
        });
    }
    let initial_energy = signal.norm_sq();
    let floor = config.energy_floor * initial_energy;
    let mut residual = signal.clone();
    let mut energy = initial_energy;
    let mut steps = Vec::with_capacity(config.max_iterations);
    let params = config.ascent();
    for m in 1..=config.max_iterations {
        if energy == 0.0 || energy < floor {
            break;
        }
        let found = plan.full_search(&residual, config.execution)?;
        let (lambda, seed, ascent_steps) = match config.mode {
            Mode::Dmp => (plan.point(found.weak_index(config.alpha)), None, 0),
            Mode::Gmp => select_optimized(dict, plan, &found, &residual, config, &params)?,
        };
        let atom = dict.synthesize(&lambda)?;
        let coeff = atom.inner_product(&residual)?;
        residual.add_scaled(-coeff, &atom)?;
        energy = residual.norm_sq();
        steps.push(DecompositionStep {
            m,
            lambda,
            coeff,
            score: coeff * coeff,
            residual_energy: energy,
            seed_lambda: seed,
            ascent_steps,
            grid_score: found.best_score,
        });
    }
    Ok(Decomposition {
        initial_energy,
        steps,
        residual,
    })
}

fn select_optimized<D: Dictionary + ?Sized>(
    dict: &D,
    plan: &SearchPlan,
    found: &SearchResult,
    residual: &SignalBuffer,
    config: &PursuitConfig,
    params: &AscentParams,
) -> Result<(ParamPoint, Option<ParamPoint>, usize)> {
    match config.optimize_scope {
        OptimizeScope::BestOnly => {
            let seed = plan.point(found.weak_index(config.alpha));
            let out = gradient_ascent(dict, residual, &seed, params)?;
            Ok((out.point, Some(seed), out.steps))
        }
        OptimizeScope::AllAtoms => {
            let outcomes = config.execution.map(plan.len(), |i| {
                let seed = plan.point(i);
                gradient_ascent(dict, residual, &seed, params).map(|o| (seed, o))
            });
            let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
            let best = outcomes.iter().map(|(_, o)| o.score).fold(0.0f64, f64::max);
            let threshold = config.alpha * config.alpha * best;
            let pick = outcomes
                .iter()
                .position(|(_, o)| o.score >= threshold)
                .unwrap_or(0);
            let (seed, out) = outcomes.into_iter().nth(pick).expect("nonempty plan");
            Ok((out.point, Some(seed), out.steps))
        }
    }
}

/// `Aᴹf = Σ c_m g_{λ_m}`.
pub fn reconstruct<D: Dictionary + ?Sized>(steps: &[DecompositionStep], dict: &D, shape: Shape) -> Result<SignalBuffer> {
    if dict.shape() != shape {
        return Err(Error::ShapeMismatch {
            left: dict.shape(),
            right: shape,
        });
    }
    let mut out = SignalBuffer::zeros(shape);
    for s in steps {
        out.add_scaled(s.coeff, &dict.synthesize(&s.lambda)?)?;
    }
    Ok(out)
}

pub fn steps_to_jsonl(steps: &[DecompositionStep]) -> Result<String> {
    let mut out = String::new();
    for s in steps {
        out.push_str(&to_json_line(s)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn steps_from_jsonl(text: &str) -> Result<Vec<DecompositionStep>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

pub fn steps_to_csv(steps: &[DecompositionStep]) -> String {
    let dim = steps.first().map_or(0, |s| s.lambda.dim());
    let mut out = String::from("m,coeff,score,residual_energy,ascent_steps");
    for i in 0..dim {
        let _ = write!(out, ",lambda_{i}");
    }
    for i in 0..dim {
        let _ = write!(out, ",seed_{i}");
    }
    out.push('\n');
    for s in steps {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            s.m,
            format_f64(s.coeff),
            format_f64(s.score),
            format_f64(s.residual_energy),
            s.ascent_steps
        );
        for v in s.lambda.coords() {
            let _ = write!(out, ",{}", format_f64(*v));
        }
        for i in 0..dim {
            match &s.seed_lambda {
                Some(p) => {
                    let _ = write!(out, ",{}", format_f64(p[i]));
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

pub fn steps_from_csv(text: &str) -> Result<Vec<DecompositionStep>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Format("empty CSV".into()))?;
    let dim = header.split(',').filter(|h| h.starts_with("lambda_")).count();
    let bad = |what: &str| Error::Format(format!("bad decomposition CSV field {what}"));
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 + 2 * dim {
                return Err(Error::Format(format!("expected {} fields, got {}", 5 + 2 * dim, f.len())));
            }
            let num = |i: usize| f[i].trim().parse::<f64>().map_err(|_| bad(f[i]));
            let int = |i: usize| f[i].trim().parse::<usize>().map_err(|_| bad(f[i]));
            let lambda = ParamPoint((0..dim).map(|i| num(5 + i)).collect::<Result<_>>()?);
            let seed = if f[5 + dim].trim().is_empty() {
                None
            } else {
                Some(ParamPoint((0..dim).map(|i| num(5 + dim + i)).collect::<Result<_>>()?))
            };
            Ok(DecompositionStep {
                m: int(0)?,
                lambda,
                coeff: num(1)?,
                score: num(2)?,
                residual_energy: num(3)?,
                seed_lambda: seed,
                ascent_steps: int(4)?,
                grid_score: 0.0,
            })
        })
        .collect()
}
