//! Score function, its natural gradient, and the step-halving ascent.

use crate::dictionary::{Dictionary, JetOrder, ParamPoint};
use crate::error::Result;
use crate::geometry::MetricTensor;
use crate::signal::SignalBuffer;

/// `S_u(λ) = ⟨g_λ, u⟩²`.
pub fn score<D: Dictionary + ?Sized>(dict: &D, residual: &SignalBuffer, p: &ParamPoint) -> Result<f64> {
    let g = dict.synthesize(p)?;
    Ok(g.inner_product(residual)?.powi(2))
}

#[derive(Clone, Debug)]
pub struct Gradient {
    pub score: f64,
    /// `∂ⱼS = 2⟨g, u⟩⟨∂ⱼg, u⟩`
    pub covariant: Vec<f64>,
    /// `∇ⁱS = 𝒢ⁱʲ∂ⱼS`
    pub natural: Vec<f64>,
    /// `|∇S| = (∂ᵢS 𝒢ⁱʲ ∂ⱼS)^½`
    pub norm: f64,
}

pub fn gradient<D: Dictionary + ?Sized>(dict: &D, residual: &SignalBuffer, p: &ParamPoint) -> Result<Gradient> {
    let jet = dict.jet(p, JetOrder::First)?;
    let c = jet.atom.inner_product(residual)?;
    let covariant = jet
        .first
        .iter()
        .map(|d| Ok(2.0 * c * d.inner_product(residual)?))
        .collect::<Result<Vec<f64>>>()?;
    let metric = MetricTensor::from_partials(p.clone(), &jet.first)?;
    let natural = metric.raise(&covariant);
    let sq: f64 = natural.iter().zip(&covariant).map(|(a, b)| a * b).sum();
    Ok(Gradient {
        score: c * c,
        covariant,
        natural,
        norm: sq.max(0.0).sqrt(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AscentParams {
    pub kappa: usize,
    pub chi: f64,
    pub max_halvings: usize,
    pub grad_stop_ratio: f64,
}

impl Default for AscentParams {
    fn default() -> Self {
        Self {
            kappa: 10,
            chi: 0.1,
            max_halvings: 10,
            grad_stop_ratio: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AscentOutcome {
    pub point: ParamPoint,
    pub score: f64,
    pub steps: usize,
}

/// Natural-gradient ascent of `S_u` from `start`.
///
/// Each step moves by `t` along the unit-speed direction `∇S/|∇S|`, starting
/// from `t = χ` and halving until `S` strictly increases. The iterate is
/// canonicalized after every trial step. Stops after `κ` accepted steps, when
/// `|∇S|/S` falls below the threshold, or when every halving fails.
pub fn gradient_ascent<D: Dictionary + ?Sized>(
    dict: &D,
    residual: &SignalBuffer,
    start: &ParamPoint,
    params: &AscentParams,
) -> Result<AscentOutcome> {
    let mut point = start.clone();
    let mut current = score(dict, residual, &point)?;
    let mut steps = 0;
    while steps < params.kappa {
        let Ok(grad) = gradient(dict, residual, &point) else {
            break;
        };
        if !(current > 0.0) || !(grad.norm > 0.0) || grad.norm / current < params.grad_stop_ratio {
            break;
        }
        let dir: Vec<f64> = grad.natural.iter().map(|v| v / grad.norm).collect();
        let mut t = params.chi;
        let mut accepted = None;
        for _ in 0..=params.max_halvings {
            let candidate = dict.canonicalize(&point.offset(&dir, t));
            if let Ok(s) = score(dict, residual, &candidate) {
                if s > current {
                    accepted = Some((candidate, s));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, s)) => {
                point = p;
                current = s;
                steps += 1;
            }
            None => break,
        }
    }
    Ok(AscentOutcome {
        point,
        score: current,
        steps,
    })
}
