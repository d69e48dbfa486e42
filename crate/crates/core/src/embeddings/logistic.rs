use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, LabeledSlices};
use crate::corpus::Label;
use crate::scalar::Real;
use crate::stats::matrix::dot;

pub const DEFAULT_L2_LAMBDA: f64 = 1e-2;
const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

/// Numerically stable logistic function, kept strictly inside (0, 1).
pub fn sigmoid<T: Real>(z: T) -> T {
    let s = if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    };
    s.max(T::min_positive_value()).min(T::one() - T::epsilon())
}

/// `ln(1 + e^z)` without overflow.
fn softplus<T: Real>(z: T) -> T {
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    #[default]
    Zeros,
    /// Uniform weights in `[-scale, scale]` drawn from the training seed.
    Uniform { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions<T> {
    pub l2_lambda: T,
    pub seed: u64,
    pub max_iters: usize,
    /// Stop once the gradient max-norm drops below this.
    pub tol: T,
    pub init: Init,
}

impl<T: Real> Default for TrainOptions<T> {
    fn default() -> Self {
        Self {
            l2_lambda: T::lit(DEFAULT_L2_LAMBDA),
            seed: 0,
            max_iters: 1000,
            tol: T::lit(1e-6),
            init: Init::Zeros,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta<T> {
    pub seed: u64,
    pub iterations: usize,
    pub final_loss: T,
    pub converged: bool,
    /// Loss at initialization followed by the loss after each accepted step.
    pub loss_history: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub l2_lambda: T,
    pub meta: TrainingMeta<T>,
}

impl<T: Real> LogisticModel<T> {
    /// Untrained model with all-zero parameters.
    pub fn zeros(dim: usize, l2_lambda: T) -> Self {
        Self {
            weights: vec![T::zero(); dim],
            bias: T::zero(),
            l2_lambda,
            meta: TrainingMeta {
                seed: 0,
                iterations: 0,
                final_loss: T::nan(),
                converged: false,
                loss_history: Vec::new(),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, x: &[T]) -> Result<T, EmbeddingError> {
        if x.len() != self.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict_proba(&self, x: &[T]) -> Result<T, EmbeddingError> {
        self.logit(x).map(sigmoid)
    }
}

fn target<T: Real>(label: Label) -> T {
    match label {
        Label::AtRisk => T::one(),
        Label::NoRisk => T::zero(),
    }
}

/// Mean negative log-likelihood plus `(λ/2)‖w‖²`; the bias is unpenalized.
pub fn loss<T: Real>(weights: &[T], bias: T, data: &LabeledSlices<T>, l2_lambda: T) -> T {
    let n = T::from_count(data.len());
    let nll = data.iter().fold(T::zero(), |acc, (x, label)| {
        let z = dot(weights, x) + bias;
        acc + match label {
            Label::AtRisk => softplus(-z),
            Label::NoRisk => softplus(z),
        }
    });
    nll / n + T::lit(0.5) * l2_lambda * dot(weights, weights)
}

/// Loss together with its gradient `(∂/∂w, ∂/∂b)`.
pub fn loss_and_gradient<T: Real>(weights: &[T], bias: T, data: &LabeledSlices<T>, l2_lambda: T) -> (T, Vec<T>, T) {
    let n = T::from_count(data.len());
    let mut grad_w = vec![T::zero(); weights.len()];
    let mut grad_b = T::zero();
    for (x, label) in data.iter() {
        let z = dot(weights, x) + bias;
        // Unclamped residual: exact derivative of the loss.
        let p = if z >= T::zero() {
            T::one() / (T::one() + (-z).exp())
        } else {
            let e = z.exp();
            e / (T::one() + e)
        };
        let r = p - target::<T>(label);
        for (g, &xi) in grad_w.iter_mut().zip(x) {
            *g += r * xi;
        }
        grad_b += r;
    }
    for (g, &w) in grad_w.iter_mut().zip(weights) {
        *g = *g / n + l2_lambda * w;
    }
    grad_b /= n;
    (loss(weights, bias, data, l2_lambda), grad_w, grad_b)
}

/// Full-batch gradient descent with Armijo backtracking.
pub fn train_logistic<T: Real>(
    data: &LabeledSlices<T>,
    opts: &TrainOptions<T>,
) -> Result<LogisticModel<T>, EmbeddingError> {
    if data.is_empty() {
        return Err(EmbeddingError::EmptyDataset);
    }
    let dim = data.dim();
    let positives = data.iter().filter(|(_, l)| *l == Label::AtRisk).count();
    if positives == 0 || positives == data.len() {
        return Err(EmbeddingError::SingleClassData);
    }
    if opts.l2_lambda < T::zero() || !opts.l2_lambda.is_finite() {
        return Err(EmbeddingError::InvalidOption("l2_lambda must be nonnegative".into()));
    }

    let mut weights = vec![T::zero(); dim];
    if let Init::Uniform { scale } = opts.init {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        for w in &mut weights {
            *w = T::lit(rng.gen_range(-scale..=scale));
        }
    }
    let mut bias = T::zero();

    let (mut current, mut grad_w, mut grad_b) = loss_and_gradient(&weights, bias, data, opts.l2_lambda);
    let mut history = vec![current];
    let mut step = T::one();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iters {
        let gmax = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        if gmax < opts.tol {
            converged = true;
            break;
        }
        let gnorm2 = dot(&grad_w, &grad_w) + grad_b * grad_b;
        let mut accepted = None;
        while step >= T::lit(MIN_STEP) {
            let cand_w: Vec<T> = weights.iter().zip(&grad_w).map(|(&w, &g)| w - step * g).collect();
            let cand_b = bias - step * grad_b;
            let cand_loss = loss(&cand_w, cand_b, data, opts.l2_lambda);
            if cand_loss <= current - T::lit(ARMIJO_C) * step * gnorm2 && cand_loss < current {
                accepted = Some((cand_w, cand_b));
                break;
            }
            step *= T::lit(0.5);
        }
        let Some((w, b)) = accepted else {
            // No decrease representable at this precision.
            break;
        };
        weights = w;
        bias = b;
        iterations += 1;
        let (l, gw, gb) = loss_and_gradient(&weights, bias, data, opts.l2_lambda);
        current = l;
        grad_w = gw;
        grad_b = gb;
        history.push(current);
        step = (step * T::lit(2.0)).min(T::lit(1e4));
    }
    if !converged {
        let gmax = grad_w.iter().fold(grad_b.abs(), |m, g| m.max(g.abs()));
        converged = gmax < opts.tol;
    }

    Ok(LogisticModel {
        weights,
        bias,
        l2_lambda: opts.l2_lambda,
        meta: TrainingMeta {
            seed: opts.seed,
            iterations,
            final_loss: current,
            converged,
            loss_history: history,
        },
    })
}
