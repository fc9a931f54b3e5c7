//! Central finite-difference gradient checking (64-bit only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Perturbation step of the central difference.
    pub epsilon: f64,
    /// Pass threshold on the maximum relative error.
    pub tolerance: f64,
    /// Elements sampled per parameter tensor; `0` checks every element.
    pub samples_per_param: usize,
    /// Lower bound on the relative-error denominator, so that gradients
    /// which are zero up to rounding do not blow the ratio up.
    pub denominator_floor: f64,
    /// When the central difference disagrees, retry with the one-sided
    /// differences and then with steps of `ε/10` and `ε/100`. Along a single
    /// coordinate the network is piecewise linear, so a difference is exact
    /// unless a LeakyReLU or L1 kink lies inside its interval.
    pub kink_fallback: bool,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-4,
            tolerance: 1e-4,
            samples_per_param: 0,
            denominator_floor: 1e-6,
            kink_fallback: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    /// Elements settled by the kink fallback.
    pub fallback: usize,
    pub max_rel_error: f64,
    /// `(flat index, analytic, numeric)` at the worst element.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Checked elements in total, and how many needed the kink fallback.
    pub fn counts(&self) -> (usize, usize) {
        self.params.iter().fold((0, 0), |(c, o), p| (c + p.checked, o + p.fallback))
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

fn eval_loss<F>(forward: &F, store: &ParamStore<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut g = Graph::no_grad();
    let loss = forward(&mut g, store)?;
    let v = g.value(loss).item()?;
    if !v.is_finite() {
        return Err(Error::Numeric(format!("gradient check: loss evaluated to {v}")));
    }
    Ok(v)
}

/// Compares the analytic gradient of every trainable parameter in `store`
/// against `(f(θ+ε) − f(θ−ε)) / 2ε`.
///
/// `forward` must build a scalar loss from the parameters in the store it is
/// handed. Parameter gradients in `store` are overwritten.
pub fn gradient_check<F>(
    store: &mut ParamStore<f64>,
    forward: F,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var>,
{
    store.zero_grads();
    let base = {
        let mut g = Graph::new();
        let loss = forward(&mut g, store)?;
        let v = g.value(loss).item()?;
        if !v.is_finite() {
            return Err(Error::Numeric(format!("gradient check: loss evaluated to {v}")));
        }
        g.backward(loss, store)?;
        v
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut params = Vec::new();
    let ids: Vec<_> = store.ids().filter(|&id| store.get(id).trainable).collect();
    for id in ids {
        let n = store.get(id).value.numel();
        let indices: Vec<usize> = if opts.samples_per_param == 0 || opts.samples_per_param >= n {
            (0..n).collect()
        } else {
            let mut v = sample(&mut rng, n, opts.samples_per_param).into_vec();
            v.sort_unstable();
            v
        };
        let mut check = ParamCheck {
            name: store.get(id).name.clone(),
            checked: indices.len(),
            fallback: 0,
            max_rel_error: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for i in indices {
            let analytic = store.get(id).grad.data()[i];
            let orig = store.get(id).value.data()[i];
            let mut probe = |step: f64| -> Result<(f64, f64)> {
                store.get_mut(id).value.data_mut()[i] = orig + step;
                let plus = eval_loss(&forward, store);
                store.get_mut(id).value.data_mut()[i] = orig - step;
                let minus = eval_loss(&forward, store);
                store.get_mut(id).value.data_mut()[i] = orig;
                Ok((plus?, minus?))
            };
            let rel_to = |numeric: f64| {
                (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(opts.denominator_floor)
            };
            let (plus, minus) = probe(opts.epsilon)?;
            let mut numeric = (plus - minus) / (2.0 * opts.epsilon);
            let mut rel = rel_to(numeric);
            if rel >= opts.tolerance && opts.kink_fallback {
                let mut step = opts.epsilon;
                let (mut plus, mut minus) = (plus, minus);
                for refinement in 0..3 {
                    if refinement > 0 {
                        step /= 10.0;
                        (plus, minus) = probe(step)?;
                    }
                    let candidates = [(plus - minus) / (2.0 * step), (plus - base) / step, (base - minus) / step];
                    for c in candidates {
                        if rel_to(c) < rel {
                            (numeric, rel) = (c, rel_to(c));
                        }
                    }
                }
                if rel < opts.tolerance {
                    check.fallback += 1;
                }
            }
            if rel > check.max_rel_error || check.max_rel_error.is_nan() {
                check.max_rel_error = rel;
                check.worst = (i, analytic, numeric);
            }
        }
        params.push(check);
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error < opts.tolerance,
        max_rel_error,
        tolerance: opts.tolerance,
        params,
    })
}
