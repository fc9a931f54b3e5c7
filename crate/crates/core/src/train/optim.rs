use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Real, Tensor};

/// Adam with bias correction. Moments are created lazily for parameters
/// that are trainable when a step is taken.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T: Real = f32> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Steps taken so far.
    pub t: u64,
    moments: Vec<Option<Moments<T>>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Moments<T: Real> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, t: 0, moments: Vec::new() }
    }

    pub fn moments(&self, id: ParamId) -> Option<&Moments<T>> {
        self.moments.get(id.index()).and_then(Option::as_ref)
    }

    pub fn set_moments(&mut self, id: ParamId, m: Moments<T>) {
        if self.moments.len() <= id.index() {
            self.moments.resize(id.index() + 1, None);
        }
        self.moments[id.index()] = Some(m);
    }

    /// Updates every trainable parameter from its accumulated gradient.
    /// Fails without touching anything if a gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: f64) -> Result<()> {
        let ids: Vec<ParamId> = store.ids().filter(|&id| store.get(id).trainable).collect();
        for &id in &ids {
            let p = store.get(id);
            if !p.grad.all_finite() {
                return Err(Error::Numeric(format!("non-finite gradient for {}", p.name)));
            }
        }
        self.t += 1;
        let b1 = T::lit(self.beta1);
        let b2 = T::lit(self.beta2);
        let c1 = T::lit(1.0 - self.beta1.powf(self.t as f64));
        let c2 = T::lit(1.0 - self.beta2.powf(self.t as f64));
        let lr = T::lit(lr);
        let eps = T::lit(self.eps);
        let one = T::one();
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for id in ids {
            let p = store.get_mut(id);
            let mo = self.moments[id.index()]
                .get_or_insert_with(|| Moments { m: Tensor::zeros(p.value.shape()), v: Tensor::zeros(p.value.shape()) });
            let (m, v) = (mo.m.data_mut(), mo.v.data_mut());
            for (((w, &g), mi), vi) in p.value.data_mut().iter_mut().zip(p.grad.data()).zip(m).zip(v) {
                *mi = b1 * *mi + (one - b1) * g;
                *vi = b2 * *vi + (one - b2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
