//! Convolution units and the adaptive dense residual blocks built from them.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::ModelConfig;
use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, Real, Tensor, Var};

/// Registers parameters with a seeded uniform initialiser.
pub(crate) struct Builder<'a, T: Real> {
    pub store: &'a mut ParamStore<T>,
    pub rng: ChaCha8Rng,
}

impl<T: Real> Builder<'_, T> {
    fn uniform(&mut self, shape: [usize; 4], bound: f64) -> Tensor<T> {
        let rng = &mut self.rng;
        Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..bound)))
    }

    /// Weights and bias drawn from `U(-1/√fan_in, 1/√fan_in)`.
    pub fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<Conv> {
        let bound = 1.0 / ((cin * k * k) as f64).sqrt();
        let w = self.uniform([cout, cin, k, k], bound);
        let b = self.uniform([cout, 1, 1, 1], bound);
        Ok(Conv {
            weight: self.store.add(format!("{name}.weight"), w, true)?,
            bias: self.store.add(format!("{name}.bias"), b, true)?,
            kernel: k,
        })
    }

    pub fn scalar(&mut self, name: String, value: f64, trainable: bool) -> Result<ParamId> {
        self.store.add(name, Tensor::scalar(T::lit(value)), trainable)
    }
}

/// A biased, stride-1, "same"-padded convolution.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

impl Conv {
    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        g.conv2d(x, w, Some(b))
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

/// Wide-activation unit: 3×3 expand → LeakyReLU → 3×3 contract.
#[derive(Debug, Clone)]
pub struct ConvUnit {
    pub expand: Conv,
    pub contract: Conv,
    slope: f64,
}

impl ConvUnit {
    pub(crate) fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let wide = cfg.feats * cfg.expansion;
        Ok(ConvUnit {
            expand: b.conv(&format!("{name}.expand"), cfg.feats, wide, 3)?,
            contract: b.conv(&format!("{name}.contract"), wide, cfg.feats, 3)?,
            slope: cfg.leaky_slope,
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        g.scoped(|g| {
            let h = self.expand.forward(g, store, x)?;
            let h = g.leaky_relu(h, T::lit(self.slope));
            self.contract.forward(g, store, h)
        })
    }
}

/// Scalar edge weights of an adaptive dense block.
///
/// Stage `i` (1-based) produces `X_i`, the input of unit `i + 1`; stage `n`
/// is the fusion stage feeding the 1×1 LFF conv. `a[(i-1, i)]` scales the
/// newest unit output `Y_i`; `b[(j, i)]` scales an earlier output `Y_j`
/// (`Y_0` being the block input). In the plain chain topology `b[(i-1, i)]`
/// scales `X_{i-1}` instead.
#[derive(Debug, Clone, Default)]
pub struct AdaptiveCoeffs {
    pub a: BTreeMap<(usize, usize), ParamId>,
    pub b: BTreeMap<(usize, usize), ParamId>,
}

impl AdaptiveCoeffs {
    pub fn edge_count(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.a.values().chain(self.b.values()).copied()
    }

    /// Edges for `n` units; matches [`AdaptiveCoeffs::expected_edges`].
    fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, n: usize, cfg: &ModelConfig) -> Result<Self> {
        let mut coeffs = AdaptiveCoeffs::default();
        for (kind, from, to) in Self::edge_list(n, cfg.dense_connections) {
            let id = b.scalar(format!("{name}.{kind}_{from}_{to}"), cfg.adaptive_init, cfg.adaptive_weights)?;
            let map = if kind == 'a' { &mut coeffs.a } else { &mut coeffs.b };
            map.insert((from, to), id);
        }
        Ok(coeffs)
    }

    fn edge_list(n: usize, dense: bool) -> Vec<(char, usize, usize)> {
        let mut edges = Vec::new();
        for i in 1..=n {
            edges.push(('a', i - 1, i));
            if dense || i == n {
                edges.extend((0..i).rev().map(|j| ('b', j, i)));
            } else {
                edges.push(('b', i - 1, i));
            }
        }
        edges
    }

    /// Number of scalar edges for `n` units.
    pub fn expected_edges(n: usize, dense: bool) -> usize {
        Self::edge_list(n, dense).len()
    }
}

/// The shared topology of ADRB and ADRU: `n` units wired with adaptive
/// dense connections, fused by a 1×1 LFF conv, plus an outer skip.
#[derive(Debug, Clone)]
pub struct AdaptiveDense {
    pub coeffs: AdaptiveCoeffs,
    pub lff: Conv,
    pub dense: bool,
    n: usize,
}

impl AdaptiveDense {
    pub(crate) fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, n: usize, cfg: &ModelConfig) -> Result<Self> {
        let coeffs = AdaptiveCoeffs::build(b, name, n, cfg)?;
        let lff = b.conv(&format!("{name}.lff"), (n + 1) * cfg.feats, cfg.feats, 1)?;
        Ok(AdaptiveDense { coeffs, lff, dense: cfg.dense_connections, n })
    }

    /// Runs the topology with `unit(i, ...)` as the `i`-th (0-based) unit.
    pub fn forward<T: Real>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mut unit: impl FnMut(usize, &mut Graph<T>, Var) -> Result<Var>,
    ) -> Result<Var> {
        let n = self.n;
        let mut ys = vec![x];
        let mut input = x;
        for i in 1..=n {
            let y = unit(i - 1, g, input)?;
            ys.push(y);
            if i == n {
                break;
            }
            let a = g.param(store, self.coeffs.a[&(i - 1, i)]);
            let mut terms = vec![(a, y)];
            if self.dense {
                for j in (0..i).rev() {
                    terms.push((g.param(store, self.coeffs.b[&(j, i)]), ys[j]));
                }
            } else {
                terms.push((g.param(store, self.coeffs.b[&(i - 1, i)]), input));
            }
            input = g.weighted_sum(&terms)?;
        }
        let a = g.param(store, self.coeffs.a[&(n - 1, n)]);
        let mut parts = vec![g.scale(ys[n], a)?];
        for j in (0..n).rev() {
            let b = g.param(store, self.coeffs.b[&(j, n)]);
            parts.push(g.scale(ys[j], b)?);
        }
        let cat = g.concat_channels(&parts)?;
        let fused = self.lff.forward(g, store, cat)?;
        g.add(fused, x)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Adaptive dense residual block: conv units in the adaptive dense topology.
#[derive(Debug, Clone)]
pub struct Adrb {
    pub units: Vec<ConvUnit>,
    pub topology: AdaptiveDense,
}

impl Adrb {
    pub(crate) fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let units = (0..cfg.n_units_per_adrb)
            .map(|i| ConvUnit::build(b, &format!("{name}.unit.{i}"), cfg))
            .collect::<Result<Vec<_>>>()?;
        let topology = AdaptiveDense::build(b, name, cfg.n_units_per_adrb, cfg)?;
        Ok(Adrb { units, topology })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        g.scoped(|g| self.topology.forward(g, store, x, |i, g, v| self.units[i].forward(g, store, v)))
    }
}

/// Adaptive dense residual unit: ADRBs in the same topology.
#[derive(Debug, Clone)]
pub struct Adru {
    pub blocks: Vec<Adrb>,
    pub topology: AdaptiveDense,
}

impl Adru {
    pub(crate) fn build<T: Real>(b: &mut Builder<'_, T>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let blocks = (0..cfg.n_adrb_per_adru)
            .map(|j| Adrb::build(b, &format!("{name}.adrb.{j}"), cfg))
            .collect::<Result<Vec<_>>>()?;
        let topology = AdaptiveDense::build(b, name, cfg.n_adrb_per_adru, cfg)?;
        Ok(Adru { blocks, topology })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        g.scoped(|g| self.topology.forward(g, store, x, |j, g, v| self.blocks[j].forward(g, store, v)))
    }

    pub fn coefficient_ids(&self) -> Vec<ParamId> {
        let mut ids: Vec<_> = self.topology.coeffs.ids().collect();
        for b in &self.blocks {
            ids.extend(b.topology.coeffs.ids());
        }
        ids
    }
}
