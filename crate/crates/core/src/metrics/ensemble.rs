//! The eight dihedral transforms and test-time self-ensembling.

use crate::error::{shape_err, Result};
use crate::tensor::{Real, Tensor};

pub const N_TRANSFORMS: usize = 8;

/// Transform `t` is a horizontal flip (for `t >= 4`) followed by `t % 4`
/// counter-clockwise quarter turns, applied to every channel.
pub fn dihedral<T: Real>(t: usize, x: &Tensor<T>) -> Tensor<T> {
    let flipped = if t >= 4 { flip(x) } else { x.clone() };
    rotate(&flipped, t % 4)
}

pub fn dihedral_inverse<T: Real>(t: usize, y: &Tensor<T>) -> Tensor<T> {
    let unrotated = rotate(y, (4 - t % 4) % 4);
    if t >= 4 {
        flip(&unrotated)
    } else {
        unrotated
    }
}

fn flip<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let w = x.w();
    Tensor::from_fn(x.shape(), |[n, c, y, i]| x.at([n, c, y, w - 1 - i]))
}

fn rotate<T: Real>(x: &Tensor<T>, quarters: usize) -> Tensor<T> {
    let mut cur = x.clone();
    for _ in 0..quarters {
        let [n, c, h, w] = cur.shape();
        let src = cur;
        cur = Tensor::from_fn([n, c, w, h], |[b, ch, i, j]| src.at([b, ch, j, w - 1 - i]));
    }
    cur
}

/// Averages `f` over all eight transforms, undoing each on the output.
pub fn self_ensemble<T: Real>(x: &Tensor<T>, f: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>) -> Result<Tensor<T>> {
    self_ensemble_ordered(x, &[0, 1, 2, 3, 4, 5, 6, 7], f)
}

/// [`self_ensemble`] with an explicit transform order.
pub fn self_ensemble_ordered<T: Real>(
    x: &Tensor<T>,
    order: &[usize],
    mut f: impl FnMut(&Tensor<T>) -> Result<Tensor<T>>,
) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for &t in order {
        let y = dihedral_inverse(t, &f(&dihedral(t, x))?);
        match acc.as_mut() {
            None => acc = Some(y),
            Some(a) => a.add_assign(&y)?,
        }
    }
    let acc = acc.ok_or_else(|| shape_err!("empty transform list"))?;
    let k = T::lit(order.len() as f64);
    Ok(acc.map(|v| v / k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Tensor<f64> {
        Tensor::from_fn([2, 3, 4, 5], |[n, c, y, x]| (n * 1000 + c * 100 + y * 10 + x) as f64)
    }

    #[test]
    fn round_trips_are_exact() {
        let x = sample();
        for t in 0..N_TRANSFORMS {
            assert_eq!(dihedral_inverse(t, &dihedral(t, &x)).data(), x.data(), "t={t}");
        }
    }

    #[test]
    fn transforms_are_distinct() {
        let x = Tensor::from_fn([1, 1, 3, 3], |[_, _, y, x]| (y * 3 + x) as f64);
        let outs: Vec<Vec<f64>> = (0..8).map(|t| dihedral(t, &x).into_vec()).collect();
        for i in 0..8 {
            for j in i + 1..8 {
                assert_ne!(outs[i], outs[j]);
            }
        }
    }

    #[test]
    fn quarter_turn_is_counter_clockwise() {
        let x = Tensor::from_vec([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(dihedral(1, &x).data(), &[2.0, 4.0, 1.0, 3.0]);
        let wide = Tensor::from_fn([1, 1, 2, 3], |[_, _, y, x]| (y * 3 + x) as f64);
        assert_eq!(dihedral(1, &wide).shape(), [1, 1, 3, 2]);
    }

    #[test]
    fn constant_model_gives_constant() {
        let x = Tensor::from_fn([1, 3, 4, 4], |[_, c, y, x]| (c + y * x) as f64);
        let out = self_ensemble(&x, |_| Ok(Tensor::full([1, 3, 8, 8], 42.0))).unwrap();
        assert!(out.data().iter().all(|&v| v == 42.0));
    }
}
