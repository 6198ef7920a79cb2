//! Per-layer activation boxes via interval bound propagation.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Closed box `[lower, upper]` for one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Interval {
    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.len()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l - tol && v <= u + tol)
    }
}

/// Boxes `(l_i, u_i)` for `i = 0..=L`. Index 0 is the input box; the rest
/// hold post-ReLU bounds of the hidden layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerBounds {
    pub boxes: Vec<Interval>,
}

impl LayerBounds {
    pub fn layer(&self, i: usize) -> &Interval {
        &self.boxes[i]
    }

    pub fn input(&self) -> &Interval {
        &self.boxes[0]
    }

    pub fn check_shapes(&self, net: &Network) -> Result<()> {
        let sizes = net.layer_sizes();
        if self.boxes.len() != sizes.len() {
            return Err(Error::Shape(format!(
                "bounds cover {} layers, network has {}",
                self.boxes.len(),
                sizes.len()
            )));
        }
        for (i, (b, &n)) in self.boxes.iter().zip(&sizes).enumerate() {
            if b.lower.len() != n || b.upper.len() != n {
                return Err(Error::Shape(format!("bounds for layer {i} do not have length {n}")));
            }
        }
        Ok(())
    }

    /// Keeps only the listed neuron indices of every layer.
    pub(crate) fn select(&self, keep: &[Vec<usize>]) -> LayerBounds {
        let boxes = self
            .boxes
            .iter()
            .zip(keep)
            .map(|(b, idx)| Interval {
                lower: idx.iter().map(|&j| b.lower[j]).collect(),
                upper: idx.iter().map(|&j| b.upper[j]).collect(),
            })
            .collect();
        LayerBounds { boxes }
    }
}

/// `l_0 = center - radius`, `u_0 = center + radius` element-wise.
pub fn input_box(center: &[f64], radius: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::Radius(radius));
    }
    if center.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("input center has a non-finite entry".into()));
    }
    let lower = center.iter().map(|c| c - radius).collect();
    let upper = center.iter().map(|c| c + radius).collect();
    Ok((lower, upper))
}

/// Interval bound propagation through the hidden layers.
///
/// Pre-activation bounds are `[W+ l + W- u + b, W+ u + W- l + b]`; hidden
/// boxes store the ReLU image of that interval.
pub fn propagate(net: &Network, lower: &[f64], upper: &[f64]) -> Result<LayerBounds> {
    let n0 = net.input_dim();
    if lower.len() != n0 || upper.len() != n0 {
        return Err(Error::Dimension { expected: n0, got: lower.len().min(upper.len()) });
    }
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return Err(Error::Value("input box has lower > upper".into()));
    }
    let mut boxes = vec![Interval { lower: lower.to_vec(), upper: upper.to_vec() }];
    for layer in &net.layers()[..net.depth()] {
        let prev = boxes.last().expect("input box present");
        let l = DVector::from_column_slice(&prev.lower);
        let u = DVector::from_column_slice(&prev.upper);
        let pos = layer.weight.map(|w| w.max(0.0));
        let neg = layer.weight.map(|w| w.min(0.0));
        let pre_lower = &pos * &l + &neg * &u + &layer.bias;
        let pre_upper = &pos * &u + &neg * &l + &layer.bias;
        boxes.push(Interval {
            lower: pre_lower.iter().map(|v| v.max(0.0)).collect(),
            upper: pre_upper.iter().map(|v| v.max(0.0)).collect(),
        });
    }
    Ok(LayerBounds { boxes })
}

/// Input box followed by propagation.
pub fn bounds_for(net: &Network, center: &[f64], radius: f64) -> Result<LayerBounds> {
    if center.len() != net.input_dim() {
        return Err(Error::Dimension { expected: net.input_dim(), got: center.len() });
    }
    let (l, u) = input_box(center, radius)?;
    propagate(net, &l, &u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn input_box_formula() {
        let (l, u) = input_box(&[1.0, -1.0], 0.5).unwrap();
        assert_eq!(l, vec![0.5, -1.5]);
        assert_eq!(u, vec![1.5, -0.5]);
        let (l, u) = input_box(&[0.0; 3], 1.0).unwrap();
        assert_eq!(l, vec![-1.0; 3]);
        assert_eq!(u, vec![1.0; 3]);
        assert!(matches!(input_box(&[1.0], 0.0), Err(Error::Radius(_))));
        assert!(input_box(&[1.0], -0.1).is_err());
    }

    #[test]
    fn single_neuron_cases() {
        let pos = Network::from_rows(&[(vec![vec![1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]).unwrap();
        let b = propagate(&pos, &[0.5], &[1.5]).unwrap();
        assert_eq!(b.layer(1).lower, vec![0.5]);
        assert_eq!(b.layer(1).upper, vec![1.5]);

        let neg = Network::from_rows(&[(vec![vec![-1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]).unwrap();
        let b = propagate(&neg, &[0.5], &[1.5]).unwrap();
        assert_eq!(b.layer(1).lower, vec![0.0]);
        assert_eq!(b.layer(1).upper, vec![0.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = Network::from_rows(&[(vec![vec![1.0, 1.0]], vec![0.0]), (vec![vec![1.0]], vec![0.0])]).unwrap();
        assert!(propagate(&net, &[0.0], &[1.0]).is_err());
    }

    #[test]
    fn monte_carlo_containment() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let net = Network::random(3, &[5, 4], 2, &mut rng).unwrap();
        let center = [0.2, -0.4, 0.7];
        let bounds = bounds_for(&net, &center, 0.3).unwrap();
        for _ in 0..1000 {
            let x: Vec<f64> = center.iter().map(|c| c + rng.random_range(-0.3..=0.3)).collect();
            let acts = net.trace(&x).unwrap();
            for i in 0..=net.depth() {
                assert!(bounds.layer(i).contains(acts[i].as_slice(), 1e-12), "layer {i} escaped its box");
            }
        }
    }

    proptest! {
        #[test]
        fn shrinking_radius_never_widens(seed in 0u64..500, r in 0.01f64..1.0, shrink in 0.05f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Network::random(2, &[3, 3], 2, &mut rng).unwrap();
            let center = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let wide = bounds_for(&net, &center, r).unwrap();
            let narrow = bounds_for(&net, &center, r * shrink).unwrap();
            for (w, n) in wide.boxes.iter().zip(&narrow.boxes) {
                for j in 0..w.len() {
                    prop_assert!(n.lower[j] >= w.lower[j] - 1e-12);
                    prop_assert!(n.upper[j] <= w.upper[j] + 1e-12);
                }
            }
        }
    }
}
