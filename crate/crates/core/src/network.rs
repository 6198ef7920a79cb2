//! Feed-forward ReLU classifiers.
//!
//! A [`Network`] with `L + 1` affine layers computes
//! `x_{i+1} = ReLU(W_i x_i + b_i)` for the `L` hidden layers and a plain
//! affine map `W_L x_L + b_L` for the output layer.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::bounds::LayerBounds;
use crate::error::{Error, Result};

/// One affine layer `x -> W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    pub fn new(weight: DMatrix<f64>, bias: DVector<f64>) -> Self {
        Self { weight, bias }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }

    /// The augmented matrix `(b W)` with the bias as first column.
    pub fn extended(&self) -> DMatrix<f64> {
        let mut ext = DMatrix::zeros(self.outputs(), self.inputs() + 1);
        ext.column_mut(0).copy_from(&self.bias);
        ext.columns_mut(1, self.inputs()).copy_from(&self.weight);
        ext
    }

    /// Euclidean norms of the rows of `(b W)`.
    pub fn extended_row_norms(&self) -> Vec<f64> {
        (0..self.outputs())
            .map(|j| {
                let w = self.weight.row(j).norm_squared();
                (w + self.bias[j] * self.bias[j]).sqrt()
            })
            .collect()
    }

    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.weight * x + &self.bias
    }
}

/// A validated feed-forward ReLU network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct RawLayer {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawNetwork {
    layers: Vec<RawLayer>,
}

impl Network {
    /// Validates shapes and values. At least one hidden layer is required.
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.len() < 2 {
            return Err(Error::Shape(format!(
                "need at least one hidden layer and an output layer, got {} layer(s)",
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weight.nrows() == 0 || layer.weight.ncols() == 0 {
                return Err(Error::Shape(format!("layer {i} has an empty weight matrix")));
            }
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::Shape(format!(
                    "layer {i}: bias has length {} but W has {} rows",
                    layer.bias.len(),
                    layer.weight.nrows()
                )));
            }
            if i > 0 && layer.weight.ncols() != layers[i - 1].weight.nrows() {
                return Err(Error::Shape(format!(
                    "layer {i}: W has {} columns but layer {} produces {} outputs",
                    layer.weight.ncols(),
                    i - 1,
                    layers[i - 1].weight.nrows()
                )));
            }
            let finite = layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Value(format!("layer {i} contains a non-finite entry")));
            }
        }
        Ok(Self { layers })
    }

    /// Builds a network from row-major weight rows and biases.
    pub fn from_rows(layers: &[(Vec<Vec<f64>>, Vec<f64>)]) -> Result<Self> {
        let built = layers
            .iter()
            .enumerate()
            .map(|(i, (rows, bias))| layer_from_rows(i, rows, bias))
            .collect::<Result<Vec<_>>>()?;
        Self::new(built)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> &Layer {
        &self.layers[i]
    }

    /// Number of hidden (ReLU) layers, `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.depth()].outputs()
    }

    /// `n_0, n_1, ..., n_L`: input width followed by each hidden width.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers[..self.depth()].iter().map(Layer::outputs))
            .collect()
    }

    pub fn hidden_neurons(&self) -> usize {
        self.layer_sizes()[1..].iter().sum()
    }

    pub fn output_layer(&self) -> &Layer {
        &self.layers[self.depth()]
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawNetwork = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let layers: Vec<_> = raw.layers.into_iter().map(|l| (l.w, l.b)).collect();
        Self::from_rows(&layers)
    }

    pub fn to_json_string(&self) -> String {
        let raw = RawNetwork {
            layers: self
                .layers
                .iter()
                .map(|l| RawLayer {
                    w: l.weight.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    b: l.bias.iter().copied().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("network serialization cannot fail")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string())?;
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension { expected: self.input_dim(), got: x.len() });
        }
        Ok(())
    }

    /// Activations `x_0, ..., x_L` followed by the network output.
    pub fn trace(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.check_input(x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(DVector::from_column_slice(x));
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = layer.apply(&acts[i]);
            if i < self.depth() {
                next.apply(|v| *v = v.max(0.0));
            }
            acts.push(next);
        }
        Ok(acts)
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        Ok(self.trace(x)?.pop().expect("trace is never empty"))
    }

    /// Arg-max label; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(self.forward(x)?.as_slice()))
    }

    /// Removes every hidden neuron whose post-activation upper bound is `<= 0`.
    ///
    /// Such neurons output zero everywhere on the input box, so the network
    /// function on the box is unchanged. The returned bounds are re-indexed to
    /// match the pruned network.
    pub fn prune_inactive(&self, bounds: &LayerBounds) -> Result<(Network, LayerBounds, PruneReport)> {
        bounds.check_shapes(self)?;
        let depth = self.depth();
        let mut keep: Vec<Vec<usize>> = vec![(0..self.input_dim()).collect()];
        let mut removed = Vec::new();
        for i in 1..=depth {
            let upper = &bounds.layer(i).upper;
            let kept: Vec<usize> = (0..upper.len()).filter(|&j| upper[j] > 0.0).collect();
            removed.extend((0..upper.len()).filter(|&j| upper[j] <= 0.0).map(|j| (i, j)));
            if kept.is_empty() {
                return Err(Error::EmptyLayer { layer: i });
            }
            keep.push(kept);
        }

        let original_sizes = self.layer_sizes();
        if removed.is_empty() {
            let report = PruneReport {
                removed,
                original_sizes: original_sizes.clone(),
                pruned_sizes: original_sizes,
            };
            return Ok((self.clone(), bounds.clone(), report));
        }

        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let cols = &keep[i];
                let rows: Vec<usize> = if i < depth { keep[i + 1].clone() } else { (0..layer.outputs()).collect() };
                let weight = DMatrix::from_fn(rows.len(), cols.len(), |r, c| layer.weight[(rows[r], cols[c])]);
                let bias = DVector::from_fn(rows.len(), |r, _| layer.bias[rows[r]]);
                Layer::new(weight, bias)
            })
            .collect();
        let pruned = Network::new(layers)?;
        let pruned_bounds = bounds.select(&keep);
        let report = PruneReport { removed, original_sizes, pruned_sizes: pruned.layer_sizes() };
        Ok((pruned, pruned_bounds, report))
    }

    /// Rescales hidden layers so that every hidden extended matrix has minimum
    /// row norm one, compensating in the output layer so `f` is unchanged.
    ///
    /// Layer `i` first has its bias divided by the product of the previous
    /// factors (ReLU is positively homogeneous, so this keeps the scaled
    /// activations proportional to the originals), then the whole extended
    /// matrix is divided by its minimum row norm `w_i`. The output weights are
    /// multiplied by the product of all factors; the output bias is untouched.
    pub fn w_scale(&self) -> Result<(Network, Vec<f64>)> {
        let depth = self.depth();
        let mut factors = Vec::with_capacity(depth);
        let mut cumulative = 1.0;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers[..depth].iter().enumerate() {
            let bias = if cumulative == 1.0 { layer.bias.clone() } else { &layer.bias / cumulative };
            let corrected = Layer::new(layer.weight.clone(), bias);
            let norms = corrected.extended_row_norms();
            if let Some(row) = norms.iter().position(|&n| n == 0.0) {
                return Err(Error::ZeroRow { layer: i, row });
            }
            let w = norms.iter().copied().fold(f64::INFINITY, f64::min);
            let scaled = if w == 1.0 {
                corrected
            } else {
                Layer::new(&corrected.weight / w, &corrected.bias / w)
            };
            layers.push(scaled);
            factors.push(w);
            cumulative *= w;
        }
        let out = self.output_layer();
        let weight = if cumulative == 1.0 { out.weight.clone() } else { &out.weight * cumulative };
        layers.push(Layer::new(weight, out.bias.clone()));
        Ok((Network::new(layers)?, factors))
    }

    /// Random fixture network: weights i.i.d. normal scaled by `1/sqrt(fan_in)`,
    /// biases uniform in `[-0.1, 0.1]`.
    pub fn random<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], output_dim: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || hidden.is_empty() || hidden.contains(&0) {
            return Err(Error::Shape("random network needs positive widths and at least one hidden layer".into()));
        }
        let bias_dist = Uniform::new_inclusive(-0.1, 0.1).expect("valid range");
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let scale = 1.0 / (fan_in as f64).sqrt();
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    z * scale
                });
                let bias = DVector::from_fn(fan_out, |_, _| bias_dist.sample(rng));
                Layer::new(weight, bias)
            })
            .collect();
        Network::new(layers)
    }
}

fn layer_from_rows(i: usize, rows: &[Vec<f64>], bias: &[f64]) -> Result<Layer> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::Shape(format!("layer {i}: row {bad} has inconsistent length")));
    }
    let weight = DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]);
    Ok(Layer::new(weight, DVector::from_column_slice(bias)))
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Record of neurons removed by [`Network::prune_inactive`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneReport {
    /// `(hidden layer index i >= 1, neuron index j)` in original numbering.
    pub removed: Vec<(usize, usize)>,
    pub original_sizes: Vec<usize>,
    pub pruned_sizes: Vec<usize>,
}

impl PruneReport {
    pub fn is_empty(&self) -> bool {
        self.removed.is_empty()
    }
}
