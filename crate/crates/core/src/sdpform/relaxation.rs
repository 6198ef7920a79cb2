//! Moment-matrix relaxations of the verification problem.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BlockSpec, Constraint, Family, SdpProblem, Sense, SparseBlockMatrix, VariableLayout};
use crate::bounds::LayerBounds;
use crate::error::{Error, Result};
use crate::network::Network;

pub const DEFAULT_EPSILON: f64 = 0.01;
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Constraint family used for the relaxation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Variant {
    /// Full relaxation: sign, lower, complementarity equality and box rows on every layer.
    Base,
    /// Complementarity equality widened to `[-eps, eps]`.
    Epsilon(f64),
    /// ReLU replaced by its leaky envelope with slope `alpha`.
    Leaky(f64),
    /// Box rows kept only for the input layer.
    BRemove,
    /// Complementarity rows dropped, box rows on every layer.
    ProblemA,
    /// Box rows only on the input layer (same feasible set as `BRemove`).
    ProblemB,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Base => "base",
            Variant::Epsilon(_) => "eps",
            Variant::Leaky(_) => "leaky",
            Variant::BRemove => "bremove",
            Variant::ProblemA => "problem-a",
            Variant::ProblemB => "problem-b",
        }
    }

    /// Every variant with default parameters.
    pub fn all() -> [Variant; 6] {
        [
            Variant::Base,
            Variant::Epsilon(DEFAULT_EPSILON),
            Variant::Leaky(DEFAULT_ALPHA),
            Variant::BRemove,
            Variant::ProblemA,
            Variant::ProblemB,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Variant::Epsilon(eps) if !(eps >= 0.0 && eps.is_finite()) => {
                Err(Error::Parameter(format!("epsilon must be finite and >= 0, got {eps}")))
            }
            Variant::Leaky(alpha) if !(alpha > 0.0 && alpha < 1.0) => {
                Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
            }
            _ => Ok(()),
        }
    }

    fn bounds_on(&self, layer: usize) -> bool {
        match self {
            Variant::BRemove | Variant::ProblemB => layer == 0,
            _ => true,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Accepts the variant name with an optional `=param`, e.g. `eps=0.05`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once('=') {
            Some((n, p)) => {
                let v: f64 = p.parse().map_err(|_| Error::Parameter(format!("bad variant parameter in {s:?}")))?;
                (n, Some(v))
            }
            None => (s, None),
        };
        let variant = match name {
            "base" => Variant::Base,
            "eps" | "epsilon" => Variant::Epsilon(param.unwrap_or(DEFAULT_EPSILON)),
            "leaky" => Variant::Leaky(param.unwrap_or(DEFAULT_ALPHA)),
            "bremove" => Variant::BRemove,
            "problem-a" => Variant::ProblemA,
            "problem-b" => Variant::ProblemB,
            _ => return Err(Error::Parameter(format!("unknown variant {s:?}"))),
        };
        variant.validate()?;
        Ok(variant)
    }
}

/// Linear objective `c^T x_L + c0` over the last hidden activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub c: Vec<f64>,
    pub offset: f64,
}

impl Margin {
    /// Margin of the predicted label over `target`:
    /// `c = W_L(pred,:) - W_L(target,:)`, `c0 = b_L(pred) - b_L(target)`.
    pub fn for_target(net: &Network, predicted: usize, target: usize) -> Result<Self> {
        let m = net.output_dim();
        if predicted >= m || target >= m {
            return Err(Error::Parameter(format!("label out of range for {m} outputs")));
        }
        if predicted == target {
            return Err(Error::TargetIsPrediction(target));
        }
        let out = net.output_layer();
        let c = (0..out.inputs()).map(|k| out.weight[(predicted, k)] - out.weight[(target, k)]).collect();
        Ok(Self { c, offset: out.bias[predicted] - out.bias[target] })
    }

    /// The network output coordinate `f(x)_k` itself.
    pub fn output(net: &Network, k: usize) -> Result<Self> {
        let out = net.output_layer();
        if k >= out.outputs() {
            return Err(Error::Parameter(format!("output {k} out of range")));
        }
        Ok(Self { c: out.weight.row(k).iter().copied().collect(), offset: out.bias[k] })
    }

    pub fn evaluate(&self, last_hidden: &[f64]) -> f64 {
        self.offset + self.c.iter().zip(last_hidden).map(|(c, x)| c * x).sum::<f64>()
    }
}

/// Relaxation for the margin of the predicted label over `target`.
///
/// The predicted label is taken at the center of the input box.
pub fn build_relaxation(net: &Network, bounds: &LayerBounds, target: usize, variant: Variant) -> Result<SdpProblem> {
    bounds.check_shapes(net)?;
    let input = bounds.input();
    let center: Vec<f64> = input.lower.iter().zip(&input.upper).map(|(l, u)| 0.5 * (l + u)).collect();
    let predicted = net.predict(&center)?;
    let margin = Margin::for_target(net, predicted, target)?;
    build_relaxation_with(net, bounds, &margin, variant)
}

/// Relaxation of `min margin(x_L)` over the lifted network constraints.
pub fn build_relaxation_with(net: &Network, bounds: &LayerBounds, margin: &Margin, variant: Variant) -> Result<SdpProblem> {
    variant.validate()?;
    bounds.check_shapes(net)?;
    let depth = net.depth();
    if margin.c.len() != net.layer_sizes()[depth] {
        return Err(Error::Dimension { expected: net.layer_sizes()[depth], got: margin.c.len() });
    }
    let layout = VariableLayout::new(&net.layer_sizes());
    let one = layout.one();
    let mut prob = SdpProblem::new(vec![BlockSpec::psd(layout.dim())]);

    for (k, &c) in margin.c.iter().enumerate() {
        prob.objective.add(0, one, layout.index(depth, k), 0.5 * c);
    }
    prob.offset = margin.offset;

    let mut norm = SparseBlockMatrix::new();
    norm.add(0, one, one, 1.0);
    prob.push(Constraint::new(norm, Sense::Eq, 1.0).tagged(Family::Normalization, 0, 0));

    push_bounds(&mut prob, &layout, bounds, 0);
    for i in 0..depth {
        let layer = net.layer(i);
        for k in 0..layer.outputs() {
            let a = layout.index(i + 1, k);
            let w: Vec<(usize, f64)> = (0..layer.inputs()).map(|l| (layout.index(i, l), layer.weight[(k, l)])).collect();
            let b = layer.bias[k];
            let tag = |c: Constraint| c.tagged(Family::Nonnegative, i + 1, k);

            // first-row entries: P[x_{i+1}]_k - s * (W P[x_i])_k
            let affine_lower = |slope: f64| {
                let mut m = SparseBlockMatrix::new();
                m.add(0, one, a, 0.5);
                for &(p, wv) in &w {
                    m.add(0, one, p, -0.5 * slope * wv);
                }
                m
            };
            let complement = || {
                let mut m = SparseBlockMatrix::new();
                m.add(0, a, a, 1.0);
                for &(p, wv) in &w {
                    m.add(0, p, a, -0.5 * wv);
                }
                m.add(0, one, a, -0.5 * b);
                m
            };

            match variant {
                Variant::Leaky(alpha) => {
                    prob.push(
                        Constraint::new(affine_lower(alpha), Sense::Ge, alpha * b).tagged(Family::LeakyLower, i + 1, k),
                    );
                }
                _ => {
                    let mut m = SparseBlockMatrix::new();
                    m.add(0, one, a, 0.5);
                    prob.push(tag(Constraint::new(m, Sense::Ge, 0.0)));
                }
            }
            prob.push(Constraint::new(affine_lower(1.0), Sense::Ge, b).tagged(Family::ReluLower, i + 1, k));
            let comp = |sense, rhs| Constraint::new(complement(), sense, rhs).tagged(Family::Complementarity, i + 1, k);
            match variant {
                Variant::Base | Variant::BRemove | Variant::ProblemB => prob.push(comp(Sense::Eq, 0.0)),
                Variant::Epsilon(eps) => {
                    prob.push(comp(Sense::Le, eps));
                    prob.push(comp(Sense::Ge, -eps));
                }
                Variant::Leaky(_) => prob.push(comp(Sense::Le, 0.0)),
                Variant::ProblemA => {}
            }
            if variant.bounds_on(i + 1) {
                push_bound_row(&mut prob, &layout, bounds, i + 1, k);
            }
        }
    }

    prob.meta.variant = variant.name().to_string();
    prob.meta.layout = Some(layout);
    prob.meta.slack_of = vec![None; prob.constraints.len()];
    Ok(prob)
}

fn push_bounds(prob: &mut SdpProblem, layout: &VariableLayout, bounds: &LayerBounds, layer: usize) {
    for k in 0..layout.sizes()[layer] {
        push_bound_row(prob, layout, bounds, layer, k);
    }
}

fn push_bound_row(prob: &mut SdpProblem, layout: &VariableLayout, bounds: &LayerBounds, layer: usize, k: usize) {
    let (l, u) = (bounds.layer(layer).lower[k], bounds.layer(layer).upper[k]);
    let a = layout.index(layer, k);
    let mut m = SparseBlockMatrix::new();
    m.add(0, a, a, 1.0);
    m.add(0, layout.one(), a, -0.5 * (l + u));
    prob.push(Constraint::new(m, Sense::Le, -l * u).tagged(Family::Bound, layer, k));
}
