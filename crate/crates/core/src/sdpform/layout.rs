use std::ops::Range;

/// Index map of the moment matrix `P = v v^T` with `v = (1, x_0, ..., x_L)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableLayout {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl VariableLayout {
    /// `sizes` are `n_0, ..., n_L`.
    pub fn new(sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut next = 1;
        for &n in sizes {
            offsets.push(next);
            next += n;
        }
        Self { sizes: sizes.to_vec(), offsets }
    }

    /// Position of the constant entry.
    pub const fn one(&self) -> usize {
        0
    }

    pub fn index(&self, layer: usize, neuron: usize) -> usize {
        debug_assert!(neuron < self.sizes[layer]);
        self.offsets[layer] + neuron
    }

    pub fn range(&self, layer: usize) -> Range<usize> {
        self.offsets[layer]..self.offsets[layer] + self.sizes[layer]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> usize {
        self.sizes.len()
    }

    pub fn dim(&self) -> usize {
        1 + self.sizes.iter().sum::<usize>()
    }
}
