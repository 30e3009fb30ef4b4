use crate::backbone::weights::BackboneWeights;
use crate::backbone::layers::GruGrads;
use crate::error::{first_non_finite, Result, TvfError};
use crate::tensor::Tensor;

/// Cotangents for every backbone tensor, in the same order and shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub tensors: Vec<Tensor>,
}

impl GradientBundle {
    pub fn zeros_like(weights: &BackboneWeights) -> Self {
        GradientBundle {
            tensors: weights
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    pub fn add_assign(&mut self, other: &GradientBundle) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            crate::tensor::axpy(1.0, &b.data, &mut a.data);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|&v| v == 0.0))
    }

    /// Errors on the first non-finite entry, naming its tensor.
    pub fn check_finite(&self) -> Result<()> {
        for t in &self.tensors {
            if let Some(i) = first_non_finite(&t.data) {
                return Err(TvfError::non_finite(format!("gradient of '{}'", t.name), i));
            }
        }
        Ok(())
    }

    pub(crate) fn pair_mut(&mut self, w: usize, b: usize) -> (&mut [f64], &mut [f64]) {
        debug_assert_eq!(b, w + 1);
        let (lo, hi) = self.tensors.split_at_mut(b);
        (&mut lo[w].data, &mut hi[0].data)
    }

    pub(crate) fn gru_mut(&mut self, ids: [usize; 4]) -> GruGrads<'_> {
        match &mut self.tensors[ids[0]..ids[0] + 4] {
            [a, b, c, d] => GruGrads {
                w_ih: &mut a.data,
                w_hh: &mut b.data,
                b_ih: &mut c.data,
                b_hh: &mut d.data,
            },
            _ => unreachable!("four consecutive GRU tensors"),
        }
    }
}
