use super::{expect_arity, Op, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Op for Identity {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        Ok(inputs[0].to_vec())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        inputs[0].clone()
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        vec![upstream.clone()]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        tangents[0].clone()
    }
}

/// Reinterprets the row-major data under another shape.
#[derive(Debug, Clone)]
pub struct Reshape {
    shape: Vec<usize>,
}

impl Reshape {
    pub fn new(shape: Vec<usize>) -> Self {
        Reshape { shape }
    }
}

impl Op for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, 1)?;
        let from: usize = inputs[0].iter().product();
        let to: usize = self.shape.iter().product();
        if from != to {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                inputs[0], self.shape
            )));
        }
        Ok(self.shape.clone())
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        Tensor::from_parts(self.shape.clone(), inputs[0].data().to_vec())
    }

    fn backward(&self, inputs: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        vec![Tensor::from_parts(inputs[0].shape().to_vec(), upstream.data().to_vec())]
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        Tensor::from_parts(self.shape.clone(), tangents[0].data().to_vec())
    }
}

/// `Σ wᵢ·xᵢ` over scalar inputs.
#[derive(Debug, Clone)]
pub struct WeightedSum {
    weights: Vec<f64>,
}

impl WeightedSum {
    pub fn new(weights: Vec<f64>) -> Self {
        WeightedSum { weights }
    }
}

impl Op for WeightedSum {
    fn name(&self) -> &'static str {
        "weighted_sum"
    }

    fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        expect_arity(self.name(), inputs, self.weights.len())?;
        if let Some(s) = inputs.iter().find(|s| **s != [1]) {
            return Err(Error::Shape(format!("weighted_sum needs scalar inputs, got {s:?}")));
        }
        Ok(vec![1])
    }

    fn forward(&self, inputs: &[&Tensor]) -> Tensor {
        let s = inputs.iter().zip(&self.weights).map(|(x, w)| w * x.data()[0]).sum();
        Tensor::scalar(s)
    }

    fn backward(&self, _: &[&Tensor], _: &Tensor, upstream: &Tensor) -> Vec<Tensor> {
        let u = upstream.data()[0];
        self.weights.iter().map(|w| Tensor::scalar(w * u)).collect()
    }

    fn jvp(&self, _: &[&Tensor], _: &Tensor, tangents: &[&Tensor]) -> Tensor {
        Tensor::scalar(tangents.iter().zip(&self.weights).map(|(t, w)| w * t.data()[0]).sum())
    }
}
