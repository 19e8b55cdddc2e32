//! The map from activation space to class logits.

use crate::error::{Error, Result};
use crate::io::protocol::ExternalHead;
use crate::model::ActivationMatrix;
use crate::numerics::Matrix;
use crate::scalar::Scalar;

/// `x ↦ x W + b` with `W` of shape `inputs × outputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLayer<T> {
    weights: Matrix<T>,
    bias: Vec<T>,
}

impl<T: Scalar> AffineLayer<T> {
    pub fn new(weights: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if bias.len() != weights.cols() {
            return Err(Error::shape(format!(
                "bias has {} entries, weights have {} outputs",
                bias.len(),
                weights.cols()
            )));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("bias contains non-finite values"));
        }
        Ok(Self { weights, bias })
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix<T> {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn apply(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = x.matmul(&self.weights)?;
        for i in 0..out.rows() {
            for (o, &b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub enum HeadKind<T> {
    Affine(AffineLayer<T>),
    /// Affine layers with a rectifier between consecutive layers (none after
    /// the last).
    Stack(Vec<AffineLayer<T>>),
    External(ExternalHead),
}

/// A classifier head together with the class whose logit is explained.
#[derive(Debug)]
pub struct Head<T> {
    kind: HeadKind<T>,
    target: usize,
}

/// Full logits and the selected target column.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadOutput<T> {
    pub logits: Matrix<T>,
    pub target: Vec<T>,
}

impl<T: Scalar> Head<T> {
    pub fn affine(layer: AffineLayer<T>, target: usize) -> Result<Self> {
        Self::checked(HeadKind::Affine(layer), target)
    }

    pub fn stack(layers: Vec<AffineLayer<T>>, target: usize) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("stack head needs at least one layer"));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].outputs() != w[1].inputs() {
                return Err(Error::shape(format!(
                    "stack layer {i} emits {} values but layer {} takes {}",
                    w[0].outputs(),
                    i + 1,
                    w[1].inputs()
                )));
            }
        }
        Self::checked(HeadKind::Stack(layers), target)
    }

    pub fn external(head: ExternalHead, target: usize) -> Result<Self> {
        Self::checked(HeadKind::External(head), target)
    }

    fn checked(kind: HeadKind<T>, target: usize) -> Result<Self> {
        let head = Self { kind, target };
        if target >= head.classes() {
            return Err(Error::invalid(format!(
                "target class {target} out of range for {} classes",
                head.classes()
            )));
        }
        Ok(head)
    }

    pub fn kind(&self) -> &HeadKind<T> {
        &self.kind
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn input_dim(&self) -> usize {
        match &self.kind {
            HeadKind::Affine(l) => l.inputs(),
            HeadKind::Stack(ls) => ls[0].inputs(),
            HeadKind::External(e) => e.input_dim(),
        }
    }

    pub fn classes(&self) -> usize {
        match &self.kind {
            HeadKind::Affine(l) => l.outputs(),
            HeadKind::Stack(ls) => ls.last().expect("non-empty").outputs(),
            HeadKind::External(e) => e.classes(),
        }
    }

    /// Target-class weight column and bias when the head is a single affine map.
    pub fn affine_target(&self) -> Option<(Vec<T>, T)> {
        match &self.kind {
            HeadKind::Affine(l) => Some((l.weights.col(self.target), l.bias[self.target])),
            _ => None,
        }
    }

    /// Logits for every row of `x` (`n × p`).
    pub fn logits(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "head expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let out = match &self.kind {
            HeadKind::Affine(l) => l.apply(x)?,
            HeadKind::Stack(layers) => {
                let mut h = layers[0].apply(x)?;
                for l in &layers[1..] {
                    h = l.apply(&h.map(|v| v.max(T::zero())))?;
                }
                h
            }
            HeadKind::External(e) => {
                if x.rows() == 0 {
                    return Ok(Matrix::zeros(0, e.classes()));
                }
                let rows: Vec<Vec<f64>> = x
                    .row_iter()
                    .map(|r| r.iter().map(|v| v.to_f64_lossless()).collect())
                    .collect();
                let logits = e.evaluate(&rows)?;
                let flat = logits.into_iter().flatten().map(T::lit).collect();
                Matrix::from_vec_unchecked(x.rows(), e.classes(), flat)
            }
        };
        for i in 0..out.rows() {
            if out.row(i).iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteOutput(i));
            }
        }
        Ok(out)
    }

    /// Target-class logit for every row of `x`.
    pub fn target_logits(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if let HeadKind::Affine(l) = &self.kind {
            if x.cols() != l.inputs() {
                return Err(Error::shape(format!("head expects {} inputs, got {}", l.inputs(), x.cols())));
            }
            let w = l.weights.col(self.target);
            let b = l.bias[self.target];
            let out: Vec<T> = x.mul_vec(&w)?.into_iter().map(|v| v + b).collect();
            if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteOutput(i));
            }
            return Ok(out);
        }
        Ok(self.logits(x)?.col(self.target))
    }

    pub fn evaluate(&self, x: &Matrix<T>) -> Result<HeadOutput<T>> {
        let logits = self.logits(x)?;
        let target = logits.col(self.target);
        Ok(HeadOutput { logits, target })
    }
}

/// Runs `head` on every activation row.
pub fn evaluate_head<T: Scalar>(head: &Head<T>, activations: &ActivationMatrix<T>) -> Result<HeadOutput<T>> {
    head.evaluate(activations.values())
}
