//! Row-major n-dimensional tensors and trainable parameters.

use crate::linalg::Matrix;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T> Default for Tensor<T> {
    fn default() -> Self {
        Self {
            shape: vec![0],
            data: Vec::new(),
        }
    }
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![T::ZERO; shape.iter().product()],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Same data, new shape; element count must match.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(self.data.len(), shape.iter().product::<usize>());
        self.shape = shape.to_vec();
        self
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|x| *x = value);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }
}

/// How a rank ≥ 2 parameter maps onto its P×N component matrix
/// (one column per component).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComponentLayout {
    /// Tensor is (N, P) row-major: each component's parameters are one
    /// contiguous slice (convolution filters).
    FilterRows,
    /// Tensor is already (P, N) row-major (dense weights stored
    /// input-major, so columns are output units).
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReshapeRule {
    pub p: usize,
    pub n: usize,
    pub layout: ComponentLayout,
}

/// A trainable tensor with its gradient, component-matrix mapping and
/// orthogonalisation eligibility (rank ≥ 2 tensors only).
#[derive(Debug, Clone)]
pub struct ParamTensor<T> {
    pub name: String,
    pub data: Tensor<T>,
    pub grad: Tensor<T>,
    pub reshape: Option<ReshapeRule>,
    pub is_dense: bool,
}

impl<T: Real> ParamTensor<T> {
    pub fn new(name: impl Into<String>, shape: &[usize], reshape: Option<ReshapeRule>, is_dense: bool) -> Self {
        let data = Tensor::zeros(shape);
        if let Some(rule) = &reshape {
            assert!(shape.len() >= 2, "component reshape requires rank >= 2");
            assert_eq!(rule.p * rule.n, data.len(), "P*N must equal element count");
        } else {
            assert!(shape.len() < 2, "rank >= 2 tensors must carry a reshape rule");
        }
        Self {
            name: name.into(),
            grad: Tensor::zeros(shape),
            data,
            reshape,
            is_dense,
        }
    }

    /// Gradient as its 64-bit P×N component matrix.
    pub fn grad_component_matrix(&self) -> Option<Matrix> {
        let rule = self.reshape?;
        let g = self.grad.data();
        let mut out = vec![0.0f64; rule.p * rule.n];
        match rule.layout {
            ComponentLayout::FilterRows => {
                // g[(n, p)] -> out[(p, n)]
                for n in 0..rule.n {
                    let src = &g[n * rule.p..(n + 1) * rule.p];
                    for (p, &v) in src.iter().enumerate() {
                        out[p * rule.n + n] = v.to_f64();
                    }
                }
            }
            ComponentLayout::Direct => {
                for (o, &v) in out.iter_mut().zip(g.iter()) {
                    *o = v.to_f64();
                }
            }
        }
        Some(Matrix::from_vec_unchecked(rule.p, rule.n, out))
    }

    /// Write a P×N component matrix back into the gradient's native layout.
    pub fn set_grad_from_component_matrix(&mut self, m: &Matrix) {
        let rule = self.reshape.expect("reshape rule present");
        assert_eq!(m.shape(), (rule.p, rule.n));
        let g = self.grad.data_mut();
        match rule.layout {
            ComponentLayout::FilterRows => {
                for n in 0..rule.n {
                    let dst = &mut g[n * rule.p..(n + 1) * rule.p];
                    for (p, slot) in dst.iter_mut().enumerate() {
                        *slot = T::from_f64(m.get(p, n));
                    }
                }
            }
            ComponentLayout::Direct => {
                for (slot, &v) in g.iter_mut().zip(m.data().iter()) {
                    *slot = T::from_f64(v);
                }
            }
        }
    }
}
