//! Vector-field handles.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

/// A map `R^dim_in -> R^dim_out`.
pub trait VectorField: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval_into(&self, x: &[f64], out: &mut [f64]);

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = vec![0.0; self.dim_out()];
        self.eval_into(x.as_slice(), &mut out);
        DVector::from_vec(out)
    }
}

pub type FieldRef = Arc<dyn VectorField>;

/// A vector field backed by a closure.
pub struct FnField<F> {
    dim_in: usize,
    dim_out: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim_in: usize, dim_out: usize, f: F) -> Self {
        Self { dim_in, dim_out, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dim_in(&self) -> usize {
        self.dim_in
    }

    fn dim_out(&self) -> usize {
        self.dim_out
    }

    fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        (self.f)(x, out)
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnField({} -> {})", self.dim_in, self.dim_out)
    }
}

pub fn field_fn<F>(dim_in: usize, dim_out: usize, f: F) -> FieldRef
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
{
    Arc::new(FnField::new(dim_in, dim_out, f))
}

/// The affine map `x -> A x + c`.
pub fn affine_field(a: nalgebra::DMatrix<f64>, c: DVector<f64>) -> FieldRef {
    let (m, n) = a.shape();
    field_fn(n, m, move |x, out| {
        for i in 0..m {
            let mut acc = c[i];
            for j in 0..n {
                acc += a[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    })
}
