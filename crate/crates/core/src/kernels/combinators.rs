use std::fmt;
use std::sync::Arc;

use super::{Location, MatrixKernel, ScalarKernel};
use crate::Mat3;

/// `k ≡ 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Zero;

impl ScalarKernel for Zero {
    fn eval(&self, _: &Location, _: &Location) -> f64 {
        0.0
    }
}

impl MatrixKernel for Zero {
    fn eval(&self, _: &Location, _: &Location) -> Mat3 {
        Mat3::zeros()
    }
}

#[derive(Debug, Clone)]
pub struct Sum(pub Arc<dyn ScalarKernel>, pub Arc<dyn ScalarKernel>);

impl ScalarKernel for Sum {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.0.eval(x, y) + self.1.eval(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct Scaled(pub f64, pub Arc<dyn ScalarKernel>);

impl ScalarKernel for Scaled {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.0 * self.1.eval(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct Product(pub Arc<dyn ScalarKernel>, pub Arc<dyn ScalarKernel>);

impl ScalarKernel for Product {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        self.0.eval(x, y) * self.1.eval(x, y)
    }
}

/// `k(x,x′) = f(x) f(x′)`.
#[derive(Clone)]
pub struct Outer {
    f: Arc<dyn Fn(&Location) -> f64 + Send + Sync>,
}

impl Outer {
    pub fn new(f: impl Fn(&Location) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f) }
    }
}

impl fmt::Debug for Outer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Outer(<fn>)")
    }
}

impl ScalarKernel for Outer {
    fn eval(&self, x: &Location, y: &Location) -> f64 {
        (self.f)(x) * (self.f)(y)
    }
}

/// `k(x,x′) · I₃`.
#[derive(Debug, Clone)]
pub struct Isotropic(pub Arc<dyn ScalarKernel>);

impl MatrixKernel for Isotropic {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        Mat3::identity() * self.0.eval(x, y)
    }

    fn scalar_part(&self) -> Option<Arc<dyn ScalarKernel>> {
        Some(self.0.clone())
    }
}

#[derive(Debug, Clone)]
pub struct MatrixSum(pub Arc<dyn MatrixKernel>, pub Arc<dyn MatrixKernel>);

impl MatrixKernel for MatrixSum {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        self.0.eval(x, y) + self.1.eval(x, y)
    }
}

#[derive(Debug, Clone)]
pub struct MatrixScaled(pub f64, pub Arc<dyn MatrixKernel>);

impl MatrixKernel for MatrixScaled {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        self.1.eval(x, y) * self.0
    }

    fn scalar_part(&self) -> Option<Arc<dyn ScalarKernel>> {
        self.1.scalar_part().map(|s| Arc::new(Scaled(self.0, s)) as Arc<dyn ScalarKernel>)
    }
}

/// Matrix kernel multiplied elementwise by a scalar kernel; the Gram is a
/// Hadamard product of PSD matrices and hence PSD.
#[derive(Debug, Clone)]
pub struct Modulated(pub Arc<dyn MatrixKernel>, pub Arc<dyn ScalarKernel>);

impl MatrixKernel for Modulated {
    fn eval(&self, x: &Location, y: &Location) -> Mat3 {
        self.0.eval(x, y) * self.1.eval(x, y)
    }

    fn scalar_part(&self) -> Option<Arc<dyn ScalarKernel>> {
        self.0.scalar_part().map(|s| Arc::new(Product(s, self.1.clone())) as Arc<dyn ScalarKernel>)
    }
}
