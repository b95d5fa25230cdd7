//! Coefficient fields: scalar and vector functions of a spatial point.
//!
//! Assembly, KL expansions and benchmark definitions all exchange
//! coefficients through these two traits, so plain closures work everywhere.

/// Scalar-valued coefficient field a(x).
pub trait ScalarField: Sync {
    fn eval(&self, x: [f64; 2]) -> f64;
}

/// Vector-valued coefficient field b(x).
pub trait VectorField: Sync {
    fn eval(&self, x: [f64; 2]) -> [f64; 2];
}

impl<F: Fn([f64; 2]) -> f64 + Sync> ScalarField for F {
    fn eval(&self, x: [f64; 2]) -> f64 {
        self(x)
    }
}

impl<F: Fn([f64; 2]) -> [f64; 2] + Sync> VectorField for F {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        self(x)
    }
}

/// The identically-zero scalar field.
pub fn zero_scalar() -> impl ScalarField {
    |_x: [f64; 2]| 0.0
}

/// The identically-zero vector field.
pub fn zero_vector() -> impl VectorField {
    |_x: [f64; 2]| [0.0, 0.0]
}

/// A constant scalar field.
pub fn constant(c: f64) -> impl ScalarField {
    move |_x: [f64; 2]| c
}

/// A constant vector field.
pub fn constant_vector(v: [f64; 2]) -> impl VectorField {
    move |_x: [f64; 2]| v
}
