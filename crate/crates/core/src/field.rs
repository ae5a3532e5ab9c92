//! Closed-form scalar fields on `R^d`.

use std::fmt;

/// A scalar field evaluated at physical points.
pub trait ScalarField: Send + Sync {
    fn eval(&self, x: &[f64]) -> f64;

    /// Gradient by central differences with a step relative to `|x|`.
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut probe = x.to_vec();
        for j in 0..x.len() {
            let step = 1e-6 * (1.0 + x[j].abs());
            probe[j] = x[j] + step;
            let plus = self.eval(&probe);
            probe[j] = x[j] - step;
            let minus = self.eval(&probe);
            probe[j] = x[j];
            out[j] = (plus - minus) / (2.0 * step);
        }
    }
}

/// A named closure-backed field.
pub struct FnField<F> {
    pub id: String,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    pub fn new(id: impl Into<String>, f: F) -> Self {
        Self { id: id.into(), f }
    }
}

impl<F> ScalarField for FnField<F>
where
    F: Fn(&[f64]) -> f64 + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

impl<F> fmt::Debug for FnField<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnField").field("id", &self.id).finish()
    }
}

/// Boxed field with an identifier, the unit of the function catalogs.
pub struct NamedField {
    pub id: String,
    pub field: Box<dyn ScalarField>,
}

impl NamedField {
    pub fn new<F>(id: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let id = id.into();
        Self {
            field: Box::new(FnField::new(id.clone(), f)),
            id,
        }
    }
}

impl fmt::Debug for NamedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NamedField").field("id", &self.id).finish()
    }
}

impl ScalarField for NamedField {
    fn eval(&self, x: &[f64]) -> f64 {
        self.field.eval(x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.field.gradient(x, out)
    }
}
