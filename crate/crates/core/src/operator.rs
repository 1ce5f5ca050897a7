//! Linear operators acting on grid functions.

use crate::error::Result;
use crate::grid::{GridFunction, GridSpec};

/// A bounded linear map on the functions of one grid, with its adjoint
/// taken against the grid inner product.
pub trait GridOperator {
    fn spec(&self) -> GridSpec;

    fn apply(&self, f: &GridFunction) -> Result<GridFunction>;

    fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction>;

    /// `<T f, g>`: linear in `f`, antilinear in `g`.
    fn pairing(&self, f: &GridFunction, g: &GridFunction) -> Result<num_complex::Complex64> {
        self.apply(f)?.inner_product(g)
    }
}

/// The zero map on a grid.
#[derive(Clone, Copy, Debug)]
pub struct ZeroOperator(pub GridSpec);

impl GridOperator for ZeroOperator {
    fn spec(&self) -> GridSpec {
        self.0
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        check_spec(self.0, f)?;
        Ok(GridFunction::zeros(self.0))
    }

    fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction> {
        self.apply(f)
    }
}

/// `T*` as an operator in its own right.
#[derive(Clone, Debug)]
pub struct Adjoint<T>(pub T);

impl<T: GridOperator> GridOperator for Adjoint<T> {
    fn spec(&self) -> GridSpec {
        self.0.spec()
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        self.0.apply_adjoint(f)
    }

    fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction> {
        self.0.apply(f)
    }
}

impl<T: GridOperator + ?Sized> GridOperator for &T {
    fn spec(&self) -> GridSpec {
        (**self).spec()
    }

    fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        (**self).apply(f)
    }

    fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction> {
        (**self).apply_adjoint(f)
    }
}

pub(crate) fn check_spec(spec: GridSpec, f: &GridFunction) -> Result<()> {
    if f.spec() != spec {
        return Err(crate::LagomError::SpecMismatch);
    }
    Ok(())
}
