//! Potentials φ entering the weighted length functional.

use nalgebra::DVector;

use crate::error::{LabError, Result};
use crate::models::ManifoldModel;
use crate::tensor::ScalarJet;

/// Choice of potential.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhiSpec {
    /// φ = c·R with c > 0.
    CTimesR(f64),
    /// φ ≡ c with c ≥ 0 (c = 0 gives ordinary geodesics).
    Constant(f64),
    /// φ = ½(1 + |x|²) in chart coordinates.
    HalfOnePlusNormSq,
    /// φ = a·R with any sign; only meaningful for the gradient-flow check.
    SignedR(f64),
}

impl PhiSpec {
    pub fn zero() -> Self {
        PhiSpec::Constant(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PhiSpec::CTimesR(c) if !(c > 0.0 && c.is_finite()) => {
                Err(LabError::Spec(format!("c must be positive, got {c}")))
            }
            PhiSpec::Constant(c) if !(c >= 0.0 && c.is_finite()) => {
                Err(LabError::Spec(format!("constant potential must be >= 0, got {c}")))
            }
            PhiSpec::SignedR(a) if !a.is_finite() => {
                Err(LabError::Spec(format!("non-finite scale {a}")))
            }
            _ => Ok(()),
        }
    }

    /// Reject the sign-unrestricted variant in the variational solvers.
    pub fn require_nonnegative(&self) -> Result<()> {
        self.validate()?;
        if let PhiSpec::SignedR(_) = self {
            return Err(LabError::Usage(
                "signed potentials are reserved for the gradient-flow check".into(),
            ));
        }
        Ok(())
    }

    /// `c` for φ = cR, `None` otherwise.
    pub fn c(&self) -> Option<f64> {
        match *self {
            PhiSpec::CTimesR(c) => Some(c),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            PhiSpec::CTimesR(c) => format!("{c}R"),
            PhiSpec::Constant(c) => format!("const{c}"),
            PhiSpec::HalfOnePlusNormSq => "half_one_plus_norm_sq".into(),
            PhiSpec::SignedR(a) => format!("{a}R"),
        }
    }

    pub fn value(&self, model: &ManifoldModel, x: &[f64]) -> f64 {
        match *self {
            PhiSpec::CTimesR(c) | PhiSpec::SignedR(c) => c * model.r_value(x),
            PhiSpec::Constant(c) => c,
            PhiSpec::HalfOnePlusNormSq => 0.5 * (1.0 + x.iter().map(|v| v * v).sum::<f64>()),
        }
    }

    /// Value and coordinate gradient.
    pub fn grad(&self, model: &ManifoldModel, x: &[f64]) -> (f64, DVector<f64>) {
        match *self {
            PhiSpec::CTimesR(c) | PhiSpec::SignedR(c) => {
                let (r, dr) = model.r_grad(x);
                (c * r, dr * c)
            }
            PhiSpec::Constant(c) => (c, DVector::zeros(x.len())),
            PhiSpec::HalfOnePlusNormSq => (self.value(model, x), DVector::from_column_slice(x)),
        }
    }

    /// Value, coordinate gradient and coordinate Hessian.
    pub fn jet(&self, model: &ManifoldModel, x: &[f64]) -> ScalarJet {
        let n = x.len();
        match *self {
            PhiSpec::CTimesR(c) | PhiSpec::SignedR(c) => model.r_jet(x).scaled(c),
            PhiSpec::Constant(c) => ScalarJet::constant(n, c),
            PhiSpec::HalfOnePlusNormSq => ScalarJet {
                value: self.value(model, x),
                grad: DVector::from_column_slice(x),
                hess: nalgebra::DMatrix::identity(n, n),
            },
        }
    }
}
