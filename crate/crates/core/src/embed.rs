//! The composite-field embedding: the coupled pair enters the moment-map
//! equation only through the single Higgs field Phi = phi + psi +
//! alpha [phi, psi] (bracket of the dz-coefficients, pointwise), so the
//! embedded system is the classical single-field system evaluated at Phi.
//! `residual_embedded` makes that literal: its third component calls the
//! same `classical_r3` used by the coupled system, on the assembled field —
//! one arithmetic, reached through two call paths. On a complex-one-
//! dimensional grid the (0,2) curvature equation holds identically (there
//! is no such component to write down) and the Lambda-contraction of the
//! (1,1) part is the scalar coefficient the curvature stencil already
//! computes.

use crate::hhcore::{classical_r3, Configuration, ResidualTriple};
use crate::linalg::ONE;
use crate::surface::{a01_of, bracket_pointwise, dbar_cov, FieldGrid};
use crate::C64;

/// A coupled pair packaged as a single Higgs field. Keeps borrows of the
/// parents so downstream checks can compare the assembled field against the
/// pieces it came from.
#[derive(Debug)]
pub struct CompositeField<'a> {
    /// phi + psi + alpha [phi, psi], assembled pointwise.
    pub field: FieldGrid,
    pub alpha: f64,
    pub phi: &'a FieldGrid,
    pub psi: &'a FieldGrid,
}

pub fn composite<'a>(phi: &'a FieldGrid, psi: &'a FieldGrid, alpha: f64) -> CompositeField<'a> {
    let mut field = phi.clone();
    field.add_scaled(psi, ONE);
    field.add_scaled(&bracket_pointwise(phi, psi), C64::new(alpha, 0.0));
    CompositeField { field, alpha, phi, psi }
}

/// Residual of the embedded system: the two del-bar equations of the
/// parents, unchanged, and the classical single-field moment-map equation
/// at the composite field. The third component and `classical_r3` at
/// `composite(...)` are the same arithmetic by construction; tests pin that
/// as machine equality, not approximation.
pub fn residual_embedded(c: &Configuration) -> ResidualTriple {
    let a01 = a01_of(&c.ax, &c.ay);
    let comp = composite(&c.phi, &c.psi, c.alpha);
    ResidualTriple {
        r1: dbar_cov(&a01, &c.psi),
        r2: dbar_cov(&a01, &c.phi),
        r3: classical_r3(&c.ax, &c.ay, &comp.field),
    }
}
