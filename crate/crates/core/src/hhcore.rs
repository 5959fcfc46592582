//! The coupled first-order/moment-map system on the cylinder and its
//! linearization: configurations, the three residual fields, the
//! sign-inversion symmetry, tangent vectors with their real coordinates,
//! dense assembly by probing, the symplectic pairing, and a truncation-error
//! estimate obtained by re-evaluating the residual with higher-order
//! stencils.

use crate::lapack::DMat;
use crate::linalg::{commutator_acc, C64, ZERO};
use crate::surface::{
    a01_of, curvature_scheme, dbar_cov_scheme, deformation_b_scheme, partial_x_scheme,
    partial_y_scheme, CylinderGrid, FieldGrid, Scheme,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{which} must be anti-Hermitian to 1e-12; worst defect {defect:.3e}")]
    NotAntiHermitian { which: &'static str, defect: f64 },
    #[error("field grids disagree with the configuration grid")]
    GridMismatch,
    #[error("collar width must sit strictly inside (0, 0.5); got {0}")]
    BadCollarWidth(f64),
}

/// A point of the configuration space: connection components (A_x, A_y),
/// both anti-Hermitian, and the two Higgs-type fields (phi, psi), plus the
/// deformation strength alpha and the collar width eps.
#[derive(Clone, Debug)]
pub struct Configuration {
    grid: CylinderGrid,
    pub eps: f64,
    pub alpha: f64,
    pub ax: FieldGrid,
    pub ay: FieldGrid,
    pub phi: FieldGrid,
    pub psi: FieldGrid,
}

impl Configuration {
    pub fn new(
        grid: CylinderGrid,
        eps: f64,
        alpha: f64,
        ax: FieldGrid,
        ay: FieldGrid,
        phi: FieldGrid,
        psi: FieldGrid,
    ) -> Result<Self, ConfigError> {
        if !(eps > 0.0 && eps < 0.5) {
            return Err(ConfigError::BadCollarWidth(eps));
        }
        for f in [&ax, &ay, &phi, &psi] {
            if f.grid() != grid {
                return Err(ConfigError::GridMismatch);
            }
        }
        for (f, which) in [(&ax, "A_x"), (&ay, "A_y")] {
            let defect = f.sub(&f.anti_herm_part()).sup_norm();
            if defect > 1e-12 {
                return Err(ConfigError::NotAntiHermitian { which, defect });
            }
        }
        Ok(Configuration { grid, eps, alpha, ax, ay, phi, psi })
    }

    pub fn zero(grid: CylinderGrid, eps: f64, alpha: f64) -> Self {
        Configuration {
            grid,
            eps,
            alpha,
            ax: FieldGrid::zeros(grid),
            ay: FieldGrid::zeros(grid),
            phi: FieldGrid::zeros(grid),
            psi: FieldGrid::zeros(grid),
        }
    }

    pub fn grid(&self) -> CylinderGrid {
        self.grid
    }

    /// True when every field is diagonal in the standard frame; the solvers
    /// use this to decide whether the reducible directions are present.
    pub fn is_diagonal(&self, tol: f64) -> bool {
        let r = self.grid.rank();
        let w = self.grid.block();
        for f in [&self.ax, &self.ay, &self.phi, &self.psi] {
            for n in 0..self.grid.node_count() {
                let blk = &f.data()[n * w..(n + 1) * w];
                for i in 0..r {
                    for j in 0..r {
                        if i != j && blk[i * r + j].norm() > tol {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// The three equation residuals: r1 for the psi del-bar equation, r2 for the
/// phi del-bar equation, r3 for the curvature/moment-map equation.
#[derive(Clone, Debug)]
pub struct ResidualTriple {
    pub r1: FieldGrid,
    pub r2: FieldGrid,
    pub r3: FieldGrid,
}

impl ResidualTriple {
    pub fn sup_norm(&self) -> f64 {
        self.r1.sup_norm().max(self.r2.sup_norm()).max(self.r3.sup_norm())
    }
}

/// Curvature plus the moment-map commutator of a single combined Higgs
/// field: F_xy - 2i [Phi, Phi^dagger]. Shared between the coupled system's
/// third equation and the classical single-field system that the composite
/// embedding targets.
pub fn classical_r3(ax: &FieldGrid, ay: &FieldGrid, big_phi: &FieldGrid) -> FieldGrid {
    classical_r3_scheme(ax, ay, big_phi, Scheme::Standard)
}

fn classical_r3_scheme(
    ax: &FieldGrid,
    ay: &FieldGrid,
    big_phi: &FieldGrid,
    scheme: Scheme,
) -> FieldGrid {
    let mut out = curvature_scheme(ax, ay, scheme);
    add_moment_bracket(&mut out, big_phi);
    out
}

/// out += -2i [f, f^dagger], computed pointwise.
pub(crate) fn add_moment_bracket(out: &mut FieldGrid, f: &FieldGrid) {
    let g = f.grid();
    let w = g.block();
    let r = g.rank();
    let m2i = C64::new(0.0, -2.0);
    let mut scratch = vec![ZERO; w];
    let mut fd = vec![ZERO; w];
    for n in 0..g.node_count() {
        let blk = &f.data()[n * w..(n + 1) * w];
        for i in 0..r {
            for j in 0..r {
                fd[i * r + j] = blk[j * r + i].conj();
            }
        }
        scratch.iter_mut().for_each(|v| *v = ZERO);
        commutator_acc(r, blk, &fd, &mut scratch);
        for (o, s) in out.data_mut()[n * w..(n + 1) * w].iter_mut().zip(scratch.iter()) {
            *o += s * m2i;
        }
    }
}

pub fn residual(c: &Configuration) -> ResidualTriple {
    residual_scheme(c, Scheme::Standard)
}

pub fn residual_scheme(c: &Configuration, scheme: Scheme) -> ResidualTriple {
    let a01 = a01_of(&c.ax, &c.ay);
    let r1 = dbar_cov_scheme(&a01, &c.psi, scheme);
    let r2 = dbar_cov_scheme(&a01, &c.phi, scheme);
    let mut r3 = curvature_scheme(&c.ax, &c.ay, scheme);
    add_moment_bracket(&mut r3, &c.phi);
    add_moment_bracket(&mut r3, &c.psi);
    let b = deformation_b_scheme(&c.psi, c.eps, scheme).anti_herm_part();
    r3.add_scaled(&b, C64::new(c.alpha, 0.0));
    ResidualTriple { r1, r2, r3 }
}

/// The sign inversion (A, phi, psi, alpha) -> (A, phi, -psi, -alpha). It
/// maps solutions to solutions: the psi equation is linear in psi, and the
/// deformation term is odd in (psi, alpha) jointly.
pub fn inversion_map(c: &Configuration) -> Configuration {
    Configuration {
        grid: c.grid,
        eps: c.eps,
        alpha: -c.alpha,
        ax: c.ax.clone(),
        ay: c.ay.clone(),
        phi: c.phi.clone(),
        psi: c.psi.negated(),
    }
}

/// Sup-norm of the difference between the standard residual and the same
/// residual re-evaluated with higher-order stencils; a computable stand-in
/// for the discretization error at this resolution.
pub fn truncation_estimate(c: &Configuration) -> f64 {
    let std = residual_scheme(c, Scheme::Standard);
    let hi = residual_scheme(c, Scheme::Refined);
    std.r1
        .sub(&hi.r1)
        .sup_norm()
        .max(std.r2.sub(&hi.r2).sup_norm())
        .max(std.r3.sub(&hi.r3).sup_norm())
}

/// Tangent direction at a configuration: connection perturbations (both
/// anti-Hermitian) and free complex perturbations of the two Higgs fields.
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub ax: FieldGrid,
    pub ay: FieldGrid,
    pub chi: FieldGrid,
    pub xi: FieldGrid,
}

impl TangentVector {
    pub fn zeros(grid: CylinderGrid) -> Self {
        TangentVector {
            ax: FieldGrid::zeros(grid),
            ay: FieldGrid::zeros(grid),
            chi: FieldGrid::zeros(grid),
            xi: FieldGrid::zeros(grid),
        }
    }

    pub fn grid(&self) -> CylinderGrid {
        self.ax.grid()
    }

    pub fn sup_norm(&self) -> f64 {
        self.ax
            .sup_norm()
            .max(self.ay.sup_norm())
            .max(self.chi.sup_norm())
            .max(self.xi.sup_norm())
    }

    pub fn add_scaled(&mut self, other: &TangentVector, s: f64) {
        let sc = C64::new(s, 0.0);
        self.ax.add_scaled(&other.ax, sc);
        self.ay.add_scaled(&other.ay, sc);
        self.chi.add_scaled(&other.chi, sc);
        self.xi.add_scaled(&other.xi, sc);
    }

    pub fn scale(&mut self, s: f64) {
        let sc = C64::new(s, 0.0);
        self.ax.scale_in_place(sc);
        self.ay.scale_in_place(sc);
        self.chi.scale_in_place(sc);
        self.xi.scale_in_place(sc);
    }
}

/// Real unknowns per node: r^2 parameters for each anti-Hermitian connection
/// component plus 2 r^2 for each complex Higgs perturbation.
pub fn unknowns_per_node(rank: usize) -> usize {
    6 * rank * rank
}

pub fn system_size(grid: CylinderGrid) -> usize {
    grid.node_count() * unknowns_per_node(grid.rank())
}

/// Real coordinates of an anti-Hermitian block: imaginary diagonal first,
/// then (re, im) of each strictly upper entry in row-major order.
pub(crate) fn pack_antiherm(r: usize, blk: &[C64], out: &mut [f64]) {
    for k in 0..r {
        out[k] = blk[k * r + k].im;
    }
    let mut p = r;
    for k in 0..r {
        for l in k + 1..r {
            out[p] = blk[k * r + l].re;
            out[p + 1] = blk[k * r + l].im;
            p += 2;
        }
    }
}

pub(crate) fn unpack_antiherm(r: usize, params: &[f64], blk: &mut [C64]) {
    for v in blk.iter_mut() {
        *v = ZERO;
    }
    for k in 0..r {
        blk[k * r + k] = C64::new(0.0, params[k]);
    }
    let mut p = r;
    for k in 0..r {
        for l in k + 1..r {
            blk[k * r + l] = C64::new(params[p], params[p + 1]);
            blk[l * r + k] = C64::new(-params[p], params[p + 1]);
            p += 2;
        }
    }
}

fn pack_complex(blk: &[C64], out: &mut [f64]) {
    for (i, v) in blk.iter().enumerate() {
        out[2 * i] = v.re;
        out[2 * i + 1] = v.im;
    }
}

fn unpack_complex(params: &[f64], blk: &mut [C64]) {
    for (i, v) in blk.iter_mut().enumerate() {
        *v = C64::new(params[2 * i], params[2 * i + 1]);
    }
}

/// Flatten a tangent vector into real coordinates, node-major. Within a
/// node: A_x params, A_y params, chi (re/im), xi (re/im).
pub fn tangent_to_vec(u: &TangentVector) -> Vec<f64> {
    let g = u.grid();
    let r = g.rank();
    let w = g.block();
    let upn = unknowns_per_node(r);
    let mut out = vec![0.0; system_size(g)];
    for n in 0..g.node_count() {
        let o = n * upn;
        pack_antiherm(r, &u.ax.data()[n * w..(n + 1) * w], &mut out[o..o + r * r]);
        pack_antiherm(r, &u.ay.data()[n * w..(n + 1) * w], &mut out[o + r * r..o + 2 * r * r]);
        pack_complex(&u.chi.data()[n * w..(n + 1) * w], &mut out[o + 2 * r * r..o + 4 * r * r]);
        pack_complex(&u.xi.data()[n * w..(n + 1) * w], &mut out[o + 4 * r * r..o + 6 * r * r]);
    }
    out
}

pub fn tangent_from_vec(grid: CylinderGrid, v: &[f64]) -> TangentVector {
    assert_eq!(v.len(), system_size(grid));
    let r = grid.rank();
    let w = grid.block();
    let upn = unknowns_per_node(r);
    let mut u = TangentVector::zeros(grid);
    for n in 0..grid.node_count() {
        let o = n * upn;
        unpack_antiherm(r, &v[o..o + r * r], &mut u.ax.data_mut()[n * w..(n + 1) * w]);
        unpack_antiherm(r, &v[o + r * r..o + 2 * r * r], &mut u.ay.data_mut()[n * w..(n + 1) * w]);
        unpack_complex(&v[o + 2 * r * r..o + 4 * r * r], &mut u.chi.data_mut()[n * w..(n + 1) * w]);
        unpack_complex(&v[o + 4 * r * r..o + 6 * r * r], &mut u.xi.data_mut()[n * w..(n + 1) * w]);
    }
    u
}

/// c + t u, exact on the anti-Hermitian constraint (parameter addition).
pub fn apply_tangent(c: &Configuration, u: &TangentVector, t: f64) -> Configuration {
    let s = C64::new(t, 0.0);
    let mut out = c.clone();
    out.ax.add_scaled(&u.ax, s);
    out.ay.add_scaled(&u.ay, s);
    out.phi.add_scaled(&u.chi, s);
    out.psi.add_scaled(&u.xi, s);
    out
}

/// Coulomb-type gauge functional relative to a reference connection:
/// d_x u_ax + d_y u_ay + [Aref_x, u_ax] + [Aref_y, u_ay]. Anti-Hermitian
/// valued; its vanishing fixes the gauge slice through the reference.
pub fn gauge_divergence(cref: &Configuration, ax: &FieldGrid, ay: &FieldGrid) -> FieldGrid {
    gauge_divergence_scheme(cref, ax, ay, Scheme::Standard)
}

fn gauge_divergence_scheme(
    cref: &Configuration,
    ax: &FieldGrid,
    ay: &FieldGrid,
    scheme: Scheme,
) -> FieldGrid {
    let mut out = partial_x_scheme(ax, scheme);
    out.add_scaled(&partial_y_scheme(ay, scheme), C64::new(1.0, 0.0));
    let g = out.grid();
    let w = g.block();
    let r = g.rank();
    let mut scratch = vec![ZERO; w];
    for n in 0..g.node_count() {
        let dst_base = n * w;
        scratch.iter_mut().for_each(|v| *v = ZERO);
        commutator_acc(r, &cref.ax.data()[dst_base..dst_base + w], &ax.data()[dst_base..dst_base + w], &mut scratch);
        commutator_acc(r, &cref.ay.data()[dst_base..dst_base + w], &ay.data()[dst_base..dst_base + w], &mut scratch);
        for (o, s) in out.data_mut()[dst_base..dst_base + w].iter_mut().zip(scratch.iter()) {
            *o += s;
        }
    }
    out
}

/// Row block layout of the square augmented system, node-major. Within a
/// node: r1 (re/im), r2 (re/im), the anti-Hermitian parameters of r3, then
/// either the gauge functional's parameters (interior nodes) or the
/// tangential boundary condition A_x - Aref_x = 0 (wall nodes).
fn pack_rows(
    grid: CylinderGrid,
    r1: &FieldGrid,
    r2: &FieldGrid,
    r3: &FieldGrid,
    gauge: &FieldGrid,
    bc: &FieldGrid,
) -> Vec<f64> {
    let r = grid.rank();
    let w = grid.block();
    let upn = unknowns_per_node(r);
    let mut out = vec![0.0; system_size(grid)];
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let n = iy * grid.nx() + ix;
            let o = n * upn;
            pack_complex(&r1.data()[n * w..(n + 1) * w], &mut out[o..o + 2 * r * r]);
            pack_complex(&r2.data()[n * w..(n + 1) * w], &mut out[o + 2 * r * r..o + 4 * r * r]);
            pack_antiherm(r, &r3.data()[n * w..(n + 1) * w], &mut out[o + 4 * r * r..o + 5 * r * r]);
            let last = if grid.is_wall(iy) { bc } else { gauge };
            pack_antiherm(
                r,
                &last.data()[n * w..(n + 1) * w],
                &mut out[o + 5 * r * r..o + 6 * r * r],
            );
        }
    }
    out
}

/// Packs the anti-Hermitian parameters of every node of a field — the
/// curvature-row coordinates of the augmented system — node-major,
/// rank·rank reals per node.
pub fn pack_antiherm_rows(f: &FieldGrid) -> Vec<f64> {
    let g = f.grid();
    let r = g.rank();
    let w = g.block();
    let mut out = vec![0.0; r * r * g.node_count()];
    for n in 0..g.node_count() {
        pack_antiherm(r, &f.data()[n * w..(n + 1) * w], &mut out[n * r * r..(n + 1) * r * r]);
    }
    out
}

/// Nonlinear residual of the square augmented system at c, gauge-fixed and
/// boundary-conditioned relative to cref.
pub fn augmented_residual(c: &Configuration, cref: &Configuration) -> Vec<f64> {
    let rt = residual(c);
    let dax = c.ax.sub(&cref.ax);
    let day = c.ay.sub(&cref.ay);
    let gauge = gauge_divergence(cref, &dax, &day);
    pack_rows(c.grid(), &rt.r1, &rt.r2, &rt.r3, &gauge, &dax)
}

/// Directional derivative of the augmented residual at c in direction u.
/// The gauge and boundary rows are linear, so they depend only on cref.
pub fn aug_lin_apply(c: &Configuration, cref: &Configuration, u: &TangentVector) -> Vec<f64> {
    let g = c.grid();
    let a01 = a01_of(&c.ax, &c.ay);
    let u01 = a01_of(&u.ax, &u.ay);
    // L1 = dbar_A xi + [u01, psi]; L2 = dbar_A chi + [u01, phi].
    let mut l1 = dbar_cov_scheme(&a01, &u.xi, Scheme::Standard);
    let mut l2 = dbar_cov_scheme(&a01, &u.chi, Scheme::Standard);
    let w = g.block();
    let r = g.rank();
    for n in 0..g.node_count() {
        let s = n * w..(n + 1) * w;
        commutator_acc(r, &u01.data()[s.clone()], &c.psi.data()[s.clone()], &mut l1.data_mut()[s.clone()]);
        commutator_acc(r, &u01.data()[s.clone()], &c.phi.data()[s.clone()], &mut l2.data_mut()[s.clone()]);
    }
    // L3 = d_x u_ay - d_y u_ax + [A_x, u_ay] + [u_ax, A_y]
    //      - 2i ([chi, phi^H] + [phi, chi^H] + [xi, psi^H] + [psi, xi^H])
    //      + alpha * antiherm(B(xi)).
    let mut l3 = partial_x_scheme(&u.ay, Scheme::Standard);
    l3.add_scaled(&partial_y_scheme(&u.ax, Scheme::Standard), C64::new(-1.0, 0.0));
    let m2i = C64::new(0.0, -2.0);
    let phid = c.phi.dagger();
    let psid = c.psi.dagger();
    let chid = u.chi.dagger();
    let xid = u.xi.dagger();
    let mut scratch = vec![ZERO; w];
    for n in 0..g.node_count() {
        let s = n * w..(n + 1) * w;
        commutator_acc(r, &c.ax.data()[s.clone()], &u.ay.data()[s.clone()], &mut l3.data_mut()[s.clone()]);
        commutator_acc(r, &u.ax.data()[s.clone()], &c.ay.data()[s.clone()], &mut l3.data_mut()[s.clone()]);
        scratch.iter_mut().for_each(|v| *v = ZERO);
        commutator_acc(r, &u.chi.data()[s.clone()], &phid.data()[s.clone()], &mut scratch);
        commutator_acc(r, &c.phi.data()[s.clone()], &chid.data()[s.clone()], &mut scratch);
        commutator_acc(r, &u.xi.data()[s.clone()], &psid.data()[s.clone()], &mut scratch);
        commutator_acc(r, &c.psi.data()[s.clone()], &xid.data()[s.clone()], &mut scratch);
        for (o, v) in l3.data_mut()[s].iter_mut().zip(scratch.iter()) {
            *o += v * m2i;
        }
    }
    let b = deformation_b_scheme(&u.xi, c.eps, Scheme::Standard).anti_herm_part();
    l3.add_scaled(&b, C64::new(c.alpha, 0.0));
    let gauge = gauge_divergence(cref, &u.ax, &u.ay);
    pack_rows(g, &l1, &l2, &l3, &gauge, &u.ax)
}

/// Dense matrix of the linearized augmented system, built one column at a
/// time by applying the operator to coordinate directions. Expensive but
/// definitionally consistent with `aug_lin_apply`.
pub fn assemble_dense(c: &Configuration, cref: &Configuration) -> DMat {
    let g = c.grid();
    let n = system_size(g);
    let mut mat = DMat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let u = tangent_from_vec(g, &e);
        let col = aug_lin_apply(c, cref, &u);
        mat.col_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    mat
}

/// The symplectic pairing of two tangent vectors: trapezoid quadrature in y,
/// uniform in x, of tr(u_ax v_ay - u_ay v_ax) plus twice the imaginary part
/// of tr(chi_u chi_v^H) + tr(xi_u xi_v^H). Antisymmetrized explicitly so the
/// exchange identity holds to the last bit.
pub fn symplectic_pair(u: &TangentVector, v: &TangentVector) -> f64 {
    0.5 * (symplectic_raw(u, v) - symplectic_raw(v, u))
}

fn symplectic_raw(u: &TangentVector, v: &TangentVector) -> f64 {
    let g = u.grid();
    assert_eq!(g, v.grid());
    let r = g.rank();
    let w = g.block();
    let hx = g.hx();
    let hy = g.hy();
    let mut total = 0.0;
    for iy in 0..g.ny() {
        let wt = if g.is_wall(iy) { 0.5 } else { 1.0 } * hx * hy;
        for ix in 0..g.nx() {
            let n = iy * g.nx() + ix;
            let s = n * w..(n + 1) * w;
            let uax = &u.ax.data()[s.clone()];
            let uay = &u.ay.data()[s.clone()];
            let vax = &v.ax.data()[s.clone()];
            let vay = &v.ay.data()[s.clone()];
            let mut conn = 0.0;
            for i in 0..r {
                for k in 0..r {
                    conn += (uax[i * r + k] * vay[k * r + i]).re;
                    conn -= (uay[i * r + k] * vax[k * r + i]).re;
                }
            }
            let mut higgs = 0.0;
            let uch = &u.chi.data()[s.clone()];
            let vch = &v.chi.data()[s.clone()];
            let uxi = &u.xi.data()[s.clone()];
            let vxi = &v.xi.data()[s];
            for i in 0..r * r {
                higgs += 2.0 * (uch[i] * vch[i].conj()).im;
                higgs += 2.0 * (uxi[i] * vxi[i].conj()).im;
            }
            total += wt * (conn + higgs);
        }
    }
    total
}
