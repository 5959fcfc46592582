//! The completely solvable abelian family on the cylinder: diagonal
//! configurations driven by a single transverse profile p, the first-order
//! ODE that determines p, spectral-curve coefficients, the collar potential
//! magnitude, and the monodromy matrices with their deformation phase.
//!
//! The profile is always obtained by composite trapezoid integration from
//! the bottom wall, never from the closed form — the closed form
//! p(y) = 2 nu_2 (e^{-2 pi y} - 1) at alpha = 0 serves as the independent
//! oracle in the tests, so the integration error is a measured quantity.

use crate::hhcore::Configuration;
use crate::linalg::{C64, EndMatrix, I, ONE};
use crate::surface::{deformation_b, CylinderGrid, FieldGrid};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Parameters of the abelian family: constant Higgs coefficient mu, the
/// oscillating coefficient nu (psi carries nu e^{2 pi i z}), and the
/// deformation strength.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbelianParams {
    pub mu: C64,
    pub nu: C64,
    pub alpha: f64,
}

/// The integrated profile and the configuration built from it. The profile
/// is stored per node (x-major within each row, matching field storage);
/// it reduces to a function of y alone when alpha = 0.
#[derive(Clone, Debug)]
pub struct AbelianSolution {
    pub params: AbelianParams,
    pub p: Vec<f64>,
    pub config: Configuration,
    /// sup_x |p(x, 1)|: the top wall cannot also be pinned to zero by a
    /// first-order equation, so the defect is reported instead.
    pub p_top_defect: f64,
}

/// The Cartan element diag(1, -1).
pub fn cartan_h() -> EndMatrix {
    EndMatrix::diag(&[ONE, -ONE])
}

/// The psi field of the family: nu e^{2 pi i z} H with z = x + i y.
pub fn abelian_psi(grid: CylinderGrid, nu: C64) -> FieldGrid {
    let h = cartan_h();
    FieldGrid::from_fn(grid, |x, y| {
        h.scale(nu * (I * (TWO_PI * x)).exp() * (-TWO_PI * y).exp())
    })
}

/// Solve the transverse ODE d_y p = -4 pi nu_2 e^{-2 pi y} + alpha q(x, y)
/// with p(x, 0) = 0 by composite trapezoid in y, where q is the collar
/// coupling that the deformation term actually produces on this family (the
/// H-coefficient of the projected deformation of psi). With that choice the
/// alpha-part of the curvature equation cancels against alpha B(psi) at the
/// stencil level.
pub fn solve_abelian(params: AbelianParams, grid: CylinderGrid, eps: f64) -> AbelianSolution {
    assert_eq!(grid.rank(), 2, "the abelian family lives at rank 2");
    let (nx, ny) = (grid.nx(), grid.ny());
    let hy = grid.hy();
    let nu2 = params.nu.im;
    let psi = abelian_psi(grid, params.nu);

    // q(x, y) = Im of the (0,0) entry of the projected deformation term;
    // on the family the term is i q H.
    let b = deformation_b(&psi, eps).anti_herm_part();
    let source = |ix: usize, iy: usize| -> f64 {
        let q = b.node(ix, iy)[0].im;
        -2.0 * TWO_PI * nu2 * (-TWO_PI * grid.y(iy)).exp() + params.alpha * q
    };

    let mut p = vec![0.0f64; nx * ny];
    for ix in 0..nx {
        for iy in 1..ny {
            let s_prev = source(ix, iy - 1);
            let s_here = source(ix, iy);
            p[iy * nx + ix] = p[(iy - 1) * nx + ix] + 0.5 * hy * (s_prev + s_here);
        }
    }
    let p_top_defect = (0..nx).map(|ix| p[(ny - 1) * nx + ix].abs()).fold(0.0, f64::max);

    let h = cartan_h();
    let mut ax = FieldGrid::zeros(grid);
    for iy in 0..ny {
        for ix in 0..nx {
            ax.set_mat(ix, iy, &h.scale(I * p[iy * nx + ix]));
        }
    }
    let phi = FieldGrid::from_fn(grid, |_, _| h.scale(params.mu));
    let config = Configuration::new(grid, eps, params.alpha, ax, FieldGrid::zeros(grid), phi, psi)
        .expect("abelian fields satisfy the constraints by construction");

    AbelianSolution { params, p, config, p_top_defect }
}

/// Closed-form profile at alpha = 0; the oracle the integrator is tested
/// against.
pub fn closed_form_p(nu: C64, y: f64) -> f64 {
    2.0 * nu.im * ((-TWO_PI * y).exp() - 1.0)
}

/// Spectral data of the family's Higgs field mu H.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCurve {
    /// Monic characteristic polynomial coefficients (1, 0, -mu^2).
    pub coefficients: Vec<C64>,
    /// The curve eta^2 = mu^2 splits into two components whenever mu != 0.
    pub reducible: bool,
}

pub fn spectral_curve(params: AbelianParams) -> SpectralCurve {
    let coefficients = cartan_h().scale(params.mu).charpoly();
    SpectralCurve { coefficients, reducible: params.mu != C64::new(0.0, 0.0) }
}

/// Collar-supported magnitude of the deformed del-bar coupling:
/// alpha |beta(x, y)| with beta the H-coefficient of the extended tangential
/// boundary term. A rank-1 scalar field; an operational diagnostic.
pub fn dbar_potential_profile(params: AbelianParams, grid: CylinderGrid, eps: f64) -> FieldGrid {
    let psi = abelian_psi(grid, params.nu);
    let b = deformation_b(&psi, eps);
    let sgrid = CylinderGrid::new(grid.nx(), grid.ny(), 1).expect("scalar grid shares validated dims");
    let mut out = FieldGrid::zeros(sgrid);
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let beta = b.node(ix, iy)[0];
            out.node_mut(ix, iy)[0] = C64::new(params.alpha * beta.norm(), 0.0);
        }
    }
    out
}

/// Monodromy data of the dual flat connection around the circle direction.
#[derive(Clone, Debug)]
pub struct Monodromy {
    pub m0: EndMatrix,
    pub m_alpha: EndMatrix,
    /// Deformation phase Theta: y-integral of the x-averaged alpha-linear
    /// connection shift contracted with H/2. Identically zero (to rounding)
    /// for this family because the collar coupling has zero circle average.
    pub theta: C64,
}

pub fn monodromy(params: AbelianParams, solution: &AbelianSolution) -> Monodromy {
    let grid = solution.config.grid();
    let (nx, ny) = (grid.nx(), grid.ny());
    let m0 = cartan_h().scale(I * TWO_PI * params.mu).mat_exp();

    let theta = if params.alpha == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        let base = solve_abelian(
            AbelianParams { alpha: 0.0, ..params },
            grid,
            solution.config.eps,
        );
        // theta(y) = mean_x i (p_alpha - p_0) / alpha; Theta = trapezoid in y.
        let mut theta = C64::new(0.0, 0.0);
        let hy = grid.hy();
        for iy in 0..ny {
            let mut row_mean = 0.0;
            for ix in 0..nx {
                row_mean += solution.p[iy * nx + ix] - base.p[iy * nx + ix];
            }
            row_mean /= nx as f64;
            let wt = if iy == 0 || iy == ny - 1 { 0.5 } else { 1.0 };
            theta += I * (row_mean / params.alpha) * wt * hy;
        }
        theta
    };

    let exponent = I * TWO_PI * params.mu + I * params.alpha * theta;
    let m_alpha = cartan_h().scale(exponent).mat_exp();
    Monodromy { m0, m_alpha, theta }
}
