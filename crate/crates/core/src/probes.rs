//! Seeded generators of smooth random test data. Everything is band-limited
//! (a handful of low Fourier modes in x, low cosine modes in y) so that
//! finite-difference truncation stays small and runs reproduce bit-for-bit
//! from the same seed.

use crate::hhcore::{Configuration, TangentVector};
use crate::linalg::C64;
use crate::surface::{CylinderGrid, FieldGrid};
use rand::Rng;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

struct Profile {
    // (x-mode k, y-mode m, coefficient)
    modes: Vec<(i32, usize, C64)>,
}

impl Profile {
    fn random(rng: &mut impl Rng, scale: f64) -> Self {
        let mut modes = Vec::new();
        for k in -2i32..=2 {
            for m in 0..=2usize {
                let damp = scale / (1.0 + (k * k) as f64 + (m * m) as f64);
                let c = C64::new(
                    rng.gen_range(-1.0..1.0) * damp,
                    rng.gen_range(-1.0..1.0) * damp,
                );
                modes.push((k, m, c));
            }
        }
        Profile { modes }
    }

    fn eval(&self, x: f64, y: f64) -> C64 {
        let mut v = C64::new(0.0, 0.0);
        for &(k, m, c) in &self.modes {
            let phase = C64::new(0.0, TWO_PI * k as f64 * x).exp();
            let across = (std::f64::consts::PI * m as f64 * y).cos();
            v += c * phase * across;
        }
        v
    }
}

/// Smooth random End(E)-valued field with sup-norm on the order of `scale`.
pub fn random_field(grid: CylinderGrid, scale: f64, rng: &mut impl Rng) -> FieldGrid {
    let r = grid.rank();
    let profiles: Vec<Profile> = (0..r * r).map(|_| Profile::random(rng, scale)).collect();
    let mut out = FieldGrid::zeros(grid);
    for iy in 0..grid.ny() {
        for ix in 0..grid.nx() {
            let (x, y) = (grid.x(ix), grid.y(iy));
            let node = out.node_mut(ix, iy);
            for (e, p) in node.iter_mut().zip(profiles.iter()) {
                *e = p.eval(x, y);
            }
        }
    }
    out
}

/// Smooth random anti-Hermitian field (exact projection of a random field).
pub fn random_anti_herm_field(grid: CylinderGrid, scale: f64, rng: &mut impl Rng) -> FieldGrid {
    random_field(grid, scale, rng).anti_herm_part()
}

/// Smooth random configuration at the given deformation strength.
pub fn random_configuration(
    grid: CylinderGrid,
    eps: f64,
    alpha: f64,
    rng: &mut impl Rng,
) -> Configuration {
    Configuration::new(
        grid,
        eps,
        alpha,
        random_anti_herm_field(grid, 0.3, rng),
        random_anti_herm_field(grid, 0.3, rng),
        random_field(grid, 0.3, rng),
        random_field(grid, 0.3, rng),
    )
    .expect("random fields satisfy the constraints by construction")
}

/// Smooth random tangent direction.
pub fn random_tangent(grid: CylinderGrid, rng: &mut impl Rng) -> TangentVector {
    TangentVector {
        ax: random_anti_herm_field(grid, 1.0, rng),
        ay: random_anti_herm_field(grid, 1.0, rng),
        chi: random_field(grid, 1.0, rng),
        xi: random_field(grid, 1.0, rng),
    }
}

/// Smooth random section normalized to unit sup-norm, for operator checks.
pub fn band_limited_section(grid: CylinderGrid, rng: &mut impl Rng) -> FieldGrid {
    let f = random_field(grid, 1.0, rng);
    let sup = f.sup_norm();
    if sup == 0.0 {
        return f;
    }
    f.scaled(C64::new(1.0 / sup, 0.0))
}
