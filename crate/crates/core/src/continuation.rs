//! Continuation in the deformation strength: damped Newton on the augmented
//! system with deflation of the reducible directions, the frozen-operator
//! contraction map, quantitative branch constants (M, K2, alpha*), fixed-grid
//! sweeps with warm starts, and parity reflection of solution branches.

use crate::hhcore::{
    apply_tangent, assemble_dense, aug_lin_apply, augmented_residual, inversion_map, residual,
    system_size, tangent_from_vec, unknowns_per_node, Configuration, TangentVector,
};
use crate::lapack::{singular_values, svd_null_space, DMat, LapackError, LuFactors};
use crate::probes::random_tangent;
use crate::surface::{CylinderGrid, FieldGrid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Clone, Copy, Debug)]
pub struct NewtonSettings {
    /// Convergence threshold on the sup-norm of the augmented residual
    /// (PDE rows, gauge rows, and boundary rows alike).
    pub tol: f64,
    pub max_iter: usize,
    /// Step-halving factor for the damped line search.
    pub backtrack: f64,
    pub max_halvings: usize,
    /// The contraction map is linearly convergent and gets a larger budget.
    pub picard_max_iter: usize,
    /// Refuse dense factorization above this many unknowns.
    pub dense_limit: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        NewtonSettings {
            tol: 1e-10,
            max_iter: 25,
            backtrack: 0.5,
            max_halvings: 8,
            picard_max_iter: 400,
            dense_limit: 16384,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(
        "linearized operator is singular beyond the {kernel_dim} deflated reducible directions \
         (sigma_min {sigma:.3e})"
    )]
    Degenerate { kernel_dim: usize, sigma: f64 },
    #[error("system has {size} unknowns, over the dense-solver limit {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("no convergence after {iterations} iterations; residual history: {history:?}")]
    Diverged { iterations: usize, history: Vec<f64> },
    #[error("parity-reflected sample at alpha={alpha} has residual {residual:.3e} > {tol:.3e}")]
    ParityConsistency { alpha: f64, residual: f64, tol: f64 },
    #[error("dense factorization failed: {0}")]
    Factorization(#[from] LapackError),
}

#[derive(Clone, Copy)]
enum YProfile {
    All,
    Even,
    Odd,
}

/// A packed tangent vector that is 1 (or the alternating sign) on the given
/// real slots of every kept node and zero elsewhere, normalized to unit
/// length.
fn lattice_mode(grid: CylinderGrid, slots: &[usize], nyquist: bool, rows: YProfile) -> Vec<f64> {
    let upn = unknowns_per_node(grid.rank());
    let mut v = vec![0.0; system_size(grid)];
    let mut used = 0usize;
    for iy in 0..grid.ny() {
        let keep = match rows {
            YProfile::All => true,
            YProfile::Even => iy % 2 == 0,
            YProfile::Odd => iy % 2 == 1,
        };
        if !keep {
            continue;
        }
        for ix in 0..grid.nx() {
            let sign = if nyquist && ix % 2 == 1 { -1.0 } else { 1.0 };
            let base = (iy * grid.nx() + ix) * upn;
            for &s in slots {
                v[base + s] = sign;
                used += 1;
            }
        }
    }
    let w = 1.0 / (used as f64).sqrt();
    for x in v.iter_mut() {
        *x *= w;
    }
    v
}

/// Null directions of the linearization present at every background: the
/// identity-matrix (trace) parts of a_y, chi, and xi commute with any field,
/// so every bracket drops out and only the stencils act. Two lattice facts
/// then generate the null space. First, every centered antisymmetric
/// x-stencil annihilates both the constant and the alternating (Nyquist)
/// x-profile. Second, the only rows that see the trace of a_y are the
/// interior gauge rows, whose centered y-difference skips a row, leaving the
/// even-row and odd-row indicator profiles untouched (the walls pin a_x, not
/// a_y — which is also why a_x contributes nothing). The one-sided wall rows
/// of the holomorphicity equations do act on chi and xi, so those keep only
/// y-constant profiles.
///
/// In all: a_y gets {constant, Nyquist} × {even rows, odd rows}, chi and xi
/// get {constant, Nyquist} for each of their two real trace parameters —
/// 12 orthonormal packed directions.
pub fn universal_kernel(grid: CylinderGrid) -> Vec<Vec<f64>> {
    let r = grid.rank();
    let mut out = Vec::with_capacity(12);
    // a_y anti-Hermitian parameters: imaginary diagonal entries come first.
    let ay_trace: Vec<usize> = (0..r).map(|k| r * r + k).collect();
    for nyquist in [false, true] {
        out.push(lattice_mode(grid, &ay_trace, nyquist, YProfile::Even));
        out.push(lattice_mode(grid, &ay_trace, nyquist, YProfile::Odd));
    }
    for block in [2 * r * r, 4 * r * r] {
        let re_trace: Vec<usize> = (0..r).map(|k| block + 2 * (k * r + k)).collect();
        let im_trace: Vec<usize> = (0..r).map(|k| block + 2 * (k * r + k) + 1).collect();
        for nyquist in [false, true] {
            out.push(lattice_mode(grid, &re_trace, nyquist, YProfile::All));
            out.push(lattice_mode(grid, &im_trace, nyquist, YProfile::All));
        }
    }
    out
}

/// Exact null directions at diagonal backgrounds. Every individual diagonal
/// slot (not just the trace) commutes with a diagonal background, so each of
/// the 12 universal directions splits into r per-slot copies: a_y gets
/// {constant, Nyquist} × {even rows, odd rows} and chi, xi get {constant,
/// Nyquist} per real parameter, per diagonal entry — 12r orthonormal packed
/// directions (disjoint slots, and the two x-profiles are orthogonal).
pub fn reducible_kernel(grid: CylinderGrid) -> Vec<Vec<f64>> {
    let r = grid.rank();
    let mut out = Vec::with_capacity(12 * r);
    for k in 0..r {
        // a_y anti-Hermitian parameters: imaginary diagonal entries first.
        for nyquist in [false, true] {
            out.push(lattice_mode(grid, &[r * r + k], nyquist, YProfile::Even));
            out.push(lattice_mode(grid, &[r * r + k], nyquist, YProfile::Odd));
        }
    }
    for block in [2 * r * r, 4 * r * r] {
        for k in 0..r {
            let entry = 2 * (k * r + k);
            for nyquist in [false, true] {
                out.push(lattice_mode(grid, &[block + entry], nyquist, YProfile::All)); // Re
                out.push(lattice_mode(grid, &[block + entry + 1], nyquist, YProfile::All)); // Im
            }
        }
    }
    out
}

/// LU factors of the linearization bordered by the kernel directions: the
/// (n+k)-sized matrix [[J, s U], [s K^T, 0]] with K the known right null
/// basis and U a seeded random block. The border makes the factorization
/// nonsingular regardless of how the left null space sits (a symmetric
/// shift K K^T cannot — here the left and right null spaces are nearly
/// orthogonal to each other, so most of such a shift is invisible).
/// Solutions come back orthogonal to the kernel; right-hand sides are first
/// projected onto the range, whose orthogonal complement — the left null
/// basis — is recovered from the factored border itself.
pub struct DeflatedOperator {
    lu: LuFactors,
    kernel: Vec<Vec<f64>>,
    left_kernel: Vec<Vec<f64>>,
    n: usize,
    pub shift: f64,
}

impl DeflatedOperator {
    pub fn factor(mat: DMat, kernel: Vec<Vec<f64>>) -> Result<Self, SolveError> {
        let n = mat.n_rows;
        let k = kernel.len();
        let kernel_dim = k;
        let shift = if k == 0 { 0.0 } else { mat.frobenius() / (n as f64).sqrt() };
        let mut mat = mat.pad_square(k);
        if k > 0 {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(271_828);
            for (j, mode) in kernel.iter().enumerate() {
                let mut u: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = normalize(&mut u);
                assert!(norm > 0.0);
                for (i, ui) in u.iter().enumerate() {
                    mat.set(i, n + j, shift * ui);
                }
                for (i, ki) in mode.iter().enumerate() {
                    mat.set(n + j, i, shift * ki);
                }
            }
        }
        let lu = LuFactors::factor(mat).map_err(|e| match e {
            LapackError::Singular(_) => SolveError::Degenerate { kernel_dim, sigma: 0.0 },
            other => SolveError::Factorization(other),
        })?;
        // The transposed bordered system with right-hand side [0; e_j] yields
        // a vector annihilated by J^T with prescribed moments against the
        // random block: k independent solves recover the left null basis.
        let mut left_kernel: Vec<Vec<f64>> = Vec::with_capacity(k);
        for j in 0..k {
            let mut x = vec![0.0; n + k];
            x[n + j] = 1.0;
            lu.solve_transposed_in_place(&mut x).map_err(SolveError::Factorization)?;
            x.truncate(n);
            for _ in 0..2 {
                for prev in &left_kernel {
                    let dot: f64 = prev.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                    for (xi, pi) in x.iter_mut().zip(prev.iter()) {
                        *xi -= dot * pi;
                    }
                }
            }
            if normalize(&mut x) == 0.0 {
                return Err(SolveError::Degenerate { kernel_dim, sigma: 0.0 });
            }
            left_kernel.push(x);
        }
        Ok(DeflatedOperator { lu, kernel, left_kernel, n, shift })
    }

    pub fn project(&self, v: &mut [f64]) {
        for k in &self.kernel {
            let dot: f64 = k.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (vi, ki) in v.iter_mut().zip(k.iter()) {
                *vi -= dot * ki;
            }
        }
    }

    fn project_left(&self, v: &mut [f64]) {
        for k in &self.left_kernel {
            let dot: f64 = k.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
            for (vi, ki) in v.iter_mut().zip(k.iter()) {
                *vi -= dot * ki;
            }
        }
    }

    /// Least-squares solve: the right-hand side is first projected onto the
    /// range (dropping components no step can reach), and the solution comes
    /// back orthogonal to the kernel.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let mut x = rhs.to_vec();
        self.project_left(&mut x);
        x.resize(self.n + self.kernel.len(), 0.0);
        self.lu.solve_in_place(&mut x).map_err(SolveError::Factorization)?;
        x.truncate(self.n);
        self.project(&mut x);
        Ok(x)
    }

    fn solve_transposed(&self, rhs: &[f64]) -> Result<Vec<f64>, SolveError> {
        let mut x = rhs.to_vec();
        self.project(&mut x);
        x.resize(self.n + self.kernel.len(), 0.0);
        self.lu.solve_transposed_in_place(&mut x).map_err(SolveError::Factorization)?;
        x.truncate(self.n);
        self.project_left(&mut x);
        Ok(x)
    }

    pub fn kernel_len(&self) -> usize {
        self.kernel.len()
    }

    /// Quick degeneracy check: a few inverse-power passes on the restricted
    /// normal map. If the restricted operator is (numerically) singular the
    /// growth explodes immediately and the exploding solution direction —
    /// a missing null vector — is returned so the caller can enlarge the
    /// kernel and refactor.
    fn near_null_probe(&self) -> Result<Option<Vec<f64>>, SolveError> {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(314_159);
        let mut v: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        self.project_left(&mut v);
        if normalize(&mut v) == 0.0 {
            return Ok(None);
        }
        let mut sigma = f64::INFINITY;
        let mut direction = Vec::new();
        for _ in 0..3 {
            let mut z = self.solve(&v)?;
            let mut w = self.solve_transposed(&z)?;
            self.project_left(&mut w);
            let growth = normalize(&mut w);
            if !growth.is_finite() || growth == 0.0 {
                sigma = 0.0;
                normalize(&mut z);
                direction = z;
                break;
            }
            sigma = 1.0 / growth.sqrt();
            normalize(&mut z);
            direction = z;
            v = w;
        }
        if sigma < NULL_DETECT {
            Ok(Some(direction))
        } else {
            Ok(None)
        }
    }

    /// Smallest singular value of the operator restricted away from the null
    /// directions (kernel on the right, recovered left null basis on the
    /// left), by inverse power iteration on the restricted normal map.
    pub fn sigma_min_deflated(&self, seed: u64) -> Result<f64, SolveError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let mut v: Vec<f64> = (0..self.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        self.project_left(&mut v);
        normalize(&mut v);
        let mut sigma = f64::INFINITY;
        for _ in 0..80 {
            let z = self.solve(&v)?;
            let mut w = self.solve_transposed(&z)?;
            self.project_left(&mut w);
            let growth = normalize(&mut w);
            let next = 1.0 / growth.sqrt();
            let done = (next - sigma).abs() <= 1e-8 * next.abs();
            sigma = next;
            v = w;
            if done {
                break;
            }
        }
        Ok(sigma)
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Diagonal-sector iterates pick up off-diagonal dust of order the solver
/// tolerance; anything below this is treated as on the diagonal family so
/// the near-null per-slot directions are bordered out as well.
const DIAGONAL_BACKGROUND_TOL: f64 = 1e-6;

fn kernel_for(c: &Configuration) -> Vec<Vec<f64>> {
    if c.is_diagonal(DIAGONAL_BACKGROUND_TOL) {
        reducible_kernel(c.grid())
    } else {
        universal_kernel(c.grid())
    }
}

/// An inverse-power growth estimate below this marks the restricted operator
/// as numerically singular, i.e. the deflation basis is missing directions.
const NULL_DETECT: f64 = 1e-9;
/// Classification cut for dense null-space recovery. Exact kernel directions
/// sit at machine scale while the first genuine near-null mode is ~5e-5 on
/// the coarsest grid and grows with resolution, so the gap is wide.
const NULL_CLASSIFY: f64 = 1e-10;
/// Cap on incremental kernel growth before giving up as degenerate.
const MAX_KERNEL_GROWTH: usize = 24;

/// Assembles and factors the deflated linearization at `c`, anchored at
/// `cref`, enlarging the deflation basis when the background carries null
/// directions beyond the catalogued ones (backgrounds with a flat connection
/// sector do). Detection is an inverse-power probe on the factored operator;
/// recovery replaces the basis with a dense SVD null space when the system is
/// small enough and falls back to appending probe directions otherwise.
fn deflated_operator_for(
    c: &Configuration,
    cref: &Configuration,
) -> Result<DeflatedOperator, SolveError> {
    let n = system_size(c.grid());
    let mut kernel = kernel_for(c);
    let base = kernel.len();
    let mut used_svd = false;
    loop {
        let grow = match DeflatedOperator::factor(assemble_dense(c, cref), kernel.clone()) {
            Ok(op) => match op.near_null_probe()? {
                None => return Ok(op),
                Some(direction) => Some(direction),
            },
            Err(SolveError::Degenerate { .. }) => None,
            Err(e) => return Err(e),
        };
        if !used_svd && n <= FULL_SVD_LIMIT {
            used_svd = true;
            kernel = svd_null_space(assemble_dense(c, cref), NULL_CLASSIFY)
                .map_err(SolveError::Factorization)?;
            continue;
        }
        let Some(mut direction) = grow else {
            return Err(SolveError::Degenerate { kernel_dim: kernel.len(), sigma: 0.0 });
        };
        for basis in &kernel {
            let d: f64 = direction.iter().zip(basis).map(|(x, b)| x * b).sum();
            for (x, b) in direction.iter_mut().zip(basis) {
                *x -= d * b;
            }
        }
        if normalize(&mut direction) < 1e-8 || kernel.len() >= base + MAX_KERNEL_GROWTH {
            return Err(SolveError::Degenerate { kernel_dim: kernel.len(), sigma: 0.0 });
        }
        kernel.push(direction);
    }
}

fn check_size(grid: CylinderGrid, settings: &NewtonSettings) -> Result<(), SolveError> {
    let size = system_size(grid);
    if size > settings.dense_limit {
        return Err(SolveError::TooLarge { size, limit: settings.dense_limit });
    }
    Ok(())
}

/// Two consecutive relative residual changes below 1e-9: the iteration has
/// hit a floor it cannot descend from, so bail out instead of burning the
/// remaining iterations on refactorizations.
fn stagnated(history: &[f64]) -> bool {
    if history.len() < 3 {
        return false;
    }
    let w = &history[history.len() - 3..];
    w[0] > 0.0
        && (w[1] - w[0]).abs() <= 1e-9 * w[0]
        && (w[2] - w[1]).abs() <= 1e-9 * w[1]
}

#[derive(Clone, Debug)]
pub struct NewtonResult {
    pub config: Configuration,
    /// Sup-norm of the augmented residual at each iterate, seed included.
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Damped Newton on the augmented system, re-linearized at every step. The
/// gauge and boundary rows are anchored at the seed, which also serves as
/// the warm start; only the deformation strength is replaced by `alpha`.
pub fn newton_solve(
    seed: &Configuration,
    alpha: f64,
    settings: &NewtonSettings,
) -> Result<NewtonResult, SolveError> {
    check_size(seed.grid(), settings)?;
    let cref = seed.clone();
    let mut c = with_alpha(seed, alpha);
    let mut history = Vec::new();
    for iter in 0..settings.max_iter {
        let f = augmented_residual(&c, &cref);
        let r = sup(&f);
        history.push(r);
        if r <= settings.tol {
            return Ok(NewtonResult { config: c, history, iterations: iter });
        }
        if stagnated(&history) {
            return Err(SolveError::Diverged { iterations: iter, history });
        }
        let op = deflated_operator_for(&c, &cref)?;
        let step = op.solve(&f.iter().map(|x| -x).collect::<Vec<_>>())?;
        let u = tangent_from_vec(c.grid(), &step);

        let mut eta = 1.0;
        let mut accepted = None;
        let mut fallback: Option<(Configuration, f64)> = None;
        for _ in 0..=settings.max_halvings {
            let trial = apply_tangent(&c, &u, eta);
            let rt = sup(&augmented_residual(&trial, &cref));
            if rt < (1.0 - 0.25 * eta) * r {
                accepted = Some(trial);
                break;
            }
            if fallback.as_ref().map_or(true, |(_, best)| rt < *best) {
                fallback = Some((trial, rt));
            }
            eta *= settings.backtrack;
        }
        c = match accepted {
            Some(next) => next,
            None => match fallback {
                Some((next, rt)) if rt < r => next,
                _ => {
                    return Err(SolveError::Diverged { iterations: iter + 1, history });
                }
            },
        };
    }
    let f = augmented_residual(&c, &cref);
    let r = sup(&f);
    history.push(r);
    if r <= settings.tol {
        let iterations = history.len() - 1;
        return Ok(NewtonResult { config: c, history, iterations });
    }
    Err(SolveError::Diverged { iterations: settings.max_iter, history })
}

#[derive(Clone, Debug)]
pub struct PicardResult {
    pub config: Configuration,
    pub history: Vec<f64>,
    pub iterations: usize,
}

/// Frozen-operator contraction: the linearization is assembled and factored
/// once at the seed (with the seed's own deformation strength) and reused
/// unchanged, while the nonlinear residual is evaluated at the target
/// strength. Linearly convergent for small enough alpha.
pub fn picard_solve(
    seed: &Configuration,
    alpha: f64,
    settings: &NewtonSettings,
) -> Result<PicardResult, SolveError> {
    check_size(seed.grid(), settings)?;
    let cref = seed.clone();
    let op = deflated_operator_for(seed, &cref)?;
    let mut c = with_alpha(seed, alpha);
    let mut history = Vec::new();
    for iter in 0..settings.picard_max_iter {
        let f = augmented_residual(&c, &cref);
        let r = sup(&f);
        history.push(r);
        if r <= settings.tol {
            return Ok(PicardResult { config: c, history, iterations: iter });
        }
        if stagnated(&history) {
            return Err(SolveError::Diverged { iterations: iter, history });
        }
        let step = op.solve(&f.iter().map(|x| -x).collect::<Vec<_>>())?;
        let u = tangent_from_vec(c.grid(), &step);
        c = apply_tangent(&c, &u, 1.0);
    }
    Err(SolveError::Diverged { iterations: settings.picard_max_iter, history })
}

fn with_alpha(c: &Configuration, alpha: f64) -> Configuration {
    let mut out = c.clone();
    out.alpha = alpha;
    out
}

/// Quantitative constants controlling the contraction window, measured on
/// the assembled linearization at a given configuration.
#[derive(Clone, Debug)]
pub struct BranchConstants {
    /// Inverse-operator bound M = 1 / sigma_min of the deflated operator.
    pub m_bound: f64,
    /// Operator norm of the deformation slope: largest singular value of the
    /// map xi -> antiherm(B(xi)) landing in the curvature rows. Depends only
    /// on the grid and collar, never on the base configuration.
    pub k2: f64,
    /// Sampled norm of the second derivative of the residual map (it is
    /// quadratic, so finite differences of the linearization are exact).
    pub k1: f64,
    /// Contraction radius alpha* = 1 / (4 K2 M).
    pub alpha_star: f64,
    pub sigma_min_deflated: f64,
    /// Smallest raw singular value from a full dense SVD; computed only when
    /// the system is small enough for that to be cheap.
    pub sigma_min_raw: Option<f64>,
    pub kernel_dim: usize,
}

/// Full dense SVD is only attempted below this size.
const FULL_SVD_LIMIT: usize = 4000;

pub fn estimate_constants(
    c: &Configuration,
    settings: &NewtonSettings,
) -> Result<BranchConstants, SolveError> {
    check_size(c.grid(), settings)?;
    let n = system_size(c.grid());
    let sigma_min_raw = if n <= FULL_SVD_LIMIT {
        let svs = singular_values(assemble_dense(c, c)).map_err(SolveError::Factorization)?;
        Some(svs[svs.len() - 1])
    } else {
        None
    };
    let op = deflated_operator_for(c, c)?;
    let kernel_dim = op.kernel_len();
    let sigma_min_deflated = op.sigma_min_deflated(7)?;
    if sigma_min_deflated < 1e-14 {
        return Err(SolveError::Degenerate { kernel_dim, sigma: sigma_min_deflated });
    }
    let m_bound = 1.0 / sigma_min_deflated;
    let k2 = deformation_slope_norm(c.grid(), c.eps)?;
    let k1 = curvature_sample_norm(c);
    let alpha_star = 1.0 / (4.0 * k2 * m_bound);
    Ok(BranchConstants {
        m_bound,
        k2,
        k1,
        alpha_star,
        sigma_min_deflated,
        sigma_min_raw,
        kernel_dim,
    })
}

/// Largest singular value of the alpha-slope block: the linear map from the
/// xi components into the curvature rows through the collar deformation.
/// Assembled densely column by column (the map is cheap and very sparse in
/// its input), then passed to the SVD.
fn deformation_slope_norm(grid: CylinderGrid, eps: f64) -> Result<f64, SolveError> {
    use crate::hhcore::pack_antiherm_rows;
    use crate::surface::deformation_b;
    let r = grid.rank();
    let nodes = grid.node_count();
    let xi_params = 2 * r * r * nodes;
    let rows = r * r * nodes;
    let mut slim = DMat::zeros(rows, xi_params);
    let mut xi = FieldGrid::zeros(grid);
    for j in 0..xi_params {
        set_packed_complex(&mut xi, j, 1.0);
        let b = deformation_b(&xi, eps).anti_herm_part();
        let col = pack_antiherm_rows(&b);
        slim.col_mut(j).copy_from_slice(&col);
        set_packed_complex(&mut xi, j, 0.0);
    }
    let svs = singular_values(slim).map_err(SolveError::Factorization)?;
    Ok(svs[0])
}

/// Writes value into the packed real coordinate `idx` of a complex field
/// (re/im interleaved per entry, node-major).
fn set_packed_complex(f: &mut FieldGrid, idx: usize, value: f64) {
    let entry = idx / 2;
    let v = &mut f.data_mut()[entry];
    if idx % 2 == 0 {
        *v = crate::linalg::C64::new(value, v.im);
    } else {
        *v = crate::linalg::C64::new(v.re, value);
    }
}

/// The residual map is quadratic, so J(c+u) - J(c) applied to v is exactly
/// the second derivative paired with (u, v); sample it on seeded directions.
fn curvature_sample_norm(c: &Configuration) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let u = unit_tangent(random_tangent(c.grid(), &mut rng));
        let v = unit_tangent(random_tangent(c.grid(), &mut rng));
        let shifted = apply_tangent(c, &u, 1.0);
        let a = aug_lin_apply(&shifted, c, &v);
        let b = aug_lin_apply(c, c, &v);
        let diff: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| x - y).collect();
        worst = worst.max(l2(&diff));
    }
    worst
}

fn unit_tangent(mut u: TangentVector) -> TangentVector {
    let scale = 1.0 / l2(&crate::hhcore::tangent_to_vec(&u));
    u.scale(scale);
    u
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Clone, Debug)]
pub struct SweepSample {
    pub alpha: f64,
    pub config: Configuration,
    pub residual_sup: f64,
    pub newton_iterations: usize,
    /// Sup-norm distance of the fields from the previous sample.
    pub step_change: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuationCurve {
    pub samples: Vec<SweepSample>,
    pub truncated: bool,
    pub failure: Option<String>,
}

impl ContinuationCurve {
    /// Largest step-to-step field change relative to the first step; the
    /// branch-smoothness diagnostic (the grid is uniform in alpha).
    pub fn max_step_ratio(&self) -> f64 {
        let first = match self.samples.get(1) {
            Some(s) if s.step_change > 0.0 => s.step_change,
            _ => return 0.0,
        };
        self.samples[1..]
            .iter()
            .map(|s| s.step_change / first)
            .fold(0.0, f64::max)
    }
}

/// Fixed uniform alpha grid from 0 to alpha_max, warm-starting each solve
/// from the previous sample. A solver failure truncates the curve and is
/// recorded rather than raised: the partial branch is data.
pub fn sweep(
    seed: &Configuration,
    alpha_max: f64,
    steps: usize,
    settings: &NewtonSettings,
) -> ContinuationCurve {
    assert!(steps >= 1, "a sweep needs at least one step");
    let mut samples = Vec::with_capacity(steps + 1);
    let mut current = seed.clone();
    for i in 0..=steps {
        let alpha = alpha_max * i as f64 / steps as f64;
        match newton_solve(&current, alpha, settings) {
            Ok(res) => {
                let step_change = if samples.is_empty() {
                    0.0
                } else {
                    config_distance(&res.config, &current)
                };
                samples.push(SweepSample {
                    alpha,
                    config: res.config.clone(),
                    residual_sup: *res.history.last().unwrap(),
                    newton_iterations: res.iterations,
                    step_change,
                });
                current = res.config;
            }
            Err(err) => {
                return ContinuationCurve {
                    samples,
                    truncated: true,
                    failure: Some(format!("at alpha={alpha}: {err}")),
                };
            }
        }
    }
    ContinuationCurve { samples, truncated: false, failure: None }
}

fn config_distance(a: &Configuration, b: &Configuration) -> f64 {
    a.ax
        .sub(&b.ax)
        .sup_norm()
        .max(a.ay.sub(&b.ay).sup_norm())
        .max(a.phi.sub(&b.phi).sup_norm())
        .max(a.psi.sub(&b.psi).sup_norm())
}

/// Reflects a branch through alpha = 0: each sample at alpha > 0 yields the
/// synthesized configuration (A, phi, -psi) at -alpha, whose residual equals
/// the original's up to sign pattern and is re-verified rather than trusted.
/// The result covers [-alpha_max, alpha_max] in increasing alpha order.
pub fn parity_extend(
    curve: &ContinuationCurve,
    settings: &NewtonSettings,
) -> Result<ContinuationCurve, SolveError> {
    let mut mirrored = Vec::new();
    for s in curve.samples.iter().rev() {
        if s.alpha == 0.0 {
            continue;
        }
        let config = inversion_map(&s.config);
        let residual_sup = residual(&config).sup_norm();
        let tol = settings.tol;
        if residual_sup > tol {
            return Err(SolveError::ParityConsistency {
                alpha: -s.alpha,
                residual: residual_sup,
                tol,
            });
        }
        mirrored.push(SweepSample {
            alpha: -s.alpha,
            config,
            residual_sup,
            newton_iterations: 0,
            step_change: s.step_change,
        });
    }
    let mut samples = mirrored;
    samples.extend(curve.samples.iter().cloned());
    Ok(ContinuationCurve {
        samples,
        truncated: curve.truncated,
        failure: curve.failure.clone(),
    })
}
