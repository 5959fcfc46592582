//! Named experiment pipelines behind the command line. Each pipeline builds
//! its fixture from a [`RunConfig`], measures a fixed list of checks, and
//! produces three things: machine-readable check rows (one CSV table,
//! schema `check_name, value, threshold, pass`), a plain-text report with
//! every measured value, and data artifacts (CSV plot tables, persisted
//! configurations).
//!
//! Row convention: a name ending in `_min` is a lower bound and passes when
//! value >= threshold; every other row is an upper bound and passes when
//! value <= threshold. A threshold of exactly `0.0` is a bitwise claim.
//!
//! Outputs are deterministic: probe randomness is seeded from `run.seed`,
//! floats are printed at fixed precision, and nothing time- or
//! machine-dependent is written. Running a stage alone or inside
//! `full-suite` yields identical rows because every stage reseeds its own
//! generator.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::abelian::{
    cartan_h, closed_form_p, monodromy, solve_abelian, AbelianParams, AbelianSolution,
};
use crate::config::RunConfig;
use crate::continuation::{estimate_constants, newton_solve, picard_solve, sweep, SolveError};
use crate::embed::{composite, residual_embedded};
use crate::hhcore::{
    apply_tangent, assemble_dense, aug_lin_apply, augmented_residual, classical_r3, inversion_map,
    residual, system_size, tangent_from_vec, truncation_estimate, Configuration,
};
use crate::laxpair::{
    absorption_defect, build_lax, charpoly_gap, commutator_check, hitchin_map, lax_curvature,
    solve_generator,
};
use crate::linalg::{C64, EndMatrix, I, ONE};
use crate::persist::configuration_bytes;
use crate::probes::{band_limited_section, random_configuration, random_field, random_tangent};
use crate::surface::{bracket_pointwise, dbar, deformation_b, trace_tau, CylinderGrid, FieldGrid};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pipeline {
    SolveAbelian,
    Continue,
    Constants,
    LaxCheck,
    Invariants,
    Parity,
    EmbedCheck,
    FullSuite,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Pipeline::SolveAbelian,
        Pipeline::Continue,
        Pipeline::Constants,
        Pipeline::LaxCheck,
        Pipeline::Invariants,
        Pipeline::Parity,
        Pipeline::EmbedCheck,
        Pipeline::FullSuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::SolveAbelian => "solve-abelian",
            Pipeline::Continue => "continue",
            Pipeline::Constants => "constants",
            Pipeline::LaxCheck => "lax-check",
            Pipeline::Invariants => "invariants",
            Pipeline::Parity => "parity",
            Pipeline::EmbedCheck => "embed-check",
            Pipeline::FullSuite => "full-suite",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Pipeline, PipelineError> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| PipelineError::UnknownPipeline(s.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(
        "unknown pipeline '{0}'; valid names: solve-abelian, continue, constants, lax-check, \
         invariants, parity, embed-check, full-suite"
    )]
    UnknownPipeline(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("writing outputs: {0}")]
    Io(#[from] std::io::Error),
}

fn stage_err<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::Stage { stage, message: e.to_string() }
}

/// One measured check. `pass` is fixed at construction from the bound
/// direction; `value` NaN never passes.
#[derive(Clone, Debug)]
pub struct CheckRow {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckRow {
    pub fn upper(name: impl Into<String>, value: f64, threshold: f64) -> CheckRow {
        CheckRow { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn lower(name: impl Into<String>, value: f64, threshold: f64) -> CheckRow {
        CheckRow { name: name.into(), value, threshold, pass: value >= threshold }
    }

    fn line(&self) -> String {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let dir = if self.name.ends_with("_min") { ">=" } else { "<=" };
        format!("{verdict} {} = {:.12e} ({dir} {:.12e})", self.name, self.value, self.threshold)
    }
}

#[derive(Clone, Debug)]
pub struct Artifact {
    pub file_name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub pipeline: Pipeline,
    pub rows: Vec<CheckRow>,
    pub report: String,
    pub artifacts: Vec<Artifact>,
}

impl PipelineOutput {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("check_name, value, threshold, pass\n");
        for r in &self.rows {
            let verdict = if r.pass { "pass" } else { "fail" };
            out.push_str(&format!("{}, {:.12e}, {:.12e}, {verdict}\n", r.name, r.value, r.threshold));
        }
        out
    }
}

struct StageOutput {
    rows: Vec<CheckRow>,
    notes: Vec<String>,
    artifacts: Vec<Artifact>,
}

impl StageOutput {
    fn new() -> StageOutput {
        StageOutput { rows: Vec::new(), notes: Vec::new(), artifacts: Vec::new() }
    }
}

fn config_line(cfg: &RunConfig) -> String {
    format!(
        "config: name={}, grid {}x{} rank {}, eps {}, mu {}, nu {}, alpha_max {}, steps {}, seed {}",
        cfg.name,
        cfg.nx,
        cfg.ny,
        cfg.rank,
        cfg.epsilon,
        cfg.mu,
        cfg.nu,
        cfg.alpha_max,
        cfg.steps,
        cfg.seed
    )
}

fn section(title: &str, st: &StageOutput) -> String {
    let mut s = format!("== {title} ==\n");
    for n in &st.notes {
        s.push_str("note: ");
        s.push_str(n);
        s.push('\n');
    }
    for r in &st.rows {
        s.push_str(&r.line());
        s.push('\n');
    }
    let pass = st.rows.iter().filter(|r| r.pass).count();
    s.push_str(&format!("checks: {pass}/{} pass\n", st.rows.len()));
    s
}

pub fn run_experiment(cfg: &RunConfig, pipeline: Pipeline) -> Result<PipelineOutput, PipelineError> {
    let stages: Vec<Pipeline> = match pipeline {
        Pipeline::FullSuite => vec![
            Pipeline::SolveAbelian,
            Pipeline::Continue,
            Pipeline::Constants,
            Pipeline::LaxCheck,
            Pipeline::Invariants,
            Pipeline::Parity,
            Pipeline::EmbedCheck,
        ],
        p => vec![p],
    };

    let mut report = format!("hhlab report\npipeline: {}\n{}\n", pipeline.name(), config_line(cfg));
    let mut rows = Vec::new();
    let mut artifacts = Vec::new();
    for st in stages {
        let out = run_stage(cfg, st)?;
        report.push_str(&section(st.name(), &out));
        rows.extend(out.rows);
        artifacts.extend(out.artifacts);
    }
    let pass = rows.iter().filter(|r| r.pass).count();
    report.push_str(&format!("total: {pass}/{} checks pass\n", rows.len()));
    Ok(PipelineOutput { pipeline, rows, report, artifacts })
}

/// Writes the CSV table, the report, the canonical config snapshot, and all
/// artifacts into `dir`, named `{run.name}-{pipeline}[-...]`. Returns the
/// paths written.
pub fn write_outputs(
    out: &PipelineOutput,
    cfg: &RunConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>, PipelineError> {
    fs::create_dir_all(dir)?;
    let base = format!("{}-{}", cfg.name, out.pipeline.name());
    let mut written = Vec::new();
    let entries: Vec<(String, Vec<u8>)> = [
        (format!("{base}.csv"), out.csv().into_bytes()),
        (format!("{base}-report.txt"), out.report.clone().into_bytes()),
        (format!("{base}-config.txt"), cfg.canonical().into_bytes()),
    ]
    .into_iter()
    .chain(out.artifacts.iter().map(|a| (a.file_name.clone(), a.bytes.clone())))
    .collect();
    for (name, bytes) in entries {
        let path = dir.join(name);
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}

fn run_stage(cfg: &RunConfig, st: Pipeline) -> Result<StageOutput, PipelineError> {
    match st {
        Pipeline::SolveAbelian => stage_solve_abelian(cfg),
        Pipeline::Continue => stage_continue(cfg),
        Pipeline::Constants => stage_constants(cfg),
        Pipeline::LaxCheck => stage_lax_check(cfg),
        Pipeline::Invariants => stage_invariants(cfg),
        Pipeline::Parity => stage_parity(cfg),
        Pipeline::EmbedCheck => stage_embed_check(cfg),
        Pipeline::FullSuite => unreachable!("full-suite expands before dispatch"),
    }
}

fn abelian_params(cfg: &RunConfig, alpha: f64) -> AbelianParams {
    AbelianParams { mu: cfg.mu, nu: cfg.nu, alpha }
}

fn abelian_fixture(
    cfg: &RunConfig,
    st: &'static str,
    alpha: f64,
) -> Result<AbelianSolution, PipelineError> {
    if cfg.rank != 2 {
        return Err(PipelineError::Stage {
            stage: st,
            message: format!(
                "the abelian fixture family lives at rank 2, but grid.rank = {}",
                cfg.rank
            ),
        });
    }
    Ok(solve_abelian(abelian_params(cfg, alpha), cfg.grid(), cfg.epsilon))
}

fn refined_xy(grid: CylinderGrid, st: &'static str) -> Result<CylinderGrid, PipelineError> {
    CylinderGrid::new(2 * grid.nx(), 2 * (grid.ny() - 1) + 1, grid.rank()).map_err(stage_err(st))
}

fn refined_y(grid: CylinderGrid, st: &'static str) -> Result<CylinderGrid, PipelineError> {
    CylinderGrid::new(grid.nx(), 2 * (grid.ny() - 1) + 1, grid.rank()).map_err(stage_err(st))
}

fn boundary_sup(bd: &crate::surface::BoundaryData) -> f64 {
    bd.bottom.iter().chain(bd.top.iter()).map(|c| c.norm()).fold(0.0, f64::max)
}

fn field_gap(a: &Configuration, b: &Configuration) -> f64 {
    a.ax.sub(&b.ax)
        .sup_norm()
        .max(a.ay.sub(&b.ay).sup_norm())
        .max(a.phi.sub(&b.phi).sup_norm())
        .max(a.psi.sub(&b.psi).sup_norm())
}

fn stage_solve_abelian(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "solve-abelian";
    let mut out = StageOutput::new();
    let sol = abelian_fixture(cfg, st, 0.0)?;
    let grid = cfg.grid();
    let fine_grid = refined_xy(grid, st)?;
    let fine_sol = solve_abelian(abelian_params(cfg, 0.0), fine_grid, cfg.epsilon);

    let oracle_gap = |s: &AbelianSolution| {
        let g = s.config.grid();
        let mut worst = 0.0f64;
        for iy in 0..g.ny() {
            let want = closed_form_p(cfg.nu, g.y(iy));
            for ix in 0..g.nx() {
                worst = worst.max((s.p[iy * g.nx() + ix] - want).abs());
            }
        }
        worst
    };
    let coarse = oracle_gap(&sol);
    let fine = oracle_gap(&fine_sol);
    // Error bounds scale with the square of the transverse cell count,
    // pinned to 5e-3 at 32 cells, so coarser probe grids keep a meaningful
    // second-order contract and the default grid keeps the exact one.
    let oracle_bound = |cells: usize| 5e-3 * (32.0 / cells as f64).powi(2);
    out.rows.push(CheckRow::upper(
        "abelian_oracle_error_coarse",
        coarse,
        oracle_bound(grid.ny() - 1),
    ));
    out.rows.push(CheckRow::upper(
        "abelian_oracle_error_fine",
        fine,
        oracle_bound(fine_grid.ny() - 1),
    ));
    if fine > 1e-13 {
        let ratio = coarse / fine;
        out.rows.push(CheckRow::lower("abelian_oracle_ratio_min", ratio, 3.5));
        out.rows.push(CheckRow::upper("abelian_oracle_ratio_max", ratio, 4.5));
    } else {
        out.notes.push(
            "the transverse source vanishes, so the profile is exact and refinement ratios are \
             undefined at machine-zero error"
                .to_string(),
        );
    }

    let r = residual(&sol.config);
    let r_fine = residual(&fine_sol.config);
    out.rows.push(CheckRow::upper("abelian_r2_sup", r.r2.sup_norm(), 1e-14));
    // Contrast row: psi-holomorphy error refines under xy-refinement while
    // the curvature source below stays put (its ratio is ~1). The bar is set
    // where coarse pre-asymptotic grids still clear it; the second-order rate
    // itself is pinned by the oracle ratio window above.
    if r_fine.r1.sup_norm() > 1e-13 {
        out.rows.push(CheckRow::lower(
            "abelian_r1_refinement_ratio_min",
            r.r1.sup_norm() / r_fine.r1.sup_norm(),
            2.5,
        ));
    }
    let source = 2.0 * TWO_PI * cfg.nu.im.abs();
    out.rows.push(CheckRow::upper(
        "abelian_r3_source_magnitude_gap",
        (r.r3.sup_norm() - source).abs(),
        0.25 * (16.0 / (grid.ny() as f64 - 1.0)).powi(2),
    ));
    let top_bound = closed_form_p(cfg.nu, 1.0).abs() * 1.10 + 1e-12;
    out.rows.push(CheckRow::upper("abelian_p_top_defect", sol.p_top_defect, top_bound));
    out.notes.push(format!(
        "profile-vs-closed-form error {coarse:.6e} at {}x{} vs {fine:.6e} at {}x{}; the ratio window pins second-order integration",
        grid.nx(),
        grid.ny(),
        fine_grid.nx(),
        fine_grid.ny()
    ));
    out.notes.push(format!(
        "the curvature equation keeps the family's own transverse source (sup {:.6e}, predicted {source:.6e}); psi-holomorphy (r1 sup {:.6e}) refines at second order and phi is covariantly constant (r2 sup {:.6e})",
        r.r3.sup_norm(),
        r.r1.sup_norm(),
        r.r2.sup_norm()
    ));
    out.notes.push(format!(
        "p_top_defect = {:.12e}; a first-order profile equation cannot also pin the top wall, so the defect is reported (closed-form prediction {:.12e})",
        sol.p_top_defect,
        closed_form_p(cfg.nu, 1.0).abs()
    ));

    let mut profile_csv = String::from("y, p_mean, closed_form, gap\n");
    for iy in 0..grid.ny() {
        let y = grid.y(iy);
        let mean: f64 =
            (0..grid.nx()).map(|ix| sol.p[iy * grid.nx() + ix]).sum::<f64>() / grid.nx() as f64;
        let cf = closed_form_p(cfg.nu, y);
        profile_csv.push_str(&format!(
            "{y:.12e}, {mean:.12e}, {cf:.12e}, {:.12e}\n",
            (mean - cf).abs()
        ));
    }
    out.artifacts.push(Artifact {
        file_name: format!("{}-abelian-profile.csv", cfg.name),
        bytes: profile_csv.into_bytes(),
    });
    out.artifacts.push(Artifact {
        file_name: format!("{}-abelian-alpha0.hhlab", cfg.name),
        bytes: configuration_bytes(&sol.config),
    });
    Ok(out)
}

fn stage_continue(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "continue";
    let mut out = StageOutput::new();
    let sol = abelian_fixture(cfg, st, 0.0)?;
    let settings = cfg.newton();
    let floor = closed_form_p(cfg.nu, 1.0).abs() / 2.0;

    match newton_solve(&sol.config, 0.0, &settings) {
        Ok(res) => {
            out.rows.push(CheckRow::lower("continuation_seed_polish_converged_min", 1.0, 1.0));
            let curve = sweep(&res.config, cfg.alpha_max, cfg.steps, &settings);
            let reached = curve.samples.last().map(|s| s.alpha).unwrap_or(0.0);
            let worst_res =
                curve.samples.iter().map(|s| s.residual_sup).fold(0.0f64, f64::max);
            out.rows.push(CheckRow::lower("continuation_alpha_reached_min", reached, cfg.alpha_max));
            out.rows.push(CheckRow::upper(
                "continuation_truncated",
                if curve.truncated { 1.0 } else { 0.0 },
                0.0,
            ));
            out.rows.push(CheckRow::upper("continuation_residual_sup", worst_res, settings.tol));
            out.rows.push(CheckRow::upper(
                "continuation_max_step_ratio",
                curve.max_step_ratio(),
                10.0,
            ));
            if let Some(f) = &curve.failure {
                out.notes.push(format!("PARTIAL: sweep stopped early — {f}"));
            }
            let mut curve_csv = String::from("alpha, residual_sup, newton_iterations, step_change\n");
            for s in &curve.samples {
                curve_csv.push_str(&format!(
                    "{:.12e}, {:.12e}, {}, {:.12e}\n",
                    s.alpha, s.residual_sup, s.newton_iterations, s.step_change
                ));
            }
            out.artifacts.push(Artifact {
                file_name: format!("{}-continuation-curve.csv", cfg.name),
                bytes: curve_csv.into_bytes(),
            });
        }
        Err(SolveError::Diverged { history, .. }) => {
            let last = history.last().copied().unwrap_or(f64::NAN);
            out.rows.push(CheckRow::lower("continuation_seed_polish_converged_min", 0.0, 1.0));
            out.rows.push(CheckRow::lower("continuation_alpha_reached_min", 0.0, cfg.alpha_max));
            if floor > 1e-12 {
                out.rows.push(CheckRow::upper(
                    "continuation_stall_vs_half_defect",
                    (last / floor - 1.0).abs(),
                    0.10,
                ));
            }
            out.notes.push(
                "PARTIAL: the alpha sweep did not run; Newton polishing of the integrated-profile \
                 seed already stalls at alpha = 0"
                    .to_string(),
            );
            out.notes.push(
                "the boundary rows anchor the x-mean of a_x at both walls while the curvature \
                 rows demand transverse flux, so the iteration drops to its least-squares floor — \
                 half the top-wall defect — and stays there"
                    .to_string(),
            );
            out.notes.push(format!(
                "augmented residual at the seed = {:.6e}; stall floor measured {last:.6e}, predicted {floor:.6e}",
                history.first().copied().unwrap_or(f64::NAN)
            ));
            let mut hist_csv = String::from("iteration, augmented_residual\n");
            for (i, h) in history.iter().enumerate() {
                hist_csv.push_str(&format!("{i}, {h:.12e}\n"));
            }
            out.artifacts.push(Artifact {
                file_name: format!("{}-newton-history.csv", cfg.name),
                bytes: hist_csv.into_bytes(),
            });
        }
        Err(e) => return Err(stage_err(st)(e)),
    }

    let consts = estimate_constants(&sol.config, &settings).map_err(stage_err(st))?;
    out.rows.push(CheckRow::lower("continuation_alpha_star_min", consts.alpha_star, 1e-12));
    out.notes.push(format!(
        "contraction window from the seed: alpha* = {:.6e} (M = {:.6e}, K2 = {:.6e})",
        consts.alpha_star, consts.m_bound, consts.k2
    ));
    let target = 0.9 * consts.alpha_star;
    match picard_solve(&sol.config, target, &settings) {
        Ok(res) => {
            out.rows.push(CheckRow::lower("picard_converged_min", 1.0, 1.0));
            out.rows.push(CheckRow::upper(
                "picard_residual",
                res.history.last().copied().unwrap_or(f64::NAN),
                settings.tol,
            ));
            out.notes.push(format!(
                "frozen-operator iteration at alpha = {target:.6e} converged in {} steps",
                res.iterations
            ));
        }
        Err(SolveError::Diverged { history, iterations }) => {
            let last = history.last().copied().unwrap_or(f64::NAN);
            out.rows.push(CheckRow::lower("picard_converged_min", 0.0, 1.0));
            if floor > 1e-12 {
                out.rows.push(CheckRow::upper(
                    "picard_stall_vs_half_defect",
                    (last / floor - 1.0).abs(),
                    0.10,
                ));
            }
            out.notes.push(format!(
                "PARTIAL: the frozen-operator iteration at alpha = {target:.6e} stalls on the same \
                 wall-flux floor after {iterations} steps (residual {last:.6e})"
            ));
        }
        Err(e) => return Err(stage_err(st)(e)),
    }
    Ok(out)
}

fn stage_constants(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "constants";
    let mut out = StageOutput::new();
    let sol = abelian_fixture(cfg, st, 0.0)?;
    let settings = cfg.newton();
    let grid = cfg.grid();

    let consts = estimate_constants(&sol.config, &settings).map_err(stage_err(st))?;
    out.rows.push(CheckRow::lower(
        "constants_sigma_min_deflated_min",
        consts.sigma_min_deflated,
        1e-12,
    ));
    out.rows.push(CheckRow::lower("constants_alpha_star_min", consts.alpha_star, 1e-12));
    out.rows.push(CheckRow::upper("constants_kernel_dim", consts.kernel_dim as f64, 24.0));
    out.notes.push(format!(
        "at the abelian seed: M = {:.6e}, K1 = {:.6e}, K2 = {:.6e}, alpha* = {:.6e}, deflated sigma_min = {:.6e}, kernel dimension {}",
        consts.m_bound,
        consts.k1,
        consts.k2,
        consts.alpha_star,
        consts.sigma_min_deflated,
        consts.kernel_dim
    ));

    // Raw smallest singular values need a full SVD, so they live on the fixed
    // 8x9 probe grid; the deformed end reuses the family solution there.
    let probe_grid = CylinderGrid::new(8, 9, 2).map_err(stage_err(st))?;
    let c0 = if grid.nx() == 8 && grid.ny() == 9 {
        consts.clone()
    } else {
        let s0 = solve_abelian(abelian_params(cfg, 0.0), probe_grid, cfg.epsilon);
        estimate_constants(&s0.config, &settings).map_err(stage_err(st))?
    };
    let s5 = solve_abelian(abelian_params(cfg, cfg.alpha_max), probe_grid, cfg.epsilon);
    let c5 = estimate_constants(&s5.config, &settings).map_err(stage_err(st))?;
    let r0 = c0.sigma_min_raw.unwrap_or(f64::NAN);
    let r5 = c5.sigma_min_raw.unwrap_or(f64::NAN);
    out.rows.push(CheckRow::lower(
        "cokernel_sigma_alpha0_min",
        c0.sigma_min_deflated,
        1e-12,
    ));
    out.rows.push(CheckRow::upper(
        "cokernel_sigma_collapse_ratio",
        c0.sigma_min_deflated / c5.sigma_min_deflated,
        10.0,
    ));
    out.notes.push(format!(
        "8x9 probe grid: deflated sigma_min {:.6e} at alpha = 0 vs {:.6e} at alpha = {}; the ratio bounds the invertibility drift along the family",
        c0.sigma_min_deflated, c5.sigma_min_deflated, cfg.alpha_max
    ));
    out.notes.push(format!(
        "raw sigma_min there is {r0:.6e} / {r5:.6e}: the assembled operator keeps its exact gauge kernel (dimension {} / {}), which the deflation removes",
        c0.kernel_dim, c5.kernel_dim
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst_order = f64::INFINITY;
    for _ in 0..10 {
        let alpha = 0.3 * (rng.gen::<f64>() - 0.5);
        let c = random_configuration(grid, cfg.epsilon, alpha, &mut rng);
        let u = random_tangent(grid, &mut rng);
        let base = augmented_residual(&c, &c);
        let lin = aug_lin_apply(&c, &c, &u);
        let errs: Vec<f64> = [1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&t| {
                let stepped = augmented_residual(&apply_tangent(&c, &u, t), &c);
                let mut worst = 0.0f64;
                for i in 0..base.len() {
                    worst = worst.max((stepped[i] - base[i] - t * lin[i]).abs());
                }
                worst / t
            })
            .collect();
        for w in errs.windows(2) {
            worst_order = worst_order.min((w[0] / w[1]).log10());
        }
    }
    out.rows.push(CheckRow::lower("linearization_fd_order_min", worst_order, 0.8));

    let cprobe = random_configuration(grid, cfg.epsilon, 0.25, &mut rng);
    let dense = assemble_dense(&cprobe, &cprobe);
    let n = system_size(grid);
    let mut worst_gap = 0.0f64;
    for _ in 0..20 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let via_matrix = dense.matvec(&x);
        let via_stencil = aug_lin_apply(&cprobe, &cprobe, &tangent_from_vec(grid, &x));
        for i in 0..n {
            worst_gap = worst_gap.max((via_matrix[i] - via_stencil[i]).abs());
        }
    }
    out.rows.push(CheckRow::upper("linearization_dense_gap", worst_gap, 1e-12));
    out.notes.push(
        "the residual map is quadratic, so the directional-derivative error is exactly linear in \
         the step; the order row measures that slope across three decades"
            .to_string(),
    );
    Ok(out)
}

fn stage_lax_check(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "lax-check";
    let mut out = StageOutput::new();
    let grid = cfg.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sections: Vec<FieldGrid> = (0..10).map(|_| band_limited_section(grid, &mut rng)).collect();

    let mut ends = vec![("alpha0", 0.0)];
    if cfg.alpha_max > 0.0 {
        ends.push(("alphamax", cfg.alpha_max));
    }
    for (tag, alpha) in ends {
        let sol = abelian_fixture(cfg, st, alpha)?;
        let gen = solve_generator(&sol.config).map_err(stage_err(st))?;
        let tau_sup = boundary_sup(&trace_tau(&sol.config.psi));
        out.rows.push(CheckRow::upper(
            format!("lax_neumann_defect_{tag}"),
            gen.neumann_defect,
            10.0 * tau_sup.max(1e-12),
        ));
        let res = residual(&sol.config).sup_norm();
        let trunc = truncation_estimate(&sol.config);
        let bound = 10.0 * (res + trunc);
        let b_sup = deformation_b(&sol.config.psi, cfg.epsilon).anti_herm_part().sup_norm();
        out.notes.push(format!(
            "{tag}: residual {res:.6e} + truncation {trunc:.6e} gives the flatness bound {bound:.6e}; generator sup {:.6e}, Neumann defect {:.6e}",
            gen.field.sup_norm(),
            gen.neumann_defect
        ));
        for (i, &lam) in cfg.lambdas.iter().enumerate() {
            let lc = build_lax(&sol.config, &gen, lam).map_err(stage_err(st))?;
            out.rows.push(CheckRow::upper(
                format!("lax_f11_{tag}_l{i}"),
                lax_curvature(&lc, &sol.config).sup_norm(),
                bound,
            ));
            out.rows.push(CheckRow::upper(
                format!("lax_commutator_{tag}_l{i}"),
                commutator_check(&lc, &sections),
                bound,
            ));
            if alpha > 0.0 {
                let s = alpha / lam.norm();
                out.rows.push(CheckRow::upper(
                    format!("lax_g_condition_{tag}_l{i}"),
                    lc.g_condition,
                    (4.0 * s * gen.field.sup_norm()).exp(),
                ));
                out.rows.push(CheckRow::upper(
                    format!("lax_absorption_rel_{tag}_l{i}"),
                    absorption_defect(&lc, &sol.config) / (alpha * b_sup).max(1e-30),
                    2.0,
                ));
            }
        }
    }

    // y-refinement orders on the diagonal family. Neither can reach the
    // second-order rate a true zero of the moment equations would show: the
    // flatness sup is dominated by the family's refinement-invariant
    // transverse source, and the commutator defect differentiates the
    // discretely solved generator, whose error is not smooth in y. The rows
    // keep the solution-rate bar and fail on the family by construction.
    let alpha_ref = cfg.alpha_max;
    let lam0 = cfg.lambdas[0];
    let fine_grid = refined_y(grid, st)?;
    let mut f11_levels = [0.0f64; 2];
    let mut comm_levels = [0.0f64; 2];
    for (k, g) in [grid, fine_grid].into_iter().enumerate() {
        let sol = solve_abelian(abelian_params(cfg, alpha_ref), g, cfg.epsilon);
        let gen = solve_generator(&sol.config).map_err(stage_err(st))?;
        let lc = build_lax(&sol.config, &gen, lam0).map_err(stage_err(st))?;
        f11_levels[k] = lax_curvature(&lc, &sol.config).sup_norm();
        comm_levels[k] = commutator_check(&lc, &x_frozen_sections(g));
    }
    let f11_order = (f11_levels[0] / f11_levels[1]).log2();
    let comm_order = (comm_levels[0] / comm_levels[1]).log2();
    out.rows.push(CheckRow::lower("lax_f11_yrefine_order_min", f11_order, 1.8));
    out.rows.push(CheckRow::lower("lax_commutator_yrefine_order_min", comm_order, 1.8));
    out.notes.push(format!(
        "y-refinement {}x{} -> {}x{} at lambda = {lam0}: flatness {:.6e} -> {:.6e} (order {f11_order:.2}), commutator {:.6e} -> {:.6e} (order {comm_order:.2}) on x-frozen sections",
        grid.nx(),
        grid.ny(),
        fine_grid.nx(),
        fine_grid.ny(),
        f11_levels[0],
        f11_levels[1],
        comm_levels[0],
        comm_levels[1]
    ));
    if f11_order < 1.8 || comm_order < 1.8 {
        out.notes.push(
            "PARTIAL: the order rows hold solution-rate bars the diagonal family cannot meet: \
             its transverse curvature source does not refine, and the commutator defect \
             differentiates the discretely solved generator"
                .to_string(),
        );
    }
    Ok(out)
}

fn x_frozen_sections(grid: CylinderGrid) -> Vec<FieldGrid> {
    let swap = EndMatrix::from_vec(
        2,
        vec![C64::new(0.0, 0.0), ONE, ONE, C64::new(0.0, 0.0)],
    );
    let phase = EndMatrix::from_vec(2, vec![C64::new(0.0, 0.0), I, I, C64::new(0.0, 0.0)]);
    let h = cartan_h();
    let s1 = FieldGrid::from_fn(grid, |_x, y| {
        swap.scale(C64::new(y * (1.0 - y), 0.0)) + h.scale(C64::new(0.4 * y, 0.0))
    });
    let s2 = FieldGrid::from_fn(grid, |_x, y| {
        phase.scale(C64::new(1.0 - 0.5 * y * y, 0.0)) + swap.scale(C64::new(0.3 * (1.0 - y), 0.0))
    });
    let s3 = FieldGrid::from_fn(grid, |_x, y| {
        h.scale(C64::new(0.7 - 0.4 * y, 0.0)) + phase.scale(C64::new(0.2 * y * (1.0 - y), 0.0))
    });
    vec![s1, s2, s3]
}

fn stage_invariants(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "invariants";
    let mut out = StageOutput::new();
    let base = abelian_fixture(cfg, st, 0.0)?;
    let grid = cfg.grid();

    let base_h = hitchin_map(&base.config);
    let base_tr = base_h.traces.last().ok_or_else(|| PipelineError::Stage {
        stage: st,
        message: "rank-2 Hitchin data is empty".to_string(),
    })?;
    let mut drift = 0.0f64;
    let mut dbar_worst = base_h.dbar_sup.iter().copied().fold(0.0f64, f64::max);
    for i in 1..=cfg.steps {
        let a = cfg.alpha_max * i as f64 / cfg.steps as f64;
        let sol = solve_abelian(abelian_params(cfg, a), grid, cfg.epsilon);
        let h = hitchin_map(&sol.config);
        drift = drift.max(h.traces.last().expect("same rank").sub(base_tr).sup_norm());
        dbar_worst = dbar_worst.max(h.dbar_sup.iter().copied().fold(0.0f64, f64::max));
    }
    out.rows.push(CheckRow::upper("invariants_hitchin_drift", drift, 1e-6));
    out.rows.push(CheckRow::upper("invariants_hitchin_dbar", dbar_worst, 1e-10));

    let sol5 = solve_abelian(abelian_params(cfg, cfg.alpha_max), grid, cfg.epsilon);
    let gen = solve_generator(&sol5.config).map_err(stage_err(st))?;
    for (i, &lam) in cfg.lambdas.iter().enumerate() {
        let lc = build_lax(&sol5.config, &gen, lam).map_err(stage_err(st))?;
        out.rows.push(CheckRow::upper(
            format!("invariants_charpoly_gap_l{i}"),
            charpoly_gap(&sol5.config.phi, &lc.phi_g),
            1e-12,
        ));
    }

    // The circle monodromy of the dual flat connection: the undeformed matrix
    // is pinned at mu = 0.25 where it must be diag(i, -i); the deformation
    // phase is probed on a fixed alpha triple regardless of sweep.alpha_max.
    let q_params = AbelianParams { mu: C64::new(0.25, 0.0), nu: cfg.nu, alpha: 0.0 };
    let q_sol = solve_abelian(q_params, grid, cfg.epsilon);
    let m = monodromy(q_params, &q_sol);
    let want = EndMatrix::diag(&[I, -I]);
    let mut m0_gap = 0.0f64;
    for i in 0..2 {
        for j in 0..2 {
            m0_gap = m0_gap.max((m.m0.get(i, j) - want.get(i, j)).norm());
        }
    }
    out.rows.push(CheckRow::upper("monodromy_m0_gap", m0_gap, 1e-12));

    let alphas = [0.01, 0.02, 0.04];
    let mut thetas = Vec::new();
    let mut det_gap = 0.0f64;
    let mut phase_csv = String::from("alpha, theta_re, theta_im\n");
    for &a in &alphas {
        let p = abelian_params(cfg, a);
        let sol = solve_abelian(p, grid, cfg.epsilon);
        let mon = monodromy(p, &sol);
        let det = mon.m_alpha.charpoly()[2];
        det_gap = det_gap.max((det - ONE).norm());
        phase_csv.push_str(&format!("{a:.12e}, {:.12e}, {:.12e}\n", mon.theta.re, mon.theta.im));
        thetas.push(mon.theta);
    }
    let phase_sup = thetas.iter().map(|t| t.norm()).fold(0.0f64, f64::max);
    let dot: C64 = thetas.iter().zip(&alphas).map(|(t, &a)| t * a).sum();
    let denom: f64 = alphas.iter().map(|a| a * a).sum();
    let slope = dot / denom;
    let fit_resid = thetas
        .iter()
        .zip(&alphas)
        .map(|(t, &a)| (t - slope * a).norm())
        .fold(0.0f64, f64::max);
    let fit_rel = fit_resid / phase_sup.max(1e-10);
    out.rows.push(CheckRow::upper("monodromy_det_gap", det_gap, 1e-12));
    out.rows.push(CheckRow::upper("monodromy_phase_sup", phase_sup, 1e-12));
    out.rows.push(CheckRow::upper("monodromy_phase_fit_rel", fit_rel, 0.01));
    out.notes.push(format!(
        "monodromy M0 measured at mu = 0.25; deformation phase probed at alpha in {{0.01, 0.02, 0.04}}: sup {phase_sup:.6e}, linear-fit residual {fit_resid:.6e} against a scale floor of 1e-10"
    ));
    out.notes.push(
        "the collar coupling has zero circle average on this family, so the phase is zero to \
         rounding and the linearity check is a noise bound"
            .to_string(),
    );
    out.artifacts.push(Artifact {
        file_name: format!("{}-monodromy-phase.csv", cfg.name),
        bytes: phase_csv.into_bytes(),
    });
    Ok(out)
}

fn stage_parity(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "parity";
    let mut out = StageOutput::new();
    let grid = cfg.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut g1 = 0.0f64;
    let mut g2 = 0.0f64;
    let mut g3 = 0.0f64;
    for _ in 0..10 {
        let alpha = 0.8 * (rng.gen::<f64>() - 0.5);
        let c = random_configuration(grid, cfg.epsilon, alpha, &mut rng);
        let r = residual(&c);
        let ri = residual(&inversion_map(&c));
        g1 = g1.max(ri.r1.sub(&r.r1.negated()).sup_norm());
        g2 = g2.max(ri.r2.sub(&r.r2).sup_norm());
        g3 = g3.max(ri.r3.sub(&r.r3).sup_norm());
    }
    out.rows.push(CheckRow::upper("parity_r1_flip_gap", g1, 0.0));
    out.rows.push(CheckRow::upper("parity_r2_fixed_gap", g2, 0.0));
    out.rows.push(CheckRow::upper("parity_r3_fixed_gap", g3, 0.0));
    out.notes.push(
        "flipping (psi, alpha) negates the first residual bitwise and fixes the other two; \
         the zero thresholds are exact-equality claims"
            .to_string(),
    );

    let sol = abelian_fixture(cfg, st, cfg.alpha_max)?;
    let transported = inversion_map(&sol.config);
    let gap = (residual(&transported).sup_norm() - residual(&sol.config).sup_norm()).abs();
    out.rows.push(CheckRow::upper("parity_solution_transport_gap", gap, 0.0));

    // Two-path synthesis needs a deformed solution on both sides; it runs on
    // the fixed 8x9 probe grid where the attempt is cheap.
    let probe_grid = CylinderGrid::new(8, 9, 2).map_err(stage_err(st))?;
    let seed = solve_abelian(abelian_params(cfg, 0.0), probe_grid, cfg.epsilon);
    let settings = cfg.newton();
    match (
        newton_solve(&seed.config, cfg.alpha_max, &settings),
        newton_solve(&seed.config, -cfg.alpha_max, &settings),
    ) {
        (Ok(plus), Ok(minus)) => {
            let synthesized = inversion_map(&plus.config);
            out.rows.push(CheckRow::upper(
                "parity_two_path_gap",
                field_gap(&synthesized, &minus.config),
                1e-8,
            ));
        }
        _ => {
            out.rows.push(CheckRow::lower("parity_two_path_available_min", 0.0, 1.0));
            out.notes.push(
                "PARTIAL: no deformed solution exists to synthesize from — the wall-flux defect \
                 stalls Newton at both signs of alpha on the probe grid"
                    .to_string(),
            );
        }
    }
    Ok(out)
}

fn stage_embed_check(cfg: &RunConfig) -> Result<StageOutput, PipelineError> {
    let st = "embed-check";
    let mut out = StageOutput::new();
    if cfg.rank < 2 {
        return Err(PipelineError::Stage {
            stage: st,
            message: format!("composite-field checks need rank >= 2, but grid.rank = {}", cfg.rank),
        });
    }
    let grid = cfg.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut call_gap = 0.0f64;
    for _ in 0..10 {
        let alpha = 0.8 * (rng.gen::<f64>() - 0.5);
        let c = random_configuration(grid, cfg.epsilon, alpha, &mut rng);
        let emb = residual_embedded(&c);
        let comp = composite(&c.phi, &c.psi, c.alpha);
        let direct = classical_r3(&c.ax, &c.ay, &comp.field);
        call_gap = call_gap.max(emb.r3.sub(&direct).sup_norm());
    }
    out.rows.push(CheckRow::upper("embed_call_path_gap", call_gap, 0.0));

    let d = EndMatrix::diag(&[ONE, C64::new(0.6, -0.2)]);
    let w = |x: f64, y: f64| (I * (TWO_PI * x)).exp() * (-TWO_PI * y).exp();
    let phi = FieldGrid::from_fn(grid, |x, y| d.scale(w(x, y)));
    let psi = FieldGrid::from_fn(grid, |x, y| d.scale(C64::new(0.5, 0.1) * w(x, y)));
    let c0 = composite(&phi, &psi, 0.0).field;
    let mut commuting_gap = 0.0f64;
    for a in [0.3, 1.7] {
        commuting_gap = commuting_gap.max(composite(&phi, &psi, a).field.sub(&c0).sup_norm());
    }
    out.rows.push(CheckRow::upper("embed_commuting_alpha_gap", commuting_gap, 0.0));

    let pr = random_field(grid, 0.5, &mut rng);
    let qr = random_field(grid, 0.5, &mut rng);
    let comp = composite(&pr, &qr, 0.45);
    let b = bracket_pointwise(&comp.field, &comp.field.dagger());
    out.rows.push(CheckRow::upper(
        "embed_moment_hermitian_gap",
        b.sub(&b.dagger()).sup_norm(),
        1e-13,
    ));

    let u = random_field(grid, 0.5, &mut rng);
    let neg = u.negated();
    let cancelled = composite(&u, &neg, 0.6);
    out.rows.push(CheckRow::upper(
        "embed_cancelling_pair_dbar",
        dbar(&cancelled.field).sup_norm(),
        1e-14,
    ));
    out.notes.push(format!(
        "cancelling pair: the parent has dbar sup {:.6e} while the composite sits at roundoff — \
         composite holomorphy pins down neither parent",
        dbar(&u).sup_norm()
    ));

    let mut min_ratio = f64::INFINITY;
    for _ in 0..20 {
        let phi = random_field(grid, 0.5, &mut rng);
        let psi = random_field(grid, 0.5, &mut rng);
        let comp = composite(&phi, &psi, 0.6);
        let parent = dbar(&phi).sup_norm() + dbar(&psi).sup_norm();
        min_ratio = min_ratio.min(dbar(&comp.field).sup_norm() / parent);
    }
    out.rows.push(CheckRow::lower("embed_converse_search_ratio_min", min_ratio, 0.2));
    out.notes.push(format!(
        "generic cancellation search over 20 seeded pairs: smallest composite-to-parent defect \
         ratio {min_ratio:.4e}"
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn probe_cfg() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.nx = 8;
        cfg.ny = 9;
        cfg.steps = 2;
        cfg.name = "probe".into();
        cfg
    }

    fn row<'a>(out: &'a PipelineOutput, name: &str) -> &'a CheckRow {
        out.rows
            .iter()
            .find(|r| r.name == name)
            .unwrap_or_else(|| panic!("missing row {name}"))
    }

    #[test]
    fn pipeline_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
            assert_eq!(p.to_string(), p.name());
        }
        let err = "fix-everything".parse::<Pipeline>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fix-everything"));
        for p in Pipeline::ALL {
            assert!(msg.contains(p.name()), "error should list {}", p.name());
        }
    }

    #[test]
    fn row_pass_semantics_cover_nan() {
        assert!(CheckRow::upper("u", 1.0, 1.0).pass);
        assert!(!CheckRow::upper("u", 1.0 + 1e-15, 1.0).pass);
        assert!(CheckRow::lower("l_min", 2.0, 1.0).pass);
        assert!(!CheckRow::lower("l_min", 0.5, 1.0).pass);
        assert!(!CheckRow::upper("u", f64::NAN, 1.0).pass);
        assert!(!CheckRow::lower("l_min", f64::NAN, 0.0).pass);
        assert!(CheckRow::upper("u", 0.0, 0.0).line().starts_with("PASS"));
    }

    #[test]
    fn reports_and_artifacts_are_bit_reproducible() {
        let cfg = RunConfig::default();
        for p in [Pipeline::SolveAbelian, Pipeline::Invariants, Pipeline::EmbedCheck] {
            let a = run_experiment(&cfg, p).unwrap();
            let b = run_experiment(&cfg, p).unwrap();
            assert_eq!(a.csv(), b.csv(), "{p} CSV differs between runs");
            assert_eq!(a.report, b.report, "{p} report differs between runs");
            assert_eq!(a.artifacts.len(), b.artifacts.len());
            for (x, y) in a.artifacts.iter().zip(&b.artifacts) {
                assert_eq!(x.file_name, y.file_name);
                assert_eq!(x.bytes, y.bytes, "{} differs between runs", x.file_name);
            }
        }
    }

    #[test]
    fn abelian_rows_pass_and_pin_second_order_at_defaults() {
        let out = run_experiment(&RunConfig::default(), Pipeline::SolveAbelian).unwrap();
        assert!(out.all_pass(), "failing rows:\n{}", out.report);
        let ratio = row(&out, "abelian_oracle_ratio_min");
        assert!(ratio.value > 3.5 && ratio.value < 4.5);
        assert!(row(&out, "abelian_oracle_error_fine").value < 5e-3);
        assert_eq!(row(&out, "abelian_oracle_error_fine").threshold, 5e-3);
        let names: Vec<&str> = out.artifacts.iter().map(|a| a.file_name.as_str()).collect();
        assert_eq!(names, ["hhlab-abelian-profile.csv", "hhlab-abelian-alpha0.hhlab"]);
    }

    #[test]
    fn sourceless_run_reports_zero_top_defect() {
        let mut cfg = probe_cfg();
        cfg.nu = C64::new(0.17, 0.0);
        let out = run_experiment(&cfg, Pipeline::SolveAbelian).unwrap();
        assert!(out.all_pass(), "failing rows:\n{}", out.report);
        assert!(out.report.contains("p_top_defect = 0"));
        assert!(out.rows.iter().all(|r| !r.name.starts_with("abelian_oracle_ratio")));
        assert_eq!(row(&out, "abelian_p_top_defect").value, 0.0);
        assert_eq!(row(&out, "abelian_r3_source_magnitude_gap").value, 0.0);
    }

    #[test]
    fn misconfigured_rank_names_the_failing_stage() {
        let mut cfg = probe_cfg();
        cfg.rank = 3;
        let err = run_experiment(&cfg, Pipeline::SolveAbelian).unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("solve-abelian:"), "got: {msg}");
        assert!(msg.contains("rank"), "got: {msg}");
    }

    #[test]
    fn output_files_land_and_the_snapshot_round_trips() {
        let cfg = probe_cfg();
        let out = run_experiment(&cfg, Pipeline::SolveAbelian).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = write_outputs(&out, &cfg, dir.path()).unwrap();
        let names: Vec<String> = written
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            [
                "probe-solve-abelian.csv",
                "probe-solve-abelian-report.txt",
                "probe-solve-abelian-config.txt",
                "probe-abelian-profile.csv",
                "probe-abelian-alpha0.hhlab",
            ]
        );
        for p in &written {
            assert!(p.exists());
        }
        assert_eq!(fs::read(&written[0]).unwrap(), out.csv().into_bytes());
        let snapshot = fs::read_to_string(&written[2]).unwrap();
        assert_eq!(parse_config(&snapshot).unwrap(), cfg);
    }

    #[test]
    fn full_suite_emits_the_contract_with_honest_failures() {
        let cfg = probe_cfg();
        let out = run_experiment(&cfg, Pipeline::FullSuite).unwrap();

        assert!(out.rows.len() >= 20, "only {} rows", out.rows.len());
        for r in &out.rows {
            assert!(r.value.is_finite(), "{} is not finite", r.name);
        }
        for title in [
            "solve-abelian",
            "continue",
            "constants",
            "lax-check",
            "invariants",
            "parity",
            "embed-check",
        ] {
            assert!(out.report.contains(&format!("== {title} ==")), "missing section {title}");
        }

        // The seed family is not a zero of the discrete system, so the
        // convergence rows and the solution-rate order rows fail; everything
        // else must hold, and the stalls must sit on the predicted floor.
        let structural_failures = [
            "continuation_seed_polish_converged_min",
            "continuation_alpha_reached_min",
            "picard_converged_min",
            "parity_two_path_available_min",
            "lax_f11_yrefine_order_min",
            "lax_commutator_yrefine_order_min",
        ];
        for r in out.rows.iter().filter(|r| !r.pass) {
            assert!(
                structural_failures.contains(&r.name.as_str()),
                "unexpected failing row: {}",
                r.line()
            );
        }
        for name in [
            "continuation_stall_vs_half_defect",
            "picard_stall_vs_half_defect",
            "constants_kernel_dim",
            "cokernel_sigma_alpha0_min",
            "cokernel_sigma_collapse_ratio",
            "linearization_dense_gap",
            "parity_r1_flip_gap",
            "monodromy_m0_gap",
            "invariants_hitchin_drift",
        ] {
            assert!(row(&out, name).pass, "row should pass: {}", row(&out, name).line());
        }
        assert!(out.report.contains("PARTIAL"));

        let csv = out.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("check_name, value, threshold, pass"));
        assert_eq!(lines.count(), out.rows.len());
    }
}
