//! Run configuration: a flat key=value text format, one key per line,
//! dotted key names, '#' comments. Unknown keys are hard errors — a typo in
//! a threshold should stop the run, not silently fall back to a default.

use crate::continuation::NewtonSettings;
use crate::surface::CylinderGrid;
use crate::C64;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RunConfigError {
    #[error("line {line}: expected key=value, got '{text}'")]
    Malformed { line: usize, text: String },
    #[error("line {line}: unknown key {key}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: {key} expects {kind}, got '{value}'")]
    BadValue { line: usize, key: String, kind: &'static str, value: String },
    #[error("{0}")]
    Invalid(String),
}

/// Everything a pipeline run needs, fully validated. Every field has a
/// default, so an empty config file is a valid one.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub nx: usize,
    pub ny: usize,
    pub rank: usize,
    pub epsilon: f64,
    pub mu: C64,
    pub nu: C64,
    pub alpha_max: f64,
    pub steps: usize,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub picard_max_iter: usize,
    pub lambdas: Vec<C64>,
    pub out_dir: String,
    pub name: String,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let n = NewtonSettings::default();
        RunConfig {
            nx: 16,
            ny: 17,
            rank: 2,
            epsilon: 0.2,
            mu: C64::new(0.3, 0.0),
            nu: C64::new(0.0, 0.2),
            alpha_max: 0.05,
            steps: 5,
            newton_tol: n.tol,
            newton_max_iter: n.max_iter,
            picard_max_iter: n.picard_max_iter,
            lambdas: vec![
                C64::new(0.5, 0.0),
                C64::new(1.0, 0.0),
                C64::new(2.0, 0.0),
                C64::new(1.0, 1.0),
            ],
            out_dir: "out".into(),
            name: "hhlab".into(),
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> CylinderGrid {
        CylinderGrid::new(self.nx, self.ny, self.rank)
            .expect("dimensions were validated at parse time")
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
            picard_max_iter: self.picard_max_iter,
            ..NewtonSettings::default()
        }
    }

    /// The config snapshot format: every key, fixed order, values printed at
    /// round-trip precision. `parse_config(canonical(&c))` reproduces `c`.
    pub fn canonical(&self) -> String {
        let join = |xs: &[f64]| {
            xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
        };
        let re: Vec<f64> = self.lambdas.iter().map(|l| l.re).collect();
        let im: Vec<f64> = self.lambdas.iter().map(|l| l.im).collect();
        format!(
            "grid.nx={}\ngrid.ny={}\ngrid.rank={}\ngrid.epsilon={}\n\
             abelian.mu_re={}\nabelian.mu_im={}\nabelian.nu_re={}\nabelian.nu_im={}\n\
             sweep.alpha_max={}\nsweep.steps={}\n\
             newton.tol={}\nnewton.max_iter={}\nnewton.picard_max_iter={}\n\
             lax.lambda_re={}\nlax.lambda_im={}\n\
             output.dir={}\nrun.name={}\nrun.seed={}\n",
            self.nx,
            self.ny,
            self.rank,
            self.epsilon,
            self.mu.re,
            self.mu.im,
            self.nu.re,
            self.nu.im,
            self.alpha_max,
            self.steps,
            self.newton_tol,
            self.newton_max_iter,
            self.picard_max_iter,
            join(&re),
            join(&im),
            self.out_dir,
            self.name,
            self.seed,
        )
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, RunConfigError> {
    let mut cfg = RunConfig::default();
    let mut lambda_re: Option<Vec<f64>> = None;
    let mut lambda_im: Option<Vec<f64>> = None;
    let mut seen: HashSet<String> = HashSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => return Err(RunConfigError::Malformed { line, text: body.into() }),
        };
        if key.is_empty() || value.is_empty() {
            return Err(RunConfigError::Malformed { line, text: body.into() });
        }
        if !seen.insert(key.to_string()) {
            return Err(RunConfigError::DuplicateKey { line, key: key.into() });
        }

        let bad = |kind: &'static str| RunConfigError::BadValue {
            line,
            key: key.into(),
            kind,
            value: value.into(),
        };
        let as_usize = || value.parse::<usize>().map_err(|_| bad("an unsigned integer"));
        let as_u64 = || value.parse::<u64>().map_err(|_| bad("an unsigned integer"));
        let as_f64 = || value.parse::<f64>().map_err(|_| bad("a number"));
        let as_list = || -> Result<Vec<f64>, RunConfigError> {
            value
                .split(',')
                .map(|piece| piece.trim().parse::<f64>().map_err(|_| bad("a comma-separated number list")))
                .collect()
        };

        match key {
            "grid.nx" => cfg.nx = as_usize()?,
            "grid.ny" => cfg.ny = as_usize()?,
            "grid.rank" => cfg.rank = as_usize()?,
            "grid.epsilon" => cfg.epsilon = as_f64()?,
            "abelian.mu_re" => cfg.mu.re = as_f64()?,
            "abelian.mu_im" => cfg.mu.im = as_f64()?,
            "abelian.nu_re" => cfg.nu.re = as_f64()?,
            "abelian.nu_im" => cfg.nu.im = as_f64()?,
            "sweep.alpha_max" => cfg.alpha_max = as_f64()?,
            "sweep.steps" => cfg.steps = as_usize()?,
            "newton.tol" => cfg.newton_tol = as_f64()?,
            "newton.max_iter" => cfg.newton_max_iter = as_usize()?,
            "newton.picard_max_iter" => cfg.picard_max_iter = as_usize()?,
            "lax.lambda_re" => lambda_re = Some(as_list()?),
            "lax.lambda_im" => lambda_im = Some(as_list()?),
            "output.dir" => cfg.out_dir = value.into(),
            "run.name" => cfg.name = value.into(),
            "run.seed" => cfg.seed = as_u64()?,
            _ => return Err(RunConfigError::UnknownKey { line, key: key.into() }),
        }
    }

    match (lambda_re, lambda_im) {
        (None, None) => {}
        (re, im) => {
            let re = re.unwrap_or_else(|| cfg.lambdas.iter().map(|l| l.re).collect());
            let im = im.unwrap_or_else(|| cfg.lambdas.iter().map(|l| l.im).collect());
            if re.len() != im.len() {
                return Err(RunConfigError::Invalid(
                    "lax.lambda_re and lax.lambda_im must list the same number of entries".into(),
                ));
            }
            cfg.lambdas = re.iter().zip(im.iter()).map(|(&r, &i)| C64::new(r, i)).collect();
        }
    }

    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), RunConfigError> {
    let fail = |msg: &str| Err(RunConfigError::Invalid(msg.into()));
    if cfg.nx < 8 || cfg.nx % 2 != 0 {
        return fail("grid.nx must be even and ≥ 8");
    }
    if cfg.ny < 9 {
        return fail("grid.ny must be at least 9");
    }
    if cfg.rank < 1 {
        return fail("grid.rank must be at least 1");
    }
    if !(cfg.epsilon > 0.0 && cfg.epsilon < 0.5) {
        return fail("grid.epsilon must lie strictly between 0 and 0.5");
    }
    if !(cfg.alpha_max >= 0.0 && cfg.alpha_max.is_finite()) {
        return fail("sweep.alpha_max must be finite and nonnegative");
    }
    if cfg.steps < 1 {
        return fail("sweep.steps must be at least 1");
    }
    if !(cfg.newton_tol > 0.0 && cfg.newton_tol.is_finite()) {
        return fail("newton.tol must be a positive number");
    }
    if cfg.newton_max_iter < 1 {
        return fail("newton.max_iter must be at least 1");
    }
    if cfg.picard_max_iter < 1 {
        return fail("newton.picard_max_iter must be at least 1");
    }
    if cfg.lambdas.is_empty() {
        return fail("lax.lambda list must not be empty");
    }
    if cfg.lambdas.iter().any(|l| l.norm() < 1e-8) {
        return fail("lax.lambda entries must have modulus at least 1e-8");
    }
    if cfg.name.is_empty()
        || !cfg.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
    {
        return fail("run.name must be nonempty and use only letters, digits, '-' and '_'");
    }
    if cfg.out_dir.is_empty() {
        return fail("output.dir must be nonempty");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_keys_override_defaults_only() {
        let text = "grid.nx=16\ngrid.ny=17\nabelian.mu_re=0.3\nabelian.nu_im=0.2\n\
                    sweep.alpha_max=0.05\nsweep.steps=5";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg, RunConfig::default());

        let cfg = parse_config("grid.nx=24\nrun.seed=7").unwrap();
        assert_eq!(cfg.nx, 24);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.ny, 17);
        assert_eq!(cfg.nu, C64::new(0.0, 0.2));
    }

    #[test]
    fn empty_text_is_the_default_config() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn odd_nx_is_rejected_with_the_constraint() {
        let err = parse_config("grid.nx=7").unwrap_err();
        assert_eq!(err.to_string(), "grid.nx must be even and ≥ 8");
    }

    #[test]
    fn unknown_key_is_a_hard_error() {
        let err = parse_config("grid.nz=4").unwrap_err();
        assert_eq!(err, RunConfigError::UnknownKey { line: 1, key: "grid.nz".into() });
        assert!(err.to_string().contains("grid.nz"));
    }

    #[test]
    fn malformed_lines_carry_their_line_number() {
        let err = parse_config("grid.nx=16\nnot a key value pair\n").unwrap_err();
        assert_eq!(
            err,
            RunConfigError::Malformed { line: 2, text: "not a key value pair".into() }
        );
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("run.seed=1\n# comment\nrun.seed=2").unwrap_err();
        assert_eq!(err, RunConfigError::DuplicateKey { line: 3, key: "run.seed".into() });
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = parse_config("# full-line comment\n\n  grid.nx = 32  # trailing comment\n")
            .unwrap();
        assert_eq!(cfg.nx, 32);
    }

    #[test]
    fn numbers_are_checked_per_key() {
        let err = parse_config("grid.nx=sixteen").unwrap_err();
        assert!(matches!(err, RunConfigError::BadValue { line: 1, .. }));
        assert!(err.to_string().contains("grid.nx"));
        let err = parse_config("newton.tol=fast").unwrap_err();
        assert!(matches!(err, RunConfigError::BadValue { .. }));
    }

    #[test]
    fn lambda_lists_must_pair_up() {
        let err = parse_config("lax.lambda_re=1,2\nlax.lambda_im=0").unwrap_err();
        assert!(err.to_string().contains("same number of entries"));
        let cfg = parse_config("lax.lambda_re=0.5,3\nlax.lambda_im=0,4").unwrap();
        assert_eq!(cfg.lambdas, vec![C64::new(0.5, 0.0), C64::new(3.0, 4.0)]);
        // replacing only one list reuses the other side's defaults
        let cfg = parse_config("lax.lambda_re=1,2,3,4").unwrap();
        assert_eq!(cfg.lambdas[3], C64::new(4.0, 1.0));
    }

    #[test]
    fn near_zero_spectral_parameters_are_rejected() {
        let err = parse_config("lax.lambda_re=0\nlax.lambda_im=0").unwrap_err();
        assert!(err.to_string().contains("modulus"));
    }

    #[test]
    fn validation_covers_the_numeric_ranges() {
        for (text, needle) in [
            ("grid.ny=5", "grid.ny"),
            ("grid.rank=0", "grid.rank"),
            ("grid.epsilon=0.5", "grid.epsilon"),
            ("grid.epsilon=-0.1", "grid.epsilon"),
            ("sweep.alpha_max=-1", "sweep.alpha_max"),
            ("sweep.steps=0", "sweep.steps"),
            ("newton.tol=0", "newton.tol"),
            ("newton.max_iter=0", "newton.max_iter"),
            ("run.name=bad name", "run.name"),
        ] {
            let err = parse_config(text).unwrap_err();
            assert!(err.to_string().contains(needle), "{text} should fail naming {needle}");
        }
    }

    #[test]
    fn canonical_snapshot_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.nx = 24;
        cfg.nu = C64::new(0.125, -0.3);
        cfg.alpha_max = 0.07;
        cfg.lambdas = vec![C64::new(0.5, 0.0), C64::new(1.0, -2.0)];
        cfg.name = "round-trip".into();
        let text = cfg.canonical();
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
