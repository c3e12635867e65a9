//! Run settings: defaults, flat `key=value` config files, and command-line
//! overrides, with precedence defaults < file < flags.
//!
//! Keys: `case, r, L, basis, T, tau_list, n_list, ref_tau, ref_n, samples,
//! base_seed, out_dir, workers, cases`. Unknown keys are rejected. Time steps
//! accept either decimals (`0.125`) or powers of two (`2^-7`).

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{ExperimentConfig, StudyKind};
use crate::noise::BasisKind;

/// Fixed model facts of the experimental setup (printed by `--show-config`).
pub const DOMAIN: &str = "[0,1]x[0,1]";
pub const FORCING: [f64; 2] = [1.0, 1.0];
pub const INITIAL_VALUE: [f64; 2] = [0.0, 0.0];
pub const EPSILON: f64 = 0.1;

/// Noise cases: regularity exponent and default truncation level.
pub fn case_parameters(case: &str) -> Option<(f64, usize)> {
    match case {
        "I" => Some((2.0, 32)),
        "II" => Some((1.0, 64)),
        "III" => Some((0.5, 64)),
        _ => None,
    }
}

/// Mutable run settings assembled from defaults, a config file, and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub case: String,
    /// Explicit overrides of the case defaults.
    pub r: Option<f64>,
    pub l_max: Option<usize>,
    pub basis: String,
    pub t_final: f64,
    pub tau_list: Vec<f64>,
    pub n_list: Vec<usize>,
    pub ref_tau: f64,
    pub ref_n: usize,
    pub samples: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub workers: usize,
    /// Cases for the comparison study.
    pub cases: Vec<String>,
}

impl RunSettings {
    /// Defaults for a temporal study: fixed mesh, dyadic steps, fine
    /// reference in time.
    pub fn time_defaults() -> Self {
        Self {
            case: "I".into(),
            r: None,
            l_max: None,
            basis: "cosine".into(),
            t_final: 1.0,
            tau_list: vec![
                2f64.powi(-2),
                2f64.powi(-3),
                2f64.powi(-4),
                2f64.powi(-5),
                2f64.powi(-6),
            ],
            n_list: vec![32],
            ref_tau: 2f64.powi(-9),
            ref_n: 32,
            samples: 128,
            base_seed: 42,
            out_dir: PathBuf::from("out"),
            workers: 0,
            cases: vec!["I".into(), "II".into(), "III".into()],
        }
    }

    /// Defaults for a spatial study: fixed step, nested meshes, fine
    /// reference mesh.
    pub fn space_defaults() -> Self {
        Self {
            tau_list: vec![2f64.powi(-7)],
            n_list: vec![2, 4, 8, 16],
            ref_tau: 2f64.powi(-7),
            ref_n: 64,
            ..Self::time_defaults()
        }
    }

    /// Effective noise regularity after case/override resolution.
    pub fn effective_r(&self) -> Result<f64> {
        if let Some(r) = self.r {
            return Ok(r);
        }
        case_parameters(&self.case)
            .map(|(r, _)| r)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown case '{}' and no explicit r given",
                    self.case
                ))
            })
    }

    pub fn effective_l_max(&self) -> Result<usize> {
        if let Some(l) = self.l_max {
            return Ok(l);
        }
        case_parameters(&self.case)
            .map(|(_, l)| l)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown case '{}' and no explicit L given",
                    self.case
                ))
            })
    }

    pub fn effective_basis(&self) -> Result<BasisKind> {
        self.basis.parse()
    }

    /// Applies one `key=value` assignment.
    pub fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        let err = |msg: String| Error::Parse { line, msg };
        match key {
            "case" => self.case = value.to_string(),
            "cases" => {
                self.cases = value.split(',').map(|s| s.trim().to_string()).collect();
                if self.cases.is_empty() {
                    return Err(err("cases list is empty".into()));
                }
            }
            "r" => self.r = Some(parse_f64(value).map_err(|m| err(m))?),
            "L" => self.l_max = Some(parse_usize(value).map_err(|m| err(m))?),
            "basis" => self.basis = value.to_string(),
            "T" => self.t_final = parse_f64(value).map_err(|m| err(m))?,
            "tau_list" => self.tau_list = parse_f64_list(value).map_err(|m| err(m))?,
            "n_list" => self.n_list = parse_usize_list(value).map_err(|m| err(m))?,
            "ref_tau" => self.ref_tau = parse_f64(value).map_err(|m| err(m))?,
            "ref_n" => self.ref_n = parse_usize(value).map_err(|m| err(m))?,
            "samples" => self.samples = parse_usize(value).map_err(|m| err(m))?,
            "base_seed" => {
                self.base_seed = value
                    .parse::<u64>()
                    .map_err(|_| err(format!("invalid base_seed '{value}'")))?
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "workers" => self.workers = parse_usize(value).map_err(|m| err(m))?,
            other => return Err(err(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Merges a flat key=value config file over the current settings.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(Error::Parse {
                line,
                msg: format!("expected key=value, got '{trimmed}'"),
            })?;
            self.apply(key.trim(), value.trim(), line)?;
        }
        Ok(())
    }

    /// Builds the engine configuration for a convergence study.
    pub fn to_experiment(&self, kind: StudyKind, zero_noise: bool) -> Result<ExperimentConfig> {
        let (r, l_max) = if zero_noise {
            (2.0, 1)
        } else {
            (self.effective_r()?, self.effective_l_max()?)
        };
        let cfg = ExperimentConfig {
            kind,
            case: if zero_noise {
                "deterministic".into()
            } else {
                self.case.clone()
            },
            r,
            l_max,
            basis: self.effective_basis()?,
            zero_noise,
            n_levels: self.n_list.clone(),
            tau_levels: self.tau_list.clone(),
            ref_n: self.ref_n,
            ref_tau: self.ref_tau,
            t_final: self.t_final,
            forcing: FORCING,
            samples: self.samples,
            base_seed: self.base_seed,
            out_dir: self.out_dir.clone(),
            workers: self.workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The effective configuration as config-file text; also the
    /// `--show-config` output.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("case={}\n", self.case));
        if let Some(r) = self.r {
            out.push_str(&format!("r={r}\n"));
        } else if let Ok(r) = self.effective_r() {
            out.push_str(&format!("r={r}\n"));
        }
        if let Some(l) = self.l_max {
            out.push_str(&format!("L={l}\n"));
        } else if let Ok(l) = self.effective_l_max() {
            out.push_str(&format!("L={l}\n"));
        }
        out.push_str(&format!("basis={}\n", self.basis));
        out.push_str(&format!("T={}\n", self.t_final));
        out.push_str(&format!("tau_list={}\n", join_f64(&self.tau_list)));
        out.push_str(&format!("n_list={}\n", join_usize(&self.n_list)));
        out.push_str(&format!("ref_tau={}\n", self.ref_tau));
        out.push_str(&format!("ref_n={}\n", self.ref_n));
        out.push_str(&format!("samples={}\n", self.samples));
        out.push_str(&format!("base_seed={}\n", self.base_seed));
        out.push_str(&format!("out_dir={}\n", self.out_dir.display()));
        out.push_str(&format!("workers={}\n", self.workers));
        out.push_str(&format!("cases={}\n", self.cases.join(",")));
        // fixed model facts
        out.push_str(&format!("# domain={DOMAIN}\n"));
        out.push_str(&format!("# f=({}, {})\n", FORCING[0], FORCING[1]));
        out.push_str(&format!(
            "# u0=({}, {})\n",
            INITIAL_VALUE[0], INITIAL_VALUE[1]
        ));
        out.push_str(&format!("# epsilon={EPSILON}\n"));
        out
    }
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_usize(values: &[usize]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses `0.125`, `1`, or `2^-7`.
pub fn parse_f64(raw: &str) -> std::result::Result<f64, String> {
    let raw = raw.trim();
    if let Some((base, exp)) = raw.split_once('^') {
        let base: f64 = base
            .trim()
            .parse()
            .map_err(|_| format!("invalid number '{raw}'"))?;
        let exp: i32 = exp
            .trim()
            .parse()
            .map_err(|_| format!("invalid exponent in '{raw}'"))?;
        return Ok(base.powi(exp));
    }
    raw.parse().map_err(|_| format!("invalid number '{raw}'"))
}

fn parse_usize(raw: &str) -> std::result::Result<usize, String> {
    raw.trim()
        .parse()
        .map_err(|_| format!("invalid integer '{raw}'"))
}

pub fn parse_f64_list(raw: &str) -> std::result::Result<Vec<f64>, String> {
    let list: std::result::Result<Vec<f64>, String> =
        raw.split(',').map(|s| parse_f64(s)).collect();
    let list = list?;
    if list.is_empty() {
        return Err("empty list".into());
    }
    Ok(list)
}

pub fn parse_usize_list(raw: &str) -> std::result::Result<Vec<usize>, String> {
    let list: std::result::Result<Vec<usize>, String> =
        raw.split(',').map(parse_usize).collect();
    let list = list?;
    if list.is_empty() {
        return Err("empty list".into());
    }
    Ok(list)
}
