//! Monte Carlo strong-error estimation against coupled fine-discretization
//! references, convergence-rate fitting, stability audit, and persistence.
//!
//! For every sample the coarse and reference solvers consume the same
//! Brownian tableau, so the error at a level is a pathwise difference and the
//! study measures the strong (mean-square) discretization error. Errors are
//! evaluated at the final time on the reference mesh's quadrature points;
//! both solutions go through the same evaluation path, which makes the error
//! at the reference level exactly zero.
//!
//! Per-sample records are persisted next to the aggregated results, so an
//! interrupted study resumes by recomputing only the missing
//! `(level, sample)` pairs; determinism of the per-sample seeding makes the
//! resumed table identical to an uninterrupted run.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;

use crate::assemble::AssembledOperators;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::noise::{mix64, BasisKind, BrownianTableau, NoiseModel};
use crate::quadrature::QuadratureRule;
use crate::solver::{
    integer_ratio, run_trajectory, steps_dividing, Forcing, StepSystem, Trajectory,
};
use crate::space::{evaluate_on_fine_quadrature, quadrature_l2_sq, MiniSpace};

/// What a study varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyKind {
    Time,
    Space,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Time => "time",
            StudyKind::Space => "space",
        }
    }
}

/// Parameters of one convergence study.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: StudyKind,
    /// Case label for reporting ("I", "II", "III", or "custom").
    pub case: String,
    pub r: f64,
    pub l_max: usize,
    pub basis: BasisKind,
    /// All covariance eigenvalues forced to zero (deterministic sanity runs).
    pub zero_noise: bool,
    pub n_levels: Vec<usize>,
    pub tau_levels: Vec<f64>,
    pub ref_n: usize,
    pub ref_tau: f64,
    pub t_final: f64,
    pub forcing: [f64; 2],
    pub samples: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads for the sample pool; 0 picks the machine default.
    pub workers: usize,
}

/// One tested discretization level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpec {
    pub n: usize,
    pub tau: f64,
}

impl ExperimentConfig {
    pub fn levels(&self) -> Vec<LevelSpec> {
        match self.kind {
            StudyKind::Time => {
                let n = self.n_levels[0];
                self.tau_levels
                    .iter()
                    .map(|&tau| LevelSpec { n, tau })
                    .collect()
            }
            StudyKind::Space => {
                let tau = self.tau_levels[0];
                self.n_levels
                    .iter()
                    .map(|&n| LevelSpec { n, tau })
                    .collect()
            }
        }
    }

    /// File tag distinguishing sidecars of different studies in one directory.
    pub fn tag(&self) -> String {
        format!("{}_{}", self.kind.as_str(), self.case)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_levels.is_empty() || self.tau_levels.is_empty() {
            return Err(Error::Config("level lists must be non-empty".into()));
        }
        if self.kind == StudyKind::Time && self.n_levels.len() != 1 {
            return Err(Error::Config(
                "a time study uses a single mesh resolution".into(),
            ));
        }
        if self.kind == StudyKind::Space && self.tau_levels.len() != 1 {
            return Err(Error::Config("a space study uses a single time step".into()));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::Config("final time must be positive".into()));
        }
        if self.samples < 1 {
            return Err(Error::Config("at least one sample is required".into()));
        }
        if !self.zero_noise && !(self.r > 0.0 && self.r <= 2.0) {
            return Err(Error::Config(format!(
                "noise regularity r must lie in (0, 2], got {}",
                self.r
            )));
        }
        steps_dividing(self.t_final, self.ref_tau)
            .map_err(|e| Error::Config(e.to_string()))?;
        for spec in self.levels() {
            if self.ref_n % spec.n != 0 || self.ref_n < spec.n {
                return Err(Error::NonNested {
                    coarse: spec.n,
                    fine: self.ref_n,
                });
            }
            steps_dividing(self.t_final, spec.tau)
                .map_err(|e| Error::Config(e.to_string()))?;
            integer_ratio(spec.tau, self.ref_tau)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        // the reference must be strictly finer along the studied axis
        match self.kind {
            StudyKind::Time => {
                let min_tau = self
                    .tau_levels
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                if self.ref_tau >= min_tau {
                    return Err(Error::Config(
                        "reference time step must be strictly finer than every tested level"
                            .into(),
                    ));
                }
            }
            StudyKind::Space => {
                let max_n = *self.n_levels.iter().max().unwrap();
                if self.ref_n <= max_n {
                    return Err(Error::Config(
                        "reference mesh must be strictly finer than every tested level".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Aggregated errors at one level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelErrorRow {
    pub study: String,
    pub case: String,
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub m_samples: usize,
    pub err_u_ms: f64,
    pub err_u_se: f64,
    pub err_pint_ms: f64,
    pub err_pint_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    pub quantity: String,
    pub slope: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub rows: Vec<LevelErrorRow>,
    pub slopes: Vec<SlopeFit>,
    pub warnings: Vec<String>,
}

/// One persisted sample record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub level: usize,
    pub sample_index: u64,
    pub err_u_sq: f64,
    pub err_pint_sq: f64,
    pub seed: u64,
}

/// Derived per-sample seed recorded in the sidecar for traceability.
pub fn sample_seed(base_seed: u64, sample_index: u64) -> u64 {
    mix64(base_seed ^ mix64(sample_index.wrapping_add(0x9E37_79B9_7F4A_7C15)))
}

/// Shared, read-only state for one discretization level.
struct LevelCtx {
    space: Arc<MiniSpace>,
    ops: Arc<AssembledOperators>,
    system: StepSystem,
    model: NoiseModel,
}

fn build_ctx(
    cfg: &ExperimentConfig,
    n: usize,
    tau: f64,
    rule: &QuadratureRule,
) -> Result<LevelCtx> {
    let mesh = Arc::new(Mesh::uniform(n)?);
    let space = Arc::new(MiniSpace::new(Arc::clone(&mesh)));
    let ops = Arc::new(AssembledOperators::assemble(&space));
    let system = StepSystem::build(&ops, tau)?;
    let model = if cfg.zero_noise {
        NoiseModel::zeroed(&mesh, rule)
    } else {
        NoiseModel::build(cfg.r, cfg.l_max, cfg.basis, &mesh, rule)?
    };
    Ok(LevelCtx {
        space,
        ops,
        system,
        model,
    })
}

fn run_level(
    ctx: &LevelCtx,
    tableau: &BrownianTableau,
    forcing: &Forcing,
    t_final: f64,
) -> Result<Trajectory> {
    run_trajectory(
        &ctx.space,
        &ctx.ops,
        &ctx.system,
        &ctx.model,
        tableau,
        forcing,
        t_final,
        &[t_final],
        None,
    )
}

/// Values of the final velocity and accumulated pressure integral on the
/// reference mesh's quadrature points.
fn values_on_reference(
    ctx: &LevelCtx,
    traj: &Trajectory,
    ref_mesh: &Arc<Mesh>,
    rule: &QuadratureRule,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, u_final) = traj
        .checkpoints
        .last()
        .ok_or_else(|| Error::InvalidArgument("trajectory has no checkpoints".into()))?;
    let u_fn = ctx.space.velocity_fn(u_final.clone())?;
    let u_vals = evaluate_on_fine_quadrature(&u_fn, ref_mesh, rule)?;
    let p_fn = ctx.space.pressure_fn(traj.pressure_integral.clone())?;
    let p_vals = evaluate_on_fine_quadrature(&p_fn, ref_mesh, rule)?;
    Ok((u_vals, p_vals))
}

fn squared_error(a: &[f64], b: &[f64], width: usize, mesh: &Mesh, rule: &QuadratureRule) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    quadrature_l2_sq(&diff, width, mesh, rule)
}

/// Computes the squared strong errors of one sample at the given levels.
fn sample_errors(
    cfg: &ExperimentConfig,
    ref_ctx: &LevelCtx,
    levels: &[LevelCtx],
    wanted: &[usize],
    sample_index: u64,
    rule: &QuadratureRule,
) -> Result<Vec<SampleRecord>> {
    let n_fine = steps_dividing(cfg.t_final, cfg.ref_tau)?;
    let tableau = BrownianTableau::sample(
        &ref_ctx.model,
        cfg.ref_tau,
        n_fine,
        cfg.base_seed,
        sample_index,
    )?;
    let forcing = Forcing::Constant(cfg.forcing);
    let ref_mesh = ref_ctx.space.mesh();
    let ref_traj = run_level(ref_ctx, &tableau, &forcing, cfg.t_final)?;
    let (ref_u, ref_p) = values_on_reference(ref_ctx, &ref_traj, ref_mesh, rule)?;

    let mut out = Vec::with_capacity(wanted.len());
    for &idx in wanted {
        let ctx = &levels[idx];
        let traj = run_level(ctx, &tableau, &forcing, cfg.t_final)?;
        let (u_vals, p_vals) = values_on_reference(ctx, &traj, ref_mesh, rule)?;
        let err_u_sq = squared_error(&u_vals, &ref_u, 2, ref_mesh, rule);
        let err_pint_sq = squared_error(&p_vals, &ref_p, 1, ref_mesh, rule);
        out.push(SampleRecord {
            level: idx,
            sample_index,
            err_u_sq,
            err_pint_sq,
            seed: sample_seed(cfg.base_seed, sample_index),
        });
    }
    Ok(out)
}

/// Squared strong errors (velocity, pressure integral) of one
/// `(level, sample)` pair, built from scratch.
pub fn estimate_strong_error(
    cfg: &ExperimentConfig,
    level_idx: usize,
    sample_index: u64,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let specs = cfg.levels();
    let spec = specs
        .get(level_idx)
        .ok_or_else(|| Error::InvalidArgument(format!("no level {level_idx}")))?;
    estimate_strong_error_at(cfg, spec.n, spec.tau, sample_index)
}

/// Strong error of an arbitrary nested `(n, tau)` pair against the
/// configured reference; comparing the reference against itself yields
/// exactly zero (identical runs through identical evaluation paths).
pub fn estimate_strong_error_at(
    cfg: &ExperimentConfig,
    n: usize,
    tau: f64,
    sample_index: u64,
) -> Result<(f64, f64)> {
    if cfg.ref_n % n != 0 || cfg.ref_n < n {
        return Err(Error::NonNested {
            coarse: n,
            fine: cfg.ref_n,
        });
    }
    integer_ratio(tau, cfg.ref_tau)?;
    steps_dividing(cfg.t_final, tau)?;
    let rule = QuadratureRule::degree6();
    let ref_ctx = build_ctx(cfg, cfg.ref_n, cfg.ref_tau, &rule)?;
    let ctx = build_ctx(cfg, n, tau, &rule)?;
    let recs = sample_errors(
        cfg,
        &ref_ctx,
        std::slice::from_ref(&ctx),
        &[0],
        sample_index,
        &rule,
    )?;
    Ok((recs[0].err_u_sq, recs[0].err_pint_sq))
}

fn effective_workers(cfg_workers: usize) -> usize {
    if cfg_workers > 0 {
        return cfg_workers;
    }
    if let Ok(v) = std::env::var("SSTOKES_WORKERS") {
        if let Ok(k) = v.parse::<usize>() {
            if k > 0 {
                return k;
            }
        }
    }
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Runs (or resumes) a convergence study; writes the per-sample sidecar and
/// returns the aggregated table.
pub fn run_convergence_study(cfg: &ExperimentConfig) -> Result<ConvergenceTable> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let rule = QuadratureRule::degree6();
    let specs = cfg.levels();
    let ref_ctx = build_ctx(cfg, cfg.ref_n, cfg.ref_tau, &rule)?;
    let levels: Vec<LevelCtx> = specs
        .iter()
        .map(|s| build_ctx(cfg, s.n, s.tau, &rule))
        .collect::<Result<_>>()?;

    let sidecar = cfg.out_dir.join(format!("samples_{}.csv", cfg.tag()));
    let existing = if sidecar.exists() {
        load_samples(&sidecar)?
    } else {
        Vec::new()
    };
    let have: HashSet<(usize, u64)> = existing
        .iter()
        .map(|r| (r.level, r.sample_index))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_workers(cfg.workers))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let computed: Vec<Vec<SampleRecord>> = pool.install(|| {
        (0..cfg.samples as u64)
            .into_par_iter()
            .map(|sample| {
                let wanted: Vec<usize> = (0..levels.len())
                    .filter(|&idx| !have.contains(&(idx, sample)))
                    .collect();
                if wanted.is_empty() {
                    Ok(Vec::new())
                } else {
                    sample_errors(cfg, &ref_ctx, &levels, &wanted, sample, &rule)
                }
            })
            .collect::<Result<_>>()
    })?;

    // merge, keeping stored records for pairs that were already complete
    let mut records: Vec<SampleRecord> = existing
        .into_iter()
        .filter(|r| r.level < levels.len() && r.sample_index < cfg.samples as u64)
        .chain(computed.into_iter().flatten())
        .collect();
    records.sort_by_key(|r| (r.level, r.sample_index));
    write_samples(&sidecar, &records)?;

    let mut rows = Vec::with_capacity(levels.len());
    let mut warnings = Vec::new();
    for (idx, spec) in specs.iter().enumerate() {
        let of_level: Vec<&SampleRecord> = records.iter().filter(|r| r.level == idx).collect();
        if of_level.len() != cfg.samples {
            return Err(Error::InvalidArgument(format!(
                "level {idx} has {} records, expected {}",
                of_level.len(),
                cfg.samples
            )));
        }
        let (u_ms, u_se) = mean_and_se(of_level.iter().map(|r| r.err_u_sq));
        let (p_ms, p_se) = mean_and_se(of_level.iter().map(|r| r.err_pint_sq));
        rows.push(LevelErrorRow {
            study: cfg.kind.as_str().to_string(),
            case: cfg.case.clone(),
            n: spec.n,
            h: 1.0 / spec.n as f64,
            tau: spec.tau,
            m_samples: cfg.samples,
            err_u_ms: u_ms,
            err_u_se: u_se,
            err_pint_ms: p_ms,
            err_pint_se: p_se,
        });
    }

    let mut slopes = Vec::new();
    if rows.len() >= 3 {
        let scales: Vec<f64> = rows
            .iter()
            .map(|r| match cfg.kind {
                StudyKind::Time => r.tau,
                StudyKind::Space => r.h,
            })
            .collect();
        let rms_u: Vec<f64> = rows.iter().map(|r| r.err_u_ms.sqrt()).collect();
        let rms_p: Vec<f64> = rows.iter().map(|r| r.err_pint_ms.sqrt()).collect();
        match fit_rate(&rms_u, &scales) {
            Ok((slope, residual)) => slopes.push(SlopeFit {
                quantity: format!("velocity_{}", cfg.tag()),
                slope,
                residual,
            }),
            Err(e) => warnings.push(format!("velocity slope not fitted: {e}")),
        }
        match fit_rate(&rms_p, &scales) {
            Ok((slope, residual)) => slopes.push(SlopeFit {
                quantity: format!("pressure_integral_{}", cfg.tag()),
                slope,
                residual,
            }),
            Err(e) => warnings.push(format!("pressure slope not fitted: {e}")),
        }
    } else {
        warnings.push(format!(
            "slope omitted: {} levels (need at least 3)",
            rows.len()
        ));
    }

    Ok(ConvergenceTable {
        rows,
        slopes,
        warnings,
    })
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Least-squares slope of `log2(error)` against `log2(scale)`, with the RMS
/// of the fit residuals.
pub fn fit_rate(errors: &[f64], scales: &[f64]) -> Result<(f64, f64)> {
    if errors.len() != scales.len() || errors.len() < 3 {
        return Err(Error::InvalidArgument(
            "rate fit needs at least 3 matching (error, scale) pairs".into(),
        ));
    }
    if errors
        .iter()
        .chain(scales)
        .any(|&v| !(v > 0.0) || !v.is_finite())
    {
        return Err(Error::InvalidArgument(
            "rate fit requires strictly positive finite inputs".into(),
        ));
    }
    let xs: Vec<f64> = scales.iter().map(|&s| s.log2()).collect();
    let ys: Vec<f64> = errors.iter().map(|&e| e.log2()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "rate fit requires at least two distinct scales".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok((slope, (ss_res / n).sqrt()))
}

/// Monte Carlo stability audit: energy statistics for `tau` and `tau / 2` on
/// coupled paths.
#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub tau: f64,
    pub e_max_l2_sq: f64,
    pub e_sum_incr_sq: f64,
    pub e_sum_h1_sq: f64,
    /// Monte Carlo standard errors of the three averages.
    pub se: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub n: usize,
    pub samples: usize,
    pub rows: Vec<StabilityRow>,
    /// fine / coarse ratio per statistic
    pub ratios: [f64; 3],
    pub pass: bool,
}

pub fn stability_audit(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    let rule = QuadratureRule::degree6();
    let n = cfg.n_levels[0];
    let tau = cfg.tau_levels[0];
    let tau_fine = 0.5 * tau;
    steps_dividing(cfg.t_final, tau)?;
    let coarse = build_ctx(cfg, n, tau, &rule)?;
    let fine = LevelCtx {
        space: Arc::clone(&coarse.space),
        ops: Arc::clone(&coarse.ops),
        system: StepSystem::build(&coarse.ops, tau_fine)?,
        model: if cfg.zero_noise {
            NoiseModel::zeroed(coarse.space.mesh(), &rule)
        } else {
            NoiseModel::build(cfg.r, cfg.l_max, cfg.basis, coarse.space.mesh(), &rule)?
        },
    };
    let n_fine_steps = steps_dividing(cfg.t_final, tau_fine)?;
    let forcing = Forcing::Constant(cfg.forcing);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_workers(cfg.workers))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let stats: Vec<([f64; 3], [f64; 3])> = pool.install(|| {
        (0..cfg.samples as u64)
            .into_par_iter()
            .map(|sample| -> Result<([f64; 3], [f64; 3])> {
                let tableau = BrownianTableau::sample(
                    &fine.model,
                    tau_fine,
                    n_fine_steps,
                    cfg.base_seed,
                    sample,
                )?;
                let tc = run_level(&coarse, &tableau, &forcing, cfg.t_final)?;
                let tf = run_level(&fine, &tableau, &forcing, cfg.t_final)?;
                Ok((
                    [tc.max_velocity_l2_sq, tc.sum_increment_l2_sq, tc.sum_h1_sq],
                    [tf.max_velocity_l2_sq, tf.sum_increment_l2_sq, tf.sum_h1_sq],
                ))
            })
            .collect::<Result<_>>()
    })?;

    let mut coarse_avg = [0.0; 3];
    let mut fine_avg = [0.0; 3];
    let mut coarse_se = [0.0; 3];
    let mut fine_se = [0.0; 3];
    for k in 0..3 {
        let (mc, sc) = mean_and_se(stats.iter().map(|(c, _)| c[k]));
        let (mf, sf) = mean_and_se(stats.iter().map(|(_, f)| f[k]));
        coarse_avg[k] = mc;
        coarse_se[k] = sc;
        fine_avg[k] = mf;
        fine_se[k] = sf;
    }
    let mut ratios = [0.0; 3];
    for k in 0..3 {
        ratios[k] = if coarse_avg[k] == 0.0 && fine_avg[k] == 0.0 {
            1.0
        } else {
            fine_avg[k] / coarse_avg[k]
        };
    }
    let pass = ratios.iter().all(|&r| (0.5..=2.0).contains(&r));
    Ok(StabilityReport {
        n,
        samples: cfg.samples,
        rows: vec![
            StabilityRow {
                tau,
                e_max_l2_sq: coarse_avg[0],
                e_sum_incr_sq: coarse_avg[1],
                e_sum_h1_sq: coarse_avg[2],
                se: coarse_se,
            },
            StabilityRow {
                tau: tau_fine,
                e_max_l2_sq: fine_avg[0],
                e_sum_incr_sq: fine_avg[1],
                e_sum_h1_sq: fine_avg[2],
                se: fine_se,
            },
        ],
        ratios,
        pass,
    })
}

// ---------------------------------------------------------------------------
// persistence

pub const RESULTS_HEADER: &str = "study,case,n,h,tau,M,err_u_ms,err_u_se,err_pint_ms,err_pint_se";
pub const SAMPLES_HEADER: &str = "level,sample_index,err_u_sq,err_pint_sq,seed";
pub const SLOPES_HEADER: &str = "quantity,slope,residual";

pub fn results_to_string(rows: &[LevelErrorRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.study,
            r.case,
            r.n,
            r.h,
            r.tau,
            r.m_samples,
            r.err_u_ms,
            r.err_u_se,
            r.err_pint_ms,
            r.err_pint_se
        )
        .unwrap();
    }
    out
}

pub fn write_results(path: &Path, rows: &[LevelErrorRow]) -> Result<()> {
    std::fs::write(path, results_to_string(rows))?;
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn field<T: std::str::FromStr>(raw: &str, line: usize, name: &str) -> Result<T> {
    raw.parse::<T>()
        .map_err(|_| parse_err(line, format!("invalid {name}: '{raw}'")))
}

pub fn load_results(path: &Path) -> Result<Vec<LevelErrorRow>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 {
            if line != RESULTS_HEADER {
                return Err(parse_err(lineno, "unexpected results header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 10 {
            return Err(parse_err(
                lineno,
                format!("expected 10 fields, got {}", parts.len()),
            ));
        }
        rows.push(LevelErrorRow {
            study: parts[0].to_string(),
            case: parts[1].to_string(),
            n: field(parts[2], lineno, "n")?,
            h: field(parts[3], lineno, "h")?,
            tau: field(parts[4], lineno, "tau")?,
            m_samples: field(parts[5], lineno, "M")?,
            err_u_ms: field(parts[6], lineno, "err_u_ms")?,
            err_u_se: field(parts[7], lineno, "err_u_se")?,
            err_pint_ms: field(parts[8], lineno, "err_pint_ms")?,
            err_pint_se: field(parts[9], lineno, "err_pint_se")?,
        });
    }
    Ok(rows)
}

pub fn write_samples(path: &Path, records: &[SampleRecord]) -> Result<()> {
    let mut out = String::from(SAMPLES_HEADER);
    out.push('\n');
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.level, r.sample_index, r.err_u_sq, r.err_pint_sq, r.seed
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 {
            if line != SAMPLES_HEADER {
                return Err(parse_err(lineno, "unexpected samples header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(parse_err(
                lineno,
                format!("expected 5 fields, got {}", parts.len()),
            ));
        }
        records.push(SampleRecord {
            level: field(parts[0], lineno, "level")?,
            sample_index: field(parts[1], lineno, "sample_index")?,
            err_u_sq: field(parts[2], lineno, "err_u_sq")?,
            err_pint_sq: field(parts[3], lineno, "err_pint_sq")?,
            seed: field(parts[4], lineno, "seed")?,
        });
    }
    Ok(records)
}

pub fn write_slopes(path: &Path, slopes: &[SlopeFit]) -> Result<()> {
    let mut out = String::from(SLOPES_HEADER);
    out.push('\n');
    for s in slopes {
        writeln!(out, "{},{},{}", s.quantity, s.slope, s.residual).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_slopes(path: &Path) -> Result<Vec<SlopeFit>> {
    let text = std::fs::read_to_string(path)?;
    let mut slopes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 {
            if line != SLOPES_HEADER {
                return Err(parse_err(lineno, "unexpected slopes header"));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(parse_err(
                lineno,
                format!("expected 3 fields, got {}", parts.len()),
            ));
        }
        slopes.push(SlopeFit {
            quantity: parts[0].to_string(),
            slope: field(parts[1], lineno, "slope")?,
            residual: field(parts[2], lineno, "residual")?,
        });
    }
    Ok(slopes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_rate_recovers_exact_slopes() {
        let (s, r) = fit_rate(&[1.0, 0.5, 0.25], &[1.0, 0.5, 0.25]).unwrap();
        assert_eq!(s, 1.0);
        assert_eq!(r, 0.0);
        let (s, r) = fit_rate(&[1.0, 0.25, 0.0625], &[1.0, 0.5, 0.25]).unwrap();
        assert_eq!(s, 2.0);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn fit_rate_handles_perturbed_quadratic_decay() {
        let scales = [1.0, 0.5, 0.25, 0.125];
        let errors: Vec<f64> = scales
            .iter()
            .enumerate()
            .map(|(k, &h)| h * h * (1.0 + 0.01 * if k % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let (slope, residual) = fit_rate(&errors, &scales).unwrap();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
        assert!(residual < 0.05);
    }

    #[test]
    fn fit_rate_rejects_bad_input() {
        assert!(fit_rate(&[1.0, 0.5], &[1.0, 0.5]).is_err());
        assert!(fit_rate(&[1.0, -0.5, 0.2], &[1.0, 0.5, 0.25]).is_err());
        assert!(fit_rate(&[1.0, 0.5, 0.0], &[1.0, 0.5, 0.25]).is_err());
        assert!(fit_rate(&[1.0, 0.5, 0.25], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn results_round_trip_preserves_every_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        // empty table: header-only file loads back empty
        write_results(&path, &[]).unwrap();
        assert_eq!(load_results(&path).unwrap(), vec![]);
        let rows = vec![
            LevelErrorRow {
                study: "time".into(),
                case: "I".into(),
                n: 32,
                h: 1.0 / 32.0,
                tau: 0.25,
                m_samples: 128,
                err_u_ms: 1.2345678901234e-5,
                err_u_se: 3.4e-7,
                err_pint_ms: 0.002,
                err_pint_se: 1.0e-4,
            },
            LevelErrorRow {
                study: "time".into(),
                case: "I".into(),
                n: 32,
                h: 1.0 / 32.0,
                tau: 0.125,
                m_samples: 128,
                err_u_ms: 6.1e-6,
                err_u_se: 2.2e-7,
                err_pint_ms: 0.0012,
                err_pint_se: 0.9e-4,
            },
            LevelErrorRow {
                study: "time".into(),
                case: "I".into(),
                n: 32,
                h: 1.0 / 32.0,
                tau: 0.0625,
                m_samples: 128,
                err_u_ms: 3.05e-6,
                err_u_se: 1.1e-7,
                err_pint_ms: 0.0006,
                err_pint_se: 0.4e-4,
            },
        ];
        write_results(&path, &rows).unwrap();
        assert_eq!(load_results(&path).unwrap(), rows);
    }

    #[test]
    fn sample_records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        let records = vec![
            SampleRecord {
                level: 0,
                sample_index: 0,
                err_u_sq: 1.5e-9,
                err_pint_sq: 2.5e-8,
                seed: 12345678901234567,
            },
            SampleRecord {
                level: 1,
                sample_index: 3,
                err_u_sq: 0.25,
                err_pint_sq: 0.5,
                seed: 42,
            },
        ];
        write_samples(&path, &records).unwrap();
        assert_eq!(load_samples(&path).unwrap(), records);
    }

    #[test]
    fn corrupt_files_report_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.csv");
        std::fs::write(
            &path,
            format!("{SAMPLES_HEADER}\n0,0,1.0,2.0,7\n0,oops,1,2,3\n"),
        )
        .unwrap();
        match load_samples(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::write(&path, "bad,header\n").unwrap();
        match load_samples(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected header error, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_catches_incompatible_levels() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig {
            kind: StudyKind::Space,
            case: "I".into(),
            r: 2.0,
            l_max: 2,
            basis: BasisKind::Cosine,
            zero_noise: false,
            n_levels: vec![2, 4],
            tau_levels: vec![0.25],
            ref_n: 8,
            ref_tau: 0.25,
            t_final: 1.0,
            forcing: [1.0, 1.0],
            samples: 2,
            base_seed: 1,
            out_dir: dir.path().to_path_buf(),
            workers: 1,
        };
        assert!(cfg.validate().is_ok());
        // non-nested mesh
        cfg.n_levels = vec![3, 4];
        assert!(matches!(cfg.validate(), Err(Error::NonNested { .. })));
        cfg.n_levels = vec![2, 4];
        // reference not strictly finer
        cfg.ref_n = 4;
        assert!(cfg.validate().is_err());
        cfg.ref_n = 8;
        // tau not a multiple of ref_tau
        cfg.tau_levels = vec![0.3];
        assert!(cfg.validate().is_err());
    }
}
