//! Numerical audits of the discrete-operator inequalities behind the scheme:
//! scalar rational-approximation bounds, discrete semigroup energy decay, and
//! H1 stability of the divergence-free projection.
//!
//! The underlying statements assert the existence of uniform constants, not
//! their values. Each check records the empirical constant (the sup of the
//! left side over the right side on a parameter grid) and passes when it
//! stays below an audit threshold that would catch a blow-up.

use std::fmt;
use std::sync::Arc;

use crate::assemble::{AssembledOperators, NormKind};
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::noise::standard_normal_at;
use crate::solver::{divergence_free_defect, DivFreeProjector, StepSystem};
use crate::space::{FeFunction, MiniSpace};

/// Audit threshold for the scalar inequality constants.
pub const SCALAR_THRESHOLD: f64 = 10.0;

/// Outcome of one inequality audit.
#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub name: String,
    pub grid: String,
    /// Labeled empirical constants, reported unclipped.
    pub constants: Vec<(String, f64)>,
    pub threshold: f64,
    pub pass: bool,
}

impl InequalityReport {
    fn new(name: &str, grid: String, constants: Vec<(String, f64)>, threshold: f64) -> Self {
        let pass = constants
            .iter()
            .all(|(_, c)| c.is_finite() && *c <= threshold);
        Self {
            name: name.to_string(),
            grid,
            constants,
            threshold,
            pass,
        }
    }
}

impl fmt::Display for InequalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "check {} [{}]: {}",
            self.name,
            self.grid,
            if self.pass { "pass" } else { "FAIL" }
        )?;
        for (label, value) in &self.constants {
            writeln!(f, "  {label} = {value}  (threshold {})", self.threshold)?;
        }
        Ok(())
    }
}

/// The standard logarithmic eigenvalue grid, 200 points on [1e-2, 1e6].
pub fn standard_lambda_grid() -> Vec<f64> {
    let count = 200;
    let (lo, hi) = (1e-2f64, 1e6f64);
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

fn rational(z: f64) -> f64 {
    1.0 / (1.0 + z)
}

/// Sup over the grid of `(1 + lambda)^{gamma/2} R(tau lambda)^n t_n^{gamma/2}`
/// with `R(z) = 1/(1+z)`; the rational-semigroup smoothing bound.
pub fn check_rational_stability(
    gamma: f64,
    tau: f64,
    lambda_grid: &[f64],
    n_max: usize,
) -> Result<InequalityReport> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::InvalidArgument("gamma must lie in [0, 1]".into()));
    }
    if n_max < 1 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let mut sup = 0.0f64;
    for &lam in lambda_grid {
        let r = rational(tau * lam);
        let mut r_pow = 1.0;
        for n in 1..=n_max {
            r_pow *= r;
            let t_n = n as f64 * tau;
            let value = (1.0 + lam).powf(0.5 * gamma) * r_pow * t_n.powf(0.5 * gamma);
            sup = sup.max(value);
        }
    }
    Ok(InequalityReport::new(
        "rational_stability",
        format!(
            "gamma={gamma}, tau={tau}, lambda in [{:.0e}, {:.0e}] x {} pts, n <= {n_max}",
            lambda_grid.first().copied().unwrap_or(0.0),
            lambda_grid.last().copied().unwrap_or(0.0),
            lambda_grid.len()
        ),
        vec![("sup (1+l)^{g/2} R(tl)^n t_n^{g/2}".into(), sup)],
        SCALAR_THRESHOLD,
    ))
}

/// Bounds on `F_n(z) = e^{-nz} - R(z)^n`: `|F_n(tau l)| <= C (tau l)^{1/2}`
/// and `|F_n(tau l)| <= C tau^{1/2} t_n^{-1/2}`.
pub fn check_fn_bounds(tau: f64, lambda_grid: &[f64], n_max: usize) -> Result<InequalityReport> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("need at least one step".into()));
    }
    let mut sup_sqrt_z = 0.0f64;
    let mut sup_time = 0.0f64;
    for &lam in lambda_grid {
        let z = tau * lam;
        let r = rational(z);
        let e = (-z).exp();
        let mut r_pow = 1.0;
        let mut e_pow = 1.0;
        for n in 1..=n_max {
            r_pow *= r;
            e_pow *= e;
            let fnz = (e_pow - r_pow).abs();
            if z > 0.0 {
                sup_sqrt_z = sup_sqrt_z.max(fnz / z.sqrt());
            }
            let t_n = n as f64 * tau;
            sup_time = sup_time.max(fnz * t_n.sqrt() / tau.sqrt());
        }
    }
    Ok(InequalityReport::new(
        "fn_bounds",
        format!(
            "tau={tau}, lambda in [{:.0e}, {:.0e}] x {} pts, n <= {n_max}",
            lambda_grid.first().copied().unwrap_or(0.0),
            lambda_grid.last().copied().unwrap_or(0.0),
            lambda_grid.len()
        ),
        vec![
            ("sup |F_n(z)| / z^{1/2}".into(), sup_sqrt_z),
            ("sup |F_n(z)| t_n^{1/2} / tau^{1/2}".into(), sup_time),
        ],
        SCALAR_THRESHOLD,
    ))
}

/// Iterates the discrete semigroup on a divergence-free start vector with
/// zero load and verifies the summed energy identity
/// `1/2 |w^N|_M^2 + sum_j (1/2 |w^j - w^{j-1}|_M^2 + 2 tau |D(w^j)|^2)
///  = 1/2 |v|_M^2` together with the decay inequality.
pub fn check_discrete_energy_decay(
    space: &Arc<MiniSpace>,
    ops: &Arc<AssembledOperators>,
    tau: f64,
    v: &FeFunction,
    n_steps: usize,
) -> Result<InequalityReport> {
    let defect = divergence_free_defect(ops, v.coeffs());
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "start vector is not discretely divergence-free (defect {defect:.3e}); project it first"
        )));
    }
    let system = StepSystem::build(ops, tau)?;
    let zeros = vec![0.0; space.num_velocity_dofs()];
    let v0_sq = ops.m.quadratic_form(v.coeffs());

    let mut w = v.coeffs().to_vec();
    let mut dissipation = 0.0;
    let mut max_half_norm = 0.5 * v0_sq;
    let mut identity_residual = 0.0f64;
    let mut final_half_norm = 0.5 * v0_sq;
    for _ in 0..n_steps {
        let (w_new, _) = system.euler_step(&w, &zeros, &zeros)?;
        let diff: Vec<f64> = w_new.iter().zip(&w).map(|(a, b)| a - b).collect();
        let w_sq = ops.m.quadratic_form(&w_new);
        dissipation += 0.5 * ops.m.quadratic_form(&diff) + tau * ops.k_d.quadratic_form(&w_new);
        max_half_norm = max_half_norm.max(0.5 * w_sq);
        final_half_norm = 0.5 * w_sq;
        let lhs = 0.5 * w_sq + dissipation;
        let rhs = 0.5 * v0_sq;
        identity_residual = identity_residual.max((lhs - rhs).abs() / (1.0 + rhs));
        w = w_new;
    }
    // 1/2|w^N|^2 + full dissipation = 1/2|v|^2 exactly; the max norm never
    // exceeds the start (per-step contraction in the M norm)
    let (decay_constant, max_norm_ratio) = if v0_sq == 0.0 {
        let silent = max_half_norm == 0.0 && dissipation == 0.0;
        (
            if silent { 1.0 } else { f64::INFINITY },
            if silent { 1.0 } else { f64::INFINITY },
        )
    } else {
        (
            (final_half_norm + dissipation) / (0.5 * v0_sq),
            max_half_norm / (0.5 * v0_sq),
        )
    };
    let mut report = InequalityReport::new(
        "discrete_energy_decay",
        format!(
            "n={}, tau={tau}, steps={n_steps}",
            space.mesh().subdivisions()
        ),
        vec![
            ("summed identity residual".into(), identity_residual),
            ("energy equality constant".into(), decay_constant),
            ("max norm ratio".into(), max_norm_ratio),
        ],
        SCALAR_THRESHOLD,
    );
    // the identity must hold to solver accuracy, not just the audit threshold
    report.pass = report.pass
        && identity_residual <= 1e-9
        && decay_constant <= 1.0 + 1e-9
        && max_norm_ratio <= 1.0 + 1e-9;
    Ok(report)
}

/// H1 stability of the orthogonal decomposition `v = w + z` with
/// `w = P_{X_h} v`: records, per level, the max over random draws of
/// `(|w|_{H1} + |z|_{H1}) / |v|_{H1}` and passes when the per-level maxima do
/// not grow by more than 25% per refinement.
pub fn check_projection_stability(
    levels: &[usize],
    draws_per_level: usize,
) -> Result<InequalityReport> {
    if levels.len() < 2 {
        return Err(Error::InvalidArgument(
            "projection stability needs at least two levels".into(),
        ));
    }
    let mut constants = Vec::with_capacity(levels.len());
    for &n in levels {
        let mesh = Arc::new(Mesh::uniform(n)?);
        let space = Arc::new(MiniSpace::new(Arc::clone(&mesh)));
        let ops = Arc::new(AssembledOperators::assemble(&space));
        let projector = DivFreeProjector::new(&ops)?;
        let mut level_max = 0.0f64;
        for draw in 0..draws_per_level as u64 {
            let coeffs: Vec<f64> = (0..space.num_velocity_dofs())
                .map(|k| standard_normal_at(31, draw, 1, 0, k))
                .collect();
            let v = space.velocity_fn(coeffs)?;
            let w = projector.project(&ops, &v)?;
            let z: Vec<f64> = v
                .coeffs()
                .iter()
                .zip(w.coeffs())
                .map(|(a, b)| a - b)
                .collect();
            let z = space.velocity_fn(z)?;
            let ratio = (ops.norm(&w, NormKind::H1) + ops.norm(&z, NormKind::H1))
                / ops.norm(&v, NormKind::H1);
            level_max = level_max.max(ratio);
        }
        constants.push((format!("n={n} max ratio"), level_max));
    }
    let mut pass = true;
    for pair in constants.windows(2) {
        if pair[1].1 > 1.25 * pair[0].1 {
            pass = false;
        }
    }
    let mut report = InequalityReport::new(
        "projection_h1_stability",
        format!("levels {levels:?}, {draws_per_level} draws per level"),
        constants,
        SCALAR_THRESHOLD,
    );
    report.pass = report.pass && pass;
    Ok(report)
}

/// Renders the reports as the structured text stored alongside experiment
/// outputs.
pub fn render_reports(reports: &[InequalityReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}
