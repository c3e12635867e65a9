//! Saddle-point factorization and the semi-implicit Euler time stepper.
//!
//! One time step solves
//!
//! ```text
//! [ M + tau K_d   -tau B_div^T ] [ u^n ]   [ M u^{n-1} + tau f + noise ]
//! [ B_div          0           ] [ p^n ] = [ 0                         ]
//! ```
//!
//! The matrix does not depend on the step index, so it is factorized once per
//! `(mesh, tau)` and reused for every step of every sample. The same solver
//! with `(alpha, beta) = (0, 1)` realizes the L2-orthogonal projection onto
//! the discretely divergence-free subspace.

use std::sync::Arc;
use std::sync::Once;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::assemble::AssembledOperators;
use crate::error::{Error, Result};
use crate::noise::{BrownianTableau, NoiseModel};
use crate::space::{FeFunction, FieldRole, MiniSpace};
use crate::sparse::{euclidean_norm, infinity_norm};

static FAER_SEQ: Once = Once::new();

/// Pin faer to sequential execution: solves must be reentrant across the
/// sample worker pool and bitwise reproducible regardless of thread count.
fn ensure_sequential_faer() {
    FAER_SEQ.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
}

/// Direct factorization of `[[M + alpha K_d, -beta B_div^T], [B_div, 0]]`.
pub struct SaddleSolver {
    lu: Lu<usize, f64>,
    n_vel: usize,
    n_pr: usize,
}

impl SaddleSolver {
    pub fn new(ops: &AssembledOperators, alpha: f64, beta: f64) -> Result<Self> {
        ensure_sequential_faer();
        let n_vel = ops.m.nrows();
        let n_pr = ops.b_div.nrows();
        let n = n_vel + n_pr;
        let mut triplets: Vec<Triplet<usize, usize, f64>> =
            Vec::with_capacity(ops.m.nnz() + ops.k_d.nnz() + 2 * ops.b_div.nnz());
        for (r, c, v) in ops.m.iter() {
            triplets.push(Triplet::new(r, c, v));
        }
        if alpha != 0.0 {
            for (r, c, v) in ops.k_d.iter() {
                triplets.push(Triplet::new(r, c, alpha * v));
            }
        }
        for (r, c, v) in ops.b_div.iter() {
            // constraint rows and the transposed pressure-gradient block
            triplets.push(Triplet::new(n_vel + r, c, v));
            triplets.push(Triplet::new(c, n_vel + r, -beta * v));
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| Error::Singular(format!("saddle matrix construction failed: {e:?}")))?;
        let lu = mat
            .sp_lu()
            .map_err(|e| Error::Singular(format!("sparse LU factorization failed: {e:?}")))?;
        Ok(Self { lu, n_vel, n_pr })
    }

    pub fn n_vel(&self) -> usize {
        self.n_vel
    }

    pub fn n_pr(&self) -> usize {
        self.n_pr
    }

    /// Solves with the given velocity/pressure right-hand sides, writing the
    /// solution into `out_vel` / `out_pr`. `scratch` must have
    /// `n_vel + n_pr` rows and is reused across calls.
    pub fn solve_into(
        &self,
        rhs_vel: &[f64],
        rhs_pr: Option<&[f64]>,
        out_vel: &mut [f64],
        out_pr: &mut [f64],
        scratch: &mut Mat<f64>,
    ) {
        debug_assert_eq!(rhs_vel.len(), self.n_vel);
        debug_assert_eq!(out_vel.len(), self.n_vel);
        debug_assert_eq!(out_pr.len(), self.n_pr);
        for (i, &v) in rhs_vel.iter().enumerate() {
            scratch[(i, 0)] = v;
        }
        match rhs_pr {
            Some(rp) => {
                for (i, &v) in rp.iter().enumerate() {
                    scratch[(self.n_vel + i, 0)] = v;
                }
            }
            None => {
                for i in 0..self.n_pr {
                    scratch[(self.n_vel + i, 0)] = 0.0;
                }
            }
        }
        self.lu.solve_in_place(scratch.as_mut());
        for (i, o) in out_vel.iter_mut().enumerate() {
            *o = scratch[(i, 0)];
        }
        for (i, o) in out_pr.iter_mut().enumerate() {
            *o = scratch[(self.n_vel + i, 0)];
        }
    }

    pub fn scratch(&self) -> Mat<f64> {
        Mat::zeros(self.n_vel + self.n_pr, 1)
    }

    /// Convenience wrapper allocating fresh output vectors.
    pub fn solve(&self, rhs_vel: &[f64], rhs_pr: Option<&[f64]>) -> (Vec<f64>, Vec<f64>) {
        let mut u = vec![0.0; self.n_vel];
        let mut p = vec![0.0; self.n_pr];
        let mut scratch = self.scratch();
        self.solve_into(rhs_vel, rhs_pr, &mut u, &mut p, &mut scratch);
        (u, p)
    }
}

/// L2-orthogonal projection onto the discretely divergence-free subspace:
/// solve `(w, a) - (q, div a) = (v, a)`, `(div w, eta) = 0`.
pub struct DivFreeProjector {
    solver: SaddleSolver,
}

impl DivFreeProjector {
    pub fn new(ops: &AssembledOperators) -> Result<Self> {
        Ok(Self {
            solver: SaddleSolver::new(ops, 0.0, 1.0)?,
        })
    }

    /// Projects a finite element velocity.
    pub fn project(&self, ops: &AssembledOperators, v: &FeFunction) -> Result<FeFunction> {
        crate::assemble::check_same_space(ops, v)?;
        if v.role() != FieldRole::Velocity {
            return Err(Error::InvalidArgument(
                "projection expects a velocity function".into(),
            ));
        }
        let rhs = ops.m.matvec_alloc(v.coeffs());
        let (w, _) = self.solver.solve(&rhs, None);
        v.space().velocity_fn(w)
    }

    /// Projects a pointwise field given through its load vector `(g, phi_i)`.
    pub fn project_field(
        &self,
        space: &Arc<MiniSpace>,
        rhs: &[f64],
    ) -> Result<FeFunction> {
        if rhs.len() != space.num_velocity_dofs() {
            return Err(Error::InvalidArgument("load vector length mismatch".into()));
        }
        let (w, _) = self.solver.solve(rhs, None);
        space.velocity_fn(w)
    }
}

/// The factorized one-step operator for a fixed `tau`.
pub struct StepSystem {
    ops: Arc<AssembledOperators>,
    solver: SaddleSolver,
    tau: f64,
}

impl StepSystem {
    pub fn build(ops: &Arc<AssembledOperators>, tau: f64) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time step must be positive, got {tau}"
            )));
        }
        Ok(Self {
            ops: Arc::clone(ops),
            solver: SaddleSolver::new(ops, tau, tau)?,
            tau,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn ops(&self) -> &Arc<AssembledOperators> {
        &self.ops
    }

    pub fn solver(&self) -> &SaddleSolver {
        &self.solver
    }

    /// Performs one semi-implicit Euler step.
    ///
    /// `f_load` and `noise_load` are assembled load vectors; the right-hand
    /// side is `M u_prev + tau f_load + noise_load`.
    pub fn euler_step(
        &self,
        u_prev: &[f64],
        f_load: &[f64],
        noise_load: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut ws = StepWorkspace::new(&self.solver);
        self.euler_step_into(u_prev, f_load, noise_load, &mut ws)?;
        Ok((ws.u, ws.p))
    }

    fn euler_step_into(
        &self,
        u_prev: &[f64],
        f_load: &[f64],
        noise_load: &[f64],
        ws: &mut StepWorkspace,
    ) -> Result<()> {
        for (name, v) in [("u_prev", u_prev), ("f_load", f_load), ("noise_load", noise_load)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("{name} contains NaN or Inf")));
            }
        }
        self.ops.m.matvec(u_prev, &mut ws.rhs);
        for i in 0..ws.rhs.len() {
            ws.rhs[i] += self.tau * f_load[i] + noise_load[i];
        }
        self.solver
            .solve_into(&ws.rhs, None, &mut ws.u, &mut ws.p, &mut ws.scratch);
        Ok(())
    }
}

struct StepWorkspace {
    rhs: Vec<f64>,
    u: Vec<f64>,
    p: Vec<f64>,
    scratch: Mat<f64>,
}

impl StepWorkspace {
    fn new(solver: &SaddleSolver) -> Self {
        Self {
            rhs: vec![0.0; solver.n_vel()],
            u: vec![0.0; solver.n_vel()],
            p: vec![0.0; solver.n_pr()],
            scratch: solver.scratch(),
        }
    }
}

/// Time-dependent forcing evaluated at the step endpoints.
pub enum Forcing {
    Constant([f64; 2]),
    TimeVarying(Box<dyn Fn(f64) -> [f64; 2] + Send + Sync>),
}

impl Forcing {
    fn at(&self, t: f64) -> [f64; 2] {
        match self {
            Forcing::Constant(v) => *v,
            Forcing::TimeVarying(f) => f(t),
        }
    }
}

/// Per-path output of [`run_trajectory`].
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Velocity coefficients at the requested checkpoint times.
    pub checkpoints: Vec<(f64, Vec<f64>)>,
    /// Running pressure integral `tau * sum_k p^k` at the final time.
    pub pressure_integral: Vec<f64>,
    pub n_steps: usize,
    /// Max over steps of `||B_div u^n||_inf / (1 + |u^n|)`.
    pub max_divergence_residual: f64,
    /// Max over steps of the normalized defect of the per-step energy identity.
    pub max_energy_residual: f64,
    /// Max over steps of `u^T M u` (squared L2 norm of the velocity).
    pub max_velocity_l2_sq: f64,
    /// `sum_n |u^n - u^{n-1}|_M^2`.
    pub sum_increment_l2_sq: f64,
    /// `tau * sum_n |u^n|_{H1}^2`.
    pub sum_h1_sq: f64,
}

/// Runs one noise path of the semi-implicit scheme up to `t_final`.
///
/// The time step must divide `t_final` and be an integer multiple of the
/// tableau's fine step; each coarse increment is the sum of the matching fine
/// increments, which couples paths exactly across time-step levels.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    space: &Arc<MiniSpace>,
    ops: &Arc<AssembledOperators>,
    system: &StepSystem,
    model: &NoiseModel,
    tableau: &BrownianTableau,
    forcing: &Forcing,
    t_final: f64,
    checkpoint_times: &[f64],
    initial: Option<&FeFunction>,
) -> Result<Trajectory> {
    let tau = system.tau();
    let n_steps = steps_dividing(t_final, tau)?;
    let fine_per_coarse = integer_ratio(tau, tableau.tau_ref())?;
    if n_steps * fine_per_coarse > tableau.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "tableau holds {} fine steps but {} are required",
            tableau.n_steps(),
            n_steps * fine_per_coarse
        )));
    }
    if model.mode_count() != tableau.mode_count() {
        return Err(Error::InvalidArgument(
            "noise model and tableau disagree on the mode count".into(),
        ));
    }

    let n_vel = space.num_velocity_dofs();
    let mut u = match initial {
        Some(v0) => {
            let projector = DivFreeProjector::new(ops)?;
            projector.project(ops, v0)?.into_coeffs()
        }
        None => vec![0.0; n_vel],
    };
    let mut pressure_integral = vec![0.0; space.num_pressure_dofs()];
    let mut ws = StepWorkspace::new(system.solver());
    let mut noise_load = vec![0.0; n_vel];
    let mut f_load = vec![0.0; n_vel];
    let mut dw = vec![0.0; model.mode_count()];
    // M u carried across steps: the mass term of the right-hand side doubles
    // as the previous step's statistics
    let mut m_u = ops.m.matvec_alloc(&u);
    let mut m_u_new = vec![0.0; n_vel];
    let mut upmup: f64 = u.iter().zip(m_u.iter()).map(|(a, b)| a * b).sum();

    let rule = crate::quadrature::QuadratureRule::degree6();
    let mut current_f = forcing.at(tau);
    let mut f_load_valid = false;

    let mut out = Trajectory {
        checkpoints: Vec::new(),
        pressure_integral: Vec::new(),
        n_steps,
        max_divergence_residual: 0.0,
        max_energy_residual: 0.0,
        max_velocity_l2_sq: 0.0,
        sum_increment_l2_sq: 0.0,
        sum_h1_sq: 0.0,
    };
    record_checkpoints(&mut out.checkpoints, checkpoint_times, 0.0, tau, &u);

    for n in 1..=n_steps {
        let t_n = n as f64 * tau;
        let f_now = forcing.at(t_n);
        if !f_load_valid || f_now != current_f {
            current_f = f_now;
            f_load = ops.velocity_load(&rule, |_| f_now);
            f_load_valid = true;
        }
        tableau.coarse_increments(n - 1, fine_per_coarse, &mut dw);
        model.assemble_noise_load(space, &u, &dw, &mut noise_load)?;

        for i in 0..n_vel {
            ws.rhs[i] = m_u[i] + tau * f_load[i] + noise_load[i];
        }
        if ws.rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "right-hand side became non-finite at step {n}"
            )));
        }
        system
            .solver()
            .solve_into(&ws.rhs, None, &mut ws.u, &mut ws.p, &mut ws.scratch);

        // running statistics and the exact per-step energy identity
        let u_new = &ws.u;
        ops.m.matvec(u_new, &mut m_u_new);
        let umu: f64 = u_new.iter().zip(m_u_new.iter()).map(|(a, b)| a * b).sum();
        let cross: f64 = u_new.iter().zip(m_u.iter()).map(|(a, b)| a * b).sum();
        let dmd = (umu - 2.0 * cross + upmup).max(0.0);
        let kd_form = ops.k_d.quadratic_form(u_new);
        let f_dot: f64 = f_load.iter().zip(u_new.iter()).map(|(a, b)| a * b).sum();
        let w_dot: f64 = noise_load.iter().zip(u_new.iter()).map(|(a, b)| a * b).sum();
        let lhs = 0.5 * (umu - upmup + dmd) + tau * kd_form;
        let rhs = tau * f_dot + w_dot;
        let scale =
            1.0 + 0.5 * (umu.abs() + upmup.abs() + dmd) + tau * kd_form.abs() + rhs.abs();
        out.max_energy_residual = out.max_energy_residual.max((lhs - rhs).abs() / scale);

        let div_res = ops.divergence_residual(u_new) / (1.0 + euclidean_norm(u_new));
        out.max_divergence_residual = out.max_divergence_residual.max(div_res);
        out.max_velocity_l2_sq = out.max_velocity_l2_sq.max(umu);
        out.sum_increment_l2_sq += dmd;
        out.sum_h1_sq += tau * (umu + ops.k_full.quadratic_form(u_new));

        for (acc, &p) in pressure_integral.iter_mut().zip(ws.p.iter()) {
            *acc += tau * p;
        }
        u.copy_from_slice(u_new);
        std::mem::swap(&mut m_u, &mut m_u_new);
        upmup = umu;
        record_checkpoints(&mut out.checkpoints, checkpoint_times, t_n, tau, &u);
    }

    out.pressure_integral = pressure_integral;
    Ok(out)
}

fn record_checkpoints(
    store: &mut Vec<(f64, Vec<f64>)>,
    requested: &[f64],
    t: f64,
    tau: f64,
    u: &[f64],
) {
    for &tc in requested {
        if (tc - t).abs() <= 1e-9 * tau.max(1.0) {
            store.push((t, u.to_vec()));
        }
    }
}

/// Number of steps if `tau` divides `t_final`, else an error.
pub fn steps_dividing(t_final: f64, tau: f64) -> Result<usize> {
    let ratio = t_final / tau;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "time step {tau} does not divide the final time {t_final}"
        )));
    }
    Ok(n as usize)
}

/// Integer ratio `coarse / fine` if exact, else an error.
pub fn integer_ratio(coarse: f64, fine: f64) -> Result<usize> {
    let ratio = coarse / fine;
    let m = ratio.round();
    if m < 1.0 || (ratio - m).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "{coarse} is not an integer multiple of {fine}"
        )));
    }
    Ok(m as usize)
}

/// Relative residual of the saddle solve on a deterministic pseudo-random
/// right-hand side; used by tests and construction-time diagnostics.
pub fn residual_probe(ops: &AssembledOperators, system: &StepSystem) -> f64 {
    let n_vel = ops.m.nrows();
    let n_pr = ops.b_div.nrows();
    let rhs_u: Vec<f64> = (0..n_vel).map(|k| ((k * 37 + 11) as f64 * 0.63).sin()).collect();
    let rhs_p: Vec<f64> = (0..n_pr).map(|k| ((k * 53 + 7) as f64 * 0.41).cos()).collect();
    let (u, p) = system.solver().solve(&rhs_u, Some(&rhs_p));
    let tau = system.tau();
    // residual of [[M + tau K_d, -tau B^T],[B, 0]] (u, p) - (rhs_u, rhs_p)
    let mut res_u = ops.m.matvec_alloc(&u);
    let ku = ops.k_d.matvec_alloc(&u);
    let mut btp = vec![0.0; n_vel];
    for (r, c, v) in ops.b_div.iter() {
        btp[c] += v * p[r];
    }
    for i in 0..n_vel {
        res_u[i] += tau * ku[i] - tau * btp[i] - rhs_u[i];
    }
    let mut res_p = ops.b_div.matvec_alloc(&u);
    for (i, r) in res_p.iter_mut().enumerate() {
        *r -= rhs_p[i];
    }
    let num = (euclidean_norm(&res_u).powi(2) + euclidean_norm(&res_p).powi(2)).sqrt();
    let den = (euclidean_norm(&rhs_u).powi(2) + euclidean_norm(&rhs_p).powi(2)).sqrt();
    num / den
}

/// `||B_div w||_inf <= tol * (1 + |w|)` check used by projection tests.
pub fn divergence_free_defect(ops: &AssembledOperators, w: &[f64]) -> f64 {
    infinity_norm(&ops.b_div.matvec_alloc(w)) / (1.0 + euclidean_norm(w))
}
