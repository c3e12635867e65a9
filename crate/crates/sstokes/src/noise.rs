//! Truncated Q-Wiener noise: spectral model, reproducible Brownian
//! increments, and assembly of the stochastic load vector.
//!
//! The noise field is `B(u) dW` with
//! `W(t) = sum_{l1,l2} sqrt(mu_{l1 l2}) (phi_{l1 l2}, phi_{l1 l2})^T w_{l1 l2}(t)`,
//! `phi_{l1 l2}(x) = cos(l1 pi x1) cos(l2 pi x2)` (or the sine variant) and
//! `mu_{l1 l2} = (l1^2 + l2^2)^{-(r + eps)}`, `mu_00 = 0`, `eps = 0.1`.
//! Applying `B(u)` to the two identical components of `W` gives the pointwise
//! load `(sqrt(u1^2+1), sqrt(u2^2+1))^T S(x)` with the scalar field
//! `S(x) = sum sqrt(mu) phi(x) dw`.
//!
//! `S` is evaluated with the tensor structure of the basis: the mesh has few
//! distinct quadrature-point abscissas per axis, so per step we contract the
//! mode matrix against the second-axis table once and then take one short dot
//! product per quadrature point.
//!
//! Brownian increments are addressed by counter: the increment for
//! `(base_seed, sample, l1, l2, step)` is a pure function of that tuple,
//! independent of generation order and thread count. A ChaCha12 stream is
//! keyed by `(base_seed, sample)` with stream id `(l1, l2)`; the word
//! position encodes the step, and a single 64-bit draw maps through the
//! standard normal quantile, so coarse increments aggregate exactly across
//! time-step levels.

use std::collections::HashMap;
use std::sync::Arc;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::space::{quadrature_points, scalar_shape_values, MiniSpace};

/// Spectral basis of the covariance operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Cosine,
    Sine,
}

impl BasisKind {
    fn eval(self, l: usize, x: f64) -> f64 {
        let arg = l as f64 * std::f64::consts::PI * x;
        match self {
            BasisKind::Cosine => arg.cos(),
            BasisKind::Sine => arg.sin(),
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" | "cos" => Ok(BasisKind::Cosine),
            "sine" | "sin" => Ok(BasisKind::Sine),
            other => Err(Error::InvalidArgument(format!(
                "unknown basis kind '{other}' (expected cosine or sine)"
            ))),
        }
    }
}

/// Covariance eigenvalue `mu_{l1 l2}`.
pub fn eigenvalue(r: f64, epsilon: f64, l1: usize, l2: usize) -> f64 {
    if l1 == 0 && l2 == 0 {
        0.0
    } else {
        ((l1 * l1 + l2 * l2) as f64).powf(-(r + epsilon))
    }
}

/// The pointwise diffusion matrix
/// `B(u) = 1/2 [[sqrt(u1^2+1), sqrt(u1^2+1)], [sqrt(u2^2+1), sqrt(u2^2+1)]]`.
pub fn eval_b(u: [f64; 2]) -> [[f64; 2]; 2] {
    let a = 0.5 * (u[0] * u[0] + 1.0).sqrt();
    let c = 0.5 * (u[1] * u[1] + 1.0).sqrt();
    [[a, a], [c, c]]
}

/// Truncated spectral noise model with cached basis tables for one mesh.
pub struct NoiseModel {
    r: f64,
    epsilon: f64,
    l_max: usize,
    basis: BasisKind,
    mu: Vec<f64>,
    sqrt_mu: Vec<f64>,
    mesh: Arc<Mesh>,
    rule_len: usize,
    /// per-quadrature-point indices into the distinct-abscissa tables
    qp_idx1: Vec<u32>,
    qp_idx2: Vec<u32>,
    /// `basis1[i1 * (l_max+1) + l] = phi_l(x1[i1])`, same for axis 2
    basis1: Vec<f64>,
    basis2: Vec<f64>,
    n_distinct2: usize,
    /// scalar shape values and weights at the rule points
    shape_vals: Vec<[f64; 4]>,
    weights: Vec<f64>,
    zero: bool,
}

impl NoiseModel {
    /// Builds the model for `r in (0, 2]`, truncation `l_max`, and caches the
    /// basis values at every quadrature point of `mesh`.
    pub fn build(
        r: f64,
        l_max: usize,
        basis: BasisKind,
        mesh: &Arc<Mesh>,
        rule: &QuadratureRule,
    ) -> Result<Self> {
        if !(r > 0.0 && r <= 2.0) {
            return Err(Error::InvalidArgument(format!(
                "noise regularity r must lie in (0, 2], got {r}"
            )));
        }
        if l_max < 1 {
            return Err(Error::InvalidArgument(
                "truncation level must be at least 1".into(),
            ));
        }
        let epsilon = 0.1;
        let w = l_max + 1;
        let mut mu = Vec::with_capacity(w * w);
        for l1 in 0..=l_max {
            for l2 in 0..=l_max {
                mu.push(eigenvalue(r, epsilon, l1, l2));
            }
        }
        let sqrt_mu: Vec<f64> = mu.iter().map(|&m| m.sqrt()).collect();
        let mut model = Self {
            r,
            epsilon,
            l_max,
            basis,
            mu,
            sqrt_mu,
            mesh: Arc::clone(mesh),
            rule_len: rule.len(),
            qp_idx1: Vec::new(),
            qp_idx2: Vec::new(),
            basis1: Vec::new(),
            basis2: Vec::new(),
            n_distinct2: 0,
            shape_vals: rule.points.iter().map(scalar_shape_values).collect(),
            weights: rule.weights.clone(),
            zero: false,
        };
        model.cache_mesh_tables(rule);
        Ok(model)
    }

    /// A zero-amplitude model (all eigenvalues zero); used by deterministic
    /// studies. Increments are still drawn so seeds stay aligned.
    pub fn zeroed(mesh: &Arc<Mesh>, rule: &QuadratureRule) -> Self {
        let mut model = Self::build(2.0, 1, BasisKind::Cosine, mesh, rule)
            .expect("zero model parameters are valid");
        for m in model.mu.iter_mut() {
            *m = 0.0;
        }
        for m in model.sqrt_mu.iter_mut() {
            *m = 0.0;
        }
        model.zero = true;
        model
    }

    fn cache_mesh_tables(&mut self, rule: &QuadratureRule) {
        let pts = quadrature_points(&self.mesh, rule);
        let w = self.l_max + 1;
        let mut seen1: HashMap<u64, u32> = HashMap::new();
        let mut seen2: HashMap<u64, u32> = HashMap::new();
        let mut xs1: Vec<f64> = Vec::new();
        let mut xs2: Vec<f64> = Vec::new();
        self.qp_idx1 = Vec::with_capacity(pts.len());
        self.qp_idx2 = Vec::with_capacity(pts.len());
        for p in &pts {
            let i1 = *seen1.entry(p[0].to_bits()).or_insert_with(|| {
                xs1.push(p[0]);
                (xs1.len() - 1) as u32
            });
            let i2 = *seen2.entry(p[1].to_bits()).or_insert_with(|| {
                xs2.push(p[1]);
                (xs2.len() - 1) as u32
            });
            self.qp_idx1.push(i1);
            self.qp_idx2.push(i2);
        }
        self.basis1 = Vec::with_capacity(xs1.len() * w);
        for &x in &xs1 {
            for l in 0..=self.l_max {
                self.basis1.push(self.basis.eval(l, x));
            }
        }
        self.basis2 = Vec::with_capacity(xs2.len() * w);
        for &x in &xs2 {
            for l in 0..=self.l_max {
                self.basis2.push(self.basis.eval(l, x));
            }
        }
        self.n_distinct2 = xs2.len();
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn l_max(&self) -> usize {
        self.l_max
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    /// Number of modes `(l_max + 1)^2`, including the unused `(0,0)` mode.
    pub fn mode_count(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }

    pub fn mu(&self, l1: usize, l2: usize) -> f64 {
        self.mu[l1 * (self.l_max + 1) + l2]
    }

    /// Assembles the stochastic load vector
    /// `out_i = int B(u_prev) dW . phi_i` for the coarse increments `dw`
    /// (one entry per mode, `l1`-major).
    pub fn assemble_noise_load(
        &self,
        space: &Arc<MiniSpace>,
        u_prev: &[f64],
        dw: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        if dw.len() != self.mode_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} mode increments, got {}",
                self.mode_count(),
                dw.len()
            )));
        }
        if !Arc::ptr_eq(space.mesh(), &self.mesh) {
            return Err(Error::InvalidArgument(
                "noise model was cached for a different mesh".into(),
            ));
        }
        if u_prev.len() != space.num_velocity_dofs() || out.len() != space.num_velocity_dofs() {
            return Err(Error::InvalidArgument(
                "velocity vector length mismatch in noise load".into(),
            ));
        }
        out.fill(0.0);
        if self.zero {
            return Ok(());
        }
        let w = self.l_max + 1;

        // coef[l1][l2] = sqrt(mu) dw
        let mut coef = vec![0.0; w * w];
        for (c, (&s, &d)) in coef.iter_mut().zip(self.sqrt_mu.iter().zip(dw)) {
            *c = s * d;
        }

        // g[i2][l1] = sum_l2 coef[l1][l2] basis2[i2][l2]
        let mut g = vec![0.0; self.n_distinct2 * w];
        for i2 in 0..self.n_distinct2 {
            let b2 = &self.basis2[i2 * w..(i2 + 1) * w];
            let gr = &mut g[i2 * w..(i2 + 1) * w];
            for l1 in 0..w {
                let cr = &coef[l1 * w..(l1 + 1) * w];
                let mut acc = 0.0;
                for l2 in 0..w {
                    acc += cr[l2] * b2[l2];
                }
                gr[l1] = acc;
            }
        }

        let mesh = &self.mesh;
        let two_area = 2.0 * mesh.triangle_area();
        let nq = self.rule_len;
        for t in 0..mesh.num_triangles() {
            let dofs = space.velocity_element_dofs(t);
            for q in 0..nq {
                let gid = t * nq + q;
                let b1 = &self.basis1[self.qp_idx1[gid] as usize * w..][..w];
                let gr = &g[self.qp_idx2[gid] as usize * w..][..w];
                let mut s = 0.0;
                for l1 in 0..w {
                    s += b1[l1] * gr[l1];
                }
                let sv = &self.shape_vals[q];
                let mut u1 = 0.0;
                let mut u2 = 0.0;
                for k in 0..4 {
                    u1 += sv[k] * u_prev[dofs[k]];
                    u2 += sv[k] * u_prev[dofs[4 + k]];
                }
                let wq = two_area * self.weights[q];
                let g1 = wq * (u1 * u1 + 1.0).sqrt() * s;
                let g2 = wq * (u2 * u2 + 1.0).sqrt() * s;
                for k in 0..4 {
                    out[dofs[k]] += g1 * sv[k];
                    out[dofs[4 + k]] += g2 * sv[k];
                }
            }
        }
        Ok(())
    }

    /// Partial sum `sum_{l <= L} mu_l * lambda_l^power` with
    /// `lambda = pi^2 (l1^2 + l2^2)`; diagnoses the spectral decay of the
    /// truncated covariance.
    pub fn spectral_partial_sum(r: f64, epsilon: f64, l_max: usize, power: f64) -> f64 {
        let mut total = 0.0;
        for l1 in 0..=l_max {
            for l2 in 0..=l_max {
                if l1 == 0 && l2 == 0 {
                    continue;
                }
                let lam = std::f64::consts::PI.powi(2) * (l1 * l1 + l2 * l2) as f64;
                total += eigenvalue(r, epsilon, l1, l2) * lam.powf(power);
            }
        }
        total
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream_key(base_seed: u64, sample_index: u64) -> [u8; 32] {
    let mut state = mix64(base_seed ^ 0xA076_1D64_78BD_642F)
        ^ mix64(sample_index.wrapping_mul(GOLDEN_GAMMA).wrapping_add(1));
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    seed
}

fn mode_stream(l1: usize, l2: usize) -> u64 {
    ((l1 as u64) << 16) | l2 as u64
}

fn u64_to_unit_open(u: u64) -> f64 {
    // 53 mantissa bits shifted into (0, 1), endpoints excluded
    ((u >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

/// Standard normal draw for the counter `(base_seed, sample, l1, l2, step)`.
/// Pure in all five arguments.
pub fn standard_normal_at(
    base_seed: u64,
    sample_index: u64,
    l1: usize,
    l2: usize,
    step: usize,
) -> f64 {
    let mut rng = ChaCha12Rng::from_seed(stream_key(base_seed, sample_index));
    rng.set_stream(mode_stream(l1, l2));
    rng.set_word_pos(2 * step as u128);
    let gauss = Normal::new(0.0, 1.0).unwrap();
    gauss.inverse_cdf(u64_to_unit_open(rng.next_u64()))
}

/// Brownian increments of every mode on the finest time grid.
///
/// Entry `(l1, l2, step)` is `N(0, tau_ref)`-distributed and a pure function
/// of `(base_seed, sample_index, l1, l2, step)`. A coarse increment over `k`
/// fine steps is the sum of the `k` fine increments.
#[derive(Debug, Clone)]
pub struct BrownianTableau {
    base_seed: u64,
    sample_index: u64,
    tau_ref: f64,
    n_steps: usize,
    l_max: usize,
    /// mode-major storage: `data[(l1 (l_max+1) + l2) * n_steps + step]`
    data: Vec<f64>,
}

impl BrownianTableau {
    /// Draws all increments for one sample. Modes with zero eigenvalue are
    /// still drawn so streams stay aligned across models.
    pub fn sample(
        model: &NoiseModel,
        tau_ref: f64,
        n_steps: usize,
        base_seed: u64,
        sample_index: u64,
    ) -> Result<Self> {
        if !(tau_ref > 0.0) || !tau_ref.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "reference time step must be positive, got {tau_ref}"
            )));
        }
        let l_max = model.l_max();
        let w = l_max + 1;
        let mut data = vec![0.0; w * w * n_steps];
        let scale = tau_ref.sqrt();
        let gauss = Normal::new(0.0, 1.0).unwrap();
        let key = stream_key(base_seed, sample_index);
        for l1 in 0..=l_max {
            for l2 in 0..=l_max {
                let mut rng = ChaCha12Rng::from_seed(key);
                rng.set_stream(mode_stream(l1, l2));
                let row = &mut data[(l1 * w + l2) * n_steps..][..n_steps];
                for v in row.iter_mut() {
                    *v = scale * gauss.inverse_cdf(u64_to_unit_open(rng.next_u64()));
                }
            }
        }
        Ok(Self {
            base_seed,
            sample_index,
            tau_ref,
            n_steps,
            l_max,
            data,
        })
    }

    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn sample_index(&self) -> u64 {
        self.sample_index
    }

    pub fn tau_ref(&self) -> f64 {
        self.tau_ref
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn mode_count(&self) -> usize {
        (self.l_max + 1) * (self.l_max + 1)
    }

    pub fn increment(&self, l1: usize, l2: usize, step: usize) -> f64 {
        self.data[(l1 * (self.l_max + 1) + l2) * self.n_steps + step]
    }

    /// Sums the fine increments `[coarse_step * k, (coarse_step + 1) * k)`
    /// for every mode into `out`.
    pub fn coarse_increments(&self, coarse_step: usize, k: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.mode_count());
        let lo = coarse_step * k;
        for (mode, o) in out.iter_mut().enumerate() {
            let row = &self.data[mode * self.n_steps..][..self.n_steps];
            *o = row[lo..lo + k].iter().sum();
        }
    }

    /// Total Brownian mass per mode over the whole horizon.
    pub fn total_increments(&self, out: &mut [f64]) {
        self.coarse_increments(0, self.n_steps, out);
    }
}
