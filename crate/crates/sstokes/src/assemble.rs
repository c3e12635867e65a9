//! Sparse operator assembly for the MINI pair.
//!
//! All integrands of the mass, deformation-tensor stiffness, full-gradient
//! stiffness and divergence forms are polynomials of total degree at most 6,
//! so the fixed quadrature rule integrates them exactly. On the structured
//! mesh only two element geometries occur (lower and upper triangles), and
//! the local matrices are computed once per geometry and scattered in
//! triangle order, which makes every global entry reproducible bit for bit.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::space::{scalar_shape_gradients, scalar_shape_values, FeFunction, FieldRole, MiniSpace};
use crate::sparse::CsrMatrix;

/// Which norm [`AssembledOperators::norm`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    L2,
    H1Semi,
    H1,
}

/// The time-independent operators of the scheme.
///
/// `m` is the velocity mass matrix, `k_d` the deformation stiffness with
/// entries `2 (D(phi_i), D(phi_j))`, `b_div` the pressure-by-velocity
/// divergence matrix with entries `(div phi_i, psi_j)` stored at
/// `(row j, col i)`. `k_full` (full-gradient velocity stiffness) and the
/// pressure mass/stiffness blocks back the norm machinery.
#[derive(Debug)]
pub struct AssembledOperators {
    space: Arc<MiniSpace>,
    pub m: CsrMatrix,
    pub k_d: CsrMatrix,
    pub k_full: CsrMatrix,
    pub b_div: CsrMatrix,
    pub m_p: CsrMatrix,
    pub k_p: CsrMatrix,
}

/// Local element matrices for one triangle geometry.
struct LocalMatrices {
    mass4: [[f64; 4]; 4],
    stiff4: [[f64; 4]; 4],
    kd8: [[f64; 8]; 8],
    // bdiv[comp][a][j] = int (d_comp N_a) lambda_j
    bdiv: [[[f64; 3]; 4]; 2],
    mass3: [[f64; 3]; 3],
    stiff3: [[f64; 3]; 3],
}

fn local_matrices(two_area: f64, bary_grads: &[[f64; 2]; 3], rule: &QuadratureRule) -> LocalMatrices {
    let mut loc = LocalMatrices {
        mass4: [[0.0; 4]; 4],
        stiff4: [[0.0; 4]; 4],
        kd8: [[0.0; 8]; 8],
        bdiv: [[[0.0; 3]; 4]; 2],
        mass3: [[0.0; 3]; 3],
        stiff3: [[0.0; 3]; 3],
    };
    for (lam, &w) in rule.points.iter().zip(&rule.weights) {
        let sv = scalar_shape_values(lam);
        let sg = scalar_shape_gradients(lam, bary_grads);
        let wq = w * two_area;
        for a in 0..4 {
            for b in 0..4 {
                loc.mass4[a][b] += wq * sv[a] * sv[b];
                loc.stiff4[a][b] += wq * (sg[a][0] * sg[b][0] + sg[a][1] * sg[b][1]);
                // 2 (D(phi_a^x), D(phi_b^x)) = 2 dx dx + dy dy, and the
                // x/y cross block couples the mixed derivatives.
                loc.kd8[a][b] += wq * (2.0 * sg[a][0] * sg[b][0] + sg[a][1] * sg[b][1]);
                loc.kd8[4 + a][4 + b] += wq * (2.0 * sg[a][1] * sg[b][1] + sg[a][0] * sg[b][0]);
                loc.kd8[a][4 + b] += wq * sg[a][1] * sg[b][0];
                loc.kd8[4 + a][b] += wq * sg[a][0] * sg[b][1];
            }
            for j in 0..3 {
                loc.bdiv[0][a][j] += wq * sg[a][0] * sv[j];
                loc.bdiv[1][a][j] += wq * sg[a][1] * sv[j];
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                loc.mass3[i][j] += wq * sv[i] * sv[j];
                loc.stiff3[i][j] += wq * (sg[i][0] * sg[j][0] + sg[i][1] * sg[j][1]);
            }
        }
    }
    loc
}

impl AssembledOperators {
    /// Assembles all operators with the fixed degree-6 rule.
    pub fn assemble(space: &Arc<MiniSpace>) -> Self {
        let rule = QuadratureRule::degree6();
        let mesh = space.mesh();
        let nu = space.num_velocity_dofs();
        let np = space.num_pressure_dofs();
        let two_area = 2.0 * mesh.triangle_area();

        // the two element geometries of the structured mesh
        let locals = [
            local_matrices(two_area, &mesh.barycentric_gradients(0), &rule),
            local_matrices(two_area, &mesh.barycentric_gradients(1), &rule),
        ];

        let nt = mesh.num_triangles();
        let mut m_tr = Vec::with_capacity(16 * nt);
        let mut kd_tr = Vec::with_capacity(64 * nt);
        let mut kf_tr = Vec::with_capacity(16 * nt);
        let mut bd_tr = Vec::with_capacity(24 * nt);
        let mut mp_tr = Vec::with_capacity(9 * nt);
        let mut kp_tr = Vec::with_capacity(9 * nt);

        for t in 0..nt {
            let loc = &locals[t % 2];
            let dofs = space.velocity_element_dofs(t);
            let tri = mesh.triangle(t);
            for a in 0..4 {
                for b in 0..4 {
                    for comp in 0..2 {
                        m_tr.push((dofs[4 * comp + a], dofs[4 * comp + b], loc.mass4[a][b]));
                        kf_tr.push((dofs[4 * comp + a], dofs[4 * comp + b], loc.stiff4[a][b]));
                    }
                }
                for j in 0..3 {
                    bd_tr.push((tri[j], dofs[a], loc.bdiv[0][a][j]));
                    bd_tr.push((tri[j], dofs[4 + a], loc.bdiv[1][a][j]));
                }
            }
            for i in 0..8 {
                for j in 0..8 {
                    kd_tr.push((dofs[i], dofs[j], loc.kd8[i][j]));
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    mp_tr.push((tri[i], tri[j], loc.mass3[i][j]));
                    kp_tr.push((tri[i], tri[j], loc.stiff3[i][j]));
                }
            }
        }

        Self {
            space: Arc::clone(space),
            m: CsrMatrix::from_triplets(nu, nu, &m_tr),
            k_d: CsrMatrix::from_triplets(nu, nu, &kd_tr),
            k_full: CsrMatrix::from_triplets(nu, nu, &kf_tr),
            b_div: CsrMatrix::from_triplets(np, nu, &bd_tr),
            m_p: CsrMatrix::from_triplets(np, np, &mp_tr),
            k_p: CsrMatrix::from_triplets(np, np, &kp_tr),
        }
    }

    pub fn space(&self) -> &Arc<MiniSpace> {
        &self.space
    }

    /// Norm of a finite element function (L2, H1 seminorm, or full H1).
    pub fn norm(&self, f: &FeFunction, kind: NormKind) -> f64 {
        let (mass, stiff) = match f.role() {
            FieldRole::Velocity => (&self.m, &self.k_full),
            FieldRole::Pressure => (&self.m_p, &self.k_p),
        };
        let c = f.coeffs();
        let value = match kind {
            NormKind::L2 => mass.quadratic_form(c),
            NormKind::H1Semi => stiff.quadratic_form(c),
            NormKind::H1 => mass.quadratic_form(c) + stiff.quadratic_form(c),
        };
        // quadratic forms of PSD matrices can round to tiny negatives
        value.max(0.0).sqrt()
    }

    /// Assembles the velocity load vector `(g, phi_i)` for a pointwise field.
    pub fn velocity_load(&self, rule: &QuadratureRule, g: impl Fn([f64; 2]) -> [f64; 2]) -> Vec<f64> {
        let mesh = self.space.mesh();
        let two_area = 2.0 * mesh.triangle_area();
        let mut out = vec![0.0; self.space.num_velocity_dofs()];
        for t in 0..mesh.num_triangles() {
            let [a, b, c] = mesh.triangle_coords(t);
            let dofs = self.space.velocity_element_dofs(t);
            for (lam, &w) in rule.points.iter().zip(&rule.weights) {
                let x = lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0];
                let y = lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1];
                let val = g([x, y]);
                let sv = scalar_shape_values(lam);
                let wq = w * two_area;
                for k in 0..4 {
                    out[dofs[k]] += wq * val[0] * sv[k];
                    out[dofs[4 + k]] += wq * val[1] * sv[k];
                }
            }
        }
        out
    }

    /// Divergence residual `||B_div u||_inf`.
    pub fn divergence_residual(&self, u: &[f64]) -> f64 {
        crate::sparse::infinity_norm(&self.b_div.matvec_alloc(u))
    }
}

/// Guards against mixing operators from different meshes.
pub fn check_same_space(ops: &AssembledOperators, f: &FeFunction) -> Result<()> {
    if !Arc::ptr_eq(ops.space(), f.space()) {
        return Err(Error::InvalidArgument(
            "function does not belong to the operators' space".into(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::quadrature::QuadratureRule;
    use crate::space::{evaluate_on_fine_quadrature, quadrature_l2_sq};
    use crate::sparse::euclidean_norm;

    fn setup(n: usize) -> (Arc<MiniSpace>, AssembledOperators) {
        let space = Arc::new(MiniSpace::new(Arc::new(Mesh::uniform(n).unwrap())));
        let ops = AssembledOperators::assemble(&space);
        (space, ops)
    }

    #[test]
    fn p1_mass_matrix_matches_closed_form_on_single_triangle() {
        // |T|/12 * [[2,1,1],[1,2,1],[1,1,2]], from int l_i l_j = 2|T| i!j!/4!
        let mesh = Mesh::uniform(1).unwrap();
        let area = mesh.triangle_area();
        let rule = QuadratureRule::degree6();
        let locals = local_matrices(2.0 * area, &mesh.barycentric_gradients(0), &rule);
        for i in 0..3 {
            for j in 0..3 {
                let exact = if i == j { 2.0 * area / 12.0 } else { area / 12.0 };
                assert!(
                    (locals.mass3[i][j] - exact).abs() < 1e-16,
                    "mass3[{i}][{j}] = {}",
                    locals.mass3[i][j]
                );
            }
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let (space, ops) = setup(3);
        for (r, c, v) in ops.m.iter() {
            let (cols, vals) = ops.m.row(c);
            let back = cols.iter().position(|&k| k == r).map(|k| vals[k]).unwrap();
            assert!((v - back).abs() <= 1e-15 * v.abs().max(1e-300));
        }
        // positive definiteness probe on pseudo-random vectors
        let nu = space.num_velocity_dofs();
        for s in 0..5 {
            let x: Vec<f64> = (0..nu).map(|k| ((k * 31 + s * 17) as f64).sin()).collect();
            assert!(ops.m.quadratic_form(&x) > 0.0);
        }
    }

    #[test]
    fn deformation_stiffness_annihilates_rigid_motions() {
        let (space, ops) = setup(4);
        let fields: [Box<dyn Fn([f64; 2]) -> [f64; 2]>; 3] = [
            Box::new(|_| [1.0, 0.0]),
            Box::new(|_| [0.0, 1.0]),
            Box::new(|[x, y]| [-y, x]),
        ];
        for f in fields {
            let v = space.interpolate_p1_velocity(f);
            let kv = ops.k_d.matvec_alloc(v.coeffs());
            let scale = euclidean_norm(v.coeffs()) * 10.0; // K_d entries are O(1)-O(10)
            assert!(euclidean_norm(&kv) <= 1e-12 * scale.max(1.0));
            // K_d is PSD: the quadratic form vanishes too
            assert!(ops.k_d.quadratic_form(v.coeffs()).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_velocity_l2_norm_is_sqrt_two() {
        let (space, ops) = setup(5);
        let f = space.interpolate_p1_velocity(|_| [1.0, 1.0]);
        assert!((ops.norm(&f, NormKind::L2) - 2.0f64.sqrt()).abs() < 1e-13);
        let zero = space.zero_fn(FieldRole::Velocity);
        assert_eq!(ops.norm(&zero, NormKind::L2), 0.0);
    }

    #[test]
    fn linear_velocity_h1_seminorm_is_exact() {
        let (space, ops) = setup(4);
        let f = space.interpolate_p1_velocity(|[x, _]| [x, 0.0]);
        assert!((ops.norm(&f, NormKind::H1Semi) - 1.0).abs() < 1e-13);
        let l2 = ops.norm(&f, NormKind::L2);
        let h1 = ops.norm(&f, NormKind::H1);
        assert!((h1 * h1 - (1.0 + l2 * l2)).abs() < 1e-13);
    }

    #[test]
    fn coarse_l2_norm_matches_fine_quadrature_integral() {
        let (space, ops) = setup(2);
        let mut coeffs = vec![0.0; space.num_velocity_dofs()];
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = ((k * 7 % 13) as f64 - 6.0) / 6.0;
        }
        let f = space.velocity_fn(coeffs).unwrap();
        let direct = ops.norm(&f, NormKind::L2);
        let rule = QuadratureRule::degree6();
        let fine = Mesh::uniform(8).unwrap();
        let vals = evaluate_on_fine_quadrature(&f, &fine, &rule).unwrap();
        let via_fine = quadrature_l2_sq(&vals, 2, &fine, &rule).sqrt();
        assert!(
            (direct - via_fine).abs() <= 1e-12 * direct.max(1.0),
            "{direct} vs {via_fine}"
        );
    }

    #[test]
    fn constant_pressure_is_not_in_divergence_nullspace() {
        for n in [2usize, 4, 8] {
            let (space, ops) = setup(n);
            let ones = vec![1.0; space.num_pressure_dofs()];
            // B_div^T 1 has entries int div(phi_i) dx = boundary flux of phi_i
            let mut bt1 = vec![0.0; space.num_velocity_dofs()];
            for (r, c, v) in ops.b_div.iter() {
                bt1[c] += v * ones[r];
            }
            assert!(euclidean_norm(&bt1) > 1e-3);
        }
    }

    #[test]
    fn divergence_matrix_has_full_row_rank() {
        // smallest singular value of the pressure Schur complement
        // B M^{-1} B^T stays strictly positive (inf-sup at fixed n)
        use nalgebra::DMatrix;
        for n in [2usize, 4] {
            let (space, ops) = setup(n);
            let nu = space.num_velocity_dofs();
            let np = space.num_pressure_dofs();
            let mut m = DMatrix::<f64>::zeros(nu, nu);
            for (r, c, v) in ops.m.iter() {
                m[(r, c)] = v;
            }
            let mut b = DMatrix::<f64>::zeros(np, nu);
            for (r, c, v) in ops.b_div.iter() {
                b[(r, c)] = v;
            }
            let m_inv = m.try_inverse().expect("mass matrix invertible");
            let schur = &b * m_inv * b.transpose();
            let eig = schur.symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 1e-8, "n = {n}: smallest Schur eigenvalue {min}");
        }
    }

    #[test]
    fn korn_constant_is_stable_across_levels() {
        let mut thetas = Vec::new();
        for n in [2usize, 4, 8] {
            let (space, ops) = setup(n);
            let nu = space.num_velocity_dofs();
            let mut theta_level = f64::INFINITY;
            for s in 0..50 {
                let c: Vec<f64> = (0..nu)
                    .map(|k| (((k * 2654435761 + s * 40503) % 1000) as f64 / 500.0) - 1.0)
                    .collect();
                let num = ops.m.quadratic_form(&c) + ops.k_d.quadratic_form(&c);
                let den = ops.m.quadratic_form(&c) + ops.k_full.quadratic_form(&c);
                theta_level = theta_level.min(num / den);
            }
            assert!(theta_level > 0.0);
            thetas.push(theta_level);
        }
        // the constant must not degenerate as the mesh refines
        let max = thetas.iter().cloned().fold(0.0f64, f64::max);
        let min = thetas.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            min > 0.2 * max,
            "Korn ratio degenerates across levels: {thetas:?}"
        );
    }

    #[test]
    fn assembly_is_bitwise_reproducible() {
        let (_, ops1) = setup(3);
        let (_, ops2) = setup(3);
        let rows: Vec<_> = ops1.m.iter().collect();
        let rows2: Vec<_> = ops2.m.iter().collect();
        assert_eq!(rows, rows2);
        let kd1: Vec<_> = ops1.k_d.iter().collect();
        let kd2: Vec<_> = ops2.k_d.iter().collect();
        assert_eq!(kd1, kd2);
    }
}
