//! The MINI mixed finite element pair on a structured mesh.
//!
//! Velocity: continuous piecewise linears enriched with one cubic bubble per
//! triangle, per component. Pressure: continuous piecewise linears. The pair
//! is inf-sup stable, and with the stress (do-nothing) boundary condition no
//! degree of freedom is ever eliminated.
//!
//! Velocity DOF layout, per component `k` (x first, then y):
//! `k * (nv + nt) + v` for the nodal value at vertex `v`, and
//! `k * (nv + nt) + nv + t` for the bubble on triangle `t`. Pressure DOFs are
//! vertex indices. The numbering is a pure function of the mesh.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;

/// What a coefficient vector represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    Velocity,
    Pressure,
}

/// Scalar P1 + bubble shape values at a barycentric point:
/// `[l1, l2, l3, 27 l1 l2 l3]`. The bubble equals 1 at the centroid and
/// vanishes on the triangle boundary.
pub fn scalar_shape_values(lam: &[f64; 3]) -> [f64; 4] {
    [lam[0], lam[1], lam[2], 27.0 * lam[0] * lam[1] * lam[2]]
}

/// Scalar shape gradients given the (constant) barycentric gradients of the
/// triangle.
pub fn scalar_shape_gradients(lam: &[f64; 3], bary_grads: &[[f64; 2]; 3]) -> [[f64; 2]; 4] {
    let [g1, g2, g3] = bary_grads;
    let gb = [
        27.0 * (lam[1] * lam[2] * g1[0] + lam[0] * lam[2] * g2[0] + lam[0] * lam[1] * g3[0]),
        27.0 * (lam[1] * lam[2] * g1[1] + lam[0] * lam[2] * g2[1] + lam[0] * lam[1] * g3[1]),
    ];
    [*g1, *g2, *g3, gb]
}

/// DOF bookkeeping for the MINI pair on one mesh.
#[derive(Debug)]
pub struct MiniSpace {
    mesh: Arc<Mesh>,
    scalar_dofs: usize,
}

impl MiniSpace {
    pub fn new(mesh: Arc<Mesh>) -> Self {
        let scalar_dofs = mesh.num_vertices() + mesh.num_triangles();
        Self { mesh, scalar_dofs }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn num_velocity_dofs(&self) -> usize {
        2 * self.scalar_dofs
    }

    pub fn num_pressure_dofs(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn dofs_for(&self, role: FieldRole) -> usize {
        match role {
            FieldRole::Velocity => self.num_velocity_dofs(),
            FieldRole::Pressure => self.num_pressure_dofs(),
        }
    }

    /// Global index of the nodal velocity DOF for `component` at `vertex`.
    pub fn vertex_dof(&self, component: usize, vertex: usize) -> usize {
        component * self.scalar_dofs + vertex
    }

    /// Global index of the bubble velocity DOF for `component` on `triangle`.
    pub fn bubble_dof(&self, component: usize, triangle: usize) -> usize {
        component * self.scalar_dofs + self.mesh.num_vertices() + triangle
    }

    /// The 8 velocity DOFs attached to a triangle, x component first.
    pub fn velocity_element_dofs(&self, triangle: usize) -> [usize; 8] {
        let [a, b, c] = self.mesh.triangle(triangle);
        [
            self.vertex_dof(0, a),
            self.vertex_dof(0, b),
            self.vertex_dof(0, c),
            self.bubble_dof(0, triangle),
            self.vertex_dof(1, a),
            self.vertex_dof(1, b),
            self.vertex_dof(1, c),
            self.bubble_dof(1, triangle),
        ]
    }

    /// Evaluates a velocity coefficient vector at a barycentric point of a
    /// triangle, including the bubble contribution.
    pub fn eval_velocity(&self, coeffs: &[f64], triangle: usize, lam: &[f64; 3]) -> [f64; 2] {
        let sv = scalar_shape_values(lam);
        let [a, b, c] = self.mesh.triangle(triangle);
        let mut out = [0.0; 2];
        for comp in 0..2 {
            out[comp] = sv[0] * coeffs[self.vertex_dof(comp, a)]
                + sv[1] * coeffs[self.vertex_dof(comp, b)]
                + sv[2] * coeffs[self.vertex_dof(comp, c)]
                + sv[3] * coeffs[self.bubble_dof(comp, triangle)];
        }
        out
    }

    pub fn eval_pressure(&self, coeffs: &[f64], triangle: usize, lam: &[f64; 3]) -> f64 {
        let [a, b, c] = self.mesh.triangle(triangle);
        lam[0] * coeffs[a] + lam[1] * coeffs[b] + lam[2] * coeffs[c]
    }

    /// Nodal interpolant of a pointwise velocity field; bubbles are left at
    /// zero, so linear fields are reproduced exactly.
    pub fn interpolate_p1_velocity(
        self: &Arc<Self>,
        f: impl Fn([f64; 2]) -> [f64; 2],
    ) -> FeFunction {
        let mut coeffs = vec![0.0; self.num_velocity_dofs()];
        for (v, &p) in self.mesh.vertices().iter().enumerate() {
            let val = f(p);
            coeffs[self.vertex_dof(0, v)] = val[0];
            coeffs[self.vertex_dof(1, v)] = val[1];
        }
        FeFunction {
            space: Arc::clone(self),
            role: FieldRole::Velocity,
            coeffs,
        }
    }

    pub fn velocity_fn(self: &Arc<Self>, coeffs: Vec<f64>) -> Result<FeFunction> {
        FeFunction::new(Arc::clone(self), FieldRole::Velocity, coeffs)
    }

    pub fn pressure_fn(self: &Arc<Self>, coeffs: Vec<f64>) -> Result<FeFunction> {
        FeFunction::new(Arc::clone(self), FieldRole::Pressure, coeffs)
    }

    pub fn zero_fn(self: &Arc<Self>, role: FieldRole) -> FeFunction {
        FeFunction {
            space: Arc::clone(self),
            role,
            coeffs: vec![0.0; self.dofs_for(role)],
        }
    }
}

/// A finite element function: a coefficient vector tagged with its role.
#[derive(Debug, Clone)]
pub struct FeFunction {
    space: Arc<MiniSpace>,
    role: FieldRole,
    coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn new(space: Arc<MiniSpace>, role: FieldRole, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.dofs_for(role) {
            return Err(Error::InvalidArgument(format!(
                "coefficient length {} does not match {:?} DOF count {}",
                coeffs.len(),
                role,
                space.dofs_for(role)
            )));
        }
        Ok(Self {
            space,
            role,
            coeffs,
        })
    }

    pub fn space(&self) -> &Arc<MiniSpace> {
        &self.space
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn eval(&self, triangle: usize, lam: &[f64; 3]) -> [f64; 2] {
        match self.role {
            FieldRole::Velocity => self.space.eval_velocity(&self.coeffs, triangle, lam),
            FieldRole::Pressure => [self.space.eval_pressure(&self.coeffs, triangle, lam), 0.0],
        }
    }
}

/// Physical coordinates of every quadrature point of `mesh`, triangle-major.
pub fn quadrature_points(mesh: &Mesh, rule: &QuadratureRule) -> Vec<[f64; 2]> {
    let mut pts = Vec::with_capacity(mesh.num_triangles() * rule.len());
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangle_coords(t);
        for lam in &rule.points {
            pts.push([
                lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0],
                lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1],
            ]);
        }
    }
    pts
}

/// Evaluates `f` (velocity- or pressure-valued) at every quadrature point of
/// `fine_mesh`, locating each point on the coarse mesh of `f`.
///
/// Velocity values are interleaved as `[u1, u2]` pairs; pressures occupy one
/// slot per point. The meshes must belong to the same nested family so the
/// evaluation is exact (each fine triangle lies inside one coarse triangle).
pub fn evaluate_on_fine_quadrature(
    f: &FeFunction,
    fine_mesh: &Mesh,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let coarse = f.space().mesh();
    if !coarse.is_nested_in(fine_mesh) {
        return Err(Error::NonNested {
            coarse: coarse.subdivisions(),
            fine: fine_mesh.subdivisions(),
        });
    }
    let width = match f.role() {
        FieldRole::Velocity => 2,
        FieldRole::Pressure => 1,
    };
    let pts = quadrature_points(fine_mesh, rule);
    let mut out = Vec::with_capacity(width * pts.len());
    for p in pts {
        let (t, lam) = coarse.locate(p)?;
        match f.role() {
            FieldRole::Velocity => {
                let v = f.space().eval_velocity(f.coeffs(), t, &lam);
                out.push(v[0]);
                out.push(v[1]);
            }
            FieldRole::Pressure => out.push(f.space().eval_pressure(f.coeffs(), t, &lam)),
        }
    }
    Ok(out)
}

/// Squared L2 norm of per-quadrature-point values on `mesh` (interleaved
/// `width` components per point).
pub fn quadrature_l2_sq(values: &[f64], width: usize, mesh: &Mesh, rule: &QuadratureRule) -> f64 {
    let two_area = 2.0 * mesh.triangle_area();
    let nq = rule.len();
    debug_assert_eq!(values.len(), width * nq * mesh.num_triangles());
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let mut local = 0.0;
        for (q, &w) in rule.weights.iter().enumerate() {
            let base = width * (t * nq + q);
            let mut sq = 0.0;
            for k in 0..width {
                let v = values[base + k];
                sq += v * v;
            }
            local += w * sq;
        }
        total += two_area * local;
    }
    total
}
