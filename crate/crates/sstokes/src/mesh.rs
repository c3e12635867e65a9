//! Structured triangulations of the unit square.
//!
//! Every mesh splits an `n x n` grid of square cells into two triangles
//! along the diagonal from the cell's lower-left to its upper-right corner.
//! Because the diagonal orientation is fixed, the mesh with `2n` subdivisions
//! refines the mesh with `n` exactly: coarse vertices and edges are reproduced
//! on the fine mesh, which lets us evaluate a coarse finite element function
//! at fine quadrature points without any geometric search.

use crate::error::{Error, Result};

/// Containment slack for barycentric coordinates in [`Mesh::locate`].
const LOCATE_TOL: f64 = 1e-12;

/// A uniform triangulation of `[0,1]^2` with `n` subdivisions per side.
#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    level: u32,
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    h: f64,
}

impl Mesh {
    /// Builds the uniform mesh with `n` cells per side.
    ///
    /// Each cell `(i, j)` contributes a lower triangle (below the cell
    /// diagonal) and an upper triangle, indexed `2*(j*n+i)` and `2*(j*n+i)+1`.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::with_level(n, 0)
    }

    fn with_level(n: usize, level: u32) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument(
                "mesh subdivision count must be at least 1".into(),
            ));
        }
        let nv = (n + 1) * (n + 1);
        let mut vertices = Vec::with_capacity(nv);
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let v00 = j * (n + 1) + i;
                let v10 = v00 + 1;
                let v01 = v00 + (n + 1);
                let v11 = v01 + 1;
                // lower: below the (v00, v11) diagonal; both counterclockwise
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            }
        }
        Ok(Self {
            n,
            level,
            vertices,
            triangles,
            h: 1.0 / n as f64,
        })
    }

    /// The mesh with doubled resolution, one refinement level deeper.
    pub fn refine(&self) -> Mesh {
        Self::with_level(2 * self.n, self.level + 1).expect("2n >= 1")
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    /// Mesh size, reported as the cell side `1/n`.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex(&self, v: usize) -> [f64; 2] {
        self.vertices[v]
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Signed area of every triangle; uniform by construction.
    pub fn triangle_area(&self) -> f64 {
        1.0 / (2.0 * (self.n * self.n) as f64)
    }

    /// Coordinates of the three corners of triangle `t`.
    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Constant barycentric gradients of triangle `t`.
    ///
    /// Row `i` is the gradient of the barycentric coordinate attached to the
    /// `i`-th corner.
    pub fn barycentric_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [p1, p2, p3] = self.triangle_coords(t);
        let inv2a = 1.0 / (2.0 * self.triangle_area());
        [
            [(p2[1] - p3[1]) * inv2a, (p3[0] - p2[0]) * inv2a],
            [(p3[1] - p1[1]) * inv2a, (p1[0] - p3[0]) * inv2a],
            [(p1[1] - p2[1]) * inv2a, (p2[0] - p1[0]) * inv2a],
        ]
    }

    /// True when `self` is a coarse member of the nested family containing `fine`.
    pub fn is_nested_in(&self, fine: &Mesh) -> bool {
        fine.n >= self.n && fine.n % self.n == 0
    }

    /// Locates `p` in the structured grid and returns `(triangle index,
    /// barycentric coordinates)`.
    ///
    /// Points on shared edges are assigned to the containing triangle with the
    /// smallest index, so the result is deterministic; in particular a point
    /// on a cell diagonal goes to the lower triangle. Points may sit up to
    /// `1e-12` outside the unit square.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        let [x, y] = p;
        if !(x.is_finite() && y.is_finite())
            || x < -LOCATE_TOL
            || y < -LOCATE_TOL
            || x > 1.0 + LOCATE_TOL
            || y > 1.0 + LOCATE_TOL
        {
            return Err(Error::OutOfDomain { x, y });
        }
        // Accepted points are clamped onto the closed square so the
        // barycentric output stays clean even for inputs a rounding error
        // outside of it.
        let x = x.clamp(0.0, 1.0);
        let y = y.clamp(0.0, 1.0);
        let nf = self.n as f64;
        let sx = x * nf;
        let sy = y * nf;
        let ci = (sx.floor() as isize).clamp(0, self.n as isize - 1);
        let cj = (sy.floor() as isize).clamp(0, self.n as isize - 1);

        // The floor cell is almost always the answer. Points on (or within
        // rounding of) a cell edge can also belong to a neighbor cell; scan
        // the 3x3 cell neighborhood and keep the smallest containing triangle.
        let mut best: Option<(usize, [f64; 3])> = None;
        for dj in -1..=1isize {
            for di in -1..=1isize {
                let i = ci + di;
                let j = cj + dj;
                if i < 0 || j < 0 || i >= self.n as isize || j >= self.n as isize {
                    continue;
                }
                let (i, j) = (i as usize, j as usize);
                let xi = sx - i as f64;
                let eta = sy - j as f64;
                let cell = j * self.n + i;
                // lower triangle: lambda = (1-xi, xi-eta, eta)
                let lam_low = [1.0 - xi, xi - eta, eta];
                // upper triangle: lambda = (1-eta, xi, eta-xi)
                let lam_up = [1.0 - eta, xi, eta - xi];
                for (k, lam) in [(2 * cell, lam_low), (2 * cell + 1, lam_up)] {
                    if lam.iter().all(|&l| l >= -LOCATE_TOL) && best.map_or(true, |(b, _)| k < b) {
                        best = Some((k, lam));
                    }
                }
            }
        }
        let (t, lam) = best.ok_or(Error::OutOfDomain { x, y })?;
        // Snap rounding-level negatives to zero; keeps the coordinates
        // nonnegative without disturbing interior points.
        let lam = lam.map(|l| if l < 0.0 { 0.0 } else { l });
        Ok((t, lam))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_zero_subdivisions() {
        assert!(Mesh::uniform(0).is_err());
    }

    #[test]
    fn counts_and_areas() {
        for (n, nv, nt) in [(1usize, 4usize, 2usize), (2, 9, 8), (4, 25, 32)] {
            let mesh = Mesh::uniform(n).unwrap();
            assert_eq!(mesh.num_vertices(), nv);
            assert_eq!(mesh.num_triangles(), nt);
            assert_eq!(mesh.triangle_area(), 1.0 / (2.0 * (n * n) as f64));
            assert_eq!(mesh.h(), 1.0 / n as f64);
        }
    }

    #[test]
    fn signed_areas_positive_and_sum_to_one() {
        for n in [1usize, 2, 4, 8, 16] {
            let mesh = Mesh::uniform(n).unwrap();
            let mut total = 0.0;
            for t in 0..mesh.num_triangles() {
                let [a, b, c] = mesh.triangle_coords(t);
                let signed =
                    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]));
                assert!(signed > 0.0);
                assert!((signed - mesh.triangle_area()).abs() < 1e-16);
                total += signed;
            }
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn coarse_vertices_appear_on_fine_mesh() {
        let coarse = Mesh::uniform(2).unwrap();
        let fine = Mesh::uniform(4).unwrap();
        assert!(coarse.is_nested_in(&fine));
        for v in coarse.vertices() {
            assert!(fine
                .vertices()
                .iter()
                .any(|w| w[0] == v[0] && w[1] == v[1]));
        }
    }

    #[test]
    fn locate_corner_returns_corner_vertex_weight() {
        let mesh = Mesh::uniform(4).unwrap();
        let (t, lam) = mesh.locate([0.0, 0.0]).unwrap();
        assert_eq!(t, 0);
        assert_eq!(lam[0], 1.0);
        assert_eq!(lam[1], 0.0);
        assert_eq!(lam[2], 0.0);
    }

    #[test]
    fn locate_centroid_is_strictly_interior() {
        let mesh = Mesh::uniform(2).unwrap();
        // centroid of the lower triangle of cell (0, 0)
        let p = [(0.0 + 0.5 + 0.5) / 3.0, (0.0 + 0.0 + 0.5) / 3.0];
        let (t, lam) = mesh.locate(p).unwrap();
        assert_eq!(t, 0);
        assert!(lam.iter().all(|&l| l > 0.0));
    }

    #[test]
    fn locate_diagonal_ties_break_to_lower_triangle() {
        let mesh = Mesh::uniform(2).unwrap();
        let (t, _) = mesh.locate([0.25, 0.25]).unwrap();
        assert_eq!(t, 0, "cell diagonal belongs to the lower triangle");
    }

    #[test]
    fn locate_shared_edges_take_smallest_triangle_index() {
        let mesh = Mesh::uniform(2).unwrap();
        // vertical edge x = 0.5 between cells (0,0) and (1,0): the lower
        // triangle of cell (0,0) has index 0, the candidates in cell (1,0)
        // have indices 2 and 3.
        let (t, _) = mesh.locate([0.5, 0.25]).unwrap();
        assert_eq!(t, 0);
        // horizontal edge y = 0.5 between cells (0,0) and (0,1): triangle 1
        // (upper of cell (0,0)) wins over 4/5 in cell (0,1).
        let (t, _) = mesh.locate([0.25, 0.5]).unwrap();
        assert_eq!(t, 1);
    }

    #[test]
    fn locate_rejects_outside_points() {
        let mesh = Mesh::uniform(2).unwrap();
        assert!(mesh.locate([-0.1, 0.5]).is_err());
        assert!(mesh.locate([0.5, 1.1]).is_err());
        // the 1e-12 slack is honored
        assert!(mesh.locate([1.0 + 5e-13, 0.5]).is_ok());
    }

    proptest! {
        #[test]
        fn locate_reconstructs_point(x in 0.0f64..=1.0, y in 0.0f64..=1.0, n in 1usize..12) {
            let mesh = Mesh::uniform(n).unwrap();
            let (t, lam) = mesh.locate([x, y]).unwrap();
            let sum: f64 = lam.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(lam.iter().all(|&l| l >= 0.0));
            let [a, b, c] = mesh.triangle_coords(t);
            let rx = lam[0] * a[0] + lam[1] * b[0] + lam[2] * c[0];
            let ry = lam[0] * a[1] + lam[1] * b[1] + lam[2] * c[1];
            prop_assert!((rx - x).abs() <= 1e-12 && (ry - y).abs() <= 1e-12);
        }

        #[test]
        fn locate_is_consistent_across_refinement(x in 0.0f64..=1.0, y in 0.0f64..=1.0, n in 1usize..8) {
            let coarse = Mesh::uniform(n).unwrap();
            let fine = coarse.refine();
            prop_assert_eq!(fine.level(), coarse.level() + 1);
            let (tc, _) = coarse.locate([x, y]).unwrap();
            let (tf, _) = fine.locate([x, y]).unwrap();
            // the fine triangle lies inside the coarse one: all of its corners
            // carry nonnegative barycentric coordinates w.r.t. the coarse triangle
            let [p1, p2, p3] = coarse.triangle_coords(tc);
            let area2 = 2.0 * coarse.triangle_area();
            for corner in fine.triangle_coords(tf) {
                let l1 = ((p2[0] - corner[0]) * (p3[1] - corner[1])
                    - (p3[0] - corner[0]) * (p2[1] - corner[1]))
                    / area2;
                let l2 = ((p3[0] - corner[0]) * (p1[1] - corner[1])
                    - (p1[0] - corner[0]) * (p3[1] - corner[1]))
                    / area2;
                let l3 = 1.0 - l1 - l2;
                prop_assert!(l1 >= -1e-9 && l2 >= -1e-9 && l3 >= -1e-9);
            }
        }
    }
}
