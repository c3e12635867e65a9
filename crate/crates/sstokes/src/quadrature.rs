//! Triangle quadrature used by every integral in the crate.
//!
//! A single fixed rule keeps assembly deterministic and makes the
//! integration error of non-polynomial integrands uniform across refinement
//! levels. The rule is the conical product of two 4-point Gauss--Legendre
//! rules under the Duffy map `(s, t) -> (s, t(1-s))`, which integrates all
//! bivariate polynomials of total degree <= 7 on the reference triangle and
//! has 16 strictly positive weights. The Gauss nodes are generated from
//! their closed forms, so the rule carries full double precision.

/// Quadrature points as barycentric triples with matching weights.
///
/// Weights are normalized against the reference triangle, i.e. they sum to
/// its area `1/2`; an integral over a physical triangle `T` is
/// `2 |T| * sum_q w_q f(lambda_q)`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

/// 4-point Gauss--Legendre nodes/weights on [0, 1], from the closed form on
/// [-1, 1]: nodes `+-sqrt(3/7 -+ 2/7 sqrt(6/5))`, weights `(18 +- sqrt(30))/36`.
fn gauss_legendre_4() -> [(f64, f64); 4] {
    let s65 = (6.0f64 / 5.0).sqrt();
    let inner = (3.0f64 / 7.0 - 2.0 / 7.0 * s65).sqrt();
    let outer = (3.0f64 / 7.0 + 2.0 / 7.0 * s65).sqrt();
    let w_inner = (18.0 + 30.0f64.sqrt()) / 36.0;
    let w_outer = (18.0 - 30.0f64.sqrt()) / 36.0;
    // map t in [-1,1] to (1+t)/2 in [0,1], weight halves
    [
        (0.5 * (1.0 - outer), 0.5 * w_outer),
        (0.5 * (1.0 - inner), 0.5 * w_inner),
        (0.5 * (1.0 + inner), 0.5 * w_inner),
        (0.5 * (1.0 + outer), 0.5 * w_outer),
    ]
}

impl QuadratureRule {
    /// The fixed degree-6-exact rule (16 points).
    pub fn degree6() -> Self {
        let gl = gauss_legendre_4();
        let mut points = Vec::with_capacity(16);
        let mut weights = Vec::with_capacity(16);
        for &(s, ws) in &gl {
            for &(t, wt) in &gl {
                // reference triangle (0,0), (1,0), (0,1); x = s, y = t(1-s)
                let x = s;
                let y = t * (1.0 - s);
                points.push([1.0 - x - y, x, y]);
                weights.push(ws * wt * (1.0 - s));
            }
        }
        Self { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f(lambda)` over the reference triangle.
    pub fn integrate_reference(&self, mut f: impl FnMut(&[f64; 3]) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| w * f(p))
            .sum()
    }
}
