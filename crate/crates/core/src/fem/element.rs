//! Quadratic (P2) and linear (P1) Lagrange shape functions on affine triangles.
//!
//! Local P2 numbering: vertices 0, 1, 2, then the midpoints of edges
//! (1,2), (2,0), (0,1).

use crate::scalar::{cross, lit, sub, Scalar, Vec2};

/// Vertex pairs of the three edges, in local midpoint order.
pub const EDGE_VERTICES: [[usize; 2]; 3] = [[1, 2], [2, 0], [0, 1]];

/// Affine map data of one triangle.
#[derive(Clone, Copy, Debug)]
pub struct Affine<T> {
    pub vertices: [Vec2<T>; 3],
    /// Signed area.
    pub area: T,
    /// Constant gradients of the barycentric coordinates.
    pub grad_bary: [Vec2<T>; 3],
}

impl<T: Scalar> Affine<T> {
    pub fn new(vertices: [Vec2<T>; 3]) -> Self {
        let [a, b, c] = vertices;
        let twice = cross(sub(b, a), sub(c, a));
        let inv = T::one() / twice;
        // ∇λ_i is the inward edge normal of the opposite edge over twice the area
        let g = |p: Vec2<T>, q: Vec2<T>| [(p[1] - q[1]) * inv, (q[0] - p[0]) * inv];
        Self { vertices, area: twice * lit(0.5), grad_bary: [g(b, c), g(c, a), g(a, b)] }
    }

    pub fn point(&self, bary: [T; 3]) -> Vec2<T> {
        let v = &self.vertices;
        [
            bary[0] * v[0][0] + bary[1] * v[1][0] + bary[2] * v[2][0],
            bary[0] * v[0][1] + bary[1] * v[1][1] + bary[2] * v[2][1],
        ]
    }

    /// Barycentric coordinates of a physical point.
    pub fn barycentric(&self, p: Vec2<T>) -> [T; 3] {
        let [a, b, c] = self.vertices;
        let twice = self.area * lit(2.0);
        let l1 = cross(sub(c, b), sub(p, b)) / twice;
        let l2 = cross(sub(a, c), sub(p, c)) / twice;
        [l1, l2, T::one() - l1 - l2]
    }

    pub fn p2_grads(&self, bary: [T; 3]) -> [Vec2<T>; 6] {
        p2_grads(bary, &self.grad_bary)
    }
}

pub fn p2_values<T: Scalar>(l: [T; 3]) -> [T; 6] {
    let two = lit::<T>(2.0);
    let four = lit::<T>(4.0);
    [
        l[0] * (two * l[0] - T::one()),
        l[1] * (two * l[1] - T::one()),
        l[2] * (two * l[2] - T::one()),
        four * l[1] * l[2],
        four * l[2] * l[0],
        four * l[0] * l[1],
    ]
}

pub fn p2_grads<T: Scalar>(l: [T; 3], g: &[Vec2<T>; 3]) -> [Vec2<T>; 6] {
    let four = lit::<T>(4.0);
    let vtx = |i: usize| {
        let s = four * l[i] - T::one();
        [s * g[i][0], s * g[i][1]]
    };
    let mid = |i: usize, j: usize| {
        [four * (l[i] * g[j][0] + l[j] * g[i][0]), four * (l[i] * g[j][1] + l[j] * g[i][1])]
    };
    [vtx(0), vtx(1), vtx(2), mid(1, 2), mid(2, 0), mid(0, 1)]
}

/// Barycentric coordinates of the six P2 nodes.
pub fn p2_node_bary<T: Scalar>() -> [[T; 3]; 6] {
    let (o, z, h) = (T::one(), T::zero(), lit::<T>(0.5));
    [[o, z, z], [z, o, z], [z, z, o], [z, h, h], [h, z, h], [h, h, z]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p2_basis_is_nodal() {
        let nodes = p2_node_bary::<f64>();
        for (i, l) in nodes.iter().enumerate() {
            let v = p2_values(*l);
            for (j, val) in v.iter().enumerate() {
                assert_eq!(*val, if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let el = Affine::<f64>::new([[0.1, 0.2], [0.9, 0.0], [0.3, 0.7]]);
        let p = [0.4, 0.3];
        let grads = el.p2_grads(el.barycentric(p));
        let eps = 1e-6f64;
        for k in 0..6 {
            for d in 0..2 {
                let mut pp = p;
                let mut pm = p;
                pp[d] += eps;
                pm[d] -= eps;
                let fd = (p2_values(el.barycentric(pp))[k] - p2_values(el.barycentric(pm))[k]) / (2.0 * eps);
                assert!((fd - grads[k][d]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn barycentric_round_trip() {
        let el = Affine::<f64>::new([[0.1, 0.2], [0.9, 0.0], [0.3, 0.7]]);
        let l = [0.2, 0.5, 0.3];
        let back = el.barycentric(el.point(l));
        for k in 0..3 {
            assert!((back[k] - l[k]).abs() < 1e-14);
        }
    }
}
