//! Symmetric 7-point triangle rule, exact for polynomials of degree 5.

use crate::scalar::{lit, Scalar};

/// Quadrature point in barycentric coordinates with a weight normalised so
/// that the weights sum to one (multiply by the triangle area).
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint<T> {
    pub bary: [T; 3],
    pub weight: T,
}

pub fn triangle_rule<T: Scalar>() -> [QuadPoint<T>; 7] {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let b1 = (9.0 + 2.0 * s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let a2 = (6.0 + s15) / 21.0;
    let b2 = (9.0 - 2.0 * s15) / 21.0;
    let w2 = (155.0 + s15) / 1200.0;
    let q = |l: [f64; 3], w: f64| QuadPoint { bary: [lit(l[0]), lit(l[1]), lit(l[2])], weight: lit(w) };
    [
        q([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
        q([b1, a1, a1], w1),
        q([a1, b1, a1], w1),
        q([a1, a1, b1], w1),
        q([b2, a2, a2], w2),
        q([a2, b2, a2], w2),
        q([a2, a2, b2], w2),
    ]
}
