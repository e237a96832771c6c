//! Bowyer–Watson Delaunay triangulation of a point cloud.

use std::collections::HashMap;

use crate::scalar::{cross, lit, sub, Scalar, Vec2};

struct Tri<T> {
    v: [usize; 3],
    center: Vec2<T>,
    radius2: T,
}

fn make_tri<T: Scalar>(pts: &[Vec2<T>], mut v: [usize; 3]) -> Tri<T> {
    let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
    if cross(sub(b, a), sub(c, a)) < T::zero() {
        v.swap(1, 2);
    }
    let (a, b, c) = (pts[v[0]], pts[v[1]], pts[v[2]]);
    let d = lit::<T>(2.0) * (a[0] * (b[1] - c[1]) + b[0] * (c[1] - a[1]) + c[0] * (a[1] - b[1]));
    let a2 = a[0] * a[0] + a[1] * a[1];
    let b2 = b[0] * b[0] + b[1] * b[1];
    let c2 = c[0] * c[0] + c[1] * c[1];
    let ux = (a2 * (b[1] - c[1]) + b2 * (c[1] - a[1]) + c2 * (a[1] - b[1])) / d;
    let uy = (a2 * (c[0] - b[0]) + b2 * (a[0] - c[0]) + c2 * (b[0] - a[0])) / d;
    let dx = a[0] - ux;
    let dy = a[1] - uy;
    Tri { v, center: [ux, uy], radius2: dx * dx + dy * dy }
}

/// Counterclockwise Delaunay triangles of `points` (indices into `points`).
pub(crate) fn triangulate<T: Scalar>(points: &[Vec2<T>]) -> Vec<[usize; 3]> {
    let n = points.len();
    if n < 3 {
        return Vec::new();
    }
    let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(T::epsilon());
    let mid = [(lo[0] + hi[0]) * lit(0.5), (lo[1] + hi[1]) * lit(0.5)];
    let big = span * lit(20.0);
    let mut pts = points.to_vec();
    pts.push([mid[0] - big, mid[1] - big]);
    pts.push([mid[0] + big, mid[1] - big]);
    pts.push([mid[0], mid[1] + big]);

    let mut tris = vec![make_tri(&pts, [n, n + 1, n + 2])];
    let shrink = T::one() - lit::<T>(1e-12);
    for (i, &p) in points.iter().enumerate() {
        let mut bad = Vec::new();
        for (t, tri) in tris.iter().enumerate() {
            let dx = p[0] - tri.center[0];
            let dy = p[1] - tri.center[1];
            if dx * dx + dy * dy < tri.radius2 * shrink {
                bad.push(t);
            }
        }
        // cavity boundary: edges of bad triangles not shared by two bad triangles
        let mut count: HashMap<(usize, usize), (usize, usize, u32)> = HashMap::new();
        for &t in &bad {
            let v = tris[t].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                let e = count.entry((a.min(b), a.max(b))).or_insert((a, b, 0));
                e.2 += 1;
            }
        }
        let mut boundary: Vec<(usize, usize)> =
            count.values().filter(|e| e.2 == 1).map(|e| (e.0, e.1)).collect();
        boundary.sort_unstable();
        for &t in bad.iter().rev() {
            tris.swap_remove(t);
        }
        for (a, b) in boundary {
            tris.push(make_tri(&pts, [a, b, i]));
        }
    }
    let mut out: Vec<[usize; 3]> = tris.into_iter().map(|t| t.v).filter(|v| v.iter().all(|&k| k < n)).collect();
    out.sort_unstable();
    out
}
