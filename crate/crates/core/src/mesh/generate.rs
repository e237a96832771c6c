use std::collections::HashSet;

use super::curve::{distance_to_polygon, point_in_polygon};
use super::delaunay::triangulate;
use super::{BoundaryCurve, BoundaryEdge, Marker, Mesh2D};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Scalar, Vec2};

const MIN_OUTER_SAMPLES: usize = 8;
const MIN_INNER_SAMPLES: usize = 8;
const RECOVERY_ROUNDS: usize = 8;
const SMOOTHING_SWEEPS: usize = 4;

/// Triangulates the annulus between the unit circle and `inner`.
///
/// Both boundaries are resampled at spacing close to `target_h`; interior
/// nodes come from a hexagonal lattice of the same spacing, clipped away
/// from the boundaries, Laplacian-smoothed and Delaunay-triangulated.
pub fn gen_annulus<T: Scalar>(inner: &BoundaryCurve<T>, target_h: T) -> Result<Mesh2D<T>> {
    inner.validate()?;
    if !(target_h > T::zero()) || !target_h.is_finite() {
        return Err(Error::InvalidParameter(format!("target_h must be positive, got {target_h}")));
    }
    let inner = inner.counterclockwise();
    let outer = BoundaryCurve::circle(T::one());
    let two_pi = lit::<T>(2.0) * T::PI();
    let n_out = even_count(two_pi / target_h);
    if n_out < MIN_OUTER_SAMPLES {
        return Err(Error::Meshing(format!(
            "target_h = {target_h} leaves only {n_out} nodes on the outer boundary"
        )));
    }
    let n_in = even_count(inner.perimeter() / target_h).max(MIN_INNER_SAMPLES);

    let mut out_frac: Vec<T> = (0..n_out).map(|k| from_usize::<T>(k) / from_usize::<T>(n_out)).collect();
    let mut in_frac: Vec<T> = (0..n_in).map(|k| from_usize::<T>(k) / from_usize::<T>(n_in)).collect();
    let symmetric_split = |frac: &[T], curve: &BoundaryCurve<T>| -> Vec<Vec2<T>> {
        if frac.len() % 2 == 0 && is_uniform(frac) {
            curve.sample(frac.len())
        } else {
            curve.points_at(frac)
        }
    };

    for _ in 0..RECOVERY_ROUNDS {
        let outer_pts = symmetric_split(&out_frac, &outer);
        let inner_pts = symmetric_split(&in_frac, &inner);
        let interior = lattice_points(&outer_pts, &inner_pts, target_h);
        match build(&outer_pts, &inner_pts, interior, target_h) {
            Ok(mesh) => return Ok(mesh),
            Err(Missing { outer: mo, inner: mi }) => {
                if mo.is_empty() && mi.is_empty() {
                    return Err(Error::Meshing("triangulation does not match the boundary".into()));
                }
                refine(&mut out_frac, &mo);
                refine(&mut in_frac, &mi);
            }
        }
    }
    Err(Error::Meshing(format!("boundary recovery failed for target_h = {target_h}")))
}

fn even_count<T: Scalar>(x: T) -> usize {
    let n = x.round().to_usize().unwrap_or(0);
    n + n % 2
}

fn is_uniform<T: Scalar>(frac: &[T]) -> bool {
    let n = frac.len();
    frac.iter().enumerate().all(|(k, &f)| f == from_usize::<T>(k) / from_usize::<T>(n))
}

/// Inserts the midpoint fraction after every listed segment index.
fn refine<T: Scalar>(frac: &mut Vec<T>, segments: &[usize]) {
    let n = frac.len();
    let mut mids: Vec<T> = segments
        .iter()
        .map(|&k| {
            let next = if k + 1 == n { T::one() } else { frac[k + 1] };
            (frac[k] + next) * lit(0.5)
        })
        .collect();
    frac.append(&mut mids);
    frac.sort_by(|a, b| a.partial_cmp(b).unwrap());
    frac.dedup();
}

fn lattice_points<T: Scalar>(outer: &[Vec2<T>], inner: &[Vec2<T>], h: T) -> Vec<Vec2<T>> {
    let clearance = h * lit(0.6);
    let dy = h * lit::<T>(3.0).sqrt() * lit(0.5);
    let rows = (T::one() / dy).ceil().to_i64().unwrap_or(0) + 1;
    let cols = (T::one() / h).ceil().to_i64().unwrap_or(0) + 1;
    let mut pts = Vec::new();
    for j in -rows..=rows {
        let y = T::from_i64(j).unwrap() * dy;
        let shift = if j.rem_euclid(2) == 1 { lit(0.5) } else { T::zero() };
        for i in -cols..=cols {
            let x = (T::from_i64(i).unwrap() + shift) * h;
            let p = [x, y];
            if !point_in_polygon(outer, p) || point_in_polygon(inner, p) {
                continue;
            }
            if distance_to_polygon(outer, p) < clearance || distance_to_polygon(inner, p) < clearance {
                continue;
            }
            pts.push(p);
        }
    }
    pts
}

struct Missing {
    outer: Vec<usize>,
    inner: Vec<usize>,
}

fn triangulate_domain<T: Scalar>(
    points: &[Vec2<T>],
    outer: &[Vec2<T>],
    inner: &[Vec2<T>],
) -> Vec<[usize; 3]> {
    let third = lit::<T>(1.0 / 3.0);
    triangulate(points)
        .into_iter()
        .filter(|t| {
            let c = [
                (points[t[0]][0] + points[t[1]][0] + points[t[2]][0]) * third,
                (points[t[0]][1] + points[t[1]][1] + points[t[2]][1]) * third,
            ];
            point_in_polygon(outer, c) && !point_in_polygon(inner, c)
        })
        .collect()
}

fn build<T: Scalar>(
    outer: &[Vec2<T>],
    inner: &[Vec2<T>],
    interior: Vec<Vec2<T>>,
    h: T,
) -> std::result::Result<Mesh2D<T>, Missing> {
    let n_out = outer.len();
    let n_in = inner.len();
    let n_bnd = n_out + n_in;
    let mut points: Vec<Vec2<T>> = outer.iter().chain(inner).copied().chain(interior).collect();

    // fluid on the left: outer loop counterclockwise, inner loop clockwise
    let mut boundary = Vec::with_capacity(n_bnd);
    for k in 0..n_out {
        boundary.push(BoundaryEdge { nodes: [k, (k + 1) % n_out], marker: Marker::Outer });
    }
    for k in 0..n_in {
        boundary.push(BoundaryEdge { nodes: [n_out + (k + 1) % n_in, n_out + k], marker: Marker::Inner });
    }

    let tris = triangulate_domain(&points, outer, inner);
    check_boundary(&tris, &boundary, n_out)?;

    // smooth interior nodes with the first triangulation's adjacency, then retriangulate
    let first = Mesh2D::from_parts_unchecked(points.clone(), tris.clone(), boundary.clone(), h);
    let neighbors = first.node_neighbors();
    for _ in 0..SMOOTHING_SWEEPS {
        let prev = points.clone();
        for i in n_bnd..points.len() {
            let nb = &neighbors[i];
            if nb.is_empty() {
                continue;
            }
            let inv = T::one() / from_usize::<T>(nb.len());
            let sx: T = nb.iter().map(|&j| prev[j][0]).sum();
            let sy: T = nb.iter().map(|&j| prev[j][1]).sum();
            points[i] = [sx * inv, sy * inv];
        }
    }
    let smoothed = triangulate_domain(&points, outer, inner);
    let (points, tris) = if check_boundary(&smoothed, &boundary, n_out).is_ok() {
        (points, smoothed)
    } else {
        (first.nodes().to_vec(), tris)
    };

    // drop unused nodes (lattice points isolated by the clipping)
    let mut used = vec![false; points.len()];
    for t in &tris {
        for &i in t {
            used[i] = true;
        }
    }
    let mut remap = vec![usize::MAX; points.len()];
    let mut kept = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if used[i] || i < n_bnd {
            remap[i] = kept.len();
            kept.push(*p);
        }
    }
    let tris: Vec<[usize; 3]> = tris.iter().map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]]).collect();
    let mesh = Mesh2D::from_parts_unchecked(kept, tris, boundary, h);
    if mesh.validate().is_err() || mesh.quality().min_signed_area <= T::zero() {
        return Err(Missing { outer: Vec::new(), inner: Vec::new() });
    }
    Ok(mesh)
}

/// Verifies that the triangle set's boundary is exactly the two loops.
fn check_boundary(
    tris: &[[usize; 3]],
    boundary: &[BoundaryEdge],
    n_out: usize,
) -> std::result::Result<(), Missing> {
    let mut directed = HashSet::new();
    let mut undirected: std::collections::HashMap<(usize, usize), u32> = Default::default();
    for t in tris {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            directed.insert((a, b));
            *undirected.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let mut missing = Missing { outer: Vec::new(), inner: Vec::new() };
    let mut wanted = HashSet::new();
    for (k, e) in boundary.iter().enumerate() {
        let [a, b] = e.nodes;
        wanted.insert((a.min(b), a.max(b)));
        if !directed.contains(&(a, b)) {
            match e.marker {
                Marker::Outer => missing.outer.push(k),
                // inner edge k joins samples k+1 -> k
                Marker::Inner => missing.inner.push(k - n_out),
            }
        }
    }
    let stray = undirected.iter().any(|(e, &c)| c == 1 && !wanted.contains(e));
    if missing.outer.is_empty() && missing.inner.is_empty() && !stray {
        Ok(())
    } else {
        Err(missing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn circle_inner_nodes_on_curve() {
        let mesh = gen_annulus(&BoundaryCurve::circle(0.6f64), 0.15).unwrap();
        for i in mesh.boundary_loop(Marker::Inner).unwrap() {
            let p = mesh.nodes()[i];
            assert!((p[0].hypot(p[1]) - 0.6).abs() < 1e-10);
        }
        for i in mesh.boundary_loop(Marker::Outer).unwrap() {
            let p = mesh.nodes()[i];
            assert!((p[0].hypot(p[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn node_counts_of_the_coarse_benchmark_meshes() {
        let circle = gen_annulus(&BoundaryCurve::circle(0.2f64), 0.13).unwrap().num_nodes();
        let ellipse = gen_annulus(&BoundaryCurve::Ellipse { a: 0.6f64, b: 0.4 }, 0.11).unwrap().num_nodes();
        for n in [circle, ellipse] {
            assert!((181..=271).contains(&n), "{circle} {ellipse}");
        }
    }

    #[test]
    fn huge_target_h_is_a_meshing_error() {
        assert!(matches!(gen_annulus(&BoundaryCurve::circle(0.2), 2.0), Err(Error::Meshing(_))));
    }

    #[test]
    fn nonpositive_target_h_is_rejected() {
        assert!(gen_annulus(&BoundaryCurve::circle(0.2), 0.0).is_err());
    }

    #[test]
    fn curve_outside_disk_is_a_geometry_error() {
        assert!(matches!(gen_annulus(&BoundaryCurve::circle(1.2), 0.1), Err(Error::Geometry(_))));
    }

    #[test]
    fn area_matches_polygonal_annulus() {
        let mesh = gen_annulus(&BoundaryCurve::circle(0.2f64), 0.1).unwrap();
        let outer = mesh.boundary_polyline(Marker::Outer).unwrap();
        let inner = mesh.boundary_polyline(Marker::Inner).unwrap();
        let expected = super::super::curve::polygon_area(&outer) + super::super::curve::polygon_area(&inner);
        assert!((mesh.area() - expected).abs() < 1e-12);
    }
}
