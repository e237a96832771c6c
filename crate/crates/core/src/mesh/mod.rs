//! Triangulations of annular domains: a fixed outer boundary and a movable
//! inner boundary.

mod curve;
mod delaunay;
mod generate;
pub mod io;

use std::collections::HashMap;

pub use curve::BoundaryCurve;
pub(crate) use curve::closest_on_segment;
pub use generate::gen_annulus;

use crate::error::{Error, Result};
use crate::scalar::{cross, lit, norm, sub, to_f64, Scalar, Vec2};

/// Which part of the boundary an edge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Marker {
    /// Fixed outer boundary.
    Outer,
    /// Inner boundary, subject to optimization.
    Inner,
}

impl Marker {
    pub fn code(self) -> u8 {
        match self {
            Marker::Outer => 1,
            Marker::Inner => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Marker::Outer),
            2 => Some(Marker::Inner),
            _ => None,
        }
    }
}

/// Boundary edge oriented so that the fluid lies to its left.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub marker: Marker,
}

/// Minimum signed area and minimum interior angle (degrees) over all triangles.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quality<T> {
    pub min_signed_area: T,
    pub min_angle: T,
}

/// Linear triangulation of a 2D domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh2D<T> {
    nodes: Vec<Vec2<T>>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    characteristic_h: T,
}

impl<T: Scalar> Mesh2D<T> {
    /// Builds a mesh and checks its invariants: positive triangle areas and
    /// boundary edges closing into loops.
    pub fn new(
        nodes: Vec<Vec2<T>>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        characteristic_h: T,
    ) -> Result<Self> {
        let mesh = Self::from_parts_unchecked(nodes, triangles, boundary, characteristic_h);
        mesh.validate()?;
        Ok(mesh)
    }

    pub(crate) fn from_parts_unchecked(
        nodes: Vec<Vec2<T>>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<BoundaryEdge>,
        characteristic_h: T,
    ) -> Self {
        Self { nodes, triangles, boundary, characteristic_h }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= n) {
                return Err(Error::Meshing(format!("triangle {t} references a missing node")));
            }
        }
        for e in &self.boundary {
            if e.nodes.iter().any(|&i| i >= n) || e.nodes[0] == e.nodes[1] {
                return Err(Error::Meshing("malformed boundary edge".into()));
            }
        }
        if let Some((t, area)) = self.first_nonpositive() {
            return Err(Error::ReversedTriangle { triangle: t, area: to_f64(area) });
        }
        for marker in [Marker::Outer, Marker::Inner] {
            if self.boundary.iter().any(|e| e.marker == marker) {
                self.boundary_loop(marker)?;
            }
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Vec2<T>] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    pub fn characteristic_h(&self) -> T {
        self.characteristic_h
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_vertices(&self, t: usize) -> [Vec2<T>; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn signed_area(&self, t: usize) -> T {
        let [a, b, c] = self.triangle_vertices(t);
        cross(sub(b, a), sub(c, a)) * lit(0.5)
    }

    pub fn area(&self) -> T {
        (0..self.triangles.len()).map(|t| self.signed_area(t)).sum()
    }

    fn first_nonpositive(&self) -> Option<(usize, T)> {
        (0..self.triangles.len())
            .map(|t| (t, self.signed_area(t)))
            .find(|&(_, a)| a <= T::zero())
    }

    /// Exact minimum signed area and minimum angle over all triangles.
    pub fn quality(&self) -> Quality<T> {
        let mut min_area = T::infinity();
        let mut min_angle = T::infinity();
        for t in 0..self.triangles.len() {
            min_area = min_area.min(self.signed_area(t));
            let v = self.triangle_vertices(t);
            for k in 0..3 {
                let e1 = sub(v[(k + 1) % 3], v[k]);
                let e2 = sub(v[(k + 2) % 3], v[k]);
                let angle = cross(e1, e2).abs().atan2(crate::scalar::dot(e1, e2));
                min_angle = min_angle.min(angle.to_degrees());
            }
        }
        Quality { min_signed_area: min_area, min_angle }
    }

    /// Per-node flags: `Some(marker)` for nodes on a boundary edge.
    pub fn node_markers(&self) -> Vec<Option<Marker>> {
        let mut out = vec![None; self.nodes.len()];
        for e in &self.boundary {
            for &i in &e.nodes {
                out[i] = Some(e.marker);
            }
        }
        out
    }

    pub fn is_marked(&self, marker: Marker) -> Vec<bool> {
        self.node_markers().into_iter().map(|m| m == Some(marker)).collect()
    }

    /// Nodes of the closed boundary polyline with the given marker, in edge
    /// order (fluid on the left).
    pub fn boundary_loop(&self, marker: Marker) -> Result<Vec<usize>> {
        let edges: Vec<[usize; 2]> =
            self.boundary.iter().filter(|e| e.marker == marker).map(|e| e.nodes).collect();
        if edges.is_empty() {
            return Err(Error::Meshing(format!("no {marker:?} boundary edges")));
        }
        let mut next: HashMap<usize, usize> = HashMap::with_capacity(edges.len());
        for &[a, b] in &edges {
            if next.insert(a, b).is_some() {
                return Err(Error::Meshing(format!("{marker:?} boundary branches at node {a}")));
            }
        }
        let start = edges[0][0];
        let mut out = Vec::with_capacity(edges.len());
        let mut cur = start;
        loop {
            out.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::Meshing(format!("{marker:?} boundary is not closed")))?;
            if cur == start {
                break;
            }
            if out.len() > edges.len() {
                return Err(Error::Meshing(format!("{marker:?} boundary is not a simple loop")));
            }
        }
        if out.len() != edges.len() {
            return Err(Error::Meshing(format!("{marker:?} boundary has more than one loop")));
        }
        Ok(out)
    }

    /// Boundary loop coordinates, for re-meshing from the current shape.
    pub fn boundary_polyline(&self, marker: Marker) -> Result<Vec<Vec2<T>>> {
        Ok(self.boundary_loop(marker)?.into_iter().map(|i| self.nodes[i]).collect())
    }

    /// Outward unit normals at the nodes of one boundary loop.
    ///
    /// The node normal averages the two adjacent edge normals with weights
    /// inversely proportional to edge length; on a circle this reproduces the
    /// radial direction at every sample regardless of spacing.
    pub fn boundary_normals(&self, marker: Marker) -> Result<BoundaryNormals<T>> {
        let nodes = self.boundary_loop(marker)?;
        let m = nodes.len();
        let mut normals = Vec::with_capacity(m);
        for k in 0..m {
            let prev = self.nodes[nodes[(k + m - 1) % m]];
            let here = self.nodes[nodes[k]];
            let next = self.nodes[nodes[(k + 1) % m]];
            let e_in = sub(here, prev);
            let e_out = sub(next, here);
            let l_in2 = e_in[0] * e_in[0] + e_in[1] * e_in[1];
            let l_out2 = e_out[0] * e_out[0] + e_out[1] * e_out[1];
            // (dy, -dx) points to the right of the edge, i.e. out of the fluid
            let n = [e_in[1] / l_in2 + e_out[1] / l_out2, -e_in[0] / l_in2 - e_out[0] / l_out2];
            let len = norm(n);
            normals.push([n[0] / len, n[1] / len]);
        }
        Ok(BoundaryNormals { nodes, normals })
    }

    /// Applies `x -> x - h d(x)` at every node; connectivity is unchanged.
    pub fn deform(&self, d: &DisplacementField<T>, h: T) -> Result<Self> {
        let moved = self.deform_unchecked(d, h)?;
        if let Some((t, area)) = moved.first_nonpositive() {
            return Err(Error::ReversedTriangle { triangle: t, area: to_f64(area) });
        }
        Ok(moved)
    }

    /// Same as [`Mesh2D::deform`] but returns the moved mesh even when some
    /// triangles are reversed.
    pub fn deform_unchecked(&self, d: &DisplacementField<T>, h: T) -> Result<Self> {
        if d.len() != self.nodes.len() {
            return Err(Error::Contract(format!(
                "displacement has {} nodes, mesh has {}",
                d.len(),
                self.nodes.len()
            )));
        }
        for (i, m) in self.node_markers().iter().enumerate() {
            if *m == Some(Marker::Outer) && (d.values[i][0] != T::zero() || d.values[i][1] != T::zero()) {
                return Err(Error::Contract(format!("displacement is nonzero on OUTER node {i}")));
            }
        }
        let nodes = self
            .nodes
            .iter()
            .zip(&d.values)
            .map(|(x, v)| [x[0] - h * v[0], x[1] - h * v[1]])
            .collect();
        Ok(Self { nodes, ..self.clone() })
    }

    /// Replaces node coordinates, keeping connectivity.
    pub fn with_nodes(&self, nodes: Vec<Vec2<T>>) -> Result<Self> {
        if nodes.len() != self.nodes.len() {
            return Err(Error::Contract("node count mismatch".into()));
        }
        Self::new(nodes, self.triangles.clone(), self.boundary.clone(), self.characteristic_h)
    }

    /// Unique undirected edges, each listed once with the smaller index first.
    pub fn edges(&self) -> Vec<[usize; 2]> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    out.push([key.0, key.1]);
                }
            }
        }
        out
    }

    /// Node-to-node adjacency lists (sorted).
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for [a, b] in self.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Triangles incident to each node.
    pub fn node_triangles(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            for &i in tri {
                out[i].push(t);
            }
        }
        out
    }

    /// Rigidly rotates every node about the origin.
    pub fn rotated(&self, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        let nodes = self.nodes.iter().map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]]).collect();
        Self { nodes, ..self.clone() }
    }
}

/// Outward unit normals on one boundary loop.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryNormals<T> {
    /// Loop nodes in order.
    pub nodes: Vec<usize>,
    pub normals: Vec<Vec2<T>>,
}

/// Nodal displacement, one 2-vector per mesh node.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField<T> {
    values: Vec<Vec2<T>>,
}

impl<T: Scalar> DisplacementField<T> {
    /// Wraps nodal values, checking the node count and that OUTER nodes stay fixed.
    pub fn new(mesh: &Mesh2D<T>, values: Vec<Vec2<T>>) -> Result<Self> {
        if values.len() != mesh.num_nodes() {
            return Err(Error::Contract(format!(
                "displacement has {} nodes, mesh has {}",
                values.len(),
                mesh.num_nodes()
            )));
        }
        for (i, m) in mesh.node_markers().iter().enumerate() {
            if *m == Some(Marker::Outer) && (values[i][0] != T::zero() || values[i][1] != T::zero()) {
                return Err(Error::Contract(format!("displacement is nonzero on OUTER node {i}")));
            }
        }
        Ok(Self { values })
    }

    pub fn zeros(n: usize) -> Self {
        Self { values: vec![[T::zero(); 2]; n] }
    }

    pub fn values(&self) -> &[Vec2<T>] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(norm(*v)))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { values: self.values.iter().map(|v| [v[0] * s, v[1] * s]).collect() }
    }
}
