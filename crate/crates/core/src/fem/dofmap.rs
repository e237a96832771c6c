use std::collections::HashMap;

use crate::mesh::{Marker, Mesh2D};
use crate::scalar::{lit, Scalar, Vec2};

/// Degree-of-freedom layout of the Taylor–Hood pair.
///
/// P2 nodes are the mesh vertices followed by one midpoint per edge. The
/// global vector is `[u_x (P2), u_y (P2), p (P1 at vertices)]`.
#[derive(Clone, Debug)]
pub struct DofMap {
    num_vertices: usize,
    num_p2: usize,
    /// Six P2 node indices per triangle (local order of [`crate::fem::element`]).
    elements: Vec<[usize; 6]>,
    /// Edge vertex pairs, indexed by `p2_node - num_vertices`.
    edges: Vec<[usize; 2]>,
    edge_index: HashMap<(usize, usize), usize>,
    /// Boundary marker per P2 node.
    p2_marker: Vec<Option<Marker>>,
}

impl DofMap {
    pub fn new<T: Scalar>(mesh: &Mesh2D<T>) -> Self {
        let nv = mesh.num_nodes();
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut elements = Vec::with_capacity(mesh.num_triangles());
        for tri in mesh.triangles() {
            let mut el = [tri[0], tri[1], tri[2], 0, 0, 0];
            for (k, [a, b]) in super::element::EDGE_VERTICES.iter().enumerate() {
                let (i, j) = (tri[*a], tri[*b]);
                let key = (i.min(j), i.max(j));
                let idx = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    nv + edges.len() - 1
                });
                el[3 + k] = idx;
            }
            elements.push(el);
        }
        let num_p2 = nv + edges.len();
        let mut p2_marker = vec![None; num_p2];
        for e in mesh.boundary_edges() {
            let [i, j] = e.nodes;
            p2_marker[i] = Some(e.marker);
            p2_marker[j] = Some(e.marker);
            if let Some(&m) = edge_index.get(&(i.min(j), i.max(j))) {
                p2_marker[m] = Some(e.marker);
            }
        }
        Self { num_vertices: nv, num_p2, elements, edges, edge_index, p2_marker }
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn num_p2(&self) -> usize {
        self.num_p2
    }

    pub fn num_velocity(&self) -> usize {
        2 * self.num_p2
    }

    pub fn num_pressure(&self) -> usize {
        self.num_vertices
    }

    pub fn num_dofs(&self) -> usize {
        2 * self.num_p2 + self.num_vertices
    }

    pub fn elements(&self) -> &[[usize; 6]] {
        &self.elements
    }

    pub fn p2_marker(&self, node: usize) -> Option<Marker> {
        self.p2_marker[node]
    }

    /// Global dof of velocity component `c` at P2 node `node`.
    #[inline]
    pub fn velocity_dof(&self, node: usize, c: usize) -> usize {
        c * self.num_p2 + node
    }

    #[inline]
    pub fn pressure_dof(&self, vertex: usize) -> usize {
        2 * self.num_p2 + vertex
    }

    /// The 12 velocity dofs of an element, component-major.
    pub fn element_velocity_dofs(&self, t: usize) -> [usize; 12] {
        let el = &self.elements[t];
        let mut out = [0; 12];
        for k in 0..6 {
            out[k] = self.velocity_dof(el[k], 0);
            out[6 + k] = self.velocity_dof(el[k], 1);
        }
        out
    }

    pub fn element_pressure_dofs(&self, t: usize) -> [usize; 3] {
        let el = &self.elements[t];
        [self.pressure_dof(el[0]), self.pressure_dof(el[1]), self.pressure_dof(el[2])]
    }

    /// Coordinates of every P2 node (edge midpoints of straight edges).
    pub fn p2_coordinates<T: Scalar>(&self, mesh: &Mesh2D<T>) -> Vec<Vec2<T>> {
        let half = lit::<T>(0.5);
        let nodes = mesh.nodes();
        nodes
            .iter()
            .copied()
            .chain(self.edges.iter().map(|[a, b]| {
                [(nodes[*a][0] + nodes[*b][0]) * half, (nodes[*a][1] + nodes[*b][1]) * half]
            }))
            .collect()
    }

    /// Midpoint node of the edge between two vertices, if that edge exists.
    pub fn edge_node(&self, a: usize, b: usize) -> Option<usize> {
        self.edge_index.get(&(a.min(b), a.max(b))).copied()
    }

    /// P2 nodes lying on the boundary (either marker).
    pub fn boundary_p2_nodes(&self) -> Vec<usize> {
        (0..self.num_p2).filter(|&k| self.p2_marker[k].is_some()).collect()
    }
}
