use std::sync::Arc;

use super::dofmap::DofMap;
use super::element::{p2_grads, p2_values, Affine};
use super::params::VectorField;
use crate::error::{Error, Result};
use crate::mesh::Mesh2D;
use crate::scalar::{lit, Mat2, Scalar, Vec2};

/// A mesh together with its Taylor–Hood dof layout and element geometry.
#[derive(Clone, Debug)]
pub struct FeSpace<T> {
    mesh: Mesh2D<T>,
    dofs: DofMap,
    elements: Vec<Affine<T>>,
    p2_coords: Vec<Vec2<T>>,
    /// `∫ ψ_v` for each P1 pressure basis function.
    pressure_weights: Vec<T>,
}

impl<T: Scalar> FeSpace<T> {
    pub fn new(mesh: Mesh2D<T>) -> Result<Arc<Self>> {
        let mut elements = Vec::with_capacity(mesh.num_triangles());
        for t in 0..mesh.num_triangles() {
            let el = Affine::new(mesh.triangle_vertices(t));
            if !(el.area > T::zero()) || !el.area.is_finite() {
                return Err(Error::DegenerateElement(t));
            }
            elements.push(el);
        }
        let dofs = DofMap::new(&mesh);
        let p2_coords = dofs.p2_coordinates(&mesh);
        let mut pressure_weights = vec![T::zero(); mesh.num_nodes()];
        let third = lit::<T>(1.0 / 3.0);
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for &v in tri {
                pressure_weights[v] += elements[t].area * third;
            }
        }
        Ok(Arc::new(Self { mesh, dofs, elements, p2_coords, pressure_weights }))
    }

    pub fn mesh(&self) -> &Mesh2D<T> {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn element(&self, t: usize) -> &Affine<T> {
        &self.elements[t]
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn p2_coordinates(&self) -> &[Vec2<T>] {
        &self.p2_coords
    }

    pub fn area(&self) -> T {
        self.elements.iter().map(|e| e.area).sum()
    }

    /// Dirichlet data `(dof, value)` for both velocity components at every
    /// boundary P2 node.
    pub fn dirichlet_values(&self, g: &VectorField<T>) -> Vec<(usize, T)> {
        let mut out = Vec::new();
        for k in self.dofs.boundary_p2_nodes() {
            let v = g.eval(self.p2_coords[k]);
            out.push((self.dofs.velocity_dof(k, 0), v[0]));
            out.push((self.dofs.velocity_dof(k, 1), v[1]));
        }
        out
    }

    /// Weights of the zero-mean pressure constraint.
    pub fn mean_constraint(&self) -> Vec<(usize, T)> {
        self.pressure_weights.iter().enumerate().map(|(v, &w)| (self.dofs.pressure_dof(v), w)).collect()
    }

    /// Area-weighted mean of a P1 pressure field.
    pub fn pressure_mean(&self, p: &[T]) -> T {
        let s: T = p.iter().zip(&self.pressure_weights).map(|(a, w)| *a * *w).sum();
        s / self.area()
    }

    /// Velocity at barycentric point `bary` of element `t`; `u` holds both
    /// components (length `2 * num_p2`, or a full system vector).
    pub fn velocity_at(&self, u: &[T], t: usize, bary: [T; 3]) -> Vec2<T> {
        let phi = p2_values(bary);
        let el = &self.dofs.elements()[t];
        let n2 = self.dofs.num_p2();
        let mut out = [T::zero(); 2];
        for k in 0..6 {
            out[0] += phi[k] * u[el[k]];
            out[1] += phi[k] * u[n2 + el[k]];
        }
        out
    }

    /// Velocity gradient `G[c][d] = ∂_d u_c` at a barycentric point.
    pub fn velocity_grad_at(&self, u: &[T], t: usize, bary: [T; 3]) -> Mat2<T> {
        let g = p2_grads(bary, &self.elements[t].grad_bary);
        let el = &self.dofs.elements()[t];
        let n2 = self.dofs.num_p2();
        let mut out = [[T::zero(); 2]; 2];
        for k in 0..6 {
            for c in 0..2 {
                let coef = u[c * n2 + el[k]];
                out[c][0] += coef * g[k][0];
                out[c][1] += coef * g[k][1];
            }
        }
        out
    }

    /// P1 pressure at a barycentric point; `p` indexed by vertex.
    pub fn pressure_at(&self, p: &[T], t: usize, bary: [T; 3]) -> T {
        let tri = self.mesh.triangles()[t];
        bary[0] * p[tri[0]] + bary[1] * p[tri[1]] + bary[2] * p[tri[2]]
    }

    /// Interpolates an analytic field at the P2 nodes (velocity layout).
    pub fn interpolate(&self, f: impl Fn(Vec2<T>) -> Vec2<T>) -> Vec<T> {
        let n2 = self.dofs.num_p2();
        let mut out = vec![T::zero(); 2 * n2];
        for (k, &x) in self.p2_coords.iter().enumerate() {
            let v = f(x);
            out[k] = v[0];
            out[n2 + k] = v[1];
        }
        out
    }
}
