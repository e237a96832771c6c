//! Boundary shape gradients, H1-smoothed descent directions, and the
//! finite-difference check of the Eulerian derivative.
//!
//! All boundary quantities live on the nodes of the INNER loop, in loop order.

use std::sync::Arc;

use crate::adjoint::{curl, eval_cost, AdjointField, CostKind};
use crate::error::{Error, Result};
use crate::fem::quadrature::triangle_rule;
use crate::fem::{apply_dirichlet, FeSpace, FluidParams, LinearSolver, SparseOperator, TripletBuilder};
use crate::flow::{solve_ns, FlowField, NewtonOptions, Seed, TargetField};
use crate::mesh::{DisplacementField, Marker, Mesh2D};
use crate::scalar::{dot, lit, mat_vec, norm, sub, to_f64, Mat2, Scalar, Vec2};

/// Shape-gradient density `γ` with `∇J = γ n` on the inner boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryDensity<T> {
    pub nodes: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Scalar> BoundaryDensity<T> {
    pub fn zeros(mesh: &Mesh2D<T>) -> Result<Self> {
        let nodes = mesh.boundary_loop(Marker::Inner)?;
        let values = vec![T::zero(); nodes.len()];
        Ok(Self { nodes, values })
    }

    pub fn constant(mesh: &Mesh2D<T>, value: T) -> Result<Self> {
        let mut d = Self::zeros(mesh)?;
        d.values.iter_mut().for_each(|v| *v = value);
        Ok(d)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.nodes != other.nodes {
            return Err(Error::Contract("densities live on different node sets".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(a, b)| *a + *b).collect();
        Ok(Self { nodes: self.nodes.clone(), values })
    }
}

/// Normal speed `V_n` at the inner-boundary nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation<T> {
    pub nodes: Vec<usize>,
    pub normal_speed: Vec<T>,
}

impl<T: Scalar> Perturbation<T> {
    pub fn new(mesh: &Mesh2D<T>, normal_speed: Vec<T>) -> Result<Self> {
        let nodes = mesh.boundary_loop(Marker::Inner)?;
        if nodes.len() != normal_speed.len() {
            return Err(Error::Contract(format!(
                "perturbation has {} values, inner boundary has {} nodes",
                normal_speed.len(),
                nodes.len()
            )));
        }
        Ok(Self { nodes, normal_speed })
    }

    /// `V_n = cos(k θ + phase)` with `θ` the polar angle of the node.
    pub fn fourier(mesh: &Mesh2D<T>, k: usize, phase: T) -> Result<Self> {
        let nodes = mesh.boundary_loop(Marker::Inner)?;
        let kk = lit::<T>(k as f64);
        let normal_speed = nodes
            .iter()
            .map(|&i| {
                let p = mesh.nodes()[i];
                (kk * p[1].atan2(p[0]) + phase).cos()
            })
            .collect();
        Ok(Self { nodes, normal_speed })
    }

    /// Normal trace `d · n` of a displacement.
    pub fn normal_trace(mesh: &Mesh2D<T>, d: &DisplacementField<T>) -> Result<Self> {
        let bn = mesh.boundary_normals(Marker::Inner)?;
        let normal_speed = bn.nodes.iter().zip(&bn.normals).map(|(&i, &n)| dot(d.values()[i], n)).collect();
        Ok(Self { nodes: bn.nodes, normal_speed })
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { nodes: self.nodes.clone(), normal_speed: self.normal_speed.iter().map(|&v| v * s).collect() }
    }

    /// Boundary displacement `V_n n` (zero away from the inner boundary).
    pub fn boundary_displacement(&self, mesh: &Mesh2D<T>) -> Result<Vec<Vec2<T>>> {
        let bn = mesh.boundary_normals(Marker::Inner)?;
        if bn.nodes != self.nodes {
            return Err(Error::Contract("perturbation does not match the mesh".into()));
        }
        let mut out = vec![[T::zero(); 2]; mesh.num_nodes()];
        for ((&i, &n), &v) in bn.nodes.iter().zip(&bn.normals).zip(&self.normal_speed) {
            out[i] = [v * n[0], v * n[1]];
        }
        Ok(out)
    }
}

/// Velocity gradients at the given mesh vertices, recovered as the
/// area-weighted average of the P2 element gradients at that vertex.
pub fn recovered_gradients<T: Scalar>(field: &FlowField<T>, vertices: &[usize]) -> Vec<Mat2<T>> {
    let space = field.space();
    let mesh = space.mesh();
    let node_tris = mesh.node_triangles();
    let corners: [[T; 3]; 3] = [
        [T::one(), T::zero(), T::zero()],
        [T::zero(), T::one(), T::zero()],
        [T::zero(), T::zero(), T::one()],
    ];
    vertices
        .iter()
        .map(|&v| {
            let mut acc = [[T::zero(); 2]; 2];
            let mut area = T::zero();
            for &t in &node_tris[v] {
                let a = mesh.triangles()[t].iter().position(|&x| x == v).unwrap();
                let g = space.velocity_grad_at(field.coefficients(), t, corners[a]);
                let w = space.element(t).area;
                for c in 0..2 {
                    for d in 0..2 {
                        acc[c][d] += w * g[c][d];
                    }
                }
                area += w;
            }
            acc.map(|row| row.map(|x| x / area))
        })
        .collect()
}

fn same_mesh<T: Scalar>(a: &FlowField<T>, b: &FlowField<T>) -> Result<()> {
    if !Arc::ptr_eq(a.space(), b.space()) && a.mesh() != b.mesh() {
        return Err(Error::Contract("state and adjoint live on different meshes".into()));
    }
    Ok(())
}

/// Shape-gradient density at the inner-boundary nodes:
///
/// ```text
/// J1:  γ = ½|y − y_d|² + α (D(y−g)·n)·(Dv·n)
/// J2:  γ = α [½ ω² + (D(y−g)·n)·(Dv·n − ω t)],   ω = curl y,  t = (−n₂, n₁)
/// ```
pub fn gradient_density<T: Scalar>(
    y: &FlowField<T>,
    adj: &AdjointField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<BoundaryDensity<T>> {
    same_mesh(y, adj)?;
    if kind.needs_target() && target.is_none() {
        return Err(Error::InvalidParameter("J1 requires a target velocity".into()));
    }
    let mesh = y.mesh();
    let pts = mesh.nodes();
    let bn = mesh.boundary_normals(Marker::Inner)?;
    let dy = recovered_gradients(y, &bn.nodes);
    let dv = recovered_gradients(adj, &bn.nodes);
    let n2 = y.space().dofs().num_p2();
    let mut values = Vec::with_capacity(bn.nodes.len());
    for (k, (&i, &n)) in bn.nodes.iter().zip(&bn.normals).enumerate() {
        let e = match target {
            Some(target) if kind == CostKind::J1Tracking => {
                sub([y.coefficients()[i], y.coefficients()[n2 + i]], target.eval(pts[i])?)
            }
            _ => [T::zero(); 2],
        };
        let dg = params.dirichlet.jacobian(pts[i]);
        let dyn_ = sub(mat_vec(dy[k], n), mat_vec(dg, n));
        values.push(density_at(kind, params.alpha, e, dyn_, mat_vec(dv[k], n), curl(dy[k]), n));
    }
    Ok(BoundaryDensity { nodes: bn.nodes, values })
}

fn density_at<T: Scalar>(
    kind: CostKind,
    alpha: T,
    e: Vec2<T>,
    dyn_: Vec2<T>,
    dvn: Vec2<T>,
    w: T,
    n: Vec2<T>,
) -> T {
    let half = lit::<T>(0.5);
    match kind {
        CostKind::J1Tracking => half * dot(e, e) + alpha * dot(dyn_, dvn),
        CostKind::J2Vorticity => {
            let t = [-n[1], n[0]];
            alpha * (half * w * w + dot(dyn_, [dvn[0] - w * t[0], dvn[1] - w * t[1]]))
        }
    }
}

/// Trapezoid weights `(|e_prev| + |e_next|) / 2` along the inner loop.
fn trapezoid_weights<T: Scalar>(mesh: &Mesh2D<T>, nodes: &[usize]) -> Vec<T> {
    let m = nodes.len();
    let p = mesh.nodes();
    let half = lit::<T>(0.5);
    (0..m)
        .map(|k| {
            let prev = norm(sub(p[nodes[k]], p[nodes[(k + m - 1) % m]]));
            let next = norm(sub(p[nodes[(k + 1) % m]], p[nodes[k]]));
            half * (prev + next)
        })
        .collect()
}

/// `dJ(Ω; V) = ∫_Γin γ V_n ds` by the trapezoid rule on the boundary edges.
pub fn eulerian_derivative<T: Scalar>(
    mesh: &Mesh2D<T>,
    density: &BoundaryDensity<T>,
    pert: &Perturbation<T>,
) -> Result<T> {
    if density.nodes != pert.nodes {
        return Err(Error::Contract("density and perturbation live on different node sets".into()));
    }
    let w = trapezoid_weights(mesh, &density.nodes);
    Ok(density.values.iter().zip(&pert.normal_speed).zip(&w).map(|((g, v), w)| *g * *v * *w).sum())
}

/// Piecewise-linear stiffness `∫ ∇φ_i · ∇φ_j` on the mesh vertices.
pub fn p1_stiffness<T: Scalar>(mesh: &Mesh2D<T>) -> Result<SparseOperator<T>> {
    let mut b = TripletBuilder::with_capacity(mesh.num_nodes(), 9 * mesh.num_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let el = crate::fem::element::Affine::new(mesh.triangle_vertices(t));
        if !(el.area > T::zero()) {
            return Err(Error::DegenerateElement(t));
        }
        for i in 0..3 {
            for j in 0..3 {
                b.add(tri[i], tri[j], el.area * dot(el.grad_bary[i], el.grad_bary[j]));
            }
        }
    }
    Ok(b.build(true))
}

/// Component-wise P1 Laplace solve with the given nodes fixed to given values.
fn laplace_vector<T: Scalar>(
    mesh: &Mesh2D<T>,
    load: &[Vec2<T>],
    fixed: &[(usize, Vec2<T>)],
) -> Result<Vec<Vec2<T>>> {
    let k = p1_stiffness(mesh)?;
    let n = mesh.num_nodes();
    let mut out = vec![[T::zero(); 2]; n];
    let mut solver = None;
    for c in 0..2 {
        let rhs: Vec<T> = load.iter().map(|v| v[c]).collect();
        let cons: Vec<(usize, T)> = fixed.iter().map(|&(i, v)| (i, v[c])).collect();
        let (kc, r) = apply_dirichlet(&k, &rhs, &cons);
        let s = match &solver {
            Some(s) => s,
            None => solver.insert(LinearSolver::factor(&kc, None)?),
        };
        for (o, x) in out.iter_mut().zip(s.solve(&r)) {
            o[c] = x;
        }
    }
    Ok(out)
}

/// Descent direction `d` with `∫ Dd : DV = dJ(Ω; V)` for every P1 field `V`
/// vanishing on OUTER.
pub fn h1_descent<T: Scalar>(mesh: &Mesh2D<T>, density: &BoundaryDensity<T>) -> Result<DisplacementField<T>> {
    let bn = mesh.boundary_normals(Marker::Inner)?;
    if bn.nodes != density.nodes {
        return Err(Error::Contract("density does not match the mesh".into()));
    }
    let w = trapezoid_weights(mesh, &bn.nodes);
    let mut load = vec![[T::zero(); 2]; mesh.num_nodes()];
    for (k, &i) in bn.nodes.iter().enumerate() {
        let s = density.values[k] * w[k];
        load[i] = [s * bn.normals[k][0], s * bn.normals[k][1]];
    }
    let fixed: Vec<(usize, Vec2<T>)> =
        mesh.boundary_loop(Marker::Outer)?.into_iter().map(|i| (i, [T::zero(); 2])).collect();
    DisplacementField::new(mesh, laplace_vector(mesh, &load, &fixed)?)
}

/// H1-seminorm inner product `∫ Da : Db` of two nodal fields.
pub fn h1_inner<T: Scalar>(mesh: &Mesh2D<T>, a: &DisplacementField<T>, b: &DisplacementField<T>) -> Result<T> {
    if a.len() != mesh.num_nodes() || b.len() != mesh.num_nodes() {
        return Err(Error::Contract("displacement does not match the mesh".into()));
    }
    let k = p1_stiffness(mesh)?;
    let mut s = T::zero();
    for c in 0..2 {
        let x: Vec<T> = a.values().iter().map(|v| v[c]).collect();
        let y: Vec<T> = b.values().iter().map(|v| v[c]).collect();
        s += k.bilinear(&x, &y);
    }
    Ok(s)
}

/// Harmonic extension of a displacement prescribed on the inner boundary;
/// zero on OUTER.
pub fn harmonic_extension<T: Scalar>(mesh: &Mesh2D<T>, pert: &Perturbation<T>) -> Result<DisplacementField<T>> {
    let b = pert.boundary_displacement(mesh)?;
    let mut fixed: Vec<(usize, Vec2<T>)> =
        mesh.boundary_loop(Marker::Outer)?.into_iter().map(|i| (i, [T::zero(); 2])).collect();
    fixed.extend(pert.nodes.iter().map(|&i| (i, b[i])));
    DisplacementField::new(mesh, laplace_vector(mesh, &vec![[T::zero(); 2]; mesh.num_nodes()], &fixed)?)
}

fn mat_mul<T: Scalar>(a: Mat2<T>, b: Mat2<T>) -> Mat2<T> {
    let mut out = [[T::zero(); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn ddot<T: Scalar>(a: Mat2<T>, b: Mat2<T>) -> T {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

/// Derivative of the discrete cost along the mesh velocity `ext`, in volume
/// form: the Lagrangian `J − ⟨v, R(y)⟩` is differentiated element by element
/// with the finite element coefficients held fixed, plus the motion of the
/// Dirichlet data at the boundary nodes. Uses its own adjoint with the exact
/// cost gradient as right side.
pub fn discrete_eulerian<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
    ext: &DisplacementField<T>,
) -> Result<T> {
    let space = y.space();
    let mesh = space.mesh();
    if ext.len() != mesh.num_nodes() {
        return Err(Error::Contract("mesh velocity does not match the mesh".into()));
    }
    if kind.needs_target() && target.is_none() {
        return Err(Error::InvalidParameter("J1 requires a target velocity".into()));
    }
    let dm = space.dofs();
    let rhs = crate::adjoint::cost_gradient(y, params, kind, target)?;
    let adj = crate::adjoint::solve_adjoint_with_rhs(y, params, rhs.clone())?;
    let (yc, vc) = (y.coefficients(), adj.coefficients());
    let n1 = mesh.num_nodes();
    let pressure = |c: &[T], t: usize, l: [T; 3]| space.pressure_at(&c[c.len() - n1..], t, l);
    let alpha = params.alpha;
    let half = lit::<T>(0.5);
    let vel = ext.values();
    let mut total = T::zero();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let el = space.element(t);
        let mut dv_mesh = [[T::zero(); 2]; 2];
        for a in 0..3 {
            for d in 0..2 {
                for e in 0..2 {
                    dv_mesh[d][e] += vel[tri[a]][d] * el.grad_bary[a][e];
                }
            }
        }
        let div_mesh = dv_mesh[0][0] + dv_mesh[1][1];
        for q in triangle_rule::<T>() {
            let w = q.weight * el.area;
            let x = el.point(q.bary);
            let vq = [
                q.bary[0] * vel[tri[0]][0] + q.bary[1] * vel[tri[1]][0] + q.bary[2] * vel[tri[2]][0],
                q.bary[0] * vel[tri[0]][1] + q.bary[1] * vel[tri[1]][1] + q.bary[2] * vel[tri[2]][1],
            ];
            let uy = space.velocity_at(yc, t, q.bary);
            let uv = space.velocity_at(vc, t, q.bary);
            let gy = space.velocity_grad_at(yc, t, q.bary);
            let gv = space.velocity_grad_at(vc, t, q.bary);
            let (p, pq) = (pressure(yc, t, q.bary), pressure(vc, t, q.bary));
            let f = params.body_force.eval(x);
            let df = params.body_force.jacobian(x);
            let dgy = mat_mul(gy, dv_mesh).map(|r| r.map(|z| -z));
            let dgv = mat_mul(gv, dv_mesh).map(|r| r.map(|z| -z));
            let conv = mat_vec(gy, uy);
            let lag = alpha * ddot(gy, gv) + dot(conv, uv)
                - p * (gv[0][0] + gv[1][1])
                - pq * (gy[0][0] + gy[1][1])
                - dot(f, uv);
            let dlag = alpha * (ddot(dgy, gv) + ddot(gy, dgv)) + dot(mat_vec(dgy, uy), uv)
                - p * (dgv[0][0] + dgv[1][1])
                - pq * (dgy[0][0] + dgy[1][1])
                - dot(mat_vec(df, vq), uv);
            let (cost, dcost) = match (kind, target) {
                (CostKind::J1Tracking, Some(target)) => {
                    let e = sub(uy, target.eval(x)?);
                    (half * dot(e, e), -dot(e, mat_vec(target.gradient(x)?, vq)))
                }
                (CostKind::J1Tracking, None) => unreachable!(),
                (CostKind::J2Vorticity, _) => {
                    let c = curl(gy);
                    (half * alpha * c * c, alpha * c * curl(dgy))
                }
            };
            total += w * (dcost - dlag + (cost - lag) * div_mesh);
        }
    }
    // boundary rows: multiplier is the unbalanced part of the adjoint equation
    let jt = crate::flow::unconstrained_jacobian(y, params)?.transpose();
    let jv = jt.mul_vec(vc);
    let mut node_vel = vec![[T::zero(); 2]; dm.num_p2()];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let el = &dm.elements()[t];
        for a in 0..3 {
            node_vel[el[a]] = vel[tri[a]];
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            node_vel[el[3 + a]] = [half * (vel[tri[b]][0] + vel[tri[c]][0]), half * (vel[tri[b]][1] + vel[tri[c]][1])];
        }
    }
    let coords = space.p2_coordinates();
    for k in dm.boundary_p2_nodes() {
        let dg = mat_vec(params.dirichlet.jacobian(coords[k]), node_vel[k]);
        for c in 0..2 {
            let i = dm.velocity_dof(k, c);
            total += (rhs[i] - jv[i]) * dg[c];
        }
    }
    Ok(total)
}

/// Result of a central finite difference.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FdEstimate<T> {
    pub value: T,
    /// Step actually used (after halvings).
    pub eps: T,
    pub j_plus: T,
    pub j_minus: T,
}

/// `(J(Ω_{+ε}) − J(Ω_{−ε})) / 2ε`, where `Ω_{±ε}` moves the mesh by the
/// harmonic extension of `±ε V_n n`. Each cost comes from a fresh state solve.
/// `ε` is halved (up to 10 times) while either perturbed mesh is invalid.
pub fn fd_eulerian<T: Scalar>(
    mesh: &Mesh2D<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
    pert: &Perturbation<T>,
    eps: T,
) -> Result<FdEstimate<T>> {
    if !(eps > T::zero()) {
        return Err(Error::InvalidParameter("finite-difference step must be positive".into()));
    }
    if pert.normal_speed.iter().all(|v| *v == T::zero()) {
        return Ok(FdEstimate { value: T::zero(), eps, j_plus: T::zero(), j_minus: T::zero() });
    }
    let ext = harmonic_extension(mesh, pert)?;
    let mut eps = eps;
    for _ in 0..=10 {
        // deform moves x to x − h d
        let plus = mesh.deform(&ext, -eps);
        let minus = mesh.deform(&ext, eps);
        let (plus, minus) = match (plus, minus) {
            (Ok(p), Ok(m)) => (p, m),
            (Err(Error::ReversedTriangle { .. }), _) | (_, Err(Error::ReversedTriangle { .. })) => {
                eps = eps * lit(0.5);
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let cost = |m: Mesh2D<T>| -> Result<T> {
            let space = FeSpace::new(m)?;
            let (y, _) = solve_ns(&space, params, &NewtonOptions::default(), Seed::Stokes)?;
            eval_cost(&y, params, kind, target)
        };
        let (jp, jm) = rayon::join(|| cost(plus), || cost(minus));
        let (jp, jm) = (jp?, jm?);
        return Ok(FdEstimate { value: (jp - jm) / (eps + eps), eps, j_plus: jp, j_minus: jm });
    }
    Err(Error::ReversedTriangle { triangle: usize::MAX, area: to_f64(eps) })
}

/// One Fourier mode of a gradient check.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCheck<T> {
    pub k: usize,
    /// Boundary-density Eulerian derivative.
    pub adjoint: T,
    /// Volume-form derivative of the discrete cost.
    pub volume: T,
    pub fd: T,
    /// `|adjoint − fd| / max(|fd|, floor)`.
    pub rel_err: T,
}

/// Relative floor for modes whose derivative vanishes by symmetry, as a
/// fraction of the largest finite difference among the checked modes.
pub const MODE_FLOOR: f64 = 1e-3;

/// Compares the adjoint Eulerian derivative with central finite differences
/// for the normal perturbations `V_n = cos(kθ)`, `k = 0..modes`.
pub fn check_gradient<T: Scalar>(
    mesh: &Mesh2D<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
    modes: usize,
    eps: T,
) -> Result<Vec<ModeCheck<T>>> {
    use rayon::prelude::*;
    let space = FeSpace::new(mesh.clone())?;
    let (y, _) = solve_ns(&space, params, &NewtonOptions::default(), Seed::Stokes)?;
    let adj = crate::adjoint::solve_adjoint(&y, params, kind, target)?;
    let density = gradient_density(&y, &adj, params, kind, target)?;
    let rows: Vec<Result<(usize, T, T, T)>> = (0..modes)
        .into_par_iter()
        .map(|k| {
            let pert = Perturbation::fourier(mesh, k, T::zero())?;
            let a = eulerian_derivative(mesh, &density, &pert)?;
            let v = discrete_eulerian(&y, params, kind, target, &harmonic_extension(mesh, &pert)?)?;
            let fd = fd_eulerian(mesh, params, kind, target, &pert, eps)?.value;
            Ok((k, a, v, fd))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let floor = rows.iter().fold(T::zero(), |m, r| m.max(r.3.abs())) * lit(MODE_FLOOR);
    Ok(rows
        .into_iter()
        .map(|(k, adjoint, volume, fd)| {
            let scale = fd.abs().max(floor);
            let rel_err = if scale > T::zero() { (adjoint - fd).abs() / scale } else { (adjoint - fd).abs() };
            ModeCheck { k, adjoint, volume, fd, rel_err }
        })
        .collect())
}
