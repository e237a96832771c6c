//! Stationary Navier–Stokes solves: Stokes seed, Newton iteration with
//! viscosity continuation, and the interpolated target velocity.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::assembly::{apply_dirichlet, assemble_convection, assemble_load, assemble_stokes, convection_vector};
use crate::fem::quadrature::triangle_rule;
use crate::fem::{divergence_residual, FeSpace, FluidParams, LinearSolver, SparseOperator};
use crate::mesh::{closest_on_segment, Mesh2D};
use crate::scalar::{lit, max_abs, norm, sub, to_f64, Mat2, Scalar, Vec2};

/// Velocity/pressure coefficients on a fixed discretization.
#[derive(Clone, Debug)]
pub struct FlowField<T> {
    space: Arc<FeSpace<T>>,
    coeffs: Vec<T>,
}

impl<T: Scalar> FlowField<T> {
    pub fn new(space: Arc<FeSpace<T>>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != space.dofs().num_dofs() {
            return Err(Error::Contract(format!(
                "field has {} coefficients, space has {} dofs",
                coeffs.len(),
                space.dofs().num_dofs()
            )));
        }
        Ok(Self { space, coeffs })
    }

    pub fn zeros(space: Arc<FeSpace<T>>) -> Self {
        let n = space.dofs().num_dofs();
        Self { space, coeffs: vec![T::zero(); n] }
    }

    pub fn space(&self) -> &Arc<FeSpace<T>> {
        &self.space
    }

    pub fn mesh(&self) -> &Mesh2D<T> {
        self.space.mesh()
    }

    /// Full coefficient vector `[u_x, u_y, p]`.
    pub fn coefficients(&self) -> &[T] {
        &self.coeffs
    }

    pub fn velocity(&self) -> &[T] {
        &self.coeffs[..self.space.dofs().num_velocity()]
    }

    /// Pressure at the mesh vertices.
    pub fn pressure(&self) -> &[T] {
        &self.coeffs[self.space.dofs().num_velocity()..]
    }

    /// Velocity at the mesh vertices, for export.
    pub fn nodal_velocity(&self) -> Vec<Vec2<T>> {
        let n2 = self.space.dofs().num_p2();
        (0..self.space.dofs().num_vertices()).map(|v| [self.coeffs[v], self.coeffs[n2 + v]]).collect()
    }

    pub fn velocity_at(&self, t: usize, bary: [T; 3]) -> Vec2<T> {
        self.space.velocity_at(&self.coeffs, t, bary)
    }

    /// Largest discrete divergence `|∫ ψ div y|` over pressure test functions.
    pub fn max_divergence(&self) -> T {
        max_abs(&divergence_residual(&self.space, &self.coeffs))
    }

    pub fn pressure_mean(&self) -> T {
        self.space.pressure_mean(self.pressure())
    }

    /// `‖y − exact‖_{L²}` by element quadrature.
    pub fn velocity_l2_error(&self, exact: impl Fn(Vec2<T>) -> Vec2<T>) -> T {
        let mut s = T::zero();
        for t in 0..self.space.num_elements() {
            let el = self.space.element(t);
            for q in triangle_rule::<T>() {
                let e = sub(self.velocity_at(t, q.bary), exact(el.point(q.bary)));
                s += q.weight * el.area * (e[0] * e[0] + e[1] * e[1]);
            }
        }
        s.sqrt()
    }

    /// Same field on a different space with identical connectivity (a
    /// deformed copy of the mesh).
    pub fn transported(&self, space: Arc<FeSpace<T>>) -> Result<Self> {
        Self::new(space, self.coeffs.clone())
    }
}

/// Diagnostics of a Newton solve.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NewtonReport {
    /// Newton steps over all continuation stages.
    pub iterations: usize,
    /// Max-norm residuals of the last stage, starting with the seed.
    pub residuals: Vec<f64>,
    pub converged: bool,
    /// Auxiliary viscosities solved before the target one.
    pub continuation_steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonOptions<T> {
    /// Absolute tolerance on the max-norm residual of the free equations.
    pub tol: T,
    pub max_iter: usize,
    /// Fall back to a decreasing viscosity sequence when Newton fails.
    pub continuation: bool,
}

impl<T: Scalar> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self { tol: lit(1e-10), max_iter: 25, continuation: true }
    }
}

/// Initial guess for Newton.
#[derive(Clone, Copy, Debug)]
pub enum Seed<'a, T> {
    Stokes,
    Zero,
    /// Coefficients of an earlier solve on the same connectivity.
    Field(&'a FlowField<T>),
}

/// Single linear solve with the convection term dropped.
pub fn solve_stokes<T: Scalar>(space: &Arc<FeSpace<T>>, params: &FluidParams<T>) -> Result<FlowField<T>> {
    let k = assemble_stokes(space, params)?;
    let load = assemble_load(space, &params.body_force);
    let cons = space.dirichlet_values(&params.dirichlet);
    let (kc, rhs) = apply_dirichlet(&k, &load, &cons);
    let solver = LinearSolver::factor(&kc, Some(&space.mean_constraint()))?;
    let x = solver.solve(&rhs);
    check_solution(&kc, &x, &rhs)?;
    FlowField::new(space.clone(), x)
}

fn check_solution<T: Scalar>(op: &SparseOperator<T>, x: &[T], rhs: &[T]) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::IllConditioned { residual: f64::INFINITY, ratio: 0.0 });
    }
    let r = op.mul_vec(x);
    let res = r.iter().zip(rhs).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
    let limit = lit::<T>(1e-9) * (T::one() + max_abs(rhs));
    if !(res <= limit) {
        return Err(Error::IllConditioned { residual: to_f64(res), ratio: f64::NAN });
    }
    Ok(())
}

struct Problem<'a, T> {
    space: &'a Arc<FeSpace<T>>,
    stokes: SparseOperator<T>,
    load: Vec<T>,
    cons: Vec<(usize, T)>,
    zero_cons: Vec<(usize, T)>,
    mean: Vec<(usize, T)>,
}

impl<'a, T: Scalar> Problem<'a, T> {
    fn new(space: &'a Arc<FeSpace<T>>, params: &FluidParams<T>) -> Result<Self> {
        let cons = space.dirichlet_values(&params.dirichlet);
        Ok(Self {
            space,
            stokes: assemble_stokes(space, params)?,
            load: assemble_load(space, &params.body_force),
            zero_cons: cons.iter().map(|&(i, _)| (i, T::zero())).collect(),
            cons,
            mean: space.mean_constraint(),
        })
    }

    /// Weak residual with the prescribed rows zeroed.
    fn residual(&self, x: &[T]) -> Vec<T> {
        let mut r = self.raw_residual(x);
        for &(i, _) in &self.cons {
            r[i] = T::zero();
        }
        r
    }

    fn raw_residual(&self, x: &[T]) -> Vec<T> {
        let mut r = self.stokes.mul_vec(x);
        for ((ri, c), f) in r.iter_mut().zip(convection_vector(self.space, x)).zip(&self.load) {
            *ri += c - *f;
        }
        r
    }

    fn full_jacobian(&self, x: &[T]) -> SparseOperator<T> {
        self.stokes.add(&assemble_convection(self.space, x).sum())
    }

    fn jacobian(&self, x: &[T]) -> SparseOperator<T> {
        let full = self.full_jacobian(x);
        apply_dirichlet(&full, &vec![T::zero(); full.dim()], &self.zero_cons).0
    }

    fn with_boundary(&self, mut x: Vec<T>) -> Vec<T> {
        for &(i, g) in &self.cons {
            x[i] = g;
        }
        x
    }

    /// Plain Newton from `x`; returns the last iterate and whether it converged.
    fn newton(&self, x: Vec<T>, opts: &NewtonOptions<T>, report: &mut NewtonReport) -> Result<(Vec<T>, bool)> {
        let mut x = self.with_boundary(x);
        let mut r = self.residual(&x);
        let mut res = max_abs(&r);
        report.residuals = vec![to_f64(res)];
        let r0 = res.max(T::one());
        for _ in 0..opts.max_iter {
            if res <= opts.tol {
                return Ok((x, true));
            }
            let solver = LinearSolver::factor(&self.jacobian(&x), Some(&self.mean))?;
            let neg: Vec<T> = r.iter().map(|v| -*v).collect();
            let dx = solver.solve(&neg);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += *d;
            }
            report.iterations += 1;
            r = self.residual(&x);
            res = max_abs(&r);
            report.residuals.push(to_f64(res));
            if !res.is_finite() || res > lit::<T>(1e8) * r0 {
                return Ok((x, false));
            }
        }
        Ok((x, res <= opts.tol))
    }

    fn stokes_seed(&self) -> Result<Vec<T>> {
        let (kc, rhs) = apply_dirichlet(&self.stokes, &self.load, &self.cons);
        Ok(LinearSolver::factor(&kc, Some(&self.mean))?.solve(&rhs))
    }
}

/// Newton iteration for the stationary Navier–Stokes system.
///
/// When Newton fails from the seed and continuation is enabled, the problem is
/// re-solved along `α_j = 10 α / 2^j` (clamped at `α`), each stage seeded by
/// the previous one.
pub fn solve_ns<T: Scalar>(
    space: &Arc<FeSpace<T>>,
    params: &FluidParams<T>,
    opts: &NewtonOptions<T>,
    seed: Seed<'_, T>,
) -> Result<(FlowField<T>, NewtonReport)> {
    params.validate()?;
    let n = space.dofs().num_dofs();
    let problem = Problem::new(space, params)?;
    let x0 = match seed {
        Seed::Stokes => problem.stokes_seed()?,
        Seed::Zero => vec![T::zero(); n],
        Seed::Field(f) => {
            if f.coeffs.len() != n {
                return Err(Error::Contract("seed field does not match the space".into()));
            }
            // the mean moves with the mesh; Newton updates keep it fixed
            let mut x = f.coeffs.clone();
            let nv = space.dofs().num_velocity();
            let shift = space.pressure_mean(&x[nv..]);
            x[nv..].iter_mut().for_each(|p| *p -= shift);
            x
        }
    };
    let mut report = NewtonReport::default();
    let (x, ok) = problem.newton(x0, opts, &mut report)?;
    if ok {
        report.converged = true;
        return Ok((FlowField::new(space.clone(), x)?, report));
    }
    if !opts.continuation {
        return Err(Error::NonConvergence(Box::new(report)));
    }

    let two = lit::<T>(2.0);
    let mut alpha = params.alpha * lit(10.0);
    let mut x = Problem::new(space, &params.with_alpha(alpha))?.stokes_seed()?;
    loop {
        let stage_params = params.with_alpha(alpha);
        let stage = Problem::new(space, &stage_params)?;
        let (next, ok) = stage.newton(x, opts, &mut report)?;
        if !ok {
            return Err(Error::NonConvergence(Box::new(report)));
        }
        x = next;
        if alpha == params.alpha {
            break;
        }
        report.continuation_steps += 1;
        alpha = (alpha / two).max(params.alpha);
    }
    report.converged = true;
    Ok((FlowField::new(space.clone(), x)?, report))
}

/// Constrained Newton Jacobian at a given field (prescribed rows replaced by
/// identity rows).
pub fn newton_jacobian<T: Scalar>(field: &FlowField<T>, params: &FluidParams<T>) -> Result<SparseOperator<T>> {
    Ok(Problem::new(field.space(), params)?.jacobian(&field.coeffs))
}

/// Newton Jacobian without any boundary elimination.
pub fn unconstrained_jacobian<T: Scalar>(field: &FlowField<T>, params: &FluidParams<T>) -> Result<SparseOperator<T>> {
    Ok(Problem::new(field.space(), params)?.full_jacobian(&field.coeffs))
}

/// Weak residual of every equation, boundary rows included. At boundary
/// velocity dofs it is the discrete traction `∫_Γ (α Dy·n − p n)·φ`.
pub fn unconstrained_residual<T: Scalar>(field: &FlowField<T>, params: &FluidParams<T>) -> Result<Vec<T>> {
    Ok(Problem::new(field.space(), params)?.raw_residual(&field.coeffs))
}

/// Max-norm residual of the discrete state equation at `field`.
pub fn state_residual<T: Scalar>(field: &FlowField<T>, params: &FluidParams<T>) -> Result<T> {
    Ok(max_abs(&Problem::new(field.space(), params)?.residual(&field.coeffs)))
}

/// The velocity `y_d` computed on a target domain, evaluable anywhere in the
/// unit disk.
///
/// Inside the target mesh the P2 interpolant is returned. Elsewhere (for
/// example inside the target hole) the value at the nearest point of the
/// target boundary is used.
#[derive(Clone, Debug)]
pub struct TargetField<T> {
    field: FlowField<T>,
    grid: BucketGrid<T>,
    /// `(edge, owning triangle)` for every boundary edge.
    boundary: Vec<([usize; 2], usize)>,
    radius: T,
}

#[derive(Clone, Debug)]
struct BucketGrid<T> {
    origin: Vec2<T>,
    cell: T,
    n: usize,
    cells: Vec<Vec<usize>>,
}

impl<T: Scalar> BucketGrid<T> {
    fn new(mesh: &Mesh2D<T>) -> Self {
        let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let n = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]) * lit(1.0 + 1e-9);
        let cell = span / lit(n as f64);
        let mut cells = vec![Vec::new(); n * n];
        let grid = Self { origin: lo, cell, n, cells: Vec::new() };
        let pad = cell * lit(1e-9);
        for t in 0..mesh.num_triangles() {
            let v = mesh.triangle_vertices(t);
            let mut blo = [T::infinity(); 2];
            let mut bhi = [T::neg_infinity(); 2];
            for p in v {
                for d in 0..2 {
                    blo[d] = blo[d].min(p[d] - pad);
                    bhi[d] = bhi[d].max(p[d] + pad);
                }
            }
            let (i0, j0) = grid.index(blo);
            let (i1, j1) = grid.index(bhi);
            for i in i0..=i1 {
                for j in j0..=j1 {
                    cells[j * n + i].push(t);
                }
            }
        }
        Self { cells, ..grid }
    }

    fn index(&self, p: Vec2<T>) -> (usize, usize) {
        let f = |d: usize| {
            let k = to_f64((p[d] - self.origin[d]) / self.cell).floor();
            k.clamp(0.0, (self.n - 1) as f64) as usize
        };
        (f(0), f(1))
    }

    fn candidates(&self, p: Vec2<T>) -> &[usize] {
        let (i, j) = self.index(p);
        &self.cells[j * self.n + i]
    }
}

impl<T: Scalar> TargetField<T> {
    pub fn new(field: FlowField<T>) -> Self {
        let mesh = field.mesh();
        let grid = BucketGrid::new(mesh);
        let mut owner = std::collections::HashMap::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                owner.insert((tri[k], tri[(k + 1) % 3]), t);
            }
        }
        let boundary = mesh.boundary_edges().iter().map(|e| (e.nodes, owner[&(e.nodes[0], e.nodes[1])])).collect();
        let radius = mesh.nodes().iter().map(|&p| norm(p)).fold(T::zero(), T::max);
        Self { field, grid, boundary, radius }
    }

    pub fn field(&self) -> &FlowField<T> {
        &self.field
    }

    /// Element containing `p` and its barycentric coordinates, if any.
    pub fn locate(&self, p: Vec2<T>) -> Option<(usize, [T; 3])> {
        let tol = lit::<T>(-1e-12);
        let mut best: Option<(usize, [T; 3], T)> = None;
        for &t in self.grid.candidates(p) {
            let l = self.field.space().element(t).barycentric(p);
            let m = l[0].min(l[1]).min(l[2]);
            if m >= tol && best.map_or(true, |b| m > b.2) {
                best = Some((t, l, m));
            }
        }
        best.map(|(t, l, _)| (t, l))
    }

    pub fn eval(&self, p: Vec2<T>) -> Result<Vec2<T>> {
        if let Some((t, l)) = self.locate(p) {
            return Ok(self.field.velocity_at(t, l));
        }
        if !(norm(p) <= self.radius + lit(1e-6)) {
            return Err(Error::Domain(to_f64(p[0]), to_f64(p[1])));
        }
        let (t, q) = self.nearest_boundary_point(p);
        let l = self.field.space().element(t).barycentric(q);
        let l = [l[0].max(T::zero()), l[1].max(T::zero()), l[2].max(T::zero())];
        let s = l[0] + l[1] + l[2];
        Ok(self.field.velocity_at(t, [l[0] / s, l[1] / s, l[2] / s]))
    }

    /// Jacobian of [`TargetField::eval`]; central differences outside the
    /// target mesh, where the extension is only piecewise smooth.
    pub fn gradient(&self, p: Vec2<T>) -> Result<Mat2<T>> {
        if let Some((t, l)) = self.locate(p) {
            return Ok(self.field.space().velocity_grad_at(self.field.coefficients(), t, l));
        }
        let h = lit::<T>(1e-7);
        let mut out = [[T::zero(); 2]; 2];
        for j in 0..2 {
            let (mut a, mut b) = (p, p);
            a[j] += h;
            b[j] -= h;
            let (fa, fb) = (self.eval(a)?, self.eval(b)?);
            for i in 0..2 {
                out[i][j] = (fa[i] - fb[i]) / (h + h);
            }
        }
        Ok(out)
    }

    /// Closest point on the target boundary and the triangle owning it.
    pub fn nearest_boundary_point(&self, p: Vec2<T>) -> (usize, Vec2<T>) {
        let nodes = self.field.mesh().nodes();
        let mut best = (0, p, T::infinity());
        for &([a, b], t) in &self.boundary {
            let q = closest_on_segment(nodes[a], nodes[b], p);
            let d = norm(sub(q, p));
            if d < best.2 {
                best = (t, q, d);
            }
        }
        (best.0, best.1)
    }

    /// Values at the quadrature points of `space`, ordered element by element.
    pub fn sample_quadrature(&self, space: &FeSpace<T>) -> Result<Vec<Vec2<T>>> {
        let rule = triangle_rule::<T>();
        let mut out = Vec::with_capacity(space.num_elements() * rule.len());
        for t in 0..space.num_elements() {
            let el = space.element(t);
            for q in &rule {
                out.push(self.eval(el.point(q.bary))?);
            }
        }
        Ok(out)
    }
}

/// Solves the state equation on the target domain and wraps it as `y_d`.
pub fn target_field<T: Scalar>(mesh: Mesh2D<T>, params: &FluidParams<T>) -> Result<TargetField<T>> {
    let space = FeSpace::new(mesh)?;
    let (field, _) = solve_ns(&space, params, &NewtonOptions::default(), Seed::Stokes)?;
    Ok(TargetField::new(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::VectorField;
    use crate::mesh::{gen_annulus, BoundaryCurve};

    fn space(r: f64, h: f64) -> Arc<FeSpace<f64>> {
        FeSpace::new(gen_annulus(&BoundaryCurve::circle(r), h).unwrap()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let s = space(0.3, 0.25);
        let params = FluidParams::new(0.1, VectorField::zero()).unwrap();
        let st = solve_stokes(&s, &params).unwrap();
        assert!(st.coefficients().iter().all(|&v| v == 0.0));
        let (ns, rep) = solve_ns(&s, &params, &NewtonOptions::default(), Seed::Stokes).unwrap();
        assert!(ns.coefficients().iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    /// Quadratic velocity and linear pressure lie in the discrete spaces.
    #[test]
    fn stokes_patch_test_is_exact() {
        let s = space(0.3, 0.2);
        let alpha = 0.7;
        let exact = |p: [f64; 2]| [p[1] * p[1] + p[0], p[0] * p[0] - p[1]];
        let f = VectorField::new(move |_p: [f64; 2]| [-2.0 * alpha + 1.0, -2.0 * alpha - 1.0]);
        let params = FluidParams::new(alpha, f).unwrap().with_dirichlet(VectorField::new(exact));
        let field = solve_stokes(&s, &params).unwrap();
        let want = s.interpolate(exact);
        let err = field.velocity().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "velocity error {err}");
        // pressure x - y, shifted to zero mean
        let verts = s.mesh().nodes();
        let raw: Vec<f64> = verts.iter().map(|p| p[0] - p[1]).collect();
        let shift = s.pressure_mean(&raw);
        for (v, p) in field.pressure().iter().enumerate() {
            assert!((p - (raw[v] - shift)).abs() < 1e-10);
        }
        assert!(field.pressure_mean().abs() < 1e-12);
    }

    #[test]
    fn rigid_rotation_trace_is_reproduced() {
        let s = space(0.4, 0.2);
        let rot = |p: [f64; 2]| [-p[1], p[0]];
        let params = FluidParams::new(1.0, VectorField::zero()).unwrap().with_dirichlet(VectorField::new(rot));
        let field = solve_stokes(&s, &params).unwrap();
        let n2 = s.dofs().num_p2();
        for k in s.dofs().boundary_p2_nodes() {
            let want = rot(s.p2_coordinates()[k]);
            assert_eq!(field.coefficients()[k], want[0]);
            assert_eq!(field.coefficients()[n2 + k], want[1]);
        }
    }

    #[test]
    fn benchmark_newton_converges_quickly() {
        let s = space(0.2, 0.12);
        let params = FluidParams::benchmark(0.1).unwrap();
        let (field, rep) = solve_ns(&s, &params, &NewtonOptions::default(), Seed::Stokes).unwrap();
        assert!(rep.converged && rep.iterations <= 10, "{rep:?}");
        assert!(*rep.residuals.last().unwrap() <= 1e-10);
        assert!(field.max_divergence() <= 1e-9);
        assert!(field.pressure_mean().abs() <= 1e-12);
        assert!(state_residual(&field, &params).unwrap() <= 1e-10);
    }

    #[test]
    fn field_seed_with_shifted_pressure_ends_at_zero_mean() {
        let s = space(0.2, 0.15);
        let params = FluidParams::benchmark(0.1).unwrap();
        let opts = NewtonOptions::default();
        let (a, _) = solve_ns(&s, &params, &opts, Seed::Stokes).unwrap();
        let mut c = a.coefficients().to_vec();
        let nv = s.dofs().num_velocity();
        c[nv..].iter_mut().for_each(|p| *p += 0.25);
        let seed = FlowField::new(s.clone(), c).unwrap();
        let (b, _) = solve_ns(&s, &params, &opts, Seed::Field(&seed)).unwrap();
        assert!(b.pressure_mean().abs() <= 1e-12);
        for (x, y) in a.pressure().iter().zip(b.pressure()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_and_stokes_seeds_agree() {
        let s = space(0.2, 0.15);
        let params = FluidParams::benchmark(0.1).unwrap();
        let opts = NewtonOptions::default();
        let (a, _) = solve_ns(&s, &params, &opts, Seed::Stokes).unwrap();
        let (b, _) = solve_ns(&s, &params, &opts, Seed::Zero).unwrap();
        let d = a.coefficients().iter().zip(b.coefficients()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-8, "{d}");
    }

    #[test]
    fn large_viscosity_matches_stokes() {
        let s = space(0.2, 0.15);
        let params = FluidParams::benchmark(1e3).unwrap();
        let st = solve_stokes(&s, &params).unwrap();
        let (ns, _) = solve_ns(&s, &params, &NewtonOptions::default(), Seed::Stokes).unwrap();
        let d = st.velocity().iter().zip(ns.velocity()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(d <= 1e-6, "{d}");
    }

    #[test]
    fn newton_residuals_decrease_after_first_step() {
        let s = space(0.2, 0.15);
        let params = FluidParams::benchmark(0.1).unwrap();
        let (_, rep) = solve_ns(&s, &params, &NewtonOptions::default(), Seed::Zero).unwrap();
        for w in rep.residuals[1..].windows(2) {
            assert!(w[1] < w[0], "{:?}", rep.residuals);
        }
    }

    #[test]
    fn continuation_engages_when_newton_is_capped() {
        let s = space(0.2, 0.2);
        let params = FluidParams::benchmark(0.01).unwrap();
        let opts = NewtonOptions { max_iter: 2, ..NewtonOptions::default() };
        let plain = NewtonOptions { continuation: false, ..opts };
        assert!(matches!(solve_ns(&s, &params, &plain, Seed::Zero), Err(Error::NonConvergence(_))));
        // with a generous budget per stage the sequence reaches the target
        let opts = NewtonOptions { max_iter: 25, ..NewtonOptions::default() };
        let (_, rep) = solve_ns(&s, &params, &opts, Seed::Zero).unwrap();
        assert!(rep.converged);
    }

    #[test]
    fn target_field_interpolates_and_extends() {
        let mesh = gen_annulus(&BoundaryCurve::circle(0.2f64), 0.15).unwrap();
        let params = FluidParams::benchmark(0.1).unwrap();
        let target = target_field(mesh, &params).unwrap();
        let f = target.field();
        let n2 = f.space().dofs().num_p2();
        for v in [0, 7, f.mesh().num_nodes() - 1] {
            let got = target.eval(f.mesh().nodes()[v]).unwrap();
            assert!((got[0] - f.coefficients()[v]).abs() < 1e-14);
            assert!((got[1] - f.coefficients()[n2 + v]).abs() < 1e-14);
        }
        // inside an element: P2 interpolation of that element's coefficients
        let t = 3;
        let l = [0.2, 0.3, 0.5];
        let p = f.space().element(t).point(l);
        let got = target.eval(p).unwrap();
        let want = f.velocity_at(t, l);
        assert!((got[0] - want[0]).abs() < 1e-13 && (got[1] - want[1]).abs() < 1e-13);
        // inside the hole: brute-force nearest boundary point
        let q = [0.05, -0.03];
        let got = target.eval(q).unwrap();
        let mesh = f.mesh();
        let mut best = (f64::INFINITY, [0.0; 2]);
        for e in mesh.boundary_edges() {
            let (a, b) = (mesh.nodes()[e.nodes[0]], mesh.nodes()[e.nodes[1]]);
            for k in 0..=2000 {
                let s = k as f64 / 2000.0;
                let x = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                let d = norm(sub(x, q));
                if d < best.0 {
                    best = (d, x);
                }
            }
        }
        let (t, l) = target.locate(best.1).unwrap();
        let want = f.velocity_at(t, l);
        assert!((got[0] - want[0]).abs() < 1e-6 && (got[1] - want[1]).abs() < 1e-6);
        assert!(matches!(target.eval([1.5, 0.0]), Err(Error::Domain(..))));
    }
}
