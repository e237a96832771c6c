//! Cost functionals and their adjoint states.
//!
//! Both adjoints solve the transposed Newton Jacobian
//! `α(Dv, Dw) + ((Dw)·y, v) + ((Dy)·w, v) − (q, div w) = ℓ(w)` with `v = 0` on
//! the whole boundary, for the right sides
//!
//! ```text
//! J1:  ℓ(w) = ∫ (y − y_d) · w
//! J2:  ℓ(w) = α ∫ Dy : Dw      (weak form of −αΔy)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::assembly::apply_dirichlet;
use crate::fem::element::{p2_grads, p2_values};
use crate::fem::quadrature::triangle_rule;
use crate::fem::{FluidParams, LinearSolver, SparseOperator, TripletBuilder};
use crate::flow::{newton_jacobian, FlowField, TargetField};
use crate::scalar::{lit, max_abs, Scalar, Vec2};

/// Which cost functional is being minimized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CostKind {
    /// `½ ∫ |y − y_d|²`
    #[serde(rename = "j1", alias = "J1", alias = "tracking")]
    J1Tracking,
    /// `α/2 ∫ |curl y|²`
    #[serde(rename = "j2", alias = "J2", alias = "vorticity")]
    J2Vorticity,
}

impl CostKind {
    pub const ALL: [CostKind; 2] = [CostKind::J1Tracking, CostKind::J2Vorticity];

    pub fn needs_target(self) -> bool {
        self == CostKind::J1Tracking
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CostKind::J1Tracking => "j1",
            CostKind::J2Vorticity => "j2",
        })
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "j1" | "tracking" => Ok(CostKind::J1Tracking),
            "j2" | "vorticity" => Ok(CostKind::J2Vorticity),
            other => Err(Error::Parse(format!("unknown cost kind '{other}' (expected j1 or j2)"))),
        }
    }
}

/// Adjoint velocity and pressure; same layout as the state.
pub type AdjointField<T> = FlowField<T>;

/// Scalar vorticity `∂₁y₂ − ∂₂y₁` from a velocity gradient `G[c][d] = ∂_d y_c`.
pub fn curl<T: Scalar>(g: [[T; 2]; 2]) -> T {
    g[1][0] - g[0][1]
}

/// `y_d` at the quadrature points of the field's mesh (J1 only).
fn target_samples<T: Scalar>(y: &FlowField<T>, kind: CostKind, target: Option<&TargetField<T>>) -> Result<Vec<Vec2<T>>> {
    match (kind, target) {
        (CostKind::J1Tracking, Some(t)) => t.sample_quadrature(y.space()),
        (CostKind::J1Tracking, None) => Err(Error::InvalidParameter("J1 requires a target velocity".into())),
        (CostKind::J2Vorticity, _) => Ok(Vec::new()),
    }
}

/// Quadrature value of the cost functional.
pub fn eval_cost<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<T> {
    let yd = target_samples(y, kind, target)?;
    Ok(cost_with_samples(y, params.alpha, kind, &yd))
}

pub(crate) fn cost_with_samples<T: Scalar>(y: &FlowField<T>, alpha: T, kind: CostKind, yd: &[Vec2<T>]) -> T {
    let space = y.space();
    let rule = triangle_rule::<T>();
    let half = lit::<T>(0.5);
    let mut total = T::zero();
    for t in 0..space.num_elements() {
        let el = space.element(t);
        for (k, q) in rule.iter().enumerate() {
            let w = q.weight * el.area;
            let val = match kind {
                CostKind::J1Tracking => {
                    let v = y.velocity_at(t, q.bary);
                    let d = yd[t * rule.len() + k];
                    let e = [v[0] - d[0], v[1] - d[1]];
                    e[0] * e[0] + e[1] * e[1]
                }
                CostKind::J2Vorticity => {
                    let c = curl(space.velocity_grad_at(y.coefficients(), t, q.bary));
                    alpha * c * c
                }
            };
            total += half * w * val;
        }
    }
    total
}

/// Right side `ℓ(w)` of the adjoint system for every velocity test function
/// (pressure rows zero, boundary rows not yet constrained).
pub fn adjoint_rhs<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<Vec<T>> {
    let yd = target_samples(y, kind, target)?;
    Ok(rhs_with_samples(y, params.alpha, kind, &yd))
}

fn rhs_with_samples<T: Scalar>(y: &FlowField<T>, alpha: T, kind: CostKind, yd: &[Vec2<T>]) -> Vec<T> {
    let space = y.space();
    let dm = space.dofs();
    let rule = triangle_rule::<T>();
    let mut rhs = vec![T::zero(); dm.num_dofs()];
    for t in 0..space.num_elements() {
        let el = space.element(t);
        let vd = dm.element_velocity_dofs(t);
        for (k, q) in rule.iter().enumerate() {
            let w = q.weight * el.area;
            match kind {
                CostKind::J1Tracking => {
                    let phi = p2_values(q.bary);
                    let v = y.velocity_at(t, q.bary);
                    let d = yd[t * rule.len() + k];
                    for i in 0..6 {
                        rhs[vd[i]] += w * (v[0] - d[0]) * phi[i];
                        rhs[vd[6 + i]] += w * (v[1] - d[1]) * phi[i];
                    }
                }
                CostKind::J2Vorticity => {
                    let g = p2_grads(q.bary, &el.grad_bary);
                    let dy = space.velocity_grad_at(y.coefficients(), t, q.bary);
                    for i in 0..6 {
                        for c in 0..2 {
                            rhs[vd[6 * c + i]] += alpha * w * (dy[c][0] * g[i][0] + dy[c][1] * g[i][1]);
                        }
                    }
                }
            }
        }
    }
    rhs
}

/// Solves the adjoint system with the transposed Newton Jacobian at `y`.
pub fn solve_adjoint<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<AdjointField<T>> {
    solve_adjoint_with_rhs(y, params, adjoint_rhs(y, params, kind, target)?)
}

/// Transposed Newton solve for an arbitrary right side; boundary rows of
/// `rhs` are ignored.
pub(crate) fn solve_adjoint_with_rhs<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    mut rhs: Vec<T>,
) -> Result<AdjointField<T>> {
    let space = y.space();
    for (i, _) in space.dirichlet_values(&crate::fem::VectorField::zero()) {
        rhs[i] = T::zero();
    }
    let jac = newton_jacobian(y, params)?;
    let solver = LinearSolver::factor(&jac, Some(&space.mean_constraint()))?;
    let v = solver.solve_transpose(&rhs);
    let residual: Vec<T> = jac.transpose().mul_vec(&v).iter().zip(&rhs).map(|(a, b)| *a - *b).collect();
    let res = max_abs(&residual);
    if !(res <= lit::<T>(1e-9) * (T::one() + max_abs(&rhs))) {
        return Err(Error::IllConditioned { residual: crate::scalar::to_f64(res), ratio: f64::NAN });
    }
    FlowField::new(space.clone(), v)
}

/// Exact derivative of the discrete cost with respect to the state
/// coefficients. Differs from [`adjoint_rhs`] for J2 by the `α∫div y div w`
/// term, which vanishes for exactly divergence-free fields.
pub fn cost_gradient<T: Scalar>(
    y: &FlowField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<Vec<T>> {
    if kind == CostKind::J1Tracking {
        return adjoint_rhs(y, params, kind, target);
    }
    let space = y.space();
    let dm = space.dofs();
    let mut out = vec![T::zero(); dm.num_dofs()];
    for t in 0..space.num_elements() {
        let el = space.element(t);
        let vd = dm.element_velocity_dofs(t);
        for q in triangle_rule::<T>() {
            let w = q.weight * el.area * params.alpha;
            let g = p2_grads(q.bary, &el.grad_bary);
            let c = curl(space.velocity_grad_at(y.coefficients(), t, q.bary));
            for i in 0..6 {
                out[vd[i]] -= w * c * g[i][1];
                out[vd[6 + i]] += w * c * g[i][0];
            }
        }
    }
    Ok(out)
}

/// Weak residual of the adjoint equations with no boundary elimination; at
/// boundary velocity dofs it carries the adjoint traction.
pub fn unconstrained_adjoint_residual<T: Scalar>(
    y: &FlowField<T>,
    adj: &AdjointField<T>,
    params: &FluidParams<T>,
    kind: CostKind,
    target: Option<&TargetField<T>>,
) -> Result<Vec<T>> {
    let rhs = adjoint_rhs(y, params, kind, target)?;
    let jt = crate::flow::unconstrained_jacobian(y, params)?.transpose();
    Ok(jt.mul_vec(adj.coefficients()).iter().zip(&rhs).map(|(a, b)| *a - *b).collect())
}

/// Adjoint operator assembled directly from its bilinear form, with the
/// boundary velocity rows eliminated. Equals the transposed Newton Jacobian.
pub fn assemble_adjoint_operator<T: Scalar>(y: &FlowField<T>, params: &FluidParams<T>) -> Result<SparseOperator<T>> {
    params.validate()?;
    let space = y.space();
    let dm = space.dofs();
    let n = dm.num_dofs();
    let mut b = TripletBuilder::with_capacity(n, space.num_elements() * 300);
    for t in 0..space.num_elements() {
        let el = space.element(t);
        if !(el.area > T::zero()) {
            return Err(Error::DegenerateElement(t));
        }
        let vd = dm.element_velocity_dofs(t);
        let pd = dm.element_pressure_dofs(t);
        for q in triangle_rule::<T>() {
            let w = q.weight * el.area;
            let phi = p2_values(q.bary);
            let g = p2_grads(q.bary, &el.grad_bary);
            let yq = y.velocity_at(t, q.bary);
            let dy = space.velocity_grad_at(y.coefficients(), t, q.bary);
            // row: adjoint unknown (component c, node i); column: test function (e, j)
            for i in 0..6 {
                for j in 0..6 {
                    let visc = params.alpha * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    let adv = phi[j] * (yq[0] * g[i][0] + yq[1] * g[i][1]);
                    for c in 0..2 {
                        b.add(vd[6 * c + i], vd[6 * c + j], w * (visc + adv));
                        for e in 0..2 {
                            b.add(vd[6 * c + i], vd[6 * e + j], w * phi[i] * phi[j] * dy[e][c]);
                        }
                    }
                }
                for a in 0..3 {
                    for c in 0..2 {
                        let div = -w * q.bary[a] * g[i][c];
                        b.add(vd[6 * c + i], pd[a], div);
                        b.add(pd[a], vd[6 * c + i], div);
                    }
                }
            }
        }
    }
    let raw = b.build(false);
    let boundary: Vec<(usize, T)> =
        space.dirichlet_values(&crate::fem::VectorField::zero()).into_iter().map(|(i, _)| (i, T::zero())).collect();
    Ok(apply_dirichlet(&raw, &vec![T::zero(); n], &boundary).0)
}
