//! The gradient algorithm: solve the state and adjoint on `Ω_k`, smooth the
//! boundary density into an H1 descent field `d_k`, and move the mesh to
//! `(Id − h_k d_k) Ω_k`.
//!
//! Step control follows the usual heuristic: shrink `h` when consecutive
//! descent fields point against each other, grow it when they nearly agree,
//! and shrink it whenever the move would reverse a triangle.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adjoint::{eval_cost, solve_adjoint, CostKind};
use crate::error::{Error, Result};
use crate::fem::{FeSpace, FluidParams};
use crate::flow::{solve_ns, target_field, FlowField, NewtonOptions, Seed, TargetField};
use crate::mesh::{gen_annulus, BoundaryCurve, DisplacementField, Marker, Mesh2D};
use crate::scalar::{lit, to_f64, Scalar};
use crate::shape::{gradient_density, h1_descent, h1_inner};

/// Version of the JSON configuration layout.
pub const CONFIG_SCHEMA: u32 = 1;

/// Inner boundary as written in a configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CurveSpec {
    Circle { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Polyline { points: Vec<[f64; 2]> },
}

impl CurveSpec {
    pub fn to_curve<T: Scalar>(&self) -> BoundaryCurve<T> {
        match self {
            CurveSpec::Circle { radius } => BoundaryCurve::circle(lit(*radius)),
            CurveSpec::Ellipse { a, b } => BoundaryCurve::Ellipse { a: lit(*a), b: lit(*b) },
            CurveSpec::Polyline { points } => {
                BoundaryCurve::Polyline(points.iter().map(|p| [lit(p[0]), lit(p[1])]).collect())
            }
        }
    }
}

fn default_schema() -> u32 {
    CONFIG_SCHEMA
}
fn default_mesh_h() -> f64 {
    0.11
}
fn default_h0() -> f64 {
    20.0
}
fn default_up() -> f64 {
    1.5
}
fn default_down() -> f64 {
    0.5
}
fn default_cos_up() -> f64 {
    0.9
}
fn default_min_angle() -> f64 {
    15.0
}
fn default_retries() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptConfig {
    #[serde(default = "default_schema")]
    pub schema: u32,
    pub alpha: f64,
    pub cost: CostKind,
    pub initial: CurveSpec,
    /// Inner boundary of the domain on which `y_d` is computed.
    pub target: CurveSpec,
    /// Mesh size for the initial, target and regenerated meshes.
    #[serde(default = "default_mesh_h")]
    pub mesh_h: f64,
    #[serde(default = "default_h0")]
    pub h0: f64,
    pub max_iter: usize,
    #[serde(default = "default_up")]
    pub up: f64,
    #[serde(default = "default_down")]
    pub down: f64,
    /// Cosine between consecutive descent fields above which `h` grows.
    #[serde(default = "default_cos_up")]
    pub cos_up: f64,
    /// Remesh when the smallest angle (degrees) drops below this.
    #[serde(default = "default_min_angle")]
    pub min_angle: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Write a mesh snapshot every this many iterations (0 disables).
    #[serde(default)]
    pub snapshot_every: usize,
}

impl OptConfig {
    /// Defaults for everything but the problem itself.
    pub fn new(alpha: f64, cost: CostKind, initial: CurveSpec, target: CurveSpec, max_iter: usize) -> Self {
        Self {
            schema: CONFIG_SCHEMA,
            alpha,
            cost,
            initial,
            target,
            mesh_h: default_mesh_h(),
            h0: default_h0(),
            max_iter,
            up: default_up(),
            down: default_down(),
            cos_up: default_cos_up(),
            min_angle: default_min_angle(),
            max_retries: default_retries(),
            snapshot_every: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.schema != CONFIG_SCHEMA {
            return bad(format!("unsupported config schema {} (expected {CONFIG_SCHEMA})", self.schema));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.h0 > 0.0) || !self.h0.is_finite() {
            return bad(format!("h0 must be positive, got {}", self.h0));
        }
        if !(self.mesh_h > 0.0) || !self.mesh_h.is_finite() {
            return bad(format!("mesh_h must be positive, got {}", self.mesh_h));
        }
        if !(0.0 < self.down && self.down < 1.0 && 1.0 < self.up) || !self.up.is_finite() {
            return bad(format!("need 0 < down < 1 < up, got down = {}, up = {}", self.down, self.up));
        }
        if !(self.cos_up > -1.0 && self.cos_up <= 1.0) {
            return bad(format!("cos_up must lie in (-1, 1], got {}", self.cos_up));
        }
        if !(0.0..60.0).contains(&self.min_angle) {
            return bad(format!("min_angle must lie in [0, 60), got {}", self.min_angle));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        self.initial.to_curve::<f64>().validate()?;
        self.target.to_curve::<f64>().validate()?;
        Ok(())
    }

    pub fn step_rule(&self) -> StepRule {
        StepRule { up: self.up, down: self.down, cos_up: self.cos_up }
    }
}

/// Factors of the step heuristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRule {
    pub up: f64,
    pub down: f64,
    pub cos_up: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self { up: default_up(), down: default_down(), cos_up: default_cos_up() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepChange {
    Decrease,
    Keep,
    Increase,
}

/// Next step from `(d_k, d_{k−1})_{H1}` and the two norms.
pub fn step_from_inner<T: Scalar>(inner: T, norm_k: T, norm_prev: T, h_prev: T, rule: &StepRule) -> (T, StepChange) {
    if inner < T::zero() {
        return (h_prev * lit(rule.down), StepChange::Decrease);
    }
    let denom = norm_k * norm_prev;
    if denom > T::zero() && inner / denom > lit(rule.cos_up) {
        return (h_prev * lit(rule.up), StepChange::Increase);
    }
    (h_prev, StepChange::Keep)
}

/// Step heuristic on a mesh where both fields are given node by node.
pub fn step_control<T: Scalar>(
    mesh: &Mesh2D<T>,
    d: &DisplacementField<T>,
    d_prev: &DisplacementField<T>,
    h_prev: T,
    rule: &StepRule,
) -> Result<(T, StepChange)> {
    let inner = h1_inner(mesh, d, d_prev)?;
    let nk = h1_inner(mesh, d, d)?.sqrt();
    let np = h1_inner(mesh, d_prev, d_prev)?.sqrt();
    Ok(step_from_inner(inner, nk, np, h_prev, rule))
}

/// Moves the mesh to `x − h d`, halving (by `down`) on reversed triangles.
/// Returns the moved mesh, the step used and the number of rejections.
pub fn try_step<T: Scalar>(
    mesh: &Mesh2D<T>,
    d: &DisplacementField<T>,
    h: T,
    down: T,
    max_retries: usize,
) -> Result<(Mesh2D<T>, T, usize)> {
    let mut h = h;
    for retry in 0..=max_retries {
        match mesh.deform(d, h) {
            Ok(m) => return Ok((m, h, retry)),
            Err(Error::ReversedTriangle { .. }) => h *= down,
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepRejected { retries: max_retries, h: to_f64(h / down) })
}

/// One row of the optimization history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterRecord {
    pub k: usize,
    /// `J(Ω_k)`
    pub cost: f64,
    /// Step actually taken (after rejections).
    pub h: f64,
    /// `|d_k|` in the H1 seminorm.
    pub dnorm: f64,
    /// Smallest angle of the accepted mesh, degrees.
    pub min_angle: f64,
    pub accepted: bool,
    pub rejections: usize,
    pub change: Option<String>,
    pub remeshed: bool,
    pub newton_iterations: usize,
}

impl IterRecord {
    pub const CSV_HEADER: &'static str = "k,J,h,dnorm,min_angle,accepted";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.k, self.cost, self.h, self.dnorm, self.min_angle, self.accepted
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct OptTrace {
    pub records: Vec<IterRecord>,
}

impl OptTrace {
    pub fn accepted(&self) -> usize {
        self.records.iter().filter(|r| r.accepted).count()
    }

    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(IterRecord::CSV_HEADER);
        s.push('\n');
        for r in &self.records {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Why the loop ended.
#[derive(Clone, Debug, PartialEq)]
pub enum StopReason {
    Budget,
    NonConvergence(String),
    StepUnderflow { h: f64 },
    StepRejected(String),
}

impl StopReason {
    pub fn is_success(&self) -> bool {
        *self == StopReason::Budget
    }
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StopReason::Budget => write!(f, "iteration budget reached"),
            StopReason::NonConvergence(m) => write!(f, "state solve failed: {m}"),
            StopReason::StepUnderflow { h } => write!(f, "step underflow (h = {h:e})"),
            StopReason::StepRejected(m) => write!(f, "{m}"),
        }
    }
}

/// Loop state between iterations.
#[derive(Clone, Debug)]
pub struct OptState<T> {
    pub k: usize,
    pub h: T,
    pub d_prev: Option<DisplacementField<T>>,
    pub costs: Vec<T>,
}

pub struct OptOutcome<T> {
    pub mesh: Mesh2D<T>,
    pub trace: OptTrace,
    pub stop: StopReason,
    /// State on the final mesh, when it could be computed.
    pub state: Option<FlowField<T>>,
    pub final_cost: Option<f64>,
    pub initial_mesh: Mesh2D<T>,
}

/// Problem data shared by all iterations.
pub struct Problem<T> {
    pub params: FluidParams<T>,
    pub target: Option<TargetField<T>>,
    pub kind: CostKind,
}

impl<T: Scalar> Problem<T> {
    pub fn from_config(cfg: &OptConfig) -> Result<Self> {
        let params = FluidParams::benchmark(lit::<T>(cfg.alpha))?;
        let target = if cfg.cost.needs_target() {
            Some(target_field(gen_annulus(&cfg.target.to_curve(), lit(cfg.mesh_h))?, &params)?)
        } else {
            None
        };
        Ok(Self { params, target, kind: cfg.cost })
    }

    pub fn cost(&self, y: &FlowField<T>) -> Result<T> {
        eval_cost(y, &self.params, self.kind, self.target.as_ref())
    }

    /// Descent field `d` on the mesh of `y`.
    pub fn descent(&self, y: &FlowField<T>) -> Result<DisplacementField<T>> {
        let adj = solve_adjoint(y, &self.params, self.kind, self.target.as_ref())?;
        let density = gradient_density(y, &adj, &self.params, self.kind, self.target.as_ref())?;
        h1_descent(y.mesh(), &density)
    }
}

/// Runs the optimization from the configured initial shape.
pub fn run<T: Scalar>(cfg: &OptConfig) -> Result<OptOutcome<T>> {
    run_with(cfg, |_, _| Ok(()))
}

/// As [`run`], calling `observe` after every iteration with its record and
/// the accepted mesh.
pub fn run_with<T: Scalar>(
    cfg: &OptConfig,
    observe: impl FnMut(&IterRecord, &Mesh2D<T>) -> Result<()>,
) -> Result<OptOutcome<T>> {
    cfg.validate()?;
    let problem = Problem::<T>::from_config(cfg)?;
    let mesh = gen_annulus(&cfg.initial.to_curve(), lit(cfg.mesh_h))?;
    run_from(cfg, &problem, mesh, observe)
}

/// The loop itself, from a given mesh and problem.
pub fn run_from<T: Scalar>(
    cfg: &OptConfig,
    problem: &Problem<T>,
    mesh: Mesh2D<T>,
    mut observe: impl FnMut(&IterRecord, &Mesh2D<T>) -> Result<()>,
) -> Result<OptOutcome<T>> {
    cfg.validate()?;
    let rule = cfg.step_rule();
    let h0 = lit::<T>(cfg.h0);
    let opts = NewtonOptions::default();
    let initial_mesh = mesh.clone();
    let mut mesh = mesh;
    let mut state = OptState { k: 0, h: h0, d_prev: None, costs: Vec::new() };
    let mut trace = OptTrace::default();
    let mut prev_y: Option<FlowField<T>> = None;
    let mut stop = StopReason::Budget;

    while state.k < cfg.max_iter {
        let space = FeSpace::new(mesh.clone())?;
        let (y, newton_iterations) = match solve_state(&space, &problem.params, &opts, prev_y.as_ref()) {
            Ok((y, report)) => (y, report.iterations),
            Err(e) => {
                stop = StopReason::NonConvergence(e.to_string());
                break;
            }
        };
        let cost = problem.cost(&y)?;
        state.costs.push(cost);
        let d = match problem.descent(&y) {
            Ok(d) => d,
            Err(e) => {
                stop = StopReason::NonConvergence(e.to_string());
                break;
            }
        };
        let dnorm = h1_inner(&mesh, &d, &d)?.sqrt();
        let (h, change) = match &state.d_prev {
            Some(prev) if state.k > 0 => {
                let (h, c) = step_control(&mesh, &d, prev, state.h, &rule)?;
                (h, Some(c))
            }
            _ => (state.h, None),
        };
        let mut record = IterRecord {
            k: state.k,
            cost: to_f64(cost),
            h: to_f64(h),
            dnorm: to_f64(dnorm),
            min_angle: to_f64(mesh.quality().min_angle),
            accepted: false,
            rejections: 0,
            change: change.map(|c| format!("{c:?}").to_lowercase()),
            remeshed: false,
            newton_iterations,
        };
        let moved = try_step(&mesh, &d, h, lit(cfg.down), cfg.max_retries);
        let (next, h_used, rejections) = match moved {
            Ok(x) => x,
            Err(e) => {
                record.rejections = cfg.max_retries;
                observe(&record, &mesh)?;
                trace.records.push(record);
                stop = StopReason::StepRejected(e.to_string());
                break;
            }
        };
        if h_used < lit::<T>(1e-8) * h0 {
            record.h = to_f64(h_used);
            record.rejections = rejections;
            observe(&record, &mesh)?;
            trace.records.push(record);
            stop = StopReason::StepUnderflow { h: to_f64(h_used) };
            break;
        }
        record.h = to_f64(h_used);
        record.rejections = rejections;
        record.accepted = true;
        let mut next = next;
        let mut d_prev = Some(d);
        prev_y = Some(y);
        if to_f64(next.quality().min_angle) < cfg.min_angle {
            next = remesh(&next, lit(cfg.mesh_h))?;
            record.remeshed = true;
            // node correspondence is gone
            d_prev = None;
            prev_y = None;
        }
        record.min_angle = to_f64(next.quality().min_angle);
        observe(&record, &next)?;
        trace.records.push(record);
        mesh = next;
        state = OptState { k: state.k + 1, h: h_used, d_prev, costs: state.costs };
    }

    let (y_final, final_cost) = if stop.is_success() {
        let space = FeSpace::new(mesh.clone())?;
        match solve_state(&space, &problem.params, &opts, prev_y.as_ref()) {
            Ok((y, _)) => {
                let c = to_f64(problem.cost(&y)?);
                (Some(y), Some(c))
            }
            Err(e) => {
                stop = StopReason::NonConvergence(e.to_string());
                (None, None)
            }
        }
    } else {
        (None, None)
    };
    Ok(OptOutcome { mesh, trace, stop, state: y_final, final_cost, initial_mesh })
}

/// Newton solve warm-started from the previous iterate when the meshes share
/// connectivity.
fn solve_state<T: Scalar>(
    space: &Arc<FeSpace<T>>,
    params: &FluidParams<T>,
    opts: &NewtonOptions<T>,
    prev: Option<&FlowField<T>>,
) -> Result<(FlowField<T>, crate::flow::NewtonReport)> {
    if let Some(prev) = prev {
        if let Ok(seed) = prev.transported(space.clone()) {
            if let Ok(out) = solve_ns(space, params, opts, Seed::Field(&seed)) {
                return Ok(out);
            }
        }
    }
    solve_ns(space, params, opts, Seed::Stokes)
}

/// Regenerates the mesh from the current inner polyline.
pub fn remesh<T: Scalar>(mesh: &Mesh2D<T>, h: T) -> Result<Mesh2D<T>> {
    let inner = mesh.boundary_polyline(Marker::Inner)?;
    gen_annulus(&BoundaryCurve::Polyline(inner), h)
}

/// Mean distance of the inner-boundary nodes from the circle of radius `r`
/// about the origin.
pub fn mean_radial_deviation<T: Scalar>(mesh: &Mesh2D<T>, r: T) -> Result<T> {
    let nodes = mesh.boundary_loop(Marker::Inner)?;
    let p = mesh.nodes();
    let s: T = nodes.iter().map(|&i| ((p[i][0] * p[i][0] + p[i][1] * p[i][1]).sqrt() - r).abs()).sum();
    Ok(s / lit::<T>(nodes.len() as f64))
}
