use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("meshing error: {0}")]
    Meshing(String),
    #[error("reversed triangle {triangle} (signed area {area:e}); reduce the step")]
    ReversedTriangle { triangle: usize, area: f64 },
    #[error("degenerate triangle {0} in assembly")]
    DegenerateElement(usize),
    #[error("singular linear system: pivot {pivot:e} at row {row}, pivot ratio {ratio:e}")]
    Singular { row: usize, pivot: f64, ratio: f64 },
    #[error("ill-conditioned linear system: residual {residual:e}, pivot ratio {ratio:e}")]
    IllConditioned { residual: f64, ratio: f64 },
    #[error("Newton iteration did not converge after {} iterations (last residual {:e})", .0.iterations, .0.residuals.last().copied().unwrap_or(f64::NAN))]
    NonConvergence(Box<crate::flow::NewtonReport>),
    #[error("point ({0}, {1}) lies outside the target domain")]
    Domain(f64, f64),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("mesh move still reverses triangles after {retries} step reductions (last h = {h:e})")]
    StepRejected { retries: usize, h: f64 },
    #[error("step size underflow: h = {h:e} below {limit:e}")]
    StepUnderflow { h: f64, limit: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
