use crate::error::{Error, Result};
use crate::scalar::{cross, from_usize, lit, norm, sub, Scalar, Vec2};

/// Closed, simple curve bounding the hole of an annular domain.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryCurve<T> {
    Circle { center: Vec2<T>, radius: T },
    /// Axis-aligned ellipse centred at the origin, `x²/a² + y²/b² = 1`.
    Ellipse { a: T, b: T },
    /// Closed polygon; the last point connects back to the first.
    Polyline(Vec<Vec2<T>>),
}

const ARC_TABLE: usize = 4096;

impl<T: Scalar> BoundaryCurve<T> {
    pub fn circle(radius: T) -> Self {
        Self::Circle { center: [T::zero(); 2], radius }
    }

    /// Checks closedness, simplicity and containment in the open unit disk.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Circle { center, radius } => {
                if !(*radius > T::zero()) || !radius.is_finite() {
                    return Err(Error::Geometry(format!("circle radius must be positive, got {radius}")));
                }
                if norm(*center) + *radius >= T::one() {
                    return Err(Error::Geometry("circle leaves the open unit disk".into()));
                }
            }
            Self::Ellipse { a, b } => {
                if !(*a > T::zero() && *b > T::zero()) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::Geometry("ellipse semi-axes must be positive".into()));
                }
                if a.max(*b) >= T::one() {
                    return Err(Error::Geometry("ellipse leaves the open unit disk".into()));
                }
            }
            Self::Polyline(pts) => {
                if pts.len() < 3 {
                    return Err(Error::Geometry("polyline needs at least three points".into()));
                }
                if pts.iter().any(|p| !(norm(*p) < T::one())) {
                    return Err(Error::Geometry("polyline leaves the open unit disk".into()));
                }
                let n = pts.len();
                for i in 0..n {
                    if norm(sub(pts[(i + 1) % n], pts[i])) == T::zero() {
                        return Err(Error::Geometry(format!("polyline has a repeated point at {i}")));
                    }
                    for j in i + 2..n {
                        if i == 0 && j == n - 1 {
                            continue;
                        }
                        if segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]) {
                            return Err(Error::Geometry(format!(
                                "polyline self-intersects (segments {i} and {j})"
                            )));
                        }
                    }
                }
                if polygon_area(pts) == T::zero() {
                    return Err(Error::Geometry("polyline encloses no area".into()));
                }
            }
        }
        Ok(())
    }

    /// Counterclockwise copy (only polylines can be given clockwise).
    pub fn counterclockwise(&self) -> Self {
        match self {
            Self::Polyline(pts) if polygon_area(pts) < T::zero() => {
                let mut rev = pts.clone();
                rev.reverse();
                Self::Polyline(rev)
            }
            other => other.clone(),
        }
    }

    pub fn perimeter(&self) -> T {
        match self {
            Self::Circle { radius, .. } => lit::<T>(2.0) * T::PI() * *radius,
            Self::Ellipse { a, b } => ellipse_arc_table(*a, *b)[ARC_TABLE],
            Self::Polyline(pts) => closed_lengths(pts).last().copied().unwrap_or_else(T::zero),
        }
    }

    /// Point at arc-length fraction `s ∈ [0, 1)`, counterclockwise from the
    /// positive x-axis (or from the first polyline vertex).
    pub fn point_at(&self, s: T) -> Vec2<T> {
        self.points_at(&[s])[0]
    }

    /// Batched [`BoundaryCurve::point_at`].
    pub fn points_at(&self, fractions: &[T]) -> Vec<Vec2<T>> {
        let two_pi = lit::<T>(2.0) * T::PI();
        match self.counterclockwise() {
            Self::Circle { center, radius } => fractions
                .iter()
                .map(|&s| {
                    let (sn, cs) = (two_pi * s).sin_cos();
                    [center[0] + radius * cs, center[1] + radius * sn]
                })
                .collect(),
            Self::Ellipse { a, b } => {
                let table = ellipse_arc_table(a, b);
                let total = table[ARC_TABLE];
                fractions
                    .iter()
                    .map(|&s| {
                        let t = ellipse_parameter(&table, a, b, s * total);
                        let (sn, cs) = t.sin_cos();
                        [a * cs, b * sn]
                    })
                    .collect()
            }
            Self::Polyline(pts) => {
                let cum = closed_lengths(&pts);
                let total = *cum.last().unwrap();
                let n = pts.len();
                fractions
                    .iter()
                    .map(|&s| {
                        let target = s * total;
                        let seg = match cum.iter().position(|&c| c > target) {
                            Some(0) | None => 0,
                            Some(k) => k - 1,
                        };
                        let seg = seg.min(n - 1);
                        let len = cum[seg + 1] - cum[seg];
                        let w = ((target - cum[seg]) / len).max(T::zero()).min(T::one());
                        let (p, q) = (pts[seg], pts[(seg + 1) % n]);
                        [p[0] + w * (q[0] - p[0]), p[1] + w * (q[1] - p[1])]
                    })
                    .collect()
            }
        }
    }

    /// `n` counterclockwise samples equally spaced in arc length.
    ///
    /// For curves symmetric under `x -> -x` (origin-centred circle or ellipse)
    /// and even `n`, the second half of the samples is the exact negation of
    /// the first half.
    pub fn sample(&self, n: usize) -> Vec<Vec2<T>> {
        let fractions: Vec<T> = (0..n).map(|k| from_usize::<T>(k) / from_usize::<T>(n)).collect();
        let symmetric = match self {
            Self::Circle { center, .. } => center[0] == T::zero() && center[1] == T::zero(),
            Self::Ellipse { .. } => true,
            Self::Polyline(_) => false,
        };
        if symmetric && n % 2 == 0 {
            let half = self.points_at(&fractions[..n / 2]);
            half.iter().copied().chain(half.iter().map(|p| [-p[0], -p[1]])).collect()
        } else {
            self.points_at(&fractions)
        }
    }

    /// Signed implicit residual: zero on the curve, negative inside.
    ///
    /// For the ellipse this is `x²/a² + y²/b² - 1`; for circles and polylines
    /// it is the signed distance.
    pub fn residual(&self, p: Vec2<T>) -> T {
        match self {
            Self::Circle { center, radius } => norm(sub(p, *center)) - *radius,
            Self::Ellipse { a, b } => p[0] * p[0] / (*a * *a) + p[1] * p[1] / (*b * *b) - T::one(),
            Self::Polyline(pts) => {
                let d = distance_to_polygon(pts, p);
                if point_in_polygon(pts, p) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Strict interior test.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        self.residual(p) < T::zero()
    }
}

/// Cumulative arc length along a closed polygon, `len + 1` entries starting at zero.
fn closed_lengths<T: Scalar>(pts: &[Vec2<T>]) -> Vec<T> {
    let n = pts.len();
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(T::zero());
    for i in 0..n {
        let l = norm(sub(pts[(i + 1) % n], pts[i]));
        cum.push(cum[i] + l);
    }
    cum
}

/// Arc length of `t -> (a cos t, b sin t)` tabulated on a uniform grid of
/// `[0, 2π]` by composite Simpson integration.
fn ellipse_arc_table<T: Scalar>(a: T, b: T) -> Vec<T> {
    let dt = lit::<T>(2.0) * T::PI() / from_usize::<T>(ARC_TABLE);
    let speed = |t: T| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
    let mut out = Vec::with_capacity(ARC_TABLE + 1);
    out.push(T::zero());
    for k in 0..ARC_TABLE {
        let t0 = from_usize::<T>(k) * dt;
        let inc = dt / lit(6.0) * (speed(t0) + lit::<T>(4.0) * speed(t0 + dt * lit(0.5)) + speed(t0 + dt));
        out.push(out[k] + inc);
    }
    out
}

/// Inverts the arc-length table with a Newton polish.
fn ellipse_parameter<T: Scalar>(table: &[T], a: T, b: T, s: T) -> T {
    let dt = lit::<T>(2.0) * T::PI() / from_usize::<T>(ARC_TABLE);
    let k = match table.iter().position(|&c| c > s) {
        Some(0) | None => 0,
        Some(k) => (k - 1).min(ARC_TABLE - 1),
    };
    let mut t = from_usize::<T>(k) * dt + dt * (s - table[k]) / (table[k + 1] - table[k]);
    let speed = |t: T| (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
    for _ in 0..3 {
        // arc length from the table node plus a Simpson correction on [t_k, t]
        let t0 = from_usize::<T>(k) * dt;
        let len = table[k] + (t - t0) / lit(6.0) * (speed(t0) + lit::<T>(4.0) * speed((t0 + t) * lit(0.5)) + speed(t));
        t -= (len - s) / speed(t);
    }
    t
}

pub(crate) fn polygon_area<T: Scalar>(pts: &[Vec2<T>]) -> T {
    let n = pts.len();
    (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<T>() * lit(0.5)
}

pub(crate) fn point_in_polygon<T: Scalar>(pts: &[Vec2<T>], p: Vec2<T>) -> bool {
    let n = pts.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Closest point on segment `[a, b]` to `p`.
pub(crate) fn closest_on_segment<T: Scalar>(a: Vec2<T>, b: Vec2<T>, p: Vec2<T>) -> Vec2<T> {
    let ab = sub(b, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let w = if len2 > T::zero() {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    [a[0] + w * ab[0], a[1] + w * ab[1]]
}

pub(crate) fn distance_to_polygon<T: Scalar>(pts: &[Vec2<T>], p: Vec2<T>) -> T {
    let n = pts.len();
    (0..n)
        .map(|i| norm(sub(p, closest_on_segment(pts[i], pts[(i + 1) % n], p))))
        .fold(T::infinity(), |m, d| m.min(d))
}

fn segments_intersect<T: Scalar>(p1: Vec2<T>, p2: Vec2<T>, q1: Vec2<T>, q2: Vec2<T>) -> bool {
    let d1 = cross(sub(q2, q1), sub(p1, q1));
    let d2 = cross(sub(q2, q1), sub(p2, q1));
    let d3 = cross(sub(p2, p1), sub(q1, p1));
    let d4 = cross(sub(p2, p1), sub(q2, p1));
    ((d1 > T::zero()) != (d2 > T::zero())) && ((d3 > T::zero()) != (d4 > T::zero()))
}
