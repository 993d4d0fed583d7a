//! Planar convex-polygon primitives used by the simulator and the planner.
//!
//! Everything lives in the vertical construction plane: `y` is horizontal
//! (positive to the right), `z` is vertical (positive up). All lengths are
//! meters, all angles radians. Geometry runs in `f64` throughout so that
//! settling and snapshots are bit-reproducible.

/// A point or displacement in the construction plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub y: f64,
    pub z: f64,
}

impl Vec2 {
    pub fn new(y: f64, z: f64) -> Self {
        Vec2 { y, z }
    }
}

/// An oriented rectangle: center, half extents along its long/short axes, angle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub center: Vec2,
    /// Half of the long-axis extent.
    pub half_len: f64,
    /// Half of the short-axis extent.
    pub half_thick: f64,
    /// Rotation of the long axis from the +y direction, radians.
    pub angle: f64,
}

impl Rect {
    pub fn new(center: Vec2, half_len: f64, half_thick: f64, angle: f64) -> Self {
        Rect { center, half_len, half_thick, angle }
    }

    /// Axis-aligned rectangle from its center and full extents.
    pub fn axis_aligned(cy: f64, cz: f64, width: f64, height: f64) -> Self {
        Rect::new(Vec2::new(cy, cz), width / 2.0, height / 2.0, 0.0)
    }

    /// Corner points in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let (s, c) = self.angle.sin_cos();
        let u = Vec2::new(c, s);
        let v = Vec2::new(-s, c);
        let (a, b) = (self.half_len, self.half_thick);
        let p = |fu: f64, fv: f64| {
            Vec2::new(
                self.center.y + fu * u.y + fv * v.y,
                self.center.z + fu * u.z + fv * v.z,
            )
        };
        [p(a, b), p(-a, b), p(-a, -b), p(a, -b)]
    }

    pub fn to_poly(&self) -> Vec<Vec2> {
        self.corners().to_vec()
    }

    /// Rotate the rectangle by `phi` about an arbitrary pivot point.
    pub fn rotated_about(&self, pivot: Vec2, phi: f64) -> Rect {
        let (s, c) = phi.sin_cos();
        let dy = self.center.y - pivot.y;
        let dz = self.center.z - pivot.z;
        Rect {
            center: Vec2::new(pivot.y + c * dy - s * dz, pivot.z + s * dy + c * dz),
            half_len: self.half_len,
            half_thick: self.half_thick,
            angle: self.angle + phi,
        }
    }

    pub fn translated(&self, dy: f64, dz: f64) -> Rect {
        Rect {
            center: Vec2::new(self.center.y + dy, self.center.z + dz),
            ..*self
        }
    }

    pub fn min_z(&self) -> f64 {
        self.corners().iter().map(|p| p.z).fold(f64::INFINITY, f64::min)
    }

    pub fn max_z(&self) -> f64 {
        self.corners().iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn y_range(&self) -> (f64, f64) {
        let cs = self.corners();
        let lo = cs.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let hi = cs.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

fn project(poly: &[Vec2], axis: Vec2) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in poly {
        let d = p.y * axis.y + p.z * axis.z;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

fn edge_normals(poly: &[Vec2]) -> impl Iterator<Item = Vec2> + '_ {
    (0..poly.len()).map(move |i| {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let ey = b.y - a.y;
        let ez = b.z - a.z;
        let n = (ey * ey + ez * ez).sqrt().max(1e-300);
        Vec2::new(-ez / n, ey / n)
    })
}

/// SAT penetration depth between two convex polygons.
///
/// Returns 0.0 for separated or exactly touching shapes, and the minimal
/// translation distance needed to separate them otherwise.
pub fn penetration_depth(a: &[Vec2], b: &[Vec2]) -> f64 {
    let mut depth = f64::INFINITY;
    for axis in edge_normals(a).chain(edge_normals(b)) {
        let (alo, ahi) = project(a, axis);
        let (blo, bhi) = project(b, axis);
        let overlap = ahi.min(bhi) - alo.max(blo);
        if overlap <= 0.0 {
            return 0.0;
        }
        depth = depth.min(overlap);
    }
    depth
}

/// Strict intersection: the polygons overlap with positive area (touching
/// boundaries do not count).
pub fn intersects_strictly(a: &[Vec2], b: &[Vec2], eps: f64) -> bool {
    penetration_depth(a, b) > eps
}

const VERTICAL_EPS: f64 = 1e-12;

/// Maximum boundary height of a convex polygon at abscissa `y`, or `None`
/// if the polygon does not cover `y`. Near-vertical edges are skipped; their
/// endpoints belong to adjacent edges.
pub fn top_at(poly: &[Vec2], y: f64) -> Option<f64> {
    boundary_at(poly, y, true)
}

/// Minimum boundary height of a convex polygon at abscissa `y`.
pub fn bottom_at(poly: &[Vec2], y: f64) -> Option<f64> {
    boundary_at(poly, y, false)
}

fn boundary_at(poly: &[Vec2], y: f64, upper: bool) -> Option<f64> {
    let mut best: Option<f64> = None;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (lo, hi) = if a.y <= b.y { (a, b) } else { (b, a) };
        if hi.y - lo.y < VERTICAL_EPS {
            continue;
        }
        if y < lo.y || y > hi.y {
            continue;
        }
        let t = (y - lo.y) / (hi.y - lo.y);
        let z = lo.z + t * (hi.z - lo.z);
        best = Some(match best {
            None => z,
            Some(cur) => {
                if upper {
                    cur.max(z)
                } else {
                    cur.min(z)
                }
            }
        });
    }
    best
}

/// Distance the polygon `moving` can translate straight down before first
/// touching `obstacle`.
///
/// Returns `None` when the obstacle can never block the drop (horizontal
/// ranges disjoint, or the obstacle lies entirely above). Shapes already
/// interlocked within rounding noise block immediately (`Some(0.0)`); a body
/// sitting fully below an overhang falls freely past it.
pub fn drop_distance(moving: &[Vec2], obstacle: &[Vec2]) -> Option<f64> {
    const EPS: f64 = 1e-9;
    let (mlo, mhi) = y_span(moving);
    let (olo, ohi) = y_span(obstacle);
    if mhi < olo || ohi < mlo {
        return None;
    }
    let mut best = f64::INFINITY;
    let mut penetrating = false;
    // Vertices of the moving body falling onto the obstacle's upper boundary.
    for v in moving {
        if let Some(top) = top_at(obstacle, v.y) {
            let gap = v.z - top;
            if gap >= -EPS {
                best = best.min(gap.max(0.0));
            } else if bottom_at(obstacle, v.y).is_some_and(|bot| v.z > bot + EPS) {
                // Vertex inside the obstacle: already in contact, cannot fall.
                penetrating = true;
            }
        }
    }
    // Vertices of the obstacle meeting the moving body's lower boundary.
    for v in obstacle {
        if let Some(bot) = bottom_at(moving, v.y) {
            let gap = bot - v.z;
            if gap >= -EPS {
                best = best.min(gap.max(0.0));
            } else if top_at(moving, v.y).is_some_and(|top| v.z < top - EPS) {
                penetrating = true;
            }
        }
    }
    if penetrating {
        return Some(0.0);
    }
    if best.is_finite() {
        Some(best)
    } else {
        None
    }
}

fn y_span(poly: &[Vec2]) -> (f64, f64) {
    let lo = poly.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let hi = poly.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Minimal upward shift of `moving` that clears its overlap with `obstacle`
/// (0.0 when they do not overlap). Exact for convex polygons: evaluated at
/// every vertex abscissa inside the shared horizontal span.
pub fn vertical_separation_up(moving: &[Vec2], obstacle: &[Vec2]) -> f64 {
    if penetration_depth(moving, obstacle) <= 1e-12 {
        return 0.0;
    }
    let (mlo, mhi) = y_span(moving);
    let (olo, ohi) = y_span(obstacle);
    let lo = mlo.max(olo);
    let hi = mhi.min(ohi);
    let mut shift: f64 = 0.0;
    let mut consider = |y: f64| {
        if y < lo - 1e-12 || y > hi + 1e-12 {
            return;
        }
        if let (Some(top), Some(bot)) = (top_at(obstacle, y), bottom_at(moving, y)) {
            shift = shift.max(top - bot);
        }
    };
    for v in moving.iter().chain(obstacle.iter()) {
        consider(v.y);
    }
    consider(lo);
    consider(hi);
    shift.max(0.0)
}

/// Minimal downward shift of `moving` that clears its overlap with `obstacle`.
pub fn vertical_separation_down(moving: &[Vec2], obstacle: &[Vec2]) -> f64 {
    if penetration_depth(moving, obstacle) <= 1e-12 {
        return 0.0;
    }
    let flip = |poly: &[Vec2]| -> Vec<Vec2> {
        poly.iter().map(|p| Vec2::new(p.y, -p.z)).collect()
    };
    vertical_separation_up(&flip(moving), &flip(obstacle))
}

/// Convex hull of a point set (Andrew's monotone chain), counter-clockwise.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| (a.y, a.z).partial_cmp(&(b.y, b.z)).unwrap());
    pts.dedup_by(|a, b| (a.y - b.y).abs() < 1e-15 && (a.z - b.z).abs() < 1e-15);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a.y - o.y) * (b.z - o.z) - (a.z - o.z) * (b.y - o.y);
    let mut lower: Vec<Vec2> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Vec2> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}
