//! Approximate minimum-volume oriented bounding boxes.
//!
//! The fit starts from the PCA frame, alternates exact 2-D minimum-area rectangles about
//! each current box axis, then polishes with a shrinking coordinate-descent grid of
//! rotations about each axis.

use nalgebra::{Matrix3, Point3, Rotation3, Vector2, Vector3};

use crate::classifier::pca;
use crate::error::Result;
use crate::geometry::{frame_from_axes, OrientedBox, MIN_HALF_EXTENT};

/// Half-range of the first coordinate-descent round.
const REFINE_RANGE_DEG: f64 = 10.0;
/// Grid offsets tried per axis and round, as fractions of the current range.
const REFINE_GRID: [f64; 4] = [-1.0, -0.5, 0.5, 1.0];
const MAX_ALTERNATIONS: usize = 4;
/// Relative improvement a candidate needs to replace the incumbent.
const IMPROVEMENT: f64 = 1e-12;

#[derive(Clone)]
struct Fit {
    frame: Matrix3<f64>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
    volume: f64,
}

impl Fit {
    fn new(points: &[Point3<f64>], frame: Matrix3<f64>) -> Self {
        let t = frame.transpose();
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for p in points {
            let l = t * p.coords;
            lo = lo.inf(&l);
            hi = hi.sup(&l);
        }
        let half = ((hi - lo) / 2.0).map(|h| h.max(MIN_HALF_EXTENT));
        Self {
            frame,
            lo,
            hi,
            volume: 8.0 * half.x * half.y * half.z,
        }
    }

    fn beats(&self, other: &Fit) -> bool {
        self.volume < other.volume * (1.0 - IMPROVEMENT)
    }

    fn into_box(self) -> OrientedBox {
        let half = (self.hi - self.lo) / 2.0;
        let center = Point3::from(self.frame * ((self.hi + self.lo) / 2.0));
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| half[b].total_cmp(&half[a]));
        let u = self.frame.column(order[0]).into_owned();
        let v = self.frame.column(order[1]).into_owned();
        let rotation =
            Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, u.cross(&v)]));
        let half_extents = Vector3::new(half[order[0]], half[order[1]], half[order[2]])
            .map(|h| h.max(MIN_HALF_EXTENT));
        OrientedBox::new(center, rotation, half_extents)
    }
}

/// Fit an approximately minimum-volume box around `points`.
///
/// The result contains every point, has extents sorted longest first and clamped below at
/// [`MIN_HALF_EXTENT`]. Fails with `DegenerateInput` when the points all coincide.
pub fn fit_obb(points: &[Point3<f64>], refine_steps: usize) -> Result<OrientedBox> {
    let start = *pca(points)?.frame().matrix();
    // Only hull vertices decide extents, so the search runs on a reduced set and the
    // final extents are measured on everything.
    let support = hull_candidates(points, &start);
    let mut best = Fit::new(&support, start);

    for _ in 0..MAX_ALTERNATIONS {
        let mut improved = false;
        for k in 0..3 {
            if let Some(frame) = min_area_frame(&support, &best.frame, k) {
                let cand = Fit::new(&support, frame);
                if cand.beats(&best) {
                    best = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let mut range = REFINE_RANGE_DEG.to_radians();
    for _ in 0..refine_steps {
        for k in 0..3 {
            let base = best.frame;
            for step in REFINE_GRID {
                let cand = Fit::new(&support, rotate_frame(&base, k, step * range));
                if cand.beats(&best) {
                    best = cand;
                }
            }
        }
        range /= 2.0;
    }
    Ok(Fit::new(points, best.frame).into_box())
}

/// Points that may be vertices of the convex hull: those outside the hull of the
/// extreme points along 26 directions of `frame`, plus those extreme points.
fn hull_candidates(points: &[Point3<f64>], frame: &Matrix3<f64>) -> Vec<Point3<f64>> {
    if points.len() < 64 {
        return points.to_vec();
    }
    // 13 axes; each gives the extreme points in both of its directions.
    let mut axes = Vec::with_capacity(13);
    for a in -1i32..=1 {
        for b in -1i32..=1 {
            for c in -1i32..=1 {
                if (a, b, c) > (0, 0, 0) {
                    axes.push(frame * Vector3::new(a as f64, b as f64, c as f64));
                }
            }
        }
    }
    let mut lo = vec![(f64::INFINITY, 0usize); axes.len()];
    let mut hi = vec![(f64::NEG_INFINITY, 0usize); axes.len()];
    for (i, p) in points.iter().enumerate() {
        for (k, a) in axes.iter().enumerate() {
            let v = a.dot(&p.coords);
            if v < lo[k].0 {
                lo[k] = (v, i);
            }
            if v > hi[k].0 {
                hi[k] = (v, i);
            }
        }
    }
    let mut ext: Vec<usize> = lo.iter().chain(&hi).map(|&(_, i)| i).collect();
    ext.sort_unstable();
    ext.dedup();
    let s: Vec<Vector3<f64>> = ext.iter().map(|&i| points[i].coords).collect();
    let centroid = s.iter().sum::<Vector3<f64>>() / s.len() as f64;
    let scale = s.iter().map(|p| (p - centroid).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return points.to_vec();
    }
    let tol = 1e-12 * scale;
    // Facet planes of the small hull, found by brute force over triples.
    let mut planes: Vec<(Vector3<f64>, f64)> = Vec::new();
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            for k in j + 1..s.len() {
                let n = (s[j] - s[i]).cross(&(s[k] - s[i]));
                let len = n.norm();
                if len <= 1e-9 * scale * scale {
                    continue;
                }
                let n = n / len;
                let d = n.dot(&s[i]);
                let (mut above, mut below) = (false, false);
                for q in &s {
                    let h = n.dot(q) - d;
                    above |= h > tol;
                    below |= h < -tol;
                }
                let plane = match (above, below) {
                    (false, _) => (n, d),
                    (true, false) => (-n, -d),
                    _ => continue,
                };
                // Coplanar extreme points give the same facet plane many times.
                if !planes
                    .iter()
                    .any(|(m, e)| (m - plane.0).norm() < 1e-9 && (e - plane.1).abs() <= tol)
                {
                    planes.push(plane);
                }
            }
        }
    }
    if planes.len() < 4 {
        return points.to_vec();
    }
    let mut keep = vec![false; points.len()];
    for &i in &ext {
        keep[i] = true;
    }
    points
        .iter()
        .zip(keep)
        .filter(|(p, k)| *k || planes.iter().any(|(n, d)| n.dot(&p.coords) - d > tol))
        .map(|(p, _)| *p)
        .collect()
}

/// Rotate the two columns other than `k` within their plane.
fn rotate_frame(frame: &Matrix3<f64>, k: usize, angle: f64) -> Matrix3<f64> {
    let (i, j) = ((k + 1) % 3, (k + 2) % 3);
    let (s, c) = angle.sin_cos();
    let ci = frame.column(i).into_owned();
    let cj = frame.column(j).into_owned();
    let mut out = *frame;
    out.set_column(i, &(ci * c + cj * s));
    out.set_column(j, &(cj * c - ci * s));
    out
}

/// Frame keeping column `k` of `frame` and rotating the other two onto the
/// minimum-area rectangle of the points projected along it.
fn min_area_frame(points: &[Point3<f64>], frame: &Matrix3<f64>, k: usize) -> Option<Matrix3<f64>> {
    let axis = frame.column(k).into_owned();
    let e1 = frame.column((k + 1) % 3).into_owned();
    let e2 = frame.column((k + 2) % 3).into_owned();
    let projected: Vec<Vector2<f64>> = points
        .iter()
        .map(|p| Vector2::new(p.coords.dot(&e1), p.coords.dot(&e2)))
        .collect();
    let hull = convex_hull_2d(&projected);
    let dir = min_area_rect_direction(&hull)?;
    let d1 = e1 * dir.x + e2 * dir.y;
    Some(*frame_from_axes(&d1, &axis.cross(&d1)).matrix())
}

fn cross2(o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull in counter-clockwise order without collinear vertices (monotone chain),
/// after discarding points that cannot be hull vertices.
fn convex_hull_2d(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    let mut pts = polygon_filter::<32>(&polygon_filter::<8>(points));
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(pts.len() + 1);
    for p in &pts {
        while hull.len() >= 2 && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross2(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}

/// Drop points inside the polygon of extreme points along `K` directions.
fn polygon_filter<const K: usize>(points: &[Vector2<f64>]) -> Vec<Vector2<f64>> {
    if points.len() < 4 * K {
        return points.to_vec();
    }
    // Directions i and i + K/2 are opposite, so one dot product serves both.
    let half = K / 2;
    let axes: Vec<Vector2<f64>> = (0..half)
        .map(|i| {
            let (s, c) = (i as f64 * std::f64::consts::TAU / K as f64).sin_cos();
            Vector2::new(c, s)
        })
        .collect();
    let mut arg = [0usize; K];
    let mut val = [f64::NEG_INFINITY; K];
    for (i, p) in points.iter().enumerate() {
        for (k, a) in axes.iter().enumerate() {
            let v = a.x * p.x + a.y * p.y;
            if v > val[k] {
                val[k] = v;
                arg[k] = i;
            }
            if -v > val[k + half] {
                val[k + half] = -v;
                arg[k + half] = i;
            }
        }
    }
    // Extremes in angular order form a convex polygon inscribed in the hull.
    let mut idx: Vec<usize> = arg.to_vec();
    idx.dedup();
    while idx.len() > 1 && idx.first() == idx.last() {
        idx.pop();
    }
    if idx.len() < 3 {
        return points.to_vec();
    }
    let poly: Vec<Vector2<f64>> = idx.iter().map(|&i| points[i]).collect();
    let scale = poly
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    // Points on the polygon boundary cannot be hull vertices either. The slack only ever
    // drops points within round-off of the boundary; the hull picks a direction and the
    // box extents are always measured on the full point set.
    let slack = -1e-12 * scale;
    let edges: Vec<(Vector2<f64>, f64)> = (0..poly.len())
        .filter_map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
            let e = b - a;
            let len = e.norm();
            (len > 0.0).then(|| {
                let n = Vector2::new(-e.y, e.x) / len;
                (n, n.dot(&a))
            })
        })
        .collect();
    // Disk inside the polygon: most interior points are rejected with one test.
    let center = poly.iter().sum::<Vector2<f64>>() / poly.len() as f64;
    let inradius = edges
        .iter()
        .map(|(n, d)| d - n.dot(&center))
        .fold(f64::INFINITY, f64::min);
    let r2 = if inradius > 0.0 {
        (inradius * (1.0 - 1e-9)).powi(2)
    } else {
        -1.0
    };
    let mut keep = vec![false; points.len()];
    for &i in &idx {
        keep[i] = true;
    }
    points
        .iter()
        .zip(keep)
        .filter(|(p, k)| {
            *k || ((*p - center).norm_squared() >= r2
                && edges.iter().any(|(n, d)| n.dot(p) - d < slack))
        })
        .map(|(p, _)| *p)
        .collect()
}

/// Unit direction of the first side of the minimum-area enclosing rectangle of a convex
/// polygon. The optimal rectangle has a side collinear with a hull edge.
fn min_area_rect_direction(hull: &[Vector2<f64>]) -> Option<Vector2<f64>> {
    let m = hull.len();
    if m < 2 {
        return None;
    }
    let at = |k: usize| hull[k % m];
    // Rotating calipers: the extreme vertices along the edge, across it and against it
    // only move forward as the edge index grows. `hull` is counter-clockwise.
    let (mut right, mut top, mut left) = (0usize, 0usize, 0usize);
    let mut best: Option<(f64, Vector2<f64>)> = None;
    for i in 0..m {
        let edge = at(i + 1) - at(i);
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let d = edge / len;
        let n = Vector2::new(-d.y, d.x);
        right = right.max(i);
        while right < i + m && at(right + 1).dot(&d) > at(right).dot(&d) {
            right += 1;
        }
        top = top.max(right);
        while top < i + 2 * m && at(top + 1).dot(&n) > at(top).dot(&n) {
            top += 1;
        }
        left = left.max(top);
        while left < i + 3 * m && at(left + 1).dot(&d) < at(left).dot(&d) {
            left += 1;
        }
        let area = (at(right).dot(&d) - at(left).dot(&d)) * (at(top).dot(&n) - at(i).dot(&n));
        if best.is_none_or(|(a, _)| area < a) {
            best = Some((area, d));
        }
    }
    best.map(|(_, d)| d)
}
