//! Oriented boxes and the separating-axis overlap test.

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};

/// Smallest half-extent a fitted box may have, in meters.
///
/// Keeps volumes and face geometry well defined for flat and linear parts.
pub const MIN_HALF_EXTENT: f64 = 1e-4;

/// A box with arbitrary orientation.
///
/// Column `i` of `rotation` is the box axis carrying `half_extents[i]`. Boxes produced by
/// [`crate::decomposition::fit_obb`] have their extents sorted in decreasing order so that
/// axis 0 is the longest (U) and axis 2 the shortest (W); derived boxes such as face slabs
/// do not keep that ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Point3<f64>,
    pub rotation: Rotation3<f64>,
    pub half_extents: Vector3<f64>,
}

impl OrientedBox {
    pub fn new(center: Point3<f64>, rotation: Rotation3<f64>, half_extents: Vector3<f64>) -> Self {
        Self {
            center,
            rotation,
            half_extents,
        }
    }

    pub fn axis_aligned(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self {
            center: nalgebra::center(&min, &max),
            rotation: Rotation3::identity(),
            half_extents: (max - min) / 2.0,
        }
    }

    /// Unit axis `i` in world coordinates.
    #[inline]
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.rotation.matrix().column(i).into_owned()
    }

    pub fn axes(&self) -> [Vector3<f64>; 3] {
        [self.axis(0), self.axis(1), self.axis(2)]
    }

    pub fn volume(&self) -> f64 {
        8.0 * self.half_extents.x * self.half_extents.y * self.half_extents.z
    }

    /// Full side lengths.
    pub fn dims(&self) -> Vector3<f64> {
        self.half_extents * 2.0
    }

    pub fn diagonal(&self) -> f64 {
        2.0 * self.half_extents.norm()
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.rotation.inverse_transform_vector(&(p - self.center))
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Point3<f64> {
        self.center + self.rotation * local
    }

    /// Whether `p` lies inside the box inflated by `tol` along every axis.
    pub fn contains(&self, p: &Point3<f64>, tol: f64) -> bool {
        let l = self.to_local(p);
        (0..3).all(|i| l[i].abs() <= self.half_extents[i] + tol)
    }

    /// Corners in binary order: bit `i` of the index selects the sign along axis `i`.
    pub fn corners(&self) -> [Point3<f64>; 8] {
        std::array::from_fn(|k| {
            let sign = |bit: usize| if k & (1 << bit) != 0 { 1.0 } else { -1.0 };
            let local = Vector3::new(
                sign(0) * self.half_extents.x,
                sign(1) * self.half_extents.y,
                sign(2) * self.half_extents.z,
            );
            self.to_world(&local)
        })
    }

    /// Interval covered by the box when projected on `dir` (not necessarily unit).
    pub fn project(&self, dir: &Vector3<f64>) -> (f64, f64) {
        let c = self.center.coords.dot(dir);
        let r: f64 = (0..3)
            .map(|i| self.half_extents[i] * self.axis(i).dot(dir).abs())
            .sum();
        (c - r, c + r)
    }

    /// Distance from `p` to the closest point of the (solid) box.
    pub fn distance_to(&self, p: &Point3<f64>) -> f64 {
        let l = self.to_local(p);
        let outside = Vector3::from_fn(|i, _| (l[i].abs() - self.half_extents[i]).max(0.0));
        outside.norm()
    }

    /// Slab obtained by extruding the face normal to axis `axis` on side `sign` outward by
    /// `depth`.
    pub fn face_slab(&self, axis: usize, sign: f64, depth: f64) -> OrientedBox {
        let mut half = self.half_extents;
        half[axis] = depth / 2.0;
        let offset = self.axis(axis) * sign * (self.half_extents[axis] + depth / 2.0);
        OrientedBox::new(self.center + offset, self.rotation, half)
    }

    /// Parameter interval `[t0, t1]` where the ray `origin + t·dir` is inside the box, if any
    /// part of the ray with `t ≥ 0` is.
    pub fn ray_hit(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        tol: f64,
    ) -> Option<(f64, f64)> {
        let o = self.to_local(origin);
        let d = self.rotation.inverse_transform_vector(dir);
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for i in 0..3 {
            let h = self.half_extents[i] + tol;
            if d[i].abs() < 1e-15 {
                if o[i].abs() > h {
                    return None;
                }
                continue;
            }
            let a = (-h - o[i]) / d[i];
            let b = (h - o[i]) / d[i];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        (t0 <= t1 && t1 >= 0.0).then_some((t0.max(0.0), t1))
    }
}

/// Whether two boxes overlap by more than `tol` on every separating axis.
///
/// Boxes that merely touch (or interpenetrate by at most `tol`) are reported as
/// disjoint. The predicate is symmetric in its arguments.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox, tol: f64) -> bool {
    let aa = a.axes();
    let ba = b.axes();
    let mut candidates: Vec<Vector3<f64>> = Vec::with_capacity(15);
    candidates.extend_from_slice(&aa);
    candidates.extend_from_slice(&ba);
    for x in &aa {
        for y in &ba {
            let c = x.cross(y);
            let n = c.norm();
            if n > 1e-9 {
                candidates.push(c / n);
            }
        }
    }
    candidates.iter().all(|axis| {
        let (a0, a1) = a.project(axis);
        let (b0, b1) = b.project(axis);
        a1.min(b1) - a0.max(b0) > tol
    })
}

/// Right-handed rotation whose columns are `u`, `v` and `u × v`, re-orthonormalized.
pub fn frame_from_axes(u: &Vector3<f64>, v: &Vector3<f64>) -> Rotation3<f64> {
    let u = u.normalize();
    let v = (v - u * u.dot(v)).normalize();
    let w = u.cross(&v);
    Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, w]))
}

/// Any unit vector orthogonal to `n`, built from the world axis least parallel to it.
pub fn orthogonal_unit(n: &Vector3<f64>) -> Vector3<f64> {
    let helper = least_parallel_axis(n);
    (helper - n * n.dot(&helper)).normalize()
}

/// World axis with the smallest absolute component in `n`; ties go to the lower index.
pub fn least_parallel_axis(n: &Vector3<f64>) -> Vector3<f64> {
    let mut best = 0;
    for i in 1..3 {
        if n[i].abs() < n[best].abs() {
            best = i;
        }
    }
    Vector3::ith(best, 1.0)
}

/// Rotate `v` about unit `axis` by `angle` radians.
pub fn rotate_about(v: &Vector3<f64>, axis: &Vector3<f64>, angle: f64) -> Vector3<f64> {
    Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), angle) * v
}
