//! Tree traversal gating and enclosing-surface sampling of approach poses.

use nalgebra::{Point3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{GraspType, ShapeCategory};
use crate::decomposition::{DecompNode, DecompTree};
use crate::error::{Error, Result};
use crate::facemask::{subfaces, FaceId, FaceMask, SubFace};
use crate::geometry::OrientedBox;

/// Simplified three-finger gripper geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperConfig {
    /// Widest opening between opposing fingertips (m).
    pub max_aperture: f64,
    pub finger_length: f64,
    /// Clearance between the palm origin and the enclosing sampling surface (m).
    pub standoff: f64,
    /// Largest sideways finger spread (degrees).
    pub spread_max: f64,
    pub friction_mu: f64,
    /// Sideways gap between the two opposing fingers at zero spread (m). It shrinks with
    /// the cosine of the spread, so fully spread fingers close on one line.
    pub finger_spacing: f64,
}

impl Default for GripperConfig {
    fn default() -> Self {
        Self {
            max_aperture: 0.10,
            finger_length: 0.08,
            standoff: 0.02,
            spread_max: 90.0,
            friction_mu: 0.5,
            finger_spacing: 0.03,
        }
    }
}

impl GripperConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("max_aperture", self.max_aperture),
            ("finger_length", self.finger_length),
            ("standoff", self.standoff),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(field, "must be a positive length"));
            }
        }
        if !(self.spread_max > 0.0 && self.spread_max <= 90.0) {
            return Err(Error::config("spread_max", "must be in (0, 90] degrees"));
        }
        if !(self.friction_mu >= 0.0 && self.friction_mu.is_finite()) {
            return Err(Error::config("friction_mu", "must be non-negative"));
        }
        if !(self.finger_spacing >= 0.0 && self.finger_spacing.is_finite()) {
            return Err(Error::config("finger_spacing", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preshape {
    /// Degrees.
    pub spread_angle: f64,
    pub fingertip_mode: bool,
}

impl Preshape {
    pub fn for_grasp(grasp: GraspType, g: &GripperConfig) -> Self {
        let (spread, fingertip) = match grasp {
            GraspType::Cylindrical => (0.0, false),
            GraspType::Spherical => (30.0, false),
            GraspType::ThreeFingertip => (0.0, true),
            GraspType::TwoFingertip => (90.0, true),
        };
        Preshape {
            spread_angle: f64::min(spread, g.spread_max),
            fingertip_mode: fingertip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreGrasp {
    /// Palm origin.
    pub position: Point3<f64>,
    /// Unit vector from the palm towards the object.
    pub approach: Vector3<f64>,
    /// Unit finger opposition axis, orthogonal to `approach`.
    pub closing_dir: Vector3<f64>,
    pub grasp_type: GraspType,
    pub preshape: Preshape,
    pub source_node: usize,
    pub source_face: FaceId,
    pub source_cell: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    /// Degrees.
    pub angular_step: f64,
    /// Meters.
    pub axial_step: f64,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            angular_step: 30.0,
            axial_step: 0.02,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.angular_step > 0.0 && self.angular_step <= 90.0) {
            return Err(Error::config("angular_step", "must be in (0, 90] degrees"));
        }
        if !(self.axial_step > 0.0 && self.axial_step.is_finite()) {
            return Err(Error::config("axial_step", "must be positive"));
        }
        Ok(())
    }
}

/// Relative slack on the aperture check so box-fit round-off does not reject exact fits.
const APERTURE_SLACK: f64 = 1e-9;

/// `ceil(x)` that ignores round-off just above an integer.
fn count(x: f64) -> usize {
    ((x - 1e-9).ceil() as usize).max(1)
}

fn sorted_dims(b: &OrientedBox) -> [f64; 3] {
    let mut d: [f64; 3] = b.dims().into();
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Nodes whose parts get sampled, in depth-first order (lower child first).
///
/// A node is taken when it is a leaf or has a small 3-D child, and its second-largest
/// box dimension fits the aperture. Otherwise its children are visited. The subtree of a
/// taken node is not visited.
pub fn select_nodes(
    tree: &DecompTree,
    classes: &[(ShapeCategory, GraspType)],
    g: &GripperConfig,
) -> Vec<usize> {
    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        let node = tree.node(id);
        let small_child = tree
            .children(id)
            .any(|c| classes[c.id].0 == ShapeCategory::ThreeDimensionalSmall);
        let fits = sorted_dims(&node.bbox)[1] <= g.max_aperture * (1.0 + APERTURE_SLACK);
        if (node.is_leaf() || small_child) && fits {
            out.push(id);
        } else if let Some([lo, hi]) = node.children {
            stack.push(hi);
            stack.push(lo);
        }
    }
    out
}

/// Point where the ray from the box center along local direction `d` leaves the box, and
/// the faces it lands on (more than one on edges and corners).
fn central_projection(h: &Vector3<f64>, d: &Vector3<f64>) -> (Vector3<f64>, Vec<FaceId>) {
    let ts: [f64; 3] = std::array::from_fn(|i| {
        if d[i].abs() > 0.0 {
            h[i] / d[i].abs()
        } else {
            f64::INFINITY
        }
    });
    let t = ts[0].min(ts[1]).min(ts[2]);
    let p = d * t;
    let faces = (0..3)
        .filter(|&i| ts[i] <= t * (1.0 + 1e-12))
        .map(|i| FaceId::from_axis(i, d[i] > 0.0))
        .collect();
    (p, faces)
}

/// First free sub-face (in face then cell order) whose closed rect holds the local surface
/// point `p`.
fn free_cell_at(
    p: &Vector3<f64>,
    faces: &[FaceId],
    cells: &[Vec<SubFace>; 6],
) -> Option<(FaceId, usize)> {
    let mut faces = faces.to_vec();
    faces.sort();
    for face in faces {
        let (sa, ta) = face.local_axes();
        let tol = 1e-9 * (1.0 + p.norm());
        for sub in &cells[face.index()] {
            let r = &sub.rect;
            let inside = p[sa] >= r.s0 - tol
                && p[sa] <= r.s1 + tol
                && p[ta] >= r.t0 - tol
                && p[ta] <= r.t1 + tol;
            if sub.free && inside {
                return Some((face, sub.cell));
            }
        }
    }
    None
}

fn scheme(mask: &FaceMask, grasp: GraspType, h: &Vector3<f64>) -> [Vec<SubFace>; 6] {
    FaceId::ALL.map(|f| subfaces(f, mask, grasp, h))
}

/// Unit component of `v` orthogonal to unit `a`, or `None` when `v` is (nearly) parallel.
fn orthogonal_part(v: &Vector3<f64>, a: &Vector3<f64>) -> Option<Vector3<f64>> {
    let p = v - a * a.dot(v);
    let n = p.norm();
    (n > 1e-6).then(|| p / n)
}

/// Enforce exact orthogonality after normalization round-off.
fn orthonormal_pair(approach: Vector3<f64>, closing: Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = approach.normalize();
    let c = (closing - a * a.dot(&closing)).normalize();
    (a, c)
}

struct Tagged {
    face: FaceId,
    cell: usize,
    pg: PreGrasp,
}

fn finish(mut v: Vec<Tagged>) -> Vec<PreGrasp> {
    // Stable: keeps generation order within a cell.
    v.sort_by_key(|t| (t.face, t.cell));
    v.into_iter().map(|t| t.pg).collect()
}

/// Directions on the unit sphere in box-local coordinates, pole along W.
///
/// Rings sit at polar angles `k·180/R` with `R = ceil(180/step)`; ring `k` carries
/// `ceil(360·sin θ / step)` evenly spaced azimuths from +U (one at each pole).
pub fn sphere_directions(angular_step: f64) -> Vec<Vector3<f64>> {
    let rings = count(180.0 / angular_step);
    let mut out = Vec::new();
    for k in 0..=rings {
        let theta = (k as f64 * 180.0 / rings as f64).to_radians();
        let n = if k == 0 || k == rings {
            1
        } else {
            count(360.0 * theta.sin() / angular_step)
        };
        for j in 0..n {
            let phi = (j as f64 * 360.0 / n as f64).to_radians();
            out.push(Vector3::new(
                theta.sin() * phi.cos(),
                theta.sin() * phi.sin(),
                theta.cos(),
            ));
        }
    }
    out
}

/// Poses on the sphere enclosing the box, one per grid direction that projects into a free
/// sub-face.
pub fn sample_spherical(
    node: &DecompNode,
    mask: &FaceMask,
    grasp: GraspType,
    g: &GripperConfig,
    s: &SamplingParams,
) -> Vec<PreGrasp> {
    let b = &node.bbox;
    let h = b.half_extents;
    let radius = h.norm() + g.standoff;
    let cells = scheme(mask, grasp, &h);
    let preshape = Preshape::for_grasp(grasp, g);
    let mut out = Vec::new();
    for d in sphere_directions(s.angular_step) {
        let (p, faces) = central_projection(&h, &d);
        let Some((face, cell)) = free_cell_at(&p, &faces, &cells) else {
            continue;
        };
        let outward = b.rotation * d;
        let approach = -outward;
        let closing = orthogonal_part(&b.axis(0), &approach)
            .or_else(|| orthogonal_part(&b.axis(1), &approach))
            .expect("box axes are orthonormal");
        let (approach, closing_dir) = orthonormal_pair(approach, closing);
        out.push(Tagged {
            face,
            cell,
            pg: PreGrasp {
                position: b.center + outward * radius,
                approach,
                closing_dir,
                grasp_type: grasp,
                preshape,
                source_node: node.id,
                source_face: face,
                source_cell: cell,
            },
        });
    }
    finish(out)
}

/// Poses on the cylinder enclosing the box about its longest axis U.
///
/// The lateral surface is sampled at `ceil(360/step)` azimuths from +V and at the centers
/// of `ceil(2·hu/axial_step)` rows; caps at a cell-centered `axial_step` grid.
pub fn sample_cylindrical(
    node: &DecompNode,
    mask: &FaceMask,
    g: &GripperConfig,
    s: &SamplingParams,
) -> Vec<PreGrasp> {
    let b = &node.bbox;
    let h = b.half_extents;
    let [u, v, w] = b.axes();
    let radius = (h.y * h.y + h.z * h.z).sqrt() + g.standoff;
    let cells = scheme(mask, GraspType::Cylindrical, &h);
    let preshape = Preshape::for_grasp(GraspType::Cylindrical, g);
    let mut out = Vec::new();
    let mut push = |face, cell, position, approach: Vector3<f64>, closing: Vector3<f64>| {
        let (approach, closing_dir) = orthonormal_pair(approach, closing);
        out.push(Tagged {
            face,
            cell,
            pg: PreGrasp {
                position,
                approach,
                closing_dir,
                grasp_type: GraspType::Cylindrical,
                preshape,
                source_node: node.id,
                source_face: face,
                source_cell: cell,
            },
        });
    };

    let rows = count(2.0 * h.x / s.axial_step);
    let n_phi = count(360.0 / s.angular_step);
    for j in 0..n_phi {
        let phi = (j as f64 * 360.0 / n_phi as f64).to_radians();
        let (sin, cos) = phi.sin_cos();
        for i in 0..rows {
            let x = -h.x + (i as f64 + 0.5) * 2.0 * h.x / rows as f64;
            let d = Vector3::new(0.0, cos, sin);
            let (mut p, faces) = central_projection(&h, &d);
            p.x = x;
            let Some((face, cell)) = free_cell_at(&p, &faces, &cells) else {
                continue;
            };
            let radial = v * cos + w * sin;
            let position = b.center + u * x + radial * radius;
            let approach = -radial;
            push(face, cell, position, approach, approach.cross(&u));
        }
    }

    let nv = count(2.0 * h.y / s.axial_step);
    let nw = count(2.0 * h.z / s.axial_step);
    for cap in [FaceId::PlusU, FaceId::MinusU] {
        if !cells[cap.index()][0].free {
            continue;
        }
        let sign = cap.sign();
        for i in 0..nv {
            let y = -h.y + (i as f64 + 0.5) * 2.0 * h.y / nv as f64;
            for k in 0..nw {
                let z = -h.z + (k as f64 + 0.5) * 2.0 * h.z / nw as f64;
                let position = b.center + u * (sign * (h.x + g.standoff)) + v * y + w * z;
                push(cap, 0, position, -u * sign, v);
            }
        }
    }
    finish(out)
}

/// Poses on the circle around the box in its UV plane; an azimuth is kept when the face
/// its outward direction aligns with best is free.
pub fn sample_circle(
    node: &DecompNode,
    mask: &FaceMask,
    g: &GripperConfig,
    s: &SamplingParams,
) -> Vec<PreGrasp> {
    let b = &node.bbox;
    let h = b.half_extents;
    let [u, v, w] = b.axes();
    let radius = (h.x * h.x + h.y * h.y).sqrt() + g.standoff;
    let preshape = Preshape::for_grasp(GraspType::ThreeFingertip, g);
    let n = count(360.0 / s.angular_step);
    let mut out = Vec::new();
    for k in 0..n {
        let phi = (k as f64 * 360.0 / n as f64).to_radians();
        let (sin, cos) = phi.sin_cos();
        let mut faces = Vec::with_capacity(2);
        if cos.abs() >= sin.abs() * (1.0 - 1e-12) {
            faces.push(FaceId::from_axis(0, cos > 0.0));
        }
        if sin.abs() >= cos.abs() * (1.0 - 1e-12) {
            faces.push(FaceId::from_axis(1, sin > 0.0));
        }
        faces.sort();
        let Some(face) = faces.into_iter().find(|&f| mask.face_free(f)) else {
            continue;
        };
        let radial = u * cos + v * sin;
        let (approach, closing_dir) = orthonormal_pair(-radial, w);
        out.push(Tagged {
            face,
            cell: 0,
            pg: PreGrasp {
                position: b.center + radial * radius,
                approach,
                closing_dir,
                grasp_type: GraspType::ThreeFingertip,
                preshape,
                source_node: node.id,
                source_face: face,
                source_cell: 0,
            },
        });
    }
    finish(out)
}

pub fn sample_node(
    node: &DecompNode,
    mask: &FaceMask,
    grasp: GraspType,
    g: &GripperConfig,
    s: &SamplingParams,
) -> Vec<PreGrasp> {
    match grasp {
        GraspType::Cylindrical => sample_cylindrical(node, mask, g, s),
        GraspType::Spherical | GraspType::TwoFingertip => sample_spherical(node, mask, grasp, g, s),
        GraspType::ThreeFingertip => sample_circle(node, mask, g, s),
    }
}

/// Pre-grasp pool over all selected nodes, ordered by node id, face, cell and sample.
pub fn generate_pool(
    tree: &DecompTree,
    classes: &[(ShapeCategory, GraspType)],
    masks: &[FaceMask],
    g: &GripperConfig,
    s: &SamplingParams,
) -> Vec<PreGrasp> {
    let mut nodes = select_nodes(tree, classes, g);
    nodes.sort_unstable();
    nodes
        .par_iter()
        .map(|&id| sample_node(tree.node(id), &masks[id], classes[id].1, g, s))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}
