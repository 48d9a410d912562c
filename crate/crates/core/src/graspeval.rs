//! Finger contact estimation against the cloud and ε wrench-space ranking.

use std::collections::HashSet;

use nalgebra::{DMatrix, Matrix6, Point3, Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::GraspType;
use crate::cloud::PointCloud;
use crate::decomposition::DecompTree;
use crate::error::{Error, Result};
use crate::geometry::{orthogonal_unit, rotate_about};
use crate::sampler::{GripperConfig, PreGrasp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspEvalParams {
    /// Edges per discretized friction cone.
    pub cone_edges: usize,
    /// Sampled directions for the ε estimate.
    pub quality_dirs: usize,
    /// Radius of the finger tube (m).
    pub tube_radius: f64,
}

impl Default for GraspEvalParams {
    fn default() -> Self {
        Self {
            cone_edges: 8,
            quality_dirs: 2048,
            tube_radius: 0.005,
        }
    }
}

impl GraspEvalParams {
    pub fn validate(&self) -> Result<()> {
        if self.cone_edges < 3 {
            return Err(Error::config("cone_edges", "must be at least 3"));
        }
        if self.quality_dirs < 64 {
            return Err(Error::config("quality_dirs", "must be at least 64"));
        }
        if !(self.tube_radius > 0.0 && self.tube_radius.is_finite()) {
            return Err(Error::config("tube_radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPoint {
    pub position: Point3<f64>,
    /// Unit inward normal, approximated as pointing at the source box center.
    pub normal: Vector3<f64>,
}

/// Primitive contact wrench; torque is divided by the torque scale ρ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
}

impl Wrench {
    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspCandidate {
    pub pool_index: usize,
    pub pregrasp: PreGrasp,
    pub contacts: Vec<ContactPoint>,
    pub quality: f64,
}

/// A finger closing line: the fingertip starts at `origin` and moves along unit `dir`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerRay {
    pub origin: Point3<f64>,
    pub dir: Vector3<f64>,
}

/// Closing rays of the fingers, thumb first.
///
/// The hand advances along the approach until the fingers close in the plane through
/// `target` (the part center). Around the point where that plane meets the approach line,
/// the thumb starts at `+closing·aperture/2` and closes along `−closing`. The two opposing
/// fingers start on the `−closing` side and are turned by `±spread` about the approach
/// axis; at 90° they face each other. Two-fingertip grasps have no thumb.
pub fn finger_rays(pg: &PreGrasp, g: &GripperConfig, target: &Point3<f64>) -> Vec<FingerRay> {
    let center = pg.position + pg.approach * (target - pg.position).dot(&pg.approach);
    let half = g.max_aperture / 2.0;
    let c = pg.closing_dir;
    let spread = pg.preshape.spread_angle.to_radians();
    let mut rays = Vec::with_capacity(3);
    if pg.grasp_type != GraspType::TwoFingertip {
        rays.push(FingerRay {
            origin: center + c * half,
            dir: -c,
        });
    }
    let gap = g.finger_spacing / 2.0 * spread.cos();
    for sign in [1.0, -1.0] {
        let dir = rotate_about(&c, &pg.approach, sign * spread);
        let side = pg.approach.cross(&dir);
        rays.push(FingerRay {
            origin: center - dir * half + side * (sign * gap),
            dir,
        });
    }
    rays
}

/// Cloud point hit first by a finger: among points within `tube_r` of the ray line and
/// not beyond the far end of the aperture, the one with the smallest ray parameter (index
/// breaks ties). Points behind the fingertip count, so a part wider than the aperture is
/// touched on its outer surface.
fn first_touch(points: &[Point3<f64>], ray: &FingerRay, reach: f64, tube_r: f64) -> Option<usize> {
    let r2 = tube_r * tube_r;
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d = p - ray.origin;
        let t = d.dot(&ray.dir);
        if t > reach || best.is_some_and(|(bt, _)| t >= bt) {
            continue;
        }
        if d.norm_squared() - t * t <= r2 {
            best = Some((t, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Contacts of the fingers of `pg` with `cloud`; normals point at `box_center`.
pub fn estimate_contacts(
    pg: &PreGrasp,
    cloud: &PointCloud,
    box_center: &Point3<f64>,
    g: &GripperConfig,
    tube_r: f64,
) -> Result<Vec<ContactPoint>> {
    let contacts: Vec<ContactPoint> = finger_rays(pg, g, box_center)
        .iter()
        .filter_map(|ray| first_touch(&cloud.points, ray, g.max_aperture, tube_r))
        .map(|i| {
            let position = cloud.points[i];
            let to_center = box_center - position;
            let normal = if to_center.norm() > 1e-12 {
                to_center.normalize()
            } else {
                (pg.approach).normalize()
            };
            ContactPoint { position, normal }
        })
        .collect();
    if contacts.is_empty() {
        Err(Error::NoContacts)
    } else {
        Ok(contacts)
    }
}

/// Largest distance of a contact from `centroid`, or 1 when all sit on it.
pub fn torque_scale(contacts: &[ContactPoint], centroid: &Point3<f64>) -> f64 {
    let rho = contacts
        .iter()
        .map(|c| (c.position - centroid).norm())
        .fold(0.0, f64::max);
    if rho > 0.0 {
        rho
    } else {
        1.0
    }
}

/// `m_edges` unit force edges per contact at half-angle `atan(μ)`, with their torques
/// about `centroid` divided by the torque scale.
///
/// The first edge of each cone lies in the plane spanned by the normal and the world axis
/// least parallel to it.
pub fn wrench_set(
    contacts: &[ContactPoint],
    mu: f64,
    m_edges: usize,
    centroid: &Point3<f64>,
) -> Vec<Wrench> {
    let rho = torque_scale(contacts, centroid);
    let mut out = Vec::with_capacity(contacts.len() * m_edges);
    for c in contacts {
        let n = c.normal.normalize();
        let e1 = orthogonal_unit(&n);
        let e2 = n.cross(&e1);
        let arm = c.position - centroid;
        for k in 0..m_edges {
            let phi = std::f64::consts::TAU * k as f64 / m_edges as f64;
            let (s, co) = phi.sin_cos();
            let force = (n + (e1 * co + e2 * s) * mu).normalize();
            out.push(Wrench {
                force,
                torque: arm.cross(&force) / rho,
            });
        }
    }
    out
}

/// Deterministic unit 6-vectors, uniform on the sphere. Any shorter request is a prefix of
/// a longer one with the same seed.
pub fn unit_directions(n: usize, seed: u64) -> Vec<Vector6<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let v = Vector6::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = v.norm();
        if norm > 1e-12 {
            out.push(v / norm);
        }
    }
    out
}

/// Largest `d·w` over the wrenches, with the indices of the six largest terms.
fn support(w: &[Vector6<f64>], d: &Vector6<f64>) -> (f64, [usize; 6]) {
    let mut top = [(f64::NEG_INFINITY, usize::MAX); 6];
    for (i, wi) in w.iter().enumerate() {
        let x = d.dot(wi);
        if x > top[5].0 {
            let mut k = 5;
            while k > 0 && x > top[k - 1].0 {
                top[k] = top[k - 1];
                k -= 1;
            }
            top[k] = (x, i);
        }
    }
    let mut idx = top.map(|(_, i)| i);
    idx.sort_unstable();
    (top[0].0, idx)
}

/// Support values above this are treated as zero-radius noise.
const EPS_FLOOR: f64 = 1e-12;
const REFINE_ITERS: usize = 12;
const MAX_PIVOTS: usize = 64;

/// Upper estimate of the ε quality: the radius of the largest origin-centered ball in the
/// convex hull of `wrenches`.
///
/// The support function `h(d) = max_i d·w_i` is evaluated on `n_dirs` seeded unit
/// directions. From each direction a few facet steps follow: the six wrenches with the
/// largest support define a hyperplane `a·w = 1`, and `h` is evaluated again along its
/// normal. Whenever such a hyperplane supports the hull, a local search over
/// neighbouring facets moves toward the origin. The estimate is the minimum of all
/// evaluated `h` and facet distances; it is 0 if the origin is found outside the hull or
/// the wrenches do not span the space. Every candidate bounds ε from above, so more
/// directions can only lower the estimate.
pub fn epsilon_quality(wrenches: &[Wrench], n_dirs: usize, seed: u64) -> Result<f64> {
    if wrenches.is_empty() {
        return Err(Error::EmptyWrenchSet);
    }
    if n_dirs < 64 {
        return Err(Error::config("quality_dirs", "must be at least 64"));
    }
    let w: Vec<Vector6<f64>> = wrenches.iter().map(Wrench::to_vector).collect();
    if w.len() < 6 || rank_deficient(&w) {
        return Ok(0.0);
    }

    let mut stepped: HashSet<[usize; 6]> = HashSet::new();
    let mut walked: HashSet<[usize; 6]> = HashSet::new();
    let mut best = f64::INFINITY;
    for d in unit_directions(n_dirs, seed) {
        let (h, mut active) = support(&w, &d);
        if h < 0.0 {
            return Ok(0.0);
        }
        best = best.min(h);
        for _ in 0..REFINE_ITERS {
            // The steps from an active set are deterministic, so a repeated set adds nothing.
            if !stepped.insert(active) {
                break;
            }
            let Some(a) = polar_point(&w, &active) else {
                break;
            };
            let dist = 1.0 / a.norm();
            let n = a * dist;
            let (h2, a2) = support(&w, &n);
            // Every wrench strictly on the far side of the plane through the origin.
            if h2 < 0.0 || support(&w, &-n).0 < 0.0 {
                return Ok(0.0);
            }
            best = best.min(h2);
            // The plane supports the hull: it holds a facet, and its neighbours may be closer.
            if h2 <= dist * (1.0 + 1e-9) {
                match facet_walk(&w, active, &mut walked) {
                    Walk::Outside => return Ok(0.0),
                    Walk::Facet(f) => best = best.min(f),
                    Walk::NotFacet | Walk::Seen => {}
                }
            }
            if a2 == active {
                break;
            }
            active = a2;
        }
    }
    Ok(if best <= EPS_FLOOR { 0.0 } else { best })
}

/// The `a` with `a·w_j = 1` for the six wrenches of `active`.
fn polar_point(w: &[Vector6<f64>], active: &[usize; 6]) -> Option<Vector6<f64>> {
    let m = Matrix6::from_fn(|r, c| w[active[r]][c]);
    let a = m.lu().solve(&Vector6::repeat(1.0))?;
    (a.iter().all(|x| x.is_finite()) && a.norm() > 0.0).then_some(a)
}

enum Walk {
    /// Smallest facet distance met on the way.
    Facet(f64),
    NotFacet,
    Seen,
    /// The hull has a facet through the origin or beyond it.
    Outside,
}

/// Local search over hull facets starting from the hyperplane through `basis`.
///
/// Works on the polar polytope `{a : a·w_i ≤ 1}`: its vertices are the facets of the
/// hull, at distance `1/|a|` from the origin. Each pivot swaps one wrench of the basis
/// along the polytope edge that increases `|a|` the most.
fn facet_walk(w: &[Vector6<f64>], start: [usize; 6], seen: &mut HashSet<[usize; 6]>) -> Walk {
    let mut basis = start;
    basis.sort_unstable();
    let mut result = Walk::Seen;
    for _ in 0..MAX_PIVOTS {
        if !seen.insert(basis) {
            break;
        }
        let Some(inv) = Matrix6::from_fn(|r, c| w[basis[r]][c]).try_inverse() else {
            return if matches!(result, Walk::Facet(_)) {
                result
            } else {
                Walk::NotFacet
            };
        };
        let a = inv * Vector6::repeat(1.0);
        if w.iter().any(|x| a.dot(x) > 1.0 + 1e-9) {
            return if matches!(result, Walk::Facet(_)) {
                result
            } else {
                Walk::NotFacet
            };
        }
        let dist = 1.0 / a.norm();
        result = match result {
            Walk::Facet(d) => Walk::Facet(d.min(dist)),
            _ => Walk::Facet(dist),
        };
        let mut next: Option<(f64, [usize; 6])> = None;
        for j in 0..6 {
            // Leave constraint j, keep the other five tight.
            let e = -inv.column(j);
            let mut step: Option<(f64, usize)> = None;
            for (i, x) in w.iter().enumerate() {
                let rate = e.dot(x);
                if rate > 1e-12 && !basis.contains(&i) {
                    let t = ((1.0 - a.dot(x)) / rate).max(0.0);
                    if step.is_none_or(|(bt, _)| t < bt) {
                        step = Some((t, i));
                    }
                }
            }
            let Some((t, i)) = step else {
                return Walk::Outside;
            };
            let reach = (a + e * t).norm_squared();
            if reach > a.norm_squared() * (1.0 + 1e-12) && next.is_none_or(|(r, _)| reach > r) {
                let mut b = basis;
                b[j] = i;
                b.sort_unstable();
                next = Some((reach, b));
            }
        }
        match next {
            Some((_, b)) => basis = b,
            None => break,
        }
    }
    result
}

fn rank_deficient(w: &[Vector6<f64>]) -> bool {
    let m = DMatrix::from_fn(6, w.len(), |r, c| w[c][r]);
    let sv = m.singular_values();
    let max = sv.max();
    max <= 0.0 || sv.min() <= 1e-9 * max
}

/// Contacts and ε for one pre-grasp; no contacts means quality 0.
pub fn evaluate(
    pg: &PreGrasp,
    cloud: &PointCloud,
    tree: &DecompTree,
    g: &GripperConfig,
    p: &GraspEvalParams,
    seed: u64,
) -> Result<(Vec<ContactPoint>, f64)> {
    let center = tree.node(pg.source_node).bbox.center;
    let contacts = match estimate_contacts(pg, cloud, &center, g, p.tube_radius) {
        Ok(c) => c,
        Err(Error::NoContacts) => return Ok((Vec::new(), 0.0)),
        Err(e) => return Err(e),
    };
    if contacts.len() < 2 {
        return Ok((contacts, 0.0));
    }
    let ws = wrench_set(&contacts, g.friction_mu, p.cone_edges, &cloud.centroid());
    let q = epsilon_quality(&ws, p.quality_dirs, seed)?;
    Ok((contacts, q))
}

/// Evaluate every pre-grasp and sort by quality, then contact count (both descending),
/// then pool index.
pub fn rank_pool(
    pool: &[PreGrasp],
    cloud: &PointCloud,
    tree: &DecompTree,
    g: &GripperConfig,
    p: &GraspEvalParams,
    seed: u64,
) -> Result<Vec<GraspCandidate>> {
    let mut ranked = pool
        .par_iter()
        .enumerate()
        .map(|(i, pg)| {
            let (contacts, quality) = evaluate(pg, cloud, tree, g, p, seed)?;
            Ok(GraspCandidate {
                pool_index: i,
                pregrasp: *pg,
                contacts,
                quality,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    sort_candidates(&mut ranked);
    Ok(ranked)
}

pub fn sort_candidates(c: &mut [GraspCandidate]) {
    c.sort_by(|a, b| {
        b.quality
            .total_cmp(&a.quality)
            .then(b.contacts.len().cmp(&a.contacts.len()))
            .then(a.pool_index.cmp(&b.pool_index))
    });
}
