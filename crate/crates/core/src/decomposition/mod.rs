//! Fit-and-split box decomposition.
//!
//! The whole cloud is enclosed by an approximate minimum-volume box, which is then split
//! recursively by planes parallel to its faces. A node is split by the candidate plane that
//! minimizes the summed volume of the two child boxes, provided that sum is at most
//! `volume_ratio` times the parent volume and both children keep at least half of
//! `min_points`. Nodes with fewer than `min_points` points are never split.

mod mvbb;

use std::collections::VecDeque;
use std::fmt;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use mvbb::fit_obb;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geometry::OrientedBox;

/// Containment tolerance relative to the cloud diagonal.
pub const CONTAIN_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompParams {
    pub min_points: usize,
    pub volume_ratio: f64,
    pub planes_per_axis: usize,
    pub mvbb_refine_steps: usize,
}

impl Default for DecompParams {
    fn default() -> Self {
        Self {
            min_points: 500,
            volume_ratio: 0.9,
            planes_per_axis: 16,
            mvbb_refine_steps: 3,
        }
    }
}

impl DecompParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_points < 4 {
            return Err(Error::config("min_points", "must be at least 4"));
        }
        if !(self.volume_ratio > 0.0 && self.volume_ratio <= 1.0) {
            return Err(Error::config(
                "volume_ratio",
                format!("must be in (0, 1], got {}", self.volume_ratio),
            ));
        }
        if self.planes_per_axis == 0 {
            return Err(Error::config("planes_per_axis", "must be at least 1"));
        }
        Ok(())
    }

    /// Smallest point count a child may receive.
    pub fn min_child_points(&self) -> usize {
        self.min_points.div_ceil(2)
    }
}

/// Box axis of a split plane; U is the longest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitAxis {
    U,
    V,
    W,
}

impl SplitAxis {
    pub const ALL: [SplitAxis; 3] = [SplitAxis::U, SplitAxis::V, SplitAxis::W];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SplitAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Plane normal to a parent box axis, `offset` meters from the box center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitPlane {
    pub axis: SplitAxis,
    pub offset: f64,
}

impl SplitPlane {
    /// Signed distance of `p` to the plane, positive on the far side along the axis.
    #[inline]
    pub fn signed_distance(&self, parent: &OrientedBox, p: &Point3<f64>) -> f64 {
        (p - parent.center).dot(&parent.axis(self.axis.index())) - self.offset
    }

    /// True when `p` goes to the second child. Points on the plane go there too.
    #[inline]
    pub fn upper_side(&self, parent: &OrientedBox, p: &Point3<f64>) -> bool {
        self.signed_distance(parent, p) >= 0.0
    }
}

/// Candidate planes: `planes_per_axis` offsets per axis, uniformly spaced strictly
/// between the faces, in tie-break order (U, V, W, then ascending offset).
pub fn candidate_planes(parent: &OrientedBox, planes_per_axis: usize) -> Vec<SplitPlane> {
    let mut out = Vec::with_capacity(3 * planes_per_axis);
    for axis in SplitAxis::ALL {
        let h = parent.half_extents[axis.index()];
        for k in 1..=planes_per_axis {
            let offset = -h + 2.0 * h * k as f64 / (planes_per_axis + 1) as f64;
            out.push(SplitPlane { axis, offset });
        }
    }
    out
}

/// Outcome of splitting a point set by one plane.
#[derive(Debug, Clone)]
pub struct SplitEval {
    pub plane: SplitPlane,
    pub lower_box: OrientedBox,
    pub upper_box: OrientedBox,
    /// Positions (into the evaluated slice) of the points below the plane.
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
    pub summed_volume: f64,
}

pub fn evaluate_split(
    points: &[Point3<f64>],
    parent: &OrientedBox,
    plane: SplitPlane,
    refine_steps: usize,
) -> Result<SplitEval> {
    let (upper, lower): (Vec<usize>, Vec<usize>) =
        (0..points.len()).partition(|&i| plane.upper_side(parent, &points[i]));
    if lower.is_empty() || upper.is_empty() {
        return Err(Error::EmptySide);
    }
    let gather = |idx: &[usize]| idx.iter().map(|&i| points[i]).collect::<Vec<_>>();
    let lower_box = fit_obb(&gather(&lower), refine_steps)?;
    let upper_box = fit_obb(&gather(&upper), refine_steps)?;
    Ok(SplitEval {
        plane,
        summed_volume: lower_box.volume() + upper_box.volume(),
        lower_box,
        upper_box,
        lower,
        upper,
    })
}

/// Scan all candidate planes of a box and return the minimum-volume one if it is
/// accepted. `None` means the node is not dividable.
pub fn best_split_of(
    points: &[Point3<f64>],
    parent: &OrientedBox,
    params: &DecompParams,
) -> Option<SplitEval> {
    let evals: Vec<Option<SplitEval>> = candidate_planes(parent, params.planes_per_axis)
        .into_par_iter()
        .map(|plane| evaluate_split(points, parent, plane, params.mvbb_refine_steps).ok())
        .collect();
    // Sequential reduction in candidate order: earlier planes win ties.
    let best = evals
        .into_iter()
        .flatten()
        .fold(None::<SplitEval>, |acc, e| match acc {
            Some(a) if a.summed_volume <= e.summed_volume => Some(a),
            _ => Some(e),
        })?;
    let min_child = params.min_child_points();
    let accepted = best.summed_volume <= params.volume_ratio * parent.volume()
        && best.lower.len() >= min_child
        && best.upper.len() >= min_child;
    accepted.then_some(best)
}

/// Split decision for a leaf node of a tree built over `cloud`.
pub fn best_split(
    node: &DecompNode,
    cloud: &PointCloud,
    params: &DecompParams,
) -> Option<SplitPlane> {
    best_split_of(&cloud.select(&node.point_indices), &node.bbox, params).map(|e| e.plane)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompNode {
    pub id: usize,
    pub bbox: OrientedBox,
    pub point_indices: Vec<usize>,
    /// Lower child first.
    pub children: Option<[usize; 2]>,
    pub parent: Option<usize>,
    pub split: Option<SplitPlane>,
}

impl DecompNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    pub fn point_count(&self) -> usize {
        self.point_indices.len()
    }
}

/// Binary decomposition tree; node ids are breadth-first indices into `nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompTree {
    pub nodes: Vec<DecompNode>,
}

impl DecompTree {
    pub fn root(&self) -> &DecompNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: usize) -> &DecompNode {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaves(&self) -> impl Iterator<Item = &DecompNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn children(&self, id: usize) -> impl Iterator<Item = &DecompNode> {
        self.nodes[id]
            .children
            .into_iter()
            .flatten()
            .map(|c| &self.nodes[c])
    }

    /// Whether `a` is an ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut cur = self.nodes[b].parent;
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.nodes[p].parent;
        }
        false
    }

    /// Whether `a` and `b` lie on one root-to-leaf path (including `a == b`).
    pub fn related(&self, a: usize, b: usize) -> bool {
        a == b || self.is_ancestor(a, b) || self.is_ancestor(b, a)
    }

    /// Rebuild point memberships by replaying the recorded split planes over `cloud`.
    ///
    /// `nodes` must carry boxes, links and split planes; their `point_indices` are
    /// ignored and recomputed.
    pub fn replay(mut nodes: Vec<DecompNode>, cloud: &PointCloud) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidDocument("tree has no nodes".into()));
        }
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidDocument(format!(
                    "node at position {i} has id {}",
                    n.id
                )));
            }
            if n.children.is_some() != n.split.is_some() {
                return Err(Error::InvalidDocument(format!(
                    "node {i} has children without a split plane"
                )));
            }
            for c in n.children.into_iter().flatten() {
                if c <= i || c >= nodes.len() || nodes[c].parent != Some(i) {
                    return Err(Error::InvalidDocument(format!(
                        "node {i} has an inconsistent child {c}"
                    )));
                }
            }
        }
        nodes[0].point_indices = (0..cloud.len()).collect();
        for i in 0..nodes.len() {
            let (Some([lo, hi]), Some(plane)) = (nodes[i].children, nodes[i].split) else {
                continue;
            };
            let parent_box = nodes[i].bbox;
            let (upper, lower): (Vec<usize>, Vec<usize>) = nodes[i]
                .point_indices
                .iter()
                .partition(|&&k| plane.upper_side(&parent_box, &cloud.points[k]));
            nodes[lo].point_indices = lower;
            nodes[hi].point_indices = upper;
        }
        Ok(Self { nodes })
    }
}

/// Build the decomposition tree of `cloud`.
pub fn decompose(cloud: &PointCloud, params: &DecompParams) -> Result<DecompTree> {
    params.validate()?;
    let root_box = fit_obb(&cloud.points, params.mvbb_refine_steps)?;
    let mut nodes = vec![DecompNode {
        id: 0,
        bbox: root_box,
        point_indices: (0..cloud.len()).collect(),
        children: None,
        parent: None,
        split: None,
    }];
    let mut queue = VecDeque::from([0usize]);
    while let Some(id) = queue.pop_front() {
        if nodes[id].point_count() < params.min_points {
            continue;
        }
        let points = cloud.select(&nodes[id].point_indices);
        let Some(eval) = best_split_of(&points, &nodes[id].bbox, params) else {
            continue;
        };
        log::debug!(
            "node {id}: split {} at {:.4} ({} / {} points, volume ratio {:.3})",
            eval.plane.axis,
            eval.plane.offset,
            eval.lower.len(),
            eval.upper.len(),
            eval.summed_volume / nodes[id].bbox.volume()
        );
        let to_global = |local: &[usize]| -> Vec<usize> {
            local.iter().map(|&i| nodes[id].point_indices[i]).collect()
        };
        let lower = to_global(&eval.lower);
        let upper = to_global(&eval.upper);
        let (a, b) = (nodes.len(), nodes.len() + 1);
        for (child, bbox, idx) in [(a, eval.lower_box, lower), (b, eval.upper_box, upper)] {
            nodes.push(DecompNode {
                id: child,
                bbox,
                point_indices: idx,
                children: None,
                parent: Some(id),
                split: None,
            });
            queue.push_back(child);
        }
        nodes[id].children = Some([a, b]);
        nodes[id].split = Some(eval.plane);
    }
    Ok(DecompTree { nodes })
}
