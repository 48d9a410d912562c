//! JSON record of one pipeline run.
//!
//! Floats are written in shortest round-trip form, so a saved document reloads to the
//! exact same values. Point memberships are not stored: a tree is rebuilt from its split
//! planes and the input cloud (see [`DecompTree::replay`]).

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::classifier::{GraspType, ShapeCategory};
use crate::decomposition::{DecompNode, DecompTree, SplitPlane};
use crate::error::{Error, Result};
use crate::facemask::{FaceId, FaceMask};
use crate::geometry::OrientedBox;
use crate::graspeval::{ContactPoint, GraspCandidate};
use crate::pipeline::{RunConfig, Stage};
use crate::sampler::{PreGrasp, Preshape};

fn arr(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

fn vec3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

fn finite(a: &[f64], what: &str) -> Result<()> {
    if a.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidDocument(format!(
            "non-finite value in {what}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRecord {
    pub center: [f64; 3],
    /// Row-major rotation matrix; its columns are the box axes U, V, W.
    pub rotation: [[f64; 3]; 3],
    pub half_extents: [f64; 3],
}

impl From<&OrientedBox> for BoxRecord {
    fn from(b: &OrientedBox) -> Self {
        let m = b.rotation.matrix();
        Self {
            center: arr(&b.center.coords),
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            half_extents: arr(&b.half_extents),
        }
    }
}

impl BoxRecord {
    pub fn to_box(&self) -> Result<OrientedBox> {
        let flat: Vec<f64> = self.rotation.iter().flatten().copied().collect();
        finite(&flat, "box rotation")?;
        finite(&self.center, "box center")?;
        finite(&self.half_extents, "box half extents")?;
        let m = Matrix3::from_row_slice(&flat);
        if (m.transpose() * m - Matrix3::identity()).norm() > 1e-6 || m.determinant() < 0.0 {
            return Err(Error::InvalidDocument(
                "box rotation is not a proper rotation".into(),
            ));
        }
        Ok(OrientedBox::new(
            Point3::from(vec3(self.center)),
            Rotation3::from_matrix_unchecked(m),
            vec3(self.half_extents),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub children: Option<[usize; 2]>,
    #[serde(rename = "box")]
    pub bbox: BoxRecord,
    pub point_count: usize,
    pub split: Option<SplitPlane>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub nodes: Vec<NodeRecord>,
}

impl From<&DecompTree> for TreeRecord {
    fn from(t: &DecompTree) -> Self {
        Self {
            nodes: t
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    parent: n.parent,
                    children: n.children,
                    bbox: BoxRecord::from(&n.bbox),
                    point_count: n.point_count(),
                    split: n.split,
                })
                .collect(),
        }
    }
}

impl TreeRecord {
    /// Nodes with empty memberships, ready for [`DecompTree::replay`].
    pub fn to_nodes(&self) -> Result<Vec<DecompNode>> {
        self.nodes
            .iter()
            .map(|n| {
                Ok(DecompNode {
                    id: n.id,
                    bbox: n.bbox.to_box()?,
                    point_indices: Vec::new(),
                    children: n.children,
                    parent: n.parent,
                    split: n.split,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub node_id: usize,
    /// PCA eigenvalues, largest first.
    pub lambdas: [f64; 3],
    pub category: ShapeCategory,
    pub grasp_type: GraspType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FreeSubfaceCounts {
    pub cylindrical: usize,
    pub spherical: usize,
    pub three_fingertip: usize,
    pub two_fingertip: usize,
}

impl FreeSubfaceCounts {
    pub fn get(&self, g: GraspType) -> usize {
        match g {
            GraspType::Cylindrical => self.cylindrical,
            GraspType::Spherical => self.spherical,
            GraspType::ThreeFingertip => self.three_fingertip,
            GraspType::TwoFingertip => self.two_fingertip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskRecord {
    pub node_id: usize,
    pub matrix: FaceMask,
    pub free_subfaces: FreeSubfaceCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub position: [f64; 3],
    pub approach: [f64; 3],
    pub closing_dir: [f64; 3],
    pub grasp_type: GraspType,
    pub spread_angle: f64,
    pub fingertip_mode: bool,
    pub source_node: usize,
    pub source_face: FaceId,
    pub source_cell: usize,
}

impl From<&PreGrasp> for PoolRecord {
    fn from(p: &PreGrasp) -> Self {
        Self {
            position: arr(&p.position.coords),
            approach: arr(&p.approach),
            closing_dir: arr(&p.closing_dir),
            grasp_type: p.grasp_type,
            spread_angle: p.preshape.spread_angle,
            fingertip_mode: p.preshape.fingertip_mode,
            source_node: p.source_node,
            source_face: p.source_face,
            source_cell: p.source_cell,
        }
    }
}

impl PoolRecord {
    pub fn to_pregrasp(&self) -> Result<PreGrasp> {
        finite(&self.position, "pool position")?;
        finite(&self.approach, "pool approach")?;
        finite(&self.closing_dir, "pool closing direction")?;
        Ok(PreGrasp {
            position: Point3::from(vec3(self.position)),
            approach: vec3(self.approach),
            closing_dir: vec3(self.closing_dir),
            grasp_type: self.grasp_type,
            preshape: Preshape {
                spread_angle: self.spread_angle,
                fingertip_mode: self.fingertip_mode,
            },
            source_node: self.source_node,
            source_face: self.source_face,
            source_cell: self.source_cell,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactRecord {
    pub position: [f64; 3],
    pub normal: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub pool_index: usize,
    pub contact_count: usize,
    pub contacts: Vec<ContactRecord>,
    pub quality: f64,
}

impl From<&GraspCandidate> for CandidateRecord {
    fn from(c: &GraspCandidate) -> Self {
        Self {
            pool_index: c.pool_index,
            contact_count: c.contacts.len(),
            contacts: c
                .contacts
                .iter()
                .map(|k| ContactRecord {
                    position: arr(&k.position.coords),
                    normal: arr(&k.normal),
                })
                .collect(),
            quality: c.quality,
        }
    }
}

impl CandidateRecord {
    pub fn to_candidate(&self, pool: &[PreGrasp]) -> Result<GraspCandidate> {
        let pregrasp = *pool.get(self.pool_index).ok_or_else(|| {
            Error::InvalidDocument(format!(
                "ranking refers to missing pool entry {}",
                self.pool_index
            ))
        })?;
        if self.contact_count != self.contacts.len() {
            return Err(Error::InvalidDocument(
                "contact_count disagrees with contacts".into(),
            ));
        }
        Ok(GraspCandidate {
            pool_index: self.pool_index,
            pregrasp,
            contacts: self
                .contacts
                .iter()
                .map(|k| ContactPoint {
                    position: Point3::from(vec3(k.position)),
                    normal: vec3(k.normal),
                })
                .collect(),
            quality: self.quality,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    /// Best first.
    pub candidates: Vec<CandidateRecord>,
    /// Pool index of the best candidate; absent for an empty pool.
    pub best_index: Option<usize>,
}

impl RankingRecord {
    pub fn from_ranked(ranked: &[GraspCandidate]) -> Self {
        Self {
            candidates: ranked.iter().map(CandidateRecord::from).collect(),
            best_index: ranked.first().map(|c| c.pool_index),
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decompose: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<f64>,
}

impl Timings {
    pub fn slot(&mut self, stage: Stage) -> &mut Option<f64> {
        match stage {
            Stage::Decompose => &mut self.decompose,
            Stage::Classify => &mut self.classify,
            Stage::Mask => &mut self.mask,
            Stage::Sample => &mut self.sample,
            Stage::Rank => &mut self.rank,
        }
    }

    pub fn total(&self) -> f64 {
        [
            self.decompose,
            self.classify,
            self.mask,
            self.sample,
            self.rank,
        ]
        .into_iter()
        .flatten()
        .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDocument {
    pub config: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<TreeRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifications: Option<Vec<ClassRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<Vec<MaskRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<PoolRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranking: Option<RankingRecord>,
    #[serde(default)]
    pub timings: Timings,
}

impl RunDocument {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            tree: None,
            classifications: None,
            masks: None,
            pool: None,
            ranking: None,
            timings: Timings::default(),
        }
    }

    fn present(&self) -> [bool; 5] {
        [
            self.tree.is_some(),
            self.classifications.is_some(),
            self.masks.is_some(),
            self.pool.is_some(),
            self.ranking.is_some(),
        ]
    }

    /// Last stage whose output is present.
    pub fn last_stage(&self) -> Option<Stage> {
        let n = self.present().iter().take_while(|&&p| p).count();
        n.checked_sub(1).map(|i| Stage::ALL[i])
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.present()[stage.index()]
    }

    /// Check that the stages present form a prefix of the pipeline order and that the
    /// per-node sections cover the tree.
    pub fn validate(&self) -> Result<()> {
        let present = self.present();
        let n = present.iter().take_while(|&&p| p).count();
        if present[n..].iter().any(|&p| p) {
            return Err(Error::InvalidDocument(format!(
                "stage '{}' is present but '{}' is missing",
                Stage::ALL[n + present[n..].iter().position(|&p| p).unwrap_or(0)],
                Stage::ALL[n]
            )));
        }
        let nodes = self.tree.as_ref().map_or(0, |t| t.nodes.len());
        if let Some(c) = &self.classifications {
            if c.len() != nodes || c.iter().enumerate().any(|(i, r)| r.node_id != i) {
                return Err(Error::InvalidDocument(
                    "classifications do not match the tree".into(),
                ));
            }
        }
        if let Some(m) = &self.masks {
            if m.len() != nodes || m.iter().enumerate().any(|(i, r)| r.node_id != i) {
                return Err(Error::InvalidDocument("masks do not match the tree".into()));
            }
            if m.iter()
                .any(|r| r.matrix.0.iter().flatten().any(|&b| b > 1) || !r.matrix.is_consistent())
            {
                return Err(Error::InvalidDocument("inconsistent face mask".into()));
            }
        }
        if let Some(p) = &self.pool {
            if p.iter().any(|r| r.source_node >= nodes) {
                return Err(Error::InvalidDocument(
                    "pool refers to a missing node".into(),
                ));
            }
        }
        if let (Some(r), Some(p)) = (&self.ranking, &self.pool) {
            let mut seen = vec![false; p.len()];
            for c in &r.candidates {
                if c.pool_index >= p.len() || std::mem::replace(&mut seen[c.pool_index], true) {
                    return Err(Error::InvalidDocument(
                        "ranking is not a permutation of the pool".into(),
                    ));
                }
            }
            if r.candidates.len() != p.len()
                || r.best_index != r.candidates.first().map(|c| c.pool_index)
            {
                return Err(Error::InvalidDocument(
                    "ranking is not a permutation of the pool".into(),
                ));
            }
        }
        Ok(())
    }

    /// Drop every stage after `stage`.
    pub fn truncate(&mut self, stage: Stage) {
        for s in Stage::ALL.iter().filter(|s| **s > stage) {
            match s {
                Stage::Decompose => self.tree = None,
                Stage::Classify => self.classifications = None,
                Stage::Mask => self.masks = None,
                Stage::Sample => self.pool = None,
                Stage::Rank => self.ranking = None,
            }
            *self.timings.slot(*s) = None;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RunDocument = serde_json::from_str(text)?;
        doc.validate()?;
        Ok(doc)
    }

    /// Write to `path` through a temporary file in the same directory and a rename.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_json(&text)
    }
}

/// Replace `path` with `bytes` so readers see either the old or the new content.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
