//! Stage sequencing: run the pipeline up to a stage, or resume from a saved document.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{classify, pca, ClassifierThresholds, GraspType, ShapeCategory};
use crate::cloud::{load_cloud, CloudFormat, PointCloud};
use crate::decomposition::{decompose, DecompParams, DecompTree};
use crate::document::{
    ClassRecord, FreeSubfaceCounts, MaskRecord, PoolRecord, RankingRecord, RunDocument, TreeRecord,
};
use crate::error::{Error, Result};
use crate::facemask::{compute_face_states, free_subface_count, BlockingParams, FaceMask};
use crate::graspeval::{rank_pool, GraspEvalParams};
use crate::sampler::{generate_pool, GripperConfig, PreGrasp, SamplingParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Decompose,
    Classify,
    Mask,
    Sample,
    Rank,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Decompose,
        Stage::Classify,
        Stage::Mask,
        Stage::Sample,
        Stage::Rank,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Decompose => "decompose",
            Stage::Classify => "classify",
            Stage::Mask => "mask",
            Stage::Sample => "sample",
            Stage::Rank => "rank",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::config("stage", format!("unknown stage '{s}'")))
    }
}

/// Everything a run depends on; echoed into the run document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub input: PathBuf,
    /// Taken from the input extension when absent.
    pub format: Option<CloudFormat>,
    pub decomposition: DecompParams,
    pub classifier: ClassifierThresholds,
    pub gripper: GripperConfig,
    pub sampling: SamplingParams,
    pub grasp_eval: GraspEvalParams,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>) -> Self {
        Self {
            input: input.into(),
            format: None,
            decomposition: DecompParams::default(),
            classifier: ClassifierThresholds::default(),
            gripper: GripperConfig::default(),
            sampling: SamplingParams::default(),
            grasp_eval: GraspEvalParams::default(),
            output: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.decomposition.validate()?;
        self.classifier.validate()?;
        self.gripper.validate()?;
        self.sampling.validate()?;
        self.grasp_eval.validate()
    }

    pub fn cloud_format(&self) -> CloudFormat {
        self.format
            .unwrap_or_else(|| CloudFormat::from_path(&self.input))
    }

    pub fn blocking(&self) -> BlockingParams {
        BlockingParams {
            depth: self.gripper.finger_length,
            ..BlockingParams::default()
        }
    }
}

/// Typed results of the stages run so far.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub config: RunConfig,
    pub cloud: PointCloud,
    pub tree: Option<DecompTree>,
    pub classes: Option<Vec<ClassRecord>>,
    pub masks: Option<Vec<FaceMask>>,
    pub pool: Option<Vec<PreGrasp>>,
    pub document: RunDocument,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn missing(what: &str) -> Error {
    Error::InvalidDocument(format!("{what} stage output is missing"))
}

impl PipelineState {
    /// Validate the configuration and load its input cloud.
    pub fn start(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let cloud = load_cloud(&config.input, config.cloud_format())?;
        Ok(Self::with_cloud(config, cloud))
    }

    /// Start from an already loaded cloud; the configuration's input path is only echoed.
    pub fn with_cloud(config: RunConfig, cloud: PointCloud) -> Self {
        Self {
            document: RunDocument::new(config.clone()),
            config,
            cloud,
            tree: None,
            classes: None,
            masks: None,
            pool: None,
        }
    }

    /// Rebuild the state recorded in `doc` over `cloud`.
    pub fn from_document(doc: RunDocument, cloud: PointCloud) -> Result<Self> {
        doc.validate()?;
        doc.config.validate()?;
        let mut st = Self::with_cloud(doc.config.clone(), cloud);
        if let Some(t) = &doc.tree {
            let tree = DecompTree::replay(t.to_nodes()?, &st.cloud)?;
            for (n, r) in tree.nodes.iter().zip(&t.nodes) {
                if n.point_count() != r.point_count {
                    return Err(Error::InvalidDocument(format!(
                        "node {} holds {} points of this cloud, the document says {}",
                        n.id,
                        n.point_count(),
                        r.point_count
                    )));
                }
            }
            st.tree = Some(tree);
        }
        st.classes = doc.classifications.clone();
        st.masks = doc
            .masks
            .as_ref()
            .map(|m| m.iter().map(|r| r.matrix).collect());
        st.pool = doc
            .pool
            .as_ref()
            .map(|p| {
                p.iter()
                    .map(PoolRecord::to_pregrasp)
                    .collect::<Result<Vec<_>>>()
            })
            .transpose()?;
        st.document = doc;
        Ok(st)
    }

    pub fn last_stage(&self) -> Option<Stage> {
        self.document.last_stage()
    }

    fn class_pairs(&self) -> Result<Vec<(ShapeCategory, GraspType)>> {
        Ok(self
            .classes
            .as_ref()
            .ok_or_else(|| missing("classify"))?
            .iter()
            .map(|c| (c.category, c.grasp_type))
            .collect())
    }

    fn tree(&self) -> Result<&DecompTree> {
        self.tree.as_ref().ok_or_else(|| missing("decompose"))
    }

    /// Run one stage on top of the stages already present.
    pub fn run_stage(&mut self, stage: Stage) -> Result<()> {
        let t0 = Instant::now();
        let cfg = &self.config;
        match stage {
            Stage::Decompose => {
                let tree = decompose(&self.cloud, &cfg.decomposition)?;
                log::info!(
                    "decomposition: {} nodes, {} leaves",
                    tree.len(),
                    tree.leaves().count()
                );
                self.document.tree = Some(TreeRecord::from(&tree));
                self.tree = Some(tree);
            }
            Stage::Classify => {
                let tree = self.tree()?;
                let records = tree
                    .nodes
                    .par_iter()
                    .map(|n| {
                        let p = pca(&self.cloud.select(&n.point_indices))?;
                        let (category, grasp_type) = classify(&p, &n.bbox.dims(), &cfg.classifier);
                        Ok(ClassRecord {
                            node_id: n.id,
                            lambdas: p.eigenvalues,
                            category,
                            grasp_type,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                self.document.classifications = Some(records.clone());
                self.classes = Some(records);
            }
            Stage::Mask => {
                let tree = self.tree()?;
                let blocking = cfg.blocking();
                let masks: Vec<FaceMask> = (0..tree.len())
                    .into_par_iter()
                    .map(|id| FaceMask::from_states(compute_face_states(tree, id, &blocking)))
                    .collect();
                let records = masks
                    .iter()
                    .enumerate()
                    .map(|(id, m)| {
                        let h = tree.node(id).bbox.half_extents;
                        MaskRecord {
                            node_id: id,
                            matrix: *m,
                            free_subfaces: FreeSubfaceCounts {
                                cylindrical: free_subface_count(m, GraspType::Cylindrical, &h),
                                spherical: free_subface_count(m, GraspType::Spherical, &h),
                                three_fingertip: free_subface_count(
                                    m,
                                    GraspType::ThreeFingertip,
                                    &h,
                                ),
                                two_fingertip: free_subface_count(m, GraspType::TwoFingertip, &h),
                            },
                        }
                    })
                    .collect();
                self.document.masks = Some(records);
                self.masks = Some(masks);
            }
            Stage::Sample => {
                let classes = self.class_pairs()?;
                let tree = self.tree()?;
                let masks = self.masks.as_ref().ok_or_else(|| missing("mask"))?;
                let pool = generate_pool(tree, &classes, masks, &cfg.gripper, &cfg.sampling);
                log::info!("pre-grasp pool: {} poses", pool.len());
                self.document.pool = Some(pool.iter().map(PoolRecord::from).collect());
                self.pool = Some(pool);
            }
            Stage::Rank => {
                let tree = self.tree()?;
                let pool = self.pool.as_ref().ok_or_else(|| missing("sample"))?;
                let ranked = rank_pool(
                    pool,
                    &self.cloud,
                    tree,
                    &cfg.gripper,
                    &cfg.grasp_eval,
                    cfg.seed,
                )?;
                if let Some(best) = ranked.first() {
                    log::info!(
                        "best pre-grasp: pool index {} with quality {:.6}",
                        best.pool_index,
                        best.quality
                    );
                }
                self.document.ranking = Some(RankingRecord::from_ranked(&ranked));
            }
        }
        let ms = elapsed_ms(t0);
        log::debug!("stage {stage} took {ms:.1} ms");
        *self.document.timings.slot(stage) = Some(ms);
        Ok(())
    }

    /// Run every missing stage up to and including `until`; later stages are dropped.
    pub fn run_until(&mut self, until: Stage) -> Result<()> {
        if self.last_stage().is_some_and(|s| s > until) {
            self.document.truncate(until);
        }
        for stage in Stage::ALL.into_iter().filter(|s| *s <= until) {
            if !self.document.has(stage) {
                self.run_stage(stage)?;
            }
        }
        Ok(())
    }
}

/// Load the configured input and run the pipeline through `until`.
pub fn run(config: RunConfig, until: Stage) -> Result<RunDocument> {
    let mut st = PipelineState::start(config)?;
    st.run_until(until)?;
    Ok(st.document)
}

/// Continue a saved run through `until`, reloading the input named in its configuration.
pub fn resume(doc: RunDocument, until: Stage) -> Result<RunDocument> {
    doc.config.validate()?;
    let cloud = load_cloud(&doc.config.input, doc.config.cloud_format())?;
    let mut st = PipelineState::from_document(doc, cloud)?;
    st.run_until(until)?;
    Ok(st.document)
}
