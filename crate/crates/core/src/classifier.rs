//! PCA shape classification of parts and the grasp type assigned to each class.

use std::fmt;

use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::centroid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcaResult {
    pub centroid: Point3<f64>,
    /// Variances along the principal axes, largest first (m²).
    pub eigenvalues: [f64; 3],
    /// Column `i` is the principal axis for `eigenvalues[i]`, signed so that its
    /// largest-magnitude component is positive.
    pub eigenvectors: Matrix3<f64>,
}

impl PcaResult {
    pub fn axis(&self, i: usize) -> Vector3<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// The principal axes as a right-handed rotation; the third axis is flipped if the
    /// sign convention left the basis left-handed.
    pub fn frame(&self) -> Rotation3<f64> {
        let u = self.axis(0);
        let v = self.axis(1);
        Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[u, v, u.cross(&v)]))
    }
}

/// Eigen-decomposition of the point covariance about the centroid.
pub fn pca(points: &[Point3<f64>]) -> Result<PcaResult> {
    if points.is_empty() {
        return Err(Error::DegenerateInput("no points".into()));
    }
    let c = centroid(points.iter());
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    cov /= points.len() as f64;
    // Variance at the level of centroid round-off means the points coincide.
    let scale = points.iter().map(|p| p.coords.norm()).fold(0.0, f64::max);
    if cov.trace() <= (16.0 * f64::EPSILON * scale).powi(2) {
        return Err(Error::DegenerateInput("all points coincide".into()));
    }

    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut eigenvalues = [0.0; 3];
    let mut vectors = [Vector3::zeros(); 3];
    for (k, &i) in order.iter().enumerate() {
        eigenvalues[k] = eig.eigenvalues[i].max(0.0);
        let mut v: Vector3<f64> = eig.eigenvectors.column(i).normalize();
        if v[v.iamax()] < 0.0 {
            v = -v;
        }
        vectors[k] = v;
    }
    Ok(PcaResult {
        centroid: c,
        eigenvalues,
        eigenvectors: Matrix3::from_columns(&vectors),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeCategory {
    OneDimensional,
    TwoDimensional,
    ThreeDimensionalLarge,
    ThreeDimensionalSmall,
}

impl ShapeCategory {
    pub fn grasp_type(self) -> GraspType {
        match self {
            ShapeCategory::OneDimensional => GraspType::Cylindrical,
            ShapeCategory::TwoDimensional => GraspType::ThreeFingertip,
            ShapeCategory::ThreeDimensionalLarge => GraspType::Spherical,
            ShapeCategory::ThreeDimensionalSmall => GraspType::TwoFingertip,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspType {
    Cylindrical,
    Spherical,
    ThreeFingertip,
    TwoFingertip,
}

impl GraspType {
    pub const ALL: [GraspType; 4] = [
        GraspType::Cylindrical,
        GraspType::Spherical,
        GraspType::ThreeFingertip,
        GraspType::TwoFingertip,
    ];
}

impl fmt::Display for GraspType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraspType::Cylindrical => "cylindrical",
            GraspType::Spherical => "spherical",
            GraspType::ThreeFingertip => "three_fingertip",
            GraspType::TwoFingertip => "two_fingertip",
        })
    }
}

/// Numeric cut-offs for the "much larger" and "about equal" eigenvalue relations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    /// λ1/λ2 at or above which a part counts as one-dimensional.
    pub tau_long: f64,
    /// λ2/λ3 at or above which a part counts as two-dimensional.
    pub tau_flat: f64,
    /// Largest box dimension (m) below which a 3-D part counts as small.
    pub s_small: f64,
}

impl Default for ClassifierThresholds {
    fn default() -> Self {
        Self {
            tau_long: 4.0,
            tau_flat: 4.0,
            s_small: 0.04,
        }
    }
}

impl ClassifierThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.tau_long.is_nan() || self.tau_long <= 1.0 {
            return Err(Error::config("tau_long", "must be greater than 1"));
        }
        if self.tau_flat.is_nan() || self.tau_flat <= 1.0 {
            return Err(Error::config("tau_flat", "must be greater than 1"));
        }
        if self.s_small.is_nan() || self.s_small <= 0.0 {
            return Err(Error::config("s_small", "must be positive"));
        }
        Ok(())
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        f64::INFINITY
    }
}

/// First matching rule wins: long, flat, small, otherwise large.
pub fn classify(
    pca: &PcaResult,
    extents: &Vector3<f64>,
    t: &ClassifierThresholds,
) -> (ShapeCategory, GraspType) {
    let [l1, l2, l3] = pca.eigenvalues;
    let category = if ratio(l1, l2) >= t.tau_long {
        ShapeCategory::OneDimensional
    } else if ratio(l2, l3) >= t.tau_flat {
        ShapeCategory::TwoDimensional
    } else if extents.max() < t.s_small {
        ShapeCategory::ThreeDimensionalSmall
    } else {
        ShapeCategory::ThreeDimensionalLarge
    };
    (category, category.grasp_type())
}
