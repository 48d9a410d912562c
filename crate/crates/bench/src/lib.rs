//! Inputs shared by the benchmarks under `benches/`.

use pregrasp::cloud::synth_shape;
use pregrasp::{ContactPoint, Point3, PointCloud, Shape, Vector3};

/// Twisted dumbbell, the most split-heavy of the synthetic shapes.
pub fn dumbbell(n: usize) -> PointCloud {
    let shape = Shape::Dumbbell {
        bell: 0.06,
        neck_length: 0.06,
        neck_width: 0.015,
        twist: 45.0,
    };
    synth_shape(&shape, n, 1).expect("valid shape")
}

pub fn tilted_box(n: usize) -> Vec<Point3<f64>> {
    let cloud = synth_shape(
        &Shape::Box {
            size: [0.12, 0.07, 0.03],
        },
        n,
        2,
    )
    .expect("valid shape");
    let r = pregrasp::Rotation3::from_euler_angles(0.4, -0.9, 1.3);
    cloud.points.iter().map(|p| r * p).collect()
}

/// Three fingertips spread around a 5 cm sphere.
pub fn three_contacts() -> Vec<ContactPoint> {
    [
        Vector3::new(1.0, 0.0, 0.2),
        Vector3::new(-0.5, 0.8, -0.1),
        Vector3::new(-0.5, -0.8, 0.0),
    ]
    .iter()
    .map(|d| {
        let d = d.normalize();
        ContactPoint {
            position: Point3::from(d * 0.05),
            normal: -d,
        }
    })
    .collect()
}
