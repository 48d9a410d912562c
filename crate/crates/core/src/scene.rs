//! Wireframe OBJ export of a run: node boxes and pre-grasp axis triads.
//!
//! Groups: `node_<id>` for boxes, `best` for the top-ranked pose, `top_<rank>` for the
//! following ranks up to `top_k`, and `pool` for all other poses.

use std::fmt::Write;

use nalgebra::{Point3, Vector3};

use crate::document::RunDocument;
use crate::error::{Error, Result};

/// Corner pairs of a box wireframe, using the corner order of
/// [`OrientedBox::corners`](crate::geometry::OrientedBox::corners).
const BOX_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

struct Obj {
    text: String,
    vertices: usize,
}

impl Obj {
    fn vertex(&mut self, p: &Point3<f64>) -> usize {
        let _ = writeln!(self.text, "v {} {} {}", p.x, p.y, p.z);
        self.vertices += 1;
        self.vertices
    }

    fn line(&mut self, a: usize, b: usize) {
        let _ = writeln!(self.text, "l {a} {b}");
    }

    fn group(&mut self, name: &str) {
        let _ = writeln!(self.text, "g {name}");
    }
}

/// OBJ text for `doc`; needs at least the decomposition stage.
pub fn export_obj(doc: &RunDocument, top_k: usize) -> Result<String> {
    let tree = doc.tree.as_ref().ok_or_else(|| {
        Error::InvalidDocument("nothing to export: the document has no tree".into())
    })?;
    let mut obj = Obj {
        text: String::from("# pregrasp scene\n"),
        vertices: 0,
    };
    for node in &tree.nodes {
        let b = node.bbox.to_box()?;
        obj.group(&format!("node_{}", node.id));
        let first = obj.vertices + 1;
        for c in b.corners() {
            obj.vertex(&c);
        }
        for (a, c) in BOX_EDGES {
            obj.line(first + a, first + c);
        }
    }

    let Some(pool) = &doc.pool else {
        return Ok(obj.text);
    };
    let mut rank_of = vec![None; pool.len()];
    if let Some(r) = &doc.ranking {
        for (rank, c) in r.candidates.iter().enumerate().take(top_k) {
            rank_of[c.pool_index] = Some(rank);
        }
    }
    let scale = doc.config.gripper.finger_length;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    // Ranked poses first, in rank order, then the rest of the pool.
    order.sort_by_key(|&i| (rank_of[i].unwrap_or(usize::MAX), i));
    let mut current = String::new();
    for i in order {
        let group = match rank_of[i] {
            Some(0) => "best".to_string(),
            Some(r) => format!("top_{}", r + 1),
            None => "pool".to_string(),
        };
        if group != current {
            obj.group(&group);
            current = group;
        }
        let p = pool[i].to_pregrasp()?;
        let third: Vector3<f64> = p.approach.cross(&p.closing_dir);
        let o = obj.vertex(&p.position);
        for (dir, len) in [(p.approach, 1.0), (p.closing_dir, 0.5), (third, 0.25)] {
            let tip = obj.vertex(&(p.position + dir * (len * scale)));
            obj.line(o, tip);
        }
    }
    Ok(obj.text)
}
