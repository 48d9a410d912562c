//! Free and blocked box faces, the 6×5 face-mask matrix, and sub-face schemes.
//!
//! Every face carries a fixed local 2-D frame `(s, t)`: `s` runs from its Left neighbour
//! to its Right neighbour and `t` from Down to Up.
//!
//! | face | s (left → right) | t (down → up) |
//! |------|------------------|---------------|
//! | ±U   | −V → +V          | −W → +W       |
//! | ±V   | −W → +W          | −U → +U       |
//! | ±W   | −U → +U          | −V → +V       |

use std::fmt;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::classifier::GraspType;
use crate::decomposition::DecompTree;
use crate::geometry::{boxes_overlap, OrientedBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FaceId {
    PlusU,
    MinusU,
    PlusV,
    MinusV,
    PlusW,
    MinusW,
}

impl FaceId {
    pub const ALL: [FaceId; 6] = [
        FaceId::PlusU,
        FaceId::MinusU,
        FaceId::PlusV,
        FaceId::MinusV,
        FaceId::PlusW,
        FaceId::MinusW,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_axis(axis: usize, positive: bool) -> FaceId {
        FaceId::ALL[2 * axis + usize::from(!positive)]
    }

    /// Box axis the face is normal to (0 = U).
    pub fn axis(self) -> usize {
        self.index() / 2
    }

    pub fn sign(self) -> f64 {
        if self.index() % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn opposite(self) -> FaceId {
        FaceId::ALL[self.index() ^ 1]
    }

    /// Box axes of the face-local `s` and `t` directions.
    pub fn local_axes(self) -> (usize, usize) {
        let a = self.axis();
        ((a + 1) % 3, (a + 2) % 3)
    }

    /// Outward unit normal in box-local coordinates.
    pub fn local_normal(self) -> Vector3<f64> {
        Vector3::ith(self.axis(), self.sign())
    }

    pub fn outward_normal(self, bbox: &OrientedBox) -> Vector3<f64> {
        bbox.axis(self.axis()) * self.sign()
    }

    /// Half-sizes of the face along `s` and `t`.
    pub fn half_size(self, half_extents: &Vector3<f64>) -> (f64, f64) {
        let (s, t) = self.local_axes();
        (half_extents[s], half_extents[t])
    }

    /// World point at face-local coordinates `(s, t)`.
    pub fn point(self, bbox: &OrientedBox, s: f64, t: f64) -> Point3<f64> {
        let (sa, ta) = self.local_axes();
        let mut local = self.local_normal() * bbox.half_extents[self.axis()];
        local[sa] = s;
        local[ta] = t;
        bbox.to_world(&local)
    }
}

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Left,
    Down,
    Right,
    Up,
}

impl Direction {
    /// In face-mask column order.
    pub const ALL: [Direction; 4] = [
        Direction::Left,
        Direction::Down,
        Direction::Right,
        Direction::Up,
    ];
}

/// Face reached by leaving `face` towards `dir`.
pub fn adjacent_face(face: FaceId, dir: Direction) -> FaceId {
    let (s, t) = face.local_axes();
    match dir {
        Direction::Left => FaceId::from_axis(s, false),
        Direction::Right => FaceId::from_axis(s, true),
        Direction::Down => FaceId::from_axis(t, false),
        Direction::Up => FaceId::from_axis(t, true),
    }
}

/// Occlusion test settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockingParams {
    /// How far each face is extruded outward (m); defaults to the finger length.
    pub depth: f64,
    /// Interpenetration (m) below which two boxes count as merely touching.
    pub touch_tolerance: f64,
}

impl Default for BlockingParams {
    fn default() -> Self {
        Self {
            depth: 0.08,
            touch_tolerance: 1e-3,
        }
    }
}

/// Blocked state of each face of node `node_id`, indexed by [`FaceId::index`].
///
/// A face is blocked when the slab obtained by pushing it outward by `depth` overlaps any
/// leaf box that is not an ancestor or descendant of the node.
pub fn compute_face_states(
    tree: &DecompTree,
    node_id: usize,
    params: &BlockingParams,
) -> [bool; 6] {
    let bbox = tree.node(node_id).bbox;
    let neighbours: Vec<&OrientedBox> = tree
        .leaves()
        .filter(|leaf| !tree.related(leaf.id, node_id))
        .map(|leaf| &leaf.bbox)
        .collect();
    FaceId::ALL.map(|face| {
        let slab = bbox.face_slab(face.axis(), face.sign(), params.depth);
        neighbours
            .iter()
            .any(|other| boxes_overlap(&slab, other, params.touch_tolerance))
    })
}

/// Rows are faces in [`FaceId::ALL`] order; columns are (center, left, down, right, up).
/// 1 marks a blocked face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaceMask(pub [[u8; 5]; 6]);

impl FaceMask {
    pub fn from_states(blocked: [bool; 6]) -> Self {
        let mut m = [[0u8; 5]; 6];
        for face in FaceId::ALL {
            let row = &mut m[face.index()];
            row[0] = u8::from(blocked[face.index()]);
            for (col, dir) in Direction::ALL.iter().enumerate() {
                row[col + 1] = u8::from(blocked[adjacent_face(face, *dir).index()]);
            }
        }
        FaceMask(m)
    }

    pub fn face_free(&self, face: FaceId) -> bool {
        self.0[face.index()][0] == 0
    }

    pub fn adjacent_free(&self, face: FaceId, dir: Direction) -> bool {
        let col = 1 + Direction::ALL
            .iter()
            .position(|d| *d == dir)
            .expect("direction");
        self.0[face.index()][col] == 0
    }

    pub fn states(&self) -> [bool; 6] {
        std::array::from_fn(|i| self.0[i][0] != 0)
    }

    /// Every adjacency column agrees with the center column of the face it names.
    pub fn is_consistent(&self) -> bool {
        FaceId::ALL.iter().all(|&face| {
            Direction::ALL.iter().enumerate().all(|(col, &dir)| {
                self.0[face.index()][col + 1] == self.0[adjacent_face(face, dir).index()][0]
            })
        })
    }
}

impl From<[bool; 6]> for FaceMask {
    fn from(blocked: [bool; 6]) -> Self {
        FaceMask::from_states(blocked)
    }
}

/// Rectangle in face-local coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaceRect {
    pub s0: f64,
    pub s1: f64,
    pub t0: f64,
    pub t1: f64,
}

impl FaceRect {
    pub fn area(&self) -> f64 {
        (self.s1 - self.s0) * (self.t1 - self.t0)
    }

    /// Closed containment.
    pub fn contains(&self, s: f64, t: f64) -> bool {
        s >= self.s0 && s <= self.s1 && t >= self.t0 && t <= self.t1
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.s0 + self.s1) / 2.0, (self.t0 + self.t1) / 2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubFace {
    pub face: FaceId,
    pub cell: usize,
    pub rect: FaceRect,
    pub free: bool,
}

/// Split `[-h, h]` into three equal bands; returns band `i`.
fn third(h: f64, i: usize) -> (f64, f64) {
    let w = 2.0 * h / 3.0;
    let lo = -h + w * i as f64;
    // Pin the outer edges exactly so the bands tile the face.
    let hi = if i == 2 { h } else { lo + w };
    (lo, hi)
}

/// Sub-faces of `face` under the scheme for `grasp`.
///
/// * Cylindrical: faces containing the longest axis U get three strips along U; an end
///   strip also needs the cap face on its side free. Cap faces are one cell.
/// * Spherical and two-fingertip: a 3×3 grid, `cell = 3·row + col` with `col` along `s`
///   and `row` along `t`. Edge cells need the neighbour on their side free, corner cells
///   both neighbours.
/// * Three-fingertip: one cell per face.
///
/// Every cell also needs the face itself free.
pub fn subfaces(
    face: FaceId,
    mask: &FaceMask,
    grasp: GraspType,
    half_extents: &Vector3<f64>,
) -> Vec<SubFace> {
    let (hs, ht) = face.half_size(half_extents);
    let face_free = mask.face_free(face);
    let whole = FaceRect {
        s0: -hs,
        s1: hs,
        t0: -ht,
        t1: ht,
    };
    let single = || {
        vec![SubFace {
            face,
            cell: 0,
            rect: whole,
            free: face_free,
        }]
    };
    match grasp {
        GraspType::ThreeFingertip => single(),
        GraspType::Cylindrical => {
            if face.axis() == 0 {
                return single();
            }
            // U is `t` on V faces and `s` on W faces.
            let along_s = face.local_axes().0 == 0;
            let (low_dir, high_dir) = if along_s {
                (Direction::Left, Direction::Right)
            } else {
                (Direction::Down, Direction::Up)
            };
            (0..3)
                .map(|i| {
                    let rect = if along_s {
                        let (s0, s1) = third(hs, i);
                        FaceRect { s0, s1, ..whole }
                    } else {
                        let (t0, t1) = third(ht, i);
                        FaceRect { t0, t1, ..whole }
                    };
                    let free = face_free
                        && match i {
                            0 => mask.adjacent_free(face, low_dir),
                            2 => mask.adjacent_free(face, high_dir),
                            _ => true,
                        };
                    SubFace {
                        face,
                        cell: i,
                        rect,
                        free,
                    }
                })
                .collect()
        }
        GraspType::Spherical | GraspType::TwoFingertip => {
            let mut out = Vec::with_capacity(9);
            for row in 0..3 {
                for col in 0..3 {
                    let (s0, s1) = third(hs, col);
                    let (t0, t1) = third(ht, row);
                    let free = face_free
                        && (col != 0 || mask.adjacent_free(face, Direction::Left))
                        && (col != 2 || mask.adjacent_free(face, Direction::Right))
                        && (row != 0 || mask.adjacent_free(face, Direction::Down))
                        && (row != 2 || mask.adjacent_free(face, Direction::Up));
                    out.push(SubFace {
                        face,
                        cell: 3 * row + col,
                        rect: FaceRect { s0, s1, t0, t1 },
                        free,
                    });
                }
            }
            out
        }
    }
}

/// Sub-faces of all six faces, in face order.
pub fn all_subfaces(
    mask: &FaceMask,
    grasp: GraspType,
    half_extents: &Vector3<f64>,
) -> Vec<SubFace> {
    FaceId::ALL
        .iter()
        .flat_map(|&f| subfaces(f, mask, grasp, half_extents))
        .collect()
}

pub fn free_subface_count(mask: &FaceMask, grasp: GraspType, half_extents: &Vector3<f64>) -> usize {
    all_subfaces(mask, grasp, half_extents)
        .iter()
        .filter(|s| s.free)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::DecompNode;
    use nalgebra::Rotation3;

    fn states_from_bits(bits: u8) -> [bool; 6] {
        std::array::from_fn(|i| bits & (1 << i) != 0)
    }

    #[test]
    fn adjacency_convention_examples() {
        assert_eq!(adjacent_face(FaceId::PlusU, Direction::Up), FaceId::PlusW);
        assert_eq!(
            adjacent_face(FaceId::MinusW, Direction::Left),
            FaceId::MinusU
        );
        assert_eq!(
            adjacent_face(FaceId::PlusV, Direction::Down),
            FaceId::MinusU
        );
        assert_eq!(
            adjacent_face(FaceId::MinusV, Direction::Right),
            FaceId::PlusW
        );
    }

    #[test]
    fn adjacency_is_total_and_never_self_or_opposite() {
        for face in FaceId::ALL {
            let mut seen = Vec::new();
            for dir in Direction::ALL {
                let adj = adjacent_face(face, dir);
                assert_ne!(adj, face);
                assert_ne!(adj, face.opposite());
                seen.push(adj);
            }
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), 4, "{face}: four distinct neighbours");
        }
    }

    #[test]
    fn mask_extremes() {
        assert_eq!(FaceMask::from_states([false; 6]).0, [[0; 5]; 6]);
        assert_eq!(FaceMask::from_states([true; 6]).0, [[1; 5]; 6]);
    }

    #[test]
    fn only_minus_w_blocked() {
        let mut states = [false; 6];
        states[FaceId::MinusW.index()] = true;
        let m = FaceMask::from_states(states);
        for face in FaceId::ALL {
            let row = m.0[face.index()];
            assert_eq!(row[0], u8::from(face == FaceId::MinusW));
            for (col, dir) in Direction::ALL.iter().enumerate() {
                assert_eq!(
                    row[col + 1],
                    u8::from(adjacent_face(face, *dir) == FaceId::MinusW)
                );
            }
        }
        // ±U and ±V each see −W exactly once; ±W never do.
        let ones: usize = m.0.iter().flatten().map(|&b| b as usize).sum();
        assert_eq!(ones, 1 + 4);
    }

    #[test]
    fn every_state_vector_gives_a_consistent_mask() {
        for bits in 0u8..64 {
            let states = states_from_bits(bits);
            let m = FaceMask::from_states(states);
            assert!(m.is_consistent());
            assert_eq!(m.states(), states);
        }
    }

    #[test]
    fn spherical_up_neighbour_blocks_top_row() {
        let h = Vector3::new(0.05, 0.04, 0.03);
        let face = FaceId::PlusU;
        let up = adjacent_face(face, Direction::Up);
        let mut states = [false; 6];
        states[up.index()] = true;
        let subs = subfaces(
            face,
            &FaceMask::from_states(states),
            GraspType::Spherical,
            &h,
        );
        let blocked: Vec<usize> = subs.iter().filter(|s| !s.free).map(|s| s.cell).collect();
        assert_eq!(blocked, vec![6, 7, 8]);
    }

    #[test]
    fn all_free_spherical_has_nine_free_cells_per_face() {
        let h = Vector3::new(0.05, 0.04, 0.03);
        let m = FaceMask::default();
        for face in FaceId::ALL {
            let subs = subfaces(face, &m, GraspType::Spherical, &h);
            assert_eq!(subs.len(), 9);
            assert!(subs.iter().all(|s| s.free));
        }
    }

    #[test]
    fn cylindrical_cap_blocks_end_strips() {
        let h = Vector3::new(0.1, 0.02, 0.02);
        let mut states = [false; 6];
        states[FaceId::PlusU.index()] = true;
        let m = FaceMask::from_states(states);
        for face in [FaceId::PlusV, FaceId::MinusV, FaceId::PlusW, FaceId::MinusW] {
            let subs = subfaces(face, &m, GraspType::Cylindrical, &h);
            let free: Vec<bool> = subs.iter().map(|s| s.free).collect();
            assert_eq!(free, vec![true, true, false], "{face}");
            // Strip 2 is the +U end.
            let (s, t) = subs[2].rect.center();
            assert!(
                face.point(
                    &OrientedBox::new(Point3::origin(), Rotation3::identity(), h),
                    s,
                    t
                )
                .x > 0.0
            );
        }
        let caps = subfaces(FaceId::PlusU, &m, GraspType::Cylindrical, &h);
        assert_eq!(caps.len(), 1);
        assert!(!caps[0].free);
    }

    #[test]
    fn subfaces_tile_each_face() {
        let h = Vector3::new(0.07, 0.03, 0.011);
        for grasp in GraspType::ALL {
            for face in FaceId::ALL {
                let (hs, ht) = face.half_size(&h);
                let area: f64 = subfaces(face, &FaceMask::default(), grasp, &h)
                    .iter()
                    .map(|s| s.rect.area())
                    .sum();
                assert!((area - 4.0 * hs * ht).abs() <= 1e-9 * 4.0 * hs * ht);
            }
        }
    }

    #[test]
    fn blocking_more_faces_never_frees_subfaces() {
        let h = Vector3::new(0.07, 0.03, 0.011);
        for grasp in GraspType::ALL {
            for bits in 0u8..64 {
                let base =
                    free_subface_count(&FaceMask::from_states(states_from_bits(bits)), grasp, &h);
                for extra in 0..6 {
                    let more = bits | (1 << extra);
                    let n = free_subface_count(
                        &FaceMask::from_states(states_from_bits(more)),
                        grasp,
                        &h,
                    );
                    assert!(n <= base);
                }
            }
        }
    }

    fn leaf(id: usize, parent: Option<usize>, bbox: OrientedBox) -> DecompNode {
        DecompNode {
            id,
            bbox,
            point_indices: Vec::new(),
            children: None,
            parent,
            split: None,
        }
    }

    fn stacked() -> DecompTree {
        let h = Vector3::new(0.05, 0.04, 0.02);
        let r = Rotation3::identity();
        let root = OrientedBox::new(
            Point3::new(0.0, 0.0, 0.02),
            r,
            Vector3::new(0.05, 0.04, 0.04),
        );
        let bottom = OrientedBox::new(Point3::origin(), r, h);
        let top = OrientedBox::new(Point3::new(0.0, 0.0, 0.04), r, h);
        let mut root = leaf(0, None, root);
        root.children = Some([1, 2]);
        DecompTree {
            nodes: vec![root, leaf(1, Some(0), bottom), leaf(2, Some(0), top)],
        }
    }

    #[test]
    fn stacked_boxes_block_only_touching_faces() {
        let tree = stacked();
        let p = BlockingParams::default();
        let top = compute_face_states(&tree, 2, &p);
        let expected: [bool; 6] = std::array::from_fn(|i| i == FaceId::MinusW.index());
        assert_eq!(top, expected);
        let bottom = compute_face_states(&tree, 1, &p);
        let expected: [bool; 6] = std::array::from_fn(|i| i == FaceId::PlusW.index());
        assert_eq!(bottom, expected);
        // The root's own descendants never block it.
        assert_eq!(compute_face_states(&tree, 0, &p), [false; 6]);
    }

    #[test]
    fn single_node_is_unblocked() {
        let b = OrientedBox::new(
            Point3::origin(),
            Rotation3::identity(),
            Vector3::new(0.1, 0.05, 0.02),
        );
        let tree = DecompTree {
            nodes: vec![leaf(0, None, b)],
        };
        assert_eq!(
            compute_face_states(&tree, 0, &BlockingParams::default()),
            [false; 6]
        );
    }

    #[test]
    fn slab_overlap_is_symmetric() {
        let tree = stacked();
        let p = BlockingParams::default();
        let top = tree.node(2).bbox;
        let bottom = tree.node(1).bbox;
        for face in FaceId::ALL {
            let slab = top.face_slab(face.axis(), face.sign(), p.depth);
            assert_eq!(
                boxes_overlap(&slab, &bottom, p.touch_tolerance),
                boxes_overlap(&bottom, &slab, p.touch_tolerance)
            );
        }
    }
}
