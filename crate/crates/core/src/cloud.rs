//! Point clouds: loading from XYZ / ASCII PLY / OBJ, synthetic fixtures, and XYZ output.

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Point3, Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Minimum number of points accepted by the pipeline.
pub const MIN_CLOUD_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub source_name: String,
}

impl PointCloud {
    /// Validates the invariants: at least four points, all finite, non-zero extent.
    pub fn new(points: Vec<Point3<f64>>, source_name: impl Into<String>) -> Result<Self> {
        if points.len() < MIN_CLOUD_POINTS {
            return Err(Error::EmptyCloud {
                count: points.len(),
            });
        }
        if let Some(i) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite()))
        {
            return Err(Error::DegenerateInput(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        let cloud = Self {
            points,
            source_name: source_name.into(),
        };
        let diagonal = cloud.diagonal();
        if diagonal.is_nan() || diagonal <= 0.0 {
            return Err(Error::DegenerateInput("all points coincide".into()));
        }
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point3<f64> {
        centroid(self.points.iter())
    }

    pub fn bounds(&self) -> (Point3<f64>, Point3<f64>) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    /// Length of the axis-aligned bounding box diagonal.
    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.bounds();
        (hi - lo).norm()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<Point3<f64>> {
        indices.iter().map(|&i| self.points[i]).collect()
    }
}

pub(crate) fn centroid<'a>(points: impl Iterator<Item = &'a Point3<f64>>) -> Point3<f64> {
    let mut sum = Vector3::zeros();
    let mut n = 0usize;
    for p in points {
        sum += p.coords;
        n += 1;
    }
    Point3::from(sum / n.max(1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    ObjVertices,
}

impl CloudFormat {
    /// Guess the format from the file extension; unknown extensions read as XYZ.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("ply") => CloudFormat::PlyAscii,
            Some("obj") => CloudFormat::ObjVertices,
            _ => CloudFormat::Xyz,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudFormat::Xyz),
            "ply" | "ply_ascii" => Ok(CloudFormat::PlyAscii),
            "obj" | "obj_vertices" => Ok(CloudFormat::ObjVertices),
            other => Err(format!(
                "unknown cloud format `{other}` (expected xyz, ply or obj)"
            )),
        }
    }
}

impl fmt::Display for CloudFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudFormat::Xyz => "xyz",
            CloudFormat::PlyAscii => "ply",
            CloudFormat::ObjVertices => "obj",
        })
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::FileNotFound(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    let points = parse_cloud(&text, format)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloud::new(points, name)
}

/// Parse the point records of `text`, in file order.
pub fn parse_cloud(text: &str, format: CloudFormat) -> Result<Vec<Point3<f64>>> {
    match format {
        CloudFormat::Xyz => parse_xyz(text),
        CloudFormat::PlyAscii => parse_ply(text),
        CloudFormat::ObjVertices => parse_obj(text),
    }
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        reason: reason.into(),
    }
}

fn parse_coord(tok: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what} coordinate")))?;
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite coordinate `{tok}`")));
    }
    Ok(v)
}

fn parse_xyz_tokens<'a>(
    mut toks: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Point3<f64>> {
    let x = parse_coord(toks.next(), line, "x")?;
    let y = parse_coord(toks.next(), line, "y")?;
    let z = parse_coord(toks.next(), line, "z")?;
    Ok(Point3::new(x, y, z))
}

fn parse_xyz(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        // Extra columns (normals, colors) are ignored.
        out.push(parse_xyz_tokens(content.split_whitespace(), i + 1)?);
    }
    Ok(out)
}

fn parse_obj(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let mut toks = raw.split_whitespace();
        if toks.next() == Some("v") {
            out.push(parse_xyz_tokens(toks, i + 1)?);
        }
    }
    Ok(out)
}

struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<String>,
    has_list: bool,
}

fn parse_ply(text: &str) -> Result<Vec<Point3<f64>>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(parse_err(n, "missing `ply` magic")),
        None => return Err(parse_err(1, "empty file")),
    }

    let mut elements: Vec<PlyElement> = Vec::new();
    let mut saw_format = false;
    loop {
        let (n, line) = lines
            .next()
            .ok_or_else(|| parse_err(0, "header not terminated by end_header"))?;
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("format") => {
                match (toks.next(), toks.next()) {
                    (Some("ascii"), Some("1.0")) => {}
                    (Some(f), _) if f.starts_with("binary") => {
                        return Err(parse_err(
                            n,
                            "binary PLY is not supported; convert to ASCII",
                        ))
                    }
                    _ => return Err(parse_err(n, format!("unsupported format line `{line}`"))),
                }
                saw_format = true;
            }
            Some("element") => {
                let name = toks
                    .next()
                    .ok_or_else(|| parse_err(n, "element without a name"))?
                    .to_string();
                let count = toks
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(n, "element without a valid count"))?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                    has_list: false,
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(n, "property before any element"))?;
                let rest: Vec<&str> = toks.collect();
                if rest.first() == Some(&"list") {
                    el.has_list = true;
                    el.properties
                        .push(rest.last().copied().unwrap_or("").to_string());
                } else if rest.len() == 2 {
                    el.properties.push(rest[1].to_string());
                } else {
                    return Err(parse_err(n, format!("malformed property line `{line}`")));
                }
            }
            Some("end_header") => break,
            Some("comment") | Some("obj_info") | None => {}
            Some(other) => {
                return Err(parse_err(n, format!("unexpected header keyword `{other}`")))
            }
        }
    }
    if !saw_format {
        return Err(parse_err(1, "missing format line"));
    }

    let mut out = Vec::new();
    let mut body = lines.filter(|(_, l)| !l.is_empty());
    for el in &elements {
        if el.name != "vertex" {
            for _ in 0..el.count {
                body.next().ok_or_else(|| {
                    parse_err(0, format!("unexpected end of file in `{}`", el.name))
                })?;
            }
            continue;
        }
        if el.has_list {
            return Err(parse_err(
                0,
                "list properties on vertices are not supported",
            ));
        }
        let idx = |name: &str| {
            el.properties
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| parse_err(0, format!("vertex element has no `{name}` property")))
        };
        let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
        out.reserve(el.count);
        for _ in 0..el.count {
            let (n, line) = body
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of file in vertex data"))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != el.properties.len() {
                return Err(parse_err(
                    n,
                    format!(
                        "expected {} values, found {}",
                        el.properties.len(),
                        toks.len()
                    ),
                ));
            }
            out.push(Point3::new(
                parse_coord(Some(toks[ix]), n, "x")?,
                parse_coord(Some(toks[iy]), n, "y")?,
                parse_coord(Some(toks[iz]), n, "z")?,
            ));
        }
    }
    Ok(out)
}

/// Write one `x y z` line per point. Values use the shortest exact representation.
pub fn write_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

/// Synthetic test objects. All lengths are full extents in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Axis-aligned box centered at the origin.
    Box {
        size: [f64; 3],
    },
    Sphere {
        radius: f64,
    },
    /// Closed cylinder along z, centered at the origin.
    Cylinder {
        length: f64,
        radius: f64,
    },
    /// Thin box; `size[2]` is the thickness.
    Plate {
        size: [f64; 3],
    },
    /// Two cubic bells of side `bell` joined along x by a square neck; the +x bell is
    /// turned by `twist` degrees about the neck axis.
    Dumbbell {
        bell: f64,
        neck_length: f64,
        neck_width: f64,
        twist: f64,
    },
    /// Two `length × width × thickness` bars, the second standing on the end of the first.
    LShape {
        length: f64,
        width: f64,
        thickness: f64,
    },
}

impl Shape {
    fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::BadDimension(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        match *self {
            Shape::Box { size } | Shape::Plate { size } => {
                for (n, v) in ["x", "y", "z"].iter().zip(size) {
                    check(n, v)?;
                }
            }
            Shape::Sphere { radius } => check("radius", radius)?,
            Shape::Cylinder { length, radius } => {
                check("length", length)?;
                check("radius", radius)?;
            }
            Shape::Dumbbell {
                bell,
                neck_length,
                neck_width,
                twist,
            } => {
                check("bell", bell)?;
                if !twist.is_finite() {
                    return Err(Error::BadDimension(format!(
                        "twist must be finite, got {twist}"
                    )));
                }
                check("neck_length", neck_length)?;
                check("neck_width", neck_width)?;
                if neck_width >= bell {
                    return Err(Error::BadDimension(
                        "neck_width must be smaller than the bell side".into(),
                    ));
                }
            }
            Shape::LShape {
                length,
                width,
                thickness,
            } => {
                check("length", length)?;
                check("width", width)?;
                check("thickness", thickness)?;
                if width >= length {
                    return Err(Error::BadDimension(
                        "width must be smaller than length".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Rectangle `origin + s·a + t·b`, `s, t ∈ [0, 1]`, in the frame of component `owner`.
struct Panel {
    origin: Point3<f64>,
    a: Vector3<f64>,
    b: Vector3<f64>,
    owner: usize,
}

fn box_panels(min: Point3<f64>, max: Point3<f64>, owner: usize, out: &mut Vec<Panel>) {
    let d = max - min;
    for axis in 0..3 {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        let a = Vector3::ith(i, d[i]);
        let b = Vector3::ith(j, d[j]);
        let mut hi = min;
        hi[axis] = max[axis];
        out.push(Panel {
            origin: min,
            a,
            b,
            owner,
        });
        out.push(Panel {
            origin: hi,
            a,
            b,
            owner,
        });
    }
}

fn inside_closed(p: &Point3<f64>, min: &Point3<f64>, max: &Point3<f64>) -> bool {
    const EPS: f64 = 1e-12;
    (0..3).all(|i| p[i] >= min[i] - EPS && p[i] <= max[i] + EPS)
}

/// Box `[lo, hi]` turned by `twist` radians about the x axis.
struct Part {
    lo: Point3<f64>,
    hi: Point3<f64>,
    twist: Rotation3<f64>,
}

impl Part {
    fn aligned(lo: Point3<f64>, hi: Point3<f64>) -> Self {
        Self {
            lo,
            hi,
            twist: Rotation3::identity(),
        }
    }
}

/// Uniform samples on the boundary of a union of boxes.
fn sample_box_union(boxes: &[Part], n: usize, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let mut panels = Vec::new();
    for (k, part) in boxes.iter().enumerate() {
        box_panels(part.lo, part.hi, k, &mut panels);
    }
    let mut cumulative = Vec::with_capacity(panels.len());
    let mut total = 0.0;
    for p in &panels {
        total += p.a.cross(&p.b).norm();
        cumulative.push(total);
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let r: f64 = rng.random::<f64>() * total;
        let k = cumulative
            .partition_point(|&c| c <= r)
            .min(panels.len() - 1);
        let panel = &panels[k];
        let s: f64 = rng.random();
        let t: f64 = rng.random();
        let p = boxes[panel.owner].twist * (panel.origin + panel.a * s + panel.b * t);
        // Faces buried inside another component are not part of the surface.
        let buried = boxes.iter().enumerate().any(|(j, other)| {
            j != panel.owner && inside_closed(&(other.twist.inverse() * p), &other.lo, &other.hi)
        });
        if !buried {
            out.push(p);
        }
    }
    out
}

fn centered_box(size: [f64; 3]) -> Part {
    let h = Vector3::from(size) / 2.0;
    Part::aligned(Point3::from(-h), Point3::from(h))
}

/// Deterministic uniform surface samples of `shape`.
pub fn synth_shape(shape: &Shape, n: usize, seed: u64) -> Result<PointCloud> {
    if n < MIN_CLOUD_POINTS {
        return Err(Error::config(
            "n",
            format!("need at least {MIN_CLOUD_POINTS} points, got {n}"),
        ));
    }
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, name) = match *shape {
        Shape::Box { size } => (sample_box_union(&[centered_box(size)], n, &mut rng), "box"),
        Shape::Plate { size } => (
            sample_box_union(&[centered_box(size)], n, &mut rng),
            "plate",
        ),
        Shape::Sphere { radius } => {
            let pts = (0..n)
                .map(|_| {
                    let g = Vector3::<f64>::from_fn(|_, _| rng.sample(StandardNormal));
                    Point3::from(g.normalize() * radius)
                })
                .collect();
            (pts, "sphere")
        }
        Shape::Cylinder { length, radius } => {
            let lateral = 2.0 * std::f64::consts::PI * radius * length;
            let cap = std::f64::consts::PI * radius * radius;
            let total = lateral + 2.0 * cap;
            let pts = (0..n)
                .map(|_| {
                    let r: f64 = rng.random::<f64>() * total;
                    let theta = rng.random::<f64>() * std::f64::consts::TAU;
                    let u: f64 = rng.random();
                    if r < lateral {
                        Point3::new(
                            radius * theta.cos(),
                            radius * theta.sin(),
                            (u - 0.5) * length,
                        )
                    } else {
                        let z = if r < lateral + cap {
                            -length / 2.0
                        } else {
                            length / 2.0
                        };
                        let rho = radius * u.sqrt();
                        Point3::new(rho * theta.cos(), rho * theta.sin(), z)
                    }
                })
                .collect();
            (pts, "cylinder")
        }
        Shape::Dumbbell {
            bell,
            neck_length,
            neck_width,
            twist,
        } => {
            let hb = bell / 2.0;
            let off = neck_length / 2.0 + hb;
            let hn = neck_width / 2.0;
            let boxes = [
                Part::aligned(
                    Point3::new(-off - hb, -hb, -hb),
                    Point3::new(-off + hb, hb, hb),
                ),
                Part::aligned(
                    Point3::new(-neck_length / 2.0, -hn, -hn),
                    Point3::new(neck_length / 2.0, hn, hn),
                ),
                Part {
                    lo: Point3::new(off - hb, -hb, -hb),
                    hi: Point3::new(off + hb, hb, hb),
                    twist: Rotation3::from_axis_angle(&Vector3::x_axis(), twist.to_radians()),
                },
            ];
            (sample_box_union(&boxes, n, &mut rng), "dumbbell")
        }
        Shape::LShape {
            length,
            width,
            thickness,
        } => {
            let boxes = [
                Part::aligned(Point3::origin(), Point3::new(length, width, thickness)),
                Part::aligned(
                    Point3::new(0.0, width, 0.0),
                    Point3::new(width, width + length, thickness),
                ),
            ];
            (sample_box_union(&boxes, n, &mut rng), "lshape")
        }
    };
    PointCloud::new(points, name)
}
