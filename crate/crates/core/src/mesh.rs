//! Background triangulation, the polygonal discrete domain and its cut cells.
//!
//! The discrete domain `Ω_h` is `{φ_h < 0}` where `φ_h` is the nodal P1
//! interpolant of the level set. Nodal values that are exactly zero count as
//! positive, so every cut element is crossed by its zero line on exactly two
//! edges and `Ω_h ∩ K` is a triangle or a quadrilateral.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;

use crate::error::{Error, Result};
use crate::femcore::{GaussRule, TriangleRule};
use crate::geometry::{LevelSet, Vec2};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn unit() -> Self {
        Self::new(Vec2::ZERO, Vec2::new(1.0, 1.0))
    }

    /// `[-1, 1]²`
    pub fn symmetric() -> Self {
        Self::new(Vec2::new(-1.0, -1.0), Vec2::new(1.0, 1.0))
    }

    /// Distance from an interior point to the rectangle boundary.
    pub fn distance_to_boundary(&self, p: Vec2) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundMesh {
    pub vertices: Vec<Vec2>,
    /// Counterclockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    /// Vertex pairs with `v[0] < v[1]`.
    pub edges: Vec<[usize; 2]>,
    /// Local edge `i` of a triangle joins its vertices `i` and `i + 1`.
    pub element_edges: Vec<[usize; 3]>,
    /// Adjacent elements of each edge, lower index first.
    pub edge_elements: Vec<(usize, Option<usize>)>,
    /// Largest edge length.
    pub h: f64,
    pub bbox: Rect,
}

impl BackgroundMesh {
    pub fn new(vertices: Vec<Vec2>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(Error::InvalidMesh("empty mesh".into()));
        }
        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_elements: Vec<(usize, Option<usize>)> = Vec::new();
        let mut element_edges = Vec::with_capacity(triangles.len());
        let mut h = 0.0f64;

        for (k, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {k} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|v| vertices[v]);
            if (b - a).cross(c - a) <= 0.0 {
                return Err(Error::InvalidMesh(format!("triangle {k} is not counterclockwise")));
            }
            let mut local = [0usize; 3];
            for i in 0..3 {
                let (u, v) = (tri[i], tri[(i + 1) % 3]);
                h = h.max(vertices[u].distance(vertices[v]));
                let key = [u.min(v), u.max(v)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_elements.push((k, None));
                    edges.len() - 1
                });
                if edge_elements[e].0 != k {
                    if edge_elements[e].1.is_some() {
                        return Err(Error::InvalidMesh(format!("edge {key:?} has more than two elements")));
                    }
                    edge_elements[e].1 = Some(k);
                }
                local[i] = e;
            }
            element_edges.push(local);
        }

        let (mut min, mut max) = (vertices[0], vertices[0]);
        for v in &vertices {
            min = Vec2::new(min.x.min(v.x), min.y.min(v.y));
            max = Vec2::new(max.x.max(v.x), max.y.max(v.y));
        }

        Ok(Self {
            vertices,
            triangles,
            edges,
            element_edges,
            edge_elements,
            h,
            bbox: Rect::new(min, max),
        })
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn element_vertices(&self, k: usize) -> [Vec2; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    pub fn area(&self, k: usize) -> f64 {
        let [a, b, c] = self.element_vertices(k);
        0.5 * (b - a).cross(c - a)
    }

    pub fn min_edge(&self) -> f64 {
        self.edges
            .iter()
            .map(|&[u, v]| self.vertices[u].distance(self.vertices[v]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Ratio of longest to shortest edge.
    pub fn quasi_uniformity(&self) -> f64 {
        self.h / self.min_edge()
    }

    /// Check that every sampled boundary point of the level set lies at
    /// least `margin` inside the bounding box.
    pub fn check_containment(&self, ls: &LevelSet, margin: f64) -> Result<()> {
        let Some(samples) = ls.boundary_samples(256) else {
            return Ok(());
        };
        for p in samples {
            let d = self.bbox.distance_to_boundary(p);
            if d < margin {
                return Err(Error::Config(format!(
                    "boundary point {p} is {d:.3e} from the background box, need at least {margin:.3e}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_dump<W: Write>(&self, mut w: W, classes: Option<&[ElementClass]>) -> std::io::Result<()> {
        for v in &self.vertices {
            writeln!(w, "v {} {}", v.x, v.y)?;
        }
        for t in &self.triangles {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        if let Some(classes) = classes {
            for (k, c) in classes.iter().enumerate() {
                writeln!(w, "c {k} {c}")?;
            }
        }
        Ok(())
    }
}

/// Uniform `n × n` grid of squares, each split along the same diagonal.
pub fn build_background(bbox: Rect, n_subdiv: usize) -> Result<BackgroundMesh> {
    if n_subdiv == 0 {
        return Err(Error::InvalidMesh("need at least one subdivision".into()));
    }
    let n = n_subdiv;
    let dx = (bbox.max.x - bbox.min.x) / n as f64;
    let dy = (bbox.max.y - bbox.min.y) / n as f64;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push(Vec2::new(bbox.min.x + i as f64 * dx, bbox.min.y + j as f64 * dy));
        }
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
        }
    }
    BackgroundMesh::new(vertices, triangles)
}

/// Nodal interpolant of the level set.
pub fn interpolate_levelset(ls: &LevelSet, mesh: &BackgroundMesh) -> Vec<f64> {
    mesh.vertices.iter().map(|&v| ls.value(v)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Inside,
    Cut,
    /// No part of `Ω_h`, but the exact domain reaches into the element.
    OutsideButActive,
    Excluded,
}

impl ElementClass {
    pub fn is_active(self) -> bool {
        self != ElementClass::Excluded
    }

    /// Elements whose faces carry the ghost penalty.
    pub fn is_boundary(self) -> bool {
        matches!(self, ElementClass::Cut | ElementClass::OutsideButActive)
    }
}

impl fmt::Display for ElementClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementClass::Inside => "inside",
            ElementClass::Cut => "cut",
            ElementClass::OutsideButActive => "outside_active",
            ElementClass::Excluded => "excluded",
        })
    }
}

/// Vertices, edge midpoints and barycenter.
pub fn sample_points(tri: [Vec2; 3]) -> [Vec2; 7] {
    let [a, b, c] = tri;
    [
        a,
        b,
        c,
        a.lerp(b, 0.5),
        b.lerp(c, 0.5),
        c.lerp(a, 0.5),
        (a + b + c) * (1.0 / 3.0),
    ]
}

pub fn classify_from_values(phi_h: [f64; 3], exact_negative: impl FnOnce() -> bool) -> ElementClass {
    let negative = phi_h.iter().filter(|&&v| v < 0.0).count();
    match negative {
        3 => ElementClass::Inside,
        1 | 2 => ElementClass::Cut,
        _ if exact_negative() => ElementClass::OutsideButActive,
        _ => ElementClass::Excluded,
    }
}

pub fn classify_elements(ls: &LevelSet, mesh: &BackgroundMesh, phi_h: &[f64]) -> Vec<ElementClass> {
    (0..mesh.num_elements())
        .map(|k| {
            let vals = mesh.triangles[k].map(|v| phi_h[v]);
            classify_from_values(vals, || {
                sample_points(mesh.element_vertices(k))
                    .iter()
                    .any(|&p| ls.value(p) < 0.0)
            })
        })
        .collect()
}

/// Piece of `∂Ω_h` inside one cut element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    /// Unit normal pointing out of `Ω_h`.
    pub normal: Vec2,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn quadrature(&self, rule: &GaussRule) -> Vec<(Vec2, f64)> {
        let len = self.length();
        if len == 0.0 {
            return Vec::new();
        }
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(&t, &w)| (self.a.lerp(self.b, t), w * len))
            .collect()
    }
}

/// The part of an element inside `Ω_h`, as triangles, plus the boundary segment if cut.
#[derive(Clone, Debug, PartialEq)]
pub struct CutGeometry {
    pub interior: Vec<[Vec2; 3]>,
    pub segment: Option<Segment>,
}

fn triangle_area(t: &[Vec2; 3]) -> f64 {
    0.5 * (t[1] - t[0]).cross(t[2] - t[0])
}

/// Gradient of the linear interpolant of `phi` on a triangle.
pub fn linear_gradient(tri: [Vec2; 3], phi: [f64; 3]) -> Vec2 {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let det = e1.cross(e2);
    let (d1, d2) = (phi[1] - phi[0], phi[2] - phi[0]);
    // solve [e1ᵀ; e2ᵀ] g = (d1, d2)
    Vec2::new((d1 * e2.y - d2 * e1.y) / det, (e1.x * d2 - e2.x * d1) / det)
}

/// Split an element along the zero line of the linear interpolant.
///
/// `element` is only used for error messages.
pub fn cut_element(element: usize, tri: [Vec2; 3], phi: [f64; 3]) -> Result<CutGeometry> {
    let negative = phi.map(|v| v < 0.0);
    if negative.iter().all(|&n| n) {
        return Ok(CutGeometry {
            interior: vec![tri],
            segment: None,
        });
    }
    if negative.iter().all(|&n| !n) {
        return Ok(CutGeometry {
            interior: Vec::new(),
            segment: None,
        });
    }

    let mut polygon: Vec<Vec2> = Vec::with_capacity(4);
    let mut crossings: Vec<Vec2> = Vec::with_capacity(2);
    for i in 0..3 {
        let j = (i + 1) % 3;
        if negative[i] {
            polygon.push(tri[i]);
        }
        if negative[i] != negative[j] {
            let t = phi[i] / (phi[i] - phi[j]);
            if !t.is_finite() {
                return Err(Error::DegenerateCut {
                    element,
                    reason: format!("non-finite crossing on edge {i}"),
                });
            }
            let p = tri[i].lerp(tri[j], t);
            polygon.push(p);
            crossings.push(p);
        }
    }
    if crossings.len() != 2 {
        return Err(Error::DegenerateCut {
            element,
            reason: format!("zero line crosses {} edges", crossings.len()),
        });
    }

    let area = triangle_area(&tri);
    let interior: Vec<[Vec2; 3]> = (1..polygon.len() - 1)
        .map(|i| [polygon[0], polygon[i], polygon[i + 1]])
        .filter(|t| triangle_area(t) > 1e-14 * area)
        .collect();

    let grad = linear_gradient(tri, phi);
    let len = grad.norm();
    if !(len > 0.0) {
        return Err(Error::DegenerateCut {
            element,
            reason: "vanishing interpolant gradient".into(),
        });
    }
    Ok(CutGeometry {
        interior,
        segment: Some(Segment {
            a: crossings[0],
            b: crossings[1],
            normal: grad * (1.0 / len),
        }),
    })
}

/// Physical quadrature points and weights over `K ∩ Ω_h`.
pub fn cut_cell_quadrature(
    element: usize,
    tri: [Vec2; 3],
    phi: [f64; 3],
    rule: &TriangleRule,
) -> Result<Vec<(Vec2, f64)>> {
    let cut = cut_element(element, tri, phi)?;
    Ok(cut.interior.iter().flat_map(|t| rule.map_to(*t)).collect())
}

/// Boundary segment of a cut element with its Gauss points.
pub fn boundary_segment(
    element: usize,
    tri: [Vec2; 3],
    phi: [f64; 3],
    rule: &GaussRule,
) -> Result<Option<(Segment, Vec<(Vec2, f64)>)>> {
    let cut = cut_element(element, tri, phi)?;
    Ok(cut.segment.map(|s| {
        let q = s.quadrature(rule);
        (s, q)
    }))
}

/// An interior edge carrying the ghost penalty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GhostFace {
    /// Adjacent elements, lower index first.
    pub elements: [usize; 2],
    pub a: Vec2,
    pub b: Vec2,
    /// Unit normal pointing from `elements[0]` into `elements[1]`.
    pub normal: Vec2,
    pub length: f64,
}

pub fn ghost_faces(mesh: &BackgroundMesh, classes: &[ElementClass]) -> Vec<GhostFace> {
    let centroid = |k: usize| {
        let [a, b, c] = mesh.element_vertices(k);
        (a + b + c) * (1.0 / 3.0)
    };
    mesh.edges
        .iter()
        .zip(&mesh.edge_elements)
        .filter_map(|(&[u, v], &(k0, k1))| {
            let k1 = k1?;
            let (c0, c1) = (classes[k0], classes[k1]);
            if !(c0.is_active() && c1.is_active() && (c0.is_boundary() || c1.is_boundary())) {
                return None;
            }
            let (lo, hi) = (k0.min(k1), k0.max(k1));
            let (a, b) = (mesh.vertices[u], mesh.vertices[v]);
            let mut normal = (b - a).perp().normalized();
            if normal.dot(centroid(hi) - centroid(lo)) < 0.0 {
                normal = -normal;
            }
            Some(GhostFace {
                elements: [lo, hi],
                a,
                b,
                normal,
                length: a.distance(b),
            })
        })
        .collect()
}

/// Background mesh restricted to the elements meeting `Ω ∪ Ω_h`.
#[derive(Clone, Debug)]
pub struct ActiveMesh {
    pub mesh: BackgroundMesh,
    pub phi_h: Vec<f64>,
    pub classes: Vec<ElementClass>,
    /// `Some` for inside and cut elements.
    pub cuts: Vec<Option<CutGeometry>>,
    pub ghost_faces: Vec<GhostFace>,
}

/// A quadrature point inside an element, with its reference coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadPoint {
    pub x: Vec2,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct ElementQuadrature {
    pub element: usize,
    pub points: Vec<QuadPoint>,
}

#[derive(Clone, Debug)]
pub struct SegmentQuadrature {
    pub element: usize,
    pub segment: Segment,
    pub points: Vec<QuadPoint>,
}

impl ActiveMesh {
    pub fn new(mesh: BackgroundMesh, ls: &LevelSet) -> Result<Self> {
        let phi_h = interpolate_levelset(ls, &mesh);
        let classes = classify_elements(ls, &mesh, &phi_h);
        let cuts = (0..mesh.num_elements())
            .map(|k| match classes[k] {
                ElementClass::Inside | ElementClass::Cut => {
                    cut_element(k, mesh.element_vertices(k), mesh.triangles[k].map(|v| phi_h[v])).map(Some)
                }
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let ghost_faces = ghost_faces(&mesh, &classes);
        Ok(Self {
            mesh,
            phi_h,
            classes,
            cuts,
            ghost_faces,
        })
    }

    pub fn h(&self) -> f64 {
        self.mesh.h
    }

    pub fn active(&self) -> Vec<bool> {
        self.classes.iter().map(|c| c.is_active()).collect()
    }

    pub fn count(&self, class: ElementClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn segments(&self) -> impl Iterator<Item = (usize, &Segment)> + '_ {
        self.cuts
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.as_ref().and_then(|c| c.segment.as_ref()).map(|s| (k, s)))
    }

    pub fn volume_quadrature(&self, rule: &TriangleRule) -> Vec<ElementQuadrature> {
        self.cuts
            .iter()
            .enumerate()
            .filter_map(|(k, c)| {
                let c = c.as_ref()?;
                let points = c
                    .interior
                    .iter()
                    .flat_map(|t| rule.map_to(*t))
                    .map(|(x, weight)| QuadPoint { x, weight })
                    .collect();
                Some(ElementQuadrature { element: k, points })
            })
            .collect()
    }

    pub fn segment_quadrature(&self, rule: &GaussRule) -> Vec<SegmentQuadrature> {
        self.segments()
            .map(|(k, s)| SegmentQuadrature {
                element: k,
                segment: *s,
                points: s
                    .quadrature(rule)
                    .into_iter()
                    .map(|(x, weight)| QuadPoint { x, weight })
                    .collect(),
            })
            .collect()
    }

    /// `|Ω_h|` from the cut geometry.
    pub fn discrete_area(&self) -> f64 {
        self.cuts
            .iter()
            .flatten()
            .flat_map(|c| c.interior.iter())
            .map(triangle_area)
            .sum()
    }

    /// `|∂Ω_h|`
    pub fn discrete_boundary_length(&self) -> f64 {
        self.segments().map(|(_, s)| s.length()).sum()
    }
}
