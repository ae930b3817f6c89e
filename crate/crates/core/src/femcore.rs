//! Lagrange elements of order 1 to 3 on triangles, quadrature and dof numbering.

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::linsolve::DenseLu;
use crate::mesh::BackgroundMesh;

/// Highest derivative order available from [`ReferenceElement::partials`].
pub const MAX_DERIVATIVE: usize = 3;

/// Index of the partial `∂ξ^a ∂η^b` in graded order.
pub const fn partial_index(a: usize, b: usize) -> usize {
    let n = a + b;
    n * (n + 1) / 2 + b
}

const NUM_PARTIALS: usize = partial_index(0, MAX_DERIVATIVE) + 1;

/// Gauss-Legendre rule mapped to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussRule {
    pub points: Vec<f64>,
    /// Sum to one.
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss rule needs at least one point");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d.is_finite() {
                dp = d;
            }
            // on [-1, 1] the weight is 2 / ((1 - x²) P'(x)²); halve for [0, 1]
            points[n - 1 - i] = 0.5 * (x + 1.0);
            weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
        }
        Self { points, weights }
    }

    /// Number of points integrating polynomials of `degree` exactly.
    pub fn points_for_degree(degree: usize) -> usize {
        degree / 2 + 1
    }
}

/// `(P_n(x), P_n'(x))`
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Quadrature on the reference triangle `(0,0), (1,0), (0,1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleRule {
    pub degree: usize,
    pub points: Vec<Vec2>,
    /// Sum to the reference area 1/2.
    pub weights: Vec<f64>,
}

impl TriangleRule {
    /// A rule exact for polynomials of total degree `degree`.
    pub fn with_degree(degree: usize) -> Self {
        // (weight, barycentric) orbits, weights relative to unit area
        let orbits: &[(f64, [f64; 3])] = match degree {
            0 | 1 => &[(1.0, [1.0 / 3.0; 3])],
            2 => &[(1.0 / 3.0, [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0])],
            3 | 4 => &[
                (
                    0.223381589678011,
                    [0.108103018168070, 0.445948490915965, 0.445948490915965],
                ),
                (
                    0.109951743655322,
                    [0.816847572980459, 0.091576213509771, 0.091576213509771],
                ),
            ],
            5 => &[
                (0.225, [1.0 / 3.0; 3]),
                (
                    0.132394152788506,
                    [0.059715871789770, 0.470142064105115, 0.470142064105115],
                ),
                (
                    0.125939180544827,
                    [0.797426985353087, 0.101286507323456, 0.101286507323456],
                ),
            ],
            6 => &[
                (
                    0.116786275726379,
                    [0.501426509658179, 0.249286745170910, 0.249286745170910],
                ),
                (
                    0.050844906370207,
                    [0.873821971016996, 0.063089014491502, 0.063089014491502],
                ),
                (
                    0.082851075618374,
                    [0.053145049844817, 0.310352451033784, 0.636502499121399],
                ),
            ],
            _ => return Self::collapsed(degree),
        };
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, l) in orbits {
            for p in orbit(l) {
                points.push(Vec2::new(p[1], p[2]));
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w *= 0.5 / total;
        }
        Self {
            degree,
            points,
            weights,
        }
    }

    /// Tensor Gauss rule on the square collapsed onto the triangle.
    fn collapsed(degree: usize) -> Self {
        let g = GaussRule::new((degree + 3) / 2);
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (&u, &wu) in g.points.iter().zip(&g.weights) {
            for (&v, &wv) in g.points.iter().zip(&g.weights) {
                points.push(Vec2::new(u, v * (1.0 - u)));
                weights.push(wu * wv * (1.0 - u));
            }
        }
        Self {
            degree,
            points,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Physical points and weights on an arbitrary triangle.
    pub fn map_to(&self, tri: [Vec2; 3]) -> impl Iterator<Item = (Vec2, f64)> + '_ {
        let e1 = tri[1] - tri[0];
        let e2 = tri[2] - tri[0];
        let jac = e1.cross(e2).abs();
        self.points
            .iter()
            .zip(&self.weights)
            .map(move |(p, &w)| (tri[0] + e1 * p.x + e2 * p.y, w * jac))
    }
}

/// Distinct permutations of a barycentric triple.
fn orbit(l: [f64; 3]) -> Vec<[f64; 3]> {
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [1, 2, 0], [2, 0, 1], [0, 2, 1], [2, 1, 0], [1, 0, 2]];
    let mut out: Vec<[f64; 3]> = Vec::new();
    for p in PERMS {
        let q = [l[p[0]], l[p[1]], l[p[2]]];
        if !out.contains(&q) {
            out.push(q);
        }
    }
    out
}

/// Which mesh entity a local node belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeEntity {
    Vertex(usize),
    /// Local edge and position along it, counted from its first vertex.
    Edge {
        edge: usize,
        index: usize,
    },
    Interior(usize),
}

/// Values of every basis function and all partials up to [`MAX_DERIVATIVE`].
#[derive(Clone, Debug)]
pub struct BasisPartials {
    data: Vec<Vec<f64>>,
}

impl BasisPartials {
    pub fn get(&self, a: usize, b: usize) -> &[f64] {
        &self.data[partial_index(a, b)]
    }

    pub fn values(&self) -> &[f64] {
        self.get(0, 0)
    }

    pub fn num_basis(&self) -> usize {
        self.data[0].len()
    }
}

#[derive(Clone, Debug)]
pub struct ReferenceElement {
    pub order: usize,
    pub nodes: Vec<Vec2>,
    pub entities: Vec<NodeEntity>,
    monomials: Vec<(usize, usize)>,
    /// `coefficients[i][m]` multiplies monomial `m` in basis function `i`.
    coefficients: Vec<Vec<f64>>,
}

impl ReferenceElement {
    pub fn new(order: usize) -> Result<Self> {
        if !(1..=3).contains(&order) {
            return Err(Error::Config(format!("polynomial order {order} not in 1..=3")));
        }
        let p = order;
        let pf = p as f64;
        let corners = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let mut nodes = corners.to_vec();
        let mut entities: Vec<NodeEntity> = (0..3).map(NodeEntity::Vertex).collect();
        for e in 0..3 {
            let (a, b) = (corners[e], corners[(e + 1) % 3]);
            for s in 1..p {
                nodes.push(a.lerp(b, s as f64 / pf));
                entities.push(NodeEntity::Edge { edge: e, index: s - 1 });
            }
        }
        let mut interior = 0;
        for j in 1..p {
            for i in 1..p - j {
                nodes.push(Vec2::new(i as f64 / pf, j as f64 / pf));
                entities.push(NodeEntity::Interior(interior));
                interior += 1;
            }
        }

        let monomials: Vec<(usize, usize)> = (0..=p).flat_map(|n| (0..=n).map(move |b| (n - b, b))).collect();
        let n = monomials.len();
        debug_assert_eq!(n, nodes.len());
        let mut vandermonde = vec![0.0; n * n];
        for (j, x) in nodes.iter().enumerate() {
            for (m, &(a, b)) in monomials.iter().enumerate() {
                vandermonde[j * n + m] = x.x.powi(a as i32) * x.y.powi(b as i32);
            }
        }
        let lu = DenseLu::factor(n, vandermonde)?;
        let coefficients = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                lu.solve(&e)
            })
            .collect();
        Ok(Self {
            order,
            nodes,
            entities,
            monomials,
            coefficients,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.nodes.len()
    }

    /// `∂ξ^a ∂η^b` of every basis function at `xi`.
    pub fn eval_partial(&self, a: usize, b: usize, xi: Vec2) -> Vec<f64> {
        let terms: Vec<f64> = self
            .monomials
            .iter()
            .map(|&(ma, mb)| {
                if ma < a || mb < b {
                    return 0.0;
                }
                falling(ma, a) * falling(mb, b) * xi.x.powi((ma - a) as i32) * xi.y.powi((mb - b) as i32)
            })
            .collect();
        self.coefficients
            .iter()
            .map(|c| c.iter().zip(&terms).map(|(c, t)| c * t).sum())
            .collect()
    }

    pub fn eval(&self, xi: Vec2) -> Vec<f64> {
        self.eval_partial(0, 0, xi)
    }

    pub fn partials(&self, xi: Vec2) -> BasisPartials {
        let mut data = Vec::with_capacity(NUM_PARTIALS);
        for n in 0..=MAX_DERIVATIVE {
            for b in 0..=n {
                data.push(self.eval_partial(n - b, b, xi));
            }
        }
        BasisPartials { data }
    }
}

/// `n (n-1) ... (n-k+1)`
fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Coefficients of `(d.x ∂ξ + d.y ∂η)^j` on the partials `∂ξ^{j-b} ∂η^b`, indexed by `b`.
fn directional_coefficients(d: Vec2, j: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for _ in 0..j {
        let mut next = vec![0.0; c.len() + 1];
        for (b, &v) in c.iter().enumerate() {
            next[b] += v * d.x;
            next[b + 1] += v * d.y;
        }
        c = next;
    }
    c
}

/// `j`-th derivative of every basis function in direction `d` (not normalized).
pub fn directional_derivative(partials: &BasisPartials, d: Vec2, j: usize) -> Vec<f64> {
    assert!(j <= MAX_DERIVATIVE);
    let coeffs = directional_coefficients(d, j);
    let mut out = vec![0.0; partials.num_basis()];
    for (b, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(partials.get(j - b, b)) {
            *o += c * v;
        }
    }
    out
}

/// `x = B ξ + c` taking the reference triangle onto a mesh element.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMap {
    pub origin: Vec2,
    /// Columns of `B`.
    pub b1: Vec2,
    pub b2: Vec2,
    pub det: f64,
}

impl AffineMap {
    pub fn new(tri: [Vec2; 3]) -> Result<Self> {
        let b1 = tri[1] - tri[0];
        let b2 = tri[2] - tri[0];
        let det = b1.cross(b2);
        let scale = b1.norm() * b2.norm();
        if !(det.abs() >= 1e-14 * scale.max(f64::MIN_POSITIVE)) || scale == 0.0 {
            return Err(Error::DegenerateElement { det });
        }
        Ok(Self {
            origin: tri[0],
            b1,
            b2,
            det,
        })
    }

    pub fn map(&self, xi: Vec2) -> Vec2 {
        self.origin + self.b1 * xi.x + self.b2 * xi.y
    }

    /// `B⁻¹ v`
    pub fn pull(&self, v: Vec2) -> Vec2 {
        Vec2::new(
            (v.x * self.b2.y - v.y * self.b2.x) / self.det,
            (self.b1.x * v.y - self.b1.y * v.x) / self.det,
        )
    }

    pub fn inverse_map(&self, x: Vec2) -> Vec2 {
        self.pull(x - self.origin)
    }

    /// Physical gradients `B⁻ᵀ ∇̂` of every basis function.
    pub fn gradients(&self, partials: &BasisPartials) -> Vec<Vec2> {
        let ex = self.pull(Vec2::new(1.0, 0.0));
        let ey = self.pull(Vec2::new(0.0, 1.0));
        partials
            .get(1, 0)
            .iter()
            .zip(partials.get(0, 1))
            .map(|(&dxi, &deta)| Vec2::new(ex.x * dxi + ex.y * deta, ey.x * dxi + ey.y * deta))
            .collect()
    }

    /// Physical `j`-th directional derivative along `d`.
    pub fn directional(&self, partials: &BasisPartials, d: Vec2, j: usize) -> Vec<f64> {
        directional_derivative(partials, self.pull(d), j)
    }

    /// Physical partial `∂x^a ∂y^b`.
    pub fn physical_partial(&self, partials: &BasisPartials, a: usize, b: usize) -> Vec<f64> {
        let cx = directional_coefficients(self.pull(Vec2::new(1.0, 0.0)), a);
        let cy = directional_coefficients(self.pull(Vec2::new(0.0, 1.0)), b);
        let mut coeffs = vec![0.0; a + b + 1];
        for (i, x) in cx.iter().enumerate() {
            for (k, y) in cy.iter().enumerate() {
                coeffs[i + k] += x * y;
            }
        }
        let mut out = vec![0.0; partials.num_basis()];
        for (bb, c) in coeffs.iter().enumerate() {
            for (o, v) in out.iter_mut().zip(partials.get(a + b - bb, bb)) {
                *o += c * v;
            }
        }
        out
    }
}

/// Global numbering of Lagrange nodes on the active elements.
#[derive(Clone, Debug)]
pub struct DofMap {
    pub order: usize,
    /// Global dofs of each element in local node order, empty for inactive elements.
    pub element_dofs: Vec<Vec<usize>>,
    /// Physical coordinates of each dof.
    pub coordinates: Vec<Vec2>,
}

impl DofMap {
    pub fn num_dofs(&self) -> usize {
        self.coordinates.len()
    }

    pub fn dofs(&self, element: usize) -> &[usize] {
        &self.element_dofs[element]
    }
}

/// Number the nodes shared by active elements, continuous across faces.
///
/// Nodes get a key from the entity they sit on (vertex, edge, interior),
/// and dofs follow key order, so numbering is independent of element order.
pub fn build_dof_map(mesh: &BackgroundMesh, active: &[bool], elem: &ReferenceElement) -> Result<DofMap> {
    if active.len() != mesh.num_elements() {
        return Err(Error::Dimension(format!(
            "{} activity flags for {} elements",
            active.len(),
            mesh.num_elements()
        )));
    }
    let p = elem.order;
    let nv = mesh.vertices.len();
    let per_edge = p - 1;
    let per_cell = elem.num_basis() - 3 - 3 * per_edge;
    let edge_base = nv;
    let cell_base = nv + mesh.edges.len() * per_edge;
    let num_keys = cell_base + mesh.num_elements() * per_cell;

    let mut local_keys = vec![Vec::new(); mesh.num_elements()];
    let mut used = vec![false; num_keys];
    for (k, keys) in local_keys.iter_mut().enumerate() {
        if !active[k] {
            continue;
        }
        let tri = mesh.triangles[k];
        *keys = elem
            .entities
            .iter()
            .map(|ent| match *ent {
                NodeEntity::Vertex(i) => tri[i],
                NodeEntity::Edge { edge, index } => {
                    let (u, v) = (tri[edge], tri[(edge + 1) % 3]);
                    let s = if u < v { index } else { per_edge - 1 - index };
                    edge_base + mesh.element_edges[k][edge] * per_edge + s
                }
                NodeEntity::Interior(i) => cell_base + k * per_cell + i,
            })
            .collect();
        for &key in keys.iter() {
            used[key] = true;
        }
    }

    let mut key_to_dof = vec![usize::MAX; num_keys];
    let mut next = 0;
    for (key, u) in used.iter().enumerate() {
        if *u {
            key_to_dof[key] = next;
            next += 1;
        }
    }

    let mut coordinates = vec![Vec2::ZERO; next];
    let mut element_dofs = vec![Vec::new(); mesh.num_elements()];
    for k in 0..mesh.num_elements() {
        if !active[k] {
            continue;
        }
        let map = AffineMap::new(mesh.element_vertices(k))?;
        element_dofs[k] = local_keys[k].iter().map(|&key| key_to_dof[key]).collect();
        for (&d, &xi) in element_dofs[k].iter().zip(&elem.nodes) {
            coordinates[d] = map.map(xi);
        }
    }
    Ok(DofMap {
        order: p,
        element_dofs,
        coordinates,
    })
}
