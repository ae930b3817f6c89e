//! Bilinear and linear forms.
//!
//! Row `i` of the system is the test function `w = φ_i`, column `j` the trial
//! function `v = φ_j`. All boundary integrals live on the polygonal boundary
//! `∂Ω_h`; the Dirichlet datum is transferred from the exact boundary by a
//! Taylor expansion of length `ϱ_h` along `ν_h`.

use std::fmt;

use crate::error::{Error, Result};
use crate::femcore::{AffineMap, BasisPartials, DofMap, GaussRule, ReferenceElement, TriangleRule};
use crate::geometry::{LevelSet, Vec2};
use crate::linsolve::{CsrMatrix, TripletBuilder};
use crate::mesh::{ActiveMesh, GhostFace};

pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_GAMMA: f64 = 0.1;
/// Boundary projection search radius in units of `h`.
pub const SEARCH_RADIUS_FACTOR: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Taylor expansion with `k + 1` terms in the trial slots only.
    NonsymmetricTaylor(usize),
    /// First-order expansion in both slots, symmetric by construction.
    SymmetricK1,
    /// Classical Nitsche on `∂Ω_h` with the datum's closed form evaluated on `∂Ω_h`.
    ExactBoundaryNitsche,
}

impl Variant {
    pub fn taylor_order(self) -> usize {
        match self {
            Variant::NonsymmetricTaylor(k) => k,
            Variant::SymmetricK1 => 1,
            Variant::ExactBoundaryNitsche => 0,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::NonsymmetricTaylor(k) => write!(f, "nonsymmetric(k={k})"),
            Variant::SymmetricK1 => f.write_str("symmetric_k1"),
            Variant::ExactBoundaryNitsche => f.write_str("exact_boundary"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NormalSource {
    #[default]
    FacetNormal,
    /// `ν_h = n(p_h(x))`, iterated to a fixed point.
    ExactNormalAtProjection,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FormConfig {
    pub variant: Variant,
    pub beta: f64,
    pub gamma_j: f64,
    pub normal_source: NormalSource,
}

impl Default for FormConfig {
    fn default() -> Self {
        Self {
            variant: Variant::SymmetricK1,
            beta: DEFAULT_BETA,
            gamma_j: DEFAULT_GAMMA,
            normal_source: NormalSource::FacetNormal,
        }
    }
}

impl FormConfig {
    pub fn new(variant: Variant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self, order: usize) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.gamma_j > 0.0) {
            return Err(Error::Config(format!("gamma_j must be positive, got {}", self.gamma_j)));
        }
        if let Variant::NonsymmetricTaylor(k) = self.variant {
            if k > 2 {
                return Err(Error::Config(format!("taylor order {k} exceeds 2")));
            }
            // D²_ν of a P1 function vanishes, so k = 2 would silently act as k = 1
            if k > order {
                return Err(Error::Config(format!(
                    "taylor order {k} exceeds polynomial order {order}"
                )));
            }
        }
        if self.variant == Variant::SymmetricK1 && self.normal_source != NormalSource::FacetNormal {
            return Err(Error::Config("the symmetric variant requires facet normals".into()));
        }
        Ok(())
    }
}

/// A Gauss point on `∂Ω_h` with its boundary map data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryQuadPoint {
    pub x: Vec2,
    pub weight: f64,
    /// Facet normal `n_h`.
    pub normal: Vec2,
    /// Expansion direction `ν_h`.
    pub nu: Vec2,
    /// Signed distance `ϱ_h` to the exact boundary along `ν_h`.
    pub rho: f64,
    /// `p_h(x) = x + ϱ_h ν_h`
    pub projection: Vec2,
    pub element: usize,
}

/// Gauss points on every boundary segment, projected onto the exact boundary.
pub fn boundary_points(
    am: &ActiveMesh,
    ls: &LevelSet,
    rule: &GaussRule,
    normal_source: NormalSource,
) -> Result<Vec<BoundaryQuadPoint>> {
    let radius = SEARCH_RADIUS_FACTOR * am.h();
    let mut out = Vec::new();
    for q in am.segment_quadrature(rule) {
        let n = q.segment.normal;
        for p in &q.points {
            let (nu, proj) = match normal_source {
                NormalSource::FacetNormal => (n, ls.project_to_boundary(p.x, n, radius)?),
                NormalSource::ExactNormalAtProjection => ls.project_along_exact_normal(p.x, radius)?,
            };
            out.push(BoundaryQuadPoint {
                x: p.x,
                weight: p.weight,
                normal: n,
                nu,
                rho: proj.varsigma,
                projection: proj.point,
                element: q.element,
            });
        }
    }
    Ok(out)
}

/// `δ_h = max |ϱ_h|`
pub fn max_rho(points: &[BoundaryQuadPoint]) -> f64 {
    points.iter().fold(0.0, |m, p| m.max(p.rho.abs()))
}

/// Coefficients of `T_k(φ_i)(x) = Σ_j D_ν^j φ_i(x) ϱ^j / j!` for every basis function.
pub fn taylor_row(partials: &BasisPartials, map: &AffineMap, nu: Vec2, rho: f64, k: usize) -> Vec<f64> {
    let mut row = partials.values().to_vec();
    let mut factor = 1.0;
    for j in 1..=k {
        factor *= rho / j as f64;
        for (r, d) in row.iter_mut().zip(map.directional(partials, nu, j)) {
            *r += factor * d;
        }
    }
    row
}

/// Element data cached for assembly.
struct ElementEval<'a> {
    elem: &'a ReferenceElement,
    maps: Vec<Option<AffineMap>>,
}

impl<'a> ElementEval<'a> {
    fn new(am: &ActiveMesh, elem: &'a ReferenceElement) -> Result<Self> {
        let maps = (0..am.mesh.num_elements())
            .map(|k| {
                if am.classes[k].is_active() {
                    AffineMap::new(am.mesh.element_vertices(k)).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { elem, maps })
    }

    fn map(&self, k: usize) -> &AffineMap {
        self.maps[k].as_ref().expect("element is active")
    }

    fn partials(&self, k: usize, x: Vec2) -> BasisPartials {
        self.elem.partials(self.map(k).inverse_map(x))
    }

    fn values_and_gradients(&self, k: usize, x: Vec2) -> (Vec<f64>, Vec<Vec2>) {
        let map = self.map(k);
        let xi = map.inverse_map(x);
        let values = self.elem.eval(xi);
        let dxi = self.elem.eval_partial(1, 0, xi);
        let deta = self.elem.eval_partial(0, 1, xi);
        let ex = map.pull(Vec2::new(1.0, 0.0));
        let ey = map.pull(Vec2::new(0.0, 1.0));
        let grads = dxi
            .iter()
            .zip(&deta)
            .map(|(&a, &b)| Vec2::new(ex.x * a + ex.y * b, ey.x * a + ey.y * b))
            .collect();
        (values, grads)
    }
}

fn add_block(a: &mut TripletBuilder, dofs: &[usize], block: &[f64]) {
    let n = dofs.len();
    for (i, &di) in dofs.iter().enumerate() {
        for (j, &dj) in dofs.iter().enumerate() {
            let v = block[i * n + j];
            if v != 0.0 {
                a.add(di, dj, v);
            }
        }
    }
}

/// `(∇v, ∇w)_{Ω_h}` and `(f, w)_{Ω_h}`.
pub fn assemble_volume(
    am: &ActiveMesh,
    dofs: &DofMap,
    elem: &ReferenceElement,
    ls: &LevelSet,
    rule: &TriangleRule,
    a: &mut TripletBuilder,
    b: &mut [f64],
) -> Result<()> {
    let ev = ElementEval::new(am, elem)?;
    let nb = elem.num_basis();
    for q in am.volume_quadrature(rule) {
        let k = q.element;
        let ldofs = dofs.dofs(k);
        let mut block = vec![0.0; nb * nb];
        for p in &q.points {
            let (vals, grads) = ev.values_and_gradients(k, p.x);
            for i in 0..nb {
                for j in 0..nb {
                    block[i * nb + j] += p.weight * grads[i].dot(grads[j]);
                }
            }
            let f = ls.source(p.x);
            if f != 0.0 {
                for (i, v) in vals.iter().enumerate() {
                    b[ldofs[i]] += p.weight * f * v;
                }
            }
        }
        add_block(a, ldofs, &block);
    }
    Ok(())
}

/// Boundary terms of the bilinear form.
pub fn assemble_boundary(
    am: &ActiveMesh,
    dofs: &DofMap,
    elem: &ReferenceElement,
    points: &[BoundaryQuadPoint],
    cfg: &FormConfig,
    a: &mut TripletBuilder,
) -> Result<()> {
    let ev = ElementEval::new(am, elem)?;
    let nb = elem.num_basis();
    let penalty = cfg.beta / am.h();
    let k = cfg.variant.taylor_order();
    for q in points {
        let ldofs = dofs.dofs(q.element);
        let partials = ev.partials(q.element, q.x);
        let map = ev.map(q.element);
        let phi = partials.values();
        let dn = map.directional(&partials, q.normal, 1);
        let w = q.weight;
        let mut block = vec![0.0; nb * nb];
        match cfg.variant {
            Variant::SymmetricK1 => {
                let t = taylor_row(&partials, map, q.normal, q.rho, 1);
                for i in 0..nb {
                    for j in 0..nb {
                        block[i * nb + j] =
                            w * (-dn[j] * phi[i] - phi[j] * dn[i] - q.rho * dn[j] * dn[i] + penalty * t[j] * t[i]);
                    }
                }
            }
            Variant::NonsymmetricTaylor(_) | Variant::ExactBoundaryNitsche => {
                let t = taylor_row(&partials, map, q.nu, q.rho, k);
                for i in 0..nb {
                    for j in 0..nb {
                        block[i * nb + j] = w * (-dn[j] * phi[i] - t[j] * dn[i] + penalty * t[j] * phi[i]);
                    }
                }
            }
        }
        add_block(a, ldofs, &block);
    }
    Ok(())
}

/// Boundary terms of the linear form.
pub fn assemble_load_boundary(
    am: &ActiveMesh,
    dofs: &DofMap,
    elem: &ReferenceElement,
    points: &[BoundaryQuadPoint],
    ls: &LevelSet,
    cfg: &FormConfig,
    b: &mut [f64],
) -> Result<()> {
    if cfg.variant == Variant::ExactBoundaryNitsche && ls.solution.is_none() {
        return Err(Error::Config(
            "exact boundary Nitsche needs a closed-form boundary datum".into(),
        ));
    }
    let ev = ElementEval::new(am, elem)?;
    let penalty = cfg.beta / am.h();
    for q in points {
        let g = match cfg.variant {
            Variant::ExactBoundaryNitsche => ls.boundary_data(q.x),
            _ => ls.boundary_data(q.projection),
        };
        if g == 0.0 {
            continue;
        }
        let ldofs = dofs.dofs(q.element);
        let partials = ev.partials(q.element, q.x);
        let map = ev.map(q.element);
        let dn = map.directional(&partials, q.normal, 1);
        let pen = match cfg.variant {
            Variant::SymmetricK1 => taylor_row(&partials, map, q.normal, q.rho, 1),
            _ => partials.values().to_vec(),
        };
        for (i, &d) in ldofs.iter().enumerate() {
            b[d] += q.weight * g * (penalty * pen[i] - dn[i]);
        }
    }
    Ok(())
}

/// `j_h(v, w) = γ Σ_F Σ_{l=1..p} h^{2l-1} ([D^l_{n_F} v], [D^l_{n_F} w])_F`.
pub fn assemble_ghost_penalty(
    am: &ActiveMesh,
    faces: &[GhostFace],
    dofs: &DofMap,
    elem: &ReferenceElement,
    gamma: f64,
    h: f64,
    a: &mut TripletBuilder,
) -> Result<()> {
    if gamma == 0.0 {
        return Ok(());
    }
    let ev = ElementEval::new(am, elem)?;
    let p = elem.order;
    let nb = elem.num_basis();
    let rule = GaussRule::new(p + 1);
    for f in faces {
        let [lo, hi] = f.elements;
        let mut face_dofs: Vec<usize> = dofs.dofs(lo).to_vec();
        face_dofs.extend_from_slice(dofs.dofs(hi));
        let m = 2 * nb;
        let mut block = vec![0.0; m * m];
        for (&t, &wt) in rule.points.iter().zip(&rule.weights) {
            let x = f.a.lerp(f.b, t);
            let w = wt * f.length;
            let pl = ev.partials(lo, x);
            let ph = ev.partials(hi, x);
            for l in 1..=p {
                let scale = gamma * h.powi(2 * l as i32 - 1) * w;
                let dl = ev.map(lo).directional(&pl, f.normal, l);
                let dh = ev.map(hi).directional(&ph, f.normal, l);
                let jump: Vec<f64> = dl.iter().map(|v| -v).chain(dh.iter().copied()).collect();
                for i in 0..m {
                    if jump[i] == 0.0 {
                        continue;
                    }
                    for j in 0..m {
                        block[i * m + j] += scale * jump[i] * jump[j];
                    }
                }
            }
        }
        add_block(a, &face_dofs, &block);
    }
    Ok(())
}

/// `j_h(v, v)` from the jumps of `v` directly, free of cancellation.
pub fn ghost_penalty_value(
    am: &ActiveMesh,
    dofs: &DofMap,
    elem: &ReferenceElement,
    gamma: f64,
    v: &[f64],
) -> Result<f64> {
    let ev = ElementEval::new(am, elem)?;
    let p = elem.order;
    let h = am.h();
    let rule = GaussRule::new(p + 1);
    let mut total = 0.0;
    for f in &am.ghost_faces {
        let [lo, hi] = f.elements;
        for (&t, &wt) in rule.points.iter().zip(&rule.weights) {
            let x = f.a.lerp(f.b, t);
            let pl = ev.partials(lo, x);
            let ph = ev.partials(hi, x);
            for l in 1..=p {
                let side = |k: usize, pt: &BasisPartials| -> f64 {
                    let d = ev.map(k).directional(pt, f.normal, l);
                    dofs.dofs(k).iter().zip(&d).map(|(&i, di)| v[i] * di).sum()
                };
                let jump = side(hi, &ph) - side(lo, &pl);
                total += gamma * h.powi(2 * l as i32 - 1) * wt * f.length * jump * jump;
            }
        }
    }
    Ok(total)
}

/// Ghost penalty alone as a matrix.
pub fn ghost_penalty_matrix(am: &ActiveMesh, dofs: &DofMap, elem: &ReferenceElement, gamma: f64) -> Result<CsrMatrix> {
    let mut a = TripletBuilder::new(dofs.num_dofs());
    assemble_ghost_penalty(am, &am.ghost_faces, dofs, elem, gamma, am.h(), &mut a)?;
    Ok(a.build())
}

/// Assembled system with the boundary data it was built from.
#[derive(Clone, Debug)]
pub struct System {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub boundary: Vec<BoundaryQuadPoint>,
}

impl System {
    pub fn max_rho(&self) -> f64 {
        max_rho(&self.boundary)
    }
}

pub fn volume_rule(order: usize) -> TriangleRule {
    TriangleRule::with_degree(2 * order)
}

pub fn boundary_rule(order: usize) -> GaussRule {
    GaussRule::new(order + 2)
}

pub fn assemble_system(
    am: &ActiveMesh,
    dofs: &DofMap,
    elem: &ReferenceElement,
    ls: &LevelSet,
    cfg: &FormConfig,
) -> Result<System> {
    cfg.validate(elem.order)?;
    let n = dofs.num_dofs();
    let mut a = TripletBuilder::new(n);
    let mut b = vec![0.0; n];
    assemble_volume(am, dofs, elem, ls, &volume_rule(elem.order), &mut a, &mut b)?;
    let boundary = boundary_points(am, ls, &boundary_rule(elem.order), cfg.normal_source)?;
    assemble_boundary(am, dofs, elem, &boundary, cfg, &mut a)?;
    assemble_load_boundary(am, dofs, elem, &boundary, ls, cfg, &mut b)?;
    assemble_ghost_penalty(am, &am.ghost_faces, dofs, elem, cfg.gamma_j, am.h(), &mut a)?;
    let matrix = a.build();
    let empty = matrix.empty_rows();
    if !empty.is_empty() {
        return Err(Error::InvalidMesh(format!(
            "{} dofs have no couplings, first {}",
            empty.len(),
            empty[0]
        )));
    }
    Ok(System {
        matrix,
        rhs: b,
        boundary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::femcore::build_dof_map;
    use crate::geometry::{Shape, Solution};
    use crate::linsolve::{solve, SolverMethod, SolverOptions};
    use crate::mesh::{build_background, BackgroundMesh, ElementClass, Rect};

    fn discretize(ls: &LevelSet, n: usize, order: usize) -> (ActiveMesh, ReferenceElement, DofMap) {
        let am = ActiveMesh::new(build_background(Rect::symmetric(), n).unwrap(), ls).unwrap();
        let elem = ReferenceElement::new(order).unwrap();
        let dofs = build_dof_map(&am.mesh, &am.active(), &elem).unwrap();
        (am, elem, dofs)
    }

    #[test]
    fn taylor_row_examples() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)];
        let map = AffineMap::new(tri).unwrap();
        let elem = ReferenceElement::new(2).unwrap();
        let x = Vec2::new(0.2, 0.3);
        let pt = elem.partials(x);
        assert_eq!(taylor_row(&pt, &map, Vec2::new(1.0, 0.0), 0.4, 0), pt.values().to_vec());

        let nu = Vec2::new(0.6, 0.8);
        let rho = 0.1;
        let target = x + nu * rho;
        // affine v: T_1 exact
        let v = |p: Vec2| 2.0 * p.x - p.y + 0.5;
        let coeffs: Vec<f64> = elem.nodes.iter().map(|&p| v(p)).collect();
        let t1 = taylor_row(&pt, &map, nu, rho, 1);
        let tv: f64 = t1.iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        assert!((tv - v(target)).abs() < 1e-13);

        // v = s² along ν with s measured from x: T_1 = 0, remainder ϱ²
        let s2 = |p: Vec2| (p - x).dot(nu).powi(2);
        let coeffs: Vec<f64> = elem.nodes.iter().map(|&p| s2(p)).collect();
        let eval = |row: &[f64]| row.iter().zip(&coeffs).map(|(a, b)| a * b).sum::<f64>();
        assert!(eval(&t1).abs() < 1e-13);
        assert!((s2(target) - eval(&t1) - rho * rho).abs() < 1e-13);
        let t2 = taylor_row(&pt, &map, nu, rho, 2);
        assert!((eval(&t2) - rho * rho).abs() < 1e-13);
    }

    #[test]
    fn p1_reference_stiffness() {
        // one element, fully inside a large circle
        let mesh = BackgroundMesh::new(
            vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let ls = LevelSet::new(Shape::circle(Vec2::ZERO, 10.0));
        let am = ActiveMesh::new(mesh, &ls).unwrap();
        assert_eq!(am.classes[0], ElementClass::Inside);
        let elem = ReferenceElement::new(1).unwrap();
        let dofs = build_dof_map(&am.mesh, &am.active(), &elem).unwrap();
        let mut a = TripletBuilder::new(3);
        let mut b = vec![0.0; 3];
        assemble_volume(&am, &dofs, &elem, &ls, &volume_rule(1), &mut a, &mut b).unwrap();
        let k = a.build().to_dense();
        let expected = [1.0, -0.5, -0.5, -0.5, 0.5, 0.0, -0.5, 0.0, 0.5];
        for (x, e) in k.iter().zip(expected) {
            assert!((x - e).abs() < 1e-14);
        }
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ghost_penalty_on_piecewise_linear_jump() {
        // two triangles sharing the face x = 0, 0 ≤ y ≤ 1
        let mesh = BackgroundMesh::new(
            vec![
                Vec2::new(-1.0, 0.0),
                Vec2::new(0.0, 0.0),
                Vec2::new(0.0, 1.0),
                Vec2::new(1.0, 0.5),
            ],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap();
        let ls = LevelSet::new(Shape::circle(Vec2::ZERO, 10.0));
        let mut am = ActiveMesh::new(mesh, &ls).unwrap();
        am.classes = vec![ElementClass::Cut, ElementClass::Inside];
        let faces = crate::mesh::ghost_faces(&am.mesh, &am.classes);
        assert_eq!(faces.len(), 1);
        assert!((faces[0].normal - Vec2::new(1.0, 0.0)).norm() < 1e-15);

        let elem = ReferenceElement::new(1).unwrap();
        let dofs = build_dof_map(&am.mesh, &am.active(), &elem).unwrap();
        let gamma = 0.1;
        let h = 0.7;
        let mut a = TripletBuilder::new(dofs.num_dofs());
        assemble_ghost_penalty(&am, &faces, &dofs, &elem, gamma, h, &mut a).unwrap();
        let j = a.build();
        // v = x on the left and 2x on the right cannot be continuous on P1 dofs,
        // so evaluate the jump of a continuous v = |x| kink instead: slopes -1 and 2
        let v: Vec<f64> = dofs
            .coordinates
            .iter()
            .map(|p| if p.x < 0.0 { -p.x } else { 2.0 * p.x })
            .collect();
        let jv = j.matvec(&v);
        let val: f64 = v.iter().zip(&jv).map(|(a, b)| a * b).sum();
        assert!((val - gamma * h * 9.0).abs() < 1e-13);

        // slopes 1 and 2 as in the x / 2x example: jump 1, value γ h
        let v: Vec<f64> = dofs
            .coordinates
            .iter()
            .map(|p| if p.x < 0.0 { p.x } else { 2.0 * p.x })
            .collect();
        let jv = j.matvec(&v);
        let val: f64 = v.iter().zip(&jv).map(|(a, b)| a * b).sum();
        assert!((val - gamma * h).abs() < 1e-13);

        let mut a = TripletBuilder::new(dofs.num_dofs());
        assemble_ghost_penalty(&am, &faces, &dofs, &elem, 0.0, h, &mut a).unwrap();
        assert_eq!(a.build().nnz(), 0);
    }

    #[test]
    fn ghost_penalty_vanishes_on_global_polynomials() {
        let ls = LevelSet::ring_benchmark();
        for order in 1..=3 {
            let (am, elem, dofs) = discretize(&ls, 16, order);
            let j = ghost_penalty_matrix(&am, &dofs, &elem, 0.1).unwrap();
            let poly = |p: Vec2| match order {
                1 => 1.0 + p.x - 2.0 * p.y,
                2 => p.x * p.x - 3.0 * p.x * p.y + p.y,
                _ => p.x * p.x * p.x - p.x * p.y * p.y + 0.5 * p.y * p.y - p.x,
            };
            let v: Vec<f64> = dofs.coordinates.iter().map(|&p| poly(p)).collect();
            let jv = j.matvec(&v);
            let rel = crate::linsolve::norm2(&jv) / (j.max_abs() * crate::linsolve::norm2(&v));
            assert!(rel < 1e-12, "order {order}: {rel}");
        }
    }

    #[test]
    fn ghost_penalty_value_is_the_quadratic_form() {
        let ls = LevelSet::ring_benchmark();
        for order in 1..=3 {
            let (am, elem, dofs) = discretize(&ls, 16, order);
            let j = ghost_penalty_matrix(&am, &dofs, &elem, 0.1).unwrap();
            let v: Vec<f64> = dofs.coordinates.iter().map(|p| (4.0 * p.x).sin() + p.y * p.y).collect();
            let form: f64 = v.iter().zip(j.matvec(&v)).map(|(a, b)| a * b).sum();
            // vᵀJv cancels heavily, so compare on the scale of Σ|vᵢ Jᵢⱼ vⱼ|
            let scale: f64 = (0..v.len())
                .flat_map(|i| j.row(i).map(move |(c, x)| (i, c, x)))
                .map(|(i, c, x)| (v[i] * x * v[c]).abs())
                .sum();
            let direct = ghost_penalty_value(&am, &dofs, &elem, 0.1, &v).unwrap();
            assert!(direct > 0.0);
            assert!(
                (direct - form).abs() < 1e-13 * scale,
                "order {order}: {direct} vs {form}, scale {scale}"
            );
        }
    }

    #[test]
    fn variants_coincide_when_rho_vanishes() {
        let ls = LevelSet::ring_benchmark();
        let (am, elem, dofs) = discretize(&ls, 8, 1);
        let mut pts = boundary_points(&am, &ls, &boundary_rule(1), NormalSource::FacetNormal).unwrap();
        pts.truncate(1);
        pts[0].rho = 0.0;
        pts[0].projection = pts[0].x;
        let mut mats = Vec::new();
        for v in [
            Variant::NonsymmetricTaylor(0),
            Variant::NonsymmetricTaylor(1),
            Variant::SymmetricK1,
            Variant::ExactBoundaryNitsche,
        ] {
            let mut a = TripletBuilder::new(dofs.num_dofs());
            assemble_boundary(&am, &dofs, &elem, &pts, &FormConfig::new(v), &mut a).unwrap();
            mats.push(a.build().to_dense());
        }
        for m in &mats[1..] {
            for (x, y) in m.iter().zip(&mats[0]) {
                assert!((x - y).abs() < 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn unit_datum_load_row() {
        let ls =
            LevelSet::new(Shape::circle(Vec2::ZERO, 0.5)).with_solution(Solution::Affine { a: 0.0, b: 0.0, c: 1.0 });
        let (am, elem, dofs) = discretize(&ls, 8, 1);
        let mut pts = boundary_points(&am, &ls, &boundary_rule(1), NormalSource::FacetNormal).unwrap();
        pts.truncate(1);
        let q = pts[0];
        let mut b = vec![0.0; dofs.num_dofs()];
        let cfg = FormConfig::new(Variant::NonsymmetricTaylor(0));
        assemble_load_boundary(&am, &dofs, &elem, &pts, &ls, &cfg, &mut b).unwrap();
        let map = AffineMap::new(am.mesh.element_vertices(q.element)).unwrap();
        let pt = elem.partials(map.inverse_map(q.x));
        let grads = map.gradients(&pt);
        for (i, &d) in dofs.dofs(q.element).iter().enumerate() {
            let expected = q.weight * (cfg.beta / am.h() * pt.values()[i] - q.normal.dot(grads[i]));
            assert!((b[d] - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn zero_datum_gives_zero_boundary_load() {
        let ls = LevelSet::ring_benchmark();
        let (am, elem, dofs) = discretize(&ls, 16, 2);
        let pts = boundary_points(&am, &ls, &boundary_rule(2), NormalSource::FacetNormal).unwrap();
        let mut b = vec![0.0; dofs.num_dofs()];
        assemble_load_boundary(&am, &dofs, &elem, &pts, &ls, &FormConfig::default(), &mut b).unwrap();
        // g∘p_h vanishes up to the projection tolerance, amplified by β/h
        assert!(b.iter().all(|&v| v.abs() < 1e-8));
    }

    #[test]
    fn boundary_points_land_on_exact_boundary() {
        let ls = LevelSet::ellipse_benchmark();
        let (am, _, _) = discretize(&ls, 16, 2);
        for source in [NormalSource::FacetNormal, NormalSource::ExactNormalAtProjection] {
            let pts = boundary_points(&am, &ls, &boundary_rule(2), source).unwrap();
            assert!(!pts.is_empty());
            for q in &pts {
                assert!(ls.value(q.projection).abs() <= 1e-12);
                assert!(q.rho.abs() <= SEARCH_RADIUS_FACTOR * am.h());
                assert!((q.x + q.nu * q.rho - q.projection).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn symmetric_variant_is_symmetric() {
        let ls = LevelSet::ring_benchmark();
        for order in 1..=3 {
            let (am, elem, dofs) = discretize(&ls, 8, order);
            let sys = assemble_system(&am, &dofs, &elem, &ls, &FormConfig::default()).unwrap();
            let a = &sys.matrix;
            assert!(a.asymmetry() <= 1e-10 * a.max_abs(), "order {order}");
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = FormConfig::new(Variant::NonsymmetricTaylor(2));
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(1).is_err());
        cfg.variant = Variant::NonsymmetricTaylor(3);
        assert!(cfg.validate(3).is_err());
        let mut cfg = FormConfig::default();
        cfg.normal_source = NormalSource::ExactNormalAtProjection;
        assert!(cfg.validate(2).is_err());
        let mut cfg = FormConfig::default();
        cfg.beta = 0.0;
        assert!(cfg.validate(2).is_err());
        let mut cfg = FormConfig::default();
        cfg.gamma_j = -1.0;
        assert!(cfg.validate(2).is_err());
    }

    #[test]
    fn exact_boundary_requires_closed_form() {
        let ls = LevelSet::new(Shape::circle(Vec2::ZERO, 0.5));
        let (am, elem, dofs) = discretize(&ls, 8, 1);
        let err = assemble_system(&am, &dofs, &elem, &ls, &FormConfig::new(Variant::ExactBoundaryNitsche)).unwrap_err();
        assert!(err.is_config());
    }

    fn direct() -> SolverOptions {
        SolverOptions {
            tol: 1e-12,
            method: SolverMethod::DenseLu,
            ..SolverOptions::default()
        }
    }

    fn affine_patch(variant: Variant, order: usize, source: NormalSource) -> f64 {
        let u = Solution::Affine {
            a: 0.7,
            b: -1.3,
            c: 0.4,
        };
        let ls = LevelSet::new(Shape::circle(Vec2::new(0.03, -0.02), 0.61)).with_solution(u);
        let (am, elem, dofs) = discretize(&ls, 8, order);
        let cfg = FormConfig {
            variant,
            normal_source: source,
            ..FormConfig::default()
        };
        let sys = assemble_system(&am, &dofs, &elem, &ls, &cfg).unwrap();
        let rep = solve(&sys.matrix, &sys.rhs, &direct()).unwrap();
        dofs.coordinates
            .iter()
            .zip(&rep.solution)
            .map(|(&p, &uh)| (uh - ls.exact_solution(p).unwrap()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn affine_patch_test() {
        for order in 1..=3 {
            for k in 1..=order.min(2) {
                let err = affine_patch(Variant::NonsymmetricTaylor(k), order, NormalSource::FacetNormal);
                assert!(err < 1e-8, "nonsymmetric k={k} p={order}: {err:e}");
                let err = affine_patch(
                    Variant::NonsymmetricTaylor(k),
                    order,
                    NormalSource::ExactNormalAtProjection,
                );
                assert!(err < 1e-8, "exact normal k={k} p={order}: {err:e}");
            }
            let err = affine_patch(Variant::SymmetricK1, order, NormalSource::FacetNormal);
            assert!(err < 1e-8, "symmetric p={order}: {err:e}");
        }
    }

    #[test]
    fn vertex_touching_boundary_assembles_and_solves() {
        // φ = y - 1/4 puts ∂Ω_h on the grid line y = 1/4 when n = 8
        let ls = LevelSet::new(Shape::affine(Vec2::new(0.0, 1.0), 0.25)).with_solution(Solution::Affine {
            a: 0.0,
            b: 0.0,
            c: 2.0,
        });
        let (am, elem, dofs) = discretize(&ls, 8, 2);
        assert!(am.phi_h.contains(&0.0));
        let sys = assemble_system(&am, &dofs, &elem, &ls, &FormConfig::default()).unwrap();
        let rep = solve(&sys.matrix, &sys.rhs, &direct()).unwrap();
        for (&p, &uh) in dofs.coordinates.iter().zip(&rep.solution) {
            assert!((uh - 2.0).abs() < 1e-8, "at {p}: {uh}");
        }
    }
}
