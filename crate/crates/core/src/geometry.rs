//! Implicit geometry.
//!
//! A [`LevelSet`] describes the physical domain as `{φ < 0}` together with an
//! optional manufactured solution. The boundary map used by the boundary
//! value correction is realized by [`LevelSet::project_to_boundary`], which
//! solves the scalar equation `φ(x + ς ν) = 0` for the root of smallest
//! magnitude.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Absolute tolerance on `|φ|` for boundary projection.
pub const TOL_NEWTON: f64 = 1e-12;
/// Newton iterations before falling back to bracketing.
pub const MAX_NEWTON_ITERATIONS: usize = 30;
/// Gradients below this magnitude are treated as zero.
pub const EPS_GRAD: f64 = 1e-10;
/// Number of scan intervals on each side of the origin in the bracketing fallback.
const SCAN_STEPS_PER_SIDE: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 2D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn normalized(self) -> Vec2 {
        self * (1.0 / self.norm())
    }

    /// Counterclockwise rotation by 90 degrees.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Closed-form level set functions, negative inside the domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `|x - c|² - r²`
    Circle { center: Vec2, radius: f64 },
    /// `(R - r_inner)(R - r_outer)` with `R = |x|`
    Ring { r_inner: f64, r_outer: f64 },
    /// `x²/a² + y²/b² - 1`
    Ellipse { a: f64, b: f64 },
    /// `n·x - offset` with `n` normalized on construction
    Affine { normal: Vec2, offset: f64 },
}

impl Shape {
    pub fn circle(center: Vec2, radius: f64) -> Self {
        Shape::Circle { center, radius }
    }

    pub fn ring(r_inner: f64, r_outer: f64) -> Self {
        Shape::Ring { r_inner, r_outer }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Shape::Ellipse { a, b }
    }

    pub fn affine(normal: Vec2, offset: f64) -> Self {
        Shape::Affine {
            normal: normal.normalized(),
            offset,
        }
    }

    fn value(&self, x: Vec2) -> f64 {
        match *self {
            Shape::Circle { center, radius } => {
                let d = x - center;
                d.dot(d) - radius * radius
            }
            Shape::Ring { r_inner, r_outer } => {
                let r = x.norm();
                (r - r_inner) * (r - r_outer)
            }
            Shape::Ellipse { a, b } => x.x * x.x / (a * a) + x.y * x.y / (b * b) - 1.0,
            Shape::Affine { normal, offset } => normal.dot(x) - offset,
        }
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        match *self {
            Shape::Circle { center, .. } => (x - center) * 2.0,
            Shape::Ring { r_inner, r_outer } => {
                let r = x.norm();
                if r == 0.0 {
                    // R is not differentiable at the origin
                    return Vec2::ZERO;
                }
                x * ((2.0 * r - r_inner - r_outer) / r)
            }
            Shape::Ellipse { a, b } => Vec2::new(2.0 * x.x / (a * a), 2.0 * x.y / (b * b)),
            Shape::Affine { normal, .. } => normal,
        }
    }

    /// Points on the zero isoline, or `None` for unbounded boundaries.
    pub fn boundary_samples(&self, count: usize) -> Option<Vec<Vec2>> {
        let angles = (0..count).map(move |i| 2.0 * PI * i as f64 / count as f64);
        let on_circle = |c: Vec2, r: f64| angles.clone().map(move |t| c + Vec2::new(t.cos(), t.sin()) * r);
        match *self {
            Shape::Circle { center, radius } => Some(on_circle(center, radius).collect()),
            Shape::Ring { r_inner, r_outer } => Some(
                on_circle(Vec2::ZERO, r_inner)
                    .chain(on_circle(Vec2::ZERO, r_outer))
                    .collect(),
            ),
            Shape::Ellipse { a, b } => Some(angles.clone().map(|t| Vec2::new(a * t.cos(), b * t.sin())).collect()),
            Shape::Affine { .. } => None,
        }
    }

    /// Length of the zero isoline for bounded shapes.
    pub fn boundary_length(&self) -> Option<f64> {
        match *self {
            Shape::Circle { radius, .. } => Some(2.0 * PI * radius),
            Shape::Ring { r_inner, r_outer } => Some(2.0 * PI * (r_inner + r_outer)),
            Shape::Ellipse { a, b } => {
                // Ramanujan's second approximation, relative error ~ 1e-10 for moderate eccentricity.
                let h = ((a - b) / (a + b)).powi(2);
                Some(PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt())))
            }
            Shape::Affine { .. } => None,
        }
    }

    /// Area of `{φ < 0}` for bounded shapes.
    pub fn area(&self) -> Option<f64> {
        match *self {
            Shape::Circle { radius, .. } => Some(PI * radius * radius),
            Shape::Ring { r_inner, r_outer } => Some(PI * (r_outer * r_outer - r_inner * r_inner)),
            Shape::Ellipse { a, b } => Some(PI * a * b),
            Shape::Affine { .. } => None,
        }
    }
}

/// Manufactured solutions with closed-form data valid on all of ℝ².
#[derive(Clone, Debug, PartialEq)]
pub enum Solution {
    /// `A (r_outer - R)(R - r_inner)`, vanishing on both circles of a ring.
    RingQuadratic { r_inner: f64, r_outer: f64, amplitude: f64 },
    /// `cos(πx/2) cos(πy/2)`
    EllipseCosine,
    /// `a x + b y + c`
    Affine { a: f64, b: f64, c: f64 },
}

impl Solution {
    fn value(&self, x: Vec2) -> f64 {
        match *self {
            Solution::RingQuadratic {
                r_inner,
                r_outer,
                amplitude,
            } => {
                let r = x.norm();
                amplitude * (r_outer - r) * (r - r_inner)
            }
            Solution::EllipseCosine => (PI * x.x / 2.0).cos() * (PI * x.y / 2.0).cos(),
            Solution::Affine { a, b, c } => a * x.x + b * x.y + c,
        }
    }

    fn gradient(&self, x: Vec2) -> Vec2 {
        match *self {
            Solution::RingQuadratic {
                r_inner,
                r_outer,
                amplitude,
            } => {
                let r = x.norm();
                if r == 0.0 {
                    return Vec2::ZERO;
                }
                x * (amplitude * (r_outer + r_inner - 2.0 * r) / r)
            }
            Solution::EllipseCosine => {
                let (sx, cx) = (PI * x.x / 2.0).sin_cos();
                let (sy, cy) = (PI * x.y / 2.0).sin_cos();
                Vec2::new(-PI / 2.0 * sx * cy, -PI / 2.0 * cx * sy)
            }
            Solution::Affine { a, b, .. } => Vec2::new(a, b),
        }
    }

    /// `-Δu`
    fn source(&self, x: Vec2) -> f64 {
        match *self {
            Solution::RingQuadratic {
                r_inner,
                r_outer,
                amplitude,
            } => {
                // radial Laplacian u'' + u'/R
                let r = x.norm();
                4.0 * amplitude - amplitude * (r_inner + r_outer) / r
            }
            Solution::EllipseCosine => PI * PI / 2.0 * self.value(x),
            Solution::Affine { .. } => 0.0,
        }
    }
}

/// How the load is evaluated outside the exact domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadExtension {
    /// `f = 0` where `φ ≥ 0`.
    #[default]
    Zero,
    /// The closed-form `-Δu` everywhere.
    Smooth,
}

/// A translated shape with optional manufactured solution.
///
/// Translation shifts everything: `φ(x) = shape(x - t)`, `u(x) = u₀(x - t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSet {
    pub shape: Shape,
    pub translation: Vec2,
    pub solution: Option<Solution>,
    pub load_extension: LoadExtension,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryProjection {
    /// Signed length `ς` such that `φ(x + ς ν) = 0`.
    pub varsigma: f64,
    pub point: Vec2,
    pub iterations: usize,
    pub converged: bool,
}

impl LevelSet {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            translation: Vec2::ZERO,
            solution: None,
            load_extension: LoadExtension::Zero,
        }
    }

    pub fn with_solution(mut self, solution: Solution) -> Self {
        self.solution = Some(solution);
        self
    }

    pub fn translated(mut self, t: Vec2) -> Self {
        self.translation = t;
        self
    }

    pub fn with_load_extension(mut self, ext: LoadExtension) -> Self {
        self.load_extension = ext;
        self
    }

    /// The ring `1/4 < R < 3/4` with `u = 20(3/4 - R)(R - 1/4)`.
    pub fn ring_benchmark() -> Self {
        LevelSet::new(Shape::ring(0.25, 0.75)).with_solution(Solution::RingQuadratic {
            r_inner: 0.25,
            r_outer: 0.75,
            amplitude: 20.0,
        })
    }

    /// The ellipse with semi-axes 3/4 and 1/2 and `u = cos(πx/2)cos(πy/2)`.
    pub fn ellipse_benchmark() -> Self {
        LevelSet::new(Shape::ellipse(0.75, 0.5)).with_solution(Solution::EllipseCosine)
    }

    fn local(&self, x: Vec2) -> Vec2 {
        x - self.translation
    }

    pub fn value(&self, x: Vec2) -> f64 {
        self.shape.value(self.local(x))
    }

    pub fn gradient(&self, x: Vec2) -> Vec2 {
        self.shape.gradient(self.local(x))
    }

    /// Outward unit normal `∇φ/|∇φ|`.
    pub fn normal(&self, x: Vec2) -> Result<Vec2> {
        let g = self.gradient(x);
        let len = g.norm();
        if len <= EPS_GRAD {
            return Err(Error::DegenerateGradient(x));
        }
        Ok(g * (1.0 / len))
    }

    /// Boundary samples in global coordinates.
    pub fn boundary_samples(&self, count: usize) -> Option<Vec<Vec2>> {
        self.shape
            .boundary_samples(count)
            .map(|pts| pts.into_iter().map(|p| p + self.translation).collect())
    }

    pub fn exact_solution(&self, x: Vec2) -> Option<f64> {
        self.solution.as_ref().map(|s| s.value(self.local(x)))
    }

    pub fn exact_gradient(&self, x: Vec2) -> Option<Vec2> {
        self.solution.as_ref().map(|s| s.gradient(self.local(x)))
    }

    /// Load `f = -Δu`, extended outside the domain according to `load_extension`.
    pub fn source(&self, x: Vec2) -> f64 {
        let Some(sol) = &self.solution else {
            return 0.0;
        };
        if self.load_extension == LoadExtension::Zero && self.value(x) >= 0.0 {
            return 0.0;
        }
        sol.source(self.local(x))
    }

    /// Dirichlet data; the closed form of `u` evaluated at `x`.
    pub fn boundary_data(&self, x: Vec2) -> f64 {
        self.exact_solution(x).unwrap_or(0.0)
    }

    /// Solve `φ(x + ς ν) = 0` for the root of smallest magnitude.
    ///
    /// Newton's method from `ς = 0` is tried first. If it stalls or leaves
    /// `[-search_radius, search_radius]`, the interval is scanned for sign
    /// changes and every bracketed root is refined by bisection. Ties in
    /// magnitude go to the positive root.
    pub fn project_to_boundary(&self, x: Vec2, nu: Vec2, search_radius: f64) -> Result<BoundaryProjection> {
        let g = |s: f64| self.value(x + nu * s);

        let mut s = 0.0;
        for it in 0..=MAX_NEWTON_ITERATIONS {
            let val = g(s);
            if val.abs() <= TOL_NEWTON {
                return Ok(BoundaryProjection {
                    varsigma: s,
                    point: x + nu * s,
                    iterations: it,
                    converged: true,
                });
            }
            if it == MAX_NEWTON_ITERATIONS {
                break;
            }
            let slope = self.gradient(x + nu * s).dot(nu);
            if slope.abs() <= EPS_GRAD {
                break;
            }
            s -= val / slope;
            if !s.is_finite() || s.abs() > search_radius {
                break;
            }
        }

        self.bracket_roots(x, nu, search_radius)
    }

    fn bracket_roots(&self, x: Vec2, nu: Vec2, radius: f64) -> Result<BoundaryProjection> {
        let g = |s: f64| self.value(x + nu * s);
        let n = 2 * SCAN_STEPS_PER_SIDE;
        let step = radius / SCAN_STEPS_PER_SIDE as f64;
        let grid: Vec<f64> = (0..=n).map(|i| -radius + step * i as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&s| g(s)).collect();

        // (root, |g(root)|, iterations)
        let mut roots: Vec<(f64, f64, usize)> = Vec::new();
        for i in 0..=n {
            if vals[i] == 0.0 {
                roots.push((grid[i], 0.0, 0));
            }
        }
        for i in 0..n {
            let (mut lo, mut hi) = (grid[i], grid[i + 1]);
            let (mut glo, ghi) = (vals[i], vals[i + 1]);
            if glo == 0.0 || ghi == 0.0 || glo.signum() == ghi.signum() {
                continue;
            }
            let mut its = 0;
            let mut mid = 0.5 * (lo + hi);
            let mut gmid = g(mid);
            while its < 200 && gmid.abs() > TOL_NEWTON && hi - lo > f64::EPSILON * radius {
                if gmid.signum() == glo.signum() {
                    lo = mid;
                    glo = gmid;
                } else {
                    hi = mid;
                }
                mid = 0.5 * (lo + hi);
                gmid = g(mid);
                its += 1;
            }
            roots.push((mid, gmid.abs(), its));
        }

        let tie = 1e-12 * radius;
        let best = roots.into_iter().reduce(|best, cand| {
            let (b, c) = (best.0.abs(), cand.0.abs());
            if c < b - tie || ((c - b).abs() <= tie && cand.0 > best.0) {
                cand
            } else {
                best
            }
        });
        match best {
            Some((s, residual, its)) => Ok(BoundaryProjection {
                varsigma: s,
                point: x + nu * s,
                iterations: MAX_NEWTON_ITERATIONS + its,
                converged: residual <= TOL_NEWTON,
            }),
            None => Err(Error::NoRoot { x, dir: nu, radius }),
        }
    }

    /// Closest-point style projection: iterate `ν ← n(p)` until the search
    /// direction is the exact normal at the projected point.
    pub fn project_along_exact_normal(&self, x: Vec2, search_radius: f64) -> Result<(Vec2, BoundaryProjection)> {
        let mut nu = self.normal(x)?;
        let mut proj = self.project_to_boundary(x, nu, search_radius)?;
        for _ in 0..50 {
            let next = self.normal(proj.point)?;
            let moved = (next - nu).norm();
            nu = next;
            proj = self.project_to_boundary(x, nu, search_radius)?;
            if moved <= 1e-14 {
                break;
            }
        }
        Ok((nu, proj))
    }
}
