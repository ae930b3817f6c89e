//! Convergence studies, error norms and conditioning sweeps.

pub mod cli;
pub mod config;
pub mod output;

use std::time::Instant;

use crate::assembly::{assemble_system, ghost_penalty_value, System};
use crate::error::{Error, Result};
use crate::femcore::{build_dof_map, AffineMap, DofMap, GaussRule, ReferenceElement, TriangleRule};
use crate::geometry::{LevelSet, Vec2};
use crate::linsolve::{estimate_condition, solve, SolveReport, SolverOptions};
use crate::mesh::{build_background, sample_points, ActiveMesh, ElementClass};

pub use config::ExperimentConfig;

/// Uniform refinements applied to each element for the exact-domain error.
pub const EXACT_DOMAIN_REFINEMENTS: usize = 4;

/// Required distance of the exact boundary from the background box, in units of `h`.
pub const CONTAINMENT_MARGIN: f64 = 1.0;

/// Errors below this are treated as zero when computing rates.
pub const EOC_FLOOR: f64 = 1e-14;

/// `log(e₁/e₂) / log(h₁/h₂)`, defined when both errors exceed [`EOC_FLOOR`].
pub fn eoc(e1: f64, e2: f64, h1: f64, h2: f64) -> Option<f64> {
    (e1 > EOC_FLOOR && e2 > EOC_FLOOR).then(|| (e1 / e2).ln() / (h1 / h2).ln())
}

/// Least-squares slope of `log e` against `log h`.
pub fn fitted_slope(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let x: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Everything needed to solve on one background mesh.
pub struct Discretization {
    pub active: ActiveMesh,
    pub element: ReferenceElement,
    pub dofs: DofMap,
    pub system: System,
}

impl Discretization {
    pub fn new(cfg: &ExperimentConfig, ls: &LevelSet, n: usize) -> Result<Self> {
        let mesh = build_background(cfg.bbox, n)?;
        mesh.check_containment(ls, CONTAINMENT_MARGIN * mesh.h)?;
        let active = ActiveMesh::new(mesh, ls)?;
        let element = ReferenceElement::new(cfg.order)?;
        let dofs = build_dof_map(&active.mesh, &active.active(), &element)?;
        let system = assemble_system(&active, &dofs, &element, ls, &cfg.form)?;
        Ok(Self {
            active,
            element,
            dofs,
            system,
        })
    }

    pub fn solve(&self, tol: f64) -> Result<SolveReport> {
        let opts = SolverOptions {
            tol,
            ..SolverOptions::default()
        };
        solve(&self.system.matrix, &self.system.rhs, &opts)
    }

    /// Value and gradient of a finite element function at a point of element `k`.
    pub fn evaluate(&self, coeffs: &[f64], k: usize, x: Vec2) -> Result<(f64, Vec2)> {
        let map = AffineMap::new(self.active.mesh.element_vertices(k))?;
        Ok(evaluate_with(&self.element, &map, self.dofs.dofs(k), coeffs, x))
    }
}

fn evaluate_with(elem: &ReferenceElement, map: &AffineMap, dofs: &[usize], coeffs: &[f64], x: Vec2) -> (f64, Vec2) {
    let xi = map.inverse_map(x);
    let vals = elem.eval(xi);
    let dxi = elem.eval_partial(1, 0, xi);
    let deta = elem.eval_partial(0, 1, xi);
    let (mut u, mut gref) = (0.0, Vec2::ZERO);
    for (i, &d) in dofs.iter().enumerate() {
        u += coeffs[d] * vals[i];
        gref += Vec2::new(dxi[i], deta[i]) * coeffs[d];
    }
    let ex = map.pull(Vec2::new(1.0, 0.0));
    let ey = map.pull(Vec2::new(0.0, 1.0));
    (u, Vec2::new(ex.dot(gref), ey.dot(gref)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    /// `‖u - u_h‖` on `Ω_h`.
    pub l2: f64,
    /// `|u - u_h|₁` on `Ω_h`.
    pub h1: f64,
    pub energy: f64,
    /// `‖u - u_h‖` on the exact domain, from sub-sampled cells.
    pub l2_exact_domain: Option<f64>,
}

/// Error norms of `u_h` against the closed-form solution.
///
/// The energy norm is
/// `‖∇e‖² + j_h(e, e) + h‖n_h·∇e‖²_{∂Ω_h} + h⁻¹‖e‖²_{∂Ω_h}` with `j_h(e, e) = j_h(u_h, u_h)`
/// because the exact solution is smooth across faces.
pub fn compute_errors(
    d: &Discretization,
    ls: &LevelSet,
    uh: &[f64],
    gamma: f64,
    exact_domain: bool,
) -> Result<ErrorNorms> {
    if ls.solution.is_none() {
        return Err(Error::Config("error norms need a closed-form solution".into()));
    }
    let am = &d.active;
    let elem = &d.element;
    let p = elem.order;
    let h = am.h();
    let u = |x: Vec2| ls.exact_solution(x).unwrap_or(0.0);
    let du = |x: Vec2| ls.exact_gradient(x).unwrap_or(Vec2::ZERO);

    let maps: Vec<Option<AffineMap>> = (0..am.mesh.num_elements())
        .map(|k| {
            am.classes[k]
                .is_active()
                .then(|| AffineMap::new(am.mesh.element_vertices(k)))
                .transpose()
        })
        .collect::<Result<_>>()?;
    let at = |k: usize, x: Vec2| evaluate_with(elem, maps[k].as_ref().expect("active"), d.dofs.dofs(k), uh, x);

    let rule = TriangleRule::with_degree(2 * p + 2);
    let (mut l2, mut h1) = (0.0, 0.0);
    for q in am.volume_quadrature(&rule) {
        for pt in &q.points {
            let (v, g) = at(q.element, pt.x);
            l2 += pt.weight * (u(pt.x) - v).powi(2);
            h1 += pt.weight * (du(pt.x) - g).norm().powi(2);
        }
    }

    let (mut normal_part, mut trace_part) = (0.0, 0.0);
    for s in am.segment_quadrature(&GaussRule::new(p + 3)) {
        for pt in &s.points {
            let (v, g) = at(s.element, pt.x);
            normal_part += pt.weight * s.segment.normal.dot(du(pt.x) - g).powi(2);
            trace_part += pt.weight * (u(pt.x) - v).powi(2);
        }
    }
    let ghost = ghost_penalty_value(am, &d.dofs, elem, gamma, uh)?;
    let energy = (h1 + ghost + h * normal_part + trace_part / h).sqrt();

    let l2_exact_domain = exact_domain.then(|| {
        let mut sum = 0.0;
        for k in 0..am.mesh.num_elements() {
            let class = am.classes[k];
            if !class.is_active() {
                continue;
            }
            let tri = am.mesh.element_vertices(k);
            let near = class != ElementClass::Inside
                || sample_points(tri).iter().any(|&x| {
                    let g = ls.gradient(x).norm();
                    g == 0.0 || ls.value(x) / g > -h
                });
            let cells: Vec<[Vec2; 3]> = if near {
                refine(tri, EXACT_DOMAIN_REFINEMENTS)
                    .into_iter()
                    .filter(|t| ls.value((t[0] + t[1] + t[2]) * (1.0 / 3.0)) < 0.0)
                    .collect()
            } else {
                vec![tri]
            };
            for c in cells {
                for (x, w) in rule.map_to(c) {
                    sum += w * (u(x) - at(k, x).0).powi(2);
                }
            }
        }
        sum.sqrt()
    });

    Ok(ErrorNorms {
        l2: l2.sqrt(),
        h1: h1.sqrt(),
        energy,
        l2_exact_domain,
    })
}

/// Split each triangle into four by its edge midpoints, `levels` times.
fn refine(tri: [Vec2; 3], levels: usize) -> Vec<[Vec2; 3]> {
    let mut cells = vec![tri];
    for _ in 0..levels {
        cells = cells
            .into_iter()
            .flat_map(|[a, b, c]| {
                let (ab, bc, ca) = (a.lerp(b, 0.5), b.lerp(c, 0.5), c.lerp(a, 0.5));
                [[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]
            })
            .collect();
    }
    cells
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelResult {
    pub n: usize,
    pub h: f64,
    pub ndof: usize,
    pub errors: ErrorNorms,
    pub max_rho: f64,
    pub condition: Option<f64>,
    pub iterations: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelFailure {
    pub n: usize,
    pub message: String,
    pub config_error: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StudyReport {
    pub levels: Vec<std::result::Result<LevelResult, LevelFailure>>,
}

impl StudyReport {
    pub fn successes(&self) -> Vec<&LevelResult> {
        self.levels.iter().filter_map(|l| l.as_ref().ok()).collect()
    }

    pub fn failures(&self) -> Vec<&LevelFailure> {
        self.levels.iter().filter_map(|l| l.as_ref().err()).collect()
    }

    /// Rate of a quantity over consecutive successful levels.
    pub fn rates(&self, f: impl Fn(&LevelResult) -> f64) -> Vec<Option<f64>> {
        self.successes()
            .windows(2)
            .map(|w| eoc(f(w[0]), f(w[1]), w[0].h, w[1].h))
            .collect()
    }

    pub fn finest_rate(&self, f: impl Fn(&LevelResult) -> f64) -> Option<f64> {
        self.rates(f).last().copied().flatten()
    }

    pub fn l2_rates(&self) -> Vec<Option<f64>> {
        self.rates(|r| r.errors.l2)
    }

    pub fn finest(&self) -> Option<&LevelResult> {
        self.successes().last().copied()
    }
}

pub fn run_level(cfg: &ExperimentConfig, n: usize) -> Result<LevelResult> {
    let start = Instant::now();
    let ls = &cfg.level_set;
    let d = Discretization::new(cfg, ls, n)?;
    let report = d.solve(cfg.solver_tol)?;
    let errors = compute_errors(&d, ls, &report.solution, cfg.form.gamma_j, cfg.exact_domain_error)?;
    let condition = if cfg.condition {
        Some(estimate_condition(&d.system.matrix)?.kappa)
    } else {
        None
    };
    Ok(LevelResult {
        n,
        h: d.active.h(),
        ndof: d.dofs.num_dofs(),
        errors,
        max_rho: d.system.max_rho(),
        condition,
        iterations: report.iterations,
        seconds: if cfg.timing { start.elapsed().as_secs_f64() } else { 0.0 },
    })
}

/// Solve on every level; failures are recorded and the study moves on.
pub fn run_study(cfg: &ExperimentConfig) -> StudyReport {
    let levels = cfg
        .levels
        .iter()
        .map(|&n| {
            run_level(cfg, n).map_err(|e| LevelFailure {
                n,
                message: e.to_string(),
                config_error: e.is_config(),
            })
        })
        .collect();
    StudyReport { levels }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub offset: f64,
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub n: usize,
    pub h: f64,
    pub points: Vec<SweepPoint>,
}

impl SweepReport {
    pub fn spread(&self) -> f64 {
        let max = self.points.iter().map(|p| p.kappa).fold(f64::MIN, f64::max);
        let min = self.points.iter().map(|p| p.kappa).fold(f64::MAX, f64::min);
        max / min
    }
}

/// Direction of the cut-position sweep.
pub fn sweep_direction() -> Vec2 {
    Vec2::new(1.0, 1.0).normalized()
}

/// Condition number of the system built for a level set moved by `shift`.
pub fn condition_at(cfg: &ExperimentConfig, n: usize, shift: Vec2) -> Result<f64> {
    let ls = cfg.level_set.clone().translated(cfg.level_set.translation + shift);
    let d = Discretization::new(cfg, &ls, n)?;
    Ok(estimate_condition(&d.system.matrix)?.kappa)
}

/// Translate the domain by `t h / m` along the diagonal for `t = 0..m` and record `κ₂`.
pub fn condition_sweep(cfg: &ExperimentConfig) -> Result<SweepReport> {
    let n = cfg.sweep_n;
    let m = cfg.sweep_offsets;
    let h = build_background(cfg.bbox, n)?.h;
    let dir = sweep_direction();
    let points = (0..m)
        .map(|t| {
            let offset = t as f64 * h / m as f64;
            condition_at(cfg, n, dir * offset).map(|kappa| SweepPoint { offset, kappa })
        })
        .collect::<Result<_>>()?;
    Ok(SweepReport { n, h, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{FormConfig, Variant};
    use crate::geometry::{Shape, Solution};

    #[test]
    fn eoc_definition() {
        let r = eoc(0.1, 0.025, 0.2, 0.1).unwrap();
        assert!((r - 2.0).abs() < 1e-14);
        assert!(eoc(1e-15, 1e-16, 0.2, 0.1).is_none());
        assert!(eoc(0.0, 1.0, 0.2, 0.1).is_none());
    }

    #[test]
    fn slope_of_exact_power_law() {
        let h = [0.1, 0.05, 0.025, 0.0125];
        let e: Vec<f64> = h.iter().map(|x| 3.0 * x * x * x).collect();
        assert!((fitted_slope(&h, &e) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_covers_the_triangle() {
        let tri = [Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(0.2, 0.7)];
        let cells = refine(tri, EXACT_DOMAIN_REFINEMENTS);
        assert_eq!(cells.len(), 256);
        let area = |t: &[Vec2; 3]| 0.5 * (t[1] - t[0]).cross(t[2] - t[0]);
        let total: f64 = cells.iter().map(area).sum();
        assert!((total - area(&tri)).abs() < 1e-15);
        assert!(cells.iter().all(|c| area(c) > 0.0));
    }

    fn affine_config() -> ExperimentConfig {
        ExperimentConfig {
            level_set: LevelSet::new(Shape::circle(Vec2::new(0.02, 0.01), 0.55)).with_solution(Solution::Affine {
                a: 1.5,
                b: -0.5,
                c: 0.25,
            }),
            order: 1,
            form: FormConfig::new(Variant::NonsymmetricTaylor(1)),
            levels: vec![8],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn interpolant_of_affine_solution_has_zero_error() {
        let cfg = affine_config();
        let d = Discretization::new(&cfg, &cfg.level_set, 8).unwrap();
        let ui: Vec<f64> = d
            .dofs
            .coordinates
            .iter()
            .map(|&p| cfg.level_set.exact_solution(p).unwrap())
            .collect();
        let e = compute_errors(&d, &cfg.level_set, &ui, 0.1, true).unwrap();
        assert!(e.l2 < 1e-12 && e.h1 < 1e-12 && e.energy < 1e-12, "{e:?}");
        assert!(e.l2_exact_domain.unwrap() < 1e-12);
    }

    #[test]
    fn error_of_zero_function_matches_norms_of_u() {
        // u = 1 on a circle: ‖u‖ = sqrt(|Ω_h|), |u|₁ = 0
        let mut cfg = affine_config();
        cfg.level_set.solution = Some(Solution::Affine { a: 0.0, b: 0.0, c: 1.0 });
        let d = Discretization::new(&cfg, &cfg.level_set, 16).unwrap();
        let zero = vec![0.0; d.dofs.num_dofs()];
        let e = compute_errors(&d, &cfg.level_set, &zero, 0.1, true).unwrap();
        assert!((e.l2 - d.active.discrete_area().sqrt()).abs() < 1e-12);
        assert_eq!(e.h1, 0.0);
        let len = d.active.discrete_boundary_length();
        assert!((e.energy - (len / d.active.h()).sqrt()).abs() < 1e-10);
        let exact_area = std::f64::consts::PI * 0.55 * 0.55;
        let sampled = e.l2_exact_domain.unwrap().powi(2);
        assert!((sampled - exact_area).abs() < 1e-3, "{sampled} vs {exact_area}");
    }

    #[test]
    fn study_records_failing_levels_and_continues() {
        let mut cfg = affine_config();
        // n = 2 violates the containment check, n = 8 is fine
        cfg.levels = vec![2, 8];
        let rep = run_study(&cfg);
        assert_eq!(rep.failures().len(), 1);
        assert!(rep.failures()[0].config_error);
        assert_eq!(rep.successes().len(), 1);
        assert!(rep.successes()[0].errors.l2 < 1e-8);
    }

    #[test]
    fn ring_p2_solver_residual_within_iteration_cap() {
        let cfg = ExperimentConfig::default();
        let d = Discretization::new(&cfg, &cfg.level_set, 16).unwrap();
        let n = d.dofs.num_dofs();
        let rep = solve(
            &d.system.matrix,
            &d.system.rhs,
            &SolverOptions {
                max_iter: Some(10 * n),
                method: crate::linsolve::SolverMethod::GmresJacobi,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        assert!(rep.residual <= 1e-10);
        assert!(rep.iterations <= 10 * n);
    }
}
