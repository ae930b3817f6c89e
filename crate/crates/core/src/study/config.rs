//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # ring benchmark, quadratic elements
//! geometry = ring
//! order = 2
//! method = symmetric_k1
//! levels = 16, 32, 64, 128
//! csv = ring_p2.csv
//! ```
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::assembly::{FormConfig, NormalSource, Variant, DEFAULT_BETA, DEFAULT_GAMMA};
use crate::error::{Error, Result};
use crate::geometry::{LevelSet, LoadExtension, Shape, Solution, Vec2};
use crate::linsolve::DEFAULT_TOL;
use crate::mesh::Rect;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub level_set: LevelSet,
    pub order: usize,
    pub form: FormConfig,
    /// Subdivisions per box side, strictly increasing.
    pub levels: Vec<usize>,
    pub bbox: Rect,
    pub solver_tol: f64,
    pub csv: Option<String>,
    /// Stem for `<plot>.svg` and `<plot>.gp`.
    pub plot: Option<String>,
    pub mesh_dump: bool,
    pub matrix_dump: bool,
    pub condition: bool,
    pub exact_domain_error: bool,
    /// Record wall time; off gives reproducible CSV files.
    pub timing: bool,
    /// Background resolution of the cut-position sweep.
    pub sweep_n: usize,
    pub sweep_offsets: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "ring".into(),
            level_set: LevelSet::ring_benchmark(),
            order: 2,
            form: FormConfig::default(),
            levels: vec![16, 32, 64, 128],
            bbox: Rect::symmetric(),
            solver_tol: DEFAULT_TOL,
            csv: None,
            plot: None,
            mesh_dump: false,
            matrix_dump: false,
            condition: false,
            exact_domain_error: true,
            timing: true,
            sweep_n: 32,
            sweep_offsets: 16,
        }
    }
}

const KEYS: &[&str] = &[
    "name",
    "geometry",
    "ring.r_inner",
    "ring.r_outer",
    "ring.amplitude",
    "ellipse.a",
    "ellipse.b",
    "circle.cx",
    "circle.cy",
    "circle.radius",
    "affine.nx",
    "affine.ny",
    "affine.offset",
    "offset_x",
    "offset_y",
    "solution",
    "solution.a",
    "solution.b",
    "solution.c",
    "load_extension",
    "order",
    "method",
    "taylor_k",
    "beta",
    "gamma_j",
    "normal_source",
    "levels",
    "box",
    "solver_tol",
    "csv",
    "plot",
    "mesh_dump",
    "matrix_dump",
    "condition",
    "exact_domain_error",
    "timing",
    "sweep_n",
    "sweep_offsets",
];

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|(_, v)| v.as_str())
    }

    fn float(&self, key: &str, default: f64) -> Result<f64> {
        match self.0.get(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Config(format!("line {line}: {key} expects a number, got '{v}'"))),
        }
    }

    fn uint(&self, key: &str, default: usize) -> Result<usize> {
        match self.0.get(key) {
            None => Ok(default),
            Some((line, v)) => v
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("line {line}: {key} expects a non-negative integer, got '{v}'"))),
        }
    }

    fn flag(&self, key: &str, default: bool) -> Result<bool> {
        match self.0.get(key) {
            None => Ok(default),
            Some((line, v)) => match v.as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(Error::Config(format!(
                    "line {line}: {key} expects true or false, got '{v}'"
                ))),
            },
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        let Some((line, v)) = self.0.get(key) else {
            return Ok(None);
        };
        v.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<T>()
                    .map_err(|_| Error::Config(format!("line {line}: bad entry '{s}' in {key}")))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }
}

fn parse_entries(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected 'key = value'", i + 1)));
        };
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", i + 1)));
        }
        if map.insert(key.to_string(), (i + 1, value.trim().to_string())).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", i + 1)));
        }
    }
    Ok(Entries(map))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if !text.lines().any(|l| l.trim_start().starts_with("name")) {
            if let Some(stem) = path.file_stem() {
                cfg.name = stem.to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let e = parse_entries(text)?;
        let d = ExperimentConfig::default();

        let geometry = e.raw("geometry").unwrap_or("ring");
        let (shape, default_solution) = match geometry {
            "ring" => {
                let (ri, ro) = (e.float("ring.r_inner", 0.25)?, e.float("ring.r_outer", 0.75)?);
                if !(0.0 < ri && ri < ro) {
                    return Err(Error::Config(format!(
                        "ring radii must satisfy 0 < r_inner < r_outer, got {ri}, {ro}"
                    )));
                }
                let amplitude = e.float("ring.amplitude", 20.0)?;
                (
                    Shape::ring(ri, ro),
                    Some(Solution::RingQuadratic {
                        r_inner: ri,
                        r_outer: ro,
                        amplitude,
                    }),
                )
            }
            "ellipse" => {
                let (a, b) = (e.float("ellipse.a", 0.75)?, e.float("ellipse.b", 0.5)?);
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::Config("ellipse semi-axes must be positive".into()));
                }
                (Shape::ellipse(a, b), Some(Solution::EllipseCosine))
            }
            "circle" => {
                let r = e.float("circle.radius", 0.5)?;
                if !(r > 0.0) {
                    return Err(Error::Config("circle radius must be positive".into()));
                }
                let c = Vec2::new(e.float("circle.cx", 0.0)?, e.float("circle.cy", 0.0)?);
                (Shape::circle(c, r), None)
            }
            "affine" => {
                let n = Vec2::new(e.float("affine.nx", 0.0)?, e.float("affine.ny", 1.0)?);
                if n.norm() == 0.0 {
                    return Err(Error::Config("affine normal must be nonzero".into()));
                }
                (Shape::affine(n, e.float("affine.offset", 0.0)?), None)
            }
            other => return Err(Error::Config(format!("unknown geometry '{other}'"))),
        };

        let solution = match e.raw("solution") {
            None | Some("default") => default_solution,
            Some("none") => None,
            Some("affine") => Some(Solution::Affine {
                a: e.float("solution.a", 0.0)?,
                b: e.float("solution.b", 0.0)?,
                c: e.float("solution.c", 0.0)?,
            }),
            Some(other) => return Err(Error::Config(format!("unknown solution '{other}'"))),
        };
        let load_extension = match e.raw("load_extension").unwrap_or("zero") {
            "zero" => LoadExtension::Zero,
            "smooth" => LoadExtension::Smooth,
            other => return Err(Error::Config(format!("unknown load_extension '{other}'"))),
        };
        let mut level_set = LevelSet::new(shape)
            .translated(Vec2::new(e.float("offset_x", 0.0)?, e.float("offset_y", 0.0)?))
            .with_load_extension(load_extension);
        level_set.solution = solution;

        let order = e.uint("order", d.order)?;
        if !(1..=3).contains(&order) {
            return Err(Error::Config(format!("order must be 1, 2 or 3, got {order}")));
        }
        let variant = match e.raw("method").unwrap_or("symmetric_k1") {
            "symmetric_k1" | "symmetric" => Variant::SymmetricK1,
            "nonsymmetric" => Variant::NonsymmetricTaylor(e.uint("taylor_k", 1)?),
            "exact_boundary" => Variant::ExactBoundaryNitsche,
            other => return Err(Error::Config(format!("unknown method '{other}'"))),
        };
        let normal_source = match e.raw("normal_source").unwrap_or("facet") {
            "facet" => NormalSource::FacetNormal,
            "exact" => NormalSource::ExactNormalAtProjection,
            other => return Err(Error::Config(format!("unknown normal_source '{other}'"))),
        };
        let form = FormConfig {
            variant,
            beta: e.float("beta", DEFAULT_BETA)?,
            gamma_j: e.float("gamma_j", DEFAULT_GAMMA)?,
            normal_source,
        };
        form.validate(order)?;
        if variant == Variant::ExactBoundaryNitsche && level_set.solution.is_none() {
            return Err(Error::Config(
                "method exact_boundary needs a closed-form solution".into(),
            ));
        }

        let levels: Vec<usize> = e.list("levels")?.unwrap_or(d.levels);
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::Config(
                "levels must be a non-empty list of positive integers".into(),
            ));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "levels must be strictly increasing, got {levels:?}"
            )));
        }

        let bbox = match e.list::<f64>("box")? {
            None => d.bbox,
            Some(v) if v.len() == 4 && v[0] < v[2] && v[1] < v[3] => {
                Rect::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
            }
            Some(v) => return Err(Error::Config(format!("box expects 'xmin ymin xmax ymax', got {v:?}"))),
        };

        let solver_tol = e.float("solver_tol", d.solver_tol)?;
        if !(solver_tol > 0.0) {
            return Err(Error::Config("solver_tol must be positive".into()));
        }
        let sweep_n = e.uint("sweep_n", d.sweep_n)?;
        let sweep_offsets = e.uint("sweep_offsets", d.sweep_offsets)?;
        if sweep_n == 0 || sweep_offsets == 0 {
            return Err(Error::Config("sweep_n and sweep_offsets must be positive".into()));
        }

        Ok(Self {
            name: e.raw("name").unwrap_or(geometry).to_string(),
            level_set,
            order,
            form,
            levels,
            bbox,
            solver_tol,
            csv: e.raw("csv").map(str::to_string),
            plot: e.raw("plot").map(str::to_string),
            mesh_dump: e.flag("mesh_dump", d.mesh_dump)?,
            matrix_dump: e.flag("matrix_dump", d.matrix_dump)?,
            condition: e.flag("condition", d.condition)?,
            exact_domain_error: e.flag("exact_domain_error", d.exact_domain_error)?,
            timing: e.flag("timing", d.timing)?,
            sweep_n,
            sweep_offsets,
        })
    }
}

impl fmt::Display for ExperimentConfig {
    /// Writes the configuration back in the file format.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "name = {}", self.name)?;
        match &self.level_set.shape {
            Shape::Ring { r_inner, r_outer } => {
                writeln!(f, "geometry = ring\nring.r_inner = {r_inner}\nring.r_outer = {r_outer}")?;
                if let Some(Solution::RingQuadratic { amplitude, .. }) = &self.level_set.solution {
                    writeln!(f, "ring.amplitude = {amplitude}")?;
                }
            }
            Shape::Ellipse { a, b } => writeln!(f, "geometry = ellipse\nellipse.a = {a}\nellipse.b = {b}")?,
            Shape::Circle { center, radius } => writeln!(
                f,
                "geometry = circle\ncircle.cx = {}\ncircle.cy = {}\ncircle.radius = {radius}",
                center.x, center.y
            )?,
            Shape::Affine { normal, offset } => writeln!(
                f,
                "geometry = affine\naffine.nx = {}\naffine.ny = {}\naffine.offset = {offset}",
                normal.x, normal.y
            )?,
        }
        let t = self.level_set.translation;
        if t != Vec2::ZERO {
            writeln!(f, "offset_x = {}\noffset_y = {}", t.x, t.y)?;
        }
        match &self.level_set.solution {
            None => writeln!(f, "solution = none")?,
            Some(Solution::Affine { a, b, c }) => writeln!(
                f,
                "solution = affine\nsolution.a = {a}\nsolution.b = {b}\nsolution.c = {c}"
            )?,
            Some(_) => {}
        }
        if self.level_set.load_extension == LoadExtension::Smooth {
            writeln!(f, "load_extension = smooth")?;
        }
        writeln!(f, "order = {}", self.order)?;
        match self.form.variant {
            Variant::SymmetricK1 => writeln!(f, "method = symmetric_k1")?,
            Variant::NonsymmetricTaylor(k) => writeln!(f, "method = nonsymmetric\ntaylor_k = {k}")?,
            Variant::ExactBoundaryNitsche => writeln!(f, "method = exact_boundary")?,
        }
        if self.form.normal_source == NormalSource::ExactNormalAtProjection {
            writeln!(f, "normal_source = exact")?;
        }
        writeln!(f, "beta = {}\ngamma_j = {}", self.form.beta, self.form.gamma_j)?;
        let levels: Vec<String> = self.levels.iter().map(|l| l.to_string()).collect();
        writeln!(f, "levels = {}", levels.join(", "))?;
        let b = self.bbox;
        writeln!(f, "box = {} {} {} {}", b.min.x, b.min.y, b.max.x, b.max.y)?;
        writeln!(f, "solver_tol = {:e}", self.solver_tol)?;
        if let Some(csv) = &self.csv {
            writeln!(f, "csv = {csv}")?;
        }
        if let Some(plot) = &self.plot {
            writeln!(f, "plot = {plot}")?;
        }
        writeln!(f, "condition = {}", self.condition)?;
        writeln!(f, "exact_domain_error = {}", self.exact_domain_error)?;
        writeln!(f, "timing = {}", self.timing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_from_minimal_file() {
        let cfg = ExperimentConfig::parse("geometry = ring\n").unwrap();
        assert_eq!(cfg.order, 2);
        assert_eq!(cfg.levels, vec![16, 32, 64, 128]);
        assert_eq!(cfg.form.beta, 100.0);
        assert_eq!(cfg.form.gamma_j, 0.1);
        assert_eq!(cfg.level_set, LevelSet::ring_benchmark());
    }

    #[test]
    fn full_file() {
        let text = "\
# ellipse study
geometry = ellipse   # semi-axes default
order = 3
method = nonsymmetric
taylor_k = 2
levels = 8, 16 32
box = -1 -1 1 1
csv = out.csv
condition = yes
timing = off
";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.order, 3);
        assert_eq!(cfg.form.variant, Variant::NonsymmetricTaylor(2));
        assert_eq!(cfg.levels, vec![8, 16, 32]);
        assert_eq!(cfg.csv.as_deref(), Some("out.csv"));
        assert!(cfg.condition && !cfg.timing);
        assert_eq!(cfg.level_set, LevelSet::ellipse_benchmark());
    }

    #[test]
    fn round_trip_through_display() {
        let text = "geometry = circle\ncircle.radius = 0.6\nsolution = affine\nsolution.a = 1\norder = 1\nmethod = nonsymmetric\ntaylor_k = 1\nnormal_source = exact\nlevels = 4, 8\noffset_x = 0.01\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "geometry = torus",
            "order = 4",
            "levels = 32, 16",
            "levels = ",
            "method = nonsymmetric\ntaylor_k = 2\norder = 1",
            "beta = -1",
            "gamma_j = 0",
            "bogus = 1",
            "order = 2\norder = 3",
            "just some words",
            "box = 1 1 0 0",
            "geometry = circle\nmethod = exact_boundary",
            "method = symmetric_k1\nnormal_source = exact",
        ] {
            let err = ExperimentConfig::parse(text).unwrap_err();
            assert!(err.is_config(), "{text}: {err}");
        }
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = ExperimentConfig::from_file(Path::new("/nonexistent/ring.cfg")).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("/nonexistent/ring.cfg"));
    }
}
