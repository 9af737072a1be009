//! Run configuration: flat `key = value` text with `[section]` headers.
//!
//! ```text
//! [mesh]
//! source = structured:8        # or a mesh file path
//! extent = 0, 0, 1, 1
//!
//! [params]                     # either alpha/beta/gamma/porosity ...
//! alpha = 1
//! beta = 0.5 + x
//! gamma = 1
//! porosity = @porosity.txt     # one value per triangle
//!
//! [problem]
//! variant = closed-form
//! source = 1 + x*y
//! boundary = 1 + x
//! initial_physical = 1         # or initial_transformed
//!
//! [time]
//! dt = 0.1
//! steps = 10
//!
//! [newton]
//! abs_tol = 1e-10
//!
//! [output]
//! dir = out
//! vtk = true
//! ```
//!
//! Instead of `alpha`/`beta`/`gamma` the `[params]` section may give the
//! physical data `permeability`, `forchheimer`, `viscosity`,
//! `molecular_weight`, `temperature`, `gas_constant` (plus `porosity`).
//! Coefficient values are numbers, expressions in `x, y` averaged over each
//! triangle, or `@file` lists with one value per triangle.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::condense::{NewtonConfig, Variant};
use crate::constitutive::{Coefficients, LawConfig, PhysicalParams};
use crate::elements::QuadratureRule;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::globalsys::Problem;
use crate::march::{transformed_pressure, TimeSchedule};
use crate::mesh::{Mesh, Rect};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Structured(usize),
    File(PathBuf),
}

impl MeshSource {
    pub fn parse(s: &str) -> Result<MeshSource> {
        let s = s.trim();
        match s.strip_prefix("structured:") {
            Some(n) => n
                .trim()
                .parse()
                .ok()
                .filter(|&n: &usize| n > 0)
                .map(MeshSource::Structured)
                .ok_or_else(|| Error::Config(format!("bad structured mesh size in '{s}'"))),
            None if s.is_empty() => Err(Error::Config("empty mesh source".into())),
            None => Ok(MeshSource::File(PathBuf::from(s))),
        }
    }
}

impl std::fmt::Display for MeshSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MeshSource::Structured(n) => write!(f, "structured:{n}"),
            MeshSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

/// A per-triangle coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Expr(Expr),
    File(PathBuf),
}

impl Field {
    pub fn parse(s: &str) -> Result<Field> {
        match s.trim().strip_prefix('@') {
            Some(path) => Ok(Field::File(PathBuf::from(path.trim()))),
            None => Ok(Field::Expr(Expr::parse(s)?)),
        }
    }

    pub fn constant(v: f64) -> Field {
        Field::Expr(Expr::constant(v))
    }

    /// Triangle averages (by quadrature) or values read from the file.
    pub fn cell_values(&self, mesh: &Mesh, base: &Path) -> Result<Vec<f64>> {
        match self {
            Field::Expr(e) => {
                let rule = QuadratureRule::new(5)?;
                Ok((0..mesh.num_triangles())
                    .map(|k| rule.integrate(&mesh.triangle_coords(k), |x| e.at(x, 0.0)) / mesh.area(k))
                    .collect())
            }
            Field::File(p) => {
                let path = base.join(p);
                let text = std::fs::read_to_string(&path)?;
                let vals = text
                    .lines()
                    .map(|l| l.split('#').next().unwrap_or("").trim())
                    .filter(|l| !l.is_empty())
                    .map(|l| {
                        l.parse::<f64>()
                            .map_err(|_| Error::Config(format!("bad value '{l}' in {}", path.display())))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != mesh.num_triangles() {
                    return Err(Error::Config(format!(
                        "{} has {} values, mesh has {} triangles",
                        path.display(),
                        vals.len(),
                        mesh.num_triangles()
                    )));
                }
                Ok(vals)
            }
        }
    }
}

impl std::fmt::Display for Field {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Field::Expr(e) => write!(f, "{e}"),
            Field::File(p) => write!(f, "@{}", p.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamSpec {
    Direct {
        alpha: Field,
        beta: Field,
        gamma: Field,
        porosity: Field,
    },
    Physical {
        porosity: Field,
        permeability: Field,
        forchheimer: Field,
        viscosity: Field,
        molecular_weight: Field,
        temperature: Field,
        gas_constant: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    /// Transformed pressure `p = |P| P`.
    Transformed(Expr),
    /// Physical pressure `P`.
    Physical(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub extent: Rect,
    pub params: ParamSpec,
    pub variant: Variant,
    pub source: Expr,
    pub boundary: Expr,
    pub initial: Option<Initial>,
    pub dt: f64,
    pub steps: usize,
    pub global: NewtonConfig,
    pub local: NewtonConfig,
    pub quadrature: usize,
    pub eps_p: f64,
    pub output_dir: PathBuf,
    pub vtk: bool,
    /// Export every n-th time step (0: only the last).
    pub every: usize,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mesh: MeshSource::Structured(4),
            extent: Rect::UNIT,
            params: ParamSpec::Direct {
                alpha: Field::constant(1.0),
                beta: Field::constant(1.0),
                gamma: Field::constant(1.0),
                porosity: Field::constant(1.0),
            },
            variant: Variant::ClosedForm,
            source: Expr::constant(0.0),
            boundary: Expr::constant(0.0),
            initial: None,
            dt: 1.0,
            steps: 1,
            global: NewtonConfig::global(),
            local: NewtonConfig::local(),
            quadrature: crate::elements::DEFAULT_DEGREE,
            eps_p: LawConfig::default().eps_p,
            output_dir: PathBuf::from("out"),
            vtk: false,
            every: 0,
            base_dir: PathBuf::new(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str, line: usize) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("line {line}: bad value '{v}' for {key}")))
}

fn flag(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("line {line}: bad boolean '{v}' for {key}"))),
    }
}

const DIRECT_KEYS: [&str; 3] = ["alpha", "beta", "gamma"];
const PHYSICAL_KEYS: [&str; 6] = [
    "permeability",
    "forchheimer",
    "viscosity",
    "molecular_weight",
    "temperature",
    "gas_constant",
];

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let mut cfg = RunConfig::parse(&std::fs::read_to_string(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        let mut params: Vec<(String, String, usize)> = Vec::new();
        let mut initial_seen = false;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                if !["mesh", "params", "problem", "time", "newton", "output"].contains(&section.as_str()) {
                    return Err(Error::Config(format!("line {line_no}: unknown section [{section}]")));
                }
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {line_no}: expected key = value")))?;
            let unknown = || Error::Config(format!("line {line_no}: unknown key '{key}' in [{section}]"));
            let ctx = |e: Error| Error::Config(format!("line {line_no}: {e}"));
            match section.as_str() {
                "mesh" => match key {
                    "source" => cfg.mesh = MeshSource::parse(value)?,
                    "extent" => {
                        let v: Vec<f64> = value
                            .split(',')
                            .map(|s| num("extent", s.trim(), line_no))
                            .collect::<Result<_>>()?;
                        if v.len() != 4 || !(v[2] > v[0] && v[3] > v[1]) {
                            return Err(Error::Config(format!("line {line_no}: extent needs x0, y0, x1, y1")));
                        }
                        cfg.extent = Rect {
                            x0: v[0],
                            y0: v[1],
                            x1: v[2],
                            y1: v[3],
                        };
                    }
                    _ => return Err(unknown()),
                },
                "params" => {
                    if !(DIRECT_KEYS.contains(&key) || PHYSICAL_KEYS.contains(&key) || key == "porosity") {
                        return Err(unknown());
                    }
                    params.push((key.to_string(), value.to_string(), line_no));
                }
                "problem" => match key {
                    "variant" => cfg.variant = value.parse().map_err(ctx)?,
                    "source" => cfg.source = Expr::parse(value).map_err(ctx)?,
                    "boundary" => cfg.boundary = Expr::parse(value).map_err(ctx)?,
                    "initial_transformed" | "initial_physical" => {
                        if initial_seen {
                            return Err(Error::Config(format!("line {line_no}: initial pressure given twice")));
                        }
                        initial_seen = true;
                        let e = Expr::parse(value).map_err(ctx)?;
                        cfg.initial = Some(if key == "initial_physical" {
                            Initial::Physical(e)
                        } else {
                            Initial::Transformed(e)
                        });
                    }
                    _ => return Err(unknown()),
                },
                "time" => match key {
                    "dt" => cfg.dt = num(key, value, line_no)?,
                    "steps" => cfg.steps = num(key, value, line_no)?,
                    _ => return Err(unknown()),
                },
                "newton" => match key {
                    "abs_tol" => cfg.global.abs_tol = num(key, value, line_no)?,
                    "rel_tol" => cfg.global.rel_tol = num(key, value, line_no)?,
                    "max_iter" => cfg.global.max_iter = num(key, value, line_no)?,
                    "local_abs_tol" => cfg.local.abs_tol = num(key, value, line_no)?,
                    "local_rel_tol" => cfg.local.rel_tol = num(key, value, line_no)?,
                    "local_max_iter" => cfg.local.max_iter = num(key, value, line_no)?,
                    "quadrature" => cfg.quadrature = num(key, value, line_no)?,
                    "eps_p" => cfg.eps_p = num(key, value, line_no)?,
                    _ => return Err(unknown()),
                },
                "output" => match key {
                    "dir" => cfg.output_dir = PathBuf::from(value),
                    "vtk" => cfg.vtk = flag(key, value, line_no)?,
                    "every" => cfg.every = num(key, value, line_no)?,
                    _ => return Err(unknown()),
                },
                _ => return Err(Error::Config(format!("line {line_no}: key outside of a section"))),
            }
        }
        if !params.is_empty() {
            cfg.params = parse_params(&params)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if !(self.eps_p > 0.0) {
            return Err(Error::Config("eps_p must be positive".into()));
        }
        QuadratureRule::new(self.quadrature)?;
        self.global.validate()?;
        self.local.validate()?;
        Ok(())
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let r = &self.extent;
        let _ = writeln!(s, "[mesh]\nsource = {}", self.mesh);
        let _ = writeln!(s, "extent = {:?}, {:?}, {:?}, {:?}\n", r.x0, r.y0, r.x1, r.y1);
        s.push_str("[params]\n");
        match &self.params {
            ParamSpec::Direct {
                alpha,
                beta,
                gamma,
                porosity,
            } => {
                let _ = writeln!(s, "alpha = {alpha}\nbeta = {beta}\ngamma = {gamma}\nporosity = {porosity}");
            }
            ParamSpec::Physical {
                porosity,
                permeability,
                forchheimer,
                viscosity,
                molecular_weight,
                temperature,
                gas_constant,
            } => {
                let _ = writeln!(s, "porosity = {porosity}\npermeability = {permeability}");
                let _ = writeln!(s, "forchheimer = {forchheimer}\nviscosity = {viscosity}");
                let _ = writeln!(s, "molecular_weight = {molecular_weight}\ntemperature = {temperature}");
                let _ = writeln!(s, "gas_constant = {gas_constant:?}");
            }
        }
        let _ = writeln!(s, "\n[problem]\nvariant = {}", self.variant);
        let _ = writeln!(s, "source = {}\nboundary = {}", self.source, self.boundary);
        match &self.initial {
            Some(Initial::Transformed(e)) => {
                let _ = writeln!(s, "initial_transformed = {e}");
            }
            Some(Initial::Physical(e)) => {
                let _ = writeln!(s, "initial_physical = {e}");
            }
            None => {}
        }
        let _ = writeln!(s, "\n[time]\ndt = {:?}\nsteps = {}", self.dt, self.steps);
        let (g, l) = (&self.global, &self.local);
        let _ = writeln!(s, "\n[newton]\nabs_tol = {:?}\nrel_tol = {:?}\nmax_iter = {}", g.abs_tol, g.rel_tol, g.max_iter);
        let _ = writeln!(s, "local_abs_tol = {:?}\nlocal_rel_tol = {:?}\nlocal_max_iter = {}", l.abs_tol, l.rel_tol, l.max_iter);
        let _ = writeln!(s, "quadrature = {}\neps_p = {:?}", self.quadrature, self.eps_p);
        let _ = writeln!(s, "\n[output]\ndir = {}\nvtk = {}\nevery = {}", self.output_dir.display(), self.vtk, self.every);
        s
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match &self.mesh {
            MeshSource::Structured(n) => Mesh::structured(*n, self.extent),
            MeshSource::File(p) => Mesh::load(self.resolve(p)),
        }
    }

    pub fn coefficients(&self, mesh: &Mesh) -> Result<Coefficients> {
        let cells = |f: &Field| f.cell_values(mesh, &self.base_dir);
        match &self.params {
            ParamSpec::Direct {
                alpha,
                beta,
                gamma,
                porosity,
            } => Coefficients {
                alpha: cells(alpha)?,
                beta: cells(beta)?,
                gamma: cells(gamma)?,
                porosity: cells(porosity)?,
                dt: self.dt,
            }
            .with_dt(self.dt),
            ParamSpec::Physical {
                porosity,
                permeability,
                forchheimer,
                viscosity,
                molecular_weight,
                temperature,
                gas_constant,
            } => Coefficients::derive(
                &PhysicalParams {
                    porosity: cells(porosity)?,
                    permeability: cells(permeability)?,
                    forchheimer: cells(forchheimer)?,
                    viscosity: cells(viscosity)?,
                    molecular_weight: cells(molecular_weight)?,
                    temperature: cells(temperature)?,
                    gas_constant: *gas_constant,
                },
                self.dt,
            ),
        }
    }

    /// Stationary problem with source and boundary data at time `t`.
    pub fn build_problem(&self, t: f64) -> Result<Problem> {
        let mesh = Arc::new(self.build_mesh()?);
        let coeffs = self.coefficients(&mesh)?;
        let mut p = Problem::with_quadrature(mesh, coeffs, self.variant, QuadratureRule::new(self.quadrature)?)?;
        p.law = LawConfig { eps_p: self.eps_p };
        p.local = self.local;
        p.global = self.global;
        let (f, g) = (&self.source, &self.boundary);
        p.set_source_fn(|x| f.at(x, t));
        p.set_boundary_fn(|x| g.at(x, t));
        Ok(p)
    }

    /// Initial transformed pressures at the triangle centroids (zero if unset).
    pub fn schedule(&self, mesh: &Mesh) -> Result<TimeSchedule> {
        let p0 = (0..mesh.num_triangles())
            .map(|k| {
                let c = mesh.centroid(k);
                match &self.initial {
                    None => 0.0,
                    Some(Initial::Transformed(e)) => e.at(c, 0.0),
                    Some(Initial::Physical(e)) => transformed_pressure(e.at(c, 0.0)),
                }
            })
            .collect();
        TimeSchedule::new(self.dt, self.steps, p0)
    }
}

fn parse_params(entries: &[(String, String, usize)]) -> Result<ParamSpec> {
    let get = |name: &str| entries.iter().find(|(k, _, _)| k == name);
    for (i, (k, _, line)) in entries.iter().enumerate() {
        if entries[..i].iter().any(|(k2, _, _)| k2 == k) {
            return Err(Error::Config(format!("line {line}: {k} given twice")));
        }
    }
    let field = |name: &str, default: Option<f64>| -> Result<Field> {
        match get(name) {
            Some((_, v, line)) => Field::parse(v).map_err(|e| Error::Config(format!("line {line}: {e}"))),
            None => default
                .map(Field::constant)
                .ok_or_else(|| Error::Config(format!("[params] is missing {name}"))),
        }
    };
    let direct = entries.iter().any(|(k, _, _)| DIRECT_KEYS.contains(&k.as_str()));
    let physical = entries.iter().any(|(k, _, _)| PHYSICAL_KEYS.contains(&k.as_str()));
    if direct && physical {
        return Err(Error::Config(
            "[params] mixes alpha/beta/gamma with physical parameters".into(),
        ));
    }
    if physical {
        let (_, gc, line) = get("gas_constant").ok_or_else(|| Error::Config("[params] is missing gas_constant".into()))?;
        Ok(ParamSpec::Physical {
            porosity: field("porosity", None)?,
            permeability: field("permeability", None)?,
            forchheimer: field("forchheimer", None)?,
            viscosity: field("viscosity", None)?,
            molecular_weight: field("molecular_weight", None)?,
            temperature: field("temperature", None)?,
            gas_constant: num("gas_constant", gc, *line)?,
        })
    } else {
        Ok(ParamSpec::Direct {
            alpha: field("alpha", Some(1.0))?,
            beta: field("beta", Some(1.0))?,
            gamma: field("gamma", Some(1.0))?,
            porosity: field("porosity", Some(1.0))?,
        })
    }
}
