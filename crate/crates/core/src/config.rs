//! TOML experiment configuration.
//!
//! ```toml
//! output_dir = "out"
//! seed = 7                      # optional, overrides every seed below
//!
//! [domain]
//! kind = "box"                  # box | disk | polygon
//! lo = [-1.0, -1.0]
//! hi = [1.0, 1.0]
//!
//! [target]
//! kind = "grid"                 # grid | clusters | dumbbell | file
//! k = 5
//! extent = 1.0
//!
//! [solver]                      # optional
//! mode = "exact-2d"             # exact-2d | monte-carlo
//! tolerance = 1e-6
//!
//! [singularity]                 # optional
//! threshold = 1.5
//!
//! [render]                      # optional
//! size = 800
//! show_singular_edges = true
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Generator, LabelledTarget};
use crate::geometry::{ConvexPolygon, Point2};
use crate::measure::{DiscreteTargetMeasure, Shape, SourceDomain};
use crate::solver::{SolveMode, SolverConfig};

/// Environment variable read by the command line to override `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "BRENIER_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawDomain")]
pub enum DomainSpec {
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Disk { center: Point2, radius: f64 },
    Polygon { vertices: Vec<Point2> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawTarget")]
pub enum TargetSpec {
    Grid {
        k: usize,
        extent: f64,
    },
    Clusters {
        centers: Vec<Point2>,
        per_cluster: usize,
        radius: f64,
        seed: u64,
    },
    Dumbbell {
        bell_radius: f64,
        bar_width: f64,
        separation: f64,
        count: usize,
        seed: u64,
    },
    File {
        path: PathBuf,
        dim: usize,
        mass_tolerance: f64,
    },
}

// Flat mirrors of the tagged sections. Parsing a plain struct keeps the
// position of every key, so type errors point at the offending line.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DomainKind {
    Box,
    Disk,
    Polygon,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: DomainKind,
    lo: Option<Vec<f64>>,
    hi: Option<Vec<f64>>,
    center: Option<Point2>,
    radius: Option<f64>,
    vertices: Option<Vec<Point2>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TargetKind {
    Grid,
    Clusters,
    Dumbbell,
    File,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    kind: TargetKind,
    k: Option<usize>,
    extent: Option<f64>,
    centers: Option<Vec<Point2>>,
    per_cluster: Option<usize>,
    radius: Option<f64>,
    seed: Option<u64>,
    bell_radius: Option<f64>,
    bar_width: Option<f64>,
    separation: Option<f64>,
    count: Option<usize>,
    path: Option<PathBuf>,
    dim: Option<usize>,
    mass_tolerance: Option<f64>,
}

/// Takes a required field, or names it in the error.
fn need<T>(section: &str, kind: &str, field: &str, v: Option<T>) -> std::result::Result<T, String> {
    v.ok_or_else(|| format!("{section}.{field} is required for kind = \"{kind}\""))
}

/// Rejects fields that do not belong to the chosen kind.
fn reject(section: &str, kind: &str, present: &[(&str, bool)]) -> std::result::Result<(), String> {
    match present.iter().find(|(_, p)| *p) {
        Some((field, _)) => Err(format!("{section}.{field} is not used by kind = \"{kind}\"")),
        None => Ok(()),
    }
}

impl TryFrom<RawDomain> for DomainSpec {
    type Error = String;

    fn try_from(r: RawDomain) -> std::result::Result<Self, String> {
        let sec = "domain";
        match r.kind {
            DomainKind::Box => {
                reject(sec, "box", &[("center", r.center.is_some()), ("radius", r.radius.is_some()), ("vertices", r.vertices.is_some())])?;
                Ok(Self::Box {
                    lo: need(sec, "box", "lo", r.lo)?,
                    hi: need(sec, "box", "hi", r.hi)?,
                })
            }
            DomainKind::Disk => {
                reject(sec, "disk", &[("lo", r.lo.is_some()), ("hi", r.hi.is_some()), ("vertices", r.vertices.is_some())])?;
                Ok(Self::Disk {
                    center: need(sec, "disk", "center", r.center)?,
                    radius: need(sec, "disk", "radius", r.radius)?,
                })
            }
            DomainKind::Polygon => {
                reject(sec, "polygon", &[("lo", r.lo.is_some()), ("hi", r.hi.is_some()), ("center", r.center.is_some()), ("radius", r.radius.is_some())])?;
                Ok(Self::Polygon {
                    vertices: need(sec, "polygon", "vertices", r.vertices)?,
                })
            }
        }
    }
}

impl TryFrom<RawTarget> for TargetSpec {
    type Error = String;

    fn try_from(r: RawTarget) -> std::result::Result<Self, String> {
        let sec = "target";
        let grid = [("k", r.k.is_some()), ("extent", r.extent.is_some())];
        let clusters = [("centers", r.centers.is_some()), ("per_cluster", r.per_cluster.is_some())];
        let dumbbell = [
            ("bell_radius", r.bell_radius.is_some()),
            ("bar_width", r.bar_width.is_some()),
            ("separation", r.separation.is_some()),
            ("count", r.count.is_some()),
        ];
        let file = [("path", r.path.is_some()), ("dim", r.dim.is_some()), ("mass_tolerance", r.mass_tolerance.is_some())];
        let radius = [("radius", r.radius.is_some())];
        let seed = [("seed", r.seed.is_some())];
        match r.kind {
            TargetKind::Grid => {
                reject(sec, "grid", &[&clusters[..], &dumbbell, &file, &radius, &seed].concat())?;
                Ok(Self::Grid {
                    k: need(sec, "grid", "k", r.k)?,
                    extent: need(sec, "grid", "extent", r.extent)?,
                })
            }
            TargetKind::Clusters => {
                reject(sec, "clusters", &[&grid[..], &dumbbell, &file].concat())?;
                Ok(Self::Clusters {
                    centers: need(sec, "clusters", "centers", r.centers)?,
                    per_cluster: need(sec, "clusters", "per_cluster", r.per_cluster)?,
                    radius: need(sec, "clusters", "radius", r.radius)?,
                    seed: r.seed.unwrap_or(0),
                })
            }
            TargetKind::Dumbbell => {
                reject(sec, "dumbbell", &[&grid[..], &clusters, &file, &radius].concat())?;
                Ok(Self::Dumbbell {
                    bell_radius: need(sec, "dumbbell", "bell_radius", r.bell_radius)?,
                    bar_width: need(sec, "dumbbell", "bar_width", r.bar_width)?,
                    separation: need(sec, "dumbbell", "separation", r.separation)?,
                    count: need(sec, "dumbbell", "count", r.count)?,
                    seed: r.seed.unwrap_or(0),
                })
            }
            TargetKind::File => {
                reject(sec, "file", &[&grid[..], &clusters, &dumbbell, &radius, &seed].concat())?;
                Ok(Self::File {
                    path: need(sec, "file", "path", r.path)?,
                    dim: r.dim.unwrap_or_else(default_dim),
                    mass_tolerance: r.mass_tolerance.unwrap_or_else(default_mass_tolerance),
                })
            }
        }
    }
}

fn default_dim() -> usize {
    2
}

fn default_mass_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub mode: Option<SolveMode>,
    pub tolerance: Option<f64>,
    pub max_iterations: Option<usize>,
    pub damping: Option<f64>,
    pub min_step: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularitySection {
    /// Jump threshold; defaults to three times the median adjacent gap.
    pub threshold: Option<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_steps() -> usize {
    10_000
}

impl Default for SingularitySection {
    fn default() -> Self {
        Self {
            threshold: None,
            steps: default_steps(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    Default,
    Grey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSection {
    #[serde(default = "default_size")]
    pub size: u32,
    #[serde(default = "default_palette")]
    pub palette: Palette,
    #[serde(default = "default_true")]
    pub show_singular_edges: bool,
}

fn default_size() -> u32 {
    800
}

fn default_palette() -> Palette {
    Palette::Default
}

fn default_true() -> bool {
    true
}

impl Default for RenderSection {
    fn default() -> Self {
        Self {
            size: default_size(),
            palette: default_palette(),
            show_singular_edges: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: u64,
}

fn default_ladder() -> Vec<usize> {
    vec![50, 200, 800]
}

fn default_seeds() -> u64 {
    10
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            ladder: default_ladder(),
            seeds: default_seeds(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub seed: Option<u64>,
    pub domain: DomainSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub singularity: SingularitySection,
    #[serde(default)]
    pub render: RenderSection,
    #[serde(default)]
    pub oracle: OracleSection,
    /// Directory that relative paths refer to.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Parses TOML text. Errors carry the line, column and field.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        if let TargetSpec::File { path, .. } = &self.target {
            let p = self.resolve(path);
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!("target.path: file {} does not exist", p.display())));
            }
        }
        if let Some(t) = self.singularity.threshold {
            if !(t > 0.0) {
                return Err(Error::ThresholdNonpositive(t));
            }
        }
        if self.singularity.steps < 2 {
            return Err(Error::InvalidConfig("singularity.steps must be at least 2".into()));
        }
        if self.render.size == 0 {
            return Err(Error::InvalidConfig("render.size must be positive".into()));
        }
        self.solver_config().validate()?;
        self.source_domain()?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Applies a seed override to the config and the generators.
    pub fn override_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
    }

    /// Output directory, relative to the config file unless absolute.
    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn source_domain(&self) -> Result<SourceDomain> {
        let shape = match &self.domain {
            DomainSpec::Box { lo, hi } => Shape::Box {
                lo: lo.clone(),
                hi: hi.clone(),
            },
            DomainSpec::Disk { center, radius } => Shape::Ball {
                center: center.to_vec(),
                radius: *radius,
            },
            DomainSpec::Polygon { vertices } => Shape::Polygon {
                polygon: ConvexPolygon::try_new(vertices.clone())
                    .ok_or_else(|| Error::InvalidDomain("domain.vertices must form a convex counter-clockwise polygon".into()))?,
            },
        };
        SourceDomain::new(shape, self.seed())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        let base = match s.mode.unwrap_or(SolveMode::Exact2d) {
            SolveMode::Exact2d => SolverConfig::exact(),
            SolveMode::MonteCarlo => SolverConfig::monte_carlo(),
        };
        SolverConfig {
            mode: base.mode,
            tolerance: s.tolerance.unwrap_or(base.tolerance),
            max_iterations: s.max_iterations.unwrap_or(base.max_iterations),
            damping: s.damping.unwrap_or(base.damping),
            min_step: s.min_step.unwrap_or(base.min_step),
            samples: s.samples.unwrap_or(base.samples),
            seed: self.seed.or(s.seed).unwrap_or(base.seed),
        }
    }

    /// Builds the target measure with optional group labels.
    pub fn target(&self) -> Result<LabelledTarget> {
        let generator = match &self.target {
            TargetSpec::File {
                path,
                dim,
                mass_tolerance,
            } => {
                let measure = DiscreteTargetMeasure::from_csv_path(&self.resolve(path), *dim, *mass_tolerance)?;
                let labels = vec![0; measure.len()];
                return Ok(LabelledTarget { measure, labels });
            }
            TargetSpec::Grid { k, extent } => Generator::Grid { k: *k, extent: *extent },
            TargetSpec::Clusters {
                centers,
                per_cluster,
                radius,
                seed,
            } => Generator::Clusters {
                centers: centers.clone(),
                per_cluster: *per_cluster,
                radius: *radius,
                seed: *seed,
            },
            TargetSpec::Dumbbell {
                bell_radius,
                bar_width,
                separation,
                count,
                seed,
            } => Generator::Dumbbell {
                bell_radius: *bell_radius,
                bar_width: *bar_width,
                separation: *separation,
                count: *count,
                seed: *seed,
            },
        };
        let mut generator = generator;
        if let Some(seed) = self.seed {
            generator.set_seed(seed);
        }
        generator.build()
    }
}
