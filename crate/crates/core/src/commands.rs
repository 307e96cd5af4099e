//! Command-line front end.
//!
//! Every command reads an experiment config. `solve` writes its artifacts to
//! the output directory; `generate`, `probe` and `render` read them back.
//! Exit codes: 0 success, 1 input error, 2 solver did not converge.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::cells::{exact_cell_stats_2d, PowerCellStats};
use crate::config::{ExperimentConfig, OUTPUT_DIR_ENV};
use crate::error::Error;
use crate::experiments::LabelledTarget;
use crate::geometry::Point2;
use crate::kantorovich::{solve_lp, CostKind};
use crate::measure::SourceDomain;
use crate::potential::BrenierPotential;
use crate::render::RenderScene;
use crate::singularity::{default_threshold, detect_singular_facets, probe_segment, SingularityGraph};
use crate::solver::{solve, CellEstimator, SolveMode, SolveReport};

pub const REPORT_FILE: &str = "report.json";
pub const HEIGHTS_FILE: &str = "heights.csv";
pub const STATS_FILE: &str = "stats.json";
pub const SINGULARITY_FILE: &str = "singularity.json";
pub const GENERATED_FILE: &str = "generated.csv";
pub const PROBE_FILE: &str = "probe.csv";
pub const SVG_FILE: &str = "diagram.svg";
pub const ORACLE_FILE: &str = "oracle.json";

#[derive(Debug, Parser)]
#[command(name = "brenier", version, about = "Semi-discrete optimal transport and power-diagram singularities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment config (TOML).
    pub config: PathBuf,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the Brenier potential and write report, heights and cell statistics.
    Solve {
        #[command(flatten)]
        common: Common,
    },
    /// Push source samples through the solved map.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        count: usize,
    },
    /// Record cell changes along the segment from `--from` to `--to`.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        from: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
        to: Vec<f64>,
        /// Defaults to `singularity.steps` from the config.
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Draw the solved power diagram as SVG.
    Render {
        #[command(flatten)]
        common: Common,
        /// Optional probe segment drawn on top, as `--probe-from x,y --probe-to x,y`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1, requires = "probe_to")]
        probe_from: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1, requires = "probe_from")]
        probe_to: Option<Vec<f64>>,
    },
    /// Compare the semi-discrete cost with exact discrete transport on sampled sources.
    CompareOracle {
        #[command(flatten)]
        common: Common,
        /// Source sample counts; defaults to `oracle.ladder`.
        #[arg(long, value_delimiter = ',')]
        ladder: Option<Vec<usize>>,
        /// Seeds per ladder rung; defaults to `oracle.seeds`.
        #[arg(long)]
        seeds: Option<u64>,
    },
}

/// Command failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MaxIterations(_) | Error::StepUnderflow(_) => 2,
            _ => 1,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn input(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Parses arguments, runs the command and returns the exit code. Errors go
/// to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Solve { common } => cmd_solve(&Context::load(&common)?),
        Command::Generate { common, count } => cmd_generate(&Context::load(&common)?, count),
        Command::Probe {
            common,
            from,
            to,
            steps,
        } => {
            let ctx = Context::load(&common)?;
            let steps = steps.unwrap_or(ctx.config.singularity.steps);
            cmd_probe(&ctx, &from, &to, steps)
        }
        Command::Render {
            common,
            probe_from,
            probe_to,
        } => {
            let ctx = Context::load(&common)?;
            let probe = match (probe_from, probe_to) {
                (Some(p), Some(q)) => Some((point2(&p, "--probe-from")?, point2(&q, "--probe-to")?)),
                _ => None,
            };
            cmd_render(&ctx, probe)
        }
        Command::CompareOracle { common, ladder, seeds } => {
            let ctx = Context::load(&common)?;
            let ladder = ladder.unwrap_or_else(|| ctx.config.oracle.ladder.clone());
            let seeds = seeds.unwrap_or(ctx.config.oracle.seeds);
            cmd_compare_oracle(&ctx, &ladder, seeds)
        }
    }
}

fn point2(v: &[f64], flag: &str) -> CmdResult<Point2> {
    match v {
        [x, y] => Ok([*x, *y]),
        _ => Err(input(format!("{flag} expects two comma-separated numbers"))),
    }
}

/// Config, domain, target and output directory of one invocation.
pub struct Context {
    pub config: ExperimentConfig,
    pub domain: SourceDomain,
    pub target: LabelledTarget,
    pub out: PathBuf,
    pub config_path: PathBuf,
}

impl Context {
    pub fn load(common: &Common) -> CmdResult<Self> {
        let mut config = ExperimentConfig::load(&common.config)?;
        if let Some(seed) = common.seed {
            config.override_seed(seed);
        }
        let domain = config.source_domain()?;
        let target = config.target()?;
        if target.measure.dim() != domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: domain.dim(),
                found: target.measure.dim(),
            }
            .into());
        }
        let out = common.output_dir.clone().unwrap_or_else(|| config.output_dir());
        Ok(Self {
            config,
            domain,
            target,
            out,
            config_path: common.config.clone(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write(&self, name: &str, contents: &str) -> CmdResult<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| input(format!("{}: {e}", self.out.display())))?;
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| input(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn read(&self, name: &str) -> CmdResult<String> {
        let path = self.path(name);
        fs::read_to_string(&path).map_err(|_| {
            input(format!(
                "missing {}; run `brenier solve {}` first",
                path.display(),
                self.config_path.display()
            ))
        })
    }

    /// The potential and statistics written by `solve`.
    pub fn solved(&self) -> CmdResult<(BrenierPotential, PowerCellStats)> {
        let report: SolveReport = serde_json::from_str(&self.read(REPORT_FILE)?)
            .map_err(|e| input(format!("{}: {e}", self.path(REPORT_FILE).display())))?;
        let stats = PowerCellStats::from_json(&self.read(STATS_FILE)?)?;
        let n = self.target.measure.len();
        if report.heights.len() != n || stats.len() != n {
            return Err(input(format!(
                "artifacts in {} do not match the configured target; rerun `brenier solve`",
                self.out.display()
            )));
        }
        let potential = BrenierPotential::new(Arc::new(self.target.measure.clone()), report.heights)?;
        Ok((potential, stats))
    }

    fn graph(&self, potential: &BrenierPotential, stats: &PowerCellStats) -> CmdResult<Option<SingularityGraph>> {
        if stats.cells.is_none() {
            return Ok(None);
        }
        let threshold = match self.config.singularity.threshold.or_else(|| default_threshold(stats, potential.target())) {
            Some(t) => t,
            None => return Ok(None),
        };
        Ok(Some(detect_singular_facets(stats, potential.target(), threshold)?))
    }
}

fn heights_csv(h: &[f64]) -> String {
    let mut s = String::from("index,height\n");
    for (i, v) in h.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    s
}

pub fn cmd_solve(ctx: &Context) -> CmdResult {
    let target = Arc::new(ctx.target.measure.clone());
    let config = ctx.config.solver_config();
    let (report, failure) = match solve(&ctx.domain, Arc::clone(&target), &config, None) {
        Ok(r) => (r, None),
        Err(Error::MaxIterations(r)) => (*r.clone(), Some(Error::MaxIterations(r))),
        Err(Error::StepUnderflow(r)) => (*r.clone(), Some(Error::StepUnderflow(r))),
        Err(e) => return Err(e.into()),
    };
    let potential = report.potential(Arc::clone(&target))?;
    let stats = match config.mode {
        SolveMode::Exact2d => exact_cell_stats_2d(&potential, &ctx.domain)?,
        SolveMode::MonteCarlo => CellEstimator::for_config(&ctx.domain, &config)?.stats(&potential),
    };
    ctx.write(REPORT_FILE, &report.to_json())?;
    ctx.write(HEIGHTS_FILE, &heights_csv(&report.heights))?;
    ctx.write(STATS_FILE, &stats.to_json())?;
    if let Some(graph) = ctx.graph(&potential, &stats)? {
        ctx.write(SINGULARITY_FILE, &graph.to_json())?;
    }
    println!(
        "{} after {} iterations, residual {:.3e}; wrote {}",
        if report.converged { "converged" } else { "stopped" },
        report.iterations,
        report.final_residual(),
        ctx.out.display()
    );
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

pub fn cmd_generate(ctx: &Context, count: usize) -> CmdResult {
    if count == 0 {
        return Err(input("--count must be positive"));
    }
    let (potential, _) = ctx.solved()?;
    let d = ctx.domain.dim();
    let mut rng = ctx.domain.rng();
    let xs = ctx.domain.sample_with(&mut rng, count);
    let cells = potential.assign_batch(&xs);

    fs::create_dir_all(&ctx.out).map_err(|e| input(format!("{}: {e}", ctx.out.display())))?;
    let path = ctx.path(GENERATED_FILE);
    let file = fs::File::create(&path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e: std::io::Error| input(format!("{}: {e}", path.display()));
    let header: Vec<String> = (0..d)
        .map(|k| format!("x{k}"))
        .chain(std::iter::once("cell".to_string()))
        .chain((0..d).map(|k| format!("y{k}")))
        .collect();
    writeln!(w, "{}", header.join(",")).map_err(io)?;
    let mut line = String::new();
    for (x, &c) in xs.chunks_exact(d).zip(&cells) {
        line.clear();
        for v in x {
            line.push_str(&format!("{v},"));
        }
        line.push_str(&c.to_string());
        for v in potential.target().point(c) {
            line.push_str(&format!(",{v}"));
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    println!("wrote {count} samples to {}", path.display());
    Ok(())
}

pub fn cmd_probe(ctx: &Context, from: &[f64], to: &[f64], steps: usize) -> CmdResult {
    let (potential, stats) = ctx.solved()?;
    let graph = match ctx.graph(&potential, &stats)? {
        Some(g) => g,
        None => {
            let threshold = ctx
                .config
                .singularity
                .threshold
                .or_else(|| default_threshold(&stats, potential.target()))
                .unwrap_or(f64::INFINITY);
            SingularityGraph {
                threshold,
                facets: Vec::new(),
                vertices: Vec::new(),
                chains: Vec::new(),
                regions: Vec::new(),
            }
        }
    };
    let crossings = probe_segment(&potential, &graph, &ctx.domain, from, to, steps)?;
    let mut s = String::from("t,from_cell,to_cell,jump,is_singular\n");
    for c in &crossings {
        s.push_str(&format!("{},{},{},{},{}\n", c.t, c.from, c.to, c.jump, c.is_singular));
    }
    let path = ctx.write(PROBE_FILE, &s)?;
    let singular = crossings.iter().filter(|c| c.is_singular).count();
    println!("{} crossings ({singular} singular); wrote {}", crossings.len(), path.display());
    Ok(())
}

pub fn cmd_render(ctx: &Context, probe: Option<(Point2, Point2)>) -> CmdResult {
    let (potential, stats) = ctx.solved()?;
    if stats.cells.is_none() {
        return Err(input("render needs exact planar statistics; solve with mode = \"exact-2d\""));
    }
    let graph = ctx.graph(&potential, &stats)?;
    let labels = &ctx.target.labels;
    let grouped = labels.iter().any(|&l| l != labels[0]);
    let mut scene = RenderScene::build(
        &stats,
        &ctx.domain,
        potential.target(),
        grouped.then_some(labels.as_slice()),
        graph.as_ref(),
        &ctx.config.render,
    )?;
    if let Some((p, q)) = probe {
        let g = graph.clone().ok_or_else(|| input("probe overlay needs at least one facet"))?;
        let crossings = probe_segment(&potential, &g, &ctx.domain, &p, &q, ctx.config.singularity.steps)?;
        scene = scene.with_probe(p, q, &crossings);
    }
    let path = ctx.write(SVG_FILE, &scene.to_svg())?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleRung {
    pub m: usize,
    pub lp_costs: Vec<f64>,
    pub gaps: Vec<f64>,
    pub median_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub semi_discrete_cost: f64,
    pub seeds: u64,
    pub rungs: Vec<OracleRung>,
    /// Median gaps never increase along the ladder.
    pub non_increasing: bool,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k == 0 {
        f64::NAN
    } else if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

/// Solves the semi-discrete problem, then for every `m` in the ladder and
/// every seed draws `m` source samples and solves the discrete problem exactly.
pub fn oracle_report(
    domain: &SourceDomain,
    target: &crate::measure::DiscreteTargetMeasure,
    config: &crate::solver::SolverConfig,
    ladder: &[usize],
    seeds: u64,
) -> crate::error::Result<OracleReport> {
    let target = Arc::new(target.clone());
    let report = solve(domain, Arc::clone(&target), config, None)?;
    let potential = report.potential(Arc::clone(&target))?;
    let sd = CellEstimator::for_config(domain, config)?.transport_cost(&potential);
    let mut rungs = Vec::new();
    for &m in ladder {
        let mut lp_costs = Vec::new();
        let mut gaps = Vec::new();
        for s in 0..seeds {
            let xs = domain.clone().with_seed(domain.seed().wrapping_add(s)).sample(m);
            let lp = solve_lp(&xs, &vec![1.0 / m as f64; m], &target, CostKind::Quadratic)?;
            gaps.push(if sd > 0.0 { (lp.cost - sd).abs() / sd } else { lp.cost.abs() });
            lp_costs.push(lp.cost);
        }
        rungs.push(OracleRung {
            m,
            median_gap: median(&gaps),
            lp_costs,
            gaps,
        });
    }
    let non_increasing = rungs.windows(2).all(|w| w[1].median_gap <= w[0].median_gap);
    Ok(OracleReport {
        semi_discrete_cost: sd,
        seeds,
        rungs,
        non_increasing,
    })
}

pub fn cmd_compare_oracle(ctx: &Context, ladder: &[usize], seeds: u64) -> CmdResult {
    if ladder.is_empty() || ladder.contains(&0) || seeds == 0 {
        return Err(input("ladder entries and seed count must be positive"));
    }
    let report = oracle_report(
        &ctx.domain,
        &ctx.target.measure,
        &ctx.config.solver_config(),
        ladder,
        seeds,
    )?;
    let json = serde_json::to_string_pretty(&report).expect("report serialize");
    let path = ctx.write(ORACLE_FILE, &json)?;
    for r in &report.rungs {
        println!("m = {:>5}: median relative gap {:.4}", r.m, r.median_gap);
    }
    println!("wrote {}", path.display());
    Ok(())
}
