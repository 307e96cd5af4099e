//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use brenier::cells::exact_cell_stats_2d;
use brenier::commands::oracle_report;
use brenier::dual::legendre_dual;
use brenier::experiments::{clusters, dumbbell, grid};
use brenier::solver::{gradient, hessian, CellEstimator};
use brenier::{
    default_threshold, detect_singular_facets, solve, BrenierPotential, DiscreteTargetMeasure, Shape, SolverConfig,
    SourceDomain,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

// Tolerances for each criterion.
const MODE_RESIDUAL: f64 = 1e-6;
const MODE_MAX_ITERATIONS: usize = 1000;
const MODE_MAX_SECONDS: f64 = 60.0;
const MODE_SAMPLES: usize = 1_000_000;
const MODE_SIGMAS: f64 = 4.0;
const CHI2_MIN_P: f64 = 0.001;
const CHI2_TARGETS: u64 = 20;
const CHI2_MAX_N: usize = 100;
const GRADIENT_REL: f64 = 1e-5;
const HESSIAN_REL: f64 = 1e-4;
const PSD_FLOOR: f64 = -1e-9;
const CALCULUS_MAX_SECONDS: f64 = 30.0;
const CALCULUS_MAX_N: usize = 50;
const ORACLE_LADDER: [usize; 3] = [50, 200, 800];
const ORACLE_SEEDS: u64 = 10;
const ORACLE_MEDIAN_GAP: f64 = 0.05;
const SIDE_MASS: f64 = 1e-3;
const DUAL_INSTANCES: u64 = 20;
const BICONJUGATE: f64 = 1e-9;
const BICONJUGATE_POINTS: usize = 1000;
const MONOTONE_PAIRS: usize = 100_000;
const MONOTONE_FLOOR: f64 = -1e-12;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, what: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn random_target(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Arc<DiscreteTargetMeasure> {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)])
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let s: f64 = w.iter().sum();
    Arc::new(DiscreteTargetMeasure::new(pts, w.iter().map(|v| v / s).collect(), 1e-9).unwrap())
}

fn solved(domain: &SourceDomain, target: &Arc<DiscreteTargetMeasure>) -> Result<BrenierPotential, String> {
    let report = solve(domain, Arc::clone(target), &SolverConfig::exact(), None).map_err(|e| e.to_string())?;
    report.potential(Arc::clone(target)).map_err(|e| e.to_string())
}

fn rectangle(seed: u64) -> SourceDomain {
    SourceDomain::new(
        Shape::Box {
            lo: vec![-2.0, -1.0],
            hi: vec![2.0, 1.0],
        },
        seed,
    )
    .unwrap()
}

fn mode_coverage() -> Outcome {
    let domain = SourceDomain::square(-1.0, 1.0, 1);
    let target = Arc::new(grid(5, 0.8).map_err(|e| e.to_string())?.measure);
    let start = Instant::now();
    let report = solve(&domain, Arc::clone(&target), &SolverConfig::exact(), None).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let residual = report
        .measures
        .iter()
        .map(|w| (w - 1.0 / 25.0).abs())
        .fold(0.0, f64::max);
    check(residual <= MODE_RESIDUAL, format!("residual {residual:e}"))?;
    check(report.iterations <= MODE_MAX_ITERATIONS, format!("{} iterations", report.iterations))?;
    check(secs <= MODE_MAX_SECONDS, format!("{secs:.1} s"))?;
    check(report.measures.iter().all(|&w| w > 0.0), "empty cell")?;

    let u = report.potential(Arc::clone(&target)).map_err(|e| e.to_string())?;
    let count = MODE_SAMPLES;
    let xs = domain.with_seed(77).sample(count);
    let mut hist = [0usize; 25];
    for x in xs.chunks_exact(2) {
        let y = u.transport_map(x);
        // Outputs must coincide with a target point exactly.
        let k = (0..25).find(|&k| target.point(k) == y).ok_or("output off the target support")?;
        hist[k] += 1;
    }
    let p = 1.0 / 25.0;
    let sigma = (count as f64 * p * (1.0 - p)).sqrt();
    let worst = hist
        .iter()
        .map(|&h| (h as f64 - count as f64 * p).abs() / sigma)
        .fold(0.0, f64::max);
    check(worst <= MODE_SIGMAS, format!("mode off by {worst:.2} sigma"))?;
    Ok(format!(
        "residual {residual:.1e}, {} iterations, {secs:.2} s, worst mode {worst:.2} sigma, min count {}",
        report.iterations,
        hist.iter().min().unwrap()
    ))
}

fn measure_preservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let samples = 200_000usize;
    let mut min_p = f64::INFINITY;
    for trial in 0..CHI2_TARGETS {
        let n = rng.gen_range(2..=CHI2_MAX_N);
        let domain = if trial % 2 == 0 {
            SourceDomain::square(-1.0, 1.0, 0)
        } else {
            rectangle(0)
        };
        let target = random_target(&mut rng, n, 1.5);
        let u = solved(&domain, &target)?;
        let xs = domain.with_seed(1000 + trial).sample(samples);
        let mut hist = vec![0usize; n];
        for k in u.assign_batch(&xs) {
            hist[k] += 1;
        }
        let chi2: f64 = hist
            .iter()
            .zip(target.weights())
            .map(|(&o, &nu)| {
                let e = nu * samples as f64;
                (o as f64 - e).powi(2) / e
            })
            .sum();
        let p = 1.0 - ChiSquared::new((n - 1) as f64).unwrap().cdf(chi2);
        check(p > CHI2_MIN_P, format!("trial {trial} (n = {n}): p = {p:e}"))?;
        min_p = min_p.min(p);
    }
    Ok(format!("{CHI2_TARGETS} targets, min p-value {min_p:.4}"))
}

fn calculus_consistency() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let domain = SourceDomain::square(-1.0, 1.0, 0);
    let est = CellEstimator::exact(&domain).map_err(|e| e.to_string())?;
    let (mut worst_g, mut worst_h, mut min_eig) = (0.0f64, 0.0f64, f64::INFINITY);
    for &n in &[3usize, 8, 15, 25, 40, CALCULUS_MAX_N] {
        let target = random_target(&mut rng, n, 1.0);
        let base = solved(&domain, &target)?;
        let h: Vec<f64> = base.heights().iter().map(|b| b + rng.gen_range(-2e-3..2e-3)).collect();
        let u = BrenierPotential::new(Arc::clone(&target), h.clone()).unwrap();
        let stats = est.stats(&u);
        check(stats.measures.iter().all(|&w| w > 0.0), "perturbed heights left the admissible set")?;
        let g = gradient(&stats, &target);
        let hess = hessian(&stats, &target).map_err(|e| e.to_string())?;

        let at = |k: usize, d: f64| {
            let mut hh = h.clone();
            hh[k] += d;
            BrenierPotential::new(Arc::clone(&target), hh).unwrap()
        };
        let delta = 1e-6;
        let mut fd_hess = DMatrix::zeros(n, n);
        let mut g_err = 0.0f64;
        for k in 0..n {
            let (up, down) = (at(k, delta), at(k, -delta));
            let (su, sd) = (est.stats(&up), est.stats(&down));
            let fd = (est.closed_form_energy(&up, &su) - est.closed_form_energy(&down, &sd)) / (2.0 * delta);
            g_err = g_err.max((fd - g[k]).abs());
            for i in 0..n {
                fd_hess[(i, k)] = (su.measures[i] - sd.measures[i]) / (2.0 * delta);
            }
        }
        let g_scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_g = worst_g.max(g_err / g_scale);
        let h_scale = hess.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_h = worst_h.max((&hess - &fd_hess).abs().max() / h_scale);

        // Restrict to the sum-zero subspace with an orthonormal basis.
        let ones = DMatrix::from_element(n, 1, 1.0 / (n as f64).sqrt());
        let proj = DMatrix::identity(n, n) - &ones * ones.transpose();
        let basis = proj.svd(true, false).u.unwrap().columns(0, n - 1).into_owned();
        let reduced = basis.transpose() * &hess * &basis;
        let eig = SymmetricEigen::new(reduced).eigenvalues.min();
        min_eig = min_eig.min(eig);
    }
    let secs = start.elapsed().as_secs_f64();
    check(worst_g <= GRADIENT_REL, format!("gradient relative error {worst_g:e}"))?;
    check(worst_h <= HESSIAN_REL, format!("hessian relative error {worst_h:e}"))?;
    check(min_eig >= PSD_FLOOR, format!("min eigenvalue {min_eig:e}"))?;
    check(secs <= CALCULUS_MAX_SECONDS, format!("{secs:.1} s"))?;
    Ok(format!(
        "gradient {worst_g:.1e}, hessian {worst_h:.1e}, min eigenvalue {min_eig:.2e}, {secs:.2} s"
    ))
}

fn optimality_cross_check() -> Outcome {
    let domain = SourceDomain::square(-1.0, 1.0, 0);
    let target = grid(5, 1.0).map_err(|e| e.to_string())?.measure;
    let report =
        oracle_report(&domain, &target, &SolverConfig::exact(), &ORACLE_LADDER, ORACLE_SEEDS).map_err(|e| e.to_string())?;
    let medians: Vec<f64> = report.rungs.iter().map(|r| r.median_gap).collect();
    let last = *medians.last().unwrap();
    check(last <= ORACLE_MEDIAN_GAP, format!("median gap at m = 800 is {last:.4}"))?;
    check(
        report.non_increasing && medians.windows(2).all(|w| w[1] <= w[0]),
        format!("median gaps {medians:?}"),
    )?;
    Ok(format!(
        "median gaps {} at m = 50, 200, 800",
        medians.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(", ")
    ))
}

fn discontinuity_structure() -> Outcome {
    // Two clusters on a disk.
    let disk = SourceDomain::disk([0.0, 0.0], 1.0, 0);
    let two = clusters(&[[-5.0, 0.0], [5.0, 0.0]], 20, 0.5, 9).map_err(|e| e.to_string())?;
    let target = Arc::new(two.measure);
    let u = solved(&disk, &target)?;
    let stats = exact_cell_stats_2d(&u, &disk).map_err(|e| e.to_string())?;
    let theta = default_threshold(&stats, &target).ok_or("no facets")?;
    let g = detect_singular_facets(&stats, &target, theta).map_err(|e| e.to_string())?;
    let two_chains = g.chains.len();
    check(two_chains > 0, "two clusters: no singular chain")?;
    check(g.regions.len() == 2, format!("two clusters: {} regions", g.regions.len()))?;
    let mut worst = 0.0f64;
    for r in &g.regions {
        let label = two.labels[r.cells[0]];
        check(
            r.cells.iter().all(|&c| two.labels[c] == label),
            "two clusters: a region mixes clusters",
        )?;
        let cluster_mass: f64 = (0..target.len())
            .filter(|&i| two.labels[i] == label)
            .map(|i| target.weights()[i])
            .sum();
        worst = worst.max((r.mass - cluster_mass).abs());
    }
    check(worst <= SIDE_MASS, format!("two clusters: side mass off by {worst:e}"))?;

    // Dumbbell on a rectangle: the bar separates the bells along two arcs.
    let rect = rectangle(0);
    let bell = dumbbell(1.0, 0.2, 3.0, 300, 2).map_err(|e| e.to_string())?;
    let target = Arc::new(bell.measure);
    let u = solved(&rect, &target)?;
    let stats = exact_cell_stats_2d(&u, &rect).map_err(|e| e.to_string())?;
    let theta_db = default_threshold(&stats, &target).ok_or("no facets")?;
    let g = detect_singular_facets(&stats, &target, theta_db).map_err(|e| e.to_string())?;
    check(g.chains.len() >= 2, format!("dumbbell: {} chains", g.chains.len()))?;
    let reach = |chain: &Vec<usize>, top: bool| {
        chain.iter().any(|&f| {
            g.facets[f]
                .segment
                .iter()
                .any(|p| if top { p[1] >= 1.0 - 1e-9 } else { p[1] <= -1.0 + 1e-9 })
        })
    };
    let top: Vec<usize> = (0..g.chains.len()).filter(|&c| reach(&g.chains[c], true)).collect();
    let bottom: Vec<usize> = (0..g.chains.len()).filter(|&c| reach(&g.chains[c], false)).collect();
    check(
        top.iter().any(|a| bottom.iter().any(|b| a != b)),
        "dumbbell: no pair of distinct chains meeting the top and bottom edges",
    )?;

    // Convex control: a regular net has no singular facets.
    let square = SourceDomain::square(-1.0, 1.0, 0);
    let net = Arc::new(grid(5, 1.0).map_err(|e| e.to_string())?.measure);
    let u = solved(&square, &net)?;
    let stats = exact_cell_stats_2d(&u, &square).map_err(|e| e.to_string())?;
    let theta_net = default_threshold(&stats, &net).ok_or("no facets")?;
    let g_net = detect_singular_facets(&stats, &net, theta_net).map_err(|e| e.to_string())?;
    check(g_net.is_empty(), format!("control: {} singular facets", g_net.facets.len()))?;

    Ok(format!(
        "two clusters: {two_chains} chain(s), side mass error {worst:.1e}; dumbbell: {} chains; control: empty (theta {theta_net:.2})",
        g.chains.len()
    ))
}

fn duality_structure() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst = 0.0f64;
    let mut edges = 0usize;
    for trial in 0..DUAL_INSTANCES {
        let domain = if trial % 2 == 0 {
            SourceDomain::square(-1.0, 1.0, 0)
        } else {
            SourceDomain::disk([0.0, 0.0], 1.0, 0)
        };
        let n = rng.gen_range(3..=40);
        let target = random_target(&mut rng, n, 1.5);
        let u = solved(&domain, &target)?;
        let stats = exact_cell_stats_2d(&u, &domain).map_err(|e| e.to_string())?;
        let dual = legendre_dual(&u).map_err(|e| e.to_string())?;
        let restricted: Vec<(usize, usize)> = dual
            .restrict(&domain)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|e| (e.i, e.j))
            .collect();
        check(restricted == stats.adjacency(), format!("trial {trial}: edge sets differ"))?;
        edges += restricted.len();
        for _ in 0..BICONJUGATE_POINTS {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            worst = worst.max((dual.biconjugate(x) - u.evaluate(&x)).abs());
        }
    }
    check(worst <= BICONJUGATE, format!("biconjugate error {worst:e}"))?;
    Ok(format!("{DUAL_INSTANCES} instances, {edges} edges matched, biconjugate error {worst:.1e}"))
}

fn monotone_map() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let domain = SourceDomain::disk([0.0, 0.0], 1.0, 5);
    let target = random_target(&mut rng, 60, 2.0);
    let u = solved(&domain, &target)?;
    let pairs = MONOTONE_PAIRS;
    let xs = domain.sample(2 * pairs);
    let mut worst = f64::INFINITY;
    let mut violations = 0usize;
    for pair in xs.chunks_exact(4) {
        let (a, b) = (&pair[..2], &pair[2..]);
        let (ta, tb) = (u.transport_map(a), u.transport_map(b));
        let s: f64 = (0..2).map(|k| (a[k] - b[k]) * (ta[k] - tb[k])).sum();
        worst = worst.min(s);
        if s < MONOTONE_FLOOR {
            violations += 1;
        }
    }
    check(violations == 0, format!("{violations} violations, worst {worst:e}"))?;
    Ok(format!("{pairs} pairs, smallest inner product {worst:.3e}"))
}

const DETERMINISM_CONFIG: &str = r#"
output_dir = "out"
seed = 5

[domain]
kind = "disk"
center = [0.0, 0.0]
radius = 1.0

[target]
kind = "clusters"
centers = [[-5.0, 0.0], [5.0, 0.0]]
per_cluster = 12
radius = 0.5
"#;

fn run_pipeline(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let cfg = dir.join("run.toml");
    fs::write(&cfg, DETERMINISM_CONFIG).map_err(|e| e.to_string())?;
    let cfg = cfg.to_str().unwrap();
    let steps: [&[&str]; 5] = [
        &["solve", cfg],
        &["generate", cfg, "--count", "2000"],
        &["probe", cfg, "--from", "-0.9,0.1", "--to", "0.9,-0.1"],
        &["render", cfg, "--probe-from", "-0.9,0.1", "--probe-to", "0.9,-0.1"],
        &["compare-oracle", cfg, "--ladder", "50,100", "--seeds", "2"],
    ];
    for args in steps {
        let out = Command::new(env!("CARGO_BIN_EXE_brenier"))
            .args(args)
            .env_remove("BRENIER_OUTPUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        check(
            out.status.success(),
            format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)),
        )?;
    }
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir.join("out")).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = run_pipeline(a.path())?;
    let second = run_pipeline(b.path())?;
    for name in ["report.json", "stats.json", "singularity.json", "oracle.json", "diagram.svg"] {
        check(first.contains_key(name), format!("{name} not written"))?;
    }
    check(
        first.keys().eq(second.keys()),
        "runs produced different file sets",
    )?;
    for (name, bytes) in &first {
        check(&second[name] == bytes, format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical", first.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("mode coverage", mode_coverage),
        ("measure preservation", measure_preservation),
        ("calculus consistency", calculus_consistency),
        ("optimality cross-check", optimality_cross_check),
        ("discontinuity structure", discontinuity_structure),
        ("duality structure", duality_structure),
        ("monotone map", monotone_map),
        ("determinism", determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
