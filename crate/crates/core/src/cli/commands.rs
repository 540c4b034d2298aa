use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::{
    BacktestArgs, CliError, CliResult, Command, DataArgs, FitArgs, GraphArgs, KernelArgs,
    OptimizerArgs, SampleArgs, SynthArgs, ValidateArgs,
};
use crate::data::{self, SyntheticKind, SyntheticSpec, DEFAULT_HEAT_NODES, DEFAULT_WAVE_NODES};
use crate::error::Error;
use crate::eval::{self, BacktestPlan, BacktestSettings, Candidate, Task};
use crate::gp::{
    self, FitOptions, GPModel, MeanPolicy, Observation, SpatioTemporalDataset, TrainedGp,
};
use crate::graph::{shifted_laplacian_power, FractionalLaplacian, Graph};
use crate::kernels::{
    self, KernelContext, KernelSpec, PreparedKernel, STPoint, DEFAULT_KAPPA, DEFAULT_NU,
};
use crate::sde::{self, Noise, SimOptions};

const DEFAULT_OUT: &str = "output";
const DEFAULT_KERNELS: [&str; 3] = ["shek", "sep-laplacian-rbf", "sep-matern-rbf"];

struct Globals {
    seed: u64,
    jobs: Option<usize>,
    out: PathBuf,
}

pub(super) fn dispatch(cli: super::Cli) -> CliResult<()> {
    let g = Globals {
        seed: cli.seed.unwrap_or(0),
        jobs: cli.jobs,
        out: cli.out.unwrap_or_else(|| DEFAULT_OUT.into()),
    };
    if g.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(j) = g.jobs {
            b = b.num_threads(j);
        }
        b.build().map_err(|e| {
            CliError::Usage(format!(
                "cannot start {} worker threads: {e}",
                g.jobs.unwrap_or(0)
            ))
        })?
    };
    pool.install(|| match cli.command {
        Command::Synth(a) => synth(&g, a),
        Command::Backtest(a) => backtest(&g, a),
        Command::ValidateKernel(a) => validate(&g, a),
        Command::Sample(a) => sample(&g, a),
        Command::Fit(a) => fit(&g, a),
    })
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn decimals(s: &str) -> i32 {
    s.split_once('.').map_or(0, |(_, f)| {
        f.trim_end_matches(|c: char| !c.is_ascii_digit()).len() as i32
    })
}

/// Parses `a:b` (unit step), `a:b:step` (both inclusive) or a comma list.
/// Range points are rounded to the decimals written in the range so that
/// `0:1:0.1` yields `0.3` rather than `0.30000000000000004`.
pub fn parse_times(s: &str) -> crate::Result<Vec<f64>> {
    let bad = || Error::InvalidParameter(format!("cannot parse time grid `{s}`"));
    let num = |x: &str| {
        x.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(bad)
    };
    let parts: Vec<&str> = s.split(':').collect();
    let times = match parts.as_slice() {
        [_] => s
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(num)
            .collect::<crate::Result<Vec<_>>>()?,
        [a, b] | [a, b, _] => {
            let (start, end) = (num(a)?, num(b)?);
            let step = if parts.len() == 3 {
                num(parts[2])?
            } else {
                1.0
            };
            if step.is_nan() || step <= 0.0 || end < start {
                return Err(bad());
            }
            let n = ((end - start) / step + 1e-9).floor() as usize;
            let d = parts.iter().map(|p| decimals(p)).max().unwrap_or(0).min(15);
            let scale = 10f64.powi(d);
            (0..=n)
                .map(|i| ((start + i as f64 * step) * scale).round() / scale)
                .collect()
        }
        _ => return Err(bad()),
    };
    if times.is_empty() {
        return Err(bad());
    }
    Ok(times)
}

fn synth_spec(a: &SynthArgs, seed: u64) -> CliResult<SyntheticSpec> {
    let kind = a
        .kind
        .ok_or_else(|| usage("--kind is required (heat-line or wave-line)"))?;
    let (nodes, grid) = match kind {
        SyntheticKind::HeatLine => (DEFAULT_HEAT_NODES, "1:70"),
        SyntheticKind::WaveLine => (DEFAULT_WAVE_NODES, "0.5:35:0.5"),
    };
    Ok(SyntheticSpec {
        kind,
        n_nodes: a.nodes.unwrap_or(nodes),
        conductivity: a.k.unwrap_or(1.0),
        speed: a.speed.unwrap_or(1.0),
        timestamps: parse_times(a.t.as_deref().unwrap_or(grid))?,
        noise_sd: a.noise_sd.unwrap_or(0.0),
        seed,
    })
}

fn synth_given(a: &SynthArgs) -> bool {
    a.kind.is_some()
        || a.nodes.is_some()
        || a.k.is_some()
        || a.speed.is_some()
        || a.t.is_some()
        || a.noise_sd.is_some()
}

#[derive(Serialize)]
#[serde(untagged)]
enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        graph: PathBuf,
        series: PathBuf,
        directed: bool,
    },
}

fn load_data(
    synth: &SynthArgs,
    files: &DataArgs,
    seed: u64,
) -> CliResult<(Arc<Graph>, SpatioTemporalDataset, DataSource)> {
    match (&files.graph, &files.series) {
        (Some(g), Some(s)) => {
            if synth_given(synth) {
                return Err(usage(
                    "synthetic-data options cannot be combined with --graph/--series",
                ));
            }
            let graph = Arc::new(data::load_graph_csv(g, files.directed)?);
            let d = data::load_series_csv(s, graph.clone())?;
            Ok((
                graph,
                d,
                DataSource::Files {
                    graph: g.clone(),
                    series: s.clone(),
                    directed: files.directed,
                },
            ))
        }
        (None, None) => {
            let spec = synth_spec(synth, seed)?;
            let (g, d) = data::generate(&spec)?;
            Ok((g, d, DataSource::Synthetic(spec)))
        }
        _ => Err(usage("--graph and --series must be given together")),
    }
}

fn load_graph(a: &GraphArgs, default_nodes: usize) -> CliResult<Graph> {
    match &a.graph {
        Some(path) => {
            if a.nodes.is_some() {
                return Err(usage("--nodes cannot be combined with --graph"));
            }
            Ok(data::load_graph_csv(path, a.directed)?)
        }
        None => Ok(Graph::path(a.nodes.unwrap_or(default_nodes))?),
    }
}

fn build_kernel(name: &str, c: Option<f64>, k: &KernelArgs) -> CliResult<KernelSpec> {
    let mut spec = KernelSpec::named(name)?;
    if let Some(v) = k.laplacian {
        spec = spec.with_laplacian(v);
    }
    let overrides = [
        ("c", c),
        ("sigma", k.sigma),
        ("nu", k.nu),
        ("kappa", k.kappa),
        ("variance", k.variance),
        ("time_lengthscale", k.lengthscale),
    ];
    for (key, value) in overrides {
        if let (Some(v), Some(_)) = (value, spec.get(key)) {
            spec.set(key, v)?;
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn build_model(
    spec: KernelSpec,
    k: &KernelArgs,
    default_policy: MeanPolicy,
    default_noise: f64,
) -> GPModel {
    let mut m = GPModel::new(spec)
        .with_noise(k.noise.unwrap_or(default_noise))
        .with_mean_policy(k.mean_policy.unwrap_or(default_policy));
    if let Some(t) = k.time_offset {
        m = m.with_time_offset(t);
    }
    m
}

fn fit_options(o: &OptimizerArgs, seed: u64) -> FitOptions {
    let d = FitOptions::default();
    FitOptions {
        max_iters: o.max_iters.unwrap_or(d.max_iters),
        restarts: o.restarts.unwrap_or(d.restarts),
        include_shape: o.include_shape,
        seed,
        ..d
    }
}

#[derive(Serialize)]
struct Provenance<'a, A: Serialize, E: Serialize> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    args: &'a A,
    resolved: E,
    outputs: Vec<String>,
}

fn write_provenance<A: Serialize, E: Serialize>(
    g: &Globals,
    command: &'static str,
    args: &A,
    resolved: E,
    outputs: &[&str],
) -> CliResult<()> {
    let p = Provenance {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: g.seed,
        args,
        resolved,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    data::write_json(g.out.join("provenance.json"), &p)?;
    Ok(())
}

fn synth(g: &Globals, a: SynthArgs) -> CliResult<()> {
    let spec = synth_spec(&a, g.seed)?;
    let (graph, d) = data::generate(&spec)?;
    data::write_graph_csv(g.out.join("graph.csv"), &graph)?;
    data::write_series_csv(g.out.join("series.csv"), &d)?;
    write_provenance(g, "synth", &a, &spec, &["graph.csv", "series.csv"])?;
    println!(
        "wrote {} vertices and {} observations to {}",
        graph.n_vertices(),
        d.len(),
        g.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct BacktestResolved {
    data: DataSource,
    kernels: Vec<GPModel>,
    settings: BacktestSettings,
    wall_time_s: f64,
}

fn backtest(g: &Globals, a: BacktestArgs) -> CliResult<()> {
    let start = Instant::now();
    let (_, d, source) = load_data(&a.synth, &a.data, g.seed)?;
    let names: Vec<String> = if a.kernels.is_empty() {
        DEFAULT_KERNELS.iter().map(|s| s.to_string()).collect()
    } else {
        a.kernels.clone()
    };
    let candidates = names
        .iter()
        .map(|n| {
            let spec = build_kernel(n, a.c, &a.kernel)?;
            Ok(Candidate {
                label: n.clone(),
                model: build_model(spec, &a.kernel, MeanPolicy::default(), 1e-3),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let baseline = a.baseline.clone().unwrap_or_else(|| names[0].clone());
    let settings = BacktestSettings {
        plan: BacktestPlan {
            n_train: a.n_train.unwrap_or(50),
            n_test: a.n_test.unwrap_or(10),
            stride: a.stride.unwrap_or(1),
            rounds: a.rounds.unwrap_or(10),
            seed: g.seed,
        },
        tasks: if a.tasks.is_empty() {
            vec![Task::Interpolation, Task::Extrapolation]
        } else {
            a.tasks.clone()
        },
        interpolation_fraction: a.fraction.unwrap_or(0.1),
        fit: (!a.no_fit).then(|| fit_options(&a.optimizer, g.seed)),
        baseline: Some(baseline),
    };
    let report = eval::run_backtest(&d, &candidates, &settings)?;
    eval::write_results_csv(g.out.join("results.csv"), &report)?;
    let table = eval::summary_table(&report);
    std::fs::write(g.out.join("summary.txt"), &table).map_err(Error::from)?;
    for r in &report.rounds {
        if let Err(e) = &r.outcome {
            eprintln!(
                "round {} of {} ({}) failed: {e}",
                r.round_index,
                r.kernel,
                r.task.name()
            );
        }
    }
    let resolved = BacktestResolved {
        data: source,
        kernels: candidates.iter().map(|c| c.model).collect(),
        settings,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_provenance(g, "backtest", &a, resolved, &["results.csv", "summary.txt"])?;
    print!("{table}");
    if report.rounds.iter().all(|r| r.outcome.is_err()) {
        return Err(CliError::Run(Error::Optimization(
            "every backtest round failed".into(),
        )));
    }
    Ok(())
}

/// Smallest step count at or above `min_steps` that puts every time on the grid.
fn grid_steps(times: &[f64], t_end: f64, min_steps: usize) -> Option<usize> {
    (min_steps..=4 * min_steps).find(|&q| {
        times.iter().all(|t| {
            let x = t / t_end * q as f64;
            (x - x.round()).abs() < 1e-6
        })
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[derive(Serialize)]
struct ValidateResolved {
    kernel: String,
    c: f64,
    sigma: f64,
    nu: f64,
    kappa: f64,
    dt: f64,
    steps: usize,
    t_end: f64,
    paths: usize,
    times: Vec<f64>,
    max_abs_z: f64,
    max_z: f64,
    pass: bool,
}

fn validate(g: &Globals, a: ValidateArgs) -> CliResult<()> {
    let kernel = a.kernel.clone().unwrap_or_else(|| "shek".into());
    if kernel != "shek" && kernel != "swek" {
        return Err(usage(format!(
            "validate-kernel supports shek and swek, not `{kernel}`"
        )));
    }
    let graph = load_graph(&a.graph, 3)?;
    let variant = a.laplacian.unwrap_or_default();
    let lap = graph.laplacian(variant)?;
    let (c, sigma) = (a.c.unwrap_or(1.0), a.sigma.unwrap_or(1.0));
    let (nu, kappa) = (a.nu.unwrap_or(DEFAULT_NU), a.kappa.unwrap_or(DEFAULT_KAPPA));
    let t_end = a.t_end.unwrap_or(1.0);
    let dt_max = a.dt.unwrap_or(1e-3);
    let paths = a.paths.unwrap_or(50_000);
    let max_z = a.max_z.unwrap_or(4.0);
    if !(t_end > 0.0 && t_end.is_finite()) || !(dt_max > 0.0 && dt_max <= t_end) {
        return Err(usage("need 0 < dt ≤ t_end"));
    }
    let times = if a.times.is_empty() {
        vec![0.5 * t_end, t_end]
    } else {
        a.times.clone()
    };
    if times.iter().any(|t| !(*t > 0.0 && *t <= t_end)) {
        return Err(usage("comparison times must lie in (0, t_end]"));
    }
    let min_steps = (t_end / dt_max - 1e-9).ceil() as usize;
    let steps = grid_steps(&times, t_end, min_steps).ok_or_else(|| {
        usage("comparison times do not fit a common time grid; choose simpler times or dt")
    })?;
    let dt = t_end / steps as f64;
    let indices: Vec<usize> = times
        .iter()
        .map(|t| (t / t_end * steps as f64).round() as usize)
        .collect();
    let record_every = indices.iter().fold(steps, |acc, &i| gcd(acc, i));
    let opts = SimOptions::new(dt, t_end, paths, g.seed).recording_every(record_every);
    let n = graph.n_vertices();
    let zero = DVector::zeros(n);

    let (lt, frac) = if lap.symmetric {
        let frac = FractionalLaplacian::new(&lap, nu, kappa)?;
        (frac.matrix(), Some(frac))
    } else {
        (shifted_laplacian_power(&lap, nu, kappa)?, None)
    };
    let analytic = |t: f64, s: f64| -> crate::Result<nalgebra::DMatrix<f64>> {
        match (kernel.as_str(), &frac) {
            ("shek", Some(f)) => kernels::shek_cov(f, c, sigma, t, s),
            ("shek", None) => kernels::shek_cov_general(&lt, c, sigma, t, s),
            (_, Some(f)) => kernels::swek_cov(f, c, sigma, t, s),
            _ => Err(Error::Unsupported {
                kernel: "swek".into(),
                reason: "requires a symmetric Laplacian".into(),
            }),
        }
    };
    analytic(t_end, t_end)?;
    let ens = if kernel == "shek" {
        sde::simulate_heat(&lt, c, &Noise::Scalar(sigma), &zero, &opts)?
    } else {
        sde::simulate_wave(&lt, c, sigma, &zero, &zero, &opts)?
    };

    let file = format!("validate_{kernel}.csv");
    let path = g.out.join(&file);
    std::fs::create_dir_all(&g.out).map_err(Error::from)?;
    let mut w = csv::Writer::from_path(&path).map_err(Error::from)?;
    w.write_record([
        "t",
        "s",
        "node_i",
        "node_j",
        "analytic",
        "empirical",
        "se",
        "z",
    ])
    .map_err(Error::from)?;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (p, &t) in times.iter().enumerate() {
        for &s in &times[p..] {
            let exact = analytic(t, s)?;
            let (emp, se) = sde::empirical_cross_cov(&ens, ens.time_index(t), ens.time_index(s))?;
            for i in 0..n {
                for j in 0..n {
                    let diff = emp[(i, j)] - exact[(i, j)];
                    let z = if se[(i, j)] > 0.0 {
                        diff / se[(i, j)]
                    } else if diff == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z.abs());
                    count += 1;
                    w.write_record([
                        t.to_string(),
                        s.to_string(),
                        graph.label(i).to_string(),
                        graph.label(j).to_string(),
                        exact[(i, j)].to_string(),
                        emp[(i, j)].to_string(),
                        se[(i, j)].to_string(),
                        z.to_string(),
                    ])
                    .map_err(Error::from)?;
                }
            }
        }
    }
    w.flush().map_err(Error::from)?;
    let pass = worst <= max_z;
    let resolved = ValidateResolved {
        kernel: kernel.clone(),
        c,
        sigma,
        nu,
        kappa,
        dt,
        steps,
        t_end,
        paths,
        times,
        max_abs_z: worst,
        max_z,
        pass,
    };
    write_provenance(g, "validate-kernel", &a, resolved, &[&file])?;
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{kernel}: max |Δ|/SE = {worst:.3} over {count} entries ({paths} paths, dt = {dt:e}): {verdict}");
    if pass {
        Ok(())
    } else {
        Err(CliError::Run(Error::Optimization(format!(
            "Monte Carlo covariance deviates by {worst:.2} standard errors (threshold {max_z})"
        ))))
    }
}

fn fmt_param(v: f64) -> String {
    v.to_string()
}

#[derive(Serialize)]
struct SampleResolved {
    models: Vec<GPModel>,
    times: Vec<f64>,
    condition_time: Option<f64>,
    n_samples: usize,
}

fn sample(g: &Globals, a: SampleArgs) -> CliResult<()> {
    let name = a.kernel.clone().ok_or_else(|| {
        usage(format!(
            "--kernel is required; valid names: {}",
            kernels::KERNEL_NAMES.join(", ")
        ))
    })?;
    let graph = Arc::new(load_graph(&a.graph, 3)?);
    let times = parse_times(a.t.as_deref().unwrap_or("0:10:0.1"))?;
    let n_samples = a.n_samples.unwrap_or(5);
    let n = graph.n_vertices();
    let base = build_kernel(&name, None, &a.kernel_args)?;
    let cs: Vec<Option<f64>> = if a.c.is_empty() {
        vec![None]
    } else {
        a.c.iter().map(|c| Some(*c)).collect()
    };
    if cs[0].is_some() && base.get("c").is_none() {
        return Err(usage(format!("--c does not apply to kernel `{name}`")));
    }
    let condition = if a.condition.is_empty() {
        None
    } else {
        if a.condition.len() != n {
            return Err(CliError::Run(Error::DimensionMismatch(format!(
                "{} conditioning values for {n} vertices",
                a.condition.len()
            ))));
        }
        let t0 = a.condition_time.unwrap_or(times[0]);
        let obs = a
            .condition
            .iter()
            .enumerate()
            .map(|(v, &y)| Observation {
                point: STPoint::new(v, t0),
                y,
            })
            .collect();
        Some(SpatioTemporalDataset::new(graph.clone(), obs)?)
    };
    let points: Vec<STPoint> = times
        .iter()
        .flat_map(|&t| (0..n).map(move |v| STPoint::new(v, t)))
        .collect();
    let variant = a.kernel_args.laplacian.unwrap_or_default();
    let ctx = KernelContext::new(&graph, variant)?;

    let mut outputs = Vec::new();
    let mut models = Vec::new();
    for c in &cs {
        let spec = build_kernel(&name, *c, &a.kernel_args)?;
        let model = build_model(spec, &a.kernel_args, MeanPolicy::Zero, 1e-6);
        let (mean, var) = match &condition {
            Some(d) => {
                let p = TrainedGp::new(&model, &ctx, d)?.predict(&points, false)?;
                (p.mean, p.variance)
            }
            None => {
                let anchor = times.iter().copied().fold(f64::INFINITY, f64::min);
                let shifted: Vec<STPoint> = points
                    .iter()
                    .map(|p| STPoint::new(p.vertex, p.time - anchor + model.time_offset))
                    .collect();
                (
                    vec![0.0; points.len()],
                    PreparedKernel::new(&model.kernel, &ctx)?.diag(&shifted)?,
                )
            }
        };
        let draws = if n_samples > 0 {
            Some(gp::sample(
                &model,
                &ctx,
                &points,
                n_samples,
                g.seed,
                condition.as_ref(),
            )?)
        } else {
            None
        };
        let file = match c {
            Some(c) => format!("sample_{name}_c{}.csv", fmt_param(*c)),
            None => format!("sample_{name}.csv"),
        };
        write_sample_csv(
            &g.out.join(&file),
            &graph,
            &points,
            &mean,
            &var,
            draws.as_ref(),
        )?;
        println!("wrote {}", g.out.join(&file).display());
        outputs.push(file);
        models.push(model);
    }
    let resolved = SampleResolved {
        models,
        times,
        condition_time: condition.as_ref().map(|d| d.times()[0]),
        n_samples,
    };
    let refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    write_provenance(g, "sample", &a, resolved, &refs)
}

fn write_sample_csv(
    path: &Path,
    graph: &Graph,
    points: &[STPoint],
    mean: &[f64],
    var: &[f64],
    draws: Option<&nalgebra::DMatrix<f64>>,
) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut w = csv::Writer::from_path(path).map_err(Error::from)?;
    w.write_record(["t", "node", "series", "value"])
        .map_err(Error::from)?;
    let mut row = |p: &STPoint, series: &str, v: f64| {
        w.write_record([
            p.time.to_string(),
            graph.label(p.vertex).to_string(),
            series.to_string(),
            v.to_string(),
        ])
    };
    for (i, p) in points.iter().enumerate() {
        let half = 1.96 * var[i].max(0.0).sqrt();
        row(p, "mean", mean[i]).map_err(Error::from)?;
        row(p, "lower", mean[i] - half).map_err(Error::from)?;
        row(p, "upper", mean[i] + half).map_err(Error::from)?;
    }
    if let Some(d) = draws {
        for s in 0..d.nrows() {
            let label = format!("sample_{s}");
            for (i, p) in points.iter().enumerate() {
                row(p, &label, d[(s, i)]).map_err(Error::from)?;
            }
        }
    }
    w.flush().map_err(Error::from)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    data: DataSource,
    initial: GPModel,
    fitted: GPModel,
    hyperparameters: Vec<(&'static str, f64)>,
    lml: f64,
    initial_lml: f64,
    trace: Vec<f64>,
    failed_starts: usize,
    evaluations: usize,
    options: FitOptions,
}

fn fit(g: &Globals, a: FitArgs) -> CliResult<()> {
    let name = a.kernel.clone().ok_or_else(|| {
        usage(format!(
            "--kernel is required; valid names: {}",
            kernels::KERNEL_NAMES.join(", ")
        ))
    })?;
    let (graph, d, source) = load_data(&a.synth, &a.data, g.seed)?;
    let spec = build_kernel(&name, a.c, &a.kernel_args)?;
    let model = build_model(spec, &a.kernel_args, MeanPolicy::default(), 1e-3);
    let ctx = KernelContext::new(&graph, model.kernel.laplacian)?;
    let options = fit_options(&a.optimizer, g.seed);
    let r = gp::fit(&model, &ctx, &d, &options)?;
    let report = FitReport {
        data: source,
        initial: model,
        fitted: r.model,
        hyperparameters: r.model.kernel.hyperparameters(),
        lml: r.lml,
        initial_lml: r.initial_lml,
        trace: r.trace,
        failed_starts: r.failed_starts,
        evaluations: r.evaluations,
        options,
    };
    data::write_json(g.out.join("fit.json"), &report)?;
    write_provenance(g, "fit", &a, (), &["fit.json"])?;
    println!(
        "{name}: log marginal likelihood {:.6} -> {:.6}",
        report.initial_lml, report.lml
    );
    for (k, v) in &report.hyperparameters {
        println!("  {k} = {v}");
    }
    println!("  noise_variance = {}", report.fitted.noise_variance);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_grids() {
        assert_eq!(parse_times("1:5").unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(parse_times("0:0.3:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(parse_times("0.5, 1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert_eq!(parse_times("0:1:0.4").unwrap(), vec![0.0, 0.4, 0.8]);
        assert!(parse_times("5:1").is_err());
        assert!(parse_times("a:b").is_err());
        assert!(parse_times("1:2:0").is_err());
        assert!(parse_times("").is_err());
    }

    #[test]
    fn step_grid() {
        assert_eq!(grid_steps(&[0.5, 1.0], 1.0, 1000), Some(1000));
        assert_eq!(grid_steps(&[0.5, 1.0], 1.0, 999), Some(1000));
        assert_eq!(gcd(500, 1000), 500);
    }
}
