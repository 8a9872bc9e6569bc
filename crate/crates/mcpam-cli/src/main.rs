use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use mcpam::bandits::{self, ArmKind};
use mcpam::bounds::{self, BoundReport, PowerVarianceFamily};
use mcpam::clustering::{kpp_init_indices, mcpam_with_backend, pam, ExitReason, LocalBackend, McpamConfig, MedoidResult, TraceEntry};
use mcpam::distributed::{self, CommStats};
use mcpam::ingest::{self, ColumnRole, QualityReport};
use mcpam::{Dataset, EccEstimate, KTuple, Metric, MetricKind, MetricSpec};

#[derive(Parser, Debug)]
#[command(name = "mcpam", version, about = "Monte Carlo PAM k-medoids and MME error bounds")]
struct Cli {
    /// Worker threads for swap evaluation and Monte Carlo trials.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,
    /// JSON configuration (as printed by --print-config); flags given on the
    /// command line take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
enum Cmd {
    /// Find k medoids of a CSV dataset.
    Cluster(ClusterArgs),
    /// Evaluate the error-bound calculus for a power-variance family.
    Bounds(BoundsArgs),
    /// Monte Carlo check of MME error against the bounds.
    VerifyMme(VerifyArgs),
    /// Serve one master connection.
    Worker(WorkerArgs),
    /// Run MCPAM with the heavy steps on remote workers.
    Master(MasterArgs),
    /// Score a clustering result against labels.
    Quality(QualityArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Algo {
    Mcpam,
    McpamSingle,
    Pam,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Init {
    /// K++ seeding.
    Kpp,
    /// The first k rows.
    First,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterArgs {
    #[arg(long, value_enum, default_value = "mcpam")]
    algo: Algo,
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// l1, l2, sql2 or gower.
    #[arg(long, default_value = "l2")]
    metric: String,
    /// Gower column weights, comma separated, in schema order.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long)]
    input: Option<PathBuf>,
    /// Column roles, e.g. numeric,categorical,label. Default: all numeric,
    /// except a column headed `label`.
    #[arg(long)]
    schema: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long, default_value_t = 1000)]
    n_start: usize,
    #[arg(long, default_value_t = 10)]
    growth: usize,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the practical swap rule.
    #[arg(long)]
    practical: bool,
    #[arg(long, value_enum, default_value = "kpp")]
    init: Init,
    /// PAM stops when a sweep improves by at most this much.
    #[arg(long, default_value_t = 0.0)]
    tol: f64,
    /// Include the full per-round trace.
    #[arg(long)]
    trace: bool,
    /// Include wall-clock runtime (output is then not reproducible byte for byte).
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsArgs {
    /// Preset (chi2, gaussian), inline JSON, or a JSON file.
    #[arg(long, default_value = "chi2")]
    family: String,
    #[arg(long, default_value_t = bounds::C4_MAX)]
    c4: f64,
    #[arg(long)]
    m: Option<u64>,
    /// Tolerance in percent; requires --m.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Exceedances as lo:hi:count (linear) or a comma list; requires --n.
    #[arg(long)]
    delta_grid: Option<String>,
    /// Report the feasible n region; requires --m.
    #[arg(long)]
    feasible: bool,
    /// Default: csv when --out ends in .csv, else json.
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum KindArg {
    Gaussian,
    Chi2,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifyArgs {
    #[arg(long, default_value = "chi2")]
    family: String,
    /// Arm distribution; default chi2 for the chi2 family, else gaussian.
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Comma list of means, or packed:m:lo:hi:power.
    #[arg(long, default_value = "packed:100:1:10:2")]
    means: String,
    #[arg(long, value_delimiter = ',', default_value = "1000,10000,100000")]
    n: Vec<u64>,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = bounds::C4_MAX)]
    c4: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkerArgs {
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MasterArgs {
    /// host:port list.
    #[arg(long, value_delimiter = ',')]
    workers: Vec<String>,
    #[command(flatten)]
    #[serde(flatten)]
    cluster: ClusterArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QualityArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    labels_col: String,
    /// Column roles; must mark the label column. Overrides --labels-col.
    #[arg(long)]
    schema: Option<String>,
    /// JSON written by `cluster` or `master`.
    #[arg(long)]
    result: Option<PathBuf>,
    /// Override the metric recorded in the result.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything `--print-config` shows and `--config` accepts.
#[derive(Debug, Serialize, Deserialize)]
struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threads: Option<usize>,
    #[serde(flatten)]
    cmd: Cmd,
}

struct Fail {
    code: u8,
    msg: String,
}

type CliResult<T> = Result<T, Fail>;

fn usage(msg: impl Into<String>) -> Fail {
    Fail { code: 2, msg: msg.into() }
}

fn runtime(msg: impl Into<String>) -> Fail {
    Fail { code: 1, msg: msg.into() }
}

impl From<mcpam::Error> for Fail {
    fn from(e: mcpam::Error) -> Self {
        use mcpam::Error::*;
        let code = match e {
            Schema(_) | InvalidArgument(_) | Config(_) | Conditions(_) => 2,
            Csv { .. } | Protocol(_) | Io(_) | Json(_) => 1,
        };
        Fail { code, msg: e.to_string() }
    }
}

fn main() -> ExitCode {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => e.exit(),
    };
    match run(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(matches: &ArgMatches) -> CliResult<()> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| usage(e.to_string()))?;
    let mut rc = RunConfig { threads: cli.threads, cmd: cli.cmd };
    if let Some(path) = &cli.config {
        rc = merge_config(rc, path, matches)?;
    }
    if cli.print_config {
        let s = serde_json::to_string_pretty(&rc).map_err(|e| runtime(e.to_string()))?;
        println!("{s}");
        return Ok(());
    }
    let threads = rc.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(usage("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| runtime(e.to_string()))?;
    match &rc.cmd {
        Cmd::Cluster(a) => cmd_cluster(a, &pool),
        Cmd::Bounds(a) => cmd_bounds(a),
        Cmd::VerifyMme(a) => cmd_verify(a, &pool),
        Cmd::Worker(a) => cmd_worker(a),
        Cmd::Master(a) => cmd_master(a),
        Cmd::Quality(a) => cmd_quality(a),
    }
}

/// Overlays a config file onto flags not given on the command line.
fn merge_config(rc: RunConfig, path: &Path, matches: &ArgMatches) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let file: Value = serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))?;
    let mut cur = serde_json::to_value(&rc).map_err(|e| runtime(e.to_string()))?;
    let (name, sub) = matches.subcommand().ok_or_else(|| usage("missing subcommand"))?;
    if let Some(c) = file.get("command") {
        if c != name {
            return Err(usage(format!("config is for command {c}, not {name:?}")));
        }
    }
    let known: Vec<String> = Cli::command()
        .find_subcommand(name)
        .map(|s| s.get_arguments().map(|a| a.get_id().to_string()).collect())
        .unwrap_or_default();
    let on_cli = |id: &str| known.iter().any(|k| k == id) && sub.value_source(id) == Some(ValueSource::CommandLine);
    if let Some(args) = file.get("args").and_then(Value::as_object) {
        for (k, v) in args {
            if !known.iter().any(|x| x == k) {
                return Err(usage(format!("unknown config key {k:?} for {name}")));
            }
            if !on_cli(k) {
                cur["args"][k] = v.clone();
            }
        }
    }
    if let Some(t) = file.get("threads") {
        if matches.value_source("threads") != Some(ValueSource::CommandLine) {
            cur["threads"] = t.clone();
        }
    }
    serde_json::from_value(cur).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, bytes: &[u8]) -> CliResult<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(bytes).and_then(|_| s.flush()).map_err(|e| runtime(e.to_string()))
        }
    }
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut b = serde_json::to_vec_pretty(v).map_err(|e| runtime(e.to_string()))?;
    b.push(b'\n');
    Ok(b)
}

fn metric_spec(name: &str, weights: &Option<Vec<f64>>) -> CliResult<MetricSpec> {
    let kind: MetricKind = name.parse()?;
    match weights {
        Some(w) if kind == MetricKind::Gower => Ok(MetricSpec::gower_weighted(w.clone())),
        Some(_) => Err(usage("--weights applies only to the gower metric")),
        None => Ok(MetricSpec::new(kind)),
    }
}

fn load_input(input: &Option<PathBuf>, schema: &Option<String>) -> CliResult<Dataset> {
    let path = input.as_ref().ok_or_else(|| usage("--input is required"))?;
    let decl = schema.as_deref().map(ingest::parse_schema_decl).transpose()?;
    Ok(ingest::load_csv(path, decl.as_deref())?)
}

#[derive(Debug, Serialize, Deserialize)]
struct Summary {
    outer_iterations: usize,
    rounds: usize,
    swaps: usize,
    max_n: usize,
    final_exit: Option<ExitReason>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ClusterOutput {
    algo: Algo,
    k: usize,
    metric: MetricSpec,
    seed: u64,
    init: Vec<usize>,
    medoid: KTuple,
    ecc: EccEstimate,
    summary: Summary,
    total_distance_evals: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runtime_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comm: Option<CommStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<TraceEntry>>,
}

struct Prepared {
    data: Dataset,
    spec: MetricSpec,
    metric: Metric,
    cfg: McpamConfig,
    init: Vec<usize>,
}

fn prepare(a: &ClusterArgs) -> CliResult<Prepared> {
    let data = load_input(&a.input, &a.schema)?;
    let spec = metric_spec(&a.metric, &a.weights)?;
    let metric = Metric::new(&spec, &data.schema)?;
    let cfg = McpamConfig {
        k: a.k,
        tau: a.tau,
        n_start: a.n_start,
        growth: a.growth,
        n_max: a.n_max,
        alpha: a.alpha,
        seed: a.seed,
        practical_opts: a.practical,
    };
    cfg.validate(data.len())?;
    let init = match a.init {
        Init::First => (0..a.k).collect(),
        Init::Kpp => {
            let mut r = mcpam::rng::stream(a.seed, mcpam::rng::INIT_STREAM);
            kpp_init_indices(&data, a.k, &metric, &mut r)?
        }
    };
    Ok(Prepared { data, spec, metric, cfg, init })
}

fn output(a: &ClusterArgs, p: &Prepared, res: MedoidResult, started: Instant, comm: Option<CommStats>) -> ClusterOutput {
    let summary = Summary {
        outer_iterations: res.trace.iter().map(|t| t.outer + 1).max().unwrap_or(0),
        rounds: res.trace.len(),
        swaps: res.trace.iter().filter(|t| t.swapped).count(),
        max_n: res.trace.iter().map(|t| t.n).max().unwrap_or(0),
        final_exit: res.trace.last().map(|t| t.exit),
    };
    ClusterOutput {
        algo: a.algo,
        k: a.k,
        metric: p.spec.clone(),
        seed: a.seed,
        init: p.init.clone(),
        medoid: res.medoid,
        ecc: res.ecc,
        summary,
        total_distance_evals: res.total_distance_evals,
        runtime_ms: a.timing.then(|| started.elapsed().as_secs_f64() * 1e3),
        comm,
        trace: a.trace.then_some(res.trace),
    }
}

fn cmd_cluster(a: &ClusterArgs, pool: &rayon::ThreadPool) -> CliResult<()> {
    let started = Instant::now();
    let p = prepare(a)?;
    let init = KTuple::from_indices(&p.data, &p.init)?;
    let res = match a.algo {
        Algo::Pam => pam(&p.data, a.k, &p.metric, a.tol, init)?,
        Algo::Mcpam | Algo::McpamSingle => {
            if a.algo == Algo::McpamSingle && a.k != 1 {
                return Err(usage("mcpam-single needs --k 1"));
            }
            let mut be = LocalBackend::new(&p.data, &p.metric).with_pool(pool);
            mcpam_with_backend(&p.data, &p.cfg, init, &mut be, a.algo == Algo::McpamSingle)?
        }
    };
    emit(&a.out, &json_bytes(&output(a, &p, res, started, None))?)
}

fn cmd_master(a: &MasterArgs) -> CliResult<()> {
    let started = Instant::now();
    let c = &a.cluster;
    if a.workers.is_empty() {
        return Err(usage("--workers is required"));
    }
    if c.algo == Algo::Pam {
        return Err(usage("master runs mcpam or mcpam-single"));
    }
    let p = prepare(c)?;
    let init = KTuple::from_indices(&p.data, &p.init)?;
    let (res, stats) = distributed::master_run(&p.data, &p.cfg, &p.spec, init, &a.workers, c.algo == Algo::McpamSingle)?;
    emit(&c.out, &json_bytes(&output(c, &p, res, started, Some(stats)))?)
}

fn cmd_worker(a: &WorkerArgs) -> CliResult<()> {
    let l = std::net::TcpListener::bind(&a.listen).map_err(|e| runtime(format!("cannot listen on {}: {e}", a.listen)))?;
    let addr = l.local_addr().map_err(|e| runtime(e.to_string()))?;
    eprintln!("listening on {addr}");
    distributed::worker_loop(l)?;
    Ok(())
}

fn parse_family(s: &str) -> CliResult<PowerVarianceFamily> {
    let fam = match s.trim() {
        "chi2" | "noncentral-chi2" => PowerVarianceFamily::noncentral_chi2(),
        "gaussian" => PowerVarianceFamily::gaussian(1.0, 1.0),
        t if t.starts_with('{') => serde_json::from_str(t).map_err(|e| usage(format!("--family: {e}")))?,
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| usage(format!("--family {path:?}: not a preset, JSON, or readable file ({e})")))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("--family {path}: {e}")))?
        }
    };
    fam.validate()?;
    Ok(fam)
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("--delta-grid {s:?}: expected lo:hi:count or a comma list"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else { return Err(bad()) };
        let (lo, hi): (f64, f64) = (lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?);
        let n: usize = n.parse().map_err(|_| bad())?;
        if n == 0 || !(lo <= hi) {
            return Err(bad());
        }
        if n == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
    }
}

fn cmd_bounds(a: &BoundsArgs) -> CliResult<()> {
    let family = parse_family(&a.family)?;
    let constants = bounds::derive_constants(&family, a.c4)?;
    let mut report = BoundReport {
        family,
        constants,
        p_max: bounds::p_max(&constants),
        tolerance: None,
        ub5: None,
        feasible_region: None,
        grid: None,
    };
    if let Some(p) = a.p {
        let m = a.m.ok_or_else(|| usage("--p needs --m"))?;
        report.tolerance = Some(bounds::n_for_tolerance(&constants, &family, m, p)?);
    }
    if let (Some(n), Some(m)) = (a.n, a.m) {
        report.ub5 = Some(bounds::rel_error_ub5(&constants, n, m));
    }
    if a.feasible {
        let m = a.m.ok_or_else(|| usage("--feasible needs --m"))?;
        report.feasible_region = Some(bounds::feasible_region(&constants, m)?);
    }
    if let Some(g) = &a.delta_grid {
        let n = a.n.ok_or_else(|| usage("--delta-grid needs --n"))?;
        report.grid = Some(bounds::delta_grid(&constants, n, &parse_grid(g)?));
    }
    let csv = match a.format {
        Some(f) => f == Format::Csv,
        None => a.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv")),
    };
    if !csv {
        return emit(&a.out, &json_bytes(&report)?);
    }
    let rows = report.grid.as_ref().ok_or_else(|| usage("csv output needs --delta-grid and --n"))?;
    let mut s = String::from("delta,z0_ub,ub3_normal,ub3_be,ub3_gen\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.delta, r.z0_ub, r.ub3_normal, r.ub3_be, r.ub3_gen));
    }
    emit(&a.out, s.as_bytes())
}

fn parse_means(s: &str) -> CliResult<Vec<f64>> {
    let bad = || usage(format!("--means {s:?}: expected a comma list or packed:m:lo:hi:power"));
    if let Some(rest) = s.strip_prefix("packed:") {
        let v: Vec<&str> = rest.split(':').collect();
        let [m, lo, hi, pw] = v[..] else { return Err(bad()) };
        let m: usize = m.parse().map_err(|_| bad())?;
        let f = |x: &str| x.parse::<f64>().map_err(|_| bad());
        return Ok(bandits::packed_means(m, f(lo)?, f(hi)?, f(pw)?)?);
    }
    s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn cmd_verify(a: &VerifyArgs, pool: &rayon::ThreadPool) -> CliResult<()> {
    let family = parse_family(&a.family)?;
    let kind = match a.kind {
        Some(KindArg::Chi2) => ArmKind::NoncentralChiSq1,
        Some(KindArg::Gaussian) => ArmKind::Gaussian,
        None if family == PowerVarianceFamily::noncentral_chi2() => ArmKind::NoncentralChiSq1,
        None => ArmKind::Gaussian,
    };
    let means = parse_means(&a.means)?;
    if a.n.is_empty() {
        return Err(usage("--n needs at least one value"));
    }
    let c = bounds::derive_constants(&family, a.c4)?;
    let rows = pool.install(|| bandits::sweep(family, kind, &means, &a.n, a.trials, &c, a.seed))?;
    let mut buf = Vec::new();
    bandits::write_sweep_csv(&mut buf, &rows)?;
    emit(&a.out, &buf)
}

#[derive(Deserialize)]
struct ResultIn {
    medoid: KTuple,
    metric: MetricSpec,
    #[serde(default)]
    total_distance_evals: u64,
    #[serde(default)]
    runtime_ms: Option<f64>,
}

fn cmd_quality(a: &QualityArgs) -> CliResult<()> {
    let input = a.input.as_ref().ok_or_else(|| usage("--input is required"))?;
    let rpath = a.result.as_ref().ok_or_else(|| usage("--result is required"))?;
    let decl: Vec<ColumnRole> = match &a.schema {
        Some(s) => ingest::parse_schema_decl(s)?,
        None => ingest::decl_with_label(&ingest::csv_header(input)?, &a.labels_col)?,
    };
    if !decl.contains(&ColumnRole::Label) {
        return Err(usage("the schema declares no label column"));
    }
    let data = ingest::load_csv(input, Some(&decl))?;
    let text = std::fs::read_to_string(rpath).map_err(|e| runtime(format!("cannot read {}: {e}", rpath.display())))?;
    let res: ResultIn = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", rpath.display())))?;
    let spec = match &a.metric {
        Some(m) => metric_spec(m, &res.metric.weights.clone().filter(|_| m.eq_ignore_ascii_case("gower")))?,
        None => res.metric,
    };
    let metric = Metric::new(&spec, &data.schema)?;
    for s in &res.medoid.slots {
        data.schema.check(s)?;
    }
    let q: QualityReport = ingest::quality_report(&data, &res.medoid, &metric, res.total_distance_evals, res.runtime_ms)?;
    emit(&a.out, &json_bytes(&q)?)
}
