//! Subcommands.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use coflow::bounds::{self, BoundsProfile};
use coflow::dual::{self, BackwardFlow, CheckOptions, DualRule};
use coflow::lattice::{check_axioms, AxiomCheckOptions, FlowDump};
use coflow::motion::{self, DualLattice, Event, Interval, MotionParams};
use coflow::web::{web_enumerate, web_sample, WebMode, WebWindow};
use coflow::{simulate_flow_replica, DriftSpec, FlowRealization, LatticeSpec, MeetingRule};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{from_toml, load_config};
use crate::error::{CliError, Result};
use crate::report::{self, Envelope, EstimateRow, NumericTable};
use crate::suite;

#[derive(Debug, Parser)]
#[command(name = "coflow", version, about = "Coalescing stochastic flows and their duals: simulation and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one lattice realization and write its dump.
    Simulate(SimulateArgs),
    /// Evaluate the dual flow of a dumped realization at query points.
    Dual(DualArgs),
    /// Run an exact check on a dumped realization.
    Verify(VerifyArgs),
    /// Estimate an n-point transition probability.
    Estimate(EstimateArgs),
    /// Compare the dual flow with the forward motion.
    Dualcheck(DualcheckArgs),
    /// Check the transition-probability conditions empirically.
    Tpcheck(TpcheckArgs),
    /// Evaluate the analytic bounds.
    Bounds(BoundsArgs),
    /// Check the discrete web oracle.
    Web(WebArgs),
    /// Run every experiment in a config file.
    Run(RunArgs),
}

/// `zero`, `constant:C`, `linear:C0,C1` or `sine:A,K`.
pub fn parse_drift(s: &str) -> std::result::Result<DriftSpec, String> {
    let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
    let nums = || -> std::result::Result<Vec<f64>, String> {
        rest.split(',').map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad number {v:?}: {e}"))).collect()
    };
    let d = match (kind.trim(), rest.is_empty()) {
        ("zero", true) => DriftSpec::Zero,
        ("constant", false) => match nums()?[..] {
            [c] => DriftSpec::Constant { c },
            _ => return Err("constant takes one value: constant:C".into()),
        },
        ("linear", false) => match nums()?[..] {
            [c0, c1] => DriftSpec::Linear { c0, c1 },
            _ => return Err("linear takes two values: linear:C0,C1".into()),
        },
        ("sine", false) => match nums()?[..] {
            [amplitude, wavenumber] => DriftSpec::Sine { amplitude, wavenumber },
            _ => return Err("sine takes two values: sine:A,K".into()),
        },
        _ => return Err(format!("unknown drift {s:?}; expected zero, constant:C, linear:C0,C1 or sine:A,K")),
    };
    d.validate().map_err(|e| e.to_string())?;
    Ok(d)
}

/// Interval notation such as `(a,b]`, `(-inf,0]` or `[1,inf)`.
pub fn parse_interval(s: &str) -> std::result::Result<Interval, String> {
    let s = s.trim();
    let bad = || format!("expected an interval like \"(a,b]\", got {s:?}");
    if s.len() < 3 {
        return Err(bad());
    }
    let lo_closed = match &s[..1] {
        "[" => true,
        "(" => false,
        _ => return Err(bad()),
    };
    let hi_closed = match &s[s.len() - 1..] {
        "]" => true,
        ")" => false,
        _ => return Err(bad()),
    };
    let (a, b) = s[1..s.len() - 1].split_once(',').ok_or_else(bad)?;
    let end = |v: &str, inf: &[&str]| -> std::result::Result<Option<f64>, String> {
        let v = v.trim();
        if inf.contains(&v) {
            return Ok(None);
        }
        v.parse::<f64>().map(Some).map_err(|_| bad())
    };
    let iv = Interval {
        lo: end(a, &["-inf", "-infinity"])?,
        hi: end(b, &["inf", "+inf", "infinity"])?,
        lo_closed,
        hi_closed,
    };
    if (iv.lo.is_none() && lo_closed) || (iv.hi.is_none() && hi_closed) {
        return Err(format!("infinite ends must be open in {s:?}"));
    }
    iv.validate().map_err(|e| e.to_string())?;
    Ok(iv)
}

fn parse_meeting(s: &str) -> std::result::Result<MeetingRule, String> {
    match s {
        "bridge" => Ok(MeetingRule::Bridge),
        "endpoint" => Ok(MeetingRule::Endpoint),
        _ => Err(format!("unknown meeting rule {s:?}; expected bridge or endpoint")),
    }
}

/// Flags shared by the Monte Carlo subcommands.
#[derive(Debug, Args)]
pub struct MotionArgs {
    #[arg(long, value_parser = parse_drift, default_value = "zero")]
    pub drift: DriftSpec,
    /// Horizon; a multiple of --dt.
    #[arg(long, default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Replicas.
    #[arg(long = "N", default_value_t = 10_000)]
    pub replicas: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_meeting, default_value = "bridge")]
    pub meeting: MeetingRule,
    /// CSV output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl MotionArgs {
    fn params(&self) -> MotionParams {
        MotionParams::new(self.dt).with_meeting(self.meeting)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML with `seed`, optional `replica`, a `[drift]` and a `[lattice]` table.
    #[arg(long)]
    pub config: PathBuf,
    /// Where to write the flow dump.
    #[arg(long)]
    pub out: PathBuf,
    /// Also run the axiom checks; exits 1 if any fails.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    #[serde(default)]
    pub replica: u64,
    pub drift: DriftSpec,
    pub lattice: LatticeSpec,
}

#[derive(Debug, Args)]
pub struct DualArgs {
    #[arg(long)]
    pub flow: PathBuf,
    /// JSON array of `{"t": .., "s": .., "y": ..}` objects with `s <= t`.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualQuery {
    pub t: f64,
    pub s: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifySuite {
    Duality,
    Sandwich,
    Evolution,
    Equivariance,
    Axioms,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub flow: PathBuf,
    #[arg(long, value_enum)]
    pub suite: VerifySuite,
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw spatial points uniformly only, never on realized atoms.
    #[arg(long)]
    pub generic: bool,
    /// Time shift for the equivariance suite; a multiple of the lattice step.
    #[arg(long)]
    pub shift: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub motion: MotionArgs,
    /// Starting points, comma separated and non-decreasing.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub start: Vec<f64>,
    /// Number of points; must match --start when given.
    #[arg(long)]
    pub n: Option<usize>,
    /// One interval per point, in order, e.g. --box "(-inf,0]" --box "(0,1)".
    #[arg(long = "box", value_parser = parse_interval, allow_hyphen_values = true)]
    pub boxes: Vec<Interval>,
    /// Event that all points end within this distance of each other.
    #[arg(long, conflicts_with = "boxes")]
    pub diagonal: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DualcheckMode {
    Relation,
    Drift,
}

#[derive(Debug, Args)]
pub struct DualcheckArgs {
    #[command(flatten)]
    pub motion: MotionArgs,
    #[arg(long, value_enum, default_value = "relation")]
    pub mode: DualcheckMode,
    /// Forward starting points x (relation mode).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Vec<f64>,
    /// Dual starting points y, interlacing x; one value in drift mode.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub y: Vec<f64>,
    /// Grid pitch of the lattice flows behind the dual.
    #[arg(long, default_value_t = 0.005)]
    pub dx: f64,
    #[arg(long, default_value_t = 3.0)]
    pub tolerance_se: f64,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TpcheckArgs {
    #[command(flatten)]
    pub motion: MotionArgs,
    /// Two starting points.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [0.0, 0.5])]
    pub start: Vec<f64>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
    pub small_t: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, 0.0, 1.0])]
    pub grid: Vec<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundsOp {
    G,
    Ginv,
    Xstar,
    Wbound,
    Schedule,
    Identity,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, value_enum)]
    pub op: BoundsOp,
    #[arg(long, value_delimiter = ',')]
    pub x: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub eps: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub delta: Vec<f64>,
    /// Times for the identity op; the schedule horizon takes the first.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0])]
    pub t: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub lipschitz: f64,
    #[arg(long, default_value_t = 0.0)]
    pub sup: f64,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub beta: f64,
    /// Constant of the cubic ordering bound.
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    #[arg(long, default_value_t = 20)]
    pub n_max: u32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WebModeArg {
    Enumerate,
    Sample,
}

#[derive(Debug, Args)]
pub struct WebArgs {
    #[arg(long, value_enum, default_value = "enumerate")]
    pub mode: WebModeArg,
    /// Time steps of the window.
    #[arg(long = "T", default_value_t = 4)]
    pub t_steps: u32,
    /// Columns of the window.
    #[arg(long = "Z", default_value_t = 8)]
    pub columns: u32,
    /// Configurations drawn in sample mode.
    #[arg(long, default_value_t = 10_000)]
    pub configs: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    pub config: PathBuf,
    /// Report path; overrides `output.report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for CSV tables; overrides `output.tables`.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

pub fn execute(cli: Cli) -> Result<()> {
    let threads = crate::config::env_threads()?;
    match cli.command {
        // `run` manages its own pools
        Command::Run(a) => run(a),
        other => {
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
            suite::in_pool(threads, move || dispatch(other))?
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate(a) => simulate(a),
        Command::Dual(a) => dual_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Estimate(a) => estimate(a),
        Command::Dualcheck(a) => dualcheck(a),
        Command::Tpcheck(a) => tpcheck(a),
        Command::Bounds(a) => bounds_cmd(a),
        Command::Web(a) => web(a),
        Command::Run(a) => run(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading {}", path.display()), e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        CliError::config(format!("{}:{key}", path.display()), e.into_inner())
    })
}

fn load_flow(path: &Path) -> Result<FlowRealization> {
    let dump: FlowDump = read_json(path)?;
    Ok(FlowRealization::from_dump(dump)?)
}

fn emit_envelope<T: Serialize>(command: &str, body: &T, out: Option<&Path>) -> Result<()> {
    report::emit(out, &Envelope::new(command, body)?.to_pretty()?)
}

fn verdict(pass: bool, what: impl FnOnce() -> String) -> Result<()> {
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed(what()))
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let cfg: SimulateConfig = from_toml(&read(&a.config)?)?;
    cfg.drift.validate().map_err(|e| CliError::config("drift", e))?;
    cfg.lattice.validate().map_err(|e| CliError::config("lattice", e))?;
    let flow = simulate_flow_replica(&cfg.lattice, &cfg.drift, cfg.seed, cfg.replica)?;
    let dump = serde_json::to_string(&flow.to_dump())
        .map_err(|source| CliError::Json { context: "serializing flow dump".into(), source })?;
    report::emit(Some(&a.out), &dump)?;
    let axioms =
        a.check.then(|| check_axioms(&flow, &AxiomCheckOptions { seed: cfg.seed, ..AxiomCheckOptions::default() }));
    let body = json!({
        "spec": cfg.lattice,
        "drift": cfg.drift,
        "seed": cfg.seed,
        "replica": cfg.replica,
        "steps": flow.len(),
        "particle_steps": flow.particle_steps(),
        "clamped_particles": flow.clamped_count(),
        "axioms": axioms,
    });
    emit_envelope("simulate", &body, None)?;
    verdict(axioms.as_ref().is_none_or(|r| r.all_pass()), || "axiom checks failed".into())
}

#[derive(Debug, Serialize)]
struct DualRecord {
    t: f64,
    s: f64,
    y: f64,
    value: Option<f64>,
    tag: Option<dual::Regularity>,
    tie: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

fn dual_cmd(a: DualArgs) -> Result<()> {
    let flow = load_flow(&a.flow)?;
    let queries: Vec<DualQuery> = read_json(&a.queries)?;
    let records: Vec<DualRecord> = queries
        .iter()
        .map(|q| {
            let r = flow.index_of(q.t).and_then(|j| {
                let i = flow.index_of(q.s)?;
                if i > j {
                    return Err(coflow::CoflowError::TimeOrder { s: q.s, t: q.t });
                }
                dual::dual_evaluate_local(&flow, DualRule::LeftRegularity, j, i, q.y)
            });
            match r {
                Ok(v) => {
                    DualRecord { t: q.t, s: q.s, y: q.y, value: Some(v.value), tag: v.tag, tie: v.tie, error: None }
                }
                Err(e) => DualRecord {
                    t: q.t,
                    s: q.s,
                    y: q.y,
                    value: None,
                    tag: None,
                    tie: false,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    emit_envelope("dual", &records, a.out.as_deref())
}

fn verify(a: VerifyArgs) -> Result<()> {
    let flow = load_flow(&a.flow)?;
    let mut opts = CheckOptions::new(a.samples, a.seed);
    if a.generic {
        opts = opts.generic();
    }
    let bwd = BackwardFlow::new(&flow);
    let out = a.out.as_deref();
    match a.suite {
        VerifySuite::Duality | VerifySuite::Sandwich => {
            let r = if a.suite == VerifySuite::Duality {
                dual::check_duality(&bwd, &opts)
            } else {
                dual::check_sandwich(&bwd, &opts)
            };
            emit_envelope("verify", &json!({ "suite": format!("{:?}", a.suite).to_lowercase(), "report": r }), out)?;
            verdict(r.pass(), || format!("{} violations", r.violations))
        }
        VerifySuite::Evolution => {
            let r = dual::check_backward_evolution(&bwd, &opts);
            emit_envelope("verify", &json!({ "suite": "evolution", "report": r }), out)?;
            verdict(r.non_tie_violations() == 0, || format!("{} non-tie violations", r.non_tie_violations()))
        }
        VerifySuite::Equivariance => {
            let h = a.shift.unwrap_or_else(|| flow.spec().dt * (flow.len() / 4).max(1) as f64);
            let r = dual::check_shift_equivariance(&flow, h, &opts)?;
            emit_envelope("verify", &json!({ "suite": "equivariance", "report": r }), out)?;
            verdict(r.pass(), || "shift or cocycle identity violated".into())
        }
        VerifySuite::Axioms => {
            let r = check_axioms(&flow, &AxiomCheckOptions { seed: a.seed, ..AxiomCheckOptions::default() });
            emit_envelope("verify", &json!({ "suite": "axioms", "report": r }), out)?;
            verdict(r.all_pass(), || "axiom violated".into())
        }
    }
}

fn check_n(n: Option<usize>, start: &[f64]) -> Result<()> {
    match n {
        Some(n) if n != start.len() => {
            Err(CliError::Usage(format!("--n {n} does not match {} starting points", start.len())))
        }
        _ => Ok(()),
    }
}

fn write_rows(out: Option<&Path>, rows: &[EstimateRow]) -> Result<()> {
    report::emit(out, &report::estimate_csv(rows)?)
}

fn estimate(a: EstimateArgs) -> Result<()> {
    check_n(a.n, &a.start)?;
    let event = match (a.diagonal, a.boxes.is_empty()) {
        (Some(tol), _) => Event::Diagonal { tol },
        (None, false) => Event::product(a.boxes.clone()),
        (None, true) => return Err(CliError::Usage("give one --box per point or --diagonal".into())),
    };
    let m = &a.motion;
    let e = motion::estimate_transition(&a.start, &m.drift, &m.params(), m.t, &event, m.replicas, m.seed)?;
    write_rows(m.out.as_deref(), &[EstimateRow::from(&e)])
}

fn dualcheck(a: DualcheckArgs) -> Result<()> {
    let m = &a.motion;
    let lattice = DualLattice::new(a.dx);
    match a.mode {
        DualcheckMode::Relation => {
            let r = motion::estimate_dual_relation(
                &a.start,
                &a.y,
                &m.drift,
                &m.params(),
                &lattice,
                m.t,
                m.replicas,
                m.seed,
            )?;
            write_rows(m.out.as_deref(), &[EstimateRow::from(&r.forward), EstimateRow::from(&r.dual)])?;
            if let Some(p) = &a.report {
                emit_envelope("dualcheck", &r, Some(p))?;
            }
            verdict(r.within(a.tolerance_se), || {
                format!("|P~ - P| = {:.4} exceeds {} combined SE ({:.4})", r.gap, a.tolerance_se, r.combined_se)
            })
        }
        DualcheckMode::Drift => {
            let [y] = a.y[..] else {
                return Err(CliError::Usage("drift mode takes a single --y".into()));
            };
            let r = motion::check_dual_drift(&m.drift, &m.params(), &lattice, m.t, y, m.replicas, m.seed)?;
            let mut rows = vec![EstimateRow {
                event: "ks p-value vs simulated -a".into(),
                p_hat: r.ks_simulated.p_value,
                se: None,
                n: r.replicas,
                seed: r.seed,
            }];
            if let Some(k) = r.ks_closed_form {
                rows.push(EstimateRow {
                    event: "ks p-value vs closed form".into(),
                    p_hat: k.p_value,
                    se: None,
                    n: r.replicas,
                    seed: r.seed,
                });
            }
            write_rows(m.out.as_deref(), &rows)?;
            if let Some(p) = &a.report {
                emit_envelope("dualcheck", &r, Some(p))?;
            }
            verdict(r.pass(), || format!("KS rejects at alpha {}", r.alpha))
        }
    }
}

fn tpcheck(a: TpcheckArgs) -> Result<()> {
    let m = &a.motion;
    let [x0, x1] = a.start[..] else {
        return Err(CliError::Usage("--start takes two points".into()));
    };
    let r = motion::tp_checks(&m.drift, &m.params(), m.t, (x0, x1), &a.grid, &a.small_t, a.eps, m.replicas, m.seed)?;
    let mut rows = vec![
        EstimateRow::from(&r.compatibility.0),
        EstimateRow::from(&r.compatibility.1),
        EstimateRow::from(&r.diagonal),
    ];
    for &(t, rate) in &r.escape_rates {
        rows.push(EstimateRow {
            event: format!("escape rate t={t}"),
            p_hat: rate,
            se: None,
            n: m.replicas,
            seed: m.seed,
        });
    }
    write_rows(m.out.as_deref(), &rows)?;
    if let Some(p) = &a.report {
        emit_envelope("tpcheck", &r, Some(p))?;
    }
    verdict(r.pass(), || {
        format!(
            "compatibility {}, diagonal {}, singleton hits {}, escape decreasing {}",
            r.compatibility_ok(),
            r.diagonal_ok(),
            r.singleton_hits,
            r.escape_decreasing()
        )
    })
}

fn need<'a>(v: &'a [f64], flag: &str) -> Result<&'a [f64]> {
    if v.is_empty() {
        Err(CliError::Usage(format!("this op needs --{flag}")))
    } else {
        Ok(v)
    }
}

fn bounds_cmd(a: BoundsArgs) -> Result<()> {
    let table = match a.op {
        BoundsOp::G => {
            let mut t = NumericTable::new(&["x", "g"]);
            for &x in need(&a.x, "x")? {
                t.push(vec![x.into(), bounds::g(x)?.into()]);
            }
            t
        }
        BoundsOp::Ginv => {
            let mut t = NumericTable::new(&["eps", "g_inv", "sqrt_2_abs_ln_eps", "ratio"]);
            for &e in need(&a.eps, "eps")? {
                let gi = bounds::g_inv(e)?;
                let asym = (2.0 * e.ln().abs()).sqrt();
                t.push(vec![e.into(), gi.into(), asym.into(), (gi / asym).into()]);
            }
            t
        }
        BoundsOp::Xstar => {
            let mut t = NumericTable::new(&["x_star", "g_max"]);
            t.push(vec![bounds::find_x_star().into(), bounds::g_max().into()]);
            t
        }
        BoundsOp::Wbound => {
            let mut t = NumericTable::new(&[
                "eps",
                "delta",
                "bound",
                "small_product",
                "lipschitz_scale",
                "short_time",
                "asserted",
                "brownian_w",
            ]);
            for &e in need(&a.eps, "eps")? {
                for &d in need(&a.delta, "delta")? {
                    let b = bounds::w_lower_bound(e, d, a.lipschitz, a.sup)?;
                    let exact = if a.lipschitz == 0.0 && a.sup == 0.0 { bounds::brownian_w(e, d) } else { None };
                    t.push(vec![
                        e.into(),
                        d.into(),
                        b.value.into(),
                        b.hypotheses.small_product.into(),
                        b.hypotheses.lipschitz_scale.into(),
                        b.hypotheses.short_time.into(),
                        b.hypotheses.all().into(),
                        exact.into(),
                    ]);
                }
            }
            t
        }
        BoundsOp::Schedule => {
            let profile = BoundsProfile {
                lipschitz: a.lipschitz,
                sup: a.sup,
                c: a.c,
                ..BoundsProfile::brownian(a.alpha, a.beta, a.t[0])
            };
            let s = bounds::liminf_schedule(&profile, a.n_max)?;
            let mut t = NumericTable::new(&["n", "eps", "delta", "w_bound", "hypotheses_hold", "ratio", "asymptotic"]);
            for r in &s.rows {
                t.push(vec![
                    r.n.into(),
                    r.eps.into(),
                    r.delta.into(),
                    r.w_bound.into(),
                    r.hypotheses_hold.into(),
                    r.ratio.into(),
                    r.asymptotic.into(),
                ]);
            }
            t
        }
        BoundsOp::Identity => {
            let mut t = NumericTable::new(&["eps", "t", "residual"]);
            for &e in need(&a.eps, "eps")? {
                for &s in &a.t {
                    t.push(vec![e.into(), s.into(), bounds::gaussian_tail_identity_residual(e, s)?.into()]);
                }
            }
            t
        }
    };
    report::emit(a.out.as_deref(), &table.to_csv()?)
}

fn web(a: WebArgs) -> Result<()> {
    let window = WebWindow::new(a.t_steps, a.columns);
    window.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let r = match a.mode {
        WebModeArg::Enumerate => web_enumerate(window)?,
        WebModeArg::Sample => web_sample(window, a.configs, a.seed)?,
    };
    debug_assert_eq!(r.mode, if a.mode == WebModeArg::Enumerate { WebMode::Enumerate } else { WebMode::Sample });
    emit_envelope("web", &r, a.out.as_deref())?;
    verdict(r.all_pass, || "web oracle check failed".into())
}

fn run(a: RunArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let result = suite::run_experiment(&cfg)?;
    for c in &result.body.criteria {
        let ok = result.criterion_pass(c.id).unwrap_or(false);
        eprintln!("[{}] {:>2} {}: {}", if ok { "PASS" } else { "FAIL" }, c.id, c.name, c.summary);
    }
    for t in result.timings.iter().filter(|t| !t.within()) {
        eprintln!("[FAIL] {} took {:.1} s (limit {:.0} s)", t.section, t.seconds, t.limit.unwrap_or(f64::INFINITY));
    }
    if let Some(dir) = a.tables.as_ref().or(cfg.output.tables.as_ref()) {
        suite::write_tables(dir, &result.tables)?;
    }
    let env = Envelope::new("run", &result.body)?.with_timing(result.timing_json());
    report::emit(a.out.as_deref().or(cfg.output.report.as_deref()), &env.to_pretty()?)?;
    verdict(result.pass(), || {
        let failed: Vec<u32> =
            result.body.criteria.iter().filter(|c| result.criterion_pass(c.id) != Some(true)).map(|c| c.id).collect();
        format!("criteria {failed:?} failed")
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_flags() {
        assert_eq!(parse_drift("zero").unwrap(), DriftSpec::Zero);
        assert_eq!(parse_drift("constant:1.5").unwrap(), DriftSpec::Constant { c: 1.5 });
        assert_eq!(parse_drift("linear:0,-1").unwrap(), DriftSpec::Linear { c0: 0.0, c1: -1.0 });
        assert_eq!(parse_drift("sine:1,2").unwrap(), DriftSpec::Sine { amplitude: 1.0, wavenumber: 2.0 });
        assert!(parse_drift("linear:1").is_err());
        assert!(parse_drift("quadratic:1").is_err());
        assert!(parse_drift("zero:1").is_err());
    }

    #[test]
    fn interval_flags() {
        let iv = parse_interval("(-inf,0]").unwrap();
        assert_eq!(iv, Interval::below(0.0, true));
        assert_eq!(parse_interval("(0.5, 1)").unwrap(), Interval::open(0.5, 1.0));
        assert_eq!(parse_interval("[2,inf)").unwrap(), Interval::above(2.0, true));
        assert!(parse_interval("[-inf,0]").is_err());
        assert!(parse_interval("(1,0)").is_err());
        assert!(parse_interval("0,1").is_err());
    }
}
