use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use flagflow::collapse_lab::{collapse_run, collapse_verdict, CollapseConfig, Verdict, Witness, KERNEL_TOL};
use flagflow::flow_engine::{classify_limit, find_equilibria, integrate, integrate_batch, FlowTolerances, LimitClass};
use flagflow::orbit_lab::{build_model, induced_metric, sample_orbit, torus_pair_from_frame, LieModel};
use flagflow::realization::{mu_inverse, tau, FrameMatrix};
use flagflow::ricci_field::{cone_f, grad_f, CubicField, SimplexPoint2};
use flagflow::verify::{run_suite, SuiteOptions};
use flagflow::{Execution, Family, FlagSpec, MetricCoords};
use serde::Serialize;

use crate::config::{parse_flag, parse_point, parse_times, pick, ExperimentConfig, PointValue};
use crate::output::{csv_bytes, emit, json_bytes, num};
use crate::{Command, FlowArgs};

const DEFAULT_FLAG: &str = "A:1,1,1";

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
}

impl Ctx<'_> {
    fn flag(&self, cli: &Option<String>) -> Result<FlagSpec> {
        parse_flag(cli.as_deref().or(self.cfg.flag.as_deref()).unwrap_or(DEFAULT_FLAG))
    }

    fn tolerances(&self, args: &FlowArgs) -> Result<FlowTolerances> {
        let d = FlowTolerances::default();
        let tol = FlowTolerances { rtol: pick(args.rtol, self.cfg.rtol, d.rtol), atol: pick(args.atol, self.cfg.atol, d.atol) };
        positive("rtol", tol.rtol)?;
        positive("atol", tol.atol)?;
        Ok(tol)
    }

    /// Resolve a point from the command line, then from the config.
    fn point(&self, name: &str, cli: &Option<String>, cfg: &Option<PointValue>, len: usize) -> Result<Option<Vec<f64>>> {
        match (cli, cfg) {
            (Some(s), _) => parse_point(s, len).with_context(|| format!("--{name}")).map(Some),
            (None, Some(v)) => v.resolve(len).with_context(|| format!("config field {name}")).map(Some),
            (None, None) => Ok(None),
        }
    }

    fn required_point(&self, name: &str, cli: &Option<String>, cfg: &Option<PointValue>, len: usize) -> Result<Vec<f64>> {
        self.point(name, cli, cfg, len)?.with_context(|| format!("missing {name}: pass --{name} or set it in the config"))
    }

    fn out(&self, cli: Option<PathBuf>) -> Option<PathBuf> {
        cli.or_else(|| self.cfg.out.clone())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        bail!("{name} must be positive and finite, got {v}");
    }
    Ok(())
}

fn arr3(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| num(*x)).collect();
    format!("[{}]", parts.join(", "))
}

fn simplex_start(x: &[f64]) -> Result<MetricCoords> {
    MetricCoords::normalized(arr3(x)).map_err(|e| anyhow::anyhow!("invalid start point {x:?}: {e}"))
}

pub fn run(cmd: Command, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let ctx = Ctx { cfg };
    match cmd {
        Command::Field { flow, point } => field(&ctx, &flow, &point),
        Command::Flow { flow, x0, t_max, out } => flow_cmd(&ctx, &flow, &x0, t_max, ctx.out(out)),
        Command::Portrait { flow, grid, t_max, out } => portrait(&ctx, &flow, grid, t_max, ctx.out(out)),
        Command::Equilibria { flow, grid, newton_tol, out } => equilibria(&ctx, &flow, grid, newton_tol, ctx.out(out)),
        Command::Realize { point, out } => realize(&ctx, &point, ctx.out(out)),
        Command::Orbit { flag, blocks, point, h1, h2, count, seed, out } => {
            orbit(&ctx, OrbitArgs { flag, blocks, point, h1, h2, count, seed, out: ctx.out(out) })
        }
        Command::Collapse { flow, x0, at, times, t_limit, count, seed, out, verdict_out } => collapse(
            &ctx,
            CollapseArgs {
                flow,
                x0,
                at,
                times,
                t_limit,
                count,
                seed,
                out: ctx.out(out),
                verdict_out: verdict_out.or_else(|| cfg.verdict_out.clone()),
            },
        ),
        Command::Verify { quick, seed, out } => verify(&ctx, quick, seed, ctx.out(out)),
    }
}

fn field(ctx: &Ctx, flow: &FlowArgs, point: &Option<String>) -> Result<ExitCode> {
    let spec = ctx.flag(&flow.flag)?;
    let x = arr3(&ctx.required_point("point", point, &ctx.cfg.point, 3)?);
    let field = CubicField::new(&spec);
    println!("flag  = {spec}");
    println!("x     = {}", fmt_vec(&x));
    println!("R     = {}", fmt_vec(&field.eval(x)));
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        let xn = x.map(|v| v / s);
        let label = if (s - 1.0).abs() <= 1e-12 { "X    " } else { "X(x/|x|_1)" };
        println!("{label} = {}", fmt_vec(&field.projected(xn)));
    }
    println!("F     = {}", num(cone_f(x)));
    println!("gradF = {}", fmt_vec(&grad_f(x)));
    Ok(ExitCode::SUCCESS)
}

fn flow_cmd(ctx: &Ctx, flow: &FlowArgs, x0: &Option<String>, t_max: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let spec = ctx.flag(&flow.flag)?;
    let tol = ctx.tolerances(flow)?;
    let x0 = simplex_start(&ctx.required_point("x0", x0, &ctx.cfg.x0, 3)?)?;
    let t_max = pick(t_max, ctx.cfg.t_max, 50.0);
    positive("t_max", t_max)?;
    let traj = integrate(&spec, &x0, t_max, tol.rtol, tol.atol)?;
    log::info!("{} states, terminated by {:?} at t = {}", traj.len(), traj.termination, traj.final_time());
    let rows = (0..traj.len()).map(|i| {
        let x = traj.states[i].as_array();
        let d = traj.diagnostics[i];
        vec![num(traj.times[i]), num(x[0]), num(x[1]), num(x[2]), num(d.f), num(d.sum_residual)]
    });
    emit(out.as_deref(), &csv_bytes(&["t", "x1", "x2", "x3", "F", "sum_residual"], rows)?)?;
    Ok(ExitCode::SUCCESS)
}

fn portrait(ctx: &Ctx, flow: &FlowArgs, grid: Option<usize>, t_max: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let spec = ctx.flag(&flow.flag)?;
    let tol = ctx.tolerances(flow)?;
    let n = pick(grid, ctx.cfg.grid, 20);
    if n == 0 {
        bail!("grid size must be at least 1");
    }
    let t_max = pick(t_max, ctx.cfg.t_max, 50.0);
    positive("t_max", t_max)?;
    // Cell centres of the unit square, folded onto the triangle.
    let cells: Vec<[f64; 2]> = (0..n * n)
        .map(|k| {
            let (s, t) = (((k / n) as f64 + 0.5) / n as f64, ((k % n) as f64 + 0.5) / n as f64);
            [s * (1.0 - t), t]
        })
        .collect();
    let starts: Vec<MetricCoords> =
        cells.iter().map(|p| simplex_start(&SimplexPoint2::new(p[0], p[1]).unwrap().lift())).collect::<Result<_>>()?;
    let eqs = find_equilibria(&spec, 25, 1e-12)?;
    let runs = integrate_batch(&spec, &starts, t_max, tol, Execution::default());
    let field = CubicField::new(&spec);
    let mut rows = Vec::with_capacity(cells.len());
    let mut undecided = 0;
    for (p, run) in cells.iter().zip(runs) {
        let traj = run?;
        let end = traj.last_state().as_array();
        let y = field.reduced(*p);
        let (lu, lv, kind) = match classify_limit(&traj, &eqs) {
            LimitClass::Equilibrium { equilibrium, .. } => {
                let q = equilibrium.point.as_array();
                let kind = serde_json::to_value(equilibrium.stability)?.as_str().unwrap_or("").to_string();
                (num(q[0]), num(q[1]), kind)
            }
            LimitClass::Undecided => {
                undecided += 1;
                ("NaN".into(), "NaN".into(), "undecided".into())
            }
        };
        rows.push(vec![num(p[0]), num(p[1]), num(y[0]), num(y[1]), num(end[0]), num(end[1]), lu, lv, kind]);
    }
    if undecided > 0 {
        log::warn!("{undecided} of {} trajectories did not settle by t = {t_max}", cells.len());
    }
    let header = ["u", "v", "Yu", "Yv", "end_u", "end_v", "limit_u", "limit_v", "limit_stability"];
    emit(out.as_deref(), &csv_bytes(&header, rows)?)?;
    Ok(ExitCode::SUCCESS)
}

fn equilibria(ctx: &Ctx, flow: &FlowArgs, grid: Option<usize>, newton_tol: Option<f64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let spec = ctx.flag(&flow.flag)?;
    let grid = pick(grid, ctx.cfg.grid, 25);
    let tol = pick(newton_tol, ctx.cfg.newton_tol, 1e-12);
    positive("newton_tol", tol)?;
    let eqs = find_equilibria(&spec, grid, tol)?;
    emit(out.as_deref(), &json_bytes(&eqs)?)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct Realization {
    x: [f64; 3],
    #[serde(rename = "F")]
    f: f64,
    mu_inverse: [[f64; 2]; 2],
    tau: Vec<Vec<f64>>,
    #[serde(rename = "H1_omega_coords")]
    h1: [f64; 2],
    #[serde(rename = "H2_omega_coords")]
    h2: [f64; 2],
}

fn realize(ctx: &Ctx, point: &Option<String>, out: Option<PathBuf>) -> Result<ExitCode> {
    let x = arr3(&ctx.required_point("point", point, &ctx.cfg.point, 3)?);
    let frame = tau(x)?;
    let m = mu_inverse(x);
    let col = |j: usize| {
        let c = frame.column(j);
        [c[0], c[1]]
    };
    let r = Realization {
        x,
        f: cone_f(x),
        mu_inverse: [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]],
        tau: frame.to_rows(),
        h1: col(0),
        h2: col(1),
    };
    emit(out.as_deref(), &json_bytes(&r)?)?;
    Ok(ExitCode::SUCCESS)
}

struct OrbitArgs {
    flag: Option<String>,
    blocks: Option<String>,
    point: Option<String>,
    h1: Option<String>,
    h2: Option<String>,
    count: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

fn model_for(spec: &FlagSpec) -> Result<LieModel> {
    match spec.field_family() {
        Family::A { m, n, p } => Ok(build_model(m as usize, n as usize, p as usize)?),
        _ => bail!("orbit models exist only for the A family (and E through A(1,1,1)); got {spec}"),
    }
}

fn orbit(ctx: &Ctx, a: OrbitArgs) -> Result<ExitCode> {
    let model = match ctx.point("blocks", &a.blocks, &ctx.cfg.blocks, 3)? {
        Some(b) => {
            if b.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                bail!("block sizes must be positive integers, got {b:?}");
            }
            build_model(b[0] as usize, b[1] as usize, b[2] as usize)?
        }
        None => model_for(&ctx.flag(&a.flag)?)?,
    };
    let (h1, h2) = match ctx.point("point", &a.point, &ctx.cfg.point, 3)? {
        Some(x) => torus_pair_from_frame(&model, &tau(arr3(&x))?),
        None => {
            let h1 = ctx.required_point("h1", &a.h1, &ctx.cfg.h1, 2)?;
            let h2 = ctx.point("h2", &a.h2, &ctx.cfg.h2, 2)?.unwrap_or(vec![0.0, 0.0]);
            torus_pair_from_frame(&model, &FrameMatrix::from_columns(&[[h1[0], h1[1]], [h2[0], h2[1]]]))
        }
    };
    let count = pick(a.count, ctx.cfg.count, 1000);
    let seed = pick(a.seed, ctx.cfg.seed, 0);
    let metric = induced_metric(&model, &h1, &h2)?;
    log::info!("induced metric {:?} (isotypic residual {:.3e})", metric.coords.as_array(), metric.residual);
    let cloud = sample_orbit(&model, &h1, &h2, count, seed)?;
    emit(a.out.as_deref(), &json_bytes(&cloud)?)?;
    if a.out.is_some() {
        println!("induced metric {}", fmt_vec(&metric.coords.as_array()));
    }
    Ok(ExitCode::SUCCESS)
}

struct CollapseArgs {
    flow: FlowArgs,
    x0: Option<String>,
    at: Option<String>,
    times: Option<String>,
    t_limit: Option<f64>,
    count: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    verdict_out: Option<PathBuf>,
}

fn collapse(ctx: &Ctx, a: CollapseArgs) -> Result<ExitCode> {
    let spec = ctx.flag(&a.flow.flag)?;
    let model = model_for(&spec)?;
    if let Some(at) = &a.at {
        let x = MetricCoords::normalized(arr3(&parse_point(at, 3)?)).map_err(|e| anyhow::anyhow!("--at: {e}"))?;
        let verdict = collapse_verdict(&model, &x, KERNEL_TOL);
        emit(a.verdict_out.as_deref(), &json_bytes(&verdict)?)?;
        if let Witness::Bracket(w) = &verdict.witness {
            bail!(
                "collapse at {:?} is not realizable: [{}, {}] has a component of relative norm {:.3e} in m{}",
                x.as_array(),
                w.left,
                w.right,
                w.residual,
                w.summand + 1
            );
        }
        return Ok(ExitCode::SUCCESS);
    }

    let defaults = CollapseConfig::default();
    let times = match (&a.times, &ctx.cfg.times) {
        (Some(s), _) => s.split(',').map(crate::config::parse_real).collect::<Result<Vec<_>>>()?,
        (None, Some(v)) => v.clone(),
        (None, None) => defaults.times.clone(),
    };
    let cfg = CollapseConfig {
        times: parse_times(&times)?,
        count: pick(a.count, ctx.cfg.count, defaults.count),
        seed: pick(a.seed, ctx.cfg.seed, defaults.seed),
        t_limit: pick(a.t_limit, ctx.cfg.t_limit, defaults.t_limit),
        tol: ctx.tolerances(&a.flow)?,
        equilibrium_grid: defaults.equilibrium_grid,
    };
    positive("t_limit", cfg.t_limit)?;
    if cfg.count == 0 {
        bail!("count must be at least 1");
    }
    let x0 = simplex_start(&ctx.required_point("x0", &a.x0, &ctx.cfg.x0, 3)?)?;
    let profile = collapse_run(&spec, &model, &x0, &cfg, Execution::default())?;
    let rows = profile.rows.iter().map(|r| {
        let x = r.x.as_array();
        vec![num(r.t), num(x[0]), num(x[1]), num(x[2]), num(r.hausdorff)]
    });
    emit(a.out.as_deref(), &csv_bytes(&["t", "x1", "x2", "x3", "hausdorff"], rows)?)?;
    if let Some(p) = &a.verdict_out {
        emit(Some(p), &json_bytes(&profile.verdict)?)?;
    }
    let check = profile.check(0.1, 2.0);
    eprintln!(
        "limit {:?} ({:?}); final distance {:.3e}, 2x sampling resolution {:.3e}; profile check {}",
        profile.limit.as_array(),
        profile.verdict.verdict,
        check.final_distance,
        check.final_bound,
        if check.passed() { "passed" } else { "FAILED" }
    );
    debug_assert!(profile.verdict.verdict == Verdict::Realizable);
    Ok(ExitCode::SUCCESS)
}

fn verify(ctx: &Ctx, quick: bool, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExitCode> {
    let mut opts = if quick { SuiteOptions::quick() } else { SuiteOptions::full() };
    opts.seed = pick(seed, ctx.cfg.seed, opts.seed);
    let checks = run_suite(&opts, Execution::default());
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(p) = &out {
        emit(Some(p), &json_bytes(&checks)?)?;
    }
    Ok(if checks.iter().all(|c| c.passed) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
