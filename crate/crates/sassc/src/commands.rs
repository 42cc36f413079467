//! Command implementations. Each returns the process exit code.

use std::path::Path;
use std::time::Instant;

use sassc_core::problem::norm_h;
use sassc_core::{
    kkt_residuals, mms_convergence_study, run_homotopy, solve_barrier_reference, solve_pdhg,
    solve_progressive_hedging, stationarity_fixed_points, Algorithm, DualPoint, Instance,
    InstanceSpec, PrimalPoint, SolveReport, SolveStatus, SolverParams,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::canonical;
use crate::cli::{RunConfig, Template};
use crate::error::{exit, CliError, CliResult};
use crate::files::{
    csv_float, parse_json, read_bytes, read_json, sha256_hex, write_csv, write_json,
};
use crate::schema;

/// Homotopy passes when the fitted slope of `E||z||^2` is at most this.
pub const SLOPE_BOUND: f64 = -0.9;
/// Default solver tolerance of `compare-oracle`.
pub const COMPARE_TOL: f64 = 1e-10;
pub const COMPARE_DIST_BOUND: f64 = 1e-5;
pub const COMPARE_REL_OBJ_BOUND: f64 = 1e-7;
pub const MMS_RATE_WINDOW: (f64, f64) = (1.85, 2.15);

/// An instance together with its provenance.
pub struct Loaded {
    pub spec: InstanceSpec,
    pub instance: Instance,
    pub sha256: String,
}

impl Loaded {
    pub fn from_spec(spec: InstanceSpec) -> CliResult<Self> {
        let text = canonical::to_string(&spec).map_err(|e| CliError::Input(e.to_string()))?;
        let instance = Instance::build(spec.clone())?;
        Ok(Self {
            sha256: sha256_hex(text.as_bytes()),
            spec,
            instance,
        })
    }

    pub fn seed(&self) -> u64 {
        self.spec.scenarios.seed
    }

    fn provenance(&self, command: &str) -> Value {
        json!({"command": command, "instance_sha256": self.sha256, "seed": self.seed()})
    }
}

/// Reads an instance file, applying the `--seed` override.
pub fn load_instance(path: &Path, seed: Option<u64>) -> CliResult<Loaded> {
    let mut spec: InstanceSpec = read_json(path)?;
    if let Some(s) = seed {
        spec.scenarios.seed = s;
    }
    Loaded::from_spec(spec)
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

fn write_timing(cfg: &RunConfig, start: Instant) -> CliResult<()> {
    let t = json!({
        "command": cfg.command,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
        "threads": cfg.threads,
    });
    write_json(&cfg.out.join("timing.json"), &t).map(|_| ())
}

pub fn generate(
    cfg: &RunConfig,
    template: Template,
    n1d: Option<usize>,
    scenarios: Option<usize>,
) -> CliResult<i32> {
    let mut spec = match &cfg.instance {
        Some(p) => read_json::<InstanceSpec>(p)?,
        None => match template {
            Template::Default => InstanceSpec::default_binding(7),
            Template::Tiny => InstanceSpec::tiny(7),
        },
    };
    if let Some(s) = cfg.seed {
        spec.scenarios.seed = s;
    }
    if let Some(n) = n1d {
        spec.grid.n1d = n;
    }
    if let Some(s) = scenarios {
        spec.scenarios.count = s;
    }
    let loaded = Loaded::from_spec(spec)?;
    let path = cfg.out.join("instance.json");
    write_json(&path, &loaded.spec)?;
    println!(
        "wrote {} ({} nodes, {} scenarios, seed {}) sha256 {}",
        path.display(),
        loaded.instance.n(),
        loaded.instance.scenario_count(),
        loaded.seed(),
        loaded.sha256
    );
    Ok(exit::OK)
}

fn status_code(status: SolveStatus) -> i32 {
    match status {
        SolveStatus::Converged => exit::OK,
        SolveStatus::IterationLimit => exit::ITERATION_LIMIT,
        SolveStatus::InfeasibilitySuspected => exit::INFEASIBLE,
        SolveStatus::NumericalFailure => exit::FAILED,
    }
}

type Solution = (PrimalPoint, DualPoint, SolveReport, Option<Vec<Vec<f64>>>);

fn run_solver(inst: &Instance, params: &SolverParams) -> sassc_core::Result<Solution> {
    match params.algorithm {
        Algorithm::Pdhg => solve_pdhg(inst, params).map(|(x, l, r)| (x, l, r, None)),
        Algorithm::ProgressiveHedging => {
            solve_progressive_hedging(inst, params).map(|(x, l, r, w)| (x, l, r, Some(w)))
        }
        Algorithm::Barrier => {
            solve_barrier_reference(inst, params).map(|(x, l, r)| (x, l, r, None))
        }
    }
}

fn history_rows(report: &SolveReport) -> Vec<Vec<String>> {
    report
        .history
        .iter()
        .map(|h| {
            let mut row = vec![h.iteration.to_string()];
            row.extend(
                [
                    h.max_residual,
                    h.r4,
                    h.r5_feas,
                    h.r5_comp,
                    h.objective,
                    h.dual_value,
                ]
                .iter()
                .map(|v| csv_float(*v)),
            );
            row
        })
        .collect()
}

pub fn solve(cfg: &RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let loaded = load_instance(cfg.instance_path()?, cfg.seed)?;
    let params = SolverParams {
        record_history: true,
        ..cfg.params.clone()
    };
    let head = merge(
        loaded.provenance("solve"),
        json!({"algorithm": params.algorithm.name()}),
    );
    let report_path = cfg.out.join("report.json");
    let (x, lambda, mut report, weights) = match run_solver(&loaded.instance, &params) {
        Ok(s) => s,
        Err(e) => {
            write_json(
                &report_path,
                &merge(head, json!({"converged": false, "error": e.to_string()})),
            )?;
            write_timing(cfg, start)?;
            return Err(e.into());
        }
    };
    write_json(&cfg.out.join("primal.json"), &x)?;
    write_json(&cfg.out.join("dual.json"), &lambda)?;
    if let Some(w) = &weights {
        write_json(&cfg.out.join("weights.json"), w)?;
    }
    write_csv(
        &cfg.out.join("history.csv"),
        &schema::HISTORY,
        &history_rows(&report),
    )?;
    report.history.clear();
    let body = json!({"converged": report.converged(), "report": report});
    write_json(&report_path, &merge(head, body))?;
    write_timing(cfg, start)?;
    println!(
        "{}: {:?} after {} iterations, objective {:.10e}, max residual {:.3e}",
        params.algorithm.name(),
        report.status,
        report.iterations,
        report.objective,
        report.kkt.max_residual()
    );
    Ok(status_code(report.status))
}

fn print_table(rows: &[(&str, f64, Option<bool>)]) {
    println!("{:<14} {:>24}  result", "quantity", "value");
    for (name, v, ok) in rows {
        let verdict = match ok {
            Some(true) => "ok",
            Some(false) => "FAIL",
            None => "",
        };
        println!("{name:<14} {v:>24.16e}  {verdict}");
    }
}

pub fn certify(cfg: &RunConfig, primal: &Path, dual: &Path) -> CliResult<i32> {
    let loaded = load_instance(cfg.instance_path()?, cfg.seed)?;
    let (pb, db) = (read_bytes(primal)?, read_bytes(dual)?);
    let x: PrimalPoint = parse_json(primal, &pb)?;
    let lambda: DualPoint = parse_json(dual, &db)?;
    x.check(&loaded.instance)?;
    lambda.check(&loaded.instance)?;
    let tol = cfg.params.kkt_tolerance;
    let kkt = kkt_residuals(&loaded.instance, &x, &lambda);
    let fixed = stationarity_fixed_points(&loaded.instance, &x, &lambda);
    let passed = kkt.certify(tol) && kkt.relative_gap() <= tol;

    let le = |v: f64| Some(v <= tol);
    let mut rows = vec![
        ("r1", kkt.r1, le(kkt.r1)),
        ("r2", kkt.r2, le(kkt.r2)),
        ("r3", kkt.r3, le(kkt.r3)),
    ];
    if let Some(r) = kkt.r3p {
        rows.push(("r3p", r, le(r)));
    }
    rows.extend([
        ("r4", kkt.r4, le(kkt.r4)),
        ("r5_sign", kkt.r5_sign, Some(kkt.r5_sign >= -tol)),
        ("r5_feas", kkt.r5_feas, le(kkt.r5_feas)),
        ("r5_comp", kkt.r5_comp, le(kkt.r5_comp)),
        ("relative_gap", kkt.relative_gap(), le(kkt.relative_gap())),
        ("objective", kkt.objective, None),
    ]);
    print_table(&rows);
    println!(
        "certificate {} at tolerance {tol:e}",
        if passed { "PASSED" } else { "FAILED" }
    );

    let body = json!({
        "primal_sha256": sha256_hex(&pb),
        "dual_sha256": sha256_hex(&db),
        "tolerance": tol,
        "passed": passed,
        "relative_gap": kkt.relative_gap(),
        "kkt": kkt,
        "fixed_points": fixed,
    });
    write_json(
        &cfg.out.join("certificate.json"),
        &merge(loaded.provenance("certify"), body),
    )?;
    let row: Vec<String> = kkt.csv_row().iter().map(|v| csv_float(*v)).collect();
    write_csv(&cfg.out.join("kkt.csv"), &schema::KKT, &[row])?;
    Ok(if passed { exit::OK } else { exit::FAILED })
}

pub fn homotopy(cfg: &RunConfig, schedule: &[f64]) -> CliResult<i32> {
    let start = Instant::now();
    sassc_core::homotopy::validate_schedule(schedule)?;
    let loaded = load_instance(cfg.instance_path()?, cfg.seed)?;
    let report = run_homotopy(&loaded.instance, schedule, &cfg.params)?;
    let rows: Vec<Vec<String>> = report
        .levels
        .iter()
        .map(|l| {
            [l.alpha_prime, l.ez2, l.dist_x1, l.objective, l.kkt_max]
                .iter()
                .map(|v| csv_float(*v))
                .collect()
        })
        .collect();
    write_csv(&cfg.out.join("homotopy.csv"), &schema::HOMOTOPY, &rows)?;

    let all_converged = report.levels.iter().all(|l| l.converged);
    let monotone = report.slack_decay_monotone(0.0);
    let slope = report.fit.map(|f| f.slope);
    let passed = all_converged && monotone && slope.is_some_and(|s| s <= SLOPE_BOUND);
    for l in &report.levels {
        println!(
            "alpha' {:>10.3e}  E|z|^2 {:.6e}  dist_x1 {:.6e}  kkt {:.2e}{}",
            l.alpha_prime,
            l.ez2,
            l.dist_x1,
            l.kkt_max,
            if l.converged { "" } else { "  (not converged)" }
        );
    }
    match slope {
        Some(s) => println!("fitted slope {s:.4} (bound {SLOPE_BOUND}), monotone {monotone}"),
        None => println!("no decay fit: slack never active"),
    }
    let body = json!({
        "slope_bound": SLOPE_BOUND,
        "slope": slope,
        "monotone": monotone,
        "all_converged": all_converged,
        "final_distance": report.final_distance(),
        "passed": passed,
        "report": report,
    });
    write_json(
        &cfg.out.join("homotopy.json"),
        &merge(loaded.provenance("homotopy"), body),
    )?;
    write_timing(cfg, start)?;
    Ok(if passed { exit::OK } else { exit::FAILED })
}

#[derive(Serialize)]
struct Comparison {
    distance_x1: f64,
    relative_objective_difference: f64,
    passed: bool,
}

pub fn compare_oracle(cfg: &RunConfig) -> CliResult<i32> {
    let start = Instant::now();
    let loaded = load_instance(cfg.instance_path()?, cfg.seed)?;
    let inst = &loaded.instance;
    let first = SolverParams {
        algorithm: Algorithm::Pdhg,
        kkt_tolerance: cfg.tol.unwrap_or(COMPARE_TOL),
        ..cfg.params.clone()
    };
    let (xp, _, rp) = solve_pdhg(inst, &first)?;
    let (xb, _, rb) = solve_barrier_reference(inst, &SolverParams::default())?;
    let d: Vec<f64> = xp.x1.iter().zip(&xb.x1).map(|(a, b)| a - b).collect();
    let dist = norm_h(&d, inst.h());
    let scale = rb.objective.abs();
    let rel = (rp.objective - rb.objective).abs() / if scale > 0.0 { scale } else { 1.0 };
    let passed = rp.converged()
        && rb.converged()
        && dist <= COMPARE_DIST_BOUND
        && rel <= COMPARE_REL_OBJ_BOUND;

    let row = |r: &SolveReport, dist: f64| {
        vec![
            r.algorithm.name().to_string(),
            format!("{:?}", r.status),
            r.iterations.to_string(),
            csv_float(r.objective),
            csv_float(r.kkt.max_residual()),
            csv_float(dist),
        ]
    };
    write_csv(
        &cfg.out.join("compare.csv"),
        &schema::COMPARE,
        &[row(&rp, dist), row(&rb, 0.0)],
    )?;
    let cmp = Comparison {
        distance_x1: dist,
        relative_objective_difference: rel,
        passed,
    };
    println!(
        "||dx1||_h {dist:.3e} (bound {COMPARE_DIST_BOUND:e}), relative objective difference {rel:.3e} (bound {COMPARE_REL_OBJ_BOUND:e})"
    );
    let body = json!({"comparison": cmp, "pdhg": rp, "barrier": rb});
    write_json(
        &cfg.out.join("compare.json"),
        &merge(loaded.provenance("compare-oracle"), body),
    )?;
    write_timing(cfg, start)?;
    Ok(if passed { exit::OK } else { exit::FAILED })
}

pub fn mms(cfg: &RunConfig, levels: &[usize]) -> CliResult<i32> {
    let start = Instant::now();
    let rows = mms_convergence_study(levels)?;
    let (lo, hi) = MMS_RATE_WINDOW;
    let rates: Vec<f64> = rows.iter().filter_map(|r| r.rate).collect();
    let passed = !rates.is_empty() && rates.iter().all(|r| (lo..=hi).contains(r));
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n1d.to_string(),
                csv_float(r.h),
                csv_float(r.max_error),
                r.rate.map(csv_float).unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&cfg.out.join("mms.csv"), &schema::MMS, &table)?;
    for r in &rows {
        match r.rate {
            Some(q) => println!("n1d {:>4}  error {:.6e}  rate {q:.4}", r.n1d, r.max_error),
            None => println!("n1d {:>4}  error {:.6e}", r.n1d, r.max_error),
        }
    }
    let body = json!({"command": "mms", "rate_window": [lo, hi], "passed": passed, "rows": rows});
    write_json(&cfg.out.join("mms.json"), &body)?;
    write_timing(cfg, start)?;
    Ok(if passed { exit::OK } else { exit::FAILED })
}
