//! Benchmark harness: L2 errors, method/problem registry, timed sweeps and
//! CSV/JSON reports.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::elements::{build_space, dunavant_rule, eval_basis, ElementFamily, FunctionSpace};
use crate::error::{Error, Result};
use crate::mesh::{generate_unit_disk, generate_unit_square, Mesh};
use crate::problems::{
    biochemical_problem, burgers_problem, minimal_surface_problem, plaplace_problem,
    quadratic_problem, superconductivity_problem, BcVariant, Domain, ProblemSpec, ScFormulation,
};
use crate::solver::{
    assemble_egfem_forms, picard_egfem, picard_sga, semi_implicit_burgers, BurgersVariant,
    IterOptions, SolveResult, Status,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Sga,
    TensorSga,
    Gfem,
    Egfem(ElementFamily),
}

pub fn parse_method(id: &str) -> Result<Method> {
    Ok(match id {
        "sga" => Method::Sga,
        "tensor-sga" => Method::TensorSga,
        "gfem" => Method::Gfem,
        "egfem-p0" => Method::Egfem(ElementFamily::LagrangeP0),
        "egfem-p1" => Method::Egfem(ElementFamily::LagrangeP1),
        "egfem-p2" => Method::Egfem(ElementFamily::LagrangeP2),
        "egfem-p3" => Method::Egfem(ElementFamily::LagrangeP3),
        "egfem-i1" => Method::Egfem(ElementFamily::QuadratureEmbedded(1)),
        "egfem-i2" => Method::Egfem(ElementFamily::QuadratureEmbedded(2)),
        "egfem-i3" => Method::Egfem(ElementFamily::QuadratureEmbedded(3)),
        "egfem-i4" => Method::Egfem(ElementFamily::QuadratureEmbedded(4)),
        _ => {
            return Err(Error::ReportParse(format!("unknown method id: {id}")));
        }
    })
}

pub fn method_id(method: Method) -> String {
    match method {
        Method::Sga => "sga".into(),
        Method::TensorSga => "tensor-sga".into(),
        Method::Gfem => "gfem".into(),
        Method::Egfem(ElementFamily::LagrangeP0) => "egfem-p0".into(),
        Method::Egfem(ElementFamily::LagrangeP1) => "egfem-p1".into(),
        Method::Egfem(ElementFamily::LagrangeP2) => "egfem-p2".into(),
        Method::Egfem(ElementFamily::LagrangeP3) => "egfem-p3".into(),
        Method::Egfem(ElementFamily::QuadratureEmbedded(k)) => format!("egfem-i{k}"),
    }
}

/// Benchmark problems by id; `nu` overrides the viscosity/diffusion scale
/// where the problem has one.
pub fn problem_by_id(id: &str, nu: Option<f64>) -> Result<ProblemSpec> {
    let nu1 = nu.unwrap_or(1.0);
    Ok(match id {
        "quadratic" => quadratic_problem(BcVariant::Polynomial),
        "quadratic-trig" => quadratic_problem(BcVariant::Trig),
        "burgers" => burgers_problem(nu1, 1.0),
        "superconductivity-a" => superconductivity_problem(nu1, ScFormulation::A),
        "superconductivity-b" => superconductivity_problem(nu1, ScFormulation::B),
        "superconductivity-c" => superconductivity_problem(nu1, ScFormulation::C),
        "biochemical" => biochemical_problem(1.0, 1.0),
        "p-laplace" => plaplace_problem(1.5),
        "minimal-surface" => minimal_surface_problem(),
        _ => {
            return Err(Error::ReportParse(format!("unknown problem id: {id}")));
        }
    })
}

pub fn mesh_for_level(domain: Domain, level: usize) -> Result<Mesh> {
    match domain {
        Domain::UnitSquare => generate_unit_square(1usize << level),
        Domain::UnitDisk => Ok(generate_unit_disk(level)),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct L2Error {
    pub absolute: f64,
    pub relative: f64,
    /// the reference norm vanished; `relative` then repeats `absolute`
    pub exact_norm_zero: bool,
}

/// `||u_h - exact||_{L2}` by element-wise quadrature of the squared
/// difference.
pub fn compute_l2_error(
    u: &[f64],
    v_space: &FunctionSpace,
    exact: impl Fn([f64; 2]) -> f64,
    quad_degree: usize,
) -> Result<L2Error> {
    if u.len() != v_space.n_dofs {
        return Err(Error::DimensionMismatch {
            op: "compute_l2_error",
            expected: v_space.n_dofs,
            got: u.len(),
        });
    }
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let mut basis = Vec::with_capacity(rule.points.len());
    for &p in &rule.points {
        basis.push(eval_basis(v_space.family, p)?.0);
    }
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for cell in 0..mesh.n_triangles() {
        let [a, b, c] = mesh.triangles[cell];
        let (v0, v1, v2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let area = mesh.triangle_area(cell);
        let dofs = &v_space.cell_dofs[cell];
        for (q, w) in rule.weights.iter().enumerate() {
            let bary = rule.points[q];
            let x = [
                bary[0] * v0[0] + bary[1] * v1[0] + bary[2] * v2[0],
                bary[0] * v0[1] + bary[1] * v1[1] + bary[2] * v2[1],
            ];
            let uh: f64 = dofs
                .iter()
                .enumerate()
                .map(|(i, &d)| u[d] * basis[q][i])
                .sum();
            let ex = exact(x);
            err2 += w * area * (uh - ex) * (uh - ex);
            ref2 += w * area * ex * ex;
        }
    }
    let absolute = err2.sqrt();
    let ref_norm = ref2.sqrt();
    if ref_norm < 1e-300 {
        Ok(L2Error {
            absolute,
            relative: absolute,
            exact_norm_zero: true,
        })
    } else {
        Ok(L2Error {
            absolute,
            relative: absolute / ref_norm,
            exact_norm_zero: false,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchConfig {
    pub problem: String,
    pub methods: Vec<String>,
    pub levels: Vec<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub repeats: usize,
    pub nu: Option<f64>,
    /// overrides the problem's per-iteration quadrature exactness degree
    pub quad_degree: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            problem: "quadratic".into(),
            methods: vec!["sga".into()],
            levels: vec![4],
            tol: 1e-12,
            max_iter: 500,
            repeats: 5,
            nu: None,
            quad_degree: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchRow {
    pub problem: String,
    pub method: String,
    pub level: usize,
    pub system_size: usize,
    pub iterations: usize,
    pub status: String,
    pub offline_s: f64,
    pub online_s: f64,
    pub total_s: f64,
    pub speedup_vs_sga: Option<f64>,
    pub rel_l2_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

fn status_str(status: Status) -> &'static str {
    match status {
        Status::Converged => "converged",
        Status::MaxIter => "max-iter",
        Status::Diverged => "diverged",
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

struct MethodRun {
    result: SolveResult,
    system_size: usize,
    offline_s: f64,
}

fn run_stationary_method(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    method: Method,
    opts: IterOptions,
) -> Result<MethodRun> {
    if matches!(method, Method::Gfem) && !problem.gfem_available {
        return Err(Error::MethodUnavailable {
            method: method_id(method),
            problem: problem.name.clone(),
            reason: "gradient-dependent nonlinearity has no single-valued \
                     nodal interpolant on the trial space"
                .into(),
        });
    }
    if matches!(method, Method::TensorSga) {
        return Err(Error::MethodUnavailable {
            method: method_id(method),
            problem: problem.name.clone(),
            reason: "tensor formulation is provided for the transport benchmark".into(),
        });
    }
    let start = Instant::now();
    match method {
        Method::Sga => {
            let v = build_space(mesh.clone(), ElementFamily::LagrangeP1)?;
            let total = start.elapsed().as_secs_f64();
            let result = picard_sga(problem, &v, opts)?;
            Ok(MethodRun {
                offline_s: total,
                system_size: v.n_dofs,
                result,
            })
        }
        Method::Gfem | Method::Egfem(_) => {
            let family = match method {
                Method::Gfem => ElementFamily::LagrangeP1,
                Method::Egfem(f) => f,
                _ => unreachable!(),
            };
            let v = build_space(mesh.clone(), ElementFamily::LagrangeP1)?;
            let w = build_space(mesh.clone(), family)?;
            let forms = assemble_egfem_forms(problem, &v, &w)?;
            let offline_s = start.elapsed().as_secs_f64();
            let result = picard_egfem(problem, &forms, opts)?;
            Ok(MethodRun {
                offline_s,
                system_size: forms.system_size(problem),
                result,
            })
        }
        _ => unreachable!(),
    }
}

fn run_burgers_method(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    method: Method,
    opts: IterOptions,
) -> Result<(Vec<f64>, usize, f64)> {
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1)?;
    let variant = match method {
        Method::Sga => BurgersVariant::Sga,
        Method::TensorSga => BurgersVariant::TensorSga,
        Method::Gfem => BurgersVariant::Gfem,
        Method::Egfem(f) => BurgersVariant::Egfem(f),
    };
    let system_size = match method {
        Method::Sga | Method::TensorSga => v.n_dofs,
        Method::Gfem => 2 * v.n_dofs,
        Method::Egfem(f) => v.n_dofs + build_space(mesh.clone(), f)?.n_dofs,
    };
    let start = Instant::now();
    let trajectory = semi_implicit_burgers(problem, &v, variant, opts)?;
    let elapsed = start.elapsed().as_secs_f64();
    Ok((trajectory.into_iter().last().unwrap(), system_size, elapsed))
}

/// Runs the configured method/level sweep.  Timings are medians over
/// `repeats` runs after one discarded warm-up; per-row failures are
/// recorded in the status column and the sweep continues.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    let opts = IterOptions {
        tol: config.tol,
        max_iter: config.max_iter,
        ..IterOptions::default()
    };
    let mut rows = Vec::new();
    for &level in &config.levels {
        let mut problem = problem_by_id(&config.problem, config.nu)?;
        if let Some(qd) = config.quad_degree {
            problem.sga_quad_degree = qd;
        }
        let mesh = Arc::new(mesh_for_level(problem.domain, level)?);
        let v = build_space(mesh.clone(), ElementFamily::LagrangeP1)?;
        let mut sga_online: Option<f64> = None;
        for method_name in &config.methods {
            let method = parse_method(method_name)?;
            let row = if problem.time.is_some() {
                bench_burgers_row(&problem, &mesh, &v, method, level, opts, config)
            } else {
                bench_stationary_row(&problem, &mesh, &v, method, level, opts, config)
            };
            let mut row = match row {
                Ok(r) => r,
                Err(e) => BenchRow {
                    problem: config.problem.clone(),
                    method: method_name.clone(),
                    level,
                    system_size: 0,
                    iterations: 0,
                    status: format!("error: {e}"),
                    offline_s: 0.0,
                    online_s: 0.0,
                    total_s: 0.0,
                    speedup_vs_sga: None,
                    rel_l2_error: None,
                },
            };
            if method == Method::Sga {
                sga_online = Some(row.online_s);
            } else if let Some(base) = sga_online {
                if row.online_s > 0.0 {
                    row.speedup_vs_sga = Some(base / row.online_s);
                }
            }
            rows.push(row);
        }
    }
    Ok(BenchReport {
        config: config.clone(),
        rows,
    })
}

fn bench_stationary_row(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    v: &FunctionSpace,
    method: Method,
    level: usize,
    opts: IterOptions,
    config: &BenchConfig,
) -> Result<BenchRow> {
    let mut offline_times = Vec::new();
    let mut online_times = Vec::new();
    let mut last = None;
    for rep in 0..=config.repeats {
        let run = run_stationary_method(problem, mesh, method, opts)?;
        if rep > 0 || config.repeats == 0 {
            offline_times.push(run.offline_s);
            online_times.push(run.result.online_s);
        }
        last = Some(run);
    }
    let run = last.unwrap();
    let rel_l2_error = match (&problem.exact, run.result.status) {
        (Some(exact), Status::Converged) => {
            Some(compute_l2_error(&run.result.u, v, exact, 6)?.relative)
        }
        _ => None,
    };
    let offline_s = median(offline_times);
    let online_s = median(online_times);
    Ok(BenchRow {
        problem: problem.name.clone(),
        method: method_id(method),
        level,
        system_size: run.system_size,
        iterations: run.result.iterations,
        status: status_str(run.result.status).into(),
        offline_s,
        online_s,
        total_s: offline_s + online_s,
        speedup_vs_sga: None,
        rel_l2_error,
    })
}

fn bench_burgers_row(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    v: &FunctionSpace,
    method: Method,
    level: usize,
    opts: IterOptions,
    config: &BenchConfig,
) -> Result<BenchRow> {
    let mut times = Vec::new();
    let mut last = None;
    for rep in 0..=config.repeats {
        let out = run_burgers_method(problem, mesh, method, opts)?;
        if rep > 0 || config.repeats == 0 {
            times.push(out.2);
        }
        last = Some(out);
    }
    let (u_final, system_size, _) = last.unwrap();
    let td = problem.time.as_ref().unwrap();
    let t_end = td.t_end;
    let err = compute_l2_error(&u_final, v, |x| (td.exact)(x, t_end), 6)?;
    let online_s = median(times);
    Ok(BenchRow {
        problem: problem.name.clone(),
        method: method_id(method),
        level,
        system_size,
        iterations: (t_end / td.dt).round() as usize,
        status: "converged".into(),
        offline_s: 0.0,
        online_s,
        total_s: online_s,
        speedup_vs_sga: None,
        rel_l2_error: Some(err.relative),
    })
}

pub const CSV_HEADER: &str = "problem,method,level,system_size,iterations,status,\
                              offline_s,online_s,total_s,speedup_vs_sga,rel_l2_error";

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.16e}"),
        None => String::new(),
    }
}

pub fn report_to_csv(report: &BenchReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{},{}\n",
            r.problem,
            r.method,
            r.level,
            r.system_size,
            r.iterations,
            r.status,
            r.offline_s,
            r.online_s,
            r.total_s,
            fmt_opt(r.speedup_vs_sga),
            fmt_opt(r.rel_l2_error),
        ));
    }
    out
}

pub fn rows_from_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::ReportParse(format!(
                "line {}: expected 11 fields, got {}",
                i + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::ReportParse(format!("bad number: {s}")))
        };
        let int = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::ReportParse(format!("bad integer: {s}")))
        };
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        rows.push(BenchRow {
            problem: fields[0].into(),
            method: fields[1].into(),
            level: int(fields[2])?,
            system_size: int(fields[3])?,
            iterations: int(fields[4])?,
            status: fields[5].into(),
            offline_s: num(fields[6])?,
            online_s: num(fields[7])?,
            total_s: num(fields[8])?,
            speedup_vs_sga: opt(fields[9])?,
            rel_l2_error: opt(fields[10])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

pub fn emit_report(report: &BenchReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_to_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map_err(|e| Error::ReportParse(e.to_string()))?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn parse_report(path: &Path) -> Result<BenchReport> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::ReportParse(e.to_string()))
}
