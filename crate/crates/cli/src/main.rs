use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use egfem::bench::{
    emit_report, parse_method, problem_by_id, run_benchmark, BenchConfig, ReportFormat,
};
use egfem::elements::{build_space, dunavant_rule, ElementFamily};
use egfem::mesh::read_msh;
use egfem::problems::{all_stationary, burgers_problem, burgers_residual, strong_form_residual};
use egfem::tensor::SparseTensor3;

#[derive(Parser)]
#[command(name = "egfem-bench", about = "Benchmark harness for the finite element toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run a method x level sweep for one problem and write a report
    Bench {
        #[arg(long)]
        problem: String,
        /// comma-separated method ids (sga, tensor-sga, gfem, egfem-p0/p2/p3, egfem-i1..i4)
        #[arg(long, value_delimiter = ',')]
        method: Vec<String>,
        /// comma-separated refinement levels (square: 2^l x 2^l cells)
        #[arg(long, value_delimiter = ',')]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 1e-12)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long)]
        quad_degree: Option<usize>,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Print summary statistics for a Gmsh MSH 2.2 file
    MeshInfo {
        #[arg(long)]
        msh: PathBuf,
    },
    /// Run the built-in oracle suites
    Verify,
}

fn main() -> ExitCode {
    // Kernels are deterministic and sequential; the variable is accepted
    // for interface stability and validated only.
    if let Ok(v) = std::env::var("EGFEM_NUM_THREADS") {
        if v.parse::<usize>().map(|n| n >= 1) != Ok(true) {
            eprintln!("EGFEM_NUM_THREADS must be a positive integer, got {v:?}");
            return ExitCode::FAILURE;
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> egfem::Result<ExitCode> {
    match cli.command {
        Command::Bench {
            problem,
            method,
            levels,
            tol,
            max_iter,
            repeats,
            quad_degree,
            nu,
            out,
            format,
        } => {
            problem_by_id(&problem, nu)?;
            for m in &method {
                parse_method(m)?;
            }
            let config = BenchConfig {
                problem,
                methods: method,
                levels,
                tol,
                max_iter,
                repeats,
                nu,
                quad_degree,
            };
            let report = run_benchmark(&config)?;
            let fmt = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
            };
            emit_report(&report, fmt, &out)?;
            for row in &report.rows {
                println!(
                    "{} {} level {}: size {} status {} online {:.3e}s{}",
                    row.problem,
                    row.method,
                    row.level,
                    row.system_size,
                    row.status,
                    row.online_s,
                    row.rel_l2_error
                        .map(|e| format!(" rel_l2 {e:.3e}"))
                        .unwrap_or_default()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::MeshInfo { msh } => {
            let mesh = read_msh(&msh)?;
            mesh.validate()?;
            let dirichlet = mesh
                .boundary_edges
                .iter()
                .filter(|(_, t)| *t == egfem::mesh::BoundaryTag::Dirichlet)
                .count();
            println!("vertices:        {}", mesh.n_vertices());
            println!("triangles:       {}", mesh.n_triangles());
            println!("boundary edges:  {}", mesh.boundary_edges.len());
            println!("  dirichlet:     {}", dirichlet);
            println!("  neumann:       {}", mesh.boundary_edges.len() - dirichlet);
            println!("total area:      {:.12}", mesh.total_area());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let ok = verify();
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}

fn check(name: &str, ok: bool, all_ok: &mut bool) {
    println!("{} {}", if ok { "PASS" } else { "FAIL" }, name);
    *all_ok &= ok;
}

/// Fast self-contained oracle checks: quadrature exactness, contraction
/// identities, manufactured-source residuals, space sizes.
fn verify() -> bool {
    let mut ok = true;

    // quadrature rules integrate their monomials exactly; the reference
    // value is int over the unit triangle of x^a y^b, divided by the
    // triangle area since weights are normalized to sum to one
    let mut quad_ok = true;
    for deg in 1..=6usize {
        let rule = dunavant_rule(deg).unwrap();
        for a in 0..=deg {
            for b in 0..=(deg - a) {
                let approx: f64 = rule
                    .points
                    .iter()
                    .zip(&rule.weights)
                    .map(|(p, w)| w * p[1].powi(a as i32) * p[2].powi(b as i32))
                    .sum();
                let exact = 2.0 * factorial(a) * factorial(b) / factorial(a + b + 2);
                quad_ok &= (approx - exact).abs() < 1e-13;
            }
        }
    }
    check("quadrature monomial exactness (degrees 1-6)", quad_ok, &mut ok);

    // contraction identity T:(w (x) v) = (T.v) w on random instances
    let mut rng = 0x2545f4914f6cdd1du64;
    let mut next = move || {
        rng ^= rng << 13;
        rng ^= rng >> 7;
        rng ^= rng << 17;
        (rng >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut tensor_ok = true;
    for _ in 0..20 {
        let dims = [5, 4, 6];
        let entries: Vec<(usize, usize, usize, f64)> = (0..40)
            .map(|_| {
                (
                    (next().abs() * 1e6) as usize % dims[0],
                    (next().abs() * 1e6) as usize % dims[1],
                    (next().abs() * 1e6) as usize % dims[2],
                    next(),
                )
            })
            .collect();
        let t = SparseTensor3::from_triplets(dims, entries).unwrap();
        let w: Vec<f64> = (0..dims[1]).map(|_| next()).collect();
        let v: Vec<f64> = (0..dims[2]).map(|_| next()).collect();
        let lhs = t.double_contract(&w, &v).unwrap();
        let rhs = t.contract_mode3(&v).unwrap().matvec(&w).unwrap();
        tensor_ok &= lhs
            .iter()
            .zip(&rhs)
            .all(|(a, b)| (a - b).abs() < 1e-13);
    }
    check("tensor contraction identities", tensor_ok, &mut ok);

    // manufactured sources satisfy the strong form
    let mut resid_ok = true;
    for spec in all_stationary() {
        for i in 0..50 {
            let s = (i as f64 + 0.5) / 50.0;
            let x = match spec.domain {
                egfem::problems::Domain::UnitSquare => [s, (0.37 + 0.41 * s).fract()],
                egfem::problems::Domain::UnitDisk => {
                    [0.7 * (s - 0.5), 0.7 * ((0.37 + 0.41 * s).fract() - 0.5)]
                }
            };
            resid_ok &= strong_form_residual(&spec, x).abs() < 1e-5;
        }
    }
    let burgers = burgers_problem(1.0, 1.0);
    for i in 0..20 {
        let s = (i as f64 + 0.5) / 20.0;
        resid_ok &= burgers_residual(&burgers, [s, (0.3 + 0.4 * s).fract()], 0.1 + 0.8 * s).abs()
            < 1e-4;
    }
    check("manufactured-source residual oracles", resid_ok, &mut ok);

    // space sizes on the reference 64x64 mesh
    let mesh = Arc::new(egfem::mesh::generate_unit_square(64).unwrap());
    let sizes = [
        (ElementFamily::LagrangeP1, 4225),
        (ElementFamily::LagrangeP2, 16641),
        (ElementFamily::LagrangeP3, 37249),
        (ElementFamily::QuadratureEmbedded(4), 49152),
    ];
    let size_ok = sizes.iter().all(|&(fam, n)| {
        build_space(mesh.clone(), fam)
            .map(|s| s.n_dofs == n)
            .unwrap_or(false)
    });
    check("reference space sizes (64x64)", size_ok, &mut ok);

    ok
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}
