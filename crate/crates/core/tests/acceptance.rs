//! Acceptance suite: one test per criterion, each printing a single
//! pass/fail line (visible with `--nocapture`).  Tests share a global lock
//! so wall-clock timings and the quadrature counter are not perturbed by
//! concurrent test threads.

use std::sync::{Arc, Mutex, MutexGuard, OnceLock};

use rand::prelude::*;

use egfem::assembly::{
    assemble_directional_derivative, assemble_mass, assemble_stiffness, interp_matrix,
    quadrature_eval_count, sga_directional_vector, sga_nonlinear_vector, sga_weighted_mass,
    sga_weighted_stiffness,
};
use egfem::bench::{compute_l2_error, mesh_for_level, problem_by_id};
use egfem::elements::{build_space, interpolate, ElementFamily, FunctionSpace};
use egfem::mesh::Mesh;
use egfem::problems::{all_stationary, burgers_problem, strong_form_residual, Domain, ProblemSpec};
use egfem::solver::{
    assemble_egfem_forms, burgers_newton_step, picard_egfem, picard_sga, semi_implicit_burgers,
    BurgersVariant, EgfemForms, IterOptions, NewtonSystem, Status,
};
use egfem::tensor::{hadamard, norm2, sub, SparseTensor3};

fn serial() -> MutexGuard<'static, ()> {
    static LOCK: OnceLock<Mutex<()>> = OnceLock::new();
    LOCK.get_or_init(|| Mutex::new(()))
        .lock()
        .unwrap_or_else(|e| e.into_inner())
}

struct Criterion {
    number: usize,
    label: &'static str,
    failures: Vec<String>,
}

impl Criterion {
    fn new(number: usize, label: &'static str) -> Self {
        Criterion {
            number,
            label,
            failures: Vec::new(),
        }
    }

    fn require(&mut self, ok: bool, detail: String) {
        if !ok {
            self.failures.push(detail);
        }
    }

    fn finish(self) {
        if self.failures.is_empty() {
            println!("criterion {:2} PASS  {}", self.number, self.label);
        } else {
            println!("criterion {:2} FAIL  {}", self.number, self.label);
            for f in &self.failures {
                println!("    {f}");
            }
            panic!("criterion {} failed: {:?}", self.number, self.failures);
        }
    }
}

fn p1_space(problem: &ProblemSpec, level: usize) -> (Arc<Mesh>, FunctionSpace) {
    let mesh = Arc::new(mesh_for_level(problem.domain, level).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    (mesh, v)
}

fn egfem_solve(
    problem: &ProblemSpec,
    mesh: &Arc<Mesh>,
    v: &FunctionSpace,
    family: ElementFamily,
    opts: IterOptions,
) -> (EgfemForms, egfem::solver::SolveResult) {
    let w = build_space(mesh.clone(), family).unwrap();
    let forms = assemble_egfem_forms(problem, v, &w).unwrap();
    let res = picard_egfem(problem, &forms, opts).unwrap();
    (forms, res)
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    norm2(&sub(&a.to_vec(), &b.to_vec())) / norm2(&a.to_vec()).max(1e-300)
}

#[test]
fn criterion_01_exact_reformulation_equivalence() {
    let _guard = serial();
    let mut c = Criterion::new(1, "egfem-p2/egfem-i3 match sga to 1e-10 on levels 3-6");
    let problem = problem_by_id("quadratic", None).unwrap();
    let opts = IterOptions::default();
    for level in 3..=6usize {
        let (mesh, v) = p1_space(&problem, level);
        let sga = picard_sga(&problem, &v, opts).unwrap();
        c.require(
            sga.status == Status::Converged,
            format!("sga did not converge at level {level}"),
        );
        for family in [
            ElementFamily::LagrangeP2,
            ElementFamily::QuadratureEmbedded(3),
        ] {
            let (_, res) = egfem_solve(&problem, &mesh, &v, family, opts);
            let diff = rel_diff(&sga.u, &res.u);
            c.require(
                diff <= 1e-10,
                format!("{family:?} level {level}: coefficient difference {diff:.3e}"),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_02_quadrature_space_conserves_discrete_problem() {
    let _guard = serial();
    let mut c = Criterion::new(2, "per-iteration operators agree entrywise to 1e-13");
    for problem in all_stationary() {
        let level = match problem.domain {
            Domain::UnitSquare => 4,
            Domain::UnitDisk => 3,
        };
        let (mesh, v) = p1_space(&problem, level);
        let k = problem.sga_quad_degree;
        let w = build_space(mesh.clone(), ElementFamily::QuadratureEmbedded(k)).unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        let u = interpolate(&v, problem.exact.as_ref().unwrap());
        let u_w = forms.pi_u.as_ref().unwrap().matvec(&u).unwrap();
        let gx = forms.pi_gx.as_ref().unwrap().matvec(&u).unwrap();
        let gy = forms.pi_gy.as_ref().unwrap().matvec(&u).unwrap();
        let coeff = |f: &egfem::assembly::PointwiseFn| -> Vec<f64> {
            (0..w.n_dofs)
                .map(|i| f.eval(u_w[i], [gx[i], gy[i]], w.dof_coords[i]))
                .collect()
        };
        if let Some(a_fn) = &problem.diffusion {
            let direct = sga_weighted_stiffness(&v, a_fn, &u, k).unwrap();
            let via = forms.ka.as_ref().unwrap().contract_mode3(&coeff(a_fn)).unwrap();
            c.require(
                max_entry_diff(&direct, &via) < 1e-13,
                format!("{}: weighted stiffness mismatch", problem.name),
            );
        }
        if let Some(m_fn) = &problem.mass_coeff {
            let direct = sga_weighted_mass(&v, m_fn, &u, k).unwrap();
            let via = forms.m3.as_ref().unwrap().contract_mode3(&coeff(m_fn)).unwrap();
            c.require(
                max_entry_diff(&direct, &via) < 1e-13,
                format!("{}: weighted mass mismatch", problem.name),
            );
        }
        if let Some(c_fn) = &problem.explicit_coeff {
            let direct = sga_nonlinear_vector(&v, c_fn, &u, k).unwrap();
            let via = forms.mc.as_ref().unwrap().matvec(&coeff(c_fn)).unwrap();
            let diff = direct
                .iter()
                .zip(&via)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            c.require(
                diff < 1e-13,
                format!("{}: nonlinear vector mismatch {diff:.3e}", problem.name),
            );
        }
    }
    // convective operator of the transport benchmark
    {
        let problem = burgers_problem(1.0, 1.0);
        let (mesh, v) = p1_space(&problem, 4);
        let td = problem.time.as_ref().unwrap();
        let u = interpolate(&v, &td.initial);
        let k = problem.sga_quad_degree;
        let direct = sga_directional_vector(&v, &td.convective, &u, k).unwrap();
        let w = build_space(mesh, ElementFamily::QuadratureEmbedded(k)).unwrap();
        let nf = assemble_directional_derivative(&v, &w, k).unwrap();
        let u_w = interp_matrix(&v, &w).unwrap().matvec(&u).unwrap();
        let via = nf.matvec(&hadamard(&u_w, &u_w).unwrap()).unwrap();
        let diff = direct
            .iter()
            .zip(&via)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        c.require(diff < 1e-13, format!("burgers: convective mismatch {diff:.3e}"));
    }
    c.finish();
}

fn max_entry_diff(a: &egfem::tensor::SparseMatrix, b: &egfem::tensor::SparseMatrix) -> f64 {
    let mut max = 0.0f64;
    for i in 0..a.nrows {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            max = max.max((v - b.get(i, j)).abs());
        }
        let (cols_b, vals_b) = b.row(i);
        for (&j, &v) in cols_b.iter().zip(vals_b) {
            max = max.max((v - a.get(i, j)).abs());
        }
    }
    max
}

#[test]
fn criterion_03_group_interpolation_on_trial_space_is_less_accurate() {
    let _guard = serial();
    let mut c = Criterion::new(3, "gfem L2 error strictly above egfem-p2 on levels 3-6");
    let problem = problem_by_id("quadratic", None).unwrap();
    let opts = IterOptions::default();
    for level in 3..=6usize {
        let (mesh, v) = p1_space(&problem, level);
        let exact = problem.exact.as_ref().unwrap();
        let (_, gfem) = egfem_solve(&problem, &mesh, &v, ElementFamily::LagrangeP1, opts);
        let (_, p2) = egfem_solve(&problem, &mesh, &v, ElementFamily::LagrangeP2, opts);
        let e_gfem = compute_l2_error(&gfem.u, &v, exact, 6).unwrap().relative;
        let e_p2 = compute_l2_error(&p2.u, &v, exact, 6).unwrap().relative;
        c.require(
            e_gfem > e_p2,
            format!("level {level}: gfem {e_gfem:.8e} not above egfem-p2 {e_p2:.8e}"),
        );
    }
    c.finish();
}

#[test]
fn criterion_04_second_order_convergence() {
    let _guard = serial();
    let mut c = Criterion::new(4, "L2-error reduction factor in [3.3, 4.7] per refinement");
    let opts = IterOptions::default();
    for id in ["quadratic", "quadratic-trig", "superconductivity-a"] {
        let problem = problem_by_id(id, None).unwrap();
        let mut errors = Vec::new();
        for level in 3..=6usize {
            let (_, v) = p1_space(&problem, level);
            let res = picard_sga(&problem, &v, opts).unwrap();
            c.require(
                res.status == Status::Converged,
                format!("{id} level {level}: not converged"),
            );
            let exact = problem.exact.as_ref().unwrap();
            errors.push(compute_l2_error(&res.u, &v, exact, 6).unwrap().relative);
        }
        for (i, pair) in errors.windows(2).enumerate() {
            let ratio = pair[0] / pair[1];
            c.require(
                (3.3..=4.7).contains(&ratio),
                format!("{id} levels {}->{}: ratio {ratio:.3}", i + 3, i + 4),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_05_reaction_splitting_divergence_pattern() {
    let _guard = serial();
    let mut c = Criterion::new(5, "64x64 convergence pattern across the three splittings");
    let opts = IterOptions {
        max_iter: 300,
        ..IterOptions::default()
    };
    // (problem id, nu, expected to converge)
    let cases = [
        ("superconductivity-a", 1.0, true),
        ("superconductivity-a", 1e-2, true),
        ("superconductivity-a", 1e-3, true),
        ("superconductivity-b", 1.0, true),
        ("superconductivity-b", 1e-2, true),
        ("superconductivity-b", 1e-3, false),
        ("superconductivity-c", 1.0, true),
        ("superconductivity-c", 1e-2, false),
        ("superconductivity-c", 1e-3, false),
    ];
    for (id, nu, expect) in cases {
        let problem = problem_by_id(id, Some(nu)).unwrap();
        let (_, v) = p1_space(&problem, 6);
        let res = picard_sga(&problem, &v, opts).unwrap();
        let converged = res.status == Status::Converged;
        c.require(
            converged == expect,
            format!(
                "{id} nu={nu:.0e}: status {:?} after {} iterations, expected converged={expect}",
                res.status, res.iterations
            ),
        );
    }
    c.finish();
}

#[test]
fn criterion_06_reported_system_sizes() {
    let _guard = serial();
    let mut c = Criterion::new(6, "64x64 system sizes 4225/8450/20866/41474/53377");
    let problem = problem_by_id("quadratic", None).unwrap();
    let (mesh, v) = p1_space(&problem, 6);
    c.require(v.n_dofs == 4225, format!("sga size {}", v.n_dofs));
    let expected = [
        (ElementFamily::LagrangeP1, 8450usize),
        (ElementFamily::LagrangeP2, 20866),
        (ElementFamily::LagrangeP3, 41474),
        (ElementFamily::QuadratureEmbedded(4), 53377),
    ];
    for (family, size) in expected {
        let w = build_space(mesh.clone(), family).unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        let got = forms.system_size(&problem);
        c.require(got == size, format!("{family:?}: size {got}, expected {size}"));
    }
    c.finish();
}

#[test]
fn criterion_07_transport_variants_agree() {
    let _guard = serial();
    let mut c = Criterion::new(7, "32x32 transport errors within 10% spread and 2x interpolation");
    let problem = burgers_problem(1.0, 1.0);
    let (_mesh, v) = p1_space(&problem, 5);
    let td = problem.time.as_ref().unwrap();
    let t_end = td.t_end;
    let exact_end = |x: [f64; 2]| (td.exact)(x, t_end);
    let u_interp = interpolate(&v, exact_end);
    let e_interp = compute_l2_error(&u_interp, &v, exact_end, 6).unwrap().relative;
    let variants = [
        BurgersVariant::Sga,
        BurgersVariant::TensorSga,
        BurgersVariant::Gfem,
        BurgersVariant::Egfem(ElementFamily::LagrangeP2),
        BurgersVariant::Egfem(ElementFamily::QuadratureEmbedded(3)),
    ];
    let mut errors = Vec::new();
    for variant in variants {
        let traj = semi_implicit_burgers(&problem, &v, variant, IterOptions::default()).unwrap();
        let u_final = traj.last().unwrap();
        let err = compute_l2_error(u_final, &v, exact_end, 6).unwrap().relative;
        c.require(
            err <= 2.0 * e_interp,
            format!("{variant:?}: error {err:.4e} above 2x interpolation {e_interp:.4e}"),
        );
        errors.push((variant, err));
    }
    let min = errors.iter().map(|(_, e)| *e).fold(f64::INFINITY, f64::min);
    let max = errors.iter().map(|(_, e)| *e).fold(0.0f64, f64::max);
    c.require(
        (max - min) / min <= 0.10,
        format!("spread {:.2}% across {errors:?}", 100.0 * (max - min) / min),
    );
    c.finish();
}

#[test]
fn criterion_08_quasilinear_closed_form() {
    let _guard = serial();
    let mut c = Criterion::new(8, "disk quasilinear benchmark matches closed form");
    let problem = problem_by_id("p-laplace", None).unwrap();
    let exact = problem.exact.as_ref().unwrap();
    let spot = exact([0.0, 0.0]);
    c.require(
        (spot - 1.0 / 12.0).abs() < 1e-14,
        format!("closed form at origin: {spot}, expected 1/12"),
    );
    let opts = IterOptions::default();
    let mut errors = Vec::new();
    for level in 3..=5usize {
        let (mesh, v) = p1_space(&problem, level);
        let sga = picard_sga(&problem, &v, opts).unwrap();
        c.require(
            sga.status == Status::Converged,
            format!("sga not converged at disk level {level}"),
        );
        for family in [
            ElementFamily::LagrangeP0,
            ElementFamily::QuadratureEmbedded(1),
        ] {
            let (_, res) = egfem_solve(&problem, &mesh, &v, family, opts);
            let diff = rel_diff(&sga.u, &res.u);
            c.require(
                diff <= 1e-10,
                format!("{family:?} disk level {level}: difference {diff:.3e}"),
            );
        }
        errors.push(compute_l2_error(&sga.u, &v, exact, 6).unwrap().relative);
    }
    for pair in errors.windows(2) {
        c.require(
            pair[1] < pair[0],
            format!("errors not monotone: {errors:?}"),
        );
    }
    c.finish();
}

#[test]
fn criterion_09_online_speedup_and_zero_quadrature() {
    let _guard = serial();
    let mut c = Criterion::new(9, "online time <= 1/2 of baseline; no online quadrature");
    let opts = IterOptions {
        tol: 1e-10,
        max_iter: 300,
        ..IterOptions::default()
    };
    for id in [
        "quadratic",
        "superconductivity-a",
        "biochemical",
        "p-laplace",
        "minimal-surface",
    ] {
        let problem = problem_by_id(id, None).unwrap();
        let (mesh, v) = p1_space(&problem, 6);
        let sga = picard_sga(&problem, &v, opts).unwrap();
        c.require(
            sga.status == Status::Converged,
            format!("{id}: baseline not converged"),
        );
        let mut families = vec![problem.default_w];
        let ik = ElementFamily::QuadratureEmbedded(problem.sga_quad_degree);
        if ik != problem.default_w {
            families.push(ik);
        }
        if problem.gfem_available {
            families.insert(0, ElementFamily::LagrangeP1);
        }
        for family in families {
            let w = build_space(mesh.clone(), family).unwrap();
            let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
            let quad_before = quadrature_eval_count();
            let res = picard_egfem(&problem, &forms, opts).unwrap();
            let quad_delta = quadrature_eval_count() - quad_before;
            c.require(
                quad_delta == 0,
                format!("{id} {family:?}: {quad_delta} quadrature evaluations online"),
            );
            c.require(
                res.status == sga.status,
                format!("{id} {family:?}: status {:?} differs from baseline", res.status),
            );
            c.require(
                res.online_s <= 0.5 * sga.online_s,
                format!(
                    "{id} {family:?}: online {:.3e}s vs baseline {:.3e}s",
                    res.online_s, sga.online_s
                ),
            );
        }
    }
    c.finish();
}

#[test]
fn criterion_10_kernel_and_oracle_suites() {
    let _guard = serial();
    let mut c = Criterion::new(10, "contraction identities, element oracles, jacobians, residuals");
    let mut rng = StdRng::seed_from_u64(2024);

    // both contraction identities on 200 random instances
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let dims = [
            rng.gen_range(2..8usize),
            rng.gen_range(2..8usize),
            rng.gen_range(2..8usize),
        ];
        let nnz = rng.gen_range(1..40usize);
        let entries: Vec<(usize, usize, usize, f64)> = (0..nnz)
            .map(|_| {
                (
                    rng.gen_range(0..dims[0]),
                    rng.gen_range(0..dims[1]),
                    rng.gen_range(0..dims[2]),
                    rng.gen_range(-1.0..1.0),
                )
            })
            .collect();
        let t = SparseTensor3::from_triplets(dims, entries).unwrap();
        let w: Vec<f64> = (0..dims[1]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let vv: Vec<f64> = (0..dims[2]).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let direct = t.double_contract(&w, &vv).unwrap();
        let via3 = t.contract_mode3(&vv).unwrap().matvec(&w).unwrap();
        let g = t.contract_mode2(&w).unwrap();
        let via2: Vec<f64> = (0..dims[0])
            .map(|i| (0..dims[2]).map(|k| g.get(i, k) * vv[k]).sum())
            .collect();
        for i in 0..dims[0] {
            worst = worst.max((direct[i] - via3[i]).abs());
            worst = worst.max((direct[i] - via2[i]).abs());
        }
    }
    c.require(worst < 1e-14, format!("contraction identity deviation {worst:.3e}"));

    // element matrices against symbolic oracles on the unit right triangle
    let tri = Arc::new(Mesh {
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        triangles: vec![[0, 1, 2]],
        boundary_edges: vec![
            ([0, 1], egfem::mesh::BoundaryTag::Dirichlet),
            ([1, 2], egfem::mesh::BoundaryTag::Dirichlet),
            ([2, 0], egfem::mesh::BoundaryTag::Dirichlet),
        ],
    });
    let v1 = build_space(tri, ElementFamily::LagrangeP1).unwrap();
    let k = assemble_stiffness(&v1, 2).unwrap().to_dense();
    let m = assemble_mass(&v1, &v1, 2).unwrap().to_dense();
    let k_oracle = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
    let mut elem_ok = true;
    for i in 0..3 {
        for j in 0..3 {
            elem_ok &= (k[i][j] - k_oracle[i][j]).abs() < 1e-13;
            let m_oracle = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
            elem_ok &= (m[i][j] - m_oracle).abs() < 1e-13;
        }
    }
    c.require(elem_ok, "element matrices deviate from symbolic oracles".into());

    // Jacobian vs central finite differences on all six benchmarks
    for problem in all_stationary() {
        let level = match problem.domain {
            Domain::UnitSquare => 3,
            Domain::UnitDisk => 2,
        };
        let (mesh, v) = p1_space(&problem, level);
        let w = build_space(mesh, problem.default_w).unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        let system = NewtonSystem::new(&problem, &forms);
        let mut z = system.initial().unwrap();
        for zi in z.iter_mut() {
            *zi += rng.gen_range(0.05..0.3);
        }
        let rel = jacobian_fd_mismatch(&mut rng, z.len(), |zz| system.residual(zz).unwrap(), &z, {
            let j = system.jacobian(&z).unwrap();
            move |d| j.matvec(d).unwrap()
        });
        c.require(
            rel < 1e-6,
            format!("{}: jacobian mismatch {rel:.3e}", problem.name),
        );
    }
    {
        let problem = burgers_problem(1.0, 1.0);
        let (mesh, v) = p1_space(&problem, 3);
        let w = build_space(mesh, ElementFamily::LagrangeP2).unwrap();
        let td = problem.time.as_ref().unwrap();
        let u_prev = interpolate(&v, &td.initial);
        let step = burgers_newton_step(&problem, &v, &w, &u_prev, td.dt).unwrap();
        let z: Vec<f64> = (0..step.n_total()).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let rel = jacobian_fd_mismatch(&mut rng, z.len(), |zz| step.residual(zz).unwrap(), &z, {
            let j = step.jacobian(&z).unwrap();
            move |d| j.matvec(d).unwrap()
        });
        c.require(rel < 1e-6, format!("burgers step: jacobian mismatch {rel:.3e}"));
    }

    // manufactured sources against the strong-form finite-difference oracle
    for problem in all_stationary() {
        let mut worst = 0.0f64;
        for _ in 0..200 {
            let x = match problem.domain {
                Domain::UnitSquare => [rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)],
                Domain::UnitDisk => loop {
                    let p = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
                    let r2 = p[0] * p[0] + p[1] * p[1];
                    if (0.02..0.36).contains(&r2) {
                        break p;
                    }
                },
            };
            worst = worst.max(strong_form_residual(&problem, x).abs());
        }
        c.require(
            worst < 1e-6,
            format!("{}: residual oracle {worst:.3e}", problem.name),
        );
    }
    c.finish();
}

fn jacobian_fd_mismatch<R, J>(
    rng: &mut StdRng,
    n: usize,
    residual: R,
    z: &[f64],
    jmv: J,
) -> f64
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<f64>,
{
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-6;
        let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
        let rp = residual(&zp);
        let rm = residual(&zm);
        let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let jd = jmv(&dir);
        worst = worst.max(norm2(&sub(&fd, &jd)) / norm2(&jd).max(1e-30));
    }
    worst
}
