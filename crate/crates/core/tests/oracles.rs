//! Independent oracles for the assembly kernels, interpolation operators,
//! Jacobians and manufactured sources.

use std::sync::Arc;

use rand::prelude::*;

use egfem::assembly::{
    assemble_boundary_mass, assemble_directional_derivative, assemble_load, assemble_mass,
    assemble_mass_trilinear, assemble_stiffness, interp_grad_tensor, interp_matrix,
    sga_nonlinear_vector, sga_weighted_mass, sga_weighted_stiffness,
};
use egfem::elements::{build_space, interpolate, ElementFamily};
use egfem::mesh::{generate_unit_disk, generate_unit_square, BoundaryTag, Mesh};
use egfem::problems::{
    all_stationary, burgers_problem, burgers_residual, quadratic_problem,
    strong_form_residual, superconductivity_problem, BcVariant, Domain, ScFormulation,
};
use egfem::solver::{
    assemble_egfem_forms, burgers_newton_step, picard_egfem, picard_sga, IterOptions,
    NewtonSystem,
};
use egfem::tensor::{norm2, sub};

fn unit_triangle_mesh() -> Arc<Mesh> {
    Arc::new(Mesh {
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        triangles: vec![[0, 1, 2]],
        boundary_edges: vec![
            ([0, 1], BoundaryTag::Dirichlet),
            ([1, 2], BoundaryTag::Dirichlet),
            ([2, 0], BoundaryTag::Dirichlet),
        ],
    })
}

#[test]
fn p1_stiffness_matches_symbolic_oracle() {
    let v = build_space(unit_triangle_mesh(), ElementFamily::LagrangeP1).unwrap();
    let k = assemble_stiffness(&v, 2).unwrap().to_dense();
    let oracle = [
        [1.0, -0.5, -0.5],
        [-0.5, 0.5, 0.0],
        [-0.5, 0.0, 0.5],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((k[i][j] - oracle[i][j]).abs() < 1e-13, "K[{i}][{j}] = {}", k[i][j]);
        }
    }
}

#[test]
fn p1_mass_matches_symbolic_oracle() {
    // area 1/2: diagonal |K|/6, off-diagonal |K|/12
    let v = build_space(unit_triangle_mesh(), ElementFamily::LagrangeP1).unwrap();
    let m = assemble_mass(&v, &v, 2).unwrap().to_dense();
    for i in 0..3 {
        for j in 0..3 {
            let oracle = if i == j { 1.0 / 12.0 } else { 1.0 / 24.0 };
            assert!((m[i][j] - oracle).abs() < 1e-14);
        }
    }
}

#[test]
fn p1_mass_trilinear_matches_symbolic_oracle() {
    // int l_i l_j l_k over the reference triangle: 1/20, 1/60, 1/120
    // for three equal, two equal, and all distinct indices
    let v = build_space(unit_triangle_mesh(), ElementFamily::LagrangeP1).unwrap();
    let t = assemble_mass_trilinear(&v, &v, 3).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let distinct = [i, j, k]
                    .iter()
                    .collect::<std::collections::HashSet<_>>()
                    .len();
                let oracle = match distinct {
                    1 => 1.0 / 20.0,
                    2 => 1.0 / 60.0,
                    _ => 1.0 / 120.0,
                };
                let m = t.slice_mode3(k).unwrap();
                assert!((m.get(i, j) - oracle).abs() < 1e-14);
            }
        }
    }
}

#[test]
fn p1_directional_derivative_matches_symbolic_oracle() {
    // gradients sum to -2, 1, 1; int l_j = |K|/3
    let v = build_space(unit_triangle_mesh(), ElementFamily::LagrangeP1).unwrap();
    let n = assemble_directional_derivative(&v, &v, 2).unwrap().to_dense();
    let rows = [-2.0, 1.0, 1.0];
    for i in 0..3 {
        for j in 0..3 {
            assert!((n[i][j] - rows[i] / 6.0).abs() < 1e-14);
        }
    }
}

#[test]
fn directional_derivative_columns_sum_to_zero() {
    // sum_i of the direction-summed gradients is the derivative of the
    // partition of unity, hence zero for every trial column
    let mesh = Arc::new(generate_unit_square(4).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    for family in [
        ElementFamily::LagrangeP1,
        ElementFamily::LagrangeP2,
        ElementFamily::QuadratureEmbedded(2),
    ] {
        let w = build_space(mesh.clone(), family).unwrap();
        let n = assemble_directional_derivative(&v, &w, 3).unwrap();
        let mut col_sums = vec![0.0; w.n_dofs];
        for i in 0..v.n_dofs {
            let (cols, vals) = n.row(i);
            for (&j, &val) in cols.iter().zip(vals) {
                col_sums[j] += val;
            }
        }
        for (j, s) in col_sums.iter().enumerate() {
            assert!(s.abs() < 1e-13, "{family:?} column {j} sums to {s}");
        }
    }
}

#[test]
fn boundary_mass_matches_edge_oracle() {
    // one Neumann edge of length 1: edge mass L/6 [[2,1],[1,2]], zero rows
    // and columns for the opposite vertex
    let mesh = Arc::new(Mesh {
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        triangles: vec![[0, 1, 2]],
        boundary_edges: vec![
            ([0, 1], BoundaryTag::Neumann),
            ([1, 2], BoundaryTag::Dirichlet),
            ([2, 0], BoundaryTag::Dirichlet),
        ],
    });
    let v = build_space(mesh, ElementFamily::LagrangeP1).unwrap();
    let g = assemble_boundary_mass(&v, &v).unwrap().to_dense();
    let oracle = [
        [1.0 / 3.0, 1.0 / 6.0, 0.0],
        [1.0 / 6.0, 1.0 / 3.0, 0.0],
        [0.0, 0.0, 0.0],
    ];
    for i in 0..3 {
        for j in 0..3 {
            assert!((g[i][j] - oracle[i][j]).abs() < 1e-14);
        }
    }
}

#[test]
fn boundary_mass_is_zero_for_embedded_space() {
    let mesh = Arc::new(Mesh {
        vertices: vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
        triangles: vec![[0, 1, 2]],
        boundary_edges: vec![
            ([0, 1], BoundaryTag::Neumann),
            ([1, 2], BoundaryTag::Dirichlet),
            ([2, 0], BoundaryTag::Dirichlet),
        ],
    });
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let w = build_space(mesh, ElementFamily::QuadratureEmbedded(2)).unwrap();
    assert_eq!(assemble_boundary_mass(&v, &w).unwrap().nnz(), 0);
}

#[test]
fn interp_matrix_reproduces_functions() {
    let mesh = Arc::new(generate_unit_square(3).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let f = |x: [f64; 2]| 0.3 + 1.7 * x[0] - 0.9 * x[1];
    let u = interpolate(&v, f);
    for family in [
        ElementFamily::LagrangeP1,
        ElementFamily::LagrangeP2,
        ElementFamily::LagrangeP3,
        ElementFamily::LagrangeP0,
        ElementFamily::QuadratureEmbedded(3),
    ] {
        let w = build_space(mesh.clone(), family).unwrap();
        let pi = interp_matrix(&v, &w).unwrap();
        let u_w = pi.matvec(&u).unwrap();
        for (k, &val) in u_w.iter().enumerate() {
            assert!((val - f(w.dof_coords[k])).abs() < 1e-13, "{family:?} dof {k}");
        }
    }
}

#[test]
fn interp_grad_tensor_reproduces_gradients() {
    let mesh = Arc::new(generate_unit_square(3).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let u = interpolate(&v, |x| 0.3 + 1.7 * x[0] - 0.9 * x[1]);
    let w = build_space(mesh, ElementFamily::QuadratureEmbedded(2)).unwrap();
    let t = interp_grad_tensor(&v, &w).unwrap();
    let g = t.contract_mode2(&u).unwrap();
    for k in 0..w.n_dofs {
        assert!((g.get(0, k) - 1.7).abs() < 1e-13);
        assert!((g.get(1, k) + 0.9).abs() < 1e-13);
    }
}

#[test]
fn gfem_interp_matrix_is_identity() {
    let mesh = Arc::new(generate_unit_square(4).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let w = build_space(mesh, ElementFamily::LagrangeP1).unwrap();
    let pi = interp_matrix(&v, &w).unwrap();
    assert_eq!(pi.nnz(), v.n_dofs);
    for i in 0..v.n_dofs {
        assert!((pi.get(i, i) - 1.0).abs() < 1e-14);
    }
}

/// Per-iteration operators of the embedded-space formulation agree with the
/// freshly assembled ones entrywise: the discrete problem is conserved.
#[test]
fn embedded_space_operators_match_assembled() {
    for problem in all_stationary() {
        let mesh = Arc::new(match problem.domain {
            Domain::UnitSquare => generate_unit_square(16).unwrap(),
            Domain::UnitDisk => generate_unit_disk(3),
        });
        let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
        let k = problem.sga_quad_degree;
        let w = build_space(mesh.clone(), ElementFamily::QuadratureEmbedded(k)).unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        let pi_u = forms.pi_u.as_ref().unwrap();
        let exact = problem.exact.as_ref().unwrap();
        let u = interpolate(&v, exact);
        let u_w = pi_u.matvec(&u).unwrap();
        let gx = forms.pi_gx.as_ref().unwrap().matvec(&u).unwrap();
        let gy = forms.pi_gy.as_ref().unwrap().matvec(&u).unwrap();
        let coeff_vec = |f: &egfem::assembly::PointwiseFn| -> Vec<f64> {
            (0..w.n_dofs)
                .map(|i| f.eval(u_w[i], [gx[i], gy[i]], w.dof_coords[i]))
                .collect()
        };
        if let Some(a_fn) = &problem.diffusion {
            let direct = sga_weighted_stiffness(&v, a_fn, &u, k).unwrap();
            let contracted = forms.ka.as_ref().unwrap().contract_mode3(&coeff_vec(a_fn)).unwrap();
            assert_matrices_close(&direct, &contracted, 1e-13, &problem.name);
        }
        if let Some(ct_fn) = &problem.mass_coeff {
            let direct = sga_weighted_mass(&v, ct_fn, &u, k).unwrap();
            let contracted = forms.m3.as_ref().unwrap().contract_mode3(&coeff_vec(ct_fn)).unwrap();
            assert_matrices_close(&direct, &contracted, 1e-13, &problem.name);
        }
        if let Some(c_fn) = &problem.explicit_coeff {
            let direct = sga_nonlinear_vector(&v, c_fn, &u, k).unwrap();
            let via_forms = forms.mc.as_ref().unwrap().matvec(&coeff_vec(c_fn)).unwrap();
            for (i, (a, b)) in direct.iter().zip(&via_forms).enumerate() {
                assert!((a - b).abs() < 1e-13, "{}: entry {i}: {a} vs {b}", problem.name);
            }
        }
    }
}

fn assert_matrices_close(
    a: &egfem::tensor::SparseMatrix,
    b: &egfem::tensor::SparseMatrix,
    tol: f64,
    label: &str,
) {
    assert_eq!(a.nrows, b.nrows);
    assert_eq!(a.ncols, b.ncols);
    for i in 0..a.nrows {
        let (cols_a, vals_a) = a.row(i);
        for (&j, &v) in cols_a.iter().zip(vals_a) {
            assert!((v - b.get(i, j)).abs() < tol, "{label}: ({i},{j}): {v} vs {}", b.get(i, j));
        }
        let (cols_b, vals_b) = b.row(i);
        for (&j, &v) in cols_b.iter().zip(vals_b) {
            assert!((v - a.get(i, j)).abs() < tol, "{label}: ({i},{j})");
        }
    }
}

/// Iterate-by-iterate agreement of the embedded-space fixed point with the
/// assembled baseline.
#[test]
fn embedded_space_iterates_match_baseline() {
    for problem in all_stationary() {
        let mesh = Arc::new(match problem.domain {
            Domain::UnitSquare => generate_unit_square(8).unwrap(),
            Domain::UnitDisk => generate_unit_disk(2),
        });
        let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
        let w = build_space(
            mesh.clone(),
            ElementFamily::QuadratureEmbedded(problem.sga_quad_degree),
        )
        .unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        for iters in [1, 2, 4] {
            let opts = IterOptions {
                tol: 0.0,
                max_iter: iters,
                ..IterOptions::default()
            };
            let sga = picard_sga(&problem, &v, opts).unwrap();
            let eg = picard_egfem(&problem, &forms, opts).unwrap();
            let rel = norm2(&sub(&sga.u, &eg.u)) / norm2(&sga.u).max(1e-30);
            assert!(rel < 1e-10, "{} after {iters} iterations: {rel}", problem.name);
        }
    }
}

#[test]
fn coefficient_derivatives_match_finite_differences() {
    let mut rng = StdRng::seed_from_u64(7);
    for problem in all_stationary() {
        let samples: Vec<(f64, [f64; 2], [f64; 2])> = (0..100)
            .map(|_| {
                (
                    rng.gen_range(0.2..2.0),
                    [rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)],
                    [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                )
            })
            .collect();
        for f in [&problem.diffusion, &problem.mass_coeff, &problem.explicit_coeff]
            .into_iter()
            .flatten()
        {
            let mismatch = f.derivative_mismatch(&samples);
            assert!(mismatch < 1e-6, "{}: mismatch {mismatch}", problem.name);
        }
    }
}

#[test]
fn manufactured_sources_pass_residual_oracle_at_1000_points() {
    let mut rng = StdRng::seed_from_u64(42);
    for problem in all_stationary() {
        for _ in 0..1000 {
            let x = match problem.domain {
                Domain::UnitSquare => [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)],
                Domain::UnitDisk => loop {
                    let p = [rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7)];
                    // keep clear of the gradient singularity at the origin
                    let r2 = p[0] * p[0] + p[1] * p[1];
                    if r2 < 0.49 && r2 > 0.01 {
                        break p;
                    }
                },
            };
            let r = strong_form_residual(&problem, x);
            assert!(r.abs() < 1e-5, "{} at {x:?}: residual {r}", problem.name);
        }
    }
    let burgers = burgers_problem(1.0, 1.0);
    for _ in 0..1000 {
        let x = [rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99)];
        let t = rng.gen_range(0.05..1.0);
        let r = burgers_residual(&burgers, x, t);
        assert!(r.abs() < 1e-4, "burgers at {x:?}, t={t}: residual {r}");
    }
}

#[test]
fn superconductivity_formulations_are_analytically_equivalent() {
    // F(u) = nu K u + (reaction terms)(u) - d agrees across the three
    // splittings when everything is integrated exactly
    let mesh = Arc::new(generate_unit_square(6).unwrap());
    let v = build_space(mesh, ElementFamily::LagrangeP1).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    let u: Vec<f64> = (0..v.n_dofs).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let qd = 6;
    let mut residuals = Vec::new();
    for formulation in [ScFormulation::A, ScFormulation::B, ScFormulation::C] {
        let p = superconductivity_problem(1.0, formulation);
        let k = assemble_stiffness(&v, 2).unwrap().scale(p.nu);
        let mut r = k.matvec(&u).unwrap();
        if let Some(ct) = &p.mass_coeff {
            let m = sga_weighted_mass(&v, ct, &u, qd).unwrap();
            for (a, b) in r.iter_mut().zip(m.matvec(&u).unwrap()) {
                *a += b;
            }
        }
        if p.linear_mass {
            let m = assemble_mass(&v, &v, 2).unwrap();
            for (a, b) in r.iter_mut().zip(m.matvec(&u).unwrap()) {
                *a += b;
            }
        }
        if let Some(c) = &p.explicit_coeff {
            for (a, b) in r.iter_mut().zip(sga_nonlinear_vector(&v, c, &u, qd).unwrap()) {
                *a += b;
            }
        }
        let d = assemble_load(&v, &p.source, p.load_quad_degree).unwrap();
        for (a, b) in r.iter_mut().zip(&d) {
            *a -= b;
        }
        residuals.push(r);
    }
    for other in &residuals[1..] {
        let diff = norm2(&sub(&residuals[0], other));
        assert!(diff < 1e-12, "formulation residuals differ by {diff}");
    }
}

/// Directional finite-difference check of the coupled-system Jacobian on
/// every benchmark at 8x8 scale.
#[test]
fn newton_jacobian_matches_finite_differences() {
    let mut rng = StdRng::seed_from_u64(11);
    for problem in all_stationary() {
        let mesh = Arc::new(match problem.domain {
            Domain::UnitSquare => generate_unit_square(8).unwrap(),
            Domain::UnitDisk => generate_unit_disk(2),
        });
        let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
        let w = build_space(mesh, problem.default_w).unwrap();
        let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
        let system = NewtonSystem::new(&problem, &forms);
        let mut z = system.initial().unwrap();
        // move off the trivial state so nonlinear blocks are exercised
        for zi in z.iter_mut() {
            *zi += rng.gen_range(0.05..0.3);
        }
        let j = system.jacobian(&z).unwrap();
        for _ in 0..3 {
            let dir: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
            let zm: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
            let rp = system.residual(&zp).unwrap();
            let rm = system.residual(&zm).unwrap();
            let fd: Vec<f64> = rp.iter().zip(&rm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
            let jd = j.matvec(&dir).unwrap();
            let rel = norm2(&sub(&fd, &jd)) / norm2(&jd).max(1e-30);
            assert!(rel < 1e-6, "{}: jacobian mismatch {rel}", problem.name);
        }
    }

    // fully implicit step of the transport benchmark
    let problem = burgers_problem(1.0, 1.0);
    let mesh = Arc::new(generate_unit_square(8).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let w = build_space(mesh, ElementFamily::LagrangeP2).unwrap();
    let td = problem.time.as_ref().unwrap();
    let u_prev = interpolate(&v, &td.initial);
    let step = burgers_newton_step(&problem, &v, &w, &u_prev, td.dt).unwrap();
    let mut z = vec![0.0; step.n_total()];
    for zi in z.iter_mut() {
        *zi = rng.gen_range(-0.5..0.5);
    }
    let j = step.jacobian(&z).unwrap();
    for _ in 0..3 {
        let dir: Vec<f64> = (0..z.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h = 1e-6;
        let zp: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a + h * b).collect();
        let zm: Vec<f64> = z.iter().zip(&dir).map(|(a, b)| a - h * b).collect();
        let fd: Vec<f64> = step
            .residual(&zp)
            .unwrap()
            .iter()
            .zip(&step.residual(&zm).unwrap())
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let jd = j.matvec(&dir).unwrap();
        let rel = norm2(&sub(&fd, &jd)) / norm2(&jd).max(1e-30);
        assert!(rel < 1e-6, "burgers step jacobian mismatch {rel}");
    }
}

#[test]
fn quadratic_newton_tail_is_quadratic() {
    let mesh = Arc::new(generate_unit_square(8).unwrap());
    let v = build_space(mesh.clone(), ElementFamily::LagrangeP1).unwrap();
    let w = build_space(mesh, ElementFamily::LagrangeP2).unwrap();
    let problem = quadratic_problem(BcVariant::Polynomial);
    let forms = assemble_egfem_forms(&problem, &v, &w).unwrap();
    let res = egfem::solver::newton_egfem(&problem, &forms, IterOptions::default()).unwrap();
    assert_eq!(res.status, egfem::solver::Status::Converged);
    // once in the basin, the update norm should square each iteration
    let tail: Vec<f64> = res
        .update_norms
        .iter()
        .copied()
        .filter(|&n| n > 1e-14 && n < 1e-2)
        .collect();
    for pair in tail.windows(2) {
        assert!(
            pair[1] < 10.0 * pair[0] * pair[0],
            "updates {:?} not quadratically decreasing",
            tail
        );
    }
}
