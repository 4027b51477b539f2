//! Fixed-point and Newton iterations over the precomputed forms, the
//! per-iteration-assembly baseline, and semi-implicit time stepping for the
//! transport benchmark.

use std::collections::HashMap;
use std::time::Instant;

use crate::assembly::{
    apply_dirichlet, assemble_directional_derivative, assemble_directional_derivative_tensor,
    assemble_load, assemble_mass, assemble_mass_trilinear, assemble_stiffness,
    assemble_weighted_stiffness_tensor, interp_grad_tensor, interp_matrix, sga_directional_vector,
    sga_nonlinear_vector, sga_weighted_mass, sga_weighted_stiffness, DirichletBC, PointwiseFn,
};
use crate::elements::{ElementFamily, FunctionSpace};
use crate::error::{Error, Result};
use crate::linalg::{factor_symmetric, solve_linear, LuSolver, PatternLu};
use crate::problems::ProblemSpec;
use crate::tensor::{hadamard, norm2, SparseMatrix, SparseTensor3};

#[derive(Debug, Clone, Copy)]
pub struct IterOptions {
    /// relative update tolerance on the solution coefficients
    pub tol: f64,
    pub max_iter: usize,
    pub divergence_norm_cap: f64,
}

impl Default for IterOptions {
    fn default() -> Self {
        IterOptions {
            tol: 1e-12,
            max_iter: 500,
            divergence_norm_cap: 1e8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIter,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: Vec<f64>,
    /// interpolated nonlinearity coefficients at exit, keyed "a" / "c_tilde" / "c"
    pub aux: HashMap<&'static str, Vec<f64>>,
    pub iterations: usize,
    pub status: Status,
    pub update_norms: Vec<f64>,
    pub offline_s: f64,
    pub online_s: f64,
}

fn initial_guess(n: usize, bc: &DirichletBC) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        u[d] = v;
    }
    u
}

fn rel_update(u_new: &[f64], u_old: &[f64]) -> f64 {
    let mut diff = 0.0;
    for (a, b) in u_new.iter().zip(u_old) {
        diff += (a - b) * (a - b);
    }
    diff.sqrt() / norm2(u_new).max(1e-30)
}

fn is_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Fixed-point iteration with every nonlinear term reassembled by
/// quadrature and a fresh factorization per iteration: the baseline all
/// precomputed variants are measured against.
pub fn picard_sga(
    problem: &ProblemSpec,
    v_space: &FunctionSpace,
    opts: IterOptions,
) -> Result<SolveResult> {
    let bc = DirichletBC::from_space(v_space, &problem.dirichlet);
    let load = assemble_load(v_space, &problem.source, problem.load_quad_degree)?;
    let base_deg = (2 * v_space.family.degree()).max(1);
    let k_const = if problem.diffusion.is_none() {
        Some(assemble_stiffness(v_space, base_deg)?.scale(problem.nu))
    } else {
        None
    };
    let m_lin = if problem.linear_mass {
        Some(assemble_mass(v_space, v_space, base_deg.max(2))?)
    } else {
        None
    };

    let mut u = initial_guess(v_space.n_dofs, &bc);
    let mut update_norms = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let qd = problem.sga_quad_degree;
    let start = Instant::now();
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut a = match (&problem.diffusion, &k_const) {
            (Some(a_fn), _) => sga_weighted_stiffness(v_space, a_fn, &u, qd)?,
            (None, Some(k)) => k.clone(),
            (None, None) => unreachable!(),
        };
        if let Some(ct) = &problem.mass_coeff {
            a = a.add_scaled(1.0, &sga_weighted_mass(v_space, ct, &u, qd)?)?;
        }
        if let Some(m) = &m_lin {
            a = a.add_scaled(1.0, m)?;
        }
        let mut rhs = load.clone();
        if let Some(c) = &problem.explicit_coeff {
            let cv = sga_nonlinear_vector(v_space, c, &u, qd)?;
            for (r, c) in rhs.iter_mut().zip(&cv) {
                *r -= c;
            }
        }
        let (a_bc, rhs_bc) = apply_dirichlet(&a, &rhs, &bc)?;
        let u_new = match factor_symmetric(&a_bc).and_then(|f| f.solve(&rhs_bc)) {
            Ok(x) => x,
            Err(_) => {
                status = Status::Diverged;
                break;
            }
        };
        let rel = rel_update(&u_new, &u);
        update_norms.push(rel);
        if !is_finite(&u_new) || norm2(&u_new) > opts.divergence_norm_cap {
            status = Status::Diverged;
            u = u_new;
            break;
        }
        u = u_new;
        if rel <= opts.tol || !problem.has_nonlinearity() {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolveResult {
        u,
        aux: HashMap::new(),
        iterations,
        status,
        update_norms,
        offline_s: 0.0,
        online_s: start.elapsed().as_secs_f64(),
    })
}

/// All forms that can be assembled once, before any iteration.
pub struct EgfemForms {
    pub k_const: Option<SparseMatrix>,
    pub ka: Option<SparseTensor3>,
    pub m3: Option<SparseTensor3>,
    pub m_lin: Option<SparseMatrix>,
    pub mc: Option<SparseMatrix>,
    pub pi_u: Option<SparseMatrix>,
    pub pi_gx: Option<SparseMatrix>,
    pub pi_gy: Option<SparseMatrix>,
    pub pi_grad: Option<SparseTensor3>,
    pub load: Vec<f64>,
    pub bc: DirichletBC,
    pub w_coords: Vec<[f64; 2]>,
    pub n_u: usize,
    pub n_w: usize,
}

impl EgfemForms {
    /// `N_u` plus one approximation-space block per interpolated
    /// nonlinearity — the "Size" of the coupled system.
    pub fn system_size(&self, problem: &ProblemSpec) -> usize {
        let n_aux = [
            problem.diffusion.is_some(),
            problem.mass_coeff.is_some(),
            problem.explicit_coeff.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count();
        self.n_u + n_aux * self.n_w
    }
}

fn offline_quad_degree(v_space: &FunctionSpace, w_space: &FunctionSpace) -> usize {
    (w_space.family.degree() + 2 * v_space.family.degree()).clamp(1, 6)
}

pub fn assemble_egfem_forms(
    problem: &ProblemSpec,
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
) -> Result<EgfemForms> {
    let bc = DirichletBC::from_space(v_space, &problem.dirichlet);
    let load = assemble_load(v_space, &problem.source, problem.load_quad_degree)?;
    let base_deg = (2 * v_space.family.degree()).max(1);
    let qd = offline_quad_degree(v_space, w_space);

    let mut forms = EgfemForms {
        k_const: None,
        ka: None,
        m3: None,
        m_lin: None,
        mc: None,
        pi_u: None,
        pi_gx: None,
        pi_gy: None,
        pi_grad: None,
        load,
        bc,
        w_coords: w_space.dof_coords.clone(),
        n_u: v_space.n_dofs,
        n_w: w_space.n_dofs,
    };
    if problem.diffusion.is_some() {
        forms.ka = Some(assemble_weighted_stiffness_tensor(v_space, w_space, qd)?);
    } else {
        forms.k_const = Some(assemble_stiffness(v_space, base_deg)?.scale(problem.nu));
    }
    if problem.mass_coeff.is_some() {
        forms.m3 = Some(assemble_mass_trilinear(v_space, w_space, qd)?);
    }
    if problem.linear_mass {
        forms.m_lin = Some(assemble_mass(v_space, v_space, base_deg.max(2))?);
    }
    if problem.explicit_coeff.is_some() {
        forms.mc = Some(assemble_mass(v_space, w_space, qd)?);
    }
    if problem.has_nonlinearity() {
        forms.pi_u = Some(interp_matrix(v_space, w_space)?);
        let pi_grad = interp_grad_tensor(v_space, w_space)?;
        // slices as plain matrices for cheap per-iteration matvecs
        let mut gx = Vec::new();
        let mut gy = Vec::new();
        for &(d, j, k, val) in &pi_grad.entries {
            if d == 0 {
                gx.push((k, j, val));
            } else {
                gy.push((k, j, val));
            }
        }
        forms.pi_gx = Some(SparseMatrix::from_triplets(
            w_space.n_dofs,
            v_space.n_dofs,
            gx,
        )?);
        forms.pi_gy = Some(SparseMatrix::from_triplets(
            w_space.n_dofs,
            v_space.n_dofs,
            gy,
        )?);
        forms.pi_grad = Some(pi_grad);
    }
    Ok(forms)
}

/// Pointwise states `(u_h, grad u_h)` at all approximation-space DOFs,
/// computed purely by sparse matvecs.
fn states_at_w(forms: &EgfemForms, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let u_w = forms.pi_u.as_ref().unwrap().matvec(u)?;
    let gx = forms.pi_gx.as_ref().unwrap().matvec(u)?;
    let gy = forms.pi_gy.as_ref().unwrap().matvec(u)?;
    Ok((u_w, gx, gy))
}

fn eval_coeff(
    f: &PointwiseFn,
    u_w: &[f64],
    gx: &[f64],
    gy: &[f64],
    coords: &[[f64; 2]],
) -> Vec<f64> {
    (0..u_w.len())
        .map(|k| f.eval(u_w[k], [gx[k], gy[k]], coords[k]))
        .collect()
}

struct AuxState {
    a: Option<Vec<f64>>,
    ct: Option<Vec<f64>>,
    c: Option<Vec<f64>>,
}

impl AuxState {
    fn from_u(problem: &ProblemSpec, forms: &EgfemForms, u: &[f64]) -> Result<AuxState> {
        if !problem.has_nonlinearity() {
            return Ok(AuxState {
                a: None,
                ct: None,
                c: None,
            });
        }
        let (u_w, gx, gy) = states_at_w(forms, u)?;
        let coords = &forms.w_coords;
        Ok(AuxState {
            a: problem
                .diffusion
                .as_ref()
                .map(|f| eval_coeff(f, &u_w, &gx, &gy, coords)),
            ct: problem
                .mass_coeff
                .as_ref()
                .map(|f| eval_coeff(f, &u_w, &gx, &gy, coords)),
            c: problem
                .explicit_coeff
                .as_ref()
                .map(|f| eval_coeff(f, &u_w, &gx, &gy, coords)),
        })
    }

    fn into_map(self) -> HashMap<&'static str, Vec<f64>> {
        let mut map = HashMap::new();
        if let Some(a) = self.a {
            map.insert("a", a);
        }
        if let Some(ct) = self.ct {
            map.insert("c_tilde", ct);
        }
        if let Some(c) = self.c {
            map.insert("c", c);
        }
        map
    }
}

/// Iteration-dependent system matrix with a frozen sparsity pattern:
/// tensor entries are mapped to value slots once, and the symbolic LU
/// analysis is shared across all numeric refactorizations.  Boundary
/// conditions are eliminated symmetrically at the pattern level.
struct CachedPicard {
    pattern: PatternLu,
    base_vals: Vec<f64>,
    /// (slot, coefficient index, weight) for the interior entries
    ka_map: Vec<(usize, usize, f64)>,
    m3_map: Vec<(usize, usize, f64)>,
    /// (row, coefficient index, weight * boundary value) for eliminated columns
    ka_bc: Vec<(usize, usize, f64)>,
    m3_bc: Vec<(usize, usize, f64)>,
    base_bc_corr: Vec<f64>,
    is_bc: Vec<bool>,
    g: Vec<f64>,
    n: usize,
}

impl CachedPicard {
    fn build(forms: &EgfemForms) -> Result<CachedPicard> {
        let n = forms.n_u;
        let mut is_bc = vec![false; n];
        let mut g = vec![0.0; n];
        for (&d, &v) in forms.bc.dofs.iter().zip(&forms.bc.values) {
            is_bc[d] = true;
            g[d] = v;
        }
        let use_k_const = forms.ka.is_none();

        // union sparsity pattern of all contributions, after elimination
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for d in 0..n {
            if is_bc[d] {
                pairs.push((d, d));
            }
        }
        let push_matrix = |m: &SparseMatrix, pairs: &mut Vec<(usize, usize)>| {
            for i in 0..n {
                if is_bc[i] {
                    continue;
                }
                let (cols, _) = m.row(i);
                for &j in cols {
                    if !is_bc[j] {
                        pairs.push((i, j));
                    }
                }
            }
        };
        if use_k_const {
            if let Some(k) = &forms.k_const {
                push_matrix(k, &mut pairs);
            }
        }
        if let Some(m) = &forms.m_lin {
            push_matrix(m, &mut pairs);
        }
        for t in [&forms.ka, &forms.m3].into_iter().flatten() {
            for &(i, j, _, _) in &t.entries {
                if !is_bc[i] && !is_bc[j] {
                    pairs.push((i, j));
                }
            }
        }
        // column-major order for the sparse factorization
        pairs.sort_by_key(|&(i, j)| (j, i));
        pairs.dedup();
        let mut col_ptr = vec![0usize; n + 1];
        for &(_, j) in &pairs {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_idx: Vec<usize> = pairs.iter().map(|&(i, _)| i).collect();
        let slot = |i: usize, j: usize| -> usize {
            let lo = col_ptr[j];
            let hi = col_ptr[j + 1];
            lo + row_idx[lo..hi].partition_point(|&r| r < i)
        };

        // constant contributions, including unit boundary diagonals
        let mut base_vals = vec![0.0; pairs.len()];
        let mut base_bc_corr = vec![0.0; n];
        for d in 0..n {
            if is_bc[d] {
                base_vals[slot(d, d)] = 1.0;
            }
        }
        let add_matrix = |m: &SparseMatrix,
                              base_vals: &mut Vec<f64>,
                              base_bc_corr: &mut Vec<f64>| {
            for i in 0..n {
                if is_bc[i] {
                    continue;
                }
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    if is_bc[j] {
                        base_bc_corr[i] += v * g[j];
                    } else {
                        base_vals[slot(i, j)] += v;
                    }
                }
            }
        };
        if use_k_const {
            if let Some(k) = &forms.k_const {
                add_matrix(k, &mut base_vals, &mut base_bc_corr);
            }
        }
        if let Some(m) = &forms.m_lin {
            add_matrix(m, &mut base_vals, &mut base_bc_corr);
        }

        let tensor_maps = |t: &SparseTensor3| {
            let mut interior = Vec::new();
            let mut boundary = Vec::new();
            for &(i, j, k, v) in &t.entries {
                if is_bc[i] {
                    continue;
                }
                if is_bc[j] {
                    if g[j] != 0.0 {
                        boundary.push((i, k, v * g[j]));
                    }
                } else {
                    interior.push((slot(i, j), k, v));
                }
            }
            (interior, boundary)
        };
        let (ka_map, ka_bc) = forms
            .ka
            .as_ref()
            .map(|t| tensor_maps(t))
            .unwrap_or_default();
        let (m3_map, m3_bc) = forms
            .m3
            .as_ref()
            .map(|t| tensor_maps(t))
            .unwrap_or_default();

        Ok(CachedPicard {
            pattern: PatternLu::new(n, col_ptr, row_idx)?,
            base_vals,
            ka_map,
            m3_map,
            ka_bc,
            m3_bc,
            base_bc_corr,
            is_bc,
            g,
            n,
        })
    }

    /// One linear solve with the current coefficients; `rhs` is the
    /// un-eliminated right-hand side.
    fn solve(&self, a: Option<&[f64]>, ct: Option<&[f64]>, rhs: &[f64]) -> Result<Vec<f64>> {
        let mut vals = self.base_vals.clone();
        let mut corr = self.base_bc_corr.clone();
        if let Some(a) = a {
            for &(s, k, w) in &self.ka_map {
                vals[s] += w * a[k];
            }
            for &(i, k, w) in &self.ka_bc {
                corr[i] += w * a[k];
            }
        }
        if let Some(ct) = ct {
            for &(s, k, w) in &self.m3_map {
                vals[s] += w * ct[k];
            }
            for &(i, k, w) in &self.m3_bc {
                corr[i] += w * ct[k];
            }
        }
        let mut rhs_bc = vec![0.0; self.n];
        for i in 0..self.n {
            rhs_bc[i] = if self.is_bc[i] {
                self.g[i]
            } else {
                rhs[i] - corr[i]
            };
        }
        self.pattern.factor(&vals)?.solve(&rhs_bc)
    }
}

/// Fixed-point iteration over the precomputed forms: per iteration one
/// tensor contraction, one sparse solve and pointwise coefficient updates —
/// no quadrature.  With the approximation space equal to the trial space
/// this is the classic group formulation.
pub fn picard_egfem(
    problem: &ProblemSpec,
    forms: &EgfemForms,
    opts: IterOptions,
) -> Result<SolveResult> {
    let mut u = initial_guess(forms.n_u, &forms.bc);
    let mut aux = AuxState::from_u(problem, forms, &u)?;
    // iteration-independent system matrix => factor once up front, keeping
    // the (constant) boundary-column correction of the right-hand side
    let constant_matrix = problem.diffusion.is_none() && problem.mass_coeff.is_none();
    let mut is_bc = vec![false; forms.n_u];
    for &d in &forms.bc.dofs {
        is_bc[d] = true;
    }
    let cached: Option<(LuSolver, Vec<f64>)> = if constant_matrix {
        let mut a = forms.k_const.as_ref().unwrap().clone();
        if let Some(m) = &forms.m_lin {
            a = a.add_scaled(1.0, m)?;
        }
        let (a_bc, bc_corr) = apply_dirichlet(&a, &vec![0.0; forms.n_u], &forms.bc)?;
        Some((LuSolver::new(&a_bc)?, bc_corr))
    } else {
        None
    };
    let refactored: Option<CachedPicard> = if constant_matrix {
        None
    } else {
        Some(CachedPicard::build(forms)?)
    };

    let mut update_norms = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let start = Instant::now();
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let mut rhs = forms.load.clone();
        if let (Some(mc), Some(c)) = (&forms.mc, &aux.c) {
            let cv = mc.matvec(c)?;
            for (r, c) in rhs.iter_mut().zip(&cv) {
                *r -= c;
            }
        }
        let u_new = if let Some((lu, bc_corr)) = &cached {
            for i in 0..forms.n_u {
                if is_bc[i] {
                    rhs[i] = bc_corr[i];
                } else {
                    rhs[i] += bc_corr[i];
                }
            }
            lu.solve(&rhs)
        } else {
            refactored.as_ref().unwrap().solve(
                aux.a.as_deref(),
                aux.ct.as_deref(),
                &rhs,
            )
        };
        let u_new = match u_new {
            Ok(x) => x,
            Err(_) => {
                status = Status::Diverged;
                break;
            }
        };
        let rel = rel_update(&u_new, &u);
        update_norms.push(rel);
        if !is_finite(&u_new) || norm2(&u_new) > opts.divergence_norm_cap {
            status = Status::Diverged;
            u = u_new;
            break;
        }
        u = u_new;
        aux = AuxState::from_u(problem, forms, &u)?;
        if rel <= opts.tol || !problem.has_nonlinearity() {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolveResult {
        u,
        aux: aux.into_map(),
        iterations,
        status,
        update_norms,
        offline_s: 0.0,
        online_s: start.elapsed().as_secs_f64(),
    })
}

/// Residual and block Jacobian of the coupled system in
/// `z = (u, a?, c_tilde?, c?)`.  Every Jacobian block is built from the
/// precomputed forms by contraction and diagonal scaling; the constraint
/// rows carry exact identity blocks.
pub struct NewtonSystem<'a> {
    problem: &'a ProblemSpec,
    forms: &'a EgfemForms,
    /// (coefficient, block offset) per interpolated nonlinearity
    blocks: Vec<(&'static str, usize)>,
    pub n_total: usize,
}

impl<'a> NewtonSystem<'a> {
    pub fn new(problem: &'a ProblemSpec, forms: &'a EgfemForms) -> Self {
        let mut blocks = Vec::new();
        let mut offset = forms.n_u;
        for (name, present) in [
            ("a", problem.diffusion.is_some()),
            ("c_tilde", problem.mass_coeff.is_some()),
            ("c", problem.explicit_coeff.is_some()),
        ] {
            if present {
                blocks.push((name, offset));
                offset += forms.n_w;
            }
        }
        NewtonSystem {
            problem,
            forms,
            blocks,
            n_total: offset,
        }
    }

    fn coeff(&self, name: &str) -> &PointwiseFn {
        match name {
            "a" => self.problem.diffusion.as_ref().unwrap(),
            "c_tilde" => self.problem.mass_coeff.as_ref().unwrap(),
            _ => self.problem.explicit_coeff.as_ref().unwrap(),
        }
    }

    pub fn initial(&self) -> Result<Vec<f64>> {
        let u = initial_guess(self.forms.n_u, &self.forms.bc);
        let mut z = vec![0.0; self.n_total];
        z[..self.forms.n_u].copy_from_slice(&u);
        self.reset_aux(&mut z)?;
        Ok(z)
    }

    /// Overwrites the aux blocks of `z` with their pointwise definitions.
    pub fn reset_aux(&self, z: &mut [f64]) -> Result<()> {
        let (u_w, gx, gy) = states_at_w(self.forms, &z[..self.forms.n_u].to_vec())?;
        for &(name, off) in &self.blocks {
            let vals = eval_coeff(self.coeff(name), &u_w, &gx, &gy, &self.forms.w_coords);
            z[off..off + self.forms.n_w].copy_from_slice(&vals);
        }
        Ok(())
    }

    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let forms = self.forms;
        let n_u = forms.n_u;
        let u = &z[..n_u];
        let mut r = vec![0.0; self.n_total];

        let mut r_u: Vec<f64> = forms.load.iter().map(|v| -v).collect();
        let add = |r_u: &mut Vec<f64>, v: Vec<f64>| {
            for (a, b) in r_u.iter_mut().zip(v) {
                *a += b;
            }
        };
        if let Some(ka) = &forms.ka {
            let off = self.block_offset("a");
            add(&mut r_u, ka.double_contract(u, &z[off..off + forms.n_w])?);
        } else {
            add(&mut r_u, forms.k_const.as_ref().unwrap().matvec(u)?);
        }
        if let Some(m3) = &forms.m3 {
            let off = self.block_offset("c_tilde");
            add(&mut r_u, m3.double_contract(u, &z[off..off + forms.n_w])?);
        }
        if let Some(m) = &forms.m_lin {
            add(&mut r_u, m.matvec(u)?);
        }
        if let Some(mc) = &forms.mc {
            let off = self.block_offset("c");
            add(&mut r_u, mc.matvec(&z[off..off + forms.n_w])?);
        }
        for (&d, &v) in forms.bc.dofs.iter().zip(&forms.bc.values) {
            r_u[d] = u[d] - v;
        }
        r[..n_u].copy_from_slice(&r_u);

        let (u_w, gx, gy) = states_at_w(forms, u)?;
        for &(name, off) in &self.blocks {
            let f = self.coeff(name);
            for k in 0..forms.n_w {
                r[off + k] = z[off + k] - f.eval(u_w[k], [gx[k], gy[k]], forms.w_coords[k]);
            }
        }
        Ok(r)
    }

    fn block_offset(&self, name: &str) -> usize {
        self.blocks.iter().find(|(n, _)| *n == name).unwrap().1
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<SparseMatrix> {
        let forms = self.forms;
        let n_u = forms.n_u;
        let u = &z[..n_u];
        let mut is_bc = vec![false; n_u];
        for &d in &forms.bc.dofs {
            is_bc[d] = true;
        }
        let mut trips: Vec<(usize, usize, f64)> = Vec::new();
        let mut push_block = |m: &SparseMatrix, ro: usize, co: usize, is_bc: &[bool]| {
            for i in 0..m.nrows {
                if ro == 0 && is_bc[i] {
                    continue;
                }
                let (cols, vals) = m.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    trips.push((ro + i, co + j, v));
                }
            }
        };

        // d r_u / d u
        let a_uu = match (&forms.ka, &forms.k_const) {
            (Some(ka), _) => {
                let off = self.block_offset("a");
                ka.contract_mode3(&z[off..off + forms.n_w])?
            }
            (None, Some(k)) => k.clone(),
            _ => unreachable!(),
        };
        push_block(&a_uu, 0, 0, &is_bc);
        if let Some(m3) = &forms.m3 {
            let off = self.block_offset("c_tilde");
            push_block(&m3.contract_mode3(&z[off..off + forms.n_w])?, 0, 0, &is_bc);
        }
        if let Some(m) = &forms.m_lin {
            push_block(m, 0, 0, &is_bc);
        }
        // d r_u / d aux
        if let Some(ka) = &forms.ka {
            push_block(&ka.contract_mode2(u)?, 0, self.block_offset("a"), &is_bc);
        }
        if let Some(m3) = &forms.m3 {
            push_block(
                &m3.contract_mode2(u)?,
                0,
                self.block_offset("c_tilde"),
                &is_bc,
            );
        }
        if let Some(mc) = &forms.mc {
            push_block(mc, 0, self.block_offset("c"), &is_bc);
        }
        for d in 0..n_u {
            if is_bc[d] {
                trips.push((d, d, 1.0));
            }
        }

        // constraint rows: identity minus the chain rule through the
        // interpolation operators
        let (u_w, gx, gy) = states_at_w(forms, u)?;
        let pi_u = forms.pi_u.as_ref().unwrap();
        let pi_gx = forms.pi_gx.as_ref().unwrap();
        let pi_gy = forms.pi_gy.as_ref().unwrap();
        for &(name, off) in &self.blocks {
            let f = self.coeff(name);
            for k in 0..forms.n_w {
                trips.push((off + k, off + k, 1.0));
                let state = (u_w[k], [gx[k], gy[k]], forms.w_coords[k]);
                if let Some(du) = &f.du {
                    let s = du(state.0, state.1, state.2);
                    if s != 0.0 {
                        let (cols, vals) = pi_u.row(k);
                        for (&j, &v) in cols.iter().zip(vals) {
                            trips.push((off + k, j, -s * v));
                        }
                    }
                }
                if let Some(dg) = &f.dgrad {
                    let s = dg(state.0, state.1, state.2);
                    for (axis, mat) in [(0, pi_gx), (1, pi_gy)] {
                        if s[axis] != 0.0 {
                            let (cols, vals) = mat.row(k);
                            for (&j, &v) in cols.iter().zip(vals) {
                                trips.push((off + k, j, -s[axis] * v));
                            }
                        }
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.n_total, self.n_total, trips)
    }
}

/// Undamped Newton iteration on the coupled system `(u, aux)`.
pub fn newton_egfem(
    problem: &ProblemSpec,
    forms: &EgfemForms,
    opts: IterOptions,
) -> Result<SolveResult> {
    let system = NewtonSystem::new(problem, forms);
    let n_u = forms.n_u;
    let mut z = system.initial()?;
    let mut update_norms = Vec::new();
    let mut status = Status::MaxIter;
    let mut iterations = 0;
    let start = Instant::now();
    for iter in 1..=opts.max_iter {
        iterations = iter;
        let r = system.residual(&z)?;
        let j = system.jacobian(&z)?;
        let delta = match solve_linear(&j, &r) {
            Ok(d) => d,
            Err(_) => {
                status = Status::Diverged;
                break;
            }
        };
        for (zi, di) in z.iter_mut().zip(&delta) {
            *zi -= di;
        }
        let rel = norm2(&delta[..n_u]) / norm2(&z[..n_u]).max(1e-30);
        update_norms.push(rel);
        if !is_finite(&z) || norm2(&z[..n_u]) > opts.divergence_norm_cap {
            status = Status::Diverged;
            break;
        }
        if rel <= opts.tol || !problem.has_nonlinearity() {
            status = Status::Converged;
            break;
        }
    }
    let mut aux = HashMap::new();
    for &(name, off) in &system.blocks {
        aux.insert(name, z[off..off + forms.n_w].to_vec());
    }
    Ok(SolveResult {
        u: z[..n_u].to_vec(),
        aux,
        iterations,
        status,
        update_norms,
        offline_s: 0.0,
        online_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurgersVariant {
    /// lagged convective vector reassembled by quadrature each step
    Sga,
    /// lagged convective vector via the precomputed third-order form
    TensorSga,
    /// interpolated group `u^2` on the trial space itself
    Gfem,
    /// interpolated group `u^2` on the given approximation space
    Egfem(ElementFamily),
}

/// One linear solve per step:
/// `(M + dt nu K) u^{n+1} = M u^n + dt (1/2 N(u^n) + d^{n+1})`.
/// Returns the full trajectory including the initial state.
pub fn semi_implicit_burgers(
    problem: &ProblemSpec,
    v_space: &FunctionSpace,
    variant: BurgersVariant,
    opts: IterOptions,
) -> Result<Vec<Vec<f64>>> {
    let td = problem
        .time
        .as_ref()
        .expect("semi_implicit_burgers requires a time-dependent problem");
    let dt = td.dt;
    let n_steps = (td.t_end / dt).round() as usize;
    let base_deg = (2 * v_space.family.degree()).max(1);

    let m = assemble_mass(v_space, v_space, base_deg.max(2))?;
    let k = assemble_stiffness(v_space, base_deg)?;
    let a = m.add_scaled(dt * problem.nu, &k)?;
    let bc = DirichletBC::from_space(v_space, |_| 0.0);
    let (a_bc, _) = apply_dirichlet(&a, &vec![0.0; v_space.n_dofs], &bc)?;
    let lu = LuSolver::new(&a_bc)?;

    // variant-specific precomputation for the convective term
    let w_family = match variant {
        BurgersVariant::Gfem => Some(v_space.family),
        BurgersVariant::Egfem(f) => Some(f),
        _ => None,
    };
    let group = match w_family {
        Some(family) => {
            let w_space =
                crate::elements::build_space(v_space.mesh.clone(), family)?;
            let qd = (w_space.family.degree() + v_space.family.degree()).clamp(1, 6);
            let nf = assemble_directional_derivative(v_space, &w_space, qd)?;
            let pi_u = interp_matrix(v_space, &w_space)?;
            Some((nf, pi_u))
        }
        None => None,
    };
    let n3 = match variant {
        BurgersVariant::TensorSga => Some(assemble_directional_derivative_tensor(
            v_space,
            problem.sga_quad_degree,
        )?),
        _ => None,
    };

    let mut u = crate::elements::interpolate(v_space, &td.initial);
    for &d in &bc.dofs {
        u[d] = 0.0;
    }
    let mut trajectory = Vec::with_capacity(n_steps + 1);
    trajectory.push(u.clone());
    let _ = opts;
    for step in 1..=n_steps {
        let t_next = step as f64 * dt;
        let nvec = match variant {
            BurgersVariant::Sga => {
                sga_directional_vector(v_space, &td.convective, &u, problem.sga_quad_degree)?
            }
            BurgersVariant::TensorSga => n3.as_ref().unwrap().double_contract(&u, &u)?,
            _ => {
                let (nf, pi_u) = group.as_ref().unwrap();
                let u_w = pi_u.matvec(&u)?;
                let f_w = hadamard(&u_w, &u_w)?;
                nf.matvec(&f_w)?
            }
        };
        let d_vec = assemble_load(v_space, |x| (td.source)(x, t_next), problem.load_quad_degree)?;
        let mut rhs = m.matvec(&u)?;
        for i in 0..rhs.len() {
            rhs[i] += dt * (0.5 * nvec[i] + d_vec[i]);
        }
        for &d in &bc.dofs {
            rhs[d] = 0.0;
        }
        u = lu.solve(&rhs)?;
        if !is_finite(&u) {
            return Err(Error::NonFiniteState { step });
        }
        trajectory.push(u.clone());
    }
    Ok(trajectory)
}

/// Residual and Jacobian of one fully implicit step of the transport
/// benchmark in `z = (u^{n+1}, f)`, `f` the interpolated group `u^2`.
pub struct BurgersNewtonStep {
    pub m: SparseMatrix,
    pub a_lin: SparseMatrix,
    pub nf: SparseMatrix,
    pub pi_u: SparseMatrix,
    pub bc_dofs: Vec<usize>,
    pub u_prev: Vec<f64>,
    pub load_next: Vec<f64>,
    pub dt: f64,
    pub n_u: usize,
    pub n_w: usize,
}

pub fn burgers_newton_step(
    problem: &ProblemSpec,
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
    u_prev: &[f64],
    t_next: f64,
) -> Result<BurgersNewtonStep> {
    let td = problem.time.as_ref().expect("time-dependent problem");
    let base_deg = (2 * v_space.family.degree()).max(1);
    let m = assemble_mass(v_space, v_space, base_deg.max(2))?;
    let k = assemble_stiffness(v_space, base_deg)?;
    let a_lin = m.add_scaled(td.dt * problem.nu, &k)?;
    let qd = (w_space.family.degree() + v_space.family.degree()).clamp(1, 6);
    let nf = assemble_directional_derivative(v_space, w_space, qd)?;
    let pi_u = interp_matrix(v_space, w_space)?;
    let bc = DirichletBC::from_space(v_space, |_| 0.0);
    let load_next = assemble_load(v_space, |x| (td.source)(x, t_next), problem.load_quad_degree)?;
    Ok(BurgersNewtonStep {
        m,
        a_lin,
        nf,
        pi_u,
        bc_dofs: bc.dofs,
        u_prev: u_prev.to_vec(),
        load_next,
        dt: td.dt,
        n_u: v_space.n_dofs,
        n_w: w_space.n_dofs,
    })
}

impl BurgersNewtonStep {
    pub fn n_total(&self) -> usize {
        self.n_u + self.n_w
    }

    pub fn residual(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (u, f) = z.split_at(self.n_u);
        let mut r = vec![0.0; self.n_total()];
        let au = self.a_lin.matvec(u)?;
        let mu_prev = self.m.matvec(&self.u_prev)?;
        let nff = self.nf.matvec(f)?;
        for i in 0..self.n_u {
            r[i] = au[i] - mu_prev[i] - self.dt * (0.5 * nff[i] + self.load_next[i]);
        }
        for &d in &self.bc_dofs {
            r[d] = u[d];
        }
        let u_w = self.pi_u.matvec(u)?;
        for k in 0..self.n_w {
            r[self.n_u + k] = f[k] - u_w[k] * u_w[k];
        }
        Ok(r)
    }

    pub fn jacobian(&self, z: &[f64]) -> Result<SparseMatrix> {
        let (u, _) = z.split_at(self.n_u);
        let mut is_bc = vec![false; self.n_u];
        for &d in &self.bc_dofs {
            is_bc[d] = true;
        }
        let mut trips = Vec::new();
        for i in 0..self.n_u {
            if is_bc[i] {
                trips.push((i, i, 1.0));
                continue;
            }
            let (cols, vals) = self.a_lin.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((i, j, v));
            }
            let (cols, vals) = self.nf.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((i, self.n_u + j, -0.5 * self.dt * v));
            }
        }
        let u_w = self.pi_u.matvec(u)?;
        for k in 0..self.n_w {
            trips.push((self.n_u + k, self.n_u + k, 1.0));
            let (cols, vals) = self.pi_u.row(k);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push((self.n_u + k, j, -2.0 * u_w[k] * v));
            }
        }
        SparseMatrix::from_triplets(self.n_total(), self.n_total(), trips)
    }
}
