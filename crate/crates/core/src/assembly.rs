//! Assembly of the discrete forms: per-iteration weighted operators, the
//! precomputed multi-linear forms, interpolation operators, load vectors and
//! Dirichlet elimination.
//!
//! Every routine that evaluates a quadrature loop bumps a global counter so
//! tests can assert that precomputed-form iteration loops perform no
//! integration at all.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::elements::{dunavant_rule, eval_basis, ElementFamily, FunctionSpace};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};
use crate::tensor::{SparseMatrix, SparseTensor3};

static QUAD_EVALS: AtomicU64 = AtomicU64::new(0);

pub fn quadrature_eval_count() -> u64 {
    QUAD_EVALS.load(Ordering::Relaxed)
}

pub fn reset_quadrature_eval_count() {
    QUAD_EVALS.store(0, Ordering::Relaxed);
}

fn count_quad_evals(n: usize) {
    QUAD_EVALS.fetch_add(n as u64, Ordering::Relaxed);
}

/// Scalar coefficient of the model problem evaluated pointwise from the
/// solution value, its gradient and the position, with optional partial
/// derivatives for Newton iterations.
pub struct PointwiseFn {
    pub value: Box<dyn Fn(f64, [f64; 2], [f64; 2]) -> f64 + Send + Sync>,
    pub du: Option<Box<dyn Fn(f64, [f64; 2], [f64; 2]) -> f64 + Send + Sync>>,
    pub dgrad: Option<Box<dyn Fn(f64, [f64; 2], [f64; 2]) -> [f64; 2] + Send + Sync>>,
}

impl PointwiseFn {
    pub fn of_u(
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        df: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PointwiseFn {
            value: Box::new(move |u, _, _| f(u)),
            du: Some(Box::new(move |u, _, _| df(u))),
            dgrad: None,
        }
    }

    pub fn of_grad(
        f: impl Fn([f64; 2]) -> f64 + Send + Sync + 'static,
        df: impl Fn([f64; 2]) -> [f64; 2] + Send + Sync + 'static,
    ) -> Self {
        PointwiseFn {
            value: Box::new(move |_, g, _| f(g)),
            du: None,
            dgrad: Some(Box::new(move |_, g, _| df(g))),
        }
    }

    pub fn constant(c: f64) -> Self {
        PointwiseFn {
            value: Box::new(move |_, _, _| c),
            du: Some(Box::new(|_, _, _| 0.0)),
            dgrad: Some(Box::new(|_, _, _| [0.0, 0.0])),
        }
    }

    pub fn eval(&self, u: f64, grad: [f64; 2], x: [f64; 2]) -> f64 {
        (self.value)(u, grad, x)
    }

    /// Largest relative mismatch between the stored partial derivatives and
    /// central finite differences over the given sample states.
    pub fn derivative_mismatch(&self, samples: &[(f64, [f64; 2], [f64; 2])]) -> f64 {
        let h = 1e-6;
        let mut worst = 0.0f64;
        for &(u, g, x) in samples {
            if let Some(du) = &self.du {
                let fd = ((self.value)(u + h, g, x) - (self.value)(u - h, g, x)) / (2.0 * h);
                let d = du(u, g, x);
                worst = worst.max((fd - d).abs() / d.abs().max(1.0));
            }
            if let Some(dg) = &self.dgrad {
                let d = dg(u, g, x);
                for axis in 0..2 {
                    let mut gp = g;
                    let mut gm = g;
                    gp[axis] += h;
                    gm[axis] -= h;
                    let fd = ((self.value)(u, gp, x) - (self.value)(u, gm, x)) / (2.0 * h);
                    worst = worst.max((fd - d[axis]).abs() / d[axis].abs().max(1.0));
                }
            }
        }
        worst
    }
}

/// Prescribed values at Dirichlet DOFs.
#[derive(Debug, Clone)]
pub struct DirichletBC {
    pub dofs: Vec<usize>,
    pub values: Vec<f64>,
}

impl DirichletBC {
    pub fn from_space(space: &FunctionSpace, u_d: impl Fn([f64; 2]) -> f64) -> Self {
        let dofs = space.dirichlet_dofs.clone();
        let values = dofs.iter().map(|&d| u_d(space.dof_coords[d])).collect();
        DirichletBC { dofs, values }
    }

    pub fn empty() -> Self {
        DirichletBC {
            dofs: Vec::new(),
            values: Vec::new(),
        }
    }
}

/// Per-triangle geometry: physical gradient mapping and area.
struct CellGeometry {
    verts: [[f64; 2]; 3],
    area: f64,
    // rows of J^{-T}; physical gradient = jinv_t * reference gradient
    jinv_t: [[f64; 2]; 2],
}

impl CellGeometry {
    fn new(mesh: &Mesh, cell: usize) -> Self {
        let [a, b, c] = mesh.triangles[cell];
        let (v0, v1, v2) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
        let (dx1, dy1) = (v1[0] - v0[0], v1[1] - v0[1]);
        let (dx2, dy2) = (v2[0] - v0[0], v2[1] - v0[1]);
        let det = dx1 * dy2 - dx2 * dy1;
        CellGeometry {
            verts: [v0, v1, v2],
            area: 0.5 * det,
            jinv_t: [[dy2 / det, -dy1 / det], [-dx2 / det, dx1 / det]],
        }
    }

    fn physical_point(&self, bary: [f64; 3]) -> [f64; 2] {
        [
            bary[0] * self.verts[0][0] + bary[1] * self.verts[1][0] + bary[2] * self.verts[2][0],
            bary[0] * self.verts[0][1] + bary[1] * self.verts[1][1] + bary[2] * self.verts[2][1],
        ]
    }

    fn physical_grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.jinv_t[0][0] * g[0] + self.jinv_t[0][1] * g[1],
            self.jinv_t[1][0] * g[0] + self.jinv_t[1][1] * g[1],
        ]
    }
}

fn require_lagrange(space: &FunctionSpace, op: &'static str) -> Result<()> {
    if !space.family.is_lagrange() {
        return Err(Error::InvalidSpace {
            op,
            family: space.family,
            reason: "a pointwise-evaluable Lagrange family is required",
        });
    }
    Ok(())
}

fn require_gradient_space(space: &FunctionSpace, op: &'static str) -> Result<()> {
    if !space.family.is_continuous() {
        return Err(Error::InvalidSpace {
            op,
            family: space.family,
            reason: "a family with usable gradients (P1-P3) is required",
        });
    }
    Ok(())
}

fn require_same_mesh(a: &FunctionSpace, b: &FunctionSpace, op: &'static str) -> Result<()> {
    if !a.same_mesh(b) {
        return Err(Error::MeshMismatch { op });
    }
    Ok(())
}

/// Basis values and physical gradients for every quadrature point of a cell.
fn tabulate(
    family: ElementFamily,
    rule_points: &[[f64; 3]],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<[f64; 2]>>)> {
    let mut values = Vec::with_capacity(rule_points.len());
    let mut ref_grads = Vec::with_capacity(rule_points.len());
    for &p in rule_points {
        let (v, g) = eval_basis(family, p)?;
        values.push(v);
        ref_grads.push(g);
    }
    Ok((values, ref_grads))
}

/// `K_ij = int grad(phi_j) . grad(phi_i)`
pub fn assemble_stiffness(v_space: &FunctionSpace, quad_degree: usize) -> Result<SparseMatrix> {
    require_lagrange(v_space, "assemble_stiffness")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (_, ref_grads) = tabulate(v_space.family, &rule.points)?;
    let n_local = ref_grads[0].len();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * n_local * n_local);
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        let mut local = vec![0.0; n_local * n_local];
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = w * geo.area;
            let grads: Vec<[f64; 2]> = ref_grads[q].iter().map(|&g| geo.physical_grad(g)).collect();
            for i in 0..n_local {
                for j in 0..n_local {
                    local[i * n_local + j] +=
                        wq * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
        for i in 0..n_local {
            for j in 0..n_local {
                triplets.push((dofs[i], dofs[j], local[i * n_local + j]));
            }
        }
    }
    SparseMatrix::from_triplets(v_space.n_dofs, v_space.n_dofs, triplets)
}

/// `(M^c)_{ij} = int eta_j^W phi_i`
///
/// For a quadrature-embedded trial space the entries are the exact delta
/// action `w_l^K phi_i(x_l^K)`; no integration of delta functions happens.
pub fn assemble_mass(
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseMatrix> {
    require_lagrange(v_space, "assemble_mass")?;
    require_same_mesh(v_space, w_space, "assemble_mass")?;
    let mesh = &v_space.mesh;
    let mut triplets = Vec::new();
    match w_space.family {
        ElementFamily::QuadratureEmbedded(k) => {
            let rule = dunavant_rule(k)?;
            let (v_values, _) = tabulate(v_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                for (l, w) in rule.weights.iter().enumerate() {
                    let w_phys = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        triplets.push((vi, w_dofs[l], w_phys * v_values[l][i]));
                    }
                }
            }
        }
        _ => {
            let rule = dunavant_rule(quad_degree)?;
            let (v_values, _) = tabulate(v_space.family, &rule.points)?;
            let (w_values, _) = tabulate(w_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                count_quad_evals(rule.points.len());
                for (q, w) in rule.weights.iter().enumerate() {
                    let wq = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        for (j, &wj) in w_dofs.iter().enumerate() {
                            triplets.push((vi, wj, wq * v_values[q][i] * w_values[q][j]));
                        }
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(v_space.n_dofs, w_space.n_dofs, triplets)
}

/// `(K^b_a)_{ijk} = int eta_k^a grad(eta_j^b) . grad(phi_i)`
pub fn assemble_trilinear_stiffness(
    v_space: &FunctionSpace,
    wb_space: &FunctionSpace,
    wa_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseTensor3> {
    require_lagrange(v_space, "assemble_trilinear_stiffness")?;
    require_gradient_space(wb_space, "assemble_trilinear_stiffness")?;
    require_same_mesh(v_space, wb_space, "assemble_trilinear_stiffness")?;
    require_same_mesh(v_space, wa_space, "assemble_trilinear_stiffness")?;
    let mesh = &v_space.mesh;
    let mut entries = Vec::new();
    match wa_space.family {
        ElementFamily::QuadratureEmbedded(k) => {
            let rule = dunavant_rule(k)?;
            let (_, v_grads) = tabulate(v_space.family, &rule.points)?;
            let (_, b_grads) = tabulate(wb_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let b_dofs = &wb_space.cell_dofs[cell];
                let a_dofs = &wa_space.cell_dofs[cell];
                for (l, w) in rule.weights.iter().enumerate() {
                    let w_phys = w * geo.area;
                    let gv: Vec<[f64; 2]> =
                        v_grads[l].iter().map(|&g| geo.physical_grad(g)).collect();
                    let gb: Vec<[f64; 2]> =
                        b_grads[l].iter().map(|&g| geo.physical_grad(g)).collect();
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        for (j, &bj) in b_dofs.iter().enumerate() {
                            entries.push((
                                vi,
                                bj,
                                a_dofs[l],
                                w_phys * (gb[j][0] * gv[i][0] + gb[j][1] * gv[i][1]),
                            ));
                        }
                    }
                }
            }
        }
        _ => {
            let rule = dunavant_rule(quad_degree)?;
            let (_, v_grads) = tabulate(v_space.family, &rule.points)?;
            let (_, b_grads) = tabulate(wb_space.family, &rule.points)?;
            let (a_values, _) = tabulate(wa_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let b_dofs = &wb_space.cell_dofs[cell];
                let a_dofs = &wa_space.cell_dofs[cell];
                count_quad_evals(rule.points.len());
                for (q, w) in rule.weights.iter().enumerate() {
                    let wq = w * geo.area;
                    let gv: Vec<[f64; 2]> =
                        v_grads[q].iter().map(|&g| geo.physical_grad(g)).collect();
                    let gb: Vec<[f64; 2]> =
                        b_grads[q].iter().map(|&g| geo.physical_grad(g)).collect();
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        for (j, &bj) in b_dofs.iter().enumerate() {
                            let dot = gb[j][0] * gv[i][0] + gb[j][1] * gv[i][1];
                            for (k_local, &ak) in a_dofs.iter().enumerate() {
                                entries.push((vi, bj, ak, wq * a_values[q][k_local] * dot));
                            }
                        }
                    }
                }
            }
        }
    }
    SparseTensor3::from_triplets([v_space.n_dofs, wb_space.n_dofs, wa_space.n_dofs], entries)
}

/// `(K_a)_{ijk} = int eta_k^a grad(phi_j) . grad(phi_i)` — the trilinear
/// stiffness specialized to `b(u) = u`.
pub fn assemble_weighted_stiffness_tensor(
    v_space: &FunctionSpace,
    wa_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseTensor3> {
    assemble_trilinear_stiffness(v_space, v_space, wa_space, quad_degree)
}

/// `M_{ijk} = int eta_k^W phi_j phi_i`
pub fn assemble_mass_trilinear(
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseTensor3> {
    require_lagrange(v_space, "assemble_mass_trilinear")?;
    require_same_mesh(v_space, w_space, "assemble_mass_trilinear")?;
    let mesh = &v_space.mesh;
    let mut entries = Vec::new();
    match w_space.family {
        ElementFamily::QuadratureEmbedded(k) => {
            let rule = dunavant_rule(k)?;
            let (v_values, _) = tabulate(v_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                for (l, w) in rule.weights.iter().enumerate() {
                    let w_phys = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        for (j, &vj) in v_dofs.iter().enumerate() {
                            entries.push((
                                vi,
                                vj,
                                w_dofs[l],
                                w_phys * v_values[l][i] * v_values[l][j],
                            ));
                        }
                    }
                }
            }
        }
        _ => {
            let rule = dunavant_rule(quad_degree)?;
            let (v_values, _) = tabulate(v_space.family, &rule.points)?;
            let (w_values, _) = tabulate(w_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                count_quad_evals(rule.points.len());
                for (q, w) in rule.weights.iter().enumerate() {
                    let wq = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        for (j, &vj) in v_dofs.iter().enumerate() {
                            let vv = wq * v_values[q][i] * v_values[q][j];
                            for (k_local, &wk) in w_dofs.iter().enumerate() {
                                entries.push((vi, vj, wk, vv * w_values[q][k_local]));
                            }
                        }
                    }
                }
            }
        }
    }
    SparseTensor3::from_triplets([v_space.n_dofs, v_space.n_dofs, w_space.n_dofs], entries)
}

/// `N^f_{ij} = int eta_j^f (d/dx1 + d/dx2) phi_i`
pub fn assemble_directional_derivative(
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseMatrix> {
    require_lagrange(v_space, "assemble_directional_derivative")?;
    require_same_mesh(v_space, w_space, "assemble_directional_derivative")?;
    let mesh = &v_space.mesh;
    let mut triplets = Vec::new();
    match w_space.family {
        ElementFamily::QuadratureEmbedded(k) => {
            let rule = dunavant_rule(k)?;
            let (_, v_grads) = tabulate(v_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                for (l, w) in rule.weights.iter().enumerate() {
                    let w_phys = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        let g = geo.physical_grad(v_grads[l][i]);
                        triplets.push((vi, w_dofs[l], w_phys * (g[0] + g[1])));
                    }
                }
            }
        }
        _ => {
            let rule = dunavant_rule(quad_degree)?;
            let (_, v_grads) = tabulate(v_space.family, &rule.points)?;
            let (w_values, _) = tabulate(w_space.family, &rule.points)?;
            for cell in 0..mesh.n_triangles() {
                let geo = CellGeometry::new(mesh, cell);
                let v_dofs = &v_space.cell_dofs[cell];
                let w_dofs = &w_space.cell_dofs[cell];
                count_quad_evals(rule.points.len());
                for (q, w) in rule.weights.iter().enumerate() {
                    let wq = w * geo.area;
                    for (i, &vi) in v_dofs.iter().enumerate() {
                        let g = geo.physical_grad(v_grads[q][i]);
                        let dsum = g[0] + g[1];
                        for (j, &wj) in w_dofs.iter().enumerate() {
                            triplets.push((vi, wj, wq * dsum * w_values[q][j]));
                        }
                    }
                }
            }
        }
    }
    SparseMatrix::from_triplets(v_space.n_dofs, w_space.n_dofs, triplets)
}

/// `N_{ijk} = int phi_k phi_j (d/dx1 + d/dx2) phi_i` — the tensor companion
/// of [`assemble_directional_derivative`].
pub fn assemble_directional_derivative_tensor(
    v_space: &FunctionSpace,
    quad_degree: usize,
) -> Result<SparseTensor3> {
    require_lagrange(v_space, "assemble_directional_derivative_tensor")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, v_grads) = tabulate(v_space.family, &rule.points)?;
    let mut entries = Vec::new();
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = w * geo.area;
            for (i, &vi) in dofs.iter().enumerate() {
                let g = geo.physical_grad(v_grads[q][i]);
                let dsum = g[0] + g[1];
                for (j, &vj) in dofs.iter().enumerate() {
                    for (k_local, &vk) in dofs.iter().enumerate() {
                        entries.push((
                            vi,
                            vj,
                            vk,
                            wq * dsum * v_values[q][j] * v_values[q][k_local],
                        ));
                    }
                }
            }
        }
    }
    SparseTensor3::from_triplets([v_space.n_dofs; 3], entries)
}

/// `(G^g)_{ij} = int_{Gamma_N} eta_j^g phi_i` — line-integral mass matrix
/// over Neumann-tagged edges; the zero matrix when there are none.
pub fn assemble_boundary_mass(
    v_space: &FunctionSpace,
    wg_space: &FunctionSpace,
) -> Result<SparseMatrix> {
    require_lagrange(v_space, "assemble_boundary_mass")?;
    require_same_mesh(v_space, wg_space, "assemble_boundary_mass")?;
    let mesh = &v_space.mesh;
    // quadrature-embedded DOFs sit strictly inside elements, so their basis
    // has no boundary trace
    if matches!(wg_space.family, ElementFamily::QuadratureEmbedded(_)) {
        return Ok(SparseMatrix::zeros(v_space.n_dofs, wg_space.n_dofs));
    }
    // 4-point Gauss-Legendre on the edge, exact through degree 7
    let gauss_t = [
        0.5 - 0.430_568_155_797_026_29,
        0.5 - 0.169_990_521_792_428_13,
        0.5 + 0.169_990_521_792_428_13,
        0.5 + 0.430_568_155_797_026_29,
    ];
    let gauss_w = [
        0.173_927_422_568_726_93,
        0.326_072_577_431_273_07,
        0.326_072_577_431_273_07,
        0.173_927_422_568_726_93,
    ];
    let adjacency = mesh.edge_adjacency();
    let mut triplets = Vec::new();
    for &([a, b], tag) in &mesh.boundary_edges {
        if tag != BoundaryTag::Neumann {
            continue;
        }
        let key = if a < b { (a, b) } else { (b, a) };
        let cell = adjacency[&key][0];
        let geo = CellGeometry::new(mesh, cell);
        let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
        let length = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        count_quad_evals(gauss_t.len());
        for (&t, &w) in gauss_t.iter().zip(&gauss_w) {
            let x = [
                pa[0] + t * (pb[0] - pa[0]),
                pa[1] + t * (pb[1] - pa[1]),
            ];
            let bary = crate::elements::barycentric_in(mesh, cell, x);
            let (v_values, _) = eval_basis(v_space.family, bary)?;
            let (w_values, _) = eval_basis(wg_space.family, bary)?;
            let wq = w * length;
            for (i, &vi) in v_space.cell_dofs[cell].iter().enumerate() {
                for (j, &wj) in wg_space.cell_dofs[cell].iter().enumerate() {
                    let contrib = wq * v_values[i] * w_values[j];
                    if contrib != 0.0 {
                        triplets.push((vi, wj, contrib));
                    }
                }
            }
        }
        let _ = geo;
    }
    SparseMatrix::from_triplets(v_space.n_dofs, wg_space.n_dofs, triplets)
}

/// `d_i = int f phi_i`
pub fn assemble_load(
    v_space: &FunctionSpace,
    f: impl Fn([f64; 2]) -> f64,
    quad_degree: usize,
) -> Result<Vec<f64>> {
    require_lagrange(v_space, "assemble_load")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, _) = tabulate(v_space.family, &rule.points)?;
    let mut out = vec![0.0; v_space.n_dofs];
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        for (q, w) in rule.weights.iter().enumerate() {
            let wq = w * geo.area * f(geo.physical_point(rule.points[q]));
            for (i, &vi) in dofs.iter().enumerate() {
                out[vi] += wq * v_values[q][i];
            }
        }
    }
    Ok(out)
}

/// `(Pi_u^f)_{ij} = phi_j(x_i^f)` — evaluates a coefficient vector on the
/// trial space at every DOF coordinate of `w_space`.
pub fn interp_matrix(v_space: &FunctionSpace, w_space: &FunctionSpace) -> Result<SparseMatrix> {
    require_lagrange(v_space, "interp_matrix")?;
    require_same_mesh(v_space, w_space, "interp_matrix")?;
    let mesh = &v_space.mesh;
    let mut triplets = Vec::new();
    for dof in 0..w_space.n_dofs {
        let cell = w_space.dof_owner_cell[dof];
        let bary = crate::elements::barycentric_in(mesh, cell, w_space.dof_coords[dof]);
        let (values, _) = eval_basis(v_space.family, bary)?;
        for (j, &vj) in v_space.cell_dofs[cell].iter().enumerate() {
            if values[j] != 0.0 {
                triplets.push((dof, vj, values[j]));
            }
        }
    }
    SparseMatrix::from_triplets(w_space.n_dofs, v_space.n_dofs, triplets)
}

/// `(Pi_{grad u}^f)_{ijk} = (grad phi_j (x_k^f))_i` with dims
/// `(2, N_u, N_f)`; contracting mode 2 with `u` yields the gradients of
/// `u_h` at all `w_space` DOFs.
///
/// At DOF coordinates shared by several elements (possible for Lagrange
/// `w_space`), the lowest-index adjacent element owns the evaluation.
pub fn interp_grad_tensor(
    v_space: &FunctionSpace,
    w_space: &FunctionSpace,
) -> Result<SparseTensor3> {
    require_lagrange(v_space, "interp_grad_tensor")?;
    require_same_mesh(v_space, w_space, "interp_grad_tensor")?;
    let mesh = &v_space.mesh;
    let mut entries = Vec::new();
    for dof in 0..w_space.n_dofs {
        let cell = w_space.dof_owner_cell[dof];
        let geo = CellGeometry::new(mesh, cell);
        let bary = crate::elements::barycentric_in(mesh, cell, w_space.dof_coords[dof]);
        let (_, ref_grads) = eval_basis(v_space.family, bary)?;
        for (j, &vj) in v_space.cell_dofs[cell].iter().enumerate() {
            let g = geo.physical_grad(ref_grads[j]);
            for axis in 0..2 {
                if g[axis] != 0.0 {
                    entries.push((axis, vj, dof, g[axis]));
                }
            }
        }
    }
    SparseTensor3::from_triplets([2, v_space.n_dofs, w_space.n_dofs], entries)
}

/// Solution values and gradients of `u_h` at the quadrature points of a cell.
fn u_at_quad(
    u: &[f64],
    dofs: &[usize],
    values: &[Vec<f64>],
    ref_grads: &[Vec<[f64; 2]>],
    geo: &CellGeometry,
) -> Vec<(f64, [f64; 2])> {
    (0..values.len())
        .map(|q| {
            let mut uh = 0.0;
            let mut guh = [0.0; 2];
            for (i, &d) in dofs.iter().enumerate() {
                uh += u[d] * values[q][i];
                let g = geo.physical_grad(ref_grads[q][i]);
                guh[0] += u[d] * g[0];
                guh[1] += u[d] * g[1];
            }
            (uh, guh)
        })
        .collect()
}

/// `K(a, u)_{ij} = int a(u_h, grad u_h, x) grad(phi_j) . grad(phi_i)` —
/// freshly assembled each call (the per-iteration cost the precomputed
/// forms avoid).
pub fn sga_weighted_stiffness(
    v_space: &FunctionSpace,
    a_fn: &PointwiseFn,
    u: &[f64],
    quad_degree: usize,
) -> Result<SparseMatrix> {
    require_lagrange(v_space, "sga_weighted_stiffness")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, ref_grads) = tabulate(v_space.family, &rule.points)?;
    let n_local = v_values[0].len();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * n_local * n_local);
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        let states = u_at_quad(u, dofs, &v_values, &ref_grads, &geo);
        let mut local = vec![0.0; n_local * n_local];
        for (q, w) in rule.weights.iter().enumerate() {
            let (uh, guh) = states[q];
            let coeff = a_fn.eval(uh, guh, geo.physical_point(rule.points[q]));
            let wq = w * geo.area * coeff;
            let grads: Vec<[f64; 2]> = ref_grads[q].iter().map(|&g| geo.physical_grad(g)).collect();
            for i in 0..n_local {
                for j in 0..n_local {
                    local[i * n_local + j] +=
                        wq * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                }
            }
        }
        for i in 0..n_local {
            for j in 0..n_local {
                triplets.push((dofs[i], dofs[j], local[i * n_local + j]));
            }
        }
    }
    SparseMatrix::from_triplets(v_space.n_dofs, v_space.n_dofs, triplets)
}

/// `M(c, u)_{ij} = int c(u_h, grad u_h, x) phi_j phi_i`
pub fn sga_weighted_mass(
    v_space: &FunctionSpace,
    c_fn: &PointwiseFn,
    u: &[f64],
    quad_degree: usize,
) -> Result<SparseMatrix> {
    require_lagrange(v_space, "sga_weighted_mass")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, ref_grads) = tabulate(v_space.family, &rule.points)?;
    let n_local = v_values[0].len();
    let mut triplets = Vec::with_capacity(mesh.n_triangles() * n_local * n_local);
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        let states = u_at_quad(u, dofs, &v_values, &ref_grads, &geo);
        for (q, w) in rule.weights.iter().enumerate() {
            let (uh, guh) = states[q];
            let coeff = c_fn.eval(uh, guh, geo.physical_point(rule.points[q]));
            let wq = w * geo.area * coeff;
            for (i, &vi) in dofs.iter().enumerate() {
                for (j, &vj) in dofs.iter().enumerate() {
                    triplets.push((vi, vj, wq * v_values[q][i] * v_values[q][j]));
                }
            }
        }
    }
    SparseMatrix::from_triplets(v_space.n_dofs, v_space.n_dofs, triplets)
}

/// `M(c, u)_i = int c(u_h, grad u_h, x) phi_i`
pub fn sga_nonlinear_vector(
    v_space: &FunctionSpace,
    c_fn: &PointwiseFn,
    u: &[f64],
    quad_degree: usize,
) -> Result<Vec<f64>> {
    require_lagrange(v_space, "sga_nonlinear_vector")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, ref_grads) = tabulate(v_space.family, &rule.points)?;
    let mut out = vec![0.0; v_space.n_dofs];
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        let states = u_at_quad(u, dofs, &v_values, &ref_grads, &geo);
        for (q, w) in rule.weights.iter().enumerate() {
            let (uh, guh) = states[q];
            let coeff = c_fn.eval(uh, guh, geo.physical_point(rule.points[q]));
            let wq = w * geo.area * coeff;
            for (i, &vi) in dofs.iter().enumerate() {
                out[vi] += wq * v_values[q][i];
            }
        }
    }
    Ok(out)
}

/// `N(u)_i = int f(u_h) (d/dx1 + d/dx2) phi_i` — the lagged convective
/// vector of the transport benchmark, reassembled per step.
pub fn sga_directional_vector(
    v_space: &FunctionSpace,
    f_fn: &PointwiseFn,
    u: &[f64],
    quad_degree: usize,
) -> Result<Vec<f64>> {
    require_lagrange(v_space, "sga_directional_vector")?;
    let mesh = &v_space.mesh;
    let rule = dunavant_rule(quad_degree)?;
    let (v_values, ref_grads) = tabulate(v_space.family, &rule.points)?;
    let mut out = vec![0.0; v_space.n_dofs];
    for cell in 0..mesh.n_triangles() {
        let geo = CellGeometry::new(mesh, cell);
        let dofs = &v_space.cell_dofs[cell];
        count_quad_evals(rule.points.len());
        let states = u_at_quad(u, dofs, &v_values, &ref_grads, &geo);
        for (q, w) in rule.weights.iter().enumerate() {
            let (uh, guh) = states[q];
            let coeff = f_fn.eval(uh, guh, geo.physical_point(rule.points[q]));
            let wq = w * geo.area * coeff;
            for (i, &vi) in dofs.iter().enumerate() {
                let g = geo.physical_grad(ref_grads[q][i]);
                out[vi] += wq * (g[0] + g[1]);
            }
        }
    }
    Ok(out)
}

/// Symmetric Dirichlet elimination: known columns are moved to the
/// right-hand side and constrained rows/columns replaced by identity rows
/// with the prescribed value.
pub fn apply_dirichlet(
    a: &SparseMatrix,
    rhs: &[f64],
    bc: &DirichletBC,
) -> Result<(SparseMatrix, Vec<f64>)> {
    let n = a.nrows;
    let mut is_bc = vec![false; n];
    let mut bc_value = vec![0.0; n];
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        if d >= n {
            return Err(Error::IndexOutOfRange {
                op: "apply_dirichlet",
                index: d,
                len: n,
            });
        }
        is_bc[d] = true;
        bc_value[d] = v;
    }
    let mut out_rhs = rhs.to_vec();
    let mut indptr = vec![0usize; n + 1];
    let mut indices = Vec::with_capacity(a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    for i in 0..n {
        if is_bc[i] {
            indices.push(i);
            values.push(1.0);
            out_rhs[i] = bc_value[i];
        } else {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if is_bc[j] {
                    out_rhs[i] -= v * bc_value[j];
                } else {
                    indices.push(j);
                    values.push(v);
                }
            }
        }
        indptr[i + 1] = indices.len();
    }
    Ok((
        SparseMatrix {
            nrows: n,
            ncols: n,
            indptr,
            indices,
            values,
        },
        out_rhs,
    ))
}
