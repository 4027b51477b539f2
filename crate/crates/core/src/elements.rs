//! Reference bases (Lagrange P0-P3), symmetric Gaussian quadrature on
//! triangles and function-space construction, including the discontinuous
//! quadrature-point spaces used for exact reformulation of assembled systems.

use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Mesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementFamily {
    LagrangeP0,
    LagrangeP1,
    LagrangeP2,
    LagrangeP3,
    /// Discontinuous space with one degree of freedom per quadrature point of
    /// the symmetric rule with the given exactness degree. Its basis functions
    /// are quadrature-weighted discrete Dirac deltas and are never evaluated
    /// pointwise; their action is applied exactly during assembly.
    QuadratureEmbedded(usize),
}

impl ElementFamily {
    pub fn is_lagrange(self) -> bool {
        !matches!(self, ElementFamily::QuadratureEmbedded(_))
    }

    pub fn is_continuous(self) -> bool {
        matches!(
            self,
            ElementFamily::LagrangeP1 | ElementFamily::LagrangeP2 | ElementFamily::LagrangeP3
        )
    }

    /// Polynomial degree of the Lagrange basis; 0 for quadrature spaces.
    pub fn degree(self) -> usize {
        match self {
            ElementFamily::LagrangeP0 => 0,
            ElementFamily::LagrangeP1 => 1,
            ElementFamily::LagrangeP2 => 2,
            ElementFamily::LagrangeP3 => 3,
            ElementFamily::QuadratureEmbedded(_) => 0,
        }
    }

    pub fn n_local_dofs(self) -> Result<usize> {
        Ok(match self {
            ElementFamily::LagrangeP0 => 1,
            ElementFamily::LagrangeP1 => 3,
            ElementFamily::LagrangeP2 => 6,
            ElementFamily::LagrangeP3 => 10,
            ElementFamily::QuadratureEmbedded(k) => dunavant_rule(k)?.points.len(),
        })
    }
}

/// Symmetric quadrature rule on the reference triangle with barycentric
/// points and weights normalized to sum to one; the physical weight of a
/// point on element `K` is `weight * |K|`.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

fn orbit3(rule: &mut QuadratureRule, b: f64, w: f64) {
    let a = 1.0 - 2.0 * b;
    for p in [[a, b, b], [b, a, b], [b, b, a]] {
        rule.points.push(p);
        rule.weights.push(w);
    }
}

fn orbit6(rule: &mut QuadratureRule, a: f64, b: f64, w: f64) {
    let c = 1.0 - a - b;
    for p in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        rule.points.push(p);
        rule.weights.push(w);
    }
}

/// Symmetric Gaussian rule on the triangle with the requested exactness
/// degree (1 through 6). Degree 1 is the one-point centroid rule.
pub fn dunavant_rule(exactness_degree: usize) -> Result<QuadratureRule> {
    let mut rule = QuadratureRule {
        points: Vec::new(),
        weights: Vec::new(),
        exactness_degree,
    };
    let third = 1.0 / 3.0;
    match exactness_degree {
        1 => {
            rule.points.push([third, third, third]);
            rule.weights.push(1.0);
        }
        2 => orbit3(&mut rule, 1.0 / 6.0, third),
        3 => {
            rule.points.push([third, third, third]);
            rule.weights.push(-0.5625);
            orbit3(&mut rule, 0.2, 25.0 / 48.0);
        }
        4 => {
            orbit3(&mut rule, 0.445_948_490_915_964_89, 0.223_381_589_678_011_47);
            orbit3(&mut rule, 0.091_576_213_509_770_743, 0.109_951_743_655_321_87);
        }
        5 => {
            rule.points.push([third, third, third]);
            rule.weights.push(0.225);
            let s15 = 15.0_f64.sqrt();
            orbit3(&mut rule, (6.0 - s15) / 21.0, (155.0 - s15) / 1200.0);
            orbit3(&mut rule, (6.0 + s15) / 21.0, (155.0 + s15) / 1200.0);
        }
        6 => {
            orbit3(&mut rule, 0.249_286_745_170_910_42, 0.116_786_275_726_379_37);
            orbit3(&mut rule, 0.063_089_014_491_502_228, 0.050_844_906_370_206_817);
            orbit6(
                &mut rule,
                0.053_145_049_844_816_947,
                0.310_352_451_033_784_41,
                0.082_851_075_618_373_575,
            );
        }
        other => return Err(Error::UnsupportedQuadratureDegree(other)),
    }
    Ok(rule)
}

/// Values and reference gradients of all local basis functions at a
/// barycentric point. Gradients are with respect to the reference triangle
/// `(0,0), (1,0), (0,1)` where `l1 = 1 - x - y`, `l2 = x`, `l3 = y`.
pub fn eval_basis(family: ElementFamily, bary: [f64; 3]) -> Result<(Vec<f64>, Vec<[f64; 2]>)> {
    let [l1, l2, l3] = bary;
    // reference gradients of the barycentric coordinates
    const DL: [[f64; 2]; 3] = [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]];
    match family {
        ElementFamily::LagrangeP0 => Ok((vec![1.0], vec![[0.0, 0.0]])),
        ElementFamily::LagrangeP1 => Ok((vec![l1, l2, l3], DL.to_vec())),
        ElementFamily::LagrangeP2 => {
            let l = [l1, l2, l3];
            let mut values = Vec::with_capacity(6);
            let mut grads = Vec::with_capacity(6);
            for i in 0..3 {
                values.push(l[i] * (2.0 * l[i] - 1.0));
                grads.push([
                    (4.0 * l[i] - 1.0) * DL[i][0],
                    (4.0 * l[i] - 1.0) * DL[i][1],
                ]);
            }
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                values.push(4.0 * l[i] * l[j]);
                grads.push([
                    4.0 * (l[i] * DL[j][0] + l[j] * DL[i][0]),
                    4.0 * (l[i] * DL[j][1] + l[j] * DL[i][1]),
                ]);
            }
            Ok((values, grads))
        }
        ElementFamily::LagrangeP3 => {
            let l = [l1, l2, l3];
            let mut values = Vec::with_capacity(10);
            let mut grads = Vec::with_capacity(10);
            for i in 0..3 {
                let li = l[i];
                values.push(0.5 * li * (3.0 * li - 1.0) * (3.0 * li - 2.0));
                let d = 0.5 * (27.0 * li * li - 18.0 * li + 2.0);
                grads.push([d * DL[i][0], d * DL[i][1]]);
            }
            // two per edge: the first is the node at 2/3 toward vertex i
            for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                for (p, q) in [(i, j), (j, i)] {
                    values.push(4.5 * l[p] * l[q] * (3.0 * l[p] - 1.0));
                    let dp = 4.5 * l[q] * (6.0 * l[p] - 1.0);
                    let dq = 4.5 * l[p] * (3.0 * l[p] - 1.0);
                    grads.push([
                        dp * DL[p][0] + dq * DL[q][0],
                        dp * DL[p][1] + dq * DL[q][1],
                    ]);
                }
            }
            values.push(27.0 * l1 * l2 * l3);
            grads.push([
                27.0 * (l2 * l3 * DL[0][0] + l1 * l3 * DL[1][0] + l1 * l2 * DL[2][0]),
                27.0 * (l2 * l3 * DL[0][1] + l1 * l3 * DL[1][1] + l1 * l2 * DL[2][1]),
            ]);
            Ok((values, grads))
        }
        ElementFamily::QuadratureEmbedded(_) => Err(Error::NotPointwiseEvaluable(family)),
    }
}

/// Degree-of-freedom layout of a finite element space over a mesh.
#[derive(Debug, Clone)]
pub struct FunctionSpace {
    pub mesh: Arc<Mesh>,
    pub family: ElementFamily,
    pub n_dofs: usize,
    pub dof_coords: Vec<[f64; 2]>,
    /// Per-triangle global DOF indices, matching the local ordering of
    /// [`eval_basis`].
    pub cell_dofs: Vec<Vec<usize>>,
    pub dirichlet_dofs: Vec<usize>,
    /// Lowest-index cell containing each DOF coordinate (owner-element
    /// convention for evaluating discontinuous quantities at shared DOFs).
    pub dof_owner_cell: Vec<usize>,
}

impl FunctionSpace {
    pub fn same_mesh(&self, other: &FunctionSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }

    /// Barycentric coordinates of a DOF within its owner cell.
    pub fn dof_barycentric(&self, dof: usize) -> [f64; 3] {
        let cell = self.dof_owner_cell[dof];
        barycentric_in(&self.mesh, cell, self.dof_coords[dof])
    }
}

pub fn barycentric_in(mesh: &Mesh, cell: usize, p: [f64; 2]) -> [f64; 3] {
    let [a, b, c] = mesh.triangles[cell];
    let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
    let area = crate::mesh::signed_area(va, vb, vc);
    let l1 = crate::mesh::signed_area(p, vb, vc) / area;
    let l2 = crate::mesh::signed_area(va, p, vc) / area;
    [l1, l2, 1.0 - l1 - l2]
}

fn edge_index_map(mesh: &Mesh) -> HashMap<(usize, usize), usize> {
    let mut edges: Vec<(usize, usize)> = mesh
        .edge_adjacency()
        .keys()
        .copied()
        .collect();
    edges.sort_unstable();
    edges.into_iter().enumerate().map(|(i, e)| (e, i)).collect()
}

/// Builds the DOF layout of `family` over `mesh`.
///
/// Continuous families share DOFs across vertices and edges (edge DOFs are
/// numbered by sorted global edge) and carry a Dirichlet DOF list collected
/// from Dirichlet-tagged boundary edges.
pub fn build_space(mesh: Arc<Mesh>, family: ElementFamily) -> Result<FunctionSpace> {
    mesh.validate()?;
    let nv = mesh.n_vertices();
    let nel = mesh.n_triangles();
    let mut dof_coords;
    let mut cell_dofs = Vec::with_capacity(nel);
    let edge_key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };

    match family {
        ElementFamily::LagrangeP0 => {
            dof_coords = Vec::with_capacity(nel);
            for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                dof_coords.push([
                    (va[0] + vb[0] + vc[0]) / 3.0,
                    (va[1] + vb[1] + vc[1]) / 3.0,
                ]);
                cell_dofs.push(vec![t]);
            }
        }
        ElementFamily::LagrangeP1 => {
            dof_coords = mesh.vertices.clone();
            for &[a, b, c] in &mesh.triangles {
                cell_dofs.push(vec![a, b, c]);
            }
        }
        ElementFamily::LagrangeP2 => {
            let edges = edge_index_map(&mesh);
            dof_coords = mesh.vertices.clone();
            dof_coords.resize(nv + edges.len(), [0.0, 0.0]);
            for (&(a, b), &e) in &edges {
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                dof_coords[nv + e] = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            }
            for &[a, b, c] in &mesh.triangles {
                cell_dofs.push(vec![
                    a,
                    b,
                    c,
                    nv + edges[&edge_key(a, b)],
                    nv + edges[&edge_key(b, c)],
                    nv + edges[&edge_key(c, a)],
                ]);
            }
        }
        ElementFamily::LagrangeP3 => {
            let edges = edge_index_map(&mesh);
            let ne = edges.len();
            dof_coords = mesh.vertices.clone();
            dof_coords.resize(nv + 2 * ne + nel, [0.0, 0.0]);
            for (&(a, b), &e) in &edges {
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                // first edge DOF is nearer the smaller-index vertex
                dof_coords[nv + 2 * e] = [
                    (2.0 * pa[0] + pb[0]) / 3.0,
                    (2.0 * pa[1] + pb[1]) / 3.0,
                ];
                dof_coords[nv + 2 * e + 1] = [
                    (pa[0] + 2.0 * pb[0]) / 3.0,
                    (pa[1] + 2.0 * pb[1]) / 3.0,
                ];
            }
            for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
                let verts = [a, b, c];
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                dof_coords[nv + 2 * ne + t] = [
                    (va[0] + vb[0] + vc[0]) / 3.0,
                    (va[1] + vb[1] + vc[1]) / 3.0,
                ];
                let mut dofs = vec![a, b, c];
                for (i, j) in [(0, 1), (1, 2), (2, 0)] {
                    let (gi, gj) = (verts[i], verts[j]);
                    let e = edges[&edge_key(gi, gj)];
                    // local order: node at 2/3 toward local vertex i first
                    if gi < gj {
                        dofs.push(nv + 2 * e);
                        dofs.push(nv + 2 * e + 1);
                    } else {
                        dofs.push(nv + 2 * e + 1);
                        dofs.push(nv + 2 * e);
                    }
                }
                dofs.push(nv + 2 * ne + t);
                cell_dofs.push(dofs);
            }
        }
        ElementFamily::QuadratureEmbedded(k) => {
            let rule = dunavant_rule(k)?;
            let nq = rule.points.len();
            dof_coords = Vec::with_capacity(nq * nel);
            for (t, &[a, b, c]) in mesh.triangles.iter().enumerate() {
                let (va, vb, vc) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
                let mut dofs = Vec::with_capacity(nq);
                for (q, bary) in rule.points.iter().enumerate() {
                    dof_coords.push([
                        bary[0] * va[0] + bary[1] * vb[0] + bary[2] * vc[0],
                        bary[0] * va[1] + bary[1] * vb[1] + bary[2] * vc[1],
                    ]);
                    dofs.push(t * nq + q);
                }
                cell_dofs.push(dofs);
            }
        }
    }

    let n_dofs = dof_coords.len();
    let mut dof_owner_cell = vec![usize::MAX; n_dofs];
    for (t, dofs) in cell_dofs.iter().enumerate() {
        for &d in dofs {
            if dof_owner_cell[d] == usize::MAX {
                dof_owner_cell[d] = t;
            }
        }
    }

    let mut dirichlet_dofs = Vec::new();
    if family.is_continuous() {
        let edges = edge_index_map(&mesh);
        let mut on_boundary = vec![false; n_dofs];
        for &([a, b], tag) in &mesh.boundary_edges {
            if tag != BoundaryTag::Dirichlet {
                continue;
            }
            on_boundary[a] = true;
            on_boundary[b] = true;
            let e = edges[&edge_key(a, b)];
            match family {
                ElementFamily::LagrangeP2 => on_boundary[nv + e] = true,
                ElementFamily::LagrangeP3 => {
                    on_boundary[nv + 2 * e] = true;
                    on_boundary[nv + 2 * e + 1] = true;
                }
                _ => {}
            }
        }
        dirichlet_dofs = on_boundary
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(d, _)| d)
            .collect();
    }

    Ok(FunctionSpace {
        mesh,
        family,
        n_dofs,
        dof_coords,
        cell_dofs,
        dirichlet_dofs,
        dof_owner_cell,
    })
}

/// Nodal interpolant of a spatial function: coefficient vector of the
/// function evaluated at all DOF coordinates.
pub fn interpolate(space: &FunctionSpace, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    space.dof_coords.iter().map(|&x| f(x)).collect()
}
