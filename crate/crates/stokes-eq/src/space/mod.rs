//! Finite element spaces: degrees of freedom and element bases.
//!
//! Supported kinds (all on conforming triangle meshes):
//!
//! * continuous (vector) Lagrange elements of degree 1..3, optionally
//!   enriched by cubic element bubbles,
//! * discontinuous scalar/vector polynomials (degree `-1` is the empty
//!   space, used for projections of negative order),
//! * Raviart--Thomas and Brezzi--Douglas--Marini `H(div)` elements,
//! * piecewise tangential polynomials on facets (hybridization
//!   multipliers),
//! * broken trace-free matrix polynomials stored as three scalar
//!   components `(a, b, c)` representing `[[a, b], [c, -a]]`.
//!
//! Continuity across facets follows from globally defined degrees of
//! freedom: shared Lagrange nodes sit at physical positions agreed between
//! the neighbours, and `H(div)` facet moments are taken against the facet's
//! canonical tangent direction and stored normal.

pub mod basis;

pub use basis::{
    HdivFamily, ScalarElementBasis, ScalarTable, VectorElementBasis, VectorTable,
};

use crate::mesh::{Mesh, Point2};
use crate::poly::{legendre01, poly_dim, Barycentric};
use crate::quadrature::{edge_rule, triangle_rule};
use basis::{invert_vandermonde, ScalarSpan, VectorSpan};
use nalgebra::DMatrix;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Continuous vector Lagrange space of the given degree; `bubble` adds
    /// one cubic bubble per component and element (degree must be 2).
    LagrangeVec { degree: usize, bubble: bool },
    /// Continuous scalar Lagrange space.
    LagrangeScalar { degree: usize },
    /// Broken scalar polynomials; degree `-1` is the empty space.
    DgScalar { degree: i32 },
    /// Broken vector polynomials.
    DgVec { degree: i32 },
    /// Raviart--Thomas space of the given degree (`>= 0`).
    Rt { degree: usize },
    /// Brezzi--Douglas--Marini space (`degree >= 1`).
    Bdm { degree: usize },
    /// Tangential vector polynomials on facets: on each facet `q(s) t_F`
    /// with `q` of degree `<= degree`.
    FacetTangential { degree: usize },
    /// Broken trace-free matrix polynomials `[[a, b], [c, -a]]`.
    TraceFreeMatrix { degree: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("unsupported space: {0}")]
    Unsupported(String),
    #[error("element {element}: {msg}")]
    Element { element: usize, msg: String },
}

/// A finite element space over a mesh.
pub struct FESpace {
    pub kind: SpaceKind,
    pub mesh: Arc<Mesh>,
    pub ndofs: usize,
    cell_dofs: Vec<Vec<usize>>,
    scalar_bases: Vec<ScalarElementBasis>,
    vector_bases: Vec<VectorElementBasis>,
    /// Physical positions of scalar Lagrange nodes (empty otherwise).
    pub scalar_nodes: Vec<Point2>,
    pub scalar_node_boundary: Vec<bool>,
    cell_scalar_nodes: Vec<Vec<usize>>,
}

impl FESpace {
    pub fn build(mesh: Arc<Mesh>, kind: SpaceKind) -> Result<FESpace, SpaceError> {
        match kind {
            SpaceKind::LagrangeScalar { degree } | SpaceKind::LagrangeVec { degree, .. } => {
                if degree == 0 || degree > 3 {
                    return Err(SpaceError::Unsupported(format!(
                        "continuous Lagrange degree {degree}"
                    )));
                }
                if let SpaceKind::LagrangeVec { bubble: true, degree } = kind {
                    if degree != 2 {
                        return Err(SpaceError::Unsupported(
                            "bubble enrichment only for degree 2".into(),
                        ));
                    }
                }
                build_lagrange(mesh, kind)
            }
            SpaceKind::DgScalar { degree } | SpaceKind::DgVec { degree } => {
                build_dg(mesh, kind, degree)
            }
            SpaceKind::Rt { degree } => build_hdiv(mesh, kind, degree, HdivFamily::Rt),
            SpaceKind::Bdm { degree } => {
                if degree < 1 {
                    return Err(SpaceError::Unsupported("BDM degree must be >= 1".into()));
                }
                build_hdiv(mesh, kind, degree, HdivFamily::Bdm)
            }
            SpaceKind::FacetTangential { degree } => build_facet_tangential(mesh, degree),
            SpaceKind::TraceFreeMatrix { degree } => build_trace_free(mesh, degree),
        }
    }

    pub fn cell_dofs(&self, e: usize) -> &[usize] {
        &self.cell_dofs[e]
    }

    pub fn scalar_basis(&self, e: usize) -> &ScalarElementBasis {
        &self.scalar_bases[e]
    }

    pub fn vector_basis(&self, e: usize) -> &VectorElementBasis {
        &self.vector_bases[e]
    }

    /// Scalar Lagrange node ids of an element, matching the local basis
    /// order.
    pub fn cell_scalar_nodes(&self, e: usize) -> &[usize] {
        &self.cell_scalar_nodes[e]
    }

    /// Number of dofs per facet for facet-based spaces (`Rt`, `Bdm`,
    /// `FacetTangential`).
    pub fn facet_dof_count(&self) -> usize {
        match self.kind {
            SpaceKind::Rt { degree } | SpaceKind::Bdm { degree } => degree + 1,
            SpaceKind::FacetTangential { degree } => degree + 1,
            _ => 0,
        }
    }

    /// Global dofs attached to a facet for facet-based spaces.
    pub fn facet_dofs(&self, f: usize) -> Vec<usize> {
        let n = self.facet_dof_count();
        (f * n..(f + 1) * n).collect()
    }

    /// Dofs fixed by a homogeneous boundary condition:
    /// nodal dofs on the boundary for Lagrange spaces, boundary facet
    /// moments for `Rt`/`Bdm`/`FacetTangential`.
    pub fn boundary_dofs(&self) -> Vec<usize> {
        match self.kind {
            SpaceKind::LagrangeScalar { .. } => (0..self.scalar_nodes.len())
                .filter(|&i| self.scalar_node_boundary[i])
                .collect(),
            SpaceKind::LagrangeVec { .. } => {
                let mut out = Vec::new();
                for i in 0..self.scalar_nodes.len() {
                    if self.scalar_node_boundary[i] {
                        out.push(2 * i);
                        out.push(2 * i + 1);
                    }
                }
                out
            }
            SpaceKind::Rt { .. } | SpaceKind::Bdm { .. } | SpaceKind::FacetTangential { .. } => {
                let n = self.facet_dof_count();
                let mut out = Vec::new();
                for &f in &self.mesh.boundary_facets {
                    out.extend(f * n..(f + 1) * n);
                }
                out
            }
            _ => Vec::new(),
        }
    }

    /// Evaluates a coefficient vector of a vector-valued space on element
    /// `e`: values and Jacobians at the given points.
    pub fn eval_vector_function(
        &self,
        coeffs: &[f64],
        e: usize,
        pts: &[Point2],
    ) -> (Vec<[f64; 2]>, Vec<[[f64; 2]; 2]>) {
        match self.kind {
            SpaceKind::Rt { .. } | SpaceKind::Bdm { .. } => {
                let table = self.vector_basis(e).table(pts);
                let dofs = self.cell_dofs(e);
                let vals = table
                    .values
                    .iter()
                    .map(|row| {
                        let mut v = [0.0; 2];
                        for (j, &d) in dofs.iter().enumerate() {
                            v[0] += coeffs[d] * row[j][0];
                            v[1] += coeffs[d] * row[j][1];
                        }
                        v
                    })
                    .collect();
                let grads = table
                    .grads
                    .iter()
                    .map(|row| {
                        let mut g = [[0.0; 2]; 2];
                        for (j, &d) in dofs.iter().enumerate() {
                            for r in 0..2 {
                                for s in 0..2 {
                                    g[r][s] += coeffs[d] * row[j][r][s];
                                }
                            }
                        }
                        g
                    })
                    .collect();
                (vals, grads)
            }
            SpaceKind::LagrangeVec { .. } | SpaceKind::DgVec { .. } => {
                let table = self.scalar_basis(e).table(pts);
                let dofs = self.cell_dofs(e);
                let nloc = table.values[0].len();
                let vals = table
                    .values
                    .iter()
                    .map(|row| {
                        let mut v = [0.0; 2];
                        for i in 0..nloc {
                            v[0] += coeffs[dofs[2 * i]] * row[i];
                            v[1] += coeffs[dofs[2 * i + 1]] * row[i];
                        }
                        v
                    })
                    .collect();
                let grads = table
                    .grads
                    .iter()
                    .map(|row| {
                        let mut g = [[0.0; 2]; 2];
                        for i in 0..nloc {
                            for s in 0..2 {
                                g[0][s] += coeffs[dofs[2 * i]] * row[i][s];
                                g[1][s] += coeffs[dofs[2 * i + 1]] * row[i][s];
                            }
                        }
                        g
                    })
                    .collect();
                (vals, grads)
            }
            _ => panic!("eval_vector_function on a non-vector space"),
        }
    }

    /// Evaluates a trace-free matrix coefficient vector on element `e`.
    pub fn eval_matrix_function(
        &self,
        coeffs: &[f64],
        e: usize,
        pts: &[Point2],
    ) -> Vec<[[f64; 2]; 2]> {
        let SpaceKind::TraceFreeMatrix { .. } = self.kind else {
            panic!("eval_matrix_function on a non-matrix space");
        };
        let table = self.scalar_basis(e).table(pts);
        let dofs = self.cell_dofs(e);
        let nk = table.values[0].len();
        table
            .values
            .iter()
            .map(|row| {
                let mut m = [[0.0; 2]; 2];
                for i in 0..nk {
                    let a = coeffs[dofs[i]];
                    let b = coeffs[dofs[nk + i]];
                    let c = coeffs[dofs[2 * nk + i]];
                    m[0][0] += a * row[i];
                    m[0][1] += b * row[i];
                    m[1][0] += c * row[i];
                    m[1][1] -= a * row[i];
                }
                m
            })
            .collect()
    }

    /// Local dof count per element.
    pub fn cell_dof_count(&self, e: usize) -> usize {
        self.cell_dofs[e].len()
    }

    /// Interior moment fields of the `H(div)` dof set of element `e`
    /// (empty for other kinds). Their order matches the element's interior
    /// dofs.
    pub fn interior_moments(&self, e: usize) -> Vec<Box<dyn Fn(Point2) -> [f64; 2]>> {
        let (degree, family) = match self.kind {
            SpaceKind::Rt { degree } => (degree, HdivFamily::Rt),
            SpaceKind::Bdm { degree } => (degree, HdivFamily::Bdm),
            _ => return Vec::new(),
        };
        interior_moment_fields(
            family,
            degree,
            self.mesh.element_centroid(e),
            self.mesh.element_diameters[e],
            &self.mesh.element_coords(e),
        )
    }
}

/// Tangential facet basis function `q = legendre01(moment, s) t_F`
/// evaluated at the facet parameter `s in [0, 1]` (canonical direction).
pub fn facet_tangential_value(mesh: &Mesh, f: usize, moment: usize, s: f64) -> [f64; 2] {
    let t = mesh.facets[f].tangent;
    let q = legendre01(moment, s);
    [q * t[0], q * t[1]]
}

fn lagrange_scalar_nodes(
    mesh: &Mesh,
    degree: usize,
    interior_per_cell: usize,
) -> (Vec<Point2>, Vec<bool>, Vec<Vec<usize>>) {
    let nv = mesh.num_vertices();
    let nf = mesh.num_facets();
    let per_edge = degree - 1;
    let mut nodes = Vec::new();
    let mut boundary = Vec::new();
    for v in 0..nv {
        nodes.push(mesh.vertices[v]);
        boundary.push(mesh.boundary_vertex[v]);
    }
    for f in 0..nf {
        let fa = &mesh.facets[f];
        let a = mesh.vertices[fa.vertices[0]];
        let b = mesh.vertices[fa.vertices[1]];
        for j in 1..=per_edge {
            let t = j as f64 / degree as f64;
            nodes.push(Point2::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
            boundary.push(fa.is_boundary());
        }
    }
    let interior_offset = nodes.len();
    for e in 0..mesh.num_elements() {
        for _ in 0..interior_per_cell {
            nodes.push(mesh.element_centroid(e));
            boundary.push(false);
        }
    }

    let mut cell_nodes = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let t = mesh.triangles[e];
        let mut local = Vec::new();
        local.extend_from_slice(&t);
        for lf in 0..3 {
            let f = mesh.element_facets[e][lf];
            for j in 0..per_edge {
                local.push(nv + f * per_edge + j);
            }
        }
        for j in 0..interior_per_cell {
            local.push(interior_offset + e * interior_per_cell + j);
        }
        cell_nodes.push(local);
    }
    (nodes, boundary, cell_nodes)
}

fn build_lagrange(mesh: Arc<Mesh>, kind: SpaceKind) -> Result<FESpace, SpaceError> {
    let (degree, bubble, vector) = match kind {
        SpaceKind::LagrangeScalar { degree } => (degree, false, false),
        SpaceKind::LagrangeVec { degree, bubble } => (degree, bubble, true),
        _ => unreachable!(),
    };
    // Interior nodes: the P3 lattice has one (the centroid); the bubble
    // enrichment also carries one centroid dof.
    let interior_per_cell = match (degree, bubble) {
        (3, _) => 1,
        (2, true) => 1,
        _ => 0,
    };
    let (nodes, boundary, cell_nodes) = lagrange_scalar_nodes(&mesh, degree, interior_per_cell);

    let mut scalar_bases = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let coords = mesh.element_coords(e);
        let span = if bubble {
            ScalarSpan::with_bubble(
                mesh.element_centroid(e),
                mesh.element_diameters[e],
                degree as i32,
                &coords,
            )
        } else {
            ScalarSpan::new(
                mesh.element_centroid(e),
                mesh.element_diameters[e],
                degree as i32,
            )
        };
        let dim = span.dim();
        let local = &cell_nodes[e];
        assert_eq!(local.len(), dim, "Lagrange node count mismatch");
        let mut v = DMatrix::zeros(dim, dim);
        let mut vals = vec![0.0; dim];
        for (i, &node) in local.iter().enumerate() {
            span.eval(nodes[node], &mut vals);
            for j in 0..dim {
                v[(i, j)] = vals[j];
            }
        }
        let coeff = invert_vandermonde(v)
            .map_err(|msg| SpaceError::Element { element: e, msg })?;
        scalar_bases.push(ScalarElementBasis {
            span,
            coeff: Some(coeff),
        });
    }

    let cell_dofs: Vec<Vec<usize>> = cell_nodes
        .iter()
        .map(|local| {
            if vector {
                local
                    .iter()
                    .flat_map(|&n| [2 * n, 2 * n + 1])
                    .collect()
            } else {
                local.clone()
            }
        })
        .collect();
    let ndofs = if vector { 2 * nodes.len() } else { nodes.len() };

    Ok(FESpace {
        kind,
        mesh,
        ndofs,
        cell_dofs,
        scalar_bases,
        vector_bases: Vec::new(),
        scalar_nodes: nodes,
        scalar_node_boundary: boundary,
        cell_scalar_nodes: cell_nodes,
    })
}

fn build_dg(mesh: Arc<Mesh>, kind: SpaceKind, degree: i32) -> Result<FESpace, SpaceError> {
    let vector = matches!(kind, SpaceKind::DgVec { .. });
    let nk = poly_dim(degree);
    let per_cell = if vector { 2 * nk } else { nk };
    let mut scalar_bases = Vec::with_capacity(mesh.num_elements());
    let mut cell_dofs = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let span = ScalarSpan::new(
            mesh.element_centroid(e),
            mesh.element_diameters[e],
            degree,
        );
        scalar_bases.push(ScalarElementBasis { span, coeff: None });
        cell_dofs.push((e * per_cell..(e + 1) * per_cell).collect());
    }
    Ok(FESpace {
        kind,
        mesh: mesh.clone(),
        ndofs: per_cell * mesh.num_elements(),
        cell_dofs,
        scalar_bases,
        vector_bases: Vec::new(),
        scalar_nodes: Vec::new(),
        scalar_node_boundary: Vec::new(),
        cell_scalar_nodes: Vec::new(),
    })
}

fn build_trace_free(mesh: Arc<Mesh>, degree: usize) -> Result<FESpace, SpaceError> {
    let nk = poly_dim(degree as i32);
    let per_cell = 3 * nk;
    let mut scalar_bases = Vec::with_capacity(mesh.num_elements());
    let mut cell_dofs = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let span = ScalarSpan::new(
            mesh.element_centroid(e),
            mesh.element_diameters[e],
            degree as i32,
        );
        scalar_bases.push(ScalarElementBasis { span, coeff: None });
        cell_dofs.push((e * per_cell..(e + 1) * per_cell).collect());
    }
    Ok(FESpace {
        kind: SpaceKind::TraceFreeMatrix { degree },
        mesh: mesh.clone(),
        ndofs: per_cell * mesh.num_elements(),
        cell_dofs,
        scalar_bases,
        vector_bases: Vec::new(),
        scalar_nodes: Vec::new(),
        scalar_node_boundary: Vec::new(),
        cell_scalar_nodes: Vec::new(),
    })
}

fn build_facet_tangential(mesh: Arc<Mesh>, degree: usize) -> Result<FESpace, SpaceError> {
    let n = degree + 1;
    let cell_dofs = (0..mesh.num_elements())
        .map(|e| {
            mesh.element_facets[e]
                .iter()
                .flat_map(|&f| f * n..(f + 1) * n)
                .collect()
        })
        .collect();
    Ok(FESpace {
        kind: SpaceKind::FacetTangential { degree },
        mesh: mesh.clone(),
        ndofs: n * mesh.num_facets(),
        cell_dofs,
        scalar_bases: Vec::new(),
        vector_bases: Vec::new(),
        scalar_nodes: Vec::new(),
        scalar_node_boundary: Vec::new(),
        cell_scalar_nodes: Vec::new(),
    })
}

/// Interior moment test fields for the `H(div)` interpolations.
///
/// * RT(k): all of `P_{k-1}^2`.
/// * BDM(k): gradients of `P_{k-1} \ P_0` plus `curl(bubble * P_{k-2})`.
///
/// Returns the fields as closures evaluating at physical points.
#[allow(clippy::type_complexity)]
fn interior_moment_fields(
    family: HdivFamily,
    degree: usize,
    center: Point2,
    h: f64,
    coords: &[Point2; 3],
) -> Vec<Box<dyn Fn(Point2) -> [f64; 2]>> {
    let mut fields: Vec<Box<dyn Fn(Point2) -> [f64; 2]>> = Vec::new();
    let inv_h = 1.0 / h;
    match family {
        HdivFamily::Rt => {
            for &(a, b) in &crate::poly::monomial_exponents(degree as i32 - 1) {
                let f = move |p: Point2| {
                    let x = (p.x - center.x) * inv_h;
                    let y = (p.y - center.y) * inv_h;
                    x.powi(a as i32) * y.powi(b as i32)
                };
                fields.push(Box::new(move |p| [f(p), 0.0]));
                let f = move |p: Point2| {
                    let x = (p.x - center.x) * inv_h;
                    let y = (p.y - center.y) * inv_h;
                    x.powi(a as i32) * y.powi(b as i32)
                };
                fields.push(Box::new(move |p| [0.0, f(p)]));
            }
        }
        HdivFamily::Bdm => {
            // Gradients of the non-constant monomials up to degree k-1.
            for &(a, b) in crate::poly::monomial_exponents(degree as i32 - 1)
                .iter()
                .skip(1)
            {
                fields.push(Box::new(move |p: Point2| {
                    let x = (p.x - center.x) * inv_h;
                    let y = (p.y - center.y) * inv_h;
                    let dx = if a == 0 {
                        0.0
                    } else {
                        a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32) * inv_h
                    };
                    let dy = if b == 0 {
                        0.0
                    } else {
                        b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1) * inv_h
                    };
                    [dx, dy]
                }));
            }
            // curl(bubble * m~) for m~ up to degree k-2.
            let bc = Barycentric::new(coords);
            for &(a, b) in &crate::poly::monomial_exponents(degree as i32 - 2) {
                fields.push(Box::new(move |p: Point2| {
                    let x = (p.x - center.x) * inv_h;
                    let y = (p.y - center.y) * inv_h;
                    let m = x.powi(a as i32) * y.powi(b as i32);
                    let dmx = if a == 0 {
                        0.0
                    } else {
                        a as f64 * x.powi(a as i32 - 1) * y.powi(b as i32) * inv_h
                    };
                    let dmy = if b == 0 {
                        0.0
                    } else {
                        b as f64 * x.powi(a as i32) * y.powi(b as i32 - 1) * inv_h
                    };
                    let (bub, gb) = bc.bubble(p);
                    // curl(g) = (dg/dy, -dg/dx) for g = bubble * m~.
                    [gb[1] * m + bub * dmy, -(gb[0] * m + bub * dmx)]
                }));
            }
        }
    }
    fields
}

fn build_hdiv(
    mesh: Arc<Mesh>,
    kind: SpaceKind,
    degree: usize,
    family: HdivFamily,
) -> Result<FESpace, SpaceError> {
    let per_facet = degree + 1;
    let n_interior = match family {
        HdivFamily::Rt => 2 * poly_dim(degree as i32 - 1),
        HdivFamily::Bdm => poly_dim(degree as i32 - 1).saturating_sub(1) + poly_dim(degree as i32 - 2),
    };
    let facet_block = per_facet * mesh.num_facets();
    let ndofs = facet_block + n_interior * mesh.num_elements();

    let erule = edge_rule(2 * degree + 2);
    let trule = triangle_rule(2 * degree + 2).expect("volume rule");

    let mut vector_bases = Vec::with_capacity(mesh.num_elements());
    let mut cell_dofs = Vec::with_capacity(mesh.num_elements());
    for e in 0..mesh.num_elements() {
        let coords = mesh.element_coords(e);
        let center = mesh.element_centroid(e);
        let h = mesh.element_diameters[e];
        let span = VectorSpan::new(center, h, degree, family);
        let dim = span.dim();

        let mut dofs = Vec::with_capacity(dim);
        let mut v = DMatrix::zeros(dim, dim);
        let mut sv = vec![[0.0; 2]; dim];
        let mut sd = vec![0.0; dim];
        let mut sg = vec![[[0.0; 2]; 2]; dim];

        let mut row = 0;
        for lf in 0..3 {
            let f = mesh.element_facets[e][lf];
            let fa = &mesh.facets[f];
            let a = mesh.vertices[fa.vertices[0]];
            let b = mesh.vertices[fa.vertices[1]];
            let (pts, w) = erule.on_segment(a, b);
            for q in 0..per_facet {
                for ((&s, &wq), &p) in erule.points.iter().zip(&w).zip(&pts) {
                    span.eval(p, &mut sv, &mut sd, &mut sg);
                    let lq = legendre01(q, s);
                    for j in 0..dim {
                        v[(row, j)] +=
                            wq * lq * (sv[j][0] * fa.normal[0] + sv[j][1] * fa.normal[1]);
                    }
                }
                dofs.push(f * per_facet + q);
                row += 1;
            }
        }

        let fields = interior_moment_fields(family, degree, center, h, &coords);
        assert_eq!(fields.len(), n_interior, "interior moment count mismatch");
        let (pts, w) = trule.on_triangle(&coords);
        for (j_int, field) in fields.iter().enumerate() {
            for (&p, &wq) in pts.iter().zip(&w) {
                span.eval(p, &mut sv, &mut sd, &mut sg);
                let fv = field(p);
                for j in 0..dim {
                    v[(row, j)] += wq * (sv[j][0] * fv[0] + sv[j][1] * fv[1]);
                }
            }
            dofs.push(facet_block + e * n_interior + j_int);
            row += 1;
        }
        assert_eq!(row, dim, "dof count != span dimension");

        let coeff = invert_vandermonde(v)
            .map_err(|msg| SpaceError::Element { element: e, msg })?;
        vector_bases.push(VectorElementBasis { span, coeff });
        cell_dofs.push(dofs);
    }

    Ok(FESpace {
        kind,
        mesh,
        ndofs,
        cell_dofs,
        scalar_bases: Vec::new(),
        vector_bases,
        scalar_nodes: Vec::new(),
        scalar_node_boundary: Vec::new(),
        cell_scalar_nodes: Vec::new(),
    })
}

/// Element-local `P_k` nodal (lattice) basis: vertices, `k-1` nodes per
/// edge in canonical facet direction, and the centroid for `k = 3`.
/// Returns the node positions and the nodal basis.
pub fn local_lagrange_basis(mesh: &Mesh, e: usize, degree: usize) -> (Vec<Point2>, ScalarElementBasis) {
    assert!((1..=3).contains(&degree));
    let coords = mesh.element_coords(e);
    let t = mesh.triangles[e];
    let mut nodes: Vec<Point2> = coords.to_vec();
    for lf in 0..3 {
        let f = mesh.element_facets[e][lf];
        let fa = &mesh.facets[f];
        let a = mesh.vertices[fa.vertices[0]];
        let b = mesh.vertices[fa.vertices[1]];
        for j in 1..degree {
            let s = j as f64 / degree as f64;
            nodes.push(Point2::new(a.x + s * (b.x - a.x), a.y + s * (b.y - a.y)));
        }
    }
    if degree == 3 {
        nodes.push(mesh.element_centroid(e));
    }
    let _ = t;
    let span = ScalarSpan::new(mesh.element_centroid(e), mesh.element_diameters[e], degree as i32);
    let dim = span.dim();
    assert_eq!(nodes.len(), dim);
    let mut v = DMatrix::zeros(dim, dim);
    let mut vals = vec![0.0; dim];
    for (i, &p) in nodes.iter().enumerate() {
        span.eval(p, &mut vals);
        for j in 0..dim {
            v[(i, j)] = vals[j];
        }
    }
    let coeff = invert_vandermonde(v).expect("lattice Vandermonde");
    (
        nodes,
        ScalarElementBasis {
            span,
            coeff: Some(coeff),
        },
    )
}
