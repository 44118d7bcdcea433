use super::*;

fn assert_valid(mesh: &Mesh) {
    let v = mesh.validate();
    assert!(v.is_empty(), "mesh violations: {v:?}");
}

#[test]
fn unit_square_counts() {
    let m = unit_square_mesh(1);
    assert_eq!(m.num_vertices(), 4);
    assert_eq!(m.num_elements(), 2);
    assert_eq!(m.num_facets(), 5);
    assert_valid(&m);

    let m = unit_square_mesh(2);
    assert_eq!(m.num_vertices(), 9);
    assert_eq!(m.num_elements(), 8);
    assert_eq!(m.num_facets(), 16);
    assert_valid(&m);
}

#[test]
fn unit_square_nodes_and_diameter() {
    let m = unit_square_mesh(4);
    for p in &m.vertices {
        let fx = p.x * 4.0;
        let fy = p.y * 4.0;
        assert!((fx - fx.round()).abs() < 1e-14);
        assert!((fy - fy.round()).abs() < 1e-14);
    }
    let h = m.max_diameter();
    assert!((h - 2.0_f64.sqrt() / 4.0).abs() < 1e-14, "h = {h}");
    assert!((m.area() - 1.0).abs() < 1e-14);
}

#[test]
fn l_shape_counts_and_geometry() {
    let m = l_shape_mesh(1);
    assert_eq!(m.num_vertices(), 8);
    assert_eq!(m.num_elements(), 6);
    assert_eq!(m.num_facets(), 13);
    assert_valid(&m);

    let corner = m
        .vertices
        .iter()
        .position(|p| p.x.abs() < 1e-14 && p.y.abs() < 1e-14)
        .expect("reentrant corner vertex missing");
    assert!(m.boundary_vertex[corner]);

    let m2 = l_shape_mesh(2);
    assert!((m2.area() - 3.0).abs() < 1e-14);
    assert_valid(&m2);
}

#[test]
fn barycentric_refine_counts_and_area() {
    let m = unit_square_mesh(1);
    let b = m.barycentric_refine();
    assert_eq!(b.num_elements(), 6);
    assert_eq!(b.num_vertices(), 6);
    assert!((b.area() - m.area()).abs() < 1e-13);
    assert_valid(&b);
    assert_eq!(b.parents.as_ref().unwrap().len(), 6);

    let m = l_shape_mesh(2);
    let b = m.barycentric_refine();
    assert_eq!(b.num_elements(), 3 * m.num_elements());
    assert!((b.area() - m.area()).abs() < 1e-13);
    assert_valid(&b);
}

#[test]
fn refine_marked_all_and_empty() {
    let m = unit_square_mesh(2);
    let all: Vec<usize> = (0..m.num_elements()).collect();
    let r = m.refine_marked(&all);
    assert!(r.num_elements() >= 2 * m.num_elements());
    assert_valid(&r);
    assert!((r.area() - m.area()).abs() < 1e-12);

    let e = m.refine_marked(&[]);
    assert_eq!(e.num_elements(), m.num_elements());
    assert_eq!(e.num_vertices(), m.num_vertices());
}

#[test]
fn refine_single_marked_is_conforming() {
    let m = unit_square_mesh(2);
    let r = m.refine_marked(&[3]);
    assert_valid(&r);
    assert!(r.num_elements() > m.num_elements());
    // The marked element itself must be gone (bisected at least once).
    let parents = r.parents.as_ref().unwrap();
    let children: Vec<usize> = parents
        .iter()
        .enumerate()
        .filter(|(_, &p)| p == 3)
        .map(|(c, _)| c)
        .collect();
    assert!(children.len() >= 2);
}

#[test]
fn refine_uniform_quadruples_and_halves_h() {
    let m = unit_square_mesh(1);
    let r = m.refine_uniform();
    assert_eq!(r.num_elements(), 4 * m.num_elements());
    assert!((r.max_diameter() - m.max_diameter() / 2.0).abs() < 1e-14);
    assert_valid(&r);
}

#[test]
fn repeated_adaptive_refinement_stays_valid() {
    let mut m = l_shape_mesh(1);
    for round in 0..6 {
        // Mark elements nearest the reentrant corner plus a rotating extra.
        let mut marked: Vec<usize> = (0..m.num_elements())
            .filter(|&e| {
                let c = m.element_centroid(e);
                (c.x * c.x + c.y * c.y).sqrt() < 0.5
            })
            .collect();
        marked.push(round % m.num_elements());
        let r = m.refine_marked(&marked);
        assert_valid(&r);
        assert!((r.area() - 3.0).abs() < 1e-12 * 3.0);
        m = r;
    }
    assert!(m.num_elements() > 100);
}

#[test]
fn validate_detects_clockwise_triangle() {
    let mut m = unit_square_mesh(1);
    m.triangles[0].swap(0, 1);
    let violations = m.validate();
    assert!(
        violations.iter().any(|v| v.0.contains("counter-clockwise")),
        "{violations:?}"
    );
}

#[test]
fn clean_meshes_validate() {
    assert_valid(&unit_square_mesh(3));
    assert_valid(&l_shape_mesh(3));
}

#[test]
fn patch_of_square_corner_and_center() {
    let m = unit_square_mesh(1);
    // Corner (0,0) belongs to both triangles.
    let corner = m
        .vertices
        .iter()
        .position(|p| p.x.abs() < 1e-14 && p.y.abs() < 1e-14)
        .unwrap();
    let patch = m.vertex_patch(corner);
    assert_eq!(patch.elements.len(), 2);
    assert!(patch.is_boundary_vertex);

    let m = unit_square_mesh(2);
    let center = m
        .vertices
        .iter()
        .position(|p| (p.x - 0.5).abs() < 1e-14 && (p.y - 0.5).abs() < 1e-14)
        .unwrap();
    let patch = m.vertex_patch(center);
    // Oracle: brute-force incidence scan.
    let expected: Vec<usize> = (0..m.num_elements())
        .filter(|&e| m.triangles[e].contains(&center))
        .collect();
    assert_eq!(patch.elements.len(), expected.len());
    let mut sorted = patch.elements.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, expected);
    assert!(!patch.is_boundary_vertex);

    // Interior patch boundary facets form a closed loop: each patch-boundary
    // facet has exactly one adjacent element inside the patch, and the
    // boundary facets' vertices each appear exactly twice.
    let boundary: Vec<usize> = patch
        .facets
        .iter()
        .copied()
        .filter(|&f| !m.facets[f].vertices.contains(&center))
        .collect();
    let mut vertex_count: HashMap<usize, usize> = HashMap::new();
    for &f in &boundary {
        for &v in &m.facets[f].vertices {
            *vertex_count.entry(v).or_insert(0) += 1;
        }
    }
    assert!(vertex_count.values().all(|&c| c == 2), "{vertex_count:?}");

    // Boundary midpoint vertex.
    let mid = m
        .vertices
        .iter()
        .position(|p| (p.x - 0.5).abs() < 1e-14 && p.y.abs() < 1e-14)
        .unwrap();
    assert!(m.vertex_patch(mid).is_boundary_vertex);
}

#[test]
fn patch_elements_all_contain_vertex_and_are_ordered() {
    let m = l_shape_mesh(2).refine_uniform();
    for v in 0..m.num_vertices() {
        let p = m.vertex_patch(v);
        for &e in &p.elements {
            assert!(m.triangles[e].contains(&v));
        }
        // Consecutive patch elements share a spoke facet.
        for w in p.elements.windows(2) {
            let shared = m.element_facets[w[0]]
                .iter()
                .any(|f| m.element_facets[w[1]].contains(f));
            assert!(shared, "walk not contiguous at vertex {v}");
        }
        assert!(p.diameter > 0.0);
    }
}

#[test]
fn interior_normals_consistent_with_geometry() {
    let m = l_shape_mesh(2).refine_uniform();
    for f in &m.facets {
        if f.is_boundary() {
            continue;
        }
        // Outward normal of the right element must equal minus the stored one.
        let n_right = {
            let e = f.right;
            let t = m.triangles[e];
            let opp = *t
                .iter()
                .find(|&&v| v != f.vertices[0] && v != f.vertices[1])
                .unwrap();
            let po = m.vertices[opp];
            let d = [f.midpoint.x - po.x, f.midpoint.y - po.y];
            let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
            // Not normalized the same way; only the direction matters.
            [d[0] / len, d[1] / len]
        };
        assert!(
            n_right[0] * f.normal[0] + n_right[1] * f.normal[1] < 0.0,
            "stored normal must point into the right element"
        );
    }
}

#[test]
fn area_invariant_under_refinement() {
    let mut m = unit_square_mesh(2);
    let a0 = m.area();
    for _ in 0..4 {
        m = m.refine_marked(&[0, 1, 2]);
        assert!((m.area() - a0).abs() < 1e-12 * a0);
    }
}

#[test]
fn text_roundtrip() {
    let m = l_shape_mesh(2);
    let text = m.to_text();
    let m2 = Mesh::from_text(&text).unwrap();
    assert_eq!(m2.num_vertices(), m.num_vertices());
    assert_eq!(m2.num_elements(), m.num_elements());
    assert_eq!(m2.num_facets(), m.num_facets());
    assert_eq!(m2.boundary_facets.len(), m.boundary_facets.len());
    for (p, q) in m.vertices.iter().zip(&m2.vertices) {
        assert!(p.dist(q) < 1e-15);
    }
    assert!(Mesh::from_text("garbage").is_err());
}

#[test]
fn shape_regularity_bounded_under_bisection() {
    // Newest-vertex bisection keeps a bounded number of similarity classes;
    // check the minimal angle does not degrade over repeated refinements.
    let min_angle = |m: &Mesh| -> f64 {
        let mut worst = f64::MAX;
        for e in 0..m.num_elements() {
            let [p0, p1, p2] = m.element_coords(e);
            let d = [p0.dist(&p1), p1.dist(&p2), p2.dist(&p0)];
            let area = m.element_area(e);
            for i in 0..3 {
                let a = d[i];
                let b = d[(i + 1) % 3];
                let angle = (2.0 * area / (a * b)).asin();
                worst = worst.min(angle);
            }
        }
        worst
    };
    let mut m = unit_square_mesh(1);
    let a0 = min_angle(&m);
    for i in 0..7 {
        let marked: Vec<usize> = (0..m.num_elements()).filter(|e| e % 3 == i % 3).collect();
        m = m.refine_marked(&marked);
    }
    assert!(min_angle(&m) >= a0 / 2.0 - 1e-12);
}
