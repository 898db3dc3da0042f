//! O-grid mesher for a unit cell with one star-shaped inclusion.
//!
//! Layout: a square core grid around the cell centre, `m_i` ring layers out
//! to the interface curve and `m_o` ring layers out to the cell boundary.
//! Every ring has `4q` vertices; vertex `k` sits on the ray towards curve
//! parameter `t_k = -1/8 + k / (4q)`, so `k = 0` faces the lower-right corner.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use super::{ElementKind, Mesh, PeriodicPair};
use crate::error::{Error, Result};
use crate::geometry::{Circle, ClosedCurve, PeriodicSpline, Point, CELL_CENTER};
use crate::morph::parent_spline;

const MIN_INTERFACE_NODES: usize = 16;

/// Layer counts chosen by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParentLayout {
    pub divisions: usize,
    pub inner_layers: usize,
    pub outer_layers: usize,
}

pub fn build_parent_disk_mesh(radius: f64, refinement: usize) -> Result<Mesh> {
    if !(radius > 0.0 && radius < 0.5) {
        return Err(Error::InvalidArgument(format!(
            "inclusion radius must lie in (0, 0.5), got {radius}"
        )));
    }
    build_parent_mesh(&Circle::centered(radius), refinement, ElementKind::Tri6).map(|(m, _)| m)
}

pub fn build_parent_spline_mesh(refinement: usize) -> Result<Mesh> {
    let spline: PeriodicSpline = parent_spline()?;
    build_parent_mesh(&spline, refinement, ElementKind::Tri6).map(|(m, _)| m)
}

fn square_boundary_point(k: usize, q: usize, coord: &[f64]) -> Point {
    let (side, j) = (k / q, k % q);
    match side {
        0 => [1.0, coord[j]],
        1 => [coord[q - j], 1.0],
        2 => [0.0, coord[q - j]],
        _ => [coord[j], 0.0],
    }
}

fn core_boundary_index(k: usize, q: usize) -> (usize, usize) {
    let (side, j) = (k / q, k % q);
    match side {
        0 => (q, j),
        1 => (q - j, q),
        2 => (0, q - j),
        _ => (j, 0),
    }
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Meshes the unit cell around `curve` with `divisions` segments per cell
/// side. `kind` must be a triangle kind.
pub fn build_parent_mesh<C: ClosedCurve + ?Sized>(
    curve: &C,
    divisions: usize,
    kind: ElementKind,
) -> Result<(Mesh, ParentLayout)> {
    if kind == ElementKind::Quad4 {
        return Err(Error::InvalidArgument("parent meshes use triangles".into()));
    }
    let q = divisions;
    if q < 2 {
        return Err(Error::Mesh(format!("refinement {q} too coarse")));
    }
    let ring = 4 * q;
    let interface_count = if kind == ElementKind::Tri6 { 2 * ring } else { ring };
    if interface_count < MIN_INTERFACE_NODES {
        return Err(Error::Mesh(format!(
            "refinement {q} gives {interface_count} interface nodes, need at least {MIN_INTERFACE_NODES}"
        )));
    }

    let t_of = |k: f64| -0.125 + k / ring as f64;
    let iface: Vec<Point> = (0..ring).map(|k| curve.point(t_of(k as f64))).collect();
    let radii: Vec<f64> = iface.iter().map(|p| distance(*p, CELL_CENTER)).collect();
    let r_min = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_mean = radii.iter().sum::<f64>() / ring as f64;
    for p in &iface {
        if p[0] <= 0.0 || p[0] >= 1.0 || p[1] <= 0.0 || p[1] >= 1.0 {
            return Err(Error::InvalidGeometry("interface leaves the unit cell".into()));
        }
    }

    let coord: Vec<f64> = (0..=q).map(|j| j as f64 / q as f64).collect();
    let half = 0.5 * r_min;
    let core_xy = |i: usize| -half + 2.0 * half * i as f64 / q as f64;

    let mut nodes: Vec<Point> = Vec::new();
    let mut core = vec![vec![0usize; q + 1]; q + 1];
    for j in 0..=q {
        for i in 0..=q {
            core[i][j] = nodes.len();
            nodes.push([CELL_CENTER[0] + core_xy(i), CELL_CENTER[1] + core_xy(j)]);
        }
    }

    let inner: Vec<Point> = (0..ring)
        .map(|k| {
            let (i, j) = core_boundary_index(k, q);
            nodes[core[i][j]]
        })
        .collect();
    let outer: Vec<Point> = (0..ring).map(|k| square_boundary_point(k, q, &coord)).collect();
    let h = 2.0 * PI * r_mean / ring as f64;
    let gap_in = (0..ring).map(|k| distance(inner[k], iface[k])).sum::<f64>() / ring as f64;
    let gap_out = (0..ring).map(|k| distance(iface[k], outer[k])).sum::<f64>() / ring as f64;
    let m_i = ((gap_in / h).round() as usize).max(1);
    let m_o = ((gap_out / h).round() as usize).max(1);
    let layers = m_i + m_o;

    // layer_ids[l][k]; layer 0 is the core boundary, layer m_i the interface.
    let mut layer_ids = vec![vec![0usize; ring]; layers + 1];
    for k in 0..ring {
        let (i, j) = core_boundary_index(k, q);
        layer_ids[0][k] = core[i][j];
    }
    for l in 1..=layers {
        for k in 0..ring {
            let p = if l == m_i {
                iface[k]
            } else if l == layers {
                outer[k]
            } else if l < m_i {
                let s = l as f64 / m_i as f64;
                [
                    (1.0 - s) * inner[k][0] + s * iface[k][0],
                    (1.0 - s) * inner[k][1] + s * iface[k][1],
                ]
            } else {
                let s = (l - m_i) as f64 / m_o as f64;
                [
                    (1.0 - s) * iface[k][0] + s * outer[k][0],
                    (1.0 - s) * iface[k][1] + s * outer[k][1],
                ]
            };
            layer_ids[l][k] = nodes.len();
            nodes.push(p);
        }
    }

    let mut tris: Vec<[usize; 3]> = Vec::new();
    let mut fiber = Vec::new();
    let mut matrix = Vec::new();
    let mut push_quad = |quad: [usize; 4], is_fiber: bool, nodes: &[Point], tris: &mut Vec<[usize; 3]>| {
        let [a, b, c, d] = quad;
        let split = if distance(nodes[a], nodes[c]) <= distance(nodes[b], nodes[d]) {
            [[a, b, c], [a, c, d]]
        } else {
            [[a, b, d], [b, c, d]]
        };
        for mut t in split {
            if signed_area(nodes[t[0]], nodes[t[1]], nodes[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
            if is_fiber {
                fiber.push(tris.len());
            } else {
                matrix.push(tris.len());
            }
            tris.push(t);
        }
    };
    for j in 0..q {
        for i in 0..q {
            push_quad(
                [core[i][j], core[i + 1][j], core[i + 1][j + 1], core[i][j + 1]],
                true,
                &nodes,
                &mut tris,
            );
        }
    }
    for l in 0..layers {
        for k in 0..ring {
            let k1 = (k + 1) % ring;
            push_quad(
                [layer_ids[l][k], layer_ids[l][k1], layer_ids[l + 1][k1], layer_ids[l + 1][k]],
                l < m_i,
                &nodes,
                &mut tris,
            );
        }
    }

    let mut interface: Vec<usize> = layer_ids[m_i].clone();
    let elements: Vec<Vec<usize>> = if kind == ElementKind::Tri6 {
        // Ring position of interface vertices, for snapping midside nodes.
        let ring_pos: HashMap<usize, usize> =
            layer_ids[m_i].iter().enumerate().map(|(k, &id)| (id, k)).collect();
        let mut edge_mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut out = Vec::with_capacity(tris.len());
        for t in &tris {
            let mut conn = t.to_vec();
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                let key = (a.min(b), a.max(b));
                let id = *edge_mid.entry(key).or_insert_with(|| {
                    let p = match (ring_pos.get(&a), ring_pos.get(&b)) {
                        (Some(&ka), Some(&kb)) if (ka + 1) % ring == kb || (kb + 1) % ring == ka => {
                            let k0 = if (ka + 1) % ring == kb { ka } else { kb };
                            interface.push(nodes.len());
                            curve.point(t_of(k0 as f64 + 0.5))
                        }
                        _ => {
                            let (pa, pb) = (nodes[a], nodes[b]);
                            [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
                        }
                    };
                    nodes.push(p);
                    nodes.len() - 1
                });
                conn.push(id);
            }
            out.push(conn);
        }
        out
    } else {
        tris.iter().map(|t| t.to_vec()).collect()
    };

    let mut node_sets = boundary_sets(&nodes);
    interface.sort_unstable();
    node_sets.insert("interface".into(), interface);
    let periodic_pairs = pair_boundaries(&nodes, &node_sets)?;
    let mut element_sets = BTreeMap::new();
    element_sets.insert("fiber".into(), fiber);
    element_sets.insert("matrix".into(), matrix);

    let mesh = Mesh {
        nodes,
        kind,
        elements,
        node_sets,
        element_sets,
        periodic_pairs,
    };
    mesh.validate()?;
    mesh.quadrature()?;
    Ok((
        mesh,
        ParentLayout {
            divisions: q,
            inner_layers: m_i,
            outer_layers: m_o,
        },
    ))
}

fn boundary_sets(nodes: &[Point]) -> BTreeMap<String, Vec<usize>> {
    let mut sets: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for name in ["left", "right", "bottom", "top", "corner"] {
        sets.insert(name.into(), Vec::new());
    }
    for (i, p) in nodes.iter().enumerate() {
        let on = [p[0] == 0.0, p[0] == 1.0, p[1] == 0.0, p[1] == 1.0];
        for (flag, name) in on.iter().zip(["left", "right", "bottom", "top"]) {
            if *flag {
                sets.get_mut(name).unwrap().push(i);
            }
        }
        if (on[0] || on[1]) && (on[2] || on[3]) {
            sets.get_mut("corner").unwrap().push(i);
        }
    }
    sets
}

/// Pairs left/right and bottom/top nodes by exact coordinate match,
/// excluding corners.
fn pair_boundaries(nodes: &[Point], sets: &BTreeMap<String, Vec<usize>>) -> Result<Vec<PeriodicPair>> {
    let corners = &sets["corner"];
    let mut pairs = Vec::new();
    for (axis, lo, hi) in [(0u8, "left", "right"), (1u8, "bottom", "top")] {
        let other = 1 - axis as usize;
        let key = |i: &usize| nodes[*i][other];
        let mut masters: Vec<usize> = sets[lo].iter().filter(|i| !corners.contains(i)).copied().collect();
        let mut slaves: Vec<usize> = sets[hi].iter().filter(|i| !corners.contains(i)).copied().collect();
        masters.sort_by(|a, b| key(a).total_cmp(&key(b)));
        slaves.sort_by(|a, b| key(a).total_cmp(&key(b)));
        if masters.len() != slaves.len() {
            return Err(Error::Mesh(format!("{lo} and {hi} edges have different node counts")));
        }
        for (m, s) in masters.into_iter().zip(slaves) {
            if (key(&m) - key(&s)).abs() > super::PERIODIC_TOL {
                return Err(Error::Mesh(format!("{lo}/{hi} nodes {m} and {s} do not match")));
            }
            pairs.push(PeriodicPair {
                master: m,
                slave: s,
                axis,
            });
        }
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_mesh_basic_properties() {
        let mesh = build_parent_disk_mesh(0.225, 8).unwrap();
        assert_eq!(mesh.kind, ElementKind::Tri6);
        assert!((mesh.area().unwrap() - 1.0).abs() < 1e-10);
        let fiber = mesh.set_area("fiber").unwrap();
        let exact = PI * 0.225 * 0.225;
        assert!((fiber - exact).abs() / exact < 0.01, "fiber area {fiber}");
        for &i in mesh.node_set("interface") {
            let r = distance(mesh.nodes[i], CELL_CENTER);
            assert!((r - 0.225).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_pairs_cover_non_corner_boundary_nodes_once() {
        let mesh = build_parent_disk_mesh(0.2, 6).unwrap();
        let mut count = vec![0; mesh.n_nodes()];
        for p in &mesh.periodic_pairs {
            count[p.master] += 1;
            count[p.slave] += 1;
        }
        for side in ["left", "right", "bottom", "top"] {
            for &i in mesh.node_set(side) {
                let expected = if mesh.node_set("corner").contains(&i) { 0 } else { 1 };
                assert_eq!(count[i], expected, "node {i} on {side}");
            }
        }
        assert_eq!(mesh.node_set("corner").len(), 4);
    }

    #[test]
    fn too_coarse_is_rejected() {
        assert!(build_parent_mesh(&Circle::centered(0.2), 3, ElementKind::Tri3).is_err());
        assert!(build_parent_disk_mesh(0.2, 1).is_err());
        assert!(build_parent_disk_mesh(0.6, 8).is_err());
    }

    #[test]
    fn tri3_variant_is_valid() {
        let (mesh, layout) = build_parent_mesh(&Circle::centered(0.3), 6, ElementKind::Tri3).unwrap();
        assert!(layout.inner_layers >= 1 && layout.outer_layers >= 1);
        assert!((mesh.area().unwrap() - 1.0).abs() < 1e-12);
    }
}
