mod common;

use std::collections::HashMap;

use common::{max_abs, scenario, square, sub};
use viscrack::fe::{FeSpace, Kinematics};
use viscrack::mesh::{build_rect_mesh, insert_crack, Mesh2D};
use viscrack::scenario::{polyline_from_path, Scenario};
use viscrack::stepper::{run, Interp};
use viscrack::Error;

fn coord_key(p: [f64; 2]) -> (i64, i64) {
    ((p[0] * 1e9).round() as i64, (p[1] * 1e9).round() as i64)
}

/// Edge owners keyed by endpoint coordinates, so duplicated nodes stay
/// distinguishable by index but segments can be looked up geometrically.
fn edge_owners(mesh: &Mesh2D) -> HashMap<(usize, usize), usize> {
    let mut owners = HashMap::new();
    for t in mesh.triangles() {
        for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
            *owners.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    owners
}

#[test]
fn l_crack_duplicates_match_adjacency_scan() {
    let mesh = build_rect_mesh(1.0, 1.0, 16, 16).unwrap();
    let corners = [[0.25, 0.25], [0.25, 0.4375], [0.4375, 0.4375]];
    let poly = polyline_from_path(&mesh, &corners).unwrap();
    assert_eq!(poly.len(), 7, "six segments");
    let (cracked, crack) = insert_crack(&mesh, &poly).unwrap();

    // brute force: coordinates carried by more than one node
    let mut by_coord: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in cracked.nodes().iter().enumerate() {
        by_coord.entry(coord_key(*p)).or_default().push(i);
    }
    let doubled: Vec<_> = by_coord.values().filter(|v| v.len() > 1).collect();
    let interior = poly.len() - 2;
    assert_eq!(doubled.len(), interior);
    assert!(doubled.iter().all(|v| v.len() == 2));
    assert_eq!(crack.pairs().len(), interior);
    assert_eq!(cracked.n_nodes(), mesh.n_nodes() + interior);
    assert!((cracked.total_area() - 1.0).abs() < 1e-12);

    // every crack segment is now two distinct edges, each with one triangle
    let owners = edge_owners(&cracked);
    let nodes = cracked.nodes();
    for w in poly.windows(2) {
        let (pa, pb) = (coord_key(mesh.nodes()[w[0]]), coord_key(mesh.nodes()[w[1]]));
        let copies: Vec<_> = owners
            .iter()
            .filter(|((a, b), _)| {
                let (ka, kb) = (coord_key(nodes[*a]), coord_key(nodes[*b]));
                (ka, kb) == (pa, pb) || (ka, kb) == (pb, pa)
            })
            .collect();
        assert_eq!(copies.len(), 2, "segment {w:?}");
        assert!(copies.iter().all(|(_, &n)| n == 1));
    }

    // interior edges off the crack keep two owners
    let boundary = cracked.boundary_edges().len();
    let single = owners.values().filter(|&&n| n == 1).count();
    assert_eq!(single, boundary + 2 * (poly.len() - 1));
}

#[test]
fn crack_off_mesh_edges_is_rejected() {
    let mesh = build_rect_mesh(1.0, 1.0, 4, 4).unwrap();
    assert!(matches!(
        polyline_from_path(&mesh, &[[0.1, 0.5], [0.6, 0.5]]),
        Err(Error::Geometry(_))
    ));
}

#[test]
fn spaces_are_nested_and_follow_the_schedule() {
    let s = Scenario::builtin("cracked_plate").unwrap();
    let crack = s.problem.crack().unwrap();
    let tol = 1e-12 * crack.length();
    let n = 64;
    let mut prev = s.problem.space_at(0.0).unwrap();
    assert_eq!(prev.released(), 0);
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let space = s.problem.space_at(t).unwrap();
        assert!(prev.nested_in(&space));
        let front = 0.5 * t;
        let expected = crack
            .pairs()
            .iter()
            .filter(|p| p.arclength <= front + tol)
            .count();
        assert_eq!(space.released(), expected, "t = {t}");
        prev = space;
    }
    assert_eq!(prev.released(), crack.pairs().len());
    assert!(s.problem.space_at(1.5).is_err());
}

#[test]
fn trajectories_stay_admissible() {
    let s = Scenario::builtin("cracked_plate").unwrap();
    let traj = run(&s.problem, 32).unwrap();
    for k in 0..=32 {
        let space = s.problem.space_at(traj.state(k).t).unwrap();
        assert!(space.respects_ties(traj.u(k)), "k = {k}");
        assert!(space.dirichlet_dofs().iter().all(|&d| traj.u(k)[d] == 0.0));
        let quotient: Vec<f64> = sub(traj.u(k), &traj.state(k).u_prev)
            .iter()
            .map(|x| x / traj.tau())
            .collect();
        assert_eq!(quotient, traj.du(k));
        if k > 0 {
            assert_eq!(traj.state(k).u_prev, traj.u(k - 1));
        }
    }
}

#[test]
fn interpolants_at_and_between_knots() {
    let s = scenario(&square(
        4,
        "[data]\nf = [\"sin(pi * x) * sin(pi * y) * (1 + t)\"]\nu1 = [\"x * (1 - x) * y * (1 - y)\"]\n",
    ));
    let traj = run(&s.problem, 8).unwrap();
    let tau = traj.tau();
    for kind in [Interp::PwLinear, Interp::RightConst, Interp::LeftConst] {
        for k in 0..=8 {
            assert_eq!(traj.interpolate(k as f64 * tau, kind).unwrap(), traj.u(k));
        }
    }
    let t = 2.5 * tau;
    let mid = traj.interpolate(t, Interp::PwLinear).unwrap();
    let avg: Vec<f64> = traj
        .u(2)
        .iter()
        .zip(traj.u(3))
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    assert!(max_abs(&sub(&mid, &avg)) < 1e-15);
    assert_eq!(traj.interpolate(t, Interp::RightConst).unwrap(), traj.u(3));
    assert_eq!(traj.interpolate(t, Interp::LeftConst).unwrap(), traj.u(2));
    // the linear interpolant stays between its end values
    for (i, x) in mid.iter().enumerate() {
        let (a, b) = (traj.u(2)[i], traj.u(3)[i]);
        assert!(*x >= a.min(b) - 1e-15 && *x <= a.max(b) + 1e-15);
    }
    let wm = traj.interpolate_w(t, Interp::PwLinear).unwrap();
    for (x, (a, b)) in wm
        .as_slice()
        .iter()
        .zip(traj.w(2).as_slice().iter().zip(traj.w(3).as_slice()))
    {
        assert!((x - 0.5 * (a + b)).abs() < 1e-15);
    }
    assert!(matches!(
        traj.interpolate(1.5, Interp::PwLinear),
        Err(Error::Domain(_))
    ));
    assert!(matches!(
        traj.interpolate(-0.1, Interp::LeftConst),
        Err(Error::Domain(_))
    ));
}

#[test]
fn v_norm_of_linear_field() {
    let mesh = build_rect_mesh(1.0, 1.0, 8, 8).unwrap();
    let fe = FeSpace::new(&mesh, Kinematics::Antiplane).unwrap();
    let u = FeSpace::interpolate(&mesh, Kinematics::Antiplane, |p| [p[0], 0.0]);
    // midpoint rule for int (x^2 + |grad x|^2)
    let m = 2000;
    let h = 1.0 / m as f64;
    let oracle: f64 = (0..m)
        .map(|i| ((i as f64 + 0.5) * h).powi(2) + 1.0)
        .sum::<f64>()
        * h;
    let v = fe.v_norm(&u).unwrap();
    assert!((v - oracle.sqrt()).abs() < 1e-7);
    assert!((v - (4.0f64 / 3.0).sqrt()).abs() < 1e-12);
}
