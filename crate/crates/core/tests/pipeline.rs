use std::io::BufReader;

use approx::assert_relative_eq;
use shapeflow::adjoint::{eval_cost, solve_adjoint, CostKind};
use shapeflow::fem::FeSpace;
use shapeflow::flow::{solve_ns, NewtonOptions, Seed};
use shapeflow::mesh::io::{read_mesh, write_mesh};
use shapeflow::mesh::{gen_annulus, Marker};
use shapeflow::optim::{run, run_from, CurveSpec, OptConfig, Problem};
use shapeflow::shape::{eulerian_derivative, gradient_density, h1_descent, h1_inner, Perturbation};
use shapeflow::{Mesh, Params};

const ELLIPSE: CurveSpec = CurveSpec::Ellipse { a: 0.6, b: 0.4 };
const TARGET: CurveSpec = CurveSpec::Circle { radius: 0.2 };
const ELLIPSE_SMALL: CurveSpec = CurveSpec::Ellipse { a: 0.4, b: 0.3 };

#[test]
fn case1_descent_is_monotone() {
    let out = run::<f64>(&OptConfig::new(0.1, CostKind::J1Tracking, ELLIPSE, TARGET, 10)).unwrap();
    assert!(out.stop.is_success(), "{}", out.stop);
    assert_eq!(out.trace.accepted(), 10);
    let mut costs = out.trace.costs();
    costs.extend(out.final_cost);
    for w in costs.windows(2) {
        assert!(w[1] < w[0], "{costs:?}");
    }
}

#[test]
fn case2_ends_well_below_start() {
    let cfg = OptConfig::new(0.1, CostKind::J1Tracking, CurveSpec::Circle { radius: 0.6 }, ELLIPSE_SMALL, 15);
    let out = run::<f64>(&cfg).unwrap();
    let j0 = out.trace.costs()[0];
    assert!(out.final_cost.unwrap() < 1e-2 * j0);
}

#[test]
fn mesh_survives_text_round_trip() {
    let mesh: Mesh = gen_annulus(&ELLIPSE.to_curve(), 0.15).unwrap();
    let mut buf = Vec::new();
    write_mesh(&mesh, &mut buf).unwrap();
    let back: Mesh = read_mesh(BufReader::new(&buf[..])).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.boundary_edges(), mesh.boundary_edges());
    for (a, b) in back.nodes().iter().zip(mesh.nodes()) {
        assert_relative_eq!(a[0], b[0], epsilon = 1e-15);
        assert_relative_eq!(a[1], b[1], epsilon = 1e-15);
    }
}

/// Moving along `-d` by a small step lowers the cost at the predicted rate.
#[test]
fn small_descent_step_matches_prediction() {
    let cfg = OptConfig::new(0.1, CostKind::J2Vorticity, ELLIPSE, TARGET, 1);
    let mesh: Mesh = gen_annulus(&ELLIPSE.to_curve(), 0.15).unwrap();
    let params = Params::benchmark(0.1).unwrap();
    let opts = NewtonOptions::default();
    let solve = |m: &Mesh| {
        let space = FeSpace::new(m.clone()).unwrap();
        solve_ns(&space, &params, &opts, Seed::Stokes).unwrap().0
    };
    let y = solve(&mesh);
    let kind = cfg.cost;
    let adj = solve_adjoint(&y, &params, kind, None).unwrap();
    let density = gradient_density(&y, &adj, &params, kind, None).unwrap();
    let d = h1_descent(&mesh, &density).unwrap();
    let dd = h1_inner(&mesh, &d, &d).unwrap();
    let predicted = eulerian_derivative(&mesh, &density, &Perturbation::normal_trace(&mesh, &d).unwrap()).unwrap();
    assert_relative_eq!(predicted, dd, max_relative = 1e-8);

    let t = 1e-3 / d.max_norm();
    let j0 = eval_cost(&y, &params, kind, None).unwrap();
    let j1 = eval_cost(&solve(&mesh.deform(&d, t).unwrap()), &params, kind, None).unwrap();
    assert!(j1 < j0);
    // boundary density is coarse-mesh accurate to some tens of percent
    assert_relative_eq!((j0 - j1) / t, dd, max_relative = 0.3);
}

#[test]
fn outer_boundary_stays_on_the_unit_circle() {
    let cfg = OptConfig::new(0.1, CostKind::J1Tracking, ELLIPSE, TARGET, 2);
    let problem = Problem::<f64>::from_config(&cfg).unwrap();
    let mesh: Mesh = gen_annulus(&ELLIPSE.to_curve(), cfg.mesh_h).unwrap();
    let out = run_from(&cfg, &problem, mesh, |_, m| {
        let outer = m.is_marked(Marker::Outer);
        for (i, p) in m.nodes().iter().enumerate() {
            if outer[i] {
                assert_relative_eq!(p[0].hypot(p[1]), 1.0, epsilon = 1e-12);
            }
        }
        Ok(())
    })
    .unwrap();
    assert_eq!(out.trace.accepted(), 2);
}
