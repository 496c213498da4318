use emtlab::geometry::{build_domain, Shape};
use emtlab::lagrangian::{LagrangianModel, Potential};
use emtlab::solver::radial::solve_radial;
use emtlab::solver::{el_residual, solve_el, SolverConfig};

fn torsion() -> LagrangianModel {
    LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: 0.5 })
}

fn max_error(model: &LagrangianModel, shape: Shape, h: f64, exact: impl Fn(f64) -> f64) -> f64 {
    let dom = build_domain(shape, h).unwrap();
    let sol = solve_el(model, &dom, &SolverConfig::default()).unwrap();
    assert!(sol.converged);
    dom.nodes().iter().zip(&sol.u).map(|(n, u)| (u - exact(n.pos[0].hypot(n.pos[1]))).abs()).fold(0.0, f64::max)
}

#[test]
fn torsion_on_the_disc_is_reproduced_exactly() {
    let err = max_error(&torsion(), Shape::disc(1.0).unwrap(), 1.0 / 32.0, |r| (r * r - 1.0) / 4.0);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn annulus_converges_to_the_closed_form() {
    let a: f64 = 0.3;
    let c = (1.0 - a * a) / (4.0 * a.ln());
    let exact = |r: f64| r * r / 4.0 + c * r.ln() - 0.25;
    let shape = Shape::annulus(a, 1.0).unwrap();
    let e: Vec<f64> =
        [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0].iter().map(|&h| max_error(&torsion(), shape, h, exact)).collect();
    assert!(e[2] < 5e-3, "{e:?}");
    let order = (e[0] / e[2]).log2() / 2.0;
    assert!(order >= 1.5, "order {order} from {e:?}");
}

#[test]
fn nonlinear_source_converges_to_the_radial_reference() {
    let model = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
    let profile = solve_radial(&model, 2, (0.0, 1.0), 4096).unwrap();
    let shape = Shape::disc(1.0).unwrap();
    let e: Vec<f64> = [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0]
        .iter()
        .map(|&h| max_error(&model, shape, h, |r| profile.value(r)))
        .collect();
    let order = (e[0] / e[2]).log2() / 2.0;
    assert!(order >= 1.5, "order {order} from {e:?}");
}

#[test]
fn radial_torsion_converges_to_the_polynomial() {
    for (n, c) in [(1usize, 2.0), (2, 4.0), (3, 6.0)] {
        let err = |res: usize| {
            let p = solve_radial(&torsion(), n, (0.0, 1.0), res).unwrap();
            p.r.iter().zip(&p.u).map(|(r, u)| (u - (r * r - 1.0) / c).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (err(256), err(1024));
        assert!(fine < 1e-7, "n = {n}: {fine}");
        assert!(fine <= coarse, "n = {n}: {coarse} -> {fine}");
    }
}

#[test]
fn converged_solution_has_small_residual() {
    let model = LagrangianModel::regularized_minimal_surface(Potential::Affine { slope: 1.0, offset: 2.0 });
    let dom = build_domain(Shape::ellipse(1.0, 0.6).unwrap(), 1.0 / 32.0).unwrap();
    let cfg = SolverConfig::default();
    let sol = solve_el(&model, &dom, &cfg).unwrap();
    assert!(sol.converged);
    let r = el_residual(&model, &dom, &sol.u).unwrap();
    let inf = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(inf <= cfg.residual_tol * 10.0, "{inf}");
    assert!(sol.u.iter().all(|&u| u <= 0.0));
}

#[test]
fn solves_are_deterministic() {
    let model = LagrangianModel::dirichlet_potential(Potential::Exponential { scale: 1.0, rate: 1.0 });
    let dom = build_domain(Shape::ellipse(1.2, 0.8).unwrap(), 1.0 / 32.0).unwrap();
    let a = solve_el(&model, &dom, &SolverConfig::default()).unwrap();
    let b = solve_el(&model, &dom, &SolverConfig::default()).unwrap();
    assert!(a.u.iter().zip(&b.u).all(|(x, y)| x.to_bits() == y.to_bits()));
}
