//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines always reach stdout. The
//! process fails if any criterion fails other than those listed in
//! `UNATTAINABLE`, whose supplementary evidence is asserted instead.

use std::f64::consts::PI;
use std::path::Path;
use std::time::Instant;

use emtlab::config::RunConfig;
use emtlab::geometry::{build_domain, DiscreteDomain, Shape};
use emtlab::lagrangian::{catalog, LagrangianModel, Potential, SampleBox};
use emtlab::pfunction::interval_lambda1_spread;
use emtlab::pipeline::{run_pipeline, write_outputs, Analysis, RunReport, Solved};
use emtlab::tensor::{assemble_t, divergence_residual, Definiteness, LocationClass, SymTensor};

const H: f64 = 1.0 / 64.0;
const TOL_SOLUTION: f64 = 2e-3;
const TOL_LAMBDA: f64 = 5e-3;
const TOL_IDENTITY: f64 = 2e-2;
const MIN_DECAY: f64 = 1.8;
const TOL_PP: f64 = 1e-11;
const PP_SAMPLES: usize = 1000;
const TOL_SPECTRUM: f64 = 1e-10;
const TOL_ANNULUS: f64 = 5e-3;
const TOL_BRANCH: f64 = 5e-3;
const TOL_GRADIENT_BOUND: f64 = 1e-6;
const TOL_INTERVAL_SPREAD: f64 = 1e-6;
const MAX_SECONDS: f64 = 10.0;
const ANNULUS: (f64, f64) = (0.3, 1.0);

/// Criteria that cannot pass on a faithful implementation, with the reason.
const UNATTAINABLE: &[(u32, &str)] = &[(
    4,
    "the torsion tensor field is a quadratic polynomial, so the discrete divergence is exact and the residual sits at the rounding floor, which cannot decrease under refinement",
)];

struct Verdict {
    id: u32,
    title: &'static str,
    pass: bool,
    details: Vec<String>,
    /// Evidence asserted in place of the verdict for unattainable criteria.
    supplementary: Option<bool>,
}

fn config(model: &str, shape: &str, params: &str, h: f64) -> RunConfig {
    RunConfig::from_toml(&format!(
        "[model]\n{model}\n[domain]\nshape = \"{shape}\"\nparameters = {params}\nspacing = {h:e}\n"
    ))
    .expect("test configuration parses")
}

fn affine(offset: f64) -> String {
    format!("name = \"dirichlet_potential\"\npotential = \"affine\"\npotential_parameters = [1.0, {offset:?}]")
}

fn run(cfg: RunConfig) -> (Solved, Analysis, RunReport) {
    run_pipeline(cfg).expect("valid configuration")
}

fn torsion_exact(x: [f64; 2]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] - 1.0) / 4.0
}

/// Closed-form torsion on the annulus `a < r < 1`: `u = r²/4 + A ln r - 1/4`.
fn annulus_exact(r: f64) -> (f64, f64) {
    let a = ANNULUS.0;
    let c = (1.0 - a * a) / (4.0 * a.ln());
    (r * r / 4.0 + c * r.ln() - 0.25, r / 2.0 + c / r)
}

fn max_abs_error(dom: &DiscreteDomain, u: &[f64], exact: impl Fn([f64; 2]) -> f64) -> f64 {
    dom.nodes().iter().zip(u).map(|(n, v)| (v - exact(n.pos)).abs()).fold(0.0, f64::max)
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
}

fn fixed(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ")
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let (solved, _, rep) = run(config(&affine(0.5), "disc", "[1.0]", H));
    let seconds = start.elapsed().as_secs_f64();
    let dom = &solved.prepared.domain;
    let sol = solved.solution.as_ref().expect("solution");
    let err = max_abs_error(dom, &sol.u, torsion_exact);
    let p = rep.pfunction.as_ref().expect("P-function report");
    let s = rep.spectral.as_ref().expect("spectral summary");
    let c = s.uniform_constant_c.unwrap_or(f64::NAN);
    let pass = err <= TOL_SOLUTION
        && (p.sup_value + 0.25).abs() <= TOL_LAMBDA
        && dist(p.argmax, [0.0, 0.0]) <= 2.0 * H
        && p.location_class == LocationClass::CriticalSet
        && s.definiteness == Definiteness::NegativeDefinite
        && (c - 0.25).abs() <= TOL_LAMBDA
        && seconds <= MAX_SECONDS;
    Verdict {
        id: 1,
        title: "torsion benchmark on the unit disc",
        pass,
        details: vec![
            format!("max |u - (r²-1)/4| = {err:.3e} (tol {TOL_SOLUTION:e})"),
            format!(
                "sup λ₁ = {:.6} at ({:.4}, {:.4}), class {:?}",
                p.sup_value, p.argmax[0], p.argmax[1], p.location_class
            ),
            format!("definiteness {:?}, C = {c:.6}", s.definiteness),
            format!("wall time {seconds:.2} s (limit {MAX_SECONDS} s)"),
        ],
        supplementary: None,
    }
}

fn criterion_2() -> Verdict {
    let (_, _, rep) = run(config(&affine(-0.2), "disc", "[1.0]", H));
    let p = rep.pfunction.as_ref().expect("P-function report");
    let s = rep.spectral.as_ref().expect("spectral summary");
    let pass = s.definiteness == Definiteness::PositiveDefinite
        && (p.sup_value - 0.45).abs() <= TOL_LAMBDA
        && dist(p.argmax, [0.0, 0.0]) <= 2.0 * H;
    Verdict {
        id: 2,
        title: "shifted torsion is positive definite",
        pass,
        details: vec![
            format!("definiteness {:?}, min eigenvalue {:.6}", s.definiteness, s.min_eigenvalue),
            format!("sup λ₁ = {:.6} at ({:.4}, {:.4})", p.sup_value, p.argmax[0], p.argmax[1]),
        ],
        supplementary: None,
    }
}

fn criterion_3() -> Verdict {
    let target = -3.0 * PI / 4.0;
    let mut details = Vec::new();
    let mut pass = true;
    let mut residuals = Vec::new();
    for h in [H, H / 2.0] {
        let (_, _, rep) = run(config(&affine(0.5), "disc", "[1.0]", h));
        let r = rep.identities.expect("identity report");
        let pairs = [
            ("flux", r.flux_volume, r.flux_boundary, r.flux_residual),
            ("dirichlet", r.dirichlet_volume, r.dirichlet_boundary, r.dirichlet_residual),
            (
                "semilinear",
                r.semilinear_volume.unwrap_or(f64::NAN),
                r.semilinear_boundary.unwrap_or(f64::NAN),
                r.semilinear_residual.unwrap_or(f64::NAN),
            ),
        ];
        for (name, v, b, res) in pairs {
            details.push(format!("h = 1/{:.0} {name}: volume {v:.6}, boundary {b:.6}, residual {res:.3e}", 1.0 / h));
            if h == H {
                pass &= (v - target).abs() <= TOL_IDENTITY && (b - target).abs() <= TOL_IDENTITY && res <= TOL_IDENTITY;
            }
        }
        residuals.push(pairs.map(|p| p.3));
    }
    for (k, name) in ["flux", "dirichlet", "semilinear"].iter().enumerate() {
        let factor = residuals[0][k] / residuals[1][k];
        details.push(format!("{name} residual reduction 1/64 -> 1/128: {factor:.2}"));
        pass &= factor >= MIN_DECAY;
    }
    Verdict { id: 3, title: "integral identities on the torsion benchmark", pass, details, supplementary: None }
}

/// Tensor field built from a closed-form solution at the grid nodes.
fn injected_field(
    model: &LagrangianModel,
    dom: &DiscreteDomain,
    exact: impl Fn([f64; 2]) -> (f64, [f64; 2]),
) -> Vec<SymTensor> {
    dom.nodes()
        .iter()
        .map(|n| {
            let (u, g) = exact(n.pos);
            let p = g[0].hypot(g[1]);
            assemble_t(&model.eval_jet(p, u).expect("jet"), &g, p).t
        })
        .collect()
}

fn criterion_4() -> Verdict {
    let mut details = Vec::new();
    let hs = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0];
    let mut solved_norms = Vec::new();
    for h in hs {
        let (_, _, rep) = run(config(&affine(0.5), "disc", "[1.0]", h));
        solved_norms.push(rep.divergence.expect("divergence").norm);
    }
    let factors: Vec<f64> = solved_norms.windows(2).map(|w| w[0] / w[1]).collect();
    details.push(format!("solved torsion field: norms {}, factors {}", sci(&solved_norms), fixed(&factors)));
    let pass = factors.iter().all(|f| *f >= MIN_DECAY);

    let torsion = LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: 0.5 });
    let mut torsion_injected = Vec::new();
    let mut annulus_injected = Vec::new();
    for h in hs {
        let disc = build_domain(Shape::disc(1.0).unwrap(), h).unwrap();
        let t = injected_field(&torsion, &disc, |x| (torsion_exact(x), [x[0] / 2.0, x[1] / 2.0]));
        torsion_injected.push(divergence_residual(&disc, &t).norm);
        let ann = build_domain(Shape::annulus(ANNULUS.0, ANNULUS.1).unwrap(), h).unwrap();
        let t = injected_field(&torsion, &ann, |x| {
            let r = x[0].hypot(x[1]);
            let (u, du) = annulus_exact(r);
            (u, [du * x[0] / r, du * x[1] / r])
        });
        annulus_injected.push(divergence_residual(&ann, &t).norm);
    }
    let ann_factors: Vec<f64> = annulus_injected.windows(2).map(|w| w[0] / w[1]).collect();
    details.push(format!("exact torsion field injected on the disc: norms {}", sci(&torsion_injected)));
    details.push(format!(
        "exact annulus field injected (non-polynomial): norms {}, factors {}",
        sci(&annulus_injected),
        fixed(&ann_factors)
    ));
    let floor = torsion_injected.iter().chain(&solved_norms).all(|v| *v < 1e-11);
    let truncation = ann_factors.iter().all(|f| *f >= MIN_DECAY);
    details.push(format!(
        "disc residuals at the rounding floor (< 1e-11): {floor}; annulus decay >= {MIN_DECAY}: {truncation}"
    ));
    Verdict {
        id: 4,
        title: "divergence of T decays under refinement",
        pass,
        details,
        supplementary: Some(floor && truncation),
    }
}

fn criterion_5() -> Verdict {
    let bx = SampleBox::new((1e-3, 2.0), (-1.0, 1.0));
    let mut details = Vec::new();
    let mut pass = true;
    for (name, model) in catalog() {
        let worst = bx
            .points(PP_SAMPLES - 4)
            .into_iter()
            .map(|(p, q)| model.pp_identity_residual(p, q).unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max);
        details.push(format!("{name}: max residual {worst:.3e} over {PP_SAMPLES} samples"));
        pass &= worst < TOL_PP;
    }
    Verdict { id: 5, title: "P-function compatibility equation cancels", pass, details, supplementary: None }
}

fn catalog_config(name: &str) -> String {
    match name {
        "torsion" => affine(0.5),
        "shifted_torsion" => affine(-0.2),
        "dirichlet_exponential" => {
            "name = \"dirichlet_potential\"\npotential = \"exponential\"\npotential_parameters = [1.0, 1.0]".into()
        }
        "dirichlet_power" => {
            "name = \"dirichlet_potential\"\npotential = \"power\"\npotential_parameters = [0.5, 2.0, 2.0]".into()
        }
        "power_dirichlet_m3" => {
            "name = \"power_dirichlet\"\nparameters = [3.0]\npotential = \"affine\"\npotential_parameters = [1.0, 0.5]"
                .into()
        }
        "minimal_surface" => {
            "name = \"regularized_minimal_surface\"\npotential = \"affine\"\npotential_parameters = [1.0, 2.0]".into()
        }
        other => panic!("no configuration for catalog model {other}"),
    }
}

/// Every catalog model on the disc plus torsion on the annulus.
fn catalog_runs() -> Vec<(String, RunReport)> {
    let mut out: Vec<(String, RunReport)> = catalog()
        .into_iter()
        .map(|(name, _)| (format!("{name}/disc"), run(config(&catalog_config(name), "disc", "[1.0]", 1.0 / 32.0)).2))
        .collect();
    out.push(("torsion/annulus".into(), run(config(&affine(0.5), "annulus", "[0.3, 1.0]", H)).2));
    out
}

fn criterion_6(runs: &[(String, RunReport)]) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, rep) in runs {
        let Some(s) = rep.spectral.as_ref() else {
            details.push(format!("{name}: no spectral field ({:?})", rep.solver.status));
            pass = false;
            continue;
        };
        let ok = s.max_crosscheck <= TOL_SPECTRUM
            && s.max_asymmetry == 0.0
            && s.max_trace_defect <= TOL_SPECTRUM
            && s.max_det_defect_relative <= TOL_SPECTRUM;
        details.push(format!(
            "{name}: crosscheck {:.2e}, asymmetry {:.1e}, trace {:.2e}, det {:.2e}",
            s.max_crosscheck, s.max_asymmetry, s.max_trace_defect, s.max_det_defect_relative
        ));
        pass &= ok;
    }
    Verdict { id: 6, title: "closed-form versus direct spectrum", pass, details, supplementary: None }
}

fn criterion_7(runs: &[(String, RunReport)]) -> Verdict {
    let (_, rep) = runs.iter().find(|(n, _)| n == "torsion/annulus").expect("annulus run");
    let (solved, _, _) = run(config(&affine(0.5), "annulus", "[0.3, 1.0]", H));
    let dom = &solved.prepared.domain;
    let sol = solved.solution.as_ref().expect("solution");
    let err = max_abs_error(dom, &sol.u, |x| annulus_exact(x[0].hypot(x[1])).0);
    let p = rep.pfunction.as_ref().expect("P-function report");
    let pass = p.h_min < 0.0
        && matches!(p.location_class, LocationClass::CriticalSet | LocationClass::Boundary)
        && err <= TOL_ANNULUS;
    Verdict {
        id: 7,
        title: "annulus counter-case",
        pass,
        details: vec![
            format!("H_min = {:.4}", p.h_min),
            format!(
                "sup λ₁ = {:.6} at ({:.4}, {:.4}), class {:?}",
                p.sup_value, p.argmax[0], p.argmax[1], p.location_class
            ),
            format!("max |u - closed form| = {err:.3e} (tol {TOL_ANNULUS:e})"),
        ],
        supplementary: None,
    }
}

fn criterion_8(runs: &[(String, RunReport)]) -> Verdict {
    let mut details = Vec::new();
    let mut pass = true;
    for (name, rep) in runs {
        let Some(p) = rep.pfunction.as_ref() else {
            details.push(format!("{name}: not converged"));
            pass = false;
            continue;
        };
        let crit = p.critical_formula_value.unwrap_or(f64::NEG_INFINITY);
        let bound = crit.max(p.boundary_formula_value);
        let mut ok = p.sup_value <= bound + TOL_BRANCH;
        let mut line =
            format!("{name}: sup {:.6}, critical {crit:.6}, boundary {:.6}", p.sup_value, p.boundary_formula_value);
        if p.h_min >= 0.0 {
            let gap = (p.sup_value - crit).abs();
            ok &= gap <= TOL_BRANCH;
            line.push_str(&format!(", |sup - critical| = {gap:.2e}"));
        }
        details.push(line);
        pass &= ok;
    }
    Verdict { id: 8, title: "two-branch formula for the supremum", pass, details, supplementary: None }
}

fn criterion_9() -> Verdict {
    let (_, _, rep) = run(config(&affine(0.5), "disc", "[1.0]", H));
    let g = rep.gradient_bound.expect("gradient bound");
    let margin = g.semilinear_worst_margin.unwrap_or(f64::NEG_INFINITY);
    let mut details = vec![format!("min over nodes of Φ(u) - Φ(m) - ½|∇u|² = {margin:.3e}")];
    let mut pass = margin >= -TOL_GRADIENT_BOUND;
    // The minimal-surface interval problem with unit source has no solution
    // once the half-width reaches 1, so the catalog sweep uses [-1/2, 1/2].
    let torsion = LagrangianModel::dirichlet_potential(Potential::Affine { slope: 1.0, offset: 0.5 });
    let runs =
        std::iter::once(("torsion", torsion, 1.0)).chain(catalog().into_iter().map(|(name, model)| (name, model, 0.5)));
    for (name, model, half) in runs {
        let spread = interval_lambda1_spread(&model, half, 2048).unwrap_or(f64::INFINITY);
        details.push(format!("{name}: λ₁ spread on [-{half}, {half}] = {spread:.3e}"));
        pass &= spread <= TOL_INTERVAL_SPREAD;
    }
    Verdict { id: 9, title: "gradient bound and first integral in one dimension", pass, details, supplementary: None }
}

fn digest(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_default()
}

fn criterion_10() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let (solved, a, rep) =
            run(config(&catalog_config("dirichlet_exponential"), "ellipse", "[1.2, 0.8]", 1.0 / 32.0));
        write_outputs(d.path(), &solved, &a, &rep).unwrap();
    }
    let mut details = Vec::new();
    let mut pass = true;
    for file in ["report.json", "fields.csv"] {
        let (a, b) = (digest(&dirs[0].path().join(file)), digest(&dirs[1].path().join(file)));
        let same = !a.is_empty() && a == b;
        details.push(format!("{file}: {} bytes, identical {same}", a.len()));
        pass &= same;
    }
    Verdict { id: 10, title: "deterministic outputs", pass, details, supplementary: None }
}

fn main() {
    let runs = catalog_runs();
    let verdicts = vec![
        criterion_1(),
        criterion_2(),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(&runs),
        criterion_7(&runs),
        criterion_8(&runs),
        criterion_9(),
        criterion_10(),
    ];
    let mut unexpected = Vec::new();
    for v in &verdicts {
        println!("{} criterion {:>2}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.title);
        for d in &v.details {
            println!("      {d}");
        }
        let known = UNATTAINABLE.iter().find(|(id, _)| *id == v.id);
        match (v.pass, known) {
            (true, _) => {}
            (false, Some((_, why))) => {
                println!("      known failure: {why}");
                let ok = v.supplementary.unwrap_or(false);
                println!("      supplementary evidence {}", if ok { "holds" } else { "DOES NOT hold" });
                if !ok {
                    unexpected.push(v.id);
                }
            }
            (false, None) => unexpected.push(v.id),
        }
    }
    let passed = verdicts.iter().filter(|v| v.pass).count();
    println!("acceptance: {passed}/{} criteria pass", verdicts.len());
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
