use std::sync::Arc;

use fieldlab_core::bundle::{Formalism, LagrangianTheory, Layer};
use fieldlab_core::connection::*;
use fieldlab_core::constraint::{gamma_s, run_algorithm, solve_pointwise, ChainOptions, Problem, Sampler, SOLVE_TOL};
use fieldlab_core::expr::Point;
use fieldlab_core::theories::builtin;
use fieldlab_core::{CoordId, Error, Expr};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn var(th: &LagrangianTheory, name: &str) -> Expr {
    Expr::coord(th.chart.coord(name).unwrap())
}

fn random_z(th: &LagrangianTheory, rng: &mut ChaCha8Rng) -> Point {
    let space = th.chart.layer(Layer::Z).clone();
    let vals = space.coords().iter().map(|_| rng.gen_range(-1.5..1.5)).collect();
    Point::new(space, vals)
}

#[test]
fn semiholonomic_examples() {
    let th = builtin("free_field").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pt = random_z(&th, &mut rng);
    let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    for z in th.chart.jets() {
        c.set(z.mu as usize, CoordId::fiber(z.i as usize), pt.get(z).unwrap()).unwrap();
    }
    assert!(semiholonomic_defect(&c, &pt).unwrap().iter().all(|v| *v == 0.0));
    assert!(semiholonomic_tensor_defect(&c, &pt).unwrap().iter().all(|v| v.abs() < 1e-14));
    for z in th.chart.jets() {
        c.set(z.mu as usize, CoordId::fiber(z.i as usize), pt.get(z).unwrap() + 1.0).unwrap();
    }
    assert!(semiholonomic_defect(&c, &pt).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn tensor_defect_matches_coordinate_defect() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for name in ["free_field", "bosonic_string", "singular_mech"] {
        let th = builtin(name).unwrap();
        for _ in 0..5 {
            let pt = random_z(&th, &mut rng);
            let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
            for c2 in th.chart.layer(Layer::Z).coords().iter().filter(|c| !c.is_base()) {
                for mu in 0..th.n() {
                    c.set(mu, *c2, rng.gen_range(-2.0..2.0)).unwrap();
                }
            }
            let a = semiholonomic_defect(&c, &pt).unwrap();
            let b = semiholonomic_tensor_defect(&c, &pt).unwrap();
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                assert!((x.abs() - y.abs()).abs() < 1e-12, "{name}: {x} vs {y}");
            }
        }
    }
}

#[test]
fn wrong_kind_is_a_layer_mismatch() {
    let th = builtin("free_field").unwrap();
    let c: ConnectionCoeffs<f64> = ConnectionCoeffs::zero(ConnectionKind::UnifiedW0, th.chart.clone());
    let pt = Point::zeros(th.chart.layer(Layer::W0).clone());
    assert!(matches!(semiholonomic_defect(&c, &pt), Err(Error::LayerMismatch(_))));
}

fn fiber_of(th: &LagrangianTheory) -> Vec<CoordId> {
    th.chart.jets()
}

#[test]
fn projectability_examples() {
    let th = builtin("free_field").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z0 = random_z(&th, &mut rng);
    let fiber = fiber_of(&th);
    let samples = fiber_samples(&z0, &fiber, DEFAULT_FIBER_SAMPLES, (-2.0, 2.0), 9);
    let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    c.set(0, CoordId::fiber(0), var(&th, "y[1]") * var(&th, "x[2]")).unwrap();
    c.set(1, CoordId::fiber(0), Expr::constant(2.0)).unwrap();
    assert_eq!(projectability_defect(&c, &samples, &fiber).unwrap(), 0.0);
    assert!(is_projectable_symbolic(&c, &fiber).unwrap());
    c.set(1, CoordId::fiber(0), var(&th, "z[1,2]")).unwrap();
    assert!(projectability_defect(&c, &samples, &fiber).unwrap() > 0.1);
    assert!(!is_projectable_symbolic(&c, &fiber).unwrap());

    let mut moved = samples.clone();
    moved[3].set(th.chart.coord("y[1]").unwrap(), 9.0);
    assert!(matches!(projectability_defect(&c, &moved, &fiber), Err(Error::SampleMismatch(_))));
}

#[test]
fn beta_examples() {
    let th = builtin("free_field").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut z0 = random_z(&th, &mut rng);
    z0.set(th.chart.coord("z[1,1]").unwrap(), 7.0);
    let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    for mu in 0..2 {
        c.set(mu, CoordId::fiber(0), Expr::constant(3.0)).unwrap();
    }
    let b = beta_point(&c, &z0, &fiber_of(&th), 1e-12).unwrap();
    assert_eq!(b.get(th.chart.coord("z[1,1]").unwrap()), Some(3.0));
    assert_eq!(b.get(th.chart.coord("z[1,2]").unwrap()), Some(3.0));
    for name in ["x[1]", "x[2]", "y[1]"] {
        let k = th.chart.coord(name).unwrap();
        assert_eq!(b.get(k), z0.get(k));
    }
    // A fiber-dependent Γ is refused.
    c.set(0, CoordId::fiber(0), var(&th, "z[1,2]")).unwrap();
    assert!(matches!(beta_point(&c, &z0, &fiber_of(&th), 1e-12), Err(Error::NotProjectable(_))));
}

#[test]
fn beta_is_identity_for_holonomic_coefficients() {
    // Regular L: the Legendre fibers are points, so nothing varies.
    let th = builtin("free_field").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z0 = random_z(&th, &mut rng);
    let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    for z in th.chart.jets() {
        c.set(z.mu as usize, CoordId::fiber(z.i as usize), Expr::coord(z)).unwrap();
    }
    let b = beta_point(&c, &z0, &[], 1e-12).unwrap();
    assert_eq!(b.values, z0.values);
}

fn random_projectable(th: &LagrangianTheory, rng: &mut ChaCha8Rng) -> ConnectionCoeffs<Expr> {
    let mut c = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    let base: Vec<Expr> = th.chart.base().into_iter().chain(th.chart.fibers()).map(Expr::coord).collect();
    for mu in 0..th.n() {
        for i in 0..th.m() {
            let a = &base[rng.gen_range(0..base.len())];
            let b = &base[rng.gen_range(0..base.len())];
            let e = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0) * a.clone() * b.clone()
                + rng.gen_range(-1.0..1.0) * Expr::apply(fieldlab_core::expr::Prim::Sin, a.clone());
            c.set(mu, CoordId::fiber(i), e).unwrap();
        }
    }
    c
}

#[test]
fn alpha_limit_agrees_with_beta() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for k in 0..20 {
        let th = builtin(if k % 2 == 0 { "free_field" } else { "singular_mech" }).unwrap();
        let c = random_projectable(&th, &mut rng);
        let z0 = random_z(&th, &mut rng);
        let b = beta_point(&c, &z0, &fiber_of(&th), 1e-12).unwrap();
        let a = alpha_limit(&c, &z0, 30.0, 0.01).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
        }
        // β is idempotent and lands on semiholonomic points.
        let bb = beta_point(&c, &b, &fiber_of(&th), 1e-12).unwrap();
        assert_eq!(bb.values, b.values);
        let d = semiholonomic_defect(&c.eval(&b).unwrap(), &b).unwrap();
        assert!(d.iter().all(|v| v.abs() <= 1e-10));
    }
}

#[test]
fn tangency_defect_basics() {
    let th = builtin("free_field").unwrap();
    let c: ConnectionCoeffs<f64> = ConnectionCoeffs::zero(ConnectionKind::LagrangianZ, th.chart.clone());
    let pt = Point::zeros(th.chart.layer(Layer::Z).clone());
    assert_eq!(submanifold_tangency_defect(&c, &ConstraintSet::new(Layer::Z), &pt).unwrap(), 0.0);
    let set = ConstraintSet::new(Layer::Z).with([var(&th, "z[1,1]") - 1.0], Provenance::PrimarySymbolic);
    assert!(matches!(submanifold_tangency_defect(&c, &set, &pt), Err(Error::PointOffConstraint(_))));
}

fn opts(samples: usize) -> ChainOptions {
    ChainOptions { sampler: Sampler::default().with_samples(samples), ..Default::default() }
}

#[test]
fn unified_solutions_are_tangent_to_wbar1() {
    for name in ["free_field", "bosonic_string", "singular_mech"] {
        let th = Arc::new(builtin(name).unwrap());
        let p = Arc::new(Problem::new(th.clone(), Formalism::Unified).unwrap());
        let t = run_algorithm(&p, &opts(24)).unwrap();
        let last = t.sets.last().unwrap();
        let known = p.prepare(last).unwrap();
        let dl_dy: Vec<Expr> = (0..th.m()).map(|i| th.lagrangian.diff(CoordId::fiber(i)).unwrap()).collect();
        for pt in Sampler::default().with_samples(16).sample(&p, &known, 31) {
            let sys = p.assemble(&pt, &known).unwrap();
            let s = solve_pointwise(&sys, SOLVE_TOL);
            assert!(s.solvable, "{name}");
            let c = sys.coefficients(ConnectionKind::UnifiedW0, th.chart.clone(), &s.solution).unwrap();
            let primary = p.primary.clone();
            let defect = submanifold_tangency_defect(&c, &primary, &pt).unwrap();
            assert!(defect <= 1e-8, "{name}: {defect:e}");
            // B_μ + C^ν_{μi} z^i_ν = ∂L/∂x^μ + z^i_μ ∂L/∂y^i
            for mu in 0..th.n() {
                let mut lhs = c.get(mu, CoordId::energy());
                let mut rhs = th.lagrangian.diff(CoordId::base(mu)).unwrap().eval(&pt).unwrap();
                for i in 0..th.m() {
                    for nu in 0..th.n() {
                        lhs += c.get(mu, CoordId::momentum(i, nu)) * pt.get(CoordId::jet(i, nu)).unwrap();
                    }
                    rhs += pt.get(CoordId::jet(i, mu)).unwrap() * dl_dy[i].eval(&pt).unwrap();
                }
                assert!((lhs - rhs).abs() <= 1e-8 * (1.0 + rhs.abs()), "{name}: {lhs} vs {rhs}");
            }
            let (err, rank) = right_inverse_defect(&c);
            assert!(err <= 1e-14 && rank == th.n());
        }
    }
}

#[test]
fn string_hamiltonian_coefficients() {
    let th = Arc::new(builtin("bosonic_string").unwrap());
    let p = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian).unwrap());
    let t = run_algorithm(&p, &opts(24)).unwrap();
    let known = p.prepare(t.set(2)).unwrap();
    let full = p.prepare(&p.full_set(t.set(2))).unwrap();
    let g = [-1.0, 1.0];
    for pt in Sampler::default().with_samples(16).sample(&p, &full, 41) {
        let sys = p.assemble(&pt, &known).unwrap();
        let s = solve_pointwise(&sys, SOLVE_TOL);
        assert!(s.solvable);
        let c = sys.coefficients(ConnectionKind::HamiltonianZstar, th.chart.clone(), &s.solution).unwrap();
        let h = |a: usize, b: usize| {
            let name = format!("h[{},{}]", a.min(b), a.max(b));
            pt.get(th.chart.coord(&name).unwrap()).unwrap()
        };
        let s = (-(h(0, 0) * h(1, 1) - h(0, 1) * h(0, 1))).sqrt();
        for i in 0..2 {
            for mu in 0..2 {
                // −(1/√(−det h)) h_{ημ} g^{ij} p^η_j
                let want: f64 = -(0..2)
                    .map(|e| h(e, mu) * g[i] * pt.get(th.chart.coord(&format!("p[{i},{e}]")).unwrap()).unwrap())
                    .sum::<f64>()
                    / s;
                let got = c.gamma(i, mu);
                assert!((got - want).abs() <= 1e-9 * (1.0 + want.abs()), "{got} vs {want}");
            }
        }
    }
}

#[test]
fn transported_connection_is_projectable() {
    for (name, fiber) in [
        ("singular_mech", vec!["v[2]"]),
        ("bosonic_string", vec!["h[0,0,0]", "h[0,0,1]", "h[0,1,0]", "h[0,1,1]", "h[1,1,0]", "h[1,1,1]"]),
    ] {
        let th = Arc::new(builtin(name).unwrap());
        let fiber: Vec<CoordId> = fiber.iter().map(|n| th.chart.coord(n).unwrap()).collect();
        let ham = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian).unwrap());
        let ht = run_algorithm(&ham, &opts(24)).unwrap();
        let known = Arc::new(ham.prepare(ht.sets.last().unwrap()).unwrap());
        let gs = gamma_s(&th, &ham, &known).unwrap();
        let lag = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian).unwrap());
        let lt = run_algorithm(&lag, &opts(24)).unwrap();
        let zf = lag.prepare(lt.sets.last().unwrap()).unwrap();
        for z0 in Sampler::default().with_samples(4).sample(&lag, &zf, 51) {
            let samples = fiber_samples(&z0, &fiber, DEFAULT_FIBER_SAMPLES, (-1.0, 1.0), 3);
            let d = projectability_defect(&gs, &samples, &fiber).unwrap();
            assert!(d <= 1e-10, "{name}: {d:e}");
            let b = beta_point(&gs, &z0, &fiber, 1e-10).unwrap();
            let sd = semiholonomic_defect(&gs.eval(&b).unwrap(), &b).unwrap();
            assert!(sd.iter().all(|v| v.abs() <= 1e-10), "{name}: {sd:?}");
        }
    }
}

#[test]
fn string_transport_to_jet_space() {
    // The Hamiltonian solution transported to Z solves the Lagrangian
    // system on the final set.
    let th = Arc::new(builtin("bosonic_string").unwrap());
    let ham = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian).unwrap());
    let lag = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian).unwrap());
    let ht = run_algorithm(&ham, &opts(24)).unwrap();
    let lt = run_algorithm(&lag, &opts(24)).unwrap();
    let hk = ham.prepare(ht.sets.last().unwrap()).unwrap();
    let lk = lag.prepare(lt.sets.last().unwrap()).unwrap();
    let leg = fieldlab_core::bundle::legendre_map(&th).unwrap();
    for z in Sampler::default().with_samples(6).sample(&lag, &lk, 61) {
        let img = fieldlab_core::constraint::legendre_point(&th, &leg, &z).unwrap();
        let sys = ham.assemble(&img, &hk).unwrap();
        let s = solve_pointwise(&sys, SOLVE_TOL);
        assert!(s.solvable);
        let tilde = sys.coefficients(ConnectionKind::HamiltonianZstar, th.chart.clone(), &s.solution).unwrap();
        let gamma = transport_hamiltonian(&th, &tilde, &z).unwrap();
        for mu in 0..2 {
            for i in 0..th.m() {
                assert!((gamma.gamma(i, mu) - tilde.gamma(i, mu)).abs() < 1e-15);
            }
        }
    }
}
