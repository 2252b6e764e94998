use std::f64::consts::PI;
use std::sync::Arc;

use fieldlab_core::bundle::{legendre_jacobian_at, legendre_map, LagrangianTheory, Layer};
use fieldlab_core::constraint::{ChainOptions, Sampler, SOLVE_TOL};
use fieldlab_core::exterior::VectorField;
use fieldlab_core::expr::Point;
use fieldlab_core::mechanics::*;
use fieldlab_core::theories::{builtin, TheoryFile};
use fieldlab_core::{CoordId, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mech(name: &str, m: usize, lagrangian: &str) -> LagrangianTheory {
    let names = ["q", "r"];
    let fibers: Vec<String> = (0..m)
        .map(|i| format!(r#"{{ "name": "{0}", "jet": "v{0}", "momentum": "p{0}" }}"#, names[i]))
        .collect();
    let json = format!(
        r#"{{ "name": "{name}", "n": 1, "m": {m}, "base": {{ "names": ["t"], "labels": ["0"] }},
             "fibers": [{}], "lagrangian": "{lagrangian}" }}"#,
        fibers.join(",")
    );
    TheoryFile::from_json(&json).unwrap().build().unwrap()
}

fn at(th: &LagrangianTheory, layer: Layer, vals: &[(&str, f64)]) -> Point {
    let mut pt = Point::zeros(th.chart.layer(layer).clone());
    for (n, v) in vals {
        assert!(pt.set(th.chart.coord(n).unwrap(), *v), "{n}");
    }
    pt
}

fn c(th: &LagrangianTheory, name: &str) -> CoordId {
    th.chart.coord(name).unwrap()
}

#[test]
fn reeb_of_potential_lagrangian() {
    // V(q) = q^4/4 + sin q, so the field is ∂t + v∂q − (q^3 + cos q)∂v.
    let th = mech("anharmonic", 1, "(1/2)*vq^2 - (1/4)*q^4 - sin(q)");
    let rp = ReebProblem::lagrangian(&th).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let (t, q, v) = (rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let pt = at(&th, Layer::Z, &[("t", t), ("q", q), ("vq", v)]);
        let xi = reeb_field(&rp, &pt).unwrap();
        assert!((xi.get(c(&th, "t")) - 1.0).abs() < 1e-12);
        assert!((xi.get(c(&th, "q")) - v).abs() < 1e-10);
        assert!((xi.get(c(&th, "vq")) + q.powi(3) + q.cos()).abs() < 1e-10);
        assert!(sode_defect(&th.chart, &xi, &pt).unwrap() < 1e-10);
    }
}

#[test]
fn oscillator_hamiltonian_reeb() {
    let th = builtin("oscillator").unwrap();
    let rp = ReebProblem::hamiltonian(&th).unwrap();
    let pt = at(&th, Layer::ZStar, &[("t", 0.4), ("q", 0.7), ("p_q", -1.3)]);
    let xi = reeb_field(&rp, &pt).unwrap();
    assert!((xi.get(c(&th, "t")) - 1.0).abs() < 1e-12);
    assert!((xi.get(c(&th, "q")) + 1.3).abs() < 1e-12);
    assert!((xi.get(c(&th, "p_q")) + 0.7).abs() < 1e-12);
}

#[test]
fn sode_examples() {
    let th = builtin("oscillator").unwrap();
    let pt = at(&th, Layer::Z, &[("q", 0.5), ("v", -0.8)]);
    let mut xi = VectorField::coord(c(&th, "t"));
    xi.set(c(&th, "q"), -0.8);
    xi.set(c(&th, "v"), 3.0);
    assert_eq!(sode_defect(&th.chart, &xi, &pt).unwrap(), 0.0);
    xi.set(c(&th, "q"), -1.6);
    assert!((sode_defect(&th.chart, &xi, &pt).unwrap() - 0.8).abs() < 1e-15);
}

#[test]
fn time_translation_is_a_straight_line() {
    let th = builtin("oscillator").unwrap();
    let x0 = at(&th, Layer::ZStar, &[("q", 0.3), ("p_q", -0.2)]);
    let traj = integrate(&th.chart, |_| Ok(vec![1.0, 0.0, 0.0]), &x0, 1.0, 0.1).unwrap();
    assert_eq!(traj.len(), 11);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        assert!((s[0] - t).abs() < 1e-14);
        assert_eq!((s[1], s[2]), (0.3, -0.2));
    }
    assert_eq!(traj.method, "rk4");
}

fn oscillator_endpoint_error(step: f64) -> f64 {
    let th = builtin("oscillator").unwrap();
    let rp = ReebProblem::lagrangian(&th).unwrap();
    let x0 = at(&th, Layer::Z, &[("q", 1.0)]);
    let traj = reeb_trajectory(&rp, &th.chart, &x0, 2.0 * PI, step).unwrap();
    let end = traj.states.last().unwrap();
    ((end[0] - 2.0 * PI).abs()).max((end[1] - 1.0).abs()).max(end[2].abs())
}

#[test]
fn oscillator_returns_after_one_period() {
    let err = oscillator_endpoint_error(1e-3);
    assert!(err <= 1e-8, "endpoint error {err:e}");
}

#[test]
fn rk4_is_fourth_order() {
    let ratio = oscillator_endpoint_error(0.1) / oscillator_endpoint_error(0.05);
    assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn blow_up_reported() {
    let th = builtin("oscillator").unwrap();
    let x0 = at(&th, Layer::Z, &[("q", 1.0)]);
    let r = integrate(&th.chart, |p| Ok(vec![1.0, p.values[1] * p.values[1], 0.0]), &x0, 5.0, 0.01);
    assert!(matches!(r, Err(Error::NonFiniteState(_))));
    let r = integrate(&th.chart, |_| Ok(vec![1.0, 0.0, 0.0]), &x0, 1.0, -0.1);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

#[test]
fn unified_flow_conserves_h0() {
    for (th, ic) in [
        (builtin("oscillator").unwrap(), vec![("q", 1.0), ("v", 0.3)]),
        (mech("pendulum", 1, "(1/2)*vq^2 + cos(q)"), vec![("q", 0.9), ("vq", -0.4)]),
        (mech("coupled", 2, "(1/2)*vq^2 + vr^2 + q*vr - (1/2)*q^2*r^2"), vec![("q", 0.5), ("r", -0.7), ("vq", 0.2), ("vr", 0.1)]),
    ] {
        let th = Arc::new(th);
        let flow = UnifiedFlow::on_wbar1(th.clone()).unwrap();
        let x0 = lift_to_wbar1(&th, &at(&th, Layer::Z, &ic)).unwrap();
        let traj = flow.trajectory(&x0, 1.0, 1e-3).unwrap();
        let drift = h0_drift(&th, &traj).unwrap();
        assert!(drift <= 1e-6, "{}: drift {drift:e}", th.name);
        assert!(holonomy_defect(&th, &traj).unwrap() < 1e-5, "{}", th.name);
        assert!(el_residual(&th, &traj, th.chart.layer(Layer::W0)).unwrap() < 1e-5, "{}", th.name);
    }
}

#[test]
fn cosymplectic_transport_for_the_oscillator() {
    let th = builtin("oscillator").unwrap();
    let lag = ReebProblem::lagrangian(&th).unwrap();
    let ham = ReebProblem::hamiltonian(&th).unwrap();
    let uni = ReebProblem::unified(&th).unwrap();
    let leg = legendre_map(&th).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let z = at(&th, Layer::Z, &[("t", rng.gen_range(-1.0..1.0)), ("q", rng.gen_range(-2.0..2.0)), ("v", rng.gen_range(-2.0..2.0))]);
        assert!(lag.is_cosymplectic_at(std::slice::from_ref(&z), 1e-12).unwrap());
        let xz = reeb_field(&lag, &z).unwrap();
        let xw = reeb_field(&uni, &z).unwrap();
        let zcoords = th.chart.layer(Layer::Z).coords().to_vec();
        for a in &zcoords {
            assert!((xz.get(*a) - xw.get(*a)).abs() < 1e-10);
        }
        // Push ξ_Z forward by the Jacobian of Leg and compare with ξ_{Z*}.
        let mut zs = Point::zeros(th.chart.layer(Layer::ZStar).clone());
        for (k, s) in zs.space.clone().coords().iter().enumerate() {
            zs.values[k] = match leg.get(s) {
                Some(e) => e.eval(&z).unwrap(),
                None => z.get(*s).unwrap(),
            };
        }
        let xs = reeb_field(&ham, &zs).unwrap();
        let jac = legendre_jacobian_at(&th, &z).unwrap();
        let v: Vec<f64> = zcoords.iter().map(|a| xz.get(*a)).collect();
        for (r, s) in zs.space.coords().iter().enumerate() {
            let pushed: f64 = (0..v.len()).map(|k| jac[(r, k)] * v[k]).sum();
            assert!((pushed - xs.get(*s)).abs() < 1e-10, "{s:?}");
        }
    }
}

#[test]
fn oracle_on_regular_and_null_lagrangians() {
    let sampler = Sampler::default().with_samples(64);
    let th = Arc::new(builtin("oscillator").unwrap());
    let t = presymplectic_chain_oracle(&th, &sampler, 4, SOLVE_TOL).unwrap();
    assert!(t.stabilized);
    assert_eq!(t.steps.len(), 1);

    let null = Arc::new(mech("null", 2, "0"));
    let t = presymplectic_chain_oracle(&null, &sampler, 4, SOLVE_TOL).unwrap();
    assert!(t.stabilized);
    assert_eq!(t.steps.len(), 1);
    assert_eq!(t.steps[0].accepted_fraction, 1.0);
}

#[test]
fn singular_mech_chain_matches_oracle() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let opts = ChainOptions { sampler: Sampler::default().with_samples(1000), ..Default::default() };
    let cmp = compare_with_oracle(&th, &opts).unwrap();
    assert!(cmp.agree, "{cmp:?}");
    assert_eq!(cmp.engine_final, Some(3));
    for row in &cmp.rows {
        assert_eq!(row.disagreements, 0);
        assert_eq!(row.samples, 2000);
    }
    // Step 1 rejects points with v1 ≠ 0, step 2 those with v2 ≠ 0.
    assert_eq!(cmp.rows[0].engine_accepted, 0);
    assert_eq!(cmp.rows[1].engine_accepted, 0);
    assert_eq!(cmp.rows[2].engine_accepted, 2000);
}

#[test]
fn singular_mech_flow_on_final_set() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let opts = ChainOptions { sampler: Sampler::default().with_samples(64), ..Default::default() };
    let (flow, trace) = UnifiedFlow::on_final_set(th.clone(), &opts).unwrap();
    assert_eq!(trace.final_step(), Some(3));
    let x0 = lift_to_wbar1(&th, &at(&th, Layer::Z, &[("y[1]", 0.4), ("y[2]", -1.1)])).unwrap();
    let traj = flow.trajectory(&x0, 1.0, 1e-2).unwrap();
    assert!(el_residual(&th, &traj, th.chart.layer(Layer::W0)).unwrap() <= 1e-6);
    assert!(holonomy_defect(&th, &traj).unwrap() <= 1e-10);

    let off = lift_to_wbar1(&th, &at(&th, Layer::Z, &[("v[1]", 0.5)])).unwrap();
    assert!(matches!(flow.trajectory(&off, 1.0, 1e-2), Err(Error::PointOffConstraint(_))));
}

#[test]
fn mechanics_requires_one_base_dimension() {
    let th = builtin("free_field").unwrap();
    assert!(matches!(ReebProblem::lagrangian(&th), Err(Error::Dimension(_))));
}
