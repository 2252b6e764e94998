use std::collections::BTreeMap;
use std::sync::Arc;

use fieldlab_core::bundle::quadratic::QuadraticTheory;
use fieldlab_core::bundle::{legendre_map, poincare_cartan, Formalism, LagrangianTheory, Layer};
use fieldlab_core::connection::{projector_from_coeffs, semiholonomic_defect, ConnectionKind, ConstraintSet, Provenance};
use fieldlab_core::constraint::*;
use fieldlab_core::exterior::contract_projector;
use fieldlab_core::expr::{equiv_probabilistic, EquivOptions, Point};
use fieldlab_core::mechanics::{lift_to_wbar1, reeb_field, ReebProblem};
use fieldlab_core::theories::{builtin, builtin_file};
use fieldlab_core::{CoordId, Error, Expr};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn string() -> Arc<LagrangianTheory> {
    Arc::new(builtin("bosonic_string").unwrap())
}

fn var(th: &LagrangianTheory, name: &str) -> Expr {
    Expr::coord(th.chart.coord(name).unwrap_or_else(|| panic!("{name}")))
}

fn opts_for(th: &LagrangianTheory) -> EquivOptions {
    let mut o = EquivOptions { trials: 20, tol: 1e-9, ..EquivOptions::default() };
    for (c, r) in &th.sample_box {
        o = o.with_box(*c, r.0, r.1);
    }
    o
}

fn same_set(a: &[Expr], b: &[Expr], opts: &EquivOptions) -> bool {
    let covered = |x: &[Expr], y: &[Expr]| x.iter().all(|e| y.iter().any(|f| equiv_probabilistic(e, f, opts).unwrap()));
    a.len() == b.len() && covered(a, b) && covered(b, a)
}

/// Hand-written worldsheet quantities: `h`, `h⁻¹`, `√(−det h)` and
/// `Y_{ηξ} = g_{ij} y^i_η y^j_ξ` with target metric `diag(−1, 1)`.
struct Sheet {
    h: [[Expr; 2]; 2],
    hinv: [[Expr; 2]; 2],
    s: Expr,
    det: Expr,
    yy: [[Expr; 2]; 2],
    g: [f64; 2],
}

fn sheet(th: &LagrangianTheory) -> Sheet {
    let (h00, h01, h11) = (var(th, "h[0,0]"), var(th, "h[0,1]"), var(th, "h[1,1]"));
    let det = &h00 * &h11 - &h01 * &h01;
    let hinv = [[&h11 / &det, -(&h01 / &det)], [-(&h01 / &det), &h00 / &det]];
    let g = [-1.0, 1.0];
    let y = |i: usize, e: usize| var(th, &format!("y[{i},{e}]"));
    let yy = std::array::from_fn(|e| std::array::from_fn(|f| Expr::sum((0..2).map(|i| g[i] * (y(i, e) * y(i, f))))));
    Sheet { h: [[h00.clone(), h01.clone()], [h01, h11]], hinv, s: (-det.clone()).sqrt(), det, yy, g }
}

fn reference_w1(th: &LagrangianTheory) -> Vec<Expr> {
    let sh = sheet(th);
    let mut out = Vec::new();
    for i in 0..2 {
        for mu in 0..2 {
            let t = Expr::sum((0..2).map(|e| &sh.hinv[mu][e] * &var(th, &format!("y[{i},{e}]"))));
            out.push(var(th, &format!("p[{i},{mu}]")) + sh.s.clone() * t * sh.g[i]);
        }
    }
    for ab in ["0,0", "0,1", "1,1"] {
        for mu in 0..2 {
            out.push(var(th, &format!("q[{ab},{mu}]")));
        }
    }
    out
}

fn reference_wbar1(th: &LagrangianTheory) -> Expr {
    let sh = sheet(th);
    let contr = Expr::sum((0..2).flat_map(|e| (0..2).map(move |f| (e, f))).map(|(e, f)| &sh.hinv[e][f] * &sh.yy[e][f]));
    var(th, "p") - 0.5 * (sh.s * contr)
}

/// The three metric-variation conditions; the off-diagonal one carries
/// `−½ h^{ηξ} h₀₁`.
fn reference_z2(th: &LagrangianTheory) -> Vec<Expr> {
    let sh = sheet(th);
    let minus_det = -sh.det.clone();
    let term = |a: usize, b: usize, trace: Expr| {
        Expr::sum((0..2).flat_map(|e| (0..2).map(move |f| (e, f))).map(|(e, f)| {
            (&sh.hinv[e][a] * &sh.hinv[f][b] * minus_det.clone() + &sh.hinv[e][f] * &trace) * sh.yy[e][f].clone()
        }))
    };
    vec![
        term(0, 0, 0.5 * sh.h[1][1].clone()),
        term(1, 1, 0.5 * sh.h[0][0].clone()),
        term(0, 1, -0.5 * sh.h[0][1].clone()),
    ]
}

fn scaled_zero(e: &Expr, pt: &Point) -> bool {
    let v = e.eval(pt).unwrap();
    let g: f64 = e.gradient(pt.space.coords()).unwrap().iter().map(|d| d.eval(pt).unwrap().powi(2)).sum::<f64>().sqrt();
    v.abs() <= 1e-7 * g.max(1e-12)
}

fn opts(samples: usize) -> ChainOptions {
    ChainOptions { sampler: Sampler::default().with_samples(samples), ..Default::default() }
}

#[test]
fn string_primary_unified_set() {
    let th = string();
    let set = primary_constraints_unified(&th).unwrap();
    assert!(set.entries.iter().all(|c| c.provenance == Provenance::PrimarySymbolic));
    let mut expected = reference_w1(&th);
    expected.push(reference_wbar1(&th));
    assert!(same_set(&set.exprs(), &expected, &opts_for(&th)));
}

#[test]
fn string_secondary_set() {
    let th = string();
    let expected = reference_z2(&th);
    for f in [Formalism::Lagrangian, Formalism::Unified] {
        let p = Arc::new(Problem::new(th.clone(), f).unwrap());
        let (got, prov) = secondary_constraints(&p, 2, &p.primary, SecondaryMode::Symbolic, &[]).unwrap();
        assert_eq!(prov, Provenance::SecondarySymbolic);
        assert!(same_set(&got, &expected, &opts_for(&th)), "{f:?}");
    }
    // The off-diagonal condition with a full `h^{ηξ} h₀₁` term is a different function.
    let sh = sheet(&th);
    let minus_det = -sh.det.clone();
    let full = Expr::sum((0..2).flat_map(|e| (0..2).map(move |f| (e, f))).map(|(e, f)| {
        (&sh.hinv[e][0] * &sh.hinv[f][1] * minus_det.clone() - &sh.hinv[e][f] * &sh.h[0][1]) * sh.yy[e][f].clone()
    }));
    assert!(!equiv_probabilistic(&full, &expected[2], &opts_for(&th)).unwrap());
}

fn spot_point(th: &LagrangianTheory) -> Point {
    let mut z = Point::zeros(th.chart.layer(Layer::Z).clone());
    for (n, v) in [("h[0,0]", -1.0), ("h[1,1]", 1.0), ("y[1,0]", 1.0), ("y[1,1]", 2.0)] {
        z.set(th.chart.coord(n).unwrap(), v);
    }
    z
}

#[test]
fn string_spot_value_is_rejected() {
    let th = string();
    let z = spot_point(&th);
    let c1 = reference_z2(&th)[0].eval(&z).unwrap();
    assert!((c1 - 2.5).abs() < 1e-14);
    let p = Arc::new(Problem::new(th.clone(), Formalism::Unified).unwrap());
    let engine = secondary_constraints(&p, 2, &p.primary, SecondaryMode::Symbolic, &[]).unwrap().0;
    assert!((engine[0].eval(&z).unwrap() - 2.5).abs() < 1e-14);
    let w = lift_to_wbar1(&th, &z).unwrap();
    let known = p.prepare(&p.primary).unwrap();
    let s = solve_pointwise(&p.assemble(&w, &known).unwrap(), SOLVE_TOL);
    assert!(!s.solvable && s.residual > 1e-3, "{s:?}");
    let lag = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian).unwrap());
    let s = solve_pointwise(&lag.assemble(&z, &lag.prepare(&lag.primary).unwrap()).unwrap(), SOLVE_TOL);
    assert!(!s.solvable);
}

#[test]
fn string_classifier_matches_secondary_functions() {
    let th = string();
    let p = Arc::new(Problem::new(th.clone(), Formalism::Unified).unwrap());
    let sampler = Sampler::default().with_samples(200);
    let primary = p.prepare(&p.primary).unwrap();
    let mut step2 = p.primary.clone();
    step2.extend(reference_z2(&th), Provenance::SecondarySymbolic);
    let mut pts = sampler.sample(&p, &primary, 11);
    pts.extend(sampler.sample(&p, &p.prepare(&step2).unwrap(), 12));
    assert_eq!(pts.len(), 400);
    let z2 = reference_z2(&th);
    let verdicts = classify(&p, &primary, &pts, SOLVE_TOL);
    let mut accepted = 0;
    for (pt, v) in pts.iter().zip(verdicts) {
        let on = z2.iter().all(|e| scaled_zero(e, pt));
        let ok = v.unwrap().solvable;
        assert_eq!(on, ok);
        accepted += ok as usize;
    }
    assert_eq!(accepted, 200);
}

#[test]
fn string_chains() {
    let th = string();
    for f in Formalism::ALL {
        let p = Arc::new(Problem::new(th.clone(), f).unwrap());
        let t = run_algorithm(&p, &opts(48)).unwrap();
        assert!(t.stabilized, "{f:?}");
        assert_eq!(t.final_step(), Some(2), "{f:?}");
        assert_eq!(t.steps[1].disagreements, 0);
        assert_eq!(t.steps[0].accepted_fraction, 0.0, "{f:?}");
        assert_eq!(t.steps[1].added, Some(Provenance::SecondarySymbolic));
    }
}

#[test]
fn string_hamiltonian_secondary_set_is_traceless_stress() {
    let th = string();
    let ham = Arc::new(Problem::new(th.clone(), Formalism::Hamiltonian).unwrap());
    let t = run_algorithm(&ham, &opts(32)).unwrap();
    assert_eq!(t.final_step(), Some(2));
    // ½ h^{ρσ} h_{ηξ} g^{ij} p^η_i p^ξ_j − g^{ij} p^ρ_i p^σ_j
    let sh = sheet(&th);
    let pp = |a: usize, b: usize| {
        Expr::sum((0..2).map(|i| sh.g[i] * (var(&th, &format!("p[{i},{a}]")) * var(&th, &format!("p[{i},{b}]")))))
    };
    let trace = Expr::sum((0..2).flat_map(|e| (0..2).map(move |f| (e, f))).map(|(e, f)| &sh.h[e][f] * &pp(e, f)));
    let stress: Vec<Expr> = [(0, 0), (1, 1), (0, 1)]
        .iter()
        .map(|&(a, b)| 0.5 * (&sh.hinv[a][b] * &trace) - pp(a, b))
        .collect();
    let full = ham.prepare(&ham.full_set(t.set(2))).unwrap();
    let pts = Sampler::default().with_samples(100).sample(&ham, &full, 5);
    assert_eq!(pts.len(), 100);
    for pt in &pts {
        for e in &stress {
            assert!(scaled_zero(e, pt));
        }
    }
    let off = ham.prepare(&ham.full_set(t.set(1))).unwrap();
    for pt in Sampler::default().with_samples(50).sample(&ham, &off, 6) {
        assert!(!stress.iter().all(|e| scaled_zero(e, &pt)));
    }
}

#[test]
fn singular_mech_chains() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let expect = [
        (Formalism::Lagrangian, 2),
        (Formalism::Hamiltonian, 2),
        (Formalism::Unified, 3),
        (Formalism::UnifiedRestricted, 2),
    ];
    for (f, last) in expect {
        let p = Arc::new(Problem::new(th.clone(), f).unwrap());
        let t = run_algorithm(&p, &opts(128)).unwrap();
        assert_eq!(t.final_step(), Some(last), "{f:?}");
        for w in t.sets.windows(2) {
            assert_eq!(&w[1].entries[..w[0].len()].len(), &w[0].len());
            assert!(w[1].len() > w[0].len());
        }
    }
    let p = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian).unwrap());
    let t = run_algorithm(&p, &opts(64)).unwrap();
    assert_eq!(t.set(2).exprs().len(), 1);
    let v1 = var(&th, "v[1]");
    assert!(equiv_probabilistic(&t.set(2).exprs()[0], &v1, &opts_for(&th)).unwrap());
}

#[test]
fn accepted_sets_shrink() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let p = Arc::new(Problem::new(th.clone(), Formalism::Unified).unwrap());
    let t = run_algorithm(&p, &opts(64)).unwrap();
    for r in 2..=t.steps.len() {
        let prev = p.prepare(t.set(r - 1)).unwrap();
        for pt in Sampler::default().with_samples(64).sample(&p, &p.prepare(t.set(r)).unwrap(), 50 + r as u64) {
            assert!(prev.violation_at(&pt).unwrap() <= prev.tol);
        }
    }
}

fn stripped(name: &str) -> Arc<LagrangianTheory> {
    let mut f = builtin_file(name).unwrap();
    f.cokernel = None;
    f.registered = BTreeMap::new();
    Arc::new(f.build().unwrap())
}

#[test]
fn numeric_mode_recovers_singular_mech_chain() {
    let th = stripped("singular_mech");
    let reference = Arc::new(builtin("singular_mech").unwrap());
    for (f, last) in [(Formalism::Lagrangian, 2), (Formalism::Unified, 3), (Formalism::UnifiedRestricted, 2)] {
        let p = Arc::new(Problem::new(th.clone(), f).unwrap());
        let t = run_algorithm(&p, &opts(64)).unwrap();
        assert_eq!(t.final_step(), Some(last), "{f:?}");
        assert!(t.steps[1..].iter().all(|s| s.added == Some(Provenance::NumericOnly)));
        // The numeric sets coincide with the symbolic ones.
        let rp = Arc::new(Problem::new(reference.clone(), f).unwrap());
        let rt = run_algorithm(&rp, &opts(64)).unwrap();
        for r in 1..=last {
            let mine = p.prepare(&p.full_set(t.set(r))).unwrap();
            let theirs = rp.prepare(&rp.full_set(rt.set(r))).unwrap();
            for pt in Sampler::default().with_samples(40).sample(&rp, &theirs, 70 + r as u64) {
                assert!(mine.violation_at(&pt).unwrap() <= mine.tol, "{f:?} r={r}");
            }
            for pt in Sampler::default().with_samples(40).sample(&p, &mine, 80 + r as u64) {
                assert!(theirs.violation_at(&pt).unwrap() <= theirs.tol, "{f:?} r={r}");
            }
        }
    }
}

#[test]
fn symbolic_mode_needs_a_cokernel() {
    let th = stripped("singular_mech");
    let p = Arc::new(Problem::new(th.clone(), Formalism::Lagrangian).unwrap());
    let o = ChainOptions { mode: SecondaryMode::Symbolic, ..opts(32) };
    match run_algorithm(&p, &o) {
        Err(Error::NoCokernelRegistered(name)) => assert_eq!(name, "singular_mech"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn transports_agree() {
    for name in ["singular_mech", "bosonic_string", "free_field"] {
        let th = Arc::new(builtin(name).unwrap());
        let rep = transport_and_compare(&th, &opts(64)).unwrap();
        assert!(rep.max_violation <= 1e-8, "{name}: {:?}", rep.rows);
        assert!(rep.same_final_step, "{name}: {:?}", rep.final_steps);
        assert!(rep.rows.iter().all(|r| r.samples > 0));
    }
}

#[test]
fn unified_points_are_restricted_points() {
    for name in ["singular_mech", "bosonic_string"] {
        let th = Arc::new(builtin(name).unwrap());
        let rows = unified_inclusion(&th, &opts(48)).unwrap();
        assert!(rows.iter().all(|r| r.violations == 0), "{name}: {rows:?}");
        assert!(rows.iter().any(|r| r.checked > 0));
    }
}

#[test]
fn free_field_chains_are_trivial() {
    let th = Arc::new(builtin("free_field").unwrap());
    for f in Formalism::ALL {
        let p = Arc::new(Problem::new(th.clone(), f).unwrap());
        let t = run_algorithm(&p, &opts(32)).unwrap();
        assert_eq!(t.final_step(), Some(1), "{f:?}");
        assert_eq!(t.sets.len(), 1);
    }
    let p = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
    assert!(p.primary.is_empty());
}

#[test]
fn free_field_primary_agrees_with_full_energy_on_w1() {
    let th = builtin("free_field").unwrap();
    let set = primary_constraints_unified(&th).unwrap().exprs();
    let z = |mu: usize| var(&th, &format!("z[1,{mu}]"));
    let pm = |mu: usize| var(&th, &format!("p[1,{mu}]"));
    let o = opts_for(&th);
    assert!(equiv_probabilistic(&set[0], &(pm(1) - z(1)), &o).unwrap());
    assert!(equiv_probabilistic(&set[1], &(pm(2) - z(2)), &o).unwrap());
    // p + p^μ z_μ − ½Σz², read on W₁ (p^μ = z_μ), is the reduced energy.
    let full = var(&th, "p") + pm(1) * z(1) + pm(2) * z(2) - 0.5 * (z(1) * z(1) + z(2) * z(2));
    let mut on_w1 = std::collections::HashMap::new();
    for mu in 1..=2 {
        on_w1.insert(th.chart.coord(&format!("p[1,{mu}]")).unwrap(), z(mu));
    }
    assert!(equiv_probabilistic(&set[2], &full.substitute(&on_w1), &o).unwrap());
}

#[test]
fn null_lagrangian_primary() {
    let mut f = builtin_file("free_field").unwrap();
    f.lagrangian = fieldlab_core::theories::Formula::Plain("0".into());
    f.hamiltonian = None;
    let th = f.build().unwrap();
    let set = primary_constraints_unified(&th).unwrap().exprs();
    let o = opts_for(&th);
    let expected = [var(&th, "p[1,1]"), var(&th, "p[1,2]"), var(&th, "p")];
    assert!(same_set(&set, &expected, &o));
}

#[test]
fn unknown_free_rows_are_primary_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut theories: Vec<LagrangianTheory> = vec![builtin("free_field").unwrap(), builtin("bosonic_string").unwrap()];
    for k in 0..4 {
        theories.push(QuadraticTheory::random(&mut rng, 2, 1 + k % 2, k % 2 == 1).theory("quad").unwrap());
    }
    for th in theories {
        let th = Arc::new(th);
        let p = Problem::new(th.clone(), Formalism::Unified).unwrap();
        let none = p.prepare(&ConstraintSet::new(Layer::W0)).unwrap();
        for j in 0..5 {
            let pt = Sampler::default().candidate(&p, 99, j);
            let sys = p.assemble(&pt, &none).unwrap();
            let mut seen = 0;
            for (r, key) in sys.rows.iter().enumerate() {
                let RowKey::Form(coords) = key else { continue };
                let Some(z) = coords.iter().find(|c| c.space == fieldlab_core::Space::Jet) else { continue };
                assert!(sys.matrix.row(r).iter().all(|v| *v == 0.0), "{}", th.name);
                let residual = Expr::coord(CoordId::momentum(z.i as usize, z.mu as usize)) - th.lagrangian.diff(*z).unwrap();
                let want = residual.eval(&pt).unwrap();
                assert!((sys.rhs[r].abs() - want.abs()).abs() <= 1e-12 * (1.0 + want.abs()), "{}", th.name);
                seen += 1;
            }
            assert_eq!(seen, th.n() * th.m());
        }
    }
}

#[test]
fn regular_lagrangian_solutions_are_semiholonomic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..20 {
        let q = QuadraticTheory::random(&mut rng, 2, 1 + k % 2, false);
        let th = Arc::new(q.theory("regular").unwrap());
        let p = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
        let (_, omega) = poincare_cartan(&th).unwrap();
        let none = p.prepare(&p.primary).unwrap();
        for j in 0..5 {
            let pt = Sampler::default().candidate(&p, 7, j);
            let sys = p.assemble(&pt, &none).unwrap();
            let s = solve_pointwise(&sys, SOLVE_TOL);
            assert!(s.solvable);
            let c = sys.coefficients(ConnectionKind::LagrangianZ, th.chart.clone(), &s.solution).unwrap();
            let d = semiholonomic_defect(&c, &pt).unwrap();
            assert!(d.iter().all(|x| x.abs() <= 1e-10), "{d:?}");
            let h = projector_from_coeffs(&c);
            let w = omega.eval(&pt).unwrap();
            let lhs = contract_projector(&w, &h).unwrap();
            let gap = lhs.sub(&w.scale(&(th.n() as f64 - 1.0)));
            assert!(gap.max_abs() <= 1e-10 * (1.0 + w.max_abs()), "{}", gap.max_abs());
        }
    }
}

#[test]
fn free_field_system_is_euler_lagrange() {
    let th = Arc::new(builtin("free_field").unwrap());
    let p = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
    let none = p.prepare(&p.primary).unwrap();
    let mut pt = Point::zeros(p.space.clone());
    for (n, v) in [("y[1]", 0.3), ("z[1,1]", 0.7), ("z[1,2]", -1.2)] {
        pt.set(th.chart.coord(n).unwrap(), v);
    }
    let sys = p.assemble(&pt, &none).unwrap();
    let col = |mu: usize, name: &str| sys.columns.iter().position(|k| *k == (mu, th.chart.coord(name).unwrap())).unwrap();
    let residual = |x: &[f64]| (&sys.matrix * DVector::from_column_slice(x) - &sys.rhs).amax();
    let mut x = vec![0.0; sys.columns.len()];
    x[col(0, "y[1]")] = 0.7;
    x[col(1, "y[1]")] = -1.2;
    assert!(residual(&x) < 1e-14);
    // Γ_{11} + Γ_{22} = 0 is the wave equation; the mixed terms are free.
    x[col(0, "z[1,1]")] = 2.0;
    x[col(1, "z[1,2]")] = -2.0;
    x[col(1, "z[1,1]")] = 5.0;
    assert!(residual(&x) < 1e-14);
    x[col(1, "z[1,2]")] = 0.0;
    assert!(residual(&x) > 0.1);
    x[col(1, "z[1,2]")] = -2.0;
    x[col(0, "y[1]")] = 0.0;
    assert!(residual(&x) > 0.1);
}

#[test]
fn mechanics_system_is_the_reeb_system() {
    let th = Arc::new(builtin("oscillator").unwrap());
    let p = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
    let rp = ReebProblem::lagrangian(&th).unwrap();
    let none = p.prepare(&p.primary).unwrap();
    for j in 0..10 {
        let pt = Sampler::default().candidate(&p, 3, j);
        let sys = p.assemble(&pt, &none).unwrap();
        let s = solve_pointwise(&sys, SOLVE_TOL);
        assert!(s.solvable && s.nullity == 0);
        let lift = sys.coefficients(ConnectionKind::LagrangianZ, th.chart.clone(), &s.solution).unwrap().lift(0);
        let xi = reeb_field(&rp, &pt).unwrap();
        for c in p.space.coords() {
            assert!((lift.get(*c) - xi.get(*c)).abs() < 1e-10);
        }
    }
}

#[test]
fn regular_unified_system_leaves_energy_coefficient_free() {
    let th = Arc::new(builtin("free_field").unwrap());
    let p = Problem::new(th.clone(), Formalism::Unified).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut z = Point::zeros(th.chart.layer(Layer::Z).clone());
    for v in z.values.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let w = lift_to_wbar1(&th, &z).unwrap();
    let none = p.prepare(&ConstraintSet::new(Layer::W0)).unwrap();
    let sys = p.assemble(&w, &none).unwrap();
    let s = solve_pointwise(&sys, SOLVE_TOL);
    assert!(s.solvable && s.nullity > 0);
    let c = sys.coefficients(ConnectionKind::UnifiedW0, th.chart.clone(), &s.solution).unwrap();
    for mu in 0..2 {
        let zv = z.get(CoordId::jet(0, mu)).unwrap();
        assert!((c.gamma(0, mu) - zv).abs() < 1e-12);
    }
    // With tangency to W̄₁ the energy coefficients are pinned.
    let known = p.prepare(&p.primary).unwrap();
    let s2 = solve_pointwise(&p.assemble(&w, &known).unwrap(), SOLVE_TOL);
    assert!(s2.solvable && s2.nullity < s.nullity + sys.rows.len());
}

#[test]
fn zero_row_system_is_solvable() {
    let th = builtin("oscillator").unwrap();
    let space = th.chart.layer(Layer::Z).clone();
    let sys = ProjectorSystem {
        formalism: Formalism::Lagrangian,
        point: Point::zeros(space.clone()),
        matrix: nalgebra::DMatrix::zeros(0, 3),
        rhs: DVector::zeros(0),
        columns: vec![],
        column_labels: vec![],
        rows: vec![],
        frame: Frame::identity(space.coords()),
        n: 1,
    };
    let s = solve_pointwise(&sys, SOLVE_TOL);
    assert!(s.solvable);
    assert_eq!(s.residual, 0.0);
}

#[test]
fn layer_and_membership_errors() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let lag = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
    let foreign = ConstraintSet::new(Layer::Z).with([var(&th, "p[1]")], Provenance::PrimarySymbolic);
    assert!(matches!(lag.prepare(&foreign), Err(Error::LayerMismatch(_))));
    let zs = Point::zeros(th.chart.layer(Layer::ZStar).clone());
    assert!(matches!(lag.localize(&zs), Err(Error::LayerMismatch(_))));

    let v1 = ConstraintSet::new(Layer::Z).with([var(&th, "v[1]")], Provenance::SecondarySymbolic);
    let known = lag.prepare(&v1).unwrap();
    let mut pt = Point::zeros(lag.space.clone());
    pt.set(th.chart.coord("v[1]").unwrap(), 0.5);
    assert!(matches!(lag.assemble(&pt, &known), Err(Error::PointOffConstraint(_))));

    let ham = Problem::new(th.clone(), Formalism::Hamiltonian).unwrap();
    let mut off = Point::zeros(ham.space.clone());
    off.set(th.chart.coord("p[2]").unwrap(), 1.0);
    let none = ham.prepare(&ham.primary).unwrap();
    assert!(matches!(ham.assemble(&off, &none), Err(Error::PointOffConstraint(_))));
}

#[test]
fn legendre_images_of_string_points_satisfy_hamiltonian_frame() {
    let th = string();
    let leg = legendre_map(&th).unwrap();
    let lag = Problem::new(th.clone(), Formalism::Lagrangian).unwrap();
    let ham = Problem::new(th.clone(), Formalism::Hamiltonian).unwrap();
    for j in 0..10 {
        let z = Sampler::default().candidate(&lag, 1, j);
        let img = legendre_point(&th, &leg, &z).unwrap();
        assert!(ham.frame.violation_at(&img).unwrap() <= 1e-12);
    }
}

#[test]
fn trace_json_shape() {
    let th = Arc::new(builtin("singular_mech").unwrap());
    let p = Arc::new(Problem::new(th, Formalism::Lagrangian).unwrap());
    let t = run_algorithm(&p, &opts(16)).unwrap();
    let v = serde_json::to_value(&t).unwrap();
    assert_eq!(v["formalism"], "lagrangian");
    assert_eq!(v["stabilized"], true);
    let s = &v["steps"][1];
    assert_eq!(s["r"], 2);
    assert_eq!(s["constraints"][0], "v[1]");
    assert!(s["accepted_fraction"].is_number() && s["max_residual"].is_number());
}
