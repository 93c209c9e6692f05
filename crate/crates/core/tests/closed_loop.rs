use escreg::averaging::VectorField;
use escreg::closed_loop::{averaged_closed_loop, FieldKind};
use escreg::linalg::{lyapunov_solve, norm};
use escreg::plant::plant_rhs_into;
use escreg::scenario::{BuiltScenario, ScenarioConfig};
use escreg::sim::{error_view, integrate, integrate_field, ultimate_bound};
use escreg::sweep::verify_averaging;

fn build(json: &str) -> BuiltScenario {
    ScenarioConfig::from_json(json).unwrap().build().unwrap()
}

#[test]
fn zero_dynamics_lyapunov_function_decreases() {
    let built = build("{}");
    let core = built.scenario.core.clone();
    let plant = core.plant.clone();
    let ss = built.steady_state.clone();
    let p = lyapunov_solve(plant.f()).unwrap();
    assert!(p.leading_minors_positive());

    // z-subsystem with the output pinned to the reference (e ≡ 0)
    let v_sig = ss.v_ss.clone();
    let pl = plant.clone();
    let field = escreg::averaging::FnField::new(2, move |z, t, out| {
        let v = v_sig.eval(t);
        let _ = plant_rhs_into(z, pl.q(&v), &v, 0.0, pl.as_ref(), out);
    });
    let z_ss = ss.z_ss.clone();
    let traj = integrate_field(&field, &[2.0, -1.5], 20.0, 1e-3, 50, vec!["V0".into()], |t, z, row| {
        let zs = z_ss.eval(t);
        let zb = [z[0] - zs[0], z[1] - zs[1]];
        row[0] = zb.iter().zip(p.vec_mul(&zb)).map(|(a, b)| a * b).sum();
    })
    .unwrap();
    let v0 = traj.channel("V0").unwrap();
    assert!(v0.windows(2).all(|w| w[1] < w[0]), "V0 not decreasing");
    assert!(v0.last().unwrap() < &(1e-6 * v0[0]));
    assert!(field.eval(&[0.0, 0.0], 0.0).iter().all(|x| x.is_finite()));
}

#[test]
fn regulation_independent_of_control_direction() {
    for b in [-1.0, 1.0] {
        let built = build(&format!(r#"{{"b": {b}, "omega": 400}}"#));
        let traj = integrate(&built.scenario).unwrap();
        let ub = ultimate_bound(&traj, "e", 0.2).unwrap();
        assert!(ub < 0.2, "b = {b}: ultimate bound {ub}");
        let early = ultimate_bound(&traj, "e", 0.95).unwrap();
        assert!(ub < early);
    }
}

#[test]
fn estimator_error_shrinks() {
    let built = build(r#"{"omega": 400}"#);
    let traj = integrate(&built.scenario).unwrap();
    let view = error_view(&traj, &built.steady_state, -1.0).unwrap();
    let norms = view.vartheta_error_norms();
    let n = norms.len();
    assert!(norms[n - 1] < 0.7 * norms[0], "{} vs {}", norms[n - 1], norms[0]);
    assert!(view.etabar.iter().flatten().all(|v| v.is_finite()));
}

#[test]
fn averaged_loop_tracks_dithered_loop() {
    let built = build(r#"{"horizon": 10}"#);
    let devs = verify_averaging(&built, &[100.0, 400.0], 10.0).unwrap();
    assert!(devs[1].sup < 0.7 * devs[0].sup, "{devs:?}");
    let avg = averaged_closed_loop(&built.scenario);
    assert_eq!(avg.kind, FieldKind::Averaged);
    assert!(norm(&avg.eval(&built.scenario.x0, 0.0)).is_finite());
}
