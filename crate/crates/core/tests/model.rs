use std::f64::consts::PI;

use ferry_core::field::{EnvModel, QuadraticField2D};
use ferry_core::model::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_state(rng: &mut ChaCha8Rng) -> State {
    State {
        x_l: rng.gen_range(-100.0..2600.0),
        y_l: rng.gen_range(-200.0..200.0),
        psi: rng.gen_range(-4.0..4.0),
        u_bf: rng.gen_range(-3.0..8.0),
        v_bf: rng.gen_range(-2.0..2.0),
        r_bf: rng.gen_range(-0.1..0.1),
    }
}

fn random_input(rng: &mut ChaCha8Rng) -> ControlInput {
    ControlInput { x_a: rng.gen_range(-30000.0..30000.0), y_a: rng.gen_range(-30000.0..30000.0), rdot_bf: rng.gen_range(-0.01..0.01) }
}

fn random_field(rng: &mut ChaCha8Rng, amplitude: f64) -> QuadraticField2D {
    let mut p = [0.0; 12];
    for (i, v) in p.iter_mut().enumerate() {
        *v = match i % 6 {
            0..=2 => amplitude * rng.gen_range(-1e-6..1e-6),
            3 | 4 => amplitude * rng.gen_range(-1e-3..1e-3),
            _ => amplitude * rng.gen_range(-1.0..1.0),
        };
    }
    QuadraticField2D::from_parameters(&p)
}

fn random_env(rng: &mut ChaCha8Rng) -> EnvModel {
    EnvModel::new(random_field(rng, 12.0), random_field(rng, 0.3))
}

/// The field seen from axes rotated by `theta`: `F'(p) = R F(Rᵀp)`.
fn rotate_field(f: &QuadraticField2D, theta: f64) -> QuadraticField2D {
    let (s, c) = theta.sin_cos();
    let r = [[c, -s], [s, c]];
    let mul = |a: [[f64; 2]; 2], b: [[f64; 2]; 2]| {
        let mut o = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                o[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        o
    };
    let rt = [[c, s], [-s, c]];
    let mut q = [[[0.0; 2]; 2]; 2];
    let mut l = [[0.0; 2]; 2];
    let mut mu = [0.0; 2];
    for cc in 0..2 {
        for d in 0..2 {
            let rq = mul(mul(r, f.q(d)), rt);
            let ld = f.l(d);
            let lr = [ld[0] * rt[0][0] + ld[1] * rt[1][0], ld[0] * rt[0][1] + ld[1] * rt[1][1]];
            for i in 0..2 {
                l[cc][i] += r[cc][d] * lr[i];
                for j in 0..2 {
                    q[cc][i][j] += r[cc][d] * rq[i][j];
                }
            }
            mu[cc] += r[cc][d] * f.mu()[d];
        }
    }
    QuadraticField2D::new(q, l, mu)
}

#[test]
fn rotation_identity_and_quarter_turn() {
    assert_eq!(rotation_body_to_enu(0.0), [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let j = rotation_body_to_enu(PI / 2.0);
    let mapped = [j[0][0], j[1][0], j[2][0]];
    assert!(mapped[0].abs() < 1e-15 && (mapped[1] - 1.0).abs() < 1e-15 && mapped[2] == 0.0);
}

#[test]
fn rotation_is_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..50 {
        let j = rotation_body_to_enu(rng.gen_range(-10.0..10.0));
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| j[k][a] * j[k][b]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn relative_velocity_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = random_state(&mut rng);
    let r = relative_velocity(&s, &QuadraticField2D::zero());
    assert_eq!((r.u_r, r.v_r, r.gamma_r), (s.u_bf, s.v_bf, s.v_bf.atan2(s.u_bf)));

    let r = relative_velocity(&State::at_rest(5.0, 5.0, 0.0), &QuadraticField2D::uniform([1.0, 0.0]));
    assert_eq!((r.u_r, r.v_r), (-1.0, 0.0));
    assert!((r.gamma_r - PI).abs() < 1e-15);

    let s = State { u_bf: 2.0, ..State::at_rest(0.0, 0.0, PI / 2.0) };
    let r = relative_velocity(&s, &QuadraticField2D::uniform([0.0, 2.0]));
    assert!(r.u_r.abs() < 1e-15 && r.v_r.abs() < 1e-15);
    assert_eq!(relative_velocity(&State::default(), &QuadraticField2D::zero()).gamma_r, 0.0);
}

#[test]
fn damping_examples() {
    let p = FerryParams::default();
    assert_eq!(damping_force(0.0, 0.0, &p), [0.0, 0.0]);
    assert_eq!(damping_force(1.0, 0.0, &p), [2223.0, 0.0]);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let (u, v) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let a = damping_force(u, v, &p);
        let b = damping_force(-u, -v, &p);
        assert_eq!(a, [-b[0], -b[1]]);
    }
}

#[test]
fn wind_examples() {
    let p = FerryParams::default();
    assert_eq!(wind_force(&State::default(), &QuadraticField2D::zero(), &p), [0.0, 0.0]);
    // Vessel at 3 m/s into still air: relative wind speed V = 3 along surge.
    let s = State { u_bf: 3.0, ..State::at_rest(0.0, 0.0, 0.3) };
    let f = wind_force(&s, &QuadraticField2D::zero(), &p);
    assert!((f[0] + 0.5 * p.rho * 9.0 * p.c_x * p.A_Fw).abs() < 1e-12);
    assert_eq!(f[1], 0.0);
}

#[test]
fn coriolis_examples() {
    let p = FerryParams::default();
    let s = State { u_bf: 1.0, r_bf: 0.1, ..State::default() };
    let c = coriolis_force(&s, &p);
    assert_eq!(c[0], 0.0);
    assert!((c[1] - 3500.0).abs() < 1e-9);
    assert_eq!(coriolis_force(&State { u_bf: 3.0, v_bf: 1.0, ..State::default() }, &p), [0.0, 0.0]);
}

#[test]
fn equilibrium_at_rest() {
    let d = dynamics(&State::at_rest(10.0, -3.0, 1.0), &ControlInput::default(), &EnvModel::calm(), &FerryParams::default());
    assert_eq!(d, [0.0; 6]);
}

#[test]
fn dynamics_term_by_term() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let p = FerryParams::default();
    for _ in 0..100 {
        let (s, u, env) = (random_state(&mut rng), random_input(&mut rng), random_env(&mut rng));
        let d = dynamics(&s, &u, &env, &p);

        let (sn, cs) = s.psi.sin_cos();
        assert!((d[0] - (cs * s.u_bf - sn * s.v_bf)).abs() < 1e-12);
        assert!((d[1] - (sn * s.u_bf + cs * s.v_bf)).abs() < 1e-12);
        assert_eq!(d[2], s.r_bf);

        // Each force written out from its definition.
        let cur = env.current.value(s.position());
        let ur = s.u_bf - (cs * cur[0] + sn * cur[1]);
        let vr = s.v_bf - (-sn * cur[0] + cs * cur[1]);
        let damp = [p.X_u * ur + p.X_uu * ur.abs() * ur, p.Y_v * vr + p.Y_vv * vr.abs() * vr];
        let w = env.wind.value(s.position());
        let uw = s.u_bf - (cs * w[0] + sn * w[1]);
        let vw = s.v_bf - (-sn * w[0] + cs * w[1]);
        let g = vw.atan2(uw);
        let v2 = uw * uw + vw * vw;
        let wind = [-0.5 * p.rho * v2 * p.c_x * g.cos() * p.A_Fw, -0.5 * p.rho * v2 * p.c_y * g.sin() * p.A_Lw];
        let cor = [-p.m * s.v_bf * s.r_bf, p.m * s.u_bf * s.r_bf];
        let du = (u.x_a + wind[0] - cor[0] - damp[0]) / p.m;
        let dv = (u.y_a + wind[1] - cor[1] - damp[1]) / p.m;
        assert!((d[3] - du).abs() <= 1e-12 * du.abs().max(1.0), "{} {}", d[3], du);
        assert!((d[4] - dv).abs() <= 1e-12 * dv.abs().max(1.0), "{} {}", d[4], dv);
        assert_eq!(d[5], u.rdot_bf);
    }
}

#[test]
fn linearization_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let p = FerryParams::default();
    for _ in 0..100 {
        let (s, u, env) = (random_state(&mut rng), random_input(&mut rng), random_env(&mut rng));
        let lin = linearize(&s, &u, &env, &p);
        let x = s.to_array();
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let fa = dynamics(&State::from(a), &u, &env, &p);
            let fb = dynamics(&State::from(b), &u, &env, &p);
            for i in 0..6 {
                let fd = (fa[i] - fb[i]) / (2.0 * h);
                assert!((fd - lin.a[i][j]).abs() <= 1e-5 * lin.a[i][j].abs().max(1e-3), "A[{i}][{j}] {} vs {fd}", lin.a[i][j]);
            }
        }
        let w = u.to_array();
        for j in 0..3 {
            let h = 1e-6 * w[j].abs().max(1.0);
            let (mut a, mut b) = (w, w);
            a[j] += h;
            b[j] -= h;
            let fa = dynamics(&s, &ControlInput::from(a), &env, &p);
            let fb = dynamics(&s, &ControlInput::from(b), &env, &p);
            for i in 0..6 {
                let fd = (fa[i] - fb[i]) / (2.0 * h);
                assert!((fd - lin.b[i][j]).abs() <= 1e-5 * lin.b[i][j].abs().max(1e-6), "B[{i}][{j}]");
            }
        }
    }
}

#[test]
fn step_sensitivity_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let p = FerryParams::default();
    for _ in 0..20 {
        let (s, u, env) = (random_state(&mut rng), random_input(&mut rng), random_env(&mut rng));
        let sens = integrate_with_sensitivity(&s, &u, &env, &p, 6.0, 2);
        let end = integrate(&s, &u, &env, &p, 6.0, 2).unwrap().to_array();
        for i in 0..6 {
            assert!((sens.end[i] - end[i]).abs() < 1e-12 * end[i].abs().max(1.0));
        }
        let x = s.to_array();
        for j in 0..6 {
            let h = 1e-6 * x[j].abs().max(1.0);
            let (mut a, mut b) = (x, x);
            a[j] += h;
            b[j] -= h;
            let ea = integrate(&State::from(a), &u, &env, &p, 6.0, 2).unwrap().to_array();
            let eb = integrate(&State::from(b), &u, &env, &p, 6.0, 2).unwrap().to_array();
            for i in 0..6 {
                let fd = (ea[i] - eb[i]) / (2.0 * h);
                assert!((fd - sens.dx[i][j]).abs() <= 1e-5 * sens.dx[i][j].abs().max(1e-2), "dx[{i}][{j}]");
            }
        }
    }
}

#[test]
fn power_examples() {
    let p = FerryParams::default();
    assert_eq!(power(&ControlInput::default(), &p), 0.0);
    let w = power(&ControlInput { x_a: 20000.0, ..Default::default() }, &p);
    assert!((w - 83400.0).abs() < 1e-6, "{w}");
    let a = power(&ControlInput { x_a: 3000.0, y_a: -7000.0, rdot_bf: 0.0 }, &p);
    let b = power(&ControlInput { x_a: -7000.0, y_a: 3000.0, rdot_bf: 0.5 }, &p);
    let c = power(&ControlInput { x_a: -3000.0, y_a: -7000.0, rdot_bf: 0.0 }, &p);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn smoothed_power_derivatives() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for _ in 0..100 {
        let (x, y) = (rng.gen_range(-48000.0..48000.0), rng.gen_range(-48000.0..48000.0));
        let (g, h) = power_derivatives(x, y, 0.0417, 1.0);
        let step = 1e-4 * x.abs().max(y.abs()).max(1.0);
        let fx = (power_smoothed(x + step, y, 0.0417, 1.0) - power_smoothed(x - step, y, 0.0417, 1.0)) / (2.0 * step);
        let fy = (power_smoothed(x, y + step, 0.0417, 1.0) - power_smoothed(x, y - step, 0.0417, 1.0)) / (2.0 * step);
        let scale = g[0].abs().max(g[1].abs());
        assert!((fx - g[0]).abs() <= 1e-5 * scale && (fy - g[1]).abs() <= 1e-5 * scale);
        let gx = power_derivatives(x + step, y, 0.0417, 1.0).0;
        let gm = power_derivatives(x - step, y, 0.0417, 1.0).0;
        let hs = h[0][0].abs().max(h[1][1].abs()).max(h[0][1].abs());
        assert!(((gx[0] - gm[0]) / (2.0 * step) - h[0][0]).abs() <= 1e-5 * hs);
        assert!(((gx[1] - gm[1]) / (2.0 * step) - h[1][0]).abs() <= 1e-5 * hs);
    }
}

#[test]
fn allocation_examples() {
    let p = FerryParams::default();
    let a = allocate_actuators(1000.0, 0.0, &p).unwrap();
    assert_eq!((a.f_at, a.alpha), (500.0, 0.0));
    let a = allocate_actuators(0.0, 1000.0, &p).unwrap();
    assert_eq!(a.f_at, 500.0);
    assert!((a.alpha - PI / 2.0).abs() < 1e-15);
    assert_eq!(allocate_actuators(0.0, 0.0, &p).unwrap().alpha, 0.0);
}

#[test]
fn allocation_round_trip() {
    let p = FerryParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let r = rng.gen_range(0.0..48000.0);
        let t = rng.gen_range(-PI..PI);
        let (x, y) = (r * t.cos(), r * t.sin());
        let a = allocate_actuators(x, y, &p).unwrap();
        assert!(a.f_at <= p.F_AT_max);
        assert!((2.0 * a.f_at * a.alpha.cos() - x).abs() < 1e-12 * r.max(1.0));
        assert!((2.0 * a.f_at * a.alpha.sin() - y).abs() < 1e-12 * r.max(1.0));
    }
}

/// Surge and sway held constant by inputs that cancel hydrodynamic and air
/// drag and the Coriolis term, so the hull runs on a circle.
fn arc_setup(u: f64, omega: f64) -> (State, ControlInput, FerryParams) {
    let p = FerryParams::default();
    let s = State { u_bf: u, r_bf: omega, ..State::at_rest(100.0, -20.0, 0.4) };
    let input = ControlInput { x_a: p.X_u * u + p.X_uu * u * u + 0.5 * p.rho * p.c_x * p.A_Fw * u * u, y_a: p.m * u * omega, rdot_bf: 0.0 };
    (s, input, p)
}

fn arc_error(dt: f64, t_end: f64) -> f64 {
    let (u, omega) = (5.0, 0.05);
    let (s, input, p) = arc_setup(u, omega);
    let env = EnvModel::calm();
    let steps = (t_end / dt).round() as usize;
    let mut x = s;
    for _ in 0..steps {
        x = rk4_step(&x, &input, &env, &p, dt).unwrap();
    }
    let psi = s.psi + omega * t_end;
    let ex = s.x_l + u / omega * (psi.sin() - s.psi.sin());
    let ey = s.y_l - u / omega * (psi.cos() - s.psi.cos());
    (x.x_l - ex).hypot(x.y_l - ey)
}

#[test]
fn circular_arc_and_order() {
    let t_end = 120.0;
    let errors: Vec<f64> = [8.0, 4.0, 2.0, 1.0].iter().map(|&dt| arc_error(dt, t_end)).collect();
    assert!(errors[3] < 1e-5, "{errors:?}");
    for w in errors.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() <= 0.2, "order {order}, errors {errors:?}");
    }
}

#[test]
fn zero_derivative_leaves_state() {
    let s = State::at_rest(3.0, 4.0, 5.0);
    let x = rk4_step(&s, &ControlInput::default(), &EnvModel::calm(), &FerryParams::default(), 10.0).unwrap();
    assert_eq!(x, s);
}

#[test]
fn non_finite_integration_is_an_error() {
    let s = State { u_bf: 1e200, ..State::default() };
    let r = rk4_step(&s, &ControlInput::default(), &EnvModel::calm(), &FerryParams::default(), 1.0);
    assert_eq!(r, Err(ModelError::NonFinite));
}

#[test]
fn frame_rotation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let p = FerryParams::default();
    for _ in 0..5 {
        let theta = rng.gen_range(-PI..PI);
        let env = random_env(&mut rng);
        let renv = EnvModel::new(rotate_field(&env.wind, theta), rotate_field(&env.current, theta));
        let (sn, cs) = theta.sin_cos();
        let rot = |s: &State| State { x_l: cs * s.x_l - sn * s.y_l, y_l: sn * s.x_l + cs * s.y_l, psi: s.psi + theta, ..*s };
        let mut a = random_state(&mut rng);
        let mut b = rot(&a);
        for _ in 0..100 {
            let u = random_input(&mut rng);
            a = rk4_step(&a, &u, &env, &p, 1.0).unwrap();
            b = rk4_step(&b, &u, &renv, &p, 1.0).unwrap();
            let expect = rot(&a).to_array();
            for (x, y) in expect.iter().zip(b.to_array()) {
                assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0), "{expect:?} vs {b:?}");
            }
        }
    }
}

proptest! {
    #[test]
    fn drag_is_dissipative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = FerryParams::default();
        let s = random_state(&mut rng);
        let env = random_env(&mut rng);
        let rw = relative_velocity(&s, &env.wind);
        let w = wind_force(&s, &env.wind, &p);
        prop_assert!(w[0] * rw.u_r + w[1] * rw.v_r <= 0.0);
        let rc = relative_velocity(&s, &env.current);
        let d = damping_force(rc.u_r, rc.v_r, &p);
        // The dynamics subtract D, so D·v_r ≥ 0 is dissipation.
        prop_assert!(d[0] * rc.u_r + d[1] * rc.v_r >= 0.0);
    }

    #[test]
    fn coriolis_does_no_work(u in -10.0..10.0f64, v in -5.0..5.0f64, r in -1.0..1.0f64) {
        let c = coriolis_force(&State { u_bf: u, v_bf: v, r_bf: r, ..State::default() }, &FerryParams::default());
        // Zero up to the rounding of the two triple products.
        let bound = 4.0 * f64::EPSILON * (FerryParams::default().m * u * v * r).abs();
        prop_assert!((c[0] * u + c[1] * v).abs() <= bound);
    }

    #[test]
    fn kinematics_hold_regardless_of_forces(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (s, u, env) = (random_state(&mut rng), random_input(&mut rng), random_env(&mut rng));
        let d = dynamics(&s, &u, &env, &FerryParams::default());
        let j = rotation_body_to_enu(s.psi);
        let nu = [s.u_bf, s.v_bf, s.r_bf];
        for i in 0..3 {
            let e: f64 = (0..3).map(|k| j[i][k] * nu[k]).sum();
            prop_assert!((d[i] - e).abs() < 1e-12);
        }
    }

    #[test]
    fn power_increases_with_force(a in 0.0..60000.0f64, b in 0.0..60000.0f64, t in -PI..PI) {
        let p = FerryParams::default();
        let at = |r: f64| power(&ControlInput { x_a: r * t.cos(), y_a: r * t.sin(), rdot_bf: 0.0 }, &p);
        prop_assert!(at(a) >= 0.0);
        prop_assert_eq!(at(a) == 0.0, a == 0.0);
        if a < b {
            prop_assert!(at(a) < at(b));
        }
    }
}
