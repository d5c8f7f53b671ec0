use super::*;
use crate::rng::stream;
use proptest::prelude::*;

fn random_map(m: usize, amp: f64, seed: u64) -> PhaseMap {
    let mut rng = stream(seed, 0);
    let vals: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mx = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let vals = vals.iter().map(|v| v * amp / mx).collect();
    PhaseMap::from_wrapped(m, 1.0, 0.3, vals).unwrap()
}

fn alternating(m: usize, t0: f64) -> PhaseMap {
    PhaseMap::from_fn(m, 1.0, |n, _| if n.rem_euclid(2) == 0 { t0 } else { -t0 }).unwrap()
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn rejects_bad_grid() {
    assert!(make_incident(6, Incident::S).is_err());
    assert!(make_incident(2, Incident::S).is_err());
    assert!(make_incident(8, Incident::S).is_ok());
}

#[test]
fn incident_states() {
    let s = make_incident(4, Incident::S).unwrap();
    assert!(close(s[0], C64::new(0.25, 0.0), 1e-15));
    let a = make_incident(16, Incident::A).unwrap();
    let s = make_incident(16, Incident::S).unwrap();
    let ip: C64 = s.iter().zip(&a).map(|(x, y)| x.conj() * y).sum();
    assert!(ip.norm() < 1e-14);
    let sup = make_incident(8, Incident::Superposition).unwrap();
    for r in 0..8 {
        let n = crate::fft::centered(r, 8);
        let want = if n % 2 == 0 {
            let sign = if (n / 2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            sign * 2f64.sqrt() / 8.0
        } else {
            0.0
        };
        assert!(close(sup[r * 8 + 3], C64::new(want, 0.0), 1e-14), "n={n}");
    }
}

#[test]
fn cnot_involution_and_bell_state() {
    let m = 8;
    let inc = make_incident(m, Incident::Superposition).unwrap();
    let q = Q1State::from_alpha(C64::new(0.3, -0.1));
    let st0 = JointState::product(&inc, m, q).unwrap();
    let mut st = st0.clone();
    entangle_cnot(&mut st).unwrap();
    entangle_cnot(&mut st).unwrap();
    for (a, b) in st.amplitudes().iter().zip(st0.amplitudes()) {
        assert!(close(*a, *b, 1e-14));
    }

    let mut bell = JointState::product(&inc, m, Q1State::from_alpha(C64::new(0.0, 0.0))).unwrap();
    entangle_cnot(&mut bell).unwrap();
    let s = make_incident(m, Incident::S).unwrap();
    let a = make_incident(m, Incident::A).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..m * m {
        assert!(close(bell.amplitudes()[i], s[i] * h, 1e-14));
        assert!(close(bell.amplitudes()[m * m + i], a[i] * h, 1e-14));
    }

    let mut pure = JointState::product(&s, m, q).unwrap();
    let before = pure.clone();
    entangle_cnot(&mut pure).unwrap();
    for (x, y) in pure.amplitudes().iter().zip(before.amplitudes()) {
        assert!(close(*x, *y, 1e-14));
    }
}

#[test]
fn specimen_modes() {
    let m = 8;
    let inc = make_incident(m, Incident::Superposition).unwrap();
    let base = JointState::product(&inc, m, Q1State::from_alpha(C64::new(0.1, 0.0))).unwrap();

    let mut z = base.clone();
    apply_specimen(&mut z, &PhaseMap::zero(m, 1.0).unwrap(), SpecimenMode::Exact).unwrap();
    assert_eq!(z, base);
    let uni = PhaseMap::from_fn(m, 1.0, |_, _| 0.2).unwrap();
    assert!(uni.max_abs() < 1e-15);

    let dist = |amp: f64| {
        let map = random_map(m, amp, 7);
        let mut e = base.clone();
        let mut l = base.clone();
        apply_specimen(&mut e, &map, SpecimenMode::Exact).unwrap();
        apply_specimen(&mut l, &map, SpecimenMode::Linearized).unwrap();
        e.amplitudes().iter().zip(l.amplitudes()).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt()
    };
    let d1 = dist(0.02);
    let d2 = dist(0.01);
    assert!((d1 / d2 - 4.0).abs() < 0.2, "ratio {}", d1 / d2);
}

#[test]
fn qft_properties() {
    let m = 16;
    let s = make_incident(m, Incident::S).unwrap();
    let mut st = JointState::product(&s, m, Q1State::from_alpha(C64::new(0.0, 0.0))).unwrap();
    let orig = st.clone();
    qft2d(&mut st, false);
    assert!((st.norm() - 1.0).abs() < 1e-12);
    assert!(close(st.amp(0, -4, 0), C64::new(1.0, 0.0), 1e-12));
    phase_plate_step6(&mut st);
    assert!(close(st.amp(0, -4, 0), C64::new(0.0, 1.0), 1e-12));
    assert!(q2_probability_one(&st) < 1e-20);
    let mut rng = stream(1, 0);
    let mut c = st.clone();
    assert_eq!(measure_q2(&mut c, &mut rng).unwrap(), 0);
    assert!(collapse_q2(&mut c, 1).is_err());
    for _ in 0..3 {
        phase_plate_step6(&mut st);
    }
    qft2d(&mut st, true);
    for (a, b) in st.amplitudes().iter().zip(orig.amplitudes()) {
        assert!(close(*a, *b, 1e-12));
    }
}

#[test]
fn xi_constraints() {
    let m = 16;
    let mi = m as i64;
    let mut r1 = stream(5, 2);
    let mut r2 = stream(5, 2);
    let x1 = XiMap::generate(m, XiSign::Minus, &mut r1).unwrap();
    let x2 = XiMap::generate(m, XiSign::Minus, &mut r2).unwrap();
    assert_eq!(x1, x2);
    assert_eq!(x1.get(mi / 4, 0), 0.0);
    assert_eq!(x1.get(-mi / 4, 0), 0.0);
    for a in -mi..mi {
        for b in -mi..mi {
            assert_eq!(x1.get(a + mi, b), x1.get(a, b));
            assert_eq!(x1.get(a, b + mi), x1.get(a, b));
            assert!((x1.get(mi / 4 + a, b) + x1.get(mi / 4 - a, -b)).abs() < 1e-15);
            assert!((x1.get(-mi / 4 + a, b) + x1.get(-mi / 4 - a, -b)).abs() < 1e-15);
        }
    }
    let xp = XiMap::generate(m, XiSign::Plus, &mut r1).unwrap();
    for a in -mi / 2..mi / 2 {
        for b in -mi / 2..mi / 2 {
            assert_eq!(xp.get(mi / 4 + a, b), xp.get(mi / 4 - a, -b));
        }
    }
}

#[test]
fn split_iqft_unitary_and_zero_specimen() {
    let m = 16;
    let map = random_map(m, 0.05, 3);
    let q = Q1State::from_alpha(C64::new(0.2, 0.1));
    let mut st =
        prepare_pass(m, q, &Passage { specimen: Some(&map), envelope: None }, &Default::default(), None).unwrap();
    let n0 = st.norm();
    split_inverse_qft(&mut st);
    assert!((st.norm() - n0).abs() < 1e-12);
    let total: f64 = pixel_probabilities(&st).iter().sum();
    assert!((total - 1.0).abs() < 1e-10);

    let zero = PhaseMap::zero(m, 1.0).unwrap();
    let br =
        pass_branches(m, q, &Passage { specimen: Some(&zero), envelope: None }, &Default::default(), None).unwrap();
    for b in br.iter().filter(|b| b.probability > 1e-12) {
        assert!(b.q1.fidelity(&q) > 1.0 - 1e-12);
    }
    let mut rng = stream(9, 0);
    let (out, log) = run_round(&zero, 7, C64::new(0.2, 0.1), &Default::default(), 0, &mut rng).unwrap();
    assert!(out.fidelity(&q) > 1.0 - 1e-12);
    assert_eq!(log.len(), 7);
    for o in &log {
        assert!((-(m as i64) / 4..m as i64 / 4).contains(&o.n_hat));
        assert!((-(m as i64) / 2..m as i64 / 2).contains(&o.m_hat));
    }
}

#[test]
fn branch_coefficients_match_first_order_prediction() {
    let m = 16;
    let alpha = C64::new(0.01, 0.0);
    let map = random_map(m, 1e-3, 11);
    let f = reference_filters(&map);
    let q = Q1State::from_alpha(alpha);
    let br = pass_branches(m, q, &Passage { specimen: Some(&map), envelope: None }, &Default::default(), None).unwrap();
    let norm = (1.0 + alpha.norm_sqr()).sqrt();
    let k = C64::new(0.0, 1.0) / (m as f64 * norm);
    let i = C64::new(0.0, 1.0);
    let mut worst: f64 = 0.0;
    for b in &br {
        let (cs, ca) = f.predicted_coefficients(alpha, b.n_tilde, b.m_hat);
        worst = worst.max((b.q1.c_s / k - cs).norm()).max((b.q1.c_a / k - i * ca).norm());
    }
    assert!(worst <= 10.0 * 1e-6, "worst {worst}");
}

#[test]
fn alternating_map_accumulates_k_theta() {
    let m = 16;
    let t0 = 1e-3;
    let map = alternating(m, t0);
    let mut rng = stream(2, 0);
    let (q, _) = run_round(&map, 50, C64::new(0.0, 0.0), &Default::default(), 0, &mut rng).unwrap();
    let r = q.ratio();
    assert!((r.im / (50.0 * t0) - 1.0).abs() < 0.02);
    // exact: cos(kθ₀)|s̄⟩ + i sin(kθ₀)|ā⟩
    assert!((r.im - (50.0 * t0).tan()).abs() < 1e-12);
}

#[test]
fn eeem_up_probability_exact() {
    let m = 8;
    for &k in &[1usize, 5, 20] {
        for &d in &[0.0, 1e-3, 1e-2] {
            let map = alternating(m, -d / 2.0);
            let mut rng = stream(4, k as u64);
            let (q, _) = run_round(&map, k, C64::new(0.0, 0.0), &Default::default(), 0, &mut rng).unwrap();
            let want = (1.0 + (k as f64 * d).sin()) / 2.0;
            assert!((q.p_up() - want).abs() < 1e-10, "k={k} d={d}");
        }
    }
}

#[test]
fn updown_measurement_statistics() {
    let q = Q1State { c_s: C64::new(0.8, 0.0), c_a: C64::new(0.0, 0.6) };
    let p = q.p_up();
    let mut rng = stream(8, 0);
    let n = 100_000;
    let ups = (0..n).filter(|_| measure_q1_updown(&q, &mut rng)).count() as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    assert!((ups - n as f64 * p).abs() < 4.0 * sd);
}

#[test]
fn filters_examples() {
    let m = 8;
    let map = PhaseMap::from_fn_limited(m, 1.0, 2.0, |n, _| if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 }).unwrap();
    let f = reference_filters(&map);
    assert!((f.theta_bar - 1.0).abs() < 1e-12);
    assert!((theta_bar(&map) - 1.0).abs() < 1e-12);
    assert!(f.low_values().iter().chain(f.high_values()).all(|v| v.norm() < 1e-12));

    let map = random_map(16, 0.1, 21);
    let f = reference_filters(&map);
    for r in -20..20i64 {
        for s in -20..20i64 {
            assert!((f.big_theta(r + 16, s) - f.big_theta(r, s)).norm() < 1e-15);
            assert!((f.big_theta(r, s) - f.big_theta(-r, -s).conj()).norm() < 1e-14);
        }
    }
}

fn smooth_map(m: usize) -> PhaseMap {
    let w = 2.0 * std::f64::consts::PI / m as f64;
    PhaseMap::from_fn(m, 1.0, |n, c| {
        0.01 * ((w * n as f64).cos() + 0.5 * (w * c as f64 + 0.3).sin() + 0.3 * (w * (n + c) as f64).cos())
    })
    .unwrap()
}

#[test]
fn low_pass_dominates_for_smooth_maps() {
    let f = reference_filters(&smooth_map(16));
    let nl: f64 = f.low_values().iter().map(|v| v.norm_sqr()).sum();
    let nh: f64 = f.high_values().iter().map(|v| v.norm_sqr()).sum();
    assert!(nh < 1e-3 * nl, "{nh} vs {nl}");
}

#[test]
fn filter_imaginary_parts_shrink_with_m() {
    let im = |m: usize| {
        let f = reference_filters(
            &PhaseMap::from_fn(m, 1.0, |n, c| {
                let x = n as f64 / m as f64;
                let y = c as f64 / m as f64;
                0.01 * (-((x - 0.1).powi(2) + (y + 0.05).powi(2)) * 40.0).exp()
            })
            .unwrap(),
        );
        let im: f64 = f.low_values().iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        let re: f64 = f.low_values().iter().map(|v| v.re.abs()).fold(0.0, f64::max);
        im / re
    };
    assert!(im(32) < 0.1 * im(8), "{} {}", im(8), im(32));
}

#[test]
fn shifted_array() {
    let (a, phi) = (0.01, 0.7);
    let got = shifted_array_recovery(&[
        ShiftedReading { delta: 0.0, half_shift: false, theta_bar: a * f64::cos(phi) },
        ShiftedReading { delta: 0.0, half_shift: true, theta_bar: -a * f64::sin(phi) },
    ])
    .unwrap();
    assert!((got.0 - a).abs() < 1e-12 && (got.1 - phi).abs() < 1e-12);
    assert!(shifted_array_recovery(&[ShiftedReading { delta: 0.3, half_shift: false, theta_bar: 0.1 }]).is_err());
    let dup = ShiftedReading { delta: 0.3, half_shift: false, theta_bar: 0.1 };
    assert!(shifted_array_recovery(&[dup, dup]).is_err());

    let (m, sigma) = (16, 1.0);
    let pi = std::f64::consts::PI;
    for &d in &[0.0, 0.4, 1.1, -2.0] {
        let x0 = d / pi * sigma;
        let tb = sampled_theta_bar(|x, _| a * (pi * x / sigma + phi).cos(), m, sigma, x0);
        assert!((tb - a * (phi + d).cos()).abs() < 1e-15);
        let tb = sampled_theta_bar(|x, _| a * (pi * x / sigma + phi).cos(), m, sigma, x0 + 0.5 * sigma);
        assert!((tb - (-a * (phi + d).sin())).abs() < 1e-15);
        let tb = sampled_theta_bar(|x, _| a * (2.0 * pi * x / sigma + phi).cos(), m, sigma, x0);
        assert!(tb.abs() < 1e-15);
    }
}

#[test]
fn phase_map_text_round_trip() {
    let map = random_map(8, 0.1, 3);
    let back = PhaseMap::from_text(&map.to_text()).unwrap();
    for (a, b) in map.wrapped().iter().zip(back.wrapped()) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(PhaseMap::from_text("8 1.0\n1 2 3").is_err());
    assert!(PhaseMap::from_fn(8, 1.0, |n, _| n as f64).is_err());
}

#[test]
fn outcome_csv_header() {
    let map = random_map(8, 1e-3, 1);
    let mut rng = stream(1, 1);
    let (_, log) = run_round(&map, 3, C64::new(0.0, 0.0), &Default::default(), 4, &mut rng).unwrap();
    let csv = outcomes_csv(&log);
    assert!(csv.starts_with("round,electron,q2,n_hat,m_hat\n4,0,"));
    assert_eq!(csv.lines().count(), 4);
}

/// Same pass built from the even/odd-comb description: the electron flips
/// between |0⟩ and |1⟩ iff Q1 is |1̄⟩.
fn alt_basis_branches(m: usize, q: Q1State, map: &PhaseMap) -> Vec<Q1State> {
    let inc = make_incident(m, Incident::Superposition).unwrap();
    let s = make_incident(m, Incident::S).unwrap();
    let a = make_incident(m, Incident::A).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let odd: Vec<C64> = s.iter().zip(&a).map(|(x, y)| (x - y) * h).collect();
    let (c0, c1) = q.in_computational_basis();
    // electron |0⟩ (= inc) with Q1 |0̄⟩ stays, with |1̄⟩ goes to |1⟩
    let b0: Vec<C64> = inc.iter().map(|e| e * c0).collect();
    let b1: Vec<C64> = odd.iter().map(|e| e * c1).collect();
    // back to s̄/ā branches: s̄ part = (b0+b1)/√2, ā part = (b0−b1)/√2
    let mut amps: Vec<C64> = b0.iter().zip(&b1).map(|(x, y)| (x + y) * h).collect();
    amps.extend(b0.iter().zip(&b1).map(|(x, y)| (x - y) * h));
    let mut st = JointState::from_amplitudes(m, amps).unwrap();
    apply_specimen(&mut st, map, SpecimenMode::Exact).unwrap();
    qft2d(&mut st, false);
    phase_plate_step6(&mut st);
    split_inverse_qft(&mut st);
    (0..m * m)
        .map(|i| {
            let raw = Q1State { c_s: st.amplitudes()[i], c_a: st.amplitudes()[m * m + i] };
            if half_of_row(crate::fft::centered(i / m, m)) == 1 {
                raw.swapped()
            } else {
                raw
            }
        })
        .collect()
}

#[test]
fn basis_descriptions_agree() {
    let m = 16;
    let map = random_map(m, 0.05, 33);
    let q = Q1State::from_alpha(C64::new(0.3, 0.2));
    let br = pass_branches(m, q, &Passage { specimen: Some(&map), envelope: None }, &Default::default(), None).unwrap();
    let alt = alt_basis_branches(m, q, &map);
    for (b, a) in br.iter().zip(&alt) {
        let d1 = b.q1.density();
        let d2 = a.density();
        for i in 0..2 {
            for j in 0..2 {
                assert!((d1[i][j] * b.probability - d2[i][j] * b.probability).norm() < 1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pass_is_unitary(seed in 0u64..10_000, amp in 1e-4f64..0.25, ar in -1.0f64..1.0, ai in -1.0f64..1.0) {
        let m = 8;
        let map = random_map(m, amp, seed);
        let q = Q1State::from_alpha(C64::new(ar, ai));
        let br = pass_branches(m, q, &Passage { specimen: Some(&map), envelope: None }, &Default::default(), None).unwrap();
        let total: f64 = br.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn randomized_pass_is_unitary(seed in 0u64..10_000) {
        let m = 8;
        let map = random_map(m, 0.1, seed);
        let mut rng = stream(seed, 1);
        let xi = XiMap::generate(m, XiSign::Minus, &mut rng).unwrap();
        let q = Q1State::from_alpha(C64::new(0.1, 0.0));
        let br = pass_branches(m, q, &Passage { specimen: Some(&map), envelope: None }, &Default::default(), Some(&xi)).unwrap();
        let total: f64 = br.iter().map(|b| b.probability).sum();
        prop_assert!((total - 1.0).abs() < 1e-10);
    }
}
