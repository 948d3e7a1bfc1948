#![allow(clippy::needless_range_loop)]

use memkit::maps::{
    choi, compose, hermitian_eigensystem, hermitian_eigenvalues, trace_distance, ChoiMatrix, DensityMatrix, Matrix4,
    QubitChannel,
};
use memkit::Complex64;
use nalgebra::Matrix4 as NaMatrix4;
use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};

fn random_hermitian(rng: &mut StdRng, scale: f64) -> Matrix4 {
    let mut m = [[Complex64::new(0.0, 0.0); 4]; 4];
    for i in 0..4 {
        m[i][i] = Complex64::new(scale * rng.gen_range(-1.0..1.0), 0.0);
        for j in i + 1..4 {
            let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale;
            m[i][j] = z;
            m[j][i] = z.conj();
        }
    }
    m
}

fn oracle_eigenvalues(m: &Matrix4) -> [f64; 4] {
    let na = NaMatrix4::from_fn(|i, j| m[i][j]);
    let mut ev: Vec<f64> = na.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    [ev[0], ev[1], ev[2], ev[3]]
}

fn sorted(mut v: [f64; 4]) -> [f64; 4] {
    v.sort_by(f64::total_cmp);
    v
}

fn unit_disc() -> impl Strategy<Value = Complex64> {
    (0.0f64..=1.0, -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(r, th)| Complex64::from_polar(r, th))
}

#[test]
fn eigenvalues_match_dense_oracle() {
    let mut rng = StdRng::seed_from_u64(7);
    for k in 0..2000 {
        let scale = 10f64.powi(k % 7 - 3);
        let m = random_hermitian(&mut rng, scale);
        let got = sorted(hermitian_eigenvalues(&m).unwrap());
        let want = oracle_eigenvalues(&m);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * scale * 4.0, "case {k}: {got:?} vs {want:?}");
        }
    }
}

#[test]
fn choi_pattern_eigenvalues_match_dense_oracle() {
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..2000 {
        let c20 = Complex64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(-3.2..3.2));
        let p = Complex64::from_polar(rng.gen_range(0.0..1.0), rng.gen_range(-3.2..3.2));
        let diff = QubitChannel::new(c20).unwrap().choi().difference(&QubitChannel::new(p).unwrap().choi());
        let got = sorted(hermitian_eigenvalues(&diff).unwrap());
        let want = oracle_eigenvalues(&diff);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-13, "{got:?} vs {want:?}");
        }
    }
}

#[test]
fn eigensystem_residual_and_orthonormality() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..500 {
        let m = random_hermitian(&mut rng, 1.0);
        let (vals, vecs) = hermitian_eigensystem(&m).unwrap();
        for k in 0..4 {
            for i in 0..4 {
                let mv: Complex64 = (0..4).map(|j| m[i][j] * vecs[j][k]).sum();
                assert!((mv - vecs[i][k] * vals[k]).norm() < 1e-12);
            }
            for l in 0..4 {
                let dot: Complex64 = (0..4).map(|i| vecs[i][k].conj() * vecs[i][l]).sum();
                let want = if k == l { 1.0 } else { 0.0 };
                assert!((dot - want).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn maximally_entangled_choi_for_identity() {
    let m = QubitChannel::new(Complex64::new(1.0, 0.0)).unwrap().choi();
    for (i, row) in m.matrix().iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let want = if (i == 0 || i == 3) && (j == 0 || j == 3) { 0.5 } else { 0.0 };
            assert_eq!(*v, Complex64::new(want, 0.0), "({i}, {j})");
        }
    }
}

#[test]
fn choi_json_layout() {
    let v = QubitChannel::new(Complex64::new(0.0, 0.5)).unwrap().choi().to_json();
    assert_eq!(v["rows"], 4);
    assert_eq!(v["cols"], 4);
    assert_eq!(v["data"][3][1], 0.25);
    assert_eq!(v["data"][12][1], -0.25);
}

#[test]
fn superoperator_route_agrees_with_closed_form() {
    let ch = QubitChannel::new(Complex64::new(0.3, -0.6)).unwrap();
    let from_map = ChoiMatrix::from_superoperator(|m| ch.apply_operator(m));
    let diff = from_map.difference(&ch.choi());
    assert!(diff.iter().flatten().all(|z| z.norm() < 1e-16));
}

proptest! {
    #[test]
    fn choi_is_psd_with_unit_trace(c in unit_disc()) {
        let m = choi(&QubitChannel::new(c).unwrap());
        prop_assert!((m.trace() - 1.0).norm() < 1e-15);
        for ev in m.eigenvalues().unwrap() {
            prop_assert!(ev >= -1e-15, "{ev}");
        }
    }

    #[test]
    fn trace_distance_is_a_metric(a in unit_disc(), b in unit_disc(), c in unit_disc()) {
        let (ca, cb, cc) = (
            QubitChannel::new(a).unwrap().choi(),
            QubitChannel::new(b).unwrap().choi(),
            QubitChannel::new(c).unwrap().choi(),
        );
        let ab = trace_distance(&ca, &cb).unwrap();
        let ba = trace_distance(&cb, &ca).unwrap();
        let bc = trace_distance(&cb, &cc).unwrap();
        let ac = trace_distance(&ca, &cc).unwrap();
        prop_assert!(trace_distance(&ca, &ca).unwrap().abs() < 1e-15);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!(ac <= ab + bc + 1e-14);
    }

    #[test]
    fn composition_multiplies_amplitudes(a in unit_disc(), b in unit_disc()) {
        let (x, y) = (QubitChannel::new(a).unwrap(), QubitChannel::new(b).unwrap());
        prop_assert_eq!(compose(&x, &y).c(), a * b);
        // and agrees with applying the maps one after another
        let rho = DensityMatrix::pure(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)).unwrap();
        let seq = x.apply(&y.apply(&rho));
        let once = compose(&x, &y).apply(&rho);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert!((seq.matrix()[i][j] - once.matrix()[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn channels_preserve_trace_and_positivity(c in unit_disc(), p in 0.0f64..=1.0, coh in unit_disc()) {
        let off = coh * (p * (1.0 - p)).sqrt();
        let rho = DensityMatrix::new([
            [Complex64::new(p, 0.0), off],
            [off.conj(), Complex64::new(1.0 - p, 0.0)],
        ]).unwrap();
        let out = QubitChannel::new(c).unwrap().apply(&rho);
        prop_assert!((out.trace() - 1.0).abs() < 1e-15);
        prop_assert!(out.eigenvalues().iter().all(|&e| e >= -1e-15));
        prop_assert!((out.rho_ee() - c.norm_sqr() * p).abs() < 1e-15);
    }
}

#[test]
fn channel_rejects_expanding_amplitude() {
    assert!(QubitChannel::new(Complex64::new(1.0 + 1e-6, 0.0)).is_err());
    assert!(QubitChannel::new(Complex64::new(f64::NAN, 0.0)).is_err());
}
