use ddgate::analysis::{concurrence, fluorescence, pauli_expectations, state_fidelity, tomography};
use ddgate::evolution::pulse_propagator;
use ddgate::hamiltonians::{
    calibrate_rabi, generic_h0, nv_level, nv_rotated_frame_h0, nv_h0, DrivePulse, GenericSystemParams, NvParams,
};
use ddgate::{eig_hermitian, herm_propagator, DensityMatrix, InitialState, Operator, SimConfig, SpinSystem, C64};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// exp(−i2π·dt·H) by a truncated Taylor series, multiplied `steps` times.
fn taylor_product(h: &DMatrix<C64>, duration: f64, steps: usize) -> DMatrix<C64> {
    let n = h.nrows();
    let a = h * C64::new(0.0, -std::f64::consts::TAU * duration / steps as f64);
    let mut step = DMatrix::<C64>::identity(n, n);
    let mut term = DMatrix::<C64>::identity(n, n);
    for k in 1..=20 {
        term = &term * &a / C64::new(k as f64, 0.0);
        step += &term;
    }
    let mut u = DMatrix::<C64>::identity(n, n);
    for _ in 0..steps {
        u = &step * u;
    }
    u
}

#[test]
fn propagator_matches_fine_step_taylor_product() {
    let h = generic_h0(&GenericSystemParams::scalar(50.0, &[(1.0, 0.2)])).unwrap();
    let u = herm_propagator(&h, 0.4).unwrap();
    let oracle = taylor_product(h.matrix(), 0.4, 4096);
    let diff = (u.matrix() - oracle).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
}

fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> Operator {
    let mut m = DMatrix::<C64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = C64::new(rng.random_range(-5.0..5.0), 0.0);
        for j in i + 1..n {
            let z = C64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    Operator::new(m, vec![3, 2]).unwrap()
}

#[test]
fn random_hermitian_reconstruction() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..50 {
        let h = random_hermitian(&mut rng, 6);
        let sp = eig_hermitian(&h).unwrap();
        assert!(sp.values.windows(2).all(|w| w[0] <= w[1]));
        let v = sp.vectors.matrix();
        let d = DMatrix::from_fn(6, 6, |i, j| if i == j { C64::new(sp.values[i], 0.0) } else { C64::new(0.0, 0.0) });
        let rebuilt = v * d * v.adjoint();
        let resid = (rebuilt - h.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(resid < 1e-10 * h.max_abs(), "{resid}");
        assert!(sp.vectors.unitarity_residual() < 1e-10);
    }
}

#[test]
fn rotated_frame_equivalence_over_angles() {
    for deg in [0.0, 1.0, 2.9, 5.0, 10.0] {
        let p = NvParams { theta0: f64::to_radians(deg), ..NvParams::default() };
        let a = eig_hermitian(&nv_h0(&p).unwrap()).unwrap().values;
        let b = eig_hermitian(&nv_rotated_frame_h0(&p).unwrap()).unwrap().values;
        let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(worst < 1e-6, "θ0 = {deg}°: {worst}");
    }
}

const NV_TPI: f64 = 0.01285;

#[test]
fn spin_half_calibration_matches_closed_form() {
    let sys = SpinSystem::generic(&GenericSystemParams::scalar(50.0, &[(1.0, 0.0)]), InitialState::Polarized).unwrap();
    let w1 = calibrate_rabi(&sys, 0.1, 50.0, &SimConfig::new(0.001)).unwrap();
    assert!((w1 - 5.0).abs() / 5.0 < 0.02, "{w1}");
}

#[test]
fn nv_calibration_reflects_spin_one_matrix_element() {
    let sys = SpinSystem::nv(&NvParams::default(), InitialState::MixedTarget).unwrap();
    let analytic = 1.0 / (2.0 * NV_TPI) / 2f64.sqrt();
    let w1 = calibrate_rabi(&sys, NV_TPI, sys.carrier(), &SimConfig::new(NV_TPI / 200.0)).unwrap();
    assert!((w1 / analytic - 1.0).abs() < 0.1, "{w1} vs {analytic}");
    let w2 = calibrate_rabi(&sys, 2.0 * NV_TPI, sys.carrier(), &SimConfig::new(NV_TPI / 200.0)).unwrap();
    assert!((w2 / w1 - 0.5).abs() / 0.5 < 0.02, "{w2} vs {w1}");

    // a calibrated π pulse empties m_S = 0
    let pulse = DrivePulse::new(w1, sys.carrier(), 0.0, NV_TPI).unwrap();
    let u = pulse_propagator(sys.h0(), &pulse, sys.drive(), 0.0, NV_TPI / 200.0).unwrap();
    let rhof = sys.rho0().evolve(&u).unwrap();
    let reference = DensityMatrix::product(
        &[
            &DensityMatrix::basis(&[nv_level::ZERO], &[3], "0").unwrap(),
            &DensityMatrix::maximally_mixed(&[2], "1/2"),
        ],
        "ref",
    )
    .unwrap();
    let f = fluorescence(&reference, &rhof).unwrap();
    assert!(f.abs() < 0.01, "{f}");
}

fn random_pure(rng: &mut ChaCha8Rng, dims: Vec<usize>) -> DensityMatrix {
    let n: usize = dims.iter().product();
    let amps: Vec<C64> = (0..n).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    DensityMatrix::pure(&amps, dims, "random").unwrap()
}

#[test]
fn noisy_tomography_stays_physical_and_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..200 {
        let truth = random_pure(&mut rng, vec![2, 2]);
        let mut data = pauli_expectations(&truth).unwrap();
        for v in data.values_mut() {
            *v += rng.random_range(-0.02..0.02);
        }
        let rec = tomography(&data).unwrap();
        assert!((rec.op().trace().re - 1.0).abs() < 1e-10);
        let min = eig_hermitian(rec.op()).unwrap().values[0];
        assert!(min > -1e-9);
        let f = state_fidelity(&rec, &truth).unwrap();
        assert!(f >= 0.98, "{f}");
    }
}

#[test]
fn three_qubit_tomography_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truth = random_pure(&mut rng, vec![2, 2, 2]);
    let rec = tomography(&pauli_expectations(&truth).unwrap()).unwrap();
    assert!(rec.op().max_abs_diff(truth.op()) < 1e-9);
}

#[test]
fn werner_state_concurrence() {
    // p|Φ+⟩⟨Φ+| + (1−p)·1/4 has concurrence max(0, (3p − 1)/2)
    let h = 0.5f64.sqrt();
    let z = C64::new(0.0, 0.0);
    let bell = DensityMatrix::pure(&[C64::new(h, 0.0), z, z, C64::new(h, 0.0)], vec![2, 2], "bell").unwrap();
    let mixed = DensityMatrix::maximally_mixed(&[2, 2], "mixed");
    for p in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let op = &bell.op().scaled(p) + &mixed.op().scaled(1.0 - p);
        let rho = DensityMatrix::new(op, "werner").unwrap();
        let want = ((3.0 * p - 1.0) / 2.0).max(0.0);
        assert!((concurrence(&rho).unwrap() - want).abs() < 1e-9, "p = {p}");
    }
}
