//! Module invariants run through proptest's runner with a fixed seed.

use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRng, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use sdtlab::linalg::{self, CMatrix};
use sdtlab::optics::{
    build_projector_set, detector_targets, jones_hwp, jones_qwp, settings_for_36, standard_36_targets,
    TomographySetting,
};
use sdtlab::qcore::{
    alice_basis, correction_unitary, decompose_joint_state, equimodular_ququart, extract_phases, fidelity,
    make_equimodular_ket, phase_error_stats, wrap_pi, AliceOutcome, DensityOperator, EquimodularPhases, StateVector,
};
use sdtlab::sdtsim::{joint_density, ks_two_sample, run_sdt_trial, CountBudget, LCEncoder, SimConfig, SourceModel};
use sdtlab::spacelink::{
    coincidences_per_pass, doppler_delta_t, friis_transmission, propagate_pass, simulate_pi_stabilization,
    DisturbanceSeries, LinkBudget, OrbitConfig, PIConfig, C,
};
use sdtlab::tomo::{
    bme_fit, cholesky_to_density, density_to_cholesky, hs_sample, mle_fit, predict_coincidences, BmeConfig,
    CholeskyParams, CoincidenceRow, EfficiencyCalibration, MeasurementModel, MleConfig, TomographyTarget,
};

pub struct Property {
    pub module: &'static str,
    pub name: &'static str,
    pub cases: u32,
    pub result: Result<(), String>,
}

fn check<S: Strategy>(
    module: &'static str,
    name: &'static str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Property {
    let config = Config { cases, failure_persistence: None, max_shrink_iters: 0, ..Config::default() };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    let mut runner = TestRunner::new_with_rng(config, rng);
    let result = runner.run(&strategy, test).map_err(|e| e.to_string());
    Property { module, name, cases, result }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_c(r: &mut ChaCha8Rng) -> Complex64 {
    Complex64::new(StandardNormal.sample(r), StandardNormal.sample(r))
}

fn random_pure(seed: u64, d: usize) -> StateVector {
    let mut r = rng(seed);
    StateVector::normalized((0..d).map(|_| gaussian_c(&mut r)).collect()).unwrap()
}

fn random_mixed(seed: u64, d: usize) -> DensityOperator {
    let t = hs_sample(d, &mut rng(seed));
    cholesky_to_density(&CholeskyParams::new(d, t).unwrap()).unwrap()
}

fn random_unitary(seed: u64, d: usize) -> CMatrix {
    let mut r = rng(seed);
    let g = CMatrix::from_fn(d, d, |_, _| gaussian_c(&mut r));
    linalg::hermitian_eigen(&(&g + g.adjoint())).1
}

fn phases() -> impl Strategy<Value = EquimodularPhases> {
    (0.0..TAU, 0.0..TAU, 0.0..TAU).prop_map(|(a, b, c)| EquimodularPhases::new(a, b, c))
}

/// Bob's state after Alice finds `A_k`, from the joint density by hand.
fn conditional(rho: &CMatrix, k: usize) -> CMatrix {
    let a = alice_basis()[k].amplitudes().clone();
    CMatrix::from_fn(4, 4, |i, j| {
        let mut s = Complex64::new(0.0, 0.0);
        for c in 0..4 {
            for cp in 0..4 {
                s += a[c].conj() * a[cp] * rho[(4 * c + i, 4 * cp + j)];
            }
        }
        s
    })
}

fn unit_rows() -> Vec<CoincidenceRow> {
    (1..=36).map(|s| CoincidenceRow { setting: s, duration_s: 1.0, counts: [[1.0; 4]; 4] }).collect()
}

pub fn run_all() -> Vec<Property> {
    let cat = settings_for_36().unwrap();
    let cond = TomographyTarget::Conditional(AliceOutcome::A1);
    let unit = EfficiencyCalibration::unit();
    let pass90 = propagate_pass(&OrbitConfig::default(), 90.0, 1.0).unwrap();
    let mut out = Vec::new();

    // qcore
    out.push(check(
        "qcore",
        "constructed states have unit norm",
        1000,
        prop::collection::vec(-10.0..10.0f64, 8),
        |v| {
            let amps: Vec<Complex64> = v.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect();
            if amps.iter().all(|a| a.norm() < 1e-6) {
                return Ok(());
            }
            let s = StateVector::normalized(amps).unwrap();
            ensure((s.amplitudes().norm() - 1.0).abs() < 1e-12, || "norm".into())
        },
    ));
    out.push(check("qcore", "Alice basis is orthonormal and unbiased", 1, Just(()), |_| {
        let basis = alice_basis();
        for (j, a) in basis.iter().enumerate() {
            for (k, b) in basis.iter().enumerate() {
                let expect = if j == k { 1.0 } else { 0.0 };
                ensure((a.inner(b).norm() - expect).abs() < 1e-15, || format!("<A{j}|A{k}>"))?;
            }
            for i in 0..4 {
                ensure((a.amplitudes()[i].norm_sqr() - 0.25).abs() < 1e-15, || "unbiased".into())?;
            }
        }
        Ok(())
    }));
    out.push(check("qcore", "corrected conditional states equal the target", 1000, phases(), |p| {
        let target = equimodular_ququart(&p);
        for b in decompose_joint_state(&p) {
            let f =
                fidelity(&correction_unitary(b.outcome).apply(&b.state).unwrap().density(), &target.density()).unwrap();
            ensure((f - 1.0).abs() < 1e-10, || format!("{:?}: {f}", b.outcome))?;
        }
        Ok(())
    }));
    out.push(check("qcore", "each outcome has probability 1/4", 1000, phases(), |p| {
        let probs: Vec<f64> = decompose_joint_state(&p).iter().map(|b| b.probability).collect();
        ensure(probs.iter().all(|q| (q - 0.25).abs() < 1e-15), || format!("{probs:?}"))
    }));
    out.push(check(
        "qcore",
        "fidelity is symmetric and unitarily invariant",
        1000,
        (any::<u64>(), any::<u64>(), any::<u64>()),
        |(a, b, u)| {
            let (r, s) = (random_mixed(a, 4), random_mixed(b, 4));
            let u = random_unitary(u, 4);
            let f = fidelity(&r, &s).unwrap();
            let g = fidelity(&s, &r).unwrap();
            let h = fidelity(&r.conjugate(&u).unwrap(), &s.conjugate(&u).unwrap()).unwrap();
            ensure((f - g).abs() < 1e-8 && (f - h).abs() < 1e-8, || format!("{f} {g} {h}"))
        },
    ));
    out.push(check(
        "qcore",
        "pure fidelity is 1 only for equal states",
        1000,
        (any::<u64>(), any::<u64>()),
        |(a, b)| {
            let (x, y) = (random_pure(a, 4), random_pure(b, 4));
            let same = fidelity(&x.density(), &x.density()).unwrap();
            let overlap = x.inner(&y).norm_sqr();
            let f = fidelity(&x.density(), &y.density()).unwrap();
            ensure((same - 1.0).abs() < 1e-10 && (f - overlap).abs() < 1e-8 && f < 1.0 - 1e-9, || format!("{same} {f}"))
        },
    ));
    out.push(check("qcore", "phase extraction inverts the equimodular ket", 1000, phases(), |p| {
        let rho = make_equimodular_ket(&p.as_array(), 4).unwrap().density();
        let q = extract_phases(&rho).unwrap();
        let err = p.delta(&q).iter().map(|d| wrap_pi(*d).abs()).fold(0.0, f64::max);
        ensure(err < 1e-10, || format!("{err}"))
    }));

    // optics
    out.push(check("optics", "waveplates are unitary", 1000, (-TAU..TAU, -TAU..TAU), |(a, b)| {
        for m in [jones_hwp(a), jones_qwp(b)] {
            let defect = (m.adjoint() * m - nalgebra::Matrix2::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            ensure(defect < 1e-12, || format!("{defect}"))?;
        }
        Ok(())
    }));
    out.push(check(
        "optics",
        "ideal analyzer resolves the identity",
        1000,
        prop::array::uniform6(-180.0..180.0f64),
        |a| {
            let s = TomographySetting::from_degrees(a, 1.0, 1.0, 1.0).unwrap();
            let sum = build_projector_set(&s).operators().iter().fold(CMatrix::zeros(4, 4), |acc, m| acc + m);
            let err = linalg::max_abs_diff(&sum, &CMatrix::identity(4, 4));
            ensure(err < 1e-10, || format!("{err}"))
        },
    ));
    out.push(check("optics", "derived catalog realizes every target state", 1, Just(()), |_| {
        let targets = standard_36_targets();
        ensure(targets.len() == 36, || "36 targets".into())?;
        let hit = detector_targets(&cat);
        ensure(hit.iter().enumerate().all(|(k, row)| row[0] == Some(k)), || "B1 of setting k measures state k".into())
    }));

    // tomo
    out.push(check("tomo", "Cholesky map round-trips physical states", 1000, any::<u64>(), |seed| {
        let rho = random_mixed(seed, 4);
        let back = cholesky_to_density(&density_to_cholesky(&rho)).unwrap();
        let err = linalg::max_abs_diff(back.matrix(), rho.matrix());
        ensure(err < 1e-10, || format!("{err}"))
    }));
    out.push(check("tomo", "Cholesky image is physical", 1000, prop::collection::vec(-3.0..3.0f64, 16), |t| {
        match CholeskyParams::new(4, t).and_then(|p| cholesky_to_density(&p)) {
            Ok(rho) => {
                let min = rho.eigenvalues()[0];
                let tr = linalg::trace(rho.matrix()).re;
                ensure(min > -1e-12 && (tr - 1.0).abs() < 1e-12, || format!("{min} {tr}"))
            }
            Err(_) => Ok(()),
        }
    }));
    out.push(check("tomo", "forward model is linear", 1000, (any::<u64>(), any::<u64>(), 0.0..1.0f64), |(a, b, w)| {
        let (r1, r2) = (random_mixed(a, 4), random_mixed(b, 4));
        let mix = r1.mix(&r2, w).unwrap();
        let p = |r: &DensityOperator| predict_coincidences(r, &cat, 1000.0, &unit).unwrap();
        let (p1, p2, pm) = (p(&r1), p(&r2), p(&mix));
        for s in 0..36 {
            for j in 0..4 {
                let lin = w * p1[s][j] + (1.0 - w) * p2[s][j];
                ensure((pm[s][j] - lin).abs() < 1e-9, || format!("setting {s}"))?;
            }
        }
        Ok(())
    }));
    let base = MeasurementModel::build(&unit_rows(), &cat, &unit, cond).unwrap();
    let sampled = |truth: &CMatrix, pairs: f64, seed: u64| {
        let mut q = vec![0.0; base.cell_count()];
        base.quadratic_forms(&truth.scale(pairs), &mut q);
        let mut r = rng(seed);
        q.iter()
            .zip(base.weights())
            .map(|(q, w)| {
                let m = q * w;
                if m > 0.0 {
                    rand_distr::Poisson::new(m).unwrap().sample(&mut r)
                } else {
                    0.0
                }
            })
            .collect::<Vec<f64>>()
    };
    out.push(check("tomo", "MLE objective never increases", 100, any::<u64>(), |seed| {
        let truth = random_mixed(seed, 4).into_matrix();
        let m = base.with_counts(sampled(&truth, 120.0, seed)).unwrap();
        let fit = mle_fit(&m, &MleConfig { starts: 1, seed, ..MleConfig::default() }, None)
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let t = &fit.objective_trace;
        ensure(t.len() > 1 && t.windows(2).all(|w| w[1] <= w[0]), || format!("{t:?}"))
    }));
    out.push(check(
        "tomo",
        "BME returns a state for any count sparsity",
        30,
        (any::<u64>(), 0usize..20),
        |(seed, n)| {
            let mut counts = vec![0.0; base.cell_count()];
            let mut r = rng(seed);
            let cells = counts.len();
            for _ in 0..n {
                counts[rand::Rng::random_range(&mut r, 0..cells)] += 1.0;
            }
            let m = base.with_counts(counts).unwrap();
            let fit = bme_fit(&m, &BmeConfig { particles: 200, mh_steps: 2, seed, ..BmeConfig::default() })
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let min = fit.rho.eigenvalues()[0];
            let tr = linalg::trace(fit.rho.matrix()).re;
            ensure(
                min > -1e-10 && (tr - 1.0).abs() < 1e-10 && linalg::hermiticity_defect(fit.rho.matrix()) < 1e-10,
                || format!("{min} {tr}"),
            )
        },
    ));
    out.push(check("tomo", "reconstruction is basis-consistent", 30, (any::<u64>(), any::<u64>()), |(s, u)| {
        let truth = random_mixed(s, 4);
        let u = random_unitary(u, 4);
        let mut q = vec![0.0; base.cell_count()];
        base.quadratic_forms(&truth.matrix().scale(5000.0), &mut q);
        let counts: Vec<f64> = q.iter().zip(base.weights()).map(|(q, w)| q * w).collect();
        let cfg = MleConfig { starts: 1, ..MleConfig::default() };
        let a = mle_fit(&base.with_counts(counts.clone()).unwrap(), &cfg, None).unwrap();
        let b = mle_fit(&base.conjugated(&u).unwrap().with_counts(counts).unwrap(), &cfg, None).unwrap();
        let fa = fidelity(&a.rho, &truth).unwrap();
        let fb = fidelity(&b.rho, &truth.conjugate(&u).unwrap()).unwrap();
        ensure((fa - fb).abs() < 1e-6, || format!("{fa} vs {fb}"))
    }));

    // sdtsim
    out.push(check("sdtsim", "identical seeds give identical trials", 20, (phases(), any::<u64>()), |(p, seed)| {
        let enc = LCEncoder::for_target(&p, [0.0; 3]).with_jitter(0.05);
        let cfg = SimConfig { budget: CountBudget::PerTomography(300.0), ..SimConfig::default() };
        let a = run_sdt_trial(&enc, &SourceModel::error_budget(), &cfg, seed).unwrap();
        let b = run_sdt_trial(&enc, &SourceModel::error_budget(), &cfg, seed).unwrap();
        ensure(a == b, || "trials differ".into())
    }));
    out.push(check("sdtsim", "ideal source delivers the target exactly", 1000, phases(), |p| {
        let rho = joint_density(&p, &SourceModel::ideal()).unwrap();
        let target = equimodular_ququart(&p);
        for o in AliceOutcome::ALL {
            let block = conditional(&rho, o.index() - 1);
            let bob = DensityOperator::from_unnormalized(block).unwrap();
            let f = fidelity(&correction_unitary(o).apply_density(&bob).unwrap(), &target.density()).unwrap();
            ensure((f - 1.0).abs() < 1e-9, || format!("{o:?}: {f}"))?;
        }
        Ok(())
    }));
    out.push(check(
        "sdtsim",
        "a noisier source never scores higher",
        40,
        (phases(), 0.0..1.0f64, 0.0..1.0f64),
        |(p, a, b)| {
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let enc = LCEncoder::for_target(&p, [0.0; 3]);
            let cfg = SimConfig { noiseless: true, ..SimConfig::default() };
            let f = |w: f64| {
                let src = SourceModel { pure_state_fraction: w, ..SourceModel::ideal() };
                run_sdt_trial(&enc, &src, &cfg, 1).unwrap().mean_fidelity
            };
            let (fh, fl) = (f(hi), f(lo));
            ensure(fl <= fh + 1e-9, || format!("p={lo}: {fl} > p={hi}: {fh}"))
        },
    ));
    out.push(check("sdtsim", "KS null rejection rate at most 8%", 1, Just(()), |_| {
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut r = rng(99);
        let reps = 2000;
        let rejected = (0..reps)
            .filter(|_| {
                let a: Vec<f64> = (0..10).map(|_| n.sample(&mut r)).collect();
                let b: Vec<f64> = (0..10).map(|_| n.sample(&mut r)).collect();
                ks_two_sample(&a, &b, 0.05).unwrap().reject
            })
            .count();
        ensure(rejected as f64 / reps as f64 <= 0.08, || format!("{rejected}/{reps}"))
    }));
    out.push(check(
        "sdtsim",
        "circular spread is shift-invariant",
        1000,
        (prop::collection::vec(-3.0..3.0f64, 2..40), -TAU..TAU),
        |(d, shift)| {
            let a = phase_error_stats(&d).unwrap();
            let shifted: Vec<f64> = d.iter().map(|x| wrap_pi(x + shift)).collect();
            let b = phase_error_stats(&shifted).unwrap();
            ensure((a.std_deg - b.std_deg).abs() < 1e-6 * (1.0 + a.std_deg), || format!("{} {}", a.std_deg, b.std_deg))
        },
    ));

    // spacelink
    out.push(check("spacelink", "passes are time-symmetric", 1000, (20.5..90.0f64, 0.5..5.0f64), |(el, dt)| {
        let p = propagate_pass(&OrbitConfig::default(), el, dt).unwrap();
        let n = p.samples.len();
        for k in 0..n / 2 {
            let (a, b) = (&p.samples[k], &p.samples[n - 1 - k]);
            ensure((a.range - b.range).abs() < 1e-6 * a.range, || format!("range at {k}"))?;
            ensure((a.radial_velocity + b.radial_velocity).abs() < 1e-9 * 8000.0, || format!("v_r at {k}"))?;
        }
        Ok(())
    }));
    out.push(check(
        "spacelink",
        "Friis transmission matches its closed form",
        1000,
        (1e-3..0.5f64, 0.1..2.0f64, 4e-7..2e-6f64, 1e5..5e6f64),
        |(dt, dr, wl, r)| {
            let b = LinkBudget { d_t: dt, d_r: dr, wavelength: wl, ..LinkBudget::default() };
            let eta = friis_transmission(r, &b).unwrap();
            let x = 4.0 * wl * r / (std::f64::consts::PI * dt * dr);
            if x < 1.0 {
                return Ok(());
            }
            ensure((eta * x * x - 1.0).abs() < 1e-12, || format!("{}", eta * x * x))
        },
    ));
    out.push(check("spacelink", "Doppler shift agrees with first order (as specified)", 1000, -1e4..1e4f64, |v| {
        if v == 0.0 {
            return Ok(());
        }
        let tau = 1.5e-9;
        let dt = doppler_delta_t(v, tau).unwrap();
        let rel = (dt - v / C * tau).abs() / dt.abs();
        ensure(rel < 1e-9, || format!("v = {v:.1} m/s: relative deviation {rel:.2e}"))
    }));
    out.push(check("spacelink", "Doppler shift agrees with second order", 1000, -1e4..1e4f64, |v| {
        if v == 0.0 {
            return Ok(());
        }
        let tau = 1.5e-9;
        let beta = v / C;
        let dt = doppler_delta_t(v, tau).unwrap();
        let rel = (dt - tau * beta * (1.0 + beta / 2.0)).abs() / dt.abs();
        ensure(rel < 1e-9, || format!("{rel:.2e}"))
    }));
    let ramp = DisturbanceSeries { dt: 0.01, phase: (0..6000).map(|k| 0.5 * (k as f64 * 0.01)).collect() };
    out.push(check(
        "spacelink",
        "less sensor noise never hurts the loop",
        200,
        (0.001..0.1f64, any::<u64>()),
        |(n, s)| {
            let quiet = simulate_pi_stabilization(&ramp, &PIConfig { sensor_noise_std: 0.0, ..PIConfig::default() }, s)
                .unwrap()
                .residual_std_deg;
            let noisy = simulate_pi_stabilization(&ramp, &PIConfig { sensor_noise_std: n, ..PIConfig::default() }, s)
                .unwrap()
                .residual_std_deg;
            ensure(quiet <= noisy + 1e-9, || format!("{quiet} > {noisy}"))
        },
    ));
    out.push(check(
        "spacelink",
        "pass totals scale with source and apertures",
        1000,
        (0.1..10.0f64, 0.1..10.0f64, 0.2..2.0f64),
        |(a, b, c)| {
            let base = LinkBudget::default();
            let n0 = coincidences_per_pass(&pass90, &base).unwrap();
            let n1 = coincidences_per_pass(
                &pass90,
                &LinkBudget {
                    pair_probability: base.pair_probability * a,
                    pump_rep_rate: base.pump_rep_rate * b,
                    ..base
                },
            )
            .unwrap();
            let n2 =
                coincidences_per_pass(&pass90, &LinkBudget { d_t: base.d_t * c, d_r: base.d_r * c, ..base }).unwrap();
            ensure((n1 / (n0 * a * b) - 1.0).abs() < 1e-12 && (n2 / (n0 * c.powi(4)) - 1.0).abs() < 1e-12, || {
                format!("{n0} {n1} {n2}")
            })
        },
    ));
    out
}
