//! Joint state preparation and count generation.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use super::{CountBudget, Result, SimConfig, SimError, SourceModel};
use crate::linalg::{self, cis, CMatrix, CVector};
use crate::optics::{build_projector_set, TomographySetting};
use crate::qcore::{alice_basis, encode_phases, make_shared_entangled_state, EquimodularPhases};
use crate::tomo::{CoincidenceRow, CountRecord};

/// Extra phase on Bob's second time bin while each setting is measured.
///
/// Entry `s` lists phase samples (radians) spanning the dwell time of
/// setting `s`; the state seen by that setting is the average over them.
/// An empty list for a setting means no disturbance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeBinDisturbance {
    pub per_setting: Vec<Vec<f64>>,
}

impl TimeBinDisturbance {
    pub fn none() -> Self {
        Self::default()
    }

    /// The same constant phase for every setting.
    pub fn constant(phase: f64, settings: usize) -> Self {
        Self { per_setting: vec![vec![phase]; settings] }
    }

    fn samples(&self, setting: usize) -> &[f64] {
        self.per_setting.get(setting).map_or(&[], Vec::as_slice)
    }
}

fn bin(b: usize) -> usize {
    b / 2
}

/// The degraded two-photon density matrix for encoded `phases`, before the
/// polarizer (which acts through the analyzer settings).
pub fn joint_density(phases: &EquimodularPhases, source: &SourceModel) -> Result<CMatrix> {
    source.validate()?;
    let psi = encode_phases(&make_shared_entangled_state(4)?, phases)?;
    let p = source.pure_state_fraction;
    let mut rho =
        linalg::outer(psi.amplitudes(), psi.amplitudes()).scale(p) + CMatrix::identity(16, 16).scale((1.0 - p) / 16.0);
    let w = source.term_amplitude_imbalance;
    let v = source.time_bin_qubit_purity;
    for r in 0..16 {
        for c in 0..16 {
            let (br, bc) = (r % 4, c % 4);
            let mut f = w[br] * w[bc];
            if bin(br) != bin(bc) {
                f *= v;
            }
            rho[(r, c)] *= f;
        }
    }
    let tr = linalg::trace(&rho).re;
    Ok(rho.unscale(tr))
}

/// Bob's unnormalized conditional states `(⟨A_k|⊗I) ρ (|A_k⟩⊗I)`.
fn conditional_blocks(rho: &CMatrix) -> [CMatrix; 4] {
    let basis = alice_basis();
    std::array::from_fn(|k| {
        let a = basis[k].amplitudes();
        CMatrix::from_fn(4, 4, |i, j| {
            let mut s = Complex64::new(0.0, 0.0);
            for c in 0..4 {
                for cp in 0..4 {
                    s += a[c].conj() * a[cp] * rho[(4 * c + i, 4 * cp + j)];
                }
            }
            s
        })
    })
}

/// Averages `D(δ) σ D(δ)†` over phase samples, `D(δ) = diag(1, 1, e^{iδ}, e^{iδ})`.
fn phase_averaged(sigma: &CMatrix, samples: &[f64]) -> CMatrix {
    if samples.is_empty() {
        return sigma.clone();
    }
    let mean: Complex64 = samples.iter().map(|&d| cis(d)).sum::<Complex64>() / samples.len() as f64;
    CMatrix::from_fn(4, 4, |i, j| match (bin(i), bin(j)) {
        (1, 0) => sigma[(i, j)] * mean,
        (0, 1) => sigma[(i, j)] * mean.conj(),
        _ => sigma[(i, j)],
    })
}

/// Mean coincidences per unit pair rate, `[alice][bob]`, with dwell time.
fn unit_means(
    blocks: &[CMatrix; 4],
    setting: &TomographySetting,
    kets: &[CVector; 4],
    config: &SimConfig,
    base_duration: f64,
    crosstalk: f64,
) -> ([[f64; 4]; 4], f64) {
    let duration = base_duration * setting.duration_scale;
    let mut out = [[0.0; 4]; 4];
    for (k, sigma) in blocks.iter().enumerate() {
        let ideal: [f64; 4] = std::array::from_fn(|j| linalg::expectation(sigma, &kets[j]).max(0.0));
        for j in 0..4 {
            // detectors 2m and 2m+1 share a polarizing beam splitter
            let seen = (1.0 - crosstalk) * ideal[j] + crosstalk * ideal[j ^ 1];
            let p = seen * config.detector_efficiency[j] * duration;
            match config.alice_confusion {
                Some(conf) => {
                    for i in 0..4 {
                        out[i][j] += conf[k][i] * p;
                    }
                }
                None => out[k][j] += p,
            }
        }
    }
    (out, duration)
}

/// Expected coincidences for every setting, including background.
pub fn expected_rows(
    phases: &EquimodularPhases,
    source: &SourceModel,
    settings: &[TomographySetting],
    config: &SimConfig,
    disturbance: &TimeBinDisturbance,
) -> Result<Vec<CoincidenceRow>> {
    config.validate()?;
    let rho = joint_density(phases, source)?;
    let blocks = conditional_blocks(&rho);
    let leak = source.polarizer_leakage();
    let base = match config.budget {
        CountBudget::PairRate { setting_duration_s, .. } => setting_duration_s,
        CountBudget::PerTomography(_) => 1.0,
    };
    let mut unit = Vec::with_capacity(settings.len());
    for (s, setting) in settings.iter().enumerate() {
        let physical = setting.with_polarizer_leakage(leak);
        let kets = build_projector_set(&physical).vectors().clone();
        let samples = disturbance.samples(s);
        let local: [CMatrix; 4] = std::array::from_fn(|k| phase_averaged(&blocks[k], samples));
        unit.push(unit_means(&local, setting, &kets, config, base, source.beam_splitter_crosstalk()));
    }
    let rate = match config.budget {
        CountBudget::PairRate { pairs_per_s, .. } => pairs_per_s,
        CountBudget::PerTomography(n) => {
            let total: f64 = unit.iter().map(|(m, _)| m.iter().flatten().sum::<f64>()).sum();
            if total <= 0.0 {
                return Err(SimError::InvalidConfig("settings collect no light".into()));
            }
            4.0 * n / total
        }
    };
    Ok(unit
        .into_iter()
        .enumerate()
        .map(|(s, (m, duration))| CoincidenceRow {
            setting: s + 1,
            duration_s: duration,
            counts: m.map(|row| row.map(|x| x * rate + source.background_rate * duration)),
        })
        .collect())
}

/// Poisson draws around [`expected_rows`]. Singles are the marginal sums of
/// the coincidences; unpaired detections are not modelled.
pub fn simulate_counts<R: Rng + ?Sized>(
    phases: &EquimodularPhases,
    source: &SourceModel,
    settings: &[TomographySetting],
    config: &SimConfig,
    disturbance: &TimeBinDisturbance,
    rng: &mut R,
) -> Result<Vec<CountRecord>> {
    let rows = expected_rows(phases, source, settings, config, disturbance)?;
    Ok(sample_rows(&rows, rng))
}

/// Expected coincidences over the two-photon catalog: Alice and Bob each
/// analyze with `settings`, and row `36·a + b + 1` pairs Alice setting `a`
/// with Bob setting `b`. Dwell times multiply; `per_setting` is the
/// expected total of a setting pair without a polarizer.
pub fn joint_expected_rows(
    phases: &EquimodularPhases,
    source: &SourceModel,
    settings: &[TomographySetting],
    per_setting: f64,
) -> Result<Vec<CoincidenceRow>> {
    source.validate()?;
    if !(per_setting > 0.0 && per_setting.is_finite()) {
        return Err(SimError::InvalidConfig(format!("count level {per_setting} must be positive")));
    }
    let rho = joint_density(phases, source)?;
    let leak = source.polarizer_leakage();
    let x = source.beam_splitter_crosstalk();
    let sets: Vec<_> = settings.iter().map(|s| build_projector_set(&s.with_polarizer_leakage(leak))).collect();
    let n = settings.len();
    let mut rows = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            let duration = settings[a].duration_scale * settings[b].duration_scale;
            let ideal: [[f64; 4]; 4] = std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let k = linalg::kron_vec(&sets[a].vectors()[i], &sets[b].vectors()[j]);
                    linalg::expectation(&rho, &k).max(0.0)
                })
            });
            let counts = std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let seen = (1.0 - x) * ideal[i][j] + x * ideal[i][j ^ 1];
                    seen * per_setting * duration + source.background_rate * duration
                })
            });
            rows.push(CoincidenceRow { setting: a * n + b + 1, duration_s: duration, counts });
        }
    }
    Ok(rows)
}

/// Independent Poisson draws around expected rows.
pub fn sample_rows<R: Rng + ?Sized>(rows: &[CoincidenceRow], rng: &mut R) -> Vec<CountRecord> {
    rows.iter().map(|r| sample_record(r, rng)).collect()
}

pub(crate) fn sample_record<R: Rng + ?Sized>(row: &CoincidenceRow, rng: &mut R) -> CountRecord {
    let coincidences = row
        .counts
        .map(|line| line.map(|m| if m > 0.0 { Poisson::new(m).expect("finite mean").sample(rng) as u64 } else { 0 }));
    let mut singles_a = [0u64; 4];
    let mut singles_b = [0u64; 4];
    for i in 0..4 {
        for j in 0..4 {
            singles_a[i] += coincidences[i][j];
            singles_b[j] += coincidences[i][j];
        }
    }
    CountRecord { setting: row.setting, duration_s: row.duration_s, singles_a, singles_b, coincidences }
}
