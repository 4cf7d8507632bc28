//! Jones-calculus model of the ququart analyzer.
//!
//! Bob's analyzer is a removable polarizer, a half- and quarter-wave plate in
//! front of an unbalanced polarizing interferometer, and a half/quarter-wave
//! plate pair in each interferometer output port. Each of the four detectors
//! `B₁…B₄` is described by a ket obtained by propagating a detector
//! polarization back through the element chain
//!
//! ```text
//! BPol · BHWP₁ · BQWP₁ · BHFO · Interf_Pk · QWP_k · HWP_k · e
//! ```
//!
//! with `Interf_P1` injecting port 1 into `{Ht1, Vt2}` and `Interf_P2` into
//! `{Vt1, Ht2}`. The measurement operator of a detector is the outer product
//! of its ket with itself. The polarizer diagonal
//! `((2T_H−T_V)T_H, (2T_V−T_H)T_V)` is used verbatim, so a blocking polarizer
//! doubles the ket amplitude of the passed polarization.
//!
//! Circular polarizations follow `R = (H − iV)/√2`, `L = (H + iV)/√2`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt::Write as _;
use std::sync::OnceLock;

use nalgebra::Matrix2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, c, CMatrix, CVector, I, ONE, ZERO};
use crate::qcore::StateVector;

pub type Jones2 = Matrix2<Complex64>;

/// Overlap deficit below which a detector ket is considered to realize a target.
pub const MATCH_TOLERANCE: f64 = 1e-9;

const CATALOG_HEADER: &str = "# sdtlab tomography settings v1";
const CATALOG_COLUMNS: &str =
    "index,alpha1_deg,alpha2_deg,alpha3_deg,beta1_deg,beta2_deg,beta3_deg,t_h,t_v,duration_scale";
const FROZEN_CATALOG: &str = include_str!("../data/settings36.csv");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("invalid tomography setting: {0}")]
    InvalidSetting(String),
    #[error("settings derivation failed: {0}")]
    Configuration(String),
    #[error("settings file line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, OpticsError>;

/// Half-wave plate with fast axis at `alpha`.
pub fn jones_hwp(alpha: f64) -> Jones2 {
    let (s, co) = alpha.sin_cos();
    let off = c(-2.0 * co * s, 0.0);
    Jones2::new(c((2.0 * alpha).cos(), 0.0), off, off, c(-(2.0 * alpha).cos(), 0.0))
}

/// Quarter-wave plate with fast axis at `beta`.
pub fn jones_qwp(beta: f64) -> Jones2 {
    let (s, co) = beta.sin_cos();
    let (c2, s2) = (co * co, s * s);
    let off = (I - ONE) * co * s;
    Jones2::new(c2 + I * s2, off, off, I * c2 + s2)
}

/// Block-diagonal lift of a polarization operator to both time bins.
fn lift(m: &Jones2) -> CMatrix {
    let mut out = CMatrix::zeros(4, 4);
    for block in [0, 2] {
        for i in 0..2 {
            for j in 0..2 {
                out[(block + i, block + j)] = m[(i, j)];
            }
        }
    }
    out
}

fn interferometer_port(port: usize) -> CMatrix {
    let mut m = CMatrix::zeros(4, 2);
    match port {
        1 => {
            m[(0, 0)] = ONE;
            m[(3, 1)] = ONE;
        }
        _ => {
            m[(1, 0)] = ONE;
            m[(2, 1)] = ONE;
        }
    }
    m
}

fn half_flip() -> CMatrix {
    linalg::diag(&[ONE, -ONE, ONE, -ONE])
}

/// Removable-polarizer position of a setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarizerState {
    Removed,
    PassH,
    PassV,
    Other,
}

/// Waveplate angles (radians) and polarizer transmissions for one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TomographySetting {
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub beta3: f64,
    pub t_h: f64,
    pub t_v: f64,
    pub duration_scale: f64,
}

impl TomographySetting {
    /// All plates at 0°, polarizer removed.
    pub fn identity() -> Self {
        Self {
            alpha1: 0.0,
            alpha2: 0.0,
            alpha3: 0.0,
            beta1: 0.0,
            beta2: 0.0,
            beta3: 0.0,
            t_h: 1.0,
            t_v: 1.0,
            duration_scale: 1.0,
        }
    }

    /// Angles given in degrees as `[α₁, α₂, α₃, β₁, β₂, β₃]`.
    pub fn from_degrees(angles: [f64; 6], t_h: f64, t_v: f64, duration_scale: f64) -> Result<Self> {
        let [a1, a2, a3, b1, b2, b3] = angles.map(f64::to_radians);
        let s = Self { alpha1: a1, alpha2: a2, alpha3: a3, beta1: b1, beta2: b2, beta3: b3, t_h, t_v, duration_scale };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t_h", self.t_h), ("t_v", self.t_v)] {
            if !(0.0..=1.0).contains(&t) {
                return Err(OpticsError::InvalidSetting(format!("{name} = {t} outside [0, 1]")));
            }
        }
        if !(self.duration_scale > 0.0 && self.duration_scale.is_finite()) {
            return Err(OpticsError::InvalidSetting(format!(
                "duration_scale = {} must be positive",
                self.duration_scale
            )));
        }
        let angles = self.angles_deg();
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(OpticsError::InvalidSetting("non-finite waveplate angle".into()));
        }
        Ok(())
    }

    /// `[α₁, α₂, α₃, β₁, β₂, β₃]` in degrees.
    pub fn angles_deg(&self) -> [f64; 6] {
        [self.alpha1, self.alpha2, self.alpha3, self.beta1, self.beta2, self.beta3].map(f64::to_degrees)
    }

    pub fn polarizer(&self) -> PolarizerState {
        match (self.t_h, self.t_v) {
            (h, v) if h == 1.0 && v == 1.0 => PolarizerState::Removed,
            (h, v) if h == 1.0 && v == 0.0 => PolarizerState::PassH,
            (h, v) if h == 0.0 && v == 1.0 => PolarizerState::PassV,
            _ => PolarizerState::Other,
        }
    }

    /// Replaces the blocked transmission of an inserted polarizer by `leakage`.
    pub fn with_polarizer_leakage(&self, leakage: f64) -> Self {
        let mut s = *self;
        match self.polarizer() {
            PolarizerState::PassH => s.t_v = leakage,
            PolarizerState::PassV => s.t_h = leakage,
            _ => {}
        }
        s
    }
}

/// The four detector kets and operators of one setting.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorSet {
    vectors: [CVector; 4],
}

impl ProjectorSet {
    pub fn vectors(&self) -> &[CVector; 4] {
        &self.vectors
    }

    /// `Measp_i = Setang_i · Setang_i†`
    pub fn operator(&self, detector: usize) -> CMatrix {
        linalg::outer(&self.vectors[detector], &self.vectors[detector])
    }

    pub fn operators(&self) -> [CMatrix; 4] {
        [0, 1, 2, 3].map(|d| self.operator(d))
    }
}

/// Composes the analyzer for one setting.
pub fn build_projector_set(setting: &TomographySetting) -> ProjectorSet {
    let (th, tv) = (setting.t_h, setting.t_v);
    let ph = c((2.0 * th - tv) * th, 0.0);
    let pv = c((2.0 * tv - th) * tv, 0.0);
    let pol = linalg::diag(&[ph, pv, ph, pv]);
    let front = pol * lift(&jones_hwp(setting.alpha1)) * lift(&jones_qwp(setting.beta1)) * half_flip();

    let port = |port: usize, alpha: f64, beta: f64, input: usize| -> CVector {
        let inner = jones_qwp(beta) * jones_hwp(alpha);
        let e = CVector::from_vec(vec![inner[(0, input)], inner[(1, input)]]);
        &front * interferometer_port(port) * e
    };
    ProjectorSet {
        vectors: [
            port(1, setting.alpha2, setting.beta2, 0),
            port(1, setting.alpha2, setting.beta2, 1),
            port(2, setting.alpha3, setting.beta3, 0),
            port(2, setting.alpha3, setting.beta3, 1),
        ],
    }
}

/// One of the 36 states of the overcomplete single-ququart measurement set.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetState36 {
    /// 1-based position in the catalog.
    pub index: usize,
    pub label: String,
    pub state: StateVector,
}

fn pol_vec(p: char) -> [Complex64; 2] {
    let h = FRAC_1_SQRT_2;
    match p {
        'H' => [ONE, ZERO],
        'V' => [ZERO, ONE],
        'D' => [c(h, 0.0), c(h, 0.0)],
        'A' => [c(h, 0.0), c(-h, 0.0)],
        'R' => [c(h, 0.0), c(0.0, -h)],
        'L' => [c(h, 0.0), c(0.0, h)],
        _ => unreachable!("unknown polarization {p}"),
    }
}

/// `|p⟩⊗|t_bin⟩` as a ququart vector, `bin ∈ {0, 1}`.
fn pol_bin(p: char, bin: usize) -> [Complex64; 4] {
    let v = pol_vec(p);
    let mut out = [ZERO; 4];
    out[2 * bin] = v[0];
    out[2 * bin + 1] = v[1];
    out
}

fn superpose(a: [Complex64; 4], b: [Complex64; 4], coeff: Complex64) -> Vec<Complex64> {
    a.iter().zip(b.iter()).map(|(x, y)| (x + coeff * y) * FRAC_1_SQRT_2).collect()
}

fn coeff_label(coeff: Complex64) -> &'static str {
    match (coeff.re.round() as i32, coeff.im.round() as i32) {
        (0, 1) => "+i",
        (0, -1) => "-i",
        (1, 0) => "+",
        _ => "-",
    }
}

/// The 36 measurement states in catalog order.
pub fn standard_36_targets() -> Vec<TargetState36> {
    let mut out: Vec<(String, Vec<Complex64>)> = Vec::with_capacity(36);
    for p in ['H', 'V', 'D', 'A', 'R', 'L'] {
        for bin in 0..2 {
            out.push((format!("{p}t{}", bin + 1), pol_bin(p, bin).to_vec()));
        }
    }
    let coeffs = [I, -I, ONE, -ONE];
    for p in ['H', 'V'] {
        for &k in &coeffs {
            out.push((format!("{p}(t1{}t2)", coeff_label(k)), superpose(pol_bin(p, 0), pol_bin(p, 1), k)));
        }
    }
    for (first, second) in [('D', 'A'), ('R', 'L')] {
        for (p, q) in [(first, second), (second, first)] {
            for k in [[I, -I], [ONE, -ONE]].concat() {
                out.push((format!("{p}t1{}{q}t2", coeff_label(k)), superpose(pol_bin(p, 0), pol_bin(q, 1), k)));
            }
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(i, (label, amps))| TargetState36 {
            index: i + 1,
            label,
            state: StateVector::new(amps).expect("normalized target"),
        })
        .collect()
}

/// Overlap deficit `1 − |⟨t|s⟩|²/‖s‖²`, or `None` for a null ket.
fn support_deficit(ket: &CVector, target: &StateVector) -> Option<f64> {
    let n2 = ket.norm_squared();
    if n2 < 1e-12 {
        return None;
    }
    Some(1.0 - target.amplitudes().dotc(ket).norm_sqr() / n2)
}

fn match_target(ket: &CVector, targets: &[TargetState36]) -> Option<usize> {
    targets.iter().position(|t| support_deficit(ket, &t.state).is_some_and(|d| d.abs() <= MATCH_TOLERANCE))
}

const HWP_GRID: [f64; 4] = [0.0, 22.5, -22.5, 45.0];
const QWP_GRID: [f64; 4] = [0.0, 45.0, -45.0, 90.0];

/// Searches the waveplate grid for a setting whose detector `B₁` realizes
/// each of the 36 targets and whose other three detectors also land on
/// catalog states.
pub fn settings_for_36() -> Result<Vec<TomographySetting>> {
    let targets = standard_36_targets();
    let polarizers = [(1.0, 1.0, 1.0), (1.0, 0.0, 2.0), (0.0, 1.0, 2.0)];
    targets
        .iter()
        .map(|target| {
            for &(t_h, t_v, scale) in &polarizers {
                for a1 in HWP_GRID {
                    for b1 in QWP_GRID {
                        for a2 in HWP_GRID {
                            for b2 in QWP_GRID {
                                let probe = TomographySetting::from_degrees([a1, a2, a2, b1, b2, b2], t_h, t_v, scale)?;
                                let set = build_projector_set(&probe);
                                let deficit = support_deficit(&set.vectors[0], &target.state);
                                if !deficit.is_some_and(|d| d.abs() <= MATCH_TOLERANCE)
                                    || match_target(&set.vectors[1], &targets).is_none()
                                {
                                    continue;
                                }
                                if let Some(s) = complete_port_two(&probe, &targets) {
                                    return Ok(s);
                                }
                            }
                        }
                    }
                }
            }
            Err(OpticsError::Configuration(format!("no grid setting realizes target {}", target.label)))
        })
        .collect()
}

/// Picks port-2 plates so that `B₃` and `B₄` land on catalog states,
/// preferring the port-1 angles.
fn complete_port_two(probe: &TomographySetting, targets: &[TargetState36]) -> Option<TomographySetting> {
    let [a1, a2, _, b1, b2, _] = probe.angles_deg();
    let candidates =
        std::iter::once((a2, b2)).chain(HWP_GRID.iter().flat_map(|&a| QWP_GRID.iter().map(move |&b| (a, b))));
    for (a3, b3) in candidates {
        let s = TomographySetting::from_degrees([a1, a2, a3, b1, b2, b3], probe.t_h, probe.t_v, probe.duration_scale)
            .ok()?;
        let set = build_projector_set(&s);
        if match_target(&set.vectors[2], targets).is_some() && match_target(&set.vectors[3], targets).is_some() {
            return Some(s);
        }
    }
    None
}

/// Target index (0-based) realized by each detector of each setting.
pub fn detector_targets(settings: &[TomographySetting]) -> Vec<[Option<usize>; 4]> {
    let targets = standard_36_targets();
    settings
        .iter()
        .map(|s| {
            let set = build_projector_set(s);
            [0, 1, 2, 3].map(|d| match_target(&set.vectors[d], &targets))
        })
        .collect()
}

/// The frozen 36-setting catalog shipped with the crate.
pub fn catalog_36() -> &'static [TomographySetting] {
    static CATALOG: OnceLock<Vec<TomographySetting>> = OnceLock::new();
    CATALOG.get_or_init(|| parse_settings_catalog(FROZEN_CATALOG).expect("bundled settings catalog parses"))
}

fn format_number(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

/// Serializes a catalog in the versioned tabular text format.
pub fn write_settings_catalog(settings: &[TomographySetting]) -> String {
    let mut out = format!("{CATALOG_HEADER}\n{CATALOG_COLUMNS}\n");
    for (i, s) in settings.iter().enumerate() {
        let angles: Vec<String> = s.angles_deg().iter().map(|&a| format_number(a)).collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            angles.join(","),
            format_number(s.t_h),
            format_number(s.t_v),
            format_number(s.duration_scale)
        )
        .expect("string write");
    }
    out
}

/// Parses the versioned settings format. Rows must be numbered 1, 2, … in order.
pub fn parse_settings_catalog(text: &str) -> Result<Vec<TomographySetting>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, l)) if l.trim() == CATALOG_HEADER => {}
        Some((n, l)) => {
            return Err(OpticsError::Parse { line: n + 1, message: format!("expected version line, found {l:?}") })
        }
        None => return Err(OpticsError::Parse { line: 1, message: "empty settings file".into() }),
    }
    match lines.next() {
        Some((_, l)) if l.trim() == CATALOG_COLUMNS => {}
        Some((n, l)) => {
            return Err(OpticsError::Parse { line: n + 1, message: format!("unexpected column header {l:?}") })
        }
        None => return Err(OpticsError::Parse { line: 2, message: "missing column header".into() }),
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let err = |message: String| OpticsError::Parse { line: n + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", fields.len())));
        }
        let nums: Vec<f64> = fields
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| err(format!("bad number {f:?}: {e}"))))
            .collect::<Result<_>>()?;
        if nums[0] != (out.len() + 1) as f64 {
            return Err(err(format!("expected index {}, found {}", out.len() + 1, fields[0])));
        }
        let s = TomographySetting::from_degrees(
            [nums[1], nums[2], nums[3], nums[4], nums[5], nums[6]],
            nums[7],
            nums[8],
            nums[9],
        )
        .map_err(|e| err(e.to_string()))?;
        out.push(s);
    }
    Ok(out)
}

/// One entry of the two-photon catalog: an analyzer setting on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointSetting {
    /// 1-based position `36·(a−1) + b`.
    pub index: usize,
    /// 0-based index into the Alice/Charles-side catalog.
    pub alice: usize,
    /// 0-based index into Bob's catalog.
    pub bob: usize,
}

/// Cartesian product of two 36-setting catalogs.
pub fn joint_settings_1296() -> Vec<JointSetting> {
    (0..36).flat_map(|a| (0..36).map(move |b| JointSetting { index: a * 36 + b + 1, alice: a, bob: b })).collect()
}

/// 16-dimensional operator for Alice detector `i` and Bob detector `j`.
pub fn joint_operator(alice: &ProjectorSet, bob: &ProjectorSet, i: usize, j: usize) -> CMatrix {
    linalg::kron(&alice.operator(i), &bob.operator(j))
}
