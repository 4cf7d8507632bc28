//! Subcommand implementations. Every command writes its files under `--out`
//! and prints a JSON summary on stdout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use sdtlab::io::{self, Format};
use sdtlab::optics::{catalog_36, parse_settings_catalog, TomographySetting};
use sdtlab::qcore::{
    correction_unitary, decompose_joint_state, encode_phases, equimodular_ququart, extract_phases, fidelity,
    make_shared_entangled_state, purity, wrap_pi, AliceOutcome, EquimodularPhases,
};
use sdtlab::rng::{tag, task_rng};
use sdtlab::sdtsim::{
    default_repeats, fidelity_vs_counts_curve, joint_expected_rows, ks_two_sample, phase_grid_sweep, sample_rows,
    simulate_counts, CountBudget, Estimator, LCEncoder, SimConfig, SourceModel, TimeBinDisturbance,
    ERROR_BUDGET_LC_JITTER_DEG,
};
use sdtlab::spacelink::{
    doppler_delta_t, doppler_phase_series, pass_summary_curve, propagate_pass, simulate_pi_stabilization,
    stabilized_sdt_fidelity, SpaceError, StabilizationTrace,
};
use sdtlab::tomo::{
    bme_reconstruct, calibrate_efficiencies, mle_reconstruct, monte_carlo_errors, rows_from_records, BmeConfig,
    CoincidenceRow, CountRecord, EfficiencyCalibration, ErrorBars, MleConfig, MonteCarloConfig, ReconstructionResult,
    TomographyTarget,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{Cli, Command, EstimatorArg, FormatArg, SimFlags, Switch};

/// Passes with fewer coincidences than this cannot support a tomography.
const MIN_PASS_COINCIDENCES: f64 = 300.0;

struct Ctx {
    cfg: RunConfig,
    seed: Option<u64>,
    out: PathBuf,
    format: Format,
}

impl Ctx {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn ext(&self) -> &'static str {
        match self.format {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn write(&self, name: &str, content: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::data(format!("{}: {e}", self.out.display())))?;
        let path = self.out.join(name);
        fs::write(&path, content).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }

    fn write_table<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        let text = io::write_table(rows, self.format)?;
        self.write(&format!("{stem}.{}", self.ext()), &text)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }

    fn source(&self, error_budget: bool) -> SourceModel {
        if error_budget {
            SourceModel::error_budget()
        } else {
            self.cfg.source
        }
    }

    fn encoder(&self, target: &EquimodularPhases, error_budget: bool) -> LCEncoder {
        let e = &self.cfg.encoder;
        let jitter = if error_budget { ERROR_BUDGET_LC_JITTER_DEG } else { e.jitter_deg };
        LCEncoder {
            drift_rate: e.drift_deg_per_hour.to_radians(),
            jitter_std: jitter.to_radians(),
            ..LCEncoder::for_target(target, e.calib_offsets_deg.map(f64::to_radians))
        }
    }

    fn sim_config(&self, flags: Option<&SimFlags>) -> SimConfig {
        let s = &self.cfg.sim;
        let t = &self.cfg.tomo;
        SimConfig {
            budget: CountBudget::PerTomography(flags.and_then(|f| f.counts).unwrap_or(s.counts_per_tomography)),
            detector_efficiency: s.detector_efficiency,
            estimator: s.estimator,
            noiseless: s.noiseless || flags.is_some_and(|f| f.noiseless),
            elapsed_hours: s.elapsed_hours,
            mle: MleConfig { starts: t.mle_starts, seed: self.seed(), ..MleConfig::default() },
            bme: BmeConfig {
                particles: t.bme_particles,
                mh_steps: t.bme_mh_steps,
                seed: self.seed(),
                ..BmeConfig::default()
            },
            ..SimConfig::default()
        }
    }
}

fn print<T: Serialize>(value: &T) {
    use std::io::Write;
    // a closed pipe is not an error of the run
    let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(value).expect("serializable summary"));
}

fn warn(message: impl std::fmt::Display) {
    eprintln!("warning: {message}");
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn phases_from(deg: &[f64]) -> Result<EquimodularPhases, CliError> {
    match deg {
        [a, b, c] if deg.iter().all(|x| x.is_finite()) => Ok(EquimodularPhases::from_degrees(*a, *b, *c)),
        _ => Err(CliError::usage("expected three finite phases in degrees")),
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let ctx = Ctx {
        seed: cli.seed.or(cfg.seed),
        cfg,
        out: cli.out.clone(),
        format: match cli.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        },
    };
    match &cli.command {
        Command::Simulate { phases_deg, sim, joint } => simulate(&ctx, phases_deg, sim, *joint),
        Command::Tomo { counts, settings, calib, estimator, target_phases_deg, error_bars, joint } => tomo(
            &ctx,
            &TomoArgs {
                counts,
                settings: settings.as_deref(),
                calib: calib.as_deref(),
                estimator: *estimator,
                target: target_phases_deg.as_deref(),
                error_bars: *error_bars,
                joint: *joint,
            },
        ),
        Command::Sweep { step, repeats, sim } => sweep(&ctx, *step, *repeats, sim),
        Command::Curve { levels, trials, error_budget } => curve(&ctx, levels, *trials, *error_budget),
        Command::Link { elevations, min_elevation, altitude, space_loss_db, dt } => {
            link(&ctx, elevations.as_deref(), *min_elevation, *altitude, *space_loss_db, *dt)
        }
        Command::Doppler { max_elevation, stabilization, gains, noise, fidelity_trials } => {
            doppler(&ctx, *max_elevation, *stabilization, gains.as_deref(), *noise, *fidelity_trials)
        }
        Command::Ks { file1, file2, alpha } => ks(&ctx, file1, file2, *alpha),
        Command::Calibrate { runs } => calibrate(&ctx, runs),
    }
}

fn rounded(rows: &[CoincidenceRow]) -> Vec<CountRecord> {
    rows.iter()
        .map(|r| {
            let coincidences = r.counts.map(|line| line.map(|m| m.round() as u64));
            let mut singles_a = [0; 4];
            let mut singles_b = [0; 4];
            for i in 0..4 {
                for j in 0..4 {
                    singles_a[i] += coincidences[i][j];
                    singles_b[j] += coincidences[i][j];
                }
            }
            CountRecord { setting: r.setting, duration_s: r.duration_s, singles_a, singles_b, coincidences }
        })
        .collect()
}

fn simulate(ctx: &Ctx, phases_deg: &[f64], flags: &SimFlags, joint: bool) -> Result<(), CliError> {
    let target = phases_from(phases_deg)?;
    let source = ctx.source(flags.error_budget);
    let enc = ctx.encoder(&target, flags.error_budget);
    let config = ctx.sim_config(Some(flags));
    let seed = ctx.seed();
    let realized = enc.realized_phases(config.elapsed_hours, &mut task_rng(seed, &[tag::TRIAL]));
    let mut rng = task_rng(seed, &[tag::SIMULATE]);
    let records = if joint {
        let CountBudget::PerTomography(n) = config.budget else { unreachable!("per-tomography budget") };
        // a conditional tomography spreads 4n over 36 settings
        let rows = joint_expected_rows(&realized, &source, catalog_36(), 4.0 * n / 36.0)?;
        if config.noiseless {
            rounded(&rows)
        } else {
            sample_rows(&rows, &mut rng)
        }
    } else if config.noiseless {
        rounded(&sdtlab::sdtsim::expected_rows(&realized, &source, catalog_36(), &config, &TimeBinDisturbance::none())?)
    } else {
        simulate_counts(&realized, &source, catalog_36(), &config, &TimeBinDisturbance::none(), &mut rng)?
    };
    let path = ctx.write("counts.csv", &io::write_counts(&records))?;
    let summary = json!({
        "seed": seed,
        "joint": joint,
        "target_deg": target.to_degrees(),
        "realized_deg": realized.to_degrees(),
        "settings": records.len(),
        "total_coincidences": records.iter().map(CountRecord::total_coincidences).sum::<u64>(),
        "counts": path,
    });
    ctx.write_json("truth.json", &summary)?;
    print(&summary);
    Ok(())
}

struct TomoArgs<'a> {
    counts: &'a Path,
    settings: Option<&'a Path>,
    calib: Option<&'a Path>,
    estimator: Option<EstimatorArg>,
    target: Option<&'a [f64]>,
    error_bars: Option<usize>,
    joint: bool,
}

#[derive(Serialize)]
struct OutcomeMetrics {
    outcome: String,
    log_likelihood: f64,
    total_pairs: f64,
    iterations: usize,
    purity: f64,
    fidelity: Option<f64>,
    fidelity_uncalibrated: Option<f64>,
    measured_phases_deg: Option<[f64; 3]>,
    phase_error_deg: Option<[f64; 3]>,
    error_bars: Option<ErrorBars>,
    warnings: Vec<String>,
}

fn tomo(ctx: &Ctx, args: &TomoArgs) -> Result<(), CliError> {
    let records = io::read_counts(&read_text(args.counts)?)?;
    let rows = rows_from_records(&records)?;
    let settings: Vec<TomographySetting> = match args.settings {
        Some(p) => parse_settings_catalog(&read_text(p)?)?,
        None => catalog_36().to_vec(),
    };
    let calib = match args.calib {
        Some(p) => {
            let c: EfficiencyCalibration =
                serde_json::from_str(&read_text(p)?).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            EfficiencyCalibration::new(c.ratios)?
        }
        None => EfficiencyCalibration::unit(),
    };
    let estimator = match args.estimator {
        Some(EstimatorArg::Mle) => Estimator::Mle,
        Some(EstimatorArg::Bme) => Estimator::Bme,
        None => ctx.cfg.sim.estimator,
    };
    if estimator == Estimator::Bme && ctx.seed.is_none() {
        return Err(CliError::usage("the bme estimator is stochastic and needs --seed"));
    }
    let target = args.target.map(phases_from).transpose()?;
    let base = ctx.sim_config(None);
    let fit = |kind: TomographyTarget, calib: &EfficiencyCalibration| -> Result<ReconstructionResult, CliError> {
        Ok(match estimator {
            Estimator::Mle => mle_reconstruct(&rows, &settings, calib, kind, &base.mle)?,
            Estimator::Bme => bme_reconstruct(&rows, &settings, calib, kind, &base.bme)?,
        })
    };
    let errors = |kind: TomographyTarget, truth: Option<&sdtlab::StateVector>| -> Result<Option<ErrorBars>, CliError> {
        match args.error_bars {
            None | Some(0) => Ok(None),
            Some(samples) => {
                let mc = MonteCarloConfig { samples, seed: ctx.seed(), ..MonteCarloConfig::default() };
                Ok(Some(monte_carlo_errors(&rows, &settings, &calib, kind, truth, &mc)?))
            }
        }
    };
    let uncalibrated = |kind, truth: &sdtlab::StateVector| -> Result<Option<f64>, CliError> {
        if args.calib.is_none() {
            return Ok(None);
        }
        Ok(Some(fidelity(&fit(kind, &EfficiencyCalibration::unit())?.rho, &truth.density())?))
    };

    if args.joint {
        let truth = target.map(|t| encode_phases(&make_shared_entangled_state(4)?, &t)).transpose()?;
        let r = fit(TomographyTarget::Joint, &calib)?;
        ctx.write("rho_joint.json", &io::write_density(&r.rho))?;
        let metrics = OutcomeMetrics {
            outcome: "joint".into(),
            log_likelihood: r.log_likelihood,
            total_pairs: r.total_pairs,
            iterations: r.iterations,
            purity: purity(&r.rho),
            fidelity: truth.as_ref().map(|t| fidelity(&r.rho, &t.density())).transpose()?,
            fidelity_uncalibrated: truth
                .as_ref()
                .map(|t| uncalibrated(TomographyTarget::Joint, t))
                .transpose()?
                .flatten(),
            measured_phases_deg: None,
            phase_error_deg: None,
            error_bars: errors(TomographyTarget::Joint, truth.as_ref())?,
            warnings: r.warnings,
        };
        for w in &metrics.warnings {
            warn(w);
        }
        let summary = json!({ "estimator": estimator, "seed": ctx.seed, "joint": metrics });
        ctx.write_json("metrics.json", &summary)?;
        print(&summary);
        return Ok(());
    }

    let branches = target.map(|t| decompose_joint_state(&t));
    let mut outcomes = Vec::new();
    for k in 1..=4 {
        let outcome = AliceOutcome::from_index(k).expect("four outcomes");
        let kind = TomographyTarget::Conditional(outcome);
        let r = fit(kind, &calib)?;
        ctx.write(&format!("rho_a{k}.json"), &io::write_density(&r.rho))?;
        // raw-frame branch state; fidelity is unchanged by the correction
        let truth = branches.as_ref().map(|b| b[k - 1].state.clone());
        let mut m = OutcomeMetrics {
            outcome: format!("A{k}"),
            log_likelihood: r.log_likelihood,
            total_pairs: r.total_pairs,
            iterations: r.iterations,
            purity: purity(&r.rho),
            fidelity: None,
            fidelity_uncalibrated: None,
            measured_phases_deg: None,
            phase_error_deg: None,
            error_bars: errors(kind, truth.as_ref())?,
            warnings: r.warnings.clone(),
        };
        if let (Some(t), Some(truth)) = (target, truth.as_ref()) {
            let corrected = correction_unitary(outcome).apply_density(&r.rho)?;
            ctx.write(&format!("rho_a{k}_corrected.json"), &io::write_density(&corrected))?;
            m.fidelity = Some(fidelity(&corrected, &equimodular_ququart(&t).density())?);
            m.fidelity_uncalibrated = uncalibrated(kind, truth)?;
            match extract_phases(&corrected) {
                Ok(p) => {
                    m.measured_phases_deg = Some(p.to_degrees());
                    m.phase_error_deg = Some(p.delta(&t).map(|d| wrap_pi(d).to_degrees()));
                }
                Err(e) => m.warnings.push(format!("phases undefined: {e}")),
            }
        }
        for w in &m.warnings {
            warn(format!("A{k}: {w}"));
        }
        outcomes.push(m);
    }
    let fids: Vec<f64> = outcomes.iter().filter_map(|m| m.fidelity).collect();
    let mean_fidelity = (!fids.is_empty()).then(|| fids.iter().sum::<f64>() / fids.len() as f64);
    let summary = json!({
        "estimator": estimator,
        "seed": ctx.seed,
        "calibration": calib.ratios,
        "mean_fidelity": mean_fidelity,
        "outcomes": outcomes,
    });
    ctx.write_json("metrics.json", &summary)?;
    print(&summary);
    Ok(())
}

fn sweep(ctx: &Ctx, step: f64, repeats: Option<usize>, flags: &SimFlags) -> Result<(), CliError> {
    if repeats == Some(0) {
        return Err(CliError::usage("--repeats must be at least 1"));
    }
    let source = ctx.source(flags.error_budget);
    let template = ctx.encoder(&EquimodularPhases::zero(), flags.error_budget);
    let config = ctx.sim_config(Some(flags));
    let result = phase_grid_sweep(step, repeats, &template, &source, &config, ctx.seed())?;
    let table = ctx.write_table("sweep", &result.rows())?;
    let summary = json!({
        "seed": ctx.seed(),
        "step_deg": result.step_deg,
        "points": result.points.len() / result.repeats.max(1),
        "repeats": result.repeats,
        "default_repeats": default_repeats(step),
        "mean_fidelity": result.mean_fidelity,
        "fidelity_std": result.fidelity_std,
        "phase_stats": result.phase_stats,
        "table": table,
    });
    ctx.write_json("sweep_summary.json", &summary)?;
    print(&summary);
    Ok(())
}

fn curve(ctx: &Ctx, levels: &[f64], trials: usize, error_budget: bool) -> Result<(), CliError> {
    let source = ctx.source(error_budget);
    let enc = ctx.encoder(&EquimodularPhases::zero(), error_budget);
    let config = ctx.sim_config(None);
    let points = fidelity_vs_counts_curve(&enc, &source, &config, levels, trials, ctx.seed())?;
    ctx.write_table("curve", &points)?;
    print(&json!({ "seed": ctx.seed(), "points": points }));
    Ok(())
}

fn link(
    ctx: &Ctx,
    elevations: Option<&[f64]>,
    min_elevation: Option<f64>,
    altitude: Option<f64>,
    space_loss_db: Option<f64>,
    dt: f64,
) -> Result<(), CliError> {
    let mut orbit = ctx.cfg.orbit;
    let mut budget = ctx.cfg.link;
    if let Some(m) = min_elevation {
        orbit.min_elevation = m;
    }
    if let Some(h) = altitude {
        orbit.altitude = h;
    }
    if let Some(l) = space_loss_db {
        budget.space_analysis_loss_db = l;
    }
    let default: Vec<f64> = (5..=18).map(|k| 5.0 * k as f64).collect();
    let elevations = elevations.unwrap_or(&default);
    if elevations.is_empty() {
        return Err(CliError::usage("no pass elevations given"));
    }
    let rows = pass_summary_curve(&orbit, &budget, elevations, dt)?;
    for r in rows.iter().filter(|r| r.total_coincidences < MIN_PASS_COINCIDENCES) {
        warn(format!(
            "pass with maximum elevation {}° collects {:.0} coincidences, too few for a tomography",
            r.max_elevation, r.total_coincidences
        ));
    }
    let table = ctx.write_table("link", &rows)?;
    print(&json!({
        "fixed_losses_db": budget.fixed_losses_db(),
        "passes": rows,
        "table": table,
    }));
    Ok(())
}

#[derive(Serialize)]
struct PassRow {
    t_s: f64,
    range_m: f64,
    elevation_deg: f64,
    radial_velocity_m_s: f64,
    delta_t_s: f64,
    coincidence_rate_hz: f64,
}

#[derive(Serialize)]
struct TraceRow {
    t_s: f64,
    disturbance_rad: f64,
    residual_rad: f64,
    error: f64,
    actuator_rad: f64,
}

fn trace_rows(tr: &StabilizationTrace) -> Vec<TraceRow> {
    (0..tr.t.len())
        .map(|k| TraceRow {
            t_s: tr.t[k],
            disturbance_rad: tr.disturbance[k],
            residual_rad: tr.residual[k],
            error: tr.error[k],
            actuator_rad: tr.actuator[k],
        })
        .collect()
}

fn doppler(
    ctx: &Ctx,
    max_elevation: Option<f64>,
    stabilization: Switch,
    gains: Option<&[f64]>,
    noise: Option<f64>,
    fidelity_trials: usize,
) -> Result<(), CliError> {
    let d = &ctx.cfg.doppler;
    let mut pi = ctx.cfg.pi;
    pi.enabled = stabilization == Switch::On;
    if let Some(&[kp, ki]) = gains {
        pi.kp = kp;
        pi.ki = ki;
    }
    if let Some(n) = noise {
        pi.sensor_noise_std = n;
    }
    pi.validate()?;
    if pi.enabled && pi.kp == 0.0 && pi.ki == 0.0 {
        warn("both gains are zero; the loop passes the disturbance through");
        pi.enabled = false;
    }
    let el = max_elevation.unwrap_or(d.max_elevation);
    let pass = propagate_pass(&ctx.cfg.orbit, el, d.pass_dt)?;
    let budget = ctx.cfg.link;
    let rows = pass
        .samples
        .iter()
        .map(|s| {
            Ok(PassRow {
                t_s: s.t,
                range_m: s.range,
                elevation_deg: s.elevation,
                radial_velocity_m_s: s.radial_velocity,
                delta_t_s: doppler_delta_t(s.radial_velocity, d.tau_bin)?,
                coincidence_rate_hz: budget.coincidence_rate(s.range)?,
            })
        })
        .collect::<Result<Vec<_>, SpaceError>>()?;
    let pass_table = ctx.write_table("pass", &rows)?;
    let dist = doppler_phase_series(&pass, d.tau_bin, d.wavelength, pi.rate)?;
    let trace = match simulate_pi_stabilization(&dist, &pi, ctx.seed()) {
        Ok(t) => t,
        Err(SpaceError::Unstable { step, residual_fringes, trace }) => {
            let path = ctx.write_table("trace_unstable", &trace_rows(&trace))?;
            return Err(CliError::convergence(format!(
                "stabilization diverged at step {step} ({residual_fringes:.1} fringes); trace written to {}",
                path.display()
            )));
        }
        Err(e) => return Err(e.into()),
    };
    let trace_table = ctx.write_table("trace", &trace_rows(&trace))?;
    let (lo, hi) = dist.phase.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let dts = rows.iter().map(|r| r.delta_t_s);
    let fid = if fidelity_trials > 0 {
        let enc = ctx.encoder(&EquimodularPhases::zero(), false);
        Some(stabilized_sdt_fidelity(
            &dist,
            &pi,
            &enc,
            &ctx.cfg.source,
            &ctx.sim_config(None),
            fidelity_trials,
            ctx.seed(),
        )?)
    } else {
        None
    };
    let summary = json!({
        "seed": ctx.seed(),
        "max_elevation_deg": el,
        "duration_s": pass.duration(),
        "delta_t_range_s": [dts.clone().fold(f64::INFINITY, f64::min), dts.fold(f64::NEG_INFINITY, f64::max)],
        "phase_swing_rad": hi - lo,
        "stabilization": pi.enabled,
        "gains": [pi.kp, pi.ki],
        "residual_mean_deg": trace.residual_mean_deg,
        "residual_std_deg": trace.residual_std_deg,
        "fringes_swept": trace.fringes_swept,
        "sdt_fidelity": fid,
        "pass": pass_table,
        "trace": trace_table,
    });
    ctx.write_json("doppler_summary.json", &summary)?;
    print(&summary);
    Ok(())
}

fn ks(ctx: &Ctx, file1: &Path, file2: &Path, alpha: f64) -> Result<(), CliError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::usage(format!("--alpha {alpha} must lie in (0, 1)")));
    }
    let a = io::read_angles(&read_text(file1)?)?;
    let b = io::read_angles(&read_text(file2)?)?;
    let r = ks_two_sample(&a, &b, alpha)?;
    ctx.write_json("ks.json", &r)?;
    print(&r);
    Ok(())
}

fn calibrate(ctx: &Ctx, runs: &[PathBuf]) -> Result<(), CliError> {
    let runs = runs.iter().map(|p| Ok(io::read_counts(&read_text(p)?)?)).collect::<Result<Vec<_>, CliError>>()?;
    let calib = calibrate_efficiencies(&runs, catalog_36())?;
    ctx.write_json("calibration.json", &calib)?;
    print(&calib);
    Ok(())
}
