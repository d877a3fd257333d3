//! The experiment recipes behind each CLI verb. Every command validates its
//! full configuration before writing any file, emits deterministic CSV /
//! PGM / text artifacts into the output directory, and prints a short
//! summary to stdout.

use crate::config::{load_counts, prepare, Prepared, RunConfig};
use crate::error::{config_error, CliError, CliResult};
use crate::output::{atomic_write, dump_ensemble, write_csv, write_pgm16};
use crate::script::{ScriptOp, SiteRef};
use microtrap_core::constants::BOLTZMANN;
use microtrap_core::dynamics::{
    evolve, lifetime_fit, sample_loading, time_of_flight, Ensemble, EvolveParams, LifetimeFit,
    TofResult,
};
use microtrap_core::field::TrapField;
use microtrap_core::imaging::{
    detect_sites, render, DetectParams, DetectionResult, FluorescenceImage, FrameGeometry,
    GridNode, RenderParams,
};
use microtrap_core::optics::{pair_separation, ArrayId, FocusSite};
use microtrap_core::register::{
    load_register, RegisterState, SiteContent, SiteSelector, SiteSignal,
};
use microtrap_core::species::{joules_to_millikelvin, recoil_energy};
use microtrap_core::traps::{
    gate_feasibility, locate_minimum, sideband_cooling_check, CharacterizeParams, GateFeasibility,
    GateThresholds, SidebandCheck, TrapSiteReport,
};
use microtrap_core::Vec3;
use std::fmt::Write as _;
use std::path::Path;

fn fmt(value: f64) -> String {
    // Shortest-roundtrip scientific notation: exact to reparse, stable
    // across reruns.
    format!("{value:e}")
}

fn site_row_prefix(site: &FocusSite) -> String {
    format!("{},{},{},{}", site.site_id, site.array_id.as_str(), site.row, site.col)
}

// ---------------------------------------------------------------------------
// characterize
// ---------------------------------------------------------------------------

pub struct CharacterizeOutput {
    pub reports: Vec<TrapSiteReport>,
    /// Gate ratios of the least favorable site, when a gate time is set.
    pub feasibility: Option<GateFeasibility>,
    pub sideband: Vec<SidebandCheck>,
}

pub fn characterize(config: &RunConfig, out_dir: &Path) -> CliResult<CharacterizeOutput> {
    let prepared = prepare(config)?;
    let Prepared { foci, reports, .. } = &prepared;

    let site_rows: Vec<String> = foci
        .iter()
        .map(|s| {
            format!(
                "{},{},{},{},{},{},{}",
                site_row_prefix(s),
                fmt(s.center.x),
                fmt(s.center.y),
                fmt(s.center.z),
                fmt(s.power),
                fmt(s.waist),
                fmt(s.wavelength)
            )
        })
        .collect();
    write_csv(
        &out_dir.join("sites.csv"),
        "site_id,array,row,col,x_m,y_m,z_m,power_w,waist_m,wavelength_m",
        &site_rows,
    )?;

    let report_rows: Vec<String> = foci
        .iter()
        .zip(reports)
        .map(|(site, r)| {
            format!(
                "{},{},{},{},{},{},{},{},{},{},{}",
                site_row_prefix(site),
                fmt(r.position.x),
                fmt(r.position.y),
                fmt(r.position.z),
                fmt(r.depth),
                fmt(r.depth_millikelvin()),
                fmt(r.radial_frequency),
                fmt(r.axial_frequency),
                fmt(r.peak_scattering_rate),
                fmt(r.decoherence_time),
                fmt(r.lamb_dicke_parameter)
            )
        })
        .collect();
    write_csv(
        &out_dir.join("report.csv"),
        "site_id,array,row,col,x_m,y_m,z_m,depth_j,depth_mk,radial_hz,axial_hz,scattering_rate_hz,decoherence_s,lamb_dicke",
        &report_rows,
    )?;

    let thresholds = GateThresholds {
        min_oscillation_ratio: config.thresholds.min_oscillation_ratio,
        min_decoherence_ratio: config.thresholds.min_decoherence_ratio,
        min_collisional_ratio: config.thresholds.min_collisional_ratio,
    };
    let feasibility = match config.thresholds.gate_time {
        Some(gate_time) => {
            let worst = reports
                .iter()
                .min_by(|a, b| a.radial_frequency.partial_cmp(&b.radial_frequency).unwrap())
                .expect("at least one site");
            Some(
                gate_feasibility(worst, gate_time, config.thresholds.collisional_gate_time, &thresholds)
                    .map_err(|e| config_error(format!("[thresholds] {e}")))?,
            )
        }
        None => None,
    };
    let sideband: Vec<SidebandCheck> = reports.iter().map(sideband_cooling_check).collect();

    let mut summary = String::new();
    let _ = writeln!(summary, "trap array: {} sites, species {}", reports.len(), config.species.label);
    let _ = writeln!(
        summary,
        "{:>4} {:>5} {:>4} {:>4} {:>10} {:>10} {:>10} {:>12} {:>9}",
        "site", "array", "row", "col", "depth_mK", "nu_r_kHz", "nu_z_kHz", "decoher_ms", "eta"
    );
    for (site, r) in foci.iter().zip(reports) {
        let _ = writeln!(
            summary,
            "{:>4} {:>5} {:>4} {:>4} {:>10.4} {:>10.3} {:>10.3} {:>12.4} {:>9.4}",
            site.site_id,
            site.array_id.as_str(),
            site.row,
            site.col,
            r.depth_millikelvin(),
            r.radial_frequency / 1e3,
            r.axial_frequency / 1e3,
            r.decoherence_time * 1e3,
            r.lamb_dicke_parameter,
        );
    }
    if let Some(g) = &feasibility {
        let _ = writeln!(
            summary,
            "gate feasibility (gate {:e} s, worst site): R_osc = {:.3} [{}], R_dec = {:.4e} [{}]",
            config.thresholds.gate_time.unwrap(),
            g.oscillation_ratio,
            if g.oscillation_ok { "ok" } else { "FAIL" },
            g.decoherence_ratio,
            if g.decoherence_ok { "ok" } else { "FAIL" },
        );
        if let Some(coll) = &g.collisional {
            let _ = writeln!(
                summary,
                "collisional gate: decoherence/gate = {:.2} [{}]",
                coll.ratio,
                if coll.ok { "ok" } else { "FAIL" }
            );
        }
    }
    if let Some(check) = sideband.first() {
        let _ = writeln!(
            summary,
            "sideband cooling: {} (nu_r/nu_rec = {:.2})",
            if check.possible { "possible" } else { "not possible" },
            check.margin
        );
    }
    print!("{summary}");
    atomic_write(&out_dir.join("summary.txt"), summary.as_bytes())?;

    Ok(CharacterizeOutput { reports: reports.clone(), feasibility, sideband })
}

// ---------------------------------------------------------------------------
// interleave
// ---------------------------------------------------------------------------

pub struct InterleaveRow {
    pub angle: f64,
    pub separation_formula: f64,
    pub separation_numeric: f64,
    pub pair_depth_mk: f64,
    pub cross_section_minima: usize,
}

/// Sweep the second beam's tilt angle and report the interleaved-pair
/// geometry: formula and numerically located separation, pair depth, and a
/// 1D potential cross-section through the pair per angle.
pub fn interleave(config: &RunConfig, out_dir: &Path) -> CliResult<Vec<InterleaveRow>> {
    if config.interleave.angles.is_empty() {
        return Err(config_error("[interleave] angles_rad: empty sweep"));
    }
    let mut two_beam = config.clone();
    if two_beam.beams.len() == 1 {
        // Second beam: copy of the first with the orthogonal polarization.
        let mut second = two_beam.beams[0].clone();
        second.polarization = match second.polarization {
            microtrap_core::optics::Polarization::Horizontal => {
                microtrap_core::optics::Polarization::Vertical
            }
            microtrap_core::optics::Polarization::Vertical => {
                microtrap_core::optics::Polarization::Horizontal
            }
        };
        two_beam.beams.push(second);
    }
    for &angle in &config.interleave.angles {
        if !(angle.abs() < microtrap_core::optics::PARAXIAL_LIMIT) {
            return Err(config_error(format!(
                "[interleave] angles_rad: angle {angle} rad exceeds the paraxial bound"
            )));
        }
    }

    let base_tilt = two_beam.beams[0].tilt_angle;
    let pair_row = config.interleave.pair_row;
    let pair_col = config.interleave.pair_col;
    let params = CharacterizeParams::default();

    let mut rows = Vec::new();
    let mut sections: Vec<(usize, f64, Vec<(f64, f64)>)> = Vec::new();
    for (index, &angle) in config.interleave.angles.iter().enumerate() {
        let mut swept = two_beam.clone();
        swept.beams[1].tilt_angle = base_tilt + angle;
        let prepared = prepare(&swept)?;
        let field = &prepared.field;

        let find = |array: ArrayId| {
            prepared
                .foci
                .iter()
                .position(|s| s.array_id == array && s.row == pair_row && s.col == pair_col)
                .ok_or_else(|| {
                    config_error(format!(
                        "[interleave] pair lenslet ({pair_row},{pair_col}) is not illuminated"
                    ))
                })
        };
        let first = find(ArrayId::First)?;
        let second = find(ArrayId::Second)?;
        let site1 = prepared.foci[first].clone();
        let site2 = prepared.foci[second].clone();

        let min1 = locate_minimum(field, site1.center, site1.waist, &params)?;
        let min2 = locate_minimum(field, site2.center, site2.waist, &params)?;
        let separation_numeric = (min2 - min1).norm();
        let separation_formula =
            pair_separation(&config.geometry, base_tilt, base_tilt + angle)?;
        let pair_depth_mk = joules_to_millikelvin(-field.potential(min2));

        // 1D cross-section along the displacement axis through the pair.
        let axis = match swept.beams[1].tilt_axis {
            microtrap_core::optics::TiltAxis::X => Vec3::new(1.0, 0.0, 0.0),
            microtrap_core::optics::TiltAxis::Y => Vec3::new(0.0, 1.0, 0.0),
        };
        let margin = 4.0 * site1.waist;
        let span = separation_formula + 2.0 * margin;
        let samples = config.interleave.cross_section_samples.max(3);
        let start = site1.center - axis * margin;
        let mut section = Vec::with_capacity(samples);
        for n in 0..samples {
            let s = span * n as f64 / (samples - 1) as f64;
            let u = field.potential(start + axis * s);
            section.push((s - margin, u));
        }
        let minima = section
            .windows(3)
            .filter(|w| w[1].1 < w[0].1 && w[1].1 < w[2].1)
            .count();

        rows.push(InterleaveRow {
            angle,
            separation_formula,
            separation_numeric,
            pair_depth_mk,
            cross_section_minima: minima,
        });
        sections.push((index, angle, section));
    }

    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                fmt(r.angle),
                fmt(r.separation_formula),
                fmt(r.separation_numeric),
                fmt(r.pair_depth_mk),
                r.cross_section_minima
            )
        })
        .collect();
    write_csv(
        &out_dir.join("separations.csv"),
        "angle_rad,separation_formula_m,separation_numeric_m,pair_depth_mk,cross_section_minima",
        &csv_rows,
    )?;
    for (index, angle, section) in &sections {
        let rows: Vec<String> = section
            .iter()
            .map(|(s, u)| format!("{},{},{}", fmt(*angle), fmt(*s), fmt(*u)))
            .collect();
        write_csv(
            &out_dir.join(format!("cross_section_{index}.csv")),
            "angle_rad,position_m,potential_j",
            &rows,
        )?;
    }

    println!(
        "interleave sweep: {} angles, separations {:.2}-{:.2} um",
        rows.len(),
        rows.iter().map(|r| r.separation_formula).fold(f64::INFINITY, f64::min) * 1e6,
        rows.iter().map(|r| r.separation_formula).fold(0.0f64, f64::max) * 1e6,
    );
    Ok(rows)
}

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

pub struct DynamicsOutput {
    pub survival: Vec<(f64, usize, f64)>,
    pub lifetime: LifetimeFit,
    pub tof: Option<TofResult>,
    pub final_ensemble: Ensemble,
}

fn resolve_dt(config: &RunConfig, reports: &[TrapSiteReport]) -> CliResult<f64> {
    let nu_max = reports.iter().map(|r| r.radial_frequency).fold(0.0, f64::max);
    let bound = 1.0 / (20.0 * nu_max);
    let dt = config.dynamics.dt.unwrap_or(1.0 / (200.0 * nu_max));
    if dt > bound {
        return Err(config_error(format!(
            "[dynamics] dt_s = {dt} violates the stability bound 1/(20 nu_r,max) = {bound:.3e}"
        )));
    }
    Ok(dt)
}

fn storage_run(
    config: &RunConfig,
    prepared: &Prepared,
    seed: u64,
    residual_rate: f64,
) -> CliResult<(Vec<(f64, usize, f64)>, Ensemble)> {
    let dt = resolve_dt(config, &prepared.reports)?;
    let mut ensemble =
        sample_loading(&prepared.field, config.dynamics.atoms_per_site, config.dynamics.temperature, seed)?;
    let mut params = EvolveParams::new(
        config.dynamics.snapshot_interval,
        dt,
        residual_rate,
        config.species.d2_wavelength,
    );
    params.absorption_axis = config.dynamics.absorption_axis.unit();
    let snapshots = (config.dynamics.duration / config.dynamics.snapshot_interval).round() as usize;
    let mut survival = vec![(0.0, ensemble.alive_count(), 1.0)];
    for _ in 0..snapshots.max(1) {
        evolve(&prepared.field, &mut ensemble, &params)?;
        survival.push((ensemble.time, ensemble.alive_count(), ensemble.alive_fraction()));
    }
    Ok((survival, ensemble))
}

/// Loading → time-of-flight thermometry → storage with snapshots →
/// lifetime fit. Deterministic per seed.
pub fn run_dynamics(
    config: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> CliResult<DynamicsOutput> {
    let prepared = prepare(config)?;
    let seed = seed_override.unwrap_or(config.dynamics.seed);
    // Shallow-trap warning per the loading contract.
    let min_depth = prepared.reports.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min);
    if BOLTZMANN * config.dynamics.temperature >= min_depth {
        eprintln!(
            "warning: k_B T = {:.3e} J is not below the shallowest trap depth {min_depth:.3e} J",
            BOLTZMANN * config.dynamics.temperature
        );
    }

    let tof = if config.dynamics.tof_times.is_empty() {
        None
    } else {
        let fresh = sample_loading(
            &prepared.field,
            config.dynamics.atoms_per_site,
            config.dynamics.temperature,
            seed,
        )?;
        let gravity = if config.dynamics.gravity {
            microtrap_core::constants::STANDARD_GRAVITY
        } else {
            0.0
        };
        Some(time_of_flight(&fresh, config.species.mass, &config.dynamics.tof_times, gravity)?)
    };

    let (survival, final_ensemble) =
        storage_run(config, &prepared, seed, config.dynamics.residual_rate)?;
    let series: Vec<(f64, f64)> = survival.iter().map(|&(t, _, f)| (t, f)).collect();
    let lifetime = lifetime_fit(&series)?;

    let survival_rows: Vec<String> =
        survival.iter().map(|&(t, n, f)| format!("{},{},{}", fmt(t), n, fmt(f))).collect();
    write_csv(&out_dir.join("survival.csv"), "time_s,alive,alive_fraction", &survival_rows)?;

    if let Some(tof) = &tof {
        let tof_rows: Vec<String> =
            tof.points.iter().map(|&(t, s)| format!("{},{}", fmt(t), fmt(s))).collect();
        write_csv(&out_dir.join("tof.csv"), "expansion_time_s,sigma_sq_m2", &tof_rows)?;
    }

    atomic_write(&out_dir.join("ensemble_final.dump"), dump_ensemble(&final_ensemble).as_bytes())?;

    let mut summary = String::new();
    let _ = writeln!(summary, "seed = {seed}");
    let _ = writeln!(summary, "atoms = {}", final_ensemble.atoms.len());
    let _ = writeln!(summary, "residual_rate_hz = {}", fmt(config.dynamics.residual_rate));
    if lifetime.lifetime.is_finite() {
        let _ = writeln!(summary, "lifetime_s = {}", fmt(lifetime.lifetime));
    } else {
        let _ = writeln!(summary, "lifetime_s = inf");
    }
    let _ = writeln!(summary, "lifetime_fit_residual_rms = {}", fmt(lifetime.residual_rms));
    if let Some(tof) = &tof {
        let _ = writeln!(summary, "tof_temperature_k = {}", fmt(tof.temperature));
        let _ = writeln!(summary, "tof_uncertainty_k = {}", fmt(tof.uncertainty));
    }
    print!("{summary}");
    atomic_write(&out_dir.join("dynamics_summary.txt"), summary.as_bytes())?;

    Ok(DynamicsOutput { survival, lifetime, tof, final_ensemble })
}

// ---------------------------------------------------------------------------
// register / image
// ---------------------------------------------------------------------------

pub struct RegisterOutput {
    pub readouts: Vec<Vec<SiteSignal>>,
    pub frames: usize,
    pub final_register: Option<RegisterState>,
}

fn resolve_site(foci: &[FocusSite], row: usize, col: usize) -> CliResult<usize> {
    foci.iter()
        .position(|s| s.row == row && s.col == col)
        .ok_or_else(|| config_error(format!("script references unilluminated site ({row},{col})")))
}

fn state_label(state: SiteContent) -> &'static str {
    match state {
        SiteContent::Empty => "empty",
        SiteContent::F2 => "F2",
        SiteContent::F3 => "F3",
    }
}

fn frame_geometry(config: &RunConfig) -> FrameGeometry {
    FrameGeometry {
        width: config.imaging.width,
        height: config.imaging.height,
        pixel_pitch: config.imaging.pixel_pitch,
        center_x: config.imaging.center_x,
        center_y: config.imaging.center_y,
    }
}

fn render_signals(
    config: &RunConfig,
    foci: &[FocusSite],
    signals: &[SiteSignal],
    seed: u64,
) -> CliResult<FluorescenceImage> {
    let weights: Vec<f64> =
        signals.iter().map(|s| s.signal * config.imaging.per_atom_rate).collect();
    let positions: Vec<(f64, f64)> = foci.iter().map(|s| (s.center.x, s.center.y)).collect();
    let params = RenderParams {
        psf_sigma: config.imaging.psf_sigma,
        tilt_elongation: config.imaging.tilt_elongation,
        shot_noise: config.imaging.shot_noise,
        seed,
        exposure: config.imaging.exposure,
    };
    let outcome = render(&weights, &positions, &frame_geometry(config), &params)?;
    for site in &outcome.clipped_sites {
        eprintln!("warning: site {site} rendered partially (spot core outside the frame)");
    }
    Ok(outcome.image)
}

fn write_readout(
    out_dir: &Path,
    index: usize,
    register: &RegisterState,
    foci: &[FocusSite],
    signals: &[SiteSignal],
) -> CliResult<()> {
    let rows: Vec<String> = register
        .sites
        .iter()
        .zip(signals)
        .map(|(site, signal)| {
            format!(
                "{},{},{},{},{},{},{}",
                site.site_id,
                foci[site.site_id].row,
                foci[site.site_id].col,
                state_label(site.state),
                site.atom_count,
                fmt(signal.signal),
                u8::from(signal.below_threshold)
            )
        })
        .collect();
    write_csv(
        &out_dir.join(format!("readout_{index}.csv")),
        "site_id,row,col,state,atom_count,signal,below_threshold",
        &rows,
    )
}

/// Interpret a register script: LOAD / PUMP / REMOVE / READOUT / RENDER,
/// emitting one readout CSV per READOUT and one PGM frame per RENDER.
pub fn run_register(
    config: &RunConfig,
    ops: &[ScriptOp],
    out_dir: &Path,
    seed_override: Option<u64>,
) -> CliResult<RegisterOutput> {
    let prepared = prepare(config)?;
    let foci = &prepared.foci;
    let counts = load_counts(config, foci.len())?;

    // Static validation: every reference must resolve and every consumer
    // must follow its producer, before any artifact is written.
    let mut loaded = false;
    let mut have_readout = false;
    for (index, op) in ops.iter().enumerate() {
        match op {
            ScriptOp::Load => loaded = true,
            ScriptOp::Pump(SiteRef::RowCol(row, col)) => {
                resolve_site(foci, *row, *col)?;
                if !loaded {
                    return Err(config_error(format!("script op {}: PUMP before LOAD", index + 1)));
                }
            }
            ScriptOp::Pump(SiteRef::All) | ScriptOp::Readout { .. } => {
                if !loaded {
                    return Err(config_error(format!(
                        "script op {}: register operation before LOAD",
                        index + 1
                    )));
                }
                if matches!(op, ScriptOp::Readout { .. }) {
                    have_readout = true;
                }
            }
            ScriptOp::Remove(row, col) => {
                resolve_site(foci, *row, *col)?;
                if !loaded {
                    return Err(config_error(format!("script op {}: REMOVE before LOAD", index + 1)));
                }
            }
            ScriptOp::Render => {
                if !have_readout {
                    return Err(config_error(format!(
                        "script op {}: RENDER needs a preceding READOUT",
                        index + 1
                    )));
                }
            }
        }
    }

    let imaging_seed = seed_override.unwrap_or(config.imaging.seed);
    let mut register: Option<RegisterState> = None;
    let mut last_signals: Option<Vec<SiteSignal>> = None;
    let mut readouts = Vec::new();
    let mut frames = 0usize;
    for op in ops {
        match *op {
            ScriptOp::Load => register = Some(load_register(&counts)),
            ScriptOp::Pump(site_ref) => {
                let reg = register.as_ref().expect("validated");
                let selector = match site_ref {
                    SiteRef::All => SiteSelector::All,
                    SiteRef::RowCol(row, col) => {
                        SiteSelector::One(resolve_site(foci, row, col)?)
                    }
                };
                register = Some(reg.pump(selector)?);
            }
            ScriptOp::Remove(row, col) => {
                let reg = register.as_ref().expect("validated");
                register = Some(reg.remove(resolve_site(foci, row, col)?)?);
            }
            ScriptOp::Readout { repump_on } => {
                let reg = register.as_ref().expect("validated");
                let signals = reg.readout(
                    repump_on,
                    config.thresholds.detection_efficiency,
                    config.thresholds.detectability_threshold,
                );
                write_readout(out_dir, readouts.len(), reg, foci, &signals)?;
                readouts.push(signals.clone());
                last_signals = Some(signals);
            }
            ScriptOp::Render => {
                let signals = last_signals.as_ref().expect("validated");
                let image = render_signals(
                    config,
                    foci,
                    signals,
                    imaging_seed.wrapping_add(frames as u64),
                )?;
                write_pgm16(&out_dir.join(format!("frame_{frames}.pgm")), &image)?;
                frames += 1;
            }
        }
    }

    if let Some(reg) = &register {
        let rows: Vec<String> = reg
            .sites
            .iter()
            .map(|s| {
                format!(
                    "{},{},{},{},{}",
                    s.site_id,
                    foci[s.site_id].row,
                    foci[s.site_id].col,
                    s.atom_count,
                    state_label(s.state)
                )
            })
            .collect();
        write_csv(&out_dir.join("register_final.csv"), "site_id,row,col,atom_count,state", &rows)?;
        let mut log = reg.log.join("\n");
        log.push('\n');
        atomic_write(&out_dir.join("register_log.txt"), log.as_bytes())?;
    }

    println!(
        "register script: {} ops, {} readouts, {frames} frames",
        ops.len(),
        readouts.len()
    );
    Ok(RegisterOutput { readouts, frames, final_register: register })
}

pub struct ImageOutput {
    pub image: FluorescenceImage,
    pub detection: DetectionResult,
}

/// One-shot imaging pipeline: load the register from the config counts,
/// read it out with the repumper on, render a frame and run spot detection
/// against the expected site grid.
pub fn run_image(
    config: &RunConfig,
    out_dir: &Path,
    seed_override: Option<u64>,
) -> CliResult<ImageOutput> {
    let prepared = prepare(config)?;
    let foci = &prepared.foci;
    let counts = load_counts(config, foci.len())?;
    let register = load_register(&counts);
    let signals = register.readout(
        true,
        config.thresholds.detection_efficiency,
        config.thresholds.detectability_threshold,
    );
    let image =
        render_signals(config, foci, &signals, seed_override.unwrap_or(config.imaging.seed))?;
    write_pgm16(&out_dir.join("frame.pgm"), &image)?;

    let grid: Vec<GridNode> = foci
        .iter()
        .map(|s| GridNode { row: s.row, col: s.col, x: s.center.x, y: s.center.y })
        .collect();
    let params = DetectParams {
        psf_sigma: config.imaging.psf_sigma,
        tilt_elongation: config.imaging.tilt_elongation,
        mad_threshold_k: config.thresholds.mad_threshold_k,
        min_peak: config.thresholds.detection_min_peak,
        count_calibration: config.thresholds.detection_efficiency
            * config.imaging.per_atom_rate
            * config.imaging.exposure,
    };
    let detection = detect_sites(&image, &params, Some(&grid));

    let mut rows: Vec<String> = detection
        .spots
        .iter()
        .map(|spot| {
            let (row, col) =
                spot.node.map_or((String::new(), String::new()), |(r, c)| (r.to_string(), c.to_string()));
            format!(
                "{row},{col},{},{},{},{},detected",
                fmt(spot.x),
                fmt(spot.y),
                fmt(spot.integrated_signal),
                fmt(spot.count_estimate)
            )
        })
        .collect();
    for node in &detection.missing {
        rows.push(format!("{},{},{},{},0,0,missing", node.row, node.col, fmt(node.x), fmt(node.y)));
    }
    write_csv(
        &out_dir.join("detections.csv"),
        "row,col,x_m,y_m,integrated_signal,count_estimate,status",
        &rows,
    )?;

    println!(
        "image: {} spots detected, {} grid nodes missing",
        detection.spots.len(),
        detection.missing.len()
    );
    Ok(ImageOutput { image, detection })
}

// ---------------------------------------------------------------------------
// calibrate-lifetime
// ---------------------------------------------------------------------------

pub struct CalibrationOutput {
    pub rate: f64,
    pub lifetime: f64,
    /// (rate, fitted lifetime) per bisection evaluation.
    pub iterations: Vec<(f64, f64)>,
}

/// Bisect the residual scattering rate until the fitted survival time
/// constant matches `target` within `tolerance` (relative). The starting
/// bracket comes from the recoil-heating estimate
/// rate ≈ (depth − 3/2·k_B·T) / (2·E_rec·target).
pub fn calibrate_lifetime(
    config: &RunConfig,
    out_dir: &Path,
    target: f64,
    tolerance: f64,
    seed_override: Option<u64>,
) -> CliResult<CalibrationOutput> {
    if !(target > 0.0) || !(tolerance > 0.0) {
        return Err(config_error("calibration target and tolerance must be positive"));
    }
    let prepared = prepare(config)?;
    let seed = seed_override.unwrap_or(config.dynamics.seed);
    let min_depth = prepared.reports.iter().map(|r| r.depth).fold(f64::INFINITY, f64::min);
    let e_rec = recoil_energy(&config.species, config.species.d2_wavelength)?;
    let escape_energy = min_depth - 1.5 * BOLTZMANN * config.dynamics.temperature;
    let rate_scale = escape_energy / (2.0 * e_rec * target);

    let mut iterations: Vec<(f64, f64)> = Vec::new();
    let mut eval = |rate: f64| -> CliResult<f64> {
        let (survival, _) = storage_run(config, &prepared, seed, rate)?;
        let series: Vec<(f64, f64)> = survival.iter().map(|&(t, _, f)| (t, f)).collect();
        let tau = match lifetime_fit(&series) {
            Ok(fit) => fit.lifetime,
            // Everything died before the second snapshot: decay faster
            // than resolvable, which bisection treats as lifetime zero.
            Err(microtrap_core::Error::DegenerateFit(_)) => 0.0,
            Err(e) => return Err(e.into()),
        };
        iterations.push((rate, tau));
        Ok(tau)
    };

    let mut lo = rate_scale / 50.0;
    let mut hi = rate_scale * 3.0;
    let mut tau_lo = eval(lo)?;
    for _ in 0..2 {
        if tau_lo > target {
            break;
        }
        lo /= 8.0;
        tau_lo = eval(lo)?;
    }
    if tau_lo <= target {
        return Err(CliError::Runtime(format!(
            "calibration bracket failed: lifetime at rate {lo} is already {tau_lo} s < target {target} s"
        )));
    }
    let mut tau_hi = eval(hi)?;
    for _ in 0..2 {
        if tau_hi < target {
            break;
        }
        hi *= 8.0;
        tau_hi = eval(hi)?;
    }
    if tau_hi >= target {
        return Err(CliError::Runtime(format!(
            "calibration bracket failed: lifetime at rate {hi} is still {tau_hi} s > target {target} s"
        )));
    }
    let _ = (tau_lo, tau_hi);

    let mut result = None;
    for _ in 0..14 {
        let mid = (lo * hi).sqrt();
        let tau = eval(mid)?;
        if tau.is_finite() && (tau - target).abs() <= 0.5 * tolerance * target {
            result = Some((mid, tau));
            break;
        }
        if tau > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rate, lifetime) = result.ok_or_else(|| {
        CliError::Runtime(format!(
            "calibration did not converge to {target} s ± {:.0}% in {} evaluations",
            100.0 * tolerance,
            iterations.len()
        ))
    })?;

    let rows: Vec<String> = iterations
        .iter()
        .enumerate()
        .map(|(i, &(r, tau))| format!("{i},{},{}", fmt(r), fmt(tau)))
        .collect();
    write_csv(&out_dir.join("calibration.csv"), "evaluation,rate_hz,lifetime_s", &rows)?;
    let mut text = String::new();
    let _ = writeln!(text, "residual_rate_hz = {}", fmt(rate));
    let _ = writeln!(text, "lifetime_s = {}", fmt(lifetime));
    let _ = writeln!(text, "target_s = {}", fmt(target));
    let _ = writeln!(text, "evaluations = {}", iterations.len());
    print!("{text}");
    atomic_write(&out_dir.join("calibration.txt"), text.as_bytes())?;

    Ok(CalibrationOutput { rate, lifetime, iterations })
}

/// Numeric-frequency cross-check used by the acceptance suite.
pub fn numeric_check(field: &TrapField, site: usize) -> CliResult<[f64; 3]> {
    Ok(microtrap_core::traps::numeric_frequencies(field, site, &CharacterizeParams::default())?)
}
