//! Classical atom-ensemble dynamics in the trap array: thermal loading,
//! velocity-Verlet storage with residual-light recoil heating and loss,
//! site-selective removal, and time-of-flight thermometry.
//!
//! All sampling is counter-based per atom, so a given (seed, config,
//! operation sequence) reproduces bit-identical trajectories regardless of
//! how the per-atom work is scheduled.

use crate::constants::{BOLTZMANN, HBAR, TAU};
use crate::error::{Error, Result};
use crate::field::TrapField;
use crate::fitting::{linear_fit, linear_fit_mapped};
use crate::math::FloatExt;
use crate::rng::{purpose, CounterRng};
use crate::traps::characterize_all;
use crate::vec3::Vec3;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

/// The two hyperfine ground states encoding the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperfineState {
    F2,
    F3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub internal_state: HyperfineState,
    pub alive: bool,
    pub site_id: Option<usize>,
    /// Unique per-atom RNG stream, fixed at loading.
    pub rng_stream: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub atoms: Vec<AtomState>,
    /// Simulated time since loading, s.
    pub time: f64,
    pub seed: u64,
    /// Integration steps taken so far; epochs the per-step RNG keys.
    pub steps_taken: u64,
}

impl Ensemble {
    pub fn alive_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.alive).count()
    }

    pub fn alive_fraction(&self) -> f64 {
        if self.atoms.is_empty() {
            return 0.0;
        }
        self.alive_count() as f64 / self.atoms.len() as f64
    }

    /// Alive atoms assigned to `site_id`.
    pub fn site_population(&self, site_id: usize) -> usize {
        self.atoms.iter().filter(|a| a.alive && a.site_id == Some(site_id)).count()
    }
}

/// Total (kinetic + potential) energy of one atom, J.
pub fn total_energy(field: &TrapField, atom: &AtomState) -> f64 {
    0.5 * field.species().mass * atom.velocity.norm_sq() + field.potential(atom.position)
}

/// Draw a thermal ensemble: per site, positions and velocities from the
/// harmonic distribution at `temperature` in that site's local frequencies.
/// Every atom starts alive in F2.
pub fn sample_loading(
    field: &TrapField,
    per_site_count: usize,
    temperature: f64,
    seed: u64,
) -> Result<Ensemble> {
    if field.site_count() == 0 {
        return Err(Error::EmptyMask);
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput(format!(
            "loading temperature must be positive, got {temperature}"
        )));
    }
    let reports = characterize_all(field)?;
    let mass = field.species().mass;
    let sigma_v = (BOLTZMANN * temperature / mass).sqrt();
    let mut atoms = Vec::with_capacity(field.site_count() * per_site_count);
    for (site_index, report) in reports.iter().enumerate() {
        let sigma_radial = sigma_v / (TAU * report.radial_frequency);
        let sigma_axial = sigma_v / (TAU * report.axial_frequency);
        for n in 0..per_site_count {
            let stream = (site_index * per_site_count + n) as u64;
            let mut rng = CounterRng::new(seed, stream, purpose::LOADING, 0);
            let position = report.position
                + Vec3::new(
                    sigma_radial * rng.normal(),
                    sigma_radial * rng.normal(),
                    sigma_axial * rng.normal(),
                );
            let velocity =
                Vec3::new(sigma_v * rng.normal(), sigma_v * rng.normal(), sigma_v * rng.normal());
            atoms.push(AtomState {
                position,
                velocity,
                internal_state: HyperfineState::F2,
                alive: true,
                site_id: Some(site_index),
                rng_stream: stream,
            });
        }
    }
    Ok(Ensemble { atoms, time: 0.0, seed, steps_taken: 0 })
}

/// Parameters of one storage-evolution call.
#[derive(Debug, Clone)]
pub struct EvolveParams {
    pub duration: f64,
    pub dt: f64,
    /// Residual near-resonant photon scattering rate per atom, 1/s.
    pub residual_scattering_rate: f64,
    /// Propagation axis of the residual light (absorption kick direction).
    pub absorption_axis: Vec3,
    /// Wavelength of the scattered photons, m.
    pub photon_wavelength: f64,
}

impl EvolveParams {
    pub fn new(duration: f64, dt: f64, residual_scattering_rate: f64, photon_wavelength: f64) -> Self {
        EvolveParams {
            duration,
            dt,
            residual_scattering_rate,
            absorption_axis: Vec3::new(0.0, 0.0, 1.0),
            photon_wavelength,
        }
    }
}

/// Velocity-Verlet integration of all alive atoms in the summed trap field.
///
/// Each step every atom independently scatters residual photons as a Poisson
/// process; each scattering event adds one recoil kick along the absorption
/// axis and one in an isotropic random direction. Atoms that become unbound
/// (total energy > 0) and leave every site's 3·w(z) neighborhood are marked
/// dead and frozen.
pub fn evolve(field: &TrapField, ensemble: &mut Ensemble, params: &EvolveParams) -> Result<()> {
    if !(params.dt > 0.0) || !(params.duration >= 0.0) {
        return Err(Error::InvalidInput("duration and dt must be positive".to_string()));
    }
    if !(params.residual_scattering_rate >= 0.0) {
        return Err(Error::InvalidInput("residual_scattering_rate must be non-negative".to_string()));
    }
    if !(params.photon_wavelength > 0.0) {
        return Err(Error::InvalidInput("photon_wavelength must be positive".to_string()));
    }
    let reports = characterize_all(field)?;
    let nu_max = reports.iter().map(|r| r.radial_frequency).fold(0.0, f64::max);
    let dt_bound = 1.0 / (20.0 * nu_max);
    if params.dt > dt_bound {
        return Err(Error::InvalidInput(format!(
            "dt = {} s violates the stability bound 1/(20 nu_r,max) = {:.3e} s",
            params.dt, dt_bound
        )));
    }
    let axis_norm = params.absorption_axis.norm();
    if !(axis_norm > 0.0) {
        return Err(Error::InvalidInput("absorption_axis must be non-zero".to_string()));
    }
    let axis = params.absorption_axis * (1.0 / axis_norm);

    let mass = field.species().mass;
    let half_dt_over_m = 0.5 * params.dt / mass;
    let recoil_speed = HBAR * (TAU / params.photon_wavelength) / mass;
    let mean_events = params.residual_scattering_rate * params.dt;
    let steps = (params.duration / params.dt).round() as u64;

    let mut forces: Vec<Vec3> = ensemble
        .atoms
        .iter()
        .map(|a| if a.alive { field.force(a.position) } else { Vec3::ZERO })
        .collect();

    for step in 0..steps {
        let epoch = ensemble.steps_taken + step;
        for (atom, force) in ensemble.atoms.iter_mut().zip(forces.iter_mut()) {
            if !atom.alive {
                continue;
            }
            let mut velocity = atom.velocity + *force * half_dt_over_m;
            let position = atom.position + velocity * params.dt;
            let (potential, gradient) = field.potential_and_gradient(position);
            let new_force = -gradient;
            velocity += new_force * half_dt_over_m;

            if mean_events > 0.0 {
                let mut rng = CounterRng::new(ensemble.seed, atom.rng_stream, purpose::EVOLUTION, epoch);
                for _ in 0..rng.poisson(mean_events) {
                    velocity += axis * recoil_speed + rng.unit_vector() * recoil_speed;
                }
            }

            atom.position = position;
            atom.velocity = velocity;
            *force = new_force;

            let energy = 0.5 * mass * velocity.norm_sq() + potential;
            if energy > 0.0 && !field.near_any_site(position, 3.0) {
                atom.alive = false;
            }
        }
    }
    ensemble.steps_taken += steps;
    ensemble.time += steps as f64 * params.dt;
    Ok(())
}

/// Kick every alive atom at `site_id` with a velocity impulse carrying
/// `heating_energy`, in a random direction per atom. Other sites' atoms are
/// untouched. A subsequent [`evolve`] sweeps the heated atoms out.
pub fn address_site(
    field: &TrapField,
    ensemble: &mut Ensemble,
    site_id: usize,
    heating_energy: f64,
) -> Result<()> {
    if site_id >= field.site_count() {
        return Err(Error::UnknownSite(site_id));
    }
    if !(heating_energy >= 0.0) {
        return Err(Error::InvalidInput("heating_energy must be non-negative".to_string()));
    }
    if heating_energy == 0.0 {
        return Ok(());
    }
    let kick_speed = (2.0 * heating_energy / field.species().mass).sqrt();
    let epoch = ensemble.steps_taken;
    for atom in ensemble.atoms.iter_mut() {
        if atom.alive && atom.site_id == Some(site_id) {
            let mut rng = CounterRng::new(ensemble.seed, atom.rng_stream, purpose::ADDRESSING, epoch);
            atom.velocity += rng.unit_vector() * kick_speed;
        }
    }
    Ok(())
}

/// Exponential-decay fit of a survival time series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeFit {
    /// 1/e time constant, s; infinite when the population does not decay.
    pub lifetime: f64,
    /// Slope of ln(alive fraction) vs time, 1/s.
    pub slope: f64,
    pub residual_rms: f64,
}

/// Least-squares fit of ln(alive fraction) against time.
/// Points with zero fraction carry no information and are dropped.
pub fn lifetime_fit(series: &[(f64, f64)]) -> Result<LifetimeFit> {
    let log_points: Vec<(f64, f64)> =
        series.iter().filter(|p| p.1 > 0.0).map(|&(t, f)| (t, f.ln())).collect();
    if log_points.len() < 2 {
        return Err(Error::DegenerateFit(
            "need at least two non-empty survival points".to_string(),
        ));
    }
    let fit = linear_fit(&log_points)?;
    let lifetime = if fit.slope < 0.0 { -1.0 / fit.slope } else { f64::INFINITY };
    Ok(LifetimeFit { lifetime, slope: fit.slope, residual_rms: fit.residual_rms })
}

/// Time-of-flight thermometry result.
#[derive(Debug, Clone, PartialEq)]
pub struct TofResult {
    pub temperature: f64,
    /// 1σ fit uncertainty on the temperature, K.
    pub uncertainty: f64,
    /// (expansion time, pooled per-axis σ²) pairs entering the fit.
    pub points: Vec<(f64, f64)>,
}

/// Switch the trap off and expand ballistically: the per-axis cloud variance
/// grows as σ²(t) = σ₀² + (k_B T/m)·t². Variances are taken about each
/// site's own cloud center, so the site grid and any uniform gravity sag
/// drop out.
pub fn time_of_flight(
    ensemble: &Ensemble,
    mass: f64,
    expansion_times: &[f64],
    gravity: f64,
) -> Result<TofResult> {
    if expansion_times.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 expansion times, got {}",
            expansion_times.len()
        )));
    }
    let alive: Vec<&AtomState> = ensemble.atoms.iter().filter(|a| a.alive).collect();
    if alive.len() < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 alive atoms for thermometry, got {}",
            alive.len()
        )));
    }

    // Group atoms by site; unassigned atoms form one shared cloud.
    let max_site = alive.iter().filter_map(|a| a.site_id).max().map_or(0, |m| m + 1);
    let group_of = |a: &AtomState| a.site_id.map_or(max_site, |s| s);

    let mut points = Vec::with_capacity(expansion_times.len());
    for &t in expansion_times {
        if !(t >= 0.0) {
            return Err(Error::InvalidInput("expansion times must be non-negative".to_string()));
        }
        let sag = 0.5 * gravity * t * t;
        let expanded = |a: &AtomState| a.position + a.velocity * t - Vec3::new(0.0, 0.0, sag);

        let mut sums = alloc::vec![(Vec3::ZERO, 0usize); max_site + 1];
        for a in &alive {
            let g = group_of(a);
            sums[g].0 += expanded(a);
            sums[g].1 += 1;
        }
        let means: Vec<Vec3> =
            sums.iter().map(|&(s, n)| if n > 0 { s * (1.0 / n as f64) } else { Vec3::ZERO }).collect();
        let spread: f64 = alive
            .iter()
            .map(|a| {
                let d = expanded(a) - means[group_of(a)];
                d.norm_sq()
            })
            .sum();
        points.push((t, spread / (3.0 * alive.len() as f64)));
    }

    let fit = linear_fit_mapped(&points, |t| t * t)?;
    Ok(TofResult {
        temperature: fit.slope * mass / BOLTZMANN,
        uncertainty: fit.slope_stderr * mass / BOLTZMANN,
        points,
    })
}
