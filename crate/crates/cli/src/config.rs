//! The run configuration file: flat, sectioned key = value text, all values
//! SI. Parsing is strict — unknown sections or keys are rejected by name.
//!
//! Sections: `[species]` (optional overrides of the built-in Rb-85),
//! `[lens_array]`, `[beam]` and optionally `[beam2]`, `[dynamics]`,
//! `[imaging]`, `[register]`, `[thresholds]`, `[interleave]`. The full
//! grammar is documented in the project README.

use crate::error::{config_error, CliError, CliResult};
use microtrap_core::field::TrapField;
use microtrap_core::optics::{
    expand_foci, ArrayId, FocusSite, IlluminationBeam, LensArrayGeometry, Polarization, TiltAxis,
};
use microtrap_core::species::AtomSpecies;
use microtrap_core::traps::{characterize_all, TrapSiteReport};
use microtrap_core::Vec3;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn unit(self) -> Vec3 {
        match self {
            Axis::X => Vec3::new(1.0, 0.0, 0.0),
            Axis::Y => Vec3::new(0.0, 1.0, 0.0),
            Axis::Z => Vec3::new(0.0, 0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DynamicsConfig {
    pub temperature: f64,
    pub atoms_per_site: usize,
    /// Integration step; `None` selects 1/(200 ν_r,max).
    pub dt: Option<f64>,
    pub duration: f64,
    pub snapshot_interval: f64,
    pub residual_rate: f64,
    pub seed: u64,
    pub absorption_axis: Axis,
    pub tof_times: Vec<f64>,
    pub gravity: bool,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            temperature: 20e-6,
            atoms_per_site: 125,
            dt: None,
            duration: 0.06,
            snapshot_interval: 0.005,
            residual_rate: 0.0,
            seed: 42,
            absorption_axis: Axis::Z,
            tof_times: vec![0.5e-3, 1e-3, 1.5e-3, 2e-3, 3e-3],
            gravity: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImagingConfig {
    pub psf_sigma: f64,
    pub tilt_elongation: f64,
    pub pixel_pitch: f64,
    pub width: usize,
    pub height: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub shot_noise: bool,
    pub per_atom_rate: f64,
    pub exposure: f64,
    pub seed: u64,
}

impl Default for ImagingConfig {
    fn default() -> Self {
        ImagingConfig {
            psf_sigma: 17e-6,
            tilt_elongation: 1.6,
            pixel_pitch: 5e-6,
            width: 260,
            height: 60,
            center_x: 0.0,
            center_y: 0.0,
            shot_noise: true,
            per_atom_rate: 10.0,
            exposure: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RegisterConfig {
    /// Atoms loaded per site; either one uniform count or one per site.
    pub load_counts: LoadCounts,
}

#[derive(Debug, Clone)]
pub enum LoadCounts {
    Uniform(u64),
    PerSite(Vec<u64>),
}

impl Default for RegisterConfig {
    fn default() -> Self {
        RegisterConfig { load_counts: LoadCounts::Uniform(500) }
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdsConfig {
    pub detection_efficiency: f64,
    pub detectability_threshold: u64,
    pub gate_time: Option<f64>,
    pub collisional_gate_time: Option<f64>,
    pub min_oscillation_ratio: f64,
    pub min_decoherence_ratio: f64,
    pub min_collisional_ratio: f64,
    pub mad_threshold_k: f64,
    pub detection_min_peak: f64,
}

impl Default for ThresholdsConfig {
    fn default() -> Self {
        ThresholdsConfig {
            detection_efficiency: 1.0,
            detectability_threshold: 100,
            gate_time: None,
            collisional_gate_time: None,
            min_oscillation_ratio: 10.0,
            min_decoherence_ratio: 1e3,
            min_collisional_ratio: 50.0,
            mad_threshold_k: 5.0,
            detection_min_peak: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct InterleaveConfig {
    /// Relative tilt angles applied to the second beam, rad.
    pub angles: Vec<f64>,
    pub cross_section_samples: usize,
    /// Lenslet (row, col) whose trap pair is cross-sectioned.
    pub pair_row: usize,
    pub pair_col: usize,
}

impl Default for InterleaveConfig {
    fn default() -> Self {
        InterleaveConfig {
            angles: vec![0.0, 0.0144, 0.0288, 0.0432, 0.0576, 0.072],
            cross_section_samples: 400,
            pair_row: 1,
            pair_col: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub species: AtomSpecies,
    pub geometry: LensArrayGeometry,
    pub beams: Vec<IlluminationBeam>,
    pub dynamics: DynamicsConfig,
    pub imaging: ImagingConfig,
    pub register: RegisterConfig,
    pub thresholds: ThresholdsConfig,
    pub interleave: InterleaveConfig,
}

/// Field, foci and per-site reports derived from a validated config;
/// produced before any output is written.
pub struct Prepared {
    pub field: TrapField,
    pub foci: Vec<FocusSite>,
    pub reports: Vec<TrapSiteReport>,
}

pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

// ---------------------------------------------------------------------------
// Raw sectioned key-value layer
// ---------------------------------------------------------------------------

struct Section {
    name: String,
    entries: BTreeMap<String, (String, usize)>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(v, _)| v)
    }

    fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> CliResult<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                config_error(format!("[{}] {}: cannot parse value '{}'", self.name, key, raw))
            }),
        }
    }

    fn take_f64(&mut self, key: &str) -> CliResult<Option<f64>> {
        self.take_parsed::<f64>(key)
    }

    fn take_bool(&mut self, key: &str) -> CliResult<Option<bool>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => match raw.as_str() {
                "true" | "on" | "1" | "yes" => Ok(Some(true)),
                "false" | "off" | "0" | "no" => Ok(Some(false)),
                _ => Err(config_error(format!(
                    "[{}] {}: expected a boolean, got '{}'",
                    self.name, key, raw
                ))),
            },
        }
    }

    fn take_f64_list(&mut self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<f64>, _>>()
                .map(Some)
                .map_err(|_| {
                    config_error(format!("[{}] {}: expected a comma-separated list of numbers", self.name, key))
                }),
        }
    }

    fn take_u64_list(&mut self, key: &str) -> CliResult<Option<Vec<u64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(raw) => raw
                .split(',')
                .map(|s| s.trim().parse::<u64>())
                .collect::<Result<Vec<u64>, _>>()
                .map(Some)
                .map_err(|_| {
                    config_error(format!("[{}] {}: expected a comma-separated list of counts", self.name, key))
                }),
        }
    }

    fn require_f64(&mut self, key: &str) -> CliResult<f64> {
        self.take_f64(key)?
            .ok_or_else(|| config_error(format!("[{}] missing required key '{}'", self.name, key)))
    }

    fn finish(self) -> CliResult<()> {
        if let Some((key, (_, line))) = self.entries.into_iter().next() {
            return Err(config_error(format!(
                "[{}] unknown key '{}' (line {})",
                self.name, key, line
            )));
        }
        Ok(())
    }
}

fn split_sections(text: &str) -> CliResult<BTreeMap<String, Section>> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (index, raw_line) in text.lines().enumerate() {
        let line_no = index + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            let name = name.trim().to_string();
            if sections.contains_key(&name) {
                return Err(config_error(format!("duplicate section [{name}] (line {line_no})")));
            }
            sections.insert(
                name.clone(),
                Section { name: name.clone(), entries: BTreeMap::new() },
            );
            current = Some(name);
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_error(format!("line {line_no}: expected 'key = value', got '{line}'")));
        };
        let section_name = current
            .clone()
            .ok_or_else(|| config_error(format!("line {line_no}: key outside any [section]")))?;
        let section = sections.get_mut(&section_name).unwrap();
        let key = key.trim().to_string();
        if section.entries.contains_key(&key) {
            return Err(config_error(format!(
                "[{section_name}] duplicate key '{key}' (line {line_no})"
            )));
        }
        section.entries.insert(key, (value.trim().to_string(), line_no));
    }
    Ok(sections)
}

// ---------------------------------------------------------------------------
// Typed layer
// ---------------------------------------------------------------------------

const KNOWN_SECTIONS: &[&str] = &[
    "species", "lens_array", "beam", "beam2", "dynamics", "imaging", "register", "thresholds",
    "interleave",
];

pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let mut sections = split_sections(text)?;
    for name in sections.keys() {
        if !KNOWN_SECTIONS.contains(&name.as_str()) {
            return Err(config_error(format!("unknown section [{name}]")));
        }
    }

    let species = parse_species(sections.remove("species"))?;
    let geometry = parse_lens_array(
        sections
            .remove("lens_array")
            .ok_or_else(|| config_error("missing required section [lens_array]"))?,
    )?;
    let beam1 = parse_beam(
        sections.remove("beam").ok_or_else(|| config_error("missing required section [beam]"))?,
        &species,
        Polarization::Horizontal,
    )?;
    let mut beams = vec![beam1];
    if let Some(section) = sections.remove("beam2") {
        beams.push(parse_beam(section, &species, Polarization::Vertical)?);
        if beams[0].polarization == beams[1].polarization {
            return Err(config_error(
                "[beam2] polarization: the two beams must carry distinct polarization tags",
            ));
        }
    }
    let dynamics = parse_dynamics(sections.remove("dynamics"))?;
    let imaging = parse_imaging(sections.remove("imaging"))?;
    let register = parse_register(sections.remove("register"))?;
    let thresholds = parse_thresholds(sections.remove("thresholds"))?;
    let interleave = parse_interleave(sections.remove("interleave"))?;

    let config =
        RunConfig { species, geometry, beams, dynamics, imaging, register, thresholds, interleave };
    // Fail on inconsistent geometry/beam data now, before any command runs.
    prepare(&config)?;
    Ok(config)
}

fn parse_species(section: Option<Section>) -> CliResult<AtomSpecies> {
    let mut species = AtomSpecies::rb85();
    let Some(mut s) = section else { return Ok(species) };
    if let Some(label) = s.take("label") {
        species.label = label;
    }
    if let Some(v) = s.take_f64("mass_kg")? {
        species.mass = v;
    }
    if let Some(v) = s.take_f64("d2_wavelength_m")? {
        species.d2_wavelength = v;
    }
    if let Some(v) = s.take_f64("d1_wavelength_m")? {
        species.d1_wavelength = v;
    }
    if let Some(v) = s.take_f64("d2_linewidth_rad_s")? {
        species.d2_linewidth = v;
    }
    if let Some(v) = s.take_f64("d1_linewidth_rad_s")? {
        species.d1_linewidth = v;
    }
    if let Some(v) = s.take_f64("saturation_intensity_w_m2")? {
        species.saturation_intensity_d2 = v;
    }
    s.finish()?;
    species.validate().map_err(|e| config_error(format!("[species] {e}")))?;
    Ok(species)
}

fn parse_mask(raw: &str, rows: usize, cols: usize) -> CliResult<Vec<bool>> {
    if raw == "all" {
        return Ok(vec![true; rows * cols]);
    }
    let row_strings: Vec<&str> = raw.split(';').map(str::trim).collect();
    if row_strings.len() != rows {
        return Err(config_error(format!(
            "[lens_array] illuminated_mask: {} rows given, expected {rows}",
            row_strings.len()
        )));
    }
    let mut mask = Vec::with_capacity(rows * cols);
    for row in row_strings {
        if row.len() != cols {
            return Err(config_error(format!(
                "[lens_array] illuminated_mask: row '{row}' has {} entries, expected {cols}",
                row.len()
            )));
        }
        for c in row.chars() {
            match c {
                '0' => mask.push(false),
                '1' => mask.push(true),
                _ => {
                    return Err(config_error(format!(
                        "[lens_array] illuminated_mask: invalid character '{c}', expected 0 or 1"
                    )))
                }
            }
        }
    }
    Ok(mask)
}

fn parse_lens_array(mut s: Section) -> CliResult<LensArrayGeometry> {
    let pitch = s.require_f64("pitch_m")?;
    let focal_length = s.require_f64("focal_length_m")?;
    let rows = s
        .take_parsed::<usize>("rows")?
        .ok_or_else(|| config_error("[lens_array] missing required key 'rows'"))?;
    let cols = s
        .take_parsed::<usize>("cols")?
        .ok_or_else(|| config_error("[lens_array] missing required key 'cols'"))?;
    let mask = match s.take("illuminated_mask") {
        Some(raw) => parse_mask(&raw, rows, cols)?,
        None => vec![true; rows * cols],
    };
    let weights = s.take_f64_list("lenslet_weights")?;
    if let Some(w) = &weights {
        if w.len() != rows * cols {
            return Err(config_error(format!(
                "[lens_array] lenslet_weights: {} values given, expected rows*cols = {}",
                w.len(),
                rows * cols
            )));
        }
    }
    let transmission = s.take_f64("transmission")?.unwrap_or(1.0);
    s.finish()?;
    let geometry = LensArrayGeometry {
        pitch,
        focal_length,
        rows,
        cols,
        illuminated_mask: mask,
        lenslet_weights: weights,
        transmission,
    };
    geometry.validate().map_err(|e| config_error(format!("[lens_array] {e}")))?;
    Ok(geometry)
}

fn parse_beam(
    mut s: Section,
    species: &AtomSpecies,
    default_polarization: Polarization,
) -> CliResult<IlluminationBeam> {
    let name = s.name.clone();
    let power = s.require_f64("power_w")?;
    let wavelength = match (s.take_f64("wavelength_m")?, s.take_f64("delta_lambda_m")?) {
        (Some(w), None) => w,
        (None, Some(offset)) => species.d2_wavelength + offset,
        (Some(_), Some(_)) => {
            return Err(config_error(format!(
                "[{name}] give either wavelength_m or delta_lambda_m, not both"
            )))
        }
        (None, None) => {
            return Err(config_error(format!(
                "[{name}] missing wavelength: set wavelength_m or delta_lambda_m"
            )))
        }
    };
    let waist = s.require_f64("waist_m")?;
    let tilt = s.take_f64("tilt_rad")?.unwrap_or(0.0);
    let tilt_axis = match s.take("tilt_axis").as_deref() {
        None | Some("y") => TiltAxis::Y,
        Some("x") => TiltAxis::X,
        Some(other) => {
            return Err(config_error(format!("[{name}] tilt_axis: expected x or y, got '{other}'")))
        }
    };
    let polarization = match s.take("polarization").as_deref() {
        None => default_polarization,
        Some("h") | Some("horizontal") => Polarization::Horizontal,
        Some("v") | Some("vertical") => Polarization::Vertical,
        Some(other) => {
            return Err(config_error(format!("[{name}] polarization: expected h or v, got '{other}'")))
        }
    };
    s.finish()?;
    let beam = IlluminationBeam {
        total_power: power,
        wavelength,
        tilt_angle: tilt,
        tilt_axis,
        polarization,
        focus_waist: waist,
    };
    beam.validate().map_err(|e| config_error(format!("[{name}] {e}")))?;
    Ok(beam)
}

fn parse_dynamics(section: Option<Section>) -> CliResult<DynamicsConfig> {
    let mut config = DynamicsConfig::default();
    let Some(mut s) = section else { return Ok(config) };
    if let Some(v) = s.take_f64("temperature_k")? {
        config.temperature = v;
    }
    if let Some(v) = s.take_parsed::<usize>("atoms_per_site")? {
        config.atoms_per_site = v;
    }
    config.dt = s.take_f64("dt_s")?;
    if let Some(v) = s.take_f64("duration_s")? {
        config.duration = v;
    }
    if let Some(v) = s.take_f64("snapshot_interval_s")? {
        config.snapshot_interval = v;
    }
    if let Some(v) = s.take_f64("residual_rate_hz")? {
        config.residual_rate = v;
    }
    if let Some(v) = s.take_parsed::<u64>("seed")? {
        config.seed = v;
    }
    match s.take("absorption_axis").as_deref() {
        None => {}
        Some("x") => config.absorption_axis = Axis::X,
        Some("y") => config.absorption_axis = Axis::Y,
        Some("z") => config.absorption_axis = Axis::Z,
        Some(other) => {
            return Err(config_error(format!(
                "[dynamics] absorption_axis: expected x, y or z, got '{other}'"
            )))
        }
    }
    if let Some(v) = s.take_f64_list("tof_times_s")? {
        config.tof_times = v;
    }
    if let Some(v) = s.take_bool("gravity")? {
        config.gravity = v;
    }
    s.finish()?;
    Ok(config)
}

fn parse_imaging(section: Option<Section>) -> CliResult<ImagingConfig> {
    let mut config = ImagingConfig::default();
    let Some(mut s) = section else { return Ok(config) };
    if let Some(v) = s.take_f64("psf_sigma_m")? {
        config.psf_sigma = v;
    }
    if let Some(v) = s.take_f64("tilt_elongation")? {
        config.tilt_elongation = v;
    }
    if let Some(v) = s.take_f64("pixel_pitch_m")? {
        config.pixel_pitch = v;
    }
    if let Some(v) = s.take_parsed::<usize>("width_px")? {
        config.width = v;
    }
    if let Some(v) = s.take_parsed::<usize>("height_px")? {
        config.height = v;
    }
    if let Some(v) = s.take_f64("center_x_m")? {
        config.center_x = v;
    }
    if let Some(v) = s.take_f64("center_y_m")? {
        config.center_y = v;
    }
    if let Some(v) = s.take_bool("shot_noise")? {
        config.shot_noise = v;
    }
    if let Some(v) = s.take_f64("per_atom_rate")? {
        config.per_atom_rate = v;
    }
    if let Some(v) = s.take_f64("exposure")? {
        config.exposure = v;
    }
    if let Some(v) = s.take_parsed::<u64>("seed")? {
        config.seed = v;
    }
    s.finish()?;
    Ok(config)
}

fn parse_register(section: Option<Section>) -> CliResult<RegisterConfig> {
    let mut config = RegisterConfig::default();
    let Some(mut s) = section else { return Ok(config) };
    let uniform = s.take_parsed::<u64>("load_count")?;
    let per_site = s.take_u64_list("load_counts")?;
    match (uniform, per_site) {
        (Some(_), Some(_)) => {
            return Err(config_error("[register] give either load_count or load_counts, not both"))
        }
        (Some(n), None) => config.load_counts = LoadCounts::Uniform(n),
        (None, Some(v)) => config.load_counts = LoadCounts::PerSite(v),
        (None, None) => {}
    }
    s.finish()?;
    Ok(config)
}

fn parse_thresholds(section: Option<Section>) -> CliResult<ThresholdsConfig> {
    let mut config = ThresholdsConfig::default();
    let Some(mut s) = section else { return Ok(config) };
    if let Some(v) = s.take_f64("detection_efficiency")? {
        config.detection_efficiency = v;
    }
    if let Some(v) = s.take_parsed::<u64>("detectability_threshold")? {
        config.detectability_threshold = v;
    }
    config.gate_time = s.take_f64("gate_time_s")?;
    config.collisional_gate_time = s.take_f64("collisional_gate_time_s")?;
    if let Some(v) = s.take_f64("r_osc_min")? {
        config.min_oscillation_ratio = v;
    }
    if let Some(v) = s.take_f64("r_dec_min")? {
        config.min_decoherence_ratio = v;
    }
    if let Some(v) = s.take_f64("r_coll_min")? {
        config.min_collisional_ratio = v;
    }
    if let Some(v) = s.take_f64("mad_threshold_k")? {
        config.mad_threshold_k = v;
    }
    if let Some(v) = s.take_f64("detection_min_peak")? {
        config.detection_min_peak = v;
    }
    s.finish()?;
    Ok(config)
}

fn parse_interleave(section: Option<Section>) -> CliResult<InterleaveConfig> {
    let mut config = InterleaveConfig::default();
    let Some(mut s) = section else { return Ok(config) };
    if let Some(v) = s.take_f64_list("angles_rad")? {
        config.angles = v;
    }
    if let Some(v) = s.take_parsed::<usize>("cross_section_samples")? {
        config.cross_section_samples = v;
    }
    if let Some(v) = s.take_parsed::<usize>("pair_row")? {
        config.pair_row = v;
    }
    if let Some(v) = s.take_parsed::<usize>("pair_col")? {
        config.pair_col = v;
    }
    s.finish()?;
    Ok(config)
}

// ---------------------------------------------------------------------------
// Derivations
// ---------------------------------------------------------------------------

/// Expand the beams into foci and characterize every site. All geometry and
/// physics errors surface here as config errors, before any output exists.
pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let mut foci = Vec::new();
    for (index, beam) in config.beams.iter().enumerate() {
        let array_id = if index == 0 { ArrayId::First } else { ArrayId::Second };
        let batch = expand_foci(&config.geometry, beam, array_id, foci.len())
            .map_err(|e| CliError::Config(format!("[lens_array] {e}")))?;
        foci.extend(batch);
    }
    let field = TrapField::new(config.species.clone(), foci.clone())
        .map_err(|e| CliError::Config(format!("[beam] {e}")))?;
    let reports = characterize_all(&field)
        .map_err(|e| CliError::Config(format!("trap characterization failed: {e}")))?;
    Ok(Prepared { field, foci, reports })
}

/// Per-site load counts for the register commands.
pub fn load_counts(config: &RunConfig, site_count: usize) -> CliResult<Vec<u64>> {
    match &config.register.load_counts {
        LoadCounts::Uniform(n) => Ok(vec![*n; site_count]),
        LoadCounts::PerSite(v) => {
            if v.len() != site_count {
                return Err(config_error(format!(
                    "[register] load_counts: {} values given for {site_count} sites",
                    v.len()
                )));
            }
            Ok(v.clone())
        }
    }
}
