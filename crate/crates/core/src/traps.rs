//! Per-site trap characterization: depth, vibrational frequencies,
//! scattering-limited decoherence, Lamb-Dicke parameter, plus the
//! quantum-gate timing ratios and the sideband-cooling check.
//!
//! Depth is the magnitude of the total potential at the site's local
//! minimum (zero at infinity), evaluated on the summed field, so overlapped
//! site pairs report deepened wells.

use crate::constants::TAU;
use crate::error::{Error, Result};
use crate::field::TrapField;
use crate::math::FloatExt;
use crate::optics::ArrayId;
use crate::species::recoil_frequency;
use crate::vec3::Vec3;
use alloc::format;

/// Derived quantities of one trap site.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapSiteReport {
    pub site_id: usize,
    pub array_id: ArrayId,
    pub row: usize,
    pub col: usize,
    /// Located potential minimum, m.
    pub position: Vec3,
    /// Escape depth |U_min|, J (positive).
    pub depth: f64,
    /// Radial small-oscillation frequency, Hz.
    pub radial_frequency: f64,
    /// Axial small-oscillation frequency, Hz.
    pub axial_frequency: f64,
    /// Photon scattering rate at the trap bottom, 1/s.
    pub peak_scattering_rate: f64,
    /// 1 / peak_scattering_rate, s.
    pub decoherence_time: f64,
    /// √(ν_rec/ν_r) at the D2 wavelength.
    pub lamb_dicke_parameter: f64,
    /// D2 recoil frequency, Hz.
    pub recoil_frequency: f64,
}

impl TrapSiteReport {
    /// Depth expressed as |U|/k_B in millikelvin.
    pub fn depth_millikelvin(&self) -> f64 {
        crate::species::joules_to_millikelvin(self.depth)
    }
}

/// Tunables for the minimum search and the finite-difference Hessian.
#[derive(Debug, Clone, Copy)]
pub struct CharacterizeParams {
    /// Convergence: |∇U| < gradient_tolerance_factor · |U₀|/w₀.
    pub gradient_tolerance_factor: f64,
    /// Hessian step as a fraction of the waist.
    pub hessian_step_factor: f64,
    pub max_iterations: usize,
}

impl Default for CharacterizeParams {
    fn default() -> Self {
        CharacterizeParams {
            gradient_tolerance_factor: 1e-6,
            hessian_step_factor: 0.01,
            max_iterations: 10_000,
        }
    }
}

/// Walk downhill from `start` to the local potential minimum.
///
/// Normalized steepest-descent steps with a backtracking trust radius;
/// `length_scale` (the waist) sets the initial step and the gradient
/// tolerance.
pub fn locate_minimum(
    field: &TrapField,
    start: Vec3,
    length_scale: f64,
    params: &CharacterizeParams,
) -> Result<Vec3> {
    let (u_start, _) = field.potential_and_gradient(start);
    let u_ref = u_start.abs().max(f64::MIN_POSITIVE);
    let grad_tol = params.gradient_tolerance_factor * u_ref / length_scale;

    let mut x = start;
    let mut u = u_start;
    let mut step = 0.1 * length_scale;
    for _ in 0..params.max_iterations {
        let (u_here, grad) = field.potential_and_gradient(x);
        u = u_here;
        let g_norm = grad.norm();
        if g_norm < grad_tol {
            if u < 0.0 {
                return Ok(x);
            }
            return Err(Error::NoMinimum);
        }
        let direction = grad * (-1.0 / g_norm);
        let mut moved = false;
        while step > 1e-9 * length_scale {
            let trial = x + direction * step;
            if field.potential(trial) < u {
                x = trial;
                step = (step * 1.3).min(0.5 * length_scale);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            // Step underflow: we are at the bottom to machine precision.
            if u < 0.0 {
                return Ok(x);
            }
            return Err(Error::NoMinimum);
        }
    }
    let _ = u;
    Err(Error::NoMinimum)
}

/// Characterize one site of the field analytically: harmonic expansion of a
/// Gaussian focus around the located minimum of the summed potential.
pub fn analytic_report(field: &TrapField, site_index: usize) -> Result<TrapSiteReport> {
    let site =
        field.site(site_index).ok_or(Error::UnknownSite(site_index))?.clone();
    if field.site_potential_coefficient(site_index) >= 0.0 {
        return Err(Error::BlueDetuned);
    }
    let params = CharacterizeParams::default();
    let minimum = locate_minimum(field, site.center, site.waist, &params)?;
    let u_min = field.potential(minimum);
    if u_min >= 0.0 {
        return Err(Error::NoMinimum);
    }
    let depth = -u_min;
    let mass = field.species().mass;
    let waist = site.waist;
    let zr = site.rayleigh_range();
    let radial = (4.0 * depth / (mass * waist * waist)).sqrt() / TAU;
    let axial = (2.0 * depth / (mass * zr * zr)).sqrt() / TAU;
    let rate = field.scattering_rate_at(minimum);
    let nu_rec = recoil_frequency(field.species(), field.species().d2_wavelength)?;
    Ok(TrapSiteReport {
        site_id: site.site_id,
        array_id: site.array_id,
        row: site.row,
        col: site.col,
        position: minimum,
        depth,
        radial_frequency: radial,
        axial_frequency: axial,
        peak_scattering_rate: rate,
        decoherence_time: 1.0 / rate,
        lamb_dicke_parameter: (nu_rec / radial).sqrt(),
        recoil_frequency: nu_rec,
    })
}

/// Reports for every site of the field.
pub fn characterize_all(field: &TrapField) -> Result<alloc::vec::Vec<TrapSiteReport>> {
    (0..field.site_count()).map(|i| analytic_report(field, i)).collect()
}

/// Vibrational frequencies from the numeric Hessian of the full summed
/// potential at the located minimum, Hz, sorted ascending.
pub fn numeric_frequencies(
    field: &TrapField,
    site_index: usize,
    params: &CharacterizeParams,
) -> Result<[f64; 3]> {
    let site = field.site(site_index).ok_or(Error::UnknownSite(site_index))?.clone();
    let minimum = locate_minimum(field, site.center, site.waist, params)?;
    let h = site.waist * params.hessian_step_factor;
    let hessian = hessian_central(field, minimum, h);
    let eigenvalues = jacobi_eigenvalues(hessian);
    let mass = field.species().mass;
    let mut nu = [0.0; 3];
    for (out, lambda) in nu.iter_mut().zip(eigenvalues) {
        if lambda <= 0.0 {
            return Err(Error::NoMinimum);
        }
        *out = (lambda / mass).sqrt() / TAU;
    }
    nu.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(nu)
}

fn hessian_central(field: &TrapField, x: Vec3, h: f64) -> [[f64; 3]; 3] {
    let unit = [Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 0.0, 1.0)];
    let u0 = field.potential(x);
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        let up = field.potential(x + unit[i] * h);
        let dn = field.potential(x - unit[i] * h);
        m[i][i] = (up - 2.0 * u0 + dn) / (h * h);
    }
    for i in 0..3 {
        for j in (i + 1)..3 {
            let pp = field.potential(x + unit[i] * h + unit[j] * h);
            let pm = field.potential(x + unit[i] * h - unit[j] * h);
            let mp = field.potential(x - unit[i] * h + unit[j] * h);
            let mm = field.potential(x - unit[i] * h - unit[j] * h);
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Eigenvalues of a symmetric 3×3 matrix by cyclic Jacobi rotations.
fn jacobi_eigenvalues(mut a: [[f64; 3]; 3]) -> [f64; 3] {
    for _ in 0..64 {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        let diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == 0.0 {
                continue;
            }
            let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
            let t = if theta >= 0.0 {
                1.0 / (theta + (1.0 + theta * theta).sqrt())
            } else {
                1.0 / (theta - (1.0 + theta * theta).sqrt())
            };
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            let mut rot = [[0.0; 3]; 3];
            for i in 0..3 {
                rot[i][i] = 1.0;
            }
            rot[p][p] = c;
            rot[q][q] = c;
            rot[p][q] = s;
            rot[q][p] = -s;
            // a := rotᵀ · a · rot
            let mut tmp = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    tmp[i][j] = (0..3).map(|k| rot[k][i] * a[k][j]).sum();
                }
            }
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] = (0..3).map(|k| tmp[i][k] * rot[k][j]).sum();
                }
            }
        }
    }
    [a[0][0], a[1][1], a[2][2]]
}

/// Pass thresholds for the gate timing ratios.
#[derive(Debug, Clone, Copy)]
pub struct GateThresholds {
    pub min_oscillation_ratio: f64,
    pub min_decoherence_ratio: f64,
    pub min_collisional_ratio: f64,
}

impl Default for GateThresholds {
    fn default() -> Self {
        GateThresholds {
            min_oscillation_ratio: 10.0,
            min_decoherence_ratio: 1e3,
            min_collisional_ratio: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollisionalCheck {
    pub ratio: f64,
    pub ok: bool,
}

/// Timing ratios of a gate against one site's oscillation period and
/// decoherence time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateFeasibility {
    /// Oscillation period / gate time.
    pub oscillation_ratio: f64,
    /// Decoherence time / gate time.
    pub decoherence_ratio: f64,
    pub oscillation_ok: bool,
    pub decoherence_ok: bool,
    pub collisional: Option<CollisionalCheck>,
}

pub fn gate_feasibility(
    report: &TrapSiteReport,
    gate_time: f64,
    collisional_gate_time: Option<f64>,
    thresholds: &GateThresholds,
) -> Result<GateFeasibility> {
    if !(gate_time > 0.0) {
        return Err(Error::InvalidInput(format!("gate_time must be positive, got {gate_time}")));
    }
    let oscillation_ratio = (1.0 / report.radial_frequency) / gate_time;
    let decoherence_ratio = report.decoherence_time / gate_time;
    let collisional = match collisional_gate_time {
        Some(t) if t > 0.0 => {
            let ratio = report.decoherence_time / t;
            Some(CollisionalCheck { ratio, ok: ratio >= thresholds.min_collisional_ratio })
        }
        Some(t) => {
            return Err(Error::InvalidInput(format!(
                "collisional gate time must be positive, got {t}"
            )))
        }
        None => None,
    };
    Ok(GateFeasibility {
        oscillation_ratio,
        decoherence_ratio,
        oscillation_ok: oscillation_ratio >= thresholds.min_oscillation_ratio,
        decoherence_ok: decoherence_ratio >= thresholds.min_decoherence_ratio,
        collisional,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandCheck {
    /// ν_r strictly above ν_rec.
    pub possible: bool,
    /// ν_r / ν_rec.
    pub margin: f64,
}

/// Sideband cooling to the vibrational ground state requires the trap
/// frequency to exceed the recoil frequency.
pub fn sideband_cooling_check(report: &TrapSiteReport) -> SidebandCheck {
    SidebandCheck {
        possible: report.radial_frequency > report.recoil_frequency,
        margin: report.radial_frequency / report.recoil_frequency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{
        expand_foci, IlluminationBeam, LensArrayGeometry, Polarization, TiltAxis,
    };
    use crate::species::AtomSpecies;
    use alloc::vec::Vec;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(a.abs())
    }

    fn beam(power: f64, wavelength: f64, waist: f64, tilt: f64, pol: Polarization) -> IlluminationBeam {
        IlluminationBeam {
            total_power: power,
            wavelength,
            tilt_angle: tilt,
            tilt_axis: TiltAxis::Y,
            polarization: pol,
            focus_waist: waist,
        }
    }

    fn single_site_field(power: f64, wavelength: f64, waist: f64) -> TrapField {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let foci =
            expand_foci(&geom, &beam(power, wavelength, waist, 0.0, Polarization::Horizontal), ArrayId::First, 0)
                .unwrap();
        TrapField::new(AtomSpecies::rb85(), foci).unwrap()
    }

    // Fig.-style reference trap: 3 mW per site, 0.4 nm red, 7 µm waist.
    #[test]
    fn reference_trap_report() {
        let field = single_site_field(3e-3, 780.64e-9, 7e-6);
        let r = analytic_report(&field, 0).unwrap();
        assert!(rel_close(r.depth, 3.566274e-26, 1e-4));
        assert!((r.depth_millikelvin() - 2.5).abs() / 2.5 < 0.30);
        assert!(rel_close(r.radial_frequency, 22869.2, 1e-4), "{}", r.radial_frequency);
        assert!(rel_close(r.axial_frequency, 574.04, 1e-3), "{}", r.axial_frequency);
        assert!(r.radial_frequency > r.axial_frequency);
        assert!(rel_close(r.peak_scattering_rate, 10580.76, 1e-3));
        assert_eq!(r.decoherence_time, 1.0 / r.peak_scattering_rate);
        // η²·ν_r = ν_rec, definitional.
        let eta_sq_nu = r.lamb_dicke_parameter * r.lamb_dicke_parameter * r.radial_frequency;
        assert!(rel_close(eta_sq_nu, r.recoil_frequency, 1e-12));
    }

    // Ti:Sa parameters: tens of mW per trap at 825 nm.
    #[test]
    fn tisa_trap_report() {
        let field = single_site_field(50e-3, 825e-9, 7e-6);
        let r = analytic_report(&field, 0).unwrap();
        assert!(rel_close(r.radial_frequency, 12122.0, 1e-3), "{}", r.radial_frequency);
        assert!((r.radial_frequency - 10e3).abs() / 10e3 < 0.50);
        assert!(r.decoherence_time > 0.025 && r.decoherence_time < 0.100);
    }

    // High-NA parameters: 1 mW per trap at 850 nm into a 1 µm waist.
    #[test]
    fn high_na_trap_report() {
        let field = single_site_field(1e-3, 850e-9, 1e-6);
        let r = analytic_report(&field, 0).unwrap();
        assert!(rel_close(r.radial_frequency, 66055.7, 1e-3), "{}", r.radial_frequency);
        assert!((r.radial_frequency - 50e3).abs() / 50e3 < 0.50);
        assert!(r.decoherence_time > 0.075 && r.decoherence_time < 0.300);
    }

    #[test]
    fn blue_detuning_is_rejected() {
        let field = single_site_field(3e-3, 770e-9, 7e-6);
        assert_eq!(analytic_report(&field, 0), Err(Error::BlueDetuned));
        assert_eq!(
            numeric_frequencies(&field, 0, &CharacterizeParams::default()),
            Err(Error::NoMinimum)
        );
    }

    #[test]
    fn numeric_frequencies_match_analytic() {
        for (power, wl, waist) in [(3e-3, 780.64e-9, 7e-6), (1e-3, 850e-9, 1e-6)] {
            let field = single_site_field(power, wl, waist);
            let r = analytic_report(&field, 0).unwrap();
            let nu = numeric_frequencies(&field, 0, &CharacterizeParams::default()).unwrap();
            assert!(rel_close(nu[0], r.axial_frequency, 0.01), "{} vs {}", nu[0], r.axial_frequency);
            assert!(rel_close(nu[1], r.radial_frequency, 0.01));
            assert!(rel_close(nu[2], r.radial_frequency, 0.01));
        }
    }

    #[test]
    fn merged_pair_doubles_depth_and_scales_frequencies() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let a = expand_foci(&geom, &beam(3e-3, 780.64e-9, 7e-6, 0.0, Polarization::Horizontal), ArrayId::First, 0)
            .unwrap();
        let b = expand_foci(&geom, &beam(3e-3, 780.64e-9, 7e-6, 0.0, Polarization::Vertical), ArrayId::Second, 1)
            .unwrap();
        let merged = TrapField::new(
            AtomSpecies::rb85(),
            a.iter().chain(b.iter()).cloned().collect::<Vec<_>>(),
        )
        .unwrap();
        let single = analytic_report(&single_site_field(3e-3, 780.64e-9, 7e-6), 0).unwrap();
        let pair = analytic_report(&merged, 0).unwrap();
        assert!(rel_close(pair.depth, 2.0 * single.depth, 1e-9));
        assert!(rel_close(pair.radial_frequency, 2.0f64.sqrt() * single.radial_frequency, 1e-9));
        let nu = numeric_frequencies(&merged, 0, &CharacterizeParams::default()).unwrap();
        assert!(rel_close(nu[1], pair.radial_frequency, 0.01));
    }

    #[test]
    fn separated_pair_sites_stay_isolated() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let a = expand_foci(&geom, &beam(3e-3, 780.64e-9, 7e-6, 0.0, Polarization::Horizontal), ArrayId::First, 0)
            .unwrap();
        let b = expand_foci(&geom, &beam(3e-3, 780.64e-9, 7e-6, 0.072, Polarization::Vertical), ArrayId::Second, 1)
            .unwrap();
        let field = TrapField::new(
            AtomSpecies::rb85(),
            a.iter().chain(b.iter()).cloned().collect::<Vec<_>>(),
        )
        .unwrap();
        let isolated = analytic_report(&single_site_field(3e-3, 780.64e-9, 7e-6), 0).unwrap();
        for idx in 0..2 {
            let r = analytic_report(&field, idx).unwrap();
            assert!(rel_close(r.depth, isolated.depth, 1e-3));
            let nu = numeric_frequencies(&field, idx, &CharacterizeParams::default()).unwrap();
            let nu_iso = numeric_frequencies(
                &single_site_field(3e-3, 780.64e-9, 7e-6),
                0,
                &CharacterizeParams::default(),
            )
            .unwrap();
            for (x, y) in nu.iter().zip(nu_iso.iter()) {
                assert!(rel_close(*x, *y, 1e-3), "{x} vs {y}");
            }
        }
    }

    fn synthetic_report(radial: f64, decoherence: f64) -> TrapSiteReport {
        TrapSiteReport {
            site_id: 0,
            array_id: ArrayId::First,
            row: 1,
            col: 1,
            position: Vec3::ZERO,
            depth: 1e-26,
            radial_frequency: radial,
            axial_frequency: radial / 10.0,
            peak_scattering_rate: 1.0 / decoherence,
            decoherence_time: decoherence,
            lamb_dicke_parameter: (3859.69 / radial).sqrt(),
            recoil_frequency: 3859.69,
        }
    }

    #[test]
    fn gate_ratios_for_fast_rydberg_gate() {
        let r = synthetic_report(50e3, 0.150);
        let g = gate_feasibility(&r, 1e-6, None, &GateThresholds::default()).unwrap();
        assert!(rel_close(g.oscillation_ratio, 20.0, 1e-12));
        assert!(rel_close(g.decoherence_ratio, 1.5e5, 1e-12));
        assert!(g.oscillation_ok && g.decoherence_ok);
        assert!(g.decoherence_ratio >= 1e4);
    }

    #[test]
    fn collisional_gate_ratio() {
        let r = synthetic_report(10e3, 0.050);
        let g = gate_feasibility(&r, 1e-3, Some(1e-3), &GateThresholds::default()).unwrap();
        let coll = g.collisional.unwrap();
        assert!(rel_close(coll.ratio, 50.0, 1e-12));
        assert!(coll.ok);
    }

    #[test]
    fn gate_as_slow_as_decoherence_fails() {
        let r = synthetic_report(10e3, 0.050);
        let g = gate_feasibility(&r, 0.050, None, &GateThresholds::default()).unwrap();
        assert!(rel_close(g.decoherence_ratio, 1.0, 1e-12));
        assert!(!g.decoherence_ok);
    }

    #[test]
    fn sideband_margins() {
        let check = sideband_cooling_check(&synthetic_report(50e3, 0.1));
        assert!(check.possible);
        assert!(rel_close(check.margin, 12.95, 1e-2), "{}", check.margin);

        let boundary = sideband_cooling_check(&synthetic_report(3859.69, 0.1));
        assert!(!boundary.possible);

        let measured = sideband_cooling_check(&synthetic_report(7.5e3, 0.1));
        assert!(measured.possible);
        assert!(rel_close(measured.margin, 1.943, 1e-2), "{}", measured.margin);
    }

    #[test]
    fn depth_and_frequency_scaling_laws() {
        let base = analytic_report(&single_site_field(2e-3, 800e-9, 5e-6), 0).unwrap();
        // depth ∝ P
        let doubled = analytic_report(&single_site_field(4e-3, 800e-9, 5e-6), 0).unwrap();
        assert!(rel_close(doubled.depth, 2.0 * base.depth, 1e-9));
        // ν_r ∝ √P
        assert!(rel_close(doubled.radial_frequency, 2.0f64.sqrt() * base.radial_frequency, 1e-9));
        // depth ∝ 1/w0², ν_r ∝ √P/w0²
        let wide = analytic_report(&single_site_field(2e-3, 800e-9, 10e-6), 0).unwrap();
        assert!(rel_close(wide.depth, base.depth / 4.0, 1e-9));
        assert!(rel_close(wide.radial_frequency, base.radial_frequency / 4.0, 1e-9));
    }

    // ν_r ∝ 1/√|Δ| once the D1 admixture is negligible.
    #[test]
    fn frequency_scales_with_inverse_root_detuning() {
        let mut species = AtomSpecies::rb85();
        species.d1_wavelength = 3000e-9;
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let report_at = |offset: f64| {
            let foci = expand_foci(
                &geom,
                &beam(3e-3, species.d2_wavelength + offset, 7e-6, 0.0, Polarization::Horizontal),
                ArrayId::First,
                0,
            )
            .unwrap();
            let field = TrapField::new(species.clone(), foci).unwrap();
            let det = crate::species::detuning_from_offset(&species, offset).unwrap();
            (analytic_report(&field, 0).unwrap().radial_frequency, det.delta_d2.abs())
        };
        let (nu_a, d_a) = report_at(0.4e-9);
        let (nu_b, d_b) = report_at(1.6e-9);
        assert!(rel_close(nu_a / nu_b, (d_b / d_a).sqrt(), 5e-3));
    }

    #[test]
    fn jacobi_diagonalizes_known_matrix() {
        // Eigenvalues of [[2,1,0],[1,2,0],[0,0,5]] are 1, 3, 5.
        let mut eig = jacobi_eigenvalues([[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]]);
        eig.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(rel_close(eig[0], 1.0, 1e-12));
        assert!(rel_close(eig[1], 3.0, 1e-12));
        assert!(rel_close(eig[2], 5.0, 1e-12));
    }
}
