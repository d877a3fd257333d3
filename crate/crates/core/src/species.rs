//! Atomic species data and the maps from light intensity to trap physics:
//! dipole light shift, photon scattering rate and recoil energy.
//!
//! The light shift uses the two-line (D2 + D1) rotating-wave model with the
//! usual 2:1 line-strength weighting, normalized so that with the D1 term
//! dropped it reduces to the single-line expression
//! `U = ħ Γ² I / (8 I_sat Δ_D2)`. Counter-rotating terms are omitted.

use crate::constants::{ATOMIC_MASS, BOLTZMANN, HBAR, PLANCK, SPEED_OF_LIGHT, TAU};
use crate::error::{Error, Result};
use alloc::string::String;
use alloc::{format, string::ToString};

/// Spectroscopic constants of one alkali species. All fields SI.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    /// Atomic mass, kg.
    pub mass: f64,
    /// D2 line (nS₁∕₂ → nP₃∕₂) wavelength, m.
    pub d2_wavelength: f64,
    /// D1 line (nS₁∕₂ → nP₁∕₂) wavelength, m.
    pub d1_wavelength: f64,
    /// D2 natural linewidth, angular (rad/s).
    pub d2_linewidth: f64,
    /// D1 natural linewidth, angular (rad/s).
    pub d1_linewidth: f64,
    /// D2 saturation intensity, W/m².
    pub saturation_intensity_d2: f64,
    pub label: String,
}

impl AtomSpecies {
    /// Reference values for ⁸⁵Rb.
    pub fn rb85() -> Self {
        AtomSpecies {
            mass: 84.9118 * ATOMIC_MASS,
            d2_wavelength: 780.24e-9,
            d1_wavelength: 794.98e-9,
            d2_linewidth: TAU * 6.07e6,
            d1_linewidth: TAU * 5.75e6,
            saturation_intensity_d2: 16.7,
            label: "Rb-85".to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("mass", self.mass),
            ("d2_wavelength", self.d2_wavelength),
            ("d1_wavelength", self.d1_wavelength),
            ("d2_linewidth", self.d2_linewidth),
            ("d1_linewidth", self.d1_linewidth),
            ("saturation_intensity_d2", self.saturation_intensity_d2),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "species.{name} must be strictly positive, got {value}"
                )));
            }
        }
        if self.d1_wavelength <= self.d2_wavelength {
            return Err(Error::InvalidInput(
                "species.d1_wavelength must exceed d2_wavelength".to_string(),
            ));
        }
        Ok(())
    }
}

/// Laser detuning from the two D lines, angular (rad/s). Negative = red.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detuning {
    pub delta_d2: f64,
    pub delta_d1: f64,
}

impl Detuning {
    /// Detunings of a laser at `wavelength` from both lines,
    /// Δ = 2πc(1/λ_laser − 1/λ_line).
    pub fn for_wavelength(species: &AtomSpecies, wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0) || !wavelength.is_finite() {
            return Err(Error::InvalidInput(format!(
                "laser wavelength must be positive, got {wavelength}"
            )));
        }
        let line = |lambda_line: f64| TAU * SPEED_OF_LIGHT * (1.0 / wavelength - 1.0 / lambda_line);
        Ok(Detuning {
            delta_d2: line(species.d2_wavelength),
            delta_d1: line(species.d1_wavelength),
        })
    }
}

/// Detunings for a laser placed `delta_lambda_below_d2` in wavelength above
/// (i.e. red of) the D2 line.
pub fn detuning_from_offset(species: &AtomSpecies, delta_lambda_below_d2: f64) -> Result<Detuning> {
    let wavelength = species.d2_wavelength + delta_lambda_below_d2;
    if !(wavelength > 0.0) {
        return Err(Error::InvalidInput(format!(
            "wavelength offset {delta_lambda_below_d2} m puts the laser at a non-positive wavelength"
        )));
    }
    Detuning::for_wavelength(species, wavelength)
}

/// Light shift per unit intensity, J/(W/m²). Linear in intensity by
/// construction; the full shift is `potential_per_intensity(..) * I`.
pub fn potential_per_intensity(species: &AtomSpecies, detuning: &Detuning) -> Result<f64> {
    if detuning.delta_d2 == 0.0 || detuning.delta_d1 == 0.0 {
        return Err(Error::ResonantLight);
    }
    let gamma = species.d2_linewidth;
    let prefactor = HBAR * gamma * gamma / (8.0 * species.saturation_intensity_d2);
    Ok(prefactor * (1.0 / detuning.delta_d2 + 1.0 / (2.0 * detuning.delta_d1)))
}

/// Photon scattering rate per unit intensity, (1/s)/(W/m²). Same line
/// weighting as the potential with 1/Δ² per line; always ≥ 0.
pub fn scattering_per_intensity(species: &AtomSpecies, detuning: &Detuning) -> Result<f64> {
    if detuning.delta_d2 == 0.0 || detuning.delta_d1 == 0.0 {
        return Err(Error::ResonantLight);
    }
    let gamma = species.d2_linewidth;
    let prefactor = gamma * gamma * gamma / (8.0 * species.saturation_intensity_d2);
    let d2 = detuning.delta_d2;
    let d1 = detuning.delta_d1;
    Ok(prefactor * (1.0 / (d2 * d2) + 1.0 / (2.0 * d1 * d1)))
}

/// Dipole potential of an atom in light of the given intensity, J.
/// Negative for red detuning (attractive), positive for blue.
pub fn dipole_potential(species: &AtomSpecies, detuning: &Detuning, intensity: f64) -> Result<f64> {
    if !(intensity >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "intensity must be non-negative, got {intensity}"
        )));
    }
    Ok(potential_per_intensity(species, detuning)? * intensity)
}

/// Spontaneous photon scattering rate at the given intensity, 1/s.
pub fn scattering_rate(species: &AtomSpecies, detuning: &Detuning, intensity: f64) -> Result<f64> {
    if !(intensity >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "intensity must be non-negative, got {intensity}"
        )));
    }
    Ok(scattering_per_intensity(species, detuning)? * intensity)
}

/// Photon recoil energy E_rec = ħ²k²/2m at the given wavelength, J.
pub fn recoil_energy(species: &AtomSpecies, wavelength: f64) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidInput(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let k = TAU / wavelength;
    Ok(HBAR * HBAR * k * k / (2.0 * species.mass))
}

/// Recoil frequency ν_rec = E_rec/h, Hz.
pub fn recoil_frequency(species: &AtomSpecies, wavelength: f64) -> Result<f64> {
    Ok(recoil_energy(species, wavelength)? / PLANCK)
}

/// Convenience: J → mK via |U|/k_B.
pub fn joules_to_millikelvin(energy: f64) -> f64 {
    energy / BOLTZMANN * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::FloatExt;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(a.abs())
    }

    fn peak_intensity(power: f64, waist: f64) -> f64 {
        2.0 * power / (core::f64::consts::PI * waist * waist)
    }

    #[test]
    fn rb85_invariants_hold() {
        let rb = AtomSpecies::rb85();
        rb.validate().unwrap();
        assert!(rb.d1_wavelength > rb.d2_wavelength);
    }

    #[test]
    fn validate_rejects_nonpositive_fields() {
        let mut rb = AtomSpecies::rb85();
        rb.mass = 0.0;
        assert!(matches!(rb.validate(), Err(Error::InvalidInput(_))));
        let mut rb = AtomSpecies::rb85();
        rb.d1_wavelength = rb.d2_wavelength;
        assert!(rb.validate().is_err());
    }

    // Oracle: two-frequency difference 2πc(1/λ_laser − 1/λ_line), evaluated
    // independently by calculator. 0.4 nm below D2 → −2π·196.88 GHz.
    #[test]
    fn detuning_at_0p4_nm_offset() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 0.4e-9).unwrap();
        assert!(rel_close(det.delta_d2, -1.237034e12, 1e-4), "{}", det.delta_d2);
        // The laser sits between the lines, so it is blue of D1.
        assert!(rel_close(det.delta_d1, 4.352539e13, 1e-4), "{}", det.delta_d1);
        assert!(det.delta_d2 < 0.0);
    }

    #[test]
    fn detuning_at_zero_offset_is_resonant() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 0.0).unwrap();
        assert_eq!(det.delta_d2, 0.0);
        assert!(dipole_potential(&rb, &det, 1.0).is_err());
    }

    // 45 nm below D2 puts the laser at 825.24 nm, red of both lines.
    #[test]
    fn detuning_at_45_nm_offset() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 45e-9).unwrap();
        assert!(rel_close(det.delta_d2, -1.316451e14, 1e-4), "{}", det.delta_d2);
        assert!(rel_close(det.delta_d1, -8.688264e13, 1e-4), "{}", det.delta_d1);
        assert!(det.delta_d2 < 0.0 && det.delta_d1 < 0.0);
    }

    #[test]
    fn detuning_rejects_nonpositive_wavelength() {
        let rb = AtomSpecies::rb85();
        assert!(detuning_from_offset(&rb, -800e-9).is_err());
    }

    // 3 mW per trap focused to 7 µm, 0.4 nm red of D2: the well is
    // 2.58 mK deep (hand-evaluated two-line formula).
    #[test]
    fn depth_matches_reference_trap() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 0.4e-9).unwrap();
        let intensity = peak_intensity(3e-3, 7e-6);
        let u = dipole_potential(&rb, &det, intensity).unwrap();
        assert!(rel_close(u, -3.566274e-26, 1e-4), "{u}");
        let mk = joules_to_millikelvin(u).abs();
        assert!((mk - 2.5).abs() / 2.5 < 0.30, "depth {mk} mK vs 2.5 mK ± 30%");
    }

    #[test]
    fn zero_intensity_means_zero_shift() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 1.0e-9).unwrap();
        assert_eq!(dipole_potential(&rb, &det, 0.0).unwrap(), 0.0);
        assert_eq!(scattering_rate(&rb, &det, 0.0).unwrap(), 0.0);
    }

    // Hand evaluation of the same formula at 825 nm, 50 mW, 7 µm waist.
    #[test]
    fn depth_at_825_nm() {
        let rb = AtomSpecies::rb85();
        let det = Detuning::for_wavelength(&rb, 825e-9).unwrap();
        let u = dipole_potential(&rb, &det, peak_intensity(50e-3, 7e-6)).unwrap();
        assert!(rel_close(u, -1.001989e-26, 1e-4), "{u}");
    }

    #[test]
    fn potential_is_linear_in_intensity() {
        let rb = AtomSpecies::rb85();
        let det = detuning_from_offset(&rb, 0.7e-9).unwrap();
        let u1 = dipole_potential(&rb, &det, 1.37e7).unwrap();
        let u2 = dipole_potential(&rb, &det, 2.0 * 1.37e7).unwrap();
        assert_eq!(u2, 2.0 * u1);
    }

    #[test]
    fn sign_follows_detuning() {
        let rb = AtomSpecies::rb85();
        let mut state = 0x9e3779b97f4a7c15u64;
        for _ in 0..50 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let frac = (state >> 11) as f64 / (1u64 << 53) as f64;
            let red = Detuning::for_wavelength(&rb, 800e-9 + 100e-9 * frac).unwrap();
            assert!(dipole_potential(&rb, &red, 1e6).unwrap() < 0.0);
            let blue = Detuning::for_wavelength(&rb, 700e-9 + 70e-9 * frac).unwrap();
            assert!(dipole_potential(&rb, &blue, 1e6).unwrap() > 0.0);
        }
    }

    // |U|·|Δ_D2| at fixed intensity. The D1 admixture (opposite sign between
    // the lines) moves this product by up to ~8% across 0.2–2 nm; with the D1
    // line pushed far away the single-line 1/Δ law is exact to a fraction of
    // a percent.
    #[test]
    fn ratio_law_in_single_line_regime() {
        let rb = AtomSpecies::rb85();
        let product = |species: &AtomSpecies, dl: f64| {
            let det = detuning_from_offset(species, dl).unwrap();
            dipole_potential(species, &det, 1e7).unwrap().abs() * det.delta_d2.abs()
        };
        let offsets = [0.2e-9, 0.5e-9, 0.9e-9, 1.4e-9, 2.0e-9];
        let base = product(&rb, offsets[0]);
        for &dl in &offsets[1..] {
            let p = product(&rb, dl);
            assert!((p - base).abs() / base < 0.085, "spread {} at {dl}", (p - base) / base);
        }
        let mut far_d1 = rb.clone();
        far_d1.d1_wavelength = 3000e-9;
        let base = product(&far_d1, offsets[0]);
        for &dl in &offsets[1..] {
            let p = product(&far_d1, dl);
            assert!((p - base).abs() / base < 0.005, "spread {} at {dl}", (p - base) / base);
        }
    }

    // Γ_sc/|U| = Γ/(ħ|Δ_D2|) within 10% while the D2 term dominates.
    #[test]
    fn scattering_to_depth_figure_of_merit() {
        let rb = AtomSpecies::rb85();
        for dl in [0.2e-9, 0.6e-9, 1.0e-9, 1.5e-9] {
            let det = detuning_from_offset(&rb, dl).unwrap();
            let u = dipole_potential(&rb, &det, 1e7).unwrap().abs();
            let g = scattering_rate(&rb, &det, 1e7).unwrap();
            let expected = rb.d2_linewidth / (HBAR * det.delta_d2.abs());
            assert!(
                rel_close(g / u, expected, 0.10),
                "fom {} vs {} at {dl}",
                g / u,
                expected
            );
        }
    }

    // 50 mW / 7 µm at 825 nm scatters at ~34/s: 1/Γ_sc ≈ 30 ms,
    // within a factor of 2 of 50 ms.
    #[test]
    fn scattering_time_at_825_nm() {
        let rb = AtomSpecies::rb85();
        let det = Detuning::for_wavelength(&rb, 825e-9).unwrap();
        let rate = scattering_rate(&rb, &det, peak_intensity(50e-3, 7e-6)).unwrap();
        assert!(rel_close(rate, 33.8665, 1e-3), "{rate}");
        let tau = 1.0 / rate;
        assert!(tau > 0.025 && tau < 0.100, "tau {tau}");
    }

    // 1 mW / 1 µm at 850 nm: 1/Γ_sc ≈ 81 ms, within a factor of 2 of 150 ms.
    #[test]
    fn scattering_time_at_850_nm() {
        let rb = AtomSpecies::rb85();
        let det = Detuning::for_wavelength(&rb, 850e-9).unwrap();
        let rate = scattering_rate(&rb, &det, peak_intensity(1e-3, 1e-6)).unwrap();
        assert!(rel_close(rate, 12.3528, 1e-3), "{rate}");
        let tau = 1.0 / rate;
        assert!(tau > 0.075 && tau < 0.300, "tau {tau}");
    }

    // ν_rec(780 nm) = 3.862 kHz, hand-evaluated ħ²k²/(2mh).
    #[test]
    fn recoil_frequency_at_780_nm() {
        let rb = AtomSpecies::rb85();
        let nu = recoil_frequency(&rb, 780e-9).unwrap();
        assert!(rel_close(nu, 3862.07, 1e-4), "{nu}");
    }

    #[test]
    fn recoil_scales_inversely_with_mass() {
        let rb = AtomSpecies::rb85();
        let mut heavy = rb.clone();
        heavy.mass *= 1e6;
        let e = recoil_energy(&rb, 780e-9).unwrap();
        let e_heavy = recoil_energy(&heavy, 780e-9).unwrap();
        assert!(rel_close(e_heavy, e / 1e6, 1e-12));
    }

    #[test]
    fn recoil_quarter_at_doubled_wavelength() {
        let rb = AtomSpecies::rb85();
        let e780 = recoil_energy(&rb, 780e-9).unwrap();
        let e1560 = recoil_energy(&rb, 1560e-9).unwrap();
        assert!(rel_close(e1560, e780 / 4.0, 1e-12));
    }
}
