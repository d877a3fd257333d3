//! Microlens-array geometry and the Gaussian focus field.
//!
//! One illumination beam sent through the lens array produces one focus per
//! illuminated lenslet, on a regular grid with the lens pitch. Tilting the
//! beam by θ shifts the whole grid transversely by f·tan θ (thin-lens model),
//! which is how two interleaved trap arrays with adjustable separation are
//! produced. Beams carry one of two orthogonal polarization tags and add in
//! intensity, never in amplitude.

use crate::error::{Error, Result};
use crate::math::FloatExt;
use crate::vec3::Vec3;
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Paraxial validity bound on beam tilt angles, rad.
pub const PARAXIAL_LIMIT: f64 = 0.2;

/// Gaussian tail exponent beyond which a focus contributes nothing
/// representable relative to nearby peaks (e^-250 ≈ 1e-109) and is skipped.
pub(crate) const EXP_ARG_CUTOFF: f64 = 250.0;

/// Orthogonal linear polarization tags; two beams with distinct tags do not
/// interfere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarization {
    Horizontal,
    Vertical,
}

/// Which of the two interleaved arrays a focus belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrayId {
    First,
    Second,
}

impl ArrayId {
    pub fn as_str(self) -> &'static str {
        match self {
            ArrayId::First => "I",
            ArrayId::Second => "II",
        }
    }
}

/// Transverse axis along which a tilted beam displaces its focus grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TiltAxis {
    X,
    Y,
}

/// The illuminated region of the microlens array.
#[derive(Debug, Clone, PartialEq)]
pub struct LensArrayGeometry {
    /// Lenslet center-to-center pitch, m.
    pub pitch: f64,
    /// Lenslet focal length, m.
    pub focal_length: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major illumination mask, length rows × cols.
    pub illuminated_mask: Vec<bool>,
    /// Optional per-lenslet relative power weights (illumination envelope),
    /// row-major, length rows × cols. `None` means uniform.
    pub lenslet_weights: Option<Vec<f64>>,
    /// Overall optical transmission folded into every focus power.
    pub transmission: f64,
}

impl LensArrayGeometry {
    /// Fully illuminated rows × cols sub-array with unit transmission.
    pub fn uniform(pitch: f64, focal_length: f64, rows: usize, cols: usize) -> Self {
        LensArrayGeometry {
            pitch,
            focal_length,
            rows,
            cols,
            illuminated_mask: alloc::vec![true; rows * cols],
            lenslet_weights: None,
            transmission: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pitch > 0.0) {
            return Err(Error::InvalidInput("lens pitch must be positive".to_string()));
        }
        if !(self.focal_length > 0.0) {
            return Err(Error::InvalidInput("focal_length must be positive".to_string()));
        }
        if self.illuminated_mask.len() != self.rows * self.cols {
            return Err(Error::InvalidInput(format!(
                "illuminated_mask has {} entries, expected rows*cols = {}",
                self.illuminated_mask.len(),
                self.rows * self.cols
            )));
        }
        if let Some(w) = &self.lenslet_weights {
            if w.len() != self.rows * self.cols {
                return Err(Error::InvalidInput("lenslet_weights length mismatch".to_string()));
            }
            if w.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidInput("lenslet_weights must be non-negative".to_string()));
            }
        }
        if !(self.transmission > 0.0 && self.transmission <= 1.0) {
            return Err(Error::InvalidInput("transmission must be in (0, 1]".to_string()));
        }
        Ok(())
    }
}

/// One beam illuminating the lens array.
#[derive(Debug, Clone, PartialEq)]
pub struct IlluminationBeam {
    /// Total power over all illuminated lenslets, W.
    pub total_power: f64,
    /// Laser wavelength, m.
    pub wavelength: f64,
    /// Tilt relative to the lens-array normal, rad.
    pub tilt_angle: f64,
    /// Transverse axis of the resulting grid displacement.
    pub tilt_axis: TiltAxis,
    pub polarization: Polarization,
    /// 1/e² intensity radius of each resulting focus, m.
    pub focus_waist: f64,
}

impl IlluminationBeam {
    pub fn validate(&self) -> Result<()> {
        if !(self.total_power >= 0.0) {
            return Err(Error::InvalidInput("beam total_power must be non-negative".to_string()));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::InvalidInput("beam wavelength must be positive".to_string()));
        }
        if !(self.focus_waist > 0.0) {
            return Err(Error::InvalidInput("beam focus_waist must be positive".to_string()));
        }
        if !(self.tilt_angle.abs() < PARAXIAL_LIMIT) {
            return Err(Error::InvalidInput(format!(
                "tilt_angle {} rad exceeds the paraxial bound {} rad",
                self.tilt_angle, PARAXIAL_LIMIT
            )));
        }
        Ok(())
    }
}

/// A single Gaussian focus behind one lenslet.
#[derive(Debug, Clone, PartialEq)]
pub struct FocusSite {
    pub site_id: usize,
    pub array_id: ArrayId,
    /// 1-based lenslet indices.
    pub row: usize,
    pub col: usize,
    /// Focus center, m. The beam axis is z.
    pub center: Vec3,
    /// 1/e² intensity radius at focus, m.
    pub waist: f64,
    /// Optical power in this focus, W.
    pub power: f64,
    pub wavelength: f64,
    pub polarization: Polarization,
}

impl FocusSite {
    /// Rayleigh range πw₀²/λ, m.
    pub fn rayleigh_range(&self) -> f64 {
        PI * self.waist * self.waist / self.wavelength
    }

    /// Peak intensity 2P/(πw₀²), W/m².
    pub fn peak_intensity(&self) -> f64 {
        2.0 * self.power / (PI * self.waist * self.waist)
    }

    /// 1/e² radius at axial distance `z` from the focus, m.
    pub fn width_at(&self, z: f64) -> f64 {
        let zr = self.rayleigh_range();
        self.waist * (1.0 + (z / zr) * (z / zr)).sqrt()
    }
}

/// Expand one beam into its set of Gaussian foci, one per illuminated
/// lenslet. Site ids are assigned consecutively starting at `id_offset`.
pub fn expand_foci(
    geometry: &LensArrayGeometry,
    beam: &IlluminationBeam,
    array_id: ArrayId,
    id_offset: usize,
) -> Result<Vec<FocusSite>> {
    geometry.validate()?;
    beam.validate()?;
    let illuminated: Vec<usize> =
        (0..geometry.illuminated_mask.len()).filter(|&i| geometry.illuminated_mask[i]).collect();
    if illuminated.is_empty() {
        return Err(Error::EmptyMask);
    }

    let weight_of = |idx: usize| geometry.lenslet_weights.as_ref().map_or(1.0, |w| w[idx]);
    let total_weight: f64 = illuminated.iter().map(|&i| weight_of(i)).sum();
    if !(total_weight > 0.0) {
        return Err(Error::InvalidInput(
            "all illuminated lenslets carry zero weight".to_string(),
        ));
    }

    let shift = geometry.focal_length * beam.tilt_angle.tan();
    let (dx, dy) = match beam.tilt_axis {
        TiltAxis::X => (shift, 0.0),
        TiltAxis::Y => (0.0, shift),
    };
    let x0 = -0.5 * (geometry.cols as f64 - 1.0) * geometry.pitch;
    let y0 = -0.5 * (geometry.rows as f64 - 1.0) * geometry.pitch;

    let mut sites = Vec::with_capacity(illuminated.len());
    for (n, &idx) in illuminated.iter().enumerate() {
        let row = idx / geometry.cols;
        let col = idx % geometry.cols;
        sites.push(FocusSite {
            site_id: id_offset + n,
            array_id,
            row: row + 1,
            col: col + 1,
            center: Vec3::new(
                x0 + col as f64 * geometry.pitch + dx,
                y0 + row as f64 * geometry.pitch + dy,
                0.0,
            ),
            waist: beam.focus_waist,
            power: beam.total_power * geometry.transmission * weight_of(idx) / total_weight,
            wavelength: beam.wavelength,
            polarization: beam.polarization,
        });
    }
    Ok(sites)
}

/// Intensity of one focus at `point`, W/m²:
/// I(r,z) = 2P/(πw(z)²)·exp(−2r²/w(z)²) with w(z) = w₀√(1+(z/z_R)²).
pub fn gaussian_intensity(site: &FocusSite, point: Vec3) -> f64 {
    gaussian_intensity_and_gradient(site, point).0
}

/// Intensity and its spatial gradient at `point`.
pub fn gaussian_intensity_and_gradient(site: &FocusSite, point: Vec3) -> (f64, Vec3) {
    let rel = point - site.center;
    let zr = site.rayleigh_range();
    let axial = 1.0 + (rel.z / zr) * (rel.z / zr);
    let w_sq = site.waist * site.waist * axial;
    let r_sq = rel.x * rel.x + rel.y * rel.y;
    let arg = 2.0 * r_sq / w_sq;
    if arg > EXP_ARG_CUTOFF {
        return (0.0, Vec3::ZERO);
    }
    let intensity = 2.0 * site.power / (PI * w_sq) * (-arg).exp();
    // dI/dx = −4x/w² · I ; dI/dz via dw²/dz = 2z·w0²/z_R².
    let transverse = -4.0 * intensity / w_sq;
    let dwsq_dz = 2.0 * rel.z * site.waist * site.waist / (zr * zr);
    let di_dwsq = intensity * (2.0 * r_sq - w_sq) / (w_sq * w_sq);
    (
        intensity,
        Vec3::new(transverse * rel.x, transverse * rel.y, di_dwsq * dwsq_dz),
    )
}

/// Total intensity of a focus set: a scalar sum, with no interference cross
/// terms (orthogonal polarizations between beams; negligible overlap within
/// one beam).
pub fn total_intensity(sites: &[FocusSite], point: Vec3) -> f64 {
    sites.iter().map(|s| gaussian_intensity(s, point)).sum()
}

/// Transverse separation of the two focus grids for beams tilted by θ₁ and
/// θ₂: f·|tan θ₁ − tan θ₂|.
pub fn pair_separation(geometry: &LensArrayGeometry, theta1: f64, theta2: f64) -> Result<f64> {
    for theta in [theta1, theta2] {
        if !(theta.abs() < PARAXIAL_LIMIT) {
            return Err(Error::InvalidInput(format!(
                "angle {theta} rad exceeds the paraxial bound {PARAXIAL_LIMIT} rad"
            )));
        }
    }
    Ok(geometry.focal_length * (theta1.tan() - theta2.tan()).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn beam(power: f64, waist: f64) -> IlluminationBeam {
        IlluminationBeam {
            total_power: power,
            wavelength: 780.64e-9,
            tilt_angle: 0.0,
            tilt_axis: TiltAxis::Y,
            polarization: Polarization::Horizontal,
            focus_waist: waist,
        }
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(a.abs())
    }

    #[test]
    fn four_by_twenty_mask_gives_80_sites_on_grid() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 4, 20);
        let sites = expand_foci(&geom, &beam(240e-3, 7e-6), ArrayId::First, 0).unwrap();
        assert_eq!(sites.len(), 80);
        for s in &sites {
            assert!(rel_close(s.power, 3e-3, 1e-12));
            assert_eq!(s.center.z, 0.0);
        }
        // Neighbors along a row are one pitch apart.
        for row in 0..4 {
            for col in 0..19 {
                let a = &sites[row * 20 + col];
                let b = &sites[row * 20 + col + 1];
                assert!(rel_close(b.center.x - a.center.x, 125e-6, 1e-12));
                assert_eq!(a.center.y, b.center.y);
            }
        }
    }

    #[test]
    fn tilt_displaces_grid_by_f_tan_theta() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 2, 2);
        let straight = expand_foci(&geom, &beam(1e-3, 7e-6), ArrayId::First, 0).unwrap();
        let mut tilted_beam = beam(1e-3, 7e-6);
        tilted_beam.tilt_angle = 0.072;
        let tilted = expand_foci(&geom, &tilted_beam, ArrayId::Second, 4).unwrap();
        let expected = 625e-6 * 0.072f64.tan();
        assert!(rel_close(expected, 45.078e-6, 1e-4));
        for (a, b) in straight.iter().zip(&tilted) {
            assert!(rel_close(b.center.y - a.center.y, expected, 1e-12));
            assert_eq!(a.center.x, b.center.x);
        }
    }

    #[test]
    fn single_row_is_collinear() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 8);
        let sites = expand_foci(&geom, &beam(24e-3, 7e-6), ArrayId::First, 0).unwrap();
        assert_eq!(sites.len(), 8);
        assert!(sites.iter().all(|s| s.center.y == sites[0].center.y));
        assert!(sites.iter().all(|s| rel_close(s.power, 3e-3, 1e-12)));
    }

    #[test]
    fn empty_mask_is_a_configuration_error() {
        let mut geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 8);
        geom.illuminated_mask = vec![false; 8];
        assert_eq!(
            expand_foci(&geom, &beam(1e-3, 7e-6), ArrayId::First, 0),
            Err(Error::EmptyMask)
        );
    }

    #[test]
    fn excessive_tilt_is_rejected() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 2);
        let mut b = beam(1e-3, 7e-6);
        b.tilt_angle = 0.25;
        assert!(expand_foci(&geom, &b, ArrayId::First, 0).is_err());
    }

    // Direct formula oracle: I(0,0) = 2·3 mW/(π·(7 µm)²) = 3.8977e7 W/m².
    #[test]
    fn peak_intensity_value() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let sites = expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap();
        let i0 = gaussian_intensity(&sites[0], sites[0].center);
        assert!(rel_close(i0, 3.897672e7, 1e-5), "{i0}");
    }

    #[test]
    fn waist_and_rayleigh_definitions() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let site = &expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap()[0];
        let i0 = gaussian_intensity(site, site.center);
        let at_waist = gaussian_intensity(site, site.center + Vec3::new(7e-6, 0.0, 0.0));
        assert!(rel_close(at_waist, i0 * (-2.0f64).exp(), 1e-12));
        let at_zr = gaussian_intensity(site, site.center + Vec3::new(0.0, 0.0, site.rayleigh_range()));
        assert!(rel_close(at_zr, i0 / 2.0, 1e-12));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let site = &expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap()[0];
        let p = site.center + Vec3::new(2.3e-6, -1.1e-6, 40e-6);
        let (_, grad) = gaussian_intensity_and_gradient(site, p);
        let h = 1e-9;
        let steps = [Vec3::new(h, 0.0, 0.0), Vec3::new(0.0, h, 0.0), Vec3::new(0.0, 0.0, h)];
        let numeric: Vec<f64> = steps
            .iter()
            .map(|&d| (gaussian_intensity(site, p + d) - gaussian_intensity(site, p - d)) / (2.0 * h))
            .collect();
        for (a, n) in grad.as_array().iter().zip(&numeric) {
            assert!(rel_close(*a, *n, 1e-6), "{a} vs {n}");
        }
    }

    #[test]
    fn two_overlapping_foci_double_the_intensity() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let a = expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap();
        let mut b = expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::Second, 1).unwrap();
        b[0].polarization = Polarization::Vertical;
        let both = [a[0].clone(), b[0].clone()];
        for p in [Vec3::ZERO, Vec3::new(3e-6, 1e-6, 20e-6)] {
            let single = gaussian_intensity(&a[0], p);
            assert!(rel_close(total_intensity(&both, p), 2.0 * single, 1e-12));
        }
    }

    // Midpoint of a 45 µm pair at w0 = 7 µm: 2·exp(−2·(22.5/7)²) ≈ 2.1e-9
    // of a single peak.
    #[test]
    fn midpoint_of_separated_pair_is_dark() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let a = expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap();
        let mut b = a.clone();
        b[0].center.y += 45e-6;
        b[0].polarization = Polarization::Vertical;
        let both = [a[0].clone(), b[0].clone()];
        let peak = gaussian_intensity(&a[0], a[0].center);
        let mid = total_intensity(&both, Vec3::new(0.0, 22.5e-6, 0.0));
        assert!(rel_close(mid / peak, 2.1237e-9, 1e-3), "{}", mid / peak);
        assert!(mid / peak < 1e-8);
    }

    #[test]
    fn intensity_is_additive_over_partitions() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 3, 3);
        let sites = expand_foci(&geom, &beam(10e-3, 7e-6), ArrayId::First, 0).unwrap();
        let points = [
            Vec3::new(10e-6, -30e-6, 5e-6),
            Vec3::new(-130e-6, 128e-6, -60e-6),
            Vec3::ZERO,
        ];
        for p in points {
            let whole = total_intensity(&sites, p);
            for split in [1, 4, 7] {
                let parts = total_intensity(&sites[..split], p) + total_intensity(&sites[split..], p);
                assert!(rel_close(whole, parts, 1e-12));
            }
        }
    }

    #[test]
    fn interior_of_large_mask_is_pitch_periodic() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 7, 7);
        let sites = expand_foci(&geom, &beam(49e-3, 7e-6), ArrayId::First, 0).unwrap();
        let offsets = [
            Vec3::new(2e-6, 3e-6, 10e-6),
            Vec3::new(-5e-6, 1e-6, 0.0),
            Vec3::new(0.5e-6, -6e-6, -25e-6),
        ];
        for off in offsets {
            let p = off; // near the central site
            let shifted = p + Vec3::new(125e-6, 0.0, 0.0);
            let a = total_intensity(&sites, p);
            let b = total_intensity(&sites, shifted);
            assert!(rel_close(a, b, 1e-6), "{a} vs {b}");
        }
    }

    #[test]
    fn transverse_integral_recovers_site_power() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        let site = &expand_foci(&geom, &beam(3e-3, 7e-6), ArrayId::First, 0).unwrap()[0];
        // 2π ∫ r I(r,0) dr by trapezoid.
        let dr = 7e-6 / 100.0;
        let mut integral = 0.0;
        let mut prev = 0.0;
        for n in 1..=800 {
            let r = n as f64 * dr;
            let val = r * gaussian_intensity(site, site.center + Vec3::new(r, 0.0, 0.0));
            integral += 0.5 * (prev + val) * dr;
            prev = val;
        }
        integral *= 2.0 * PI;
        assert!(rel_close(integral, 3e-3, 1e-3), "{integral}");
    }

    #[test]
    fn pair_separation_endpoints_and_monotonicity() {
        let geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 1);
        assert_eq!(pair_separation(&geom, 0.031, 0.031).unwrap(), 0.0);
        let d45 = pair_separation(&geom, 0.072, 0.0).unwrap();
        assert!(rel_close(d45, 45.078e-6, 1e-4), "{d45}");
        let d18 = pair_separation(&geom, 0.0288, 0.0).unwrap();
        assert!(rel_close(d18, 18.005e-6, 1e-4), "{d18}");
        let mut last = -1.0;
        for n in 0..40 {
            let theta = 0.199 * n as f64 / 39.0;
            let d = pair_separation(&geom, theta, 0.0).unwrap();
            assert!(d > last);
            last = d;
        }
        assert!(pair_separation(&geom, 0.21, 0.0).is_err());
    }

    #[test]
    fn lenslet_weights_redistribute_power() {
        let mut geom = LensArrayGeometry::uniform(125e-6, 625e-6, 1, 2);
        geom.lenslet_weights = Some(vec![3.0, 1.0]);
        let sites = expand_foci(&geom, &beam(4e-3, 7e-6), ArrayId::First, 0).unwrap();
        assert!(rel_close(sites[0].power, 3e-3, 1e-12));
        assert!(rel_close(sites[1].power, 1e-3, 1e-12));
    }
}
