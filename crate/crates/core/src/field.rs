//! The summed trap potential: per-focus light shift coefficients applied to
//! the Gaussian intensity field.
//!
//! The light shift is linear in intensity, so the total potential is a
//! per-site coefficient (J per W/m², fixed by that site's wavelength) times
//! the site intensity, summed over sites. The gradient is analytic via the
//! per-focus intensity gradient.

use crate::error::Result;
use crate::optics::{gaussian_intensity_and_gradient, FocusSite};
use crate::species::{potential_per_intensity, scattering_per_intensity, AtomSpecies, Detuning};
use crate::vec3::Vec3;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
struct SiteTerm {
    focus: FocusSite,
    /// J per (W/m²) — negative for red detuning.
    u_per_intensity: f64,
    /// (1/s) per (W/m²).
    gamma_per_intensity: f64,
}

/// Species + focus set, with precomputed light-shift coefficients.
#[derive(Debug, Clone)]
pub struct TrapField {
    species: AtomSpecies,
    terms: Vec<SiteTerm>,
}

impl TrapField {
    pub fn new(species: AtomSpecies, foci: Vec<FocusSite>) -> Result<Self> {
        species.validate()?;
        let mut terms = Vec::with_capacity(foci.len());
        for focus in foci {
            let detuning = Detuning::for_wavelength(&species, focus.wavelength)?;
            terms.push(SiteTerm {
                u_per_intensity: potential_per_intensity(&species, &detuning)?,
                gamma_per_intensity: scattering_per_intensity(&species, &detuning)?,
                focus,
            });
        }
        Ok(TrapField { species, terms })
    }

    pub fn species(&self) -> &AtomSpecies {
        &self.species
    }

    pub fn site_count(&self) -> usize {
        self.terms.len()
    }

    pub fn sites(&self) -> impl Iterator<Item = &FocusSite> {
        self.terms.iter().map(|t| &t.focus)
    }

    pub fn site(&self, index: usize) -> Option<&FocusSite> {
        self.terms.get(index).map(|t| &t.focus)
    }

    /// Light-shift coefficient of one site, J per (W/m²).
    pub fn site_potential_coefficient(&self, index: usize) -> f64 {
        self.terms[index].u_per_intensity
    }

    /// Total dipole potential at `point`, J.
    pub fn potential(&self, point: Vec3) -> f64 {
        self.terms
            .iter()
            .map(|t| t.u_per_intensity * gaussian_intensity_and_gradient(&t.focus, point).0)
            .sum()
    }

    /// Total potential and its gradient at `point`.
    pub fn potential_and_gradient(&self, point: Vec3) -> (f64, Vec3) {
        let mut u = 0.0;
        let mut grad = Vec3::ZERO;
        for t in &self.terms {
            let (intensity, g) = gaussian_intensity_and_gradient(&t.focus, point);
            u += t.u_per_intensity * intensity;
            grad += g * t.u_per_intensity;
        }
        (u, grad)
    }

    /// Force −∇U at `point`, N.
    pub fn force(&self, point: Vec3) -> Vec3 {
        -self.potential_and_gradient(point).1
    }

    /// Total photon scattering rate at `point`, 1/s.
    pub fn scattering_rate_at(&self, point: Vec3) -> f64 {
        self.terms
            .iter()
            .map(|t| t.gamma_per_intensity * gaussian_intensity_and_gradient(&t.focus, point).0)
            .sum()
    }

    /// True if the point lies within `radii` × w(z) (the local beam width)
    /// of any site center.
    pub fn near_any_site(&self, point: Vec3, radii: f64) -> bool {
        self.terms.iter().any(|t| {
            let rel = point - t.focus.center;
            let w = t.focus.width_at(rel.z);
            rel.norm_sq() <= radii * radii * w * w
        })
    }
}
