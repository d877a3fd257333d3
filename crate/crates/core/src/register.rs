//! Qubit-register state machine over trap sites: population-level loading,
//! optical pumping between the hyperfine ground states, site-selective
//! removal, and state-selective fluorescence readout.
//!
//! Register values are immutable snapshots; every operation returns a new
//! state and appends to the provenance log.

use crate::dynamics::{Ensemble, HyperfineState};
use crate::error::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Occupation of one site. `Empty` if and only if the count is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteContent {
    Empty,
    F2,
    F3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegisterSite {
    pub site_id: usize,
    pub atom_count: u64,
    pub state: SiteContent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    pub sites: Vec<RegisterSite>,
    /// Applied-operation provenance, one line per operation.
    pub log: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteSelector {
    One(usize),
    All,
}

/// Per-site readout signal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiteSignal {
    pub site_id: usize,
    pub signal: f64,
    /// The site scatters but holds fewer atoms than the detectability
    /// threshold; reported as zero signal.
    pub below_threshold: bool,
}

fn content_for(count: u64, state: SiteContent) -> SiteContent {
    if count == 0 {
        SiteContent::Empty
    } else {
        state
    }
}

/// Fresh register: every non-empty site starts in F2.
pub fn load_register(per_site_counts: &[u64]) -> RegisterState {
    let sites = per_site_counts
        .iter()
        .enumerate()
        .map(|(site_id, &atom_count)| RegisterSite {
            site_id,
            atom_count,
            state: content_for(atom_count, SiteContent::F2),
        })
        .collect();
    RegisterState {
        sites,
        log: alloc::vec![format!("load {} sites", per_site_counts.len())],
    }
}

/// Derive a register snapshot from a live ensemble: alive atoms per site,
/// labeled by the site's majority internal state (ties resolve to F2).
pub fn register_from_ensemble(ensemble: &Ensemble, site_count: usize) -> RegisterState {
    let mut counts = alloc::vec![(0u64, 0u64); site_count]; // (f2, f3)
    for atom in ensemble.atoms.iter().filter(|a| a.alive) {
        if let Some(site) = atom.site_id {
            if site < site_count {
                match atom.internal_state {
                    HyperfineState::F2 => counts[site].0 += 1,
                    HyperfineState::F3 => counts[site].1 += 1,
                }
            }
        }
    }
    let sites = counts
        .iter()
        .enumerate()
        .map(|(site_id, &(f2, f3))| {
            let total = f2 + f3;
            let state = if f3 > f2 { SiteContent::F3 } else { SiteContent::F2 };
            RegisterSite { site_id, atom_count: total, state: content_for(total, state) }
        })
        .collect();
    RegisterState { sites, log: alloc::vec![format!("load from ensemble ({site_count} sites)")] }
}

impl RegisterState {
    fn with_log(&self, entry: String) -> RegisterState {
        let mut next = self.clone();
        next.log.push(entry);
        next
    }

    /// Transfer the selected non-empty sites to F3. Selecting an empty site
    /// (or an all-empty register) is a no-op recorded as a warning.
    pub fn pump(&self, selector: SiteSelector) -> Result<RegisterState> {
        match selector {
            SiteSelector::One(site_id) => {
                if site_id >= self.sites.len() {
                    return Err(Error::UnknownSite(site_id));
                }
                let mut next = self.with_log(format!("pump site {site_id}"));
                if next.sites[site_id].state == SiteContent::Empty {
                    next.log.push(format!("warning: pump on empty site {site_id} is a no-op"));
                } else {
                    next.sites[site_id].state = SiteContent::F3;
                }
                Ok(next)
            }
            SiteSelector::All => {
                let mut next = self.with_log("pump all sites".into());
                let mut any = false;
                for site in next.sites.iter_mut() {
                    if site.state != SiteContent::Empty {
                        site.state = SiteContent::F3;
                        any = true;
                    }
                }
                if !any {
                    next.log.push("warning: pump on empty register is a no-op".into());
                }
                Ok(next)
            }
        }
    }

    /// Empty one site; all others are untouched. Removing an empty site is a
    /// no-op.
    pub fn remove(&self, site_id: usize) -> Result<RegisterState> {
        if site_id >= self.sites.len() {
            return Err(Error::UnknownSite(site_id));
        }
        let mut next = self.with_log(format!("remove site {site_id}"));
        next.sites[site_id].atom_count = 0;
        next.sites[site_id].state = SiteContent::Empty;
        Ok(next)
    }

    /// State-selective fluorescence readout. With the repumper on every
    /// non-empty site scatters; with it off only F3 sites do. Scattering
    /// sites below `detectability_threshold` atoms report zero signal with a
    /// below-threshold flag. Pure: the register value is unchanged.
    pub fn readout(
        &self,
        repump_on: bool,
        detection_efficiency: f64,
        detectability_threshold: u64,
    ) -> Vec<SiteSignal> {
        self.sites
            .iter()
            .map(|site| {
                let scatters = match site.state {
                    SiteContent::Empty => false,
                    SiteContent::F3 => true,
                    SiteContent::F2 => repump_on,
                };
                if !scatters {
                    SiteSignal { site_id: site.site_id, signal: 0.0, below_threshold: false }
                } else if site.atom_count < detectability_threshold {
                    SiteSignal { site_id: site.site_id, signal: 0.0, below_threshold: true }
                } else {
                    SiteSignal {
                        site_id: site.site_id,
                        signal: detection_efficiency * site.atom_count as f64,
                        below_threshold: false,
                    }
                }
            })
            .collect()
    }
}
