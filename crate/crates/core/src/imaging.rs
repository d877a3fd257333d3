//! Synthetic fluorescence imaging at the experiment's optical resolution:
//! render per-site signals through an anisotropic Gaussian PSF (the camera
//! views the array at a horizontal tilt, elongating the spots), optionally
//! apply Poisson shot noise, and recover spot positions and strengths.

use crate::error::{Error, Result};
use crate::math::FloatExt;
use crate::rng::{purpose, CounterRng};
use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Pixel grid geometry: `width × height` pixels of physical `pixel_pitch`,
/// with the frame center at (center_x, center_y) in the trap plane.
/// Row 0 is the smallest y.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGeometry {
    pub width: usize,
    pub height: usize,
    pub pixel_pitch: f64,
    pub center_x: f64,
    pub center_y: f64,
}

impl FrameGeometry {
    pub fn pixel_x(&self, col: f64) -> f64 {
        self.center_x + (col - 0.5 * (self.width as f64 - 1.0)) * self.pixel_pitch
    }

    pub fn pixel_y(&self, row: f64) -> f64 {
        self.center_y + (row - 0.5 * (self.height as f64 - 1.0)) * self.pixel_pitch
    }

    pub fn col_of_x(&self, x: f64) -> f64 {
        (x - self.center_x) / self.pixel_pitch + 0.5 * (self.width as f64 - 1.0)
    }

    pub fn row_of_y(&self, y: f64) -> f64 {
        (y - self.center_y) / self.pixel_pitch + 0.5 * (self.height as f64 - 1.0)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidInput("frame must have non-zero size".to_string()));
        }
        if !(self.pixel_pitch > 0.0) {
            return Err(Error::InvalidInput("pixel_pitch must be positive".to_string()));
        }
        Ok(())
    }
}

/// A rendered frame. Pixel values are non-negative photon-count equivalents.
#[derive(Debug, Clone, PartialEq)]
pub struct FluorescenceImage {
    pub frame: FrameGeometry,
    /// Row-major, length width × height.
    pub values: Vec<f64>,
    pub seed: u64,
    pub exposure: f64,
}

impl FluorescenceImage {
    #[inline]
    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.frame.width + col]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RenderParams {
    /// PSF rms width (vertical axis), m.
    pub psf_sigma: f64,
    /// Horizontal-to-vertical PSF width ratio, ≥ 1 (tilted detection optics).
    pub tilt_elongation: f64,
    pub shot_noise: bool,
    pub seed: u64,
    /// Multiplies every signal into photon-count equivalents.
    pub exposure: f64,
}

#[derive(Debug, Clone)]
pub struct RenderOutcome {
    pub image: FluorescenceImage,
    /// Indices of sites whose spots were clipped by (or fell outside) the
    /// frame; they are rendered partially.
    pub clipped_sites: Vec<usize>,
}

/// Render per-site signals as anisotropic Gaussian spots with integrated
/// weight signal × exposure. Poisson shot noise, when enabled, is seeded
/// per pixel and schedule-independent.
pub fn render(
    signals: &[f64],
    site_positions: &[(f64, f64)],
    frame: &FrameGeometry,
    params: &RenderParams,
) -> Result<RenderOutcome> {
    frame.validate()?;
    if signals.len() != site_positions.len() {
        return Err(Error::InvalidInput(format!(
            "{} signals for {} site positions",
            signals.len(),
            site_positions.len()
        )));
    }
    if !(params.psf_sigma > 0.0) {
        return Err(Error::InvalidInput("psf_sigma must be positive".to_string()));
    }
    if !(params.tilt_elongation >= 1.0) {
        return Err(Error::InvalidInput("tilt_elongation must be ≥ 1".to_string()));
    }

    let sigma_v = params.psf_sigma;
    let sigma_h = params.tilt_elongation * params.psf_sigma;
    let pitch = frame.pixel_pitch;
    let norm = pitch * pitch / (2.0 * PI * sigma_h * sigma_v);
    let half_w = (5.0 * sigma_h / pitch) as isize + 1;
    let half_h = (5.0 * sigma_v / pitch) as isize + 1;

    let core_w = (3.0 * sigma_h / pitch) as isize + 1;
    let core_h = (3.0 * sigma_v / pitch) as isize + 1;
    let mut values = alloc::vec![0.0f64; frame.width * frame.height];
    let mut clipped = Vec::new();
    for (index, (&signal, &(sx, sy))) in signals.iter().zip(site_positions).enumerate() {
        if signal == 0.0 {
            continue;
        }
        let cx = frame.col_of_x(sx);
        let cy = frame.row_of_y(sy);
        let col_lo = cx.round() as isize - half_w;
        let col_hi = cx.round() as isize + half_w;
        let row_lo = cy.round() as isize - half_h;
        let row_hi = cy.round() as isize + half_h;
        // A spot counts as partially rendered when its 3σ core leaves the
        // frame; the 5σ render window clipping a tail is photometrically
        // irrelevant.
        if cx.round() as isize - core_w < 0
            || cy.round() as isize - core_h < 0
            || cx.round() as isize + core_w >= frame.width as isize
            || cy.round() as isize + core_h >= frame.height as isize
        {
            clipped.push(index);
        }
        let weight = signal * params.exposure * norm;
        for row in row_lo.max(0)..=row_hi.min(frame.height as isize - 1) {
            let dy = frame.pixel_y(row as f64) - sy;
            let ey = dy * dy / (2.0 * sigma_v * sigma_v);
            for col in col_lo.max(0)..=col_hi.min(frame.width as isize - 1) {
                let dx = frame.pixel_x(col as f64) - sx;
                let arg = dx * dx / (2.0 * sigma_h * sigma_h) + ey;
                values[row as usize * frame.width + col as usize] += weight * (-arg).exp();
            }
        }
    }

    if params.shot_noise {
        for (index, value) in values.iter_mut().enumerate() {
            if *value > 0.0 {
                let mut rng = CounterRng::new(params.seed, index as u64, purpose::IMAGING, 0);
                *value = rng.poisson(*value) as f64;
            }
        }
    }

    Ok(RenderOutcome {
        image: FluorescenceImage {
            frame: *frame,
            values,
            seed: params.seed,
            exposure: params.exposure,
        },
        clipped_sites: clipped,
    })
}

/// Expected spot location for grid-assisted detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectedSpot {
    /// Refined centroid in trap-plane coordinates, m.
    pub x: f64,
    pub y: f64,
    /// Sum of pixel values over the integration window.
    pub integrated_signal: f64,
    /// integrated_signal / count_calibration.
    pub count_estimate: f64,
    /// Assigned grid node (row, col), when a grid was supplied.
    pub node: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct DetectionResult {
    pub spots: Vec<DetectedSpot>,
    /// Grid nodes with no detected spot.
    pub missing: Vec<GridNode>,
    /// The noise-adaptive threshold that was applied.
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct DetectParams {
    /// PSF width assumed for windowing, m.
    pub psf_sigma: f64,
    pub tilt_elongation: f64,
    /// Threshold = median + k·MAD.
    pub mad_threshold_k: f64,
    /// Absolute floor on candidate peak pixels; rejects stray single-photon
    /// pixels when the background MAD is zero.
    pub min_peak: f64,
    /// Converts integrated signal to atom count:
    /// efficiency × per-atom rate × exposure.
    pub count_calibration: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            psf_sigma: 17e-6,
            tilt_elongation: 1.6,
            mad_threshold_k: 5.0,
            min_peak: 5.0,
            count_calibration: 10.0,
        }
    }
}

fn median_of(mut values: Vec<f64>) -> f64 {
    let n = values.len();
    values.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Find fluorescence spots: local maxima above median + k·MAD, centroid
/// refinement and signal integration over a ±3σ window. With an expected
/// grid, maxima are assigned to their nearest nodes and unmatched nodes are
/// reported missing.
pub fn detect_sites(
    image: &FluorescenceImage,
    params: &DetectParams,
    expected_grid: Option<&[GridNode]>,
) -> DetectionResult {
    let frame = &image.frame;
    let width = frame.width;
    let height = frame.height;

    let median = median_of(image.values.clone());
    let mad = median_of(image.values.iter().map(|v| (v - median).abs()).collect());
    let threshold = median + params.mad_threshold_k * mad;

    // Candidate maxima: above threshold and the absolute floor, not below
    // any 8-neighbor.
    let mut candidates: Vec<(usize, usize, f64)> = Vec::new();
    for row in 0..height {
        for col in 0..width {
            let v = image.value(col, row);
            if v <= threshold || v < params.min_peak {
                continue;
            }
            let mut is_max = true;
            'scan: for dr in -1i32..=1 {
                for dc in -1i32..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let r = row as i32 + dr;
                    let c = col as i32 + dc;
                    if r >= 0 && c >= 0 && (r as usize) < height && (c as usize) < width {
                        if image.value(c as usize, r as usize) > v {
                            is_max = false;
                            break 'scan;
                        }
                    }
                }
            }
            if is_max {
                candidates.push((col, row, v));
            }
        }
    }
    candidates.sort_unstable_by(|a, b| b.2.partial_cmp(&a.2).unwrap());

    let pitch = frame.pixel_pitch;
    let win_w = ((3.0 * params.tilt_elongation * params.psf_sigma) / pitch).round() as isize;
    let win_h = ((3.0 * params.psf_sigma) / pitch).round() as isize;
    let win_w = win_w.max(1);
    let win_h = win_h.max(1);

    // Non-maximum suppression: one spot per window-sized neighborhood.
    let mut accepted: Vec<(usize, usize)> = Vec::new();
    for &(col, row, _) in &candidates {
        let taken = accepted.iter().any(|&(ac, ar)| {
            (ac as isize - col as isize).abs() <= win_w && (ar as isize - row as isize).abs() <= win_h
        });
        if !taken {
            accepted.push((col, row));
        }
    }

    let centroid_pass = |c0: f64, r0: f64| -> (f64, f64, f64) {
        let col_lo = (c0.round() as isize - win_w).max(0) as usize;
        let col_hi = (c0.round() as isize + win_w).min(width as isize - 1) as usize;
        let row_lo = (r0.round() as isize - win_h).max(0) as usize;
        let row_hi = (r0.round() as isize + win_h).min(height as isize - 1) as usize;
        let mut total = 0.0;
        let mut cx = 0.0;
        let mut cy = 0.0;
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                let v = image.value(col, row);
                total += v;
                cx += v * col as f64;
                cy += v * row as f64;
            }
        }
        if total > 0.0 {
            (cx / total, cy / total, total)
        } else {
            (c0, r0, 0.0)
        }
    };

    let mut spots: Vec<DetectedSpot> = accepted
        .iter()
        .map(|&(col, row)| {
            let (c1, r1, _) = centroid_pass(col as f64, row as f64);
            let (c2, r2, total) = centroid_pass(c1, r1);
            DetectedSpot {
                x: frame.pixel_x(c2),
                y: frame.pixel_y(r2),
                integrated_signal: total,
                count_estimate: total / params.count_calibration,
                node: None,
            }
        })
        .collect();

    let mut missing = Vec::new();
    if let Some(grid) = expected_grid {
        // Nearest node per spot; a node keeps only its closest spot.
        let mut claim: Vec<Option<(usize, f64)>> = alloc::vec![None; grid.len()];
        for (spot_index, spot) in spots.iter().enumerate() {
            let mut best: Option<(usize, f64)> = None;
            for (node_index, node) in grid.iter().enumerate() {
                let d = (spot.x - node.x).hypot(spot.y - node.y);
                if best.map_or(true, |(_, bd)| d < bd) {
                    best = Some((node_index, d));
                }
            }
            if let Some((node_index, d)) = best {
                if claim[node_index].map_or(true, |(_, bd)| d < bd) {
                    claim[node_index] = Some((spot_index, d));
                }
            }
        }
        for (node_index, node) in grid.iter().enumerate() {
            match claim[node_index] {
                Some((spot_index, _)) => spots[spot_index].node = Some((node.row, node.col)),
                None => missing.push(*node),
            }
        }
    }

    DetectionResult { spots, missing, threshold }
}
