//! File outputs: atomic writes, CSV helpers, 16-bit PGM frames with sidecar
//! metadata, and the versioned ensemble dump format.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value survives dump → parse exactly and reruns are byte-identical.

use crate::error::{CliError, CliResult};
use microtrap_core::dynamics::{AtomState, Ensemble, HyperfineState};
use microtrap_core::imaging::FluorescenceImage;
use microtrap_core::Vec3;
use std::fmt::Write as _;
use std::path::Path;

/// Write via a temp file and rename, so readers never see partial output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp_path, bytes)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", tmp_path.display())))?;
    std::fs::rename(&tmp_path, path)
        .map_err(|e| CliError::Runtime(format!("renaming into {}: {e}", path.display())))?;
    Ok(())
}

pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> CliResult<()> {
    let mut text = String::with_capacity(rows.len() * 32 + header.len() + 2);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row);
        text.push('\n');
    }
    atomic_write(path, text.as_bytes())
}

/// 16-bit binary PGM (P5), rows written top-down (largest y first), scaled
/// so the brightest pixel maps to 65535. The scale is recorded in the
/// sidecar metadata file next to the image.
pub fn write_pgm16(path: &Path, image: &FluorescenceImage) -> CliResult<()> {
    let width = image.frame.width;
    let height = image.frame.height;
    let max = image.values.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 65535.0 / max } else { 1.0 };
    let mut bytes = Vec::with_capacity(32 + 2 * width * height);
    bytes.extend_from_slice(format!("P5\n# microtrap fluorescence frame\n{width} {height}\n65535\n").as_bytes());
    for row in (0..height).rev() {
        for col in 0..width {
            let level = (image.value(col, row) * scale).round().clamp(0.0, 65535.0) as u16;
            bytes.extend_from_slice(&level.to_be_bytes());
        }
    }
    atomic_write(path, &bytes)?;

    let mut meta = String::new();
    let _ = writeln!(meta, "width_px = {width}");
    let _ = writeln!(meta, "height_px = {height}");
    let _ = writeln!(meta, "pixel_pitch_m = {}", image.frame.pixel_pitch);
    let _ = writeln!(meta, "center_x_m = {}", image.frame.center_x);
    let _ = writeln!(meta, "center_y_m = {}", image.frame.center_y);
    let _ = writeln!(meta, "seed = {}", image.seed);
    let _ = writeln!(meta, "exposure = {}", image.exposure);
    let _ = writeln!(meta, "intensity_scale = {scale}");
    let _ = writeln!(meta, "max_value = {max}");
    let mut meta_path = path.as_os_str().to_owned();
    meta_path.push(".txt");
    atomic_write(Path::new(&meta_path), meta.as_bytes())
}

const DUMP_HEADER: &str = "microtrap-ensemble v1";

/// Serialize an ensemble as line-oriented text. Format (documented in the
/// README): a version line, `seed`/`time`/`steps`/`atoms` lines, then one
/// line per atom: `stream site alive state x y z vx vy vz` with `site = -1`
/// for unassigned atoms.
pub fn dump_ensemble(ensemble: &Ensemble) -> String {
    let mut out = String::with_capacity(64 + ensemble.atoms.len() * 96);
    let _ = writeln!(out, "{DUMP_HEADER}");
    let _ = writeln!(out, "seed {}", ensemble.seed);
    let _ = writeln!(out, "time {}", ensemble.time);
    let _ = writeln!(out, "steps {}", ensemble.steps_taken);
    let _ = writeln!(out, "atoms {}", ensemble.atoms.len());
    for atom in &ensemble.atoms {
        let site = atom.site_id.map_or(-1i64, |s| s as i64);
        let state = match atom.internal_state {
            HyperfineState::F2 => "F2",
            HyperfineState::F3 => "F3",
        };
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {}",
            atom.rng_stream,
            site,
            u8::from(atom.alive),
            state,
            atom.position.x,
            atom.position.y,
            atom.position.z,
            atom.velocity.x,
            atom.velocity.y,
            atom.velocity.z,
        );
    }
    out
}

pub fn parse_ensemble(text: &str) -> CliResult<Ensemble> {
    let bad = |msg: &str| CliError::Runtime(format!("ensemble dump: {msg}"));
    let mut lines = text.lines();
    if lines.next() != Some(DUMP_HEADER) {
        return Err(bad("missing or unsupported version header"));
    }
    let mut field = |name: &str| -> CliResult<String> {
        let line = lines.next().ok_or_else(|| bad("truncated header"))?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| bad(&format!("expected '{name} <value>'")))
    };
    let seed: u64 = field("seed")?.parse().map_err(|_| bad("bad seed"))?;
    let time: f64 = field("time")?.parse().map_err(|_| bad("bad time"))?;
    let steps: u64 = field("steps")?.parse().map_err(|_| bad("bad steps"))?;
    let count: usize = field("atoms")?.parse().map_err(|_| bad("bad atom count"))?;

    let mut atoms = Vec::with_capacity(count);
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 10 {
            return Err(bad(&format!("atom line has {} fields, expected 10", parts.len())));
        }
        let number = |i: usize| -> CliResult<f64> {
            parts[i].parse().map_err(|_| bad(&format!("bad number '{}'", parts[i])))
        };
        let site: i64 = parts[1].parse().map_err(|_| bad("bad site id"))?;
        atoms.push(AtomState {
            rng_stream: parts[0].parse().map_err(|_| bad("bad stream id"))?,
            site_id: if site < 0 { None } else { Some(site as usize) },
            alive: parts[2] == "1",
            internal_state: match parts[3] {
                "F2" => HyperfineState::F2,
                "F3" => HyperfineState::F3,
                other => return Err(bad(&format!("unknown state '{other}'"))),
            },
            position: Vec3::new(number(4)?, number(5)?, number(6)?),
            velocity: Vec3::new(number(7)?, number(8)?, number(9)?),
        });
    }
    if atoms.len() != count {
        return Err(bad(&format!("{} atom lines for declared count {count}", atoms.len())));
    }
    Ok(Ensemble { atoms, time, seed, steps_taken: steps })
}
