//! Background and marker substitution.
//!
//! The three mask regions tile the image exactly: pixels under the marker
//! mask come from the marker texture, remaining object pixels are kept,
//! everything else comes from the background texture. No blending.

use super::raster::{Mask, MaskPair, Raster};
use super::DatasetError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Marker masks with fewer pixels than this fall back to plain tiling
/// instead of axis-aligned sampling.
const MIN_AXIS_PIXELS: usize = 8;

fn wrap(v: i64, len: u32) -> u32 {
    (v.rem_euclid(len as i64)) as u32
}

/// Principal axis of the marker mask: mean and dominant covariance
/// eigenvector. `None` when the mask is too small or pointlike.
fn principal_axis(mask: &Mask) -> Option<(f64, f64, f64, f64)> {
    let mut n = 0usize;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                n += 1;
                sx += x as f64;
                sy += y as f64;
            }
        }
    }
    if n < MIN_AXIS_PIXELS {
        return None;
    }
    let mx = sx / n as f64;
    let my = sy / n as f64;
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                let dx = x as f64 - mx;
                let dy = y as f64 - my;
                cxx += dx * dx;
                cxy += dx * dy;
                cyy += dy * dy;
            }
        }
    }
    // Dominant eigenvector of [[cxx, cxy], [cxy, cyy]].
    let trace = cxx + cyy;
    let det = cxx * cyy - cxy * cxy;
    let lambda = trace / 2.0 + (trace * trace / 4.0 - det).max(0.0).sqrt();
    if lambda <= 1e-9 {
        return None;
    }
    let (ax, ay) = if cxy.abs() > 1e-12 {
        (lambda - cyy, cxy)
    } else if cxx >= cyy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (ax * ax + ay * ay).sqrt();
    Some((mx, my, ax / norm, ay / norm))
}

/// Substitute background and marker regions with textures. Deterministic
/// under `seed`; the output partitions pixel-exactly into the three
/// sources.
pub fn augment_sample(
    img: &Raster,
    masks: &MaskPair,
    background: &Raster,
    marker_texture: &Raster,
    seed: u64,
) -> Result<Raster, DatasetError> {
    if masks.width() != img.width() || masks.height() != img.height() {
        return Err(DatasetError::Mask(format!(
            "mask size {}x{} does not match image {}x{}",
            masks.width(),
            masks.height(),
            img.width(),
            img.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg_ox = rng.gen_range(0..background.width()) as i64;
    let bg_oy = rng.gen_range(0..background.height()) as i64;
    let mk_ox = rng.gen_range(0..marker_texture.width()) as i64;
    let mk_oy = rng.gen_range(0..marker_texture.height()) as i64;
    let axis = principal_axis(&masks.marker_mask);

    let mut out = Raster::new(img.width(), img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let rgb = if masks.marker_mask.get(x, y) {
                match axis {
                    Some((mx, my, ax, ay)) => {
                        // Texture u runs along the rod axis, v across it.
                        let dx = x as f64 - mx;
                        let dy = y as f64 - my;
                        let s = dx * ax + dy * ay;
                        let t = -dx * ay + dy * ax;
                        marker_texture.get(
                            wrap(s.floor() as i64 + mk_ox, marker_texture.width()),
                            wrap(t.floor() as i64 + mk_oy, marker_texture.height()),
                        )
                    }
                    None => marker_texture.get(
                        wrap(x as i64 + mk_ox, marker_texture.width()),
                        wrap(y as i64 + mk_oy, marker_texture.height()),
                    ),
                }
            } else if masks.object_mask.get(x, y) {
                img.get(x, y)
            } else {
                background.get(
                    wrap(x as i64 + bg_ox, background.width()),
                    wrap(y as i64 + bg_oy, background.height()),
                )
            };
            out.set(x, y, rgb);
        }
    }
    Ok(out)
}
