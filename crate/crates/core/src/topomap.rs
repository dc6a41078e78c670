//! Rasterization of per-channel band powers into 32x32 RGB head maps.
//!
//! Electrode values are min-max normalized, spread over the unit-disk head
//! grid with inverse-distance weighting (p = 2) and colored with a
//! piecewise-linear jet map. Pixels outside the head disk are exactly black.
//!
//! Normalization happens on the electrode values, before interpolation, so
//! the rendered image is exactly invariant under affine rescaling of the
//! input field (the interpolator then sees identical numbers).

use std::path::Path;

use crate::eeg::{Condition, Montage};
use crate::error::{Error, Result};
use crate::spectral::Band;

pub const IMAGE_SIZE: usize = 32;

/// Identifies the source window of a rendered image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowRef {
    pub subject_id: String,
    pub condition: Condition,
    pub window_index: usize,
}

/// A 32x32x3 topographic image with values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralImage {
    /// Row-major `[row][col][rgb]`, length `32 * 32 * 3`.
    pub pixels: Vec<f32>,
    pub band: Band,
    pub window_ref: WindowRef,
    /// (vmin, vmax) of the electrode values used for normalization.
    pub scale: (f64, f64),
}

impl SpectralImage {
    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let base = (row * IMAGE_SIZE + col) * 3;
        [self.pixels[base], self.pixels[base + 1], self.pixels[base + 2]]
    }

    /// Binary PPM (P6) export, 8 bits per channel, rounded half-up.
    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut bytes = format!("P6\n{IMAGE_SIZE} {IMAGE_SIZE}\n255\n").into_bytes();
        bytes.extend(self.pixels.iter().map(|&v| (v as f64 * 255.0).round() as u8));
        std::fs::write(path, bytes)?;
        Ok(())
    }
}

/// The 32x32 sampling grid over the head's bounding square [-1, 1]^2.
#[derive(Debug, Clone)]
pub struct HeadGrid {
    pub resolution: usize,
    /// Per-pixel centers, row-major; row 0 is the top (nose side, y = +1).
    pub coords: Vec<(f64, f64)>,
    /// True iff the pixel center lies inside the unit disk.
    pub mask: Vec<bool>,
}

impl HeadGrid {
    pub fn new(resolution: usize) -> HeadGrid {
        let step = 2.0 / resolution as f64;
        let mut coords = Vec::with_capacity(resolution * resolution);
        let mut mask = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            for col in 0..resolution {
                let x = -1.0 + (col as f64 + 0.5) * step;
                let y = 1.0 - (row as f64 + 0.5) * step;
                coords.push((x, y));
                mask.push(x * x + y * y <= 1.0);
            }
        }
        HeadGrid {
            resolution,
            coords,
            mask,
        }
    }

    pub fn standard() -> HeadGrid {
        HeadGrid::new(IMAGE_SIZE)
    }
}

/// Projects montage entries to cartesian head coordinates:
/// `x = r sin(angle)`, `y = r cos(angle)`, angle clockwise from the nose.
pub fn electrode_xy(montage: &Montage) -> Vec<(f64, f64)> {
    montage
        .entries
        .iter()
        .map(|e| {
            let a = e.angle_deg.to_radians();
            (e.radius * a.sin(), e.radius * a.cos())
        })
        .collect()
}

/// Inverse-distance-weighted interpolation of scattered electrode values
/// onto the head grid. Out-of-mask pixels are NaN sentinels; a grid point
/// within 1e-9 of an electrode takes that electrode's value exactly.
pub fn interpolate_idw(
    values: &[f64],
    points: &[(f64, f64)],
    grid: &HeadGrid,
    power: f64,
) -> Result<Vec<f64>> {
    if points.is_empty() {
        return Err(Error::validation("interpolation needs at least one electrode"));
    }
    if values.len() != points.len() {
        return Err(Error::shape(format!(
            "{} values for {} electrode positions",
            values.len(),
            points.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite electrode value".into()));
    }

    let mut field = Vec::with_capacity(grid.coords.len());
    'pixel: for (i, &(gx, gy)) in grid.coords.iter().enumerate() {
        if !grid.mask[i] {
            field.push(f64::NAN);
            continue;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (&v, &(px, py)) in values.iter().zip(points) {
            let d = ((gx - px).powi(2) + (gy - py).powi(2)).sqrt();
            if d < 1e-9 {
                field.push(v);
                continue 'pixel;
            }
            let w = d.powf(-power);
            num += w * v;
            den += w;
        }
        field.push(num / den);
    }
    Ok(field)
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

/// Piecewise-linear jet colormap on [0, 1].
pub fn colormap_jet(v: f64) -> Result<(f64, f64, f64)> {
    if v.is_nan() {
        return Err(Error::Numeric("colormap input is NaN".into()));
    }
    let v = clamp01(v);
    let r = clamp01((4.0 * v - 1.5).min(-4.0 * v + 4.5));
    let g = clamp01((4.0 * v - 0.5).min(-4.0 * v + 3.5));
    let b = clamp01((4.0 * v + 0.5).min(-4.0 * v + 2.5));
    Ok((r, g, b))
}

/// Renders one band's per-channel powers into a topographic image.
///
/// `channels` gives the electrode label for each entry of `band_values`.
pub fn render_image(
    band_values: &[f64],
    montage: &Montage,
    channels: &[String],
    band: Band,
    window_ref: WindowRef,
) -> Result<SpectralImage> {
    let entries = montage.resolve(channels)?;
    let points: Vec<(f64, f64)> = entries
        .iter()
        .map(|e| {
            let a = e.angle_deg.to_radians();
            (e.radius * a.sin(), e.radius * a.cos())
        })
        .collect();
    render_field(band_values, &points, band, window_ref)
}

/// As `render_image`, with electrode positions given directly.
pub fn render_field(
    band_values: &[f64],
    points: &[(f64, f64)],
    band: Band,
    window_ref: WindowRef,
) -> Result<SpectralImage> {
    if band_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite band power".into()));
    }
    let vmin = band_values.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = band_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // normalize electrode values; constant fields map to mid-colormap
    let normalized: Vec<f64> = if vmax - vmin < 1e-12 {
        vec![0.5; band_values.len()]
    } else {
        band_values
            .iter()
            .map(|&v| (v - vmin) / (vmax - vmin))
            .collect()
    };

    let grid = HeadGrid::standard();
    let field = interpolate_idw(&normalized, points, &grid, 2.0)?;

    let mut pixels = Vec::with_capacity(field.len() * 3);
    for &v in &field {
        if v.is_nan() {
            pixels.extend_from_slice(&[0.0, 0.0, 0.0]);
        } else {
            let (r, g, b) = colormap_jet(v)?;
            pixels.extend_from_slice(&[r as f32, g as f32, b as f32]);
        }
    }

    Ok(SpectralImage {
        pixels,
        band,
        window_ref,
        scale: (vmin, vmax),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::BandName;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn wref() -> WindowRef {
        WindowRef {
            subject_id: "s".into(),
            condition: Condition::Expert,
            window_index: 0,
        }
    }

    #[test]
    fn electrode_xy_convention() {
        let m = crate::eeg::parse_montage("A,0,0\nB,0,1\nC,90,0.5\n").unwrap();
        let xy = electrode_xy(&m);
        assert!((xy[0].0).abs() < 1e-12 && (xy[0].1).abs() < 1e-12);
        assert!((xy[1].0).abs() < 1e-12 && (xy[1].1 - 1.0).abs() < 1e-12);
        assert!((xy[2].0 - 0.5).abs() < 1e-12 && (xy[2].1).abs() < 1e-12);
    }

    #[test]
    fn mask_is_symmetric() {
        let g = HeadGrid::standard();
        let n = g.resolution;
        for row in 0..n {
            for col in 0..n {
                let m = g.mask[row * n + col];
                assert_eq!(m, g.mask[row * n + (n - 1 - col)]);
                assert_eq!(m, g.mask[(n - 1 - row) * n + col]);
            }
        }
    }

    #[test]
    fn idw_constant_field() {
        let g = HeadGrid::standard();
        let points = [(0.3, 0.3), (-0.5, 0.1), (0.0, -0.7)];
        let field = interpolate_idw(&[4.25, 4.25, 4.25], &points, &g, 2.0).unwrap();
        for (i, v) in field.iter().enumerate() {
            if g.mask[i] {
                assert!((v - 4.25).abs() < 1e-12);
            } else {
                assert!(v.is_nan());
            }
        }
    }

    #[test]
    fn idw_coincident_pixel_takes_electrode_value() {
        let g = HeadGrid::standard();
        // pixel center (0.03125, 0.03125) for row 15, col 16
        let p = g.coords[15 * 32 + 16];
        let field = interpolate_idw(&[7.0, 1.0], &[p, (-0.5, -0.5)], &g, 2.0).unwrap();
        assert_eq!(field[15 * 32 + 16], 7.0);
    }

    #[test]
    fn idw_equidistant_mean() {
        let g = HeadGrid::new(1); // single pixel centered at (0,0)
        assert_eq!(g.coords[0], (0.0, 0.0));
        let field = interpolate_idw(&[0.0, 10.0], &[(-0.5, 0.0), (0.5, 0.0)], &g, 2.0).unwrap();
        assert!((field[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn idw_bounded_by_value_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let g = HeadGrid::standard();
        let points: Vec<(f64, f64)> = (0..10)
            .map(|_| {
                let a = rng.gen::<f64>() * std::f64::consts::TAU;
                let r = rng.gen::<f64>() * 0.9;
                (r * a.sin(), r * a.cos())
            })
            .collect();
        let values: Vec<f64> = (0..10).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let field = interpolate_idw(&values, &points, &g, 2.0).unwrap();
        for (i, v) in field.iter().enumerate() {
            if g.mask[i] {
                assert!(*v >= lo - 1e-9 && *v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn jet_endpoints_and_midpoint() {
        assert_eq!(colormap_jet(0.0).unwrap(), (0.0, 0.0, 0.5));
        assert_eq!(colormap_jet(1.0).unwrap(), (0.5, 0.0, 0.0));
        assert_eq!(colormap_jet(0.5).unwrap(), (0.5, 1.0, 0.5));
        assert!(colormap_jet(f64::NAN).is_err());
    }

    #[test]
    fn constant_field_renders_mid_colormap() {
        let img = render_field(
            &[3.0, 3.0, 3.0],
            &[(0.0, 0.5), (0.5, 0.0), (0.0, -0.5)],
            BandName::Theta1.band(),
            wref(),
        )
        .unwrap();
        let g = HeadGrid::standard();
        for i in 0..g.mask.len() {
            let px = [img.pixels[i * 3], img.pixels[i * 3 + 1], img.pixels[i * 3 + 2]];
            if g.mask[i] {
                assert_eq!(px, [0.5, 1.0, 0.5]);
            } else {
                assert_eq!(px, [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn affine_rescaling_leaves_image_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let points: Vec<(f64, f64)> = (0..8)
            .map(|_| {
                let a = rng.gen::<f64>() * std::f64::consts::TAU;
                let r = rng.gen::<f64>() * 0.9;
                (r * a.sin(), r * a.cos())
            })
            .collect();
        for _ in 0..20 {
            // values on a coarse dyadic grid so the affine map is exact in f64
            let values: Vec<f64> = (0..8)
                .map(|_| (rng.gen::<u32>() % (1 << 20)) as f64 / (1 << 20) as f64)
                .collect();
            let a = (2.0f64).powi(rng.gen_range(-3..=3));
            let b = (rng.gen::<u32>() % (1 << 20)) as f64 / (1 << 20) as f64;
            let scaled: Vec<f64> = values.iter().map(|&v| a * v + b).collect();
            let img1 = render_field(&values, &points, BandName::Alpha1.band(), wref()).unwrap();
            let img2 = render_field(&scaled, &points, BandName::Alpha1.band(), wref()).unwrap();
            assert_eq!(img1.pixels, img2.pixels);
        }
    }

    #[test]
    fn permutation_invariance() {
        let points = [(0.1, 0.4), (-0.3, -0.2), (0.5, -0.5), (-0.6, 0.3)];
        let values = [1.0, 7.0, 3.0, -2.0];
        let img1 = render_field(&values, &points, BandName::Theta2.band(), wref()).unwrap();
        let perm_points = [points[2], points[0], points[3], points[1]];
        let perm_values = [values[2], values[0], values[3], values[1]];
        let img2 = render_field(&perm_values, &perm_points, BandName::Theta2.band(), wref()).unwrap();
        assert_eq!(img1.pixels, img2.pixels);
    }

    #[test]
    fn hot_electrode_dominates_nearest_pixel() {
        // one hot electrode among zeros: the nearest pixel carries the
        // maximal interpolated value (brute-force scan over the field)
        let m = crate::eeg::Montage::standard_64();
        let points = electrode_xy(&m);
        let hot = 10;
        let values: Vec<f64> = (0..points.len()).map(|i| if i == hot { 5.0 } else { 0.0 }).collect();

        let vmin = 0.0;
        let vmax = 5.0;
        let normalized: Vec<f64> = values.iter().map(|v| (v - vmin) / (vmax - vmin)).collect();
        let g = HeadGrid::standard();
        let field = interpolate_idw(&normalized, &points, &g, 2.0).unwrap();

        let nearest = g
            .coords
            .iter()
            .enumerate()
            .filter(|(i, _)| g.mask[*i])
            .min_by(|a, b| {
                let da = (a.1 .0 - points[hot].0).powi(2) + (a.1 .1 - points[hot].1).powi(2);
                let db = (b.1 .0 - points[hot].0).powi(2) + (b.1 .1 - points[hot].1).powi(2);
                da.total_cmp(&db)
            })
            .unwrap()
            .0;
        let max_idx = field
            .iter()
            .enumerate()
            .filter(|(_, v)| !v.is_nan())
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(nearest, max_idx);
    }

    #[test]
    fn ppm_round_trip_header() {
        let img = render_field(
            &[1.0, 0.0],
            &[(0.3, 0.0), (-0.3, 0.0)],
            BandName::Theta1.band(),
            wref(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        img.write_ppm(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P6\n32 32\n255\n"));
        assert_eq!(bytes.len(), 13 + 32 * 32 * 3);
    }
}
