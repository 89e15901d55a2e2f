//! Spectrogram patch extraction.
//!
//! A spectrogram is cut into windows of `width` consecutive frames, advanced
//! by `shift` frames, and every window is bilinearly resized to a square
//! network input. With the default geometry that input is 143 x 143.

use super::{DspError, Spectrogram, SpectrogramKind};
use crate::numerics::Matrix;

/// Default square patch side, matching the full-size network input.
pub const PATCH_SIZE: usize = 143;

#[derive(Debug, Clone)]
pub struct Patch {
    pub source_segment: String,
    pub kind: SpectrogramKind,
    /// Position of the patch within its segment, counting from 0 in time order.
    pub order_index: usize,
    /// `out_size x out_size` pixels in `[0, 1]`.
    pub pixels: Matrix,
}

/// Cuts `spec` into `(cols - width) / shift + 1` patches and resizes each to
/// `out_size` square. Fails when the spectrogram has fewer frames than one
/// patch width.
pub fn split_patches(
    spec: &Spectrogram,
    width: usize,
    shift: usize,
    out_size: usize,
) -> Result<Vec<Patch>, DspError> {
    if width == 0 || shift == 0 || out_size == 0 {
        return Err(DspError::BadParam("width, shift and out_size must be positive".into()));
    }
    let cols = spec.values.cols();
    if cols < width {
        return Err(DspError::NotEnoughFrames { cols, width });
    }
    let count = (cols - width) / shift + 1;
    let rows = spec.values.rows();
    let mut patches = Vec::with_capacity(count);
    for p in 0..count {
        let start = p * shift;
        let window = Matrix::from_fn(rows, width, |r, c| spec.values[(r, start + c)]);
        patches.push(Patch {
            source_segment: spec.segment_id.clone(),
            kind: spec.kind,
            order_index: p,
            pixels: bilinear_resize(&window, out_size, out_size),
        });
    }
    Ok(patches)
}

/// Bilinear resize with corner alignment: output corners sample input
/// corners exactly, and an identity-size resize reproduces the input.
pub fn bilinear_resize(src: &Matrix, out_h: usize, out_w: usize) -> Matrix {
    assert!(out_h > 0 && out_w > 0 && src.rows() > 0 && src.cols() > 0);
    let coord = |o: usize, out_n: usize, src_n: usize| -> f64 {
        if out_n == 1 {
            (src_n - 1) as f64 / 2.0
        } else {
            o as f64 * (src_n - 1) as f64 / (out_n - 1) as f64
        }
    };
    Matrix::from_fn(out_h, out_w, |oy, ox| {
        let fy = coord(oy, out_h, src.rows());
        let fx = coord(ox, out_w, src.cols());
        let y0 = fy.floor() as usize;
        let x0 = fx.floor() as usize;
        let y1 = (y0 + 1).min(src.rows() - 1);
        let x1 = (x0 + 1).min(src.cols() - 1);
        let dy = fy - y0 as f64;
        let dx = fx - x0 as f64;
        src[(y0, x0)] * (1.0 - dy) * (1.0 - dx)
            + src[(y0, x1)] * (1.0 - dy) * dx
            + src[(y1, x0)] * dy * (1.0 - dx)
            + src[(y1, x1)] * dy * dx
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_with_cols(cols: usize) -> Spectrogram {
        Spectrogram {
            segment_id: "seg".into(),
            kind: SpectrogramKind::Stft,
            values: Matrix::from_fn(354, cols, |r, c| {
                ((r * 31 + c * 7) % 100) as f64 / 100.0
            }),
        }
    }

    #[test]
    fn exact_width_yields_single_patch() {
        let patches = split_patches(&spec_with_cols(143), 143, 126, 143).unwrap();
        assert_eq!(patches.len(), 1);
        assert_eq!(patches[0].order_index, 0);
        assert_eq!(patches[0].pixels.rows(), 143);
        assert_eq!(patches[0].pixels.cols(), 143);
    }

    #[test]
    fn patch_count_follows_shift() {
        // (395 - 143) / 126 + 1 = 3
        let patches = split_patches(&spec_with_cols(395), 143, 126, 143).unwrap();
        assert_eq!(patches.len(), 3);
        for (i, p) in patches.iter().enumerate() {
            assert_eq!(p.order_index, i);
        }
    }

    #[test]
    fn too_few_frames_is_an_error() {
        assert!(matches!(
            split_patches(&spec_with_cols(142), 143, 126, 143),
            Err(DspError::NotEnoughFrames { cols: 142, width: 143 })
        ));
    }

    #[test]
    fn patches_window_the_expected_frames() {
        let spec = spec_with_cols(400);
        // width == out width and row count resized; keep rows equal to probe columns
        let patches = split_patches(&spec, 100, 50, 100).unwrap();
        assert_eq!(patches.len(), 7);
        // with square resize from 354x100 to 100x100, column c of the patch
        // samples source column (start + c) exactly (corner-aligned identity
        // along the time axis)
        let p = &patches[2];
        let start = 2 * 50;
        for c in [0usize, 57, 99] {
            // compare a row that maps exactly: output row 0 samples input row 0
            let expect = spec.values[(0, start + c)];
            assert!((p.pixels[(0, c)] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn resize_identity_when_sizes_match() {
        let m = Matrix::from_fn(5, 7, |r, c| (r * 10 + c) as f64);
        let out = bilinear_resize(&m, 5, 7);
        assert_eq!(out.max_abs_diff(&m), 0.0);
    }

    #[test]
    fn resize_corners_are_exact() {
        let m = Matrix::from_fn(9, 11, |r, c| (r as f64).sin() + (c as f64).cos());
        let out = bilinear_resize(&m, 143, 143);
        assert_eq!(out[(0, 0)], m[(0, 0)]);
        assert_eq!(out[(142, 0)], m[(8, 0)]);
        assert_eq!(out[(0, 142)], m[(0, 10)]);
        assert_eq!(out[(142, 142)], m[(8, 10)]);
    }

    #[test]
    fn resize_stays_in_unit_range() {
        let mut rng = crate::numerics::Rng::new(12);
        let m = Matrix::from_fn(37, 91, |_, _| rng.next_f64());
        let out = bilinear_resize(&m, 64, 64);
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
