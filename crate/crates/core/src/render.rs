//! Netpbm writers for review bundles. Output is a pure function of the
//! input buffers, so re-rendering is byte-identical.

use crate::error::{Error, Result};
use crate::lrp::Heatmap;
use crate::tensor::Tensor;

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Binary PPM (P6) from a `[3, H, W]` image in `[0, 1]`.
pub fn ppm_rgb(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::dim("ppm", shape, &[3, 0, 0]));
    }
    let (h, w) = (shape[1], shape[2]);
    let plane = h * w;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for i in 0..plane {
        for c in 0..3 {
            out.push(to_u8(d[c * plane + i]));
        }
    }
    Ok(out)
}

/// Heatmap value mapped to `[-1, 1]` by its own max |value|.
fn normalized(map: &Heatmap) -> impl Iterator<Item = f32> + '_ {
    let scale = map.max_abs();
    map.values
        .iter()
        .map(move |&v| if scale > 0.0 { v / scale } else { 0.0 })
}

/// Binary PGM (P5): zero relevance is mid-grey, +max white, -max black.
pub fn pgm_heatmap(map: &Heatmap) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", map.width, map.height).into_bytes();
    out.extend(normalized(map).map(|t| to_u8(0.5 * (t + 1.0))));
    out
}

/// Red (positive) / blue (negative) heat colours blended at 0.5 over the
/// greyscale original.
pub fn ppm_overlay(image: &Tensor<f32>, map: &Heatmap) -> Result<Vec<u8>> {
    let shape = image.shape();
    if shape.len() != 3 || shape[1] != map.height || shape[2] != map.width {
        return Err(Error::dim("overlay", shape, &[0, map.height, map.width]));
    }
    let (c, plane) = (shape[0], map.height * map.width);
    let d = image.data();
    let mut out = format!("P6\n{} {}\n255\n", map.width, map.height).into_bytes();
    for (i, t) in normalized(map).enumerate() {
        let grey = (0..c).map(|ch| d[ch * plane + i]).sum::<f32>() / c as f32;
        let heat = [t.max(0.0), 0.0, (-t).max(0.0)];
        for h in heat {
            out.push(to_u8(0.5 * grey + 0.5 * h));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_and_sizes() {
        let img = Tensor::<f32>::full(&[3, 2, 4], 1.0);
        let ppm = ppm_rgb(&img).unwrap();
        assert!(ppm.starts_with(b"P6\n4 2\n255\n"));
        assert_eq!(ppm.len(), 11 + 24);
        let map = Heatmap::from_values(2, 4, vec![1.0, -1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let pgm = pgm_heatmap(&map);
        assert!(pgm.starts_with(b"P5\n4 2\n255\n"));
        assert_eq!(&pgm[11..15], &[255, 0, 128, 191]);
        let ov = ppm_overlay(&img, &map).unwrap();
        assert_eq!(&ov[11..14], &[255, 128, 128]);
    }
}
