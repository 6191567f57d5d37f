//! Slice bundles: everything the viewer needs to draw one slice, as
//! back-to-back UGSTACK frames.

use ndarray::{Array2, ArrayView2, Axis};
use serde_json::{json, Map, Value};

use stackrefine_core::pipeline::SessionState;
use stackrefine_core::ugstack::{self, DType, Header, Kind};
use stackrefine_core::uncertainty::slice_uncertainty;

/// 8-bit quantization of a slice over its own value range. Returns the
/// codes and the `(min, max)` needed to map them back.
pub fn quantize(slice: ArrayView2<'_, f32>) -> (Vec<u8>, (f64, f64)) {
    let (lo, hi) = slice
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let range = hi - lo;
    let codes = slice
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v as f64 - lo) / range * 255.0).round() as u8
            } else {
                0
            }
        })
        .collect();
    (codes, (lo, hi))
}

pub fn dequantize(code: u8, (lo, hi): (f64, f64)) -> f64 {
    lo + code as f64 / 255.0 * (hi - lo)
}

/// Unit edges separating foreground from background, in pixel-corner
/// coordinates: corner `(r, c)` is the top-left corner of pixel `(r, c)`.
/// The image border counts as background.
pub fn contour_segments(mask: ArrayView2<'_, u8>) -> Vec<[[usize; 2]; 2]> {
    let (h, w) = mask.dim();
    let on = |r: isize, c: isize| r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask[[r as usize, c as usize]] != 0;
    let mut out = Vec::new();
    for r in 0..=h as isize {
        for c in 0..=w as isize {
            // edge between (r-1, c) and (r, c): horizontal at row r
            if c < w as isize && on(r - 1, c) != on(r, c) {
                out.push([[r as usize, c as usize], [r as usize, c as usize + 1]]);
            }
            // edge between (r, c-1) and (r, c): vertical at column c
            if r < h as isize && on(r, c - 1) != on(r, c) {
                out.push([[r as usize, c as usize], [r as usize + 1, c as usize]]);
            }
        }
    }
    out
}

fn frame(kind: Kind, dtype: DType, dims: Vec<usize>, spacing: &[f64], extra: Map<String, Value>, payload: &[u8]) -> Vec<u8> {
    let mut header = Header::new(kind, dims, spacing.to_vec());
    header.dtype = dtype;
    header.extra = extra;
    ugstack::encode_frame(&header, payload)
}

fn role(name: &str) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("role".into(), json!(name));
    m
}

/// Four frames for slice `k`: the 8-bit image (its header carries the slice
/// metadata), the fused probability, the uncertainty and the current mask.
pub fn slice_bundle(state: &SessionState, k: usize) -> Vec<u8> {
    let stack = state.stack();
    let (h, w) = (stack.height(), stack.width());
    let (r, c) = stack.pixel_spacing();
    let spacing = [stack.slice_spacing(), r, c];
    let fused = state.fused();
    let prob = fused.mean.index_axis(Axis(0), k);
    let unc = fused.variance.index_axis(Axis(0), k);
    let mask = state.mask().slice(k);

    let (codes, range) = quantize(stack.slice(k));
    let visit = state.history().iter().find(|v| v.slice == k);
    let mut meta = role("image");
    meta.insert("slice".into(), json!(k));
    meta.insert("score".into(), json!(state.score(k)));
    meta.insert(
        "current_score".into(),
        json!(slice_uncertainty(unc, mask, state.config().zeta)),
    );
    meta.insert("intensity_range".into(), json!([range.0, range.1]));
    meta.insert("fetched".into(), json!(visit.is_some()));
    meta.insert("edited".into(), json!(visit.is_some_and(|v| v.edited)));
    meta.insert("contour".into(), json!(contour_segments(mask)));

    let mut out = frame(Kind::Stack, DType::U8, vec![1, h, w], &spacing, meta, &codes);
    out.extend(frame(
        Kind::Probgroup,
        DType::F32,
        vec![1, 1, h, w],
        &spacing,
        role("probability"),
        &ugstack::f32_bytes(prob),
    ));
    out.extend(frame(
        Kind::Uncertainty,
        DType::F32,
        vec![1, h, w],
        &spacing,
        role("uncertainty"),
        &ugstack::f32_bytes(unc),
    ));
    out.extend(frame(
        Kind::Mask,
        DType::U8,
        vec![1, h, w],
        &spacing,
        role("mask"),
        &mask.iter().copied().collect::<Vec<u8>>(),
    ));
    out
}

/// One mask slice as a `[1, H, W]` mask frame with `extra` in its header.
pub fn mask_frame(mask: ArrayView2<'_, u8>, spacing: [f64; 3], extra: Map<String, Value>) -> Vec<u8> {
    let (h, w) = mask.dim();
    frame(Kind::Mask, DType::U8, vec![1, h, w], &spacing, extra, &mask.iter().copied().collect::<Vec<u8>>())
}

/// Pixels whose mask value differs between `a` and `b`.
pub fn changed_pixels(a: ArrayView2<'_, u8>, b: &Array2<u8>) -> usize {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count()
}
