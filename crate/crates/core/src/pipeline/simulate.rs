//! Simulated user: scribbles derived from the disagreement between a
//! prediction and the ground truth.

use ndarray::{Array2, ArrayView2};

use crate::edt::distance_transform;
use crate::error::{Error, Result};
use crate::geodesic::NEIGHBORS_8;
use crate::scribble::{line_pixels, Label, Pixel, ScribbleSet};

/// Default minimum error-component size, in pixels, that a simulated user scribbles.
pub const MIN_COMPONENT: usize = 20;

/// 8-connected components of the `true` pixels, each in row-major order.
pub fn connected_components(region: ArrayView2<'_, bool>) -> Vec<Vec<Pixel>> {
    let (h, w) = region.dim();
    let mut seen = Array2::from_elem((h, w), false);
    let mut out = Vec::new();
    for ((r, c), &on) in region.indexed_iter() {
        if !on || seen[[r, c]] {
            continue;
        }
        let mut stack = vec![(r, c)];
        seen[[r, c]] = true;
        let mut comp = Vec::new();
        while let Some((pr, pc)) = stack.pop() {
            comp.push((pr, pc));
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let (nr, nc) = (nr as usize, nc as usize);
                if region[[nr, nc]] && !seen[[nr, nc]] {
                    seen[[nr, nc]] = true;
                    stack.push((nr, nc));
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Error components of `pred` against `gt` with at least `min_component`
/// pixels: `(label to paint, pixels)`. Missed foreground comes first.
pub fn error_components(
    pred: ArrayView2<'_, u8>,
    gt: ArrayView2<'_, u8>,
    min_component: usize,
) -> Result<Vec<(Label, Vec<Pixel>)>> {
    if pred.dim() != gt.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs ground truth {:?}", pred.dim(), gt.dim())));
    }
    let missed = ndarray::Zip::from(&gt).and(&pred).map_collect(|&g, &p| g != 0 && p == 0);
    let extra = ndarray::Zip::from(&gt).and(&pred).map_collect(|&g, &p| g == 0 && p != 0);
    let mut out = Vec::new();
    for (label, region) in [(Label::Foreground, missed), (Label::Background, extra)] {
        for comp in connected_components(region.view()) {
            if comp.len() >= min_component {
                out.push((label, comp));
            }
        }
    }
    Ok(out)
}

/// Pixels of the component at least half its maximal depth away from the
/// component boundary.
fn component_core(comp: &[Pixel], dim: (usize, usize)) -> Vec<Pixel> {
    let mut outside = Array2::from_elem(dim, true);
    for &p in comp {
        outside[p] = false;
    }
    let depth = distance_transform(outside.view(), (1.0, 1.0));
    let max = comp.iter().map(|&p| depth[p]).fold(0.0, f64::max);
    comp.iter().copied().filter(|&p| depth[p] >= 0.5 * max).collect()
}

/// Chain core pixels into polylines by nearest-neighbor walking. A jump
/// whose straight segment would leave the component starts a new polyline.
fn chain(core: &[Pixel], inside: &Array2<bool>) -> Vec<Vec<[i64; 2]>> {
    let mut remaining: Vec<Pixel> = core.to_vec();
    let mut lines: Vec<Vec<[i64; 2]>> = Vec::new();
    let Some(first) = remaining.first().copied() else {
        return lines;
    };
    remaining.remove(0);
    let mut current = first;
    let mut line = vec![[first.0 as i64, first.1 as i64]];
    while !remaining.is_empty() {
        let (idx, _) = remaining
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| {
                let (dr, dc) = (r as i64 - current.0 as i64, c as i64 - current.1 as i64);
                (i, dr * dr + dc * dc)
            })
            .min_by_key(|&(i, d)| (d, i))
            .expect("remaining is non-empty");
        let next = remaining.remove(idx);
        let a = [current.0 as i64, current.1 as i64];
        let b = [next.0 as i64, next.1 as i64];
        let stays_inside = line_pixels(a, b).iter().all(|&(r, c)| inside[[r as usize, c as usize]]);
        if !stays_inside {
            lines.push(std::mem::take(&mut line));
        }
        line.push(b);
        current = next;
    }
    lines.push(line);
    lines
}

/// Scribbles a user would draw to correct `pred` towards `gt`: one stroke
/// set along the inner core of every error component with at least
/// `min_component` pixels, foreground for missed regions and background for
/// spurious ones. Returns an empty set when no component qualifies.
pub fn simulate_scribbles(
    pred: ArrayView2<'_, u8>,
    gt: ArrayView2<'_, u8>,
    min_component: usize,
    slice: usize,
) -> Result<ScribbleSet> {
    let dim = pred.dim();
    let mut set = ScribbleSet::new(slice);
    for (label, comp) in error_components(pred, gt, min_component)? {
        let mut inside = Array2::from_elem(dim, false);
        for &p in &comp {
            inside[p] = true;
        }
        let core = component_core(&comp, dim);
        for polyline in chain(&core, &inside) {
            set.push(label, polyline, 0);
        }
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scribble::rasterize_scribbles;

    fn disk(n: usize, radius: f64) -> Array2<u8> {
        let c = (n / 2) as f64;
        Array2::from_shape_fn((n, n), |(r, cc)| {
            let (dr, dc) = (r as f64 - c, cc as f64 - c);
            (dr * dr + dc * dc < radius * radius) as u8
        })
    }

    #[test]
    fn identical_masks_need_no_scribbles() {
        let gt = disk(32, 10.0);
        assert!(simulate_scribbles(gt.view(), gt.view(), MIN_COMPONENT, 0).unwrap().is_empty());
    }

    #[test]
    fn notch_gets_one_foreground_stroke_inside_it() {
        let gt = disk(40, 14.0);
        let mut pred = gt.clone();
        // 5x5 notch at the top of the disk
        for r in 7..12 {
            for c in 18..23 {
                pred[[r, c]] = 0;
            }
        }
        let set = simulate_scribbles(pred.view(), gt.view(), MIN_COMPONENT, 3).unwrap();
        assert_eq!(set.slice, 3);
        assert_eq!(set.strokes.len(), 1);
        assert_eq!(set.strokes[0].label, Label::Foreground);
        let raster = rasterize_scribbles(&set, 40, 40).unwrap();
        assert!(!raster.foreground.is_empty());
        assert!(raster.foreground.iter().all(|&p| gt[p] == 1 && pred[p] == 0));
    }

    #[test]
    fn small_components_ignored() {
        let gt = disk(32, 10.0);
        let mut pred = gt.clone();
        pred[[16, 16]] = 0;
        pred[[16, 17]] = 0;
        pred[[0, 0]] = 1;
        assert!(simulate_scribbles(pred.view(), gt.view(), MIN_COMPONENT, 0).unwrap().is_empty());
        assert_eq!(simulate_scribbles(pred.view(), gt.view(), 1, 0).unwrap().strokes.len(), 2);
    }

    #[test]
    fn spurious_region_gets_background_stroke() {
        let gt = disk(40, 8.0);
        let mut pred = gt.clone();
        for r in 2..9 {
            for c in 2..9 {
                pred[[r, c]] = 1;
            }
        }
        let set = simulate_scribbles(pred.view(), gt.view(), MIN_COMPONENT, 0).unwrap();
        let raster = rasterize_scribbles(&set, 40, 40).unwrap();
        assert!(raster.foreground.is_empty());
        assert!(!raster.background.is_empty());
        assert!(raster.background.iter().all(|&p| gt[p] == 0 && pred[p] == 1));
    }

    #[test]
    fn non_convex_component_strokes_stay_inside() {
        // U-shaped missed region
        let gt = Array2::from_shape_fn((30, 30), |(r, c)| {
            let u = (5..25).contains(&r) && ((5..10).contains(&c) || (20..25).contains(&c));
            let base = (20..25).contains(&r) && (5..25).contains(&c);
            (u || base) as u8
        });
        let pred = Array2::<u8>::zeros((30, 30));
        let set = simulate_scribbles(pred.view(), gt.view(), MIN_COMPONENT, 0).unwrap();
        let raster = rasterize_scribbles(&set, 30, 30).unwrap();
        assert!(raster.foreground.iter().all(|&p| gt[p] == 1));
    }

    #[test]
    fn components_are_eight_connected() {
        let region = ndarray::array![[true, false, false], [false, true, false], [false, false, false], [true, true, false]];
        let comps = connected_components(region.view());
        assert_eq!(comps, vec![vec![(0, 0), (1, 1)], vec![(3, 0), (3, 1)]]);
    }
}
