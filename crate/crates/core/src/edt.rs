//! Exact Euclidean distance transforms (separable lower-envelope algorithm of
//! Felzenszwalb and Huttenlocher), with per-axis pixel spacing.

use ndarray::{Array2, ArrayView2, Axis};

/// Squared distance from every pixel to the nearest `true` pixel of
/// `features`, in the units of `spacing` (`(row, col)`). Pixels get
/// `f64::INFINITY` when there are no features at all.
pub fn squared_distance_transform(features: ArrayView2<'_, bool>, spacing: (f64, f64)) -> Array2<f64> {
    let mut dist = features.mapv(|f| if f { 0.0 } else { f64::INFINITY });
    let (h, w) = dist.dim();
    let mut buf = Envelope::with_capacity(h.max(w));

    // columns (along rows), then rows (along cols)
    for mut col in dist.axis_iter_mut(Axis(1)) {
        let input: Vec<f64> = col.to_vec();
        buf.transform(&input, spacing.0);
        for (dst, src) in col.iter_mut().zip(&buf.out) {
            *dst = *src;
        }
    }
    for mut row in dist.axis_iter_mut(Axis(0)) {
        let input: Vec<f64> = row.to_vec();
        buf.transform(&input, spacing.1);
        for (dst, src) in row.iter_mut().zip(&buf.out) {
            *dst = *src;
        }
    }
    dist
}

/// Distance from every pixel to the nearest `true` pixel.
pub fn distance_transform(features: ArrayView2<'_, bool>, spacing: (f64, f64)) -> Array2<f64> {
    squared_distance_transform(features, spacing).mapv(f64::sqrt)
}

/// Signed distance of a binary mask with unit spacing: inside pixels carry
/// the distance to the nearest outside pixel (positive), outside pixels the
/// negated distance to the nearest inside pixel.
///
/// A mask without any inside (outside) pixels has no boundary; those pixels
/// get `-(h + w)` (`+(h + w)`), farther than any in-image distance.
pub fn signed_distance(mask: ArrayView2<'_, u8>) -> Array2<f64> {
    let (h, w) = mask.dim();
    let far = (h + w) as f64;
    let inside = mask.mapv(|v| v != 0);
    let outside = mask.mapv(|v| v == 0);
    let to_outside = distance_transform(outside.view(), (1.0, 1.0));
    let to_inside = distance_transform(inside.view(), (1.0, 1.0));
    Array2::from_shape_fn((h, w), |(r, c)| {
        if inside[[r, c]] {
            to_outside[[r, c]].min(far)
        } else {
            -to_inside[[r, c]].min(far)
        }
    })
}

struct Envelope {
    out: Vec<f64>,
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            out: Vec::with_capacity(n),
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n + 1),
        }
    }

    /// `out[p] = min_q (s * (p - q))^2 + f[q]`
    fn transform(&mut self, f: &[f64], s: f64) {
        let n = f.len();
        self.out.clear();
        self.sites.clear();
        self.bounds.clear();

        let x = |i: usize| i as f64 * s;
        let intersect = |q: usize, v: usize| -> f64 {
            ((f[q] + x(q) * x(q)) - (f[v] + x(v) * x(v))) / (2.0 * (x(q) - x(v)))
        };

        for q in (0..n).filter(|&q| f[q].is_finite()) {
            loop {
                match self.sites.last() {
                    None => {
                        self.sites.push(q);
                        self.bounds.push(f64::NEG_INFINITY);
                        break;
                    }
                    Some(&v) => {
                        let z = intersect(q, v);
                        if z <= *self.bounds.last().unwrap() {
                            self.sites.pop();
                            self.bounds.pop();
                        } else {
                            self.sites.push(q);
                            self.bounds.push(z);
                            break;
                        }
                    }
                }
            }
        }

        if self.sites.is_empty() {
            self.out.resize(n, f64::INFINITY);
            return;
        }

        let mut k = 0;
        for p in 0..n {
            let xp = x(p);
            while k + 1 < self.sites.len() && self.bounds[k + 1] < xp {
                k += 1;
            }
            let q = self.sites[k];
            let d = xp - x(q);
            self.out.push(d * d + f[q]);
        }
    }
}
