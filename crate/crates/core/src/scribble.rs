//! User scribbles and their rasterization into foreground/background pixel sets.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(row, col)`
pub type Pixel = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "fg")]
    Foreground,
    #[serde(rename = "bg")]
    Background,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stroke {
    pub label: Label,
    /// `[row, col]` points.
    pub polyline: Vec<[i64; 2]>,
    #[serde(default)]
    pub radius: u32,
}

/// Strokes drawn on one slice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScribbleSet {
    pub slice: usize,
    #[serde(default)]
    pub strokes: Vec<Stroke>,
}

impl ScribbleSet {
    pub fn new(slice: usize) -> Self {
        Self {
            slice,
            strokes: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.strokes.is_empty()
    }

    pub fn push(&mut self, label: Label, polyline: Vec<[i64; 2]>, radius: u32) {
        self.strokes.push(Stroke {
            label,
            polyline,
            radius,
        });
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::InvalidData(format!("scribble json: {e}")))
    }
}

/// Disjoint foreground (`F`) and background (`B`) pixel sets, each in
/// row-major order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rasterized {
    pub foreground: Vec<Pixel>,
    pub background: Vec<Pixel>,
}

impl Rasterized {
    pub fn is_empty(&self) -> bool {
        self.foreground.is_empty() && self.background.is_empty()
    }
}

/// Rasterize every stroke: polylines by 8-connected line stepping, each
/// pixel dilated by a disk of the stroke radius. Where strokes overlap the
/// later one wins, so the two sets are disjoint.
///
/// Any point outside the image rejects the whole set.
pub fn rasterize_scribbles(set: &ScribbleSet, height: usize, width: usize) -> Result<Rasterized> {
    for stroke in &set.strokes {
        if stroke.polyline.is_empty() {
            return Err(Error::InvalidData("stroke with an empty polyline".into()));
        }
        for &[row, col] in &stroke.polyline {
            if row < 0 || col < 0 || row as usize >= height || col as usize >= width {
                return Err(Error::ScribbleOutOfBounds {
                    row,
                    col,
                    height,
                    width,
                });
            }
        }
    }

    // 0 = unlabeled, 1 = foreground, 2 = background
    let mut labels = Array2::<u8>::zeros((height, width));
    for stroke in &set.strokes {
        let value = match stroke.label {
            Label::Foreground => 1,
            Label::Background => 2,
        };
        let offsets = disk_offsets(stroke.radius);
        let mut paint = |r: i64, c: i64| {
            for &(dr, dc) in &offsets {
                let (rr, cc) = (r + dr, c + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < height && (cc as usize) < width {
                    labels[[rr as usize, cc as usize]] = value;
                }
            }
        };
        let pts = &stroke.polyline;
        paint(pts[0][0], pts[0][1]);
        for seg in pts.windows(2) {
            for (r, c) in line_pixels(seg[0], seg[1]) {
                paint(r, c);
            }
        }
    }

    let mut out = Rasterized::default();
    for ((r, c), v) in labels.indexed_iter() {
        match v {
            1 => out.foreground.push((r, c)),
            2 => out.background.push((r, c)),
            _ => {}
        }
    }
    Ok(out)
}

fn disk_offsets(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dr in -r..=r {
        for dc in -r..=r {
            if dr * dr + dc * dc <= r * r {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Bresenham stepping from `a` to `b`, both endpoints included.
pub fn line_pixels(a: [i64; 2], b: [i64; 2]) -> Vec<(i64, i64)> {
    let (mut r, mut c) = (a[0], a[1]);
    let dr = (b[0] - r).abs();
    let dc = -(b[1] - c).abs();
    let sr = if r < b[0] { 1 } else { -1 };
    let sc = if c < b[1] { 1 } else { -1 };
    let mut err = dr + dc;
    let mut out = Vec::with_capacity((dr.max(-dc) + 1) as usize);
    loop {
        out.push((r, c));
        if r == b[0] && c == b[1] {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dc {
            err += dc;
            r += sr;
        }
        if e2 <= dr {
            err += dr;
            c += sc;
        }
    }
    out
}
