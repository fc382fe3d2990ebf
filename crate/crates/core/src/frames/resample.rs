/// Axis-aligned source region in sensor pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CropRect {
    pub x0: f64,
    pub y0: f64,
    pub width: f64,
    pub height: f64,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            width: width as f64,
            height: height as f64,
        }
    }
}

/// Area (box-filter) resampling of a crop onto a square grid. Each output
/// pixel is the overlap-weighted mean of the source pixels under its
/// footprint, so a uniform image stays uniform and block downsampling by an
/// integer factor averages the block.
pub struct Resampler {
    src_width: usize,
    src_height: usize,
    out: usize,
    identity: bool,
    cols: Vec<Vec<(usize, f64)>>,
    rows: Vec<Vec<(usize, f64)>>,
}

fn axis_weights(start: f64, len: f64, src_len: usize, out: usize) -> Vec<Vec<(usize, f64)>> {
    let step = len / out as f64;
    (0..out)
        .map(|i| {
            let a = start + i as f64 * step;
            let b = a + step;
            let first = a.floor().max(0.0) as usize;
            let last = (b.ceil() as usize).min(src_len);
            (first..last)
                .filter_map(|p| {
                    let overlap = b.min(p as f64 + 1.0) - a.max(p as f64);
                    (overlap > 0.0).then_some((p, overlap / step))
                })
                .collect()
        })
        .collect()
}

impl Resampler {
    pub fn new(src_width: usize, src_height: usize, crop: CropRect, out: usize) -> Self {
        let identity = src_width == out && src_height == out && crop == CropRect::full(src_width, src_height);
        let (cols, rows) = if identity {
            (Vec::new(), Vec::new())
        } else {
            (
                axis_weights(crop.x0, crop.width, src_width, out),
                axis_weights(crop.y0, crop.height, src_height, out),
            )
        };
        Self {
            src_width,
            src_height,
            out,
            identity,
            cols,
            rows,
        }
    }

    /// `src` is `[row][col][channel]` at source resolution.
    pub fn apply(&self, src: &[f64], channels: usize) -> Vec<f64> {
        debug_assert_eq!(src.len(), self.src_width * self.src_height * channels);
        if self.identity {
            return src.to_vec();
        }
        let out = self.out;
        // Horizontal pass: src_height x out.
        let mut tmp = vec![0.0; self.src_height * out * channels];
        for y in 0..self.src_height {
            let src_row = &src[y * self.src_width * channels..(y + 1) * self.src_width * channels];
            for (c, weights) in self.cols.iter().enumerate() {
                let dst = &mut tmp[(y * out + c) * channels..(y * out + c + 1) * channels];
                for &(x, w) in weights {
                    for ch in 0..channels {
                        dst[ch] += w * src_row[x * channels + ch];
                    }
                }
            }
        }
        let mut res = vec![0.0; out * out * channels];
        for (r, weights) in self.rows.iter().enumerate() {
            for &(y, w) in weights {
                let src_row = &tmp[y * out * channels..(y + 1) * out * channels];
                let dst = &mut res[r * out * channels..(r + 1) * out * channels];
                for (d, s) in dst.iter_mut().zip(src_row) {
                    *d += w * s;
                }
            }
        }
        res
    }
}
