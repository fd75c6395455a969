//! Aspect-preserving resize onto a square model input, with padding.

use crate::scene::{BBox, Frame};

const PAD_VALUE: u8 = 114;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Letterbox {
    pub src_width: u32,
    pub src_height: u32,
    pub size: u32,
    pub scale: f64,
    pub pad_x: f64,
    pub pad_y: f64,
}

impl Letterbox {
    pub fn fit(src_width: u32, src_height: u32, size: u32) -> Self {
        let scale = size as f64 / src_width.max(src_height) as f64;
        let pad_x = (size as f64 - src_width as f64 * scale) / 2.0;
        let pad_y = (size as f64 - src_height as f64 * scale) / 2.0;
        Self {
            src_width,
            src_height,
            size,
            scale,
            pad_x,
            pad_y,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.src_width == self.size && self.src_height == self.size
    }

    pub fn to_model(&self, x: f64, y: f64) -> (f64, f64) {
        (x * self.scale + self.pad_x, y * self.scale + self.pad_y)
    }

    pub fn to_source(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.pad_x) / self.scale, (y - self.pad_y) / self.scale)
    }

    /// Maps a model-space box back to the source frame, clamped.
    pub fn box_to_source(&self, b: &BBox) -> BBox {
        let (x0, y0) = self.to_source(b.x_min, b.y_min);
        let (x1, y1) = self.to_source(b.x_max, b.y_max);
        BBox::in_frame(x0, y0, x1, y1, self.src_width, self.src_height)
    }

    /// Nearest-neighbour resample of `frame` into the model input.
    pub fn apply(&self, frame: &Frame) -> Frame {
        if self.is_identity() {
            return frame.clone();
        }
        let size = self.size as usize;
        let mut out = vec![PAD_VALUE; size * size * 3];
        for my in 0..size {
            for mx in 0..size {
                let (sx, sy) = self.to_source(mx as f64 + 0.5, my as f64 + 0.5);
                if sx < 0.0 || sy < 0.0 {
                    continue;
                }
                let (sx, sy) = (sx.floor() as u32, sy.floor() as u32);
                if sx >= frame.width() || sy >= frame.height() {
                    continue;
                }
                let p = frame.pixel(sx, sy);
                let i = (my * size + mx) * 3;
                out[i..i + 3].copy_from_slice(&p);
            }
        }
        Frame::new(out, self.size, self.size, frame.timestamp_ns(), frame.seq())
            .expect("letterbox output is well-formed")
    }
}
