//! Deterministic synthetic image sequences with a panning camera and
//! box-shaped objects, standing in for detector output on real footage.

use serde::{Deserialize, Serialize};

use crate::dataset::{BoundingBox, FrameDetections, GrayImage};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Multi-octave value noise defined on the whole plane. Sampling the field
/// at shifted coordinates yields exactly shifted images.
#[derive(Debug, Clone, Copy)]
pub struct TextureField {
    seed: u64,
    contrast: f64,
    scale: f64,
}

const OCTAVES: [(f64, f64); 3] = [(12.0, 0.5), (6.0, 0.3), (3.0, 0.2)];

impl TextureField {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            contrast: 1.0,
            scale: 1.0,
        }
    }

    pub fn with_contrast(seed: u64, contrast: f64) -> Self {
        Self {
            contrast,
            ..Self::new(seed)
        }
    }

    /// Multiplies every octave's lattice spacing by `scale`.
    pub fn scaled(self, scale: f64) -> Self {
        Self { scale, ..self }
    }

    fn lattice(&self, octave: usize, ix: i64, iy: i64) -> f64 {
        let h = splitmix64(
            self.seed
                ^ splitmix64(
                    (octave as u64) << 48 ^ (ix as u64).wrapping_mul(0x1F1F_1F1F) ^ (iy as u64).rotate_left(29),
                ),
        );
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Value in `[0, 1]`.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let mut acc = 0.0;
        for (o, (cell, amp)) in OCTAVES.iter().enumerate() {
            let cell = cell * self.scale;
            let (u, v) = (x / cell, y / cell);
            let (fx, fy) = (u.floor(), v.floor());
            let (tx, ty) = (smooth(u - fx), smooth(v - fy));
            let (ix, iy) = (fx as i64, fy as i64);
            let a = self.lattice(o, ix, iy);
            let b = self.lattice(o, ix + 1, iy);
            let c = self.lattice(o, ix, iy + 1);
            let d = self.lattice(o, ix + 1, iy + 1);
            acc += amp * (a + (b - a) * tx + (c - a) * ty + (a - b - c + d) * tx * ty);
        }
        (0.5 + (acc - 0.5) * self.contrast).clamp(0.0, 1.0)
    }

    pub fn sample_u8(&self, x: f64, y: f64) -> u8 {
        (20.0 + 215.0 * self.sample(x, y)).round() as u8
    }
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// A textured rectangle in world pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class_label: String,
    /// Top-left corner at frame 0, world pixels.
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    /// World-frame motion in pixels per frame.
    pub velocity: (f64, f64),
    pub texture_seed: u64,
}

impl SceneObject {
    pub fn is_moving(&self) -> bool {
        self.velocity.0 != 0.0 || self.velocity.1 != 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: f64,
    /// Camera pan in pixels per frame; background appears to move by the opposite.
    pub pan: (f64, f64),
    pub background_seed: u64,
    pub objects: Vec<SceneObject>,
}

impl SequenceSpec {
    /// Camera pan, one walking person, one stationary person.
    pub fn walking(seed: u64, width: usize, height: usize, frames: usize) -> Self {
        let (w, h) = (width as f64, height as f64);
        Self {
            width,
            height,
            frames,
            fps: 30.0,
            pan: (1.5, 0.5),
            background_seed: seed,
            objects: vec![
                SceneObject {
                    class_label: "person".into(),
                    x: 0.12 * w,
                    y: 0.25 * h,
                    w: 0.18 * w,
                    h: 0.5 * h,
                    velocity: (3.0, 0.0),
                    texture_seed: seed.wrapping_add(101),
                },
                SceneObject {
                    class_label: "person".into(),
                    x: 0.62 * w,
                    y: 0.3 * h,
                    w: 0.18 * w,
                    h: 0.45 * h,
                    velocity: (0.0, 0.0),
                    texture_seed: seed.wrapping_add(202),
                },
            ],
        }
    }

    /// Camera pan with two stationary people.
    pub fn sitting(seed: u64, width: usize, height: usize, frames: usize) -> Self {
        let mut spec = Self::walking(seed, width, height, frames);
        spec.objects[0].velocity = (0.0, 0.0);
        spec
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        frame as f64 / self.fps
    }

    fn camera(&self, frame: usize) -> (f64, f64) {
        (self.pan.0 * frame as f64, self.pan.1 * frame as f64)
    }

    fn object_origin(&self, obj: &SceneObject, frame: usize) -> (f64, f64) {
        (
            obj.x + obj.velocity.0 * frame as f64,
            obj.y + obj.velocity.1 * frame as f64,
        )
    }

    pub fn render_frame(&self, frame: usize) -> GrayImage {
        let bg = TextureField::new(self.background_seed);
        let textures: Vec<TextureField> = self
            .objects
            .iter()
            .map(|o| TextureField::with_contrast(o.texture_seed, 1.6))
            .collect();
        let origins: Vec<(f64, f64)> = self.objects.iter().map(|o| self.object_origin(o, frame)).collect();
        let (cx, cy) = self.camera(frame);
        GrayImage::from_fn(self.width, self.height, |x, y| {
            let (wx, wy) = (x as f64 + cx, y as f64 + cy);
            for (k, obj) in self.objects.iter().enumerate().rev() {
                let (ox, oy) = origins[k];
                if wx >= ox && wx < ox + obj.w && wy >= oy && wy < oy + obj.h {
                    return textures[k].sample_u8(wx - ox, wy - oy);
                }
            }
            bg.sample_u8(wx, wy)
        })
    }

    pub fn detections(&self, frame: usize) -> FrameDetections {
        let (cx, cy) = self.camera(frame);
        let mut det = FrameDetections {
            timestamp: self.timestamp(frame),
            boxes: self
                .objects
                .iter()
                .map(|o| {
                    let (ox, oy) = self.object_origin(o, frame);
                    BoundingBox {
                        class_label: o.class_label.clone(),
                        score: 0.9,
                        x: ox - cx,
                        y: oy - cy,
                        w: o.w,
                        h: o.h,
                    }
                })
                .collect(),
        };
        det.clamp_to(self.width, self.height);
        det
    }

    /// Ground-truth motion flag per object.
    pub fn moving_flags(&self) -> Vec<bool> {
        self.objects.iter().map(SceneObject::is_moving).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn texture_is_deterministic_and_in_range() {
        let t = TextureField::new(3);
        for i in 0..1000 {
            let (x, y) = (i as f64 * 0.37 - 100.0, i as f64 * 0.11);
            let v = t.sample(x, y);
            assert!((0.0..=1.0).contains(&v));
            assert_eq!(v, TextureField::new(3).sample(x, y));
        }
        assert_ne!(
            TextureField::new(3).sample(5.5, 5.5),
            TextureField::new(4).sample(5.5, 5.5)
        );
    }

    #[test]
    fn walking_boxes_track_objects() {
        let spec = SequenceSpec::walking(1, 320, 240, 5);
        let d0 = spec.detections(0);
        let d4 = spec.detections(4);
        // moving box: +3 px/frame world, -1.5 px/frame pan
        assert!((d4.boxes[0].x - d0.boxes[0].x - 6.0).abs() < 1e-9);
        assert!((d4.boxes[1].x - d0.boxes[1].x + 6.0).abs() < 1e-9);
        assert_eq!(spec.moving_flags(), vec![true, false]);
        assert_eq!(spec.render_frame(2), spec.render_frame(2));
    }
}
