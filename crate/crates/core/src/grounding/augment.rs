use image::RgbImage;
use rand::Rng;

use super::{pixel_in_frame, GroundingError, GroundingSample};

const MAX_ATTEMPTS: usize = 10;

/// Colour and affine jitter applied to one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub brightness: f64,
    pub contrast: f64,
    pub hue_shift_deg: f64,
    pub rotation_deg: f64,
    pub translate: [f64; 2],
    pub scale: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self {
            brightness: 1.0,
            contrast: 1.0,
            hue_shift_deg: 0.0,
            rotation_deg: 0.0,
            translate: [0.0, 0.0],
            scale: 1.0,
        }
    }

    /// Brightness and contrast within ±20%, hue within ±20% of a 60° sector,
    /// rotation ±15°, translation ±10% of the extent, scale 0.9–1.1.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Self {
        Self {
            brightness: rng.gen_range(0.8..=1.2),
            contrast: rng.gen_range(0.8..=1.2),
            hue_shift_deg: rng.gen_range(-12.0..=12.0),
            rotation_deg: rng.gen_range(-15.0..=15.0),
            translate: [
                rng.gen_range(-0.1..=0.1) * width as f64,
                rng.gen_range(-0.1..=0.1) * height as f64,
            ],
            scale: rng.gen_range(0.9..=1.1),
        }
    }

    /// Row-major 2×3 matrix taking source pixels to augmented pixels:
    /// scale and rotate about the image centre, then translate.
    pub fn affine(&self, width: usize, height: usize) -> [[f64; 3]; 2] {
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        let (a, b) = (self.scale * c, self.scale * s);
        [
            [a, -b, cx + self.translate[0] - a * cx + b * cy],
            [b, a, cy + self.translate[1] - b * cx - a * cy],
        ]
    }
}

fn apply_affine(m: &[[f64; 3]; 2], p: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2],
    ]
}

fn invert_affine(m: &[[f64; 3]; 2]) -> [[f64; 3]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let (a, b, c, d) = (m[1][1] / det, -m[0][1] / det, -m[1][0] / det, m[0][0] / det);
    [
        [a, b, -(a * m[0][2] + b * m[1][2])],
        [c, d, -(c * m[0][2] + d * m[1][2])],
    ]
}

fn sample_bilinear(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let px = |u: usize, v: usize| img.get_pixel(u as u32, v as u32).0;
    let (p00, p10, p01, p11) = (px(x0, y0), px(x1, y0), px(x0, y1), px(x1, y1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

fn rgb_to_hsv(c: [f64; 3]) -> [f64; 3] {
    let max = c[0].max(c[1]).max(c[2]);
    let min = c[0].min(c[1]).min(c[2]);
    let d = max - min;
    let h = if d == 0.0 {
        0.0
    } else if max == c[0] {
        60.0 * ((c[1] - c[2]) / d).rem_euclid(6.0)
    } else if max == c[1] {
        60.0 * ((c[2] - c[0]) / d + 2.0)
    } else {
        60.0 * ((c[0] - c[1]) / d + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { d / max };
    [h, s, max]
}

fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Applies `params`; `None` when the warped label leaves the frame.
pub fn apply_augmentation(
    sample: &GroundingSample,
    params: &AugmentParams,
) -> Option<GroundingSample> {
    let (w, h) = (
        sample.image.width() as usize,
        sample.image.height() as usize,
    );
    let m = params.affine(w, h);
    let pixel = apply_affine(&m, sample.pixel);
    if !pixel_in_frame(pixel, w, h) {
        return None;
    }
    let inv = invert_affine(&m);
    let mut warped: Vec<[f64; 3]> = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let [x, y] = apply_affine(&inv, [u as f64, v as f64]);
            let mut c = sample_bilinear(&sample.image, x, y);
            if params.hue_shift_deg != 0.0 {
                let mut hsv = rgb_to_hsv(c);
                hsv[0] += params.hue_shift_deg;
                c = hsv_to_rgb(hsv);
            }
            warped.push(c);
        }
    }
    let mean = warped
        .iter()
        .map(|c| (c[0] + c[1] + c[2]) / 3.0)
        .sum::<f64>()
        / (w * h) as f64;
    let mut image = RgbImage::new(w as u32, h as u32);
    for (px, c) in image.pixels_mut().zip(&warped) {
        for k in 0..3 {
            let x = ((c[k] - mean) * params.contrast + mean) * params.brightness;
            px.0[k] = x.round().clamp(0.0, 255.0) as u8;
        }
    }
    Some(GroundingSample {
        image,
        instruction: sample.instruction.clone(),
        pixel,
        skill: sample.skill.clone(),
    })
}

/// Draws random parameters until the label stays in frame (at most 10 tries).
pub fn augment_sample<R: Rng + ?Sized>(
    sample: &GroundingSample,
    rng: &mut R,
) -> Result<GroundingSample, GroundingError> {
    let (w, h) = (
        sample.image.width() as usize,
        sample.image.height() as usize,
    );
    for _ in 0..MAX_ATTEMPTS {
        let params = AugmentParams::sample(rng, w, h);
        if let Some(s) = apply_augmentation(sample, &params) {
            return Ok(s);
        }
    }
    Err(GroundingError::AugmentationExhausted(MAX_ATTEMPTS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(rng: &mut ChaCha8Rng, pixel: [f64; 2]) -> GroundingSample {
        GroundingSample {
            image: RgbImage::from_fn(40, 30, |_, _| image::Rgb([rng.gen(), rng.gen(), rng.gen()])),
            instruction: "pick up the lemon".into(),
            pixel,
            skill: "pick".into(),
        }
    }

    #[test]
    fn identity_leaves_sample_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = sample(&mut rng, [12.0, 7.5]);
        assert_eq!(
            apply_augmentation(&s, &AugmentParams::identity()).unwrap(),
            s
        );
    }

    #[test]
    fn pure_translation_shifts_label_and_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample(&mut rng, [12.0, 7.0]);
        let p = AugmentParams {
            translate: [10.0, 0.0],
            ..AugmentParams::identity()
        };
        let out = apply_augmentation(&s, &p).unwrap();
        assert_eq!(out.pixel, [22.0, 7.0]);
        assert_eq!(out.image.get_pixel(25, 4), s.image.get_pixel(15, 4));
    }

    #[test]
    fn label_leaving_frame_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = sample(&mut rng, [35.0, 7.0]);
        let p = AugmentParams {
            translate: [10.0, 0.0],
            ..AugmentParams::identity()
        };
        assert!(apply_augmentation(&s, &p).is_none());
    }

    // Homogeneous 3×3 composition T(c + t) · R(θ) · S(s) · T(-c).
    fn oracle_matrix(p: &AugmentParams, w: usize, h: usize) -> [[f64; 3]; 3] {
        let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
            let mut r = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
                }
            }
            r
        };
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        let t = |x: f64, y: f64| [[1.0, 0.0, x], [0.0, 1.0, y], [0.0, 0.0, 1.0]];
        let th = p.rotation_deg.to_radians();
        let rot = [
            [th.cos(), -th.sin(), 0.0],
            [th.sin(), th.cos(), 0.0],
            [0.0, 0.0, 1.0],
        ];
        let sc = [[p.scale, 0.0, 0.0], [0.0, p.scale, 0.0], [0.0, 0.0, 1.0]];
        mul(
            mul(mul(t(cx + p.translate[0], cy + p.translate[1]), rot), sc),
            t(-cx, -cy),
        )
    }

    #[test]
    fn warped_label_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut checked = 0;
        while checked < 50 {
            let pixel = [rng.gen_range(0.0..39.0), rng.gen_range(0.0..29.0)];
            let s = sample(&mut rng, pixel);
            let p = AugmentParams::sample(&mut rng, 40, 30);
            let Some(out) = apply_augmentation(&s, &p) else {
                continue;
            };
            let m = oracle_matrix(&p, 40, 30);
            let want = [
                m[0][0] * pixel[0] + m[0][1] * pixel[1] + m[0][2],
                m[1][0] * pixel[0] + m[1][1] * pixel[1] + m[1][2],
            ];
            assert!((out.pixel[0] - want[0]).hypot(out.pixel[1] - want[1]) < 0.5);
            checked += 1;
        }
    }

    #[test]
    fn affine_inverse_round_trips() {
        let p = AugmentParams {
            rotation_deg: 13.0,
            scale: 0.93,
            translate: [3.0, -2.0],
            ..AugmentParams::identity()
        };
        let m = p.affine(160, 120);
        let back = apply_affine(&invert_affine(&m), apply_affine(&m, [17.0, 99.0]));
        assert!((back[0] - 17.0).abs() < 1e-9 && (back[1] - 99.0).abs() < 1e-9);
    }

    #[test]
    fn hue_round_trip_and_shift() {
        for c in [[255.0, 0.0, 0.0], [12.0, 200.0, 90.0], [50.0, 50.0, 50.0]] {
            let back = hsv_to_rgb(rgb_to_hsv(c));
            for k in 0..3 {
                assert!((back[k] - c[k]).abs() < 1e-9);
            }
        }
        let mut hsv = rgb_to_hsv([255.0, 0.0, 0.0]);
        hsv[0] += 120.0;
        let g = hsv_to_rgb(hsv);
        assert!(g[1] > 254.0 && g[0] < 1e-9 && g[2] < 1e-9);
    }

    #[test]
    fn exhaustion_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = sample(&mut rng, [0.0, 0.0]);
        s.pixel = [-0.49, -0.49];
        let mut failures = 0;
        for _ in 0..50 {
            if matches!(
                augment_sample(&s, &mut rng),
                Err(GroundingError::AugmentationExhausted(10))
            ) {
                failures += 1;
            }
        }
        assert!(failures > 0);
    }
}
