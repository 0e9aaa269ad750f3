//! Seeded procedural face / non-face tiles.
//!
//! A stand-in corpus for the face detection experiments when real face and
//! natural-image rasters are not available: faces are shaded ellipses with
//! eyes, brows, nose and mouth under random pose, scale, contrast and noise;
//! non-faces are clutter built from rectangles, discs, stripes, gradients
//! and smoothed noise. Everything is 32x32 grayscale.

use super::image::GrayImage;
use crate::rng::Rng;

const SIDE: usize = 32;

struct Canvas {
    px: Vec<f32>,
}

impl Canvas {
    fn new(value: f32) -> Self {
        Self {
            px: vec![value; SIDE * SIDE],
        }
    }

    /// Filled ellipse blended towards `value` with a soft 1 px edge.
    fn ellipse(&mut self, cx: f32, cy: f32, rx: f32, ry: f32, angle: f32, value: f32) {
        let (s, c) = angle.sin_cos();
        for y in 0..SIDE {
            for x in 0..SIDE {
                let dx = x as f32 + 0.5 - cx;
                let dy = y as f32 + 0.5 - cy;
                let u = (dx * c + dy * s) / rx;
                let v = (-dx * s + dy * c) / ry;
                let r = (u * u + v * v).sqrt();
                let edge = 1.0 / rx.min(ry);
                let alpha = ((1.0 - r) / edge + 0.5).clamp(0.0, 1.0);
                let p = &mut self.px[y * SIDE + x];
                *p += alpha * (value - *p);
            }
        }
    }

    fn rect(&mut self, x0: f32, y0: f32, x1: f32, y1: f32, value: f32) {
        for y in 0..SIDE {
            for x in 0..SIDE {
                let (fx, fy) = (x as f32 + 0.5, y as f32 + 0.5);
                if fx >= x0 && fx < x1 && fy >= y0 && fy < y1 {
                    self.px[y * SIDE + x] = value;
                }
            }
        }
    }

    fn line(&mut self, x0: f32, y0: f32, x1: f32, y1: f32, width: f32, value: f32) {
        let (vx, vy) = (x1 - x0, y1 - y0);
        let len2 = (vx * vx + vy * vy).max(1e-6);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let (px, py) = (x as f32 + 0.5 - x0, y as f32 + 0.5 - y0);
                let t = ((px * vx + py * vy) / len2).clamp(0.0, 1.0);
                let (ex, ey) = (px - t * vx, py - t * vy);
                let d = (ex * ex + ey * ey).sqrt();
                let alpha = (width / 2.0 - d + 0.5).clamp(0.0, 1.0);
                let p = &mut self.px[y * SIDE + x];
                *p += alpha * (value - *p);
            }
        }
    }

    fn noise(&mut self, rng: &mut Rng, sigma: f32) {
        for p in &mut self.px {
            *p += sigma * gauss(rng);
        }
    }

    fn finish(self) -> GrayImage {
        let px = self
            .px
            .into_iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage::new(SIDE, SIDE, px).expect("fixed size")
    }
}

fn gauss(rng: &mut Rng) -> f32 {
    let u1 = rng.unit().max(1e-12);
    let u2 = rng.unit();
    ((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()) as f32
}

fn uniform(rng: &mut Rng, lo: f32, hi: f32) -> f32 {
    lo + (hi - lo) * rng.unit() as f32
}

/// One procedural face tile.
pub fn synth_face(rng: &mut Rng) -> GrayImage {
    let skin = uniform(rng, 110.0, 215.0);
    let bg_sign = if rng.chance(0.5) { -1.0 } else { 1.0 };
    let background = (skin + bg_sign * uniform(rng, 30.0, 100.0)).clamp(10.0, 245.0);
    let mut c = Canvas::new(background);

    let cx = 16.0 + uniform(rng, -2.5, 2.5);
    let cy = 17.0 + uniform(rng, -2.5, 2.5);
    let scale = uniform(rng, 0.78, 1.15);
    let tilt = uniform(rng, -0.25, 0.25);
    let rx = 10.5 * scale * uniform(rng, 0.9, 1.1);
    let ry = 13.5 * scale;
    let (ts, tc) = tilt.sin_cos();
    // face-local offsets rotated by the head tilt
    let at = |u: f32, v: f32| (cx + (u * tc - v * ts) * scale, cy + (u * ts + v * tc) * scale);

    c.ellipse(cx, cy, rx, ry, tilt, skin);
    // hair cap
    if rng.chance(0.75) {
        let hair = uniform(rng, 15.0, 90.0);
        let (hx, hy) = at(0.0, -10.5);
        c.ellipse(hx, hy, rx * 1.02, uniform(rng, 3.5, 6.5) * scale, tilt, hair);
    }
    let dark = (skin - uniform(rng, 60.0, 115.0)).max(0.0);
    let eye_dx = uniform(rng, 4.0, 5.4);
    let eye_y = uniform(rng, -3.8, -1.8);
    let eye_r = uniform(rng, 1.5, 2.4);
    for side in [-1.0f32, 1.0] {
        let (ex, ey) = at(side * eye_dx, eye_y);
        c.ellipse(ex, ey, eye_r * scale, 1.3 * scale, tilt, dark);
        if rng.chance(0.7) {
            let (bx0, by0) = at(side * (eye_dx - 2.2), eye_y - 2.8);
            let (bx1, by1) = at(side * (eye_dx + 2.2), eye_y - 3.2);
            c.line(bx0, by0, bx1, by1, 1.2, dark);
        }
    }
    if rng.chance(0.15) {
        // glasses bridge
        let (gx0, gy0) = at(-eye_dx, eye_y);
        let (gx1, gy1) = at(eye_dx, eye_y);
        c.line(gx0, gy0, gx1, gy1, 1.0, dark);
    }
    let nose = skin - uniform(rng, 20.0, 50.0);
    let (nx0, ny0) = at(0.0, eye_y + 1.5);
    let (nx1, ny1) = at(uniform(rng, -1.0, 1.0), 3.5);
    c.line(nx0, ny0, nx1, ny1, 1.3, nose);
    let (mx, my) = at(0.0, uniform(rng, 6.0, 8.5));
    c.ellipse(mx, my, uniform(rng, 2.5, 4.8) * scale, uniform(rng, 0.8, 1.6) * scale, tilt, dark);
    if rng.chance(0.2) {
        // beard shading on the jaw
        let (jx, jy) = at(0.0, 10.0);
        c.ellipse(jx, jy, rx * 0.8, 3.5 * scale, tilt, (skin - 60.0).max(0.0));
    }

    // side lighting
    let light = uniform(rng, -2.0, 2.0);
    for y in 0..SIDE {
        for x in 0..SIDE {
            c.px[y * SIDE + x] += light * (x as f32 - 16.0);
        }
    }
    let sigma = uniform(rng, 2.0, 8.0);
    c.noise(rng, sigma);
    c.finish()
}

/// One procedural non-face tile.
pub fn synth_nonface(rng: &mut Rng) -> GrayImage {
    let mut c = Canvas::new(uniform(rng, 20.0, 235.0));
    // gradient backdrop
    if rng.chance(0.5) {
        let g = uniform(rng, -4.0, 4.0);
        let angle = uniform(rng, 0.0, std::f32::consts::TAU);
        let (s, co) = angle.sin_cos();
        for y in 0..SIDE {
            for x in 0..SIDE {
                c.px[y * SIDE + x] += g * ((x as f32 - 16.0) * co + (y as f32 - 16.0) * s);
            }
        }
    }
    let shapes = 1 + rng.below(5);
    for _ in 0..shapes {
        let value = uniform(rng, 0.0, 255.0);
        match rng.below(5) {
            0 => {
                let (x0, y0) = (uniform(rng, -4.0, 28.0), uniform(rng, -4.0, 28.0));
                let (w, h) = (uniform(rng, 4.0, 24.0), uniform(rng, 4.0, 24.0));
                c.rect(x0, y0, x0 + w, y0 + h, value);
            }
            1 => {
                let r = uniform(rng, 2.0, 12.0);
                c.ellipse(
                    uniform(rng, 0.0, 32.0),
                    uniform(rng, 0.0, 32.0),
                    r,
                    r * uniform(rng, 0.5, 1.5),
                    uniform(rng, 0.0, std::f32::consts::PI),
                    value,
                );
            }
            2 => {
                let period = uniform(rng, 4.0, 10.0);
                let angle = uniform(rng, 0.0, std::f32::consts::PI);
                let (s, co) = angle.sin_cos();
                let amp = uniform(rng, 5.0, 25.0);
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let t = (x as f32 * co + y as f32 * s) / period;
                        c.px[y * SIDE + x] += amp * (t * std::f32::consts::TAU).sin();
                    }
                }
            }
            3 => {
                c.line(
                    uniform(rng, 0.0, 32.0),
                    uniform(rng, 0.0, 32.0),
                    uniform(rng, 0.0, 32.0),
                    uniform(rng, 0.0, 32.0),
                    uniform(rng, 1.0, 4.0),
                    value,
                );
            }
            _ => {
                // smoothed noise blob texture
                let mut field = vec![0f32; SIDE * SIDE];
                for v in &mut field {
                    *v = gauss(rng);
                }
                let radius = 1 + rng.below(3);
                let mut smooth = vec![0f32; SIDE * SIDE];
                for y in 0..SIDE {
                    for x in 0..SIDE {
                        let mut acc = 0.0;
                        let mut n = 0.0;
                        for yy in y.saturating_sub(radius)..(y + radius + 1).min(SIDE) {
                            for xx in x.saturating_sub(radius)..(x + radius + 1).min(SIDE) {
                                acc += field[yy * SIDE + xx];
                                n += 1.0;
                            }
                        }
                        smooth[y * SIDE + x] = acc / n;
                    }
                }
                let amp = uniform(rng, 10.0, 35.0);
                for (p, s) in c.px.iter_mut().zip(smooth) {
                    *p += amp * s;
                }
            }
        }
    }
    let sigma = uniform(rng, 2.0, 8.0);
    c.noise(rng, sigma);
    c.finish()
}

pub fn synth_faces(count: usize, rng: &mut Rng) -> Vec<GrayImage> {
    (0..count).map(|_| synth_face(rng)).collect()
}

pub fn synth_nonfaces(count: usize, rng: &mut Rng) -> Vec<GrayImage> {
    (0..count).map(|_| synth_nonface(rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_are_32x32_and_seeded() {
        let a = synth_face(&mut Rng::new(5));
        let b = synth_face(&mut Rng::new(5));
        assert_eq!(a, b);
        assert_eq!((a.height(), a.width()), (32, 32));
        let n = synth_nonface(&mut Rng::new(5));
        assert_eq!((n.height(), n.width()), (32, 32));
    }

    #[test]
    fn faces_have_dark_eyes_on_skin() {
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let f = synth_face(&mut rng);
            // darkest eye-band pixel is well below the nose ridge at the centre
            let band = (10..=18).flat_map(|y| (8..24).map(move |x| (y, x)));
            let min = band.map(|(y, x)| f.get(y, x)).min().unwrap();
            let mid = f.get(17, 16);
            assert!(mid as i32 - min as i32 > 10, "mid {mid} min {min}");
        }
    }
}
