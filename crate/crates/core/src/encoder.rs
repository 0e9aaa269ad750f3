//! Edge-filter convolution and channel-wise 1-WTA lateral inhibition.
//!
//! Convolution is valid-region only (stride 1, no padding), so a patch of
//! side `D + K_S - 1` yields a `D x D` spike vector. Running the encoder on a
//! whole frame yields a [`SpikeMap`] whose crops equal the per-patch
//! encodings, which is what the streaming scanner relies on.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::data::GrayImage;
use crate::error::{Error, Result};
use crate::vector::{CompressedVector, MAX_FILTERS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterBank {
    kernel_side: usize,
    kernels: Vec<Vec<i32>>,
    /// Winning response must be strictly above this to fire.
    pub threshold: i32,
}

impl FilterBank {
    /// Kernels are row-major `K_S x K_S` and must each sum to zero.
    pub fn new(kernel_side: usize, kernels: Vec<Vec<i32>>, threshold: i32) -> Result<Self> {
        if kernel_side == 0 {
            return Err(Error::Invalid("kernel side must be positive".into()));
        }
        if kernels.is_empty() || kernels.len() > MAX_FILTERS as usize {
            return Err(Error::Invalid(format!(
                "{} kernels, expected 1..={MAX_FILTERS}",
                kernels.len()
            )));
        }
        for (f, k) in kernels.iter().enumerate() {
            if k.len() != kernel_side * kernel_side {
                return Err(Error::Shape(format!(
                    "kernel {f} has {} coefficients, expected {}",
                    k.len(),
                    kernel_side * kernel_side
                )));
            }
            let sum: i32 = k.iter().sum();
            if sum != 0 {
                return Err(Error::Invalid(format!("kernel {f} sums to {sum}, not 0")));
            }
        }
        Ok(Self {
            kernel_side,
            kernels,
            threshold,
        })
    }

    /// `filters` step-edge detectors at evenly spaced orientations.
    ///
    /// Each coefficient is the sign of the projection of its offset from the
    /// kernel centre onto the orientation's normal, with cells on the edge
    /// line set to zero. Opposite orientations are exact negatives, and for
    /// 4 or 8 orientations all kernels share the same L1 norm.
    pub fn oriented(filters: u8, kernel_side: usize, threshold: i32) -> Result<Self> {
        let half = (kernel_side as f64 - 1.0) / 2.0;
        let kernels = (0..filters)
            .map(|f| {
                let angle = 2.0 * PI * f as f64 / filters as f64;
                let (sin, cos) = angle.sin_cos();
                let mut k = Vec::with_capacity(kernel_side * kernel_side);
                for row in 0..kernel_side {
                    for col in 0..kernel_side {
                        let dx = col as f64 - half;
                        let dy = row as f64 - half;
                        let v = dx * cos + dy * sin;
                        k.push(if v > 0.5 {
                            1
                        } else if v < -0.5 {
                            -1
                        } else {
                            0
                        });
                    }
                }
                k
            })
            .collect();
        Self::new(kernel_side, kernels, threshold)
    }

    /// Bright and dark bar detectors at `orientations` evenly spaced angles
    /// over 180°: even-phase Gabor kernels, mean-removed and rounded to
    /// integers (scale 16) with the rounding residual taken out so each
    /// kernel sums to zero. Kernel `2o` is the bright bar at orientation
    /// `o`, kernel `2o + 1` its exact negative.
    pub fn gabor_bars(
        orientations: u8,
        kernel_side: usize,
        sigma: f64,
        wavelength: f64,
        threshold: i32,
    ) -> Result<Self> {
        if orientations == 0 || sigma <= 0.0 || wavelength <= 0.0 {
            return Err(Error::Invalid(format!(
                "gabor bank needs positive parameters, got {orientations} orientations, sigma {sigma}, wavelength {wavelength}"
            )));
        }
        let half = (kernel_side as f64 - 1.0) / 2.0;
        let mut kernels = Vec::with_capacity(2 * orientations as usize);
        for o in 0..orientations {
            let (sin, cos) = (PI * o as f64 / orientations as f64).sin_cos();
            let mut k = Vec::with_capacity(kernel_side * kernel_side);
            for row in 0..kernel_side {
                for col in 0..kernel_side {
                    let (x, y) = (col as f64 - half, row as f64 - half);
                    let u = x * cos + y * sin;
                    let v = -x * sin + y * cos;
                    let envelope = (-(u * u + v * v) / (2.0 * sigma * sigma)).exp();
                    k.push(envelope * (2.0 * PI * u / wavelength).cos());
                }
            }
            let bright = quantize_zero_sum(&k, 16.0);
            kernels.push(bright.iter().map(|c| -c).collect());
            kernels.push(bright);
        }
        // negated first so the bright (positive centre) kernel comes first
        for pair in kernels.chunks_mut(2) {
            pair.swap(0, 1);
        }
        Self::new(kernel_side, kernels, threshold)
    }

    /// Default bank: bright/dark bars at 4 orientations, 5x5, sigma 1.2,
    /// wavelength 5, fire on any positive response.
    pub fn default_bank() -> Self {
        Self::gabor_bars(4, 5, 1.2, 5.0, 0).expect("default bank is well formed")
    }

    pub fn kernel_side(&self) -> usize {
        self.kernel_side
    }

    pub fn filters(&self) -> u8 {
        self.kernels.len() as u8
    }

    pub fn kernel(&self, f: usize) -> &[i32] {
        &self.kernels[f]
    }

    pub fn l1_norms(&self) -> Vec<i32> {
        self.kernels
            .iter()
            .map(|k| k.iter().map(|c| c.abs()).sum())
            .collect()
    }

    /// Parses the text format: a `F K_S` header line, then `F` blocks of
    /// `K_S` rows of `K_S` integers. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str, threshold: i32) -> Result<Self> {
        let mut tokens = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_whitespace);
        let mut next_int = |what: &str| -> Result<i64> {
            let tok = tokens
                .next()
                .ok_or_else(|| Error::Invalid(format!("filter file ends before {what}")))?;
            tok.parse::<i64>()
                .map_err(|_| Error::Invalid(format!("bad integer {tok:?} for {what}")))
        };
        let filters = next_int("filter count")?;
        let side = next_int("kernel side")?;
        if !(1..=MAX_FILTERS as i64).contains(&filters) || side <= 0 {
            return Err(Error::Invalid(format!(
                "bad filter file header: F={filters} K_S={side}"
            )));
        }
        let side = side as usize;
        let mut kernels = Vec::with_capacity(filters as usize);
        for f in 0..filters {
            let mut k = Vec::with_capacity(side * side);
            for _ in 0..side * side {
                let c = next_int(&format!("kernel {f}"))?;
                k.push(i32::try_from(c).map_err(|_| Error::Invalid(format!("coefficient {c} out of range")))?);
            }
            kernels.push(k);
        }
        if tokens.next().is_some() {
            return Err(Error::Invalid("trailing data after last kernel".into()));
        }
        Self::new(side, kernels, threshold)
    }

    pub fn load(path: impl AsRef<Path>, threshold: i32) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, threshold).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.filters(), self.kernel_side);
        for k in &self.kernels {
            for row in k.chunks(self.kernel_side) {
                let line: Vec<String> = row.iter().map(|c| format!("{c:>3}")).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
            out.push('\n');
        }
        out
    }
}

/// Filter responses laid out `[filter][y][x]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResponseMaps {
    pub filters: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<i32>,
}

impl ResponseMaps {
    pub fn get(&self, f: usize, y: usize, x: usize) -> i32 {
        self.data[(f * self.height + y) * self.width + x]
    }

    pub fn map(&self, f: usize) -> &[i32] {
        let n = self.height * self.width;
        &self.data[f * n..(f + 1) * n]
    }
}

/// Valid-region, stride-1 correlation of every kernel with `image`.
pub fn convolve(image: &GrayImage, bank: &FilterBank) -> Result<ResponseMaps> {
    let k = bank.kernel_side();
    if image.height() < k || image.width() < k {
        return Err(Error::Shape(format!(
            "{}x{} image is smaller than the {k}x{k} kernel",
            image.height(),
            image.width()
        )));
    }
    let out_h = image.height() - k + 1;
    let out_w = image.width() - k + 1;
    let pixels = image.pixels();
    let in_w = image.width();
    let mut data = vec![0i32; bank.filters() as usize * out_h * out_w];
    for (f, plane) in data.chunks_mut(out_h * out_w).enumerate() {
        let kernel = bank.kernel(f);
        for (ky, krow) in kernel.chunks(k).enumerate() {
            for (kx, &c) in krow.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                // Row-wise accumulation keeps the inner loop contiguous.
                for y in 0..out_h {
                    let src = &pixels[(y + ky) * in_w + kx..(y + ky) * in_w + kx + out_w];
                    let dst = &mut plane[y * out_w..(y + 1) * out_w];
                    for (d, &p) in dst.iter_mut().zip(src) {
                        *d += c * p as i32;
                    }
                }
            }
        }
    }
    Ok(ResponseMaps {
        filters: bank.filters() as usize,
        height: out_h,
        width: out_w,
        data,
    })
}

/// Mean-removed, scaled, rounded; then the entries whose rounding pushed
/// hardest towards the residual are nudged until the sum is exactly zero.
fn quantize_zero_sum(k: &[f64], scale: f64) -> Vec<i32> {
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    let exact: Vec<f64> = k.iter().map(|v| (v - mean) * scale).collect();
    let mut q: Vec<i32> = exact.iter().map(|v| v.round() as i32).collect();
    let mut residual: i32 = q.iter().sum();
    while residual != 0 {
        let dir = residual.signum();
        let worst = (0..q.len())
            .max_by(|&a, &b| {
                let ea = (q[a] as f64 - exact[a]) * dir as f64;
                let eb = (q[b] as f64 - exact[b]) * dir as f64;
                ea.total_cmp(&eb).then(b.cmp(&a))
            })
            .expect("non-empty kernel");
        q[worst] -= dir;
        residual -= dir;
    }
    q
}

/// Per-pixel winner index (1-based) over a rectangular map, 0 where silent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeMap {
    pub height: usize,
    pub width: usize,
    pub filters: u8,
    pub elems: Vec<u8>,
}

impl SpikeMap {
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.elems[y * self.width + x]
    }

    /// The `side x side` spike vector whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, side: usize) -> Result<CompressedVector> {
        if x + side > self.width || y + side > self.height {
            return Err(Error::Shape(format!(
                "crop at ({x}, {y}) of side {side} exceeds {}x{} map",
                self.height, self.width
            )));
        }
        let mut elems = Vec::with_capacity(side * side);
        for row in y..y + side {
            elems.extend_from_slice(&self.elems[row * self.width + x..row * self.width + x + side]);
        }
        CompressedVector::new(side, self.filters, elems)
    }

    /// Copies a crop into `out` without allocating. `out.len()` must be `side²`.
    pub fn crop_into(&self, x: usize, y: usize, side: usize, out: &mut [u8]) {
        for (r, dst) in out.chunks_mut(side).enumerate() {
            let start = (y + r) * self.width + x;
            dst.copy_from_slice(&self.elems[start..start + side]);
        }
    }
}

/// Channel-wise 1-WTA over a rectangular set of maps. Ties go to the lowest
/// filter index; a winner at or below `threshold` leaves the pixel silent.
pub fn lateral_inhibit_map(responses: &ResponseMaps, threshold: i32) -> SpikeMap {
    let n = responses.height * responses.width;
    let mut best = vec![i32::MIN; n];
    let mut elems = vec![0u8; n];
    for f in 0..responses.filters {
        for ((b, e), &r) in best.iter_mut().zip(elems.iter_mut()).zip(responses.map(f)) {
            // strict '>' keeps the earlier (lower) filter on ties
            if r > *b {
                *b = r;
                *e = f as u8 + 1;
            }
        }
    }
    for (e, &b) in elems.iter_mut().zip(&best) {
        if b <= threshold {
            *e = 0;
        }
    }
    SpikeMap {
        height: responses.height,
        width: responses.width,
        filters: responses.filters as u8,
        elems,
    }
}

/// 1-WTA over square `D x D` maps, producing a spike vector.
pub fn lateral_inhibit(responses: &ResponseMaps, threshold: i32) -> Result<CompressedVector> {
    if responses.height != responses.width {
        return Err(Error::Shape(format!(
            "spike vectors are square, got {}x{} maps",
            responses.height, responses.width
        )));
    }
    let map = lateral_inhibit_map(responses, threshold);
    CompressedVector::new(map.height, map.filters, map.elems)
}

/// Encodes a patch of side `D + K_S - 1` into a `D x D` spike vector.
pub fn encode(patch: &GrayImage, bank: &FilterBank) -> Result<CompressedVector> {
    lateral_inhibit(&convolve(patch, bank)?, bank.threshold)
}

/// Encodes a whole frame; crops of the result equal per-patch encodings.
pub fn encode_frame(frame: &GrayImage, bank: &FilterBank) -> Result<SpikeMap> {
    Ok(lateral_inhibit_map(&convolve(frame, bank)?, bank.threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertical_pair_bank() -> FilterBank {
        // 2x2: left column -1, right column +1
        FilterBank::new(2, vec![vec![-1, 1, -1, 1]], 0).unwrap()
    }

    #[test]
    fn default_bank_is_zero_sum_bar_pairs() {
        let bank = FilterBank::default_bank();
        assert_eq!(bank.filters(), 8);
        assert_eq!(bank.kernel_side(), 5);
        for f in 0..8 {
            assert_eq!(bank.kernel(f).iter().sum::<i32>(), 0);
        }
        for o in 0..4 {
            let bright = bank.kernel(2 * o);
            let dark = bank.kernel(2 * o + 1);
            assert!(bright.iter().zip(dark).all(|(x, y)| *x == -*y));
            assert!(bright[12] > 0, "centre of a bright bar is positive");
        }
        // orientation 0 varies along x: a vertical bar
        let v = bank.kernel(0);
        assert!(v[12] > v[10] && v[12] > v[14]);
        assert!(v[2] > v[0] && v[22] > v[24]);
    }

    #[test]
    fn sign_bank_has_equal_norms_and_opposite_pairs() {
        let bank = FilterBank::oriented(8, 5, 0).unwrap();
        let norms = bank.l1_norms();
        assert!(norms.iter().all(|&n| n == norms[0]), "{norms:?}");
        for f in 0..4 {
            let a = bank.kernel(f);
            let b = bank.kernel(f + 4);
            assert!(a.iter().zip(b).all(|(x, y)| *x == -*y));
        }
    }

    #[test]
    fn zero_sum_quantizer() {
        let q = quantize_zero_sum(&[0.1, 0.2, 0.33, 0.9, -0.4], 7.0);
        assert_eq!(q.iter().sum::<i32>(), 0);
        assert!(FilterBank::gabor_bars(0, 5, 1.0, 4.0, 0).is_err());
    }

    #[test]
    fn four_orientation_bank_is_balanced() {
        let bank = FilterBank::oriented(4, 5, 0).unwrap();
        let norms = bank.l1_norms();
        assert!(norms.iter().all(|&n| n == norms[0]));
    }

    #[test]
    fn rejects_non_zero_sum_kernel() {
        let mut k = vec![0; 9];
        k[4] = 1;
        assert!(FilterBank::new(3, vec![k], 0).is_err());
    }

    #[test]
    fn constant_patch_gives_zero_response() {
        let img = GrayImage::filled(14, 14, 173);
        let r = convolve(&img, &FilterBank::default_bank()).unwrap();
        assert_eq!((r.height, r.width), (10, 10));
        assert!(r.data.iter().all(|&v| v == 0));
        let s = encode(&img, &FilterBank::default_bank()).unwrap();
        assert_eq!(s.active_count(), 0);
    }

    #[test]
    fn vertical_step_peaks_on_edge_column() {
        // 6x6, dark columns 0..3, bright 3..6. The 2x2 window starting at
        // column 2 straddles the step; by hand its response is 2 * 255.
        let mut px = vec![0u8; 36];
        for y in 0..6 {
            for x in 3..6 {
                px[y * 6 + x] = 255;
            }
        }
        let img = GrayImage::new(6, 6, px).unwrap();
        let r = convolve(&img, &vertical_pair_bank()).unwrap();
        assert_eq!((r.height, r.width), (5, 5));
        for y in 0..5 {
            let row: Vec<i32> = (0..5).map(|x| r.get(0, y, x)).collect();
            assert_eq!(row, vec![0, 0, 510, 0, 0]);
        }
        let s = encode(&img, &vertical_pair_bank()).unwrap();
        let firing: Vec<usize> = s.active_pixels().collect();
        assert_eq!(firing, vec![2, 7, 12, 17, 22]);
    }

    #[test]
    fn mnist_geometry() {
        let img = GrayImage::filled(14, 14, 0);
        let r = convolve(&img, &FilterBank::default_bank()).unwrap();
        assert_eq!((r.filters, r.height, r.width), (8, 10, 10));
    }

    #[test]
    fn inhibition_examples() {
        let maps = |vals: Vec<i32>, filters: usize| ResponseMaps {
            filters,
            height: 1,
            width: 1,
            data: vals,
        };
        // below threshold
        assert_eq!(lateral_inhibit(&maps(vec![0, -3], 2), 0).unwrap().elems(), &[0]);
        // strict dominance
        assert_eq!(lateral_inhibit(&maps(vec![1, 9, 4], 3), 0).unwrap().elems(), &[2]);
        // tie goes low
        assert_eq!(lateral_inhibit(&maps(vec![5, 5], 2), 0).unwrap().elems(), &[1]);
    }

    #[test]
    fn exhaustive_two_filter_tie_break() {
        // Oracle: lowest index among the maxima, silent unless max > theta.
        for theta in -2..=2 {
            for a in -3..=3 {
                for b in -3..=3 {
                    let m = ResponseMaps {
                        filters: 2,
                        height: 1,
                        width: 1,
                        data: vec![a, b],
                    };
                    let max = a.max(b);
                    let expected = if max <= theta {
                        0
                    } else if a == max {
                        1
                    } else {
                        2
                    };
                    assert_eq!(lateral_inhibit(&m, theta).unwrap().get(0), expected);
                }
            }
        }
    }

    #[test]
    fn frame_crop_equals_patch_encoding() {
        let mut rng = crate::Rng::new(9);
        let px: Vec<u8> = (0..40 * 30).map(|_| rng.below(256) as u8).collect();
        let frame = GrayImage::new(30, 40, px).unwrap();
        let bank = FilterBank::default_bank();
        let map = encode_frame(&frame, &bank).unwrap();
        for &(x, y) in &[(0usize, 0usize), (5, 3), (26, 16), (3, 11)] {
            let patch = frame.crop(x, y, 14, 14).unwrap();
            assert_eq!(encode(&patch, &bank).unwrap(), map.crop(x, y, 10).unwrap());
        }
    }

    #[test]
    fn filter_file_round_trip() {
        let bank = FilterBank::default_bank();
        let text = bank.to_text();
        assert_eq!(FilterBank::parse(&text, 0).unwrap(), bank);
        assert!(FilterBank::parse("1 2\n1 -1\n", 0).is_err());
        assert!(FilterBank::parse("1 2\n1 -1 1 -1 5\n", 0).is_err());
    }
}
