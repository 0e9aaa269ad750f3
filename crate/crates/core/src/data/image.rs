use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit grayscale raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} pixels for a {height}x{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<GrayImage> {
        if x + width > self.width || y + height > self.height {
            return Err(Error::Shape(format!(
                "crop {width}x{height} at ({x}, {y}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut pixels = Vec::with_capacity(width * height);
        for row in y..y + height {
            pixels.extend_from_slice(&self.pixels[row * self.width + x..row * self.width + x + width]);
        }
        Ok(GrayImage {
            height,
            width,
            pixels,
        })
    }

    /// Copies `tile` with its top-left corner at `(x, y)`.
    pub fn paste(&mut self, tile: &GrayImage, x: usize, y: usize) -> Result<()> {
        if x + tile.width > self.width || y + tile.height > self.height {
            return Err(Error::Shape(format!(
                "tile {}x{} at ({x}, {y}) exceeds {}x{} canvas",
                tile.width, tile.height, self.width, self.height
            )));
        }
        for (r, src) in tile.pixels.chunks(tile.width).enumerate() {
            let start = (y + r) * self.width + x;
            self.pixels[start..start + tile.width].copy_from_slice(src);
        }
        Ok(())
    }
}

/// Halves both dimensions; each output pixel is the mean of its 2x2 block,
/// rounded half up.
pub fn downscale_2x2(img: &GrayImage) -> Result<GrayImage> {
    if !img.height.is_multiple_of(2) || !img.width.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "2x2 downscale needs even dimensions, got {}x{}",
            img.height, img.width
        )));
    }
    let (h, w) = (img.height / 2, img.width / 2);
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let sum = img.get(2 * y, 2 * x) as u32
                + img.get(2 * y, 2 * x + 1) as u32
                + img.get(2 * y + 1, 2 * x) as u32
                + img.get(2 * y + 1, 2 * x + 1) as u32;
            out.push(((sum + 2) / 4) as u8);
        }
    }
    GrayImage::new(h, w, out)
}

/// Area-mean resampling to `height x width` (exact box coverage per output
/// pixel, so downscaling by an integer factor is a plain block mean).
pub fn resize_area(img: &GrayImage, height: usize, width: usize) -> Result<GrayImage> {
    if height == 0 || width == 0 || img.height == 0 || img.width == 0 {
        return Err(Error::Shape("cannot resize to or from an empty image".into()));
    }
    let sy = img.height as f64 / height as f64;
    let sx = img.width as f64 / width as f64;
    let mut out = Vec::with_capacity(height * width);
    for oy in 0..height {
        let (y0, y1) = (oy as f64 * sy, (oy + 1) as f64 * sy);
        for ox in 0..width {
            let (x0, x1) = (ox as f64 * sx, (ox + 1) as f64 * sx);
            let mut acc = 0.0;
            let mut area = 0.0;
            for iy in y0.floor() as usize..(y1.ceil() as usize).min(img.height) {
                let cy = (y1.min(iy as f64 + 1.0) - y0.max(iy as f64)).max(0.0);
                for ix in x0.floor() as usize..(x1.ceil() as usize).min(img.width) {
                    let cx = (x1.min(ix as f64 + 1.0) - x0.max(ix as f64)).max(0.0);
                    acc += cy * cx * img.get(iy, ix) as f64;
                    area += cy * cx;
                }
            }
            out.push((acc / area).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(height, width, out)
}

/// Rec.601 luma from interleaved or planar RGB components.
pub fn luma601(r: u8, g: u8, b: u8) -> u8 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
        .round()
        .clamp(0.0, 255.0) as u8
}

/// Reads a binary (P5) PGM with maxval <= 255.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated PGM header".into());
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if header[0] != "P5" {
        return Err(format!("unsupported PGM magic {:?} (only P5)", header[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad PGM header field {s:?}"));
    let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if maxval == 0 || maxval > 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    pos += 1; // single whitespace after maxval
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(format!("PGM payload truncated: {} of {n} bytes", bytes.len().saturating_sub(pos)));
    }
    let mut pixels = bytes[pos..pos + n].to_vec();
    if maxval != 255 {
        for p in &mut pixels {
            *p = ((*p as usize * 255 + maxval / 2) / maxval).min(255) as u8;
        }
    }
    GrayImage::new(height, width, pixels).map_err(|e| e.to_string())
}

pub fn write_pgm(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Every `*.pgm` in `dir`, sorted by file name, resized to `side x side`
/// by area mean when needed.
pub fn read_pgm_dir(dir: impl AsRef<Path>, side: usize) -> Result<Vec<GrayImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let img = read_pgm(p)?;
            if img.height == side && img.width == side {
                Ok(img)
            } else {
                resize_area(&img, side, side)
            }
        })
        .collect()
}

/// CIFAR-10 binary batch (`1 label byte + 3072 planar RGB bytes` per record),
/// converted to grayscale.
pub fn read_cifar_batch(path: impl AsRef<Path>) -> Result<Vec<(u8, GrayImage)>> {
    const PLANE: usize = 32 * 32;
    const RECORD: usize = 1 + 3 * PLANE;
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.is_empty() || bytes.len() % RECORD != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed: bytes.len().div_ceil(RECORD).max(1) * RECORD,
            available: bytes.len(),
        });
    }
    bytes
        .chunks(RECORD)
        .map(|rec| {
            let (r, g, b) = (&rec[1..1 + PLANE], &rec[1 + PLANE..1 + 2 * PLANE], &rec[1 + 2 * PLANE..]);
            let px = (0..PLANE).map(|i| luma601(r[i], g[i], b[i])).collect();
            Ok((rec[0], GrayImage::new(32, 32, px)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn downscale_constant() {
        let img = GrayImage::filled(28, 28, 77);
        let d = downscale_2x2(&img).unwrap();
        assert_eq!((d.height(), d.width()), (14, 14));
        assert!(d.pixels().iter().all(|&p| p == 77));
    }

    #[test]
    fn downscale_rounds_half_up() {
        let img = GrayImage::new(2, 2, vec![0, 0, 255, 255]).unwrap();
        assert_eq!(downscale_2x2(&img).unwrap().pixels(), &[128]);
    }

    #[test]
    fn downscale_checkerboard_is_uniform() {
        let px = (0..28 * 28)
            .map(|i| if (i / 28 + i % 28) % 2 == 0 { 0 } else { 255 })
            .collect();
        let img = GrayImage::new(28, 28, px).unwrap();
        assert!(downscale_2x2(&img).unwrap().pixels().iter().all(|&p| p == 128));
    }

    #[test]
    fn downscale_rejects_odd() {
        assert!(downscale_2x2(&GrayImage::filled(3, 4, 0)).is_err());
    }

    #[test]
    fn area_resize_integer_factor_is_block_mean() {
        let px: Vec<u8> = (0..16).map(|i| (i * 10) as u8).collect();
        let img = GrayImage::new(4, 4, px).unwrap();
        let r = resize_area(&img, 2, 2).unwrap();
        // block (0,0): 0,10,40,50 -> 25
        assert_eq!(r.pixels(), &[25, 45, 105, 125]);
        let same = resize_area(&img, 4, 4).unwrap();
        assert_eq!(same, img);
    }

    #[test]
    fn pgm_round_trip_and_comments() {
        let dir = std::env::temp_dir().join(format!("eon-pgm-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let img = GrayImage::new(2, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let p = dir.join("a.pgm");
        write_pgm(&p, &img).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), img);

        let mut raw = b"P5\n# comment\n3 2\n255\n".to_vec();
        raw.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        assert_eq!(parse_pgm(&raw).unwrap(), img);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n\x01").is_err());

        let loaded = read_pgm_dir(&dir, 3).unwrap();
        assert_eq!((loaded[0].height(), loaded[0].width()), (3, 3));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn luma_weights() {
        assert_eq!(luma601(255, 255, 255), 255);
        assert_eq!(luma601(0, 0, 0), 0);
        assert_eq!(luma601(255, 0, 0), 76);
    }
}
