//! Collage frames for the streaming detection experiment and the
//! sliding-window geometry used to scan them.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const TILE_SIDE: usize = 32;
pub const DEFAULT_NONFACE_FILL: f64 = 0.5;
const BACKGROUND: u8 = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedTile {
    pub x: usize,
    pub y: usize,
    pub is_face: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CollageFrame {
    pub canvas: GrayImage,
    pub tile_side: usize,
    pub manifest: Vec<PlacedTile>,
}

impl CollageFrame {
    pub fn face_count(&self) -> usize {
        self.manifest.iter().filter(|t| t.is_face).count()
    }

    pub fn write_manifest(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        for t in &self.manifest {
            serde_json::to_writer(&mut out, t).expect("tile serializes");
            out.push(b'\n');
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&out))
            .map_err(|e| Error::io(path, e))
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<PlacedTile>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut tiles = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        tiles.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", n + 1),
        })?);
    }
    Ok(tiles)
}

/// Places `n_faces` face tiles on distinct cells of a `TILE_SIDE`-aligned
/// grid, then gives each remaining cell a non-face tile with probability
/// [`DEFAULT_NONFACE_FILL`]. Empty cells stay mid-gray.
pub fn build_collage(
    faces: &[GrayImage],
    nonfaces: &[GrayImage],
    height: usize,
    width: usize,
    n_faces: usize,
    rng: &mut Rng,
) -> Result<CollageFrame> {
    build_collage_with_fill(faces, nonfaces, height, width, n_faces, DEFAULT_NONFACE_FILL, rng)
}

pub fn build_collage_with_fill(
    faces: &[GrayImage],
    nonfaces: &[GrayImage],
    height: usize,
    width: usize,
    n_faces: usize,
    nonface_fill: f64,
    rng: &mut Rng,
) -> Result<CollageFrame> {
    let (rows, cols) = (height / TILE_SIDE, width / TILE_SIDE);
    let cells = rows * cols;
    if n_faces > cells {
        return Err(Error::Placement {
            requested: n_faces,
            cells,
        });
    }
    if n_faces > 0 && faces.is_empty() {
        return Err(Error::Invalid("no face tiles to place".into()));
    }
    for t in faces.iter().chain(nonfaces) {
        if t.height() != TILE_SIDE || t.width() != TILE_SIDE {
            return Err(Error::Shape(format!(
                "collage tiles must be {TILE_SIDE}x{TILE_SIDE}, got {}x{}",
                t.height(),
                t.width()
            )));
        }
    }
    let mut order: Vec<usize> = (0..cells).collect();
    rng.shuffle(&mut order);
    let mut canvas = GrayImage::filled(height, width, BACKGROUND);
    let mut manifest = Vec::new();
    for (k, &cell) in order.iter().enumerate() {
        let (x, y) = ((cell % cols) * TILE_SIDE, (cell / cols) * TILE_SIDE);
        let tile = if k < n_faces {
            Some((&faces[rng.below(faces.len())], true))
        } else if !nonfaces.is_empty() && rng.chance(nonface_fill) {
            Some((&nonfaces[rng.below(nonfaces.len())], false))
        } else {
            None
        };
        if let Some((img, is_face)) = tile {
            canvas.paste(img, x, y)?;
            manifest.push(PlacedTile { x, y, is_face });
        }
    }
    manifest.sort_by_key(|t| (t.y, t.x));
    Ok(CollageFrame {
        canvas,
        tile_side: TILE_SIDE,
        manifest,
    })
}

/// Valid window origins of a sliding scan, row-major.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WindowGrid {
    pub patch: usize,
    pub stride: usize,
    pub rows: usize,
    pub cols: usize,
}

impl WindowGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if patch == 0 || stride == 0 || patch > height || patch > width {
            return Err(Error::Geometry {
                height,
                width,
                patch,
                stride,
            });
        }
        Ok(Self {
            patch,
            stride,
            rows: (height - patch) / stride + 1,
            cols: (width - patch) / stride + 1,
        })
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn origin(&self, index: usize) -> (usize, usize) {
        ((index % self.cols) * self.stride, (index / self.cols) * self.stride)
    }

    pub fn origins(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.count()).map(|i| self.origin(i))
    }
}

/// Patch stream over `frame`: `(x, y, patch)` in row-major order.
pub fn sliding_windows(
    frame: &GrayImage,
    patch: usize,
    stride: usize,
) -> Result<impl Iterator<Item = (usize, usize, GrayImage)> + '_> {
    let grid = WindowGrid::new(frame.height(), frame.width(), patch, stride)?;
    Ok((0..grid.count()).map(move |i| {
        let (x, y) = grid.origin(i);
        let p = frame.crop(x, y, patch, patch).expect("window inside frame");
        (x, y, p)
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    pub found: usize,
    pub total: usize,
}

impl Recall {
    /// Found fraction; `0.0` when the manifest has no faces.
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.found as f64 / self.total as f64
        }
    }
}

/// A face tile counts as found when some detection's window origin lies
/// inside its `tile_side x tile_side` square.
pub fn recall_on_manifest(detections: &[(usize, usize)], manifest: &[PlacedTile], tile_side: usize) -> Recall {
    let faces: Vec<&PlacedTile> = manifest.iter().filter(|t| t.is_face).collect();
    let total = faces.len();
    if total == 0 || detections.is_empty() {
        return Recall { found: 0, total };
    }
    let h = detections.iter().map(|d| d.1).max().unwrap() + 1;
    let w = detections.iter().map(|d| d.0).max().unwrap() + 1;
    let mut hit = vec![false; h * w];
    for &(x, y) in detections {
        hit[y * w + x] = true;
    }
    let found = faces
        .iter()
        .filter(|t| {
            (t.y..(t.y + tile_side).min(h))
                .any(|y| (t.x..(t.x + tile_side).min(w)).any(|x| hit[y * w + x]))
        })
        .count();
    Recall { found, total }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiles(n: usize, value: u8) -> Vec<GrayImage> {
        (0..n).map(|i| GrayImage::filled(32, 32, value.wrapping_add(i as u8))).collect()
    }

    #[test]
    fn small_collage_geometry() {
        let mut rng = Rng::new(1);
        let c = build_collage(&tiles(3, 10), &tiles(3, 200), 64, 64, 1, &mut rng).unwrap();
        assert_eq!(c.face_count(), 1);
        assert!(c.manifest.len() <= 4);
    }

    #[test]
    fn collage_is_deterministic_and_audited() {
        let (f, nf) = (tiles(5, 10), tiles(5, 200));
        let a = build_collage(&f, &nf, 96, 128, 4, &mut Rng::new(7)).unwrap();
        let b = build_collage(&f, &nf, 96, 128, 4, &mut Rng::new(7)).unwrap();
        assert_eq!(a, b);
        // pixel audit: painted cells are exactly the manifest
        for cy in 0..3 {
            for cx in 0..4 {
                let (x, y) = (cx * 32, cy * 32);
                let v = a.canvas.get(y + 5, x + 5);
                match a.manifest.iter().find(|t| t.x == x && t.y == y) {
                    Some(t) if t.is_face => assert!((10..15).contains(&v)),
                    Some(_) => assert!((200..205).contains(&v)),
                    None => assert_eq!(v, BACKGROUND),
                }
            }
        }
    }

    #[test]
    fn too_many_faces_is_an_error() {
        let r = build_collage(&tiles(1, 0), &[], 64, 64, 5, &mut Rng::new(1));
        assert!(matches!(r, Err(Error::Placement { requested: 5, cells: 4 })));
    }

    #[test]
    fn window_counts() {
        assert_eq!(WindowGrid::new(64, 64, 32, 32).unwrap().count(), 4);
        assert_eq!(WindowGrid::new(32, 32, 32, 1).unwrap().count(), 1);
        let uhd = WindowGrid::new(2160, 3840, 32, 1).unwrap().count();
        assert_eq!(uhd, 2129 * 3809);
        assert!((8_000_000..8_200_000).contains(&uhd));
        assert!(WindowGrid::new(16, 64, 32, 1).is_err());
        assert!(WindowGrid::new(64, 64, 32, 0).is_err());
    }

    #[test]
    fn window_count_matches_enumeration() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            let h = 1 + rng.below(60);
            let w = 1 + rng.below(60);
            let p = 1 + rng.below(h.min(w));
            let s = 1 + rng.below(8);
            let mut n = 0;
            let mut y = 0;
            while y + p <= h {
                let mut x = 0;
                while x + p <= w {
                    n += 1;
                    x += s;
                }
                y += s;
            }
            let grid = WindowGrid::new(h, w, p, s).unwrap();
            assert_eq!(grid.count(), n, "h={h} w={w} p={p} s={s}");
            let frame = GrayImage::filled(h, w, 0);
            assert_eq!(sliding_windows(&frame, p, s).unwrap().count(), n);
        }
    }

    #[test]
    fn recall_examples() {
        let manifest: Vec<PlacedTile> = (0..798)
            .map(|i| PlacedTile {
                x: (i % 100) * 32,
                y: (i / 100) * 32,
                is_face: true,
            })
            .collect();
        let all: Vec<(usize, usize)> = manifest.iter().map(|t| (t.x + 3, t.y + 31)).collect();
        assert_eq!(recall_on_manifest(&all, &manifest, 32).fraction(), 1.0);
        assert_eq!(recall_on_manifest(&[], &manifest, 32).fraction(), 0.0);
        let some = &all[..720];
        let r = recall_on_manifest(some, &manifest, 32);
        assert_eq!((r.found, r.total), (720, 798));
        assert!((r.fraction() - 0.902).abs() < 5e-4);
        // just outside the tile does not count
        let outside = vec![(32usize, 0usize)];
        let one = [PlacedTile { x: 0, y: 0, is_face: true }];
        assert_eq!(recall_on_manifest(&outside, &one, 32).found, 0);
    }

    #[test]
    fn manifest_json_lines_round_trip() {
        let c = build_collage(&tiles(2, 1), &tiles(2, 2), 64, 96, 2, &mut Rng::new(4)).unwrap();
        let p = std::env::temp_dir().join(format!("eon-manifest-{}.jsonl", std::process::id()));
        c.write_manifest(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.lines().next().unwrap().contains("\"is_face\""));
        assert_eq!(read_manifest(&p).unwrap(), c.manifest);
        std::fs::remove_file(p).unwrap();
    }
}
