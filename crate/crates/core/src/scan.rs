//! Whole-frame sliding-window evaluation.
//!
//! Encoding a frame once and cropping is equivalent to encoding every
//! window, so a scan reduces to, per neuron, summing shifted copies of the
//! per-filter spike indicator planes: one shifted plane per active synapse.
//! The sums are the membrane potentials of every window at once.
//!
//! Self-supervised adaptation walks the windows in raster order and learns
//! whenever the layer fires. After each learning event only the changed
//! neurons are re-scanned over the windows not yet visited.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::data::WindowGrid;
use crate::encoder::SpikeMap;
use crate::error::{Error, Result};
use crate::learning::{apply_learning, eligibility_scan, LearnConfig, Supervision};
use crate::network::{Layer, Neuron};
use crate::rng::Rng;
use crate::vector::{CompressedVector, WeightVector};

/// Origin rows processed together; keeps the accumulator block in cache.
const BLOCK_ROWS: usize = 16;

pub struct FrameScanner<'a> {
    map: &'a SpikeMap,
    side: usize,
    grid: WindowGrid,
    /// `planes[f]` is 1 where the map holds filter `f + 1`.
    planes: Vec<Vec<u8>>,
}

impl<'a> FrameScanner<'a> {
    /// Windows of `side x side` spikes at the given stride. Window origins
    /// coincide with the image-space origins of `(side + K_S - 1)` patches.
    pub fn new(map: &'a SpikeMap, side: usize, stride: usize) -> Result<Self> {
        let grid = WindowGrid::new(map.height, map.width, side, stride)?;
        let planes = (1..=map.filters)
            .map(|f| map.elems.iter().map(|&e| (e == f) as u8).collect())
            .collect();
        Ok(Self {
            map,
            side,
            grid,
            planes,
        })
    }

    pub fn grid(&self) -> WindowGrid {
        self.grid
    }

    pub fn window(&self, index: usize) -> CompressedVector {
        let (x, y) = self.grid.origin(index);
        self.map.crop(x, y, self.side).expect("window inside map")
    }

    fn check(&self, layer: &Layer) -> Result<()> {
        let c = layer.config();
        if c.side != self.side || c.filters != self.map.filters {
            return Err(Error::Shape(format!(
                "layer expects D={} F={}, scanner has D={} F={}",
                c.side, c.filters, self.side, self.map.filters
            )));
        }
        Ok(())
    }

    /// (map offset, plane) per active synapse.
    fn synapses(&self, w: &WeightVector) -> Vec<(usize, usize)> {
        w.elems()
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != 0)
            .map(|(i, &f)| {
                let (py, px) = (i / self.side, i % self.side);
                (py * self.map.width + px, f as usize - 1)
            })
            .collect()
    }

    /// Calls `visit(first_row, potentials)` for consecutive blocks of origin
    /// rows in `rows`; `potentials` is row-major with `grid.cols` per row.
    fn for_each_block(&self, w: &WeightVector, rows: Range<usize>, mut visit: impl FnMut(usize, &[u16])) {
        let synapses = self.synapses(w);
        let (cols, stride, mw) = (self.grid.cols, self.grid.stride, self.map.width);
        let mut acc = vec![0u16; BLOCK_ROWS * cols];
        let mut r0 = rows.start;
        while r0 < rows.end {
            let n = BLOCK_ROWS.min(rows.end - r0);
            let block = &mut acc[..n * cols];
            block.fill(0);
            for &(offset, f) in &synapses {
                let plane = &self.planes[f];
                for (r, out) in block.chunks_exact_mut(cols).enumerate() {
                    let start = (r0 + r) * stride * mw + offset;
                    if stride == 1 {
                        for (a, &b) in out.iter_mut().zip(&plane[start..start + cols]) {
                            *a = a.wrapping_add(b as u16);
                        }
                    } else {
                        for (c, a) in out.iter_mut().enumerate() {
                            *a = a.wrapping_add(plane[start + c * stride] as u16);
                        }
                    }
                }
            }
            visit(r0, block);
            r0 += n;
        }
    }

    /// Membrane potential of `w` in every window, row-major.
    pub fn potentials(&self, w: &WeightVector) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.grid.count());
        self.for_each_block(w, 0..self.grid.rows, |_, block| {
            out.extend(block.iter().map(|&v| v as u32));
        });
        out
    }

    /// Number of neurons firing in every window.
    pub fn fire_counts(&self, layer: &Layer) -> Result<Vec<u16>> {
        self.check(layer)?;
        let mut counts = vec![0u16; self.grid.count()];
        for neuron in layer.neurons() {
            self.add_fires(neuron, 0, 1, &mut counts);
        }
        Ok(counts)
    }

    /// Adds `sign` (±1) to `counts` for every window at or after `from`
    /// in which `neuron` fires.
    fn add_fires(&self, neuron: &Neuron, from: usize, sign: i32, counts: &mut [u16]) {
        let Some(t) = neuron.t_fire else { return };
        let cols = self.grid.cols;
        let first_row = from / cols;
        self.for_each_block(&neuron.weights, first_row..self.grid.rows, |r0, block| {
            let base = r0 * cols;
            let skip = from.saturating_sub(base);
            for (i, &v) in block.iter().enumerate().skip(skip) {
                if v as u32 >= t {
                    let c = &mut counts[base + i];
                    *c = (*c as i32 + sign) as u16;
                }
            }
        });
    }

    /// Origins `(x, y)` of the windows where at least one neuron fires.
    pub fn detections(&self, layer: &Layer) -> Result<Vec<(usize, usize)>> {
        let counts = self.fire_counts(layer)?;
        Ok(counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| self.grid.origin(i))
            .collect())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdaptStats {
    pub windows: usize,
    pub fired_windows: usize,
    /// Windows on which at least one neuron learned.
    pub learn_events: usize,
    pub neuron_updates: usize,
    /// Stream position after which a full layer ended the stream.
    pub stopped_at: Option<usize>,
}

/// What [`adapt_on_frame`] reports after each window that learned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AdaptEvent {
    /// Position in the stream.
    pub step: usize,
    pub window: usize,
    pub origin: (usize, usize),
    /// Neurons updated on this window.
    pub learners: usize,
    pub capacity: usize,
    /// Windows that fired so far, this one included.
    pub fired_windows: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowOrder {
    /// Row-major, as a rolling window reads the frame.
    #[default]
    Raster,
    /// A seeded permutation of all windows.
    Shuffled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdaptOptions {
    pub order: WindowOrder,
    /// End the stream once no neuron is left unlearned.
    pub stop_when_full: bool,
}

/// Streams the frame's windows through `layer`, invoking learning on every
/// window where the layer fires. Each window is judged by the layer as it
/// stands when the window is reached.
pub fn adapt_on_frame(
    layer: &mut Layer,
    scanner: &FrameScanner,
    cfg: &LearnConfig,
    options: AdaptOptions,
    rng: &mut Rng,
    mut on_event: impl FnMut(&Layer, AdaptEvent),
) -> Result<AdaptStats> {
    cfg.validate()?;
    if cfg.mode == Supervision::LabeledCluster {
        return Err(Error::Invalid("frame adaptation has no labels".into()));
    }
    if cfg.decay != 0 {
        return Err(Error::Invalid("frame adaptation does not support decay".into()));
    }
    let mut counts = scanner.fire_counts(layer)?;
    let mut stats = AdaptStats {
        windows: counts.len(),
        ..AdaptStats::default()
    };
    let mut order: Vec<usize> = (0..counts.len()).collect();
    if options.order == WindowOrder::Shuffled {
        rng.shuffle(&mut order);
    }
    for (step, &idx) in order.iter().enumerate() {
        if counts[idx] == 0 {
            continue;
        }
        stats.fired_windows += 1;
        let s = scanner.window(idx);
        let scan = eligibility_scan(layer, &s, rng, cfg.k, 0..layer.len())?;
        if scan.learners.is_empty() {
            continue;
        }
        let before: Vec<Neuron> = scan.learners.iter().map(|&(n, _)| layer.neuron(n).clone()).collect();
        apply_learning(layer, &s, &scan, cfg, rng);
        stats.learn_events += 1;
        for (old, &(n, _)) in before.iter().zip(&scan.learners) {
            stats.neuron_updates += 1;
            // raster order never revisits earlier windows, so only the tail needs refreshing
            let from = match options.order {
                WindowOrder::Raster => idx + 1,
                WindowOrder::Shuffled => 0,
            };
            scanner.add_fires(old, from, -1, &mut counts);
            scanner.add_fires(layer.neuron(n), from, 1, &mut counts);
        }
        let capacity = layer.capacity();
        on_event(
            layer,
            AdaptEvent {
                step,
                window: idx,
                origin: scanner.grid.origin(idx),
                learners: scan.learners.len(),
                capacity,
                fired_windows: stats.fired_windows,
            },
        );
        if options.stop_when_full && capacity == 0 {
            stats.stopped_at = Some(step);
            break;
        }
    }
    Ok(stats)
}
