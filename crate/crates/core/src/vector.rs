//! Compressed spike/weight vectors and the match arithmetic on them.
//!
//! After 1-WTA inhibition at most one filter fires per pixel, so a binary
//! `D² x F` spike map collapses to `D²` small integers: `0` for a silent
//! pixel, `f` in `1..=F` for "filter `f` fired". Weight vectors share the
//! format since a neuron has at most one active synapse per pixel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Compressed elements are stored as 4-bit codes.
pub const MAX_FILTERS: u8 = 15;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CompressedVector {
    side: usize,
    filters: u8,
    elems: Vec<u8>,
}

impl CompressedVector {
    pub fn new(side: usize, filters: u8, elems: Vec<u8>) -> Result<Self> {
        if filters == 0 || filters > MAX_FILTERS {
            return Err(Error::Invalid(format!(
                "filter count {filters} outside 1..={MAX_FILTERS}"
            )));
        }
        if elems.len() != side * side {
            return Err(Error::Shape(format!(
                "{} elements for side {side} (expected {})",
                elems.len(),
                side * side
            )));
        }
        if let Some(bad) = elems.iter().find(|&&e| e > filters) {
            return Err(Error::Invalid(format!(
                "element {bad} exceeds filter count {filters}"
            )));
        }
        Ok(Self {
            side,
            filters,
            elems,
        })
    }

    pub fn silent(side: usize, filters: u8) -> Self {
        Self {
            side,
            filters,
            elems: vec![0; side * side],
        }
    }

    /// Side length `D`; the vector holds `D²` elements.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn filters(&self) -> u8 {
        self.filters
    }

    pub fn len(&self) -> usize {
        self.elems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elems.is_empty()
    }

    pub fn elems(&self) -> &[u8] {
        &self.elems
    }

    pub fn get(&self, pixel: usize) -> u8 {
        self.elems[pixel]
    }

    /// Number of non-silent pixels.
    pub fn active_count(&self) -> usize {
        self.elems.iter().filter(|&&e| e != 0).count()
    }

    pub fn active_pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.elems
            .iter()
            .enumerate()
            .filter(|(_, &e)| e != 0)
            .map(|(i, _)| i)
    }

    pub(crate) fn set(&mut self, pixel: usize, value: u8) {
        debug_assert!(value <= self.filters);
        self.elems[pixel] = value;
    }

    /// One-hot expansion to the `D² x F` bit matrix the hardware sees.
    pub fn expand(&self) -> BitMatrix {
        BitMatrix::from_compressed(self)
    }

    /// Two 4-bit elements per byte, the even pixel in the low nibble.
    pub fn pack_nibbles(&self) -> Vec<u8> {
        pack_nibbles(&self.elems)
    }

    pub fn from_packed(side: usize, filters: u8, packed: &[u8]) -> Result<Self> {
        let n = side * side;
        if packed.len() != n.div_ceil(2) {
            return Err(Error::Shape(format!(
                "{} packed bytes for {n} elements",
                packed.len()
            )));
        }
        Self::new(side, filters, unpack_nibbles(packed, n))
    }

    fn check_compatible(&self, other: &CompressedVector) -> Result<()> {
        if self.side != other.side || self.filters != other.filters {
            return Err(Error::Shape(format!(
                "vector (D={}, F={}) vs (D={}, F={})",
                self.side, self.filters, other.side, other.filters
            )));
        }
        Ok(())
    }
}

pub fn pack_nibbles(elems: &[u8]) -> Vec<u8> {
    elems
        .chunks(2)
        .map(|pair| (pair[0] & 0x0F) | pair.get(1).map_or(0, |hi| (hi & 0x0F) << 4))
        .collect()
}

pub fn unpack_nibbles(packed: &[u8], len: usize) -> Vec<u8> {
    packed
        .iter()
        .flat_map(|b| [b & 0x0F, b >> 4])
        .take(len)
        .collect()
}

/// A neuron's synapses: a compressed vector with a fixed number of active
/// entries, `W`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WeightVector(CompressedVector);

impl WeightVector {
    /// Wraps `v`, requiring exactly `active` nonzero elements.
    pub fn new(v: CompressedVector, active: usize) -> Result<Self> {
        let got = v.active_count();
        if got != active {
            return Err(Error::Invalid(format!(
                "weight vector has {got} active synapses, expected {active}"
            )));
        }
        Ok(Self(v))
    }

    /// `active` distinct pixels, each connected to a uniformly drawn filter.
    pub fn random(side: usize, filters: u8, active: usize, rng: &mut Rng) -> Result<Self> {
        let n = side * side;
        if active > n {
            return Err(Error::Invalid(format!(
                "W = {active} exceeds D² = {n}"
            )));
        }
        let mut v = CompressedVector::new(side, filters, vec![0; n])?;
        for pixel in rng.sample_distinct(n, active) {
            v.set(pixel, 1 + rng.below(filters as usize) as u8);
        }
        Ok(Self(v))
    }

    pub fn as_compressed(&self) -> &CompressedVector {
        &self.0
    }

    pub fn active_count(&self) -> usize {
        self.0.active_count()
    }

    pub fn elems(&self) -> &[u8] {
        self.0.elems()
    }

    pub fn side(&self) -> usize {
        self.0.side()
    }

    pub fn filters(&self) -> u8 {
        self.0.filters()
    }

    /// Moves the synapse at `off` (must be active) onto pixel `on` (must be
    /// inactive) with filter `filter`, keeping the active count unchanged.
    pub(crate) fn swap(&mut self, on: usize, filter: u8, off: usize) {
        debug_assert_eq!(self.0.get(on), 0);
        debug_assert_ne!(self.0.get(off), 0);
        debug_assert_ne!(on, off);
        self.0.set(on, filter);
        self.0.set(off, 0);
    }
}

/// Membrane potential contribution of `s` on `w`: the number of pixels
/// where `w` has an active synapse on exactly the filter that fired.
pub fn match_count(s: &CompressedVector, w: &WeightVector) -> Result<u32> {
    s.check_compatible(w.as_compressed())?;
    Ok(match_count_raw(s.elems(), w.elems()))
}

/// Unchecked kernel behind [`match_count`]. Both slices must have equal length.
#[inline]
pub fn match_count_raw(s: &[u8], w: &[u8]) -> u32 {
    debug_assert_eq!(s.len(), w.len());
    let mut total = 0u32;
    // u8 lanes cannot overflow within 255 elements.
    for (sc, wc) in s.chunks(240).zip(w.chunks(240)) {
        let hits: u8 = sc
            .iter()
            .zip(wc)
            .map(|(&a, &b)| ((a == b) & (b != 0)) as u8)
            .sum();
        total += hits as u32;
    }
    total
}

/// Pixels carrying an input spike where `w` has no active synapse, ascending.
///
/// Pixels where `w` holds a different filter are excluded: turning a
/// synapse on there would put two filters on one pixel.
pub fn ineffective_spikes(s: &CompressedVector, w: &WeightVector) -> Result<Vec<usize>> {
    s.check_compatible(w.as_compressed())?;
    Ok(ineffective_spikes_raw(s.elems(), w.elems()))
}

pub(crate) fn ineffective_spikes_raw(s: &[u8], w: &[u8]) -> Vec<usize> {
    s.iter()
        .zip(w)
        .enumerate()
        .filter(|(_, (&a, &b))| a != 0 && b == 0)
        .map(|(i, _)| i)
        .collect()
}

/// Active synapses that did not match the input, ascending.
pub fn ineffective_weights(s: &CompressedVector, w: &WeightVector) -> Result<Vec<usize>> {
    s.check_compatible(w.as_compressed())?;
    Ok(ineffective_weights_raw(s.elems(), w.elems()))
}

pub(crate) fn ineffective_weights_raw(s: &[u8], w: &[u8]) -> Vec<usize> {
    s.iter()
        .zip(w)
        .enumerate()
        .filter(|(_, (&a, &b))| b != 0 && a != b)
        .map(|(i, _)| i)
        .collect()
}

/// Row-major `D² x F` bit matrix, bit `(i, f - 1)` set when pixel `i`
/// carries filter `f`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    filters: u8,
    words: Vec<u64>,
}

impl BitMatrix {
    fn from_compressed(v: &CompressedVector) -> Self {
        let f = v.filters() as usize;
        let bits = v.len() * f;
        let mut words = vec![0u64; bits.div_ceil(64)];
        for (i, &e) in v.elems().iter().enumerate() {
            if e != 0 {
                let bit = i * f + (e as usize - 1);
                words[bit / 64] |= 1 << (bit % 64);
            }
        }
        Self {
            rows: v.len(),
            filters: v.filters(),
            words,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn filters(&self) -> u8 {
        self.filters
    }

    pub fn get(&self, row: usize, filter_idx: usize) -> bool {
        let bit = row * self.filters as usize + filter_idx;
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// `popcount(self & other)`: the bitwise form of the match count.
    pub fn and_popcount(&self, other: &BitMatrix) -> u32 {
        debug_assert_eq!(self.words.len(), other.words.len());
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones())
            .sum()
    }

    /// Inverse of [`CompressedVector::expand`]. Fails if a row has more than
    /// one bit set.
    pub fn collapse(&self, side: usize) -> Result<CompressedVector> {
        if side * side != self.rows {
            return Err(Error::Shape(format!(
                "{} rows for side {side}",
                self.rows
            )));
        }
        let f = self.filters as usize;
        let mut elems = vec![0u8; self.rows];
        for (row, slot) in elems.iter_mut().enumerate() {
            for idx in 0..f {
                if self.get(row, idx) {
                    if *slot != 0 {
                        return Err(Error::Invalid(format!(
                            "row {row} has more than one active filter"
                        )));
                    }
                    *slot = idx as u8 + 1;
                }
            }
        }
        CompressedVector::new(side, self.filters, elems)
    }
}
