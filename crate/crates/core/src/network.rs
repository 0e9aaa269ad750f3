//! The trainable integrate-and-fire layer and the cluster-vote readout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::vector::{match_count_raw, CompressedVector, WeightVector, MAX_FILTERS};

/// Structural and threshold parameters of a layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Spike/weight vectors are `side x side`.
    pub side: usize,
    pub kernel_side: usize,
    pub filters: u8,
    pub neurons: usize,
    /// Active synapses per neuron (`W`).
    pub active: usize,
    /// Initial learning threshold.
    pub t_learn0: u32,
    /// Number of class clusters; 0 disables classification.
    pub clusters: usize,
}

impl ModelConfig {
    /// MNIST at 14x14 with a 5x5 bank of 8 filters.
    pub fn mnist(neurons: usize) -> Self {
        Self {
            side: 10,
            kernel_side: 5,
            filters: 8,
            neurons,
            active: 64,
            t_learn0: 6,
            clusters: 10,
        }
    }

    /// 32x32 face tiles with 4 orientations, a single face cluster.
    pub fn faces(neurons: usize) -> Self {
        Self {
            side: 28,
            kernel_side: 5,
            filters: 4,
            neurons,
            active: 64,
            t_learn0: 6,
            clusters: 1,
        }
    }

    /// Side of the input image patch, `D + K_S - 1`.
    pub fn patch_side(&self) -> usize {
        self.side + self.kernel_side - 1
    }

    pub fn pixels(&self) -> usize {
        self.side * self.side
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.side == 0 || self.kernel_side == 0 {
            return bad("D and K_S must be positive".into());
        }
        if self.filters == 0 || self.filters > MAX_FILTERS {
            return bad(format!("F = {} outside 1..={MAX_FILTERS}", self.filters));
        }
        if self.neurons == 0 {
            return bad("N must be positive".into());
        }
        if self.active == 0 || self.active > self.pixels() {
            return bad(format!("W = {} outside 1..=D² = {}", self.active, self.pixels()));
        }
        if self.t_learn0 as usize > self.active {
            return bad(format!("T_learn[0] = {} exceeds W = {}", self.t_learn0, self.active));
        }
        if self.clusters > 0 && !self.neurons.is_multiple_of(self.clusters) {
            return bad(format!(
                "N = {} is not divisible by {} clusters",
                self.neurons, self.clusters
            ));
        }
        Ok(())
    }
}

/// Firing threshold from the learning threshold: half, rounded up.
pub fn fire_threshold(t_learn: u32) -> u32 {
    t_learn.div_ceil(2)
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Neuron {
    pub weights: WeightVector,
    pub t_learn: u32,
    /// `None` until the first learning event: the neuron never fires.
    pub t_fire: Option<u32>,
    pub learned_count: u32,
}

impl Neuron {
    pub fn fresh(weights: WeightVector, t_learn0: u32) -> Self {
        Self {
            weights,
            t_learn: t_learn0,
            t_fire: None,
            learned_count: 0,
        }
    }

    pub fn fires(&self, v_mem: u32) -> bool {
        self.t_fire.is_some_and(|t| v_mem >= t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layer {
    config: ModelConfig,
    neurons: Vec<Neuron>,
}

impl Layer {
    /// Fresh layer: random weights, `T_learn[0]` everywhere, all silent.
    pub fn random(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let neurons = (0..config.neurons)
            .map(|_| {
                WeightVector::random(config.side, config.filters, config.active, rng)
                    .map(|w| Neuron::fresh(w, config.t_learn0))
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, neurons })
    }

    /// Assembles a layer from stored neurons, checking every invariant.
    pub fn from_parts(config: ModelConfig, neurons: Vec<Neuron>) -> Result<Self> {
        config.validate()?;
        if neurons.len() != config.neurons {
            return Err(Error::Shape(format!(
                "{} neurons for N = {}",
                neurons.len(),
                config.neurons
            )));
        }
        for (i, n) in neurons.iter().enumerate() {
            let w = &n.weights;
            if w.side() != config.side || w.filters() != config.filters {
                return Err(Error::Shape(format!("neuron {i}: weight shape mismatch")));
            }
            if w.active_count() != config.active {
                return Err(Error::Invalid(format!(
                    "neuron {i}: {} active synapses, expected {}",
                    w.active_count(),
                    config.active
                )));
            }
            if n.t_learn < config.t_learn0 || n.t_learn as usize > config.active {
                return Err(Error::Invalid(format!(
                    "neuron {i}: T_learn {} outside [{}, {}]",
                    n.t_learn, config.t_learn0, config.active
                )));
            }
        }
        Ok(Self { config, neurons })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn neuron(&self, n: usize) -> &Neuron {
        &self.neurons[n]
    }

    pub(crate) fn neuron_mut(&mut self, n: usize) -> &mut Neuron {
        &mut self.neurons[n]
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    /// Neurons that have never learned: the remaining few-shot budget.
    pub fn capacity(&self) -> usize {
        self.neurons.iter().filter(|n| n.learned_count == 0).count()
    }

    pub fn cluster_size(&self) -> usize {
        self.neurons
            .len()
            .checked_div(self.config.clusters)
            .unwrap_or(self.neurons.len())
    }

    /// Contiguous neuron range of class `c`.
    pub fn cluster_range(&self, c: usize) -> Result<std::ops::Range<usize>> {
        if c >= self.config.clusters {
            return Err(Error::Invalid(format!(
                "class {c} outside {} clusters",
                self.config.clusters
            )));
        }
        let size = self.cluster_size();
        Ok(c * size..(c + 1) * size)
    }

    /// Stable 64-bit FNV-1a digest of all weights and thresholds.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for n in &self.neurons {
            eat(n.weights.elems());
            eat(&n.t_learn.to_le_bytes());
            eat(&n.t_fire.unwrap_or(u32::MAX).to_le_bytes());
            eat(&n.learned_count.to_le_bytes());
        }
        h
    }

    fn check_input(&self, s: &CompressedVector) -> Result<()> {
        if s.side() != self.config.side || s.filters() != self.config.filters {
            return Err(Error::Shape(format!(
                "input (D={}, F={}) vs layer (D={}, F={})",
                s.side(),
                s.filters(),
                self.config.side,
                self.config.filters
            )));
        }
        Ok(())
    }

    /// Membrane potentials of every neuron for `s`.
    ///
    /// `parallelism` is the number of IF units updated per cycle; neurons are
    /// processed in groups of that size in index order, so the result never
    /// depends on it.
    pub fn infer(&self, s: &CompressedVector, parallelism: usize) -> Result<InferenceResult> {
        self.check_input(s)?;
        if parallelism == 0 {
            return Err(Error::Invalid("parallelism must be at least 1".into()));
        }
        let mut v_mem = vec![0u32; self.neurons.len()];
        for (group, out) in self
            .neurons
            .chunks(parallelism)
            .zip(v_mem.chunks_mut(parallelism))
        {
            for (n, v) in group.iter().zip(out.iter_mut()) {
                *v = match_count_raw(s.elems(), n.weights.elems());
            }
        }
        Ok(self.summarize(v_mem))
    }

    fn summarize(&self, v_mem: Vec<u32>) -> InferenceResult {
        let clusters = self.config.clusters;
        let size = self.cluster_size();
        let mut cluster_fired = vec![0u32; clusters];
        let mut cluster_vmem = vec![0u64; clusters];
        let mut fired = Vec::new();
        for (i, (n, &v)) in self.neurons.iter().zip(&v_mem).enumerate() {
            if n.fires(v) {
                fired.push(i);
                if clusters > 0 {
                    cluster_fired[i / size] += 1;
                }
            }
            if clusters > 0 {
                cluster_vmem[i / size] += v as u64;
            }
        }
        InferenceResult {
            v_mem,
            fired,
            cluster_fired,
            cluster_vmem,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InferenceResult {
    pub v_mem: Vec<u32>,
    /// Indices of neurons that fired, ascending.
    pub fired: Vec<usize>,
    pub cluster_fired: Vec<u32>,
    pub cluster_vmem: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Prediction {
    Class(usize),
    /// No neuron fired anywhere.
    NoPrediction,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(c),
            Prediction::NoPrediction => None,
        }
    }
}

/// Cluster vote: most fired neurons wins, ties go to the larger summed
/// potential, then to the lower class index.
pub fn classify(result: &InferenceResult) -> Prediction {
    if result.fired.is_empty() {
        return Prediction::NoPrediction;
    }
    let best = (0..result.cluster_fired.len()).max_by(|&a, &b| {
        result.cluster_fired[a]
            .cmp(&result.cluster_fired[b])
            .then(result.cluster_vmem[a].cmp(&result.cluster_vmem[b]))
            .then(b.cmp(&a))
    });
    best.map_or(Prediction::NoPrediction, Prediction::Class)
}
