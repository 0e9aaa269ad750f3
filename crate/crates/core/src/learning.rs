//! Stochastic binary STDP.
//!
//! Per input sample: scan neurons from a random start address (wrapping
//! once) and queue the first `K` whose match count reaches their learning
//! threshold. Each queued neuron moves `floor(swap_rate * (W - V_mem))` of
//! its ineffective synapses onto ineffective input spikes, chosen uniformly
//! one pair at a time, then raises its learning threshold by the number of
//! swaps actually made. The firing threshold follows at half the learning
//! threshold and switches on with the first learning event.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{fire_threshold, Layer, ModelConfig, Neuron};
use crate::rng::Rng;
use crate::vector::{
    ineffective_spikes_raw, ineffective_weights_raw, match_count_raw, CompressedVector,
    WeightVector,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Supervision {
    /// Any neuron in the layer may learn.
    Unsupervised,
    /// Only the cluster of the sample's label may learn.
    LabeledCluster,
    /// Learning is invoked by the harness whenever the layer fired.
    SelfSupervisedOnFire,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnConfig {
    /// Learning event queue capacity: most neurons updated per sample.
    pub k: usize,
    pub swap_rate: f64,
    /// Linear decrease of `T_learn` per sample for neurons that did not learn.
    pub decay: u32,
    pub mode: Supervision,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            k: 1,
            swap_rate: 1.0,
            decay: 0,
            mode: Supervision::LabeledCluster,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("K must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.swap_rate) {
            return Err(Error::Invalid(format!(
                "swap_rate {} outside [0, 1]",
                self.swap_rate
            )));
        }
        Ok(())
    }

    /// Warns when worst-case learning (`K x D²` cycles) could lag an
    /// inference pass over `N` neurons.
    pub fn timing_warning(&self, model: &ModelConfig) -> Option<String> {
        let cycles = self.k * model.pixels();
        (cycles >= model.neurons).then(|| {
            format!(
                "K x D² = {cycles} >= N = {}: learning may lag inference",
                model.neurons
            )
        })
    }
}

/// Neurons selected for learning, in queue order, with their potentials.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eligibility {
    pub learners: Vec<(usize, u32)>,
    /// Neurons examined before the queue filled or the range was exhausted.
    pub scanned: usize,
    pub start: usize,
}

/// Random-start wrap-around scan of `range`, returning the first `k`
/// neurons with `V_mem >= T_learn`.
pub fn eligibility_scan(
    layer: &Layer,
    s: &CompressedVector,
    rng: &mut Rng,
    k: usize,
    range: Range<usize>,
) -> Result<Eligibility> {
    if range.is_empty() || range.end > layer.len() {
        return Err(Error::Invalid(format!(
            "eligible range {range:?} is empty or outside {} neurons",
            layer.len()
        )));
    }
    if s.side() != layer.config().side || s.filters() != layer.config().filters {
        return Err(Error::Shape("input does not match layer".into()));
    }
    let len = range.len();
    let start = rng.below(len);
    let mut learners = Vec::with_capacity(k);
    let mut scanned = 0;
    for offset in 0..len {
        if learners.len() == k {
            break;
        }
        let n = range.start + (start + offset) % len;
        scanned += 1;
        let neuron = layer.neuron(n);
        let v = match_count_raw(s.elems(), neuron.weights.elems());
        if v >= neuron.t_learn {
            learners.push((n, v));
        }
    }
    Ok(Eligibility {
        learners,
        scanned,
        start: range.start + start,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapOutcome {
    /// `floor(swap_rate * (W - V_mem))`.
    pub target: u32,
    /// Pairs actually swapped; below `target` only if input spikes ran out.
    pub achieved: u32,
    pub on_pixels: Vec<usize>,
    pub off_pixels: Vec<usize>,
}

pub fn swap_count(swap_rate: f64, active: usize, v_mem: u32) -> u32 {
    let mismatches = active.saturating_sub(v_mem as usize) as f64;
    // epsilon absorbs representation error such as 0.29 * 100 = 28.999...
    (swap_rate * mismatches + 1e-9).floor() as u32
}

/// Moves synapses from ineffective weights onto ineffective spikes, one
/// uniformly drawn pair at a time, recomputing both candidate sets after
/// every pair.
pub fn swap_update(
    w: &mut WeightVector,
    s: &CompressedVector,
    v_mem: u32,
    swap_rate: f64,
    rng: &mut Rng,
) -> SwapOutcome {
    let target = swap_count(swap_rate, w.active_count(), v_mem);
    let mut on_pixels = Vec::new();
    let mut off_pixels = Vec::new();
    for _ in 0..target {
        let spikes = ineffective_spikes_raw(s.elems(), w.elems());
        let weights = ineffective_weights_raw(s.elems(), w.elems());
        let (Some(&on), Some(&off)) = (rng.choose(&spikes), rng.choose(&weights)) else {
            break;
        };
        w.swap(on, s.get(on), off);
        on_pixels.push(on);
        off_pixels.push(off);
    }
    SwapOutcome {
        target,
        achieved: on_pixels.len() as u32,
        on_pixels,
        off_pixels,
    }
}

/// Raises `T_learn` by the swaps made and re-derives `T_fire`, activating
/// it on the first event.
pub fn apply_homeostasis(neuron: &mut Neuron, swapped: u32) {
    neuron.t_learn += swapped;
    neuron.t_fire = Some(fire_threshold(neuron.t_learn));
    neuron.learned_count += 1;
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerUpdate {
    pub neuron: usize,
    pub v_mem: u32,
    pub swap: SwapOutcome,
    pub t_learn: u32,
    pub t_fire: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnReport {
    pub learners: Vec<LearnerUpdate>,
    pub scanned: usize,
}

impl LearnReport {
    pub fn learned(&self) -> bool {
        !self.learners.is_empty()
    }
}

/// The neuron range a sample may train, given the supervision mode.
pub fn eligible_range(layer: &Layer, label: Option<usize>, mode: Supervision) -> Result<Range<usize>> {
    match mode {
        Supervision::Unsupervised | Supervision::SelfSupervisedOnFire => Ok(0..layer.len()),
        Supervision::LabeledCluster => {
            let label = label.ok_or_else(|| {
                Error::Invalid("labeled-cluster learning needs a label".into())
            })?;
            layer.cluster_range(label)
        }
    }
}

/// One learning step for input `s`.
///
/// In self-supervised mode the caller invokes this only for samples on
/// which the layer fired.
pub fn learn_step(
    layer: &mut Layer,
    s: &CompressedVector,
    label: Option<usize>,
    cfg: &LearnConfig,
    rng: &mut Rng,
) -> Result<LearnReport> {
    cfg.validate()?;
    let range = eligible_range(layer, label, cfg.mode)?;
    let scan = eligibility_scan(layer, s, rng, cfg.k, range)?;
    Ok(apply_learning(layer, s, &scan, cfg, rng))
}

/// Second half of [`learn_step`]: swap and homeostasis for the queued
/// learners, then optional decay of everyone else.
pub fn apply_learning(
    layer: &mut Layer,
    s: &CompressedVector,
    scan: &Eligibility,
    cfg: &LearnConfig,
    rng: &mut Rng,
) -> LearnReport {
    let mut learners = Vec::with_capacity(scan.learners.len());
    for &(n, v_mem) in &scan.learners {
        let neuron = layer.neuron_mut(n);
        let swap = swap_update(&mut neuron.weights, s, v_mem, cfg.swap_rate, rng);
        apply_homeostasis(neuron, swap.achieved);
        learners.push(LearnerUpdate {
            neuron: n,
            v_mem,
            t_learn: neuron.t_learn,
            t_fire: neuron.t_fire.expect("set by homeostasis"),
            swap,
        });
    }
    if cfg.decay > 0 {
        let t0 = layer.config().t_learn0;
        for n in 0..layer.len() {
            if scan.learners.iter().any(|&(l, _)| l == n) {
                continue;
            }
            let neuron = layer.neuron_mut(n);
            neuron.t_learn = neuron.t_learn.saturating_sub(cfg.decay).max(t0);
            if neuron.t_fire.is_some() {
                neuron.t_fire = Some(fire_threshold(neuron.t_learn));
            }
        }
    }
    LearnReport {
        learners,
        scanned: scan.scanned,
    }
}

/// Neurons whose potential reaches their learning threshold.
pub fn count_eligible(layer: &Layer, v_mem: &[u32]) -> usize {
    layer
        .neurons()
        .iter()
        .zip(v_mem)
        .filter(|(n, &v)| v >= n.t_learn)
        .count()
}
