//! Cycle, throughput and energy arithmetic of the accelerator.
//!
//! Timing: a sample spends `D + K_S - 1` cycles in the spike encoder (one
//! input row per cycle), `ceil(N / P)` cycles in the time-multiplexed IF
//! units and one more cycle in the pipelined classifier. Learning runs
//! concurrently; its worst case is `K x D²` cycles per sample.
//!
//! Energy: one synaptic operation (SOP) is one expanded synapse position
//! evaluated, so an inference costs `N x D² x F` SOPs and each learner
//! `D² x F`. Per-SOP energies default to the 22 nm ASIC calibration
//! (0.09 pJ inference, 1.5 pJ learning).

use serde::{Deserialize, Serialize};

use crate::data::WindowGrid;
use crate::error::{Error, Result};
use crate::network::ModelConfig;

pub const PJ_PER_INFERENCE_SOP: f64 = 0.09;
pub const PJ_PER_LEARNING_SOP: f64 = 1.5;
pub const FPGA_CLOCK_HZ: f64 = 100e6;
pub const ASIC_CLOCK_HZ: f64 = 500e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub clock_hz: f64,
    /// IF units working in parallel (`P`).
    pub parallelism: usize,
    pub pj_per_inference_sop: f64,
    pub pj_per_learning_sop: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        Self {
            clock_hz: FPGA_CLOCK_HZ,
            parallelism: 1,
            pj_per_inference_sop: PJ_PER_INFERENCE_SOP,
            pj_per_learning_sop: PJ_PER_LEARNING_SOP,
        }
    }
}

impl CostParams {
    pub fn clock_period(&self) -> f64 {
        1.0 / self.clock_hz
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.clock_hz > 0.0
            && self.parallelism > 0
            && self.pj_per_inference_sop > 0.0
            && self.pj_per_learning_sop > 0.0;
        if positive {
            Ok(())
        } else {
            Err(Error::Invalid(format!("cost parameters must be positive: {self:?}")))
        }
    }
}

/// Encoder overhead + IF updates + classifier cycle for one sample.
pub fn inference_latency_cycles(neurons: usize, parallelism: usize, side: usize, kernel_side: usize) -> u64 {
    let encode = (side + kernel_side - 1) as u64;
    encode + (neurons as u64).div_ceil(parallelism.max(1) as u64) + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearningLatency {
    pub cycles: u64,
    /// Learning keeps pace with inference when `K x D² < N`.
    pub feasible: bool,
}

pub fn learning_latency_cycles(k: usize, side: usize, neurons: usize) -> LearningLatency {
    let cycles = (k * side * side) as u64;
    LearningLatency {
        cycles,
        feasible: cycles < neurons as u64,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseSops {
    pub inference: u64,
    pub learning: u64,
}

impl PhaseSops {
    pub fn inference_per_sample(model: &ModelConfig) -> u64 {
        (model.neurons * model.pixels() * model.filters as usize) as u64
    }

    pub fn learning_per_sample(model: &ModelConfig, learners: usize) -> u64 {
        (learners * model.pixels() * model.filters as usize) as u64
    }

    pub fn for_sample(model: &ModelConfig, learners: usize) -> Self {
        Self {
            inference: Self::inference_per_sample(model),
            learning: Self::learning_per_sample(model, learners),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Energy {
    pub inference_j: f64,
    pub learning_j: f64,
    pub total_j: f64,
}

impl Energy {
    /// Extra energy of a learning sample relative to plain inference.
    pub fn learning_overhead(&self) -> f64 {
        if self.inference_j == 0.0 {
            0.0
        } else {
            ((self.inference_j + self.learning_j) - self.inference_j) / self.inference_j
        }
    }
}

pub fn energy_estimate(sops: PhaseSops, params: &CostParams) -> Energy {
    let inference_j = sops.inference as f64 * params.pj_per_inference_sop * 1e-12;
    let learning_j = sops.learning as f64 * params.pj_per_learning_sop * 1e-12;
    Energy {
        inference_j,
        learning_j,
        total_j: inference_j + learning_j,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// `"sample"` or `"frame"`.
    pub scope: String,
    /// Samples or patches covered by the report.
    pub units: u64,
    pub encode_cycles: u64,
    pub inference_cycles: u64,
    pub classifier_cycles: u64,
    pub total_cycles: u64,
    pub learning_cycles_worst: u64,
    pub learning_feasible: bool,
    pub seconds: f64,
    pub fps: f64,
    pub sops: PhaseSops,
    pub energy: Energy,
    pub learning_overhead: f64,
}

impl CostReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Cost of one sample with `learners` neurons updating (0 for inference only).
pub fn sample_cost(model: &ModelConfig, k: usize, learners: usize, params: &CostParams) -> CostReport {
    let encode = (model.side + model.kernel_side - 1) as u64;
    let total = inference_latency_cycles(model.neurons, params.parallelism, model.side, model.kernel_side);
    let learning = learning_latency_cycles(k, model.side, model.neurons);
    let sops = PhaseSops::for_sample(model, learners);
    let energy = energy_estimate(sops, params);
    let seconds = total as f64 * params.clock_period();
    CostReport {
        scope: "sample".into(),
        units: 1,
        encode_cycles: encode,
        inference_cycles: total - encode - 1,
        classifier_cycles: 1,
        total_cycles: total,
        learning_cycles_worst: learning.cycles,
        learning_feasible: learning.feasible,
        seconds,
        fps: 1.0 / seconds,
        sops,
        learning_overhead: energy.learning_overhead(),
        energy,
    }
}

/// Sliding-window scan of an `image_h x image_w` frame.
///
/// Each window takes `max(1, ceil(N / P))` cycles. The encoder's shift
/// register is reloaded once per row of windows (`patch_side` cycles);
/// horizontally adjacent windows reuse it.
pub fn frame_cost(
    image_h: usize,
    image_w: usize,
    patch_side: usize,
    stride: usize,
    model: &ModelConfig,
    params: &CostParams,
) -> Result<CostReport> {
    params.validate()?;
    let grid = WindowGrid::new(image_h, image_w, patch_side, stride)?;
    let patches = grid.count() as u64;
    let per_patch = (model.neurons as u64)
        .div_ceil(params.parallelism as u64)
        .max(1);
    let encode = grid.rows as u64 * patch_side as u64;
    let inference = patches * per_patch;
    let total = encode + inference;
    let seconds = total as f64 * params.clock_period();
    let sops = PhaseSops {
        inference: patches * PhaseSops::inference_per_sample(model),
        learning: 0,
    };
    let energy = energy_estimate(sops, params);
    Ok(CostReport {
        scope: "frame".into(),
        units: patches,
        encode_cycles: encode,
        inference_cycles: inference,
        classifier_cycles: 0,
        total_cycles: total,
        learning_cycles_worst: (model.pixels()) as u64,
        learning_feasible: learning_latency_cycles(1, model.side, model.neurons).feasible,
        seconds,
        fps: 1.0 / seconds,
        sops,
        learning_overhead: energy.learning_overhead(),
        energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mnist_latency_arithmetic() {
        let cycles = inference_latency_cycles(2000, 1, 10, 5);
        assert_eq!(cycles, 2015);
        let report = sample_cost(&ModelConfig::mnist(2000), 1, 0, &CostParams::default());
        assert_eq!(report.total_cycles, 2015);
        assert!((report.seconds * 1e9 - 20150.0).abs() < 1e-6);
        assert_eq!(report.fps.floor() as u64, 49627);
    }

    #[test]
    fn full_parallelism_leaves_overhead_plus_two() {
        assert_eq!(inference_latency_cycles(400, 400, 28, 5), 32 + 2);
    }

    #[test]
    fn more_parallelism_never_slower() {
        let mut prev = u64::MAX;
        for p in [1, 2, 4, 8, 16, 400, 2000, 4000] {
            let c = inference_latency_cycles(2000, p, 10, 5);
            assert!(c <= prev);
            prev = c;
        }
        // doubling P halves the N term (ceil)
        assert_eq!(inference_latency_cycles(2001, 2, 10, 5) - 15, 1001);
    }

    #[test]
    fn learning_latency_and_feasibility() {
        assert_eq!(learning_latency_cycles(1, 10, 2000), LearningLatency { cycles: 100, feasible: true });
        assert!(!learning_latency_cycles(25, 10, 2000).feasible);
    }

    #[test]
    fn energy_calibration() {
        let model = ModelConfig::mnist(2000);
        let params = CostParams::default();
        let inf = energy_estimate(PhaseSops::for_sample(&model, 0), &params);
        assert_eq!(PhaseSops::inference_per_sample(&model), 1_600_000);
        assert!((inf.inference_j * 1e9 - 144.0).abs() < 1e-9);
        let learn = energy_estimate(PhaseSops::for_sample(&model, 1), &params);
        assert!((learn.learning_j * 1e9 - 1.2).abs() < 1e-12);
        assert!(learn.learning_overhead() < 0.01);
        assert_eq!(inf.learning_j, 0.0);
    }

    #[test]
    fn frame_tiling_count() {
        let r = frame_cost(64, 64, 32, 32, &ModelConfig::faces(400), &CostParams {
            parallelism: 400,
            ..CostParams::default()
        })
        .unwrap();
        assert_eq!(r.units, 4);
        assert!(frame_cost(16, 16, 32, 1, &ModelConfig::faces(400), &CostParams::default()).is_err());
    }

    #[test]
    fn fps_times_seconds_is_one() {
        let r = frame_cost(1080, 1920, 32, 1, &ModelConfig::faces(400), &CostParams {
            parallelism: 400,
            ..CostParams::default()
        })
        .unwrap();
        assert!((r.fps * r.seconds - 1.0).abs() < 1e-12);
    }
}
