//! Slot-synchronous model of a client keystream pipeline with `k` XOF
//! units fed round-robin by a shared round counter.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MNIST_WORDS: usize = 784;
pub const DEFAULT_WORDS_PER_BLOCK: usize = 17;
pub const DEFAULT_ROUND_LATENCY_US: f64 = 66.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("xof_units must be at least 1")]
    NoUnits,
    #[error("words_per_block must be at least 1")]
    EmptyBlock,
    #[error("per-round latency must be finite and positive, got {0}")]
    BadLatency(f64),
    #[error("no unit counts given")]
    NoConfigs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub xof_units: usize,
    pub per_round_latency_us: f64,
    pub words_per_block: usize,
}

impl PipelineConfig {
    pub fn new(xof_units: usize, per_round_latency_us: f64, words_per_block: usize) -> Result<Self, PipelineError> {
        let cfg = PipelineConfig {
            xof_units,
            per_round_latency_us,
            words_per_block,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.xof_units == 0 {
            return Err(PipelineError::NoUnits);
        }
        if self.words_per_block == 0 {
            return Err(PipelineError::EmptyBlock);
        }
        let l = self.per_round_latency_us;
        if !(l.is_finite() && l > 0.0) {
            return Err(PipelineError::BadLatency(l));
        }
        Ok(())
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            xof_units: 1,
            per_round_latency_us: DEFAULT_ROUND_LATENCY_US,
            words_per_block: DEFAULT_WORDS_PER_BLOCK,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub total_words: usize,
}

impl WorkloadSpec {
    pub fn mnist() -> Self {
        WorkloadSpec {
            total_words: MNIST_WORDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEntry {
    pub slot: usize,
    pub unit: usize,
    pub block: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub xof_units: usize,
    pub blocks: usize,
    pub round_slots: usize,
    pub latency_us: f64,
    pub relative_throughput: f64,
    pub trace: Vec<TraceEntry>,
}

impl SimReport {
    /// Blocks in output order, reassembled from the trace.
    pub fn output_order(&self) -> Vec<usize> {
        let mut by_block = self.trace.clone();
        by_block.sort_by_key(|e| (e.block, e.slot));
        by_block.iter().map(|e| e.block).collect()
    }

    /// `slot,unit,block` rows with a header line.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("slot,unit,block\n");
        for e in &self.trace {
            writeln!(out, "{},{},{}", e.slot, e.unit, e.block).unwrap();
        }
        out
    }
}

pub fn blocks_needed(workload: &WorkloadSpec, config: &PipelineConfig) -> usize {
    workload.total_words.div_ceil(config.words_per_block.max(1))
}

/// Block `b` runs on unit `b mod k` in slot `floor(b / k)`.
pub fn schedule(config: &PipelineConfig, workload: &WorkloadSpec) -> Result<SimReport, PipelineError> {
    config.validate()?;
    let k = config.xof_units;
    let blocks = blocks_needed(workload, config);
    let trace: Vec<TraceEntry> = (0..blocks)
        .map(|b| TraceEntry {
            slot: b / k,
            unit: b % k,
            block: b,
        })
        .collect();
    let round_slots = blocks.div_ceil(k);
    let relative_throughput = if round_slots == 0 {
        1.0
    } else {
        blocks as f64 / round_slots as f64
    };
    Ok(SimReport {
        xof_units: k,
        blocks,
        round_slots,
        latency_us: round_slots as f64 * config.per_round_latency_us,
        relative_throughput,
        trace,
    })
}

/// One report per unit count; throughput is relative to a single unit.
pub fn compare_configs(
    workload: &WorkloadSpec,
    latency_us: f64,
    words_per_block: usize,
    unit_counts: &[usize],
) -> Result<Vec<SimReport>, PipelineError> {
    if unit_counts.is_empty() {
        return Err(PipelineError::NoConfigs);
    }
    unit_counts
        .iter()
        .map(|&k| schedule(&PipelineConfig::new(k, latency_us, words_per_block)?, workload))
        .collect()
}

/// Fixed-width text table of reports.
pub fn render_table(reports: &[SimReport]) -> String {
    let mut out = String::from("units  blocks  round_slots  latency_us  rel_throughput\n");
    for r in reports {
        writeln!(
            out,
            "{:>5}  {:>6}  {:>11}  {:>10.1}  {:>13.2}x",
            r.xof_units, r.blocks, r.round_slots, r.latency_us, r.relative_throughput
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(k: usize) -> PipelineConfig {
        PipelineConfig::new(k, DEFAULT_ROUND_LATENCY_US, DEFAULT_WORDS_PER_BLOCK).unwrap()
    }

    #[test]
    fn block_counts() {
        let c = cfg(1);
        assert_eq!(blocks_needed(&WorkloadSpec::mnist(), &c), 47);
        assert_eq!(blocks_needed(&WorkloadSpec { total_words: 0 }, &c), 0);
        assert_eq!(blocks_needed(&WorkloadSpec { total_words: 17 }, &c), 1);
        assert_eq!(blocks_needed(&WorkloadSpec { total_words: 18 }, &c), 2);
    }

    #[test]
    fn mnist_single_and_dual() {
        let one = schedule(&cfg(1), &WorkloadSpec::mnist()).unwrap();
        let two = schedule(&cfg(2), &WorkloadSpec::mnist()).unwrap();
        assert_eq!((one.round_slots, two.round_slots), (47, 24));
        assert!((one.latency_us - 3106.7).abs() < 1e-9);
        assert!((two.latency_us - 1586.4).abs() < 1e-9);
        assert_eq!(format!("{:.2}", two.relative_throughput), "1.96");
        assert_eq!(one.relative_throughput, 1.0);
    }

    #[test]
    fn comparison_table() {
        let reports = compare_configs(&WorkloadSpec::mnist(), 66.1, 17, &[1, 2, 47, 64]).unwrap();
        assert_eq!(reports[1], schedule(&cfg(2), &WorkloadSpec::mnist()).unwrap());
        assert_eq!(reports[2].round_slots, 1);
        assert_eq!(reports[3].round_slots, 1);
        let table = render_table(&reports);
        assert!(table.lines().nth(1).unwrap().ends_with("1.00x"));
        assert_eq!(
            compare_configs(&WorkloadSpec::mnist(), 66.1, 17, &[]),
            Err(PipelineError::NoConfigs)
        );
    }

    #[test]
    fn invalid_configs() {
        assert_eq!(PipelineConfig::new(0, 1.0, 17), Err(PipelineError::NoUnits));
        assert_eq!(PipelineConfig::new(1, 1.0, 0), Err(PipelineError::EmptyBlock));
        assert!(PipelineConfig::new(1, -1.0, 17).is_err());
        assert!(PipelineConfig::new(1, f64::NAN, 17).is_err());
    }

    #[test]
    fn csv_trace_layout() {
        let r = schedule(&cfg(2), &WorkloadSpec { total_words: 40 }).unwrap();
        assert_eq!(r.trace_csv(), "slot,unit,block\n0,0,0\n0,1,1\n1,0,2\n");
    }

    /// Event replay: every unit is busy at most once per slot and the
    /// makespan is the last busy slot plus one.
    fn replay(r: &SimReport, k: usize) -> usize {
        let mut busy = std::collections::HashSet::new();
        let mut end = 0;
        for e in &r.trace {
            assert!(e.unit < k);
            assert!(busy.insert((e.slot, e.unit)), "unit double-booked");
            end = end.max(e.slot + 1);
        }
        end
    }

    #[test]
    fn makespan_matches_replay_exhaustively_on_small_grid() {
        for blocks in 0..200usize {
            for k in 1..=64 {
                let w = WorkloadSpec {
                    total_words: blocks * 17,
                };
                let r = schedule(&cfg(k), &w).unwrap();
                assert_eq!(r.round_slots, blocks.div_ceil(k));
                assert_eq!(replay(&r, k), r.round_slots);
            }
        }
    }

    proptest! {
        #[test]
        fn makespan_and_order(blocks in 0usize..10_000, k in 1usize..=64, lat in 0.5f64..500.0) {
            let w = WorkloadSpec { total_words: blocks * 17 };
            let c = PipelineConfig::new(k, lat, 17).unwrap();
            let r = schedule(&c, &w).unwrap();
            prop_assert_eq!(r.round_slots, blocks.div_ceil(k));
            prop_assert_eq!(replay(&r, k), r.round_slots);
            prop_assert_eq!(r.output_order(), (0..blocks).collect::<Vec<_>>());
            prop_assert!((r.latency_us - r.round_slots as f64 * lat).abs() < 1e-6 * r.latency_us.max(1.0));
            if k > 1 {
                let prev = schedule(&PipelineConfig::new(k - 1, lat, 17).unwrap(), &w).unwrap();
                prop_assert!(r.round_slots <= prev.round_slots);
            }
        }
    }
}
