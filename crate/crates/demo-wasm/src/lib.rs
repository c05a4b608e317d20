//! Browser bindings for three demo views: the XOF pipeline schedule, a
//! layer-by-layer Pasta trace, and the full permutation table at p = 5.
//! Every function returns JSON text.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use hheml::field::FieldElement;
use hheml::pasta::{
    affine_apply, derive_round_material, sbox_cube, sbox_feistel, PastaParams, PastaSecretKey, PastaState,
};
use hheml::pipeline::{schedule, PipelineConfig, WorkloadSpec};
use hheml::xof::StreamPosition;

/// Blocks the browser page refuses to lay out.
pub const MAX_DEMO_BLOCKS: usize = 10_000;

#[derive(Serialize)]
struct ScheduleView {
    blocks: usize,
    round_slots: usize,
    latency_us: f64,
    relative_throughput: f64,
    /// `grid[slot][unit]` is the block index, or null for an idle unit.
    grid: Vec<Vec<Option<usize>>>,
}

pub fn schedule_json(units: usize, words: usize, words_per_block: usize, latency_us: f64) -> Result<String, String> {
    let cfg = PipelineConfig::new(units, latency_us, words_per_block).map_err(|e| e.to_string())?;
    if words.div_ceil(words_per_block) > MAX_DEMO_BLOCKS {
        return Err(format!("more than {MAX_DEMO_BLOCKS} blocks"));
    }
    let report = schedule(&cfg, &WorkloadSpec { total_words: words }).map_err(|e| e.to_string())?;
    let mut grid = vec![vec![None; units]; report.round_slots];
    for e in &report.trace {
        grid[e.slot][e.unit] = Some(e.block);
    }
    let view = ScheduleView {
        blocks: report.blocks,
        round_slots: report.round_slots,
        latency_us: report.latency_us,
        relative_throughput: report.relative_throughput,
        grid,
    };
    Ok(serde_json::to_string(&view).expect("serializable"))
}

#[derive(Serialize)]
struct Step {
    label: String,
    state: Vec<u32>,
}

fn parse_words(text: &str) -> Result<Vec<u32>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u32>().map_err(|_| format!("bad number {s:?}")))
        .collect()
}

/// States after every layer of the permutation; the last step's left half
/// is the keystream block.
pub fn pasta_trace_json(p: u64, t: usize, r: usize, nonce: u64, counter: u64, key: &str) -> Result<String, String> {
    let params = PastaParams::new(p, t, r).map_err(|e| e.to_string())?;
    let key = PastaSecretKey::from_u32(&parse_words(key)?, &params).map_err(|e| e.to_string())?;
    let material = derive_round_material(&params, StreamPosition::new(nonce, counter)).map_err(|e| e.to_string())?;
    let m = params.modulus();
    let words = |s: &PastaState| s.to_words().iter().map(|w| w.value()).collect::<Vec<_>>();
    let mut steps = vec![Step {
        label: "key".into(),
        state: key.words().iter().map(|w| w.value()).collect(),
    }];
    let mut state = PastaState::from_words(key.words());
    let mut push = |label: String, s: &PastaState| steps.push(Step { label, state: words(s) });
    for (j, layer) in material.layers.iter().enumerate() {
        if j > 0 {
            let (name, next) = if j < r {
                ("S' (Feistel)", sbox_feistel(&state, m))
            } else {
                ("S (cube)", sbox_cube(&state, m))
            };
            state = next;
            push(name.into(), &state);
        }
        state = affine_apply(layer, &state, &params).map_err(|e| e.to_string())?;
        push(format!("A{j}"), &state);
    }
    Ok(serde_json::to_string(&steps).expect("serializable"))
}

#[derive(Serialize)]
struct BijectionView {
    /// `map[a][b]` is the output `(x_L, x_R)` for input `(a, b)`.
    map: Vec<Vec<(u32, u32)>>,
    distinct: usize,
}

/// The whole permutation at p = 5, t = 1 for one stream position.
pub fn bijection_json(r: usize, nonce: u64, counter: u64) -> Result<String, String> {
    let params = PastaParams::new(5, 1, r).map_err(|e| e.to_string())?;
    let material = derive_round_material(&params, StreamPosition::new(nonce, counter)).map_err(|e| e.to_string())?;
    let m = params.modulus();
    let mut seen = std::collections::HashSet::new();
    let mut map = Vec::with_capacity(5);
    for a in 0..5 {
        let mut row = Vec::with_capacity(5);
        for b in 0..5 {
            let input: [FieldElement; 2] = [m.reduce(a), m.reduce(b)];
            let mut s = affine_apply(&material.layers[0], &PastaState::from_words(&input), &params)
                .map_err(|e| e.to_string())?;
            for j in 1..=r {
                s = if j < r { sbox_feistel(&s, m) } else { sbox_cube(&s, m) };
                s = affine_apply(&material.layers[j], &s, &params).map_err(|e| e.to_string())?;
            }
            let out = (s.left[0].value(), s.right[0].value());
            seen.insert(out);
            row.push(out);
        }
        map.push(row);
    }
    Ok(serde_json::to_string(&BijectionView {
        map,
        distinct: seen.len(),
    })
    .expect("serializable"))
}

#[wasm_bindgen]
pub fn pipeline_schedule(
    units: usize,
    words: usize,
    words_per_block: usize,
    latency_us: f64,
) -> Result<String, JsValue> {
    schedule_json(units, words, words_per_block, latency_us).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn pasta_trace(p: u32, t: usize, r: usize, nonce: u32, counter: u32, key: &str) -> Result<String, JsValue> {
    pasta_trace_json(p as u64, t, r, nonce as u64, counter as u64, key).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn bijection_map(r: usize, nonce: u32, counter: u32) -> Result<String, JsValue> {
    bijection_json(r, nonce as u64, counter as u64).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use hheml::pasta::{keystream_block, pasta_permutation};
    use serde_json::Value;

    #[test]
    fn schedule_grid_for_mnist() {
        let v: Value = serde_json::from_str(&schedule_json(2, 784, 17, 66.1).unwrap()).unwrap();
        assert_eq!(v["round_slots"], 24);
        let grid = v["grid"].as_array().unwrap();
        assert_eq!(grid.len(), 24);
        assert_eq!(grid[23][0], 46);
        assert!(grid[23][1].is_null());
        assert!(schedule_json(0, 784, 17, 66.1).is_err());
        assert!(schedule_json(1, 1 << 30, 1, 66.1).is_err());
    }

    #[test]
    fn trace_ends_at_the_permutation_output() {
        let params = PastaParams::new(257, 2, 3).unwrap();
        let text = pasta_trace_json(257, 2, 3, 9, 1, "1, 2, 3, 4").unwrap();
        let steps: Vec<Value> = serde_json::from_str(&text).unwrap();
        assert_eq!(steps.len(), 1 + 1 + 2 * 3);
        let last: Vec<u32> = serde_json::from_value(steps.last().unwrap()["state"].clone()).unwrap();
        let key = PastaSecretKey::from_u32(&[1, 2, 3, 4], &params).unwrap();
        let want = pasta_permutation(&key, StreamPosition::new(9, 1), &params).unwrap();
        assert_eq!(last, want.to_words().iter().map(|w| w.value()).collect::<Vec<_>>());
        let ks = keystream_block(&key, StreamPosition::new(9, 1), &params).unwrap();
        assert_eq!(&last[..2], &[ks[0].value(), ks[1].value()]);
        assert!(pasta_trace_json(257, 2, 3, 0, 0, "1 2 3").is_err());
        assert!(pasta_trace_json(257, 2, 3, 0, 0, "1 2 x 4").is_err());
    }

    #[test]
    fn bijection_table_is_a_permutation() {
        for r in [3, 4] {
            let v: Value = serde_json::from_str(&bijection_json(r, 5, 6).unwrap()).unwrap();
            assert_eq!(v["distinct"], 25);
        }
        let params = PastaParams::new(5, 1, 3).unwrap();
        let v: Value = serde_json::from_str(&bijection_json(3, 5, 6).unwrap()).unwrap();
        let key = PastaSecretKey::from_u32(&[2, 3], &params).unwrap();
        let out = pasta_permutation(&key, StreamPosition::new(5, 6), &params).unwrap();
        assert_eq!(v["map"][2][3][0], out.left[0].value());
        assert_eq!(v["map"][2][3][1], out.right[0].value());
    }
}
