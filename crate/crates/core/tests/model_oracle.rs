// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use std::time::Instant;

use common::{ids, oracle, ranking, small_model, tokenizer};

#[test]
fn fixture_prompts_tokenize_like_the_oracle() {
    for p in &oracle().fixture.prompts {
        let got: Vec<u32> = tokenizer().encode(&p.prompt).iter().map(|t| t.0).collect();
        assert_eq!(got, p.token_ids, "{:?}", p.prompt);
    }
}

#[test]
fn logits_match_independent_implementation() {
    let model = small_model();
    let o = oracle();
    for (p, expect) in o.fixture.prompts.iter().zip(&o.final_logits) {
        let start = Instant::now();
        let tr = model.forward_trace(&ids(&p.token_ids)).unwrap();
        let elapsed = start.elapsed();
        let last = tr.n_tokens() - 1;
        let max_abs = tr
            .logits(last)
            .iter()
            .zip(expect)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        println!("{:?}: {} tokens, max |dlogit| = {max_abs:e}, {elapsed:?}", p.prompt, tr.n_tokens());
        assert!(max_abs <= 5e-2);
        for (pos, op) in p.positions.iter().enumerate() {
            assert_eq!(ranking(tr.logits(pos), 10), op.top10_ids, "position {pos} of {:?}", p.prompt);
            for (j, &id) in op.top10_ids.iter().enumerate() {
                assert!((tr.logits(pos)[id as usize] - op.top10_logits[j]).abs() <= 5e-2);
            }
        }
    }
}

#[test]
fn block0_attention_matches_oracle() {
    let model = small_model();
    let p = &oracle().fixture.prompts[0];
    let expect = p.attention_block0.as_ref().unwrap();
    let n = p.token_ids.len();
    let got = model.attention_pattern(&ids(&p.token_ids), 0).unwrap();
    for i in 0..n {
        for j in 0..n {
            assert!((got[i * n + j] - expect[i][j]).abs() < 1e-3, "({i},{j})");
        }
    }
}

#[derive(serde::Deserialize)]
struct LensTop {
    ids: Vec<u32>,
    scores: Vec<f32>,
}

#[derive(serde::Deserialize)]
struct LensPrompt {
    token_ids: Vec<u32>,
    /// `layers[l][pos]` for states 0..n_layers
    layers: Vec<Vec<LensTop>>,
}

#[derive(serde::Deserialize)]
struct LensFixture {
    prompts: Vec<LensPrompt>,
}

#[test]
fn intermediate_lens_matches_oracle() {
    let text = std::fs::read_to_string(common::fixture_path("oracle_lens.json")).unwrap();
    let fixture: LensFixture = serde_json::from_str(&text).unwrap();
    let model = small_model();
    let mut worst = 0.0f32;
    for p in &fixture.prompts {
        let tr = model.forward_trace(&ids(&p.token_ids)).unwrap();
        assert_eq!(p.layers.len(), tr.n_layers);
        for (layer, per_pos) in p.layers.iter().enumerate() {
            for (pos, expect) in per_pos.iter().enumerate() {
                let got = model.logit_lens(&tr, pos, layer, 10).unwrap();
                let got_ids: Vec<u32> = got.iter().map(|e| e.token_id.0).collect();
                assert_eq!(got_ids, expect.ids, "layer {layer} position {pos}");
                for (g, &s) in got.iter().zip(&expect.scores) {
                    worst = worst.max((g.score - s).abs());
                }
            }
        }
    }
    println!("lens max |dscore| = {worst:e}");
    assert!(worst <= 5e-2);
}
