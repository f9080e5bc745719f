"""Produce the model parity fixtures with the Hugging Face GPT-2 implementation.

Usage: python3 tools/oracle/gen_oracle.py [out_dir]

Writes into crates/core/tests/fixtures/ by default:
  oracle_logits.json       prompts, token ids, per-position top-10 ids/logits,
                           block-0 head-averaged attention for the first prompt
  oracle_final_logits.bin  final-position logits, float32 little-endian,
                           one vocab-sized row per prompt
  oracle_lens.json         logit-lens top-10 for the first two prompts at every
                           intermediate state: unembedding of ln_f(hidden_states[l])
"""

import json
import os
import sys

import numpy as np
import torch
from transformers import GPT2Config, GPT2LMHeadModel, GPT2Tokenizer

import synth

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.abspath(os.path.join(HERE, "..", ".."))
ASSETS = os.path.join(ROOT, "crates", "core", "assets", "gpt2")

PROMPTS = [
    "The capital of France is",
    "Hello world",
    "In the beginning was the word, and the word was with the reader.",
    "Marginalia: notes scribbled in the margins of a book, 1450–1650.",
    "def follow(token):\n    return [layer for layer in range(13)]",
]


def top10(row):
    order = sorted(range(len(row)), key=lambda j: (-row[j], j))[:11]
    return {
        "ids": order[:10],
        "scores": [float(row[j]) for j in order[:10]],
        "min_gap": min(float(row[order[k]] - row[order[k + 1]]) for k in range(10)),
    }


def lens_records(model, tok):
    out = []
    for prompt in PROMPTS[:2]:
        ids = tok.encode(prompt)
        with torch.no_grad():
            res = model(torch.tensor([ids]), output_hidden_states=True)
            # hidden_states[l] for l < n_layer is the residual stream before
            # block l; the last entry already has ln_f applied
            layers = []
            for l in range(model.config.n_layer):
                h = model.transformer.ln_f(res.hidden_states[l][0])
                scores = model.lm_head(h).float().numpy()
                layers.append([top10(scores[p]) for p in range(len(ids))])
        out.append({"prompt": prompt, "token_ids": ids, "layers": layers})
    return out


def main():
    out_dir = sys.argv[1] if len(sys.argv) > 1 else os.path.join(ROOT, "crates", "core", "tests", "fixtures")
    torch.manual_seed(0)
    tok = GPT2Tokenizer(os.path.join(ASSETS, "encoder.json"), os.path.join(ASSETS, "vocab.bpe"))

    cfg = synth.SMALL
    config = GPT2Config(
        vocab_size=cfg["vocab_size"],
        n_positions=cfg["n_ctx"],
        n_embd=cfg["d_model"],
        n_layer=cfg["n_layers"],
        n_head=cfg["n_heads"],
        activation_function="gelu_new",
        layer_norm_epsilon=1e-5,
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
    )
    model = GPT2LMHeadModel(config)
    model.config._attn_implementation = "eager"
    weights = synth.build(cfg)
    state = {"transformer." + k: torch.from_numpy(v) for k, v in weights.items()}
    state["lm_head.weight"] = state["transformer.wte.weight"]
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [m for m in missing if not m.endswith("attn.bias") and not m.endswith("masked_bias")]
    assert not missing, missing
    assert not unexpected, unexpected
    model.eval()

    records = []
    finals = []
    for i, prompt in enumerate(PROMPTS):
        ids = tok.encode(prompt)
        assert 1 <= len(ids) <= 32, (prompt, len(ids))
        with torch.no_grad():
            out = model(torch.tensor([ids]), output_attentions=True)
        logits = out.logits[0].float().numpy()
        positions = []
        for p in range(len(ids)):
            row = logits[p]
            order = sorted(range(len(row)), key=lambda j: (-row[j], j))[:11]
            gaps = [float(row[order[k]] - row[order[k + 1]]) for k in range(10)]
            positions.append(
                {
                    "top10_ids": order[:10],
                    "top10_logits": [float(row[j]) for j in order[:10]],
                    "min_gap": min(gaps),
                }
            )
        finals.append(logits[-1].astype("<f4"))
        rec = {"prompt": prompt, "token_ids": ids, "positions": positions}
        if i == 0:
            att = out.attentions[0][0].mean(dim=0).numpy()
            rec["attention_block0"] = att.tolist()
        records.append(rec)
        print(prompt[:30], len(ids), "min gap", min(p["min_gap"] for p in positions))

    fixture = {
        "generator": "transformers GPT2LMHeadModel (eager attention, float32)",
        "weights": "synthetic-gpt2-small",
        "vocab_size": cfg["vocab_size"],
        "prompts": records,
    }
    with open(os.path.join(out_dir, "oracle_logits.json"), "w") as f:
        json.dump(fixture, f, indent=1)
    np.concatenate(finals).tofile(os.path.join(out_dir, "oracle_final_logits.bin"))
    lens = {
        "generator": fixture["generator"],
        "weights": fixture["weights"],
        "prompts": lens_records(model, tok),
    }
    with open(os.path.join(out_dir, "oracle_lens.json"), "w") as f:
        json.dump(lens, f, indent=1)


if __name__ == "__main__":
    main()
