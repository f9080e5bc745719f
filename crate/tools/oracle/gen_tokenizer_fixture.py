"""Record reference tokenizations for the tokenizer parity corpus.

Usage: python3 tools/oracle/gen_tokenizer_fixture.py [out_path]

Builds a seeded 1000-string corpus (ASCII, accented Latin, CJK, emoji,
whitespace edge cases, contractions, digits) and records the ids produced by
the Hugging Face GPT2Tokenizer over the bundled encoder.json / vocab.bpe.
tiktoken, rebuilt from the same encoder.json, is run as a cross-check.
"""

import json
import os
import random
import sys

import tiktoken
from transformers import GPT2Tokenizer

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.abspath(os.path.join(HERE, "..", ".."))
ASSETS = os.path.join(ROOT, "crates", "core", "assets", "gpt2")

WORDS = (
    "the quick brown fox jumps over lazy dog reader margin gloss token layer "
    "interpretation model residual stream attention France capital Paris manuscript "
    "annotation trajectory scholarship poetics reading writing book").split()
ACCENTED = "naïve café résumé façade coöperate jalapeño Zürich São Paulo Ångström déjà vu crème brûlée señor Øresund Łódź İstanbul".split()
CJK = ["漢字", "日本語のテキスト", "中文分词测试", "한국어 문장", "東京タワー", "读书", "注释", "かな カナ"]
EMOJI = ["😀", "👍🏽", "🇫🇷", "👨‍👩‍👧", "🧠", "📚✍️", "❤️", "🤖"]
CONTRACTIONS = ["I'll", "don't", "it's", "we've", "they're", "I'm", "he'd", "'s", "'t", "'re", "O'Neil", "rock'n'roll"]
PUNCT = list("!?.,;:-_()[]{}<>/\\|@#$%^&*+=~`\"'")
WS = [" ", "  ", "   ", "\t", "\n", "\n\n", "\r\n", " \n", "\t \t", " ", "　", " "]


def rand_piece(rng):
    kind = rng.random()
    if kind < 0.35:
        w = rng.choice(WORDS)
        return w.capitalize() if rng.random() < 0.2 else w
    if kind < 0.45:
        return rng.choice(ACCENTED)
    if kind < 0.53:
        return rng.choice(CJK)
    if kind < 0.60:
        return rng.choice(EMOJI)
    if kind < 0.68:
        return rng.choice(CONTRACTIONS)
    if kind < 0.78:
        return str(rng.randint(0, 10 ** rng.randint(1, 9)))
    if kind < 0.88:
        return "".join(rng.choice(PUNCT) for _ in range(rng.randint(1, 3)))
    return chr(rng.randint(0x20, 0x2FFF))


def rand_sep(rng):
    return " " if rng.random() < 0.75 else rng.choice(WS + [""])


def corpus(rng, n):
    fixed = [
        "", " ", "  ", "\n", "\t", "Hello world", "Hello  world", " Hello world ", "Hello world\n",
        "The capital of France is", "naïve café\n", "a\n\nb", "trailing spaces   ", "   leading",
        "x \n y", "123456789", "3.14159", "I'll've", "'''", "🇫🇷🇫🇷", "\r\n\r\n", "ǅemal", "  ",
        "A'S", "can't won't", "tab\tseparated\tvalues", "#!/bin/sh", "e=mc^2", "日本 語", "    indented code",
    ]
    out = list(fixed)
    while len(out) < n:
        length = rng.randint(1, 14)
        parts = []
        for _ in range(length):
            parts.append(rand_piece(rng))
            parts.append(rand_sep(rng))
        s = "".join(parts)
        if rng.random() < 0.3:
            s = rng.choice(WS) + s
        out.append(s)
    return out[:n]


def bytes_to_unicode():
    bs = list(range(ord("!"), ord("~") + 1)) + list(range(ord("¡"), ord("¬") + 1)) + list(range(ord("®"), ord("ÿ") + 1))
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, map(chr, cs)))


def tiktoken_gpt2(vocab_path):
    decoder = {v: k for k, v in bytes_to_unicode().items()}
    with open(vocab_path, encoding="utf-8") as f:
        encoder = json.load(f)
    ranks = {}
    special = {}
    for token, idx in encoder.items():
        if token == "<|endoftext|>":
            special[token] = idx
            continue
        ranks[bytes(decoder[c] for c in token)] = idx
    pat = r"""'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
    return tiktoken.Encoding("gpt2-local", pat_str=pat, mergeable_ranks=ranks, special_tokens=special)


def main():
    out_path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(
        ROOT, "crates", "core", "tests", "fixtures", "tokenizer_corpus.json")
    vocab = os.path.join(ASSETS, "encoder.json")
    merges = os.path.join(ASSETS, "vocab.bpe")
    slow = GPT2Tokenizer(vocab, merges)
    fast = tiktoken_gpt2(vocab)
    rng = random.Random(20261015)
    entries = []
    for text in corpus(rng, 1000):
        ids = slow.encode(text)
        assert ids == fast.encode_ordinary(text), repr(text)
        entries.append({"text": text, "ids": ids})
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"reference": "transformers GPT2Tokenizer", "entries": entries}, f, ensure_ascii=False, indent=0)
    print(len(entries), "entries,", sum(len(e["ids"]) for e in entries), "tokens")


if __name__ == "__main__":
    main()
