#!/usr/bin/env python3
"""Generate the bundled synthetic corpus and prompt splits.

Token 1 is end-of-text; content tokens are 2..V. Each content token a moves to
a+1 most of the time, with skips to a+2 and a+3, a short self-loop, and a
small uniform tail. Sequences end with a run of end-of-text padding once
they pass the top of the vocabulary.
"""

import argparse
import pathlib
import random


def successor(rng: random.Random, a: int, vocab: int, args) -> int:
    content = vocab - 1
    if a == 1:
        return 1
    if a == vocab and rng.random() < args.eot_prob:
        return 1
    r = rng.random()
    steps = [(args.p_next, 1), (args.p_skip2, 2), (args.p_skip3, 3), (args.p_self, 0)]
    for p, step in steps:
        if r < p:
            return 2 + (a - 2 + step) % content
        r -= p
    return rng.randint(2, vocab)


def sequence(rng: random.Random, vocab: int, args) -> list[int]:
    a = rng.randint(2, vocab)
    out = [a]
    target = rng.randint(args.min_len, args.max_len)
    while len(out) < target:
        a = successor(rng, a, vocab, args)
        out.append(a)
        if a == 1:
            break
    if out[-1] != 1:
        out.append(1)
    out.extend([1] * rng.randint(args.min_pad, args.max_pad))
    return out


def prompt(rng: random.Random, vocab: int, args) -> list[int]:
    length = rng.randint(args.min_prompt, args.max_prompt)
    a = rng.randint(2, vocab)
    out = [a]
    while len(out) < length:
        a = successor(rng, a, vocab, args)
        if a == 1:
            a = rng.randint(2, vocab)
        out.append(a)
    return out


def write(path: pathlib.Path, rows: list[list[int]]) -> None:
    path.write_text("".join(" ".join(map(str, r)) + "\n" for r in rows))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path(__file__).resolve().parent.parent / "data")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--vocab", type=int, default=64)
    ap.add_argument("--sequences", type=int, default=200)
    ap.add_argument("--min-len", type=int, default=60)
    ap.add_argument("--max-len", type=int, default=220)
    ap.add_argument("--min-pad", type=int, default=4)
    ap.add_argument("--max-pad", type=int, default=24)
    ap.add_argument("--p-next", type=float, default=0.45)
    ap.add_argument("--p-skip2", type=float, default=0.25)
    ap.add_argument("--p-skip3", type=float, default=0.15)
    ap.add_argument("--p-self", type=float, default=0.05)
    ap.add_argument("--eot-prob", type=float, default=0.5)
    ap.add_argument("--calib-prompts", type=int, default=60)
    ap.add_argument("--eval-prompts", type=int, default=40)
    ap.add_argument("--min-prompt", type=int, default=4)
    ap.add_argument("--max-prompt", type=int, default=12)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    corpus = [sequence(rng, args.vocab, args) for _ in range(args.sequences)]

    seen: set[tuple[int, ...]] = set()
    prompts: list[list[int]] = []
    while len(prompts) < args.calib_prompts + args.eval_prompts:
        p = prompt(rng, args.vocab, args)
        if tuple(p) not in seen:
            seen.add(tuple(p))
            prompts.append(p)

    args.out.mkdir(parents=True, exist_ok=True)
    write(args.out / "corpus.txt", corpus)
    write(args.out / "calib_prompts.txt", prompts[: args.calib_prompts])
    write(args.out / "eval_prompts.txt", prompts[args.calib_prompts :])
    tokens = sum(len(s) for s in corpus)
    print(f"corpus: {len(corpus)} sequences, {tokens} tokens, V={args.vocab}")


if __name__ == "__main__":
    main()
