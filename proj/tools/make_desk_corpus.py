#!/usr/bin/env python3
"""Writes a deterministic pseudo-English corpus for desk-scale training runs.

Sentences come from a small phrase grammar, so the text has real character
and word statistics without shipping a third-party dataset.
"""
import argparse
import random

SUBJECTS = ["the old man", "a young girl", "the teacher", "my brother", "the small dog",
            "our neighbor", "the farmer", "a tired student", "the captain", "her mother",
            "the children", "a quiet woman", "the king", "his friend", "the baker"]
VERBS = ["walked to", "looked at", "talked about", "waited for", "thought about",
         "ran toward", "wrote about", "found", "carried", "painted", "visited", "remembered"]
OBJECTS = ["the river", "an open window", "the green field", "a long letter", "the market",
           "the village school", "a red boat", "the winter garden", "the empty house",
           "a bright lamp", "the stone bridge", "the evening train", "a heavy box"]
ADVERBS = ["slowly", "again", "in the morning", "after dinner", "without a word",
           "with great care", "before the rain", "every day", "for a while", "at night"]
JOINERS = ["and then", "but", "because", "so", "while"]


def sentence(rng):
    s = f"{rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"
    if rng.random() < 0.6:
        s += " " + rng.choice(ADVERBS)
    if rng.random() < 0.35:
        s += f" {rng.choice(JOINERS)} {rng.choice(SUBJECTS)} {rng.choice(VERBS)} {rng.choice(OBJECTS)}"
    return s[0].upper() + s[1:] + rng.choice([".", ".", ".", "!", "?"])


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--bytes", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1234)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    lines, size = [], 0
    while size < args.bytes:
        para = " ".join(sentence(rng) for _ in range(rng.randint(3, 7)))
        lines.append(para)
        size += len(para) + 1
    with open(args.out, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
