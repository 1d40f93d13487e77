"""Write a planted-correlation corpus (meta.json + data.jsonl) to a directory.

Usage: python scripts/make_planted_corpus.py OUT_DIR [--n 600] [--seed 0]
"""
import argparse

from xpasc.corpus import save_corpus
from xpasc.synthetic import planted_corpus


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    ap.add_argument("--n", type=int, default=600)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--keyword-rate", type=float, default=0.7)
    args = ap.parse_args()
    corpus = planted_corpus(n=args.n, seed=args.seed, keyword_rate=args.keyword_rate)
    meta, data = save_corpus(corpus, args.out)
    print(f"{len(corpus)} instances, {len(corpus.vocabulary)} features -> {meta}, {data}")


if __name__ == "__main__":
    main()
