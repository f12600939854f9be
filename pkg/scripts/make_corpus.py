#!/usr/bin/env python3
"""Generate a synthetic photo-like corpus for benchmarking."""

import argparse

from blockmark.synth import DEFAULT_SIZES, make_corpus


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("out_dir")
    parser.add_argument("-n", "--count", type=int, default=100)
    parser.add_argument("--rng-seed", type=int, default=0)
    args = parser.parse_args()
    paths = make_corpus(args.out_dir, args.count, args.rng_seed, DEFAULT_SIZES)
    print(f"wrote {len(paths)} images to {args.out_dir}")


if __name__ == "__main__":
    main()
