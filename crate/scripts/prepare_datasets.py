#!/usr/bin/env python3
"""Turn the public source datasets into bit-lines files for `jrr --dataset`.

Each subcommand reads a raw download and writes one `0` or `1` per line.
Sampling is seeded, so a given input and seed always give the same file; the
original selections behind published numbers are not recoverable.

    prepare_datasets.py kosarak kosarak.dat -o kosarak.txt
    prepare_datasets.py amazon ratings_Beauty.csv -o amazon.txt
    prepare_datasets.py ecommerce "Womens Clothing E-Commerce Reviews.csv" -o ecommerce.txt
    prepare_datasets.py census usa_00001.csv -o census.txt
"""

import argparse
import csv
import random
import sys


def kosarak(path, rng, n=20_000, targets=100):
    # One session per line, page ids separated by spaces; every id is a click.
    clicks = []
    with open(path) as f:
        for line in f:
            clicks.extend(line.split())
    pages = sorted(set(clicks), key=int)
    target = set(rng.sample(pages, targets))
    return [c in target for c in rng.sample(clicks, n)]


def amazon(path, rng, n=10_000):
    # Headerless user,item,rating,timestamp; one rating per sampled customer.
    first = {}
    with open(path, newline="") as f:
        for user, _item, rating, _ts in csv.reader(f):
            first.setdefault(user, float(rating))
    users = rng.sample(sorted(first), n)
    return [first[u] == 1.0 for u in users]


def ecommerce(path, _rng):
    with open(path, newline="", encoding="utf-8") as f:
        return [row["Recommended IND"].strip() == "1" for row in csv.DictReader(f)]


def census(path, rng, n=10_000):
    with open(path, newline="") as f:
        gq = [row["GQ"].strip() for row in csv.DictReader(f)]
    return [g == "1" for g in rng.sample(gq, n)]


SOURCES = {"kosarak": kosarak, "amazon": amazon, "ecommerce": ecommerce, "census": census}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("source", choices=sorted(SOURCES))
    ap.add_argument("input")
    ap.add_argument("-o", "--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    bits = SOURCES[args.source](args.input, random.Random(args.seed))
    with open(args.out, "w", newline="\n") as f:
        f.writelines("1\n" if b else "0\n" for b in bits)
    ones = sum(bits)
    print(f"{args.out}: n={len(bits)} n1={ones} ratio={ones / len(bits):.3f}", file=sys.stderr)


if __name__ == "__main__":
    main()
