#!/usr/bin/env python3
"""Enumerate the 2^3 regularization ablation grid (A/D/U) from one base config.

A = translations + horizontal flips, D = dropout, U = unsupervised
pretraining (fine-tuning from the pretrain checkpoint instead of a random
initialization). Writes one derived config per combination and either
prints the commands to run or runs them in-process with --run.

    python3 scripts/ablation.py --config base.ini --out runs/grid [--run]
"""

import argparse
import configparser
import io
import itertools
import os
import sys


def variant_text(base_text, translations, dropout):
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_file(io.StringIO(base_text))
    if not parser.has_section("augment"):
        parser.add_section("augment")
    parser["augment"]["translations"] = "true" if translations else "false"
    parser["augment"]["dropout"] = "true" if dropout else "false"
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", required=True, help="base experiment config")
    ap.add_argument("--out", required=True, help="grid output directory")
    ap.add_argument("--run", action="store_true", help="run instead of printing commands")
    ap.add_argument("--seed", type=int, default=None)
    args = ap.parse_args()

    with open(args.config, "r", encoding="utf-8") as fh:
        base = fh.read()
    os.makedirs(args.out, exist_ok=True)

    seed_args = ["--seed", str(args.seed)] if args.seed is not None else []
    pretrain_dir = os.path.join(args.out, "pretrain")
    ckpt = os.path.join(pretrain_dir, "pretrain.zcae")
    commands = [["pretrain", "--config", args.config, "--out", pretrain_dir, *seed_args]]

    for a, d, u in itertools.product((False, True), repeat=3):
        cond = "".join(flag for flag, on in zip("adu", (a, d, u)) if on) or "none"
        cfg_path = os.path.join(args.out, f"exp_{cond}.ini")
        with open(cfg_path, "w", encoding="utf-8") as fh:
            fh.write(variant_text(base, a, d))
        commands.append([
            "finetune", "--config", cfg_path,
            "--init", ckpt if u else "random",
            "--out", os.path.join(args.out, cond), *seed_args,
        ])

    if not args.run:
        for cmd in commands:
            print("zbcae " + " ".join(cmd))
        return 0

    from zbcae import cli

    for cmd in commands:
        print("+ zbcae " + " ".join(cmd), flush=True)
        code = cli.main(cmd)
        if code != 0:
            print(f"command failed with exit {code}", file=sys.stderr)
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
