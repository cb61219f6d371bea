#!/usr/bin/env python3
"""Run the init-by-update ablation grid and print the I-AUROC table."""

import argparse

from lemo.engine import EngineConfig
from lemo.evaluator import SynthStreamSpec, ablation_to_text, run_ablation_grid
from lemo.synth_source import SynthConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--n-eval", type=int, default=60)
    args = ap.parse_args()

    spec = SynthStreamSpec(synth=SynthConfig(seed=args.seed),
                           n_train=args.frames, n_eval=args.n_eval)
    grid = run_ablation_grid(EngineConfig(seed=args.seed), spec)
    print(ablation_to_text(grid))

    for update in ("none", "learning", "feature_enhanced"):
        margin = (grid[("decoupled_noise", update)]["i_auroc"]
                  - grid[("noise", update)]["i_auroc"])
        print(f"decoupled - noise margin under {update}: {margin:+.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
