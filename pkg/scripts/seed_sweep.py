#!/usr/bin/env python3
"""Repeat the desk-scale run over several seeds and summarize the spread."""

import argparse
import statistics

from lemo.engine import EngineConfig, run_stream
from lemo.evaluator import SynthStreamSpec, evaluate_state
from lemo.synth_source import SynthConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10, help="number of seeds, 0..N-1")
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--n-eval", type=int, default=60)
    args = ap.parse_args()

    finals = []
    for seed in range(args.seeds):
        spec = SynthStreamSpec(synth=SynthConfig(seed=seed),
                               n_train=args.frames, n_eval=args.n_eval)
        cfg = EngineConfig(seed=seed)
        report = run_stream(cfg, spec.train_frames())
        result = evaluate_state(report.final_state, spec.eval_set())
        finals.append(result.i_auroc)
        print(f"seed {seed:3d}   I-AUROC {result.i_auroc:.4f}")

    mean = statistics.fmean(finals)
    spread = statistics.stdev(finals) if len(finals) > 1 else 0.0
    print(f"\n{len(finals)} seeds: mean {mean:.4f}  std {spread:.4f}  "
          f"min {min(finals):.4f}  max {max(finals):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
