#!/usr/bin/env python3
"""Sweep drift magnitudes and compare frozen against online adaptation."""

import argparse

from lemo.engine import EngineConfig
from lemo.evaluator import SynthStreamSpec, run_drift_experiment
from lemo.synth_source import DriftSpec, SynthConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--kind", default="brightness", choices=("brightness", "gaussian"))
    ap.add_argument("--magnitudes", type=float, nargs="+",
                    default=[0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--onset", type=int, default=150)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--n-eval", type=int, default=60)
    args = ap.parse_args()

    spec = SynthStreamSpec(synth=SynthConfig(seed=args.seed),
                           n_train=args.frames, n_eval=args.n_eval)
    cfg = EngineConfig(seed=args.seed)

    print(f"{args.kind} drift, onset frame {args.onset}")
    print("magnitude   frozen   online   online-frozen")
    for magnitude in args.magnitudes:
        drift = DriftSpec(kind=args.kind, magnitude=magnitude,
                          onset_frame=args.onset)
        frozen = run_drift_experiment(cfg, spec, drift, mode="offline")
        online = run_drift_experiment(cfg, spec, drift, mode="online")
        gap = online.drifted.i_auroc - frozen.drifted.i_auroc
        print(f"{magnitude:9.2f}   {frozen.drifted.i_auroc:.4f}   "
              f"{online.drifted.i_auroc:.4f}   {gap:+.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
