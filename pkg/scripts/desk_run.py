#!/usr/bin/env python3
"""Train the detector on one synthetic stream and print the learning curve."""

import argparse

from lemo.engine import EngineConfig, run_stream
from lemo.evaluator import SynthStreamSpec, evaluate_state
from lemo.synth_source import SynthConfig


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--frames", type=int, default=300)
    ap.add_argument("--n-eval", type=int, default=60)
    ap.add_argument("--k", type=int, default=10)
    ap.add_argument("--d-out", type=int, default=272)
    ap.add_argument("--update", default="learning",
                    choices=("none", "learning", "feature_enhanced"))
    args = ap.parse_args()

    synth = SynthConfig(seed=args.seed)
    spec = SynthStreamSpec(synth=synth, n_train=args.frames, n_eval=args.n_eval)
    cfg = EngineConfig(update=args.update, k=args.k, d_out=args.d_out,
                       seed=args.seed)

    report = run_stream(cfg, spec.train_frames(), eval_set=spec.eval_set())
    print("frame   I-AUROC")
    for frame_idx, score in report.curve:
        bar = "#" * int(round(40 * score))
        print(f"{frame_idx:5d}   {score:.4f}  {bar}")

    result = evaluate_state(report.final_state, spec.eval_set())
    print(f"\nfinal I-AUROC {result.i_auroc:.4f}   "
          f"P-AUROC {result.p_auroc:.4f}   P-AUPRO {result.p_aupro:.4f}")
    print(f"throughput {report.tps:.1f} img/s "
          f"(encode {report.encoder_ms:.3f} ms, detect {report.detect_ms:.3f} ms)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
