"""Command-line front end.

One JSON config document drives everything; dotted ``--set`` overrides make
ablation scripting cheap.  Subcommands: ``run`` (stream + report),
``ablate`` (init-by-update grid), ``drift`` (clean vs drifted accuracy),
``bench`` (timing).  Exit codes: 0 success, 1 config error, 2 runtime error.
"""

import argparse
import itertools
import json
import sys
from dataclasses import asdict, dataclass, fields, replace
from datetime import datetime
from pathlib import Path

from .anonce import AdamHyper, LossConfig
from .engine import EngineConfig, run_stream
from .errors import ConfigError, LemoError
from .evaluator import (ManifestStreamSpec, SynthStreamSpec, ablation_to_csv,
                        ablation_to_text, drift_to_csv, drift_to_text,
                        evaluate_state, run_ablation_grid, run_drift_experiment)
from .feature_io import load_manifest
from .memory import save_bank
from .seeding import split_seed
from .synth_source import DRIFT_KINDS, DriftSpec, SynthConfig

TOP_KEYS = {"seed", "engine", "source", "eval", "drift", "out"}
SOURCE_SYNTH_KEYS = {"synth", "n_train", "n_eval", "anomalous_frac"}


def _build(cls, data: dict, name: str):
    allowed = {f.name for f in fields(cls)}
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"{name}: unknown fields {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as e:
        raise ConfigError(f"{name}: {e}") from None


def _apply_override(doc: dict, expr: str) -> None:
    key, sep, raw_val = expr.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override must look like key.path=value, got {expr!r}")
    try:
        val = json.loads(raw_val)
    except json.JSONDecodeError:
        val = raw_val
    parts = key.strip().split(".")
    node = doc
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"override path {key!r} crosses a non-object value")
        node = nxt
    node[parts[-1]] = val


@dataclass
class RunSetup:
    doc: dict
    seed: int
    engine: EngineConfig
    spec: object
    drift: DriftSpec | None
    fpr_limit: float
    pixel_metrics: bool
    out_dir: Path | None


def load_setup(config_path, overrides) -> RunSetup:
    """Parse and validate one config document plus CLI overrides.

    The top-level seed is split per subsystem; explicit ``engine.seed`` or
    ``source.synth.seed`` values win over the derived ones.
    """
    path = Path(config_path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    for expr in overrides:
        _apply_override(doc, expr)
    unknown = set(doc) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level config fields {sorted(unknown)}")

    seed = int(doc.get("seed", 0))
    eng_raw = dict(doc.get("engine", {}))
    loss = _build(LossConfig, dict(eng_raw.pop("loss", {})), "engine.loss")
    adam_raw = dict(eng_raw.pop("adam", {}))
    adam_raw.setdefault("weight_decay", 5e-4)
    adam = _build(AdamHyper, adam_raw, "engine.adam")
    eng_raw.setdefault("seed", split_seed(seed, "engine"))
    engine = _build(EngineConfig, {**eng_raw, "loss": loss, "adam": adam}, "engine")

    src = doc.get("source")
    if not isinstance(src, dict):
        raise ConfigError("config needs a source object")
    if ("synth" in src) == ("manifest" in src):
        raise ConfigError("source must name exactly one of synth | manifest")
    if "synth" in src:
        unknown = set(src) - SOURCE_SYNTH_KEYS
        if unknown:
            raise ConfigError(f"source: unknown fields {sorted(unknown)}")
        synth_raw = dict(src["synth"] or {})
        if "anomaly_patch" in synth_raw:
            synth_raw["anomaly_patch"] = tuple(synth_raw["anomaly_patch"])
        synth_raw.setdefault("seed", split_seed(seed, "synth"))
        extra = {k: src[k] for k in ("n_train", "n_eval", "anomalous_frac") if k in src}
        extra.setdefault("n_train", 300)
        spec = SynthStreamSpec(synth=_build(SynthConfig, synth_raw, "source.synth"), **extra)
    else:
        unknown = set(src) - {"manifest"}
        if unknown:
            raise ConfigError(f"source: unknown fields {sorted(unknown)}")
        spec = ManifestStreamSpec(manifest=load_manifest(src["manifest"]))

    ev = dict(doc.get("eval", {}))
    fpr_limit = float(ev.pop("fpr_limit", 0.3))
    pixel_metrics = bool(ev.pop("pixel_metrics", True))
    if ev:
        raise ConfigError(f"eval: unknown fields {sorted(ev)}")

    drift = None
    if doc.get("drift") is not None:
        drift = _build(DriftSpec, dict(doc["drift"]), "drift")

    out_dir = Path(doc["out"]) if doc.get("out") else None
    return RunSetup(doc=doc, seed=seed, engine=engine, spec=spec, drift=drift,
                    fpr_limit=fpr_limit, pixel_metrics=pixel_metrics, out_dir=out_dir)


def _require_eval(setup: RunSetup) -> None:
    if isinstance(setup.spec, ManifestStreamSpec) and not setup.spec.manifest.test_records():
        raise ConfigError("manifest has no test records to evaluate on")


def _prepare_out(explicit: Path | None) -> Path:
    out = explicit or Path("runs") / datetime.now().strftime("%Y%m%d-%H%M%S-%f")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail(code: int, err: Exception) -> int:
    print(f"error: {err}", file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        setup = load_setup(args.config, args.set)
        _require_eval(setup)
        out = _prepare_out(args.out or setup.out_dir)
    except ConfigError as e:
        return _fail(1, e)
    try:
        eval_set = setup.spec.eval_set(setup.drift)
        report = run_stream(setup.engine, setup.spec.train_frames(setup.drift), eval_set)
        state = report.final_state
        final = evaluate_state(state, eval_set, setup.fpr_limit, setup.pixel_metrics)
        (out / "report.json").write_text(json.dumps({
            "config": setup.doc,
            "metrics": asdict(final),
            "stream": report.to_json_dict(),
        }, indent=2), encoding="utf-8")
        curve_lines = ["frame_idx,i_auroc"]
        curve_lines += [f"{i},{v:.6f}" for i, v in report.curve]
        (out / "curve.csv").write_text("\n".join(curve_lines) + "\n", encoding="utf-8")
        save_bank(state.bank, out / "bank.tensor", out / "bank.json")
        print(f"{report.n_frames} frames, I-AUROC {final.i_auroc:.4f}, "
              f"TPS {report.tps:.1f} -> {out}")
        return 0
    except LemoError as e:
        return _fail(2, e)


def cmd_ablate(args) -> int:
    try:
        setup = load_setup(args.config, args.set)
        _require_eval(setup)
        out = _prepare_out(args.out or setup.out_dir)
    except ConfigError as e:
        return _fail(1, e)
    try:
        cells = run_ablation_grid(setup.engine, setup.spec)
        (out / "ablation.csv").write_text(ablation_to_csv(cells), encoding="utf-8")
        text = ablation_to_text(cells)
        (out / "ablation.txt").write_text(text, encoding="utf-8")
        print(text, end="")
        print(f"-> {out}")
        return 0
    except LemoError as e:
        return _fail(2, e)


def cmd_drift(args) -> int:
    try:
        setup = load_setup(args.config, args.set)
        _require_eval(setup)
        base = setup.drift
        kind = args.kind or (base.kind if base else None)
        magnitude = args.magnitude if args.magnitude is not None else (
            base.magnitude if base else None)
        onset = args.onset if args.onset is not None else (base.onset_frame if base else 0)
        if kind is None or magnitude is None:
            raise ConfigError("drift needs a kind and a magnitude (flags or config)")
        drift = DriftSpec(kind=kind, magnitude=magnitude, onset_frame=onset)
        out = _prepare_out(args.out or setup.out_dir)
    except ConfigError as e:
        return _fail(1, e)
    try:
        outcome = run_drift_experiment(setup.engine, setup.spec, drift, args.mode,
                                       setup.fpr_limit, setup.pixel_metrics)
        (out / "drift.csv").write_text(drift_to_csv(outcome, drift, args.mode),
                                       encoding="utf-8")
        text = drift_to_text(outcome, drift, args.mode)
        (out / "drift.txt").write_text(text, encoding="utf-8")
        print(text, end="")
        print(f"-> {out}")
        return 0
    except LemoError as e:
        return _fail(2, e)


def cmd_bench(args) -> int:
    try:
        if args.frames < 1:
            raise ConfigError(f"--frames must be >= 1, got {args.frames}")
        if args.reps < 1:
            raise ConfigError(f"--reps must be >= 1, got {args.reps}")
        setup = load_setup(args.config, args.set)
        out = _prepare_out(args.out or setup.out_dir)
    except ConfigError as e:
        return _fail(1, e)
    try:
        spec = setup.spec
        if isinstance(spec, SynthStreamSpec):
            spec = replace(spec, n_train=args.frames)
        per_rep = []
        for _ in range(args.reps):
            frames = itertools.islice(spec.train_frames(), args.frames)
            report = run_stream(setup.engine, frames)
            per_rep.append({"tps": report.tps, "tpi_ms": report.tpi_ms,
                            "encoder_ms": report.encoder_ms,
                            "detect_ms": report.detect_ms})
        mean = {k: sum(r[k] for r in per_rep) / len(per_rep) for k in per_rep[0]}
        (out / "bench.json").write_text(json.dumps({
            "frames": args.frames, "reps": args.reps, **mean, "per_rep": per_rep,
        }, indent=2), encoding="utf-8")
        text = ("TPS [img/s]   TPI [ms/img]   Encoder [ms]   Detection [ms]\n"
                f"{mean['tps']:11.1f}   {mean['tpi_ms']:12.3f}   "
                f"{mean['encoder_ms']:12.3f}   {mean['detect_ms']:14.3f}\n")
        (out / "bench.txt").write_text(text, encoding="utf-8")
        print(text, end="")
        print(f"-> {out}")
        return 0
    except LemoError as e:
        return _fail(2, e)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lemo", description="Streaming prototype-memory anomaly detection")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", type=Path, help="JSON run config")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field by dotted path (repeatable)")
        p.add_argument("--out", type=Path, default=None, help="output directory")

    p_run = sub.add_parser("run", help="stream frames through the online engine")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_abl = sub.add_parser("ablate", help="run the init-by-update strategy grid")
    add_common(p_abl)
    p_abl.set_defaults(func=cmd_ablate)

    p_drift = sub.add_parser("drift", help="compare clean and drifted accuracy")
    add_common(p_drift)
    p_drift.add_argument("--kind", choices=DRIFT_KINDS, default=None)
    p_drift.add_argument("--magnitude", type=float, default=None)
    p_drift.add_argument("--onset", type=int, default=None)
    p_drift.add_argument("--mode", choices=("offline", "online"), default="online")
    p_drift.set_defaults(func=cmd_drift)

    p_bench = sub.add_parser("bench", help="timing benchmark over a short stream")
    add_common(p_bench)
    p_bench.add_argument("--frames", type=int, default=100)
    p_bench.add_argument("--reps", type=int, default=5)
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
