"""Command-line entry point.

Exit codes: 0 ok, 2 config error, 3 data error, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from importlib import resources
from pathlib import Path

from . import dataset as ds
from .errors import ConfigError, DataError, PvosError
from .evaluation import EvalProtocol, eval_dataset, format_half_up, format_pct, fps_report, render_csv
from .runner import RunConfig, build_scenario_manifest, run_config_from_dict, run_manifest, write_logs

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


def bundled_scenarios() -> list[str]:
    root = resources.files("pvos") / "scenarios"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def _load_json(path: str, kind: type[PvosError] = ConfigError) -> dict:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("pvos") / "scenarios" / f"{path}.json"
        if kind is ConfigError and bundled.is_file():
            return json.loads(bundled.read_text(encoding="utf-8"))
        raise kind(f"{path}: no such file")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise kind(f"{path}: JSON parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _read_manifest(path: str) -> ds.Manifest:
    if not Path(path).exists():
        raise DataError(f"{path}: no such file")
    return ds.read_manifest(path)


def _kv(items: list[str] | None) -> dict:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


def cmd_gen_scenario(args) -> int:
    cfg = _load_json(args.scenario)
    manifest = build_scenario_manifest(cfg, seed=args.seed)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(manifest, out / "manifest.json")
    v = manifest.videos[0]
    print(f"wrote {out / 'manifest.json'}: video {v.id}, {len(v.masklets)} masklets, {len(v.prompts)} prompts")
    return EXIT_OK


def cmd_run(args) -> int:
    base = _load_json(args.config) if args.config else {}
    base.setdefault("manifest", args.manifest)
    config = run_config_from_dict(base)
    if args.manifest:
        config.manifest = args.manifest
    if args.out:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.parallel is not None:
        config.parallel = args.parallel
    if args.modality is not None:
        config.modality = args.modality
    if args.no_exit_gate:
        config.exit_gate = False
    config.ast = {**config.ast, **_kv(args.ast)}
    config.memory = {**config.memory, **_kv(args.memory)}
    if args.no_presence_gate:
        config.ast["delta_p"] = 0.0
    config.dump_memory = config.dump_memory or args.dump_memory
    config.__post_init__()
    config.ast_config(), config.memory_config()
    if not config.manifest:
        raise ConfigError("run needs a manifest path")

    manifest = _read_manifest(config.manifest)
    t0 = time.perf_counter()
    predictions, results = run_manifest(manifest, config)
    elapsed = time.perf_counter() - t0

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    ds.write_manifest(predictions, out / "predictions.json")
    write_logs(results, out, config.dump_memory)
    frames = sum(r.frames for r in results)
    fallbacks = sum(1 for r in results for e in r.events if e["event"] == "fallback")
    print(f"ran {len(results)} prompt(s), {frames} frames, {fallbacks} fallback(s) -> {out}")
    if elapsed > 0:
        print(f"throughput: {fps_report(frames, elapsed):.1f} FPS (scripted oracles included)", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = _read_manifest(args.gt)
    pred = _read_manifest(args.predictions)
    protocol = None if args.protocol == "auto" else EvalProtocol(args.protocol)
    rows, aggregates = eval_dataset(gt, pred, protocol, args.tolerance)
    text = render_csv(rows, aggregates)
    if args.csv:
        csv_path = Path(args.csv)
    else:
        csv_path = Path(args.out or ".") / "eval.csv"
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    csv_path.write_text(text, encoding="utf-8")
    for a in aggregates:
        prec = "n/a" if a.precision is None else format_pct(a.precision)
        fpr = "n/a" if a.fpr is None else format_pct(a.fpr)
        print(
            f"{a.dataset}: {a.count} masklet(s)  J {format_pct(a.J)}  F {format_pct(a.F)}  "
            f"J&F {format_pct(a.JF)}  precision {prec}  FPR {fpr}"
        )
    print(f"wrote {csv_path}")
    return EXIT_OK


STATS_HEADER = ("Dataset", "Video", "Frame", "Masklet(whole)", "Mask(whole)", "Masklet(part)", "Mask(part)", "Avg.Dur.(s)")


def render_stats(rows: list[ds.DatasetStats]) -> str:
    table = [list(STATS_HEADER)]
    for r in rows:
        table.append(_stats_cells(r))
    if len(rows) > 1:
        total = ds.DatasetStats("Total")
        for r in rows:
            total.add(r)
        table.append(_stats_cells(total))
    widths = [max(len(row[i]) for row in table) for i in range(len(STATS_HEADER))]
    lines = []
    for row in table:
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines) + "\n"


def _stats_cells(r: ds.DatasetStats) -> list[str]:
    return [
        r.dataset,
        str(r.videos),
        str(r.frames),
        str(r.masklets_whole),
        str(r.masks_whole),
        str(r.masklets_part),
        str(r.masks_part),
        format_half_up(r.avg_duration, 0),
    ]


def cmd_stats(args) -> int:
    sys.stdout.write(render_stats(ds.dataset_stats(_read_manifest(args.manifest))))
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = _read_manifest(args.manifest)
    problems = ds.validate_manifest(manifest)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_DATA
    n = sum(len(v.masklets) for v in manifest.videos)
    print(f"ok: {len(manifest.videos)} video(s), {n} masklet(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None, help="JSON run configuration")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--parallel", type=int, default=None, help="worker processes")

    parser = argparse.ArgumentParser(prog="pvos", description="Promptable video segmentation orchestration engine")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-scenario", parents=[common], help="render a scenario config into a manifest")
    p.add_argument("scenario", help=f"scenario JSON path or bundled name ({', '.join(bundled_scenarios())})")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("run", parents=[common], help="run the engine on every prompt of a manifest")
    p.add_argument("manifest", nargs="?", default=None)
    p.add_argument("--modality", choices=("all", "visual", "linguistic"), default=None)
    p.add_argument("--no-exit-gate", action="store_true", help="disable consensus fallback")
    p.add_argument("--no-presence-gate", action="store_true", help="set delta_p to 0")
    p.add_argument("--ast", action="append", metavar="KEY=VALUE", help="state-transition override")
    p.add_argument("--memory", action="append", metavar="KEY=VALUE", help="memory override")
    p.add_argument("--dump-memory", action="store_true", help="write final memory contents per prompt")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", parents=[common], help="score predictions against ground truth")
    p.add_argument("gt")
    p.add_argument("predictions")
    p.add_argument("--protocol", choices=("auto", "prompt-frame", "first-frame"), default="auto")
    p.add_argument("--tolerance", type=int, default=None, help="boundary tolerance in pixels")
    p.add_argument("--csv", default=None, help="CSV path (default: <out>/eval.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("stats", parents=[common], help="dataset statistics table")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("validate", parents=[common], help="check a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PvosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
