"""Command-line entry point.

Every subcommand maps onto one library call. ``experiment``, ``sweep`` and
``compare-baseline`` can instead be sent to a running service with
``--api URL``; both routes emit the same CSV bytes.

On failure the last line on stderr is a JSON object ``{"error": ..., "message": ...}``
and the exit code is non-zero.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Dict, List, Optional

from .errors import HybridLocError, InvalidArgument

EXIT_ERROR = 2


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    from .simulator import CONFIG_KEYS

    p.add_argument("--config", help="key = value experiment config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    for key in CONFIG_KEYS:
        if key == "seed":
            continue
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", metavar="V", help=argparse.SUPPRESS)


def _overrides(args) -> Dict[str, str]:
    from .simulator import CONFIG_KEYS, parse_config_text

    values: Dict[str, str] = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise InvalidArgument(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    for key in CONFIG_KEYS:
        v = getattr(args, f"cfg_{key}", None)
        if v is not None:
            values[key] = v
    if getattr(args, "seed", None) is not None:
        values["seed"] = str(args.seed)
    return values


def _experiment_config(args):
    from .simulator import ExperimentConfig, apply_overrides

    return apply_overrides(ExperimentConfig(), _overrides(args))


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _client(api: str):
    import httpx

    return httpx.Client(base_url=api, timeout=600)


def _remote(args, path: str, payload: dict) -> str:
    with _client(args.api) as client:
        resp = client.post(path, json=payload)
    body = resp.json()
    if resp.status_code >= 400:
        if isinstance(body, dict) and "error" in body:
            raise RemoteError(body["error"], body.get("message", ""))
        raise RemoteError("HTTPError", json.dumps(body))
    return body["csv"]


class RemoteError(HybridLocError):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self._kind = kind

    @property
    def kind(self) -> str:
        return self._kind


# -- subcommands ------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .simulator import export_dataset, labels_path

    cfg = _experiment_config(args)
    n = export_dataset(cfg, args.phase, args.out)
    print(f"wrote {n} {args.phase} scans to {args.out} (labels: {labels_path(args.out)})", file=sys.stderr)
    return 0


def cmd_build(args) -> int:
    from .dbfile import save_db
    from .fingerprint import BuilderConfig, FingerprintBuilder
    from .model import GroundTruthEstimate, TaggedScan
    from .simulator import labels_path, read_labels_csv, read_scans_csv

    cfg = _experiment_config(args)
    scans = read_scans_csv(args.scans)
    labels = read_labels_csv(args.labels or labels_path(args.scans))
    builder = FingerprintBuilder(BuilderConfig(
        grid=cfg.grid, strategy=cfg.strategy, sigma_floor=cfg.sigma_floor,
        min_cell_weight=cfg.min_cell_weight, device_offset_correction=cfg.device_offset_correction,
    ))
    for scan in scans:
        if scan.timestamp not in labels:
            raise InvalidArgument(f"no label for scan at t={scan.timestamp}")
        x, y, c = labels[scan.timestamp][:3]
        builder.ingest(TaggedScan(scan, GroundTruthEstimate((x, y), c)))
    db = builder.finalize()
    save_db(db, args.out)
    print(f"fingerprint: {len(db.usable_cells())} usable of {len(db.cells)} cells, "
          f"{builder.ingested} scans ingested, {builder.skipped} skipped -> {args.out}", file=sys.stderr)
    return 0


def cmd_track(args) -> int:
    from .dbfile import load_db
    from .estimator import track
    from .simulator import read_scans_csv

    cfg = _experiment_config(args)
    db = load_db(args.db, cfg.min_cell_weight)
    scans = read_scans_csv(args.scans)
    lines = ["timestamp,x,y"]
    for scan, est in zip(scans, track(scans, db, cfg.tracker)):
        if est is None:
            lines.append(f"{scan.timestamp!r},,")
        else:
            lines.append(f"{scan.timestamp!r},{est[0]!r},{est[1]!r}")
    _emit("\n".join(lines) + "\n", args.out)
    return 0


def cmd_experiment(args) -> int:
    if args.api:
        _emit(_remote(args, "/experiments", {"seed": args.seed, "overrides": _overrides(args)}), args.out)
        return 0
    from .harness import reports_csv, run_experiment

    cfg = _experiment_config(args)
    _emit(reports_csv([(cfg.strategy.value, run_experiment(cfg))]), args.out)
    return 0


def _split_values(text: str) -> List[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    values = _split_values(args.values)
    if args.api:
        payload = {"seed": args.seed, "overrides": _overrides(args), "parameter": args.param,
                   "values": values, "repeats": args.repeats}
        _emit(_remote(args, "/sweeps", payload), args.out)
        return 0
    from .harness import parse_value, run_sweep

    cfg = _experiment_config(args)
    result = run_sweep(cfg, args.param, [parse_value(args.param, v) for v in values], args.repeats)
    _emit(result.to_csv(), args.out)
    return 0


def cmd_compare(args) -> int:
    if args.api:
        _emit(_remote(args, "/compare-baseline", {"seed": args.seed, "overrides": _overrides(args)}), args.out)
        return 0
    from .harness import TECHNIQUES, compare_baseline, reports_csv

    reports = compare_baseline(_experiment_config(args))
    _emit(reports_csv([(name, reports[name]) for name in TECHNIQUES]), args.out)
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("hybridloc.service:app", host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridloc", description="Crowdsourced WiFi fingerprint localization: simulate, build, track, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated training or test dataset as CSV")
    p.add_argument("--phase", choices=("training", "test"), default="training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build", help="build a fingerprint file from labelled scans")
    p.add_argument("--scans", required=True, help="timestamp,ap_id,rss CSV")
    p.add_argument("--labels", help="timestamp,x,y,confidence CSV (default: <scans>.labels.csv)")
    p.add_argument("--out", required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("track", help="track a scan stream against a fingerprint file")
    p.add_argument("--db", required=True)
    p.add_argument("--scans", required=True)
    p.add_argument("--out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_track)

    for name, func, helptext in (
        ("experiment", cmd_experiment, "run one simulated experiment"),
        ("compare-baseline", cmd_compare, "manual survey vs the three assignment strategies"),
        ("sweep", cmd_sweep, "run one experiment per parameter value"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--out")
        p.add_argument("--api", help="send the job to a running service at this base URL")
        if name == "sweep":
            p.add_argument("--param", required=True)
            p.add_argument("--values", required=True, help="comma-separated values")
            p.add_argument("--repeats", type=int, default=1, help="seeds per value: seed, seed+1, ...")
        _add_config_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HybridLocError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(json.dumps({"error": "IOError", "message": str(exc)}), file=sys.stderr)
        return EXIT_ERROR


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
