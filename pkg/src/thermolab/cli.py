"""Command-line runner: ``thermolab run | list | replay``.

Exit codes: 0 all asserted checks passed, 1 internal error, 2 configuration
error (unreadable file, parse error, unknown key, wrong type), 3 precondition
violation, 4 a theorem bound was violated, 5 replay mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import tempfile
import time
import traceback
from importlib import resources
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import __version__
from .io import dumps_json, first_divergence, sha256_file, write_csv, write_json
from .scenarios import REGISTRY, ConfigError, Context, PreconditionError, catalog, parse_scenario

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONFIG = 2
EXIT_PRECONDITION = 3
EXIT_VIOLATION = 4
EXIT_REPLAY = 5


def shipped_scenarios() -> list[Path]:
    """The scenario catalog shipped with the package, one file per experiment kind."""
    root = Path(str(resources.files("thermolab") / "data" / "scenarios"))
    return sorted(root.glob("*.json"))


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def execute(config: dict, base_dir: Path, out_dir: Path, seed: int | None, threads: int,
            config_sha: str, config_path: str) -> tuple[int, Path | None]:
    """Validate and run one parsed scenario, writing artifacts and a manifest into ``out_dir``."""
    try:
        kind, params = parse_scenario(config)
        run_seed = int(config.get("seed", 0) if seed is None else seed)
        if not 0 <= run_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        ctx = Context(params, run_seed, threads, base_dir, config.get("model"))
        if kind.needs_model:
            ctx.model()
        start = time.perf_counter()
        with threadpool_limits(limits=1):
            result = kind.runner(ctx)
        wall = time.perf_counter() - start
    except ConfigError as exc:
        _say(f"configuration error: {exc}")
        return EXIT_CONFIG, None
    except (PreconditionError, ValueError) as exc:
        _say(f"precondition violated: {exc}")
        return EXIT_PRECONDITION, None
    except Exception:  # noqa: BLE001 - anything else is a defect in the tool
        _say(traceback.format_exc())
        return EXIT_INTERNAL, None

    name = config["name"]
    scale = float(config.get("debug_rhs_scale", 1.0))
    checks = [c.to_dict(scale) for c in result.checks]
    failed = [c["name"] for c in checks if not c["passed"]]
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = []
    report = {
        "scenario": name, "kind": kind.name, "anchor": kind.anchor, "operation": kind.operation,
        "seed": run_seed, "tool_version": __version__, "params": params, "report": result.report,
        "checks": checks, "satisfied": not failed,
    }
    artifacts.append(write_json(out_dir / f"{name}.report.json", report))
    meta = {"scenario": name, "kind": kind.name, "seed": run_seed, "tool_version": __version__}
    for table, (cols, rows, extra) in result.tables.items():
        artifacts.append(write_csv(out_dir / f"{name}.{table}.csv", cols, rows, {**meta, **extra}))
    model_files = {}
    if isinstance(config.get("model"), str):
        path = (base_dir / config["model"]).resolve()
        model_files[str(path)] = sha256_file(path)
    manifest = {
        "tool_version": __version__,
        "scenario": name,
        "config_path": config_path,
        "config_dir": str(base_dir.resolve()),
        "config_sha256": config_sha,
        "config": config,
        "model_files": model_files,
        "seed": run_seed,
        "threads": threads,
        "wall_time_s": wall,
        "exit_status": EXIT_VIOLATION if failed else EXIT_OK,
        "artifacts": [{"path": a.name, "sha256": sha256_file(a)} for a in artifacts],
    }
    manifest_path = write_json(out_dir / f"{name}.manifest.json", manifest)
    if failed:
        _say(f"{name}: bound violated in {', '.join(failed)}")
        return EXIT_VIOLATION, manifest_path
    return EXIT_OK, manifest_path


def run_file(path: Path, out_dir: Path, seed: int | None, threads: int) -> tuple[int, Path | None]:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        _say(f"configuration error: cannot read {path}: {exc.strerror}")
        return EXIT_CONFIG, None
    try:
        config = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        _say(f"configuration error: {path}: {exc}")
        return EXIT_CONFIG, None
    sha = hashlib.sha256(raw).hexdigest()
    return execute(config, Path(path).resolve().parent, out_dir, seed, threads, sha, str(Path(path).resolve()))


def replay(manifest_path: Path, threads: int | None) -> int:
    """Re-run the scenario recorded in a manifest and byte-compare every artifact."""
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
        config, seed = manifest["config"], int(manifest["seed"])
        recorded = manifest["artifacts"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        _say(f"configuration error: unusable manifest {manifest_path}: {exc}")
        return EXIT_CONFIG
    src_dir = Path(manifest_path).resolve().parent
    with tempfile.TemporaryDirectory(prefix="thermolab-replay-") as tmp:
        code, new_manifest = execute(config, Path(manifest["config_dir"]), Path(tmp), seed,
                                     manifest.get("threads", 1) if threads is None else threads,
                                     manifest.get("config_sha256", ""), manifest.get("config_path", ""))
        if new_manifest is None:
            _say(f"replay could not re-run the scenario (exit {code})")
            return code
        produced = {a["path"] for a in json.loads(new_manifest.read_text())["artifacts"]}
        expected = {a["path"] for a in recorded}
        if produced != expected:
            _say(f"replay mismatch: artifact sets differ ({sorted(expected ^ produced)})")
            return EXIT_REPLAY
        for art in recorded:
            old = (src_dir / art["path"]).read_bytes() if (src_dir / art["path"]).is_file() else b""
            new = (Path(tmp) / art["path"]).read_bytes()
            div = first_divergence(old, new)
            if div is not None:
                _say(f"replay mismatch in {art['path']} at byte {div['offset']} (line {div['line']}):")
                _say(f"  recorded: {div['expected']}")
                _say(f"  replayed: {div['actual']}")
                return EXIT_REPLAY
    print(f"replay identical: {len(recorded)} artifacts")
    return EXIT_OK


def _uint64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("thread count must be positive")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="thermolab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"thermolab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run scenario files (or the shipped catalog)")
    run.add_argument("configs", nargs="*", type=Path)
    run.add_argument("--catalog", action="store_true", help="run every shipped scenario")
    run.add_argument("--seed", type=_uint64, default=None, help="override the scenario seed")
    run.add_argument("--threads", type=_positive_int, default=1)
    run.add_argument("--out", type=Path, default=Path("thermolab-out"))
    lst = sub.add_parser("list", help="print every experiment kind with its theorem anchor")
    lst.add_argument("--json", action="store_true")
    rep = sub.add_parser("replay", help="re-run a manifest and byte-compare its artifacts")
    rep.add_argument("manifests", nargs="+", type=Path)
    rep.add_argument("--threads", type=_positive_int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list":
        rows = catalog()
        shipped = {p.stem: str(p) for p in shipped_scenarios()}
        if args.json:
            print(dumps_json([{"kind": k, "anchor": a, "operation": o, "summary": s, "config": shipped.get(k)}
                              for k, a, o, s in rows]), end="")
        else:
            for k, a, o, _ in rows:
                print(f"{k}\t{a}\t{o}")
        return EXIT_OK
    if args.command == "replay":
        return max(replay(m, args.threads) for m in args.manifests)
    configs = list(args.configs) + (shipped_scenarios() if args.catalog else [])
    if not configs:
        _say("configuration error: no scenario given")
        return EXIT_CONFIG
    worst = EXIT_OK
    for cfg in configs:
        code, manifest = run_file(cfg, args.out, args.seed, args.threads)
        status = {0: "ok", 1: "internal error", 2: "config error", 3: "precondition", 4: "VIOLATED"}[code]
        print(f"{cfg}: {status}" + (f" -> {manifest}" if manifest else ""))
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
