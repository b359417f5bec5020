"""Command-line batch runner.

    tatdyn run CONFIG [--seed S] [--threads T] [--out DIR] [--large]
    tatdyn preset NAME [same flags]
    tatdyn list-presets
    tatdyn validate CONFIG [--large]

Exit status: 0 on success, 2 for configuration errors, 1 for engine errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__, runner
from .config import ConfigError, ExperimentConfig, parse_config, validate
from .presets import get_preset, presets

log = logging.getLogger("tatdyn")


def build_id() -> str:
    """Content hash of the package sources."""
    h = hashlib.sha1()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        h.update(path.name.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:12]


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--threads", type=int, default=1, help="worker processes (default 1)")
    common.add_argument("--out", type=Path, default=None, help="output directory (default ./out/<label>)")
    common.add_argument("--large", action="store_true", help="allow dTWA lattices up to L = 90")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="tatdyn", description="Twist-and-turn spin dynamics toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", parents=[common], help="run a configuration file")
    r.add_argument("config", type=Path)
    pr = sub.add_parser("preset", parents=[common], help="run a named preset")
    pr.add_argument("name")
    sub.add_parser("list-presets", help="list presets with expected runtimes")
    v = sub.add_parser("validate", help="check a configuration file")
    v.add_argument("config", type=Path)
    v.add_argument("--large", action="store_true")
    return p


def _load(path: Path, large: bool) -> ExperimentConfig:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from None
    return parse_config(text, str(path), large)


def execute(cfg: ExperimentConfig, out: Path, threads: int = 1, command: str = "") -> int:
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    manifest = {"tool": "tatdyn", "version": __version__, "build_id": build_id(), "command": command,
                "config": cfg.to_dict(), "started": started.isoformat()}
    status = 0
    ctx = runner.RunContext(out, max(1, threads))
    try:
        runner.ENGINE_RUNNERS[cfg.engine](cfg, ctx)
        manifest["status"] = "ok"
    except Exception as exc:
        log.error("%s engine failed: %s", cfg.engine, exc)
        manifest["status"] = "error"
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        status = 1
    manifest.update({"finished": datetime.now(timezone.utc).isoformat(),
                     "runtime_s": round(time.perf_counter() - t0, 3),
                     "outputs": ctx.outputs, "warnings": ctx.warnings})
    runner.atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for p in presets():
                print(f"{p.name:8s} {p.config.engine:10s} {p.runtime:18s} {p.description}")
            return 0
        if args.command == "validate":
            cfg = _load(args.config, args.large)
            print(f"{args.config}: ok ({cfg.engine}, {len(cfg.sizes)} sizes x {len(cfg.fields)} fields)")
            return 0
        if args.command == "run":
            cfg = _load(args.config, args.large)
        else:
            try:
                cfg = get_preset(args.name).config
            except KeyError as exc:
                print(f"error: {exc.args[0]}", file=sys.stderr)
                return 2
        if args.seed is not None:
            cfg = cfg.replace(seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1", "<command line>")
        validate(cfg, f"<{args.command}>", large=args.large)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out = args.out or Path("out") / cfg.label
    command = " ".join(["tatdyn"] + list(sys.argv[1:] if argv is None else argv))
    status = execute(cfg, out, args.threads, command)
    print(f"{'wrote' if status == 0 else 'failed, see'} {out / 'manifest.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
