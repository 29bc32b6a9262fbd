"""Command-line front end: ``llcsim <subcommand> [flags]``."""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from .cache import CacheGeometry
from .engine import SimConfig, StreamBinding, run, run_isolated, slowdown
from .experiments import (CALIBRATED_TIMING, DEFAULT_GRID, PAPER_COPY_LINES, PAPER_STRIDES,
                          CalibrationTarget, Scenario, calibrate, infer_line_size,
                          sweep_copy_lines, sweep_stride)
from .report import _atomic_write, emit_csv, emit_svg, format_csv
from .timing import TimingParams
from .workloads import CopyLoop, Gemm, Interference, Requestor, Vadd, WarpModel

CONFIG_ENV = "LLCSIM_CONFIG"
SUBCOMMANDS = ("run", "sweep-stride", "sweep-memcpy", "calibrate", "infer-line")

GEOMETRY_KEYS = tuple(f.name for f in fields(CacheGeometry))
TIMING_KEYS = tuple(f.name for f in fields(TimingParams))
INT_KEYS = GEOMETRY_KEYS + TIMING_KEYS + (
    "n", "m", "k", "runs", "threads", "interference_n", "burst_lines", "stride")
LIST_KEYS = ("strides", "cache_lines")
TEXT_KEYS = ("kernel", "timing", "out", "format")
GRID_KEYS = tuple(f"grid_{k}" for k in TIMING_KEYS)
TARGET_KEYS = tuple(f"target_{f.name}" for f in fields(CalibrationTarget))
KNOWN_KEYS = INT_KEYS + LIST_KEYS + TEXT_KEYS + GRID_KEYS + TARGET_KEYS


class ConfigError(ValueError):
    pass


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def load_config(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def _int(key, value) -> int:
    try:
        return int(str(value).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {value!r}") from None


def _int_list(key, value) -> list[int]:
    items = [v for v in str(value).replace(" ", "").split(",") if v]
    if not items:
        raise ConfigError(f"{key}: expected a comma-separated list of integers")
    return [_int(key, v) for v in items]


@dataclass
class RunConfig:
    geometry: CacheGeometry = field(default_factory=CacheGeometry)
    timing: TimingParams = CALIBRATED_TIMING
    kernel: str = "vadd"
    n: int | None = None
    m: int | None = None
    k: int | None = None
    runs: int | None = None
    threads: int = 1024
    strides: list = field(default_factory=lambda: list(PAPER_STRIDES))
    cache_lines: list = field(default_factory=lambda: list(PAPER_COPY_LINES))
    stride: int | None = None
    interference_n: int | None = None
    burst_lines: int = 4
    out: str | None = None
    format: str = "csv"
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))
    targets: CalibrationTarget = field(default_factory=CalibrationTarget)
    explicit: set = field(default_factory=set)

    def workload(self) -> Vadd | Gemm:
        sc = Scenario()
        warp = WarpModel(threads_per_block=self.threads)
        if self.kernel == "vadd":
            base = sc.vadd
            return Vadd(self.n if self.n is not None else base.n,
                        self.runs if self.runs is not None else base.runs, warp=warp)
        base = sc.gemm
        return Gemm(self.m if self.m is not None else base.m,
                    self.n if self.n is not None else base.n,
                    self.k if self.k is not None else base.k,
                    self.runs if self.runs is not None else base.runs, warp=warp)


def build_config(values: dict[str, str]) -> RunConfig:
    """Validate raw key/value strings into a RunConfig; errors name the offending key."""
    cfg = RunConfig(explicit=set(values))
    ints = {k: _int(k, values[k]) for k in INT_KEYS if k in values}

    preset = values.get("timing", "calibrated")
    if preset not in ("calibrated", "default"):
        raise ConfigError(f"timing: expected 'calibrated' or 'default', got {preset!r}")
    base = CALIBRATED_TIMING if preset == "calibrated" else TimingParams()
    try:
        cfg.geometry = CacheGeometry(**{k: ints.get(k, getattr(CacheGeometry(), k))
                                        for k in GEOMETRY_KEYS})
        cfg.timing = TimingParams(**{k: ints.get(k, getattr(base, k)) for k in TIMING_KEYS})
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    kernel = values.get("kernel", "vadd")
    if kernel not in ("vadd", "gemm"):
        raise ConfigError(f"kernel: expected 'vadd' or 'gemm', got {kernel!r}")
    cfg.kernel = kernel
    for key in ("n", "m", "k", "runs", "interference_n", "stride"):
        if key in ints:
            if ints[key] < 0:
                raise ConfigError(f"{key}: must be >= 0, got {ints[key]}")
            setattr(cfg, key, ints[key])
    if "threads" in ints:
        cfg.threads = ints["threads"]
    if "burst_lines" in ints:
        cfg.burst_lines = ints["burst_lines"]
    try:
        WarpModel(threads_per_block=cfg.threads)
    except ValueError as exc:
        raise ConfigError(f"threads: {exc}") from None
    if cfg.burst_lines < 1:
        raise ConfigError(f"burst_lines: must be >= 1, got {cfg.burst_lines}")
    if cfg.stride is not None and cfg.stride < 1:
        raise ConfigError(f"stride: must be >= 1, got {cfg.stride}")

    if "strides" in values:
        cfg.strides = _int_list("strides", values["strides"])
        bad = [s for s in cfg.strides if s < 1]
        if bad:
            raise ConfigError(f"strides: every stride must be >= 1, got {bad}")
    if "cache_lines" in values:
        cfg.cache_lines = _int_list("cache_lines", values["cache_lines"])
    for count in cfg.cache_lines:
        if count < 0:
            raise ConfigError(f"cache_lines: must be >= 0, got {count}")
        if count > cfg.geometry.num_lines:
            raise ConfigError(f"cache_lines exceeds num_lines ({count} > {cfg.geometry.num_lines})")

    for key in GRID_KEYS:
        if key in values:
            cfg.grid[key[len("grid_"):]] = tuple(_int_list(key, values[key]))
    targets = {}
    for key in TARGET_KEYS:
        if key in values:
            try:
                targets[key[len("target_"):]] = float(values[key])
            except ValueError:
                raise ConfigError(f"{key}: expected a number, got {values[key]!r}") from None
    try:
        cfg.targets = CalibrationTarget(**targets)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    cfg.out = values.get("out")
    fmt = values.get("format", "csv")
    if fmt not in ("csv", "svg", "both"):
        raise ConfigError(f"format: expected csv, svg or both, got {fmt!r}")
    cfg.format = fmt
    return cfg


FLAGS = {
    # flag -> config key
    "--line-size-bytes": "line_size_bytes",
    "--num-lines": "num_lines",
    "--associativity": "associativity",
    "--llc-hit-cycles": "llc_hit_cycles",
    "--dram-latency-cycles": "dram_latency_cycles",
    "--dram-service-interval-cycles": "dram_service_interval_cycles",
    "--llc-port-interval-cycles": "llc_port_interval_cycles",
    "--timing": "timing",
    "--kernel": "kernel",
    "--n": "n",
    "--m": "m",
    "--k": "k",
    "--runs": "runs",
    "--threads": "threads",
    "--strides": "strides",
    "--stride": "stride",
    "--lines": "cache_lines",
    "--interference-n": "interference_n",
    "--burst-lines": "burst_lines",
    "--out": "out",
    "--format": "format",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="llcsim", description="Shared-LLC interference simulator.")
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", help=f"key = value file (default: ${CONFIG_ENV})")
    for flag, key in FLAGS.items():
        parser.add_argument(flag, dest=key, default=None)
    parser.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                        help="calibration grid axis, e.g. llc_hit_cycles=16,32")
    return parser


def resolve(argv) -> tuple[str, RunConfig]:
    args = make_parser().parse_args(argv)
    config_path = args.config or os.environ.get(CONFIG_ENV)
    values = load_config(config_path) if config_path else {}
    for key in FLAGS.values():
        flag_value = getattr(args, key)
        if flag_value is not None:
            values[key] = flag_value
    for item in args.grid:
        if "=" not in item:
            raise ConfigError(f"--grid: expected KEY=V1,V2, got {item!r}")
        key, value = item.split("=", 1)
        key = "grid_" + key.strip().replace("-", "_")
        if key not in GRID_KEYS:
            raise ConfigError(f"--grid: unknown timing key {key[5:]!r}")
        values[key] = value
    return args.command, build_config(values)


def _write_text(cfg: RunConfig, text: str):
    if cfg.out:
        _atomic_write(cfg.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _emit_rows(cfg: RunConfig, rows, xlabel: str):
    if cfg.format in ("csv", "both"):
        if cfg.out:
            emit_csv(rows, cfg.out)
        else:
            sys.stdout.write(format_csv(rows))
    if cfg.format in ("svg", "both"):
        target = Path(cfg.out or f"{xlabel}.svg")
        if cfg.format == "both" or target.suffix != ".svg":
            target = target.with_suffix(".svg")
        emit_svg(rows, target, xlabel=xlabel, title=cfg.kernel)


def cmd_run(cfg: RunConfig) -> int:
    kernel = cfg.workload()
    base = run_isolated(kernel, cfg.geometry, cfg.timing)
    lines = [f"kernel = {cfg.kernel}", f"total_cycles = {base.total_cycles}",
             f"transactions = {base.transactions_issued}",
             f"hits = {base.cache_stats.hits}", f"misses = {base.cache_stats.misses}"]
    interferer = None
    if cfg.stride is not None:
        n = cfg.interference_n if cfg.interference_n is not None else 4 * cfg.geometry.capacity_bytes
        interferer = StreamBinding(1, Requestor.SM1, Interference(
            n, cfg.stride, warp=WarpModel(threads_per_block=cfg.threads)))
    elif "cache_lines" in cfg.explicit:
        if len(cfg.cache_lines) != 1:
            raise ConfigError("cache_lines: run takes a single count")
        interferer = StreamBinding(1, Requestor.COPY_ENGINE,
                                   CopyLoop(cfg.cache_lines[0], burst_lines=cfg.burst_lines))
    if interferer is not None:
        config = SimConfig(cfg.geometry, cfg.timing,
                           (StreamBinding(0, Requestor.SM0, kernel), interferer))
        contended = run(config, 0)
        ratio = slowdown(contended, base) if base.total_cycles else 1.0
        lines += [f"contended_cycles = {contended.total_cycles}", f"slowdown = {ratio:.4f}"]
    _write_text(cfg, "\n".join(lines) + "\n")
    return 0


def cmd_sweep_stride(cfg: RunConfig) -> int:
    rows = sweep_stride(cfg.workload(), cfg.strides, cfg.geometry, cfg.timing,
                        cfg.interference_n, cfg.threads)
    _emit_rows(cfg, rows, "stride")
    return 0


def cmd_sweep_memcpy(cfg: RunConfig) -> int:
    rows = sweep_copy_lines(cfg.workload(), cfg.cache_lines, cfg.geometry, cfg.timing,
                            cfg.burst_lines)
    _emit_rows(cfg, rows, "cache_lines")
    return 0


def cmd_calibrate(cfg: RunConfig) -> int:
    result = calibrate(cfg.targets, cfg.grid, Scenario(), cfg.geometry)
    lines = ["# best grid point; usable as a config file"]
    lines += [f"{k} = {getattr(result.params, k)}" for k in TIMING_KEYS]
    lines.append(f"# residual = {result.residual:.6f}")
    for name, goal in cfg.targets.items():
        lines.append(f"# {name} = {result.ratios[name]:.4f} (target {goal})")
    _write_text(cfg, "\n".join(lines) + "\n")
    return 0


def cmd_infer_line(cfg: RunConfig) -> int:
    strides = cfg.strides
    if "strides" not in cfg.explicit:
        ls = cfg.geometry.line_size_bytes
        strides = [max(1, ls // 4), max(1, ls // 2), ls, ls * 2, ls * 4]
    size = infer_line_size(cfg.workload(), strides, cfg.geometry, cfg.timing,
                           cfg.interference_n, cfg.threads)
    _write_text(cfg, f"inferred_line_size_bytes = {size}\n")
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep-stride": cmd_sweep_stride,
    "sweep-memcpy": cmd_sweep_memcpy,
    "calibrate": cmd_calibrate,
    "infer-line": cmd_infer_line,
}


def dispatch(argv) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        command, cfg = resolve(list(argv))
        return COMMANDS[command](cfg)
    except (ConfigError, ValueError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"llcsim: error: {msg}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"llcsim: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
