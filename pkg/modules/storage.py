from __future__ import annotations

import logging
from pathlib import Path
import shutil

import numpy as np

from .error_codes import CONFIG_DOMAIN_VIOLATION, CONFIG_FILE_NOT_FOUND, CONFIG_PARSE_FAILED
from .errors import ConfigError
from .log_setup import close_record_logger, open_record_logger
from .model import Domain
from .pde import DensityGrid
from .records import dumps_record
from .state import EventOutcome, Snapshot

logger = logging.getLogger(__name__)

SNAPSHOT_DIR = "snapshots"
GRID_DIR = "grid"
META_FILE = "meta.ndjson"
METRICS_FILE = "metrics.ndjson"
EVENTS_FILE = "events.ndjson"
PEAKS_FILE = "peaks.csv"

_OUTPUT_ENTRIES = (SNAPSHOT_DIR, GRID_DIR, META_FILE, METRICS_FILE, EVENTS_FILE, PEAKS_FILE)
_OUTPUT_GLOBS = ("replicate_*", "cell_*")


def replicate_dir(index: int) -> str:
    return f"replicate_{index:03d}"


def cell_dir(index: int) -> str:
    return f"cell_{index:03d}"


def time_label(t: float) -> str:
    return f"t{float(t):.10g}"


def prepare_out_dir(out_dir: Path) -> Path:
    """Create ``out_dir`` and drop output files left by an earlier run (other files are kept)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stale = [out_dir / name for name in _OUTPUT_ENTRIES]
    for pattern in _OUTPUT_GLOBS:
        stale.extend(sorted(out_dir.glob(pattern)))
    for path in stale:
        if path.is_dir():
            try:
                shutil.rmtree(path)
            except OSError:
                logger.warning("could not remove %s, clearing it instead", path)
                for child in path.glob("*"):
                    if child.is_dir():
                        shutil.rmtree(child, ignore_errors=True)
                    else:
                        child.unlink(missing_ok=True)
        elif path.exists():
            path.unlink()
    return out_dir


def _write_text(destination: Path, text: str) -> Path:
    destination.parent.mkdir(parents=True, exist_ok=True)
    tmp_destination = destination.with_suffix(destination.suffix + ".tmp")
    with tmp_destination.open("w", encoding="utf-8", newline="\n") as output:
        output.write(text)
    tmp_destination.replace(destination)
    return destination


def snapshot_csv_text(snapshot: Snapshot) -> str:
    t = repr(float(snapshot.t))
    rows = ["t,id,x,u"]
    rows.extend(
        f"{t},{i},{x!r},{u!r}"
        for i, x, u in zip(snapshot.ids.tolist(), snapshot.x.tolist(), snapshot.u.tolist())
    )
    return "\n".join(rows) + "\n"


def write_snapshot_csv(out_dir: Path, snapshot: Snapshot) -> Path:
    return _write_text(Path(out_dir) / SNAPSHOT_DIR / f"{time_label(snapshot.t)}.csv", snapshot_csv_text(snapshot))


def peaks_csv_text(rows: list[tuple[int, float, str, float]]) -> str:
    lines = ["replicate,t,axis,position"]
    lines.extend(f"{r},{float(t)!r},{axis},{float(p)!r}" for r, t, axis, p in rows)
    return "\n".join(lines) + "\n"


def grid_csv_text(grid: DensityGrid) -> str:
    lines = [
        f"# t={float(grid.t)!r}",
        "# x=" + ",".join(repr(v) for v in grid.x.tolist()),
        "# u=" + ",".join(repr(v) for v in grid.u.tolist()),
    ]
    lines.extend(",".join(repr(v) for v in row) for row in grid.values.tolist())
    return "\n".join(lines) + "\n"


def write_grid_csv(path: Path, grid: DensityGrid) -> Path:
    return _write_text(Path(path), grid_csv_text(grid))


def _header_values(header: dict, key: str, path: Path) -> list[float]:
    if key not in header:
        raise ConfigError(f"grid file {path} lacks the '# {key}=' header", code=CONFIG_PARSE_FAILED)
    return [float(v) for v in header[key].split(",") if v.strip()]


def read_grid_csv(path: Path | str, domain: Domain) -> DensityGrid:
    """Read a grid written by ``write_grid_csv``; its node span must match ``domain``."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"grid file not found: {path}", code=CONFIG_FILE_NOT_FOUND)
    header: dict[str, str] = {}
    with path.open("r", encoding="utf-8") as f:
        for line in f:
            if not line.startswith("#"):
                break
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
    try:
        values = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"failed to parse grid file {path}: {exc}", code=CONFIG_PARSE_FAILED) from exc
    xs = _header_values(header, "x", path)
    us = _header_values(header, "u", path)
    if values.shape != (len(xs), len(us)):
        raise ConfigError(
            f"grid file {path}: matrix shape {values.shape} does not match headers ({len(xs)}, {len(us)})",
            code=CONFIG_PARSE_FAILED,
        )
    span = (xs[0], xs[-1], us[0], us[-1])
    expected = (domain.x_min, domain.x_max, domain.u_min, domain.u_max)
    if not np.allclose(span, expected, rtol=0.0, atol=1e-9):
        raise ConfigError(f"grid file {path} spans {span}, the domain is {expected}", code=CONFIG_DOMAIN_VIOLATION)
    t = float(header.get("t", 0.0))
    return DensityGrid(domain, values, t)


class RunOutput:
    """Writers for one output directory: CSV snapshots and the ndjson record files."""

    def __init__(self, out_dir: Path, *, event_log: bool = False) -> None:
        self.out_dir = prepare_out_dir(out_dir)
        self._meta = open_record_logger("meta", self.out_dir / META_FILE)
        self._metrics = open_record_logger("metrics", self.out_dir / METRICS_FILE)
        self._events = open_record_logger("events", self.out_dir / EVENTS_FILE) if event_log else None

    def __enter__(self) -> RunOutput:
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def meta(self, record: dict) -> None:
        self._meta.info(dumps_record(record))

    def metric(self, record: dict) -> None:
        self._metrics.info(dumps_record(record))

    def event(self, t: float, outcome: EventOutcome) -> None:
        if self._events is not None:
            self._events.info(dumps_record(outcome.to_record(t)))

    def snapshot(self, snapshot: Snapshot, subdir: str | None = None) -> Path:
        base = self.out_dir if subdir is None else self.out_dir / subdir
        return write_snapshot_csv(base, snapshot)

    def grid(self, grid: DensityGrid, subdir: str | None = None) -> Path:
        base = self.out_dir / GRID_DIR if subdir is None else self.out_dir / subdir / GRID_DIR
        return write_grid_csv(base / f"{time_label(grid.t)}.csv", grid)

    def peaks(self, rows: list[tuple[int, float, str, float]]) -> Path:
        return _write_text(self.out_dir / PEAKS_FILE, peaks_csv_text(rows))

    def close(self) -> None:
        for record_logger in (self._meta, self._metrics, self._events):
            if record_logger is not None:
                close_record_logger(record_logger)
