"""CSV, SVG and manifest artifacts.

All files are written to a temporary sibling and renamed into place, so a
reader never sees a partial artifact. CSV follows RFC 4180 (CRLF line ends,
minimal quoting) with floats in shortest round-trip form.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import tempfile
from collections.abc import Iterable, Sequence
from dataclasses import asdict, fields
from pathlib import Path

import dacite
import numpy as np

from multinormex.exceptions import ArtifactError
from multinormex.types import DeviationSummary, FloatArray, QQRow, QQTable, RateReport

logger = logging.getLogger(__name__)

# ── Constants ──────────────────────────────────────────────────────────

QQ_COLUMNS: tuple[str, ...] = tuple(f.name for f in fields(QQRow))
"""level_index, level_norm, is_extreme, component, q_ref, q_cmp"""

SVG_HASH_SALT = "multinormex"

type Cell = str | int | float | bool


def _parse_bool(value: object) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("true", "1"):
        return True
    if text in ("false", "0"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


_DACITE_CONFIG = dacite.Config(
    type_hooks={int: lambda v: int(str(v)), float: lambda v: float(str(v)), bool: _parse_bool},
    strict=True,
)


def format_cell(value: Cell) -> str:
    """Render one CSV cell."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float | np.floating):
        return repr(float(value))
    return str(value)


def atomic_write_bytes(path: str | Path, data: bytes) -> Path:
    """Write ``data`` to ``path`` through a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug("wrote %s (%d bytes)", path, len(data))
    return path


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence[Cell]]) -> bytes:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(v) for v in row])
    return buffer.getvalue().encode("utf-8")


def _read_rows(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}", path=str(path)) from e
    records = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(records) < 2:
        raise ArtifactError(f"{path}: no rows", path=str(path))
    return records[0], records[1:]


# ── Samples ────────────────────────────────────────────────────────────


def write_sample_csv(path: str | Path, sample: FloatArray) -> Path:
    """Write an (count, d) sample with columns x1..xd."""
    header = [f"x{k + 1}" for k in range(sample.shape[1])]
    return atomic_write_bytes(path, csv_bytes(header, (list(map(float, r)) for r in sample)))


def read_sample_csv(path: str | Path) -> FloatArray:
    """Read a sample written by :func:`write_sample_csv` (or any numeric CSV)."""
    _, rows = _read_rows(path)
    try:
        return np.array([[float(v) for v in row] for row in rows], dtype=np.float64)
    except ValueError as e:
        raise ArtifactError(f"{path}: non-numeric sample value ({e})", path=str(path)) from e


# ── QQ tables ──────────────────────────────────────────────────────────


def write_qq_csv(path: str | Path, table: QQTable) -> Path:
    rows = ([asdict(r)[c] for c in QQ_COLUMNS] for r in table.rows)
    return atomic_write_bytes(path, csv_bytes(QQ_COLUMNS, rows))


def read_qq_csv(path: str | Path) -> list[QQRow]:
    """Parse a QQ table back into typed rows.

    Raises:
        ArtifactError: If the file is empty or a row does not match the schema.
    """
    header, rows = _read_rows(path)
    if tuple(header) != QQ_COLUMNS:
        raise ArtifactError(f"{path}: unexpected columns {header}", path=str(path))
    try:
        return [
            dacite.from_dict(QQRow, dict(zip(header, row, strict=True)), config=_DACITE_CONFIG)
            for row in rows
        ]
    except (ValueError, dacite.DaciteError) as e:
        raise ArtifactError(f"{path}: malformed QQ row ({e})", path=str(path)) from e


# ── Summaries ──────────────────────────────────────────────────────────


def write_deviations_csv(path: str | Path, summaries: dict[str, DeviationSummary]) -> Path:
    rows: list[list[Cell]] = []
    for method, summary in summaries.items():
        for subset, dev in zip(summary._fields, summary, strict=True):
            if dev is not None:
                rows.append([method, subset, dev.max_abs, dev.mean_abs, dev.max_rel])
    return atomic_write_bytes(
        path, csv_bytes(["method", "subset", "max_abs", "mean_abs", "max_rel"], rows)
    )


def write_rates_csv(path: str | Path, report: RateReport) -> Path:
    rows: list[list[Cell]] = [["noise_floor", p.n, p.distance] for p in report.noise_floor]
    for method, rate in report.methods.items():
        rows.extend([method, p.n, p.distance] for p in rate.points)
    return atomic_write_bytes(path, csv_bytes(["method", "n", "distance"], rows))


def write_rate_slopes_csv(path: str | Path, report: RateReport) -> Path:
    rows: list[list[Cell]] = [
        [m, r.slope, r.slope_se, "" if r.theoretical is None else r.theoretical]
        for m, r in report.methods.items()
    ]
    return atomic_write_bytes(
        path, csv_bytes(["method", "slope", "slope_se", "theoretical"], rows)
    )


def write_moments_csv(path: str | Path, rows: Sequence[Sequence[Cell]]) -> Path:
    header = ["y", "quantity", "i", "j", "closed_form", "oracle", "se", "z_score"]
    return atomic_write_bytes(path, csv_bytes(header, rows))


# ── Plots ──────────────────────────────────────────────────────────────


def qq_svg_bytes(rows: Sequence[QQRow], component: int, title: str) -> bytes:
    """Scatter of (q_ref, q_cmp) for one component with the identity line.

    Extreme levels are drawn in red, the rest in blue.
    """
    import matplotlib

    matplotlib.use("Agg")
    from matplotlib import pyplot as plt

    picked = [r for r in rows if r.component == component]
    if not picked:
        raise ArtifactError(f"no rows for component {component}", path=title)
    ref = np.array([r.q_ref for r in picked])
    cmp = np.array([r.q_cmp for r in picked])
    extreme = np.array([r.is_extreme for r in picked])
    lo = float(min(ref.min(), cmp.min()))
    hi = float(max(ref.max(), cmp.max()))

    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT, "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.plot([lo, hi], [lo, hi], color="black", linewidth=0.8, label="y = x")
        ax.scatter(ref[~extreme], cmp[~extreme], s=10, color="tab:blue", label="moderate")
        ax.scatter(ref[extreme], cmp[extreme], s=10, color="tab:red", label="extreme")
        ax.set_xlabel("reference quantile")
        ax.set_ylabel("compared quantile")
        ax.set_title(title)
        ax.legend(loc="upper left")
        buffer = io.BytesIO()
        fig.savefig(buffer, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buffer.getvalue()


def write_qq_svg(path: str | Path, rows: Sequence[QQRow], component: int, title: str) -> Path:
    return atomic_write_bytes(path, qq_svg_bytes(rows, component, title))
