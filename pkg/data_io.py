"""
File formats: snapshot dumps, statistic curves, target curves and run manifests.

Binary snapshot dump, all little-endian:

    header  b"GBSMCIR1"
    record  f8 time, u4 M_R, u4 M_T, u4 L, u1 has_los
            [f8 los_delay, c16 los_gains[M_R * M_T]]      only if has_los
            f8 ray_delays[L], f8 ray_powers[L], i8 ray_cluster_ids[L]
            c16 gains[M_R * M_T * L]                      row-major (q, p, l)

Records follow each other until the end of the file.
"""

import hashlib
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, Iterator, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field

from channel import CirSnapshot
from estimation import TargetCurve
from stats import StatisticCurve, StatisticKind

logger = logging.getLogger(__name__)

MAGIC = b"GBSMCIR1"
_RECORD = struct.Struct("<dIIIB")
_LOS_DELAY = struct.Struct("<d")

PathLike = Union[str, Path]


class SnapshotFormatError(ValueError):
    """Raised when a snapshot dump is truncated or not a dump at all."""


class TargetFormatError(ValueError):
    """Raised when a target curve file cannot be parsed; names the offending line."""


class RunManifest(BaseModel):
    """Everything needed to regenerate a run directory, plus digests of its files."""

    scenario: str
    config_path: Optional[str] = None
    seeds: List[int]
    duration: Optional[float] = None
    time_step: Optional[float] = None
    statistics: List[str] = Field(default_factory=list)
    output_dir: str
    files: Dict[str, str] = Field(default_factory=dict, description="file name -> sha256")


class FitRow(BaseModel):
    params: Dict[str, float]
    error: float


class FitReport(BaseModel):
    target: str
    statistic: str
    best_params: Dict[str, float]
    best_error: float
    threshold: float
    threshold_met: bool
    table: List[FitRow]


# ---------------------------------------------------------------------------
# Snapshot dumps
# ---------------------------------------------------------------------------


def _write_record(stream: BinaryIO, snap: CirSnapshot) -> None:
    has_los = snap.los_gains is not None and snap.los_delay is not None
    stream.write(
        _RECORD.pack(snap.time, snap.num_rx, snap.num_tx, len(snap.ray_delays), int(has_los))
    )
    if has_los:
        stream.write(_LOS_DELAY.pack(snap.los_delay))
        stream.write(np.asarray(snap.los_gains, dtype="<c16").tobytes())
    stream.write(np.asarray(snap.ray_delays, dtype="<f8").tobytes())
    stream.write(np.asarray(snap.ray_powers, dtype="<f8").tobytes())
    stream.write(np.asarray(snap.ray_cluster_ids, dtype="<i8").tobytes())
    stream.write(np.asarray(snap.gains, dtype="<c16").tobytes())


def write_snapshots(snapshots: Iterable[CirSnapshot], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("wb") as stream:
        stream.write(MAGIC)
        for snap in snapshots:
            _write_record(stream, snap)
            count += 1
    logger.debug(f"Wrote {count} snapshots to {path}")
    return path


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise SnapshotFormatError(f"Truncated snapshot dump while reading {what}")
    return data


def _read_array(stream: BinaryIO, dtype: str, count: int, what: str) -> np.ndarray:
    item = np.dtype(dtype).itemsize
    return np.frombuffer(_read_exact(stream, item * count, what), dtype=dtype).copy()


def iter_snapshots(path: PathLike) -> Iterator[CirSnapshot]:
    """
    Read a binary dump record by record.

    Raises:
        SnapshotFormatError: On a wrong header or a truncated record
    """
    with Path(path).open("rb") as stream:
        if stream.read(len(MAGIC)) != MAGIC:
            raise SnapshotFormatError(f"{path} is not a snapshot dump")
        while True:
            head = stream.read(_RECORD.size)
            if not head:
                return
            if len(head) != _RECORD.size:
                raise SnapshotFormatError("Truncated snapshot dump while reading a record header")
            time, num_rx, num_tx, num_rays, has_los = _RECORD.unpack(head)
            los_delay, los_gains = None, None
            if has_los:
                (los_delay,) = _LOS_DELAY.unpack(_read_exact(stream, _LOS_DELAY.size, "LOS"))
                los_gains = _read_array(stream, "<c16", num_rx * num_tx, "LOS gains")
                los_gains = los_gains.reshape(num_rx, num_tx)
            delays = _read_array(stream, "<f8", num_rays, "ray delays")
            powers = _read_array(stream, "<f8", num_rays, "ray powers")
            ids = _read_array(stream, "<i8", num_rays, "cluster ids")
            gains = _read_array(stream, "<c16", num_rx * num_tx * num_rays, "gains")
            yield CirSnapshot(
                time=time,
                ray_delays=delays.astype(float),
                ray_powers=powers.astype(float),
                ray_cluster_ids=ids.astype(np.int64),
                gains=gains.astype(complex).reshape(num_rx, num_tx, num_rays),
                los_delay=los_delay,
                los_gains=None if los_gains is None else los_gains.astype(complex),
            )


def read_snapshots(path: PathLike) -> List[CirSnapshot]:
    return list(iter_snapshots(path))


def write_snapshots_text(snapshots: Iterable[CirSnapshot], path: PathLike) -> Path:
    """Columnar text export of every nonzero tap, the cluster id last and -1 for the LOS tap."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as stream:
        stream.write("# time_s q p delay_s re im cluster\n")
        for snap in snapshots:
            for q in range(snap.num_rx):
                for p in range(snap.num_tx):
                    if snap.los_gains is not None and snap.los_delay is not None:
                        gain = complex(snap.los_gains[q, p])
                        stream.write(
                            f"{snap.time:.17g} {q} {p} {snap.los_delay:.17g} "
                            f"{gain.real:.17g} {gain.imag:.17g} -1\n"
                        )
                    for delay, cluster, gain in zip(
                        snap.ray_delays, snap.ray_cluster_ids, snap.gains[q, p]
                    ):
                        if gain == 0:
                            continue
                        stream.write(
                            f"{snap.time:.17g} {q} {p} {delay:.17g} "
                            f"{gain.real:.17g} {gain.imag:.17g} {int(cluster)}\n"
                        )
    return path


# ---------------------------------------------------------------------------
# Curves
# ---------------------------------------------------------------------------


def write_curve(
    curve: StatisticCurve, path: PathLike, metadata: Optional[Dict[str, object]] = None
) -> Path:
    """Write an (x, y) curve with a '# key: value' header; the first key is the statistic."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# statistic: {StatisticKind(curve.kind).value}"]
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}: {value}")
    if curve.censored_fraction > 0:
        lines.append(f"# censored_fraction: {curve.censored_fraction:.17g}")
    lines.append("# columns: x y")
    lines.extend(f"{x:.17g} {y:.17g}" for x, y in zip(curve.x, curve.y))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def write_table(
    columns: Dict[str, np.ndarray], path: PathLike, metadata: Optional[Dict[str, object]] = None
) -> Path:
    """Write equally long named columns with the same header style as curves."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {key}: {value}" for key, value in (metadata or {}).items()]
    lines.append(f"# columns: {' '.join(columns)}")
    for row in zip(*columns.values()):
        lines.append(" ".join(f"{value:.17g}" for value in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path


def read_target_curve(path: PathLike) -> TargetCurve:
    """
    Parse a two-column target file.

    The file must declare '# statistic: <kind>' before the first data row; an
    optional '# source: <label>' names where the data came from. Other '#'
    lines are ignored.

    Raises:
        TargetFormatError: With the line number of the first problem
    """
    path = Path(path)
    kind: Optional[StatisticKind] = None
    source = path.name
    xs: List[float] = []
    ys: List[float] = []
    for number, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            key, value = key.strip().lower(), value.strip()
            if key == "statistic":
                try:
                    kind = StatisticKind(value)
                except ValueError:
                    raise TargetFormatError(
                        f"{path}:{number}: unknown statistic '{value}'"
                    ) from None
            elif key == "source" and value:
                source = value
            continue
        if kind is None:
            raise TargetFormatError(f"{path}:{number}: missing '# statistic: <kind>' header")
        fields = line.split()
        if len(fields) != 2:
            raise TargetFormatError(f"{path}:{number}: expected two columns, got {len(fields)}")
        try:
            xs.append(float(fields[0]))
            ys.append(float(fields[1]))
        except ValueError:
            raise TargetFormatError(f"{path}:{number}: not a number in '{line}'") from None
    if kind is None:
        raise TargetFormatError(f"{path}:1: missing '# statistic: <kind>' header")
    if not xs:
        raise TargetFormatError(f"{path}: no data rows")
    try:
        return TargetCurve(kind=kind, x=xs, y=ys, source=source)
    except ValueError as e:
        raise TargetFormatError(f"{path}: {e}") from None


# ---------------------------------------------------------------------------
# Manifests and reports
# ---------------------------------------------------------------------------


def file_digest(path: PathLike) -> str:
    digest = hashlib.sha256()
    with Path(path).open("rb") as stream:
        for block in iter(lambda: stream.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def record_files(manifest: RunManifest, paths: Iterable[Path]) -> RunManifest:
    """Return a manifest whose inventory also lists the given files with their digests."""
    root = Path(manifest.output_dir)
    files = dict(manifest.files)
    for path in paths:
        files[str(Path(path).relative_to(root))] = file_digest(path)
    return manifest.model_copy(update={"files": dict(sorted(files.items()))})


def save_manifest(manifest: RunManifest, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path: PathLike) -> RunManifest:
    return RunManifest.model_validate_json(Path(path).read_text(encoding="utf-8"))


def save_fit_report(report: FitReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {path}")
    return path
