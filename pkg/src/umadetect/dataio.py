"""Rating file ingestion, centered matrix construction, and checkpoint files."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import struct
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .errors import (
    CheckpointFormatError,
    CheckpointIntegrityError,
    ParameterError,
    RatingFormatError,
    RatingRangeError,
)
from .matrixops import ObservationMask
from .solver import DecompositionResult, Diagnostics, SolverConfig

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"UMA1"
CHECKPOINT_VERSION = 1

# Fraction of malformed lines tolerated (skip-and-warn) before erroring out.
MALFORMED_LINE_LIMIT = 0.001

_FORMAT_ALIASES = {
    "ml-100k": "tab",
    "tab": "tab",
    "tsv": "tab",
    "ml-1m": "colons",
    "colons": "colons",
    "csv": "csv",
}


class RatingRecord(NamedTuple):
    user: str
    item: str
    rating: float
    timestamp: int | None = None


@dataclass
class RatingMatrix:
    """Dense centered rating matrix plus observation mask and id maps.

    ``matrix`` holds ratings shifted to the symmetric ``[-bound, bound]``
    scale; off-mask entries are exactly zero.
    """

    matrix: np.ndarray
    mask: ObservationMask
    user_ids: list
    item_ids: list
    bound: float

    @property
    def user_index(self) -> dict:
        return {uid: row for row, uid in enumerate(self.user_ids)}

    @property
    def item_index(self) -> dict:
        return {iid: col for col, iid in enumerate(self.item_ids)}

    @classmethod
    def from_dense(cls, matrix, mask: ObservationMask, bound: float,
                   user_ids=None, item_ids=None) -> "RatingMatrix":
        matrix = np.asarray(matrix, dtype=np.float64)
        m, n = matrix.shape
        return cls(
            matrix=matrix,
            mask=mask,
            user_ids=list(user_ids) if user_ids is not None else list(range(m)),
            item_ids=list(item_ids) if item_ids is not None else list(range(n)),
            bound=float(bound),
        )


def _open_lines(source) -> Iterable[str]:
    if hasattr(source, "read"):
        return source
    return open(source, "r", encoding="utf-8")


def load_ratings(source, format: str = "ml-100k") -> list[RatingRecord]:
    """Parse a ratings file into records in file order.

    Formats: ``ml-100k`` (tab-separated ``user item rating [timestamp]``),
    ``ml-1m`` (``::``-separated), ``csv`` (comma-separated with a header row).
    Malformed lines are skipped with a warning up to 0.1% of the file, beyond
    which a ``RatingFormatError`` is raised.
    """
    kind = _FORMAT_ALIASES.get(format.lower())
    if kind is None:
        raise ParameterError(f"unknown ratings format {format!r}")

    records: list[RatingRecord] = []
    malformed: list[tuple[int, str]] = []
    total = 0

    handle = _open_lines(source)
    try:
        if kind == "csv":
            _parse_csv(handle, records, malformed, counter := [0])
            total = counter[0]
        else:
            sep = "\t" if kind == "tab" else "::"
            for lineno, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line:
                    continue
                total += 1
                parts = line.split(sep)
                parsed = _parse_fields(parts)
                if parsed is None:
                    malformed.append((lineno, line[:80]))
                else:
                    records.append(parsed)
    finally:
        if not hasattr(source, "read"):
            handle.close()

    if total and len(malformed) / total > MALFORMED_LINE_LIMIT:
        sample = ", ".join(str(ln) for ln, _ in malformed[:5])
        raise RatingFormatError(
            f"{len(malformed)} of {total} lines malformed (limit 0.1%); "
            f"first bad lines: {sample}"
        )
    for lineno, text in malformed:
        logger.warning("skipping malformed rating line %d: %s", lineno, text)
    return records


def _parse_csv(handle, records, malformed, counter) -> None:
    reader = csv.reader(handle)
    header = None
    cols = (0, 1, 2, 3)
    for lineno, row in enumerate(reader, start=1):
        if not row or all(not cell.strip() for cell in row):
            continue
        if header is None:
            header = [cell.strip().lower() for cell in row]
            cols = _header_columns(header)
            continue
        counter[0] += 1
        fields = [row[i].strip() if i is not None and i < len(row) else None for i in cols]
        parsed = _parse_fields([f for f in fields if f is not None])
        if parsed is None:
            malformed.append((lineno, ",".join(row)[:80]))
        else:
            records.append(parsed)


def _header_columns(header: list[str]) -> tuple:
    def find(*names):
        for idx, cell in enumerate(header):
            if any(name in cell for name in names):
                return idx
        return None

    user = find("user")
    item = find("item", "movie")
    rating = find("rating", "score")
    stamp = find("timestamp", "time")
    if user is None or item is None or rating is None:
        return (0, 1, 2, 3 if len(header) > 3 else None)
    return (user, item, rating, stamp)


def _parse_fields(parts) -> RatingRecord | None:
    if len(parts) < 3:
        return None
    user, item = parts[0].strip(), parts[1].strip()
    if not user or not item:
        return None
    try:
        rating = float(parts[2])
    except ValueError:
        return None
    timestamp = None
    if len(parts) > 3 and parts[3] is not None:
        try:
            timestamp = int(parts[3])
        except (TypeError, ValueError):
            timestamp = None
    return RatingRecord(user=user, item=item, rating=rating, timestamp=timestamp)


def build_matrix(records, center: float = 3.0, bound: float = 2.0) -> RatingMatrix:
    """Assemble the dense centered matrix from parsed records.

    Users and items are indexed in first-appearance order; duplicate
    (user, item) pairs keep the last occurrence with a warning.  A record
    whose centered rating falls outside ``[-bound, bound]`` raises
    ``RatingRangeError`` naming the record.
    """
    records = list(records)
    if not records:
        raise ParameterError("cannot build a matrix from zero records")

    user_ids: list = []
    item_ids: list = []
    user_row: dict = {}
    item_col: dict = {}
    cells: dict[tuple[int, int], float] = {}
    duplicates = 0

    for rec in records:
        centered = rec.rating - center
        if abs(centered) > bound:
            raise RatingRangeError(
                f"record (user={rec.user!r}, item={rec.item!r}, rating={rec.rating!r}) "
                f"is outside [{-bound}, {bound}] after centering by {center}"
            )
        row = user_row.get(rec.user)
        if row is None:
            row = user_row[rec.user] = len(user_ids)
            user_ids.append(rec.user)
        col = item_col.get(rec.item)
        if col is None:
            col = item_col[rec.item] = len(item_ids)
            item_ids.append(rec.item)
        if (row, col) in cells:
            duplicates += 1
        cells[(row, col)] = centered

    if duplicates:
        logger.warning("resolved %d duplicate (user, item) records, keeping last", duplicates)

    m, n = len(user_ids), len(item_ids)
    matrix = np.zeros((m, n))
    flags = np.zeros((m, n), dtype=bool)
    for (row, col), value in cells.items():
        matrix[row, col] = value
        flags[row, col] = True
    return RatingMatrix(
        matrix=matrix,
        mask=ObservationMask.from_bool(flags),
        user_ids=user_ids,
        item_ids=item_ids,
        bound=float(bound),
    )


@dataclass
class Checkpoint:
    result: DecompositionResult
    mask: ObservationMask
    config: SolverConfig


def _array_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr).astype(arr.dtype.newbyteorder("<"), copy=False).tobytes()


def save_result(path, result: DecompositionResult, mask: ObservationMask,
                config: SolverConfig) -> None:
    """Write a versioned, checksummed checkpoint; round trips are byte-stable."""
    diag = result.diagnostics
    arrays: list[tuple[str, np.ndarray]] = [
        ("mask", mask.array.astype(np.uint8)),
        ("low_rank", result.low_rank),
        ("sparse", result.sparse),
        ("noise", result.noise),
        ("multiplier", result.multiplier),
        ("residual_history", np.asarray(diag.residual_history, dtype=np.float64)),
        ("change_history", np.asarray(diag.change_history, dtype=np.float64)),
        ("objective_history", np.asarray(diag.objective_history, dtype=np.float64)),
    ]
    if diag.ergodic_residual_history is not None:
        arrays.append(
            ("ergodic_residual_history",
             np.asarray(diag.ergodic_residual_history, dtype=np.float64))
        )

    header = {
        "m": int(mask.rows),
        "n": int(mask.cols),
        "iterations_used": int(result.iterations_used),
        "converged": bool(result.converged),
        "beta_convergence_ok": bool(diag.beta_convergence_ok),
        "beta_rate_ok": bool(diag.beta_rate_ok),
        "has_ergodic": diag.ergodic_residual_history is not None,
        "config": asdict(config),
        "arrays": [
            {"name": name, "dtype": str(arr.dtype), "shape": list(arr.shape)}
            for name, arr in arrays
        ],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", CHECKPOINT_VERSION))
    buf.write(struct.pack("<Q", len(header_bytes)))
    buf.write(header_bytes)
    for _, arr in arrays:
        buf.write(_array_bytes(arr))
    body = buf.getvalue()
    digest = hashlib.sha256(body).digest()
    write_bytes_atomic(path, body + digest)


def load_result(path) -> Checkpoint:
    """Read a checkpoint written by ``save_result``; matrices come back
    bit-exact.  Raises ``CheckpointFormatError`` for unknown magic/version and
    ``CheckpointIntegrityError`` for truncation or checksum mismatch."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != CHECKPOINT_MAGIC:
        raise CheckpointFormatError(f"{path}: not a {CHECKPOINT_MAGIC.decode()} checkpoint")
    if len(data) < 4 + 4 + 8 + 32:
        raise CheckpointIntegrityError(f"{path}: truncated checkpoint")
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointIntegrityError(f"{path}: checksum mismatch (corrupt or truncated)")

    version = struct.unpack_from("<I", body, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {version}")
    header_len = struct.unpack_from("<Q", body, 8)[0]
    header_start = 16
    header_end = header_start + header_len
    if header_end > len(body):
        raise CheckpointIntegrityError(f"{path}: header extends past end of file")
    try:
        header = json.loads(body[header_start:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"{path}: unreadable header") from exc

    arrays: dict[str, np.ndarray] = {}
    offset = header_end
    for spec in header["arrays"]:
        dtype = np.dtype(spec["dtype"]).newbyteorder("<")
        shape = tuple(spec["shape"])
        nbytes = dtype.itemsize * int(np.prod(shape)) if shape else dtype.itemsize
        count = int(np.prod(shape)) if shape else 1
        end = offset + dtype.itemsize * count
        if end > len(body):
            raise CheckpointIntegrityError(f"{path}: array {spec['name']} truncated")
        arr = np.frombuffer(body[offset:end], dtype=dtype).reshape(shape)
        arrays[spec["name"]] = arr.astype(dtype.newbyteorder("="), copy=True)
        offset = end
    if offset != len(body):
        raise CheckpointIntegrityError(f"{path}: {len(body) - offset} trailing bytes")

    diagnostics = Diagnostics(
        residual_history=[float(v) for v in arrays["residual_history"]],
        change_history=[float(v) for v in arrays["change_history"]],
        objective_history=[float(v) for v in arrays["objective_history"]],
        ergodic_residual_history=(
            [float(v) for v in arrays["ergodic_residual_history"]]
            if header["has_ergodic"]
            else None
        ),
        beta_convergence_ok=header["beta_convergence_ok"],
        beta_rate_ok=header["beta_rate_ok"],
    )
    result = DecompositionResult(
        low_rank=arrays["low_rank"],
        sparse=arrays["sparse"],
        noise=arrays["noise"],
        multiplier=arrays["multiplier"],
        diagnostics=diagnostics,
        converged=header["converged"],
        iterations_used=header["iterations_used"],
    )
    mask = ObservationMask.from_bool(arrays["mask"].astype(bool))
    config = SolverConfig(**header["config"])
    return Checkpoint(result=result, mask=mask, config=config)


def write_bytes_atomic(path, data: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_text_atomic(path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))
