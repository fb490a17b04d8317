"""Wire format for compressed epochs and ingestion of raw recordings.

Packet layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"BCS1"
    4       1     version (1)
    5       2     N, epoch length
    7       2     M, number of measurements
    9       1     s, ones per sensing column
    10      8     sensing matrix seed (the effective seed after any reseed)
    18      1     dictionary code (0 identity, 1 dct, 2 wavelet)
    19      1     wavelet taps
    20      1     wavelet levels
    21      2     channel
    23      4     epoch index
    27      4     sample rate in millihertz
    31      4*M   measurements, float32

A stream file is packets back to back; each record's length follows from
its header.
"""

from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np

from .errors import (
    BadMagic,
    BadVersion,
    DataError,
    FieldOverflow,
    NonNumericCell,
    RaggedRows,
    TruncatedPayload,
)

MAGIC = b"BCS1"
VERSION = 1
HEADER = struct.Struct("<4sBHHBQBBBHII")
HEADER_SIZE = HEADER.size

_LIMITS = {
    "N": 0xFFFF,
    "M": 0xFFFF,
    "s": 0xFF,
    "matrix_seed": 0xFFFFFFFFFFFFFFFF,
    "dict_code": 0xFF,
    "wavelet_taps": 0xFF,
    "wavelet_levels": 0xFF,
    "channel": 0xFFFF,
    "epoch_index": 0xFFFFFFFF,
    "sample_rate_mHz": 0xFFFFFFFF,
}


@dataclass(eq=False)
class CompressedPacket:
    N: int
    M: int
    s: int
    matrix_seed: int
    dict_code: int
    payload: np.ndarray
    wavelet_taps: int = 0
    wavelet_levels: int = 0
    channel: int = 0
    epoch_index: int = 0
    sample_rate_mHz: int = 0
    version: int = VERSION

    def __post_init__(self):
        self.payload = np.asarray(self.payload, dtype="<f4")

    def __eq__(self, other):
        if not isinstance(other, CompressedPacket):
            return NotImplemented
        return (
            all(getattr(self, k) == getattr(other, k) for k in _LIMITS)
            and self.version == other.version
            and self.payload.tobytes() == other.payload.tobytes()
        )

    @property
    def nbytes(self) -> int:
        return HEADER_SIZE + 4 * self.M


def encode_packet(p: CompressedPacket) -> bytes:
    for name, top in _LIMITS.items():
        value = getattr(p, name)
        if not 0 <= value <= top:
            raise FieldOverflow(f"{name}={value} does not fit (max {top})")
    if p.payload.shape != (p.M,):
        raise FieldOverflow(f"payload has {p.payload.size} values, header says M={p.M}")
    head = HEADER.pack(
        MAGIC, VERSION, p.N, p.M, p.s, p.matrix_seed, p.dict_code, p.wavelet_taps,
        p.wavelet_levels, p.channel, p.epoch_index, p.sample_rate_mHz,
    )
    return head + p.payload.astype("<f4").tobytes()


def _decode_header(buf: bytes) -> tuple:
    if len(buf) < HEADER_SIZE:
        raise TruncatedPayload(f"need {HEADER_SIZE} header bytes, got {len(buf)}")
    fields = HEADER.unpack_from(buf)
    if fields[0] != MAGIC:
        raise BadMagic(f"bad magic {fields[0]!r}")
    if fields[1] != VERSION:
        raise BadVersion(f"unsupported version {fields[1]}")
    return fields


def decode_packet(buf: bytes) -> CompressedPacket:
    _, version, N, M, s, seed, code, taps, levels, channel, epoch, rate = _decode_header(buf)
    want = HEADER_SIZE + 4 * M
    if len(buf) != want:
        raise TruncatedPayload(f"packet with M={M} needs {want} bytes, got {len(buf)}")
    payload = np.frombuffer(buf, dtype="<f4", count=M, offset=HEADER_SIZE).copy()
    return CompressedPacket(N, M, s, seed, code, payload, taps, levels, channel, epoch, rate, version)


def iter_packets(data: bytes) -> Iterator[CompressedPacket]:
    """Split a stream into packets; errors name the offending packet index."""
    pos = 0
    index = 0
    while pos < len(data):
        try:
            M = _decode_header(data[pos:pos + HEADER_SIZE])[3]
            end = pos + HEADER_SIZE + 4 * M
            if end > len(data):
                raise TruncatedPayload(f"needs {end - pos} bytes, stream has {len(data) - pos} left")
            yield decode_packet(data[pos:end])
        except DataError as exc:
            raise type(exc)(f"packet {index}: {exc}") from exc
        pos = end
        index += 1


def write_stream(fh: BinaryIO, packets: Iterable[CompressedPacket]) -> tuple[int, int]:
    """Write packets back to back; returns ``(count, bytes)``."""
    count = nbytes = 0
    for p in packets:
        raw = encode_packet(p)
        fh.write(raw)
        count += 1
        nbytes += len(raw)
    return count, nbytes


def read_stream(path) -> list[CompressedPacket]:
    return list(iter_packets(Path(path).read_bytes()))


@dataclass
class EpochedDataset:
    """Samples shaped ``(channels, epochs, N)``; ``labels`` has one entry per epoch or is None."""

    samples: np.ndarray
    labels: list[str] | None = None
    sample_rate: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 3:
            raise DataError(f"samples must be (channels, epochs, N), got shape {self.samples.shape}")
        if self.labels is not None:
            self.labels = [str(l) for l in self.labels]
            if len(self.labels) != self.epochs_per_channel:
                raise DataError(f"{len(self.labels)} labels for {self.epochs_per_channel} epochs")

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def epochs_per_channel(self) -> int:
        return self.samples.shape[1]

    @property
    def epoch_length(self) -> int:
        return self.samples.shape[2]

    def save(self, path) -> None:
        extra = {} if self.labels is None else {"labels": np.array(self.labels)}
        with open(path, "wb") as fh:
            np.savez(fh, samples=self.samples, sample_rate=self.sample_rate, **extra)

    @classmethod
    def load(cls, path) -> "EpochedDataset":
        with np.load(path, allow_pickle=False) as f:
            labels = [str(l) for l in f["labels"]] if "labels" in f else None
            return cls(f["samples"], labels, float(f["sample_rate"]))


def epoch_signals(signals: np.ndarray, N: int) -> np.ndarray:
    """Cut ``(channels, samples)`` into consecutive non-overlapping epochs, dropping any tail."""
    channels, total = signals.shape
    count = total // N
    if total % N:
        warnings.warn(f"dropping {total % N} trailing samples per channel ({total} not divisible by {N})")
    return signals[:, : count * N].reshape(channels, count, N)


def _read_numeric_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                values = [float(c) for c in row]
            except ValueError:
                bad = next(c for c, v in enumerate(row) if not _is_float(v))
                raise NonNumericCell(f"{path}: row {r + 1}, column {bad + 1}: {row[bad]!r}") from None
            if rows and len(values) != len(rows[0]):
                raise RaggedRows(f"{path}: row {r + 1} has {len(values)} values, expected {len(rows[0])}")
            rows.append(values)
    return np.array(rows, dtype=float).reshape(len(rows), -1)


def _is_float(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def read_labels(path) -> dict[int, str]:
    """Sidecar CSV of ``epoch_index,label`` lines (a header row is skipped)."""
    out = {}
    with open(path, newline="") as fh:
        for r, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            if len(row) < 2:
                raise DataError(f"{path}: row {r + 1} needs epoch_index,label")
            try:
                out[int(row[0])] = row[1].strip()
            except ValueError:
                if r == 0:
                    continue
                raise NonNumericCell(f"{path}: row {r + 1}: bad epoch index {row[0]!r}") from None
    return out


def attach_labels(ds: EpochedDataset, labels_path) -> EpochedDataset:
    table = read_labels(labels_path)
    missing = [i for i in range(ds.epochs_per_channel) if i not in table]
    if missing:
        raise DataError(f"{labels_path}: no label for epoch(s) {missing[:5]}")
    ds.labels = [table[i] for i in range(ds.epochs_per_channel)]
    return ds


def ingest_csv(path, N: int, channels_as: str = "rows", labels_path=None,
               sample_rate: float = 0.0) -> EpochedDataset:
    """Read a rectangular numeric CSV (one channel per row, or per column) and cut epochs of ``N``."""
    data = _read_numeric_csv(path)
    if channels_as == "cols":
        data = data.T
    elif channels_as != "rows":
        raise ValueError(f"channels_as must be 'rows' or 'cols', got {channels_as!r}")
    ds = EpochedDataset(epoch_signals(data, N), sample_rate=sample_rate)
    if labels_path is not None:
        attach_labels(ds, labels_path)
    return ds


def load_eeglab(path, N: int) -> EpochedDataset:
    """Read an EEGLAB ``.set`` file (MATLAB v5, data inline or in a ``.fdt`` sidecar).

    Continuous recordings are cut into epochs of ``N``; already epoched files
    keep their trials as epochs and must have ``pnts == N``.
    """
    from scipy.io import loadmat

    path = Path(path)
    try:
        mat = loadmat(path, squeeze_me=True, struct_as_record=False)
    except (NotImplementedError, ValueError) as exc:
        raise DataError(f"{path}: cannot read as a MATLAB v5 EEGLAB file ({exc})") from exc
    eeg = mat["EEG"] if "EEG" in mat else None
    get = (lambda k: getattr(eeg, k)) if eeg is not None else (lambda k: mat[k])
    nbchan, pnts, trials = int(get("nbchan")), int(get("pnts")), int(get("trials") or 1)
    srate = float(get("srate"))
    data = get("data")
    if isinstance(data, str):
        raw = np.fromfile(path.parent / data, dtype="<f4")
        if raw.size != nbchan * pnts * trials:
            raise DataError(f"{data}: expected {nbchan * pnts * trials} floats, found {raw.size}")
        data = raw.reshape((nbchan, pnts * trials), order="F")
    data = np.asarray(data, dtype=np.float64).reshape(nbchan, pnts * trials, order="F")
    if trials > 1:
        if pnts != N:
            raise DataError(f"{path}: epoched file has {pnts} points per trial, requested N={N}")
        epochs = data.reshape(nbchan, pnts, trials, order="F").transpose(0, 2, 1)
    else:
        epochs = epoch_signals(data, N)
    return EpochedDataset(epochs, sample_rate=srate)


def load_dataset(path, N: int | None = None, channels_as: str = "rows", labels_path=None) -> EpochedDataset:
    """Dispatch on extension: ``.npz`` (native), ``.csv`` or ``.set`` (EEGLAB)."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".npz":
        ds = EpochedDataset.load(path)
        if labels_path is not None:
            attach_labels(ds, labels_path)
        return ds
    if N is None:
        raise DataError(f"{path}: --epoch-len is required to cut raw recordings into epochs")
    if suffix == ".csv":
        return ingest_csv(path, N, channels_as, labels_path)
    if suffix == ".set":
        ds = load_eeglab(path, N)
        if labels_path is not None:
            attach_labels(ds, labels_path)
        return ds
    raise DataError(f"{path}: unsupported dataset format {suffix!r}")
