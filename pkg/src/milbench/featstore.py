"""Binary tile-embedding storage and a deterministic mock encoder.

File layout (all integers little-endian):

    magic  "MILF"            4 bytes
    version u16 = 1
    flags   u16              bit0: coordinate block present
    dim     u32
    rows    u64
    slide_id   u16 length + UTF-8 bytes
    encoder_id u16 length + UTF-8 bytes
    zero padding up to the next 64-byte boundary
    payload rows*dim float32, row-major
    coords  rows x 2 u32     (only when flags bit0 is set)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorruptFile, FormatError, InvalidData, StorageError

MAGIC = b"MILF"
VERSION = 1
_FLAG_COORDS = 0x0001


@dataclass
class FeatureMatrix:
    slide_id: str
    encoder_id: str
    data: np.ndarray  # (rows, dim) float32
    coords: np.ndarray | None = None  # (rows, 2) uint32 tile origins

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise InvalidData("feature data must be a 2-d array")
        if self.data.shape[1] <= 0:
            raise InvalidData("feature dim must be positive")
        if not np.all(np.isfinite(self.data)):
            raise InvalidData("feature data contains NaN/Inf")
        if self.coords is not None:
            self.coords = np.ascontiguousarray(self.coords, dtype=np.uint32)
            if self.coords.shape != (self.data.shape[0], 2):
                raise InvalidData("coords must be rows x 2")
            if len({tuple(c) for c in self.coords.tolist()}) != len(self.coords):
                raise InvalidData("coords must be unique")

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        if (self.slide_id, self.encoder_id) != (other.slide_id, other.encoder_id):
            return False
        if self.data.shape != other.data.shape:
            return False
        if not np.array_equal(self.data, other.data):
            return False
        if (self.coords is None) != (other.coords is None):
            return False
        return self.coords is None or np.array_equal(self.coords, other.coords)


def _header_bytes(m: FeatureMatrix) -> bytes:
    sid = m.slide_id.encode("utf-8")
    eid = m.encoder_id.encode("utf-8")
    flags = _FLAG_COORDS if m.coords is not None else 0
    head = MAGIC + struct.pack("<HHIQ", VERSION, flags, m.dim, m.rows)
    head += struct.pack("<H", len(sid)) + sid
    head += struct.pack("<H", len(eid)) + eid
    return head + b"\x00" * ((-len(head)) % 64)


def write_features(m: FeatureMatrix, path: str | Path) -> None:
    head = _header_bytes(m)
    try:
        with open(path, "wb") as fh:
            fh.write(head)
            fh.write(m.data.astype("<f4", copy=False).tobytes(order="C"))
            if m.coords is not None:
                fh.write(m.coords.astype("<u4", copy=False).tobytes(order="C"))
    except OSError as exc:
        raise StorageError(f"cannot write {path}: {exc}") from exc


def read_features(path: str | Path) -> FeatureMatrix:
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        raise StorageError(f"cannot read {path}: {exc}") from exc
    if len(blob) < 20 or blob[:4] != MAGIC:
        raise FormatError(f"{path}: not a MILF feature file")
    version, flags, dim, rows = struct.unpack_from("<HHIQ", blob, 4)
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 20
    try:
        (sid_len,) = struct.unpack_from("<H", blob, off)
        sid = blob[off + 2 : off + 2 + sid_len].decode("utf-8")
        off += 2 + sid_len
        (eid_len,) = struct.unpack_from("<H", blob, off)
        eid = blob[off + 2 : off + 2 + eid_len].decode("utf-8")
        off += 2 + eid_len
    except (struct.error, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: truncated header") from exc
    off += (-off) % 64
    payload_len = rows * dim * 4
    if len(blob) < off + payload_len:
        raise CorruptFile(f"{path}: payload shorter than rows*dim*4")
    data = np.frombuffer(blob, dtype="<f4", count=rows * dim, offset=off)
    data = data.reshape(rows, dim) if dim else data.reshape(rows, 0)
    if not np.all(np.isfinite(data)):
        raise InvalidData(f"{path}: payload contains NaN/Inf")
    coords = None
    if flags & _FLAG_COORDS:
        coff = off + payload_len
        if len(blob) < coff + rows * 8:
            raise CorruptFile(f"{path}: coordinate block truncated")
        coords = np.frombuffer(blob, dtype="<u4", count=rows * 2, offset=coff)
        coords = coords.reshape(rows, 2)
    return FeatureMatrix(slide_id=sid, encoder_id=eid, data=data.copy(),
                         coords=None if coords is None else coords.copy())


def mock_encode(grid, dim: int, seed: int) -> FeatureMatrix:
    """Deterministic stand-in for a real tile encoder.

    Each row is a pure function of (slide_id, x, y, seed, dim): the tuple is
    hashed into a Philox key, so the embedding of a tile never depends on
    its position in the grid or on the platform.
    """
    from .seeding import derive_seed

    if dim <= 0:
        raise InvalidData("dim must be positive")
    rows = np.empty((len(grid.tiles), dim), dtype=np.float32)
    for i, (x, y) in enumerate(grid.tiles):
        key = derive_seed("mock_encode", grid.slide_id, x, y, seed)
        gen = np.random.Generator(np.random.Philox(key=key))
        rows[i] = gen.uniform(-1.0, 1.0, size=dim).astype(np.float32)
    coords = np.asarray(grid.tiles, dtype=np.uint32).reshape(len(grid.tiles), 2)
    return FeatureMatrix(slide_id=grid.slide_id, encoder_id=f"mock-{dim}-{seed}",
                         data=rows, coords=coords)


class FeatureStore:
    """Directory layout: <root>/<encoder_id>/<slide_id>.feat"""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def path(self, encoder_id: str, slide_id: str) -> Path:
        return self.root / encoder_id / f"{slide_id}.feat"

    def exists(self, encoder_id: str, slide_id: str) -> bool:
        return self.path(encoder_id, slide_id).is_file()

    def load(self, encoder_id: str, slide_id: str) -> FeatureMatrix:
        from .errors import MissingFeatures

        p = self.path(encoder_id, slide_id)
        if not p.is_file():
            raise MissingFeatures(slide_id)
        return read_features(p)

    def save(self, m: FeatureMatrix) -> Path:
        p = self.path(m.encoder_id, m.slide_id)
        p.parent.mkdir(parents=True, exist_ok=True)
        write_features(m, p)
        return p
