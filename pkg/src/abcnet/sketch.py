"""HyperLogLog count-distinct sketch, an exact set oracle, and key hashing.

Items are 64-bit hashes. A sketch starts in sparse mode, remembering the
set of occupied fine-grained buckets (top 25 hash bits) and estimating by
linear counting over 2**25 buckets; once that set outgrows a quarter of the
register count (the size of the dense array) it is dropped and the dense
registers, which are always maintained, take over.

 Transaction keys ``(s, d, f)`` are encoded as
``s`` (8 bytes BE) + ``d`` (8 bytes BE) + ``len(f)`` (4 bytes BE) + ``f``
and hashed with seeded XXH64. Keys without features are hashed in bulk by a
numpy implementation of the same function.
"""
from __future__ import annotations

import json
import struct

import numpy as np
import xxhash

__all__ = [
    "HllSketch",
    "ExactCounter",
    "IncompatibleSketchError",
    "encode_key",
    "key_bytes",
    "hash_keys",
    "register_updates",
    "estimate_registers",
    "classic_estimate",
    "improved_estimate",
    "sparse_codes",
    "sparse_estimate",
    "sparse_limit",
    "alpha",
]

MIN_P, MAX_P = 4, 18
DEFAULT_P = 12
SPARSE_P = 25
_SPARSE_M = float(1 << SPARSE_P)

_MAGIC = b"HLL\x00"
_VERSION = 1
_HEADER = struct.Struct(">4sBBQBI")

_M64 = (1 << 64) - 1
_P1 = np.uint64(0x9E3779B185EBCA87)
_P2 = np.uint64(0xC2B2AE3D27D4EB4F)
_P3 = np.uint64(0x165667B19E3779F9)
_P4 = np.uint64(0x85EBCA77C2B2AE63)
_P5 = np.uint64(0x27D4EB2F165667C5)


class IncompatibleSketchError(ValueError):
    pass


def key_bytes(s: int, d: int, f: bytes = b"") -> bytes:
    return struct.pack(">QQI", s, d, len(f)) + bytes(f)


def encode_key(s: int, d: int, f: bytes = b"", seed: int = 0) -> int:
    """64-bit hash of the ordered transaction key ``(s, d, f)``."""
    return xxhash.xxh64_intdigest(key_bytes(s, d, f), seed=seed & _M64)


def _rotl(x: np.ndarray, r: int) -> np.ndarray:
    return (x << np.uint64(r)) | (x >> np.uint64(64 - r))


def _bswap64(x: np.ndarray) -> np.ndarray:
    return x.astype(">u8").view("<u8").astype(np.uint64)


def hash_keys(s, d, seed: int = 0) -> np.ndarray:
    """Vectorized ``encode_key(s, d, b"", seed)`` for arrays of node IDs.

    XXH64 over the fixed 20-byte encoding: two 8-byte lanes then the
    4-byte zero length prefix.
    """
    s = np.asarray(s, dtype=np.uint64)
    d = np.asarray(d, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = np.full(s.shape, (seed + int(_P5) + 20) & _M64, dtype=np.uint64)
        for lane in (_bswap64(s), _bswap64(d)):
            k = _rotl(lane * _P2, 31) * _P1
            h ^= k
            h = _rotl(h, 27) * _P1 + _P4
        h ^= np.uint64(0) * _P1
        h = _rotl(h, 23) * _P2 + _P3
        h ^= h >> np.uint64(33)
        h *= _P2
        h ^= h >> np.uint64(29)
        h *= _P3
        h ^= h >> np.uint64(32)
    return h


def _bit_length(x: np.ndarray) -> np.ndarray:
    hi = (x >> np.uint64(32)).astype(np.float64)
    lo = (x & np.uint64(0xFFFFFFFF)).astype(np.float64)
    # frexp is exact below 2**53, so split into 32-bit halves
    return np.where(hi > 0, 32 + np.frexp(hi)[1], np.frexp(lo)[1]).astype(np.int64)


def register_updates(hashes, p: int) -> tuple[np.ndarray, np.ndarray]:
    """Register index (top ``p`` bits) and rank for each 64-bit hash."""
    h = np.asarray(hashes, dtype=np.uint64)
    q = 64 - p
    idx = (h >> np.uint64(q)).astype(np.int64)
    rest = h & np.uint64((1 << q) - 1)
    rank = (q - _bit_length(rest) + 1).astype(np.uint8)
    return idx, rank


def sparse_codes(hashes) -> np.ndarray:
    return (np.asarray(hashes, dtype=np.uint64) >> np.uint64(64 - SPARSE_P)).astype(np.int64)


def sparse_limit(p: int) -> int:
    return (1 << p) // 4


def sparse_estimate(occupied) -> np.ndarray | float:
    """Linear counting over the 2**25 fine-grained buckets."""
    k = np.asarray(occupied, dtype=np.float64)
    est = _SPARSE_M * np.log(_SPARSE_M / (_SPARSE_M - k))
    return float(est) if est.ndim == 0 else est


def alpha(m: int) -> float:
    if m == 16:
        return 0.673
    if m == 32:
        return 0.697
    if m == 64:
        return 0.709
    return 0.7213 / (1.0 + 1.079 / m)


_INV_POW2 = 2.0 ** -np.arange(256, dtype=np.float64)


def _sigma(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    out = np.full(x.shape, np.inf)
    live = x < 1.0
    xv, z, y = x[live], x[live].copy(), 1.0
    while True:
        xv = xv * xv
        z_new = z + xv * y
        y += y
        if np.array_equal(z_new, z):
            break
        z = z_new
    out[live] = z
    return out


def _tau(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.float64)
    out = np.zeros(x.shape)
    live = (x > 0.0) & (x < 1.0)
    xv = x[live]
    z, y = 1.0 - xv, 1.0
    while True:
        xv = np.sqrt(xv)
        y *= 0.5
        z_new = z - (1.0 - xv) ** 2 * y
        if np.array_equal(z_new, z):
            break
        z = z_new
    out[live] = z / 3.0
    return out


def _register_histogram(regs: np.ndarray, q: int) -> np.ndarray:
    rows = regs.shape[0]
    flat = regs.astype(np.int64) + (q + 2) * np.arange(rows)[:, None]
    return np.bincount(flat.ravel(), minlength=rows * (q + 2)).reshape(rows, q + 2)


def classic_estimate(regs: np.ndarray) -> np.ndarray:
    """Raw harmonic-mean estimate with linear counting below 2.5m."""
    m = regs.shape[1]
    harmonic = _INV_POW2[regs].sum(axis=1)
    raw = alpha(m) * m * m / harmonic
    zeros = (regs == 0).sum(axis=1)
    with np.errstate(divide="ignore"):
        linear = m * np.log(m / np.maximum(zeros, 1))
    return np.where((raw <= 2.5 * m) & (zeros > 0), linear, raw)


def improved_estimate(regs: np.ndarray) -> np.ndarray:
    """Table-free improved estimator: no bias bump between the linear-counting
    and raw ranges, zero for an empty sketch."""
    m = regs.shape[1]
    q = 64 - (m.bit_length() - 1)
    c = _register_histogram(regs, q).astype(np.float64)
    z = m * _tau(1.0 - c[:, q + 1] / m)
    for k in range(q, 0, -1):
        z = 0.5 * (z + c[:, k])
    z = z + m * _sigma(c[:, 0] / m)
    with np.errstate(divide="ignore"):
        return m * m / (2.0 * np.log(2.0)) / z


ESTIMATORS = {"improved": improved_estimate, "classic": classic_estimate}


def estimate_registers(regs: np.ndarray, method: str = "improved") -> np.ndarray | float:
    """Cardinality estimate for one register row or a 2-D stack of rows."""
    regs = np.asarray(regs)
    one = regs.ndim == 1
    est = ESTIMATORS[method](np.atleast_2d(regs))
    return float(est[0]) if one else est


class HllSketch:
    """HyperLogLog register array with a sparse small-cardinality mode.

    ``sparse`` is the set of occupied 25-bit buckets, or ``None`` once the
    sketch is dense. Pass ``sparse=False`` for a dense-only sketch.
    """

    __slots__ = ("p", "hash_seed", "registers", "sparse")

    def __init__(self, p: int = DEFAULT_P, hash_seed: int = 0, registers: np.ndarray | None = None,
                 sparse: bool | set[int] | None = True):
        if not (MIN_P <= p <= MAX_P):
            raise ValueError(f"precision p={p} outside [{MIN_P}, {MAX_P}]")
        self.p = p
        self.hash_seed = hash_seed & _M64
        if registers is None:
            registers = np.zeros(1 << p, dtype=np.uint8)
        elif len(registers) != 1 << p:
            raise ValueError("register count does not match precision")
        self.registers = np.asarray(registers, dtype=np.uint8)
        if sparse is True:
            sparse = set() if not self.registers.any() else None
        elif sparse is False:
            sparse = None
        self.sparse = sparse

    @property
    def m(self) -> int:
        return 1 << self.p

    @property
    def is_sparse(self) -> bool:
        return self.sparse is not None

    def _spill(self) -> None:
        if self.sparse is not None and len(self.sparse) > sparse_limit(self.p):
            self.sparse = None

    def add(self, h: int) -> HllSketch:
        q = 64 - self.p
        j = h >> q
        rank = q - (h & ((1 << q) - 1)).bit_length() + 1
        if rank > self.registers[j]:
            self.registers[j] = rank
        if self.sparse is not None:
            self.sparse.add(h >> (64 - SPARSE_P))
            self._spill()
        return self

    def add_hashes(self, hashes) -> HllSketch:
        idx, rank = register_updates(hashes, self.p)
        np.maximum.at(self.registers, idx, rank)
        if self.sparse is not None:
            self.sparse.update(sparse_codes(hashes).tolist())
            self._spill()
        return self

    def add_key(self, s: int, d: int, f: bytes = b"") -> HllSketch:
        return self.add(encode_key(s, d, f, self.hash_seed))

    def estimate(self, method: str = "improved") -> float:
        if self.sparse is not None:
            return sparse_estimate(len(self.sparse))
        return estimate_registers(self.registers, method)

    def merge(self, other: HllSketch) -> HllSketch:
        if self.p != other.p or self.hash_seed != other.hash_seed:
            raise IncompatibleSketchError(
                f"cannot merge p={self.p}/seed={self.hash_seed} with p={other.p}/seed={other.hash_seed}"
            )
        sparse = None
        if self.sparse is not None and other.sparse is not None:
            sparse = self.sparse | other.sparse
        out = HllSketch(self.p, self.hash_seed, np.maximum(self.registers, other.registers), sparse)
        out._spill()
        return out

    def copy(self) -> HllSketch:
        return HllSketch(self.p, self.hash_seed, self.registers.copy(),
                         None if self.sparse is None else set(self.sparse))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HllSketch)
            and self.p == other.p
            and self.hash_seed == other.hash_seed
            and self.sparse == other.sparse
            and np.array_equal(self.registers, other.registers)
        )

    def __repr__(self) -> str:
        mode = "sparse" if self.sparse is not None else "dense"
        return f"HllSketch(p={self.p}, {mode}, estimate={self.estimate():.1f})"

    def to_bytes(self) -> bytes:
        """Versioned binary: header, sorted sparse buckets (uint32 BE), then
        the registers packed 6 bits each."""
        codes = np.array(sorted(self.sparse) if self.sparse is not None else [], dtype=">u4")
        flag = 1 if self.sparse is not None else 0
        bits = np.unpackbits(self.registers[:, None], axis=1)[:, 2:]
        return (
            _HEADER.pack(_MAGIC, _VERSION, self.p, self.hash_seed, flag, len(codes))
            + codes.tobytes()
            + np.packbits(bits.ravel()).tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> HllSketch:
        magic, version, p, seed, flag, count = _HEADER.unpack_from(blob)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a serialized HllSketch (bad magic or version)")
        m = 1 << p
        off = _HEADER.size
        codes = np.frombuffer(blob, ">u4", count=count, offset=off)
        off += 4 * count
        bits = np.unpackbits(np.frombuffer(blob, np.uint8, offset=off))[: 6 * m].reshape(m, 6)
        regs = np.packbits(np.concatenate([np.zeros((m, 2), np.uint8), bits], axis=1), axis=1).ravel()
        return cls(p, seed, regs, set(codes.astype(np.int64).tolist()) if flag else None)

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "hash_seed": self.hash_seed,
                "estimate": self.estimate(),
                "sparse": sorted(self.sparse) if self.sparse is not None else None,
                "registers": self.registers.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> HllSketch:
        obj = json.loads(text)
        sparse = set(obj["sparse"]) if obj.get("sparse") is not None else None
        return cls(obj["p"], obj["hash_seed"], np.array(obj["registers"], dtype=np.uint8), sparse)


class ExactCounter:
    """Exact distinct count over a set of 64-bit item hashes."""

    def __init__(self):
        self.seen: set[int] = set()

    def add(self, h: int) -> ExactCounter:
        self.seen.add(int(h))
        return self

    def add_hashes(self, hashes) -> ExactCounter:
        self.seen.update(np.asarray(hashes, dtype=np.uint64).tolist())
        return self

    def cardinality(self) -> int:
        return len(self.seen)

    def __len__(self) -> int:
        return len(self.seen)

