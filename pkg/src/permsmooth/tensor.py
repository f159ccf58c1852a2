"""Dense order-m tensors, mode permutations, norms and unfoldings.

Permutations are stored 1-based, matching mathematical notation:
``perm[i - 1] == pi(i)``.  Applying a permutation to a tensor follows
``(T o p)(i_1, ..., i_m) = T(p_1(i_1), ..., p_m(i_m))``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DenseTensor",
    "ModePermutations",
    "ShapeError",
    "apply_permutation",
    "compose",
    "inverse_permutation",
    "frobenius_norm",
    "mse",
    "unfold",
    "refold",
    "read_pstn",
    "write_pstn",
]

PSTN_MAGIC = b"PSTN"
PSTN_VERSION = 1


class ShapeError(ValueError):
    """Raised when tensor shapes or permutation lengths disagree."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DenseTensor:
    """Real order-m array with an optional observation mask (True = observed)."""

    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim < 1:
            raise ShapeError("tensor order must be at least 1")
        mask = self.mask
        if mask is not None:
            mask = np.array(mask, dtype=bool, copy=True)
            if mask.shape != values.shape:
                raise ShapeError(f"mask shape {mask.shape} != values shape {values.shape}")
            observed = values[mask]
        else:
            observed = values
        if not np.all(np.isfinite(observed)):
            raise ValueError("observed entries must be finite")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "mask", None if mask is None else _frozen(mask))

    @classmethod
    def from_flat(cls, values, dims: Sequence[int], mask=None) -> "DenseTensor":
        dims = tuple(int(d) for d in dims)
        values = np.asarray(values, dtype=np.float64)
        if values.size != int(np.prod(dims)):
            raise ShapeError(f"{values.size} values cannot fill dims {dims}")
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.size != values.size:
                raise ShapeError("mask length differs from values length")
            mask = mask.reshape(dims)
        return cls(values.reshape(dims), mask)

    @property
    def order(self) -> int:
        return self.values.ndim

    @property
    def dims(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def observed(self) -> np.ndarray:
        """Boolean observation indicator, all True when no mask is stored."""
        if self.mask is None:
            return np.ones(self.dims, dtype=bool)
        return self.mask

    @property
    def n_observed(self) -> int:
        return self.size if self.mask is None else int(self.mask.sum())

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)

    def with_mask(self, mask) -> "DenseTensor":
        return DenseTensor(self.values, mask)

    def __repr__(self):
        m = "" if self.mask is None else f", observed={self.n_observed}"
        return f"DenseTensor(dims={self.dims}{m})"


@dataclass(frozen=True, eq=False)
class ModePermutations:
    """One bijection per mode, each a 1-based integer vector."""

    perms: tuple

    def __post_init__(self):
        perms = []
        for p in self.perms:
            p = np.array(p, dtype=np.int64, copy=True).reshape(-1)
            if not np.array_equal(np.sort(p), np.arange(1, p.size + 1)):
                raise ValueError(f"not a bijection on [{p.size}]: {p.tolist()}")
            perms.append(_frozen(p))
        object.__setattr__(self, "perms", tuple(perms))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "ModePermutations":
        return cls(tuple(np.arange(1, d + 1) for d in dims))

    @classmethod
    def shared(cls, perm, order: int) -> "ModePermutations":
        """Same permutation on every mode (the symmetric model)."""
        return cls(tuple(perm for _ in range(order)))

    @property
    def order(self) -> int:
        return len(self.perms)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(p.size for p in self.perms)

    def __getitem__(self, mode: int) -> np.ndarray:
        return self.perms[mode]

    def __eq__(self, other):
        if not isinstance(other, ModePermutations) or other.order != self.order:
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.perms, other.perms))

    def tolist(self) -> list[list[int]]:
        return [p.tolist() for p in self.perms]


def apply_permutation(T: DenseTensor, p: ModePermutations) -> DenseTensor:
    """Return ``O`` with ``O(i_1, ..., i_m) = T(p_1(i_1), ..., p_m(i_m))``."""
    if p.dims != T.dims:
        raise ShapeError(f"permutation lengths {p.dims} do not match dims {T.dims}")
    index = np.ix_(*[q - 1 for q in p.perms])
    mask = None if T.mask is None else T.mask[index]
    return DenseTensor(T.values[index], mask)


def compose(p1: ModePermutations, p2: ModePermutations) -> ModePermutations:
    """Mode-wise composition ``(p1 o p2)(i) = p1(p2(i))``.

    With this convention ``(T o p1) o p2 == T o (p1 o p2)``.
    """
    if p1.dims != p2.dims:
        raise ShapeError("cannot compose permutations of different lengths")
    return ModePermutations(tuple(a[b - 1] for a, b in zip(p1.perms, p2.perms)))


def inverse_permutation(p: ModePermutations) -> ModePermutations:
    inv = []
    for q in p.perms:
        r = np.empty_like(q)
        r[q - 1] = np.arange(1, q.size + 1)
        inv.append(r)
    return ModePermutations(tuple(inv))


def frobenius_norm(T: DenseTensor) -> float:
    """Square root of the sum of squared observed entries."""
    v = T.values if T.mask is None else T.values[T.mask]
    return float(np.sqrt(np.sum(v * v)))


def mse(A: DenseTensor, B: DenseTensor) -> float:
    """Mean squared difference over the jointly observed entries.

    Without masks this is ``||A - B||^2 / prod(dims)``.  Returns ``nan`` when
    no entry is observed in both tensors.
    """
    if A.dims != B.dims:
        raise ShapeError(f"shape mismatch {A.dims} vs {B.dims}")
    diff = A.values - B.values
    if A.mask is None and B.mask is None:
        return float(np.mean(diff * diff))
    joint = A.observed & B.observed
    n = int(joint.sum())
    if n == 0:
        return float("nan")
    d = diff[joint]
    return float(np.dot(d, d) / n)


def _check_mode(mode: int, order: int) -> int:
    if not 1 <= mode <= order:
        raise ValueError(f"mode {mode} out of range 1..{order}")
    return mode - 1


def unfold(T: DenseTensor | np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` matricization (1-based mode).

    Row ``i`` holds the slice ``T(.., i, ..)``; columns run over the remaining
    modes in row-major order (last remaining mode varies fastest).
    """
    a = T.values if isinstance(T, DenseTensor) else np.asarray(T)
    ax = _check_mode(mode, a.ndim)
    return np.moveaxis(a, ax, 0).reshape(a.shape[ax], -1)


def refold(M: np.ndarray, mode: int, dims: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold` for a tensor of shape ``dims``."""
    dims = tuple(dims)
    ax = _check_mode(mode, len(dims))
    rest = dims[:ax] + dims[ax + 1:]
    return np.moveaxis(np.asarray(M).reshape((dims[ax],) + rest), 0, ax)


# PSTN binary layout:
#   b"PSTN" | u8 version | u8 order | order x u64 dims (LE) | u8 has_mask
#   | prod(dims) x f64 (LE, row-major) | [prod(dims) x u8 mask]

def write_pstn(T: DenseTensor, path: str | Path) -> None:
    header = PSTN_MAGIC + struct.pack("<BB", PSTN_VERSION, T.order)
    header += struct.pack(f"<{T.order}Q", *T.dims)
    header += struct.pack("<B", 0 if T.mask is None else 1)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(T.values, dtype="<f8").tobytes())
        if T.mask is not None:
            fh.write(np.ascontiguousarray(T.mask, dtype=np.uint8).tobytes())


def read_pstn(path: str | Path) -> DenseTensor:
    data = Path(path).read_bytes()
    if data[:4] != PSTN_MAGIC:
        raise ValueError(f"{path}: not a PSTN file")
    version, order = struct.unpack_from("<BB", data, 4)
    if version != PSTN_VERSION:
        raise ValueError(f"{path}: unsupported PSTN version {version}")
    pos = 6
    dims = struct.unpack_from(f"<{order}Q", data, pos)
    pos += 8 * order
    (has_mask,) = struct.unpack_from("<B", data, pos)
    pos += 1
    n = int(np.prod(dims))
    if len(data) != pos + 8 * n + (n if has_mask else 0):
        raise ValueError(f"{path}: truncated or oversized PSTN payload")
    values = np.frombuffer(data, dtype="<f8", count=n, offset=pos)
    mask = None
    if has_mask:
        mask = np.frombuffer(data, dtype=np.uint8, count=n, offset=pos + 8 * n).astype(bool)
    return DenseTensor.from_flat(values, dims, mask)
