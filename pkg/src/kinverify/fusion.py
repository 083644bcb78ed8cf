"""Algebraic fusion of two face embeddings into a single feature vector."""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError, ShapeError


class FusionKind(str, Enum):
    CAT = "cat"                  # x ⊕ y
    SUMDIFF = "sumdiff"          # (x+y) ⊕ (x-y)
    SUMDIFF_MUL = "sumdiff_mul"  # (x+y) ⊕ (x-y) ⊕ (x·y)
    SQDIFF = "sqdiff"            # (x²-y²) ⊕ (x-y)²
    SQDIFF_MUL = "sqdiff_mul"    # (x²-y²) ⊕ (x-y)² ⊕ (x·y)

    def __str__(self) -> str:
        return self.value

    @classmethod
    def parse(cls, token) -> "FusionKind":
        if isinstance(token, cls):
            return token
        try:
            return cls(str(token).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise ContractError(f"unknown fusion {token!r}; expected one of {valid}") from None


_BLOCKS = {
    FusionKind.CAT: 2,
    FusionKind.SUMDIFF: 2,
    FusionKind.SUMDIFF_MUL: 3,
    FusionKind.SQDIFF: 2,
    FusionKind.SQDIFF_MUL: 3,
}


def output_dim(kind, d: int) -> int:
    if d < 1:
        raise ContractError(f"embedding dimension must be >= 1, got {d}")
    return _BLOCKS[FusionKind.parse(kind)] * d


def fuse(kind, x, y) -> np.ndarray:
    """Fuse embeddings ``x`` and ``y``.

    Works on single vectors of shape (D,) or on batches of shape (n, D); the
    result has ``output_dim(kind, D)`` columns laid out block by block in the
    order the fusion formula is written.
    """
    kind = FusionKind.parse(kind)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ShapeError(f"fuse: embedding shapes differ {x.shape} vs {y.shape}")
    if x.ndim not in (1, 2) or x.shape[-1] < 1:
        raise ShapeError(f"fuse: expected (D,) or (n, D) embeddings, got {x.shape}")

    if kind is FusionKind.CAT:
        blocks = (x, y)
    elif kind is FusionKind.SUMDIFF:
        blocks = (x + y, x - y)
    elif kind is FusionKind.SUMDIFF_MUL:
        blocks = (x + y, x - y, x * y)
    elif kind is FusionKind.SQDIFF:
        blocks = (x * x - y * y, (x - y) ** 2)
    else:
        blocks = (x * x - y * y, (x - y) ** 2, x * y)
    return np.concatenate(blocks, axis=-1)


def fuse_tensor(kind, x: ad.Tensor, y: ad.Tensor, tape: ad.Tape | None = None) -> ad.Tensor:
    """Same as :func:`fuse` for row-batched tensors, recorded on ``tape``."""
    kind = FusionKind.parse(kind)
    if x.shape != y.shape:
        raise ShapeError(f"fuse: embedding shapes differ {x.shape} vs {y.shape}")

    if kind is FusionKind.CAT:
        return ad.concat([x, y], tape)
    if kind in (FusionKind.SUMDIFF, FusionKind.SUMDIFF_MUL):
        blocks = [ad.add(x, y, tape), ad.sub(x, y, tape)]
    else:
        blocks = [
            ad.sub(ad.square(x, tape), ad.square(y, tape), tape),
            ad.square(ad.sub(x, y, tape), tape),
        ]
    if kind in (FusionKind.SUMDIFF_MUL, FusionKind.SQDIFF_MUL):
        blocks.append(ad.mul(x, y, tape))
    return ad.concat(blocks, tape)
