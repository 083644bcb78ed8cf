"""Similarity heads: the pairwise siamese head and the two-head triplet model.

A siamese head maps fused pair features through ``fc1`` (ReLU, 128 units) and
``fc2`` (1 unit) to a sigmoid score. The triplet model holds two
parameter-disjoint heads, father-child and mother-child, that both see the
same child embedding; their scores are mixed as
``lambda1 * S_FC + lambda2 * S_MC``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .exceptions import ContractError, InputError, ShapeError
from .fusion import FusionKind, fuse, fuse_tensor, output_dim

HIDDEN_UNITS = 128
FORMAT_VERSION = 1
DEFAULT_LAMBDAS = (0.5, 0.5)
DEFAULT_TRIPLET_THRESHOLDS = {"FMD": 0.3, "FMS": 0.4}


@dataclass
class SiameseHead:
    fusion: FusionKind
    dim: int
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.fusion = FusionKind.parse(self.fusion)
        rows = output_dim(self.fusion, self.dim)
        hidden = self.w1.shape[1] if self.w1.ndim == 2 else -1
        expected = {
            "w1": (rows, hidden),
            "b1": (1, hidden),
            "w2": (hidden, 1),
            "b2": (1, 1),
        }
        for name, shape in expected.items():
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def parameters(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "SiameseHead":
        return SiameseHead(self.fusion, self.dim, *(a.copy() for a in self.parameters().values()))


def init_head(fusion, d: int, seed, hidden: int = HIDDEN_UNITS) -> SiameseHead:
    """Glorot-uniform weights, zero biases, drawn from a seeded generator."""
    fusion = FusionKind.parse(fusion)
    rng = np.random.default_rng(seed)
    fan_in = output_dim(fusion, d)

    def glorot(n_in, n_out):
        s = np.sqrt(6.0 / (n_in + n_out))
        return rng.uniform(-s, s, size=(n_in, n_out))

    w1 = glorot(fan_in, hidden)
    w2 = glorot(hidden, 1)
    return SiameseHead(fusion, d, w1, np.zeros((1, hidden)), w2, np.zeros((1, 1)))


def head_logits_tensor(params: Mapping[str, ad.Tensor], fused: ad.Tensor, tape=None) -> ad.Tensor:
    hidden = ad.relu(ad.add_row(ad.matmul(fused, params["w1"], tape), params["b1"], tape), tape)
    return ad.add_row(ad.matmul(hidden, params["w2"], tape), params["b2"], tape)


def head_scores_tensor(params: Mapping[str, ad.Tensor], fused: ad.Tensor, tape=None) -> ad.Tensor:
    return ad.sigmoid(head_logits_tensor(params, fused, tape), tape)


def head_scores_fused(head: SiameseHead, fused: np.ndarray) -> np.ndarray:
    """Scores for a batch of already-fused features of shape (n, output_dim)."""
    fused = np.atleast_2d(np.asarray(fused, dtype=np.float64))
    if fused.shape[1] != head.w1.shape[0]:
        raise ShapeError(
            f"fused width {fused.shape[1]} does not match head input {head.w1.shape[0]}"
        )
    params = {k: ad.Tensor(v) for k, v in head.parameters().items()}
    return head_scores_tensor(params, ad.Tensor(fused)).data[:, 0]


def head_forward(head: SiameseHead, x, y):
    """Similarity score of ``x`` and ``y``.

    Single vectors give a float; (n, D) batches give an array of n scores.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[-1] != head.dim or y.shape[-1] != head.dim:
        raise ShapeError(f"head expects embeddings of dim {head.dim}, got {x.shape} and {y.shape}")
    scores = head_scores_fused(head, fuse(head.fusion, np.atleast_2d(x), np.atleast_2d(y)))
    return float(scores[0]) if x.ndim == 1 else scores


def head_forward_tensor(head_params, fusion, x: ad.Tensor, y: ad.Tensor, tape=None) -> ad.Tensor:
    """Differentiable forward from raw embeddings, fusion included."""
    return head_scores_tensor(head_params, fuse_tensor(fusion, x, y, tape), tape)


def predict(score, t: float):
    """1 where score strictly exceeds ``t``, else 0."""
    if np.ndim(score) == 0:
        return int(score > t)
    return (np.asarray(score) > t).astype(np.int64)


def triplet_score(s_fc, s_mc, lambda1: float, lambda2: float):
    return lambda1 * s_fc + lambda2 * s_mc


@dataclass
class TripletModel:
    fc_head: SiameseHead
    mc_head: SiameseHead
    lambda1: float = DEFAULT_LAMBDAS[0]
    lambda2: float = DEFAULT_LAMBDAS[1]
    t: float = 0.5
    type_thresholds: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ContractError("lambda1 and lambda2 must be non-negative")
        if self.fc_head.fusion != self.mc_head.fusion or self.fc_head.dim != self.mc_head.dim:
            raise ContractError("father-child and mother-child heads must share fusion and dim")
        fc_ids = {id(a) for a in self.fc_head.parameters().values()}
        if any(id(a) in fc_ids for a in self.mc_head.parameters().values()):
            raise ContractError("triplet heads must not share parameter arrays")

    @property
    def fusion(self) -> FusionKind:
        return self.fc_head.fusion

    @property
    def dim(self) -> int:
        return self.fc_head.dim

    def threshold_for(self, rel_type: str | None) -> float:
        return self.type_thresholds.get(rel_type, self.t) if rel_type else self.t


def triplet_forward(model: TripletModel, f, m, c):
    s_fc = head_forward(model.fc_head, f, c)
    s_mc = head_forward(model.mc_head, m, c)
    return triplet_score(s_fc, s_mc, model.lambda1, model.lambda2)


# --- model files -----------------------------------------------------------

def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _dump_array(lines: list[str], key: str, arr: np.ndarray) -> None:
    lines.append(f"{key}.shape={arr.shape[0]} {arr.shape[1]}")
    lines.append(f"{key}=" + " ".join(_fmt(v) for v in arr.reshape(-1)))


def _head_lines(head: SiameseHead, prefix: str) -> list[str]:
    lines: list[str] = []
    for name, arr in head.parameters().items():
        _dump_array(lines, prefix + name, arr)
    return lines


def dumps_model(model, t: float | None = None, extra: Mapping[str, str] | None = None) -> str:
    """Serialize a head or triplet model as ``key=value`` text lines."""
    lines = [f"format_version={FORMAT_VERSION}"]
    if isinstance(model, SiameseHead):
        lines += [
            "model=siamese",
            f"fusion={model.fusion}",
            f"dim={model.dim}",
            f"hidden={model.hidden}",
            f"t={_fmt(0.5 if t is None else t)}",
        ]
        for k, v in (extra or {}).items():
            lines.append(f"meta.{k}={v}")
        lines += _head_lines(model, "")
    elif isinstance(model, TripletModel):
        lines += [
            "model=triplet",
            f"fusion={model.fusion}",
            f"dim={model.dim}",
            f"hidden={model.fc_head.hidden}",
            f"lambda1={_fmt(model.lambda1)}",
            f"lambda2={_fmt(model.lambda2)}",
            f"t={_fmt(model.t if t is None else t)}",
        ]
        for rel in sorted(model.type_thresholds):
            lines.append(f"t.{rel}={_fmt(model.type_thresholds[rel])}")
        for k, v in (extra or {}).items():
            lines.append(f"meta.{k}={v}")
        lines += _head_lines(model.fc_head, "fc.") + _head_lines(model.mc_head, "mc.")
    else:
        raise ContractError(f"cannot serialize {type(model).__name__}")
    return "\n".join(lines) + "\n"


def _parse_kv(text: str, source: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise InputError(f"{source}:{lineno}: expected key=value")
        if key in out:
            raise InputError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _load_array(kv: dict[str, str], key: str, source: str) -> np.ndarray:
    try:
        rows, cols = (int(v) for v in kv[f"{key}.shape"].split())
        values = np.array([float(v) for v in kv[key].split()], dtype=np.float64)
    except KeyError as exc:
        raise InputError(f"{source}: missing field {exc.args[0]!r}") from None
    except ValueError as exc:
        raise InputError(f"{source}: bad array {key!r}: {exc}") from None
    if values.size != rows * cols:
        raise InputError(f"{source}: {key} has {values.size} values, expected {rows * cols}")
    if not np.all(np.isfinite(values)):
        raise InputError(f"{source}: {key} contains non-finite values")
    return values.reshape(rows, cols)


def _load_head(kv, prefix, fusion, dim, source) -> SiameseHead:
    arrays = [_load_array(kv, prefix + n, source) for n in ("w1", "b1", "w2", "b2")]
    try:
        return SiameseHead(fusion, dim, *arrays)
    except ShapeError as exc:
        raise InputError(f"{source}: {exc}") from None


def loads_model(text: str, source: str = "<model>"):
    """Inverse of :func:`dumps_model`. Returns ``(model, t, meta)``."""
    kv = _parse_kv(text, source)
    try:
        version = int(kv["format_version"])
        kind = kv["model"]
        fusion = FusionKind.parse(kv["fusion"])
        dim = int(kv["dim"])
        t = float(kv["t"])
    except KeyError as exc:
        raise InputError(f"{source}: missing field {exc.args[0]!r}") from None
    except (ValueError, ContractError) as exc:
        raise InputError(f"{source}: {exc}") from None
    if version != FORMAT_VERSION:
        raise InputError(f"{source}: unsupported format_version {version}")
    meta = {k[5:]: v for k, v in kv.items() if k.startswith("meta.")}
    if kind == "siamese":
        return _load_head(kv, "", fusion, dim, source), t, meta
    if kind == "triplet":
        type_t = {k[2:]: float(v) for k, v in kv.items() if k.startswith("t.")}
        model = TripletModel(
            _load_head(kv, "fc.", fusion, dim, source),
            _load_head(kv, "mc.", fusion, dim, source),
            float(kv.get("lambda1", DEFAULT_LAMBDAS[0])),
            float(kv.get("lambda2", DEFAULT_LAMBDAS[1])),
            t,
            type_t,
        )
        return model, t, meta
    raise InputError(f"{source}: unknown model kind {kind!r}")


def save_model(path, model, t: float | None = None, extra=None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model, t, extra))


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read(), str(path))
