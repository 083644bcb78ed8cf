"""Embedding stores, sample lists, negative sampling and synthetic families.

On-disk formats
---------------
* manifest (JSON): ``{"format_version": 1, "dim": D, "count": N,
  "normalize": bool, "ids": [...]}``, ids in binary row order.
* binary: raw little-endian float32, row-major, ``N * D`` values, no header.
* ``pairs.csv`` header ``id1,id2,label,rel_type``;
  ``triplets.csv`` header ``father_id,mother_id,child_id,label,rel_type``.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import ConfigError, InputError

MANIFEST_VERSION = 1
PAIR_TYPES = ("BB", "SS", "SIBS", "FD", "MD", "FS", "MS", "GFGD", "GMGD", "GFGS", "GMGS")
TRIPLET_TYPES = ("FMD", "FMS")
PAIR_HEADER = ["id1", "id2", "label", "rel_type"]
TRIPLET_HEADER = ["father_id", "mother_id", "child_id", "label", "rel_type"]


@dataclass(frozen=True)
class EmbeddingStore:
    ids: tuple[str, ...]
    matrix: np.ndarray
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] < 1:
            raise InputError(f"embedding matrix must be N x D with D >= 1, got {matrix.shape}")
        if len(self.ids) != matrix.shape[0]:
            raise InputError(f"{len(self.ids)} ids for {matrix.shape[0]} rows")
        index: dict[str, int] = {}
        for i, key in enumerate(self.ids):
            if key in index:
                raise InputError(f"duplicate embedding id {key!r} (rows {index[key]} and {i})")
            index[key] = i
        bad = np.argwhere(~np.isfinite(matrix))
        if bad.size:
            raise InputError(f"non-finite value for id {self.ids[bad[0][0]]!r}")
        matrix.setflags(write=False)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "index", index)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key) -> bool:
        return key in self.index

    def vector(self, key: str) -> np.ndarray:
        return self.matrix[self.index[key]]

    def rows(self, keys: Sequence[str]) -> np.ndarray:
        return self.matrix[[self.index[k] for k in keys]]


def l2_normalize(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    return matrix / np.where(norms == 0.0, 1.0, norms)


def save_embeddings(store: EmbeddingStore, manifest_path, bin_path, normalize: bool = False) -> None:
    manifest = {
        "format_version": MANIFEST_VERSION,
        "dim": store.dim,
        "count": len(store),
        "normalize": bool(normalize),
        "ids": list(store.ids),
    }
    with open(manifest_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=1)
        fh.write("\n")
    store.matrix.astype("<f4").tofile(bin_path)


def load_embeddings(manifest_path, bin_path) -> EmbeddingStore:
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{manifest_path}: invalid manifest: {exc}") from None
    for key in ("format_version", "dim", "count", "ids"):
        if key not in manifest:
            raise InputError(f"{manifest_path}: missing field {key!r}")
    if manifest["format_version"] != MANIFEST_VERSION:
        raise InputError(f"{manifest_path}: unsupported format_version {manifest['format_version']}")
    dim, count, ids = manifest["dim"], manifest["count"], manifest["ids"]
    if not isinstance(dim, int) or dim < 1 or not isinstance(count, int) or count < 0:
        raise InputError(f"{manifest_path}: dim must be >= 1 and count >= 0")
    if len(ids) != count:
        raise InputError(f"{manifest_path}: count={count} but {len(ids)} ids listed")
    if not all(isinstance(i, str) for i in ids):
        raise InputError(f"{manifest_path}: ids must be strings")

    expected = count * dim * 4
    actual = os.path.getsize(bin_path)
    if actual != expected:
        raise InputError(
            f"{bin_path}: size mismatch, {actual} bytes for count={count} dim={dim} "
            f"(expected {expected})"
        )
    matrix = np.fromfile(bin_path, dtype="<f4").astype(np.float64).reshape(count, dim)
    bad = np.argwhere(~np.isfinite(matrix))
    if bad.size:
        raise InputError(f"{bin_path}: non-finite value in record {bad[0][0]} (id {ids[bad[0][0]]!r})")
    if manifest.get("normalize", False):
        matrix = l2_normalize(matrix)
    return EmbeddingStore(tuple(ids), matrix)


# --- sample lists -------------------------------------------------------------

@dataclass(frozen=True)
class PairSample:
    id1: str
    id2: str
    label: int
    rel_type: str


@dataclass(frozen=True)
class TripletSample:
    father_id: str
    mother_id: str
    child_id: str
    label: int
    rel_type: str


def _read_rows(path, header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise InputError(f"{path}:1: header must be exactly {','.join(header)}, got {first}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != len(header):
                raise InputError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def _parse_label(token: str, where: str) -> int:
    if token not in ("0", "1"):
        raise InputError(f"{where}: label must be 0 or 1, got {token!r}")
    return int(token)


def _check_ids(ids: Iterable[str], store: EmbeddingStore | None, where: str) -> None:
    if store is None:
        return
    for key in ids:
        if key not in store:
            raise InputError(f"{where}: unknown embedding id {key!r}")


def load_pairs(path, store: EmbeddingStore | None = None) -> list[PairSample]:
    out = []
    for lineno, (a, b, label, rel) in _read_rows(path, PAIR_HEADER):
        where = f"{path}:{lineno}"
        if rel not in PAIR_TYPES:
            raise InputError(f"{where}: unknown rel_type {rel!r}")
        _check_ids((a, b), store, where)
        out.append(PairSample(a, b, _parse_label(label, where), rel))
    return out


def load_triplets(path, store: EmbeddingStore | None = None) -> list[TripletSample]:
    out = []
    for lineno, (f, m, c, label, rel) in _read_rows(path, TRIPLET_HEADER):
        where = f"{path}:{lineno}"
        if rel not in TRIPLET_TYPES:
            raise InputError(f"{where}: unknown rel_type {rel!r}")
        _check_ids((f, m, c), store, where)
        out.append(TripletSample(f, m, c, _parse_label(label, where), rel))
    return out


def save_samples(path, samples: Sequence[PairSample | TripletSample]) -> None:
    triplet = bool(samples) and isinstance(samples[0], TripletSample)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRIPLET_HEADER if triplet else PAIR_HEADER)
        for s in samples:
            if triplet:
                writer.writerow([s.father_id, s.mother_id, s.child_id, s.label, s.rel_type])
            else:
                writer.writerow([s.id1, s.id2, s.label, s.rel_type])


def to_arrays(store: EmbeddingStore, samples: Sequence[PairSample | TripletSample]):
    """Stack samples into ``(X, y, rel_types)`` with X of shape (n, 2|3, D)."""
    if not samples:
        raise InputError("no samples")
    if isinstance(samples[0], TripletSample):
        cols = [[s.father_id for s in samples], [s.mother_id for s in samples], [s.child_id for s in samples]]
    else:
        cols = [[s.id1 for s in samples], [s.id2 for s in samples]]
    for col in cols:
        _check_ids(col, store, "samples")
    X = np.stack([store.rows(col) for col in cols], axis=1)
    y = np.array([s.label for s in samples], dtype=np.int64)
    rel = np.array([s.rel_type for s in samples])
    return X, y, rel


# --- negatives -----------------------------------------------------------------

def sample_negatives(
    positives: Sequence[PairSample | TripletSample],
    family_map: Mapping[str, object],
    seed,
    roles: Mapping[str, str] | None = None,
) -> list:
    """Draw one cross-family negative per positive.

    The younger side (``id2`` for pairs, the child for triplets) is replaced
    by someone from a different family, keeping ``rel_type`` so the negatives
    reproduce the positives' relationship-type histogram. Replacements come
    from the individuals in ``positives``: with ``roles`` they must hold the
    same role as the person they replace, otherwise they must fill the same
    side of a positive with the same ``rel_type``.
    """
    if not positives:
        return []
    triplet = isinstance(positives[0], TripletSample)

    def members(s):
        return (s.father_id, s.mother_id, s.child_id) if triplet else (s.id1, s.id2)

    def replaced(s):
        return s.child_id if triplet else s.id2

    for s in positives:
        for k in members(s):
            if k not in family_map:
                raise InputError(f"id {k!r} has no family assignment")
            if roles is not None and k not in roles:
                raise InputError(f"id {k!r} has no role assignment")
    if len({family_map[k] for s in positives for k in members(s)}) < 2:
        raise InputError("negative sampling needs at least two families")

    if roles is None:
        def pool_key(s):
            return s.rel_type
        raw = [(s.rel_type, replaced(s)) for s in positives]
    else:
        def pool_key(s):
            return roles[replaced(s)]
        raw = [(roles[k], k) for s in positives for k in members(s)]
    pools: dict[str, list[str]] = {}
    for key, ident in raw:
        pools.setdefault(key, []).append(ident)
    pools = {key: sorted(set(v)) for key, v in pools.items()}
    pool_fam = {key: np.array([str(family_map[k]) for k in v]) for key, v in pools.items()}

    rng = np.random.default_rng(seed)
    out = []
    for s in positives:
        banned = [str(family_map[k]) for k in members(s)]
        key = pool_key(s)
        ok = np.flatnonzero(~np.isin(pool_fam[key], banned))
        if ok.size == 0:
            raise InputError(f"no cross-family candidate for a {s.rel_type} negative")
        pick = pools[key][ok[rng.integers(ok.size)]]
        if triplet:
            out.append(TripletSample(s.father_id, s.mother_id, pick, 0, s.rel_type))
        else:
            out.append(PairSample(s.id1, pick, 0, s.rel_type))
    return out


# --- synthetic families ------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    families: int = 500
    members_per_family: int = 6
    dim: int = 64
    alpha: float = 0.7
    seed: int = 7

    def __post_init__(self):
        if self.families < 1 or self.members_per_family < 1 or self.dim < 1:
            raise ConfigError("families, members_per_family and dim must all be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class SynthResult:
    store: EmbeddingStore
    family_map: dict[str, int]
    roles: dict[str, str]


def _family_roles(members: int, rng) -> list[str]:
    if members == 1:
        return ["father"]
    roles = ["father", "mother"]
    n_children = members - 2
    if members >= 6:
        roles += ["grandfather", "grandmother"]
        n_children = members - 4
    roles += ["son" if g else "daughter" for g in rng.integers(0, 2, size=n_children)]
    return roles


def synth_generate(config: SynthConfig) -> SynthResult:
    """Latent-factor families: member = alpha * family + sqrt(1 - alpha^2) * noise."""
    rng = np.random.default_rng(config.seed)
    noise_scale = np.sqrt(1.0 - config.alpha**2)
    ids: list[str] = []
    rows: list[np.ndarray] = []
    family_map: dict[str, int] = {}
    roles: dict[str, str] = {}
    for fam in range(config.families):
        latent = rng.standard_normal(config.dim)
        fam_roles = _family_roles(config.members_per_family, rng)
        noise = rng.standard_normal((len(fam_roles), config.dim))
        counts: dict[str, int] = {}
        for role, n in zip(fam_roles, noise):
            counts[role] = counts.get(role, 0) + 1
            key = f"F{fam:04d}_{role}{counts[role]}"
            ids.append(key)
            rows.append(config.alpha * latent + noise_scale * n)
            family_map[key] = fam
            roles[key] = role
    return SynthResult(EmbeddingStore(tuple(ids), np.array(rows)), family_map, roles)


_PARENT_CHILD = {("father", "son"): "FS", ("father", "daughter"): "FD",
                 ("mother", "son"): "MS", ("mother", "daughter"): "MD"}
_GRAND = {("grandfather", "son"): "GFGS", ("grandfather", "daughter"): "GFGD",
          ("grandmother", "son"): "GMGS", ("grandmother", "daughter"): "GMGD"}
_SIBLING = {("son", "son"): "BB", ("daughter", "daughter"): "SS",
            ("son", "daughter"): "SIBS", ("daughter", "son"): "SIBS"}


def _members_by_family(synth: SynthResult) -> dict[int, list[str]]:
    fams: dict[int, list[str]] = {}
    for key in synth.store.ids:
        fams.setdefault(synth.family_map[key], []).append(key)
    return fams


def positive_pairs(synth: SynthResult, families: Iterable[int] | None = None) -> list[PairSample]:
    fams = _members_by_family(synth)
    out = []
    for fam in sorted(fams if families is None else families):
        members = fams[fam]
        for a in members:
            for b in members:
                rel = _PARENT_CHILD.get((synth.roles[a], synth.roles[b])) or _GRAND.get(
                    (synth.roles[a], synth.roles[b])
                )
                if rel:
                    out.append(PairSample(a, b, 1, rel))
        kids = [k for k in members if synth.roles[k] in ("son", "daughter")]
        for a, b in combinations(kids, 2):
            out.append(PairSample(a, b, 1, _SIBLING[synth.roles[a], synth.roles[b]]))
    return out


def positive_triplets(synth: SynthResult, families: Iterable[int] | None = None) -> list[TripletSample]:
    fams = _members_by_family(synth)
    out = []
    for fam in sorted(fams if families is None else families):
        members = fams[fam]
        father = next((k for k in members if synth.roles[k] == "father"), None)
        mother = next((k for k in members if synth.roles[k] == "mother"), None)
        if father is None or mother is None:
            continue
        for k in members:
            if synth.roles[k] in ("son", "daughter"):
                rel = "FMS" if synth.roles[k] == "son" else "FMD"
                out.append(TripletSample(father, mother, k, 1, rel))
    return out


@dataclass
class Benchmark:
    train_pairs: list[PairSample]
    val_pairs: list[PairSample]
    train_triplets: list[TripletSample]
    val_triplets: list[TripletSample]


def build_benchmark(synth: SynthResult, val_fraction: float = 0.2, seed: int = 0) -> Benchmark:
    """Family-disjoint train/val split with one negative per positive in each split."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError("val_fraction must lie in (0, 1)")
    fams = sorted(set(synth.family_map.values()))
    n_val = max(1, int(round(len(fams) * val_fraction)))
    if len(fams) - n_val < 2 or n_val < 2:
        raise InputError("need at least two families on each side of the split")
    rng = np.random.default_rng([seed, 0])
    order = rng.permutation(len(fams))
    val_f = sorted(fams[i] for i in order[:n_val])
    train_f = sorted(fams[i] for i in order[n_val:])

    def split(families, salt):
        pairs = positive_pairs(synth, families)
        trips = positive_triplets(synth, families)
        pairs = pairs + sample_negatives(pairs, synth.family_map, [seed, salt, 1], synth.roles)
        trips = trips + sample_negatives(trips, synth.family_map, [seed, salt, 2], synth.roles)
        return pairs, trips

    tp, tt = split(train_f, 1)
    vp, vt = split(val_f, 2)
    return Benchmark(tp, vp, tt, vt)
