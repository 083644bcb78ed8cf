"""Jury-system fusion of one major model with auxiliary models."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ConfigError, InputError

DEFAULT_T_LOW = 0.1
DEFAULT_T_MEDIAN = 0.3
DEFAULT_T_HIGH = 0.5
# mean == t_median falls through both band comparisons; resolve it to 1.
TIE_PREDICTION = 1
TIE_RULE = "predict_1"


@dataclass
class JuryConfig:
    major: str
    auxiliaries: list[str] = field(default_factory=list)
    t_low: float = DEFAULT_T_LOW
    t_median: float = DEFAULT_T_MEDIAN
    t_high: float = DEFAULT_T_HIGH

    def __post_init__(self):
        validate_thresholds(self.t_low, self.t_median, self.t_high)
        if not self.auxiliaries:
            raise ConfigError("a jury needs at least one auxiliary model")

    def to_json(self) -> str:
        return json.dumps(
            {"major": self.major, "auxiliaries": list(self.auxiliaries),
             "t_low": self.t_low, "t_median": self.t_median, "t_high": self.t_high},
            indent=2,
        ) + "\n"


def validate_thresholds(t_low: float, t_median: float, t_high: float) -> None:
    for name, v in (("t_low", t_low), ("t_median", t_median), ("t_high", t_high)):
        if not (math.isfinite(v) and 0.0 <= v <= 1.0):
            raise ConfigError(f"{name} must lie in [0, 1], got {v}")
    if not t_low < t_median < t_high:
        raise ConfigError(f"need t_low < t_median < t_high, got {t_low}, {t_median}, {t_high}")


def load_jury_config(path) -> JuryConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid jury config: {exc}") from None
    if "major" not in raw:
        raise InputError(f"{path}: missing field 'major'")
    unknown = set(raw) - {"major", "auxiliaries", "t_low", "t_median", "t_high"}
    if unknown:
        raise InputError(f"{path}: unknown fields {sorted(unknown)}")
    return JuryConfig(
        raw["major"],
        list(raw.get("auxiliaries", [])),
        float(raw.get("t_low", DEFAULT_T_LOW)),
        float(raw.get("t_median", DEFAULT_T_MEDIAN)),
        float(raw.get("t_high", DEFAULT_T_HIGH)),
    )


def jury_predict(
    major: float,
    auxiliaries: Sequence[float],
    t_low: float = DEFAULT_T_LOW,
    t_median: float = DEFAULT_T_MEDIAN,
    t_high: float = DEFAULT_T_HIGH,
) -> int:
    """Trust the major score outside ``[t_low, t_high]``; inside, vote on the mean of all scores."""
    if len(auxiliaries) == 0:
        raise ConfigError("a jury needs at least one auxiliary score")
    if major < t_low:
        return 0
    if major > t_high:
        return 1
    avg = math.fsum([major, *auxiliaries]) / (len(auxiliaries) + 1)
    if avg < t_median:
        return 0
    if avg > t_median:
        return 1
    return TIE_PREDICTION


def jury_predict_batch(
    major,
    auxiliaries,
    t_low: float = DEFAULT_T_LOW,
    t_median: float = DEFAULT_T_MEDIAN,
    t_high: float = DEFAULT_T_HIGH,
) -> np.ndarray:
    """Vectorised :func:`jury_predict`; ``auxiliaries`` is (n_aux, n_samples)."""
    major = np.asarray(major, dtype=np.float64)
    aux = np.atleast_2d(np.asarray(auxiliaries, dtype=np.float64))
    if aux.size == 0:
        raise ConfigError("a jury needs at least one auxiliary score")
    if aux.shape[1] != major.shape[0]:
        raise InputError(f"auxiliary scores cover {aux.shape[1]} samples, major covers {major.shape[0]}")
    # fsum per sample, same as jury_predict
    avg = np.array(
        [math.fsum([m, *col]) for m, col in zip(major.tolist(), aux.T.tolist())]
    ) / (aux.shape[0] + 1)
    band = np.where(avg < t_median, 0, np.where(avg > t_median, 1, TIE_PREDICTION))
    return np.where(major < t_low, 0, np.where(major > t_high, 1, band)).astype(np.int64)


def jury_eval(major_model, auxiliary_models, X, y, rel_types,
              t_low=DEFAULT_T_LOW, t_median=DEFAULT_T_MEDIAN, t_high=DEFAULT_T_HIGH, config=None):
    """Score ``X`` with every model, apply the jury rule and build an accuracy report.

    Models are fitted verifiers exposing ``decision_function``.
    """
    from .evaluation import report_from_arrays

    validate_thresholds(t_low, t_median, t_high)
    if not auxiliary_models:
        raise ConfigError("a jury needs at least one auxiliary model")
    major = major_model.decision_function(X)
    aux = np.array([m.decision_function(X) for m in auxiliary_models])
    pred = jury_predict_batch(major, aux, t_low, t_median, t_high)
    echo = {"t_low": t_low, "t_median": t_median, "t_high": t_high,
            "jury_tie": TIE_RULE, "n_models": 1 + len(auxiliary_models)}
    echo.update(config or {})
    return report_from_arrays(rel_types, pred, y, echo)
