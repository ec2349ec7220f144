"""Report containers and JSON/CSV writers."""

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np


@dataclass
class LemmaReport:
    """Outcome of a sampled inequality check.

    ``worst_margin`` is the smallest (bound - measured) seen; negative means a
    violation.  ``inadmissible`` counts samples outside the lemma hypotheses.
    """

    lemma: str
    samples: int
    violations: int
    worst_margin: float
    inadmissible: int = 0
    details: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.violations == 0 and self.samples > 0

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _clean(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        obj = obj.to_dict() if hasattr(obj, "to_dict") else asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def config_hash(config_dict):
    blob = json.dumps(_clean(config_dict), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_clean(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_clean(v) for v in r])


def linear_fit(x, y, w=None):
    """Weighted least squares y = c + k x; returns (k, c, r2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    if x.size < 2:
        return 0.0, float(y[0]) if y.size else 0.0, 1.0
    xm = np.average(x, weights=w)
    ym = np.average(y, weights=w)
    sxx = np.sum(w * (x - xm) ** 2)
    if sxx == 0:
        return 0.0, ym, 1.0
    k = np.sum(w * (x - xm) * (y - ym)) / sxx
    c = ym - k * xm
    ss_tot = np.sum(w * (y - ym) ** 2)
    ss_res = np.sum(w * (y - c - k * x) ** 2)
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return float(k), float(c), float(r2)
