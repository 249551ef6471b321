"""Spatial / temporal correlation degrees and the boolean camera filter.

Travel times are kept as offsets (frames between the last sighting at the
source camera and the first sighting at the destination), so one histogram
per ordered camera pair serves every query regardless of when it was issued.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional

import numpy as np

from .core import EXIT, ContractError, atomic_write_text


class ModelFormatError(ValueError):
    """A model file could not be parsed; ``field`` names the offending entry."""

    def __init__(self, field_name: str, msg: str = ""):
        self.field = field_name
        super().__init__(f"model file: bad or missing field {field_name!r}" + (f" ({msg})" if msg else ""))


@dataclass(frozen=True)
class PairHistogram:
    """Travel-time histogram of one ordered pair.

    ``bins[0]`` is the bin containing ``delta_min``; bin ``k`` therefore covers
    offsets ``[(j0 + k) * w, (j0 + k + 1) * w)`` with ``j0 = delta_min // w``.
    """

    count: int
    delta_min: int
    bins: tuple[int, ...]

    def first_bin(self, bin_width: int) -> int:
        return self.delta_min // bin_width

    def midpoints(self, bin_width: int) -> np.ndarray:
        j0 = self.first_bin(bin_width)
        return (np.arange(j0, j0 + len(self.bins)) + 0.5) * bin_width


@dataclass(frozen=True)
class SpatioTemporalModel:
    n_cameras: int
    s_thresh: float
    t_thresh: float
    bin_width: int
    pairs: Mapping[tuple[int, int], PairHistogram]
    exits: Mapping[int, int]
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        for name in ("s_thresh", "t_thresh"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ContractError(f"{name} must lie in [0, 1], got {v}")
        if self.bin_width < 1:
            raise ContractError("bin_width must be a positive number of frames")

    # -- counts -----------------------------------------------------------
    def count(self, c_s: int, c_d: int) -> int:
        h = self.pairs.get((c_s, c_d))
        return h.count if h is not None else 0

    def departures(self, c_s: int) -> int:
        return self._departures()[c_s]

    def _departures(self) -> np.ndarray:
        dep = self._cache.get("departures")
        if dep is None:
            dep = np.zeros(self.n_cameras, dtype=np.int64)
            for (s, _), h in self.pairs.items():
                dep[s] += h.count
            for s, n in self.exits.items():
                dep[s] += n
            self._cache["departures"] = dep
        return dep

    def spatial_matrix(self) -> np.ndarray:
        """S as an (n, n) array; rows with no departures are all zero."""
        S = self._cache.get("S")
        if S is None:
            S = np.zeros((self.n_cameras, self.n_cameras))
            dep = self._departures()
            for (s, d), h in self.pairs.items():
                S[s, d] = h.count / dep[s]
            self._cache["S"] = S
        return S

    # -- vectorized filter --------------------------------------------------
    def open_windows(self, c_s: int) -> tuple[np.ndarray, np.ndarray]:
        """Per destination, the closed interval of offsets where the model is true.

        Destinations failing the spatial threshold get an empty interval
        (lo = inf). ``hi`` is inf when the temporal clause never closes.
        """
        key = ("win", c_s)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        lo = np.full(self.n_cameras, np.inf)
        hi = np.full(self.n_cameras, -np.inf)
        for d in range(self.n_cameras):
            h = self.pairs.get((c_s, d))
            if h is None or h.count == 0 or spatial_degree(self, c_s, d) < self.s_thresh:
                continue
            lo[d] = h.delta_min
            hi[d] = _last_open_offset(h, self.bin_width, self.t_thresh)
        self._cache[key] = (lo, hi)
        return lo, hi

    def filter_mask(self, c_s: int, delta: int) -> np.ndarray:
        lo, hi = self.open_windows(c_s)
        return (lo <= delta) & (delta <= hi)

    def peers_closed(self, c_s: int, delta: int) -> bool:
        """True once every spatially correlated peer's temporal window has passed."""
        lo, hi = self.open_windows(c_s)
        live = np.isfinite(lo)
        return bool(np.all(hi[live] < delta))


def _last_open_offset(h: PairHistogram, bin_width: int, t_thresh: float) -> float:
    """Largest integer offset at which the temporal clause still holds."""
    cum = np.cumsum(h.bins)
    over = np.flatnonzero(cum / h.count > 1.0 - t_thresh)
    if len(over) == 0:
        return math.inf
    k = int(over[0])
    mid = (h.first_bin(bin_width) + k + 0.5) * bin_width
    # bin k is counted from offset ceil(mid) on
    return float(math.ceil(mid) - 1)


# -- degrees ---------------------------------------------------------------

def spatial_degree(model: SpatioTemporalModel, c_s: int, c_d: int) -> float:
    """Fraction of departures from ``c_s`` (exits included) seen next at ``c_d``.

    Returns 0.0 for a source with no recorded departures; use
    :func:`has_departures` to tell that case apart.
    """
    dep = model.departures(c_s)
    if dep == 0:
        return 0.0
    return model.count(c_s, c_d) / dep


def has_departures(model: SpatioTemporalModel, c_s: int) -> bool:
    return model.departures(c_s) > 0


def exit_fraction(model: SpatioTemporalModel, c_s: int) -> float:
    dep = model.departures(c_s)
    return model.exits.get(c_s, 0) / dep if dep else 0.0


def temporal_degree(model: SpatioTemporalModel, c_s: int, c_d: int, lo: float, hi: float) -> float:
    """Fraction of recorded c_s -> c_d arrivals whose bin midpoint lies in [lo, hi]."""
    if lo > hi:
        raise ContractError(f"empty window [{lo}, {hi}]")
    h = model.pairs.get((c_s, c_d))
    if h is None or h.count == 0:
        return 0.0
    mids = h.midpoints(model.bin_width)
    inside = (mids >= lo) & (mids <= hi)
    return int(np.asarray(h.bins)[inside].sum()) / h.count


def model_eval(model: SpatioTemporalModel, c_s: int, c_d: int, f_q: int, f_curr: int) -> bool:
    """Whether ``c_d`` is spatially and temporally correlated with ``c_s`` at ``f_curr``.

    The temporal window starts at the edge of the bin holding delta_min, which
    is delta_min itself whenever the bin width is one frame.
    """
    if f_curr <= f_q:
        raise ContractError("f_curr must be after f_q")
    h = model.pairs.get((c_s, c_d))
    if h is None or h.count == 0:
        return False
    if spatial_degree(model, c_s, c_d) < model.s_thresh:
        return False
    delta = f_curr - f_q
    if delta < h.delta_min:
        return False
    start = h.first_bin(model.bin_width) * model.bin_width
    return temporal_degree(model, c_s, c_d, start, delta) <= 1.0 - model.t_thresh


def filter_cameras(model: SpatioTemporalModel, c_q: int, f_q: int, f_curr: int,
                   cameras: Optional[Iterable[int]] = None) -> set[int]:
    if f_curr <= f_q:
        raise ContractError("f_curr must be after f_q")
    mask = model.filter_mask(c_q, f_curr - f_q)
    pool = range(model.n_cameras) if cameras is None else cameras
    return {c for c in pool if mask[c]}


def relax(model: SpatioTemporalModel, factor: float) -> SpatioTemporalModel:
    if not factor > 1.0:
        raise ContractError(f"relax factor must exceed 1, got {factor}")
    return replace(model, s_thresh=model.s_thresh / factor, t_thresh=model.t_thresh / factor,
                   _cache={})


def with_thresholds(model: SpatioTemporalModel, s_thresh: float, t_thresh: float) -> SpatioTemporalModel:
    return replace(model, s_thresh=s_thresh, t_thresh=t_thresh, _cache={})


def empty_model(n_cameras: int, s_thresh: float = 0.05, t_thresh: float = 0.02,
                bin_width: int = 1) -> SpatioTemporalModel:
    return SpatioTemporalModel(n_cameras, s_thresh, t_thresh, bin_width, {}, {})


# -- serialization -------------------------------------------------------------

def model_to_json(model: SpatioTemporalModel) -> dict:
    records = []
    for s in range(model.n_cameras):
        if model.exits.get(s, 0):
            records.append({"src": s, "dst": EXIT, "count": int(model.exits[s]),
                            "delta_min": None, "bins": []})
        for d in range(model.n_cameras):
            h = model.pairs.get((s, d))
            if h is not None:
                records.append({"src": s, "dst": d, "count": int(h.count),
                                "delta_min": int(h.delta_min), "bins": [int(b) for b in h.bins]})
    return {
        "n_cameras": model.n_cameras,
        "s_thresh": model.s_thresh,
        "t_thresh": model.t_thresh,
        "bin_width": model.bin_width,
        "pairs": records,
    }


def save_model(model: SpatioTemporalModel, path) -> None:
    atomic_write_text(path, json.dumps(model_to_json(model), sort_keys=True, indent=1) + "\n")


def _need(d: dict, key: str, kind):
    if key not in d:
        raise ModelFormatError(key, "missing")
    v = d[key]
    if kind is float and isinstance(v, int) and not isinstance(v, bool):
        v = float(v)
    if not isinstance(v, kind) or isinstance(v, bool):
        raise ModelFormatError(key, f"expected {kind.__name__}")
    return v


def model_from_json(doc: dict) -> SpatioTemporalModel:
    if not isinstance(doc, dict):
        raise ModelFormatError("<root>", "expected an object")
    n = _need(doc, "n_cameras", int)
    s_thresh = _need(doc, "s_thresh", float)
    t_thresh = _need(doc, "t_thresh", float)
    bin_width = _need(doc, "bin_width", int)
    records = _need(doc, "pairs", list)
    pairs: dict[tuple[int, int], PairHistogram] = {}
    exits: dict[int, int] = {}
    for i, r in enumerate(records):
        where = f"pairs[{i}]"
        if not isinstance(r, dict):
            raise ModelFormatError(where)
        try:
            src = _need(r, "src", int)
            dst = _need(r, "dst", int)
            count = _need(r, "count", int)
            bins = _need(r, "bins", list)
        except ModelFormatError as exc:
            raise ModelFormatError(f"{where}.{exc.field}") from None
        if not 0 <= src < n or not (dst == EXIT or 0 <= dst < n):
            raise ModelFormatError(f"{where}.src/dst", "camera out of range")
        if count < 0:
            raise ModelFormatError(f"{where}.count", "negative")
        if dst == EXIT:
            exits[src] = count
            continue
        try:
            dmin = _need(r, "delta_min", int)
        except ModelFormatError:
            raise ModelFormatError(f"{where}.delta_min") from None
        if not all(isinstance(b, int) and b >= 0 for b in bins) or sum(bins) != count:
            raise ModelFormatError(f"{where}.bins", "counts must be non-negative and sum to count")
        pairs[(src, dst)] = PairHistogram(count, dmin, tuple(bins))
    try:
        return SpatioTemporalModel(n, s_thresh, t_thresh, bin_width, pairs, exits)
    except ContractError as exc:
        raise ModelFormatError("thresholds", str(exc)) from None


def load_model(path) -> SpatioTemporalModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError("<json>", exc.msg) from None
    return model_from_json(doc)


def validate_model(model: SpatioTemporalModel, tol: float = 1e-9) -> list[str]:
    """Problems found in ``model``; an empty list means it is consistent."""
    problems = []
    S = model.spatial_matrix()
    for s in range(model.n_cameras):
        if not has_departures(model, s):
            continue
        total = S[s].sum() + exit_fraction(model, s)
        if abs(total - 1.0) > tol:
            problems.append(f"camera {s}: spatial row plus exit sums to {total!r}")
    for (s, d), h in model.pairs.items():
        if sum(h.bins) != h.count:
            problems.append(f"pair {s}->{d}: bins sum to {sum(h.bins)}, count is {h.count}")
        if h.count and h.delta_min < 1:
            problems.append(f"pair {s}->{d}: non-positive delta_min")
    return problems


def filter_agreement(a: SpatioTemporalModel, b: SpatioTemporalModel, max_delta: int = 0,
                     grid: Optional[Iterable[tuple[int, int]]] = None) -> float:
    """Share of per-destination filter decisions on which two models agree.

    Decisions are taken at every (source camera, offset) point of ``grid``, or of
    all sources x offsets 1..max_delta when no grid is given.
    """
    if a.n_cameras != b.n_cameras:
        raise ContractError("models cover different camera rosters")
    if grid is None:
        grid = [(s, d) for s in range(a.n_cameras) for d in range(1, max_delta + 1)]
    same = total = 0
    for s, delta in grid:
        same += int(np.sum(a.filter_mask(s, delta) == b.filter_mask(s, delta)))
        total += a.n_cameras
    return same / total if total else 1.0
