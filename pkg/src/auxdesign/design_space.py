"""Designs, design spaces, constraints and space-filling baseline designs.

A design is an (n, w) matrix: n experimental runs, each specified by w design
variables (sampling times, larvae counts, ...).  The design space is a box
with optional minimum-spacing constraints on one coordinate across runs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MinSpacing",
    "DesignSpace",
    "Design",
    "latin_hypercube",
    "equally_spaced",
    "maximin_lhd",
    "check_constraints",
    "project_coordinate",
    "save_design_csv",
    "load_design_csv",
]


@dataclass(frozen=True)
class MinSpacing:
    """Sorted values of design coordinate ``index`` must differ by >= gap."""

    index: int
    gap: float

    def __post_init__(self):
        if self.gap < 0:
            raise ValueError("spacing gap must be nonnegative")


@dataclass(frozen=True)
class DesignSpace:
    """Box-bounded space for a single run's design variables."""

    bounds: np.ndarray  # (w, 2)
    constraints: tuple[MinSpacing, ...] = field(default_factory=tuple)

    def __post_init__(self):
        b = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if b.ndim != 2 or b.shape[1] != 2:
            raise ValueError("bounds must be a (w, 2) array of [lo, hi]")
        if np.any(b[:, 0] >= b[:, 1]):
            raise ValueError("degenerate bound: need lo < hi for every coordinate")
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "constraints", tuple(self.constraints))
        for c in self.constraints:
            if not 0 <= c.index < self.w:
                raise ValueError(f"constraint coordinate {c.index} out of range")

    @property
    def w(self) -> int:
        return self.bounds.shape[0]

    @property
    def lo(self) -> np.ndarray:
        return self.bounds[:, 0]

    @property
    def hi(self) -> np.ndarray:
        return self.bounds[:, 1]

    def contains(self, points: np.ndarray) -> bool:
        p = np.atleast_2d(points)
        return bool(np.all(p >= self.lo - 1e-12) and np.all(p <= self.hi + 1e-12))

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=(n, self.w))


@dataclass(frozen=True)
class Design:
    """n runs of w design variables each."""

    matrix: np.ndarray  # (n, w)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def w(self) -> int:
        return self.matrix.shape[1]

    @property
    def points(self) -> list[np.ndarray]:
        return [self.matrix[k] for k in range(self.n)]


def latin_hypercube(space: DesignSpace, m: int, seed: int) -> np.ndarray:
    """M margin-stratified points: each coordinate hits every stratum once.

    Positions within each stratum are uniform draws.
    """
    if m < 2:
        raise ValueError("latin hypercube needs M >= 2")
    rng = np.random.default_rng(seed)
    w = space.w
    pts = np.empty((m, w))
    for j in range(w):
        perm = rng.permutation(m)
        u = rng.uniform(size=m)
        pts[:, j] = space.lo[j] + (perm + u) * (space.hi[j] - space.lo[j]) / m
    return pts


def equally_spaced(space: DesignSpace, n: int) -> Design:
    """n interior points lo + k*(hi-lo)/(n+1), k = 1..n.  Requires w = 1.

    Endpoints are excluded: at t = 0 the response carries no information in
    any of the built-in models.
    """
    if space.w != 1:
        raise ValueError("equally spaced baseline is defined for w = 1 only")
    lo, hi = space.bounds[0]
    k = np.arange(1, n + 1)
    return Design((lo + k * (hi - lo) / (n + 1)).reshape(-1, 1))


def _min_pairwise_distance(pts: np.ndarray, lo: np.ndarray, span: np.ndarray) -> float:
    z = (pts - lo) / span
    d2 = np.sum((z[:, None, :] - z[None, :, :]) ** 2, axis=-1)
    iu = np.triu_indices(len(pts), k=1)
    return float(np.sqrt(d2[iu].min()))


def maximin_lhd(space: DesignSpace, n: int, restarts: int, seed: int) -> Design:
    """Best of ``restarts`` random LHDs by minimum pairwise distance.

    Distances are computed after scaling each coordinate to [0, 1], so the
    criterion is unit-free.  Restart r uses child seed r of ``seed``; the best
    design over nested restart counts is therefore monotone in ``restarts``.
    """
    if n < 2:
        raise ValueError("maximin design needs n >= 2")
    if restarts < 1:
        raise ValueError("need at least one restart")
    span = space.hi - space.lo
    children = np.random.SeedSequence(seed).generate_state(restarts)
    best, best_d = None, -np.inf
    for s in children:
        pts = latin_hypercube(space, n, int(s))
        d = _min_pairwise_distance(pts, space.lo, span)
        if d > best_d:
            best, best_d = pts, d
    return Design(best)


def check_constraints(design: Design, space: DesignSpace) -> tuple[bool, list[str]]:
    """True iff every MinSpacing constraint holds (gap is inclusive)."""
    violations: list[str] = []
    if design.w != space.w:
        raise ValueError("design dimension does not match space")
    for c in space.constraints:
        vals = np.sort(design.matrix[:, c.index])
        gaps = np.diff(vals)
        bad = np.nonzero(gaps < c.gap - 1e-12)[0]
        for i in bad:
            violations.append(
                f"coordinate {c.index}: runs at {vals[i]:g} and {vals[i + 1]:g} "
                f"closer than gap {c.gap:g}"
            )
    return (len(violations) == 0, violations)


def project_coordinate(
    design: Design, run: int, coord: int, value: float, space: DesignSpace
) -> float:
    """Nearest feasible value for one coordinate of one run.

    Clamps to the box and, for a MinSpacing constraint on this coordinate,
    moves the proposal to the closest point at least ``gap`` away from every
    other run.  Falls back to the current value when nothing is feasible.
    """
    lo, hi = space.bounds[coord]
    value = float(np.clip(value, lo, hi))
    spacing = [c for c in space.constraints if c.index == coord]
    if not spacing:
        return value
    gap = max(c.gap for c in spacing)
    others = np.delete(design.matrix[:, coord], run)

    def feasible(x: float) -> bool:
        return bool(np.all(np.abs(others - x) >= gap - 1e-12)) and lo <= x <= hi

    if feasible(value):
        return value
    candidates = [x for t in others for x in (t - gap, t + gap)] + [lo, hi]
    candidates = [x for x in candidates if feasible(x)]
    if not candidates:
        return float(design.matrix[run, coord])
    return min(candidates, key=lambda x: abs(x - value))


def save_design_csv(design: Design, path) -> None:
    with open(path, "w") as fh:
        fh.write(design_to_csv(design))


def design_to_csv(design: Design) -> str:
    buf = io.StringIO()
    buf.write(f"# design n={design.n} w={design.w}\n")
    buf.write(",".join(f"d_{j + 1}" for j in range(design.w)) + "\n")
    for row in design.matrix:
        buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
    return buf.getvalue()


def load_design_csv(path) -> Design:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# design"):
            raise ValueError(f"{path}: not a design CSV")
        fh.readline()  # column names
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    return Design(np.asarray(rows))
