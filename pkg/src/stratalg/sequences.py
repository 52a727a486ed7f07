"""Finite-horizon conditional sequence analysis.

A conditional sequence stores finitely many conditional vectors.  The
subsequence extractor runs the classical nested coordinate-wise
selection per atom: for each coordinate in order, it keeps the
positions whose value is within ``slack`` of the minimum over the
surviving positions (the horizon stand-in for the liminf), then reads
off the first ``depth`` survivors as measurable indices.  The Cauchy
test scans per-atom tail diameters against an epsilon schedule.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    CondInteger,
    CondScalar,
    CondVector,
    MeasurableSet,
    MeasureSpace,
    select_by_index,
)
from .errors import (
    ExtractionStalledError,
    PreconditionError,
    ShapeError,
    SpaceMismatchError,
)
from .tolerances import EQ_TOL

__all__ = ["CondSequence", "BWResult", "CauchyResult", "bw_extract", "cauchy_limit"]


@dataclass(frozen=True)
class CondSequence:
    """Finitely many conditional vectors, optionally with a norm bound."""

    space: MeasureSpace
    dim: int
    terms: tuple[CondVector, ...]
    bound: Optional[CondScalar] = None

    def __init__(self, terms: Sequence[CondVector], bound: Optional[CondScalar] = None):
        terms = tuple(terms)
        if not terms:
            raise ShapeError("a sequence needs at least one term")
        space, dim = terms[0].space, terms[0].dim
        for t in terms:
            if t.space != space:
                raise SpaceMismatchError("terms live on different measure spaces")
            if t.dim != dim:
                raise ShapeError("terms must share the dimension")
        if bound is not None:
            if bound.space != space:
                raise SpaceMismatchError("bound lives on a different measure space")
            for t in terms:
                n = t.norm().values
                scale = np.maximum(1.0, np.abs(bound.values))
                if np.any(n > bound.values + EQ_TOL * scale):
                    raise ShapeError("bound does not dominate the terms")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "bound", bound)

    @property
    def horizon(self) -> int:
        return len(self.terms)

    def stacked(self) -> np.ndarray:
        """All terms as one array, shape (horizon, natoms, dim)."""
        return np.stack([t.values for t in self.terms])


@dataclass(frozen=True)
class BWResult:
    """Measurable subsequence indices with the selected tail term.

    ``indices`` are 1-based and strictly increasing per atom; ``limit``
    equals the term selected at the deepest index, exactly.
    ``stage_liminfs`` records, per atom and coordinate, the horizon
    minimum used as that stage's selection threshold: every selected
    term sits within ``slack`` of it in that coordinate.
    """

    indices: tuple[CondInteger, ...]
    limit: CondVector
    stage_liminfs: CondVector


def bw_extract(seq: CondSequence, depth: int, slack: float) -> BWResult:
    """Coordinate-by-coordinate subsequence selection at a finite horizon.

    Coordinates are processed in order 1..d.  Each stage restricts the
    surviving positions to those whose coordinate value is at most the
    stage minimum plus ``slack``.  The first ``depth`` survivors become
    the indices.  Atoms whose survivors run out raise
    ``ExtractionStalledError`` carrying the stalled atom set.
    """
    if depth < 1:
        raise ShapeError("depth must be at least 1")
    if slack < 0:
        raise ShapeError("slack must be nonnegative")
    space = seq.space
    K = space.natoms
    data = seq.stacked()  # (T, K, d)
    picked = np.zeros((K, depth), dtype=np.int64)
    liminfs = np.zeros((K, seq.dim))
    stalled = np.zeros(K, dtype=bool)
    for k in range(K):
        pool = np.arange(seq.horizon)
        for i in range(seq.dim):
            vals = data[pool, k, i]
            lo = vals.min()
            liminfs[k, i] = lo
            pool = pool[vals <= lo + slack]
        if len(pool) < depth:
            stalled[k] = True
            continue
        picked[k] = pool[:depth] + 1  # 1-based
    if stalled.any():
        raise ExtractionStalledError(
            "horizon exhausted before the requested depth", stalled
        )
    indices = tuple(CondInteger(space, picked[:, j]) for j in range(depth))
    limit = select_by_index(list(seq.terms), indices[-1])
    return BWResult(
        indices=indices,
        limit=limit,
        stage_liminfs=CondVector(space, liminfs),
    )


@dataclass(frozen=True)
class CauchyResult:
    """Finite-horizon Cauchy verdict with its tail-diameter evidence.

    ``cauchy_on`` holds the atoms passing every epsilon in the schedule.
    ``cuts[j]`` is the 1-based first position whose tail has pairwise
    diameter at most ``schedule[j]`` on each atom, 0 when no cut exists
    within the horizon.  ``tail_diameters[j]`` is the diameter achieved
    at that cut (``inf`` when there is none).  ``limit`` is the last
    term; it is the surrogate limit on ``cauchy_on``.
    """

    limit: CondVector
    cauchy_on: MeasurableSet
    cuts: tuple[np.ndarray, ...]
    tail_diameters: tuple[np.ndarray, ...]


def cauchy_limit(seq: CondSequence, schedule: Sequence[CondScalar]) -> CauchyResult:
    """Per-atom tail-diameter Cauchy test against an epsilon schedule.

    Every epsilon must be strictly positive on every atom.  An atom
    passes one epsilon when some tail of the sequence has all pairwise
    distances at most that epsilon there; it passes overall when it
    passes every epsilon in the schedule.  A tail must contain at least
    two positions: the singleton tail at the horizon carries no pair
    evidence and never counts as a cut.
    """
    space = seq.space
    K = space.natoms
    for eps in schedule:
        if eps.space != space:
            raise SpaceMismatchError("epsilon lives on a different measure space")
        bad = eps.values <= 0
        if bad.any():
            raise PreconditionError("epsilons must be strictly positive", bad)
    T = seq.horizon
    data = seq.stacked()  # (T, K, d)
    # tail_diam[n, k]: max pairwise distance among positions >= n (0-based)
    tail_diam = np.zeros((T, K))
    for k in range(K):
        rows = data[:, k, :]
        dists = np.linalg.norm(rows[:, None, :] - rows[None, :, :], axis=2)
        running = 0.0
        for n in range(T - 2, -1, -1):
            running = max(running, float(dists[n, n + 1:].max()))
            tail_diam[n, k] = running
    cuts = []
    diams = []
    passing = np.ones(K, dtype=bool)
    for eps in schedule:
        cut = np.zeros(K, dtype=np.int64)
        dia = np.full(K, np.inf)
        for k in range(K):
            ok = np.flatnonzero(tail_diam[: T - 1, k] <= eps.values[k])
            if len(ok):
                cut[k] = ok[0] + 1  # 1-based
                dia[k] = tail_diam[ok[0], k]
        passing &= cut > 0
        cuts.append(cut)
        diams.append(dia)
    return CauchyResult(
        limit=seq.terms[-1],
        cauchy_on=MeasurableSet(space, passing),
        cuts=tuple(cuts),
        tail_diameters=tuple(diams),
    )
