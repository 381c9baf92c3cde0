"""Per-trial bookkeeping: sum LLRs, probe counts, rankings, and gaps.

A :class:`SearchState` tracks, for each of the M cells, the running sum of
log-likelihood ratios of every observation taken from that cell, plus how
often the cell was probed and which cells have been declared so far. All
probing policies are pure functions of this state; the Monte Carlo engine
owns exactly one state per trial and mutates it in place.

Cells are ranked by sum LLR, largest first. Equal sums are ordered by
ascending cell index: the tie direction is arbitrary in principle, but
fixing it makes every policy deterministic and every golden test replayable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .models import ObservationModel

__all__ = ["Declaration", "SearchState", "update", "ranked_cells", "gap"]


@dataclass(frozen=True)
class Declaration:
    """One declaration event: cell index, round it happened, and which verdict."""

    cell: int
    time: int
    kind: str  # "abnormal" or "normal"


class SearchState:
    """Sum-LLR ledger for one trial.

    Attributes
    ----------
    n: rounds elapsed (each round probes a fixed-size set of cells).
    s: per-cell sum of observation LLRs; zero for never-probed cells.
    counts: per-cell number of probes.
    declared: append-only list of Declaration events, times non-decreasing.
    """

    __slots__ = ("n", "s", "counts", "declared", "_abnormal", "_normal")

    def __init__(self, num_cells: int) -> None:
        if num_cells < 2:
            raise ValueError("need at least two cells to search")
        self.n = 0
        self.s = [0.0] * num_cells
        self.counts = [0] * num_cells
        self.declared: list[Declaration] = []
        self._abnormal: set[int] = set()
        self._normal: set[int] = set()

    @property
    def num_cells(self) -> int:
        return len(self.s)

    @property
    def declared_abnormal(self) -> set[int]:
        """Cells declared abnormal so far. Treat as read-only."""
        return self._abnormal

    @property
    def declared_normal(self) -> set[int]:
        return self._normal

    def declare(self, cells: Iterable[int], kind: str) -> None:
        """Record declaration events at the current round; append-only."""
        if kind == "abnormal":
            target = self._abnormal
        elif kind == "normal":
            target = self._normal
        else:
            raise ValueError(f"declaration kind must be 'abnormal' or 'normal', got {kind!r}")
        for cell in cells:
            if not 0 <= cell < self.num_cells:
                raise ValueError(f"declared cell {cell} out of range [0, {self.num_cells})")
            if cell in self._abnormal or cell in self._normal:
                raise ValueError(f"cell {cell} was already declared")
            target.add(cell)
            self.declared.append(Declaration(cell=cell, time=self.n, kind=kind))


def update(
    state: SearchState,
    probes: Iterable[int],
    observations: Mapping[int, float],
    model: ObservationModel,
) -> SearchState:
    """Fold one round of observations into the state (in place).

    Every probed cell m gets s[m] += llr(y_m) and counts[m] += 1; the round
    counter advances by one. Probes must be distinct, in range, and carry
    exactly one observation each. Returns the same state object.
    """
    cells = tuple(probes)
    m_total = state.num_cells
    seen = set()
    for m in cells:
        if not 0 <= m < m_total:
            raise ValueError(f"probe index {m} out of range [0, {m_total})")
        if m in seen:
            raise ValueError(f"duplicate probe of cell {m}")
        seen.add(m)
    if seen != set(observations.keys()):
        raise ValueError("observations must be keyed exactly by the probed cells")
    llr = model.llr
    for m in cells:
        state.s[m] += llr(observations[m])
        state.counts[m] += 1
    state.n += 1
    return state


def ranked_cells(state: SearchState) -> list[int]:
    """Cell indices sorted by sum LLR, highest first; ties by ascending index.

    Position i-1 holds the i-th ranked cell. Stable sort keeps equal sums in
    index order, which is exactly the tie rule above.
    """
    return sorted(range(len(state.s)), key=state.s.__getitem__, reverse=True)


def gap(state: SearchState, top: int = 1) -> float:
    """Sum-LLR margin between the `top`-th and (top+1)-th ranked cells.

    This is the statistic every stopping rule thresholds: with top=1 it is
    the lead of the best cell over the runner-up; with top=L it is the
    separation between the candidate target set and the rest. Non-negative
    by construction. Requires 1 <= top < number of cells.
    """
    if not 1 <= top < state.num_cells:
        raise ValueError(f"gap rank must be in [1, {state.num_cells}), got {top}")
    order = ranked_cells(state)
    return state.s[order[top - 1]] - state.s[order[top]]
