"""Asymptotic rate constants and Bayes-risk lower bounds.

The stopping rules in :mod:`anomsearch.policies` all trade observation cost
against error probability through a single constant: the rate at which the
decisive log-likelihood gap grows per round. These helpers compute that
constant for each scenario shape and turn it into the benchmark risk curve
-c log c / rate that simulated policies are measured against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .models import ObservationModel

__all__ = [
    "RateReport",
    "rate_single",
    "rate_multi",
    "bayes_lower_bound",
    "relative_loss",
    "supports_unknown_count",
    "unknownl_lower_bound",
]


@dataclass(frozen=True)
class RateReport:
    """KL pair, achieved rate constant, and which probing regime attains it.

    regime is "g" when the rate comes from reinforcing suspected targets,
    "f" when it comes from clearing the other cells; ties report "g".
    """

    d_gf: float
    d_fg: float
    i_star: float
    regime: str

    def __post_init__(self) -> None:
        if not self.i_star > 0.0:
            raise ValueError(f"rate constant must be positive, got {self.i_star}")
        if self.regime not in ("g", "f"):
            raise ValueError(f"regime must be 'g' or 'f', got {self.regime!r}")

    def lower_bound_at(self, cost: float) -> float:
        return bayes_lower_bound(cost, self.i_star)


def rate_single(model: ObservationModel, num_cells: int, probes_per_round: int) -> RateReport:
    """Gap growth rate for the one-target search probing K of M cells per round.

    Probing everything accrues d_gf + d_fg per round. Otherwise the rate is
    the better of the two arms: spending all K probes on the runners-up
    (K d_fg / (M-1)) or pinning the leader and spreading the rest
    (d_gf + (K-1) d_fg / (M-1)).
    """
    m, k = num_cells, probes_per_round
    if m < 2:
        raise ValueError("need at least two cells")
    if not 1 <= k <= m:
        raise ValueError(f"probes per round must lie in [1, {m}], got {k}")
    d_gf, d_fg = model.kl_divergences()
    if k == m:
        return RateReport(d_gf, d_fg, d_gf + d_fg, "g" if d_gf >= d_fg / (m - 1) else "f")
    arm_g = d_gf + (k - 1) * d_fg / (m - 1)
    arm_f = k * d_fg / (m - 1)
    if arm_g >= arm_f:
        return RateReport(d_gf, d_fg, arm_g, "g")
    return RateReport(d_gf, d_fg, arm_f, "f")


def rate_multi(
    model: ObservationModel, num_cells: int, probes_per_round: int, num_targets: int
) -> RateReport:
    """Gap growth rate with L targets; L=1 agrees with ``rate_single`` exactly.

    Both arms generalize the single-target ones. Chasing targets yields
    d_gf + (K-L) d_fg / (M-L) once every target is covered (K >= L), else
    K d_gf / L with the probes rotating over the L weakest candidates.
    Clearing normals yields K d_fg / (M-L) while they can absorb all probes
    (K <= M-L), else d_fg + (K-M+L) d_gf / L.
    """
    m, k, l = num_cells, probes_per_round, num_targets
    if m < 2:
        raise ValueError("need at least two cells")
    if not 1 <= k <= m:
        raise ValueError(f"probes per round must lie in [1, {m}], got {k}")
    if not 1 <= l < m:
        raise ValueError(f"target count must lie in [1, {m}), got {l}")
    d_gf, d_fg = model.kl_divergences()
    if k == m:
        return RateReport(d_gf, d_fg, d_gf + d_fg, "g" if d_gf / l >= d_fg / (m - l) else "f")
    arm_g = d_gf + (k - l) * d_fg / (m - l) if k >= l else k * d_gf / l
    arm_f = d_fg + (k - m + l) * d_gf / l if k > m - l else k * d_fg / (m - l)
    if arm_g >= arm_f:
        return RateReport(d_gf, d_fg, arm_g, "g")
    return RateReport(d_gf, d_fg, arm_f, "f")


def bayes_lower_bound(cost: float, i_star: float) -> float:
    """Benchmark risk -c log c / i_star; no policy beats it asymptotically."""
    if not 0.0 < cost < 1.0:
        raise ValueError(f"cost must lie in (0, 1), got {cost}")
    if not i_star > 0.0:
        raise ValueError(f"rate constant must be positive, got {i_star}")
    return -cost * math.log(cost) / i_star


def relative_loss(r_policy: float, r_lb: float) -> float:
    """Excess risk of a policy over the benchmark, as a fraction of the benchmark."""
    if not r_lb > 0.0:
        raise ValueError(f"benchmark risk must be positive, got {r_lb}")
    return (r_policy - r_lb) / r_lb


def supports_unknown_count(model: ObservationModel, num_cells: int, max_targets: int) -> bool:
    """Whether the cell budget is large enough for the unknown-count policy.

    Checks M >= L (d_gf + d_fg) / d_gf. When it holds, declared-target
    evidence accrues at least as fast per candidate as clearing evidence
    does per normal cell (so ``rate_multi`` lands in regime "g"), and each
    of the up-to-L declarations costs about -log c / d_gf rounds.
    """
    m, l = num_cells, max_targets
    if m < 2:
        raise ValueError("need at least two cells")
    if not 1 <= l < m:
        raise ValueError(f"target count must lie in [1, {m}), got {l}")
    d_gf, d_fg = model.kl_divergences()
    return m >= l * (d_gf + d_fg) / d_gf


def unknownl_lower_bound(cost: float, true_target_count: int, model: ObservationModel) -> float:
    """Benchmark risk with an unknown target count: -ell c log c / d_gf.

    ``true_target_count`` is the ground-truth number of targets ell, known
    to the experiment harness but not to the policy under test.
    """
    if not 0.0 < cost < 1.0:
        raise ValueError(f"cost must lie in (0, 1), got {cost}")
    if true_target_count < 1:
        raise ValueError(f"true target count must be positive, got {true_target_count}")
    d_gf, _ = model.kl_divergences()
    return -true_target_count * cost * math.log(cost) / d_gf
