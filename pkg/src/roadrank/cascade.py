"""Deterministic cascade surrogate for ground-truth segment importance.

Degrading a segment drops its effective speed below the failure threshold, so
it blocks every path through it. Each step, the flow of every affected path is
re-imposed on the nearest still-operational segment upstream of the blockage
(queue spillback); a segment fails once its own assigned volume plus the
diverted demand exceeds its capacity headroom. Failures are absorbing. The
importance score discounts newly failed segment counts geometrically:

    IS = sum_{t=1..T} gamma^t * n_t
"""

from __future__ import annotations

from dataclasses import dataclass

from .network import DatasetBundle, assigned_volumes, effective_capacities


@dataclass(frozen=True)
class FailureSimConfig:
    speed_factor: float = 0.1  # perturbed speed as a fraction of the limit
    fail_threshold: float = 0.1  # failed when effective speed <= threshold x limit
    overload_ratio: float = 1.0  # demand / capacity ratio that trips a failure
    horizon_T: int = 10
    gamma: float = 0.9

    def __post_init__(self):
        if not 0.0 < self.speed_factor < 1.0:
            raise ValueError("speed_factor must lie in (0, 1)")
        if not 0.0 < self.fail_threshold < 1.0:
            raise ValueError("fail_threshold must lie in (0, 1)")
        if self.overload_ratio <= 0:
            raise ValueError("overload_ratio must be > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if self.horizon_T < 1:
            raise ValueError("horizon_T must be >= 1")


@dataclass(frozen=True)
class CascadeTrace:
    seed_segment: str
    failed_per_step: tuple[int, ...]
    failed_set_per_step: tuple[frozenset[str], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for n, group in zip(self.failed_per_step, self.failed_set_per_step):
            if n != len(group):
                raise ValueError("failed_per_step inconsistent with failed_set_per_step")
            if seen & group:
                raise ValueError("a segment failed in two different steps")
            seen |= group


def simulate_cascade(bundle: DatasetBundle, seed_segment: str, cfg: FailureSimConfig) -> CascadeTrace:
    """Propagate overload failures from one degraded segment.

    Step 0 marks the seed failed (its effective speed ``speed_factor x limit``
    is at or below the failure threshold). Each later step walks every
    (failed segment, containing path) pair, adds that path's flow to the
    nearest non-failed upstream segment, and fails every segment whose
    assigned volume plus diverted demand exceeds ``overload_ratio x capacity``.
    Stops at the horizon or on a step with no new failures; the seed itself is
    never counted.
    """
    if seed_segment not in bundle.network.attrs:
        raise KeyError(f"unknown segment {seed_segment!r}")
    loads = assigned_volumes(bundle)
    caps = effective_capacities(bundle)
    od_volume = {od.id: od.volume for od in bundle.od_flows}
    path_flow = {p.id: od_volume[p.od_id] * p.share for p in bundle.paths}
    paths_through: dict[str, list] = {s: [] for s in bundle.network.segments}
    for p in bundle.paths:
        for s in p.segments:
            paths_through[s].append(p)

    failed = {seed_segment}
    failed_per_step: list[int] = []
    failed_sets: list[frozenset[str]] = []
    for _ in range(cfg.horizon_T):
        diverted = {s: 0.0 for s in bundle.network.segments}
        for f in sorted(failed):
            for p in paths_through[f]:
                pos = p.segments.index(f)
                target = None
                for s in reversed(p.segments[:pos]):
                    if s not in failed:
                        target = s
                        break
                if target is not None:
                    diverted[target] += path_flow[p.id]
        newly = frozenset(
            s
            for s in bundle.network.segments
            if s not in failed and diverted[s] > 0 and loads[s] + diverted[s] > cfg.overload_ratio * caps[s]
        )
        failed_per_step.append(len(newly))
        failed_sets.append(newly)
        failed |= newly
        if not newly:
            break
    return CascadeTrace(seed_segment=seed_segment, failed_per_step=tuple(failed_per_step), failed_set_per_step=tuple(failed_sets))


def importance_score(trace: CascadeTrace, gamma: float, horizon_T: int | None = None) -> float:
    """Geometrically discounted count of newly failed segments, t starting at 1."""
    T = len(trace.failed_per_step) if horizon_T is None else min(horizon_T, len(trace.failed_per_step))
    return sum(gamma**t * trace.failed_per_step[t - 1] for t in range(1, T + 1))


def ground_truth_table(bundle: DatasetBundle, cfg: FailureSimConfig) -> dict[str, float]:
    """One cascade per segment; per-segment runs are independent and deterministic."""
    return {
        s: importance_score(simulate_cascade(bundle, s, cfg), cfg.gamma, cfg.horizon_T)
        for s in bundle.network.segments
    }
