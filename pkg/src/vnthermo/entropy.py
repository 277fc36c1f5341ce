"""Entropy measures in units of k_B times nats."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidDistribution, InvalidState, LayoutConflict, UnknownSubsystem
from .qcore import TAU_EIG, TAU_PSD, TAU_TRACE, DensityState, partial_trace, spectrum, validate


@dataclass(frozen=True, eq=False)
class PointerDistribution:
    """Joint probabilities over the product of pointer bases of ``axes``.

    ``probabilities`` has one array axis per entry of ``axes``.
    """

    axes: tuple[str, ...]
    outcomes: tuple[tuple[str, ...], ...]
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float)
        if p.ndim != len(self.axes) or p.shape != tuple(len(o) for o in self.outcomes):
            raise InvalidDistribution(f"probability table shape {p.shape} does not match axes")
        if np.any(p < -TAU_PSD):
            raise InvalidDistribution(f"negative probability {p.min():.3g}")
        p = np.clip(p, 0.0, None)
        if abs(p.sum() - 1.0) > TAU_TRACE * max(1, p.size):
            raise InvalidDistribution(f"probabilities sum to {p.sum():.12g}")
        p.setflags(write=False)
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "outcomes", tuple(tuple(o) for o in self.outcomes))
        object.__setattr__(self, "probabilities", p)

    @classmethod
    def from_dict(cls, axes: Sequence[str], outcomes: Sequence[Sequence[str]],
                  table: Mapping[tuple, float]) -> "PointerDistribution":
        """Build from a sparse ``{(o1, o2, ...): p}`` mapping; unspecified cells are 0."""
        shape = tuple(len(o) for o in outcomes)
        p = np.zeros(shape)
        for key, val in table.items():
            key = key if isinstance(key, tuple) else (key,)
            p[tuple(list(o).index(k) for o, k in zip(outcomes, key))] = val
        return cls(tuple(axes), tuple(tuple(o) for o in outcomes), p)

    def __getitem__(self, key) -> float:
        key = key if isinstance(key, tuple) else (key,)
        return float(self.probabilities[tuple(o.index(k) for o, k in zip(self.outcomes, key))])

    def as_dict(self) -> dict[tuple[str, ...], float]:
        return {
            combo: float(self.probabilities[idx])
            for idx, combo in zip(itertools.product(*(range(len(o)) for o in self.outcomes)),
                                  itertools.product(*self.outcomes))
        }

    def marginal(self, axes: Iterable[str]) -> "PointerDistribution":
        axes = tuple(axes)
        for a in axes:
            if a not in self.axes:
                raise UnknownSubsystem(f"axis {a!r} not in {self.axes}")
        drop = tuple(i for i, a in enumerate(self.axes) if a not in axes)
        kept = [a for a in self.axes if a in axes]
        p = self.probabilities.sum(axis=drop) if drop else self.probabilities
        # reorder to the requested order
        p = np.transpose(p, [kept.index(a) for a in axes]) if axes else p
        return PointerDistribution(axes, tuple(self.outcomes[self.axes.index(a)] for a in axes), p)


@dataclass(frozen=True)
class EntropySnapshot:
    joint: float
    marginals: Mapping[str, float]
    marginal_S: float
    marginal_M: float
    conditional_S_given_M: float
    conditional_M_given_S: float
    mutual_information: float


def _entropy_of(w: np.ndarray) -> float:
    w = w[w > 0]
    h = float(-np.sum(w * np.log(w)))
    return 0.0 if h == 0 else h


def von_neumann_entropy(rho: DensityState, kb: float = 1.0) -> float:
    report = validate(rho)
    if not report.passed:
        raise InvalidState(f"invalid density operator ({', '.join(report.failures)})")
    h = _entropy_of(spectrum(rho))
    return kb * min(max(h, 0.0), float(np.log(rho.layout.total_dimension)) + TAU_EIG)


def shannon_entropy(p, kb: float = 1.0) -> float:
    if isinstance(p, PointerDistribution):
        arr = p.probabilities.ravel()
    else:
        arr = np.asarray(p, dtype=float).ravel()
        if np.any(arr < -TAU_PSD) or abs(arr.sum() - 1.0) > TAU_TRACE * max(1, arr.size):
            raise InvalidDistribution(f"not a normalized distribution: {arr}")
        arr = np.clip(arr, 0.0, None)
    return kb * _entropy_of(arr)


def pointer_distribution(rho: DensityState, axes: Sequence[str]) -> PointerDistribution:
    axes = tuple(axes)
    if not axes:
        raise ValueError("need at least one axis")
    for a in axes:
        rho.layout.position(a)
    red = partial_trace(rho, axes)
    # reduced layout is in roster order; transpose to the requested axis order
    roster = red.layout.labels
    diag = np.real(np.diag(red.matrix)).reshape(red.layout.dims)
    diag = np.transpose(diag, [roster.index(a) for a in axes])
    outcomes = tuple(rho.layout.spec(a).pointer_basis for a in axes)
    total = diag.sum()
    return PointerDistribution(axes, outcomes, np.clip(diag, 0.0, None) / total)


def _check_disjoint(s_labels, m_labels):
    s, m = set(s_labels), set(m_labels)
    if not s or not m:
        raise ValueError("label sets must be nonempty")
    if s & m:
        raise LayoutConflict(f"overlapping label sets: {sorted(s & m)}")
    return s, m


def quantum_conditional_entropy(rho: DensityState, s_labels, m_labels, kb: float = 1.0) -> float:
    """S(rho_SM) - S(rho_M). Negative on entangled inputs; never clamped."""
    s, m = _check_disjoint(s_labels, m_labels)
    joint = von_neumann_entropy(partial_trace(rho, s | m), kb)
    return joint - von_neumann_entropy(partial_trace(rho, m), kb)


def classical_conditional_entropy(joint: PointerDistribution, s_axes, m_axes, kb: float = 1.0) -> float:
    """-sum p(s,m) ln p(s|m); slices with p(m) = 0 contribute nothing."""
    s_axes, m_axes = tuple(s_axes), tuple(m_axes)
    s, m = _check_disjoint(s_axes, m_axes)
    if s | m != set(joint.axes):
        raise InvalidDistribution(f"axes {sorted(s | m)} must cover {joint.axes}")
    p = joint.marginal(m_axes + s_axes).probabilities
    pm = p.reshape(int(np.prod(p.shape[:len(m_axes)])), -1)
    h = 0.0
    for row in pm:
        total = row.sum()
        if total <= 0:
            continue
        cond = row[row > 0] / total
        h -= float(np.sum(row[row > 0] * np.log(cond)))
    return kb * max(h, 0.0)


def mutual_information(rho: DensityState, s_labels, m_labels, kb: float = 1.0) -> float:
    s, m = _check_disjoint(s_labels, m_labels)
    return (von_neumann_entropy(partial_trace(rho, s), kb)
            + von_neumann_entropy(partial_trace(rho, m), kb)
            - von_neumann_entropy(partial_trace(rho, s | m), kb))


def snapshot(rho: DensityState, s_labels, m_labels, kb: float = 1.0) -> EntropySnapshot:
    s, m = _check_disjoint(s_labels, m_labels)
    h_sm = von_neumann_entropy(partial_trace(rho, s | m), kb)
    h_s = von_neumann_entropy(partial_trace(rho, s), kb)
    h_m = von_neumann_entropy(partial_trace(rho, m), kb)
    marginals = {lab: von_neumann_entropy(partial_trace(rho, [lab]), kb) for lab in sorted(s | m)}
    return EntropySnapshot(
        joint=h_sm,
        marginals=marginals,
        marginal_S=h_s,
        marginal_M=h_m,
        conditional_S_given_M=h_sm - h_m,
        conditional_M_given_S=h_sm - h_s,
        mutual_information=h_s + h_m - h_sm,
    )
