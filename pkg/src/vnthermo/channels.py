"""Measurement, apparatus coupling, separation and reset feasibility."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .entropy import pointer_distribution
from .errors import ApparatusNotReady, InvalidMeasurement, LayoutConflict
from .qcore import (
    TAU_EIG,
    TAU_TRACE,
    DensityState,
    ProjectiveMeasurement,
    SystemLayout,
    UnitaryOp,
    apply_unitary,
    basis_vector,
    controlled_operator,
    embed,
    projector,
)

READY_TOLERANCE = 1e-8


@dataclass(frozen=True)
class Outcome:
    label: str
    probability: float
    post_state: DensityState


@dataclass(frozen=True, eq=False)
class ResetProblem:
    sources: tuple[np.ndarray, ...]
    targets: tuple[np.ndarray, ...]

    def __post_init__(self):
        src = tuple(np.asarray(v, dtype=complex).reshape(-1) for v in self.sources)
        tgt = tuple(np.asarray(v, dtype=complex).reshape(-1) for v in self.targets)
        if len(src) != len(tgt):
            raise ValueError(f"{len(src)} sources but {len(tgt)} targets")
        dims = {v.shape[0] for v in src + tgt}
        if len(dims) > 1:
            raise LayoutConflict(f"states live on spaces of different dimension {sorted(dims)}")
        object.__setattr__(self, "sources", tuple(v / np.linalg.norm(v) for v in src))
        object.__setattr__(self, "targets", tuple(v / np.linalg.norm(v) for v in tgt))


@dataclass(frozen=True)
class ResetVerdict:
    feasible: bool
    discrepancy: float


def pointer_measurement(lay: SystemLayout, target: str) -> ProjectiveMeasurement:
    spec = lay.spec(target)
    return ProjectiveMeasurement(
        target, tuple((p, projector(basis_vector(spec, p))) for p in spec.pointer_basis)
    )


def basis_measurement(target: str, labels: Sequence[str], vectors: Sequence) -> ProjectiveMeasurement:
    """Rank-one measurement in an orthonormal basis given as vectors."""
    return ProjectiveMeasurement(target, tuple((lab, projector(v)) for lab, v in zip(labels, vectors)))


def _embedded(rho: DensityState, m: ProjectiveMeasurement) -> list[tuple[str, np.ndarray]]:
    spec = rho.layout.spec(m.target)
    if m.dimension != spec.dimension:
        raise InvalidMeasurement(
            f"projectors act on dimension {m.dimension}, {m.target} has {spec.dimension}"
        )
    return [(lab, embed(rho.layout, {m.target: p})) for lab, p in m.projectors]


def nonselective_measure(rho: DensityState, m: ProjectiveMeasurement) -> DensityState:
    out = sum(p @ rho.matrix @ p for _, p in _embedded(rho, m))
    return DensityState(rho.layout, 0.5 * (out + out.conj().T))


def selective_measure(rho: DensityState, m: ProjectiveMeasurement) -> list[Outcome]:
    outcomes = []
    for lab, p in _embedded(rho, m):
        prob = float(np.real(np.trace(p @ rho.matrix)))
        if prob < TAU_TRACE:
            continue
        post = p @ rho.matrix @ p / prob
        outcomes.append(Outcome(lab, prob, DensityState(rho.layout, 0.5 * (post + post.conj().T))))
    total = sum(o.probability for o in outcomes)
    # renormalise away the mass of omitted negligible outcomes
    return [Outcome(o.label, o.probability / total, o.post_state) for o in outcomes]


def coupling_unitary(lay: SystemLayout, source: str, apparatus: str) -> UnitaryOp:
    """Controlled transposition |s_i>|ready> <-> |s_i>|r_i> for each source pointer state.

    The map is its own inverse, so applying it a second time erases a faithful
    record without dissipation.
    """
    sspec, aspec = lay.spec(source), lay.spec(apparatus)
    if aspec.ready is None:
        raise LayoutConflict(f"{apparatus} has no designated ready state")
    records = aspec.record_states(sspec.dimension)
    r0 = aspec.index(aspec.ready)
    blocks = {}
    for s_ptr, rec in zip(sspec.pointer_basis, records):
        perm = np.eye(aspec.dimension)
        ri = aspec.index(rec)
        perm[[r0, ri]] = perm[[ri, r0]]
        blocks[s_ptr] = perm
    return UnitaryOp(lay, controlled_operator(lay, source, apparatus, blocks))


def is_ready(rho: DensityState, apparatus: str) -> bool:
    spec = rho.layout.spec(apparatus)
    return pointer_distribution(rho, [apparatus])[spec.ready] >= 1 - READY_TOLERANCE


def couple_apparatus(rho: DensityState, source: str, apparatus: str) -> DensityState:
    if source == apparatus:
        raise LayoutConflict("source and apparatus must differ")
    u = coupling_unitary(rho.layout, source, apparatus)
    if not is_ready(rho, apparatus):
        raise ApparatusNotReady(f"{apparatus} is not in its ready state {rho.layout.spec(apparatus).ready!r}")
    return apply_unitary(rho, u)


def separation_unitary(lay: SystemLayout, spin: str, position: str) -> UnitaryOp:
    """Identity when the spin is in its first pointer state, L<->R swap when in the second."""
    sspec, pspec = lay.spec(spin), lay.spec(position)
    if sspec.dimension != 2 or pspec.dimension != 2:
        raise LayoutConflict("separation needs two-dimensional spin and position factors")
    swap = np.array([[0, 1], [1, 0]], dtype=complex)
    return UnitaryOp(lay, controlled_operator(lay, spin, position, {sspec.pointer_basis[1]: swap}))


def completion_unitary(target_state, column: int) -> np.ndarray:
    """A unitary whose ``column``-th column is ``target_state``."""
    psi = np.asarray(target_state, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    d = psi.shape[0]
    # Gram-Schmidt from psi then the standard basis
    cols = [psi]
    for k in range(d):
        v = np.zeros(d, dtype=complex)
        v[k] = 1.0
        for c in cols:
            v = v - np.vdot(c, v) * c
        n = np.linalg.norm(v)
        if n > 1e-8:
            cols.append(v / n)
        if len(cols) == d:
            break
    order = cols[1:column + 1] + [psi] + cols[column + 1:]
    return np.column_stack(order)


def conditional_rotation(lay: SystemLayout, control: str, target: str,
                         mapping: Mapping[str, str], state) -> UnitaryOp:
    """Controlled unitary sending target pointer ``mapping[c]`` to ``state`` when control reads c.

    Control pointer states absent from ``mapping`` act as identity.
    """
    cspec, tspec = lay.spec(control), lay.spec(target)
    blocks = {}
    for c, t in mapping.items():
        cspec.index(c)
        blocks[c] = completion_unitary(state, tspec.index(t))
    return UnitaryOp(lay, controlled_operator(lay, control, target, blocks))


def gram(vectors: Sequence[np.ndarray]) -> np.ndarray:
    v = np.column_stack(vectors)
    return v.conj().T @ v


def unitary_reset_feasible(problem: ResetProblem) -> ResetVerdict:
    """A unitary maps sources to targets iff their Gram matrices coincide."""
    if not problem.sources:
        return ResetVerdict(True, 0.0)
    disc = float(np.max(np.abs(gram(problem.sources) - gram(problem.targets))))
    return ResetVerdict(disc <= TAU_EIG, disc)
