"""Heat-bath, volume and work bookkeeping for a single isothermal bath.

Sign conventions: W > 0 is work delivered to an external store, Q > 0 is heat
flowing from the bath into the system, and the bath entropy changes by -Q/T.
Volumes are fractions of the whole container; chambers are labelled L and R.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .channels import ResetProblem, unitary_reset_feasible
from .entropy import pointer_distribution, shannon_entropy
from .errors import (
    EmptyChamber,
    OccupiedChamber,
    PartitionError,
    ResetInfeasible,
    Singularity,
    UnknownPosition,
)
from .qcore import TAU_EIG, TAU_TRACE, DensityState, UnitaryOp, basis_vector, embed, replace_factor

CHAMBERS = ("L", "R")
OCCUPANCY_TOL = 1e-12


@dataclass(frozen=True)
class BathModel:
    temperature: float
    kb: float = 1.0
    cumulative_entropy: float = 0.0
    cumulative_heat: float = 0.0  # heat delivered into the bath

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    def absorb(self, heat_into_bath: float) -> "BathModel":
        return replace(
            self,
            cumulative_heat=self.cumulative_heat + heat_into_bath,
            cumulative_entropy=self.cumulative_entropy + heat_into_bath / self.temperature,
        )


@dataclass(frozen=True)
class VolumeRegister:
    left: float = 0.5
    right: float = 0.5

    def __post_init__(self):
        for v in (self.left, self.right):
            if v < -TAU_EIG or v > 1 + TAU_EIG:
                raise ValueError(f"volume fraction {v} outside [0, 1]")
        if self.left + self.right > 1 + TAU_EIG:
            raise ValueError(f"volume fractions sum to {self.left + self.right} > 1")

    def volume(self, chamber: str) -> float:
        return {"L": self.left, "R": self.right}[_chamber(chamber)]

    def with_volume(self, chamber: str, v: float) -> "VolumeRegister":
        return replace(self, **{"left" if _chamber(chamber) == "L" else "right": v})

    def matches(self, other: "VolumeRegister", tol: float = 1e-9) -> bool:
        return abs(self.left - other.left) <= tol and abs(self.right - other.right) <= tol


@dataclass(frozen=True)
class WorkEntry:
    step_id: str
    work: float = 0.0
    heat: float = 0.0
    dS_bath: float = 0.0
    dS_spatial: float = 0.0
    nonphysical: bool = False


@dataclass
class WorkLedger:
    entries: list[WorkEntry] = field(default_factory=list)

    def add(self, entry: WorkEntry) -> None:
        self.entries.append(entry)

    @property
    def cumulative_work_extracted(self) -> float:
        return math.fsum(e.work for e in self.entries)

    @property
    def cumulative_heat(self) -> float:
        return math.fsum(e.heat for e in self.entries)


def _chamber(c: str) -> str:
    if c not in CHAMBERS:
        raise ValueError(f"unknown chamber {c!r}; expected L or R")
    return c


def other(chamber: str) -> str:
    return "R" if _chamber(chamber) == "L" else "L"


def spatial_entropy(reg: VolumeRegister, occupancy: Mapping[str, float], kb: float = 1.0) -> float:
    """k_B sum_c p_c ln v_c over occupied chambers: the volume part of the gas entropy.

    The which-chamber part lives in the quantum position factor.
    """
    s = 0.0
    for c in CHAMBERS:
        p = occupancy.get(c, 0.0)
        if p > OCCUPANCY_TOL:
            v = reg.volume(c)
            if v <= 0:
                raise Singularity(f"occupied chamber {c} has zero volume")
            s += p * math.log(v)
    return kb * s


def isothermal_volume_change(reg: VolumeRegister, chamber: str, v_from: float, v_to: float,
                             bath: BathModel, occupancy: float, step_id: str = ""):
    """Quasi-static isothermal change of an occupied chamber.

    ``occupancy`` is the number of particles (or probability mass) in the chamber.
    Returns the updated register, bath and the work entry.
    """
    if abs(reg.volume(chamber) - v_from) > TAU_EIG:
        raise ValueError(f"chamber {chamber} has volume {reg.volume(chamber)}, not {v_from}")
    if occupancy <= OCCUPANCY_TOL:
        raise EmptyChamber(f"chamber {chamber} is empty; use compress_vacuum")
    if v_to <= 0:
        raise Singularity(f"cannot compress occupied chamber {chamber} to zero volume")
    if v_from <= 0 or v_to > 1:
        raise ValueError(f"volumes must lie in (0, 1], got {v_from} -> {v_to}")
    ds = bath.kb * occupancy * math.log(v_to / v_from)
    q = bath.temperature * ds
    new_reg = reg.with_volume(chamber, v_to)
    return new_reg, bath.absorb(-q), WorkEntry(step_id, work=q, heat=q, dS_bath=-ds, dS_spatial=ds)


def compress_vacuum(reg: VolumeRegister, chamber: str, bath: BathModel, occupancy: float,
                    v_to: float = 0.0, step_id: str = ""):
    """Move the wall of an empty chamber; no work, heat or entropy change."""
    if occupancy > OCCUPANCY_TOL:
        raise OccupiedChamber(f"chamber {chamber} holds occupancy {occupancy:.6g}")
    if not 0 <= v_to <= 1:
        raise ValueError(f"target volume {v_to} outside [0, 1]")
    return reg.with_volume(chamber, v_to), bath, WorkEntry(step_id)


def extract_work_known_position(reg: VolumeRegister, bath: BathModel, record: str | None,
                                step_id: str = ""):
    """Let the particle, known to be in chamber ``record``, push the partition to the far wall."""
    if record is None:
        raise UnknownPosition("no position record: work extraction refused")
    c = _chamber(record)
    if abs(reg.left - 0.5) > TAU_EIG or abs(reg.right - 0.5) > TAU_EIG:
        raise PartitionError(f"partition must sit at the midpoint, volumes are {reg}")
    v_from = reg.volume(c)
    v_to = v_from + reg.volume(other(c))
    ds = bath.kb * math.log(v_to / v_from)
    w = bath.temperature * ds
    new_reg = reg.with_volume(other(c), 0.0).with_volume(c, v_to)
    return new_reg, bath.absorb(-w), WorkEntry(step_id, work=w, heat=w, dS_bath=-ds, dS_spatial=ds)


def remove_partition(reg: VolumeRegister) -> VolumeRegister:
    """Merge both chambers into L; leftover container space becomes the empty chamber R."""
    merged = reg.left + reg.right
    return VolumeRegister(merged, max(0.0, 1.0 - merged))


def insert_partition(reg: VolumeRegister) -> VolumeRegister:
    if reg.right > TAU_EIG:
        raise PartitionError("a partition is already present (chamber R has volume)")
    return VolumeRegister(reg.left / 2, reg.left / 2)


def landauer_reset(apparatus: str, rho: DensityState, bath: BathModel, step_id: str = ""):
    """Restore ``apparatus`` to ready, paying k_B T H(q) where q is its pointer distribution."""
    spec = rho.layout.spec(apparatus)
    q = pointer_distribution(rho, [apparatus])
    ds_bath = shannon_entropy(q, bath.kb)
    heat_out = bath.temperature * ds_bath
    new = replace_factor(rho, apparatus, spec.ready)
    return new, bath.absorb(heat_out), WorkEntry(step_id, work=-heat_out, heat=-heat_out, dS_bath=ds_bath)


def present_records(rho: DensityState, apparatus: str) -> list[str]:
    q = pointer_distribution(rho, [apparatus])
    return [p for p in rho.layout.spec(apparatus).pointer_basis if q[p] > TAU_TRACE]


def reset_unitary(rho: DensityState, apparatus: str, record: str) -> UnitaryOp:
    """Swap a single known record state with the ready state."""
    spec = rho.layout.spec(apparatus)
    perm = np.eye(spec.dimension)
    i, j = spec.index(record), spec.index(spec.ready)
    perm[[i, j]] = perm[[j, i]]
    return UnitaryOp(rho.layout, embed(rho.layout, {apparatus: perm}))


def unitary_reset_attempt(apparatus: str, rho: DensityState, bath: BathModel,
                          permit_infeasible_reset: bool = False, step_id: str = ""):
    """Reset by a unitary if the record states present allow it.

    With ``permit_infeasible_reset`` an impossible reset is performed anyway
    at zero cost and the entry is tagged nonphysical.
    """
    spec = rho.layout.spec(apparatus)
    records = present_records(rho, apparatus)
    ready = basis_vector(spec, spec.ready)
    problem = ResetProblem(tuple(basis_vector(spec, r) for r in records), tuple(ready for _ in records))
    verdict = unitary_reset_feasible(problem)
    if verdict.feasible:
        if records and records[0] != spec.ready:
            u = reset_unitary(rho, apparatus, records[0])
            m = u.matrix @ rho.matrix @ u.matrix.conj().T
            rho = DensityState(rho.layout, m)
        return rho, bath, WorkEntry(step_id)
    if not permit_infeasible_reset:
        raise ResetInfeasible(
            f"{apparatus} holds {len(records)} orthogonal records {records}; no unitary maps them "
            f"all to {spec.ready!r} (Gram discrepancy {verdict.discrepancy:.3g})"
        )
    return replace_factor(rho, apparatus, spec.ready), bath, WorkEntry(step_id, nonphysical=True)
