"""Finite-dimensional density operators on labelled tensor-product spaces.

Matrices are stored in the product pointer basis, factors in roster order,
row-major over the lexicographic product of the pointer bases.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import LayoutConflict, NotUnitary, NumericalFailure, UnknownSubsystem, InvalidMeasurement

TAU_HERM = 1e-10
TAU_TRACE = 1e-10
TAU_UNITARY = 1e-10
TAU_PSD = 1e-10
TAU_EIG = 1e-9

ROLES = ("spin", "position", "apparatus", "ancilla")


@dataclass(frozen=True)
class SubsystemSpec:
    label: str
    role: str
    pointer_basis: tuple[str, ...]
    ready: str | None = None
    records: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "pointer_basis", tuple(self.pointer_basis))
        if self.records is not None:
            object.__setattr__(self, "records", tuple(self.records))
        if not self.label:
            raise ValueError("empty subsystem label")
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}; expected one of {ROLES}")
        if len(set(self.pointer_basis)) != len(self.pointer_basis):
            raise ValueError(f"{self.label}: pointer basis entries must be distinct")
        min_dim = 1 if self.role == "ancilla" else 2
        if self.dimension < min_dim:
            raise ValueError(f"{self.label}: dimension {self.dimension} < {min_dim}")
        if self.role == "apparatus" and self.ready is None:
            object.__setattr__(self, "ready", self.pointer_basis[0])
        if self.ready is not None and self.ready not in self.pointer_basis:
            raise ValueError(f"{self.label}: ready state {self.ready!r} not in pointer basis")
        for r in self.records or ():
            if r not in self.pointer_basis:
                raise ValueError(f"{self.label}: record {r!r} not in pointer basis")

    @property
    def dimension(self) -> int:
        return len(self.pointer_basis)

    def index(self, pointer: str) -> int:
        try:
            return self.pointer_basis.index(pointer)
        except ValueError:
            raise KeyError(f"{self.label} has no pointer state {pointer!r}") from None

    def record_states(self, source_dim: int) -> tuple[str, ...]:
        """Record pointer for each source pointer index, ready state first in roster order."""
        if self.records is not None:
            recs = self.records
        elif self.dimension >= source_dim + 1:
            recs = tuple(p for p in self.pointer_basis if p != self.ready)
        else:
            recs = self.pointer_basis
        if len(recs) < source_dim:
            raise LayoutConflict(
                f"apparatus {self.label} has {len(recs)} record states, source needs {source_dim}"
            )
        return recs[:source_dim]


@dataclass(frozen=True)
class SystemLayout:
    subsystems: tuple[SubsystemSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "subsystems", tuple(self.subsystems))
        labels = [s.label for s in self.subsystems]
        if len(set(labels)) != len(labels):
            raise LayoutConflict(f"duplicate subsystem labels in {labels}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.subsystems)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.dimension for s in self.subsystems)

    @property
    def total_dimension(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.subsystems else 1

    def position(self, label: str) -> int:
        for i, s in enumerate(self.subsystems):
            if s.label == label:
                return i
        raise UnknownSubsystem(f"unknown subsystem {label!r}; layout has {list(self.labels)}")

    def spec(self, label: str) -> SubsystemSpec:
        return self.subsystems[self.position(label)]

    def restrict(self, labels: Iterable[str]) -> "SystemLayout":
        wanted = set(labels)
        for lab in wanted:
            self.position(lab)
        return SystemLayout(tuple(s for s in self.subsystems if s.label in wanted))

    def basis_labels(self) -> list[tuple[str, ...]]:
        """Product pointer-basis labels in storage order."""
        out: list[tuple[str, ...]] = [()]
        for s in self.subsystems:
            out = [prefix + (p,) for prefix in out for p in s.pointer_basis]
        return out


def _as_matrix(m, n: int | None = None) -> np.ndarray:
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise LayoutConflict(f"matrix dimension {arr.shape[0]} does not match layout dimension {n}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DensityState:
    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_matrix(self.matrix, self.layout.total_dimension))

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    def allclose(self, other: "DensityState", atol: float = TAU_EIG) -> bool:
        return self.layout == other.layout and np.allclose(self.matrix, other.matrix, atol=atol, rtol=0)


@dataclass(frozen=True, eq=False)
class UnitaryOp:
    layout: SystemLayout
    matrix: np.ndarray

    def __post_init__(self):
        m = _as_matrix(self.matrix, self.layout.total_dimension)
        defect = np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0])))
        if defect > TAU_UNITARY:
            raise NotUnitary(f"U U^dagger deviates from identity by {defect:.3g}")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True, eq=False)
class ProjectiveMeasurement:
    target: str
    projectors: tuple[tuple[str, np.ndarray], ...]

    def __post_init__(self):
        projs = tuple((str(lab), _as_matrix(p)) for lab, p in self.projectors)
        object.__setattr__(self, "projectors", projs)
        if not projs:
            raise InvalidMeasurement("empty projector set")
        d = projs[0][1].shape[0]
        total = np.zeros((d, d), dtype=complex)
        for lab, p in projs:
            if p.shape != (d, d):
                raise InvalidMeasurement(f"projector {lab!r} has shape {p.shape}, expected {(d, d)}")
            if np.max(np.abs(p - p.conj().T)) > TAU_HERM:
                raise InvalidMeasurement(f"projector {lab!r} is not Hermitian")
            if np.max(np.abs(p @ p - p)) > TAU_EIG:
                raise InvalidMeasurement(f"projector {lab!r} is not idempotent")
            total = total + p
        for i, (la, pa) in enumerate(projs):
            for lb, pb in projs[i + 1:]:
                if np.max(np.abs(pa @ pb)) > TAU_EIG:
                    raise InvalidMeasurement(f"projectors {la!r} and {lb!r} are not orthogonal")
        if np.max(np.abs(total - np.eye(d))) > TAU_EIG:
            raise InvalidMeasurement("projectors do not sum to the identity")

    @property
    def dimension(self) -> int:
        return self.projectors[0][1].shape[0]

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lab for lab, _ in self.projectors)


@dataclass(frozen=True)
class ValidationReport:
    hermiticity_defect: float
    min_eigenvalue: float
    trace_defect: float
    passed: bool = field(init=False)

    def __post_init__(self):
        ok = (
            self.hermiticity_defect <= TAU_HERM
            and self.min_eigenvalue >= -TAU_PSD
            and self.trace_defect <= TAU_TRACE
        )
        object.__setattr__(self, "passed", bool(ok))

    @property
    def failures(self) -> list[str]:
        out = []
        if self.hermiticity_defect > TAU_HERM:
            out.append("hermiticity")
        if self.min_eigenvalue < -TAU_PSD:
            out.append("negative eigenvalue")
        if self.trace_defect > TAU_TRACE:
            out.append("trace")
        return out


# ---------------------------------------------------------------- constructors

def spin_half(label: str = "spin", basis: Sequence[str] = ("+z", "-z")) -> SubsystemSpec:
    return SubsystemSpec(label, "spin", tuple(basis))


def position(label: str = "pos") -> SubsystemSpec:
    return SubsystemSpec(label, "position", ("L", "R"))


def apparatus(label: str, basis: Sequence[str], ready: str | None = None,
              records: Sequence[str] | None = None) -> SubsystemSpec:
    return SubsystemSpec(label, "apparatus", tuple(basis), ready=ready,
                         records=None if records is None else tuple(records))


def layout(*subsystems: SubsystemSpec) -> SystemLayout:
    return SystemLayout(tuple(subsystems))


def projector(vec) -> np.ndarray:
    v = np.asarray(vec, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def basis_vector(spec: SubsystemSpec, pointer: str) -> np.ndarray:
    v = np.zeros(spec.dimension, dtype=complex)
    v[spec.index(pointer)] = 1.0
    return v


def pure_state(lay: SystemLayout, vector) -> DensityState:
    v = np.asarray(vector, dtype=complex).reshape(-1)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("zero vector")
    return DensityState(lay, projector(v / norm))


def product_state(lay: SystemLayout, factors: Mapping[str, object]) -> DensityState:
    """Product state from per-label factors.

    Each factor is a pointer name, a state vector, or a density matrix on
    that subsystem. Missing labels default to the first pointer state (the
    ready state for apparatus registers).
    """
    unknown = set(factors) - set(lay.labels)
    if unknown:
        raise UnknownSubsystem(f"unknown subsystems {sorted(unknown)}")
    rho = np.ones((1, 1), dtype=complex)
    for s in lay.subsystems:
        f = factors.get(s.label, s.ready or s.pointer_basis[0])
        rho = np.kron(rho, factor_matrix(s, f))
    return DensityState(lay, rho)


def factor_matrix(spec: SubsystemSpec, f) -> np.ndarray:
    if isinstance(f, str):
        return projector(basis_vector(spec, f))
    arr = np.asarray(f, dtype=complex)
    if arr.ndim == 1:
        if arr.shape[0] != spec.dimension:
            raise LayoutConflict(f"{spec.label}: vector length {arr.shape[0]} != {spec.dimension}")
        return projector(arr / np.linalg.norm(arr))
    if arr.shape != (spec.dimension, spec.dimension):
        raise LayoutConflict(f"{spec.label}: matrix shape {arr.shape} != {(spec.dimension,) * 2}")
    return arr


def maximally_mixed(lay: SystemLayout) -> DensityState:
    d = lay.total_dimension
    return DensityState(lay, np.eye(d) / d)


def embed(lay: SystemLayout, ops: Mapping[str, np.ndarray]) -> np.ndarray:
    """Full-space operator acting as ``ops[label]`` on each named factor, identity elsewhere."""
    for lab in ops:
        lay.position(lab)
    out = np.ones((1, 1), dtype=complex)
    for s in lay.subsystems:
        op = ops.get(s.label)
        out = np.kron(out, np.eye(s.dimension) if op is None else np.asarray(op, dtype=complex))
    return out


def controlled_operator(lay: SystemLayout, control: str, target: str,
                        blocks: Mapping[str, np.ndarray]) -> np.ndarray:
    """Sum over control pointer states c of |c><c| (x) blocks[c] on target; identity for absent c."""
    cspec, tspec = lay.spec(control), lay.spec(target)
    if control == target:
        raise LayoutConflict("control and target must differ")
    out = np.zeros((lay.total_dimension,) * 2, dtype=complex)
    for c in cspec.pointer_basis:
        block = blocks.get(c, np.eye(tspec.dimension))
        out += embed(lay, {control: projector(basis_vector(cspec, c)), target: block})
    return out


# ---------------------------------------------------------------- operations

def tensor(a: DensityState, b: DensityState) -> DensityState:
    clash = set(a.labels) & set(b.labels)
    if clash:
        raise LayoutConflict(f"label collision: {sorted(clash)}")
    lay = SystemLayout(a.layout.subsystems + b.layout.subsystems)
    return DensityState(lay, np.kron(a.matrix, b.matrix))


def partial_trace(rho: DensityState, keep: Iterable[str]) -> DensityState:
    keep = set(keep)
    if not keep:
        raise ValueError("keep must be a nonempty set of labels")
    for lab in keep:
        rho.layout.position(lab)
    lay = rho.layout
    if keep == set(lay.labels):
        return rho
    n = len(lay.subsystems)
    letters = string.ascii_letters
    if 2 * n > len(letters):
        raise ValueError("too many subsystems for einsum partial trace")
    row = list(letters[:n])
    col = list(letters[n:2 * n])
    out_row, out_col = [], []
    for i, s in enumerate(lay.subsystems):
        if s.label in keep:
            out_row.append(row[i])
            out_col.append(col[i])
        else:
            col[i] = row[i]
    t = rho.matrix.reshape(lay.dims * 2)
    reduced = np.einsum("".join(row + col) + "->" + "".join(out_row + out_col), t)
    sub = lay.restrict(keep)
    d = sub.total_dimension
    return DensityState(sub, reduced.reshape(d, d))


def apply_unitary(rho: DensityState, u: UnitaryOp) -> DensityState:
    if u.layout != rho.layout:
        raise LayoutConflict("unitary and state layouts differ")
    m = u.matrix @ rho.matrix @ u.matrix.conj().T
    return DensityState(rho.layout, 0.5 * (m + m.conj().T))


def validate(rho: DensityState) -> ValidationReport:
    m = rho.matrix
    herm = float(np.max(np.abs(m - m.conj().T))) if m.size else 0.0
    evals = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    return ValidationReport(herm, float(evals.min()), float(abs(np.trace(m).real - 1.0) + abs(np.trace(m).imag)))


def _hermitian_eigvals(m: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc


def trace_distance(a: DensityState, b: DensityState) -> float:
    if a.layout != b.layout:
        raise LayoutConflict("trace distance needs identical layouts")
    d = 0.5 * float(np.sum(np.abs(_hermitian_eigvals(a.matrix - b.matrix))))
    return min(max(d, 0.0), 1.0)


def spectrum(rho: DensityState) -> np.ndarray:
    """Eigenvalues in descending order, clamped to [0, 1]."""
    w = _hermitian_eigvals(rho.matrix)[::-1]
    w = np.where((w < 0) & (w > -TAU_PSD), 0.0, w)
    return np.clip(w, 0.0, 1.0)


def mix(states: Sequence[DensityState], weights: Sequence[float]) -> DensityState:
    """Convex combination of states sharing one layout."""
    if not states:
        raise ValueError("nothing to mix")
    lay = states[0].layout
    m = np.zeros((lay.total_dimension,) * 2, dtype=complex)
    for s, w in zip(states, weights):
        if s.layout != lay:
            raise LayoutConflict("mixed states must share a layout")
        m = m + w * s.matrix
    return DensityState(lay, m)


def replace_factor(rho: DensityState, label: str, factor: np.ndarray) -> DensityState:
    """Trace out ``label`` and put ``factor`` back in its roster slot."""
    lay = rho.layout
    i = lay.position(label)
    spec = lay.subsystems[i]
    f = factor_matrix(spec, factor)
    if len(lay.subsystems) == 1:
        return DensityState(lay, f)
    rest = partial_trace(rho, [l for l in lay.labels if l != label])
    # move the new factor to the end then permute back to roster order
    joined = np.kron(rest.matrix, f)
    order = [l for l in lay.labels if l != label] + [label]
    return DensityState(lay, permute(joined, [lay.spec(l).dimension for l in order],
                                     [order.index(l) for l in lay.labels]))


def permute(m: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    """Reorder tensor factors: new factor k is old factor perm[k]."""
    n = len(dims)
    t = m.reshape(tuple(dims) * 2)
    t = t.transpose(list(perm) + [p + n for p in perm])
    d = int(np.prod(dims))
    return t.reshape(d, d)
