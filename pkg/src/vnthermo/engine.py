"""Protocol execution over weighted branches, the entropy ledger, and the second-law audit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from . import channels, thermo
from .entropy import classical_conditional_entropy, pointer_distribution, shannon_entropy, von_neumann_entropy
from .errors import OccupiedChamber, PartitionError, ProtocolError, StepError, UnknownPosition
from .qcore import (
    TAU_TRACE,
    DensityState,
    SystemLayout,
    UnitaryOp,
    apply_unitary,
    embed,
    factor_matrix,
    mix,
    partial_trace,
    replace_factor,
    trace_distance,
)
from .thermo import BathModel, VolumeRegister, WorkEntry

TAU_AUDIT = 1e-8
CLOSURE_TOL = 1e-9
DEFINITE = 1 - 1e-8
MODES = ("collapse", "no-collapse")

# kind -> (required params, optional params with defaults)
STEP_SCHEMA: dict[str, tuple[tuple[str, ...], dict[str, Any]]] = {
    "Prepare": (("factors",), {"volumes": {"L": 0.5, "R": 0.5}}),
    "ApplyUnitary": (("op",), {"source": None, "apparatus": None, "control": None, "target": None,
                               "mapping": None, "state": None, "matrix": None}),
    "NonSelectiveMeasure": (("target",), {"basis": "pointer"}),
    "SelectiveMeasure": (("target",), {"apparatus": None, "basis": "pointer"}),
    "CoupleApparatus": (("source", "apparatus"), {}),
    "Separate": (("spin", "position"), {}),
    "IsothermalVolume": (("chamber", "v_from", "v_to"), {"position": None}),
    "CompressVacuum": (("chamber",), {"v_to": 0.0, "record": None, "position": None}),
    "ExtractWorkKnownPosition": ((), {"record": None, "position": None}),
    "LandauerReset": (("apparatus",), {}),
    "UnitaryResetAttempt": (("apparatus",), {}),
    "RemovePartition": ((), {"position": None}),
    "InsertPartition": ((), {"position": None}),
}
UNITARY_OPS = ("coupling", "conditional_rotation", "matrix", "hadamard", "pauli_x")
LABEL_PARAMS = ("target", "source", "apparatus", "spin", "position", "record", "control")


@dataclass(frozen=True)
class Step:
    kind: str
    id: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def get(self, name: str):
        required, optional = STEP_SCHEMA[self.kind]
        if name in self.params:
            return self.params[name]
        if name in optional:
            return optional[name]
        raise KeyError(name)


@dataclass(frozen=True)
class RunConfig:
    temperature: float = 1.0
    kb: float = 1.0
    mode: str = "collapse"
    permit_infeasible_reset: bool = False
    cycles: int = 1
    seed: int = 42
    particles: int = 1
    system: tuple[str, ...] | None = None
    memory: str | None = None
    position: str | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ProtocolError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.cycles < 0 or self.particles < 1:
            raise ProtocolError("cycles must be >= 0 and particles >= 1")
        if not self.temperature > 0 or not self.kb > 0:
            raise ProtocolError("temperature and kb must be positive")
        if self.system is not None:
            object.__setattr__(self, "system", tuple(self.system))


@dataclass(frozen=True)
class Protocol:
    name: str
    layout: SystemLayout
    steps: tuple[Step, ...]
    config: RunConfig = RunConfig()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def with_config(self, **changes) -> "Protocol":
        return replace(self, config=replace(self.config, **changes))

    def system_labels(self) -> tuple[str, ...]:
        if self.config.system is not None:
            return self.config.system
        return tuple(s.label for s in self.layout.subsystems if s.role in ("spin", "position"))

    def position_label(self) -> str | None:
        if self.config.position is not None:
            return self.config.position
        for s in self.layout.subsystems:
            if s.role == "position":
                return s.label
        return None

    def validate(self) -> None:
        labels = set(self.layout.labels)
        ids = set()
        for i, step in enumerate(self.steps):
            where = f"steps[{i}] ({step.id})"
            if step.kind not in STEP_SCHEMA:
                raise ProtocolError(f"{where}: unknown step kind {step.kind!r}")
            if step.id in ids:
                raise ProtocolError(f"{where}: duplicate step id")
            ids.add(step.id)
            required, optional = STEP_SCHEMA[step.kind]
            for r in required:
                if r not in step.params:
                    raise ProtocolError(f"{where}: missing parameter {r!r}")
            for k in step.params:
                if k not in required and k not in optional:
                    raise ProtocolError(f"{where}: unknown parameter {k!r}")
            for k in LABEL_PARAMS:
                v = step.params.get(k)
                if v is not None and v not in labels:
                    raise ProtocolError(f"{where}: {k}={v!r} is not a subsystem of the layout")
            if step.kind == "Prepare":
                if i != 0:
                    raise ProtocolError(f"{where}: Prepare may only be the first step")
                unknown = set(step.params["factors"]) - labels
                if unknown:
                    raise ProtocolError(f"{where}: unknown subsystems {sorted(unknown)}")
            if step.kind == "ApplyUnitary" and step.params["op"] not in UNITARY_OPS:
                raise ProtocolError(f"{where}: unknown unitary op {step.params['op']!r}")
            if step.kind == "SelectiveMeasure" and self.config.mode == "no-collapse" \
                    and step.params.get("apparatus") is None:
                raise ProtocolError(f"{where}: no-collapse mode needs an apparatus for selective measurement")
            if step.kind in ("IsothermalVolume", "CompressVacuum", "ExtractWorkKnownPosition",
                             "RemovePartition", "InsertPartition"):
                if (step.params.get("position") or self.position_label()) is None:
                    raise ProtocolError(f"{where}: layout has no position subsystem")
        for lab in self.system_labels():
            if lab not in labels:
                raise ProtocolError(f"config.system: unknown subsystem {lab!r}")
        if self.config.memory is not None and self.config.memory not in labels:
            raise ProtocolError(f"config.memory: unknown subsystem {self.config.memory!r}")


@dataclass(frozen=True)
class Branch:
    probability: float
    state: DensityState
    volume: VolumeRegister
    records: tuple[tuple[str, str], ...] = ()
    holding: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Metrics:
    probability: float
    S_system: float
    S_joint: float
    H_cond: float
    S_all: float
    S_spatial: float
    dS_bath: float = 0.0
    Q: float = 0.0
    W: float = 0.0


@dataclass(frozen=True)
class LedgerRow:
    cycle: int
    step_id: str
    step_kind: str
    branches: tuple[Metrics, ...]
    avg: Metrics
    S_system_branch_mean: float
    S_joint_branch_mean: float
    dS_total: float
    S_total_running: float
    W_running: float
    dS_bath_running: float
    flags: tuple[str, ...] = ()
    branch_labels: tuple[str, ...] = ()


@dataclass
class Ledger:
    protocol: str
    mode: str
    seed: int
    rows: list[LedgerRow] = field(default_factory=list)

    def column(self, name: str, step_id: str | None = None) -> list[float]:
        return [getattr(r.avg, name) for r in self.rows if step_id is None or r.step_id == step_id]

    def rows_for(self, step_id: str) -> list[LedgerRow]:
        return [r for r in self.rows if r.step_id == step_id]

    @property
    def net_work(self) -> float:
        return math.fsum(r.avg.W for r in self.rows)

    @property
    def net_bath_entropy(self) -> float:
        return math.fsum(r.avg.dS_bath for r in self.rows)


@dataclass
class RunResult:
    protocol: Protocol
    ledger: Ledger
    branches: list[Branch]
    initial: DensityState | None
    initial_volume: VolumeRegister | None
    bath: BathModel
    completed: bool = True

    def averaged_state(self) -> DensityState:
        return mix([b.state for b in self.branches], [b.probability for b in self.branches])


@dataclass(frozen=True)
class ClosureVerdict:
    closed: bool
    distance: float
    volumes_match: bool


@dataclass(frozen=True)
class AuditReport:
    margins: tuple[tuple[int, str, float], ...]
    closure: ClosureVerdict
    kelvin_planck: str  # "OK", "VIOLATION" or "UNDECIDED" (cycle not closed)
    net_work: float
    net_bath_entropy: float
    violations: tuple[str, ...]
    nonphysical: tuple[str, ...]

    @property
    def status(self) -> str:
        if self.violations:
            return "VIOLATION"
        if self.nonphysical:
            return "NONPHYSICAL"
        return "CLEAN"


# ---------------------------------------------------------------- preparation

def prepare_state(lay: SystemLayout, factors: Mapping[str, Any]) -> DensityState:
    """Product state from a Prepare factor (pointer name, amplitudes or pointer probabilities)."""
    rho = np.ones((1, 1), dtype=complex)
    for s in lay.subsystems:
        f = factors.get(s.label, s.ready or s.pointer_basis[0])
        rho = np.kron(rho, factor_matrix(s, _factor_value(s.label, f)))
    return DensityState(lay, rho)


def _factor_value(label: str, f):
    if isinstance(f, str):
        return f
    if isinstance(f, Mapping):
        if set(f) == {"amplitudes"}:
            return np.array([_complex(a) for a in f["amplitudes"]])
        if set(f) == {"probabilities"}:
            return np.diag(np.array(f["probabilities"], dtype=float)).astype(complex)
    raise ProtocolError(f"factor {label!r}: expected a pointer name, {{'amplitudes': ...}} "
                        f"or {{'probabilities': ...}}, got {f!r}")


def _complex(a) -> complex:
    if isinstance(a, (list, tuple)):
        return complex(a[0], a[1])
    return complex(a)


# ---------------------------------------------------------------- metrics

class _Observer:
    def __init__(self, protocol: Protocol):
        p = protocol
        self.kb = p.config.kb
        self.scale = p.config.particles
        self.system = set(p.system_labels())
        self.memory = p.config.memory
        self.position = p.position_label()
        self.joint = self.system | ({self.memory} if self.memory else set())

    def occupancy(self, rho: DensityState) -> dict[str, float]:
        if self.position is None:
            return {}
        return _flat(pointer_distribution(rho, [self.position]))

    def entropies(self, rho: DensityState, volume: VolumeRegister | None) -> tuple[float, ...]:
        kb = self.kb
        s_sys = von_neumann_entropy(partial_trace(rho, self.system), kb) if self.system else 0.0
        s_joint = von_neumann_entropy(partial_trace(rho, self.joint), kb) if self.joint else 0.0
        if self.position and self.memory:
            pd = pointer_distribution(rho, [self.position, self.memory])
            h = classical_conditional_entropy(pd, [self.position], [self.memory], kb)
        elif self.position:
            h = shannon_entropy(pointer_distribution(rho, [self.position]), kb)
        else:
            h = 0.0
        s_all = von_neumann_entropy(rho, kb)
        s_sp = 0.0
        if self.position and volume is not None:
            s_sp = thermo.spatial_entropy(volume, self.occupancy(rho), kb)
        return s_sys, s_joint, h, s_all, s_sp

    def branch_metrics(self, b: Branch, entry: WorkEntry) -> Metrics:
        n = self.scale
        s_sys, s_joint, h, s_all, s_sp = self.entropies(b.state, b.volume)
        return Metrics(b.probability, n * s_sys, n * s_joint, n * h, n * s_all, n * s_sp,
                       n * entry.dS_bath, n * entry.heat, n * entry.work)

    def register_entropy(self, branches: Sequence[Branch]) -> float:
        """Entropy of the full state with the chamber volumes held as a classical register.

        Branches whose pistons sit differently are perfectly distinguishable, so
        the mixture is block diagonal in the volume register.
        """
        groups: dict[tuple, list[Branch]] = {}
        for b in branches:
            groups.setdefault((round(b.volume.left, 12), round(b.volume.right, 12)), []).append(b)
        weights = [math.fsum(b.probability for b in g) for g in groups.values()]
        total = shannon_entropy(np.array(weights) / math.fsum(weights), self.kb) if len(groups) > 1 else 0.0
        for w, g in zip(weights, groups.values()):
            rho = mix([b.state for b in g], [b.probability / w for b in g])
            total += w * von_neumann_entropy(rho, self.kb)
        return total

    def average_metrics(self, branches: Sequence[Branch], per_branch: Sequence[Metrics]) -> Metrics:
        n = self.scale
        avg_state = mix([b.state for b in branches], [b.probability for b in branches])
        s_sys, s_joint, h, _, _ = self.entropies(avg_state, None)
        s_all = self.register_entropy(branches)
        w = [m.probability for m in per_branch]
        return Metrics(
            1.0, n * s_sys, n * s_joint, n * h, n * s_all,
            math.fsum(p * m.S_spatial for p, m in zip(w, per_branch)),
            math.fsum(p * m.dS_bath for p, m in zip(w, per_branch)),
            math.fsum(p * m.Q for p, m in zip(w, per_branch)),
            math.fsum(p * m.W for p, m in zip(w, per_branch)),
        )


def _flat(pd) -> dict[str, float]:
    return {k[0]: v for k, v in pd.as_dict().items()}


# ---------------------------------------------------------------- step execution

class _Runner:
    def __init__(self, protocol: Protocol):
        self.p = protocol
        self.cfg = protocol.config
        self.lay = protocol.layout
        self.bath = BathModel(self.cfg.temperature, self.cfg.kb)

    def position(self, step: Step) -> str:
        return step.get("position") or self.p.position_label()

    def occupancy(self, b: Branch, pos: str) -> dict[str, float]:
        return _flat(pointer_distribution(b.state, [pos]))

    # each handler: (branches, step) -> list of (branch, entry)
    def execute(self, branches: list[Branch], step: Step) -> list[tuple[Branch, WorkEntry]]:
        handler = getattr(self, "_do_" + step.kind)
        return handler(branches, step)

    def _per_branch_unitary(self, branches, step, u: UnitaryOp):
        out = []
        pos = self.p.position_label()
        for b in branches:
            new = apply_unitary(b.state, u)
            if pos is not None and abs(b.volume.left - b.volume.right) > 1e-12:
                before, after = self.occupancy(b, pos), _flat(pointer_distribution(new, [pos]))
                if any(abs(before[c] - after[c]) > TAU_TRACE for c in thermo.CHAMBERS):
                    # a unitary shuttle between unequal chambers would change the spatial entropy for free
                    raise PartitionError(
                        f"unitary moves the particle between chambers of unequal volume {b.volume}")
            out.append((replace(b, state=new), WorkEntry(step.id)))
        return out

    def _do_ApplyUnitary(self, branches, step):
        op = step.get("op")
        lay = self.lay
        if op == "coupling":
            u = channels.coupling_unitary(lay, step.get("source"), step.get("apparatus"))
            app = step.get("apparatus")
            out = self._per_branch_unitary(branches, step, u)
            return [(replace(b, holding=b.holding ^ {app}), e) for b, e in out]
        if op == "conditional_rotation":
            state = np.array([_complex(a) for a in step.get("state")])
            u = channels.conditional_rotation(lay, step.get("control"), step.get("target"),
                                              dict(step.get("mapping")), state)
        elif op in ("hadamard", "pauli_x", "matrix"):
            target = step.get("target")
            if op == "hadamard":
                m = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
            elif op == "pauli_x":
                m = np.array([[0, 1], [1, 0]])
            else:
                m = np.array([[_complex(x) for x in row] for row in step.get("matrix")])
            u = UnitaryOp(lay, embed(lay, {target: m}))
        return self._per_branch_unitary(branches, step, u)

    def _measurement(self, step):
        basis = step.get("basis")
        target = step.get("target")
        if basis == "pointer":
            return channels.pointer_measurement(self.lay, target)
        if basis == "x":
            v = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
            return channels.basis_measurement(target, ("+x", "-x"), [v[0], v[1]])
        raise ProtocolError(f"unknown measurement basis {basis!r}")

    def _do_NonSelectiveMeasure(self, branches, step):
        m = self._measurement(step)
        return [(replace(b, state=channels.nonselective_measure(b.state, m)), WorkEntry(step.id))
                for b in branches]

    def _do_SelectiveMeasure(self, branches, step):
        app = step.get("apparatus")
        target = step.get("target")
        out = []
        for b in branches:
            if app is not None:
                b = replace(b, state=channels.couple_apparatus(b.state, target, app),
                            holding=b.holding | {app})
                if self.cfg.mode == "no-collapse":
                    out.append((b, WorkEntry(step.id)))
                    continue
                children = self._split(b, app, step.id, force=True)
            else:
                m = self._measurement(step)
                children = [
                    replace(b, probability=b.probability * o.probability, state=o.post_state,
                            records=b.records + ((step.id, o.label),))
                    for o in channels.selective_measure(b.state, m)
                ]
            out.extend((c, WorkEntry(step.id)) for c in children)
        return out

    def _do_CoupleApparatus(self, branches, step):
        app = step.get("apparatus")
        return [(replace(b, state=channels.couple_apparatus(b.state, step.get("source"), app),
                         holding=b.holding | {app}), WorkEntry(step.id)) for b in branches]

    def _do_Separate(self, branches, step):
        u = channels.separation_unitary(self.lay, step.get("spin"), step.get("position"))
        return self._per_branch_unitary(branches, step, u)

    def _split(self, b: Branch, apparatus: str, step_id: str, force: bool = False) -> list[Branch]:
        """Condition a branch on the record held by ``apparatus`` (relative-state decomposition)."""
        pd = _flat(pointer_distribution(b.state, [apparatus]))
        if not force and max(pd.values()) >= DEFINITE:
            return [b]
        m = channels.pointer_measurement(self.lay, apparatus)
        return [
            replace(b, probability=b.probability * o.probability, state=o.post_state,
                    records=b.records + ((step_id, o.label),))
            for o in channels.selective_measure(b.state, m)
        ]

    def _conditioned(self, branches, step) -> list[Branch]:
        record = step.get("record")
        if record is None:
            return list(branches)
        out = []
        for b in branches:
            if record not in b.holding:
                raise UnknownPosition(f"{record} holds no record")
            out.extend(self._split(b, record, step.id))
        return out

    def _do_IsothermalVolume(self, branches, step):
        """One chamber, or ``chamber="both"`` with per-chamber ``{"L": .., "R": ..}`` volumes.

        Under "both", an empty chamber has its wall moved for free.
        """
        pos = self.position(step)
        chamber = step.get("chamber")
        v_from, v_to = step.get("v_from"), step.get("v_to")
        if chamber == "both":
            targets = [(c, float(v_from[c]), float(v_to[c])) for c in thermo.CHAMBERS]
        else:
            targets = [(chamber, float(v_from), float(v_to))]
        out = []
        for b in branches:
            occ = self.occupancy(b, pos)
            vol, entries = b.volume, []
            for c, vf, vt in targets:
                if chamber == "both" and occ[c] <= thermo.OCCUPANCY_TOL:
                    if abs(vol.volume(c) - vf) > thermo.TAU_EIG:
                        raise ValueError(f"chamber {c} has volume {vol.volume(c)}, not {vf}")
                    vol, _, e = thermo.compress_vacuum(vol, c, self.bath, occ[c], vt, step.id)
                else:
                    vol, _, e = thermo.isothermal_volume_change(vol, c, vf, vt, self.bath, occ[c], step.id)
                entries.append(e)
            out.append((replace(b, volume=vol), WorkEntry(
                step.id, work=math.fsum(e.work for e in entries), heat=math.fsum(e.heat for e in entries),
                dS_bath=math.fsum(e.dS_bath for e in entries),
                dS_spatial=math.fsum(e.dS_spatial for e in entries))))
        return out

    def _do_CompressVacuum(self, branches, step):
        pos = self.position(step)
        chamber = step.get("chamber")
        out = []
        for b in self._conditioned(branches, step):
            occ = self.occupancy(b, pos)
            c = chamber
            if chamber == "empty":
                empty = [k for k in thermo.CHAMBERS if occ[k] <= thermo.OCCUPANCY_TOL]
                if not empty:
                    raise OccupiedChamber(f"no empty chamber: occupancy {occ}")
                c = empty[0]
            vol, _, entry = thermo.compress_vacuum(b.volume, c, self.bath, occ[c],
                                                   float(step.get("v_to")), step.id)
            out.append((replace(b, volume=vol), entry))
        return out

    def _do_ExtractWorkKnownPosition(self, branches, step):
        if step.get("record") is None:
            raise UnknownPosition("no selective position record: work extraction refused")
        pos = self.position(step)
        out = []
        for b in self._conditioned(branches, step):
            occ = self.occupancy(b, pos)
            known = [k for k in thermo.CHAMBERS if occ[k] >= DEFINITE]
            if not known:
                raise UnknownPosition(f"record does not fix the position (occupancy {occ})")
            vol, _, entry = thermo.extract_work_known_position(b.volume, self.bath, known[0], step.id)
            out.append((replace(b, volume=vol), entry))
        return out

    def _do_RemovePartition(self, branches, step):
        pos = self.position(step)
        spec = self.lay.spec(pos)
        return [(replace(b, volume=thermo.remove_partition(b.volume),
                         state=replace_factor(b.state, pos, "L" if "L" in spec.pointer_basis else spec.pointer_basis[0])),
                 WorkEntry(step.id)) for b in branches]

    def _do_InsertPartition(self, branches, step):
        pos = self.position(step)
        half = np.diag([0.5, 0.5]).astype(complex)
        return [(replace(b, volume=thermo.insert_partition(b.volume),
                         state=replace_factor(b.state, pos, half)), WorkEntry(step.id))
                for b in branches]

    def _do_LandauerReset(self, branches, step):
        app = step.get("apparatus")
        avg = mix([b.state for b in branches], [b.probability for b in branches])
        _, bath, entry = thermo.landauer_reset(app, avg, self.bath, step.id)
        ready = self.lay.spec(app).ready
        return [(replace(b, state=replace_factor(b.state, app, ready), holding=b.holding - {app}), entry)
                for b in branches]

    def _do_UnitaryResetAttempt(self, branches, step):
        app = step.get("apparatus")
        avg = mix([b.state for b in branches], [b.probability for b in branches])
        _, _, entry = thermo.unitary_reset_attempt(app, avg, self.bath,
                                                   self.cfg.permit_infeasible_reset, step.id)
        records = thermo.present_records(avg, app)
        out = []
        for b in branches:
            if entry.nonphysical:
                state = replace_factor(b.state, app, self.lay.spec(app).ready)
            elif records and records[0] != self.lay.spec(app).ready:
                state = apply_unitary(b.state, thermo.reset_unitary(b.state, app, records[0]))
            else:
                state = b.state
            out.append((replace(b, state=state, holding=b.holding - {app}), entry))
        return out


def branch_label(b: Branch) -> str:
    """Outcome history such as ``4-locate:L_m``; ``root`` before any split."""
    return "/".join(f"{sid}:{lab}" for sid, lab in b.records) or "root"


def _merge(pairs: list[tuple[Branch, WorkEntry]]) -> list[tuple[Branch, WorkEntry]]:
    """Fuse branches whose state, volumes and held records coincide."""
    out: list[tuple[Branch, WorkEntry]] = []
    for b, e in pairs:
        for i, (c, f) in enumerate(out):
            if (c.volume.matches(b.volume, 1e-12) and c.holding == b.holding
                    and np.allclose(c.state.matrix, b.state.matrix, atol=1e-12, rtol=0)
                    and np.isclose(e.work, f.work) and np.isclose(e.dS_bath, f.dS_bath)):
                common = []
                for x, y in zip(c.records, b.records):
                    if x != y:
                        break
                    common.append(x)
                out[i] = (replace(c, probability=c.probability + b.probability, records=tuple(common)), f)
                break
        else:
            out.append((b, e))
    return out


class Session:
    """Step-by-step execution state: prepares on construction, then ``advance`` one step at a time."""

    def __init__(self, protocol: Protocol):
        protocol.validate()
        if not protocol.steps or protocol.steps[0].kind != "Prepare":
            raise ProtocolError("protocol must begin with a Prepare step")
        self.protocol = protocol
        self.cfg = protocol.config
        self.runner = _Runner(protocol)
        self.obs = _Observer(protocol)
        self.rows: list[LedgerRow] = []
        self.running = {"S": 0.0, "W": 0.0, "bath": 0.0}
        prep = protocol.steps[0]
        try:
            rho = prepare_state(protocol.layout, prep.get("factors"))
            vols = prep.get("volumes")
            vol = VolumeRegister(float(vols.get("L", 0.5)), float(vols.get("R", 0.5)))
            b = Branch(1.0, rho, vol)
            m = self.obs.branch_metrics(b, WorkEntry(prep.id))
        except Exception as exc:
            raise StepError(prep.id, exc) from exc
        self.initial, self.initial_volume = rho, vol
        self.branches = [b]
        self.prev = m
        self.rows.append(LedgerRow(1, prep.id, prep.kind, (m,), m, m.S_system, m.S_joint,
                                   0.0, 0.0, 0.0, 0.0, (), (branch_label(b),)))

    @property
    def bath(self) -> BathModel:
        return self.runner.bath

    def advance(self, step: Step, cycle: int = 1) -> LedgerRow:
        """Apply one step; on failure the session is left unchanged and StepError is raised."""
        try:
            pairs = _merge(self.runner.execute(self.branches, step))
            total_p = math.fsum(b.probability for b, _ in pairs)
            if abs(total_p - 1.0) > TAU_TRACE:
                raise ProtocolError(f"branch probabilities sum to {total_p}")
            branches = [b for b, _ in pairs]
            per = [self.obs.branch_metrics(b, e) for b, e in pairs]
            avg = self.obs.average_metrics(branches, per)
        except StepError:
            raise
        except Exception as exc:
            raise StepError(step.id, exc) from exc
        d_total = (avg.S_all - self.prev.S_all) + (avg.S_spatial - self.prev.S_spatial) + avg.dS_bath
        if abs(d_total) < 1e-13:
            d_total = 0.0
        self.running["S"] += d_total
        self.running["W"] += avg.W
        self.running["bath"] += avg.dS_bath
        if avg.Q:
            self.runner.bath = self.runner.bath.absorb(-avg.Q)
        flags = []
        if any(e.nonphysical for _, e in pairs):
            flags.append("NONPHYSICAL")
        elif d_total < -TAU_AUDIT:
            flags.append("VIOLATION")
        row = LedgerRow(
            cycle, step.id, step.kind, tuple(per), avg,
            math.fsum(m.probability * m.S_system for m in per),
            math.fsum(m.probability * m.S_joint for m in per),
            d_total, self.running["S"], self.running["W"], self.running["bath"], tuple(flags),
            tuple(branch_label(b) for b in branches))
        self.rows.append(row)
        self.branches = branches
        self.prev = avg
        return row


def run(protocol: Protocol) -> RunResult:
    """Execute a protocol; step failures raise StepError naming the step.

    Prepare executes once; the remaining steps repeat ``cycles`` times.
    """
    protocol.validate()
    cfg = protocol.config
    ledger = Ledger(protocol.name, cfg.mode, cfg.seed)
    if not protocol.steps or cfg.cycles == 0:
        return RunResult(protocol, ledger, [], None, None, BathModel(cfg.temperature, cfg.kb))
    session = Session(protocol)
    for cycle in range(1, cfg.cycles + 1):
        for step in protocol.steps[1:]:
            session.advance(step, cycle)
    ledger.rows = session.rows
    return RunResult(protocol, ledger, session.branches, session.initial, session.initial_volume, session.bath)


def cycle_closure(initial: DensityState | None, branches: Sequence[Branch],
                  initial_volume: VolumeRegister | None) -> ClosureVerdict:
    if initial is None:
        return ClosureVerdict(True, 0.0, True)
    final = mix([b.state for b in branches], [b.probability for b in branches])
    dist = trace_distance(initial, final)
    vols = all(b.volume.matches(initial_volume) for b in branches)
    return ClosureVerdict(dist < CLOSURE_TOL and vols, dist, vols)


def audit(result: RunResult) -> AuditReport:
    ledger = result.ledger
    closure = cycle_closure(result.initial, result.branches, result.initial_volume)
    violations, nonphysical, margins = [], [], []
    for r in ledger.rows:
        margins.append((r.cycle, r.step_id, r.dS_total))
        tag = f"cycle {r.cycle} step {r.step_id} ({r.step_kind}): dS_total = {r.dS_total:.6g}"
        if "NONPHYSICAL" in r.flags:
            nonphysical.append(tag)
        elif "VIOLATION" in r.flags:
            violations.append(tag)
    net_w = ledger.net_work
    if not ledger.rows:
        kp = "OK"
    elif not closure.closed:
        kp = "UNDECIDED"
    elif net_w > TAU_AUDIT:
        kp = "VIOLATION"
        violations.append(
            f"Kelvin-Planck: closed cycle(s) converted heat from a single bath into net work W = {net_w:.12g}"
        )
    else:
        kp = "OK"
    return AuditReport(tuple(margins), closure, kp, net_w, ledger.net_bath_entropy,
                       tuple(violations), tuple(nonphysical))
