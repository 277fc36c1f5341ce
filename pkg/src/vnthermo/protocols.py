"""Builtin protocols and a random protocol generator for auditor soundness checks."""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .engine import Protocol, RunConfig, Session, Step
from .errors import ProtocolError, StepError
from .qcore import apparatus, layout, position, spin_half

RESETS = {"landauer": "LandauerReset", "unitary-attempt": "UnitaryResetAttempt"}
PLUS_X = [1 / math.sqrt(2), 1 / math.sqrt(2)]


def _reset_kind(reset: str) -> str:
    try:
        return RESETS[reset]
    except KeyError:
        raise ValueError(f"reset must be one of {sorted(RESETS)}, got {reset!r}") from None


def vn_cycle(n: int = 1, w1sq: float = 0.5) -> Protocol:
    """Gas of N spin-half particles: measure, separate, compress, rotate back, remix.

    The compression step takes the + gas to w1^2/2 and the - gas to w2^2/2 in one step.
    """
    if not 0 < w1sq <= 1:
        raise ValueError(f"w1^2 must lie in (0, 1], got {w1sq}")
    if n < 1:
        raise ValueError(f"particle count must be >= 1, got {n}")
    w1, w2 = math.sqrt(w1sq), math.sqrt(1 - w1sq)
    lay = layout(spin_half("spin", ("+", "-")), position("pos"))
    steps = (
        Step("Prepare", "I-prepare", {"factors": {"spin": {"amplitudes": [w1, w2]}, "pos": "L"}}),
        Step("NonSelectiveMeasure", "II-measure", {"target": "spin"}),
        Step("Separate", "III-separate", {"spin": "spin", "position": "pos"}),
        Step("IsothermalVolume", "V-compress", {
            "chamber": "both", "v_from": {"L": 0.5, "R": 0.5},
            "v_to": {"L": w1sq / 2, "R": (1 - w1sq) / 2}}),
        Step("ApplyUnitary", "VI-rotate", {
            "op": "conditional_rotation", "control": "pos", "target": "spin",
            "mapping": {"L": "+", "R": "-"}, "state": [w1, w2]}),
        Step("RemovePartition", "VII-remix", {}),
    )
    return Protocol(f"vn-cycle(n={n},w1sq={w1sq:g})", lay, steps,
                    RunConfig(particles=n, system=("spin", "pos")))


def _hs_layout(location_apparatus: bool = True):
    subs = [spin_half("spin"), position("pos"), apparatus("M", ("ready", "+", "-"))]
    if location_apparatus:
        subs.append(apparatus("M2", ("L_m", "R_m")))
    return layout(*subs)


def hs_cycle(reset: str = "landauer", spin_state=None) -> Protocol:
    """Single particle: z-measure, separate, locate, compress the empty side, undo, reset M.

    M records the spin; M2 records the chamber. The return leg clears M2 and
    the spin for free by reversible controlled operations, so only M needs a reset.
    """
    spin_state = PLUS_X if spin_state is None else list(spin_state)
    steps = (
        Step("Prepare", "1-prepare", {"factors": {"spin": {"amplitudes": spin_state}, "pos": "L"}}),
        Step("CoupleApparatus", "2-measure-z", {"source": "spin", "apparatus": "M"}),
        Step("Separate", "3-separate", {"spin": "spin", "position": "pos"}),
        Step("SelectiveMeasure", "4-locate", {"target": "pos", "apparatus": "M2"}),
        Step("CompressVacuum", "5-compress", {"chamber": "empty", "record": "M2", "v_to": 0.0}),
        Step("CompressVacuum", "6a-reopen", {"chamber": "empty", "record": "M2", "v_to": 0.5}),
        Step("ApplyUnitary", "6b-clear-location", {"op": "coupling", "source": "pos", "apparatus": "M2"}),
        Step("Separate", "6c-recombine", {"spin": "spin", "position": "pos"}),
        Step("ApplyUnitary", "6d-restore-spin", {
            "op": "conditional_rotation", "control": "M", "target": "spin",
            "mapping": {"+": "+z", "-": "-z"}, "state": spin_state}),
        Step(_reset_kind(reset), "6e-reset", {"apparatus": "M"}),
    )
    return Protocol("hs-cycle", _hs_layout(), steps,
                    RunConfig(system=("spin", "pos"), memory="M2", position="pos"))


def hs_cycle_record_conditioned(reset: str = "landauer") -> Protocol:
    """The same cycle with the location measurement dropped; compression reads M instead."""
    steps = (
        Step("Prepare", "1-prepare", {"factors": {"spin": {"amplitudes": PLUS_X}, "pos": "L"}}),
        Step("CoupleApparatus", "2-measure-z", {"source": "spin", "apparatus": "M"}),
        Step("Separate", "3-separate", {"spin": "spin", "position": "pos"}),
        Step("CompressVacuum", "5-compress", {"chamber": "empty", "record": "M", "v_to": 0.0}),
        Step("CompressVacuum", "6a-reopen", {"chamber": "empty", "record": "M", "v_to": 0.5}),
        Step("Separate", "6c-recombine", {"spin": "spin", "position": "pos"}),
        Step("ApplyUnitary", "6d-restore-spin", {
            "op": "conditional_rotation", "control": "M", "target": "spin",
            "mapping": {"+": "+z", "-": "-z"}, "state": PLUS_X}),
        Step(_reset_kind(reset), "6e-reset", {"apparatus": "M"}),
    )
    return Protocol("hs-cycle-record-conditioned", _hs_layout(False), steps,
                    RunConfig(system=("spin", "pos"), memory="M", position="pos"))


def amended_cycle(reset: str = "landauer") -> Protocol:
    """Work-extracting variant: the located particle pushes the partition instead of vacuum compression.

    The particle starts with unknown chamber so that re-inserting the partition
    restores the initial state; only the location record M2 is left to reset.
    """
    half = {"probabilities": [0.5, 0.5]}
    steps = (
        Step("Prepare", "1-prepare", {"factors": {"spin": {"amplitudes": PLUS_X}, "pos": half}}),
        Step("CoupleApparatus", "2-measure-z", {"source": "spin", "apparatus": "M"}),
        Step("SelectiveMeasure", "4-locate", {"target": "pos", "apparatus": "M2"}),
        Step("ExtractWorkKnownPosition", "5-extract", {"record": "M2"}),
        Step("RemovePartition", "6a-remove-partition", {}),
        Step("InsertPartition", "6b-insert-partition", {}),
        Step("ApplyUnitary", "6c-unmeasure-z", {"op": "coupling", "source": "spin", "apparatus": "M"}),
        Step(_reset_kind(reset), "6d-reset", {"apparatus": "M2"}),
    )
    return Protocol("amended-cycle", _hs_layout(), steps,
                    RunConfig(system=("spin", "pos"), memory="M2", position="pos"))


def szilard(reset: str = "landauer") -> Protocol:
    """Classic one-particle engine: locate, extract kT ln 2, remix, reset the record."""
    lay = layout(position("pos"), apparatus("M", ("L_m", "R_m")))
    steps = (
        Step("Prepare", "1-prepare", {"factors": {"pos": {"probabilities": [0.5, 0.5]}}}),
        Step("SelectiveMeasure", "2-locate", {"target": "pos", "apparatus": "M"}),
        Step("ExtractWorkKnownPosition", "3-extract", {"record": "M"}),
        Step("RemovePartition", "4-remove-partition", {}),
        Step("InsertPartition", "5-insert-partition", {}),
        Step(_reset_kind(reset), "6-reset", {"apparatus": "M"}),
    )
    return Protocol("szilard", lay, steps, RunConfig(system=("pos",), memory="M", position="pos"))


BUILTINS: dict[str, Callable[..., Protocol]] = {
    "vn-cycle": vn_cycle,
    "hs-cycle": hs_cycle,
    "amended-cycle": amended_cycle,
    "szilard": szilard,
}


def builtin(name: str, **params) -> Protocol:
    """Look up ``name`` (with or without the ``builtin:`` prefix) and build it."""
    key = name.removeprefix("builtin:")
    if key not in BUILTINS:
        raise KeyError(f"unknown builtin {name!r}; available: {', '.join('builtin:' + k for k in BUILTINS)}")
    return BUILTINS[key](**params)


# ---------------------------------------------------------------- random protocols

def _random_amplitudes(rng: np.random.Generator, d: int = 2) -> list:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    v /= np.linalg.norm(v)
    return [[float(z.real), float(z.imag)] for z in v]


def _candidates(rng: np.random.Generator, vol) -> list[tuple[str, dict]]:
    lv, rv = vol.left, vol.right
    shrink = {c: float(rng.uniform(0.05, 1.0)) * v for c, v in (("L", lv), ("R", rv))}
    return [
        ("NonSelectiveMeasure", {"target": "spin"}),
        ("NonSelectiveMeasure", {"target": "spin", "basis": "x"}),
        ("NonSelectiveMeasure", {"target": "pos"}),
        ("SelectiveMeasure", {"target": "spin"}),
        ("SelectiveMeasure", {"target": "pos", "apparatus": "M2"}),
        ("CoupleApparatus", {"source": "spin", "apparatus": "M"}),
        ("Separate", {"spin": "spin", "position": "pos"}),
        ("ApplyUnitary", {"op": "hadamard", "target": "spin"}),
        ("ApplyUnitary", {"op": "coupling", "source": "spin", "apparatus": "M"}),
        ("ApplyUnitary", {"op": "conditional_rotation", "control": "pos", "target": "spin",
                          "mapping": {"L": "+z"}, "state": _random_amplitudes(rng)}),
        ("IsothermalVolume", {"chamber": "L", "v_from": lv, "v_to": shrink["L"]}),
        ("IsothermalVolume", {"chamber": "R", "v_from": rv, "v_to": shrink["R"]}),
        ("IsothermalVolume", {"chamber": "both", "v_from": {"L": lv, "R": rv},
                              "v_to": {"L": shrink["L"], "R": shrink["R"]}}),
        ("CompressVacuum", {"chamber": "empty"}),
        ("CompressVacuum", {"chamber": "empty", "record": "M2"}),
        ("ExtractWorkKnownPosition", {"record": "M2"}),
        ("RemovePartition", {}),
        ("InsertPartition", {}),
        ("LandauerReset", {"apparatus": "M"}),
        ("LandauerReset", {"apparatus": "M2"}),
        ("UnitaryResetAttempt", {"apparatus": "M2"}),
    ]


def random_protocol(seed: int, length: int = 8, mode: str = "collapse", max_tries: int = 60) -> Protocol:
    """Grow a protocol one step at a time, keeping only steps that execute cleanly.

    Steps are drawn from physical operations only (no permitted infeasible
    resets), so the auditor should never see a violation.
    """
    rng = np.random.default_rng(seed)
    pos_factor = "L" if rng.random() < 0.5 else {"probabilities": [0.5, 0.5]}
    prep = Step("Prepare", "s0", {"factors": {"spin": {"amplitudes": _random_amplitudes(rng)},
                                              "pos": pos_factor}})
    proto = Protocol(f"random-{seed}", _hs_layout(), (prep,),
                     RunConfig(mode=mode, system=("spin", "pos"), memory="M2", position="pos"))
    session = Session(proto)
    tries = 0
    while len(proto.steps) < length + 1 and tries < max_tries:
        tries += 1
        options = _candidates(rng, session.branches[0].volume)
        kind, params = options[rng.integers(len(options))]
        trial = Protocol(proto.name, proto.layout,
                         proto.steps + (Step(kind, f"s{len(proto.steps)}", params),), proto.config)
        try:
            trial.validate()
            session.advance(trial.steps[-1])
        except (StepError, ProtocolError, ValueError):
            continue
        proto = trial
    return proto
