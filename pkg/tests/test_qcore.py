import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vnthermo import qcore
from vnthermo.errors import LayoutConflict, NotUnitary, UnknownSubsystem
from vnthermo.qcore import DensityState, UnitaryOp

from conftest import qubit_layout, random_density, random_unitary, sized_layout

PLUS_X = np.array([1, 1]) / np.sqrt(2)
H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)


def loop_partial_trace(m, dims, keep):
    """Index-by-index partial trace, independent of the einsum implementation."""
    keep_idx = [i for i in range(len(dims)) if i in keep]
    kd = int(np.prod([dims[i] for i in keep_idx]))
    out = np.zeros((kd, kd), dtype=complex)
    ranges = [range(d) for d in dims]
    for a in itertools.product(*ranges):
        for b in itertools.product(*ranges):
            if any(a[i] != b[i] for i in range(len(dims)) if i not in keep):
                continue
            ra = np.ravel_multi_index(a, dims)
            rb = np.ravel_multi_index(b, dims)
            ka = np.ravel_multi_index([a[i] for i in keep_idx], [dims[i] for i in keep_idx])
            kb = np.ravel_multi_index([b[i] for i in keep_idx], [dims[i] for i in keep_idx])
            out[ka, kb] += m[ra, rb]
    return out


def hs_layout():
    return qcore.layout(qcore.spin_half("P"), qcore.position("x"),
                        qcore.apparatus("M", ("ready", "+", "-")))


# ---------------------------------------------------------------- types

def test_layout_dimension_is_product():
    lay = hs_layout()
    assert lay.total_dimension == 12
    assert lay.dims == (2, 2, 3)


def test_duplicate_labels_rejected():
    with pytest.raises(LayoutConflict):
        qcore.layout(qcore.spin_half("a"), qcore.position("a"))


@pytest.mark.parametrize("kwargs", [
    dict(label="s", role="spin", pointer_basis=("u",)),
    dict(label="s", role="spin", pointer_basis=("u", "u")),
    dict(label="s", role="wizard", pointer_basis=("u", "d")),
])
def test_subsystem_invariants(kwargs):
    with pytest.raises(ValueError):
        qcore.SubsystemSpec(**kwargs)


def test_trivial_ancilla_allowed():
    assert qcore.SubsystemSpec("e", "ancilla", ("only",)).dimension == 1


def test_apparatus_ready_defaults_to_first_pointer():
    assert qcore.apparatus("M", ("ready", "+", "-")).ready == "ready"


def test_unitary_rejects_non_unitary():
    with pytest.raises(NotUnitary):
        UnitaryOp(qubit_layout("a"), np.array([[1, 1], [0, 1]]))


def test_measurement_must_be_complete():
    from vnthermo.errors import InvalidMeasurement
    with pytest.raises(InvalidMeasurement):
        qcore.ProjectiveMeasurement("a", (("0", np.diag([1, 0])),))


# ---------------------------------------------------------------- tensor

def test_tensor_pure_product():
    a = qcore.product_state(qubit_layout("a"), {"a": "0"})
    b = qcore.product_state(qubit_layout("b"), {"b": "0"})
    ab = qcore.tensor(a, b)
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    assert np.allclose(ab.matrix, expected)
    assert ab.labels == ("a", "b")


def test_tensor_mixed_with_position():
    spin = qcore.product_state(qcore.layout(qcore.spin_half("P")), {"P": np.eye(2) / 2})
    pos = qcore.product_state(qcore.layout(qcore.position("x")), {"x": "L"})
    # basis order +L, +R, -L, -R
    assert np.allclose(qcore.tensor(spin, pos).matrix, np.diag([0.5, 0, 0.5, 0]))


def test_tensor_initial_state_assembly():
    rho1 = qcore.product_state(hs_layout(), {"P": PLUS_X, "x": "L", "M": "ready"})
    psi = np.kron(np.kron(PLUS_X, [1, 0]), [1, 0, 0])
    assert rho1.matrix.shape == (12, 12)
    assert np.allclose(rho1.matrix, np.outer(psi, psi))


def test_tensor_label_collision():
    a = qcore.maximally_mixed(qubit_layout("a"))
    with pytest.raises(LayoutConflict):
        qcore.tensor(a, a)


def test_tensor_trace_is_product():
    rng = np.random.default_rng(1)
    a = DensityState(qubit_layout("a"), random_density(rng, 2))
    b = DensityState(sized_layout(b=3), random_density(rng, 3))
    assert np.isclose(np.trace(qcore.tensor(a, b).matrix), 1.0)


# ---------------------------------------------------------------- partial trace

def test_partial_trace_recovers_factor():
    rng = np.random.default_rng(2)
    a = DensityState(sized_layout(a=2), random_density(rng, 2))
    b = DensityState(sized_layout(b=3), random_density(rng, 3))
    assert np.allclose(qcore.partial_trace(qcore.tensor(a, b), {"a"}).matrix, a.matrix, atol=1e-9)


def test_partial_trace_after_spin_measurement():
    lay = hs_layout()
    # spin entangled with the apparatus record, position L
    psi = (np.kron(np.kron([1, 0], [1, 0]), [0, 1, 0]) + np.kron(np.kron([0, 1], [1, 0]), [0, 0, 1])) / np.sqrt(2)
    red = qcore.partial_trace(qcore.pure_state(lay, psi), {"P", "x"})
    expected = np.kron(np.eye(2) / 2, np.diag([1, 0]))
    assert np.allclose(red.matrix, expected)


def test_partial_trace_after_separation():
    lay = hs_layout()
    psi = (np.kron(np.kron([1, 0], [1, 0]), [0, 1, 0]) + np.kron(np.kron([0, 1], [0, 1]), [0, 0, 1])) / np.sqrt(2)
    red = qcore.partial_trace(qcore.pure_state(lay, psi), {"P", "x"})
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[3, 3] = 0.5  # |+z,L> and |-z,R>
    assert np.allclose(red.matrix, expected)


def test_partial_trace_matches_loop_oracle():
    rng = np.random.default_rng(3)
    lay = sized_layout(a=2, b=3, c=2)
    m = random_density(rng, 12)
    rho = DensityState(lay, m)
    for keep in ({"a"}, {"b"}, {"a", "c"}, {"b", "c"}):
        idx = {lay.position(k) for k in keep}
        assert np.allclose(qcore.partial_trace(rho, keep).matrix, loop_partial_trace(m, (2, 3, 2), idx))


def test_partial_trace_unknown_label():
    with pytest.raises(UnknownSubsystem):
        qcore.partial_trace(qcore.maximally_mixed(qubit_layout("a", "b")), {"z"})


def test_partial_trace_keeps_roster_order():
    lay = sized_layout(a=2, b=3)
    assert qcore.partial_trace(qcore.maximally_mixed(lay), ["b", "a"]).labels == ("a", "b")


# ---------------------------------------------------------------- unitaries

def test_identity_leaves_state():
    rng = np.random.default_rng(4)
    rho = DensityState(qubit_layout("a", "b"), random_density(rng, 4))
    assert qcore.apply_unitary(rho, UnitaryOp(rho.layout, np.eye(4))).allclose(rho, 1e-12)


def test_hadamard_on_maximally_mixed():
    lay = qubit_layout("a")
    rho = qcore.maximally_mixed(lay)
    assert qcore.apply_unitary(rho, UnitaryOp(lay, H)).allclose(rho, 1e-12)


def test_rotation_back_to_initial_superposition():
    w1, w2 = np.sqrt(0.64), np.sqrt(0.36)
    zero = np.array([w1, w2])
    lay = qcore.layout(qcore.spin_half("P", ("+", "-")))
    rot = np.column_stack([zero, [-w2, w1]])
    out = qcore.apply_unitary(qcore.product_state(lay, {"P": "+"}), UnitaryOp(lay, rot))
    assert np.allclose(out.matrix, np.outer(zero, zero))


def test_apply_unitary_layout_mismatch():
    with pytest.raises(LayoutConflict):
        qcore.apply_unitary(qcore.maximally_mixed(qubit_layout("a")), UnitaryOp(qubit_layout("b"), np.eye(2)))


# ---------------------------------------------------------------- validate

def test_validate_pure_passes():
    assert qcore.validate(qcore.product_state(qubit_layout("a"), {"a": "0"})).passed


def test_validate_trace_defect():
    report = qcore.validate(DensityState(qubit_layout("a"), np.diag([0.9, 0.0])))
    assert not report.passed
    assert report.trace_defect == pytest.approx(0.1)
    assert report.failures == ["trace"]


def test_validate_traceless_hermitian():
    plus, minus = np.array([1, 1]) / np.sqrt(2), np.array([1, -1]) / np.sqrt(2)
    m = 0.5 * (np.outer(plus, minus) + np.outer(minus, plus))
    report = qcore.validate(DensityState(qubit_layout("a"), m))
    assert not report.passed
    assert report.min_eigenvalue == pytest.approx(-0.5)
    assert set(report.failures) == {"negative eigenvalue", "trace"}


# ---------------------------------------------------------------- trace distance / spectrum

def test_trace_distance_examples():
    lay = qubit_layout("a")
    zero = qcore.product_state(lay, {"a": "0"})
    one = qcore.product_state(lay, {"a": "1"})
    assert qcore.trace_distance(zero, zero) == 0.0
    assert qcore.trace_distance(zero, one) == pytest.approx(1.0)
    assert qcore.trace_distance(zero, qcore.maximally_mixed(lay)) == pytest.approx(0.5)


def test_trace_distance_layout_mismatch():
    with pytest.raises(LayoutConflict):
        qcore.trace_distance(qcore.maximally_mixed(qubit_layout("a")), qcore.maximally_mixed(qubit_layout("b")))


def test_spectrum_examples():
    lay = qubit_layout("a")
    assert np.allclose(qcore.spectrum(qcore.product_state(lay, {"a": "0"})), [1, 0])
    assert np.allclose(qcore.spectrum(qcore.maximally_mixed(lay)), [0.5, 0.5])
    rotated = qcore.apply_unitary(DensityState(lay, np.diag([0.75, 0.25])), UnitaryOp(lay, H))
    assert np.allclose(qcore.spectrum(rotated), [0.75, 0.25])


def test_replace_factor_middle_slot():
    rng = np.random.default_rng(5)
    lay = sized_layout(a=2, b=3, c=2)
    a, c = random_density(rng, 2), random_density(rng, 2)
    rho = DensityState(lay, np.kron(np.kron(a, random_density(rng, 3)), c))
    out = qcore.replace_factor(rho, "b", "1")
    assert np.allclose(out.matrix, np.kron(np.kron(a, np.diag([0, 1, 0])), c))


# ---------------------------------------------------------------- properties

dims = st.sampled_from([(2, 2), (2, 4), (4, 2), (2, 8), (4, 4)])


@given(dims, st.integers(0, 2**32 - 1))
def test_property_partial_trace_of_product(d, seed):
    rng = np.random.default_rng(seed)
    a = DensityState(sized_layout(a=d[0]), random_density(rng, d[0]))
    b = DensityState(sized_layout(b=d[1]), random_density(rng, d[1]))
    assert np.allclose(qcore.partial_trace(qcore.tensor(a, b), {"a"}).matrix, a.matrix, atol=1e-9)


@given(st.integers(1, 16), st.integers(0, 2**32 - 1))
def test_property_spectrum_unitary_invariant(d, seed):
    rng = np.random.default_rng(seed)
    lay = sized_layout(a=d) if d > 1 else qcore.layout(qcore.SubsystemSpec("a", "ancilla", ("0",)))
    rho = DensityState(lay, random_density(rng, d))
    out = qcore.apply_unitary(rho, UnitaryOp(lay, random_unitary(rng, d)))
    assert np.allclose(qcore.spectrum(out), qcore.spectrum(rho), atol=1e-9)
    assert qcore.validate(out).passed


@given(st.sampled_from([2, 3, 4, 8]), st.integers(0, 2**32 - 1))
def test_property_trace_distance_metric(d, seed):
    rng = np.random.default_rng(seed)
    lay = sized_layout(a=d)
    a, b, c = (DensityState(lay, random_density(rng, d, rank=int(rng.integers(1, d + 1)))) for _ in range(3))
    ab, ba = qcore.trace_distance(a, b), qcore.trace_distance(b, a)
    assert ab >= 0 and ab == pytest.approx(ba, abs=1e-12)
    assert qcore.trace_distance(a, c) <= ab + qcore.trace_distance(b, c) + 1e-9
    u = UnitaryOp(lay, random_unitary(rng, d))
    assert qcore.trace_distance(qcore.apply_unitary(a, u), qcore.apply_unitary(b, u)) == pytest.approx(ab, abs=1e-9)

