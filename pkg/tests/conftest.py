import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from vnthermo import qcore

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

LN2 = float(np.log(2))


def random_density(rng, d, rank=None):
    """Random mixed state from a complex Ginibre matrix."""
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return m / np.trace(m)


def random_unitary(rng, d):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def qubit_layout(*labels):
    return qcore.layout(*(qcore.SubsystemSpec(l, "ancilla", ("0", "1")) for l in labels))


def sized_layout(**dims):
    return qcore.layout(*(qcore.SubsystemSpec(l, "ancilla", tuple(str(i) for i in range(d)))
                          for l, d in dims.items()))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
