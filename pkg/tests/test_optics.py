import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdteleport.optics import (
    MeshElement,
    MeshPlan,
    beam_splitter,
    build_experimental_multiport,
    hybrid_transfer,
    phase_equivalence,
    polarizing_splitter,
    qft_multiport,
    reck_decompose,
    recompose,
    waveplate,
)
from oracles import random_unitary


def _same_up_to_phase(u, w, tol=1e-12):
    k = np.argmax(np.abs(w))
    ph = u.flat[k] / w.flat[k]
    return abs(abs(ph) - 1) < tol and np.allclose(u, ph * w, atol=tol)


def test_beam_splitter_limits():
    assert np.allclose(beam_splitter(0.0), np.eye(2))
    assert np.allclose(np.abs(beam_splitter(math.pi / 4)) ** 2, 0.5)
    swap = beam_splitter(math.pi / 2)
    assert np.allclose(np.abs(swap), [[0, 1], [1, 0]])
    # reflection carries +i, transmission is real
    b = beam_splitter(math.pi / 4)
    assert b[0, 0].imag == 0 and b[0, 0].real > 0
    assert np.isclose(b[1, 0], 1j / math.sqrt(2))


def test_waveplates():
    h = np.array([1, 0])
    assert _same_up_to_phase(waveplate("half", 0.0), np.diag([1, -1]))
    assert np.allclose(np.abs(waveplate("half", math.pi / 8) @ h), [1 / math.sqrt(2)] * 2)
    out = waveplate("quarter", math.pi / 4) @ h
    assert _same_up_to_phase(out[:, None], (np.array([1, 1j]) / math.sqrt(2))[:, None])
    q = waveplate("quarter", math.pi / 4)
    assert _same_up_to_phase(q @ q, waveplate("half", math.pi / 4))
    with pytest.raises(ValueError):
        waveplate("full", 0.0)


def test_polarizing_splitter():
    u = polarizing_splitter(1 / 3)
    # modes 1h, 1v, 2h, 2v; v always reflects
    assert abs(u[2, 0]) ** 2 == pytest.approx(1 / 3)
    assert abs(u[3, 1]) == pytest.approx(1.0)
    assert not np.allclose(u[np.ix_([0, 2], [0, 2])], np.eye(2))
    pbs = polarizing_splitter(0.0)
    assert np.allclose(pbs[np.ix_([0, 2], [0, 2])], np.eye(2))
    full = polarizing_splitter(1.0)
    assert np.allclose(full[np.ix_([0, 2], [0, 2])], full[np.ix_([1, 3], [1, 3])])
    with pytest.raises(ValueError):
        polarizing_splitter(1.2)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_qft_multiport(n):
    f = qft_multiport(n)
    assert np.allclose(f.conj().T @ f, np.eye(n), atol=1e-12)
    assert np.allclose(np.abs(f) ** 2, 1 / n)
    assert np.allclose(f[0], 1 / math.sqrt(n))


def test_hybrid_realization_is_qft_up_to_phases():
    u, labels = build_experimental_multiport()
    assert np.allclose(u.conj().T @ u, np.eye(6), atol=1e-12)
    t = hybrid_transfer()
    assert np.max(np.abs(np.abs(t) ** 2 - 1 / 3)) < 1e-9
    phases = phase_equivalence(t, qft_multiport(3))
    assert phases is not None
    d_out, d_in = phases
    assert np.allclose(np.abs(d_out), 1) and np.allclose(np.abs(d_in), 1)
    assert set(labels["in"]) == {"a", "b", "x"}
    # single photon in a leaves through the six physical outputs with unit probability
    assert np.sum(np.abs(u[:, labels["in"]["a"]]) ** 2) == pytest.approx(1.0)


def test_hybrid_with_plain_pbs_is_not_qft():
    assert phase_equivalence(hybrid_transfer(0.0), qft_multiport(3)) is None


def test_identity_and_empty_plans():
    plan = reck_decompose(np.eye(3))
    assert all(e.theta == 0 and e.phi == 0 for e in plan.elements)
    assert np.allclose(recompose(MeshPlan(4)), np.eye(4))
    single = MeshPlan(2, (MeshElement("ROT", (0, 1), math.pi / 4, 0.0),))
    assert np.allclose(recompose(single), beam_splitter(math.pi / 4))


def test_qft_plan_size():
    plan = reck_decompose(qft_multiport(3))
    rots = [e for e in plan.elements if e.kind == "ROT"]
    assert len(rots) <= 3
    assert np.max(np.abs(recompose(plan) - qft_multiport(3))) < 1e-10


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 6))
def test_reck_round_trip(seed, n):
    u = random_unitary(n, np.random.default_rng(seed))
    plan = reck_decompose(u)
    assert np.max(np.abs(recompose(plan) - u)) < 1e-10
    again = MeshPlan.from_text(plan.to_text(), n)
    assert np.max(np.abs(recompose(again) - u)) < 1e-9


def test_reck_rejects_non_unitary():
    with pytest.raises(ValueError):
        reck_decompose(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_recompose_index_error():
    with pytest.raises(IndexError):
        recompose(MeshPlan(2, (MeshElement("ROT", (0, 2), 0.1, 0.0),)))


def test_plan_text_parse_error():
    with pytest.raises(ValueError):
        MeshPlan.from_text("ROT 0 1 zero 0\n", 2)
