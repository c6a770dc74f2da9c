import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdteleport.analysis import (
    CountRecord,
    MubReport,
    classical_bound,
    computational_fidelity_from_counts,
    entanglement_witness_fidelity,
    expected_counts,
    fidelity,
    fidelity_from_counts,
    mub_suite_report,
    phases_of,
    qubit_subspace_bound,
    sigma_settings,
    subspace_fidelity,
    witness_expectations,
)
from hdteleport.protocol import bell_vector, mub_states, run_teleport
from oracles import random_density

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def _phi(phi1, phi2):
    return np.array([1, np.exp(1j * phi1), np.exp(1j * phi2)]) / math.sqrt(3)


def test_fidelity_examples():
    psi = np.ones(3) / math.sqrt(3)
    assert fidelity(np.outer(psi, psi.conj()), psi) == pytest.approx(1.0)
    assert fidelity(np.eye(3) / 3, psi) == pytest.approx(1 / 3)
    assert fidelity(np.diag([1.0, 0, 0]), psi) == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        fidelity(np.eye(2) / 2, psi)


def test_sigma_setting_example():
    s012 = sigma_settings(0.0, 0.0)[0]
    assert s012.label == "012"
    plus, minus, k = s012.outcomes
    assert np.allclose(plus, [1 / math.sqrt(2), 1 / math.sqrt(2), 0])
    assert np.allclose(minus, [1 / math.sqrt(2), -1 / math.sqrt(2), 0])
    assert np.allclose(k, [0, 0, 1])


@settings(max_examples=100, deadline=None)
@given(phi1=angles, phi2=angles)
def test_sigma_average_is_projector(phi1, phi2):
    sets = sigma_settings(phi1, phi2)
    avg = sum(s.operator for s in sets) / 3
    phi = _phi(phi1, phi2)
    assert np.max(np.abs(avg - np.outer(phi, phi.conj()))) < 1e-10
    for s in sets:
        u = s.unitary
        assert np.allclose(u @ u.conj().T, np.eye(3), atol=1e-12)
    assert np.allclose(_phi(*phases_of(phi)), phi)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), phi1=angles, phi2=angles)
def test_count_estimator_matches_direct_fidelity(seed, phi1, phi2):
    rho = random_density(3, np.random.default_rng(seed))
    phi = _phi(phi1, phi2)
    recs = expected_counts(rho, sigma_settings(phi1, phi2), total=1000.0)
    est, _ = fidelity_from_counts(recs, replicas=200)
    assert est == pytest.approx(fidelity(rho, phi), abs=1e-9)


def test_count_estimator_examples():
    phi = np.ones(3) / math.sqrt(3)
    ideal = expected_counts(np.outer(phi, phi.conj()), sigma_settings(0, 0), total=5000)
    assert fidelity_from_counts(ideal)[0] == pytest.approx(1.0, abs=1e-12)
    basis = expected_counts(np.diag([1.0, 0, 0]), sigma_settings(0, 0), total=5000)
    assert fidelity_from_counts(basis)[0] == pytest.approx(1 / 3, abs=1e-12)


def test_poisson_error_scaling():
    rho = random_density(3, np.random.default_rng(8))
    sets = sigma_settings(0.3, -1.1)
    totals = np.geomspace(1e2, 1e6, 9)
    sig = [fidelity_from_counts(expected_counts(rho, sets, t), replicas=20000, seed=5)[1] for t in totals]
    slope = np.polyfit(np.log(totals), np.log(sig), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.02)
    ten = fidelity_from_counts(expected_counts(rho, sets, 1e4), replicas=20000)
    one = fidelity_from_counts(expected_counts(rho, sets, 1e3), replicas=20000)
    assert ten[0] == pytest.approx(one[0], abs=1e-12)
    assert one[1] / ten[1] == pytest.approx(math.sqrt(10), rel=0.05)


def test_count_input_errors():
    with pytest.raises(ValueError):
        CountRecord("012", (1.0, -1.0, 0.0))
    with pytest.raises(ValueError):
        fidelity_from_counts([CountRecord("012", (0, 0, 0))] * 3)
    with pytest.raises(ValueError):
        fidelity_from_counts([CountRecord("012", (1, 0, 0))] * 2)


def test_computational_estimator():
    est, sig = computational_fidelity_from_counts([90, 5, 5], 0)
    assert est == pytest.approx(0.9)
    assert 0 < sig < 0.1


def test_classical_bound():
    assert classical_bound(3) == 0.5
    assert classical_bound(2) == pytest.approx(2 / 3)
    vals = [classical_bound(d) for d in range(2, 200)]
    assert all(a > b for a, b in zip(vals, vals[1:])) and vals[-1] < 0.02
    with pytest.raises(ValueError):
        classical_bound(1)


def test_subspace_examples():
    psi = np.ones(3) / math.sqrt(3)
    basis = np.eye(3)[:2]
    assert subspace_fidelity(psi, basis) == pytest.approx(2 / 3)
    assert subspace_fidelity(np.array([0.6, 0.8j, 0]), basis) == pytest.approx(1.0)


def test_qubit_subspace_bound():
    assert qubit_subspace_bound() == pytest.approx(2 / 3, abs=1e-6)
    # a single state always fits in some two-dimensional subspace
    assert qubit_subspace_bound([np.ones(3) / math.sqrt(3)], starts=2) == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), rank=st.integers(1, 9))
def test_witness_equals_bell_fidelity(seed, rank):
    rho = random_density(9, np.random.default_rng(seed), rank)
    psi = bell_vector((0, 0), 3)
    assert entanglement_witness_fidelity(witness_expectations(rho)) == pytest.approx(
        float(np.real(psi.conj() @ rho @ psi)), abs=1e-10
    )


def test_witness_examples():
    psi = bell_vector((0, 0), 3)
    assert entanglement_witness_fidelity(witness_expectations(np.outer(psi, psi.conj()))) == pytest.approx(1.0)
    assert entanglement_witness_fidelity(witness_expectations(np.eye(9) / 9)) == pytest.approx(1 / 9)
    with pytest.raises(ValueError):
        entanglement_witness_fidelity([0.0] * 6)


def test_report_ideal_suite():
    report = mub_suite_report([run_teleport(a) for a in mub_states()])
    assert report.mean == pytest.approx(1.0)
    assert report.beats_classical and report.beats_genuine
    assert report.labels[0] == "B1_1"


def test_report_flags():
    degraded = mub_suite_report([0.60] * 12)
    assert degraded.beats_classical and not degraded.beats_genuine
    guessing = mub_suite_report([1 / 3] * 12)
    assert not guessing.beats_classical and not guessing.beats_genuine


def test_report_reported_table():
    vals = [0.76, 0.81, 0.78, 0.74, 0.73, 0.72, 0.75, 0.74, 0.73, 0.74, 0.74, 0.76]
    report = mub_suite_report(vals, [0.03] * 12)
    assert round(report.mean, 2) == 0.75
    assert report.sigma_mean == pytest.approx(0.03 / math.sqrt(12))
    assert report.beats_genuine


def test_report_serialization():
    report = mub_suite_report([0.9] * 12, [0.01] * 12)
    assert isinstance(report, MubReport)
    d = report.to_dict()
    assert len(d["states"]) == 12 and d["mean"] == pytest.approx(0.9)
    assert report.to_csv().splitlines()[0] == "state,fidelity,sigma"
    with pytest.raises(ValueError):
        mub_suite_report([1.0] * 11)
