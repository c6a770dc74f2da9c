import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hdteleport.fock import (
    MAX_PHOTONS,
    FockState,
    Mode,
    ModeRegister,
    apply_loss,
    apply_mode_unitary,
    detection_probability,
    make_fock,
    post_select_pattern,
    reduce_to_qudit,
    superpose,
    vacuum,
)
from hdteleport.optics import beam_splitter
from oracles import fock_amplitude, occupations, random_unitary


def test_register_rejects_duplicates():
    with pytest.raises(ValueError):
        ModeRegister((Mode("a", 0), Mode("a", 0)))


def test_grid_order_and_lookup():
    reg = ModeRegister.grid(("a", "b"), 3, internal_dim=2)
    assert len(reg) == 12
    assert reg.index(Mode("b", 1, 1)) == 9
    assert Mode("a", 2, 0) in reg


def test_cutoff_enforced():
    reg = ModeRegister.grid(("a",), 1)
    with pytest.raises(ValueError):
        make_fock(reg, [(Mode("a", 0), MAX_PHOTONS + 1)])


def test_normalized_flag_is_checked():
    reg = ModeRegister.grid(("a",), 2)
    with pytest.raises(ValueError):
        FockState(reg, {(1, 0): 1.0, (0, 1): 1.0})
    assert FockState(reg, {(1, 0): 1.0, (0, 1): 1.0}, normalized=False).norm_squared() == pytest.approx(2.0)


def test_creation_bookkeeping():
    reg = ModeRegister.grid(("a",), 1)
    two = vacuum(reg).create({Mode("a", 0): 1}).create({Mode("a", 0): 1})
    # (a^dag)^2 |0> = sqrt2 |2>
    assert two.amplitude((2,)) == pytest.approx(math.sqrt(2))


def test_hong_ou_mandel_bunching():
    reg = ModeRegister.grid(("u", "w"), 1)
    st_in = make_fock(reg, [(Mode("u", 0), 1), (Mode("w", 0), 1)])
    out = apply_mode_unitary(beam_splitter(math.pi / 4), [Mode("u", 0), Mode("w", 0)], st_in)
    probs = out.probabilities()
    assert probs.get((1, 1), 0.0) == pytest.approx(0.0, abs=1e-14)
    assert probs[(2, 0)] == pytest.approx(0.5)
    assert probs[(0, 2)] == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), photons=st.integers(1, 3), modes=st.integers(2, 4))
def test_amplitudes_match_permanent_oracle(seed, photons, modes):
    rng = np.random.default_rng(seed)
    u = random_unitary(modes, rng)
    reg = ModeRegister.grid(("m",), modes)
    occ_in = occupations(photons, modes)[rng.integers(len(occupations(photons, modes)))]
    st_in = FockState(reg, {occ_in: 1.0})
    out = apply_mode_unitary(u, list(reg.labels), st_in)
    for occ_out in occupations(photons, modes):
        assert out.amplitude(occ_out) == pytest.approx(fock_amplitude(u, occ_in, occ_out), abs=1e-12)
    assert out.norm_squared() == pytest.approx(1.0, abs=1e-12)


def test_unitary_on_subset_leaves_other_modes():
    reg = ModeRegister.grid(("a", "b"), 2)
    st_in = make_fock(reg, [(Mode("a", 0), 1), (Mode("b", 1), 1)])
    out = apply_mode_unitary(beam_splitter(math.pi / 4), [Mode("a", 0), Mode("a", 1)], st_in)
    assert all(occ[reg.index(Mode("b", 1))] == 1 for occ in out.amplitudes)


def test_non_unitary_rejected():
    reg = ModeRegister.grid(("a",), 2)
    with pytest.raises(ValueError):
        apply_mode_unitary(np.array([[1, 1], [0, 1]]), list(reg.labels), vacuum(reg))


def test_post_select_and_reduce():
    reg = ModeRegister.grid(("a", "c"), 3)
    pair = {(Mode("a", k), Mode("c", k)): 1 / math.sqrt(3) for k in range(3)}
    st_in = vacuum(reg).create_pairs(pair).normalize()
    prob, cond = post_select_pattern(st_in, [Mode("a", 1)], [Mode("a", 0), Mode("a", 2)])
    assert prob == pytest.approx(1 / 3)
    rho = reduce_to_qudit(cond, [Mode("c", k) for k in range(3)])
    assert np.allclose(rho, np.diag([0, 1, 0]))
    # tracing photon a leaves c maximally mixed
    assert np.allclose(reduce_to_qudit(st_in, [Mode("c", k) for k in range(3)]), np.eye(3) / 3)


def test_post_select_impossible_pattern():
    reg = ModeRegister.grid(("a",), 2)
    prob, cond = post_select_pattern(make_fock(reg, [(Mode("a", 0), 1)]), [Mode("a", 1)])
    assert prob == 0.0 and not cond.is_valid


def test_superpose_normalizes():
    reg = ModeRegister.grid(("a",), 2)
    s = superpose([(1, make_fock(reg, [(Mode("a", 0), 1)])), (1j, make_fock(reg, [(Mode("a", 1), 1)]))], True)
    assert s.norm_squared() == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(eta=st.floats(0.0, 1.0), n=st.integers(0, 4))
def test_loss_preserves_trace(eta, n):
    reg = ModeRegister.grid(("a", "b"), 1)
    st_in = superpose(
        [(1.0, make_fock(reg, [(Mode("a", 0), n)])), (1.0, make_fock(reg, [(Mode("a", 0), 1), (Mode("b", 0), 1)]))],
        normalize=True,
    )
    records = apply_loss(st_in, eta)
    assert sum(r.weight for r in records) == pytest.approx(1.0, abs=1e-12)


def test_loss_limits():
    reg = ModeRegister.grid(("a", "b"), 1)
    st_in = make_fock(reg, [(Mode("a", 0), 2), (Mode("b", 0), 1)])
    full = apply_loss(st_in, 1.0)
    assert len(full) == 1 and full[0].state.amplitudes == st_in.amplitudes
    none = apply_loss(st_in, 0.0)
    assert len(none) == 1 and none[0].state.amplitudes == {(0, 0): 1.0}


def test_single_photon_click_probability():
    reg = ModeRegister.grid(("a",), 1)
    one = make_fock(reg, [(Mode("a", 0), 1)])
    assert detection_probability(one, [[Mode("a", 0)]], efficiency=0.16) == pytest.approx(0.16)


def test_threshold_versus_resolving():
    reg = ModeRegister.grid(("a",), 1)
    two = make_fock(reg, [(Mode("a", 0), 2)])
    eta = 0.3
    assert detection_probability(two, [[Mode("a", 0)]], efficiency=eta) == pytest.approx(1 - (1 - eta) ** 2)
    assert detection_probability(two, [[Mode("a", 0)]], efficiency=eta, resolving=True) == pytest.approx(
        2 * eta * (1 - eta)
    )
