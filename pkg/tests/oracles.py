"""Slow, independent reference calculations used as test oracles."""

import itertools
import math

import numpy as np


def permanent_slow(m):
    """Permanent by summing over all permutations."""
    m = np.asarray(m)
    n = m.shape[0]
    if n == 0:
        return 1.0
    return sum(np.prod([m[i, s[i]] for i in range(n)]) for s in itertools.permutations(range(n)))


def fock_amplitude(u, occ_in, occ_out):
    """<occ_out| U |occ_in> for bosons on a linear network u (out x in)."""
    if sum(occ_in) != sum(occ_out):
        return 0.0
    cols = [j for j, c in enumerate(occ_in) for _ in range(c)]
    rows = [i for i, c in enumerate(occ_out) for _ in range(c)]
    sub = np.asarray(u)[np.ix_(rows, cols)]
    norm = math.prod(math.factorial(c) for c in occ_in) * math.prod(math.factorial(c) for c in occ_out)
    return permanent_slow(sub) / math.sqrt(norm)


def occupations(n, modes):
    """All occupation tuples of n photons in ``modes`` modes."""
    out = []
    for combo in itertools.combinations_with_replacement(range(modes), n):
        out.append(tuple(combo.count(m) for m in range(modes)))
    return out


def random_unitary(n, rng):
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_state(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


def random_density(d, rng, rank=None):
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def qubit_bsm_pattern_probabilities(alpha):
    """Textbook linear-optics qubit teleportation, one photon per level in the BSM.

    Photon a carries alpha on path levels 0/1, photons b and c share
    (|00> + |11>)/sqrt2. Each level of a and b meets on a balanced splitter
    [[1, 1], [1, -1]]/sqrt2; a pattern (p0, p1) puts one photon in output
    port p0 of level 0 and one in output port p1 of level 1. Returns the
    pattern probabilities and Bob's unnormalized state per pattern.
    """
    h = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    out = {}
    for p0, p1 in itertools.product(range(2), repeat=2):
        bob = np.zeros(2, dtype=complex)
        # a at level 0 (port 0) with b at level 1 (port 1): Bob gets |1>
        bob[1] += alpha[0] * h[p0, 0] * h[p1, 1] / math.sqrt(2)
        # a at level 1 with b at level 0: Bob gets |0>
        bob[0] += alpha[1] * h[p1, 0] * h[p0, 1] / math.sqrt(2)
        out[(p0, p1)] = (float(np.vdot(bob, bob).real), bob)
    return out


def pair_series_weights(p, modes, pairs, dim=None):
    """Squared norms of (sqrt(p/modes) sum_k a_k^dag b_k^dag)^n |0> / n! by dense matrices.

    Each of the 2*modes oscillators is truncated at ``dim`` levels, enough to
    hold ``pairs`` photons.
    """
    dim = pairs + 1 if dim is None else dim
    create = np.diag(np.sqrt(np.arange(1, dim)), -1)
    eye = np.eye(dim)

    def op(slot):
        mats = [eye] * (2 * modes)
        mats[slot] = create
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    gen = sum(op(2 * k) @ op(2 * k + 1) for k in range(modes)) * math.sqrt(p / modes)
    vec = np.zeros(dim ** (2 * modes))
    vec[0] = 1.0
    weights = []
    for n in range(pairs + 1):
        weights.append(float(vec @ vec))
        vec = gen @ vec / (n + 1)
    return weights
