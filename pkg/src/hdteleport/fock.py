"""Sparse second-quantized states over a labelled register of optical modes.

A :class:`FockState` maps occupation vectors to complex amplitudes. Basis kets
are unit vectors, so probabilities are read directly off squared amplitudes.
Every optical element reduces to a mode unitary acting on creation operators,
see :func:`apply_mode_unitary`.
"""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MAX_PHOTONS = 6
PRUNE = 1e-14
UNITARY_TOL = 1e-10


class Mode(NamedTuple):
    """Label of one optical mode: spatial port, logical level, internal index."""

    port: str
    level: int
    internal: int = 0


@dataclass(frozen=True)
class ModeRegister:
    labels: tuple[Mode, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(Mode(*lab) for lab in self.labels)
        index = {lab: i for i, lab in enumerate(labels)}
        if len(index) != len(labels):
            raise ValueError("mode labels must be unique")
        for lab in labels:
            if lab.internal < 0:
                raise ValueError(f"negative internal index in {lab}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", index)

    @classmethod
    def grid(cls, ports: Iterable[str], levels: int, internal_dim: int = 1) -> ModeRegister:
        return cls(
            tuple(
                Mode(p, k, s)
                for p in ports
                for k in range(levels)
                for s in range(internal_dim)
            )
        )

    @property
    def count(self) -> int:
        return len(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label) -> bool:
        return Mode(*label) in self._index

    def __add__(self, other: ModeRegister) -> ModeRegister:
        return ModeRegister(self.labels + other.labels)

    def index(self, label) -> int:
        try:
            return self._index[Mode(*label)]
        except (KeyError, TypeError):
            raise KeyError(f"unknown mode label {label!r}") from None

    def select(self, port: str | None = None, level: int | None = None) -> list[Mode]:
        """Labels matching the given port and/or level, in register order."""
        return [
            lab
            for lab in self.labels
            if (port is None or lab.port == port) and (level is None or lab.level == level)
        ]


@dataclass(frozen=True)
class FockState:
    """Immutable sparse state. Keys are occupation tuples of length ``register.count``."""

    register: ModeRegister
    amplitudes: Mapping[tuple[int, ...], complex]
    normalized: bool = True

    def __post_init__(self):
        m = self.register.count
        clean = {}
        for occ, amp in self.amplitudes.items():
            occ = tuple(int(n) for n in occ)
            if len(occ) != m:
                raise ValueError(f"occupation {occ} does not match {m} modes")
            if min(occ, default=0) < 0:
                raise ValueError(f"negative occupation {occ}")
            if sum(occ) > MAX_PHOTONS:
                raise ValueError(f"photon number {sum(occ)} exceeds cutoff {MAX_PHOTONS}")
            clean[occ] = complex(amp)
        object.__setattr__(self, "amplitudes", dict(sorted(clean.items())))
        if self.normalized and clean and abs(self.norm_squared() - 1.0) > 1e-10:
            raise ValueError(f"state flagged normalized has norm^2 {self.norm_squared()}")

    @property
    def is_valid(self) -> bool:
        return bool(self.amplitudes)

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalize(self) -> FockState:
        n2 = self.norm_squared()
        if n2 == 0.0:
            raise ValueError("cannot normalize the zero vector")
        s = 1.0 / math.sqrt(n2)
        return FockState(self.register, {k: a * s for k, a in self.amplitudes.items()})

    def scaled(self, c: complex) -> FockState:
        return FockState(
            self.register, {k: a * c for k, a in self.amplitudes.items()}, normalized=False
        )

    def photon_numbers(self) -> set[int]:
        return {sum(k) for k in self.amplitudes}

    def amplitude(self, occ: Sequence[int]) -> complex:
        return self.amplitudes.get(tuple(occ), 0j)

    def probabilities(self) -> dict[tuple[int, ...], float]:
        return {k: abs(a) ** 2 for k, a in self.amplitudes.items()}

    def inner(self, other: FockState) -> complex:
        """<self|other>."""
        if other.register != self.register:
            raise ValueError("register mismatch")
        return sum(a.conjugate() * other.amplitudes.get(k, 0j) for k, a in self.amplitudes.items())

    def occupation(self, placements: Mapping) -> tuple[int, ...]:
        occ = [0] * self.register.count
        for lab, n in placements.items():
            occ[self.register.index(lab)] += n
        return tuple(occ)

    def create(self, mode_amplitudes: Mapping) -> FockState:
        """Apply the creation operator sum_m c_m a_m^dagger. The result is unnormalized."""
        coeffs = [(self.register.index(lab), complex(c)) for lab, c in mode_amplitudes.items()]
        out: dict = defaultdict(complex)
        for occ, amp in self.amplitudes.items():
            for i, c in coeffs:
                if c == 0:
                    continue
                new = list(occ)
                new[i] += 1
                out[tuple(new)] += amp * c * math.sqrt(new[i])
        return FockState(self.register, _prune(out), normalized=False)

    def create_pairs(self, pair_amplitudes: Mapping) -> FockState:
        """Apply sum c * a_m1^dagger a_m2^dagger over ``{(m1, m2): c}``. Unnormalized."""
        out: dict = defaultdict(complex)
        for (m1, m2), c in pair_amplitudes.items():
            for k, a in self.create({m2: 1.0}).create({m1: c}).amplitudes.items():
                out[k] += a
        return FockState(self.register, _prune(out), normalized=False)


def _prune(amps: Mapping) -> dict:
    return {k: a for k, a in amps.items() if abs(a) > PRUNE}


def vacuum(register: ModeRegister) -> FockState:
    return FockState(register, {(0,) * register.count: 1.0})


def make_fock(register: ModeRegister, placements: Iterable[tuple]) -> FockState:
    """Single normalized Fock basis ket with the given (label, count) occupations."""
    occ = [0] * register.count
    for lab, n in placements:
        if n < 0:
            raise ValueError("photon counts must be non-negative")
        occ[register.index(lab)] += int(n)
    if sum(occ) > MAX_PHOTONS:
        raise ValueError(f"photon number {sum(occ)} exceeds cutoff {MAX_PHOTONS}")
    return FockState(register, {tuple(occ): 1.0})


def superpose(terms: Iterable[tuple[complex, FockState]], normalize: bool = False) -> FockState:
    terms = list(terms)
    if not terms:
        raise ValueError("no terms to superpose")
    register = terms[0][1].register
    out: dict = defaultdict(complex)
    for c, st in terms:
        if st.register != register:
            raise ValueError("register mismatch between superposed states")
        for k, a in st.amplitudes.items():
            out[k] += c * a
    state = FockState(register, _prune(out), normalized=False)
    return state.normalize() if normalize else state


def check_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"mode unitary must be square, got shape {u.shape}")
    err = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if err > tol:
        raise ValueError(f"matrix is not unitary (max deviation {err:.3g})")
    return u


def apply_mode_unitary(u: np.ndarray, targets: Sequence, state: FockState) -> FockState:
    """Evolve ``state`` by the single-particle unitary ``u`` on the ``targets`` modes.

    Each creation operator on target ``j`` maps to ``sum_k u[k, j]`` times the
    creation operator on target ``k``. Products are expanded photon by photon,
    merging equal monomials as they appear, so the cost grows with the number
    of distinct output configurations rather than with the permanent sum.
    """
    u = check_unitary(u)
    if u.shape[0] != len(targets):
        raise ValueError(f"unitary of side {u.shape[0]} given {len(targets)} targets")
    reg = state.register
    idx = [reg.index(t) for t in targets]
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate target modes")
    cols = [[(k, u[k, j]) for k in range(len(idx)) if abs(u[k, j]) > PRUNE] for j in range(len(idx))]
    zero = (0,) * len(idx)

    out: dict = defaultdict(complex)
    for occ, amp in state.amplitudes.items():
        rest = list(occ)
        photons = []
        denom = 1
        for j, m in enumerate(idx):
            n = occ[m]
            if n:
                photons.extend([j] * n)
                denom *= math.factorial(n)
                rest[m] = 0
        monomials = {zero: amp / math.sqrt(denom)}
        for j in photons:
            nxt: dict = defaultdict(complex)
            for key, c in monomials.items():
                for k, ukj in cols[j]:
                    new = list(key)
                    new[k] += 1
                    nxt[tuple(new)] += c * ukj
            monomials = nxt
        for key, c in monomials.items():
            weight = 1
            target = list(rest)
            for k, n in enumerate(key):
                if n:
                    weight *= math.factorial(n)
                    target[idx[k]] = n
            out[tuple(target)] += c * math.sqrt(weight)
    if state.normalized:
        return _renorm_checked(reg, out)
    return FockState(reg, _prune(out), normalized=False)


def _renorm_checked(reg: ModeRegister, amps: Mapping) -> FockState:
    pruned = _prune(amps)
    n2 = sum(abs(a) ** 2 for a in pruned.values())
    if abs(n2 - 1.0) > 1e-10:
        raise ArithmeticError(f"norm drifted to {n2} under a unitary")
    return FockState(reg, pruned)


def _pattern_modes(pattern) -> list:
    return list(getattr(pattern, "modes", pattern))


def post_select_pattern(state: FockState, pattern, discard: Sequence = ()) -> tuple[float, FockState]:
    """Condition on exactly one photon in each pattern mode and none in each discard mode.

    Returns the probability of that outcome and the renormalized state of the
    remaining modes. A zero-probability outcome yields an empty, unnormalized
    state whose ``is_valid`` is False.
    """
    reg = state.register
    pat = [reg.index(m) for m in _pattern_modes(pattern)]
    dis = [reg.index(m) for m in discard]
    if len(set(pat)) != len(pat) or set(pat) & set(dis):
        raise ValueError("pattern and discard modes must be distinct and disjoint")
    measured = set(pat) | set(dis)
    keep = [i for i in range(reg.count) if i not in measured]
    survivors = ModeRegister(tuple(reg.labels[i] for i in keep))

    out: dict = defaultdict(complex)
    for occ, amp in state.amplitudes.items():
        if all(occ[i] == 1 for i in pat) and all(occ[i] == 0 for i in dis):
            out[tuple(occ[i] for i in keep)] += amp
    prob = float(sum(abs(a) ** 2 for a in out.values()))
    if prob <= 0.0:
        return 0.0, FockState(survivors, {}, normalized=False)
    s = 1.0 / math.sqrt(prob)
    return prob, FockState(survivors, {k: a * s for k, a in out.items()})


def reduce_to_qudit(state: FockState, level_modes: Sequence, tol: float = 1e-9) -> np.ndarray:
    """Density matrix of the single photon shared among ``level_modes``.

    Level ``k`` is one photon in ``level_modes[k]``; register modes that differ
    from it only by internal index count as the same level. Internal indices and
    every other mode are traced out.
    """
    reg = state.register
    groups = []
    for lab in level_modes:
        lab = Mode(*lab)
        reg.index(lab)
        groups.append(
            [reg.index(m) for m in reg.labels if m.port == lab.port and m.level == lab.level]
        )
    level_of = {i: k for k, g in enumerate(groups) for i in g}
    if len(level_of) != sum(len(g) for g in groups):
        raise ValueError("level modes overlap")

    d = len(groups)
    env: dict = defaultdict(lambda: np.zeros(d, dtype=complex))
    bad = 0.0
    for occ, amp in state.amplitudes.items():
        hits = [(i, occ[i]) for i in level_of if occ[i]]
        if len(hits) != 1 or hits[0][1] != 1:
            bad += abs(amp) ** 2
            continue
        i = hits[0][0]
        rest = list(occ)
        rest[i] = 0
        key = (reg.labels[i].internal, tuple(rest))
        env[key][level_of[i]] += amp
    total = state.norm_squared()
    if total == 0.0 or bad > tol * total:
        raise ValueError(f"weight {bad:.3g} outside the single-photon subspace of the level modes")
    rho = np.zeros((d, d), dtype=complex)
    for vec in env.values():
        rho += np.outer(vec, vec.conj())
    return rho / np.trace(rho).real


def check_density(rho: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError("density operator does not have unit trace")
    if np.min(np.linalg.eigvalsh(rho)) < -tol:
        raise ValueError("density operator has a negative eigenvalue")
    return rho


class LossRecord(NamedTuple):
    lost: tuple[int, ...]
    weight: float
    state: FockState


def apply_loss(state: FockState, efficiency) -> list[LossRecord]:
    """Exact pure-loss channel: each photon survives independently.

    ``efficiency`` is a single transmission or a mapping from mode label to
    transmission (unlisted modes are lossless). Returns one record per pattern
    of lost photons, holding its probability and the normalized surviving state.
    """
    reg = state.register
    if isinstance(efficiency, Mapping):
        eta = [1.0] * reg.count
        for lab, e in efficiency.items():
            eta[reg.index(lab)] = float(e)
    else:
        eta = [float(efficiency)] * reg.count
    if any(not 0.0 <= e <= 1.0 for e in eta):
        raise ValueError("efficiency must lie in [0, 1]")

    branches: dict = defaultdict(lambda: defaultdict(complex))
    for occ, amp in state.amplitudes.items():
        options = [range(n + 1) for n in occ]
        for lost in _product(options):
            f = 1.0
            for n, k, e in zip(occ, lost, eta):
                if n:
                    f *= math.comb(n, k) * e ** (n - k) * (1.0 - e) ** k
            if f == 0.0:
                continue
            left = tuple(n - k for n, k in zip(occ, lost))
            branches[lost][left] += amp * math.sqrt(f)
    records = []
    for lost in sorted(branches):
        amps = _prune(branches[lost])
        w = float(sum(abs(a) ** 2 for a in amps.values()))
        if w > 0.0:
            s = 1.0 / math.sqrt(w)
            records.append(LossRecord(lost, w, FockState(reg, {k: a * s for k, a in amps.items()})))
    return records


def _product(options):
    if not options:
        yield ()
        return
    head, *tail = options
    for rest in _product(tail):
        for k in head:
            yield (k,) + rest


def detection_probability(
    state: FockState,
    clicks: Sequence[Sequence],
    silent: Sequence[Sequence] = (),
    efficiency: float = 1.0,
    resolving: bool = False,
) -> float:
    """Probability that every detector in ``clicks`` fires and none in ``silent`` does.

    A detector is a group of mode labels whose photons it counts. Threshold
    detectors fire on one or more detected photons; with ``resolving`` a
    clicking detector must register exactly one photon. Each photon is detected
    independently with probability ``efficiency``.
    """
    reg = state.register
    click_idx = [[reg.index(m) for m in det] for det in clicks]
    silent_idx = [[reg.index(m) for m in det] for det in silent]
    miss = 1.0 - efficiency
    total = 0.0
    for occ, amp in state.amplitudes.items():
        p = abs(amp) ** 2
        for det in silent_idx:
            n = sum(occ[i] for i in det)
            if n:
                p *= miss**n
        for det in click_idx:
            n = sum(occ[i] for i in det)
            if resolving:
                p *= n * efficiency * miss ** (n - 1) if n else 0.0
            else:
                p *= 1.0 - miss**n
            if p == 0.0:
                break
        total += p
    return total
