"""Fidelity estimation from three-outcome counts, certification bounds and the source witness."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

SETTING_LABELS = ("012", "021", "120")


def fidelity(rho: np.ndarray, psi: np.ndarray, tol: float = 1e-9) -> float:
    """<psi|rho|psi> for normalized ``psi``, clamped to [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    psi = np.asarray(psi, dtype=complex).ravel()
    if rho.shape != (psi.size, psi.size):
        raise ValueError(f"density matrix {rho.shape} does not match state of dimension {psi.size}")
    value = psi.conj() @ rho @ psi
    if abs(value.imag) > 1e-12 * max(1.0, abs(value)):
        raise ValueError("rho is not Hermitian: complex expectation value")
    f = float(value.real)
    if f < -tol or f > 1 + tol:
        raise ValueError(f"fidelity {f} outside [0, 1]")
    return min(1.0, max(0.0, f))


@dataclass(frozen=True)
class MeasurementSetting:
    """Three-outcome measurement with outcomes |phi+_ij>, |phi-_ij>, |k> and weights +1, -1, +1."""

    label: str
    outcomes: tuple[np.ndarray, np.ndarray, np.ndarray]

    @property
    def operator(self) -> np.ndarray:
        plus, minus, k = self.outcomes
        return np.outer(plus, plus.conj()) - np.outer(minus, minus.conj()) + np.outer(k, k.conj())

    @property
    def unitary(self) -> np.ndarray:
        """Rotation whose row r sends outcome r to detector r."""
        return np.array([v.conj() for v in self.outcomes])


def sigma_settings(phi1: float, phi2: float) -> list[MeasurementSetting]:
    """Settings 012, 021, 120 whose averaged operators give |phi><phi| for
    |phi> = (|0> + e^{i phi1}|1> + e^{i phi2}|2>)/sqrt3."""
    phases = (0.0, phi1, phi2)
    e = np.eye(3, dtype=complex)
    out = []
    for label in SETTING_LABELS:
        i, j, k = (int(c) for c in label)
        rel = np.exp(1j * (phases[j] - phases[i]))
        plus = (e[i] + rel * e[j]) / math.sqrt(2)
        minus = (e[i] - rel * e[j]) / math.sqrt(2)
        out.append(MeasurementSetting(label, (plus, minus, e[k].copy())))
    return out


def phases_of(psi: np.ndarray) -> tuple[float, float]:
    """(phi1, phi2) of an equal-weight qutrit superposition, relative to level 0."""
    psi = np.asarray(psi, dtype=complex)
    if np.max(np.abs(np.abs(psi) - 1 / math.sqrt(3))) > 1e-9:
        raise ValueError("state is not an equal-weight superposition")
    rel = psi / psi[0]
    return float(np.angle(rel[1])), float(np.angle(rel[2]))


@dataclass(frozen=True)
class CountRecord:
    setting: str
    counts: tuple[float, float, float]

    def __post_init__(self):
        if len(self.counts) != 3 or any(not math.isfinite(c) or c < 0 for c in self.counts):
            raise ValueError(f"need three finite non-negative counts, got {self.counts}")


def expected_counts(rho: np.ndarray, settings: Sequence[MeasurementSetting], total: float = 1.0) -> list[CountRecord]:
    """Exact outcome proportions of ``rho`` for each setting, scaled to ``total``."""
    rho = np.asarray(rho, dtype=complex)
    recs = []
    for s in settings:
        probs = [float(np.real(v.conj() @ rho @ v)) for v in s.outcomes]
        recs.append(CountRecord(s.label, tuple(total * max(p, 0.0) for p in probs)))
    return recs


def _ratio(counts: np.ndarray) -> np.ndarray:
    tot = counts.sum(axis=-1)
    return (counts[..., 0] - counts[..., 1] + counts[..., 2]) / tot


def fidelity_from_counts(
    records: Sequence[CountRecord], replicas: int = 10_000, seed: int = 20190612
) -> tuple[float, float]:
    """Plug-in fidelity from the three sigma settings, with a Poisson-resampled error.

    Each setting contributes (n+ - n- + n_k) / (n+ + n- + n_k); the estimate is
    their mean. The error is the standard deviation of that estimate over
    ``replicas`` data sets drawn with Poisson counts around the observed ones.
    """
    if len(records) != 3:
        raise ValueError("one count record per setting is required")
    counts = np.array([r.counts for r in records], dtype=float)
    if np.any(counts.sum(axis=1) <= 0):
        raise ValueError("a setting has zero total counts")
    estimate = float(np.mean(_ratio(counts)))
    rng = np.random.default_rng(seed)
    draws = rng.poisson(counts, size=(replicas, 3, 3)).astype(float)
    ok = np.all(draws.sum(axis=2) > 0, axis=1)
    sims = np.mean(_ratio(draws[ok]), axis=1)
    return estimate, float(np.std(sims, ddof=1))


def computational_fidelity_from_counts(
    counts: Sequence[float], level: int, replicas: int = 10_000, seed: int = 20190612
) -> tuple[float, float]:
    """Fidelity of a computational-basis state: fraction of counts in the right detector."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        raise ValueError("zero total counts")
    estimate = float(counts[level] / counts.sum())
    rng = np.random.default_rng(seed)
    draws = rng.poisson(counts, size=(replicas, counts.size)).astype(float)
    tot = draws.sum(axis=1)
    sims = draws[tot > 0, level] / tot[tot > 0]
    return estimate, float(np.std(sims, ddof=1))


def classical_bound(d: int) -> float:
    """Best measure-and-prepare average fidelity for a d-level system."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    return 2.0 / (d + 1)


def _complement(params) -> np.ndarray:
    t1, t2, f1, f2 = params
    return np.array(
        [math.cos(t1), math.sin(t1) * math.cos(t2) * np.exp(1j * f1), math.sin(t1) * math.sin(t2) * np.exp(1j * f2)]
    )


def subspace_overlap(states: np.ndarray, params) -> float:
    """Mean of ||P_S psi||^2 over ``states`` for the 2D subspace S orthogonal to the complement vector."""
    n = _complement(params)
    return float(np.mean(1.0 - np.abs(states @ n.conj()) ** 2))


def _grid_search(states: np.ndarray, points: int = 9, rounds: int = 12) -> float:
    lo = np.array([0.0, 0.0, -math.pi, -math.pi])
    hi = np.array([math.pi / 2, math.pi / 2, math.pi, math.pi])
    best, best_x = -1.0, None
    for _ in range(rounds):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(4)]
        for x in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 4):
            v = subspace_overlap(states, x)
            if v > best:
                best, best_x = v, x
        half = (hi - lo) / (points - 1)
        lo, hi = best_x - half, best_x + half
    return best


def subspace_fidelity(psi: np.ndarray, basis: np.ndarray) -> float:
    """Best squared overlap of ``psi`` with any state spanned by the orthonormal rows of ``basis``."""
    psi = np.asarray(psi, dtype=complex)
    return float(np.sum(np.abs(np.asarray(basis, dtype=complex).conj() @ psi) ** 2))


def qubit_subspace_bound(states: Sequence[np.ndarray] | None = None, starts: int = 8, seed: int = 3) -> float:
    """Largest average overlap reachable when every output lies in one fixed 2D subspace.

    For each candidate subspace the best output for a state is its normalized
    projection, so the per-state fidelity is ||P_S psi||^2. The maximum over
    subspaces is found with multi-start local optimization and checked
    against a shrinking brute-force grid; disagreement raises. The default
    states are the nine superposition states of the mutually unbiased set.
    """
    if states is None:
        from .protocol import mub_states

        states = mub_states()[3:]
    arr = np.array([np.asarray(s, dtype=complex) for s in states])
    rng = np.random.default_rng(seed)
    best = -1.0
    for _ in range(starts):
        x0 = rng.uniform([0, 0, -math.pi, -math.pi], [math.pi / 2, math.pi / 2, math.pi, math.pi])
        res = minimize(lambda x: -subspace_overlap(arr, x), x0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        best = max(best, -res.fun)
    oracle = _grid_search(arr)
    if abs(best - oracle) > 1e-6:
        raise ArithmeticError(f"optimizer ({best:.9f}) and grid oracle ({oracle:.9f}) disagree")
    return max(best, oracle)


WITNESS_LABELS = ("xx01", "yy01", "xx02", "yy02", "xx12", "yy12", "P")


def _pauli_pair(i: int, j: int, d: int = 3) -> tuple[np.ndarray, np.ndarray]:
    e = np.eye(d, dtype=complex)
    sx = np.outer(e[i], e[j]) + np.outer(e[j], e[i])
    sy = -1j * np.outer(e[i], e[j]) + 1j * np.outer(e[j], e[i])
    return sx, sy


def witness_observables() -> list[np.ndarray]:
    """The seven two-qutrit observables in WITNESS_LABELS order."""
    obs = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        sx, sy = _pauli_pair(i, j)
        obs += [np.kron(sx, sx), np.kron(sy, sy)]
    pop = sum(np.outer(v, v) for v in (np.kron(e, e) for e in np.eye(3)))
    obs.append(pop.astype(complex))
    return obs


def witness_expectations(rho: np.ndarray) -> np.ndarray:
    return np.array([float(np.real(np.trace(o @ rho))) for o in witness_observables()])


def entanglement_witness_fidelity(expectations: Sequence[float]) -> float:
    """Fidelity with (|00>+|11>+|22>)/sqrt3 from the six correlators and the population."""
    e = np.asarray(expectations, dtype=float)
    if e.shape != (7,):
        raise ValueError("expected seven expectation values")
    if np.any(np.abs(e[:6]) > 1 + 1e-9) or not -1e-9 <= e[6] <= 1 + 1e-9:
        raise ValueError("expectation values out of range")
    xx, yy = e[0:6:2], e[1:6:2]
    return float((e[6] + np.sum(xx - yy) / 2) / 3)


@dataclass
class MubReport:
    labels: list[str]
    fidelities: list[float]
    sigmas: list[float]
    mean: float
    sigma_mean: float
    classical_bound: float
    genuine_bound: float

    @property
    def beats_classical(self) -> bool:
        return self.mean > self.classical_bound

    @property
    def beats_genuine(self) -> bool:
        return self.mean > self.genuine_bound

    def to_dict(self) -> dict:
        return {
            "states": [
                {"label": lab, "fidelity": f, "sigma": s}
                for lab, f, s in zip(self.labels, self.fidelities, self.sigmas)
            ],
            "mean": self.mean,
            "sigma_mean": self.sigma_mean,
            "classical_bound": self.classical_bound,
            "genuine_bound": self.genuine_bound,
            "beats_classical": self.beats_classical,
            "beats_genuine": self.beats_genuine,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["state", "fidelity", "sigma"])
        for lab, f, s in zip(self.labels, self.fidelities, self.sigmas):
            w.writerow([lab, repr(f), repr(s)])
        return buf.getvalue()


def _entry_fidelity(entry) -> float:
    if hasattr(entry, "fidelity"):
        return float(entry.fidelity)
    if isinstance(entry, Sequence) and entry and hasattr(entry[0], "probability"):
        total = sum(o.probability for o in entry)
        if total <= 0:
            raise ValueError("no heralding pattern fired")
        return float(sum(o.probability * o.fidelity for o in entry) / total)
    return float(entry)


def mub_suite_report(fidelities: Sequence, sigmas: Sequence[float] | None = None) -> MubReport:
    """Summarize the 12 mutually unbiased inputs in table order.

    Entries may be numbers, objects with ``.fidelity``, or a list of
    heralding outcomes (combined with probability weights).
    """
    from .protocol import MUB_LABELS

    vals = [_entry_fidelity(f) for f in fidelities]
    if len(vals) != 12:
        raise ValueError(f"expected 12 fidelities in table order, got {len(vals)}")
    sig = [0.0] * 12 if sigmas is None else [float(s) for s in sigmas]
    if len(sig) != 12:
        raise ValueError("one sigma per state is required")
    return MubReport(
        labels=list(MUB_LABELS),
        fidelities=vals,
        sigmas=sig,
        mean=float(np.mean(vals)),
        sigma_mean=float(math.sqrt(sum(s * s for s in sig)) / 12),
        classical_bound=classical_bound(3),
        genuine_bound=2.0 / 3.0,
    )
