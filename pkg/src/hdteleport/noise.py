"""Imperfect sources, detectors and optics for the qutrit teleportation pipeline.

The noisy pipeline uses a first-quantized engine instead of the sparse Fock
expansion. Bob's photons never interfere with anything, so projecting them onto
a detection configuration leaves a product of single-photon creation
operators on the Bell-measurement side. For such a product the probability of
an output occupation is a sum of permanents weighted by the overlaps of the
photons' internal (spectral) vectors at each detector. The Fock engine in
``fock`` serves as the oracle for this in the tests.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import json
import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import fock
from .analysis import (
    CountRecord,
    entanglement_witness_fidelity,
    phases_of,
    sigma_settings,
)
from .fock import MAX_PHOTONS, FockState, Mode, ModeRegister, apply_mode_unitary, vacuum
from .optics import beam_splitter, hybrid_multiport, qft_multiport
from .protocol import U31_FROZEN, mub_states

DEFAULT_SEED = 7_340_219_586_113  # fits in 64 bits; used by every stochastic sweep
COHERENCE_TIME_FS = 450.0
REFERENCE_BANDWIDTH_NM = 3.0
# source-2 and source-1 pair numbers kept in the noisy pipeline; (2, 2) would
# need eight photons, beyond the cutoff, and is O(p^4)
SECTORS = ((1, 1), (2, 1), (1, 2))


@dataclass(frozen=True)
class NoiseParams:
    p: float = 0.013
    P_d: float = 0.16
    v_same: float = 0.92
    v_cross: float = 0.82
    rH_deviation: float = 0.0
    phase_noise: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p < 0.1:
            raise ValueError(f"pair probability p={self.p} outside [0, 0.1)")
        for name in ("P_d", "v_same", "v_cross"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not 0.0 <= self.rH_deviation <= 1 / 3:
            raise ValueError(f"rH_deviation={self.rH_deviation} outside [0, 1/3]")
        if self.phase_noise < 0:
            raise ValueError("phase_noise must be non-negative")

    def replace(self, **changes) -> NoiseParams:
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


DEFAULT_PARAMS = NoiseParams()


@dataclass
class SweepResult:
    """Grid of mean fidelities and success rates; arrays are indexed like ``axes``."""

    axes: tuple[tuple[str, tuple[float, ...]], ...]
    fidelity: np.ndarray
    rate: np.ndarray
    trials: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(len(vals) for _, vals in self.axes)
        for name in ("fidelity", "rate", "trials"):
            arr = np.asarray(getattr(self, name))
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, axes give {shape}")
            setattr(self, name, arr)
        if np.any(self.fidelity < -1e-9) or np.any(self.fidelity > 1 + 1e-9):
            raise ValueError("fidelity outside [0, 1]")

    def rows(self) -> list[dict]:
        names = [n for n, _ in self.axes]
        out = []
        for idx in itertools.product(*(range(len(v)) for _, v in self.axes)):
            row = {n: self.axes[i][1][k] for i, (n, k) in enumerate(zip(names, idx))}
            row.update(fidelity=float(self.fidelity[idx]), rate=float(self.rate[idx]), trials=int(self.trials[idx]))
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = [n for n, _ in self.axes] + ["fidelity", "rate", "trials"]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.rows():
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in cols])
        return buf.getvalue()

    def to_record(self) -> dict:
        return {
            "axes": [{"name": n, "values": list(v)} for n, v in self.axes],
            "rows": self.rows(),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------- sources


def _source_modes(kind: str):
    if kind == "entangled3":
        return ("b", "c"), 3
    if kind == "pair2":
        return ("a", "x"), 1
    raise ValueError(f"unknown source kind {kind!r}")


def pair_weights(p: float, kind: str, pairs: int) -> list[float]:
    """Relative weight of 0..pairs emitted pairs, from the multimode squeezed-state series."""
    _, modes = _source_modes(kind)
    return [p**n * math.comb(n + modes - 1, n) / modes**n for n in range(pairs + 1)]


def spdc_source(p: float, kind: str = "entangled3", truncation: int = 2, alpha=None) -> FockState:
    """Pair source expanded to ``truncation`` pairs and renormalized.

    ``entangled3`` emits sum_k b_k c_k / sqrt3 per pair. ``pair2`` emits one
    photon ``a`` in ``alpha`` (default level 0) and one ancilla ``x`` in the
    uniform superposition.
    """
    if not 0.0 <= p < 0.1:
        raise ValueError(f"pair probability p={p} outside [0, 0.1)")
    (left, right), modes = _source_modes(kind)
    if not 0 <= truncation <= MAX_PHOTONS // 2:
        raise ValueError(f"truncation must lie in 0..{MAX_PHOTONS // 2}")
    reg = ModeRegister(tuple(Mode(port, k) for port in (left, right) for k in range(3)))
    if kind == "entangled3":
        pair = {(Mode(left, k), Mode(right, k)): 1 / math.sqrt(3) for k in range(3)}
    else:
        amp = np.array([1, 0, 0] if alpha is None else alpha, dtype=complex)
        amp = amp / np.linalg.norm(amp)
        pair = {(Mode(left, k), Mode(right, l)): amp[k] / math.sqrt(3) for k in range(3) for l in range(3)}
    terms = []
    term = vacuum(reg)
    for n in range(truncation + 1):
        if n:
            term = term.create_pairs(pair).scaled(math.sqrt(p) / n)
        terms.append((1.0, term))
    state = fock.superpose(terms)
    kept = state.norm_squared()
    expected = sum(pair_weights(p, kind, truncation))
    if abs(kept - expected) > 1e-12 * expected:
        raise ArithmeticError(f"pair expansion norm {kept} differs from the series value {expected}")
    full = (1 - p / modes) ** (-modes)
    if (full - kept) / full > p ** (truncation + 1) + 1e-15:
        raise ArithmeticError("truncation error exceeds p**(truncation+1)")
    return state.normalize()


def apply_loss(state: FockState, P_d) -> list[fock.LossRecord]:
    """Exact loss: one record per pattern of lost photons (``P_d`` may be per mode)."""
    return fock.apply_loss(state, P_d)


def click_probability(state: FockState, detector: Sequence, P_d: float) -> float:
    """Threshold click probability of one detector grouping the given modes."""
    return fock.detection_probability(state, [list(detector)], (), P_d)


# ---------------------------------------------------------------- distinguishability


@dataclass(frozen=True)
class InternalModes:
    """Internal (spectral) labels of tagged photons. Unset pairs are indistinguishable."""

    tags: tuple[str, ...]
    visibility: Mapping = field(default_factory=dict)

    def gram(self) -> np.ndarray:
        """Overlap matrix with entries sqrt(v), projected to the nearest PSD matrix when inconsistent."""
        n = len(self.tags)
        g = np.eye(n)
        for i, j in itertools.combinations(range(n), 2):
            v = self.visibility.get(frozenset((self.tags[i], self.tags[j])), 1.0)
            g[i, j] = g[j, i] = math.sqrt(v)
        w, q = np.linalg.eigh(g)
        if w[0] < -1e-12:
            g = (q * np.clip(w, 0, None)) @ q.T
            d = np.sqrt(np.diag(g))
            g = g / np.outer(d, d)
        return g

    def vectors(self) -> dict[str, np.ndarray]:
        w, q = np.linalg.eigh(self.gram())
        keep = w > 1e-12
        basis = q[:, keep] * np.sqrt(w[keep])
        return {t: basis[i].astype(complex) for i, t in enumerate(self.tags)}


def set_internal_overlap(modes: InternalModes, pair: tuple[str, str], v: float) -> InternalModes:
    """Give the tagged photons overlap magnitude sqrt(v), i.e. HOM visibility v."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility {v} outside [0, 1]")
    a, b = pair
    if a not in modes.tags or b not in modes.tags or a == b:
        raise ValueError(f"unknown or repeated tags {pair}")
    vis = dict(modes.visibility)
    vis[frozenset(pair)] = float(v)
    return InternalModes(modes.tags, vis)


def teleport_internal_modes(params: NoiseParams) -> tuple[dict, dict]:
    """Internal vectors for the Bell-measurement photons and for Bob's photon.

    Photons a and x come from one crystal (v_same); either of them against b
    is cross-crystal (v_cross). The three emission paths of the entangled
    source are themselves partially distinguishable (v_same per photon), and
    Gaussian path-phase noise adds a factor exp(-sigma^2) to the path overlaps
    of photon c.
    """
    tags = ("a", "x", "b0", "b1", "b2")
    m = InternalModes(tags)
    m = set_internal_overlap(m, ("a", "x"), params.v_same)
    for k in range(3):
        m = set_internal_overlap(m, ("a", f"b{k}"), params.v_cross)
        m = set_internal_overlap(m, ("x", f"b{k}"), params.v_cross)
    for k, l in itertools.combinations(range(3), 2):
        m = set_internal_overlap(m, (f"b{k}", f"b{l}"), params.v_same)
    vis_c = params.v_same * math.exp(-2 * params.phase_noise**2)
    c = InternalModes(("c0", "c1", "c2"))
    for k, l in itertools.combinations(range(3), 2):
        c = set_internal_overlap(c, (f"c{k}", f"c{l}"), vis_c)
    return m.vectors(), c.vectors()


def hom_coincidence(v: float) -> float:
    """Coincidence probability of two photons with visibility ``v`` on a balanced splitter."""
    vecs = set_internal_overlap(InternalModes(("1", "2")), ("1", "2"), v).vectors()
    dim = len(vecs["1"])
    reg = ModeRegister(tuple(Mode(port, 0, s) for port in ("u", "w") for s in range(dim)))
    st = vacuum(reg).create({Mode("u", 0, s): vecs["1"][s] for s in range(dim)})
    st = st.create({Mode("w", 0, s): vecs["2"][s] for s in range(dim)}).normalize()
    for s in range(dim):
        st = apply_mode_unitary(beam_splitter(math.pi / 4), [Mode("u", 0, s), Mode("w", 0, s)], st)
    dets = [[Mode(port, 0, s) for s in range(dim)] for port in ("u", "w")]
    return fock.detection_probability(st, dets)


@dataclass
class HomScan:
    delays: np.ndarray
    coincidence: np.ndarray
    tau_c: float
    v_max: float
    baseline: float = 0.5

    @property
    def normalized(self) -> np.ndarray:
        return self.coincidence / self.baseline

    def visibility(self) -> float:
        return float((self.baseline - self.coincidence.min()) / self.baseline)


def coherence_time(bandwidth_nm: float) -> float:
    if bandwidth_nm <= 0:
        raise ValueError("filter bandwidth must be positive")
    return COHERENCE_TIME_FS * REFERENCE_BANDWIDTH_NM / bandwidth_nm


def hom_scan(delays_fs: Sequence[float], bandwidth_nm: float = 3.0, v_max: float = 0.82) -> HomScan:
    """Two-photon dip with Gaussian overlap v_max * exp(-(tau/tau_c)^2)."""
    tau_c = coherence_time(bandwidth_nm)
    delays = np.asarray(delays_fs, dtype=float)
    vis = v_max * np.exp(-((delays / tau_c) ** 2))
    coinc = np.array([hom_coincidence(float(v)) for v in vis])
    return HomScan(delays, coinc, tau_c, v_max)


# ---------------------------------------------------------------- first-quantized engine


@lru_cache(maxsize=None)
def _configs(n: int, size: int):
    cfg = np.array(list(itertools.combinations_with_replacement(range(size), n)), dtype=np.intp).reshape(-1, n)
    counts = np.zeros((len(cfg), size), dtype=np.intp)
    for i in range(n):
        np.add.at(counts, (np.arange(len(cfg)), cfg[:, i]), 1)
    norm = np.prod([[math.factorial(int(c)) for c in row] for row in counts], axis=1).astype(float)
    return cfg, counts, norm


@lru_cache(maxsize=None)
def _subsets(n: int):
    masks = np.array([[(s >> i) & 1 for i in range(n)] for s in range(1, 2**n)], dtype=float)
    signs = np.array([(-1) ** (n - int(m.sum())) for m in masks], dtype=float)
    return masks.T.copy(), signs


@lru_cache(maxsize=None)
def _coset_reps(species: tuple) -> tuple:
    """Permutations up to relabelling within groups of identical photons, with multiplicities."""
    groups = {}
    for j, s in enumerate(species):
        groups.setdefault(s, []).append(j)
    members = [tuple(g) for g in groups.values()]
    reps: dict = {}
    for pi in itertools.permutations(range(len(species))):
        key = tuple(tuple(sorted(pi[j] for j in g)) for g in members)
        if key in reps:
            reps[key][1] += 1
        else:
            reps[key] = [pi, 1]
    return tuple((tuple(p), m) for p, m in reps.values())


def output_distribution(photons: np.ndarray, species: Sequence | None = None) -> np.ndarray:
    """Weights of every output occupation for a product of single-photon creation operators.

    ``photons`` has shape (n, S, D): photon i's amplitude at output mode d with
    internal component s. Returns one weight per configuration of
    ``configurations(n, S)``; they sum to the squared norm of the state.
    ``species`` marks photons with identical vectors (speed-up only).
    """
    photons = np.asarray(photons, dtype=complex)
    n, size, _ = photons.shape
    cfg, _, norm = _configs(n, size)
    if n == 0:
        return np.ones(1)
    species = tuple(range(n)) if species is None else tuple(species)
    kmat = np.einsum("ids,jds->dij", photons.conj(), photons)
    masks, signs = _subsets(n)
    cols = np.arange(n)
    total = np.zeros(len(cfg), dtype=complex)
    for pi, mult in _coset_reps(species):
        a = kmat[:, list(pi), cols][cfg]  # a[c, k, j] = K_{d_k}[pi(j), j]
        total += mult * (np.prod(a @ masks, axis=1) @ signs)
    return total.real / norm


def configurations(n: int, size: int) -> np.ndarray:
    """Photon counts per output mode, one row per configuration."""
    return _configs(n, size)[1]


def threshold_response(counts: np.ndarray, clicks: Sequence[int], silent: Sequence[int], P_d: float,
                       resolving: bool = False) -> np.ndarray:
    """Probability that each ``clicks`` detector fires and each ``silent`` one stays dark."""
    q = 1.0 - P_d
    out = np.ones(len(counts))
    for d in silent:
        out *= q ** counts[:, d]
    for d in clicks:
        n = counts[:, d]
        out *= n * P_d * q ** np.maximum(n - 1, 0) if resolving else 1.0 - q**n
    return out


# ---------------------------------------------------------------- noisy teleportation

PORT_INDEX = {"a": 0, "b": 1, "x": 2}
N_OUT = 10  # a'0..2, b'0..2, x'0..2, unmonitored b level 3
B_EXTRA = 9


def ideal_transfer() -> np.ndarray:
    """Single-photon map from inputs a0..2, b0..2, x0..2 to the ten outputs."""
    f = qft_multiport(3)
    t = np.zeros((N_OUT, 9), dtype=complex)
    for k in range(3):
        for p in range(3):
            t[3 * p + k, k] = f[p, 0]
            t[3 * p + k, 6 + k] = f[p, 2]
            for l in range(3):
                t[3 * p + l, 3 + k] += f[p, 1] * U31_FROZEN[l, k]
        t[B_EXTRA, 3 + k] = U31_FROZEN[3, k]
    return t


def clean_pattern_detectors() -> list[list[int]]:
    return [[3 * p + k for k in range(3)] for p in range(3)]


def bob_response(jcounts: np.ndarray, P_d: float, resolving: bool = False) -> np.ndarray:
    """Probability that only Bob's detector j fires, for each j."""
    return np.array([
        threshold_response(jcounts[None, :], [j], [i for i in range(3) if i != j], P_d, resolving)[0]
        for j in range(3)
    ])


def _bob_configs(n1: int, internal: int):
    """Multisets of Bob's (detector, internal component) labels with 1/prod(mult!) weights."""
    labels = [(j, t) for j in range(3) for t in range(internal)]
    for combo in itertools.combinations_with_replacement(labels, n1):
        mult = math.prod(math.factorial(combo.count(x)) for x in set(combo))
        jc = np.bincount([j for j, _ in combo], minlength=3)
        yield combo, 1.0 / mult, jc


@dataclass
class _Run:
    sector: tuple[int, int]
    jcounts: np.ndarray
    weights: np.ndarray  # over configurations of the sector's photons


def _setting_list(alpha: np.ndarray):
    """(Bob rotation, outcome eigenvalues) for the fidelity estimator of one input."""
    nz = np.flatnonzero(np.abs(alpha) > 1e-9)
    if len(nz) == 1:
        eig = np.zeros(3)
        eig[nz[0]] = 1.0
        return [(np.eye(3, dtype=complex), eig)]
    return [(s.unitary, np.array([1.0, -1.0, 1.0])) for s in sigma_settings(*phases_of(alpha))]


def _teleport_runs(alpha: np.ndarray, bob_u: np.ndarray, params: NoiseParams) -> list[_Run]:
    vecs, cvecs = teleport_internal_modes(params)
    dim = len(vecs["a"])
    t = ideal_transfer()
    a_in = np.zeros((9, dim), dtype=complex)
    x_in = np.zeros((9, dim), dtype=complex)
    for k in range(3):
        a_in[k] = alpha[k] * vecs["a"]
        x_in[6 + k] = vecs["x"] / math.sqrt(3)
    a_out, x_out = t @ a_in, t @ x_in
    cmat = np.array([cvecs[f"c{k}"] for k in range(3)])  # cmat[k, t] = <f_t|e_ck>
    runs = []
    for n1, n2 in SECTORS:
        for combo, w, jc in _bob_configs(n1, cmat.shape[1]):
            photons, species = [], []
            for j, tt in combo:
                b_in = np.zeros((9, dim), dtype=complex)
                for k in range(3):
                    b_in[3 + k] = bob_u[j, k] * cmat[k, tt] * vecs[f"b{k}"] / math.sqrt(3)
                photons.append(t @ b_in)
                species.append((j, tt))
            photons += [a_out] * n2 + [x_out] * n2
            species += ["a"] * n2 + ["x"] * n2
            dist = output_distribution(np.array(photons), species)
            runs.append(_Run((n1, n2), jc, w * dist / math.factorial(n2) ** 2))
    return runs


def _source_norm(p: float) -> float:
    return sum(pair_weights(p, "entangled3", 2)) * sum(pair_weights(p, "pair2", 2))


def _events(runs: list[_Run], p: float, P_d: float, resolving: bool) -> np.ndarray:
    """Probability per pulse of a clean-pattern herald with Bob's detector j alone firing."""
    dets = clean_pattern_detectors()
    monitored = [d for row in dets for d in row]
    resp = {}
    ev = np.zeros(3)
    for r in runs:
        n = sum(r.sector) + r.sector[1]
        if n not in resp:
            counts = configurations(n, N_OUT)
            resp[n] = sum(
                threshold_response(counts, pat, [d for d in monitored if d not in pat], P_d, resolving)
                for pat in dets
            )
        ev += p ** sum(r.sector) * float(r.weights @ resp[n]) * bob_response(r.jcounts, P_d, resolving)
    return ev / _source_norm(p)


@dataclass
class NoisyInput:
    alpha: np.ndarray
    settings: list  # (eigenvalues, runs) per Bob setting

    def events(self, p: float, P_d: float, resolving: bool = False) -> list[np.ndarray]:
        return [_events(runs, p, P_d, resolving) for _, runs in self.settings]

    def fidelity_and_rate(self, p: float, P_d: float, resolving: bool = False) -> tuple[float, float]:
        evs = self.events(p, P_d, resolving)
        fids = [float(eig @ ev / ev.sum()) for (eig, _), ev in zip(self.settings, evs)]
        return float(np.mean(fids)), float(np.mean([ev.sum() for ev in evs]))


def prepare_noisy_input(alpha, params: NoiseParams = DEFAULT_PARAMS) -> NoisyInput:
    """Simulate one input once; the result can be evaluated at any p and P_d."""
    alpha = np.asarray(alpha, dtype=complex)
    return NoisyInput(alpha, [(eig, _teleport_runs(alpha, u, params)) for u, eig in _setting_list(alpha)])


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def prepare_mub_inputs(params: NoiseParams = DEFAULT_PARAMS, workers: int = 1) -> list[NoisyInput]:
    return _map(lambda a: prepare_noisy_input(a, params), mub_states(), workers)


def noisy_mub_fidelities(params: NoiseParams = DEFAULT_PARAMS, resolving: bool = False,
                         workers: int = 1) -> list[tuple[float, float]]:
    """(fidelity, four-fold rate per pulse) for each of the 12 inputs at ``params``."""
    return [x.fidelity_and_rate(params.p, params.P_d, resolving) for x in prepare_mub_inputs(params, workers)]


def noisy_mub_counts(params: NoiseParams = DEFAULT_PARAMS, pulses: float = 1e12,
                     workers: int = 1) -> list[list[float] | list[CountRecord]]:
    """Expected detector counts per input after ``pulses`` laser pulses per setting.

    Computational inputs give the three Bob detector counts; superposition
    inputs give one CountRecord per sigma setting.
    """
    out = []
    for x in prepare_mub_inputs(params, workers):
        evs = x.events(params.p, params.P_d)
        if len(evs) == 1:
            out.append([float(c) for c in pulses * evs[0]])
        else:
            labels = [s.label for s in sigma_settings(*phases_of(x.alpha))]
            out.append([CountRecord(lab, tuple(float(c) for c in pulses * ev)) for lab, ev in zip(labels, evs)])
    return out


def _check_grid(pd_grid, p_grid):
    for v in pd_grid:
        if not 0.0 < v <= 1.0:
            raise ValueError(f"P_d={v} outside (0, 1]")
    for v in p_grid:
        if not 0.0 < v < 0.1:
            raise ValueError(f"p={v} outside (0, 0.1)")


@dataclass
class LandscapeModel:
    """The 12 inputs simulated once at fixed distinguishability; cheap to evaluate at any p, P_d."""

    base: NoiseParams
    inputs: list[NoisyInput]

    @classmethod
    def prepare(cls, base: NoiseParams = DEFAULT_PARAMS, workers: int = 1) -> LandscapeModel:
        return cls(base, prepare_mub_inputs(base, workers))

    def evaluate(self, pd_grid: Sequence[float], p_grid: Sequence[float], resolving: bool = False) -> SweepResult:
        _check_grid(pd_grid, p_grid)
        fid = np.zeros((len(pd_grid), len(p_grid)))
        rate = np.zeros_like(fid)
        for i, pd in enumerate(pd_grid):
            for j, p in enumerate(p_grid):
                vals = [x.fidelity_and_rate(p, pd, resolving) for x in self.inputs]
                fid[i, j] = np.mean([f for f, _ in vals])
                rate[i, j] = np.mean([r for _, r in vals])
        meta = {"params": self.base.as_dict(), "resolving": resolving, "cutoff": MAX_PHOTONS,
                "inputs": len(self.inputs)}
        return SweepResult(
            (("P_d", tuple(float(v) for v in pd_grid)), ("p", tuple(float(v) for v in p_grid))),
            fid, rate, np.full(fid.shape, len(self.inputs)), meta,
        )


def fidelity_landscape(pd_grid: Sequence[float], p_grid: Sequence[float], base: NoiseParams = DEFAULT_PARAMS,
                       resolving: bool = False, workers: int = 1) -> SweepResult:
    """Mean fidelity over the 12 mutually unbiased inputs on a P_d x p grid.

    Distinguishability and phase noise come from ``base``; its p and P_d are ignored.
    The rate column is the four-fold herald probability per pulse.
    """
    _check_grid(pd_grid, p_grid)
    return LandscapeModel.prepare(base, workers).evaluate(pd_grid, p_grid, resolving)


def rate_slope(p_values: Sequence[float], rates: Sequence[float]) -> float:
    """Least-squares slope of log(rate) against log(p)."""
    return float(np.polyfit(np.log(p_values), np.log(rates), 1)[0])


# ---------------------------------------------------------------- source witness


@dataclass
class WitnessResult:
    expectations: np.ndarray
    fidelity: float
    coincidence_rate: float


def _witness_bases():
    e = np.eye(3, dtype=complex)
    out = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        k = 3 - i - j
        for ph in (1.0, 1j):
            vecs = [(e[i] + ph * e[j]) / math.sqrt(2), (e[i] - ph * e[j]) / math.sqrt(2), e[k]]
            out.append((np.array([v.conj() for v in vecs]), np.array([1.0, -1.0, 0.0])))
    return out


def _pair_joint(u: np.ndarray, params: NoiseParams, resolving: bool) -> np.ndarray:
    """Joint probability of the single b click i and single c click j, summed over pair numbers."""
    m = InternalModes(("b0", "b1", "b2"))
    c = InternalModes(("c0", "c1", "c2"))
    vis_c = params.v_same * math.exp(-2 * params.phase_noise**2)
    for k, l in itertools.combinations(range(3), 2):
        m = set_internal_overlap(m, (f"b{k}", f"b{l}"), params.v_same)
        c = set_internal_overlap(c, (f"c{k}", f"c{l}"), vis_c)
    bv, cv = m.vectors(), c.vectors()
    cmat = np.array([cv[f"c{k}"] for k in range(3)])
    joint = np.zeros((3, 3))
    for n1 in (1, 2):
        counts = configurations(n1, 3)
        resp = np.array([threshold_response(counts, [i], [d for d in range(3) if d != i], params.P_d, resolving)
                         for i in range(3)])
        for combo, w, jc in _bob_configs(n1, cmat.shape[1]):
            photons = []
            for j, tt in combo:
                b_in = np.array([u[j, k] * cmat[k, tt] * bv[f"b{k}"] / math.sqrt(3) for k in range(3)])
                photons.append(u @ b_in)
            dist = output_distribution(np.array(photons), combo)
            joint += np.outer(resp @ (w * dist), bob_response(jc, params.P_d, resolving)) * params.p**n1
    return joint / sum(pair_weights(params.p, "entangled3", 2))


def simulate_witness(params: NoiseParams = DEFAULT_PARAMS, resolving: bool = False) -> WitnessResult:
    """Six two-site correlators and the population of the noisy entangled source."""
    exps = []
    for u, eig in _witness_bases():
        joint = _pair_joint(u, params, resolving)
        exps.append(float(eig @ joint @ eig / joint.sum()))
    joint = _pair_joint(np.eye(3, dtype=complex), params, resolving)
    pop = float(np.trace(joint) / joint.sum())
    exps.append(pop)
    arr = np.array(exps)
    return WitnessResult(arr, entanglement_witness_fidelity(arr), float(joint.sum()))


# ---------------------------------------------------------------- splitting-ratio sweep

HYBRID_A, HYBRID_B, HYBRID_X = 0, 2, 5
N_PHYS = 19  # six physical outputs per level plus b level 3


def experimental_transfer(r_h: Sequence[float], phases: Sequence[float] | None = None) -> np.ndarray:
    """Single-photon map through U31 and three hybrid multiports with per-level reflectivity."""
    t = np.zeros((N_PHYS, 9), dtype=complex)
    ph = np.ones(3) if phases is None else np.exp(1j * np.asarray(phases, dtype=float))
    for k in range(3):
        h = hybrid_multiport(r_h[k])
        t[6 * k:6 * k + 6, k] = h[:, HYBRID_A]
        t[6 * k:6 * k + 6, 6 + k] = h[:, HYBRID_X]
    for k in range(3):
        for l in range(3):
            h = hybrid_multiport(r_h[l])
            t[6 * l:6 * l + 6, 3 + k] += h[:, HYBRID_B] * U31_FROZEN[l, k] * ph[k]
        t[18, 3 + k] = U31_FROZEN[3, k] * ph[k]
    return t


def _perm3(m: np.ndarray) -> complex:
    return sum(m[0, a] * m[1, b] * m[2, c] for a, b, c in itertools.permutations(range(3)))


def heralded_maps(t: np.ndarray) -> list[np.ndarray]:
    """Unnormalized map alpha -> Bob's amplitudes for each clean pattern, single pairs only."""
    xcol = t[:, 6:9].sum(axis=1) / math.sqrt(3)
    maps = []
    for port in (HYBRID_A, HYBRID_B, HYBRID_X):
        rows = [6 * k + port for k in range(3)]
        k_map = np.zeros((3, 3), dtype=complex)
        for m in range(3):
            for l in range(3):
                cols = np.stack([t[rows, l], xcol[rows], t[rows, 3 + m]], axis=1)
                k_map[m, l] = _perm3(cols) / math.sqrt(3)
        maps.append(k_map)
    return maps


def heralded_fidelity(maps: list[np.ndarray], inputs: Sequence[np.ndarray]) -> tuple[float, float]:
    """Probability-weighted fidelity over the clean patterns, averaged over inputs; and the mean success."""
    fids, probs = [], []
    for alpha in inputs:
        outs = [k @ alpha for k in maps]
        prob = sum(float(np.vdot(o, o).real) for o in outs)
        overlap = sum(abs(np.vdot(alpha, o)) ** 2 for o in outs)
        fids.append(overlap / prob)
        probs.append(prob)
    return float(np.mean(fids)), float(np.mean(probs))


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Generator owned by one trial; identical however trials are scheduled."""
    return np.random.default_rng([seed, trial])


def splitting_ratio_perturbation(deviations: Sequence[float], trials: int = 1000, seed: int = DEFAULT_SEED,
                                 phase_noise: float = 0.0, workers: int = 1) -> SweepResult:
    """Mean fidelity when each level's pPDBS reflectivity is 1/3 + U(-dev, dev).

    Trial t uses the same uniform draws at every deviation, so the curve is
    sampled with common random numbers.
    """
    mubs = mub_states()
    for dev in deviations:
        if not 0.0 <= dev < 1 / 3:
            raise ValueError(f"deviation {dev} must keep the reflectivity inside (0, 1)")
    if trials < 1:
        raise ValueError("trials must be positive")

    def draw(trial):
        rng = trial_rng(seed, trial)
        return rng.uniform(-1.0, 1.0, 3), rng.normal(0.0, 1.0, 3) * phase_noise

    draws = [draw(t) for t in range(trials)]
    fid = np.zeros(len(deviations))
    rate = np.zeros(len(deviations))
    for i, dev in enumerate(deviations):
        def one(d, dev=dev):
            u, ph = d
            return heralded_fidelity(heralded_maps(experimental_transfer(1 / 3 + dev * u, ph)), mubs)

        vals = _map(one, draws, workers)
        fid[i] = np.mean([f for f, _ in vals])
        rate[i] = np.mean([r for _, r in vals])
    meta = {"seed": seed, "trials": trials, "phase_noise": phase_noise, "cutoff": MAX_PHOTONS}
    return SweepResult((("rH_deviation", tuple(float(d) for d in deviations)),), fid, rate,
                       np.full(len(deviations), trials), meta)
