"""High-dimensional teleportation with an ancilla-assisted multiport Bell measurement.

Photon ``a`` carries the input qudit in N path levels, photons ``b`` and ``c``
share the maximally entangled resource, and N - 2 ancilla photons enter the
multiport in the uniform superposition. A level-wise N-port Fourier
multiport mixes the ports ``a, b, x...``; a click pattern is one detection per
level. Photon ``b`` first passes an (N+1)-level unitary whose extra level must
stay empty ("main" variant). In the feed-forward variant that element moves to
Bob, sandwiched by pattern-dependent corrections.

Mode labels are reused across the multiport: after it, ``Mode("a", k)`` is the
output detector a'_k.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .fock import (
    FockState,
    Mode,
    ModeRegister,
    apply_mode_unitary,
    post_select_pattern,
    reduce_to_qudit,
    vacuum,
)
from .optics import hybrid_multiport, qft_multiport

VARIANTS = ("main", "feedforward")
ELEMENTS = ("ideal", "experimental")
PORTS = {2: ("a", "b"), 3: ("a", "b", "x"), 4: ("a", "b", "x1", "x2")}
BOB = "c"
# empty modes completing the hybrid multiport: rail 1 v, rail 2 v, rail 3 h
AUX = ("aux1v", "aux2v", "aux3h")

# Expanded unitary on photon b's levels 0..3 (level 3 post-selected empty).
# Regenerated by derive_expanded_unitary(3); see tests/test_protocol.py.
U31_FROZEN = np.array(
    [
        [-0.5, 0.5, 0.5, 0.5],
        [0.5, -0.5, 0.5, 0.5],
        [0.5, 0.5, -0.5, 0.5],
        [0.5, 0.5, 0.5, -0.5],
    ],
    dtype=complex,
)


class BellIndex(NamedTuple):
    m: int  # shift
    n: int  # phase


@dataclass(frozen=True)
class ClickPattern:
    name: str
    modes: tuple[Mode, ...]
    bell_index: BellIndex | None = None


@dataclass
class TeleportOutcome:
    pattern: str
    probability: float
    bob_state: np.ndarray
    fidelity: float
    correction: np.ndarray | None = field(default=None, repr=False)


class Pipeline(NamedTuple):
    state: FockState
    modes: dict


def qudit(amplitudes) -> np.ndarray:
    """Validated, normalized copy of a qudit amplitude vector."""
    v = np.asarray(amplitudes, dtype=complex).ravel()
    norm = np.linalg.norm(v)
    if v.size < 2 or norm == 0:
        raise ValueError("a qudit needs at least two amplitudes, not all zero")
    return v / norm


def _omega(d: int) -> complex:
    return np.exp(2j * np.pi / d)


def bell_vector(idx, d: int) -> np.ndarray:
    """|psi_mn> = sum_k omega^(k n) |k>|k+m> / sqrt(d), flattened with index k*d + l."""
    m, n = idx
    v = np.zeros(d * d, dtype=complex)
    for k in range(d):
        v[k * d + (k + m) % d] = _omega(d) ** (k * n)
    return v / math.sqrt(d)


def bell_state(idx, d: int, ports: tuple[str, str] = ("a", "b")) -> FockState:
    """The Bell state as two path-encoded single photons on ``ports``."""
    if d < 2:
        raise ValueError("dimension must be at least 2")
    reg = ModeRegister.grid(ports, d)
    vec = bell_vector(BellIndex(*idx), d)
    pairs = {
        (Mode(ports[0], k), Mode(ports[1], l)): vec[k * d + l]
        for k in range(d)
        for l in range(d)
        if vec[k * d + l] != 0
    }
    return vacuum(reg).create_pairs(pairs).normalize()


def weyl_operator(idx, d: int) -> np.ndarray:
    """X^m Z^n with X|k> = |k+1>, Z|k> = omega^k |k>."""
    m, n = idx
    x = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    z = np.diag(_omega(d) ** np.arange(d))
    return np.linalg.matrix_power(x, m % d) @ np.linalg.matrix_power(z, n % d)


def bell_projection_output(alpha, idx) -> np.ndarray:
    """Bob's normalized qudit after (a, b) is projected onto |psi_mn> with resource |psi_00>_bc."""
    alpha = qudit(alpha)
    d = alpha.size
    m, n = idx
    # <psi_mn|_ab (alpha x psi_00_bc) = sum_k omega^(-kn) alpha_k |k+m>_c / d
    return qudit(weyl_operator((m, 0), d) @ weyl_operator((0, -n), d) @ alpha)


def bell_correction(idx, d: int) -> np.ndarray:
    """Unitary that undoes :func:`bell_projection_output` for outcome ``idx``."""
    m, n = idx
    return np.linalg.inv(weyl_operator((m, 0), d) @ weyl_operator((0, -n), d))


def mub_states(d: int = 3) -> list[np.ndarray]:
    """The 12 qutrit states of the four mutually unbiased bases, groups in order."""
    if d != 3:
        raise ValueError("the mutually unbiased table is tabulated for qutrits only")
    w = _omega(3)
    rows = [
        (1, 0, 0), (0, 1, 0), (0, 0, 1),
        (1, 1, 1), (1, w, w**2), (1, w**2, w),
        (w, 1, 1), (1, w, 1), (1, 1, w),
        (w**2, 1, 1), (1, w**2, 1), (1, 1, w**2),
    ]  # fmt: skip
    return [qudit(r) for r in rows]


MUB_LABELS = tuple(f"B{g}_{j}" for g in range(1, 5) for j in range(1, 4))


def unitary_dilation(contraction: np.ndarray) -> np.ndarray:
    """Unitary whose top-left block is ``contraction``, using one extra level per defect.

    Singular values equal to one need no extra level. A contraction whose
    singular values are all one is returned with a single decoupled extra level.
    """
    a = np.asarray(contraction, dtype=complex)
    w, s, vh = np.linalg.svd(a)
    if s[0] > 1 + 1e-10:
        raise ValueError("matrix is not a contraction")
    defects = [t for t in range(len(s)) if s[t] < 1 - 1e-12]
    k = max(1, len(defects))
    n = a.shape[0]
    u = np.zeros((n + k, n + k), dtype=complex)
    u[:n, :n] = a
    if not defects:
        u[n, n] = 1.0
    for col, t in enumerate(defects):
        v = vh[t].conj()
        lead = v[np.argmax(np.abs(v) > 1e-12)]
        phase = abs(lead) / lead
        v = v * phase
        wt = w[:, t] * phase
        r = math.sqrt(max(0.0, 1 - s[t] ** 2))
        u[:n, n + col] = r * wt
        u[n + col, :n] = r * v.conj()
        u[n + col, n + col] = -s[t]
    return u


def _canonical_filter(f: np.ndarray) -> np.ndarray:
    """Scale to unit spectral norm, with the global phase making sum(f) real positive."""
    f = f / np.linalg.norm(f, 2)
    total = f.sum()
    if abs(total) > 1e-12:
        f = f * (abs(total) / total)
    return f


# ---------------------------------------------------------------- pipeline


def _check(n: int, variant: str, elements: str):
    if n not in PORTS:
        raise ValueError(f"unsupported dimension {n}; supported: 2, 3, 4")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if elements not in ELEMENTS:
        raise ValueError(f"unknown elements {elements!r}")
    if elements == "experimental" and n != 3:
        raise ValueError("the hybrid multiport exists for three ports only")


@lru_cache(maxsize=None)
def pipeline_register(n: int, elements: str = "ideal") -> ModeRegister:
    labels = [Mode(p, k) for p in PORTS[n] for k in range(n)]
    labels.append(Mode("b", n))
    if elements == "experimental":
        labels += [Mode(aux, k) for aux in AUX for k in range(n)]
    labels += [Mode(BOB, k) for k in range(n + 1)]
    return ModeRegister(tuple(labels))


def _prepare(reg: ModeRegister, n: int, alpha, b_input=None) -> FockState:
    st = vacuum(reg)
    if b_input is None:
        st = st.create_pairs({(Mode("b", k), Mode(BOB, k)): 1 / math.sqrt(n) for k in range(n)})
    else:
        st = st.create({Mode("b", k): b_input[k] for k in range(n)})
    st = st.create({Mode("a", k): alpha[k] for k in range(n)})
    for anc in PORTS[n][2:]:
        st = st.create({Mode(anc, k): 1 / math.sqrt(n) for k in range(n)})
    return st.normalize()


def _multiport(st: FockState, n: int, elements: str, r_h=None) -> FockState:
    ports = PORTS[n]
    for k in range(n):
        if elements == "ideal":
            st = apply_mode_unitary(qft_multiport(n), [Mode(p, k) for p in ports], st)
        else:
            rh = 1 / 3 if r_h is None else r_h[k]
            targets = [
                Mode("a", k), Mode("aux1v", k), Mode("b", k),
                Mode("aux2v", k), Mode("aux3h", k), Mode("x", k),
            ]  # fmt: skip
            st = apply_mode_unitary(hybrid_multiport(rh), targets, st)
    return st


def click_patterns(n: int = 3, variant: str = "main") -> list[ClickPattern]:
    """Main: all N photons exit one port. Feed-forward: any port per level (N**N patterns)."""
    ports = PORTS[n]
    if variant == "main":
        choices = [(p,) * n for p in ports]
    else:
        choices = list(itertools.product(ports, repeat=n))
    return [
        ClickPattern(" ".join(f"{p}'{k}" for k, p in enumerate(ch)), tuple(Mode(p, k) for k, p in enumerate(ch)))
        for ch in choices
    ]


def _discard(reg: ModeRegister, pattern: ClickPattern) -> list[Mode]:
    keep = set(pattern.modes)
    return [m for m in reg.labels if m.port != BOB and m not in keep]


def _run_state(n, alpha, variant, elements, r_h=None, b_input=None, b_unitary="default") -> FockState:
    reg = pipeline_register(n, elements)
    st = _prepare(reg, n, alpha, b_input)
    if variant == "main":
        u = expanded_unitary(n) if isinstance(b_unitary, str) else b_unitary
        if u is not None:
            st = apply_mode_unitary(u, [Mode("b", k) for k in range(n + 1)], st)
    return _multiport(st, n, elements, r_h)


def assemble_pipeline(alpha, variant: str = "main", elements: str = "ideal", n: int = 3, r_h=None) -> Pipeline:
    """State just before detection, with the mode bookkeeping needed to read it out."""
    _check(n, variant, elements)
    alpha = qudit(alpha)
    if alpha.size != n:
        raise ValueError(f"input has {alpha.size} levels, expected {n}")
    st = _run_state(n, alpha, variant, elements, r_h)
    reg = st.register
    patterns = click_patterns(n, variant)
    modes = {
        "ports": PORTS[n],
        "bob": [Mode(BOB, k) for k in range(n)],
        "bob_extra": Mode(BOB, n),
        "b_extra": Mode("b", n),
        "patterns": patterns,
        "discard": {p.name: _discard(reg, p) for p in patterns},
    }
    return Pipeline(st, modes)


def _amplitude_vector(prob: float, cond: FockState, levels: list[Mode]) -> np.ndarray:
    """Unnormalized amplitudes of one photon in each of ``levels`` and nothing elsewhere."""
    reg = cond.register
    out = np.zeros(len(levels), dtype=complex)
    if prob == 0.0:
        return out
    for k, lab in enumerate(levels):
        occ = [0] * reg.count
        occ[reg.index(lab)] = 1
        out[k] = cond.amplitude(occ)
    return out * math.sqrt(prob)


def _vacuum_amplitude(prob: float, cond: FockState) -> complex:
    if prob == 0.0:
        return 0j
    return cond.amplitude((0,) * cond.register.count) * math.sqrt(prob)


def heralding_matrix(n: int, pattern: ClickPattern, elements: str = "ideal", b_unitary=None, r_h=None) -> np.ndarray:
    """Amplitude M[i, j] that inputs a=|i>, b=|j> (ancillas included) fire ``pattern``.

    ``b_unitary`` acts on photon b first (None: nothing). The effective
    measurement vector on the (a, b) pair is conj(M) flattened.
    """
    m = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for i in range(n):
        for j in range(n):
            st = _run_state(n, eye[i], "main", elements, r_h, b_input=eye[j], b_unitary=b_unitary)
            prob, cond = post_select_pattern(st, pattern, _discard(st.register, pattern))
            m[i, j] = _vacuum_amplitude(prob, cond)
    return m


def derive_expanded_unitary(n: int) -> np.ndarray:
    """Solve for the filter on b that turns the port-a clean pattern into a Bell projection.

    With M the bare heralding matrix, the filter A must make M @ A proportional
    to the identity, so A is proportional to inv(M). It is scaled to a
    contraction and completed to a unitary on N+1 levels.
    """
    pattern = click_patterns(n, "main")[0]
    m = heralding_matrix(n, pattern)
    if abs(np.linalg.det(m)) < 1e-12:
        raise ArithmeticError("heralding matrix is singular; no filter exists")
    return unitary_dilation(_canonical_filter(np.linalg.inv(m)))


@lru_cache(maxsize=None)
def _expanded_cached(n: int) -> np.ndarray:
    return derive_expanded_unitary(n)


def u31_embed() -> np.ndarray:
    return U31_FROZEN.copy()


def expanded_unitary(n: int) -> np.ndarray:
    return u31_embed() if n == 3 else _expanded_cached(n).copy()


@dataclass(frozen=True)
class Correction:
    """Bob's pattern-conditioned filter and its unitary realization on N+1 levels."""

    filter: np.ndarray
    unitary: np.ndarray


@lru_cache(maxsize=None)
def _feedforward_corrections(n: int, elements: str) -> dict:
    if n == 4:
        raise ValueError("feed-forward is supported for N <= 3")
    reg = pipeline_register(n, elements)
    patterns = click_patterns(n, "feedforward")
    bob = [Mode(BOB, k) for k in range(n)]
    k_maps = {p.name: np.zeros((n, n), dtype=complex) for p in patterns}
    eye = np.eye(n)
    for i in range(n):
        st = _run_state(n, eye[i], "feedforward", elements)
        for p in patterns:
            prob, cond = post_select_pattern(st, p, _discard(reg, p))
            k_maps[p.name][:, i] = _amplitude_vector(prob, cond, bob)
    out = {}
    for name, k in k_maps.items():
        sv = np.linalg.svd(k, compute_uv=False)
        if sv[-1] < 1e-9 * sv[0]:
            raise ArithmeticError(f"pattern {name} does not determine the input; no correction exists")
        f = _canonical_filter(np.linalg.inv(k))
        out[name] = Correction(f, unitary_dilation(f))
    return out


def feedforward_corrections(n: int = 3, elements: str = "ideal") -> dict[str, Correction]:
    """Correction per feed-forward pattern, solved from the condition filter @ K = c * I.

    K maps the input qudit to Bob's unnormalized heralded state. The filter is
    unique up to a global phase whenever K is invertible, which is asserted.
    """
    _check(n, "feedforward", elements)
    return _feedforward_corrections(n, elements)


def _fidelity(rho: np.ndarray, psi: np.ndarray) -> float:
    return float(min(1.0, max(0.0, np.real(psi.conj() @ rho @ psi))))


def general_scheme(n: int, alpha, variant: str = "main", elements: str = "ideal", r_h=None) -> list[TeleportOutcome]:
    """Teleport ``alpha`` and report every heralding pattern of the chosen variant."""
    pipe = assemble_pipeline(alpha, variant, elements, n, r_h)
    alpha = qudit(alpha)
    bob = pipe.modes["bob"]
    corrections = feedforward_corrections(n, elements) if variant == "feedforward" else {}
    outcomes = []
    for p in pipe.modes["patterns"]:
        prob, cond = post_select_pattern(pipe.state, p, pipe.modes["discard"][p.name])
        corr = None
        if variant == "feedforward" and prob > 0:
            corr = corrections[p.name]
            cond = apply_mode_unitary(corr.unitary, bob + [pipe.modes["bob_extra"]], cond)
            passed, cond = post_select_pattern(cond, (), [pipe.modes["bob_extra"]])
            prob *= passed
            corr = corr.unitary
        if prob <= 0:
            outcomes.append(TeleportOutcome(p.name, 0.0, np.zeros((n, n), dtype=complex), 0.0, corr))
            continue
        rho = reduce_to_qudit(cond, bob)
        outcomes.append(TeleportOutcome(p.name, prob, rho, _fidelity(rho, alpha), corr))
    return outcomes


def run_teleport(alpha, variant: str = "main", elements: str = "ideal", r_h=None) -> list[TeleportOutcome]:
    """Qutrit teleportation: three clean patterns (main) or all 27 with correction (feedforward)."""
    return general_scheme(3, alpha, variant, elements, r_h)


def identify_bell_index(vec: np.ndarray, d: int, tol: float = 1e-9) -> BellIndex | None:
    """Bell index whose state matches ``vec`` up to phase, else None."""
    vec = np.asarray(vec, dtype=complex).ravel()
    vec = vec / np.linalg.norm(vec)
    for m in range(d):
        for n in range(d):
            if abs(abs(np.vdot(bell_vector((m, n), d), vec)) ** 2 - 1) < tol:
                return BellIndex(m, n)
    return None


def heralded_ab_vector(n: int, pattern: ClickPattern, elements: str = "ideal") -> np.ndarray:
    """Unnormalized (a, b) state onto which ``pattern`` projects, with the expanded unitary on b."""
    return heralding_matrix(n, pattern, elements, expanded_unitary(n)).conj().ravel()


def heralded_ab_operator(n: int, pattern: ClickPattern, elements: str = "ideal") -> np.ndarray:
    """Reconstruct the (a, b) POVM element of ``pattern`` from heralding probabilities alone.

    Diagonal entries come from basis inputs; each off-diagonal pair from the two
    superpositions (|p> + |q>)/sqrt2 and (|p> + i|q>)/sqrt2.
    """
    d2 = n * n
    u = expanded_unitary(n)

    def prob(vec):
        total = 0.0
        # two-photon input on (a, b): expand over a's levels
        mat = np.asarray(vec, dtype=complex).reshape(n, n)
        reg = pipeline_register(n, elements)
        st = vacuum(reg).create_pairs(
            {(Mode("a", i), Mode("b", j)): mat[i, j] for i in range(n) for j in range(n) if mat[i, j] != 0}
        )
        for anc in PORTS[n][2:]:
            st = st.create({Mode(anc, k): 1 / math.sqrt(n) for k in range(n)})
        st = st.normalize()
        st = apply_mode_unitary(u, [Mode("b", k) for k in range(n + 1)], st)
        st = _multiport(st, n, elements)
        total, _ = post_select_pattern(st, pattern, _discard(reg, pattern))
        return total

    e = np.zeros((d2, d2), dtype=complex)
    basis = np.eye(d2)
    diag = [prob(basis[p]) for p in range(d2)]
    for p in range(d2):
        e[p, p] = diag[p]
    for p in range(d2):
        for q in range(p + 1, d2):
            re = prob((basis[p] + basis[q]) / math.sqrt(2)) - (diag[p] + diag[q]) / 2
            im = prob((basis[p] + 1j * basis[q]) / math.sqrt(2)) - (diag[p] + diag[q]) / 2
            # <v|E|v> for v = (e_p + e^{i t} e_q)/sqrt2 gives Re(e^{i t} E_pq)
            e[p, q] = re - 1j * im
            e[q, p] = np.conj(e[p, q])
    return e


def pattern_table(n: int = 3, variant: str = "main", elements: str = "ideal") -> list[dict]:
    """One record per click pattern: modes, heralded Bell index and Bob's correction."""
    _check(n, variant, elements)
    records = []
    if variant == "main":
        for p in click_patterns(n, "main"):
            idx = identify_bell_index(heralded_ab_vector(n, p, elements), n)
            corr = np.eye(n) if idx is None else bell_correction(idx, n)
            records.append(_record(p, idx, corr))
    else:
        for p in click_patterns(n, "feedforward"):
            records.append(_record(p, None, feedforward_corrections(n, elements)[p.name].unitary))
    return records


def _record(p: ClickPattern, idx, corr: np.ndarray) -> dict:
    return {
        "name": p.name,
        "modes": [[m.port, m.level] for m in p.modes],
        "bell_index": None if idx is None else [idx.m, idx.n],
        "correction_real": np.round(corr.real, 12).tolist(),
        "correction_imag": np.round(corr.imag, 12).tolist(),
    }
