"""Mode unitaries for the linear-optical elements and triangular mesh decomposition.

Phase convention, used everywhere: transmission amplitudes are real and
positive, reflection picks up a factor of +i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .fock import check_unitary

H, V = 0, 1


def beam_splitter(theta: float, phi: float = 0.0) -> np.ndarray:
    """Two-mode splitter; ``theta = pi/4, phi = 0`` is balanced."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array(
        [[c, 1j * np.exp(1j * phi) * s], [1j * np.exp(-1j * phi) * s, c]], dtype=complex
    )


def phase_shift(phi: float) -> np.ndarray:
    return np.array([[np.exp(1j * phi)]], dtype=complex)


def waveplate(kind: str, angle: float) -> np.ndarray:
    """Jones matrix on (h, v) of a half- or quarter-wave plate with fast axis at ``angle``.

    HWP at 22.5 deg sends h to (h+v)/sqrt2; QWP at 45 deg sends h to (h+iv)/sqrt2
    up to a global phase.
    """
    retard = {"half": math.pi, "quarter": math.pi / 2}.get(kind)
    if retard is None:
        raise ValueError(f"unknown waveplate kind {kind!r}")
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, s], [-s, c]])
    return rot.T @ np.diag([1.0, np.exp(-1j * retard)]) @ rot


def polarizing_splitter(r_h: float) -> np.ndarray:
    """Polarization-dependent splitter on modes (1h, 1v, 2h, 2v).

    Vertical light is fully reflected; horizontal light is reflected with
    probability ``r_h``. ``r_h = 0`` is an ideal PBS.
    """
    if not 0.0 <= r_h <= 1.0:
        raise ValueError(f"horizontal reflectivity {r_h} outside [0, 1]")
    u = np.zeros((4, 4), dtype=complex)
    bh = beam_splitter(math.asin(math.sqrt(r_h)))
    bv = beam_splitter(math.pi / 2)
    for (a, b), blk in (((0, 2), bh), ((1, 3), bv)):
        u[np.ix_([a, b], [a, b])] = blk
    return u


def qft_multiport(n: int) -> np.ndarray:
    """All-to-all N-port: entry (j, k) is omega**(j*k) / sqrt(N)."""
    if n < 2:
        raise ValueError("multiport needs at least two ports")
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(2j * np.pi * j * k / n) / math.sqrt(n)


def embed(u: np.ndarray, targets, size: int) -> np.ndarray:
    out = np.eye(size, dtype=complex)
    out[np.ix_(targets, targets)] = u
    return out


# Hybrid polarization-path realization of the 3-port multiport.
# Rails 1..3, each with h and v: index = 2*(rail-1) + pol.
def _m(rail: int, pol: int) -> int:
    return 2 * (rail - 1) + pol


HYBRID_MODES = ("1h", "1v", "2h", "2v", "3h", "3v")
HYBRID_INPUTS = {"a": _m(1, H), "b": _m(2, H), "x": _m(3, V)}
# Output wiring: the directly detected pPDBS port (rail 1), and the two
# outputs of the final PBS behind the QWP (rail 2 transmitted h, rail 3
# reflected v). The assignment to logical ports makes the transfer matrix
# phase-equivalent to qft_multiport(3); see test_optics.
HYBRID_OUTPUTS = {"a": _m(1, H), "b": _m(2, H), "x": _m(3, V)}
HYBRID_PORTS = ("a", "b", "x")


def hybrid_multiport(r_h: float = 1 / 3) -> np.ndarray:
    """6x6 unitary of PBS, HWP(22.5), pPDBS(r_h), QWP(45) and a final PBS."""
    steps = [
        (polarizing_splitter(0.0), [_m(1, H), _m(1, V), _m(3, H), _m(3, V)]),
        (waveplate("half", math.pi / 8), [_m(1, H), _m(1, V)]),
        (polarizing_splitter(r_h), [_m(1, H), _m(1, V), _m(2, H), _m(2, V)]),
        (waveplate("quarter", math.pi / 4), [_m(2, H), _m(2, V)]),
        (polarizing_splitter(0.0), [_m(2, H), _m(2, V), _m(3, H), _m(3, V)]),
    ]
    u = np.eye(6, dtype=complex)
    for blk, tg in steps:
        u = embed(blk, tg, 6) @ u
    return u


def hybrid_transfer(r_h: float = 1 / 3) -> np.ndarray:
    """Logical 3x3 transfer matrix from input ports (a, b, x) to output ports (a', b', x')."""
    u = hybrid_multiport(r_h)
    rows = [HYBRID_OUTPUTS[p] for p in HYBRID_PORTS]
    cols = [HYBRID_INPUTS[p] for p in HYBRID_PORTS]
    return u[np.ix_(rows, cols)]


def build_experimental_multiport(r_h: float = 1 / 3) -> tuple[np.ndarray, dict]:
    """The hybrid multiport with its label dictionary.

    The dictionary maps ``"in"``/``"out"`` to {logical port: physical mode index}
    and ``"modes"`` to the physical mode names.
    """
    labels = {"in": dict(HYBRID_INPUTS), "out": dict(HYBRID_OUTPUTS), "modes": HYBRID_MODES}
    return hybrid_multiport(r_h), labels


def phase_equivalence(t: np.ndarray, f: np.ndarray, tol: float = 1e-9):
    """Diagonal phases (d_out, d_in) with diag(d_out) @ t @ diag(d_in) == f, else None."""
    t = np.asarray(t, dtype=complex)
    f = np.asarray(f, dtype=complex)
    if t.shape != f.shape or np.max(np.abs(np.abs(t) - np.abs(f))) > tol:
        return None
    if np.min(np.abs(t[:, 0])) < tol or np.min(np.abs(t[0, :])) < tol:
        return None
    d_out = f[:, 0] / t[:, 0]
    d_in = f[0, :] / (d_out[0] * t[0, :])
    if np.max(np.abs(d_out[:, None] * t * d_in[None, :] - f)) > tol:
        return None
    return d_out, d_in


class MeshElement(NamedTuple):
    kind: str  # "ROT" or "PHASE"
    modes: tuple[int, ...]
    theta: float
    phi: float


@dataclass(frozen=True)
class MeshPlan:
    size: int
    elements: tuple[MeshElement, ...] = ()

    def to_text(self) -> str:
        lines = []
        for e in self.elements:
            if e.kind == "ROT":
                i, j = e.modes
                lines.append(f"ROT {i} {j} {e.theta:.12g} {e.phi:.12g}")
            else:
                lines.append(f"PHASE {e.modes[0]} {e.phi:.12g}")
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_text(cls, text: str, size: int) -> MeshPlan:
        elements = []
        for n, line in enumerate(text.splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            try:
                if parts[0] == "ROT" and len(parts) == 5:
                    elements.append(
                        MeshElement("ROT", (int(parts[1]), int(parts[2])), float(parts[3]), float(parts[4]))
                    )
                elif parts[0] == "PHASE" and len(parts) == 3:
                    elements.append(MeshElement("PHASE", (int(parts[1]),), 0.0, float(parts[2])))
                else:
                    raise ValueError
            except ValueError:
                raise ValueError(f"line {n}: cannot parse {line!r}") from None
        return cls(size, tuple(elements))


def _wrap(phi: float) -> float:
    """Map to (-pi, pi], snapping values near zero to exactly zero."""
    phi = math.remainder(phi, 2 * math.pi)
    if phi <= -math.pi:
        phi += 2 * math.pi
    if abs(phi) < 1e-15:
        phi = 0.0
    return phi


def recompose(plan: MeshPlan, size: int | None = None) -> np.ndarray:
    """Ordered product of the plan's primitives; the first element acts first."""
    m = plan.size if size is None else size
    u = np.eye(m, dtype=complex)
    for e in plan.elements:
        if any(not 0 <= k < m for k in e.modes):
            raise IndexError(f"element {e} addresses a mode outside 0..{m - 1}")
        if e.kind == "ROT":
            u = embed(beam_splitter(e.theta, e.phi), list(e.modes), m) @ u
        elif e.kind == "PHASE":
            u = embed(phase_shift(e.phi), list(e.modes), m) @ u
        else:
            raise ValueError(f"unknown primitive {e.kind!r}")
    return u


def reck_decompose(u: np.ndarray) -> MeshPlan:
    """Triangular decomposition into two-mode rotations followed by output phases.

    Rows are cleared from the last one upwards; within a row, entries are
    nulled left to right by mixing their column with the diagonal column.
    """
    w = check_unitary(u).copy()
    n = w.shape[0]
    nulling = []
    for r in range(n - 1, 0, -1):
        for c in range(r):
            x, y = w[r, c], w[r, r]
            if abs(x) < 1e-15:
                theta, phi = 0.0, 0.0
            elif abs(y) < 1e-15:
                theta, phi = math.pi / 2, 0.0
            else:
                theta = math.atan2(abs(x), abs(y))
                phi = -np.angle(1j * x / y)
            w = w @ embed(beam_splitter(theta, phi), [c, r], n)
            nulling.append((c, r, theta, phi))
    # u = diag(w) @ B_K^-1 ... B_1^-1 and B(theta, phi)^-1 = B(theta, phi + pi)
    elements = [
        MeshElement("ROT", (c, r), theta, _wrap(phi + math.pi)) if theta else MeshElement("ROT", (c, r), 0.0, 0.0)
        for c, r, theta, phi in nulling
    ]
    elements += [MeshElement("PHASE", (k,), 0.0, _wrap(float(np.angle(w[k, k])))) for k in range(n)]
    return MeshPlan(n, tuple(elements))
