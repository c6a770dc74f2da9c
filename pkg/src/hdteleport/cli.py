"""Command-line front end: ``hdteleport <experiment> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    WITNESS_LABELS,
    classical_bound,
    computational_fidelity_from_counts,
    fidelity_from_counts,
    mub_suite_report,
    qubit_subspace_bound,
)
from .config import FIELDS, KINDS, OUT_ENV, ConfigError, RunConfig, load_file, parse_config
from .fock import MAX_PHOTONS
from .noise import (
    fidelity_landscape,
    hom_scan,
    noisy_mub_counts,
    rate_slope,
    simulate_witness,
    splitting_ratio_perturbation,
)
from .optics import hybrid_multiport, qft_multiport, recompose, reck_decompose
from .protocol import MUB_LABELS, expanded_unitary, general_scheme, mub_states


class InvariantError(RuntimeError):
    pass


def _require(ok: bool, message: str) -> None:
    if not ok:
        raise InvariantError(message)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _table(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _cplx(m) -> dict:
    m = np.asarray(m)
    return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}


def parse_input(text: str, n: int) -> np.ndarray:
    if text in MUB_LABELS:
        if n != 3:
            raise ConfigError(f"input: {text} is a qutrit state but n = {n}")
        return mub_states()[MUB_LABELS.index(text)]
    try:
        amps = np.array([complex(v.strip().replace(" ", "")) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"input: cannot parse {text!r}; use amplitudes like 1,0,0 or a label like B2_1") from None
    if amps.size != n:
        raise ConfigError(f"input: {amps.size} amplitudes given for n = {n}")
    norm = np.linalg.norm(amps)
    if norm == 0:
        raise ConfigError("input: zero vector")
    return amps / norm


# ---------------------------------------------------------------- experiments


def run_teleport_kind(cfg: RunConfig):
    alpha = parse_input(cfg.input, cfg.n)
    outcomes = general_scheme(cfg.n, alpha, cfg.variant, cfg.elements)
    for o in outcomes:
        _require(-1e-12 <= o.probability <= 1 + 1e-12, f"{o.pattern}: probability {o.probability} outside [0, 1]")
        if o.probability > 0:
            _require(abs(o.fidelity - 1) < 1e-9, f"{o.pattern}: fidelity {o.fidelity} on the ideal channel")
    total = sum(o.probability for o in outcomes)
    payload = {
        "input": _cplx(alpha),
        "patterns": [
            {"pattern": o.pattern, "probability": o.probability, "fidelity": o.fidelity, "bob_state": _cplx(o.bob_state)}
            for o in outcomes
        ],
        "total_probability": total,
    }
    table = _table(["pattern", "probability", "fidelity"], [(o.pattern, o.probability, o.fidelity) for o in outcomes])
    lines = [f"{len(outcomes)} patterns, total probability {total:.10g}"]
    lines += [f"  {o.pattern}: p={o.probability:.10g} F={o.fidelity:.10g}" for o in outcomes[:27]]
    return payload, table, lines


def run_mub_suite(cfg: RunConfig):
    if cfg.n != 3:
        raise ConfigError("n: the mutually unbiased table is defined for qutrits only")
    states = mub_states()
    if cfg.noisy:
        sigmas, fids, success = [], [], []
        for i, (alpha, counts) in enumerate(zip(states, noisy_mub_counts(cfg.noise, cfg.pulses, cfg.threads))):
            seed = (cfg.seed + i) % 2**64
            if isinstance(counts[0], float):
                level = int(np.argmax(np.abs(alpha)))
                f, s = computational_fidelity_from_counts(counts, level, cfg.replicas, seed)
                success.append(sum(counts) / cfg.pulses)
            else:
                f, s = fidelity_from_counts(counts, cfg.replicas, seed)
                success.append(float(np.mean([sum(r.counts) for r in counts])) / cfg.pulses)
            fids.append(f)
            sigmas.append(s)
        report = mub_suite_report(fids, sigmas)
    else:
        runs = [general_scheme(3, a, cfg.variant, cfg.elements) for a in states]
        success = [sum(o.probability for o in r) for r in runs]
        report = mub_suite_report(runs)
    for f in report.fidelities:
        _require(-1e-9 <= f <= 1 + 1e-9, f"fidelity {f} outside [0, 1]")
    payload = report.to_dict()
    payload["success_probability"] = success
    payload["mean_success_probability"] = float(np.mean(success))
    rows = [(lab, f, s, p) for lab, f, s, p in zip(report.labels, report.fidelities, report.sigmas, success)]
    table = _table(["state", "fidelity", "sigma", "success_probability"], rows)
    lines = [
        f"mean fidelity {report.mean:.6f} +- {report.sigma_mean:.6f}",
        f"  classical bound {report.classical_bound:.6f}: {'pass' if report.beats_classical else 'fail'}",
        f"  qubit bound {report.genuine_bound:.6f}: {'pass' if report.beats_genuine else 'fail'}",
        f"mean success probability {np.mean(success):.6g}",
    ]
    return payload, table, lines


def run_landscape(cfg: RunConfig):
    res = fidelity_landscape(cfg.pd_grid, cfg.p_grid, cfg.noise, cfg.resolving, cfg.threads)
    if len(cfg.p_grid) >= 2:
        res.metadata["rate_slope"] = [rate_slope(cfg.p_grid, row) for row in res.rate]
    lines = [f"P_d={pd:g}: " + " ".join(f"{f:.4f}" for f in row) for pd, row in zip(cfg.pd_grid, res.fidelity)]
    return res.to_record(), res.to_csv(), lines


def run_splitting(cfg: RunConfig):
    res = splitting_ratio_perturbation(cfg.deviations, cfg.trials, cfg.seed, cfg.phase_noise, cfg.threads)
    lines = [f"deviation {d:g}: mean fidelity {f:.8f}" for d, f in zip(cfg.deviations, res.fidelity)]
    return res.to_record(), res.to_csv(), lines


def run_hom(cfg: RunConfig):
    scan = hom_scan(cfg.delays, cfg.bandwidth, cfg.v_max)
    vis = scan.visibility()
    payload = {
        "tau_c_fs": scan.tau_c,
        "v_max": scan.v_max,
        "baseline": scan.baseline,
        "visibility": vis,
        "points": [
            {"delay_fs": float(t), "coincidence": float(c), "normalized": float(c / scan.baseline)}
            for t, c in zip(scan.delays, scan.coincidence)
        ],
    }
    table = _table(["delay_fs", "coincidence", "normalized"],
                   [(float(t), float(c), float(c / scan.baseline)) for t, c in zip(scan.delays, scan.coincidence)])
    return payload, table, [f"coherence time {scan.tau_c:.6g} fs, visibility {vis:.6f}"]


def _named_unitary(name: str, seed: int) -> np.ndarray:
    if name == "qft3":
        return qft_multiport(3)
    if name == "qft4":
        return qft_multiport(4)
    if name == "u31":
        return expanded_unitary(3)
    if name == "u51":
        return expanded_unitary(4)
    if name == "hybrid":
        return hybrid_multiport(1 / 3)
    from scipy.stats import unitary_group

    try:
        size = int(name.split(":", 1)[1])
    except ValueError:
        raise ConfigError(f"unitary: bad size in {name!r}") from None
    if not 1 <= size <= 12:
        raise ConfigError("unitary: random size must lie in 1..12")
    return unitary_group.rvs(size, random_state=np.random.default_rng(seed)) if size > 1 else np.eye(1, dtype=complex)


def run_decompose(cfg: RunConfig):
    u = _named_unitary(cfg.unitary, cfg.seed)
    plan = reck_decompose(u)
    err = float(np.max(np.abs(recompose(plan) - u)))
    _require(err < 1e-10, f"recomposition error {err:.3g}")
    payload = {
        "unitary": cfg.unitary,
        "size": plan.size,
        "max_error": err,
        "plan": plan.to_text(),
        "elements": [{"kind": e.kind, "modes": list(e.modes), "theta": e.theta, "phi": e.phi} for e in plan.elements],
    }
    rows = [(e.kind, e.modes[0], e.modes[1] if len(e.modes) > 1 else "", e.theta, e.phi) for e in plan.elements]
    table = _table(["kind", "mode_i", "mode_j", "theta", "phi"], rows)
    return payload, table, [f"{len(plan.elements)} elements, max error {err:.3g}", plan.to_text().rstrip()]


def run_bounds(cfg: RunConfig):
    cb = classical_bound(3)
    qb = qubit_subspace_bound()
    _require(abs(qb - 2 / 3) < 1e-6, f"qubit-subspace bound {qb} differs from 2/3")
    payload = {"dimension": 3, "classical_bound": cb, "qubit_subspace_bound": qb}
    table = _table(["bound", "value"], [("classical", cb), ("qubit_subspace", qb)])
    lines = [
        f"classical (measure and prepare) bound: {cb:.6f}; teleportation must exceed it",
        f"qubit-subspace bound: {qb:.9f}; genuine qutrit teleportation must exceed it",
    ]
    return payload, table, lines


def run_witness(cfg: RunConfig):
    res = simulate_witness(cfg.noise, cfg.resolving)
    _require(-1e-9 <= res.fidelity <= 1 + 1e-9, f"witness fidelity {res.fidelity} outside [0, 1]")
    payload = {
        "observables": dict(zip(WITNESS_LABELS, res.expectations.tolist())),
        "fidelity": res.fidelity,
        "coincidence_rate": res.coincidence_rate,
    }
    rows = list(zip(WITNESS_LABELS, res.expectations.tolist())) + [("fidelity", res.fidelity)]
    return payload, _table(["observable", "value"], rows), [f"witness fidelity {res.fidelity:.6f}"]


RUNNERS = {
    "teleport": run_teleport_kind,
    "mub-suite": run_mub_suite,
    "sweep-landscape": run_landscape,
    "sweep-splitting": run_splitting,
    "hom": run_hom,
    "decompose": run_decompose,
    "bounds": run_bounds,
    "witness": run_witness,
}


# ---------------------------------------------------------------- output and verification


def _check_fidelities(obj, where="results"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if k in ("fidelity", "fidelities") and v is not None:
                vals = v if isinstance(v, list) else [v]
                for f in vals:
                    _require(isinstance(f, (int, float)) and -1e-9 <= f <= 1 + 1e-9, f"{where}.{k}: {f!r}")
            else:
                _check_fidelities(v, f"{where}.{k}")
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            _check_fidelities(v, f"{where}[{i}]")


def document(cfg: RunConfig, payload) -> dict:
    payload = json.loads(json.dumps(payload))  # plain types only
    return {
        "kind": cfg.kind,
        "version": __version__,
        "seed": cfg.seed,
        "cutoff": MAX_PHOTONS,
        "config": cfg.semantic(),
        "config_hash": cfg.digest(),
        "results": payload,
        "results_sha256": _digest(payload),
    }


def csv_document(cfg: RunConfig, table: str) -> str:
    body_hash = hashlib.sha256(table.encode()).hexdigest()
    head = f"# hdteleport {__version__} kind={cfg.kind} config_hash={cfg.digest()} body_sha256={body_hash}\n"
    return head + table


def write_outputs(cfg: RunConfig, payload, table: str) -> list[Path]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    if cfg.format in ("json", "both"):
        path = out / f"{cfg.kind}.json"
        path.write_text(json.dumps(document(cfg, payload), indent=2, sort_keys=True) + "\n")
        paths.append(path)
    if cfg.format in ("csv", "both"):
        path = out / f"{cfg.kind}.csv"
        path.write_text(csv_document(cfg, table))
        paths.append(path)
    return paths


def verify_file(path: Path) -> str:
    """Re-check the hashes and fidelity ranges stored in an output file; raises InvariantError."""
    text = path.read_text()
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvariantError(f"{path}: not valid JSON ({exc})") from None
        for key in ("config", "config_hash", "results", "results_sha256"):
            _require(key in doc, f"{path}: missing {key}")
        _require(_digest(doc["config"]) == doc["config_hash"], f"{path}: config hash mismatch")
        _require(_digest(doc["results"]) == doc["results_sha256"], f"{path}: results hash mismatch")
        _check_fidelities(doc["results"])
        return doc["config_hash"]
    if path.suffix == ".csv":
        head, _, body = text.partition("\n")
        fields = dict(tok.split("=", 1) for tok in head.split() if "=" in tok)
        _require(head.startswith("# hdteleport") and "body_sha256" in fields, f"{path}: missing header")
        _require(hashlib.sha256(body.encode()).hexdigest() == fields["body_sha256"], f"{path}: body hash mismatch")
        rows = list(csv.reader(io.StringIO(body)))
        _require(len({len(r) for r in rows}) == 1, f"{path}: ragged rows")
        return fields.get("config_hash", "")
    raise InvariantError(f"{path}: unsupported file type")


def run_verify(cfg: RunConfig) -> list[str]:
    files = [Path(f) for f in cfg.files] or sorted(
        p for p in Path(cfg.out).glob("*") if p.suffix in (".json", ".csv")
    )
    if not files:
        raise FileNotFoundError(f"no output files to verify in {cfg.out}")
    hashes = {}
    lines = []
    for path in files:
        hashes[path] = verify_file(path)
        lines.append(f"ok {path}")
    by_stem = {}
    for path, h in hashes.items():
        by_stem.setdefault((path.parent, path.stem), set()).add(h)
    for (parent, stem), hs in by_stem.items():
        _require(len(hs) == 1, f"{parent / stem}: JSON and CSV carry different config hashes")
    return lines


# ---------------------------------------------------------------- argument parsing


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; flags override its values")
    for key, f in FIELDS.items():
        if key in ("kind", "files"):
            continue
        if key in ("noisy", "resolving"):
            common.add_argument(_flag(key), dest=key, action=argparse.BooleanOptionalAction, default=None)
        else:
            common.add_argument(_flag(key), dest=key, default=None, metavar=key.upper())
    parser = argparse.ArgumentParser(
        prog="hdteleport",
        description="Simulate qutrit teleportation with a multiport Bell measurement.",
        epilog=f"Outputs go to --out, else ${OUT_ENV}, else ./hdteleport-out.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind, parents=[common])
        if kind == "verify":
            sp.add_argument("files", nargs="*", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k in FIELDS and k != "kind" and v is not None}
    if args.kind == "verify" and not flags.get("files"):
        flags.pop("files", None)
    try:
        file_values = load_file(args.config) if args.config else {}
        cfg = parse_config(args.kind, file_values, flags)
        if cfg.kind == "verify":
            lines = run_verify(cfg)
            paths = []
        else:
            payload, table, lines = RUNNERS[cfg.kind](cfg)
            paths = write_outputs(cfg, payload, table)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (InvariantError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 4
    for line in lines:
        print(line)
    for p in paths:
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
