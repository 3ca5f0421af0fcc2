"""Command-line entry point: ``reversim <command> [options]``.

Every report is ``{"manifest": ..., "results": ...}`` in JSON, or CSV with the
manifest on a leading ``#`` comment line.  Exit status is 0 on success, 2 on
bad arguments and 1 on runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .chain import MAX_ENUM_DEPTH, ChainConfig, CountRecord, enumerate_exact, simulate_ensemble
from .gpm import KOutcomeMeasurement, NotInvertibleError, Outcome, PartialMeasurement
from .inference import (
    LikelihoodSpec,
    angle_grid,
    asymptotic_entropy,
    asymptotic_entropy_scan,
    entropy_report,
    fisher_information,
    interior_grid,
    log_likelihood_surface,
    map_estimate,
)
from .qcore import BlochAngles, state_from_angles
from .qkd import B92Config, EveStrategy, b92_exact, run_b92
from .twoqubit import (
    amplification_ensemble,
    bell_phi_plus,
    bob_marginal,
    concurrence_after_m,
    concurrence_after_mbar,
    no_signaling_check,
    remote_readout_scenario,
    teleport_four_term,
    teleport_prepare,
)
from . import rng as rng_mod

# --- argument types --------------------------------------------------------

def _probability(text: str) -> float:
    x = float(text)
    if not (math.isfinite(x) and 0.0 <= x <= 1.0):
        raise argparse.ArgumentTypeError(f"{text} is not a probability in [0, 1]")
    return x


def _theta(text: str) -> float:
    x = float(text)
    if not (0.0 <= x <= math.pi):
        raise argparse.ArgumentTypeError(f"theta {text} outside [0, pi] (radians)")
    return x


def _phi(text: str) -> float:
    x = float(text)
    if not (0.0 <= x < 2 * math.pi):
        raise argparse.ArgumentTypeError(f"phi {text} outside [0, 2pi) (radians)")
    return x


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"{text} must be a positive integer")
    return n


def _count(text: str) -> float:
    x = float(text)
    if not (math.isfinite(x) and x >= 0):
        raise argparse.ArgumentTypeError(f"{text} must be a non-negative count")
    return int(x) if x == int(x) else x


def _on_off(text: str) -> bool:
    if text.lower() in ("on", "true", "1", "yes"):
        return True
    if text.lower() in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError("expected on or off")


def _eve(text: str) -> EveStrategy:
    try:
        return EveStrategy.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _alice_choice(text: str):
    t = text.strip()
    if t.upper() in ("Z", "X", "I"):
        return t.upper()
    kind, _, args = t.partition(":")
    vals = [float(v) for v in args.split(",")] if args else []
    try:
        if kind == "pm" and len(vals) == 2:
            return PartialMeasurement(*vals)
        if kind == "k" and len(vals) >= 4 and len(vals) % 2 == 0:
            half = len(vals) // 2
            return KOutcomeMeasurement(tuple(vals[:half]), tuple(vals[half:]))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    raise argparse.ArgumentTypeError(f"bad Alice choice {text!r}: use Z, X, I, pm:P,Q or k:P1,..,PK,Q1,..,QK")


# --- parser ------------------------------------------------------------------

def _common(sp, stochastic: bool):
    sp.add_argument("--seed", type=int, required=stochastic, default=None if stochastic else 0)
    sp.add_argument("--out", default=None, help="output file (stdout when omitted)")
    sp.add_argument("--format", choices=("json", "csv"), default=None, help="defaults from --out extension, else json")


def _pq(sp):
    sp.add_argument("--p", type=_probability, required=True)
    sp.add_argument("--q", type=_probability, required=True)


def _angles(sp):
    sp.add_argument("--theta", type=_theta, default=0.0)
    sp.add_argument("--phi", type=_phi, default=0.0)


def _counts(sp):
    sp.add_argument("--nm", type=_count, required=True, help="successful hexagons via the m path")
    sp.add_argument("--nmbar", type=_count, required=True, help="successful hexagons via the mbar path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reversim", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    sp = sub.add_parser("chain", help="Monte Carlo of measure-and-reverse chains")
    _pq(sp)
    _angles(sp)
    sp.add_argument("--hexagons", type=_positive_int, default=1)
    sp.add_argument("--trials", type=_positive_int, default=100_000)
    sp.add_argument("--workers", type=_positive_int, default=1)
    _common(sp, True)

    sp = sub.add_parser("enumerate", help="exact probabilities of every chain history")
    _pq(sp)
    _angles(sp)
    sp.add_argument("--depth", type=_positive_int, default=1)
    _common(sp, False)

    sp = sub.add_parser("likelihood", help="log-likelihood surface over (theta, phi)")
    _pq(sp)
    _counts(sp)
    sp.add_argument("--grid", type=_positive_int, default=50)
    sp.add_argument("--reversal-factors", type=_on_off, default=True)
    _common(sp, False)

    sp = sub.add_parser("fisher", help="finite-difference Fisher matrix")
    _pq(sp)
    _counts(sp)
    _angles(sp)
    sp.add_argument("--reversal-factors", type=_on_off, default=True)
    sp.add_argument("--step", type=float, default=1e-4)
    _common(sp, False)

    sp = sub.add_parser("entropy", help="measurement/reversal entropy split")
    _pq(sp)
    _counts(sp)
    _angles(sp)
    sp.add_argument("--scan", type=_positive_int, default=101, help="points per axis of the (p, q) scan")
    _common(sp, False)

    sp = sub.add_parser("epr", help="entanglement amplification on a Bell pair")
    _pq(sp)
    sp.add_argument("--trials", type=_positive_int, default=100_000)
    _common(sp, True)

    sp = sub.add_parser("teleport", help="teleportation state and remote readout")
    _angles(sp)
    sp.add_argument("--p", type=_probability, default=0.99, help="Alice's measurement strength (q = 0)")
    sp.add_argument("--variant", choices=("two_bit", "one_bit", "both"), default="both")
    _common(sp, True)

    sp = sub.add_parser("nosignal", help="Bob's marginals under Alice's choices")
    sp.add_argument("--alice", type=_alice_choice, action="append", help="Z, X, I, pm:P,Q or k:P..,Q..")
    sp.add_argument("--bob-basis", choices=("Z", "X"), action="append")
    _common(sp, False)

    sp = sub.add_parser("b92", help="B92 protocol with an optional eavesdropper")
    sp.add_argument("--rounds", type=_positive_int, default=100_000)
    sp.add_argument("--eve", type=_eve, default=EveStrategy())
    sp.add_argument("--workers", type=_positive_int, default=1)
    _common(sp, True)
    return parser


# --- commands ----------------------------------------------------------------

def _state(args):
    return state_from_angles(BlochAngles(args.theta, args.phi))


def cmd_chain(args):
    pm = PartialMeasurement(args.p, args.q)
    psi = _state(args)
    cfg = ChainConfig(args.hexagons, args.trials, args.seed)
    res = simulate_ensemble(pm, psi, cfg, workers=args.workers)
    out = {
        "counts": {"N": res.counts.N, "N_m": res.counts.N_m, "N_mbar": res.counts.N_mbar},
        "rates": res.rates,
        "expected": {
            "success_m_path": pm.path_probability(Outcome.M),
            "success_mbar_path": pm.path_probability(Outcome.MBAR),
            "completion": pm.success_probability**args.hexagons,
            "postselected_m_fraction": pm.path_probability(Outcome.M) / pm.success_probability,
        },
    }
    if args.hexagons <= MAX_ENUM_DEPTH:
        out["oracle_completion"] = enumerate_exact(pm, psi, args.hexagons).completion_probability()
    return out


def cmd_enumerate(args):
    pm = PartialMeasurement(args.p, args.q)
    dist = enumerate_exact(pm, _state(args), args.depth)
    histories = [
        {"outcomes": "".join(o.symbol for o, _ in k), "successes": [bool(s) for _, s in k], "probability": v}
        for k, v in dist.probabilities.items()
    ]
    return {"total": dist.total(), "completion_probability": dist.completion_probability(), "histories": histories}


def _surface(args):
    pm = PartialMeasurement(args.p, args.q)
    thetas, phis = angle_grid(args.grid)
    return log_likelihood_surface(pm, CountRecord(args.nm, args.nmbar), thetas, phis, LikelihoodSpec(args.reversal_factors))


def cmd_likelihood(args):
    surf = _surface(args)
    est = map_estimate(surf)
    return {
        "flatness": surf.flatness,
        "phi_flatness": surf.phi_flatness,
        "map_cells": len(est.cells),
        "map_degenerate": est.degenerate,
        "theta_grid": surf.theta_grid,
        "phi_grid": surf.phi_grid,
        "log_values": surf.log_values,
    }


def cmd_fisher(args):
    pm = PartialMeasurement(args.p, args.q)
    f = fisher_information(
        pm, CountRecord(args.nm, args.nmbar), BlochAngles(args.theta, args.phi), LikelihoodSpec(args.reversal_factors), args.step
    )
    return {"fisher": f, "max_abs_entry": float(np.max(np.abs(f)))}


def cmd_entropy(args):
    pm = PartialMeasurement(args.p, args.q)
    rep = entropy_report(pm, _state(args), CountRecord(args.nm, args.nmbar))
    g = interior_grid(args.scan)
    p_best, q_best, s_best = asymptotic_entropy_scan(g, g)
    return {
        "S_meas": rep.S_meas,
        "S_rev": rep.S_rev,
        "S_total": rep.S_total,
        "closed_form": rep.closed_form,
        "asymptotic_per_hexagon": float(asymptotic_entropy(args.p, args.q)),
        "scan": {"p": p_best, "q": q_best, "S": s_best, "ln2": math.log(2)},
    }


def cmd_epr(args):
    res = amplification_ensemble(args.p, args.q, args.trials, args.seed)
    ok, is_b = res["reversal_success"], res["outcome_mbar"]
    c_after = res["C_after"][ok]
    return {
        "trials": args.trials,
        "success_rate": res["success_rate"],
        "oracle_success_probability": res["oracle_success_probability"],
        "concurrence_after_m": concurrence_after_m(args.p, args.q),
        "concurrence_after_mbar": concurrence_after_mbar(args.p, args.q),
        "mean_C_before_m": float(res["C_before"][~is_b].mean()) if (~is_b).any() else None,
        "mean_C_before_mbar": float(res["C_before"][is_b].mean()) if is_b.any() else None,
        "max_abs_C_after_minus_1": float(np.max(np.abs(c_after - 1))) if c_after.size else None,
        "max_fidelity_deficit": res["max_fidelity_deficit"],
    }


def cmd_teleport(args):
    psi = _state(args)
    stream = rng_mod.Stream(args.seed, 0)
    out = {
        "four_term_deviation": float(np.max(np.abs(teleport_prepare(psi).amps - teleport_four_term(psi).amps))),
        "state": teleport_prepare(psi).vector,
    }
    variants = ("two_bit", "one_bit") if args.variant == "both" else (args.variant,)
    for v in variants:
        rep = remote_readout_scenario(psi, args.p, v, stream)
        if v == "one_bit":
            for b in rep["branches"].values():
                b["state"] = b["state"].vector
        out[v] = rep
    return out


def cmd_nosignal(args):
    choices = args.alice or [PartialMeasurement(0.2, 0.3), PartialMeasurement(0.9, 0.05), "Z", "X", "I"]
    bases = args.bob_basis or ["Z", "X"]
    phi = bell_phi_plus()
    return {
        "max_deviation": no_signaling_check(choices, bases),
        "marginals": {
            b: [{"alice": repr(c), "bob": bob_marginal(phi, c, b)} for c in choices] for b in bases
        },
    }


def cmd_b92(args):
    cfg = B92Config(args.rounds, args.seed, args.eve)
    _, stats = run_b92(cfg, workers=args.workers)
    ex = b92_exact(args.eve)
    return {
        "stats": stats,
        "exact": {
            "sift_rate": ex.sift_rate,
            "error_rate": ex.error_rate,
            "loss_rate": ex.loss_rate,
            "leakage": ex.leakage,
            "transparency": ex.transparency,
        },
    }


COMMANDS = {
    "chain": cmd_chain,
    "enumerate": cmd_enumerate,
    "likelihood": cmd_likelihood,
    "fisher": cmd_fisher,
    "entropy": cmd_entropy,
    "epr": cmd_epr,
    "teleport": cmd_teleport,
    "nosignal": cmd_nosignal,
    "b92": cmd_b92,
}


# --- output ------------------------------------------------------------------

def jsonable(x):
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (complex, np.complexfloating)):
        return [jsonable(x.real), jsonable(x.imag)]
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x + 0.0  # no negative zero in reports
    if isinstance(x, EveStrategy):
        return {"kind": x.kind, "p": x.p, "q": x.q, "rounds_per_qubit": x.rounds_per_qubit, "basis": x.basis}
    if x is None or isinstance(x, str):
        return x
    return repr(x)


def manifest(args, fmt: str) -> dict:
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out", "seed", "format", "workers")}
    return {
        "command": args.command,
        "parameters": jsonable(params),
        "seed": args.seed,
        "format": fmt,
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _flatten(prefix, x, rows):
    if isinstance(x, dict):
        for k, v in x.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(x, list):
        for i, v in enumerate(x):
            _flatten(f"{prefix}.{i}", v, rows)
    else:
        rows.append((prefix, x))


def render(command: str, man: dict, results: dict, fmt: str) -> str:
    if fmt == "json":
        return json.dumps({"manifest": man, "results": jsonable(results)}, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    buf.write("# manifest: " + json.dumps(man, sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    if command == "likelihood":
        # rows: theta, columns: phi
        w.writerow(["theta\\phi"] + [repr(float(p)) for p in results["phi_grid"]])
        for t, row in zip(results["theta_grid"], results["log_values"]):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return buf.getvalue()
    rows: list = []
    _flatten("", jsonable(results), rows)
    w.writerow(["key", "value"])
    w.writerows(rows)
    return buf.getvalue()


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    fmt = args.format or ("csv" if args.out and args.out.lower().endswith(".csv") else "json")
    try:
        results = COMMANDS[args.command](args)
        text = render(args.command, manifest(args, fmt), results, fmt)
    except NotInvertibleError as exc:
        print(f"reversim {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # reported, not raised, so scripts see exit status 1
        print(f"reversim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    if args.out is None:
        sys.stdout.write(text)
        return 0
    try:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        print(f"reversim: cannot write {args.out}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
