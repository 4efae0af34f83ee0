"""Command-line interface.

Every subcommand prints a JSON document on stdout (``validate`` also prints
one line per criterion) and is deterministic for a fixed ``--seed``.
Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from . import config as cfg
from .errors import ConfigError, JumpResponseError

DEFAULT_SEED = 20240101
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDATION = 0, 2, 3, 4


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    return x


def _emit(doc, out=None):
    text = json.dumps(_jsonable(doc), sort_keys=True, indent=2)
    print(text)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _floats(text, flag):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(flag, f"expected comma-separated numbers, got {text!r}") from None


def _grid(text, flag):
    """Comma-separated values, or ``a:b:steps`` for ``steps`` evenly spaced points."""
    if ":" not in text:
        return _floats(text, flag)
    parts = text.split(":")
    try:
        a, b, steps = float(parts[0]), float(parts[1]), int(parts[2])
        if len(parts) != 3 or steps < 1:
            raise ValueError
    except (ValueError, IndexError):
        raise ConfigError(flag, f"expected a:b:steps with steps >= 1, got {text!r}") from None
    return np.linspace(a, b, steps).tolist()


def _need(built, attr, what):
    val = getattr(built, attr)
    if val is None:
        raise ConfigError(what, "section required by this command")
    return val


# ----------------------------------------------------------------------------
# commands
# ----------------------------------------------------------------------------
def cmd_model(args):
    built = cfg.load(args.config)
    if args.action == "build":
        _emit(cfg.describe(built), args.out)
        return EXIT_OK
    from .oss import estimate_gap, spectrum_check

    chain = built.chain
    doc = {"hash": built.hash, "kind": built.doc["model"]["kind"], "n": built.rates.n,
           "irreducible": built.rates.irreducible, "pi_head": chain.pi[:10]}
    gap = estimate_gap(chain)
    doc["spectral_gap"] = {"kappa": gap.kappa, "C": gap.C}
    if built.rates.n <= 2000:
        doc["spectrum_ok"] = spectrum_check(chain)["ok"]
    _emit(doc, args.out)
    return EXIT_OK


def cmd_simulate(args):
    from .core import PerturbedKernel
    from .paths import eval_functional_ensemble, simulate_ensemble

    built = cfg.load(args.config)
    kernel = built.rates
    if args.lam:
        kernel = PerturbedKernel(built.rates, _need(built, "g", "perturbation"), args.lam)
    ens = simulate_ensemble(kernel, built.initial, args.t, args.paths, args.seed,
                            workers=args.workers)
    keep = ~ens.truncated
    counts = np.bincount(ens.final_state[keep], minlength=built.rates.n)
    doc = {"paths": ens.n_paths, "seed": args.seed, "t": args.t, "lambda": args.lam,
           "truncated": int(ens.truncated.sum()),
           "mean_jumps": float(ens.n_jumps[keep].mean()),
           "final_state_frequencies_head": (counts / max(keep.sum(), 1))[:10]}
    if built.spec is not None:
        vals = eval_functional_ensemble(ens, built.spec)[keep]
        doc["functional"] = {"mean": float(vals.mean()),
                             "stderr": float(vals.std(ddof=1) / math.sqrt(len(vals)))}
    if args.dump:
        ens.dump_jsonl(args.dump)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_lr(args):
    from .paths import JumpSum, TerminalObservable
    from .response_exact import (lr_jump_stationary, lr_observable_stationary,
                                 lr_time_integral_stationary, response_sensitivity)
    from .response_mc import fd_derivative, lr_covariance

    built = cfg.load(args.config)
    g = _need(built, "g", "perturbation")
    spec = _need(built, "spec", "observable")
    nu = built.initial
    if args.method == "mc":
        est = lr_covariance(spec, g, built.rates, nu, args.t, n=args.paths, seed=args.seed,
                            workers=args.workers)
        doc = dict(est.__dict__)
    elif args.method == "fd":
        est = fd_derivative(spec, g, built.rates, nu, args.t, lam_step=args.lam_step,
                            n=args.paths, seed=args.seed, workers=args.workers)
        step = args.lam_step if args.lam_step is not None else 1e-3 / max(g.bound, 1e-300)
        doc = dict(est.__dict__, lambda_step=step)
    else:
        f = spec.field
        if built.doc["initial"] == "stationary":
            chain = built.chain
            if isinstance(spec, TerminalObservable):
                val = lr_observable_stationary(chain, f.static_value, g, args.t, tol=args.tolerance)
            elif isinstance(spec, JumpSum):
                val = lr_jump_stationary(chain, f, g, args.t, tol=args.tolerance)
            else:
                val = lr_time_integral_stationary(chain, f, g, args.t, tol=args.tolerance)
            method = "stationary correlation"
        else:
            key = {"TerminalObservable": "observable", "TimeIntegral": "time_integral",
                   "JumpSum": "jump"}[type(spec).__name__]
            kw = {"alpha": f} if isinstance(spec, JumpSum) else {"v": f}
            val = response_sensitivity(built.rates, g, nu, args.t, **kw)[key]
            method = "sensitivity equations"
        doc = {"value": val, "estimator": "exact", "method": method}
    doc.update(t=args.t, model_hash=built.hash)
    _emit(doc, args.out)
    return EXIT_OK


def cmd_oss(args):
    from .oss import (PeriodicDriving, fourier_response, monodromy, oss_derivative,
                      oss_distribution, oss_lr_observable)
    from .paths import TerminalObservable

    built = cfg.load(args.config)
    g = _need(built, "g", "perturbation")
    T = g.period
    if T is None:
        raise ConfigError("perturbation.profile", "OSS needs a periodic profile")
    chain = built.chain
    driving = PeriodicDriving(chain, g, T)
    grid = np.linspace(0.0, T, args.slices, endpoint=False)
    doc = {"period": T, "pi": chain.pi,
           "a_t": [{"t": s, "a": oss_derivative(driving, s, tol=args.tolerance)} for s in grid]}
    if args.lam:
        doc["lambda"] = args.lam
        doc["pi_lambda"] = oss_distribution(monodromy(built.rates, g, args.lam, T))
    if isinstance(built.spec, TerminalObservable):
        v = built.spec.field.static_value
        doc["observable_response"] = [{"t": s, "value": oss_lr_observable(v, driving, s)}
                                      for s in grid]
        doc["fourier_response"] = {str(k): fourier_response(v, driving, k) for k in range(4)}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_mobility(args):
    from .mobility import mobility

    built = cfg.load(args.config)
    torus = built.torus
    omegas = _grid(args.omega_grid, "--omega-grid")
    rows, results = [], []
    for w in omegas:
        m = mobility(torus, w)
        results.append({"omega": w, "sigma": [[complex(z) for z in row] for row in m.sigma],
                        "restricted": m.restricted})
        for j in range(torus.d):
            for k in range(torus.d):
                z = complex(m.sigma[j, k])
                rows.append([repr(w), j, k, repr(z.real), repr(z.imag)])
    doc = {"model_hash": built.hash, "d": torus.d, "N": torus.N, "results": results}
    if args.out:
        base = args.out[:-5] if args.out.endswith(".json") else args.out
        with open(base + ".csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["omega", "j", "k", "re", "im"])
            w.writerows(rows)
        _emit(doc, base + ".json")
    else:
        _emit(doc)
    return EXIT_OK


def cmd_check(args):
    from . import models
    from .mobility import TorusModel

    built = cfg.load(args.config)
    s = built.structured
    doc = {"model_hash": built.hash, "truncated_verdicts": True}
    if isinstance(s, models.BirthDeathModel):
        st = models.bd_stationary(s)
        doc["birth_death"] = {"Z_partial": st.Z, "pi_head": st.pi[:10],
                              "conditions": models.bd_check_conditions(s).to_dict()}
    if isinstance(s, models.ConfiningPotentialModel):
        doc["confining"] = {"log_partition": s.log_partition()}
    if built.g is not None and not isinstance(s, TorusModel):
        cert = models.constant_certificate(built.rates, built.g)
        rep = models.lyapunov_check(built.rates, built.g, cert, nu=built.initial)
        doc["lyapunov_constant_U"] = dict(rep.to_dict(), C=cert.C, sigma=cert.sigma)
        best, rows = models.theta_scan(built.rates, built.g, _floats(args.theta_grid, "--theta-grid"),
                                       args.t, built.initial, n=args.paths, seed=args.seed,
                                       workers=args.workers)
        doc["exp_moments"] = {"best_theta": best, "grid": rows, "t": args.t}
    _emit(doc, args.out)
    return EXIT_OK


def cmd_validate(args):
    from .acceptance import run_all

    selected = set(int(x) for x in _floats(args.criteria, "--criteria")) if args.criteria else None
    results = run_all(selected, stream=sys.stdout)
    ok = all(r.passed and r.within_budget for r in results)
    if args.out:
        with open(args.out, "w") as fh:
            json.dump([_jsonable(r.__dict__) for r in results], fh, indent=2, sort_keys=True)
    print("all criteria passed" if ok else "some criteria failed")
    return EXIT_OK if ok else EXIT_VALIDATION


# ----------------------------------------------------------------------------
# parser
# ----------------------------------------------------------------------------
def _common(p, config=True, mc=False):
    if config:
        p.add_argument("--config", required=True, help="model document (JSON)")
    p.add_argument("--out", help="write the JSON result to this file as well")
    p.add_argument("--t", type=float, default=1.0, help="time horizon (default 1)")
    p.add_argument("--tolerance", type=float, default=1e-9, help="quadrature tolerance")
    if mc:
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.add_argument("--paths", type=int, default=100_000, help="number of paths")
        p.add_argument("--workers", type=int, default=None,
                       help="worker processes (default: $JUMPRESPONSE_WORKERS or 1)")


def build_parser():
    ap = argparse.ArgumentParser(prog="jumpresponse",
                                 description="Linear response of Markov jump processes.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", help="build or describe a model document")
    p.add_argument("action", choices=("describe", "build"))
    _common(p)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("simulate", help="simulate paths and summarize them")
    _common(p, mc=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0, help="perturbation strength")
    p.add_argument("--dump", help="write trajectories as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("lr", help="linear response of the configured observable")
    p.add_argument("method", choices=("mc", "exact", "fd"))
    _common(p, mc=True)
    p.add_argument("--lambda-step", dest="lam_step", type=float, default=None,
                   help="FD step (default 1e-3 / sup|g|)")
    p.set_defaults(func=cmd_lr)

    p = sub.add_parser("oss", help="oscillatory steady state under periodic driving")
    _common(p)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="also compute pi_lambda from the monodromy matrix")
    p.add_argument("--slices", type=int, default=16, help="number of phases in one period")
    p.set_defaults(func=cmd_oss)

    p = sub.add_parser("mobility", help="complex mobility over a frequency grid")
    _common(p)
    p.add_argument("--omega-grid", default="0.5,1,10",
                   help="comma-separated frequencies, or a:b:steps")
    p.set_defaults(func=cmd_mobility)

    p = sub.add_parser("check", help="condition checkers (truncated verdicts)")
    _common(p, mc=True)
    p.add_argument("--theta-grid", default="0.1,0.25,0.5,1", help="exponential-moment thetas")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("validate", help="run the acceptance suite")
    p.add_argument("--criteria", default="", help="comma-separated criterion numbers")
    p.add_argument("--out", help="write per-criterion results as JSON")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"jumpresponse: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except JumpResponseError as exc:
        print(f"jumpresponse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
