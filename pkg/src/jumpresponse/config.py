"""JSON model documents: validation, canonical form and construction.

A document has a required ``model`` section and optional ``perturbation``,
``initial`` and ``observable`` sections. :func:`canonicalize` fills defaults
and normalizes numbers, :func:`build` turns a document into live objects and
:func:`describe` regenerates the canonical document from them, so that
``describe(build(doc)) == canonicalize(doc)``.

Model kinds
-----------
``matrix``            ``rates``: n x n list
``edges``             ``n``, ``edges``: list of [x, y, rate]
``two_state``         ``a``, ``b``
``birth_death``       ``birth``, ``death`` (rate specs), ``K``
``torus``             ``d``, ``N``, ``plus``, ``minus`` (scalars or length-d lists)
``two_periodic``      ``N``, ``r0p``, ``r0m``, ``r1p``, ``r1m``
``conductance_torus`` ``d``, ``N``, ``conductances`` (nested list) or ``seed``
``confining``         ``d``, ``R``, ``scale`` (V(x) = scale |x|^2)

A perturbation is ``{"profile": ..., <E>}`` where ``<E>`` is one of ``E``
(n x n list), ``edges`` (list of [x, y, value]), ``on_edges`` (the same value
on every edge of the model), ``direction`` (torus models: g = profile times
the displacement along the direction) or ``up``/``down`` (birth-death rate
specs for E_k^+ and E_k^-).

A rate spec is a number or ``{"affine": [c0, c1]}`` meaning ``c0 + c1 k``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core import RateMatrix, StationaryChain
from .errors import ConfigError, JumpResponseError
from .fields import Field, Perturbation
from .mobility import TorusModel, build_torus, two_periodic_torus
from .models import BirthDeathModel, ConfiningPotentialModel
from .paths import JumpSum, TerminalObservable, TimeIntegral
from .profiles import profile_from_dict

MODEL_KINDS = ("matrix", "edges", "two_state", "birth_death", "torus", "two_periodic",
               "conductance_torus", "confining")


# ----------------------------------------------------------------------------
# small validators
# ----------------------------------------------------------------------------
def _get(doc, key, path, required=True, default=None):
    if not isinstance(doc, dict):
        raise ConfigError(path, "expected an object")
    if key not in doc:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required field")
        return default
    return doc[key]


def _number(x, path, positive=False, nonneg=False):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(path, f"expected a number, got {type(x).__name__}")
    x = float(x)
    if not np.isfinite(x):
        raise ConfigError(path, "must be finite")
    if positive and x <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and x < 0:
        raise ConfigError(path, "must be nonnegative")
    return x


def _integer(x, path, minimum=None):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(path, f"expected an integer, got {type(x).__name__}")
    if minimum is not None and x < minimum:
        raise ConfigError(path, f"must be at least {minimum}")
    return int(x)


def _matrix(x, path, n=None):
    try:
        A = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric matrix") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError(path, f"expected a square matrix, got shape {A.shape}")
    if n is not None and A.shape[0] != n:
        raise ConfigError(path, f"expected size {n}, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise ConfigError(path, "entries must be finite")
    return A


def _vector(x, path, n):
    try:
        v = np.asarray(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a numeric list") from None
    if v.shape != (n,):
        raise ConfigError(path, f"expected length {n}, got shape {v.shape}")
    return v


def _edges(x, path, n):
    if not isinstance(x, list):
        raise ConfigError(path, "expected a list of [x, y, value] triples")
    out = []
    for i, e in enumerate(x):
        p = f"{path}[{i}]"
        if not isinstance(e, list) or len(e) != 3:
            raise ConfigError(p, "expected [x, y, value]")
        a, b = _integer(e[0], p + "[0]", 0), _integer(e[1], p + "[1]", 0)
        if a >= n or b >= n:
            raise ConfigError(p, f"state index out of range 0..{n - 1}")
        out.append([a, b, _number(e[2], p + "[2]")])
    return sorted(out)


def _rate_spec(x, path):
    if isinstance(x, dict):
        c = _get(x, "affine", path)
        if not isinstance(c, list) or len(c) != 2:
            raise ConfigError(f"{path}.affine", "expected [c0, c1]")
        return {"affine": [_number(c[0], f"{path}.affine[0]"), _number(c[1], f"{path}.affine[1]")]}
    return _number(x, path)


def _rate_fn(spec):
    if isinstance(spec, dict):
        c0, c1 = spec["affine"]
        return lambda k: c0 + c1 * np.asarray(k, dtype=float)
    return spec


def _dirs(x, path, d):
    if isinstance(x, list):
        if len(x) != d:
            raise ConfigError(path, f"expected {d} values")
        return [_number(v, f"{path}[{i}]", positive=True) for i, v in enumerate(x)]
    return _number(x, path, positive=True)


# ----------------------------------------------------------------------------
# canonical form
# ----------------------------------------------------------------------------
def _canonical_model(m, path="model"):
    kind = _get(m, "kind", path)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"{path}.kind", f"unknown kind {kind!r}; expected one of {MODEL_KINDS}")
    out = {"kind": kind}
    if kind == "matrix":
        out["rates"] = _matrix(_get(m, "rates", path), f"{path}.rates").tolist()
    elif kind == "edges":
        n = _integer(_get(m, "n", path), f"{path}.n", 2)
        out["n"] = n
        out["edges"] = _edges(_get(m, "edges", path), f"{path}.edges", n)
    elif kind == "two_state":
        out["a"] = _number(_get(m, "a", path), f"{path}.a", positive=True)
        out["b"] = _number(_get(m, "b", path), f"{path}.b", positive=True)
    elif kind == "birth_death":
        out["birth"] = _rate_spec(_get(m, "birth", path), f"{path}.birth")
        out["death"] = _rate_spec(_get(m, "death", path), f"{path}.death")
        out["K"] = _integer(_get(m, "K", path), f"{path}.K", 1)
    elif kind == "torus":
        d = _integer(_get(m, "d", path), f"{path}.d", 1)
        out.update(d=d, N=_integer(_get(m, "N", path), f"{path}.N", 2),
                   plus=_dirs(_get(m, "plus", path), f"{path}.plus", d),
                   minus=_dirs(_get(m, "minus", path), f"{path}.minus", d))
    elif kind == "two_periodic":
        out["N"] = _integer(_get(m, "N", path), f"{path}.N", 2)
        if out["N"] % 2:
            raise ConfigError(f"{path}.N", "must be even")
        for key in ("r0p", "r0m", "r1p", "r1m"):
            out[key] = _number(_get(m, key, path), f"{path}.{key}", positive=True)
    elif kind == "conductance_torus":
        d = _integer(_get(m, "d", path), f"{path}.d", 1)
        N = _integer(_get(m, "N", path), f"{path}.N", 2)
        out.update(d=d, N=N)
        if "conductances" in m:
            xi = np.asarray(m["conductances"], dtype=float)
            if xi.shape != (d,) + (N,) * d:
                raise ConfigError(f"{path}.conductances", f"expected shape {(d,) + (N,) * d}")
            if np.any(xi <= 0):
                raise ConfigError(f"{path}.conductances", "must be positive")
            out["conductances"] = xi.tolist()
        else:
            out["seed"] = _integer(_get(m, "seed", path, False, 0), f"{path}.seed", 0)
    elif kind == "confining":
        out.update(d=_integer(_get(m, "d", path), f"{path}.d", 1),
                   R=_integer(_get(m, "R", path), f"{path}.R", 1),
                   scale=_number(_get(m, "scale", path, False, 0.5), f"{path}.scale",
                                 positive=True))
    extra = set(m) - set(out) - {"kind"}
    if extra:
        raise ConfigError(path, f"unknown field(s) {sorted(extra)}")
    return out


def _canonical_profile(p, path):
    if p is None:
        return {"name": "constant", "value": 1.0}
    try:
        return profile_from_dict(p).to_dict()
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, f"invalid profile ({exc})") from None


def _canonical_perturbation(p, model, path="perturbation"):
    out = {"profile": _canonical_profile(_get(p, "profile", path, False), f"{path}.profile")}
    kind = model["kind"]
    keys = set(p) - {"profile"}
    if "E" in p:
        out["E"] = _matrix(p["E"], f"{path}.E").tolist()
    elif "edges" in p:
        out["edges"] = _edges(p["edges"], f"{path}.edges", 10 ** 9)
    elif "on_edges" in p:
        out["on_edges"] = _number(p["on_edges"], f"{path}.on_edges")
    elif "direction" in p and kind in ("torus", "two_periodic", "conductance_torus"):
        d = model.get("d", 1)
        out["direction"] = _vector(p["direction"], f"{path}.direction", d).tolist()
    elif "up" in p and kind == "birth_death":
        out["up"] = _rate_spec(p["up"], f"{path}.up")
        out["down"] = _rate_spec(_get(p, "down", path, False, 0.0), f"{path}.down")
    else:
        raise ConfigError(path, "give E, edges, on_edges, direction (torus) or up/down "
                                "(birth_death)")
    extra = keys - set(out)
    if extra:
        raise ConfigError(path, f"unknown field(s) {sorted(extra)}")
    return out


def _canonical_initial(x, path="initial"):
    if x is None or x == "stationary":
        return "stationary"
    if isinstance(x, int) and not isinstance(x, bool):
        return _integer(x, path, 0)
    if isinstance(x, list):
        v = np.asarray(x, dtype=float)
        if v.ndim != 1 or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ConfigError(path, "expected a probability vector")
        return v.tolist()
    raise ConfigError(path, "expected \"stationary\", a state index or a probability vector")


def _canonical_observable(o, path="observable"):
    if not isinstance(o, dict) or len(o) != 1:
        raise ConfigError(path, "expected exactly one of terminal, time_integral, jump_sum")
    (key, val), = o.items()
    if key in ("terminal", "time_integral"):
        try:
            v = np.asarray(val, dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.{key}", "expected a numeric list") from None
        if v.ndim != 1:
            raise ConfigError(f"{path}.{key}", "expected a list over states")
        return {key: v.tolist()}
    if key == "jump_sum":
        return {key: _matrix(val, f"{path}.{key}").tolist()}
    raise ConfigError(path, f"unknown observable {key!r}")


def canonicalize(doc):
    """Validated document with defaults filled in and numbers as floats."""
    if not isinstance(doc, dict):
        raise ConfigError("$", "document must be a JSON object")
    extra = set(doc) - {"model", "perturbation", "initial", "observable"}
    if extra:
        raise ConfigError("$", f"unknown section(s) {sorted(extra)}")
    model = _canonical_model(_get(doc, "model", "$"))
    out = {"model": model, "initial": _canonical_initial(doc.get("initial"))}
    if "perturbation" in doc:
        out["perturbation"] = _canonical_perturbation(doc["perturbation"], model)
    if "observable" in doc:
        out["observable"] = _canonical_observable(doc["observable"])
    return out


def dumps(doc):
    """Canonical JSON text (sorted keys, fixed separators)."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def model_hash(doc):
    return hashlib.sha256(dumps(canonicalize(doc)).encode()).hexdigest()


# ----------------------------------------------------------------------------
# construction
# ----------------------------------------------------------------------------
@dataclass
class BuiltModel:
    """Live objects for a model document."""

    doc: dict
    rates: RateMatrix
    structured: object = None  # BirthDeathModel, TorusModel or ConfiningPotentialModel
    g: Perturbation | None = None
    spec: object = None

    @property
    def chain(self) -> StationaryChain:
        if "_chain" not in self.__dict__:
            pi = getattr(self.structured, "pi", None)
            self._chain = StationaryChain(self.rates, pi)
        return self._chain

    @property
    def initial(self):
        x = self.doc["initial"]
        if x == "stationary":
            return self.chain.pi
        if isinstance(x, int):
            if x >= self.rates.n:
                raise ConfigError("initial", f"state {x} out of range")
            return x
        return _vector(x, "initial", self.rates.n)

    @property
    def torus(self) -> TorusModel:
        if not isinstance(self.structured, TorusModel):
            raise ConfigError("model.kind", "this command needs a torus model")
        return self.structured

    @property
    def hash(self):
        return hashlib.sha256(dumps(self.doc).encode()).hexdigest()


def _build_structure(m):
    kind = m["kind"]
    if kind == "matrix":
        return RateMatrix(np.array(m["rates"])), None
    if kind == "edges":
        R = np.zeros((m["n"], m["n"]))
        for a, b, v in m["edges"]:
            R[a, b] += v
        return RateMatrix(R), None
    if kind == "two_state":
        return RateMatrix(np.array([[0.0, m["a"]], [m["b"], 0.0]])), None
    if kind == "birth_death":
        bd = BirthDeathModel(_rate_fn(m["birth"]), _rate_fn(m["death"]), m["K"])
        return bd.rates, bd
    if kind == "torus":
        t = build_torus(m["d"], m["N"], m["plus"], m["minus"])
        return t.rates, t
    if kind == "two_periodic":
        t = two_periodic_torus(m["N"], m["r0p"], m["r0m"], m["r1p"], m["r1m"])
        return t.rates, t
    if kind == "conductance_torus":
        shape = (m["d"],) + (m["N"],) * m["d"]
        xi = np.array(m["conductances"]) if "conductances" in m \
            else 1.0 - np.random.default_rng(m["seed"]).random(shape)
        t = build_torus(m["d"], m["N"], conductances=xi)
        return t.rates, t
    if kind == "confining":
        scale = m["scale"]
        cm = ConfiningPotentialModel(
            lambda x: scale * np.sum(np.asarray(x, dtype=float) ** 2, axis=-1), m["d"], m["R"])
        return cm.rates, cm
    raise ConfigError("model.kind", f"unknown kind {kind!r}")  # unreachable after validation


def _build_perturbation(p, rates, structured):
    profile = profile_from_dict(p["profile"])
    n = rates.n
    if "E" in p:
        E = _matrix(p["E"], "perturbation.E", n)
    elif "edges" in p:
        E = np.zeros((n, n))
        for a, b, v in p["edges"]:
            if a >= n or b >= n:
                raise ConfigError("perturbation.edges", f"state index out of range 0..{n - 1}")
            E[a, b] = v
    elif "on_edges" in p:
        E = p["on_edges"] * (rates.dense() > 0)
    elif "direction" in p:
        try:
            return Perturbation.decoupled(profile, structured.field_E(p["direction"]))
        except ValueError as exc:
            raise ConfigError("perturbation.direction", str(exc)) from None
    else:
        return structured.perturbation(_rate_fn(p["up"]), _rate_fn(p["down"]), profile)
    return Perturbation.decoupled(profile, E)


def _build_spec(o, n):
    (key, val), = o.items()
    if key == "jump_sum":
        return JumpSum(Field.static(_matrix(val, "observable.jump_sum", n)))
    v = _vector(val, f"observable.{key}", n)
    return TerminalObservable(v) if key == "terminal" else TimeIntegral(v)


def build(doc) -> BuiltModel:
    """Validate and construct. Raises :class:`ConfigError` with a field path."""
    doc = canonicalize(doc)
    try:
        rates, structured = _build_structure(doc["model"])
    except ConfigError:
        raise
    except (JumpResponseError, ValueError) as exc:
        raise ConfigError("model", str(exc)) from None
    g = _build_perturbation(doc["perturbation"], rates, structured) \
        if "perturbation" in doc else None
    spec = _build_spec(doc["observable"], rates.n) if "observable" in doc else None
    built = BuiltModel(doc, rates, structured, g, spec)
    built.initial  # validates the initial law against n
    return built


def describe(built: BuiltModel):
    """Canonical document of a built model."""
    doc = dict(built.doc)
    if doc["model"]["kind"] == "matrix":
        doc["model"] = {"kind": "matrix", "rates": built.rates.dense().tolist()}
    return canonicalize(doc)


def load(path):
    """Read and build a document from a JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON ({exc})") from None
    return build(doc)
