"""Heterogeneous population models: n distinguishable objects, each in one of
|S| states, evolving through unilateral or joint transitions.

A transition rule lists the participating objects with their (from, to) states
and a rate constant. The rule fires at ``rate * prod_p x[(obj_p, from_p)]``,
i.e. the stored constant is the fully scaled rate of that specific tuple; any
population scaling (1/(d n^(d-1)) factors, symmetrisation) is the model
builder's responsibility.

Flattened indexing is (object-major, state-minor): entry (k, s) of a state
vector lives at ``k * |S| + s_index``. Object indices are 0-based in the
Python API and 1-based in the JSON file format.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ModelError, ModelFormatError

SCHEMA_VERSION = 1

# refinement tensors are exercised for d <= 2 models; larger arities work but
# get flagged by validate()
ARITY_WARN_THRESHOLD = 4


@dataclass(frozen=True)
class TransitionRule:
    """One transition channel: ``participants`` is a tuple of
    (object, from_state, to_state) triples with distinct objects."""

    participants: tuple[tuple[int, str, str], ...]
    rate: float

    @property
    def arity(self) -> int:
        return len(self.participants)


def rule(participants: Iterable[tuple[int, str, str]], rate: float) -> TransitionRule:
    """Convenience constructor normalising the participant list to a tuple."""
    return TransitionRule(tuple((int(k), str(a), str(b)) for k, a, b in participants), float(rate))


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Immutable model value; safe to share across threads.

    ``eq=False`` keeps identity hashing so compiled representations can be
    cached per instance without hashing the full rule list.
    """

    n: int
    states: tuple[str, ...]
    rules: tuple[TransitionRule, ...] = ()
    rate_bound_hint: float | None = None

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.n * len(self.states)

    def state_index(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise ModelError(f"unknown state label {label!r}") from None

    def flat_index(self, obj: int, state: str | int) -> int:
        s = state if isinstance(state, int) else self.state_index(state)
        return obj * len(self.states) + s

    def structurally_equal(self, other: "ModelSpec") -> bool:
        return (self.n == other.n and self.states == other.states
                and self.rules == other.rules
                and self.rate_bound_hint == other.rate_bound_hint)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def new_model(n: int, states: Sequence[str], rate_bound_hint: float | None = None) -> ModelSpec:
    """Create an empty model with ``n`` objects and the given ordered state labels."""
    n = int(n)
    if n < 1:
        raise ModelError(f"object count must be >= 1, got {n}")
    labels = tuple(str(s) for s in states)
    if not labels:
        raise ModelError("state list must be nonempty")
    if len(set(labels)) != len(labels):
        raise ModelError(f"duplicate state labels in {labels}")
    if rate_bound_hint is not None and not (rate_bound_hint >= 0 and math.isfinite(rate_bound_hint)):
        raise ModelError(f"rate_bound_hint must be finite and nonnegative, got {rate_bound_hint}")
    return ModelSpec(n=n, states=labels, rules=(), rate_bound_hint=rate_bound_hint)


def _check_rule(model: ModelSpec, r: TransitionRule) -> list[str]:
    problems = []
    if not r.participants:
        problems.append("rule has no participants")
    objs = [k for k, _, _ in r.participants]
    for k, a, b in r.participants:
        if not 0 <= k < model.n:
            problems.append(f"object index {k} outside 0..{model.n - 1}")
        for lbl in (a, b):
            if lbl not in model.states:
                problems.append(f"unknown state label {lbl!r}")
    if len(set(objs)) != len(objs):
        problems.append(f"duplicate object among participants {objs}")
    if r.participants and all(a == b for _, a, b in r.participants):
        problems.append("no participant changes state")
    if not (math.isfinite(r.rate) and r.rate >= 0):
        problems.append(f"rate must be finite and nonnegative, got {r.rate}")
    return problems


def add_rule(model: ModelSpec, r: TransitionRule) -> ModelSpec:
    """Return a new model with ``r`` appended; existing rules are untouched."""
    problems = _check_rule(model, r)
    if problems:
        raise ModelError("; ".join(problems))
    return replace(model, rules=model.rules + (r,))


def validate(model: ModelSpec) -> ValidationReport:
    """Re-check every rule and report violations plus soft warnings.

    Warns (does not fail) when a rule's unscaled rate ``rate * d * n^(d-1)``
    exceeds the model's claimed uniform rate bound, since that bound is what
    the asymptotic accuracy guarantees rest on.
    """
    report = ValidationReport()
    for i, r in enumerate(model.rules):
        for p in _check_rule(model, r):
            report.violations.append(f"rule {i}: {p}")
        d = r.arity
        if d > ARITY_WARN_THRESHOLD:
            report.warnings.append(
                f"rule {i}: {d} participants; correction terms were only exercised at d <= 2")
        if model.rate_bound_hint is not None:
            unscaled = r.rate * d * model.n ** (d - 1)
            if unscaled > model.rate_bound_hint:
                report.warnings.append(
                    f"rule {i}: unscaled rate {unscaled:g} exceeds "
                    f"r̄={model.rate_bound_hint:g}")
    return report


# ---------------------------------------------------------------------------
# indicator encoding


def encode(model: ModelSpec, assignment: Sequence[str]) -> np.ndarray:
    """Indicator vector of a per-object state assignment (one 1 per object block)."""
    if len(assignment) != model.n:
        raise ModelError(f"assignment length {len(assignment)} != n={model.n}")
    x = np.zeros(model.dim)
    for k, lbl in enumerate(assignment):
        x[model.flat_index(k, str(lbl))] = 1.0
    return x


def decode(model: ModelSpec, x: np.ndarray) -> list[str]:
    """Inverse of :func:`encode` for indicator vectors."""
    X = np.asarray(x, dtype=float).reshape(model.n, model.num_states)
    if not np.all((X == 0.0) | (X == 1.0)) or not np.all(X.sum(axis=1) == 1.0):
        raise ModelError("not an indicator vector (one exact 1 per object block required)")
    return [model.states[s] for s in X.argmax(axis=1)]


def check_state_vector(model: ModelSpec, x: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Validate shape, box and per-object normalisation of a continuous state vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.dim,):
        raise ModelError(f"state vector shape {x.shape} != ({model.dim},)")
    if x.min() < -tol or x.max() > 1 + tol:
        raise ModelError("state vector entries outside [0, 1]")
    sums = x.reshape(model.n, model.num_states).sum(axis=1)
    if np.abs(sums - 1.0).max() > tol:
        raise ModelError("per-object entries do not sum to 1")
    return x


# ---------------------------------------------------------------------------
# JSON persistence


def save_model(model: ModelSpec, path) -> None:
    doc = {
        "hetmf_schema": SCHEMA_VERSION,
        "n": model.n,
        "states": list(model.states),
        "rate_bound_hint": model.rate_bound_hint,
        "rules": [
            {
                "rate": r.rate,
                "participants": [
                    {"object": k + 1, "from": a, "to": b} for k, a, b in r.participants
                ],
            }
            for r in model.rules
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _require(doc: dict, key: str, types, ctx: str):
    if key not in doc:
        raise ModelFormatError(f"{ctx}: missing key {key!r}")
    val = doc[key]
    if not isinstance(val, types):
        raise ModelFormatError(f"{ctx}: {key!r} has wrong type {type(val).__name__}")
    return val


def load_model(path) -> ModelSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    version = _require(doc, "hetmf_schema", int, str(path))
    if version != SCHEMA_VERSION:
        raise ModelFormatError(f"{path}: unsupported schema version {version}")
    n = _require(doc, "n", int, str(path))
    if isinstance(n, bool):
        raise ModelFormatError(f"{path}: 'n' has wrong type bool")
    states = _require(doc, "states", list, str(path))
    if not all(isinstance(s, str) for s in states):
        raise ModelFormatError(f"{path}: 'states' must be a list of strings")
    hint = doc.get("rate_bound_hint")
    if hint is not None and not isinstance(hint, (int, float)):
        raise ModelFormatError(f"{path}: 'rate_bound_hint' must be a number or null")
    raw_rules = _require(doc, "rules", list, str(path))
    model = new_model(n, states, None if hint is None else float(hint))
    rules = []
    for i, rr in enumerate(raw_rules):
        ctx = f"{path}: rule {i}"
        if not isinstance(rr, dict):
            raise ModelFormatError(f"{ctx}: must be an object")
        rate = _require(rr, "rate", (int, float), ctx)
        if isinstance(rate, bool):
            raise ModelFormatError(f"{ctx}: 'rate' has wrong type bool")
        raw_parts = _require(rr, "participants", list, ctx)
        parts = []
        for pp in raw_parts:
            if not isinstance(pp, dict):
                raise ModelFormatError(f"{ctx}: participant must be an object")
            obj = _require(pp, "object", int, ctx)
            frm = _require(pp, "from", str, ctx)
            to = _require(pp, "to", str, ctx)
            parts.append((obj - 1, frm, to))
        r = rule(parts, float(rate))
        problems = _check_rule(model, r)
        if problems:
            raise ModelFormatError(f"{ctx}: {'; '.join(problems)}")
        rules.append(r)
    return replace(model, rules=tuple(rules))
