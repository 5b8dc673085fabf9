"""Built-in measurement chains, their exact expected values, and scenario files.

Built-ins (system ``S`` is a qubit prepared in ``|+>``):

``wigner_friend``   F measures S in the computational basis, W measures F.
``deutsch``         F measures S, D measures S+F in the ``Psi[+/-]`` basis.
``deutsch_mere_f``  as ``deutsch`` with F folded into the system.
``wdc``             F measures S, W measures F, D measures S+F.
``wdc_mere_f``      as ``wdc`` with F folded into the system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import linalg as la
from .errors import InvalidInputError
from .measurement import Chain, MeasurementFamily, check_completeness, check_domain_condition, check_pvm, compose_chain, evolve
from .probability import FiniteProbabilitySpace, marginalize, world_distribution
from .retrodiction import (
    ConfirmingReport,
    ConfirmedStatesReport,
    RetrodictedStates,
    RouteComparison,
    compare_routes,
    confirming_report,
    demonstrate_naive_ru_failure,
    pinned_annihilation,
    ru_recursive,
    verify_confirmed_states,
)
from .spaces import ChainLayout, apparatus, system
from .typicality import LLNReport, check_lln, check_support, sample_worlds

SCHEMA_VERSION = 1
NAMES = ("wigner_friend", "deutsch", "deutsch_mere_f", "wdc", "wdc_mere_f")

R2 = 1 / math.sqrt(2)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    layout: ChainLayout
    initial_state: np.ndarray
    families: tuple[MeasurementFamily, ...]
    mere_system_prefix: int = 0
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        object.__setattr__(self, "initial_state", la.as_state(self.initial_state, name="initial state"))
        if not 0 <= self.mere_system_prefix < len(self.families):
            raise InvalidInputError(
                f"mere_system_prefix must be in 0..{len(self.families) - 1}, got {self.mere_system_prefix}"
            )
        if abs(la.norm(self.initial_state) - 1.0) > la.ATOL:
            raise InvalidInputError("initial state must have unit norm")
        if self.initial_state.shape[0] != self.layout.dims[0]:
            raise InvalidInputError(
                f"initial state has dimension {self.initial_state.shape[0]}, system has {self.layout.dims[0]}"
            )

    @property
    def chain(self) -> Chain:
        """The chain with every apparatus counted as a measuring device."""
        return Chain(self.layout, self.families)

    def effective(self) -> tuple[Chain, np.ndarray]:
        """Chain and initial state actually analysed.

        With ``mere_system_prefix = p`` the first ``p`` measurements are run
        as plain evolution and factors ``0..p`` become one system factor.
        """
        p = self.mere_system_prefix
        if p == 0:
            return self.chain, self.initial_state
        psi = evolve(self.chain, self.initial_state, p)
        fams = tuple(MeasurementFamily(f.slot - p, f.operators, check=False) for f in self.families[p:])
        return Chain(self.layout.merge_prefix(p), fams), psi


# operators ------------------------------------------------------------------

S = system("S", 2)
F = apparatus("F", ["0", "1"])
W = apparatus("W", ["0", "1", "2"])
D = apparatus("D", ["+", "-"])

PLUS = la.as_state([R2, R2])


def psi_sf(sign: str) -> np.ndarray:
    """``(|0>Phi^F[0] +/- |1>Phi^F[1]) / sqrt 2`` on S (x) F."""
    s = 1.0 if sign == "+" else -1.0
    return la.as_state(R2 * (la.tensor_state(la.basis(2, 0), F.final_state("0"))
                             + s * la.tensor_state(la.basis(2, 1), F.final_state("1"))))


def friend_family() -> MeasurementFamily:
    return MeasurementFamily(1, {k: la.projector_onto(la.basis(2, int(k))) for k in F.outcomes})


def wigner_family(slot: int = 2) -> MeasurementFamily:
    m0 = la.tensor_op(la.identity(2), la.projector_onto(F.final_state("0")))
    m1 = la.tensor_op(la.identity(2), la.projector_onto(F.final_state("1")))
    return MeasurementFamily(slot, {"0": m0, "1": m1, "2": la.projector_complement([m0, m1])})


def deutsch_operators() -> dict[str, np.ndarray]:
    plus = la.projector_onto(psi_sf("+"))
    return {"+": plus, "-": la.projector_complement([plus])}


def deutsch_family(slot: int, trailing_dim: int = 1) -> MeasurementFamily:
    ops = {m: la.tensor_op(op, la.identity(trailing_dim)) for m, op in deutsch_operators().items()}
    return MeasurementFamily(slot, ops)


def build_scenario(name: str) -> ScenarioSpec:
    if name == "wigner_friend":
        return ScenarioSpec(name, ChainLayout((S, F, W)), PLUS, (friend_family(), wigner_family()),
                            description="F measures S; W measures F")
    if name in ("deutsch", "deutsch_mere_f"):
        p = 1 if name == "deutsch_mere_f" else 0
        return ScenarioSpec(name, ChainLayout((S, F, D)), PLUS, (friend_family(), deutsch_family(2)), p,
                            description="F measures S; D measures S+F in the Psi[+/-] basis"
                            + ("; F treated as part of the system" if p else ""))
    if name in ("wdc", "wdc_mere_f"):
        p = 1 if name == "wdc_mere_f" else 0
        return ScenarioSpec(name, ChainLayout((S, F, W, D)), PLUS,
                            (friend_family(), wigner_family(), deutsch_family(3, W.dim)), p,
                            description="F measures S; W measures F; D measures S+F"
                            + ("; F treated as part of the system" if p else ""))
    raise InvalidInputError(f"unknown scenario {name!r}; choose from {', '.join(NAMES)}")


# oracles --------------------------------------------------------------------

def f_sign(k: str, l: str, m: str) -> int:
    """Sign of the ``(k, l, m)`` branch of ``wdc``."""
    return -1 if (k != l and m == "-") else 1


def g_sign(l: str, m: str) -> int:
    """Sign of the ``(l, m)`` branch of ``wdc_mere_f``."""
    return -1 if (l == "1" and m == "-") else 1


def _ket(dims, idx, amp=1.0) -> np.ndarray:
    """Basis vector at a multi-index, located by explicit row-major arithmetic."""
    flat = 0
    for d, i in zip(dims, idx):
        flat = flat * d + i
    v = np.zeros(int(np.prod(dims)), dtype=np.complex128)
    v[flat] = amp
    return v


@dataclass(frozen=True)
class ExpectedReport:
    table: dict
    branches: dict
    retrodicted: dict
    system_point: int
    apparatus_points: dict
    sign: Callable | None = field(default=None, compare=False)


def expected_report(name: str) -> ExpectedReport:
    """Exact values worked out by hand for each built-in chain."""
    pm = {"+": 0, "-": 1}
    if name == "wigner_friend":
        dims = (2, 3, 4)
        table = {(k, l): (0.5 if k == l else 0.0) for k in "01" for l in "012"}
        branches = {(k, k): _ket(dims, (int(k), int(k), int(k)), R2) for k in "01"}
        retro = {}
        for k in "01":
            retro[((k, k), 1)] = _ket(dims, (int(k), int(k), 3))
            retro[((k, k), 2)] = _ket(dims, (int(k), int(k), int(k)))
        return ExpectedReport(table, branches, retro, 1, {1: 1, 2: 2})
    if name == "deutsch":
        dims = (2, 3, 3)
        table = {(k, l): (0.5 if l == "+" else 0.0) for k in "01" for l in "+-"}
        branches = {(k, "+"): _ket(dims, (int(k), int(k), 0), R2) for k in "01"}
        virtual = R2 * (_ket(dims, (0, 0, 2)) + _ket(dims, (1, 1, 2)))
        retro = {}
        for k in "01":
            retro[((k, "+"), 1)] = virtual
            retro[((k, "+"), 2)] = _ket(dims, (int(k), int(k), 0))
        return ExpectedReport(table, branches, retro, 2, {1: 2, 2: 2})
    if name == "deutsch_mere_f":
        dims = (6, 3)
        table = {("+",): 1.0, ("-",): 0.0}
        final = R2 * (_ket(dims, (0, 0)) + _ket(dims, (4, 0)))
        return ExpectedReport(table, {("+",): final}, {(("+",), 1): final}, 1, {1: 1})
    if name == "wdc":
        dims = (2, 3, 4, 3)
        table, branches, retro = {}, {}, {}
        for k in "01":
            for l in "012":
                for m in "+-":
                    t = (k, l, m)
                    table[t] = 0.0 if l == "2" else 0.125
                    if l == "2":
                        continue
                    amp = f_sign(k, l, m) / (2 * math.sqrt(2))
                    branches[t] = _ket(dims, (int(k), int(k), int(l), pm[m]), amp)
                    b = int(l)
                    retro[(t, 3)] = _ket(dims, (int(k), int(k), b, pm[m]))
                    retro[(t, 2)] = _ket(dims, (b, b, b, 2))
                    retro[(t, 1)] = _ket(dims, (b, b, 3, 2))
        return ExpectedReport(table, branches, retro, 3, {1: 3, 2: 2, 3: 3}, f_sign)
    if name == "wdc_mere_f":
        dims = (6, 4, 3)
        table, branches, retro = {}, {}, {}
        for l in "012":
            for m in "+-":
                t = (l, m)
                table[t] = 0.0 if l == "2" else 0.25
                if l == "2":
                    continue
                s = 1.0 if m == "+" else -1.0
                psi = _ket(dims, (0, int(l), pm[m])) + s * _ket(dims, (4, int(l), pm[m]))
                branches[t] = (g_sign(l, m) / 2) * R2 * psi
                b = int(l)
                retro[(t, 2)] = R2 * psi
                retro[(t, 1)] = _ket(dims, (4 * b, b, 2))
        return ExpectedReport(table, branches, retro, 2, {1: 1, 2: 2}, g_sign)
    raise InvalidInputError(f"unknown scenario {name!r}")


# orchestration --------------------------------------------------------------

@dataclass
class ScenarioReport:
    name: str
    layout: ChainLayout
    table: FiniteProbabilitySpace
    branches: dict
    samples: int
    seed: int
    lln: LLNReport
    support_ok: bool
    constant_columns: dict
    confirming: ConfirmingReport
    retrodicted: dict[tuple, RetrodictedStates]
    routes: dict[tuple, list[RouteComparison]]
    confirmed: ConfirmedStatesReport
    annihilation: object = None
    naive_projector: object = None
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def run_scenario(spec: ScenarioSpec, samples: int = 100_000, seed: int = 0, tol: float = 0.01,
                 atol: float = 1e-10) -> ScenarioReport:
    chain, psi = spec.effective()
    chain.validate()
    branches = compose_chain(chain, psi)
    table = world_distribution(branches, atol)
    world = sample_worlds(table, samples, seed)
    lln = check_lln(table, world, tol)
    support_ok = check_support(table, world)
    constant = {}
    for i in range(chain.n):
        col = set(world.column(i))
        if len(col) == 1:
            constant[chain.layout[i + 1].label] = col.pop()
    confirming = confirming_report(chain)
    retro, routes = {}, {}
    for b in branches:
        if la.is_zero(b.vector, atol):
            continue
        retro[b.outcomes] = ru_recursive(chain, psi, b)
        routes[b.outcomes] = compare_routes(chain, psi, b, atol)
    confirmed = verify_confirmed_states(chain, psi, atol)
    rep = ScenarioReport(spec.name, chain.layout, table, {b.outcomes: b.vector for b in branches},
                         samples, seed, lln, support_ok, constant, confirming, retro, routes, confirmed)
    rep.checks = {
        "lln": lln.passed,
        "support": support_ok,
        "routes_agree": all(c.agrees for cs in routes.values() for c in cs),
        "confirmed_states": confirmed.passed,
    }
    if spec.name == "wdc" and spec.mere_system_prefix == 0 and chain.n == 3:
        rep.annihilation = pinned_annihilation(chain, psi, world, (1, 2))
        rep.checks["annihilation"] = rep.annihilation.coincide and abs(rep.annihilation.rate - 0.5) <= tol
        rep.naive_projector = demonstrate_naive_ru_failure(chain, psi, atol)
        rep.checks["naive_projector"] = (not rep.naive_projector.grouped_pvm) and rep.naive_projector.contradiction and all(
            abs(o - 0.5) <= atol for o in rep.naive_projector.overlaps.values())
    return rep


@dataclass(frozen=True)
class Comparison:
    mismatches: list[str]

    @property
    def passed(self) -> bool:
        return not self.mismatches


def _fmt(t) -> str:
    return "(" + ",".join(t) + ")"


def compare_expected(report: ScenarioReport, oracle: ExpectedReport, tol: float = 1e-10) -> Comparison:
    """Entrywise table check and phase-insensitive state checks."""
    bad = []
    got = report.table.as_dict()
    if set(got) != set(oracle.table):
        bad.append(f"table alphabet {sorted(got)} != {sorted(oracle.table)}")
    for t, p in oracle.table.items():
        q = got.get(t)
        if q is None or abs(q - p) > tol:
            bad.append(f"P{_fmt(t)} = {q!r}, expected {p!r}")
    for t, v in oracle.branches.items():
        if not la.equal_up_to_phase(report.branches[t], v, tol):
            bad.append(f"branch {_fmt(t)} differs")
    for (t, k), v in oracle.retrodicted.items():
        r = report.retrodicted.get(t)
        if r is None or k not in r.states:
            bad.append(f"no retrodicted state for {_fmt(t)} after step {k}")
        elif not la.equal_up_to_phase(r.states[k], v, tol):
            bad.append(f"retrodicted state for {_fmt(t)} after step {k} differs")
    if report.confirming.system_point != oracle.system_point:
        bad.append(f"system confirming point {report.confirming.system_point}, expected {oracle.system_point}")
    for i, p in oracle.apparatus_points.items():
        if report.confirming.apparatus_points.get(i) != p:
            bad.append(f"confirming point of apparatus {i} is {report.confirming.apparatus_points.get(i)}, expected {p}")
    return Comparison(bad)


# scenario files -------------------------------------------------------------

def scenario_to_json(spec: ScenarioSpec) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": spec.name,
        "description": spec.description,
        "layout": spec.layout.to_json(),
        "initial_state": la.to_pairs(spec.initial_state),
        "families": [f.to_json(spec.layout) for f in spec.families],
        "mere_system_prefix": spec.mere_system_prefix,
    }


def _is_flat(x) -> bool:
    return isinstance(x, list) and all(not isinstance(e, (list, dict)) for e in x)


def _dumps(obj, level: int = 0) -> str:
    pad = "  " * (level + 1)
    if isinstance(obj, dict) and obj:
        items = [f"{pad}{json.dumps(k)}: {_dumps(v, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * level + "}"
    if isinstance(obj, list) and obj and not _is_flat(obj):
        if all(_is_flat(e) for e in obj):
            return "[" + ", ".join(json.dumps(e) for e in obj) + "]"
        items = [pad + _dumps(e, level + 1) for e in obj]
        return "[\n" + ",\n".join(items) + "\n" + "  " * level + "]"
    return json.dumps(obj)


def dump_scenario(spec: ScenarioSpec) -> str:
    """Scenario file text with one matrix row per line."""
    return _dumps(scenario_to_json(spec)) + "\n"


_KEYS = {"schema_version", "name", "description", "layout", "initial_state", "families", "mere_system_prefix"}
_REQUIRED = {"schema_version", "name", "layout", "initial_state", "families"}


def scenario_from_json(data, where: str = "scenario") -> ScenarioSpec:
    if not isinstance(data, dict):
        raise InvalidInputError("top level must be an object", where)
    unknown = set(data) - _KEYS
    if unknown:
        raise InvalidInputError(f"unknown keys {sorted(unknown)}", where)
    missing = _REQUIRED - set(data)
    if missing:
        raise InvalidInputError(f"missing keys {sorted(missing)}", where)
    if data["schema_version"] != SCHEMA_VERSION:
        raise InvalidInputError(f"unsupported schema_version {data['schema_version']!r}", f"{where}.schema_version")
    layout = ChainLayout.from_json(data["layout"], f"{where}.layout")
    initial = la.from_pairs(data["initial_state"], name=f"{where}.initial_state")
    if initial.ndim != 1:
        raise InvalidInputError("must be a list of [re, im] pairs", f"{where}.initial_state")
    if not isinstance(data["families"], list):
        raise InvalidInputError("must be a list", f"{where}.families")
    fams = []
    for i, fd in enumerate(data["families"]):
        loc = f"{where}.families[{i}]"
        try:
            fams.append(MeasurementFamily.from_json(fd, layout, loc))
        except InvalidInputError as exc:
            if exc.location:
                raise
            raise InvalidInputError(str(exc), loc) from None
    fams.sort(key=lambda f: f.slot)
    try:
        Chain(layout, fams)
        return ScenarioSpec(str(data["name"]), layout, initial, tuple(fams),
                            int(data.get("mere_system_prefix", 0)), str(data.get("description", "")))
    except InvalidInputError as exc:
        raise InvalidInputError(str(exc), where) from None


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InvalidInputError(f"cannot read file ({exc.strerror})", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"invalid JSON: {exc.msg}", f"{path}:{exc.lineno}:{exc.colno}") from None
    return scenario_from_json(data, str(path))


def resolve(name_or_path: str) -> ScenarioSpec:
    if name_or_path in NAMES:
        return build_scenario(name_or_path)
    if Path(name_or_path).exists() or name_or_path.endswith(".json"):
        return load_scenario(name_or_path)
    raise InvalidInputError(f"unknown scenario {name_or_path!r}; choose from {', '.join(NAMES)} or give a file")


def structural_checks(spec: ScenarioSpec, tol: float = la.ATOL) -> dict:
    """Completeness, PVM and domain-condition flags per family of the effective chain."""
    chain, _ = spec.effective()
    out = []
    for f in chain.families:
        out.append({
            "apparatus": chain.layout[f.slot].label,
            "complete": check_completeness(f, tol),
            "pvm": check_pvm(f, tol),
            "domain": check_domain_condition(chain.layout, f, tol),
        })
    return {"families": out}


def d_marginal(report: ScenarioReport) -> FiniteProbabilitySpace:
    """Distribution of the last apparatus alone."""
    return marginalize(report.table, (report.layout.n - 1,))
