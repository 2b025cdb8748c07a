"""Batch experiment runner.

A manifest (JSON) fully determines a run: two runs with equal manifests
produce byte-identical CSV tables and summaries (timestamps live only in the
run record). Every numeric table row carries a method tag. Each run writes
into a directory named by the manifest hash: tables as CSV, summary.json,
artifacts (operators, trees, functions) for later verification, and
record.json. `verify` recomputes the cheap certificates from the stored
inputs without redoing any search.

Exit codes: 0 success, 2 validation failure, 3 mathematical infeasibility
(a tolerance could not be met; the witness node is reported), 4 certificate
failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .dyadic import AtomSet, SimpleFunction, Space, dyadic_space, is_sign
from .haar import MultiIndex, build_tree, haar_norm_formula, haar_system, tree_from_text, tree_to_text
from .operators import (
    EllQ,
    FiniteOperator,
    Lq,
    counterexample_operator,
    identity_like,
    identity_operator,
    op_norm,
    rank_one_integration,
    restrict,
    s_coordinate_partition,
)
from .narrowness import ToleranceUnachievable, build_small_tree, epsilon_schedule, hpp_defect, sign_defect
from .uncond import SeriesRep, burkholder_beta, classical_haar_constants, rank1_series
from .signbuilder import bounded_sign
from .factorization import (
    check_lower_bound,
    direct_sum_growth_experiment,
    factorize,
    narrow_sign_pipeline,
    unconditional_target_sign,
)

RECORD_VERSION = 1
KNOWN_RECORD_VERSIONS = (1,)


class ManifestError(Exception):
    pass


class CertificateFailure(Exception):
    pass


@dataclass(frozen=True)
class ExperimentManifest:
    """Everything a run depends on; the hash of the canonical JSON names the
    output directory."""

    name: str
    experiment: str
    seed: int
    depths: dict
    p_values: tuple
    tolerances: dict
    budgets: dict
    params: dict
    paths: dict
    version: int

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentManifest":
        try:
            m = cls(
                name=str(d["name"]),
                experiment=str(d["experiment"]),
                seed=int(d.get("seed", 0)),
                depths=dict(d.get("depths", {})),
                p_values=tuple(d.get("p_values", [])),
                tolerances=dict(d.get("tolerances", {})),
                budgets=dict(d.get("budgets", {})),
                params=dict(d.get("params", {})),
                paths=dict(d.get("paths", {})),
                version=int(d.get("version", 1)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc
        m.validate()
        return m

    @classmethod
    def from_file(cls, path) -> "ExperimentManifest":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(data)

    def validate(self):
        if self.seed < 0:
            raise ManifestError("seed must be nonnegative")
        for key, value in self.depths.items():
            if int(value) < 1:
                raise ManifestError(f"depth {key!r} must be >= 1, got {value}")
        for key, value in self.tolerances.items():
            if not float(value) > 0:
                raise ManifestError(f"tolerance {key!r} must be positive, got {value}")
        for p in self.p_values:
            if float(p) < 1:
                raise ManifestError(f"exponent {p} must be >= 1")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "experiment": self.experiment,
            "seed": self.seed,
            "depths": self.depths,
            "p_values": list(self.p_values),
            "tolerances": self.tolerances,
            "budgets": self.budgets,
            "params": self.params,
            "paths": self.paths,
            "version": self.version,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:12]

    def with_seed(self, seed: int) -> "ExperimentManifest":
        d = self.to_dict()
        d["seed"] = seed
        return ExperimentManifest.from_dict(d)


@dataclass
class Table:
    name: str
    header: list
    rows: list


@dataclass
class RunOutput:
    tables: list[Table] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    certificates: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)  # filename -> text


@dataclass
class RunContext:
    threads: int = 1
    exact_cap: int = 24
    budget_default: int = 2000


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _table_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.header)
    for row in table.rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _table_json(table: Table) -> str:
    rows = [dict(zip(table.header, row)) for row in table.rows]
    return json.dumps(rows, sort_keys=True, indent=1) + "\n"


def function_to_json(f: SimpleFunction) -> str:
    d = {
        "space": {"atoms": f.space.atoms, "measure": f.space.total_measure, "p": f.space.p},
        "values": f.values.tolist(),
    }
    return json.dumps(d, sort_keys=True)


def function_from_json(text: str) -> SimpleFunction:
    d = json.loads(text)
    sp = Space(d["space"]["atoms"], d["space"]["measure"], d["space"]["p"])
    return SimpleFunction(sp, np.array(d["values"], dtype=np.float64))


# ---------------------------------------------------------------------------
# manifest-declared operators and series


def _build_operator(spec: dict, space: Space, rng: np.random.Generator) -> FiniteOperator:
    kind = spec.get("kind")
    if kind == "identity_like":
        return identity_like(space, float(spec.get("q", 1.0)))
    if kind == "identity":
        return identity_operator(space)
    if kind == "integration":
        x = np.asarray(spec["x"], dtype=np.float64)
        return rank_one_integration(space, x, EllQ(x.size, float(spec.get("q", 1.0))))
    if kind == "gaussian":
        rows = int(spec.get("rows", 4))
        q = float(spec.get("q", 2.0))
        M = rng.standard_normal((rows, space.atoms))
        T = FiniteOperator(space, EllQ(rows, q), M)
        scale = float(spec.get("scale", 1.0))
        norm = op_norm(T).upper
        return T * (scale / norm if norm > 0 else 1.0)
    if kind == "counterexample":
        return counterexample_operator(int(spec["depth_s"]), int(spec["depth_t"]),
                                       float(spec.get("p", 1.0)))
    raise ManifestError(f"unknown operator kind {kind!r}")


def _build_series(spec: dict, space: Space, rng: np.random.Generator) -> SeriesRep:
    kind = spec.get("kind")
    if kind == "rank1_slices":
        T = _build_operator(spec["operator"], space, rng)
        return rank1_series(T, seed=int(spec.get("seed", 0)))
    if kind == "aligned_rank1":
        count = int(spec.get("count", 4))
        dim = int(spec.get("dim", 8))
        q = float(spec.get("q", 1.0))
        scale = float(spec.get("scale", 0.003))
        target = EllQ(dim, q)
        ops = []
        for n in range(count):
            x = np.zeros(dim)
            x[n % dim] = rng.standard_normal()
            phi = rng.standard_normal(space.atoms)
            ops.append(FiniteOperator(space, target, scale * np.outer(x, phi)))
        return SeriesRep(tuple(ops))
    if kind == "haar_projections":
        sys = haar_system(build_tree(space.full(), space.depth))
        mu = space.atom_measure
        target = Lq(np.full(space.atoms, mu), space.p)
        cols = [np.ones(space.atoms)] + [sys.function(a).values for a in sys.indices()]
        ops = []
        for b in cols:
            dual = mu * b / float(np.sum(b * b) * mu)
            ops.append(FiniteOperator(space, target, np.outer(b, dual)))
        return SeriesRep(tuple(ops))
    raise ManifestError(f"unknown series kind {kind!r}")


# ---------------------------------------------------------------------------
# subcommand runners


def _run_burkholder(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    ps = m.p_values or (1.5, 2.0, 3.0)
    out = RunOutput()
    rows = []
    certs = []
    for p in ps:
        beta = burkholder_beta(float(p))
        rows.append([float(p), beta, "exact"])
        certs.append({"kind": "burkholder", "p": float(p), "claimed": beta})
    out.tables.append(Table("burkholder", ["p", "beta", "method"], rows))
    out.summary = {"count": len(rows)}
    out.certificates = certs
    return out


def _run_defect(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 3))
    p = float(m.p_values[0]) if m.p_values else 1.0
    space = dyadic_space(depth, 1.0, p)
    rng = np.random.default_rng(m.seed)
    T = _build_operator(m.params.get("operator", {"kind": "identity_like"}), space, rng)
    mode = m.params.get("mode", "auto")
    res = sign_defect(T, space.full(), mode, budget=int(m.budgets.get("search", ctx.budget_default)),
                      seed=m.seed, exact_cap=ctx.exact_cap, threads=ctx.threads)
    out = RunOutput()
    out.tables.append(Table("defect", ["atoms", "value", "method", "optimality", "evaluations"],
                            [[space.atoms, res.value.upper, res.value.method,
                              res.optimality, res.evaluations]]))
    out.artifacts["operator.txt"] = T.to_text()
    out.artifacts["sign.json"] = function_to_json(res.sign)
    out.summary = {"value": res.value.upper, "optimality": res.optimality}
    out.certificates = [
        {"kind": "sign_valid", "function": "sign.json", "base": [int(i) for i in space.full().indices]},
        {"kind": "image_norm", "operator": "operator.txt", "function": "sign.json",
         "claimed": res.value.upper, "tol": 1e-9},
    ]
    return out


def _run_tree(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 3))
    levels = int(m.depths.get("levels", 2))
    p = float(m.p_values[0]) if m.p_values else 1.0
    eps = float(m.tolerances.get("eps", 0.5))
    space = dyadic_space(depth, 1.0, p)
    rng = np.random.default_rng(m.seed)
    T = _build_operator(m.params.get("operator", {"kind": "integration", "x": [1.0], "q": 1.0}),
                        space, rng)
    schedule = epsilon_schedule(eps, levels, p, space.total_measure)
    result = build_small_tree(T, space.full(), schedule,
                              budget=int(m.budgets.get("search", ctx.budget_default)),
                              seed=m.seed, exact_cap=ctx.exact_cap)
    out = RunOutput()
    rows = []
    certs = [{"kind": "tree_valid", "tree": "tree.txt"},
             {"kind": "haar_norm", "tree": "tree.txt", "p": p}]
    for alpha, val in result.achieved.items():
        budget = schedule.value(alpha)
        rows.append([alpha.token(), result.system.tree.nodes[alpha].count, val, budget, "exact"])
        certs.append({"kind": "haar_image", "operator": "operator.txt", "tree": "tree.txt",
                      "node": alpha.token(), "claimed": val, "budget": budget, "tol": 1e-9})
    out.tables.append(Table("nodes", ["node", "atoms", "achieved", "budget", "method"], rows))
    out.artifacts["operator.txt"] = T.to_text()
    out.artifacts["tree.txt"] = tree_to_text(result.system.tree)
    out.summary = {"levels": levels, "eps": eps, "budget_used": schedule.budget_used()}
    out.certificates = certs
    return out


def _run_hpp(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 4))
    p = float(m.p_values[0]) if m.p_values else 1.0
    rng = np.random.default_rng(m.seed)
    spec = m.params.get("operator", {"kind": "counterexample", "depth_s": 2, "depth_t": 2})
    if spec.get("kind") == "counterexample":
        T = _build_operator(spec, None, rng)
        space = T.source
    else:
        space = dyadic_space(depth, 1.0, p)
        T = _build_operator(spec, space, rng)
    A = space.full()
    budget = int(m.budgets.get("search", ctx.budget_default))
    if m.params.get("use_s_partition"):
        parts = [s_coordinate_partition(space, int(spec["depth_s"]))]
        res = hpp_defect(T, A, partitions=parts, budget=budget, seed=m.seed, exact_cap=ctx.exact_cap)
    else:
        res = hpp_defect(T, A, m.params.get("sampler", "enumerate"),
                         block_count=int(m.params.get("block_count", 4)),
                         count=m.params.get("count"), seed=m.seed,
                         budget=budget, exact_cap=ctx.exact_cap)
    out = RunOutput()
    out.tables.append(Table("hpp", ["examined", "lower", "upper", "method"],
                            [[res.examined, res.estimate.lower, res.estimate.upper,
                              res.estimate.method]]))
    R = restrict(T, res.best_partition)
    out.artifacts["restricted.txt"] = R.to_text()
    out.artifacts["coarse_sign.json"] = function_to_json(res.best_search.sign)
    out.summary = {"lower": res.estimate.lower, "examined": res.examined}
    out.certificates = [
        {"kind": "sign_valid", "function": "coarse_sign.json",
         "base": list(range(res.best_partition.block_count))},
        {"kind": "image_norm", "operator": "restricted.txt", "function": "coarse_sign.json",
         "claimed": res.best_search.value.upper, "tol": 1e-9},
    ]
    return out


def _run_uncond(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    max_depth = int(m.depths.get("max", 4))
    budget = int(m.budgets.get("search", 4000))
    out = RunOutput()
    rows = []
    certs = []
    for p in (m.p_values or (2.0,)):
        p = float(p)
        chain = classical_haar_constants(p, max_depth, budget=budget, seed=m.seed)
        beta = burkholder_beta(p)
        for link in chain:
            method = link.raw.estimate.method
            rows.append([p, link.depth, link.lower, method])
        for a, b in zip(chain, chain[1:]):
            certs.append({"kind": "value", "name": f"monotone p={p} depth {b.depth}",
                          "lhs": a.lower, "rhs": b.lower, "relation": "le", "tol": 0.0})
        if math.isfinite(beta):
            certs.append({"kind": "value", "name": f"beta bound p={p}",
                          "lhs": chain[-1].lower, "rhs": beta, "relation": "le", "tol": 1e-9})
    out.tables.append(Table("constants", ["p", "depth", "lower", "method"], rows))
    out.summary = {"max_depth": max_depth}
    out.certificates = certs
    return out


def _run_factorize(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 5))
    levels = int(m.depths.get("levels", 2))
    eps = float(m.tolerances.get("eps", 0.1))
    p = float(m.p_values[0]) if m.p_values else 1.0
    space = dyadic_space(depth, 1.0, p)
    rng = np.random.default_rng(m.seed)
    series = _build_series(m.params.get("series", {"kind": "aligned_rank1", "count": 4}), space, rng)
    res = factorize(series, space.full(), eps, levels,
                    seed=m.seed, budget=int(m.budgets.get("search", ctx.budget_default)),
                    exact_cap=ctx.exact_cap)
    checks = res.recheck_postconditions()
    vspan = res.v_span_norm()
    out = RunOutput()
    rows = []
    for alpha in res.order():
        tol = res.certificates.node_tolerances[alpha]
        lo, hi = res.block_ranges[alpha]
        rows.append([alpha.token(), tol.head_achieved, tol.tail_achieved, tol.required,
                     lo, hi, "exact"])
    out.tables.append(Table("nodes", ["node", "head", "tail", "budget", "cut_lo", "cut_hi", "method"], rows))
    out.artifacts["lift.txt"] = res.lift.to_text()
    out.artifacts["tree.txt"] = tree_to_text(res.system.tree)
    out.artifacts["u_images.json"] = json.dumps(res.u_images.tolist())
    out.artifacts["v_images.json"] = json.dumps(res.v_images.tolist())
    out.summary = {
        "rechecks": checks,
        "v_norm_upper": res.certificates.v_norm_upper,
        "v_span": {"lower": vspan.lower, "upper": vspan.upper, "method": vspan.method},
        "eps": eps,
    }
    out.certificates = [
        {"kind": "factorization", "lift": "lift.txt", "tree": "tree.txt",
         "u_images": "u_images.json", "v_images": "v_images.json",
         "eps": eps, "levels": levels},
        {"kind": "value", "name": "v span within eps", "lhs": vspan.upper, "rhs": eps,
         "relation": "le", "tol": 1e-12},
    ]
    if not all(checks.values()):
        raise CertificateFailure(f"factorization rechecks failed: {checks}")
    return out


def _run_lb_check(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 5))
    eps = float(m.tolerances.get("eps", 0.25))
    c = float(m.params.get("c", 1.0))
    budget = int(m.budgets.get("search", 4000))
    out = RunOutput()
    rows = []
    certs = []
    for p in (m.p_values or (1.5, 4.0)):
        p = float(p)
        space = dyadic_space(depth, 1.0, p)
        rng = np.random.default_rng(m.seed)
        series = _build_series({"kind": "haar_projections"}, space, rng)
        system = haar_system(build_tree(space.full(), depth))
        report = check_lower_bound((series, system), c, eps=eps, seed=m.seed, budget=budget)
        rows.append([p, report.constant_lower, report.bound, report.m_upper,
                     "search", report.ok])
        certs.append({"kind": "value", "name": f"chain p={p}", "lhs": report.constant_lower,
                      "rhs": report.bound, "relation": "le", "tol": 1e-9})
        if not report.c_ok:
            raise CertificateFailure(f"lower-bound claim c={c} rejected at p={p}")
        if not report.ok:
            raise CertificateFailure(f"consistency chain violated at p={p}")
    out.tables.append(Table("chain", ["p", "constant_lower", "bound", "M_upper", "method", "ok"], rows))
    out.summary = {"c": c, "eps": eps}
    out.certificates = certs
    return out


def _run_thm33(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 3))
    budget = int(m.budgets.get("search", 4000))
    report = direct_sum_growth_experiment([float(p) for p in (m.p_values or (4.0, 3.0, 2.0))],
                                          depth, m.params.get("n_slices"),
                                          budget=budget, seed=m.seed)
    out = RunOutput()
    rows = []
    certs = []
    for r in report.rows:
        rows.append([r.p, r.m_lower, r.m_upper, r.m_method, r.haar_lower, r.beta, r.ok])
        certs.append({"kind": "value", "name": f"M dominates constant p={r.p}",
                      "lhs": r.haar_lower, "rhs": r.m_lower, "relation": "le", "tol": 1e-9})
    out.tables.append(Table("growth", ["p", "M_lower", "M_upper", "method", "haar_lower", "beta", "ok"], rows))
    out.summary = {"depth": report.depth, "n_slices": report.n_slices}
    out.certificates = certs
    if not all(r.ok for r in report.rows):
        raise CertificateFailure("growth experiment row failed its domination check")
    return out


def _pipeline_output(m: ExperimentManifest, res, T_sum: FiniteOperator, space: Space) -> RunOutput:
    out = RunOutput()
    out.tables.append(Table(
        "pipeline",
        ["eps", "measured", "slack", "raw_measured", "m", "residual_measure", "method", "ok"],
        [[res.eps, res.measured, res.slack, res.raw_measured, res.m,
          res.residual_measure, "exact", res.ok]],
    ))
    out.artifacts["sign.json"] = function_to_json(res.sign)
    out.artifacts["operator.txt"] = T_sum.to_text()
    out.summary = {
        "measured": res.measured,
        "slack": res.slack,
        "eps": res.eps,
        "u_span_upper": res.u_span_norm.upper,
        "ok": res.ok,
    }
    out.certificates = [
        {"kind": "sign_valid", "function": "sign.json",
         "base": [int(i) for i in space.full().indices]},
        {"kind": "image_norm", "operator": "operator.txt", "function": "sign.json",
         "claimed": res.measured, "tol": 1e-9},
        {"kind": "value", "name": "measured within eps plus slack", "lhs": res.measured,
         "rhs": res.eps + res.slack, "relation": "le", "tol": 1e-9},
    ]
    if not res.ok:
        raise CertificateFailure("pipeline produced a sign violating its certificate")
    return out


def _run_thm43(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 3))
    eps = float(m.tolerances.get("eps", 0.2))
    space = dyadic_space(depth, 1.0, 1.0)
    rng = np.random.default_rng(m.seed)
    series = _build_series(m.params["series"], space, rng)
    res = narrow_sign_pipeline(series, space.full(), eps,
                               m.depths.get("levels"), seed=m.seed,
                               budget=int(m.budgets.get("search", ctx.budget_default)),
                               exact_cap=ctx.exact_cap)
    return _pipeline_output(m, res, series.sum_operator(), space)


def _run_cor44(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 3))
    eps = float(m.tolerances.get("eps", 0.2))
    space = dyadic_space(depth, 1.0, 1.0)
    rng = np.random.default_rng(m.seed)
    T = _build_operator(m.params["operator"], space, rng)
    res = unconditional_target_sign(T, space.full(), eps, seed=m.seed,
                                    budget=int(m.budgets.get("search", ctx.budget_default)),
                                    max_level=m.depths.get("levels"),
                                    exact_cap=ctx.exact_cap)
    return _pipeline_output(m, res, T, space)


def _run_counterexample(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth_s = int(m.depths.get("s", 3))
    depth_t = int(m.depths.get("t", 3))
    p = float(m.p_values[0]) if m.p_values else 1.0
    T = counterexample_operator(depth_s, depth_t, p)
    space = T.source
    A = space.full()
    budget = int(m.budgets.get("search", ctx.budget_default))
    full = sign_defect(T, A, "auto", budget=budget, seed=m.seed, exact_cap=ctx.exact_cap)
    parts = [s_coordinate_partition(space, depth_s)]
    restricted = hpp_defect(T, A, partitions=parts, budget=budget, seed=m.seed,
                            exact_cap=ctx.exact_cap)
    norm_T = op_norm(T)
    out = RunOutput()
    out.tables.append(Table("counterexample", ["quantity", "value", "method"], [
        ["full_sigma_defect", full.value.upper, full.value.method],
        ["s_partition_defect", restricted.estimate.lower, "exact"],
        ["operator_norm", norm_T.upper, norm_T.method],
    ]))
    R = restrict(T, parts[0])
    out.artifacts["operator.txt"] = T.to_text()
    out.artifacts["full_sign.json"] = function_to_json(full.sign)
    out.artifacts["restricted.txt"] = R.to_text()
    out.artifacts["coarse_sign.json"] = function_to_json(restricted.best_search.sign)
    out.summary = {
        "full_sigma_defect": full.value.upper,
        "s_partition_defect": restricted.estimate.lower,
        "measure": space.total_measure,
    }
    out.certificates = [
        {"kind": "sign_valid", "function": "full_sign.json",
         "base": [int(i) for i in A.indices]},
        {"kind": "image_norm", "operator": "operator.txt", "function": "full_sign.json",
         "claimed": full.value.upper, "tol": 1e-9},
        {"kind": "image_norm", "operator": "restricted.txt", "function": "coarse_sign.json",
         "claimed": restricted.estimate.lower, "tol": 1e-9},
        {"kind": "value", "name": "restricted defect equals total measure",
         "lhs": restricted.estimate.lower, "rhs": space.total_measure,
         "relation": "eq", "tol": 1e-12},
    ]
    return out


def _run_signbuild(m: ExperimentManifest, ctx: RunContext) -> RunOutput:
    depth = int(m.depths.get("space", 10))
    m_values = [int(v) for v in m.params.get("m_values", (2, 4, 8))]
    space = dyadic_space(depth, 1.0, 1.0)
    sys = haar_system(build_tree(space.full(), depth))
    out = RunOutput()
    rows = []
    certs = []
    for mm in m_values:
        res = bounded_sign(sys, 1.0 / mm)
        for st in res.level_stats:
            rows.append([mm, st.level, st.increment_l1, st.residual_measure,
                         st.active_atoms, "exact"])
            certs.append({"kind": "value", "name": f"residual bound m={mm} level {st.level}",
                          "lhs": st.residual_measure, "rhs": mm * st.increment_l1,
                          "relation": "le", "tol": 0.0})
        out.artifacts[f"function_m{mm}.json"] = function_to_json(res.function)
        certs.append({"kind": "integral_zero", "function": f"function_m{mm}.json"})
    out.tables.append(Table("levels", ["m", "level", "increment_l1", "residual_measure",
                                       "active_atoms", "method"], rows))
    out.summary = {"depth": depth, "m_values": m_values}
    out.certificates = certs
    return out


RUNNERS = {
    "burkholder": _run_burkholder,
    "defect": _run_defect,
    "tree": _run_tree,
    "hpp": _run_hpp,
    "uncond": _run_uncond,
    "factorize": _run_factorize,
    "lb-check": _run_lb_check,
    "thm33": _run_thm33,
    "thm43": _run_thm43,
    "cor44": _run_cor44,
    "counterexample": _run_counterexample,
    "signbuild": _run_signbuild,
}


def default_manifest(experiment: str) -> ExperimentManifest:
    from importlib.resources import files

    name = experiment.replace("-", "_")
    path = files("narrowops.manifests").joinpath(f"{name}.json")
    try:
        return ExperimentManifest.from_dict(json.loads(path.read_text()))
    except FileNotFoundError:
        raise ManifestError(f"no bundled manifest for {experiment!r}; pass --manifest") from None


def run(experiment: str, manifest: ExperimentManifest, out_dir, ctx: RunContext | None = None,
        table_format: str = "csv") -> Path:
    """Execute one experiment and persist its record; returns the run directory."""
    ctx = ctx or RunContext()
    if experiment not in RUNNERS:
        raise ManifestError(f"unknown experiment {experiment!r}")
    if manifest.experiment != experiment:
        raise ManifestError(
            f"manifest is for {manifest.experiment!r}, not {experiment!r}")
    started = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())
    output = RUNNERS[experiment](manifest, ctx)
    finished = time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())

    run_dir = Path(out_dir) / f"{manifest.name}-{manifest.digest()}"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "manifest.json").write_text(manifest.canonical_json() + "\n")
    tables = {}
    for table in output.tables:
        if table_format == "json":
            fname = f"{table.name}.json"
            (run_dir / fname).write_text(_table_json(table))
        else:
            fname = f"{table.name}.csv"
            (run_dir / fname).write_text(_table_csv(table))
        tables[table.name] = fname
    artifacts = {}
    if output.artifacts:
        adir = run_dir / "artifacts"
        adir.mkdir(exist_ok=True)
        for fname, text in output.artifacts.items():
            (adir / fname).write_text(text)
            artifacts[fname] = f"artifacts/{fname}"
    (run_dir / "summary.json").write_text(json.dumps(output.summary, sort_keys=True, indent=1, default=_json_default) + "\n")
    record = {
        "record_version": RECORD_VERSION,
        "manifest": manifest.to_dict(),
        "started": started,
        "finished": finished,
        "backend": kernels.get_backend(),
        "tables": tables,
        "artifacts": artifacts,
        "summary": output.summary,
        "certificates": output.certificates,
    }
    (run_dir / "record.json").write_text(json.dumps(record, sort_keys=True, indent=1, default=_json_default) + "\n")
    with open(Path(out_dir) / "runs.log", "a") as log:
        log.write(f"{started} {manifest.experiment} {manifest.name}-{manifest.digest()}\n")
    return run_dir


# ---------------------------------------------------------------------------
# verification


def _load_artifact(run_dir: Path, record: dict, name: str) -> str:
    rel = record["artifacts"].get(name, f"artifacts/{name}")
    return (run_dir / rel).read_text()


def _verify_certificate(run_dir: Path, record: dict, cert: dict) -> tuple[bool, str]:
    kind = cert.get("kind")
    if kind == "burkholder":
        ok = burkholder_beta(cert["p"]) == cert["claimed"]
        return ok, f"burkholder p={cert['p']}"
    if kind == "value":
        lhs, rhs, tol = cert["lhs"], cert["rhs"], cert.get("tol", 0.0)
        ok = lhs <= rhs + tol if cert.get("relation", "le") == "le" else abs(lhs - rhs) <= tol
        return ok, cert.get("name", "value relation")
    if kind == "sign_valid":
        f = function_from_json(_load_artifact(run_dir, record, cert["function"]))
        A = AtomSet(f.space, np.array(cert["base"], dtype=np.int64))
        ok = is_sign(f, A) and f.integral() == 0.0
        return ok, f"sign_valid {cert['function']}"
    if kind == "integral_zero":
        f = function_from_json(_load_artifact(run_dir, record, cert["function"]))
        return f.integral() == 0.0, f"integral_zero {cert['function']}"
    if kind == "image_norm":
        T = FiniteOperator.from_text(_load_artifact(run_dir, record, cert["operator"]))
        f = function_from_json(_load_artifact(run_dir, record, cert["function"]))
        val = float(T.target.norm(T.matrix @ f.values))
        ok = abs(val - cert["claimed"]) <= cert.get("tol", 1e-9) * max(1.0, abs(cert["claimed"]))
        return ok, f"image_norm {cert['function']}"
    if kind == "tree_valid":
        tree_from_text(_load_artifact(run_dir, record, cert["tree"]))
        return True, f"tree_valid {cert['tree']}"
    if kind == "haar_norm":
        tree = tree_from_text(_load_artifact(run_dir, record, cert["tree"]))
        sys = haar_system(tree)
        p = cert["p"]
        for alpha in sys.indices():
            expect = haar_norm_formula(p, tree.base.measure, alpha.level)
            got = sys.function(alpha).norm(p)
            if abs(got - expect) > 1e-12 * expect:
                return False, f"haar_norm {alpha.token()}"
        return True, "haar_norm"
    if kind == "haar_image":
        T = FiniteOperator.from_text(_load_artifact(run_dir, record, cert["operator"]))
        tree = tree_from_text(_load_artifact(run_dir, record, cert["tree"]))
        sys = haar_system(tree)
        h = sys.function(MultiIndex.from_token(cert["node"]))
        val = float(T.target.norm(T.matrix @ h.values))
        ok = abs(val - cert["claimed"]) <= cert.get("tol", 1e-9)
        ok = ok and val <= cert["budget"] + 1e-12
        return ok, f"haar_image {cert['node']}"
    if kind == "factorization":
        lift = FiniteOperator.from_text(_load_artifact(run_dir, record, cert["lift"]))
        tree = tree_from_text(_load_artifact(run_dir, record, cert["tree"]))
        sys = haar_system(tree)
        U = np.array(json.loads(_load_artifact(run_dir, record, cert["u_images"])))
        V = np.array(json.loads(_load_artifact(run_dir, record, cert["v_images"])))
        order = sys.indices()
        for k, alpha in enumerate(order):
            img = lift.matrix @ np.ascontiguousarray(sys.function(alpha).values)
            if not np.array_equal(U[:, k] + V[:, k], img):
                return False, f"factorization sum at {alpha.token()}"
        schedule = epsilon_schedule(cert["eps"], cert["levels"], lift.source.p, tree.base.measure)
        for k, alpha in enumerate(order):
            if float(lift.target.norm(V[:, k])) > schedule.value(alpha) + 1e-9:
                return False, f"factorization v bound at {alpha.token()}"
        return True, "factorization"
    return False, f"unknown certificate kind {kind!r}"


def verify_record(run_dir) -> tuple[bool, list[str]]:
    """Recompute all cheap certificates from the stored inputs. No searches."""
    run_dir = Path(run_dir)
    record_path = run_dir / "record.json"
    if not record_path.exists():
        raise ManifestError(f"no record.json under {run_dir}")
    try:
        record = json.loads(record_path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"corrupted record: {exc}") from exc
    if record.get("record_version") not in KNOWN_RECORD_VERSIONS:
        raise ManifestError(f"unknown record version {record.get('record_version')!r}")
    failures = []
    for cert in record.get("certificates", []):
        try:
            ok, name = _verify_certificate(run_dir, record, cert)
        except Exception as exc:  # treat unreadable artifacts as failures
            ok, name = False, f"{cert.get('kind')}: {exc}"
        if not ok:
            failures.append(name)
    return not failures, failures


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="narrowops",
        description="experiment runner for sign optimization, Haar-like trees and blocking factorizations",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--manifest", help="manifest JSON path (bundled default otherwise)")
        sp.add_argument("--seed", type=int, default=None, help="override the manifest seed")
        sp.add_argument("--out", default="runs", help="parent directory for run outputs")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--exact-cap", type=int, default=24, dest="exact_cap")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
    vp = sub.add_parser("verify", help="recheck the certificates of a stored run")
    vp.add_argument("run_dir")

    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            ok, failures = verify_record(args.run_dir)
            if ok:
                print("verify: pass")
                return 0
            for name in failures:
                print(f"verify: FAIL {name}")
            return 4
        manifest = (ExperimentManifest.from_file(args.manifest) if args.manifest
                    else default_manifest(args.command))
        if args.seed is not None:
            manifest = manifest.with_seed(args.seed)
        ctx = RunContext(threads=args.threads, exact_cap=args.exact_cap)
        run_dir = run(args.command, manifest, args.out, ctx, table_format=args.format)
        print(f"run written to {run_dir}")
        return 0
    except ManifestError as exc:
        print(json.dumps({"error": "validation", "detail": str(exc)}), file=sys.stderr)
        return 2
    except ToleranceUnachievable as exc:
        print(json.dumps({"error": "infeasible", "node": exc.node.token(),
                          "achieved": exc.achieved, "required": exc.required}), file=sys.stderr)
        return 3
    except CertificateFailure as exc:
        print(json.dumps({"error": "certificate", "detail": str(exc)}), file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
