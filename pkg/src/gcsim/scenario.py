"""Scenario files: parsing, template expansion, validation, runtime build.

A scenario is one JSON document with four sections: ``graph``, ``clocks``,
``gcs``, ``sim``.  Unknown keys are rejected everywhere so a typo in a
physics parameter fails loudly instead of silently using a default.  See
SCHEMA.md at the repository root for the full field reference.
"""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from importlib import resources

from .engine import Scenario, seeded_stream
from .errors import ScenarioParseError, ScenarioValidationError
from .gcs import GcsParams
from .metrics import theorem2_levels, theorem3_bound
from .topology import EdgeParams, NetworkGraph, kappa_distance_matrix, kappa_weights, validate_graph
from .twoway import timeout_window

logger = logging.getLogger(__name__)

__all__ = [
    "load_document",
    "expand_document",
    "validate_document",
    "build_scenario",
    "load_scenario",
    "static_report",
    "bundled_names",
]

_TOP_KEYS = {"graph", "clocks", "gcs", "sim"}
_GRAPH_KEYS = {"nodes", "edges", "d_max", "template"}
_EDGE_KEYS = {"u", "v", "fwd_delay", "bwd_delay", "jitter", "eps_d", "eps_m", "length"}
_EDGE_REQUIRED = {"u", "v", "fwd_delay", "bwd_delay"}
_TEMPLATE_KEYS = {"kind", "n", "rows", "cols", "extra_edges", "seed", "edge"}
_CLOCK_KEYS = {"theta", "mu", "default", "overrides", "nodes"}
_GCS_KEYS = {"T", "T_stab", "s_max", "hysteresis", "p_max", "correction_semantics", "enabled"}
_SIM_KEYS = {"horizon_cycles", "horizon_time", "sample_dt", "master_seed", "metrics"}
_GEN_KEYS = {
    "constant": {"rate"},
    "alternating": {"dwell", "start_high", "low", "high"},
    "random_walk": {"dwell", "step", "start_rate", "seed"},
    "scripted": {"segments"},
}
_NODE_COMMON_KEYS = {"generator", "initial_value"}


def bundled_names() -> list[str]:
    """Names of the scenario files shipped inside the package."""
    root = resources.files("gcsim") / "scenarios"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_document(source) -> dict:
    """Parse a scenario JSON document from a path, bundled name, or dict."""
    if isinstance(source, dict):
        return copy.deepcopy(source)
    text = None
    path = str(source)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        bundled = resources.files("gcsim") / "scenarios" / f"{path}.json"
        if bundled.is_file():
            text = bundled.read_text(encoding="utf-8")
        else:
            raise ScenarioParseError(f"scenario not found: {path}")
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario {path}: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        )
    if not isinstance(doc, dict):
        raise ScenarioParseError("scenario document must be a JSON object")
    return doc


def _expand_graph_template(tpl: dict, problems: list[str]) -> tuple[int, list[dict]]:
    kind = tpl.get("kind")
    edge = tpl.get("edge", {})
    edges: list[tuple[int, int]] = []
    n = 0
    if kind == "line":
        n = int(tpl.get("n", 2))
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "ring":
        n = int(tpl.get("n", 3))
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "grid":
        rows, cols = int(tpl.get("rows", 2)), int(tpl.get("cols", 2))
        n = rows * cols
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.append((r * cols + c, r * cols + c + 1))
                if r + 1 < rows:
                    edges.append((r * cols + c, (r + 1) * cols + c))
    elif kind == "star":
        n = int(tpl.get("n", 2))
        edges = [(0, i) for i in range(1, n)]
    elif kind == "random":
        n = int(tpl.get("n", 2))
        rng = seeded_stream(int(tpl.get("seed", 0)), "topology")
        for i in range(1, n):
            edges.append((int(rng.integers(0, i)), i))
        extra = int(tpl.get("extra_edges", 0))
        have = set(edges)
        attempts = 0
        while extra > 0 and attempts < 100 * n:
            a, b = int(rng.integers(0, n)), int(rng.integers(0, n))
            if a != b and (min(a, b), max(a, b)) not in have:
                have.add((min(a, b), max(a, b)))
                edges.append((min(a, b), max(a, b)))
                extra -= 1
            attempts += 1
    else:
        problems.append(f"graph.template.kind: unknown kind {kind!r}")
        return 0, []
    out = []
    for u, v in sorted((min(a, b), max(a, b)) for a, b in edges):
        rec = {"u": u, "v": v}
        rec.update(edge)
        out.append(rec)
    return n, out


def expand_document(doc: dict) -> tuple[dict, list[str]]:
    """Expand graph templates and clock defaults into explicit form."""
    problems: list[str] = []
    doc = copy.deepcopy(doc)
    graph = doc.get("graph")
    if isinstance(graph, dict) and "template" in graph:
        tpl = graph["template"]
        if not isinstance(tpl, dict):
            problems.append("graph.template must be an object")
        else:
            unknown = set(tpl) - _TEMPLATE_KEYS
            if unknown:
                problems.append(f"graph.template: unknown keys {sorted(unknown)}")
            n, edges = _expand_graph_template(tpl, problems)
            graph.pop("template")
            graph["nodes"] = n
            graph["edges"] = edges
    clocks = doc.get("clocks")
    if isinstance(clocks, dict) and "nodes" not in clocks:
        graph = doc.get("graph") or {}
        n = graph.get("nodes")
        default = clocks.pop("default", {"generator": "constant", "rate": 1.0})
        overrides = clocks.pop("overrides", {})
        if isinstance(n, int) and isinstance(default, dict) and isinstance(overrides, dict):
            clocks["nodes"] = [
                {**default, **overrides.get(str(i), {})} for i in range(n)
            ]
        else:
            problems.append("clocks: cannot expand default/overrides without graph.nodes")
    return doc, problems


def _num(section: dict, key: str, problems: list[str], where: str, required=False, default=None):
    if key not in section:
        if required:
            problems.append(f"{where}.{key}: missing")
        return default
    v = section[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        problems.append(f"{where}.{key}: must be a number")
        return default
    return float(v)


def validate_document(doc: dict) -> list[str]:
    """Structural and semantic validation; returns all problems found."""
    problems: list[str] = []
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown top-level sections {sorted(unknown)}")
    for key in _TOP_KEYS:
        if key not in doc or not isinstance(doc[key], dict):
            problems.append(f"section {key!r} missing or not an object")
    if problems:
        return problems

    graph_sec = doc["graph"]
    unknown = set(graph_sec) - _GRAPH_KEYS
    if unknown:
        problems.append(f"graph: unknown keys {sorted(unknown)}")
    n = graph_sec.get("nodes")
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        problems.append("graph.nodes: must be a positive integer")
        return problems
    d_max = _num(graph_sec, "d_max", problems, "graph", required=True)
    edges_raw = graph_sec.get("edges")
    if not isinstance(edges_raw, list) or not edges_raw:
        problems.append("graph.edges: must be a non-empty list")
        return problems
    edges = []
    for i, rec in enumerate(edges_raw):
        where = f"graph.edges[{i}]"
        if not isinstance(rec, dict):
            problems.append(f"{where}: must be an object")
            continue
        unknown = set(rec) - _EDGE_KEYS
        if unknown:
            problems.append(f"{where}: unknown keys {sorted(unknown)}")
        missing = _EDGE_REQUIRED - set(rec)
        if missing:
            problems.append(f"{where}: missing keys {sorted(missing)}")
            continue
        try:
            edges.append(
                (
                    int(rec["u"]),
                    int(rec["v"]),
                    EdgeParams(
                        fwd_delay=float(rec["fwd_delay"]),
                        bwd_delay=float(rec["bwd_delay"]),
                        jitter=float(rec.get("jitter", 0.0)),
                        eps_d=float(rec.get("eps_d", 0.0)),
                        eps_m=float(rec.get("eps_m", 0.0)),
                        length=float(rec.get("length", 1.0)),
                    ),
                )
            )
        except (TypeError, ValueError) as exc:
            problems.append(f"{where}: {exc}")
    if problems:
        return problems
    try:
        g = NetworkGraph.build(n, edges, float(d_max))
    except Exception as exc:
        problems.append(f"graph: {exc}")
        return problems
    problems.extend(validate_graph(g))

    clocks_sec = doc["clocks"]
    unknown = set(clocks_sec) - _CLOCK_KEYS
    if unknown:
        problems.append(f"clocks: unknown keys {sorted(unknown)}")
    theta = _num(clocks_sec, "theta", problems, "clocks", required=True, default=1.0)
    mu = _num(clocks_sec, "mu", problems, "clocks", required=True, default=0.0)
    node_specs = clocks_sec.get("nodes")
    if not isinstance(node_specs, list) or len(node_specs) != n:
        problems.append(f"clocks.nodes: must list exactly {n} per-node entries")
        node_specs = []
    for i, spec in enumerate(node_specs):
        where = f"clocks.nodes[{i}]"
        if not isinstance(spec, dict):
            problems.append(f"{where}: must be an object")
            continue
        gen = spec.get("generator", "constant")
        if gen not in _GEN_KEYS:
            problems.append(f"{where}.generator: unknown generator {gen!r}")
            continue
        allowed = _GEN_KEYS[gen] | _NODE_COMMON_KEYS
        unknown = set(spec) - allowed
        if unknown:
            problems.append(f"{where}: unknown keys {sorted(unknown)} for generator {gen!r}")
        iv = spec.get("initial_value", 0.0)
        if isinstance(iv, bool) or not isinstance(iv, (int, float)) or iv < 0:
            problems.append(f"{where}.initial_value: must be a non-negative number")
        if gen == "constant":
            r = spec.get("rate", 1.0)
            if not isinstance(r, (int, float)) or not (1.0 <= float(r) <= theta + 1e-15):
                problems.append(f"{where}.rate: must lie in [1, theta]")
        elif gen == "alternating":
            if _num(spec, "dwell", problems, where, required=True, default=0.0) <= 0:
                problems.append(f"{where}.dwell: must be positive")
            for key in ("low", "high"):
                if key in spec and not (1.0 <= float(spec[key]) <= theta + 1e-15):
                    problems.append(f"{where}.{key}: must lie in [1, theta]")
        elif gen == "random_walk":
            if _num(spec, "dwell", problems, where, required=True, default=0.0) <= 0:
                problems.append(f"{where}.dwell: must be positive")
        elif gen == "scripted":
            segs = spec.get("segments")
            if not isinstance(segs, list) or not segs:
                problems.append(f"{where}.segments: must be a non-empty list")
            else:
                last = -1.0
                for j, seg in enumerate(segs):
                    ok = isinstance(seg, list) and len(seg) == 2
                    if not ok:
                        problems.append(f"{where}.segments[{j}]: must be [start, rate]")
                        continue
                    t0, r = float(seg[0]), float(seg[1])
                    if j == 0 and t0 != 0.0:
                        problems.append(f"{where}.segments: first segment must start at 0")
                    if t0 <= last and j > 0:
                        problems.append(f"{where}.segments: start times must increase")
                    if not (1.0 <= r <= theta + 1e-15):
                        problems.append(f"{where}.segments[{j}]: rate outside [1, theta]")
                    last = t0

    gcs_sec = doc["gcs"]
    unknown = set(gcs_sec) - _GCS_KEYS
    if unknown:
        problems.append(f"gcs: unknown keys {sorted(unknown)}")
    T = _num(gcs_sec, "T", problems, "gcs", required=True, default=0.0)
    t_stab = _num(gcs_sec, "T_stab", problems, "gcs", required=True, default=0.0)
    p_max = _num(gcs_sec, "p_max", problems, "gcs", default=0.0)
    hysteresis = _num(gcs_sec, "hysteresis", problems, "gcs", default=0.0)
    semantics = gcs_sec.get("correction_semantics", "multiplicative")
    if semantics not in ("multiplicative", "additive"):
        problems.append(f"gcs.correction_semantics: unknown value {semantics!r}")
    if "enabled" in gcs_sec and not isinstance(gcs_sec["enabled"], bool):
        problems.append("gcs.enabled: must be a boolean")
    s_max = gcs_sec.get("s_max")
    if s_max is not None and (not isinstance(s_max, int) or isinstance(s_max, bool) or s_max < 1):
        problems.append("gcs.s_max: must be a positive integer")

    if problems:
        return problems

    kappa = kappa_weights(g, theta)
    for (u, v), k_e in kappa.items():
        if k_e <= 0:
            problems.append(
                f"edge ({u},{v}): kappa weight is zero; needs drift, asymmetry or "
                f"measurement uncertainty"
            )
    if mu <= theta - 1.0:
        problems.append(f"gcs: mu {mu!r} must exceed theta-1 {theta - 1.0!r} (sigma > 1)")
    elif mu <= theta:
        logger.warning("mu=%r does not exceed theta=%r; proceeding (sigma=%r)",
                       mu, theta, mu / (theta - 1.0) if theta > 1 else float("inf"))
    if s_max is None and theta <= 1.0:
        problems.append("gcs.s_max: required when theta == 1 (level count is undefined)")
    eps_m_max = max(p.eps_m for _, _, p in g.edges)
    try:
        window = timeout_window(float(d_max), p_max, eps_m_max, theta)
        if T < window:
            problems.append(
                f"gcs.T: measurement window {T!r} is below the timeout window {window!r}"
            )
    except Exception as exc:
        problems.append(f"gcs: {exc}")
    if t_stab <= 0:
        problems.append("gcs.T_stab: must be positive")

    # boot-up gate: neighbouring clocks must start within the path error budget
    if not problems:
        dist = kappa_distance_matrix(g, kappa)
        init = [float(spec.get("initial_value", 0.0)) for spec in node_specs]
        for v in range(n):
            for w in range(v + 1, n):
                if abs(init[v] - init[w]) > dist[v, w] + 1e-12:
                    problems.append(
                        f"initial synchronisation violated for pair ({v},{w}): "
                        f"|{init[v]!r} - {init[w]!r}| > {dist[v, w]!r}"
                    )

    sim_sec = doc["sim"]
    unknown = set(sim_sec) - _SIM_KEYS
    if unknown:
        problems.append(f"sim: unknown keys {sorted(unknown)}")
    has_cycles = "horizon_cycles" in sim_sec
    has_time = "horizon_time" in sim_sec
    if has_cycles == has_time:
        problems.append("sim: exactly one of horizon_cycles / horizon_time is required")
    if has_cycles:
        hc = sim_sec["horizon_cycles"]
        if not isinstance(hc, int) or isinstance(hc, bool) or hc < 1:
            problems.append("sim.horizon_cycles: must be a positive integer")
    if has_time and _num(sim_sec, "horizon_time", problems, "sim", default=0.0) <= 0:
        problems.append("sim.horizon_time: must be positive")
    if _num(sim_sec, "sample_dt", problems, "sim", required=True, default=0.0) <= 0:
        problems.append("sim.sample_dt: must be positive")
    seed = sim_sec.get("master_seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append("sim.master_seed: must be a non-negative integer")
    if sim_sec.get("metrics", "full") not in ("full", "skew_only"):
        problems.append("sim.metrics: must be 'full' or 'skew_only'")
    return problems


def _default_s_max(theta, mu, g, kappa) -> int:
    sigma = float("inf") if theta <= 1.0 else mu / (theta - 1.0)
    g_bound = theorem3_bound(g, kappa, sigma)
    levels = theorem2_levels(min(kappa.values()), g_bound, sigma)
    return max(1, levels) + 1


def build_scenario(doc: dict, seed_override: int | None = None) -> Scenario:
    """Expand, validate, and assemble the runtime scenario."""
    doc, problems = expand_document(doc)
    problems += validate_document(doc) if not problems else []
    if problems:
        raise ScenarioValidationError(problems)
    if seed_override is not None:
        doc["sim"]["master_seed"] = int(seed_override)
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    gsec, csec, gcssec, simsec = doc["graph"], doc["clocks"], doc["gcs"], doc["sim"]
    edges = [
        (
            rec["u"],
            rec["v"],
            EdgeParams(
                fwd_delay=float(rec["fwd_delay"]),
                bwd_delay=float(rec["bwd_delay"]),
                jitter=float(rec.get("jitter", 0.0)),
                eps_d=float(rec.get("eps_d", 0.0)),
                eps_m=float(rec.get("eps_m", 0.0)),
                length=float(rec.get("length", 1.0)),
            ),
        )
        for rec in gsec["edges"]
    ]
    g = NetworkGraph.build(gsec["nodes"], edges, float(gsec["d_max"]))
    theta = float(csec["theta"])
    mu = float(csec["mu"])
    kappa = kappa_weights(g, theta)
    s_max = gcssec.get("s_max")
    if s_max is None:
        s_max = _default_s_max(theta, mu, g, kappa)
    params = GcsParams(
        theta=theta,
        mu=mu,
        T=float(gcssec["T"]),
        T_stab=float(gcssec["T_stab"]),
        s_max=int(s_max),
        hysteresis=float(gcssec.get("hysteresis", 0.0)),
    )
    bad = params.validate()
    if bad:
        raise ScenarioValidationError(bad)
    return Scenario(
        graph=g,
        params=params,
        clock_specs=csec["nodes"],
        p_max=float(gcssec.get("p_max", 0.0)),
        sample_dt=float(simsec["sample_dt"]),
        master_seed=int(simsec["master_seed"]),
        horizon_cycles=simsec.get("horizon_cycles"),
        horizon_time=simsec.get("horizon_time"),
        correction_semantics=gcssec.get("correction_semantics", "multiplicative"),
        gcs_enabled=bool(gcssec.get("enabled", True)),
        metrics_mode=simsec.get("metrics", "full"),
        scenario_hash=digest,
        kappa=kappa,
    )


def load_scenario(source, seed_override: int | None = None) -> Scenario:
    return build_scenario(load_document(source), seed_override=seed_override)


def static_report(sc: Scenario) -> dict:
    """Formula-level facts about a scenario, no simulation involved."""
    if sc.params.theta <= 1.0:
        raise ScenarioValidationError(
            ["sigma undefined: theta == 1 means mu/(theta-1) has no value; "
             "the static bound report requires theta > 1"]
        )
    dist = sc.dist
    return {
        "sigma": sc.sigma,
        "s_max": sc.params.s_max,
        "timeout_window": sc.timeout,
        "kappa_per_edge": [
            {"u": u, "v": v, "kappa": sc.kappa[(u, v)]} for u, v, _ in sc.graph.edges
        ],
        "kappa_diameter": float(dist.max()),
        "local_bound": sc.local_bound,
        "global_bound": sc.global_bound,
    }
