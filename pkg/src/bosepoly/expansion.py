"""Truncated cluster expansion T_m and the log-partition estimate f_beta.

f_beta = log Z_W^(q) + T_m, where log Z_W^(q) is the hopping-free on-site
reference and

    T_m = sum over clusters with total size <= m of
          phi(copy incompatibility graph) * prod_gamma w_gamma^mult / mult!

Contributions are grouped and reported per total cluster size so the decay
of the series is visible directly.  The Kotecky-Preiss diagnostic reports,
per probe site x, the truncated sum

    lhs(x) = sum_{polymers gamma with x in support, |gamma| <= m}
             |w_gamma| * exp(|V_gamma|/2 + |gamma|)      vs   rhs = 1/2.

The lhs is a size-truncated lower bound of the full series: lhs > rhs
refutes the convergence certificate at this order, lhs <= rhs does not
prove it.  The m-truncation error bound N * exp(-m) is valid only when
the certificate holds, and is labeled conditional in every report.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

from .fock import logsumexp, onsite_energy, restricted_log_partition
from .lattice import ModelInstance, interaction_edges
from .polymers import Cluster, copy_incompatibility_graph, enumerate_clusters, enumerate_polymers
from .ursell import MEMO_VERTEX_CAP, UGraph, ursell
from .weights import weight_table

__all__ = [
    "ExpansionConfig",
    "ExpansionReport",
    "KPDiagnosticRow",
    "onsite_log_partition",
    "resolve_cutoff",
    "truncated_log_ratio",
    "kp_diagnostic",
    "error_budget",
    "approximate_log_partition",
]

KP_RHS = 0.5  # delta_1 of a single-site probe polymer, k = 2


@dataclass(frozen=True)
class ExpansionConfig:
    """Knobs of the truncated expansion.

    ``q_policy`` is either "explicit" (use ``q``) or "auto", which sets
    q = max(1, ceil(q_prefactor * (theta + 1) * log(N) / sqrt(beta))).
    The prefactor stands in for a nonconstructive constant and defaults
    to 2.0.  ``polymer_threshold`` drops couplings with |J| <= threshold
    from the polymer alphabet; ``prune_below`` (default off) discards
    weights with |w| below the given magnitude before clustering.
    """

    m: int
    q: int | None = None
    q_policy: str = "explicit"
    theta: float = 1.0
    q_prefactor: float = 2.0
    polymer_threshold: float = 0.0
    workers: int = 1
    prune_below: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("truncation order m must be >= 1")
        if self.q_policy not in ("explicit", "auto"):
            raise ValueError(f"unknown q_policy {self.q_policy!r}")
        if self.q_policy == "explicit":
            if self.q is None or self.q < 1:
                raise ValueError("explicit q_policy requires q >= 1")
        elif self.theta <= 0 or self.q_prefactor <= 0:
            raise ValueError("auto q_policy requires theta > 0 and q_prefactor > 0")
        if self.polymer_threshold < 0:
            raise ValueError("polymer_threshold must be nonnegative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def resolve_cutoff(model: ModelInstance, cfg: ExpansionConfig) -> int:
    if cfg.q_policy == "explicit":
        return int(cfg.q)
    n = model.n_sites
    raw = cfg.q_prefactor * (cfg.theta + 1.0) * math.log(max(n, 2)) / math.sqrt(model.beta)
    return max(1, math.ceil(raw))


def onsite_log_partition(model: ModelInstance, q: int) -> float:
    """log Z_W^(q): all hopping off, product over sites."""
    if q < 0:
        raise ValueError("q must be nonnegative")
    total = 0.0
    for site in range(model.n_sites):
        U = model.onsite.U[site]
        mu = model.onsite.mu[site]
        total += logsumexp([-model.beta * onsite_energy(U, mu, n) for n in range(q + 1)])
    return total


@dataclass(frozen=True)
class OrderContribution:
    order: int
    contribution: float
    cluster_count: int


@dataclass(frozen=True)
class TruncatedRatio:
    value: float
    per_order: tuple[OrderContribution, ...]
    polymer_count: int
    cluster_count: int


def _cluster_term(cluster: Cluster, weights: dict) -> float:
    n, edges = copy_incompatibility_graph(cluster)
    if n > MEMO_VERTEX_CAP:
        raise ValueError(
            f"cluster with {n} polymer copies exceeds the Ursell cap "
            f"({MEMO_VERTEX_CAP}); lower m or prune weights"
        )
    phi = ursell(UGraph(n, edges))
    term = float(phi)
    for polymer, mult in cluster.members:
        term *= weights[polymer].value ** mult / math.factorial(mult)
    return term


def truncated_log_ratio(model: ModelInstance, cfg: ExpansionConfig,
                        q: int | None = None) -> TruncatedRatio:
    """T_m with its per-order breakdown.

    Deterministic for a fixed config: polymers and clusters are traversed
    in canonical order and the reduction order never depends on workers.
    """
    if q is None:
        q = resolve_cutoff(model, cfg)
    edges = interaction_edges(model.couplings, cfg.polymer_threshold)
    polymers = enumerate_polymers(edges, cfg.m)
    weights = weight_table(polymers, model, q, workers=cfg.workers)
    if cfg.prune_below is not None:
        polymers = [p for p in polymers if abs(weights[p].value) >= cfg.prune_below]
    clusters = enumerate_clusters(polymers, cfg.m)

    by_order: dict[int, list[float]] = {s: [] for s in range(1, cfg.m + 1)}
    for cluster in clusters:
        by_order[cluster.total_size].append(_cluster_term(cluster, weights))

    per_order = []
    total = 0.0
    for order in range(1, cfg.m + 1):
        contribution = math.fsum(by_order[order])
        total += contribution
        per_order.append(OrderContribution(order, contribution, len(by_order[order])))
    return TruncatedRatio(total, tuple(per_order), len(polymers), len(clusters))


@dataclass(frozen=True)
class KPDiagnosticRow:
    site: int
    lhs: float
    rhs: float

    @property
    def certified(self) -> bool:
        return self.lhs < self.rhs


def kp_diagnostic(model: ModelInstance, cfg: ExpansionConfig,
                  probe_sites=None, q: int | None = None,
                  weights: dict | None = None) -> list[KPDiagnosticRow]:
    """Truncated convergence-condition margins per probe site.

    Lower bounds only: a row with lhs >= rhs means no convergence
    certificate at this order; all rows passing certifies nothing beyond
    the enumerated sizes.
    """
    if probe_sites is None:
        probe_sites = range(model.n_sites)
    if q is None:
        q = resolve_cutoff(model, cfg)
    if weights is None:
        edges = interaction_edges(model.couplings, cfg.polymer_threshold)
        polymers = enumerate_polymers(edges, cfg.m)
        weights = weight_table(polymers, model, q, workers=cfg.workers)

    rows = []
    for site in probe_sites:
        lhs = math.fsum(
            abs(res.value) * math.exp(len(polymer.support) / 2.0 + polymer.size)
            for polymer, res in weights.items()
            if site in polymer.support
        )
        rows.append(KPDiagnosticRow(int(site), lhs, KP_RHS))
    return rows


@dataclass(frozen=True)
class ErrorBudget:
    m_error: float
    m_error_conditional: bool
    q_error_proxy: float | None
    q_error_delta: int | None
    q_error_target: float | None

    @property
    def note(self) -> str:
        return (
            "m_error = N*exp(-m) holds only when every KP margin is certified; "
            "q_error_proxy is an oracle difference, not a bound"
        )


def error_budget(model: ModelInstance, cfg: ExpansionConfig, theta: float | None = None,
                 q: int | None = None, oracle_delta: int = 2,
                 oracle_dim_cap: int = 20000) -> ErrorBudget:
    """The m-truncation bound and, when exact differencing is affordable,
    a measured q-truncation proxy |log Z^(q) - log Z^(q+delta)|.

    ``theta`` sets the cutoff-error target N**(-theta) the proxy is meant
    to be compared against (defaults to the config's theta).
    """
    if q is None:
        q = resolve_cutoff(model, cfg)
    if theta is None:
        theta = cfg.theta
    n = model.n_sites
    m_error = n * math.exp(-cfg.m)

    q_error = None
    delta = None
    big_q = q + oracle_delta
    if (big_q + 1) ** n <= oracle_dim_cap:
        edges = interaction_edges(model.couplings, cfg.polymer_threshold)
        region = range(n)
        lo = restricted_log_partition(model, region, edges, q)
        hi = restricted_log_partition(model, region, edges, big_q)
        q_error = abs(hi - lo)
        delta = oracle_delta
    return ErrorBudget(m_error, True, q_error, delta, float(n) ** (-theta))


@dataclass(frozen=True)
class ExpansionReport:
    """Primary output record of the approximation run."""

    f_beta: float
    log_z_w: float
    t_m: float
    per_order: tuple[OrderContribution, ...]
    kp_margin: tuple[KPDiagnosticRow, ...]
    kp_certified: bool
    polymer_count: int
    cluster_count: int
    m: int
    q: int
    m_error_bound: float
    elapsed: float
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "f_beta": self.f_beta,
            "log_z_w": self.log_z_w,
            "t_m": self.t_m,
            "per_order": [
                {"order": oc.order, "contribution": oc.contribution,
                 "cluster_count": oc.cluster_count}
                for oc in self.per_order
            ],
            "kp_margin": [
                {"site": r.site, "lhs": r.lhs, "rhs": r.rhs, "certified": r.certified}
                for r in self.kp_margin
            ],
            "kp_certified": self.kp_certified,
            "polymer_count": self.polymer_count,
            "cluster_count": self.cluster_count,
            "m": self.m,
            "q": self.q,
            "m_error_bound": self.m_error_bound,
            "notes": list(self.notes),
        }


def approximate_log_partition(model: ModelInstance, cfg: ExpansionConfig) -> ExpansionReport:
    """Run the full pipeline and assemble the report (f = log Z_W + T_m)."""
    start = time.perf_counter()
    q = resolve_cutoff(model, cfg)

    edges = interaction_edges(model.couplings, cfg.polymer_threshold)
    polymers = enumerate_polymers(edges, cfg.m)
    weights = weight_table(polymers, model, q, workers=cfg.workers)
    active = polymers
    if cfg.prune_below is not None:
        active = [p for p in polymers if abs(weights[p].value) >= cfg.prune_below]
    clusters = enumerate_clusters(active, cfg.m)

    by_order: dict[int, list[float]] = {s: [] for s in range(1, cfg.m + 1)}
    for cluster in clusters:
        by_order[cluster.total_size].append(_cluster_term(cluster, weights))
    per_order = []
    t_m = 0.0
    for order in range(1, cfg.m + 1):
        contribution = math.fsum(by_order[order])
        t_m += contribution
        per_order.append(OrderContribution(order, contribution, len(by_order[order])))

    log_z_w = onsite_log_partition(model, q)
    kp_rows = kp_diagnostic(model, cfg, q=q, weights=weights)
    certified = all(r.certified for r in kp_rows)

    notes = [
        "KP margins are size-truncated lower bounds: they can refute the "
        "convergence certificate, never prove it",
        "m_error_bound = N*exp(-m) applies only when kp_certified is true",
    ]
    if not certified:
        notes.append("no convergence certificate at this order")

    return ExpansionReport(
        f_beta=log_z_w + t_m,
        log_z_w=log_z_w,
        t_m=t_m,
        per_order=tuple(per_order),
        kp_margin=tuple(kp_rows),
        kp_certified=certified,
        polymer_count=len(active),
        cluster_count=len(clusters),
        m=cfg.m,
        q=q,
        m_error_bound=model.n_sites * math.exp(-cfg.m),
        elapsed=time.perf_counter() - start,
        notes=tuple(notes),
    )


def workers_from_env(default: int = 1) -> int:
    """Worker count from BOSEPOLY_WORKERS, used when a config omits it."""
    raw = os.environ.get("BOSEPOLY_WORKERS")
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return max(1, value)
