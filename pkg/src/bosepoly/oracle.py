"""Exact diagonalization of the truncated model: ground truth at small N.

A ThermalState holds one symmetric eigendecomposition per total-number
sector.  Expectations route through the block structure: a monomial of
ladder operators shifts the total number by (creations - annihilations),
so number-non-conserving monomials vanish identically and conserving ones
act inside each sector.  The full density matrix is never materialized;
reduced density matrices are accumulated block by block via direct index
marginalization (the subsystem total is itself conserved).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fock import SectorBlock, build_block_hamiltonian, logsumexp, sector_blocks
from .lattice import ModelInstance, distance_matrix, interaction_edges

__all__ = [
    "DimensionCapError",
    "MonomialOperator",
    "create",
    "annihilate",
    "number_op",
    "ThermalState",
    "thermalize",
    "expectation",
    "correlation",
    "ClusteringScanRow",
    "ClusteringScan",
    "clustering_scan",
    "moments",
    "occupation_distribution",
    "mutual_information",
    "dense_thermal_matrix",
]

DEFAULT_DIM_CAP = 20000
CORRELATION_NOISE_FLOOR = 1e-13


class DimensionCapError(RuntimeError):
    """The requested truncated space exceeds the configured dimension cap."""

    def __init__(self, required: int, allowed: int):
        super().__init__(
            f"truncated space dimension {required} exceeds the cap {allowed}"
        )
        self.required = required
        self.allowed = allowed


@dataclass(frozen=True)
class MonomialOperator:
    """Ordered product of creation/annihilation factors.

    ``factors`` is the operator product read left to right; application to
    a ket starts from the rightmost factor.
    """

    factors: tuple[tuple[int, str], ...]

    def __post_init__(self):
        for site, kind in self.factors:
            if kind not in ("create", "annihilate"):
                raise ValueError(f"unknown factor kind {kind!r}")
            if site < 0:
                raise ValueError("factor site must be a valid index")

    @property
    def support(self) -> frozenset:
        return frozenset(site for site, _k in self.factors)

    @property
    def op_count(self) -> int:
        return len(self.factors)

    @property
    def number_shift(self) -> int:
        return sum(1 if k == "create" else -1 for _s, k in self.factors)

    def __mul__(self, other: "MonomialOperator") -> "MonomialOperator":
        return MonomialOperator(self.factors + other.factors)


def create(site: int) -> MonomialOperator:
    return MonomialOperator(((site, "create"),))


def annihilate(site: int) -> MonomialOperator:
    return MonomialOperator(((site, "annihilate"),))


def number_op(site: int) -> MonomialOperator:
    return MonomialOperator(((site, "create"), (site, "annihilate")))


def _apply_monomial(occ, factors, q):
    """Apply the factor product to an occupation ket: (coefficient, occ') or
    None when annihilated (including pushes past the per-site cutoff)."""
    occ = list(occ)
    coef = 1.0
    for site, kind in reversed(factors):
        n = occ[site]
        if kind == "annihilate":
            if n == 0:
                return None
            coef *= math.sqrt(n)
            occ[site] = n - 1
        else:
            if n + 1 > q:
                return None
            coef *= math.sqrt(n + 1)
            occ[site] = n + 1
    return coef, tuple(occ)


@dataclass(frozen=True)
class ThermalState:
    """Block eigendecompositions of exp(-beta H) / Z for the full lattice."""

    model: ModelInstance
    q: int
    beta: float
    blocks: tuple[SectorBlock, ...]
    eigenvalues: tuple[np.ndarray, ...]
    eigenvectors: tuple[np.ndarray, ...]
    log_z: float

    def block_probabilities(self, block_index: int) -> np.ndarray:
        lam = self.eigenvalues[block_index]
        return np.exp(-self.beta * lam - self.log_z)

    def diagonal_probabilities(self, block_index: int) -> np.ndarray:
        """rho's diagonal in the occupation basis of one sector."""
        U = self.eigenvectors[block_index]
        p = self.block_probabilities(block_index)
        return (U * U * p).sum(axis=1)


def thermalize(model: ModelInstance, q: int, beta: float | None = None,
               dim_cap: int = DEFAULT_DIM_CAP) -> ThermalState:
    """Diagonalize every number sector of the truncated model."""
    if beta is None:
        beta = model.beta
    n = model.n_sites
    total_dim = (q + 1) ** n
    if total_dim > dim_cap:
        raise DimensionCapError(total_dim, dim_cap)

    region = tuple(range(n))
    edges = interaction_edges(model.couplings, 0.0)
    blocks = []
    eigenvalues = []
    eigenvectors = []
    log_terms = []
    for block in sector_blocks(region, q):
        bm = build_block_hamiltonian(model, region, edges, block)
        lam, vecs = np.linalg.eigh(bm.entries)
        blocks.append(block)
        eigenvalues.append(lam)
        eigenvectors.append(vecs)
        log_terms.append(logsumexp(-beta * lam))
    log_z = logsumexp(log_terms)

    state = ThermalState(
        model=model,
        q=q,
        beta=beta,
        blocks=tuple(blocks),
        eigenvalues=tuple(eigenvalues),
        eigenvectors=tuple(eigenvectors),
        log_z=log_z,
    )
    trace = sum(state.block_probabilities(b).sum() for b in range(len(blocks)))
    if abs(trace - 1.0) > 1e-10:
        raise ArithmeticError(f"thermal state failed normalization: Tr rho = {trace}")
    return state


def expectation(state: ThermalState, op: MonomialOperator) -> float:
    """Tr(rho O) through the sector blocks.

    Number-non-conserving monomials return exactly 0 without computation.
    """
    if op.support and max(op.support) >= state.model.n_sites:
        raise ValueError("operator support outside the lattice")
    if op.op_count == 0:
        return 1.0
    if op.number_shift != 0:
        return 0.0

    total = 0.0
    for b, block in enumerate(state.blocks):
        index = block.index()
        U = state.eigenvectors[b]
        p = state.block_probabilities(b)
        OU = np.zeros_like(U)
        hit = False
        for k, occ in enumerate(block.basis):
            res = _apply_monomial(occ, op.factors, state.q)
            if res is None:
                continue
            coef, new_occ = res
            t = index.get(new_occ)
            if t is None:
                continue
            OU[t, :] += coef * U[k, :]
            hit = True
        if hit:
            total += float(np.einsum("sk,sk,k->", U, OU, p))
    return total


def correlation(state: ThermalState, op_x: MonomialOperator,
                op_y: MonomialOperator) -> float:
    """C(O_X, O_Y) = Tr(rho O_X O_Y) - Tr(rho O_X) Tr(rho O_Y)."""
    if not op_x.support.isdisjoint(op_y.support):
        raise ValueError("correlation requires disjoint operator supports")
    joint = expectation(state, op_x * op_y)
    return joint - expectation(state, op_x) * expectation(state, op_y)


@dataclass(frozen=True)
class ClusteringScanRow:
    site_a: int
    site_b: int
    distance: int
    value: float
    phi_ref: float
    bound_ref: float | None
    ratio: float | None


@dataclass(frozen=True)
class ClusteringScan:
    family: str
    anchor: int
    rows: tuple[ClusteringScanRow, ...]
    fitted_exponent: float | None


def _phi_reference(n_x: int, n_y: int, beta: float) -> float:
    return math.sqrt(math.factorial(n_x) * math.factorial(n_y)) * beta ** (
        -(n_x + n_y) / 4.0
    )


def clustering_scan(state: ThermalState, family: str, anchor: int) -> ClusteringScan:
    """Correlation decay rows against distance from the anchor site.

    family "hopping": C(a_anchor^dag, a_j); family "density": C(n_anchor, n_j).
    The decay-reference column uses the clustering bound envelope with unit
    prefactor; the exponent is a least-squares fit of log|C| on log(1+d)
    over rows above the noise floor (omitted when fewer than 3 qualify).
    """
    model = state.model
    if family == "hopping":
        ops = lambda j: (create(anchor), annihilate(j))
        n_x = n_y = 1
    elif family == "density":
        ops = lambda j: (number_op(anchor), number_op(j))
        n_x = n_y = 2
    else:
        raise ValueError(f"unknown scan family {family!r}")

    alpha = model.couplings.alpha
    phi = _phi_reference(n_x, n_y, state.beta)
    dist = distance_matrix(model.lattice)

    rows = []
    for j in range(model.n_sites):
        if j == anchor:
            continue
        value = correlation(state, *ops(j))
        d = int(dist[anchor, j])
        if alpha is not None:
            bound_ref = phi / (1.0 + d) ** alpha
            ratio = abs(value) * (1.0 + d) ** alpha / phi
        else:
            bound_ref = None
            ratio = None
        rows.append(ClusteringScanRow(anchor, j, d, value, phi, bound_ref, ratio))
    rows.sort(key=lambda r: (r.distance, r.site_b))

    usable = [r for r in rows if abs(r.value) > CORRELATION_NOISE_FLOOR]
    exponent = None
    if len(usable) >= 3:
        x = np.log([1.0 + r.distance for r in usable])
        y = np.log([abs(r.value) for r in usable])
        exponent = float(np.polyfit(x, y, 1)[0])
    return ClusteringScan(family, anchor, tuple(rows), exponent)


def moments(state: ThermalState, site: int, l_max: int) -> list[float]:
    """[Tr(n_site^l rho) for l = 1..l_max], exact diagonal sums."""
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    state.model.lattice._check_site(site)
    out = [0.0] * l_max
    for b, block in enumerate(state.blocks):
        diag = state.diagonal_probabilities(b)
        occ = np.array([occv[site] for occv in block.basis], dtype=np.float64)
        for l in range(1, l_max + 1):
            out[l - 1] += float((occ**l * diag).sum())
    return out


def occupation_distribution(state: ThermalState, site: int) -> list[float]:
    """p_n = <n| Tr_rest rho |n> for n = 0..q."""
    state.model.lattice._check_site(site)
    p = np.zeros(state.q + 1)
    for b, block in enumerate(state.blocks):
        diag = state.diagonal_probabilities(b)
        for k, occ in enumerate(block.basis):
            p[occ[site]] += diag[k]
    total = p.sum()
    if abs(total - 1.0) > 1e-10:
        raise ArithmeticError(f"occupation distribution sums to {total}")
    return [float(x) for x in p]


def _entropy_from_probabilities(p: np.ndarray) -> float:
    p = np.clip(p, 1e-300, None)
    return float(-(p * np.log(p)).sum())


def reduced_density_blocks(state: ThermalState, subsystem) -> dict:
    """Tr over the complement, returned per subsystem-total sector.

    The full rho couples occupation pairs only within one lattice sector,
    and tracing out the complement forces equal subsystem totals, so the
    reduced matrix is block diagonal in the subsystem number.
    """
    model = state.model
    sub = tuple(sorted(subsystem))
    rest = tuple(i for i in range(model.n_sites) if i not in sub)
    if not sub or not rest:
        raise ValueError("subsystem must be a proper nonempty subset of the lattice")

    sub_blocks = sector_blocks(sub, state.q)
    sub_index = {blk.total: blk.index() for blk in sub_blocks}
    reduced = {blk.total: np.zeros((blk.dim, blk.dim)) for blk in sub_blocks}

    for b, block in enumerate(state.blocks):
        U = state.eigenvectors[b]
        p = state.block_probabilities(b)
        rho_block = (U * p) @ U.T
        groups: dict[tuple, list[int]] = {}
        for k, occ in enumerate(block.basis):
            key = tuple(occ[i] for i in rest)
            groups.setdefault(key, []).append(k)
        for ks in groups.values():
            occ0 = block.basis[ks[0]]
            n_sub = sum(occ0[i] for i in sub)
            sel = [sub_index[n_sub][tuple(block.basis[k][i] for i in sub)] for k in ks]
            reduced[n_sub][np.ix_(sel, sel)] += rho_block[np.ix_(ks, ks)]
    return reduced


def mutual_information(state: ThermalState, partition) -> float:
    """I(A:B) = S(rho_A) + S(rho_B) - S(rho) for a bipartition A | B."""
    a, b = partition
    a = tuple(sorted(a))
    b = tuple(sorted(b))
    n = state.model.n_sites
    if set(a) & set(b) or set(a) | set(b) != set(range(n)) or not a or not b:
        raise ValueError("partition must split the lattice into two nonempty parts")

    s_total = 0.0
    for bi in range(len(state.blocks)):
        s_total += _entropy_from_probabilities(state.block_probabilities(bi))

    def reduced_entropy(sites) -> float:
        total = 0.0
        for mat in reduced_density_blocks(state, sites).values():
            if mat.size == 0:
                continue
            eigvals = np.linalg.eigvalsh(mat)
            total += _entropy_from_probabilities(eigvals)
        return total

    return reduced_entropy(a) + reduced_entropy(b) - s_total


def dense_thermal_matrix(model: ModelInstance, q: int, beta: float | None = None) -> tuple:
    """Cross-check path: full (q+1)^N rho over the product basis (tiny N only).

    Returns (basis, rho) with the basis in lexicographic occupation order.
    """
    if beta is None:
        beta = model.beta
    n = model.n_sites
    dim = (q + 1) ** n
    if dim > 4096:
        raise DimensionCapError(dim, 4096)

    import itertools

    basis = list(itertools.product(range(q + 1), repeat=n))
    index = {occ: k for k, occ in enumerate(basis)}
    H = np.zeros((dim, dim))
    from .fock import onsite_energy

    for k, occ in enumerate(basis):
        H[k, k] = sum(
            onsite_energy(model.onsite.U[i], model.onsite.mu[i], occ[i])
            for i in range(n)
        )
    for (i, j) in interaction_edges(model.couplings, 0.0):
        J = model.coupling(i, j)
        for k, occ in enumerate(basis):
            for src, dst in ((i, j), (j, i)):
                if occ[dst] >= 1 and occ[src] + 1 <= q:
                    moved = list(occ)
                    moved[dst] -= 1
                    moved[src] += 1
                    H[index[tuple(moved)], k] += -J * math.sqrt((occ[src] + 1) * occ[dst])

    lam, vecs = np.linalg.eigh(H)
    weights = np.exp(-beta * lam - logsumexp(-beta * lam))
    rho = (vecs * weights) @ vecs.T
    return basis, rho
