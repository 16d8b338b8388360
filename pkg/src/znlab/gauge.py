"""Flat-plaquette gauge ensembles, their cluster partner, and samplers.

The positive slice of the weight family keeps only a flatness reward on
(P+1)-cells: V identically 1 and W(x) = 1 + (e^beta - 1) delta_N(x).  This
module builds those tables, embeds them into the Trotter family, couples the
gauge field to a random subcomplex of occupied (P+1)-cells (occupation
probability p = 1 - e^{-beta}, topology weighted by the number of independent
degree-P homology classes of the subcomplex), and samples the joint measure
with a two-step plaquette cluster update.  Observables cover homological
percolation events of the occupied subcomplex, loop-holonomy averages with
their indicator twins, closed-form critical constants, and a finite-size
scan over lattice sizes.

All cluster operations require a prime modulus; the plain gauge tables and
partition sums work for any N >= 2.
"""

from __future__ import annotations

import itertools
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _fastgf as fg
from . import fieldmath as fm
from .cells import CellComplex, FieldChain, build_torus, is_cycle
from .spacetime import LocalWeights, TrotterParams

__all__ = [
    "GaugeConfig",
    "JointState",
    "MarginalsReport",
    "HomologicalReport",
    "WilsonReport",
    "CriticalConstants",
    "ToricCycle",
    "ScanRow",
    "SCAN_COLUMNS",
    "gauge_weights",
    "gauge_from_trotter",
    "gauge_partition_exact",
    "joint_marginals_check",
    "initial_state",
    "uniform_cocycle",
    "sw_step",
    "homological_observables",
    "toric_cycle_family",
    "cycle_separation",
    "wilson_estimator",
    "critical_constants",
    "transition_scan",
    "scan_csv",
]

DEFAULT_ENUM_CAP = 1 << 22
_COCYCLE_CACHE_SIZE = 64


# ---------------------------------------------------------------------------
# configuration and state


@dataclass(eq=False)
class GaugeConfig:
    """Flat-plaquette ensemble on the (P+1)-cells of a complex.

    Exactly one of ``beta`` / ``p`` is given; the other is derived by
    p = 1 - e^{-beta} per cell.  ``p = 1`` (infinite coupling) is allowed
    for the samplers; partition sums then refuse to run.
    """

    X: CellComplex
    P: int
    N: int
    beta: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    _cocycle_cache: OrderedDict = field(default_factory=OrderedDict,
                                        repr=False, compare=False)
    _dmat8: Optional[np.ndarray] = field(default=None, repr=False,
                                         compare=False)
    _dmat64: Optional[np.ndarray] = field(default=None, repr=False,
                                          compare=False)

    def __post_init__(self):
        if not 0 <= self.P <= self.X.dim - 1:
            raise ValueError("form degree must leave room for (P+1)-cells")
        if self.N < 2:
            raise ValueError("modulus must be at least 2")
        n_c = self.X.num_cells(self.P + 1)
        if (self.beta is None) == (self.p is None):
            raise ValueError("give exactly one of beta or p")
        if self.beta is not None:
            beta = np.broadcast_to(np.asarray(self.beta, dtype=float),
                                   (n_c,)).copy()
            if np.any(beta < 0) or np.any(np.isnan(beta)):
                raise ValueError("coupling must be >= 0")
            self.beta = beta
            self.p = -np.expm1(-beta)
        else:
            p = np.broadcast_to(np.asarray(self.p, dtype=float), (n_c,)).copy()
            if np.any(p < 0) or np.any(p > 1):
                raise ValueError("occupation probability must lie in [0, 1]")
            self.p = p
            with np.errstate(divide="ignore"):
                self.beta = -np.log1p(-p)

    # dense coboundary in both integer widths, built once
    def _coboundary8(self):
        if self._dmat8 is None:
            d = np.asarray(self.X.coboundary_matrix(self.P).toarray(),
                           dtype=np.int64)
            self._dmat64 = d % self.N
            self._dmat8 = fg.as_field(d, self.N)
        return self._dmat8

    def _coboundary64(self):
        self._coboundary8()
        return self._dmat64


@dataclass(eq=False)
class JointState:
    """Gauge field together with an occupation pattern of (P+1)-cells."""

    config: GaugeConfig
    phi: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        cfg = self.config
        n_u = cfg.X.num_cells(cfg.P)
        n_c = cfg.X.num_cells(cfg.P + 1)
        self.phi = np.asarray(self.phi, dtype=np.int64) % cfg.N
        if self.phi.shape != (n_u,):
            raise ValueError("gauge field has wrong length")
        self.omega = np.asarray(self.omega, dtype=bool)
        if self.omega.shape != (n_c,):
            raise ValueError("occupation vector has wrong length")

    @property
    def occupied(self):
        return np.flatnonzero(self.omega)


def initial_state(config):
    """Zero field, empty occupation."""
    return JointState(config, np.zeros(config.X.num_cells(config.P),
                                       dtype=np.int64),
                      np.zeros(config.X.num_cells(config.P + 1), dtype=bool))


# ---------------------------------------------------------------------------
# weight tables


def gauge_weights(X, P, N, beta_g):
    """Local tables with V = 1 and W(x) = 1 + (e^beta - 1) delta_N(x)."""
    cfg = GaugeConfig(X, P, N, beta=beta_g)
    n_u = X.num_cells(P)
    n_c = X.num_cells(P + 1)
    W = np.ones((n_c, N), dtype=complex)
    W[:, 0] = np.exp(cfg.beta)
    V = np.ones((n_u, N), dtype=complex)
    return LocalWeights(cx=X, P=P, N=N, W=W, V=V)


def gauge_from_trotter(beta_par, beta_perp, M, beta, N, J=1.0):
    """Trotter couplings whose weights reproduce a pair of gauge tables.

    The horizontal (P+1)-cell table becomes 1 + (e^{beta_par} - 1) delta via
    K = (M/beta) beta_par, the horizontal P-cell table is trivial (h = 0),
    and the vertical (P+1)-cell table becomes proportional to
    1 + (e^{beta_perp} - 1) delta through the log-Fourier construction
    g^(n) = (M/(beta N)) sum_j Gamma(j) omega^{-nj} with
    Gamma = log F - mean log F and F(j) = (e^{beta_perp} - 1) + N delta(j).
    A zero vertical target has no finite preimage (F vanishes off the zero
    mode), so beta_perp must be positive.  J is the residual vertical P-cell
    coupling, not fixed by the two targets.
    """
    if beta_par < 0:
        raise ValueError("horizontal target coupling must be >= 0")
    if beta_perp <= 0:
        raise ValueError(
            "vertical target coupling must be positive; at zero the target "
            "table is constant and lies outside the finite-coupling family")
    if M < 1 or beta <= 0 or N < 2:
        raise ValueError("need M >= 1, beta > 0, N >= 2")
    F = np.full(N, np.expm1(beta_perp), dtype=float)
    F[0] += N
    gamma = np.log(F) - np.log(F).mean()
    g = np.fft.fft(gamma) * (M / (beta * N))
    g[0] = 0.0  # gamma has zero mean by construction
    K = (M / beta) * beta_par
    return TrotterParams(N=N, M=M, beta=beta, J=J, K=K, g=g)


def gauge_partition_exact(X, P, N, beta_g, cap=DEFAULT_ENUM_CAP,
                          block=1 << 14):
    """Sum of exp(beta . flatness count) over all N^{n_P} fields.

    Direct mixed-radix enumeration, independent of the spacetime
    partition routines.
    """
    cfg = GaugeConfig(X, P, N, beta=beta_g)
    if not np.all(np.isfinite(cfg.beta)):
        raise ValueError("partition sum needs finite coupling (p < 1)")
    n_u = X.num_cells(P)
    total = N ** n_u
    if total > cap:
        raise ValueError(f"enumeration too large: {total} > {cap}")
    D = cfg._coboundary64()
    radix = N ** np.arange(n_u, dtype=np.int64)
    acc = 0.0
    for start in range(0, total, block):
        idx = np.arange(start, min(start + block, total), dtype=np.int64)
        digits = (idx[:, None] // radix) % N
        flat = (digits @ D.T % N) == 0
        acc += float(np.exp(flat.astype(float) @ cfg.beta).sum())
    return acc


# ---------------------------------------------------------------------------
# joint measure and its marginals


@dataclass
class MarginalsReport:
    """Per-configuration proportionality constants of both marginals."""

    gauge_constant: float
    gauge_expected: float
    gauge_variance: float
    prcm_constant: float
    prcm_expected: float
    prcm_variance: float

    @property
    def ok(self):
        near = (abs(self.gauge_constant - self.gauge_expected)
                <= 1e-12 * max(1.0, self.gauge_expected)
                and abs(self.prcm_constant - self.prcm_expected)
                <= 1e-12 * max(1.0, self.prcm_expected))
        return near and self.gauge_variance < 1e-20 \
            and self.prcm_variance < 1e-20


def joint_marginals_check(X, P, N, p, cap=DEFAULT_ENUM_CAP):
    """Exhaustively verify both marginals of the field/occupation coupling.

    The joint weight is prod_c [(1-p) (1-omega_c) + p omega_c flat_c(phi)].
    Summing over occupations must give the gauge Boltzmann weight times the
    constant (1-p)^{n_c}; summing over fields must give
    p^{occ} (1-p)^{unocc} N^{b_P(Y)} times the constant count of degree-P
    coboundaries.  Returns both constants and their per-configuration
    variances.
    """
    if not fm.is_prime(N):
        raise fm.CompositeModulusError("cluster coupling needs prime N")
    p = float(p)
    if not 0 <= p < 1:
        raise ValueError("need p in [0, 1)")
    cfg = GaugeConfig(X, P, N, p=p)
    n_u = X.num_cells(P)
    n_c = X.num_cells(P + 1)
    if N ** n_u > cap or (N ** n_u) * (2 ** n_c) > cap * 16:
        raise ValueError("instance too large for exhaustive check")
    D = cfg._coboundary64()
    radix = N ** np.arange(n_u, dtype=np.int64)
    idx = np.arange(N ** n_u, dtype=np.int64)
    digits = (idx[:, None] // radix) % N
    flat = (digits @ D.T % N) == 0  # (n_phi, n_c)
    beta = cfg.beta[0] if n_c else 0.0

    # gauge marginal: sum over omega factorizes per cell
    joint_phi = np.prod((1 - p) + p * flat, axis=1)
    boltz = np.exp(beta * flat.sum(axis=1))
    ratio_g = joint_phi / boltz
    gauge_expected = (1 - p) ** n_c

    # cluster marginal: sum over phi counts fields flat on the occupation
    bnd_low_rank = fm.fn_rank(np.asarray(X.boundary_matrix(P).toarray()), N)
    bnd_high = np.asarray(X.boundary_matrix(P + 1).toarray(), dtype=np.int64)
    ratios = np.empty(2 ** n_c, dtype=float)
    for w in range(2 ** n_c):
        occ = np.flatnonzero((w >> np.arange(n_c)) & 1)
        count = int(flat[:, occ].all(axis=1).sum())
        rank_occ = fm.fn_rank(bnd_high[:, occ], N)
        b_p = n_u - bnd_low_rank - rank_occ
        ratios[w] = count / float(N) ** b_p
    prcm_expected = float(N) ** bnd_low_rank

    return MarginalsReport(
        gauge_constant=float(ratio_g.mean()),
        gauge_expected=gauge_expected,
        gauge_variance=float(ratio_g.var()),
        prcm_constant=float(ratios.mean()),
        prcm_expected=prcm_expected,
        prcm_variance=float(ratios.var()),
    )


# ---------------------------------------------------------------------------
# plaquette cluster sampler


def _occupied_echelon(config, omega):
    """Echelon form of the occupied coboundary rows, cached per pattern."""
    key = omega.tobytes()
    cache = config._cocycle_cache
    hit = cache.get(key)
    if hit is not None:
        cache.move_to_end(key)
        return hit
    D8 = config._coboundary8()
    A = np.ascontiguousarray(D8[omega])
    rank, piv = fg.row_echelon(A, config.N)
    entry = (A, piv, rank)
    cache[key] = entry
    if len(cache) > _COCYCLE_CACHE_SIZE:
        cache.popitem(last=False)
    return entry


def uniform_cocycle(config, omega, rng):
    """Uniform field among those flat on every occupied (P+1)-cell.

    The occupied coboundary rows are put in row echelon form once per
    occupation pattern (cached); non-pivot coordinates get independent
    uniform values and back substitution fills the pivots, which is a
    bijection from free assignments onto the solution set.
    """
    if not fm.is_prime(config.N):
        raise fm.CompositeModulusError("cluster sampling needs prime N")
    omega = np.asarray(omega, dtype=bool)
    E, piv, rank = _occupied_echelon(config, omega)
    n_u = config.X.num_cells(config.P)
    free = rng.integers(0, config.N, n_u - rank).astype(np.uint8)
    return fg.kernel_sample(E, piv, rank, free, config.N).astype(np.int64)


def sw_step(state, rng):
    """One two-step cluster update of the joint measure.

    Occupations are drawn independently, cell c with probability
    p_c [ (d phi)_c = 0 ]; the field is then redrawn uniformly among the
    fields flat on the new occupation.  The joint measure is stationary.
    """
    cfg = state.config
    flux = cfg._coboundary64() @ state.phi % cfg.N
    omega = (rng.random(flux.shape[0]) < cfg.p) & (flux == 0)
    phi = uniform_cocycle(cfg, omega, rng)
    return JointState(cfg, phi, omega)


# ---------------------------------------------------------------------------
# homological observables


@dataclass
class HomologicalReport:
    """Push-forward rank data of an occupied subcomplex."""

    nonzero: bool
    surjective: bool
    image_rank: int
    ambient_rank: int
    b_p: int
    b_p1: int


def homological_observables(X, P, N, omega, hd_ambient=None):
    """Rank of H_{P+1}(Y) -> H_{P+1}(X) plus both Betti numbers of Y.

    Y is the subcomplex with the full P-skeleton and the occupied
    (P+1)-cells.  The push-forward is evaluated by expressing a kernel
    basis of the occupied boundary columns in ambient class coordinates.
    """
    if not fm.is_prime(N):
        raise fm.CompositeModulusError("homology ranks need prime N")
    omega = np.asarray(omega, dtype=bool)
    n_u = X.num_cells(P)
    bnd_high = np.asarray(X.boundary_matrix(P + 1).toarray(),
                          dtype=np.int64) % N
    occ = np.flatnonzero(omega)
    A = bnd_high[:, occ]
    rank_occ = fm.fn_rank(A, N)
    if hd_ambient is None:
        hd_ambient = fm.homology_data(X, P + 1, N)
    kern = fm.fn_kernel(A, N)
    if kern.shape[1]:
        lifted = np.zeros((bnd_high.shape[1], kern.shape[1]), dtype=np.int64)
        lifted[occ] = kern
        classes = np.stack(
            [hd_ambient.homology_class(lifted[:, i])
             for i in range(kern.shape[1])], axis=1)
        image_rank = fm.fn_rank(classes, N)
    else:
        image_rank = 0
    rank_low = fm.fn_rank(np.asarray(X.boundary_matrix(P).toarray()), N)
    return HomologicalReport(
        nonzero=image_rank >= 1,
        surjective=image_rank == hd_ambient.betti,
        image_rank=image_rank,
        ambient_rank=hd_ambient.betti,
        b_p=n_u - rank_low - rank_occ,
        b_p1=int(len(occ)) - rank_occ,
    )


# ---------------------------------------------------------------------------
# straight cycle family and holonomy estimators


@dataclass(frozen=True)
class ToricCycle:
    """Fundamental cycle of a coordinate P-subtorus.

    ``axes`` lists the spanned directions, ``position`` the full coordinate
    vector (entries on the spanned axes are zeroed and ignored), ``data``
    the chain coefficients: 1 on every P-cell of the subtorus.
    """

    axes: tuple
    position: tuple
    data: np.ndarray = field(repr=False, compare=False)

    def as_chain(self, X, N):
        return FieldChain(X, len(self.axes), N, self.data % N)


def toric_cycle_family(X, P):
    """All axis-aligned coordinate P-subtorus cycles of a torus complex."""
    if not 0 <= P <= X.dim:
        raise ValueError("degree out of range")
    d = X.dim
    n_p = X.num_cells(P)
    out = []
    for axes in itertools.combinations(range(d), P):
        trans = [a for a in range(d) if a not in axes]
        span = [range(X.sizes[a]) for a in trans]
        for pos in itertools.product(*span):
            coords = [0] * d
            for a, v in zip(trans, pos):
                coords[a] = v
            data = np.zeros(n_p, dtype=np.int64)
            for on in itertools.product(
                    *(range(X.sizes[a]) for a in axes)):
                full = list(coords)
                for a, v in zip(axes, on):
                    full[a] = v
                data[X.index[P][(tuple(full), axes)]] = 1
            out.append(ToricCycle(axes=axes, position=tuple(coords),
                                  data=data))
    return out


def cycle_separation(X, c1, c2):
    """1-skeleton graph distance between the supports of two such cycles.

    On a torus the vertex metric is the per-axis circular distance summed
    over axes; an axis spanned by either cycle contributes zero because the
    endpoint on it is free.
    """
    total = 0
    for a in range(X.dim):
        if a in c1.axes or a in c2.axes:
            continue
        t = (c1.position[a] - c2.position[a]) % X.sizes[a]
        total += min(t, X.sizes[a] - t)
    return total


def _batch_stats(samples, batches):
    """Mean and batch-means standard error of a 1d sample sequence."""
    x = np.asarray(samples)
    n = x.shape[0]
    b = max(1, min(batches, n))
    edges = np.linspace(0, n, b + 1).astype(int)
    means = np.array([x[lo:hi].mean() for lo, hi in zip(edges, edges[1:])
                      if hi > lo])
    est = x.mean()
    if means.shape[0] < 2:
        return est, float("inf")
    if np.iscomplexobj(x):
        var = means.real.var(ddof=1) + means.imag.var(ddof=1)
    else:
        var = means.var(ddof=1)
    return est, float(math.sqrt(var / means.shape[0]))


@dataclass
class WilsonReport:
    """Holonomy phase average next to its null-homology indicator twin."""

    phase: complex
    phase_err: float
    indicator: float
    indicator_err: float
    n_samples: int


def wilson_estimator(gamma, states, gamma2=None, batches=20):
    """Two estimators of a loop observable along a sampled chain.

    (a) the average of chi(gamma . phi) (times the conjugate holonomy of
    ``gamma2`` when given), and (b) the average of the indicator that
    gamma (or gamma - gamma2) bounds within the occupied subcomplex.
    Both have the same expectation under the joint measure; errors are
    batch-means standard errors.
    """
    states = list(states)
    if not states:
        raise ValueError("need at least one sample")
    cfg = states[0].config
    if gamma.cx is not cfg.X or gamma.degree != cfg.P or gamma.N != cfg.N:
        raise ValueError("cycle does not live on the sampled complex")
    if not is_cycle(gamma):
        raise ValueError("holonomy needs a cycle")
    vec = gamma.data % cfg.N
    if gamma2 is not None:
        if gamma2.cx is not cfg.X or gamma2.degree != cfg.P \
                or gamma2.N != cfg.N:
            raise ValueError("second cycle does not live on the complex")
        if not is_cycle(gamma2):
            raise ValueError("holonomy needs a cycle")
        vec = (vec - gamma2.data) % cfg.N
    bnd_high = np.asarray(cfg.X.boundary_matrix(cfg.P + 1).toarray(),
                          dtype=np.int64) % cfg.N

    w = fm.omega(cfg.N)
    phases = np.empty(len(states), dtype=complex)
    hits = np.empty(len(states), dtype=float)
    for t, st in enumerate(states):
        if st.config is not cfg:
            raise ValueError("samples mix configurations")
        phases[t] = w ** int(vec @ st.phi % cfg.N)
        hits[t] = 0.0 if fm.fn_solve(bnd_high[:, st.occupied], vec,
                                     cfg.N) is None else 1.0
    est_p, err_p = _batch_stats(phases, batches)
    est_i, err_i = _batch_stats(hits, batches)
    return WilsonReport(phase=complex(est_p), phase_err=err_p,
                        indicator=float(est_i), indicator_err=err_i,
                        n_samples=len(states))


# ---------------------------------------------------------------------------
# closed-form constants


@dataclass(frozen=True)
class CriticalConstants:
    """Self-dual point and the large-size nonlocal acceptance limit."""

    p_sd: float
    beta_sd: float
    nonlocal_move_prob: float


def critical_constants(N, P):
    """p_sd = sqrt(N)/(1+sqrt(N)), beta_sd = log(1+sqrt(N)), and the
    limiting probability 1 - N^{-C(2(P+1), P+1)} of a topology-changing
    cluster move in the middle dimension."""
    if N < 2:
        raise ValueError("modulus must be at least 2")
    if P < 0:
        raise ValueError("degree must be >= 0")
    root = math.sqrt(N)
    return CriticalConstants(
        p_sd=root / (1 + root),
        beta_sd=math.log(1 + root),
        nonlocal_move_prob=1 - float(N) ** (-math.comb(2 * (P + 1), P + 1)),
    )


# ---------------------------------------------------------------------------
# finite-size scan


SCAN_COLUMNS = ("N", "P", "L", "p", "sweeps", "seed", "muA", "muA_err",
                "muS", "muS_err", "lockE", "lockE_err", "bP_mean")


@dataclass
class ScanRow:
    """One (L, p) point of the finite-size scan."""

    N: int
    P: int
    L: int
    p: float
    sweeps: int
    seed: int
    muA: float
    muA_err: float
    muS: float
    muS_err: float
    lockE: float
    lockE_err: float
    bP_mean: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in SCAN_COLUMNS)


def scan_csv(rows):
    """CSV text for a list of scan rows."""
    lines = [",".join(SCAN_COLUMNS)]
    for r in rows:
        vals = r.as_tuple()
        lines.append(",".join(
            repr(v) if isinstance(v, float) else str(v) for v in vals))
    return "\n".join(lines) + "\n"


class _ScanGeometry:
    """Per-(L) precomputation shared by every chain and p value."""

    def __init__(self, L, N, P):
        d = 2 * (P + 1)
        X = build_torus(d, L)
        self.X = X
        self.L = L
        self.N = N
        self.P = P
        self.n_u = X.num_cells(P)
        self.n_c = X.num_cells(P + 1)
        self.D8 = fg.as_field(X.coboundary_matrix(P).toarray(), N)
        self.D64 = np.asarray(X.coboundary_matrix(P).toarray(),
                              dtype=np.int64) % N
        self.rank_low = fm.fn_rank(
            np.asarray(X.boundary_matrix(P).toarray()), N)
        hd = fm.homology_data(X, P + 1, N)
        self.betti_high = hd.betti
        nb = hd.boundary_basis.shape[1]
        # linear functionals returning ambient class coordinates of cycles
        self.classmat8 = fg.as_field(
            hd._class_E[nb:nb + hd.betti], N)
        cycles = toric_cycle_family(X, P)
        self.loops8 = fg.as_field(
            np.stack([c.data for c in cycles]), N)
        k = len(cycles)
        adm = np.zeros((k, k), dtype=bool)
        thr = L / 2 - 1
        for i in range(k):
            for j in range(i + 1, k):
                if cycle_separation(X, cycles[i], cycles[j]) >= thr:
                    adm[i, j] = adm[j, i] = True
        self.admissible = adm

    def measure(self, omega, echelon):
        """A/S events, lock event, and both Betti numbers for one pattern."""
        E, piv, rank_occ = echelon
        occ = np.flatnonzero(omega)
        b_p = self.n_u - self.rank_low - rank_occ
        b_p1 = len(occ) - rank_occ

        # push-forward rank: stack occupied boundary columns over the class
        # functionals restricted to the occupation and eliminate once
        stacked = np.concatenate(
            [np.ascontiguousarray(self.D8[omega].T),
             np.ascontiguousarray(self.classmat8[:, occ])], axis=0)
        rank_tot, _ = fg.row_echelon(stacked, self.N)
        image_rank = rank_tot - rank_occ

        # loop residues modulo boundaries of the occupied subcomplex
        res = fg.reduce_block(E, piv, rank_occ, self.loops8.copy(), self.N)
        lock = False
        groups = {}
        for i in range(res.shape[0]):
            groups.setdefault(res[i].tobytes(), []).append(i)
        for idx in groups.values():
            if len(idx) > 1:
                sub = self.admissible[np.ix_(idx, idx)]
                if sub.any():
                    lock = True
                    break
        return (image_rank >= 1, image_rank == self.betti_high,
                lock, b_p, b_p1)


def _chain_streams(seed, chains):
    mask = (1 << 64) - 1
    return [np.random.Generator(np.random.Philox(key=(int(seed) ^ k) & mask))
            for k in range(chains)]


def transition_scan(L_values, p_values, N=3, P=1, sweeps=2000, seed=0,
                    chains=64, burn=None, thin=10, out_csv=None,
                    progress=None):
    """Monte Carlo scan of the homological events over sizes and couplings.

    For every (L, p) pair, ``chains`` independent streams run ``burn``
    warm-up sweeps (default 10 L) plus ``sweeps`` recorded sweeps of the
    cluster update on the middle-dimensional torus T^{2(P+1)}_L, measuring
    every ``thin``-th sweep: the events that the occupied subcomplex carries
    some / every ambient (P+1)-class, the locking event that some admissible
    pair of separated straight cycles falls in one degree-P class of the
    subcomplex (which forces equal holonomy averages), and b_P of the
    subcomplex.  Streams are counter-based (chain k uses key seed xor k), so
    output is reproducible for fixed parameters regardless of scheduling.
    Errors are standard errors across the independent chains.
    """
    if not fm.is_prime(N) or N % 2 == 0:
        raise ValueError("scan expects an odd prime modulus")
    if chains < 2:
        raise ValueError("need at least two chains for errors")
    rows = []
    for L in L_values:
        geo = _ScanGeometry(int(L), N, P)
        n_burn = 10 * int(L) if burn is None else int(burn)
        for p in p_values:
            cfg = GaugeConfig(geo.X, P, N, p=float(p))
            accA = np.zeros(chains)
            accS = np.zeros(chains)
            accE = np.zeros(chains)
            accB = np.zeros(chains)
            for k, rng in enumerate(_chain_streams(seed, chains)):
                phi = np.zeros(geo.n_u, dtype=np.int64)
                nA = nS = nE = 0
                bsum = 0.0
                nmeas = 0
                for sweep in range(n_burn + sweeps):
                    flux = geo.D64 @ phi % N
                    omega = (rng.random(geo.n_c) < cfg.p) & (flux == 0)
                    ech = _occupied_echelon(cfg, omega)
                    free = rng.integers(0, N,
                                        geo.n_u - ech[2]).astype(np.uint8)
                    phi = fg.kernel_sample(ech[0], ech[1], ech[2], free,
                                           N).astype(np.int64)
                    rec = sweep - n_burn
                    if rec >= 0 and rec % thin == 0:
                        a, s, e, b_p, _ = geo.measure(omega, ech)
                        nA += a
                        nS += s
                        nE += e
                        bsum += b_p
                        nmeas += 1
                accA[k] = nA / nmeas
                accS[k] = nS / nmeas
                accE[k] = nE / nmeas
                accB[k] = bsum / nmeas
                if progress is not None:
                    progress(f"L={L} p={p} chain {k + 1}/{chains} done")
            rt = math.sqrt(chains)
            rows.append(ScanRow(
                N=N, P=P, L=int(L), p=float(p), sweeps=sweeps, seed=seed,
                muA=float(accA.mean()),
                muA_err=float(accA.std(ddof=1) / rt),
                muS=float(accS.mean()),
                muS_err=float(accS.std(ddof=1) / rt),
                lockE=float(accE.mean()),
                lockE_err=float(accE.std(ddof=1) / rt),
                bP_mean=float(accB.mean()),
            ))
    if out_csv is not None:
        with open(out_csv, "w") as fh:
            fh.write(scan_csv(rows))
    return rows
