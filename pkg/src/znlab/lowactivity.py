"""Rigorous low-activity control of the two-species defect polymer gas.

Everything here bounds the complex gas by positive quantities.  The two
inputs are a uniform activity bound t_s (largest nontrivial local amplitude
modulus, so every polymer activity satisfies |rho_s(A)| <= t_s^|A|) and a
counting constant C_s with N_s(u; n) <= C_s^n, where N_s(u; n) is the number
of polymers of size n whose carrier contains the cell u.  When
C_s t_s <= e^{-a}(1 - e^{-a}) for some a > 0 (optimal threshold 1/4 at
a = log 2), the Fernandez-Procacci criterion holds for the positive
same-species hard-core majorant gases, and occupation expectations obey
explicit exponential tail bounds.

Two different notions of compatibility appear, deliberately.  The complex
gas of :mod:`znlab.defects` requires same-species supports to be disjoint
and non-adjacent (that makes it exactly equal to the defect sum).  The
positive majorant gas here requires only disjoint supports; it dominates
the complex gas termwise since its family set is strictly larger and every
dropped phase has modulus one.

Counting-graph variants: the catalog's own connectivity is codimension-one
face sharing in the chain's complex.  On the primal carrier cells that is
(P-1)-face sharing for electric polymers and, for magnetic polymers,
(P+2)-coface sharing (the image of dual face sharing).  The "auto" variant
picks exactly those, which is what makes the counting hypothesis sound; the
other variant of each species is available for comparison, with its own
maximum degree.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import defects as df
from . import fieldmath as fm
from .spacetime import zero_background

LOG2 = math.log(2.0)


# -- uniform activity bound -----------------------------------------------------

def uniform_amplitudes(amp):
    """(t_m, t_e): largest moduli of the nontrivial local amplitudes."""
    t_m = float(np.max(np.abs(amp.varpi[:, 1:])))
    t_e = float(np.max(np.abs(amp.upsilon[:, 1:])))
    return t_m, t_e


# -- carrier graphs and counting constants ---------------------------------------

def carrier_degree(P, species):
    return P + 1 if species == "magnetic" else P


def resolve_variant(species, variant):
    if variant == "auto":
        return "coface" if species == "magnetic" else "face"
    if variant not in ("face", "coface"):
        raise ValueError("unknown carrier-graph variant")
    return variant


def carrier_adjacency(dc, P, species, variant="auto"):
    """Neighbor sets of the primal carrier cells under the chosen variant."""
    variant = resolve_variant(species, variant)
    return df.cell_adjacency(dc.primal, carrier_degree(P, species),
                             via=variant), variant


@dataclass
class CountingReport:
    """One counting constant: C with N_s(u; n) <= C^n on the stated range."""

    species: str
    mode: str
    variant: str
    delta: int
    value: float
    n_range: tuple = None
    census: dict = None
    roots: tuple = None
    note: str = ""


def polymer_census(dc, P, N, species, roots, max_size, coeff_cap=1 << 20):
    """N_s(u; n) for each given primal carrier cell u and n <= max_size.

    Counts catalog polymers (support-connected closed chains, all closing
    coefficient assignments nonzero on the support) whose carrier contains
    u, by growing connected supports from the root cell in the chain's own
    complex.
    """
    n_dim = dc.primal.dim
    if species == "electric":
        cx, deg = dc.primal, P
        own_roots = list(roots)
    elif species == "magnetic":
        cx, deg = dc.dual, n_dim - P - 1
        own_roots = [int(dc.to_dual[P + 1][u]) for u in roots]
    else:
        raise ValueError("unknown species")
    adj = df.cell_adjacency(cx, deg, via="face")
    bnd = np.asarray(cx.boundary_matrix(deg).todense(), dtype=np.int64) % N
    out = {}
    for u, root in zip(roots, own_roots):
        counts = {n: 0 for n in range(1, max_size + 1)}
        for supp in _rooted_supports(adj, root, max_size):
            k = len(df._closed_assignments(bnd[:, list(supp)], N, coeff_cap))
            counts[len(supp)] += k
        out[int(u)] = counts
    return out


def _rooted_supports(adj, root, max_size):
    """Connected supports containing ``root``, each exactly once."""
    out = []
    stack = [((root,), sorted(adj[root]), set(adj[root]) | {root})]
    while stack:
        supp, ext, seen = stack.pop()
        out.append(tuple(sorted(supp)))
        if len(supp) >= max_size:
            continue
        for i, v in enumerate(ext):
            grown = sorted(u for u in adj[v] if u not in seen)
            stack.append((supp + (v,), ext[i + 1:] + grown,
                          seen | set(grown)))
    return out


def counting_constant(dc, P, N, species, mode="sharp", variant="auto",
                      max_size=None, roots=None, coeff_cap=1 << 20):
    """Counting constant C_s in one of three modes.

    crude:     C = (N-1) max(1, Delta^2)
    sharp:     C = (N-1) e (Delta-1), valid for Delta >= 2 (falls back to
               crude below that, noted in the report)
    empirical: smallest C >= 1 with max_u N_s(u; n) <= C^n over the
               enumerated range, from the catalog census at the given roots
    """
    adj, variant = carrier_adjacency(dc, P, species, variant)
    delta = max((len(s) for s in adj), default=0)
    n1 = N - 1
    note = ""
    if mode == "crude":
        value = n1 * max(1, delta ** 2)
    elif mode == "sharp":
        if delta >= 2:
            value = n1 * math.e * (delta - 1)
        else:
            value = n1 * max(1, delta ** 2)
            note = "degree below 2; crude value used"
    elif mode == "empirical":
        if roots is None or max_size is None:
            raise ValueError("empirical mode needs roots and max_size")
        census = polymer_census(dc, P, N, species, roots, max_size,
                                coeff_cap=coeff_cap)
        merged = {n: max(c[n] for c in census.values())
                  for n in range(1, max_size + 1)}
        value = max([1.0] + [merged[n] ** (1.0 / n) for n in merged
                             if merged[n] > 0])
        return CountingReport(species=species, mode=mode, variant=variant,
                              delta=delta, value=float(value),
                              n_range=(1, max_size), census=merged,
                              roots=tuple(int(u) for u in roots))
    else:
        raise ValueError("unknown counting mode")
    return CountingReport(species=species, mode=mode, variant=variant,
                          delta=delta, value=float(value), note=note)


# -- the low-activity region ------------------------------------------------------

@dataclass
class RegionReport:
    """C t against the threshold e^{-a}(1-e^{-a}); sup over a is 1/4."""

    ok: bool
    product: float
    a: float
    threshold: float
    margin: float
    sup_threshold: float = 0.25


def region_check(t, c, a=LOG2):
    if a <= 0:
        raise ValueError("a must be positive")
    threshold = math.exp(-a) * (1.0 - math.exp(-a))
    product = float(c) * float(t)
    return RegionReport(ok=product <= threshold, product=product, a=float(a),
                        threshold=threshold, margin=threshold - product)


def region_scan(t, c, a_values):
    return [region_check(t, c, a) for a in a_values]


@dataclass
class ActivityBounds:
    """Uniform activity and counting data for both species."""

    t_m: float
    t_e: float
    c_m: CountingReport
    c_e: CountingReport
    a_m: float = LOG2
    a_e: float = LOG2

    def t(self, species):
        return self.t_m if species == "magnetic" else self.t_e

    def c(self, species):
        return (self.c_m if species == "magnetic" else self.c_e).value

    def a(self, species):
        return self.a_m if species == "magnetic" else self.a_e

    def region(self, species):
        return region_check(self.t(species), self.c(species),
                            self.a(species))

    def geometric_ratio(self, species):
        """C t e^a, the ratio of the size-n tail series."""
        return self.c(species) * self.t(species) * math.exp(self.a(species))


def activity_bounds(dc, P, amp, mode="sharp", variant="auto", a_m=LOG2,
                    a_e=LOG2, max_size=None, roots=None):
    t_m, t_e = uniform_amplitudes(amp)
    kw = {}
    if mode == "empirical":
        kw = {"max_size": max_size, "roots": roots}
    c_m = counting_constant(dc, P, amp.N, "magnetic", mode=mode,
                            variant=variant, **kw)
    c_e = counting_constant(dc, P, amp.N, "electric", mode=mode,
                            variant=variant, **kw)
    return ActivityBounds(t_m=t_m, t_e=t_e, c_m=c_m, c_e=c_e,
                          a_m=a_m, a_e=a_e)


# -- positive majorant gas --------------------------------------------------------

def _catalog_activities(polymers, amp, activities):
    if activities is not None:
        if len(activities) != len(polymers):
            raise ValueError("activity list does not match the catalog")
        return [float(v) for v in activities]
    return [abs(df.polymer_activity(A, amp)) for A in polymers]


def _support_masks(polymers):
    masks = []
    for A in polymers:
        m = 0
        for c in A.support:
            m |= 1 << c
        masks.append(m)
    return masks


def _hardcore_sum(masks, acts, seed_mask=0, seed_value=1.0):
    """Sum of activity products over support-disjoint polymer families."""
    n = len(masks)
    total = 0.0

    def rec(start, used, prod):
        nonlocal total
        total += prod
        for i in range(start, n):
            if masks[i] & used:
                continue
            rec(i + 1, used | masks[i], prod * acts[i])

    rec(0, seed_mask, seed_value)
    return total


def majorant_partition(polymers, amp=None, activities=None):
    """Partition function of the positive support-disjoint hard-core gas."""
    if not polymers:
        return 1.0
    if len({A.species for A in polymers}) != 1:
        raise ValueError("majorant gas is built per species")
    acts = _catalog_activities(polymers, amp, activities)
    return _hardcore_sum(_support_masks(polymers), acts)


def pinned_majorant(A, polymers, amp=None, activities=None):
    """Normalized positive weight of majorant families containing A.

    Equals |rho(A)| d log Z^maj / d |rho(A)|: the sum over support-disjoint
    families containing A, divided by Z^maj.
    """
    keys = [B.key() for B in polymers]
    if A.key() not in keys:
        raise ValueError("polymer not in catalog")
    i = keys.index(A.key())
    acts = _catalog_activities(polymers, amp, activities)
    masks = _support_masks(polymers)
    z_all = _hardcore_sum(masks, acts)
    z_pin = _hardcore_sum(masks, acts, seed_mask=masks[i],
                          seed_value=acts[i])
    return z_pin / z_all


def majorant_pair(gas):
    """(Z_m^maj, Z_e^maj) of the gas catalog with bare activity moduli."""
    out = []
    for sp in ("magnetic", "electric"):
        acts = [abs(v) for v in gas.per_polymer[sp]["bare"]]
        out.append(_hardcore_sum(gas.per_polymer[sp]["masks"], acts))
    return tuple(out)


# -- occupation expectations -------------------------------------------------------

def _polymer_index(gas, A):
    for i, B in enumerate(gas.polymers[A.species]):
        if B.key() == A.key():
            return i
    raise ValueError("polymer not in catalog")


def _marked_families(gas, sp, i):
    """Family data of all complex-gas families containing polymer i.

    Uses the complex gas compatibility (supports disjoint and non-adjacent),
    seeding the recursion with the marked polymer.
    """
    pp = gas.per_polymer[sp]
    masks, exts = pp["masks"], pp["exts"]
    bares, clss, cycs = pp["bare"], pp["cls"], pp["cyc"]
    N = gas.N
    out_bare, out_cls, out_cyc = [], [], []

    def rec(start, used, bare, cls_sum, cyc_sum):
        out_bare.append(bare)
        out_cls.append(cls_sum.copy())
        out_cyc.append(cyc_sum.copy())
        for j in range(start, len(masks)):
            if j == i or masks[j] & used:
                continue
            rec(j + 1, used | exts[j], bare * bares[j],
                (cls_sum + clss[j]) % N, (cyc_sum + cycs[j]) % N)

    rec(0, exts[i], bares[i], clss[i].copy(), cycs[i].copy())
    return (np.asarray(out_bare, dtype=complex),
            np.asarray(out_cls, dtype=np.int64),
            np.asarray(out_cyc, dtype=np.int64))


def _marked_sector_value(gas, sp, marked, sector, phases):
    N = gas.N
    pref, c_m, c_e = phases
    l_m = np.asarray(sector.l_m, dtype=np.int64)
    l_e = np.asarray(sector.l_e, dtype=np.int64)
    m_bare, m_cls, m_cyc = marked
    if sp == "magnetic":
        ph_m = (m_cls @ l_m + m_cyc @ c_m) % N
        alpha = m_bare * np.exp(2j * np.pi * ph_m / N)
        ph_e = (gas.fam_cls["electric"] @ l_e
                + gas.fam_cyc["electric"] @ c_e) % N
        beta = gas.fam_bare["electric"] * np.exp(2j * np.pi * ph_e / N)
        cross = m_cyc @ gas.gram @ gas.fam_cyc["electric"].T % N
    else:
        ph_m = (gas.fam_cls["magnetic"] @ l_m
                + gas.fam_cyc["magnetic"] @ c_m) % N
        alpha = gas.fam_bare["magnetic"] * np.exp(2j * np.pi * ph_m / N)
        ph_e = (m_cls @ l_e + m_cyc @ c_e) % N
        beta = m_bare * np.exp(2j * np.pi * ph_e / N)
        cross = gas.fam_cyc["magnetic"] @ gas.gram @ m_cyc.T % N
    return complex(pref * (alpha @ (np.exp(-2j * np.pi * cross / N) @ beta)))


def _marked_all_sectors(gas, sp, marked, phases):
    """Sector table of the marked families, sharing one cross matrix."""
    N = gas.N
    pref, c_m, c_e = phases
    m_bare, m_cls, m_cyc = marked
    betam = gas.pair.hd_dual.betti
    betae = gas.pair.hd_primal.betti
    values = {}
    if sp == "magnetic":
        cross = (m_cyc @ gas.gram @ gas.fam_cyc["electric"].T) % N
        omega = np.exp(-2j * np.pi * cross / N)
        folded = {}
        for le in itertools.product(range(N), repeat=betae):
            ph = (gas.fam_cls["electric"] @ np.asarray(le, dtype=np.int64)
                  + gas.fam_cyc["electric"] @ c_e) % N
            beta = gas.fam_bare["electric"] * np.exp(2j * np.pi * ph / N)
            folded[le] = omega @ beta
        for lm in itertools.product(range(N), repeat=betam):
            ph = (m_cls @ np.asarray(lm, dtype=np.int64) + m_cyc @ c_m) % N
            alpha = m_bare * np.exp(2j * np.pi * ph / N)
            for le, vec in folded.items():
                values[df.SectorLabel(l_m=lm, l_e=le)] = complex(
                    pref * (alpha @ vec))
    else:
        cross = (gas.fam_cyc["magnetic"] @ gas.gram @ m_cyc.T) % N
        omega = np.exp(-2j * np.pi * cross / N)
        folded = {}
        for lm in itertools.product(range(N), repeat=betam):
            ph = (gas.fam_cls["magnetic"] @ np.asarray(lm, dtype=np.int64)
                  + gas.fam_cyc["magnetic"] @ c_m) % N
            alpha = gas.fam_bare["magnetic"] * np.exp(2j * np.pi * ph / N)
            folded[lm] = alpha @ omega
        for le in itertools.product(range(N), repeat=betae):
            ph = (m_cls @ np.asarray(le, dtype=np.int64) + m_cyc @ c_e) % N
            beta = m_bare * np.exp(2j * np.pi * ph / N)
            for lm, vec in folded.items():
                values[df.SectorLabel(l_m=lm, l_e=le)] = complex(
                    pref * (vec @ beta))
    return values


def occupation_expectation(A, gas, mode="sector", sector=None, bg=None):
    """Unnormalized occupation amplitude of one catalog polymer.

    Re-sums the complex gas over families containing A: the sector mode
    gives rho^{l}(A) dZ^/d rho^{l}(A), the background mode averages the
    sector values against the background characters (the fixed-background
    occupancy).
    """
    sp = A.species
    i = _polymer_index(gas, A)
    bg = zero_background(gas.dc, gas.P, gas.N) if bg is None else bg
    marked = _marked_families(gas, sp, i)
    phases = df._background_phases(gas, bg)
    if mode == "sector":
        if sector is None:
            raise ValueError("sector mode needs a sector label")
        return _marked_sector_value(gas, sp, marked, sector, phases)
    if mode != "background":
        raise ValueError("unknown occupation mode")
    values = _marked_all_sectors(gas, sp, marked, phases)
    return df.reconstruct_from_sectors(values, bg, gas.pair)


# -- tails, systole, bad weight ------------------------------------------------------

@dataclass
class TailReport:
    """Enumerated occupation tails against the geometric-series bounds."""

    species: str
    c_la: float
    ratio: float                 # C t e^a
    systole: float               # min size of class-nontrivial polymers
    tail_ok: bool
    bad_weight_ok: bool
    tail_rows: list = field(repr=False, default=None)
    bad_lhs: float = 0.0
    bad_rhs: float = float("inf")


def systole_size(gas, species):
    """Minimal size of a class-nontrivial catalog polymer (inf if none)."""
    best = float("inf")
    cls = gas.per_polymer[species]["cls"]
    for A, c in zip(gas.polymers[species], cls):
        if np.any(c % gas.N):
            best = min(best, A.size)
    return best


def tail_and_systole(gas, bounds, species, l_values=(1, 2, 3),
                     mode="background", sector=None, bg=None):
    """Check the occupation tail bounds of the enumerated catalog.

    For each carrier cell u and each L, the total |occupation| of polymers
    through u with size >= L must lie below C^la (C t e^a)^L / (1 - C t e^a);
    class-nontrivial polymers are compared against the systole-scaled bound
    with the extra carrier-count factor.
    """
    x = bounds.geometric_ratio(species)
    if x >= 1.0:
        raise ValueError("geometric series diverges: C t e^a >= 1")
    z_m, z_e = majorant_pair(gas)
    c_la = z_m * z_e
    occ = {}
    for A in gas.polymers[species]:
        occ[A.key()] = abs(occupation_expectation(
            A, gas, mode=mode, sector=sector, bg=bg))
    by_carrier = {}
    for A in gas.polymers[species]:
        for u in set(A.carrier):
            by_carrier.setdefault(u, []).append(A)
    rows = []
    tail_ok = True
    for u, through in sorted(by_carrier.items()):
        for L in l_values:
            lhs = sum(occ[A.key()] for A in through if A.size >= L)
            rhs = c_la * x ** L / (1.0 - x)
            ok = lhs <= rhs * (1.0 + 1e-12)
            tail_ok = tail_ok and ok
            rows.append((int(u), int(L), lhs, rhs, ok))
    sys_s = systole_size(gas, species)
    n_car = gas.dc.primal.num_cells(carrier_degree(gas.P, species))
    bad_lhs = sum(occ[A.key()]
                  for A, c in zip(gas.polymers[species],
                                  gas.per_polymer[species]["cls"])
                  if np.any(c % gas.N))
    if math.isinf(sys_s):
        bad_rhs = float("inf")
        bad_ok = bad_lhs == 0.0
    else:
        bad_rhs = c_la * n_car * x ** sys_s / (1.0 - x)
        bad_ok = bad_lhs <= bad_rhs * (1.0 + 1e-12)
    return TailReport(species=species, c_la=c_la, ratio=x, systole=sys_s,
                      tail_ok=tail_ok, bad_weight_ok=bad_ok, tail_rows=rows,
                      bad_lhs=bad_lhs, bad_rhs=bad_rhs)


# -- Fernandez-Procacci neighborhood check --------------------------------------------

@dataclass
class FPReport:
    """Exact N*_A values against the sitewise bounds."""

    species: str
    a: float
    sitewise_sum: float          # S(a), max over carrier cells
    sitewise_ok: bool            # S(a) <= e^a - 1
    site_bound_ok: bool          # N*_A <= (1 + S(a))^{|A|} for every A
    exp_bound_ok: bool           # N*_A <= e^{a |A|} (when sitewise_ok)
    criterion_ok: bool           # z(A) N*_A <= mu(A) for every A
    max_star: float = 0.0


def fp_neighborhood_check(polymers, amp, a=LOG2, activities=None):
    """Exact Fernandez-Procacci data for one species' majorant gas.

    N*_A(mu) sums mu over mutually disjoint families of polymers that all
    overlap A, with mu(B) = |rho(B)| e^{a |B|}.  Verifies the chain
    N*_A <= (1 + S(a))^{|A|} <= e^{a |A|} (the last step when the sitewise
    condition S(a) <= e^a - 1 holds), which is the criterion
    z(A) N*_A <= mu(A).
    """
    if not polymers:
        return FPReport(species="", a=a, sitewise_sum=0.0, sitewise_ok=True,
                        site_bound_ok=True, exp_bound_ok=True,
                        criterion_ok=True)
    species = polymers[0].species
    if any(B.species != species for B in polymers):
        raise ValueError("FP check is built per species")
    acts = _catalog_activities(polymers, amp, activities)
    mus = [z * math.exp(a * A.size) for z, A in zip(acts, polymers)]
    masks = _support_masks(polymers)
    site_mu = {}
    for A, mu in zip(polymers, mus):
        for u in set(A.carrier):
            site_mu[u] = site_mu.get(u, 0.0) + mu
    s_a = max(site_mu.values(), default=0.0)
    sitewise_ok = s_a <= math.exp(a) - 1.0 + 1e-12
    site_bound_ok = True
    exp_bound_ok = True
    criterion_ok = True
    max_star = 0.0
    for i, A in enumerate(polymers):
        overlapping = [j for j in range(len(polymers))
                       if masks[j] & masks[i]]
        star = _hardcore_sum([masks[j] for j in overlapping],
                             [mus[j] for j in overlapping])
        max_star = max(max_star, star)
        if star > (1.0 + s_a) ** A.size * (1.0 + 1e-12):
            site_bound_ok = False
        if star > math.exp(a * A.size) * (1.0 + 1e-12):
            exp_bound_ok = False
        if acts[i] * star > mus[i] * (1.0 + 1e-12):
            criterion_ok = False
    return FPReport(species=species, a=a, sitewise_sum=s_a,
                    sitewise_ok=sitewise_ok, site_bound_ok=site_bound_ok,
                    exp_bound_ok=exp_bound_ok and sitewise_ok,
                    criterion_ok=criterion_ok, max_star=max_star)


# -- CSV reports ------------------------------------------------------------------

def census_csv(report):
    """CSV table of a counting census: one row per size n."""
    if report.census is None:
        raise ValueError("report carries no census")
    lines = ["species,variant,n,max_count,c_value,c_pow_n,within"]
    for n in sorted(report.census):
        cnt = report.census[n]
        bound = report.value ** n
        lines.append(f"{report.species},{report.variant},{n},{cnt},"
                     f"{report.value:.12g},{bound:.12g},"
                     f"{int(cnt <= bound * (1 + 1e-12))}")
    return "\n".join(lines) + "\n"


def region_csv(entries):
    """CSV table of region checks; entries are (label, RegionReport)."""
    lines = ["label,product,a,threshold,margin,ok"]
    for label, rep in entries:
        lines.append(f"{label},{rep.product:.12g},{rep.a:.12g},"
                     f"{rep.threshold:.12g},{rep.margin:.12g},{int(rep.ok)}")
    return "\n".join(lines) + "\n"
