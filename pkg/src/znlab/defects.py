"""Closed-defect and polymer representations of the normalized amplitude.

Expanding every curvature weight around its flat value and every on-site
weight in characters rewrites the background partition sum as a gas of closed
magnetic defect chains (dual degree n-P-1) and closed electric defect chains
(primal degree P).  Only chains in the homology classes of the background
survive; each pair is weighted by products of local amplitudes and by the
linking phase of the two boundary differences.  Decomposing defects into
support-connected components turns the gas into a two-species polymer gas,
and the homology constraints Fourier-resolve into sector amplitudes.

Connectivity convention used throughout: two support cells are adjacent when
they share a codimension-one face in the chain's own complex, and two
same-species polymers are compatible only when their supports are disjoint
*and* non-adjacent.  With that pairing, compatible families of connected
closed chains are in exact bijection with closed chains (components of a
closed chain are closed, and no closed chain splits into a compatible
family in two ways).  Requiring only disjointness would double count chains
whose components touch at lower-dimensional cells.
"""

from __future__ import annotations

import functools
import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import fieldmath as fm
from .cells import FieldChain
from .spacetime import LocalWeights, zero_background

DEFAULT_CAP = 1 << 22


# -- local defect amplitudes ---------------------------------------------------

@dataclass
class DefectAmplitudes:
    """Per-cell defect amplitudes: curvature ratios and on-site Fourier ratios.

    ``varpi[c, m] = W_c(m)/W_c(0)`` on (P+1)-cells and
    ``upsilon[u, e] = Vhat_u(-e)/Vhat_u(0)`` on P-cells, so both tables are
    exactly 1 in the zero column.
    """

    cx: object
    P: int
    N: int
    varpi: np.ndarray = field(repr=False)
    upsilon: np.ndarray = field(repr=False)
    w_zero: np.ndarray = field(repr=False)
    v_hat_zero: np.ndarray = field(repr=False)

    def norm_constant(self):
        """prod_c W_c(0) * prod_u Vhat_u(0)/sqrt(N): the vacuum normalization."""
        return complex(np.prod(self.w_zero)
                       * np.prod(self.v_hat_zero / math.sqrt(self.N)))

    def reconstructed_weights(self):
        """Weight tables rebuilt from the amplitudes; equals the input."""
        W = self.w_zero[:, None] * self.varpi
        V = ((self.v_hat_zero / math.sqrt(self.N))[:, None]
             * np.fft.fft(self.upsilon, axis=1))
        return LocalWeights(cx=self.cx, P=self.P, N=self.N, W=W, V=V)


def defect_amplitudes(w):
    """Normalized local defect amplitudes of a weight table.

    The curvature table is divided by its flat value; the on-site table is
    transformed with the symmetric DFT and divided by its zero mode, with the
    argument negated so that label e weights the defect chain entry e.
    """
    N = w.N
    w_zero = w.W[:, 0].copy()
    v_hat = fm.dft(w.V)
    v_hat_zero = v_hat[:, 0].copy()
    if np.any(w_zero == 0) or np.any(v_hat_zero == 0):
        raise ValueError("vanishing zero-mode weight")
    neg = (-np.arange(N)) % N
    varpi = w.W / w_zero[:, None]
    upsilon = v_hat[:, neg] / v_hat_zero[:, None]
    return DefectAmplitudes(cx=w.cx, P=w.P, N=w.N, varpi=varpi,
                            upsilon=upsilon, w_zero=w_zero,
                            v_hat_zero=v_hat_zero)


# -- support connectivity --------------------------------------------------------

def cell_adjacency(cx, p, via="face"):
    """Neighbor sets of degree-p cells: shared (p-1)-face or (p+1)-coface."""
    n_c = cx.num_cells(p)
    if via == "face":
        inc = cx.boundary_matrix(p).tocoo()
        hubs, cells = inc.row, inc.col
    elif via == "coface":
        inc = cx.boundary_matrix(p + 1).tocoo()
        hubs, cells = inc.col, inc.row
    else:
        raise ValueError("unknown adjacency variant")
    members = defaultdict(list)
    for hub, c in zip(hubs, cells):
        members[int(hub)].append(int(c))
    adj = [set() for _ in range(n_c)]
    for group in members.values():
        for a in group:
            adj[a].update(group)
    return [frozenset(s - {i}) for i, s in enumerate(adj)]


def _connected_supports(adj, max_size):
    """Connected supports as sorted tuples, each enumerated exactly once.

    Grown from their minimal cell; candidates are taken in a fixed order and
    excluded from later branches, and cells already adjacent to the grown set
    are never re-added, so no support repeats.
    """
    out = []
    for root in range(len(adj)):
        ext0 = sorted(u for u in adj[root] if u > root)
        stack = [((root,), ext0, set(adj[root]) | {root})]
        while stack:
            S, ext, seen = stack.pop()
            out.append(tuple(sorted(S)))
            if len(S) >= max_size:
                continue
            for i, v in enumerate(ext):
                grown = sorted(u for u in adj[v] if u > root and u not in seen)
                stack.append((S + (v,), ext[i + 1:] + grown,
                              seen | set(grown)))
    return out


def _closed_assignments(bnd_cols, N, coeff_cap):
    """Rows x with bnd_cols @ x = 0 mod N and every entry nonzero."""
    k = bnd_cols.shape[1]
    if fm.is_prime(N):
        kern = fm.fn_kernel(bnd_cols % N, N)
        if kern.shape[1] == 0:
            return np.zeros((0, k), dtype=np.int64)
        if N ** kern.shape[1] > coeff_cap:
            raise ValueError("coefficient enumeration exceeds cap")
        combos = fm.span_enumerate(kern, N)
    else:
        if N ** k > coeff_cap:
            raise ValueError("coefficient enumeration exceeds cap")
        combos = np.stack(np.meshgrid(*([np.arange(N)] * k), indexing="ij"),
                          axis=-1).reshape(-1, k)
        combos = combos[~np.any(bnd_cols @ combos.T % N, axis=0)]
    return combos[np.all(combos != 0, axis=1)]


def support_components(chain):
    """Restrictions of a chain to the connected components of its support."""
    adj = cell_adjacency(chain.cx, chain.degree, via="face")
    left = set(int(i) for i in np.flatnonzero(chain.data % chain.N))
    parts = []
    while left:
        comp = {left.pop()}
        frontier = list(comp)
        while frontier:
            c = frontier.pop()
            for u in adj[c]:
                if u in left:
                    left.remove(u)
                    comp.add(u)
                    frontier.append(u)
        data = np.zeros_like(chain.data)
        idx = sorted(comp)
        data[idx] = chain.data[idx] % chain.N
        parts.append(FieldChain(chain.cx, chain.degree, chain.N, data))
    return parts


# -- polymers ------------------------------------------------------------------

@dataclass
class Polymer:
    """Support-connected closed chain of one species.

    ``chain`` lives on the dual complex (degree n-P-1) for magnetic polymers
    and on the primal complex (degree P) for electric ones.  ``carrier``
    lists the primal carrier cells aligned with ``support`` (the dual support
    transported cellwise for magnetic polymers, the support itself for
    electric ones); the polymer size is the carrier cardinality.
    """

    species: str
    chain: FieldChain
    support: tuple
    carrier: tuple
    size: int
    activity: complex = None
    class_coords: np.ndarray = None

    def coefficients(self):
        return tuple(int(self.chain.data[i]) for i in self.support)

    def key(self):
        return (self.species, self.support, self.coefficients())


def enumerate_polymers(dc, P, N, species, max_size, coeff_cap=1 << 20):
    """Every support-connected closed chain with support size <= max_size.

    Supports are grown once from their minimal cell over the shared-face
    adjacency, so each (support, coefficients) pair appears exactly once;
    coefficients run over all closing assignments that are nonzero on every
    support cell.
    """
    n = dc.primal.dim
    if species == "electric":
        cx, deg = dc.primal, P
    elif species == "magnetic":
        cx, deg = dc.dual, n - P - 1
    else:
        raise ValueError("unknown species")
    if max_size < 1:
        return []
    adj = cell_adjacency(cx, deg, via="face")
    bnd = np.asarray(cx.boundary_matrix(deg).todense(), dtype=np.int64) % N
    out = []
    for S in _connected_supports(adj, max_size):
        cols = list(S)
        for coeffs in _closed_assignments(bnd[:, cols], N, coeff_cap):
            data = np.zeros(cx.num_cells(deg), dtype=np.int64)
            data[cols] = coeffs
            chain = FieldChain(cx, deg, N, data)
            if species == "magnetic":
                carrier = tuple(int(dc.to_primal[deg][i]) for i in S)
            else:
                carrier = S
            out.append(Polymer(species=species, chain=chain, support=S,
                               carrier=carrier, size=len(S)))
    return out


def _bare_activity(A, amp):
    table = amp.varpi if A.species == "magnetic" else amp.upsilon
    cells = A.carrier if A.species == "magnetic" else A.support
    val = complex(1.0)
    for c, m in zip(cells, A.coefficients()):
        val *= table[c, m]
    return val


def polymer_activity(A, amp, bg=None, sector=None, pair=None):
    """One-polymer activity: product of local amplitudes over the carrier,
    dressed by the sector character of its class and the linking phase with
    the opposite-species background when those are supplied."""
    bare = _bare_activity(A, amp)
    if sector is None and bg is None:
        return bare
    if pair is None:
        raise ValueError("sector or background phases require a linking pair")
    N = amp.N
    ph = 0
    if A.species == "magnetic":
        if sector is not None:
            l_m = np.asarray(sector.l_m, dtype=np.int64)
            if l_m.shape != (pair.hd_dual.betti,):
                raise ValueError("sector label has wrong magnetic length")
            ph += int(l_m @ pair.hd_dual.homology_class(A.chain.data))
        if bg is not None:
            ph += fm.linking(pair, A.chain, bg.electric).residue
    else:
        if sector is not None:
            l_e = np.asarray(sector.l_e, dtype=np.int64)
            if l_e.shape != (pair.hd_primal.betti,):
                raise ValueError("sector label has wrong electric length")
            ph += int(l_e @ pair.hd_primal.homology_class(A.chain.data))
        if bg is not None:
            ph += fm.linking(pair, bg.magnetic, A.chain).residue
    return bare * np.exp(2j * np.pi * (ph % N) / N)


def polymers_to_jsonl(polymers, amp=None, pair=None):
    """One JSON record per polymer (species, support, coefficients, size,
    and, when amp/pair are given, |activity| and class coordinates)."""
    lines = []
    for A in polymers:
        rec = {
            "species": A.species,
            "support": [int(i) for i in A.support],
            "carrier": sorted(int(i) for i in A.carrier),
            "coefficients": [int(v) for v in A.coefficients()],
            "size": int(A.size),
        }
        if amp is not None:
            rec["abs_activity"] = abs(_bare_activity(A, amp))
        if pair is not None:
            hd = pair.hd_dual if A.species == "magnetic" else pair.hd_primal
            rec["class"] = [int(v) for v in hd.homology_class(A.chain.data)]
        lines.append(json.dumps(rec, sort_keys=True))
    return "\n".join(lines) + ("\n" if lines else "")


# -- digit-lattice helpers -------------------------------------------------------

def _digit_blocks(N, k, total, block):
    """Yield (start, digits) with digits of shape (m, k) in C order."""
    for start in range(0, total, block):
        stop = min(start + block, total)
        if k == 0:
            yield start, np.zeros((stop - start, 0), dtype=np.int64)
            continue
        digits = np.stack(np.unravel_index(np.arange(start, stop),
                                           (N,) * k), axis=1)
        yield start, digits.astype(np.int64)


def _mixed_radix_phase(u, N):
    """Array over all digit tuples t (C order) of (t . u) mod N."""
    k = len(u)
    if k == 0:
        return np.zeros(1, dtype=np.int64)
    axes = [(int(v) % N) * np.arange(N) % N for v in u]
    acc = functools.reduce(lambda a, b: np.add.outer(a, b) % N, axes)
    return acc.ravel()


def _coset_weights(table, gather_idx, base, basis, N, block):
    """prod_cell table[cell, chain_cell] over the coset base + span(basis).

    ``gather_idx`` reorders chain entries into the table's cell order (the
    dual-to-primal transport for magnetic chains, identity for electric).
    Returns the full weight vector over N^k coset elements, C-digit order.
    """
    k = basis.shape[1]
    total = N ** k
    cols = np.arange(len(gather_idx))
    out = np.empty(total, dtype=complex)
    for start, digits in _digit_blocks(N, k, total, block):
        chains = (base[None, :] + digits @ basis.T) % N
        gathered = chains[:, gather_idx]
        out[start:start + len(digits)] = np.prod(
            table[cols[None, :], gathered], axis=1)
    return out


# -- closed-defect gas -----------------------------------------------------------

def _background_or_zero(dc, P, N, bg):
    return zero_background(dc, P, N) if bg is None else bg


def _boundary_generators(cx, p, N):
    high = np.asarray(cx.boundary_matrix(p + 1).todense(), dtype=np.int64) % N
    return high


def closed_defect_sum(dc, amp, bg=None, cap=DEFAULT_CAP, pair=None,
                      block=1 << 16):
    """Sum over closed defect pairs in the background classes.

    Enumerates every magnetic chain in [q_m] (dual degree n-P-1) and every
    electric chain in [q_e] (primal degree P); each pair contributes the
    product of its local amplitude weights times the linking phase of its
    boundary differences.  That phase involves only boundaries, so it is
    canonical and the sum is defined for every modulus; prime moduli use
    basis digits and an FFT contraction, composite moduli enumerate the
    boundary subgroups directly.  ``cap`` bounds each enumerated side.
    """
    X = dc.primal
    n = X.dim
    P, N = amp.P, amp.N
    r = n - P - 1
    bg = _background_or_zero(dc, P, N, bg)
    qm = bg.magnetic.data % N
    qe = bg.electric.data % N
    theta_idx = dc.to_dual[P + 1]
    if fm.is_prime(N):
        if pair is None:
            hd_m = fm.homology_data(dc.dual, r, N)
            hd_e = fm.homology_data(X, P, N)

            def link(mu, nu):
                return fm.linking(dc, mu, nu).residue
        else:
            _validate_pair(pair, dc, P, N)
            hd_m, hd_e = pair.hd_dual, pair.hd_primal

            def link(mu, nu):
                return fm.linking(pair, mu, nu).residue

        Bm, Be = hd_m.boundary_basis, hd_e.boundary_basis
        km, ke = Bm.shape[1], Be.shape[1]
        if N ** km > cap or N ** ke > cap:
            raise ValueError("defect coset enumeration exceeds cap")
        L = np.zeros((km, ke), dtype=np.int64)
        for i in range(km):
            mu = FieldChain(dc.dual, r, N, Bm[:, i])
            for j in range(ke):
                L[i, j] = link(mu, FieldChain(X, P, N, Be[:, j]))
        wt_e = _coset_weights(amp.upsilon, np.arange(X.num_cells(P)),
                              qe, Be, N, block)
        Fe = np.fft.fftn(wt_e.reshape((N,) * ke)).ravel()
        acc = 0.0 + 0.0j
        cols = np.arange(X.num_cells(P + 1))
        for start, digits in _digit_blocks(N, km, N ** km, block):
            chains = (qm[None, :] + digits @ Bm.T) % N
            wt = np.prod(amp.varpi[cols[None, :], chains[:, theta_idx]],
                         axis=1)
            freq = digits @ L % N
            if ke == 0:
                idx = np.zeros(len(digits), dtype=np.int64)
            else:
                idx = np.ravel_multi_index(freq.T, (N,) * ke)
            acc += wt @ Fe[idx]
        return complex(acc)

    # Composite modulus: enumerate the boundary subgroups and fill each
    # electric difference once; the canonical linking is the transported
    # magnetic difference paired with that filling.
    Dm = fm.subgroup_closure(_boundary_generators(dc.dual, r, N), N, cap=cap)
    De = fm.subgroup_closure(_boundary_generators(X, P, N), N, cap=cap)
    bnd_high = np.asarray(X.boundary_matrix(P + 1).todense(), dtype=np.int64)
    fills = np.zeros((len(De), X.num_cells(P + 1)), dtype=np.int64)
    for j, delta in enumerate(De):
        x = fm.zn_solve(bnd_high, delta, N)
        if x is None:
            raise AssertionError("boundary subgroup element has no filling")
        fills[j] = x
    wt_e = np.prod(amp.upsilon[np.arange(X.num_cells(P))[None, :],
                               (qe[None, :] + De) % N], axis=1)
    cols = np.arange(X.num_cells(P + 1))
    acc = 0.0 + 0.0j
    for start in range(0, len(Dm), max(1, block // max(1, len(De)))):
        stop = min(start + max(1, block // max(1, len(De))), len(Dm))
        chains = (qm[None, :] + Dm[start:stop]) % N
        wt_m = np.prod(amp.varpi[cols[None, :], chains[:, theta_idx]], axis=1)
        theta = Dm[start:stop][:, theta_idx]
        phase = theta @ fills.T % N
        acc += wt_m @ (np.exp(-2j * np.pi * phase / N) @ wt_e)
    return complex(acc)


def _validate_pair(pair, dc, P, N):
    if pair.dc is not dc:
        raise ValueError("linking pair built on a different correspondence")
    if pair.hd_primal.p != P or pair.hd_primal.N != N:
        raise ValueError("linking pair degree or modulus mismatch")


# -- sector machinery ------------------------------------------------------------

@dataclass(frozen=True)
class SectorLabel:
    """Character labels on the magnetic and electric homology groups."""

    l_m: tuple
    l_e: tuple


def all_sector_labels(pair):
    N = pair.hd_primal.N
    grids_m = itertools.product(range(N), repeat=pair.hd_dual.betti)
    labels = []
    for lm in grids_m:
        for le in itertools.product(range(N), repeat=pair.hd_primal.betti):
            labels.append(SectorLabel(l_m=lm, l_e=le))
    return labels


def _cycle_gram(pair):
    """Linking values of the two cycle bases under the chosen pairing."""
    dc = pair.dc
    N = pair.hd_primal.N
    P = pair.hd_primal.p
    r = dc.primal.dim - P - 1
    Zm, Ze = pair.hd_dual.cycle_basis, pair.hd_primal.cycle_basis
    L = np.zeros((Zm.shape[1], Ze.shape[1]), dtype=np.int64)
    for i in range(Zm.shape[1]):
        mu = FieldChain(dc.dual, r, N, Zm[:, i])
        for j in range(Ze.shape[1]):
            L[i, j] = fm.linking(pair, mu,
                                 FieldChain(dc.primal, P, N, Ze[:, j])).residue
    return L


def _class_map(hd):
    """Matrix sending cycle-basis digits to homology class coordinates."""
    cols = [hd.homology_class(hd.cycle_basis[:, i])
            for i in range(hd.cycle_basis.shape[1])]
    if not cols:
        return np.zeros((hd.betti, 0), dtype=np.int64)
    return np.stack(cols, axis=1) % hd.N


@dataclass
class PolymerGas:
    """Prepared same-species family data for sector amplitudes.

    Families are all pairwise-compatible subsets of the polymer list
    (supports disjoint and non-adjacent), stored as bare activity products
    plus class and cycle-coordinate sums; the cross matrix holds the linking
    of the two family total chains under the chosen pairing.
    """

    dc: object
    P: int
    N: int
    amp: DefectAmplitudes
    pair: object
    polymers: dict
    fam_bare: dict
    fam_cls: dict
    fam_cyc: dict
    cross: np.ndarray = field(repr=False)
    gram: np.ndarray = field(repr=False)
    per_polymer: dict = field(default=None, repr=False)

    def sector(self, sector, bg=None):
        return _gas_sector_value(self, sector, bg)

    def all_sectors(self, bg=None):
        bg = _background_or_zero(self.dc, self.P, self.N, bg)
        values = {}
        pref, c_m, c_e = _background_phases(self, bg)
        betam, betae = self.pair.hd_dual.betti, self.pair.hd_primal.betti
        omega_cross = np.exp(-2j * np.pi * self.cross / self.N)
        betas = {}
        for le in itertools.product(range(self.N), repeat=betae):
            ph = (self.fam_cls["electric"] @ np.asarray(le, dtype=np.int64)
                  + self.fam_cyc["electric"] @ c_e) % self.N
            beta = self.fam_bare["electric"] * np.exp(2j * np.pi * ph / self.N)
            betas[le] = omega_cross @ beta
        for lm in itertools.product(range(self.N), repeat=betam):
            ph = (self.fam_cls["magnetic"] @ np.asarray(lm, dtype=np.int64)
                  + self.fam_cyc["magnetic"] @ c_m) % self.N
            alpha = self.fam_bare["magnetic"] * np.exp(2j * np.pi * ph / self.N)
            for le, vec in betas.items():
                values[SectorLabel(l_m=lm, l_e=le)] = pref * (alpha @ vec)
        return values


def _background_phases(gas, bg):
    """Prefactor omega^{-Lk(q_m,q_e)} and per-cycle-digit background terms."""
    N = gas.N
    a_qm = fm.fn_solve(gas.pair.hd_dual.cycle_basis, bg.magnetic.data, N)
    a_qe = fm.fn_solve(gas.pair.hd_primal.cycle_basis, bg.electric.data, N)
    if a_qm is None or a_qe is None:
        raise ValueError("background is not a cycle")
    pref = np.exp(-2j * np.pi
                  * fm.linking(gas.pair, bg.magnetic, bg.electric).residue / N)
    c_m = gas.gram @ a_qe % N        # Lk(basis_m_i, q_e)
    c_e = a_qm @ gas.gram % N        # Lk(q_m, basis_e_j)
    return pref, c_m, c_e


def polymer_gas(dc, P, amp, pair, polymers=None, max_size=None,
                activity_override=None):
    """Build the family tables of the two-species gas.

    With ``polymers=None`` the full catalogs are enumerated (up to
    ``max_size``, default the whole cell count, which makes the gas exact).
    ``activity_override`` replaces the bare activity of selected polymers,
    keyed by :meth:`Polymer.key`.
    """
    N = amp.N
    _validate_pair(pair, dc, P, N)
    n = dc.primal.dim
    if polymers is None:
        polymers = []
        for sp, full in (("magnetic", dc.dual.num_cells(n - P - 1)),
                         ("electric", dc.primal.num_cells(P))):
            polymers.extend(enumerate_polymers(
                dc, P, N, sp, full if max_size is None else max_size))
    override = activity_override or {}
    by_species = {"magnetic": [], "electric": []}
    for A in polymers:
        by_species[A.species].append(A)
    gram = _cycle_gram(pair)
    hd = {"magnetic": pair.hd_dual, "electric": pair.hd_primal}
    cx = {"magnetic": dc.dual, "electric": dc.primal}
    deg = {"magnetic": n - P - 1, "electric": P}
    fam_bare, fam_cls, fam_cyc = {}, {}, {}
    per_polymer = {}
    for sp in ("magnetic", "electric"):
        adj = cell_adjacency(cx[sp], deg[sp], via="face")
        supp_masks, ext_masks, bares, clss, cycs = [], [], [], [], []
        for A in by_species[sp]:
            mask = 0
            ext = 0
            for c in A.support:
                mask |= 1 << c
                ext |= 1 << c
                for u in adj[c]:
                    ext |= 1 << u
            supp_masks.append(mask)
            ext_masks.append(ext)
            bares.append(override.get(A.key(), _bare_activity(A, amp)))
            cls = hd[sp].homology_class(A.chain.data)
            A.class_coords = cls
            A.activity = bares[-1]
            clss.append(cls)
            coords = fm.fn_solve(hd[sp].cycle_basis, A.chain.data, N)
            cycs.append(coords)
        fam_bare[sp], fam_cls[sp], fam_cyc[sp] = _families(
            supp_masks, ext_masks, bares, clss, cycs,
            hd[sp].betti, hd[sp].cycle_basis.shape[1], N)
        per_polymer[sp] = {
            "masks": supp_masks,
            "exts": ext_masks,
            "bare": np.asarray(bares, dtype=complex),
            "cls": (np.asarray(clss, dtype=np.int64)
                    .reshape(-1, hd[sp].betti)),
            "cyc": (np.asarray(cycs, dtype=np.int64)
                    .reshape(-1, hd[sp].cycle_basis.shape[1])),
        }
    cross = fam_cyc["magnetic"] @ gram @ fam_cyc["electric"].T % N
    return PolymerGas(dc=dc, P=P, N=N, amp=amp, pair=pair,
                      polymers=by_species, fam_bare=fam_bare,
                      fam_cls=fam_cls, fam_cyc=fam_cyc,
                      cross=cross, gram=gram, per_polymer=per_polymer)


def _families(supp_masks, ext_masks, bares, clss, cycs, betti, kz, N):
    """All pairwise-compatible polymer families (including the empty one)."""
    n = len(supp_masks)
    out_bare, out_cls, out_cyc = [], [], []

    def rec(start, used_ext, bare, cls_sum, cyc_sum):
        out_bare.append(bare)
        out_cls.append(cls_sum.copy())
        out_cyc.append(cyc_sum.copy())
        for i in range(start, n):
            if supp_masks[i] & used_ext:
                continue
            rec(i + 1, used_ext | ext_masks[i], bare * bares[i],
                (cls_sum + clss[i]) % N, (cyc_sum + cycs[i]) % N)

    rec(0, 0, complex(1.0), np.zeros(betti, dtype=np.int64),
        np.zeros(kz, dtype=np.int64))
    return (np.asarray(out_bare, dtype=complex),
            np.asarray(out_cls, dtype=np.int64).reshape(-1, betti),
            np.asarray(out_cyc, dtype=np.int64).reshape(-1, kz))


def _gas_sector_value(gas, sector, bg=None):
    N = gas.N
    bg = _background_or_zero(gas.dc, gas.P, N, bg)
    l_m = np.asarray(sector.l_m, dtype=np.int64)
    l_e = np.asarray(sector.l_e, dtype=np.int64)
    if l_m.shape != (gas.pair.hd_dual.betti,):
        raise ValueError("sector label has wrong magnetic length")
    if l_e.shape != (gas.pair.hd_primal.betti,):
        raise ValueError("sector label has wrong electric length")
    pref, c_m, c_e = _background_phases(gas, bg)
    ph_m = (gas.fam_cls["magnetic"] @ l_m
            + gas.fam_cyc["magnetic"] @ c_m) % N
    ph_e = (gas.fam_cls["electric"] @ l_e
            + gas.fam_cyc["electric"] @ c_e) % N
    alpha = gas.fam_bare["magnetic"] * np.exp(2j * np.pi * ph_m / N)
    beta = gas.fam_bare["electric"] * np.exp(2j * np.pi * ph_e / N)
    omega_cross = np.exp(-2j * np.pi * gas.cross / N)
    return complex(pref * (alpha @ (omega_cross @ beta)))


def sector_amplitude(polymers, amp=None, bg=None, sector=None, pair=None,
                     max_size=None):
    """Two-species gas amplitude of one sector.

    ``polymers`` may be a prebuilt :class:`PolymerGas` or a polymer list;
    same-species families must be support-disjoint and non-adjacent, and
    every magnetic/electric pair contributes its linking phase.
    """
    if sector is None:
        raise ValueError("sector label required")
    if isinstance(polymers, PolymerGas):
        return _gas_sector_value(polymers, sector, bg)
    if amp is None or pair is None:
        raise ValueError("building a gas from a polymer list needs amp and pair")
    gas = polymer_gas(pair.dc, pair.hd_primal.p, amp, pair,
                      polymers=polymers, max_size=max_size)
    return _gas_sector_value(gas, sector, bg)


def sector_amplitudes_exact(dc, amp, bg=None, pair=None, cap=DEFAULT_CAP,
                            block=1 << 16):
    """Sector amplitudes by direct enumeration of the two cycle spaces.

    Equal to the polymer-family gas (compatible families of connected closed
    chains biject with closed chains) but scaling with the cycle-space size
    instead of the polymer count; used on instances whose full polymer
    catalog is out of reach.
    """
    X = dc.primal
    n = X.dim
    P, N = amp.P, amp.N
    if pair is None:
        pair = fm.linking_pair(dc, P, N)
    _validate_pair(pair, dc, P, N)
    bg = _background_or_zero(dc, P, N, bg)
    hd_m, hd_e = pair.hd_dual, pair.hd_primal
    Zm, Ze = hd_m.cycle_basis, hd_e.cycle_basis
    km, ke = Zm.shape[1], Ze.shape[1]
    if N ** km > cap or N ** ke > cap:
        raise ValueError("cycle-space enumeration exceeds cap")
    gram = _cycle_gram(pair)
    cls_m = _class_map(hd_m)
    cls_e = _class_map(hd_e)
    a_qm = fm.fn_solve(Zm, bg.magnetic.data, N)
    a_qe = fm.fn_solve(Ze, bg.electric.data, N)
    pref = np.exp(-2j * np.pi
                  * fm.linking(pair, bg.magnetic, bg.electric).residue / N)
    c_m = gram @ a_qe % N
    c_e = a_qm @ gram % N

    zero_m = np.zeros(dc.dual.num_cells(n - P - 1), dtype=np.int64)
    zero_e = np.zeros(X.num_cells(P), dtype=np.int64)
    wt_m = _coset_weights(amp.varpi, dc.to_dual[P + 1], zero_m, Zm, N, block)
    wt_e = _coset_weights(amp.upsilon, np.arange(X.num_cells(P)), zero_e,
                          Ze, N, block)

    # frequency index of every magnetic digit tuple, built once
    idx = np.empty(N ** km, dtype=np.int64)
    for start, digits in _digit_blocks(N, km, N ** km, block):
        freq = digits @ gram % N
        if ke == 0:
            idx[start:start + len(digits)] = 0
        else:
            idx[start:start + len(digits)] = np.ravel_multi_index(
                freq.T, (N,) * ke)

    values = {}
    gathered = {}
    for le in itertools.product(range(N), repeat=hd_e.betti):
        u_e = (cls_e.T @ np.asarray(le, dtype=np.int64) + c_e) % N
        wte = wt_e * np.exp(2j * np.pi * _mixed_radix_phase(u_e, N) / N)
        Fe = np.fft.fftn(wte.reshape((N,) * ke)).ravel()
        gathered[le] = Fe[idx]
    for lm in itertools.product(range(N), repeat=hd_m.betti):
        u_m = (cls_m.T @ np.asarray(lm, dtype=np.int64) + c_m) % N
        wtm = wt_m * np.exp(2j * np.pi * _mixed_radix_phase(u_m, N) / N)
        for le, vec in gathered.items():
            values[SectorLabel(l_m=lm, l_e=le)] = complex(pref * (wtm @ vec))
    return values


def reconstruct_from_sectors(sector_values, bg, pair):
    """Average of the sector amplitudes against the background characters."""
    N = pair.hd_primal.N
    betam, betae = pair.hd_dual.betti, pair.hd_primal.betti
    if len(sector_values) != N ** betam * N ** betae:
        raise ValueError("missing sectors")
    cls_qm = pair.hd_dual.homology_class(bg.magnetic.data)
    cls_qe = pair.hd_primal.homology_class(bg.electric.data)
    total = 0.0 + 0.0j
    for sec, val in sector_values.items():
        ph = (int(np.asarray(sec.l_m, dtype=np.int64) @ cls_qm)
              + int(np.asarray(sec.l_e, dtype=np.int64) @ cls_qe)) % N
        total += np.exp(-2j * np.pi * ph / N) * val
    return complex(total / (N ** betam * N ** betae))
