"""Cubical cell complexes on periodic lattices.

A complex here is always a product of discrete circles: the d-torus with L
sites per axis, or its "suspension" (product with an extra circle of M time
steps, used for Trotter slicing).  Cells are unit cubes identified by a base
vertex and the subset of axes they extend along.  Incidence numbers come from
the product boundary rule with the increasing-axis orientation; opposite
contributions on coincident faces are accumulated, so axes of period 1 and 2
are handled correctly (period-2 tori have doubled edges between neighbours;
tests that need multiplicity-one adjacency should use L >= 3).

The dual complex is the half-shifted lattice.  Its orientations are not
hard-coded: they are solved cell-by-cell from the requirement that the
correspondence preserve incidence numbers, then verified exhaustively.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

DEFAULT_MAX_CELLS = 200_000

# A cell is (base vertex coordinates, strictly increasing axis tuple).
Cell = tuple[tuple[int, ...], tuple[int, ...]]


class CellComplex:
    """Product-of-circles cubical complex.

    Treat instances as immutable once built.  ``sizes`` gives the period of
    each axis; ``time_axis`` marks the circle added by :func:`suspend` (it is
    always the last axis).  Boundary matrices carry the per-cell orientation
    signs already folded in.
    """

    def __init__(self, sizes, time_axis=None, signs=None, base=None,
                 max_cells=DEFAULT_MAX_CELLS):
        self.sizes = tuple(int(s) for s in sizes)
        if any(s < 1 for s in self.sizes):
            raise ValueError("axis periods must be >= 1")
        self.dim = len(self.sizes)
        self.time_axis = time_axis
        self.base = base  # spatial complex, for suspensions

        n_total = (2 ** self.dim) * int(np.prod(self.sizes, dtype=np.int64))
        if n_total > max_cells:
            raise ValueError(
                f"cell budget exceeded: {n_total} > {max_cells}")

        self.cells: list[list[Cell]] = []
        self.index: list[dict[Cell, int]] = []
        axes_range = range(self.dim)
        coord_iter = list(itertools.product(*(range(s) for s in self.sizes)))
        for p in range(self.dim + 1):
            plist = []
            for coords in coord_iter:
                for axes in itertools.combinations(axes_range, p):
                    plist.append((coords, axes))
            self.cells.append(plist)
            self.index.append({c: i for i, c in enumerate(plist)})

        if signs is None:
            self.sign = [np.ones(len(self.cells[p]), dtype=np.int64)
                         for p in range(self.dim + 1)]
        else:
            self.sign = [np.asarray(s, dtype=np.int64) for s in signs]

        self._boundary = [self._build_boundary(p) for p in range(self.dim + 1)]
        if self.time_axis is not None:
            self._build_slab_maps()

    # -- construction -----------------------------------------------------

    def _build_boundary(self, p):
        """Signed boundary matrix of degree p, shape (n_{p-1}, n_p)."""
        n_p = len(self.cells[p])
        if p == 0:
            return sp.csr_matrix((0, n_p), dtype=np.int64)
        n_pm1 = len(self.cells[p - 1])
        rows, cols, vals = [], [], []
        idx = self.index[p - 1]
        for j, (coords, axes) in enumerate(self.cells[p]):
            acc: dict[int, int] = {}
            for k, a in enumerate(axes):
                sub = axes[:k] + axes[k + 1:]
                sgn = -1 if k % 2 else 1
                far = list(coords)
                far[a] = (far[a] + 1) % self.sizes[a]
                i_far = idx[(tuple(far), sub)]
                i_near = idx[(coords, sub)]
                acc[i_far] = acc.get(i_far, 0) + sgn
                acc[i_near] = acc.get(i_near, 0) - sgn
            for i, v in acc.items():
                if v != 0:
                    rows.append(i)
                    cols.append(j)
                    vals.append(v * int(self.sign[p][j]) * int(self.sign[p - 1][i]))
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(n_pm1, n_p),
                            dtype=np.int64)
        mat.sum_duplicates()
        return mat

    def _build_slab_maps(self):
        """Horizontal/vertical bookkeeping for suspensions."""
        t_ax = self.time_axis
        M = self.sizes[t_ax]
        self.is_vertical = []
        self.time_of = []
        self.spatial_of = []   # index into base cells, degree p (horizontal) or p-1 (vertical)
        self.horizontal_id = []  # [p] -> array (n_base_p, M)
        self.vertical_id = []    # [p] -> array (n_base_{p-1}, M)
        base = self.base
        for p in range(self.dim + 1):
            cellist = self.cells[p]
            vert = np.zeros(len(cellist), dtype=bool)
            tidx = np.zeros(len(cellist), dtype=np.int64)
            spat = np.full(len(cellist), -1, dtype=np.int64)
            n_h = len(base.cells[p]) if p <= base.dim else 0
            n_v = len(base.cells[p - 1]) if 1 <= p <= base.dim + 1 else 0
            hid = np.full((n_h, M), -1, dtype=np.int64)
            vid = np.full((n_v, M), -1, dtype=np.int64)
            for i, (coords, axes) in enumerate(cellist):
                t = coords[t_ax]
                tidx[i] = t
                sp_coords = coords[:t_ax]
                if t_ax in axes:
                    vert[i] = True
                    sp_axes = tuple(a for a in axes if a != t_ax)
                    si = base.index[p - 1][(sp_coords, sp_axes)]
                    spat[i] = si
                    vid[si, t] = i
                else:
                    si = base.index[p][(sp_coords, axes)]
                    spat[i] = si
                    hid[si, t] = i
            self.is_vertical.append(vert)
            self.time_of.append(tidx)
            self.spatial_of.append(spat)
            self.horizontal_id.append(hid)
            self.vertical_id.append(vid)

    # -- queries -----------------------------------------------------------

    def num_cells(self, p):
        if p < 0 or p > self.dim:
            return 0
        return len(self.cells[p])

    def boundary_matrix(self, p):
        """Signed incidence matrix of the boundary C_p -> C_{p-1}."""
        if p < 0 or p > self.dim:
            return sp.csr_matrix((self.num_cells(p - 1), self.num_cells(p)),
                                 dtype=np.int64)
        return self._boundary[p]

    def coboundary_matrix(self, p):
        """Matrix of d on p-cochains, shape (n_{p+1}, n_p)."""
        if p >= self.dim:
            return sp.csr_matrix((0, self.num_cells(p)), dtype=np.int64)
        return self._boundary[p + 1].T.tocsr()

    def incidence(self, p, i_high, i_low):
        """Incidence number between a p-cell and a (p-1)-cell."""
        return int(self._boundary[p][i_low, i_high])

    def to_json_dict(self):
        """Debug-oriented JSON description (not a stability-guaranteed format)."""
        out = {
            "sizes": list(self.sizes),
            "time_axis": self.time_axis,
            "cells": [[[list(c), list(a)] for (c, a) in self.cells[p]]
                      for p in range(self.dim + 1)],
            "signs": [self.sign[p].tolist() for p in range(self.dim + 1)],
            "boundary": [],
        }
        for p in range(self.dim + 1):
            m = self._boundary[p].tocoo()
            out["boundary"].append(
                [[int(r), int(c), int(v)] for r, c, v
                 in zip(m.row, m.col, m.data)])
        return out

    def to_json(self):
        return json.dumps(self.to_json_dict())

    def __repr__(self):
        kind = "suspension" if self.time_axis is not None else "torus"
        return f"CellComplex({kind}, sizes={self.sizes})"


def build_torus(d, L, max_cells=DEFAULT_MAX_CELLS):
    """Cubical d-torus with L vertices per axis.

    Requires 1 <= d <= 6 and L >= 2.  Cell count of degree p is
    binom(d, p) * L**d.
    """
    if not (1 <= d <= 6):
        raise ValueError("d out of range (need 1 <= d <= 6)")
    if L < 2:
        raise ValueError("L out of range (need L >= 2)")
    return CellComplex((L,) * d, max_cells=max_cells)


def suspend(X, M, max_cells=DEFAULT_MAX_CELLS):
    """Product of X with a circle of M time steps (M >= 1).

    The time circle is appended as the last axis; horizontal cells omit it,
    vertical cells contain it.  Orientation signs of X are inherited by both
    families (the time factor is taken with its standard orientation).
    """
    if M < 1:
        raise ValueError("M out of range (need M >= 1)")
    if X.time_axis is not None:
        raise ValueError("complex already has a time axis")
    sizes = X.sizes + (M,)
    n = len(sizes)
    # Pre-compute inherited signs in the ordering the constructor will use.
    signs = []
    coord_iter = list(itertools.product(*(range(s) for s in sizes)))
    for p in range(n + 1):
        vals = []
        for coords in coord_iter:
            for axes in itertools.combinations(range(n), p):
                sp_coords = coords[:-1]
                if (n - 1) in axes:
                    sp_axes = tuple(a for a in axes if a != n - 1)
                    si = X.index[p - 1][(sp_coords, sp_axes)]
                    vals.append(int(X.sign[p - 1][si]))
                else:
                    si = X.index[p][(sp_coords, axes)]
                    vals.append(int(X.sign[p][si]))
        signs.append(np.array(vals, dtype=np.int64))
    return CellComplex(sizes, time_axis=n - 1, signs=signs, base=X,
                       max_cells=max_cells)


# -- dual correspondence ----------------------------------------------------

@dataclass
class DualCorrespondence:
    """Half-shift duality between a complex and its dual.

    ``to_primal[r]`` maps dual r-cell indices to primal (n-r)-cell indices;
    ``to_dual[p]`` is the inverse direction.  Dual orientations satisfy
    incidence(c, b) on the primal = incidence(to_dual[b], to_dual[c]) on the
    dual, for every incident pair.
    """

    primal: CellComplex
    dual: CellComplex
    to_primal: list[np.ndarray] = field(repr=False)
    to_dual: list[np.ndarray] = field(repr=False)

    def theta_cell(self, r, i_dual):
        """Primal (n-r)-cell index of the dual r-cell i_dual."""
        return int(self.to_primal[r][i_dual])

    def theta_inv_cell(self, p, i_primal):
        """Dual (n-p)-cell index of the primal p-cell i_primal."""
        return int(self.to_dual[p][i_primal])


def _dual_cell_of(cell, n, sizes):
    """Dual cell (complement axes, base shifted down along them)."""
    coords, axes = cell
    comp = tuple(a for a in range(n) if a not in axes)
    w = list(coords)
    for a in comp:
        w[a] = (w[a] - 1) % sizes[a]
    return (tuple(w), comp)


def dualize(X, max_cells=DEFAULT_MAX_CELLS):
    """Build the dual complex of X and the two-way cell correspondence.

    Orientation signs on the dual are obtained by propagating the
    incidence-compatibility constraint over the face graph (breadth-first,
    seeds fixed to +1 in cell order) and then verified on every incident
    pair.  Any globally consistent solution is acceptable; the verification
    failing would mean the constraint system is inconsistent.
    """
    n = X.dim
    raw = CellComplex(X.sizes, time_axis=X.time_axis,
                      base=X.base, max_cells=max_cells)
    # theta: dual r-cell -> primal (n-r)-cell.  _dual_cell_of is an involution
    # up to the half shift, so build both directions from the primal side.
    to_dual = []
    for p in range(n + 1):
        arr = np.empty(X.num_cells(p), dtype=np.int64)
        for i, cell in enumerate(X.cells[p]):
            arr[i] = raw.index[n - p][_dual_cell_of(cell, n, X.sizes)]
        to_dual.append(arr)
    to_primal = [np.empty(raw.num_cells(r), dtype=np.int64)
                 for r in range(n + 1)]
    for p in range(n + 1):
        to_primal[n - p][to_dual[p]] = np.arange(X.num_cells(p))

    signs = _solve_dual_signs(X, raw, to_dual)
    dual = CellComplex(X.sizes, time_axis=X.time_axis, signs=signs,
                       base=X.base, max_cells=max_cells)
    dc = DualCorrespondence(primal=X, dual=dual,
                            to_primal=to_primal, to_dual=to_dual)
    _verify_dual_incidence(dc)
    return dc


def _solve_dual_signs(X, raw, to_dual):
    """Propagate the incidence-compatibility constraint to fix dual signs.

    For a primal incident pair (c of degree r+1, b of degree r) the dual pair
    (tau_b of degree n-r, tau_c of degree n-r-1) must satisfy
    s(tau_b) * s(tau_c) * eps_raw(tau_b, tau_c) = eps_X(c, b).
    """
    n = X.dim
    # Edge lists between dual degree q+1 and q, as constraints on sign products.
    # Node key: (q, index).  Collect adjacency first.
    adj = {q: [] for q in range(n + 1)}  # per high-degree: (i_high, i_low, ratio)
    for r in range(n):  # primal b degree r, c degree r+1
        q = n - r - 1    # dual low degree
        Bp = X.boundary_matrix(r + 1).tocoo()   # eps_X(c,b) at [b, c]
        Dv = raw.boundary_matrix(n - r).tocsr()  # raw eps at [tau_c, tau_b]
        td_b = to_dual[r]
        td_c = to_dual[r + 1]
        for b, c, eps_p in zip(Bp.row, Bp.col, Bp.data):
            i_high = td_b[b]   # dual (n-r)-cell
            i_low = td_c[c]    # dual (n-r-1)-cell
            eps_d = int(Dv[i_low, i_high])
            if eps_d == 0:
                raise ValueError("dual incidence support mismatch")
            if abs(eps_d) != abs(int(eps_p)):
                raise ValueError("dual incidence magnitude mismatch")
            ratio = 1 if int(eps_p) == eps_d else -1
            adj[q + 1].append((int(i_high), int(i_low), ratio))

    # Union of all constraints as a graph over (degree, index) nodes.
    from collections import defaultdict, deque
    graph = defaultdict(list)
    for qh, lst in adj.items():
        for i_high, i_low, ratio in lst:
            a = (qh, i_high)
            b = (qh - 1, i_low)
            graph[a].append((b, ratio))
            graph[b].append((a, ratio))

    sign = [np.zeros(raw.num_cells(q), dtype=np.int64) for q in range(n + 1)]
    for q in range(n + 1):
        for i in range(raw.num_cells(q)):
            if sign[q][i] != 0:
                continue
            sign[q][i] = 1
            dq = deque([(q, i)])
            while dq:
                node = dq.popleft()
                s_here = sign[node[0]][node[1]]
                for other, ratio in graph[node]:
                    want = s_here * ratio
                    have = sign[other[0]][other[1]]
                    if have == 0:
                        sign[other[0]][other[1]] = want
                        dq.append(other)
                    elif have != want:
                        raise ValueError("inconsistent dual orientation constraints")
    return sign


def _verify_dual_incidence(dc):
    """Exhaustive check of incidence compatibility across the correspondence."""
    X, Xv = dc.primal, dc.dual
    n = X.dim
    for r in range(n):
        Bp = X.boundary_matrix(r + 1)            # [b, c] = eps_X(c, b)
        Dv = Xv.boundary_matrix(n - r)           # [tau_c, tau_b] = eps_v(tau_b, tau_c)
        td_b = dc.to_dual[r]
        td_c = dc.to_dual[r + 1]
        # Permute dual matrix into primal labels and compare with Bp.
        perm = Dv[td_c, :][:, td_b]              # [c, b]
        if (perm.T != Bp).nnz != 0:
            raise AssertionError("dual incidence verification failed")


# -- coefficient vectors -----------------------------------------------------

@dataclass
class FieldChain:
    """Chain with Z_N coefficients, indexed by the cells of one degree."""

    cx: CellComplex
    degree: int
    N: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64) % self.N
        if self.data.shape != (self.cx.num_cells(self.degree),):
            raise ValueError("coefficient vector has wrong length")

    def copy(self):
        return FieldChain(self.cx, self.degree, self.N, self.data.copy())


@dataclass
class FieldCochain:
    """Cochain with Z_N coefficients, indexed by the cells of one degree."""

    cx: CellComplex
    degree: int
    N: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.int64) % self.N
        if self.data.shape != (self.cx.num_cells(self.degree),):
            raise ValueError("coefficient vector has wrong length")

    def copy(self):
        return FieldCochain(self.cx, self.degree, self.N, self.data.copy())


def zero_chain(cx, degree, N):
    return FieldChain(cx, degree, N, np.zeros(cx.num_cells(degree), dtype=np.int64))


def zero_cochain(cx, degree, N):
    return FieldCochain(cx, degree, N, np.zeros(cx.num_cells(degree), dtype=np.int64))


def boundary(chain):
    """Boundary of a chain, one degree down, coefficients mod N."""
    mat = chain.cx.boundary_matrix(chain.degree)
    data = np.asarray(mat @ chain.data) % chain.N
    return FieldChain(chain.cx, chain.degree - 1, chain.N, data)


def is_cycle(chain):
    return chain.degree == 0 or not boundary(chain).data.any()


def apply_d(f, transpose=False):
    """Lattice exterior derivative on cochains (or its transpose).

    (d f)_c = sum_b eps(c, b) f_b raises the degree by one; the transpose
    lowers it: (dT f)_a = sum_b f_b eps(b, a).
    """
    if transpose:
        mat = f.cx.boundary_matrix(f.degree)
        return FieldCochain(f.cx, f.degree - 1, f.N,
                            np.asarray(mat @ f.data) % f.N)
    mat = f.cx.coboundary_matrix(f.degree)
    return FieldCochain(f.cx, f.degree + 1, f.N,
                        np.asarray(mat @ f.data) % f.N)


def integrate(f, nu):
    """Pairing sum_b nu_b f_b mod N of a cochain f with a chain nu."""
    if f.degree != nu.degree or f.N != nu.N:
        raise ValueError("degree/modulus mismatch")
    return int((f.data @ nu.data) % f.N)


def vartheta(dc, xi):
    """Coefficient transport through the dual correspondence.

    A chain on the dual complex of degree r becomes a cochain on the primal
    complex of degree n-r with components (vartheta xi)_b = xi_{theta^{-1} b};
    a chain on the primal becomes a cochain on the dual the same way.  This
    intertwines d with the boundary on the source side.
    """
    n = dc.primal.dim
    if xi.cx is dc.dual:
        p = n - xi.degree
        data = xi.data[dc.to_dual[p]]
        return FieldCochain(dc.primal, p, xi.N, data)
    if xi.cx is dc.primal:
        r = n - xi.degree
        data = xi.data[dc.to_primal[r]]
        return FieldCochain(dc.dual, r, xi.N, data)
    raise ValueError("chain does not live on either side of the correspondence")


def intersection(dc, xi, sigma):
    """Intersection pairing of a dual (n-p)-chain with a primal p-chain."""
    f = vartheta(dc, xi)
    return integrate(f, sigma)
