"""Arithmetic and linear algebra over Z_N coefficients.

Characters and the symmetrically normalized DFT on Z_N, Gaussian elimination
over prime fields F_N, homology bases with deterministic sections and linear
filling operators, the intersection pairing, and the generalized linking
pairing built from sections + fillings + an optional homological correction.

Prime N makes every coefficient group a vector space and is required for the
homology/section/linking family.  A valuation-aware solver handles linear
systems over composite Z_N (prime-power elimination plus CRT), which is all
that boundary-only linking and tiny composite enumerations need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import (CellComplex, FieldChain, FieldCochain, boundary,
                    integrate, vartheta)
from .cells import intersection as _intersection_int


class CompositeModulusError(ValueError):
    pass


class NoSolution(Exception):
    """Internal signal; public APIs return None instead."""


# -- scalars and characters ---------------------------------------------------

@dataclass(frozen=True)
class ZNScalar:
    residue: int
    modulus: int

    def __post_init__(self):
        object.__setattr__(self, "residue", int(self.residue) % int(self.modulus))

    def __add__(self, other):
        self._check(other)
        return ZNScalar(self.residue + other.residue, self.modulus)

    def __sub__(self, other):
        self._check(other)
        return ZNScalar(self.residue - other.residue, self.modulus)

    def __mul__(self, other):
        if isinstance(other, int):
            return ZNScalar(self.residue * other, self.modulus)
        self._check(other)
        return ZNScalar(self.residue * other.residue, self.modulus)

    def __neg__(self):
        return ZNScalar(-self.residue, self.modulus)

    def __int__(self):
        return self.residue

    def _check(self, other):
        if self.modulus != other.modulus:
            raise ValueError("modulus mismatch")


def omega(N):
    """Primitive N-th root of unity exp(2 pi i / N)."""
    return np.exp(2j * np.pi / N)


def chi(N, n, x):
    """Character chi_n(x) = omega^{n x}."""
    return np.exp(2j * np.pi * (np.asarray(n) * np.asarray(x) % N) / N)


def delta_mod(N, x):
    """Indicator of x = 0 mod N (works elementwise)."""
    return (np.asarray(x) % N == 0).astype(np.float64)


def dft(f):
    """Symmetric DFT: fhat(n) = N^{-1/2} sum_x f(x) omega^{-n x}."""
    f = np.asarray(f, dtype=np.complex128)
    return np.fft.fft(f) / np.sqrt(f.shape[-1])


def idft(fhat):
    """Inverse of :func:`dft`: f(x) = N^{-1/2} sum_n fhat(n) omega^{n x}."""
    fhat = np.asarray(fhat, dtype=np.complex128)
    return np.fft.ifft(fhat) * np.sqrt(fhat.shape[-1])


# -- prime field elimination --------------------------------------------------

def is_prime(N):
    N = int(N)
    if N < 2:
        return False
    d = 2
    while d * d <= N:
        if N % d == 0:
            return False
        d += 1
    return True


def _require_prime(N):
    if not is_prime(N):
        raise CompositeModulusError(f"composite modulus {N}: need prime N here")


def fn_rref(A, N, track=False):
    """Reduced row echelon form over F_N.

    Returns (R, pivot_columns, E) with R = E @ A mod N (E is None unless
    ``track``).  Pivot order is fixed: leftmost-column, topmost-row.
    """
    _require_prime(N)
    A = np.array(A, dtype=np.int64) % N
    m, n = A.shape
    E = np.eye(m, dtype=np.int64) if track else None
    piv = []
    r = 0
    for c in range(n):
        if r == m:
            break
        nz = np.nonzero(A[r:, c])[0]
        if nz.size == 0:
            continue
        k = r + int(nz[0])
        if k != r:
            A[[r, k]] = A[[k, r]]
            if track:
                E[[r, k]] = E[[k, r]]
        inv = pow(int(A[r, c]), N - 2, N)
        A[r] = A[r] * inv % N
        if track:
            E[r] = E[r] * inv % N
        rows = np.nonzero(A[:, c])[0]
        rows = rows[rows != r]
        if rows.size:
            f = A[rows, c][:, None]
            A[rows] = (A[rows] - f * A[r]) % N
            if track:
                E[rows] = (E[rows] - f * E[r]) % N
        piv.append(c)
        r += 1
    return A, piv, E


def fn_rank(A, N):
    return len(fn_rref(A, N)[1])


def fn_solve(A, b, N):
    """Solve A x = b over F_N (prime).  Returns x or None when b not in im A."""
    _require_prime(N)
    A = np.asarray(A, dtype=np.int64) % N
    b = np.asarray(b, dtype=np.int64) % N
    R, piv, E = fn_rref(A, N, track=True)
    y = E @ b % N
    rank = len(piv)
    if np.any(y[rank:]):
        return None
    x = np.zeros(A.shape[1], dtype=np.int64)
    x[piv] = y[:rank]
    return x


def fn_kernel(A, N):
    """Basis (columns) of the null space of A over F_N (prime)."""
    _require_prime(N)
    A = np.asarray(A, dtype=np.int64) % N
    n = A.shape[1]
    R, piv, _ = fn_rref(A, N)
    piv_set = set(piv)
    free = [c for c in range(n) if c not in piv_set]
    K = np.zeros((n, len(free)), dtype=np.int64)
    for j, fc in enumerate(free):
        K[fc, j] = 1
        for i, pc in enumerate(piv):
            K[pc, j] = (-R[i, fc]) % N
    return K


# -- composite-capable linear solve ------------------------------------------

def _factorize(N):
    out = []
    d = 2
    while d * d <= N:
        if N % d == 0:
            k = 0
            while N % d == 0:
                N //= d
                k += 1
            out.append((d, k))
        d += 1
    if N > 1:
        out.append((N, 1))
    return out


def _val(x, p):
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def _solve_prime_power(A, b, p, k):
    """Solve A x = b over Z_{p^k} by valuation-aware elimination.

    Pivots are chosen with minimal p-adic valuation so entries below a pivot
    are always exactly divisible; returns a particular solution or None.
    """
    q = p ** k
    A = np.array(A, dtype=np.int64) % q
    b = np.array(b, dtype=np.int64) % q
    m, n = A.shape
    col_perm = list(range(n))
    pivots = []  # (row, col_position_in_permuted_order, valuation)
    r = 0
    while r < m:
        best = None
        for i in range(r, m):
            for jj in range(r, n):
                a = int(A[i, col_perm[jj]])
                if a == 0:
                    continue
                v = _val(a, p)
                if best is None or v < best[2]:
                    best = (i, jj, v)
                    if v == 0:
                        break
            if best is not None and best[2] == 0:
                break
        if best is None:
            break
        i0, j0, v = best
        if i0 != r:
            A[[r, i0]] = A[[i0, r]]
            b[[r, i0]] = b[[i0, r]]
        if j0 != r:
            col_perm[r], col_perm[j0] = col_perm[j0], col_perm[r]
        c = col_perm[r]
        unit = int(A[r, c]) // p ** v
        inv = pow(unit % q, -1, q)
        A[r] = A[r] * inv % q
        b[r] = b[r] * inv % q
        for i in range(r + 1, m):
            a = int(A[i, c])
            if a:
                f = a // p ** v
                A[i] = (A[i] - f * A[r]) % q
                b[i] = (b[i] - f * b[r]) % q
        pivots.append((r, v))
        r += 1
    for i in range(r, m):
        if b[i] % q:
            return None
    x = np.zeros(n, dtype=np.int64)
    for (row, v) in reversed(pivots):
        c = col_perm[row]
        rhs = int(b[row])
        for jj in range(row + 1, n):
            cc = col_perm[jj]
            rhs -= int(A[row, cc]) * int(x[cc])
        rhs %= q
        if rhs % p ** v:
            return None
        x[c] = (rhs // p ** v) % (q // p ** v)
    return x % q


def zn_solve(A, b, N):
    """Solve A x = b over Z_N for any N >= 2 (CRT over prime powers)."""
    N = int(N)
    if is_prime(N):
        return fn_solve(A, b, N)
    A = np.asarray(A, dtype=np.int64) % N
    b = np.asarray(b, dtype=np.int64) % N
    n = A.shape[1]
    x = np.zeros(n, dtype=np.int64)
    for p, k in _factorize(N):
        q = p ** k
        xq = _solve_prime_power(A, b, p, k)
        if xq is None:
            return None
        rest = N // q
        # CRT: x ≡ xq (mod q), leave other components, combine at the end.
        inv = pow(rest % q, -1, q)
        x = (x + rest * inv * xq) % N
    if np.any((A @ x - b) % N):
        return None
    return x


def span_enumerate(basis, N):
    """All F_N combinations of the given basis columns, as rows (N^k of them)."""
    basis = np.asarray(basis, dtype=np.int64)
    n, k = basis.shape
    if k == 0:
        return np.zeros((1, n), dtype=np.int64)
    coeffs = np.stack(np.meshgrid(*([np.arange(N)] * k), indexing="ij"),
                      axis=-1).reshape(-1, k)
    return coeffs @ basis.T % N


def subgroup_closure(generators, N, cap=2_000_000):
    """Closure of generator columns under Z_N addition (composite-safe)."""
    gens = [tuple(int(v) % N for v in g) for g in np.asarray(generators).T]
    n = len(gens[0]) if gens else 0
    seen = {tuple([0] * n)}
    frontier = [tuple([0] * n)]
    while frontier:
        nxt = []
        for x in frontier:
            for g in gens:
                y = tuple((a + b) % N for a, b in zip(x, g))
                if y not in seen:
                    seen.add(y)
                    nxt.append(y)
                    if len(seen) > cap:
                        raise ValueError("subgroup closure exceeds cap")
        frontier = nxt
    return np.array(sorted(seen), dtype=np.int64)


# -- homology data ------------------------------------------------------------

@dataclass
class HomologyData:
    """Cycle/boundary bases, homology representatives, section and filling.

    All data lives over F_N (prime).  ``fill`` inverts the boundary on
    boundaries using one stored elimination of the degree-(p+1) boundary
    matrix, so it is linear and deterministic.
    """

    cx: CellComplex
    p: int
    N: int
    cycle_basis: np.ndarray = field(repr=False)
    boundary_basis: np.ndarray = field(repr=False)
    reps: np.ndarray = field(repr=False)
    betti: int
    _fill_E: np.ndarray = field(repr=False)
    _fill_piv: list = field(repr=False)
    _fill_perm: np.ndarray = field(repr=False)
    _class_E: np.ndarray = field(repr=False)
    _class_piv: list = field(repr=False)
    _bnd_low: np.ndarray = field(repr=False)

    # degree-p boundary matrix (dense mod N) for cycle checks
    def is_cycle(self, z):
        z = np.asarray(z, dtype=np.int64) % self.N
        return not np.any(self._bnd_low @ z % self.N)

    def homology_class(self, z):
        """Class coordinates of a cycle in the stored representative basis."""
        z = np.asarray(z, dtype=np.int64) % self.N
        if not self.is_cycle(z):
            raise ValueError("not a cycle")
        y = self._class_E @ z % self.N
        rank = len(self._class_piv)
        if np.any(y[rank:]):
            raise ValueError("not a cycle")  # not in Z_p span; defensive
        nb = self.boundary_basis.shape[1]
        coords = np.zeros(nb + self.betti, dtype=np.int64)
        coords[self._class_piv] = y[:rank]
        return coords[nb:]

    def section(self, h):
        """Representative cycle of the class with coordinates h."""
        h = np.asarray(h, dtype=np.int64) % self.N
        if h.shape != (self.betti,):
            raise ValueError("class coordinate vector has wrong length")
        return self.reps @ h % self.N

    def fill(self, b):
        """A (p+1)-chain x with boundary x = b; error when b is not a boundary."""
        b = np.asarray(b, dtype=np.int64) % self.N
        y = self._fill_E @ b % self.N
        rank = len(self._fill_piv)
        if np.any(y[rank:]):
            raise ValueError("not a boundary")
        x = np.zeros(self._fill_perm.shape[0], dtype=np.int64)
        x[self._fill_perm[self._fill_piv]] = y[:rank]
        return x


def homology_data(X, p, N, variant="standard"):
    """Build :class:`HomologyData` of degree p over F_N (prime).

    ``variant`` fixes the pivot sweep: "standard" uses stored cell order,
    "reversed" reverses the column order of every elimination.  Both give
    valid sections/fillings; they serve as independent conventions.
    """
    _require_prime(N)
    if variant not in ("standard", "reversed"):
        raise ValueError("unknown variant")
    n_p = X.num_cells(p)
    bnd_low = np.asarray(X.boundary_matrix(p).todense(), dtype=np.int64) % N
    bnd_high = np.asarray(X.boundary_matrix(p + 1).todense(), dtype=np.int64) % N

    n_high = bnd_high.shape[1]
    perm = np.arange(n_high)
    if variant == "reversed":
        perm = perm[::-1].copy()
    R, piv, E = fn_rref(bnd_high[:, perm], N, track=True)
    boundary_basis = bnd_high[:, perm][:, piv] % N

    cperm = np.arange(n_p)
    if variant == "reversed":
        cperm = cperm[::-1].copy()
    kern = fn_kernel(bnd_low[:, cperm], N)
    cycle_basis = np.zeros_like(kern)
    cycle_basis[cperm] = kern  # undo column relabeling of variables

    # Complete boundary basis to the cycle space: pivots falling in the
    # cycle block select homology representatives.
    combined = np.concatenate([boundary_basis, cycle_basis], axis=1)
    _, piv_c, _ = fn_rref(combined, N)
    nb = boundary_basis.shape[1]
    rep_cols = [c - nb for c in piv_c if c >= nb]
    reps = cycle_basis[:, rep_cols] % N
    betti = len(rep_cols)

    basis_bh = np.concatenate([boundary_basis, reps], axis=1)
    _, piv2, E2 = fn_rref(basis_bh, N, track=True)
    if len(piv2) != basis_bh.shape[1]:
        raise AssertionError("boundary+representative basis is degenerate")

    return HomologyData(
        cx=X, p=p, N=N,
        cycle_basis=cycle_basis % N,
        boundary_basis=boundary_basis,
        reps=reps,
        betti=betti,
        _fill_E=E,
        _fill_piv=piv,
        _fill_perm=perm,
        _class_E=E2,
        _class_piv=piv2,
        _bnd_low=bnd_low,
    )


def with_section_shift(hd, T):
    """A copy of hd whose section is shifted by boundaries, fillings unchanged.

    T has shape (num boundary basis vectors, betti); the new representatives
    are reps + boundary_basis @ T, which represent the same classes.
    """
    T = np.asarray(T, dtype=np.int64) % hd.N
    reps = (hd.reps + hd.boundary_basis @ T) % hd.N
    basis_bh = np.concatenate([hd.boundary_basis, reps], axis=1)
    _, piv2, E2 = fn_rref(basis_bh, hd.N, track=True)
    if len(piv2) != basis_bh.shape[1]:
        raise AssertionError("boundary+representative basis is degenerate")
    return HomologyData(
        cx=hd.cx, p=hd.p, N=hd.N,
        cycle_basis=hd.cycle_basis,
        boundary_basis=hd.boundary_basis,
        reps=reps,
        betti=hd.betti,
        _fill_E=hd._fill_E,
        _fill_piv=hd._fill_piv,
        _fill_perm=hd._fill_perm,
        _class_E=E2,
        _class_piv=piv2,
        _bnd_low=hd._bnd_low,
    )


def homology_class(z, hd):
    """Class coordinates of a FieldChain (or raw vector) cycle."""
    data = z.data if isinstance(z, FieldChain) else z
    return hd.homology_class(data)


def intersection(dc, xi, sigma):
    """Intersection pairing as a ZNScalar (basis value [theta(c_dual) = b])."""
    return ZNScalar(_intersection_int(dc, xi, sigma), xi.N)


# -- generalized linking ------------------------------------------------------

@dataclass
class LinkingPair:
    """Sections, fillings and homological correction for the linking pairing.

    ``hd_primal`` has degree p on the primal complex, ``hd_dual`` degree
    n-p-1 on the dual complex; ``B_H`` is a (betti_dual x betti_primal)
    matrix over Z_N, zero by default.
    """

    dc: object
    hd_primal: HomologyData
    hd_dual: HomologyData
    B_H: np.ndarray = None

    def __post_init__(self):
        if self.B_H is None:
            self.B_H = np.zeros((self.hd_dual.betti, self.hd_primal.betti),
                                dtype=np.int64)
        self.B_H = np.asarray(self.B_H, dtype=np.int64) % self.hd_primal.N


def linking_pair(dc, p, N, variant="standard", B_H=None):
    """Convenience constructor: homology data on both sides plus B_H."""
    n = dc.primal.dim
    hd_p = homology_data(dc.primal, p, N, variant=variant)
    hd_d = homology_data(dc.dual, n - p - 1, N, variant=variant)
    return LinkingPair(dc=dc, hd_primal=hd_p, hd_dual=hd_d, B_H=B_H)


def linking(pair_or_dc, mu, nu, fillings_only=False):
    """Generalized linking of a dual (n-p-1)-cycle with a primal p-cycle.

    With a :class:`LinkingPair` (prime N): fill the exact parts through the
    stored fillings, intersect, and add the homological correction.  With a
    bare DualCorrespondence (``fillings_only`` implied), both inputs must be
    boundaries; the value is then canonical and defined for any N >= 2.
    """
    if isinstance(pair_or_dc, LinkingPair):
        pair = pair_or_dc
        dc = pair.dc
        N = pair.hd_primal.N
        p = pair.hd_primal.p
        X, Xv = dc.primal, dc.dual
        if not (isinstance(nu, FieldChain) and nu.cx is X and nu.degree == p):
            raise ValueError("degree mismatch for the primal cycle")
        if not (isinstance(mu, FieldChain) and mu.cx is Xv
                and mu.degree == X.dim - p - 1):
            raise ValueError("degree mismatch for the dual cycle")
        if not pair.hd_primal.is_cycle(nu.data):
            raise ValueError("not a cycle")
        if not pair.hd_dual.is_cycle(mu.data):
            raise ValueError("not a cycle")
        cls_nu = pair.hd_primal.homology_class(nu.data)
        cls_mu = pair.hd_dual.homology_class(mu.data)
        nu_h = pair.hd_primal.section(cls_nu)
        nu_ex = (nu.data - nu_h) % N
        mu_h = pair.hd_dual.section(cls_mu)
        mu_ex = (mu.data - mu_h) % N
        fill_nu = FieldChain(X, p + 1, N, pair.hd_primal.fill(nu_ex))
        term1 = _intersection_int(dc, mu, fill_nu)
        fill_mu = FieldChain(Xv, X.dim - p, N, pair.hd_dual.fill(mu_ex))
        term2 = _intersection_int(dc, fill_mu, FieldChain(X, p, N, nu_h))
        term3 = int(cls_mu @ pair.B_H @ cls_nu % N)
        return ZNScalar(term1 + term2 + term3, N)

    dc = pair_or_dc
    X, Xv = dc.primal, dc.dual
    N = nu.N
    p = nu.degree
    if mu.degree != X.dim - p - 1:
        raise ValueError("degree mismatch")
    bnd_high = np.asarray(X.boundary_matrix(p + 1).todense(), dtype=np.int64)
    x = zn_solve(bnd_high, nu.data, N)
    if x is None:
        raise ValueError("not a boundary (canonical linking needs boundaries)")
    bnd_dual = np.asarray(Xv.boundary_matrix(X.dim - p).todense(),
                          dtype=np.int64)
    if zn_solve(bnd_dual, mu.data, N) is None:
        raise ValueError("not a boundary (canonical linking needs boundaries)")
    fill_nu = FieldChain(X, p + 1, N, x)
    return ZNScalar(_intersection_int(dc, mu, fill_nu), N)
