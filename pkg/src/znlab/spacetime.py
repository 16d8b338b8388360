"""Fixed-background partition sums for P-form models on suspension lattices.

Variables live on P-cells of a suspension complex; each (P+1)-cell carries a
curvature weight W, each P-cell an on-site weight V.  An electric background
chain enters as a character factor, a magnetic background chain (on the dual
complex) shifts the curvature argument.  Two independent evaluators are
provided: exhaustive enumeration and a slab transfer that convolves over the
time circle with FFTs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import (CellComplex, DualCorrespondence, FieldChain, vartheta)
from . import fieldmath as fm

DEFAULT_CAP = 1 << 26


# -- local weights --------------------------------------------------------------

@dataclass
class LocalWeights:
    """Per-cell weight tables: W on (P+1)-cells, V on P-cells, length N each."""

    cx: CellComplex
    P: int
    N: int
    W: np.ndarray = field(repr=False)  # (num (P+1)-cells, N) complex
    V: np.ndarray = field(repr=False)  # (num P-cells, N) complex

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=complex)
        self.V = np.asarray(self.V, dtype=complex)
        if self.W.shape != (self.cx.num_cells(self.P + 1), self.N):
            raise ValueError("W table has wrong shape")
        if self.V.shape != (self.cx.num_cells(self.P), self.N):
            raise ValueError("V table has wrong shape")

    def require_zero_modes(self):
        """Check W_c(0) != 0 and the DFT zero mode of every V_u != 0."""
        if np.any(self.W[:, 0] == 0) or np.any(self.V.sum(axis=1) == 0):
            raise ValueError("vanishing zero-mode weight")


@dataclass
class TrotterParams:
    """Couplings of the quantum model: J on (P-1)-cells, K on (P+1)-cells,
    X-source table g and Z-source table h on P-cells (shape (n_P, N))."""

    N: int
    M: int
    beta: float
    J: object = 1.0
    K: object = 1.0
    g: object = None
    h: object = None

    def spatial_arrays(self, spatial, P):
        n_a = spatial.num_cells(P - 1)
        n_b = spatial.num_cells(P)
        n_c = spatial.num_cells(P + 1)
        J = np.broadcast_to(np.asarray(self.J, dtype=complex), (n_a,))
        K = np.broadcast_to(np.asarray(self.K, dtype=complex), (n_c,))
        g = (np.zeros((n_b, self.N), dtype=complex) if self.g is None
             else np.broadcast_to(np.asarray(self.g, dtype=complex),
                                  (n_b, self.N)))
        h = (np.zeros((n_b, self.N), dtype=complex) if self.h is None
             else np.broadcast_to(np.asarray(self.h, dtype=complex),
                                  (n_b, self.N)))
        return J, K, g, h


def trotter_weights(S, params, P):
    """Local weight tables of the Trotterized thermal trace on suspension S.

    Horizontal (P+1)-cells:  1 + (e^{beta K/M} - 1) delta_N(x).
    Horizontal P-cells:      exp((beta/M) sum_n h^(n) omega^(n x)).
    Vertical P-cells:        delta_N(x) + (e^{beta J/M} - 1)/N.
    Vertical (P+1)-cells:    (1/N) sum_j exp((beta/M) sum_n g^(n) omega^(n j))
                             omega^((-1)^P j x).
    """
    if S.time_axis is None:
        raise ValueError("complex is not a suspension")
    spatial = S.base
    if not (1 <= P <= spatial.dim - 1):
        raise ValueError("degree P out of range for the spatial complex")
    N, M, beta = params.N, params.M, params.beta
    if M != S.sizes[S.time_axis]:
        raise ValueError("params.M does not match the suspension")
    J, K, g, h = params.spatial_arrays(spatial, P)

    x = np.arange(N)
    Om = np.exp(2j * np.pi * np.outer(x, x) / N)  # Om[n, x] = omega^(n x)
    Wpar = 1.0 + (np.exp(beta * K / M) - 1.0)[:, None] * (x == 0)[None, :]
    Vpar = np.exp((beta / M) * (h @ Om))
    Vperp = (x == 0)[None, :] + ((np.exp(beta * J / M) - 1.0) / N)[:, None]
    Omp = np.exp(2j * np.pi * (-1) ** P * np.outer(x, x) / N)
    Wperp = np.exp((beta / M) * (g @ Om)) @ Omp / N

    W = np.empty((S.num_cells(P + 1), N), dtype=complex)
    V = np.empty((S.num_cells(P), N), dtype=complex)
    for i in range(M):
        W[S.horizontal_id[P + 1][:, i]] = Wpar
        W[S.vertical_id[P + 1][:, i]] = Wperp
        V[S.horizontal_id[P][:, i]] = Vpar
        V[S.vertical_id[P][:, i]] = Vperp
    return LocalWeights(cx=S, P=P, N=N, W=W, V=V)


# -- background charges -----------------------------------------------------------

@dataclass
class BackgroundCharge:
    """Electric cycle on the suspension and magnetic cycle on its dual."""

    dc: DualCorrespondence
    P: int
    N: int
    magnetic: FieldChain  # dual complex, degree dim - P - 1
    electric: FieldChain  # primal complex, degree P

    def __post_init__(self):
        n = self.dc.primal.dim
        if self.electric.cx is not self.dc.primal or self.electric.degree != self.P:
            raise ValueError("electric chain has wrong complex or degree")
        if self.magnetic.cx is not self.dc.dual or self.magnetic.degree != n - self.P - 1:
            raise ValueError("magnetic chain has wrong complex or degree")
        if self.electric.N != self.N or self.magnetic.N != self.N:
            raise ValueError("modulus mismatch")
        for ch, name in ((self.electric, "electric"), (self.magnetic, "magnetic")):
            bnd = ch.cx.boundary_matrix(ch.degree)
            if np.any(bnd @ ch.data % self.N):
                raise ValueError(f"{name} background is not a cycle")

    def magnetic_shift(self):
        """Curvature shift on primal (P+1)-cells (coefficient transport)."""
        return vartheta(self.dc, self.magnetic).data.copy()


def zero_background(dc, P, N):
    n = dc.primal.dim
    mag = FieldChain(dc.dual, n - P - 1, N,
                     np.zeros(dc.dual.num_cells(n - P - 1), dtype=np.int64))
    ele = FieldChain(dc.primal, P, N,
                     np.zeros(dc.primal.num_cells(P), dtype=np.int64))
    return BackgroundCharge(dc=dc, P=P, N=N, magnetic=mag, electric=ele)


def background_charge(dc, P, N, magnetic=None, electric=None):
    """BackgroundCharge from raw chains (either may be omitted)."""
    bg = zero_background(dc, P, N)
    mag = bg.magnetic if magnetic is None else magnetic
    ele = bg.electric if electric is None else electric
    return BackgroundCharge(dc=dc, P=P, N=N, magnetic=mag, electric=ele)


def lift_background(dc_bar, dc_sp, P, N, wilson=None, thooft=None,
                    electric_twist=None, magnetic_twist=None):
    """Spacetime background built from spatial insertions and Euclidean twists.

    wilson:          spatial P-cycle, placed horizontally on time slice 0.
    electric_twist:  spatial (P-1)-cycle, swept vertically around all slabs.
    thooft:          dual spatial (d-P)-cycle, curvature shift on the
                     vertical (P+1)-cells of slab 0.
    magnetic_twist:  dual spatial (d-P-1)-cycle, curvature shift on the
                     horizontal (P+1)-cells of every slice.
    """
    S = dc_bar.primal
    if S.time_axis is None:
        raise ValueError("dc_bar must be built on a suspension")
    spatial = S.base
    d = spatial.dim
    M = S.sizes[S.time_axis]

    def _check(ch, cx, deg, name):
        if ch is None:
            return
        if ch.cx is not cx or ch.degree != deg or ch.N != N:
            raise ValueError(f"{name} has wrong complex, degree, or modulus")
        if np.any(cx.boundary_matrix(deg) @ ch.data % N):
            raise ValueError(f"{name} is not a cycle")

    _check(wilson, spatial, P, "wilson")
    _check(electric_twist, spatial, P - 1, "electric_twist")
    _check(thooft, dc_sp.dual, d - P, "thooft")
    _check(magnetic_twist, dc_sp.dual, d - P - 1, "magnetic_twist")

    qe = np.zeros(S.num_cells(P), dtype=np.int64)
    if wilson is not None:
        qe[S.horizontal_id[P][:, 0]] += wilson.data
    if electric_twist is not None:
        for i in range(M):
            qe[S.vertical_id[P][:, i]] += electric_twist.data
    qe %= N

    eta = np.zeros(S.num_cells(P + 1), dtype=np.int64)
    if thooft is not None:
        eta[S.vertical_id[P + 1][:, 0]] += vartheta(dc_sp, thooft).data
    if magnetic_twist is not None:
        shift = vartheta(dc_sp, magnetic_twist).data
        for i in range(M):
            eta[S.horizontal_id[P + 1][:, i]] += shift
    eta %= N
    r = S.dim - P - 1
    q_m = eta[dc_bar.to_primal[r]]

    return BackgroundCharge(
        dc=dc_bar, P=P, N=N,
        magnetic=FieldChain(dc_bar.dual, r, N, q_m),
        electric=FieldChain(S, P, N, qe))


# -- exhaustive enumeration --------------------------------------------------------

def _effective_tables(S, w, bg):
    """V with the electric character folded in, and the curvature shift."""
    N = w.N
    if bg is None:
        eta = np.zeros(S.num_cells(w.P + 1), dtype=np.int64)
        qe = np.zeros(S.num_cells(w.P), dtype=np.int64)
    else:
        if bg.dc.primal is not S or bg.P != w.P or bg.N != N:
            raise ValueError("background does not match the complex/weights")
        eta = bg.magnetic_shift() % N
        qe = bg.electric.data % N
    x = np.arange(N)
    Veff = w.V * np.exp(2j * np.pi * np.outer(qe, x) / N)
    return Veff, eta


def partition_exact(S, w, bg=None, cap=DEFAULT_CAP, block=1 << 16, workers=1):
    """Background partition sum by exhaustive mixed-radix enumeration.

    Sum over all Z_N-valued P-cochains phi of
    chi(integral of phi over the electric cycle)
    * prod_c W_c((D phi + shift)_c) * prod_u V_u(phi_u).
    """
    N, P = w.N, w.P
    n_u = S.num_cells(P)
    if N ** n_u > cap:
        raise ValueError(
            "configuration count exceeds cap; use partition_sliced or the "
            "defect representation")
    Veff, eta = _effective_tables(S, w, bg)
    n_c = S.num_cells(P + 1)
    D2 = np.asarray(S.coboundary_matrix(P).todense(), dtype=np.int64)

    k_in = 0
    while k_in < n_u and N ** (k_in + 1) <= block:
        k_in += 1
    k_out = n_u - k_in
    n_in = N ** k_in

    X_in = np.stack(np.unravel_index(np.arange(n_in), (N,) * k_in),
                    axis=1).astype(np.int64) if k_in else np.zeros((1, 0), dtype=np.int64)
    flux_in = X_in @ D2[:, k_out:].T % N
    v_in = np.ones(n_in, dtype=complex)
    for j in range(k_in):
        v_in *= Veff[k_out + j, X_in[:, j]]
    Wext = np.concatenate([w.W, w.W], axis=1)  # index range 0..2N-1

    spans = np.array_split(np.arange(N ** k_out), workers)
    partials = []
    cols = np.arange(n_c)
    for span in spans:
        acc = 0.0 + 0.0j
        for flat in span:
            x_out = np.array(np.unravel_index(flat, (N,) * k_out),
                             dtype=np.int64) if k_out else np.zeros(0, dtype=np.int64)
            flux_out = (D2[:, :k_out] @ x_out + eta) % N
            idx = flux_in + flux_out[None, :]
            term = v_in.copy()
            for c in cols:
                term *= Wext[c, idx[:, c]]
            v_out = 1.0 + 0.0j
            for j in range(k_out):
                v_out *= Veff[j, x_out[j]]
            acc += v_out * term.sum()
        partials.append(acc)
    return complex(sum(partials))


# -- slab transfer with FFT convolutions ---------------------------------------------

def _axis_vec(vec, axis, n_axes):
    shape = [1] * n_axes
    shape[axis] = len(vec)
    return np.asarray(vec).reshape(shape)


def _negate_index(arr):
    """arr evaluated at -k mod N along every axis."""
    out = arr
    for ax in range(arr.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


def trace_diag_conv(diags, kernels_hat, dense_cap=2048, chunk=128):
    """Trace of prod_i diag(D_i) . C_i where <x|C_i|y> = K_i(x - y) on Z_N^n.

    diags are grid arrays of shape (N,)*n; kernels_hat are the unnormalized
    DFTs of the K_i on the same grid.  Uses a closed product for one factor,
    an FFT correlation for two, dense matrices for small dimensions, and a
    chunked matrix-free fallback otherwise.
    """
    M = len(diags)
    G = diags[0].shape
    dim = int(np.prod(G))
    axes = tuple(range(len(G)))
    if M == 1:
        return complex(diags[0].sum() * kernels_hat[0].mean())
    if M == 2:
        corr = np.fft.ifftn(np.fft.fftn(diags[0])
                            * _negate_index(np.fft.fftn(diags[1])))
        K0 = np.fft.ifftn(kernels_hat[0])
        K1 = np.fft.ifftn(kernels_hat[1])
        return complex((corr * K0 * _negate_index(K1)).sum())
    if dim <= dense_cap:
        digits = np.stack(np.unravel_index(np.arange(dim), G), axis=1)
        idx = np.zeros((dim, dim), dtype=np.int64)
        stride = 1
        for ax in range(len(G) - 1, -1, -1):
            col = digits[:, ax]
            idx += stride * ((col[:, None] - col[None, :]) % G[ax])
            stride *= G[ax]
        mat = None
        for D, Kh in zip(diags, kernels_hat):
            K = np.fft.ifftn(Kh).reshape(-1)
            C = D.reshape(-1)[:, None] * K[idx]
            mat = C if mat is None else mat @ C
        return complex(np.trace(mat))
    total = 0.0 + 0.0j
    for start in range(0, dim, chunk):
        csz = min(chunk, dim - start)
        psi = np.zeros((dim, csz), dtype=complex)
        psi[start + np.arange(csz), np.arange(csz)] = 1.0
        psi = psi.reshape(G + (csz,))
        for i in range(M - 1, -1, -1):
            psi = np.fft.ifftn(np.fft.fftn(psi, axes=axes)
                               * kernels_hat[i][..., None], axes=axes)
            psi = psi * diags[i][..., None]
        psi = psi.reshape(dim, csz)
        total += psi[start + np.arange(csz), np.arange(csz)].sum()
    return complex(total)


def _incidence_rows(mat):
    """List of (column indices, signs) per row of a sparse matrix."""
    mat = mat.tocsr()
    rows = []
    for i in range(mat.shape[0]):
        sl = slice(mat.indptr[i], mat.indptr[i + 1])
        rows.append((mat.indices[sl].astype(np.int64),
                     mat.data[sl].astype(np.int64)))
    return rows


def partition_sliced(S, w, bg=None, grid_cap=1 << 22, chunk=256):
    """Background partition sum via slab transfer over the time circle.

    Equals partition_exact on its domain; scales with N^(spatial P-cells)
    instead of N^(all P-cells).  For a single slab the horizontal and
    vertical variables decouple and no transfer is needed.
    """
    if S.time_axis is None:
        raise ValueError("complex is not a suspension")
    spatial = S.base
    N, P = w.N, w.P
    M = S.sizes[S.time_axis]
    n_b = spatial.num_cells(P)
    n_a = spatial.num_cells(P - 1)
    if N ** n_b > grid_cap:
        raise ValueError("spatial configuration grid exceeds cap")
    Veff, eta = _effective_tables(S, w, bg)

    G = (N,) * n_b
    omega = np.exp(2j * np.pi / N)
    rows_c = _incidence_rows(spatial.coboundary_matrix(P))      # (P+1)-cell <- P-cells
    cols_a = _incidence_rows(spatial.coboundary_matrix(P - 1).T.tocsr())
    hid_b = S.horizontal_id[P]
    hid_c = S.horizontal_id[P + 1]
    vid_a = S.vertical_id[P]
    vid_b = S.vertical_id[P + 1]
    arange = np.arange(N)

    k_grids = [None] * n_b  # lazily built per-axis index grids

    def kgrid(b):
        if k_grids[b] is None:
            k_grids[b] = _axis_vec(arange, b, n_b)
        return k_grids[b]

    def diag_slice(i):
        D = np.ones(G, dtype=complex)
        for b in range(n_b):
            D = D * _axis_vec(Veff[hid_b[b, i]], b, n_b)
        for c, (bs, signs) in enumerate(rows_c):
            idx = np.zeros(G, dtype=np.int64)
            for b, s in zip(bs, signs):
                idx = idx + s * kgrid(b)
            D = D * w.W[hid_c[c, i]][(idx + eta[hid_c[c, i]]) % N]
        return D

    def kernel_hat_slab(i):
        # DFT of the slab sum over vertical P-cell variables, as a function
        # of the (P+1)-flux contribution v of the adjacent slices, evaluated
        # in closed form.
        K = np.ones(G, dtype=complex)
        for b in range(n_b):
            vec = np.fft.fft(w.W[vid_b[b, i]]) * omega ** (arange * eta[vid_b[b, i]])
            K = K * _axis_vec(vec, b, n_b)
        for a, (bs, signs) in enumerate(cols_a):
            sa = np.zeros(G, dtype=np.int64)
            for b, s in zip(bs, signs):
                sa = sa + s * kgrid(b)
            fv = np.fft.fft(Veff[vid_a[a, i]])
            K = K * fv[(-sa) % N]
        # The slab couples slices through (-1)^P (phi(i+1) - phi(i)); in the
        # trace convention K(x_i - x_{i+1}) this flips the index for even P.
        if P % 2 == 0:
            K = _negate_index(K)
        return K

    diags = [diag_slice(i) for i in range(M)]
    kernels = [kernel_hat_slab(i) for i in range(M)]
    return trace_diag_conv(diags, kernels, chunk=chunk)


# -- normalization ------------------------------------------------------------------

def flat_cocycle_count(S, P, N, cap=1 << 22):
    """Number of Z_N-valued closed P-cochains on S."""
    d = np.asarray(S.coboundary_matrix(P).todense(), dtype=np.int64)
    n_u = S.num_cells(P)
    if fm.is_prime(N):
        return N ** (n_u - fm.fn_rank(d, N))
    if N ** n_u > cap:
        raise ValueError("composite-modulus cocycle count exceeds cap")
    count = 0
    for flat in range(N ** n_u):
        x = np.array(np.unravel_index(flat, (N,) * n_u), dtype=np.int64)
        if not np.any(d @ x % N):
            count += 1
    return count


def vacuum_normalization(S, w):
    """Product of W zero modes times DFT zero modes of V over sqrt(N)."""
    w.require_zero_modes()
    return complex(np.prod(w.W[:, 0]) * np.prod(w.V.sum(axis=1) / w.N))


def normalized_amplitude(S, w, bg=None, method="auto", cap=DEFAULT_CAP,
                         grid_cap=1 << 22):
    """Partition sum divided by the vacuum normalization and the number of
    closed P-cochains; the natural amplitude of the closed-defect gas."""
    N, P = w.N, w.P
    if method == "auto":
        method = "exact" if N ** S.num_cells(P) <= cap else "sliced"
    if method == "exact":
        Z = partition_exact(S, w, bg, cap=cap)
    elif method == "sliced":
        Z = partition_sliced(S, w, bg, grid_cap=grid_cap)
    else:
        raise ValueError("unknown method")
    return Z / (vacuum_normalization(S, w) * flat_cocycle_count(S, P, N))


# -- weight table serialization -------------------------------------------------------

def weights_to_json(w):
    def pack(arr):
        return {str(i): [[float(z.real), float(z.imag)] for z in row]
                for i, row in enumerate(arr)}
    return {"N": w.N, "degree": w.P, "W": pack(w.W), "V": pack(w.V)}


def weights_from_json(S, obj):
    N, P = int(obj["N"]), int(obj["degree"])

    def unpack(d, n_rows):
        arr = np.zeros((n_rows, N), dtype=complex)
        for key, row in d.items():
            arr[int(key)] = [complex(re, im) for re, im in row]
        return arr

    return LocalWeights(cx=S, P=P, N=N,
                        W=unpack(obj["W"], S.num_cells(P + 1)),
                        V=unpack(obj["V"], S.num_cells(P)))
