"""Operator-level oracle for the decorated Trotterized thermal trace.

States are dense complex arrays over Z_N^(number of P-cells); every operator
acts through axis rolls (shift operators) or per-axis diagonal factors (clock
operators).  The Trotter step splits into a diagonal Z-part and an X-part
that is a group convolution, so traces reduce to the diagonal/convolution
trace of the spacetime module with independently constructed inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cells import DualCorrespondence, FieldChain, dualize, vartheta
from . import fieldmath as fm
from .spacetime import TrotterParams, trace_diag_conv

DEFAULT_DIM_CAP = 1 << 20


def _incidence_cols(mat):
    mat = mat.tocsc()
    cols = []
    for j in range(mat.shape[1]):
        sl = slice(mat.indptr[j], mat.indptr[j + 1])
        cols.append((mat.indices[sl].astype(np.int64),
                     mat.data[sl].astype(np.int64)))
    return cols


def _incidence_rows(mat):
    mat = mat.tocsr()
    rows = []
    for i in range(mat.shape[0]):
        sl = slice(mat.indptr[i], mat.indptr[i + 1])
        rows.append((mat.indices[sl].astype(np.int64),
                     mat.data[sl].astype(np.int64)))
    return rows


class WeylOperators:
    """Shift/clock operators and stabilizers on the P-cell Hilbert space.

    One Z_N degree of freedom per P-cell of the spatial complex; operators
    are applied as tensor-structured actions, never dense matrices.
    """

    def __init__(self, spatial, P, N, cap=DEFAULT_DIM_CAP):
        if not (1 <= P <= spatial.dim - 1):
            raise ValueError("degree P out of range for the spatial complex")
        self.spatial = spatial
        self.P = P
        self.N = N
        self.n_sites = spatial.num_cells(P)
        if N ** self.n_sites > cap:
            raise ValueError("Hilbert dimension exceeds cap")
        self.shape = (N,) * self.n_sites
        self.dim = N ** self.n_sites
        # star[a]: P-cells around the (P-1)-cell a with incidence signs
        self.star = _incidence_cols(spatial.coboundary_matrix(P - 1))
        # plaq[c]: P-cells on the rim of the (P+1)-cell c with signs
        self.plaq = _incidence_rows(spatial.coboundary_matrix(P))
        self.a_sign = (-1) ** P
        self.omega = np.exp(2j * np.pi / N)

    def zero_state(self):
        psi = np.zeros(self.shape, dtype=complex)
        psi[(0,) * self.n_sites] = 1.0
        return psi

    def random_state(self, rng):
        return (rng.normal(size=self.shape)
                + 1j * rng.normal(size=self.shape))

    def _axis_phase(self, b, exponent):
        vec = self.omega ** (exponent * np.arange(self.N))
        shape = [1] * self.n_sites
        shape[b] = self.N
        return vec.reshape(shape)

    def apply_x(self, psi, b, s=1):
        """X_b^s: shifts the site value, |j> -> |j+s>."""
        return np.roll(psi, s, axis=b)

    def apply_z(self, psi, b, r=1):
        """Z_b^r: multiplies by omega^(r j)."""
        return psi * self._axis_phase(b, r)

    def apply_a(self, psi, a, m=1):
        """Gauss operator power A_a^m (product of shifts around the star)."""
        bs, signs = self.star[a]
        shifts = tuple(int(self.a_sign * s * m) for s in signs)
        return np.roll(psi, shifts, axis=tuple(int(b) for b in bs))

    def b_diag(self, c):
        """Diagonal of the flux operator B_c (product of clock factors)."""
        bs, signs = self.plaq[c]
        out = np.ones(self.shape, dtype=complex)
        for b, s in zip(bs, signs):
            out = out * self._axis_phase(int(b), int(s))
        return out

    def apply_b(self, psi, c, m=1):
        return psi * self.b_diag(c) ** m

    def proj_a(self, psi, a):
        """Stabilizer projector (1/N) sum_m A_a^m applied to psi."""
        acc = np.zeros_like(psi)
        for m in range(self.N):
            acc += self.apply_a(psi, a, m)
        return acc / self.N

    def proj_b_diag(self, c):
        bd = self.b_diag(c)
        acc = np.ones_like(bd)
        pw = np.ones_like(bd)
        for _ in range(self.N - 1):
            pw = pw * bd
            acc = acc + pw
        return acc / self.N

    def b_spectral_diag(self, c, values):
        """Diagonal of sum_j values[j] Pi_(c,j) from the B_c spectral family."""
        bd = self.b_diag(c)
        pw = np.ones_like(bd)
        powers = [pw]
        for _ in range(self.N - 1):
            pw = pw * bd
            powers.append(pw)
        out = np.zeros_like(bd)
        for j in range(self.N):
            proj = np.zeros_like(bd)
            for m in range(self.N):
                proj += self.omega ** (-j * m) * powers[m]
            out += values[j] * proj / self.N
        return out

    def wilson_diag(self, cycle):
        """Diagonal of the Wilson product of clock operators along a P-cycle."""
        out = np.ones(self.shape, dtype=complex)
        for b in np.nonzero(cycle)[0]:
            out = out * self._axis_phase(int(b), int(cycle[b]))
        return out

    def thooft_shifts(self, dual_cycle_transport):
        """Shift pattern of the disorder operator, from the transported
        coefficients of a dual (d-P)-cycle."""
        return (self.a_sign * np.asarray(dual_cycle_transport, dtype=np.int64)
                % self.N)

    def apply_shifts(self, psi, shifts):
        nz = np.nonzero(shifts)[0]
        if len(nz) == 0:
            return psi
        return np.roll(psi, tuple(int(shifts[b]) for b in nz),
                       axis=tuple(int(b) for b in nz))


@dataclass
class InsertionData:
    """Spatial insertions: Wilson/'t Hooft cycles and the two Euclidean
    twists, with the dual correspondence they live on."""

    dc: DualCorrespondence
    N: int
    P: int
    wilson: FieldChain = None
    thooft: FieldChain = None
    electric_twist: FieldChain = None
    magnetic_twist: FieldChain = None

    def __post_init__(self):
        spatial = self.dc.primal
        d = spatial.dim
        specs = ((self.wilson, spatial, self.P, "wilson"),
                 (self.electric_twist, spatial, self.P - 1, "electric_twist"),
                 (self.thooft, self.dc.dual, d - self.P, "thooft"),
                 (self.magnetic_twist, self.dc.dual, d - self.P - 1,
                  "magnetic_twist"))
        for ch, cx, deg, name in specs:
            if ch is None:
                continue
            if ch.cx is not cx or ch.degree != deg or ch.N != self.N:
                raise ValueError(f"{name} has wrong complex, degree, or modulus")
            if np.any(cx.boundary_matrix(deg) @ ch.data % self.N):
                raise ValueError(f"{name} is not a cycle")


def build_weyl(spatial, P, N, cap=DEFAULT_DIM_CAP):
    return WeylOperators(spatial, P, N, cap=cap)


def _x_step_kernel(ops, params, spatial):
    """Position kernel of e^(-beta H_x / M): the operator applied to the
    delta state at the origin (an X-step is a group convolution)."""
    N, M, beta = params.N, params.M, params.beta
    J, K, g, h = params.spatial_arrays(spatial, ops.P)
    psi = ops.zero_state()
    for a in range(spatial.num_cells(ops.P - 1)):
        psi = psi + (np.exp(beta * J[a] / M) - 1.0) * ops.proj_a(psi, a)
    k = np.arange(N)
    Om = np.exp(2j * np.pi * np.outer(k, k) / N)
    for b in range(ops.n_sites):
        eig = np.exp((beta / M) * (g[b] @ Om))  # eigenvalue on X-charge k
        q = np.fft.fft(eig) / N  # coefficients of sum_j q_j X^j
        acc = np.zeros_like(psi)
        for j in range(N):
            if q[j] != 0:
                acc += q[j] * ops.apply_x(psi, b, j)
        psi = acc
    return psi


def _z_step_diag(ops, params, spatial):
    """Diagonal of e^(-beta H_z / M)."""
    N, M, beta = params.N, params.M, params.beta
    J, K, g, h = params.spatial_arrays(spatial, ops.P)
    D = np.ones(ops.shape, dtype=complex)
    for c in range(spatial.num_cells(ops.P + 1)):
        D = D * np.exp((beta * K[c] / M) * ops.proj_b_diag(c))
    x = np.arange(N)
    Om = np.exp(2j * np.pi * np.outer(x, x) / N)
    for b in range(ops.n_sites):
        vec = np.exp((beta / M) * (h[b] @ Om))
        shape = [1] * ops.n_sites
        shape[b] = N
        D = D * vec.reshape(shape)
    return D


def _electric_twist_apply(ops, params, spatial, alpha, psi):
    """U_e(alpha) applied to psi, via the A_a spectral families."""
    N, M, beta = params.N, params.M, params.beta
    J, K, g, h = params.spatial_arrays(spatial, ops.P)
    j = np.arange(N)
    for a in np.nonzero(alpha)[0]:
        lam = 1.0 + (np.exp(beta * J[a] / M) - 1.0) * (j == 0)
        ratio = np.roll(lam, -int(alpha[a])) / lam  # lam_(j+alpha)/lam_j
        u = np.fft.fft(ratio) / N  # coefficients of sum_m u_m A_a^m
        acc = np.zeros_like(psi)
        for m in range(N):
            acc += u[m] * ops.apply_a(psi, int(a), m)
        psi = acc
    return psi


def _magnetic_twist_diag(ops, params, spatial, beta_shift):
    """Diagonal of U_m, via the B_c spectral families."""
    N, M, beta = params.N, params.M, params.beta
    J, K, g, h = params.spatial_arrays(spatial, ops.P)
    j = np.arange(N)
    D = np.ones(ops.shape, dtype=complex)
    for c in np.nonzero(beta_shift)[0]:
        rho = 1.0 + (np.exp(beta * K[c] / M) - 1.0) * (j == 0)
        ratio = np.roll(rho, -int(beta_shift[c])) / rho
        D = D * ops.b_spectral_diag(int(c), ratio)
    return D


def decorated_trace(spatial, P, params, ins=None, cap=DEFAULT_DIM_CAP):
    """Trace of the Trotterized thermal circuit with spatial insertions on
    the first slice/slab and Euclidean twists on every slab."""
    N, M = params.N, params.M
    ops = WeylOperators(spatial, P, N, cap=cap)

    alpha = np.zeros(spatial.num_cells(P - 1), dtype=np.int64)
    beta_shift = np.zeros(spatial.num_cells(P + 1), dtype=np.int64)
    wilson = np.zeros(ops.n_sites, dtype=np.int64)
    thooft_transport = np.zeros(ops.n_sites, dtype=np.int64)
    if ins is not None:
        if ins.N != N or ins.P != P or ins.dc.primal is not spatial:
            raise ValueError("insertions do not match the trace arguments")
        if ins.electric_twist is not None:
            alpha = ins.electric_twist.data % N
        if ins.magnetic_twist is not None:
            beta_shift = vartheta(ins.dc, ins.magnetic_twist).data % N
        if ins.wilson is not None:
            wilson = ins.wilson.data % N
        if ins.thooft is not None:
            thooft_transport = vartheta(ins.dc, ins.thooft).data % N

    x_kernel = _x_step_kernel(ops, params, spatial)
    z_diag = _z_step_diag(ops, params, spatial)
    um_diag = _magnetic_twist_diag(ops, params, spatial, beta_shift)

    # slab kernel: U_e e^(-beta H_x/M) applied to the origin delta state,
    # with the 't Hooft shift prepended on the first slab
    plain_kernel = _electric_twist_apply(ops, params, spatial, alpha, x_kernel)
    first_kernel = ops.apply_shifts(plain_kernel,
                                    ops.thooft_shifts(thooft_transport))
    plain_diag = um_diag * z_diag
    first_diag = ops.wilson_diag(wilson) * plain_diag

    diags = [first_diag] + [plain_diag] * (M - 1)
    kernels = [np.fft.fftn(first_kernel)] + [np.fft.fftn(plain_kernel)] * (M - 1)
    return trace_diag_conv(diags, kernels)


def wt_algebra_check(spatial, P, N, dc=None, seed=0, cap=DEFAULT_DIM_CAP):
    """Exact algebra of Wilson/'t Hooft operators on random states.

    Returns max absolute errors for: the Weyl relation, stabilizer
    commutation, projector idempotence, boundary Wilson operators as flux
    stabilizer products, boundary disorder operators as Gauss stabilizer
    products, and the mixed commutator phase against the intersection
    pairing.
    """
    ops = WeylOperators(spatial, P, N, cap=cap)
    if dc is None:
        dc = dualize(spatial)
    rng = np.random.default_rng(seed)
    psi = ops.random_state(rng)
    report = {}

    b = int(rng.integers(ops.n_sites))
    r, s = (int(v) for v in rng.integers(1, N + 1, size=2))
    lhs = ops.apply_z(ops.apply_x(psi, b, s), b, r)
    rhs = ops.omega ** (r * s) * ops.apply_x(ops.apply_z(psi, b, r), b, s)
    report["weyl_relation"] = float(np.max(np.abs(lhs - rhs)))

    err = 0.0
    for a in range(spatial.num_cells(P - 1)):
        for c in range(spatial.num_cells(P + 1)):
            lhs = ops.apply_b(ops.apply_a(psi, a), c)
            rhs = ops.apply_a(ops.apply_b(psi, c), a)
            err = max(err, float(np.max(np.abs(lhs - rhs))))
    report["stabilizer_commutation"] = err

    a = int(rng.integers(spatial.num_cells(P - 1)))
    c = int(rng.integers(spatial.num_cells(P + 1)))
    once_a = ops.proj_a(psi, a)
    pb = ops.proj_b_diag(c)
    report["projector_idempotence"] = float(max(
        np.max(np.abs(ops.proj_a(once_a, a) - once_a)),
        np.max(np.abs(pb * pb - pb))))

    # boundary Wilson operator = product of flux stabilizers
    sigma = rng.integers(0, N, spatial.num_cells(P + 1))
    nu = np.asarray(spatial.boundary_matrix(P + 1).todense()) @ sigma % N
    lhs = psi * ops.wilson_diag(nu)
    rhs = psi.copy()
    for c in np.nonzero(sigma)[0]:
        rhs = ops.apply_b(rhs, int(c), int(sigma[c]))
    report["boundary_wilson_is_stabilizer_product"] = float(
        np.max(np.abs(lhs - rhs)))

    # boundary disorder operator = product of Gauss stabilizers
    d = spatial.dim
    xi = rng.integers(0, N, dc.dual.num_cells(d - P + 1))
    mu_b = np.asarray(dc.dual.boundary_matrix(d - P + 1).todense()) @ xi % N
    mu_chain = FieldChain(dc.dual, d - P, N, mu_b)
    transport = vartheta(dc, mu_chain).data % N
    lhs = ops.apply_shifts(psi, ops.thooft_shifts(transport))
    xi_transport = vartheta(dc, FieldChain(dc.dual, d - P + 1, N, xi)).data % N
    rhs = psi.copy()
    for a in np.nonzero(xi_transport)[0]:
        rhs = ops.apply_a(rhs, int(a), int(xi_transport[a]))
    report["boundary_thooft_is_stabilizer_product"] = float(
        np.max(np.abs(lhs - rhs)))

    # mixed commutator phase against the intersection pairing
    kern_p = fm.fn_kernel(
        np.asarray(spatial.boundary_matrix(P).todense()), N) if fm.is_prime(N) \
        else None
    if kern_p is not None:
        kern_d = fm.fn_kernel(
            np.asarray(dc.dual.boundary_matrix(d - P).todense()), N)
        nu = kern_p @ rng.integers(0, N, kern_p.shape[1]) % N
        mu = kern_d @ rng.integers(0, N, kern_d.shape[1]) % N
        mu_chain = FieldChain(dc.dual, d - P, N, mu)
        inter = fm.intersection(dc, mu_chain, FieldChain(spatial, P, N, nu))
        shifts = ops.thooft_shifts(vartheta(dc, mu_chain).data)
        lhs = ops.apply_shifts(psi * ops.wilson_diag(nu), shifts)
        rhs = ops.apply_shifts(psi, shifts) * ops.wilson_diag(nu)
        phase = ops.omega ** (-ops.a_sign * inter.residue)
        report["mixed_commutator_phase"] = float(
            np.max(np.abs(lhs - phase * rhs)))
    return report
