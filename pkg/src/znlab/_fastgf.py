"""Dense elimination over small prime fields, tuned for sampler loops.

Row echelon (zeros below pivots only), back substitution, and block
reduction against an echelon basis, all on uint8 arrays with values in
[0, N).  The inner updates avoid division: the pivot row is pre-scaled
for every multiplier, so each update is one add and one conditional
subtract, which the compiler vectorizes.  Intended for N small enough
that 2(N-1) fits in a byte; callers keep entries reduced mod N.
"""

import numpy as np
from numba import njit

__all__ = ["row_echelon", "kernel_sample", "reduce_block", "as_field"]


def as_field(A, N):
    """uint8 copy of A reduced mod N (C order)."""
    return np.ascontiguousarray((np.asarray(A, dtype=np.int64) % N).astype(np.uint8))


@njit(cache=True)
def row_echelon(A, N):
    """In-place row echelon of uint8 A mod prime N.

    Returns (rank, pivcols) with pivcols[i] the pivot column of row i.
    Pivot rows are normalized to leading 1; entries below pivots are
    cleared, entries above are not.
    """
    m, n = A.shape
    pivcols = np.empty(min(m, n), dtype=np.int64)
    scaled = np.empty((N, n), dtype=np.uint8)
    # multiplicative inverses mod N
    inv = np.zeros(N, dtype=np.uint8)
    for a in range(1, N):
        for b in range(1, N):
            if (a * b) % N == 1:
                inv[a] = b
                break
    r = 0
    for c in range(n):
        if r == m:
            break
        k = -1
        for i in range(r, m):
            if A[i, c] != 0:
                k = i
                break
        if k < 0:
            continue
        if k != r:
            for j in range(c, n):
                t = A[r, j]
                A[r, j] = A[k, j]
                A[k, j] = t
        f = inv[A[r, c]]
        if f != 1:
            for j in range(c, n):
                A[r, j] = (A[r, j] * f) % N
        # pre-scale the pivot row by every negated multiplier
        for s in range(1, N):
            coef = (N - s) % N
            for j in range(c, n):
                scaled[s, j] = (coef * A[r, j]) % N
        for i in range(r + 1, m):
            f = A[i, c]
            if f != 0:
                row = scaled[f]
                for j in range(c, n):
                    t = A[i, j] + row[j]
                    if t >= N:
                        t -= N
                    A[i, j] = t
        pivcols[r] = c
        r += 1
    return r, pivcols[:r]


@njit(cache=True)
def kernel_sample(E, pivcols, rank, free_vals, N):
    """Uniform kernel element from an echelonized constraint matrix.

    E is the output of row_echelon on the constraint rows; free_vals
    supplies uniform values for the non-pivot coordinates in column
    order.  Back substitution fills the pivot coordinates.
    """
    n = E.shape[1]
    x = np.zeros(n, dtype=np.uint8)
    is_piv = np.zeros(n, dtype=np.uint8)
    for i in range(rank):
        is_piv[pivcols[i]] = 1
    t = 0
    for j in range(n):
        if not is_piv[j]:
            x[j] = free_vals[t]
            t += 1
    for i in range(rank - 1, -1, -1):
        c = pivcols[i]
        s = 0
        for j in range(c + 1, n):
            if E[i, j] != 0 and x[j] != 0:
                s += E[i, j] * x[j]
        x[c] = (N - s % N) % N
    return x


@njit(cache=True)
def reduce_block(E, pivcols, rank, B, N):
    """Reduce the rows of B modulo the row space of the echelon E, in place.

    Afterwards two rows of the original B are congruent modulo the row
    space exactly when the reduced rows are equal.
    """
    n = E.shape[1]
    scaled = np.zeros((N, rank, n), dtype=np.uint8)
    for i in range(rank):
        c = pivcols[i]
        for s in range(1, N):
            coef = N - s
            for j in range(c, n):
                scaled[s, i, j] = (coef * E[i, j]) % N
    for t in range(B.shape[0]):
        for i in range(rank):
            c = pivcols[i]
            f = B[t, c]
            if f != 0:
                row = scaled[f, i]
                for j in range(c, n):
                    v = B[t, j] + row[j]
                    if v >= N:
                        v -= N
                    B[t, j] = v
    return B
