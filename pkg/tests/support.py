"""Shared helpers for building cycles and random weight tables in tests."""

import numpy as np

from znlab.cells import FieldChain
from znlab import fieldmath as fm
from znlab.spacetime import LocalWeights


def straight_loop(X, axis, base_coords, N, coeff=1):
    """1-cycle winding once around `axis` through the given base point."""
    L = X.sizes[axis]
    data = np.zeros(X.num_cells(1), dtype=np.int64)
    for k in range(L):
        coords = list(base_coords)
        coords[axis] = k
        data[X.index[1][(tuple(coords), (axis,))]] = coeff % N
    return FieldChain(X, 1, N, data)


def point_chain(X, coords, N, coeff=1):
    data = np.zeros(X.num_cells(0), dtype=np.int64)
    data[X.index[0][(tuple(coords), ())]] = coeff % N
    return FieldChain(X, 0, N, data)


def random_cycle(X, p, N, rng):
    kern = fm.fn_kernel(np.asarray(X.boundary_matrix(p).todense()), N)
    return FieldChain(X, p, N, kern @ rng.integers(0, N, kern.shape[1]) % N)


def random_weights(S, P, N, rng, scale=1.0):
    """Random complex tables with zero modes pushed away from zero."""
    W = scale * (rng.normal(size=(S.num_cells(P + 1), N))
                 + 1j * rng.normal(size=(S.num_cells(P + 1), N)))
    V = scale * (rng.normal(size=(S.num_cells(P), N))
                 + 1j * rng.normal(size=(S.num_cells(P), N)))
    W[:, 0] += 3.0
    V[:, 0] += 3.0
    return LocalWeights(cx=S, P=P, N=N, W=W, V=V)
