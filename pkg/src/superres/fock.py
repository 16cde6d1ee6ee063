"""Exact two-mode Fock-space reference for NOON-state interference.

Deliberately brute force: ladder operators are built on the truncated space
``{0..N} x {0..N}`` and the beam splitter is a matrix exponential of its
photon-number-conserving generator, so nothing here shares code with the
closed form in :mod:`superres.optics`.
"""

import math

import numpy as np
from scipy.linalg import expm

MAX_N = 4


def _ladder(dim):
    return np.diag(np.sqrt(np.arange(1, dim)), k=1).astype(complex)


def _two_mode_ops(n):
    dim = n + 1
    a1 = _ladder(dim)
    eye = np.eye(dim, dtype=complex)
    return np.kron(a1, eye), np.kron(eye, a1)


def _basis_index(n, na, nb):
    return na * (n + 1) + nb


def noon_output_distribution(n, phi):
    """Photon-number distribution ``P[k]`` of ``k`` photons in output a (``n-k`` in b).

    Input ``(|n,0> + |0,n>)/sqrt 2``; mode b acquires ``exp(i n_b phi)``; then a
    balanced beam splitter ``exp(pi/4 (a^dag b - a b^dag))``.
    """
    if not 1 <= n <= MAX_N:
        raise ValueError(f"Fock reference supports 1 <= N <= {MAX_N}, got {n}")
    a, b = _two_mode_ops(n)
    dim = (n + 1) ** 2
    psi = np.zeros(dim, dtype=complex)
    psi[_basis_index(n, n, 0)] = 1 / math.sqrt(2)
    psi[_basis_index(n, 0, n)] = 1 / math.sqrt(2)
    nb = b.conj().T @ b
    phase = expm(1j * phi * nb)
    bs = expm((math.pi / 4) * (a.conj().T @ b - a @ b.conj().T))
    out = bs @ (phase @ psi)
    return np.array([abs(out[_basis_index(n, k, n - k)]) ** 2 for k in range(n + 1)])


def noon_reference_prob(n, phi, port="plus"):
    """Exact counterpart of ``(1 +/- cos(n phi))/2``.

    ``plus``: all ``n`` photons leave through output a, rescaled by ``2**(n-1)``
    (the post-selection weight of that outcome at a bright fringe).  ``minus``:
    odd photon number in output b.  Both are plain projections of the Fock
    state above.
    """
    dist = noon_output_distribution(n, phi)
    if port == "plus":
        return float(dist[n] * 2.0 ** (n - 1))
    if port == "minus":
        k = np.arange(n + 1)
        return float(dist[(n - k) % 2 == 1].sum())
    raise ValueError(f"port must be 'plus' or 'minus', got {port!r}")
