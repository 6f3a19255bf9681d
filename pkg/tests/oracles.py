"""Brute-force checks shared by module and acceptance tests."""

import numpy as np

from integro_spectral.chareq import delta_batch


def mesh_minima(p, box, shape=(400, 100), threshold=1e-3):
    """Interior local minima of |Delta| below ``threshold`` on a uniform mesh.

    Returns the mesh spacing and a list of ``(lambda, |Delta|)``.
    """
    re = np.linspace(box.re_min, box.re_max, shape[0])
    im = np.linspace(box.im_min, box.im_max, shape[1])
    L = re[:, None] + 1j * im[None, :]
    chunks = np.array_split(L.ravel(), max(1, L.size // 5000))
    A = np.abs(np.concatenate([delta_batch(p, c)[0] for c in chunks])).reshape(L.shape)
    found = []
    for i in range(1, shape[0] - 1):
        for j in range(1, shape[1] - 1):
            if A[i, j] < threshold and A[i, j] <= A[i - 1:i + 2, j - 1:j + 2].min():
                found.append((L[i, j], A[i, j]))
    return (re[1] - re[0], im[1] - im[0]), found


def unmatched_basins(p, box, roots, **kw):
    """Mesh minima whose cell does not contain exactly one reported root."""
    (dr, di), minima = mesh_minima(p, box, **kw)
    roots = np.asarray(roots, dtype=complex)
    bad = []
    for lam, mag in minima:
        inside = np.sum((np.abs(roots.real - lam.real) <= dr) & (np.abs(roots.imag - lam.imag) <= di))
        if inside != 1:
            bad.append((lam, mag, int(inside)))
    return minima, bad
