"""Closed-form spectrum of the standard Dirichlet difference Laplacian.

On a box of side L with N cells per axis (h = L/N, N-1 interior nodes)
the operator sum_axes D^T D / h^2 built from forward differences with a
zero boundary has per-axis eigenvalues

    (4 / h^2) * sin(j*pi / (2N))^2,   j = 1..N-1,

and the d-dimensional spectrum is all sums of one term per axis.
"""

import numpy as np


def box_eigenvalues(res, lengths, k: int) -> np.ndarray:
    per_axis = []
    for N, L in zip(res, lengths):
        h = L / N
        j = np.arange(1, N)
        per_axis.append((4.0 / h ** 2) * np.sin(j * np.pi / (2 * N)) ** 2)
    acc = per_axis[0]
    for ev in per_axis[1:]:
        acc = (acc[:, None] + ev[None, :]).ravel()
    return np.sort(acc)[:k]


if __name__ == "__main__":
    ev = box_eigenvalues((8, 8), (np.pi, np.pi), 12)
    print(np.array2string(ev, precision=12))
