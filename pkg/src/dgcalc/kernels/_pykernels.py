"""Pure numpy implementation of the element-local kernels."""
import numpy as np


def apply_local(self_blocks, nbr_idx, nbr_blocks, beta, extra, minv):
    """Element-local operator application.

    Computes ``alpha_K = minv_K (S_K beta_K + sum_f N_Kf beta_nbr(K,f) + extra_K)``
    for every element. Faces with ``nbr_idx < 0`` are skipped.

    Parameters
    ----------
    self_blocks : ndarray (nel, n, m)
    nbr_idx : ndarray (nel, nf) of int
    nbr_blocks : ndarray (nel, nf, n, m)
    beta : ndarray (nel, m)
    extra : ndarray (nel, n)
    minv : ndarray (nel, n, n)

    Returns
    -------
    ndarray (nel, n)
    """
    b = np.einsum("kij,kj->ki", self_blocks, beta)
    own = np.arange(beta.shape[0])
    for f in range(nbr_idx.shape[1]):
        idx = nbr_idx[:, f]
        valid = idx >= 0
        nb = beta[np.where(valid, idx, own)]
        term = np.einsum("kij,kj->ki", nbr_blocks[:, f], nb)
        b = b + np.where(valid[:, None], term, 0.0)
    b = b + extra
    return np.einsum("kij,kj->ki", minv, b)


def quad_values(coeffs, table):
    """Evaluate modal coefficients (nel, n) at points with basis table (nq, n)."""
    return coeffs @ table.T
