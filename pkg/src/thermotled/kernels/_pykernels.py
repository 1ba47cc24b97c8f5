"""Vectorised numpy implementation of the element and node kernels.

Same signatures and semantics as the compiled ``_ckernels`` module. ``workers``
is accepted for interface parity and ignored.
"""
import numpy as np

from ..materials import HyperelasticParams, total_pk2_stress

NAME = "numpy"


def deformation_gradients(conn, grad, disp, workers=1):
    u_e = disp[conn]  # (E, n, 3)
    F = np.einsum("eai,eja->eij", u_e, grad)
    F[:, 0, 0] += 1.0
    F[:, 1, 1] += 1.0
    F[:, 2, 2] += 1.0
    return np.ascontiguousarray(F)


def thermal_element_loads(conn, grad, vol, F, D, T, workers=1):
    Finv = np.linalg.inv(F)
    J = np.linalg.det(F)
    B = np.einsum("eka,ekj->eaj", grad, Finv)  # spatial gradients, (E, n, 3)
    gradT = np.einsum("eaj,ea->ej", B, T[conn])
    q = np.einsum("ejk,ek->ej", D, gradT)
    return (vol * J)[:, None] * np.einsum("eaj,ej->ea", B, q)


def element_forces(
    conn, grad, vol, F, Fth, fibers, mu, kappa, eta, pa, pb, hist, hg, hg_k, disp, workers=1
):
    """Internal forces ``(E, n, 3)``; updates ``hist`` (E, P, 3, 3) in place."""
    params = HyperelasticParams(mu, kappa, eta)
    S = total_pk2_stress(F, Fth, params, fibers if eta > 0 else None)
    if len(pa):
        new = pa[None, :, None, None] * S[:, None] + pb[None, :, None, None] * hist
        hist[...] = new
        S = S - new.sum(axis=1)
    P = F @ S
    f = vol[:, None, None] * np.einsum("eij,eja->eai", P, grad)
    if hg is not None:
        u_e = disp[conn]
        proj = np.einsum("eka,eai->eki", hg, u_e)
        f += hg_k[:, None, None] * np.einsum("eka,eki->eai", hg, proj)
    return f


def gather(ptr, slot, values, n_nodes, workers=1):
    """Sum element-slot values into nodes in adjacency order.

    ``values`` is ``(E*n,)`` or ``(E*n, 3)``; ``slot`` lists the slots of each
    node contiguously (CSR by ``ptr``), element-ascending.
    """
    values = np.asarray(values)
    owner = np.repeat(np.arange(n_nodes), np.diff(ptr))
    ordered = values[slot]
    if values.ndim == 1:
        return np.bincount(owner, weights=ordered, minlength=n_nodes)
    return np.stack(
        [np.bincount(owner, weights=ordered[:, c], minlength=n_nodes) for c in range(values.shape[1])],
        axis=1,
    )
