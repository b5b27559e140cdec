"""Pointwise constitutive quantities: bulk potentials, molecular field, stresses, stretching.

Potential families
------------------
FF : f(Q) = a Q - (b/3)(Q^2 + Q Q^t + Q^t Q) + c |Q|^2 Q        (general tensors)
FZ : f(Q) = a Q - b (Q^2 - tr(Q^2)/3 I) + c |Q|^2 Q             (traceless family)
M1 : f(Q) = f_FF(Q) - alpha(Q) I, a trace-removed variant of FF.

For M1, alpha blends two scalars: alpha_quad = -(b/9)(Q : Q^t + 2 |Q|^2),
which removes the trace of f_FF on every traceless Q, and
alpha_trace = tr(f_FF(Q))/3, the exact trace projection for arbitrary Q.
The two coincide on traceless states; the blend weight is m1_theta
(theta = 1 selects the quadratic form).  With this sign convention M1
reduces to FZ on symmetric traceless states.

All operations are pure and data-parallel per cell.
"""

from __future__ import annotations

import numpy as np

from .fields import (ModelParams, Potential, ScalarField, Stretching,
                     TensorField, _check_same_grid)
from .operators import FieldRole, laplacian, tensor_gradient

PotentialKind = Potential


def _mm(A, B):
    return np.einsum("ik...,kj...->ij...", A, B)


def _ddot(A, B):
    return np.einsum("ij...,ij...->...", A, B)


def _tr(A):
    return np.einsum("ii...->...", A)


def _add_iso(data, scalar):
    """data + scalar * I pointwise."""
    out = data.copy()
    for i in range(3):
        out[i, i] += scalar
    return out


def potential_f(Q: TensorField, params: ModelParams, kind: Potential,
                m1_theta: float = 1.0) -> TensorField:
    """Bulk-potential derivative f(Q) for the selected family."""
    a, b, c = params.a, params.b, params.c
    Qd = Q.data
    Qt = np.swapaxes(Qd, 0, 1)
    normsq = _ddot(Qd, Qd)

    if kind is Potential.FZ:
        Q2 = _mm(Qd, Qd)
        out = a * Qd - b * _add_iso(Q2, -_tr(Q2) / 3.0) + c * normsq * Qd
        return TensorField(Q.grid, out)

    # FF core, shared by FF and M1
    Q2 = _mm(Qd, Qd)
    cubic = Q2 + _mm(Qd, Qt) + _mm(Qt, Qd)
    f_ff = a * Qd - (b / 3.0) * cubic + c * normsq * Qd
    if kind is Potential.FF:
        return TensorField(Q.grid, f_ff)

    if kind is not Potential.M1:
        raise ValueError(f"unknown potential kind {kind!r}")
    alpha_quad = -(b / 9.0) * (_ddot(Qd, Qt) + 2.0 * normsq)
    alpha_trace = _tr(f_ff) / 3.0
    alpha = m1_theta * alpha_quad + (1.0 - m1_theta) * alpha_trace
    return TensorField(Q.grid, _add_iso(f_ff, -alpha))


def bulk_F(Q: TensorField, params: ModelParams) -> ScalarField:
    """Bulk free-energy density (a/2)|Q|^2 - (b/3)(Q^2 : Q) + (c/4)|Q|^4."""
    a, b, c = params.a, params.b, params.c
    Qd = Q.data
    normsq = _ddot(Qd, Qd)
    q2q = _ddot(_mm(Qd, Qd), Qd)
    return ScalarField(Q.grid, 0.5 * a * normsq - (b / 3.0) * q2q + 0.25 * c * normsq ** 2)


def molecular_field_H(Q: TensorField, params: ModelParams, kind: Potential,
                      m1_theta: float = 1.0) -> TensorField:
    """H(Q) = -epsilon * lap(Q) + f(Q), natural boundary closure on walls."""
    lap = laplacian(Q, FieldRole.Q_TENSOR)
    f = potential_f(Q, params, kind, m1_theta)
    return TensorField(Q.grid, -params.epsilon * lap.data + f.data)


def elastic_stress_tau(Q: TensorField, params: ModelParams) -> TensorField:
    """Quadratic-gradient stress tau_ij = -epsilon * d_j Q_kl d_i Q_kl (symmetric)."""
    G = tensor_gradient(Q, FieldRole.Q_TENSOR)  # G[d, k, l] = d_d Q_kl
    out = -params.epsilon * np.einsum("jkl...,ikl...->ij...", G, G)
    return TensorField(Q.grid, out)


def antisym_stress_sigma(H: TensorField, Q: TensorField) -> TensorField:
    """Commutator stress H Q - Q H."""
    _check_same_grid(H, Q)
    return TensorField(Q.grid, _mm(H.data, Q.data) - _mm(Q.data, H.data))


def stretching_S(grad_u: TensorField, Q: TensorField, kind: Stretching) -> TensorField:
    """Flow-alignment source; grad_u follows the (grad u)_ij = d_j u_i convention."""
    _check_same_grid(grad_u, Q)
    Qt = np.swapaxes(Q.data, 0, 1)
    if kind is Stretching.FULL_GRADIENT:
        A = grad_u.data
    elif kind is Stretching.COROTATIONAL:
        A = 0.5 * (grad_u.data - np.swapaxes(grad_u.data, 0, 1))
    else:
        raise ValueError(f"unknown stretching kind {kind!r}")
    return TensorField(Q.grid, _mm(A, Qt) - _mm(Qt, A))
