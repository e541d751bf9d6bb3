"""G2 structures on the 7-dimensional algebra: metric, star pair, torsion.

A positive 3-form phi induces a metric through the bilinear form
(iota_i phi) ^ (iota_j phi) ^ phi = B_ij e^{1..7} and the normalization
g = kappa B (det B)^{-1/9}; at the standard form

    phi = e123 + e145 + e167 + e246 - e257 - e347 - e356

this gives exactly the identity metric and volume e^{1234567}.  The dual
4-form is psi = star phi.  Flows evolve psi, so the inverse map (recovering
phi from psi) is a seeded Newton iteration on F(phi) = star_{g(phi)} phi - psi.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .conventions import (
    METRIC_KAPPA,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    TORSION_PAIRING,
)
from .errors import DegreeError, PositivityError, RecoveryError
from .exterior import (
    COMPL_INDEX,
    COMPL_SIGN,
    CONTRACT,
    DIM,
    DIMS,
    WEDGE,
    Form,
    Metric,
    exterior_powers_batch,
    inner,
    star,
    wedge,
)
from .liealg import differential, hodge_laplacian_matrix, levi_civita

# P[a, b, c]: coefficient of e^{1..7} in (2-form basis a) ^ (2-form basis b)
# ^ (3-form basis c); contracts the whole B matrix into three small products.
_P223 = np.einsum("abd,dce->abc", WEDGE[2, 2], WEDGE[4, 3]).reshape(
    DIMS[2], DIMS[2], DIMS[3]
)


def b_matrix(phi):
    """Bilinear form B with (iota_i phi) ^ (iota_j phi) ^ phi = B_ij e^{1..7}."""
    if phi.degree != 3:
        raise DegreeError(f"expected a 3-form, got degree {phi.degree}")
    u = np.tensordot(CONTRACT[3], phi.coeffs, axes=(1, 0))  # u[i] = iota_i phi
    p = np.tensordot(_P223, phi.coeffs, axes=(2, 0))
    return u @ p @ u.T


def metric_from_phi(phi):
    """Metric and volume induced by a positive 3-form.

    Raises PositivityError when phi is not positively oriented or the
    candidate metric fails to be positive definite.
    """
    b = b_matrix(phi)
    det_b = float(np.linalg.det(b))
    if det_b <= 0.0:
        raise PositivityError(
            f"3-form is not positively oriented (det B = {det_b:.3e})"
        )
    g = METRIC_KAPPA * b * det_b ** (-1.0 / 9.0)
    g = 0.5 * (g + g.T)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise PositivityError("induced bilinear form is not positive definite") from None
    metric = Metric(g)
    metric._spd_checked = True  # Cholesky above is the definiteness witness
    return metric, metric.vol


@dataclass(eq=False)
class G2Structure:
    """Positive 3-form with its induced metric and volume; treat as immutable."""

    phi: Form
    metric: Metric
    vol: Form

    @classmethod
    def from_phi(cls, phi):
        metric, vol = metric_from_phi(phi)
        return cls(phi=phi, metric=metric, vol=vol)

    @cached_property
    def psi(self):
        """Dual 4-form star(phi)."""
        return star(self.metric, self.phi)

    def star(self, a):
        return star(self.metric, a)

    def inner(self, a, b):
        return inner(self.metric, a, b)

    @property
    def volume(self):
        """Scalar volume sqrt(det g) of the unit frame box."""
        return self.metric.sqrt_det


def psi_of_phi(structure):
    """Dual 4-form of a structure (star of phi in its own metric)."""
    return structure.psi


def _recovery_residual(x, psi_coeffs):
    structure = G2Structure.from_phi(Form(3, x))
    return structure.psi.coeffs - psi_coeffs, structure


def _dual_batch(xs):
    """Dual 4-forms of a batch of positive 3-forms (rows of ``xs``).

    Mirrors metric_from_phi + star without the validation layers; used for
    finite-difference Jacobians.  Returns None when any member leaves the
    positive orbit, so callers can fall back to the checked scalar path.
    """
    n = xs.shape[0]
    u = np.tensordot(xs, CONTRACT[3], axes=(1, 1))  # (n, 7, D2)
    p = np.tensordot(xs, _P223, axes=(1, 2))  # (n, D2, D2)
    b = u @ p @ u.transpose(0, 2, 1)
    det_b = np.linalg.det(b)
    if not np.all(det_b > 0.0):
        return None
    g = METRIC_KAPPA * b * det_b[:, None, None] ** (-1.0 / 9.0)
    g = 0.5 * (g + g.transpose(0, 2, 1))
    det_g = np.linalg.det(g)
    if not np.all(det_g > 0.0):
        return None
    try:
        ginv = np.linalg.inv(g)
    except np.linalg.LinAlgError:
        return None
    gram3 = exterior_powers_batch(ginv, 3)[3]
    gram3 = 0.5 * (gram3 + gram3.transpose(0, 2, 1))
    weighted = (gram3 @ xs[:, :, None])[:, :, 0]  # (n, D3)
    duals = np.empty((n, DIMS[4]))
    duals[:, COMPL_INDEX[3]] = COMPL_SIGN[3][None, :] * np.sqrt(det_g)[:, None] * weighted
    return duals


def _fd_jacobian(x, f0, psi_coeffs):
    eps = 1e-7 * (1.0 + np.abs(x))
    xs = x[None, :] + np.diag(eps)
    duals = _dual_batch(xs)
    if duals is not None and np.all(np.isfinite(duals)):
        return (duals - (f0 + psi_coeffs)[None, :]).T / eps[None, :]
    jac = np.empty((DIMS[4], DIMS[3]))
    for j in range(DIMS[3]):
        xp = x.copy()
        xp[j] += eps[j]
        fp, _ = _recovery_residual(xp, psi_coeffs)
        jac[:, j] = (fp - f0) / eps[j]
    return jac


def phi_of_psi(psi, seed, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
    """Recover the positive 3-form whose dual 4-form is psi.

    Newton iteration on F(phi) = star_{g(phi)} phi - psi with a finite
    difference Jacobian that is reused while convergence stays fast.  The
    seed must be a positive 3-form; during a flow it is the previous step's
    phi, which keeps the iteration in the quadratic regime.
    """
    if psi.degree != 4:
        raise DegreeError(f"expected a 4-form, got degree {psi.degree}")
    if seed.degree != 3:
        raise DegreeError(f"seed must be a 3-form, got degree {seed.degree}")
    x = seed.coeffs.copy()
    try:
        f, structure = _recovery_residual(x, psi.coeffs)
    except PositivityError as exc:
        raise RecoveryError(f"seed is not a positive 3-form: {exc}") from exc
    res = float(np.linalg.norm(f))
    jac = None
    jac_fresh = False
    for _ in range(max_iter):
        if res <= tol:
            return structure
        if jac is None:
            jac = _fd_jacobian(x, f, psi.coeffs)
            jac_fresh = True
        try:
            step = np.linalg.solve(jac, f)
        except np.linalg.LinAlgError:
            raise RecoveryError("singular Jacobian in Newton recovery", residual=res) from None
        accepted = False
        scale = 1.0
        for _ in range(10):
            try:
                f_new, structure_new = _recovery_residual(x - scale * step, psi.coeffs)
            except PositivityError:
                scale *= 0.5
                continue
            res_new = float(np.linalg.norm(f_new))
            if res_new < res:
                x = x - scale * step
                prev_res = res
                f, structure, res = f_new, structure_new, res_new
                # chord strategy: keep the Jacobian while contraction is fast
                if res > 0.1 * prev_res:
                    jac = None
                jac_fresh = False
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if not jac_fresh:
                jac = None  # stale chord Jacobian; retry once with a fresh one
                continue
            raise RecoveryError("Newton recovery stalled", residual=res)
    if res <= tol:
        return structure
    raise RecoveryError(
        f"Newton recovery did not reach tolerance {tol:.1e} in {max_iter} iterations",
        residual=res,
    )


@dataclass(eq=False)
class CoclosedState:
    """Evolving 4-form with its recovered structure.

    ``residual`` is the Euclidean norm of star_{g(phi)} phi - psi at the
    recovered phi; the closedness of psi is a separate diagnostic tracked by
    the flow layer.
    """

    psi: Form
    recovered: G2Structure
    residual: float

    @classmethod
    def from_psi(cls, psi, seed, tol=NEWTON_TOL, max_iter=NEWTON_MAX_ITER):
        structure = phi_of_psi(psi, seed, tol=tol, max_iter=max_iter)
        residual = float(np.linalg.norm(structure.psi.coeffs - psi.coeffs))
        return cls(psi=psi, recovered=structure, residual=residual)

    @classmethod
    def from_phi(cls, phi):
        """State whose psi is exactly the dual of phi (zero residual)."""
        structure = G2Structure.from_phi(phi)
        return cls(psi=structure.psi, recovered=structure, residual=0.0)


def _structure_of(state):
    return state.recovered if isinstance(state, CoclosedState) else state


def torsion_trace(L, state):
    """Scalar torsion trace (1/4) star(d phi ^ phi) of a structure or state."""
    s = _structure_of(state)
    dphi = differential(L, s.phi)
    top = wedge(dphi, s.phi)
    return 0.25 * float(star(s.metric, top).coeffs[0])


@dataclass(eq=False)
class TorsionTensor:
    """Full torsion as a frame 2-tensor t[i, j]."""

    t: np.ndarray

    def __post_init__(self):
        t = np.array(self.t, dtype=float)
        if t.shape != (DIM, DIM):
            raise ValueError(f"torsion tensor must be {DIM}x{DIM}, got {t.shape}")
        t.flags.writeable = False
        self.t = t

    def trace(self, metric):
        """Metric trace g^{ij} T_ij."""
        return float(np.einsum("ij,ij->", metric.inv, self.t))

    def norm_squared(self, metric):
        """|T|^2 = g^{ik} g^{jl} T_ij T_kl."""
        return float(np.einsum("ik,jl,ij,kl->", metric.inv, metric.inv, self.t, self.t))


def full_torsion(L, state):
    """Full torsion tensor T_ij = (1/4) <nabla_i phi, iota_j psi>.

    The pairing constant is calibrated so the metric trace agrees with
    ``torsion_trace``; the trace-consistency test enforces it.
    """
    s = _structure_of(state)
    conn = levi_civita(L, s.metric)
    nabla_phi = np.einsum("iab,b->ia", conn.form_action(3), s.phi.coeffs)
    iota_psi = np.einsum("iab,a->ib", CONTRACT[4], s.psi.coeffs)
    gram3 = s.metric.gram(3)
    t = TORSION_PAIRING * (nabla_phi @ gram3 @ iota_psi.T)
    return TorsionTensor(t)


def hodge_laplacian(L, g, a):
    """Hodge Laplacian (d delta + delta d) of an invariant form."""
    return Form(a.degree, hodge_laplacian_matrix(L, g, a.degree) @ a.coeffs)
