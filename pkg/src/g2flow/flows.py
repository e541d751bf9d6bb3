"""Geometric flow engine: right-hand sides, time integration, linearization.

Two flows are supported on left-invariant data:

* ``laplacian_flow``:    d phi / dt = Laplacian(phi),  flowing the 3-form;
* ``modified_coflow``:   d psi / dt = Laplacian(psi) + 2 d((A - trT) phi),
  flowing the dual 4-form, with real parameter A (A = 0 is the plain case).

The flow variable is the coefficient vector of the flowing form.  For the
coflow, each right-hand-side evaluation recovers phi from psi by seeded
Newton iteration, so every step revalidates positivity and reports a
recovery residual.  An optional DeTurck correction adds the Lie derivative
along V^i = c1 g^{pq} T^i_{pq} + c2 g^{ki} T^j_{jk}, where T is the
(lower-index symmetrized) difference between the Levi-Civita connection and
a reference connection.

Integrators: classic fixed-step rk4 (default dt 1e-3) and adaptive
Fehlberg rkf45 (default rel_tol 1e-8).  Trajectories halt - never project -
when closedness drifts, positivity or Newton recovery fails, a step
underflows, or values stop being finite; the termination record carries the
cause.

``linearize`` probes a static point with central finite differences along a
direction basis orthonormalized in the L2 inner product (pointwise metric
inner product times the constant volume), reports the raw matrix, the
eigenvalues of its symmetrization, and the asymmetry norm.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, G2FlowError, PositivityError, RecoveryError
from .exterior import DIM, Form
from .g2core import (
    CoclosedState,
    G2Structure,
    _structure_of,
    full_torsion,
    hodge_laplacian,
    torsion_trace,
)
from .liealg import Connection, differential, lie_derivative

__all__ = [
    "FlowConfig",
    "DeTurckConfig",
    "IntegratorConfig",
    "MonitorConfig",
    "HaltConfig",
    "FlowState",
    "Trajectory",
    "SpectrumReport",
    "coflow_rhs",
    "laplacian_flow_rhs",
    "deturck_vector",
    "deturck_term",
    "integrate",
    "linearize",
    "exact_directions",
    "coclosed_directions",
    "volume_monotonicity_criterion",
]

FLOW_KINDS = ("modified_coflow", "laplacian_flow")
INTEGRATOR_METHODS = ("rk4", "rkf45")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class DeTurckConfig:
    """Gauge-fixing correction; disabled by default (invariant flows on
    unimodular algebras need no gauge fixing), constants are inputs."""

    enabled: bool = False
    c1: float = 0.0
    c2: float = 0.0

    def violations(self, prefix="deturck"):
        out = []
        for name in ("c1", "c2"):
            if not np.isfinite(getattr(self, name)):
                out.append(f"{prefix}.{name} must be finite")
        return out


@dataclass
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    rel_tol: float = 1e-8

    def violations(self, prefix="integrator"):
        out = []
        if self.method not in INTEGRATOR_METHODS:
            out.append(
                f"{prefix}.method must be one of {'|'.join(INTEGRATOR_METHODS)}, "
                f"got {self.method!r}"
            )
        if not (np.isfinite(self.dt) and self.dt > 0):
            out.append(f"{prefix}.dt must be > 0")
        if not (np.isfinite(self.t_end) and self.t_end > 0):
            out.append(f"{prefix}.t_end must be > 0")
        if not (np.isfinite(self.rel_tol) and self.rel_tol > 0):
            out.append(f"{prefix}.rel_tol must be > 0")
        return out


@dataclass
class MonitorConfig:
    """Which diagnostics are evaluated at record times (disabled ones are
    emitted as null) and how many accepted steps separate records."""

    record_every: int = 10
    trT: bool = True
    volume: bool = True
    closedness: bool = True
    rhs_norm: bool = True
    dist_ref: bool = True

    def violations(self, prefix="monitors"):
        out = []
        if not (isinstance(self.record_every, int) and self.record_every >= 1):
            out.append(f"{prefix}.record_every must be an integer >= 1")
        return out


@dataclass
class HaltConfig:
    """Halt thresholds; closedness drift past the tolerance stops the run
    (projecting back would mask right-hand-side bugs)."""

    closedness_tol: float = 1e-6
    max_rhs_norm: float | None = None

    def violations(self, prefix="halt"):
        out = []
        if not (np.isfinite(self.closedness_tol) and self.closedness_tol > 0):
            out.append(f"{prefix}.closedness_tol must be > 0")
        if self.max_rhs_norm is not None and not (
            np.isfinite(self.max_rhs_norm) and self.max_rhs_norm > 0
        ):
            out.append(f"{prefix}.max_rhs_norm must be > 0 when set")
        return out


@dataclass
class FlowConfig:
    flow_kind: str = "modified_coflow"
    A: float = 0.0
    deturck: DeTurckConfig = field(default_factory=DeTurckConfig)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    monitors: MonitorConfig = field(default_factory=MonitorConfig)
    halt: HaltConfig = field(default_factory=HaltConfig)

    def violations(self):
        out = []
        if self.flow_kind not in FLOW_KINDS:
            out.append(
                f"flow_kind must be one of {'|'.join(FLOW_KINDS)}, got {self.flow_kind!r}"
            )
        if not np.isfinite(self.A):
            out.append("A must be finite")
        out += self.deturck.violations()
        out += self.integrator.violations()
        out += self.monitors.violations()
        out += self.halt.violations()
        return out

    def ensure_valid(self):
        violations = self.violations()
        if violations:
            raise ConfigError(violations)
        return self


# --------------------------------------------------------------------------
# Right-hand sides
# --------------------------------------------------------------------------


def coflow_rhs(L, state, A=0.0):
    """Modified coflow right-hand side Laplacian(psi) + 2 (A - trT) d(phi).

    Affine in A: the A-dependence is exactly 2 A d(phi).
    """
    s = _structure_of(state)
    psi = state.psi if isinstance(state, CoclosedState) else s.psi
    lap = hodge_laplacian(L, s.metric, psi)
    trT = torsion_trace(L, s)
    return lap + (2.0 * (A - trT)) * differential(L, s.phi)


def laplacian_flow_rhs(L, state):
    """Laplacian flow right-hand side: the Hodge Laplacian of phi."""
    s = _structure_of(state)
    return hodge_laplacian(L, s.metric, s.phi)


def deturck_vector(L, state, nabla0, c1, c2):
    """Gauge vector V^i = c1 g^{pq} T^i_{pq} + c2 g^{ki} T^j_{jk}.

    T is the difference between the structure's Levi-Civita connection and
    the reference ``nabla0``, symmetrized in its lower index pair (the
    frame-flat reference carries torsion on a nonabelian algebra).
    """
    from .liealg import levi_civita

    s = _structure_of(state)
    diff = levi_civita(L, s.metric).gamma - nabla0.gamma
    tsym = 0.5 * (diff + diff.transpose(1, 0, 2))  # tsym[p, q, i] = T^i_{pq}
    ginv = s.metric.inv
    v = c1 * np.einsum("pq,pqi->i", ginv, tsym)
    v += c2 * ginv @ np.einsum("jkj->k", tsym)
    return v


def deturck_term(L, state, nabla0, c1, c2):
    """Lie derivative of the flowing form along the gauge vector."""
    v = deturck_vector(L, state, nabla0, c1, c2)
    form = state.psi if isinstance(state, CoclosedState) else _structure_of(state).phi
    return lie_derivative(L, v, form)


def volume_monotonicity_criterion(L, state, A=0.0):
    """Sign criterion |T|^2 + trT (4A - 3 trT) for volume growth under the
    modified coflow; positive iff the volume is instantaneously increasing."""
    s = _structure_of(state)
    trT = torsion_trace(L, s)
    normsq = full_torsion(L, s).norm_squared(s.metric)
    return normsq + trT * (4.0 * A - 3.0 * trT)


# --------------------------------------------------------------------------
# Trajectories
# --------------------------------------------------------------------------

RECORD_FIELDS = ("t", "psi", "trT", "volume", "closedness", "rhs_norm", "dist_ref")


@dataclass(eq=False)
class FlowState:
    """Snapshot along a flow: time, flowing form, structure, diagnostics.

    ``diagnostics`` holds the monitor values (None when a monitor is off):
    trT, volume, closedness, rhs_norm, dist_ref.
    """

    t: float
    form: Form
    structure: G2Structure
    diagnostics: dict

    @property
    def psi(self):
        return self.form if self.form.degree == 4 else self.structure.psi

    @property
    def phi(self):
        return self.form if self.form.degree == 3 else self.structure.phi

    def record(self):
        """Record dict in the trajectory output schema."""
        rec = {"t": self.t, "psi": [float(c) for c in self.psi.coeffs]}
        for key in RECORD_FIELDS[2:]:
            rec[key] = self.diagnostics.get(key)
        return rec


@dataclass(eq=False)
class Trajectory:
    """Monitor-time snapshots plus a termination record.

    ``termination`` = {status: completed|halted, reason, t, steps, detail}.
    """

    flow_kind: str
    states: list
    termination: dict

    @property
    def final(self):
        return self.states[-1]

    def records(self):
        return [s.record() for s in self.states]

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records():
                fh.write(json.dumps(rec) + "\n")

    def write_csv(self, path):
        """CSV mirror; the psi vector is flattened into psi_00..psi_34."""
        header = ["t"] + [f"psi_{i:02d}" for i in range(len(self.states[0].psi.coeffs))]
        header += list(RECORD_FIELDS[2:])
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for rec in self.records():
                row = [repr(rec["t"])] + [repr(c) for c in rec["psi"]]
                row += ["" if rec[k] is None else repr(rec[k]) for k in RECORD_FIELDS[2:]]
                writer.writerow(row)


class _Evaluator:
    """Shared right-hand-side evaluator carrying the Newton seed forward."""

    def __init__(self, L, config, seed_phi):
        self.L = L
        self.config = config
        self.seed = seed_phi
        self.coflow = config.flow_kind == "modified_coflow"
        self.nabla0 = Connection(np.zeros((DIM, DIM, DIM)))
        k = 4 if self.coflow else 3
        self.dmat = L.differential_matrix(k)

    def state_of(self, y):
        if self.coflow:
            state = CoclosedState.from_psi(Form(4, y), seed=self.seed)
            self.seed = state.recovered.phi
            return state
        return G2Structure.from_phi(Form(3, y))

    def rhs_form(self, state):
        cfg = self.config
        if self.coflow:
            rhs = coflow_rhs(self.L, state, cfg.A)
        else:
            rhs = laplacian_flow_rhs(self.L, state)
        if cfg.deturck.enabled:
            rhs = rhs + deturck_term(self.L, state, self.nabla0, cfg.deturck.c1, cfg.deturck.c2)
        return rhs

    def f(self, y):
        return self.rhs_form(self.state_of(y)).coeffs

    def closedness(self, y):
        return float(np.linalg.norm(self.dmat @ y))


def _rk4_step(f, y, h):
    k1 = f(y)
    k2 = f(y + (0.5 * h) * k1)
    k3 = f(y + (0.5 * h) * k2)
    k4 = f(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# Fehlberg 4(5) tableau; propagation uses the fifth-order weights.
_RKF_C = (0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5)
_RKF_A = (
    (),
    (0.25,),
    (3.0 / 32.0, 9.0 / 32.0),
    (1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0),
    (439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0),
    (-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0),
)
_RKF_B5 = (16.0 / 135.0, 0.0, 6656.0 / 12825.0, 28561.0 / 56430.0, -9.0 / 50.0, 2.0 / 55.0)
_RKF_B4 = (25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0)


def _rkf45_attempt(f, y, h):
    ks = []
    for row in _RKF_A:
        yi = y.copy()
        for a, k in zip(row, ks):
            yi = yi + (h * a) * k
        ks.append(f(yi))
    y5 = y.copy()
    err = np.zeros_like(y)
    for b5, b4, k in zip(_RKF_B5, _RKF_B4, ks):
        y5 = y5 + (h * b5) * k
        err = err + (h * (b5 - b4)) * k
    return y5, float(np.linalg.norm(err))


def _diagnostics(evaluator, config, state_obj, y, ref_vec):
    mon = config.monitors
    L = evaluator.L
    s = _structure_of(state_obj)
    diag = {}
    diag["trT"] = torsion_trace(L, s) if mon.trT else None
    diag["volume"] = s.volume if mon.volume else None
    diag["closedness"] = evaluator.closedness(y) if mon.closedness else None
    diag["rhs_norm"] = (
        float(np.linalg.norm(evaluator.rhs_form(state_obj).coeffs)) if mon.rhs_norm else None
    )
    diag["dist_ref"] = float(np.linalg.norm(y - ref_vec)) if mon.dist_ref else None
    return diag


def integrate(L, config, state0, reference=None):
    """Integrate the configured flow from ``state0``.

    ``state0`` is a CoclosedState for the coflow or a G2Structure for the
    Laplacian flow; ``reference`` (a form, defaults to the initial one)
    anchors the dist_ref diagnostic.  Returns a Trajectory whose
    termination record distinguishes a completed run from halts caused by
    closedness drift, positivity loss, Newton failure, step underflow, or
    non-finite values.
    """
    config.ensure_valid()
    coflow = config.flow_kind == "modified_coflow"
    if coflow:
        if not isinstance(state0, CoclosedState):
            raise G2FlowError("modified_coflow expects a CoclosedState initial state")
        y = state0.psi.coeffs.copy()
        seed = state0.recovered.phi
    else:
        s0 = _structure_of(state0)
        y = s0.phi.coeffs.copy()
        seed = s0.phi
    evaluator = _Evaluator(L, config, seed)
    ref_vec = (reference.coeffs if reference is not None else y).copy()

    cfg_int = config.integrator
    t_end = cfg_int.t_end
    t = 0.0
    steps = 0
    dt = cfg_int.dt
    states = []
    termination = None

    def snapshot(state_obj):
        form = state_obj.psi if coflow else _structure_of(state_obj).phi
        states.append(
            FlowState(
                t=t,
                form=form,
                structure=_structure_of(state_obj),
                diagnostics=_diagnostics(evaluator, config, state_obj, y, ref_vec),
            )
        )

    def halt(reason, detail=""):
        return {
            "status": "halted",
            "reason": reason,
            "t": t,
            "steps": steps,
            "detail": detail,
        }

    snapshot(state0)
    if (
        config.monitors.closedness
        and states[0].diagnostics["closedness"] is not None
        and states[0].diagnostics["closedness"] > config.halt.closedness_tol
    ):
        termination = halt("closedness", "initial state violates the closedness tolerance")

    while termination is None:
        if t >= t_end - 1e-12 * max(1.0, t_end):
            termination = {
                "status": "completed",
                "reason": "t_end",
                "t": t,
                "steps": steps,
                "detail": "",
            }
            break
        h = min(dt, t_end - t)
        try:
            if cfg_int.method == "rk4":
                y_new = _rk4_step(evaluator.f, y, h)
            else:
                while True:
                    y_new, err = _rkf45_attempt(evaluator.f, y, h)
                    scale = cfg_int.rel_tol * max(1.0, float(np.linalg.norm(y)))
                    if err <= scale or not np.isfinite(err):
                        break
                    h *= max(0.2, 0.9 * (scale / err) ** 0.2)
                    if h < 1e-14 * max(1.0, t):
                        break
                if h < 1e-14 * max(1.0, t):
                    termination = halt("step_underflow", f"step size fell to {h:.3e}")
                    break
                if err <= cfg_int.rel_tol * max(1.0, float(np.linalg.norm(y))):
                    dt = h * min(5.0, max(0.2, 0.9 * (cfg_int.rel_tol / max(err, 1e-300)) ** 0.2))
        except PositivityError as exc:
            termination = halt("positivity", str(exc))
            break
        except RecoveryError as exc:
            termination = halt("newton", str(exc))
            break
        if not np.all(np.isfinite(y_new)):
            termination = halt("nonfinite", "state left the finite range")
            break
        y = y_new
        t += h
        steps += 1
        closed_res = evaluator.closedness(y)
        if closed_res > config.halt.closedness_tol:
            termination = halt(
                "closedness", f"closedness residual {closed_res:.3e} exceeded tolerance"
            )
            break
        record_now = steps % config.monitors.record_every == 0
        final_now = t >= t_end - 1e-12 * max(1.0, t_end)
        if record_now or final_now:
            try:
                state_obj = evaluator.state_of(y)
            except (PositivityError, RecoveryError) as exc:
                reason = "positivity" if isinstance(exc, PositivityError) else "newton"
                termination = halt(reason, str(exc))
                break
            diag = _diagnostics(evaluator, config, state_obj, y, ref_vec)
            if (
                config.halt.max_rhs_norm is not None
                and diag["rhs_norm"] is not None
                and diag["rhs_norm"] > config.halt.max_rhs_norm
            ):
                states.append(
                    FlowState(t=t, form=state_obj.psi if coflow else state_obj.phi,
                              structure=_structure_of(state_obj), diagnostics=diag)
                )
                termination = halt("rhs_blowup", f"rhs_norm {diag['rhs_norm']:.3e}")
                break
            snapshot(state_obj)
    return Trajectory(flow_kind=config.flow_kind, states=states, termination=termination)


# --------------------------------------------------------------------------
# Direction bases and linearization
# --------------------------------------------------------------------------


def exact_directions(L):
    """Orthonormal basis (coefficient Euclidean) of d(invariant 3-forms)."""
    d3 = L.differential_matrix(3)
    u, s, _ = np.linalg.svd(d3)
    rank = int(np.sum(s > max(d3.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    return [Form(4, u[:, i]) for i in range(rank)]


def coclosed_directions(L):
    """Orthonormal basis (coefficient Euclidean) of the closed 4-forms."""
    d4 = L.differential_matrix(4)
    _, s, vt = np.linalg.svd(d4)
    rank = int(np.sum(s > max(d4.shape) * np.finfo(float).eps * (s[0] if s.size else 1.0)))
    return [Form(4, vt[i]) for i in range(rank, vt.shape[0])]


@dataclass(eq=False)
class SpectrumReport:
    """Finite-difference linearization at a static point.

    ``matrix`` is the raw finite-difference matrix in the orthonormalized
    direction basis; ``eigenvalues`` belong to its symmetrization
    (1/2)(M + M^T); ``asymmetry_norm`` = Frobenius norm of M - M^T is always
    reported rather than averaged away.
    """

    directions: list
    matrix: np.ndarray
    eigenvalues: np.ndarray
    asymmetry_norm: float
    eps: float


def linearize(L, rhs, state, directions, eps=1e-5, static_tol=1e-8):
    """Central finite-difference linearization of ``rhs`` at a static state.

    ``rhs(L, state) -> Form`` is the flow map; ``directions`` are 4-forms
    spanning the probed subspace.  They are orthonormalized in the L2 inner
    product (pointwise metric inner product times the constant volume);
    a rank-deficient set raises, as does a base point that is not static to
    ``static_tol``.
    """
    if not isinstance(state, CoclosedState):
        raise G2FlowError("linearize expects a CoclosedState base point")
    base_norm = float(np.linalg.norm(rhs(L, state).coeffs))
    if base_norm > static_tol:
        raise G2FlowError(
            f"base point is not static: rhs norm {base_norm:.3e} exceeds {static_tol:.1e}"
        )
    if not directions:
        raise G2FlowError("directions must be a non-empty list of 4-forms")
    structure = state.recovered
    gram = structure.metric.gram(4) * structure.volume
    dmat = np.column_stack([d.coeffs for d in directions])
    overlap = dmat.T @ gram @ dmat
    try:
        chol = np.linalg.cholesky(overlap)
    except np.linalg.LinAlgError:
        raise G2FlowError("degenerate direction set (L2 Gram matrix is singular)") from None
    basis = dmat @ np.linalg.inv(chol).T  # columns are L2-orthonormal
    seed = structure.phi
    m = basis.shape[1]
    matrix = np.empty((m, m))
    project = basis.T @ gram
    for j in range(m):
        plus = CoclosedState.from_psi(Form(4, state.psi.coeffs + eps * basis[:, j]), seed=seed)
        minus = CoclosedState.from_psi(Form(4, state.psi.coeffs - eps * basis[:, j]), seed=seed)
        deriv = (rhs(L, plus).coeffs - rhs(L, minus).coeffs) / (2.0 * eps)
        matrix[:, j] = project @ deriv
    sym = 0.5 * (matrix + matrix.T)
    return SpectrumReport(
        directions=[Form(4, basis[:, j]) for j in range(m)],
        matrix=matrix,
        eigenvalues=np.linalg.eigvalsh(sym),
        asymmetry_norm=float(np.linalg.norm(matrix - matrix.T)),
        eps=eps,
    )
