"""Tests for flow right-hand sides, integration, halts, and linearization."""

import json

import numpy as np
import pytest

from g2flow import (
    CoclosedState,
    ConfigError,
    DIM,
    FlowConfig,
    Form,
    G2FlowError,
    G2Structure,
    IntegratorConfig,
    coclosed_directions,
    coflow_rhs,
    deturck_term,
    deturck_vector,
    differential,
    exact_directions,
    hodge_laplacian,
    integrate,
    laplacian_flow_rhs,
    linearize,
    standard_phi,
    standard_psi,
    torsion_trace,
    volume_monotonicity_criterion,
)
from g2flow.fixtures import ee2_diagonal_phi
from g2flow.flows import DeTurckConfig, HaltConfig, MonitorConfig, RECORD_FIELDS
from g2flow.liealg import Connection, levi_civita

from .conftest import coclosed_sample

STATIC_MEMBER = np.array([np.sqrt(2.0), 1.0, np.sqrt(2.0), 1.0, 1.0, np.sqrt(2.0), np.sqrt(2.0)])


def _rhs0(L, state):
    return coflow_rhs(L, state, 0.0)


class TestFlowConfig:
    def test_default_is_valid(self):
        assert FlowConfig().violations() == []

    def test_bad_dt_message(self):
        cfg = FlowConfig(integrator=IntegratorConfig(dt=0.0))
        assert cfg.violations() == ["integrator.dt must be > 0"]

    def test_bad_method_message(self):
        cfg = FlowConfig(integrator=IntegratorConfig(method="euler"))
        assert cfg.violations() == [
            "integrator.method must be one of rk4|rkf45, got 'euler'"
        ]

    def test_bad_flow_kind_message(self):
        cfg = FlowConfig(flow_kind="ricci")
        assert cfg.violations() == [
            "flow_kind must be one of modified_coflow|laplacian_flow, got 'ricci'"
        ]

    def test_all_violations_collected(self):
        cfg = FlowConfig(
            flow_kind="ricci",
            A=float("nan"),
            deturck=DeTurckConfig(c1=float("inf")),
            integrator=IntegratorConfig(method="euler", dt=-1.0, t_end=0.0, rel_tol=0.0),
            monitors=MonitorConfig(record_every=0),
            halt=HaltConfig(closedness_tol=-1.0, max_rhs_norm=0.0),
        )
        got = cfg.violations()
        expected = [
            "flow_kind must be one of modified_coflow|laplacian_flow, got 'ricci'",
            "A must be finite",
            "deturck.c1 must be finite",
            "integrator.method must be one of rk4|rkf45, got 'euler'",
            "integrator.dt must be > 0",
            "integrator.t_end must be > 0",
            "integrator.rel_tol must be > 0",
            "monitors.record_every must be an integer >= 1",
            "halt.closedness_tol must be > 0",
            "halt.max_rhs_norm must be > 0 when set",
        ]
        assert got == expected

    def test_ensure_valid_raises(self):
        with pytest.raises(ConfigError, match="integrator.dt must be > 0"):
            FlowConfig(integrator=IntegratorConfig(dt=float("nan"))).ensure_valid()


class TestCoflowRhs:
    def test_reference_state_is_static(self, ee1):
        # The standard structure is a stationary point of the plain
        # coflow on this algebra.
        state = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        assert np.linalg.norm(coflow_rhs(ee1, state, 0.0).coeffs) <= 1e-10

    def test_parameter_dependence_is_affine(self, ee1, ee2, rng):
        # The A-dependence enters only through 2 A d(phi).
        for L in (ee1, ee2):
            state = coclosed_sample(L, rng, magnitude=0.2)
            dphi = differential(L, state.recovered.phi)
            base = coflow_rhs(L, state, 0.0)
            for A in (1.0, -2.5, 0.3):
                diff = coflow_rhs(L, state, A) - base
                err = np.max(np.abs(diff.coeffs - 2.0 * A * dphi.coeffs))
                assert err <= 1e-12 * max(1.0, np.max(np.abs(dphi.coeffs)))

    def test_rhs_is_closed(self, ee1, ee2, rng):
        # Laplacian(psi) is d delta psi for coclosed psi and the
        # correction is exact, so the right-hand side is a closed 4-form.
        for L in (ee1, ee2):
            d4 = L.differential_matrix(4)
            for A in (0.0, 1.0):
                for _ in range(3):
                    state = coclosed_sample(L, rng, magnitude=0.25)
                    rhs = coflow_rhs(L, state, A)
                    assert np.max(np.abs(d4 @ rhs.coeffs)) <= 1e-12

    def test_accepts_structure_or_state(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.1)
        via_state = coflow_rhs(ee2, state, 0.7)
        via_struct = coflow_rhs(ee2, state.recovered, 0.7)
        assert np.max(np.abs(via_state.coeffs - via_struct.coeffs)) <= 1e-12


class TestLaplacianFlowRhs:
    def test_matches_laplacian_of_phi(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        s = state.recovered
        got = laplacian_flow_rhs(ee2, s)
        want = hodge_laplacian(ee2, s.metric, s.phi)
        assert np.array_equal(got.coeffs, want.coeffs)

    def test_torus_is_static(self, torus):
        s = G2Structure.from_phi(standard_phi())
        assert np.max(np.abs(laplacian_flow_rhs(torus, s).coeffs)) == 0.0


class TestDeTurck:
    def test_zero_constants_vanish(self, ee1, rng):
        state = coclosed_sample(ee1, rng, magnitude=0.2)
        flat = Connection(np.zeros((DIM, DIM, DIM)))
        assert np.linalg.norm(deturck_vector(ee1, state, flat, 0.0, 0.0)) == 0.0

    def test_levi_civita_reference_vanishes(self, ee2, rng):
        # The difference tensor against the structure's own
        # Levi-Civita connection is zero.
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        ref = levi_civita(ee2, state.recovered.metric)
        assert np.linalg.norm(deturck_vector(ee2, state, ref, 1.0, 2.0)) <= 1e-14

    def test_flat_reference_vanishes_on_unimodular(self, ee1, ee2, rng):
        # With the frame-flat reference both contractions of the
        # symmetrized difference tensor are ad-traces, which vanish on a
        # unimodular algebra; the default gauge term is a no-op there.
        flat = Connection(np.zeros((DIM, DIM, DIM)))
        for L in (ee1, ee2):
            state = coclosed_sample(L, rng, magnitude=0.2)
            assert np.linalg.norm(deturck_vector(L, state, flat, 1.0, 0.0)) <= 1e-14
            assert np.linalg.norm(deturck_vector(L, state, flat, 0.0, 1.0)) <= 1e-14

    def test_general_reference_acts_linearly(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        ref = Connection(rng.normal(size=(DIM, DIM, DIM)))
        va = deturck_vector(ee2, state, ref, 1.0, 0.0)
        vb = deturck_vector(ee2, state, ref, 0.0, 1.0)
        vab = deturck_vector(ee2, state, ref, 2.0, 3.0)
        assert np.linalg.norm(va) > 1e-3
        assert np.linalg.norm(vb) > 1e-3
        assert np.linalg.norm(vab - 2.0 * va - 3.0 * vb) <= 1e-12
        term = deturck_term(ee2, state, ref, 1.0, 0.5)
        assert term.degree == 4
        assert np.linalg.norm(term.coeffs) > 1e-3

    def test_enabled_flat_gauge_reproduces_plain_flow(self, ee2, rng):
        # On a unimodular algebra the built-in (frame-flat) gauge reference
        # contributes nothing, so enabling it must not change the trajectory.
        state = coclosed_sample(ee2, rng, magnitude=0.15)
        integ = IntegratorConfig(dt=1e-3, t_end=0.01)
        plain = integrate(ee2, FlowConfig(integrator=integ), state)
        gauged = integrate(
            ee2,
            FlowConfig(deturck=DeTurckConfig(enabled=True, c1=1.0, c2=0.5), integrator=integ),
            state,
        )
        assert np.max(np.abs(plain.final.psi.coeffs - gauged.final.psi.coeffs)) <= 1e-12


class TestVolumeMonotonicity:
    def test_matches_volume_derivative(self, ee1, ee2, rng):
        # Finite-differencing the volume along the flow direction
        # gives dV/dt = (1/2) * criterion * V; in particular the volume grows
        # exactly when the criterion is positive.
        h = 1e-6
        checked = 0
        for L in (ee1, ee2):
            for A in (0.0, 1.0, -0.5):
                state = coclosed_sample(L, rng, magnitude=0.3)
                crit = volume_monotonicity_criterion(L, state, A)
                vol = state.recovered.volume
                f = coflow_rhs(L, state, A).coeffs
                seed = state.recovered.phi
                vp = CoclosedState.from_psi(
                    Form(4, state.psi.coeffs + h * f), seed=seed
                ).recovered.volume
                vm = CoclosedState.from_psi(
                    Form(4, state.psi.coeffs - h * f), seed=seed
                ).recovered.volume
                dvdt = (vp - vm) / (2.0 * h)
                if abs(crit) < 1e-4:
                    continue  # sign is ambiguous at the stationary locus
                assert dvdt / (crit * vol) == pytest.approx(0.5, rel=1e-4)
                assert (dvdt > 0) == (crit > 0)
                checked += 1
        assert checked >= 4


class TestDirectionBases:
    def test_coclosed_directions_are_closed_and_orthonormal(self, ee1, ee2):
        for L in (ee1, ee2):
            d4 = L.differential_matrix(4)
            dirs = coclosed_directions(L)
            assert len(dirs) == 35 - np.linalg.matrix_rank(d4)
            mat = np.column_stack([d.coeffs for d in dirs])
            assert np.max(np.abs(d4 @ mat)) <= 1e-12
            assert np.max(np.abs(mat.T @ mat - np.eye(len(dirs)))) <= 1e-12

    def test_exact_directions_are_closed_and_inside_coclosed(self, ee1, ee2):
        # d of a 3-form is closed because d squares to zero, so the
        # exact directions sit inside the span of the closed ones.
        for L in (ee1, ee2):
            d3 = L.differential_matrix(3)
            d4 = L.differential_matrix(4)
            exact = exact_directions(L)
            assert len(exact) == np.linalg.matrix_rank(d3)
            closed = np.column_stack([d.coeffs for d in coclosed_directions(L)])
            for e in exact:
                assert np.max(np.abs(d4 @ e.coeffs)) <= 1e-12
                resid = e.coeffs - closed @ (closed.T @ e.coeffs)
                assert np.linalg.norm(resid) <= 1e-12
                # genuinely in the image of d on 3-forms
                sol, *_ = np.linalg.lstsq(d3, e.coeffs, rcond=None)
                assert np.linalg.norm(d3 @ sol - e.coeffs) <= 1e-12

    def test_torus_has_no_exact_directions(self, torus):
        assert exact_directions(torus) == []
        assert len(coclosed_directions(torus)) == 35


class TestIntegrate:
    def test_static_state_stays_put(self, ee1):
        # Long run at the stationary state: the trajectory must not drift.
        state = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        cfg = FlowConfig(integrator=IntegratorConfig(dt=1e-2, t_end=10.0))
        traj = integrate(ee1, cfg, state)
        assert traj.termination["status"] == "completed"
        assert traj.termination["reason"] == "t_end"
        assert traj.final.diagnostics["dist_ref"] <= 1e-8
        assert traj.final.diagnostics["closedness"] <= 1e-10
        # 1000 steps recorded every 10, plus the initial snapshot.
        assert traj.termination["steps"] == 1000
        assert len(traj.states) == 101

    def test_rk4_and_rkf45_agree(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        results = {}
        for method in ("rk4", "rkf45"):
            cfg = FlowConfig(
                integrator=IntegratorConfig(method=method, dt=1e-3, t_end=0.1, rel_tol=1e-10)
            )
            traj = integrate(ee2, cfg, state)
            assert traj.termination["status"] == "completed"
            results[method] = traj.final.psi.coeffs
        assert np.max(np.abs(results["rk4"] - results["rkf45"])) <= 1e-8

    def test_closedness_preserved_along_run(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.25)
        cfg = FlowConfig(
            integrator=IntegratorConfig(dt=1e-3, t_end=0.05),
            monitors=MonitorConfig(record_every=5),
        )
        traj = integrate(ee2, cfg, state)
        assert traj.termination["status"] == "completed"
        worst = max(s.diagnostics["closedness"] for s in traj.states)
        assert worst <= 1e-10

    def test_deterministic_records(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(integrator=IntegratorConfig(dt=1e-3, t_end=0.02))
        a = integrate(ee2, cfg, state).records()
        b = integrate(ee2, cfg, state).records()
        assert json.dumps(a) == json.dumps(b)

    def test_reference_anchors_distance(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(integrator=IntegratorConfig(dt=1e-3, t_end=0.01))
        traj = integrate(ee2, cfg, state, reference=standard_psi())
        expected = float(np.linalg.norm(state.psi.coeffs - standard_psi().coeffs))
        assert traj.states[0].diagnostics["dist_ref"] == pytest.approx(expected, rel=1e-12)

    def test_disabled_monitors_record_none(self, ee1):
        state = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        cfg = FlowConfig(
            integrator=IntegratorConfig(dt=1e-2, t_end=0.05),
            monitors=MonitorConfig(record_every=1, trT=False, volume=False, dist_ref=False),
        )
        traj = integrate(ee1, cfg, state)
        rec = traj.final.record()
        assert rec["trT"] is None
        assert rec["volume"] is None
        assert rec["dist_ref"] is None
        assert rec["closedness"] is not None
        assert rec["rhs_norm"] is not None

    def test_wrong_initial_type_raises(self, ee1):
        cfg = FlowConfig()
        with pytest.raises(G2FlowError, match="CoclosedState"):
            integrate(ee1, cfg, G2Structure.from_phi(standard_phi()))

    def test_invalid_config_raises(self, ee1):
        state = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        with pytest.raises(ConfigError, match="integrator.dt must be > 0"):
            integrate(ee1, FlowConfig(integrator=IntegratorConfig(dt=-1.0)), state)

    def test_torus_laplacian_flow_completes(self, torus):
        cfg = FlowConfig(flow_kind="laplacian_flow", integrator=IntegratorConfig(dt=1e-2, t_end=1.0))
        traj = integrate(torus, cfg, G2Structure.from_phi(standard_phi()))
        assert traj.termination["status"] == "completed"
        assert traj.final.diagnostics["dist_ref"] == 0.0
        assert traj.final.phi.degree == 3


class TestHalts:
    def test_initial_closedness_violation(self, ee1):
        # A generic 4-form is not closed; the run must stop before stepping.
        psi = Form(4, standard_psi().coeffs + 1e-3 * np.arange(35, dtype=float))
        state = CoclosedState.from_psi(psi, seed=standard_phi())
        traj = integrate(ee1, FlowConfig(), state)
        term = traj.termination
        assert term["status"] == "halted"
        assert term["reason"] == "closedness"
        assert term["t"] == 0.0
        assert term["detail"] == "initial state violates the closedness tolerance"
        assert len(traj.states) == 1

    def test_laplacian_flow_requires_closed_start(self, ee1):
        # The standard 3-form is not closed on this algebra, so the closed-form
        # guard trips immediately for the 3-form flow as well.
        cfg = FlowConfig(flow_kind="laplacian_flow")
        traj = integrate(ee1, cfg, G2Structure.from_phi(standard_phi()))
        assert traj.termination["status"] == "halted"
        assert traj.termination["reason"] == "closedness"
        assert traj.termination["t"] == 0.0

    def test_rhs_norm_threshold(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(
            integrator=IntegratorConfig(dt=1e-3, t_end=1.0),
            monitors=MonitorConfig(record_every=1),
            halt=HaltConfig(max_rhs_norm=1e-6),
        )
        traj = integrate(ee2, cfg, state)
        term = traj.termination
        assert term["status"] == "halted"
        assert term["reason"] == "rhs_blowup"
        assert term["detail"].startswith("rhs_norm ")
        # The offending snapshot is kept so the cause is inspectable.
        assert traj.final.diagnostics["rhs_norm"] > 1e-6

    def test_step_underflow(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(
            integrator=IntegratorConfig(method="rkf45", dt=1e-3, t_end=1.0, rel_tol=1e-300)
        )
        traj = integrate(ee2, cfg, state)
        term = traj.termination
        assert term["status"] == "halted"
        assert term["reason"] == "step_underflow"
        assert term["t"] == 0.0
        assert term["detail"].startswith("step size fell to ")

    def test_recovery_failure_on_huge_step(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(integrator=IntegratorConfig(dt=1e4, t_end=1e5))
        traj = integrate(ee2, cfg, state)
        term = traj.termination
        assert term["status"] == "halted"
        assert term["reason"] in ("newton", "positivity")
        assert term["detail"] != ""


class TestTrajectoryIO:
    @pytest.fixture()
    def short_traj(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(
            integrator=IntegratorConfig(dt=1e-3, t_end=0.01),
            monitors=MonitorConfig(record_every=5, volume=False),
        )
        return integrate(ee2, cfg, state)

    def test_jsonl_schema(self, short_traj, tmp_path):
        path = tmp_path / "traj.jsonl"
        short_traj.write_jsonl(path)
        lines = path.read_text().splitlines()
        assert len(lines) == len(short_traj.states)
        for line in lines:
            rec = json.loads(line)
            assert list(rec.keys()) == list(RECORD_FIELDS)
            assert len(rec["psi"]) == 35
            assert all(isinstance(c, float) for c in rec["psi"])
            assert rec["volume"] is None  # disabled monitor serializes as null
            assert rec["closedness"] is not None

    def test_csv_schema(self, short_traj, tmp_path):
        path = tmp_path / "traj.csv"
        short_traj.write_csv(path)
        lines = path.read_text().splitlines()
        header = lines[0].split(",")
        expected = (
            ["t"]
            + [f"psi_{i:02d}" for i in range(35)]
            + ["trT", "volume", "closedness", "rhs_norm", "dist_ref"]
        )
        assert header == expected
        assert len(lines) == 1 + len(short_traj.states)
        # repr round-trip: parsing the first row reproduces the floats exactly
        row = lines[1].split(",")
        rec = short_traj.records()[0]
        assert float(row[0]) == rec["t"]
        for i in range(35):
            assert float(row[1 + i]) == rec["psi"][i]
        assert row[header.index("volume")] == ""  # disabled monitor is blank

    def test_identical_runs_write_identical_files(self, ee2, rng, tmp_path):
        state = coclosed_sample(ee2, rng, magnitude=0.2)
        cfg = FlowConfig(integrator=IntegratorConfig(dt=1e-3, t_end=0.01))
        paths = []
        for tag in ("a", "b"):
            traj = integrate(ee2, cfg, state)
            path = tmp_path / f"run_{tag}.jsonl"
            traj.write_jsonl(path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestLinearize:
    def test_reference_point_has_zero_linearization(self, ee1):
        # Every nearby invariant coclosed structure is also static,
        # so the flow map has vanishing derivative in coclosed directions.
        base = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        dirs = coclosed_directions(ee1)
        report = linearize(ee1, _rhs0, base, dirs, eps=1e-3)
        assert report.matrix.shape == (len(dirs), len(dirs))
        assert np.max(np.abs(report.matrix)) <= 1e-6
        assert np.max(np.abs(report.eigenvalues)) <= 1e-6
        assert report.asymmetry_norm <= 1e-6

    def test_refinement_keeps_zero_matrix(self, ee1):
        # Halving eps must leave the zero matrix in place: entry changes stay
        # within a quadratic-in-eps budget instead of exploding as 1/eps.
        base = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        dirs = coclosed_directions(ee1)
        eps = 2e-3
        coarse = linearize(ee1, _rhs0, base, dirs, eps=eps)
        fine = linearize(ee1, _rhs0, base, dirs, eps=eps / 2.0)
        assert np.max(np.abs(fine.matrix)) <= 1e-6
        assert np.max(np.abs(coarse.matrix - fine.matrix)) <= 1.0 * eps**2

    def test_quadratic_refinement_at_curved_static_point(self, ee2):
        # At a static point with a genuinely nonzero linearization
        # the central-difference matrix M(eps) = M0 + C eps^2 + ..., so
        # successive halvings shrink the increment by a factor of four.
        base = CoclosedState.from_phi(ee2_diagonal_phi(STATIC_MEMBER))
        assert np.linalg.norm(_rhs0(ee2, base).coeffs) <= 1e-10
        dirs = coclosed_directions(ee2)
        mats = {}
        for eps in (2e-3, 1e-3, 5e-4):
            mats[eps] = linearize(ee2, _rhs0, base, dirs, eps=eps).matrix
        assert np.max(np.abs(mats[1e-3])) > 1.0  # genuinely nonzero
        d_coarse = np.max(np.abs(mats[2e-3] - mats[1e-3]))
        d_fine = np.max(np.abs(mats[1e-3] - mats[5e-4]))
        assert d_coarse / d_fine == pytest.approx(4.0, rel=0.2)

    def test_directions_are_l2_orthonormal(self, ee1):
        base = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        report = linearize(ee1, _rhs0, base, coclosed_directions(ee1), eps=1e-3)
        structure = base.recovered
        gram = structure.metric.gram(4) * structure.volume
        mat = np.column_stack([d.coeffs for d in report.directions])
        assert np.max(np.abs(mat.T @ gram @ mat - np.eye(mat.shape[1]))) <= 1e-10

    def test_non_static_base_raises(self, ee2, rng):
        state = coclosed_sample(ee2, rng, magnitude=0.25)
        with pytest.raises(G2FlowError, match="not static"):
            linearize(ee2, _rhs0, state, coclosed_directions(ee2))

    def test_degenerate_directions_raise(self, ee1):
        base = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        dirs = coclosed_directions(ee1)
        with pytest.raises(G2FlowError, match="degenerate direction set"):
            linearize(ee1, _rhs0, base, [dirs[0], dirs[0]])

    def test_requires_coclosed_state(self, ee1):
        with pytest.raises(G2FlowError, match="CoclosedState"):
            linearize(ee1, _rhs0, G2Structure.from_phi(standard_phi()), [])

    def test_empty_directions_raise(self, ee1):
        base = CoclosedState.from_psi(standard_psi(), seed=standard_phi())
        with pytest.raises(G2FlowError, match="non-empty"):
            linearize(ee1, _rhs0, base, [])
