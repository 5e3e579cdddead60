import numpy as np
import pytest

from pg_oracle import random_instance, reference_objective
from rsmaopt.qcqp import QcqpProblem, QuadExpr, constraint_violation, dump_problem, reformulate_to_cones, solve
from rsmaopt.socp import ConeDims, _NTScaling, solve_cone_program


def projection_instance():
    # min |p|^2 s.t. |p|^2 <= 1, Re(f^H p) >= 1 with |f| = 1: optimum is p = f
    nt = 3
    f = np.array([0.5 + 0.1j, -0.3 + 0.7j, 0.2 - 0.2j])
    f = f / np.linalg.norm(f)
    objective = QuadExpr()
    for i in range(nt):
        e = np.zeros(nt, complex)
        e[i] = 1.0
        objective.add_factor(0, 1.0, e)
    cons = QuadExpr(lin_p={0: -f / 2}, const=1.0)
    problem = QcqpProblem(
        num_streams=1, num_tx=nt, num_alloc=0, objective=objective,
        constraints=[cons], power_limit=1.0, alloc_upper=np.zeros(0),
    )
    return problem, f


def circle_instance():
    # min x^2 + y^2 s.t. (x-2)^2 + y^2 <= 1: optimum (1, 0), objective 1
    objective = QuadExpr()
    objective.add_factor(0, 1.0, np.array([1.0 + 0j]))
    cons = QuadExpr(const=3.0, lin_p={0: np.array([-2.0 + 0j])})
    cons.add_factor(0, 1.0, np.array([1.0 + 0j]))
    return QcqpProblem(
        num_streams=1, num_tx=1, num_alloc=0, objective=objective,
        constraints=[cons], power_limit=100.0, alloc_upper=np.zeros(0),
    )


def test_projection_example():
    problem, f = projection_instance()
    sol = solve(problem)
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
    assert np.linalg.norm(sol.precoders[0] - f) < 1e-4


def test_circle_example():
    sol = solve(circle_instance())
    assert sol.status == "optimal"
    assert sol.objective_value == pytest.approx(1.0, abs=1e-6)
    assert sol.precoders[0][0] == pytest.approx(1.0 + 0j, abs=1e-5)


def test_power_ball_cone_dimension():
    problem = QcqpProblem(
        num_streams=1, num_tx=2, num_alloc=0,
        objective=QuadExpr(lin_p={0: np.array([1.0 + 0j, 0j])}),
        constraints=[], power_limit=1.0, alloc_upper=np.zeros(0),
    )
    embedding = reformulate_to_cones(problem)
    assert embedding.program.dims.soc == (5,)  # 4 reals + bound


def test_pure_linear_path():
    # no quadratics anywhere: the embedding is an LP over the ball/orthant
    problem = QcqpProblem(
        num_streams=1, num_tx=1, num_alloc=1,
        objective=QuadExpr(lin_a=np.array([1.0])),
        constraints=[QuadExpr(lin_a=np.array([-1.0]), const=-2.0)],  # x >= -2
        power_limit=1.0, alloc_upper=np.array([0.0]),
    )
    embedding = reformulate_to_cones(problem)
    assert len(embedding.program.dims.soc) == 1  # only the power ball
    sol = solve(problem)
    assert sol.status == "optimal"
    assert sol.allocations[0] == pytest.approx(-2.0, abs=1e-6)


def test_cone_roundtrip_consistency():
    # original quadratics evaluated at the solution match the cone view
    rng = np.random.default_rng(5)
    for _ in range(10):
        problem = random_instance(rng)
        embedding = reformulate_to_cones(problem)
        sol = solve(problem)
        precoders, allocs = sol.precoders, sol.allocations
        for cons in problem.constraints:
            assert cons.value(precoders, allocs) <= 1e-7
        # objective recovered from the epigraph agrees with direct evaluation
        assert sol.objective_value == pytest.approx(
            problem.objective.value(precoders, allocs), abs=1e-8
        )


def test_oracle_equivalence_sample():
    rng = np.random.default_rng(99)
    for _ in range(12):
        problem = random_instance(rng)
        sol = solve(problem)
        assert sol.status == "optimal"
        ref = reference_objective(problem)
        assert abs(sol.objective_value - ref) <= 1e-4
        assert constraint_violation(problem, sol.precoders, sol.allocations) <= 1e-7


def test_scaling_covariance():
    problem, _ = projection_instance()
    sol1 = solve(problem)
    scaled = QcqpProblem(
        num_streams=problem.num_streams, num_tx=problem.num_tx, num_alloc=0,
        objective=QuadExpr(
            quad={s: [(7.5 * t, h) for t, h in fs] for s, fs in problem.objective.quad.items()},
            lin_p={s: 7.5 * b for s, b in problem.objective.lin_p.items()},
            const=7.5 * problem.objective.const,
        ),
        constraints=problem.constraints, power_limit=problem.power_limit,
        alloc_upper=np.zeros(0),
    )
    sol2 = solve(scaled)
    assert np.linalg.norm(sol1.precoders[0] - sol2.precoders[0]) <= 1e-6
    assert sol2.objective_value == pytest.approx(7.5 * sol1.objective_value, rel=1e-6)


def test_gap_history_monotone_tail():
    problem, _ = projection_instance()
    sol = solve(problem)
    tail = sol.gap_history[-5:]
    assert all(a >= b for a, b in zip(tail, tail[1:]))


def test_infeasible_detection():
    problem = QcqpProblem(
        num_streams=1, num_tx=1, num_alloc=1,
        objective=QuadExpr(lin_a=np.array([1.0])),
        constraints=[QuadExpr(lin_a=np.array([-1.0]), const=2.0)],  # x >= 2
        power_limit=1.0, alloc_upper=np.array([-1.0]),  # x <= -1
    )
    sol = solve(problem)
    assert sol.status == "infeasible"


def test_kkt_residuals_certified():
    rng = np.random.default_rng(123)
    for _ in range(5):
        sol = solve(random_instance(rng))
        assert sol.status == "optimal"
        assert sol.kkt_residual <= 1e-7


def test_solve_deterministic():
    problem, _ = projection_instance()
    a = solve(problem)
    b = solve(problem)
    np.testing.assert_array_equal(a.precoders[0], b.precoders[0])
    assert a.gap_history == b.gap_history


def test_nt_scaling_identity():
    rng = np.random.default_rng(7)
    for _ in range(100):
        lo = int(rng.integers(0, 4))
        socs = tuple(int(rng.integers(2, 6)) for _ in range(rng.integers(1, 4)))
        dims = ConeDims(orthant=lo, soc=socs)

        def interior():
            v = rng.standard_normal(dims.total)
            v[:lo] = np.abs(v[:lo]) + 0.1
            for start, end in dims.blocks():
                v[start] = np.linalg.norm(v[start + 1 : end]) + abs(v[start]) + 0.1
            return v

        s, z = interior(), interior()
        scaling = _NTScaling(dims, s, z)
        np.testing.assert_allclose(scaling.apply(z), scaling.apply_inv(s), atol=1e-9)


def test_unbounded_detection():
    problem = QcqpProblem(
        num_streams=1, num_tx=1, num_alloc=1,
        objective=QuadExpr(lin_a=np.array([1.0])),  # min x, x <= 0, no lower bound
        constraints=[], power_limit=1.0, alloc_upper=np.array([0.0]),
    )
    sol = solve(problem)
    assert sol.status == "unbounded"


def test_dump_problem_roundtrip(tmp_path):
    import json

    problem, _ = projection_instance()
    path = tmp_path / "problem.json"
    dump_problem(problem, str(path))
    payload = json.loads(path.read_text())
    assert payload["format"] == "rsmaopt-qcqp/1"
    assert payload["num_streams"] == 1
    assert len(payload["constraints"]) == 1
