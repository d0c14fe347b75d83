import numpy as np
import pytest

import safedensity as sd


def test_kernel_peak_and_size():
    g = sd.Grid(32, 32, 0.125)
    rho = sd.team_density(g, np.array([[2.0625, 2.0625]]), 0.25)
    assert rho.shape == (g.size,)
    assert rho.max() == pytest.approx(1.0)
    assert sd.default_epsilon(g, 0.25) > 0.0


def test_reference_round_trip():
    cfg = sd.ScenarioConfig.reference()
    back = sd.ScenarioConfig.from_text(cfg.to_text())
    assert back.to_text() == cfg.to_text()
    assert back.n_robots == 4
    with pytest.raises(sd.ConfigError):
        sd.ScenarioConfig.from_text("schema_version = 1\ngains.gama = 2\n")


def test_short_episode():
    cfg = sd.ScenarioConfig.reference()
    cfg.duration = 1.0
    log = sd.run_episode(cfg, 3)
    assert log.V.shape == (cfg.steps(),)
    assert log.x.shape == (cfg.steps(), 4)
    assert np.all(log.h_s >= 0.0)
    assert log.feasible()
    assert log.summary()["seed"] == 3


def test_batch_is_deterministic():
    cfg = sd.ScenarioConfig.reference()
    cfg.duration = 0.5
    a = sd.run_batch(cfg, 2, 9, threads=1)
    b = sd.run_batch(cfg, 2, 9, threads=2)
    assert a["max_V"] == b["max_V"]
    assert a["energy_feasible_runs"] == 2


def _program(rng, n):
    p = sd.ConvexProgram()
    p.n_robots = n
    p.gamma = 10.0 ** rng.uniform(-1, 2)
    p.clf_g = rng.normal(size=2 * n)
    p.clf_b = rng.uniform(0.0, 1.0)
    p.cbf_a = rng.normal(size=2 * n)
    p.cbf_b = rng.uniform(0.0, 0.3)  # u = 0 is strictly feasible
    robots = []
    for _ in range(n):
        r = sd.RobotConstraint()
        r.u_max = rng.uniform(0.2, 1.0)
        d = rng.normal(size=2)
        r.dir = d / np.linalg.norm(d)
        r.c1 = rng.uniform(0.05, 0.5)
        r.kappa = r.c1 * r.u_max + 0.01 / r.u_max
        r.beta = rng.uniform(0.0, 0.05)
        robots.append(r)
    p.robots = robots
    return p


def test_solver_matches_cvxpy():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(4)
    for _ in range(20):
        n = int(rng.integers(1, 4))
        p = _program(rng, n)
        sol = sd.solve(p)
        assert sol.status == sd.SolveStatus.Optimal

        u = cp.Variable(2 * n)
        s = cp.Variable(nonneg=True)
        cons = [p.clf_g @ u + p.clf_b <= s, p.cbf_a @ u + p.cbf_b >= 0]
        for i, r in enumerate(p.robots):
            ui = u[2 * i : 2 * i + 2]
            cons += [cp.norm(ui) <= r.u_max,
                     r.c1 * cp.sum_squares(ui) - r.kappa * (r.dir @ ui) <= r.beta]
        prob = cp.Problem(cp.Minimize(cp.sum_squares(u) + p.gamma * s), cons)
        prob.solve(solver=cp.CLARABEL)
        assert sol.objective == pytest.approx(prob.value, rel=1e-5, abs=1e-6)
        assert p.violation(sol.u, sol.s) <= 1e-7
