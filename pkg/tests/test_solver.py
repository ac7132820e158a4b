import numpy as np
import pytest
from scipy import stats

from huberpen import (
    ConstrainedProblem,
    DivergenceError,
    DomainError,
    GeneratorSpec,
    Halfspace,
    QuadraticObjective,
    Schedule,
    SolverConfig,
    generate_problem,
    grad_F,
    grad_f,
    run,
    run_ensemble,
    sample_index,
    solve_constrained_exact,
    step,
)
from huberpen.schedule import delta_at, gamma_at, step_at
from huberpen.solver import BLOCK, TRACE_COLUMNS, IndexStream, _directions, aggregate, snapshot_grid


def one_dim(Q, c, a, b):
    return ConstrainedProblem(QuadraticObjective(np.array([[Q]]), np.array([c])),
                              (Halfspace(np.array([a]), b),))


@pytest.fixture(scope="module")
def problem():
    return generate_problem(4, 6, seed=3, spec=GeneratorSpec(active_optimum=True))


def safe_schedule(p, **kw):
    return Schedule(step0=1 / (2 * p.L_f), **kw)


# -- index sampling -----------------------------------------------------------


def test_single_constraint_always_zero():
    st = IndexStream(5, 1)
    assert {sample_index(st, 1) for _ in range(100)} == {0}


def test_index_frequencies():
    st = IndexStream(123, 4)
    draws = st.take(1_000_000)
    counts = np.bincount(draws, minlength=4)
    n = draws.size
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 4 * sigma)
    assert stats.chisquare(counts).pvalue > 1e-4


def test_stream_deterministic_and_chunk_invariant():
    a = IndexStream(9, 7).take(3 * BLOCK + 5)
    st = IndexStream(9, 7)
    b = np.concatenate([st.take(10), [st.next() for _ in range(BLOCK)], st.take(2 * BLOCK - 5)])
    np.testing.assert_array_equal(a, b)
    c = np.random.Generator(np.random.PCG64(9)).integers(0, 7, size=BLOCK)
    np.testing.assert_array_equal(a[:BLOCK], c)


def test_stream_rejects():
    with pytest.raises(DomainError):
        IndexStream(0, 0)
    with pytest.raises(DomainError):
        sample_index(IndexStream(0, 3), 4)


# -- single step --------------------------------------------------------------


def test_step_deep_feasible_is_gradient_step():
    p = generate_problem(3, 2, seed=1)
    sch = Schedule(step0=0.1)
    x = p.witness - 10 * p.A.sum(axis=0)  # far inside both halfspaces
    assert np.all(p.residuals(x) < -1)
    np.testing.assert_allclose(step(x, 3, 1, p, sch), x - step_at(sch, 3) * grad_f(p, x), rtol=1e-15)


def test_step_saturated_branch_by_hand():
    p = one_dim(2.0, 0.0, 1.0, 1.0)
    sch = Schedule(step0=0.1, delta0=1e-3)
    k = 4
    s_k, g_k = step_at(sch, k), gamma_at(sch, k)
    assert step(np.array([5.0]), k, 0, p, sch)[0] == pytest.approx(5 - s_k * (2 * 5 + g_k), rel=1e-15)


def test_step_zero_size_limit():
    p = generate_problem(3, 2, seed=1)
    x = np.array([4.0, -3.0, 2.0])
    np.testing.assert_allclose(step(x, 1, 0, p, Schedule(step0=1e-300)), x, rtol=0, atol=1e-290)


def test_step_rejects_bad_index_and_overflow():
    p = generate_problem(2, 2, seed=1)
    with pytest.raises(DomainError):
        step(np.zeros(2), 1, 2, p, Schedule())
    with pytest.raises(DivergenceError):
        step(np.full(2, 1e300), 1, 0, p, Schedule(step0=1e300))


def test_direction_unbiased_and_bounded(problem):
    p = problem
    rng = np.random.default_rng(0)
    for k in (1, 10, 1000):
        sch = Schedule()
        gamma, delta = gamma_at(sch, k), delta_at(sch, k)
        x = rng.standard_normal(p.n) * 2
        X = np.tile(x, (p.m, 1))
        dirs = _directions(p, X, np.arange(p.m), gamma, delta)
        np.testing.assert_allclose(dirs.mean(axis=0), grad_F(p, x, gamma, delta), rtol=0, atol=1e-12 * p.m)
        bound = np.linalg.norm(grad_f(p, x)) + gamma
        assert np.all(np.linalg.norm(dirs, axis=1) <= bound * (1 + 1e-14))


# -- runs ---------------------------------------------------------------------


def test_snapshot_grid():
    sch = Schedule()
    geo = snapshot_grid(SolverConfig(sch, 100))
    assert geo[0] == 1 and geo[-1] == 100 and np.all(np.diff(geo) > 0)
    expected = sorted({int(np.ceil(1.2 ** j)) for j in range(30) if np.ceil(1.2 ** j) <= 100} | {100})
    np.testing.assert_array_equal(geo, expected)
    ar = snapshot_grid(SolverConfig(sch, 10, grid="arithmetic", record_every=3))
    np.testing.assert_array_equal(ar, [3, 6, 9, 10])
    assert 77 in snapshot_grid(SolverConfig(sch, 100, checkpoints=(77,)))


def test_config_rejects():
    for kw in (dict(iterations=0), dict(iterations=10, record_every=0), dict(iterations=10, grid="log"),
               dict(iterations=10, seed=-1)):
        with pytest.raises(DomainError):
            SolverConfig(Schedule(), **kw)


def test_single_iteration(problem):
    p = problem
    sch = safe_schedule(p)
    tr = run(p, SolverConfig(sch, 1, seed=4))
    assert len(tr) == 1 and tr.k[0] == 1
    i = int(tr.index_sampled[0])
    assert i == IndexStream(4, p.m).next()
    np.testing.assert_array_equal(tr.final_point, step(p.witness, 1, i, p, sch))
    assert np.isnan(tr.sq_err_to_opt[0])
    lines = tr.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert len(lines) == 2 and lines[1].split(",")[3] == ""


def test_run_replays_step_by_step(problem):
    p = problem
    sch = safe_schedule(p)
    cfg = SolverConfig(sch, 300, seed=11, store_iterates=True, grid="arithmetic")
    tr = run(p, cfg)
    st = IndexStream(11, p.m)
    x = p.witness.copy()
    for k in range(1, 301):
        x = step(x, k, st.next(), p, sch)
        j = np.searchsorted(tr.k, k)
        if j < len(tr) and tr.k[j] == k:
            np.testing.assert_array_equal(tr.iterates[j], x)
            assert tr.f_value[j] == p.objective.value(x)
    np.testing.assert_array_equal(tr.final_point, x)
    assert list(tr.gamma) == [gamma_at(sch, int(k)) for k in tr.k]


def test_run_deterministic(problem):
    cfg = SolverConfig(safe_schedule(problem), 2000, seed=7)
    assert run(problem, cfg).to_csv() == run(problem, cfg).to_csv()
    other = SolverConfig(safe_schedule(problem), 2000, seed=8)
    assert run(problem, cfg).to_csv() != run(problem, other).to_csv()


def test_single_constraint_matches_full_gradient():
    p = generate_problem(3, 1, seed=4, spec=GeneratorSpec(active_optimum=True))
    sch = safe_schedule(p)
    a = run(p, SolverConfig(sch, 500, seed=1))
    b = run(p, SolverConfig(sch, 500, seed=1, full_gradient=True))
    np.testing.assert_allclose(a.final_point, b.final_point, rtol=1e-13, atol=1e-15)
    assert np.all(a.index_sampled == 0)


def test_divergence_keeps_partial_trace(problem):
    cfg = SolverConfig(Schedule(step0=1e150), 10_000, grid="arithmetic")
    with pytest.raises(DivergenceError) as err:
        run(problem, cfg)
    tr = err.value.trace
    assert tr.failed_at is not None and err.value.k == tr.failed_at
    assert 0 < len(tr) < tr.failed_at + 1
    assert tr.k[-1] < tr.failed_at


def test_invalid_schedule_rejected(problem):
    with pytest.raises(DomainError):
        run(problem, SolverConfig(Schedule(g=0.9, d=0.5), 10))


def test_initial_point_options(problem):
    sch = safe_schedule(problem)
    z = run(problem, SolverConfig(sch, 1, initial_point="zeros"))
    v = run(problem, SolverConfig(sch, 1, initial_point=np.zeros(problem.n)))
    np.testing.assert_array_equal(z.final_point, v.final_point)
    with pytest.raises(DomainError):
        run(problem, SolverConfig(sch, 1, initial_point="origin"))


# -- ensembles ----------------------------------------------------------------


def test_ensemble_rows_equal_single_runs(problem):
    cfg = SolverConfig(safe_schedule(problem), 3000, seed=20)
    ens = run_ensemble(problem, cfg, 4)
    for j, tr in enumerate(ens.traces):
        single = run(problem, SolverConfig(cfg.schedule, 3000, seed=20 + j), ens.x_star)
        assert tr.to_csv() == single.to_csv()
    one = run_ensemble(problem, cfg, 1)
    np.testing.assert_array_equal(one.mean_sq_err, one.traces[0].sq_err_to_opt)


def test_ensemble_workers_do_not_change_results(problem):
    cfg = SolverConfig(safe_schedule(problem), 1000, seed=0)
    a = run_ensemble(problem, cfg, 5, workers=1)
    b = run_ensemble(problem, cfg, 5, workers=2)
    assert a.to_csv() == b.to_csv()


def test_aggregate_statistics(problem):
    cfg = SolverConfig(safe_schedule(problem), 500, seed=3)
    ens = run_ensemble(problem, cfg, 6)
    sq = np.stack([t.sq_err_to_opt for t in ens.traces])
    np.testing.assert_allclose(ens.mean_sq_err, sq.mean(axis=0), rtol=1e-15)
    np.testing.assert_allclose(ens.stderr_sq_err, stats.sem(sq, axis=0), rtol=1e-12)
    dup = aggregate([ens.traces[0], ens.traces[0]])
    np.testing.assert_array_equal(dup[1], ens.traces[0].sq_err_to_opt)


@pytest.mark.slow
def test_long_run_stable_and_feasibility_improves():
    p = generate_problem(5, 8, seed=42, spec=GeneratorSpec(active_optimum=True))
    x_star = solve_constrained_exact(p).x_star
    cfg = SolverConfig(safe_schedule(p), 100_000, seed=0)
    ens = run_ensemble(p, cfg, 3, x_star)
    x1 = p.witness
    for tr in ens.traces:
        assert tr.max_iterate_norm <= 10 * (np.linalg.norm(x1) + np.linalg.norm(x_star) + 1)
        assert tr.dist_feasible[-1] <= tr.dist_feasible[0] / 100
        assert tr.sq_err_to_opt[-1] < tr.sq_err_to_opt[0]
