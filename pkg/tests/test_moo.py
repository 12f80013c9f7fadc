import os
import sys

import numpy as np
import pytest

# Add project root to path
sys.path.append(os.getcwd())

from src.errors import DegenerateFront, EvaluationPanic, LoopDefect
from src.optimization.moo import (
    AlgoConfig,
    Evaluation,
    Individual,
    constraint_dominates,
    crowding_distance,
    evolve,
    hypervolume_2d,
    knee_points,
    nondominated_sort,
    penalty,
    polynomial_mutation,
    sbx_crossover,
)


def _ind(objectives, violations=(), failed=False):
    return Individual(
        genome=np.array(objectives, dtype=float),
        objectives=np.array(objectives, dtype=float),
        constraint_violations=np.array(violations, dtype=float),
        failed=failed,
    )


class Schaffer:
    """Two quadratic objectives over one gene, plus a padding gene."""

    lower = np.array([-5.0, 0.0])
    upper = np.array([5.0, 1.0])
    n_obj = 2

    def __init__(self, fail_above=None):
        self.fail_above = fail_above

    def evaluate(self, genome):
        x = genome[0]
        if self.fail_above is not None and x > self.fail_above:
            raise LoopDefect("unassemblable")
        return Evaluation(objectives=np.array([x * x, (x - 2.0) ** 2]))


class Exploding:
    lower = np.array([0.0])
    upper = np.array([1.0])
    n_obj = 1

    def evaluate(self, genome):
        raise RuntimeError("boom")


def test_algo_config_validation():
    """Test invalid budgets are rejected."""
    with pytest.raises(ValueError, match="even"):
        AlgoConfig(population=7)
    with pytest.raises(ValueError, match="crossover_fraction"):
        AlgoConfig(crossover_fraction=1.5)
    with pytest.raises(ValueError, match="jobs"):
        AlgoConfig(jobs=0)


def test_penalty():
    """Test failures contribute the penalty value and successes nothing."""
    assert penalty(False) == 0.0
    assert penalty(True) == 1e10
    assert penalty(True, 5.0) == 5.0


def test_nondominated_sort_ranks():
    """Test fronts of a small hand-made population."""
    pop = [_ind([1, 1]), _ind([2, 2]), _ind([0, 3]), _ind([3, 3])]
    fronts = nondominated_sort(pop)
    assert fronts[0] == [0, 2]
    assert fronts[1] == [1]
    assert fronts[2] == [3]
    assert [p.rank for p in pop] == [0, 1, 0, 2]


def _brute_force_fronts(objectives):
    """Peel fronts by checking every pair for Pareto dominance."""
    remaining = set(range(len(objectives)))
    fronts = []
    while remaining:
        front = sorted(
            i
            for i in remaining
            if not any(
                np.all(objectives[j] <= objectives[i]) and np.any(objectives[j] < objectives[i])
                for j in remaining
            )
        )
        fronts.append(front)
        remaining -= set(front)
    return fronts


def test_nondominated_sort_matches_pairwise_check():
    """Test every front against a quadratic pairwise dominance check on random populations."""
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 40))
        n_obj = int(rng.integers(2, 4))
        objectives = rng.integers(0, 6, size=(n, n_obj)).astype(float)
        pop = [_ind(row) for row in objectives]
        fronts = nondominated_sort(pop)
        assert [sorted(f) for f in fronts] == _brute_force_fronts(objectives)
        for rank, front in enumerate(fronts):
            assert all(pop[i].rank == rank for i in front)


def test_nondominated_sort_puts_feasible_first():
    """Test infeasible members rank behind every feasible one, ordered by violation."""
    rng = np.random.default_rng(12)
    objectives = rng.uniform(0.0, 1.0, size=(20, 2))
    violations = [0.0] * 10 + list(rng.uniform(0.1, 1.0, size=10))
    pop = [_ind(obj, violations=[v]) for obj, v in zip(objectives, violations)]
    nondominated_sort(pop)
    worst_feasible = max(p.rank for p in pop[:10])
    assert all(p.rank > worst_feasible for p in pop[10:])
    infeasible = sorted(pop[10:], key=lambda p: p.total_violation)
    assert [p.rank for p in infeasible] == sorted(p.rank for p in infeasible)


def test_constraint_domination():
    """Test feasibility first, then violation size, then objectives."""
    feasible = _ind([10, 10])
    infeasible = _ind([0, 0], violations=[1.0])
    worse = _ind([0, 0], violations=[2.0])
    assert constraint_dominates(feasible, infeasible)
    assert not constraint_dominates(infeasible, feasible)
    assert constraint_dominates(infeasible, worse)
    assert not _ind([0, 0], failed=True).feasible


def test_crowding_distance_boundaries():
    """Test extremes get infinite distance and interior members finite."""
    front = [_ind([0, 4]), _ind([1, 2]), _ind([4, 0])]
    d = crowding_distance(front)
    assert np.isinf(d[0]) and np.isinf(d[2])
    assert d[1] == pytest.approx(2.0)


def test_knee_points_picks_bulge():
    """Test the member farthest from the extreme-point line is the knee."""
    front = [_ind([0.0, 1.0]), _ind([0.2, 0.2]), _ind([1.0, 0.0]), _ind([0.3, 0.5])]
    knee = knee_points(front, k=2)
    assert list(knee[0].objectives) == [0.2, 0.2]
    assert list(knee[1].objectives) == [0.3, 0.5]


def test_knee_points_scale_invariant():
    """Test rescaling one objective keeps the same knee."""
    front = [_ind([0.0, 1.0]), _ind([0.2, 0.2]), _ind([1.0, 0.0])]
    scaled = [_ind([f1 * 1000.0, f2]) for f1, f2 in (ind.objectives for ind in front)]
    assert list(knee_points(scaled)[0].objectives) == [200.0, 0.2]


def test_knee_points_degenerate():
    """Test identical members raise DegenerateFront."""
    with pytest.raises(DegenerateFront):
        knee_points([_ind([1, 1]), _ind([1, 1])])


def test_hypervolume_2d():
    """Test the dominated area of a two-point set."""
    assert hypervolume_2d([[1, 2], [2, 1]], [3, 3]) == pytest.approx(3.0)
    assert hypervolume_2d([[4, 4]], [3, 3]) == 0.0
    assert hypervolume_2d([[1, 2], [2, 1], [2, 2]], [3, 3]) == pytest.approx(3.0)


def test_variation_operators_respect_bounds():
    """Test crossover and mutation children stay inside the box."""
    rng = np.random.default_rng(3)
    lower, upper = np.zeros(6), np.ones(6)
    for _ in range(50):
        a, b = rng.random(6), rng.random(6)
        c1, c2 = sbx_crossover(rng, a, b, lower, upper, 1.0, 15.0)
        m = polynomial_mutation(rng, c1, lower, upper, 1.0, 20.0)
        for child in (c1, c2, m):
            assert np.all(child >= lower) and np.all(child <= upper)


def test_zero_fractions_copy_parents():
    """Test zero application probability leaves genes untouched."""
    rng = np.random.default_rng(0)
    a, b = np.full(4, 0.25), np.full(4, 0.75)
    c1, c2 = sbx_crossover(rng, a, b, np.zeros(4), np.ones(4), 0.0, 15.0)
    assert np.array_equal(c1, a) and np.array_equal(c2, b)
    assert np.array_equal(polynomial_mutation(rng, a, np.zeros(4), np.ones(4), 0.0, 20.0), a)


def test_evolve_is_deterministic():
    """Test two runs with the same seed give the same archive."""
    cfg = AlgoConfig(population=16, generations=10, crossover_fraction=0.9, mutation_fraction=0.5, seed=7)
    a = evolve(Schaffer(), cfg, subtask="schaffer")
    b = evolve(Schaffer(), cfg, subtask="schaffer")
    assert np.array_equal(a.objectives(), b.objectives())
    assert a.provenance.subtask == "schaffer"
    assert a.provenance.seed == 7


def test_evolve_parallel_matches_serial():
    """Test worker threads do not change the result."""
    cfg = AlgoConfig(population=16, generations=5, crossover_fraction=0.9, mutation_fraction=0.5, seed=2)
    serial = evolve(Schaffer(), cfg)
    parallel = evolve(Schaffer(), AlgoConfig(**{**cfg.__dict__, "jobs": 3}))
    assert np.array_equal(serial.objectives(), parallel.objectives())


def test_evolve_finds_pareto_set():
    """Test the archive lies on the segment between the two minima."""
    cfg = AlgoConfig(population=40, generations=40, crossover_fraction=0.9, mutation_fraction=0.5, seed=1)
    archive = evolve(Schaffer(), cfg)
    genes = np.array([ind.genome[0] for ind in archive.individuals])
    assert np.all((genes > -0.1) & (genes < 2.1))


def test_evolve_penalizes_kinematic_failures():
    """Test unassemblable genomes are kept out of the archive."""
    cfg = AlgoConfig(population=20, generations=5, crossover_fraction=0.9, mutation_fraction=0.5, seed=4)
    archive = evolve(Schaffer(fail_above=1.0), cfg)
    assert all(not ind.failed for ind in archive.individuals)
    assert all(ind.genome[0] <= 1.0 for ind in archive.individuals)


def test_evolve_stops_on_threshold():
    """Test a population already below the thresholds stops at once."""
    cfg = AlgoConfig(population=8, generations=50, seed=0, stop_thresholds=(1e9, 1e9))
    archive = evolve(Schaffer(), cfg)
    assert archive.stopped_early
    assert archive.provenance.generation == 0


def test_evolve_seeds_initial_population():
    """Test injected genomes are evaluated in the first generation."""
    cfg = AlgoConfig(population=8, generations=0, seed=0)
    archive = evolve(Schaffer(), cfg, initial=[[1.0, 0.5]])
    assert any(np.allclose(ind.genome, [1.0, 0.5]) for ind in archive.individuals)


def test_evolve_reports_progress():
    """Test the callback sees every generation."""
    seen = []
    cfg = AlgoConfig(population=8, generations=3, seed=0)
    evolve(Schaffer(), cfg, progress_callback=lambda gen, cap: seen.append((gen, cap)))
    assert seen == [(1, 3), (2, 3), (3, 3)]


def test_evolve_panics_on_unexpected_error():
    """Test programming errors abort the run with the genome attached."""
    with pytest.raises(EvaluationPanic) as exc:
        evolve(Exploding(), AlgoConfig(population=4, generations=1, seed=0))
    assert len(exc.value.genome) == 1


def test_archive_records():
    """Test archive members serialize with provenance."""
    cfg = AlgoConfig(population=8, generations=2, seed=5)
    archive = evolve(Schaffer(), cfg, subtask="s1")
    records = archive.to_records()
    assert len(records) == len(archive)
    assert records[0]["subtask"] == "s1"
    assert records[0]["seed"] == 5
    assert records[0]["rank"] == 0


def test_knee_points_single_objective():
    """Test a one-objective front is ordered by its objective, ties by index."""
    front = [_ind([0.3]), _ind([0.1]), _ind([0.2]), _ind([0.1])]
    knees = knee_points(front, k=3)
    assert knees == [front[1], front[3], front[2]]
