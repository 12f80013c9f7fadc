"""
Constrained multi-objective evolutionary engine.

NSGA-II with constraint-domination, simulated binary crossover and
polynomial mutation, plus the Pareto utilities the design pipelines rely
on: non-dominated sorting, crowding distance, knee points and 2-D
hypervolume. Kinematic failures are turned into a large additive penalty.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence

import numpy as np

from src.errors import DegenerateFront, EvaluationPanic, KinematicFailure, MetricError

logger = logging.getLogger(__name__)

PENALTY = 1e10


@dataclass
class Evaluation:
    """What a problem returns for one genome."""

    objectives: np.ndarray
    violations: np.ndarray = field(default_factory=lambda: np.zeros(0))
    failed: bool = False
    info: Dict[str, Any] = field(default_factory=dict)


class Problem(Protocol):
    """Box-bounded problem evaluated one genome at a time."""

    lower: np.ndarray
    upper: np.ndarray
    n_obj: int

    def evaluate(self, genome: np.ndarray) -> Evaluation: ...


@dataclass
class Individual:
    """One evaluated genome."""

    genome: np.ndarray
    objectives: np.ndarray
    constraint_violations: np.ndarray
    failed: bool = False
    rank: int = 0
    crowding: float = 0.0
    generation: int = 0
    penalty_value: float = PENALTY
    info: Dict[str, Any] = field(default_factory=dict)

    @property
    def total_violation(self) -> float:
        total = float(np.sum(np.maximum(self.constraint_violations, 0.0)))
        return total + (self.penalty_value if self.failed else 0.0)

    @property
    def feasible(self) -> bool:
        return self.total_violation <= 0.0


@dataclass
class AlgoConfig:
    """Evolution settings; fractions are per-gene application probabilities."""

    population: int = 60
    generations: int = 150
    crossover_fraction: float = 1.0 / 8.0
    mutation_fraction: float = 1.0 / 8.0
    seed: int = 0
    stop_thresholds: Optional[Sequence[float]] = None
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    jobs: int = 1
    penalty_value: float = PENALTY

    def __post_init__(self):
        """Validate configuration."""
        if self.population < 2 or self.population % 2:
            raise ValueError("population must be an even number >= 2")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        for name in ("crossover_fraction", "mutation_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        if self.stop_thresholds is not None:
            self.stop_thresholds = tuple(float(t) for t in self.stop_thresholds)


@dataclass
class Provenance:
    """Where an archive came from."""

    subtask: str
    generation: int
    seed: int


@dataclass
class ParetoArchive:
    """Rank-0 individuals of a finished run."""

    individuals: List[Individual]
    provenance: Provenance
    stopped_early: bool = False
    history: List[List[float]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.individuals)

    def objectives(self) -> np.ndarray:
        return np.array([ind.objectives for ind in self.individuals])

    def to_records(self) -> List[Dict[str, Any]]:
        """One JSON-ready dict per member, for JSONL persistence."""
        return [
            {
                "genome": [float(g) for g in ind.genome],
                "objectives": [float(o) for o in ind.objectives],
                "violations": [float(v) for v in ind.constraint_violations],
                "rank": int(ind.rank),
                "generation": int(ind.generation),
                "subtask": self.provenance.subtask,
                "seed": int(self.provenance.seed),
            }
            for ind in self.individuals
        ]


def penalty(failed: bool, value: float = PENALTY) -> float:
    """Objective contribution of a kinematic failure."""
    return value if failed else 0.0


def pareto_dominates(fa: np.ndarray, fb: np.ndarray) -> bool:
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def constraint_dominates(a: Individual, b: Individual) -> bool:
    """Feasibility first, then lower violation, then Pareto dominance."""
    va, vb = a.total_violation, b.total_violation
    if va <= 0.0 and vb > 0.0:
        return True
    if va > 0.0 and vb <= 0.0:
        return False
    if va > 0.0 and vb > 0.0:
        return va < vb
    return pareto_dominates(a.objectives, b.objectives)


def nondominated_sort(pop: Sequence[Individual]) -> List[List[int]]:
    """
    Fast non-dominated sort under constraint-domination.

    Sets each individual's rank and returns the fronts as index lists.
    """
    n = len(pop)
    dominated_by: List[List[int]] = [[] for _ in range(n)]
    counts = np.zeros(n, dtype=int)
    for i in range(n):
        for j in range(i + 1, n):
            if constraint_dominates(pop[i], pop[j]):
                dominated_by[i].append(j)
                counts[j] += 1
            elif constraint_dominates(pop[j], pop[i]):
                dominated_by[j].append(i)
                counts[i] += 1

    fronts: List[List[int]] = []
    current = [i for i in range(n) if counts[i] == 0]
    rank = 0
    while current:
        for i in current:
            pop[i].rank = rank
        fronts.append(current)
        nxt: List[int] = []
        for i in current:
            for j in dominated_by[i]:
                counts[j] -= 1
                if counts[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
        rank += 1
    return fronts


def crowding_distance(front: Sequence[Individual]) -> np.ndarray:
    """Crowding distance per member; boundary members get +inf."""
    size = len(front)
    if size == 0:
        return np.zeros(0)
    if size <= 2:
        return np.full(size, np.inf)
    F = np.array([ind.objectives for ind in front], dtype=float)
    distance = np.zeros(size)
    for m in range(F.shape[1]):
        order = np.argsort(F[:, m], kind="stable")
        values = F[order, m]
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        span = values[-1] - values[0]
        if span <= 0.0:
            continue
        distance[order[1:-1]] += (values[2:] - values[:-2]) / span
    return distance


def knee_points(front: Sequence[Individual], k: int = 1) -> List[Individual]:
    """
    Members farthest from the hyperplane through the front's extreme points.

    Objectives are min-max normalized first, so the choice is invariant to
    per-axis scaling. When no member lies off the hyperplane the members
    nearest the centroid of the extremes come first.

    Raises:
        DegenerateFront: If every member has identical objectives
    """
    members = list(front)
    if not members:
        return []
    if len(members) == 1:
        return members[:1]
    F = np.array([ind.objectives for ind in members], dtype=float)
    lo, hi = F.min(axis=0), F.max(axis=0)
    span = hi - lo
    if np.all(span == 0.0):
        raise DegenerateFront("All front members have identical objectives")
    span[span == 0.0] = 1.0
    P = (F - lo) / span
    m = P.shape[1]
    index = np.arange(len(members))

    if m == 1:
        order = np.lexsort((index, P[:, 0]))
        return [members[i] for i in order[:k]]

    extremes = np.array([P[np.lexsort((index, P[:, j]))[0]] for j in range(m)])
    try:
        normal = np.linalg.solve(extremes, np.ones(m))
    except np.linalg.LinAlgError:
        normal = np.ones(m)
    if not np.all(np.isfinite(normal)) or np.linalg.norm(normal) == 0.0:
        normal = np.ones(m)
    dist = (1.0 - P @ normal) / np.linalg.norm(normal)
    dist = np.round(dist, 12)

    if np.all(np.abs(dist) < 1e-12):
        centroid = extremes.mean(axis=0)
        key = np.round(np.linalg.norm(P - centroid, axis=1), 12)
        order = np.lexsort((index, key))
    else:
        order = np.lexsort((index, -dist))
    return [members[i] for i in order[:k]]


def hypervolume_2d(points: Sequence[Sequence[float]], ref: Sequence[float]) -> float:
    """Area dominated by a 2-objective point set and bounded by ``ref``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    r = np.asarray(ref, dtype=float)
    pts = pts[np.all(pts < r, axis=1)]
    if len(pts) == 0:
        return 0.0
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    best_f2 = r[1]
    for f1, f2 in pts:
        if f2 < best_f2:
            area += (r[0] - f1) * (best_f2 - f2)
            best_f2 = f2
    return float(area)


class Algorithm(Protocol):
    """Pluggable optimizer interface."""

    def run(
        self,
        problem: Problem,
        cfg: AlgoConfig,
        initial: Optional[Sequence[Sequence[float]]] = None,
        subtask: str = "run",
        progress_callback: Optional[Callable[[int, int], None]] = None,
    ) -> ParetoArchive: ...


class NSGA2:
    """Elitist non-dominated sorting genetic algorithm with constraint-domination."""

    def run(
        self,
        problem: Problem,
        cfg: AlgoConfig,
        initial: Optional[Sequence[Sequence[float]]] = None,
        subtask: str = "run",
        progress_callback: Optional[Callable[[int, int], None]] = None,
    ) -> ParetoArchive:
        rng = np.random.default_rng(cfg.seed)
        lower = np.asarray(problem.lower, dtype=float)
        upper = np.asarray(problem.upper, dtype=float)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("Invalid problem bounds")

        genomes = self._initial_genomes(rng, lower, upper, cfg.population, initial)
        pop = self._evaluate_all(problem, genomes, cfg, generation=0)
        self._rank(pop)
        history = [self._best_feasible(pop, problem.n_obj)]

        generation = 0
        stopped = self._reached(pop, cfg)
        while not stopped and generation < cfg.generations:
            generation += 1
            children = self._variation(rng, pop, lower, upper, cfg)
            offspring = self._evaluate_all(problem, children, cfg, generation=generation)
            pop = self._survive(pop + offspring, cfg.population)
            history.append(self._best_feasible(pop, problem.n_obj))
            stopped = self._reached(pop, cfg)
            if progress_callback:
                progress_callback(generation, cfg.generations)
            logger.debug(
                f"generation_completed: subtask={subtask}, gen={generation}, "
                f"feasible={sum(ind.feasible for ind in pop)}"
            )

        fronts = nondominated_sort(pop)
        front0 = [pop[i] for i in fronts[0]]
        logger.info(
            f"evolve_completed: subtask={subtask}, generations={generation}, "
            f"archive={len(front0)}, stopped_early={stopped}, seed={cfg.seed}"
        )
        return ParetoArchive(
            individuals=front0,
            provenance=Provenance(subtask=subtask, generation=generation, seed=cfg.seed),
            stopped_early=stopped,
            history=history,
        )

    @staticmethod
    def _initial_genomes(
        rng: np.random.Generator,
        lower: np.ndarray,
        upper: np.ndarray,
        size: int,
        initial: Optional[Sequence[Sequence[float]]],
    ) -> List[np.ndarray]:
        seeded = [np.clip(np.asarray(g, dtype=float), lower, upper) for g in (initial or [])][:size]
        random = rng.uniform(lower, upper, size=(size - len(seeded), len(lower)))
        return seeded + [row for row in random]

    @staticmethod
    def _evaluate_one(problem: Problem, genome: np.ndarray, cfg: AlgoConfig, generation: int) -> Individual:
        try:
            ev = problem.evaluate(genome)
        except (KinematicFailure, MetricError) as e:
            logger.debug(f"evaluation_penalized: {type(e).__name__}: {e}")
            ev = Evaluation(objectives=np.zeros(problem.n_obj), failed=True)
        except Exception as e:
            logger.exception(f"evaluation_panic: genome={list(genome)}")
            raise EvaluationPanic(f"Evaluation raised {type(e).__name__}: {e}", genome) from e

        objectives = np.asarray(ev.objectives, dtype=float)
        if ev.failed or not np.all(np.isfinite(objectives)):
            objectives = np.where(np.isfinite(objectives), objectives, 0.0)
            objectives = objectives + penalty(True, cfg.penalty_value)
            failed = True
        else:
            failed = False
        return Individual(
            genome=np.asarray(genome, dtype=float),
            objectives=objectives,
            constraint_violations=np.asarray(ev.violations, dtype=float),
            failed=failed,
            generation=generation,
            penalty_value=cfg.penalty_value,
            info=dict(ev.info),
        )

    def _evaluate_all(
        self, problem: Problem, genomes: List[np.ndarray], cfg: AlgoConfig, generation: int
    ) -> List[Individual]:
        if cfg.jobs == 1:
            return [self._evaluate_one(problem, g, cfg, generation) for g in genomes]
        # map() keeps genome order, so results merge deterministically
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(lambda g: self._evaluate_one(problem, g, cfg, generation), genomes))

    @staticmethod
    def _rank(pop: List[Individual]) -> List[List[int]]:
        fronts = nondominated_sort(pop)
        for front in fronts:
            members = [pop[i] for i in front]
            for ind, d in zip(members, crowding_distance(members)):
                ind.crowding = float(d)
        return fronts

    def _survive(self, combined: List[Individual], size: int) -> List[Individual]:
        fronts = self._rank(combined)
        survivors: List[Individual] = []
        for front in fronts:
            if len(survivors) + len(front) <= size:
                survivors.extend(combined[i] for i in front)
                continue
            members = [combined[i] for i in front]
            crowd = np.array([ind.crowding for ind in members])
            order = np.argsort(-crowd, kind="stable")
            survivors.extend(members[i] for i in order[: size - len(survivors)])
            break
        return survivors

    @staticmethod
    def _tournament(rng: np.random.Generator, pop: List[Individual]) -> Individual:
        i, j = rng.integers(0, len(pop), size=2)
        a, b = pop[i], pop[j]
        if a.rank != b.rank:
            return a if a.rank < b.rank else b
        return b if b.crowding > a.crowding else a

    def _variation(
        self,
        rng: np.random.Generator,
        pop: List[Individual],
        lower: np.ndarray,
        upper: np.ndarray,
        cfg: AlgoConfig,
    ) -> List[np.ndarray]:
        children: List[np.ndarray] = []
        while len(children) < cfg.population:
            p1 = self._tournament(rng, pop).genome
            p2 = self._tournament(rng, pop).genome
            c1, c2 = sbx_crossover(rng, p1, p2, lower, upper, cfg.crossover_fraction, cfg.sbx_eta)
            children.append(polynomial_mutation(rng, c1, lower, upper, cfg.mutation_fraction, cfg.mutation_eta))
            children.append(polynomial_mutation(rng, c2, lower, upper, cfg.mutation_fraction, cfg.mutation_eta))
        return children[: cfg.population]

    @staticmethod
    def _reached(pop: List[Individual], cfg: AlgoConfig) -> bool:
        if cfg.stop_thresholds is None:
            return False
        thresholds = np.asarray(cfg.stop_thresholds, dtype=float)
        return any(ind.feasible and np.all(ind.objectives < thresholds) for ind in pop)

    @staticmethod
    def _best_feasible(pop: List[Individual], n_obj: int) -> List[float]:
        feasible = [ind.objectives for ind in pop if ind.feasible]
        if not feasible:
            return [float("inf")] * n_obj
        return [float(v) for v in np.min(np.array(feasible), axis=0)]


def sbx_crossover(
    rng: np.random.Generator,
    x1: np.ndarray,
    x2: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    fraction: float,
    eta: float,
):
    """Simulated binary crossover applied to each gene with probability ``fraction``."""
    n = len(x1)
    mask = rng.random(n) < fraction
    u = rng.random(n)
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (eta + 1.0)),
    )
    c1 = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2)
    c2 = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2)
    c1 = np.where(mask, c1, x1)
    c2 = np.where(mask, c2, x2)
    return np.clip(c1, lower, upper), np.clip(c2, lower, upper)


def polynomial_mutation(
    rng: np.random.Generator,
    x: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    fraction: float,
    eta: float,
) -> np.ndarray:
    """Polynomial mutation applied to each gene with probability ``fraction``."""
    n = len(x)
    mask = rng.random(n) < fraction
    u = rng.random(n)
    delta = np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)),
    )
    mutated = np.where(mask, x + delta * (upper - lower), x)
    return np.clip(mutated, lower, upper)


def evolve(
    problem: Problem,
    cfg: AlgoConfig,
    initial: Optional[Sequence[Sequence[float]]] = None,
    subtask: str = "run",
    algorithm: Optional[Algorithm] = None,
    progress_callback: Optional[Callable[[int, int], None]] = None,
) -> ParetoArchive:
    """
    Run a constrained multi-objective optimization.

    Args:
        problem: Problem exposing bounds, n_obj and evaluate()
        cfg: Algorithm configuration
        initial: Genomes injected into the first population
        subtask: Provenance label
        algorithm: Optimizer; NSGA-II when omitted
        progress_callback: Called with (generation, cap) after each generation

    Returns:
        ParetoArchive of the final rank-0 set

    Raises:
        EvaluationPanic: If an evaluation raises an unexpected exception
    """
    algo = algorithm or NSGA2()
    return algo.run(problem, cfg, initial=initial, subtask=subtask, progress_callback=progress_callback)
