"""
Hierarchical shape-constrained design pipeline.

A Fourier-descriptor predesign gives X0; three subtasks then refine it in
shrinking search boxes, each promoting the previous subtask's objectives
to constraints:

    s1: MSE, step-length deviation, lowest-point error      -> X1
    s2: stance fluctuation, landing impact (s1 as bounds)   -> X2
    s3: same objectives, tighter bounds                     -> X3

A single-level five-objective baseline and a One-at-a-Time configuration
sweep are provided for comparison.
"""

import argparse
import logging
import sys
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    DegenerateFront,
    EmptyArchive,
    InfeasibleIncumbent,
    KinematicFailure,
    NoFeasibleIndividual,
)
from src.kinematics.linkage_core import (
    ANGLE_NAMES,
    ParamVector,
    Topology,
    default_bounds,
    trace_bt,
)
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target
from src.kinematics.trajectory import Trajectory, find_feature_points
from src.metrics import fourier_distance, impact, mse, performance_report, stance_metrics
from src.models import PerformanceReport
from src.optimization.moo import (
    AlgoConfig,
    Evaluation,
    Individual,
    ParetoArchive,
    evolve,
    hypervolume_2d,
    knee_points,
)
from src.settings import load_settings

logger = logging.getLogger(__name__)

STEP_BAND = 10.0
STEP_OUTSIDE_WEIGHT = 5.0


@dataclass(frozen=True)
class SubtaskSpec:
    """Objectives, constraints, search box and selection rules of one stage."""

    id: str
    objectives: Tuple[str, ...]
    constraints: Tuple[Tuple[str, float], ...] = ()
    search_box: Optional[Tuple[float, float]] = None
    priority: str = "f1"
    preferred: Tuple[Tuple[str, float], ...] = ()
    handoff: Tuple[Tuple[str, float], ...] = ()

    def __post_init__(self):
        """Validate objective ids and box."""
        known = set(MEASURES)
        for name in self.objectives + tuple(c for c, _ in self.constraints):
            if name not in known:
                raise ValueError(f"Unknown measure {name!r}")
        if self.priority not in self.objectives:
            raise ValueError("priority must be one of the objectives")
        if self.search_box is not None:
            frac, add = self.search_box
            if frac < 0 or add < 0:
                raise ValueError("search box must be non-negative")


MEASURES = ("f1", "f2", "f3", "f4", "f5", "fd")

S1_BOUNDS = (("f1", 6.0), ("f2", 5.0), ("f3", 5.0))
S2_BOUNDS = (("f4", 6.5), ("f5", 20.0))

SUBTASKS: Dict[str, SubtaskSpec] = {
    "predesign": SubtaskSpec("predesign", ("fd",), priority="fd"),
    "s1": SubtaskSpec(
        "s1",
        ("f1", "f2", "f3"),
        search_box=(0.2, 20.0),
        priority="f1",
        preferred=(("f2", 0.01), ("f3", 0.01)),
        handoff=S1_BOUNDS,
    ),
    "s2": SubtaskSpec(
        "s2",
        ("f4", "f5"),
        constraints=S1_BOUNDS,
        search_box=(0.1, 10.0),
        priority="f4",
        handoff=S1_BOUNDS + S2_BOUNDS,
    ),
    "s3": SubtaskSpec(
        "s3",
        ("f4", "f5"),
        constraints=S1_BOUNDS + S2_BOUNDS,
        search_box=(0.05, 5.0),
        priority="f5",
    ),
    "single_level": SubtaskSpec("single_level", ("f1", "f2", "f3", "f4", "f5"), priority="f1"),
}


@dataclass
class PipelineConfig:
    """Budget and sampling settings for a design run."""

    population: int = 60
    generations: int = 150
    crossover_fraction: float = 1.0 / 8.0
    mutation_fraction: float = 1.0 / 8.0
    seed: int = 0
    samples: int = 360
    mse_samples: int = 360
    report_samples: int = 3600
    n_harmonics: int = 7
    period: float = 2.0
    jobs: int = 1
    knee_pool: int = 10
    sbx_eta: float = 15.0
    mutation_eta: float = 20.0
    penalty_value: float = 1e10

    def __post_init__(self):
        """Validate configuration."""
        if self.samples < 64 or self.report_samples < 64:
            raise ValueError("Trace sample counts must be >= 64")
        if self.samples % 2 or self.mse_samples % 2:
            raise ValueError("Sample counts must be even")
        if not 1 <= self.knee_pool <= 10:
            raise ValueError("knee_pool must be in [1, 10]")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @classmethod
    def full_budget(cls, **overrides) -> "PipelineConfig":
        """Population 200 with crossover and mutation fractions of 1/8."""
        base = dict(population=200, generations=150, crossover_fraction=0.125, mutation_fraction=0.125)
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_settings(cls, **overrides) -> "PipelineConfig":
        """Defaults taken from the environment-backed settings."""
        settings = load_settings()
        base = dict(
            samples=settings.optimization_samples,
            mse_samples=settings.mse_samples,
            report_samples=settings.report_samples,
            n_harmonics=settings.fourier_harmonics,
            period=settings.period,
            jobs=settings.jobs,
            sbx_eta=settings.sbx_eta,
            mutation_eta=settings.mutation_eta,
            penalty_value=settings.penalty_value,
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)

    def algo(self, seed_offset: int = 0, stop_thresholds=None) -> AlgoConfig:
        return AlgoConfig(
            population=self.population,
            generations=self.generations,
            crossover_fraction=self.crossover_fraction,
            mutation_fraction=self.mutation_fraction,
            seed=self.seed + seed_offset,
            stop_thresholds=stop_thresholds,
            sbx_eta=self.sbx_eta,
            mutation_eta=self.mutation_eta,
            jobs=self.jobs,
            penalty_value=self.penalty_value,
        )


@dataclass
class Incumbent:
    """A decided genome with its measures and full report."""

    params: ParamVector
    measures: Dict[str, float]
    report: Optional[PerformanceReport] = None
    branch: int = 1


@dataclass
class DesignRun:
    """Everything a hierarchical run produced."""

    topology: Topology
    target: Trajectory
    config: PipelineConfig
    incumbents: Dict[str, Incumbent] = field(default_factory=dict)
    archives: Dict[str, ParetoArchive] = field(default_factory=dict)


@dataclass
class SingleLevelResult:
    """Single-level archive and the members minimizing f1, f4 and f5."""

    archive: ParetoArchive
    selected: Dict[str, Individual]


def step_length_deviation(l_s: float, target: float = 300.0, band: float = STEP_BAND) -> float:
    """
    Piecewise step-length objective.

    Quadratic in (l - target) strictly inside the band; outside it the
    distance to the nearer band edge is weighted by 5. The jumps at the band
    edges are kept.
    """
    low, high = target - band, target + band
    if low < l_s < high:
        return (l_s - target) ** 2
    edge = low if l_s <= low else high
    return STEP_OUTSIDE_WEIGHT * (l_s - edge) ** 2


def search_box(
    incumbent: ParamVector, fraction: float, add_mm: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-gene box around an incumbent.

    Half-width max(fraction |x|, add_mm) for lengths and fraction |x| for
    angles, intersected with the topology's full bounds but always holding
    the incumbent.
    """
    x = incumbent.as_array()
    names = incumbent.topology.parameter_names
    is_angle = np.array([n in ANGLE_NAMES for n in names])
    half = np.where(is_angle, fraction * np.abs(x), np.maximum(fraction * np.abs(x), add_mm))
    full_lo, full_hi = default_bounds(incumbent.topology)
    lower = np.minimum(np.maximum(x - half, full_lo), x)
    upper = np.maximum(np.minimum(x + half, full_hi), x)
    return lower, upper


class MechanismProblem:
    """Trajectory-synthesis problem over one topology and target."""

    def __init__(
        self,
        topology: Topology,
        target: Trajectory,
        spec: SubtaskSpec,
        lower: np.ndarray,
        upper: np.ndarray,
        config: PipelineConfig,
    ):
        self.topology = Topology(topology)
        self.target = target
        self.spec = spec
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.config = config
        self.n_obj = len(spec.objectives)

        self._target_resampled = target.resampled(config.mse_samples)
        target_fp = find_feature_points(target)
        _, self.target_stance, _ = stance_metrics(target, target_fp)
        self.target_lowest = float(target.y.min())

    def trace(self, params: ParamVector) -> Tuple[Trajectory, int]:
        """Trace with the first dyad on +1, falling back to -1."""
        last_error: Optional[KinematicFailure] = None
        tail = (1,) * (self.topology.dyad_count - 1)
        for branch in (1, -1):
            try:
                bt = trace_bt(
                    params,
                    self.config.samples,
                    period=self.config.period,
                    branches=(branch,) + tail,
                )
                return bt, branch
            except KinematicFailure as e:
                last_error = e
        raise last_error

    def measure(self, genome: Sequence[float]) -> Tuple[Dict[str, float], int]:
        """
        Every objective measure of a genome.

        Raises:
            KinematicFailure: If the mechanism cannot be traced
        """
        params = ParamVector(self.topology, tuple(genome))
        bt, branch = self.trace(params)
        fp = find_feature_points(bt)
        h_s, l_s, _ = stance_metrics(bt, fp)
        i, _, _ = impact(bt, fp)
        return (
            {
                "f1": mse(bt.resampled(self.config.mse_samples), self._target_resampled),
                "f2": step_length_deviation(l_s, self.target_stance),
                "f3": (float(bt.y[fp.t3]) - self.target_lowest) ** 2,
                "f4": h_s,
                "f5": i,
                "fd": fourier_distance(bt, self.target, self.config.n_harmonics),
            },
            branch,
        )

    def evaluate(self, genome: np.ndarray) -> Evaluation:
        try:
            values, branch = self.measure(genome)
        except ValueError:
            # Non-positive lengths outside the box
            return Evaluation(objectives=np.zeros(self.n_obj), failed=True)
        objectives = np.array([values[o] for o in self.spec.objectives])
        violations = np.array([values[c] - bound for c, bound in self.spec.constraints])
        return Evaluation(
            objectives=objectives,
            violations=violations,
            info={"measures": values, "branch": branch},
        )


def _meets(measures: Dict[str, float], bounds: Sequence[Tuple[str, float]]) -> bool:
    return all(measures.get(name, np.inf) < bound for name, bound in bounds)


def _filtered(members: List[Individual], bounds: Sequence[Tuple[str, float]]) -> List[Individual]:
    if not bounds:
        return members
    kept = [m for m in members if _meets(m.info.get("measures", {}), bounds)]
    return kept or members


def constraint_margin(member: Individual, bounds: Sequence[Tuple[str, float]]) -> float:
    """Smallest slack ``bound - value`` over ``bounds``; 0 without bounds, -inf for failures."""
    if member.failed:
        return -np.inf
    if not bounds:
        return 0.0
    measures = member.info.get("measures", {})
    return float(min(bound - measures.get(name, np.inf) for name, bound in bounds))


def decide(
    archive: ParetoArchive,
    spec: SubtaskSpec,
    pool_size: int = 10,
    ceiling: Optional[float] = None,
) -> Individual:
    """
    Deterministic decision on an archive.

    Members meeting the next stage's bounds are kept when any exist, and
    only members at or under ``ceiling`` on the priority objective are
    eligible. The knee pool is drawn from them, narrowed by the preferred
    bounds, then ranked by largest constraint margin, priority objective
    and genome.

    Raises:
        EmptyArchive: If the archive has no members
        NoFeasibleIndividual: If no member stays under ``ceiling``
    """
    if not archive.individuals:
        raise EmptyArchive(f"Archive of {spec.id} is empty")
    p = spec.objectives.index(spec.priority)
    members = sorted(archive.individuals, key=lambda ind: tuple(ind.genome))
    members = _filtered(members, spec.handoff)
    if ceiling is not None:
        members = [m for m in members if not m.failed and m.objectives[p] <= ceiling]
        if not members:
            raise NoFeasibleIndividual(f"No {spec.id} member keeps {spec.priority} <= {ceiling:.6g}")
    try:
        pool = knee_points(members, k=pool_size)
    except DegenerateFront:
        pool = members[:pool_size]
    pool = _filtered(pool, spec.preferred)
    return min(
        pool,
        key=lambda m: (-constraint_margin(m, spec.constraints), m.objectives[p], tuple(m.genome)),
    )


class HierarchicalPipeline:
    """Predesign plus three refinement subtasks for one topology."""

    def __init__(
        self,
        topology: Topology,
        target: Trajectory,
        config: Optional[PipelineConfig] = None,
        progress_callback: Optional[Callable[[str, int, int], None]] = None,
    ):
        """
        Initialize the pipeline.

        Args:
            topology: Leg linkage to synthesize (four-bar or six-bar)
            target: Closed target bench trajectory
            config: Budget and sampling settings
            progress_callback: Called with (subtask, generation, cap)
        """
        self.topology = Topology(topology)
        if self.topology is Topology.RTCLM:
            raise ValueError("Use src.rtclm.stepwise_optimize for the seven-bar")
        if not target.closed:
            raise ValueError("Target must be a closed trajectory")
        self.target = target
        self.config = config or PipelineConfig()
        self.progress_callback = progress_callback
        self.last_archive: Optional[ParetoArchive] = None

    def _problem(self, spec: SubtaskSpec, lower: np.ndarray, upper: np.ndarray) -> MechanismProblem:
        return MechanismProblem(self.topology, self.target, spec, lower, upper, self.config)

    def _run(
        self,
        spec: SubtaskSpec,
        lower: np.ndarray,
        upper: np.ndarray,
        seed_offset: int,
        initial: Optional[List[Sequence[float]]] = None,
    ) -> ParetoArchive:
        problem = self._problem(spec, lower, upper)

        def progress(gen: int, cap: int) -> None:
            if self.progress_callback:
                self.progress_callback(spec.id, gen, cap)

        archive = evolve(
            problem,
            self.config.algo(seed_offset),
            initial=initial,
            subtask=spec.id,
            progress_callback=progress,
        )
        logger.info(
            f"subtask_completed: id={spec.id}, archive={len(archive)}, "
            f"seed={self.config.seed + seed_offset}"
        )
        return archive

    def _incumbent(self, genome: Sequence[float], spec: SubtaskSpec) -> Incumbent:
        problem = self._problem(spec, *default_bounds(self.topology))
        params = ParamVector(self.topology, tuple(float(g) for g in genome))
        measures, branch = problem.measure(params.values)
        return Incumbent(params=params, measures=measures, branch=branch)

    def _decide(self, archive: ParetoArchive, spec: SubtaskSpec, ceiling: Optional[float] = None) -> Incumbent:
        chosen = decide(archive, spec, self.config.knee_pool, ceiling=ceiling)
        if chosen.failed or (spec.constraints and not chosen.feasible):
            raise NoFeasibleIndividual(f"No feasible individual in {spec.id} archive")
        return self._incumbent(chosen.genome, spec)

    def predesign(self) -> Incumbent:
        """X0 from the full box, minimizing the Fourier shape distance."""
        spec = SUBTASKS["predesign"]
        archive = self._run(spec, *default_bounds(self.topology), seed_offset=0)
        self.last_archive = archive
        return self._decide(archive, spec)

    def _refine(self, spec: SubtaskSpec, incumbent: Incumbent, seed_offset: int) -> Tuple[ParetoArchive, Incumbent]:
        if spec.constraints and not _meets(incumbent.measures, spec.constraints):
            raise InfeasibleIncumbent(
                f"Incumbent violates {spec.id} bounds: "
                + ", ".join(f"{n}={incumbent.measures[n]:.3f}" for n, _ in spec.constraints)
            )
        frac, add = spec.search_box
        lower, upper = search_box(incumbent.params, frac, add)
        archive = self._run(spec, lower, upper, seed_offset, initial=[incumbent.params.values])
        ceiling = incumbent.measures[spec.priority]
        return archive, self._decide(archive, spec, ceiling=ceiling)

    def subtask1(self, x0: Incumbent) -> Tuple[ParetoArchive, Incumbent]:
        return self._refine(SUBTASKS["s1"], x0, seed_offset=1)

    def subtask2(self, x1: Incumbent) -> Tuple[ParetoArchive, Incumbent]:
        return self._refine(SUBTASKS["s2"], x1, seed_offset=2)

    def subtask3(self, x2: Incumbent) -> Tuple[ParetoArchive, Incumbent]:
        return self._refine(SUBTASKS["s3"], x2, seed_offset=3)

    def attach_report(self, incumbent: Incumbent) -> Incumbent:
        """Full-resolution performance report for an incumbent."""
        tail = (1,) * (self.topology.dyad_count - 1)
        bt = trace_bt(
            incumbent.params,
            self.config.report_samples,
            period=self.config.period,
            branches=(incumbent.branch,) + tail,
        )
        incumbent.report = performance_report(
            bt,
            target=self.target,
            mse_samples=self.config.mse_samples,
            n_harmonics=self.config.n_harmonics,
        )
        return incumbent

    def run(self, x0: Optional[ParamVector] = None) -> DesignRun:
        """
        Execute predesign (unless ``x0`` is given) and the three subtasks.

        Returns:
            DesignRun with incumbents x0..x3 and archives s1..s3
        """
        run = DesignRun(topology=self.topology, target=self.target, config=self.config)
        if x0 is None:
            inc0 = self.predesign()
            run.archives["predesign"] = self.last_archive
        else:
            inc0 = self._incumbent(x0.values, SUBTASKS["s1"])
        run.incumbents["x0"] = inc0

        current = inc0
        for key, step in (("s1", self.subtask1), ("s2", self.subtask2), ("s3", self.subtask3)):
            archive, current = step(current)
            run.archives[key] = archive
            run.incumbents["x" + key[1]] = current

        for inc in run.incumbents.values():
            self.attach_report(inc)
        logger.info(
            f"pipeline_completed: topology={self.topology.value}, seed={self.config.seed}, "
            f"mse_x3={run.incumbents['x3'].measures['f1']:.3f}"
        )
        return run

    def run_single_level(self) -> SingleLevelResult:
        """Five objectives at once over the full box; pick argmins of f1, f4, f5."""
        spec = SUBTASKS["single_level"]
        archive = self._run(spec, *default_bounds(self.topology), seed_offset=0)
        if not archive.individuals:
            raise EmptyArchive("Single-level archive is empty")
        members = sorted(archive.individuals, key=lambda ind: tuple(ind.genome))
        members = [m for m in members if not m.failed]
        if not members:
            raise NoFeasibleIndividual("Single-level run found no feasible mechanism")
        selected = {}
        for name in ("f1", "f4", "f5"):
            p = spec.objectives.index(name)
            selected[name] = min(members, key=lambda m: (m.objectives[p], tuple(m.genome)))
        return SingleLevelResult(archive=archive, selected=selected)


def predesign(topology: Topology, target: Trajectory, cfg: PipelineConfig) -> Incumbent:
    return HierarchicalPipeline(topology, target, cfg).predesign()


def subtask1(x0: ParamVector, target: Trajectory, cfg: PipelineConfig) -> Tuple[ParetoArchive, Incumbent]:
    pipe = HierarchicalPipeline(x0.topology, target, cfg)
    return pipe.subtask1(pipe._incumbent(x0.values, SUBTASKS["s1"]))


def subtask2(x1: ParamVector, target: Trajectory, cfg: PipelineConfig) -> Tuple[ParetoArchive, Incumbent]:
    pipe = HierarchicalPipeline(x1.topology, target, cfg)
    return pipe.subtask2(pipe._incumbent(x1.values, SUBTASKS["s2"]))


def subtask3(x2: ParamVector, target: Trajectory, cfg: PipelineConfig) -> Tuple[ParetoArchive, Incumbent]:
    pipe = HierarchicalPipeline(x2.topology, target, cfg)
    return pipe.subtask3(pipe._incumbent(x2.values, SUBTASKS["s3"]))


def run_single_level(topology: Topology, target: Trajectory, cfg: PipelineConfig) -> SingleLevelResult:
    return HierarchicalPipeline(topology, target, cfg).run_single_level()


@dataclass
class SweepPoint:
    """Outcome of one One-at-a-Time setting."""

    field: str
    value: float
    objectives: List[float]
    hypervolume: float


SWEEP_FIELDS = ("crossover_fraction", "mutation_fraction", "population")


def one_at_a_time(
    x0: ParamVector,
    target: Trajectory,
    cfg: PipelineConfig,
    field_name: str,
    values: Sequence[float],
    reference: Optional[Sequence[float]] = None,
) -> List[SweepPoint]:
    """
    Vary one algorithm setting over ``values`` and rerun subtask 1 from X0.

    Records the decided individual's objectives and the hypervolume of the
    archive's first two objectives.
    """
    if field_name not in SWEEP_FIELDS:
        raise ValueError(f"Sweep field must be one of {SWEEP_FIELDS}")
    spec = SUBTASKS["s1"]
    runs = []
    for value in values:
        cast = int(value) if field_name == "population" else float(value)
        archive, x1 = subtask1(x0, target, replace(cfg, **{field_name: cast}))
        objs = np.array([m.objectives[:2] for m in archive.individuals if not m.failed]).reshape(-1, 2)
        runs.append((cast, objs, x1))
        logger.info(f"sweep_point: {field_name}={cast}, f1={x1.measures['f1']:.3f}")

    if reference is None:
        stacked = np.vstack([objs for _, objs, _ in runs])
        # Shared nadir so hypervolumes are comparable across settings
        reference = stacked.max(axis=0) * 1.1 + 1e-9 if len(stacked) else (1.0, 1.0)

    return [
        SweepPoint(
            field=field_name,
            value=float(cast),
            objectives=[x1.measures[o] for o in spec.objectives],
            hypervolume=hypervolume_2d(objs, reference),
        )
        for cast, objs, x1 in runs
    ]


def main():
    """Run a hierarchical design from the command line."""
    parser = argparse.ArgumentParser(description="Hierarchical CLM trajectory synthesis")
    parser.add_argument("--topology", default="StephensonI", help="Leg topology")
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument("--population", type=int, default=60, help="Population size")
    parser.add_argument("--generations", type=int, default=150, help="Generations per subtask")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    args = parser.parse_args()

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    cfg = PipelineConfig.from_settings(
        seed=args.seed, population=args.population, generations=args.generations
    )
    target = cycloid_bt_target(CycloidSpec(), cfg.samples)

    def progress(subtask: str, gen: int, cap: int) -> None:
        if gen % 10 == 0 or gen == cap:
            print(f"  {subtask}: generation {gen}/{cap}")

    pipeline = HierarchicalPipeline(Topology(args.topology), target, cfg, progress_callback=progress)
    try:
        run = pipeline.run()
    except Exception as e:
        logger.exception(f"pipeline_failed: {e}")
        sys.exit(3)

    print("\n" + "=" * 50)
    print("DESIGN SUMMARY")
    print("=" * 50)
    for key, inc in run.incumbents.items():
        m = inc.measures
        print(f"{key}: MSE={m['f1']:.2f} mm, h_s={m['f4']:.2f} mm, I={m['f5']:.2f} mm/s")


if __name__ == "__main__":
    main()
