"""Exception hierarchy for the CLM design toolkit.

Kinematic failures are the ones an optimizer turns into penalties; metric
errors flag trajectories a measure cannot be computed on; optimization
errors end a run. The CLI maps each family to an exit code.
"""

from typing import Any, Optional, Sequence


class ClmError(Exception):
    """Base class for all toolkit errors."""


class MechanismFileError(ClmError, ValueError):
    """Malformed mechanism, layout, target or config file."""


# Kinematics


class KinematicFailure(ClmError):
    """Kinematics could not be solved for a parameter set."""


class LoopDefect(KinematicFailure):
    """A dyad's circles do not intersect."""

    def __init__(self, message: str, angle: Optional[float] = None):
        super().__init__(message)
        self.angle = angle


class DegenerateDyad(KinematicFailure):
    """A dyad's two base points coincide."""


class BranchDiscontinuity(KinematicFailure):
    """Consecutive traced points jump further than the branch threshold."""

    def __init__(self, message: str, index: Optional[int] = None):
        super().__init__(message)
        self.index = index


class NoValidPair(KinematicFailure):
    """No landing / take-off pair satisfies the x-ordering rule."""


class NoRoot(KinematicFailure):
    """The coupling equations have no converged root."""


class ImaginaryBranch(KinematicFailure):
    """A loop defect occurred inside the coupling solve."""


# Metrics


class MetricError(ClmError):
    """A performance measure is undefined for the given input."""


class ZeroStanceLength(MetricError):
    """Stance length is zero, so straightness is undefined."""


class LengthMismatch(MetricError, ValueError):
    """Two trajectories have different sample counts."""


class OutOfRange(MetricError, ValueError):
    """An argument lies outside its admissible range."""


class InsufficientClearance(MetricError):
    """An obstacle is at least as high as some leg's crossing height."""


# Optimization


class OptimizationError(ClmError):
    """An optimization run could not produce a usable result."""


class EvaluationPanic(OptimizationError):
    """An objective evaluation raised an unexpected exception."""

    def __init__(self, message: str, genome: Sequence[float]):
        super().__init__(message)
        self.genome = list(genome)


class DegenerateFront(OptimizationError):
    """Every front member has identical objectives."""


class NoFeasibleIndividual(OptimizationError):
    """No kinematically feasible individual survived the generation cap."""


class InfeasibleIncumbent(OptimizationError):
    """The incumbent handed to a subtask violates that subtask's bounds."""


class EmptyArchive(OptimizationError):
    """A decision was requested on an empty archive."""


class TargetUnreached(OptimizationError):
    """Stop thresholds were not met before the generation cap."""

    def __init__(self, message: str, result: Any = None):
        super().__init__(message)
        self.result = result
