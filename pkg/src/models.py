"""Serialized schemas: reports, mechanism / target / layout files, run configs and manifests."""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

SCHEMA_VERSION = 1


class VersionedModel(BaseModel):
    """Base for every JSON document; carries the top-level "schema" key."""

    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    schema_version: int = Field(
        default=SCHEMA_VERSION, alias="schema", description="File schema version"
    )

    @field_validator("schema_version")
    @classmethod
    def check_schema(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"Unsupported schema version {v}")
        return v

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


class PerformanceReport(BaseModel):
    """All walking performance measures of one mechanism."""

    h_s: float = Field(..., description="Stance fluctuation (mm)")
    S: float = Field(..., description="Straightness, 100 h_s / l_s (%)")
    theta1: float = Field(..., description="Landing angle (deg)")
    theta2: float = Field(..., description="Take-off angle (deg)")
    I: float = Field(..., description="Landing impact speed (mm/s)")  # noqa: E741
    h_m: float = Field(..., description="Maximum crossing height (mm)")
    h_bar: float = Field(..., description="Mean crossing height (mm)")
    psi2: float = Field(..., description="Brick-obstacle crossing probability (%)")
    psi4: float = Field(..., description="Step-obstacle crossing probability (%)")
    mse: Optional[float] = Field(None, description="Mean point error to the target (mm)")
    fourier_distance: Optional[float] = Field(
        None, description="Fourier descriptor distance to the target"
    )
    l_s: float = Field(..., description="Stance length (mm)")
    l_w: float = Field(..., description="Walking trajectory step length (mm)")


class MechanismFile(VersionedModel):
    """Mechanism parameter file."""

    topology: str = Field(..., description="Topology tag, e.g. StephensonI")
    params: Dict[str, float] = Field(..., description="Parameter name -> value")
    units: Literal["mm-rad"] = Field(default="mm-rad", description="Length / angle units")
    label: Optional[str] = Field(None, description="Short identifier, e.g. stephenson1-x3")
    source: Optional[str] = Field(None, description="Where the values come from")
    branches: Optional[List[int]] = Field(None, description="Branch flag per dyad")
    direction: int = Field(default=1, description="Crank direction (+1 or -1)")
    reported: Dict[str, float] = Field(
        default_factory=dict, description="Published metrics for comparison"
    )
    suspect: bool = Field(default=False, description="Values look like a transcription error")
    note: Optional[str] = Field(None, description="Free-form remark")
    mismatch: Optional[str] = Field(
        None, description="Known disagreement between the published values and this assembly convention"
    )
    derived: Optional[Dict[str, float]] = Field(
        None, description="Seven-bar derived quantities (regenerated on load)"
    )
    targets: Optional[Dict[str, float]] = Field(
        None, description="Seven-bar target heights h6 / h4 (mm)"
    )

    @field_validator("direction")
    @classmethod
    def check_direction(cls, v: int) -> int:
        if v not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        return v


class MechanismCollection(VersionedModel):
    """Several published mechanisms in one file (comparison tables)."""

    title: str = Field(..., description="What the collection holds")
    mechanisms: List[MechanismFile] = Field(default_factory=list)
    bounds: Optional[Dict[str, List[float]]] = Field(
        None, description="Search bounds name -> [lower, upper]"
    )


class TargetFile(VersionedModel):
    """Target trajectory description."""

    kind: Literal["cycloid"] = Field(default="cycloid", description="Generator")
    L: float = Field(default=300.0, description="Step length (mm)")
    H: float = Field(default=100.0, description="Step height (mm)")
    T: float = Field(default=2.0, description="Period (s)")
    n: int = Field(default=360, description="Sample count")
    flip: bool = Field(default=False, description="Draw swing above the stance line")


class LayoutLeg(BaseModel):
    """One leg of a layout file."""

    id: Literal["A", "B", "C", "D"]
    origin: List[float] = Field(..., min_length=2, max_length=2)
    phase: float = Field(default=0.0, description="Phase offset as a fraction of T")


class LayoutFile(VersionedModel):
    """Leg layout file."""

    legs: List[LayoutLeg] = Field(..., min_length=2, max_length=4)


class RunConfig(VersionedModel):
    """Run configuration; unset values fall back to settings and defaults."""

    population: Optional[int] = None
    generations: Optional[int] = None
    crossover_fraction: Optional[float] = None
    mutation_fraction: Optional[float] = None
    seed: Optional[int] = None
    stop_thresholds: Optional[List[float]] = None
    samples: Optional[int] = Field(None, description="Crank samples per trace")
    mse_samples: Optional[int] = None
    knee_pool: Optional[int] = Field(None, description="Knee pool size for decisions")
    full_budget: bool = Field(default=False, description="Population 200, fractions 1/8")
    jobs: Optional[int] = None
    geometry_tolerance: Optional[float] = None


class ArchiveRecord(BaseModel):
    """One archive line."""

    genome: List[float]
    objectives: List[float]
    violations: List[float]
    rank: int
    generation: int
    subtask: str
    seed: int


class RunManifest(VersionedModel):
    """Written once at the end of every command that produces files."""

    command: str = Field(..., description="Subcommand and arguments")
    config_hash: str = Field(..., description="sha256 of the effective configuration")
    seed: Optional[int] = Field(None, description="Root random seed")
    version: str = Field(..., description="Package version / git describe")
    wall_time_s: float = Field(..., description="Elapsed wall time (s)")
    outputs: List[str] = Field(default_factory=list, description="Files written")
    status: str = Field(default="ok", description="ok, target_unreached or failed")
    extrapolation: bool = Field(default=False, description="Targets outside the demonstrated range")
