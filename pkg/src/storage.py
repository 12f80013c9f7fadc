"""
File persistence for mechanisms, targets, layouts, traces and runs.

Every write goes to a temporary file in the destination directory and is
moved into place with os.replace, so readers never see partial files.
"""

import hashlib
import io
import json
import logging
import os
import tempfile
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Type, TypeVar

import numpy as np
from pydantic import BaseModel, ValidationError

from src.errors import KinematicFailure, MechanismFileError
from src.kinematics.linkage_core import ParamVector, Topology
from src.kinematics.target_curves import CycloidSpec, cycloid_bt_target
from src.kinematics.trajectory import LegLayout, Trajectory
from src.models import (
    ArchiveRecord,
    LayoutFile,
    MechanismCollection,
    MechanismFile,
    RunConfig,
    RunManifest,
    TargetFile,
)
from src.optimization.moo import ParetoArchive
from src.rtclm import coupling_solve
from src.settings import load_settings

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)

PACKAGE_NAME = "clm-designer"
DERIVED_TOLERANCE = 1e-6


def package_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "0.0.0+local"


def fixtures_dir() -> Path:
    """Fixture directory from CLM_FIXTURES (default ``fixtures``)."""
    return Path(load_settings().fixtures)


def fixture_path(name: str) -> Path:
    """Resolve a fixture file name, adding ``.json`` when missing."""
    path = fixtures_dir() / name
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    return path


def atomic_write_text(path: Path, text: str) -> Path:
    """Write ``text`` to ``path`` through a temporary sibling file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_model(path: Path, model: BaseModel) -> Path:
    """Serialize a pydantic model as indented JSON."""
    if hasattr(model, "to_json"):
        text = model.to_json()
    else:
        text = model.model_dump_json(by_alias=True, indent=2)
    return atomic_write_text(path, text + "\n")


def write_json(path: Path, data: Any) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def config_hash(data: Dict[str, Any]) -> str:
    """sha256 over canonical JSON of an effective configuration."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _read_json(path: Path) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise MechanismFileError(f"{path}: cannot read file: {e.strerror}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise MechanismFileError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e


def _validate(path: Path, model: Type[ModelT], data: Any) -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        where = ".".join(str(p) for p in first["loc"]) or "<root>"
        raise MechanismFileError(f"{path}: {where}: {first['msg']}") from e


def load_model(path: Path, model: Type[ModelT]) -> ModelT:
    """
    Read and validate a JSON document.

    Raises:
        MechanismFileError: With line and column for JSON syntax errors,
            or the offending field for schema errors
    """
    return _validate(Path(path), model, _read_json(path))


def params_from_file(mfile: MechanismFile, path: Optional[Path] = None) -> ParamVector:
    """
    Build the parameter vector a mechanism file describes.

    Raises:
        MechanismFileError: Unknown topology, missing or extra parameters,
            or invalid lengths
    """
    where = path or mfile.label or "<mechanism>"
    try:
        topology = Topology(mfile.topology)
    except ValueError as e:
        raise MechanismFileError(f"{where}: unknown topology {mfile.topology!r}") from e
    names = set(topology.parameter_names)
    missing = sorted(names - set(mfile.params))
    extra = sorted(set(mfile.params) - names)
    if missing or extra:
        raise MechanismFileError(f"{where}: missing params {missing}, unknown params {extra}")
    try:
        return ParamVector.from_mapping(topology, mfile.params)
    except ValueError as e:
        raise MechanismFileError(f"{where}: {e}") from e


def _check_derived(mfile: MechanismFile, params: ParamVector, path: Path) -> None:
    try:
        regenerated = coupling_solve(params).derived()
    except KinematicFailure as e:
        logger.warning(f"derived_unavailable: file={path}, reason={e}")
        return
    for key, stored in (mfile.derived or {}).items():
        fresh = regenerated.get(key)
        if fresh is not None and abs(fresh - stored) > DERIVED_TOLERANCE * max(1.0, abs(fresh)):
            logger.warning(f"derived_mismatch: file={path}, {key}: stored={stored}, regenerated={fresh}")


def load_mechanism(path: Path) -> Tuple[MechanismFile, ParamVector]:
    """Read a mechanism file; a seven-bar's derived block is regenerated and checked."""
    path = Path(path)
    mfile = load_model(path, MechanismFile)
    params = params_from_file(mfile, path)
    if params.topology is Topology.RTCLM and mfile.derived:
        _check_derived(mfile, params, path)
    if mfile.suspect:
        logger.warning(f"suspect_fixture: file={path}, note={mfile.note}")
    return mfile, params


def mechanism_file(
    params: ParamVector,
    label: Optional[str] = None,
    source: Optional[str] = None,
    reported: Optional[Dict[str, float]] = None,
    branches: Optional[Sequence[int]] = None,
    derived: Optional[Dict[str, float]] = None,
    targets: Optional[Dict[str, float]] = None,
) -> MechanismFile:
    return MechanismFile(
        topology=params.topology.value,
        params=params.as_dict(),
        label=label,
        source=source,
        branches=list(branches) if branches is not None else None,
        reported=reported or {},
        derived=derived,
        targets=targets,
    )


def load_collection(path: Path) -> MechanismCollection:
    return load_model(path, MechanismCollection)


def target_from_file(tfile: TargetFile) -> Trajectory:
    spec = CycloidSpec(L=tfile.L, H=tfile.H, T=tfile.T)
    return cycloid_bt_target(spec, tfile.n, flip=tfile.flip)


def load_target(path: Path) -> Trajectory:
    """Target BT described by a target file."""
    path = Path(path)
    tfile = load_model(path, TargetFile)
    try:
        return target_from_file(tfile)
    except ValueError as e:
        raise MechanismFileError(f"{path}: {e}") from e


def load_layout(path: Path) -> LegLayout:
    path = Path(path)
    lfile = load_model(path, LayoutFile)
    try:
        return LegLayout(
            origins={leg.id: (leg.origin[0], leg.origin[1]) for leg in lfile.legs},
            phases={leg.id: leg.phase for leg in lfile.legs},
        )
    except ValueError as e:
        raise MechanismFileError(f"{path}: {e}") from e


def load_run_config(path: Optional[Path]) -> RunConfig:
    if path is None:
        return RunConfig()
    return load_model(path, RunConfig)


def write_trajectory_csv(path: Path, traj: Trajectory, phase: Optional[str] = None) -> Path:
    """
    Write ``t,x,y`` rows.

    A walking trajectory carries a leading ``# phase=swing`` line.
    """
    buffer = io.StringIO()
    if phase:
        buffer.write(f"# phase={phase}\n")
    data = np.column_stack([traj.times, traj.x, traj.y])
    np.savetxt(buffer, data, delimiter=",", header="t,x,y", comments="", fmt="%.9f")
    return atomic_write_text(path, buffer.getvalue())


def read_trajectory_csv(path: Path) -> Trajectory:
    """
    Read a CSV written by write_trajectory_csv.

    Files with a phase line load as open trajectories.
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    phase = next((ln.split("=", 1)[1] for ln in lines if ln.startswith("# phase=")), None)
    rows = [ln for ln in lines if ln and not ln.startswith("#") and not ln.startswith("t,")]
    try:
        data = np.loadtxt(io.StringIO("\n".join(rows)), delimiter=",", ndmin=2)
    except ValueError as e:
        raise MechanismFileError(f"{path}: {e}") from e
    t, xy = data[:, 0], data[:, 1:3]
    if phase:
        period = 2.0 * (t[-1] - t[0])
        return Trajectory(points=xy, period=period, closed=False)
    period = (t[1] - t[0]) * len(t)
    return Trajectory(points=xy, period=period)


def write_archive_jsonl(path: Path, archive: ParetoArchive) -> Path:
    """One ArchiveRecord per line."""
    lines = [ArchiveRecord(**rec).model_dump_json() for rec in archive.to_records()]
    return atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_archive_jsonl(path: Path) -> List[ArchiveRecord]:
    path = Path(path)
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(ArchiveRecord.model_validate_json(line))
        except ValidationError as e:
            raise MechanismFileError(f"{path}:{lineno}: {e.errors()[0]['msg']}") from e
    return records


def _relative(path: Path, root: Path) -> str:
    return str(path.relative_to(root)) if path.is_relative_to(root) else str(path)


def write_manifest(
    out_dir: Path,
    command: str,
    effective_config: Dict[str, Any],
    outputs: Iterable[Path],
    wall_time_s: float,
    seed: Optional[int] = None,
    status: str = "ok",
    extrapolation: bool = False,
) -> Path:
    """Write manifest.json listing every file a command produced."""
    out_dir = Path(out_dir)
    manifest = RunManifest(
        command=command,
        config_hash=config_hash(effective_config),
        seed=seed,
        version=package_version(),
        wall_time_s=round(wall_time_s, 3),
        outputs=sorted(_relative(Path(p), out_dir) for p in outputs),
        status=status,
        extrapolation=extrapolation,
    )
    return write_model(out_dir / "manifest.json", manifest)
