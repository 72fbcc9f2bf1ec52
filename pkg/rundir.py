"""
Run-directory persistence.

This module owns the on-disk layout of a run so that a run can be audited,
reported on and replayed after the process is gone:

    config.json              resolved CLI configuration
    observations.jsonl       append-only, one Observation per line
    manifests/<it>_<s>.json  every evaluated mixture
    gp_checkpoint.json       surrogate inputs, targets, hyperparameters
    result.json              best mixture and final ratio
    report/                  CSV reports
"""

import json
import logging
import shutil
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

from graph.state import DomainDataset, MixtureManifest, Observation

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
OBSERVATIONS_FILE = "observations.jsonl"
MANIFEST_DIR = "manifests"
GP_CHECKPOINT_FILE = "gp_checkpoint.json"
RESULT_FILE = "result.json"
REPORT_DIR = "report"

PathLike = Union[str, Path]


def _get_path(run_dir: PathLike, name: str) -> Path:
    """Get the path of a run file, creating the run directory if needed."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir / name


def reset_run_dir(run_dir: PathLike) -> None:
    """
    Removes the files a previous run left behind.

    Only the run layout is touched; anything else in the directory is kept.
    """
    run_dir = Path(run_dir)
    if not run_dir.exists():
        return
    for name in (OBSERVATIONS_FILE, GP_CHECKPOINT_FILE, RESULT_FILE):
        path = run_dir / name
        if path.exists():
            path.unlink()
    for name in (MANIFEST_DIR, REPORT_DIR):
        path = run_dir / name
        if path.exists():
            shutil.rmtree(path)
    logger.debug("Cleared previous run files in %s", run_dir)


def write_json(run_dir: PathLike, name: str, payload: Dict[str, Any]) -> Path:
    path = _get_path(run_dir, name)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_json(run_dir: PathLike, name: str) -> Dict[str, Any]:
    path = Path(run_dir) / name
    if not path.exists():
        raise FileNotFoundError(f"{name} not found in run directory {run_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


def append_observation(run_dir: PathLike, obs: Observation) -> None:
    """Appends one observation as a JSON line."""
    path = _get_path(run_dir, OBSERVATIONS_FILE)
    with open(path, "a", encoding="utf-8") as f:
        f.write(obs.model_dump_json() + "\n")


def read_observations(run_dir: PathLike) -> List[Observation]:
    path = Path(run_dir) / OBSERVATIONS_FILE
    if not path.exists():
        raise FileNotFoundError(f"{OBSERVATIONS_FILE} not found in run directory {run_dir}")
    with open(path, "r", encoding="utf-8") as f:
        return [Observation.model_validate_json(line) for line in f if line.strip()]


def manifest_payload(manifest: MixtureManifest, domains: Optional[Sequence[DomainDataset]] = None) -> Dict[str, Any]:
    """Manifest JSON handed to evaluators: selections plus payload refs when known."""
    payload: Dict[str, Any] = {
        "digest": manifest.digest,
        "target_ratio": list(manifest.target_ratio.weights),
        "total_size": manifest.total_size,
        "with_replacement": manifest.with_replacement,
        "selections": {name: list(ids) for name, ids in manifest.selections.items()},
    }
    if domains:
        refs = {d.name: {p.point_id: p.payload_ref for p in d.points} for d in domains}
        payload["payload_refs"] = {
            name: [refs.get(name, {}).get(pid) for pid in ids]
            for name, ids in manifest.selections.items()
        }
    return payload


def manifest_path(run_dir: PathLike, iteration: int, sample_index: int) -> Path:
    return Path(run_dir) / MANIFEST_DIR / f"{iteration}_{sample_index}.json"


def write_manifest(run_dir: PathLike, manifest: MixtureManifest, iteration: int, sample_index: int,
                   domains: Optional[Sequence[DomainDataset]] = None) -> Path:
    path = manifest_path(run_dir, iteration, sample_index)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest_payload(manifest, domains), indent=1) + "\n", encoding="utf-8")
    return path


def load_manifest(path: PathLike) -> MixtureManifest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return MixtureManifest(
        selections={k: tuple(v) for k, v in payload["selections"].items()},
        target_ratio={"weights": payload["target_ratio"]},
        total_size=payload["total_size"],
        with_replacement=payload.get("with_replacement", False),
    )
