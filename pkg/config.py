"""
CLI configuration file.

A run is described by one JSON file:

    {
      "run": {RunConfig fields},
      "domains": [{"name": "web", "influence_csv": "data/web.csv"},
                  {"name": "code", "synthetic": {"size": 200, "seed": 1}}],
      "evaluator": {"kind": "synthetic_quadratic", "params": {...}},
      "output_dir": "runs/quadratic"
    }

Relative paths are resolved against the directory holding the config file.
"""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, model_validator

from errors import ConfigInvalid
from experiments.synthetic import SyntheticDomainSpec, synthetic_domain
from graph.state import DomainDataset, RunConfig
from tools.evaluators import EvaluatorHandle, EvaluatorKind
from tools.influence import load_influence_csv

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class DomainSource(BaseModel):
    """Where one domain's points and influence values come from."""

    model_config = ConfigDict(frozen=True)

    name: str
    influence_csv: Optional[str] = None
    synthetic: Optional[SyntheticDomainSpec] = None

    @model_validator(mode="after")
    def _one_source(self) -> "DomainSource":
        if (self.influence_csv is None) == (self.synthetic is None):
            raise ConfigInvalid(f"domain '{self.name}' needs exactly one of influence_csv or synthetic")
        return self


class CliConfigFile(BaseModel):
    model_config = ConfigDict(frozen=True)

    run: RunConfig
    domains: List[DomainSource]
    evaluator: EvaluatorHandle
    output_dir: Optional[str] = None
    base_dir: Optional[str] = None

    @model_validator(mode="after")
    def _domain_count(self) -> "CliConfigFile":
        if len(self.domains) != self.run.n_domains:
            raise ConfigInvalid(
                f"run.n_domains is {self.run.n_domains} but {len(self.domains)} domains are listed"
            )
        return self


def load_config(path: PathLike) -> CliConfigFile:
    """
    Parses and validates a config file, pinning base_dir to its directory.

    Raises:
        FileNotFoundError: when the file does not exist
        ConfigInvalid: when it is not valid JSON
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigInvalid(f"{path}: not valid JSON ({e})") from e
    payload.setdefault("base_dir", str(path.resolve().parent))
    return CliConfigFile.model_validate(payload)


def base_dir_of(cfg: CliConfigFile) -> Path:
    return Path(cfg.base_dir) if cfg.base_dir else Path(".")


def _resolve(cfg: CliConfigFile, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base_dir_of(cfg) / p


def load_domains(cfg: CliConfigFile) -> List[DomainDataset]:
    """Loads every domain in config order."""
    domains = []
    for source in cfg.domains:
        if source.influence_csv is not None:
            domains.append(load_influence_csv(_resolve(cfg, source.influence_csv), name=source.name))
        else:
            domains.append(synthetic_domain(source.name, source.synthetic))
    return domains


def with_overrides(cfg: CliConfigFile, overrides: Dict[str, Any]) -> CliConfigFile:
    """Applies CLI flag overrides to the run section (None values are ignored)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return cfg
    run = RunConfig.model_validate({**cfg.run.model_dump(), **changes})
    return cfg.model_copy(update={"run": run})


def resolve_output_dir(cfg: CliConfigFile, override: Optional[PathLike] = None) -> Path:
    """--output-dir, then the config's output_dir, then MIXOPT_OUTPUT_DIR, then runs/."""
    if override:
        return Path(override)
    if cfg.output_dir:
        return _resolve(cfg, cfg.output_dir)
    return Path(os.getenv("MIXOPT_OUTPUT_DIR", "runs")) / f"seed{cfg.run.seed}"


def resolved_payload(cfg: CliConfigFile, output_dir: Path) -> Dict[str, Any]:
    """Config as written to config.json: every relative path made absolute."""
    payload = cfg.model_dump(mode="json")
    for entry in payload["domains"]:
        if entry.get("influence_csv"):
            entry["influence_csv"] = str(_resolve(cfg, entry["influence_csv"]).resolve())
    if cfg.evaluator.kind == EvaluatorKind.TABLE_LOOKUP and "path" in cfg.evaluator.params:
        payload["evaluator"]["params"]["path"] = str(_resolve(cfg, cfg.evaluator.params["path"]).resolve())
    payload["output_dir"] = str(Path(output_dir).resolve())
    payload["base_dir"] = str(base_dir_of(cfg).resolve())
    return payload
