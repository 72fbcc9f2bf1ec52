"""
Surrogate model utilities.

This package contains the Gaussian-process surrogate and helper functions for
checkpointing it to, and restoring it from, a run directory.
"""

import json
import logging
from pathlib import Path
from typing import Optional

from surrogate.gp import GPState, from_checkpoint, to_checkpoint

logger = logging.getLogger(__name__)


def save_gp_checkpoint(state: GPState, path: Path) -> None:
    """
    Saves a GP state (inputs, targets, hyperparameters) as JSON.

    Args:
        state: GP state to persist
        path: Target file, e.g. <run_dir>/gp_checkpoint.json
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(to_checkpoint(state), indent=2), encoding="utf-8")
    tmp.replace(path)
    logger.debug("GP checkpoint saved to %s", path)


def load_gp_checkpoint(path: Path) -> Optional[GPState]:
    """
    Loads a GP state from disk, recomputing the Cholesky factor.

    Args:
        path: Checkpoint file

    Returns:
        Restored GPState, or None if the file does not exist
    """
    path = Path(path)
    if not path.exists():
        return None
    return from_checkpoint(json.loads(path.read_text(encoding="utf-8")))
