"""
Recorder node: appends the iteration's observation and tracks the best mixture.

This is the only node that writes to the run directory; nothing is persisted
for an iteration whose estimate failed.
"""

import logging
from pathlib import Path

from graph.state import BestMixture, Observation, RunState
from rundir import GP_CHECKPOINT_FILE, append_observation, write_manifest
from surrogate import save_gp_checkpoint
from surrogate.gp import append_observation as gp_append

logger = logging.getLogger(__name__)


def _fmt(weights) -> str:
    return "[" + ", ".join(f"{w:.4f}" for w in weights) + "]"


def persist_iteration(state: RunState, obs: Observation) -> None:
    """Writes the observation line, all k manifests and the surrogate checkpoint."""
    run_dir = Path(state["run_dir"])
    estimate = state["_estimate"]
    for sample_index, manifest in enumerate(estimate.manifests):
        write_manifest(run_dir, manifest, obs.iteration, sample_index, state["domains"])
    append_observation(run_dir, obs)
    save_gp_checkpoint(state["gp"], run_dir / GP_CHECKPOINT_FILE)


def record_observation(state: RunState) -> RunState:
    """
    Turns the inner estimate into an observation and updates the surrogate.

    The best mixture only changes on a strict improvement, so among equal
    losses the earliest iteration is kept.

    Args:
        state: RunState with _proposal and _estimate set

    Returns:
        Updated RunState with history, gp, best and iteration advanced
    """
    iteration = state["iteration"]
    ratio = state["_proposal"]
    estimate = state["_estimate"]
    obs = Observation(
        ratio=ratio,
        loss=estimate.value,
        iteration=iteration,
        manifest_digest=estimate.best_manifest.digest,
        sample_losses=estimate.all_losses,
        sample_digests=estimate.all_digests,
    )

    state["gp"] = gp_append(state["gp"], obs)
    state["history"] = tuple(state["history"]) + (obs,)
    best = state["best"]
    if best is None or obs.loss < best.loss:
        state["best"] = BestMixture(loss=obs.loss, manifest=estimate.best_manifest, iteration=iteration)

    if state["run_dir"]:
        persist_iteration(state, obs)

    logger.info("[RECORD] iteration %d ratio=%s loss=%.6f best=%.6f",
                iteration, _fmt(ratio.weights), obs.loss, state["best"].loss)

    state["iteration"] = iteration + 1
    state["_proposal"] = None
    state["_estimate"] = None
    return state
