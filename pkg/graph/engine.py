"""
Engine: the BO loop over mixing ratios as a LangGraph workflow.

Graph flow (one pass per iteration):
1. check_budget      -> finish once `iterations` steps are done
2. refit_surrogate   -> ML lengthscale once history >= 2
3. propose_ratio     -> LCB acquisition on the simplex
4. estimate_mixture  -> k sampled mixtures, keep the smallest loss
5. record_observation -> history, GP, best mixture, run directory
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from langgraph.graph import END, StateGraph
from pydantic import BaseModel, ConfigDict

from errors import BudgetExhausted, ConfigInvalid, EvaluatorFailure, MixOptError, UnknownOptimum
from graph.nodes import (
    check_budget,
    estimate_mixture,
    propose_mixing_ratio,
    record_observation,
    refit_surrogate,
    should_continue,
)
from graph.state import (
    BestMixture,
    DomainDataset,
    EstimatorKind,
    MixingRatio,
    Observation,
    RunConfig,
    RunState,
    ratio_of,
)
from rundir import (
    GP_CHECKPOINT_FILE,
    RESULT_FILE,
    load_manifest,
    manifest_path,
    manifest_payload,
    read_observations,
    reset_run_dir,
    write_json,
)
from surrogate import load_gp_checkpoint
from surrogate.gp import KernelParams, empty_state, state_from_history
from tools.estimator import EstimateResult, estimate_inner
from tools.evaluators import Evaluator, EvaluatorHandle, TableLookupEvaluator, build_evaluator
from tools.mixture import build_manifest, weights_for_domains  # noqa: F401  (build_manifest is part of the engine API)
from tools.seeding import ESTIMATE, derive_seed

logger = logging.getLogger(__name__)

EvaluatorLike = Union[Evaluator, EvaluatorHandle]


@lru_cache(maxsize=2)
def build_graph(loop: bool = True):
    """
    Constructs the LangGraph workflow.

    With `loop` the graph runs until the budget is spent; without it the graph
    performs exactly one iteration (used by `step`).

    Returns:
        Compiled StateGraph ready for execution
    """
    workflow = StateGraph(RunState)

    workflow.add_node("refit_surrogate", refit_surrogate)
    workflow.add_node("propose_ratio", propose_mixing_ratio)
    workflow.add_node("estimate_mixture", estimate_mixture)
    workflow.add_node("record_observation", record_observation)

    workflow.add_edge("refit_surrogate", "propose_ratio")
    workflow.add_edge("propose_ratio", "estimate_mixture")
    workflow.add_edge("estimate_mixture", "record_observation")

    if loop:
        workflow.add_node("check_budget", check_budget)
        workflow.set_entry_point("check_budget")
        workflow.add_conditional_edges(
            "check_budget",
            should_continue,
            {
                "continue": "refit_surrogate",
                "finish": END,
            },
        )
        workflow.add_edge("record_observation", "check_budget")
    else:
        workflow.set_entry_point("refit_surrogate")
        workflow.add_edge("record_observation", END)

    return workflow.compile()


def _recursion_limit(iterations: int) -> int:
    return 5 * (iterations + 1) + 5


def _resolve_evaluator(evaluator: EvaluatorLike, domains: Sequence[DomainDataset],
                       run_dir: Optional[Path]) -> Evaluator:
    if isinstance(evaluator, EvaluatorHandle):
        return build_evaluator(evaluator, domains, manifest_dir=run_dir)
    return evaluator


def _check_domains(config: RunConfig, domains: Sequence[DomainDataset]) -> None:
    if len(domains) != config.n_domains:
        raise ConfigInvalid(f"config declares {config.n_domains} domains, {len(domains)} given")
    names = [d.name for d in domains]
    if len(set(names)) != len(names):
        raise ConfigInvalid(f"domain names must be unique, got {names}")


def _new_state(config: RunConfig, domains: Sequence[DomainDataset], evaluator: Evaluator,
               run_dir: Optional[Path]) -> RunState:
    return {
        "config": config,
        "domains": list(domains),
        "evaluator": evaluator,
        "gp": empty_state(config.n_domains, zeta=config.zeta, standardize=True,
                          kernel=KernelParams(lengthscale=config.default_lengthscale)),
        "history": (),
        "best": None,
        "rng_root_seed": config.seed,
        "iteration": 0,
        "run_dir": str(run_dir) if run_dir is not None else None,
        "_proposal": None,
        "_estimate": None,
        "_weights": weights_for_domains(domains, config.estimator_kind, config),
    }


def init_run(config: RunConfig, domains: Sequence[DomainDataset], evaluator: EvaluatorLike,
             run_dir: Optional[Path] = None) -> RunState:
    """
    Evaluates the uniform ratio once to form the initial observation.

    Args:
        config: Run configuration
        domains: Training domains, in ratio order
        evaluator: Evaluator or a handle describing one
        run_dir: Run directory; previous run files in it are cleared

    Returns:
        RunState with one observation and a GP seeded with it
    """
    _check_domains(config, domains)
    if run_dir is not None:
        reset_run_dir(run_dir)
    evaluator = _resolve_evaluator(evaluator, domains, run_dir)
    state = _new_state(config, domains, evaluator, run_dir)
    state["_proposal"] = MixingRatio.uniform(config.n_domains)
    logger.info("[INIT] %d domains, M=%d, k=%d, T=%d, estimator=%s, seed=%d",
                config.n_domains, config.mixture_size, config.sampling_size,
                config.iterations, config.estimator_kind.value, config.seed)
    state = estimate_mixture(state)
    return record_observation(state)


def step(state: RunState, evaluator: Optional[EvaluatorLike] = None) -> RunState:
    """
    Runs one BO iteration.

    The input state is never modified; on failure the caller still holds the
    state from before the step.

    Raises:
        BudgetExhausted: when `config.iterations` steps have already run
    """
    config = state["config"]
    if state["iteration"] > config.iterations:
        raise BudgetExhausted(f"all {config.iterations} iterations already ran")
    working = dict(state)
    if evaluator is not None:
        working["evaluator"] = _resolve_evaluator(evaluator, state["domains"], state["run_dir"])
    result = build_graph(loop=False).invoke(working)
    return {**working, **result}


def write_result(state: RunState) -> Path:
    """Writes result.json: best mixture, its ratio, and the last proposed ratio."""
    config = state["config"]
    best = state["best"]
    sign = -1.0 if config.maximize else 1.0
    payload: Dict[str, Any] = {
        "best_loss": best.loss,
        "best_feedback": sign * best.loss,
        "best_iteration": best.iteration,
        "best_ratio": list(best.manifest.target_ratio.weights),
        "best_realised_ratio": list(ratio_of(best.manifest).weights),
        "best_manifest": manifest_payload(best.manifest),
        "final_ratio": list(state["history"][-1].ratio.weights),
        "iterations": len(state["history"]) - 1,
        "maximize": config.maximize,
    }
    return write_json(state["run_dir"], RESULT_FILE, payload)


def run_to_completion(config: RunConfig, domains: Sequence[DomainDataset], evaluator: EvaluatorLike,
                      run_dir: Optional[Path] = None) -> RunState:
    """
    Initial observation plus `config.iterations` BO steps.

    Observations are appended to the run directory as they happen, so a run
    that aborts keeps its partial log on disk.

    Returns:
        Final RunState; `best` is the best mixture over the whole history
    """
    state = init_run(config, domains, evaluator, run_dir)
    try:
        state = {**state, **build_graph(loop=True).invoke(
            state, {"recursion_limit": _recursion_limit(config.iterations)}
        )}
    except MixOptError:
        logger.error("[ENGINE] run aborted at iteration %d; partial log kept", state["iteration"])
        raise
    if run_dir is not None:
        write_result(state)
    best = state["best"]
    logger.info("[ENGINE] done: best loss %.6f at iteration %d", best.loss, best.iteration)
    return state


def resume_run(config: RunConfig, domains: Sequence[DomainDataset], evaluator: EvaluatorLike,
               run_dir: Path) -> RunState:
    """
    Rebuilds a RunState from a run directory so the loop can continue.

    The surrogate comes from the checkpoint (or the history when there is
    none), the best mixture from its recorded manifest.
    """
    _check_domains(config, domains)
    run_dir = Path(run_dir)
    history = tuple(read_observations(run_dir))
    if not history:
        raise ConfigInvalid(f"run directory {run_dir} holds no observations")
    evaluator = _resolve_evaluator(evaluator, domains, run_dir)
    state = _new_state(config, domains, evaluator, run_dir)
    gp = load_gp_checkpoint(run_dir / GP_CHECKPOINT_FILE)
    if gp is None:
        gp = state_from_history(config.n_domains, history,
                                KernelParams(lengthscale=config.default_lengthscale), config.zeta)
    best_obs = history[0]
    for obs in history[1:]:
        if obs.loss < best_obs.loss:
            best_obs = obs
    sample_index = list(best_obs.sample_digests).index(best_obs.manifest_digest) if best_obs.sample_digests else 0
    manifest = load_manifest(manifest_path(run_dir, best_obs.iteration, sample_index))
    state.update(
        gp=gp,
        history=history,
        best=BestMixture(loss=best_obs.loss, manifest=manifest, iteration=best_obs.iteration),
        iteration=history[-1].iteration + 1,
    )
    logger.info("[RESUME] %d observations restored from %s", len(history), run_dir)
    return state


def run_uniform_baseline(config: RunConfig, domains: Sequence[DomainDataset],
                         evaluator: EvaluatorLike) -> EstimateResult:
    """
    Static baseline: the uniform ratio with uniform-random selection, evaluated once.

    Uses the same estimate seed as the initial observation of a run with the
    same root seed, so baseline and run see paired noise.
    """
    _check_domains(config, domains)
    evaluator = _resolve_evaluator(evaluator, domains, None)
    baseline = config.model_copy(update={"estimator_kind": EstimatorKind.UNIFORM_RANDOM, "sampling_size": 1})
    return estimate_inner(
        MixingRatio.uniform(config.n_domains),
        domains,
        baseline,
        evaluator,
        derive_seed(config.seed, ESTIMATE, 0),
        iteration=0,
    )


def optimum_for(config: RunConfig, evaluator: Evaluator) -> Optional[float]:
    """True optimum in the internal minimization convention, when the evaluator knows it."""
    if evaluator.f_star is None:
        return None
    if config.maximize != evaluator.f_star_is_maximum:
        direction = "maximizes" if config.maximize else "minimizes"
        raise UnknownOptimum(f"the run {direction} feedback but the evaluator knows its optimum "
                             f"in the other direction")
    return -evaluator.f_star if config.maximize else evaluator.f_star


class ReplayReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    identical: bool
    recorded: int
    replayed: int
    first_mismatch: Optional[int] = None
    message: str = ""


def recorded_loss_table(config: RunConfig, history: Sequence[Observation]) -> TableLookupEvaluator:
    """Table evaluator serving every recorded inner loss at its (digest, iteration, sample)."""
    sign = -1.0 if config.maximize else 1.0
    by_digest: Dict[str, float] = {}
    by_position: Dict[Tuple[str, int, int], float] = {}
    for obs in history:
        for sample_index, (digest, loss) in enumerate(zip(obs.sample_digests, obs.sample_losses)):
            by_digest.setdefault(digest, sign * loss)
            by_position[(digest, obs.iteration, sample_index)] = sign * loss
    return TableLookupEvaluator(by_digest, by_position)


def _first_difference(a: Sequence[Observation], b: Sequence[Observation]) -> Optional[int]:
    for index, (left, right) in enumerate(zip(a, b)):
        if left != right:
            return index
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def replay_history(config: RunConfig, domains: Sequence[DomainDataset],
                   recorded: Sequence[Observation]) -> ReplayReport:
    """
    Re-executes a run from its config and seed against the recorded losses.

    Returns:
        ReplayReport saying whether the replayed history is identical
    """
    recorded = list(recorded)
    table = recorded_loss_table(config, recorded)
    try:
        state = run_to_completion(config, domains, table, run_dir=None)
    except EvaluatorFailure as e:
        logger.warning("[REPLAY] diverged: %s", e)
        return ReplayReport(identical=False, recorded=len(recorded), replayed=0, message=str(e))
    replayed: List[Observation] = list(state["history"])
    mismatch = _first_difference(recorded, replayed)
    if mismatch is None:
        logger.info("[REPLAY] %d observations reproduced exactly", len(replayed))
        return ReplayReport(identical=True, recorded=len(recorded), replayed=len(replayed))
    logger.warning("[REPLAY] first mismatch at observation %d", mismatch)
    return ReplayReport(identical=False, recorded=len(recorded), replayed=len(replayed),
                        first_mismatch=mismatch, message=f"histories differ at observation {mismatch}")
