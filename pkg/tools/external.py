"""
External-process evaluator bridge.

The child reads one JSON request per line on stdin,
    {"manifest_path": str, "iteration": int, "sample_index": int}
and answers with one JSON line on stdout,
    {"loss": float}  or  {"error": str}.
One request is in flight per child; `parallel_children` > 1 keeps a pool.
"""

import json
import logging
import queue
import shlex
import subprocess
import tempfile
import threading
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from errors import ConfigInvalid, EvaluatorFailure, EvaluatorTimeout, ProtocolViolation
from graph.state import DomainDataset, MixtureManifest
from rundir import write_manifest
from tools.evaluators import Evaluator

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 6 * 3600.0


class _ChildProcess:
    """Line-oriented subprocess wrapper (stdin/stdout) with a reader thread for timeouts."""

    def __init__(self, command: List[str], cwd: Optional[Path] = None):
        self.command = command
        self.proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            bufsize=1,
            cwd=str(cwd) if cwd else None,
        )
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        logger.debug("Started evaluator child pid=%s: %s", self.proc.pid, " ".join(command))

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def request(self, payload: Dict[str, Any], timeout: float) -> Dict[str, Any]:
        try:
            self.proc.stdin.write(json.dumps(payload) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            raise EvaluatorFailure(f"evaluator child is gone (exit code {self.proc.poll()}): {e}") from e
        try:
            line = self._lines.get(timeout=timeout)
        except queue.Empty:
            self.kill()
            raise EvaluatorTimeout(f"no response from evaluator child within {timeout:.0f}s")
        if line is None:
            code = self.proc.wait()
            raise EvaluatorFailure(f"evaluator child exited with code {code} before answering")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as e:
            raise ProtocolViolation(f"evaluator child sent non-JSON line: {line[:200]!r}") from e
        if not isinstance(message, dict):
            raise ProtocolViolation(f"evaluator child sent {type(message).__name__}, expected an object")
        return message

    def alive(self) -> bool:
        return self.proc.poll() is None

    def kill(self) -> None:
        try:
            self.proc.kill()
        except Exception:
            pass

    def close(self) -> None:
        try:
            self.proc.stdin.close()
            self.proc.wait(timeout=5)
        except Exception:
            self.kill()


class ExternalProcessEvaluator(Evaluator):
    """Hands each mixture to a child process as a manifest file and reads back its loss."""

    def __init__(
        self,
        command: List[str],
        domains: Sequence[DomainDataset] = (),
        manifest_dir: Optional[Path] = None,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        parallel_children: int = 1,
        cwd: Optional[Path] = None,
    ):
        if not command:
            raise ConfigInvalid("external_process evaluator needs a command")
        if parallel_children < 1:
            raise ConfigInvalid("parallel_children must be >= 1")
        self.command = list(command)
        self.domains = list(domains)
        self.manifest_dir = Path(manifest_dir) if manifest_dir else Path(tempfile.mkdtemp(prefix="mixopt-"))
        self.timeout_s = float(timeout_s)
        self.parallel_children = parallel_children
        self.supports_concurrency = parallel_children > 1
        self.cwd = cwd
        self._idle: List[_ChildProcess] = []
        self._spawned = 0
        self._available = threading.Condition()

    @classmethod
    def from_params(cls, params: Dict[str, Any], domains: Sequence[DomainDataset],
                    manifest_dir: Optional[Path], base_dir: Optional[Path]) -> "ExternalProcessEvaluator":
        command = params.get("command")
        if isinstance(command, str):
            command = shlex.split(command)
        return cls(
            command=command or [],
            domains=domains,
            manifest_dir=manifest_dir,
            timeout_s=float(params.get("timeout_s", DEFAULT_TIMEOUT_S)),
            parallel_children=int(params.get("parallel_children", 1)),
            cwd=base_dir,
        )

    def _checkout(self) -> _ChildProcess:
        with self._available:
            while not self._idle and self._spawned >= self.parallel_children:
                self._available.wait()
            if self._idle:
                return self._idle.pop()
            self._spawned += 1
        try:
            return _ChildProcess(self.command, self.cwd)
        except (OSError, ValueError) as e:
            with self._available:
                self._spawned -= 1
                self._available.notify()
            raise EvaluatorFailure(f"cannot start evaluator child {self.command}: {e}") from e

    def _release(self, child: _ChildProcess, healthy: bool) -> None:
        if healthy and child.alive():
            with self._available:
                self._idle.append(child)
                self._available.notify()
            return
        child.close()
        with self._available:
            self._spawned -= 1
            self._available.notify()

    def __call__(self, manifest: MixtureManifest, iteration: int, sample_index: int, seed: int) -> float:
        path = write_manifest(self.manifest_dir, manifest, iteration, sample_index, self.domains)
        request = {"manifest_path": str(path.resolve()), "iteration": iteration, "sample_index": sample_index}
        try:
            child = self._checkout()
        except EvaluatorFailure as e:
            e.sample_index = sample_index
            raise
        healthy = False
        try:
            message = child.request(request, self.timeout_s)
            healthy = True
        except EvaluatorFailure as e:
            e.sample_index = sample_index
            raise
        finally:
            self._release(child, healthy)
        if "error" in message:
            raise EvaluatorFailure(f"evaluator child reported: {message['error']}", sample_index)
        if "loss" not in message:
            raise ProtocolViolation(f"response lacks 'loss': {message}", sample_index)
        try:
            return float(message["loss"])
        except (TypeError, ValueError) as e:
            raise ProtocolViolation(f"loss is not a number: {message['loss']!r}", sample_index) from e

    def close(self) -> None:
        with self._available:
            idle, self._idle = self._idle, []
            self._spawned -= len(idle)
        for child in idle:
            child.close()
