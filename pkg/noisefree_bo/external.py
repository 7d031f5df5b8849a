"""
Objective backed by an external process speaking a line protocol.

Each request is one point written as whitespace-separated decimals followed by
a newline; the process answers with one decimal per line.
"""
import logging
import shlex
import subprocess
import threading
from typing import List, Optional, Union

import numpy as np

from .errors import ExternalObjectiveError
from .objectives import Objective, ObjectiveId, SearchDomain

logger = logging.getLogger(__name__)


class ExternalProcessObjective(Objective):
    """
    Black-box objective evaluated by a long-running child process.

    Requests are serialized with a lock, so one handle may be shared by threads.
    The process is started lazily on the first evaluation.

    Args:
        command (str or list): Command line of the process
        domain (SearchDomain): Search domain
        f_star (float, optional): Known optimum, if any
    """
    id = ObjectiveId.EXTERNAL_PROCESS

    def __init__(self, command: Union[str, List[str]], domain: SearchDomain, f_star: Optional[float] = None):
        super().__init__(domain, f_star)
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.command:
            raise ValueError("External objective command must not be empty")
        self._process: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()
        self.calls = 0

    def start(self):
        if self._process is None:
            logger.info("Starting external objective: %s", ' '.join(self.command))
            try:
                self._process = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    bufsize=1,
                )
            except OSError as e:
                raise ExternalObjectiveError(f"Cannot start {self.command[0]}: {e}") from e

    def close(self):
        """Close stdin and wait for the process to exit."""
        with self._lock:
            if self._process is None:
                return
            try:
                self._process.stdin.close()
                self._process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                logger.warning("External objective did not exit, killing it")
                self._process.kill()
            finally:
                self._process = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _request(self, x: np.ndarray) -> float:
        if self._process is not None and self._process.poll() is not None:
            raise ExternalObjectiveError(f"External objective exited with code {self._process.returncode}")
        self.start()
        try:
            self._process.stdin.write(' '.join(repr(float(v)) for v in x) + '\n')
            self._process.stdin.flush()
            line = self._process.stdout.readline()
        except (BrokenPipeError, OSError) as e:
            raise ExternalObjectiveError(f"Lost connection to the external objective: {e}") from e
        if not line:
            code = self._process.poll()
            raise ExternalObjectiveError(f"External objective closed its output (exit code {code})")
        try:
            value = float(line.strip())
        except ValueError as e:
            raise ExternalObjectiveError(f"Malformed response {line.strip()!r}") from e
        if not np.isfinite(value):
            raise ExternalObjectiveError(f"Non-finite response {line.strip()!r}")
        self.calls += 1
        return value

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        with self._lock:
            return np.array([self._request(x) for x in X])
