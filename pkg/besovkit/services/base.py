import logging
import os
import queue
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Optional


@dataclass
class ServiceEvent:
    event_type: str
    payload: Any


@dataclass
class MemberResult:
    index: int
    value: Any = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


class ServiceBase(ABC):
    def __init__(self, name: str, workers: int = 1):
        self.name = name
        self.workers = max(1, int(workers))
        self._events: queue.Queue[ServiceEvent] = queue.Queue()
        self._worker_threads: list[threading.Thread] = []
        self._running = threading.Event()
        self._stop_event = threading.Event()
        self.logger = logging.getLogger(f"service.{name}")

    def dispatch(self, event_type: str, payload: Any):
        if not self._running.is_set():
            self.logger.warning(f"Service {self.name} is not running, ignoring event {event_type}")
            return
        self._events.put(ServiceEvent(event_type, payload))
        self.logger.debug(f"Dispatched event {event_type}")

    def start(self):
        if self._running.is_set():
            self.logger.warning(f"Service {self.name} is already running")
            return

        self._running.set()
        self._stop_event.clear()
        self._worker_threads = [
            threading.Thread(target=self._event_loop, daemon=True) for _ in range(self.workers)
        ]
        for thread in self._worker_threads:
            thread.start()
        self.logger.info(f"Service {self.name} started with {self.workers} workers")

    def stop(self, timeout: float = 5.0):
        if not self._running.is_set():
            self.logger.warning(f"Service {self.name} is not running")
            return

        self.logger.info(f"Stopping service {self.name}")
        self._stop_event.set()
        self._running.clear()

        for thread in self._worker_threads:
            if thread.is_alive():
                thread.join(timeout=timeout)
                if thread.is_alive():
                    self.logger.warning(f"Service {self.name} did not stop within timeout")
        self._worker_threads = []

    def _event_loop(self):
        while self._running.is_set():
            try:
                event = self._events.get(timeout=0.1)
            except queue.Empty:
                continue

            try:
                self.handle_event(event.event_type, event.payload)
            except Exception as e:
                self.logger.error(f"Error handling event {event.event_type}: {e}")
            finally:
                self._events.task_done()

            if self._stop_event.is_set():
                break

    @abstractmethod
    def handle_event(self, event_type: str, payload: Any):
        pass

    @property
    def is_running(self) -> bool:
        return self._running.is_set()

    @property
    def has_pending_event(self) -> bool:
        return self._events.unfinished_tasks > 0

    def wait_until_idle(self):
        self._events.join()


class EnsembleService(ServiceBase):
    """
    Evaluates one function over many ensemble members on worker threads.

    Results come back in input order whatever the completion order; a member
    that raises is recorded with its error message instead of aborting the run.
    """

    def __init__(self, workers: int = 1):
        super().__init__("ensemble", workers)
        self._results: dict[int, MemberResult] = {}
        self._results_lock = threading.Lock()

    def handle_event(self, event_type: str, payload: Any):
        if event_type != "evaluate":
            self.logger.warning(f"Unknown event type: {event_type}")
            return
        index, fn, item = payload
        try:
            result = MemberResult(index, value=fn(item))
        except Exception as e:
            self.logger.error(f"Ensemble member {index} failed: {e}")
            result = MemberResult(index, error=f"{type(e).__name__}: {e}")
        with self._results_lock:
            self._results[index] = result

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> list[MemberResult]:
        if not self.is_running:
            raise RuntimeError(f"Service {self.name} is not running, call start() before map()")
        items = list(items)
        with self._results_lock:
            self._results = {}
        for index, item in enumerate(items):
            self.dispatch("evaluate", (index, fn, item))
        self.wait_until_idle()
        with self._results_lock:
            return [self._results[index] for index in range(len(items))]


def worker_count() -> int:
    try:
        return max(1, int(os.getenv("BESOVKIT_WORKERS", "1")))
    except ValueError:
        logging.getLogger(__name__).warning("BESOVKIT_WORKERS is not an integer, using 1 worker")
        return 1


def run_ensemble(
    fn: Callable[[Any], Any], items: Iterable[Any], workers: Optional[int] = None
) -> list[MemberResult]:
    """Evaluate fn on every item, threaded when more than one worker is configured."""
    if workers is None:
        workers = worker_count()
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        logger = logging.getLogger("service.ensemble")
        results = []
        for index, item in enumerate(items):
            try:
                results.append(MemberResult(index, value=fn(item)))
            except Exception as e:
                logger.error(f"Ensemble member {index} failed: {e}")
                results.append(MemberResult(index, error=f"{type(e).__name__}: {e}"))
        return results

    service = EnsembleService(workers)
    service.start()
    try:
        return service.map(fn, items)
    finally:
        service.stop()
