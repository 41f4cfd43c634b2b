from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
import logging
import os
from pathlib import Path
import tempfile
from typing import Callable, Iterable, List, TypeVar, Union

from rich.console import Console
from rich.logging import RichHandler

T = TypeVar("T")
R = TypeVar("R")

#: Environment variable capping the number of worker threads; 0 or unset
#: means "use the hardware default"
THREADS_ENV = "DPSIM_THREADS"

logger = logging.getLogger(__name__)


def setup_logging(verbosity: int = 0) -> None:
    """
    Routes dpsim's logs to stderr through rich, leaving stdout free for
    command results

    :param verbosity: 0 for warnings only, 1 for info, 2 or more for debug
    """
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG

    handler = RichHandler(
        console=Console(stderr=True),
        show_path=False,
        rich_tracebacks=True,
    )
    root = logging.getLogger("dpsim")
    root.handlers = [handler]
    root.setLevel(level)
    root.propagate = False


def worker_count() -> int:
    """
    Returns how many worker threads dpsim may use, honoring DPSIM_THREADS
    """
    raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
    try:
        requested = int(raw)
    except ValueError:
        raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}")

    if requested < 0:
        raise ValueError(f"{THREADS_ENV} must be >= 0, got {requested}")
    if requested == 0:
        return os.cpu_count() or 1
    return requested


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
    """
    Applies fn to every item on a thread pool and returns the results in input
    order, so the outcome never depends on scheduling
    """
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(i) for i in items]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def atomic_write(path: Union[str, Path], data: Union[bytes, str]) -> None:
    """
    Writes data to path without ever leaving a partial file behind; the data
    lands in a temporary file next to the target and is then renamed over it
    """
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")

    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

    logger.debug("wrote %d bytes to %s", len(data), path)
