"""Run a callable on a thread with a large stack.

CPython 3.10 keeps one C frame per Python call, so the specializer's
default inline budget (10,000 calls, several Python frames each) would
overflow the default 8MB stack long before the configured limit fires.
"""

from __future__ import annotations

import sys
import threading

STACK_BYTES = 512 * 1024 * 1024
RECURSION_LIMIT = 400_000


def run_deep(fn, *args, **kwargs):
    result: list = [None]
    error: list = [None]

    def target():
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(RECURSION_LIMIT)
        try:
            result[0] = fn(*args, **kwargs)
        except BaseException as exc:  # re-raised on the calling thread
            error[0] = exc
        finally:
            sys.setrecursionlimit(old)

    old_size = threading.stack_size(STACK_BYTES)
    try:
        thread = threading.Thread(target=target, name="simpl-deep")
        thread.start()
    finally:
        threading.stack_size(old_size)
    thread.join()
    if error[0] is not None:
        raise error[0]
    return result[0]
