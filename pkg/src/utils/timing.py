"""Simple timing utilities."""

import time


def now_s() -> float:
    return time.perf_counter()


class Stopwatch:
    """Context manager measuring wall time of a block, in seconds."""

    def __enter__(self):
        self.start = now_s()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.end = now_s()
        self.elapsed_s = self.end - self.start
