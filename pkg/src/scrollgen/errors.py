"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class ScrollError(Exception):
    """Base class for every error raised by scrollgen."""


class ConfigError(ScrollError, ValueError):
    pass


class DimensionError(ScrollError, ValueError):
    pass


class ParameterError(ScrollError, ValueError):
    pass


class PromptParseError(ScrollError, ValueError):
    """Malformed weighted prompt. ``offset`` is the UTF-8 byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class GenerationError(ScrollError, RuntimeError):
    """A failure inside the generation loop, tagged with step and window."""

    def __init__(self, message: str, step: int | None = None, window: int | None = None):
        where = []
        if step is not None:
            where.append(f"step {step}")
        if window is not None:
            where.append(f"window {window}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.step = step
        self.window = window


class TransportError(ScrollError, RuntimeError):
    pass


class PredictionError(ScrollError, RuntimeError):
    """Layout prediction gave up; ``raw_responses`` holds every reply received."""

    def __init__(self, message: str, raw_responses: list[str]):
        super().__init__(message)
        self.raw_responses = list(raw_responses)


class BackendError(ScrollError, RuntimeError):
    """The denoiser backend failed or returned something unusable."""
