from datetime import datetime
from typing import Optional

SAVED_AT_FORMAT = "%Y-%m-%d %H:%M:%S"
RUN_STAMP_FORMAT = "%Y%m%d_%H%M%S"


def get_current_time() -> datetime:
    return datetime.now()


def get_elapsed_time(start_time: Optional[datetime], end_time: Optional[datetime] = None) -> float:
    """
    Returns the seconds between `start_time` and now (or `end_time`), rounded to 0.01.

    Raises:
        ValueError: If start_time is None.
    """
    if start_time is None:
        raise ValueError("start_time must not be None.")
    return round(((end_time or datetime.now()) - start_time).total_seconds(), 2)


def format_timestamp(ts: datetime) -> str:
    """Checkpoint metadata stamp, e.g. "2025-05-12 21:34:00"."""
    return ts.strftime(SAVED_AT_FORMAT)


def run_stamp(ts: datetime) -> str:
    """Filesystem-safe stamp for default run directory names, e.g. "20250512_213400"."""
    return ts.strftime(RUN_STAMP_FORMAT)


def format_duration(seconds: float) -> str:
    """Renders a duration as H:MM:SS."""
    minutes, secs = divmod(int(round(seconds)), 60)
    hours, minutes = divmod(minutes, 60)
    return f"{hours}:{minutes:02d}:{secs:02d}"
