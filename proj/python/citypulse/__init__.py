# SPDX-License-Identifier: Apache-2.0
"""Urban mobility and sociability analytics.

Thin Python layer over the native ``_citypulse`` module. Results come back as
plain dicts decoded from the same JSON the HTTP API and CLI emit.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Optional, Tuple

from . import _citypulse as _native
from ._citypulse import (
    ConfigError,
    EmptyWindow,
    Error,
    InsufficientData,
    InvalidArgument,
    ParseError,
    derive_batch_id,
    pair_distance,
    pct_change,
)

__all__ = [
    "Api",
    "ConfigError",
    "EmptyWindow",
    "Error",
    "InsufficientData",
    "InvalidArgument",
    "ParseError",
    "analyze_frame",
    "comply",
    "derive_batch_id",
    "evaluate_batch",
    "ingest",
    "pair_distance",
    "pct_change",
    "summarize",
    "verify",
]


def analyze_frame(line: str, *, threshold_m: float = 1.8288, height_m: float = 1.70,
                  min_box_h: float = 8.0, confidence_cutoff: float = 0.5,
                  include_pairs: bool = False, tz: str = "UTC") -> dict:
    """Distancing analysis of one NDJSON detection frame."""
    return json.loads(_native.analyze_frame_json(
        line, threshold_m, height_m, min_box_h, confidence_cutoff, include_pairs, tz))


def summarize(lines: Iterable[str], *, threshold_m: float = 1.8288, height_m: float = 1.70,
              min_box_h: float = 8.0, confidence_cutoff: float = 0.5, tz: str = "UTC") -> dict:
    """Window summary over NDJSON frames; raises EmptyWindow for no frames."""
    return json.loads(_native.summarize_json(
        list(lines), threshold_m, height_m, min_box_h, confidence_cutoff, tz))


def evaluate_batch(config: str, feed: str, raw: str, now: str) -> dict:
    """Quality report for a raw batch without storing it."""
    return json.loads(_native.evaluate_batch_json(config, feed, raw, now))


class Api:
    """The read-only /v1 API served in-process against a configured warehouse."""

    def __init__(self, config: str) -> None:
        self._api = _native.Api(config)

    def get(self, path: str, params: Optional[Mapping[str, str]] = None) -> Tuple[int, dict]:
        status, body = self._api.get_json(path, dict(params or {}))
        return status, json.loads(body)


def _command(result: Tuple[int, str, str]) -> Tuple[int, object, str]:
    code, out, err = result
    try:
        parsed: object = json.loads(out) if out.strip() else None
    except json.JSONDecodeError:
        parsed = out
    return code, parsed, err


def ingest(config: str, feed: str, input: str, now: Optional[str] = None) -> Tuple[int, object, str]:
    """Runs ``citypulse ingest``; returns (exit code, report, stderr)."""
    return _command(_native.run_ingest(config, feed, input, now))


def comply(input: str, out_dir: str, *, threshold_m: float = 1.8288, height_m: float = 1.70,
           tz: str = "UTC") -> Tuple[int, object, str]:
    """Runs ``citypulse comply``; returns (exit code, summary, stderr)."""
    return _command(_native.run_comply(input, out_dir, threshold_m, height_m, tz))


def verify(warehouse: str) -> Tuple[int, object, str]:
    """Runs ``citypulse verify``; returns (exit code, report, stderr)."""
    return _command(_native.run_verify(warehouse))
