"""Structured event logging, replay, and run metrics.

A trace is an append-only list of JSON-serializable event records; the file
form is one JSON object per line.  Every summary number is recomputed from
the events alone, so serialize -> replay -> summarize is a fixed point.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, ParameterError

KINDS = ("window", "dequeue", "enqueue", "eval", "search", "correct")
SCHEMA_VERSION = 1


@dataclass
class GenerationTrace:
    events: list[dict] = field(default_factory=list)
    _last_iteration: int = field(default=-1, repr=False)

    def record(self, kind: str, iteration: int, **fields_) -> None:
        if kind not in KINDS:
            raise ParameterError(f"unknown event kind {kind!r}")
        if iteration < self._last_iteration:
            raise ParameterError(
                f"iteration stamps must be monotone ({iteration} after {self._last_iteration})"
            )
        self._last_iteration = iteration
        self.events.append({"kind": kind, "v": SCHEMA_VERSION, "iteration": iteration, **fields_})

    def __len__(self) -> int:
        return len(self.events)

    # -- counters (always recomputed; there is no shadow state to drift) ----

    @property
    def n_all(self) -> int:
        return sum(1 for e in self.events if e["kind"] == "eval")

    @property
    def n_eval(self) -> int:
        return sum(1 for e in self.events if e["kind"] == "search")

    @property
    def n_corr(self) -> int:
        return sum(1 for e in self.events if e["kind"] == "correct")

    # -- (de)serialization --------------------------------------------------

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_jsonl(cls, text: str) -> "GenerationTrace":
        events = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                e = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"trace line {lineno}: {exc}") from exc
            if not isinstance(e, dict) or "kind" not in e:
                raise FormatError(f"trace line {lineno}: missing 'kind'")
            if e["kind"] not in KINDS:
                raise FormatError(f"trace line {lineno}: unknown kind {e['kind']!r}")
            events.append(e)
        trace = cls(events=events)
        if events:
            trace._last_iteration = max(e.get("iteration", -1) for e in events)
        return trace

    @classmethod
    def load(cls, path: str | Path) -> "GenerationTrace":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


def summarize(trace: GenerationTrace) -> dict:
    """Recount every metric from the raw events."""
    windows = [e for e in trace.events if e["kind"] == "window"]
    phases = sorted({e["phase"] for e in windows})
    max_span = {p: max(e["span"] for e in windows if e["phase"] == p) for p in phases}
    calls = {p: sum(1 for e in windows if e["phase"] == p) for p in phases}
    peak_queue = {}
    for e in trace.events:
        p, q = e.get("phase"), e.get("queue_len")
        if p is not None and q is not None:
            peak_queue[p] = max(peak_queue.get(p, 0), q)
    search_passes = {e["pass_id"] for e in windows if e["phase"] == "search"}
    max_width = max((e["width"] for e in windows), default=0)

    n_all, n_eval, n_corr = trace.n_all, trace.n_eval, trace.n_corr
    summary = {
        "max_span": max_span,
        "denoiser_calls": calls,
        "total_denoiser_calls": len(windows),
        "max_window_width": max_width,
        "peak_queue_length": peak_queue,
        "n_all": n_all,
        "n_eval": n_eval,
        "n_corr": n_corr,
        "R_corr": (n_corr / n_all) if n_all else None,
        "R_succ": (n_corr / n_eval) if n_eval else None,
        "reflection_extra_passes": len(search_passes),
        "dequeues": sum(1 for e in trace.events if e["kind"] == "dequeue"),
        "enqueues": sum(1 for e in trace.events if e["kind"] == "enqueue"),
    }
    return summary


def save_metrics(path: str | Path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
