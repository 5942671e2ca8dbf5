"""
Audit System: per-slide stage trail of a pipeline run

Every slide processed by a run is:
1. Traceable (mask -> superpixels -> graph -> embeddings -> coarsening -> features)
2. Replayable (each stage records its input and parameter digests)
3. Verifiable (a SHA-256 hash over the deterministic part of the trace)
"""

from enum import Enum
from typing import Dict, List, Optional, Any
from dataclasses import dataclass, asdict, field
import json
import hashlib
import logging
import threading

logger = logging.getLogger(__name__)


class Stage(Enum):
    """Per-slide pipeline stages"""
    MASK = "mask"
    SUPERPIXEL = "superpixel"
    GRAPH = "graph"
    EMBED = "embed"
    COARSEN = "coarsen"
    FEATURES = "features"


class StageStatus(Enum):
    SUCCESS = "success"
    FAILURE = "failure"


@dataclass
class StageEvent:
    """One stage execution for one slide"""
    event_id: str
    stage: Stage
    status: StageStatus
    cache_hit: bool
    input_digest: str
    params_digest: str
    duration_s: float
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["stage"] = self.stage.value
        data["status"] = self.status.value
        return data

    def deterministic_dict(self) -> Dict[str, Any]:
        """Everything except wall-clock duration and cache state"""
        data = self.to_dict()
        data.pop("duration_s")
        data.pop("cache_hit")
        return data


@dataclass
class SlideTrace:
    """All stage events of one slide"""
    slide_id: str
    events: List[StageEvent] = field(default_factory=list)
    status: str = "in_progress"  # completed, failed
    error: Optional[str] = None

    def add_event(self, event: StageEvent):
        self.events.append(event)

    def compute_hash(self) -> str:
        """Hash of the trace for integrity verification"""
        trace_data = {
            "slide_id": self.slide_id,
            "status": self.status,
            "events": [e.deterministic_dict() for e in self.events],
        }
        trace_str = json.dumps(trace_data, sort_keys=True, default=str)
        return hashlib.sha256(trace_str.encode()).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "slide_id": self.slide_id,
            "status": self.status,
            "error": self.error,
            "events": [e.to_dict() for e in self.events],
            "hash": self.compute_hash(),
        }


class AuditSystem:
    """
    Collects slide traces during a run.

    Key capabilities:
    1. Stage-level trail per slide
    2. Cache hit/miss accounting
    3. JSON-lines export for the run directory
    """

    def __init__(self):
        self.traces: Dict[str, SlideTrace] = {}
        # shared by pool threads; log_event may re-enter create_trace
        self._lock = threading.RLock()

    def create_trace(self, slide_id: str) -> SlideTrace:
        trace = SlideTrace(slide_id=slide_id)
        with self._lock:
            self.traces[slide_id] = trace
        logger.debug(f"Trace created: {slide_id}")
        return trace

    def log_event(
        self,
        slide_id: str,
        stage: Stage,
        status: StageStatus,
        cache_hit: bool,
        input_digest: str,
        params_digest: str,
        duration_s: float,
        details: Optional[Dict[str, Any]] = None,
    ) -> StageEvent:
        """
        Record a stage execution.

        Args:
            slide_id: Slide the stage ran for
            stage: Which stage
            status: Outcome
            cache_hit: Whether the result came from the stage cache
            input_digest: Digest of the stage inputs
            params_digest: Digest of the stage parameters
            duration_s: Wall-clock seconds
            details: Stage-specific values (node counts, merges, ...)

        Returns:
            Created StageEvent
        """
        with self._lock:
            trace = self.traces.get(slide_id)
            if trace is None:
                logger.error(f"Trace not found: {slide_id}")
                trace = self.create_trace(slide_id)
            event = StageEvent(
                event_id=f"{slide_id}_{len(trace.events)}",
                stage=stage,
                status=status,
                cache_hit=cache_hit,
                input_digest=input_digest,
                params_digest=params_digest,
                duration_s=duration_s,
                details=details or {},
            )
            trace.add_event(event)
        logger.debug(
            f"Stage {stage.value} | Slide: {slide_id} | Status: {status.value} | "
            f"{'cache hit' if cache_hit else 'computed'} in {duration_s:.2f}s"
        )
        return event

    def complete_trace(self, slide_id: str, status: str, error: Optional[str] = None) -> Optional[SlideTrace]:
        with self._lock:
            trace = self.traces.get(slide_id)
            if trace is None:
                logger.error(f"Trace not found: {slide_id}")
                return None
            trace.status = status
            trace.error = error
        logger.info(
            f"Slide {slide_id} {status} | Stages: {len(trace.events)} | Hash: {trace.compute_hash()[:16]}"
        )
        return trace

    def cache_report(self) -> Dict[str, Dict[str, int]]:
        """Hit/miss counts per stage"""
        report: Dict[str, Dict[str, int]] = {}
        with self._lock:
            traces = list(self.traces.values())
        for trace in traces:
            for event in trace.events:
                counts = report.setdefault(event.stage.value, {"hits": 0, "misses": 0})
                counts["hits" if event.cache_hit else "misses"] += 1
        return report

    def write_jsonl(self, path: str):
        with self._lock:
            traces = [self.traces[slide_id] for slide_id in sorted(self.traces)]
        with open(path, "w", encoding="utf-8") as handle:
            for trace in traces:
                handle.write(json.dumps(trace.to_dict(), sort_keys=True, default=str) + "\n")
