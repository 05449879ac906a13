"""Python bindings for the labguard safety kernel and lab harness."""

import json
import os

from . import _core
from ._core import LabguardError, ScenarioInvalid

__all__ = ["LabguardError", "RunResult", "SafetyFilter", "ScenarioInvalid", "metrics_from_events", "run",
           "validate", "verify_audit"]


def _source(scenario):
    """A scenario given as a dict is sent as JSON text, anything else is a path."""
    if isinstance(scenario, dict):
        return json.dumps(scenario), False
    return os.fspath(scenario), True


class RunResult:
    def __init__(self, summary, events_jsonl, audit_bytes):
        self.status = summary["status"]
        self.metrics = summary["metrics"]
        self.audit_report = summary["audit"]
        self.exit_code = summary["exit_code"]
        self.events_jsonl = events_jsonl
        self.audit_bytes = audit_bytes

    @property
    def events(self):
        return [json.loads(line) for line in self.events_jsonl.splitlines() if line]

    def __repr__(self):
        return f"RunResult(status={self.status!r}, exit_code={self.exit_code})"


def run(scenario, seed=None):
    summary, events, audit = _core.run(*_source(scenario), seed)
    return RunResult(json.loads(summary), events, audit)


def validate(scenario):
    """Parses and assembles a scenario; returns its name or raises ScenarioInvalid."""
    return _core.validate(*_source(scenario))


def metrics_from_events(events_jsonl):
    return json.loads(_core.metrics_from_events(events_jsonl))


def verify_audit(log):
    """Accepts the raw bytes of a log or a path to one."""
    if isinstance(log, (bytes, bytearray)):
        return json.loads(_core.verify_audit_bytes(bytes(log)))
    return json.loads(_core.verify_audit_file(os.fspath(log)))


class SafetyFilter:
    def __init__(self, scenario):
        self._f = _core._SafetyFilter(*_source(scenario))

    @property
    def state_names(self):
        return self._f.state_names

    @property
    def input_names(self):
        return self._f.input_names

    @property
    def initial_state(self):
        return self._f.initial_state

    def filter(self, x, u_ai):
        return json.loads(self._f.filter([float(v) for v in x], [float(v) for v in u_ai]))

    def margin(self, x):
        return json.loads(self._f.margin([float(v) for v in x]))
