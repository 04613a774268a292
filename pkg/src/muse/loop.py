"""Closed-loop controller shared by every pipeline phase.

One iteration is plan -> execute -> verify -> revise. The loop accepts an
attempt when the critic reports no severe violation and the score clears
the phase threshold; otherwise it revises the control bundle and spends
another unit of budget. On exhaustion the highest-scoring attempt wins
(ties go to the earliest), so a run degrades instead of halting.

Revisions are bounded: each violation kind may only touch a fixed set of
control fields, checked field-by-field on every revision when validation
is enabled. That check is what keeps a revision targeted at the evidence
instead of quietly replanning the whole attempt.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, fields
from typing import Any, Callable

from . import postproduction, production
from .errors import (
    BackendUnavailable,
    JudgeOutputUnparseable,
    NoScorableAttempt,
    UnknownViolationKind,
)
from .model import (
    ControlBundle,
    Phase,
    Severity,
    ViolationKind,
    ViolationSignal,
    to_jsonable,
)
from .store import derive_seed

log = logging.getLogger(__name__)

DEFAULT_ITERATION_BUDGET = 5
DEFAULT_ACCEPTANCE_THRESHOLD = 7.0


@dataclass
class LoopConfig:
    iteration_budget: int = DEFAULT_ITERATION_BUDGET
    planner_temperature: float = 0.7
    critic_temperature: float = 0.2
    acceptance_thresholds: dict[str, float] = field(
        default_factory=lambda: {"default": DEFAULT_ACCEPTANCE_THRESHOLD})
    validation: bool = True

    def threshold_for(self, phase: Phase | str) -> float:
        key = phase.value if isinstance(phase, Phase) else str(phase)
        if key in self.acceptance_thresholds:
            return self.acceptance_thresholds[key]
        return self.acceptance_thresholds.get("default", DEFAULT_ACCEPTANCE_THRESHOLD)


@dataclass
class AttemptRecord:
    attempt: int
    control: ControlBundle
    artifact: Any = None
    violations: list[ViolationSignal] = field(default_factory=list)
    score: float | None = None
    error: str | None = None


@dataclass
class LoopTrace:
    phase: str
    segment_index: int
    status: str = "accepted"  # accepted | budget_exhausted_best_of
    accepted_attempt: int | None = None
    records: list[AttemptRecord] = field(default_factory=list)


@dataclass
class PhaseHooks:
    """Callbacks binding the generic loop to one phase's machinery.

    plan(attempt) builds a fresh control bundle; execute runs the backend;
    verify returns (violations, score). revise is optional: when absent,
    the kind-dispatch table below picks the revision strategy.
    """

    plan: Callable[[int], ControlBundle]
    execute: Callable[[ControlBundle], Any]
    verify: Callable[[ControlBundle, Any], tuple[list[ViolationSignal], float]]
    revise: Callable[[ControlBundle, list[ViolationSignal]], ControlBundle] | None = None


_CONTROL_FIELDS = tuple(f.name for f in fields(ControlBundle))

# Which control fields a revision may touch, per violation kind. The
# attempt counter is always fair game; everything else must stay put.
ALLOWED_REVISION_FIELDS: dict[ViolationKind, frozenset[str]] = {
    ViolationKind.STICKER_EFFECT: frozenset({"params", "positive_prompts"}),
    ViolationKind.SPATIAL_CONFLICT: frozenset({"layout", "params"}),
    ViolationKind.LAYOUT_VIOLATION: frozenset({"layout", "params"}),
    ViolationKind.IDENTITY_MISMATCH: frozenset({"positive_prompts", "params"}),
    ViolationKind.EMOTION_MISMATCH: frozenset({"positive_prompts", "params"}),
    ViolationKind.TEMPORAL_LEAKAGE: frozenset({"temporal", "params"}),
    ViolationKind.BOUNDARY_VIOLATION: frozenset({"temporal"}),
    ViolationKind.FRAMING_VIOLATION: frozenset({"temporal"}),
    ViolationKind.BURN_OUT: frozenset({"temporal", "params"}),
}


def changed_fields(before: ControlBundle, after: ControlBundle) -> set[str]:
    """Field names whose canonical JSON form differs between two bundles."""
    changed = set()
    for name in _CONTROL_FIELDS:
        if to_jsonable(getattr(before, name)) != to_jsonable(getattr(after, name)):
            changed.add(name)
    return changed


def _coerce_kind(kind) -> ViolationKind:
    try:
        return ViolationKind(kind)
    except ValueError as exc:
        raise UnknownViolationKind(f"no revision policy for {kind!r}") from exc


def allowed_fields_for(kinds) -> set[str]:
    allowed = {"attempt"}
    for kind in kinds:
        kind = _coerce_kind(kind)
        if kind not in ALLOWED_REVISION_FIELDS:
            raise UnknownViolationKind(f"no revision policy for {kind!r}")
        allowed |= ALLOWED_REVISION_FIELDS[kind]
    return allowed


_PRODUCTION_KINDS = frozenset({
    ViolationKind.STICKER_EFFECT,
    ViolationKind.SPATIAL_CONFLICT,
    ViolationKind.LAYOUT_VIOLATION,
})
_IDENTITY_KINDS = frozenset({
    ViolationKind.IDENTITY_MISMATCH,
    ViolationKind.EMOTION_MISMATCH,
})
_TEMPORAL_KINDS = frozenset({
    ViolationKind.TEMPORAL_LEAKAGE,
    ViolationKind.BOUNDARY_VIOLATION,
    ViolationKind.FRAMING_VIOLATION,
    ViolationKind.BURN_OUT,
})


def _strengthen_identity(control: ControlBundle,
                         violations: list[ViolationSignal]) -> ControlBundle:
    revised = copy.deepcopy(control)
    for violation in violations:
        who = violation.locus.character_id
        if violation.kind is ViolationKind.EMOTION_MISMATCH:
            phrase = "expressive delivery matching the scripted emotion"
        elif who:
            phrase = f"exact likeness of {who}, consistent face and attire"
        else:
            phrase = "consistent character likeness"
        if phrase not in revised.positive_prompts:
            revised.positive_prompts.append(phrase)
    revised.params.seed = derive_seed(
        "identity-reseed", control.params.seed, control.segment_index)
    return revised


def dispatch_revision(control: ControlBundle,
                      violations: list[ViolationSignal]) -> ControlBundle:
    """Route violations to the revision strategy their kind demands."""
    if not violations:
        raise ValueError("refusing to revise without violations")
    kinds = {_coerce_kind(v.kind) for v in violations}
    unknown = kinds - set(ALLOWED_REVISION_FIELDS)
    if unknown:
        raise UnknownViolationKind(f"no revision policy for {sorted(k.value for k in unknown)}")

    revised = control
    prod = [v for v in violations if ViolationKind(v.kind) in _PRODUCTION_KINDS]
    if prod:
        revised = production.revise_production(revised, prod)
    ident = [v for v in violations if ViolationKind(v.kind) in _IDENTITY_KINDS]
    if ident:
        revised = _strengthen_identity(revised, ident)
    temporal = [v for v in violations if ViolationKind(v.kind) in _TEMPORAL_KINDS]
    if temporal:
        base = revised if revised is not control else copy.deepcopy(control)
        plans, action = postproduction.revise_temporal(base.temporal, temporal)
        base.temporal = plans
        base.params.extra["temporal_action"] = action
        revised = base
    return revised


def run_segment_loop(hooks: PhaseHooks, config: LoopConfig, *, phase: Phase,
                     segment_index: int) -> tuple[AttemptRecord, LoopTrace]:
    """Drive one (segment, phase) pair to acceptance or budget exhaustion."""
    budget = max(1, config.iteration_budget)
    threshold = config.threshold_for(phase)
    trace = LoopTrace(phase=phase.value, segment_index=segment_index)
    control = hooks.plan(0)

    for attempt in range(budget):
        control.attempt = attempt
        record = AttemptRecord(attempt=attempt, control=copy.deepcopy(control))
        trace.records.append(record)
        try:
            record.artifact = hooks.execute(control)
        except BackendUnavailable as exc:
            raise BackendUnavailable(
                f"segment {segment_index} {phase.value} attempt {attempt}: {exc}"
            ) from exc
        try:
            violations, score = hooks.verify(control, record.artifact)
        except JudgeOutputUnparseable as exc:
            # scoreless attempt; replan from scratch rather than revise blind
            record.error = str(exc)
            log.warning("segment %d %s attempt %d: unusable critique (%s)",
                        segment_index, phase.value, attempt, exc)
            if attempt + 1 >= budget:
                break
            control = hooks.plan(attempt + 1)
            continue
        record.violations = list(violations)
        record.score = float(score)

        severe = any(v.severity is Severity.SEVERE for v in record.violations)
        if not severe and record.score >= threshold:
            trace.status = "accepted"
            trace.accepted_attempt = attempt
            return record, trace
        if attempt + 1 >= budget:
            break

        if not record.violations:
            # below threshold but nothing actionable: spend budget unchanged
            revised = copy.deepcopy(control)
        elif hooks.revise is not None:
            revised = hooks.revise(control, record.violations)
        else:
            revised = dispatch_revision(control, record.violations)
        if config.validation and record.violations:
            changed = changed_fields(control, revised)
            allowed = allowed_fields_for(v.kind for v in record.violations)
            if not changed <= allowed:
                raise ValueError(
                    f"revision touched {sorted(changed - allowed)} but the "
                    f"violations only permit {sorted(allowed)}")
        control = revised

    scored = [r for r in trace.records if r.score is not None]
    if not scored:
        raise NoScorableAttempt(
            f"segment {segment_index} {phase.value}: no attempt produced a score")
    best = scored[0]
    for record in scored[1:]:
        if record.score > best.score:
            best = record
    trace.status = "budget_exhausted_best_of"
    trace.accepted_attempt = best.attempt
    return best, trace
